//! Block diagonalization of two-way crossed covariance matrices.
//!
//! For an `N x N x T` array with covariance
//! `I_{N^2} (x) B + a (I_N (x) J_N) (x) J_T + b (J_N (x) I_N) (x) J_T`
//! the orthogonal decomposition of `R^{N x N}` into grand-mean, row, column
//! and interaction subspaces diagonalizes the level structure. Within each
//! subspace the covariance acts as a single `T x T` block:
//!
//! | subspace    | block              | multiplicity |
//! |-------------|--------------------|--------------|
//! | grand       | `B + N(a+b) J_T`   | 1            |
//! | row         | `B + N a J_T`      | N-1          |
//! | column      | `B + N b J_T`      | N-1          |
//! | interaction | `B`                | (N-1)^2      |
//!
//! so log-determinants and quadratic forms cost `O(N^2 T^2 + T^3)`.

use nalgebra::{DMatrix, DVector};

use super::covariance::GaussianKernel;
use super::Cholesky;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    Grand,
    Row,
    Column,
    Interaction,
}

impl Subspace {
    pub const ALL: [Subspace; 4] = [
        Subspace::Grand,
        Subspace::Row,
        Subspace::Column,
        Subspace::Interaction,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn multiplicity(self, levels: usize) -> usize {
        let m = levels - 1;
        match self {
            Subspace::Grand => 1,
            Subspace::Row | Subspace::Column => m,
            Subspace::Interaction => m * m,
        }
    }
}

/// Projected scatter matrices of a residual array, one per subspace.
///
/// `scatter[k] = sum_v v v^T` over an orthonormal basis of subspace `k`,
/// which reduces to sums of outer products of centred means.
#[derive(Debug, Clone)]
pub struct CrossedStats<T: Scalar> {
    pub levels: usize,
    pub times: usize,
    /// Mean over `(i, j)` for each time point.
    pub grand_mean: DVector<T>,
    scatter: [DMatrix<T>; 4],
}

impl<T: Scalar> CrossedStats<T> {
    /// `residual` is stacked with `t` fastest, then `j`, then `i`.
    pub fn from_residual(levels: usize, times: usize, residual: &[T]) -> Result<Self> {
        let n = levels * levels * times;
        if residual.len() != n {
            return Err(Error::Contract(format!(
                "residual has length {}, expected {}",
                residual.len(),
                n
            )));
        }
        let at = |i: usize, j: usize, t: usize| residual[(i * levels + j) * times + t];
        let nl = T::of(levels as f64);
        let mut row = DMatrix::<T>::zeros(levels, times);
        let mut col = DMatrix::<T>::zeros(levels, times);
        let mut grand = DVector::<T>::zeros(times);
        for i in 0..levels {
            for j in 0..levels {
                for t in 0..times {
                    let v = at(i, j, t);
                    row[(i, t)] += v;
                    col[(j, t)] += v;
                    grand[t] += v;
                }
            }
        }
        row /= nl;
        col /= nl;
        grand /= nl * nl;

        let mut s_grand = &grand * grand.transpose();
        s_grand *= nl * nl;

        let mut s_row = DMatrix::<T>::zeros(times, times);
        let mut s_col = DMatrix::<T>::zeros(times, times);
        let mut dev = DVector::<T>::zeros(times);
        for i in 0..levels {
            for t in 0..times {
                dev[t] = row[(i, t)] - grand[t];
            }
            s_row.ger(nl, &dev, &dev, T::one());
            for t in 0..times {
                dev[t] = col[(i, t)] - grand[t];
            }
            s_col.ger(nl, &dev, &dev, T::one());
        }

        let mut s_int = DMatrix::<T>::zeros(times, times);
        for i in 0..levels {
            for j in 0..levels {
                for t in 0..times {
                    dev[t] = at(i, j, t) - row[(i, t)] - col[(j, t)] + grand[t];
                }
                s_int.ger(T::one(), &dev, &dev, T::one());
            }
        }

        Ok(CrossedStats {
            levels,
            times,
            grand_mean: grand,
            scatter: [s_grand, s_row, s_col, s_int],
        })
    }

    pub fn scatter(&self, s: Subspace) -> &DMatrix<T> {
        &self.scatter[s.index()]
    }
}

/// Crossed covariance held as four factored `T x T` blocks.
#[derive(Debug, Clone)]
pub struct CrossedCovariance<T: Scalar> {
    levels: usize,
    blocks: [DMatrix<T>; 4],
    factors: [Cholesky<T>; 4],
}

impl<T: Scalar> CrossedCovariance<T> {
    /// `base` is the within-cell `T x T` covariance `B`; `row_var` is shared
    /// by cells with equal first index and `col_var` by equal second index.
    pub fn new(levels: usize, base: DMatrix<T>, row_var: T, col_var: T) -> Result<Self> {
        if levels == 0 {
            return Err(Error::config("N", "need at least one level"));
        }
        let times = base.nrows();
        let nl = T::of(levels as f64);
        let j = DMatrix::<T>::from_element(times, times, T::one());
        let blocks = [
            &base + &j * (nl * (row_var + col_var)),
            &base + &j * (nl * row_var),
            &base + &j * (nl * col_var),
            base,
        ];
        let factors = [
            Cholesky::new(&blocks[0])?,
            Cholesky::new(&blocks[1])?,
            Cholesky::new(&blocks[2])?,
            Cholesky::new(&blocks[3])?,
        ];
        Ok(CrossedCovariance {
            levels,
            blocks,
            factors,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn times(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn block(&self, s: Subspace) -> &DMatrix<T> {
        &self.blocks[s.index()]
    }

    pub fn factor(&self, s: Subspace) -> &Cholesky<T> {
        &self.factors[s.index()]
    }

    pub fn block_inverse(&self, s: Subspace) -> DMatrix<T> {
        self.factors[s.index()].inverse()
    }

    pub fn log_det(&self) -> T {
        Subspace::ALL
            .iter()
            .map(|&s| T::of(s.multiplicity(self.levels) as f64) * self.factor(s).log_det())
            .sum()
    }

    /// `r^T C^{-1} r` from projected scatter matrices.
    pub fn quad(&self, stats: &CrossedStats<T>) -> T {
        Subspace::ALL
            .iter()
            .filter(|&&s| s.multiplicity(self.levels) > 0)
            .map(|&s| trace_product(&self.block_inverse(s), stats.scatter(s)))
            .sum()
    }

    pub fn kernel(&self, residual: &[T]) -> Result<GaussianKernel<T>> {
        let stats = CrossedStats::from_residual(self.levels, self.times(), residual)?;
        Ok(GaussianKernel {
            quad: self.quad(&stats),
            logdet: self.log_det(),
        })
    }
}

/// `tr(A B)` for square matrices of equal size.
pub(crate) fn trace_product<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let n = a.nrows();
    let mut s = T::zero();
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}
