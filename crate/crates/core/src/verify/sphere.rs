//! Deterministic covers of the sphere `{theta : |theta - theta0| = eps}`.
//!
//! For `d = 2` the cover is a ring of equally spaced points. For `d >= 3`
//! Halton points are pushed through the normal quantile function and
//! normalized, which gives a low-discrepancy sequence on the sphere; the
//! grid is the shortest prefix within `delta` of every one of a fixed set of
//! random probes.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::stats::RateFit;
use crate::error::{Error, Result};
use crate::estimation::{coords, Coord};
use crate::model::ParamVector;
use crate::rng::{stream, tag};

pub const DEFAULT_PROBES: usize = 10_000;
const PROBE_SEED: u64 = 0x5EED_5;
const MAX_POINTS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub center: Vec<f64>,
    pub radius: f64,
    pub delta: f64,
    pub points: Vec<Vec<f64>>,
    /// Number of probes the cover was verified against.
    pub probes: usize,
    /// Largest probe-to-grid distance seen.
    pub max_probe_distance: f64,
}

impl SphereGrid {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Rejects radii that would let the closed ball touch the boundary of the
/// parameter set.
pub fn check_interior(theta0: &ParamVector, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config("epsilon", "must be positive"));
    }
    let kinds = coords(theta0.model(), theta0.dim())?;
    for ((c, v), name) in kinds.iter().zip(theta0.values()).zip(theta0.names()) {
        let ok = match c {
            Coord::Free => true,
            Coord::Log => v - epsilon > 0.0,
            Coord::Atanh => v.abs() + epsilon < 1.0,
        };
        if !ok {
            return Err(Error::Domain {
                param: name,
                value: v,
                reason: "ball of radius epsilon around theta0 leaves the parameter set",
            });
        }
    }
    Ok(())
}

pub fn sphere_grid(theta0: &ParamVector, epsilon: f64, delta: f64) -> Result<SphereGrid> {
    sphere_grid_with(theta0, epsilon, delta, DEFAULT_PROBES)
}

pub fn sphere_grid_with(theta0: &ParamVector, epsilon: f64, delta: f64, probes: usize) -> Result<SphereGrid> {
    check_interior(theta0, epsilon)?;
    if !(delta > 0.0) {
        return Err(Error::config("delta", "must be positive"));
    }
    let center = theta0.values();
    let d = center.len();
    let (unit, max_dist) = unit_cover(d, delta / epsilon, probes)?;
    let points = unit
        .into_iter()
        .map(|u| center.iter().zip(&u).map(|(c, x)| c + epsilon * x).collect())
        .collect();
    Ok(SphereGrid {
        center,
        radius: epsilon,
        delta,
        points,
        probes,
        max_probe_distance: max_dist * epsilon,
    })
}

/// Unit-sphere cover with mesh `rel` and the largest probe distance.
pub fn unit_cover(d: usize, rel: f64, probes: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    match d {
        0 => Err(Error::config("dimension", "must be positive")),
        1 => Ok((vec![vec![-1.0], vec![1.0]], 0.0)),
        2 => {
            // chord from any point to the nearest ring point is at most
            // 2 sin(pi / 2M)
            let m = if rel >= 2.0 {
                1
            } else {
                (std::f64::consts::PI / (2.0 * (rel / 2.0).asin())).ceil() as usize
            };
            let m = m.max(2);
            let pts: Vec<Vec<f64>> = (0..m)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / m as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect();
            let worst = probe_distances(&pts, &random_unit(2, probes));
            Ok((pts, worst))
        }
        _ => halton_cover(d, rel, probes),
    }
}

fn random_unit(d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(PROBE_SEED, &[tag::PROBES, d as u64]);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            normalize(v)
        })
        .collect()
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn probe_distances(pts: &[Vec<f64>], probes: &[Vec<f64>]) -> f64 {
    probes
        .iter()
        .map(|p| pts.iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// The `k`-th (one-based) Halton point mapped to the unit sphere.
pub fn halton_sphere_point(d: usize, k: u64) -> Vec<f64> {
    let normal = Normal::standard();
    normalize(
        PRIMES[..d]
            .iter()
            .map(|&b| normal.inverse_cdf(radical_inverse(k, b)))
            .collect(),
    )
}

fn halton_cover(d: usize, rel: f64, probes: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    if d > PRIMES.len() {
        return Err(Error::config("dimension", format!("sphere grids support d <= {}", PRIMES.len())));
    }
    let probe_pts = random_unit(d, probes);
    let r2 = rel * rel;
    let mut pts: Vec<Vec<f64>> = Vec::new();
    // best squared distance seen by each probe, and whether it is covered
    let mut best = vec![f64::INFINITY; probes];
    let mut chunk = 256;
    loop {
        let start = pts.len();
        let end = (start + chunk).min(MAX_POINTS);
        if start == end {
            return Err(Error::config(
                "delta",
                format!("cover needs more than {MAX_POINTS} points; increase delta"),
            ));
        }
        pts.extend((start..end).map(|k| halton_sphere_point(d, k as u64 + 1)));
        let new = &pts[start..end];
        best.par_iter_mut().zip(&probe_pts).for_each(|(b, p)| {
            if *b > r2 {
                for q in new {
                    let s = sq_dist(p, q);
                    if s < *b {
                        *b = s;
                        if s <= r2 {
                            break;
                        }
                    }
                }
            }
        });
        if best.iter().all(|&b| b <= r2) {
            break;
        }
        chunk *= 2;
    }
    // Trim to the shortest prefix that still covers every probe.
    let needed = probe_pts
        .par_iter()
        .map(|p| pts.iter().position(|q| sq_dist(p, q) <= r2).unwrap_or(pts.len() - 1) + 1)
        .max()
        .unwrap_or(1);
    pts.truncate(needed);
    let worst = probe_pts
        .par_iter()
        .map(|p| pts.iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max)
        .sqrt();
    Ok((pts, worst))
}

/// Fits `ln M` against `ln(1/delta)` over successive meshes; the slope
/// estimates the covering exponent `d - 1`.
pub fn covering_growth(d: usize, rel_deltas: &[f64], probes: usize) -> Result<RateFit> {
    let counts: Vec<f64> = rel_deltas
        .iter()
        .map(|&r| unit_cover(d, r, probes).map(|(p, _)| p.len() as f64))
        .collect::<Result<_>>()?;
    let inv: Vec<f64> = rel_deltas.iter().map(|r| 1.0 / r).collect();
    RateFit::log_log(&inv, &counts, &vec![0.0; counts.len()])
}

/// `count` points uniform in the closed ball of radius `epsilon` around
/// `center`.
pub fn ball_sample(center: &[f64], epsilon: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut rng = stream(seed, &[tag::BALL]);
    (0..count)
        .map(|_| {
            let dir = normalize((0..d).map(|_| rng.sample(StandardNormal)).collect());
            let r = epsilon * rng.random::<f64>().powf(1.0 / d as f64);
            center.iter().zip(&dir).map(|(c, u)| c + r * u).collect()
        })
        .collect()
}

/// Projects `v` radially onto the sphere of radius `epsilon` around
/// `center`.
pub fn project(center: &[f64], epsilon: f64, v: &[f64]) -> Vec<f64> {
    let n = sq_dist(center, v).sqrt();
    if n == 0.0 {
        return v.to_vec();
    }
    center.iter().zip(v).map(|(c, x)| c + epsilon * (x - c) / n).collect()
}
