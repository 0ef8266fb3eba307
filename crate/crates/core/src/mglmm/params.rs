use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the logit-normal model: fixed effects for the continuous
/// and the binary response, and the variance shared by both crossed random
/// effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MglmmParams {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub thetad: f64,
}

impl MglmmParams {
    pub fn new(beta1: Vec<f64>, beta2: Vec<f64>, thetad: f64) -> Result<Self> {
        let p = MglmmParams { beta1, beta2, thetad };
        p.validate()?;
        Ok(p)
    }

    /// Splits `[beta1, beta2, thetad]`; the length must be odd.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.is_empty() || v.len() % 2 == 0 {
            return Err(Error::Contract(format!(
                "MGLMM parameter vector must have odd length 2p+1, got {}",
                v.len()
            )));
        }
        let p = (v.len() - 1) / 2;
        Self::new(v[..p].to_vec(), v[p..2 * p].to_vec(), v[2 * p])
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.beta1);
        v.extend_from_slice(&self.beta2);
        v.push(self.thetad);
        v
    }

    /// Number of predictors.
    pub fn p(&self) -> usize {
        self.beta1.len()
    }

    /// Parameter dimension `2p + 1`.
    pub fn dim(&self) -> usize {
        2 * self.p() + 1
    }

    pub fn names(p: usize) -> Vec<String> {
        (0..p)
            .map(|k| format!("beta1[{k}]"))
            .chain((0..p).map(|k| format!("beta2[{k}]")))
            .chain(std::iter::once("thetad".to_string()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta1.len() != self.beta2.len() {
            return Err(Error::Contract(format!(
                "beta1 has length {} but beta2 has length {}",
                self.beta1.len(),
                self.beta2.len()
            )));
        }
        for (k, &b) in self.beta1.iter().enumerate() {
            if !b.is_finite() {
                return Err(Error::domain(format!("beta1[{k}]"), b, "must be finite"));
            }
        }
        for (k, &b) in self.beta2.iter().enumerate() {
            if !b.is_finite() {
                return Err(Error::domain(format!("beta2[{k}]"), b, "must be finite"));
            }
        }
        if !(self.thetad > 0.0 && self.thetad.is_finite()) {
            return Err(Error::domain("thetad", self.thetad, "must be positive and finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_round_trip() {
        let p = MglmmParams::new(vec![1.0, -1.0], vec![0.5, 0.0], 0.5).unwrap();
        assert_eq!(p.dim(), 5);
        assert_eq!(MglmmParams::from_slice(&p.to_vec()).unwrap(), p);
        assert_eq!(MglmmParams::names(2)[4], "thetad");
    }

    #[test]
    fn rejects_boundary() {
        assert!(MglmmParams::new(vec![0.0], vec![0.0], 0.0).is_err());
        assert!(MglmmParams::new(vec![0.0], vec![0.0, 1.0], 1.0).is_err());
        assert!(MglmmParams::from_slice(&[1.0, 2.0]).is_err());
    }
}
