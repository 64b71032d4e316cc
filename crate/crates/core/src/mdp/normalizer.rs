//! Feature normalization for the numeric observation block.
//!
//! Count-like features go through log(1+x); the whole block is then
//! standardized with statistics fitted once on the first collected buffer
//! and frozen, keeping the target networks' inputs stationary. Until the
//! fit happens (the very first generation pass) an identity-scale
//! normalizer applies only the log transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::types::{NominalState, Observation, NOMINAL_DIM, NUMERIC_DIM};

const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    log_mask: Vec<bool>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    fitted: bool,
}

impl Normalizer {
    /// Log transform only, unit scale. Stands in before the first fit.
    pub fn identity() -> Self {
        Normalizer {
            log_mask: Self::default_mask(),
            mu: vec![0.0; NUMERIC_DIM],
            sigma: vec![1.0; NUMERIC_DIM],
            fitted: false,
        }
    }

    fn default_mask() -> Vec<bool> {
        let mut mask = vec![false; NUMERIC_DIM];
        mask[..NOMINAL_DIM].copy_from_slice(&NominalState::count_feature_mask());
        mask
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Fit mean and standard deviation on raw numeric rows, after the log
    /// transform. Population statistics; sigma floored at 1e-8.
    pub fn fit(rows: &[[f64; NUMERIC_DIM]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::usage("normalizer fit on zero rows"));
        }
        let mask = Self::default_mask();
        let n = rows.len() as f64;
        let mut mu = vec![0.0; NUMERIC_DIM];
        let mut sigma = vec![0.0; NUMERIC_DIM];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                mu[j] += logged(v, mask[j]);
            }
        }
        for m in mu.iter_mut() {
            *m /= n;
        }
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                let d = logged(v, mask[j]) - mu[j];
                sigma[j] += d * d;
            }
        }
        for s in sigma.iter_mut() {
            *s = (*s / n).sqrt().max(SIGMA_FLOOR);
        }
        Ok(Normalizer {
            log_mask: mask,
            mu,
            sigma,
            fitted: true,
        })
    }

    pub fn normalize(&self, raw: &[f64; NUMERIC_DIM]) -> [f64; NUMERIC_DIM] {
        let mut out = [0.0; NUMERIC_DIM];
        for j in 0..NUMERIC_DIM {
            out[j] = (logged(raw[j], self.log_mask[j]) - self.mu[j]) / self.sigma[j];
        }
        out
    }

    pub fn denormalize(&self, norm: &[f64; NUMERIC_DIM]) -> [f64; NUMERIC_DIM] {
        let mut out = [0.0; NUMERIC_DIM];
        for j in 0..NUMERIC_DIM {
            let v = norm[j] * self.sigma[j] + self.mu[j];
            out[j] = if self.log_mask[j] { v.exp_m1() } else { v };
        }
        out
    }

    /// Flat export for the checkpoint container: mu then sigma then the
    /// mask (0/1) then the fitted flag.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * NUMERIC_DIM + 1);
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.sigma);
        out.extend(self.log_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        out.push(if self.fitted { 1.0 } else { 0.0 });
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 3 * NUMERIC_DIM + 1 {
            return Err(Error::format(format!(
                "normalizer payload length {} != {}",
                flat.len(),
                3 * NUMERIC_DIM + 1
            )));
        }
        Ok(Normalizer {
            mu: flat[..NUMERIC_DIM].to_vec(),
            sigma: flat[NUMERIC_DIM..2 * NUMERIC_DIM].to_vec(),
            log_mask: flat[2 * NUMERIC_DIM..3 * NUMERIC_DIM]
                .iter()
                .map(|&v| v != 0.0)
                .collect(),
            fitted: flat[3 * NUMERIC_DIM] != 0.0,
        })
    }
}

#[inline]
fn logged(v: f64, masked: bool) -> f64 {
    if masked {
        v.ln_1p()
    } else {
        v
    }
}

/// Observation as the networks consume it: normalized numeric block,
/// raw content embedding, ids for the encoder tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledObs {
    pub numeric: [f64; NUMERIC_DIM],
    pub content: Vec<f64>,
    pub category_id: u32,
    pub brand_id: u32,
    pub shop_id: u32,
}

pub fn assemble_observation(obs: &Observation, norm: &Normalizer) -> Result<AssembledObs> {
    obs.s.validate()?;
    obs.x_t.validate()?;
    if let Some(i) = obs.x_i.content.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("content embedding index {i} not finite")));
    }
    Ok(AssembledObs {
        numeric: norm.normalize(&obs.numeric_raw()),
        content: obs.x_i.content.clone(),
        category_id: obs.x_i.category_id,
        brand_id: obs.x_i.brand_id,
        shop_id: obs.x_i.shop_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows() -> Vec<[f64; NUMERIC_DIM]> {
        (0..40)
            .map(|i| {
                let mut row = [0.0; NUMERIC_DIM];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = match j {
                        0..=7 => (i * (j + 1)) as f64,
                        _ => (i as f64) * 0.1 - (j as f64) * 0.3,
                    };
                }
                row
            })
            .collect()
    }

    #[test]
    fn all_zero_raw_maps_to_minus_mu_over_sigma() {
        let norm = Normalizer::fit(&rows()).unwrap();
        let z = norm.normalize(&[0.0; NUMERIC_DIM]);
        let flat = norm.to_flat();
        for j in 0..NUMERIC_DIM {
            let (mu, sigma) = (flat[j], flat[NUMERIC_DIM + j]);
            assert!((z[j] - (0.0 - mu) / sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn log1p_hits_one_at_e_minus_one() {
        let norm = Normalizer::identity();
        let mut raw = [0.0; NUMERIC_DIM];
        raw[4] = std::f64::consts::E - 1.0;
        let z = norm.normalize(&raw);
        assert!((z[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_gets_floored_sigma() {
        let rows: Vec<[f64; NUMERIC_DIM]> = vec![[3.0; NUMERIC_DIM]; 10];
        let norm = Normalizer::fit(&rows).unwrap();
        let z = norm.normalize(&[3.0; NUMERIC_DIM]);
        assert!(z.iter().all(|v| v.is_finite() && v.abs() < 1e-6));
    }

    #[test]
    fn flat_round_trip_preserves_normalizer() {
        let norm = Normalizer::fit(&rows()).unwrap();
        let back = Normalizer::from_flat(&norm.to_flat()).unwrap();
        assert_eq!(norm, back);
    }

    proptest! {
        #[test]
        fn round_trip_inverts(
            seedvals in proptest::collection::vec(0.0..1e5f64, NUMERIC_DIM),
            shift in -3.0..3.0f64,
        ) {
            let norm = Normalizer::fit(&rows()).unwrap();
            let mut raw = [0.0; NUMERIC_DIM];
            for j in 0..NUMERIC_DIM {
                raw[j] = if j < 8 { seedvals[j] } else { seedvals[j] * 1e-4 + shift };
            }
            let back = norm.denormalize(&norm.normalize(&raw));
            for j in 0..NUMERIC_DIM {
                let scale = raw[j].abs().max(1.0);
                prop_assert!((back[j] - raw[j]).abs() / scale < 1e-10);
            }
        }
    }
}
