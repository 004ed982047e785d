//! Normalizing transformations: per-device affine standardization and the
//! element-wise polynomial quantile map onto standard normal marginals.
//!
//! The generative direction evaluates four quartic polynomials (fast path);
//! the training direction inverts them numerically, where iteration cost is
//! irrelevant.

use crate::features::FeatureVector;
use crate::linalg;
use crate::mathfn::norm_ppf;
use serde::{Deserialize, Serialize};

/// Per-device feature means and standard deviations removed by the
/// standardizing affine transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineStats {
    pub mu: [f64; 4],
    pub sigma: [f64; 4],
}

impl AffineStats {
    /// Standardize a raw feature vector.
    pub fn normalize(&self, f: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| (f[k] - self.mu[k]) / self.sigma[k])
    }

    /// Restore device offsets and scales.
    pub fn denormalize(&self, s: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| s[k] * self.sigma[k] + self.mu[k])
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("device feature {feature} has zero variance")]
    DegenerateDevice { feature: usize },
    #[error("need at least 2 cycles, got {0}")]
    TooFewCycles(usize),
    #[error("need at least {need} pooled samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("quantile polynomial for feature {feature} is not monotone after {attempts} ridge refits")]
    NonMonotoneFit { feature: usize, attempts: usize },
}

/// Compute the affine statistics of one device's cycle series and return the
/// standardized series (sample mean 0, sample std 1 per feature).
pub fn fit_affine(
    series: &[FeatureVector],
) -> Result<(AffineStats, Vec<[f64; 4]>), TransformError> {
    let n = series.len();
    if n < 2 {
        return Err(TransformError::TooFewCycles(n));
    }
    let mut mu = [0.0; 4];
    for f in series {
        let a = f.as_array();
        for k in 0..4 {
            mu[k] += a[k];
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut sigma = [0.0; 4];
    for f in series {
        let a = f.as_array();
        for k in 0..4 {
            let d = a[k] - mu[k];
            sigma[k] += d * d;
        }
    }
    for (k, s) in sigma.iter_mut().enumerate() {
        *s = (*s / (n - 1) as f64).sqrt();
        if *s == 0.0 {
            return Err(TransformError::DegenerateDevice { feature: k });
        }
    }
    let stats = AffineStats { mu, sigma };
    let standardized = series.iter().map(|f| stats.normalize(f.as_array())).collect();
    Ok((stats, standardized))
}

/// Element-wise quantile transform: four strictly increasing quartic
/// polynomials mapping normal-space z to standardized feature space, plus the
/// z domain bounds used for clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileMap {
    /// coeffs[k] = quartic coefficients for feature k, constant term first.
    pub coeffs: [[f64; 5]; 4],
    pub z_lo: [f64; 4],
    pub z_hi: [f64; 4],
}

pub const QUANTILE_DEGREE: usize = 4;

impl QuantileMap {
    /// The identity map (useful for degenerate models and tests).
    pub fn identity() -> Self {
        let z = norm_ppf(0.9995);
        Self {
            coeffs: [[0.0, 1.0, 0.0, 0.0, 0.0]; 4],
            z_lo: [-z; 4],
            z_hi: [z; 4],
        }
    }

    /// Generative direction: element-wise polynomial evaluation with the
    /// inputs clamped to the fitted domain.
    pub fn to_feature_space(&self, z: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| self.eval_one(k, z[k]))
    }

    #[inline]
    pub fn eval_one(&self, k: usize, z: f64) -> f64 {
        let zc = z.clamp(self.z_lo[k], self.z_hi[k]);
        self.coeffs[k]
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * zc + c)
    }

    fn deriv_one(&self, k: usize, z: f64) -> f64 {
        let c = &self.coeffs[k];
        ((4.0 * c[4] * z + 3.0 * c[3]) * z + 2.0 * c[2]) * z + c[1]
    }

    /// Training direction: solve γ_k(z) = value by safeguarded
    /// Newton/bisection on the fitted domain. Values outside the polynomial
    /// range map to the domain boundary.
    pub fn to_normal_space(&self, values: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| self.invert_one(k, values[k]))
    }

    pub fn invert_one(&self, k: usize, value: f64) -> f64 {
        let (mut lo, mut hi) = (self.z_lo[k], self.z_hi[k]);
        let (flo, fhi) = (self.eval_one(k, lo), self.eval_one(k, hi));
        if value <= flo {
            return lo;
        }
        if value >= fhi {
            return hi;
        }
        let scale = fhi.abs().max(flo.abs()).max(1e-300);
        let tol = 1e-12 * scale;
        let mut z = 0.5 * (lo + hi);
        for _ in 0..128 {
            let f = self.eval_one(k, z) - value;
            if f.abs() < tol {
                return z;
            }
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let d = self.deriv_one(k, z);
            let newton = z - f / d;
            z = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        z
    }

    /// Derivative positivity at 1e-3-spaced samples over the domain.
    pub fn is_monotone(&self, k: usize) -> bool {
        let mut z = self.z_lo[k];
        while z <= self.z_hi[k] {
            if self.deriv_one(k, z) <= 0.0 {
                return false;
            }
            z += 1e-3;
        }
        true
    }
}

/// Fit the quantile map on pooled standardized features: sort each feature's
/// samples, pair sample quantiles with standard-normal quantiles
/// Φ⁻¹((k−0.5)/K), and least-squares fit a quartic mapping z → value.
///
/// Monotonicity is enforced by refitting with a ×10-escalating ridge penalty
/// on the curvature coefficients, up to 5 times.
pub fn fit_quantile_map(pooled: &[[f64; 4]]) -> Result<QuantileMap, TransformError> {
    let count = pooled.len();
    if count < 1000 {
        return Err(TransformError::TooFewSamples {
            need: 1000,
            got: count,
        });
    }
    let z_lo = norm_ppf(0.0005);
    let z_hi = norm_ppf(0.9995);
    let mut map = QuantileMap {
        coeffs: [[0.0; 5]; 4],
        z_lo: [z_lo; 4],
        z_hi: [z_hi; 4],
    };
    for k in 0..4 {
        let mut vals: Vec<f64> = pooled.iter().map(|p| p[k]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Normal-equation accumulation for the quartic in z.
        let mut gram = [0.0f64; 25];
        let mut rhs = [0.0f64; 5];
        for (i, &v) in vals.iter().enumerate() {
            let z = norm_ppf((i as f64 + 0.5) / count as f64);
            let pw = [1.0, z, z * z, z * z * z, z * z * z * z];
            for a in 0..5 {
                rhs[a] += pw[a] * v;
                for b in 0..5 {
                    gram[a * 5 + b] += pw[a] * pw[b];
                }
            }
        }
        let base_ridge = 1e-7 * (gram[0] + gram[6] + gram[12] + gram[18] + gram[24]) / 5.0;
        let mut ridge = 0.0;
        let mut fitted = false;
        for _ in 0..6 {
            let mut g = gram;
            // Penalize only the curvature terms; shrinking toward a linear
            // quantile map keeps the fit invertible.
            for d in 2..5 {
                g[d * 5 + d] += ridge;
            }
            let mut c = rhs;
            if linalg::solve_spd(&mut g, 5, &mut c).is_none() {
                ridge = if ridge == 0.0 { base_ridge } else { ridge * 10.0 };
                continue;
            }
            map.coeffs[k] = c;
            if map.is_monotone(k) {
                fitted = true;
                break;
            }
            ridge = if ridge == 0.0 { base_ridge } else { ridge * 10.0 };
        }
        if !fitted {
            return Err(TransformError::NonMonotoneFit {
                feature: k,
                attempts: 5,
            });
        }
    }
    Ok(map)
}
