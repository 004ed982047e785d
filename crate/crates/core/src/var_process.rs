//! Vector autoregressive process over normalized 4-dimensional feature
//! vectors: A·x_n = Σᵢ Bᵢ·x_{n−i} + C·ε_n.
//!
//! A is constrained to unit lower triangular so contemporaneous influence
//! follows within-cycle occurrence order and the system solves by forward
//! substitution; C is lower triangular (diagonal as fitted, since
//! contemporaneous correlation is routed through A).

use crate::linalg::spectral_radius;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type Mat4 = [[f64; 4]; 4];

pub const IDENTITY4: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Fitted process weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarParams {
    /// Lag order.
    pub p: usize,
    /// Unit-lower-triangular contemporaneous matrix.
    pub contemporaneous: Mat4,
    /// Lag weight matrices B_1..B_p.
    pub lags: Vec<Mat4>,
    /// Lower-triangular noise loading.
    pub noise: Mat4,
}

#[derive(Debug, thiserror::Error)]
pub enum VarError {
    #[error("unstable process: companion spectral radius {0:.6}")]
    UnstableProcess(f64),
    #[error("device {device} contributes {cycles} cycles, need at least p+1 = {need}")]
    TooFewCycles {
        device: usize,
        cycles: usize,
        need: usize,
    },
    #[error("singular regression system for feature {0}")]
    SingularRegression(usize),
}

impl VarParams {
    /// Spectral radius of the reduced-form companion matrix; < 1 means the
    /// process is wide-sense stationary.
    pub fn companion_spectral_radius(&self) -> f64 {
        let p = self.p;
        let n = 4 * p;
        // Reduced form Φ_i = A⁻¹ B_i by forward substitution per column.
        let mut comp = vec![0.0; n * n];
        for (i, b) in self.lags.iter().enumerate() {
            let phi = self.solve_contemporaneous_mat(b);
            for r in 0..4 {
                for c in 0..4 {
                    comp[r * n + i * 4 + c] = phi[r][c];
                }
            }
        }
        for r in 4..n {
            comp[r * n + (r - 4)] = 1.0;
        }
        spectral_radius(&comp, n)
    }

    fn solve_contemporaneous_mat(&self, b: &Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for c in 0..4 {
            let col = self.solve_contemporaneous([b[0][c], b[1][c], b[2][c], b[3][c]]);
            for r in 0..4 {
                out[r][c] = col[r];
            }
        }
        out
    }

    /// Solve A·x = rhs by forward substitution (A unit lower triangular).
    #[inline]
    fn solve_contemporaneous(&self, rhs: [f64; 4]) -> [f64; 4] {
        let a = &self.contemporaneous;
        let mut x = [0.0; 4];
        for i in 0..4 {
            let mut s = rhs[i];
            for j in 0..i {
                s -= a[i][j] * x[j];
            }
            x[i] = s;
        }
        x
    }
}

/// Rolling history of the last p realized vectors plus the cycle counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarState {
    /// Ring buffer, length exactly p; `head` points at the most recent entry.
    buf: Vec<[f64; 4]>,
    head: usize,
    pub cycle: u64,
}

impl VarState {
    /// Zeroed history for a lag-p process.
    pub fn zeroed(p: usize) -> Self {
        Self {
            buf: vec![[0.0; 4]; p.max(1)],
            head: 0,
            cycle: 0,
        }
    }

    #[inline]
    pub fn lag(&self, i: usize) -> [f64; 4] {
        // lag(1) = most recent.
        debug_assert!(i >= 1 && i <= self.buf.len());
        let n = self.buf.len();
        self.buf[(self.head + n - (i - 1)) % n]
    }

    #[inline]
    fn push(&mut self, x: [f64; 4]) {
        self.head = (self.head + 1) % self.buf.len();
        self.buf[self.head] = x;
        self.cycle += 1;
    }
}

/// Advance the process one step: x = A⁻¹(Σ Bᵢ·lag(i) + C·ε). No allocation.
pub fn var_step(state: &mut VarState, params: &VarParams, eps: [f64; 4]) -> [f64; 4] {
    let mut rhs = [0.0; 4];
    for (i, b) in params.lags.iter().enumerate() {
        let xl = state.lag(i + 1);
        for r in 0..4 {
            let br = &b[r];
            rhs[r] += br[0] * xl[0] + br[1] * xl[1] + br[2] * xl[2] + br[3] * xl[3];
        }
    }
    let c = &params.noise;
    for r in 0..4 {
        for j in 0..=r {
            rhs[r] += c[r][j] * eps[j];
        }
    }
    let x = params.solve_contemporaneous(rhs);
    state.push(x);
    x
}

/// Draw a 4-vector of independent standard normals.
#[inline]
pub fn draw_eps<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    std::array::from_fn(|_| StandardNormal.sample(rng))
}

/// Start from zero history and advance `steps` times, discarding outputs;
/// the returned state is approximately a stationary draw.
pub fn burn_in<R: Rng + ?Sized>(params: &VarParams, rng: &mut R, steps: usize) -> VarState {
    let mut state = VarState::zeroed(params.p);
    for _ in 0..steps {
        var_step(&mut state, params, draw_eps(rng));
    }
    state.cycle = 0;
    state
}

pub const DEFAULT_BURN_IN: usize = 100;

/// Fit the process by per-equation ordinary least squares.
///
/// For each feature j (in occurrence order) the regressors are the
/// contemporaneous features earlier in the cycle (x_1..x_{j-1}) plus all p
/// lagged vectors; device boundaries are respected, so no lag window crosses
/// devices. Negated contemporaneous coefficients fill row j of A below the
/// diagonal, lag coefficients fill the B_i, and C becomes the diagonal of
/// residual standard deviations.
pub fn fit_var(device_series: &[Vec<[f64; 4]>], p: usize) -> Result<VarParams, VarError> {
    assert!(p >= 1);
    for (m, s) in device_series.iter().enumerate() {
        if s.len() < p + 1 {
            return Err(VarError::TooFewCycles {
                device: m,
                cycles: s.len(),
                need: p + 1,
            });
        }
    }

    let mut contemporaneous = IDENTITY4;
    let mut lags = vec![[[0.0; 4]; 4]; p];
    let mut noise = [[0.0; 4]; 4];

    for j in 0..4 {
        let k = j + 4 * p; // regressor count for equation j
        let mut gram = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        let mut syy = 0.0;
        let mut count = 0usize;
        let mut reg = vec![0.0; k];
        for series in device_series {
            for n in p..series.len() {
                let y = series[n][j];
                for c in 0..j {
                    reg[c] = series[n][c];
                }
                for lag in 0..p {
                    let xl = &series[n - 1 - lag];
                    for c in 0..4 {
                        reg[j + lag * 4 + c] = xl[c];
                    }
                }
                for a in 0..k {
                    rhs[a] += reg[a] * y;
                    for b in 0..=a {
                        gram[a * k + b] += reg[a] * reg[b];
                    }
                }
                syy += y * y;
                count += 1;
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                gram[a * k + b] = gram[b * k + a];
            }
        }
        let mut beta = rhs.clone();
        let mut gram_f = gram.clone();
        if crate::linalg::solve_spd(&mut gram_f, k, &mut beta).is_none() {
            return Err(VarError::SingularRegression(j));
        }
        // Residual variance via syy − βᵀX'y (numerically fine at these
        // scales since the data is standardized).
        let explained: f64 = beta.iter().zip(&rhs).map(|(b, r)| b * r).sum();
        let dof = count.saturating_sub(k).max(1);
        let var_res = ((syy - explained) / dof as f64).max(0.0);
        for c in 0..j {
            contemporaneous[j][c] = -beta[c];
        }
        for lag in 0..p {
            for c in 0..4 {
                lags[lag][j][c] = beta[j + lag * 4 + c];
            }
        }
        noise[j][j] = var_res.sqrt();
    }

    let params = VarParams {
        p,
        contemporaneous,
        lags,
        noise,
    };
    let radius = params.companion_spectral_radius();
    if radius >= 1.0 {
        return Err(VarError::UnstableProcess(radius));
    }
    Ok(params)
}

/// Simulate `cycles` steps after burn-in; used by tests and benchmarks.
pub fn simulate<R: Rng + ?Sized>(
    params: &VarParams,
    cycles: usize,
    rng: &mut R,
) -> Vec<[f64; 4]> {
    let mut state = burn_in(params, rng, DEFAULT_BURN_IN);
    (0..cycles)
        .map(|_| var_step(&mut state, params, draw_eps(rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn diag(d: [f64; 4]) -> Mat4 {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = d[i];
        }
        m
    }

    #[test]
    fn identity_process_passes_noise_through() {
        let params = VarParams {
            p: 1,
            contemporaneous: IDENTITY4,
            lags: vec![[[0.0; 4]; 4]],
            noise: IDENTITY4,
        };
        let mut state = VarState::zeroed(1);
        let x = var_step(&mut state, &params, [1.0, -1.0, 0.0, 2.0]);
        assert_eq!(x, [1.0, -1.0, 0.0, 2.0]);
    }

    #[test]
    fn forward_substitution_by_hand() {
        // A[2,1] = -0.5 (1-indexed): x2 = 0.5 * x1.
        let mut a = IDENTITY4;
        a[1][0] = -0.5;
        let params = VarParams {
            p: 1,
            contemporaneous: a,
            lags: vec![[[0.0; 4]; 4]],
            noise: IDENTITY4,
        };
        let mut state = VarState::zeroed(1);
        let x = var_step(&mut state, &params, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(x, [1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn fit_recovers_diagonal_ar1() {
        let truth = VarParams {
            p: 1,
            contemporaneous: IDENTITY4,
            lags: vec![diag([0.5, 0.5, 0.5, 0.5])],
            noise: IDENTITY4,
        };
        let mut rng = SmallRng::seed_from_u64(1234);
        let series = simulate(&truth, 100_000, &mut rng);
        let fitted = fit_var(&[series], 1).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 0.5 } else { 0.0 };
                let got = fitted.lags[0][r][c];
                assert!(
                    (got - want).abs() < 0.02,
                    "B1[{r}][{c}] = {got}, want {want}"
                );
                let a_want = if r == c { 1.0 } else { 0.0 };
                assert!(
                    (fitted.contemporaneous[r][c] - a_want).abs() < 0.02,
                    "A[{r}][{c}] = {}",
                    fitted.contemporaneous[r][c]
                );
            }
        }
    }

    #[test]
    fn white_noise_fits_to_zero_weights() {
        let truth = VarParams {
            p: 2,
            contemporaneous: IDENTITY4,
            lags: vec![[[0.0; 4]; 4]; 2],
            noise: IDENTITY4,
        };
        let mut rng = SmallRng::seed_from_u64(99);
        let series = simulate(&truth, 50_000, &mut rng);
        let n = series.len() as f64;
        let fitted = fit_var(&[series], 2).unwrap();
        let bound = 3.0 / n.sqrt() * 3.0; // loose 3-sigma-ish bound
        for b in &fitted.lags {
            for r in 0..4 {
                for c in 0..4 {
                    assert!(b[r][c].abs() < bound, "B[{r}][{c}] = {}", b[r][c]);
                }
            }
        }
        for r in 0..4 {
            for c in 0..r {
                assert!(fitted.contemporaneous[r][c].abs() < bound);
            }
        }
    }

    #[test]
    fn burn_in_is_deterministic_under_seed() {
        let params = VarParams {
            p: 3,
            contemporaneous: IDENTITY4,
            lags: vec![diag([0.3; 4]), diag([0.1; 4]), [[0.0; 4]; 4]],
            noise: diag([0.9; 4]),
        };
        let a = burn_in(&params, &mut SmallRng::seed_from_u64(5), DEFAULT_BURN_IN);
        let b = burn_in(&params, &mut SmallRng::seed_from_u64(5), DEFAULT_BURN_IN);
        assert_eq!(a, b);
    }

    #[test]
    fn burn_in_reaches_stationary_moments() {
        // B = 0: stationary law is N(0, CCᵀ); check the mean of many burn-in
        // endpoints.
        let params = VarParams {
            p: 1,
            contemporaneous: IDENTITY4,
            lags: vec![[[0.0; 4]; 4]],
            noise: IDENTITY4,
        };
        let mut rng = SmallRng::seed_from_u64(7);
        let mut mean = [0.0f64; 4];
        let reps = 10_000;
        for _ in 0..reps {
            let s = burn_in(&params, &mut rng, DEFAULT_BURN_IN);
            let x = s.lag(1);
            for k in 0..4 {
                mean[k] += x[k];
            }
        }
        for k in 0..4 {
            assert!((mean[k] / reps as f64).abs() < 0.05);
        }
    }

    #[test]
    fn ar1_autocorrelation_after_burn_in() {
        let params = VarParams {
            p: 1,
            contemporaneous: IDENTITY4,
            lags: vec![diag([0.9; 4])],
            noise: IDENTITY4,
        };
        let mut rng = SmallRng::seed_from_u64(21);
        let series = simulate(&params, 200_000, &mut rng);
        let x0: Vec<f64> = series.iter().map(|x| x[0]).collect();
        let acf = crate::stats::autocorr(&x0, 1);
        assert!((acf - 0.9).abs() < 0.02, "lag-1 acf = {acf}");
    }

    #[test]
    fn unstable_process_reported() {
        let truth = VarParams {
            p: 1,
            contemporaneous: IDENTITY4,
            lags: vec![diag([1.03; 4])],
            noise: IDENTITY4,
        };
        let radius = truth.companion_spectral_radius();
        assert!((radius - 1.03).abs() < 1e-4, "radius {radius}");
    }

    #[test]
    fn generated_covariance_matches_training_covariance() {
        // Fit on simulated data, re-simulate, compare long-run covariance.
        let mut a = IDENTITY4;
        a[1][0] = -0.3;
        a[3][2] = 0.2;
        let truth = VarParams {
            p: 2,
            contemporaneous: a,
            lags: vec![diag([0.35, 0.3, 0.3, 0.25]), diag([0.12, 0.1, 0.1, 0.08])],
            noise: diag([0.9; 4]),
        };
        let mut rng = SmallRng::seed_from_u64(2024);
        let train = simulate(&truth, 200_000, &mut rng);
        let fitted = fit_var(&[train.clone()], 2).unwrap();
        let gen = simulate(&fitted, 200_000, &mut rng);
        let cov = |s: &[[f64; 4]], r: usize, c: usize| {
            let xr: Vec<f64> = s.iter().map(|x| x[r]).collect();
            let xc: Vec<f64> = s.iter().map(|x| x[c]).collect();
            let mr = crate::stats::mean(&xr);
            let mc = crate::stats::mean(&xc);
            xr.iter()
                .zip(&xc)
                .map(|(a, b)| (a - mr) * (b - mc))
                .sum::<f64>()
                / (s.len() - 1) as f64
        };
        for r in 0..4 {
            for c in 0..4 {
                let ct = cov(&train, r, c);
                let cg = cov(&gen, r, c);
                assert!((ct - cg).abs() < 0.05, "cov[{r}][{c}]: {ct} vs {cg}");
            }
        }
    }

    #[test]
    fn round_trip_identifiability_var10() {
        // Known stable VAR(10) with structured A; refit recovers all
        // entries within 0.05 at 1e5 cycles.
        let mut a = IDENTITY4;
        a[1][0] = -0.3;
        a[2][0] = 0.1;
        a[2][1] = 0.2;
        a[3][2] = -0.25;
        let mut lags = vec![[[0.0; 4]; 4]; 10];
        lags[0] = diag([0.35, 0.3, 0.3, 0.25]);
        lags[0][0][2] = 0.05;
        lags[1] = diag([0.12, 0.1, 0.1, 0.08]);
        lags[4][1][1] = 0.05;
        let truth = VarParams {
            p: 10,
            contemporaneous: a,
            lags,
            noise: diag([0.9, 0.85, 0.9, 0.88]),
        };
        assert!(truth.companion_spectral_radius() < 0.95);
        let mut rng = SmallRng::seed_from_u64(77);
        let series = simulate(&truth, 100_000, &mut rng);
        let fitted = fit_var(&[series], 10).unwrap();
        let mut max_err = 0.0f64;
        for r in 0..4 {
            for c in 0..4 {
                max_err =
                    max_err.max((fitted.contemporaneous[r][c] - truth.contemporaneous[r][c]).abs());
                max_err = max_err.max((fitted.noise[r][c] - truth.noise[r][c]).abs());
                for l in 0..10 {
                    max_err = max_err.max((fitted.lags[l][r][c] - truth.lags[l][r][c]).abs());
                }
            }
        }
        assert!(max_err < 0.05, "max entry error {max_err}");
    }
}
