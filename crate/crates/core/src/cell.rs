//! The generative virtual device: an independent VAR realization per cell,
//! device-specific de-normalization, and the quasi-static I(V) state machine.
//!
//! Each cell mixes two global limiting polynomials through a continuous state
//! r ∈ [0, 1] (r = 1 on the high-resistance curve). SET is an instantaneous
//! jump below the cycle's threshold; RESET above the onset voltage gradually
//! moves the state toward the next cycle's HRS along a power-law current
//! curve. Writes are amplitude-only events: the peak voltage seen during the
//! current RESET is tracked, so re-applying an equal or lower amplitude
//! changes nothing.

use crate::d2d_gmm::{sample_device, GmmParams};
use crate::features::{FeatureVector, IvShape};
use crate::transforms::QuantileMap;
use crate::var_process::{burn_in, draw_eps, var_step, VarParams, VarState, DEFAULT_BURN_IN};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Full trained artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub var: VarParams,
    pub quantile: QuantileMap,
    pub gmm: GmmParams,
    pub iv: IvShape,
    /// Minimum voltage of the training sweeps, volts.
    pub v_min: f64,
}

impl ModelParams {
    /// Verify the structural invariants of every component.
    pub fn check(&self) -> Result<(), String> {
        let iv = &self.iv;
        if iv.hrs_coeffs[0] != 0.0 || iv.lrs_coeffs[0] != 0.0 {
            return Err("limiting polynomials must have zero constant term".into());
        }
        let v0 = iv.eval_voltage;
        let (ih, il) = (iv.hrs_current(v0), iv.lrs_current(v0));
        if !(il > ih && ih > 0.0) {
            return Err(format!("need I_lo({v0}) > I_hi({v0}) > 0, got {il} vs {ih}"));
        }
        if iv.reset_curvature <= 1.0 {
            return Err(format!("reset curvature {} must exceed 1", iv.reset_curvature));
        }
        for k in 0..4 {
            if !self.quantile.is_monotone(k) {
                return Err(format!("quantile polynomial {k} is not monotone"));
            }
        }
        let wsum: f64 = self.gmm.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(format!("mixture weights sum to {wsum}"));
        }
        self.gmm.check_spd().map_err(|e| e.to_string())?;
        let radius = self.var.companion_spectral_radius();
        if radius >= 1.0 {
            return Err(format!("process not stationary: spectral radius {radius}"));
        }
        if !(self.v_min < 0.0 && iv.max_voltage > 0.0) {
            return Err("voltage bounds must straddle zero".into());
        }
        Ok(())
    }
}

/// Mixing state corresponding to a static resistance R at the evaluation
/// voltage: r = (I_lo(V₀) − V₀/R) / (I_lo(V₀) − I_hi(V₀)), clamped to [0, 1].
pub fn r_of_resistance(resistance: f64, iv: &IvShape) -> f64 {
    debug_assert!(resistance > 0.0);
    let v0 = iv.eval_voltage;
    let il = iv.lrs_current(v0);
    let ih = iv.hrs_current(v0);
    ((il - v0 / resistance) / (il - ih)).clamp(0.0, 1.0)
}

/// Gradual-RESET current at voltage `v`: a·(V_max − v)^η + c, with the
/// amplitude pinned to the LRS current at the onset and the offset pinned to
/// the next cycle's HRS current at V_max.
pub fn reset_current(v: f64, v_reset: f64, r_lrs: f64, r_hrs_next: f64, iv: &IvShape) -> f64 {
    debug_assert!(v >= v_reset && v <= iv.max_voltage);
    let vmax = iv.max_voltage;
    let eta = iv.reset_curvature;
    let i_on = mix_current(r_lrs, iv, v_reset);
    let i_end = mix_current(r_hrs_next, iv, vmax);
    let a = (i_on - i_end) / (vmax - v_reset).powf(eta);
    a * (vmax - v).powf(eta) + i_end
}

#[inline]
fn mix_current(r: f64, iv: &IvShape, v: f64) -> f64 {
    r * iv.hrs_current(v) + (1.0 - r) * iv.lrs_current(v)
}

/// Switching phase within the current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Pre-SET high resistance state.
    Hrs,
    /// Post-SET, pre-RESET low resistance state.
    Lrs,
    /// Gradual RESET in progress.
    Resetting,
}

/// One virtual device.
#[derive(Debug, Clone)]
pub struct CellState {
    var_state: VarState,
    /// Sampled device-specific feature means.
    pub mu_star: [f64; 4],
    /// Sampled device-specific feature standard deviations.
    pub sigma_star: [f64; 4],
    /// This cycle's de-normalized features.
    pub current: FeatureVector,
    /// The following cycle's features; the RESET endpoint needs the next
    /// HRS level before the cycle advances.
    pub next: FeatureVector,
    /// Mixing state in [0, 1].
    pub r: f64,
    pub phase: Phase,
    /// Maximum voltage seen during this cycle's RESET.
    pub v_peak: f64,
    rng: SmallRng,
}

impl CellState {
    /// Sample a new device: device statistics from the mixture, VAR burn-in,
    /// and the first cycle's features. The cell owns an RNG stream derived
    /// from `rng`, so construction is deterministic given the parent state.
    pub fn new<R: Rng>(model: &ModelParams, rng: &mut R) -> Self {
        let mut cell_rng = SmallRng::from_rng(rng);
        let stats = sample_device(&model.gmm, &mut cell_rng);
        Self::build(model, &stats, cell_rng)
    }

    /// Build a cell around externally chosen device statistics (stratified
    /// corpus generation, deterministic tests).
    pub fn with_device_stats<R: Rng>(
        model: &ModelParams,
        stats: &crate::d2d_gmm::DeviceStats,
        rng: &mut R,
    ) -> Self {
        let cell_rng = SmallRng::from_rng(rng);
        Self::build(model, stats, cell_rng)
    }

    fn build(model: &ModelParams, stats: &crate::d2d_gmm::DeviceStats, mut cell_rng: SmallRng) -> Self {
        let mu_star = stats.means();
        let sigma_star = stats.stds();
        let mut var_state = burn_in(&model.var, &mut cell_rng, DEFAULT_BURN_IN);
        let current = fresh_vector(
            &mut var_state,
            &mut cell_rng,
            model,
            &mu_star,
            &sigma_star,
        );
        let next = fresh_vector(
            &mut var_state,
            &mut cell_rng,
            model,
            &mu_star,
            &sigma_star,
        );
        let r = r_of_resistance(current.r_hrs, &model.iv);
        Self {
            var_state,
            mu_star,
            sigma_star,
            current,
            next,
            r,
            phase: Phase::Hrs,
            v_peak: 0.0,
            rng: cell_rng,
        }
    }

    /// Deterministic construction from a bare seed (index-addressable cell
    /// populations for benchmarks).
    pub fn from_seed(model: &ModelParams, seed: u64) -> Self {
        Self::new(model, &mut SmallRng::seed_from_u64(seed))
    }

    /// A fixed cell pinned at mixing state `r` whose thresholds are
    /// unreachable, so no voltage sequence mutates it. Used for ohmic
    /// baselines and solver oracles.
    pub fn pinned(r: f64) -> Self {
        let far = FeatureVector {
            r_hrs: 1e9,
            v_set: -1e9,
            r_lrs: 1.0,
            v_reset: 1e9,
        };
        Self {
            var_state: VarState::zeroed(1),
            mu_star: [0.0; 4],
            sigma_star: [0.0; 4],
            current: far,
            next: far,
            r: r.clamp(0.0, 1.0),
            phase: Phase::Lrs,
            v_peak: 0.0,
            rng: SmallRng::seed_from_u64(0),
        }
    }

    /// Advance to the next switching cycle: the pre-drawn vector becomes the
    /// current one, a fresh vector is drawn for the following cycle, the
    /// RESET peak tracker resets, and the phase returns to HRS with the
    /// mixing state untouched. Returns the new current-cycle features.
    pub fn draw_cycle(&mut self, model: &ModelParams) -> FeatureVector {
        self.current = self.next;
        self.next = fresh_vector(
            &mut self.var_state,
            &mut self.rng,
            model,
            &self.mu_star,
            &self.sigma_star,
        );
        self.v_peak = 0.0;
        self.phase = Phase::Hrs;
        self.current
    }

    /// Static current at voltage `v` with the present mixing state; no state
    /// change.
    #[inline]
    pub fn static_current(&self, iv: &IvShape, v: f64) -> f64 {
        mix_current(self.r, iv, v)
    }

    /// Small-signal conductance at voltage `v` (for Newton solvers).
    #[inline]
    pub fn conductance(&self, iv: &IvShape, v: f64) -> f64 {
        self.r * iv.hrs_conductance(v) + (1.0 - self.r) * iv.lrs_conductance(v)
    }

    /// Apply a quasi-static voltage, update the switching state, and return
    /// the resulting current.
    pub fn apply_voltage(&mut self, model: &ModelParams, v: f64) -> f64 {
        let iv = &model.iv;
        let v = v.clamp(model.v_min, iv.max_voltage);
        match self.phase {
            Phase::Hrs => {
                if v <= self.current.v_set {
                    self.r = r_of_resistance(self.current.r_lrs, iv);
                    self.phase = Phase::Lrs;
                }
            }
            Phase::Lrs | Phase::Resetting => {
                if self.phase == Phase::Resetting && v <= self.next.v_set {
                    // Driven below the new cycle's SET threshold: advance the
                    // cycle, then SET against the new thresholds.
                    self.draw_cycle(model);
                    if v <= self.current.v_set {
                        self.r = r_of_resistance(self.current.r_lrs, iv);
                        self.phase = Phase::Lrs;
                    }
                } else if v > self.current.v_reset && v > self.v_peak {
                    self.v_peak = v;
                    let r_lrs = r_of_resistance(self.current.r_lrs, iv);
                    let r_hrs_next = r_of_resistance(self.next.r_hrs, iv);
                    let i_target = reset_current(v, self.current.v_reset, r_lrs, r_hrs_next, iv);
                    let il = iv.lrs_current(v);
                    let ih = iv.hrs_current(v);
                    let denom = il - ih;
                    if denom.abs() > 0.0 {
                        let r_new = ((il - i_target) / denom).clamp(0.0, 1.0);
                        // Partial RESET never moves the state backwards.
                        self.r = self.r.max(r_new);
                    }
                    self.phase = Phase::Resetting;
                }
            }
        }
        self.static_current(iv, v)
    }
}

/// One VAR step pushed through the quantile map and the device scale, with
/// physical floors: resistances at 100 Ω, thresholds inside the sweep window.
fn fresh_vector(
    var_state: &mut VarState,
    rng: &mut SmallRng,
    model: &ModelParams,
    mu_star: &[f64; 4],
    sigma_star: &[f64; 4],
) -> FeatureVector {
    let z = var_step(var_state, &model.var, draw_eps(rng));
    let std = model.quantile.to_feature_space(z);
    let raw: [f64; 4] = std::array::from_fn(|k| std[k] * sigma_star[k] + mu_star[k]);
    let margin = 1e-3;
    FeatureVector {
        r_hrs: raw[0].max(100.0),
        v_set: raw[1].clamp(model.v_min + margin, -margin),
        r_lrs: raw[2].max(100.0),
        v_reset: raw[3].clamp(margin, model.iv.max_voltage - margin),
    }
}
