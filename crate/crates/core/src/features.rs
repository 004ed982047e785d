//! Per-cycle feature extraction and global I(V) shape estimation from raw
//! bipolar sweep data.
//!
//! A switching cycle contributes four features in the order they occur in the
//! measurement: HRS resistance, SET threshold voltage (negative polarity),
//! LRS resistance, and RESET onset voltage (positive polarity). The global
//! I(V) shape consists of two limiting polynomials bounding all device states
//! plus the curvature exponent of the gradual RESET transition.

use crate::linalg;
use crate::stats;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// One switching cycle's four features, in occurrence order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// High-resistance-state resistance, ohms.
    pub r_hrs: f64,
    /// SET threshold voltage, volts (negative polarity).
    pub v_set: f64,
    /// Low-resistance-state resistance, ohms.
    pub r_lrs: f64,
    /// RESET onset voltage, volts (positive polarity).
    pub v_reset: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.r_hrs, self.v_set, self.r_lrs, self.v_reset]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            r_hrs: a[0],
            v_set: a[1],
            r_lrs: a[2],
            v_reset: a[3],
        }
    }
}

/// Global quasi-static I(V) shape shared by all cells of a model.
///
/// `hrs_coeffs` / `lrs_coeffs` are dense polynomial coefficients (constant
/// term first) of the degree-5 / degree-6 limiting curves. Both constant
/// terms are exactly zero so that I(0) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvShape {
    pub hrs_coeffs: [f64; 6],
    pub lrs_coeffs: [f64; 7],
    /// Curvature exponent of the gradual RESET transition (> 1).
    pub reset_curvature: f64,
    /// Voltage at which static resistance is evaluated, volts.
    pub eval_voltage: f64,
    /// Maximum voltage of the training sweeps, volts.
    pub max_voltage: f64,
}

impl IvShape {
    /// Current of the high-resistance limiting curve at `v`.
    #[inline]
    pub fn hrs_current(&self, v: f64) -> f64 {
        horner(&self.hrs_coeffs, v)
    }

    /// Current of the low-resistance limiting curve at `v`.
    #[inline]
    pub fn lrs_current(&self, v: f64) -> f64 {
        horner(&self.lrs_coeffs, v)
    }

    /// Voltage derivative of the high-resistance curve.
    #[inline]
    pub fn hrs_conductance(&self, v: f64) -> f64 {
        horner_derivative(&self.hrs_coeffs, v)
    }

    /// Voltage derivative of the low-resistance curve.
    #[inline]
    pub fn lrs_conductance(&self, v: f64) -> f64 {
        horner_derivative(&self.lrs_coeffs, v)
    }
}

#[inline]
pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[inline]
pub(crate) fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..coeffs.len()).rev() {
        acc = acc * x + coeffs[k] * k as f64;
    }
    acc
}

/// Raw training data: per (device, cycle) an ordered (V, I) trace.
///
/// Samples are stored as `f32` pairs; measurement data at desk scale runs to
/// hundreds of millions of samples and never needs more precision than the
/// instrument noise floor.
#[derive(Debug, Clone)]
pub struct SweepDataset {
    /// traces[device][cycle] = ordered Vec of [voltage, current] samples.
    pub traces: Vec<Vec<Vec<[f32; 2]>>>,
    pub v_min: f64,
    pub v_max: f64,
}

impl SweepDataset {
    pub fn devices(&self) -> usize {
        self.traces.len()
    }

    pub fn cycles(&self) -> usize {
        self.traces.first().map_or(0, |d| d.len())
    }

    /// Write the dataset as CSV with header `device,cycle,voltage,current`,
    /// rows grouped by device, then cycle, then time order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "device,cycle,voltage,current")?;
        for (m, dev) in self.traces.iter().enumerate() {
            for (n, trace) in dev.iter().enumerate() {
                for s in trace {
                    writeln!(w, "{},{},{:e},{:e}", m, n, s[0], s[1])?;
                }
            }
        }
        Ok(())
    }

    /// Parse the CSV format written by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, v_min: f64, v_max: f64) -> Result<Self, FeatureError> {
        let mut traces: Vec<Vec<Vec<[f32; 2]>>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| FeatureError::Csv {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
            if lineno == 0 {
                if line.trim() != "device,cycle,voltage,current" {
                    return Err(FeatureError::Csv {
                        line: 1,
                        reason: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = |name: &str| {
                parts.next().ok_or(FeatureError::Csv {
                    line: lineno + 1,
                    reason: format!("missing field `{name}`"),
                })
            };
            let dev: usize = parse(field("device")?, lineno + 1)?;
            let cyc: usize = parse(field("cycle")?, lineno + 1)?;
            let v: f64 = parse(field("voltage")?, lineno + 1)?;
            let i: f64 = parse(field("current")?, lineno + 1)?;
            while traces.len() <= dev {
                traces.push(Vec::new());
            }
            while traces[dev].len() <= cyc {
                traces[dev].push(Vec::new());
            }
            traces[dev][cyc].push([v as f32, i as f32]);
        }
        Ok(Self {
            traces,
            v_min,
            v_max,
        })
    }
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, FeatureError> {
    s.trim().parse().map_err(|_| FeatureError::Csv {
        line,
        reason: format!("cannot parse `{s}`"),
    })
}

/// Extracted feature series for a whole dataset, indexed (device, cycle),
/// with a validity mask marking imputed cycles.
#[derive(Debug, Clone)]
pub struct FeatureSeries {
    pub devices: usize,
    pub cycles: usize,
    data: Vec<FeatureVector>,
    valid: Vec<bool>,
}

impl FeatureSeries {
    pub fn new(devices: usize, cycles: usize, data: Vec<FeatureVector>, valid: Vec<bool>) -> Self {
        assert_eq!(data.len(), devices * cycles);
        assert_eq!(valid.len(), devices * cycles);
        Self {
            devices,
            cycles,
            data,
            valid,
        }
    }

    #[inline]
    pub fn get(&self, device: usize, cycle: usize) -> FeatureVector {
        self.data[device * self.cycles + cycle]
    }

    #[inline]
    pub fn is_valid(&self, device: usize, cycle: usize) -> bool {
        self.valid[device * self.cycles + cycle]
    }

    /// All cycles of one device, in cycle order.
    pub fn device_series(&self, device: usize) -> &[FeatureVector] {
        &self.data[device * self.cycles..(device + 1) * self.cycles]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len().max(1) as f64
    }

    /// Pooled values of feature `k` (0..4) over all devices and cycles.
    pub fn pooled_feature(&self, k: usize) -> Vec<f64> {
        self.data.iter().map(|f| f.as_array()[k]).collect()
    }
}

/// Detection thresholds for per-cycle feature extraction. The cited feature
/// extraction procedure is not published, so these heuristics are exposed as
/// tunables.
#[derive(Debug, Clone)]
pub struct ShapeHints {
    /// SET detection: the largest single-step |ΔI| on the negative branch
    /// must exceed `jump_factor` × the branch's median |ΔI|.
    pub jump_factor: f64,
    /// RESET detection: onset is flagged when measured current drops below
    /// `theta` × the LRS linear extrapolation.
    pub theta: f64,
    /// Resistance fits use samples with |V| ≤ `v0`.
    pub v0: f64,
}

impl Default for ShapeHints {
    fn default() -> Self {
        Self {
            jump_factor: 5.0,
            theta: 0.9,
            v0: 0.2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("no SET transition detected on the negative branch")]
    NoSetDetected,
    #[error("no RESET onset detected on the positive branch")]
    NoResetDetected,
    #[error("trace too short: {0} samples")]
    TraceTooShort(usize),
    #[error("device {device}: only {valid} of {cycles} cycles valid")]
    TooFewValidCycles {
        device: usize,
        valid: usize,
        cycles: usize,
    },
    #[error("ill-conditioned polynomial fit (condition number {0:.3e})")]
    IllConditionedFit(f64),
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Extract the four features from one full bipolar cycle trace.
///
/// The trace must be ordered in time and start in the HRS (descending from
/// the positive sweep peak), so features occur in the order R_HRS, V_SET,
/// R_LRS, V_RESET.
pub fn extract_cycle_features(
    trace: &[[f32; 2]],
    hints: &ShapeHints,
) -> Result<FeatureVector, FeatureError> {
    if trace.len() < 16 {
        return Err(FeatureError::TraceTooShort(trace.len()));
    }
    // Split at the voltage minimum: the descending branch holds the HRS fit
    // region and the SET jump, the ascending branch holds the LRS fit region
    // and the RESET onset.
    let turn = trace
        .iter()
        .enumerate()
        .min_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let falling = &trace[..=turn];
    let rising = &trace[turn..];

    // SET: largest single-step current-magnitude jump among negative-voltage
    // samples of the falling branch.
    let neg_start = falling.iter().position(|s| s[0] < 0.0).unwrap_or(falling.len());
    let neg = &falling[neg_start..];
    if neg.len() < 4 {
        return Err(FeatureError::NoSetDetected);
    }
    let mut steps: Vec<f64> = neg
        .windows(2)
        .map(|w| (w[1][1] as f64 - w[0][1] as f64).abs())
        .collect();
    let (mut jump_at, mut jump) = (0usize, 0.0f64);
    for (k, &s) in steps.iter().enumerate() {
        if s > jump {
            jump = s;
            jump_at = k;
        }
    }
    steps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_step = stats::quantile(&steps, 0.5);
    if jump < hints.jump_factor * med_step || jump == 0.0 {
        return Err(FeatureError::NoSetDetected);
    }
    // The jump happens between two samples; the threshold lies between their
    // voltages, so take the midpoint.
    let v_set = 0.5 * (neg[jump_at][0] as f64 + neg[jump_at + 1][0] as f64);

    // HRS resistance: zero-intercept least-squares slope of I vs V over the
    // pre-SET negative samples with |V| ≤ v0.
    let r_hrs = fit_resistance(
        neg[..=jump_at]
            .iter()
            .filter(|s| s[0] as f64 >= -hints.v0 && s[0] < 0.0),
    )
    .ok_or(FeatureError::NoSetDetected)?;

    // LRS resistance: same fit over ascending-branch samples 0 < V ≤ v0
    // (post-SET by construction of the cycle ordering).
    let r_lrs = fit_resistance(
        rising
            .iter()
            .filter(|s| s[0] as f64 > 0.0 && s[0] as f64 <= hints.v0),
    )
    .ok_or(FeatureError::NoResetDetected)?;

    // RESET onset: first ascending sample where measured current drops below
    // theta × the LRS extrapolation, refined by back-extrapolating the
    // deviation-from-LRS to zero (the raw theta crossing lags the true onset
    // by a shape-dependent offset well above the target tolerance).
    let g_lrs = 1.0 / r_lrs;
    let mut crossing: Option<usize> = None;
    for (k, s) in rising.iter().enumerate() {
        let v = s[0] as f64;
        if v <= hints.v0 {
            continue;
        }
        let pred = v * g_lrs;
        if (s[1] as f64) < hints.theta * pred {
            crossing = Some(k);
            break;
        }
    }
    let k1 = crossing.ok_or(FeatureError::NoResetDetected)?;
    let dev_at = |k: usize| rising[k][0] as f64 * g_lrs - rising[k][1] as f64;
    let v_reset = if k1 == 0 {
        rising[k1][0] as f64
    } else {
        // Deviation grows smoothly from zero at the onset; estimate the zero
        // crossing from the local slope around the detection point.
        let k0 = k1.saturating_sub(3).max(1);
        let mut num = 0.0;
        let mut den = 0.0;
        let vref = rising[k1][0] as f64;
        let dref = dev_at(k1);
        for k in k0..k1 {
            let dv = rising[k][0] as f64 - vref;
            num += dv * (dev_at(k) - dref);
            den += dv * dv;
        }
        let slope = if den > 0.0 { num / den } else { 0.0 };
        if slope > 0.0 {
            (vref - dref / slope).clamp(hints.v0, vref)
        } else {
            vref
        }
    };

    Ok(FeatureVector {
        r_hrs,
        v_set,
        r_lrs,
        v_reset,
    })
}

/// Zero-intercept least-squares resistance: slope g = Σ V·I / Σ V², R = 1/g.
fn fit_resistance<'a>(samples: impl Iterator<Item = &'a [f32; 2]>) -> Option<f64> {
    let mut svi = 0.0f64;
    let mut svv = 0.0f64;
    let mut n = 0usize;
    for s in samples {
        let (v, i) = (s[0] as f64, s[1] as f64);
        svi += v * i;
        svv += v * v;
        n += 1;
    }
    if n < 2 || svv <= 0.0 || svi <= 0.0 {
        return None;
    }
    Some(svv / svi)
}

/// Extract every cycle of every device. Invalid cycles are imputed with the
/// device's running median over previously valid cycles and flagged false in
/// the validity mask.
pub fn extract_dataset(
    ds: &SweepDataset,
    hints: &ShapeHints,
) -> Result<FeatureSeries, FeatureError> {
    let devices = ds.devices();
    let cycles = ds.cycles();
    let mut data = vec![
        FeatureVector {
            r_hrs: 0.0,
            v_set: 0.0,
            r_lrs: 0.0,
            v_reset: 0.0
        };
        devices * cycles
    ];
    let mut valid = vec![false; devices * cycles];

    for m in 0..devices {
        let mut history: [Vec<f64>; 4] = Default::default();
        let mut n_valid = 0usize;
        let mut pending: Vec<usize> = Vec::new();
        for n in 0..cycles {
            match extract_cycle_features(&ds.traces[m][n], hints) {
                Ok(f) => {
                    data[m * cycles + n] = f;
                    valid[m * cycles + n] = true;
                    n_valid += 1;
                    let a = f.as_array();
                    for k in 0..4 {
                        history[k].push(a[k]);
                    }
                    if !pending.is_empty() {
                        // Leading invalid cycles backfill from the first
                        // valid one.
                        let fill = running_median(&history);
                        for &idx in &pending {
                            data[m * cycles + idx] = fill;
                        }
                        pending.clear();
                    }
                }
                Err(
                    FeatureError::NoSetDetected
                    | FeatureError::NoResetDetected
                    | FeatureError::TraceTooShort(_),
                ) => {
                    if n_valid == 0 {
                        pending.push(n);
                    } else {
                        data[m * cycles + n] = running_median(&history);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        if n_valid * 2 < cycles {
            return Err(FeatureError::TooFewValidCycles {
                device: m,
                valid: n_valid,
                cycles,
            });
        }
        if !pending.is_empty() {
            // Device had zero valid cycles; caught above, but keep the
            // invariant explicit.
            unreachable!("pending cycles with no valid history");
        }
    }
    Ok(FeatureSeries::new(devices, cycles, data, valid))
}

fn running_median(history: &[Vec<f64>; 4]) -> FeatureVector {
    FeatureVector::from_array([
        stats::median(&history[0]),
        stats::median(&history[1]),
        stats::median(&history[2]),
        stats::median(&history[3]),
    ])
}

/// Fit the global I(V) shape: limiting polynomials over the pooled HRS / LRS
/// branch samples plus the RESET curvature exponent.
///
/// The least-squares polynomials land on the average branch curves; they are
/// then rescaled so that they bound the extracted resistance population at
/// the evaluation voltage (0.1%/99.9% feature quantiles). Without that step
/// half of all cycles would clamp at the mixing-state limits and loop
/// reconstruction could not return their resistances.
///
/// All sums are accumulated streaming; desk-scale corpora hold tens of
/// millions of branch samples.
pub fn fit_iv_shape(
    ds: &SweepDataset,
    feats: &FeatureSeries,
    hints: &ShapeHints,
) -> Result<IvShape, FeatureError> {
    let xscale = ds.v_min.abs().max(ds.v_max.abs()).max(1e-30);
    let mut hrs_fit = PolyAccumulator::new(5, xscale);
    let mut lrs_fit = PolyAccumulator::new(6, xscale);
    // Pooled RESET transition segments in normalized log-log form.
    let mut reset_sxy = 0.0f64;
    let mut reset_sxx = 0.0f64;
    let mut reset_count = 0usize;

    for m in 0..feats.devices {
        for n in 0..feats.cycles {
            if !feats.is_valid(m, n) {
                continue;
            }
            let f = feats.get(m, n);
            let trace = &ds.traces[m][n];
            let turn = trace
                .iter()
                .enumerate()
                .min_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            // HRS branch: descending samples before the SET threshold.
            for s in &trace[..=turn] {
                let v = s[0] as f64;
                if v > f.v_set {
                    hrs_fit.add(v, s[1] as f64);
                }
            }
            // LRS branch: ascending samples between SET and RESET onset.
            for s in &trace[turn..] {
                let v = s[0] as f64;
                if v <= f.v_reset {
                    lrs_fit.add(v, s[1] as f64);
                }
            }
            // RESET segment: ascending samples beyond the onset, normalized
            // by the segment endpoints so the curvature exponent is the
            // log-log slope.
            let seg_start = trace[turn..]
                .iter()
                .position(|s| (s[0] as f64) >= f.v_reset);
            if let Some(k0) = seg_start {
                let seg = &trace[turn + k0..];
                if seg.len() >= 6 {
                    let i_on = seg.first().unwrap()[1] as f64;
                    let i_end = seg.last().unwrap()[1] as f64;
                    let span = i_on - i_end;
                    let dv = ds.v_max - f.v_reset;
                    if span > 0.0 && dv > 0.0 {
                        for s in seg {
                            let x = (ds.v_max - s[0] as f64) / dv;
                            let y = (s[1] as f64 - i_end) / span;
                            if x > 0.05 && x < 0.95 && y > 1e-3 {
                                reset_sxy += x.ln() * y.ln();
                                reset_sxx += x.ln() * x.ln();
                                reset_count += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    // Anchor the fits where the data cannot reach: the LRS branch ends at
    // the RESET onset and the HRS branch at the SET threshold, leaving the
    // polynomial extrapolations unconstrained there. Weak pseudo-samples on
    // the pooled ohmic continuation (1% of the real sample weight) pin the
    // tails without disturbing the covered region.
    let mut v_r: Vec<f64> = feats.pooled_feature(3);
    v_r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut v_s: Vec<f64> = feats.pooled_feature(1);
    v_s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let g_lrs = {
        let g: Vec<f64> = feats.pooled_feature(2).iter().map(|r| 1.0 / r).collect();
        stats::median(&g)
    };
    let g_hrs = {
        let g: Vec<f64> = feats.pooled_feature(0).iter().map(|r| 1.0 / r).collect();
        stats::median(&g)
    };
    {
        let lo = stats::quantile(&v_r, 0.05);
        let n_anchor = 40;
        let w = 0.01 * lrs_fit.count / n_anchor as f64;
        for k in 0..=n_anchor {
            let v = lo + (ds.v_max - lo) * k as f64 / n_anchor as f64;
            lrs_fit.add_weighted(v, g_lrs * v, w);
        }
    }
    {
        let hi = stats::quantile(&v_s, 0.95);
        let n_anchor = 40;
        let w = 0.01 * hrs_fit.count / n_anchor as f64;
        for k in 0..=n_anchor {
            let v = ds.v_min + (hi - ds.v_min) * k as f64 / n_anchor as f64;
            hrs_fit.add_weighted(v, g_hrs * v, w);
        }
    }

    let mut hrs_coeffs = [0.0; 6];
    hrs_fit.solve(&mut hrs_coeffs[1..])?;
    let mut lrs_coeffs = [0.0; 7];
    lrs_fit.solve(&mut lrs_coeffs[1..])?;

    // Envelope rescale at the evaluation voltage: the HRS curve must carry
    // less current than (nearly) every extracted HRS state, the LRS curve
    // more than (nearly) every LRS state.
    let v0 = hints.v0;
    let mut r_h: Vec<f64> = feats.pooled_feature(0);
    let mut r_l: Vec<f64> = feats.pooled_feature(2);
    r_h.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r_l.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r_h_hi = stats::quantile(&r_h, 0.999);
    let r_l_lo = stats::quantile(&r_l, 0.001);
    let i_h_v0 = horner(&hrs_coeffs, v0);
    let i_l_v0 = horner(&lrs_coeffs, v0);
    if i_h_v0 > 0.0 {
        let s = (v0 / r_h_hi) / i_h_v0;
        if s < 1.0 {
            hrs_coeffs.iter_mut().for_each(|c| *c *= s);
        }
    }
    if i_l_v0 > 0.0 {
        let s = (v0 / r_l_lo) / i_l_v0;
        if s > 1.0 {
            lrs_coeffs.iter_mut().for_each(|c| *c *= s);
        }
    }

    // RESET curvature: zero-intercept slope in log-log space, defaulting to
    // 3.0 when the pooled segments are too short to constrain it.
    let reset_curvature = if reset_count < 50 {
        3.0
    } else {
        let eta = reset_sxy / reset_sxx;
        if eta.is_finite() && eta > 1.0 {
            eta
        } else {
            3.0
        }
    };

    Ok(IvShape {
        hrs_coeffs,
        lrs_coeffs,
        reset_curvature,
        eval_voltage: hints.v0,
        max_voltage: ds.v_max,
    })
}

/// Streaming least-squares accumulator for a zero-intercept polynomial
/// (basis x, x², …, x^deg). The abscissa is pre-scaled to O(1) so the Gram
/// conditioning check reflects data coverage rather than raw units.
struct PolyAccumulator {
    deg: usize,
    xscale: f64,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    powers: Vec<f64>,
    /// Total accumulated weight.
    count: f64,
}

impl PolyAccumulator {
    fn new(deg: usize, xscale: f64) -> Self {
        assert!(deg >= 1);
        Self {
            deg,
            xscale,
            gram: vec![0.0; deg * deg],
            rhs: vec![0.0; deg],
            powers: vec![0.0; deg],
            count: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, x: f64, y: f64) {
        self.add_weighted(x, y, 1.0);
    }

    #[inline]
    fn add_weighted(&mut self, x: f64, y: f64, w: f64) {
        self.count += w;
        let xn = x / self.xscale;
        let mut p = xn;
        for pk in self.powers.iter_mut() {
            *pk = p;
            p *= xn;
        }
        for i in 0..self.deg {
            self.rhs[i] += w * self.powers[i] * y;
            for j in 0..=i {
                self.gram[linalg::idx(self.deg, i, j)] += w * self.powers[i] * self.powers[j];
            }
        }
    }

    /// Solve the normal equations into `out[k]` = coefficient of x^(k+1).
    /// Fails when the Gram matrix is conditioned worse than 1e12 (degenerate
    /// voltage coverage).
    fn solve(mut self, out: &mut [f64]) -> Result<(), FeatureError> {
        let deg = self.deg;
        assert_eq!(out.len(), deg);
        for i in 0..deg {
            for j in i + 1..deg {
                self.gram[linalg::idx(deg, i, j)] = self.gram[linalg::idx(deg, j, i)];
            }
        }
        let cond = linalg::spd_condition(&self.gram, deg);
        if !cond.is_finite() || cond > 1e12 {
            return Err(FeatureError::IllConditionedFit(cond));
        }
        linalg::solve_spd(&mut self.gram, deg, &mut self.rhs)
            .ok_or(FeatureError::IllConditionedFit(f64::INFINITY))?;
        for (k, c) in self.rhs.iter().enumerate() {
            out[k] = c / self.xscale.powi(k as i32 + 1);
        }
        Ok(())
    }
}
