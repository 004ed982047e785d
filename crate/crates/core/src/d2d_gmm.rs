//! Device-to-device variability: per-device statistics block vectors and the
//! Gaussian mixture fitted over them by expectation–maximization with k-means
//! initialization.
//!
//! The mixture is fit in standardized coordinates (resistances and voltages
//! differ by many orders of magnitude) and de-standardized when sampling.

use crate::features::FeatureVector;
use crate::linalg;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const STAT_DIM: usize = 8;
const MAX_COMPONENTS: usize = 16;

/// 8-vector of per-device cycle statistics: the four feature means followed
/// by the four feature standard deviations, in occurrence order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceStats(pub [f64; STAT_DIM]);

impl DeviceStats {
    pub fn means(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.0[k])
    }

    pub fn stds(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.0[k + 4])
    }
}

/// Sample means and sample standard deviations (n−1 denominator) of one
/// device's cycle series.
pub fn compute_device_stats(series: &[FeatureVector]) -> DeviceStats {
    let n = series.len();
    assert!(n >= 2, "need at least 2 cycles");
    let mut mu = [0.0; 4];
    for f in series {
        let a = f.as_array();
        for k in 0..4 {
            mu[k] += a[k];
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut sd = [0.0; 4];
    for f in series {
        let a = f.as_array();
        for k in 0..4 {
            let d = a[k] - mu[k];
            sd[k] += d * d;
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / (n - 1) as f64).sqrt());
    DeviceStats([mu[0], mu[1], mu[2], mu[3], sd[0], sd[1], sd[2], sd[3]])
}

/// Fitted mixture over device statistics vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    /// Component means in standardized coordinates.
    pub means: Vec<[f64; STAT_DIM]>,
    /// Component covariances in standardized coordinates (full, SPD).
    pub covariances: Vec<[[f64; STAT_DIM]; STAT_DIM]>,
    /// Standardization record: raw = standardized · scale + offset.
    pub offset: [f64; STAT_DIM],
    pub scale: [f64; STAT_DIM],
    /// Per-feature floor applied to sampled standard deviations, derived from
    /// the training-set median σ so the generative affine inverse never sees
    /// a zero or negative scale.
    pub sigma_floor: [f64; 4],
}

impl GmmParams {
    /// Component mean mapped back to raw coordinates.
    pub fn raw_mean(&self, c: usize) -> [f64; STAT_DIM] {
        std::array::from_fn(|d| self.means[c][d] * self.scale[d] + self.offset[d])
    }

    /// Verify that every stored covariance admits a Cholesky factorization.
    pub fn check_spd(&self) -> Result<(), GmmError> {
        for (c, cov) in self.covariances.iter().enumerate() {
            chol_logdet(cov).ok_or(GmmError::DegenerateCovariance(c))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GmmError {
    #[error("component {component} weight {weight:.3e} fell below 1/(10·M)")]
    SingularComponent { component: usize, weight: f64 },
    #[error("need at least {need} points for K={k}, got {got}")]
    TooFewPoints { need: usize, got: usize, k: usize },
    #[error("covariance not positive definite for component {0}")]
    DegenerateCovariance(usize),
}

/// EM diagnostics of the winning restart.
#[derive(Debug, Clone, Default)]
pub struct GmmFitReport {
    /// Log-likelihood (standardized space) after each EM iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
}

/// Fit a K-component mixture: per restart, seeded k-means++ initializes hard
/// responsibilities, EM iterates until the per-point log-likelihood gain
/// drops below 1e-8 (or 500 iterations); the best restart by final
/// log-likelihood wins.
pub fn fit_gmm(
    stats: &[DeviceStats],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<(GmmParams, GmmFitReport), GmmError> {
    assert!(k >= 1 && k <= MAX_COMPONENTS);
    let m = stats.len();
    if m < 4 * k {
        return Err(GmmError::TooFewPoints {
            need: 4 * k,
            got: m,
            k,
        });
    }

    let mut offset = [0.0; STAT_DIM];
    let mut scale = [0.0; STAT_DIM];
    for d in 0..STAT_DIM {
        let col: Vec<f64> = stats.iter().map(|s| s.0[d]).collect();
        offset[d] = crate::stats::mean(&col);
        let sd = crate::stats::sample_std(&col);
        scale[d] = if sd > 0.0 { sd } else { 1.0 };
    }
    let points: Vec<[f64; STAT_DIM]> = stats
        .iter()
        .map(|s| std::array::from_fn(|d| (s.0[d] - offset[d]) / scale[d]))
        .collect();

    let sigma_floor = {
        let mut floor = [0.0; 4];
        for (f, item) in floor.iter_mut().enumerate() {
            let col: Vec<f64> = stats.iter().map(|s| s.0[f + 4]).collect();
            *item = 1e-3 * crate::stats::median(&col);
        }
        floor
    };

    let mut best: Option<(f64, GmmParams, GmmFitReport)> = None;
    let mut last_err = None;
    for restart in 0..restarts.max(1) {
        let mut rng = SmallRng::seed_from_u64(seed.wrapping_add(restart as u64));
        match em_single(&points, k, &mut rng) {
            Ok((ll, weights, means, covariances, trace)) => {
                let better = best.as_ref().map_or(true, |(b, _, _)| ll > *b);
                if better {
                    let report = GmmFitReport {
                        iterations: trace.len(),
                        loglik_trace: trace,
                        restarts: restarts.max(1),
                    };
                    best = Some((
                        ll,
                        GmmParams {
                            weights,
                            means,
                            covariances,
                            offset,
                            scale,
                            sigma_floor,
                        },
                        report,
                    ));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, params, report)) => Ok((params, report)),
        None => Err(last_err.unwrap_or(GmmError::DegenerateCovariance(0))),
    }
}

type EmOutput = (
    f64,
    Vec<f64>,
    Vec<[f64; STAT_DIM]>,
    Vec<[[f64; STAT_DIM]; STAT_DIM]>,
    Vec<f64>,
);

fn em_single<R: Rng>(
    points: &[[f64; STAT_DIM]],
    k: usize,
    rng: &mut R,
) -> Result<EmOutput, GmmError> {
    let m = points.len();
    let centers = kmeans(points, k, rng);

    // Hard-assignment responsibilities from the k-means clustering.
    let mut resp = vec![0.0; m * k];
    for (i, p) in points.iter().enumerate() {
        let c = nearest(p, &centers);
        resp[i * k + c] = 1.0;
    }

    let mut weights = vec![0.0; k];
    let mut means = vec![[0.0; STAT_DIM]; k];
    let mut covariances = vec![[[0.0; STAT_DIM]; STAT_DIM]; k];
    m_step(points, &resp, k, &mut weights, &mut means, &mut covariances);

    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut chols: Vec<([f64; STAT_DIM * STAT_DIM], f64)> = Vec::with_capacity(k);
    for iter in 0..500 {
        chols.clear();
        for (c, cov) in covariances.iter().enumerate() {
            chols.push(chol_logdet(cov).ok_or(GmmError::DegenerateCovariance(c))?);
        }
        let mut ll = 0.0;
        let mut logs = [0.0f64; MAX_COMPONENTS];
        for (i, p) in points.iter().enumerate() {
            for c in 0..k {
                logs[c] = weights[c].ln() + log_gauss(p, &means[c], &chols[c]);
            }
            let mx = logs[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logs[..k].iter().map(|l| (l - mx).exp()).sum();
            let lse = mx + sum.ln();
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (logs[c] - lse).exp();
            }
        }
        trace.push(ll);
        m_step(points, &resp, k, &mut weights, &mut means, &mut covariances);
        for (c, &w) in weights.iter().enumerate() {
            if w < 1.0 / (10.0 * m as f64) {
                return Err(GmmError::SingularComponent {
                    component: c,
                    weight: w,
                });
            }
        }
        if iter > 0 && (ll - prev_ll) / (m as f64) < 1e-8 {
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
    }
    Ok((prev_ll, weights, means, covariances, trace))
}

fn m_step(
    points: &[[f64; STAT_DIM]],
    resp: &[f64],
    k: usize,
    weights: &mut [f64],
    means: &mut [[f64; STAT_DIM]],
    covariances: &mut [[[f64; STAT_DIM]; STAT_DIM]],
) {
    let m = points.len();
    for c in 0..k {
        let nk: f64 = (0..m).map(|i| resp[i * k + c]).sum();
        weights[c] = nk / m as f64;
        let nk = nk.max(1e-300);
        let mut mu = [0.0; STAT_DIM];
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * k + c];
            for d in 0..STAT_DIM {
                mu[d] += r * p[d];
            }
        }
        mu.iter_mut().for_each(|v| *v /= nk);
        means[c] = mu;
        let mut cov = [[0.0; STAT_DIM]; STAT_DIM];
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            for a in 0..STAT_DIM {
                let da = p[a] - mu[a];
                for b in 0..=a {
                    cov[a][b] += r * da * (p[b] - mu[b]);
                }
            }
        }
        for a in 0..STAT_DIM {
            for b in 0..=a {
                cov[a][b] /= nk;
                cov[b][a] = cov[a][b];
            }
        }
        let trace: f64 = (0..STAT_DIM).map(|d| cov[d][d]).sum();
        let reg = (1e-6 * trace / STAT_DIM as f64).max(1e-12);
        for d in 0..STAT_DIM {
            cov[d][d] += reg;
        }
        covariances[c] = cov;
    }
}

fn dist2(a: &[f64; STAT_DIM], b: &[f64; STAT_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64; STAT_DIM], centers: &[[f64; STAT_DIM]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
fn kmeans<R: Rng>(points: &[[f64; STAT_DIM]], k: usize, rng: &mut R) -> Vec<[f64; STAT_DIM]> {
    let m = points.len();
    let mut centers: Vec<[f64; STAT_DIM]> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..m)]);
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| dist2(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            centers.push(points[rng.random_range(0..m)]);
            continue;
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = m - 1;
        for (i, &d) in d2.iter().enumerate() {
            target -= d;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        centers.push(points[chosen]);
    }
    let mut assign = vec![0usize; m];
    for _ in 0..100 {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest(p, &centers);
            if assign[i] != c {
                assign[i] = c;
                moved = true;
            }
        }
        let mut sums = vec![[0.0; STAT_DIM]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for d in 0..STAT_DIM {
                sums[assign[i]][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..STAT_DIM {
                    centers[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }
        if !moved {
            break;
        }
    }
    centers
}

fn chol_logdet(cov: &[[f64; STAT_DIM]; STAT_DIM]) -> Option<([f64; STAT_DIM * STAT_DIM], f64)> {
    let mut a = [0.0; STAT_DIM * STAT_DIM];
    for i in 0..STAT_DIM {
        for j in 0..STAT_DIM {
            a[i * STAT_DIM + j] = cov[i][j];
        }
    }
    linalg::cholesky(&mut a, STAT_DIM)?;
    let logdet = linalg::cholesky_logdet(&a, STAT_DIM);
    Some((a, logdet))
}

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

fn log_gauss(
    x: &[f64; STAT_DIM],
    mu: &[f64; STAT_DIM],
    chol: &([f64; STAT_DIM * STAT_DIM], f64),
) -> f64 {
    // Mahalanobis distance via one forward substitution against L.
    let (l, logdet) = chol;
    let mut y = [0.0; STAT_DIM];
    for i in 0..STAT_DIM {
        let mut s = x[i] - mu[i];
        for j in 0..i {
            s -= l[i * STAT_DIM + j] * y[j];
        }
        y[i] = s / l[i * STAT_DIM + i];
    }
    let mahal2: f64 = y.iter().map(|v| v * v).sum();
    -0.5 * (STAT_DIM as f64 * LOG_2PI + logdet + mahal2)
}

/// Maximum-posterior component assignment of one device statistics vector.
pub fn classify(gmm: &GmmParams, stats: &DeviceStats) -> usize {
    let p: [f64; STAT_DIM] =
        std::array::from_fn(|d| (stats.0[d] - gmm.offset[d]) / gmm.scale[d]);
    let mut best = 0;
    let mut best_log = f64::NEG_INFINITY;
    for (c, cov) in gmm.covariances.iter().enumerate() {
        let chol = chol_logdet(cov).expect("stored covariance must be SPD");
        let l = gmm.weights[c].ln() + log_gauss(&p, &gmm.means[c], &chol);
        if l > best_log {
            best_log = l;
            best = c;
        }
    }
    best
}

/// Mixture log-likelihood of raw (unstandardized) device statistics: the
/// standardized-space density minus the standardization Jacobian.
pub fn gmm_loglik(gmm: &GmmParams, stats: &[DeviceStats]) -> f64 {
    let k = gmm.weights.len();
    let chols: Vec<_> = gmm
        .covariances
        .iter()
        .map(|c| chol_logdet(c).expect("stored covariance must be SPD"))
        .collect();
    let log_jac: f64 = gmm.scale.iter().map(|s| s.ln()).sum();
    let mut ll = 0.0;
    let mut logs = [0.0f64; MAX_COMPONENTS];
    for s in stats {
        let p: [f64; STAT_DIM] = std::array::from_fn(|d| (s.0[d] - gmm.offset[d]) / gmm.scale[d]);
        for c in 0..k {
            logs[c] = gmm.weights[c].ln() + log_gauss(&p, &gmm.means[c], &chols[c]);
        }
        let mx = logs[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs[..k].iter().map(|l| (l - mx).exp()).sum();
        ll += mx + sum.ln() - log_jac;
    }
    ll
}

/// Draw one device statistics vector: categorical component draw, then
/// multivariate normal via the covariance Cholesky factor, de-standardized,
/// with sampled standard deviations floored.
pub fn sample_device<R: Rng + ?Sized>(gmm: &GmmParams, rng: &mut R) -> DeviceStats {
    let k = gmm.weights.len();
    let mut u: f64 = rng.random();
    let mut comp = k - 1;
    for (c, &w) in gmm.weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            comp = c;
            break;
        }
    }
    sample_component(gmm, comp, rng)
}

/// Draw from one specific mixture component (stratified corpus generation).
pub fn sample_component<R: Rng + ?Sized>(
    gmm: &GmmParams,
    comp: usize,
    rng: &mut R,
) -> DeviceStats {
    let (l, _) = chol_logdet(&gmm.covariances[comp]).expect("stored covariance must be SPD");
    let z: [f64; STAT_DIM] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let mut out = [0.0; STAT_DIM];
    for i in 0..STAT_DIM {
        let mut s = gmm.means[comp][i];
        for j in 0..=i {
            s += l[i * STAT_DIM + j] * z[j];
        }
        out[i] = s * gmm.scale[i] + gmm.offset[i];
    }
    for f in 0..4 {
        out[f + 4] = out[f + 4].max(gmm.sigma_floor[f]);
    }
    DeviceStats(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_stats_constant_series() {
        let series = vec![FeatureVector::from_array([2.0, -1.0, 0.5, 0.25]); 10];
        let s = compute_device_stats(&series);
        assert_eq!(s.means(), [2.0, -1.0, 0.5, 0.25]);
        assert_eq!(s.stds(), [0.0; 4]);
    }

    #[test]
    fn device_stats_two_cycles() {
        let series = vec![
            FeatureVector::from_array([0.0; 4]),
            FeatureVector::from_array([2.0; 4]),
        ];
        let s = compute_device_stats(&series);
        assert_eq!(s.means(), [1.0; 4]);
        for v in s.stds() {
            assert!((v - std::f64::consts::SQRT_2).abs() < 1e-12);
        }
    }

    fn sample_cluster<R: Rng>(
        center: [f64; STAT_DIM],
        spread: f64,
        n: usize,
        rng: &mut R,
    ) -> Vec<DeviceStats> {
        (0..n)
            .map(|_| {
                DeviceStats(std::array::from_fn(|d| {
                    let z: f64 = StandardNormal.sample(rng);
                    center[d] + spread * z
                }))
            })
            .collect()
    }

    #[test]
    fn recovers_three_separated_clusters() {
        // Separation 10x the cluster spread, weights (0.6, 0.36, 0.04).
        let mut rng = SmallRng::seed_from_u64(55);
        let sep = 10.0;
        let mut pts = Vec::new();
        pts.extend(sample_cluster([0.0; STAT_DIM], 1.0, 6000, &mut rng));
        pts.extend(sample_cluster([sep; STAT_DIM], 1.0, 3600, &mut rng));
        let mut far = [0.0; STAT_DIM];
        far[0] = -sep;
        far[3] = sep;
        pts.extend(sample_cluster(far, 1.0, 400, &mut rng));
        let (gmm, report) = fit_gmm(&pts, 3, 8, 99).unwrap();
        let mut w = gmm.weights.clone();
        w.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((w[0] - 0.6).abs() < 0.02, "weights {w:?}");
        assert!((w[1] - 0.36).abs() < 0.02);
        assert!((w[2] - 0.04).abs() < 0.02);
        for target in [[0.0; STAT_DIM], [sep; STAT_DIM], far] {
            let best = (0..3)
                .map(|c| dist2(&gmm.raw_mean(c), &target).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05 * sep, "cluster mean missed by {best}");
        }
        assert!(report.iterations >= 1);
    }

    #[test]
    fn single_component_matches_sample_moments() {
        let mut rng = SmallRng::seed_from_u64(3);
        let pts = sample_cluster([1.0; STAT_DIM], 2.0, 5000, &mut rng);
        let (gmm, _) = fit_gmm(&pts, 1, 1, 5).unwrap();
        let cols: Vec<Vec<f64>> = (0..STAT_DIM)
            .map(|d| pts.iter().map(|p| p.0[d]).collect())
            .collect();
        for d in 0..STAT_DIM {
            let raw_mean = gmm.raw_mean(0)[d];
            assert!((raw_mean - crate::stats::mean(&cols[d])).abs() < 1e-9);
        }
        // Covariance equals the sample (population-form) moments up to the
        // mandated 1e-6·trace/8 diagonal regularization.
        let n = pts.len() as f64;
        for a in 0..STAT_DIM {
            for b in 0..STAT_DIM {
                let ma = crate::stats::mean(&cols[a]);
                let mb = crate::stats::mean(&cols[b]);
                let samp: f64 = pts
                    .iter()
                    .map(|p| (p.0[a] - ma) * (p.0[b] - mb))
                    .sum::<f64>()
                    / n;
                let fitted = gmm.covariances[0][a][b] * gmm.scale[a] * gmm.scale[b];
                assert!(
                    (fitted - samp).abs() <= 1e-6 * samp.abs().max(4.0) + 1e-9,
                    "cov[{a}][{b}] {fitted} vs {samp}"
                );
            }
        }
    }

    #[test]
    fn loglik_at_component_mean_identity_cov() {
        let gmm = GmmParams {
            weights: vec![1.0],
            means: vec![[0.0; STAT_DIM]],
            covariances: vec![std::array::from_fn(|i| {
                std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 })
            })],
            offset: [0.0; STAT_DIM],
            scale: [1.0; STAT_DIM],
            sigma_floor: [0.0; 4],
        };
        let ll = gmm_loglik(&gmm, &[DeviceStats([0.0; STAT_DIM])]);
        let want = -4.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((ll - want).abs() < 1e-12, "ll {ll} want {want}");
    }

    #[test]
    fn em_loglik_is_monotone() {
        let mut rng = SmallRng::seed_from_u64(17);
        let mut pts = sample_cluster([0.0; STAT_DIM], 1.0, 500, &mut rng);
        pts.extend(sample_cluster([4.0; STAT_DIM], 1.5, 300, &mut rng));
        let (_, report) = fit_gmm(&pts, 2, 3, 1).unwrap();
        assert!(report.loglik_trace.len() >= 2);
        for w in report.loglik_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-10 * pts.len() as f64,
                "log-likelihood decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn loglik_standardization_jacobian() {
        // Rescaling the standardization record shifts the raw-space
        // log-likelihood by the known Jacobian constant (plus the quadratic
        // change in the standardized point).
        let base = GmmParams {
            weights: vec![1.0],
            means: vec![[0.0; STAT_DIM]],
            covariances: vec![std::array::from_fn(|i| {
                std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 })
            })],
            offset: [0.0; STAT_DIM],
            scale: [1.0; STAT_DIM],
            sigma_floor: [0.0; 4],
        };
        let mut scaled = base.clone();
        scaled.scale = [2.0; STAT_DIM];
        let x = DeviceStats([1.0; STAT_DIM]);
        let ll_base = gmm_loglik(&base, &[x]);
        let ll_scaled = gmm_loglik(&scaled, &[x]);
        // Mahalanobis term drops from 8·1 to 8·0.25; Jacobian adds 8·ln 2.
        let expect = ll_base + 0.5 * 8.0 * (1.0 - 0.25) - 8.0 * (2.0f64).ln();
        assert!((ll_scaled - expect).abs() < 1e-12);
    }

    #[test]
    fn point_mass_sampling_returns_mean() {
        let mut cov = [[0.0; STAT_DIM]; STAT_DIM];
        for d in 0..STAT_DIM {
            cov[d][d] = 1e-30;
        }
        let mean_raw = [3.0, -1.0, 2.0, 0.5, 0.2, 0.1, 0.3, 0.4];
        let gmm = GmmParams {
            weights: vec![1.0],
            means: vec![mean_raw],
            covariances: vec![cov],
            offset: [0.0; STAT_DIM],
            scale: [1.0; STAT_DIM],
            sigma_floor: [0.0; 4],
        };
        let mut rng = SmallRng::seed_from_u64(1);
        for _ in 0..10 {
            let s = sample_device(&gmm, &mut rng);
            for d in 0..STAT_DIM {
                assert!((s.0[d] - mean_raw[d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn component_draw_frequencies_match_weights() {
        let mut cov = [[0.0; STAT_DIM]; STAT_DIM];
        for d in 0..STAT_DIM {
            cov[d][d] = 1e-12;
        }
        let mut m1 = [0.0; STAT_DIM];
        m1[0] = 100.0;
        let gmm = GmmParams {
            weights: vec![0.7, 0.3],
            means: vec![[0.0; STAT_DIM], m1],
            covariances: vec![cov, cov],
            offset: [0.0; STAT_DIM],
            scale: [1.0; STAT_DIM],
            sigma_floor: [0.0; 4],
        };
        let mut rng = SmallRng::seed_from_u64(77);
        let n = 100_000;
        let mut count = 0usize;
        for _ in 0..n {
            if sample_device(&gmm, &mut rng).0[0] > 50.0 {
                count += 1;
            }
        }
        let freq = count as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn sampled_covariance_matches_mixture_moments() {
        // Closed-form mixture covariance vs Monte Carlo sample covariance.
        // Cluster centers sit well away from zero so the sigma floor (which
        // guards the generative direction against non-positive scales) never
        // binds and the comparison is pure mixture algebra.
        let mut rng = SmallRng::seed_from_u64(4242);
        let mut pts = sample_cluster([20.0; STAT_DIM], 1.0, 4000, &mut rng);
        pts.extend(sample_cluster([12.0; STAT_DIM], 2.0, 2000, &mut rng));
        let (gmm, _) = fit_gmm(&pts, 2, 4, 9).unwrap();

        let k = gmm.weights.len();
        let raw_means: Vec<[f64; STAT_DIM]> = (0..k).map(|c| gmm.raw_mean(c)).collect();
        let mut mix_mean = [0.0; STAT_DIM];
        for c in 0..k {
            for d in 0..STAT_DIM {
                mix_mean[d] += gmm.weights[c] * raw_means[c][d];
            }
        }
        let mut mix_cov = [[0.0; STAT_DIM]; STAT_DIM];
        for c in 0..k {
            for a in 0..STAT_DIM {
                for b in 0..STAT_DIM {
                    let cov_raw = gmm.covariances[c][a][b] * gmm.scale[a] * gmm.scale[b];
                    let da = raw_means[c][a] - mix_mean[a];
                    let db = raw_means[c][b] - mix_mean[b];
                    mix_cov[a][b] += gmm.weights[c] * (cov_raw + da * db);
                }
            }
        }

        let n = 200_000;
        let samples: Vec<DeviceStats> = (0..n).map(|_| sample_device(&gmm, &mut rng)).collect();
        let mut samp_mean = [0.0; STAT_DIM];
        for s in &samples {
            for d in 0..STAT_DIM {
                samp_mean[d] += s.0[d];
            }
        }
        samp_mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut frob_diff = 0.0;
        let mut frob_ref = 0.0;
        for a in 0..STAT_DIM {
            for b in 0..STAT_DIM {
                let samp: f64 = samples
                    .iter()
                    .map(|s| (s.0[a] - samp_mean[a]) * (s.0[b] - samp_mean[b]))
                    .sum::<f64>()
                    / n as f64;
                frob_diff += (samp - mix_cov[a][b]).powi(2);
                frob_ref += mix_cov[a][b].powi(2);
            }
        }
        let rel = (frob_diff / frob_ref).sqrt();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }

    #[test]
    fn sigma_floor_applied() {
        let mut cov = [[0.0; STAT_DIM]; STAT_DIM];
        for d in 0..STAT_DIM {
            cov[d][d] = 1e-12;
        }
        let mut mean = [0.0; STAT_DIM];
        mean[4] = -5.0; // would sample a negative sigma without the floor
        let gmm = GmmParams {
            weights: vec![1.0],
            means: vec![mean],
            covariances: vec![cov],
            offset: [0.0; STAT_DIM],
            scale: [1.0; STAT_DIM],
            sigma_floor: [0.01, 0.01, 0.01, 0.01],
        };
        let mut rng = SmallRng::seed_from_u64(8);
        let s = sample_device(&gmm, &mut rng);
        assert!(s.0[4] >= 0.01);
    }

    #[test]
    fn sample_then_refit_recovers_weights() {
        let mut rng = SmallRng::seed_from_u64(31);
        let mut pts = sample_cluster([0.0; STAT_DIM], 1.0, 7000, &mut rng);
        pts.extend(sample_cluster([8.0; STAT_DIM], 1.0, 3000, &mut rng));
        let (gmm, _) = fit_gmm(&pts, 2, 4, 2).unwrap();
        let resampled: Vec<DeviceStats> =
            (0..10_000).map(|_| sample_device(&gmm, &mut rng)).collect();
        let (refit, _) = fit_gmm(&resampled, 2, 4, 3).unwrap();
        let mut w0 = gmm.weights.clone();
        let mut w1 = refit.weights.clone();
        w0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        w1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in w0.iter().zip(&w1) {
            assert!((a - b).abs() < 0.03, "weights {w0:?} vs {w1:?}");
        }
    }
}
