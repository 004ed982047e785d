//! Small dense and banded linear algebra kernels.
//!
//! Everything here operates on plain `Vec<f64>` / slices in row-major layout.
//! The sizes involved are tiny (4x4 .. 8x8 for the statistics code, up to a
//! few tens of thousands of unknowns with narrow bandwidth for the crossbar
//! solver), so hand-rolled kernels beat pulling in a full linear algebra
//! stack.

/// Row-major dense matrix view helper.
#[inline]
pub fn idx(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

/// In-place Cholesky factorization A = L·Lᵀ of a symmetric positive definite
/// matrix (row-major, n×n). Only the lower triangle of `a` is read; on
/// success the lower triangle holds L. Returns `None` if a pivot is not
/// strictly positive.
pub fn cholesky(a: &mut [f64], n: usize) -> Option<()> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[idx(n, i, j)];
            for k in 0..j {
                sum -= a[idx(n, i, k)] * a[idx(n, j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                a[idx(n, i, i)] = sum.sqrt();
            } else {
                a[idx(n, i, j)] = sum / a[idx(n, j, j)];
            }
        }
    }
    Some(())
}

/// Solve L·Lᵀ x = b given the Cholesky factor L (lower triangle of `l`).
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[idx(n, i, k)] * b[k];
        }
        b[i] = sum / l[idx(n, i, i)];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l[idx(n, k, i)] * b[k];
        }
        b[i] = sum / l[idx(n, i, i)];
    }
}

/// Log-determinant of A from its Cholesky factor.
pub fn cholesky_logdet(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| l[idx(n, i, i)].ln()).sum::<f64>() * 2.0
}

/// Solve the symmetric positive definite system A x = b, leaving `a`
/// overwritten with its factor. Returns `None` when A is not SPD.
pub fn solve_spd(a: &mut [f64], n: usize, b: &mut [f64]) -> Option<()> {
    cholesky(a, n)?;
    cholesky_solve(a, n, b);
    Some(())
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
///
/// Destroys `a`; returns the eigenvalues in ascending order. Intended for the
/// small (≤ 50×50) condition-number and covariance checks.
pub fn sym_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += a[idx(n, i, j)] * a[idx(n, i, j)];
            }
        }
        s
    };
    for _sweep in 0..100 {
        if off(a) < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[idx(n, p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[idx(n, p, p)];
                let aqq = a[idx(n, q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(n, k, p)];
                    let akq = a[idx(n, k, q)];
                    a[idx(n, k, p)] = c * akp - s * akq;
                    a[idx(n, k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(n, p, k)];
                    let aqk = a[idx(n, q, k)];
                    a[idx(n, p, k)] = c * apk - s * aqk;
                    a[idx(n, q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[idx(n, i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Condition number estimate of a symmetric positive semi-definite matrix
/// (ratio of extreme eigenvalues).
pub fn spd_condition(a: &[f64], n: usize) -> f64 {
    let mut work = a.to_vec();
    let eig = sym_eigenvalues(&mut work, n);
    let lo = eig[0].max(0.0);
    let hi = eig[n - 1];
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Spectral radius of a general square matrix by normalized repeated
/// squaring: ρ(M) = lim ‖M^k‖_F^(1/k).
///
/// After `s` squarings the estimate uses k = 2^s; the relative error decays
/// like log(cond)/2^s and is negligible at the default 28 squarings.
pub fn spectral_radius(m: &[f64], n: usize) -> f64 {
    let frob = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm0 = frob(m);
    if norm0 == 0.0 {
        return 0.0;
    }
    let mut q: Vec<f64> = m.iter().map(|v| v / norm0).collect();
    let mut log_scale = norm0.ln(); // ln ‖M^(2^s)‖ ≈ log_scale (Q kept at unit norm)
    let mut tmp = vec![0.0; n * n];
    let squarings = 28;
    for _ in 0..squarings {
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            for k in 0..n {
                let qik = q[idx(n, i, k)];
                if qik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    tmp[idx(n, i, j)] += qik * q[idx(n, k, j)];
                }
            }
        }
        let nf = frob(&tmp);
        if nf == 0.0 {
            return 0.0;
        }
        q.iter_mut()
            .zip(tmp.iter())
            .for_each(|(qv, tv)| *qv = tv / nf);
        log_scale = 2.0 * log_scale + nf.ln();
    }
    (log_scale / (1u64 << squarings) as f64).exp()
}

/// Symmetric banded matrix in lower-band storage: row i holds entries for
/// columns `i-bw ..= i` at positions `0 ..= bw` (column `i-bw+d` at slot d).
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Accumulate into entry (i, j) with j ≤ i and i − j ≤ bw.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (self.bw - (i - j))] += v;
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (self.bw - (i - j))]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * (self.bw + 1) + (self.bw - (i - j))] = v;
    }

    /// In-place banded Cholesky. Returns `None` if not positive definite.
    pub fn cholesky_in_place(&mut self) -> Option<()> {
        let n = self.n;
        let bw = self.bw;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut sum = self.at(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    sum -= self.at(i, k) * self.at(j, k);
                }
                if i == j {
                    if sum <= 0.0 {
                        return None;
                    }
                    self.set(i, i, sum.sqrt());
                } else {
                    let d = self.at(j, j);
                    self.set(i, j, sum / d);
                }
            }
        }
        Some(())
    }

    /// Solve L·Lᵀ x = b in place using the factor stored by
    /// [`Self::cholesky_in_place`].
    pub fn solve_factored(&self, b: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        for i in 0..n {
            let mut sum = b[i];
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                sum -= self.at(i, j) * b[j];
            }
            b[i] = sum / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut sum = b[i];
            let j1 = (i + bw).min(n - 1);
            for j in i + 1..=j1 {
                sum -= self.at(j, i) * b[j];
            }
            b[i] = sum / self.at(i, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_spd() {
        // A = [[4,2],[2,3]], b = [8, 7] -> x = [1.25, 1.5]
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let mut b = vec![8.0, 7.0];
        solve_spd(&mut a, 2, &mut b).unwrap();
        assert!((b[0] - 1.25).abs() < 1e-12);
        assert!((b[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&mut a, 2).is_none());
    }

    #[test]
    fn jacobi_eigenvalues_match_hand_computed() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut a = vec![2.0, 1.0, 1.0, 2.0];
        let eig = sym_eigenvalues(&mut a, 2);
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let m = vec![0.5, 0.0, 0.0, -0.9];
        assert!((spectral_radius(&m, 2) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn spectral_radius_of_rotation_scaling() {
        // 0.8 * rotation: complex eigenvalue pair of magnitude 0.8 (the case
        // plain power iteration handles poorly).
        let c = 0.8 * (0.3f64).cos();
        let s = 0.8 * (0.3f64).sin();
        let m = vec![c, -s, s, c];
        assert!((spectral_radius(&m, 2) - 0.8).abs() < 1e-6);
    }

    #[test]
    fn banded_matches_dense_cholesky() {
        // Tridiagonal SPD system vs dense solve.
        let n = 8;
        let bw = 1;
        let mut band = BandMatrix::zeros(n, bw);
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            band.add(i, i, 4.0);
            dense[idx(n, i, i)] = 4.0;
            if i > 0 {
                band.add(i, i - 1, -1.0);
                dense[idx(n, i, i - 1)] = -1.0;
                dense[idx(n, i - 1, i)] = -1.0;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut x_band = b.clone();
        band.cholesky_in_place().unwrap();
        band.solve_factored(&mut x_band);
        let mut x_dense = b;
        solve_spd(&mut dense, n, &mut x_dense).unwrap();
        for i in 0..n {
            assert!((x_band[i] - x_dense[i]).abs() < 1e-12);
        }
    }
}
