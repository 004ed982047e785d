//! Shared oracle machinery for the solver integration tests: a dense
//! nodal-analysis implementation built independently of the production
//! banded path (flat node list, dense partial-pivot LU, plain Newton).

#![allow(dead_code)]

use revar::cell::CellState;
use revar::features::IvShape;

/// Dense LU solve with partial pivoting.
pub fn lu_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Vec<f64> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        assert!(a[piv * n + col].abs() > 1e-300, "singular oracle matrix");
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r * n + k] * b[k];
        }
        b[r] = s / a[r * n + r];
    }
    b
}

/// Oracle network: wl node = i*cols + j, bl node = rows*cols + i*cols + j.
/// Drives are sources behind one lead segment at the west (WL) / south (BL)
/// line ends, mirroring the production topology.
pub struct OracleNet<'a> {
    pub rows: usize,
    pub cols: usize,
    pub g_lead: f64,
    pub cells: &'a [CellState],
    pub iv: &'a IvShape,
    pub wl_drive: Vec<f64>,
    pub bl_drive: Vec<f64>,
}

impl OracleNet<'_> {
    pub fn n(&self) -> usize {
        2 * self.rows * self.cols
    }

    pub fn wl(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    pub fn bl(&self, i: usize, j: usize) -> usize {
        self.rows * self.cols + i * self.cols + j
    }

    /// KCL residual f(u) (current leaving each node).
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut f = vec![0.0; n];
        let g = self.g_lead;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (nw, nb) = (self.wl(i, j), self.bl(i, j));
                if j == 0 {
                    f[nw] += g * (u[nw] - self.wl_drive[i]);
                } else {
                    f[nw] += g * (u[nw] - u[self.wl(i, j - 1)]);
                    f[self.wl(i, j - 1)] += g * (u[self.wl(i, j - 1)] - u[nw]);
                }
                if i + 1 == self.rows {
                    f[nb] += g * (u[nb] - self.bl_drive[j]);
                } else {
                    f[nb] += g * (u[nb] - u[self.bl(i + 1, j)]);
                    f[self.bl(i + 1, j)] += g * (u[self.bl(i + 1, j)] - u[nb]);
                }
                let idev = self.cells[i * self.cols + j].static_current(self.iv, u[nw] - u[nb]);
                f[nw] += idev;
                f[nb] -= idev;
            }
        }
        f
    }

    /// Dense Jacobian of the residual.
    pub fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        fn two_terminal(a: &mut [f64], n: usize, p: usize, q: usize, g: f64) {
            a[p * n + p] += g;
            a[q * n + q] += g;
            a[p * n + q] -= g;
            a[q * n + p] -= g;
        }
        let n = self.n();
        let mut a = vec![0.0; n * n];
        let g = self.g_lead;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (nw, nb) = (self.wl(i, j), self.bl(i, j));
                if j == 0 {
                    a[nw * n + nw] += g;
                } else {
                    two_terminal(&mut a, n, nw, self.wl(i, j - 1), g);
                }
                if i + 1 == self.rows {
                    a[nb * n + nb] += g;
                } else {
                    two_terminal(&mut a, n, nb, self.bl(i + 1, j), g);
                }
                let gd = self.cells[i * self.cols + j]
                    .conductance(self.iv, u[nw] - u[nb])
                    .max(1e-12);
                two_terminal(&mut a, n, nw, nb, gd);
            }
        }
        a
    }

    /// Plain (undamped) Newton on the dense system.
    pub fn solve(&self) -> Vec<f64> {
        let n = self.n();
        let mut u = vec![0.0; n];
        for _ in 0..60 {
            let f = self.residual(&u);
            let worst = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if worst < 1e-13 {
                break;
            }
            let a = self.jacobian(&u);
            let d = lu_solve(a, n, f);
            for k in 0..n {
                u[k] -= d[k];
            }
        }
        u
    }
}

/// Cells pinned at mixing state 1 on a linear high-resistance curve: exact
/// resistors of the given value.
pub fn ohmic_cells(count: usize, resistance: f64) -> (Vec<CellState>, IvShape) {
    let iv = IvShape {
        hrs_coeffs: [0.0, 1.0 / resistance, 0.0, 0.0, 0.0, 0.0],
        lrs_coeffs: [0.0, 10.0 / resistance, 0.0, 0.0, 0.0, 0.0, 0.0],
        reset_curvature: 3.0,
        eval_voltage: 0.2,
        max_voltage: 2.0,
    };
    ((0..count).map(|_| CellState::pinned(1.0)).collect(), iv)
}
