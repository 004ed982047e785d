//! Resistive crossbar network: cells at every word-line/bit-line crossing,
//! one lead resistance segment between adjacent nodes along each line, drives
//! applied at the line ends (west for word lines, south for bit lines).
//!
//! The DC operating point solves Kirchhoff's current law at all 2·R·C
//! internal nodes by damped Newton iteration with an analytic Jacobian. The
//! Jacobian of a network of two-terminal elements with positive differential
//! conductance is symmetric positive definite and, with nodes ordered along
//! the shorter array dimension, banded — a banded Cholesky factorization
//! carries each Newton step. `lead_r = 0` selects a decoupled fast path where
//! every cell sees its drive difference directly.

use crate::cell::{CellState, ModelParams};
use crate::features::IvShape;
use crate::linalg::BandMatrix;
use serde::Serialize;
use std::time::Instant;

/// Boundary condition of one line end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    Voltage(f64),
    HighZ,
}

impl Drive {
    fn voltage(&self) -> Option<f64> {
        match self {
            Drive::Voltage(v) => Some(*v),
            Drive::HighZ => None,
        }
    }
}

/// Outcome of one DC solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Max |KCL residual| over all internal nodes, amperes.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} Newton iterations (best residual {residual:.3e} A)")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("jacobian factorization failed at iteration {0}")]
    FactorizationFailed(usize),
}

/// Solved node voltages and bit-line terminal currents.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// Word-line node voltages, row-major R×C.
    pub wl_v: Vec<f64>,
    /// Bit-line node voltages, row-major R×C.
    pub bl_v: Vec<f64>,
    /// Current into each bit-line terminal, amperes (zero for HighZ lines).
    pub bl_currents: Vec<f64>,
    pub report: SolveReport,
}

const KCL_TOL: f64 = 1e-9;
const MAX_NEWTON_ITER: usize = 100;
const MAX_DAMPING_HALVINGS: usize = 6;
const G_MIN: f64 = 1e-12;

/// Array of cells with lead resistance and cached node-voltage state.
pub struct Crossbar {
    pub rows: usize,
    pub cols: usize,
    /// Lead resistance per segment, ohms. Zero selects the decoupled path.
    pub lead_r: f64,
    /// Cells in row-major order.
    pub cells: Vec<CellState>,
    wl_v: Vec<f64>,
    bl_v: Vec<f64>,
    warm: bool,
}

impl Crossbar {
    /// Build an array of freshly sampled cells.
    pub fn new<R: rand::Rng>(
        model: &ModelParams,
        rows: usize,
        cols: usize,
        lead_r: f64,
        rng: &mut R,
    ) -> Self {
        assert!(rows >= 1 && cols >= 1 && lead_r >= 0.0);
        let cells = (0..rows * cols).map(|_| CellState::new(model, rng)).collect();
        Self::from_cells(rows, cols, lead_r, cells)
    }

    pub fn from_cells(rows: usize, cols: usize, lead_r: f64, cells: Vec<CellState>) -> Self {
        assert_eq!(cells.len(), rows * cols);
        Self {
            rows,
            cols,
            lead_r,
            cells,
            wl_v: vec![0.0; rows * cols],
            bl_v: vec![0.0; rows * cols],
            warm: false,
        }
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &CellState {
        &self.cells[i * self.cols + j]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut CellState {
        &mut self.cells[i * self.cols + j]
    }

    /// Last solved word-line node voltage at (i, j).
    pub fn wl_voltage(&self, i: usize, j: usize) -> f64 {
        self.wl_v[i * self.cols + j]
    }

    /// Last solved bit-line node voltage at (i, j).
    pub fn bl_voltage(&self, i: usize, j: usize) -> f64 {
        self.bl_v[i * self.cols + j]
    }

    /// SET every cell once (one full-negative-amplitude pulse applied
    /// directly at the cell), leaving the array in its low-resistance state.
    pub fn initialize_lrs(&mut self, model: &ModelParams) {
        for cell in self.cells.iter_mut() {
            cell.apply_voltage(model, model.v_min);
        }
    }

    /// Node index with the shorter dimension innermost so the coupled system
    /// stays narrow-banded; bandwidth = 2·min(rows, cols) + 1 worst case.
    #[inline]
    fn node(&self, i: usize, j: usize, layer: usize) -> usize {
        if self.cols <= self.rows {
            (i * self.cols + j) * 2 + layer
        } else {
            (j * self.rows + i) * 2 + layer
        }
    }

    fn bandwidth(&self) -> usize {
        2 * self.cols.min(self.rows) + 1
    }

    /// Solve the DC operating point for the given boundary drives. Cells
    /// hold their mixing state fixed during the solve (quasi-static).
    pub fn solve_dc(
        &mut self,
        iv: &IvShape,
        wl_drive: &[Drive],
        bl_drive: &[Drive],
    ) -> Result<SolveOutput, SolveError> {
        assert_eq!(wl_drive.len(), self.rows);
        assert_eq!(bl_drive.len(), self.cols);
        for d in wl_drive.iter().chain(bl_drive) {
            if let Drive::Voltage(v) = d {
                if !v.is_finite() {
                    return Err(SolveError::InvalidDrive("non-finite drive voltage".into()));
                }
            }
        }
        if self.lead_r == 0.0 {
            return self.solve_decoupled(iv, wl_drive, bl_drive);
        }
        if wl_drive.iter().chain(bl_drive).all(|d| matches!(d, Drive::HighZ)) {
            return Err(SolveError::InvalidDrive(
                "all lines high-impedance: floating network".into(),
            ));
        }
        self.solve_newton(iv, wl_drive, bl_drive)
    }

    /// lead_r = 0: every cell sees (wl − bl) directly; bit-line current is a
    /// row sum. Linear time, no iteration.
    fn solve_decoupled(
        &mut self,
        iv: &IvShape,
        wl_drive: &[Drive],
        bl_drive: &[Drive],
    ) -> Result<SolveOutput, SolveError> {
        let take = |d: &Drive, what: &str| {
            d.voltage().ok_or_else(|| {
                SolveError::InvalidDrive(format!(
                    "high-impedance {what} is unsupported with zero lead resistance"
                ))
            })
        };
        let mut wl = Vec::with_capacity(self.rows);
        for d in wl_drive {
            wl.push(take(d, "word line")?);
        }
        let mut bl = Vec::with_capacity(self.cols);
        for d in bl_drive {
            bl.push(take(d, "bit line")?);
        }
        let mut bl_currents = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.wl_v[i * self.cols + j] = wl[i];
                self.bl_v[i * self.cols + j] = bl[j];
                bl_currents[j] += self.cell(i, j).static_current(iv, wl[i] - bl[j]);
            }
        }
        self.warm = true;
        Ok(SolveOutput {
            wl_v: self.wl_v.clone(),
            bl_v: self.bl_v.clone(),
            bl_currents,
            report: SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        })
    }

    fn solve_newton(
        &mut self,
        iv: &IvShape,
        wl_drive: &[Drive],
        bl_drive: &[Drive],
    ) -> Result<SolveOutput, SolveError> {
        let (rows, cols) = (self.rows, self.cols);
        let n = 2 * rows * cols;
        let g_lead = 1.0 / self.lead_r;

        let mut u = vec![0.0; n];
        if self.warm {
            for i in 0..rows {
                for j in 0..cols {
                    u[self.node(i, j, 0)] = self.wl_v[i * cols + j];
                    u[self.node(i, j, 1)] = self.bl_v[i * cols + j];
                }
            }
        } else {
            for i in 0..rows {
                for j in 0..cols {
                    u[self.node(i, j, 0)] = wl_drive[i].voltage().unwrap_or(0.0);
                    u[self.node(i, j, 1)] = bl_drive[j].voltage().unwrap_or(0.0);
                }
            }
        }

        let mut residual = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut delta = vec![0.0; n];
        let mut jac = BandMatrix::zeros(n, self.bandwidth());

        let mut best_res = f64::INFINITY;
        let mut res_norm = self.kcl_residual(iv, &u, wl_drive, bl_drive, g_lead, &mut residual);
        for iter in 0..MAX_NEWTON_ITER {
            if res_norm < KCL_TOL {
                // One best-effort polish step: quadratic convergence drives
                // the residual far below tolerance, pinning node voltages
                // much tighter than the ampere threshold alone implies.
                self.assemble_jacobian(iv, &u, wl_drive, bl_drive, g_lead, &mut jac);
                if jac.cholesky_in_place().is_some() {
                    delta.copy_from_slice(&residual);
                    jac.solve_factored(&mut delta);
                    for k in 0..n {
                        trial[k] = u[k] - delta[k];
                    }
                    let r = self.kcl_residual(iv, &trial, wl_drive, bl_drive, g_lead, &mut residual);
                    if r < res_norm {
                        u.copy_from_slice(&trial);
                        res_norm = r;
                    }
                }
                for i in 0..rows {
                    for j in 0..cols {
                        self.wl_v[i * cols + j] = u[self.node(i, j, 0)];
                        self.bl_v[i * cols + j] = u[self.node(i, j, 1)];
                    }
                }
                self.warm = true;
                let bl_currents = self.terminal_currents(bl_drive, g_lead);
                return Ok(SolveOutput {
                    wl_v: self.wl_v.clone(),
                    bl_v: self.bl_v.clone(),
                    bl_currents,
                    report: SolveReport {
                        iterations: iter,
                        residual: res_norm,
                        converged: true,
                    },
                });
            }
            best_res = best_res.min(res_norm);

            self.assemble_jacobian(iv, &u, wl_drive, bl_drive, g_lead, &mut jac);
            delta.copy_from_slice(&residual);
            jac.cholesky_in_place()
                .ok_or(SolveError::FactorizationFailed(iter))?;
            jac.solve_factored(&mut delta);

            // Damped step: halve until the residual improves (≤ 6 halvings),
            // then take the best candidate.
            let mut alpha = 1.0;
            let mut best_candidate: Option<(f64, f64)> = None; // (res, alpha)
            for _ in 0..=MAX_DAMPING_HALVINGS {
                for k in 0..n {
                    trial[k] = u[k] - alpha * delta[k];
                }
                let r = self.kcl_residual(iv, &trial, wl_drive, bl_drive, g_lead, &mut residual);
                if best_candidate.map_or(true, |(br, _)| r < br) {
                    best_candidate = Some((r, alpha));
                }
                if r < res_norm {
                    break;
                }
                alpha *= 0.5;
            }
            let (r, a) = best_candidate.unwrap();
            for k in 0..n {
                u[k] -= a * delta[k];
            }
            res_norm = if a == alpha {
                r
            } else {
                self.kcl_residual(iv, &u, wl_drive, bl_drive, g_lead, &mut residual)
            };
        }
        Err(SolveError::NoConvergence {
            iterations: MAX_NEWTON_ITER,
            residual: best_res.min(res_norm),
        })
    }

    /// KCL residual (current leaving each node); returns max |entry|. Also
    /// fills `out` for the Newton right-hand side.
    fn kcl_residual(
        &self,
        iv: &IvShape,
        u: &[f64],
        wl_drive: &[Drive],
        bl_drive: &[Drive],
        g_lead: f64,
        out: &mut [f64],
    ) -> f64 {
        let (rows, cols) = (self.rows, self.cols);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut max_abs = 0.0f64;
        for i in 0..rows {
            for j in 0..cols {
                let nw = self.node(i, j, 0);
                let nb = self.node(i, j, 1);
                let vw = u[nw];
                let vb = u[nb];
                let mut fw = 0.0;
                let mut fb = 0.0;
                // Word-line lead segments (chain along j, driven at west end).
                if j == 0 {
                    if let Some(vd) = wl_drive[i].voltage() {
                        fw += g_lead * (vw - vd);
                    }
                } else {
                    fw += g_lead * (vw - u[self.node(i, j - 1, 0)]);
                }
                if j + 1 < cols {
                    fw += g_lead * (vw - u[self.node(i, j + 1, 0)]);
                }
                // Bit-line lead segments (chain along i, driven at south end).
                if i + 1 < rows {
                    fb += g_lead * (vb - u[self.node(i + 1, j, 1)]);
                } else if let Some(vd) = bl_drive[j].voltage() {
                    fb += g_lead * (vb - vd);
                }
                if i > 0 {
                    fb += g_lead * (vb - u[self.node(i - 1, j, 1)]);
                }
                // Device current flows from the word-line node into the
                // bit-line node.
                let idev = self.cell(i, j).static_current(iv, vw - vb);
                fw += idev;
                fb -= idev;
                out[nw] += fw;
                out[nb] += fb;
                max_abs = max_abs.max(out[nw].abs()).max(out[nb].abs());
            }
        }
        max_abs
    }

    fn assemble_jacobian(
        &self,
        iv: &IvShape,
        u: &[f64],
        wl_drive: &[Drive],
        bl_drive: &[Drive],
        g_lead: f64,
        jac: &mut BandMatrix,
    ) {
        // Two-terminal conductance stamp between nodes a and b.
        fn stamp(jac: &mut BandMatrix, a: usize, b: usize, g: f64) {
            jac.add(a, a, g);
            jac.add(b, b, g);
            if a >= b {
                jac.add(a, b, -g);
            } else {
                jac.add(b, a, -g);
            }
        }
        let (rows, cols) = (self.rows, self.cols);
        jac.clear();
        for i in 0..rows {
            for j in 0..cols {
                let nw = self.node(i, j, 0);
                let nb = self.node(i, j, 1);
                // Grounded (driven) segments only touch the diagonal.
                if j == 0 {
                    if wl_drive[i].voltage().is_some() {
                        jac.add(nw, nw, g_lead);
                    }
                } else {
                    stamp(jac, nw, self.node(i, j - 1, 0), g_lead);
                }
                if i + 1 == rows {
                    if bl_drive[j].voltage().is_some() {
                        jac.add(nb, nb, g_lead);
                    }
                } else {
                    stamp(jac, nb, self.node(i + 1, j, 1), g_lead);
                }
                let vd = u[nw] - u[nb];
                let g_dev = self.cell(i, j).conductance(iv, vd).max(G_MIN);
                stamp(jac, nw, nb, g_dev);
            }
        }
    }

    fn terminal_currents(&self, bl_drive: &[Drive], g_lead: f64) -> Vec<f64> {
        (0..self.cols)
            .map(|j| match bl_drive[j].voltage() {
                Some(vd) => g_lead * (self.bl_v[(self.rows - 1) * self.cols + j] - vd),
                None => 0.0,
            })
            .collect()
    }

    /// Read the whole array: every word line driven at `v_read`, every bit
    /// line grounded. Returns the per-cell current estimate matrix and the
    /// bit-line terminal currents. Cell state is not mutated (read voltages
    /// sit below every switching threshold by construction of the generated
    /// features).
    pub fn read_all(&mut self, iv: &IvShape, v_read: f64) -> Result<ReadOutput, SolveError> {
        let wl = vec![Drive::Voltage(v_read); self.rows];
        let bl = vec![Drive::Voltage(0.0); self.cols];
        let out = self.solve_dc(iv, &wl, &bl)?;
        let mut cell_currents = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = i * self.cols + j;
                cell_currents[k] = self
                    .cell(i, j)
                    .static_current(iv, out.wl_v[k] - out.bl_v[k]);
            }
        }
        Ok(ReadOutput {
            cell_currents,
            bl_currents: out.bl_currents,
            report: out.report,
        })
    }

    /// Half-select write: the selected word line carries the full amplitude,
    /// the selected bit line is grounded, every other line carries half the
    /// amplitude. After the solve, every cell experiences its solved terminal
    /// difference as a quasi-static write event, then the array returns to
    /// rest.
    pub fn write_cell(
        &mut self,
        model: &ModelParams,
        sel_i: usize,
        sel_j: usize,
        v_w: f64,
    ) -> Result<SolveReport, SolveError> {
        assert!(sel_i < self.rows && sel_j < self.cols);
        if !(v_w > 0.0 && v_w <= model.iv.max_voltage) {
            return Err(SolveError::InvalidDrive(format!(
                "write amplitude {v_w} outside (0, {}]",
                model.iv.max_voltage
            )));
        }
        let half = 0.5 * v_w;
        let wl: Vec<Drive> = (0..self.rows)
            .map(|i| Drive::Voltage(if i == sel_i { v_w } else { half }))
            .collect();
        let bl: Vec<Drive> = (0..self.cols)
            .map(|j| Drive::Voltage(if j == sel_j { 0.0 } else { half }))
            .collect();
        let out = self.solve_dc(&model.iv, &wl, &bl)?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = i * self.cols + j;
                let vd = out.wl_v[k] - out.bl_v[k];
                self.cells[k].apply_voltage(model, vd);
            }
        }
        Ok(out.report)
    }

    /// Map target values in [0, 1] linearly onto [v_lo, v_hi] and write the
    /// whole array sequentially with the half-select scheme. The array must
    /// already be in its low-resistance state (see [`Self::initialize_lrs`]).
    pub fn write_image(
        &mut self,
        model: &ModelParams,
        targets: &[f64],
        v_lo: f64,
        v_hi: f64,
    ) -> Result<WriteImageReport, SolveError> {
        assert_eq!(targets.len(), self.rows * self.cols);
        assert!(v_hi >= v_lo);
        let start = Instant::now();
        let mut worst_residual = 0.0f64;
        let mut iterations = 0usize;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let t = targets[i * self.cols + j].clamp(0.0, 1.0);
                let v_w = v_lo + t * (v_hi - v_lo);
                let report = self.write_cell(model, i, j, v_w)?;
                worst_residual = worst_residual.max(report.residual);
                iterations += report.iterations;
            }
        }
        let wall_s = start.elapsed().as_secs_f64();
        let writes = self.rows * self.cols;
        Ok(WriteImageReport {
            writes,
            wall_s,
            ops: writes as f64 / wall_s,
            worst_residual,
            newton_iterations: iterations,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReadOutput {
    /// Per-cell current estimates, row-major R×C.
    pub cell_currents: Vec<f64>,
    pub bl_currents: Vec<f64>,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WriteImageReport {
    pub writes: usize,
    pub wall_s: f64,
    /// Devices written divided by total wall time.
    pub ops: f64,
    pub worst_residual: f64,
    pub newton_iterations: usize,
}
