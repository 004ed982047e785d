//! Read/write throughput harness.
//!
//! Throughput is reported as OPS: the number of devices involved in the
//! read or write operation divided by the total wall time. Independent mode
//! evaluates every cell directly (equivalent to a crossbar with zero lead
//! resistance but without enforcing connectivity); crossbar mode runs the
//! coupled nodal solve. Large crossbar writes time a 16×16 sub-block, the
//! whole-array write being impractical at the larger sizes.

use crate::cell::{CellState, ModelParams};
use crate::crossbar::{Crossbar, SolveError};
use serde::Serialize;
use std::hint::black_box;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub op: String,
    pub mode: String,
    /// Devices involved per operation.
    pub devices: usize,
    pub repeats: usize,
    pub rows: usize,
    pub cols: usize,
    pub lead_r: f64,
    pub wall_s: f64,
    /// devices · repeats / wall_s.
    pub ops: f64,
    pub seed: u64,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn build_cells(model: &ModelParams, count: usize, seed: u64) -> Vec<CellState> {
    (0..count)
        .map(|i| CellState::from_seed(model, mix_seed(seed, i as u64)))
        .collect()
}

/// Parallel read of `count` independent cells at the read voltage, repeated.
pub fn read_independent(
    model: &ModelParams,
    count: usize,
    repeats: usize,
    seed: u64,
) -> BenchReport {
    let cells = build_cells(model, count, seed);
    let iv = &model.iv;
    let v_read = 0.2;
    let start = Instant::now();
    let mut acc = 0.0;
    for _ in 0..repeats {
        for cell in &cells {
            acc += cell.static_current(iv, v_read);
        }
    }
    let wall_s = start.elapsed().as_secs_f64();
    black_box(acc);
    BenchReport {
        op: "read".into(),
        mode: "independent".into(),
        devices: count,
        repeats,
        rows: count,
        cols: 1,
        lead_r: 0.0,
        wall_s,
        ops: (count * repeats) as f64 / wall_s,
        seed,
    }
}

/// Write all independent cells once per repeat, alternating a SET-range and
/// a RESET-range amplitude so each event moves device state.
pub fn write_independent(
    model: &ModelParams,
    count: usize,
    repeats: usize,
    seed: u64,
) -> BenchReport {
    let mut cells = build_cells(model, count, seed);
    let v_set_pulse = model.v_min * 0.85;
    let v_reset_pulse = model.iv.max_voltage * 0.7;
    let start = Instant::now();
    let mut acc = 0.0;
    for rep in 0..repeats {
        let v = if rep % 2 == 0 { v_set_pulse } else { v_reset_pulse };
        for cell in cells.iter_mut() {
            acc += cell.apply_voltage(model, v);
        }
    }
    let wall_s = start.elapsed().as_secs_f64();
    black_box(acc);
    BenchReport {
        op: "write".into(),
        mode: "independent".into(),
        devices: count,
        repeats,
        rows: count,
        cols: 1,
        lead_r: 0.0,
        wall_s,
        ops: (count * repeats) as f64 / wall_s,
        seed,
    }
}

/// Read a crossbar-connected array (coupled solve when lead_r > 0).
pub fn read_crossbar(
    model: &ModelParams,
    rows: usize,
    cols: usize,
    lead_r: f64,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport, SolveError> {
    let cells = build_cells(model, rows * cols, seed);
    let mut net = Crossbar::from_cells(rows, cols, lead_r, cells);
    let start = Instant::now();
    let mut acc = 0.0;
    for _ in 0..repeats {
        let out = net.read_all(&model.iv, 0.2)?;
        acc += out.bl_currents.iter().sum::<f64>();
    }
    let wall_s = start.elapsed().as_secs_f64();
    black_box(acc);
    Ok(BenchReport {
        op: "read".into(),
        mode: "crossbar".into(),
        devices: rows * cols,
        repeats,
        rows,
        cols,
        lead_r,
        wall_s,
        ops: (rows * cols * repeats) as f64 / wall_s,
        seed,
    })
}

/// Write a 16×16 sub-block (or the whole array if smaller) with the
/// half-select scheme, alternating amplitudes between repeats.
pub fn write_crossbar(
    model: &ModelParams,
    rows: usize,
    cols: usize,
    lead_r: f64,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport, SolveError> {
    let cells = build_cells(model, rows * cols, seed);
    let mut net = Crossbar::from_cells(rows, cols, lead_r, cells);
    net.initialize_lrs(model);
    let block_r = rows.min(16);
    let block_c = cols.min(16);
    let vmax = model.iv.max_voltage;
    let start = Instant::now();
    for rep in 0..repeats {
        let v_w = if rep % 2 == 0 { 0.55 * vmax } else { 0.7 * vmax };
        for i in 0..block_r {
            for j in 0..block_c {
                net.write_cell(model, i, j, v_w)?;
            }
        }
    }
    let wall_s = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        op: "write".into(),
        mode: "crossbar".into(),
        devices: block_r * block_c,
        repeats,
        rows,
        cols,
        lead_r,
        wall_s,
        ops: (block_r * block_c * repeats) as f64 / wall_s,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthio::reference_params;

    #[test]
    fn independent_read_reports_positive_ops() {
        let model = reference_params();
        let report = read_independent(&model, 256, 4, 1);
        assert!(report.ops > 0.0);
        assert_eq!(report.devices, 256);
    }

    #[test]
    fn crossbar_write_times_a_sub_block() {
        let model = reference_params();
        let report = write_crossbar(&model, 20, 20, 5.0, 1, 2).unwrap();
        assert_eq!(report.devices, 256);
        assert!(report.ops > 0.0);
    }
}
