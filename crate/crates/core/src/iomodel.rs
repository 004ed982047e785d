//! Model-file serialization and HDL parameter-source emission.
//!
//! The model file is a JSON document with every float written as a
//! 17-significant-digit decimal, which round-trips f64 bit-exactly and makes
//! save → load → save byte-identical. Unknown fields are rejected on load.

use crate::cell::ModelParams;
use crate::features::SweepDataset;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    pub dataset_hash: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub meta: ModelMeta,
    pub model: ModelParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at line {line}, column {column}: {detail}")]
    ParseError {
        line: usize,
        column: usize,
        detail: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// JSON formatter that writes every f64 with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{}", fmt_f64(value))
    }
}

/// 17-significant-digit scientific notation; enough digits to reproduce any
/// f64 exactly on parse.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serialize a model (plus metadata) to canonical bytes.
pub fn model_to_bytes(model: &ModelParams, meta: &ModelMeta) -> Vec<u8> {
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        meta: meta.clone(),
        model: model.clone(),
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    file.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    out
}

pub fn save_model(model: &ModelParams, meta: &ModelMeta, path: &Path) -> Result<(), ModelIoError> {
    let bytes = model_to_bytes(model, meta);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(ModelParams, ModelMeta), ModelIoError> {
    let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ModelIoError::SchemaMismatch(e.to_string()),
        _ => ModelIoError::ParseError {
            line: e.line(),
            column: e.column(),
            detail: e.to_string(),
        },
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ModelIoError::SchemaMismatch(format!(
            "schema_version {} (supported: {})",
            file.schema_version, SCHEMA_VERSION
        )));
    }
    Ok((file.model, file.meta))
}

pub fn load_model(path: &Path) -> Result<(ModelParams, ModelMeta), ModelIoError> {
    let bytes = std::fs::read(path)?;
    model_from_bytes(&bytes)
}

/// FNV-1a fingerprint of a dataset's raw samples; recorded in the model file
/// so a trained artifact can be traced to its corpus.
pub fn dataset_fingerprint(ds: &SweepDataset) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    };
    eat(&(ds.devices() as u64).to_le_bytes());
    eat(&(ds.cycles() as u64).to_le_bytes());
    for dev in &ds.traces {
        for trace in dev {
            for s in trace {
                eat(&s[0].to_bits().to_le_bytes());
                eat(&s[1].to_bits().to_le_bytes());
            }
        }
    }
    format!("fnv1a:{h:016x}")
}

/// Emit a Verilog-A module skeleton with the trained constants inlined as
/// parameter arrays. The source is structural (two electrical terminals, a
/// static contribution statement); it is not executed by any test.
pub fn emit_hdl(model: &ModelParams) -> String {
    let p = model.var.p;
    let mut a_flat = Vec::with_capacity(16);
    for row in &model.var.contemporaneous {
        a_flat.extend_from_slice(row);
    }
    let mut b_flat = Vec::with_capacity(16 * p);
    for lag in &model.var.lags {
        for row in lag {
            b_flat.extend_from_slice(row);
        }
    }
    let mut c_flat = Vec::with_capacity(16);
    for row in &model.var.noise {
        c_flat.extend_from_slice(row);
    }
    let mut gamma_flat = Vec::with_capacity(20);
    for coeffs in &model.quantile.coeffs {
        gamma_flat.extend_from_slice(coeffs);
    }

    let array = |name: &str, vals: &[f64]| -> String {
        let body: Vec<String> = vals.iter().map(|&v| fmt_f64(v)).collect();
        format!(
            "  parameter real {}[0:{}] = {{{}}};\n",
            name,
            vals.len() - 1,
            body.join(", ")
        )
    };
    let scalar =
        |name: &str, v: f64| -> String { format!("  parameter real {} = {};\n", name, fmt_f64(v)) };

    let mut s = String::new();
    s.push_str("// Generated device model parameter source. Two-terminal resistive\n");
    s.push_str("// memory cell: state variable r in [0,1] mixes the two limiting\n");
    s.push_str("// polynomials; SET/RESET updates follow the trained feature process.\n");
    s.push_str("`include \"constants.vams\"\n`include \"disciplines.vams\"\n\n");
    s.push_str("module revar_cell(te, be);\n");
    s.push_str("  inout te, be;\n");
    s.push_str("  electrical te, be;\n\n");
    s.push_str(&format!("  parameter integer LAG_ORDER = {p};\n"));
    s.push_str(&array("A", &a_flat));
    s.push_str(&array("B", &b_flat));
    s.push_str(&array("C", &c_flat));
    s.push_str(&array("GAMMA", &gamma_flat));
    s.push_str(&array("I_HI", &model.iv.hrs_coeffs));
    s.push_str(&array("I_LO", &model.iv.lrs_coeffs));
    s.push_str(&scalar("RESET_CURVATURE", model.iv.reset_curvature));
    s.push_str(&scalar("V_EVAL", model.iv.eval_voltage));
    s.push_str(&scalar("V_MAX", model.iv.max_voltage));
    s.push_str(&scalar("V_MIN", model.v_min));
    s.push_str("\n  real r;\n  real v;\n  real i_hi;\n  real i_lo;\n\n");
    s.push_str("  analog begin\n");
    s.push_str("    @(initial_step) begin\n      r = 1.0;\n    end\n");
    s.push_str("    v = V(te, be);\n");
    s.push_str("    i_hi = v*(I_HI[1] + v*(I_HI[2] + v*(I_HI[3] + v*(I_HI[4] + v*I_HI[5]))));\n");
    s.push_str(
        "    i_lo = v*(I_LO[1] + v*(I_LO[2] + v*(I_LO[3] + v*(I_LO[4] + v*(I_LO[5] + v*I_LO[6])))));\n",
    );
    s.push_str("    I(te, be) <+ r*i_hi + (1.0 - r)*i_lo;\n");
    s.push_str("  end\nendmodule\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthio::reference_params;

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = reference_params();
        let meta = ModelMeta {
            seed: Some(42),
            dataset_hash: Some("fnv1a:0123456789abcdef".into()),
        };
        let first = model_to_bytes(&model, &meta);
        let (loaded, meta2) = model_from_bytes(&first).unwrap();
        let second = model_to_bytes(&loaded, &meta2);
        assert_eq!(first, second);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = reference_params();
        let bytes = model_to_bytes(&model, &ModelMeta::default());
        let (loaded, _) = model_from_bytes(&bytes).unwrap();
        assert_eq!(loaded, model);
        // Spot-check a few awkward values bit for bit.
        assert_eq!(
            loaded.iv.hrs_coeffs[1].to_bits(),
            model.iv.hrs_coeffs[1].to_bits()
        );
        assert_eq!(
            loaded.gmm.covariances[0][0][1].to_bits(),
            model.gmm.covariances[0][0][1].to_bits()
        );
    }

    #[test]
    fn f64_format_survives_worst_cases() {
        for &v in &[
            1.0 / 3.0,
            -0.0,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
            5e-324,
            std::f64::consts::PI,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "value {v} via `{s}`");
        }
    }

    #[test]
    fn missing_field_is_schema_mismatch() {
        let model = reference_params();
        let bytes = model_to_bytes(&model, &ModelMeta::default());
        let text = String::from_utf8(bytes).unwrap();
        // Drop the lag order from the process record.
        let broken = text.replacen("\"p\":10,", "", 1);
        assert_ne!(text, broken);
        match model_from_bytes(broken.as_bytes()) {
            Err(ModelIoError::SchemaMismatch(msg)) => {
                assert!(msg.contains('p'), "message should name the field: {msg}")
            }
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let model = reference_params();
        let bytes = model_to_bytes(&model, &ModelMeta::default());
        let text = String::from_utf8(bytes).unwrap();
        let broken = text.replacen(
            "\"schema_version\":",
            "\"surprise\":1,\"schema_version\":",
            1,
        );
        assert!(matches!(
            model_from_bytes(broken.as_bytes()),
            Err(ModelIoError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn syntax_error_reports_position() {
        match model_from_bytes(b"{ not json") {
            Err(ModelIoError::ParseError { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let model = reference_params();
        let bytes = model_to_bytes(&model, &ModelMeta::default());
        let text = String::from_utf8(bytes).unwrap();
        let broken = text.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
        assert!(matches!(
            model_from_bytes(broken.as_bytes()),
            Err(ModelIoError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn hdl_has_two_terminals_and_contribution() {
        let text = emit_hdl(&reference_params());
        assert!(text.contains("module revar_cell(te, be);"));
        assert!(text.contains("electrical te, be;"));
        assert!(text.contains("I(te, be) <+"));
        assert!(text.contains("endmodule"));
    }

    #[test]
    fn hdl_b_array_has_16p_entries() {
        let model = reference_params();
        let text = emit_hdl(&model);
        assert!(text.contains("parameter real B[0:159]"), "p=10 -> 160 entries");
        let line = text
            .lines()
            .find(|l| l.contains("parameter real B[0:"))
            .unwrap();
        let body = line.split('{').nth(1).unwrap().split('}').next().unwrap();
        assert_eq!(body.split(',').count(), 160);
    }

    #[test]
    fn hdl_self_parse_matches_model_bitwise() {
        let model = reference_params();
        let text = emit_hdl(&model);
        let extract = |name: &str| -> Vec<f64> {
            let tag = format!("parameter real {name}[");
            let line = text.lines().find(|l| l.contains(&tag)).unwrap();
            let body = line.split('{').nth(1).unwrap().split('}').next().unwrap();
            body.split(',').map(|t| t.trim().parse().unwrap()).collect()
        };
        let a = extract("A");
        let mut want = Vec::new();
        for row in &model.var.contemporaneous {
            want.extend_from_slice(row);
        }
        assert_eq!(a.len(), 16);
        for (x, y) in a.iter().zip(&want) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let ih = extract("I_HI");
        assert_eq!(ih.len(), 6);
        for (x, y) in ih.iter().zip(&model.iv.hrs_coeffs) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let il = extract("I_LO");
        assert_eq!(il.len(), 7);
        let gamma = extract("GAMMA");
        assert_eq!(gamma.len(), 20);
        let c = extract("C");
        assert_eq!(c.len(), 16);
    }

    #[test]
    fn fingerprint_is_stable_and_content_sensitive() {
        let ds = SweepDataset {
            traces: vec![vec![vec![[0.5, 1e-5], [1.0, 2e-5]]]],
            v_min: -1.5,
            v_max: 2.0,
        };
        let a = dataset_fingerprint(&ds);
        let b = dataset_fingerprint(&ds);
        assert_eq!(a, b);
        let mut ds2 = ds.clone();
        ds2.traces[0][0][0][1] = 1.1e-5;
        let c = dataset_fingerprint(&ds2);
        assert_ne!(a, c);
    }
}
