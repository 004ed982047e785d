//! Minimal PGM (P2 ASCII / P5 binary) image reader and writer.
//!
//! Images are exchanged as row-major grayscale matrices normalized to
//! [0, 1]; write targets and readback maps both use this format.

use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels in [0, 1].
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Nearest-neighbor resample to a new size.
    pub fn resample(&self, width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let sy = y * self.height / height;
                let sx = x * self.width / width;
                pixels.push(self.pixels[sy * self.width + sx]);
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("not a PGM file (magic `{0}`)")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("truncated pixel data: expected {expected}, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Write binary (P5) PGM with 8-bit depth.
pub fn write_pgm<W: Write>(img: &GrayImage, mut w: W) -> std::io::Result<()> {
    writeln!(w, "P5")?;
    writeln!(w, "{} {}", img.width, img.height)?;
    writeln!(w, "255")?;
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)
}

/// Write ASCII (P2) PGM with 8-bit depth.
pub fn write_pgm_ascii<W: Write>(img: &GrayImage, mut w: W) -> std::io::Result<()> {
    writeln!(w, "P2")?;
    writeln!(w, "{} {}", img.width, img.height)?;
    writeln!(w, "255")?;
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row
            .iter()
            .map(|&p| ((p.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Read either P2 or P5, any maxval up to 65535 (P5 > 255 is big-endian
/// 16-bit per the format).
pub fn read_pgm<R: Read>(mut r: R) -> Result<GrayImage, PgmError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut pos = 0usize;

    fn next_token(data: &[u8], pos: &mut usize) -> Option<String> {
        // Skip whitespace and `#` comments.
        loop {
            while *pos < data.len() && data[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < data.len() && data[*pos] == b'#' {
                while *pos < data.len() && data[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        if *pos >= data.len() {
            return None;
        }
        let start = *pos;
        while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        Some(String::from_utf8_lossy(&data[start..*pos]).into_owned())
    }

    let magic = next_token(&data, &mut pos).ok_or_else(|| PgmError::BadMagic(String::new()))?;
    if magic != "P2" && magic != "P5" {
        return Err(PgmError::BadMagic(magic));
    }
    let parse_dim = |tok: Option<String>, what: &str| -> Result<usize, PgmError> {
        tok.ok_or_else(|| PgmError::BadHeader(format!("missing {what}")))?
            .parse()
            .map_err(|_| PgmError::BadHeader(format!("bad {what}")))
    };
    let width = parse_dim(next_token(&data, &mut pos), "width")?;
    let height = parse_dim(next_token(&data, &mut pos), "height")?;
    let maxval = parse_dim(next_token(&data, &mut pos), "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(PgmError::BadHeader(format!(
            "dimensions {width}x{height} maxval {maxval}"
        )));
    }
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if magic == "P2" {
        for _ in 0..count {
            let tok = next_token(&data, &mut pos).ok_or(PgmError::Truncated {
                expected: count,
                got: pixels.len(),
            })?;
            let v: u32 = tok
                .parse()
                .map_err(|_| PgmError::BadHeader(format!("bad pixel `{tok}`")))?;
            pixels.push(v as f64 / maxval as f64);
        }
    } else {
        // Single whitespace byte separates the header from binary data.
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        if data.len() < pos + need {
            return Err(PgmError::Truncated {
                expected: need,
                got: data.len().saturating_sub(pos),
            });
        }
        for k in 0..count {
            let v = if wide {
                u16::from_be_bytes([data[pos + 2 * k], data[pos + 2 * k + 1]]) as u32
            } else {
                data[pos + k] as u32
            };
            pixels.push(v as f64 / maxval as f64);
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

/// A deterministic synthetic test card: smooth gradients plus blocks, giving
/// a wide, structured pixel distribution for write/read demos.
pub fn test_card(width: usize, height: usize) -> GrayImage {
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / width.max(1) as f64;
            let fy = y as f64 / height.max(1) as f64;
            let diag = 0.5 * (fx + fy);
            let rings = 0.5 + 0.5 * (12.0 * ((fx - 0.5).powi(2) + (fy - 0.5).powi(2))).cos();
            let block = if (4.0 * fx) as usize % 2 == (4.0 * fy) as usize % 2 {
                0.8
            } else {
                0.2
            };
            pixels.push((0.5 * diag + 0.3 * rings + 0.2 * block).clamp(0.0, 1.0));
        }
    }
    GrayImage {
        width,
        height,
        pixels,
    }
}
