//! Scene ingestion from CSV grids (lux) or PGM images ("P2"/"P5").

use std::fs;
use std::path::Path;

use crate::array::Scene;
use crate::error::{FpdError, Result};

/// Load a scene. PGM files (by magic number) map gray `g` to
/// `g / maxval * lux_max`; anything else is read as a CSV grid of lux.
pub fn load_scene(path: impl AsRef<Path>, lux_max: f64) -> Result<Scene> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FpdError::io(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes, lux_max)
    } else {
        parse_csv_scene(&bytes)
    }
}

/// Check that a loaded scene matches the configured panel size.
pub fn expect_dims(scene: &Scene, rows: usize, cols: usize) -> Result<()> {
    if (scene.rows, scene.cols) != (rows, cols) {
        return Err(FpdError::domain(format!(
            "scene is {}x{} but config declares {rows}x{cols}",
            scene.rows, scene.cols
        )));
    }
    Ok(())
}

pub fn parse_csv_scene(bytes: &[u8]) -> Result<Scene> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FpdError::domain(format!("scene csv: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let width = *cols.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(FpdError::domain(format!(
                "scene csv line {}: ragged row with {} values, expected {width}",
                n + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| {
                FpdError::domain(format!("scene csv line {}: bad number `{field}`", n + 1))
            })?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FpdError::domain(format!(
                    "scene csv line {}: illuminance must be >= 0, got {v}",
                    n + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| FpdError::domain("scene csv is empty"))?;
    Scene::new(rows, cols, values)
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FpdError::domain(format!("pgm: expected {what}")))
    }
}

pub fn parse_pgm(bytes: &[u8], lux_max: f64) -> Result<Scene> {
    if !(lux_max > 0.0 && lux_max.is_finite()) {
        return Err(FpdError::domain(format!("lux_max must be > 0, got {lux_max}")));
    }
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(FpdError::domain("pgm: missing P2/P5 magic")),
    };
    let mut tok = Tokens { bytes, pos: 2 };
    let width = tok.next_uint("width")? as usize;
    let height = tok.next_uint("height")? as usize;
    let maxval = tok.next_uint("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(FpdError::domain(format!(
            "pgm: invalid header {width}x{height} maxval {maxval}"
        )));
    }
    let n = width * height;
    let mut gray = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tok.pos + 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + n * depth)
            .ok_or_else(|| FpdError::domain("pgm: raster is truncated"))?;
        for px in raster.chunks_exact(depth) {
            gray.push(match depth {
                1 => px[0] as u32,
                _ => u16::from_be_bytes([px[0], px[1]]) as u32,
            });
        }
    } else {
        for _ in 0..n {
            gray.push(tok.next_uint("pixel value")?);
        }
    }
    if let Some(g) = gray.iter().find(|&&g| g > maxval) {
        return Err(FpdError::domain(format!("pgm: value {g} exceeds maxval {maxval}")));
    }
    let lux = gray
        .iter()
        .map(|&g| g as f64 / maxval as f64 * lux_max)
        .collect();
    Scene::new(height, width, lux)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_grid() {
        let s = parse_csv_scene(b"0,0,0\n0, 0 ,0\n").unwrap();
        assert_eq!((s.rows, s.cols), (2, 3));
        assert!(s.lux.iter().all(|&v| v == 0.0));
        let s = parse_csv_scene(b"# lux\n0.1,0.2\n0.3,0.4\n").unwrap();
        assert_eq!(s.get(1, 0), 0.3);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_csv_scene(b"1,2\n3\n").is_err());
        assert!(parse_csv_scene(b"1,-2\n").is_err());
        assert!(parse_csv_scene(b"1,x\n").is_err());
        assert!(parse_csv_scene(b"").is_err());
    }

    #[test]
    fn pgm_ascii_mapping() {
        let s = parse_pgm(b"P2\n# test\n2 1\n255\n255 51\n", 1.0).unwrap();
        assert_eq!((s.rows, s.cols), (1, 2));
        assert_eq!(s.get(0, 0), 1.0);
        let s = parse_pgm(b"P2 1 1 255 51", 0.4).unwrap();
        assert!((s.get(0, 0) - 0.08).abs() < 1e-16);
    }

    #[test]
    fn pgm_binary() {
        let mut data = b"P5\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0, 255, 51, 10]);
        let s = parse_pgm(&data, 0.4).unwrap();
        assert_eq!(s.get(0, 1), 0.4);
        assert!((s.get(1, 0) - 0.08).abs() < 1e-16);

        let mut wide = b"P5 1 1 1000\n".to_vec();
        wide.extend_from_slice(&500u16.to_be_bytes());
        assert_eq!(parse_pgm(&wide, 2.0).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn pgm_errors() {
        assert!(parse_pgm(b"P2\n2 2\n255\n1 2 3\n", 1.0).is_err());
        assert!(parse_pgm(b"P2\n1 1\n10\n11\n", 1.0).is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00", 1.0).is_err());
        assert!(parse_pgm(b"P2\n0 2\n255\n", 1.0).is_err());
    }

    #[test]
    fn dims_check() {
        let s = Scene::uniform(2, 3, 0.0).unwrap();
        assert!(expect_dims(&s, 2, 3).is_ok());
        assert!(expect_dims(&s, 3, 2).is_err());
    }
}
