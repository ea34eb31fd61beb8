//! Byte-stable serializers for frames, scan logs, traces and LED grids.
//!
//! Floats are written in shortest round-trip exponent form (`{:e}`), so the
//! same values always produce the same bytes and parse back exactly.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::array::{Frame, ScanLog};
use crate::circuit::Trace;
use crate::error::{FpdError, Result};
use crate::validation::LedMatrixState;

/// ASCII PGM with `maxval = 2^bits - 1`, one output row per line.
pub fn frame_to_pgm(frame: &Frame) -> String {
    let (rows, cols) = frame.shape;
    let mut s = format!("P2\n{cols} {rows}\n{}\n", frame.max_code());
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| frame.code(r, c).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn frame_to_csv(frame: &Frame) -> String {
    let cols = frame.shape.1;
    let mut s = String::from("index,row,col,size,current,voltage,charge,code\n");
    for i in 0..frame.codes.len() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{:e},{:e},{:e},{}",
            i / cols,
            i % cols,
            frame.sizes[i],
            frame.currents[i],
            frame.voltage(i),
            frame.charge(i),
            frame.codes[i]
        );
    }
    s
}

pub fn scanlog_to_csv(log: &ScanLog) -> String {
    let mut s = String::from("t_select,row\n");
    for e in &log.events {
        let _ = writeln!(s, "{:e},{}", e.t_select, e.row);
    }
    s
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut s = String::from("t,i_out,v_out\n");
    for p in &trace.samples {
        let _ = writeln!(s, "{:e},{:e},{:e}", p.t, p.i_out, p.v_out);
    }
    s
}

/// Rows of comma-separated 0/1 flags.
pub fn led_to_csv(led: &LedMatrixState) -> String {
    let mut s = String::new();
    for r in 0..led.rows {
        let line: Vec<&str> = (0..led.cols)
            .map(|c| if led.is_lit(r, c) { "1" } else { "0" })
            .collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Write through a temporary file in the target directory and rename it
/// into place, so a failed run never leaves a truncated file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| FpdError::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| FpdError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| FpdError::io(path, e))?;
    tmp.persist(path).map_err(|e| FpdError::io(path, e.error))?;
    Ok(())
}

/// Sibling file with the stem of `path` and extension `ext`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// PGM at `path` (extension forced to `.pgm`) and the CSV next to it.
pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    let pgm = frame_to_pgm(frame);
    let csv = frame_to_csv(frame);
    write_atomic(&sibling(path, "pgm"), pgm.as_bytes())?;
    write_atomic(&sibling(path, "csv"), csv.as_bytes())
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    write_atomic(path, trace_to_csv(trace).as_bytes())
}

pub fn write_led(path: &Path, led: &LedMatrixState) -> Result<()> {
    write_atomic(path, led_to_csv(led).as_bytes())
}
