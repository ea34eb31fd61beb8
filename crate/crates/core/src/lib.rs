//! Behavioral simulator of a current-mode flat-panel-detector active matrix.
//!
//! Each pixel's photocurrent is copied by an in-pixel PMOS mirror into a line
//! branch and a row branch, re-mirrored by NMOS mirrors shared per line and
//! per row, and converted to a voltage by a transimpedance stage. On top of
//! the device and chain solvers sit the panel (row scanning, binning by
//! current summation, ADC), the comparator/AND-gate LED test, the pulsed
//! illumination harness, and file I/O plus the `fpdsim` CLI.


pub mod array;
pub mod circuit;
pub mod cli;

pub mod device;
pub mod error;
pub mod io;

pub mod newton;
pub mod seed;
pub mod validation;


pub use error::{FpdError, Result};
