use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FpdError>;

#[derive(Debug, Error)]
pub enum FpdError {
    /// An argument fell outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A node would have to leave the supply rails to carry the requested current.
    #[error("compliance error: {what} requires {required:.6} V but only {available:.6} V is available")]
    Compliance {
        what: String,
        required: f64,
        available: f64,
    },

    #[error("solver error: {what} did not converge after {iterations} iterations (residual {residual:e} A){}", fmt_time(.time))]
    Solver {
        what: String,
        iterations: usize,
        residual: f64,
        time: Option<f64>,
    },

    #[error("config error{}: key `{key}`: {msg}", fmt_line(.line))]
    Config {
        line: Option<usize>,
        key: String,
        msg: String,
    },

    #[error("bin pattern error: {msg}: {}", fmt_coords(.coords))]
    Pattern {
        msg: String,
        coords: Vec<(usize, usize)>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FpdError {
    pub fn domain(msg: impl Into<String>) -> Self {
        FpdError::Domain(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        FpdError::Config {
            line: None,
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FpdError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            FpdError::Usage(_) => 1,
            FpdError::Domain(_) | FpdError::Config { .. } | FpdError::Pattern { .. } => 2,
            FpdError::Solver { .. } | FpdError::Compliance { .. } => 3,
            FpdError::Io { .. } => 4,
        }
    }

    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            FpdError::Domain(_) => "domain",
            FpdError::Compliance { .. } => "compliance",
            FpdError::Solver { .. } => "solver",
            FpdError::Config { .. } => "config",
            FpdError::Pattern { .. } => "pattern",
            FpdError::Usage(_) => "usage",
            FpdError::Io { .. } => "io",
        }
    }

    /// Attach a simulation timestamp to a solver error.
    pub(crate) fn at_time(self, t: f64) -> Self {
        match self {
            FpdError::Solver {
                what,
                iterations,
                residual,
                ..
            } => FpdError::Solver {
                what,
                iterations,
                residual,
                time: Some(t),
            },
            other => other,
        }
    }
}

fn fmt_time(t: &Option<f64>) -> String {
    t.map(|t| format!(" at t={t:e} s")).unwrap_or_default()
}

fn fmt_line(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

fn fmt_coords(coords: &[(usize, usize)]) -> String {
    let shown: Vec<String> = coords
        .iter()
        .take(32)
        .map(|(r, c)| format!("({r},{c})"))
        .collect();
    let mut s = shown.join(" ");
    if coords.len() > 32 {
        s.push_str(&format!(" ... ({} total)", coords.len()));
    }
    s
}
