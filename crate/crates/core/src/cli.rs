//! `fpdsim` command-line interface.
//!
//! Precedence for every setting: command-line flag, then environment
//! (`FPDSIM_SEED` for the seed), then the config file, then built-in defaults.
//! Errors print a single `fpdsim: error kind=<kind> code=<n>: <message>` line
//! on stderr. Exit codes: 0 ok, 1 usage, 2 config, 3 solver, 4 I/O.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::array::{binned_read, build_panel, resolution_reduce, scan_frame, BinPattern, Panel, Scene};
use crate::circuit::{solve_pixel_chain, sum_at_node};
use crate::device::photocurrent;
use crate::error::{FpdError, Result};
use crate::io::output::{self, write_atomic};
use crate::io::{load_scene, parse_config, SimConfig};
use crate::seed;
use crate::validation::{led_test, multi_pixel_response, pulsed_response, Stimulus, BENCH_LED_LUX};

#[derive(Debug, Parser)]
#[command(name = "fpdsim", version, about = "Current-mode flat-panel detector readout simulator")]
struct Cli {
    /// Configuration file (sectioned key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scene file: CSV grid of lux, or PGM (P2/P5).
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Master seed for mismatch draws; overrides the config file.
    #[arg(long, global = true, env = "FPDSIM_SEED")]
    seed: Option<u64>,
    /// Output file; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DC operating point of pixel (0,0)'s readout chain.
    Dc {
        /// Pixel illuminance, lux.
        #[arg(long, default_value_t = BENCH_LED_LUX)]
        lux: f64,
    },
    /// Progressive row scan of the whole panel.
    Frame,
    /// Binned read by node summation, or its average.
    Bin {
        /// Block size, e.g. 2x2.
        #[arg(long, default_value = "2x2")]
        block: String,
        #[arg(long, value_enum, default_value_t = BinMode::Sum)]
        mode: BinMode,
    },
    /// Line/row comparator LED test.
    Led {
        /// Comparator reference voltage; defaults to bench.v_ref.
        #[arg(long)]
        vref: Option<f64>,
    },
    /// Pulsed-illumination transient of one pixel or a summed pixel set.
    Transient(TransientArgs),
    /// Monte Carlo mismatch trials.
    Sweep {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Relative mismatch sigma applied to every device.
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, default_value_t = BENCH_LED_LUX)]
        lux: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BinMode {
    Sum,
    Avg,
}

#[derive(Debug, Args)]
struct TransientArgs {
    /// Pulse amplitude, lux.
    #[arg(long, default_value_t = BENCH_LED_LUX)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    baseline: f64,
    /// Pulse period, seconds.
    #[arg(long, default_value_t = 20e-6)]
    period: f64,
    #[arg(long, default_value_t = 0.5)]
    duty: f64,
    /// Time step; defaults to 1/50 of the time constant at the pulse level.
    #[arg(long)]
    dt: Option<f64>,
    /// End time; defaults to four periods.
    #[arg(long)]
    tend: Option<f64>,
    /// Single pixel as `row,col`.
    #[arg(long, default_value = "0,0", conflicts_with = "pixels")]
    pixel: String,
    /// Pixel set summed at one node, as `r,c;r,c;...`.
    #[arg(long)]
    pixels: Option<String>,
}

/// Parse `argv` (including the program name) and run. Returns the exit code.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    let first = e.to_string().lines().next().unwrap_or("").to_string();
                    report(stderr, &FpdError::Usage(first.trim_start_matches("error: ").into()))
                }
            };
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => report(stderr, &e),
    }
}

fn report(stderr: &mut dyn Write, e: &FpdError) -> i32 {
    let code = e.exit_code();
    let msg = e.to_string().replace('\n', " ");
    let _ = writeln!(stderr, "fpdsim: error kind={} code={code}: {msg}", e.kind());
    code
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| FpdError::io(p, e))?;
            parse_config(&text)
        }
        None => Ok(SimConfig::default()),
    }
}

fn require_scene(cli_scene: Option<&Path>, cfg: &SimConfig) -> Result<Scene> {
    let path = cli_scene.ok_or_else(|| FpdError::Usage("this subcommand needs --scene".into()))?;
    let scene = load_scene(path, cfg.lux_max)?;
    crate::io::scene::expect_dims(&scene, cfg.panel.rows, cfg.panel.cols)?;
    Ok(scene)
}

fn parse_pair(s: &str, sep: char, what: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| FpdError::Usage(format!("{what} `{s}` must look like a{sep}b")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| FpdError::Usage(format!("{what} `{s}` is not a pair of integers")))
    };
    Ok((parse(a)?, parse(b)?))
}

/// Emit the primary artifact to `--out` or stdout.
fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| FpdError::io("<stdout>", e)),
    }
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.panel.seed = s;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Dc { lux } => {
            let panel = build_panel(&cfg.panel)?;
            let chain = panel.chain(0, 0);
            let ip = photocurrent(&chain.photodiode, lux)?;
            let s = solve_pixel_chain(chain, ip)?;
            let text = format!(
                "lux,i_photo,i_line,i_row,v_line,v_row\n{:e},{:e},{:e},{:e},{:e},{:e}\n",
                lux, ip, s.i_line, s.i_row, s.v_line, s.v_row
            );
            emit(out, stdout, &text)
        }
        Command::Frame => {
            let scene = require_scene(cli.scene.as_deref(), &cfg)?;
            let panel = build_panel(&cfg.panel)?;
            let (frame, log) = scan_frame(&panel, &scene)?;
            match out {
                Some(p) => {
                    let pgm = output::frame_to_pgm(&frame);
                    let csv = output::frame_to_csv(&frame);
                    let scan = output::scanlog_to_csv(&log);
                    write_atomic(p, pgm.as_bytes())?;
                    write_atomic(&output::sibling(p, "csv"), csv.as_bytes())?;
                    write_atomic(&output::sibling(p, "scan.csv"), scan.as_bytes())
                }
                None => emit(None, stdout, &output::frame_to_pgm(&frame)),
            }
        }
        Command::Bin { block, mode } => {
            let (br, bc) = parse_pair(&block.to_ascii_lowercase(), 'x', "--block")?;
            let scene = require_scene(cli.scene.as_deref(), &cfg)?;
            let panel = build_panel(&cfg.panel)?;
            let pattern = BinPattern::blocks(panel.rows(), panel.cols(), br, bc)?;
            let frame = match mode {
                BinMode::Sum => binned_read(&panel, &scene, &pattern)?,
                BinMode::Avg => resolution_reduce(&panel, &scene, &pattern)?,
            };
            match out {
                Some(p) => {
                    let pgm = output::frame_to_pgm(&frame);
                    let csv = output::frame_to_csv(&frame);
                    write_atomic(p, pgm.as_bytes())?;
                    write_atomic(&output::sibling(p, "csv"), csv.as_bytes())
                }
                None => emit(None, stdout, &output::frame_to_pgm(&frame)),
            }
        }
        Command::Led { vref } => {
            let scene = require_scene(cli.scene.as_deref(), &cfg)?;
            let panel = build_panel(&cfg.panel)?;
            let led = led_test(&panel, &scene, vref.unwrap_or(cfg.v_ref))?;
            emit(out, stdout, &output::led_to_csv(&led))
        }
        Command::Transient(args) => run_transient(&cfg, &args, out, stdout),
        Command::Sweep { trials, sigma, lux } => run_sweep(&cfg, trials, sigma, lux, out, stdout),
    }
}

fn run_transient(cfg: &SimConfig, args: &TransientArgs, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let panel = build_panel(&cfg.panel)?;
    let stim = Stimulus::pulse_train(args.amplitude, args.period, args.duty, args.baseline);
    stim.validate()?;
    let pixels: Vec<(usize, usize)> = match &args.pixels {
        Some(list) => list
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|p| parse_pair(p, ',', "--pixels"))
            .collect::<Result<_>>()?,
        None => vec![parse_pair(&args.pixel, ',', "--pixel")?],
    };
    if let Some(&(r, c)) = pixels.iter().find(|&&(r, c)| r >= panel.rows() || c >= panel.cols()) {
        return Err(FpdError::Usage(format!("pixel ({r},{c}) is outside the panel")));
    }
    let dt = match args.dt {
        Some(dt) => dt,
        None => {
            let (r, c) = pixels[0];
            let chain = panel.chain(r, c);
            let ip = photocurrent(&chain.photodiode, stim.baseline + stim.amplitude)?;
            chain.time_constant(ip)? / 50.0
        }
    };
    let t_end = args.tend.unwrap_or(4.0 * args.period);
    let trace = if args.pixels.is_some() {
        multi_pixel_response(&panel, &pixels, &stim, dt, t_end)?
    } else {
        let (r, c) = pixels[0];
        pulsed_response(panel.chain(r, c), &stim, dt, t_end)?
    };
    emit(out, stdout, &output::trace_to_csv(&trace))
}

struct TrialRow {
    seed: u64,
    i_photo: f64,
    i_line: f64,
    i_row: f64,
    fpn_rel: f64,
}

fn run_trial(cfg: &SimConfig, trial_seed: u64, lux: f64) -> Result<TrialRow> {
    let mut pc = cfg.panel.clone();
    pc.seed = trial_seed;
    let panel: Panel = build_panel(&pc)?;
    let chain = panel.chain(0, 0);
    let ip = photocurrent(&chain.photodiode, lux)?;
    let s = solve_pixel_chain(chain, ip)?;
    let currents = panel.pixel_currents(&Scene::uniform(pc.rows, pc.cols, lux)?)?;
    let n = currents.len() as f64;
    let mean = sum_at_node(currents.iter().copied()) / n;
    let var = sum_at_node(currents.iter().map(|i| (i - mean) * (i - mean))) / n;
    Ok(TrialRow {
        seed: trial_seed,
        i_photo: ip,
        i_line: s.i_line,
        i_row: s.i_row,
        fpn_rel: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
    })
}

fn run_sweep(
    cfg: &SimConfig,
    trials: usize,
    sigma: f64,
    lux: f64,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(FpdError::Usage(format!("--sigma must be >= 0, got {sigma}")));
    }
    let mut cfg = cfg.clone();
    let ch = &mut cfg.panel.chain;
    for m in [&mut ch.pixel_mirror, &mut ch.line_mirror, &mut ch.row_mirror] {
        m.reference.sigma_rel = sigma;
        for o in &mut m.outputs {
            o.sigma_rel = sigma;
        }
    }
    let master = cfg.panel.seed;
    let rows: Vec<TrialRow> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(&cfg, seed::derive(master, &[seed::TRIAL, t as u64]), lux))
        .collect::<Result<_>>()?;

    let mut text = String::from("trial,seed,i_photo,i_line,i_row,line_gain_error,row_gain_error,fpn_rel\n");
    for (t, r) in rows.iter().enumerate() {
        use std::fmt::Write as _;
        let _ = writeln!(
            text,
            "{t},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.seed,
            r.i_photo,
            r.i_line,
            r.i_row,
            r.i_line / r.i_photo - 1.0,
            r.i_row / r.i_photo - 1.0,
            r.fpn_rel
        );
    }
    emit(out, stdout, &text)
}
