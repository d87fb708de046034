//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{OutputFormat, RunConfig};
use crate::error::Error;
use crate::estimators::{Fix, Method};
use crate::geometry::{Family, MeasurementSet, RelativeMotion, RxLayout, TrackSide};
use crate::plot::{error_map_svg, trajectory_svg};
use crate::simulation::{crlb_error_map, gen_lane_change, run_monte_carlo};
use crate::verify::{run_all, VerifyOptions};

pub const TRAJECTORY_CSV: &str = "trajectory_stats.csv";
pub const TRAJECTORY_SVG: &str = "trajectory_stats.svg";
pub const MAP_CSV: &str = "error_map.csv";
pub const MAP_SVG: &str = "error_map.svg";
pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Debug, Parser)]
#[command(name = "vlp", version, about = "Geometric vehicular visible light positioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-shot fix from measurements (angles in radians, lengths in metres).
    #[command(allow_negative_numbers = true)]
    Estimate(EstimateArgs),
    /// Lane-change Monte Carlo; writes per-waypoint error statistics.
    Simulate(RunArgs),
    /// CRLB standard deviations over the road grid.
    CrlbMap(RunArgs),
    /// Run the built-in invariant checks.
    Verify(VerifyArgs),
    /// Print the effective configuration.
    DumpConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    method: Method,
    /// Receiver baseline (m).
    #[arg(long = "L", default_value_t = 1.6)]
    baseline: f64,
    #[arg(long)]
    theta11: Option<f64>,
    #[arg(long)]
    theta21: Option<f64>,
    #[arg(long)]
    d11: Option<f64>,
    #[arg(long)]
    d21: Option<f64>,
    #[arg(long)]
    dtheta1: Option<f64>,
    #[arg(long)]
    dtheta2: Option<f64>,
    #[arg(long = "d11-t0")]
    d11_t0: Option<f64>,
    #[arg(long = "d11-t1")]
    d11_t1: Option<f64>,
    #[arg(long = "alpha-v")]
    alpha_v: Option<f64>,
    #[arg(long = "d-v")]
    d_v: Option<f64>,
    /// Side of the target track on which RX1 lies.
    #[arg(long, default_value = "right")]
    side: TrackSide,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    poses: usize,
    #[arg(long, default_value_t = 20_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::MissingGeometry(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => estimate(&a),
        Command::Simulate(a) => simulate(&a),
        Command::CrlbMap(a) => crlb_map(&a),
        Command::Verify(a) => verify(&a),
        Command::DumpConfig { config, json } => dump_config(config.as_deref(), json),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

/// Four decimals, trailing zeros trimmed.
fn fmt_coord(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn need(v: Option<f64>, flag: &str, method: Method) -> Result<f64, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for --method {method}")))
}

fn estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let layout = RxLayout::new(a.baseline)?;
    let m = a.method;
    let values = match m {
        Method::DirectBearing => vec![need(a.theta11, "theta11", m)?, need(a.theta21, "theta21", m)?],
        Method::DirectRange => vec![need(a.d11, "d11", m)?, need(a.d21, "d21", m)?],
        Method::DifferentialBearing => vec![need(a.dtheta1, "dtheta1", m)?, need(a.dtheta2, "dtheta2", m)?],
        Method::RunningRange => {
            let motion = RelativeMotion::new(need(a.alpha_v, "alpha-v", m)?, need(a.d_v, "d-v", m)?)?;
            vec![need(a.d11_t0, "d11-t0", m)?, need(a.d11_t1, "d11-t1", m)?, motion.alpha_v, motion.d_v]
        }
    };
    let meas = MeasurementSet::exact(m.family(), values)?;
    let fix = m.estimate(&meas, &layout, a.side, &Default::default())?;
    match fix.fix {
        Fix::Classical(p) => println!("x={} y={}", fmt_coord(p.x), fmt_coord(p.y)),
        Fix::Running { t0, t1 } => println!(
            "x={} y={} x0={} y0={}",
            fmt_coord(t1.x),
            fmt_coord(t1.y),
            fmt_coord(t0.x),
            fmt_coord(t0.y)
        ),
    }
    Ok(())
}

fn load_run_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::resolve(a.config.as_deref())?;
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// All contents are rendered before anything touches the disk.
fn emit(dir: &Path, artifacts: &[(&str, String)]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    for (name, body) in artifacts {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn simulate(a: &RunArgs) -> Result<(), Failure> {
    let cfg = load_run_config(a)?;
    let traj = gen_lane_change(&cfg.scenario)?;
    let stats = run_monte_carlo(&traj, &cfg.monte_carlo())?;
    let attempts = cfg.iterations * traj.len();
    println!("{} waypoints, {} iterations, seed {}", traj.len(), cfg.iterations, cfg.seed);
    for &m in &stats.methods {
        let dropped = stats.total_dropouts(m);
        println!(
            "{:>22}: aggregate std {:.4e} m, dropouts {dropped}/{attempts}",
            m.name(),
            stats.aggregate_std(m)
        );
    }
    if stats.methods.iter().all(|&m| stats.total_dropouts(m) >= attempts) {
        return Err(Failure::Numerical("all iterations dropped".into()));
    }
    let mut artifacts = Vec::new();
    if cfg.wants(OutputFormat::Csv) {
        artifacts.push((TRAJECTORY_CSV, stats.to_csv()));
    }
    if cfg.wants(OutputFormat::Svg) {
        artifacts.push((TRAJECTORY_SVG, trajectory_svg(&stats)));
    }
    artifacts.push((EFFECTIVE_CONFIG, cfg.to_toml()));
    emit(&cfg.output_dir, &artifacts)
}

fn crlb_map(a: &RunArgs) -> Result<(), Failure> {
    let cfg = load_run_config(a)?;
    let map = crlb_error_map(
        &cfg.grid,
        &cfg.channel,
        &cfg.layout,
        &cfg.motion_noise,
        &cfg.map_families,
        cfg.workers,
    )?;
    if map.feasible_count() == 0 {
        return Err(Failure::Numerical("no feasible cells".into()));
    }
    for &f in &map.families {
        let cells: Vec<_> = map.cells_for(f).collect();
        let ok = cells.iter().filter(|c| c.feasible).count();
        println!("{:>22}: {ok}/{} feasible cells", f.name(), cells.len());
    }
    if map.families.contains(&Family::DirectBearing) && map.families.contains(&Family::DirectRange) {
        let (mut both, mut split) = (0, 0);
        for (b, r) in map.cells_for(Family::DirectBearing).zip(map.cells_for(Family::DirectRange)) {
            if b.feasible && r.feasible {
                both += 1;
                if b.std_x < r.std_x && r.std_y < b.std_y {
                    split += 1;
                }
            }
        }
        println!("bearing better laterally and range better longitudinally on {split}/{both} cells");
    }
    let mut artifacts = Vec::new();
    if cfg.wants(OutputFormat::Csv) {
        artifacts.push((MAP_CSV, map.to_csv()));
    }
    if cfg.wants(OutputFormat::Svg) {
        artifacts.push((MAP_SVG, error_map_svg(&map)));
    }
    artifacts.push((EFFECTIVE_CONFIG, cfg.to_toml()));
    emit(&cfg.output_dir, &artifacts)
}

fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let outcomes = run_all(&VerifyOptions {
        seed: a.seed,
        poses: a.poses,
        efficiency_trials: a.trials,
        workers: a.workers,
    });
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn dump_config(path: Option<&Path>, json: bool) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(path)?;
    if json {
        println!("{}", cfg.to_json());
    } else {
        print!("{}", cfg.to_toml());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_formatting() {
        assert_eq!(fmt_coord(1.49999), "1.5");
        assert_eq!(fmt_coord(10.000004), "10");
        assert_eq!(fmt_coord(-0.00001), "0");
        assert_eq!(fmt_coord(-2.25), "-2.25");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_command(["vlp", "--help"]), 0);
        assert_eq!(run_command(["vlp", "--version"]), 0);
        assert_eq!(run_command(["vlp", "frobnicate"]), 1);
        assert_eq!(run_command(["vlp", "estimate", "--method", "direct-bearing", "--theta11", "0.1"]), 1);
        assert_eq!(
            run_command(["vlp", "estimate", "--method", "direct-bearing", "--theta11", "0.1", "--theta21", "0.1"]),
            2
        );
        assert_eq!(
            run_command(["vlp", "estimate", "--method", "direct-bearing", "--theta11", "0.148890", "--theta21", "-0.0100", "--L", "1.6"]),
            0
        );
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"first version, longer").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
