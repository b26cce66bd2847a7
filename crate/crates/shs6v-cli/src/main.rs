//! `shs6v`: command-line front end for weights, simulation, stationary
//! observables, duality and kernel checks, SHE identities and scans.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shs6v::duality::{
    reversed_law, tilt_factor, verify_duality, DualityError, DualityMethod, DualityMode, DualityQuery, LocationVector,
    DEFAULT_PRUNE,
};
use shs6v::dynamics::OccupancyWindow;
use shs6v::experiments::{
    kpz_scan, records_csv, render, simulate, summary_csv, trajectory_csv, ExperimentConfig, ExperimentError,
    OutputFormat, SimulationConfig,
};
use shs6v::hopfcole::{she_check, HopfColeError};
use shs6v::kernels::tilt::TiltFrame;
use shs6v::kernels::{tilted_v, two_particle_reversed, KernelError, KernelQuery, QuadratureOptions};
use shs6v::stationary::{default_difference_step, stationary_report, StationaryError};
use shs6v::weights::{fused_table, WeightError};
use shs6v::{ModelParams, ParamError};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Duality(#[from] DualityError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    HopfCole(#[from] HopfColeError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "shs6v", version, about = "Stochastic higher-spin six-vertex model toolkit")]
struct Cli {
    /// Seed for every random draw (overrides a config file seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replica-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Model parameters given directly.
#[derive(Debug, Args)]
struct DirectParams {
    #[arg(long)]
    q: f64,
    /// Maximal occupancy per site.
    #[arg(long = "I")]
    max_occupancy: usize,
    /// Lines per fused step.
    #[arg(long = "J")]
    line_capacity: usize,
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
}

impl DirectParams {
    fn build(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::stochastic(self.q, self.max_occupancy, self.line_capacity, self.alpha)?)
    }
}

/// Model parameters through the weak asymmetry scaling.
#[derive(Debug, Args)]
struct ScaledParams {
    #[arg(long = "I", default_value_t = 2)]
    max_occupancy: usize,
    #[arg(long = "J", default_value_t = 1)]
    line_capacity: usize,
    /// One-particle stay probability.
    #[arg(long, default_value_t = 0.8)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
}

impl ScaledParams {
    fn build(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::scaled(self.max_occupancy, self.line_capacity, self.b, self.rho, self.eps)?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "H")]
    H,
    #[value(name = "G")]
    G,
    #[value(name = "tiltZ")]
    TiltZ,
    #[value(name = "tiltD")]
    TiltD,
}

impl From<ModeArg> for DualityMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::H => DualityMode::H,
            ModeArg::G => DualityMode::G,
            ModeArg::TiltZ => DualityMode::TiltedZ,
            ModeArg::TiltD => DualityMode::TiltedD,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fused vertex weight table as CSV (i1,j1,i2,j2,weight).
    Weights {
        #[command(flatten)]
        params: DirectParams,
        /// Restrict to one input row `i1,j1`.
        #[arg(long, value_delimiter = ',')]
        row: Option<Vec<usize>>,
    },
    /// One seeded trajectory as CSV (t,x,eta,N).
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Stationary law and scaling-theory observables as JSON.
    Stationary {
        #[command(flatten)]
        params: ScaledParams,
        /// Difference step for the current curvature.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Two-sided evaluation of a duality identity as JSON.
    DualityCheck {
        #[command(flatten)]
        params: DirectParams,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, conflicts_with = "mc")]
        exact: bool,
        #[arg(long)]
        mc: bool,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Left-finite initial occupancies starting at site 0.
        #[arg(long, value_delimiter = ',', default_value = "1,0,2,1,0")]
        window: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,3")]
        locations: Vec<i64>,
        /// Density of the tilt (tilted modes).
        #[arg(long, default_value_t = 0.7)]
        rho: f64,
        #[arg(long, default_value_t = 1_000_000)]
        replicas: u64,
    },
    /// Two-particle kernel with its enumerated oracle.
    Kernel {
        #[command(flatten)]
        params: DirectParams,
        #[arg(long, allow_hyphen_values = true)]
        t: i64,
        #[arg(long, allow_hyphen_values = true)]
        s: i64,
        #[arg(long, allow_hyphen_values = true)]
        x1: i64,
        #[arg(long, allow_hyphen_values = true)]
        x2: i64,
        #[arg(long, allow_hyphen_values = true)]
        y1: i64,
        #[arg(long, allow_hyphen_values = true)]
        y2: i64,
        /// Tilted kernel at density `rho`; sites are shifted by the drift.
        #[arg(long)]
        tilted: bool,
        #[arg(long, default_value_t = 0.7)]
        rho: f64,
        /// Also evaluate the enumerated reversed chain.
        #[arg(long)]
        oracle: bool,
    },
    /// Exact discrete SHE identity gaps as JSON.
    SheCheck {
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 0.04)]
        eps: f64,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        #[arg(long = "I", default_value_t = 2)]
        max_occupancy: usize,
        #[arg(long = "J", default_value_t = 2)]
        line_capacity: usize,
        #[arg(long, default_value_t = 0.85)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
    },
    /// Fluctuation-field scan from a config file; records CSV to --out.
    KpzScan {
        #[arg(long)]
        config: PathBuf,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Also write the per-point summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct KernelOutput {
    value: f64,
    oracle: Option<f64>,
    gap: Option<f64>,
    nodes: usize,
    radius: f64,
    tail_mass: Option<f64>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json(value: &impl Serialize) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn weights_csv(params: &ModelParams, row: Option<&[usize]>) -> Result<String, CliError> {
    let table = fused_table(params)?;
    let (imax, jmax) = (params.max_occupancy, params.line_capacity);
    let inputs: Vec<(usize, usize)> = match row {
        Some(&[i1, j1]) if i1 <= imax && j1 <= jmax => vec![(i1, j1)],
        Some(r) => return Err(CliError::Usage(format!("row {r:?} outside 0..={imax} x 0..={jmax}"))),
        None => (0..=imax).flat_map(|i| (0..=jmax).map(move |j| (i, j))).collect(),
    };
    let mut out = String::from("i1,j1,i2,j2,weight\n");
    for (i1, j1) in inputs {
        for i2 in 0..=imax {
            for j2 in 0..=jmax {
                let _ = writeln!(out, "{i1},{j1},{i2},{j2},{}", table.weight(i1, j1, i2, j2));
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn kernel_output(
    params: &ModelParams,
    t: i64,
    s: i64,
    x: [i64; 2],
    y: [i64; 2],
    tilted: Option<f64>,
    oracle: bool,
) -> Result<KernelOutput, CliError> {
    let opts = QuadratureOptions::default();
    let (v, factor) = match tilted {
        None => (two_particle_reversed(params, &KernelQuery::lattice(x, y, t, s)?, opts)?, 1.0),
        Some(rho) => {
            let frame = TiltFrame::new(params, rho)?;
            let (mt, ms) = (frame.mu_hat(t), frame.mu_hat(s));
            let q = KernelQuery::new(
                [x[0] as f64 - mt, x[1] as f64 - mt],
                [y[0] as f64 - ms, y[1] as f64 - ms],
                t,
                s,
                true,
            )?;
            (tilted_v(params, &frame, &q, opts)?, tilt_factor(&frame, params.q, t, s, &x, &y))
        }
    };
    let (oracle_value, tail_mass) = if oracle {
        if t < s {
            return Err(CliError::Usage(format!("t={t} precedes s={s}")));
        }
        let start = LocationVector::new(x.to_vec(), params.max_occupancy)?;
        let law = reversed_law(params, &start, s, (t - s) as usize, DEFAULT_PRUNE);
        (Some(factor * law.prob(&y)), Some(law.lost_mass))
    } else {
        (None, None)
    };
    Ok(KernelOutput {
        value: v.value,
        oracle: oracle_value,
        gap: oracle_value.map(|o| (v.value - o).abs()),
        nodes: v.nodes,
        radius: v.radius,
        tail_mass,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Weights { params, row } => write_out(out, &weights_csv(&params.build()?, row.as_deref())?),
        Command::Simulate { config } => {
            let mut c = SimulationConfig::from_flat(&read(&config)?)?;
            if let Some(seed) = cli.seed {
                c.seed = seed;
            }
            write_out(out, &trajectory_csv(&simulate(&c)?))
        }
        Command::Stationary { params, h } => {
            let p = params.build()?;
            let h = h.unwrap_or_else(|| default_difference_step(&p));
            write_out(out, &json(&stationary_report(&p, params.rho, h)?)?)
        }
        Command::DualityCheck { params, mode, exact, mc, steps, window, locations, rho, replicas } => {
            let p = params.build()?;
            let method = match (exact, mc) {
                (_, true) => DualityMethod::MonteCarlo { replicas, seed: cli.seed.unwrap_or(0) },
                _ => DualityMethod::Exact,
            };
            let window = OccupancyWindow::left_finite(0, window);
            let query = DualityQuery::new(mode.into(), LocationVector::new(locations, p.max_occupancy)?, 0, steps)
                .with_density(rho);
            write_out(out, &json(&verify_duality(&p, &window, &query, method)?)?)
        }
        Command::Kernel { params, t, s, x1, x2, y1, y2, tilted, rho, oracle } => {
            let p = params.build()?;
            let k = kernel_output(&p, t, s, [x1, x2], [y1, y2], tilted.then_some(rho), oracle)?;
            write_out(out, &json(&k)?)
        }
        Command::SheCheck { window, eps, steps, max_occupancy, line_capacity, b, rho } => {
            let p = ModelParams::scaled(max_occupancy, line_capacity, b, rho, eps)?;
            write_out(out, &json(&she_check(&p, rho, window, steps, cli.seed.unwrap_or(0))?)?)
        }
        Command::KpzScan { config, json: json_path, summary } => {
            let text = read(&config)?;
            let mut c = match config.extension().and_then(|e| e.to_str()) {
                Some("json") => ExperimentConfig::from_json(&text)?,
                _ => ExperimentConfig::from_flat(&text)?,
            };
            if let Some(seed) = cli.seed {
                c.seed = seed;
            }
            let report = kpz_scan(&c)?;
            let csv_path = out.map(Path::to_path_buf).or_else(|| c.csv.as_ref().map(PathBuf::from));
            write_out(csv_path.as_deref(), &records_csv(&report.records))?;
            if let Some(path) = json_path.or_else(|| c.json.as_ref().map(PathBuf::from)) {
                write_out(Some(&path), &render(&report, OutputFormat::Json)?)?;
            }
            if let Some(path) = summary {
                write_out(Some(&path), &summary_csv(&report))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn weight_rows_sum_to_one() {
        let p = ModelParams::stochastic(2.0, 2, 2, -0.05).unwrap();
        let csv = weights_csv(&p, Some(&[1, 1])).unwrap();
        let total: f64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(csv.lines().count(), 1 + 3 * 3);
        assert!(weights_csv(&p, Some(&[3, 0])).is_err());
    }

    #[test]
    fn kernel_matches_its_oracle() {
        let p = ModelParams::stochastic(2.0, 3, 2, -0.04).unwrap();
        let k = kernel_output(&p, 3, 0, [0, 2], [-1, 1], None, true).unwrap();
        assert!(k.gap.unwrap() < 1e-8, "{k:?}");
        let k = kernel_output(&p, 3, 1, [0, 2], [-1, 1], Some(0.7), true).unwrap();
        assert!(k.gap.unwrap() < 1e-8 * k.value.abs().max(1.0), "{k:?}");
    }
}
