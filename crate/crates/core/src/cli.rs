//! Command-line verbs: `run`, `describe`, `validate`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{execute, ExperimentConfig, GENERATOR_IDS};
use crate::environment::{validate_environment, Tolerances};
use crate::error::{Error, Result};
use crate::io::read_environment;
use crate::report::{write_csv, write_plot_files, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Thread-count override for the parallel sweeps and eigensolves.
pub const THREADS_ENV: &str = "MERGING_THREADS";

#[derive(Debug, Parser)]
#[command(name = "merging", version, about = "Merging-time bounds against exact evolution for non-decreasing environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write report.csv, summary.json and optional plot data.
    Run {
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a generator's hypotheses and parameter schema.
    Describe { generator: String },
    /// Check invariance and monotonicity of an environment file.
    Validate { file: PathBuf },
}

pub fn describe(id: &str) -> Option<&'static str> {
    Some(match id {
        "stick" => {
            "stick: lazy walk K_t = (I + P_t)/2 on the cycle Z/NZ.\n\
             hypotheses: N >= 3; every neighbour edge has c_t >= 1; c_t non-decreasing in t; loops optional.\n\
             parameters:\n  n = <int>\n  [generator.schedule] kind = uniform | random | edges\n"
        }
        "two-state" => {
            "two-state: c_t(0,0) = c_t(1,1) = t^(1+epsilon), c_t(0,1) = 1, lazified.\n\
             hypotheses: epsilon > 0. The chains started at 0 and 1 never merge.\n\
             parameters:\n  epsilon = <float>\n  laziness = <float in (0,1]> (default 0.5)\n"
        }
        "interpolation" => {
            "interpolation: c_t = c1/t + (1 - 1/t) c2, lazified.\n\
             hypotheses: both graphs connected; row sums of c2 dominate those of c1 pointwise.\n\
             parameters:\n  n = <int>\n  c1 = [[x, y, c], ...]\n  c2 = [[x, y, c], ...]\n"
        }
        "birth-death-hub" => {
            "birth-death-hub: geometric path on [0, length] with c(x, x+1) = decay^x; at step t the edge {0, site_t}\n\
             gains u(site_t) * weight_t, where u are the base row sums.\n\
             hypotheses: 0 < decay <= 1 so that u(0) is maximal; sites in [1, length]; weights >= 0.\n\
             parameters:\n  length = <int>\n  decay = <float>\n  sites = [<int>, ...] (cycled)\n  weights = [<float>, ...] (cycled)\n  laziness = <float> (default 0.5)\n"
        }
        "torus" => {
            "torus: lazy walk on (Z/NZ)^d.\n\
             hypotheses: N >= 3; 1 <= c_t <= M on nearest-neighbour edges; c_t non-decreasing; N^d within the state cap.\n\
             With normalized = true conductances are divided by (N+1)^d.\n\
             parameters:\n  n = <int>\n  d = <int>\n  normalized = <bool> (default true)\n  [generator.schedule] kind = uniform | random | edges\n"
        }
        "hypercube" => {
            "hypercube: lazy walk on {0,1}^N.\n\
             hypotheses: 1 <= c_t <= M on the cube edges; c_t non-decreasing; 2^N within the state cap.\n\
             With normalized = true the measures are divided by 2^N.\n\
             parameters:\n  n = <int>\n  normalized = <bool> (default true)\n  [generator.schedule] kind = uniform | random | edges\n"
        }
        "file" => {
            "file: explicit environment read from a JSON file with size, horizon, kernels (row-major per step)\n\
             and measures (per step).\n\
             hypotheses: rows sum to 1; each measure is invariant for its kernel; measures non-decreasing.\n\
             parameters:\n  path = <file, relative to the configuration>\n"
        }
        _ => return None,
    })
}

fn set_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("{THREADS_ENV}: {v:?} is not a thread count")))?;
        // A pool built earlier in the process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs an experiment, writing its artifacts. Returns the exit status.
pub fn run(config: &Path, seed: Option<u64>, out: Option<&Path>, log: &mut dyn Write) -> Result<i32> {
    let mut c = ExperimentConfig::read(config)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(o) = out {
        c.output.dir = o.to_path_buf();
    }
    let outcome = execute(&c)?;
    let dir = &c.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let csv = std::fs::File::create(dir.join("report.csv")).map_err(|e| Error::Io(format!("report.csv: {e}")))?;
    write_csv(&outcome.report, std::io::BufWriter::new(csv))?;
    let mut summary = Summary::new(c.generator.id(), c.seed, &outcome.report);
    summary.extra = outcome.extra.clone();
    std::fs::write(dir.join("summary.json"), summary.to_json()? + "\n")?;
    if c.output.plots {
        write_plot_files(&outcome.report, &dir.join("plots"))?;
    }
    let _ = writeln!(log, "wrote {}", dir.display());
    for note in &outcome.report.notes {
        let _ = writeln!(log, "note: {note}");
    }
    if outcome.report.has_violation() {
        for r in outcome.report.violations().take(10) {
            let _ = writeln!(log, "dominance violation: t={} pair={} margin={:e}", r.t, r.pair_id, r.margin.unwrap_or(0.0));
        }
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_OK)
}

pub fn validate(file: &Path, out: &mut dyn Write) -> Result<i32> {
    let env = read_environment(file)?;
    let report = validate_environment(&env, &Tolerances::default());
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?);
    Ok(if report.ok { EXIT_OK } else { EXIT_CONFIG })
}

/// Dispatches parsed arguments; errors are printed to `err` and mapped to exit status 1.
pub fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = set_threads().and_then(|()| match &cli.command {
        Command::Run { config, seed, out: dir } => run(config, *seed, dir.as_deref(), out),
        Command::Describe { generator } => match describe(generator) {
            Some(text) => {
                let _ = write!(out, "{text}");
                Ok(EXIT_OK)
            }
            None => Err(Error::Config(format!("unknown generator {generator:?}; valid ids: {}", GENERATOR_IDS.join(", ")))),
        },
        Command::Validate { file } => validate(file, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}
