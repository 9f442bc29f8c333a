//! `qhd`: run quantum-hydrodynamics scenarios from TOML files.
//!
//! Exit codes: 0 on success, 2 when a scenario file fails to parse or
//! validate, 3 when a solver or the filesystem fails at run time.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, LoadedConfig, Overrides};
use report::{Failure, Pipeline, RunReport};

/// Environment variable naming the default output root.
const OUTPUT_ENV: &str = "QHD_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "qhd-output";

#[derive(Parser, Debug)]
#[command(name = "qhd", version, about = "Nonlocal quantum hydrodynamics scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more scenarios, in parallel, one worker per scenario.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate kernel moments, quadrature against closed form.
    Moments {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run hydro and the Schrödinger oracle and compare them.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output root; each scenario writes to `<root>/<name>`. Takes precedence
    /// over `outputs.directory` in the config and over $QHD_OUTPUT_DIR.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override `integration.dt`.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Override `integration.t_end`.
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Print nothing on success.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { dt: self.dt, t_end: self.t_end }
    }

    /// Flag, then the config's own directory, then the environment.
    fn output_dir(&self, loaded: &LoadedConfig) -> PathBuf {
        let name = &loaded.config.name;
        if let Some(root) = &self.output_dir {
            return root.join(name);
        }
        if let Some(dir) = &loaded.config.outputs.directory {
            return loaded.base_dir().join(dir);
        }
        let root = std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
        root.join(name)
    }
}

enum Outcome {
    Config(ConfigError),
    Runtime(String),
}

impl Outcome {
    fn code(&self) -> u8 {
        match self {
            Outcome::Config(_) => 2,
            Outcome::Runtime(_) => 3,
        }
    }
}

fn from_failure(loaded: &LoadedConfig, f: Failure) -> Outcome {
    match f {
        Failure::Config(qhd::Error::Config { key, message }) => {
            Outcome::Config(loaded.error_at(&key, format!("`{key}` {message}")))
        }
        Failure::Config(e) => Outcome::Runtime(format!("{}: {e}", loaded.config.name)),
        Failure::Runtime(e) => Outcome::Runtime(format!("{}: {e:#}", loaded.config.name)),
    }
}

fn print_report(r: &RunReport) {
    let mut line = format!("{}: {} in {:.2} s", r.scenario, r.pipelines.join("+"), r.wall_clock.as_secs_f64());
    if let Some(s) = &r.summary {
        line += &format!(
            ", mass drift {:.2e}, energy drift {:.2e}, density drift {:.2e}",
            s.mass_drift, s.energy_drift, s.density_drift
        );
    }
    if let Some(c) = &r.comparison {
        line += &format!(", worst rho L2 vs oracle {:.2e}", c.worst_rho_l2_rel);
    }
    if let Some(m) = &r.moments {
        line += &format!(", a^2 = {:.6e}", m.a_squared);
    }
    println!("{line}\n  -> {}", r.directory.display());
}

fn load_all(paths: &[PathBuf], common: &Common) -> Result<Vec<LoadedConfig>, Outcome> {
    let loaded = paths
        .iter()
        .map(|p| config::load(p, common.overrides()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Outcome::Config)?;
    let mut seen: Vec<(PathBuf, &Path)> = Vec::new();
    for l in &loaded {
        let dir = common.output_dir(l);
        if let Some((_, other)) = seen.iter().find(|(d, _)| *d == dir) {
            let msg = format!("writes to {} like {} does; rename one scenario", dir.display(), other.display());
            return Err(Outcome::Config(l.error_at("name", msg)));
        }
        seen.push((dir, &l.path));
    }
    Ok(loaded)
}

fn execute(cli: Cli) -> Result<(), Outcome> {
    let (paths, common, job): (Vec<PathBuf>, Common, fn(&LoadedConfig, &Path) -> Result<RunReport, Failure>) =
        match cli.command {
            Command::Run { configs, common } => (configs, common, |l, d| report::run_scenario(l, d, Pipeline::Run)),
            Command::Moments { config, common } => (vec![config], common, report::moments_report),
            Command::Compare { config, common } => {
                (vec![config], common, |l, d| report::run_scenario(l, d, Pipeline::Compare))
            }
        };
    let loaded = load_all(&paths, &common).map_err(|o| {
        report_outcome(&o);
        o
    })?;

    let results: Vec<Result<RunReport, Outcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = loaded
            .iter()
            .map(|l| {
                let dir = common.output_dir(l);
                scope.spawn(move || job(l, &dir).map_err(|f| from_failure(l, f)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Outcome::Runtime("worker panicked".into()))))
            .collect()
    });

    let mut first_failure = None;
    for r in results {
        match r {
            Ok(report) if !common.quiet => print_report(&report),
            Ok(_) => {}
            Err(o) => {
                report_outcome(&o);
                first_failure.get_or_insert(o);
            }
        }
    }
    first_failure.map_or(Ok(()), Err)
}

fn report_outcome(o: &Outcome) {
    match o {
        Outcome::Config(e) => eprintln!("config error: {e}"),
        Outcome::Runtime(m) => eprintln!("error: {m}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(o) => ExitCode::from(o.code()),
    }
}
