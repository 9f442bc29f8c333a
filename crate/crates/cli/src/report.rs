//! Pipelines behind the subcommands and the files they leave behind.
//!
//! Everything written is a pure function of the scenario, so two runs of the
//! same config produce byte-identical files. Wall-clock time is reported on
//! stdout only for that reason.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use serde::Serialize;

use qhd::hydro::Trajectory;
use qhd::kernel::{self, KernelSpec, MomentTable, DEFAULT_MAX_ORDER};
use qhd::scenario::{InitialCondition, OutputFormat, PotentialConfig, Scenario, ScenarioConfig};
use qhd::{CompareMetrics, HydroState, PhysicalParams, WaveState};

use crate::config::LoadedConfig;

/// Which solvers a scenario runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// Hydro, plus the oracle and comparison if the config asks for it.
    Run,
    /// Hydro, oracle and comparison regardless of the config.
    Compare,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonitorRow {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub min_density: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WidthRow {
    pub time: f64,
    pub centroid: f64,
    pub sigma: f64,
    /// Free-particle spreading law, only for a Gaussian released with no
    /// potential under plain Bohm dynamics.
    pub sigma_analytic: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub final_time: f64,
    /// `max |mass(t) - mass(0)| / mass(0)`
    pub mass_drift: f64,
    /// `max |E(t) - E(0)| / |E(0)|`, or absolute when `E(0) = 0`.
    pub energy_drift: f64,
    /// `max |rho(t) - rho(0)| / max rho(0)`; the stationarity measure.
    pub density_drift: f64,
    pub min_density: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub series: Vec<CompareMetrics>,
    pub worst_rho_l2_rel: f64,
    pub worst_rho_max_rel: f64,
    pub worst_velocity_rms: f64,
    pub worst_velocity_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub n: u32,
    pub c2n_quadrature: f64,
    pub c2n_closed_form: Option<f64>,
    pub relative_deviation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentsReport {
    pub kernel: &'static str,
    /// Core height that makes the kernel integrate to one.
    pub n0: Option<f64>,
    pub a_squared: f64,
    pub a: f64,
    pub ell_over_a: Option<f64>,
    pub rows: Vec<MomentRow>,
}

/// What a scenario produced. `files` are relative to `directory`.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub pipelines: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub monitors: Vec<MonitorRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub width: Vec<WidthRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsReport>,
    pub files: Vec<String>,
    #[serde(skip)]
    pub directory: PathBuf,
    #[serde(skip)]
    pub wall_clock: Duration,
}

/// Library failures keep their type so the caller can pick an exit code.
#[derive(Debug)]
pub enum Failure {
    Config(qhd::Error),
    Runtime(anyhow::Error),
}

impl From<qhd::Error> for Failure {
    fn from(e: qhd::Error) -> Self {
        match e {
            qhd::Error::Config { .. } => Failure::Config(e),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

struct Writer {
    dir: PathBuf,
    csv: bool,
    json: bool,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path, config: &ScenarioConfig) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            csv: config.outputs.formats.contains(&OutputFormat::Csv),
            json: config.outputs.formats.contains(&OutputFormat::Json),
            files: Vec::new(),
        })
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// One `x, rho, S` file per sample plus an index of sample times.
    fn snapshots(&mut self, sub: &str, samples: &[(f64, Vec<f64>, Vec<f64>)], x: &[f64]) -> Result<()> {
        #[derive(Serialize)]
        struct Point {
            x: f64,
            rho: f64,
            #[serde(rename = "S")]
            s: f64,
        }
        #[derive(Serialize)]
        struct Entry {
            index: usize,
            time: f64,
            file: String,
        }
        let mut index = Vec::with_capacity(samples.len());
        for (i, (t, rho, s)) in samples.iter().enumerate() {
            let name = format!("{sub}/snapshot_{i:05}.csv");
            self.csv(&name, x.iter().zip(rho).zip(s).map(|((&x, &rho), &s)| Point { x, rho, s }))?;
            index.push(Entry { index: i, time: *t, file: name });
        }
        self.csv(&format!("{sub}/index.csv"), index)
    }

    /// Write `report` itself last so its file list includes it.
    fn finish(mut self, mut report: RunReport) -> Result<RunReport> {
        if self.json {
            self.files.push("metrics.json".to_string());
        }
        report.files = std::mem::take(&mut self.files);
        report.directory = self.dir.clone();
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        if self.json {
            fs::write(self.dir.join("metrics.json"), text)?;
        }
        Ok(report)
    }
}

fn hydro_samples(t: &Trajectory) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    t.snapshots.iter().map(|s| (s.time, s.rho.values().to_vec(), s.potential().into_values())).collect()
}

/// Oracle phase is written as `h arg psi`, wrapped to `(-pi h, pi h]`;
/// unwrapping would fail wherever the tails underflow.
fn oracle_samples(states: &[WaveState], p: &PhysicalParams) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    states
        .iter()
        .map(|w| {
            let s = w.psi().iter().map(|c| p.hbar_kin * c.arg()).collect();
            (w.time, w.density().into_values(), s)
        })
        .collect()
}

fn analytic_width(config: &ScenarioConfig, p: &PhysicalParams) -> Option<impl Fn(f64) -> f64> {
    let plain = matches!(config.potential, PotentialConfig::None) && p.n_max == 1 && !p.pressure_term;
    match config.initial_condition {
        InitialCondition::Gaussian { sigma, .. } if plain => {
            let h = p.hbar_kin;
            Some(move |t: f64| sigma * (1.0 + (h * t / (2.0 * sigma * sigma)).powi(2)).sqrt())
        }
        _ => None,
    }
}

fn summarize(traj: &Trajectory) -> Summary {
    let m0 = &traj.monitors[0];
    let rho0 = &traj.snapshots[0].rho;
    let scale = if m0.energy != 0.0 { m0.energy.abs() } else { 1.0 };
    let fold = |f: &dyn Fn(&qhd::Monitors) -> f64| traj.monitors.iter().map(f).fold(0.0, f64::max);
    Summary {
        final_time: traj.snapshots.last().map_or(0.0, |s| s.time),
        mass_drift: fold(&|m| (m.mass - m0.mass).abs()) / m0.mass,
        energy_drift: fold(&|m| (m.energy - m0.energy).abs()) / scale,
        density_drift: traj.snapshots.iter().map(|s| s.rho.max_abs_diff(rho0)).fold(0.0, f64::max) / rho0.max(),
        min_density: traj.monitors.iter().map(|m| m.min_density).fold(f64::INFINITY, f64::min),
    }
}

fn width_table(config: &ScenarioConfig, p: &PhysicalParams, snapshots: &[HydroState]) -> Vec<WidthRow> {
    let law = analytic_width(config, p);
    snapshots
        .iter()
        .map(|s| {
            let (centroid, sigma) = s.rho.centroid_width();
            WidthRow { time: s.time, centroid, sigma, sigma_analytic: law.as_ref().map(|f| f(s.time)) }
        })
        .collect()
}

fn comparison(series: Vec<CompareMetrics>) -> Comparison {
    let worst = |f: fn(&CompareMetrics) -> f64| series.iter().map(f).fold(0.0, f64::max);
    Comparison {
        worst_rho_l2_rel: worst(|m| m.rho_l2_rel),
        worst_rho_max_rel: worst(|m| m.rho_max_rel),
        worst_velocity_rms: worst(|m| m.velocity_rms),
        worst_velocity_max: worst(|m| m.velocity_max),
        series,
    }
}

/// Quadrature moments of the kernel as used, next to the small-core closed
/// form where one exists.
pub fn moments_of(spec: &KernelSpec) -> qhd::Result<MomentsReport> {
    let table = MomentTable::from_kernel(spec, DEFAULT_MAX_ORDER)?;
    let a = table.a();
    let (name, n0, ell_over_a) = match spec {
        KernelSpec::HardCoreExponential { n0, ell, .. } => ("hard_core_exponential", Some(*n0), Some(ell / a)),
        KernelSpec::Tabulated { .. } => ("tabulated", None, None),
    };
    let mut rows = Vec::new();
    for (&n, &q) in &table.c {
        let closed = ell_over_a.map(|r| kernel::closed_form_c2n(n, r)).transpose()?;
        rows.push(MomentRow {
            n,
            c2n_quadrature: q,
            c2n_closed_form: closed,
            relative_deviation: closed.map(|c| (q - c).abs() / c.abs()),
        });
    }
    Ok(MomentsReport { kernel: name, n0, a_squared: table.a_squared, a, ell_over_a, rows })
}

fn write_moments(w: &mut Writer, m: &MomentsReport) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        n: u32,
        n0: Option<f64>,
        a_squared: f64,
        ell_over_a: Option<f64>,
        c2n_quadrature: f64,
        c2n_closed_form: Option<f64>,
        relative_deviation: Option<f64>,
    }
    w.json("moments.json", m)?;
    w.csv(
        "moments.csv",
        m.rows.iter().map(|r| Row {
            n: r.n,
            n0: m.n0,
            a_squared: m.a_squared,
            ell_over_a: m.ell_over_a,
            c2n_quadrature: r.c2n_quadrature,
            c2n_closed_form: r.c2n_closed_form,
            relative_deviation: r.relative_deviation,
        }),
    )
}

/// The `moments` subcommand.
pub fn moments_report(loaded: &LoadedConfig, dir: &Path) -> std::result::Result<RunReport, Failure> {
    let start = Instant::now();
    let config = &loaded.config;
    let kernel = config.kernel.as_ref().ok_or_else(|| qhd::Error::Config {
        key: "kernel".into(),
        message: "a moments report needs a kernel".into(),
    })?;
    let spec = kernel.spec()?;
    let moments = moments_of(&spec)?;
    let mut w = Writer::new(dir, config)?;
    write_moments(&mut w, &moments)?;
    let report = RunReport {
        scenario: config.name.clone(),
        pipelines: vec!["moments"],
        summary: None,
        monitors: Vec::new(),
        width: Vec::new(),
        comparison: None,
        moments: Some(moments),
        files: Vec::new(),
        directory: PathBuf::new(),
        wall_clock: Duration::ZERO,
    };
    let mut report = w.finish(report)?;
    report.wall_clock = start.elapsed();
    Ok(report)
}

/// The `run` and `compare` subcommands.
pub fn run_scenario(loaded: &LoadedConfig, dir: &Path, pipeline: Pipeline) -> std::result::Result<RunReport, Failure> {
    let start = Instant::now();
    let config = &loaded.config;
    let scenario: Scenario = config.build(loaded.base_dir())?;
    let with_oracle = pipeline == Pipeline::Compare || config.integration.oracle;

    let traj = scenario.run_hydro()?;
    let oracle = if with_oracle { Some(scenario.run_oracle()?) } else { None };

    let mut w = Writer::new(dir, config)?;
    let x = scenario.grid.coordinates();
    w.snapshots("snapshots", &hydro_samples(&traj), &x)?;
    let monitors: Vec<MonitorRow> = traj
        .monitors
        .iter()
        .map(|m| MonitorRow { time: m.time, mass: m.mass, energy: m.energy, min_density: m.min_density })
        .collect();
    w.csv("monitors.csv", &monitors)?;
    let width = width_table(config, &scenario.params, &traj.snapshots);
    w.csv("width.csv", &width)?;

    let mut pipelines = vec!["hydro"];
    let comparison = match &oracle {
        Some(states) => {
            pipelines.push("oracle");
            w.snapshots("oracle", &oracle_samples(states, &scenario.params), &x)?;
            let series = qhd::qm_oracle::compare(&traj.snapshots, states, &scenario.params)?;
            w.csv("compare.csv", &series)?;
            Some(comparison(series))
        }
        None => None,
    };
    let moments = match &scenario.kernel {
        Some(spec) => {
            let m = moments_of(spec)?;
            write_moments(&mut w, &m)?;
            Some(m)
        }
        None => None,
    };

    let report = RunReport {
        scenario: config.name.clone(),
        pipelines,
        summary: Some(summarize(&traj)),
        monitors,
        width,
        comparison,
        moments,
        files: Vec::new(),
        directory: PathBuf::new(),
        wall_clock: Duration::ZERO,
    };
    let mut report = w.finish(report)?;
    report.wall_clock = start.elapsed();
    Ok(report)
}
