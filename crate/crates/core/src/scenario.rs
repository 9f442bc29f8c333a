//! Declarative scenario description and its translation into solver inputs.
//!
//! The types here deserialize from any serde format; the command-line tool
//! reads them from TOML. Validation reports the dotted key at fault so the
//! caller can point at the offending line.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::hydro::{HydroState, Regularization, Solver, Trajectory};
use crate::kernel::{self, KernelSpec, MomentTable, DEFAULT_MAX_ORDER};
use crate::nonlocal::{ExternalPotential, PhysicalParams};
use crate::qm_oracle::{self, WaveState};

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn is_false(b: &bool) -> bool {
    !*b
}
fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub initial_condition: InitialCondition,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<Regularization>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub length: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub dealias: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub kt_over_m: f64,
    /// Omit to derive it from the kernel through `h^2/2 = 2 (kT/m) a^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar_kin: Option<f64>,
    #[serde(default)]
    pub pressure_term: bool,
    #[serde(default = "one_u32")]
    pub n_max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    HardCoreExponential {
        /// Ignored when `normalize` is set.
        #[serde(default)]
        n0: f64,
        n1: f64,
        d: f64,
        ell: f64,
        #[serde(default = "yes")]
        normalize: bool,
    },
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
        #[serde(default = "default_tail_cutoff")]
        tail_cutoff: f64,
        #[serde(default = "yes")]
        normalize: bool,
    },
}

fn default_tail_cutoff() -> f64 {
    kernel::TAIL_CUTOFF_RANGES
}

impl KernelConfig {
    pub fn spec(&self) -> Result<KernelSpec> {
        let (k, norm) = match self {
            KernelConfig::HardCoreExponential { n0, n1, d, ell, normalize } => {
                (KernelSpec::hard_core_exponential(*n0, *n1, *d, *ell)?, *normalize)
            }
            KernelConfig::Tabulated { radii, values, tail_cutoff, normalize } => {
                (KernelSpec::tabulated(radii.clone(), values.clone(), *tail_cutoff)?, *normalize)
            }
        };
        if norm {
            kernel::normalize(&k)
        } else {
            Ok(k)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    None,
    Harmonic {
        omega: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<f64>,
    },
    Tabulated {
        x: Vec<f64>,
        values: Vec<f64>,
    },
}

impl PotentialConfig {
    pub fn to_potential(&self) -> ExternalPotential {
        match self {
            PotentialConfig::None => ExternalPotential::None,
            PotentialConfig::Harmonic { omega, center } => {
                ExternalPotential::Harmonic { omega: *omega, center: *center }
            }
            PotentialConfig::Tabulated { x, values } => {
                ExternalPotential::Tabulated { x: x.clone(), values: values.clone() }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Unit-mass Gaussian density of standard deviation `sigma` moving
    /// uniformly at `velocity`.
    Gaussian {
        center: f64,
        sigma: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        velocity: f64,
    },
    /// Unit-mass ground state of the harmonic potential, optionally displaced
    /// from the well centre (which makes it a coherent state).
    HarmonicGroundState {
        #[serde(default, skip_serializing_if = "is_zero")]
        displacement: f64,
    },
    /// Comma-separated columns `x, rho[, S]` with one row per grid point;
    /// the path is relative to the scenario file.
    FromFile { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    /// Also run the Schrödinger oracle and report comparison metrics.
    #[serde(default, skip_serializing_if = "is_false")]
    pub oracle: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: default_formats() }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

fn require(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(key, message))
    }
}

impl ScenarioConfig {
    /// Check every field that can be checked without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        require(g.n_points >= 16 && g.n_points.is_power_of_two(), "grid.n_points", "must be a power of two >= 16")?;
        require(g.length.is_finite() && g.length > 0.0, "grid.length", "must be positive")?;

        let ph = &self.physics;
        require(ph.mass.is_finite() && ph.mass > 0.0, "physics.mass", "must be positive")?;
        require(ph.kt_over_m.is_finite() && ph.kt_over_m >= 0.0, "physics.kt_over_m", "must be >= 0")?;
        require(!ph.pressure_term || ph.kt_over_m > 0.0, "physics.pressure_term", "needs kt_over_m > 0")?;
        require(ph.n_max >= 1, "physics.n_max", "must be >= 1")?;
        match (ph.hbar_kin, &self.kernel) {
            (Some(_), Some(_)) => {
                return Err(config_err("physics.hbar_kin", "give either hbar_kin or a kernel, not both"))
            }
            (None, None) => return Err(config_err("physics.hbar_kin", "give either hbar_kin or a kernel")),
            (Some(h), None) => {
                require(h.is_finite() && h > 0.0, "physics.hbar_kin", "must be positive")?;
                require(ph.n_max == 1, "physics.n_max", "orders above 1 need a kernel for their moments")?;
            }
            (None, Some(k)) => {
                require(
                    ph.kt_over_m > 0.0,
                    "physics.kt_over_m",
                    "must be positive to derive hbar_kin from the kernel",
                )?;
                require(ph.n_max <= DEFAULT_MAX_ORDER, "physics.n_max", "at most 4 orders are tabulated")?;
                k.spec().map_err(|e| config_err("kernel", e.to_string()))?;
            }
        }

        self.potential.to_potential().validate().map_err(|e| config_err("potential", e.to_string()))?;

        match &self.initial_condition {
            InitialCondition::Gaussian { center, sigma, velocity } => {
                require(sigma.is_finite() && *sigma > 0.0, "initial_condition.sigma", "must be positive")?;
                require(
                    center.is_finite() && *center >= 0.0 && *center < g.length,
                    "initial_condition.center",
                    "must lie inside [0, length)",
                )?;
                require(velocity.is_finite(), "initial_condition.velocity", "must be finite")?;
                if let Some(h) = ph.hbar_kin {
                    // The phase exp(i v x / h) must be periodic on the domain.
                    let winding = velocity * g.length / (2.0 * PI * h);
                    require(
                        (winding - winding.round()).abs() < 1e-9,
                        "initial_condition.velocity",
                        "velocity * length / (2 pi hbar_kin) must be an integer on a periodic domain",
                    )?;
                }
            }
            InitialCondition::HarmonicGroundState { displacement } => {
                require(
                    matches!(self.potential, PotentialConfig::Harmonic { .. }),
                    "initial_condition.type",
                    "harmonic_ground_state needs a harmonic potential",
                )?;
                require(displacement.is_finite(), "initial_condition.displacement", "must be finite")?;
            }
            InitialCondition::FromFile { path } => {
                require(!path.trim().is_empty(), "initial_condition.path", "must not be empty")?;
            }
        }

        let it = &self.integration;
        require(it.dt.is_finite() && it.dt > 0.0, "integration.dt", "must be positive")?;
        require(it.t_end.is_finite() && it.t_end > 0.0, "integration.t_end", "must be positive")?;
        require(it.sample_every >= 1, "integration.sample_every", "must be >= 1")?;
        if let Some(r) = &self.regularization {
            r.validate().map_err(|e| config_err("regularization", e.to_string()))?;
        }
        Ok(())
    }

    /// Validate and assemble solver inputs. `base_dir` resolves relative
    /// paths inside the config.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario> {
        self.validate()?;
        let grid = Grid::new(self.grid.n_points, self.grid.length)?.with_dealiasing(self.grid.dealias);
        let potential = self.potential.to_potential();
        let ph = &self.physics;
        let (params, kernel) = match &self.kernel {
            Some(k) => {
                let spec = k.spec()?;
                let moments = MomentTable::from_kernel(&spec, DEFAULT_MAX_ORDER.max(ph.n_max))?;
                let mut p = PhysicalParams::from_kernel(ph.kt_over_m, moments, ph.n_max)?;
                p.mass = ph.mass;
                p.pressure_term = ph.pressure_term;
                p.potential = potential;
                (p, Some(spec))
            }
            None => {
                let mut p = PhysicalParams::bohm(ph.hbar_kin.expect("validated"));
                p.mass = ph.mass;
                p.kt_over_m = ph.kt_over_m;
                p.pressure_term = ph.pressure_term;
                p.potential = potential;
                (p, None)
            }
        };
        params.validate()?;
        let initial = self.initial_state(&grid, &params, base_dir)?;
        Ok(Scenario {
            grid,
            params,
            kernel,
            initial,
            regularization: self.regularization.unwrap_or_default(),
            dt: self.integration.dt,
            t_end: self.integration.t_end,
            sample_every: self.integration.sample_every,
        })
    }

    fn initial_state(&self, grid: &Grid, p: &PhysicalParams, base_dir: &Path) -> Result<HydroState> {
        match &self.initial_condition {
            InitialCondition::Gaussian { center, sigma, velocity } => {
                let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
                let rho = ScalarField::from_fn(grid, |x| norm * (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp())?;
                let v = ScalarField::constant(grid, *velocity)?;
                HydroState::from_velocity(rho, &v, 0.0, 0.0)
            }
            InitialCondition::HarmonicGroundState { displacement } => {
                let (omega, c) = match &p.potential {
                    ExternalPotential::Harmonic { omega, center } => (*omega, center.unwrap_or(grid.length() / 2.0)),
                    _ => return Err(config_err("initial_condition.type", "needs a harmonic potential")),
                };
                let h = p.hbar_kin;
                let norm = (omega / (PI * h)).sqrt();
                let x0 = c + displacement;
                HydroState::at_rest(ScalarField::from_fn(grid, |x| norm * (-omega * (x - x0).powi(2) / h).exp())?)
            }
            InitialCondition::FromFile { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| config_err("initial_condition.path", format!("{}: {e}", full.display())))?;
                let (rho, s) = parse_profile(&text, grid.n_points())
                    .map_err(|m| config_err("initial_condition.path", format!("{}: {m}", full.display())))?;
                let rho = ScalarField::new(grid, rho)?;
                let s = ScalarField::new(grid, s)?;
                HydroState::from_potential(rho, &s, 0.0)
            }
        }
    }
}

/// Parse `x, rho[, S]` rows, skipping blank lines and a non-numeric header.
fn parse_profile(text: &str, n: usize) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let mut rho = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        match nums {
            Ok(v) if v.len() == 2 || v.len() == 3 => {
                rho.push(v[1]);
                s.push(v.get(2).copied().unwrap_or(0.0));
            }
            Ok(v) => return Err(format!("line {}: expected 2 or 3 columns, found {}", i + 1, v.len())),
            Err(_) if rho.is_empty() => continue,
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    if rho.len() != n {
        return Err(format!("{} rows for a {n}-point grid", rho.len()));
    }
    Ok((rho, s))
}

/// Everything needed to run a scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub grid: Grid,
    pub params: PhysicalParams,
    /// The kernel as used (normalised if requested).
    pub kernel: Option<KernelSpec>,
    pub initial: HydroState,
    pub regularization: Regularization,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
}

impl Scenario {
    pub fn solver(&self) -> Result<Solver> {
        Solver::new(&self.grid, &self.params, self.regularization)
    }

    pub fn run_hydro(&self) -> Result<Trajectory> {
        self.solver()?.run(&self.initial, self.t_end, self.dt, self.sample_every)
    }

    /// The oracle starts from the Madelung image of the hydro initial state.
    pub fn run_oracle(&self) -> Result<Vec<WaveState>> {
        let psi0 = qm_oracle::from_hydro(&self.initial, &self.params)?;
        qm_oracle::run(&psi0, &self.params, self.t_end, self.dt, self.sample_every)
    }
}
