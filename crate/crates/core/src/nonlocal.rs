//! Potentials and forces of the nonlocal chemical-potential hierarchy.
//!
//! Every function floors the density at `RHO_FLOOR * max(rho)` before taking
//! logarithms, square roots or quotients, so exponentially small tails stay
//! finite. Units are kinematic (per unit mass) and `h` denotes `hbar/m`.
//!
//! The thermal parametrisation `(kT/m) a^2` and the quantum one `h^2/4` are
//! the same number when `h^2/2 = 2 (kT/m) a^2`; [`PhysicalParams`] checks
//! that relation whenever both sides are supplied.

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::kernel::MomentTable;

/// Relative density floor.
pub const RHO_FLOOR: f64 = 1e-12;

/// External potential `phi(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ExternalPotential {
    None,
    /// `omega^2 (x - center)^2 / 2`; the centre defaults to the middle of the grid.
    Harmonic {
        omega: f64,
        center: Option<f64>,
    },
    /// Piecewise-linear through `(x[i], values[i])`, held constant past either end.
    Tabulated {
        x: Vec<f64>,
        values: Vec<f64>,
    },
}

impl ExternalPotential {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExternalPotential::None => Ok(()),
            ExternalPotential::Harmonic { omega, center } => {
                if !omega.is_finite() || center.is_some_and(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter("harmonic omega and center must be finite".into()));
                }
                Ok(())
            }
            ExternalPotential::Tabulated { x, values } => {
                if x.is_empty() || x.len() != values.len() {
                    return Err(Error::InvalidParameter(
                        "tabulated potential needs matching, non-empty x and values".into(),
                    ));
                }
                if x.iter().chain(values).any(|v| !v.is_finite()) || x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidParameter(
                        "tabulated potential x must ascend and all entries be finite".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, grid: &Grid, x: f64) -> f64 {
        match self {
            ExternalPotential::None => 0.0,
            ExternalPotential::Harmonic { omega, center } => {
                let c = center.unwrap_or(grid.length() / 2.0);
                0.5 * omega * omega * (x - c) * (x - c)
            }
            ExternalPotential::Tabulated { x: xs, values } => {
                let n = xs.len();
                if x <= xs[0] {
                    return values[0];
                }
                if x >= xs[n - 1] {
                    return values[n - 1];
                }
                let i = xs.partition_point(|&r| r <= x) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }

    /// `d phi / dx`, exact for each variant. The harmonic well is not periodic,
    /// so a spectral derivative of its samples would ring.
    pub fn slope(&self, grid: &Grid, x: f64) -> f64 {
        match self {
            ExternalPotential::None => 0.0,
            ExternalPotential::Harmonic { omega, center } => {
                omega * omega * (x - center.unwrap_or(grid.length() / 2.0))
            }
            ExternalPotential::Tabulated { x: xs, values } => {
                let n = xs.len();
                if n < 2 || x < xs[0] || x >= xs[n - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&r| r <= x) - 1;
                (values[i + 1] - values[i]) / (xs[i + 1] - xs[i])
            }
        }
    }

    pub fn sample_slope(&self, grid: &Grid) -> Vec<f64> {
        grid.coordinates().into_iter().map(|x| self.slope(grid, x)).collect()
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.coordinates().into_iter().map(|x| self.eval(grid, x)).collect()
    }

    pub fn field(&self, grid: &Grid) -> Result<ScalarField> {
        ScalarField::new(grid, self.sample(grid))
    }
}

/// Material and quantum parameters shared by the potential evaluators and the
/// solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    pub mass: f64,
    pub kt_over_m: f64,
    /// Kinematic Planck constant `hbar / m`.
    pub hbar_kin: f64,
    pub potential: ExternalPotential,
    pub pressure_term: bool,
    pub n_max: u32,
    pub moments: Option<MomentTable>,
}

impl PhysicalParams {
    /// Pure Bohm fluid: unit mass, no pressure, no external potential, `n_max = 1`.
    pub fn bohm(hbar_kin: f64) -> Self {
        Self {
            mass: 1.0,
            kt_over_m: 0.0,
            hbar_kin,
            potential: ExternalPotential::None,
            pressure_term: false,
            n_max: 1,
            moments: None,
        }
    }

    pub fn with_potential(mut self, potential: ExternalPotential) -> Self {
        self.potential = potential;
        self
    }

    /// Derive `h` from temperature and kernel length through `h^2/2 = 2 (kT/m) a^2`.
    pub fn from_kernel(kt_over_m: f64, moments: MomentTable, n_max: u32) -> Result<Self> {
        if !(kt_over_m > 0.0 && kt_over_m.is_finite()) {
            return Err(Error::InvalidParameter("kT/m must be positive to derive hbar from the kernel".into()));
        }
        let hbar_kin = (4.0 * kt_over_m * moments.a_squared).sqrt();
        let p = Self { kt_over_m, hbar_kin, n_max, moments: Some(moments), ..Self::bohm(hbar_kin) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.kt_over_m >= 0.0 && self.kt_over_m.is_finite()) {
            return bad(format!("kT/m must be >= 0, got {}", self.kt_over_m));
        }
        if !(self.hbar_kin > 0.0 && self.hbar_kin.is_finite()) {
            return bad(format!("hbar_kin must be positive, got {}", self.hbar_kin));
        }
        if self.pressure_term && self.kt_over_m <= 0.0 {
            return bad("pressure term needs kT/m > 0".into());
        }
        if self.n_max == 0 {
            return bad("n_max must be >= 1".into());
        }
        if let Some(m) = &self.moments {
            if self.kt_over_m > 0.0 {
                let lhs = self.hbar_kin * self.hbar_kin / 2.0;
                let rhs = 2.0 * self.kt_over_m * m.a_squared;
                if ((lhs - rhs) / lhs).abs() > 1e-10 {
                    return bad(format!("hbar^2/2 = {lhs:e} disagrees with 2 (kT/m) a^2 = {rhs:e}"));
                }
            }
            for n in 2..=self.n_max {
                m.c2n(n)?;
            }
        } else if self.n_max >= 2 {
            return bad("n_max >= 2 needs a moment table".into());
        }
        self.potential.validate()
    }
}

/// Which closed form of the Bohm potential to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BohmForm {
    /// `-(h^2/2) lap(sqrt rho) / sqrt rho`
    #[default]
    SqrtRho,
    /// `-(h^2/4) [lap ln rho + (grad ln rho)^2 / 2]`
    Log,
}

/// `max(rho, 0) + RHO_FLOOR * max rho`, rejecting densities with no positive
/// value. Adding the floor keeps the profile smooth; a hard clamp would put a
/// kink into every tail whose spectral ringing reaches the bulk at the 1e-6 level.
pub fn floored(rho: &[f64]) -> Result<Vec<f64>> {
    let mx = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(mx > 0.0) || !mx.is_finite() {
        return Err(Error::NonPositiveDensity);
    }
    let fl = RHO_FLOOR * mx;
    Ok(rho.iter().map(|&v| v.max(0.0) + fl).collect())
}

fn wrap(grid: &Grid, v: Vec<f64>) -> Result<ScalarField> {
    ScalarField::new(grid, v)
}

/// `lap ln rho + (grad ln rho)^2 / 2` on a floored density.
fn log_bracket(grid: &Grid, r: &[f64]) -> Vec<f64> {
    let ln: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let g = grid.gradient(&ln);
    let l = grid.laplacian(&ln);
    l.iter().zip(&g).map(|(a, b)| a + 0.5 * b * b).collect()
}

/// `2 lap(sqrt rho) / sqrt rho` on a floored density.
fn sqrt_bracket(grid: &Grid, r: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = r.iter().map(|v| v.sqrt()).collect();
    let l = grid.laplacian(&s);
    l.iter().zip(&s).map(|(a, b)| 2.0 * a / b).collect()
}

/// Both sides of the identity `lap ln rho + (grad ln rho)^2/2 = 2 lap sqrt(rho)/sqrt(rho)`.
pub fn identity_sides(rho: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    Ok((wrap(g, log_bracket(g, &r))?, wrap(g, sqrt_bracket(g, &r))?))
}

/// Thermodynamic chemical potential: `(kT/m)(ln rho + 1) + phi` with the
/// pressure term on, `phi` alone otherwise.
pub fn thermo_potential(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    let phi = p.potential.sample(g);
    let v =
        if p.pressure_term { r.iter().zip(&phi).map(|(d, f)| p.kt_over_m * (d.ln() + 1.0) + f).collect() } else { phi };
    wrap(g, v)
}

/// Bohm's quantum potential through the square-root form.
pub fn bohm_potential(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    bohm_potential_with(rho, p, BohmForm::SqrtRho)
}

pub fn bohm_potential_with(rho: &ScalarField, p: &PhysicalParams, form: BohmForm) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    let h2 = p.hbar_kin * p.hbar_kin;
    let b = match form {
        BohmForm::SqrtRho => sqrt_bracket(g, &r),
        BohmForm::Log => log_bracket(g, &r),
    };
    wrap(g, b.into_iter().map(|v| -0.25 * h2 * v).collect())
}

/// Second-order nonlocal potential in thermal parameters,
/// `-(kT/m) a^2 [lap ln rho + (grad ln rho)^2 / 2]`. Equal to the Bohm
/// potential when `h^2 = 4 (kT/m) a^2`.
pub fn thermal_nonlocal_potential(rho: &ScalarField, kt_over_m: f64, a_squared: f64) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    wrap(g, log_bracket(g, &r).into_iter().map(|v| -kt_over_m * a_squared * v).collect())
}

/// Korteweg force `-grad Q`, evaluated as `-(1/rho) d P_Q` (unit mass). The
/// stress is weighted by the density, so floored tails do not feed ringing
/// back into the bulk the way a direct derivative of `Q` would.
pub fn korteweg_force(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    let d = g.gradient(&r);
    let l = g.laplacian(&r);
    let sigma: Vec<f64> = l.iter().zip(&d).zip(&r).map(|((l, d), r)| l - d * d / r).collect();
    let h2 = p.hbar_kin * p.hbar_kin;
    wrap(g, g.gradient(&sigma).iter().zip(&r).map(|(ds, r)| 0.25 * h2 * ds / r).collect())
}

/// The same force written as `(h^2/4) grad[lap ln rho + (grad ln rho)^2/2]`.
pub fn korteweg_force_log(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    let b = log_bracket(g, &r);
    let h2 = p.hbar_kin * p.hbar_kin;
    wrap(g, g.gradient(&b).into_iter().map(|v| 0.25 * h2 * v).collect())
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// Coefficient `(kT/m) (-1)^n c_2n a^(2n) / (2n)!`, with `(kT/m) a^2` taken as
/// `h^2/4` so the hierarchy is defined even when only `h` is supplied.
pub(crate) fn order_coefficient(n: u32, p: &PhysicalParams) -> Result<f64> {
    if n > p.n_max {
        return Err(Error::OrderAboveTruncation { n, n_max: p.n_max });
    }
    let m = p.moments.as_ref().ok_or(Error::MissingMoment(2 * n))?;
    let c = m.c2n(n)?;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let h2 = p.hbar_kin * p.hbar_kin;
    Ok(0.25 * h2 * m.a_squared.powi(n as i32 - 1) * sign * c / factorial(2 * n))
}

/// `[rho^-1 d^2n rho + d^2n ln rho]` on a floored density.
fn order_bracket(grid: &Grid, r: &[f64], n: u32) -> Vec<f64> {
    let ln: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let dr = grid.derivative(r, 2 * n);
    let dl = grid.derivative(&ln, 2 * n);
    dr.iter().zip(&dl).zip(r).map(|((a, b), d)| a / d + b).collect()
}

/// Order-`n` nonlocal potential,
/// `(kT/m)(-1)^n c_2n/(2n)! a^(2n) [rho^-1 d^2n rho + d^2n ln rho]`.
pub fn higher_order_potential(rho: &ScalarField, n: u32, p: &PhysicalParams) -> Result<ScalarField> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("higher-order potential needs n >= 2, got {n}")));
    }
    let c = order_coefficient(n, p)?;
    let g = rho.grid();
    let r = floored(rho.values())?;
    wrap(g, order_bracket(g, &r, n).into_iter().map(|v| c * v).collect())
}

/// Sum of the thermodynamic, Bohm and higher-order potentials up to `n_max`.
pub fn total_potential(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    let mut mu = thermo_potential(rho, p)?.zip_with(&bohm_potential(rho, p)?, |a, b| a + b)?;
    for n in 2..=p.n_max {
        mu = mu.zip_with(&higher_order_potential(rho, n, p)?, |a, b| a + b)?;
    }
    Ok(mu)
}

/// `-grad` of [`total_potential`]. The external slope is exact, the
/// pressure part is `(kT/m) grad rho / rho` and the Bohm part comes from
/// [`korteweg_force`].
pub fn total_specific_force(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    let mut f = korteweg_force(rho, p)?.into_values();
    for (fi, s) in f.iter_mut().zip(p.potential.sample_slope(g)) {
        *fi -= s;
    }
    if p.pressure_term {
        let d = g.gradient(&r);
        for ((fi, d), r) in f.iter_mut().zip(&d).zip(&r) {
            *fi -= p.kt_over_m * d / r;
        }
    }
    for n in 2..=p.n_max {
        let dmu = higher_order_potential(rho, n, p)?.gradient();
        for (fi, d) in f.iter_mut().zip(dmu.values()) {
            *fi -= d;
        }
    }
    wrap(g, f)
}

/// Scalar quantum stress `P_Q = -(m h^2/4) rho d^2 ln rho`.
pub fn quantum_stress(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    let g = rho.grid();
    let r = floored(rho.values())?;
    let ln: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let c = -0.25 * p.mass * p.hbar_kin * p.hbar_kin;
    wrap(g, g.laplacian(&ln).iter().zip(&r).map(|(l, d)| c * d * l).collect())
}

/// `d P_Q / dx`; for unit mass this equals `rho dQ/dx`.
pub fn quantum_stress_divergence(rho: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    Ok(quantum_stress(rho, p)?.gradient())
}
