//! Madelung fluid evolution.
//!
//! The solver advances mass density `rho` and momentum density `j = rho v`
//! (both per unit mass) with a conservative update:
//!
//! ```text
//! d_t rho = -d_x j
//! d_t j   = -d_x (j v - sigma + P) - rho d_x phi - rho d_x mu_hi
//! ```
//!
//! where `sigma = (h^2/4) rho d_x^2 ln rho` is minus the quantum stress, `P`
//! the ideal-gas pressure and `mu_hi` the higher-order nonlocal potentials.
//! Away from vacuum this is the Hamilton–Jacobi system for `(rho, S)` with
//! `v = d_x S`; [`rhs`] still evaluates that form for diagnostics.
//!
//! Tails that fall many decades below the peak carry no information but
//! make `v = j/rho` and `d_x^2 ln rho` arbitrarily noisy. [`Regularization`]
//! tapers the velocity and stress there with a smooth mask, freezes momentum
//! one level further out, and damps the top of the spectrum with an
//! exponential filter applied through an integrating factor so the time
//! stepper stays fourth order.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::nonlocal::{self, PhysicalParams, RHO_FLOOR};

/// Vacuum treatment for the hydrodynamic solver.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regularization {
    /// Relative density below which velocity and quantum stress are tapered off.
    pub inner_threshold: f64,
    /// Relative density below which momentum stops responding to forces.
    pub outer_threshold: f64,
    /// Width of both tapers in natural-log units of density.
    pub width: f64,
    /// Damping rate of the Nyquist mode, per unit time.
    pub filter_rate: f64,
    /// Exponent `p` of the filter profile `(|k|/k_max)^p`.
    pub filter_order: i32,
}

impl Default for Regularization {
    fn default() -> Self {
        Self { inner_threshold: 1e-7, outer_threshold: 1e-9, width: 2.0, filter_rate: 3.6e4, filter_order: 8 }
    }
}

impl Regularization {
    /// No masking and no filtering: the bare equations.
    pub fn none() -> Self {
        Self { inner_threshold: 0.0, outer_threshold: 0.0, width: 1.0, filter_rate: 0.0, filter_order: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.inner_threshold >= 0.0
            && self.outer_threshold >= 0.0
            && self.inner_threshold < 1.0
            && self.outer_threshold < 1.0
            && self.width > 0.0
            && self.filter_rate >= 0.0
            && self.filter_order > 0
            && self.width.is_finite()
            && self.filter_rate.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad regularization {self:?}")))
        }
    }

    fn mask(threshold: f64, width: f64, r: f64, reference: f64) -> f64 {
        if threshold == 0.0 {
            return 1.0;
        }
        0.5 * libm::erfc(-(r / (threshold * reference)).ln() / width)
    }
}

/// Madelung-side state: density, momentum density and time.
///
/// The velocity potential `S` is not stored; [`HydroState::potential`]
/// reconstructs it from the (vacuum-tapered) velocity, pinned to
/// `s_pin` at the density maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct HydroState {
    pub rho: ScalarField,
    pub momentum: ScalarField,
    pub s_pin: f64,
    pub time: f64,
}

impl HydroState {
    /// State from a density and a periodic velocity potential.
    pub fn from_potential(rho: ScalarField, s: &ScalarField, time: f64) -> Result<Self> {
        if rho.grid() != s.grid() {
            return Err(Error::GridMismatch);
        }
        let v = s.gradient();
        let imax = argmax(rho.values());
        let s_pin = s.values()[imax];
        Self::from_velocity(rho, &v, s_pin, time)
    }

    /// State from a density and a velocity field (which may carry a uniform
    /// drift that no periodic potential can represent).
    pub fn from_velocity(rho: ScalarField, v: &ScalarField, s_pin: f64, time: f64) -> Result<Self> {
        if rho.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        let rho = checked_density(rho)?;
        let momentum = rho.zip_with(v, |a, b| a * b)?;
        Ok(Self { rho, momentum, s_pin, time })
    }

    /// Density at rest.
    pub fn at_rest(rho: ScalarField) -> Result<Self> {
        let zero = ScalarField::constant(rho.grid(), 0.0)?;
        Self::from_velocity(rho, &zero, 0.0, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn mass(&self) -> f64 {
        self.rho.integrate()
    }

    /// `j / rho`, tapered to zero in vacuum with the default regularization.
    pub fn velocity(&self) -> ScalarField {
        self.velocity_with(&Regularization::default())
    }

    pub fn velocity_with(&self, reg: &Regularization) -> ScalarField {
        let r = self.rho.values();
        let mx = max(r);
        let fl = RHO_FLOOR * mx;
        let v = r
            .iter()
            .zip(self.momentum.values())
            .map(|(&d, &j)| {
                let rr = d.max(fl);
                Regularization::mask(reg.inner_threshold, reg.width, rr, mx) * j / rr
            })
            .collect();
        ScalarField::new(self.grid(), v).expect("finite velocity from finite state")
    }

    /// Velocity potential `S` with `v = dS/dx`, pinned so that `S` at the
    /// density maximum equals `s_pin`. A uniform drift appears as a linear ramp.
    pub fn potential(&self) -> ScalarField {
        let g = self.grid();
        let v = self.velocity();
        let (mut s, mean) = g.antiderivative(v.values());
        for (i, x) in g.coordinates().into_iter().enumerate() {
            s[i] += mean * x;
        }
        let imax = argmax(self.rho.values());
        let off = self.s_pin - s[imax];
        s.iter_mut().for_each(|v| *v += off);
        ScalarField::new(g, s).expect("finite potential")
    }
}

/// The stored density is the physical one, tails and all; the floor is only
/// applied inside the evaluators. Writing it into the state would put a
/// plateau of amplitude `sqrt(floor)` into the wavefunction, and that
/// plateau alone sets a stationary state breathing at about 1e-6 of the peak.
/// Negative samples are clipped with their mass handed back.
fn checked_density(rho: ScalarField) -> Result<ScalarField> {
    let mx = rho.max();
    if !(mx > 0.0) {
        return Err(Error::NonPositiveDensity);
    }
    if rho.min() >= 0.0 {
        return Ok(rho);
    }
    let mut v = rho.values().to_vec();
    clip_negative(&mut v);
    ScalarField::new(rho.grid(), v)
}

/// `d^k ln rho` for `k = 1..=K` from `g_k = rho^(k) / rho`, inverting the
/// Bell recurrence `g_k = sum_j C(k-1, j-1) u_j g_(k-j)` with `g_0 = 1`.
fn log_derivatives(ratios: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut logs: Vec<Vec<f64>> = Vec::with_capacity(ratios.len());
    for k in 1..=ratios.len() {
        let mut u = ratios[k - 1].clone();
        let mut binom = 1.0;
        for j in 1..k {
            // binom = C(k-1, j-1)
            let (uj, gk) = (&logs[j - 1], &ratios[k - j - 1]);
            u.iter_mut().zip(uj).zip(gk).for_each(|((u, a), b)| *u -= binom * a * b);
            binom *= (k - j) as f64 / j as f64;
        }
        logs.push(u);
    }
    logs
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Conserved-quantity snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub min_density: f64,
}

/// Recommended upper bound on the time step, `dt <= dx^2 / (2 pi h)`.
pub fn stable_dt(grid: &Grid, hbar_kin: f64) -> f64 {
    0.5 * grid.dx() * grid.dx() / (PI * hbar_kin)
}

/// Reusable evaluator with the external potential, its gradient and the
/// filter multipliers cached for one grid and parameter set.
#[derive(Clone, Debug)]
pub struct Solver {
    grid: Grid,
    params: PhysicalParams,
    reg: Regularization,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    filter_profile: Vec<f64>,
    ho_coeffs: Vec<(u32, f64)>,
}

impl Solver {
    pub fn new(grid: &Grid, params: &PhysicalParams, reg: Regularization) -> Result<Self> {
        params.validate()?;
        reg.validate()?;
        let phi = params.potential.sample(grid);
        let dphi = params.potential.sample_slope(grid);
        let kmax = grid.k_max();
        let filter_profile = grid.wavenumbers().iter().map(|k| (k.abs() / kmax).powi(reg.filter_order)).collect();
        let ho_coeffs =
            (2..=params.n_max).map(|n| Ok((n, nonlocal::order_coefficient(n, params)?))).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: grid.clone(), params: params.clone(), reg, phi, dphi, filter_profile, ho_coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn regularization(&self) -> &Regularization {
        &self.reg
    }

    /// Time derivatives `(d rho/dt, d j/dt)` of the conservative system.
    pub fn momentum_rhs(&self, rho: &[f64], j: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = &self.grid;
        let p = &self.params;
        let n = rho.len();
        let mx = max(rho);
        if !(mx > 0.0 && mx.is_finite()) {
            return Err(Error::VacuumBreakdown(format!("max density {mx:e}")));
        }
        let fl = RHO_FLOOR * mx;
        let r: Vec<f64> = rho.iter().map(|&d| d.max(fl)).collect();
        let reg = &self.reg;
        let wi: Vec<f64> = r.iter().map(|&d| Regularization::mask(reg.inner_threshold, reg.width, d, mx)).collect();
        let wo: Vec<f64> = r.iter().map(|&d| Regularization::mask(reg.outer_threshold, reg.width, d, mx)).collect();

        let drho: Vec<f64> = g.gradient(j).into_iter().map(|v| -v).collect();

        let gr = g.gradient(rho);
        let lr = g.laplacian(rho);
        let h2 = p.hbar_kin * p.hbar_kin;
        let press = if p.pressure_term { p.kt_over_m } else { 0.0 };
        let mut flux = vec![0.0; n];
        for i in 0..n {
            let v = wi[i] * j[i] / r[i];
            let sigma = 0.25 * h2 * wi[i] * (lr[i] - gr[i] * gr[i] / r[i]);
            flux[i] = j[i] * v - sigma + press * rho[i];
        }
        let dflux = g.gradient(&flux);
        let mut force: Vec<f64> = (0..n).map(|i| -dflux[i] - rho[i] * self.dphi[i]).collect();
        if let Some(&(top, _)) = self.ho_coeffs.last() {
            // Derivatives of ln rho come from the ratios rho^(k)/rho rather
            // than from spectral derivatives of ln rho, whose slope breaks
            // where the tail meets the floor and rings across the grid.
            let ratios: Vec<Vec<f64>> =
                (1..=2 * top).map(|k| g.derivative(&r, k).iter().zip(&r).map(|(d, v)| d / v).collect()).collect();
            let logs = log_derivatives(&ratios);
            let mut mu = vec![0.0; n];
            for &(order, c) in &self.ho_coeffs {
                let k = 2 * order as usize - 1;
                for i in 0..n {
                    mu[i] += c * wi[i] * (ratios[k][i] + logs[k][i]);
                }
            }
            let dmu = g.gradient(&mu);
            for i in 0..n {
                force[i] -= rho[i] * dmu[i];
            }
        }
        for i in 0..n {
            force[i] *= wo[i];
        }
        Ok((drho, force))
    }

    fn filter(&self, f: &[f64], tau: f64) -> Vec<f64> {
        if self.reg.filter_rate == 0.0 || tau == 0.0 {
            return f.to_vec();
        }
        let rate = self.reg.filter_rate * tau;
        let prof = &self.filter_profile;
        let mut spec = self.grid.forward(f);
        for (c, w) in spec.iter_mut().zip(prof) {
            *c *= (-rate * w).exp();
        }
        self.grid.inverse(spec).into_iter().map(|c| c.re).collect()
    }

    /// One fourth-order Runge–Kutta step in integrating-factor form for the
    /// spectral filter (plain classical RK4 when the filter is off), followed
    /// by mass-conserving clipping of negative densities.
    pub fn step(&self, state: &HydroState, dt: f64) -> Result<HydroState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let u0 = [state.rho.values().to_vec(), state.momentum.values().to_vec()];
        let n = u0[0].len();
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let half = 0.5 * dt;

        let k1 = self.momentum_rhs(&u0[0], &u0[1])?;
        let k1 = [k1.0, k1.1];
        let u2: Vec<Vec<f64>> = (0..2).map(|c| self.filter(&axpy(&u0[c], half, &k1[c]), half)).collect();
        let k2 = self.momentum_rhs(&u2[0], &u2[1])?;
        let k2 = [k2.0, k2.1];
        let eu_half: Vec<Vec<f64>> = (0..2).map(|c| self.filter(&u0[c], half)).collect();
        let u3: Vec<Vec<f64>> = (0..2).map(|c| axpy(&eu_half[c], half, &k2[c])).collect();
        let k3 = self.momentum_rhs(&u3[0], &u3[1])?;
        let k3 = [k3.0, k3.1];
        let u4: Vec<Vec<f64>> =
            (0..2).map(|c| axpy(&self.filter(&u0[c], dt), dt, &self.filter(&k3[c], half))).collect();
        let k4 = self.momentum_rhs(&u4[0], &u4[1])?;
        let k4 = [k4.0, k4.1];

        let mut out = Vec::with_capacity(2);
        for c in 0..2 {
            // E(dt)(u + dt/6 k1) + dt/3 E(dt/2)(k2 + k3) + dt/6 k4
            let a = self.filter(&axpy(&u0[c], dt / 6.0, &k1[c]), dt);
            let mid: Vec<f64> = k2[c].iter().zip(&k3[c]).map(|(x, y)| x + y).collect();
            let b = self.filter(&mid, half);
            let v: Vec<f64> = (0..n).map(|i| a[i] + dt / 3.0 * b[i] + dt / 6.0 * k4[c][i]).collect();
            out.push(v);
        }
        let mut j = out.pop().expect("two components");
        let mut rho = out.pop().expect("two components");
        let time = state.time + dt;
        if rho.iter().chain(&j).any(|v| !v.is_finite()) {
            let min_density = rho.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            return Err(Error::Blowup { time, min_density });
        }
        clip_negative(&mut rho);
        // Momentum in cells at or below the floor would imply huge velocities; it is
        // already negligible there, so keep it only where density is real.
        let fl = RHO_FLOOR * max(&rho);
        for (jv, d) in j.iter_mut().zip(&rho) {
            if *d <= fl {
                *jv = 0.0;
            }
        }
        Ok(HydroState {
            rho: ScalarField::new(&self.grid, rho)?,
            momentum: ScalarField::new(&self.grid, j)?,
            s_pin: state.s_pin,
            time,
        })
    }

    /// Energy `int [rho v^2/2 + rho phi + (kT/m) rho ln rho + (h^2/8) rho (d ln rho)^2] dx`
    /// with the kinetic and gradient terms tapered like the dynamics.
    pub fn energy(&self, state: &HydroState) -> f64 {
        let g = &self.grid;
        let p = &self.params;
        let rho = state.rho.values();
        let j = state.momentum.values();
        let mx = max(rho);
        let fl = RHO_FLOOR * mx;
        let gr = g.gradient(rho);
        let h2 = p.hbar_kin * p.hbar_kin;
        let mut e = 0.0;
        for i in 0..rho.len() {
            let r = rho[i].max(fl);
            let w = Regularization::mask(self.reg.inner_threshold, self.reg.width, r, mx);
            e += w * (0.5 * j[i] * j[i] / r + 0.125 * h2 * gr[i] * gr[i] / r) + rho[i] * self.phi[i];
            if p.pressure_term {
                e += p.kt_over_m * r * r.ln();
            }
        }
        e * g.dx()
    }

    pub fn monitors(&self, state: &HydroState) -> Monitors {
        Monitors { time: state.time, mass: state.mass(), energy: self.energy(state), min_density: state.rho.min() }
    }

    /// Integrate to `t_end`, recording a snapshot and monitors every
    /// `sample_every` steps and at the end. The step is shrunk slightly if
    /// needed so that a whole number of equal steps lands on `t_end`.
    pub fn run(&self, initial: &HydroState, t_end: f64, dt: f64, sample_every: usize) -> Result<Trajectory> {
        let span = t_end - initial.time;
        if !(span > 0.0) {
            return Err(Error::InvalidParameter(format!("t_end {t_end} must exceed the start time {}", initial.time)));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let every = sample_every.max(1);
        let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let mut traj = Trajectory { snapshots: vec![initial.clone()], monitors: vec![self.monitors(initial)] };
        let mut s = initial.clone();
        for k in 1..=steps {
            s = self.step(&s, h)?;
            s.time = initial.time + k as f64 * h;
            if k == steps {
                s.time = t_end;
            }
            if k % every == 0 || k == steps {
                traj.monitors.push(self.monitors(&s));
                traj.snapshots.push(s.clone());
            }
        }
        Ok(traj)
    }
}

/// Set negative samples to zero and take the same amount from the positive
/// ones in proportion to their value, so the total is unchanged.
fn clip_negative(rho: &mut [f64]) {
    let mut deficit = 0.0;
    for v in rho.iter_mut() {
        if *v < 0.0 {
            deficit -= *v;
            *v = 0.0;
        }
    }
    if deficit == 0.0 {
        return;
    }
    let total: f64 = rho.iter().sum();
    if total > 0.0 {
        let s = deficit / total;
        rho.iter_mut().for_each(|v| *v -= s * *v);
    }
}

/// Sampled snapshots and monitors from [`Solver::run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<HydroState>,
    pub monitors: Vec<Monitors>,
}

/// `(d rho/dt, dS/dt)` of the continuity and Hamilton–Jacobi equations,
/// `-d(rho dS)` and `-(dS)^2/2 - V - Q - sum mu_hi` with
/// `V = (kT/m) ln rho + phi`. No vacuum tapering is applied.
pub fn rhs(state: &HydroState, p: &PhysicalParams) -> Result<(ScalarField, ScalarField)> {
    p.validate()?;
    let rho = &state.rho;
    let r = nonlocal::floored(rho.values())?;
    let g = rho.grid();
    let v: Vec<f64> = state.momentum.values().iter().zip(&r).map(|(j, d)| j / d).collect();
    let drho = ScalarField::new(g, g.gradient(state.momentum.values()).into_iter().map(|x| -x).collect())?;
    let mut mu = nonlocal::thermo_potential(rho, p)?.zip_with(&nonlocal::bohm_potential(rho, p)?, |a, b| a + b)?;
    if p.pressure_term {
        // thermo_potential carries the +1 of the Gibbs form; V does not.
        mu = mu.map(|m| m - p.kt_over_m)?;
    }
    for n in 2..=p.n_max {
        mu = mu.zip_with(&nonlocal::higher_order_potential(rho, n, p)?, |a, b| a + b)?;
    }
    let ds = ScalarField::new(g, mu.values().iter().zip(&v).map(|(m, vv)| -0.5 * vv * vv - m).collect())
        .map_err(|_| Error::VacuumBreakdown("non-finite dS/dt".into()))?;
    Ok((drho, ds))
}

/// One step with default regularization.
pub fn step_rk4(state: &HydroState, dt: f64, p: &PhysicalParams) -> Result<HydroState> {
    Solver::new(state.grid(), p, Regularization::default())?.step(state, dt)
}

/// Integrate with default regularization.
pub fn run(initial: &HydroState, p: &PhysicalParams, t_end: f64, dt: f64, sample_every: usize) -> Result<Trajectory> {
    Solver::new(initial.grid(), p, Regularization::default())?.run(initial, t_end, dt, sample_every)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::ExternalPotential;

    fn harmonic() -> (Grid, PhysicalParams, HydroState) {
        let g = Grid::new(256, 20.0).unwrap();
        let p = PhysicalParams::bohm(1.0).with_potential(ExternalPotential::Harmonic { omega: 1.0, center: None });
        let rho = ScalarField::from_fn(&g, |x| (-(x - 10.0).powi(2)).exp()).unwrap();
        let s = HydroState::at_rest(rho).unwrap();
        (g, p, s)
    }

    #[test]
    fn uniform_equilibrium() {
        let g = Grid::new(64, 5.0).unwrap();
        let s = HydroState::at_rest(ScalarField::constant(&g, 1.3).unwrap()).unwrap();
        let p = PhysicalParams::bohm(1.0);
        let (dr, ds) = rhs(&s, &p).unwrap();
        assert!(dr.values().iter().chain(ds.values()).all(|v| v.abs() < 1e-14));
        let next = step_rk4(&s, 1e-3, &p).unwrap();
        assert!(next.rho.max_abs_diff(&s.rho) < 1e-13);
        assert!(next.momentum.values().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn uniform_drift_is_steady() {
        let g = Grid::new(64, 5.0).unwrap();
        let rho = ScalarField::constant(&g, 2.0).unwrap();
        let v = ScalarField::constant(&g, 0.7).unwrap();
        let s = HydroState::from_velocity(rho, &v, 0.0, 0.0).unwrap();
        let (dr, _) = rhs(&s, &PhysicalParams::bohm(1.0)).unwrap();
        assert!(dr.values().iter().all(|v| v.abs() < 1e-14));
        let pot = s.potential();
        for (i, x) in g.coordinates().iter().enumerate() {
            assert!((pot.values()[i] - pot.values()[0] - 0.7 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_state_rhs() {
        let (_, p, s) = harmonic();
        let (dr, ds) = rhs(&s, &p).unwrap();
        assert!(dr.values().iter().all(|v| v.abs() < 1e-14));
        for (d, r) in ds.values().iter().zip(s.rho.values()) {
            if *r > 1e-4 * s.rho.max() {
                assert!((d + 0.5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn free_gaussian_step_conserves_mass() {
        let g = Grid::new(1024, 40.0 * PI).unwrap();
        let c = g.length() / 2.0;
        let rho = ScalarField::from_fn(&g, |x| (-(x - c).powi(2) / 2.0).exp()).unwrap();
        let s = HydroState::at_rest(rho).unwrap();
        let next = step_rk4(&s, 1e-3, &PhysicalParams::bohm(1.0)).unwrap();
        assert!(((next.mass() - s.mass()) / s.mass()).abs() <= 1e-12);
    }

    #[test]
    fn log_derivatives_of_gaussian() {
        // ln rho = -x^2: u' = -2x, u'' = -2, higher ones vanish.
        let x = [-1.3, 0.0, 0.4, 2.0];
        let d = |k: usize, x: f64| -> f64 {
            // rho^(k)/rho = (-1)^k H_k(x) for rho = exp(-x^2)
            let (mut h0, mut h1) = (1.0, 2.0 * x);
            if k == 0 {
                return 1.0;
            }
            for n in 1..k {
                let h2 = 2.0 * x * h1 - 2.0 * n as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            if k % 2 == 0 {
                h1
            } else {
                -h1
            }
        };
        let ratios: Vec<Vec<f64>> = (1..=6).map(|k| x.iter().map(|&x| d(k, x)).collect()).collect();
        let logs = log_derivatives(&ratios);
        for (i, &xi) in x.iter().enumerate() {
            assert!((logs[0][i] + 2.0 * xi).abs() < 1e-12);
            assert!((logs[1][i] + 2.0).abs() < 1e-12);
            for k in 2..6 {
                assert!(logs[k][i].abs() < 1e-9, "k={} x={xi}: {}", k + 1, logs[k][i]);
            }
        }
    }

    #[test]
    fn clipping_conserves_total() {
        let mut r = vec![1.0, 0.5, -1e-9, 0.2, 1e-13];
        let before: f64 = r.iter().sum();
        clip_negative(&mut r);
        let after: f64 = r.iter().sum();
        assert!((before - after).abs() < 1e-15);
        assert!(r.iter().all(|&v| v >= 0.0));
        assert_eq!(r[2], 0.0);
    }

    #[test]
    fn rejects_bad_dt() {
        let (_, p, s) = harmonic();
        assert!(step_rk4(&s, 0.0, &p).is_err());
        assert!(step_rk4(&s, -1.0, &p).is_err());
    }

    #[test]
    fn gauge_shift_leaves_dynamics() {
        let g = Grid::new(128, 20.0).unwrap();
        let rho = ScalarField::from_fn(&g, |x| (-(x - 10.0).powi(2) / 2.0).exp() + 0.01).unwrap();
        let s1 = ScalarField::from_fn(&g, |x| 0.3 * (2.0 * PI * x / 20.0).sin()).unwrap();
        let s2 = s1.map(|v| v + 4.2).unwrap();
        let a = HydroState::from_potential(rho.clone(), &s1, 0.0).unwrap();
        let b = HydroState::from_potential(rho, &s2, 0.0).unwrap();
        let p = PhysicalParams::bohm(1.0);
        let (mut a, mut b) = (a, b);
        for _ in 0..20 {
            a = step_rk4(&a, 1e-3, &p).unwrap();
            b = step_rk4(&b, 1e-3, &p).unwrap();
        }
        assert!(a.rho.max_abs_diff(&b.rho) <= 1e-12);
        assert!(a.velocity().max_abs_diff(&b.velocity()) <= 1e-12);
        assert!((b.s_pin - a.s_pin - 4.2).abs() < 1e-12);
    }
}
