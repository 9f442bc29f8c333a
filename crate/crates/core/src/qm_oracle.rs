//! Split-step Schrödinger solver and the Madelung transform.
//!
//! The oracle integrates `i h psi_t = -(h^2/2) psi_xx + V psi` with Strang
//! splitting, where `V = phi` plus `(kT/m) ln|psi|^2` when the pressure term
//! is on. It shares nothing with [`crate::hydro`] beyond the grid, so
//! agreement between the two is a real test of the Madelung equivalence.
//! The phase convention is `psi = sqrt(rho) exp(i S / h)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::hydro::HydroState;
use crate::nonlocal::{PhysicalParams, RHO_FLOOR};

/// Wavefunction samples and time.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    grid: Grid,
    psi: Vec<Complex64>,
    pub time: f64,
}

impl WaveState {
    pub fn new(grid: &Grid, psi: Vec<Complex64>, time: f64) -> Result<Self> {
        if psi.len() != grid.n_points() {
            return Err(Error::FieldLength { expected: grid.n_points(), got: psi.len() });
        }
        if let Some(index) = psi.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        let s = Self { grid: grid.clone(), psi, time };
        if !(s.norm() > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(s)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.coordinates().into_iter().map(f).collect(), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn density(&self) -> ScalarField {
        ScalarField::new(&self.grid, self.psi.iter().map(|c| c.norm_sqr()).collect()).expect("finite density")
    }

    /// `int |psi|^2 dx`
    pub fn norm(&self) -> f64 {
        self.grid.integrate(&self.psi.iter().map(|c| c.norm_sqr()).collect::<Vec<_>>())
    }

    /// `psi_x`, spectrally.
    fn derivative(&self) -> Vec<Complex64> {
        let n = self.psi.len();
        let mut spec = self.grid.forward_complex(&self.psi);
        for (j, c) in spec.iter_mut().enumerate() {
            *c *= if j == n / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, self.grid.wavenumbers()[j]) };
        }
        self.grid.inverse(spec)
    }

    /// Velocity `h Im(psi* psi_x) / |psi|^2` on the floored density.
    pub fn velocity(&self, hbar_kin: f64) -> Vec<f64> {
        let d = self.derivative();
        let mx = self.psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
        let fl = RHO_FLOOR * mx;
        self.psi.iter().zip(&d).map(|(p, dp)| hbar_kin * (p.conj() * dp).im / p.norm_sqr().max(fl)).collect()
    }

    /// `<-(h^2/2) psi* psi_xx + phi |psi|^2>`; the log self-interaction is not included.
    pub fn energy(&self, p: &PhysicalParams) -> f64 {
        let d = self.derivative();
        let phi = p.potential.sample(&self.grid);
        let h2 = p.hbar_kin * p.hbar_kin;
        let e: Vec<f64> =
            self.psi.iter().zip(&d).zip(&phi).map(|((c, dc), f)| 0.5 * h2 * dc.norm_sqr() + f * c.norm_sqr()).collect();
        self.grid.integrate(&e)
    }
}

/// Strang-split propagator for a fixed step.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: Grid,
    params: PhysicalParams,
    dt: f64,
    kinetic: Vec<Complex64>,
    half_potential: Vec<Complex64>,
    /// Number of samples floored inside the logarithmic potential so far.
    pub floored_samples: usize,
}

impl Propagator {
    pub fn new(grid: &Grid, params: &PhysicalParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let h = params.hbar_kin;
        let kinetic = grid.wavenumbers().iter().map(|k| Complex64::from_polar(1.0, -0.5 * h * k * k * dt)).collect();
        let half_potential =
            params.potential.sample(grid).into_iter().map(|v| Complex64::from_polar(1.0, -0.5 * v * dt / h)).collect();
        Ok(Self { grid: grid.clone(), params: params.clone(), dt, kinetic, half_potential, floored_samples: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn potential_half_step(&mut self, psi: &mut [Complex64]) {
        for (c, e) in psi.iter_mut().zip(&self.half_potential) {
            *c *= e;
        }
        if self.params.pressure_term {
            // |psi| is unchanged by a pure phase, so the nonlinear phase is exact.
            let mx = psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
            let fl = RHO_FLOOR * mx;
            let a = -0.5 * self.dt * self.params.kt_over_m / self.params.hbar_kin;
            for c in psi.iter_mut() {
                let r = c.norm_sqr();
                if r < fl {
                    self.floored_samples += 1;
                }
                *c *= Complex64::from_polar(1.0, a * r.max(fl).ln());
            }
        }
    }

    pub fn step(&mut self, state: &WaveState) -> WaveState {
        let mut psi = state.psi.clone();
        self.potential_half_step(&mut psi);
        let mut spec = self.grid.forward_complex(&psi);
        for (c, k) in spec.iter_mut().zip(&self.kinetic) {
            *c *= k;
        }
        let mut psi = self.grid.inverse(spec);
        self.potential_half_step(&mut psi);
        WaveState { grid: self.grid.clone(), psi, time: state.time + self.dt }
    }
}

/// One Strang step.
pub fn split_step(state: &WaveState, dt: f64, p: &PhysicalParams) -> Result<WaveState> {
    Ok(Propagator::new(state.grid(), p, dt)?.step(state))
}

/// Integrate to `t_end`, sampling every `sample_every` steps and at the end.
/// The step is shrunk slightly if needed so that `t_end` is hit exactly.
pub fn run(
    initial: &WaveState,
    p: &PhysicalParams,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Vec<WaveState>> {
    let span = t_end - initial.time;
    if !(span > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end {t_end} must exceed the start time {}", initial.time)));
    }
    let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
    let mut prop = Propagator::new(initial.grid(), p, span / steps as f64)?;
    let every = sample_every.max(1);
    let mut out = vec![initial.clone()];
    let mut s = initial.clone();
    for k in 1..=steps {
        s = prop.step(&s);
        s.time = initial.time + k as f64 * prop.dt;
        if k == steps {
            s.time = t_end;
        }
        if k % every == 0 || k == steps {
            out.push(s.clone());
        }
    }
    Ok(out)
}

/// Madelung transform `psi -> (rho, S)`. The phase is unwrapped by
/// integrating its spectral gradient and pinned to `h arg psi` at the density
/// maximum. Fails at nodes.
pub fn to_hydro(state: &WaveState, p: &PhysicalParams) -> Result<HydroState> {
    let rho = state.density();
    let mx = rho.max();
    let fl = RHO_FLOOR * mx;
    if let Some(index) = rho.values().iter().position(|&r| r < fl * (1.0 - 1e-9)) {
        return Err(Error::Node { index, value: rho.values()[index] });
    }
    let v = ScalarField::new(state.grid(), state.velocity(p.hbar_kin))?;
    let imax = rho.values().iter().enumerate().fold(0, |b, (i, &r)| if r > rho.values()[b] { i } else { b });
    let s_pin = p.hbar_kin * state.psi[imax].arg();
    HydroState::from_velocity(rho, &v, s_pin, state.time)
}

/// Inverse Madelung transform `psi = sqrt(rho) exp(i S / h)`.
pub fn from_hydro(state: &HydroState, p: &PhysicalParams) -> Result<WaveState> {
    let s = state.potential();
    let psi = state
        .rho
        .values()
        .iter()
        .zip(s.values())
        .map(|(r, s)| Complex64::from_polar(r.max(0.0).sqrt(), s / p.hbar_kin))
        .collect();
    WaveState::new(state.grid(), psi, state.time)
}

/// Per-sample agreement between a hydro and an oracle trajectory.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CompareMetrics {
    pub time: f64,
    /// `||rho_h - rho_q||_2 / ||rho_q||_2`
    pub rho_l2_rel: f64,
    /// `max |rho_h - rho_q| / max rho_q`
    pub rho_max_rel: f64,
    /// Density-weighted RMS velocity difference, `sqrt(int rho_q dv^2 / int rho_q)`.
    pub velocity_rms: f64,
    /// Largest velocity difference where `rho_q > 1e-6 max rho_q`.
    pub velocity_max: f64,
}

/// Compare matching samples. Velocities are compared with the density as
/// weight because `v` is undetermined where the fluid is absent.
pub fn compare(hydro: &[HydroState], oracle: &[WaveState], p: &PhysicalParams) -> Result<Vec<CompareMetrics>> {
    if hydro.len() != oracle.len() {
        return Err(Error::SamplingMismatch(format!(
            "{} hydro samples vs {} oracle samples",
            hydro.len(),
            oracle.len()
        )));
    }
    hydro
        .iter()
        .zip(oracle)
        .map(|(h, q)| {
            if h.grid() != q.grid() {
                return Err(Error::GridMismatch);
            }
            if (h.time - q.time).abs() > 1e-9 * h.time.abs().max(1.0) {
                return Err(Error::SamplingMismatch(format!("hydro t={} vs oracle t={}", h.time, q.time)));
            }
            let rh = h.rho.values();
            let rq = q.density().into_values();
            let vh = h.velocity();
            let vq = q.velocity(p.hbar_kin);
            let mx = rq.iter().copied().fold(0.0, f64::max);
            let (mut num, mut den, mut dmax) = (0.0, 0.0, 0.0f64);
            let (mut wv, mut w, mut vmax) = (0.0, 0.0, 0.0f64);
            for i in 0..rq.len() {
                let d = rh[i] - rq[i];
                num += d * d;
                den += rq[i] * rq[i];
                dmax = dmax.max(d.abs());
                let dv = vh.values()[i] - vq[i];
                wv += rq[i] * dv * dv;
                w += rq[i];
                if rq[i] > 1e-6 * mx {
                    vmax = vmax.max(dv.abs());
                }
            }
            Ok(CompareMetrics {
                time: h.time,
                rho_l2_rel: (num / den).sqrt(),
                rho_max_rel: dmax / mx,
                velocity_rms: (wv / w).sqrt(),
                velocity_max: vmax,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::ExternalPotential;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(128, 20.0).unwrap()
    }

    #[test]
    fn plane_wave_phase() {
        let g = grid();
        let k = 2.0 * PI * 3.0 / 20.0;
        let s = WaveState::from_fn(&g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let dt = 0.37;
        let next = split_step(&s, dt, &PhysicalParams::bohm(1.0)).unwrap();
        let expect = Complex64::from_polar(1.0, -0.5 * k * k * dt);
        for (a, b) in next.psi().iter().zip(s.psi()) {
            assert!((a - b * expect).norm() < 1e-13);
        }
    }

    #[test]
    fn unitarity() {
        let g = grid();
        let p = PhysicalParams::bohm(1.0).with_potential(ExternalPotential::Harmonic { omega: 1.0, center: None });
        let s0 = WaveState::from_fn(&g, |x| Complex64::from_polar((-(x - 11.0).powi(2)).exp(), 0.3 * x)).unwrap();
        let mut prop = Propagator::new(&g, &p, 1e-3).unwrap();
        let mut s = s0.clone();
        for _ in 0..10_000 {
            s = prop.step(&s);
        }
        assert!(((s.norm() - s0.norm()) / s0.norm()).abs() <= 1e-10);
    }

    #[test]
    fn coherent_state_centre() {
        let g = Grid::new(256, 20.0).unwrap();
        let p = PhysicalParams::bohm(1.0).with_potential(ExternalPotential::Harmonic { omega: 1.0, center: None });
        let s0 = WaveState::from_fn(&g, |x| Complex64::new((-(x - 11.0).powi(2) / 2.0).exp(), 0.0)).unwrap();
        let traj = run(&s0, &p, 2.0 * PI, 1e-3, 100).unwrap();
        for s in &traj {
            let (c, _) = s.density().centroid_width();
            assert!((c - 10.0 - s.time.cos()).abs() < 1e-4, "t={} c={c}", s.time);
        }
    }

    #[test]
    fn oracle_energy_conserved() {
        let g = Grid::new(256, 20.0).unwrap();
        let p = PhysicalParams::bohm(1.0).with_potential(ExternalPotential::Harmonic { omega: 1.0, center: None });
        let s0 = WaveState::from_fn(&g, |x| Complex64::new((-(x - 11.0).powi(2) / 2.0).exp(), 0.0)).unwrap();
        let traj = run(&s0, &p, 2.0, 2.5e-4, 1000).unwrap();
        let e0 = s0.energy(&p);
        let e1 = traj.last().unwrap().energy(&p);
        assert!(((e1 - e0) / e0).abs() <= 1e-8, "{e0} {e1}");
    }

    #[test]
    fn transform_basics() {
        let g = grid();
        let p = PhysicalParams::bohm(1.0);
        let one = WaveState::from_fn(&g, |_| Complex64::new(1.0, 0.0)).unwrap();
        let h = to_hydro(&one, &p).unwrap();
        assert!(h.rho.values().iter().all(|&r| (r - 1.0).abs() < 1e-15));
        assert!(h.potential().values().iter().all(|s| s.abs() < 1e-13));

        let k = 2.0 * PI * 2.0 / 20.0;
        let pw = WaveState::from_fn(&g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let h = to_hydro(&pw, &p).unwrap();
        assert!(h.velocity().values().iter().all(|v| (v - k).abs() < 1e-12));

        let back = from_hydro(&h, &p).unwrap();
        let spec = g.forward_complex(back.psi());
        let main = spec[2].norm();
        for (j, c) in spec.iter().enumerate() {
            if j != 2 {
                assert!(c.norm() <= 1e-12 * main);
            }
        }
    }

    #[test]
    fn round_trip_up_to_global_phase() {
        let g = grid();
        let p = PhysicalParams::bohm(0.7);
        let s = WaveState::from_fn(&g, |x| {
            let a = 1.0 + 0.3 * (2.0 * PI * x / 20.0).cos();
            let th = 0.8 * (2.0 * PI * x / 20.0).sin() + 2.0 * PI * x / 20.0 + 2.5;
            Complex64::from_polar(a, th)
        })
        .unwrap();
        let back = from_hydro(&to_hydro(&s, &p).unwrap(), &p).unwrap();
        let phase = back.psi()[0] / s.psi()[0];
        let phase = phase / phase.norm();
        for (a, b) in back.psi().iter().zip(s.psi()) {
            assert!((a - b * phase).norm() <= 1e-12);
        }
    }

    #[test]
    fn node_is_rejected() {
        let g = grid();
        let s = WaveState::from_fn(&g, |x| Complex64::new((2.0 * PI * x / 20.0).sin(), 0.0)).unwrap();
        assert!(matches!(to_hydro(&s, &PhysicalParams::bohm(1.0)), Err(Error::Node { .. })));
    }

    #[test]
    fn identical_trajectories_compare_to_zero() {
        let g = grid();
        let p = PhysicalParams::bohm(1.0);
        let s = WaveState::from_fn(&g, |x| Complex64::from_polar((-(x - 10.0).powi(2) / 4.0).exp() + 0.1, 0.1 * x))
            .unwrap();
        let h = to_hydro(&s, &p).unwrap();
        let m = compare(&[h], &[s], &p).unwrap();
        assert!(m[0].rho_l2_rel < 1e-11 && m[0].rho_max_rel < 1e-11);
        assert!(m[0].velocity_rms < 1e-12);
    }

    #[test]
    fn mismatched_sampling_is_an_error() {
        let g = grid();
        let p = PhysicalParams::bohm(1.0);
        let s = WaveState::from_fn(&g, |_| Complex64::new(1.0, 0.0)).unwrap();
        let h = to_hydro(&s, &p).unwrap();
        assert!(compare(&[h.clone()], &[], &p).is_err());
        let mut later = s.clone();
        later.time = 1.0;
        assert!(matches!(compare(&[h], &[later], &p), Err(Error::SamplingMismatch(_))));
    }
}
