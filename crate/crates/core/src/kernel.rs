//! Radial interaction kernels and their moments.
//!
//! Moments use the 3D measure, `m_2n = 4 pi int_0^inf x^(2n+2) u(x) dx`,
//! because `a^2` and `c_2n` are properties of the 3D kernel even though the
//! PDE solver is one-dimensional. From them:
//!
//! * `a^2 = -m_2` (positive only for a net-attractive kernel),
//! * `c_2n = (-1)^n m_2n / a^(2n)`, so `c_2 = 1` by construction.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Default outer limit of the explicit quadrature, in units of the tail range.
pub const TAIL_CUTOFF_RANGES: f64 = 50.0;
/// Highest `n` tabulated by default.
pub const DEFAULT_MAX_ORDER: u32 = 4;

const REL_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    /// `u = n0` inside the core `x < d`, `u = -n1 exp(-x/ell)` outside.
    HardCoreExponential { n0: f64, n1: f64, d: f64, ell: f64 },
    /// Piecewise-linear profile through `(radii[i], values[i])`, constant below
    /// the first radius, continued past the last radius by the exponential
    /// through the final two samples.
    Tabulated { radii: Vec<f64>, values: Vec<f64>, tail_cutoff: f64 },
}

impl KernelSpec {
    pub fn hard_core_exponential(n0: f64, n1: f64, d: f64, ell: f64) -> Result<Self> {
        let k = KernelSpec::HardCoreExponential { n0, n1, d, ell };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>, tail_cutoff: f64) -> Result<Self> {
        let k = KernelSpec::Tabulated { radii, values, tail_cutoff };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            KernelSpec::HardCoreExponential { n0, n1, d, ell } => {
                if !(n0.is_finite() && n1.is_finite() && *n1 >= 0.0) {
                    return bad("kernel n0 must be finite and n1 finite and >= 0");
                }
                if !(d.is_finite() && *d > 0.0 && ell.is_finite() && *ell > 0.0) {
                    return bad("kernel d and ell must be positive");
                }
            }
            KernelSpec::Tabulated { radii, values, tail_cutoff } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return bad("tabulated kernel needs >= 2 radii and one value per radius");
                }
                if radii.iter().chain(values).any(|v| !v.is_finite()) || radii[0] <= 0.0 {
                    return bad("tabulated radii must be positive and all entries finite");
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("tabulated radii must be strictly ascending");
                }
                if !(tail_cutoff.is_finite() && *tail_cutoff > 0.0) {
                    return bad("tabulated tail_cutoff must be positive");
                }
            }
        }
        Ok(())
    }

    /// Evaluate `u(x)` for `x >= 0`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            KernelSpec::HardCoreExponential { n0, n1, d, ell } => {
                if x < *d {
                    *n0
                } else {
                    -n1 * (-x / ell).exp()
                }
            }
            KernelSpec::Tabulated { radii, values, .. } => {
                let n = radii.len();
                if x <= radii[0] {
                    return values[0];
                }
                if x >= radii[n - 1] {
                    return match exp_tail(radii, values) {
                        Ok(Some(lam)) => values[n - 1] * (-(x - radii[n - 1]) / lam).exp(),
                        _ => 0.0,
                    };
                }
                let i = radii.partition_point(|&r| r <= x) - 1;
                let t = (x - radii[i]) / (radii[i + 1] - radii[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }
}

/// Decay length of the exponential continuation of a tabulated kernel, or
/// `None` when the last sample is exactly zero (compact support).
fn exp_tail(radii: &[f64], values: &[f64]) -> Result<Option<f64>> {
    let n = radii.len();
    let (v1, v2) = (values[n - 2], values[n - 1]);
    if v2 == 0.0 {
        return Ok(None);
    }
    if v1 * v2 <= 0.0 || v2.abs() >= v1.abs() {
        return Err(Error::DivergentTail);
    }
    Ok(Some((radii[n - 1] - radii[n - 2]) / (v1 / v2).ln()))
}

/// `e^z int_z^inf t^p e^-t dt = sum_{k<=p} (p!/k!) z^k` for integer `p`.
fn upper_gamma_scaled(p: u32, z: f64) -> f64 {
    // Build p!/k! z^k from k = p downward; at z = 0 only the k = 0 term survives.
    if z == 0.0 {
        return factorial(p).unwrap_or(f64::INFINITY);
    }
    let mut term = z.powi(p as i32);
    let mut sum = term;
    for k in (0..p).rev() {
        term *= (k + 1) as f64 / z;
        sum += term;
    }
    sum
}

/// `int_z^inf t^p e^-t dt` for integer `p`.
fn upper_gamma_int(p: u32, z: f64) -> f64 {
    upper_gamma_scaled(p, z) * (-z).exp()
}

fn factorial(n: u32) -> Result<f64> {
    if n > 170 {
        return Err(Error::FactorialOverflow(n));
    }
    Ok((1..=n).fold(1.0, |acc, k| acc * k as f64))
}

fn check_order(order: u32) -> Result<()> {
    if order % 2 != 0 {
        return Err(Error::InvalidParameter(format!("moment order must be even, got {order}")));
    }
    Ok(())
}

/// `4 pi int_0^inf x^(order+2) u(x) dx`, explicit quadrature up to
/// [`TAIL_CUTOFF_RANGES`] tail ranges and an analytic remainder beyond.
pub fn radial_moment(k: &KernelSpec, order: u32) -> Result<f64> {
    let cutoff = match k {
        KernelSpec::HardCoreExponential { ell, .. } => TAIL_CUTOFF_RANGES * ell,
        KernelSpec::Tabulated { tail_cutoff, .. } => *tail_cutoff,
    };
    radial_moment_with_cutoff(k, order, cutoff)
}

/// As [`radial_moment`], with the point where quadrature hands over to the
/// analytic tail chosen explicitly (for the hard-core kernel; tabulated
/// kernels carry their own cutoff and also accept an override here).
pub fn radial_moment_with_cutoff(k: &KernelSpec, order: u32, cutoff: f64) -> Result<f64> {
    check_order(order)?;
    k.validate()?;
    let p = order + 2;
    let pw = |x: f64| x.powi(p as i32);
    let q = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| -> Result<f64> { Ok(quad::integrate(f, a, b, REL_TOL, 0.0)?.0) };
    let m = match k {
        KernelSpec::HardCoreExponential { n0, n1, d, ell } => {
            let core = q(&|x| n0 * pw(x), 0.0, *d)?;
            let cut = cutoff.max(*d);
            // Split the tail where the integrand peaks to keep the error estimate honest.
            let peak = (p as f64 * ell).clamp(*d, cut);
            let tail_fn = |x: f64| -n1 * pw(x) * (-x / ell).exp();
            let tail = q(&tail_fn, *d, peak)? + q(&tail_fn, peak, cut)?;
            let rem = -n1 * ell.powi(p as i32 + 1) * upper_gamma_int(p, cut / ell);
            core + tail + rem
        }
        KernelSpec::Tabulated { radii, values, .. } => {
            let n = radii.len();
            let mut total = q(&|x| values[0] * pw(x), 0.0, radii[0])?;
            for i in 0..n - 1 {
                let (r0, r1, v0, v1) = (radii[i], radii[i + 1], values[i], values[i + 1]);
                total += q(&|x| (v0 + (x - r0) / (r1 - r0) * (v1 - v0)) * pw(x), r0, r1)?;
            }
            if let Some(lam) = exp_tail(radii, values)? {
                let (rl, vl) = (radii[n - 1], values[n - 1]);
                let cut = cutoff.max(rl);
                let tail_fn = |x: f64| vl * (-(x - rl) / lam).exp() * pw(x);
                let peak = (p as f64 * lam).clamp(rl, cut);
                total += q(&tail_fn, rl, peak)? + q(&tail_fn, peak, cut)?;
                // vl e^{rl/lam} int_cut^inf x^p e^{-x/lam} dx
                let g = upper_gamma_scaled(p, cut / lam);
                total += vl * lam.powi(p as i32 + 1) * g * ((rl - cut) / lam).exp();
            }
            total
        }
    };
    let m = 4.0 * PI * m;
    if !m.is_finite() {
        return Err(Error::DivergentTail);
    }
    Ok(m)
}

/// Rescale the kernel so that `int u d^3x = 1`. The hard-core kernel keeps
/// `(n1, d, ell)` and solves `n0` exactly (the moment is linear in `n0`);
/// a tabulated kernel is divided by its zeroth moment.
pub fn normalize(k: &KernelSpec) -> Result<KernelSpec> {
    match k {
        KernelSpec::HardCoreExponential { n1, d, ell, .. } => {
            let tail = radial_moment(&KernelSpec::HardCoreExponential { n0: 0.0, n1: *n1, d: *d, ell: *ell }, 0)?;
            let ball = 4.0 * PI * d.powi(3) / 3.0;
            Ok(KernelSpec::HardCoreExponential { n0: (1.0 - tail) / ball, n1: *n1, d: *d, ell: *ell })
        }
        KernelSpec::Tabulated { radii, values, tail_cutoff } => {
            let m0 = radial_moment(k, 0)?;
            let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            // Relative to the mass the kernel's own magnitude would give.
            let reference = scale * 4.0 * PI * radii[radii.len() - 1].powi(3) / 3.0;
            if m0 == 0.0 || m0.abs() <= 1e-14 * reference {
                return Err(Error::ZeroMass);
            }
            Ok(KernelSpec::Tabulated {
                radii: radii.clone(),
                values: values.iter().map(|v| v / m0).collect(),
                tail_cutoff: *tail_cutoff,
            })
        }
    }
}

/// `a^2 = -m_2`. The kernel is used as given; callers normalise first.
pub fn interaction_length_sq(k: &KernelSpec) -> Result<f64> {
    let a2 = -radial_moment(k, 2)?;
    if a2 <= 0.0 {
        return Err(Error::NotAttractive(a2));
    }
    Ok(a2)
}

/// `c_2n = (-1)^n m_2n / a^(2n)`.
pub fn normalized_moment_c2n(k: &KernelSpec, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("c2n needs n >= 1".into()));
    }
    let a2 = interaction_length_sq(k)?;
    c2n_from(k, n, a2)
}

fn c2n_from(k: &KernelSpec, n: u32, a2: f64) -> Result<f64> {
    if n == 1 {
        return Ok(1.0);
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * radial_moment(k, 2 * n)? / a2.powi(n as i32))
}

/// `c_2n = (-1)^(n+1) (2n+2)!/24 (ell/a)^(2(n-1))` for the hard-core
/// exponential kernel in the small-core limit.
pub fn closed_form_c2n(n: u32, ell_over_a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("c2n needs n >= 1".into()));
    }
    if !(ell_over_a.is_finite() && ell_over_a > 0.0) {
        return Err(Error::InvalidParameter("ell/a must be positive".into()));
    }
    let f = factorial(2 * n + 2)?;
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    Ok(sign * f / 24.0 * ell_over_a.powi(2 * (n as i32 - 1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Quadrature,
    ClosedForm,
}

/// `a^2` and the normalised central moments `c_2n`, keyed by `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub a_squared: f64,
    pub c: BTreeMap<u32, f64>,
    pub source: MomentSource,
}

impl MomentTable {
    /// Quadrature moments of a kernel that is already normalised.
    pub fn from_kernel(k: &KernelSpec, max_order: u32) -> Result<Self> {
        let a2 = interaction_length_sq(k)?;
        let mut c = BTreeMap::new();
        for n in 1..=max_order.max(1) {
            c.insert(n, c2n_from(k, n, a2)?);
        }
        Ok(Self { a_squared: a2, c, source: MomentSource::Quadrature })
    }

    /// Closed-form moments for a hard-core exponential kernel of range `ell`.
    pub fn closed_form(a_squared: f64, ell: f64, max_order: u32) -> Result<Self> {
        if !(a_squared > 0.0 && a_squared.is_finite()) {
            return Err(Error::NotAttractive(a_squared));
        }
        let r = ell / a_squared.sqrt();
        let mut c = BTreeMap::new();
        for n in 1..=max_order.max(1) {
            c.insert(n, closed_form_c2n(n, r)?);
        }
        Ok(Self { a_squared, c, source: MomentSource::ClosedForm })
    }

    pub fn c2n(&self, n: u32) -> Result<f64> {
        self.c.get(&n).copied().ok_or(Error::MissingMoment(2 * n))
    }

    pub fn a(&self) -> f64 {
        self.a_squared.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ball_moment() {
        let k = KernelSpec::hard_core_exponential(2.0, 0.0, 1.5, 1.0).unwrap();
        let m0 = radial_moment(&k, 0).unwrap();
        assert!(rel(m0, 4.0 * PI * 2.0 * 1.5f64.powi(3) / 3.0) < 1e-13);
    }

    #[test]
    fn pure_tail_second_moment() {
        let (n1, ell) = (0.7, 1.3);
        let k = KernelSpec::hard_core_exponential(0.0, n1, 1e-12, ell).unwrap();
        let m2 = radial_moment(&k, 2).unwrap();
        assert!(rel(m2, -96.0 * PI * n1 * ell.powi(5)) < 1e-10);
        assert!(rel(interaction_length_sq(&k).unwrap(), 96.0 * PI * n1 * ell.powi(5)) < 1e-10);
    }

    #[test]
    fn upper_gamma_matches_quadrature() {
        for p in [2u32, 4, 6, 10] {
            for z in [0.5, 3.0, 50.0] {
                let (v, _) = quad::integrate(|t: f64| t.powi(p as i32) * (-t).exp(), z, z + 200.0, 1e-14, 0.0).unwrap();
                assert!(rel(upper_gamma_int(p, z), v) < 1e-12, "p={p} z={z}");
            }
        }
        assert_eq!(upper_gamma_int(3, 0.0), 6.0);
    }

    #[test]
    fn normalize_ball_and_tail() {
        let k = normalize(&KernelSpec::hard_core_exponential(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        match k {
            KernelSpec::HardCoreExponential { n0, .. } => assert!(rel(n0, 3.0 / (4.0 * PI)) < 1e-14),
            _ => unreachable!(),
        }
        let k = normalize(&KernelSpec::hard_core_exponential(0.0, 10.0, 1e-3, 1.0).unwrap()).unwrap();
        assert!((radial_moment(&k, 0).unwrap() - 1.0).abs() < 1e-10);
        let again = normalize(&k).unwrap();
        match (&k, &again) {
            (KernelSpec::HardCoreExponential { n0: a, .. }, KernelSpec::HardCoreExponential { n0: b, .. }) => {
                assert!(rel(*b, *a) < 1e-12)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn normalized_n0_near_leading_order() {
        // Leading order: n0 d^3 = 6 n1 ell^3 (+ 3/(4 pi)).
        let (n1, d) = (10.0, 1e-3);
        let k = normalize(&KernelSpec::hard_core_exponential(0.0, n1, d, 1.0).unwrap()).unwrap();
        if let KernelSpec::HardCoreExponential { n0, .. } = k {
            let lead = (1.0 + 8.0 * PI * n1) / (4.0 * PI / 3.0);
            assert!(rel(n0 * d.powi(3), lead) < 1e-2);
        }
    }

    #[test]
    fn repulsive_kernel_has_no_length() {
        let k = normalize(&KernelSpec::hard_core_exponential(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(interaction_length_sq(&k), Err(Error::NotAttractive(_))));
    }

    #[test]
    fn a_squared_near_asymptotic() {
        let d = 1e-3;
        let n1 = 10.0;
        let k = normalize(&KernelSpec::hard_core_exponential(0.0, n1, d, 1.0).unwrap()).unwrap();
        let a2 = interaction_length_sq(&k).unwrap();
        assert!(rel(a2, 96.0 * PI * n1) < 5e-3);
    }

    #[test]
    fn c2n_quadrature_vs_closed_form() {
        let (d, ell) = (1e-3, 1.0);
        let k = normalize(&KernelSpec::hard_core_exponential(0.0, ell / d, d, ell).unwrap()).unwrap();
        let t = MomentTable::from_kernel(&k, 4).unwrap();
        assert_eq!(t.c2n(1).unwrap(), 1.0);
        let r = ell / t.a();
        assert!(rel(t.c2n(2).unwrap(), -30.0 * r * r) < 1e-2);
        assert!(rel(t.c2n(3).unwrap(), 1680.0 * r.powi(4)) < 2e-2);
        assert!(matches!(t.c2n(5), Err(Error::MissingMoment(10))));
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(closed_form_c2n(1, 0.37).unwrap(), 1.0);
        assert!((closed_form_c2n(2, 0.1).unwrap() + 0.30).abs() < 1e-15);
        assert!((closed_form_c2n(3, 0.1).unwrap() - 0.168).abs() < 1e-15);
        assert_eq!(closed_form_c2n(85, 0.1).unwrap_err(), Error::FactorialOverflow(172));
        let t = MomentTable::closed_form(4.0, 0.2, 3).unwrap();
        assert_eq!(t.source, MomentSource::ClosedForm);
        assert!((t.c2n(2).unwrap() + 30.0 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn tabulated_kernel_moments() {
        // Samples of -e^{-x} on a fine grid; the exponential continuation is exact.
        let radii: Vec<f64> = (1..=400).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = radii.iter().map(|r| -(-r).exp()).collect();
        let k = KernelSpec::tabulated(radii, values, 50.0).unwrap();
        let m2 = radial_moment(&k, 2).unwrap();
        // Constant core below 0.05 and linear interpolation errors are small.
        assert!(rel(m2, -96.0 * PI) < 1e-3);
        let n = normalize(&KernelSpec::tabulated(vec![1.0, 2.0], vec![1.0, 0.5], 20.0).unwrap()).unwrap();
        assert!((radial_moment(&n, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_errors() {
        assert!(KernelSpec::tabulated(vec![1.0, 1.0], vec![1.0, 0.5], 5.0).is_err());
        let growing = KernelSpec::tabulated(vec![1.0, 2.0], vec![0.5, 1.0], 5.0).unwrap();
        assert_eq!(radial_moment(&growing, 0).unwrap_err(), Error::DivergentTail);
        let flip = KernelSpec::tabulated(vec![1.0, 2.0], vec![0.5, -0.1], 5.0).unwrap();
        assert_eq!(radial_moment(&flip, 0).unwrap_err(), Error::DivergentTail);
        let compact = KernelSpec::tabulated(vec![1.0, 2.0], vec![1.0, 0.0], 5.0).unwrap();
        assert!(radial_moment(&compact, 0).is_ok());
        assert!(matches!(radial_moment(&compact, 3), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn zero_mass_tabulated() {
        // +1 on [0,1], then a linear ramp chosen so the total mass cancels.
        let k = KernelSpec::tabulated(vec![1.0, 2.0], vec![1.0, 0.0], 5.0).unwrap();
        let m_pos = radial_moment(&k, 0).unwrap();
        assert!(m_pos > 0.0);
        let z = KernelSpec::tabulated(vec![1.0, 2.0], vec![0.0, 0.0], 5.0).unwrap();
        assert_eq!(normalize(&z).unwrap_err(), Error::ZeroMass);
    }

    proptest! {
        #[test]
        fn c2_is_one_for_admissible_kernels(n1 in 0.5f64..50.0, dl in 1e-4f64..1e-1, ell in 0.2f64..5.0) {
            let k = normalize(&KernelSpec::hard_core_exponential(0.0, n1, dl * ell, ell).unwrap()).unwrap();
            prop_assert_eq!(normalized_moment_c2n(&k, 1).unwrap(), 1.0);
        }

        #[test]
        fn cutoff_invariance(n1 in 0.5f64..50.0, dl in 1e-4f64..1e-1, cut in 40.0f64..80.0, order in 0u32..4) {
            let ell = 1.0;
            let k = KernelSpec::hard_core_exponential(1.0, n1, dl, ell).unwrap();
            let a = radial_moment_with_cutoff(&k, 2 * order, 50.0).unwrap();
            let b = radial_moment_with_cutoff(&k, 2 * order, cut).unwrap();
            prop_assert!(((a - b) / a).abs() <= 1e-10);
        }

        #[test]
        fn normalize_is_idempotent(n1 in 0.5f64..50.0, dl in 1e-3f64..1e-1) {
            let k = normalize(&KernelSpec::hard_core_exponential(0.0, n1, dl, 1.0).unwrap()).unwrap();
            let k2 = normalize(&k).unwrap();
            if let (KernelSpec::HardCoreExponential { n0: a, .. }, KernelSpec::HardCoreExponential { n0: b, .. }) = (&k, &k2) {
                prop_assert!(((a - b) / a).abs() <= 1e-12);
            }
        }

        #[test]
        fn small_core_tracks_closed_form(dl in 1e-4f64..1e-2) {
            let k = normalize(&KernelSpec::hard_core_exponential(0.0, 1.0 / dl, dl, 1.0).unwrap()).unwrap();
            let t = MomentTable::from_kernel(&k, 3).unwrap();
            let r = 1.0 / t.a();
            for n in 2..=3 {
                let cf = closed_form_c2n(n, r).unwrap();
                prop_assert!(((t.c2n(n).unwrap() - cf) / cf).abs() <= 10.0 * dl);
            }
        }
    }
}
