//! Uniform periodic 1D grid with Fourier differentiation.
//!
//! A [`Grid`] owns cached FFT plans and the wavenumber table, so cloning one
//! is cheap and every field built on it shares the same transforms. A
//! [`ScalarField`] is a validated set of finite samples on a grid; the
//! spectral operators are methods on it, with free-function aliases
//! ([`spectral_gradient`], [`spectral_laplacian`], [`integrate`]).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct Transforms {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

/// Periodic domain `[0, L)` sampled at `x_j = j * L / N`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    length: f64,
    dealias: bool,
    tr: Arc<Transforms>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n)
            .field("length", &self.length)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length && self.dealias == other.dealias
    }
}

impl Grid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::GridSize(n_points));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::GridLength(length));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_points);
        let inverse = planner.plan_fft_inverse(n_points);
        let dk = 2.0 * PI / length;
        let k = (0..n_points)
            .map(|j| {
                let m = if j <= n_points / 2 { j as f64 } else { j as f64 - n_points as f64 };
                m * dk
            })
            .collect();
        Ok(Self { n: n_points, length, dealias: false, tr: Arc::new(Transforms { forward, inverse, k }) })
    }

    /// Same grid with the 2/3-rule truncation switched on or off for every
    /// derivative taken on it.
    pub fn with_dealiasing(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.tr.k
    }

    /// Nyquist wavenumber `pi / dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(f.len(), self.n);
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.tr.forward.process(&mut buf);
        buf
    }

    /// Inverse transform including the `1/N` normalisation.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        self.tr.inverse.process(&mut spec);
        let s = 1.0 / self.n as f64;
        spec.iter_mut().for_each(|c| *c *= s);
        spec
    }

    pub fn forward_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.tr.forward.process(&mut buf);
        buf
    }

    fn truncated(&self, j: usize) -> bool {
        self.dealias && 3.0 * self.tr.k[j].abs() > 2.0 * self.k_max()
    }

    /// Multiply the spectrum of a real signal by `m(k)` and return the real part
    /// of the result.
    pub fn apply_multiplier(&self, f: &[f64], m: impl Fn(f64) -> Complex64) -> Vec<f64> {
        let mut spec = self.forward(f);
        for (j, c) in spec.iter_mut().enumerate() {
            *c *= if self.truncated(j) { Complex64::new(0.0, 0.0) } else { m(self.tr.k[j]) };
        }
        self.inverse(spec).into_iter().map(|c| c.re).collect()
    }

    /// `d^order f / dx^order`. Odd orders drop the Nyquist mode, which has no
    /// real derivative on an even grid.
    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let nyq = self.n / 2;
        let mut spec = self.forward(f);
        let i = Complex64::new(0.0, 1.0);
        for (j, c) in spec.iter_mut().enumerate() {
            if self.truncated(j) || (order % 2 == 1 && j == nyq) {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= (i * self.tr.k[j]).powu(order);
            }
        }
        self.inverse(spec).into_iter().map(|c| c.re).collect()
    }

    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        self.derivative(f, 1)
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.derivative(f, 2)
    }

    /// Periodic antiderivative of the zero-mean part of `f`, fixed so that its
    /// value at index 0 is zero. The mean of `f` is returned alongside, since a
    /// constant slope cannot be represented on a periodic grid.
    pub fn antiderivative(&self, f: &[f64]) -> (Vec<f64>, f64) {
        let nyq = self.n / 2;
        let mut spec = self.forward(f);
        let mean = spec[0].re / self.n as f64;
        for (j, c) in spec.iter_mut().enumerate() {
            if j == 0 || j == nyq {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= Complex64::new(0.0, self.tr.k[j]);
            }
        }
        let mut out: Vec<f64> = self.inverse(spec).into_iter().map(|c| c.re).collect();
        let off = out[0];
        out.iter_mut().for_each(|v| *v -= off);
        (out, mean)
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx()
    }
}

/// Finite samples of a real function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::FieldLength { expected: grid.n_points(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.coordinates().into_iter().map(f).collect())
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n_points()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise map; fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Self::new(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    // Spectral outputs of finite input stay finite, so these skip re-validation.
    fn derived(&self, values: Vec<f64>) -> Self {
        Self { grid: self.grid.clone(), values }
    }

    pub fn gradient(&self) -> Self {
        self.derived(self.grid.gradient(&self.values))
    }

    pub fn laplacian(&self) -> Self {
        self.derived(self.grid.laplacian(&self.values))
    }

    pub fn derivative(&self, order: u32) -> Self {
        self.derived(self.grid.derivative(&self.values, order))
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Mean position and standard deviation of the field read as a
    /// (non-negative) distribution. Positions are grid coordinates, so the
    /// distribution should sit well inside the domain.
    pub fn centroid_width(&self) -> (f64, f64) {
        let xs = self.grid.coordinates();
        let m: f64 = self.values.iter().sum();
        let c = xs.iter().zip(&self.values).map(|(x, v)| x * v).sum::<f64>() / m;
        let var = xs.iter().zip(&self.values).map(|(x, v)| (x - c).powi(2) * v).sum::<f64>() / m;
        (c, var.sqrt())
    }
}

pub fn spectral_gradient(f: &ScalarField) -> ScalarField {
    f.gradient()
}

pub fn spectral_laplacian(f: &ScalarField) -> ScalarField {
    f.laplacian()
}

pub fn integrate(f: &ScalarField) -> f64 {
    f.integrate()
}
