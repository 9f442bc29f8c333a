use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid needs a power-of-two point count >= 16, got {0}")]
    GridSize(usize),
    #[error("grid length must be positive and finite, got {0}")]
    GridLength(f64),
    #[error("field has {got} samples but the grid has {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("non-finite value at grid index {index}")]
    NonFinite { index: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("density has no positive values; nothing to floor against")]
    NonPositiveDensity,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel tail does not decay; moment diverges")]
    DivergentTail,
    #[error("quadrature failed to converge (estimated error {0:e})")]
    Quadrature(f64),
    #[error("kernel moment m0 vanishes; cannot normalize")]
    ZeroMass,
    #[error("kernel not net-attractive; a^2 undefined (a^2 = {0:e})")]
    NotAttractive(f64),
    #[error("moment c{0} is not available in the moment table")]
    MissingMoment(u32),
    #[error("requested order n={n} exceeds n_max={n_max}")]
    OrderAboveTruncation { n: u32, n_max: u32 },
    #[error("factorial ({0})! overflows f64")]
    FactorialOverflow(u32),
    #[error("vacuum breakdown: {0}")]
    VacuumBreakdown(String),
    #[error("solver produced non-finite values at t={time}, min rho={min_density:e}")]
    Blowup { time: f64, min_density: f64 },
    #[error("Madelung transform undefined at nodes (|psi|^2 = {value:e} at index {index})")]
    Node { index: usize, value: f64 },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("trajectories are sampled differently: {0}")]
    SamplingMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
