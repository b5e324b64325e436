use thiserror::Error;

/// Failures raised by the numerical modules.
///
/// The display strings are part of the CLI contract: they are echoed verbatim
/// when a command aborts on a guard violation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid bath: {0}")]
    InvalidBath(String),
    #[error("delta kernel not pointwise evaluable")]
    DeltaKernel,
    #[error("invalid spectral density: J({omega}) = {value}")]
    InvalidSpectralDensity { omega: f64, value: f64 },
    #[error("decoupled bath")]
    DecoupledBath,
    #[error("inverse kernel undefined for unfaithful coupling")]
    UnfaithfulCoupling,
    #[error("thermal occupation undefined for frequency {0}")]
    ThermalOccupation(f64),
    #[error("kernel not positive semidefinite on grid (eigenvalue {eigenvalue}, largest {largest})")]
    NotPositiveSemidefinite { eigenvalue: f64, largest: f64 },
    #[error("kernel not Hermitian on grid (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("kernel numerically zero")]
    KernelZero,
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("out of horizon: t = {t} not in [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("grid mismatch")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("step size too large (step-halving change {change:e})")]
    StepSizeTooLarge { change: f64 },
    #[error("perturbation scale unreliable: {0}")]
    PerturbationScale(f64),
    #[error("index {index} not interior to grid of {n_points} points")]
    NotInterior { index: usize, n_points: usize },
    #[error("truncation too large: {0} basis states")]
    TruncationTooLarge(usize),
    #[error("increase n_max (leakage {0:e})")]
    Leakage(f64),
    #[error("amplitude too large for truncation (|f|^2 = {norm_sq}, n_max = {n_max})")]
    AmplitudeTooLarge { norm_sq: f64, n_max: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },
}

pub type Result<T> = std::result::Result<T, Error>;
