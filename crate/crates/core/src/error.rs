use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid wire `{wire}`: {reason}")]
    InvalidWire { wire: String, reason: String },

    #[error("wires `{first}` and `{second}` overlap")]
    OverlappingWires { first: String, second: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x:.3e}, {y:.3e}, {z:.3e}) m lies inside conductor `{wire}`")]
    InsideConductor { wire: String, x: f64, y: f64, z: f64 },

    #[error("non-finite field or potential at ({x:.3e}, {y:.3e}, {z:.3e}) m")]
    NonFinite { x: f64, y: f64, z: f64 },

    #[error("minimizer did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("minimum escaped the search domain")]
    EscapedDomain,

    #[error("hessian is not positive semidefinite (eigenvalues {eigenvalues:?}): saddle point")]
    Saddle { eigenvalues: [f64; 3] },

    #[error("static field vanishes: quantization axis undefined")]
    ZeroField,

    #[error("found {} minima on the slice at {positions:?} m", positions.len())]
    TooManyMinima { positions: Vec<f64> },

    #[error("no interior minimum on the slice")]
    NoMinimum,

    #[error("centerline deviation {max_deviation:.3e} m exceeds a tenth of the wire width {width:.3e} m")]
    DeviationTooLarge { max_deviation: f64, width: f64 },

    #[error("density profile is zero everywhere")]
    ZeroDensity,

    #[error("density profile has a negative sample ({value:.3e}) at index {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("analysis window too narrow: {0}")]
    WindowTooNarrow(String),

    #[error("thermal runaway above {threshold_current:.4} A")]
    ThermalRunaway { threshold_current: f64 },

    #[error("grid under-samples the fringe period: spacing {spacing:.3e} m, period {period:.3e} m")]
    UnderSampled { spacing: f64, period: f64 },

    #[error("no fringe peak in the spectrum (estimated contrast {contrast:.3e})")]
    DegenerateSpectrum { contrast: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
