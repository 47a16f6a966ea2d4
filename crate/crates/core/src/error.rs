use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("collar width 2h = {collar} exceeds domain half-width {half_width}")]
    CollarTooWide { collar: f64, half_width: f64 },
    #[error("erosion radius {r} empties a shape of inradius {inradius}")]
    ErosionEmpty { r: f64, inradius: f64 },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("mollifier radius {r} is below two grid spacings ({min})")]
    KernelUnresolved { r: f64, min: f64 },
    #[error("CFL violated: courant number {courant:.4} exceeds {limit}")]
    CflViolation { courant: f64, limit: f64 },
    #[error("linear solve did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolveDiverged { residual: f64, iterations: usize },
    #[error("vacuum at face {index}: density {density:.3e} carries momentum {momentum:.3e}")]
    VacuumCell { index: usize, density: f64, momentum: f64 },
    #[error("negative density {0}")]
    NegativeDensity(f64),
    #[error("renormalized residual needs at least two states, got {0}")]
    HistoryTooShort(usize),
    #[error("marker at ({x:.4}, {y:.4}) is within the mollifier radius of the wall")]
    MarkerEscaped { x: f64, y: f64 },
    #[error("markers are degenerate (collinear or fewer than three)")]
    DegenerateMarkers,
    #[error("marker polygon self-intersects")]
    SelfIntersection,
    #[error("stress probe ring leaves the domain")]
    ProbeOutside,
    #[error("initial margin d = {d} does not exceed h = {h}")]
    InvalidMargin { d: f64, h: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
