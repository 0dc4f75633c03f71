use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("domain must have positive finite size, got L = {width}, H = {half_height}")]
    BadDomain { width: f64, half_height: f64 },
    #[error("eps must be positive and finite, got {0}")]
    BadEps(f64),
    #[error("hole {hole}: half-width must be finite and nonnegative, got {d}")]
    BadHalfWidth { hole: usize, d: f64 },
    #[error("guard-radius: rho < min(1, H/2) violated for hole {hole} (rho = {rho}, limit {limit})")]
    GuardTooLarge { hole: usize, rho: f64, limit: f64 },
    #[error("size-ratio: d ≤ ρ/8 violated for hole {hole} (d = {d:.6e}, rho = {rho:.6e})")]
    SizeRatio { hole: usize, d: f64, rho: f64 },
    #[error("{label}: {detail}")]
    Assumption { label: &'static str, detail: String },
    #[error("regular partitions need dimension 3, got {0}")]
    Dimension(usize),
    #[error("disk capacity constant must be positive, got {0}")]
    BadAlpha(f64),
    #[error("guard fraction must lie in (0, 1), got {0}")]
    BadGuardFraction(f64),
    #[error("cell {0} is empty")]
    EmptyCell(usize),
    #[error("cells {0} and {1} overlap")]
    CellOverlap(usize, usize),
    #[error("cell {cell}: diam/rho = {ratio:.3} exceeds the admissible cell shape ratio")]
    CellShape { cell: usize, ratio: f64 },
    #[error("gamma is negative at x = {x}: {value}")]
    NegativeGamma { x: f64, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh size {h} too coarse: {reason}")]
    TooCoarse { h: f64, reason: String },
    #[error("hole layout cannot be meshed: {0}")]
    Layout(String),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("triangle {0} crosses the interface")]
    CrossesInterface(usize),
    #[error("interface edge ({0}, {1}) has an unmarked endpoint")]
    UnmarkedInterface(usize, usize),
    #[error("minimum angle {angle:.2} deg below 20 deg in triangle {triangle}")]
    Sliver { triangle: usize, angle: f64 },
    #[error("mesh dump parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("nonpositive diagonal entry {value} at row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("gamma is negative at quadrature point x = {x}: {value}")]
    NegativeGamma { x: f64, value: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigenpair {index} not converged (residual {residual:.3e})")]
    EigenNotConverged { index: usize, residual: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("need 0 < d < rho, got d = {d}, rho = {rho}")]
    BadRadii { d: f64, rho: f64 },
    #[error("need 0 < d ≤ ρ/8, got d/rho = {0:.6e}")]
    SizeRatio(f64),
    #[error("mesh too coarse: {0}")]
    TooCoarse(String),
    #[error("shape {0} is not supported on this path")]
    Shape(&'static str),
    #[error("target strength {target} unreachable with d ≤ ρ/8 (max achievable {max:.6e})")]
    Unreachable { target: f64, max: f64 },
    #[error("extrapolation did not settle: {0}")]
    Extrapolation(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("need at least 3 rows for a rate fit, got {0}")]
    TooFewRows(usize),
    #[error("invalid study input: {0}")]
    Input(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
