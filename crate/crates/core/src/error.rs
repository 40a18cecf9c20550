use thiserror::Error;

/// Errors raised by network construction, solvers and the potential-theory routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyNetwork,
    #[error("conductance of edge {u}-{v} must be finite and positive, got {value}")]
    NonPositiveConductance { u: String, v: String, value: f64 },
    #[error("self-loop at vertex {0}")]
    SelfLoop(String),
    #[error("root {0} does not appear in the edge list")]
    RootAbsent(String),
    #[error("network is disconnected: {unreached} vertices unreachable from the root")]
    Disconnected { unreached: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid vertex label {0:?}")]
    InvalidLabel(String),
    #[error("invalid network file: {0}")]
    Format(String),

    #[error("vertex {0} is not an interior vertex of the ball")]
    VertexNotInterior(String),
    #[error("vertex {0} is outside the ball")]
    VertexOutsideBall(String),
    #[error("radius must be at least 1")]
    InvalidRadius,
    #[error("ball of radius {radius} exhausts the finite network (empty sphere)")]
    ExhaustedBall { radius: usize },

    #[error("killed set must contain the root")]
    RootNotKilled,
    #[error("source has mass {0} on killed vertices")]
    SourceOnKilled(f64),
    #[error("system is singular at pivot {0}")]
    SingularSystem(usize),
    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("dense system of size {size} exceeds the cap {cap}")]
    SystemTooLarge { size: usize, cap: usize },

    #[error("dipole target is the root")]
    TargetIsRoot,
    #[error("measure is not a probability vector (total mass {0})")]
    MeasureNotNormalized(f64),
    #[error("exhaustion sequence decreased at R={radius}: {previous} -> {current}")]
    NotMonotone { radius: usize, previous: f64, current: f64 },
    #[error("radius schedule must be strictly increasing and non-empty")]
    InvalidSchedule,
    #[error("path visits the root")]
    PathTouchesRoot,
    #[error("path visits the target {0}")]
    PathTouchesTarget(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path enumeration exceeds {cap} paths")]
    PathSpaceTooLarge { cap: usize },

    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program is infeasible: {0}")]
    Infeasible(String),
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
    #[error("inner radius {r} must satisfy 1 <= r < R = {big_r}")]
    InvalidRadii { r: usize, big_r: usize },

    #[error("potentials live on different balls")]
    BallMismatch,
    #[error("no radius <= {r_max} reaches level {level} for schedule entry {n}; achievable level is at most {achievable}")]
    ScheduleInfeasible { n: usize, r_max: usize, level: f64, achievable: f64 },
    #[error("ball of radius {radius} exceeds the vertex budget {limit}")]
    VertexBudget { radius: usize, limit: usize },

    #[error("h-transform has no states")]
    EmptyStateSpace,
    #[error("vertex {0} is not a state of the h-process")]
    NotAState(String),
    #[error("{0}-step support starting at distance {1} leaves the ball of radius {2}")]
    BallTooSmall(usize, usize, usize),
    #[error("path length {ell} must satisfy 0 < ell < d(o, v) = {distance}")]
    EllTooLarge { ell: usize, distance: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
