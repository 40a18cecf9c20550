//! Discrete potential theory on rooted networks.
//!
//! A rooted network is a connected, locally finite graph with positive edge
//! conductances and a distinguished root `o`. Computations run on finite
//! balls `B(o, R)` and cover killed Green kernels, dipoles, harmonic
//! measures of spheres, minimax boundary problems, escape potentials built
//! from them and Doob h-transforms.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root fix `f64`, which the default [`Tolerances`]
//! assume.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod doob;
pub mod error;
pub mod green;
pub mod minimax;
pub mod network;
pub mod potential;
pub mod scalar;
pub mod solver;
pub mod verify;

pub use config::Tolerances;
pub use doob::{build_chain, conditioned_vs_hprocess, escape_statistic, h_green_exact, reversal_bound_check, HTransformChain};
pub use error::{Error, Result};
pub use green::{exhaustion_limit, ExhaustionReport, GreenOperator};
pub use minimax::{m_curve, minimax, solve_minimax, BoundaryMeasure, MinimaxProblem, MinimaxResult};
pub use network::{build_network, generate, random_network, Ball, GeneratorSpec, Network, VertexId};
pub use potential::{combine, escape_construct, sublevel_report, validate_potential, PotentialOnBall};
pub use scalar::Scalar;
pub use solver::{DirichletSystem, HarmonicMeasure, Solution};
pub use verify::{verify_suite, ConformanceReport};

pub type Ball64 = Ball<f64>;
pub type DirichletSystem64 = DirichletSystem<f64>;
pub type HTransformChain64 = HTransformChain<f64>;
pub type GreenOperator64 = GreenOperator<f64>;
pub type PotentialOnBall64 = PotentialOnBall<f64>;
pub type MinimaxResult64 = MinimaxResult<f64>;
