//! The max-min value `M_R(r)` of potentials on a ball, as a certified
//! linear program.
//!
//! Ball potentials are parameterized by nonnegative sphere data `b` through
//! `ψ_b = Σ_w b(w) K(·, w)` with `α·b = 1`, where `K` is the harmonic measure
//! of the sphere of radius `R` and `α_w = Σ_{x ∼ o} c_ox K(x, w)`. Then
//! `M_R(r) = max_b min_{v ∈ ∂B(o, r)} ψ_b(v)` is the value of the matrix game
//! `Ψ(v, w) = K(v, w) / α_w` and the optimal row strategy is the minimizing
//! boundary measure `η`.

pub mod simplex;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::network::{Ball, Network, VertexId};
use crate::potential::PotentialOnBall;
use crate::scalar::Scalar;
use crate::solver::escape_probability;
use simplex::solve_matrix_game;

/// Probability measure on a sphere `∂B(o, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMeasure<T> {
    pub radius: usize,
    /// Ball indices of the support.
    pub vertices: Vec<usize>,
    pub labels: Vec<VertexId>,
    pub weights: Vec<T>,
}

impl<T: Scalar> BoundaryMeasure<T> {
    /// Uniform measure on the sphere of radius `r` of `ball`.
    pub fn uniform(ball: &Ball<T>, r: usize) -> Result<Self> {
        let vertices: Vec<usize> = ball.layer(r).collect();
        if vertices.is_empty() || r == 0 {
            return Err(Error::InvalidRadii { r, big_r: ball.radius() });
        }
        let w = T::one() / T::of(vertices.len() as f64);
        Self::new(ball, r, vertices.iter().map(|&v| (v, w)).collect())
    }

    /// Measure from `(ball index, weight)` pairs on the sphere of radius `r`.
    pub fn new(ball: &Ball<T>, r: usize, pairs: Vec<(usize, T)>) -> Result<Self> {
        let total: T = pairs.iter().map(|p| p.1).sum();
        if pairs.iter().any(|p| p.1 < T::zero()) || (total - T::one()).abs() > T::of(1e-9) {
            return Err(Error::MeasureNotNormalized(total.as_f64()));
        }
        if let Some(&(v, _)) = pairs.iter().find(|p| p.0 >= ball.len() || ball.distance(p.0) != r) {
            return Err(Error::VertexOutsideBall(format!("index {v} is not on the sphere of radius {r}")));
        }
        Ok(BoundaryMeasure {
            radius: r,
            labels: pairs.iter().map(|p| ball.vertex(p.0)).collect(),
            vertices: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn pairs(&self) -> Vec<(usize, T)> {
        self.vertices.iter().copied().zip(self.weights.iter().copied()).collect()
    }

    /// `f_r(ψ, η) = Σ_v η(v) ψ(v)` for `ψ` tabulated on the ball.
    pub fn pairing(&self, psi: &[T]) -> T {
        self.vertices.iter().zip(&self.weights).map(|(&v, &w)| w * psi[v]).sum()
    }
}

/// `α_w = Σ_{x ∼ o} c_ox K(x, w)` for every vertex of the outer sphere, in
/// `ball.sphere()` order.
pub fn alpha_weights<T: Scalar>(op: &GreenOperator<T>) -> Result<Vec<T>> {
    let ball = op.ball();
    let root = ball.root();
    let neighbors: Vec<(usize, T)> = ball.neighbors(root).collect();
    let rows = op.harmonic_rows(&neighbors.iter().map(|p| p.0).collect::<Vec<_>>())?;
    let mut alpha = vec![T::zero(); ball.sphere().len()];
    for ((_, c), row) in neighbors.iter().zip(&rows) {
        alpha.iter_mut().zip(row).for_each(|(a, &k)| *a += *c * k);
    }
    let check = alpha_consistency(op, &alpha)?;
    if check.discrepancy > op.tolerances().identity {
        return Err(Error::ResidualTooLarge { residual: check.discrepancy, tolerance: op.tolerances().identity });
    }
    Ok(alpha)
}

/// `Σ_w α_w` against the escape flux `c_o P_o(τ_∂ < τ_o⁺)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaCheck {
    pub sum_alpha: f64,
    pub escape_flux: f64,
    pub discrepancy: f64,
}

pub fn alpha_consistency<T: Scalar>(op: &GreenOperator<T>, alpha: &[T]) -> Result<AlphaCheck> {
    let ball = op.ball();
    let escape = escape_probability(op.killed_system())?;
    let flux: T = ball.neighbors(ball.root()).map(|(x, c)| c * escape[x]).sum();
    let sum: T = alpha.iter().copied().sum();
    Ok(AlphaCheck { sum_alpha: sum.as_f64(), escape_flux: flux.as_f64(), discrepancy: (sum - flux).abs().as_f64() })
}

/// The finite game behind `M_R(r)`.
#[derive(Clone, Debug)]
pub struct MinimaxProblem<T> {
    op: Arc<GreenOperator<T>>,
    r: usize,
    inner: Vec<usize>,
    outer: Vec<usize>,
    alpha: Vec<T>,
    /// `Ψ(v, w) = K(v, w) / α_w`, row-major over `inner x outer`.
    payoff: Vec<T>,
    dropped: usize,
}

impl<T: Scalar> MinimaxProblem<T> {
    /// Assembles the game for inner radius `r` on the operator's ball.
    pub fn new(op: Arc<GreenOperator<T>>, r: usize) -> Result<Self> {
        let big_r = op.radius();
        if r == 0 || r >= big_r {
            return Err(Error::InvalidRadii { r, big_r });
        }
        let ball = op.ball().clone();
        let inner: Vec<usize> = ball.layer(r).collect();
        if inner.is_empty() {
            return Err(Error::Infeasible(format!("sphere of radius {r} is empty")));
        }
        let alpha_all = alpha_weights(&op)?;
        let sphere: Vec<usize> = ball.sphere().collect();
        let keep: Vec<usize> = (0..sphere.len()).filter(|&j| alpha_all[j] > T::zero()).collect();
        let dropped = sphere.len() - keep.len();
        if dropped > 0 {
            log::warn!("{dropped} sphere vertices are unreachable from the root neighbors and were dropped");
        }
        if keep.is_empty() {
            return Err(Error::Infeasible("no sphere vertex is reachable".into()));
        }
        let rows = op.harmonic_rows(&inner)?;
        let mut payoff = Vec::with_capacity(inner.len() * keep.len());
        for row in &rows {
            payoff.extend(keep.iter().map(|&j| row[j] / alpha_all[j]));
        }
        Ok(MinimaxProblem {
            op,
            r,
            inner,
            outer: keep.iter().map(|&j| sphere[j]).collect(),
            alpha: keep.iter().map(|&j| alpha_all[j]).collect(),
            payoff,
            dropped,
        })
    }

    /// Builds `B(o, big_r)` of `net` and the game for inner radius `r`.
    pub fn for_network(net: &Network, r: usize, big_r: usize, tolerances: &Tolerances) -> Result<Self> {
        if r == 0 || r >= big_r {
            return Err(Error::InvalidRadii { r, big_r });
        }
        Self::new(Arc::new(GreenOperator::new(net, big_r, tolerances)?), r)
    }

    pub fn operator(&self) -> &Arc<GreenOperator<T>> {
        &self.op
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn big_r(&self) -> usize {
        self.op.radius()
    }

    /// Ball indices of `∂B(o, r)`.
    pub fn inner(&self) -> &[usize] {
        &self.inner
    }

    /// Ball indices of the retained outer sphere vertices.
    pub fn outer(&self) -> &[usize] {
        &self.outer
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    /// `Ψ(i, j) = K(inner[i], outer[j]) / α_j`.
    pub fn payoff(&self, i: usize, j: usize) -> T {
        self.payoff[i * self.outer.len() + j]
    }

    pub fn dropped_columns(&self) -> usize {
        self.dropped
    }

    /// The ball potential with outer boundary data `b` (indexed like `outer`).
    pub fn potential_from_boundary(&self, b: &[T]) -> Result<PotentialOnBall<T>> {
        let ball = self.op.ball();
        let zero = vec![T::zero(); ball.len()];
        let mut boundary = zero.clone();
        for (&w, &bw) in self.outer.iter().zip(b) {
            boundary[w] = bw;
        }
        let mass: T = self.alpha.iter().zip(b).map(|(&a, &x)| a * x).sum();
        let values = self.op.killed_system().solve(&zero, &boundary)?.values;
        Ok(PotentialOnBall::new(ball.clone(), values, mass, self.op.tolerances()))
    }

    /// Normalized dipole `ψ_w = K(·, w) / α_w` for `outer[j]`.
    pub fn normalized_dipole(&self, j: usize) -> Result<PotentialOnBall<T>> {
        let mut b = vec![T::zero(); self.outer.len()];
        b[j] = self.alpha[j].recip();
        self.potential_from_boundary(&b)
    }
}

/// Optimal potential, minimizing measure and duality certificate.
#[derive(Clone, Debug)]
pub struct MinimaxResult<T> {
    pub r: usize,
    pub big_r: usize,
    /// Certified lower bound `min_{∂B(o,r)} ψ*`.
    pub value: T,
    /// Certified upper bound `max_w (Σ_v η*(v) K(v, w)) / α_w`.
    pub dual_value: T,
    pub gap: T,
    /// Minimum of `ψ*` over the annulus `r ≤ d < R`. Optimizers on a ball
    /// can dip below `value` near the outer sphere, where `b` may vanish.
    pub annulus_min: T,
    pub psi: PotentialOnBall<T>,
    pub eta: BoundaryMeasure<T>,
    /// Outer boundary data `b` of `ψ*` as `(ball index, value)`.
    pub boundary: Vec<(usize, T)>,
    pub iterations: usize,
    pub degenerate: bool,
    pub dropped_columns: usize,
}

impl<T: Scalar> MinimaxResult<T> {
    /// Gap within `lp_gap · max(1, value)`.
    pub fn certified(&self, tolerances: &Tolerances) -> bool {
        self.gap.as_f64() <= tolerances.lp_gap * self.value.as_f64().abs().max(1.0)
    }
}

/// Solves the game and rebuilds `ψ*` on the whole ball.
pub fn solve_minimax<T: Scalar>(problem: &MinimaxProblem<T>) -> Result<MinimaxResult<T>> {
    let (m, n) = (problem.inner.len(), problem.outer.len());
    // Stop a little inside the tolerance so the certificate has headroom.
    let target = 0.1 * problem.op.tolerances().lp_gap;
    let game = solve_matrix_game(&problem.payoff, m, n, target)?;
    let b: Vec<T> = game.beta.iter().zip(&problem.alpha).map(|(&beta, &a)| beta / a).collect();
    let psi = problem.potential_from_boundary(&b)?;
    let ball = problem.op.ball();
    let eta = BoundaryMeasure::new(ball, problem.r, problem.inner.iter().copied().zip(game.eta).collect())?;
    let annulus_min = (0..ball.len())
        .filter(|&i| ball.distance(i) >= problem.r && ball.distance(i) < ball.radius())
        .map(|i| psi.values()[i])
        .fold(T::infinity(), T::min);
    Ok(MinimaxResult {
        r: problem.r,
        big_r: problem.big_r(),
        value: game.primal,
        dual_value: game.dual,
        gap: (game.dual - game.primal).abs(),
        annulus_min,
        psi,
        eta,
        boundary: problem.outer.iter().copied().zip(b).filter(|p| p.1 > T::zero()).collect(),
        iterations: game.iterations,
        degenerate: game.degenerate,
        dropped_columns: problem.dropped,
    })
}

/// `M_R(r)` for `B(o, R)` of `net`.
pub fn minimax<T: Scalar>(net: &Network, r: usize, big_r: usize, tolerances: &Tolerances) -> Result<MinimaxResult<T>> {
    solve_minimax(&MinimaxProblem::for_network(net, r, big_r, tolerances)?)
}

/// One row of an `M` curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MCurveRow {
    pub r: usize,
    pub big_r: usize,
    pub value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MCurve {
    pub ratio: f64,
    pub rows: Vec<MCurveRow>,
    /// `M` non-decreasing in `r` up to `1e-10` slack.
    pub monotone: bool,
}

/// `R = ⌈ρ r⌉` for the ratio rule.
pub fn outer_radius(r: usize, ratio: f64) -> usize {
    ((r as f64 * ratio) - 1e-9).ceil() as usize
}

/// `M_{⌈ρr⌉}(r)` over a list of inner radii, solved in parallel.
pub fn m_curve<T: Scalar>(net: &Network, radii: &[usize], ratio: f64, tolerances: &Tolerances) -> Result<MCurve> {
    if !(ratio > 1.0) {
        return Err(Error::InvalidSpec(format!("ratio must exceed 1, got {ratio}")));
    }
    let rows = radii
        .par_iter()
        .map(|&r| {
            let big_r = outer_radius(r, ratio).max(r + 1);
            let res = minimax::<T>(net, r, big_r, tolerances)?;
            Ok(MCurveRow {
                r,
                big_r,
                value: res.value.as_f64(),
                dual_value: res.dual_value.as_f64(),
                gap: res.gap.as_f64(),
                iterations: res.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[0].r > w[1].r || w[1].value >= w[0].value - 1e-10);
    if !monotone {
        log::warn!("M curve of {} is not monotone in r at ratio {ratio}", net.name());
    }
    Ok(MCurve { ratio, rows, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate, GeneratorSpec};

    fn line() -> Network {
        generate(GeneratorSpec::line(), None).unwrap()
    }

    #[test]
    fn line_alpha() {
        let op = GreenOperator::<f64>::new(&line(), 4, &Tolerances::default()).unwrap();
        let alpha = alpha_weights(&op).unwrap();
        assert_eq!(alpha.len(), 2);
        assert!(alpha.iter().all(|a| (a - 0.25).abs() < 1e-14));
        let check = alpha_consistency(&op, &alpha).unwrap();
        assert!((check.escape_flux - 0.5).abs() < 1e-14);
    }

    #[test]
    fn normalized_dipoles_have_unit_mass_on_grid() {
        let grid = generate(GeneratorSpec::Grid2d, None).unwrap();
        let p = MinimaxProblem::<f64>::for_network(&grid, 2, 4, &Tolerances::default()).unwrap();
        for j in 0..p.outer().len() {
            let psi = p.normalized_dipole(j).unwrap();
            let lap = p.operator().ball().laplacian_apply(psi.values(), 0).unwrap();
            assert!((lap - 1.0).abs() < 1e-9);
            assert!(psi.report().valid, "{:?}", psi.report());
        }
    }

    #[test]
    fn line_values() {
        let tol = Tolerances::default();
        for (r, big_r, want) in [(2, 4, 1.0), (1, 4, 0.5), (2, 8, 1.0), (4, 8, 2.0), (4, 32, 2.0)] {
            let res = minimax::<f64>(&line(), r, big_r, &tol).unwrap();
            assert!((res.value - want).abs() < 1e-12, "r={r} R={big_r}: {}", res.value);
            assert!(res.certified(&tol));
            assert!(res.psi.report().valid);
            for &w in &res.eta.weights {
                assert!((w - 0.5).abs() < 1e-12);
            }
        }
        let res = minimax::<f64>(&line(), 2, 4, &tol).unwrap();
        let ball = res.psi.ball().clone();
        for x in -4i64..=4 {
            let i = ball.index_of(&VertexId::Int(x)).unwrap();
            assert!((res.psi.values()[i] - x.abs() as f64 / 2.0).abs() < 1e-12);
        }
        assert!(matches!(minimax::<f64>(&line(), 4, 4, &tol), Err(Error::InvalidRadii { .. })));
    }

    #[test]
    fn line_curve() {
        let curve = m_curve::<f64>(&line(), &[2, 4, 8], 2.0, &Tolerances::default()).unwrap();
        let values: Vec<f64> = curve.rows.iter().map(|r| r.value).collect();
        for (v, want) in values.iter().zip([1.0, 2.0, 4.0]) {
            assert!((v - want).abs() < 1e-12);
        }
        assert!(curve.monotone);
        assert_eq!(curve.rows[2].big_r, 16);
    }

    #[test]
    fn grid_pairing_consistency() {
        let tol = Tolerances::default();
        let grid = generate(GeneratorSpec::Grid2d, None).unwrap();
        let p = MinimaxProblem::<f64>::for_network(&grid, 4, 8, &tol).unwrap();
        let res = solve_minimax(&p).unwrap();
        assert!(res.certified(&tol), "gap {}", res.gap);
        assert!(res.psi.report().valid);
        let ball = p.operator().ball().clone();
        let inner_min = p.inner().iter().map(|&v| res.psi.values()[v]).fold(f64::INFINITY, f64::min);
        assert!((inner_min - res.value).abs() < 1e-9);
        let uniform = BoundaryMeasure::uniform(&ball, 4).unwrap();
        assert!(uniform.pairing(res.psi.values()) >= res.value - res.gap - 1e-12);
        for j in 0..p.outer().len() {
            let dip = p.normalized_dipole(j).unwrap();
            assert!(res.eta.pairing(dip.values()) <= res.value + res.gap + 1e-9);
        }
    }
}
