//! Killed Green densities, dipoles and path laws on a ball.
//!
//! Two boundary conventions are used. The killed system (walk stopped at
//! `{o} ∪ sphere`) gives the exhaustion approximations `g^(R)`, which
//! increase to `g_o` with `R`, and the harmonic measure of the sphere. The
//! reflecting system (walk stopped at `o` only, sphere vertices keeping
//! their interior edges) treats the ball as a finite network in its own
//! right; dipoles and conditioned path laws are exact for that network.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::network::{Ball, Network, VertexId};
use crate::scalar::Scalar;
use crate::solver::DirichletSystem;

/// Upper bound on the number of paths any enumeration will visit.
pub const PATH_CAP: usize = 1_000_000;

type ColumnCache<T> = RwLock<HashMap<usize, Arc<Vec<T>>>>;

/// Factored Green operator on `B(o, R)` with column caches.
#[derive(Debug)]
pub struct GreenOperator<T> {
    ball: Arc<Ball<T>>,
    killed: DirichletSystem<T>,
    reflecting: OnceLock<std::result::Result<DirichletSystem<T>, Error>>,
    killed_cache: ColumnCache<T>,
    reflecting_cache: ColumnCache<T>,
    tolerances: Tolerances,
}

impl<T: Scalar> GreenOperator<T> {
    pub fn new(net: &Network, radius: usize, tolerances: &Tolerances) -> Result<Self> {
        Self::from_ball(Arc::new(Ball::extract(net, radius)?), tolerances)
    }

    pub fn from_ball(ball: Arc<Ball<T>>, tolerances: &Tolerances) -> Result<Self> {
        let killed = DirichletSystem::killed_at_root_and_sphere(ball.clone(), tolerances)?;
        Ok(GreenOperator {
            ball,
            killed,
            reflecting: OnceLock::new(),
            killed_cache: RwLock::default(),
            reflecting_cache: RwLock::default(),
            tolerances: *tolerances,
        })
    }

    pub fn ball(&self) -> &Arc<Ball<T>> {
        &self.ball
    }

    pub fn radius(&self) -> usize {
        self.ball.radius()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    /// System killed at `{o} ∪ sphere`.
    pub fn killed_system(&self) -> &DirichletSystem<T> {
        &self.killed
    }

    /// System killed at `o` only.
    pub fn reflecting_system(&self) -> Result<&DirichletSystem<T>> {
        self.reflecting.get_or_init(|| DirichletSystem::killed_at_root(self.ball.clone(), &self.tolerances)).as_ref().map_err(Clone::clone)
    }

    fn cached(&self, cache: &ColumnCache<T>, y: usize, compute: impl FnOnce() -> Result<Vec<T>>) -> Result<Arc<Vec<T>>> {
        if let Some(col) = cache.read().expect("cache lock").get(&y) {
            return Ok(col.clone());
        }
        let col = Arc::new(compute()?);
        // Concurrent misses compute identical columns; first insert wins.
        Ok(cache.write().expect("cache lock").entry(y).or_insert(col).clone())
    }

    /// Killed Green density column `g^(R)(·, y)`.
    pub fn column(&self, y: usize) -> Result<Arc<Vec<T>>> {
        self.cached(&self.killed_cache, y, || self.killed.unit_source_column(y))
    }

    /// Green density column of the reflecting ball network.
    pub fn reflecting_column(&self, y: usize) -> Result<Arc<Vec<T>>> {
        let system = self.reflecting_system()?;
        self.cached(&self.reflecting_cache, y, || system.unit_source_column(y))
    }

    /// `g^(R)(x, y)`; zero when either vertex is killed.
    pub fn green_density_at(&self, x: usize, y: usize) -> Result<T> {
        Ok(self.column(y)?[x])
    }

    /// `g^(R)(x, y)` by label.
    pub fn green_density(&self, x: &VertexId, y: &VertexId) -> Result<T> {
        let (x, y) = (self.ball.locate(x)?, self.ball.locate(y)?);
        self.green_density_at(x, y)
    }

    /// Green kernel `G^(R)(x, y) = g^(R)(x, y) c_y`.
    pub fn green_kernel_at(&self, x: usize, y: usize) -> Result<T> {
        Ok(self.green_density_at(x, y)? * self.ball.total_conductance(y))
    }

    /// Upper bound on `g(x, ·)` for every ball and every target: the series
    /// resistance along the breadth-first path from the root to `x`.
    pub fn pointwise_bound(&self, x: usize) -> T {
        self.ball.path_resistance(x)
    }

    /// Dipole from the root to `y` on the ball network: `f(o) = 0` and
    /// `Δf = 1_o - 1_y` on the interior.
    pub fn dipole(&self, y: usize) -> Result<Vec<T>> {
        self.dipole_mixture(&[(y, T::one())])
    }

    /// `g_o(·, η) = Σ_v η(v) g_o(·, v)` for a probability vector `η` given as
    /// `(ball index, weight)` pairs. The result is verified to satisfy
    /// `Δf = 1_o - η` on the interior.
    pub fn dipole_mixture(&self, eta: &[(usize, T)]) -> Result<Vec<T>> {
        let n = self.ball.len();
        let mut source = vec![T::zero(); n];
        let mut total = T::zero();
        for &(v, w) in eta {
            if v >= n {
                return Err(Error::VertexOutsideBall(format!("index {v}")));
            }
            if v == self.ball.root() {
                return Err(Error::TargetIsRoot);
            }
            if w < T::zero() || !w.is_finite() {
                return Err(Error::MeasureNotNormalized(w.as_f64()));
            }
            source[v] += w;
            total += w;
        }
        if (total - T::one()).abs() > T::of(self.tolerances.identity) {
            return Err(Error::MeasureNotNormalized(total.as_f64()));
        }
        let f = self.reflecting_system()?.source_column(&source)?;
        let tol = self.tolerances.identity;
        for v in self.ball.interior() {
            let expected = if v == self.ball.root() { T::one() } else { -source[v] };
            let residual = (self.ball.laplacian_at(&f, v) - expected).abs().as_f64();
            if residual > tol {
                return Err(Error::ResidualTooLarge { residual, tolerance: tol });
            }
        }
        Ok(f)
    }

    /// Rows `K(v, ·)` of the sphere harmonic measure, indexed like
    /// `ball.sphere()`, by reciprocity: `K(v, w) = Σ_{u ∼ w} g^(R)(v, u) c_uw`.
    /// Needs one solve per row instead of one per sphere vertex.
    pub fn harmonic_rows(&self, rows: &[usize]) -> Result<Vec<Vec<T>>> {
        let sphere = self.ball.sphere();
        if sphere.is_empty() {
            return Err(Error::ExhaustedBall { radius: self.radius() });
        }
        rows.par_iter()
            .map(|&v| {
                if !self.ball.is_interior(v) {
                    return Err(Error::VertexNotInterior(self.ball.vertex(v).to_string()));
                }
                let col = self.killed.unit_source_column(v)?;
                Ok(sphere.clone().map(|w| self.ball.neighbors(w).map(|(u, c)| col[u] * c).sum()).collect())
            })
            .collect()
    }

    /// `c_o P_o(oγ) g(γ_ℓ, v)` on the ball network: the probability that the
    /// walk from `o`, conditioned to reach `v` before returning to `o`, starts
    /// with the steps `γ`. The path `γ` must avoid both `o` and `v`.
    pub fn conditioned_path_probability(&self, gamma: &[usize], v: usize) -> Result<T> {
        let root = self.ball.root();
        if gamma.contains(&root) {
            return Err(Error::PathTouchesRoot);
        }
        if gamma.contains(&v) {
            return Err(Error::PathTouchesTarget(self.ball.vertex(v).to_string()));
        }
        let last = *gamma.last().ok_or_else(|| Error::InvalidPath("empty path".into()))?;
        let p = rooted_path_probability(&self.ball, gamma)?;
        Ok(self.ball.total_conductance(root) * p * self.reflecting_column(v)?[last])
    }

    /// Distribution of the first `ell` steps of the walk from `o` conditioned
    /// on `τ_v < τ_o⁺`, summed against `f(path, probability)`. Paths that hit
    /// `v` carry `c_o P_o(oγ) g(v, v)` and may return to `o` afterwards.
    pub fn for_each_conditioned_path(&self, ell: usize, v: usize, mut f: impl FnMut(&[usize], T)) -> Result<()> {
        let gv = self.reflecting_column(v)?;
        let c_o = self.ball.total_conductance(self.ball.root());
        for_each_rooted_path(&self.ball, ell, Some(v), |path, p| {
            let tail = if path.contains(&v) { gv[v] } else { gv[path[path.len() - 1]] };
            f(path, c_o * p * tail)
        })
    }
}

/// `P_{γ₁}(γ) = Π p(γ_{i-1}, γ_i)`; fails on non-adjacent consecutive vertices.
pub fn path_probability<T: Scalar>(ball: &Ball<T>, gamma: &[usize]) -> Result<T> {
    if gamma.is_empty() {
        return Err(Error::InvalidPath("empty path".into()));
    }
    let mut p = T::one();
    for w in gamma.windows(2) {
        let c = ball.conductance(w[0], w[1]);
        if c == T::zero() {
            return Err(Error::InvalidPath(format!("{} and {} are not adjacent", ball.vertex(w[0]), ball.vertex(w[1]))));
        }
        p *= c / ball.total_conductance(w[0]);
    }
    Ok(p)
}

/// `P_o(oγ)`: the walk from the root takes exactly the steps `γ`.
pub fn rooted_path_probability<T: Scalar>(ball: &Ball<T>, gamma: &[usize]) -> Result<T> {
    let mut full = Vec::with_capacity(gamma.len() + 1);
    full.push(ball.root());
    full.extend_from_slice(gamma);
    path_probability(ball, &full)
}

/// Visits every path `γ = (γ₁, …, γ_ℓ)` with `γ₁ ∼ o` that avoids the root,
/// with its weight `P_o(oγ)`. When `release` is set, the root becomes
/// available again once that vertex has been visited.
///
/// Requires `ell <= R` so every step is taken from an interior vertex.
pub fn for_each_rooted_path<T: Scalar>(ball: &Ball<T>, ell: usize, release: Option<usize>, mut f: impl FnMut(&[usize], T)) -> Result<()> {
    if ell == 0 || ell > ball.radius() {
        return Err(Error::InvalidPath(format!("length {ell} must lie in 1..={}", ball.radius())));
    }
    let root = ball.root();
    let mut path = Vec::with_capacity(ell);
    let mut weights = Vec::with_capacity(ell + 1);
    weights.push(T::one());
    let mut released = Vec::with_capacity(ell + 1);
    released.push(false);
    // Explicit DFS: stack of (depth, vertex).
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut visited = 0usize;
    let c_o = ball.total_conductance(root);
    for (x, _) in ball.neighbors(root) {
        stack.push((0, x));
    }
    stack.reverse();
    while let Some((depth, x)) = stack.pop() {
        path.truncate(depth);
        weights.truncate(depth + 1);
        released.truncate(depth + 1);
        let prev = if depth == 0 { root } else { path[depth - 1] };
        let step = ball.conductance(prev, x) / if depth == 0 { c_o } else { ball.total_conductance(prev) };
        path.push(x);
        weights.push(weights[depth] * step);
        released.push(released[depth] || Some(x) == release);
        if path.len() == ell {
            visited += 1;
            if visited > PATH_CAP {
                return Err(Error::PathSpaceTooLarge { cap: PATH_CAP });
            }
            f(&path, weights[ell]);
            continue;
        }
        let open = released[depth + 1];
        let before = stack.len();
        for (u, _) in ball.neighbors(x) {
            if u != root || open {
                stack.push((depth + 1, u));
            }
        }
        stack[before..].reverse();
    }
    Ok(())
}

/// Both sides of `c_o P_o(τ_v < τ_o⁺) = c_v P_v(τ_o < τ_v⁺)` on the ball
/// network (only `o` and `v` absorbing), from one harmonic solve each way.
pub fn path_reversal<T: Scalar>(ball: &Arc<Ball<T>>, v: usize, tolerances: &Tolerances) -> Result<(T, T)> {
    let root = ball.root();
    if v == root {
        return Err(Error::TargetIsRoot);
    }
    let system = DirichletSystem::factor(ball.clone(), &[root, v], tolerances)?;
    let flux = |from: usize, to: usize| -> Result<T> {
        // u = P_x(τ_to < τ_from)
        let mut boundary = vec![T::zero(); ball.len()];
        boundary[to] = T::one();
        let u = system.solve(&vec![T::zero(); ball.len()], &boundary)?.values;
        Ok(ball.neighbors(from).map(|(x, c)| c * u[x]).sum())
    };
    Ok((flux(root, v)?, flux(v, root)?))
}

/// Result of an exhaustion run `R ↦ g^(R)(x, y)`.
#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionReport {
    pub radii: Vec<usize>,
    pub values: Vec<f64>,
    /// `values[i] - values[i-1]`, with `NaN` for the first entry.
    pub deltas: Vec<f64>,
    pub estimate: f64,
    pub converged: bool,
}

/// Computes `g^(R)(x, y)` along an increasing radius schedule and checks the
/// sequence is non-decreasing.
pub fn exhaustion_limit<T: Scalar>(
    net: &Network,
    x: &VertexId,
    y: &VertexId,
    radii: &[usize],
    tol: f64,
    tolerances: &Tolerances,
) -> Result<ExhaustionReport> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] == 0 {
        return Err(Error::InvalidSchedule);
    }
    let root = net.root();
    if *x == root || *y == root {
        return Err(Error::TargetIsRoot);
    }
    let mut values: Vec<f64> = Vec::with_capacity(radii.len());
    let mut deltas = Vec::with_capacity(radii.len());
    for &r in radii {
        let ball = Arc::new(Ball::<T>::extract(net, r)?);
        let system = DirichletSystem::killed_at_root_and_sphere(ball.clone(), tolerances)?;
        let (xi, yi) = (ball.locate(x)?, ball.locate(y)?);
        let v = system.unit_source_column(yi)?[xi].as_f64();
        if let Some(&prev) = values.last() {
            if v < prev - tolerances.solve_residual * prev.abs().max(1.0) {
                return Err(Error::NotMonotone { radius: r, previous: prev, current: v });
            }
            deltas.push(v - prev);
        } else {
            deltas.push(f64::NAN);
        }
        values.push(v);
    }
    let last_delta = *deltas.last().expect("non-empty");
    Ok(ExhaustionReport {
        radii: radii.to_vec(),
        estimate: *values.last().expect("non-empty"),
        converged: last_delta.abs() < tol,
        values,
        deltas,
    })
}
