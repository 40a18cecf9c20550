//! Dirichlet problems for the weighted graph Laplacian on a ball.
//!
//! A [`DirichletSystem`] fixes values on a killed set `Z` (always containing
//! the root) and factors the reduced Laplacian on the remaining ball
//! vertices. Free sphere vertices keep only their interior edges, so killing
//! `{o}` alone treats the ball as a finite network with a reflecting sphere.

pub mod dense;
mod sparse;

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::network::{Ball, Network, VertexId};
use crate::scalar::{max_abs, Scalar};
use sparse::{SparseLdl, SymmetricRows};

const NO_SLOT: usize = usize::MAX;

/// Factored reduced Laplacian `L_Z` over the ball vertices outside `Z`.
///
/// Immutable after construction; concurrent solves are safe.
#[derive(Debug)]
pub struct DirichletSystem<T> {
    ball: Arc<Ball<T>>,
    killed: Vec<bool>,
    slot: Vec<usize>,
    free: Vec<usize>,
    matrix: SymmetricRows<T>,
    factor: SparseLdl<T>,
    tolerance: f64,
}

impl<T> std::fmt::Debug for SymmetricRows<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricRows(n={})", self.diag.len())
    }
}

/// Solution of a Dirichlet problem over the whole ball.
#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub values: Vec<T>,
    /// `||L_Z u - rhs||_inf`.
    pub residual: T,
}

impl<T: Scalar> DirichletSystem<T> {
    /// Factors the system killed on `killed` (ball indices).
    pub fn factor(ball: Arc<Ball<T>>, killed: &[usize], tolerances: &Tolerances) -> Result<Self> {
        let n = ball.len();
        let mut mask = vec![false; n];
        for &k in killed {
            if k >= n {
                return Err(Error::VertexOutsideBall(format!("index {k}")));
            }
            mask[k] = true;
        }
        if !mask[ball.root()] {
            return Err(Error::RootNotKilled);
        }
        let mut slot = vec![NO_SLOT; n];
        let mut free = Vec::new();
        for i in 0..n {
            if !mask[i] {
                slot[i] = free.len();
                free.push(i);
            }
        }
        let mut matrix = SymmetricRows { diag: Vec::with_capacity(free.len()), offsets: vec![0], cols: Vec::new(), vals: Vec::new() };
        for &i in &free {
            matrix.diag.push(ball.total_conductance(i));
            for (j, c) in ball.neighbors(i) {
                if !mask[j] {
                    matrix.cols.push(slot[j]);
                    matrix.vals.push(-c);
                }
            }
            matrix.offsets.push(matrix.cols.len());
        }
        let factor = SparseLdl::factor(&matrix).map_err(|e| match e {
            Error::SingularSystem(k) => Error::SingularSystem(free[k]),
            other => other,
        })?;
        Ok(DirichletSystem { ball, killed: mask, slot, free, matrix, factor, tolerance: tolerances.solve_residual })
    }

    /// Killed at the root and the whole sphere.
    pub fn killed_at_root_and_sphere(ball: Arc<Ball<T>>, tolerances: &Tolerances) -> Result<Self> {
        let killed: Vec<usize> = std::iter::once(ball.root()).chain(ball.sphere()).collect();
        Self::factor(ball, &killed, tolerances)
    }

    /// Killed at the root only; the sphere reflects.
    pub fn killed_at_root(ball: Arc<Ball<T>>, tolerances: &Tolerances) -> Result<Self> {
        let root = ball.root();
        Self::factor(ball, &[root], tolerances)
    }

    pub fn ball(&self) -> &Arc<Ball<T>> {
        &self.ball
    }

    pub fn is_killed(&self, i: usize) -> bool {
        self.killed[i]
    }

    /// Number of unknowns.
    pub fn dimension(&self) -> usize {
        self.free.len()
    }

    /// Nonzeros in the triangular factor.
    pub fn factor_nnz(&self) -> usize {
        self.factor.nnz()
    }

    /// True when every sphere vertex is killed.
    pub fn kills_sphere(&self) -> bool {
        self.ball.sphere().all(|i| self.killed[i])
    }

    fn checked_solve(&self, rhs: &[T]) -> Result<(Vec<T>, T)> {
        let mut x = rhs.to_vec();
        self.factor.solve_in_place(&mut x);
        let scale = max_abs(rhs).max(T::min_positive_value());
        let limit = T::of(self.tolerance) * scale;
        let mut ax = vec![T::zero(); x.len()];
        self.matrix.mul(&x, &mut ax);
        let mut r: Vec<T> = rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        let mut residual = max_abs(&r);
        if residual > limit {
            self.factor.solve_in_place(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, &d)| *xi += d);
            self.matrix.mul(&x, &mut ax);
            residual = rhs.iter().zip(&ax).fold(T::zero(), |m, (&b, &a)| m.max((b - a).abs()));
        }
        if residual > limit {
            return Err(Error::ResidualTooLarge { residual: (residual / scale).as_f64(), tolerance: self.tolerance });
        }
        Ok((x, residual))
    }

    fn scatter(&self, x: &[T], boundary: Option<&[T]>) -> Vec<T> {
        let mut values = vec![T::zero(); self.ball.len()];
        for (k, &i) in self.free.iter().enumerate() {
            values[i] = x[k];
        }
        if let Some(b) = boundary {
            for i in 0..values.len() {
                if self.killed[i] {
                    values[i] = b[i];
                }
            }
        }
        values
    }

    /// Solves `Δu = -source` off the killed set with `u = boundary` on it.
    ///
    /// Both slices are indexed by ball vertex; `boundary` is read only on
    /// killed vertices.
    pub fn solve(&self, source: &[T], boundary: &[T]) -> Result<Solution<T>> {
        let n = self.ball.len();
        assert!(source.len() == n && boundary.len() == n, "source and boundary must cover the ball");
        let stray: T = (0..n).filter(|&i| self.killed[i]).map(|i| source[i].abs()).sum();
        if stray > T::zero() {
            return Err(Error::SourceOnKilled(stray.as_f64()));
        }
        let mut rhs: Vec<T> = self.free.iter().map(|&i| source[i]).collect();
        for (k, &i) in self.free.iter().enumerate() {
            for (j, c) in self.ball.neighbors(i) {
                if self.killed[j] {
                    rhs[k] += c * boundary[j];
                }
            }
        }
        let (x, residual) = self.checked_solve(&rhs)?;
        Ok(Solution { values: self.scatter(&x, Some(boundary)), residual })
    }

    /// `L_Z⁻¹ e_y` scattered over the ball (zero on the killed set): the
    /// killed Green density column `g(·, y)`.
    pub fn unit_source_column(&self, y: usize) -> Result<Vec<T>> {
        if self.slot[y] == NO_SLOT {
            return Ok(vec![T::zero(); self.ball.len()]);
        }
        let mut rhs = vec![T::zero(); self.free.len()];
        rhs[self.slot[y]] = T::one();
        let (x, _) = self.checked_solve(&rhs)?;
        Ok(self.scatter(&x, None))
    }

    /// Solves against an arbitrary source supported off the killed set with
    /// zero boundary data.
    pub fn source_column(&self, source: &[T]) -> Result<Vec<T>> {
        let zero = vec![T::zero(); self.ball.len()];
        self.solve(source, &zero).map(|s| s.values)
    }
}

/// Hitting distribution on the sphere for the walk killed at `{o} ∪ sphere`.
///
/// Stored column-wise: `columns[k][v] = P_v(first killed vertex is sphere[k])`.
#[derive(Clone, Debug)]
pub struct HarmonicMeasure<T> {
    pub sphere: Vec<usize>,
    pub columns: Vec<Vec<T>>,
}

impl<T: Scalar> HarmonicMeasure<T> {
    /// `K(v, w)` for ball indices `v` and sphere vertex `w`.
    pub fn get(&self, v: usize, w: usize) -> Option<T> {
        let k = self.sphere.iter().position(|&s| s == w)?;
        Some(self.columns[k][v])
    }

    /// `sum_w K(v, w)`.
    pub fn row_sum(&self, v: usize) -> T {
        self.columns.iter().map(|c| c[v]).sum()
    }
}

/// Harmonic measure of the sphere, one solve per sphere vertex sharing a
/// single factorization.
pub fn harmonic_measure<T: Scalar>(system: &DirichletSystem<T>) -> Result<HarmonicMeasure<T>> {
    let ball = system.ball();
    if ball.exhausted() {
        return Err(Error::ExhaustedBall { radius: ball.radius() });
    }
    if !system.kills_sphere() {
        return Err(Error::InvalidSpec("harmonic measure needs the sphere killed".into()));
    }
    let sphere: Vec<usize> = ball.sphere().collect();
    let zero = vec![T::zero(); ball.len()];
    let columns = sphere
        .par_iter()
        .map(|&w| {
            let mut b = zero.clone();
            b[w] = T::one();
            system.solve(&zero, &b).map(|s| s.values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HarmonicMeasure { sphere, columns })
}

/// `P_v(τ_o < τ_sphere)` complement check data: the solution with boundary 1
/// on the sphere and 0 at the root, i.e. `P_v(τ_sphere < τ_o)`.
pub fn escape_probability<T: Scalar>(system: &DirichletSystem<T>) -> Result<Vec<T>> {
    let ball = system.ball();
    let zero = vec![T::zero(); ball.len()];
    let mut b = zero.clone();
    for w in ball.sphere() {
        b[w] = T::one();
    }
    system.solve(&zero, &b).map(|s| s.values)
}

/// Effective resistance between the root and the wired sphere of `B(o, R)`.
pub fn effective_resistance<T: Scalar>(net: &Network, radius: usize, tolerances: &Tolerances) -> Result<T> {
    let ball = Arc::new(Ball::<T>::extract(net, radius)?);
    if ball.exhausted() {
        return Err(Error::ExhaustedBall { radius });
    }
    let system = DirichletSystem::killed_at_root_and_sphere(ball.clone(), tolerances)?;
    let voltage = escape_probability(&system)?;
    let current: T = ball.neighbors(ball.root()).map(|(x, c)| c * voltage[x]).sum();
    Ok(current.recip())
}

/// Upper bound on the effective resistance between the root and the
/// sphere of radius `r` from the energy of an explicit unit flow.
///
/// The flow moves mass outward one distance layer at a time, splitting
/// each vertex's mass among its outward neighbors so the next layer is as
/// close to uniform as a few Sinkhorn sweeps make it. Any unit flow's
/// energy dominates the effective resistance, so the result is a certified
/// upper bound. Fails when the ball would exceed `vertex_limit` vertices.
pub fn flow_resistance_bound(net: &Network, r: usize, vertex_limit: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidRadius);
    }
    let root = net.root();
    let mut index: HashMap<VertexId, u32> = HashMap::from([(root, 0)]);
    let mut layers: Vec<Vec<u32>> = vec![vec![0]];
    // Outward edges from each vertex of layers 0..r.
    let mut outward: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut labels = vec![root];
    let mut scratch = Vec::new();
    for k in 0..r {
        let mut next = Vec::new();
        for &v in &layers[k] {
            net.neighbors_into(labels[v as usize], &mut scratch);
            let mut out = Vec::new();
            for &(u, c) in &scratch {
                let id = match index.get(&u) {
                    Some(&id) => id,
                    None => {
                        let id = labels.len() as u32;
                        index.insert(u, id);
                        labels.push(u);
                        next.push(id);
                        id
                    }
                };
                out.push((id, c));
            }
            debug_assert_eq!(outward.len(), v as usize);
            outward.push(out);
        }
        if labels.len() > vertex_limit {
            return Err(Error::VertexBudget { radius: r, limit: vertex_limit });
        }
        if next.is_empty() {
            return Err(Error::ExhaustedBall { radius: r });
        }
        layers.push(next);
    }
    let n = labels.len();
    let mut depth = vec![usize::MAX; n];
    for (k, layer) in layers.iter().enumerate() {
        for &v in layer {
            depth[v as usize] = k;
        }
    }
    // Keep only outward edges that lead to the sphere.
    let mut alive = vec![false; n];
    for &v in &layers[r] {
        alive[v as usize] = true;
    }
    for k in (0..r).rev() {
        for &v in &layers[k] {
            let v = v as usize;
            alive[v] = outward[v].iter().any(|&(u, _)| depth[u as usize] == k + 1 && alive[u as usize]);
        }
    }
    let mut mass = vec![0.0f64; n];
    mass[0] = 1.0;
    let mut energy = 0.0;
    let mut scale = vec![1.0f64; n];
    let mut incoming = vec![0.0f64; n];
    for k in 0..r {
        let sources: Vec<usize> = layers[k].iter().map(|&v| v as usize).filter(|&v| alive[v] && mass[v] > 0.0).collect();
        let targets: Vec<usize> = layers[k + 1].iter().map(|&u| u as usize).filter(|&u| alive[u]).collect();
        let edges = |v: usize| outward[v].iter().filter(|&&(u, _)| depth[u as usize] == k + 1 && alive[u as usize]).copied();
        let total: f64 = sources.iter().map(|&v| mass[v]).sum();
        let target = total / targets.len() as f64;
        let push = |scale: &[f64], incoming: &mut [f64]| {
            for &u in &targets {
                incoming[u] = 0.0;
            }
            for &v in &sources {
                let z: f64 = edges(v).map(|(u, c)| c * scale[u as usize]).sum();
                for (u, c) in edges(v) {
                    incoming[u as usize] += mass[v] * c * scale[u as usize] / z;
                }
            }
        };
        for _ in 0..30 {
            push(&scale, &mut incoming);
            for &u in &targets {
                if incoming[u] > 0.0 {
                    scale[u] *= target / incoming[u];
                }
            }
        }
        for &v in &sources {
            let z: f64 = edges(v).map(|(u, c)| c * scale[u as usize]).sum();
            for (u, c) in edges(v) {
                let theta = mass[v] * c * scale[u as usize] / z;
                energy += theta * theta / c;
            }
        }
        push(&scale, &mut incoming);
        for &u in &targets {
            mass[u] = incoming[u];
        }
    }
    Ok(energy)
}

/// Effective resistances along a radius schedule with a boundedness warning.
#[derive(Clone, Debug)]
pub struct RecurrenceDiagnostic {
    pub radii: Vec<usize>,
    pub resistances: Vec<f64>,
    /// Set when consecutive increments shrink geometrically, the signature
    /// of a bounded (transient) resistance profile.
    pub appears_bounded: bool,
}

pub fn recurrence_diagnostic<T: Scalar>(net: &Network, radii: &[usize], tolerances: &Tolerances) -> Result<RecurrenceDiagnostic> {
    let resistances =
        radii.iter().map(|&r| effective_resistance::<T>(net, r, tolerances).map(|x| x.as_f64())).collect::<Result<Vec<_>>>()?;
    let inc: Vec<f64> = resistances.windows(2).map(|w| w[1] - w[0]).collect();
    let appears_bounded = inc.len() >= 2 && inc.windows(2).all(|w| w[1] <= w[0] / 1.8);
    if appears_bounded {
        log::warn!("effective resistance of {} appears bounded ({:?}); the network may be transient", net.name(), resistances);
    }
    Ok(RecurrenceDiagnostic { radii: radii.to_vec(), resistances, appears_bounded })
}
