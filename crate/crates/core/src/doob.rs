//! Doob h-transforms of the walk on a ball and the path statistics built on
//! them.
//!
//! The chain lives on the reflecting ball: sphere vertices keep their
//! interior edges, and since a potential is in general not harmonic there,
//! sphere rows of `p^h` may sum to less than one. The missing mass is the
//! chance of leaving the computed window and is treated as killing.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::green::{for_each_rooted_path, GreenOperator};
use crate::network::{Ball, VertexId};
use crate::potential::PotentialOnBall;
use crate::scalar::Scalar;
use crate::solver::dense::DenseLu;

/// Largest state space for which `G^h` is formed densely.
pub const DENSE_CAP: usize = 4096;

/// Name of the Monte-Carlo stream scheme, recorded with every estimate.
pub const RNG_SCHEME: &str = "chacha8-seed_from_u64-stream_per_sample-v1";

/// Two-sided 99% normal quantile used for binomial intervals.
const Z99: f64 = 2.5758293035489004;

/// `p^h(x, y) = p(x, y) h(y) / h(x)` on `S_h = {h > 0}` within a ball.
#[derive(Clone, Debug)]
pub struct HTransformChain<T> {
    ball: Arc<Ball<T>>,
    h: Vec<T>,
    states: Vec<usize>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<T>,
    initial: Vec<(usize, T)>,
}

/// Row sum of `p^h` next to the Laplacian of `h` at the same vertex.
#[derive(Clone, Debug, Serialize)]
pub struct RowDiagnostic {
    pub vertex: String,
    pub row_sum: f64,
    pub laplacian: f64,
    pub on_sphere: bool,
}

/// Builds the h-transform of the walk on the ball of `h`.
pub fn build_chain<T: Scalar>(h: &PotentialOnBall<T>) -> Result<HTransformChain<T>> {
    let ball = h.ball().clone();
    let values = h.values().to_vec();
    let root = ball.root();
    let is_state = |v: usize| v != root && values[v] > T::zero();
    let initial: Vec<(usize, T)> = ball.neighbors(root).filter(|&(v, _)| is_state(v)).map(|(v, c)| (v, c * values[v])).collect();
    if initial.is_empty() {
        return Err(Error::EmptyStateSpace);
    }
    let mut offsets = Vec::with_capacity(ball.len() + 1);
    let (mut targets, mut probs) = (Vec::new(), Vec::new());
    let mut states = Vec::new();
    offsets.push(0);
    for x in 0..ball.len() {
        if is_state(x) {
            states.push(x);
            let cx = ball.total_conductance(x);
            for (y, c) in ball.neighbors(x) {
                if is_state(y) {
                    targets.push(y);
                    probs.push(c / cx * values[y] / values[x]);
                }
            }
        }
        offsets.push(targets.len());
    }
    Ok(HTransformChain { ball, h: values, states, offsets, targets, probs, initial })
}

impl<T: Scalar> HTransformChain<T> {
    pub fn ball(&self) -> &Arc<Ball<T>> {
        &self.ball
    }

    pub fn h(&self) -> &[T] {
        &self.h
    }

    /// Ball indices of `S_h`, in ball order.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn is_state(&self, v: usize) -> bool {
        v < self.h.len() && v != self.ball.root() && self.h[v] > T::zero()
    }

    /// Outgoing transitions of `x` as `(ball index, probability)`.
    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.offsets[x]..self.offsets[x + 1];
        self.targets[span.clone()].iter().copied().zip(self.probs[span].iter().copied())
    }

    pub fn transition(&self, x: usize, y: usize) -> T {
        self.row(x).find(|&(t, _)| t == y).map_or(T::zero(), |(_, p)| p)
    }

    pub fn row_sum(&self, x: usize) -> T {
        self.row(x).map(|(_, p)| p).sum()
    }

    /// `μ_h(v) = c_ov h(v)` over neighbors of the root in `S_h`.
    pub fn initial_law(&self) -> &[(usize, T)] {
        &self.initial
    }

    /// `μ_h` total mass, equal to `Δh(o)`.
    pub fn initial_mass(&self) -> T {
        self.initial.iter().map(|p| p.1).sum()
    }

    pub fn row_diagnostics(&self) -> Vec<RowDiagnostic> {
        self.states
            .iter()
            .map(|&x| RowDiagnostic {
                vertex: self.ball.vertex(x).to_string(),
                row_sum: self.row_sum(x).as_f64(),
                laplacian: self.ball.laplacian_at(&self.h, x).as_f64(),
                on_sphere: !self.ball.is_interior(x),
            })
            .collect()
    }

    /// `P^h_{γ₁}(γ)`, zero once the path leaves `S_h`.
    pub fn path_probability(&self, gamma: &[usize]) -> Result<T> {
        let first = *gamma.first().ok_or_else(|| Error::InvalidPath("empty path".into()))?;
        if !self.is_state(first) {
            return Ok(T::zero());
        }
        let mut p = T::one();
        for w in gamma.windows(2) {
            if self.ball.conductance(w[0], w[1]) == T::zero() {
                return Err(Error::InvalidPath(format!("{} and {} are not adjacent", self.ball.vertex(w[0]), self.ball.vertex(w[1]))));
            }
            p *= self.transition(w[0], w[1]);
        }
        Ok(p)
    }

    fn state(&self, v: usize) -> Result<usize> {
        if !self.is_state(v) {
            return Err(Error::NotAState(self.ball.vertex(v).to_string()));
        }
        Ok(v)
    }
}

/// Dense Green function of the transformed chain, `(I - P^h)⁻¹` on `S_h`.
#[derive(Clone, Debug)]
pub struct HGreen<T> {
    chain: HTransformChain<T>,
    slot: Vec<usize>,
    lu: DenseLu<T>,
}

impl<T: Scalar> HGreen<T> {
    pub fn new(chain: &HTransformChain<T>) -> Result<Self> {
        let n = chain.states.len();
        if n > DENSE_CAP {
            return Err(Error::SystemTooLarge { size: n, cap: DENSE_CAP });
        }
        let mut slot = vec![usize::MAX; chain.h.len()];
        for (k, &v) in chain.states.iter().enumerate() {
            slot[v] = k;
        }
        let mut a = vec![T::zero(); n * n];
        for (i, &x) in chain.states.iter().enumerate() {
            a[i * n + i] = T::one();
            for (y, p) in chain.row(x) {
                a[i * n + slot[y]] -= p;
            }
        }
        Ok(HGreen { chain: chain.clone(), slot, lu: DenseLu::factor(n, a)? })
    }

    pub fn chain(&self) -> &HTransformChain<T> {
        &self.chain
    }

    /// `G^h(·, y)` indexed like `chain.states()`.
    pub fn column(&self, y: usize) -> Result<Vec<T>> {
        let y = self.chain.state(y)?;
        let mut e = vec![T::zero(); self.chain.states.len()];
        e[self.slot[y]] = T::one();
        Ok(self.lu.solve(&e))
    }

    pub fn get(&self, x: usize, y: usize) -> Result<T> {
        let x = self.chain.state(x)?;
        Ok(self.column(y)?[self.slot[x]])
    }

    /// `G^h(μ_h, ·)` indexed like `chain.states()`.
    pub fn from_initial(&self) -> Vec<T> {
        let mut mu = vec![T::zero(); self.chain.states.len()];
        for &(v, m) in &self.chain.initial {
            mu[self.slot[v]] += m;
        }
        self.lu.solve_transpose(&mu)
    }
}

/// Both sides of `G^h(x,y) = G_o(x,y) h(y)/h(x)` and
/// `G^h(μ_h, y) = h(y) c_y` at one pair.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HGreenValue {
    pub value: f64,
    pub predicted: f64,
    pub from_initial: f64,
    pub predicted_from_initial: f64,
    /// Largest of the two relative discrepancies `|a - b| / max(1, |b|)`.
    pub discrepancy: f64,
}

/// Identity discrepancies over every pair of states.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HGreenIdentities {
    pub states: usize,
    pub max_pair_discrepancy: f64,
    pub max_initial_discrepancy: f64,
    pub passed: bool,
}

/// `|a - b| / max(1, |b|)`.
fn relative<T: Scalar>(a: T, b: T) -> f64 {
    ((a - b).abs() / b.abs().max(T::one())).as_f64()
}

fn same_ball<T: Scalar>(chain: &HTransformChain<T>, op: &GreenOperator<T>) -> Result<()> {
    if chain.ball.hash() != op.ball().hash() {
        return Err(Error::BallMismatch);
    }
    Ok(())
}

/// `G^h(x, y)` from the transformed chain next to the reflecting-ball Green
/// kernel `G_o` of the untransformed walk, each computed on its own.
pub fn h_green_exact<T: Scalar>(op: &GreenOperator<T>, chain: &HTransformChain<T>, x: usize, y: usize) -> Result<HGreenValue> {
    same_ball(chain, op)?;
    chain.state(x)?;
    chain.state(y)?;
    let hg = HGreen::new(chain)?;
    let ball = op.ball();
    let h = &chain.h;
    let g_o = op.reflecting_column(y)?[x] * ball.total_conductance(y);
    let value = hg.get(x, y)?;
    let predicted = g_o * h[y] / h[x];
    let from_initial = hg.from_initial()[hg.slot[y]];
    let predicted_from_initial = h[y] * ball.total_conductance(y);
    let discrepancy = relative(value, predicted).max(relative(from_initial, predicted_from_initial));
    Ok(HGreenValue {
        value: value.as_f64(),
        predicted: predicted.as_f64(),
        from_initial: from_initial.as_f64(),
        predicted_from_initial: predicted_from_initial.as_f64(),
        discrepancy,
    })
}

/// Checks both Green identities at every pair of states.
pub fn h_green_identities<T: Scalar>(op: &GreenOperator<T>, chain: &HTransformChain<T>) -> Result<HGreenIdentities> {
    same_ball(chain, op)?;
    let hg = HGreen::new(chain)?;
    let ball = op.ball();
    let h = &chain.h;
    let states = &chain.states;
    let pair = states
        .par_iter()
        .map(|&y| {
            let gh = hg.column(y)?;
            let go = op.reflecting_column(y)?;
            let cy = ball.total_conductance(y);
            Ok(states.iter().enumerate().map(|(k, &x)| relative(gh[k], go[x] * cy * h[y] / h[x])).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let initial = hg.from_initial().iter().zip(states).map(|(&g, &y)| relative(g, h[y] * ball.total_conductance(y))).fold(0.0, f64::max);
    let tol = op.tolerances().identity;
    Ok(HGreenIdentities {
        states: states.len(),
        max_pair_discrepancy: pair,
        max_initial_discrepancy: initial,
        passed: pair <= tol && initial <= tol,
    })
}

/// Where the h-process starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Start {
    Vertex(usize),
    Initial,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EscapeMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Monte-Carlo estimate with a 99% Wilson interval.
#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub samples: usize,
    pub seed: u64,
    pub scheme: &'static str,
    pub hits: usize,
    /// Samples that left the ball through a substochastic sphere row.
    pub killed: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `P^h(h(Y_ℓ) > M)` from one start.
#[derive(Clone, Debug, Serialize)]
pub struct EscapeStatistic {
    pub ell: usize,
    pub level: f64,
    pub start: String,
    pub exact: Option<f64>,
    /// `P_v(τ_o ≥ ℓ)` for the untransformed walk, averaged over `μ_h` when
    /// starting from the initial law.
    pub survival: Option<f64>,
    /// `(M / h(v)) P_v(τ_o ≥ ℓ)`, an upper bound on `P^h_v(h(Y_ℓ) ≤ M)`.
    pub complement_bound: Option<f64>,
    pub mc: Option<McEstimate>,
}

/// `P^h(h(Y_ℓ) > M)`, exactly by vector iteration or by sampling.
///
/// Exact mode needs the `ℓ`-step support to stay inside the ball interior,
/// `d(o, start) + ℓ < R`, so the iteration never touches the sphere.
pub fn escape_statistic<T: Scalar>(
    chain: &HTransformChain<T>,
    start: Start,
    ell: usize,
    level: f64,
    mode: EscapeMode,
) -> Result<EscapeStatistic> {
    let starts: Vec<(usize, f64)> = match start {
        Start::Vertex(v) => vec![(chain.state(v)?, 1.0)],
        Start::Initial => {
            let mass = chain.initial_mass().as_f64();
            chain.initial.iter().map(|&(v, m)| (v, m.as_f64() / mass)).collect()
        }
    };
    let label = match start {
        Start::Vertex(v) => chain.ball.vertex(v).to_string(),
        Start::Initial => "mu_h".to_string(),
    };
    let mut stat = EscapeStatistic { ell, level, start: label, exact: None, survival: None, complement_bound: None, mc: None };
    match mode {
        EscapeMode::Exact => {
            let ball = &chain.ball;
            let depth = starts.iter().map(|&(v, _)| ball.distance(v)).max().unwrap_or(0);
            if depth + ell >= ball.radius() {
                return Err(Error::BallTooSmall(ell, depth, ball.radius()));
            }
            let h: Vec<f64> = chain.h.iter().map(|x| x.as_f64()).collect();
            let mut dist = vec![0.0; ball.len()];
            for &(v, w) in &starts {
                dist[v] += w;
            }
            let dist = iterate(ball, depth, ell, dist, |x, f| chain.row(x).for_each(|(y, p)| f(y, p.as_f64())));
            stat.exact = Some(dist.iter().zip(&h).filter(|(_, &hy)| hy > level).map(|(p, _)| p).sum());
            let (mut survival, mut bound) = (0.0, 0.0);
            for &(v, w) in &starts {
                let s = survival_probability(ball, v, ell);
                survival += w * s;
                bound += w * level / h[v] * s;
            }
            stat.survival = Some(survival);
            stat.complement_bound = Some(bound);
        }
        EscapeMode::MonteCarlo { samples, seed } => {
            stat.mc = Some(sample(chain, &starts, ell, level, samples, seed));
        }
    }
    Ok(stat)
}

/// `ell` steps of a distribution supported within distance `depth`; step
/// `k` only touches the ball prefix at distance `<= depth + k`.
fn iterate<T: Scalar>(
    ball: &Ball<T>,
    depth: usize,
    ell: usize,
    mut dist: Vec<f64>,
    row: impl Fn(usize, &mut dyn FnMut(usize, f64)),
) -> Vec<f64> {
    let mut next = vec![0.0; dist.len()];
    for k in 0..ell {
        let end = ball.layer(depth + k).end;
        let reach = ball.layer(depth + k + 1).end;
        next[..reach].iter_mut().for_each(|x| *x = 0.0);
        for x in 0..end {
            let m = dist[x];
            if m != 0.0 {
                row(x, &mut |y, p| next[y] += m * p);
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    dist
}

/// `P_v(τ_o ≥ ℓ)`: the walk from `v` avoids the root at times `1..ℓ-1`.
fn survival_probability<T: Scalar>(ball: &Ball<T>, v: usize, ell: usize) -> f64 {
    let root = ball.root();
    let mut dist = vec![0.0; ball.len()];
    dist[v] = 1.0;
    let steps = ell.saturating_sub(1);
    let dist = iterate(ball, ball.distance(v), steps, dist, |x, f| {
        for (y, c) in ball.neighbors(x) {
            if y != root {
                f(y, (c / ball.total_conductance(x)).as_f64());
            }
        }
    });
    dist.iter().sum()
}

fn sample<T: Scalar>(chain: &HTransformChain<T>, starts: &[(usize, f64)], ell: usize, level: f64, samples: usize, seed: u64) -> McEstimate {
    let cumulative: Vec<f64> = (0..chain.h.len())
        .flat_map(|x| {
            let mut acc = 0.0;
            chain.row(x).map(move |(_, p)| {
                acc += p.as_f64();
                acc
            })
        })
        .collect();
    let h: Vec<f64> = chain.h.iter().map(|x| x.as_f64()).collect();
    let run = |i: usize| -> (usize, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut x = if starts.len() == 1 {
            starts[0].0
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            starts
                .iter()
                .find(|s| {
                    acc += s.1;
                    u < acc
                })
                .unwrap_or(&starts[starts.len() - 1])
                .0
        };
        for _ in 0..ell {
            let span = chain.offsets[x]..chain.offsets[x + 1];
            let u: f64 = rng.random();
            match cumulative[span.clone()].iter().position(|&c| u < c) {
                Some(k) => x = chain.targets[span.start + k],
                None => return (0, 1),
            }
        }
        (usize::from(h[x] > level), 0)
    };
    let (hits, killed) = (0..samples).into_par_iter().map(run).reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples.max(1) as f64;
    let p = hits as f64 / n;
    let (ci_low, ci_high) = wilson(p, n, Z99);
    McEstimate { samples, seed, scheme: RNG_SCHEME, hits, killed, estimate: p, std_error: (p * (1.0 - p) / n).sqrt(), ci_low, ci_high }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(p: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Target of a conditioned walk: a vertex, or a probability measure on
/// vertices as `(ball index, weight)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Target<T> {
    Vertex(usize),
    Measure(Vec<(usize, T)>),
}

impl<T: Scalar> Target<T> {
    fn measure(&self) -> Vec<(usize, T)> {
        match self {
            Target::Vertex(v) => vec![(*v, T::one())],
            Target::Measure(m) => m.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TvRow {
    pub target: String,
    /// Smallest root distance in the target's support.
    pub distance: usize,
    pub tv: f64,
    /// Total mass of each law over length-`ℓ` paths.
    pub conditioned_mass: f64,
    pub h_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TvReport {
    pub ell: usize,
    pub rows: Vec<TvRow>,
    /// TV non-increasing along the targets in the given order.
    pub monotone: bool,
}

/// Values of `h` on the first `depth` layers of `ball`.
fn values_near<T: Scalar>(ball: &Ball<T>, h: &PotentialOnBall<T>, depth: usize) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); ball.len()];
    for i in 0..ball.layer(depth).end {
        let v = ball.vertex(i);
        out[i] = h.get(&v).ok_or_else(|| Error::VertexOutsideBall(v.to_string()))?;
    }
    Ok(out)
}

/// Total variation between the first `ℓ` steps of the walk from `o`
/// conditioned to reach each target before returning, and the h-process
/// started from `μ_h`. Both laws are exact path sums:
/// `c_o P_o(oγ) g_o(γ_ℓ, η)` and `c_o P_o(oγ) h(γ_ℓ)` (zero if `γ` leaves `S_h`).
pub fn conditioned_vs_hprocess<T: Scalar>(
    op: &GreenOperator<T>,
    h: &PotentialOnBall<T>,
    ell: usize,
    targets: &[Target<T>],
) -> Result<TvReport> {
    let ball = op.ball();
    let hv = values_near(ball, h, ell)?;
    let mut rows = Vec::with_capacity(targets.len());
    for t in targets {
        let measure = t.measure();
        let distance = measure.iter().map(|&(v, _)| ball.distance(v)).min().unwrap_or(0);
        if ell == 0 || ell >= distance {
            return Err(Error::EllTooLarge { ell, distance });
        }
        let f = op.dipole_mixture(&measure)?;
        let c_o = ball.total_conductance(ball.root());
        let (mut tv, mut cm, mut hm) = (T::zero(), T::zero(), T::zero());
        for_each_rooted_path(ball, ell, None, |path, p| {
            let last = path[path.len() - 1];
            let hw = if path.iter().all(|&x| hv[x] > T::zero()) { hv[last] } else { T::zero() };
            let (a, b) = (c_o * p * f[last], c_o * p * hw);
            tv += (a - b).abs();
            cm += a;
            hm += b;
        })?;
        let target = match t {
            Target::Vertex(v) => ball.vertex(*v).to_string(),
            Target::Measure(m) => format!("measure[{}]", m.len()),
        };
        rows.push(TvRow { target, distance, tv: (tv / T::of(2.0)).as_f64(), conditioned_mass: cm.as_f64(), h_mass: hm.as_f64() });
    }
    let monotone = rows.windows(2).all(|w| w[1].tv <= w[0].tv + 1e-12);
    Ok(TvReport { ell, rows, monotone })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReversalCheck {
    /// `P_o(h(X_ℓ) ≥ M | τ_v < τ_o⁺)`.
    pub exact: f64,
    /// `h(v) / M`.
    pub bound: f64,
    pub passed: bool,
}

/// Exact `P_o(h(X_ℓ) ≥ M | τ_v < τ_o⁺)` against `h(v)/M`, for `0 < ℓ < d(o, v)`.
pub fn reversal_bound_check<T: Scalar>(
    op: &GreenOperator<T>,
    h: &PotentialOnBall<T>,
    v: &VertexId,
    level: f64,
    ell: usize,
    tolerances: &Tolerances,
) -> Result<ReversalCheck> {
    let ball = op.ball();
    let vi = ball.locate(v)?;
    let distance = ball.distance(vi);
    if ell == 0 || ell >= distance {
        return Err(Error::EllTooLarge { ell, distance });
    }
    let hv = values_near(ball, h, distance)?;
    let level_t = T::of(level);
    let mut exact = T::zero();
    op.for_each_conditioned_path(ell, vi, |path, p| {
        if hv[path[path.len() - 1]] >= level_t {
            exact += p;
        }
    })?;
    let exact = exact.as_f64();
    let bound = hv[vi].as_f64() / level;
    Ok(ReversalCheck { exact, bound, passed: exact <= bound + tolerances.identity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate, GeneratorSpec};

    fn line_h(radius: usize) -> PotentialOnBall<f64> {
        let net = generate(GeneratorSpec::line(), None).unwrap();
        let ball = Arc::new(Ball::extract(&net, radius).unwrap());
        PotentialOnBall::from_fn(ball, 1.0, &Tolerances::default(), |v| match v {
            VertexId::Int(x) => x.max(0) as f64,
            _ => unreachable!(),
        })
    }

    fn idx(ball: &Ball<f64>, x: i64) -> usize {
        ball.locate(&VertexId::Int(x)).unwrap()
    }

    #[test]
    fn line_transitions() {
        let h = line_h(8);
        let chain = build_chain(&h).unwrap();
        let b = chain.ball().clone();
        assert_eq!(chain.transition(idx(&b, 1), idx(&b, 2)), 1.0);
        assert_eq!(chain.transition(idx(&b, 1), idx(&b, 0)), 0.0);
        for x in 2..7 {
            let up = chain.transition(idx(&b, x), idx(&b, x + 1));
            assert!((up - (x + 1) as f64 / (2 * x) as f64).abs() < 1e-15);
        }
        assert_eq!(chain.initial_law(), &[(idx(&b, 1), 1.0)]);
        assert_eq!(chain.states().len(), 8);
    }

    #[test]
    fn line_green_identities() {
        let h = line_h(8);
        let chain = build_chain(&h).unwrap();
        let op = GreenOperator::from_ball(h.ball().clone(), &Tolerances::default()).unwrap();
        let b = op.ball().clone();
        let v = h_green_exact(&op, &chain, idx(&b, 2), idx(&b, 3)).unwrap();
        assert!(v.discrepancy < 1e-9, "{v:?}");
        assert!((v.from_initial - 6.0).abs() < 1e-9);
        let all = h_green_identities(&op, &chain).unwrap();
        assert!(all.passed, "{all:?}");
        assert!(matches!(h_green_exact(&op, &chain, idx(&b, 2), idx(&b, -3)), Err(Error::NotAState(_))));
    }

    #[test]
    fn two_step_escape() {
        let h = line_h(8);
        let chain = build_chain(&h).unwrap();
        let b = chain.ball().clone();
        let s = escape_statistic(&chain, Start::Vertex(idx(&b, 1)), 2, 2.0, EscapeMode::Exact).unwrap();
        assert!((s.exact.unwrap() - 0.75).abs() < 1e-15);
        let s = escape_statistic(&chain, Start::Initial, 2, 2.0, EscapeMode::Exact).unwrap();
        assert!((s.exact.unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(
            escape_statistic(&chain, Start::Vertex(idx(&b, 1)), 7, 2.0, EscapeMode::Exact),
            Err(Error::BallTooSmall(7, 1, 8))
        ));
    }

    #[test]
    fn complement_bound_holds() {
        let h = line_h(40);
        let chain = build_chain(&h).unwrap();
        let b = chain.ball().clone();
        for ell in [1, 5, 20, 35] {
            let s = escape_statistic(&chain, Start::Vertex(idx(&b, 3)), ell, 4.0, EscapeMode::Exact).unwrap();
            assert!(1.0 - s.exact.unwrap() <= s.complement_bound.unwrap() + 1e-12, "{s:?}");
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_close() {
        let h = line_h(60);
        let chain = build_chain(&h).unwrap();
        let b = chain.ball().clone();
        let start = Start::Vertex(idx(&b, 1));
        let exact = escape_statistic(&chain, start, 30, 5.0, EscapeMode::Exact).unwrap().exact.unwrap();
        let mode = EscapeMode::MonteCarlo { samples: 20_000, seed: 7 };
        let a = escape_statistic(&chain, start, 30, 5.0, mode).unwrap().mc.unwrap();
        let again = escape_statistic(&chain, start, 30, 5.0, mode).unwrap().mc.unwrap();
        assert_eq!(a.hits, again.hits);
        assert!(a.ci_low <= exact && exact <= a.ci_high, "{a:?} vs {exact}");
    }

    #[test]
    fn wilson_interval_is_inside_unit() {
        let (lo, hi) = wilson(0.0, 10.0, Z99);
        assert!(lo.abs() < 1e-15);
        assert!(hi > 0.0 && hi < 1.0);
        let (lo, hi) = wilson(0.5, 1e6, Z99);
        assert!((hi - lo - 2.0 * Z99 * 0.5 / 1e3).abs() < 1e-6);
    }

    #[test]
    fn tv_vanishes_on_the_line() {
        let h = line_h(12);
        let op = GreenOperator::from_ball(h.ball().clone(), &Tolerances::default()).unwrap();
        let b = op.ball().clone();
        let report = conditioned_vs_hprocess(&op, &h, 3, &[Target::Vertex(idx(&b, 6))]).unwrap();
        assert!(report.rows[0].tv < 1e-12);
        assert!((report.rows[0].conditioned_mass - 1.0).abs() < 1e-12);
        let one = conditioned_vs_hprocess(&op, &h, 1, &[Target::Vertex(idx(&b, 2)), Target::Vertex(idx(&b, 5))]).unwrap();
        assert!(one.rows.iter().all(|r| r.tv < 1e-12));
        assert!(matches!(
            conditioned_vs_hprocess(&op, &h, 6, &[Target::Vertex(idx(&b, 6))]),
            Err(Error::EllTooLarge { ell: 6, distance: 6 })
        ));
    }

    #[test]
    fn reversal_instances() {
        let h = line_h(12);
        let tol = Tolerances::default();
        let op = GreenOperator::from_ball(h.ball().clone(), &tol).unwrap();
        let c = reversal_bound_check(&op, &h, &VertexId::Int(6), 2.0, 5, &tol).unwrap();
        assert!((c.exact - 14.0 / 16.0).abs() < 1e-15);
        assert_eq!(c.bound, 3.0);
        assert!(c.passed);
        let c = reversal_bound_check(&op, &h, &VertexId::Int(6), 8.0, 5, &tol).unwrap();
        assert_eq!(c.exact, 0.0);
        assert!(matches!(reversal_bound_check(&op, &h, &VertexId::Int(6), 2.0, 6, &tol), Err(Error::EllTooLarge { .. })));
    }

    #[test]
    fn empty_state_space() {
        let net = generate(GeneratorSpec::line(), None).unwrap();
        let ball = Arc::new(Ball::extract(&net, 3).unwrap());
        let zero = PotentialOnBall::from_fn(ball, 0.0, &Tolerances::default(), |_| 0.0);
        assert!(matches!(build_chain(&zero), Err(Error::EmptyStateSpace)));
    }
}
