//! Potentials on balls: validation, convex combinations, the escape
//! construction `h = Σ w_n ψ_{r_n}` and sublevel-set reports.

use std::sync::Arc;

use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::minimax::{outer_radius, solve_minimax, MinimaxProblem};
use crate::network::{Ball, Network, VertexId};
use crate::scalar::Scalar;
use crate::solver::flow_resistance_bound;

/// Checks of a ball function against the potential axioms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `max(0, -min ψ)`.
    pub max_negativity: f64,
    pub root_value: f64,
    pub root_laplacian: f64,
    /// Expected `Δψ(o)`: 1 for a potential, `Σ w_n` for weighted sums.
    pub mass: f64,
    /// `max |Δψ|` over interior vertices other than the root.
    pub harmonic_residual: f64,
    /// `max |Σ_y p(x, y) ψ(y) - ψ(x)|` over the same vertices.
    pub one_step_residual: f64,
    /// Minimum of `ψ` on each distance layer `0..=R`.
    pub layer_minima: Vec<f64>,
    pub valid: bool,
    pub issues: Vec<String>,
}

/// Validates `values` (indexed by ball vertex) as a potential of total
/// Laplacian mass `mass` at the root.
pub fn validate_potential<T: Scalar>(ball: &Ball<T>, values: &[T], mass: T, tolerances: &Tolerances) -> ValidationReport {
    let root = ball.root();
    let min = values.iter().fold(T::infinity(), |m, &x| m.min(x));
    let max_negativity = (-min).max(T::zero()).as_f64();
    let root_value = values[root].as_f64();
    let root_laplacian = ball.laplacian_at(values, root).as_f64();
    let mut harmonic_residual = 0.0f64;
    let mut one_step_residual = 0.0f64;
    for v in ball.interior().filter(|&v| v != root) {
        let lap = ball.laplacian_at(values, v);
        harmonic_residual = harmonic_residual.max(lap.abs().as_f64());
        one_step_residual = one_step_residual.max((lap / ball.total_conductance(v)).abs().as_f64());
    }
    let layer_minima = (0..=ball.radius()).map(|k| ball.layer(k).map(|i| values[i].as_f64()).fold(f64::INFINITY, f64::min)).collect();
    let mass = mass.as_f64();
    let mut issues = Vec::new();
    if max_negativity > 1e-10 {
        issues.push(format!("negative values down to {:e}", -max_negativity));
    }
    if root_value.abs() > 1e-10 {
        issues.push(format!("root value {root_value:e} is not zero"));
    }
    if (root_laplacian - mass).abs() > tolerances.identity {
        issues.push(format!("Laplacian at the root is {root_laplacian}, expected {mass}"));
    }
    if harmonic_residual > tolerances.identity {
        issues.push(format!("not harmonic off the root (residual {harmonic_residual:e})"));
    }
    ValidationReport {
        max_negativity,
        root_value,
        root_laplacian,
        mass,
        harmonic_residual,
        one_step_residual,
        layer_minima,
        valid: issues.is_empty(),
        issues,
    }
}

/// A function on a ball with its potential validation.
#[derive(Clone, Debug)]
pub struct PotentialOnBall<T> {
    ball: Arc<Ball<T>>,
    values: Vec<T>,
    mass: T,
    report: ValidationReport,
}

impl<T: Scalar> PotentialOnBall<T> {
    pub fn new(ball: Arc<Ball<T>>, values: Vec<T>, mass: T, tolerances: &Tolerances) -> Self {
        assert_eq!(values.len(), ball.len(), "values must cover the ball");
        let report = validate_potential(&ball, &values, mass, tolerances);
        PotentialOnBall { ball, values, mass, report }
    }

    /// Tabulates `f` on the ball.
    pub fn from_fn(ball: Arc<Ball<T>>, mass: T, tolerances: &Tolerances, f: impl FnMut(VertexId) -> T) -> Self {
        let values = ball.tabulate(f);
        Self::new(ball, values, mass, tolerances)
    }

    pub fn ball(&self) -> &Arc<Ball<T>> {
        &self.ball
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn get(&self, v: &VertexId) -> Option<T> {
        self.ball.index_of(v).map(|i| self.values[i])
    }

    /// Values on a smaller ball of the same network.
    pub fn restrict(&self, ball: Arc<Ball<T>>, tolerances: &Tolerances) -> Result<Self> {
        if ball.network_hash() != self.ball.network_hash() || ball.radius() > self.ball.radius() {
            return Err(Error::BallMismatch);
        }
        let values = ball.vertices().iter().map(|v| self.get(v).ok_or(Error::BallMismatch)).collect::<Result<_>>()?;
        Ok(Self::new(ball, values, self.mass, tolerances))
    }
}

/// `Σ w_n ψ_n` on the smallest of the terms' balls. All terms must come from
/// the same network.
pub fn combine<T: Scalar>(terms: &[(T, &PotentialOnBall<T>)], tolerances: &Tolerances) -> Result<PotentialOnBall<T>> {
    let first = terms.first().ok_or_else(|| Error::InvalidSpec("combine needs at least one term".into()))?;
    if terms.iter().any(|t| t.0 < T::zero() || !t.0.is_finite()) {
        return Err(Error::InvalidSpec("combination weights must be nonnegative".into()));
    }
    if terms.iter().any(|t| t.1.ball.network_hash() != first.1.ball.network_hash()) {
        return Err(Error::BallMismatch);
    }
    let ball = terms.iter().map(|t| t.1.ball.clone()).min_by_key(|b| b.radius()).expect("non-empty");
    let mut values = vec![T::zero(); ball.len()];
    let mut mass = T::zero();
    for &(w, psi) in terms {
        if Arc::ptr_eq(&psi.ball, &ball) || psi.ball.radius() == ball.radius() {
            values.iter_mut().zip(&psi.values).for_each(|(h, &x)| *h += w * x);
        } else {
            for (i, v) in ball.vertices().iter().enumerate() {
                values[i] += w * psi.get(v).ok_or(Error::BallMismatch)?;
            }
        }
        mass += w * psi.mass;
    }
    Ok(PotentialOnBall::new(ball, values, mass, tolerances))
}

/// One sublevel set `{h ≤ m}` restricted to the computed window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SublevelRow {
    pub level: f64,
    pub count: usize,
    /// Largest graph distance of a member.
    pub max_distance: usize,
    /// No member lies in the two outermost layers of the window.
    pub window_complete: bool,
}

/// Sublevel report from `(value, distance)` pairs of a window of radius `radius`.
pub fn sublevel_from_values(values: &[(f64, usize)], radius: usize, levels: &[f64]) -> Vec<SublevelRow> {
    levels
        .iter()
        .map(|&m| {
            let members = values.iter().filter(|p| p.0 <= m);
            let (count, max_distance) = members.fold((0, 0), |(c, d), p| (c + 1, d.max(p.1)));
            SublevelRow { level: m, count, max_distance, window_complete: max_distance + 1 < radius }
        })
        .collect()
}

pub fn sublevel_report<T: Scalar>(h: &PotentialOnBall<T>, levels: &[f64]) -> Vec<SublevelRow> {
    let pairs: Vec<(f64, usize)> = h.values.iter().enumerate().map(|(i, x)| (x.as_f64(), h.ball.distance(i))).collect();
    sublevel_from_values(&pairs, h.ball.radius(), levels)
}

/// Entry `n` of an escape schedule: weight `w_n`, radius `r_n`, level `t_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub weight: f64,
    pub radius: usize,
    pub level: f64,
}

/// How the radii of an escape schedule are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum EscapeSchedule {
    /// Radii given; only certification runs.
    Explicit(Vec<ScheduleEntry>),
    /// Smallest radii `r_n ≤ r_max` with `w_n M(r_n) ≥ t_n`. Weights default
    /// to `2^-n`.
    Auto { levels: Vec<f64>, weights: Option<Vec<f64>>, r_max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EscapeOptions {
    /// Outer radius rule `R = ⌈ρ r⌉` for the radius search.
    pub ratio: f64,
    /// Largest ball the construction may build.
    pub vertex_limit: usize,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        EscapeOptions { ratio: 2.0, vertex_limit: 4_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateEntry {
    pub n: usize,
    pub weight: f64,
    pub radius: usize,
    pub level: f64,
    /// `M_W(r_n)` on the window ball.
    pub value: f64,
    pub gap: f64,
    /// `min_{∂B(o, r_n)} w_n ψ_n`.
    pub sphere_min: f64,
    pub passed: bool,
    /// `min h` over `r_n ≤ d < W`.
    pub window_min: f64,
    pub window_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeCertificate {
    pub window_radius: usize,
    pub mass: f64,
    pub entries: Vec<CertificateEntry>,
    pub passed: bool,
    pub window_passed: bool,
    pub tolerances: Tolerances,
}

/// Builds `h = Σ_n w_n ψ_{r_n}` on the window `B(o, ⌈ρ r_N⌉)`.
///
/// Every `ψ_n` is the minimax optimizer for inner radius `r_n` on the window
/// ball, so all terms share one factorization. In auto mode the radii come
/// from a doubling-then-bisection search on `M_{⌈ρr⌉}(r)`, screened by the
/// bound `M_R(r) ≤ R_eff(o ↔ ∂B(o, r))`; when a window solve falls short of
/// the level the radius is pushed outward at the window size.
pub fn escape_construct<T: Scalar>(
    net: &Network,
    schedule: &EscapeSchedule,
    options: &EscapeOptions,
    tolerances: &Tolerances,
) -> Result<(PotentialOnBall<T>, EscapeCertificate)> {
    if !(options.ratio > 1.0) {
        return Err(Error::InvalidSpec(format!("ratio must exceed 1, got {}", options.ratio)));
    }
    let (mut entries, auto) = match schedule {
        EscapeSchedule::Explicit(e) => (e.clone(), None),
        EscapeSchedule::Auto { levels, weights, r_max } => {
            let weights = match weights {
                Some(w) if w.len() == levels.len() => w.clone(),
                Some(_) => return Err(Error::InvalidSchedule),
                None => (1..=levels.len()).map(|n| 0.5f64.powi(n as i32)).collect(),
            };
            let entries = search_radii::<T>(net, levels, &weights, *r_max, options, tolerances)?;
            (entries, Some(*r_max))
        }
    };
    validate_schedule(&entries)?;
    let last = entries.last().expect("validated").radius;
    let window = outer_radius(last, options.ratio).max(last + 1);
    let ball = Arc::new(Ball::<T>::extract_bounded(net, window, options.vertex_limit)?);
    let op = Arc::new(GreenOperator::from_ball(ball.clone(), tolerances)?);

    let mut terms = Vec::with_capacity(entries.len());
    let mut prev = 0;
    for (k, entry) in entries.iter_mut().enumerate() {
        let mut r = entry.radius.max(prev + 1);
        let target = entry.level / entry.weight;
        let mut res = solve_minimax(&MinimaxProblem::new(op.clone(), r)?)?;
        if auto.is_some() && res.value.as_f64() * entry.weight < entry.level - tolerances.identity {
            // The window ball is larger than the search ball, so M may have dropped.
            let found = bisect_radius(r + 1, window - 1, target, |r| {
                solve_minimax(&MinimaxProblem::new(op.clone(), r)?).map(|m| m.value.as_f64())
            })?;
            match found {
                Some(rr) => {
                    r = rr;
                    res = solve_minimax(&MinimaxProblem::new(op.clone(), r)?)?;
                }
                None => {
                    return Err(Error::ScheduleInfeasible {
                        n: k + 1,
                        r_max: window - 1,
                        level: entry.level,
                        achievable: entry.weight * res.value.as_f64(),
                    })
                }
            }
        }
        entry.radius = r;
        prev = r;
        terms.push(res);
    }
    validate_schedule(&entries)?;

    let weighted: Vec<(T, &PotentialOnBall<T>)> = entries.iter().zip(&terms).map(|(e, res)| (T::of(e.weight), &res.psi)).collect();
    let h = combine(&weighted, tolerances)?;
    let tol = tolerances.identity;
    let cert_entries: Vec<CertificateEntry> = entries
        .iter()
        .zip(&terms)
        .enumerate()
        .map(|(k, (e, res))| {
            let sphere_min = ball.layer(e.radius).map(|i| e.weight * res.psi.values()[i].as_f64()).fold(f64::INFINITY, f64::min);
            let window_min =
                (ball.layer(e.radius).start..ball.sphere().start).map(|i| h.values()[i].as_f64()).fold(f64::INFINITY, f64::min);
            CertificateEntry {
                n: k + 1,
                weight: e.weight,
                radius: e.radius,
                level: e.level,
                value: res.value.as_f64(),
                gap: res.gap.as_f64(),
                sphere_min,
                passed: sphere_min >= e.level - tol && res.certified(tolerances),
                window_min,
                window_passed: window_min >= e.level - tol,
            }
        })
        .collect();
    let certificate = EscapeCertificate {
        window_radius: window,
        mass: h.mass().as_f64(),
        passed: cert_entries.iter().all(|e| e.passed),
        window_passed: cert_entries.iter().all(|e| e.window_passed),
        entries: cert_entries,
        tolerances: *tolerances,
    };
    Ok((h, certificate))
}

fn validate_schedule(entries: &[ScheduleEntry]) -> Result<()> {
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    let ok = !entries.is_empty()
        && entries.iter().all(|e| e.weight > 0.0 && e.radius >= 1 && e.level.is_finite())
        && entries.windows(2).all(|w| w[0].radius < w[1].radius && w[0].level < w[1].level)
        && total <= 1.0 + 1e-12;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidSchedule)
    }
}

/// Smallest `r` in `lo..=hi` with `value(r) ≥ target`, assuming `value` is
/// non-decreasing: doubling from `lo`, then bisection.
fn bisect_radius(lo: usize, hi: usize, target: f64, mut value: impl FnMut(usize) -> Result<f64>) -> Result<Option<usize>> {
    if lo > hi {
        return Ok(None);
    }
    let reached = |v: f64| v >= target * (1.0 - 1e-9);
    let mut below = lo - 1;
    let mut r = lo;
    loop {
        if reached(value(r)?) {
            break;
        }
        if r == hi {
            return Ok(None);
        }
        below = r;
        r = (2 * r).min(hi);
    }
    let mut above = r;
    while above - below > 1 {
        let mid = below + (above - below) / 2;
        if reached(value(mid)?) {
            above = mid;
        } else {
            below = mid;
        }
    }
    Ok(Some(above))
}

fn search_radii<T: Scalar>(
    net: &Network,
    levels: &[f64],
    weights: &[f64],
    r_max: usize,
    options: &EscapeOptions,
    tolerances: &Tolerances,
) -> Result<Vec<ScheduleEntry>> {
    if levels.is_empty() || r_max == 0 {
        return Err(Error::InvalidSchedule);
    }
    let limit = options.vertex_limit;
    let bound = |r: usize| match flow_resistance_bound(net, r, limit) {
        Ok(b) => Ok(Some(b)),
        Err(Error::VertexBudget { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let ceiling = bound(r_max)?;
    let mut entries = Vec::with_capacity(levels.len());
    let mut prev = 0;
    for (k, (&level, &weight)) in levels.iter().zip(weights).enumerate() {
        let n = k + 1;
        let target = level / weight;
        if let Some(ub) = ceiling {
            if ub < target * (1.0 - 1e-9) {
                return Err(Error::ScheduleInfeasible { n, r_max, level, achievable: weight * ub });
            }
        }
        let found = bisect_radius(prev + 1, r_max, target, |r| {
            if let Some(ub) = bound(r)? {
                if ub < target * (1.0 - 1e-9) {
                    return Ok(ub);
                }
            }
            let big_r = outer_radius(r, options.ratio).max(r + 1);
            let ball = Arc::new(Ball::<T>::extract_bounded(net, big_r, limit)?);
            let op = Arc::new(GreenOperator::from_ball(ball, tolerances)?);
            let res = solve_minimax(&MinimaxProblem::new(op, r)?)?;
            Ok(res.value.as_f64())
        })?;
        let Some(r) = found else {
            let big_r = outer_radius(r_max, options.ratio).max(r_max + 1);
            let achievable = match minimax_value::<T>(net, r_max, big_r, limit, tolerances) {
                Ok(v) => weight * v,
                Err(_) => weight * ceiling.unwrap_or(f64::NAN),
            };
            return Err(Error::ScheduleInfeasible { n, r_max, level, achievable });
        };
        entries.push(ScheduleEntry { weight, radius: r, level });
        prev = r;
    }
    Ok(entries)
}

fn minimax_value<T: Scalar>(net: &Network, r: usize, big_r: usize, limit: usize, tolerances: &Tolerances) -> Result<f64> {
    let ball = Arc::new(Ball::<T>::extract_bounded(net, big_r, limit)?);
    let op = Arc::new(GreenOperator::from_ball(ball, tolerances)?);
    Ok(solve_minimax(&MinimaxProblem::new(op, r)?)?.value.as_f64())
}
