//! Conformance suite: the invariant battery scaled to one network.
//!
//! Every group runs on a ball small enough for dense work (at most
//! [`VERIFY_VERTICES`] vertices); the minimax groups use `r ∈ {1, 2, 4, 8}`
//! with `R = 2r` and `4r` whenever `B(o, R)` fits in [`MINIMAX_VERTICES`].

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Tolerances;
use crate::doob::{build_chain, h_green_identities, reversal_bound_check};
use crate::error::{Error, Result};
use crate::green::{path_probability, path_reversal, GreenOperator};
use crate::minimax::minimax;
use crate::network::{Ball, Network};
use crate::potential::PotentialOnBall;
use crate::solver::effective_resistance;

pub const VERIFY_VERTICES: usize = 500;
pub const MINIMAX_VERTICES: usize = 20_000;
const MAX_RADIUS: usize = 10;
const CONDITIONING_RATIO: f64 = 1e-6;
const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst residual seen, in the units of `tolerance`.
    pub measured: f64,
    pub tolerance: f64,
    pub runtime_ms: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConformanceReport {
    pub network: String,
    pub network_hash: String,
    pub radius: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl ConformanceReport {
    /// Fixed-width text table, one line per check.
    pub fn table(&self) -> String {
        let mut out = format!("{:<26} {:<6} {:>12} {:>12} {:>10}\n", "check", "status", "measured", "tolerance", "ms");
        for c in &self.checks {
            out += &format!(
                "{:<26} {:<6} {:>12.3e} {:>12.1e} {:>10.1}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.measured,
                c.tolerance,
                c.runtime_ms
            );
        }
        for w in &self.warnings {
            out += &format!("warning: {w}\n");
        }
        let n = self.checks.iter().filter(|c| c.passed).count();
        out += &format!("{n}/{} check groups passed\n", self.checks.len());
        out
    }
}

struct Outcome {
    measured: f64,
    tolerance: f64,
    detail: String,
}

impl Outcome {
    fn new(measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Outcome { measured, tolerance, detail: detail.into() }
    }
}

fn run(name: &'static str, f: impl FnOnce() -> Result<Outcome>) -> CheckResult {
    let t = Instant::now();
    let outcome = f();
    let runtime_ms = t.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(o) => CheckResult {
            name,
            passed: o.measured <= o.tolerance,
            measured: o.measured,
            tolerance: o.tolerance,
            runtime_ms,
            detail: o.detail,
        },
        Err(e) => CheckResult { name, passed: false, measured: f64::INFINITY, tolerance: 0.0, runtime_ms, detail: format!("error: {e}") },
    }
}

/// Largest radius up to [`MAX_RADIUS`] whose ball fits the dense budget,
/// preferring balls with a non-empty sphere.
fn verify_radius(net: &Network) -> Result<usize> {
    let mut best = None;
    for r in 1..=MAX_RADIUS {
        match Ball::<f64>::extract_bounded(net, r, VERIFY_VERTICES) {
            Ok(b) if b.exhausted() => {
                return Ok(best.unwrap_or(r));
            }
            Ok(_) => best = Some(r),
            Err(Error::VertexBudget { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::VertexBudget { radius: 1, limit: VERIFY_VERTICES })
}

/// Dipole toward the uniform measure on the outermost layer: harmonic off
/// `o` inside that layer, with unit mass at the root.
fn reference_potential(op: &GreenOperator<f64>, tolerances: &Tolerances) -> Result<PotentialOnBall<f64>> {
    let ball = op.ball();
    let layer = (1..=ball.radius()).rev().map(|k| ball.layer(k)).find(|l| !l.is_empty()).ok_or(Error::EmptyStateSpace)?;
    let w = 1.0 / layer.len() as f64;
    let f = op.dipole_mixture(&layer.map(|v| (v, w)).collect::<Vec<_>>())?;
    Ok(PotentialOnBall::new(ball.clone(), f, 1.0, tolerances))
}

fn sample(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut v: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        v.swap(i, j);
    }
    v.truncate(k);
    v.sort_unstable();
    v
}

/// Runs all nine check groups; failures are recorded and the suite goes on.
pub fn verify_suite(net: &Network, tolerances: &Tolerances, seed: u64) -> Result<ConformanceReport> {
    let radius = verify_radius(net)?;
    let op = Arc::new(GreenOperator::<f64>::new(net, radius, tolerances)?);
    let ball = op.ball().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings: Vec<String> = ball
        .conditioning_warnings(CONDITIONING_RATIO)
        .into_iter()
        .map(|v| format!("conductance below {CONDITIONING_RATIO:e} of the local maximum at {v}"))
        .collect();
    let idt = tolerances.identity;
    let interior: Vec<usize> = ball.interior().filter(|&v| v != ball.root()).collect();
    let picks: Vec<usize> = sample(interior.len(), 40, &mut rng).into_iter().map(|k| interior[k]).collect();
    let reference = reference_potential(&op, tolerances);
    if let Ok(h) = &reference {
        if !h.report().valid {
            warnings.push(format!("reference potential: {}", h.report().issues.join("; ")));
        }
    }
    let mut checks = Vec::new();

    checks.push(run("green_symmetry", || {
        let mut worst: f64 = 0.0;
        for &x in &picks {
            for &y in &picks {
                let (a, b) = (op.green_density_at(x, y)?, op.green_density_at(y, x)?);
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        Ok(Outcome::new(worst, idt, format!("{} pairs", picks.len() * picks.len())))
    }));

    checks.push(run("dipole_laplacian", || {
        let mut worst: f64 = 0.0;
        for &y in picks.iter().take(20) {
            let f = op.dipole(y)?;
            for v in ball.interior() {
                let expected = if v == ball.root() {
                    1.0
                } else if v == y {
                    -1.0
                } else {
                    0.0
                };
                worst = worst.max((ball.laplacian_at(&f, v) - expected).abs());
            }
            let negativity = f.iter().fold(0.0f64, |m, &x| m.max(-x));
            worst = worst.max(negativity).max(f[ball.root()].abs());
        }
        Ok(Outcome::new(worst, idt, format!("{} targets", picks.len().min(20))))
    }));

    checks.push(run("h_green_identities", || {
        let h = reference.clone()?;
        let chain = build_chain(&h)?;
        let r = h_green_identities(&op, &chain)?;
        Ok(Outcome::new(
            r.max_pair_discrepancy.max(r.max_initial_discrepancy),
            idt,
            format!("{} states; pairs {:.2e}, initial law {:.2e}", r.states, r.max_pair_discrepancy, r.max_initial_discrepancy),
        ))
    }));

    checks.push(run("stochastic_iff_harmonic", || {
        let h = reference.clone()?;
        let chain = build_chain(&h)?;
        let mut worst: f64 = 0.0;
        for &x in chain.states() {
            // Row sums deviate from one by exactly Δh(x) / (c_x h(x)).
            let predicted = 1.0 + ball.laplacian_at(h.values(), x) / (ball.total_conductance(x) * h.values()[x]);
            worst = worst.max((chain.row_sum(x) - predicted).abs());
            if ball.is_interior(x) {
                worst = worst.max((chain.row_sum(x) - 1.0).abs());
            }
        }
        // A perturbed potential must lose stochasticity where it stops being harmonic.
        let mut bent = h.values().to_vec();
        let x = chain.states()[rng.clone().random_range(0..chain.states().len())];
        bent[x] *= 1.001;
        let bent = PotentialOnBall::new(ball.clone(), bent, 1.0, tolerances);
        let bent_chain = build_chain(&bent)?;
        let moved = (bent_chain.row_sum(x) - 1.0).abs();
        if moved <= idt {
            return Ok(Outcome::new(f64::INFINITY, idt, "perturbed row still stochastic"));
        }
        Ok(Outcome::new(worst, idt, format!("{} rows; perturbed row off by {moved:.2e}", chain.states().len())))
    }));

    checks.push(run("telescoping_paths", || {
        let h = reference.clone()?;
        let chain = build_chain(&h)?;
        let states = chain.states();
        let mut path_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e1e);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let mut path = vec![states[path_rng.random_range(0..states.len())]];
            let len = path_rng.random_range(1..=6);
            while path.len() < len {
                let nbrs: Vec<usize> = ball.neighbors(path[path.len() - 1]).map(|p| p.0).filter(|&y| chain.is_state(y)).collect();
                if nbrs.is_empty() {
                    break;
                }
                path.push(nbrs[path_rng.random_range(0..nbrs.len())]);
            }
            let lhs = chain.path_probability(&path)? * h.values()[path[0]];
            let rhs = path_probability(&ball, &path)? * h.values()[path[path.len() - 1]];
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        }
        Ok(Outcome::new(worst, 1e-12, "200 random paths in S_h"))
    }));

    checks.push(run("path_reversal", || {
        let all: Vec<usize> = (1..ball.len()).collect();
        let chosen = sample(all.len(), 60, &mut rng.clone());
        let mut worst: f64 = 0.0;
        for &k in &chosen {
            let (a, b) = path_reversal(&ball, all[k], tolerances)?;
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
        Ok(Outcome::new(worst, idt, format!("{} vertices", chosen.len())))
    }));

    let radii: Vec<(usize, usize)> = [1usize, 2, 4, 8]
        .iter()
        .flat_map(|&r| [(r, 2 * r), (r, 4 * r)])
        .filter(|&(_, big)| matches!(Ball::<f64>::extract_bounded(net, big, MINIMAX_VERTICES), Ok(b) if !b.exhausted()))
        .collect();
    type Solved = (usize, usize, Result<(f64, f64)>);
    let solved: Vec<Solved> =
        radii.iter().map(|&(r, big)| (r, big, minimax::<f64>(net, r, big, tolerances).map(|m| (m.value, m.gap)))).collect();

    checks.push(run("minimax_duality", || {
        let mut worst: f64 = 0.0;
        let mut detail = Vec::new();
        for (r, big, res) in &solved {
            let (value, gap) = res.clone()?;
            worst = worst.max(gap / value.abs().max(1.0));
            detail.push(format!("M_{big}({r})={value:.10} gap={gap:.1e}"));
        }
        if solved.is_empty() {
            detail.push("no admissible radii".into());
        }
        Ok(Outcome::new(worst, tolerances.lp_gap, detail.join(", ")))
    }));

    checks.push(run("monotonicity", || {
        let mut violation: f64 = 0.0;
        let value = |r: usize, big: usize| solved.iter().find(|s| s.0 == r && s.1 == big).and_then(|s| s.2.as_ref().ok()).map(|s| s.0);
        let mut pairs = 0;
        for &(r, big) in &radii {
            if let (Some(a), Some(b)) = (value(r, big), value(2 * r, 2 * big)) {
                violation = violation.max(a - b);
                pairs += 1;
            }
            if let (Some(a), Some(b)) = (value(r, 2 * r), value(r, 4 * r)) {
                violation = violation.max(b - a);
            }
        }
        let mut last_reff = f64::NEG_INFINITY;
        for r in 1..=radius {
            match effective_resistance::<f64>(net, r, tolerances) {
                Ok(x) => {
                    violation = violation.max(last_reff - x);
                    last_reff = x;
                }
                Err(Error::ExhaustedBall { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        let far: Vec<usize> = picks.iter().copied().filter(|&v| ball.distance(v) <= 2).take(4).collect();
        let mut last: Vec<f64> = vec![f64::NEG_INFINITY; far.len() * far.len()];
        for r in 3..=radius {
            let g = GreenOperator::<f64>::new(net, r, tolerances)?;
            for (i, &x) in far.iter().enumerate() {
                for (j, &y) in far.iter().enumerate() {
                    let gx = g.ball().index_of(&ball.vertex(x)).expect("nested balls");
                    let gy = g.ball().index_of(&ball.vertex(y)).expect("nested balls");
                    let v = g.green_density_at(gx, gy)?;
                    violation = violation.max(last[i * far.len() + j] - v);
                    last[i * far.len() + j] = v;
                }
            }
        }
        Ok(Outcome::new(violation.max(0.0), MONOTONE_SLACK, format!("{pairs} r-steps, R_eff and g over R <= {radius}")))
    }));

    checks.push(run("reversal_inequality", || {
        let h = reference.clone()?;
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut count = 0;
        for d in 2..=ball.radius().min(5) {
            for &v in sample(ball.layer(d).len(), 3, &mut rng.clone()).iter() {
                let v = ball.vertex(ball.layer(d).start + v);
                for ell in 1..d {
                    for m in [0.5, 1.0, 2.0, 4.0, 8.0] {
                        let c = match reversal_bound_check(&op, &h, &v, m, ell, tolerances) {
                            Err(Error::PathSpaceTooLarge { .. }) => continue,
                            other => other?,
                        };
                        worst = worst.max(c.exact - c.bound);
                        count += 1;
                    }
                }
            }
        }
        Ok(Outcome::new(worst.max(0.0), idt, format!("{count} (v, ell, M) instances")))
    }));

    let passed = checks.iter().all(|c| c.passed);
    Ok(ConformanceReport { network: net.name().to_string(), network_hash: net.hash().to_string(), radius, seed, checks, warnings, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, generate, GeneratorSpec, VertexId};

    #[test]
    fn line_passes_everything() {
        let net = generate(GeneratorSpec::line(), None).unwrap();
        let report = verify_suite(&net, &Tolerances::default(), 42).unwrap();
        assert_eq!(report.checks.len(), 9);
        assert!(report.passed, "{}", report.table());
    }

    #[test]
    fn weak_edge_is_reported() {
        let e = |a: i64, b: i64, c: f64| (VertexId::Int(a), VertexId::Int(b), c);
        let edges = [e(0, 1, 1.0), e(1, 2, 1e-9), e(2, 3, 1.0), e(0, 4, 1.0), e(4, 5, 2.0), e(5, 3, 1.0), e(3, 6, 1.0)];
        let net = build_network(&edges, VertexId::Int(0)).unwrap();
        let report = verify_suite(&net, &Tolerances::default(), 1).unwrap();
        assert_eq!(report.checks.len(), 9);
        assert!(report.warnings.iter().any(|w| w.contains("conductance")), "{}", report.table());
    }
}
