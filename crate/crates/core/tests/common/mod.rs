//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use netpot::VertexId;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let w = 2.0 / ((1.0 - x * x) * dp * dp);
                    return (x, w);
                }
            }
        })
        .collect()
}

fn quadrature() -> &'static Vec<(f64, f64)> {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        // Composite rule on [0, π], panels graded toward the origin.
        let base = gauss_legendre(40);
        let mut cuts = vec![0.0];
        let mut t = PI;
        let mut tail = Vec::new();
        while t > 1e-3 {
            tail.push(t);
            t /= 4.0;
        }
        tail.reverse();
        cuts.extend(tail);
        let mut rule = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            for &(x, wt) in &base {
                rule.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
            }
        }
        rule
    })
}

/// Potential kernel of simple random walk on ℤ² (`a(0) = 0`, `a(1,0) = 1`):
/// `a(x,y) = (2/π) ∫₀^π (1 - e^{-|x| s} cos(yθ)) / sinh s dθ`, `cosh s = 2 - cos θ`.
pub fn potential_kernel(x: i64, y: i64) -> f64 {
    let (x, y) = (x.abs().max(y.abs()) as f64, x.abs().min(y.abs()) as f64);
    if x == 0.0 {
        return 0.0;
    }
    let integral: f64 = quadrature()
        .iter()
        .map(|&(t, w)| {
            let s = (2.0 - t.cos()).acosh();
            let num = -(-x * s).exp_m1() * (y * t).cos() + 2.0 * (0.5 * y * t).sin().powi(2);
            w * num / s.sinh()
        })
        .sum();
    2.0 / PI * integral
}

/// The potential of ℤ² with unit conductances: `Δh = 1_o` off nothing but
/// the root, `h = a / 4`.
pub fn grid_potential(v: VertexId) -> f64 {
    match v {
        VertexId::Pair(x, y) => potential_kernel(x, y) / 4.0,
        _ => panic!("not a lattice vertex: {v}"),
    }
}

/// `h₁(x) = max(x, 0)` on ℤ.
pub fn line_half(v: VertexId) -> f64 {
    match v {
        VertexId::Int(x) => x.max(0) as f64,
        _ => panic!("not a line vertex: {v}"),
    }
}

/// Killed Green density of the line on `[-R, R]` killed at `{0, ±R}`.
pub fn line_green(x: i64, y: i64, big_r: i64) -> f64 {
    if x.signum() != y.signum() || x == 0 || y == 0 {
        return 0.0;
    }
    let (a, b) = (x.abs().min(y.abs()), x.abs().max(y.abs()));
    (a * (big_r - b)) as f64 / big_r as f64
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
