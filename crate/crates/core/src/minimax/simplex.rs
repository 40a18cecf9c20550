//! Revised simplex for the value of a nonnegative matrix game.
//!
//! For a payoff `Ψ ≥ 0` (`m` rows, `n` columns) with positive value `V`,
//! `x = η / V` solves `max 1ᵀx` subject to `Ψᵀx ≤ 1`, `x ≥ 0`, and the
//! optimal duals are `β / V`. The slack basis is feasible with right-hand
//! side 1, so phase one is not needed. Pricing is Dantzig's largest reduced
//! cost; after a run of degenerate pivots the solver switches to Bland's
//! smallest-index rule until the objective moves again, which rules out
//! cycling while keeping the pivot sequence deterministic.
//!
//! Large games are solved by a double oracle: the simplex runs on a
//! restricted subgame, and best responses from the full matrix are added
//! until both certificates agree. Rows and columns that coincide up to
//! rounding are merged first. Pivots run in double-double arithmetic.

use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Working precision of the pivots. Harmonic measure columns are smooth, so
/// optimal bases of large games are badly conditioned and `f64` reduced
/// costs drown in rounding noise long before the gap closes.
type D = TwoFloat;

const REFACTOR_EVERY: usize = 256;
const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-22;
const DEGENERATE_RUN: usize = 20;
/// Cap on strategies added per side in each double-oracle round.
const BATCH: usize = 64;
const TIE: f64 = 1e-12;

/// Optimal mixed strategies of the game `Ψ` (rows minimize, columns maximize).
#[derive(Clone, Debug)]
pub struct GameSolution<T> {
    /// Column strategy, nonnegative and summing to one.
    pub beta: Vec<T>,
    /// Row strategy, nonnegative and summing to one.
    pub eta: Vec<T>,
    /// `min_v (Ψβ)_v`, a certified lower bound on the game value.
    pub primal: T,
    /// `max_w (Ψᵀη)_w`, a certified upper bound on the game value.
    pub dual: T,
    pub iterations: usize,
    /// A nonbasic variable has zero reduced cost at the optimum, so the
    /// optimal vertex may not be unique.
    pub degenerate: bool,
}

fn zero() -> D {
    D::from(0.0)
}

fn one() -> D {
    D::from(1.0)
}

/// Simplex state for `max 1ᵀx`, `Ψᵀx + s = 1`. Variables are `x (0..m)`
/// then `s (m..m+n)`; there is one constraint row per column of `Ψ`.
struct Tableau {
    psi: Vec<D>,
    m: usize,
    n: usize,
    basis: Vec<usize>,
    inv: Vec<D>,
    x: Vec<D>,
}

impl Tableau {
    fn column(&self, j: usize) -> Vec<D> {
        let n = self.n;
        if j < self.m {
            self.psi[j * n..(j + 1) * n].to_vec()
        } else {
            let mut a = vec![zero(); n];
            a[j - self.m] = one();
            a
        }
    }

    /// `yᵀ = c_Bᵀ B⁻¹`.
    fn duals(&self) -> Vec<D> {
        let n = self.n;
        let mut y = vec![zero(); n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.m {
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj += self.inv[i * n + j];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, y: &[D], j: usize) -> D {
        let n = self.n;
        if j < self.m {
            one() - dot(&self.psi[j * n..(j + 1) * n], y)
        } else {
            -y[j - self.m]
        }
    }

    fn times_inv(&self, a: &[D]) -> Vec<D> {
        let n = self.n;
        (0..n).map(|i| dot(&self.inv[i * n..(i + 1) * n], a)).collect()
    }

    fn pivot(&mut self, row: usize, u: &[D], entering: usize) {
        let n = self.n;
        let p = recip(u[row]);
        for j in 0..n {
            self.inv[row * n + j] *= p;
        }
        self.x[row] *= p;
        let (pivot_row, xr) = (self.inv[row * n..(row + 1) * n].to_vec(), self.x[row]);
        for i in 0..n {
            if i != row && u[i] != zero() {
                let f = u[i];
                for (a, &r) in self.inv[i * n..(i + 1) * n].iter_mut().zip(&pivot_row) {
                    *a -= f * r;
                }
                self.x[i] -= f * xr;
            }
        }
        self.basis[row] = entering;
    }

    /// Rebuilds `B⁻¹` from scratch. With `B = [A_X | E_S]`, only the block
    /// of `A_X` on the rows not covered by basic slacks needs inverting.
    fn refactor(&mut self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        let mut slack_pos = vec![usize::MAX; n];
        let mut xs = Vec::new();
        for (pos, &j) in self.basis.iter().enumerate() {
            if j < m {
                xs.push((pos, j));
            } else {
                slack_pos[j - m] = pos;
            }
        }
        let rows: Vec<usize> = (0..n).filter(|&r| slack_pos[r] == usize::MAX).collect();
        let k = xs.len();
        if rows.len() != k {
            return Err(Error::SingularSystem(0));
        }
        let mut c = vec![zero(); k * k];
        for (a, &r) in rows.iter().enumerate() {
            for (b, &(_, j)) in xs.iter().enumerate() {
                c[a * k + b] = self.psi[j * n + r];
            }
        }
        let ci = invert(k, c)?;
        let mut inv = vec![zero(); n * n];
        for (b, &(pos, _)) in xs.iter().enumerate() {
            for (a, &r) in rows.iter().enumerate() {
                inv[pos * n + r] = ci[b * k + a];
            }
        }
        for s in 0..n {
            let pos = slack_pos[s];
            if pos == usize::MAX {
                continue;
            }
            inv[pos * n + s] = one();
            for (a, &r) in rows.iter().enumerate() {
                let mut acc = zero();
                for (b, &(_, j)) in xs.iter().enumerate() {
                    acc += self.psi[j * n + s] * ci[b * k + a];
                }
                inv[pos * n + r] = -acc;
            }
        }
        self.inv = inv;
        self.x = self.times_inv(&vec![one(); n]);
        Ok(())
    }
}

/// `1 / x` to double-double accuracy by one Newton correction of the `f64`
/// reciprocal. `TwoFloat`'s own division drops the residual term.
fn recip(x: D) -> D {
    let q = D::from(x.hi().recip());
    let r = one() - x * q;
    q + q * r
}

fn dot(a: &[D], b: &[D]) -> D {
    a.iter().zip(b).fold(zero(), |acc, (&p, &q)| acc + p * q)
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(k: usize, mut a: Vec<D>) -> Result<Vec<D>> {
    let mut inv: Vec<D> = (0..k * k).map(|i| if i % (k + 1) == 0 { one() } else { zero() }).collect();
    for col in 0..k {
        let p = (col..k).max_by(|&i, &j| a[i * k + col].abs().partial_cmp(&a[j * k + col].abs()).unwrap()).unwrap();
        if a[p * k + col] == zero() {
            return Err(Error::SingularSystem(col));
        }
        if p != col {
            for j in 0..k {
                a.swap(p * k + j, col * k + j);
                inv.swap(p * k + j, col * k + j);
            }
        }
        let d = recip(a[col * k + col]);
        for j in 0..k {
            a[col * k + j] *= d;
            inv[col * k + j] *= d;
        }
        let (prow, pinv) = (a[col * k..(col + 1) * k].to_vec(), inv[col * k..(col + 1) * k].to_vec());
        for i in 0..k {
            let f = a[i * k + col];
            if i == col || f == zero() {
                continue;
            }
            for j in 0..k {
                a[i * k + j] -= f * prow[j];
                inv[i * k + j] -= f * pinv[j];
            }
        }
    }
    Ok(inv)
}

/// Solves the matrix game with nonnegative payoff `psi` (`m x n`, row-major)
/// until the certified gap is at most `target · max(1, value)`, or exactly
/// when `target` is zero.
///
/// Strategies are grown by best responses (double oracle) and each restricted
/// game goes through the simplex. Near-optimal strategies of smooth payoffs
/// have small supports, so the restricted bases stay far better conditioned
/// than the optimal vertex of the full game.
pub fn solve_matrix_game<T: Scalar>(psi: &[T], m: usize, n: usize, target: f64) -> Result<GameSolution<T>> {
    if m == 0 || n == 0 {
        return Err(Error::Infeasible("empty payoff matrix".into()));
    }
    assert_eq!(psi.len(), m * n);
    let scale = psi.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let rows = distinct(m, n, |v, w| psi[v * n + w], scale);
    let cols = distinct(n, m, |w, v| psi[v * n + w], scale);
    if rows.len() == m && cols.len() == n {
        return double_oracle(psi, m, n, target);
    }
    // Near-identical strategies make restricted bases singular; solve on
    // representatives and certify against the full matrix.
    let reduced: Vec<T> = rows.iter().flat_map(|&v| cols.iter().map(move |&w| psi[v * n + w])).collect();
    let game = double_oracle(&reduced, rows.len(), cols.len(), target)?;
    let mut beta = vec![T::zero(); n];
    cols.iter().zip(&game.beta).for_each(|(&w, &p)| beta[w] = p);
    let mut eta = vec![T::zero(); m];
    rows.iter().zip(&game.eta).for_each(|(&v, &p)| eta[v] = p);
    let primal = (0..m).map(|v| (0..n).map(|w| psi[v * n + w] * beta[w]).sum()).fold(T::infinity(), T::min);
    let dual = (0..n).map(|w| (0..m).map(|v| psi[v * n + w] * eta[v]).sum()).fold(T::neg_infinity(), T::max);
    Ok(GameSolution { beta, eta, primal, dual, ..game })
}

/// Indices of one representative per class of strategies that agree
/// entrywise to `1e-13 · scale`. `get(i, k)` is entry `k` of strategy `i`.
fn distinct<T: Scalar>(count: usize, len: usize, get: impl Fn(usize, usize) -> T, scale: T) -> Vec<usize> {
    let tol = T::of(1e-13) * scale;
    // Fingerprints against fixed weights in [1/2, 1] bound the search window.
    let weights: Vec<T> = (0..len).map(|k| T::of(0.5 + (k as f64 * 0.618_033_988_749_895).fract() / 2.0)).collect();
    let prints: Vec<T> = (0..count).map(|i| (0..len).map(|k| get(i, k) * weights[k]).sum()).collect();
    let window = tol * T::of(len as f64);
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| prints[a].partial_cmp(&prints[b]).expect("finite payoffs"));
    let mut reps: Vec<usize> = Vec::new();
    for &i in &order {
        let twin = reps
            .iter()
            .rev()
            .take_while(|&&j| prints[i] - prints[j] <= window)
            .any(|&j| (0..len).all(|k| (get(i, k) - get(j, k)).abs() <= tol));
        if !twin {
            reps.push(i);
        }
    }
    reps.sort_unstable();
    reps
}

fn double_oracle<T: Scalar>(psi: &[T], m: usize, n: usize, target: f64) -> Result<GameSolution<T>> {
    if m == 0 || n == 0 {
        return Err(Error::Infeasible("empty payoff matrix".into()));
    }
    assert_eq!(psi.len(), m * n);
    if psi.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return Err(Error::Infeasible("payoff must be finite and nonnegative".into()));
    }
    if let Some(v) = (0..m).find(|&v| psi[v * n..(v + 1) * n].iter().all(|&x| x == T::zero())) {
        // A zero row pins the value at zero.
        let mut eta = vec![T::zero(); m];
        eta[v] = T::one();
        let beta = vec![T::one() / T::of(n as f64); n];
        return Ok(GameSolution { beta, eta, primal: T::zero(), dual: T::zero(), iterations: 0, degenerate: true });
    }
    let first = (0..n).fold(0, |best, w| if psi[w] > psi[best] { w } else { best });
    let (mut rows, mut cols) = (vec![0], vec![first]);
    let (mut in_rows, mut in_cols) = (vec![false; m], vec![false; n]);
    in_rows[0] = true;
    in_cols[first] = true;
    let mut best_primal: Option<(T, Vec<T>)> = None;
    let mut best_dual: Option<(T, Vec<T>)> = None;
    let mut iterations = 0;
    loop {
        // A row with no positive entry would make the restricted LP unbounded.
        for &v in &rows {
            let row = &psi[v * n..(v + 1) * n];
            if cols.iter().all(|&w| row[w] == T::zero()) {
                let w = (0..n).fold(0, |best, w| if row[w] > row[best] { w } else { best });
                in_cols[w] = true;
                cols.push(w);
            }
        }
        let sub: Vec<D> = rows.iter().flat_map(|&v| cols.iter().map(move |&w| D::from(psi[v * n + w].as_f64()))).collect();
        let lp = solve_lp(sub, rows.len(), cols.len())?;
        iterations += lp.iterations;
        let degenerate = lp.degenerate;
        let mut beta = vec![T::zero(); n];
        for (&w, p) in cols.iter().zip(normalize(lp.y)) {
            beta[w] = T::of(p.hi());
        }
        let mut eta = vec![T::zero(); m];
        for (&v, p) in rows.iter().zip(normalize(lp.x)) {
            eta[v] = T::of(p.hi());
        }
        // Best responses double as certificates in the caller's precision.
        let row_vals: Vec<T> = (0..m).map(|v| (0..n).map(|w| psi[v * n + w] * beta[w]).sum()).collect();
        let col_vals: Vec<T> = (0..n).map(|w| (0..m).map(|v| psi[v * n + w] * eta[v]).sum()).collect();
        let primal = row_vals.iter().copied().fold(T::infinity(), T::min);
        let dual = col_vals.iter().copied().fold(T::neg_infinity(), T::max);
        // Restricted game value, seen from either side.
        let inside_rows = rows.iter().map(|&v| row_vals[v]).fold(T::infinity(), T::min);
        let inside_cols = cols.iter().map(|&w| col_vals[w]).fold(T::neg_infinity(), T::max);
        if best_primal.as_ref().is_none_or(|b| primal > b.0) {
            best_primal = Some((primal, beta));
        }
        if best_dual.as_ref().is_none_or(|b| dual < b.0) {
            best_dual = Some((dual, eta));
        }
        let (primal, beta) = best_primal.clone().expect("set above");
        let (dual, eta) = best_dual.clone().expect("set above");
        if (dual - primal).as_f64() <= target * primal.as_f64().abs().max(1.0) {
            return Ok(GameSolution { beta, eta, primal, dual, iterations, degenerate });
        }
        let new_rows = violators(&row_vals, &in_rows, |x| x < inside_rows);
        let new_cols = violators(&col_vals, &in_cols, |x| x > inside_cols);
        if new_rows.is_empty() && new_cols.is_empty() {
            return Ok(GameSolution { beta, eta, primal, dual, iterations, degenerate });
        }
        for v in new_rows {
            in_rows[v] = true;
            rows.push(v);
        }
        for w in new_cols {
            in_cols[w] = true;
            cols.push(w);
        }
    }
}

/// Strategies outside the restricted set that beat the restricted value and
/// tie with the most violating one, at most `BATCH` of them. Ties come from
/// symmetries of the network; near-ties of smooth payoffs are nearly
/// collinear and are left for later rounds.
fn violators<T: Scalar>(vals: &[T], inside: &[bool], beats: impl Fn(T) -> bool) -> Vec<usize> {
    let out: Vec<usize> = (0..vals.len()).filter(|&i| !inside[i] && beats(vals[i])).collect();
    let key = |i: usize| if beats(T::infinity()) { -vals[i] } else { vals[i] };
    let Some(best) = out.iter().map(|&i| key(i)).reduce(T::min) else {
        return out;
    };
    let tie = T::of(TIE) * best.abs().max(T::one());
    out.into_iter().filter(|&i| key(i) - best <= tie).take(BATCH).collect()
}

/// Optimal point of the restricted LP: `x` is proportional to the row
/// strategy and the duals `y` to the column strategy.
struct LpSolution {
    x: Vec<D>,
    y: Vec<D>,
    iterations: usize,
    degenerate: bool,
}

fn solve_lp(psi: Vec<D>, m: usize, n: usize) -> Result<LpSolution> {
    let scale = psi.iter().fold(1.0f64, |a, x| a.max(x.hi()));
    let eps = D::from(f64::EPSILON * 1e4);
    let mut tab = Tableau {
        psi,
        m,
        n,
        basis: (m..m + n).collect(),
        inv: (0..n * n).map(|k| if k % (n + 1) == 0 { one() } else { zero() }).collect(),
        x: vec![one(); n],
    };
    let total = m + n;
    let limit = 50 * total + 1000;
    let mut is_basic = vec![false; total];
    tab.basis.iter().for_each(|&j| is_basic[j] = true);
    let (mut iterations, mut since_refactor, mut degenerate_run) = (0, 0, 0);
    loop {
        let y = tab.duals();
        let ymax = y.iter().fold(1.0f64, |a, b| a.max(b.hi().abs()));
        let cost_tol = D::from(COST_TOL * ymax * scale);
        let candidates = (0..total).filter(|&j| !is_basic[j]).map(|j| (j, tab.reduced_cost(&y, j)));
        let entering = if degenerate_run >= DEGENERATE_RUN {
            candidates.filter(|c| c.1 > cost_tol).map(|c| c.0).next()
        } else {
            candidates
                .filter(|c| c.1 > cost_tol)
                .fold(None, |best: Option<(usize, D)>, c| match best {
                    Some(b) if b.1 >= c.1 => Some(b),
                    _ => Some(c),
                })
                .map(|c| c.0)
        };
        let Some(entering) = entering else {
            if since_refactor > 0 {
                // Confirm optimality against a fresh factorization.
                tab.refactor()?;
                since_refactor = 0;
                continue;
            }
            let degenerate = (0..total).any(|j| !is_basic[j] && tab.reduced_cost(&y, j).abs() <= cost_tol);
            let mut x = vec![zero(); m];
            for (i, &j) in tab.basis.iter().enumerate() {
                if j < m {
                    x[j] = tab.x[i].max(zero());
                }
            }
            let y = y.into_iter().map(|v| v.max(zero())).collect();
            return Ok(LpSolution { x, y, iterations, degenerate });
        };
        if iterations >= limit {
            return Err(Error::IterationLimit(limit));
        }
        let u = tab.times_inv(&tab.column(entering));
        let umax = u.iter().fold(zero(), |a, &x| a.max(x.abs()));
        let piv_tol = D::from(PIVOT_TOL) * umax;
        let bland = degenerate_run >= DEGENERATE_RUN;
        let mut leave: Option<(usize, D)> = None;
        for (i, &ui) in u.iter().enumerate() {
            if ui <= piv_tol {
                continue;
            }
            let ratio = tab.x[i].max(zero()) * recip(ui);
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= eps * best.abs().max(one());
                    let better_tie = if bland { tab.basis[i] < tab.basis[r] } else { ui > u[r] };
                    if (ratio < best && !tie) || (tie && better_tie) {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((row, step)) = leave else {
            return Err(Error::Unbounded);
        };
        if step <= eps {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        is_basic[tab.basis[row]] = false;
        is_basic[entering] = true;
        tab.pivot(row, &u, entering);
        iterations += 1;
        since_refactor += 1;
        if since_refactor == REFACTOR_EVERY {
            tab.refactor()?;
            since_refactor = 0;
        }
    }
}

fn normalize(p: Vec<D>) -> Vec<D> {
    let s = p.iter().fold(zero(), |a, &x| a + x);
    if s > zero() {
        let s = recip(s);
        p.into_iter().map(|x| x * s).collect()
    } else {
        let u = recip(D::from(p.len() as f64));
        vec![u; p.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reciprocal_is_double_double() {
        for x in [3.0, 7.0, 0.1, 1e-7, 12345.678] {
            let r = recip(D::from(x)) * D::from(x) - one();
            assert!(r.hi().abs() < 1e-30, "{x}: {r:?}");
        }
    }

    #[test]
    fn near_duplicate_strategies() {
        // Rows 1 and 2 differ by one ulp; columns 2 and 3 coincide.
        let a: f64 = 4.190_476_190_476_19;
        let b = f64::from_bits(a.to_bits() + 1);
        let psi = [38.3, 12.7, a, a, 12.7, 38.3, a, a, a, b, 38.3, 38.3];
        let s = check(&psi, 3, 4);
        assert!(s.iterations > 0);
    }

    fn check(psi: &[f64], m: usize, n: usize) -> GameSolution<f64> {
        let s = solve_matrix_game(psi, m, n, 0.0).unwrap();
        assert!((s.dual - s.primal).abs() <= 1e-9 * s.dual.abs().max(1.0), "gap {} vs {}", s.primal, s.dual);
        s
    }

    #[test]
    fn matching_pennies() {
        let s = check(&[1.0, 0.0, 0.0, 1.0], 2, 2);
        assert!((s.primal - 0.5).abs() < 1e-14);
        assert!((s.beta[0] - 0.5).abs() < 1e-14 && (s.eta[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn dominated_columns_and_single_row() {
        let s = check(&[3.0, 1.0, 2.0], 1, 3);
        assert_eq!(s.primal, 3.0);
        assert_eq!(s.beta, vec![1.0, 0.0, 0.0]);
        // min(1 + a, 4 - 4a, 1 + 2a) peaks at a = 3/5.
        let s = check(&[2.0, 1.0, 0.0, 4.0, 3.0, 1.0], 3, 2);
        assert!((s.primal - 1.6).abs() < 1e-14);
    }

    #[test]
    fn rock_paper_scissors_shifted() {
        // Payoffs 1 + RPS: value 1, uniform strategies, degenerate ties.
        let psi = [1.0, 0.0, 2.0, 2.0, 1.0, 0.0, 0.0, 2.0, 1.0];
        let s = check(&psi, 3, 3);
        assert!((s.primal - 1.0).abs() < 1e-13);
        for p in s.beta.iter().chain(&s.eta) {
            assert!((p - 1.0 / 3.0).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn random_games_close_the_gap(m in 1usize..9, n in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let psi: Vec<f64> = (0..m * n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..5.0) }).collect();
            let s = solve_matrix_game(&psi, m, n, 0.0).unwrap();
            prop_assert!(s.dual - s.primal <= 1e-9 * s.dual.max(1.0));
            prop_assert!(s.dual - s.primal >= -1e-9 * s.dual.max(1.0));
            prop_assert!((s.beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((s.eta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
