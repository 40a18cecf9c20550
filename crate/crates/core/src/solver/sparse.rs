//! Sparse LDLᵀ factorization of symmetric positive definite matrices with a
//! nested-dissection fill-reducing ordering.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NONE: usize = usize::MAX;
const LEAF_SIZE: usize = 48;

/// Symmetric matrix given by rows: diagonal plus off-diagonal `(column, value)`
/// lists containing both triangles.
pub(crate) struct SymmetricRows<T> {
    pub diag: Vec<T>,
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Scalar> SymmetricRows<T> {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `y = A x`
    pub fn mul(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n() {
            y[i] = self.diag[i] * x[i] + self.row(i).map(|(j, a)| a * x[j]).sum::<T>();
        }
    }
}

/// Elimination order by recursive bisection along breadth-first level
/// structures rooted at pseudo-peripheral vertices.
pub(crate) fn nested_dissection(offsets: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = offsets.len() - 1;
    let mut order = Vec::with_capacity(n);
    let mut label = vec![0u32; n];
    let mut next_label = 1u32;
    let mut level = vec![NONE; n];
    let all: Vec<usize> = (0..n).collect();
    let mut stack = vec![Task::Split(all, 0)];
    while let Some(task) = stack.pop() {
        let (set, id) = match task {
            Task::Emit(set) => {
                order.extend(set);
                continue;
            }
            Task::Split(set, id) => (set, id),
        };
        if set.len() <= LEAF_SIZE {
            order.extend(set);
            continue;
        }
        // Level structure from a pseudo-peripheral vertex of the component of set[0].
        let mut levels = bfs_levels(offsets, cols, &label, id, set[0], &mut level);
        for _ in 0..4 {
            let last = levels.last().expect("non-empty");
            let candidate = *last.iter().min_by_key(|&&v| offsets[v + 1] - offsets[v]).expect("non-empty");
            let trial = bfs_levels(offsets, cols, &label, id, candidate, &mut level);
            if trial.len() <= levels.len() {
                break;
            }
            levels = trial;
        }
        let reached: usize = levels.iter().map(Vec::len).sum();
        if reached < set.len() {
            // Disconnected: peel off this component and handle the rest separately.
            let comp_label = next_label;
            let rest_label = next_label + 1;
            next_label += 2;
            let comp: Vec<usize> = levels.into_iter().flatten().collect();
            for &v in &comp {
                label[v] = comp_label;
            }
            let rest: Vec<usize> = set.into_iter().filter(|&v| label[v] == id).collect();
            for &v in &rest {
                label[v] = rest_label;
            }
            stack.push(Task::Split(rest, rest_label));
            stack.push(Task::Split(comp, comp_label));
            continue;
        }
        if levels.len() < 3 {
            order.extend(set);
            continue;
        }
        // A tree: leaves first (reverse BFS) eliminates without fill.
        let inner_degree: usize =
            set.iter().map(|&v| cols[offsets[v]..offsets[v + 1]].iter().filter(|&&u| u != v && label[u] == id).count()).sum();
        if inner_degree == 2 * (set.len() - 1) {
            order.extend(levels.into_iter().rev().flatten());
            continue;
        }
        let half = set.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (k, lv) in levels.iter().enumerate() {
            acc += lv.len();
            if acc >= half {
                mid = k;
                break;
            }
        }
        let mid = mid.clamp(1, levels.len() - 2);
        let a_label = next_label;
        let b_label = next_label + 1;
        next_label += 2;
        let mut part_a = Vec::new();
        let mut part_b = Vec::new();
        let mut separator = Vec::new();
        for (k, lv) in levels.into_iter().enumerate() {
            for v in lv {
                if k < mid {
                    label[v] = a_label;
                    part_a.push(v);
                } else if k > mid {
                    label[v] = b_label;
                    part_b.push(v);
                } else {
                    label[v] = u32::MAX;
                    separator.push(v);
                }
            }
        }
        stack.push(Task::Emit(separator));
        stack.push(Task::Split(part_b, b_label));
        stack.push(Task::Split(part_a, a_label));
    }
    order
}

enum Task {
    Split(Vec<usize>, u32),
    Emit(Vec<usize>),
}

fn bfs_levels(offsets: &[usize], cols: &[usize], label: &[u32], id: u32, start: usize, level: &mut [usize]) -> Vec<Vec<usize>> {
    let mut levels = vec![vec![start]];
    level[start] = 0;
    let mut visited = vec![start];
    loop {
        let mut next = Vec::new();
        let depth = levels.len();
        for &v in levels.last().expect("non-empty") {
            for &u in &cols[offsets[v]..offsets[v + 1]] {
                if label[u] == id && level[u] == NONE {
                    level[u] = depth;
                    visited.push(u);
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next);
    }
    for v in visited {
        level[v] = NONE;
    }
    levels
}

/// `A = P' L D Lᵀ P` with unit lower-triangular `L` stored by columns.
#[derive(Clone, Debug)]
pub(crate) struct SparseLdl<T> {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> SparseLdl<T> {
    pub fn factor(a: &SymmetricRows<T>) -> Result<Self> {
        let n = a.n();
        let perm = nested_dissection(&a.offsets, &a.cols);
        let mut iperm = vec![0; n];
        for (k, &old) in perm.iter().enumerate() {
            iperm[old] = k;
        }
        // Upper triangle of the permuted matrix, by columns.
        let mut cp = vec![0usize; n + 1];
        let mut upper: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for old in 0..n {
            let k = iperm[old];
            for (j, v) in a.row(old) {
                let i = iperm[j];
                if i < k {
                    upper[k].push((i, v));
                }
            }
        }
        for k in 0..n {
            cp[k + 1] = cp[k] + upper[k].len();
        }

        // Elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &(mut i, _) in &upper[k] {
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![T::zero(); nnz];
        let mut d = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|x| *x = 0);

        for k in 0..n {
            y[k] = T::zero();
            let mut top = n;
            flag[k] = k;
            for &(i0, v) in &upper[k] {
                y[i0] += v;
                let mut len = 0;
                let mut i = i0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = a.diag[perm[k]];
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = T::zero();
                let start = lp[i];
                let end = start + lnz[i];
                for p in start..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k] > T::zero()) {
                return Err(Error::SingularSystem(perm[k]));
            }
        }
        Ok(SparseLdl { perm, lp, li, lx, d })
    }

    pub fn nnz(&self) -> usize {
        self.li.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.d.len();
        let mut x: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                xj -= self.lx[p] * x[self.li[p]];
            }
            x[j] = xj;
        }
        for (k, &old) in self.perm.iter().enumerate() {
            b[old] = x[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(w: usize, shift: f64) -> SymmetricRows<f64> {
        let n = w * w;
        let mut rows = SymmetricRows { diag: vec![4.0 + shift; n], offsets: vec![0], cols: vec![], vals: vec![] };
        for i in 0..n {
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                rows.cols.push(j);
                rows.vals.push(-1.0);
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < w {
                push(i + w);
            }
            rows.offsets.push(rows.cols.len());
        }
        rows
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = grid_laplacian(30, 0.0);
        let mut order = nested_dissection(&a.offsets, &a.cols);
        order.sort_unstable();
        assert_eq!(order, (0..900).collect::<Vec<_>>());
    }

    #[test]
    fn solves_dirichlet_grid() {
        let a = grid_laplacian(40, 0.0);
        let x: Vec<f64> = (0..1600).map(|i| ((i * 37) % 101) as f64 / 7.0 - 3.0).collect();
        let mut b = vec![0.0; 1600];
        a.mul(&x, &mut b);
        let f = SparseLdl::factor(&a).unwrap();
        f.solve_in_place(&mut b);
        let err = x.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "error {err}");
        // Nested dissection keeps fill well below the banded n * w.
        assert!(f.nnz() < 1600 * 40 / 2, "fill {}", f.nnz());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = grid_laplacian(5, -8.0);
        assert!(matches!(SparseLdl::factor(&a), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn trees_factor_without_fill() {
        // Complete binary tree on heap indices.
        let n = 4095;
        let mut rows = SymmetricRows { diag: vec![3.5; n], offsets: vec![0], cols: vec![], vals: vec![] };
        for i in 0..n {
            let nbrs = [(i > 0).then(|| (i - 1) / 2), Some(2 * i + 1), Some(2 * i + 2)];
            for j in nbrs.into_iter().flatten().filter(|&j| j < n) {
                rows.cols.push(j);
                rows.vals.push(-1.0);
            }
            rows.offsets.push(rows.cols.len());
        }
        let f = SparseLdl::factor(&rows).unwrap();
        assert_eq!(f.nnz(), n - 1);
    }
}
