//! Rooted networks: explicit finite edge lists and procedural infinite families.

mod ball;
mod format;

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use ball::Ball;
pub use format::{network_from_json, network_to_json, FORMAT_TAG};

/// Vertex label. Explicit networks use integers; generated families use
/// lattice coordinates or tree addresses.
///
/// The total order is lexicographic on the canonical string form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum VertexId {
    Int(i64),
    Pair(i64, i64),
    Tree { level: u32, index: u64 },
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Int(n) => write!(f, "{n}"),
            VertexId::Pair(x, y) => write!(f, "({x},{y})"),
            VertexId::Tree { level, index } => write!(f, "L{level}.N{index}"),
        }
    }
}

impl FromStr for VertexId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidLabel(s.to_string());
        let t = s.trim();
        if let Some(inner) = t.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            let x = a.trim().parse().map_err(|_| bad())?;
            let y = b.trim().parse().map_err(|_| bad())?;
            return Ok(VertexId::Pair(x, y));
        }
        if let Some(rest) = t.strip_prefix('L') {
            let (lv, ix) = rest.split_once(".N").ok_or_else(bad)?;
            return Ok(VertexId::Tree { level: lv.parse().map_err(|_| bad())?, index: ix.parse().map_err(|_| bad())? });
        }
        t.parse().map(VertexId::Int).map_err(|_| bad())
    }
}

impl Ord for VertexId {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        self.to_string().cmp(&other.to_string())
    }
}

impl PartialOrd for VertexId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Procedural network families. Every neighbor oracle is a pure function of
/// the vertex label.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSpec {
    /// The integers; edge `(n, n+1)` has index `n` and conductance
    /// `conductances[n mod len]`.
    Line { conductances: Vec<f64> },
    /// Unit-conductance square lattice.
    Grid2d,
    /// Rooted tree where every vertex has `branching` children and the edge
    /// entering level `n` has conductance `lambda^n`.
    Tree { branching: u32, lambda: f64 },
    /// Unit-conductance ladder `Z x {0, 1}`.
    Ladder,
    /// Square lattice with i.i.d. conductances uniform in `[low, high]`,
    /// derived deterministically from the seed and the edge.
    RandomConductanceGrid { seed: u64, low: f64, high: f64 },
}

impl GeneratorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorSpec::Line { .. } => "line",
            GeneratorSpec::Grid2d => "grid2d",
            GeneratorSpec::Tree { .. } => "tree",
            GeneratorSpec::Ladder => "ladder",
            GeneratorSpec::RandomConductanceGrid { .. } => "random-conductance-grid",
        }
    }

    /// Unit-conductance line.
    pub fn line() -> Self {
        GeneratorSpec::Line { conductances: vec![1.0] }
    }

    /// Canonical root of the family.
    pub fn default_root(&self) -> VertexId {
        match self {
            GeneratorSpec::Line { .. } => VertexId::Int(0),
            GeneratorSpec::Tree { .. } => VertexId::Tree { level: 0, index: 0 },
            _ => VertexId::Pair(0, 0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok_c = |c: f64| c.is_finite() && c > 0.0;
        match self {
            GeneratorSpec::Line { conductances } => {
                if conductances.is_empty() || !conductances.iter().all(|&c| ok_c(c)) {
                    return Err(Error::InvalidSpec("line conductances must be positive".into()));
                }
            }
            GeneratorSpec::Tree { branching, lambda } => {
                if *branching < 1 {
                    return Err(Error::InvalidSpec("tree branching must be >= 1".into()));
                }
                if !ok_c(*lambda) {
                    return Err(Error::InvalidSpec("tree lambda must be positive".into()));
                }
            }
            GeneratorSpec::RandomConductanceGrid { low, high, .. } => {
                if !ok_c(*low) || !ok_c(*high) || low > high {
                    return Err(Error::InvalidSpec("conductance range must satisfy 0 < low <= high".into()));
                }
            }
            GeneratorSpec::Grid2d | GeneratorSpec::Ladder => {}
        }
        Ok(())
    }

    fn contains(&self, v: VertexId) -> bool {
        match (self, v) {
            (GeneratorSpec::Line { .. }, VertexId::Int(_)) => true,
            (GeneratorSpec::Grid2d | GeneratorSpec::RandomConductanceGrid { .. }, VertexId::Pair(..)) => true,
            (GeneratorSpec::Ladder, VertexId::Pair(_, y)) => y == 0 || y == 1,
            (GeneratorSpec::Tree { branching, .. }, VertexId::Tree { level, index }) => {
                (*branching as u64).checked_pow(level).is_none_or(|width| index < width)
            }
            _ => false,
        }
    }

    fn neighbors(&self, v: VertexId, out: &mut Vec<(VertexId, f64)>) {
        out.clear();
        match (self, v) {
            (GeneratorSpec::Line { conductances }, VertexId::Int(n)) => {
                let len = conductances.len() as i64;
                let c = |idx: i64| conductances[idx.rem_euclid(len) as usize];
                out.push((VertexId::Int(n + 1), c(n)));
                out.push((VertexId::Int(n - 1), c(n - 1)));
            }
            (GeneratorSpec::Grid2d, VertexId::Pair(x, y)) => {
                for (a, b) in lattice_steps(x, y) {
                    out.push((VertexId::Pair(a, b), 1.0));
                }
            }
            (GeneratorSpec::RandomConductanceGrid { seed, low, high }, VertexId::Pair(x, y)) => {
                for (a, b) in lattice_steps(x, y) {
                    let c = random_edge_conductance(*seed, *low, *high, (x, y), (a, b));
                    out.push((VertexId::Pair(a, b), c));
                }
            }
            (GeneratorSpec::Ladder, VertexId::Pair(x, y)) => {
                out.push((VertexId::Pair(x + 1, y), 1.0));
                out.push((VertexId::Pair(x - 1, y), 1.0));
                out.push((VertexId::Pair(x, 1 - y), 1.0));
            }
            (GeneratorSpec::Tree { branching, lambda }, VertexId::Tree { level, index }) => {
                if level > 0 {
                    let parent = VertexId::Tree { level: level - 1, index: index / *branching as u64 };
                    out.push((parent, lambda.powi(level as i32)));
                }
                let c = lambda.powi(level as i32 + 1);
                for j in 0..*branching as u64 {
                    let child = VertexId::Tree { level: level + 1, index: index * *branching as u64 + j };
                    out.push((child, c));
                }
            }
            _ => {}
        }
    }

    fn recurrence_note(&self) -> String {
        match self {
            GeneratorSpec::Line { .. } => "recurrent: one-dimensional with bounded conductances".into(),
            GeneratorSpec::Grid2d => "recurrent: planar lattice (Polya)".into(),
            GeneratorSpec::Ladder => "recurrent: quasi one-dimensional".into(),
            GeneratorSpec::RandomConductanceGrid { .. } => "recurrent: planar lattice with conductances bounded above".into(),
            GeneratorSpec::Tree { branching, lambda } => {
                if (*branching as f64) * lambda <= 1.0 {
                    "recurrent: level resistances (b*lambda)^-n have divergent sum".into()
                } else {
                    "transient: level resistances (b*lambda)^-n are summable".into()
                }
            }
        }
    }
}

fn lattice_steps(x: i64, y: i64) -> [(i64, i64); 4] {
    [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
}

fn random_edge_conductance(seed: u64, low: f64, high: f64, a: (i64, i64), b: (i64, i64)) -> f64 {
    let (p, q) = if a <= b { (a, b) } else { (b, a) };
    // Horizontal and vertical edges leaving p use separate key spaces.
    let vertical = (q.1 != p.1) as u64;
    let key = ((p.0 as u32 as u64) << 32) | (p.1 as u32 as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ vertical.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(key);
    low + (high - low) * rng.random::<f64>()
}

#[derive(Clone, Debug)]
enum Topology {
    Explicit(HashMap<VertexId, Vec<(VertexId, f64)>>),
    Generated(GeneratorSpec),
}

/// A rooted network: connected, locally finite, positive symmetric conductances.
///
/// Immutable after construction; neighbor queries are pure.
#[derive(Clone, Debug)]
pub struct Network {
    root: VertexId,
    topology: Topology,
    name: String,
    recurrence_note: String,
    hash: String,
}

impl Network {
    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn recurrence_note(&self) -> &str {
        &self.recurrence_note
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.topology, Topology::Explicit(_))
    }

    pub fn generator(&self) -> Option<&GeneratorSpec> {
        match &self.topology {
            Topology::Generated(g) => Some(g),
            Topology::Explicit(_) => None,
        }
    }

    /// Number of vertices of an explicit network.
    pub fn vertex_count(&self) -> Option<usize> {
        match &self.topology {
            Topology::Explicit(adj) => Some(adj.len()),
            Topology::Generated(_) => None,
        }
    }

    /// Writes the neighbors of `v` with their conductances into `out`.
    pub fn neighbors_into(&self, v: VertexId, out: &mut Vec<(VertexId, f64)>) {
        match &self.topology {
            Topology::Explicit(adj) => {
                out.clear();
                if let Some(list) = adj.get(&v) {
                    out.extend_from_slice(list);
                }
            }
            Topology::Generated(g) => g.neighbors(v, out),
        }
    }

    pub fn neighbors(&self, v: VertexId) -> Vec<(VertexId, f64)> {
        let mut out = Vec::new();
        self.neighbors_into(v, &mut out);
        out
    }

    /// Total conductance `c_x`.
    pub fn total_conductance(&self, v: VertexId) -> f64 {
        self.neighbors(v).iter().map(|&(_, c)| c).sum()
    }

    /// Sorted edge list `(u, v, c)` with `u < v` of an explicit network.
    pub fn explicit_edges(&self) -> Option<Vec<(VertexId, VertexId, f64)>> {
        let Topology::Explicit(adj) = &self.topology else {
            return None;
        };
        let mut edges: Vec<_> =
            adj.iter().flat_map(|(&u, list)| list.iter().filter(move |(v, _)| u < *v).map(move |&(v, c)| (u, v, c))).collect();
        edges.sort_by_key(|a| (a.0, a.1));
        Some(edges)
    }

    fn finish(root: VertexId, topology: Topology, name: String, recurrence_note: String) -> Self {
        let mut net = Network { root, topology, name, recurrence_note, hash: String::new() };
        let canonical = format::canonical_json(&net);
        net.hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        net
    }
}

/// Builds an explicit finite network from an edge list.
///
/// Parallel edges are merged by adding conductances; self-loops are rejected.
pub fn build_network(edges: &[(VertexId, VertexId, f64)], root: VertexId) -> Result<Network> {
    if edges.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let mut merged: HashMap<(VertexId, VertexId), f64> = HashMap::new();
    for &(u, v, c) in edges {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::NonPositiveConductance { u: u.to_string(), v: v.to_string(), value: c });
        }
        if u == v {
            return Err(Error::SelfLoop(u.to_string()));
        }
        let key = if u < v { (u, v) } else { (v, u) };
        *merged.entry(key).or_insert(0.0) += c;
    }
    let mut adj: HashMap<VertexId, Vec<(VertexId, f64)>> = HashMap::new();
    for (&(u, v), &c) in &merged {
        adj.entry(u).or_default().push((v, c));
        adj.entry(v).or_default().push((u, c));
    }
    for list in adj.values_mut() {
        list.sort_by_key(|a| a.0);
    }
    if !adj.contains_key(&root) {
        return Err(Error::RootAbsent(root.to_string()));
    }
    let mut seen: HashMap<VertexId, ()> = HashMap::with_capacity(adj.len());
    let mut queue = VecDeque::from([root]);
    seen.insert(root, ());
    while let Some(v) = queue.pop_front() {
        for &(u, _) in &adj[&v] {
            if seen.insert(u, ()).is_none() {
                queue.push_back(u);
            }
        }
    }
    if seen.len() != adj.len() {
        return Err(Error::Disconnected { unreached: adj.len() - seen.len() });
    }
    Ok(Network::finish(root, Topology::Explicit(adj), String::from("explicit"), String::from("finite: every finite network is recurrent")))
}

/// Instantiates a procedural family rooted at `root` (or the family's
/// canonical root when `None`).
pub fn generate(spec: GeneratorSpec, root: Option<VertexId>) -> Result<Network> {
    spec.validate()?;
    let root = root.unwrap_or_else(|| spec.default_root());
    if !spec.contains(root) {
        return Err(Error::InvalidSpec(format!("root {root} is not a vertex of a {} network", spec.kind())));
    }
    let note = spec.recurrence_note();
    let name = spec.kind().to_string();
    Ok(Network::finish(root, Topology::Generated(spec), name, note))
}

/// A reproducible random finite network used by the conformance battery:
/// a path `0..n` with random chords to the next three indices, conductances
/// uniform in `[0.1, 10]`, rooted at 0.
pub fn random_network(seed: u64, index: u64, vertices: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = vertices.max(2) as i64;
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        edges.push((VertexId::Int(i), VertexId::Int(i + 1), rng.random_range(0.1..10.0)));
        for j in 2..=3 {
            if i + j < n && rng.random_bool(0.35) {
                edges.push((VertexId::Int(i), VertexId::Int(i + j), rng.random_range(0.1..10.0)));
            }
        }
    }
    build_network(&edges, VertexId::Int(0)).expect("path backbone keeps the network connected").with_name(format!("random-{seed}-{index}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(n: i64) -> VertexId {
        VertexId::Int(n)
    }

    #[test]
    fn degree_sum_on_path() {
        let net = build_network(&[(int(0), int(1), 1.0), (int(1), int(2), 1.0)], int(0)).unwrap();
        assert_eq!(net.total_conductance(int(1)), 2.0);
    }

    #[test]
    fn parallel_edges_merge() {
        let net = build_network(&[(int(0), int(1), 1.0), (int(0), int(1), 2.0)], int(0)).unwrap();
        assert_eq!(net.neighbors(int(0)), vec![(int(1), 3.0)]);
        assert_eq!(net.explicit_edges().unwrap().len(), 1);
    }

    #[test]
    fn construction_errors() {
        let e = build_network(&[(int(0), int(1), 1.0), (int(2), int(3), 1.0)], int(0));
        assert_eq!(e.unwrap_err(), Error::Disconnected { unreached: 2 });
        assert!(matches!(build_network(&[(int(0), int(1), 0.0)], int(0)), Err(Error::NonPositiveConductance { .. })));
        assert!(matches!(build_network(&[(int(0), int(1), f64::NAN)], int(0)), Err(Error::NonPositiveConductance { .. })));
        assert_eq!(build_network(&[(int(1), int(1), 1.0)], int(1)).unwrap_err(), Error::SelfLoop("1".into()));
        assert_eq!(build_network(&[(int(0), int(1), 1.0)], int(7)).unwrap_err(), Error::RootAbsent("7".into()));
        assert_eq!(build_network(&[], int(0)).unwrap_err(), Error::EmptyNetwork);
    }

    #[test]
    fn generated_degrees() {
        let grid = generate(GeneratorSpec::Grid2d, None).unwrap();
        assert_eq!(grid.total_conductance(grid.root()), 4.0);
        let line = generate(GeneratorSpec::line(), None).unwrap();
        for n in -5..5 {
            assert_eq!(line.total_conductance(int(n)), 2.0);
        }
        let tree = generate(GeneratorSpec::Tree { branching: 2, lambda: 0.5 }, None).unwrap();
        assert_eq!(tree.total_conductance(tree.root()), 1.0);
        let ladder = generate(GeneratorSpec::Ladder, None).unwrap();
        assert_eq!(ladder.total_conductance(VertexId::Pair(3, 1)), 3.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(GeneratorSpec::Tree { branching: 0, lambda: 0.5 }, None).is_err());
        assert!(generate(GeneratorSpec::Tree { branching: 2, lambda: -1.0 }, None).is_err());
        assert!(generate(GeneratorSpec::RandomConductanceGrid { seed: 1, low: 2.0, high: 1.0 }, None).is_err());
        assert!(generate(GeneratorSpec::Ladder, Some(VertexId::Pair(0, 2))).is_err());
        assert!(generate(GeneratorSpec::line(), Some(VertexId::Pair(0, 0))).is_err());
    }

    #[test]
    fn random_grid_is_symmetric_and_deterministic() {
        let spec = GeneratorSpec::RandomConductanceGrid { seed: 42, low: 0.5, high: 2.0 };
        let net = generate(spec.clone(), None).unwrap();
        let again = generate(spec, None).unwrap();
        for x in -3..3 {
            for y in -3..3 {
                let v = VertexId::Pair(x, y);
                assert_eq!(net.neighbors(v), again.neighbors(v));
                for (u, c) in net.neighbors(v) {
                    let back = net.neighbors(u).into_iter().find(|(w, _)| *w == v).unwrap().1;
                    assert_eq!(c, back);
                    assert!((0.5..=2.0).contains(&c));
                }
            }
        }
    }

    #[test]
    fn labels_round_trip() {
        for v in [int(-3), VertexId::Pair(-2, 5), VertexId::Tree { level: 4, index: 7 }] {
            assert_eq!(v.to_string().parse::<VertexId>().unwrap(), v);
        }
        assert_eq!(VertexId::Pair(-2, 5).to_string(), "(-2,5)");
        assert!("x1".parse::<VertexId>().is_err());
        assert!(int(10) < int(9), "order is lexicographic on labels");
    }

    #[test]
    fn random_networks_are_connected_and_small() {
        for i in 0..20 {
            let net = random_network(42, i, 60);
            assert_eq!(net.vertex_count(), Some(60));
        }
    }
}
