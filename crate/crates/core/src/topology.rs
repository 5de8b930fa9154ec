//! Device graph, Metropolis–Hastings mixing matrix and its spectral mixing rate.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, Role};

const STOCHASTIC_TOL: f64 = 1e-12;
const GEOMETRIC_RETRIES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TopologyKind {
    Ring,
    Complete,
    /// Path graph `0 - 1 - ... - (m-1)`.
    Line,
    /// Uniform points in the unit square, linked when closer than `radius`.
    /// `None` picks a radius that is connected with high probability.
    RandomGeometric { radius: Option<f64> },
}

/// Undirected device network with a symmetric doubly stochastic mixing matrix.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    m: usize,
    weights: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    lambda: f64,
}

impl Topology {
    pub fn build(kind: TopologyKind, m: usize, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::arg(format!("topology needs at least 2 devices, got {m}")));
        }
        let edges: Vec<(usize, usize)> = match kind {
            TopologyKind::Ring if m == 2 => vec![(0, 1)],
            TopologyKind::Ring => (0..m).map(|i| (i, (i + 1) % m)).collect(),
            TopologyKind::Line => (0..m - 1).map(|i| (i, i + 1)).collect(),
            TopologyKind::Complete => (0..m)
                .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                .collect(),
            TopologyKind::RandomGeometric { radius } => random_geometric(m, radius, seed)?,
        };
        Self::from_edges(m, &edges)
    }

    /// Metropolis–Hastings weights `a_ij = 1 / (1 + max(deg_i, deg_j))` on edges.
    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if m < 2 {
            return Err(Error::arg(format!("topology needs at least 2 devices, got {m}")));
        }
        let mut adj = vec![vec![false; m]; m];
        for &(i, j) in edges {
            if i >= m || j >= m || i == j {
                return Err(Error::arg(format!("bad edge ({i}, {j}) for {m} devices")));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
        let mut weights = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if adj[i][j] {
                    weights[i * m + j] = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
                }
            }
        }
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| weights[i * m + j]).sum();
            weights[i * m + i] = 1.0 - off;
        }
        Self::from_weights(m, weights)
    }

    /// Validates an explicit mixing matrix (row-major).
    pub fn from_weights(m: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != m * m {
            return Err(Error::ShapeMismatch(format!(
                "mixing matrix has {} entries, expected {}",
                weights.len(),
                m * m
            )));
        }
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                let a = weights[i * m + j];
                if a != weights[j * m + i] {
                    return Err(Error::arg(format!("mixing matrix not symmetric at ({i}, {j})")));
                }
                if a < 0.0 || !a.is_finite() {
                    return Err(Error::arg(format!("negative or non-finite weight at ({i}, {j})")));
                }
                row += a;
            }
            if (row - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::arg(format!("row {i} sums to {row}, not 1")));
            }
            if weights[i * m + i] <= 0.0 {
                return Err(Error::arg(format!("self weight of device {i} must be positive")));
            }
        }
        let neighbors: Vec<Vec<usize>> = (0..m)
            .map(|i| (0..m).filter(|&j| j != i && weights[i * m + j] > 0.0).collect())
            .collect();
        let topo = Topology {
            m,
            lambda: 0.0,
            weights,
            neighbors,
        };
        if !topo.is_connected() {
            return Err(Error::ConstructionFailure("device graph is disconnected".into()));
        }
        let lambda = spectral_lambda(m, &topo.weights)?;
        Ok(Topology { lambda, ..topo })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// `max(|λ₂(A)|, |λ_m(A)|)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.m)
            .flat_map(|i| self.neighbors[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Devices within `hops` graph hops of `i`, including `i`, sorted.
    ///
    /// `hops = 2` is `{i} ∪ N_i ∪ (∪_{j∈N_i} N_j)`.
    pub fn ball(&self, i: usize, hops: usize) -> Result<Vec<usize>> {
        if i >= self.m {
            return Err(Error::arg(format!("unknown device {i}")));
        }
        let dist = self.distances_from(i);
        Ok((0..self.m).filter(|&j| dist[j] <= hops).collect())
    }

    pub fn diameter(&self) -> usize {
        (0..self.m)
            .map(|i| self.distances_from(i).into_iter().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    fn distances_from(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.m];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn is_connected(&self) -> bool {
        self.distances_from(0).iter().all(|&d| d != usize::MAX)
    }

    /// Plain-text form: a `devices m` header, then one `i j a_ij` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# mixing matrix edges: i j a_ij (self weights implied)\n");
        let _ = writeln!(out, "devices {}", self.m);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j} {:?}", self.weight(i, j));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut m: Option<usize> = None;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::arg(format!("topology line {}: `{line}`", lineno + 1));
            match fields.as_slice() {
                ["devices", n] => m = Some(n.parse().map_err(|_| bad())?),
                [i, j, a] => entries.push((
                    i.parse::<usize>().map_err(|_| bad())?,
                    j.parse::<usize>().map_err(|_| bad())?,
                    a.parse::<f64>().map_err(|_| bad())?,
                )),
                _ => return Err(bad()),
            }
        }
        let m = m.unwrap_or_else(|| entries.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
        let mut weights = vec![0.0; m * m];
        for &(i, j, a) in &entries {
            if i >= m || j >= m || i == j {
                return Err(Error::arg(format!("bad edge ({i}, {j}) for {m} devices")));
            }
            weights[i * m + j] = a;
            weights[j * m + i] = a;
        }
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| weights[i * m + j]).sum();
            weights[i * m + i] = 1.0 - off;
        }
        Self::from_weights(m, weights)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Short content hash used to tie policy files to the network they were built for.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Second-largest eigenvalue magnitude of a symmetric matrix with top eigenvalue 1.
pub fn spectral_lambda(m: usize, weights: &[f64]) -> Result<f64> {
    if weights.len() != m * m {
        return Err(Error::ShapeMismatch(format!("expected {}x{} matrix", m, m)));
    }
    for i in 0..m {
        for j in 0..i {
            if weights[i * m + j] != weights[j * m + i] {
                return Err(Error::arg(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let a = DMatrix::from_row_slice(m, m, weights);
    let mut eig: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    let second = eig.get(1).copied().unwrap_or(0.0).abs();
    let last = eig.last().copied().unwrap_or(0.0).abs();
    // Clean round-off so that exactly-zero spectra report exactly zero.
    let lambda = second.max(if m > 1 { last } else { 0.0 });
    Ok(if lambda < 1e-14 { 0.0 } else { lambda })
}

fn random_geometric(m: usize, radius: Option<f64>, seed: u64) -> Result<Vec<(usize, usize)>> {
    let r = radius.unwrap_or_else(|| {
        let mf = m as f64;
        (2.5 * mf.ln().max(1.0) / (std::f64::consts::PI * mf)).sqrt().min(1.5)
    });
    if !(r > 0.0) {
        return Err(Error::arg(format!("geometric radius must be positive, got {r}")));
    }
    let mut rng = rng::stream(seed, Role::Topology, m as u64, 0);
    for _ in 0..GEOMETRIC_RETRIES {
        let pts: Vec<(f64, f64)> = (0..m).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let mut edges = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                if (dx * dx + dy * dy).sqrt() <= r {
                    edges.push((i, j));
                }
            }
        }
        if connected(m, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::ConstructionFailure(format!(
        "no connected geometric graph with radius {r} after {GEOMETRIC_RETRIES} draws"
    )))
}

fn connected(m: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    (0..m).all(|i| find(&mut parent, i) == root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cyclic Jacobi rotations; independent of the nalgebra path.
    fn jacobi_eigenvalues(m: usize, a: &[f64]) -> Vec<f64> {
        let mut a = a.to_vec();
        for _sweep in 0..100 {
            let off: f64 = (0..m)
                .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * m + j].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..m {
                for q in p + 1..m {
                    let apq = a[p * m + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..m {
                        let akp = a[k * m + p];
                        let akq = a[k * m + q];
                        a[k * m + p] = c * akp - s * akq;
                        a[k * m + q] = s * akp + c * akq;
                    }
                    for k in 0..m {
                        let apk = a[p * m + k];
                        let aqk = a[q * m + k];
                        a[p * m + k] = c * apk - s * aqk;
                        a[q * m + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..m).map(|i| a[i * m + i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn oracle_lambda(t: &Topology) -> f64 {
        let ev = jacobi_eigenvalues(t.m(), t.weights());
        ev[1].abs().max(ev[t.m() - 1].abs())
    }

    fn bfs_ball(t: &Topology, i: usize, hops: usize) -> Vec<usize> {
        let mut frontier = vec![i];
        let mut seen = vec![false; t.m()];
        seen[i] = true;
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in t.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        (0..t.m()).filter(|&j| seen[j]).collect()
    }

    #[test]
    fn complete_two_is_uniform_with_zero_lambda() {
        let t = Topology::build(TopologyKind::Complete, 2, 0).unwrap();
        assert_eq!(t.weights(), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(t.lambda(), 0.0);
    }

    #[test]
    fn complete_three_has_zero_lambda() {
        let t = Topology::build(TopologyKind::Complete, 3, 0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.weight(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!(t.lambda() < 1e-12);
    }

    #[test]
    fn ring_four_lambda_matches_jacobi() {
        let t = Topology::build(TopologyKind::Ring, 4, 0).unwrap();
        assert!((t.weight(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.weight(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.weight(0, 2), 0.0);
        let oracle = oracle_lambda(&t);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert!((t.lambda() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ring_six_golden() {
        // Jacobi oracle gives 2/3 for the 6-ring with Metropolis weights.
        let t = Topology::build(TopologyKind::Ring, 6, 0).unwrap();
        let oracle = oracle_lambda(&t);
        assert!((oracle - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.lambda() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn balls() {
        let r5 = Topology::build(TopologyKind::Ring, 5, 0).unwrap();
        assert_eq!(r5.ball(0, 2).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(r5.ball(3, 0).unwrap(), vec![3]);
        let r8 = Topology::build(TopologyKind::Ring, 8, 0).unwrap();
        assert_eq!(r8.ball(0, 2).unwrap(), vec![0, 1, 2, 6, 7]);
        assert_eq!(r8.diameter(), 4);
        assert!(r8.ball(8, 1).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Topology::build(TopologyKind::Ring, 1, 0).is_err());
        assert!(matches!(
            Topology::from_edges(4, &[(0, 1), (2, 3)]),
            Err(Error::ConstructionFailure(_))
        ));
        assert!(spectral_lambda(2, &[0.5, 0.4, 0.5, 0.6]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = Topology::build(TopologyKind::RandomGeometric { radius: None }, 9, 3).unwrap();
        let back = Topology::from_text(&t.to_text()).unwrap();
        assert_eq!(back.edges(), t.edges());
        for (x, y) in back.weights().iter().zip(t.weights()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(back.hash(), t.hash());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn generated_topologies_are_valid(m in 2usize..14, seed in 0u64..10_000, kind in 0u8..4) {
            let kind = match kind {
                0 => TopologyKind::Ring,
                1 => TopologyKind::Complete,
                2 => TopologyKind::Line,
                _ => TopologyKind::RandomGeometric { radius: None },
            };
            let t = Topology::build(kind, m, seed).unwrap();
            for i in 0..m {
                let row: f64 = (0..m).map(|j| t.weight(i, j)).sum();
                prop_assert!((row - 1.0).abs() <= 1e-12);
                for j in 0..m {
                    prop_assert_eq!(t.weight(i, j), t.weight(j, i));
                    let linked = i == j || t.neighbors(i).contains(&j);
                    prop_assert_eq!(t.weight(i, j) > 0.0, linked);
                }
            }
            prop_assert!(t.lambda() < 1.0);
            prop_assert!((t.lambda() - oracle_lambda(&t)).abs() < 1e-9);
        }

        #[test]
        fn two_hop_ball_matches_bfs(m in 3usize..16, seed in 0u64..10_000) {
            let t = Topology::build(TopologyKind::RandomGeometric { radius: None }, m, seed).unwrap();
            for i in 0..m {
                prop_assert_eq!(t.ball(i, 2).unwrap(), bfs_ball(&t, i, 2));
                let mut prev = t.ball(i, 0).unwrap();
                prop_assert_eq!(&prev, &vec![i]);
                for h in 1..4 {
                    let cur = t.ball(i, h).unwrap();
                    prop_assert!(prev.iter().all(|d| cur.contains(d)));
                    prev = cur;
                }
            }
        }
    }
}
