//! Coupling structure: symmetric local adjacency plus per-node cue gains.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling values at or above this trigger the weak-coupling advisory.
pub const WEAK_COUPLING_LIMIT: f64 = 0.1;

/// Seed and radius of the shipped desk-scale topology.
pub const DESK_SEED: u64 = 1;
pub const DESK_NODES: usize = 18;
pub const DESK_RADIUS: f64 = 0.3;

const DESK_JSON: &str = include_str!("../presets/desk18.json");

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    global_gains: Vec<f64>,
    local_strength: f64,
    period: f64,
    natural_freq_offsets: Vec<f64>,
    positions: Option<Vec<[f64; 2]>>,
}

/// JSON form: `{"n":…, "edges":[[i,j],…], "g":[…], "l":…, "T":…}`.
///
/// An edge may carry an explicit third entry `a_ij ∈ {0, 1}`; listing the same
/// pair twice with different values is rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub n: usize,
    pub edges: Vec<Vec<usize>>,
    pub g: Vec<f64>,
    pub l: f64,
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl Topology {
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        global_gains: Vec<f64>,
        local_strength: f64,
        period: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("n must be positive".into()));
        }
        if global_gains.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: global_gains.len(),
            });
        }
        if let Some(g) = global_gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidTopology(format!("global gain {g} must be ≥ 0")));
        }
        if !(local_strength.is_finite() && local_strength >= 0.0) {
            return Err(Error::InvalidTopology(format!(
                "local strength {local_strength} must be ≥ 0"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidTopology(format!("period {period} must be > 0")));
        }
        let mut set = std::collections::BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        let topo = Self {
            n,
            edges,
            neighbors,
            global_gains,
            local_strength,
            period,
            natural_freq_offsets: vec![0.0; n],
            positions: None,
        };
        topo.warn_if_strong();
        Ok(topo)
    }

    fn warn_if_strong(&self) {
        if self.local_strength >= WEAK_COUPLING_LIMIT
            || self.global_gains.iter().any(|&g| g >= WEAK_COUPLING_LIMIT)
        {
            log::warn!(
                "coupling is not weak (l = {}, max g = {}); the averaged phase model may be inaccurate",
                self.local_strength,
                self.max_gain()
            );
        }
    }

    pub fn with_natural_freq_offsets(mut self, delta: Vec<f64>) -> Result<Self> {
        if delta.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: delta.len(),
            });
        }
        self.natural_freq_offsets = delta;
        Ok(self)
    }

    /// Same graph and period with new coupling values.
    pub fn with_coupling(&self, global_gains: Vec<f64>, local_strength: f64) -> Result<Self> {
        let mut t = Self::new(
            self.n,
            &self.edges,
            global_gains,
            local_strength,
            self.period,
        )?;
        t.natural_freq_offsets = self.natural_freq_offsets.clone();
        t.positions = self.positions.clone();
        Ok(t)
    }

    pub fn with_period(&self, period: f64) -> Result<Self> {
        let mut t = Self::new(
            self.n,
            &self.edges,
            self.global_gains.clone(),
            self.local_strength,
            period,
        )?;
        t.natural_freq_offsets = self.natural_freq_offsets.clone();
        t.positions = self.positions.clone();
        Ok(t)
    }

    pub fn with_edge(&self, i: usize, j: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.push((i, j));
        let mut t = Self::new(
            self.n,
            &edges,
            self.global_gains.clone(),
            self.local_strength,
            self.period,
        )?;
        t.natural_freq_offsets = self.natural_freq_offsets.clone();
        Ok(t)
    }

    pub fn from_doc(doc: TopologyDoc) -> Result<Self> {
        let mut seen: BTreeMap<(usize, usize), u8> = BTreeMap::new();
        for e in &doc.edges {
            let (i, j, a) = match e.as_slice() {
                [i, j] => (*i, *j, 1),
                [i, j, a] if *a <= 1 => (*i, *j, *a as u8),
                _ => {
                    return Err(Error::InvalidTopology(format!(
                        "edge {e:?} must be [i, j] or [i, j, a] with a ∈ {{0, 1}}"
                    )))
                }
            };
            let key = (i.min(j), i.max(j));
            if let Some(prev) = seen.insert(key, a) {
                if prev != a {
                    return Err(Error::InvalidTopology(format!(
                        "conflicting entries for edge ({}, {})",
                        key.0, key.1
                    )));
                }
            }
        }
        let edges: Vec<(usize, usize)> = seen
            .into_iter()
            .filter(|&(_, a)| a == 1)
            .map(|(k, _)| k)
            .collect();
        let mut topo = Self::new(doc.n, &edges, doc.g, doc.l, doc.period)?;
        if let Some(delta) = doc.delta {
            topo = topo.with_natural_freq_offsets(delta)?;
        }
        if let Some(p) = doc.positions {
            if p.len() != topo.n {
                return Err(Error::DimensionMismatch {
                    expected: topo.n,
                    actual: p.len(),
                });
            }
            topo.positions = Some(p);
        }
        Ok(topo)
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| vec![i, j]).collect(),
            g: self.global_gains.clone(),
            l: self.local_strength,
            period: self.period,
            delta: self
                .natural_freq_offsets
                .iter()
                .any(|&d| d != 0.0)
                .then(|| self.natural_freq_offsets.clone()),
            positions: self.positions.clone(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(s)?)
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Random geometric graph on the unit square: nodes within `radius` of
    /// each other are coupled. Redraws (advancing the same stream) until the
    /// graph is connected.
    pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let dx = pos[i][0] - pos[j][0];
                    let dy = pos[i][1] - pos[j][1];
                    if dx.hypot(dy) <= radius {
                        edges.push((i, j));
                    }
                }
            }
            let mut topo = Self::new(n, &edges, vec![0.0; n], 0.0, 1.0)?;
            if topo.is_connected() {
                topo.positions = Some(pos);
                return Ok(topo);
            }
        }
        Err(Error::InvalidTopology(format!(
            "no connected geometric graph with n = {n}, r = {radius}"
        )))
    }

    /// The shipped 18-node desk-scale network (T = 1 s, all couplings zero).
    pub fn desk() -> Self {
        Self::from_json_str(DESK_JSON).expect("shipped desk topology is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn global_gains(&self) -> &[f64] {
        &self.global_gains
    }

    pub fn max_gain(&self) -> f64 {
        self.global_gains.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_gain(&self) -> f64 {
        self.global_gains
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn local_strength(&self) -> f64 {
        self.local_strength
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn natural_freq_offsets(&self) -> &[f64] {
        &self.natural_freq_offsets
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// Dense 0/1 adjacency `a_ij`.
    pub fn adjacency(&self) -> DMatrix<i32> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1;
            a[(j, i)] = 1;
        }
        a
    }

    /// Signed node-edge incidence `B` (N×M), one column per edge `(i, j)`,
    /// `i < j`, with `+1` at `i` and `-1` at `j`.
    pub fn incidence_matrix(&self) -> DMatrix<i32> {
        let mut b = DMatrix::zeros(self.n, self.edges.len());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            b[(i, e)] = 1;
            b[(j, e)] = -1;
        }
        b
    }

    /// Graph Laplacian `L = D - A`, built from the adjacency (not from `B`).
    pub fn laplacian(&self) -> DMatrix<i32> {
        let mut l = -self.adjacency();
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as i32;
        }
        l
    }

    pub fn laplacian_f64(&self) -> DMatrix<f64> {
        self.laplacian().map(f64::from)
    }

    pub fn gain_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.global_gains))
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Topology {
        Topology::new(3, &[(0, 1), (1, 2)], vec![0.0; 3], 0.01, 1.0).unwrap()
    }

    #[test]
    fn single_edge_incidence() {
        let t = Topology::new(2, &[(1, 0)], vec![0.0; 2], 0.0, 1.0).unwrap();
        let b = t.incidence_matrix();
        assert_eq!(b.shape(), (2, 1));
        assert_eq!((b[(0, 0)], b[(1, 0)]), (1, -1));
    }

    #[test]
    fn empty_graph_has_no_columns() {
        let t = Topology::new(4, &[], vec![0.0; 4], 0.0, 1.0).unwrap();
        assert_eq!(t.incidence_matrix().shape(), (4, 0));
        assert!(!t.is_connected());
    }

    #[test]
    fn path_laplacian() {
        let t = path3();
        let expected = DMatrix::from_row_slice(3, 3, &[1, -1, 0, -1, 2, -1, 0, -1, 1]);
        assert_eq!(t.laplacian(), expected);
        let b = t.incidence_matrix();
        assert_eq!(&b * b.transpose(), expected);
        assert!(t.is_connected());
    }

    #[test]
    fn disjoint_edges_are_disconnected() {
        let t = Topology::new(4, &[(0, 1), (2, 3)], vec![0.0; 4], 0.0, 1.0).unwrap();
        assert!(!t.is_connected());
    }

    #[test]
    fn single_node_is_connected() {
        let t = Topology::new(1, &[], vec![0.01], 0.0, 1.0).unwrap();
        assert!(t.is_connected());
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(Topology::new(2, &[(0, 0)], vec![0.0; 2], 0.0, 1.0).is_err());
        assert!(Topology::new(2, &[(0, 2)], vec![0.0; 2], 0.0, 1.0).is_err());
        assert!(Topology::new(2, &[], vec![0.0; 3], 0.0, 1.0).is_err());
        assert!(Topology::new(2, &[], vec![-0.1, 0.0], 0.0, 1.0).is_err());
        assert!(Topology::new(2, &[], vec![0.0; 2], -1.0, 1.0).is_err());
        assert!(Topology::new(2, &[], vec![0.0; 2], 0.0, 0.0).is_err());
    }

    #[test]
    fn json_loader() {
        let t = Topology::from_json_str(
            r#"{"n":3,"edges":[[0,1],[2,1],[1,0]],"g":[0.01,0,0],"l":0.01,"T":1.0}"#,
        )
        .unwrap();
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
        assert!(Topology::from_json_str(
            r#"{"n":3,"edges":[[0,1,1],[1,0,0]],"g":[0,0,0],"l":0.01,"T":1.0}"#
        )
        .is_err());
        assert!(Topology::from_json_str(
            r#"{"n":2,"edges":[[0,1]],"g":[0,0],"l":0.01,"T":1.0,"bogus":true}"#
        )
        .is_err());
        let round = Topology::from_doc(t.to_doc()).unwrap();
        assert_eq!(round, t);
    }

    #[test]
    fn desk_topology_is_connected_and_reproducible() {
        let desk = Topology::desk();
        assert_eq!(desk.n(), DESK_NODES);
        assert!(desk.is_connected());
        let regenerated = Topology::random_geometric(DESK_NODES, DESK_RADIUS, DESK_SEED).unwrap();
        assert_eq!(regenerated.edges(), desk.edges());
    }
}
