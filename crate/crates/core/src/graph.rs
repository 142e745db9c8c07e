//! The bipartite directed measurement graph and the state-vector layout.
//!
//! The graph `G = (V, E)` has `M` X-nodes (sensor extrinsics) and `P` Y-nodes
//! (target poses). Each directed edge `(j, k)` carries the set `D_e` of all
//! measurement pairs relating `X_j` and `Y_k`; the graph is simple by
//! construction (one edge per node pair, holding every observation).
//!
//! [`StateLayout`] is the single source of truth for how the joint state
//! `[t_X1..t_XM, t_Y1..t_YP, α, r_X1..r_XM, r_Y1..r_YP]` is packed into a
//! vector of dimension `12(M+P)+1`. Rotations are vectorized column-major.

use crate::liegroups::Pose;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node index ({j}, {k}) out of range for graph with M={m}, P={p}")]
    IndexOutOfRange { j: usize, k: usize, m: usize, p: usize },
    #[error("measurement pair has invalid weights (sigma={sigma}, kappa={kappa})")]
    InvalidWeights { sigma: f64, kappa: f64 },
    #[error("edge ({0}, {1}) has an empty measurement list")]
    EmptyEdge(usize, usize),
}

/// One `(A, B, σ, κ)` observation tuple.
///
/// `sigma` is the standard deviation (meters) of the translation of `B`;
/// `kappa` is the Langevin concentration of its rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementPair {
    pub a: Pose,
    pub b: Pose,
    pub sigma: f64,
    pub kappa: f64,
}

impl MeasurementPair {
    pub fn new(a: Pose, b: Pose, sigma: f64, kappa: f64) -> Result<Self, GraphError> {
        if !(sigma > 0.0) || !(kappa > 0.0) || !sigma.is_finite() || !kappa.is_finite() {
            return Err(GraphError::InvalidWeights { sigma, kappa });
        }
        Ok(Self { a, b, sigma, kappa })
    }
}

/// Bipartite measurement graph. Edges are kept in a sorted map so that
/// iteration (and therefore every assembly pass) is independent of insertion
/// order.
#[derive(Debug, Clone, Default)]
pub struct ProblemGraph {
    num_x: usize,
    num_y: usize,
    edges: BTreeMap<(usize, usize), Vec<MeasurementPair>>,
}

impl ProblemGraph {
    pub fn new(num_x: usize, num_y: usize) -> Self {
        Self { num_x, num_y, edges: BTreeMap::new() }
    }

    pub fn num_x(&self) -> usize {
        self.num_x
    }

    pub fn num_y(&self) -> usize {
        self.num_y
    }

    /// Appends `pair` to the edge `(j, k)`, creating the edge if absent.
    pub fn add_measurement(
        &mut self,
        j: usize,
        k: usize,
        pair: MeasurementPair,
    ) -> Result<(), GraphError> {
        if j >= self.num_x || k >= self.num_y {
            return Err(GraphError::IndexOutOfRange { j, k, m: self.num_x, p: self.num_y });
        }
        self.edges.entry((j, k)).or_default().push(pair);
        Ok(())
    }

    /// Edges in sorted `(j, k)` order.
    pub fn edges(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<MeasurementPair>)> {
        self.edges.iter()
    }

    pub fn edge(&self, j: usize, k: usize) -> Option<&Vec<MeasurementPair>> {
        self.edges.get(&(j, k))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    /// True iff the undirected version of the graph connects all `M + P` nodes.
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.num_x + self.num_y;
        if n == 0 {
            return false;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(j, k) in self.edges.keys() {
            let y = self.num_x + k;
            adj[j].push(y);
            adj[y].push(j);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 0;
        while let Some(v) = stack.pop() {
            count += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout { num_x: self.num_x, num_y: self.num_y }
    }

    /// Errors if any edge holds an empty measurement list.
    pub fn validate_edges(&self) -> Result<(), GraphError> {
        for (&(j, k), pairs) in &self.edges {
            if pairs.is_empty() {
                return Err(GraphError::EmptyEdge(j, k));
            }
        }
        Ok(())
    }
}

/// A variable block in the packed state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBlock {
    /// Translation of `X_j` (3 entries).
    TX(usize),
    /// Translation of `Y_k` (3 entries).
    TY(usize),
    /// The scale (monocular) or homogenization (standard) slot, 1 entry.
    Alpha,
    /// Column-major vectorized rotation of `X_j` (9 entries).
    RX(usize),
    /// Column-major vectorized rotation of `Y_k` (9 entries).
    RY(usize),
}

/// Offsets of every variable block in the full state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub num_x: usize,
    pub num_y: usize,
}

impl StateLayout {
    pub fn num_nodes(&self) -> usize {
        self.num_x + self.num_y
    }

    /// Full state dimension `12(M+P) + 1`.
    pub fn dim(&self) -> usize {
        12 * self.num_nodes() + 1
    }

    /// Stacked rotation dimension `9(M+P)`.
    pub fn rot_dim(&self) -> usize {
        9 * self.num_nodes()
    }

    /// Stacked translation dimension `3(M+P)`.
    pub fn trans_dim(&self) -> usize {
        3 * self.num_nodes()
    }

    pub fn t_x(&self, j: usize) -> usize {
        debug_assert!(j < self.num_x);
        3 * j
    }

    pub fn t_y(&self, k: usize) -> usize {
        debug_assert!(k < self.num_y);
        3 * (self.num_x + k)
    }

    pub fn alpha(&self) -> usize {
        3 * self.num_nodes()
    }

    pub fn r_x(&self, j: usize) -> usize {
        debug_assert!(j < self.num_x);
        self.alpha() + 1 + 9 * j
    }

    pub fn r_y(&self, k: usize) -> usize {
        debug_assert!(k < self.num_y);
        self.alpha() + 1 + 9 * (self.num_x + k)
    }

    /// Offset of rotation block `l` where X blocks come first, then Y blocks.
    pub fn r_block(&self, l: usize) -> usize {
        debug_assert!(l < self.num_nodes());
        self.alpha() + 1 + 9 * l
    }

    /// Offset within the *rotation-only* vector of dimension `9(M+P)`.
    pub fn rot_only_block(&self, l: usize) -> usize {
        debug_assert!(l < self.num_nodes());
        9 * l
    }

    pub fn offset_of(&self, block: VarBlock) -> usize {
        match block {
            VarBlock::TX(j) => self.t_x(j),
            VarBlock::TY(k) => self.t_y(k),
            VarBlock::Alpha => self.alpha(),
            VarBlock::RX(j) => self.r_x(j),
            VarBlock::RY(k) => self.r_y(k),
        }
    }

    /// Inverse of [`offset_of`]: the block containing `offset`.
    pub fn block_at(&self, offset: usize) -> Option<VarBlock> {
        let a = self.alpha();
        if offset < a {
            let node = offset / 3;
            return Some(if node < self.num_x {
                VarBlock::TX(node)
            } else {
                VarBlock::TY(node - self.num_x)
            });
        }
        if offset == a {
            return Some(VarBlock::Alpha);
        }
        if offset < self.dim() {
            let node = (offset - a - 1) / 9;
            return Some(if node < self.num_x {
                VarBlock::RX(node)
            } else {
                VarBlock::RY(node - self.num_x)
            });
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroups::Pose;

    fn pair() -> MeasurementPair {
        MeasurementPair::new(Pose::identity(), Pose::identity(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn add_measurement_bookkeeping() {
        let mut g = ProblemGraph::new(1, 1);
        g.add_measurement(0, 0, pair()).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge(0, 0).unwrap().len(), 1);
        g.add_measurement(0, 0, pair()).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge(0, 0).unwrap().len(), 2);

        let mut g = ProblemGraph::new(2, 2);
        g.add_measurement(0, 0, pair()).unwrap();
        g.add_measurement(0, 0, pair()).unwrap();
        g.add_measurement(1, 1, pair()).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edge(0, 0).unwrap().len(), 2);
        assert_eq!(g.edge(1, 1).unwrap().len(), 1);
        assert!(g.add_measurement(2, 0, pair()).is_err());
    }

    #[test]
    fn weak_connectivity() {
        let mut g = ProblemGraph::new(1, 1);
        g.add_measurement(0, 0, pair()).unwrap();
        assert!(g.is_weakly_connected());

        let mut g = ProblemGraph::new(2, 1);
        g.add_measurement(0, 0, pair()).unwrap();
        assert!(!g.is_weakly_connected());

        // The three-edge topology X1→Y1, X2→Y2, X1→Y2 is connected.
        let mut g = ProblemGraph::new(2, 2);
        g.add_measurement(0, 0, pair()).unwrap();
        g.add_measurement(1, 1, pair()).unwrap();
        g.add_measurement(0, 1, pair()).unwrap();
        assert!(g.is_weakly_connected());
    }

    #[test]
    fn layout_offsets() {
        let l = StateLayout { num_x: 1, num_y: 1 };
        assert_eq!(l.dim(), 25);
        assert_eq!(l.alpha(), 6);
        assert_eq!(l.r_x(0), 7);
        assert_eq!(l.r_y(0), 16);

        let l = StateLayout { num_x: 4, num_y: 1 };
        assert_eq!(l.dim(), 61);

        let l = StateLayout { num_x: 1, num_y: 8 };
        assert_eq!(l.r_y(7) + 9, 109);
        assert_eq!(l.dim(), 109);
    }

    #[test]
    fn offset_block_round_trip() {
        let l = StateLayout { num_x: 2, num_y: 3 };
        for off in 0..l.dim() {
            let block = l.block_at(off).unwrap();
            let base = l.offset_of(block);
            let width = match block {
                VarBlock::Alpha => 1,
                VarBlock::TX(_) | VarBlock::TY(_) => 3,
                VarBlock::RX(_) | VarBlock::RY(_) => 9,
            };
            assert!(base <= off && off < base + width);
        }
        assert_eq!(l.block_at(l.dim()), None);
    }
}
