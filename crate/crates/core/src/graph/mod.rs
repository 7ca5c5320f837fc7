//! Directed communication graphs, their column-stochastic mixing matrices and
//! empirical checks of the backward-product contraction.
//!
//! Nodes are 0-based internally. Every node has an implicit self-loop: edge
//! lists never contain `(i, i)`, yet `i` is always counted in its own in- and
//! out-neighborhoods. The text export uses 1-based indices.

mod mixing;
mod phi;
mod sequence;

pub use mixing::{matrix_product, MixingMatrix};
pub use phi::{estimate_phi_decay, product_deviation, PhiEstimate, PHI_DEPTH_PER_NODE};
pub use sequence::{
    is_uniformly_strongly_connected, k_out_neighbors_graph, GraphKind, GraphSequence,
};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One round's directed graph. `(i, j)` means `i` can send to `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DirectedGraphSnapshot {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraphSnapshot {
    /// Builds a snapshot from 0-based edges. Self-loops are dropped (they are
    /// implicit); out-of-range endpoints are rejected; duplicates collapse.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= m || j >= m {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) out of range for {m} nodes"
                )));
            }
            if i != j {
                set.insert((i, j));
            }
        }
        Ok(Self { m, edges: set })
    }

    pub fn empty(m: usize) -> Result<Self> {
        Self::new(m, std::iter::empty())
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    /// Edges excluding the implicit self-loops, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from == to || self.edges.contains(&(from, to))
    }

    /// `N_i^out`, including `i`, ascending.
    pub fn out_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .range((i, 0)..(i + 1, 0))
            .map(|&(_, j)| j)
            .collect();
        let pos = out.partition_point(|&j| j < i);
        out.insert(pos, i);
        out
    }

    /// `N_i^in`, including `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        let mut inn: Vec<usize> = self
            .edges
            .iter()
            .filter(|&&(_, j)| j == i)
            .map(|&(k, _)| k)
            .collect();
        let pos = inn.partition_point(|&k| k < i);
        inn.insert(pos, i);
        inn
    }

    /// `d_i^out = |N_i^out|`, self-loop included.
    pub fn out_degree(&self, i: usize) -> usize {
        1 + self.edges.range((i, 0)..(i + 1, 0)).count()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![1; self.m];
        for &(i, _) in &self.edges {
            deg[i] += 1;
        }
        deg
    }

    /// Union with another snapshot on the same node set.
    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.m, other.m);
        Self {
            m: self.m,
            edges: self.edges.union(&other.edges).copied().collect(),
        }
    }

    /// True when every node reaches every other node.
    pub fn is_strongly_connected(&self) -> bool {
        let mut fwd = vec![Vec::new(); self.m];
        let mut bwd = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            fwd[i].push(j);
            bwd[j].push(i);
        }
        reaches_all(&fwd) && reaches_all(&bwd)
    }

    /// Edge list as text: one `i j` pair per line, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for &(i, j) in &self.edges {
            let _ = writeln!(s, "{} {}", i + 1, j + 1);
        }
        s
    }

    /// Parses the 1-based edge-list text produced by [`Self::to_edge_list`].
    pub fn from_edge_list(m: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                let v: usize = tok
                    .ok_or_else(|| Error::invalid(format!("line {}: expected two indices", lineno + 1)))?
                    .parse()
                    .map_err(|_| Error::invalid(format!("line {}: bad index", lineno + 1)))?;
                if v == 0 {
                    return Err(Error::invalid(format!("line {}: indices are 1-based", lineno + 1)));
                }
                Ok(v - 1)
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::invalid(format!("line {}: trailing tokens", lineno + 1)));
            }
            edges.push((i, j));
        }
        Self::new(m, edges)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let m = adj.len();
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == m
}
