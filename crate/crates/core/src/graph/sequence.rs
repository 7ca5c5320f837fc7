use std::borrow::Cow;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{DirectedGraphSnapshot, MixingMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

const RANDOM_RETRY_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    /// The same graph every round.
    Static(DirectedGraphSnapshot),
    /// `snapshots[t mod len]`.
    Cyclic(Vec<DirectedGraphSnapshot>),
    /// Each ordered pair is an edge independently with `edge_probability`,
    /// drawn per round from `(seed, t)`. `window` is the declared `B`.
    SeededRandom {
        m: usize,
        edge_probability: f64,
        window: usize,
    },
}

/// A deterministic sequence of per-round directed graphs `𝒢(t)`.
#[derive(Debug, Clone)]
pub struct GraphSequence {
    kind: GraphKind,
    seed: u64,
    m: usize,
    cached: Vec<MixingMatrix>,
}

impl GraphSequence {
    pub fn new(kind: GraphKind, seed: u64) -> Result<Self> {
        let (m, cached) = match &kind {
            GraphKind::Static(g) => (g.node_count(), vec![MixingMatrix::from_snapshot(g)]),
            GraphKind::Cyclic(list) => {
                let first = list
                    .first()
                    .ok_or_else(|| Error::invalid("cyclic sequence needs at least one snapshot"))?;
                let m = first.node_count();
                if list.iter().any(|g| g.node_count() != m) {
                    return Err(Error::invalid("cyclic snapshots disagree on node count"));
                }
                (m, list.iter().map(MixingMatrix::from_snapshot).collect())
            }
            GraphKind::SeededRandom {
                m,
                edge_probability,
                window,
            } => {
                if *m == 0 || !(0.0..=1.0).contains(edge_probability) || *window == 0 {
                    return Err(Error::invalid(
                        "random sequence needs m ≥ 1, edge probability in [0, 1], window ≥ 1",
                    ));
                }
                (*m, Vec::new())
            }
        };
        Ok(Self {
            kind,
            seed,
            m,
            cached,
        })
    }

    /// Random sequence whose `window`-unions are strongly connected on
    /// `[0, horizon)`. Redraws with successive seeds, at most 100 times.
    pub fn seeded_random(
        m: usize,
        edge_probability: f64,
        window: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let kind = GraphKind::SeededRandom {
            m,
            edge_probability,
            window,
        };
        for attempt in 0..RANDOM_RETRY_CAP as u64 {
            let seq = Self::new(kind.clone(), seed.wrapping_add(attempt))?;
            if is_uniformly_strongly_connected(&seq, window, horizon.max(window)) {
                return Ok(seq);
            }
        }
        Err(Error::NotConnected {
            window,
            attempts: RANDOM_RETRY_CAP,
        })
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    /// Seed actually used (after any redraws).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Repetition period when the sequence is periodic.
    pub fn period(&self) -> Option<usize> {
        match &self.kind {
            GraphKind::Static(_) => Some(1),
            GraphKind::Cyclic(list) => Some(list.len()),
            GraphKind::SeededRandom { .. } => None,
        }
    }

    pub fn snapshot(&self, t: usize) -> Cow<'_, DirectedGraphSnapshot> {
        match &self.kind {
            GraphKind::Static(g) => Cow::Borrowed(g),
            GraphKind::Cyclic(list) => Cow::Borrowed(&list[t % list.len()]),
            GraphKind::SeededRandom {
                m,
                edge_probability,
                ..
            } => {
                let mut rng = stream(self.seed, Stream::Round(t as u64));
                let mut edges = Vec::new();
                for i in 0..*m {
                    for j in 0..*m {
                        if i != j && rng.random_bool(*edge_probability) {
                            edges.push((i, j));
                        }
                    }
                }
                Cow::Owned(DirectedGraphSnapshot::new(*m, edges).expect("indices in range"))
            }
        }
    }

    pub fn mixing(&self, t: usize) -> Cow<'_, MixingMatrix> {
        match self.period() {
            Some(p) => Cow::Borrowed(&self.cached[t % p]),
            None => Cow::Owned(MixingMatrix::from_snapshot(&self.snapshot(t))),
        }
    }
}

/// Static digraph in which every node has exactly `k` out-neighbors besides
/// itself.
///
/// A seed-driven relabeling is laid on a ring and every node sends to its ring
/// successor, which makes the graph strongly connected; the remaining `k − 1`
/// targets are drawn uniformly without replacement. In-degrees therefore vary
/// and the mixing matrix is column- but not row-stochastic (for `k < m − 1`).
pub fn k_out_neighbors_graph(m: usize, k: usize, seed: u64) -> Result<GraphSequence> {
    if m < 2 || k == 0 || k > m - 1 {
        return Err(Error::invalid(format!(
            "k-out graph needs 1 ≤ k ≤ m − 1 (m = {m}, k = {k})"
        )));
    }
    let mut rng = stream(seed, Stream::Graph);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::with_capacity(m * k);
    for r in 0..m {
        let from = order[r];
        let succ = order[(r + 1) % m];
        edges.push((from, succ));
        // Candidates: everything except self and the ring successor.
        let candidates: Vec<usize> = (0..m).filter(|&j| j != from && j != succ).collect();
        for idx in index::sample(&mut rng, candidates.len(), k - 1) {
            edges.push((from, candidates[idx]));
        }
    }
    GraphSequence::new(
        GraphKind::Static(DirectedGraphSnapshot::new(m, edges)?),
        seed,
    )
}

/// Checks that the union over every complete window `[kB, (k+1)B − 1]` inside
/// `[0, horizon)` is strongly connected. Returns `false` when `horizon < B`.
pub fn is_uniformly_strongly_connected(seq: &GraphSequence, window: usize, horizon: usize) -> bool {
    if window == 0 || horizon < window {
        return false;
    }
    let windows = horizon / window;
    if let Some(p) = seq.period() {
        // Window unions repeat with period lcm(p, B)/B windows.
        let distinct = p / gcd(p, window);
        return (0..distinct.min(windows)).all(|k| window_union(seq, k, window).is_strongly_connected());
    }
    (0..windows).all(|k| window_union(seq, k, window).is_strongly_connected())
}

fn window_union(seq: &GraphSequence, k: usize, window: usize) -> DirectedGraphSnapshot {
    let start = k * window;
    let mut acc = seq.snapshot(start).into_owned();
    for t in start + 1..start + window {
        acc = acc.union(&seq.snapshot(t));
    }
    acc
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating() -> GraphSequence {
        let a = DirectedGraphSnapshot::new(2, [(0, 1)]).unwrap();
        let b = DirectedGraphSnapshot::new(2, [(1, 0)]).unwrap();
        GraphSequence::new(GraphKind::Cyclic(vec![a, b]), 0).unwrap()
    }

    #[test]
    fn static_and_cyclic_snapshots() {
        let ring = k_out_neighbors_graph(6, 1, 3).unwrap();
        assert_eq!(ring.snapshot(7), ring.snapshot(0));
        let seq = alternating();
        assert_eq!(seq.snapshot(5), seq.snapshot(1));
        assert_ne!(seq.snapshot(5), seq.snapshot(0));
    }

    #[test]
    fn random_snapshots_are_deterministic() {
        let seq = GraphSequence::new(
            GraphKind::SeededRandom {
                m: 8,
                edge_probability: 0.3,
                window: 2,
            },
            11,
        )
        .unwrap();
        assert_eq!(seq.snapshot(3), seq.snapshot(3));
        assert_ne!(seq.snapshot(3), seq.snapshot(4));
    }

    #[test]
    fn seeded_random_passes_its_window_check() {
        let seq = GraphSequence::seeded_random(10, 0.15, 3, 60, 5).unwrap();
        assert!(is_uniformly_strongly_connected(&seq, 3, 60));
        assert!(GraphSequence::seeded_random(4, 0.0, 2, 10, 0).is_err());
    }

    #[test]
    fn alternating_pair_needs_window_two() {
        let seq = alternating();
        assert!(is_uniformly_strongly_connected(&seq, 2, 10));
        assert!(!is_uniformly_strongly_connected(&seq, 1, 10));
    }

    #[test]
    fn edgeless_graph_is_never_connected() {
        let seq = GraphSequence::new(GraphKind::Static(DirectedGraphSnapshot::empty(3).unwrap()), 0)
            .unwrap();
        for b in 1..5 {
            assert!(!is_uniformly_strongly_connected(&seq, b, 20));
        }
    }

    #[test]
    fn k_out_degrees_and_shapes() {
        let g = k_out_neighbors_graph(50, 4, 1).unwrap();
        let snap = g.snapshot(0);
        assert!((0..50).all(|i| snap.out_degree(i) == 5));
        assert!(is_uniformly_strongly_connected(&g, 1, 1));

        let c = k_out_neighbors_graph(3, 1, 9).unwrap();
        let snap = c.snapshot(0);
        assert_eq!(snap.edge_count(), 3);
        assert!(snap.is_strongly_connected());

        let full = k_out_neighbors_graph(5, 4, 2).unwrap();
        assert_eq!(full.snapshot(0).edge_count(), 20);

        assert!(k_out_neighbors_graph(5, 5, 0).is_err());
        assert!(k_out_neighbors_graph(5, 0, 0).is_err());
    }

    #[test]
    fn k_out_in_degrees_vary() {
        let g = k_out_neighbors_graph(50, 4, 1).unwrap();
        let snap = g.snapshot(0);
        let indeg: Vec<usize> = (0..50).map(|i| snap.in_neighbors(i).len()).collect();
        assert!(indeg.iter().any(|&d| d != 5));
    }
}
