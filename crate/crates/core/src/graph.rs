//! Directed communication topology.
//!
//! Nodes are dense `0..n` identifiers. An edge `from -> to` means `from`
//! may transmit to `to`, so `to` is an out-neighbor of `from` and `from` is
//! an in-neighbor of `to`. Every node keeps its out-neighbors in a fixed
//! priority order; the protocol walks that order round-robin when handing
//! off mass.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

/// Dense node identifier.
pub type NodeId = usize;

/// Rejection budget for [`generate_random_strongly_connected`].
pub const GENERATION_RETRY_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("a digraph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: NodeId, to: NodeId },
    #[error("edge {from} -> {to} references a node outside 0..{n}")]
    NodeOutOfRange { from: NodeId, to: NodeId, n: usize },
    #[error("edge probability {0} outside (0, 1]")]
    BadProbability(f64),
    #[error("no strongly connected G({n}, {p}) sample within {budget} draws")]
    GenerationFailed { n: usize, p: f64, budget: usize },
    #[error("out-order for node {node} is not a permutation of its out-neighbors")]
    BadOrder { node: NodeId },
    #[error("edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A directed edge; `from` transmits to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
}

/// Simple digraph (no self-loops, no parallel edges) with a per-node
/// out-edge priority order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    /// `out[j]` lists the out-neighbors of `j`; position `i` holds the
    /// neighbor with priority `i`.
    out: Vec<Vec<NodeId>>,
    /// `inc[j]` lists the in-neighbors of `j` in ascending id order.
    inc: Vec<Vec<NodeId>>,
}

impl Digraph {
    /// Builds a digraph from `from -> to` pairs. Out-neighbor priority
    /// follows the order edges are given in.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (from, to) in edges {
            if from >= n || to >= n {
                return Err(GraphError::NodeOutOfRange { from, to, n });
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge { from, to });
            }
            out[from].push(to);
            inc[to].push(from);
        }
        for list in &mut inc {
            list.sort_unstable();
        }
        Ok(Self { n, out, inc })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Out-neighbors of `j` in round-robin priority order.
    pub fn out_neighbors(&self, j: NodeId) -> &[NodeId] {
        &self.out[j]
    }

    /// In-neighbors of `j`, ascending.
    pub fn in_neighbors(&self, j: NodeId) -> &[NodeId] {
        &self.inc[j]
    }

    pub fn out_degree(&self, j: NodeId) -> usize {
        self.out[j].len()
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.out.get(from).is_some_and(|o| o.contains(&to))
    }

    /// Priority `P` that `from` assigns to its edge towards `to`.
    pub fn edge_order(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.out.get(from)?.iter().position(|&v| v == to)
    }

    /// All edges, grouped by sender and listed in priority order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| Edge { from, to }))
    }

    /// Union of in- and out-neighbors of `j`, ascending.
    pub fn neighbors(&self, j: NodeId) -> BTreeSet<NodeId> {
        self.out[j].iter().chain(&self.inc[j]).copied().collect()
    }

    /// Replaces the priority order of every node. `orders[j]` must be a
    /// permutation of the current out-neighbors of `j`.
    pub fn with_out_order(mut self, orders: Vec<Vec<NodeId>>) -> Result<Self, GraphError> {
        if orders.len() != self.n {
            return Err(GraphError::BadOrder {
                node: orders.len().min(self.n),
            });
        }
        for (j, order) in orders.iter().enumerate() {
            let mut a = order.clone();
            let mut b = self.out[j].clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(GraphError::BadOrder { node: j });
            }
        }
        self.out = orders;
        Ok(self)
    }

    /// Parses the edge-list text format: a header line `n m` followed by
    /// `m` lines `src dst`.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let (n, m) = parse_pair(hline, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines {
            edges.push(parse_pair(line, l)?);
        }
        if edges.len() != m {
            return Err(GraphError::Parse {
                line: hline,
                reason: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::from_edges(n, edges)
    }

    /// Renders the edge-list text format. Edges are written in priority
    /// order, so loading the output reproduces the same digraph.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edge_count());
        for e in self.edges() {
            let _ = writeln!(s, "{} {}", e.from, e.to);
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_edge_list(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_edge_list()).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn cycle(n: usize) -> Result<Self, GraphError> {
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Every ordered pair of distinct nodes is an edge.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Self::from_edges(
            n,
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
        )
    }

    /// Node 0 connected both ways to each of `leaves` leaves.
    pub fn bidirectional_star(leaves: usize) -> Result<Self, GraphError> {
        Self::from_edges(leaves + 1, (1..=leaves).flat_map(|l| [(0, l), (l, 0)]))
    }
}

fn parse_pair(line: usize, l: &str) -> Result<(usize, usize), GraphError> {
    let bad = |reason: String| GraphError::Parse { line, reason };
    let mut it = l.split_whitespace();
    let a = it.next().ok_or_else(|| bad("expected two integers".into()))?;
    let b = it.next().ok_or_else(|| bad("expected two integers".into()))?;
    if it.next().is_some() {
        return Err(bad("trailing tokens".into()));
    }
    let a = a.parse().map_err(|e| bad(format!("{a:?}: {e}")))?;
    let b = b.parse().map_err(|e| bad(format!("{b:?}: {e}")))?;
    Ok((a, b))
}

fn reaches_all(n: usize, start: NodeId, adj: &[Vec<NodeId>]) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

/// True iff every node reaches every other node along directed edges.
pub fn is_strongly_connected(g: &Digraph) -> bool {
    reaches_all(g.n, 0, &g.out) && reaches_all(g.n, 0, &g.inc)
}

/// Largest out-degree in the network.
pub fn max_out_degree(g: &Digraph) -> usize {
    g.out.iter().map(Vec::len).max().unwrap_or(0)
}

/// Directed Erdős–Rényi `G(n, p)` sample conditioned on strong
/// connectivity, with out-edge priorities shuffled from the same stream.
pub fn generate_random_strongly_connected<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<Digraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(GraphError::BadProbability(p));
    }
    for _ in 0..GENERATION_RETRY_BUDGET {
        let mut edges = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if from != to && rng.gen_bool(p) {
                    edges.push((from, to));
                }
            }
        }
        let g = Digraph::from_edges(n, edges)?;
        if is_strongly_connected(&g) {
            return Ok(assign_edge_order(g, rng));
        }
    }
    Err(GraphError::GenerationFailed {
        n,
        p,
        budget: GENERATION_RETRY_BUDGET,
    })
}

/// Shuffles each node's out-neighbor priorities uniformly. Neighbors are
/// sorted by id before shuffling so the result depends only on the edge set
/// and the rng stream.
pub fn assign_edge_order<R: Rng + ?Sized>(mut g: Digraph, rng: &mut R) -> Digraph {
    for outs in &mut g.out {
        outs.sort_unstable();
        outs.shuffle(rng);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> Digraph {
        Digraph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn connectivity_examples() {
        assert!(is_strongly_connected(&Digraph::cycle(3).unwrap()));
        assert!(!is_strongly_connected(&path3()));
        assert!(is_strongly_connected(&Digraph::complete(4).unwrap()));
    }

    #[test]
    fn max_out_degree_examples() {
        assert_eq!(max_out_degree(&Digraph::cycle(3).unwrap()), 1);
        assert_eq!(max_out_degree(&Digraph::complete(2).unwrap()), 1);
        assert_eq!(max_out_degree(&Digraph::bidirectional_star(5).unwrap()), 5);
    }

    #[test]
    fn rejects_malformed_edges() {
        assert!(matches!(Digraph::from_edges(3, [(1, 1)]), Err(GraphError::SelfLoop(1))));
        assert!(matches!(
            Digraph::from_edges(3, [(0, 1), (0, 1)]),
            Err(GraphError::DuplicateEdge { from: 0, to: 1 })
        ));
        assert!(matches!(
            Digraph::from_edges(3, [(0, 3)]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        assert!(matches!(Digraph::from_edges(1, []), Err(GraphError::TooFewNodes(1))));
    }

    #[test]
    fn edge_list_roundtrip_and_errors() {
        let g = Digraph::from_edges(3, [(0, 2), (0, 1), (1, 0), (2, 0)]).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "3 4\n0 2\n0 1\n1 0\n2 0\n");
        assert_eq!(Digraph::parse_edge_list(&text).unwrap(), g);

        assert!(matches!(
            Digraph::parse_edge_list("3 2\n0 1\n"),
            Err(GraphError::Parse { .. })
        ));
        assert!(matches!(
            Digraph::parse_edge_list("3 1\n0 x\n"),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Digraph::parse_edge_list("3 1\n2 2\n"),
            Err(GraphError::SelfLoop(2))
        ));
    }

    #[test]
    fn p_one_gives_complete_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let g = generate_random_strongly_connected(2, 1.0, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_strongly_connected(20, 0.3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = generate_random_strongly_connected(20, 0.3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_edge_list(), b.to_edge_list());
    }

    #[test]
    fn small_sample_is_strongly_connected() {
        let g = generate_random_strongly_connected(5, 0.4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(is_strongly_connected(&g));
    }

    #[test]
    fn generation_failure_and_bad_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_random_strongly_connected(20, 0.01, &mut rng),
            Err(GraphError::GenerationFailed { .. })
        ));
        assert!(matches!(
            generate_random_strongly_connected(4, 0.0, &mut rng),
            Err(GraphError::BadProbability(_))
        ));
    }

    #[test]
    fn edge_order_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = assign_edge_order(Digraph::cycle(3).unwrap(), &mut rng);
        assert_eq!(g.edge_order(0, 1), Some(0));

        let star = Digraph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 0), (2, 0), (3, 0)]).unwrap();
        let a = assign_edge_order(star.clone(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = assign_edge_order(star, &mut ChaCha8Rng::seed_from_u64(5));
        let mut orders: Vec<_> = (1..4).map(|l| a.edge_order(0, l).unwrap()).collect();
        orders.sort_unstable();
        assert_eq!(orders, vec![0, 1, 2]);
        assert_eq!(a, b);
    }

    #[test]
    fn with_out_order_validates() {
        let g = Digraph::bidirectional_star(2).unwrap();
        let ok = g.clone().with_out_order(vec![vec![2, 1], vec![0], vec![0]]).unwrap();
        assert_eq!(ok.out_neighbors(0), &[2, 1]);
        assert!(g.with_out_order(vec![vec![1], vec![0], vec![0]]).is_err());
    }
}
