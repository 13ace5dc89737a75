//! The undirected, time-varying communication graph.
//!
//! Links exist only between agents whose current iterates are within both
//! agents' confidence bounds (strict `<` on both distances). Ties break
//! toward no edge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::dist;
use crate::model::{ConfidenceBounds, Population};
use crate::solver::AgentState;
use crate::PARALLEL_MIN_AGENTS;

/// Undirected simple graph over agent indices `0..n` with sorted adjacency.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    pub fn complete(n: usize) -> Self {
        Self {
            adj: (0..n)
                .map(|i| (0..n).filter(|&j| j != i).collect())
                .collect(),
        }
    }

    /// Builds a graph from unordered pairs; self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} agents");
            if a != b {
                degree[a] += 1;
                degree[b] += 1;
            }
        }
        let mut adj: Vec<Vec<usize>> = degree.into_iter().map(Vec::with_capacity).collect();
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, lexicographically ordered.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

/// Uniform edge weight of the mixing matrix; self-weight is `1 - degree * epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingParameter {
    pub epsilon: f64,
}

impl MixingParameter {
    /// Smallest self-weight over the graph.
    pub fn min_self_weight(&self, g: &Graph) -> f64 {
        1.0 - g.max_degree() as f64 * self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    Auto,
    Fixed(f64),
}

/// Auto mode gives `1 / (max_degree + 1)`; fixed values must satisfy
/// `0 < epsilon < 1 / max_degree`. An edgeless graph always gets 0.
pub fn compute_epsilon(g: &Graph, mode: EpsilonMode) -> Result<MixingParameter> {
    let max_degree = g.max_degree();
    if max_degree == 0 {
        return Ok(MixingParameter { epsilon: 0.0 });
    }
    match mode {
        EpsilonMode::Auto => Ok(MixingParameter {
            epsilon: 1.0 / (max_degree as f64 + 1.0),
        }),
        EpsilonMode::Fixed(epsilon) => {
            let limit = 1.0 / max_degree as f64;
            if epsilon > 0.0 && epsilon * (max_degree as f64) < 1.0 {
                Ok(MixingParameter { epsilon })
            } else {
                Err(Error::InvalidEpsilon {
                    epsilon,
                    limit,
                    max_degree,
                })
            }
        }
    }
}

/// Agents proposed by a discovery strategy for one agent at one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Discovered {
    Everyone,
    Nobody,
    Agents(Vec<usize>),
}

/// Source of newly discovered neighbor candidates. Must be deterministic in
/// `(t, agent, states)`.
pub trait NeighborDiscovery: Send + Sync {
    fn discover(&self, t: usize, agent: usize, states: &[AgentState]) -> Discovered;
}

/// Built-in discovery strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryStrategy {
    /// Every agent can reach the whole network each round.
    FullAccess,
    NoDiscovery,
    /// Static candidate list per agent.
    FixedCandidates(Vec<Vec<usize>>),
}

impl NeighborDiscovery for DiscoveryStrategy {
    fn discover(&self, _t: usize, agent: usize, _states: &[AgentState]) -> Discovered {
        match self {
            DiscoveryStrategy::FullAccess => Discovered::Everyone,
            DiscoveryStrategy::NoDiscovery => Discovered::Nobody,
            DiscoveryStrategy::FixedCandidates(lists) => {
                lists.get(agent).map_or(Discovered::Nobody, |l| Discovered::Agents(l.clone()))
            }
        }
    }
}

/// Every agent's bounds, or an error naming the first agent without valid ones.
pub fn agent_bounds(pop: &Population) -> Result<Vec<ConfidenceBounds>> {
    pop.agents
        .iter()
        .map(|a| match a.bounds {
            Some(b) if b.is_valid() => Ok(b),
            _ => Err(Error::MissingBounds {
                agent: a.agent_id.clone(),
            }),
        })
        .collect()
}

/// `Some(max(d_X, d_Omega))` when the pair passes both bound tests.
#[inline]
fn within_bounds(
    xi: &[f64],
    wi: &[f64],
    bi: &ConfidenceBounds,
    xj: &[f64],
    wj: &[f64],
    bj: &ConfidenceBounds,
) -> Option<f64> {
    let dw = dist(wi, wj);
    if dw >= bi.gamma_omega.min(bj.gamma_omega) {
        return None;
    }
    let dx = dist(xi, xj);
    (dx < bi.gamma_x.min(bj.gamma_x)).then_some(dx.max(dw))
}

/// Tests `pairs` (or every unordered pair when `None`) against the bounds.
/// Also returns the largest distance across a kept edge.
fn link_pairs<'a, X, W>(
    n: usize,
    x: X,
    w: W,
    bounds: &[ConfidenceBounds],
    pairs: Option<&[(usize, usize)]>,
) -> (Graph, f64)
where
    X: Fn(usize) -> &'a [f64] + Sync,
    W: Fn(usize) -> &'a [f64] + Sync,
{
    let test = |i: usize, j: usize| within_bounds(x(i), w(i), &bounds[i], x(j), w(j), &bounds[j]);
    let parallel = n >= PARALLEL_MIN_AGENTS;
    let kept: Vec<(usize, usize, f64)> = match pairs {
        None if parallel => (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..n).filter_map(move |j| test(i, j).map(|d| (i, j, d))))
            .collect(),
        None => {
            // row-major scan yields sorted adjacency lists directly
            let mut adj: Vec<Vec<usize>> = (0..n).map(|_| Vec::with_capacity(n - 1)).collect();
            let mut residual: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    if let Some(d) = test(i, j) {
                        adj[i].push(j);
                        adj[j].push(i);
                        residual = residual.max(d);
                    }
                }
            }
            return (Graph { adj }, residual);
        }
        Some(pairs) if parallel => pairs
            .par_iter()
            .filter_map(|&(i, j)| test(i, j).map(|d| (i, j, d)))
            .collect(),
        Some(pairs) => pairs
            .iter()
            .filter_map(|&(i, j)| test(i, j).map(|d| (i, j, d)))
            .collect(),
    };
    let residual = kept.iter().map(|e| e.2).fold(0.0, f64::max);
    (Graph::from_edges(n, kept.into_iter().map(|(i, j, _)| (i, j))), residual)
}

/// Initial graph: agents linked when their own value systems are within
/// both agents' bounds.
pub fn initial_edges(pop: &Population) -> Result<Graph> {
    let bounds = agent_bounds(pop)?;
    Ok(link_pairs(
        pop.agents.len(),
        |i| pop.agents[i].matrix.as_slice(),
        |i| pop.agents[i].weights.as_slice(),
        &bounds,
        None,
    )
    .0)
}

/// Graph for the next round: current edges plus discovered candidates,
/// symmetrized, filtered by the bound test on the given states.
pub fn update_neighbors(
    current: &Graph,
    states: &[AgentState],
    bounds: &[ConfidenceBounds],
    discovery: &dyn NeighborDiscovery,
    t: usize,
) -> Graph {
    relink(current, states, bounds, discovery, t).0
}

/// [`update_neighbors`] together with the consensus residual of the new graph.
pub(crate) fn relink(
    current: &Graph,
    states: &[AgentState],
    bounds: &[ConfidenceBounds],
    discovery: &dyn NeighborDiscovery,
    t: usize,
) -> (Graph, f64) {
    let n = states.len();
    let found: Vec<Discovered> = (0..n).map(|i| discovery.discover(t, i, states)).collect();
    let x = |i: usize| states[i].x.as_slice();
    let w = |i: usize| states[i].omega.as_slice();

    if found.iter().all(|d| *d == Discovered::Everyone) {
        return link_pairs(n, x, w, bounds, None);
    }

    let mut pairs: Vec<(usize, usize)> = current.edges().collect();
    for (i, d) in found.iter().enumerate() {
        match d {
            Discovered::Nobody => {}
            Discovered::Everyone => {
                pairs.extend((0..n).filter(|&j| j != i).map(|j| (i.min(j), i.max(j))));
            }
            Discovered::Agents(list) => {
                pairs.extend(
                    list.iter()
                        .filter(|&&j| j != i && j < n)
                        .map(|&j| (i.min(j), i.max(j))),
                );
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    link_pairs(n, x, w, bounds, Some(&pairs))
}

/// Components as sorted member lists, ordered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut dsu = DisjointSets::new(n);
    for (a, b) in g.edges() {
        dsu.union(a, b);
    }
    let mut block_of = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = dsu.find(i);
        if block_of[root] == usize::MAX {
            block_of[root] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[block_of[root]].push(i);
    }
    blocks
}

pub fn component_count(g: &Graph) -> usize {
    let mut dsu = DisjointSets::new(g.n());
    let mut count = g.n();
    for (a, b) in g.edges() {
        if dsu.union(a, b) {
            count -= 1;
        }
    }
    count
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
