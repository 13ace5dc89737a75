//! Synchronous projected decentralized gradient ascent over the dynamic
//! bounded-confidence graph.
//!
//! Each round every agent mixes its iterate with its neighbors', adds a
//! stepsize-scaled utility gradient evaluated at its own iterate, and
//! projects back onto the box (matrices) or the simplex (weights). All
//! agents read round-`t` data only; the graph for round `t + 1` is rebuilt
//! from the new iterates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, project_box_in_place, project_simplex_in_place};
use crate::model::{ensure_valid, ConfidenceBounds, DecisionMatrix, Interval, Population, ValueSystem, WeightVector};
use crate::network::{
    agent_bounds, component_count, compute_epsilon, connected_components, initial_edges, relink,
    EpsilonMode, Graph, MixingParameter, NeighborDiscovery,
};
use crate::oracle::{group_optimum, GroupOptimum};
use crate::PARALLEL_MIN_AGENTS;
use crate::utility::sensitivities;

/// `alpha(t) = alpha0 / (t + 1)^decay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    pub alpha0: f64,
    pub decay: f64,
}

impl StepsizeSchedule {
    /// `decay` must lie in `(0.5, 1]` so the steps are not summable but
    /// square-summable.
    pub fn new(alpha0: f64, decay: f64) -> Result<Self> {
        let s = Self { alpha0, decay };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha0.is_finite() && self.alpha0 > 0.0 && self.decay > 0.5 && self.decay <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidSchedule {
                alpha0: self.alpha0,
                decay: self.decay,
            })
        }
    }
}

impl Default for StepsizeSchedule {
    fn default() -> Self {
        Self {
            alpha0: 0.1,
            decay: 1.0,
        }
    }
}

pub fn stepsize(schedule: &StepsizeSchedule, t: usize) -> f64 {
    schedule.alpha0 / ((t + 1) as f64).powf(schedule.decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub tol_x: f64,
    pub tol_omega: f64,
    pub stable_window: usize,
    pub max_iters: usize,
    pub consensus_tol: f64,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            tol_x: 1e-6,
            tol_omega: 1e-6,
            stable_window: 50,
            max_iters: 100_000,
            consensus_tol: 1e-4,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.tol_x) || !positive(self.tol_omega) || !positive(self.consensus_tol) {
            return Err(Error::InvalidStopping("tolerances must be finite and > 0".into()));
        }
        if self.stable_window == 0 || self.max_iters == 0 {
            return Err(Error::InvalidStopping("stable_window and max_iters must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub schedule: StepsizeSchedule,
    pub stopping: StoppingConfig,
    pub epsilon: EpsilonMode,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedule: StepsizeSchedule::default(),
            stopping: StoppingConfig::default(),
            epsilon: EpsilonMode::Auto,
            record_trace: false,
        }
    }
}

/// An agent's iterates `X_i(t)`, `Omega_i(t)`. Neighbor sets live in [`Graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: DecisionMatrix,
    pub omega: WeightVector,
}

impl AgentState {
    pub fn from_value_system(v: &ValueSystem) -> Self {
        Self {
            x: v.matrix.clone(),
            omega: v.weights.clone(),
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub edge_count: usize,
    pub component_count: usize,
    pub max_dx: f64,
    pub max_domega: f64,
    pub max_consensus_residual: f64,
}

/// A block of the final partition with its agreed value system.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub members: Vec<usize>,
    pub x_star: DecisionMatrix,
    pub omega_star: WeightVector,
    pub oracle: GroupOptimum,
    /// Largest absolute entry difference between agreed and oracle systems.
    pub max_oracle_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub groups: Vec<Group>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Group index per agent.
    pub fn assignment(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (g, group) in self.groups.iter().enumerate() {
            for &m in &group.members {
                out[m] = g;
            }
        }
        out
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|g| g.members.clone()).collect()
    }
}

/// Run-wide checks of the mixing bound and feasibility.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Largest `epsilon * max_degree` over all rounds; must stay below 1.
    pub max_mixing_product: f64,
    /// Largest distance of any iterate outside its feasible set.
    pub max_infeasibility: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_states: Vec<AgentState>,
    pub final_graph: Graph,
    pub partition: Partition,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<TraceRecord>>,
    pub diagnostics: RunDiagnostics,
    pub warnings: Vec<String>,
}

/// Per-population constants for the update rule.
struct Stepper<'a> {
    interval: Interval,
    own: &'a [ValueSystem],
    sens: Vec<Vec<f64>>,
}

impl<'a> Stepper<'a> {
    fn new(pop: &'a Population) -> Self {
        Self {
            interval: pop.interval,
            own: &pop.agents,
            sens: pop.agents.iter().map(|a| sensitivities(&a.weights)).collect(),
        }
    }

    /// Writes agent `i`'s next iterate into `out`; false if it is not finite.
    #[allow(clippy::too_many_arguments)]
    fn update_agent(
        &self,
        i: usize,
        states: &[AgentState],
        graph: &Graph,
        epsilon: f64,
        alpha: f64,
        out: &mut AgentState,
        scratch: &mut Vec<f64>,
    ) -> bool {
        let cur = &states[i];
        let nbrs = graph.neighbors(i);
        let sens = &self.sens[i];

        // consensus sums are accumulated neighbor by neighbor, in adjacency order
        let x = cur.x.as_slice();
        let own = self.own[i].matrix.as_slice();
        let nx = out.x.as_mut_slice();
        nx.fill(0.0);
        for &j in nbrs {
            for ((acc, &xj), &xi) in nx.iter_mut().zip(states[j].x.as_slice()).zip(x) {
                *acc += xj - xi;
            }
        }
        let cols = sens.len();
        let mut moved = false;
        for (e, v) in nx.iter_mut().enumerate() {
            let grad = -2.0 * (x[e] - own[e]) * sens[e % cols];
            let delta = epsilon * *v + alpha * grad;
            moved |= delta != 0.0;
            *v = x[e] + delta;
        }
        if moved {
            project_box_in_place(nx, self.interval);
        } else {
            nx.copy_from_slice(x);
        }

        let w = cur.omega.as_slice();
        let own = self.own[i].weights.as_slice();
        let nw = out.omega.as_mut_slice();
        nw.fill(0.0);
        for &k in nbrs {
            for ((acc, &wk), &wi) in nw.iter_mut().zip(states[k].omega.as_slice()).zip(w) {
                *acc += wk - wi;
            }
        }
        let mut moved = false;
        for (j, v) in nw.iter_mut().enumerate() {
            let grad = -2.0 * (w[j] - own[j]) * sens[j];
            let delta = epsilon * *v + alpha * grad;
            moved |= delta != 0.0;
            *v = w[j] + delta;
        }
        if moved {
            project_simplex_in_place(nw, scratch);
        } else {
            nw.copy_from_slice(w);
        }

        out.x.as_slice().iter().chain(out.omega.as_slice()).all(|v| v.is_finite())
    }

    /// Writes round `t + 1` into `next`; returns the largest X and Omega
    /// update norms.
    fn advance(
        &self,
        t: usize,
        states: &[AgentState],
        graph: &Graph,
        mixing: MixingParameter,
        alpha: f64,
        next: &mut [AgentState],
    ) -> Result<(f64, f64)> {
        let eps = mixing.epsilon;
        let bad = if states.len() >= PARALLEL_MIN_AGENTS {
            next.par_iter_mut()
                .enumerate()
                .map_init(Vec::new, |scratch, (i, out)| {
                    self.update_agent(i, states, graph, eps, alpha, out, scratch)
                })
                .collect::<Vec<bool>>()
                .iter()
                .position(|ok| !ok)
        } else {
            let mut scratch = Vec::new();
            next.iter_mut()
                .enumerate()
                .position(|(i, out)| !self.update_agent(i, states, graph, eps, alpha, out, &mut scratch))
        };
        if let Some(agent) = bad {
            return Err(Error::NonFinite { iteration: t, agent });
        }
        let mut dx: f64 = 0.0;
        let mut dw: f64 = 0.0;
        for (a, b) in states.iter().zip(next.iter()) {
            dx = dx.max(dist(a.x.as_slice(), b.x.as_slice()));
            dw = dw.max(dist(a.omega.as_slice(), b.omega.as_slice()));
        }
        Ok((dx, dw))
    }
}

fn check_mixing(graph: &Graph, mixing: MixingParameter) -> Result<()> {
    let max_degree = graph.max_degree();
    if max_degree > 0 && !(mixing.epsilon > 0.0 && mixing.epsilon * (max_degree as f64) < 1.0) {
        return Err(Error::InvalidEpsilon {
            epsilon: mixing.epsilon,
            limit: 1.0 / max_degree as f64,
            max_degree,
        });
    }
    Ok(())
}

/// One synchronous round for all agents.
pub fn step(
    states: &[AgentState],
    graph: &Graph,
    mixing: MixingParameter,
    alpha: f64,
    pop: &Population,
) -> Result<Vec<AgentState>> {
    check_mixing(graph, mixing)?;
    let stepper = Stepper::new(pop);
    let mut next = states.to_vec();
    stepper.advance(0, states, graph, mixing, alpha, &mut next)?;
    Ok(next)
}

/// Largest distance (matrix or weights) across any edge.
pub fn consensus_residual(states: &[AgentState], graph: &Graph) -> f64 {
    let residual = |(i, j): (usize, usize)| {
        let (a, b) = (&states[i], &states[j]);
        dist(a.x.as_slice(), b.x.as_slice()).max(dist(a.omega.as_slice(), b.omega.as_slice()))
    };
    if graph.n() >= PARALLEL_MIN_AGENTS {
        let edges: Vec<(usize, usize)> = graph.edges().collect();
        edges.par_iter().map(|&e| residual(e)).reduce(|| 0.0, f64::max)
    } else {
        graph.edges().map(residual).fold(0.0, f64::max)
    }
}

fn infeasibility(states: &[AgentState], interval: Interval) -> f64 {
    let mut worst: f64 = 0.0;
    for s in states {
        for &v in s.x.as_slice() {
            worst = worst.max(interval.lo() - v).max(v - interval.hi());
        }
        for &w in s.omega.as_slice() {
            worst = worst.max(-w);
        }
        worst = worst.max((s.omega.sum() - 1.0).abs());
    }
    worst
}

/// True when every agent sits on its own value system and every edge joins
/// identical systems: nothing can ever move.
fn is_trivial_fixed_point(pop: &Population, states: &[AgentState], graph: &Graph) -> bool {
    states
        .iter()
        .zip(&pop.agents)
        .all(|(s, a)| s.x == a.matrix && s.omega == a.weights)
        && graph
            .edges()
            .all(|(i, j)| states[i] == states[j])
}

/// Blocks are the graph's components; each block agrees on the projected
/// mean of its members' iterates. A singleton keeps its own value system.
pub fn extract_partition(pop: &Population, graph: &Graph, states: &[AgentState]) -> Result<Partition> {
    let mut groups = Vec::new();
    for members in connected_components(graph) {
        let refs: Vec<&ValueSystem> = members.iter().map(|&i| &pop.agents[i]).collect();
        let oracle = group_optimum(&refs, pop.interval)?;
        let (x_star, omega_star) = if let [only] = members.as_slice() {
            (pop.agents[*only].matrix.clone(), pop.agents[*only].weights.clone())
        } else {
            let k = members.len() as f64;
            let (rows, cols) = states[members[0]].x.shape();
            let mut x = vec![0.0; rows * cols];
            let mut w = vec![0.0; states[members[0]].omega.len()];
            for &m in &members {
                for (a, b) in x.iter_mut().zip(states[m].x.as_slice()) {
                    *a += b;
                }
                for (a, b) in w.iter_mut().zip(states[m].omega.as_slice()) {
                    *a += b;
                }
            }
            x.iter_mut().for_each(|v| *v /= k);
            w.iter_mut().for_each(|v| *v /= k);
            project_box_in_place(&mut x, pop.interval);
            let mut scratch = Vec::new();
            project_simplex_in_place(&mut w, &mut scratch);
            (DecisionMatrix::from_row_major(rows, cols, x)?, WeightVector::new(w))
        };
        let max_oracle_gap = x_star
            .as_slice()
            .iter()
            .zip(oracle.x_star.as_slice())
            .chain(omega_star.as_slice().iter().zip(oracle.omega_star.as_slice()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        groups.push(Group {
            members,
            x_star,
            omega_star,
            oracle,
            max_oracle_gap,
        });
    }
    Ok(Partition { groups })
}

/// Runs the dynamics from every agent's own value system until the stopping
/// rule holds for `stable_window` consecutive rounds or `max_iters` is hit.
pub fn run_aggregation(
    pop: &Population,
    discovery: &dyn NeighborDiscovery,
    config: &SolverConfig,
) -> Result<RunResult> {
    ensure_valid(pop)?;
    config.schedule.validate()?;
    config.stopping.validate()?;
    let bounds: Vec<ConfidenceBounds> = agent_bounds(pop)?;
    let stop = &config.stopping;

    let stepper = Stepper::new(pop);
    let mut states: Vec<AgentState> = pop.agents.iter().map(AgentState::from_value_system).collect();
    let mut next = states.clone();
    let mut graph = initial_edges(pop)?;
    let mut trace = config.record_trace.then(Vec::new);
    let mut diagnostics = RunDiagnostics::default();

    let mut iterations = 0;
    let mut converged = is_trivial_fixed_point(pop, &states, &graph);
    let mut stable = 0;
    while !converged && iterations < stop.max_iters {
        let t = iterations;
        let mixing = compute_epsilon(&graph, config.epsilon)?;
        let product = mixing.epsilon * graph.max_degree() as f64;
        debug_assert!(product < 1.0);
        diagnostics.max_mixing_product = diagnostics.max_mixing_product.max(product);

        let alpha = stepsize(&config.schedule, t);
        let (max_dx, max_domega) = stepper.advance(t, &states, &graph, mixing, alpha, &mut next)?;
        std::mem::swap(&mut states, &mut next);
        diagnostics.max_infeasibility = diagnostics.max_infeasibility.max(infeasibility(&states, pop.interval));

        let (new_graph, residual) = relink(&graph, &states, &bounds, discovery, t);
        let unchanged = new_graph == graph;
        graph = new_graph;
        iterations += 1;

        if let Some(trace) = trace.as_mut() {
            trace.push(TraceRecord {
                t,
                alpha,
                epsilon: mixing.epsilon,
                edge_count: graph.edge_count(),
                component_count: component_count(&graph),
                max_dx,
                max_domega,
                max_consensus_residual: residual,
            });
        }

        if max_dx <= stop.tol_x && max_domega <= stop.tol_omega && unchanged && residual <= stop.consensus_tol {
            stable += 1;
        } else {
            stable = 0;
        }
        converged = stable >= stop.stable_window;
    }

    let partition = extract_partition(pop, &graph, &states)?;
    let mut warnings = Vec::new();
    for (g, group) in partition.groups.iter().enumerate() {
        if group.omega_star.as_slice().contains(&0.0) {
            warnings.push(format!(
                "group {g}: agreed weight vector has a zero component (boundary of the simplex)"
            ));
        }
    }
    Ok(RunResult {
        final_states: states,
        final_graph: graph,
        partition,
        iterations,
        converged,
        trace,
        diagnostics,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::example1;
    use crate::network::DiscoveryStrategy;

    fn bounded(gx: f64, gw: f64) -> Population {
        let mut p = example1();
        p.set_global_bounds(ConfidenceBounds::new(gx, gw).unwrap());
        p
    }

    #[test]
    fn stepsize_examples() {
        let s = StepsizeSchedule::new(0.1, 1.0).unwrap();
        assert_eq!(stepsize(&s, 0), 0.1);
        assert!((stepsize(&s, 9) - 0.01).abs() < 1e-17);
        assert_eq!(stepsize(&StepsizeSchedule::new(0.5, 0.6).unwrap(), 0), 0.5);
        for t in 0..100 {
            assert!(stepsize(&s, t + 1) < stepsize(&s, t));
        }
        assert!(StepsizeSchedule::new(0.1, 0.5).is_err());
        assert!(StepsizeSchedule::new(0.0, 1.0).is_err());
        assert!(StepsizeSchedule::new(0.1, 1.2).is_err());
    }

    #[test]
    fn single_edge_step_example() {
        let p = bounded(7.0, 0.3);
        let states: Vec<AgentState> = p.agents.iter().map(AgentState::from_value_system).collect();
        let g = Graph::from_edges(4, [(2, 3)]);
        let next = step(&states, &g, MixingParameter { epsilon: 0.5 }, 0.1, &p).unwrap();
        assert_eq!(next[2].x.get(0, 0), 1.5);
        assert_eq!(next[3].x.get(0, 0), 1.5);
        // isolated agents at their own systems do not move
        assert_eq!(next[0], states[0]);
        assert_eq!(next[1], states[1]);
        assert!(step(&states, &Graph::complete(4), MixingParameter { epsilon: 0.4 }, 0.1, &p).is_err());
    }

    #[test]
    fn weights_leaving_the_simplex_are_projected_back() {
        let p = bounded(7.0, 0.3);
        let mut states: Vec<AgentState> = p.agents.iter().map(AgentState::from_value_system).collect();
        states[0].omega = WeightVector::new(vec![0.0, 0.0, 1.0]);
        let next = step(&states, &Graph::empty(4), MixingParameter { epsilon: 0.0 }, 10.0, &p).unwrap();
        let w = &next[0].omega;
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert!(w.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_agent_converges_immediately() {
        let mut p = bounded(1.0, 0.1);
        p.agents.truncate(1);
        let r = run_aggregation(&p, &DiscoveryStrategy::FullAccess, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.partition.len(), 1);
        assert_eq!(r.partition.groups[0].x_star, p.agents[0].matrix);
    }

    #[test]
    fn empty_graph_gives_singletons() {
        let p = bounded(1.0, 0.01);
        let r = run_aggregation(&p, &DiscoveryStrategy::FullAccess, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.partition.blocks(), vec![vec![0], vec![1], vec![2], vec![3]]);
        for (g, a) in r.partition.groups.iter().zip(&p.agents) {
            assert_eq!(g.x_star, a.matrix);
            assert_eq!(g.omega_star, a.weights);
        }
    }

    #[test]
    fn example1_single_group() {
        let p = bounded(15.0, 0.5);
        let cfg = SolverConfig {
            record_trace: true,
            ..SolverConfig::default()
        };
        let r = run_aggregation(&p, &DiscoveryStrategy::FullAccess, &cfg).unwrap();
        assert!(r.converged, "iterations {}", r.iterations);
        assert_eq!(r.partition.len(), 1);
        let g = &r.partition.groups[0];
        assert!((g.x_star.get(0, 2) - g.oracle.x_star.get(0, 2)).abs() < 1e-2);
        assert!((g.x_star.get(0, 2) - 3.0551).abs() < 1e-2);
        assert!(r.diagnostics.max_mixing_product < 1.0);
        assert!(r.diagnostics.max_infeasibility <= 1e-12);
        assert_eq!(r.trace.unwrap().len(), r.iterations);
    }

    #[test]
    fn example1_pair_and_singletons() {
        let p = bounded(7.0, 0.3);
        let r = run_aggregation(&p, &DiscoveryStrategy::NoDiscovery, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.partition.blocks(), vec![vec![0], vec![1], vec![2, 3]]);
        let pair = &r.partition.groups[2];
        assert!(pair.max_oracle_gap < 1e-2, "{}", pair.max_oracle_gap);
    }

    #[test]
    fn identical_members_never_move() {
        let mut p = bounded(1.0, 0.1);
        let twin = ValueSystem {
            agent_id: "twin".into(),
            ..p.agents[0].clone()
        };
        p.agents.push(twin);
        let states: Vec<AgentState> = p.agents.iter().map(AgentState::from_value_system).collect();
        let g = Graph::from_edges(5, [(0, 4)]);
        let next = step(&states, &g, MixingParameter { epsilon: 0.5 }, 0.1, &p).unwrap();
        assert_eq!(next, states);
        let r = run_aggregation(&p, &DiscoveryStrategy::FullAccess, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn rejects_missing_bounds_and_bad_config() {
        let p = example1();
        assert!(matches!(
            run_aggregation(&p, &DiscoveryStrategy::FullAccess, &SolverConfig::default()),
            Err(Error::MissingBounds { .. })
        ));
        let p = bounded(15.0, 0.5);
        let mut cfg = SolverConfig::default();
        cfg.stopping.stable_window = 0;
        assert!(run_aggregation(&p, &DiscoveryStrategy::FullAccess, &cfg).is_err());
        let cfg = SolverConfig {
            epsilon: EpsilonMode::Fixed(0.9),
            ..SolverConfig::default()
        };
        assert!(matches!(
            run_aggregation(&p, &DiscoveryStrategy::FullAccess, &cfg),
            Err(Error::InvalidEpsilon { .. })
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = bounded(15.0, 0.5);
        let mut cfg = SolverConfig::default();
        cfg.stopping.max_iters = 10;
        let r = run_aggregation(&p, &DiscoveryStrategy::FullAccess, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 10);
    }
}
