//! Post-run statistics: individual utilities under the agreed systems and
//! partition descriptions over the original value systems.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{dist, quantile_sorted};
use crate::model::Population;
use crate::solver::Partition;
use crate::utility::{matrix_utility, weight_utility};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentUtility {
    pub agent_id: String,
    pub group: usize,
    pub matrix_utility: f64,
    pub weight_utility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Summary {
    /// `None` for empty data.
    pub fn of(data: &[f64]) -> Option<Self> {
        if data.is_empty() {
            return None;
        }
        let mut s = data.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        Some(Self {
            min: s[0],
            max: s[s.len() - 1],
            mean: s.iter().sum::<f64>() / s.len() as f64,
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
        })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub agents: Vec<AgentUtility>,
    pub matrix_summary: Summary,
    pub weight_summary: Summary,
}

impl UtilityReport {
    /// Matrix utilities sorted ascending (plot-ready).
    pub fn sorted_matrix_utilities(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.agents.iter().map(|a| a.matrix_utility).collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    }

    pub fn sorted_weight_utilities(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.agents.iter().map(|a| a.weight_utility).collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    }
}

/// Each agent's utilities at its group's agreed system.
pub fn utility_report(pop: &Population, partition: &Partition) -> Result<UtilityReport> {
    let assignment = partition.assignment(pop.agents.len());
    let mut agents = Vec::with_capacity(pop.agents.len());
    for (i, agent) in pop.agents.iter().enumerate() {
        let g = assignment[i];
        let group = &partition.groups[g];
        agents.push(AgentUtility {
            agent_id: agent.agent_id.clone(),
            group: g,
            matrix_utility: matrix_utility(agent, &group.x_star)?,
            weight_utility: weight_utility(agent, &group.omega_star)?,
        });
    }
    let mu: Vec<f64> = agents.iter().map(|a| a.matrix_utility).collect();
    let wu: Vec<f64> = agents.iter().map(|a| a.weight_utility).collect();
    let empty = Summary {
        min: 0.0,
        max: 0.0,
        mean: 0.0,
        q1: 0.0,
        median: 0.0,
        q3: 0.0,
    };
    Ok(UtilityReport {
        matrix_summary: Summary::of(&mu).unwrap_or(empty),
        weight_summary: Summary::of(&wu).unwrap_or(empty),
        agents,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub group_count: usize,
    pub group_sizes: Vec<usize>,
    /// Mean Frobenius distance over all within-group pairs of original
    /// matrices, pooled across groups; `None` when there are no such pairs.
    pub avg_matrix_distance: Option<f64>,
    pub avg_weight_distance: Option<f64>,
}

pub fn partition_summary(pop: &Population, blocks: &[Vec<usize>]) -> PartitionSummary {
    let (mut sum_x, mut sum_w, mut pairs) = (0.0, 0.0, 0usize);
    for block in blocks {
        for (a, &i) in block.iter().enumerate() {
            for &j in &block[a + 1..] {
                let (p, q) = (&pop.agents[i], &pop.agents[j]);
                sum_x += dist(p.matrix.as_slice(), q.matrix.as_slice());
                sum_w += dist(p.weights.as_slice(), q.weights.as_slice());
                pairs += 1;
            }
        }
    }
    let avg = |s: f64| (pairs > 0).then(|| s / pairs as f64);
    PartitionSummary {
        group_count: blocks.len(),
        group_sizes: blocks.iter().map(Vec::len).collect(),
        avg_matrix_distance: avg(sum_x),
        avg_weight_distance: avg(sum_w),
    }
}
