use std::fmt::Write as _;
use std::path::Path;

use valagg::analysis::{partition_summary, utility_report};
use valagg::geometry::{derive_confidence_bounds, BoundLevel};
use valagg::mcdm::{topsis_rank, DEFAULT_TIE_TOL};
use valagg::oracle::group_optimum;
use valagg::solver::{run_aggregation, Group, Partition};
use valagg::{ConfidenceBounds, DecisionMatrix, Population, ValueSystem, WeightVector};

use crate::config::{BoundsMode, RunConfig, MAX_BOUND_MARGIN};
use crate::error::{CliError, Result};
use crate::io::{
    parse_population, read_population_file, read_result_file, write_population_file, write_result_file,
    write_trace, GroupRecord, PlotData, ReportSection, ResultFile, ResultMetadata,
};
use crate::synth::{generate, SynthSpec};

/// Formats like C's `%.{sig}g`.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, v);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -4 || exp >= sig as i32 {
        let (mantissa, _) = sci.split_at(sci.find('e').unwrap());
        format!("{}e{exp}", trim(mantissa.to_string()))
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    }
}

/// Derived global bounds at `level`, widened by [`MAX_BOUND_MARGIN`] at `max`.
pub fn level_bounds(pop: &Population, level: BoundLevel) -> Result<ConfidenceBounds> {
    let b = derive_confidence_bounds(pop, level)?;
    if level == BoundLevel::Max {
        let k = 1.0 + MAX_BOUND_MARGIN;
        Ok(ConfidenceBounds::new(b.gamma_x * k, b.gamma_omega * k)?)
    } else {
        Ok(b)
    }
}

pub fn cmd_bounds(population: &Path, level: BoundLevel) -> Result<String> {
    let pop = parse_population(population)?;
    let b = derive_confidence_bounds(&pop, level)?;
    Ok(format!(
        "gamma_x = {}, gamma_omega = {}",
        format_sig(b.gamma_x, 6),
        format_sig(b.gamma_omega, 6)
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregateOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub groups: usize,
}

fn rows(m: &DecisionMatrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn report_section(pop: &Population, partition: &Partition) -> Result<ReportSection> {
    let r = utility_report(pop, partition)?;
    Ok(ReportSection {
        plot: PlotData {
            sorted_matrix_utilities: r.sorted_matrix_utilities(),
            sorted_weight_utilities: r.sorted_weight_utilities(),
        },
        partition_summary: partition_summary(pop, &partition.blocks()),
        matrix_summary: r.matrix_summary,
        weight_summary: r.weight_summary,
        utilities: r.agents,
    })
}

/// Runs the dynamics and writes the result file (also when the run did not
/// converge) and, when `trace` is given, the per-iteration trace.
pub fn cmd_aggregate(
    population: &Path,
    config: &RunConfig,
    output: &Path,
    trace: Option<&Path>,
) -> Result<AggregateOutcome> {
    let mut config = config.clone();
    config.trace = trace.is_some();
    config.validate()?;

    let file = read_population_file(population)?;
    let mut pop = file.to_population()?;
    let (bounds, margin) = match config.bounds {
        BoundsMode::PerAgent => (None, None),
        BoundsMode::Level(level) => {
            let b = level_bounds(&pop, level)?;
            pop.set_global_bounds(b);
            (Some(b), (level == BoundLevel::Max).then_some(MAX_BOUND_MARGIN))
        }
    };

    let run = run_aggregation(&pop, &config.discovery.strategy(), &config.solver())?;
    let ids = |members: &[usize]| members.iter().map(|&i| pop.agents[i].agent_id.clone()).collect();
    let partition: Vec<GroupRecord> = run
        .partition
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| GroupRecord {
            group_id: g,
            member_ids: ids(&group.members),
            x_star: rows(&group.x_star),
            omega_star: group.omega_star.as_slice().to_vec(),
            oracle_x_star: rows(&group.oracle.x_star),
            oracle_omega_star: group.oracle.omega_star.as_slice().to_vec(),
            max_oracle_gap: group.max_oracle_gap,
        })
        .collect();

    let result = ResultFile {
        bounds,
        converged: run.converged,
        iterations: run.iterations,
        report: report_section(&pop, &run.partition)?,
        metadata: ResultMetadata {
            max_bound_margin: margin,
            distance_average: "pooled over all within-group pairs".into(),
            max_mixing_product: run.diagnostics.max_mixing_product,
            max_infeasibility: run.diagnostics.max_infeasibility,
            warnings: run.warnings.clone(),
        },
        partition,
        population: file,
        config,
    };
    write_result_file(output, &result)?;
    if let (Some(path), Some(records)) = (trace, run.trace.as_deref()) {
        write_trace(path, records)?;
    }
    Ok(AggregateOutcome {
        converged: run.converged,
        iterations: run.iterations,
        groups: run.partition.len(),
    })
}

fn matrix(rows: &[Vec<f64>]) -> Result<DecisionMatrix> {
    Ok(DecisionMatrix::from_rows(rows)?)
}

/// Rebuilds the core partition stored in a result file.
pub fn result_partition(result: &ResultFile, pop: &Population) -> Result<Partition> {
    let mut groups = Vec::with_capacity(result.partition.len());
    for g in &result.partition {
        let members = g
            .member_ids
            .iter()
            .map(|id| {
                pop.agents
                    .iter()
                    .position(|a| &a.agent_id == id)
                    .ok_or_else(|| CliError::Invalid(format!("group {}: unknown member `{id}`", g.group_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(Group {
            x_star: matrix(&g.x_star)?,
            omega_star: WeightVector::new(g.omega_star.clone()),
            oracle: {
                let refs: Vec<&ValueSystem> = members.iter().map(|&i| &pop.agents[i]).collect();
                group_optimum(&refs, pop.interval)?
            },
            max_oracle_gap: g.max_oracle_gap,
            members,
        });
    }
    let mut covered: Vec<usize> = groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    covered.sort_unstable();
    if covered != (0..pop.agents.len()).collect::<Vec<_>>() {
        return Err(CliError::Invalid("result partition does not cover every agent exactly once".into()));
    }
    Ok(Partition { groups })
}

/// One TOPSIS line per selected group, worst alternative first.
pub fn cmd_rank(result: &Path, group: Option<usize>) -> Result<Vec<String>> {
    let r = read_result_file(result)?;
    let selected: Vec<&GroupRecord> = match group {
        Some(id) => vec![r.group(id)?],
        None => r.partition.iter().collect(),
    };
    selected
        .into_iter()
        .map(|g| {
            let ranking = topsis_rank(&matrix(&g.x_star)?, &WeightVector::new(g.omega_star.clone()), DEFAULT_TIE_TOL)?;
            Ok(match group {
                Some(_) => ranking.notation(),
                None => format!("group {}: {}", g.group_id, ranking.notation()),
            })
        })
        .collect()
}

pub fn cmd_synth(spec: &SynthSpec, output: &Path) -> Result<()> {
    write_population_file(output, &generate(spec)?)
}

/// Recomputes the report of a result file from its embedded population.
pub fn report_of(result: &ResultFile) -> Result<ReportSection> {
    let pop = result.population.to_population()?;
    let partition = result_partition(result, &pop)?;
    report_section(&pop, &partition)
}

pub fn cmd_report(result: &Path, json: bool) -> Result<String> {
    let r = read_result_file(result)?;
    let report = report_of(&r)?;
    if json {
        return serde_json::to_string_pretty(&report).map_err(|e| CliError::Invalid(e.to_string()));
    }
    let s = &report.partition_summary;
    let avg = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |d| format_sig(d, 6));
    let mut out = String::new();
    let _ = writeln!(out, "groups: {} (sizes {:?})", s.group_count, s.group_sizes);
    let _ = writeln!(
        out,
        "avg within-group distance: matrix {}, weights {} (pooled pairs)",
        avg(s.avg_matrix_distance),
        avg(s.avg_weight_distance)
    );
    let _ = writeln!(out, "{:<16} {:>6} {:>14} {:>14}", "agent", "group", "u_matrix", "u_weights");
    for a in &report.utilities {
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>14} {:>14}",
            a.agent_id,
            a.group,
            format_sig(a.matrix_utility, 6),
            format_sig(a.weight_utility, 6)
        );
    }
    for (name, sm) in [("u_matrix", &report.matrix_summary), ("u_weights", &report.weight_summary)] {
        let _ = writeln!(
            out,
            "{name}: min {} q1 {} median {} q3 {} max {} mean {}",
            format_sig(sm.min, 6),
            format_sig(sm.q1, 6),
            format_sig(sm.median, 6),
            format_sig(sm.q3, 6),
            format_sig(sm.max, 6),
            format_sig(sm.mean, 6)
        );
    }
    Ok(out)
}
