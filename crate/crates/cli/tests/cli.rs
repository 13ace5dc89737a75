use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use valagg::geometry::BoundLevel;
use valagg::utility::{matrix_utility, weight_utility};
use valagg::{DecisionMatrix, WeightVector};
use valagg_cli::commands::{cmd_aggregate, cmd_bounds, cmd_rank, cmd_report, cmd_synth, report_of};
use valagg_cli::config::{BoundsMode, DiscoveryName, RunConfig};
use valagg_cli::error::{EXIT_INVALID, EXIT_IO, EXIT_NOT_CONVERGED};
use valagg_cli::io::{
    parse_population, read_population_file, read_result_file, read_trace, write_population_file, write_result_file,
    GroupRecord, ResultFile,
};
use valagg_cli::synth::{generate, planted_labels, SynthSpec};
use valagg_cli::CliError;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn valagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valagg")).args(args).output().unwrap()
}

fn two_clusters() -> SynthSpec {
    SynthSpec {
        clusters: 2,
        agents_per_cluster: 5,
        values: 3,
        alternatives: 2,
        interval: [1.0, 7.0],
        separation: 8.0,
        noise: 0.3,
        seed: 5,
    }
}

fn groups_of(r: &ResultFile) -> BTreeSet<BTreeSet<String>> {
    r.partition.iter().map(|g| g.member_ids.iter().cloned().collect()).collect()
}

#[test]
fn example1_fixture_parses() {
    let pop = parse_population(&fixture("example1.json")).unwrap();
    assert_eq!(pop.agents.len(), 4);
    assert_eq!(pop.values, ["P", "T", "S"]);
    assert_eq!(pop.alternatives, ["PC", "CS"]);
    assert_eq!(pop.agents[2].matrix.to_rows(), vec![vec![2.0, 1.0, 3.0], vec![6.0, 7.0, 3.0]]);
    assert_eq!(pop.agents[3].weights.as_slice(), &[0.3, 0.3, 0.4]);
    assert!(pop.agents.iter().all(|a| a.bounds.is_none()));

    let bounded = parse_population(&fixture("example1_bounds.json")).unwrap();
    assert!(bounded.agents.iter().all(|a| a.bounds.map(|b| (b.gamma_x, b.gamma_omega)) == Some((7.0, 0.3))));
}

#[test]
fn population_errors() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };

    let missing = parse_population(&dir.path().join("nope.json")).unwrap_err();
    assert!(matches!(missing, CliError::Io { .. }));
    assert_eq!(missing.exit_code(), EXIT_IO);

    let p = write("syntax.json", "{ \"values\": [");
    assert!(matches!(parse_population(&p), Err(CliError::Parse { .. })));

    let p = write(
        "empty.json",
        r#"{"values": ["a", "b"], "alternatives": ["x"], "interval": [0, 1], "agents": []}"#,
    );
    let e = parse_population(&p).unwrap_err();
    assert!(e.to_string().contains("at least one agent"), "{e}");
    assert_eq!(e.exit_code(), EXIT_INVALID);

    let p = write(
        "shape.json",
        r#"{"values": ["a", "b"], "alternatives": ["x"], "interval": [0, 1], "agents": [
            {"id": "ok", "matrix": [[0.5, 0.5]], "weights": [0.5, 0.5]},
            {"id": "odd", "matrix": [[0.5, 0.5, 0.5]], "weights": [0.2, 0.3, 0.5]}]}"#,
    );
    let e = parse_population(&p).unwrap_err();
    assert!(e.to_string().contains("odd"), "{e}");

    let p = write(
        "field.json",
        r#"{"values": ["a", "b"], "alternatives": ["x"], "interval": [0, 1], "agents": [
            {"id": "1", "matrix": [[0.5, 0.5]], "weights": [0.5, 0.5], "colour": 3}]}"#,
    );
    let e = parse_population(&p).unwrap_err();
    assert!(e.to_string().contains("agents[0]"), "{e}");
}

#[test]
fn weight_sums_near_one_are_renormalized() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.json");
    fs::write(
        &p,
        r#"{"values": ["a", "b"], "alternatives": ["x"], "interval": [0, 1], "agents": [
            {"id": "1", "matrix": [[0.5, 0.5]], "weights": [0.5, 0.5000001]}]}"#,
    )
    .unwrap();
    let pop = parse_population(&p).unwrap();
    assert!((pop.agents[0].weights.sum() - 1.0).abs() < 1e-15);

    fs::write(
        &p,
        r#"{"values": ["a", "b", "c"], "alternatives": ["x"], "interval": [0, 1], "agents": [
            {"id": "1", "matrix": [[0.5, 0.5, 0.5]], "weights": [0.5, 0.5, 0.1]}]}"#,
    )
    .unwrap();
    assert!(parse_population(&p).is_err());
}

#[test]
fn population_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = read_population_file(&fixture("example1_bounds.json")).unwrap();
    let out = dir.path().join("copy.json");
    write_population_file(&out, &file).unwrap();
    assert_eq!(read_population_file(&out).unwrap(), file);
    assert_eq!(parse_population(&out).unwrap(), file.to_population().unwrap());
}

#[test]
fn bounds_strings() {
    let f = fixture("example1.json");
    assert_eq!(cmd_bounds(&f, BoundLevel::Q2).unwrap(), "gamma_x = 8.12404, gamma_omega = 0.244949");
    assert_eq!(cmd_bounds(&f, BoundLevel::Max).unwrap(), "gamma_x = 14.6969, gamma_omega = 0.489898");

    let dir = tempfile::tempdir().unwrap();
    let mut one = read_population_file(&f).unwrap();
    one.agents.truncate(1);
    let p = dir.path().join("one.json");
    write_population_file(&p, &one).unwrap();
    assert!(cmd_bounds(&p, BoundLevel::Q2).is_err());
}

#[test]
fn aggregate_example1_single_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let outcome = cmd_aggregate(&fixture("example1.json"), &RunConfig::default(), &out, None).unwrap();
    assert!(outcome.converged);
    assert_eq!(outcome.groups, 1);

    let r = read_result_file(&out).unwrap();
    assert_eq!(r.metadata.max_bound_margin, Some(1e-9));
    let g = &r.partition[0];
    assert!((g.x_star[0][2] - 3.055).abs() < 1e-2);
    assert!((g.oracle_x_star[0][2] - 38.5877 / 12.6311).abs() < 1e-4);

    // Report utilities equal direct evaluations at the agreed system.
    let pop = r.population.to_population().unwrap();
    let x = DecisionMatrix::from_rows(&g.x_star).unwrap();
    let w = WeightVector::new(g.omega_star.clone());
    for (agent, u) in pop.agents.iter().zip(&r.report.utilities) {
        assert_eq!(u.matrix_utility, matrix_utility(agent, &x).unwrap());
        assert_eq!(u.weight_utility, weight_utility(agent, &w).unwrap());
    }
    assert_eq!(report_of(&r).unwrap(), r.report);
}

#[test]
fn aggregate_example1_per_agent_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let config = RunConfig {
        bounds: BoundsMode::PerAgent,
        discovery: DiscoveryName::None,
        ..RunConfig::default()
    };
    let outcome = cmd_aggregate(&fixture("example1_bounds.json"), &config, &out, None).unwrap();
    assert!(outcome.converged);
    let r = read_result_file(&out).unwrap();
    let want: BTreeSet<BTreeSet<String>> = [vec!["3", "4"], vec!["1"], vec!["2"]]
        .into_iter()
        .map(|g| g.into_iter().map(String::from).collect())
        .collect();
    assert_eq!(groups_of(&r), want);
    assert_eq!(r.bounds, None);
    assert_eq!(r.metadata.max_bound_margin, None);

    // Per-agent mode needs bounds on every agent.
    let err = cmd_aggregate(&fixture("example1.json"), &config, &out, None).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_INVALID);
}

#[test]
fn planted_clusters_recovered() {
    // Matrix bound between the within-cluster spread (< 2) and the center
    // separation minus noise; the weight bound exceeds the simplex diameter.
    let dir = tempfile::tempdir().unwrap();
    let mut file = generate(&two_clusters()).unwrap();
    for a in &mut file.agents {
        a.bounds = Some(valagg::ConfidenceBounds::new(4.0, 1.5).unwrap());
    }
    let pop = dir.path().join("pop.json");
    write_population_file(&pop, &file).unwrap();
    let out = dir.path().join("r.json");
    let config = RunConfig {
        bounds: BoundsMode::PerAgent,
        ..RunConfig::default()
    };
    assert!(cmd_aggregate(&pop, &config, &out, None).unwrap().converged);
    let r = read_result_file(&out).unwrap();
    assert_eq!(r.partition.len(), 2);

    let labels = planted_labels(&r.population);
    for g in &r.partition {
        let planted: BTreeSet<Option<u64>> = g
            .member_ids
            .iter()
            .map(|id| labels[r.population.agents.iter().position(|a| &a.id == id).unwrap()])
            .collect();
        assert_eq!(planted.len(), 1);
    }

    let s = &report_of(&r).unwrap().partition_summary;
    assert_eq!(s.group_count, 2);
    assert_eq!(s.group_sizes, vec![5, 5]);
}

#[test]
fn result_and_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let trace = dir.path().join("t.csv");
    let outcome = cmd_aggregate(&fixture("example1.json"), &RunConfig::default(), &out, Some(&trace)).unwrap();

    let r = read_result_file(&out).unwrap();
    assert!(r.config.trace);
    let copy = dir.path().join("copy.json");
    write_result_file(&copy, &r).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), fs::read(&out).unwrap());

    let rows = read_trace(&trace).unwrap();
    assert_eq!(rows.len(), outcome.iterations);
    assert!(rows.iter().enumerate().all(|(t, row)| row.t == t));
    let header = fs::read_to_string(&trace).unwrap();
    assert!(header.starts_with(
        "t,alpha,epsilon,edge_count,component_count,max_dx,max_domega,max_consensus_residual\n"
    ));
    assert!(matches!(read_trace(&dir.path().join("none.csv")), Err(CliError::Io { .. })));
}

#[test]
fn rank_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    cmd_aggregate(&fixture("example1.json"), &RunConfig::default(), &out, None).unwrap();
    let mut r = read_result_file(&out).unwrap();

    let set = |r: &mut ResultFile, x: Vec<Vec<f64>>, w: Vec<f64>| {
        r.partition = vec![GroupRecord {
            x_star: x,
            omega_star: w,
            ..r.partition[0].clone()
        }];
        write_result_file(&out, r).unwrap();
    };
    set(&mut r, vec![vec![7.0, 1.0], vec![1.0, 7.0]], vec![0.75, 0.25]);
    assert_eq!(cmd_rank(&out, Some(0)).unwrap(), ["o2 < o1"]);
    assert_eq!(cmd_rank(&out, None).unwrap(), ["group 0: o2 < o1"]);
    set(&mut r, vec![vec![6.0, 5.0], vec![2.0, 3.0]], vec![0.5, 0.5]);
    assert_eq!(cmd_rank(&out, Some(0)).unwrap(), ["o2 < o1"]);
    set(&mut r, vec![vec![4.0, 2.0], vec![4.0, 2.0]], vec![0.5, 0.5]);
    assert_eq!(cmd_rank(&out, Some(0)).unwrap(), ["o1 ~ o2"]);
    assert!(cmd_rank(&out, Some(3)).is_err());
}

#[test]
fn report_singletons_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let mut file = read_population_file(&fixture("example1_bounds.json")).unwrap();
    for a in &mut file.agents {
        a.bounds = Some(valagg::ConfidenceBounds::new(0.5, 0.01).unwrap());
    }
    let pop = dir.path().join("far.json");
    write_population_file(&pop, &file).unwrap();
    let config = RunConfig {
        bounds: BoundsMode::PerAgent,
        ..RunConfig::default()
    };
    let outcome = cmd_aggregate(&pop, &config, &out, None).unwrap();
    assert_eq!((outcome.groups, outcome.iterations), (4, 0));

    let text = cmd_report(&out, false).unwrap();
    assert!(text.starts_with("groups: 4 (sizes [1, 1, 1, 1])\n"), "{text}");
    assert!(text.contains("avg within-group distance: matrix n/a, weights n/a"));
    let json: serde_json::Value = serde_json::from_str(&cmd_report(&out, true).unwrap()).unwrap();
    for u in json["utilities"].as_array().unwrap() {
        assert_eq!(u["matrix_utility"], 0.0);
        assert_eq!(u["weight_utility"], 0.0);
    }
    assert_eq!(json["plot"]["sorted_matrix_utilities"].as_array().unwrap().len(), 4);

    fs::write(&out, "{}").unwrap();
    assert!(matches!(cmd_report(&out, false), Err(CliError::Parse { .. })));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    cmd_synth(&two_clusters(), &a).unwrap();
    cmd_synth(&two_clusters(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let other = SynthSpec {
        seed: 6,
        ..two_clusters()
    };
    assert_ne!(generate(&other).unwrap(), generate(&two_clusters()).unwrap());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = fixture("example1.json");
    let ex1 = ex1.to_str().unwrap();
    let out = dir.path().join("r.json");
    let out = out.to_str().unwrap();

    let o = valagg(&["bounds", "--population", ex1, "--level", "max"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "gamma_x = 14.6969, gamma_omega = 0.489898\n");

    let o = valagg(&["aggregate", "--population", ex1, "--output", out]);
    assert_eq!(o.status.code(), Some(0));
    let o = valagg(&["aggregate", "--population", ex1, "--output", out, "--max-iters", "5"]);
    assert_eq!(o.status.code(), Some(EXIT_NOT_CONVERGED));
    assert!(!read_result_file(Path::new(out)).unwrap().converged);

    let o = valagg(&["rank", "--result", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("group 0: "));
    assert_eq!(valagg(&["report", "--result", out, "--json"]).status.code(), Some(0));

    let o = valagg(&["aggregate", "--population", "/nonexistent/p.json", "--output", out]);
    assert_eq!(o.status.code(), Some(EXIT_IO));
    let o = valagg(&["aggregate", "--population", ex1, "--output", out, "--decay", "0.3"]);
    assert_eq!(o.status.code(), Some(EXIT_INVALID));
    let o = valagg(&["aggregate", "--population", ex1, "--output", out, "--bounds", "q5"]);
    assert_eq!(o.status.code(), Some(EXIT_INVALID));
    assert_eq!(valagg(&["frobnicate"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(valagg(&["--help"]).status.code(), Some(0));

    let synth = dir.path().join("s.json");
    let o = valagg(&[
        "synth",
        "--clusters",
        "3",
        "--agents-per-cluster",
        "2",
        "--separation",
        "100",
        "--output",
        synth.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_INVALID));
}
