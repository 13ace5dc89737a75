//! Planted-cluster population generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use valagg::geometry::project_simplex;

use crate::error::{CliError, Result};
use crate::io::{AgentRecord, PopulationFile};

/// Rejected draws allowed per cluster center.
pub const MAX_CENTER_TRIES: usize = 10_000;

/// Smallest weight a generated agent may hold; validation needs weights in (0, 1).
const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub clusters: usize,
    pub agents_per_cluster: usize,
    pub values: usize,
    pub alternatives: usize,
    pub interval: [f64; 2],
    /// Minimum Frobenius distance between cluster centers.
    pub separation: f64,
    /// Half-width of the uniform noise added to matrix entries. Weights get
    /// the same noise scaled by the interval width.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.interval;
        let bad = |m: &str| Err(CliError::Invalid(format!("synth: {m}")));
        if self.clusters == 0 || self.agents_per_cluster == 0 {
            return bad("need at least one cluster and one agent per cluster");
        }
        if self.values < 2 || self.alternatives == 0 {
            return bad("need at least 2 values and 1 alternative");
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("interval needs finite lo < hi");
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad("separation must be > 0");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be >= 0");
        }
        Ok(())
    }

    fn diameter(&self) -> f64 {
        (self.interval[1] - self.interval[0]) * ((self.values * self.alternatives) as f64).sqrt()
    }
}

fn keep_interior(w: &mut [f64]) {
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= MIN_WEIGHT {
        return;
    }
    let u = 1.0 / w.len() as f64;
    let lambda = (MIN_WEIGHT - min) / (u - min);
    for v in w.iter_mut() {
        *v = (1.0 - lambda) * *v + lambda * u;
    }
}

fn uniform_simplex(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.into_iter().map(|v| v / s).collect();
    keep_interior(&mut w);
    w
}

fn frobenius(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Samples the population. Agents are listed cluster by cluster with ids
/// `a{index}` and `meta.cluster` holding the planted label.
pub fn generate(spec: &SynthSpec) -> Result<PopulationFile> {
    spec.validate()?;
    let [lo, hi] = spec.interval;
    let (na, nv) = (spec.alternatives, spec.values);
    if spec.clusters > 1 && spec.separation > spec.diameter() {
        return Err(CliError::Invalid(format!(
            "synth: separation {} exceeds the box diameter {}",
            spec.separation,
            spec.diameter()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut centers: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(spec.clusters);
    for c in 0..spec.clusters {
        let mut tries = 0;
        let x = loop {
            let x: Vec<f64> = (0..na * nv).map(|_| rng.gen_range(lo..=hi)).collect();
            if centers.iter().all(|(cx, _)| frobenius(cx, &x) >= spec.separation) {
                break x;
            }
            tries += 1;
            if tries >= MAX_CENTER_TRIES {
                return Err(CliError::Invalid(format!(
                    "synth: could not place center {c} at separation {} after {MAX_CENTER_TRIES} draws",
                    spec.separation
                )));
            }
        };
        let w = uniform_simplex(&mut rng, nv);
        centers.push((x, w));
    }

    let weight_noise = spec.noise / (hi - lo);
    let mut agents = Vec::with_capacity(spec.clusters * spec.agents_per_cluster);
    for (c, (cx, cw)) in centers.iter().enumerate() {
        for _ in 0..spec.agents_per_cluster {
            let (x, w) = if spec.noise == 0.0 {
                (cx.clone(), cw.clone())
            } else {
                let x: Vec<f64> = cx
                    .iter()
                    .map(|&v| (v + rng.gen_range(-spec.noise..=spec.noise)).clamp(lo, hi))
                    .collect();
                let raw: Vec<f64> = cw
                    .iter()
                    .map(|&v| v + rng.gen_range(-weight_noise..=weight_noise))
                    .collect();
                let mut w = project_simplex(&raw).into_inner();
                keep_interior(&mut w);
                (x, w)
            };
            let mut meta = Map::new();
            meta.insert("cluster".into(), Value::from(c));
            agents.push(AgentRecord {
                id: format!("a{}", agents.len()),
                matrix: x.chunks(nv).map(<[f64]>::to_vec).collect(),
                weights: w,
                bounds: None,
                meta,
            });
        }
    }

    Ok(PopulationFile {
        values: (1..=nv).map(|j| format!("v{j}")).collect(),
        alternatives: (1..=na).map(|k| format!("o{k}")).collect(),
        interval: spec.interval,
        agents,
    })
}

/// Planted cluster label of every agent, in file order.
pub fn planted_labels(file: &PopulationFile) -> Vec<Option<u64>> {
    file.agents
        .iter()
        .map(|a| a.meta.get("cluster").and_then(Value::as_u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            clusters: 2,
            agents_per_cluster: 5,
            values: 3,
            alternatives: 3,
            interval: [1.0, 7.0],
            separation: 6.0,
            noise: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn zero_noise_repeats_centers() {
        let f = generate(&spec()).unwrap();
        assert_eq!(f.agents.len(), 10);
        for a in &f.agents[1..5] {
            assert_eq!(a.matrix, f.agents[0].matrix);
            assert_eq!(a.weights, f.agents[0].weights);
        }
        assert_ne!(f.agents[0].matrix, f.agents[5].matrix);
        assert_eq!(planted_labels(&f)[7], Some(1));
        f.to_population().unwrap();
    }

    #[test]
    fn noisy_members_are_valid() {
        let mut s = spec();
        s.noise = 0.5;
        s.clusters = 4;
        s.agents_per_cluster = 30;
        let pop = generate(&s).unwrap().to_population().unwrap();
        assert_eq!(pop.agents.len(), 120);
    }

    #[test]
    fn infeasible_separation_fails() {
        let mut s = spec();
        s.separation = 100.0;
        assert!(generate(&s).is_err());
        s.separation = 17.5;
        s.clusters = 40;
        assert!(matches!(generate(&s), Err(CliError::Invalid(m)) if m.contains("could not place")));
    }

    #[test]
    fn interior_guard() {
        let mut w = vec![0.0, 0.3, 0.7];
        keep_interior(&mut w);
        assert!(w.iter().all(|&v| v >= MIN_WEIGHT * (1.0 - 1e-9)));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
