//! Built-in comparison of the approximate oracles against brute force.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exact::{exact_best_subgraph, exact_head_opt, exact_projection};
use crate::graph::{gamma, Graph, SparsityModel, Support};
use crate::objectives::{Ems, ScanStatistic};
use crate::projection::{head_approx, tail_approx, HEAD_FACTOR, TAIL_FACTOR};
use crate::solver::{graph_mp, SolverConfig};
use crate::synth::grow_cluster;
use crate::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Worst observed ratio against the guarantee, where meaningful.
    pub worst: Option<f64>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn line(&self) -> String {
        let worst = self.worst.map(|w| format!(", worst ratio {w:.4}")).unwrap_or_default();
        format!(
            "{} {}: {} instances, {} violations{worst}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.violations
        )
    }
}

/// Paths, cycles and stars on 4, 7 and 10 nodes plus three small grids.
pub fn small_corpus() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for n in [4, 7, 10] {
        out.push((format!("path{n}"), Graph::path(n)));
        out.push((format!("cycle{n}"), Graph::cycle(n)));
        out.push((format!("star{n}"), Graph::star(n)));
    }
    for (r, c) in [(2, 3), (3, 3), (2, 5)] {
        out.push((format!("grid{r}x{c}"), Graph::grid(r, c)));
    }
    out
}

/// Dense gaussian, sparse gaussian, or heavy-tailed nonnegative entries.
pub fn random_signal<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    match rng.gen_range(0..3) {
        0 => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        1 => (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    3.0 * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect(),
        _ => (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(4)).collect(),
    }
}

/// Random model `(k, g)` with `k ≤ n/2` and `g ≤ min(k, 3)`.
pub fn random_model<R: Rng>(rng: &mut R, n: usize) -> SparsityModel {
    let k = rng.gen_range(1..=(n / 2).max(1));
    let g = rng.gen_range(1..=k.min(3));
    SparsityModel::new(k, g).expect("k ≥ g ≥ 1")
}

/// A vector supported on up to `g` BFS-grown clusters of at most `k`
/// nodes in total.
pub fn random_model_vector<R: Rng>(rng: &mut R, graph: &Graph, model: &SparsityModel) -> Vec<f64> {
    let n = graph.node_count();
    let mut x = vec![0.0; n];
    let parts = rng.gen_range(1..=model.g);
    let mut budget = rng.gen_range(parts..=model.k);
    let mut used = Support::empty();
    for p in 0..parts {
        let size = if p + 1 == parts { budget } else { rng.gen_range(1..=budget - (parts - p - 1)) };
        budget -= size;
        let mut starts: Vec<usize> = (0..n).filter(|v| !used.contains(*v)).collect();
        starts.shuffle(rng);
        let Some(&start) = starts.first() else { break };
        let cluster = grow_cluster(graph, start, size, rng);
        used = used.union(&cluster);
    }
    // merged clusters can only lower the component count
    for v in used.iter() {
        let mut value: f64 = rng.sample(StandardNormal);
        if value == 0.0 {
            value = 1.0;
        }
        x[v] = value;
    }
    x
}

/// Runs every check with `per_graph` random inputs per corpus graph.
pub fn run_verify(seed: u64, per_graph: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = small_corpus();
    let mut caps = Check {
        name: "structural caps".into(),
        instances: 0,
        violations: 0,
        worst: None,
    };
    let mut head = Check {
        name: "head factor sqrt(1/14)".into(),
        instances: 0,
        violations: 0,
        worst: Some(f64::INFINITY),
    };
    let mut tail = Check {
        name: "tail factor sqrt(7)".into(),
        instances: 0,
        violations: 0,
        worst: Some(0.0),
    };
    let mut exact = Check {
        name: "tail exact on model vectors".into(),
        instances: 0,
        violations: 0,
        worst: None,
    };
    for (_, graph) in &corpus {
        let n = graph.node_count();
        for _ in 0..per_graph {
            let x = random_signal(&mut rng, n);
            let model = random_model(&mut rng, n);
            let h = head_approx(graph, &x, &model)?;
            let t = tail_approx(graph, &x, &model)?;
            caps.instances += 1;
            if h.len() > model.head_k()
                || gamma(graph, &h)? > model.g
                || t.len() > model.tail_k()
                || gamma(graph, &t)? > model.g
            {
                caps.violations += 1;
            }

            let opt = exact_head_opt(graph, &x, &model)?;
            let got = vector::norm2_on(&x, &h);
            head.instances += 1;
            if got < HEAD_FACTOR * opt - 1e-12 {
                head.violations += 1;
            }
            if opt > 0.0 {
                head.worst = head.worst.map(|w| w.min(got / opt));
            }

            let (_, best) = exact_projection(graph, &x, &model)?;
            let resid = vector::residual_norm(&x, &t);
            tail.instances += 1;
            if resid > TAIL_FACTOR * best + 1e-12 {
                tail.violations += 1;
            }
            if best > 0.0 {
                tail.worst = tail.worst.map(|w| w.max(resid / best));
            }

            let y = random_model_vector(&mut rng, graph, &model);
            let s = tail_approx(graph, &y, &model)?;
            exact.instances += 1;
            if vector::residual_norm(&y, &s) > 1e-12 {
                exact.violations += 1;
            }
        }
    }
    Ok(vec![caps, head, tail, exact, detection_check()?])
}

/// Graph-MP on the small EMS path instance agrees with enumeration.
fn detection_check() -> Result<Check> {
    let graph = Graph::path(4);
    let ems = Ems::new(vec![0.1, 0.9, 0.9, 0.1]);
    let model = SparsityModel::new(2, 1)?;
    let found = graph_mp(&ems, &graph, &model, &SolverConfig::default())?;
    let (best, best_score) = exact_best_subgraph(|s| ems.set_score(s).unwrap_or(f64::NEG_INFINITY), &graph, 2)?;
    let ok = found.support == best && (ems.set_score(&found.support)? - best_score).abs() < 1e-12;
    Ok(Check {
        name: "EMS detection matches enumeration".into(),
        instances: 1,
        violations: usize::from(!ok),
        worst: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::in_model;

    #[test]
    fn model_vectors_are_in_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (_, graph) in small_corpus() {
            for _ in 0..50 {
                let model = random_model(&mut rng, graph.node_count());
                let x = random_model_vector(&mut rng, &graph, &model);
                let s = crate::graph::support_of(&x, 0.0);
                assert!(!s.is_empty());
                assert!(in_model(&graph, &s, &model).unwrap());
            }
        }
    }

    #[test]
    fn quick_verify_passes() {
        for check in run_verify(5, 5).unwrap() {
            assert!(check.passed(), "{}", check.line());
        }
    }
}
