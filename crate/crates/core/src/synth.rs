//! Planted-cluster instances on grid graphs.

use std::collections::VecDeque;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Support};
use crate::objectives::NodeData;

/// Expected count per node in binary mode never drops below this, so that
/// the clean (`K = 0`) instance still has positive baselines.
pub const MIN_EXPECTED: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// `c(v) ~ N(μ, 1)` inside the cluster, `N(0, 1)` outside.
    GaussianMean,
    /// Cluster indicator with `round(K% · n)` node values flipped.
    BinarySensor,
}

impl SynthMode {
    pub fn name(self) -> &'static str {
        match self {
            SynthMode::GaussianMean => "gaussian",
            SynthMode::BinarySensor => "binary",
        }
    }
}

impl std::str::FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian_mean" => Ok(SynthMode::GaussianMean),
            "binary" | "binary_sensor" => Ok(SynthMode::BinarySensor),
            other => Err(Error::Validation(format!("unknown synth mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub cluster_size: usize,
    pub signal_mu: f64,
    /// Percent of nodes flipped in binary mode.
    pub flip_rate: f64,
    pub seed: u64,
    pub mode: SynthMode,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Validation("grid must have at least one row and column".into()));
        }
        if self.cluster_size == 0 {
            return Err(Error::Validation("cluster size must be positive".into()));
        }
        if self.cluster_size > self.rows * self.cols {
            return Err(Error::Validation(format!(
                "cluster of {} nodes does not fit a {}x{} grid",
                self.cluster_size, self.rows, self.cols
            )));
        }
        if !(0.0..=100.0).contains(&self.flip_rate) {
            return Err(Error::Validation(format!(
                "flip rate {} is outside [0, 100]",
                self.flip_rate
            )));
        }
        if !self.signal_mu.is_finite() {
            return Err(Error::Validation("signal mean must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: Graph,
    pub data: NodeData,
    /// Raw feature before normalization.
    pub raw: Vec<f64>,
    pub truth: Support,
}

/// Connected set of `size` nodes: breadth-first from `start`, visiting
/// neighbors in random order.
pub fn grow_cluster<R: Rng>(graph: &Graph, start: usize, size: usize, rng: &mut R) -> Support {
    let n = graph.node_count();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(size);
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        if order.len() == size {
            break;
        }
        let mut next: Vec<usize> = graph.neighbors(v).iter().map(|&(u, _)| u).collect();
        next.shuffle(rng);
        for u in next {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    Support::from_unsorted(order)
}

pub fn synth_instance(spec: &SynthSpec) -> Result<Instance> {
    spec.validate()?;
    let graph = Graph::grid(spec.rows, spec.cols);
    let n = graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = rng.gen_range(0..n);
    let truth = grow_cluster(&graph, start, spec.cluster_size, &mut rng);

    let (raw, data) = match spec.mode {
        SynthMode::GaussianMean => {
            let noise = Normal::new(0.0, 1.0).expect("unit normal");
            let mut raw: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            for v in truth.iter() {
                raw[v] += spec.signal_mu;
            }
            let data = NodeData::from_raw_features(&raw)?;
            (raw, data)
        }
        SynthMode::BinarySensor => {
            let mut observed = vec![0.0; n];
            for v in truth.iter() {
                observed[v] = 1.0;
            }
            let flips = (spec.flip_rate / 100.0 * n as f64).round() as usize;
            for v in index::sample(&mut rng, n, flips.min(n)) {
                observed[v] = 1.0 - observed[v];
            }
            let expected = vec![(spec.flip_rate / 100.0).max(MIN_EXPECTED); n];
            let data = NodeData::from_counts(observed.clone(), expected)?;
            (observed, data)
        }
    };
    Ok(Instance {
        graph,
        data,
        raw,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gamma;

    fn spec(mode: SynthMode, flip_rate: f64) -> SynthSpec {
        SynthSpec {
            rows: 8,
            cols: 8,
            cluster_size: 10,
            signal_mu: 3.0,
            flip_rate,
            seed: 7,
            mode,
        }
    }

    #[test]
    fn clean_binary_instance() {
        let inst = synth_instance(&spec(SynthMode::BinarySensor, 0.0)).unwrap();
        let observed = inst.data.observed.as_ref().unwrap();
        for v in 0..64 {
            assert_eq!(observed[v], if inst.truth.contains(v) { 1.0 } else { 0.0 });
        }
        assert_eq!(inst.truth.len(), 10);
        assert_eq!(gamma(&inst.graph, &inst.truth).unwrap(), 1);
    }

    #[test]
    fn exact_flip_count() {
        let clean = synth_instance(&spec(SynthMode::BinarySensor, 0.0)).unwrap();
        let noisy = synth_instance(&spec(SynthMode::BinarySensor, 10.0)).unwrap();
        let differing = clean
            .raw
            .iter()
            .zip(&noisy.raw)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(differing, 6); // round(0.1 * 64)
        assert_eq!(clean.truth, noisy.truth);
    }

    #[test]
    fn deterministic_and_saturating() {
        let a = synth_instance(&spec(SynthMode::GaussianMean, 0.0)).unwrap();
        let b = synth_instance(&spec(SynthMode::GaussianMean, 0.0)).unwrap();
        assert_eq!(a, b);
        let full = SynthSpec {
            rows: 4,
            cols: 4,
            cluster_size: 16,
            ..spec(SynthMode::GaussianMean, 0.0)
        };
        let inst = synth_instance(&full).unwrap();
        assert_eq!(inst.truth.len(), 16);
        let too_big = SynthSpec {
            cluster_size: 17,
            ..full
        };
        assert!(matches!(synth_instance(&too_big), Err(Error::Validation(_))));
        let bad_rate = SynthSpec {
            flip_rate: 101.0,
            ..full
        };
        assert!(synth_instance(&bad_rate).is_err());
    }
}
