//! Planted-cluster benchmark grid, run in parallel, reported as CSV.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect, metrics, Objective, Statistic};
use crate::error::{Error, Result};
use crate::solver::SolverConfig;
use crate::synth::{synth_instance, SynthMode, SynthSpec};

pub const METHOD: &str = "graph_mp";

/// Cartesian grid of benchmark cells sharing one grid shape and signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub rows: usize,
    pub cols: usize,
    pub cluster_size: usize,
    pub signal_mu: f64,
    pub modes: Vec<SynthMode>,
    pub flip_rates: Vec<f64>,
    pub statistics: Vec<Statistic>,
    pub ks: Vec<usize>,
    pub g: usize,
    pub repeats: usize,
    pub master_seed: u64,
}

/// One `(cell, seed)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: String,
    pub statistic: String,
    pub mode: String,
    pub flip_rate: f64,
    pub k: usize,
    pub seed: u64,
    /// `ok`, or the error kind of a failed cell.
    pub status: String,
    pub score: Option<f64>,
    pub planted_score: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iterations: Option<usize>,
    pub support_size: Option<usize>,
    /// Space-separated node ids.
    pub support: String,
    pub wall_time_ms: Option<f64>,
    pub message: String,
}

/// Instance seed for repeat `r`: the same across cells, so every
/// statistic and k sees the same instances.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(r as u64);
    rng.gen()
}

#[derive(Debug, Clone, Copy)]
struct Job {
    mode: SynthMode,
    flip_rate: f64,
    statistic: Statistic,
    k: usize,
    seed: u64,
}

impl BenchPlan {
    fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &mode in &self.modes {
            for &flip_rate in &self.flip_rates {
                for &statistic in &self.statistics {
                    for &k in &self.ks {
                        for r in 0..self.repeats {
                            jobs.push(Job {
                                mode,
                                flip_rate,
                                statistic,
                                k,
                                seed: repeat_seed(self.master_seed, r),
                            });
                        }
                    }
                }
            }
        }
        jobs
    }

    fn run_job(&self, job: Job, cfg: &SolverConfig) -> BenchRecord {
        let mut record = BenchRecord {
            method: METHOD.into(),
            statistic: job.statistic.name().into(),
            mode: job.mode.name().into(),
            flip_rate: job.flip_rate,
            k: job.k,
            seed: job.seed,
            status: "ok".into(),
            score: None,
            planted_score: None,
            precision: None,
            recall: None,
            f1: None,
            iterations: None,
            support_size: None,
            support: String::new(),
            wall_time_ms: None,
            message: String::new(),
        };
        let outcome = (|| -> Result<()> {
            let spec = SynthSpec {
                rows: self.rows,
                cols: self.cols,
                cluster_size: self.cluster_size,
                signal_mu: self.signal_mu,
                flip_rate: job.flip_rate,
                seed: job.seed,
                mode: job.mode,
            };
            let inst = synth_instance(&spec)?;
            let det = detect(&inst.graph, &inst.data, job.statistic, job.k, self.g, cfg)?;
            let planted = Objective::new(job.statistic, &inst.data)?.score(&inst.truth)?;
            let (p, r, f1) = metrics(&det.result.support, &inst.truth);
            record.score = Some(det.score);
            record.planted_score = Some(planted);
            record.precision = Some(p);
            record.recall = Some(r);
            record.f1 = Some(f1);
            record.iterations = Some(det.result.iterations);
            record.support_size = Some(det.result.support.len());
            record.support = det
                .result
                .support
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            record.wall_time_ms = Some(det.result.wall_time.as_secs_f64() * 1e3);
            Ok(())
        })();
        if let Err(e) = outcome {
            record.status = e.kind().into();
            record.message = e.to_string();
        }
        record
    }
}

/// Runs every cell on up to `workers` threads. Rows come back sorted by
/// `(mode, flip_rate, statistic, k, seed)` whatever the parallelism.
pub fn run_bench(plan: &BenchPlan, cfg: &SolverConfig, workers: usize) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let jobs = plan.jobs();
    let mut records: Vec<BenchRecord> =
        pool.install(|| jobs.par_iter().map(|&job| plan.run_job(job, cfg)).collect());
    records.sort_by(|a, b| {
        (&a.mode, a.flip_rate, &a.statistic, a.k, a.seed)
            .partial_cmp(&(&b.mode, b.flip_rate, &b.statistic, b.k, b.seed))
            .expect("finite flip rates")
    });
    Ok(records)
}

/// CSV with a header row; `timing = false` blanks the wall-time column so
/// output is byte-identical across runs.
pub fn to_csv(records: &[BenchRecord], timing: bool) -> Result<String> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer
        .write_record(BENCH_COLUMNS)
        .map_err(|e| Error::Io(e.to_string()))?;
    for record in records {
        let mut row = record.clone();
        if !timing {
            row.wall_time_ms = None;
        }
        writer.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub const BENCH_COLUMNS: [&str; 17] = [
    "method",
    "statistic",
    "mode",
    "flip_rate",
    "k",
    "seed",
    "status",
    "score",
    "planted_score",
    "precision",
    "recall",
    "f1",
    "iterations",
    "support_size",
    "support",
    "wall_time_ms",
    "message",
];
