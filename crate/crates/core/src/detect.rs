//! Connected-subgraph detection: attribute files, statistics and reports.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeMap, SparsityModel, Support};
use crate::objectives::{CostFunction, Ebp, Ems, Kulldorff, LeastSquares, NodeData, ScanStatistic};
use crate::solver::{graph_mp, HaltingMode, HaltingReason, SolveResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Ems,
    Kulldorff,
    Ebp,
    /// Denoising least squares, `A = I` and `y` = feature.
    Ls,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Ems => "ems",
            Statistic::Kulldorff => "kulldorff",
            Statistic::Ebp => "ebp",
            Statistic::Ls => "ls",
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ems" => Ok(Statistic::Ems),
            "kulldorff" => Ok(Statistic::Kulldorff),
            "ebp" => Ok(Statistic::Ebp),
            "ls" => Ok(Statistic::Ls),
            other => Err(Error::Validation(format!(
                "unknown statistic {other:?} (expected ems, kulldorff, ebp or ls)"
            ))),
        }
    }
}

/// Cost and discrete score for one statistic on one data set.
pub enum Objective {
    Scan(Box<dyn ScanStatistic>),
    Ls(LeastSquares),
}

impl Objective {
    pub fn new(stat: Statistic, data: &NodeData) -> Result<Self> {
        Ok(match stat {
            Statistic::Ems => Objective::Scan(Box::new(Ems::from_data(data))),
            Statistic::Kulldorff => Objective::Scan(Box::new(Kulldorff::new(data)?)),
            Statistic::Ebp => Objective::Scan(Box::new(Ebp::new(data)?)),
            Statistic::Ls => Objective::Ls(LeastSquares::identity(data.features.clone())),
        })
    }

    pub fn cost(&self) -> &dyn CostFunction {
        match self {
            Objective::Scan(s) => s.as_ref(),
            Objective::Ls(ls) => ls,
        }
    }

    /// Discrete score of `s`; for least squares the captured energy
    /// `Σ_{v∈S} y_v²`. The empty set scores 0.
    pub fn score(&self, s: &Support) -> Result<f64> {
        if s.is_empty() {
            return Ok(0.0);
        }
        match self {
            Objective::Scan(stat) => stat.set_score(s),
            Objective::Ls(ls) => {
                s.validate(ls.dim())?;
                Ok(s.iter().map(|i| ls.observations()[i].powi(2)).sum())
            }
        }
    }
}

/// Parses a node attribute CSV with header `node,feature` or
/// `node,observed,expected`. Every graph node must appear exactly once.
pub fn parse_attrs(text: &str, map: &NodeMap) -> Result<NodeData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let counts = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["node", "feature"] => false,
        ["node", "observed", "expected"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header must be node,feature or node,observed,expected, got {}",
                    header.join(",")
                ),
            })
        }
    };
    let width = header.len();
    let n = map.len();
    let mut values: Vec<Option<(f64, f64)>> = vec![None; n];
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let field = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("{:?} is not a number", &record[i]),
            })
        };
        let id: i64 = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("{:?} is not an integer node id", &record[0]),
        })?;
        let node = map
            .dense(id)
            .ok_or_else(|| Error::Validation(format!("line {line}: node {id} is not in the graph")))?;
        if values[node].is_some() {
            return Err(Error::Validation(format!("line {line}: node {id} listed twice")));
        }
        values[node] = Some(if counts {
            (field(1)?, field(2)?)
        } else {
            (field(1)?, 0.0)
        });
    }
    if let Some(missing) = values.iter().position(Option::is_none) {
        return Err(Error::Validation(format!(
            "node {} has no attributes",
            map.original(missing)
        )));
    }
    let values: Vec<(f64, f64)> = values.into_iter().flatten().collect();
    if counts {
        NodeData::from_counts(
            values.iter().map(|v| v.0).collect(),
            values.iter().map(|v| v.1).collect(),
        )
    } else {
        NodeData::from_raw_features(&values.iter().map(|v| v.0).collect::<Vec<_>>())
    }
}

/// Attribute CSV for `data`: counts when present, else `raw` features.
pub fn serialize_attrs(map: &NodeMap, data: &NodeData, raw: &[f64]) -> String {
    let mut out = String::new();
    match (&data.observed, &data.expected) {
        (Some(o), Some(e)) => {
            out.push_str("node,observed,expected\n");
            for i in 0..map.len() {
                out.push_str(&format!("{},{},{}\n", map.original(i), o[i], e[i]));
            }
        }
        _ => {
            out.push_str("node,feature\n");
            for (i, v) in raw.iter().enumerate() {
                out.push_str(&format!("{},{v}\n", map.original(i)));
            }
        }
    }
    out
}

/// Set-overlap metrics `(precision, recall, F1)`. An empty `found` has
/// precision 1 only when `truth` is also empty; likewise for recall.
pub fn metrics(found: &Support, truth: &Support) -> (f64, f64, f64) {
    let hits = found.intersection_len(truth) as f64;
    let precision = if found.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / found.len() as f64
    };
    let recall = if truth.is_empty() {
        if found.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / truth.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Solver output with its discrete score.
#[derive(Debug, Clone)]
pub struct Detection {
    pub result: SolveResult,
    pub score: f64,
    /// Set when `k` was clamped to the node count.
    pub warning: Option<String>,
    pub model: SparsityModel,
}

/// Runs Graph-MP for `stat`; `k` above the node count is clamped.
pub fn detect(
    graph: &Graph,
    data: &NodeData,
    stat: Statistic,
    k: usize,
    g: usize,
    cfg: &SolverConfig,
) -> Result<Detection> {
    let n = graph.node_count();
    if data.len() != n {
        return Err(Error::Validation(format!(
            "{} attribute rows for {n} nodes",
            data.len()
        )));
    }
    let mut warning = None;
    let mut k = k;
    if k > n {
        warning = Some(format!("k = {k} exceeds the node count; clamped to {n}"));
        k = n;
    }
    let model = SparsityModel::new(k, g.min(k))?;
    if g > k {
        warning = Some(format!("g = {g} exceeds k; clamped to {k}"));
    }
    let objective = Objective::new(stat, data)?;
    let result = graph_mp(objective.cost(), graph, &model, cfg)?;
    let score = objective.score(&result.support)?;
    Ok(Detection {
        result,
        score,
        warning,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub statistic: Statistic,
    pub k: usize,
    pub g: usize,
    pub epsilon: f64,
    pub halting_mode: HaltingMode,
    pub max_iter: usize,
    pub sub_max_iter: usize,
    pub sub_grad_tol: f64,
    pub boost_rounds: usize,
}

/// JSON document written by `detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    /// Original node ids.
    pub support: Vec<i64>,
    pub score: f64,
    pub objective_history: Vec<f64>,
    pub estimate_deltas: Vec<f64>,
    pub iterations: usize,
    pub halting_reason: HaltingReason,
    /// Milliseconds; absent when timing is suppressed.
    pub wall_time_ms: Option<f64>,
    pub config: ConfigEcho,
    pub warning: Option<String>,
}

impl DetectReport {
    pub fn new(det: &Detection, map: &NodeMap, stat: Statistic, cfg: &SolverConfig, timing: bool) -> Self {
        DetectReport {
            support: det.result.support.iter().map(|v| map.original(v)).collect(),
            score: det.score,
            objective_history: det.result.objective_history.clone(),
            estimate_deltas: det.result.estimate_deltas.clone(),
            iterations: det.result.iterations,
            halting_reason: det.result.halting_reason,
            wall_time_ms: timing.then_some(det.result.wall_time.as_secs_f64() * 1e3),
            config: ConfigEcho {
                statistic: stat,
                k: det.model.k,
                g: det.model.g,
                epsilon: cfg.epsilon,
                halting_mode: cfg.halting_mode,
                max_iter: cfg.max_iter,
                sub_max_iter: cfg.sub_max_iter,
                sub_grad_tol: cfg.sub_grad_tol,
                boost_rounds: cfg.boost_rounds,
            },
            warning: det.warning.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(nodes: &[usize]) -> Support {
        Support::new(nodes.to_vec()).unwrap()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(metrics(&s(&[1, 2]), &s(&[1, 2])), (1.0, 1.0, 1.0));
        assert_eq!(metrics(&s(&[0]), &s(&[1])), (0.0, 0.0, 0.0));
        assert_eq!(metrics(&s(&[1, 2]), &s(&[2, 3])), (0.5, 0.5, 0.5));
        assert_eq!(metrics(&Support::empty(), &s(&[1])).0, 0.0);
        assert_eq!(metrics(&Support::empty(), &Support::empty()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn attrs_round_trip() {
        let map = NodeMap::new(vec![10, 20, 30]).unwrap();
        let text = "node,feature\n20,5\n10,0\n# note\n30,10\n";
        let data = parse_attrs(text, &map).unwrap();
        assert_eq!(data.features[0], 0.0);
        assert!((data.features[2] - 0.999).abs() < 1e-15);

        let text = "node,observed,expected\n10,4,1\n20,6,9\n30,0,1\n";
        let data = parse_attrs(text, &map).unwrap();
        assert_eq!(data.observed.as_deref(), Some(&[4.0, 6.0, 0.0][..]));
        let again = parse_attrs(&serialize_attrs(&map, &data, &[]), &map).unwrap();
        assert_eq!(again, data);
    }

    #[test]
    fn attrs_errors() {
        let map = NodeMap::identity(2);
        assert!(matches!(parse_attrs("id,value\n0,1\n", &map), Err(Error::Parse { .. })));
        assert!(matches!(parse_attrs("node,feature\n0,1\n", &map), Err(Error::Validation(_))));
        assert!(matches!(
            parse_attrs("node,feature\n0,1\n0,2\n1,1\n", &map),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_attrs("node,feature\n0,x\n1,1\n", &map),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_attrs("node,feature\n0,1\n7,1\n", &map), Err(Error::Validation(_))));
    }

    #[test]
    fn detect_small_path() {
        let graph = Graph::path(4);
        let data = NodeData {
            features: vec![0.1, 0.9, 0.9, 0.1],
            observed: None,
            expected: None,
        };
        let det = detect(&graph, &data, Statistic::Ems, 2, 1, &SolverConfig::default()).unwrap();
        assert_eq!(det.result.support, s(&[1, 2]));
        assert!((det.score - 1.62).abs() < 1e-12);
        assert!(det.warning.is_none());

        let det = detect(&graph, &data, Statistic::Ems, 9, 1, &SolverConfig::default()).unwrap();
        assert_eq!(det.model.k, 4);
        assert!(det.warning.is_some());
    }
}
