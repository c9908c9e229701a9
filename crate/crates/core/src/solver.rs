//! The Graph-MP iteration, its restricted subsolver and halting rules.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{support_of, Graph, SparsityModel, Support};
use crate::objectives::CostFunction;
use crate::projection::{ModelProjection, PcsfProjection};
use crate::vector;

const ARMIJO_C1: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltingMode {
    /// `|f(x^{i+1}) − f(x^i)| ≤ ε`
    ObjectiveChange,
    /// `‖x^{i+1} − x^i‖₂ ≤ ε`
    EstimateChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsolver {
    ProjectedGradient,
    /// `b_Ω = A_Ω⁺ y`; only for least-squares costs.
    ClosedFormLeastSquares,
}

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `x⁰ = 0`, first head step driven by the cost's start gradient.
    Zero,
    /// `x⁰ = t·1`.
    Uniform(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub epsilon: f64,
    pub halting_mode: HaltingMode,
    pub subsolver: Subsolver,
    pub sub_max_iter: usize,
    pub sub_grad_tol: f64,
    pub boost_rounds: usize,
    pub support_tol: f64,
    pub init: Init,
    /// Keep every iterate `x^i` in the result.
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 50,
            epsilon: 1e-3,
            halting_mode: HaltingMode::ObjectiveChange,
            subsolver: Subsolver::ProjectedGradient,
            sub_max_iter: 1000,
            sub_grad_tol: 1e-6,
            boost_rounds: 1,
            support_tol: 0.0,
            init: Init::Zero,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Validation("max_iter must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation("epsilon must be positive".into()));
        }
        if self.sub_max_iter == 0 {
            return Err(Error::Validation("sub_max_iter must be at least 1".into()));
        }
        if !(self.sub_grad_tol > 0.0) {
            return Err(Error::Validation("sub_grad_tol must be positive".into()));
        }
        if self.boost_rounds == 0 {
            return Err(Error::Validation("boost_rounds must be at least 1".into()));
        }
        if !(self.support_tol >= 0.0) {
            return Err(Error::Validation("support_tol must be nonnegative".into()));
        }
        if let Init::Uniform(t) = self.init {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Validation("uniform start must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltingReason {
    Converged,
    MaxIterations,
    /// The head of the gradient was empty.
    Stationary,
}

/// One pass of the main loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub head: Support,
    pub omega_size: usize,
    pub tail: Support,
    pub sub_iterations: usize,
    pub sub_converged: bool,
    /// Closed form fell back to the minimum-norm solution.
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_star: Vec<f64>,
    pub support: Support,
    /// `f(x^i)`, starting at `x⁰` when the cost is defined there.
    pub objective_history: Vec<f64>,
    /// `‖x^{i+1} − x^i‖₂` per iteration.
    pub estimate_deltas: Vec<f64>,
    pub iterations: usize,
    pub halting_reason: HaltingReason,
    pub wall_time: Duration,
    pub steps: Vec<Step>,
    /// `x⁰, x¹, …` when requested.
    pub iterates: Option<Vec<Vec<f64>>>,
}

/// Values the halting rules look at.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub objectives: Vec<f64>,
    pub estimate_deltas: Vec<f64>,
}

/// Whether the last recorded iteration satisfies the configured rule.
pub fn halting_check(history: &History, cfg: &SolverConfig) -> bool {
    match cfg.halting_mode {
        HaltingMode::ObjectiveChange => match history.objectives.as_slice() {
            [.., prev, last] => (last - prev).abs() <= cfg.epsilon,
            _ => false,
        },
        HaltingMode::EstimateChange => history
            .estimate_deltas
            .last()
            .is_some_and(|d| *d <= cfg.epsilon),
    }
}

/// Outcome of a restricted minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Restricted {
    pub b: Vec<f64>,
    pub iterations: usize,
    /// Norm of the (projected) gradient on `Ω` at `b`.
    pub grad_norm: f64,
    pub converged: bool,
    pub singular: bool,
}

fn project(x: &mut [f64], omega: &Support, bounds: Option<(f64, f64)>) {
    if let Some((lo, hi)) = bounds {
        for i in omega.iter() {
            x[i] = x[i].clamp(lo, hi);
        }
    }
}

fn check_finite(g: &[f64]) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(())
}

/// Stationarity measure `‖P(x − ∇f) − x‖` over `Ω`; the plain restricted
/// gradient norm without a box.
fn projected_grad_norm(x: &[f64], grad: &[f64], omega: &Support, bounds: Option<(f64, f64)>) -> f64 {
    omega
        .iter()
        .map(|i| {
            let d = match bounds {
                Some((lo, hi)) => (x[i] - grad[i]).clamp(lo, hi) - x[i],
                None => -grad[i],
            };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `argmin f(x)` subject to `x_i = 0` off `omega`.
pub fn restricted_minimize(
    cost: &dyn CostFunction,
    omega: &Support,
    warm_start: &[f64],
    cfg: &SolverConfig,
) -> Result<Restricted> {
    if omega.is_empty() {
        return Err(Error::Validation("restricted minimization over an empty support".into()));
    }
    omega.validate(cost.dim())?;
    if warm_start.len() != cost.dim() {
        return Err(Error::Validation("warm start has the wrong length".into()));
    }
    if cfg.subsolver == Subsolver::ClosedFormLeastSquares {
        let ls = cost.as_least_squares().ok_or_else(|| {
            Error::Validation("closed-form subsolver needs a least-squares cost".into())
        })?;
        let (b, singular) = ls.restricted_solution(omega)?;
        let grad = cost.gradient(&b)?;
        return Ok(Restricted {
            grad_norm: vector::norm2_on(&grad, omega),
            b,
            iterations: 0,
            converged: true,
            singular,
        });
    }

    let bounds = cost.bounds();
    let mut x = cost.feasible_start(omega, warm_start);
    project(&mut x, omega, bounds);
    let mut fx = cost.value(&x)?;
    let mut grad = cost.gradient(&x)?;
    check_finite(&grad)?;
    let mut grad_norm = projected_grad_norm(&x, &grad, omega, bounds);
    let mut iterations = 0;
    while grad_norm > cfg.sub_grad_tol && iterations < cfg.sub_max_iter {
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = x.clone();
            for i in omega.iter() {
                trial[i] -= step * grad[i];
            }
            project(&mut trial, omega, bounds);
            let decrease: f64 = omega.iter().map(|i| grad[i] * (trial[i] - x[i])).sum();
            // points outside the cost's domain count as failed steps
            if let Ok(ft) = cost.value(&trial) {
                if ft <= fx + ARMIJO_C1 * decrease {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= ARMIJO_SHRINK;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        x = trial;
        fx = ft;
        grad = cost.gradient(&x)?;
        check_finite(&grad)?;
        grad_norm = projected_grad_norm(&x, &grad, omega, bounds);
    }
    Ok(Restricted {
        converged: grad_norm <= cfg.sub_grad_tol,
        b: x,
        iterations,
        grad_norm,
        singular: false,
    })
}

/// Graph-MP with the PCSF head and tail projections.
pub fn graph_mp(
    cost: &dyn CostFunction,
    graph: &Graph,
    model: &SparsityModel,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    let projection = PcsfProjection {
        boost_rounds: cfg.boost_rounds,
    };
    graph_mp_with(cost, graph, model, cfg, &projection)
}

/// Graph-MP with caller-supplied projection oracles.
pub fn graph_mp_with(
    cost: &dyn CostFunction,
    graph: &Graph,
    model: &SparsityModel,
    cfg: &SolverConfig,
    projection: &dyn ModelProjection,
) -> Result<SolveResult> {
    let started = Instant::now();
    cfg.validate()?;
    let n = graph.node_count();
    if cost.dim() != n {
        return Err(Error::Validation(format!(
            "cost has dimension {} but the graph has {n} nodes",
            cost.dim()
        )));
    }
    if model.k > n {
        return Err(Error::Validation(format!("k = {} exceeds n = {n}", model.k)));
    }

    let mut x = match cfg.init {
        Init::Zero => vec![0.0; n],
        Init::Uniform(t) => vec![t; n],
    };
    let mut history = History::default();
    if let Ok(f0) = cost.value(&x) {
        history.objectives.push(f0);
    }
    let mut iterates = cfg.record_iterates.then(|| vec![x.clone()]);
    let mut steps = Vec::new();
    let mut reason = HaltingReason::MaxIterations;
    let at = |iteration: usize| move |e: Error| Error::Solver {
        iteration,
        source: Box::new(e),
    };

    for i in 0..cfg.max_iter {
        let grad = if i == 0 {
            cost.start_gradient(&x)
        } else {
            cost.gradient(&x)
        }
        .map_err(at(i))?;
        check_finite(&grad)?;
        let head = projection.head(graph, &grad, model)?;
        if head.is_empty() {
            reason = HaltingReason::Stationary;
            break;
        }
        let omega = head.union(&support_of(&x, 0.0));
        let sub = restricted_minimize(cost, &omega, &x, cfg).map_err(at(i))?;
        let tail = projection.tail(graph, &sub.b, model)?;
        let next = vector::restrict(&sub.b, &tail);
        let objective = cost.value(&next).map_err(at(i))?;

        history.objectives.push(objective);
        history.estimate_deltas.push(vector::distance(&next, &x));
        steps.push(Step {
            head,
            omega_size: omega.len(),
            tail,
            sub_iterations: sub.iterations,
            sub_converged: sub.converged,
            singular: sub.singular,
        });
        x = next;
        if let Some(list) = iterates.as_mut() {
            list.push(x.clone());
        }
        if halting_check(&history, cfg) {
            reason = HaltingReason::Converged;
            break;
        }
    }

    Ok(SolveResult {
        support: support_of(&x, cfg.support_tol),
        x_star: x,
        objective_history: history.objectives,
        estimate_deltas: history.estimate_deltas,
        iterations: steps.len(),
        halting_reason: reason,
        wall_time: started.elapsed(),
        steps,
        iterates,
    })
}

/// Constants of the convergence guarantee for a cost with the given
/// contraction `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrscDiagnostics {
    pub xi: f64,
    pub delta: f64,
    /// `c_H(1−δ) − δ`
    pub eta: f64,
    /// `(1+c_T)·√(1−η²)/(1−δ)`
    pub alpha: f64,
    /// `ξ(1+c_T)/(1−δ)·[(1+c_H)/η + η(1+c_H)/√(1−η²) + 1]`; undefined when
    /// `η ≤ 0`.
    pub beta: Option<f64>,
    pub shrinkage_ok: bool,
    pub c_head: f64,
    pub c_tail: f64,
    /// `c_H² > 1 − 1/(1+c_T)²`
    pub head_tail_condition: bool,
}

/// Whether a pair of head and tail factors admits geometric convergence.
pub fn head_tail_condition(c_head: f64, c_tail: f64) -> bool {
    c_head * c_head > 1.0 - 1.0 / ((1.0 + c_tail) * (1.0 + c_tail))
}

/// Constants for the relaxed EMS cost with largest feature `c_hat`, step
/// parameter `xi` and head factor boosted by `boost_rounds`.
pub fn wrsc_constants_ems(c_hat: f64, xi: f64, boost_rounds: usize) -> Result<WrscDiagnostics> {
    use crate::projection::{boosted_head_factor, HEAD_FACTOR, TAIL_FACTOR};
    if !(0.0..1.0).contains(&c_hat) {
        return Err(Error::Domain(format!("c_hat must lie in [0, 1), got {c_hat}")));
    }
    let upper = 2.0 * (1.0 - c_hat * c_hat);
    if !(xi > 0.0 && xi < upper) {
        return Err(Error::Domain(format!("xi must lie in (0, {upper}), got {xi}")));
    }
    if boost_rounds == 0 {
        return Err(Error::Domain("boost rounds must be at least 1".into()));
    }
    let delta = (1.0 - 2.0 * xi * (1.0 - c_hat * c_hat) + xi * xi).max(0.0).sqrt();
    let c_head = boosted_head_factor(HEAD_FACTOR, boost_rounds);
    Ok(wrsc_constants(xi, delta, c_head, TAIL_FACTOR))
}

/// Constants from a contraction `δ < 1` and head/tail factors.
pub fn wrsc_constants(xi: f64, delta: f64, c_head: f64, c_tail: f64) -> WrscDiagnostics {
    let eta = c_head * (1.0 - delta) - delta;
    let alpha = (1.0 + c_tail) * (1.0 - eta * eta).max(0.0).sqrt() / (1.0 - delta);
    let beta = (eta > 0.0).then(|| {
        let root = (1.0 - eta * eta).sqrt();
        xi * (1.0 + c_tail) / (1.0 - delta)
            * ((1.0 + c_head) / eta + eta * (1.0 + c_head) / root + 1.0)
    });
    WrscDiagnostics {
        xi,
        delta,
        eta,
        alpha,
        beta,
        shrinkage_ok: alpha < 1.0,
        c_head,
        c_tail,
        head_tail_condition: head_tail_condition(c_head, c_tail),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Ems, LeastSquares, ScanStatistic};
    use crate::projection::{HEAD_FACTOR, TAIL_FACTOR};

    fn s(nodes: &[usize]) -> Support {
        Support::new(nodes.to_vec()).unwrap()
    }

    #[test]
    fn halting_rules() {
        let cfg = SolverConfig::default();
        let h = |objectives: Vec<f64>| History {
            objectives,
            estimate_deltas: vec![],
        };
        assert!(halting_check(&h(vec![10.0, 10.0005]), &cfg));
        assert!(!halting_check(&h(vec![10.0, 9.0]), &cfg));
        assert!(!halting_check(&h(vec![10.0]), &cfg));
        let est = SolverConfig {
            halting_mode: HaltingMode::EstimateChange,
            ..cfg
        };
        let h = History {
            objectives: vec![],
            estimate_deltas: vec![0.0],
        };
        assert!(halting_check(&h, &est));
    }

    #[test]
    fn restricted_examples() {
        let cfg = SolverConfig::default();
        let ls = LeastSquares::identity(vec![1.0, 5.0, 7.0]);
        let r = restricted_minimize(&ls, &s(&[0, 2]), &[0.0; 3], &cfg).unwrap();
        assert!(r.converged);
        assert!((r.b[0] - 1.0).abs() < 1e-6 && (r.b[2] - 7.0).abs() < 1e-6);
        assert_eq!(r.b[1], 0.0);

        let closed = SolverConfig {
            subsolver: Subsolver::ClosedFormLeastSquares,
            ..cfg
        };
        let r = restricted_minimize(&ls, &s(&[0, 2]), &[0.0; 3], &closed).unwrap();
        assert_eq!(r.b, vec![1.0, 0.0, 7.0]);

        // single node: argmin −c²t + t²/2 is t = c²
        let ems = Ems::new(vec![0.2, 0.7, 0.4]);
        let r = restricted_minimize(&ems, &s(&[1]), &[0.0; 3], &cfg).unwrap();
        assert!((r.b[1] - 0.49).abs() < 1e-6);
        assert_eq!((r.b[0], r.b[2]), (0.0, 0.0));

        // already optimal
        let r = restricted_minimize(&ls, &s(&[0, 2]), &[1.0, 0.0, 7.0], &cfg).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.b, vec![1.0, 0.0, 7.0]);

        assert!(restricted_minimize(&ls, &Support::empty(), &[0.0; 3], &cfg).is_err());
        assert!(restricted_minimize(&ems, &s(&[0]), &[0.0; 3], &closed).is_err());
    }

    #[test]
    fn ems_grid_search_agrees() {
        let ems = Ems::new(vec![0.35, 0.0]);
        let r = restricted_minimize(&ems, &s(&[0]), &[0.0; 2], &SolverConfig::default()).unwrap();
        let best = (1..=10_000)
            .map(|i| i as f64 * 1e-4)
            .min_by(|a, b| {
                let fa = ems.value(&[*a, 0.0]).unwrap();
                let fb = ems.value(&[*b, 0.0]).unwrap();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((r.b[0] - best).abs() <= 1e-4);
    }

    #[test]
    fn recovers_model_vector_in_one_step() {
        let graph = Graph::path(8);
        let mut y = vec![0.0; 8];
        y[2] = 1.5;
        y[3] = -2.0;
        y[4] = 0.7;
        let ls = LeastSquares::identity(y.clone());
        let model = SparsityModel::new(3, 1).unwrap();
        let cfg = SolverConfig {
            subsolver: Subsolver::ClosedFormLeastSquares,
            ..SolverConfig::default()
        };
        let out = graph_mp(&ls, &graph, &model, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.halting_reason, HaltingReason::Stationary);
        assert_eq!(out.x_star, y);
        assert_eq!(out.support, s(&[2, 3, 4]));
    }

    #[test]
    fn ems_on_small_path() {
        let graph = Graph::path(4);
        let ems = Ems::new(vec![0.1, 0.9, 0.9, 0.1]);
        let model = SparsityModel::new(2, 1).unwrap();
        let out = graph_mp(&ems, &graph, &model, &SolverConfig::default()).unwrap();
        assert_eq!(out.support, s(&[1, 2]));
        assert!((ems.set_score(&out.support).unwrap() - 1.62).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_once_reached() {
        let graph = Graph::path(5);
        let ls = LeastSquares::identity(vec![0.0, 1.0, 1.0, 0.0, 0.0]);
        let model = SparsityModel::new(2, 1).unwrap();
        let cfg = SolverConfig {
            init: Init::Uniform(0.5),
            record_iterates: true,
            epsilon: 1e-12,
            ..SolverConfig::default()
        };
        let out = graph_mp(&ls, &graph, &model, &cfg).unwrap();
        let iterates = out.iterates.unwrap();
        let last = iterates.last().unwrap();
        assert!(vector::distance(last, &[0.0, 1.0, 1.0, 0.0, 0.0]) < 1e-6);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            epsilon: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_iter: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let graph = Graph::path(3);
        let ls = LeastSquares::identity(vec![1.0; 3]);
        let model = SparsityModel::new(4, 1).unwrap();
        assert!(graph_mp(&ls, &graph, &model, &SolverConfig::default()).is_err());
    }

    #[test]
    fn diagnostics() {
        let d = wrsc_constants_ems(0.0, 1.0, 1).unwrap();
        assert_eq!(d.delta, 0.0);
        assert!(!d.head_tail_condition);
        assert_eq!(d.shrinkage_ok, d.alpha < 1.0);
        let d = wrsc_constants_ems(0.5f64.sqrt(), 0.5, 1).unwrap();
        assert!((d.delta - 0.75f64.sqrt()).abs() < 1e-12);
        assert!(d.beta.is_none());
        assert!(wrsc_constants_ems(0.5, 2.0, 1).is_err());
        assert!(!head_tail_condition(HEAD_FACTOR, TAIL_FACTOR));
        // many boosting rounds push c_H towards 1 and satisfy the condition
        assert!(head_tail_condition(crate::projection::boosted_head_factor(HEAD_FACTOR, 400), TAIL_FACTOR));
    }
}
