//! Differentiable costs: relaxed graph scan statistics and least squares.
//!
//! Each scan statistic `F` is turned into a cost `f(x) = −F(x) + ½‖x‖²`
//! over a relaxed indicator `x`, so that `f(1_S) = −F(S) + |S|/2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Support;
use crate::vector;

/// Denominators below this are treated as singular.
pub const DOMAIN_FLOOR: f64 = 1e-8;

/// Upper end of normalized features is `1 − FEATURE_MARGIN`.
pub const FEATURE_MARGIN: f64 = 1e-3;

/// A differentiable cost `f: ℝⁿ → ℝ`.
pub trait CostFunction: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Box `[lo, hi]` every coordinate is kept in during minimization.
    fn bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// Gradient used to pick the first head support from `x`. Differs from
    /// [`CostFunction::gradient`] only where the latter is undefined at the
    /// starting point.
    fn start_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradient(x)
    }

    /// An admissible point supported on `omega`, preferring `warm`.
    fn feasible_start(&self, omega: &Support, warm: &[f64]) -> Vec<f64> {
        vector::restrict(warm, omega)
    }

    /// Closed-form restricted minimizer, when one exists.
    fn as_least_squares(&self) -> Option<&LeastSquares> {
        None
    }
}

/// A discrete score over node sets whose relaxation is a [`CostFunction`].
pub trait ScanStatistic: CostFunction {
    fn set_score(&self, s: &Support) -> Result<f64>;
}

/// Per-node inputs of the scan statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    /// Normalized feature `c_i ∈ [0, 1)` for the elevated mean scan.
    pub features: Vec<f64>,
    pub observed: Option<Vec<f64>>,
    pub expected: Option<Vec<f64>>,
}

impl NodeData {
    pub fn from_raw_features(raw: &[f64]) -> Result<Self> {
        Ok(NodeData {
            features: normalize_features(raw)?,
            observed: None,
            expected: None,
        })
    }

    /// Counts with the feature set to the normalized ratio
    /// `observed / expected`.
    pub fn from_counts(observed: Vec<f64>, expected: Vec<f64>) -> Result<Self> {
        if observed.len() != expected.len() {
            return Err(Error::Validation(
                "observed and expected counts differ in length".into(),
            ));
        }
        if observed.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(
                "observed counts must be finite and nonnegative".into(),
            ));
        }
        if expected.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Validation(
                "expected counts must be finite and positive".into(),
            ));
        }
        let ratio: Vec<f64> = observed.iter().zip(&expected).map(|(o, e)| o / e).collect();
        Ok(NodeData {
            features: normalize_features(&ratio)?,
            observed: Some(observed),
            expected: Some(expected),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn counts(&self) -> Result<(&[f64], &[f64])> {
        match (&self.observed, &self.expected) {
            (Some(o), Some(e)) => Ok((o, e)),
            _ => Err(Error::Validation(
                "statistic requires observed and expected counts".into(),
            )),
        }
    }
}

/// Affine, order-preserving map of `raw` onto `[0, 1 − FEATURE_MARGIN]`.
/// Constant input maps to all zeros.
pub fn normalize_features(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Validation("no features to normalize".into()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite feature value".into()));
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.0; raw.len()]);
    }
    let scale = (1.0 - FEATURE_MARGIN) / (hi - lo);
    Ok(raw.iter().map(|v| (v - lo) * scale).collect())
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Validation(format!(
            "vector length {} does not match dimension {expected}",
            x.len()
        )));
    }
    Ok(())
}

fn half_sq_norm(x: &[f64]) -> f64 {
    0.5 * vector::dot(x, x)
}

/// Elevated mean scan: `F(S) = (Σ_{v∈S} c_v)² / |S|`, relaxed to
/// `f(x) = −(cᵀx)² / (1ᵀx) + ½‖x‖²`.
#[derive(Debug, Clone)]
pub struct Ems {
    c: Vec<f64>,
    unit_box: bool,
}

impl Ems {
    /// Relaxation over the unit box `[0, 1]ⁿ`.
    pub fn new(features: Vec<f64>) -> Self {
        Ems {
            c: features,
            unit_box: true,
        }
    }

    pub fn from_data(data: &NodeData) -> Self {
        Ems::new(data.features.clone())
    }

    /// Drops the box: iterates range over `ℝⁿ` with `1ᵀx > 0`.
    pub fn unconstrained(mut self) -> Self {
        self.unit_box = false;
        self
    }

    pub fn features(&self) -> &[f64] {
        &self.c
    }

    /// Largest feature `ĉ`.
    pub fn c_hat(&self) -> f64 {
        self.c.iter().cloned().fold(0.0, f64::max)
    }

    fn sums(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.c.len(), x)?;
        let total: f64 = x.iter().sum();
        if total <= DOMAIN_FLOOR {
            return Err(Error::Domain(format!(
                "EMS relaxation needs 1ᵀx > {DOMAIN_FLOOR}, got {total}"
            )));
        }
        Ok((vector::dot(&self.c, x), total))
    }
}

impl CostFunction for Ems {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (cx, total) = self.sums(x)?;
        Ok(-cx * cx / total + half_sq_norm(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (cx, total) = self.sums(x)?;
        let ratio = cx / total;
        Ok(self
            .c
            .iter()
            .zip(x)
            .map(|(c, xi)| -2.0 * ratio * c + ratio * ratio + xi)
            .collect())
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        self.unit_box.then_some((0.0, 1.0))
    }

    /// At `x = 0` the ratio `cᵀx / 1ᵀx` is undefined; the first head step is
    /// driven by `−2 · mean(c) · c` instead.
    fn start_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.c.len(), x)?;
        if x.iter().all(|&v| v == 0.0) {
            let mean = self.c.iter().sum::<f64>() / self.c.len() as f64;
            return Ok(self.c.iter().map(|c| -2.0 * mean * c).collect());
        }
        self.gradient(x)
    }

    fn feasible_start(&self, omega: &Support, warm: &[f64]) -> Vec<f64> {
        let mut start = vector::restrict(warm, omega);
        if self.unit_box {
            for v in start.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        let total: f64 = start.iter().sum();
        if total <= 1e3 * DOMAIN_FLOOR {
            for i in omega.iter() {
                start[i] = 0.5;
            }
        }
        start
    }
}

impl ScanStatistic for Ems {
    fn set_score(&self, s: &Support) -> Result<f64> {
        if s.is_empty() {
            return Err(Error::Domain("EMS score of an empty set".into()));
        }
        s.validate(self.c.len())?;
        let sum: f64 = s.iter().map(|i| self.c[i]).sum();
        Ok(sum * sum / s.len() as f64)
    }
}

/// Shared parts of the Poisson count statistics.
#[derive(Debug, Clone)]
struct Counts {
    observed: Vec<f64>,
    expected: Vec<f64>,
    total_observed: f64,
    total_expected: f64,
}

impl Counts {
    fn new(data: &NodeData) -> Result<Self> {
        let (o, e) = data.counts()?;
        Ok(Counts {
            observed: o.to_vec(),
            expected: e.to_vec(),
            total_observed: o.iter().sum(),
            total_expected: e.iter().sum(),
        })
    }

    /// `(C, B) = (observedᵀx, expectedᵀx)` after domain checks.
    fn sums(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.observed.len(), x)?;
        if let Some(bad) = x.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::Domain(format!("x must lie in [0, 1], found {bad}")));
        }
        let c = vector::dot(&self.observed, x);
        let b = vector::dot(&self.expected, x);
        if c <= DOMAIN_FLOOR || b <= DOMAIN_FLOOR {
            return Err(Error::Domain(format!(
                "count statistic needs positive sums, got C = {c}, B = {b}"
            )));
        }
        Ok((c, b))
    }

    fn indicator(&self, s: &Support) -> Result<Vec<f64>> {
        if s.is_empty() {
            return Err(Error::Domain("score of an empty set".into()));
        }
        s.validate(self.observed.len())?;
        let mut x = vec![0.0; self.observed.len()];
        for i in s.iter() {
            x[i] = 1.0;
        }
        Ok(x)
    }

    fn combine(&self, x: &[f64], d_c: f64, d_b: f64) -> Vec<f64> {
        self.observed
            .iter()
            .zip(&self.expected)
            .zip(x)
            .map(|((o, e), xi)| -(d_c * o + d_b * e) + xi)
            .collect()
    }

    /// Relaxed indicators with no positive count mass start at the box
    /// midpoint so that `C` and `B` are positive.
    fn feasible_start(&self, omega: &Support, warm: &[f64]) -> Vec<f64> {
        let mut start: Vec<f64> = vector::restrict(warm, omega)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        if vector::dot(&self.observed, &start) <= 1e3 * DOMAIN_FLOOR
            || vector::dot(&self.expected, &start) <= 1e3 * DOMAIN_FLOOR
        {
            for i in omega.iter() {
                start[i] = 0.5;
            }
        }
        start
    }
}

fn xlogy_ratio(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

/// Kulldorff's Poisson scan statistic:
/// `F = C ln(C/B) + (C₀−C) ln((C₀−C)/(B₀−B)) − C₀ ln(C₀/B₀)` when the
/// inside rate `C/B` exceeds the outside rate, else 0.
#[derive(Debug, Clone)]
pub struct Kulldorff {
    counts: Counts,
}

impl Kulldorff {
    pub fn new(data: &NodeData) -> Result<Self> {
        Ok(Kulldorff {
            counts: Counts::new(data)?,
        })
    }

    /// `(F, ∂F/∂C, ∂F/∂B)`.
    fn statistic(&self, c: f64, b: f64) -> (f64, f64, f64) {
        let k = &self.counts;
        let c_out = (k.total_observed - c).max(0.0);
        let b_out = (k.total_expected - b).max(DOMAIN_FLOOR);
        let c_out_log = c_out.max(DOMAIN_FLOOR);
        if c / b <= c_out / b_out {
            return (0.0, 0.0, 0.0);
        }
        let value = xlogy_ratio(c, b) + xlogy_ratio(c_out, b_out)
            - xlogy_ratio(k.total_observed, k.total_expected);
        let d_c = (c / b).ln() - (c_out_log / b_out).ln();
        let d_b = -c / b + c_out / b_out;
        (value, d_c, d_b)
    }
}

impl CostFunction for Kulldorff {
    fn dim(&self) -> usize {
        self.counts.observed.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (c, b) = self.counts.sums(x)?;
        Ok(-self.statistic(c, b).0 + half_sq_norm(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (c, b) = self.counts.sums(x)?;
        let (_, d_c, d_b) = self.statistic(c, b);
        Ok(self.counts.combine(x, d_c, d_b))
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }

    fn start_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(poisson_start_gradient(&self.counts));
        }
        self.gradient(x)
    }

    fn feasible_start(&self, omega: &Support, warm: &[f64]) -> Vec<f64> {
        self.counts.feasible_start(omega, warm)
    }
}

impl ScanStatistic for Kulldorff {
    fn set_score(&self, s: &Support) -> Result<f64> {
        let x = self.counts.indicator(s)?;
        let (c, b) = self.counts.sums(&x)?;
        Ok(self.statistic(c, b).0)
    }
}

/// At `x = 0` the count sums vanish; nodes are ranked by the log rate
/// excess `ln(o_i / e_i)` clipped at zero, weighted by their counts.
fn poisson_start_gradient(k: &Counts) -> Vec<f64> {
    k.observed
        .iter()
        .zip(&k.expected)
        .map(|(&o, &e)| {
            if o <= 0.0 || o <= e {
                0.0
            } else {
                -(o * (o / e).ln() + e - o)
            }
        })
        .collect()
}

/// Expectation-based Poisson statistic: `F = C ln(C/B) + B − C` when
/// `C > B`, else 0.
#[derive(Debug, Clone)]
pub struct Ebp {
    counts: Counts,
}

impl Ebp {
    pub fn new(data: &NodeData) -> Result<Self> {
        Ok(Ebp {
            counts: Counts::new(data)?,
        })
    }

    fn statistic(c: f64, b: f64) -> (f64, f64, f64) {
        if c <= b {
            return (0.0, 0.0, 0.0);
        }
        (c * (c / b).ln() + b - c, (c / b).ln(), 1.0 - c / b)
    }
}

impl CostFunction for Ebp {
    fn dim(&self) -> usize {
        self.counts.observed.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (c, b) = self.counts.sums(x)?;
        Ok(-Ebp::statistic(c, b).0 + half_sq_norm(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (c, b) = self.counts.sums(x)?;
        let (_, d_c, d_b) = Ebp::statistic(c, b);
        Ok(self.counts.combine(x, d_c, d_b))
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }

    fn start_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(poisson_start_gradient(&self.counts));
        }
        self.gradient(x)
    }

    fn feasible_start(&self, omega: &Support, warm: &[f64]) -> Vec<f64> {
        self.counts.feasible_start(omega, warm)
    }
}

impl ScanStatistic for Ebp {
    fn set_score(&self, s: &Support) -> Result<f64> {
        let x = self.counts.indicator(s)?;
        let (c, b) = self.counts.sums(&x)?;
        Ok(Ebp::statistic(c, b).0)
    }
}

/// `f(x) = ‖y − Ax‖₂²` with gradient `−2Aᵀ(y − Ax)`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    y: DVector<f64>,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::Validation(format!(
                "matrix has {} rows but y has length {}",
                a.nrows(),
                y.len()
            )));
        }
        Ok(LeastSquares {
            a,
            y: DVector::from_vec(y),
        })
    }

    /// Denoising: `A = I`.
    pub fn identity(y: Vec<f64>) -> Self {
        let n = y.len();
        LeastSquares {
            a: DMatrix::identity(n, n),
            y: DVector::from_vec(y),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn observations(&self) -> &[f64] {
        self.y.as_slice()
    }

    fn residual(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.a.ncols(), x)?;
        Ok(&self.y - &self.a * DVector::from_column_slice(x))
    }

    /// `b_Ω = A_Ω⁺ y`, zero off `Ω`. Returns `true` alongside when the
    /// normal equations were singular and the minimum-norm solution was used.
    pub fn restricted_solution(&self, omega: &Support) -> Result<(Vec<f64>, bool)> {
        omega.validate(self.a.ncols())?;
        let mut out = vec![0.0; self.a.ncols()];
        if omega.is_empty() {
            return Ok((out, false));
        }
        let cols: Vec<usize> = omega.iter().collect();
        let sub = self.a.select_columns(cols.iter());
        let normal = sub.transpose() * &sub;
        let rhs = sub.transpose() * &self.y;
        let scale = normal.diagonal().max();
        let chol = normal
            .cholesky()
            .filter(|c| c.l_dirty().diagonal().iter().all(|d| d * d > 1e-12 * scale));
        let (solution, singular) = match chol {
            Some(chol) => (chol.solve(&rhs), false),
            None => {
                let svd = sub.svd(true, true);
                let sol = svd
                    .solve(&self.y, 1e-12)
                    .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))?;
                (sol, true)
            }
        };
        for (slot, &i) in cols.iter().enumerate() {
            out[i] = solution[slot];
        }
        Ok((out, singular))
    }
}

impl CostFunction for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.residual(x)?.norm_squared())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.residual(x)?;
        Ok((self.a.tr_mul(&r) * -2.0).as_slice().to_vec())
    }

    fn as_least_squares(&self) -> Option<&LeastSquares> {
        Some(self)
    }
}
