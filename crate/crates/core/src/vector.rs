//! Small dense-vector helpers over `f64` slices.

use crate::graph::Support;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `‖x_S‖₂`.
pub fn norm2_on(x: &[f64], s: &Support) -> f64 {
    s.iter().map(|i| x[i] * x[i]).sum::<f64>().sqrt()
}

/// `‖x - x_S‖₂`.
pub fn residual_norm(x: &[f64], s: &Support) -> f64 {
    let mut sum = 0.0;
    let mut iter = s.iter().peekable();
    for (i, v) in x.iter().enumerate() {
        if iter.peek() == Some(&i) {
            iter.next();
        } else {
            sum += v * v;
        }
    }
    sum.sqrt()
}

/// `x_S`: copy of `x` with every entry outside `s` set to zero.
pub fn restrict(x: &[f64], s: &Support) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in s.iter() {
        out[i] = x[i];
    }
    out
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
