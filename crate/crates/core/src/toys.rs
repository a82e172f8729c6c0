//! Hand-checkable scorers for tests and documentation examples.
//!
//! These are not trained models; each one is built so its decision
//! boundary or loss surface can be traced by hand.

use crate::error::Result;
use crate::models::{Differentiable, Scorer};
use crate::tensor::Shape;

/// Two classes. Class 1 iff `x[0] >= at`, with hard 0/1 probabilities.
///
/// As a substitute it reports a constant gradient: `+1` on pixel 0 for
/// label 0 and `-1` for label 1, so ascending label 0 (or descending
/// label 1) pushes pixel 0 up.
#[derive(Debug, Clone, Copy)]
pub struct Threshold {
    pub dims: usize,
    pub at: f64,
}

impl Threshold {
    pub fn rising(at: f64) -> Self {
        Threshold { dims: 1, at }
    }

    /// A target that always answers class 0.
    pub fn never(dims: usize) -> Self {
        Threshold { dims, at: f64::INFINITY }
    }
}

impl Scorer for Threshold {
    fn input_shape(&self) -> Shape {
        Shape::flat(self.dims)
    }

    fn classes(&self) -> usize {
        2
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.input_shape().check_len(x.len())?;
        Ok(if x[0] >= self.at { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
    }
}

impl Differentiable for Threshold {
    fn loss_gradient(&self, x: &[f64], label: usize) -> Result<Vec<f64>> {
        self.input_shape().check_len(x.len())?;
        let mut g = vec![0.0; self.dims];
        if self.dims > 0 && self.at.is_finite() {
            g[0] = if label == 0 { 1.0 } else { -1.0 };
        }
        Ok(g)
    }
}

/// Loss `0.5 * |x - center|^2` regardless of label; always predicts class 0.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub center: Vec<f64>,
}

impl Quadratic {
    pub fn new(center: Vec<f64>) -> Self {
        Quadratic { center }
    }
}

impl Scorer for Quadratic {
    fn input_shape(&self) -> Shape {
        Shape::flat(self.center.len())
    }

    fn classes(&self) -> usize {
        2
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.input_shape().check_len(x.len())?;
        Ok(vec![1.0, 0.0])
    }
}

impl Differentiable for Quadratic {
    fn loss_gradient(&self, x: &[f64], _label: usize) -> Result<Vec<f64>> {
        self.input_shape().check_len(x.len())?;
        Ok(x.iter().zip(&self.center).map(|(v, c)| v - c).collect())
    }
}

/// One-pixel, two-class target whose class-1 probability is a lopsided
/// parabola with its minimum at `valley`:
///
/// ```text
/// q(v) = floor + left  * (v - valley)^2   for v <  valley
/// q(v) = floor + right * (v - valley)^2   for v >= valley
/// ```
///
/// clamped to `[0, 1 - 1e-9]`. A steep `left` puts a close decision boundary
/// just past the valley, a shallow `right` puts a far one on the other side.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell {
    pub valley: f64,
    pub floor: f64,
    pub left: f64,
    pub right: f64,
}

impl DoubleWell {
    /// Boundaries at `0.3` (left) and `0.85` (right), valley at `0.375`.
    pub fn lopsided() -> Self {
        let valley = 0.375;
        let floor = 0.05;
        DoubleWell {
            valley,
            floor,
            left: (0.5 - floor) / (valley - 0.3f64).powi(2),
            right: (0.5 - floor) / (0.85 - valley).powi(2),
        }
    }

    pub fn class_one_probability(&self, v: f64) -> f64 {
        let d = v - self.valley;
        let k = if d < 0.0 { self.left } else { self.right };
        (self.floor + k * d * d).clamp(0.0, 1.0 - 1e-9)
    }
}

impl Scorer for DoubleWell {
    fn input_shape(&self) -> Shape {
        Shape::flat(1)
    }

    fn classes(&self) -> usize {
        2
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.input_shape().check_len(x.len())?;
        let q = self.class_one_probability(x[0]);
        Ok(vec![1.0 - q, q])
    }
}
