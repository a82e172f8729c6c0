//! Images, perturbations, and the handful of tensor operations the attacks
//! are written in terms of.
//!
//! Pixels live on the unit scale `[0, 1]` and are stored row-major in
//! `(h, w, c)` order. All arithmetic is `f64`.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Norms below this are treated as zero by [`unit_direction`].
pub const DIRECTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(width: usize, height: usize, channels: usize) -> Self {
        Shape { width, height, channels }
    }

    /// A flat vector of `n` values, stored as `n × 1 × 1`.
    pub const fn flat(n: usize) -> Self {
        Shape::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found == self.len() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: self.len(), found })
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// A point in input space with every pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape,
    data: Vec<f64>,
}

impl Image {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.check_len(data.len())?;
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::PixelOutOfRange { index, value });
        }
        Ok(Image { shape, data })
    }

    /// Builds an image by clamping every value into `[0, 1]`. NaN maps to 0.
    pub fn clamped(shape: Shape, mut data: Vec<f64>) -> Result<Self> {
        shape.check_len(data.len())?;
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Image { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        Image::new(shape, vec![value; shape.len()])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Raw `self + z`, not clamped. Used for gradient evaluation points that
    /// may leave the valid pixel range.
    pub fn offset(&self, z: &Perturbation) -> Result<Vec<f64>> {
        self.shape.check_len(z.len())?;
        Ok(self.data.iter().zip(z.as_slice()).map(|(a, b)| a + b).collect())
    }

    /// `clamp(self + z)` as an image.
    pub fn perturbed(&self, z: &Perturbation) -> Result<Image> {
        Image::clamped(self.shape, self.offset(z)?)
    }

    /// The image rounded to `f32` precision, i.e. exactly what the tensor
    /// file format can store.
    pub fn to_f32_precision(&self) -> Image {
        Image { shape: self.shape, data: self.data.iter().map(|&v| v as f32 as f64).collect() }
    }

    pub(crate) fn from_parts_unchecked(shape: Shape, data: Vec<f64>) -> Image {
        debug_assert_eq!(shape.len(), data.len());
        Image { shape, data }
    }
}

/// A noise tensor `z = x' - x`; elements may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    shape: Shape,
    data: Vec<f64>,
}

impl Perturbation {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.check_len(data.len())?;
        Ok(Perturbation { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Perturbation { shape, data: vec![0.0; shape.len()] }
    }

    /// `to - from`.
    pub fn between(from: &Image, to: &Image) -> Result<Self> {
        from.shape.check_len(to.len())?;
        let data = to.as_slice().iter().zip(from.as_slice()).map(|(b, a)| b - a).collect();
        Ok(Perturbation { shape: from.shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn l2_norm(&self) -> f64 {
        l2(&self.data)
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Perturbation {
        Perturbation { shape: self.shape, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l2_distance(a: &Image, b: &Image) -> Result<f64> {
    a.shape.check_len(b.len())?;
    Ok(a.data.iter().zip(&b.data).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
}

pub fn linf_distance(a: &Image, b: &Image) -> Result<f64> {
    a.shape.check_len(b.len())?;
    Ok(a.data.iter().zip(&b.data).fold(0.0, |m, (p, q)| m.max((p - q).abs())))
}

/// The `Clip_{x,eps}` operator: a per-element clamp into the box
/// `[anchor - eps, anchor + eps]` intersected with `[0, 1]`.
pub fn clip_to_ball(candidate: &[f64], anchor: &Image, eps: f64) -> Result<Image> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("clip radius must be non-negative, got {eps}")));
    }
    anchor.shape.check_len(candidate.len())?;
    let data = candidate
        .iter()
        .zip(&anchor.data)
        .map(|(&v, &a)| {
            let lo = (a - eps).max(0.0);
            let hi = (a + eps).min(1.0);
            if v.is_nan() {
                a
            } else {
                v.clamp(lo, hi)
            }
        })
        .collect();
    Ok(Image::from_parts_unchecked(anchor.shape, data))
}

/// I.i.d. `N(0, s^2)` noise. `s == 0` returns zeros without touching `rng`.
pub fn gaussian_like(shape: Shape, s: f64, rng: &mut Rng) -> Result<Perturbation> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("noise std must be non-negative, got {s}")));
    }
    if s == 0.0 {
        return Ok(Perturbation::zeros(shape));
    }
    let data = (0..shape.len()).map(|_| s * rng.normal()).collect();
    Ok(Perturbation { shape, data })
}

/// `z / ||z||_2`, or the zero tensor when the norm is below
/// [`DIRECTION_TOLERANCE`]. This is the L2 stand-in for `sign()`.
pub fn unit_direction(z: &Perturbation) -> Perturbation {
    let norm = z.l2_norm();
    if norm > DIRECTION_TOLERANCE {
        Perturbation { shape: z.shape, data: z.data.iter().map(|v| v / norm).collect() }
    } else {
        Perturbation::zeros(z.shape)
    }
}

/// One iterative update `Clip_{anchor,eps}(from + step * direction)`.
pub(crate) fn step_along(from: &Image, direction: &Perturbation, step: f64, anchor: &Image, eps: f64) -> Result<Image> {
    from.shape.check_len(direction.len())?;
    let raw: Vec<f64> = from.data.iter().zip(&direction.data).map(|(x, d)| x + step * d).collect();
    clip_to_ball(&raw, anchor, eps)
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn vec_pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (prop::collection::vec(-0.5f64..1.5, n), prop::collection::vec(0.0f64..=1.0, n))
    }

    proptest! {
        #[test]
        fn clip_is_idempotent((cand, anchor) in vec_pair(16), eps in 0.0f64..1.2) {
            let anchor = Image::new(Shape::flat(16), anchor).unwrap();
            let once = clip_to_ball(&cand, &anchor, eps).unwrap();
            let twice = clip_to_ball(once.as_slice(), &anchor, eps).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn wide_ball_is_range_clamp((cand, anchor) in vec_pair(16), eps in 1.0f64..3.0) {
            let anchor = Image::new(Shape::flat(16), anchor).unwrap();
            let clipped = clip_to_ball(&cand, &anchor, eps).unwrap();
            for (c, v) in clipped.as_slice().iter().zip(&cand) {
                prop_assert_eq!(*c, v.clamp(0.0, 1.0));
            }
        }

        #[test]
        fn triangle_inequality(
            a in prop::collection::vec(0.0f64..=1.0, 10),
            b in prop::collection::vec(0.0f64..=1.0, 10),
            c in prop::collection::vec(0.0f64..=1.0, 10),
        ) {
            let s = Shape::flat(10);
            let (a, b, c) = (Image::new(s, a).unwrap(), Image::new(s, b).unwrap(), Image::new(s, c).unwrap());
            let ab = l2_distance(&a, &b).unwrap();
            let bc = l2_distance(&b, &c).unwrap();
            let ac = l2_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab, l2_distance(&b, &a).unwrap());
        }

        #[test]
        fn unit_direction_has_unit_norm(z in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let z = Perturbation::new(Shape::flat(z.len()), z).unwrap();
            let norm = z.l2_norm();
            let u = unit_direction(&z);
            if norm > DIRECTION_TOLERANCE {
                // recompute the norm independently
                let mut acc = 0.0;
                for v in u.as_slice() { acc += v * v; }
                prop_assert!((acc.sqrt() - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(u.is_zero());
            }
        }
    }
}
