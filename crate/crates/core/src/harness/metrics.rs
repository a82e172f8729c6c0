//! Summary statistics over per-image perturbation sizes.

use crate::error::{Error, Result};
use crate::tensor::Image;

/// Median (mean of the two middle values for even counts) and arithmetic
/// mean.
pub fn median_average(distances: &[f64]) -> Result<(f64, f64)> {
    if distances.is_empty() {
        return Err(Error::invalid("median of an empty list"));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let average = sorted.iter().sum::<f64>() / n as f64;
    Ok((median, average))
}

/// Distance charged for a failed attack: the L2 distance from `x` to the
/// image that moves every pixel to its farther bound.
pub fn failure_penalty(x: &Image) -> f64 {
    x.as_slice().iter().map(|&v| v.max(1.0 - v).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Shape;

    #[test]
    fn odd_and_even_counts() {
        assert_eq!(median_average(&[1.0, 2.0, 3.0]).unwrap(), (2.0, 2.0));
        assert_eq!(median_average(&[1.0, 2.0, 3.0, 10.0]).unwrap(), (2.5, 4.0));
        assert!(median_average(&[]).is_err());
    }

    #[test]
    fn matches_a_selection_oracle() {
        let mut rng = Rng::new(8);
        let values: Vec<f64> = (0..1000).map(|_| rng.uniform() * 10.0).collect();
        let (median, average) = median_average(&values).unwrap();
        // the median is the value with at most half strictly below and above
        let below = |t: f64| values.iter().filter(|&&v| v < t).count();
        let lower = values.iter().copied().filter(|&v| below(v) == 499).fold(f64::NAN, f64::max);
        let upper = values.iter().copied().filter(|&v| below(v) == 500).fold(f64::NAN, f64::max);
        assert!((median - (lower + upper) / 2.0).abs() < 1e-12);
        let mut sum = 0.0;
        for v in &values {
            sum += v;
        }
        assert!((average - sum / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_is_the_farthest_corner() {
        let x = Image::new(Shape::flat(2), vec![0.2, 0.5]).unwrap();
        assert!((failure_penalty(&x) - (0.64f64 + 0.25).sqrt()).abs() < 1e-15);
    }
}
