//! Detrended fluctuation analysis as a heuristic initializer for the
//! fractional orders.
//!
//! The fluctuation exponent `H` of a stationary-increment process maps to a
//! difference order `H − 0.5`: white noise sits at 0 and a random walk at 1.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TimeSeriesMatrix;
use crate::scalar::Scalar;

/// Fewest samples a channel needs for a usable scaling range.
pub const MIN_SAMPLES: usize = 64;

const MIN_WINDOW: usize = 4;
const SCALES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub order: f64,
    /// Fluctuation exponent before the shift; `None` when degenerate.
    pub exponent: Option<f64>,
    /// The channel has no fluctuation to analyse (constant or nearly so).
    pub degenerate: bool,
}

/// One estimate per channel.
pub fn estimate_fractional_orders<T: Scalar>(series: &TimeSeriesMatrix<T>) -> Result<Vec<OrderEstimate>> {
    let len = series.len();
    if len < MIN_SAMPLES {
        return Err(Error::TooShort {
            needed: MIN_SAMPLES,
            got: len,
        });
    }
    let v = series.values();
    Ok((0..series.channels())
        .map(|i| {
            let row: Vec<f64> = (0..len).map(|t| v[(i, t)].as_f64()).collect();
            estimate_channel(&row)
        })
        .collect())
}

fn estimate_channel(x: &[f64]) -> OrderEstimate {
    let degenerate = OrderEstimate {
        order: 0.0,
        exponent: None,
        degenerate: true,
    };
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut acc = 0.0;
    let profile: Vec<f64> = x
        .iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect();

    let mut points = Vec::with_capacity(SCALES);
    for s in window_sizes(n) {
        let f = fluctuation(&profile, s);
        // relative to the signal scale so that round-off on a constant
        // channel is not mistaken for structure
        if f > 1e-12 * scale * s as f64 {
            points.push(((s as f64).ln(), f.ln()));
        }
    }
    if points.len() < 3 {
        return degenerate;
    }
    let h = slope(&points);
    if !h.is_finite() {
        return degenerate;
    }
    OrderEstimate {
        order: h - 0.5,
        exponent: Some(h),
        degenerate: false,
    }
}

/// Log-spaced distinct window lengths from `MIN_WINDOW` to `n / 4`.
fn window_sizes(n: usize) -> Vec<usize> {
    let hi = (n / 4).max(MIN_WINDOW + 1) as f64;
    let lo = MIN_WINDOW as f64;
    let mut sizes: Vec<usize> = (0..SCALES)
        .map(|k| (lo * (hi / lo).powf(k as f64 / (SCALES - 1) as f64)).round() as usize)
        .collect();
    sizes.dedup();
    sizes
}

/// Root-mean-square residual of a per-window linear detrend over
/// non-overlapping windows of length `s`.
fn fluctuation(profile: &[f64], s: usize) -> f64 {
    let windows = profile.len() / s;
    let mut total = 0.0;
    for w in 0..windows {
        let seg = &profile[w * s..(w + 1) * s];
        let pts: Vec<(f64, f64)> = seg.iter().enumerate().map(|(t, &y)| (t as f64, y)).collect();
        let (a, b) = line_fit(&pts);
        total += pts.iter().map(|&(t, y)| (y - a - b * t).powi(2)).sum::<f64>();
    }
    (total / (windows * s) as f64).sqrt()
}

fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    line_fit(pts).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn series(rows: &[Vec<f64>]) -> TimeSeriesMatrix<f64> {
        let len = rows[0].len();
        TimeSeriesMatrix::new(DMatrix::from_fn(rows.len(), len, |i, t| rows[i][t])).unwrap()
    }

    #[test]
    fn white_noise_and_random_walk() {
        for seed in 0..5 {
            let w = noise(2048, seed);
            let mut acc = 0.0;
            let walk: Vec<f64> = w
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect();
            let est = estimate_fractional_orders(&series(&[w, walk])).unwrap();
            assert!(est[0].order.abs() < 0.15, "white noise order {}", est[0].order);
            assert!((est[1].order - 1.0).abs() < 0.15, "random walk order {}", est[1].order);
        }
    }

    #[test]
    fn constant_channel_is_flagged() {
        let est = estimate_fractional_orders(&series(&[vec![3.5; 100]])).unwrap();
        assert!(est[0].degenerate);
        assert_eq!(est[0].order, 0.0);
    }

    #[test]
    fn short_series_rejected() {
        let err = estimate_fractional_orders(&series(&[vec![1.0; 63]])).unwrap_err();
        assert!(matches!(err, Error::TooShort { needed: 64, got: 63 }));
    }
}
