//! Diagnostics of level-indexed sequences: tail limsup/liminf estimates,
//! log-scale trend and a 0 / finite / ∞ / oscillating classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Vanishing,
    FinitePositive,
    Diverging,
    Oscillating,
    Inconclusive,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Vanishing => "vanishing",
            Classification::FinitePositive => "finite_positive",
            Classification::Diverging => "diverging",
            Classification::Oscillating => "oscillating",
            Classification::Inconclusive => "inconclusive",
        })
    }
}

/// Decision thresholds for [`limit_diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Tail maximum below this is vanishing; values must be at least this to
    /// count as finite positive.
    pub vanish_level: f64,
    /// Tail minimum above this is diverging; values must be at most this to
    /// count as finite positive.
    pub diverge_level: f64,
    /// `|slope|` of log2 values per level beyond which the tail trends to
    /// 0 or ∞.
    pub slope_tol: f64,
    /// `max / min` over a non-monotone tail beyond which it oscillates.
    pub oscillation_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            vanish_level: 1e-6,
            diverge_level: 1e6,
            slope_tol: 0.25,
            oscillation_ratio: 100.0,
        }
    }
}

/// Summary of a sequence `μ^n([0,1])` over levels `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub levels: Vec<u32>,
    pub terminal_values: Vec<f64>,
    pub window: usize,
    pub classification: Classification,
    pub limsup_est: f64,
    pub liminf_est: f64,
    /// Least-squares slope of `log2(value)` against level over the tail,
    /// positive finite values only. `None` with fewer than two such values.
    pub trend_slope: Option<f64>,
    pub thresholds: Thresholds,
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Slope of `log2(value)` against level, over positive finite values.
pub fn log2_trend(levels: &[u32], values: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(&n, &v)| (n as f64, v.log2()))
        .unzip();
    ls_slope(&xs, &ys)
}

fn is_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1]) || v.windows(2).all(|w| w[0] >= w[1])
}

/// Range of `log2(value)` residuals about the least-squares trend line.
/// Infinite when the tail mixes zero and positive values.
fn detrended_log2_range(levels: &[u32], values: &[f64], slope: Option<f64>) -> f64 {
    let has_zero = values.iter().any(|v| *v <= 0.0);
    let has_pos = values.iter().any(|v| *v > 0.0);
    if has_zero && has_pos {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(&n, &v)| (n as f64, v.log2()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let slope = slope.unwrap_or(0.0);
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let (lo, hi) = pts
        .iter()
        .map(|(x, y)| y - my - slope * (x - mx))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    hi - lo
}

/// Every step reverses direction and moves by at least a factor of two.
fn persistently_alternating(v: &[f64]) -> bool {
    if v.len() < 5 || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return false;
    }
    let steps: Vec<f64> = v.windows(2).map(|w| (w[1] / w[0]).log2()).collect();
    steps.iter().all(|s| s.abs() >= 1.0) && steps.windows(2).all(|w| w[0].signum() != w[1].signum())
}

/// Classifies the tail (last `window` entries) of a level-indexed sequence.
///
/// Checks run in order: tail maximum below `vanish_level` (vanishing), tail
/// minimum above `diverge_level` (diverging), a non-monotone tail whose
/// detrended `max / min` exceeds `oscillation_ratio` (zero next to positive
/// values counts as unbounded) or that reverses direction by a factor of two
/// at every step (oscillating), the log2 trend beyond
/// `±slope_tol` (vanishing / diverging), all values inside
/// `[vanish_level, diverge_level]` (finite positive), else inconclusive.
pub fn limit_diagnostics(
    levels: &[u32],
    values: &[f64],
    window: usize,
    thresholds: &Thresholds,
) -> Result<LimitReport> {
    if levels.len() != values.len() {
        return Err(Error::Mismatch(format!(
            "{} levels but {} values",
            levels.len(),
            values.len()
        )));
    }
    if levels.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 levels, got {}",
            levels.len()
        )));
    }
    if window < 2 || window > levels.len() {
        return Err(Error::InvalidParameter(format!(
            "window {window} must lie in 2..={}",
            levels.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("terminal values contain NaN".into()));
    }
    let start = levels.len() - window;
    let tail_levels = &levels[start..];
    let tail = &values[start..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let slope = log2_trend(tail_levels, tail);
    let t = thresholds;

    let spread = detrended_log2_range(tail_levels, tail, slope);
    let classification = if max < t.vanish_level {
        Classification::Vanishing
    } else if min > t.diverge_level {
        Classification::Diverging
    } else if !is_monotone(tail) && (spread > t.oscillation_ratio.log2() || persistently_alternating(tail)) {
        Classification::Oscillating
    } else if slope.is_some_and(|s| s < -t.slope_tol) {
        Classification::Vanishing
    } else if slope.is_some_and(|s| s > t.slope_tol) {
        Classification::Diverging
    } else if min >= t.vanish_level && max <= t.diverge_level {
        Classification::FinitePositive
    } else {
        Classification::Inconclusive
    };

    Ok(LimitReport {
        levels: levels.to_vec(),
        terminal_values: values.to_vec(),
        window,
        classification,
        limsup_est: max,
        liminf_est: min,
        trend_slope: slope,
        thresholds: *thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> LimitReport {
        let levels: Vec<u32> = (0..values.len() as u32).collect();
        limit_diagnostics(&levels, values, values.len(), &Thresholds::default()).unwrap()
    }

    #[test]
    fn constant_is_finite() {
        let r = diag(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(r.classification, Classification::FinitePositive);
        assert!(r.trend_slope.unwrap().abs() < 1e-12);
        assert_eq!(r.limsup_est, 1.0);
        assert_eq!(r.liminf_est, 1.0);
    }

    #[test]
    fn geometric_decay_vanishes() {
        let v: Vec<f64> = (0..10).map(|n| (-(n as f64)).exp2()).collect();
        let r = diag(&v);
        assert_eq!(r.classification, Classification::Vanishing);
        assert!((r.trend_slope.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_growth_diverges() {
        let v: Vec<f64> = (0..10).map(|n| (0.5 * n as f64).exp2()).collect();
        assert_eq!(diag(&v).classification, Classification::Diverging);
    }

    #[test]
    fn tiny_and_huge_levels() {
        assert_eq!(diag(&[1e-9, 2e-9, 3e-9]).classification, Classification::Vanishing);
        assert_eq!(diag(&[1e9, 1e9, 1e9]).classification, Classification::Diverging);
        assert_eq!(diag(&[0.0, 0.0, 0.0]).classification, Classification::Vanishing);
        assert_eq!(
            diag(&[f64::INFINITY, f64::INFINITY, f64::INFINITY]).classification,
            Classification::Diverging
        );
    }

    #[test]
    fn zig_zag_oscillates() {
        assert_eq!(diag(&[1.0, 200.0, 1.0, 300.0]).classification, Classification::Oscillating);
        assert_eq!(
            diag(&[1.0, 0.5, 2.0, 0.5, 3.0, 0.375, 4.0]).classification,
            Classification::Oscillating
        );
    }

    #[test]
    fn noisy_steep_trend_is_not_oscillating() {
        let v = [1.0, 2.1, 3.9, 8.5, 15.0, 34.0, 60.0, 140.0, 130.0, 400.0];
        assert_eq!(diag(&v).classification, Classification::Diverging);
    }

    #[test]
    fn mild_noise_is_finite() {
        assert_eq!(
            diag(&[1.0, 1.1, 0.95, 1.05, 1.0]).classification,
            Classification::FinitePositive
        );
    }

    #[test]
    fn window_uses_tail_only() {
        let levels: Vec<u32> = (0..6).collect();
        let v = [1e-12, 1e-12, 1.0, 1.0, 1.0, 1.0];
        let r = limit_diagnostics(&levels, &v, 3, &Thresholds::default()).unwrap();
        assert_eq!(r.classification, Classification::FinitePositive);
        assert_eq!(r.liminf_est, 1.0);
    }

    #[test]
    fn errors() {
        let t = Thresholds::default();
        assert!(matches!(
            limit_diagnostics(&[1, 2], &[1.0, 1.0], 2, &t),
            Err(Error::InsufficientData(_))
        ));
        assert!(limit_diagnostics(&[1, 2, 3], &[1.0, 1.0, 1.0], 4, &t).is_err());
        assert!(limit_diagnostics(&[1, 2, 3], &[1.0, 1.0], 2, &t).is_err());
    }

    #[test]
    fn estimates_are_ordered() {
        let r = diag(&[3.0, 1.0, 2.0, 5.0]);
        assert!(r.liminf_est <= r.limsup_est);
    }
}
