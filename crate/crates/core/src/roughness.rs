//! Critical variation index search and switching-behaviour classification.
//!
//! For a path with linear p-th variation, the scaled quadratic variation of
//! index `q` tends to `∞` for `q < p` and to `0` for `q > p`. A probe at `q`
//! evaluates the scaled QV terminal values over a level range and classifies
//! the sequence; bisection on `q` then brackets the critical index.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Path;
use crate::limits::{limit_diagnostics, Classification, LimitReport, Thresholds};
use crate::variation::{over_levels, scaled_qv, terminals, PVarSource, SourceMode};

/// Default classification levels for a grid: `6 ..= L - 2`.
pub fn default_levels(grid_level: u32) -> Vec<u32> {
    let hi = grid_level.saturating_sub(2);
    let lo = 6.min(hi);
    (lo..=hi).collect()
}

/// Settings shared by probes and the bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessConfig {
    pub levels: Vec<u32>,
    /// Tail window; all levels when `None`.
    pub window: Option<usize>,
    pub src_mode: SourceMode,
    pub thresholds: Thresholds,
}

impl RoughnessConfig {
    pub fn new(levels: Vec<u32>) -> Self {
        Self {
            levels,
            window: None,
            src_mode: SourceMode::FinestLevel,
            thresholds: Thresholds::default(),
        }
    }

    /// Thresholds for bisection: the slope band collapses to zero so that a
    /// probe reports the sign of the log-scale trend.
    pub fn for_search(levels: Vec<u32>) -> Self {
        Self {
            thresholds: Thresholds {
                slope_tol: 0.0,
                ..Thresholds::default()
            },
            ..Self::new(levels)
        }
    }

    fn window(&self) -> usize {
        self.window.unwrap_or(self.levels.len())
    }
}

/// One classified value of `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub q: f64,
    pub classification: Classification,
    pub terminal_values: Vec<f64>,
    pub trend_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessReport {
    pub p_bar_est: f64,
    pub bracket: (f64, f64),
    pub hurst_est: f64,
    pub per_q: Vec<Probe>,
    pub levels_used: Vec<u32>,
    pub src_mode: SourceMode,
    pub iterations: u32,
}

/// Classification of the scaled QV of index `q` over `levels` with a given
/// source.
pub fn classify_index(
    x: &Path,
    levels: &[u32],
    q: f64,
    src: &PVarSource,
    window: usize,
    thresholds: &Thresholds,
) -> Result<LimitReport> {
    if levels.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "classification needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let profiles = over_levels(x, levels, |x, part| scaled_qv(x, part, q, src))?;
    limit_diagnostics(levels, &terminals(&profiles), window, thresholds)
}

/// Probes a path at several `q`, caching the per-`q` variation sources.
pub struct Prober<'a> {
    x: &'a Path,
    cfg: RoughnessConfig,
    sources: Mutex<HashMap<u64, Arc<PVarSource>>>,
}

impl<'a> Prober<'a> {
    pub fn new(x: &'a Path, cfg: RoughnessConfig) -> Result<Self> {
        if cfg.levels.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "need at least 3 levels, got {}",
                cfg.levels.len()
            )));
        }
        if let Some(&top) = cfg.levels.iter().max() {
            if top > x.grid_level() {
                return Err(Error::InvalidRefinement {
                    level: top,
                    grid_level: x.grid_level(),
                });
            }
        }
        Ok(Self {
            x,
            cfg,
            sources: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &RoughnessConfig {
        &self.cfg
    }

    fn source(&self, q: f64) -> Result<Arc<PVarSource>> {
        if let Some(s) = self.sources.lock().unwrap().get(&q.to_bits()) {
            return Ok(Arc::clone(s));
        }
        let src = Arc::new(PVarSource::for_mode(self.cfg.src_mode, self.x, q)?);
        self.sources
            .lock()
            .unwrap()
            .insert(q.to_bits(), Arc::clone(&src));
        Ok(src)
    }

    pub fn probe(&self, q: f64) -> Result<Probe> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("q must be positive, got {q}")));
        }
        let src = self.source(q)?;
        let r = classify_index(
            self.x,
            &self.cfg.levels,
            q,
            &src,
            self.cfg.window(),
            &self.cfg.thresholds,
        )?;
        Ok(Probe {
            q,
            classification: r.classification,
            terminal_values: r.terminal_values,
            trend_slope: r.trend_slope,
        })
    }

    /// Probes every `q` concurrently; results in input order.
    pub fn sweep(&self, qs: &[f64]) -> Result<Vec<Probe>> {
        qs.par_iter().map(|&q| self.probe(q)).collect()
    }
}

/// Pairs `(q1, q2)` with `q1 < q2` where `q1` vanishes but `q2` does not, or
/// `q2` diverges but `q1` does not.
pub fn monotonicity_violations(probes: &[Probe]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<&Probe> = probes.iter().collect();
    sorted.sort_by(|a, b| a.q.total_cmp(&b.q));
    let mut out = Vec::new();
    for (i, lo) in sorted.iter().enumerate() {
        for hi in &sorted[i + 1..] {
            let vanish_then_not = lo.classification == Classification::Vanishing
                && hi.classification != Classification::Vanishing;
            let not_then_diverge = hi.classification == Classification::Diverging
                && lo.classification != Classification::Diverging;
            if vanish_then_not || not_then_diverge {
                out.push((lo.q, hi.q));
            }
        }
    }
    out
}

/// Bisection on `q` for the critical index.
///
/// Diverging probes raise the lower end, vanishing or finite positive probes
/// lower the upper end. The estimate is the last finite positive probe inside
/// the final bracket, else the bracket midpoint. Oscillating or inconclusive
/// probes abort with the probes gathered so far.
pub fn critical_index_search(
    x: &Path,
    p_range: (f64, f64),
    iters: u32,
    cfg: RoughnessConfig,
) -> Result<RoughnessReport> {
    let (p_min, p_max) = p_range;
    if !(p_min > 0.0 && p_min < p_max && p_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < p_min < p_max, got ({p_min}, {p_max})"
        )));
    }
    let prober = Prober::new(x, cfg)?;
    let (lo, hi) = rayon::join(|| prober.probe(p_min), || prober.probe(p_max));
    let (lo, hi) = (lo?, hi?);
    let mut per_q = vec![lo.clone(), hi.clone()];
    for probe in [&lo, &hi] {
        if matches!(
            probe.classification,
            Classification::Inconclusive | Classification::Oscillating
        ) {
            return Err(Error::Inconclusive {
                q: probe.q,
                evidence: per_q,
            });
        }
    }
    if lo.classification != Classification::Diverging || hi.classification != Classification::Vanishing {
        return Err(Error::Bracket(format!(
            "expected diverging at p_min = {p_min} and vanishing at p_max = {p_max}, got {} and {}",
            lo.classification, hi.classification
        )));
    }

    let (mut low, mut high) = (p_min, p_max);
    let mut last_finite = None;
    for _ in 0..iters {
        let mid = 0.5 * (low + high);
        let probe = prober.probe(mid)?;
        let class = probe.classification;
        per_q.push(probe);
        match class {
            Classification::Diverging => low = mid,
            Classification::Vanishing => high = mid,
            Classification::FinitePositive => {
                high = mid;
                last_finite = Some(mid);
            }
            Classification::Oscillating | Classification::Inconclusive => {
                return Err(Error::Inconclusive {
                    q: mid,
                    evidence: per_q,
                })
            }
        }
    }
    let p_bar_est = match last_finite {
        Some(q) if q >= low && q <= high => q,
        _ => 0.5 * (low + high),
    };
    let cfg = prober.config();
    Ok(RoughnessReport {
        p_bar_est,
        bracket: (low, high),
        hurst_est: 1.0 / p_bar_est,
        per_q,
        levels_used: cfg.levels.clone(),
        src_mode: cfg.src_mode,
        iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schauder::{schauder_eval, takagi_coefficients, SignSource};

    fn takagi_half(l: u32) -> Path {
        schauder_eval(&takagi_coefficients(0.5, SignSource::AllPlus, l).unwrap(), l).unwrap()
    }

    #[test]
    fn default_levels_exclude_top_two() {
        assert_eq!(default_levels(14), (6..=12).collect::<Vec<_>>());
        assert_eq!(default_levels(7), vec![5]);
    }

    #[test]
    fn switching_on_takagi() {
        let x = takagi_half(14);
        let prober = Prober::new(&x, RoughnessConfig::new((6..=12).collect())).unwrap();
        assert_eq!(prober.probe(3.0).unwrap().classification, Classification::Vanishing);
        assert_eq!(prober.probe(1.5).unwrap().classification, Classification::Diverging);
        let at = prober.probe(2.0).unwrap();
        assert_eq!(at.classification, Classification::FinitePositive);
        let last = *at.terminal_values.last().unwrap();
        assert!((last - (1.0 - 2f64.powi(-12))).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_individual_probes() {
        let x = takagi_half(12);
        let prober = Prober::new(&x, RoughnessConfig::new((6..=10).collect())).unwrap();
        let qs = [1.3, 2.0, 3.5];
        let swept = prober.sweep(&qs).unwrap();
        for (p, q) in swept.iter().zip(qs) {
            assert_eq!(p, &prober.probe(q).unwrap());
        }
    }

    #[test]
    fn violations_detected() {
        let mk = |q, c| Probe {
            q,
            classification: c,
            terminal_values: vec![],
            trend_slope: None,
        };
        let ok = [
            mk(1.0, Classification::Diverging),
            mk(2.0, Classification::FinitePositive),
            mk(3.0, Classification::Vanishing),
        ];
        assert!(monotonicity_violations(&ok).is_empty());
        let bad = [mk(1.0, Classification::Vanishing), mk(2.0, Classification::Diverging)];
        assert_eq!(monotonicity_violations(&bad), vec![(1.0, 2.0)]);
    }

    #[test]
    fn search_validation() {
        let x = takagi_half(10);
        let cfg = RoughnessConfig::for_search((6..=8).collect());
        assert!(matches!(
            critical_index_search(&x, (3.0, 2.0), 4, cfg.clone()),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            critical_index_search(&x, (2.5, 4.0), 4, cfg),
            Err(Error::Bracket(_))
        ));
    }
}
