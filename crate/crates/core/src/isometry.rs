//! Numerical checks of the pathwise Itô isometry for scaled quadratic
//! variation, the p-th variation chain rule, and invariance of the scaled
//! quadratic variation under smooth additive perturbations.
//!
//! Each check evaluates both sides at a range of dyadic levels. The identities
//! hold in the limit only, so the reports carry per-level errors and the
//! log2 trend of the relative error rather than a per-level verdict.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dyadic_partition, Path};
use crate::limits::log2_trend;
use crate::variation::{abs_pow, accumulate, pth_variation, scaled_qv, PVarSource, SourceMode, VariationProfile};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A `C²` map with its first two derivatives.
#[derive(Clone)]
pub struct SmoothMap {
    pub id: String,
    f: RealFn,
    f1: RealFn,
    f2: RealFn,
    /// Tabulated maps are interpolated and flagged.
    pub lower_trust: bool,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("id", &self.id)
            .field("lower_trust", &self.lower_trust)
            .finish()
    }
}

/// Finite-difference consistency of a [`SmoothMap`] on an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub h: f64,
    /// `max |f1 - central difference of f| / h²`.
    pub k_first: f64,
    /// `max |f2 - central difference of f1| / h²`.
    pub k_second: f64,
    pub sup_f1: f64,
    pub sup_f2: f64,
}

impl SmoothMap {
    pub fn new(
        id: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            f: Arc::new(f),
            f1: Arc::new(f1),
            f2: Arc::new(f2),
            lower_trust: false,
        }
    }

    pub fn identity() -> Self {
        Self::new("identity", |u| u, |_| 1.0, |_| 0.0)
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::new(format!("affine({a},{b})"), move |u| a * u + b, move |_| a, |_| 0.0)
    }

    pub fn square_plus_one() -> Self {
        Self::new("square_plus_one", |u| u * u + 1.0, |u| 2.0 * u, |_| 2.0)
    }

    pub fn sin() -> Self {
        Self::new("sin", f64::sin, f64::cos, |u| -u.sin())
    }

    /// `exp(u)` with the argument clamped to `[-clamp, clamp]`.
    pub fn exp_clamped(clamp: f64) -> Self {
        let c = clamp.abs();
        let inside = move |u: f64| u.abs() <= c;
        Self::new(
            format!("exp_clamped({c})"),
            move |u| u.clamp(-c, c).exp(),
            move |u| if inside(u) { u.exp() } else { 0.0 },
            move |u| if inside(u) { u.exp() } else { 0.0 },
        )
    }

    /// Looks up a catalog map: `identity`, `affine:a,b`, `square_plus_one`,
    /// `sin`, `exp_clamped[:c]`.
    pub fn from_catalog(name: &str) -> Result<Self> {
        let (head, args) = name.split_once(':').unwrap_or((name, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad map argument `{s}`")))
                })
                .collect()
        };
        match head {
            "identity" | "id" => Ok(Self::identity()),
            "affine" => match nums()?.as_slice() {
                [a, b] => Ok(Self::affine(*a, *b)),
                _ => Err(Error::InvalidParameter("affine needs `affine:a,b`".into())),
            },
            "square_plus_one" | "sq1" => Ok(Self::square_plus_one()),
            "sin" => Ok(Self::sin()),
            "exp_clamped" | "exp" => match nums()?.as_slice() {
                [] => Ok(Self::exp_clamped(20.0)),
                [c] => Ok(Self::exp_clamped(*c)),
                _ => Err(Error::InvalidParameter("exp_clamped takes one argument".into())),
            },
            other => Err(Error::InvalidParameter(format!("unknown map `{other}`"))),
        }
    }

    /// Map from tabulated `(u, f, f', f'')` rows on a strictly increasing
    /// grid: cubic Hermite interpolation for `f` and `f'`, linear for `f''`,
    /// constant extrapolation of the end values.
    pub fn tabulated(id: impl Into<String>, rows: Vec<[f64; 4]>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidParameter("tabulated map needs at least two rows".into()));
        }
        if rows.windows(2).any(|w| w[0][0] >= w[1][0]) || rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "tabulated map needs finite rows with strictly increasing u".into(),
            ));
        }
        let rows = Arc::new(rows);
        let locate = {
            let rows = Arc::clone(&rows);
            move |u: f64| -> (usize, f64) {
                let last = rows.len() - 1;
                let u = u.clamp(rows[0][0], rows[last][0]);
                let i = rows.partition_point(|r| r[0] <= u).clamp(1, last) - 1;
                let h = rows[i + 1][0] - rows[i][0];
                (i, (u - rows[i][0]) / h)
            }
        };
        let hermite = |rows: &[[f64; 4]], i: usize, s: f64, v: usize, d: usize| {
            let h = rows[i + 1][0] - rows[i][0];
            let (s2, s3) = (s * s, s * s * s);
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            h00 * rows[i][v] + h10 * h * rows[i][d] + h01 * rows[i + 1][v] + h11 * h * rows[i + 1][d]
        };
        let (r0, l0) = (Arc::clone(&rows), locate.clone());
        let (r1, l1) = (Arc::clone(&rows), locate.clone());
        let (r2, l2) = (Arc::clone(&rows), locate);
        let mut map = Self::new(
            id,
            move |u| {
                let (i, s) = l0(u);
                hermite(&r0, i, s, 1, 2)
            },
            move |u| {
                let (i, s) = l1(u);
                hermite(&r1, i, s, 2, 3)
            },
            move |u| {
                let (i, s) = l2(u);
                r2[i][3] + s * (r2[i + 1][3] - r2[i][3])
            },
        );
        map.lower_trust = true;
        Ok(map)
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn f1(&self, u: f64) -> f64 {
        (self.f1)(u)
    }

    pub fn f2(&self, u: f64) -> f64 {
        (self.f2)(u)
    }

    /// Compares the derivatives against central differences with step `h`
    /// at `samples + 1` equispaced points of `[lo, hi]`.
    pub fn derivative_check(&self, lo: f64, hi: f64, h: f64, samples: usize) -> DerivativeCheck {
        let mut out = DerivativeCheck {
            h,
            k_first: 0.0,
            k_second: 0.0,
            sup_f1: 0.0,
            sup_f2: 0.0,
        };
        for i in 0..=samples {
            let u = lo + (hi - lo) * i as f64 / samples.max(1) as f64;
            let d1 = (self.f(u + h) - self.f(u - h)) / (2.0 * h);
            let d2 = (self.f1(u + h) - self.f1(u - h)) / (2.0 * h);
            out.k_first = out.k_first.max((self.f1(u) - d1).abs() / (h * h));
            out.k_second = out.k_second.max((self.f2(u) - d2).abs() / (h * h));
            out.sup_f1 = out.sup_f1.max(self.f1(u).abs());
            out.sup_f2 = out.sup_f2.max(self.f2(u).abs());
        }
        out
    }
}

/// `t ↦ f(x(t))` on the same grid.
pub fn compose_path(f: &SmoothMap, x: &Path) -> Result<Path> {
    let samples: Vec<f64> = x.samples().iter().map(|&u| f.f(u)).collect();
    if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation { t: x.time(j) });
    }
    Path::new(x.grid_level(), samples, format!("{}({})", f.id, x.label()))
}

/// Left-endpoint Riemann–Stieltjes sums `out[j] = Σ_{i<j} g[i] μ_i` against
/// the block masses `μ_i` of a profile. `g` has one entry per partition
/// point; the last is unused. A zero integrand against an infinite mass
/// contributes zero.
pub fn stieltjes_integral(g: &[f64], mu: &VariationProfile) -> Result<Vec<f64>> {
    if g.len() != mu.values.len() {
        return Err(Error::Mismatch(format!(
            "integrand has {} values, measure has {} points",
            g.len(),
            mu.values.len()
        )));
    }
    let masses = mu.increments();
    let terms: Vec<f64> = g
        .iter()
        .zip(&masses)
        .map(|(&gi, &m)| if gi == 0.0 { 0.0 } else { gi * m })
        .collect();
    if terms.iter().all(|t| *t >= 0.0 || t.is_nan()) {
        return Ok(accumulate(&terms).0);
    }
    Ok(crate::summation::prefix_sums(terms))
}

/// Which power of `|f'|` the isometry integrates against `d⟨x⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandPower {
    /// `|f'|^p`: the power for which `⟨f∘x⟩` scales correctly under affine
    /// maps for every `p`.
    P,
    /// `|f'|²`; agrees with [`IntegrandPower::P`] at `p = 2`.
    Two,
}

/// Relative error `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Relative errors at or below this are rounding noise: both sides agree
/// exactly.
pub const EXACT_REL_ERR: f64 = 1e-12;

fn all_exact(errs: &[f64]) -> bool {
    errs.iter().all(|e| *e <= EXACT_REL_ERR)
}

/// Log2 trend of a nonnegative error sequence. `Some(-∞)` when every error is
/// at rounding level, `None` when fewer than two errors are positive.
fn error_trend(levels: &[u32], errs: &[f64]) -> Option<f64> {
    if all_exact(errs) {
        return Some(f64::NEG_INFINITY);
    }
    log2_trend(levels, errs)
}

/// Slope of `log2 max|Δx|` against level, negated: a proxy for the Hölder
/// exponent of the sampled path.
pub fn hoelder_proxy(x: &Path, levels: &[u32]) -> Option<f64> {
    let s = x.samples();
    let maxes: Vec<f64> = levels
        .iter()
        .map(|&n| {
            let step = 1usize << (x.grid_level() - n);
            s.iter()
                .step_by(step)
                .collect::<Vec<_>>()
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    log2_trend(levels, &maxes).map(|s| -s)
}

/// Hölder exponent above which the isometry is guaranteed for index `p`.
pub fn hoelder_threshold(p: f64) -> f64 {
    ((1.0 + 4.0 / p).sqrt() - 1.0) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub map: String,
    pub p: f64,
    pub integrand_power: IntegrandPower,
    pub src_mode: SourceMode,
    pub levels: Vec<u32>,
    /// `⟨f∘x⟩^{(p)}_{π^n}(1)`.
    pub lhs_terminal: Vec<f64>,
    /// `Σ |f'(x(t_i))|^k Δ⟨x⟩^{(p)}_{π^n}(t_i)` with `k` the integrand power.
    pub rhs_terminal: Vec<f64>,
    /// Right side with `|f'|²`, reported for comparison.
    pub rhs_square_terminal: Vec<f64>,
    pub abs_err: Vec<f64>,
    pub rel_err: Vec<f64>,
    /// Log2 trend of `rel_err` per level; `-inf` when every error is zero.
    pub err_trend_slope: Option<f64>,
    pub success: bool,
    /// `f'(x(t)) = 0` somewhere on the grid.
    pub degenerate: bool,
    pub hoelder_proxy: Option<f64>,
    pub hoelder_threshold: f64,
    /// Log2 trend of `⟨x⟩^{(p)}_{π^n}(1)`; near zero when `p` is the
    /// critical index of `x`.
    pub scaled_qv_trend: Option<f64>,
    pub warnings: Vec<String>,
}

fn check_levels(x: &Path, levels: &[u32]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("empty level range".into()));
    }
    for &n in levels {
        if n > x.grid_level() {
            return Err(Error::InvalidRefinement {
                level: n,
                grid_level: x.grid_level(),
            });
        }
    }
    Ok(())
}

fn success_from(errs: &[f64], slope: Option<f64>) -> bool {
    if all_exact(errs) {
        return true;
    }
    slope.is_some_and(|s| s < 0.0) && errs.last() < errs.first()
}

/// Compares `⟨f∘x⟩^{(p)}` with `∫ |f'∘x|^k d⟨x⟩^{(p)}` level by level. Both
/// scaled variations use their own p-th variation source of mode `src_mode`.
pub fn isometry_check(
    x: &Path,
    f: &SmoothMap,
    p: f64,
    levels: &[u32],
    src_mode: SourceMode,
    power: IntegrandPower,
) -> Result<IsometryReport> {
    check_levels(x, levels)?;
    let fx = compose_path(f, x)?;
    let (src_x, src_f) = rayon::join(
        || PVarSource::for_mode(src_mode, x, p),
        || PVarSource::for_mode(src_mode, &fx, p),
    );
    let (src_x, src_f) = (src_x?, src_f?);
    let k = match power {
        IntegrandPower::P => p,
        IntegrandPower::Two => 2.0,
    };

    let rows: Vec<(f64, f64, f64, f64)> = levels
        .par_iter()
        .map(|&n| {
            let part = dyadic_partition(n, x.grid_level())?;
            let lhs = scaled_qv(&fx, &part, p, &src_f)?.terminal();
            let mu = scaled_qv(x, &part, p, &src_x)?;
            let deriv: Vec<f64> = part.indices().iter().map(|&j| f.f1(x.samples()[j]).abs()).collect();
            let g: Vec<f64> = deriv.iter().map(|&d| abs_pow(d, k)).collect();
            let g2: Vec<f64> = deriv.iter().map(|&d| d * d).collect();
            let rhs = *stieltjes_integral(&g, &mu)?.last().unwrap();
            let rhs2 = *stieltjes_integral(&g2, &mu)?.last().unwrap();
            Ok((lhs, rhs, rhs2, mu.terminal()))
        })
        .collect::<Result<_>>()?;

    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rhs2: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let sqv: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let abs_err: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).collect();
    let rel: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| rel_err(*a, *b)).collect();
    let slope = error_trend(levels, &rel);

    let mut warnings = Vec::new();
    let degenerate = x.samples().iter().any(|&u| f.f1(u) == 0.0);
    if degenerate {
        warnings.push(format!("{}' vanishes on the path", f.id));
    }
    if f.lower_trust {
        warnings.push(format!("{} is interpolated from a table", f.id));
    }
    let scaled_qv_trend = if levels.len() >= 2 { log2_trend(levels, &sqv) } else { None };
    if scaled_qv_trend.is_some_and(|s| s.abs() > 0.25) {
        warnings.push(format!(
            "scaled QV of the path trends with slope {:.3} per level; p = {p} may not be its critical index",
            scaled_qv_trend.unwrap()
        ));
    }
    let proxy = if levels.len() >= 2 { hoelder_proxy(x, levels) } else { None };
    let threshold = hoelder_threshold(p);
    if proxy.is_some_and(|a| a <= threshold) {
        warnings.push(format!(
            "Hölder proxy {:.3} does not exceed {threshold:.3}",
            proxy.unwrap()
        ));
    }
    if src_mode != SourceMode::Analytic {
        warnings.push("p-th variation assumed continuous; the finest-level proxy is a step function".into());
    }
    for w in &warnings {
        log::warn!("isometry_check: {w}");
    }

    Ok(IsometryReport {
        map: f.id.clone(),
        p,
        integrand_power: power,
        src_mode,
        levels: levels.to_vec(),
        success: success_from(&rel, slope),
        lhs_terminal: lhs,
        rhs_terminal: rhs,
        rhs_square_terminal: rhs2,
        abs_err,
        rel_err: rel,
        err_trend_slope: slope,
        degenerate,
        hoelder_proxy: proxy,
        hoelder_threshold: threshold,
        scaled_qv_trend,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRuleReport {
    pub map: String,
    pub p: f64,
    pub levels: Vec<u32>,
    /// `[f∘x]^{(p)}_{π^n}(1)`.
    pub lhs_terminal: Vec<f64>,
    /// `Σ |f'(x(t_i))|^p |Δx_i|^p`.
    pub rhs_terminal: Vec<f64>,
    pub abs_err: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub err_trend_slope: Option<f64>,
    pub success: bool,
}

/// Compares `[f∘x]^{(p)}` with `Σ |f'(x(t_i))|^p Δ[x]^{(p)}(t_i)` along the
/// level-`n` dyadic partitions.
pub fn chain_rule_check(x: &Path, f: &SmoothMap, p: f64, levels: &[u32]) -> Result<ChainRuleReport> {
    check_levels(x, levels)?;
    let fx = compose_path(f, x)?;
    let rows: Vec<(f64, f64)> = levels
        .par_iter()
        .map(|&n| {
            let part = dyadic_partition(n, x.grid_level())?;
            let lhs = pth_variation(&fx, &part, p)?.terminal();
            let mu = pth_variation(x, &part, p)?;
            let g: Vec<f64> = part
                .indices()
                .iter()
                .map(|&j| abs_pow(f.f1(x.samples()[j]), p))
                .collect();
            let rhs = *stieltjes_integral(&g, &mu)?.last().unwrap();
            Ok((lhs, rhs))
        })
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let abs_err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).collect();
    let rel: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| rel_err(*a, *b)).collect();
    let slope = error_trend(levels, &rel);
    Ok(ChainRuleReport {
        map: f.id.clone(),
        p,
        levels: levels.to_vec(),
        success: success_from(&rel, slope),
        lhs_terminal: lhs,
        rhs_terminal: rhs,
        abs_err,
        rel_err: rel,
        err_trend_slope: slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub p: f64,
    pub src_mode: SourceMode,
    pub levels: Vec<u32>,
    /// `⟨x⟩^{(p)}_{π^n}(1)`.
    pub base_terminal: Vec<f64>,
    /// `⟨x + A⟩^{(p)}_{π^n}(1)`.
    pub perturbed_terminal: Vec<f64>,
    /// `[A]^{(p)}_{π^n}(1)`.
    pub perturbation_pvar: Vec<f64>,
    pub rel_diff: Vec<f64>,
    pub trend_slope: Option<f64>,
    pub success: bool,
    /// The perturbation's p-th variation does not visibly vanish.
    pub inadmissible: bool,
    pub warnings: Vec<String>,
}

/// Compares `⟨x + A⟩^{(p)}` with `⟨x⟩^{(p)}` level by level.
pub fn invariance_check(
    x: &Path,
    a: &Path,
    p: f64,
    levels: &[u32],
    src_mode: SourceMode,
) -> Result<InvarianceReport> {
    check_levels(x, levels)?;
    let xa = x.add(a)?;
    let (src_x, src_xa) = rayon::join(
        || PVarSource::for_mode(src_mode, x, p),
        || PVarSource::for_mode(src_mode, &xa, p),
    );
    let (src_x, src_xa) = (src_x?, src_xa?);
    let rows: Vec<(f64, f64, f64)> = levels
        .par_iter()
        .map(|&n| {
            let part = dyadic_partition(n, x.grid_level())?;
            let base = scaled_qv(x, &part, p, &src_x)?.terminal();
            let pert = scaled_qv(&xa, &part, p, &src_xa)?.terminal();
            let apv = pth_variation(a, &part, p)?.terminal();
            Ok((base, pert, apv))
        })
        .collect::<Result<_>>()?;
    let base: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let pert: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let apv: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let rel: Vec<f64> = base
        .iter()
        .zip(&pert)
        .map(|(b, q)| if b == q { 0.0 } else { (q - b).abs() / b.abs().max(1e-12) })
        .collect();
    let slope = error_trend(levels, &rel);

    let mut warnings = Vec::new();
    let a_trend = if levels.len() >= 2 { log2_trend(levels, &apv) } else { None };
    let a_zero = apv.iter().all(|v| *v == 0.0);
    let inadmissible = !a_zero && a_trend.is_none_or(|s| s > -0.25);
    if inadmissible {
        warnings.push(format!(
            "perturbation {} does not have vanishing p-th variation (trend {:?})",
            a.label(),
            a_trend
        ));
    }
    for w in &warnings {
        log::warn!("invariance_check: {w}");
    }
    Ok(InvarianceReport {
        p,
        src_mode,
        levels: levels.to_vec(),
        success: success_from(&rel, slope),
        base_terminal: base,
        perturbed_terminal: pert,
        perturbation_pvar: apv,
        rel_diff: rel,
        trend_slope: slope,
        inadmissible,
        warnings,
    })
}
