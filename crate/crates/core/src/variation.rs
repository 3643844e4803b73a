//! Variation kernels along a partition.
//!
//! Every kernel returns a [`VariationProfile`]: the distribution function of
//! an atomic measure placing one weight on each partition block. Three
//! weightings are provided:
//!
//! * p-th variation, `|Δx|^p`;
//! * pathwise scaled quadratic variation, `w^γ |Δx|²` with `γ = (p-2)/p` and
//!   `w` the increment of the p-th variation supplied by a [`PVarSource`];
//! * classical scaled quadratic variation, `|Δt|^γ |Δx|²`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dyadic_partition, grid_time, Partition, Path};
use crate::summation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Pth,
    Scaled,
    ClassicalScaled,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::Pth => "pth",
            ProfileKind::Scaled => "scaled",
            ProfileKind::ClassicalScaled => "classical_scaled",
        })
    }
}

/// Accumulated variation at the points of one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationProfile {
    pub level: u32,
    pub grid_level: u32,
    /// Grid indices of the partition points.
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[j] = μ([0, t_j])`; nondecreasing, `values[0] = 0`.
    pub values: Vec<f64>,
    /// Variation exponent; absent for classical profiles.
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub kind: ProfileKind,
    /// Some block contributed `+∞` (zero weight against a nonzero increment
    /// with negative exponent).
    pub divergent: bool,
    /// Number of negative weight increments clamped to zero.
    pub clamped: usize,
    /// Largest single-block contribution.
    pub max_block: f64,
    /// Per-block masses as computed by the kernel; empty for profiles read
    /// back from disk.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masses: Vec<f64>,
}

impl VariationProfile {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("profile has at least one point")
    }

    /// Per-block masses: the kernel's terms when available, else
    /// `values[i+1] - values[i]`.
    pub fn increments(&self) -> Vec<f64> {
        if self.masses.len() + 1 == self.values.len() {
            return self.masses.clone();
        }
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest block contribution relative to the total mass, a proxy for
    /// the limit measure having an atom.
    pub fn atom_share(&self) -> f64 {
        let total = self.terminal();
        if total > 0.0 && total.is_finite() {
            self.max_block / total
        } else {
            0.0
        }
    }

    /// Value of the distribution function at `t`, linearly interpolated
    /// between partition points.
    pub fn value_at(&self, t: f64) -> f64 {
        let j = self.times.partition_point(|&s| s < t);
        if j < self.times.len() && self.times[j] == t {
            return self.values[j];
        }
        if j == 0 {
            return self.values[0];
        }
        if j >= self.times.len() {
            return self.terminal();
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Value at grid index `j`, exact when `j` is a partition point.
    fn value_at_index(&self, j: usize, grid_level: u32) -> f64 {
        if self.grid_level == grid_level {
            if self.indices.len() == (1usize << grid_level) + 1 {
                return self.values[j];
            }
            if let Ok(pos) = self.indices.binary_search(&j) {
                return self.values[pos];
            }
        }
        self.value_at(grid_time(j, grid_level))
    }
}

/// Mode tag of a [`PVarSource`], recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    Analytic,
    FinestLevel,
    SelfLevel,
}

impl fmt::Display for SourceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceMode::Analytic => "analytic",
            SourceMode::FinestLevel => "finest_level",
            SourceMode::SelfLevel => "self_level",
        })
    }
}

impl std::str::FromStr for SourceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(SourceMode::Analytic),
            "finest_level" | "finest" => Ok(SourceMode::FinestLevel),
            "self_level" | "self" => Ok(SourceMode::SelfLevel),
            other => Err(Error::InvalidParameter(format!(
                "unknown source mode `{other}` (expected analytic, finest_level or self_level)"
            ))),
        }
    }
}

/// Supplier of the limit p-th variation `t ↦ [x]^{(p)}(t)` used inside the
/// scaled quadratic variation weights.
#[derive(Clone)]
pub enum PVarSource {
    /// A known closed form, nondecreasing with value 0 at `t = 0`.
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// The p-th variation profile at the deepest available level.
    FinestLevel(Arc<VariationProfile>),
    /// The p-th variation of the evaluation partition itself; the scaled sum
    /// then reduces to the p-th variation.
    SelfLevel,
}

impl fmt::Debug for PVarSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PVarSource::Analytic(_) => f.write_str("Analytic(..)"),
            PVarSource::FinestLevel(p) => write!(f, "FinestLevel(level={}, p={:?})", p.level, p.p),
            PVarSource::SelfLevel => f.write_str("SelfLevel"),
        }
    }
}

impl PVarSource {
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let v0 = f(0.0);
        if v0 != 0.0 {
            return Err(Error::Source(format!(
                "analytic p-th variation must vanish at t = 0, got {v0}"
            )));
        }
        Ok(PVarSource::Analytic(Arc::new(f)))
    }

    /// `t ↦ slope · t`.
    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope >= 0.0 && slope.is_finite()) {
            return Err(Error::Source(format!(
                "linear p-th variation needs a finite nonnegative slope, got {slope}"
            )));
        }
        Self::analytic(move |t| slope * t)
    }

    /// p-th variation of `x` along the full grid.
    pub fn finest(x: &Path, p: f64) -> Result<Self> {
        let part = dyadic_partition(x.grid_level(), x.grid_level())?;
        Ok(PVarSource::FinestLevel(Arc::new(pth_variation(x, &part, p)?)))
    }

    pub fn from_profile(profile: VariationProfile) -> Result<Self> {
        if profile.kind != ProfileKind::Pth {
            return Err(Error::Source(format!(
                "finest-level source needs a p-th variation profile, got {}",
                profile.kind
            )));
        }
        Ok(PVarSource::FinestLevel(Arc::new(profile)))
    }

    /// Builds the source of the given mode for path `x`. Analytic mode uses
    /// the linear form `t ↦ C t` with `C` the finest-level terminal value.
    pub fn for_mode(mode: SourceMode, x: &Path, p: f64) -> Result<Self> {
        match mode {
            SourceMode::SelfLevel => Ok(PVarSource::SelfLevel),
            SourceMode::FinestLevel => Self::finest(x, p),
            SourceMode::Analytic => {
                let part = dyadic_partition(x.grid_level(), x.grid_level())?;
                Self::linear(pth_variation(x, &part, p)?.terminal())
            }
        }
    }

    pub fn mode(&self) -> SourceMode {
        match self {
            PVarSource::Analytic(_) => SourceMode::Analytic,
            PVarSource::FinestLevel(_) => SourceMode::FinestLevel,
            PVarSource::SelfLevel => SourceMode::SelfLevel,
        }
    }

    fn check(&self, part: &Partition, p: f64) -> Result<()> {
        if let PVarSource::FinestLevel(prof) = self {
            if prof.kind != ProfileKind::Pth {
                return Err(Error::Source("finest-level profile is not a p-th variation".into()));
            }
            if prof.p != Some(p) {
                return Err(Error::Source(format!(
                    "finest-level profile has p = {:?}, evaluation needs p = {p}",
                    prof.p
                )));
            }
            if prof.level < part.level() || prof.values.len() < part.indices().len() {
                return Err(Error::Source(format!(
                    "finest-level profile (level {}, {} points) is coarser than the partition (level {}, {} points)",
                    prof.level,
                    prof.values.len(),
                    part.level(),
                    part.indices().len()
                )));
            }
        }
        Ok(())
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "exponent must be a positive finite number, got {p}"
        )));
    }
    Ok(())
}

/// `|v|^p`, with the integer cases computed by multiplication so that
/// `p = 2` agrees bitwise with `v * v`.
#[inline]
pub fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else {
        a.powf(p)
    }
}

/// Scaled-QV exponent `γ = (p - 2) / p`.
pub fn scaled_gamma(p: f64) -> f64 {
    (p - 2.0) / p
}

/// Running compensated totals of nonnegative terms: `out[0] = 0`, forced
/// nondecreasing, `+∞` from the first infinite term on. Returns the totals
/// and whether an infinite term occurred.
pub fn accumulate(terms: &[f64]) -> (Vec<f64>, bool) {
    let mut divergent = false;
    let mut values = Vec::with_capacity(terms.len() + 1);
    values.push(0.0);
    let mut acc = summation::NeumaierSum::new();
    let mut prev = 0.0f64;
    for &t in terms {
        let v = if divergent || t.is_infinite() {
            divergent = true;
            f64::INFINITY
        } else {
            acc.add(t);
            acc.value().max(prev)
        };
        values.push(v);
        prev = v;
    }
    (values, divergent)
}

fn assemble(
    x: &Path,
    part: &Partition,
    p: Option<f64>,
    gamma: Option<f64>,
    kind: ProfileKind,
    terms: Vec<f64>,
    clamped: usize,
) -> VariationProfile {
    let (values, divergent) = accumulate(&terms);
    let max_block = terms.iter().copied().fold(0.0, f64::max);
    VariationProfile {
        level: part.level(),
        grid_level: x.grid_level(),
        indices: part.indices().to_vec(),
        times: part.times(),
        values,
        p,
        gamma,
        kind,
        divergent,
        clamped,
        max_block,
        masses: terms,
    }
}

fn increments<'a>(x: &'a Path, part: &'a Partition) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
    let s = x.samples();
    part.indices()
        .windows(2)
        .map(move |w| (w[0], w[1], s[w[1]] - s[w[0]]))
}

/// Profile of `Σ |x(t_{i+1}) - x(t_i)|^p` along `part`.
pub fn pth_variation(x: &Path, part: &Partition, p: f64) -> Result<VariationProfile> {
    check_exponent(p)?;
    part.check_path(x)?;
    let terms = increments(x, part).map(|(_, _, d)| abs_pow(d, p)).collect();
    Ok(assemble(x, part, Some(p), None, ProfileKind::Pth, terms, 0))
}

/// Pathwise scaled quadratic variation `Σ w_i^γ |Δx_i|²` with `γ = (p-2)/p`
/// and `w_i` the increment of `src` over block `i`.
///
/// A zero weight against a zero increment contributes 0. A zero weight
/// against a nonzero increment contributes `+∞` when `γ < 0` and the profile
/// is flagged divergent. Negative weight increments are clamped to zero and
/// counted in [`VariationProfile::clamped`].
pub fn scaled_qv(x: &Path, part: &Partition, p: f64, src: &PVarSource) -> Result<VariationProfile> {
    check_exponent(p)?;
    part.check_path(x)?;
    src.check(part, p)?;
    let gamma = scaled_gamma(p);
    let grid_level = x.grid_level();
    let mut clamped = 0usize;
    let weight = |a: usize, b: usize, d: f64| -> f64 {
        match src {
            PVarSource::SelfLevel => abs_pow(d, p),
            PVarSource::Analytic(f) => f(grid_time(b, grid_level)) - f(grid_time(a, grid_level)),
            PVarSource::FinestLevel(prof) => {
                prof.value_at_index(b, grid_level) - prof.value_at_index(a, grid_level)
            }
        }
    };
    let terms = increments(x, part)
        .map(|(a, b, d)| {
            let mut w = weight(a, b, d);
            if w < 0.0 || w.is_nan() {
                clamped += 1;
                w = 0.0;
            }
            weighted_square(w, gamma, d)
        })
        .collect();
    if clamped > 0 {
        log::warn!("scaled_qv: clamped {clamped} negative weight increments at level {}", part.level());
    }
    Ok(assemble(x, part, Some(p), Some(gamma), ProfileKind::Scaled, terms, clamped))
}

#[inline]
fn weighted_square(w: f64, gamma: f64, d: f64) -> f64 {
    let sq = d * d;
    if gamma == 0.0 || sq == 0.0 {
        return sq;
    }
    if w == 0.0 {
        return if gamma < 0.0 { f64::INFINITY } else { 0.0 };
    }
    w.powf(gamma) * sq
}

/// Classical scaled quadratic variation `Σ |Δt_i|^γ |Δx_i|²`.
pub fn classical_scaled_qv(x: &Path, part: &Partition, gamma: f64) -> Result<VariationProfile> {
    if !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be finite, got {gamma}")));
    }
    part.check_path(x)?;
    let unit = (-(x.grid_level() as f64)).exp2();
    let terms = increments(x, part)
        .map(|(a, b, d)| {
            let dt = (b - a) as f64 * unit;
            if gamma == 0.0 {
                d * d
            } else {
                dt.powf(gamma) * d * d
            }
        })
        .collect();
    Ok(assemble(x, part, None, Some(gamma), ProfileKind::ClassicalScaled, terms, 0))
}

/// Runs `kernel` on the dyadic partitions of every level in `levels`,
/// concurrently, returning profiles in level order.
pub fn over_levels<F>(x: &Path, levels: &[u32], kernel: F) -> Result<Vec<VariationProfile>>
where
    F: Fn(&Path, &Partition) -> Result<VariationProfile> + Sync,
{
    levels
        .par_iter()
        .map(|&n| {
            let part = dyadic_partition(n, x.grid_level())?;
            kernel(x, &part)
        })
        .collect()
}

/// Terminal values `μ^n([0, 1])` of a profile sequence.
pub fn terminals(profiles: &[VariationProfile]) -> Vec<f64> {
    profiles.iter().map(VariationProfile::terminal).collect()
}
