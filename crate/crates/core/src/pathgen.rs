//! Test-path generators: fractional Brownian motion, smooth perturbations and
//! wrappers over the Schauder constructions.
//!
//! Every generator is a pure function of its parameters and seed. Random
//! streams are ChaCha8 seeded with `seed_from_u64`; Gaussian draws use the
//! ziggurat `StandardNormal` of `rand_distr`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Path;
use crate::schauder::{counterexample_coefficients, schauder_eval, takagi_coefficients, SchauderCoefficients, SignSource};

/// Identifies the seed → path map in run metadata.
pub const GENERATOR_VERSION: &str = "roughvar-gen/1 (chacha8, ziggurat normal, davies-harte)";

/// Largest grid level accepted by [`fbm_path`].
pub const FBM_MAX_LEVEL: u32 = 22;
/// Largest grid level for the dense covariance fallback.
pub const FBM_FALLBACK_MAX_LEVEL: u32 = 12;
/// Embedding eigenvalues at or above `-EIGEN_TOL * max` are clamped to zero.
pub const EIGEN_TOL: f64 = 1e-10;

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Hurst index must lie in (0, 1), got {h}"
        )));
    }
    Ok(())
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) + (k - 1.0).abs().powf(e) - 2.0 * k.powf(e))
}

/// Eigenvalues of the minimal circulant embedding of `n` fGn increments.
fn embedding_eigenvalues(h: f64, n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(h, lag), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

/// Unit-step fGn by circulant embedding; `None` if the embedding has an
/// eigenvalue below tolerance.
fn fgn_circulant(h: f64, n: usize, rng: &mut ChaCha8Rng) -> std::result::Result<Vec<f64>, (f64, f64)> {
    let m = 2 * n;
    let mut eig = embedding_eigenvalues(h, n);
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -EIGEN_TOL * max {
        return Err((min, max));
    }
    eig.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut buf: Vec<Complex<f64>> = eig
        .iter()
        .map(|&lambda| {
            let scale = (lambda / m as f64).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(scale * re, scale * im)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    Ok(buf[..n].iter().map(|c| c.re).collect())
}

/// Unit-step fGn by Cholesky factorisation of the Toeplitz covariance.
fn fgn_cholesky(h: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(h, i.abs_diff(j)));
    let chol = cov.cholesky().ok_or_else(|| {
        Error::InvalidParameter(format!("fGn covariance not positive definite for H = {h}"))
    })?;
    let z = nalgebra::DVector::from_fn(n, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    Ok((chol.l() * z).iter().copied().collect())
}

fn cumulative_path(increments: &[f64], scale: f64, grid_level: u32, label: String) -> Result<Path> {
    let mut samples = Vec::with_capacity(increments.len() + 1);
    samples.push(0.0);
    let mut acc = 0.0;
    for d in increments {
        acc += d * scale;
        samples.push(acc);
    }
    Path::new(grid_level, samples, label)
}

/// Fractional Brownian motion on the level-`grid_level` grid of `[0, 1]`.
///
/// Increments are sampled exactly in distribution by circulant embedding
/// (Davies–Harte), scaled by `2^{-L H}` and summed. If the embedding is not
/// nonnegative definite within [`EIGEN_TOL`], falls back to a dense Cholesky
/// factorisation for `grid_level <= 12`, else fails.
pub fn fbm_path(h: f64, grid_level: u32, seed: u64) -> Result<Path> {
    check_hurst(h)?;
    if grid_level > FBM_MAX_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "fBM grid level {grid_level} exceeds {FBM_MAX_LEVEL}"
        )));
    }
    let n = 1usize << grid_level;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let increments = match fgn_circulant(h, n, &mut rng) {
        Ok(v) => v,
        Err((eigenvalue, max_eigenvalue)) => {
            if grid_level > FBM_FALLBACK_MAX_LEVEL {
                return Err(Error::Embedding {
                    eigenvalue,
                    max_eigenvalue,
                });
            }
            log::warn!("circulant embedding not PSD (min {eigenvalue:e}); using Cholesky");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            fgn_cholesky(h, n, &mut rng)?
        }
    };
    let scale = (-(grid_level as f64) * h).exp2();
    cumulative_path(&increments, scale, grid_level, format!("fbm(H={h},seed={seed})"))
}

/// Dense-covariance fBM sampler; the reference route for small grids.
pub fn fbm_path_cholesky(h: f64, grid_level: u32, seed: u64) -> Result<Path> {
    check_hurst(h)?;
    if grid_level > FBM_FALLBACK_MAX_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "Cholesky fBM limited to grid level {FBM_FALLBACK_MAX_LEVEL}"
        )));
    }
    let n = 1usize << grid_level;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let increments = fgn_cholesky(h, n, &mut rng)?;
    let scale = (-(grid_level as f64) * h).exp2();
    cumulative_path(&increments, scale, grid_level, format!("fbm-chol(H={h},seed={seed})"))
}

/// Smooth (Lipschitz) perturbation shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smooth {
    /// `amplitude · sin(2π · freq · t)`.
    Sine { amplitude: f64, freq: f64 },
    /// `amplitude · Σ_k coeffs[k] t^k`.
    Poly { amplitude: f64, coeffs: Vec<f64> },
}

impl Smooth {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Smooth::Sine { amplitude, freq } => amplitude * (2.0 * std::f64::consts::PI * freq * t).sin(),
            Smooth::Poly { amplitude, coeffs } => {
                amplitude * coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    /// A Lipschitz constant on `[0, 1]`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Smooth::Sine { amplitude, freq } => (amplitude * 2.0 * std::f64::consts::PI * freq).abs(),
            Smooth::Poly { amplitude, coeffs } => {
                amplitude.abs()
                    * coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, c)| k as f64 * c.abs())
                        .sum::<f64>()
            }
        }
    }
}

pub fn smooth_perturbation(shape: &Smooth, grid_level: u32) -> Result<Path> {
    let label = match shape {
        Smooth::Sine { amplitude, freq } => format!("{amplitude}*sin(2pi*{freq}*t)"),
        Smooth::Poly { amplitude, coeffs } => format!("{amplitude}*poly{coeffs:?}"),
    };
    Path::from_fn(grid_level, label, |t| shape.eval(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Fbm,
    Takagi,
    Counterexample,
    Smooth,
    CustomSchauder,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fbm" => GeneratorKind::Fbm,
            "takagi" => GeneratorKind::Takagi,
            "counterexample" => GeneratorKind::Counterexample,
            "smooth" => GeneratorKind::Smooth,
            "custom_schauder" | "schauder" => GeneratorKind::CustomSchauder,
            other => {
                return Err(Error::InvalidParameter(format!("unknown generator kind `{other}`")))
            }
        })
    }
}

/// Declarative description of a generated path.
///
/// Named parameters in `params`: `nmax` (counterexample), `amplitude`,
/// `freq` and `c0`, `c1`, … (smooth; sine unless a `c*` key is present).
/// Takagi signs are all `+1` without a seed and a seeded stream otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    pub grid_level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Coefficients for `custom_schauder`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<SchauderCoefficients>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, grid_level: u32) -> Self {
        Self {
            kind,
            hurst: None,
            grid_level,
            seed: None,
            params: BTreeMap::new(),
            coefficients: None,
        }
    }

    pub fn hurst(mut self, h: f64) -> Self {
        self.hurst = Some(h);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn require_hurst(&self) -> Result<f64> {
        let h = self.hurst.ok_or_else(|| {
            Error::InvalidParameter(format!("generator {:?} requires H", self.kind))
        })?;
        check_hurst(h)?;
        Ok(h)
    }

    fn smooth_shape(&self) -> Result<Smooth> {
        let amplitude = self.params.get("amplitude").copied().unwrap_or(1.0);
        let mut coeffs: Vec<(usize, f64)> = self
            .params
            .iter()
            .filter_map(|(k, v)| k.strip_prefix('c')?.parse::<usize>().ok().map(|i| (i, *v)))
            .collect();
        if coeffs.is_empty() {
            let freq = self.params.get("freq").copied().unwrap_or(1.0);
            return Ok(Smooth::Sine { amplitude, freq });
        }
        coeffs.sort_by_key(|(i, _)| *i);
        let degree = coeffs.last().map_or(0, |(i, _)| *i);
        let mut dense = vec![0.0; degree + 1];
        for (i, v) in coeffs {
            dense[i] = v;
        }
        Ok(Smooth::Poly { amplitude, coeffs: dense })
    }

    /// Checks kind-specific parameters without generating.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            GeneratorKind::Fbm => {
                self.require_hurst()?;
                if self.grid_level > FBM_MAX_LEVEL {
                    return Err(Error::InvalidParameter(format!(
                        "fBM grid level {} exceeds {FBM_MAX_LEVEL}",
                        self.grid_level
                    )));
                }
            }
            GeneratorKind::Takagi => {
                self.require_hurst()?;
                if self.grid_level == 0 {
                    return Err(Error::InvalidParameter("takagi needs grid level >= 1".into()));
                }
            }
            GeneratorKind::Counterexample => {
                let nmax = self.nmax()?;
                let needed = crate::schauder::triangular(nmax);
                if self.grid_level < needed {
                    return Err(Error::Resolution {
                        grid_level: self.grid_level,
                        max_level: needed,
                    });
                }
            }
            GeneratorKind::Smooth => {
                self.smooth_shape()?;
            }
            GeneratorKind::CustomSchauder => {
                let c = self.coefficients.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("custom_schauder requires coefficients".into())
                })?;
                c.validate()?;
                if self.grid_level < c.max_level {
                    return Err(Error::Resolution {
                        grid_level: self.grid_level,
                        max_level: c.max_level,
                    });
                }
            }
        }
        if self.grid_level > crate::grid::MAX_GRID_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "grid level {} exceeds {}",
                self.grid_level,
                crate::grid::MAX_GRID_LEVEL
            )));
        }
        Ok(())
    }

    fn nmax(&self) -> Result<u32> {
        let v = self.params.get("nmax").copied().ok_or_else(|| {
            Error::InvalidParameter("counterexample requires param nmax".into())
        })?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("nmax must be a positive integer, got {v}")));
        }
        Ok(v as u32)
    }

    pub fn generate(&self) -> Result<Path> {
        self.validate()?;
        match self.kind {
            GeneratorKind::Fbm => fbm_path(self.require_hurst()?, self.grid_level, self.seed.unwrap_or(0)),
            GeneratorKind::Takagi => {
                let signs = self.seed.map_or(SignSource::AllPlus, SignSource::Seeded);
                let c = takagi_coefficients(self.require_hurst()?, signs, self.grid_level)?;
                schauder_eval(&c, self.grid_level)
            }
            GeneratorKind::Counterexample => {
                let c = counterexample_coefficients(self.nmax()?)?;
                schauder_eval(&c, self.grid_level)
            }
            GeneratorKind::Smooth => smooth_perturbation(&self.smooth_shape()?, self.grid_level),
            GeneratorKind::CustomSchauder => {
                schauder_eval(self.coefficients.as_ref().expect("validated"), self.grid_level)
            }
        }
    }
}
