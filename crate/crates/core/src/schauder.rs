//! Faber–Schauder expansions on the dyadic grid.
//!
//! The basis is normalised so that the tent `e_{m,k}` has peak
//! `2^{-m/2} / 2` at `(2k+1) / 2^{m+1}`, i.e. its derivative is the
//! L²-normalised Haar function. Under this normalisation the level-`n`
//! quadratic variation of a Schauder series is
//! `2^{-n} Σ_{m<n} Σ_k θ_{m,k}²`, see [`dyadic_qv_identity`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Path, MAX_GRID_LEVEL};

/// Triangular coefficient array `theta[m][k]`, `k < 2^m`, `m < max_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchauderCoefficients {
    pub max_level: u32,
    pub theta: Vec<Vec<f64>>,
    pub label: String,
}

impl SchauderCoefficients {
    pub fn new(theta: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let c = Self {
            max_level: theta.len() as u32,
            theta,
            label: label.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn zeros(max_level: u32, label: impl Into<String>) -> Self {
        Self {
            max_level,
            theta: (0..max_level).map(|m| vec![0.0; 1 << m]).collect(),
            label: label.into(),
        }
    }

    /// Checks shape and finiteness; used after deserialisation.
    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.max_level as usize {
            return Err(Error::InvalidParameter(format!(
                "max_level {} but {} coefficient rows",
                self.max_level,
                self.theta.len()
            )));
        }
        if self.max_level > MAX_GRID_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "max_level {} exceeds {MAX_GRID_LEVEL}",
                self.max_level
            )));
        }
        for (m, row) in self.theta.iter().enumerate() {
            if row.len() != 1 << m {
                return Err(Error::InvalidParameter(format!(
                    "row {m} has {} entries, expected {}",
                    row.len(),
                    1usize << m
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "row {m} has a non-finite entry"
                )));
            }
        }
        Ok(())
    }
}

/// Value of the tent `e_{m,k}` at `t`.
pub fn tent(m: u32, k: usize, t: f64) -> f64 {
    let u = (m as f64).exp2() * t - k as f64;
    let lambda = u.min(1.0 - u).max(0.0);
    (-(m as f64) / 2.0).exp2() * lambda
}

/// Evaluates the partial Schauder sum on the level-`grid_level` grid by the
/// midpoint recursion. Exact at grid points up to rounding.
pub fn schauder_eval(c: &SchauderCoefficients, grid_level: u32) -> Result<Path> {
    c.validate()?;
    if grid_level < c.max_level {
        return Err(Error::Resolution {
            grid_level,
            max_level: c.max_level,
        });
    }
    if grid_level > MAX_GRID_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "grid level {grid_level} exceeds {MAX_GRID_LEVEL}"
        )));
    }
    let n = 1usize << grid_level;
    let mut x = vec![0.0; n + 1];
    for m in 0..grid_level {
        let span = n >> m;
        let half = span / 2;
        let peak = (-(m as f64) / 2.0).exp2() / 2.0;
        let row = c.theta.get(m as usize);
        for k in 0..(1usize << m) {
            let left = k * span;
            let mid = 0.5 * (x[left] + x[left + span]);
            let offset = row.map_or(0.0, |r| r[k] * peak);
            x[left + half] = mid + offset;
        }
    }
    Path::new(grid_level, x, c.label.clone())
}

/// Level-`n` dyadic quadratic variation computed from the coefficients alone:
/// `2^{-n} Σ_{m<n} Σ_k θ_{m,k}²`.
pub fn dyadic_qv_identity(c: &SchauderCoefficients, n: u32) -> f64 {
    let total: f64 = c
        .theta
        .iter()
        .take(n as usize)
        .map(|row| row.iter().map(|v| v * v).sum::<f64>())
        .sum();
    total * (-(n as f64)).exp2()
}

/// Source of the ±1 signs of a Takagi-class expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignSource {
    AllPlus,
    /// `(-1)^k` within each level.
    Alternating,
    /// Independent fair signs from a ChaCha8 stream, drawn level by level.
    Seeded(u64),
}

/// Coefficients `2^{m(1/2 - H)} s_{m,k}` of the generalised Takagi class.
pub fn takagi_coefficients(h: f64, signs: SignSource, max_level: u32) -> Result<SchauderCoefficients> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Hurst index must lie in (0, 1), got {h}"
        )));
    }
    if max_level == 0 || max_level > MAX_GRID_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "max_level must lie in 1..={MAX_GRID_LEVEL}, got {max_level}"
        )));
    }
    let mut rng = match signs {
        SignSource::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let theta = (0..max_level)
        .map(|m| {
            let scale = (m as f64 * (0.5 - h)).exp2();
            (0..(1usize << m))
                .map(|k| {
                    let s = match signs {
                        SignSource::AllPlus => 1.0,
                        SignSource::Alternating => {
                            if k % 2 == 0 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                        SignSource::Seeded(_) => {
                            if rng.as_mut().unwrap().random::<bool>() {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                    };
                    scale * s
                })
                .collect()
        })
        .collect();
    Ok(SchauderCoefficients {
        max_level,
        theta,
        label: format!("takagi(H={h})"),
    })
}

/// `S_n = 1 + 2 + ... + n`.
pub fn triangular(n: u32) -> u32 {
    n * (n + 1) / 2
}

/// Coefficients whose dyadic quadratic variation oscillates between levels
/// `S_n` (value `n`) and `S_n - 1` (value tending to 0): nonzero only at
/// `m = S_n - 1` with `θ = sqrt(2n - (n-1)/2^{n-1})`.
pub fn counterexample_coefficients(n_max: u32) -> Result<SchauderCoefficients> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let max_level = triangular(n_max);
    if max_level > MAX_GRID_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "n_max = {n_max} needs Schauder level {max_level} > {MAX_GRID_LEVEL}"
        )));
    }
    let mut c = SchauderCoefficients::zeros(max_level, format!("counterexample(n_max={n_max})"));
    for n in 1..=n_max {
        let nf = n as f64;
        let value = (2.0 * nf - (nf - 1.0) / (n as f64 - 1.0).exp2()).sqrt();
        let m = (triangular(n) - 1) as usize;
        c.theta[m].iter_mut().for_each(|v| *v = value);
    }
    Ok(c)
}
