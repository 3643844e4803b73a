//! Dyadic grids on `[0, 1]`, partitions as index sets into a grid, and
//! per-partition statistics.
//!
//! A [`Path`] is always the restriction of a continuous function to the
//! level-`L` dyadic grid `t_j = j / 2^L`. Every partition used downstream is
//! a subset of that grid, so all quantities evaluated along a partition depend
//! only on the stored samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported grid level (`2^26 + 1` samples).
pub const MAX_GRID_LEVEL: u32 = 26;

/// A continuous path sampled on the level-`grid_level` dyadic grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    grid_level: u32,
    samples: Vec<f64>,
    label: String,
}

impl Path {
    pub fn new(grid_level: u32, samples: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if grid_level > MAX_GRID_LEVEL {
            return Err(Error::InvalidPath(format!(
                "grid level {grid_level} exceeds maximum {MAX_GRID_LEVEL}"
            )));
        }
        let expected = (1usize << grid_level) + 1;
        if samples.len() != expected {
            return Err(Error::InvalidPath(format!(
                "grid level {grid_level} needs {expected} samples, got {}",
                samples.len()
            )));
        }
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "non-finite sample {} at index {j}",
                samples[j]
            )));
        }
        Ok(Self {
            grid_level,
            samples,
            label: label.into(),
        })
    }

    /// Samples `f` at every grid point `j / 2^grid_level`.
    pub fn from_fn(grid_level: u32, label: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = grid_points(grid_level);
        let scale = (-(grid_level as f64)).exp2();
        let samples = (0..n).map(|j| f(j as f64 * scale)).collect();
        Self::new(grid_level, samples, label)
    }

    pub fn grid_level(&self) -> u32 {
        self.grid_level
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Time of grid index `j`.
    pub fn time(&self, j: usize) -> f64 {
        grid_time(j, self.grid_level)
    }

    /// Pointwise sum of two paths on the same grid.
    pub fn add(&self, other: &Path) -> Result<Path> {
        if self.grid_level != other.grid_level {
            return Err(Error::Mismatch(format!(
                "grid levels differ: {} vs {}",
                self.grid_level, other.grid_level
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        Path::new(
            self.grid_level,
            samples,
            format!("{}+{}", self.label, other.label),
        )
    }

    /// Pointwise scalar multiple.
    pub fn scale(&self, factor: f64) -> Result<Path> {
        let samples = self.samples.iter().map(|v| v * factor).collect();
        Path::new(self.grid_level, samples, format!("{factor}*{}", self.label))
    }
}

/// Number of grid points at level `grid_level`.
pub fn grid_points(grid_level: u32) -> usize {
    (1usize << grid_level) + 1
}

pub fn grid_time(j: usize, grid_level: u32) -> f64 {
    j as f64 * (-(grid_level as f64)).exp2()
}

/// A partition of `[0, 1]` given as strictly increasing indices into a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    level: u32,
    grid_level: u32,
    indices: Vec<usize>,
}

impl Partition {
    /// Builds a partition from arbitrary grid indices. `level` is a caller
    /// supplied tag; for non-dyadic partitions it carries no structure.
    pub fn from_indices(level: u32, grid_level: u32, indices: Vec<usize>) -> Result<Self> {
        if grid_level > MAX_GRID_LEVEL {
            return Err(Error::InvalidPartition(format!(
                "grid level {grid_level} exceeds maximum {MAX_GRID_LEVEL}"
            )));
        }
        let last = 1usize << grid_level;
        if indices.len() < 2 {
            return Err(Error::InvalidPartition(
                "a partition needs at least two points".into(),
            ));
        }
        if indices[0] != 0 || indices[indices.len() - 1] != last {
            return Err(Error::InvalidPartition(format!(
                "indices must start at 0 and end at {last}"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPartition(
                "indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            level,
            grid_level,
            indices,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn grid_level(&self) -> u32 {
        self.grid_level
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of intervals.
    pub fn count(&self) -> usize {
        self.indices.len() - 1
    }

    /// Partition times `t_j`.
    pub fn times(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&j| grid_time(j, self.grid_level))
            .collect()
    }

    /// Whether every point of `self` is also a point of `finer`.
    pub fn is_refined_by(&self, finer: &Partition) -> bool {
        if self.grid_level != finer.grid_level {
            return false;
        }
        let mut it = finer.indices.iter();
        self.indices.iter().all(|j| it.any(|k| k == j))
    }

    pub(crate) fn check_path(&self, x: &Path) -> Result<()> {
        if self.grid_level != x.grid_level() {
            return Err(Error::Mismatch(format!(
                "partition built for grid level {} applied to path of grid level {}",
                self.grid_level,
                x.grid_level()
            )));
        }
        Ok(())
    }
}

/// The level-`level` dyadic partition `{ j / 2^level }` on grid `grid_level`.
pub fn dyadic_partition(level: u32, grid_level: u32) -> Result<Partition> {
    if level > grid_level {
        return Err(Error::InvalidRefinement { level, grid_level });
    }
    if grid_level > MAX_GRID_LEVEL {
        return Err(Error::InvalidPartition(format!(
            "grid level {grid_level} exceeds maximum {MAX_GRID_LEVEL}"
        )));
    }
    let step = 1usize << (grid_level - level);
    let indices = (0..=(1usize << level)).map(|j| j * step).collect();
    Ok(Partition {
        level,
        grid_level,
        indices,
    })
}

/// Largest interval, smallest interval and interval count of a partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub mesh: f64,
    pub min_mesh: f64,
    pub count: usize,
}

pub fn mesh_stats(part: &Partition) -> MeshStats {
    let (lo, hi) = part
        .indices
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold((usize::MAX, 0usize), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let unit = (-(part.grid_level as f64)).exp2();
    MeshStats {
        mesh: hi as f64 * unit,
        min_mesh: lo as f64 * unit,
        count: part.count(),
    }
}

/// Largest within-block range `max - min` of the grid samples over the
/// partition blocks, block endpoints included.
///
/// Exact for paths that are linear between grid points (Schauder partial
/// sums resolved by the grid); a lower bound for general continuous paths.
pub fn oscillation(x: &Path, part: &Partition) -> Result<f64> {
    part.check_path(x)?;
    let s = x.samples();
    let osc = part
        .indices
        .windows(2)
        .map(|w| {
            let block = &s[w[0]..=w[1]];
            let (lo, hi) = block
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max);
    Ok(osc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_examples() {
        assert_eq!(dyadic_partition(0, 3).unwrap().indices(), &[0, 8]);
        assert_eq!(
            dyadic_partition(3, 3).unwrap().indices(),
            &[0, 1, 2, 3, 4, 5, 6, 7, 8]
        );
        assert_eq!(dyadic_partition(1, 3).unwrap().indices(), &[0, 4, 8]);
        assert!(matches!(
            dyadic_partition(4, 3),
            Err(Error::InvalidRefinement { level: 4, grid_level: 3 })
        ));
    }

    #[test]
    fn mesh_examples() {
        let m = mesh_stats(&dyadic_partition(4, 10).unwrap());
        assert_eq!(m.mesh, 1.0 / 16.0);
        assert_eq!(m.min_mesh, 1.0 / 16.0);
        assert_eq!(m.count, 16);

        let p = Partition::from_indices(1, 3, vec![0, 1, 8]).unwrap();
        let m = mesh_stats(&p);
        assert_eq!(m.mesh, 7.0 / 8.0);
        assert_eq!(m.min_mesh, 1.0 / 8.0);
        assert_eq!(m.count, 2);

        let m = mesh_stats(&dyadic_partition(0, 5).unwrap());
        assert_eq!(m.mesh, 1.0);
        assert_eq!(m.count, 1);
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::from_indices(0, 3, vec![0, 4]).is_err());
        assert!(Partition::from_indices(0, 3, vec![1, 8]).is_err());
        assert!(Partition::from_indices(0, 3, vec![0, 4, 4, 8]).is_err());
        assert!(Partition::from_indices(0, 3, vec![8]).is_err());
    }

    #[test]
    fn path_validation() {
        assert!(Path::new(2, vec![0.0; 4], "x").is_err());
        assert!(Path::new(2, vec![0.0, 1.0, f64::NAN, 0.0, 0.0], "x").is_err());
        assert!(Path::new(2, vec![0.0; 5], "x").is_ok());
    }

    #[test]
    fn oscillation_examples() {
        let c = Path::from_fn(6, "c", |_| 3.0).unwrap();
        for n in 0..=6 {
            assert_eq!(oscillation(&c, &dyadic_partition(n, 6).unwrap()).unwrap(), 0.0);
        }
        let lin = Path::from_fn(8, "t", |t| t).unwrap();
        let osc = oscillation(&lin, &dyadic_partition(4, 8).unwrap()).unwrap();
        assert_eq!(osc, 1.0 / 16.0);
    }

    #[test]
    fn refinement() {
        let a = dyadic_partition(2, 4).unwrap();
        let b = dyadic_partition(3, 4).unwrap();
        assert!(a.is_refined_by(&b));
        assert!(!b.is_refined_by(&a));
    }
}
