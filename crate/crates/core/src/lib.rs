//! Pathwise p-th variation and scaled quadratic variation of continuous paths
//! along dyadic partition sequences, with generators for Takagi-class,
//! Schauder and fractional Brownian paths and numerical checks of the
//! switching behaviour, smooth-perturbation invariance and the pathwise Itô
//! isometry.

pub mod error;
pub mod grid;
pub mod io;
pub mod isometry;
pub mod limits;
pub mod pathgen;
pub mod roughness;
pub mod schauder;
pub mod summation;
pub mod variation;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use grid::{dyadic_partition, mesh_stats, oscillation, MeshStats, Partition, Path};
pub use limits::{limit_diagnostics, Classification, LimitReport, Thresholds};
pub use pathgen::{fbm_path, smooth_perturbation, GeneratorKind, GeneratorSpec, Smooth};
pub use roughness::{classify_index, critical_index_search, RoughnessConfig, RoughnessReport};
pub use schauder::{
    counterexample_coefficients, schauder_eval, takagi_coefficients, SchauderCoefficients, SignSource,
};
pub use variation::{
    classical_scaled_qv, pth_variation, scaled_qv, PVarSource, ProfileKind, SourceMode, VariationProfile,
};
