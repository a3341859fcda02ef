//! Perturbative particle creation by a boundary obeying a time-dependent
//! Robin condition, driven monochromatically.

pub mod drive;
pub mod error;
pub mod lorentz;
pub mod oracle;
pub mod params;
pub mod quad;
pub mod recurrence;
pub mod spectrum;

pub use error::{Error, Result};
pub use lorentz::{Lorentzian, PeakedProduct, PeakedSum, PeakedTerm};
pub use params::{GammaSign, NaturalParams, ParamOverrides, PhysicalParams};
pub use quad::{QuadResult, QuadSpec};
pub use drive::{Drive, DriveProfile, DriveSeries, TrigExpansion};
pub use recurrence::{build_all, GOrder, GTerm};
pub use spectrum::{
    dirichlet_toy, photon_rate, spectral_density, FrequencyGrid, MirrorToyConfig, RateConvention, RateReport,
    SpectralResult,
};
