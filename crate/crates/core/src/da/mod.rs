//! Gaussian approximations to the posterior: linearization about the MAP
//! point, randomized maximum likelihood, and ensemble Kalman-type filters.

mod ensemble;
mod linear;
mod lm;
mod lmap;
mod localization;
mod rml;

pub use ensemble::{
    enkf_analyze, ensrf_analyze, mean_preserving_rotation, predict, rotate_members, run_filter, sample_moments, Ensemble,
    EnsembleMoments, FilterConfig, FilterKind, FilterOutput,
};
pub use linear::linear_gaussian_posterior;
pub use lm::{map_estimate, minimize, LmOptions, LmStatus, MapResult};
pub use lmap::{cmap, cmap_from_jacobian, CmapFactor};
pub use localization::{build_localization, gaspari_cohn, LocalizationSpec};
pub use rml::{rml_member, rml_sample, RmlMember, RmlOutput};

/// Random-stream domains used by the samplers in this module.
pub(crate) mod domains {
    pub const LMAP: u64 = 0x4c4d_4150;
    pub const RML: u64 = 0x524d_4c00;
    pub const ENS_INIT: u64 = 0x454e_5349;
    pub const ENS_PERTURB: u64 = 0x454e_5350;
    pub const ENS_ROTATE: u64 = 0x454e_5352;
}
