//! Saliency-guided perceptual video coding toolkit.
//!
//! Numeric stages (resampling, color conversion, saliency, ROI grids) are
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below name the
//! common instantiations. Rating statistics are computed in `f64`.

pub mod analysis;
pub mod encoder;
pub mod field;
pub mod manifest;
pub mod matcher;
pub mod pipeline;
pub mod resample;
pub mod roi;
pub mod saliency;
pub mod scalar;
pub mod schedule;
pub mod study;
pub mod video;

pub use field::Field;
pub use scalar::Scalar;

pub type Field32 = Field<f32>;
pub type Field64 = Field<f64>;
pub type LabFrame32 = video::LabFrame<f32>;
pub type LabFrame64 = video::LabFrame<f64>;
pub type SaliencyMap32 = saliency::SaliencyMap<f32>;
pub type SaliencyMap64 = saliency::SaliencyMap<f64>;
pub type CcrMap32 = saliency::CcrMap<f32>;
pub type CcrMap64 = saliency::CcrMap<f64>;
pub type BlockGrid32 = roi::BlockGrid<f32>;
pub type BlockGrid64 = roi::BlockGrid<f64>;
