//! SDSP saliency (frequency, color and optional location priors) and the
//! compression-candidate-region (CCR) maps derived from it.
//!
//! A frame is resampled to a square working resolution, converted to
//! CIELAB and scored by the product of three priors:
//!
//! * frequency: log-Gabor band-pass of L*, a*, b*; Euclidean norm of the
//!   three responses;
//! * color: `1 - exp(-(an^2 + bn^2) / sigma_c^2)` with `an`, `bn` the
//!   min-max normalized a*, b* planes (warm colors score high);
//! * location: `exp(-|p - c|^2 / sigma_d^2)` around the center pixel.
//!   Disabled by default.
//!
//! The product is min-max normalized. CCR is the complement `1 - s`.

mod fft2d;
pub mod map_io;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::Field;
use crate::resample::resize_bicubic;
use crate::scalar::Scalar;
use crate::video::color::frame_planes;
use crate::video::{ycbcr_to_lab, ColorRange, Frame, LabFrame, VideoGeometry};

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("invalid saliency config: {0}")]
    Config(String),
    #[error("saliency map file {path}: {reason}")]
    MapFile { path: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdspConfig {
    pub working_resolution: usize,
    /// log-Gabor center frequency, cycles/pixel
    pub omega0: f64,
    /// log-Gabor bandwidth, natural-log frequency units
    pub sigma_f: f64,
    pub sigma_c: f64,
    /// pixels at working resolution
    pub sigma_d: f64,
    pub include_location_prior: bool,
    pub color_range: ColorRange,
}

impl Default for SdspConfig {
    fn default() -> Self {
        Self {
            working_resolution: 256,
            omega0: 0.002,
            sigma_f: 6.2,
            sigma_c: 0.25,
            sigma_d: 114.0,
            include_location_prior: false,
            color_range: ColorRange::Limited,
        }
    }
}

impl SdspConfig {
    pub fn validate(&self) -> Result<(), SaliencyError> {
        if self.working_resolution < 32 {
            return Err(SaliencyError::Config(format!(
                "working_resolution {} < 32",
                self.working_resolution
            )));
        }
        if !(self.omega0 > 0.0 && self.omega0 < 0.5) {
            return Err(SaliencyError::Config(format!("omega0 {} outside (0, 0.5)", self.omega0)));
        }
        for (name, v) in [("sigma_f", self.sigma_f), ("sigma_c", self.sigma_c), ("sigma_d", self.sigma_d)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SaliencyError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<T> {
    pub frame_index: usize,
    pub values: Field<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcrMap<T> {
    pub frame_index: usize,
    pub values: Field<T>,
}

/// Radial frequency (cycles/pixel) of DFT bin (kx, ky) on a w x h grid.
fn radial_frequency(kx: usize, ky: usize, w: usize, h: usize) -> f64 {
    let signed = |k: usize, n: usize| {
        if k <= n / 2 {
            k as f64 / n as f64
        } else {
            (k as f64 - n as f64) / n as f64
        }
    };
    signed(kx, w).hypot(signed(ky, h))
}

/// Log-Gabor transfer function in unshifted DFT order, zero at DC.
pub fn log_gabor_transfer<T: Scalar>(width: usize, height: usize, omega0: f64, sigma_f: f64) -> Field<T> {
    Field::from_fn(width, height, |kx, ky| {
        let r = radial_frequency(kx, ky, width, height);
        if r == 0.0 {
            T::zero()
        } else {
            let l = (r / omega0).ln();
            T::lit((-(l * l) / (2.0 * sigma_f * sigma_f)).exp())
        }
    })
}

/// Filters `input` by a real transfer function given in unshifted DFT
/// order (circular convolution with its inverse transform).
pub fn bandpass<T: Scalar>(input: &Field<T>, transfer: &Field<T>) -> Field<T> {
    assert_eq!(
        (input.width(), input.height()),
        (transfer.width(), transfer.height()),
        "transfer size must match input"
    );
    fft2d::filter_real(&mut FftPlanner::new(), input, transfer)
}

/// Band-pass energy prior in [0, 1].
pub fn frequency_prior<T: Scalar>(lab: &LabFrame<T>, cfg: &SdspConfig) -> Field<T> {
    let (w, h) = (lab.width(), lab.height());
    let transfer = log_gabor_transfer::<T>(w, h, cfg.omega0, cfg.sigma_f);
    let mut planner = FftPlanner::new();
    let responses: Vec<Field<T>> = lab
        .channels()
        .iter()
        .map(|ch| {
            // band-pass of a constant is exactly zero; skip FFT round-off
            let (lo, hi) = ch.min_max();
            if lo == hi {
                Field::zeros(w, h)
            } else {
                fft2d::filter_real(&mut planner, ch, &transfer)
            }
        })
        .collect();
    let energy = Field::from_fn(w, h, |x, y| {
        responses
            .iter()
            .map(|r| {
                let v = r.get(x, y);
                v * v
            })
            .sum::<T>()
            .sqrt()
    });
    energy.normalized()
}

/// Warmth prior in [0, 1]. Constant a* and b* planes give all zeros.
pub fn color_prior<T: Scalar>(lab: &LabFrame<T>, cfg: &SdspConfig) -> Field<T> {
    let an = lab.a.normalized();
    let bn = lab.b.normalized();
    let s2 = T::lit(cfg.sigma_c * cfg.sigma_c);
    an.zip_with(&bn, |a, b| T::one() - (-(a * a + b * b) / s2).exp())
}

/// Center-bias Gaussian; the center is pixel `(width / 2, height / 2)`.
pub fn location_prior<T: Scalar>(width: usize, height: usize, cfg: &SdspConfig) -> Field<T> {
    let (cx, cy) = ((width / 2) as f64, (height / 2) as f64);
    let s2 = cfg.sigma_d * cfg.sigma_d;
    Field::from_fn(width, height, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        T::lit((-(dx * dx + dy * dy) / s2).exp())
    })
}

/// Resamples a frame to the working resolution and converts it to CIELAB.
pub fn working_lab<T: Scalar>(frame: &Frame, geometry: &VideoGeometry, cfg: &SdspConfig) -> LabFrame<T> {
    let n = cfg.working_resolution;
    let [y, u, v] = frame_planes::<T>(frame).map(|p| resize_bicubic(&p, n, n, true));
    ycbcr_to_lab(&y, &u, &v, geometry.bit_depth, cfg.color_range)
}

/// Saliency of CIELAB content already at working resolution.
pub fn sdsp_lab<T: Scalar>(lab: &LabFrame<T>, cfg: &SdspConfig) -> Field<T> {
    let freq = frequency_prior(lab, cfg);
    let color = color_prior(lab, cfg);
    let mut s = freq.zip_with(&color, |f, c| f * c);
    if cfg.include_location_prior {
        let loc = location_prior::<T>(lab.width(), lab.height(), cfg);
        s = s.zip_with(&loc, |a, b| a * b);
    }
    s.normalized()
}

pub fn sdsp<T: Scalar>(frame: &Frame, geometry: &VideoGeometry, cfg: &SdspConfig) -> SaliencyMap<T> {
    let lab = working_lab::<T>(frame, geometry, cfg);
    SaliencyMap {
        frame_index: frame.index,
        values: sdsp_lab(&lab, cfg),
    }
}

/// Frame-parallel [`sdsp`]; output order follows input order.
pub fn sdsp_frames<T: Scalar>(frames: &[Frame], geometry: &VideoGeometry, cfg: &SdspConfig) -> Vec<SaliencyMap<T>> {
    frames.par_iter().map(|f| sdsp(f, geometry, cfg)).collect()
}

pub fn ccr_from_saliency<T: Scalar>(s: &SaliencyMap<T>) -> CcrMap<T> {
    CcrMap {
        frame_index: s.frame_index,
        values: s.values.map(|v| T::one() - v),
    }
}

impl<T: Scalar> CcrMap<T> {
    /// The complement again, as a saliency map.
    pub fn complement(&self) -> SaliencyMap<T> {
        SaliencyMap {
            frame_index: self.frame_index,
            values: self.values.map(|v| T::one() - v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab_from_fn(n: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> LabFrame<f64> {
        LabFrame {
            l: Field::from_fn(n, n, |x, y| f(x, y)[0]),
            a: Field::from_fn(n, n, |x, y| f(x, y)[1]),
            b: Field::from_fn(n, n, |x, y| f(x, y)[2]),
        }
    }

    #[test]
    fn default_config_is_valid() {
        SdspConfig::default().validate().unwrap();
        let bad = SdspConfig {
            omega0: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SdspConfig {
            working_resolution: 16,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_frame_has_zero_frequency_prior() {
        let lab = lab_from_fn(64, |_, _| [50.0, 3.0, -2.0]);
        let p = frequency_prior(&lab, &SdspConfig::default());
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_peaks_at_impulse() {
        let lab = lab_from_fn(64, |x, y| if (x, y) == (20, 37) { [100.0, 0.0, 0.0] } else { [5.0, 0.0, 0.0] });
        let p = frequency_prior(&lab, &SdspConfig::default());
        let (ax, ay) = p.argmax();
        assert!((ax as i64 - 20).abs() <= 3 && (ay as i64 - 37).abs() <= 3);
    }

    #[test]
    fn achromatic_color_prior_is_zero() {
        let lab = lab_from_fn(32, |x, _| [x as f64, 1.0, 1.0]);
        let p = color_prior(&lab, &SdspConfig::default());
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn color_prior_formula() {
        // an, bn at pixel 0 = (1, 1); at pixel 1 = (0, 0)
        let lab = LabFrame {
            l: Field::from_vec(2, 1, vec![50.0, 50.0]),
            a: Field::from_vec(2, 1, vec![40.0, -10.0]),
            b: Field::from_vec(2, 1, vec![30.0, 5.0]),
        };
        let cfg = SdspConfig::default();
        let p = color_prior(&lab, &cfg);
        let expected = 1.0 - (-(2.0) / (0.25f64 * 0.25)).exp();
        assert!((p.get(0, 0) - expected).abs() < 1e-12);
        assert_eq!(p.get(1, 0), 0.0);
        assert!(p.get(0, 0) > p.get(1, 0));
    }

    #[test]
    fn location_prior_values() {
        let cfg = SdspConfig::default();
        let p = location_prior::<f64>(256, 256, &cfg);
        assert_eq!(p.get(128, 128), 1.0);
        let corner = (-(128.0f64 * 128.0 + 128.0 * 128.0) / (114.0 * 114.0)).exp();
        assert!((p.get(0, 0) - corner).abs() < 1e-12);
        assert!((corner - 0.0804).abs() < 5e-4);
    }

    #[test]
    fn location_prior_symmetry() {
        let cfg = SdspConfig::default();
        let n = 65;
        let p = location_prior::<f64>(n, n, &cfg);
        for y in 0..n {
            for x in 0..n {
                let v = p.get(x, y);
                assert_eq!(v, p.get(n - 1 - x, y));
                assert_eq!(v, p.get(x, n - 1 - y));
                assert_eq!(v, p.get(y, x));
            }
        }
        // even dims: transpose symmetry only
        let p = location_prior::<f64>(64, 64, &cfg);
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(p.get(x, y), p.get(y, x));
            }
        }
    }

    #[test]
    fn ccr_is_complement() {
        let s = SaliencyMap {
            frame_index: 3,
            values: Field::from_vec(2, 1, vec![0.3f64, 0.0]),
        };
        let c = ccr_from_saliency(&s);
        assert!((c.values.get(0, 0) - 0.7).abs() < 1e-15);
        assert_eq!(c.values.get(1, 0), 1.0);
        assert_eq!(c.frame_index, 3);
        let zero = SaliencyMap {
            frame_index: 0,
            values: Field::<f64>::zeros(4, 4),
        };
        assert!(ccr_from_saliency(&zero).values.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_frame_gives_zero_map() {
        let g = VideoGeometry::new(64, 48, 8, 24.0, 1).unwrap();
        let f = Frame::filled(0, &g, 120, 100, 160);
        let cfg = SdspConfig {
            working_resolution: 32,
            ..Default::default()
        };
        let s = sdsp::<f32>(&f, &g, &cfg);
        assert_eq!((s.values.width(), s.values.height()), (32, 32));
        assert!(s.values.as_slice().iter().all(|&v| v == 0.0));
    }
}
