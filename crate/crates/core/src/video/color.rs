//! Y'CbCr (BT.709) to CIELAB (sRGB primaries, D65 white).

use serde::{Deserialize, Serialize};

use super::{Frame, VideoGeometry};
use crate::field::Field;
use crate::scalar::Scalar;

const KR: f64 = 0.2126;
const KB: f64 = 0.0722;
const KG: f64 = 1.0 - KR - KB;

// linear sRGB -> XYZ, D65
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorRange {
    /// Studio swing: luma 16..235, chroma 16..240 (scaled by bit depth).
    #[default]
    Limited,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabFrame<T> {
    pub l: Field<T>,
    pub a: Field<T>,
    pub b: Field<T>,
}

impl<T: Scalar> LabFrame<T> {
    pub fn width(&self) -> usize {
        self.l.width()
    }

    pub fn height(&self) -> usize {
        self.l.height()
    }

    pub fn channels(&self) -> [&Field<T>; 3] {
        [&self.l, &self.a, &self.b]
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.a.is_finite() && self.b.is_finite()
    }
}

#[inline]
fn srgb_to_linear<T: Scalar>(c: T) -> T {
    if c <= T::lit(0.040_45) {
        c / T::lit(12.92)
    } else {
        ((c + T::lit(0.055)) / T::lit(1.055)).powf(T::lit(2.4))
    }
}

#[inline]
fn lab_f<T: Scalar>(t: T) -> T {
    let delta = T::lit(6.0 / 29.0);
    if t > delta * delta * delta {
        t.cbrt()
    } else {
        t / (T::lit(3.0) * delta * delta) + T::lit(4.0 / 29.0)
    }
}

/// Converts one Y'CbCr code-value triple to (L*, a*, b*).
pub fn pixel_to_lab<T: Scalar>(y: T, cb: T, cr: T, bit_depth: u8, range: ColorRange) -> [T; 3] {
    let scale = T::lit((1u32 << (bit_depth - 8)) as f64);
    let (yn, cbn, crn) = match range {
        ColorRange::Limited => (
            (y - T::lit(16.0) * scale) / (T::lit(219.0) * scale),
            (cb - T::lit(128.0) * scale) / (T::lit(224.0) * scale),
            (cr - T::lit(128.0) * scale) / (T::lit(224.0) * scale),
        ),
        ColorRange::Full => {
            let max = T::lit(((1u32 << bit_depth) - 1) as f64);
            let mid = T::lit((1u32 << (bit_depth - 1)) as f64);
            (y / max, (cb - mid) / max, (cr - mid) / max)
        }
    };

    let r = yn + T::lit(2.0 * (1.0 - KR)) * crn;
    let g = yn - T::lit(2.0 * KB * (1.0 - KB) / KG) * cbn - T::lit(2.0 * KR * (1.0 - KR) / KG) * crn;
    let b = yn + T::lit(2.0 * (1.0 - KB)) * cbn;
    let rgb = [r, g, b].map(|c| srgb_to_linear(c.max(T::zero()).min(T::one())));

    let mut xyz = [T::zero(); 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = T::lit(row[0]) * rgb[0] + T::lit(row[1]) * rgb[1] + T::lit(row[2]) * rgb[2];
    }
    let fx = lab_f(xyz[0] / T::lit(WHITE_D65[0]));
    let fy = lab_f(xyz[1] / T::lit(WHITE_D65[1]));
    let fz = lab_f(xyz[2] / T::lit(WHITE_D65[2]));

    let l = (T::lit(116.0) * fy - T::lit(16.0)).max(T::zero()).min(T::lit(100.0));
    [l, T::lit(500.0) * (fx - fy), T::lit(200.0) * (fy - fz)]
}

/// Converts real-valued Y, Cb, Cr planes (code values, all at the same
/// resolution) to a [`LabFrame`].
pub fn ycbcr_to_lab<T: Scalar>(
    y: &Field<T>,
    cb: &Field<T>,
    cr: &Field<T>,
    bit_depth: u8,
    range: ColorRange,
) -> LabFrame<T> {
    let (w, h) = (y.width(), y.height());
    assert_eq!((cb.width(), cb.height()), (w, h));
    assert_eq!((cr.width(), cr.height()), (w, h));
    let mut l = Field::zeros(w, h);
    let mut a = Field::zeros(w, h);
    let mut b = Field::zeros(w, h);
    for i in 0..w * h {
        let [lv, av, bv] = pixel_to_lab(y.as_slice()[i], cb.as_slice()[i], cr.as_slice()[i], bit_depth, range);
        l.as_mut_slice()[i] = lv;
        a.as_mut_slice()[i] = av;
        b.as_mut_slice()[i] = bv;
    }
    LabFrame { l, a, b }
}

/// Luma plane and nearest-neighbor upsampled chroma planes as reals.
pub(crate) fn frame_planes<T: Scalar>(frame: &Frame) -> [Field<T>; 3] {
    let (w, h) = (frame.width, frame.height);
    let cw = w / 2;
    let y = Field::from_fn(w, h, |x, yy| T::lit(frame.y[yy * w + x] as f64));
    let u = Field::from_fn(w, h, |x, yy| T::lit(frame.u[(yy / 2) * cw + x / 2] as f64));
    let v = Field::from_fn(w, h, |x, yy| T::lit(frame.v[(yy / 2) * cw + x / 2] as f64));
    [y, u, v]
}

/// Full-resolution CIELAB conversion of a frame.
pub fn yuv_to_lab<T: Scalar>(frame: &Frame, geometry: &VideoGeometry, range: ColorRange) -> LabFrame<T> {
    let [y, u, v] = frame_planes::<T>(frame);
    ycbcr_to_lab(&y, &u, &v, geometry.bit_depth, range)
}
