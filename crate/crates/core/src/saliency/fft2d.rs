use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::field::Field;
use crate::scalar::Scalar;

fn transpose<T: Copy + Default>(data: &[T], width: usize, height: usize) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = data[y * width + x];
        }
    }
    out
}

/// Unnormalized 2D DFT (forward) or its inverse scaled by 1/(w*h).
pub(crate) fn fft2d<T: Scalar>(
    planner: &mut FftPlanner<T>,
    data: &mut Vec<Complex<T>>,
    width: usize,
    height: usize,
    inverse: bool,
) {
    let plan = |planner: &mut FftPlanner<T>, n| {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    // rows
    plan(planner, width).process(data);
    // columns
    let mut t = transpose(data, width, height);
    plan(planner, height).process(&mut t);
    *data = transpose(&t, height, width);
    if inverse {
        let norm = T::one() / T::from_usize_lossy(width * height);
        for c in data.iter_mut() {
            *c = *c * norm;
        }
    }
}

/// Applies a real frequency-domain transfer function (indexed in standard
/// unshifted DFT order) and returns the real part of the result.
pub(crate) fn filter_real<T: Scalar>(planner: &mut FftPlanner<T>, input: &Field<T>, transfer: &Field<T>) -> Field<T> {
    let (w, h) = (input.width(), input.height());
    let mut buf: Vec<Complex<T>> = input.as_slice().iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2d(planner, &mut buf, w, h, false);
    for (c, &g) in buf.iter_mut().zip(transfer.as_slice()) {
        *c = *c * g;
    }
    fft2d(planner, &mut buf, w, h, true);
    Field::from_vec(w, h, buf.into_iter().map(|c| c.re).collect())
}
