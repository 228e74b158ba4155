//! SDSP oracles: spatial-domain circular convolution, translation tracking.

use cbvc_core::saliency::{frequency_prior, log_gabor_transfer, sdsp, SdspConfig};
use cbvc_core::video::{Frame, LabFrame, VideoGeometry};
use cbvc_core::Field;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverse DFT of a real, even transfer function by direct summation.
fn spatial_kernel(transfer: &Field<f64>) -> Field<f64> {
    let (w, h) = (transfer.width(), transfer.height());
    let tau = std::f64::consts::TAU;
    // separable twiddles
    let cos_w: Vec<f64> = (0..w).map(|k| (tau * k as f64 / w as f64).cos()).collect();
    let cos_h: Vec<f64> = (0..h).map(|k| (tau * k as f64 / h as f64).cos()).collect();
    let sin_w: Vec<f64> = (0..w).map(|k| (tau * k as f64 / w as f64).sin()).collect();
    let sin_h: Vec<f64> = (0..h).map(|k| (tau * k as f64 / h as f64).sin()).collect();
    Field::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for ky in 0..h {
            for kx in 0..w {
                let px = (kx * x) % w;
                let py = (ky * y) % h;
                // Re(e^{i(a+b)}) = cos a cos b - sin a sin b
                let re = cos_w[px] * cos_h[py] - sin_w[px] * sin_h[py];
                acc += transfer.get(kx, ky) * re;
            }
        }
        acc / (w * h) as f64
    })
}

fn circular_convolve(input: &Field<f64>, kernel: &Field<f64>) -> Field<f64> {
    let (w, h) = (input.width(), input.height());
    Field::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for j in 0..h {
            for i in 0..w {
                acc += input.get(i, j) * kernel.get((x + w - i) % w, (y + h - j) % h);
            }
        }
        acc
    })
}

#[test]
fn frequency_prior_matches_spatial_convolution() {
    let n = 64;
    let cfg = SdspConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lab = LabFrame {
        l: Field::from_fn(n, n, |_, _| rng.random_range(0.0..100.0)),
        a: Field::from_fn(n, n, |_, _| rng.random_range(-60.0..60.0)),
        b: Field::from_fn(n, n, |_, _| rng.random_range(-60.0..60.0)),
    };
    let kernel = spatial_kernel(&log_gabor_transfer::<f64>(n, n, cfg.omega0, cfg.sigma_f));
    let responses: Vec<Field<f64>> = lab.channels().iter().map(|c| circular_convolve(c, &kernel)).collect();
    let energy = Field::from_fn(n, n, |x, y| {
        responses.iter().map(|r| r.get(x, y).powi(2)).sum::<f64>().sqrt()
    })
    .normalized();
    let fast = frequency_prior(&lab, &cfg);
    let max_diff = fast
        .as_slice()
        .iter()
        .zip(energy.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_diff <= 1e-6, "max diff {max_diff}");
}

fn red_square_frame(n: usize, x0: usize, y0: usize, size: usize) -> (Frame, VideoGeometry) {
    let g = VideoGeometry::new(n, n, 8, 24.0, 1).unwrap();
    let mut f = Frame::filled(0, &g, 126, 128, 128);
    for y in y0..y0 + size {
        for x in x0..x0 + size {
            f.y[y * n + x] = 63;
            f.u[(y / 2) * (n / 2) + x / 2] = 102;
            f.v[(y / 2) * (n / 2) + x / 2] = 240;
        }
    }
    (f, g)
}

#[test]
fn argmax_tracks_translated_square() {
    let cfg = SdspConfig::default();
    let n = cfg.working_resolution;
    let (fc, g) = red_square_frame(n, 120, 120, 16);
    let (fb, _) = red_square_frame(n, 10, 200, 16);
    let sc = sdsp::<f64>(&fc, &g, &cfg).values;
    let sb = sdsp::<f64>(&fb, &g, &cfg).values;
    let (cx, cy) = sc.argmax();
    let (bx, by) = sb.argmax();
    println!("center argmax {:?} border argmax {:?}", (cx, cy), (bx, by));
    assert!((120..136).contains(&cx) && (120..136).contains(&cy));
    let dx = bx as i64 - cx as i64 - (10 - 120);
    let dy = by as i64 - cy as i64 - (200 - 120);
    assert!(dx.abs() <= 3 && dy.abs() <= 3, "displacement error ({dx},{dy})");
}
