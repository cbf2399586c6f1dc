//! Seeded surrogate for the closed-source style pipeline.
//!
//! Each style seed deterministically samples a nonlinear recipe: a gamma
//! curve, unsharp masking, a monotone 4-knot tone curve, and a final
//! min-max normalization to [0, 1]. The mapping from seed to parameters is
//! opaque to downstream code, which only ever sees the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::phantom::RawImage;
use crate::style::{StyleId, StyledImage};

/// The hidden knobs behind one surrogate style.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateStyle {
    pub gamma: f64,
    pub unsharp_radius: usize,
    pub unsharp_amount: f64,
    /// Interior tone-curve knots; the curve always passes through (0,0)
    /// and (1,1).
    pub knots: [(f64, f64); 2],
}

/// Sample the recipe for a style seed.
pub fn surrogate_params(style_seed: u64) -> SurrogateStyle {
    let mut rng = ChaCha8Rng::seed_from_u64(style_seed ^ 0x5354_594c_4558_u64);
    let gamma = rng.gen_range(0.5..2.0);
    let unsharp_radius = *[1usize, 2, 4]
        .get(rng.gen_range(0..3usize))
        .expect("index in range");
    let unsharp_amount = rng.gen_range(0.0..1.5);
    let x1 = rng.gen_range(0.15..0.45);
    let x2 = rng.gen_range(0.55..0.85);
    let y1 = rng.gen_range(0.05..0.50);
    let y2 = rng.gen_range(0.50..0.95);
    SurrogateStyle {
        gamma,
        unsharp_radius,
        unsharp_amount,
        knots: [(x1, y1), (x2, y2)],
    }
}

fn min_max(values: &[f32]) -> (f32, f32) {
    let mut mn = f32::INFINITY;
    let mut mx = f32::NEG_INFINITY;
    for &v in values {
        mn = mn.min(v);
        mx = mx.max(v);
    }
    (mn, mx)
}

/// Normalize to [0,1]; a flat buffer maps to all 0.5.
fn normalize_unit(values: &mut [f32]) {
    let (mn, mx) = min_max(values);
    if mx > mn {
        let inv = 1.0 / (mx - mn);
        for v in values.iter_mut() {
            *v = (*v - mn) * inv;
        }
    } else {
        values.iter_mut().for_each(|v| *v = 0.5);
    }
}

/// Separable Gaussian blur, sigma in pixels, kernel truncated at 3 sigma,
/// reflect borders.
fn gaussian_blur(data: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    let half = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * half + 1) as usize);
    let mut norm = 0.0f64;
    for i in -half..=half {
        let v = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        norm += v;
    }
    for v in kernel.iter_mut() {
        *v /= norm;
    }

    let reflect = |i: isize, n: usize| -> usize {
        let period = 2 * (n as isize - 1);
        let mut m = i.rem_euclid(period.max(1));
        if m >= n as isize {
            m = period - m;
        }
        m as usize
    };

    let mut rows = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + ki as isize - half, w);
                acc += kv * data[y * w + sx] as f64;
            }
            rows[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + ki as isize - half, h);
                acc += kv * rows[sy * w + x] as f64;
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Piecewise-linear monotone tone curve through (0,0), two interior knots,
/// and (1,1).
fn tone_curve(x: f64, knots: &[(f64, f64); 2]) -> f64 {
    let pts = [(0.0, 0.0), knots[0], knots[1], (1.0, 1.0)];
    let x = x.clamp(0.0, 1.0);
    for win in pts.windows(2) {
        let (x0, y0) = win[0];
        let (x1, y1) = win[1];
        if x <= x1 {
            if x1 == x0 {
                return y1;
            }
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    1.0
}

/// Apply the surrogate pipeline. Pure in (image, style_seed).
pub fn apply_surrogate(raw: &RawImage, style_seed: u64) -> StyledImage {
    let style = surrogate_params(style_seed);

    let mut work: Vec<f32> = raw.pixels.clone();
    normalize_unit(&mut work);

    for v in work.iter_mut() {
        *v = (*v as f64).powf(style.gamma) as f32;
    }

    let blurred = gaussian_blur(&work, raw.h, raw.w, style.unsharp_radius as f64);
    for (v, &b) in work.iter_mut().zip(&blurred) {
        *v += style.unsharp_amount as f32 * (*v - b);
    }

    for v in work.iter_mut() {
        *v = tone_curve(*v as f64, &style.knots) as f32;
    }

    normalize_unit(&mut work);

    StyledImage {
        h: raw.h,
        w: raw.w,
        pixels: work,
        style_id: StyleId::Surrogate { seed: style_seed },
        content_id: raw.content_seed,
    }
}
