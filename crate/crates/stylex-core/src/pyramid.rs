//! Laplacian pyramid decomposition and recomposition.
//!
//! Gaussian levels use the separable binomial kernel [1,4,6,4,1]/16 with
//! reflect borders and a downsample factor of 2. The blur is evaluated in a
//! center-plus-differences form, so a constant signal passes through exactly
//! and constant images decompose into bitwise-zero bands.

use crate::error::PipelineError;

/// One 2-D level: band image or coarse residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), h * w);
        Self { h, w, data }
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }
}

/// Band-pass images B_0 (finest) .. B_{K-1} plus the coarse residual G_K.
#[derive(Debug, Clone)]
pub struct LaplacianPyramid {
    pub bands: Vec<Plane>,
    pub residual: Plane,
}

impl LaplacianPyramid {
    pub fn levels(&self) -> usize {
        self.bands.len()
    }
}

/// Mirror an index into [0, n) without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// 1-D binomial blur along a strided lane, written as center + weighted
/// differences so constants are preserved bit-for-bit.
fn blur_lane(src: &[f32], dst: &mut [f32], n: usize, offset: usize, stride: usize) {
    let at = |i: isize| -> f32 { src[offset + reflect(i, n) * stride] };
    for i in 0..n {
        let ii = i as isize;
        let center = at(ii);
        let outer = (at(ii - 2) - center) + (at(ii + 2) - center);
        let inner = (at(ii - 1) - center) + (at(ii + 1) - center);
        dst[offset + i * stride] = center + (outer + 4.0 * inner) / 16.0;
    }
}

fn blur_rows(plane: &Plane) -> Plane {
    let mut out = vec![0.0f32; plane.data.len()];
    for row in 0..plane.h {
        blur_lane(&plane.data, &mut out, plane.w, row * plane.w, 1);
    }
    Plane::new(plane.h, plane.w, out)
}

fn blur_cols(plane: &Plane) -> Plane {
    let mut out = vec![0.0f32; plane.data.len()];
    for col in 0..plane.w {
        blur_lane(&plane.data, &mut out, plane.h, col, plane.w);
    }
    Plane::new(plane.h, plane.w, out)
}

pub fn blur(plane: &Plane) -> Plane {
    blur_cols(&blur_rows(plane))
}

/// Blur then keep every second sample per axis: ceil(n/2) extents.
pub fn downsample(plane: &Plane) -> Plane {
    let blurred = blur(plane);
    let h2 = plane.h.div_ceil(2);
    let w2 = plane.w.div_ceil(2);
    let mut out = vec![0.0f32; h2 * w2];
    for i in 0..h2 {
        for j in 0..w2 {
            out[i * w2 + j] = blurred.data[(2 * i) * plane.w + 2 * j];
        }
    }
    Plane::new(h2, w2, out)
}

/// Zero-stuff to the target extents and blur with gain 2 per axis.
pub fn upsample(plane: &Plane, target_h: usize, target_w: usize) -> Plane {
    debug_assert_eq!(target_h.div_ceil(2), plane.h);
    debug_assert_eq!(target_w.div_ceil(2), plane.w);
    let mut stuffed = vec![0.0f32; target_h * target_w];
    for i in 0..plane.h {
        for j in 0..plane.w {
            stuffed[(2 * i) * target_w + 2 * j] = plane.data[i * plane.w + j];
        }
    }
    let stuffed = Plane::new(target_h, target_w, stuffed);
    let blurred = blur(&stuffed);
    let data = blurred.data.iter().map(|&v| v * 4.0).collect();
    Plane::new(target_h, target_w, data)
}

/// Decompose into `levels` band-pass planes plus a residual.
pub fn build_pyramid(
    pixels: &[f32],
    h: usize,
    w: usize,
    levels: usize,
) -> Result<LaplacianPyramid, PipelineError> {
    let needed = 1usize << levels;
    if h.min(w) < needed {
        return Err(PipelineError::ImageTooSmall {
            h,
            w,
            levels,
            needed,
        });
    }
    let mut current = Plane::new(h, w, pixels.to_vec());
    let mut bands = Vec::with_capacity(levels);
    for _ in 0..levels {
        let next = downsample(&current);
        let up = upsample(&next, current.h, current.w);
        let band: Vec<f32> = current
            .data
            .iter()
            .zip(&up.data)
            .map(|(&g, &u)| g - u)
            .collect();
        bands.push(Plane::new(current.h, current.w, band));
        current = next;
    }
    Ok(LaplacianPyramid {
        bands,
        residual: current,
    })
}

/// Recompose with one gain per band; the residual always enters with gain 1.
pub fn recompose(pyramid: &LaplacianPyramid, gains: &[f32]) -> Plane {
    debug_assert_eq!(gains.len(), pyramid.bands.len());
    let mut acc = pyramid.residual.clone();
    for (band, &gain) in pyramid.bands.iter().zip(gains).rev() {
        let up = upsample(&acc, band.h, band.w);
        let data: Vec<f32> = up
            .data
            .iter()
            .zip(&band.data)
            .map(|(&u, &b)| u + gain * b)
            .collect();
        acc = Plane::new(band.h, band.w, data);
    }
    acc
}
