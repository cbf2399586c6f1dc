//! Synthetic raw images standing in for real detector data, plus corpus
//! splits.
//!
//! A phantom is a deterministic function of its content seed: a soft-edged
//! elliptical body over a bright background, low-frequency illumination,
//! multi-octave value-noise texture, a handful of curvilinear bright
//! strands, and additive Gaussian detector noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::DataError;

/// Nominal 14-bit detector ceiling.
pub const RAW_MAX: f32 = 16383.0;

/// Un-styled detector signal.
#[derive(Debug, Clone)]
pub struct RawImage {
    pub h: usize,
    pub w: usize,
    /// Row-major intensities in [0, RAW_MAX].
    pub pixels: Vec<f32>,
    pub content_seed: u64,
}

impl RawImage {
    pub fn min_max(&self) -> (f32, f32) {
        let mut mn = f32::INFINITY;
        let mut mx = f32::NEG_INFINITY;
        for &v in &self.pixels {
            mn = mn.min(v);
            mx = mx.max(v);
        }
        (mn, mx)
    }
}

/// Body geometry needed by crop sampling, derivable without rendering.
#[derive(Debug, Clone, Copy)]
pub struct BodyGeometry {
    pub cx: f64,
    pub cy: f64,
    pub axis_a: f64,
    pub axis_b: f64,
    pub theta: f64,
}

impl BodyGeometry {
    /// Axis-aligned bounding box of the ellipse, clamped to the image.
    pub fn bbox(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let (sin, cos) = self.theta.sin_cos();
        let half_w = ((self.axis_a * cos).powi(2) + (self.axis_b * sin).powi(2)).sqrt();
        let half_h = ((self.axis_a * sin).powi(2) + (self.axis_b * cos).powi(2)).sqrt();
        let x0 = (self.cx - half_w).max(0.0) as usize;
        let y0 = (self.cy - half_h).max(0.0) as usize;
        let x1 = ((self.cx + half_w).ceil() as usize).min(w);
        let y1 = ((self.cy + half_h).ceil() as usize).min(h);
        (x0, y0, x1, y1)
    }
}

/// A rendered phantom together with its body bounding box.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: RawImage,
    pub body_bbox: (usize, usize, usize, usize),
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two fresh uniforms per sample keeps the stream simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Geometry draws come first in the seed stream so crop planning can get the
/// body box without paying for a full render.
pub fn phantom_geometry(content_seed: u64, h: usize, w: usize) -> BodyGeometry {
    let mut rng = ChaCha8Rng::seed_from_u64(content_seed);
    draw_geometry(&mut rng, h, w)
}

fn draw_geometry(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BodyGeometry {
    BodyGeometry {
        cx: w as f64 * rng.gen_range(0.45..0.55),
        cy: h as f64 * rng.gen_range(0.45..0.55),
        axis_a: w as f64 * rng.gen_range(0.30..0.42),
        axis_b: h as f64 * rng.gen_range(0.30..0.42),
        theta: rng.gen_range(0.0..std::f64::consts::PI),
    }
}

struct ValueNoise {
    octaves: Vec<(usize, usize, f64, Vec<f64>)>, // (nx, ny, cell, lattice values)
}

impl ValueNoise {
    /// Four octaves of value noise, persistence 0.5.
    fn draw(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Self {
        let base_cell = (h.min(w) as f64 / 5.0).max(2.0);
        let mut octaves = Vec::with_capacity(4);
        for o in 0..4 {
            let cell = (base_cell / f64::from(1 << o)).max(1.0);
            let nx = (w as f64 / cell).ceil() as usize + 2;
            let ny = (h as f64 / cell).ceil() as usize + 2;
            let lattice = (0..nx * ny).map(|_| rng.gen_range(0.0..1.0)).collect();
            octaves.push((nx, ny, cell, lattice));
        }
        Self { octaves }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        for (nx, ny, cell, lattice) in &self.octaves {
            let gx = x / cell;
            let gy = y / cell;
            let ix = (gx.floor() as usize).min(nx - 2);
            let iy = (gy.floor() as usize).min(ny - 2);
            let fx = smoothstep(gx - ix as f64);
            let fy = smoothstep(gy - iy as f64);
            let v00 = lattice[iy * nx + ix];
            let v10 = lattice[iy * nx + ix + 1];
            let v01 = lattice[(iy + 1) * nx + ix];
            let v11 = lattice[(iy + 1) * nx + ix + 1];
            let v = v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy;
            total += amp * v;
            norm += amp;
            amp *= 0.5;
        }
        total / norm
    }
}

/// Render a phantom. Pure in (content_seed, h, w).
pub fn generate_phantom(content_seed: u64, h: usize, w: usize) -> Result<Phantom, DataError> {
    if h < 64 || w < 64 {
        return Err(DataError::PhantomTooSmall { h, w });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(content_seed);
    let geo = draw_geometry(&mut rng, h, w);

    let grad_x = rng.gen_range(-0.5..0.5);
    let grad_y = rng.gen_range(-0.5..0.5);
    let noise = ValueNoise::draw(&mut rng, h, w);
    let body_level = rng.gen_range(0.32..0.50);
    let texture_amp = rng.gen_range(0.10..0.20);
    let background = rng.gen_range(0.85..0.95);

    let (sin_t, cos_t) = geo.theta.sin_cos();
    let mask_at = |x: f64, y: f64| -> f64 {
        let dx = x - geo.cx;
        let dy = y - geo.cy;
        let u = dx * cos_t + dy * sin_t;
        let v = -dx * sin_t + dy * cos_t;
        let d = (u / geo.axis_a).powi(2) + (v / geo.axis_b).powi(2);
        smoothstep((1.08 - d) / 0.16)
    };

    let mut frac = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let m = mask_at(x as f64, y as f64);
            let illum = 1.0 + grad_x * (x as f64 / w as f64 - 0.5)
                + grad_y * (y as f64 / h as f64 - 0.5);
            let texture = body_level + texture_amp * (noise.sample(x as f64, y as f64) - 0.5) * 2.0;
            frac[y * w + x] = m * texture * illum + (1.0 - m) * background;
        }
    }

    // Curvilinear bright strands confined to the body.
    let strand_count = rng.gen_range(5..=20usize);
    for _ in 0..strand_count {
        let r0 = rng.gen_range(0.0..0.8f64).sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut px = geo.cx + r0 * geo.axis_a * phi.cos() * cos_t
            - r0 * geo.axis_b * phi.sin() * sin_t;
        let mut py = geo.cy + r0 * geo.axis_a * phi.cos() * sin_t
            + r0 * geo.axis_b * phi.sin() * cos_t;
        let mut dir = rng.gen_range(0.0..std::f64::consts::TAU);
        let steps = rng.gen_range(40..120usize);
        let amp = rng.gen_range(0.04..0.12);
        let sigma = rng.gen_range(0.7..1.6f64);
        let two_sigma2 = 2.0 * sigma * sigma;
        for _ in 0..steps {
            dir += rng.gen_range(-0.15..0.15);
            px += dir.cos();
            py += dir.sin();
            if px < 2.0 || py < 2.0 || px >= (w - 2) as f64 || py >= (h - 2) as f64 {
                break;
            }
            let m = mask_at(px, py);
            if m <= 0.0 {
                break;
            }
            let cx = px.round() as isize;
            let cy = py.round() as isize;
            for dy in -2..=2isize {
                for dx in -2..=2isize {
                    let (ix, iy) = (cx + dx, cy + dy);
                    if ix < 0 || iy < 0 || ix >= w as isize || iy >= h as isize {
                        continue;
                    }
                    let d2 = (ix as f64 - px).powi(2) + (iy as f64 - py).powi(2);
                    frac[iy as usize * w + ix as usize] += m * amp * (-d2 / two_sigma2).exp();
                }
            }
        }
    }

    // Detector noise: sigma = 0.5% of range.
    let mut pixels = vec![0.0f32; h * w];
    for (dst, &f) in pixels.iter_mut().zip(&frac) {
        let noisy = f + 0.005 * gauss(&mut rng);
        *dst = ((noisy * RAW_MAX as f64).clamp(0.0, RAW_MAX as f64)) as f32;
    }

    Ok(Phantom {
        image: RawImage {
            h,
            w,
            pixels,
            content_seed,
        },
        body_bbox: geo.bbox(h, w),
    })
}

/// In-memory raw-image lookup keyed by content seed.
///
/// Images may come from fresh generation or from a decoded on-disk cache;
/// training only ever reads through this store, so both sources behave
/// identically.
#[derive(Debug, Clone, Default)]
pub struct ContentStore {
    images: std::collections::BTreeMap<u64, RawImage>,
}

impl ContentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Render phantoms for every listed content seed.
    pub fn generate(seeds: &[u64], h: usize, w: usize) -> Result<Self, DataError> {
        let mut store = Self::new();
        for &seed in seeds {
            store.insert(generate_phantom(seed, h, w)?.image);
        }
        Ok(store)
    }

    pub fn insert(&mut self, image: RawImage) {
        self.images.insert(image.content_seed, image);
    }

    pub fn get(&self, content_seed: u64) -> Option<&RawImage> {
        self.images.get(&content_seed)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Disjoint train/test content assignment covering the corpus.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct DatasetSplit {
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    pub split_fraction: f64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train_ids.len() + self.test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draw `count` distinct content seeds from a corpus seed.
pub fn corpus_content_seeds(corpus_seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s: u64 = rng.gen();
        if seen.insert(s) {
            out.push(s);
        }
    }
    out
}

/// Shuffle and split contents by fraction; deterministic in `rng_seed`.
pub fn split_corpus(content_seeds: &[u64], train_fraction: f64, rng_seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut shuffled = content_seeds.to_vec();
    // Fisher-Yates.
    for i in (1..shuffled.len()).rev() {
        let j = rng.gen_range(0..=i);
        shuffled.swap(i, j);
    }
    let train_count = (shuffled.len() as f64 * train_fraction).round() as usize;
    let test_ids = shuffled.split_off(train_count.min(shuffled.len()));
    DatasetSplit {
        train_ids: shuffled,
        test_ids,
        split_fraction: train_fraction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = generate_phantom(42, 64, 64).unwrap();
        let b = generate_phantom(42, 64, 64).unwrap();
        assert_eq!(a.image.pixels, b.image.pixels);
    }

    #[test]
    fn output_respects_clip_range_and_is_nondegenerate() {
        for seed in 0..20u64 {
            let p = generate_phantom(seed, 64, 80).unwrap();
            let (mn, mx) = p.image.min_max();
            assert!(mn >= 0.0 && mx <= RAW_MAX);
            assert!(mx > mn);
            assert!(p.image.pixels.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn too_small_extent_is_rejected() {
        assert!(matches!(
            generate_phantom(1, 32, 128).unwrap_err(),
            DataError::PhantomTooSmall { .. }
        ));
    }

    #[test]
    fn geometry_matches_render_prefix() {
        let geo = phantom_geometry(7, 96, 96);
        let p = generate_phantom(7, 96, 96).unwrap();
        assert_eq!(p.body_bbox, geo.bbox(96, 96));
    }

    #[test]
    fn split_is_disjoint_and_covers() {
        let seeds = corpus_content_seeds(1, 100);
        let split = split_corpus(&seeds, 0.7, 2);
        assert_eq!(split.train_ids.len(), 70);
        assert_eq!(split.test_ids.len(), 30);
        let train: std::collections::BTreeSet<_> = split.train_ids.iter().collect();
        let test: std::collections::BTreeSet<_> = split.test_ids.iter().collect();
        assert!(train.is_disjoint(&test));
        let all: std::collections::BTreeSet<_> = seeds.iter().collect();
        assert_eq!(train.union(&test).count(), all.len());
    }
}
