//! Positive-pair assembly and the crop/resize/flip augmentation path.
//!
//! Pairs are described by lightweight specs (style, content seeds, crop
//! offsets) so that a manifest of specs fully reproduces any batch. Pixel
//! realization happens separately via [`styled_view`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, PipelineError};
use crate::lap::LapConfig;
use crate::phantom::{phantom_geometry, DatasetSplit, RawImage};
use crate::style::{apply_style, StyleId, StyledImage};

/// How the two views of a pair draw their contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    SameContent,
    DifferentContent,
    Mixed,
}

/// Crop-then-resize augmentation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Side of the square crop taken from the styled image.
    pub crop: usize,
    /// Side of the resized network input.
    pub out: usize,
    /// Allow horizontal flips (training only).
    pub hflip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop: 96,
            out: 64,
            hflip: true,
        }
    }
}

/// One view's crop placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub x: usize,
    pub y: usize,
    pub flip: bool,
}

/// A positive pair: same style, contents per policy, one crop per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub style: StyleId,
    pub content_a: u64,
    pub content_b: u64,
    pub crop_a: CropSpec,
    pub crop_b: CropSpec,
}

/// Sample a crop whose center falls inside the body bounding box.
fn sample_crop(
    rng: &mut ChaCha8Rng,
    content_seed: u64,
    h: usize,
    w: usize,
    crop: usize,
    hflip: bool,
) -> CropSpec {
    let (bx0, by0, bx1, by1) = phantom_geometry(content_seed, h, w).bbox(h, w);
    let half = crop / 2;
    let range = |b0: usize, b1: usize, extent: usize| -> (usize, usize) {
        let lo = b0.saturating_sub(half).min(extent - crop);
        let hi = b1.saturating_sub(half).min(extent - crop);
        if hi < lo {
            (0, extent - crop)
        } else {
            (lo, hi)
        }
    };
    let (x_lo, x_hi) = range(bx0, bx1, w);
    let (y_lo, y_hi) = range(by0, by1, h);
    CropSpec {
        x: rng.gen_range(x_lo..=x_hi),
        y: rng.gen_range(y_lo..=y_hi),
        flip: hflip && rng.gen_bool(0.5),
    }
}

/// Assemble `count` positive-pair specs over the training contents.
#[allow(clippy::too_many_arguments)]
pub fn make_pairs(
    split: &DatasetSplit,
    styles: &[StyleId],
    policy: PairPolicy,
    count: usize,
    rng_seed: u64,
    phantom_h: usize,
    phantom_w: usize,
    aug: &AugmentConfig,
) -> Result<Vec<PairSpec>, DataError> {
    if count == 0 {
        return Err(DataError::EmptyPairRequest);
    }
    if styles.is_empty() {
        return Err(DataError::EmptyStyleSet);
    }
    let contents = &split.train_ids;
    if contents.is_empty() {
        return Err(DataError::NotEnoughContents(0));
    }
    if matches!(policy, PairPolicy::DifferentContent) && contents.len() < 2 {
        return Err(DataError::NotEnoughContents(contents.len()));
    }
    if aug.crop > phantom_h.min(phantom_w) {
        return Err(DataError::CropTooLarge {
            crop: aug.crop,
            extent: phantom_h.min(phantom_w),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    // Shuffled cycling: every content appears once per corpus-length window,
    // in a seed-dependent order.
    let mut order = contents.clone();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let style = styles[rng.gen_range(0..styles.len())];
        let content_a = order[i % order.len()];
        let different = match policy {
            PairPolicy::SameContent => false,
            PairPolicy::DifferentContent => true,
            PairPolicy::Mixed => rng.gen_bool(0.5),
        };
        let content_b = if different {
            let mut other = contents[rng.gen_range(0..contents.len())];
            while other == content_a {
                other = contents[rng.gen_range(0..contents.len())];
            }
            other
        } else {
            content_a
        };
        let crop_a = sample_crop(&mut rng, content_a, phantom_h, phantom_w, aug.crop, aug.hflip);
        let crop_b = sample_crop(&mut rng, content_b, phantom_h, phantom_w, aug.crop, aug.hflip);
        pairs.push(PairSpec {
            style,
            content_a,
            content_b,
            crop_a,
            crop_b,
        });
    }
    Ok(pairs)
}

/// Bilinear resize of a single-channel image.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; out_h * out_w];
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    for oy in 0..out_h {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f32;
        for ox in 0..out_w {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f32;
            let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
            let bot = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
            out[oy * out_w + ox] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// Style a raw image, crop, resize, and optionally flip: one network input.
pub fn styled_view(
    raw: &RawImage,
    style: &StyleId,
    crop: &CropSpec,
    aug: &AugmentConfig,
    lap_config: &LapConfig,
) -> Result<StyledImage, PipelineError> {
    let styled = apply_style(raw, style, lap_config)?;
    let mut patch = vec![0.0f32; aug.crop * aug.crop];
    for y in 0..aug.crop {
        let src = (crop.y + y) * styled.w + crop.x;
        patch[y * aug.crop..(y + 1) * aug.crop]
            .copy_from_slice(&styled.pixels[src..src + aug.crop]);
    }
    let mut resized = resize_bilinear(&patch, aug.crop, aug.crop, aug.out, aug.out);
    if crop.flip {
        for row in resized.chunks_mut(aug.out) {
            row.reverse();
        }
    }
    Ok(StyledImage {
        h: aug.out,
        w: aug.out,
        pixels: resized,
        style_id: *style,
        content_id: raw.content_seed,
    })
}

/// Deterministic evaluation view: centered crop, no flip.
pub fn center_crop_spec(h: usize, w: usize, crop: usize) -> CropSpec {
    CropSpec {
        x: (w - crop) / 2,
        y: (h - crop) / 2,
        flip: false,
    }
}

pub fn eval_view(
    raw: &RawImage,
    style: &StyleId,
    aug: &AugmentConfig,
    lap_config: &LapConfig,
) -> Result<StyledImage, PipelineError> {
    let crop = center_crop_spec(raw.h, raw.w, aug.crop);
    styled_view(raw, style, &crop, aug, lap_config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::split_corpus;
    use crate::style::StyleParams;

    fn test_split() -> DatasetSplit {
        split_corpus(&(0..20u64).collect::<Vec<_>>(), 0.7, 1)
    }

    fn lap_styles(n: usize) -> Vec<StyleId> {
        crate::lap::corner_styles()
            .into_iter()
            .take(n)
            .map(StyleId::lap)
            .collect()
    }

    #[test]
    fn same_content_policy_matches_ids() {
        let pairs = make_pairs(
            &test_split(),
            &lap_styles(4),
            PairPolicy::SameContent,
            50,
            7,
            160,
            160,
            &AugmentConfig::default(),
        )
        .unwrap();
        assert!(pairs.iter().all(|p| p.content_a == p.content_b));
    }

    #[test]
    fn different_content_policy_never_repeats() {
        let pairs = make_pairs(
            &test_split(),
            &lap_styles(4),
            PairPolicy::DifferentContent,
            1000,
            7,
            160,
            160,
            &AugmentConfig::default(),
        )
        .unwrap();
        assert!(pairs.iter().all(|p| p.content_a != p.content_b));
    }

    #[test]
    fn different_content_needs_two_contents() {
        let split = DatasetSplit {
            train_ids: vec![3],
            test_ids: vec![],
            split_fraction: 1.0,
        };
        let err = make_pairs(
            &split,
            &lap_styles(2),
            PairPolicy::DifferentContent,
            5,
            7,
            160,
            160,
            &AugmentConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NotEnoughContents(1)));
    }

    #[test]
    fn pairs_never_cross_styles_and_are_reproducible() {
        let styles = lap_styles(8);
        let args = (test_split(), styles, PairPolicy::Mixed, 200u64);
        let a = make_pairs(
            &args.0,
            &args.1,
            args.2,
            200,
            args.3,
            160,
            160,
            &AugmentConfig::default(),
        )
        .unwrap();
        let b = make_pairs(
            &args.0,
            &args.1,
            args.2,
            200,
            args.3,
            160,
            160,
            &AugmentConfig::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_style_histogram_is_roughly_uniform() {
        let styles = lap_styles(8);
        let pairs = make_pairs(
            &test_split(),
            &styles,
            PairPolicy::Mixed,
            10_000,
            11,
            160,
            160,
            &AugmentConfig::default(),
        )
        .unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for p in &pairs {
            *counts.entry(p.style.to_string()).or_insert(0usize) += 1;
        }
        let expected = 10_000.0 / 8.0;
        for (style, count) in counts {
            let dev = (count as f64 - expected).abs() / expected;
            assert!(dev < 0.2, "style {style} frequency off by {dev:.3}");
        }
    }

    #[test]
    fn styled_view_has_network_extents_and_unit_range() {
        let raw = crate::phantom::generate_phantom(3, 160, 160).unwrap().image;
        let aug = AugmentConfig::default();
        let style = StyleId::lap(StyleParams::new(5.0, 5.0, 5.0).unwrap());
        let view = eval_view(&raw, &style, &aug, &LapConfig::default()).unwrap();
        assert_eq!((view.h, view.w), (64, 64));
        assert!(view.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn flip_mirrors_rows() {
        let raw = crate::phantom::generate_phantom(4, 160, 160).unwrap().image;
        let aug = AugmentConfig {
            hflip: false,
            ..Default::default()
        };
        let style = StyleId::lap(StyleParams::new(5.0, 5.0, 5.0).unwrap());
        let base = center_crop_spec(160, 160, aug.crop);
        let plain = styled_view(&raw, &style, &base, &aug, &LapConfig::default()).unwrap();
        let flipped_spec = CropSpec { flip: true, ..base };
        let flipped =
            styled_view(&raw, &style, &flipped_spec, &aug, &LapConfig::default()).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(plain.pixels[y * 64 + x], flipped.pixels[y * 64 + 63 - x]);
            }
        }
    }
}
