//! The disclosed linear analysis pipeline: band weighting on a Laplacian
//! pyramid followed by median-centered windowing.
//!
//! Conventions fixed here and used everywhere:
//! - gains are linear in the parameter, g(p) = p/5, so p = 5 is neutral;
//! - with K levels, `h` scales the fine bands [0, K/2) and `l` the
//!   low-to-mid bands [K/2, K); the residual is never scaled;
//! - the window is centered on the median of the recomposed image with
//!   width (0.2 + 0.08*w) of its dynamic range, so larger `w` means a wider
//!   window and lower contrast.

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::phantom::RawImage;
use crate::pyramid::{build_pyramid, recompose};
use crate::style::{StyleId, StyleParams, StyledImage};

/// Pyramid depth knob; 4 levels by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapConfig {
    pub levels: usize,
}

impl Default for LapConfig {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

/// Styled image plus a flag for the degenerate-window case.
#[derive(Debug, Clone)]
pub struct LapResult {
    pub image: StyledImage,
    pub degenerate_window: bool,
}

/// Linear band gain, neutral (1.0) at parameter 5.
pub fn band_gain(p: f64) -> f64 {
    p / 5.0
}

/// Window width as a fraction of dynamic range: 20% at w=0, 100% at w=10.
pub fn window_width_fraction(w: f64) -> f64 {
    0.2 + 0.08 * w
}

/// Per-band gains for a parameter pair under a given pyramid depth.
pub fn band_gains(params: &StyleParams, levels: usize) -> Vec<f32> {
    let fine = levels.div_ceil(2);
    (0..levels)
        .map(|k| {
            if k < fine {
                band_gain(params.h) as f32
            } else {
                band_gain(params.l) as f32
            }
        })
        .collect()
}

/// Median of a buffer (mean of the two middle samples for even lengths).
pub fn median(values: &[f32]) -> f32 {
    let mut sorted: Vec<f32> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite pixels"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Recompose with the parameterized gains but skip the windowing step.
pub fn recompose_weighted(
    raw: &RawImage,
    params: &StyleParams,
    config: &LapConfig,
) -> Result<Vec<f32>, PipelineError> {
    params.validate()?;
    let pyr = build_pyramid(&raw.pixels, raw.h, raw.w, config.levels)?;
    Ok(recompose(&pyr, &band_gains(params, config.levels)).data)
}

/// Full pipeline: band weighting then median-centered windowing to [0, 1].
pub fn apply_lap(
    raw: &RawImage,
    params: &StyleParams,
    config: &LapConfig,
) -> Result<LapResult, PipelineError> {
    let recomposed = recompose_weighted(raw, params, config)?;
    let style_id = StyleId::lap(*params);

    let mut mn = f32::INFINITY;
    let mut mx = f32::NEG_INFINITY;
    for &v in &recomposed {
        mn = mn.min(v);
        mx = mx.max(v);
    }
    if !(mx > mn) {
        return Ok(LapResult {
            image: StyledImage {
                h: raw.h,
                w: raw.w,
                pixels: vec![0.5; recomposed.len()],
                style_id,
                content_id: raw.content_seed,
            },
            degenerate_window: true,
        });
    }

    let center = median(&recomposed);
    let width = (window_width_fraction(params.w) * (mx - mn) as f64) as f32;
    let lo = center - width / 2.0;
    let pixels: Vec<f32> = recomposed
        .iter()
        .map(|&v| ((v - lo) / width).clamp(0.0, 1.0))
        .collect();

    Ok(LapResult {
        image: StyledImage {
            h: raw.h,
            w: raw.w,
            pixels,
            style_id,
            content_id: raw.content_seed,
        },
        degenerate_window: false,
    })
}

/// Which LAP parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LapAxis {
    W,
    L,
    H,
}

impl LapAxis {
    pub fn set(&self, base: StyleParams, value: f64) -> StyleParams {
        let mut p = base;
        match self {
            LapAxis::W => p.w = value,
            LapAxis::L => p.l = value,
            LapAxis::H => p.h = value,
        }
        p
    }

    pub fn name(&self) -> &'static str {
        match self {
            LapAxis::W => "w",
            LapAxis::L => "l",
            LapAxis::H => "h",
        }
    }
}

impl std::str::FromStr for LapAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "w" => Ok(LapAxis::W),
            "l" => Ok(LapAxis::L),
            "h" => Ok(LapAxis::H),
            other => Err(format!("unknown LAP axis {other:?}, expected w|l|h")),
        }
    }
}

/// Evenly spaced axis values 10*i/(steps-1), i = 0..steps.
pub fn sweep_values(steps: usize) -> Result<Vec<f64>, PipelineError> {
    if steps < 2 {
        return Err(PipelineError::TooFewSteps(steps));
    }
    Ok((0..steps)
        .map(|i| 10.0 * i as f64 / (steps - 1) as f64)
        .collect())
}

/// One sweep group: the axis value and the styled rendering of every input.
#[derive(Debug, Clone)]
pub struct SweepGroup {
    pub value: f64,
    pub images: Vec<StyledImage>,
}

/// Style every input image at each sweep position along one axis.
pub fn sweep_styles(
    images: &[RawImage],
    axis: LapAxis,
    steps: usize,
    fixed: StyleParams,
    config: &LapConfig,
) -> Result<Vec<SweepGroup>, PipelineError> {
    fixed.validate()?;
    let values = sweep_values(steps)?;
    let mut groups = Vec::with_capacity(values.len());
    for value in values {
        let params = axis.set(fixed, value);
        let mut styled = Vec::with_capacity(images.len());
        for raw in images {
            styled.push(apply_lap(raw, &params, config)?.image);
        }
        groups.push(SweepGroup {
            value,
            images: styled,
        });
    }
    Ok(groups)
}

/// The 8 corner styles: every combination of each parameter at 0 or 10.
pub fn corner_styles() -> Vec<StyleParams> {
    let mut out = Vec::with_capacity(8);
    for &w in &[0.0, 10.0] {
        for &l in &[0.0, 10.0] {
            for &h in &[0.0, 10.0] {
                out.push(StyleParams { w, l, h });
            }
        }
    }
    out
}

/// Every combination of even integer parameter values {0,2,4,6,8,10}.
pub fn even_grid_styles() -> Vec<StyleParams> {
    let vals = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
    let mut out = Vec::with_capacity(216);
    for &w in &vals {
        for &l in &vals {
            for &h in &vals {
                out.push(StyleParams { w, l, h });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::generate_phantom;

    #[test]
    fn sweep_values_match_contract() {
        let ten = sweep_values(10).unwrap();
        assert_eq!(ten.len(), 10);
        assert_eq!(ten[0], 0.0);
        assert!((ten[1] - 10.0 / 9.0).abs() < 1e-12);
        assert_eq!(ten[9], 10.0);

        assert_eq!(sweep_values(2).unwrap(), vec![0.0, 10.0]);
        assert!(matches!(
            sweep_values(1).unwrap_err(),
            PipelineError::TooFewSteps(1)
        ));
    }

    #[test]
    fn corner_set_has_eight_distinct_styles() {
        let corners = corner_styles();
        assert_eq!(corners.len(), 8);
        for (i, a) in corners.iter().enumerate() {
            for b in corners.iter().skip(i + 1) {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn even_grid_has_216_styles_with_even_values() {
        let grid = even_grid_styles();
        assert_eq!(grid.len(), 216);
        assert!(grid
            .iter()
            .all(|p| [p.w, p.l, p.h].iter().all(|v| v % 2.0 == 0.0)));
    }

    #[test]
    fn degenerate_image_maps_to_half_gray() {
        let raw = RawImage {
            h: 64,
            w: 64,
            pixels: vec![500.0; 64 * 64],
            content_seed: 0,
        };
        let out = apply_lap(
            &raw,
            &StyleParams::new(5.0, 5.0, 5.0).unwrap(),
            &LapConfig::default(),
        )
        .unwrap();
        assert!(out.degenerate_window);
        assert!(out.image.pixels.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn output_pixels_stay_in_unit_range() {
        let raw = generate_phantom(11, 64, 64).unwrap().image;
        for params in corner_styles() {
            let out = apply_lap(&raw, &params, &LapConfig::default()).unwrap();
            assert!(!out.degenerate_window);
            assert!(out.image.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn window_widens_with_w() {
        // Wider window -> lower contrast -> smaller output variance.
        let raw = generate_phantom(3, 64, 64).unwrap().image;
        let var = |w: f64| -> f64 {
            let img = apply_lap(
                &raw,
                &StyleParams::new(w, 5.0, 5.0).unwrap(),
                &LapConfig::default(),
            )
            .unwrap()
            .image;
            let mean: f64 =
                img.pixels.iter().map(|&v| v as f64).sum::<f64>() / img.pixels.len() as f64;
            img.pixels
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / img.pixels.len() as f64
        };
        assert!(var(0.0) > var(5.0));
        assert!(var(5.0) > var(10.0));
    }
}
