//! Style identities and styled images shared by both pipelines.

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::lap::LapConfig;
use crate::phantom::RawImage;

/// The LAP triple: window/contrast `w`, low-to-mid band weight `l`,
/// high-frequency band weight `h`. All three live in [0, 10].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub w: f64,
    pub l: f64,
    pub h: f64,
}

impl StyleParams {
    pub fn new(w: f64, l: f64, h: f64) -> Result<Self, PipelineError> {
        let check = |name: &'static str, value: f64| -> Result<(), PipelineError> {
            if !(0.0..=10.0).contains(&value) {
                return Err(PipelineError::ParamOutOfRange { name, value });
            }
            Ok(())
        };
        check("w", w)?;
        check("l", l)?;
        check("h", h)?;
        Ok(Self { w, l, h })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        Self::new(self.w, self.l, self.h).map(|_| ())
    }
}

/// Which pipeline produced an image, and with what knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "snake_case")]
pub enum StyleId {
    Lap { w: f64, l: f64, h: f64 },
    Surrogate { seed: u64 },
}

impl StyleId {
    pub fn lap(params: StyleParams) -> Self {
        StyleId::Lap {
            w: params.w,
            l: params.l,
            h: params.h,
        }
    }

    pub fn lap_params(&self) -> Option<StyleParams> {
        match *self {
            StyleId::Lap { w, l, h } => Some(StyleParams { w, l, h }),
            StyleId::Surrogate { .. } => None,
        }
    }
}

impl std::fmt::Display for StyleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StyleId::Lap { w, l, h } => write!(f, "lap_w{w}_l{l}_h{h}"),
            StyleId::Surrogate { seed } => write!(f, "surrogate_{seed}"),
        }
    }
}

/// Pipeline output: intensities in [0, 1] tagged with style and content.
#[derive(Debug, Clone)]
pub struct StyledImage {
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<f32>,
    pub style_id: StyleId,
    pub content_id: u64,
}

impl StyledImage {
    pub fn numel(&self) -> usize {
        self.pixels.len()
    }
}

/// Run whichever pipeline the style id names.
pub fn apply_style(
    raw: &RawImage,
    style: &StyleId,
    lap_config: &LapConfig,
) -> Result<StyledImage, PipelineError> {
    match *style {
        StyleId::Lap { w, l, h } => {
            let params = StyleParams::new(w, l, h)?;
            Ok(crate::lap::apply_lap(raw, &params, lap_config)?.image)
        }
        StyleId::Surrogate { seed } => Ok(crate::surrogate::apply_surrogate(raw, seed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_outside_range_are_rejected() {
        assert!(StyleParams::new(-0.1, 5.0, 5.0).is_err());
        assert!(StyleParams::new(0.0, 10.1, 5.0).is_err());
        assert!(StyleParams::new(0.0, 10.0, 10.0).is_ok());
    }

    #[test]
    fn style_id_display_is_stable() {
        let id = StyleId::lap(StyleParams::new(0.0, 5.0, 10.0).unwrap());
        assert_eq!(id.to_string(), "lap_w0_l5_h10");
        assert_eq!(StyleId::Surrogate { seed: 3 }.to_string(), "surrogate_3");
    }
}
