//! On-disk formats: 16-bit grayscale PNGs, styled-image sidecar metadata,
//! and the corpus manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::phantom::{DatasetSplit, RawImage, RAW_MAX};
use crate::style::{StyleId, StyledImage};

/// Quantize raw intensities ([0, RAW_MAX]) for the phantom cache.
pub fn raw_to_u16(raw: &RawImage) -> Vec<u16> {
    raw.pixels
        .iter()
        .map(|&v| v.clamp(0.0, RAW_MAX).round() as u16)
        .collect()
}

/// Quantize styled pixels ([0, 1]) with the full 16-bit scale.
pub const STYLED_PNG_SCALE: f32 = 65535.0;

pub fn styled_to_u16(image: &StyledImage) -> Vec<u16> {
    image
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * STYLED_PNG_SCALE).round() as u16)
        .collect()
}

pub fn write_gray16_png(
    path: &Path,
    data: &[u16],
    h: usize,
    w: usize,
) -> Result<(), TrainError> {
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_vec(
        w as u32,
        h as u32,
        data.to_vec(),
    )
    .expect("buffer length matches extents");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path)
        .map_err(|e| TrainError::Io(std::io::Error::other(e.to_string())))?;
    Ok(())
}

/// Decode a cached phantom back into raw intensities.
pub fn load_raw_png(path: &Path, content_seed: u64) -> Result<RawImage, TrainError> {
    let img = image::open(path)
        .map_err(|e| TrainError::Io(std::io::Error::other(e.to_string())))?
        .into_luma16();
    let (w, h) = img.dimensions();
    Ok(RawImage {
        h: h as usize,
        w: w as usize,
        pixels: img.into_raw().iter().map(|&v| v as f32).collect(),
        content_seed,
    })
}

/// Sidecar record stored next to each persisted styled image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StyledSidecar {
    pub style: StyleId,
    pub content_id: u64,
    pub h: usize,
    pub w: usize,
    /// u16 png value = pixel * scale.
    pub png_scale: f32,
}

pub fn write_styled_png(path: &Path, image: &StyledImage) -> Result<(), TrainError> {
    write_gray16_png(path, &styled_to_u16(image), image.h, image.w)?;
    let sidecar = StyledSidecar {
        style: image.style_id,
        content_id: image.content_id,
        h: image.h,
        w: image.w,
        png_scale: STYLED_PNG_SCALE,
    };
    let meta_path = path.with_extension("json");
    write_json(&meta_path, &sidecar)?;
    Ok(())
}

/// Corpus manifest: everything needed to reproduce or verify the cache.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_seed: u64,
    pub phantom_h: usize,
    pub phantom_w: usize,
    pub split: DatasetSplit,
    /// content seed -> (relative file name, sha256 hex of the PNG bytes).
    pub files: BTreeMap<u64, ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

/// Serialize as pretty JSON via a temp file + rename.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrainError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(value).expect("serializable"))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, TrainError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| TrainError::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::generate_phantom;

    #[test]
    fn raw_png_round_trip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let raw = generate_phantom(3, 64, 64).unwrap().image;
        let path = dir.path().join("c3.png");
        write_gray16_png(&path, &raw_to_u16(&raw), raw.h, raw.w).unwrap();
        let back = load_raw_png(&path, 3).unwrap();
        assert_eq!(back.h, raw.h);
        assert_eq!(back.w, raw.w);
        for (&orig, &loaded) in raw.pixels.iter().zip(&back.pixels) {
            assert!((orig.round() - loaded).abs() < 0.5 + 1e-3);
        }
    }

    #[test]
    fn styled_png_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let raw = generate_phantom(4, 64, 64).unwrap().image;
        let styled = crate::surrogate::apply_surrogate(&raw, 7);
        let path = dir.path().join("styled.png");
        write_styled_png(&path, &styled).unwrap();
        let sidecar: StyledSidecar = read_json(&path.with_extension("json")).unwrap();
        assert_eq!(sidecar.content_id, 4);
        assert_eq!(sidecar.style, StyleId::Surrogate { seed: 7 });
        assert_eq!(sidecar.png_scale, STYLED_PNG_SCALE);
    }
}
