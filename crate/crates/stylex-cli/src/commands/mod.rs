pub mod cluster;
pub mod distance;
pub mod generate;
pub mod sweep;
pub mod train;

use std::path::Path;

use sha2::{Digest, Sha256};
use stylex_core::io::{load_raw_png, CorpusManifest};
use stylex_core::model::StyleModel;
use stylex_core::pairs::eval_view;
use stylex_core::style::{StyleId, StyledImage};
use stylex_core::{checkpoint::Container, ContentStore, LapConfig};

use crate::config::ExperimentConfig;
use crate::run::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn corpus_dir(out_root: &Path) -> std::path::PathBuf {
    out_root.join("corpus")
}

pub fn train_dir(out_root: &Path) -> std::path::PathBuf {
    out_root.join("train")
}

pub fn load_manifest(out_root: &Path) -> Result<CorpusManifest, CliError> {
    let path = corpus_dir(out_root).join("manifest.json");
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no corpus manifest at {} (run `stylex generate` first)",
            path.display()
        )));
    }
    stylex_core::io::read_json(&path).map_err(CliError::from)
}

/// Load every cached phantom referenced by the manifest.
pub fn load_corpus(out_root: &Path, manifest: &CorpusManifest) -> Result<ContentStore, CliError> {
    let dir = corpus_dir(out_root);
    let mut store = ContentStore::new();
    for (&seed, entry) in &manifest.files {
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(CliError::Data(format!(
                "cached phantom missing: {}",
                path.display()
            )));
        }
        store.insert(load_raw_png(&path, seed)?);
    }
    Ok(store)
}

pub fn load_final_checkpoint(out_root: &Path) -> Result<StyleModel, CliError> {
    let path = train_dir(out_root).join("final.ckpt");
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no checkpoint at {} (run `stylex train` first)",
            path.display()
        )));
    }
    let container = Container::load(&path).map_err(|e| CliError::Data(e.to_string()))?;
    StyleModel::from_container(&container).map_err(|e| CliError::Data(e.to_string()))
}

/// Deterministic eval views (center crop) for a set of styles over contents.
pub fn styled_eval_views(
    store: &ContentStore,
    contents: &[u64],
    styles: &[StyleId],
    config: &ExperimentConfig,
    lap: &LapConfig,
) -> Result<(Vec<StyledImage>, Vec<usize>), CliError> {
    let mut views = Vec::with_capacity(contents.len() * styles.len());
    let mut labels = Vec::with_capacity(views.capacity());
    for (si, style) in styles.iter().enumerate() {
        for &c in contents {
            let raw = store
                .get(c)
                .ok_or_else(|| CliError::Data(format!("content {c} not in corpus")))?;
            views.push(
                eval_view(raw, style, &config.augment, lap)
                    .map_err(|e| CliError::Data(e.to_string()))?,
            );
            labels.push(si);
        }
    }
    Ok((views, labels))
}

/// First N test contents of the split.
pub fn test_contents(
    manifest: &CorpusManifest,
    n: usize,
) -> Result<Vec<u64>, CliError> {
    if n == 0 {
        return Err(CliError::Usage(
            "analysis.test_contents must be >= 1".to_string(),
        ));
    }
    let ids: Vec<u64> = manifest.split.test_ids.iter().copied().take(n).collect();
    if ids.is_empty() {
        return Err(CliError::Usage("test split is empty".to_string()));
    }
    Ok(ids)
}
