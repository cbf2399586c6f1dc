//! `stylex generate`: render the phantom corpus, write the manifest, verify
//! hashes on re-runs instead of regenerating.

use std::collections::BTreeMap;

use stylex_core::io::{raw_to_u16, write_gray16_png, CorpusManifest, ManifestEntry};
use stylex_core::phantom::{corpus_content_seeds, generate_phantom, split_corpus};

use super::{corpus_dir, sha256_file};
use crate::run::{load_config, stamp_run_dir, CliError};
use crate::CommonArgs;

pub fn run(common: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    let dir = corpus_dir(&common.out);
    let manifest_path = dir.join("manifest.json");

    if manifest_path.exists() {
        let manifest: CorpusManifest = stylex_core::io::read_json(&manifest_path)?;
        for (seed, entry) in &manifest.files {
            let path = dir.join(&entry.file);
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "cache verification failed: {} (content {seed}) is missing",
                    path.display()
                )));
            }
            let digest = sha256_file(&path)?;
            if digest != entry.sha256 {
                return Err(CliError::Data(format!(
                    "cache verification failed: {} (content {seed}) hash mismatch",
                    path.display()
                )));
            }
        }
        println!(
            "corpus intact: {} phantoms verified against {}",
            manifest.files.len(),
            manifest_path.display()
        );
        return Ok(());
    }

    stamp_run_dir(&dir, &config, "generate", common.seed)?;
    let c = &config.corpus;
    let seeds = corpus_content_seeds(c.seed, c.count);
    let split = split_corpus(&seeds, c.train_fraction, c.split_seed);

    let mut files = BTreeMap::new();
    for &seed in &seeds {
        let phantom = generate_phantom(seed, c.phantom_h, c.phantom_w)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let file = format!("content_{seed:020}.png");
        let path = dir.join(&file);
        write_gray16_png(&path, &raw_to_u16(&phantom.image), c.phantom_h, c.phantom_w)?;
        files.insert(
            seed,
            ManifestEntry {
                file,
                sha256: sha256_file(&path)?,
            },
        );
    }

    let manifest = CorpusManifest {
        corpus_seed: c.seed,
        phantom_h: c.phantom_h,
        phantom_w: c.phantom_w,
        split: split.clone(),
        files,
    };
    stylex_core::io::write_json(&manifest_path, &manifest)?;
    println!(
        "generated {} phantoms ({} train / {} test) under {}",
        seeds.len(),
        split.train_ids.len(),
        split.test_ids.len(),
        dir.display()
    );
    Ok(())
}
