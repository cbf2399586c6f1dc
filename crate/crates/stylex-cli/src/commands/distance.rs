//! `stylex distance`: annotated distance grid against a reference image
//! (same content across styles, then same style across contents).

use std::io::Write;

use serde::Serialize;
use stylex_core::lap::corner_styles;
use stylex_core::metric::embedding_cosine;
use stylex_core::pairs::eval_view;
use stylex_core::plot::{image_grid, GridTile};
use stylex_core::style::StyleId;
use stylex_core::trainer::embed_corpus;

use super::{load_corpus, load_final_checkpoint, load_manifest, test_contents};
use crate::config::PipelineKind;
use crate::run::{load_config, stamp_run_dir, CliError};
use crate::CommonArgs;

#[derive(Serialize)]
struct DistanceSummary {
    reference_style: String,
    reference_content: u64,
    mean_same_style_different_content: f64,
    mean_different_style: f64,
    rows: usize,
    columns: usize,
}

pub fn run(
    common: &CommonArgs,
    reference_content: Option<u64>,
    reference_style: usize,
    content_rows: usize,
) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    let manifest = load_manifest(&common.out)?;
    let store = load_corpus(&common.out, &manifest)?;
    let mut model = load_final_checkpoint(&common.out)?;

    let styles: Vec<StyleId> = match config.pipeline.kind {
        PipelineKind::Lap => corner_styles().into_iter().map(StyleId::lap).collect(),
        PipelineKind::Surrogate => (0..config.pipeline.surrogate_total_seeds)
            .map(|seed| StyleId::Surrogate { seed })
            .collect(),
    };
    if reference_style >= styles.len() {
        return Err(CliError::Usage(format!(
            "reference style index {reference_style} out of range (set has {})",
            styles.len()
        )));
    }
    let contents = test_contents(&manifest, (content_rows + 1).max(2))?;
    let ref_content = reference_content.unwrap_or(contents[0]);
    if store.get(ref_content).is_none() {
        return Err(CliError::Data(format!(
            "reference content {ref_content} not in corpus"
        )));
    }
    let other_contents: Vec<u64> = contents
        .iter()
        .copied()
        .filter(|&c| c != ref_content)
        .take(content_rows)
        .collect();

    let dir = common.out.join("distance");
    stamp_run_dir(&dir, &config, "distance", common.seed)?;

    let lap = config.pipeline.lap_config();
    let view_of = |content: u64, style: &StyleId| {
        eval_view(
            store.get(content).expect("checked above"),
            style,
            &config.augment,
            &lap,
        )
        .map_err(|e| CliError::Data(e.to_string()))
    };

    // Row 0: reference content under every style (reference first).
    // Rows 1..: other contents, column-wise the same style.
    let mut views = Vec::new();
    for style in &styles {
        views.push(view_of(ref_content, style)?);
    }
    for &content in &other_contents {
        for style in &styles {
            views.push(view_of(content, style)?);
        }
    }
    let embeddings = embed_corpus(&mut model, &views)?;
    let ref_idx = reference_style;
    let distances: Vec<f64> = embeddings
        .iter()
        .map(|e| {
            embedding_cosine(&embeddings[ref_idx], e)
                .map(|s| 1.0 - s)
                .map_err(|e| CliError::Data(e.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let tiles: Vec<GridTile> = views
        .iter()
        .zip(&distances)
        .enumerate()
        .map(|(i, (v, &d))| GridTile {
            pixels: v.pixels.clone(),
            h: v.h,
            w: v.w,
            caption: if i == ref_idx {
                format!("ref d={d:.3}")
            } else {
                format!("d={d:.3}")
            },
        })
        .collect();
    image_grid(
        &tiles,
        styles.len(),
        "style distance to reference",
        &dir.join("grid.png"),
    )?;

    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("distances.csv"))?);
    writeln!(csv, "style,content,same_content,same_style,distance")?;
    let mut same_style = Vec::new();
    let mut diff_style = Vec::new();
    for (i, (v, &d)) in views.iter().zip(&distances).enumerate() {
        if i == ref_idx {
            continue; // the reference itself
        }
        let is_same_style = v.style_id == styles[ref_idx];
        let is_same_content = v.content_id == ref_content;
        writeln!(
            csv,
            "{},{},{},{},{}",
            v.style_id, v.content_id, is_same_content, is_same_style, d
        )?;
        if is_same_style && !is_same_content {
            same_style.push(d);
        } else if !is_same_style {
            diff_style.push(d);
        }
    }
    drop(csv);

    let mean = |v: &[f64]| -> f64 {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let summary = DistanceSummary {
        reference_style: styles[ref_idx].to_string(),
        reference_content: ref_content,
        mean_same_style_different_content: mean(&same_style),
        mean_different_style: mean(&diff_style),
        rows: 1 + other_contents.len(),
        columns: styles.len(),
    };
    stylex_core::io::write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "distance report: self d={:.6}, same-style mean {:.4}, different-style mean {:.4} -> {}",
        distances[ref_idx],
        summary.mean_same_style_different_content,
        summary.mean_different_style,
        dir.display()
    );
    Ok(())
}
