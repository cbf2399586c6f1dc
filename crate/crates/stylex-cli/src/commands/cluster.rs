//! `stylex cluster`: embed a multi-style test set, run 2-D t-SNE, and score
//! separation (silhouette in the full embedding space plus a k-NN probe).

use std::io::Write;

use serde::Serialize;
use stylex_core::analysis::{knn_accuracy, silhouette};
use stylex_core::lap::corner_styles;
use stylex_core::plot::scatter_2d;
use stylex_core::style::StyleId;
use stylex_core::trainer::embed_corpus;

use super::{load_corpus, load_final_checkpoint, load_manifest, styled_eval_views, test_contents};
use crate::run::{load_config, stamp_run_dir, CliError};
use crate::{ClusterSet, CommonArgs};

#[derive(Serialize)]
struct ClusterSummary {
    set: String,
    styles: Vec<String>,
    held_out: Vec<bool>,
    silhouette_full_d: f64,
    knn_k: usize,
    knn_accuracy: f64,
    knn_accuracy_held_out: Option<f64>,
    tsne: stylex_core::TsneConfig,
}

pub fn run(common: &CommonArgs, set: ClusterSet) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    let manifest = load_manifest(&common.out)?;
    let store = load_corpus(&common.out, &manifest)?;
    let mut model = load_final_checkpoint(&common.out)?;
    let contents = test_contents(&manifest, config.analysis.test_contents)?;

    let (styles, held_out_styles, name): (Vec<StyleId>, Vec<bool>, &str) = match set {
        ClusterSet::LapX => {
            let ids: Vec<StyleId> = corner_styles().into_iter().map(StyleId::lap).collect();
            let held = vec![false; ids.len()];
            (ids, held, "lap_x")
        }
        ClusterSet::SurrogateX => {
            let total = config.pipeline.surrogate_total_seeds;
            let train = config.pipeline.surrogate_train_seeds;
            let ids: Vec<StyleId> = (0..total).map(|seed| StyleId::Surrogate { seed }).collect();
            let held: Vec<bool> = (0..total).map(|seed| seed >= train).collect();
            (ids, held, "surrogate_x")
        }
    };

    let dir = common.out.join(format!("cluster_{name}"));
    stamp_run_dir(&dir, &config, "cluster", common.seed)?;

    let lap = config.pipeline.lap_config();
    let (views, labels) = styled_eval_views(&store, &contents, &styles, &config, &lap)?;
    if views.is_empty() {
        return Err(CliError::Usage("no test images to cluster".to_string()));
    }
    let embeddings = embed_corpus(&mut model, &views)?;

    let sil = silhouette(&embeddings, &labels).map_err(|e| CliError::Data(e.to_string()))?;
    let k = config.analysis.knn_k;
    let knn = knn_accuracy(&embeddings, &labels, k, None)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let held_mask: Vec<bool> = labels.iter().map(|&l| held_out_styles[l]).collect();
    let knn_held = if held_mask.iter().any(|&h| h) {
        Some(
            knn_accuracy(&embeddings, &labels, k, Some(&held_mask))
                .map_err(|e| CliError::Data(e.to_string()))?,
        )
    } else {
        None
    };

    let analysis = stylex_core::tsne::tsne(&embeddings, &config.analysis.tsne_config(2))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let points: Vec<(f64, f64)> = analysis.points.iter().map(|p| (p[0], p[1])).collect();
    let style_names: Vec<String> = styles.iter().map(|s| s.to_string()).collect();
    scatter_2d(
        &points,
        &labels,
        &style_names,
        Some(&held_mask),
        &format!("2-d style map ({name})"),
        &dir.join("scatter.png"),
    )?;

    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("coords.csv"))?);
    writeln!(csv, "style,content,held_out,x,y")?;
    for (i, view) in views.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            view.style_id, view.content_id, held_mask[i], points[i].0, points[i].1
        )?;
    }
    drop(csv);

    let summary = ClusterSummary {
        set: name.to_string(),
        styles: style_names,
        held_out: held_out_styles,
        silhouette_full_d: sil.mean,
        knn_k: k,
        knn_accuracy: knn,
        knn_accuracy_held_out: knn_held,
        tsne: config.analysis.tsne_config(2),
    };
    stylex_core::io::write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "cluster {name}: {} styles, silhouette {:.4}, {k}-nn accuracy {:.4}{} -> {}",
        styles.len(),
        sil.mean,
        knn,
        knn_held
            .map(|a| format!(", held-out {a:.4}"))
            .unwrap_or_default(),
        dir.display()
    );
    Ok(())
}
