//! `stylex sweep`: style one LAP axis across its range, embed, run 1-D
//! t-SNE, and report rank correlation plus the unseen-value interpolation
//! verdict.

use std::io::Write;

use serde::Serialize;
use stylex_core::analysis::{interpolation_check, sweep_rank_correlation, InterpolationReport};
use stylex_core::lap::{sweep_values, LapAxis};
use stylex_core::plot::boxplot_1d;
use stylex_core::style::{StyleId, StyleParams};
use stylex_core::trainer::embed_corpus;

use super::{load_corpus, load_final_checkpoint, load_manifest, styled_eval_views, test_contents};
use crate::config::{ExperimentConfig, PipelineKind};
use crate::run::{load_config, stamp_run_dir, CliError};
use crate::CommonArgs;

#[derive(Serialize)]
struct SweepSummary {
    axis: String,
    fixed: StyleParams,
    sweep_steps: usize,
    rank_correlation_abs: f64,
    interp_steps: usize,
    interpolation: InterpolationReport,
    interpolation_pass_fraction: f64,
    tsne: stylex_core::TsneConfig,
}

fn sweep_coords(
    config: &ExperimentConfig,
    model: &mut stylex_core::StyleModel,
    store: &stylex_core::ContentStore,
    contents: &[u64],
    axis: LapAxis,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let fixed = StyleParams::new(5.0, 5.0, 5.0).expect("neutral params in range");
    let values = sweep_values(steps).map_err(|e| CliError::Usage(e.to_string()))?;
    let styles: Vec<StyleId> = values
        .iter()
        .map(|&v| StyleId::lap(axis.set(fixed, v)))
        .collect();
    let lap = config.pipeline.lap_config();
    let (views, group_idx) = styled_eval_views(store, contents, &styles, config, &lap)?;
    let params_flat: Vec<f64> = group_idx.iter().map(|&g| values[g]).collect();
    let embeddings = embed_corpus(model, &views)?;
    let analysis = stylex_core::tsne::tsne(&embeddings, &config.analysis.tsne_config(1))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let coords: Vec<f64> = analysis.points.iter().map(|p| p[0]).collect();
    Ok((coords, params_flat))
}

pub fn run(common: &CommonArgs, axis: LapAxis) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    if config.pipeline.kind != PipelineKind::Lap {
        return Err(CliError::Usage(
            "sweep requires pipeline.kind = \"lap\"".to_string(),
        ));
    }
    let manifest = load_manifest(&common.out)?;
    let store = load_corpus(&common.out, &manifest)?;
    let mut model = load_final_checkpoint(&common.out)?;
    let contents = test_contents(&manifest, config.analysis.test_contents)?;

    let dir = common.out.join(format!("sweep_{}", axis.name()));
    stamp_run_dir(&dir, &config, "sweep", common.seed)?;

    // Rank-correlation sweep.
    let steps = config.analysis.sweep_steps;
    let (coords, params_flat) = sweep_coords(&config, &mut model, &store, &contents, axis, steps)?;
    let rho = sweep_rank_correlation(&coords, &params_flat)
        .map_err(|e| CliError::Data(e.to_string()))?;

    // Boxplot and raw coordinates.
    let values = sweep_values(steps).expect("checked above");
    let groups: Vec<(String, Vec<f64>)> = values
        .iter()
        .enumerate()
        .map(|(gi, v)| {
            let vals: Vec<f64> = coords
                .iter()
                .zip(&params_flat)
                .filter(|&(_, &p)| p == values[gi])
                .map(|(&c, _)| c)
                .collect();
            (format!("{v:.1}"), vals)
        })
        .collect();
    boxplot_1d(
        &groups,
        &format!("1-d embedding vs {} parameter", axis.name()),
        &dir.join("boxplot.png"),
    )?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("coords.csv"))?);
    writeln!(csv, "param,coord")?;
    for (c, p) in coords.iter().zip(&params_flat) {
        writeln!(csv, "{p},{c}")?;
    }
    drop(csv);

    // Interpolation sweep on the integer grid.
    let interp_steps = config.analysis.interp_steps;
    let (icoords, iparams) =
        sweep_coords(&config, &mut model, &store, &contents, axis, interp_steps)?;
    let seen_values = config.pipeline.seen_axis_values();
    let seen: Vec<bool> = iparams
        .iter()
        .map(|p| seen_values.iter().any(|s| (s - p).abs() < 1e-9))
        .collect();
    let interpolation =
        interpolation_check(&icoords, &iparams, &seen).map_err(|e| CliError::Data(e.to_string()))?;
    let pass_fraction = if interpolation.groups.is_empty() {
        1.0
    } else {
        interpolation.groups.iter().filter(|g| g.ok).count() as f64
            / interpolation.groups.len() as f64
    };

    let summary = SweepSummary {
        axis: axis.name().to_string(),
        fixed: StyleParams::new(5.0, 5.0, 5.0).expect("in range"),
        sweep_steps: steps,
        rank_correlation_abs: rho,
        interp_steps,
        interpolation,
        interpolation_pass_fraction: pass_fraction,
        tsne: config.analysis.tsne_config(1),
    };
    stylex_core::io::write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "sweep {}: |rho| = {rho:.4}, interpolation pass fraction {pass_fraction:.2} -> {}",
        axis.name(),
        dir.display()
    );
    Ok(())
}
