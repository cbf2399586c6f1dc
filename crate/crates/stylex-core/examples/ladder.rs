//! Full experiment ladder at desk scale; prints the numbers behind every
//! acceptance threshold so they can be frozen honestly.

use std::time::Instant;

use stylex_core::analysis::{
    interpolation_check, knn_accuracy, pair_auc, silhouette, sweep_rank_correlation,
};
use stylex_core::lap::{corner_styles, even_grid_styles, sweep_values, LapAxis, LapConfig};
use stylex_core::metric::{embedding_cosine, stylex_similarity};
use stylex_core::model::{EncoderConfig, PredictorConfig, StyleModel};
use stylex_core::pairs::{eval_view, AugmentConfig};
use stylex_core::phantom::{corpus_content_seeds, split_corpus, ContentStore, DatasetSplit};
use stylex_core::style::{StyleId, StyleParams, StyledImage};
use stylex_core::trainer::{embed_corpus, train, TrainConfig, TrainData};
use stylex_core::tsne::{tsne, TsneConfig, TsneInit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eval_views(
    store: &ContentStore,
    contents: &[u64],
    styles: &[StyleId],
    aug: &AugmentConfig,
    lap: &LapConfig,
) -> Vec<StyledImage> {
    let mut out = Vec::new();
    for style in styles {
        for &c in contents {
            let raw = store.get(c).unwrap();
            out.push(eval_view(raw, style, aug, lap).unwrap());
        }
    }
    out
}

fn main() {
    let t0 = Instant::now();
    let aug = AugmentConfig::default();
    let lap = LapConfig::default();
    let (ph, pw) = (160usize, 160usize);

    println!("[{:6.1}s] generating corpus", t0.elapsed().as_secs_f64());
    let seeds = corpus_content_seeds(1, 800);
    let split = split_corpus(&seeds, 0.7, 2);
    println!("train {} test {}", split.train_ids.len(), split.test_ids.len());
    let store = ContentStore::generate(&seeds, ph, pw).unwrap();

    let corner_ids: Vec<StyleId> = corner_styles().into_iter().map(StyleId::lap).collect();
    let test_contents: Vec<u64> = split.test_ids.iter().copied().take(30).collect();

    // ---- Run A: corners ----
    println!("[{:6.1}s] training run A (corners)", t0.elapsed().as_secs_f64());
    let data_a = TrainData {
        split: split.clone(),
        styles: corner_ids.clone(),
        phantom_h: ph,
        phantom_w: pw,
        augment: aug,
        lap,
    };
    let cfg_a = TrainConfig { seed: 11, ..Default::default() };
    let model_a = StyleModel::new(EncoderConfig::default(), PredictorConfig::default(), cfg_a.seed);
    let baseline_model = model_a.clone();
    let out_a = train(model_a, &store, &data_a, &cfg_a, std::path::Path::new("/tmp/ladder_a")).unwrap();
    let mut model_a = out_a.model;
    let last = out_a.metrics.last().unwrap();
    let final_epoch_rows: Vec<_> = out_a.metrics.iter().filter(|r| r.epoch == cfg_a.epochs - 1).collect();
    let final_loss: f64 = final_epoch_rows.iter().map(|r| r.loss).sum::<f64>() / final_epoch_rows.len() as f64;
    println!("criterion4: final epoch mean loss {:.4} (< -0.8?), collapse_std {:.4} (> {:.4}?)",
        final_loss, last.collapse_std, 0.5 / (128.0f64).sqrt());

    // ---- criterion 5 ----
    println!("[{:6.1}s] LAP-x evaluation", t0.elapsed().as_secs_f64());
    let lapx_views = eval_views(&store, &test_contents, &corner_ids, &aug, &lap);
    let lapx_labels: Vec<usize> = (0..8).flat_map(|s| vec![s; test_contents.len()]).collect();
    let emb_trained = embed_corpus(&mut model_a, &lapx_views).unwrap();
    let sil_trained = silhouette(&emb_trained, &lapx_labels).unwrap().mean;
    let knn5 = knn_accuracy(&emb_trained, &lapx_labels, 5, None).unwrap();
    let mut baseline = baseline_model;
    let emb_base = embed_corpus(&mut baseline, &lapx_views).unwrap();
    let sil_base = silhouette(&emb_base, &lapx_labels).unwrap().mean;
    println!("criterion5: silhouette {:.4} (>=0.5?), 5nn {:.4} (>=0.9?), baseline sil {:.4} (gap {:.4} >= 0.2?)",
        sil_trained, knn5, sil_base, sil_trained - sil_base);

    // ---- criterion 9 ----
    println!("[{:6.1}s] pair AUC", t0.elapsed().as_secs_f64());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut dists: Vec<(f64, bool)> = Vec::new();
    let nc = test_contents.len();
    for _ in 0..300 {
        // same style, different content
        let s = rng.gen_range(0..8usize);
        let c1 = rng.gen_range(0..nc);
        let mut c2 = rng.gen_range(0..nc);
        while c2 == c1 { c2 = rng.gen_range(0..nc); }
        let d = 1.0 - embedding_cosine(&emb_trained[s * nc + c1], &emb_trained[s * nc + c2]).unwrap();
        dists.push((d, true));
        // different style
        let s2 = { let mut s2 = rng.gen_range(0..8usize); while s2 == s { s2 = rng.gen_range(0..8usize); } s2 };
        let c3 = rng.gen_range(0..nc);
        let d = 1.0 - embedding_cosine(&emb_trained[s * nc + c1], &emb_trained[s2 * nc + c3]).unwrap();
        dists.push((d, false));
    }
    let auc = pair_auc(&dists).unwrap();
    let mut worst_self: f64 = 1.0;
    for view in lapx_views.iter().take(100) {
        let s = stylex_similarity(&mut model_a, view, view).unwrap();
        if s < worst_self { worst_self = s; }
    }
    println!("criterion9: auc {:.4} (>=0.95?), worst self-similarity {:.8} (1 +- 1e-6?)", auc, worst_self);

    // ---- Run B: even grid ----
    println!("[{:6.1}s] training run B (even grid)", t0.elapsed().as_secs_f64());
    let grid_ids: Vec<StyleId> = even_grid_styles().into_iter().map(StyleId::lap).collect();
    let data_b = TrainData { styles: grid_ids, ..data_a.clone() };
    let cfg_b = TrainConfig { seed: 12, ..Default::default() };
    let model_b = StyleModel::new(EncoderConfig::default(), PredictorConfig::default(), cfg_b.seed);
    let out_b = train(model_b, &store, &data_b, &cfg_b, std::path::Path::new("/tmp/ladder_b")).unwrap();
    let mut model_b = out_b.model;
    println!("run B final loss {:.4}, collapse {:.4}",
        out_b.metrics.last().unwrap().loss, out_b.metrics.last().unwrap().collapse_std);

    // ---- criteria 6 & 7 ----
    let sweep_contents: Vec<u64> = split.test_ids.iter().copied().take(24).collect();
    for axis in [LapAxis::L, LapAxis::H] {
        for (steps, name) in [(10usize, "rho10"), (11usize, "interp11")] {
            let values = sweep_values(steps).unwrap();
            let fixed = StyleParams::new(5.0, 5.0, 5.0).unwrap();
            let mut views = Vec::new();
            let mut params_flat = Vec::new();
            for &v in &values {
                let p = axis.set(fixed, v);
                let sid = StyleId::lap(p);
                for &c in &sweep_contents {
                    views.push(eval_view(store.get(c).unwrap(), &sid, &aug, &lap).unwrap());
                    params_flat.push(v);
                }
            }
            let emb = embed_corpus(&mut model_b, &views).unwrap();
            for init in [TsneInit::Random, TsneInit::Pca] {
                let cfg = TsneConfig { out_dims: 1, seed: 5, init, ..Default::default() };
                let analysis = tsne(&emb, &cfg).unwrap();
                let coords: Vec<f64> = analysis.points.iter().map(|p| p[0]).collect();
                let rho = sweep_rank_correlation(&coords, &params_flat).unwrap();
                if steps == 10 {
                    println!("criterion6 axis {:?} init {:?}: |rho| {:.4} (>=0.9?)  kl_final {:.4} kl_100 {:.4}",
                        axis, init, rho, analysis.kl_trace.last().unwrap(), analysis.kl_trace[99]);
                } else {
                    let seen: Vec<bool> = params_flat.iter().map(|&v| v == 0.0 || v == 10.0 || (v % 2.0 == 0.0)).collect();
                    let report = interpolation_check(&coords, &params_flat, &seen).unwrap();
                    let ok = report.groups.iter().filter(|g| g.ok).count();
                    println!("criterion7 axis {:?} init {:?} ({}): {}/{} odd groups ok, rho {:.4}",
                        axis, init, name, ok, report.groups.len(), rho);
                }
            }
        }
    }

    // ---- Run C: surrogate ----
    println!("[{:6.1}s] training run C (surrogate 28/32)", t0.elapsed().as_secs_f64());
    let train_surr: Vec<StyleId> = (0..28u64).map(|s| StyleId::Surrogate { seed: s }).collect();
    let all_surr: Vec<StyleId> = (0..32u64).map(|s| StyleId::Surrogate { seed: s }).collect();
    let data_c = TrainData { styles: train_surr, ..data_a.clone() };
    let cfg_c = TrainConfig { seed: 13, ..Default::default() };
    let model_c = StyleModel::new(EncoderConfig::default(), PredictorConfig::default(), cfg_c.seed);
    let out_c = train(model_c, &store, &data_c, &cfg_c, std::path::Path::new("/tmp/ladder_c")).unwrap();
    let mut model_c = out_c.model;
    println!("run C final loss {:.4}, collapse {:.4}",
        out_c.metrics.last().unwrap().loss, out_c.metrics.last().unwrap().collapse_std);

    let surr_contents: Vec<u64> = split.test_ids.iter().copied().take(12).collect();
    let surr_views = eval_views(&store, &surr_contents, &all_surr, &aug, &lap);
    let surr_labels: Vec<usize> = (0..32).flat_map(|s| vec![s; surr_contents.len()]).collect();
    let held_mask: Vec<bool> = surr_labels.iter().map(|&l| l >= 28).collect();
    let emb_surr = embed_corpus(&mut model_c, &surr_views).unwrap();
    let acc_held = knn_accuracy(&emb_surr, &surr_labels, 5, Some(&held_mask)).unwrap();
    let acc_all = knn_accuracy(&emb_surr, &surr_labels, 5, None).unwrap();
    let sil_surr = silhouette(&emb_surr, &surr_labels).unwrap().mean;
    println!("criterion8: held-out 5nn {:.4} (>=0.75?), all 5nn {:.4}, silhouette {:.4}", acc_held, acc_all, sil_surr);

    println!("[{:6.1}s] done", t0.elapsed().as_secs_f64());
}
