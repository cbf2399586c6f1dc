use std::time::Instant;
use stylex_core::lap::{corner_styles, LapConfig};
use stylex_core::model::{EncoderConfig, PredictorConfig, StyleModel};
use stylex_core::pairs::AugmentConfig;
use stylex_core::phantom::{corpus_content_seeds, split_corpus, ContentStore};
use stylex_core::style::StyleId;
use stylex_core::trainer::{train, TrainConfig, TrainData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(10);
    let ppe: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(256);
    let seeds = corpus_content_seeds(1, 128);
    let split = split_corpus(&seeds, 1.0, 2);
    let store = ContentStore::generate(&split.train_ids, 160, 160).unwrap();
    let styles: Vec<StyleId> = corner_styles().into_iter().map(StyleId::lap).collect();
    let data = TrainData {
        split,
        styles,
        phantom_h: 160,
        phantom_w: 160,
        augment: AugmentConfig::default(),
        lap: LapConfig::default(),
    };
    let model = StyleModel::new(EncoderConfig::default(), PredictorConfig::default(), 7);
    let base_lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let cfg = TrainConfig {
        epochs,
        pairs_per_epoch: Some(ppe),
        seed: 3, base_lr,
        ..Default::default()
    };
    let t0 = Instant::now();
    let out = train(model, &store, &data, &cfg, std::path::Path::new("/tmp/bench_run")).unwrap();
    for (e, rows) in out.metrics.chunks(ppe / 32).enumerate() {
        let mean: f64 = rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
        let collapse = rows.last().unwrap().collapse_std;
        println!("epoch {e:2}  mean_loss {mean:+.4}  collapse_std {collapse:.4}");
    }
    println!("total {:.1}s  (threshold 0.5/sqrt(128) = {:.4})", t0.elapsed().as_secs_f64(), 0.5 / (128f64).sqrt());
}
