use stylex_core::analysis::{knn_accuracy, silhouette};
use stylex_core::lap::{corner_styles, LapConfig};
use stylex_core::model::{EncoderConfig, PredictorConfig, StyleModel};
use stylex_core::pairs::{eval_view, AugmentConfig};
use stylex_core::phantom::{corpus_content_seeds, split_corpus, ContentStore};
use stylex_core::style::{StyleId, StyledImage};
use stylex_core::trainer::{embed_corpus, train, TrainConfig, TrainData};

fn lapx_eval(model: &mut StyleModel, store: &ContentStore, contents: &[u64]) -> (f64, f64) {
    let aug = AugmentConfig::default();
    let lap = LapConfig::default();
    let ids: Vec<StyleId> = corner_styles().into_iter().map(StyleId::lap).collect();
    let mut views: Vec<StyledImage> = Vec::new();
    let mut labels = Vec::new();
    for (si, sid) in ids.iter().enumerate() {
        for &c in contents {
            views.push(eval_view(store.get(c).unwrap(), sid, &aug, &lap).unwrap());
            labels.push(si);
        }
    }
    let emb = embed_corpus(model, &views).unwrap();
    (
        silhouette(&emb, &labels).unwrap().mean,
        knn_accuracy(&emb, &labels, 5, None).unwrap(),
    )
}

fn main() {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(90);
    let ppe: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(512);
    let seeds = corpus_content_seeds(1, 160);
    let split = split_corpus(&seeds, 0.8, 2);
    let test_contents: Vec<u64> = split.test_ids.iter().copied().take(24).collect();
    let mut all = split.train_ids.clone();
    all.extend_from_slice(&split.test_ids);
    let store = ContentStore::generate(&all, 160, 160).unwrap();
    let styles: Vec<StyleId> = corner_styles().into_iter().map(StyleId::lap).collect();
    let data = TrainData {
        split: split.clone(),
        styles,
        phantom_h: 160,
        phantom_w: 160,
        augment: AugmentConfig::default(),
        lap: LapConfig::default(),
    };
    // Train in stages, evaluating at boundaries (fresh cosine schedule per
    // stage is fine for a scaling probe).
    let mut model = StyleModel::new(EncoderConfig::default(), PredictorConfig::default(), 7);
    let mut total = 0usize;
    for stage in 0..6 {
        let cfg = TrainConfig {
            epochs: epochs / 6,
            pairs_per_epoch: Some(ppe),
            seed: 100 + stage as u64,
            ..Default::default()
        };
        let out = train(model, &store, &data, &cfg, std::path::Path::new("/tmp/steps_run")).unwrap();
        model = out.model;
        total += out.metrics.len();
        let loss = out.metrics.last().unwrap().loss;
        let collapse = out.metrics.last().unwrap().collapse_std;
        let (sil, knn) = lapx_eval(&mut model, &store, &test_contents);
        println!("steps {total:5}: loss {loss:+.4} collapse {collapse:.4} silhouette {sil:+.4} 5nn {knn:.4}");
    }
}
