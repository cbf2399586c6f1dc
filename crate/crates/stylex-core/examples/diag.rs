use stylex_core::analysis::{knn_accuracy, silhouette};
use stylex_core::checkpoint::Container;
use stylex_core::lap::{corner_styles, LapConfig};
use stylex_core::model::StyleModel;
use stylex_core::pairs::{eval_view, AugmentConfig};
use stylex_core::phantom::{corpus_content_seeds, split_corpus, ContentStore};
use stylex_core::style::{StyleId, StyledImage};
use stylex_core::tensor::{BnMode, Tape};

fn embed(model: &mut StyleModel, images: &[StyledImage], backbone: bool) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    for chunk in images.chunks(32) {
        let mut tape = Tape::new();
        let nodes = model.leaves(&mut tape);
        let (h, w) = (chunk[0].h, chunk[0].w);
        let mut data = Vec::new();
        for v in chunk { data.extend_from_slice(&v.pixels); }
        let input = tape.constant(stylex_core::Tensor::new(vec![chunk.len(), 1, h, w], data).unwrap());
        let z = if backbone {
            model.backbone_on_tape(&mut tape, &nodes, input, BnMode::Eval).unwrap()
        } else {
            model.encode_on_tape(&mut tape, &nodes, input, BnMode::Eval).unwrap()
        };
        let d = tape.value(z).shape()[1];
        let vals = tape.value(z).data();
        for r in 0..chunk.len() { out.push(vals[r*d..(r+1)*d].to_vec()); }
    }
    out
}

fn main() {
    let ckpt = std::env::args().nth(1).unwrap_or("/tmp/ladder_a/final.ckpt".into());
    let mut model = StyleModel::from_container(&Container::load(std::path::Path::new(&ckpt)).unwrap()).unwrap();
    let seeds = corpus_content_seeds(1, 800);
    let split = split_corpus(&seeds, 0.7, 2);
    let contents: Vec<u64> = split.test_ids.iter().copied().take(30).collect();
    let store = ContentStore::generate(&contents, 160, 160).unwrap();
    let aug = AugmentConfig::default();
    let lap = LapConfig::default();
    let ids: Vec<StyleId> = corner_styles().into_iter().map(StyleId::lap).collect();
    let mut views = Vec::new();
    let mut labels = Vec::new();
    for (si, sid) in ids.iter().enumerate() {
        for &c in &contents {
            views.push(eval_view(store.get(c).unwrap(), sid, &aug, &lap).unwrap());
            labels.push(si);
        }
    }
    for backbone in [false, true] {
        let emb = embed(&mut model, &views, backbone);
        let sil = silhouette(&emb, &labels).unwrap().mean;
        let knn = knn_accuracy(&emb, &labels, 5, None).unwrap();
        println!("{}: silhouette {:.4}  5nn {:.4}", if backbone {"backbone"} else {"projector"}, sil, knn);
    }
}
