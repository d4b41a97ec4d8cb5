//! Trains the key-frame model, saves a checkpoint, reloads it, and shows
//! which frames of one test window carry the most weight.
//!
//! cargo run --release --example train_keyframe -- [seed] [clips] [epochs]

use readiness::eval::{build_datasets, evaluate_mae};
use readiness::features::{CorpusConfig, GeneratorConfig, SyntheticCorpus};
use readiness::models::{train, Checkpoint, Model, TrainConfig};
use readiness::{Matrix, ModelKind, StreamMask};

fn main() -> readiness::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let clips: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let mut gen = GeneratorConfig::default();
    gen.seed = seed;
    gen.corpus = CorpusConfig::with_total(clips)?;
    let corpus = SyntheticCorpus::generate(&gen)?;
    let feats: Vec<_> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), c.features.clone()))
        .collect();
    let data = build_datasets(&feats, &corpus.rated_ori()?, &corpus.splits, StreamMask::ALL)?;

    let mut cfg = TrainConfig::desk();
    cfg.seed = seed;
    cfg.epochs = epochs;
    let out = train(ModelKind::Keyframe, &data.train, &data.val, &cfg)?;
    for e in &out.log {
        println!("epoch {:>2}  train {:.4}  val {:.4}", e.epoch, e.train_mae, e.val_mae);
    }

    let path = std::env::temp_dir().join("keyframe_checkpoint.json");
    out.model.to_checkpoint(StreamMask::ALL, seed).save(&path)?;
    let model = Model::from_checkpoint(&Checkpoint::load(&path)?)?;
    println!("checkpoint {}", path.display());
    println!("test MAE {:.4}", evaluate_mae(&model, &data.test, cfg.eval_stride)?);

    let Model::Keyframe(params) = &model else {
        unreachable!("trained a key-frame model")
    };
    let mut window = Matrix::zeros(60, data.test.dim());
    data.test.fill(0, 450, &mut window);
    let detail = params.predict_detailed(&window)?;
    let mut order: Vec<usize> = (0..detail.weights.len()).collect();
    order.sort_by(|&a, &b| detail.weights[b].total_cmp(&detail.weights[a]));
    println!("\nwindow ending at frame 450 of {}: ORI {:.3}", data.test.clip_ids[0], 1.0 + 4.0 * detail.output);
    println!("top frames by weight");
    for &i in order.iter().take(5) {
        println!(
            "  offset {:>2}  weight {:.4}  frame rating {:.3}",
            i,
            detail.weights[i],
            1.0 + 4.0 * detail.ratings[i]
        );
    }
    Ok(())
}
