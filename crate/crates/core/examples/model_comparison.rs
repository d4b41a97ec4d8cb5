//! Trains the frame-wise baseline, the simple LSTM and the key-frame model
//! on the same synthetic corpus and compares test MAE and smoothness.
//!
//! cargo run --release --example model_comparison -- [seed] [clips] [epochs] [stride]

use std::time::Instant;

use readiness::eval::{build_datasets, constant_baseline_mae, dataset_smoothness, evaluate_mae};
use readiness::features::{CorpusConfig, GeneratorConfig, SyntheticCorpus};
use readiness::models::{train, ModelKind, TrainConfig};
use readiness::StreamMask;

fn main() -> readiness::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let seed = arg(0, 7) as u64;

    let mut cfg = GeneratorConfig::default();
    cfg.seed = seed;
    cfg.corpus = CorpusConfig::with_total(arg(1, 65))?;
    let corpus = SyntheticCorpus::generate(&cfg)?;
    let feats: Vec<_> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), c.features.clone()))
        .collect();
    let data = build_datasets(&feats, &corpus.rated_ori()?, &corpus.splits, StreamMask::ALL)?;

    let mut tc = TrainConfig::desk();
    tc.seed = seed;
    tc.epochs = arg(2, tc.epochs);
    tc.sample_stride = arg(3, tc.sample_stride);

    println!(
        "train {} / val {} / test {} clips",
        data.train.num_clips(),
        data.val.num_clips(),
        data.test.num_clips()
    );
    println!("constant predictor: test MAE {:.4}", constant_baseline_mae(&data.train, &data.test)?);
    for kind in ModelKind::ALL {
        let start = Instant::now();
        let out = train(kind, &data.train, &data.val, &tc)?;
        for e in &out.log {
            println!(
                "  {kind} epoch {:>2}: train {:.4}  val {:.4}  ({:.1}s)",
                e.epoch, e.train_mae, e.val_mae, e.seconds
            );
        }
        let mae = evaluate_mae(&out.model, &data.test, 1)?;
        let smooth = dataset_smoothness(&out.model, &data.test)?;
        println!(
            "{kind:<9} test MAE {mae:.4}  smoothness {smooth:.5}  best epoch {}  [{:.0}s]",
            out.best_epoch,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
