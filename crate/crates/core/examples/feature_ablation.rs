//! Trains one model per feature-stream combination and prints test MAE.
//!
//! cargo run --release --example feature_ablation -- [model] [seed] [clips] [epochs]
//!
//! The linear baseline finishes in seconds; the recurrent models take a
//! few minutes per row at the defaults.

use readiness::eval::{ablation_specs, run_ablation};
use readiness::features::{CorpusConfig, GeneratorConfig, SyntheticCorpus};
use readiness::models::TrainConfig;
use readiness::ModelKind;

fn main() -> readiness::Result<()> {
    let mut args = std::env::args().skip(1);
    let model: ModelKind = args.next().unwrap_or_else(|| "linear".into()).parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let clips: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let mut gen = GeneratorConfig::default();
    gen.seed = seed;
    gen.corpus = CorpusConfig::with_total(clips)?;
    let corpus = SyntheticCorpus::generate(&gen)?;
    let feats: Vec<_> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), c.features.clone()))
        .collect();

    let mut cfg = TrainConfig::desk();
    cfg.seed = seed;
    cfg.epochs = epochs;
    let rows = run_ablation(
        &ablation_specs(&[model]),
        &feats,
        &corpus.rated_ori()?,
        &corpus.splits,
        &cfg,
        cfg.eval_stride,
    )?;

    println!("gaze hand pose foot  model     MAE");
    for r in rows {
        println!(
            "{:>4} {:>4} {:>4} {:>4}  {:<8} {:.4}",
            r.gaze, r.hand, r.pose, r.foot, r.model, r.mae
        );
    }
    Ok(())
}
