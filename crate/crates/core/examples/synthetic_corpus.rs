//! Generates a synthetic corpus and summarizes it: rater agreement before
//! and after normalization, and how key features track readiness.
//!
//! cargo run --release --example synthetic_corpus -- [seed] [clips]

use readiness::agreement::icc_table;
use readiness::eval::{correlate_features, stack_frames};
use readiness::features::{CorpusConfig, GeneratorConfig, SyntheticCorpus};
use readiness::StreamMask;

fn main() -> readiness::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let clips: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(65);

    let mut cfg = GeneratorConfig::default();
    cfg.seed = seed;
    cfg.corpus = CorpusConfig::with_total(clips)?;
    let corpus = SyntheticCorpus::generate(&cfg)?;
    println!(
        "{} clips, {} common, {} ratings",
        corpus.clips.len(),
        corpus.common_clips.len(),
        corpus.ratings.len()
    );

    println!("\n{:<10} {:>6} {:>8} {:>8} {:>8} {:>5}", "set", "norm", "C,1", "A,1", "A,k", "n");
    for row in icc_table(&corpus.ratings, true)? {
        println!(
            "{:<10} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>5}",
            row.set, row.normalized, row.icc_c1, row.icc_a1, row.icc_ak, row.n
        );
    }

    let feats: Vec<_> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), c.features.clone()))
        .collect();
    let (frames, ori) = stack_frames(&feats, &corpus.rated_ori()?)?;
    let table = correlate_features(&frames, &ori, &StreamMask::ALL.labels())?;
    println!("\nfeature correlations with readiness ({} frames)", ori.len());
    for c in &table {
        let r = c.r.map(|r| format!("{r:+.3}")).unwrap_or_else(|| "undefined".into());
        println!("  {:<28} {r}", c.feature);
    }
    Ok(())
}
