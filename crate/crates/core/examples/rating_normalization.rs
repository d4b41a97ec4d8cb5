//! Percentile normalization of two biased raters onto their combined
//! distribution, and the effect on absolute agreement.
//!
//! cargo run --example rating_normalization

use readiness::agreement::IccReport;
use readiness::ratings::{build_lookup_tables, RatingsMatrix, SegmentRating};

fn main() -> readiness::Result<()> {
    // Both raters see the same ten segments; "strict" rarely gives 5 and
    // "lax" rarely gives 1.
    let strict = [1, 1, 2, 2, 2, 3, 3, 4, 4, 5];
    let lax = [2, 3, 3, 4, 4, 4, 5, 5, 5, 5];
    let mut ratings = Vec::new();
    for (seg, (&s, &l)) in strict.iter().zip(&lax).enumerate() {
        ratings.push(SegmentRating::new("clip", seg, "strict", s)?);
        ratings.push(SegmentRating::new("clip", seg, "lax", l)?);
    }

    let tables = build_lookup_tables(&ratings)?;
    println!("raw  strict  lax");
    for v in 1..=5u8 {
        let s = tables.normalize(&SegmentRating::new("clip", 0, "strict", v)?)?;
        let l = tables.normalize(&SegmentRating::new("clip", 0, "lax", v)?)?;
        println!("{v:>3}  {:>6.3}  {:>5.3}", s.value, l.value);
    }

    let raw: Vec<_> = ratings.iter().map(SegmentRating::scored).collect();
    let normalized = tables.normalize_all(&ratings)?;
    for (name, scored) in [("raw", raw), ("normalized", normalized)] {
        let icc = IccReport::from_matrix(&RatingsMatrix::from_ratings(&scored)?, true)?;
        println!(
            "{name:<10} ICC(C,1) {:.3}  ICC(A,1) {:.3}",
            icc.icc_c1, icc.icc_a1
        );
    }
    Ok(())
}
