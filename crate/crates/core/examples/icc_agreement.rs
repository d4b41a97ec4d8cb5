//! Intraclass correlation on small hand-made rating matrices.
//!
//! cargo run --example icc_agreement

use readiness::agreement::{anova_from_rows, IccReport};

fn report(name: &str, rows: &[Vec<f64>]) -> readiness::Result<()> {
    let a = anova_from_rows(rows)?;
    let icc = IccReport::from_anova(&a, false)?;
    println!("{name}: {} targets x {} raters", a.n, a.k);
    println!("  MSR {:.4}  MSC {:.4}  MSE {:.4}", a.msr, a.msc, a.mse);
    println!(
        "  ICC(C,1) {:.4}  ICC(A,1) {:.4}  ICC(A,{}) {:.4}",
        icc.icc_c1, icc.icc_a1, a.k, icc.icc_ak
    );
    Ok(())
}

fn main() -> readiness::Result<()> {
    // the second rater is always one point higher: consistent, not absolute
    report("constant shift", &[vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 4.0]])?;

    report(
        "near agreement",
        &[
            vec![4.0, 4.0, 5.0],
            vec![2.0, 2.0, 2.0],
            vec![3.0, 4.0, 3.0],
            vec![1.0, 1.0, 2.0],
            vec![5.0, 5.0, 5.0],
        ],
    )?;

    report(
        "a lenient rater",
        &[
            vec![2.0, 2.0, 4.0],
            vec![1.0, 2.0, 3.0],
            vec![3.0, 3.0, 5.0],
            vec![2.0, 1.0, 4.0],
            vec![4.0, 4.0, 5.0],
        ],
    )?;
    Ok(())
}
