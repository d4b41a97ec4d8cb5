//! Two-way random-effects ANOVA (no interaction) and the intraclass
//! correlations ICC(C,1), ICC(A,1) and ICC(A,k).
//!
//! Ratings are modelled as `x_ij = mu + r_i + c_j + e_ij` with target effect
//! `r_i`, rater bias `c_j` and error `e_ij`. The mean squares of the ANOVA
//! table give the variance-component estimates
//!
//! ```text
//! sigma_r^2 = (MSR - MSE) / k
//! sigma_c^2 = (MSC - MSE) / n
//! sigma_e^2 = MSE
//! ```
//!
//! and the ICCs are computed from the mean squares directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratings::{self, RatingSets, RatingsMatrix, SegmentRating};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaDecomposition {
    pub n: usize,
    pub k: usize,
    pub grand_mean: f64,
    pub ssr: f64,
    pub ssc: f64,
    pub sse: f64,
    pub sst: f64,
    pub msr: f64,
    pub msc: f64,
    pub mse: f64,
    /// Unclamped; may be negative.
    pub sigma_r2: f64,
    pub sigma_c2: f64,
    pub sigma_e2: f64,
}

/// ANOVA on a complete ratings matrix.
pub fn two_way_anova(m: &RatingsMatrix) -> Result<AnovaDecomposition> {
    let rows = m.complete_rows()?;
    anova_from_rows(&rows)
}

/// ANOVA on dense rows (targets × raters).
///
/// Single pass: row sums, column sums and the sum of squares about the
/// first entry (a shift that keeps the total-sum-of-squares subtraction
/// well conditioned).
pub fn anova_from_rows(rows: &[Vec<f64>]) -> Result<AnovaDecomposition> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Invalid(format!(
            "ANOVA needs at least 2 targets and 2 raters, got {n}x{k}"
        )));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("ragged ratings matrix".into()));
    }
    let shift = rows[0][0];
    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; k];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("rating at ({i}, {j})")));
            }
            let d = x - shift;
            row_sums[i] += d;
            col_sums[j] += d;
            sum += d;
            sum_sq += d * d;
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let total = nf * kf;
    let mean_d = sum / total;
    let sst = (sum_sq - total * mean_d * mean_d).max(0.0);
    let ssr = kf
        * row_sums
            .iter()
            .map(|s| (s / kf - mean_d).powi(2))
            .sum::<f64>();
    let ssc = nf
        * col_sums
            .iter()
            .map(|s| (s / nf - mean_d).powi(2))
            .sum::<f64>();
    let sse = (sst - ssr - ssc).max(0.0);

    let msr = ssr / (nf - 1.0);
    let msc = ssc / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    Ok(AnovaDecomposition {
        n,
        k,
        grand_mean: shift + mean_d,
        ssr,
        ssc,
        sse,
        sst,
        msr,
        msc,
        mse,
        sigma_r2: (msr - mse) / kf,
        sigma_c2: (msc - mse) / nf,
        sigma_e2: mse,
    })
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Undefined(format!("{what}: zero denominator")));
    }
    Ok(num / den)
}

/// Consistency: `(MSR - MSE) / (MSR + (k-1) MSE)`.
pub fn icc_c1(a: &AnovaDecomposition) -> Result<f64> {
    let k = a.k as f64;
    ratio(a.msr - a.mse, a.msr + (k - 1.0) * a.mse, "ICC(C,1)")
}

/// Absolute agreement, single rater:
/// `(MSR - MSE) / (MSR + (k-1) MSE + (k/n)(MSC - MSE))`.
pub fn icc_a1(a: &AnovaDecomposition) -> Result<f64> {
    let (n, k) = (a.n as f64, a.k as f64);
    ratio(
        a.msr - a.mse,
        a.msr + (k - 1.0) * a.mse + (k / n) * (a.msc - a.mse),
        "ICC(A,1)",
    )
}

/// Absolute agreement of the mean of `k` raters,
/// `sigma_r^2 / (sigma_r^2 + (sigma_c^2 + sigma_e^2) / k)`. With `k` equal to
/// the matrix's rater count this is `(MSR - MSE) / (MSR + (MSC - MSE)/n)`.
pub fn icc_ak(a: &AnovaDecomposition, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("ICC(A,k) needs k >= 1".into()));
    }
    if k == a.k {
        let n = a.n as f64;
        return ratio(a.msr - a.mse, a.msr + (a.msc - a.mse) / n, "ICC(A,k)");
    }
    let kf = k as f64;
    ratio(
        a.sigma_r2,
        a.sigma_r2 + (a.sigma_c2 + a.sigma_e2) / kf,
        "ICC(A,k)",
    )
}

/// The three coefficients expressed through the variance components,
/// `(C,1)`, `(A,1)`, `(A,k)`. Algebraically identical to the mean-square
/// forms.
pub fn icc_from_components(a: &AnovaDecomposition) -> Result<(f64, f64, f64)> {
    let (r, c, e) = (a.sigma_r2, a.sigma_c2, a.sigma_e2);
    Ok((
        ratio(r, r + e, "ICC(C,1)")?,
        ratio(r, r + c + e, "ICC(A,1)")?,
        ratio(r, r + (c + e) / a.k as f64, "ICC(A,k)")?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccReport {
    pub icc_c1: f64,
    pub icc_a1: f64,
    pub icc_ak: f64,
    pub k_used: usize,
    pub clamped: bool,
}

impl IccReport {
    /// With `clamp`, each coefficient is floored at 0 (the estimators can go
    /// negative when MSE exceeds MSR).
    pub fn from_anova(a: &AnovaDecomposition, clamp: bool) -> Result<Self> {
        let fix = |v: f64| if clamp { v.clamp(0.0, 1.0) } else { v };
        Ok(Self {
            icc_c1: fix(icc_c1(a)?),
            icc_a1: fix(icc_a1(a)?),
            icc_ak: fix(icc_ak(a, a.k)?),
            k_used: a.k,
            clamped: clamp,
        })
    }

    pub fn from_matrix(m: &RatingsMatrix, clamp: bool) -> Result<Self> {
        Self::from_anova(&two_way_anova(m)?, clamp)
    }
}

/// One row of the agreement table as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccRow {
    pub set: String,
    pub normalized: bool,
    pub icc_c1: f64,
    pub icc_a1: f64,
    pub icc_ak: f64,
    pub n: usize,
    pub k: usize,
}

impl IccRow {
    pub fn new(set: impl Into<String>, normalized: bool, m: &RatingsMatrix) -> Result<Self> {
        let r = IccReport::from_matrix(m, true)?;
        Ok(Self {
            set: set.into(),
            normalized,
            icc_c1: r.icc_c1,
            icc_a1: r.icc_a1,
            icc_ak: r.icc_ak,
            n: m.n(),
            k: m.k(),
        })
    }
}

/// Agreement rows for the common set (all raters) and the expansion set
/// (pairs pooled by slot), raw and optionally after normalization with
/// lookup tables built from the common set.
pub fn icc_table(ratings: &[SegmentRating], with_normalized: bool) -> Result<Vec<IccRow>> {
    let sets = RatingSets::partition(ratings)?;
    let tables = if with_normalized {
        Some(ratings::build_lookup_tables(&RatingSets::select(ratings, &sets.common))?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let variants: &[bool] = if with_normalized { &[false, true] } else { &[false] };
    for &normalized in variants {
        let score = |rs: &[SegmentRating]| -> Result<Vec<ratings::ScoredRating>> {
            match (&tables, normalized) {
                (Some(t), true) => t.normalize_all(rs),
                _ => Ok(rs.iter().map(SegmentRating::scored).collect()),
            }
        };
        if !sets.common.is_empty() {
            let rs = RatingSets::select(ratings, &sets.common);
            rows.push(IccRow::new("common", normalized, &RatingsMatrix::from_ratings(&score(&rs)?)?)?);
        }
        if !sets.expansion.is_empty() {
            let rs = RatingSets::select(ratings, &sets.expansion);
            rows.push(IccRow::new("expansion", normalized, &RatingsMatrix::pooled_pairs(&score(&rs)?)?)?);
        }
    }
    Ok(rows)
}
