//! Take-over readiness estimation.
//!
//! Segment ratings from several raters are normalized through per-rater
//! percentile lookup tables, averaged and interpolated into a per-frame
//! readiness index (ORI). Inter-rater agreement is measured with two-way
//! intraclass correlations. Sequence models regress the index from 54-d
//! frame-wise driver features, and a synthetic generator stands in for
//! recorded drives.
//!
//! ```
//! use readiness::agreement::{anova_from_rows, icc_a1, icc_c1};
//!
//! let a = anova_from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 4.0]]).unwrap();
//! assert!((icc_c1(&a).unwrap() - 1.0).abs() < 1e-12);
//! assert!((icc_a1(&a).unwrap() - 2.0 / 3.0).abs() < 1e-12);
//! ```

pub mod agreement;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod numerics;
pub mod ratings;

pub use error::{Error, Result};
pub use features::{Stream, StreamMask};
pub use models::{Model, ModelKind};
pub use numerics::{Matrix, RngState};
