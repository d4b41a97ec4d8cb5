//! Splits, scoring, correlation analysis, stream ablations and smoothness.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{StreamMask, WindowDataset, FULL_DIM, WINDOW_LEN};
use crate::models::{self, Model, ModelKind, TrainConfig};
use crate::numerics::Matrix;
use crate::ratings::OriSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipAssignment {
    pub clip_id: String,
    pub split: Split,
    pub drive: usize,
}

/// Clip-to-split assignment, disjoint by drive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    assignment: BTreeMap<String, (Split, usize)>,
}

impl SplitSpec {
    pub fn new(assignment: BTreeMap<String, (Split, usize)>) -> Result<Self> {
        let spec = Self { assignment };
        spec.validate()?;
        Ok(spec)
    }

    /// Fails if any drive contributes clips to more than one split.
    pub fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<usize, (Split, &str)> = BTreeMap::new();
        for (clip, &(split, drive)) in &self.assignment {
            match owner.get(&drive) {
                Some(&(s, other)) if s != split => {
                    return Err(Error::Invalid(format!(
                        "drive {drive} appears in {} ({other}) and {} ({clip})",
                        s.name(),
                        split.name()
                    )))
                }
                _ => {
                    owner.insert(drive, (split, clip));
                }
            }
        }
        Ok(())
    }

    pub fn split_of(&self, clip_id: &str) -> Option<Split> {
        self.assignment.get(clip_id).map(|a| a.0)
    }

    pub fn clips(&self, split: Split) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, a)| a.0 == split)
            .map(|(c, _)| c.clone())
            .collect()
    }

    pub fn drives(&self, split: Split) -> BTreeSet<usize> {
        self.assignment
            .values()
            .filter(|a| a.0 == split)
            .map(|a| a.1)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<ClipAssignment> = self
            .assignment
            .iter()
            .map(|(c, &(split, drive))| ClipAssignment {
                clip_id: c.clone(),
                split,
                drive,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rows: Vec<ClipAssignment> = serde_json::from_str(s)?;
        let mut assignment = BTreeMap::new();
        for r in rows {
            if assignment.insert(r.clip_id.clone(), (r.split, r.drive)).is_some() {
                return Err(Error::Invalid(format!("clip {} assigned twice", r.clip_id)));
            }
        }
        Self::new(assignment)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Window datasets for the three splits, projected to one stream mask.
#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: WindowDataset,
    pub val: WindowDataset,
    pub test: WindowDataset,
}

impl SplitDatasets {
    pub fn get(&self, split: Split) -> &WindowDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Pairs full-schema clip features with their readiness series and splits
/// them. Clips without a split assignment or target are skipped.
pub fn build_datasets(
    clips: &[(String, Matrix)],
    targets: &[OriSeries],
    splits: &SplitSpec,
    mask: StreamMask,
) -> Result<SplitDatasets> {
    splits.validate()?;
    let by_id: BTreeMap<&str, &OriSeries> = targets.iter().map(|o| (o.clip_id.as_str(), o)).collect();
    let mut out = SplitDatasets {
        train: WindowDataset::new(mask),
        val: WindowDataset::new(mask),
        test: WindowDataset::new(mask),
    };
    for (id, feats) in clips {
        let (Some(split), Some(ori)) = (splits.split_of(id), by_id.get(id.as_str())) else {
            continue;
        };
        let ds = match split {
            Split::Train => &mut out.train,
            Split::Val => &mut out.val,
            Split::Test => &mut out.test,
        };
        ds.push_clip(id, feats, ori)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// `mean |4 (pred - target)|`, i.e. MAE on the 1-5 scale from unit values.
pub fn mae_five_point(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Invalid("empty test set".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let s: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(4.0 * s / preds.len() as f64)
}

/// Per-frame predictions for one clip of a dataset.
pub fn predict_clip(model: &Model, data: &WindowDataset, clip: usize) -> Result<Vec<f64>> {
    let mut buf = Matrix::zeros(WINDOW_LEN, data.dim());
    (0..data.features[clip].rows())
        .map(|t| {
            data.fill(clip, t, &mut buf);
            model.predict(&buf)
        })
        .collect()
}

/// Per-frame predictions for every clip.
pub fn predict_all(model: &Model, data: &WindowDataset) -> Result<Vec<Vec<f64>>> {
    (0..data.num_clips()).map(|c| predict_clip(model, data, c)).collect()
}

/// MAE over every `stride`-th window of every clip.
pub fn evaluate_mae(model: &Model, data: &WindowDataset, stride: usize) -> Result<f64> {
    if model.input_dim() != data.dim() {
        return Err(Error::Shape(format!(
            "model expects {} inputs, data has {}",
            model.input_dim(),
            data.dim()
        )));
    }
    let idx = data.index(stride);
    let mut buf = Matrix::zeros(WINDOW_LEN, data.dim());
    let mut preds = Vec::with_capacity(idx.len());
    let mut targets = Vec::with_capacity(idx.len());
    for &(c, t) in &idx {
        data.fill(c, t, &mut buf);
        preds.push(model.predict(&buf)?);
        targets.push(data.target(c, t));
    }
    mae_five_point(&preds, &targets)
}

/// MAE of predicting the mean training target everywhere.
pub fn constant_baseline_mae(train: &WindowDataset, test: &WindowDataset) -> Result<f64> {
    let all: Vec<f64> = train.targets.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let targets: Vec<f64> = test.targets.iter().flatten().copied().collect();
    mae_five_point(&vec![mean; targets.len()], &targets)
}

/// Mean absolute frame-to-frame change of a prediction series.
pub fn smoothness_diagnostic(preds: &[f64]) -> Result<f64> {
    if preds.len() < 2 {
        return Err(Error::Invalid("smoothness needs at least 2 frames".into()));
    }
    let s: f64 = preds.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(s / (preds.len() - 1) as f64)
}

/// Mean of per-clip smoothness over a dataset.
pub fn dataset_smoothness(model: &Model, data: &WindowDataset) -> Result<f64> {
    let per_clip = predict_all(model, data)?
        .iter()
        .map(|p| smoothness_diagnostic(p))
        .collect::<Result<Vec<f64>>>()?;
    if per_clip.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    Ok(per_clip.iter().sum::<f64>() / per_clip.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub clip_id: String,
    pub frame: usize,
    pub ground_truth: f64,
    pub prediction: f64,
    pub model: String,
}

/// Predictions on the 1-5 scale for plotting.
pub fn prediction_rows(model: &Model, data: &WindowDataset) -> Result<Vec<PredictionRow>> {
    let mut out = Vec::new();
    for (c, preds) in predict_all(model, data)?.into_iter().enumerate() {
        for (t, p) in preds.into_iter().enumerate() {
            out.push(PredictionRow {
                clip_id: data.clip_ids[c].clone(),
                frame: t,
                ground_truth: crate::ratings::from_unit(data.target(c, t)),
                prediction: crate::ratings::from_unit(p),
                model: model.kind().name().to_string(),
            });
        }
    }
    Ok(out)
}

pub fn write_predictions_csv<W: Write>(w: W, rows: &[PredictionRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    /// `None` when the feature or the target has zero variance.
    pub r: Option<f64>,
}

/// Pearson correlation; `None` for a zero-variance input.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Invalid("correlation needs at least 2 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Frame-wise correlation of each column with the readiness series.
pub fn correlate_features(frames: &Matrix, ori: &[f64], labels: &[String]) -> Result<Vec<FeatureCorrelation>> {
    if labels.len() != frames.cols() {
        return Err(Error::Shape(format!(
            "{} labels for {} columns",
            labels.len(),
            frames.cols()
        )));
    }
    if frames.rows() != ori.len() {
        return Err(Error::Shape(format!("{} frames vs {} targets", frames.rows(), ori.len())));
    }
    let mut col = vec![0.0; frames.rows()];
    labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            for (t, v) in col.iter_mut().enumerate() {
                *v = frames.get(t, j);
            }
            Ok(FeatureCorrelation {
                feature: label.clone(),
                r: pearson(&col, ori)?,
            })
        })
        .collect()
}

/// Stacks full-schema clips and their targets (1-5 scale) frame by frame.
pub fn stack_frames(clips: &[(String, Matrix)], targets: &[OriSeries]) -> Result<(Matrix, Vec<f64>)> {
    let by_id: BTreeMap<&str, &OriSeries> = targets.iter().map(|o| (o.clip_id.as_str(), o)).collect();
    let mut data = Vec::new();
    let mut ys = Vec::new();
    for (id, m) in clips {
        let Some(ori) = by_id.get(id.as_str()) else { continue };
        if ori.values.len() != m.rows() {
            return Err(Error::Shape(format!("clip {id}: frame count mismatch")));
        }
        data.extend_from_slice(m.data());
        ys.extend_from_slice(&ori.values);
    }
    Ok((Matrix::new(ys.len(), FULL_DIM, data)?, ys))
}

pub fn write_correlations_csv<W: Write>(w: W, rows: &[FeatureCorrelation]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["feature", "r"])?;
    for r in rows {
        let v = r.r.map(|v| v.to_string()).unwrap_or_default();
        wr.write_record([r.feature.as_str(), v.as_str()])?;
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationSpec {
    pub streams: StreamMask,
    pub model: ModelKind,
}

/// The seven stream combinations of the feature-ablation table:
/// gaze, hand, pose, foot, gaze+hand, gaze+hand+pose, all.
pub fn table2_grid() -> Vec<StreamMask> {
    ["gaze", "hand", "pose", "foot", "gaze,hand", "gaze,hand,pose", "gaze,hand,pose,foot"]
        .iter()
        .map(|s| s.parse().expect("valid grid entry"))
        .collect()
}

pub fn ablation_specs(models: &[ModelKind]) -> Vec<AblationSpec> {
    table2_grid()
        .into_iter()
        .flat_map(|streams| models.iter().map(move |&model| AblationSpec { streams, model }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub gaze: u8,
    pub hand: u8,
    pub pose: u8,
    pub foot: u8,
    pub model: String,
    pub mae: f64,
}

/// Trains and scores one model per spec, every cell with the same seed.
pub fn run_ablation(
    specs: &[AblationSpec],
    clips: &[(String, Matrix)],
    targets: &[OriSeries],
    splits: &SplitSpec,
    config: &TrainConfig,
    test_stride: usize,
) -> Result<Vec<AblationRow>> {
    if specs.is_empty() {
        return Err(Error::Invalid("empty ablation grid".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let data = build_datasets(clips, targets, splits, spec.streams)?;
        let outcome = models::train(spec.model, &data.train, &data.val, config)?;
        let mae = evaluate_mae(&outcome.model, &data.test, test_stride)?;
        let [g, h, p, f] = spec.streams.table_flags();
        rows.push(AblationRow {
            gaze: g as u8,
            hand: h as u8,
            pose: p as u8,
            foot: f as u8,
            model: spec.model.name().to_string(),
            mae,
        });
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(w: W, rows: &[AblationRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mae_fixtures() {
        assert_eq!(mae_five_point(&[0.2, 0.9], &[0.2, 0.9]).unwrap(), 0.0);
        assert_eq!(mae_five_point(&[0.5; 4], &[1.0; 4]).unwrap(), 2.0);
        assert!(mae_five_point(&[], &[]).is_err());
        assert!(mae_five_point(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn smoothness_fixtures() {
        assert_eq!(smoothness_diagnostic(&[0.3; 10]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        assert_eq!(smoothness_diagnostic(&alt).unwrap(), 1.0);
        assert!(smoothness_diagnostic(&[0.5]).is_err());
    }

    #[test]
    fn correlation_fixtures() {
        let y: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let m = Matrix::from_fn(20, 3, |r, c| match c {
            0 => y[r],
            1 => neg[r],
            _ => 2.0,
        })
        .unwrap();
        let labels = vec!["a".to_string(), "b".into(), "c".into()];
        let rs = correlate_features(&m, &y, &labels).unwrap();
        assert!((rs[0].r.unwrap() - 1.0).abs() < 1e-12);
        assert!((rs[1].r.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(rs[2].r, None);
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn split_rejects_shared_drive() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), (Split::Train, 0));
        a.insert("y".to_string(), (Split::Test, 0));
        assert!(SplitSpec::new(a).is_err());
        let mut b = BTreeMap::new();
        b.insert("x".to_string(), (Split::Train, 0));
        b.insert("y".to_string(), (Split::Test, 1));
        let s = SplitSpec::new(b).unwrap();
        assert_eq!(SplitSpec::from_json(&s.to_json().unwrap()).unwrap(), s);
        assert_eq!(s.clips(Split::Test), vec!["y"]);
    }

    #[test]
    fn grid_shape() {
        let g = table2_grid();
        assert_eq!(g.len(), 7);
        assert_eq!(g[1].table_flags(), [false, true, false, false]);
        assert_eq!(g[6], StreamMask::ALL);
        assert_eq!(ablation_specs(&ModelKind::ALL).len(), 21);
    }

    proptest! {
        #[test]
        fn self_correlation_is_one(xs in proptest::collection::vec(-100.0f64..100.0, 3..50)) {
            prop_assume!(xs.iter().any(|&v| (v - xs[0]).abs() > 1e-6));
            let r = pearson(&xs, &xs).unwrap().unwrap();
            prop_assert!((r - 1.0).abs() < 1e-12);
        }

        #[test]
        fn mae_is_order_invariant(pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40), seed in 0u64..100) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let mut idx: Vec<usize> = (0..p.len()).collect();
            crate::numerics::RngState::new(seed).shuffle(&mut idx);
            let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let t2: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            let a = mae_five_point(&p, &t).unwrap();
            let b = mae_five_point(&p2, &t2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
