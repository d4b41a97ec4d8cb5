//! Segment ratings, rater-bias normalization and the per-frame readiness
//! index (ORI).
//!
//! Raters score every 2 s segment of a 30 s clip on a discrete 1–5 scale.
//! Each rater's scores on the common set form a sorted lookup table; a
//! combined table pools all raters. A raw score is normalized by finding the
//! empirical-CDF interval it occupies in the rater's table and averaging the
//! combined-table values whose CDF positions fall in that interval.
//! Normalized scores are averaged across raters per segment and a natural
//! cubic spline through the segment centres yields the per-frame ORI.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAME_RATE: usize = 30;
pub const SEGMENT_FRAMES: usize = 2 * FRAME_RATE;
pub const CLIP_SEGMENTS: usize = 15;
pub const CLIP_FRAMES: usize = CLIP_SEGMENTS * SEGMENT_FRAMES;
pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

/// Owner label used for the pooled table.
pub const COMBINED_OWNER: &str = "COMBINED";

/// One rater's discrete score for one 2 s segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRating {
    pub clip_id: String,
    pub segment_index: usize,
    pub rater_id: String,
    pub value: u8,
}

impl SegmentRating {
    pub fn new(
        clip_id: impl Into<String>,
        segment_index: usize,
        rater_id: impl Into<String>,
        value: u8,
    ) -> Result<Self> {
        let r = Self {
            clip_id: clip_id.into(),
            segment_index,
            rater_id: rater_id.into(),
            value,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_RATING..=MAX_RATING).contains(&self.value) {
            return Err(Error::Invalid(format!(
                "rating {} outside 1..=5 (clip {}, segment {}, rater {})",
                self.value, self.clip_id, self.segment_index, self.rater_id
            )));
        }
        if self.segment_index >= CLIP_SEGMENTS {
            return Err(Error::Invalid(format!(
                "segment index {} outside 0..{CLIP_SEGMENTS} (clip {})",
                self.segment_index, self.clip_id
            )));
        }
        Ok(())
    }

    pub fn scored(&self) -> ScoredRating {
        ScoredRating {
            clip_id: self.clip_id.clone(),
            segment_index: self.segment_index,
            rater_id: self.rater_id.clone(),
            value: f64::from(self.value),
        }
    }
}

/// A rating carried on the continuous scale (raw or normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRating {
    pub clip_id: String,
    pub segment_index: usize,
    pub rater_id: String,
    pub value: f64,
}

/// Sorted pooled ratings of one rater (or of all raters).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupTable {
    pub owner: String,
    pub values: Vec<u8>,
}

impl LookupTable {
    pub fn new(owner: impl Into<String>, mut values: Vec<u8>) -> Self {
        values.sort_unstable();
        Self {
            owner: owner.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn count_below(&self, v: u8) -> usize {
        self.values.partition_point(|&x| x < v)
    }

    fn count_at_most(&self, v: u8) -> usize {
        self.values.partition_point(|&x| x <= v)
    }

    /// Quantile function linearly interpolated through `(i/M, c_i)`,
    /// `i = 1..=M`, held constant below `1/M`.
    fn quantile(&self, p: f64) -> f64 {
        let m = self.values.len();
        let pos = p * m as f64; // 1-based position
        if pos <= 1.0 {
            return f64::from(self.values[0]);
        }
        if pos >= m as f64 {
            return f64::from(self.values[m - 1]);
        }
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let a = f64::from(self.values[lo - 1]);
        let b = f64::from(self.values[lo]);
        a + frac * (b - a)
    }
}

/// Per-rater tables plus the combined table, all built from the common set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTables {
    pub raters: BTreeMap<String, LookupTable>,
    pub combined: LookupTable,
}

impl LookupTables {
    pub fn rater(&self, rater_id: &str) -> Result<&LookupTable> {
        self.raters
            .get(rater_id)
            .ok_or_else(|| Error::UnknownRater(rater_id.to_string()))
    }

    /// Serialized form: a JSON array of `{owner, values}`, raters first
    /// (sorted by id), combined last.
    pub fn to_json(&self) -> Result<String> {
        let all: Vec<&LookupTable> = self.raters.values().chain([&self.combined]).collect();
        Ok(serde_json::to_string_pretty(&all)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let all: Vec<LookupTable> = serde_json::from_str(s)?;
        let mut raters = BTreeMap::new();
        let mut combined = None;
        for t in all {
            if t.owner == COMBINED_OWNER {
                combined = Some(t);
            } else {
                raters.insert(t.owner.clone(), t);
            }
        }
        let combined =
            combined.ok_or_else(|| Error::Invalid("no COMBINED lookup table".into()))?;
        Ok(Self { raters, combined })
    }

    /// Normalizes one rating with its rater's table.
    pub fn normalize(&self, rating: &SegmentRating) -> Result<ScoredRating> {
        let table = self.rater(&rating.rater_id)?;
        Ok(ScoredRating {
            value: normalize_rating(rating.value, table, &self.combined)?,
            ..rating.scored()
        })
    }

    pub fn normalize_all(&self, ratings: &[SegmentRating]) -> Result<Vec<ScoredRating>> {
        ratings.iter().map(|r| self.normalize(r)).collect()
    }
}

/// Checks that every rater present rated every (clip, segment) present.
fn check_complete(ratings: &[SegmentRating]) -> Result<()> {
    let raters: BTreeSet<&str> = ratings.iter().map(|r| r.rater_id.as_str()).collect();
    let targets: BTreeSet<(&str, usize)> = ratings
        .iter()
        .map(|r| (r.clip_id.as_str(), r.segment_index))
        .collect();
    let mut seen: BTreeSet<(&str, usize, &str)> = BTreeSet::new();
    for r in ratings {
        if !seen.insert((r.clip_id.as_str(), r.segment_index, r.rater_id.as_str())) {
            return Err(Error::Invalid(format!(
                "duplicate rating for clip {} segment {} by rater {}",
                r.clip_id, r.segment_index, r.rater_id
            )));
        }
    }
    for &(clip, seg) in &targets {
        for &rater in &raters {
            if !seen.contains(&(clip, seg, rater)) {
                return Err(Error::MissingCell {
                    target: format!("{clip}:{seg}"),
                    rater: rater.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Builds one sorted table per rater and a combined table from the common
/// set. Every rater must have rated every segment of the set.
pub fn build_lookup_tables(common_set: &[SegmentRating]) -> Result<LookupTables> {
    if common_set.is_empty() {
        return Err(Error::Invalid("empty common set".into()));
    }
    for r in common_set {
        r.validate()?;
    }
    check_complete(common_set)?;
    let mut per_rater: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for r in common_set {
        per_rater.entry(r.rater_id.clone()).or_default().push(r.value);
    }
    let combined = LookupTable::new(
        COMBINED_OWNER,
        common_set.iter().map(|r| r.value).collect(),
    );
    let raters = per_rater
        .into_iter()
        .map(|(id, vals)| (id.clone(), LookupTable::new(id, vals)))
        .collect();
    Ok(LookupTables { raters, combined })
}

/// Maps a raw score onto the combined distribution.
///
/// The score occupies the half-open CDF interval `(F(v-), F(v)]` of the
/// rater's table. The result is the mean of combined-table entries whose
/// positions `i/M` lie in that interval. When no entry does (or the score is
/// absent from the rater's table) the combined quantile function is
/// interpolated at the interval midpoint. Scores outside the rater's range
/// are clamped to its extremes first.
pub fn normalize_rating(value: u8, rater: &LookupTable, combined: &LookupTable) -> Result<f64> {
    if rater.is_empty() || combined.is_empty() {
        return Err(Error::Invalid("empty lookup table".into()));
    }
    if !(MIN_RATING..=MAX_RATING).contains(&value) {
        return Err(Error::Invalid(format!("rating {value} outside 1..=5")));
    }
    let lo_val = rater.values[0];
    let hi_val = rater.values[rater.len() - 1];
    let v = value.clamp(lo_val, hi_val);

    let m_r = rater.len();
    let m_c = combined.len();
    let below = rater.count_below(v);
    let at_most = rater.count_at_most(v);

    // positions i (1-based) with below/m_r < i/m_c <= at_most/m_r
    let first = (below * m_c) / m_r + 1;
    let last = (at_most * m_c) / m_r;
    if below < at_most && first <= last {
        let sum: u64 = combined.values[first - 1..last]
            .iter()
            .map(|&x| u64::from(x))
            .sum();
        return Ok(sum as f64 / (last - first + 1) as f64);
    }
    let mid = (below + at_most) as f64 / (2.0 * m_r as f64);
    Ok(combined.quantile(mid))
}

/// Mean score per segment, per clip. Segments must be contiguous from 0.
pub fn average_across_raters(ratings: &[ScoredRating]) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut acc: BTreeMap<&str, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in ratings {
        if !r.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "rating for clip {} segment {}",
                r.clip_id, r.segment_index
            )));
        }
        let e = acc
            .entry(r.clip_id.as_str())
            .or_default()
            .entry(r.segment_index)
            .or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    let mut out = BTreeMap::new();
    for (clip, segs) in acc {
        let n = segs.keys().next_back().map_or(0, |&s| s + 1);
        let mut means = Vec::with_capacity(n);
        for s in 0..n {
            let (sum, count) = segs.get(&s).copied().ok_or_else(|| {
                Error::Invalid(format!("clip {clip} segment {s} has no ratings"))
            })?;
            means.push(sum / count as f64);
        }
        out.insert(clip.to_string(), means);
    }
    Ok(out)
}

/// Natural cubic spline through `(xs[i], ys[i])` with strictly increasing `xs`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::Shape("spline knots and values differ in length".into()));
        }
        if n < 2 {
            return Err(Error::Invalid("spline needs at least 2 knots".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("spline knots must be strictly increasing".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spline input".into()));
        }
        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let mut second = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 1..m {
                let lower = xs[i + 1] - xs[i]; // h_{i} = lower diagonal entry of row i
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
            }
        }
        Ok(Self { xs, ys, second })
    }

    /// Evaluates inside the knot range; outside it the end values are held
    /// (zero end slope extrapolation).
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }
}

/// Per-frame readiness at 30 fps, on the 1–5 scale and on the unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriSeries {
    pub clip_id: String,
    pub frame_rate: usize,
    pub values: Vec<f64>,
    pub unit_values: Vec<f64>,
}

impl OriSeries {
    /// Builds a series from 1–5 values, filling the unit-scaled twin.
    pub fn from_values(clip_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let unit_values = values.iter().map(|&v| to_unit(v)).collect::<Result<_>>()?;
        Ok(Self {
            clip_id: clip_id.into(),
            frame_rate: FRAME_RATE,
            values,
            unit_values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `(v - 1) / 4`.
pub fn to_unit(v: f64) -> Result<f64> {
    if !(1.0..=5.0).contains(&v) {
        return Err(Error::Invalid(format!("readiness {v} outside [1, 5]")));
    }
    Ok((v - 1.0) / 4.0)
}

/// `1 + 4u`.
pub fn from_unit(u: f64) -> f64 {
    1.0 + 4.0 * u
}

/// Recomputes the unit-scaled values of a series.
pub fn unit_scale(ori: &OriSeries) -> Result<OriSeries> {
    OriSeries::from_values(ori.clip_id.clone(), ori.values.clone())
}

/// Frame index of the centre of segment `i`.
pub fn segment_center(i: usize) -> usize {
    i * SEGMENT_FRAMES + SEGMENT_FRAMES / 2
}

/// Interpolates per-segment means to one value per frame with a natural
/// cubic spline through the segment centres, holding the end values
/// outside the first/last centre and clamping to `[1, 5]`.
pub fn interpolate_ori(clip_id: impl Into<String>, segment_means: &[f64]) -> Result<OriSeries> {
    let n = segment_means.len();
    if n < 4 {
        return Err(Error::Invalid(format!(
            "cubic interpolation needs at least 4 segments, got {n}"
        )));
    }
    if segment_means.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("segment means".into()));
    }
    if segment_means.iter().any(|v| !(1.0..=5.0).contains(v)) {
        return Err(Error::Invalid("segment means must lie in [1, 5]".into()));
    }
    let xs = (0..n).map(|i| segment_center(i) as f64).collect();
    let spline = NaturalSpline::new(xs, segment_means.to_vec())?;
    let values = (0..n * SEGMENT_FRAMES)
        .map(|f| spline.eval(f as f64).clamp(1.0, 5.0))
        .collect();
    OriSeries::from_values(clip_id, values)
}

/// The full rating-to-ORI pipeline: normalize with the given tables (when
/// present), average across raters, interpolate per clip.
pub fn build_ori(
    ratings: &[SegmentRating],
    tables: Option<&LookupTables>,
) -> Result<Vec<OriSeries>> {
    let scored = match tables {
        Some(t) => t.normalize_all(ratings)?,
        None => ratings.iter().map(SegmentRating::scored).collect(),
    };
    average_across_raters(&scored)?
        .into_iter()
        .map(|(clip, means)| interpolate_ori(clip, &means))
        .collect()
}

// ---------------------------------------------------------------------------
// Rating sets and matrices
// ---------------------------------------------------------------------------

/// Clips rated by the whole pool (common set) vs. by a pair (expansion set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingSets {
    pub pool: Vec<String>,
    pub common: Vec<String>,
    pub expansion: Vec<String>,
}

impl RatingSets {
    /// Partitions clips by how many raters scored them. A clip scored by the
    /// whole pool is common; one scored by exactly two raters (pool > 2) is
    /// expansion. Anything else, and any hole inside a clip, is reported as
    /// a missing cell.
    pub fn partition(ratings: &[SegmentRating]) -> Result<Self> {
        let pool: BTreeSet<&str> = ratings.iter().map(|r| r.rater_id.as_str()).collect();
        let mut by_clip: BTreeMap<&str, Vec<SegmentRating>> = BTreeMap::new();
        for r in ratings {
            by_clip.entry(r.clip_id.as_str()).or_default().push(r.clone());
        }
        let mut common = Vec::new();
        let mut expansion = Vec::new();
        for (clip, rs) in &by_clip {
            let raters: BTreeSet<&str> = rs.iter().map(|r| r.rater_id.as_str()).collect();
            if raters.len() == pool.len() {
                common.push(clip.to_string());
            } else if raters.len() == 2 {
                expansion.push(clip.to_string());
            } else {
                let absent = pool.difference(&raters).next().copied().unwrap_or_default();
                let seg = rs.iter().map(|r| r.segment_index).min().unwrap_or(0);
                return Err(Error::MissingCell {
                    target: format!("{clip}:{seg}"),
                    rater: absent.to_string(),
                });
            }
            check_complete(rs)?;
        }
        Ok(Self {
            pool: pool.into_iter().map(String::from).collect(),
            common,
            expansion,
        })
    }

    /// Ratings belonging to the listed clips.
    pub fn select(ratings: &[SegmentRating], clips: &[String]) -> Vec<SegmentRating> {
        let set: BTreeSet<&str> = clips.iter().map(String::as_str).collect();
        ratings
            .iter()
            .filter(|r| set.contains(r.clip_id.as_str()))
            .cloned()
            .collect()
    }
}

/// `n` targets × `k` raters with optional cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    pub targets: Vec<String>,
    pub raters: Vec<String>,
    cells: Vec<Option<f64>>,
}

impl RatingsMatrix {
    pub fn new(targets: Vec<String>, raters: Vec<String>, cells: Vec<Option<f64>>) -> Result<Self> {
        if cells.len() != targets.len() * raters.len() {
            return Err(Error::Shape(format!(
                "{} cells for {}x{} matrix",
                cells.len(),
                targets.len(),
                raters.len()
            )));
        }
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ratings matrix".into()));
        }
        let m = Self {
            targets,
            raters,
            cells,
        };
        for i in 0..m.n() {
            if (0..m.k()).all(|j| m.get(i, j).is_none()) {
                return Err(Error::Invalid(format!("target `{}` has no ratings", m.targets[i])));
            }
        }
        for j in 0..m.k() {
            if (0..m.n()).all(|i| m.get(i, j).is_none()) {
                return Err(Error::Invalid(format!("rater `{}` has no ratings", m.raters[j])));
            }
        }
        Ok(m)
    }

    /// Complete matrix from dense rows; targets/raters get positional labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(
            (0..rows.len()).map(|i| format!("t{i}")).collect(),
            (0..k).map(|j| format!("r{j}")).collect(),
            rows.iter().flatten().map(|&v| Some(v)).collect(),
        )
    }

    /// Targets are `(clip, segment)` pairs, columns are rater ids.
    pub fn from_ratings(ratings: &[ScoredRating]) -> Result<Self> {
        let targets: BTreeSet<(&str, usize)> = ratings
            .iter()
            .map(|r| (r.clip_id.as_str(), r.segment_index))
            .collect();
        let raters: BTreeSet<&str> = ratings.iter().map(|r| r.rater_id.as_str()).collect();
        let t_idx: BTreeMap<(&str, usize), usize> =
            targets.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let r_idx: BTreeMap<&str, usize> = raters.iter().enumerate().map(|(j, &r)| (r, j)).collect();
        let k = raters.len();
        let mut cells = vec![None; targets.len() * k];
        for r in ratings {
            let i = t_idx[&(r.clip_id.as_str(), r.segment_index)];
            let j = r_idx[r.rater_id.as_str()];
            cells[i * k + j] = Some(r.value);
        }
        Self::new(
            targets.iter().map(|(c, s)| format!("{c}:{s}")).collect(),
            raters.iter().map(|r| r.to_string()).collect(),
            cells,
        )
    }

    /// Pair-rated clips pooled into one complete two-column matrix: within
    /// each clip the two raters (sorted by id) fill slot 0 and slot 1, and
    /// the clips' rows are concatenated.
    pub fn pooled_pairs(ratings: &[ScoredRating]) -> Result<Self> {
        let mut by_clip: BTreeMap<&str, Vec<&ScoredRating>> = BTreeMap::new();
        for r in ratings {
            by_clip.entry(r.clip_id.as_str()).or_default().push(r);
        }
        let mut targets = Vec::new();
        let mut cells = Vec::new();
        for (clip, rs) in by_clip {
            let raters: BTreeSet<&str> = rs.iter().map(|r| r.rater_id.as_str()).collect();
            if raters.len() != 2 {
                return Err(Error::Invalid(format!(
                    "clip {clip} has {} raters, expected 2",
                    raters.len()
                )));
            }
            let raters: Vec<&str> = raters.into_iter().collect();
            let mut segs: BTreeMap<usize, [Option<f64>; 2]> = BTreeMap::new();
            for r in &rs {
                let slot = usize::from(r.rater_id == raters[1]);
                segs.entry(r.segment_index).or_default()[slot] = Some(r.value);
            }
            for (seg, pair) in segs {
                for (slot, v) in pair.iter().enumerate() {
                    if v.is_none() {
                        return Err(Error::MissingCell {
                            target: format!("{clip}:{seg}"),
                            rater: raters[slot].to_string(),
                        });
                    }
                }
                targets.push(format!("{clip}:{seg}"));
                cells.extend(pair);
            }
        }
        Self::new(targets, vec!["slot0".into(), "slot1".into()], cells)
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn k(&self) -> usize {
        self.raters.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i * self.k() + j]
    }

    /// Dense rows, or the first missing cell as an error.
    pub fn complete_rows(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.n())
            .map(|i| {
                (0..self.k())
                    .map(|j| {
                        self.get(i, j).ok_or_else(|| Error::MissingCell {
                            target: self.targets[i].clone(),
                            rater: self.raters[j].clone(),
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

fn parse_err(path: &str, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    Error::Parse {
        path: path.to_string(),
        line,
        msg: e.to_string(),
    }
}

/// Reads `clip_id,segment_index,rater_id,value` rows; errors carry line numbers.
pub fn read_ratings_csv<R: Read>(reader: R, label: &str) -> Result<Vec<SegmentRating>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<SegmentRating>() {
        let r = rec.map_err(|e| parse_err(label, &e))?;
        if let Err(e) = r.validate() {
            return Err(Error::Parse {
                path: label.to_string(),
                line: out.len() as u64 + 2,
                msg: e.to_string(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_ratings(path: &Path) -> Result<Vec<SegmentRating>> {
    read_ratings_csv(std::fs::File::open(path)?, &path.display().to_string())
}

pub fn write_ratings_csv<W: Write>(writer: W, ratings: &[SegmentRating]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in ratings {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Normalized ratings use the same columns with a real-valued `value`.
pub fn write_scored_csv<W: Write>(writer: W, ratings: &[ScoredRating]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in ratings {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct OriRow {
    clip_id: String,
    frame: usize,
    ori: f64,
    ori_unit: f64,
}

/// Writes `clip_id,frame,ori,ori_unit`, one row per frame.
pub fn write_ori_csv<W: Write>(writer: W, series: &[OriSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in series {
        for (frame, (&ori, &ori_unit)) in s.values.iter().zip(&s.unit_values).enumerate() {
            w.serialize(OriRow {
                clip_id: s.clip_id.clone(),
                frame,
                ori,
                ori_unit,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an ORI CSV back into per-clip series (clip order of first
/// appearance; frames must be contiguous from 0).
pub fn read_ori_csv<R: Read>(reader: R, label: &str) -> Result<Vec<OriSeries>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: Vec<OriSeries> = Vec::new();
    for (i, rec) in rdr.deserialize::<OriRow>().enumerate() {
        let row = rec.map_err(|e| parse_err(label, &e))?;
        let line = i as u64 + 2;
        let bad = |msg: String| Error::Parse {
            path: label.to_string(),
            line,
            msg,
        };
        if out.last().map(|s| s.clip_id != row.clip_id).unwrap_or(true) {
            if out.iter().any(|s| s.clip_id == row.clip_id) {
                return Err(bad(format!("clip {} is not contiguous", row.clip_id)));
            }
            out.push(OriSeries {
                clip_id: row.clip_id.clone(),
                frame_rate: FRAME_RATE,
                values: Vec::new(),
                unit_values: Vec::new(),
            });
        }
        let s = out.last_mut().expect("pushed above");
        if row.frame != s.values.len() {
            return Err(bad(format!("expected frame {}, got {}", s.values.len(), row.frame)));
        }
        if !(1.0..=5.0).contains(&row.ori) {
            return Err(bad(format!("ori {} outside [1, 5]", row.ori)));
        }
        s.values.push(row.ori);
        s.unit_values.push(row.ori_unit);
    }
    Ok(out)
}

pub fn load_ori(path: &Path) -> Result<Vec<OriSeries>> {
    read_ori_csv(std::fs::File::open(path)?, &path.display().to_string())
}
