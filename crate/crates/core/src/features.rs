//! Frame-wise driver-state features and the synthetic drive generator.
//!
//! Each frame concatenates five streams:
//!
//! | stream       | dims | content                                                   |
//! |--------------|------|-----------------------------------------------------------|
//! | `gaze`       | 9    | gaze-zone probabilities                                   |
//! | `hand_cam`   | 18   | elbow/wrist x,y; left (4) and right (6) activity simplex  |
//! | `hand_depth` | 5    | nearest-hand distance to wheel; held-object simplex (4)   |
//! | `pose`       | 20   | x,y of 10 upper-body keypoints                            |
//! | `foot`       | 2    | foot distance to gas and brake pedals                     |
//!
//! All coordinates and distances are normalized to `[0, 1]`.
//!
//! The generator drives a Markov chain over latent driver behaviours and
//! emits noisy features from per-behaviour templates. Ground-truth readiness
//! is the per-segment mean of a per-behaviour readiness level, interpolated
//! with the same spline used for human ratings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Split, SplitSpec};
use crate::numerics::{Matrix, RngState};
use crate::ratings::{self, OriSeries, SegmentRating, CLIP_FRAMES, SEGMENT_FRAMES};

pub const FULL_DIM: usize = 54;
pub const WINDOW_LEN: usize = 60;
const SIMPLEX_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Gaze,
    HandCam,
    HandDepth,
    Pose,
    Foot,
}

pub const GAZE_ZONES: [&str; 9] = [
    "forward",
    "left_shoulder",
    "left_mirror",
    "lap",
    "speedometer",
    "infotainment",
    "rearview_mirror",
    "right_mirror",
    "right_shoulder",
];
pub const LEFT_HAND_ACTIVITIES: [&str; 4] = ["on_lap", "in_air", "hovering_wheel", "on_wheel"];
pub const RIGHT_HAND_ACTIVITIES: [&str; 6] = [
    "on_lap",
    "in_air",
    "hovering_wheel",
    "on_wheel",
    "infotainment",
    "cup_holder",
];
pub const HELD_OBJECTS: [&str; 4] = ["no_object", "phone_tablet", "beverage_food", "other_item"];
pub const ARM_JOINTS: [&str; 4] = ["left_elbow", "left_wrist", "right_elbow", "right_wrist"];
pub const POSE_KEYPOINTS: [&str; 10] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_eye",
    "left_eye",
];

impl Stream {
    pub const ALL: [Stream; 5] = [
        Stream::Gaze,
        Stream::HandCam,
        Stream::HandDepth,
        Stream::Pose,
        Stream::Foot,
    ];

    pub fn dim(self) -> usize {
        match self {
            Stream::Gaze => 9,
            Stream::HandCam => 18,
            Stream::HandDepth => 5,
            Stream::Pose => 20,
            Stream::Foot => 2,
        }
    }

    /// Offset inside the full 54-d layout.
    pub fn offset(self) -> usize {
        Stream::ALL
            .iter()
            .take_while(|&&s| s != self)
            .map(|s| s.dim())
            .sum()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Gaze => "gaze",
            Stream::HandCam => "hand_cam",
            Stream::HandDepth => "hand_depth",
            Stream::Pose => "pose",
            Stream::Foot => "foot",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Per-dimension labels.
    pub fn labels(self) -> Vec<String> {
        match self {
            Stream::Gaze => GAZE_ZONES.iter().map(|z| format!("gaze_{z}")).collect(),
            Stream::HandCam => ARM_JOINTS
                .iter()
                .flat_map(|j| [format!("{j}_x"), format!("{j}_y")])
                .chain(LEFT_HAND_ACTIVITIES.iter().map(|a| format!("left_hand_{a}")))
                .chain(RIGHT_HAND_ACTIVITIES.iter().map(|a| format!("right_hand_{a}")))
                .collect(),
            Stream::HandDepth => std::iter::once("hand_wheel_distance".to_string())
                .chain(HELD_OBJECTS.iter().map(|o| format!("object_{o}")))
                .collect(),
            Stream::Pose => POSE_KEYPOINTS
                .iter()
                .flat_map(|k| [format!("pose_{k}_x"), format!("pose_{k}_y")])
                .collect(),
            Stream::Foot => vec!["foot_gas_distance".into(), "foot_brake_distance".into()],
        }
    }
}

/// Set of enabled streams.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamMask(u8);

impl StreamMask {
    pub const ALL: StreamMask = StreamMask(0b1_1111);

    pub fn from_streams(streams: &[Stream]) -> Result<Self> {
        let bits = streams.iter().fold(0u8, |b, s| b | s.bit());
        if bits == 0 {
            return Err(Error::Invalid("empty stream set".into()));
        }
        Ok(Self(bits))
    }

    pub fn contains(self, s: Stream) -> bool {
        self.0 & s.bit() != 0
    }

    pub fn streams(self) -> impl Iterator<Item = Stream> {
        Stream::ALL.into_iter().filter(move |&s| self.contains(s))
    }

    pub fn dim(self) -> usize {
        self.streams().map(Stream::dim).sum()
    }

    /// Columns of the full layout kept by this mask, in order.
    pub fn columns(self) -> Vec<usize> {
        self.streams()
            .flat_map(|s| s.offset()..s.offset() + s.dim())
            .collect()
    }

    pub fn labels(self) -> Vec<String> {
        self.streams().flat_map(Stream::labels).collect()
    }

    /// Table-level flags: gaze, hand (camera or depth), pose, foot.
    pub fn table_flags(self) -> [bool; 4] {
        [
            self.contains(Stream::Gaze),
            self.contains(Stream::HandCam) || self.contains(Stream::HandDepth),
            self.contains(Stream::Pose),
            self.contains(Stream::Foot),
        ]
    }
}

impl fmt::Debug for StreamMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StreamMask({self})")
    }
}

impl fmt::Display for StreamMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.streams().map(Stream::name).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for StreamMask {
    type Err = Error;

    /// Comma-separated stream names. `hand` selects both hand streams.
    fn from_str(s: &str) -> Result<Self> {
        let mut streams = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "all" => streams.extend(Stream::ALL),
                "gaze" => streams.push(Stream::Gaze),
                "hand" => streams.extend([Stream::HandCam, Stream::HandDepth]),
                "hand_cam" => streams.push(Stream::HandCam),
                "hand_depth" => streams.push(Stream::HandDepth),
                "pose" => streams.push(Stream::Pose),
                "foot" => streams.push(Stream::Foot),
                other => return Err(Error::Invalid(format!("unknown stream `{other}`"))),
            }
        }
        Self::from_streams(&streams)
    }
}

impl Serialize for StreamMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.streams())
    }
}

impl<'de> Deserialize<'de> for StreamMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let streams = Vec::<Stream>::deserialize(d)?;
        Self::from_streams(&streams).map_err(serde::de::Error::custom)
    }
}

/// One frame: the enabled streams concatenated in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub mask: StreamMask,
    pub values: Vec<f64>,
}

impl FrameFeatures {
    pub fn full(values: Vec<f64>) -> Self {
        Self {
            mask: StreamMask::ALL,
            values,
        }
    }

    pub fn from_streams(
        gaze: &[f64],
        hand_cam: &[f64],
        hand_depth: &[f64],
        pose: &[f64],
        foot: &[f64],
    ) -> Self {
        Self::full([gaze, hand_cam, hand_depth, pose, foot].concat())
    }

    /// Slice of one stream, if enabled and the vector is well-sized.
    pub fn stream(&self, s: Stream) -> Option<&[f64]> {
        if !self.mask.contains(s) || self.values.len() != self.mask.dim() {
            return None;
        }
        let start: usize = self
            .mask
            .streams()
            .take_while(|&t| t != s)
            .map(Stream::dim)
            .sum();
        Some(&self.values[start..start + s.dim()])
    }

    /// Keeps only the streams in `mask` (which must be a subset).
    pub fn project(&self, mask: StreamMask) -> Result<Self> {
        let mut values = Vec::with_capacity(mask.dim());
        for s in mask.streams() {
            let part = self.stream(s).ok_or_else(|| {
                Error::Invalid(format!("stream {} not available in frame", s.name()))
            })?;
            values.extend_from_slice(part);
        }
        Ok(Self { mask, values })
    }
}

/// A broken schema invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub stream: Option<Stream>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn check_range(out: &mut Vec<Violation>, s: Stream, label: &str, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0).contains(v) {
            out.push(Violation {
                stream: Some(s),
                message: format!("{label}[{i}] = {v} outside [0, 1]"),
            });
        }
    }
}

fn check_simplex(out: &mut Vec<Violation>, s: Stream, label: &str, vals: &[f64]) {
    check_range(out, s, label, vals);
    let sum: f64 = vals.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        out.push(Violation {
            stream: Some(s),
            message: format!("{label} simplex sums to {sum}"),
        });
    }
}

/// Checks dimension, range and simplex invariants; returns every violation.
pub fn validate(frame: &FrameFeatures) -> Vec<Violation> {
    let mut out = Vec::new();
    let want = frame.mask.dim();
    if frame.values.len() != want {
        out.push(Violation {
            stream: None,
            message: format!(
                "dimension {} does not match enabled streams ({want})",
                frame.values.len()
            ),
        });
        return out;
    }
    for s in frame.mask.streams() {
        let v = frame.stream(s).expect("dimension checked");
        match s {
            Stream::Gaze => check_simplex(&mut out, s, "gaze", v),
            Stream::HandCam => {
                check_range(&mut out, s, "arm joints", &v[..8]);
                check_simplex(&mut out, s, "left hand activity", &v[8..12]);
                check_simplex(&mut out, s, "right hand activity", &v[12..18]);
            }
            Stream::HandDepth => {
                check_range(&mut out, s, "hand-wheel distance", &v[..1]);
                check_simplex(&mut out, s, "held object", &v[1..5]);
            }
            Stream::Pose => check_range(&mut out, s, "pose", v),
            Stream::Foot => check_range(&mut out, s, "foot", v),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Latent behaviour and generator configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentState {
    Vigilant,
    Talking,
    Gesturing,
    Infotainment,
    Drinking,
    Phone,
}

impl LatentState {
    pub const ALL: [LatentState; 6] = [
        LatentState::Vigilant,
        LatentState::Talking,
        LatentState::Gesturing,
        LatentState::Infotainment,
        LatentState::Drinking,
        LatentState::Phone,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Mean emission of one latent behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionTemplate {
    pub gaze: [f64; 9],
    pub left_hand: [f64; 4],
    pub right_hand: [f64; 6],
    pub object: [f64; 4],
    pub wheel_distance: f64,
    /// gas, brake
    pub foot: [f64; 2],
    pub left_wrist: [f64; 2],
    pub right_wrist: [f64; 2],
    /// Forward/downward head displacement applied to the pose keypoints.
    pub lean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Std of the logit perturbation applied to every simplex.
    pub simplex_logit: f64,
    /// Probability floor added before taking logits.
    pub simplex_floor: f64,
    pub coordinate: f64,
    pub distance: f64,
    pub pose: f64,
    /// Per-frame relaxation rate of continuous quantities towards the
    /// current template.
    pub relax: f64,
    /// Std of the per-drive pose offset.
    pub drive_pose: f64,
    /// Frame-to-frame correlation of the observation noise.
    pub correlation: f64,
    /// Per-frame probability that a sensor group starts a glitch.
    pub glitch_rate: f64,
    pub glitch_max_frames: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            simplex_logit: 1.0,
            simplex_floor: 0.02,
            coordinate: 0.03,
            distance: 0.08,
            pose: 0.015,
            relax: 0.1,
            drive_pose: 0.03,
            correlation: 0.8,
            glitch_rate: 0.02,
            glitch_max_frames: 4,
        }
    }
}

/// Rater with a monotone response curve
/// `d(x) = 1 + offset + scale * ((x - 1) / 4)^gamma` plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRater {
    pub rater_id: String,
    pub offset: f64,
    pub scale: f64,
    pub gamma: f64,
    pub noise_std: f64,
}

impl SimulatedRater {
    pub fn identity(rater_id: impl Into<String>, noise_std: f64) -> Self {
        Self {
            rater_id: rater_id.into(),
            offset: 0.0,
            scale: 4.0,
            gamma: 1.0,
            noise_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.gamma > 0.0 && self.noise_std >= 0.0)
            || !self.offset.is_finite()
            || !self.scale.is_finite()
            || !self.gamma.is_finite()
        {
            return Err(Error::Invalid(format!(
                "rater {}: scale and gamma must be > 0, noise >= 0",
                self.rater_id
            )));
        }
        Ok(())
    }

    pub fn distortion(&self, x: f64) -> f64 {
        let u = ((x - 1.0) / 4.0).clamp(0.0, 1.0);
        1.0 + self.offset + self.scale * u.powf(self.gamma)
    }

    pub fn rate(&self, segment_mean: f64, rng: &mut RngState) -> u8 {
        let noisy = self.distortion(segment_mean) + self.noise_std * rng.normal();
        noisy.clamp(1.0, 5.0).round() as u8
    }
}

/// Clip counts and drive counts per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub train_clips: usize,
    pub val_clips: usize,
    pub test_clips: usize,
    pub train_drives: usize,
    pub val_drives: usize,
    pub test_drives: usize,
    /// Clips rated by the whole panel; the rest get two raters each.
    pub common_clips: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_clips: 172,
            val_clips: 32,
            test_clips: 56,
            train_drives: 22,
            val_drives: 5,
            test_drives: 6,
            common_clips: 20,
        }
    }
}

impl CorpusConfig {
    pub fn total_clips(&self) -> usize {
        self.train_clips + self.val_clips + self.test_clips
    }

    /// Same split proportions with `total` clips (at least one clip and
    /// one drive per split once `total >= 3`).
    pub fn with_total(total: usize) -> Result<Self> {
        if total < 3 {
            return Err(Error::Invalid(format!(
                "need at least 3 clips for train/val/test, got {total}"
            )));
        }
        let base = Self::default();
        let frac = total as f64 / base.total_clips() as f64;
        let val = ((base.val_clips as f64 * frac).round() as usize).max(1);
        let test = ((base.test_clips as f64 * frac).round() as usize).max(1);
        let train = total.saturating_sub(val + test).max(1);
        let (val, test) = if train + val + test > total {
            (1, total - 2)
        } else {
            (val, test)
        };
        let drives = |d: usize, clips: usize| ((d as f64 * frac).round() as usize).clamp(1, clips);
        Ok(Self {
            train_clips: train,
            val_clips: val,
            test_clips: test,
            train_drives: drives(base.train_drives, train),
            val_drives: drives(base.val_drives, val),
            test_drives: drives(base.test_drives, test),
            common_clips: base.common_clips.min(total),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (clips, drives, name) in [
            (self.train_clips, self.train_drives, "train"),
            (self.val_clips, self.val_drives, "val"),
            (self.test_clips, self.test_drives, "test"),
        ] {
            if clips == 0 || drives == 0 || drives > clips {
                return Err(Error::Invalid(format!(
                    "{name} split needs 1 <= drives ({drives}) <= clips ({clips})"
                )));
            }
        }
        if self.common_clips > self.total_clips() {
            return Err(Error::Invalid("more common clips than clips".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Per-frame transition matrix over [`LatentState::ALL`].
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub templates: Vec<EmissionTemplate>,
    /// Readiness level (1–5) of each latent state.
    pub readiness: Vec<f64>,
    /// How far a segment's rating is pulled from its mean readiness
    /// towards its worst moment (0 = plain mean, 1 = minimum).
    pub lapse_weight: f64,
    pub noise: NoiseConfig,
    pub raters: Vec<SimulatedRater>,
    pub corpus: CorpusConfig,
}

fn onehot_mix<const N: usize>(pairs: &[(usize, f64)]) -> [f64; N] {
    let mut out = [0.0; N];
    for &(i, w) in pairs {
        out[i] += w;
    }
    out
}

/// Per-frame chain from mean dwell times (seconds) and exit proportions.
fn transition_from_dwell(dwell_s: &[f64; 6], exits: &[[f64; 6]; 6]) -> Vec<Vec<f64>> {
    (0..6)
        .map(|i| {
            let leave = 1.0 / (dwell_s[i] * ratings::FRAME_RATE as f64);
            let total: f64 = exits[i].iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w).sum();
            (0..6)
                .map(|j| {
                    if i == j {
                        1.0 - leave
                    } else {
                        leave * exits[i][j] / total
                    }
                })
                .collect()
        })
        .collect()
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let g = |pairs: &[(usize, f64)]| onehot_mix::<9>(pairs);
        // gaze indices: 0 fwd, 1 l-shoulder, 2 l-mirror, 3 lap, 4 speedo,
        // 5 infotainment, 6 rear-view, 7 r-mirror, 8 r-shoulder
        let templates = vec![
            // vigilant
            EmissionTemplate {
                gaze: g(&[(0, 0.72), (2, 0.08), (6, 0.08), (7, 0.07), (4, 0.05)]),
                left_hand: [0.05, 0.02, 0.23, 0.70],
                right_hand: [0.05, 0.02, 0.23, 0.68, 0.01, 0.01],
                object: [0.94, 0.02, 0.02, 0.02],
                wheel_distance: 0.08,
                foot: [0.15, 0.2],
                left_wrist: [0.35, 0.35],
                right_wrist: [0.65, 0.35],
                lean: 0.0,
            },
            // talking
            EmissionTemplate {
                gaze: g(&[(0, 0.55), (8, 0.25), (7, 0.08), (6, 0.07), (2, 0.05)]),
                left_hand: [0.25, 0.05, 0.35, 0.35],
                right_hand: [0.35, 0.1, 0.3, 0.2, 0.03, 0.02],
                object: [0.92, 0.02, 0.02, 0.04],
                wheel_distance: 0.3,
                foot: [0.3, 0.35],
                left_wrist: [0.33, 0.5],
                right_wrist: [0.62, 0.55],
                lean: 0.1,
            },
            // gesturing
            EmissionTemplate {
                gaze: g(&[(0, 0.45), (8, 0.3), (1, 0.05), (7, 0.1), (5, 0.1)]),
                left_hand: [0.15, 0.3, 0.3, 0.25],
                right_hand: [0.1, 0.65, 0.1, 0.1, 0.03, 0.02],
                object: [0.9, 0.02, 0.02, 0.06],
                wheel_distance: 0.5,
                foot: [0.35, 0.4],
                left_wrist: [0.33, 0.4],
                right_wrist: [0.7, 0.2],
                lean: 0.15,
            },
            // infotainment
            EmissionTemplate {
                gaze: g(&[(5, 0.6), (0, 0.25), (4, 0.1), (3, 0.05)]),
                left_hand: [0.2, 0.05, 0.35, 0.4],
                right_hand: [0.05, 0.1, 0.05, 0.05, 0.73, 0.02],
                object: [0.92, 0.02, 0.02, 0.04],
                wheel_distance: 0.55,
                foot: [0.4, 0.45],
                left_wrist: [0.35, 0.38],
                right_wrist: [0.82, 0.6],
                lean: 0.25,
            },
            // drinking
            EmissionTemplate {
                gaze: g(&[(0, 0.6), (3, 0.1), (5, 0.05), (4, 0.05), (8, 0.1), (6, 0.1)]),
                left_hand: [0.2, 0.05, 0.35, 0.4],
                right_hand: [0.1, 0.45, 0.05, 0.05, 0.05, 0.3],
                object: [0.1, 0.04, 0.82, 0.04],
                wheel_distance: 0.6,
                foot: [0.45, 0.5],
                left_wrist: [0.35, 0.4],
                right_wrist: [0.6, 0.15],
                lean: 0.2,
            },
            // phone
            EmissionTemplate {
                gaze: g(&[(3, 0.7), (0, 0.18), (4, 0.05), (5, 0.07)]),
                left_hand: [0.55, 0.1, 0.15, 0.2],
                right_hand: [0.7, 0.15, 0.05, 0.05, 0.03, 0.02],
                object: [0.08, 0.86, 0.03, 0.03],
                wheel_distance: 0.85,
                foot: [0.6, 0.65],
                left_wrist: [0.45, 0.75],
                right_wrist: [0.55, 0.78],
                lean: 0.5,
            },
        ];
        // exit proportions (row: from, column: to)
        let exits = [
            [0.0, 0.3, 0.15, 0.2, 0.15, 0.2],
            [0.6, 0.0, 0.25, 0.05, 0.05, 0.05],
            [0.6, 0.3, 0.0, 0.04, 0.03, 0.03],
            [0.7, 0.1, 0.05, 0.0, 0.05, 0.1],
            [0.7, 0.1, 0.05, 0.05, 0.0, 0.1],
            [0.65, 0.1, 0.05, 0.1, 0.1, 0.0],
        ];
        Self {
            seed: 0,
            transition: transition_from_dwell(&[8.0, 6.0, 3.0, 4.0, 4.0, 6.0], &exits),
            initial: vec![0.4, 0.15, 0.1, 0.1, 0.1, 0.15],
            templates,
            readiness: vec![4.7, 3.8, 3.2, 2.6, 2.4, 1.4],
            lapse_weight: 0.5,
            noise: NoiseConfig::default(),
            raters: default_panel(),
            corpus: CorpusConfig::default(),
        }
    }
}

/// Five raters ranging from strict to lax.
pub fn default_panel() -> Vec<SimulatedRater> {
    let r = |id: &str, offset, scale, gamma| SimulatedRater {
        rater_id: id.into(),
        offset,
        scale,
        gamma,
        noise_std: 0.4,
    };
    vec![
        r("rater1", -0.2, 2.8, 1.3),
        r("rater2", 0.2, 3.4, 1.0),
        r("rater3", 0.0, 4.0, 1.0),
        r("rater4", 1.5, 2.6, 0.8),
        r("rater5", 0.7, 3.2, 1.0),
    ]
}

/// `k` raters: the default panel first, then variations of it.
pub fn rater_panel(k: usize) -> Result<Vec<SimulatedRater>> {
    if k < 2 {
        return Err(Error::Invalid(format!("a rater panel needs at least 2 raters, got {k}")));
    }
    let base = default_panel();
    Ok((0..k)
        .map(|i| {
            let mut r = base[i % base.len()].clone();
            let round = (i / base.len()) as f64;
            r.rater_id = format!("rater{}", i + 1);
            r.offset += 0.1 * round;
            r.gamma *= 1.0 + 0.05 * round;
            r
        })
        .collect())
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Invalid(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let n = LatentState::COUNT;
        if self.transition.len() != n || self.transition.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid(format!("transition matrix must be {n}x{n}")));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        if self.initial.len() != n {
            return Err(Error::Invalid("initial distribution length".into()));
        }
        check_distribution(&self.initial, "initial distribution")?;
        if self.templates.len() != n || self.readiness.len() != n {
            return Err(Error::Invalid(format!("need {n} templates and readiness levels")));
        }
        for (i, t) in self.templates.iter().enumerate() {
            check_distribution(&t.gaze, &format!("template {i} gaze"))?;
            check_distribution(&t.left_hand, &format!("template {i} left hand"))?;
            check_distribution(&t.right_hand, &format!("template {i} right hand"))?;
            check_distribution(&t.object, &format!("template {i} object"))?;
        }
        if self.readiness.iter().any(|r| !(1.0..=5.0).contains(r)) {
            return Err(Error::Invalid("readiness levels must lie in [1, 5]".into()));
        }
        if !(0.0..=1.0).contains(&self.lapse_weight) {
            return Err(Error::Invalid("lapse weight must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.glitch_rate) {
            return Err(Error::Invalid("glitch rate must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.noise.correlation) {
            return Err(Error::Invalid("noise correlation must lie in [0, 1)".into()));
        }
        for r in &self.raters {
            r.validate()?;
        }
        self.corpus.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single absorbing state, started in that state.
    pub fn absorbing(state: LatentState) -> Self {
        let n = LatentState::COUNT;
        let i = state.index();
        let mut transition = vec![vec![0.0; n]; n];
        for (r, row) in transition.iter_mut().enumerate() {
            row[if r == i { r } else { i }] = 1.0;
        }
        let mut initial = vec![0.0; n];
        initial[i] = 1.0;
        Self {
            transition,
            initial,
            ..Self::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub clip_id: String,
    pub drive: usize,
    /// `frames x 54` full-schema features.
    pub features: Matrix,
    pub states: Vec<LatentState>,
    pub ground_truth: OriSeries,
}

impl SyntheticClip {
    pub fn frame(&self, t: usize) -> FrameFeatures {
        FrameFeatures::full(self.features.row(t).to_vec())
    }
}

const GEN_STREAM: u64 = 1;
const RATER_STREAM: u64 = 2;
const LAYOUT_STREAM: u64 = 3;
const DRIVE_STREAM: u64 = 4;

// Skeleton in pose-camera coordinates.
const POSE_BASE: [[f64; 2]; 10] = [
    [0.5, 0.2],   // nose
    [0.5, 0.32],  // neck
    [0.38, 0.34], // right shoulder
    [0.32, 0.5],  // right elbow
    [0.36, 0.65], // right wrist
    [0.62, 0.34], // left shoulder
    [0.68, 0.5],  // left elbow
    [0.64, 0.65], // left wrist
    [0.47, 0.17], // right eye
    [0.53, 0.17], // left eye
];

/// Per-dimension AR(1) observation noise with unit marginal variance.
struct NoiseSource {
    rho: f64,
    state: Vec<f64>,
    cursor: usize,
}

impl NoiseSource {
    // one draw per emitted dimension
    const DRAWS: usize = FULL_DIM;

    fn new(rho: f64, rng: &mut RngState) -> Self {
        Self {
            rho,
            state: (0..Self::DRAWS).map(|_| rng.normal()).collect(),
            cursor: 0,
        }
    }

    fn advance(&mut self, rng: &mut RngState) {
        let innov = (1.0 - self.rho * self.rho).sqrt();
        for v in &mut self.state {
            *v = self.rho * *v + innov * rng.normal();
        }
        self.cursor = 0;
    }

    fn next(&mut self) -> f64 {
        let v = self.state[self.cursor];
        self.cursor += 1;
        v
    }
}

fn noisy_simplex(p: &[f64], noise: &NoiseConfig, rng: &mut NoiseSource, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, &pi) in out.iter_mut().zip(p) {
        *o = (pi.max(0.0) + noise.simplex_floor).ln() + noise.simplex_logit * rng.next();
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    // renormalize residual rounding so the simplex check stays tight
    let s: f64 = out.iter().sum();
    out[0] += 1.0 - s;
}

/// Continuous emission state relaxing towards the active template.
#[derive(Clone)]
struct Smoothed {
    gaze: [f64; 9],
    left_hand: [f64; 4],
    right_hand: [f64; 6],
    object: [f64; 4],
    wheel_distance: f64,
    foot: [f64; 2],
    left_wrist: [f64; 2],
    right_wrist: [f64; 2],
    lean: f64,
}

impl Smoothed {
    fn from_template(t: &EmissionTemplate) -> Self {
        Self {
            gaze: t.gaze,
            left_hand: t.left_hand,
            right_hand: t.right_hand,
            object: t.object,
            wheel_distance: t.wheel_distance,
            foot: t.foot,
            left_wrist: t.left_wrist,
            right_wrist: t.right_wrist,
            lean: t.lean,
        }
    }

    fn relax(&mut self, t: &EmissionTemplate, a: f64) {
        fn mix(dst: &mut [f64], src: &[f64], a: f64) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * (s - *d);
            }
        }
        mix(&mut self.gaze, &t.gaze, a);
        mix(&mut self.left_hand, &t.left_hand, a);
        mix(&mut self.right_hand, &t.right_hand, a);
        mix(&mut self.object, &t.object, a);
        self.wheel_distance += a * (t.wheel_distance - self.wheel_distance);
        mix(&mut self.foot, &t.foot, a);
        mix(&mut self.left_wrist, &t.left_wrist, a);
        mix(&mut self.right_wrist, &t.right_wrist, a);
        self.lean += a * (t.lean - self.lean);
    }
}

/// Short detector failures: while active, a sensor group reports the
/// template of an unrelated behaviour.
#[derive(Default)]
struct Glitches {
    // gaze, hand activity, held object, range sensors
    active: [Option<(usize, usize)>; 4],
}

impl Glitches {
    fn advance(&mut self, noise: &NoiseConfig, rng: &mut RngState) {
        for slot in &mut self.active {
            *slot = match *slot {
                Some((s, left)) if left > 1 => Some((s, left - 1)),
                _ if rng.uniform() < noise.glitch_rate => Some((
                    rng.below(LatentState::COUNT),
                    1 + rng.below(noise.glitch_max_frames.max(1)),
                )),
                _ => None,
            };
        }
    }

    fn template<'a>(&self, group: usize, cur: &'a Smoothed, templates: &'a [EmissionTemplate]) -> Source<'a> {
        match self.active[group] {
            Some((s, _)) => Source::Template(&templates[s]),
            None => Source::Smoothed(cur),
        }
    }
}

enum Source<'a> {
    Smoothed(&'a Smoothed),
    Template(&'a EmissionTemplate),
}

impl Source<'_> {
    fn gaze(&self) -> &[f64] {
        match self {
            Source::Smoothed(c) => &c.gaze,
            Source::Template(t) => &t.gaze,
        }
    }
    fn hands(&self) -> (&[f64], &[f64]) {
        match self {
            Source::Smoothed(c) => (&c.left_hand, &c.right_hand),
            Source::Template(t) => (&t.left_hand, &t.right_hand),
        }
    }
    fn object(&self) -> &[f64] {
        match self {
            Source::Smoothed(c) => &c.object,
            Source::Template(t) => &t.object,
        }
    }
    fn ranges(&self) -> (f64, [f64; 2]) {
        match self {
            Source::Smoothed(c) => (c.wheel_distance, c.foot),
            Source::Template(t) => (t.wheel_distance, t.foot),
        }
    }
}

fn emit_frame(
    cur: &Smoothed,
    glitches: &Glitches,
    templates: &[EmissionTemplate],
    drive_offset: [f64; 2],
    noise: &NoiseConfig,
    rng: &mut NoiseSource,
    out: &mut [f64],
) {
    let unit = |v: f64| v.clamp(0.0, 1.0);
    let gaze_src = glitches.template(0, cur, templates);
    let hand_src = glitches.template(1, cur, templates);
    let object_src = glitches.template(2, cur, templates);
    let (wheel_distance, foot_distance) = glitches.template(3, cur, templates).ranges();
    let (gaze, rest) = out.split_at_mut(9);
    let (hand_cam, rest) = rest.split_at_mut(18);
    let (hand_depth, rest) = rest.split_at_mut(5);
    let (pose, foot) = rest.split_at_mut(20);

    noisy_simplex(gaze_src.gaze(), noise, rng, gaze);

    // arm joints: elbows sit between a fixed shoulder and the wrist
    let left_shoulder = [0.25, 0.1];
    let right_shoulder = [0.75, 0.1];
    let joints = [
        [
            0.5 * (left_shoulder[0] + cur.left_wrist[0]) - 0.05,
            0.5 * (left_shoulder[1] + cur.left_wrist[1]) + 0.05,
        ],
        cur.left_wrist,
        [
            0.5 * (right_shoulder[0] + cur.right_wrist[0]) + 0.05,
            0.5 * (right_shoulder[1] + cur.right_wrist[1]) + 0.05,
        ],
        cur.right_wrist,
    ];
    for (j, p) in joints.iter().enumerate() {
        hand_cam[2 * j] = unit(p[0] + noise.coordinate * rng.next());
        hand_cam[2 * j + 1] = unit(p[1] + noise.coordinate * rng.next());
    }
    let (left, right) = hand_src.hands();
    noisy_simplex(left, noise, rng, &mut hand_cam[8..12]);
    noisy_simplex(right, noise, rng, &mut hand_cam[12..18]);

    hand_depth[0] = unit(wheel_distance + noise.distance * rng.next());
    noisy_simplex(object_src.object(), noise, rng, &mut hand_depth[1..5]);

    for (k, base) in POSE_BASE.iter().enumerate() {
        let (mut x, mut y) = (base[0] + drive_offset[0], base[1] + drive_offset[1]);
        match k {
            // head keypoints move down with lean
            0 | 1 | 8 | 9 => y += 0.15 * cur.lean,
            // wrists follow the hand-camera wrists (mirrored view)
            4 => {
                x += 0.3 * (1.0 - cur.right_wrist[0] - 0.35);
                y += 0.3 * (cur.right_wrist[1] - 0.35);
            }
            7 => {
                x += 0.3 * (1.0 - cur.left_wrist[0] - 0.65);
                y += 0.3 * (cur.left_wrist[1] - 0.35);
            }
            _ => {}
        }
        pose[2 * k] = unit(x + noise.pose * rng.next());
        pose[2 * k + 1] = unit(y + noise.pose * rng.next());
    }

    foot[0] = unit(foot_distance[0] + noise.distance * rng.next());
    foot[1] = unit(foot_distance[1] + noise.distance * rng.next());
}

/// Ground-truth readiness: per-segment state readiness, blended between
/// its mean and its minimum by `lapse_weight`, then spline-interpolated
/// like human ratings.
pub fn readiness_series(
    clip_id: &str,
    states: &[LatentState],
    readiness: &[f64],
    lapse_weight: f64,
) -> Result<OriSeries> {
    let levels: Vec<f64> = states
        .chunks(SEGMENT_FRAMES)
        .map(|seg| {
            let mean = seg.iter().map(|s| readiness[s.index()]).sum::<f64>() / seg.len() as f64;
            let worst = seg.iter().map(|s| readiness[s.index()]).fold(f64::INFINITY, f64::min);
            mean - lapse_weight * (mean - worst)
        })
        .collect();
    ratings::interpolate_ori(clip_id, &levels)
}

/// Generates one 30 s clip. `rng` should be a per-clip substream.
pub fn generate_clip(
    rng: &mut RngState,
    config: &GeneratorConfig,
    clip_id: &str,
    drive: usize,
) -> Result<SyntheticClip> {
    config.validate()?;
    let drive_rng = &mut RngState::new(config.seed)
        .substream(DRIVE_STREAM)
        .substream(drive as u64);
    let drive_offset = [
        config.noise.drive_pose * drive_rng.normal(),
        config.noise.drive_pose * drive_rng.normal(),
    ];

    let mut state = LatentState::ALL[rng.categorical(&config.initial)];
    let mut cur = Smoothed::from_template(&config.templates[state.index()]);
    let mut noise = NoiseSource::new(config.noise.correlation, rng);
    let mut glitches = Glitches::default();
    let mut states = Vec::with_capacity(CLIP_FRAMES);
    let mut data = vec![0.0; CLIP_FRAMES * FULL_DIM];
    for t in 0..CLIP_FRAMES {
        if t > 0 {
            state = LatentState::ALL[rng.categorical(&config.transition[state.index()])];
        }
        states.push(state);
        cur.relax(&config.templates[state.index()], config.noise.relax);
        if t > 0 {
            noise.advance(rng);
        }
        glitches.advance(&config.noise, rng);
        emit_frame(
            &cur,
            &glitches,
            &config.templates,
            drive_offset,
            &config.noise,
            &mut noise,
            &mut data[t * FULL_DIM..(t + 1) * FULL_DIM],
        );
    }
    let ground_truth = readiness_series(clip_id, &states, &config.readiness, config.lapse_weight)?;
    Ok(SyntheticClip {
        clip_id: clip_id.to_string(),
        drive,
        features: Matrix::new(CLIP_FRAMES, FULL_DIM, data)?,
        states,
        ground_truth,
    })
}

/// Each rater scores each 2 s segment from the mean ground-truth readiness
/// of that segment.
pub fn simulate_rater_panel(
    clips: &[&SyntheticClip],
    raters: &[SimulatedRater],
    rng: &mut RngState,
) -> Result<Vec<SegmentRating>> {
    if raters.len() < 2 {
        return Err(Error::Invalid("a rater panel needs at least 2 raters".into()));
    }
    for r in raters {
        r.validate()?;
    }
    let mut out = Vec::new();
    for clip in clips {
        for (seg, frames) in clip.ground_truth.values.chunks(SEGMENT_FRAMES).enumerate() {
            let mean = frames.iter().sum::<f64>() / frames.len() as f64;
            for r in raters {
                out.push(SegmentRating::new(
                    clip.clip_id.clone(),
                    seg,
                    r.rater_id.clone(),
                    r.rate(mean, rng),
                )?);
            }
        }
    }
    Ok(out)
}

/// A generated corpus: clips, split assignment and simulated ratings.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: GeneratorConfig,
    pub clips: Vec<SyntheticClip>,
    pub splits: SplitSpec,
    pub common_clips: Vec<String>,
    pub ratings: Vec<SegmentRating>,
}

impl SyntheticCorpus {
    /// Generates every clip (each from its own substream), assigns drives to
    /// splits, and simulates ratings: the whole panel on the common set, a
    /// random pair of raters elsewhere.
    pub fn generate(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let c = &config.corpus;
        let root = RngState::new(config.seed);
        let mut clips = Vec::with_capacity(c.total_clips());
        let mut assignment = BTreeMap::new();
        let mut drive_base = 0;
        let mut index = 0u64;
        for (split, n_clips, n_drives) in [
            (Split::Train, c.train_clips, c.train_drives),
            (Split::Val, c.val_clips, c.val_drives),
            (Split::Test, c.test_clips, c.test_drives),
        ] {
            for i in 0..n_clips {
                let drive = drive_base + i * n_drives / n_clips;
                let clip_id = format!("d{drive:02}_c{index:03}");
                let mut rng = root.substream(GEN_STREAM).substream(index);
                clips.push(generate_clip(&mut rng, config, &clip_id, drive)?);
                assignment.insert(clip_id, (split, drive));
                index += 1;
            }
            drive_base += n_drives;
        }
        let splits = SplitSpec::new(assignment)?;

        let mut order: Vec<usize> = (0..clips.len()).collect();
        root.substream(LAYOUT_STREAM).shuffle(&mut order);
        let mut common: Vec<usize> = order[..c.common_clips].to_vec();
        common.sort_unstable();
        let common_ids: Vec<String> = common.iter().map(|&i| clips[i].clip_id.clone()).collect();

        let mut ratings = Vec::new();
        if !config.raters.is_empty() {
            let rater_root = root.substream(RATER_STREAM);
            for (i, clip) in clips.iter().enumerate() {
                let mut rng = rater_root.substream(i as u64);
                let panel: Vec<SimulatedRater> = if common.binary_search(&i).is_ok() {
                    config.raters.clone()
                } else {
                    let n = config.raters.len();
                    let a = rng.below(n);
                    let b = (a + 1 + rng.below(n - 1)) % n;
                    let (a, b) = (a.min(b), a.max(b));
                    vec![config.raters[a].clone(), config.raters[b].clone()]
                };
                ratings.extend(simulate_rater_panel(&[clip], &panel, &mut rng)?);
            }
        }
        Ok(Self {
            config: config.clone(),
            clips,
            splits,
            common_clips: common_ids,
            ratings,
        })
    }

    pub fn clip(&self, clip_id: &str) -> Option<&SyntheticClip> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    pub fn common_ratings(&self) -> Vec<SegmentRating> {
        ratings::RatingSets::select(&self.ratings, &self.common_clips)
    }

    pub fn ground_truth(&self) -> Vec<OriSeries> {
        self.clips.iter().map(|c| c.ground_truth.clone()).collect()
    }

    /// ORI built from the simulated ratings: tables from the common set,
    /// normalize, average, interpolate.
    pub fn rated_ori(&self) -> Result<Vec<OriSeries>> {
        let tables = ratings::build_lookup_tables(&self.common_ratings())?;
        ratings::build_ori(&self.ratings, Some(&tables))
    }
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

/// 60 consecutive frames and the unit-scale readiness at the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub clip_id: String,
    pub frame: usize,
    /// `60 x d`, oldest frame first.
    pub inputs: Matrix,
    pub target: f64,
}

/// Copies the window ending at `end` into `buf` (`60 x d`), replicating
/// frame 0 where the window reaches before the clip start.
pub fn fill_window(features: &Matrix, end: usize, buf: &mut Matrix) {
    let d = features.cols();
    debug_assert_eq!(buf.shape(), (WINDOW_LEN, d));
    for i in 0..WINDOW_LEN {
        let src = (end + i + 1).saturating_sub(WINDOW_LEN);
        buf.row_mut(i).copy_from_slice(features.row(src));
    }
}

/// One window per frame (stride 1), left-padded by replication.
pub fn make_windows(clip_id: &str, features: &Matrix, ori: &OriSeries) -> Result<Vec<SequenceWindow>> {
    let t = features.rows();
    if t == 0 {
        return Err(Error::Invalid(format!("clip {clip_id} has no frames")));
    }
    if ori.unit_values.len() != t {
        return Err(Error::Shape(format!(
            "clip {clip_id}: {t} frames but {} readiness values",
            ori.unit_values.len()
        )));
    }
    (0..t)
        .map(|end| {
            let mut inputs = Matrix::zeros(WINDOW_LEN, features.cols());
            fill_window(features, end, &mut inputs);
            Ok(SequenceWindow {
                clip_id: clip_id.to_string(),
                frame: end,
                inputs,
                target: ori.unit_values[end],
            })
        })
        .collect()
}

/// Clips projected to a stream mask, with unit-scale targets; windows are
/// addressed by `(clip, frame)` and materialized on demand.
#[derive(Debug, Clone)]
pub struct WindowDataset {
    pub mask: StreamMask,
    pub clip_ids: Vec<String>,
    pub features: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
}

impl WindowDataset {
    pub fn new(mask: StreamMask) -> Self {
        Self {
            mask,
            clip_ids: Vec::new(),
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Adds a clip given full-schema features.
    pub fn push_clip(&mut self, clip_id: &str, full: &Matrix, ori: &OriSeries) -> Result<()> {
        if full.cols() != FULL_DIM {
            return Err(Error::Shape(format!("expected {FULL_DIM} feature columns")));
        }
        if ori.unit_values.len() != full.rows() {
            return Err(Error::Shape(format!(
                "clip {clip_id}: {} frames but {} readiness values",
                full.rows(),
                ori.unit_values.len()
            )));
        }
        if full.rows() == 0 {
            return Err(Error::Invalid(format!("clip {clip_id} has no frames")));
        }
        let cols = self.mask.columns();
        let projected = Matrix::from_fn(full.rows(), cols.len(), |r, c| full.get(r, cols[c]))?;
        self.clip_ids.push(clip_id.to_string());
        self.features.push(projected);
        self.targets.push(ori.unit_values.clone());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mask.dim()
    }

    pub fn num_clips(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn num_windows(&self) -> usize {
        self.features.iter().map(Matrix::rows).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_windows() == 0
    }

    /// `(clip, frame)` of every `stride`-th frame of each clip.
    pub fn index(&self, stride: usize) -> Vec<(usize, usize)> {
        let stride = stride.max(1);
        self.features
            .iter()
            .enumerate()
            .flat_map(|(c, f)| (0..f.rows()).step_by(stride).map(move |t| (c, t)))
            .collect()
    }

    pub fn target(&self, clip: usize, frame: usize) -> f64 {
        self.targets[clip][frame]
    }

    pub fn fill(&self, clip: usize, frame: usize, buf: &mut Matrix) {
        fill_window(&self.features[clip], frame, buf);
    }

    pub fn window(&self, clip: usize, frame: usize) -> SequenceWindow {
        let mut inputs = Matrix::zeros(WINDOW_LEN, self.dim());
        self.fill(clip, frame, &mut inputs);
        SequenceWindow {
            clip_id: self.clip_ids[clip].clone(),
            frame,
            inputs,
            target: self.target(clip, frame),
        }
    }
}

// ---------------------------------------------------------------------------
// Feature stream file (JSON lines)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub clip_id: String,
    pub frame: usize,
    pub gaze: Vec<f64>,
    pub hand_cam: Vec<f64>,
    pub hand_depth: Vec<f64>,
    pub pose: Vec<f64>,
    pub foot: Vec<f64>,
}

impl FrameRecord {
    pub fn from_row(clip_id: &str, frame: usize, row: &[f64]) -> Self {
        let part = |s: Stream| row[s.offset()..s.offset() + s.dim()].to_vec();
        Self {
            clip_id: clip_id.to_string(),
            frame,
            gaze: part(Stream::Gaze),
            hand_cam: part(Stream::HandCam),
            hand_depth: part(Stream::HandDepth),
            pose: part(Stream::Pose),
            foot: part(Stream::Foot),
        }
    }

    pub fn to_frame(&self) -> FrameFeatures {
        FrameFeatures::from_streams(&self.gaze, &self.hand_cam, &self.hand_depth, &self.pose, &self.foot)
    }
}

pub fn write_features_jsonl<W: Write>(mut w: W, clips: &[(String, &Matrix)]) -> Result<()> {
    for (clip_id, m) in clips {
        for t in 0..m.rows() {
            serde_json::to_writer(&mut w, &FrameRecord::from_row(clip_id, t, m.row(t)))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature stream into per-clip `frames x 54` matrices, in order of
/// first appearance. Every frame is validated.
pub fn read_features_jsonl<R: BufRead>(r: R, label: &str) -> Result<Vec<(String, Matrix)>> {
    let mut clips: Vec<(String, Vec<f64>, usize)> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i as u64 + 1;
        let bad = |msg: String| Error::Parse {
            path: label.to_string(),
            line: lineno,
            msg,
        };
        let rec: FrameRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let frame = rec.to_frame();
        if let Some(v) = validate(&frame).first() {
            return Err(bad(v.message.clone()));
        }
        if clips.last().map(|c| c.0 != rec.clip_id).unwrap_or(true) {
            clips.push((rec.clip_id.clone(), Vec::new(), 0));
        }
        let c = clips.last_mut().expect("pushed above");
        if rec.frame != c.2 {
            return Err(bad(format!("expected frame {}, got {}", c.2, rec.frame)));
        }
        c.1.extend_from_slice(&frame.values);
        c.2 += 1;
    }
    clips
        .into_iter()
        .map(|(id, data, n)| Ok((id, Matrix::new(n, FULL_DIM, data)?)))
        .collect()
}

pub fn load_features(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_features_jsonl(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_frame() -> FrameFeatures {
        let gaze = [1.0 / 9.0; 9];
        let mut hand = vec![0.5; 8];
        hand.extend([0.25; 4]);
        hand.extend([1.0 / 6.0; 6]);
        FrameFeatures::from_streams(&gaze, &hand, &[0.3, 0.25, 0.25, 0.25, 0.25], &[0.5; 20], &[0.1, 0.9])
    }

    #[test]
    fn schema_dimensions() {
        assert_eq!(StreamMask::ALL.dim(), FULL_DIM);
        assert_eq!(StreamMask::ALL.labels().len(), FULL_DIM);
        assert_eq!(Stream::Foot.offset(), 52);
        let hand: StreamMask = "hand".parse().unwrap();
        assert_eq!(hand.dim(), 23);
        assert_eq!(hand.table_flags(), [false, true, false, false]);
        assert!("".parse::<StreamMask>().is_err());
        assert!("gaze,wheel".parse::<StreamMask>().is_err());
    }

    #[test]
    fn uniform_gaze_is_valid() {
        assert!(validate(&uniform_frame()).is_empty());
    }

    #[test]
    fn zero_gaze_violates_simplex() {
        let mut f = uniform_frame();
        f.values[..9].fill(0.0);
        let v = validate(&f);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "gaze simplex sums to 0");
    }

    #[test]
    fn short_vector_violates_dimension() {
        let mut f = uniform_frame();
        f.values.pop();
        let v = validate(&f);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("dimension 53"));
    }

    #[test]
    fn all_violations_listed() {
        let mut f = uniform_frame();
        f.values[9] = 1.5; // arm joint
        f.values[53] = -0.2; // foot
        f.values[27] = 0.0; // hand-wheel distance ok, object simplex broken below
        f.values[28] = 0.9;
        assert!(validate(&f).len() >= 3);
    }

    #[test]
    fn projection_keeps_stream_slices() {
        let f = uniform_frame();
        let mask: StreamMask = "gaze,foot".parse().unwrap();
        let p = f.project(mask).unwrap();
        assert_eq!(p.values.len(), 11);
        assert_eq!(p.stream(Stream::Foot).unwrap(), &[0.1, 0.9]);
        assert!(validate(&p).is_empty());
        assert!(p.project(StreamMask::ALL).is_err());
    }

    #[test]
    fn mask_serde() {
        let m: StreamMask = "gaze,pose".parse().unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"["gaze","pose"]"#);
        assert_eq!(serde_json::from_str::<StreamMask>(&s).unwrap(), m);
    }

    #[test]
    fn default_config_is_valid() {
        GeneratorConfig::default().validate().unwrap();
        let mut bad = GeneratorConfig::default();
        bad.transition[2][0] += 0.1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn absorbing_vigilant_clip() {
        let cfg = GeneratorConfig::absorbing(LatentState::Vigilant);
        let clip = generate_clip(&mut RngState::new(5), &cfg, "c", 0).unwrap();
        assert!(clip.states.iter().all(|&s| s == LatentState::Vigilant));
        let level = cfg.readiness[0];
        assert!(clip.ground_truth.values.iter().all(|&v| (v - level).abs() < 1e-12));
        for t in 0..CLIP_FRAMES {
            assert!(validate(&clip.frame(t)).is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::default();
        let root = RngState::new(3);
        let a = generate_clip(&mut root.substream(1), &cfg, "c", 0).unwrap();
        let b = generate_clip(&mut root.substream(1), &cfg, "c", 0).unwrap();
        assert_eq!(a, b);
        let c = generate_clip(&mut root.substream(2), &cfg, "c", 0).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn perfect_raters_reproduce_ground_truth() {
        let cfg = GeneratorConfig::default();
        let clip = generate_clip(&mut RngState::new(8), &cfg, "c", 0).unwrap();
        let raters = vec![SimulatedRater::identity("a", 0.0), SimulatedRater::identity("b", 0.0)];
        let rs = simulate_rater_panel(&[&clip], &raters, &mut RngState::new(1)).unwrap();
        assert_eq!(rs.len(), 30);
        for r in &rs {
            let seg = &clip.ground_truth.values[r.segment_index * 60..(r.segment_index + 1) * 60];
            let mean = seg.iter().sum::<f64>() / 60.0;
            assert_eq!(r.value, mean.round() as u8);
        }
        assert!(simulate_rater_panel(&[&clip], &raters[..1], &mut RngState::new(1)).is_err());
    }

    #[test]
    fn distortion_is_strictly_increasing() {
        for r in default_panel() {
            let mut last = f64::NEG_INFINITY;
            for i in 0..=40 {
                let d = r.distortion(1.0 + 0.1 * i as f64);
                assert!(d > last);
                last = d;
            }
        }
    }

    #[test]
    fn windows_pad_and_count() {
        let feats = Matrix::from_fn(70, FULL_DIM, |r, c| (r * FULL_DIM + c) as f64).unwrap();
        let ori = OriSeries::from_values("c", vec![3.0; 70]).unwrap();
        let ws = make_windows("c", &feats, &ori).unwrap();
        assert_eq!(ws.len(), 70);
        for i in 0..WINDOW_LEN {
            assert_eq!(ws[0].inputs.row(i), feats.row(0));
        }
        assert_eq!(ws[69].inputs.row(0), feats.row(10));
        assert_eq!(ws[69].inputs.row(59), feats.row(69));
        assert_eq!(ws[5].inputs.row(59), feats.row(5));
        assert_eq!(ws[5].inputs.row(54), feats.row(0));
        assert_eq!(ws[5].inputs.row(55), feats.row(1));

        let constant = Matrix::from_fn(70, FULL_DIM, |_, c| c as f64).unwrap();
        let ws = make_windows("c", &constant, &ori).unwrap();
        assert!(ws.iter().all(|w| w.inputs == ws[0].inputs));
        assert!(make_windows("c", &Matrix::zeros(0, FULL_DIM), &ori).is_err());
    }

    #[test]
    fn corpus_proportions_scale() {
        let c = CorpusConfig::with_total(20).unwrap();
        assert_eq!(c.total_clips(), 20);
        c.validate().unwrap();
        assert!(CorpusConfig::with_total(0).is_err());
        let c = CorpusConfig::with_total(65).unwrap();
        assert_eq!((c.train_clips, c.val_clips, c.test_clips), (43, 8, 14));
    }

    #[test]
    fn jsonl_roundtrip() {
        let cfg = GeneratorConfig::default();
        let clip = generate_clip(&mut RngState::new(2), &cfg, "c7", 0).unwrap();
        let mut buf = Vec::new();
        write_features_jsonl(&mut buf, &[(clip.clip_id.clone(), &clip.features)]).unwrap();
        let back = read_features_jsonl(buf.as_slice(), "f.jsonl").unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].1, clip.features);
        let first: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(first["gaze"].as_array().unwrap().len(), 9);
        assert_eq!(first["hand_cam"].as_array().unwrap().len(), 18);
    }
}
