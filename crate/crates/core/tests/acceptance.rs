//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line. The test fails if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use readiness::agreement::{anova_from_rows, icc_a1, icc_ak, icc_c1, icc_table};
use readiness::eval::{
    build_datasets, constant_baseline_mae, correlate_features, dataset_smoothness, evaluate_mae,
    stack_frames,
};
use readiness::features::{CorpusConfig, GeneratorConfig, SyntheticCorpus};
use readiness::models::{
    train, Checkpoint, KeyFrameModelParams, Model, ModelKind, Regressor, SimpleModelParams,
    TrainConfig,
};
use readiness::numerics::{finite_diff_entry, relative_error, sigmoid, Matrix, RngState};
use readiness::ratings::{
    self, build_lookup_tables, from_unit, interpolate_ori, normalize_rating, segment_center,
    LookupTable,
};
use readiness::StreamMask;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. ICC oracle equivalence
// ---------------------------------------------------------------------------

struct OracleSs {
    ssr: f64,
    ssc: f64,
    sse: f64,
}

fn brute_force_ss(rows: &[Vec<f64>]) -> OracleSs {
    let n = rows.len();
    let k = rows[0].len();
    let total: f64 = rows.iter().flatten().sum();
    let gm = total / (n * k) as f64;
    let mut ssr = 0.0;
    for r in rows {
        let m = r.iter().sum::<f64>() / k as f64;
        ssr += k as f64 * (m - gm).powi(2);
    }
    let mut ssc = 0.0;
    for j in 0..k {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        ssc += n as f64 * (m - gm).powi(2);
    }
    let sst: f64 = rows.iter().flatten().map(|v| (v - gm).powi(2)).sum();
    OracleSs {
        ssr,
        ssc,
        sse: sst - ssr - ssc,
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = RngState::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 3 + rng.below(8);
        let k = 2 + rng.below(4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.uniform_range(1.0, 5.0)).collect())
            .collect();
        let a = anova_from_rows(&rows).map_err(|e| e.to_string())?;
        let o = brute_force_ss(&rows);
        worst = worst
            .max(relative_error(a.ssr, o.ssr, 1.0))
            .max(relative_error(a.ssc, o.ssc, 1.0))
            .max(relative_error(a.sse, o.sse, 1.0));

        // variance-component forms from the oracle sums of squares
        let (nf, kf) = (n as f64, k as f64);
        let msr = o.ssr / (nf - 1.0);
        let msc = o.ssc / (kf - 1.0);
        let mse = o.sse / ((nf - 1.0) * (kf - 1.0));
        let sr = (msr - mse) / kf;
        let sc = (msc - mse) / nf;
        let se = mse;
        let c1 = sr / (sr + se);
        let a1 = sr / (sr + sc + se);
        let ak = sr / (sr + (sc + se) / kf);
        let got = [
            icc_c1(&a).map_err(|e| e.to_string())?,
            icc_a1(&a).map_err(|e| e.to_string())?,
            icc_ak(&a, k).map_err(|e| e.to_string())?,
        ];
        for (g, w) in got.iter().zip([c1, a1, ak]) {
            worst = worst.max((g - w).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-9 && secs < 5.0,
        format!("max deviation {worst:.2e} over 200 matrices in {secs:.3}s"),
    )
}

// ---------------------------------------------------------------------------
// 2. Closed-form fixtures
// ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let perfect = vec![vec![1.0, 1.0, 1.0], vec![3.0, 3.0, 3.0], vec![4.0, 4.0, 4.0], vec![2.0, 2.0, 2.0]];
    let p = anova_from_rows(&perfect).map_err(|e| e.to_string())?;
    let shift = vec![vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 4.0]];
    let s = anova_from_rows(&shift).map_err(|e| e.to_string())?;
    let got = [
        icc_c1(&p).unwrap(),
        icc_a1(&p).unwrap(),
        icc_ak(&p, 3).unwrap(),
        icc_c1(&s).unwrap(),
        icc_a1(&s).unwrap(),
        icc_ak(&s, 2).unwrap(),
    ];
    let want = [1.0, 1.0, 1.0, 1.0, 2.0 / 3.0, 0.8];
    let worst = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    check(
        worst <= 1e-12,
        format!("shift fixture C1={:.12} A1={:.12} Ak={:.12}, max error {worst:.1e}", got[3], got[4], got[5]),
    )
}

// ---------------------------------------------------------------------------
// 3. Normalization properties
// ---------------------------------------------------------------------------

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn desk_config(seed: u64) -> GeneratorConfig {
    let mut cfg = GeneratorConfig::default();
    cfg.seed = seed;
    cfg.corpus = CorpusConfig::with_total(65).unwrap();
    cfg
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut min_rho: f64 = 1.0;
    let mut collapsed = Vec::new();
    for seed in 0..8 {
        let corpus = SyntheticCorpus::generate(&desk_config(seed)).map_err(|e| e.to_string())?;
        let tables = build_lookup_tables(&corpus.common_ratings()).map_err(|e| e.to_string())?;
        let mut by_rater: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in &corpus.ratings {
            let norm = tables.normalize(r).map_err(|e| e.to_string())?.value;
            let e = by_rater.entry(r.rater_id.as_str()).or_default();
            e.0.push(r.value as f64);
            e.1.push(norm);
        }
        for (rater, (raw, norm)) in &by_rater {
            let rho = spearman(raw, norm);
            min_rho = min_rho.min(rho);
            if (1.0 - rho).abs() >= 1e-12 {
                collapsed.push(format!("seed {seed} {rater}"));
            }
        }
    }

    let mut rng = RngState::new(3);
    let values: Vec<u8> = (0..200).map(|_| 1 + rng.below(5) as u8).collect();
    let table = LookupTable::new("r", values.clone());
    let combined = LookupTable::new(ratings::COMBINED_OWNER, values);
    let mut identity_err: f64 = 0.0;
    for v in 1..=5u8 {
        let out = normalize_rating(v, &table, &combined).map_err(|e| e.to_string())?;
        identity_err = identity_err.max((out - v as f64).abs());
    }

    let corpus = SyntheticCorpus::generate(&desk_config(7)).map_err(|e| e.to_string())?;
    let rows = icc_table(&corpus.common_ratings(), true).map_err(|e| e.to_string())?;
    let raw = rows.iter().find(|r| r.set == "common" && !r.normalized).unwrap();
    let norm = rows.iter().find(|r| r.set == "common" && r.normalized).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = (1.0 - min_rho).abs() < 1e-12
        && identity_err < 1e-12
        && norm.icc_a1 > raw.icc_a1
        && (norm.icc_c1 - raw.icc_c1).abs() < 0.05
        && secs < 10.0;
    check(
        ok,
        format!(
            "min Spearman {min_rho} (tied scores: {}), identity error {identity_err:.1e}, ICC(A,1) {:.3}->{:.3}, ICC(C,1) {:.3}->{:.3}, {secs:.2}s",
            if collapsed.is_empty() { "none".to_string() } else { collapsed.join(", ") },
            raw.icc_a1, norm.icc_a1, raw.icc_c1, norm.icc_c1
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. ORI construction
// ---------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let mut rng = RngState::new(44);
    let mut knot_err: f64 = 0.0;
    let mut const_err: f64 = 0.0;
    let mut unit_err: f64 = 0.0;
    for trial in 0..50 {
        let means: Vec<f64> = (0..15).map(|_| rng.uniform_range(1.0, 5.0)).collect();
        let ori = interpolate_ori(format!("c{trial}"), &means).map_err(|e| e.to_string())?;
        for (i, m) in means.iter().enumerate() {
            knot_err = knot_err.max((ori.values[segment_center(i)] - m).abs());
        }
        for (v, u) in ori.values.iter().zip(&ori.unit_values) {
            unit_err = unit_err.max((from_unit(*u) - v).abs());
        }
        let c = rng.uniform_range(1.0, 5.0);
        let flat = interpolate_ori("flat", &[c; 15]).map_err(|e| e.to_string())?;
        for v in &flat.values {
            const_err = const_err.max((v - c).abs());
        }
    }
    check(
        knot_err < 1e-9 && const_err < 1e-9 && unit_err <= 1e-12,
        format!("knot error {knot_err:.1e}, constant error {const_err:.1e}, unit round-trip {unit_err:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Gradient correctness
// ---------------------------------------------------------------------------

fn max_gradient_error<R: Regressor>(model: &R, window: &Matrix, per_block: usize, seed: u64) -> f64 {
    // target 0: the loss equals the prediction, which stays inside (0, 1)
    let mut grads = model.zeros_like();
    model.backprop(window, 0.0, &mut grads).unwrap();
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|(_, m)| m.data().to_vec()).collect();
    let mut f = |p: &R| p.predict(window).unwrap();
    let mut work = model.clone();
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for (b, grad) in analytic.iter().enumerate() {
        let picks: Vec<usize> = if grad.len() <= per_block {
            (0..grad.len()).collect()
        } else {
            (0..per_block).map(|_| rng.below(grad.len())).collect()
        };
        for i in picks {
            let fd = finite_diff_entry(&mut f, &mut work, b, i, 1e-5).unwrap();
            worst = worst.max(relative_error(grad[i], fd, 1e-6));
        }
    }
    worst
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let d = StreamMask::ALL.dim();
    let mut worst_simple: f64 = 0.0;
    let mut worst_key: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = RngState::new(500 + seed);
        let window = Matrix::from_fn(60, d, |_, _| rng.uniform()).unwrap();
        let simple = SimpleModelParams::init(d, &mut rng);
        worst_simple = worst_simple.max(max_gradient_error(&simple, &window, 30, seed));
        let key = KeyFrameModelParams::init(d, &mut rng);
        worst_key = worst_key.max(max_gradient_error(&key, &window, 30, seed));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_simple < 1e-4 && worst_key < 1e-4 && secs < 60.0,
        format!("max relative error simple {worst_simple:.2e}, keyframe {worst_key:.2e} over 5 instances, {secs:.1}s"),
    )
}

// ---------------------------------------------------------------------------
// 6. Key-frame invariants
// ---------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let d = StreamMask::ALL.dim();
    let mut rng = RngState::new(66);
    let model = KeyFrameModelParams::init(d, &mut rng);
    let mut sum_err: f64 = 0.0;
    let mut outside = 0usize;
    for _ in 0..1000 {
        let w = Matrix::from_fn(60, d, |_, _| rng.uniform()).unwrap();
        let out = model.predict_detailed(&w).map_err(|e| e.to_string())?;
        sum_err = sum_err.max((out.weights.iter().sum::<f64>() - 1.0).abs());
        let lo = out.ratings.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = out.ratings.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if out.output < lo - 1e-15 || out.output > hi + 1e-15 {
            outside += 1;
        }
    }
    let mut const_err: f64 = 0.0;
    for _ in 0..20 {
        let mut m = KeyFrameModelParams::init(d, &mut rng);
        let r = rng.uniform_range(0.05, 0.95);
        m.rating_w.fill(0.0);
        m.rating_b.data_mut()[0] = (r / (1.0 - r)).ln();
        for v in m.weight_w.data_mut() {
            *v = 5.0 * rng.normal();
        }
        let w = Matrix::from_fn(60, d, |_, _| rng.uniform()).unwrap();
        let out = m.predict(&w).map_err(|e| e.to_string())?;
        const_err = const_err.max((out - sigmoid(m.rating_b.data()[0])).abs()).max((out - r).abs());
    }
    check(
        sum_err < 1e-9 && outside == 0 && const_err < 1e-12,
        format!("weight-sum error {sum_err:.1e}, {outside}/1000 outside rating range, constant-rating error {const_err:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 7 & 8. Synthetic end-to-end learning and smoothness
// ---------------------------------------------------------------------------

struct EndToEnd {
    constant: f64,
    mae: BTreeMap<ModelKind, f64>,
    smooth: BTreeMap<ModelKind, f64>,
    seconds: f64,
}

fn end_to_end() -> Result<EndToEnd, String> {
    let start = Instant::now();
    let corpus = SyntheticCorpus::generate(&desk_config(7)).map_err(|e| e.to_string())?;
    let feats: Vec<_> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), c.features.clone()))
        .collect();
    let ori = corpus.rated_ori().map_err(|e| e.to_string())?;
    let data = build_datasets(&feats, &ori, &corpus.splits, StreamMask::ALL).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::desk();
    cfg.seed = 7;
    let mut mae = BTreeMap::new();
    let mut smooth = BTreeMap::new();
    for kind in ModelKind::ALL {
        let out = train(kind, &data.train, &data.val, &cfg).map_err(|e| e.to_string())?;
        mae.insert(kind, evaluate_mae(&out.model, &data.test, 1).map_err(|e| e.to_string())?);
        smooth.insert(kind, dataset_smoothness(&out.model, &data.test).map_err(|e| e.to_string())?);
    }
    Ok(EndToEnd {
        constant: constant_baseline_mae(&data.train, &data.test).map_err(|e| e.to_string())?,
        mae,
        smooth,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn criterion_7(e: &EndToEnd) -> Outcome {
    let key = e.mae[&ModelKind::Keyframe];
    let simple = e.mae[&ModelKind::Simple];
    let linear = e.mae[&ModelKind::Linear];
    let a = key <= 0.7 * e.constant;
    let b = key <= simple + 0.05;
    let c = linear >= key.max(simple) - 0.05;
    check(
        a && b && c && e.seconds < 900.0,
        format!(
            "test MAE keyframe {key:.4}, simple {simple:.4}, linear {linear:.4}, constant {:.4} ({:.0}% reduction), {:.0}s",
            e.constant,
            100.0 * (1.0 - key / e.constant),
            e.seconds
        ),
    )
}

fn criterion_8(e: &EndToEnd) -> Outcome {
    let key = e.smooth[&ModelKind::Keyframe];
    let simple = e.smooth[&ModelKind::Simple];
    check(
        key < simple,
        format!("mean |frame-to-frame delta| keyframe {key:.5}, simple {simple:.5}"),
    )
}

// ---------------------------------------------------------------------------
// 9. Correlation signs
// ---------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let mut cfg = desk_config(9);
    cfg.corpus = CorpusConfig::with_total(20).unwrap();
    let corpus = SyntheticCorpus::generate(&cfg).map_err(|e| e.to_string())?;
    let feats: Vec<_> = corpus
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), c.features.clone()))
        .collect();
    let (frames, ys) = stack_frames(&feats, &corpus.rated_ori().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let table = correlate_features(&frames, &ys, &StreamMask::ALL.labels()).map_err(|e| e.to_string())?;
    let r = |name: &str| table.iter().find(|c| c.feature == name).and_then(|c| c.r).unwrap_or(0.0);
    let expected = [
        ("object_phone_tablet", -1.0),
        ("left_hand_on_wheel", 1.0),
        ("right_hand_on_wheel", 1.0),
        ("gaze_forward", 1.0),
        ("hand_wheel_distance", -1.0),
        ("foot_gas_distance", -1.0),
        ("foot_brake_distance", -1.0),
    ];
    let mut ok = ys.len() >= 10_000;
    let mut parts = Vec::new();
    for (name, sign) in expected {
        let v = r(name);
        ok &= v * sign > 0.1;
        parts.push(format!("{name} {v:+.3}"));
    }
    check(ok, format!("{} frames: {}", ys.len(), parts.join(", ")))
}

// ---------------------------------------------------------------------------
// 10. Determinism and formats
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_readiness"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`{}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn drop_seconds_column(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in std::fs::read_dir(a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(&name)).map_err(|e| format!("{name:?}: {e}"))?;
        let same = if name == "training_log.csv" {
            // elapsed seconds are wall-clock
            drop_seconds_column(&String::from_utf8_lossy(&x)) == drop_seconds_column(&String::from_utf8_lossy(&y))
        } else {
            x == y
        };
        if !same {
            return Err(format!("{} differs between reruns", name.to_string_lossy()));
        }
        n += 1;
    }
    Ok(n)
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let data = p("gen_a");
    let train_args = |out: &str| {
        vec![
            "train".to_string(), "--data".into(), data.clone(), "--model".into(), "keyframe".into(),
            "--epochs".into(), "1".into(), "--stride".into(), "45".into(), "--eval-stride".into(),
            "45".into(), "--seed".into(), "1".into(), "--out".into(), out.to_string(),
        ]
    };
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("gen", vec!["gen".into(), "--clips".into(), "6".into(), "--raters".into(), "3".into(), "--seed".into(), "5".into()]),
        ("normalize", vec!["normalize".into(), "--ratings".into(), format!("{data}/ratings.csv")]),
        ("icc", vec!["icc".into(), "--ratings".into(), format!("{data}/ratings.csv"), "--normalized".into()]),
        ("ori", vec!["ori".into(), "--ratings".into(), format!("{data}/ratings.csv"), "--normalized".into()]),
        ("correlate", vec!["correlate".into(), "--data".into(), data.clone()]),
        ("train", train_args("")),
        ("eval", vec!["eval".into(), "--data".into(), data.clone(), "--checkpoint".into(), format!("{}/checkpoint.json", p("train_a"))]),
        ("ablate", vec![
            "ablate".into(), "--data".into(), data.clone(), "--grid".into(), "table2".into(), "--model".into(),
            "linear".into(), "--eval-stride".into(), "30".into(), "--seed".into(), "1".into(),
        ]),
    ];
    let mut files = 0;
    for (name, args) in &commands {
        for run in ["a", "b"] {
            let out = p(&format!("{name}_{run}"));
            let mut full: Vec<String> = if *name == "train" { train_args(&out) } else { args.clone() };
            if *name != "train" {
                full.push("--out".into());
                full.push(out);
            }
            let refs: Vec<&str> = full.iter().map(String::as_str).collect();
            run_cli(&refs)?;
        }
        files += compare_dirs(&root.join(format!("{name}_a")), &root.join(format!("{name}_b")))?;
    }

    let ablation = std::fs::read_to_string(root.join("ablate_a/ablation.csv")).map_err(|e| e.to_string())?;
    let ablation_rows = ablation.lines().count() - 1;

    let path = root.join("train_a/checkpoint.json");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let ck = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    let model = Model::from_checkpoint(&ck).map_err(|e| e.to_string())?;
    let again = model.to_checkpoint(ck.streams, ck.seed);
    let reparsed = Model::from_checkpoint(&Checkpoint::from_json(&again.to_json().unwrap()).unwrap()).unwrap();
    let bit_exact = again.to_json().unwrap() == text.trim_end()
        && reparsed == model
        && ck.blocks.iter().zip(&again.blocks).all(|(x, y)| {
            x.data.iter().zip(&y.data).all(|(u, v)| u.to_bits() == v.to_bits())
        });
    check(
        bit_exact && ablation_rows == 7,
        format!(
            "{} subcommands rerun, {files} files identical; ablation rows {ablation_rows}; checkpoint round-trip bit-exact: {bit_exact}",
            commands.len()
        ),
    )
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "ICC oracle equivalence", guarded(criterion_1)),
        (2, "closed-form ICC fixtures", guarded(criterion_2)),
        (3, "normalization properties", guarded(criterion_3)),
        (4, "ORI construction", guarded(criterion_4)),
        (5, "gradient correctness", guarded(criterion_5)),
        (6, "key-frame invariants", guarded(criterion_6)),
    ];
    let e2e = catch_unwind(end_to_end).unwrap_or_else(|_| Err("panicked".into()));
    match &e2e {
        Ok(e) => {
            results.push((7, "synthetic end-to-end learning", guarded(|| criterion_7(e))));
            results.push((8, "smoothness diagnostic", guarded(|| criterion_8(e))));
        }
        Err(msg) => {
            results.push((7, "synthetic end-to-end learning", Err(msg.clone())));
            results.push((8, "smoothness diagnostic", Err(msg.clone())));
        }
    }
    results.push((9, "correlation signs", guarded(criterion_9)));
    results.push((10, "determinism and formats", guarded(criterion_10)));

    println!();
    let mut failed = Vec::new();
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                println!("criterion {n:>2} FAIL  {name}: {detail}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
