//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p cxr-harmon --test acceptance`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cxr_harmon::covariate::{partition_pools, DrawCounts, DEFAULT_POOL_FRACTIONS};
use cxr_harmon::fixtures::{
    covariate_pair, identical_dataset, patch_dataset, synthetic_dataset, write_nih_fixture,
};
use cxr_harmon::image::scale_value;
use cxr_harmon::rng::SeededRng;
use cxr_harmon::transforms::draw_params;
use cxr_harmon::{
    apply_opt, attach_masks, auc, augment, build_covariate, class_mean_difference, merge, merge_or, op_point,
    rasterize, relabel, scale_pixels, subset, AugmentationSpec, CovariateParams, CovariateSpec, Dataset,
    Grid, MaskGeometry, MaskSet, Mode, Pathology, RawImage, ScoredSet, Target, TransformChain, TriState,
};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

fn random_set(rng: &mut SeededRng, n: usize, levels: Option<usize>) -> ScoredSet {
    loop {
        let scores: Vec<f64> = (0..n)
            .map(|_| match levels {
                Some(k) => rng.index_below(k) as f64 / (k - 1) as f64,
                None => rng.next_f64(),
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
        if let Ok(set) = ScoredSet::new(scores, labels) {
            if set.positives() > 0 && set.negatives() > 0 {
                return set;
            }
        }
    }
}

fn c1_calibration_map() -> Outcome {
    let mut rng = SeededRng::new(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let opt = rng.uniform(1e-6, 1.0 - 1e-6);
        let (x, y) = {
            let (a, b) = (rng.next_f64(), rng.next_f64());
            (a.min(b), a.max(b))
        };
        let f = |v: f64| apply_opt(v, opt).unwrap();
        check!(f(opt) == 0.5, "f(opt) = {} for opt {opt}", f(opt));
        check!(f(0.0) == 0.0 && f(1.0) == 1.0, "endpoints moved for opt {opt}");
        for side in [opt.next_down(), opt.next_up()] {
            let gap = (f(side) - 0.5).abs();
            worst = worst.max(gap);
            check!(gap <= 1e-12, "jump {gap:e} next to opt {opt}");
        }
        if x < y {
            check!(f(x) < f(y), "not increasing: f({x}) = {} >= f({y}) = {}", f(x), f(y));
        }
        check!(f(x) > 0.0 || x == 0.0, "positive score {x} mapped to 0");
    }
    Ok(format!("1000 pairs, largest gap beside opt {worst:.1e}"))
}

fn c2_auc_invariance() -> Outcome {
    let mut rng = SeededRng::new(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let set = random_set(&mut rng, 500, None);
        let opt = op_point(&set).unwrap();
        let cal: Vec<f64> = set.scores().iter().map(|&s| apply_opt(s, opt).unwrap()).collect();
        let cal = ScoredSet::new(cal, set.labels().to_vec()).unwrap();
        let d = (auc(&cal).unwrap() - auc(&set).unwrap()).abs();
        worst = worst.max(d);
        check!(d <= 1e-12, "auc moved by {d:e}");
    }
    Ok(format!("50 sets of 500, max |delta auc| {worst:e}"))
}

fn oracle_auc(set: &ScoredSet) -> f64 {
    let mut num = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, (&si, &li)) in set.scores().iter().zip(set.labels()).enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, (&sj, &lj)) in set.scores().iter().zip(set.labels()).enumerate() {
            if i != j && !lj {
                num += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    num as f64 / (2 * p * n) as f64
}

fn oracle_op_point(set: &ScoredSet) -> f64 {
    let (p, n) = (set.positives() as i128, set.negatives() as i128);
    let mut best: Option<(i128, f64)> = None;
    for &t in set.scores() {
        let (mut tp, mut fp) = (0i128, 0i128);
        for (&s, &l) in set.scores().iter().zip(set.labels()) {
            if s >= t {
                if l {
                    tp += 1
                } else {
                    fp += 1
                }
            }
        }
        // J scaled by P*N keeps the comparison exact
        let j = tp * n - fp * p;
        best = match best {
            Some((bj, bt)) if bj > j || (bj == j && bt >= t) => Some((bj, bt)),
            _ => Some((j, t)),
        };
    }
    best.unwrap().1.clamp(1e-6, 1.0 - 1e-6)
}

fn c3_oracles() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut tied = 0;
    for k in 0..100 {
        let n = 2 + rng.index_below(199);
        // every other set is heavily tied
        let levels = if k % 2 == 0 { Some(2 + rng.index_below(8)) } else { None };
        let set = random_set(&mut rng, n, levels);
        tied += usize::from(levels.is_some());
        let (a, o) = (auc(&set).unwrap(), oracle_auc(&set));
        check!(a == o, "auc {a} != oracle {o} (n={n})");
        let (p, q) = (op_point(&set).unwrap(), oracle_op_point(&set));
        check!(p == q, "op_point {p} != exhaustive {q} (n={n})");
    }
    Ok(format!("100 sets up to 200 scores, {tied} with heavy ties"))
}

fn c4_pixel_scaling() -> Outcome {
    for (depth, max) in [(8u8, 255u16), (16, u16::MAX)] {
        check!(scale_value(0, depth) == -1024.0, "{depth}-bit 0 -> {}", scale_value(0, depth));
        check!(scale_value(max, depth) == 1024.0, "{depth}-bit max -> {}", scale_value(max, depth));
        let img = RawImage::new(2, 1, depth, vec![0, max]).unwrap();
        check!(scale_pixels(&img).data() == [-1024.0, 1024.0], "{depth}-bit image endpoints");
    }
    let mut rng = SeededRng::new(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (depth, max) = if rng.next_f64() < 0.5 { (8u8, 255usize) } else { (16, 65535) };
        let (a, b) = (rng.index_below(max + 1) as u16, rng.index_below(max + 1) as u16);
        let want = (a as f64 - b as f64) * 2048.0 / max as f64;
        let err = ((scale_value(a, depth) - scale_value(b, depth)) - want).abs();
        worst = worst.max(err);
        check!(err <= 1e-9, "affine error {err:e} for {a},{b} at {depth} bits");
    }
    Ok(format!("endpoints exact, affine error max {worst:e}"))
}

fn label_bits(ds: &Dataset) -> Vec<Vec<u64>> {
    ds.labels().to_f64_rows().iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
}

fn c5_dataset_algebra() -> Outcome {
    let union: Vec<Pathology> = ["Effusion", "Mass", "Nodule", "Edema", "Pneumonia"]
        .iter()
        .map(|n| Pathology::new(n).unwrap())
        .collect();
    let sources = [
        synthetic_dataset("Alpha", &["Effusion", "Mass", "Nodule"], 30, 51).unwrap(),
        synthetic_dataset("Beta", &["Edema", "Effusion"], 25, 52).unwrap(),
        synthetic_dataset("Gamma", &["Pneumonia", "Mass", "Edema"], 20, 53).unwrap(),
    ];
    let mut corpus = Vec::new();
    for src in &sources {
        let (r, dropped) = relabel(src, &union).unwrap();
        check!(dropped.is_empty(), "relabel dropped {dropped:?}");
        // columns the source lacks are inserted as NaN; the rest are copied
        for (j, p) in union.iter().enumerate() {
            let col = r.labels().column(j);
            match src.pathologies().index_of(p) {
                Some(k) => check!(col == src.labels().column(k), "{} column {p} changed", src.name()),
                None => check!(col.iter().all(|t| t.to_f64().is_nan()), "{} column {p} not NaN", src.name()),
            }
        }
        corpus.push(r);
    }
    let merged = merge(&corpus).unwrap();
    check!(merged.len() == 75, "merged length {}", merged.len());
    let totals = merged.totals();
    for (k, (p, c)) in totals.0.iter().enumerate() {
        let (mut absent, mut present) = (0, 0);
        for part in &corpus {
            let t = part.totals().0[k].1;
            absent += t.absent;
            present += t.present;
        }
        check!((c.absent, c.present) == (absent, present), "totals not additive for {p}");
    }
    // brute-force label counts straight from the rows
    for (j, (p, c)) in totals.0.iter().enumerate() {
        let col = merged.labels().column(j);
        let present = col.iter().filter(|t| **t == TriState::Present).count();
        let absent = col.iter().filter(|t| **t == TriState::Absent).count();
        check!((c.absent, c.present) == (absent, present), "totals disagree with rows for {p}");
    }

    let mut rng = SeededRng::new(5);
    for _ in 0..50 {
        let pick = |rng: &mut SeededRng| -> Vec<Vec<usize>> {
            corpus
                .iter()
                .map(|d| (0..rng.index_below(8)).map(|_| rng.index_below(d.len())).collect())
                .collect()
        };
        let idx = pick(&mut rng);
        if idx.iter().all(Vec::is_empty) {
            continue;
        }
        let parts: Vec<Dataset> = corpus.iter().zip(&idx).map(|(d, i)| subset(d, i).unwrap()).collect();
        let lhs = merge(&parts).unwrap();
        let mut offset = 0;
        let mut global = Vec::new();
        for (d, i) in corpus.iter().zip(&idx) {
            global.extend(i.iter().map(|k| k + offset));
            offset += d.len();
        }
        let rhs = subset(&merged, &global).unwrap();
        check!(label_bits(&lhs) == label_bits(&rhs), "merge/subset labels differ for {idx:?}");
        for k in 0..lhs.len() {
            check!(lhs.origin(k) == rhs.origin(k), "merge/subset origin differs at {k}");
        }
    }

    let s = subset(&merged, &[0, 5, 60]).unwrap();
    let header = s.render_summary();
    let first = header.lines().next().unwrap_or("");
    check!(first.starts_with("SubsetDataset num_samples=3"), "summary header {first:?}");
    check!(s.summary().num_samples == 3, "num_samples {}", s.summary().num_samples);
    Ok(format!("3 sources, 75 rows, 50 subset/merge draws; {first}"))
}

fn c6_covariate() -> Outcome {
    let seed = 6;
    let (d1, d2) = covariate_pair("Effusion", 20, seed).unwrap();
    for ds in [&d1, &d2] {
        let t = Target::Pathology("Effusion".into()).resolve(ds).unwrap();
        let pools = partition_pools(ds, &t, seed, DEFAULT_POOL_FRACTIONS).unwrap();
        let all = [&pools.train, &pools.valid, &pools.test];
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            check!(all[a].iter().all(|i| !all[b].contains(i)), "{} pools overlap", ds.name());
        }
    }
    let mut fractions = Vec::new();
    for r in [0.1, 0.25, 0.5, 0.75, 0.9] {
        for mode in [Mode::Train, Mode::Valid, Mode::Test] {
            let params = CovariateParams::new("Effusion", mode, r, seed);
            let rho = params.effective_ratio();
            let spec = CovariateSpec { d1: d1.clone(), d2: d2.clone(), params };
            let split = build_covariate(&spec).unwrap();
            let ds = &split.dataset;
            check!(ds.len() == 40, "r={r} {mode}: size {}", ds.len());
            let col = ds.labels().column(0);
            let pos = col.iter().filter(|t| **t == TriState::Present).count();
            check!(pos == 20, "r={r} {mode}: {pos} positives of 40");
            let pos_d1 = split
                .members
                .iter()
                .zip(col)
                .filter(|((src, _), t)| *src == 0 && *t == TriState::Present)
                .count();
            let want = ((1.0 - rho) * 20.0).round() as usize;
            check!(pos_d1 == want, "r={r} {mode}: d1 positives {pos_d1}, want {want}");
            check!(DrawCounts::new(20, rho).pos_d1 == want, "draw counts disagree");
            let again = build_covariate(&spec).unwrap();
            check!(
                split.manifest_bytes().unwrap() == again.manifest_bytes().unwrap(),
                "r={r} {mode}: rerun differs"
            );
            if mode == Mode::Train {
                fractions.push(format!("{r}:{}/20", pos_d1));
            }
        }
    }
    Ok(format!("all modes size 40, 20 positives; train d1 positives {}", fractions.join(" ")))
}

fn c7_masks() -> Outcome {
    let grids: Vec<Grid> = (0..512u32)
        .map(|m| Grid::new(3, 3, (0..9).map(|b| f64::from((m >> b) & 1)).collect()).unwrap())
        .collect();
    let code = |g: &Grid| -> Option<usize> {
        g.data().iter().enumerate().try_fold(0usize, |acc, (b, &v)| match v {
            0.0 => Some(acc),
            1.0 => Some(acc | 1 << b),
            _ => None,
        })
    };
    let mut table = vec![0usize; 512 * 512];
    for a in 0..512 {
        check!(merge_or(&[grids[a].clone(), grids[a].clone()]).unwrap() == grids[a], "not idempotent at {a}");
        for b in 0..512 {
            let ab = merge_or(&[grids[a].clone(), grids[b].clone()]).unwrap();
            table[a * 512 + b] = code(&ab).ok_or_else(|| format!("non-binary result for {a},{b}"))?;
        }
    }
    for a in 0..512 {
        for b in 0..a {
            check!(table[a * 512 + b] == table[b * 512 + a], "not commutative at {a},{b}");
        }
    }
    // associativity over all triples, reading the operation off the table
    for a in 0..512 {
        for b in 0..512 {
            let ab = table[a * 512 + b];
            for c in 0..512 {
                let left = table[ab * 512 + c];
                let right = table[a * 512 + table[b * 512 + c]];
                if left != right {
                    return Err(format!("not associative at {a},{b},{c}"));
                }
            }
        }
    }

    let boxes = [MaskGeometry::Box { x: 0, y: 0, w: 2, h: 2 }, MaskGeometry::Box { x: 1, y: 1, w: 2, h: 2 }];
    let raster: Vec<Grid> = boxes.iter().map(|b| rasterize(b, 4, 4).unwrap()).collect();
    let ones = merge_or(&raster).unwrap().data().iter().filter(|&&v| v == 1.0).count();
    check!(ones == 7, "overlapping boxes give {ones} ones");

    let n = 33;
    let img = Grid::from_fn(n, n, |r, c| if (r, c) == (16, 16) { 1024.0 } else { -1024.0 });
    let mask = Grid::from_fn(n, n, |r, c| if r.abs_diff(16) <= 1 && c.abs_diff(16) <= 1 { 1.0 } else { 0.0 });
    let set = MaskSet::from_pairs(vec![(0, mask)]).unwrap();
    let mut rng = SeededRng::new(7);
    for _ in 0..100 {
        let seed = rng.next_u64();
        let (out, masks) = augment(&img, Some(&set), seed, &AugmentationSpec::default()).unwrap();
        let (r, c) = out.argmax();
        let m = masks.unwrap().get(0).unwrap().get(r, c);
        check!(m >= 0.5, "seed {seed}: brightest pixel ({r},{c}) outside mask ({m})");
    }
    Ok("512 grids exhaustive (134M triples), union of boxes = 7, 100 impulse seeds".into())
}

fn c8_transform_determinism() -> Outcome {
    let ds = attach_masks(&synthetic_dataset("Synth", &["Effusion", "Mass"], 40, 8).unwrap(), true).unwrap();
    let chain: TransformChain = "crop,resize:16,augment".parse().unwrap();
    let bits = |g: &Grid| g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let mut rng = SeededRng::new(8);
    for _ in 0..50 {
        let (i, seed) = (rng.index_below(ds.len()), rng.next_u64());
        let a = ds.get_sample(i, Some(&chain), Some(seed)).unwrap();
        let b = ds.get_sample(i, Some(&chain), Some(seed)).unwrap();
        check!(bits(&a.img) == bits(&b.img), "image differs for ({i},{seed})");
        check!(a.lab == b.lab, "labels differ for ({i},{seed})");
        let (ma, mb) = (a.pathology_masks.unwrap(), b.pathology_masks.unwrap());
        check!(ma.len() == mb.len(), "mask count differs for ({i},{seed})");
        for (x, y) in ma.grids().zip(mb.grids()) {
            check!(bits(x) == bits(y), "mask differs for ({i},{seed})");
        }
    }
    let spec = AugmentationSpec::default();
    for k in 0..10_000u64 {
        let (rows, cols) = (1 + (k % 97) as usize, 1 + (k % 89) as usize);
        let p = draw_params(&spec, rng.next_u64(), rows, cols);
        check!(p.rotation_deg.abs() <= 45.0, "rotation {}", p.rotation_deg);
        check!(p.tx.abs() <= 0.15 * cols as f64, "tx {} for width {cols}", p.tx);
        check!(p.ty.abs() <= 0.15 * rows as f64, "ty {} for height {rows}", p.ty);
        check!((0.9..=1.1).contains(&p.scale), "scale {}", p.scale);
    }
    Ok("50 (index, seed) pairs bit-identical, 10000 draws in bounds".into())
}

fn c9_class_difference() -> Outcome {
    let patch = (5, 9, 4, 3);
    let ds = patch_dataset(16, patch, 12, 12, 9).unwrap();
    let effusion = Pathology::new("Effusion").unwrap();
    let diff = class_mean_difference(&ds, &effusion, 16).unwrap();
    let abs = diff.map(f64::abs);
    let (r, c) = abs.argmax();
    let (pr, pc, ph, pw) = patch;
    check!(
        (pr..pr + ph).contains(&r) && (pc..pc + pw).contains(&c),
        "max |difference| at ({r},{c}) outside patch {patch:?}"
    );
    let same = identical_dataset(12, 12, 10).unwrap();
    let zero = class_mean_difference(&same, &effusion, 12).unwrap();
    let worst = zero.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check!(worst <= 1e-9, "identical images give |difference| {worst:e}");
    Ok(format!("peak at ({r},{c}) inside patch, identical fixture max {worst:e}"))
}

fn cli(args: &[&str]) -> (i32, Value, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_cxr-harmon")).args(args).output().unwrap();
    let v = serde_json::from_slice(&o.stdout).unwrap_or(Value::Null);
    (o.status.code().unwrap_or(-1), v, String::from_utf8_lossy(&o.stderr).into_owned())
}

fn c10_cli_pipeline() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let profile = write_nih_fixture(&dir.join("nih")).unwrap();
    let p = profile.to_str().unwrap();
    let s = |q: &Path| q.to_str().unwrap().to_string();

    let pre = dir.join("pre");
    let (code, v, err) = cli(&["preprocess", p, "--res", "8", "--out", &s(&pre)]);
    check!(code == 0, "preprocess exit {code}: {err}");
    check!(v["format_version"] == 1, "preprocess stdout {v}");
    check!(v["artifacts"].as_array().map(Vec::len) == Some(24), "preprocess artifacts {v}");
    let mut rows = String::from("id,score,label\n");
    for i in 0..12 {
        let header: Value =
            serde_json::from_slice(&fs::read(pre.join(format!("{i:06}.json"))).unwrap()).unwrap();
        for key in [
            "format_version",
            "index",
            "data",
            "shape",
            "dtype",
            "byte_order",
            "range",
            "transform",
            "labels",
        ] {
            check!(!header[key].is_null(), "sample {i} header lacks {key}");
        }
        check!(header["shape"] == serde_json::json!([1, 8, 8]), "sample {i} shape {}", header["shape"]);
        let data = fs::read(pre.join(header["data"].as_str().unwrap())).unwrap();
        check!(data.len() == 64 * 4, "sample {i} has {} bytes", data.len());
        let vals: Vec<f32> = data.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        check!(vals.iter().all(|v| (-1024.0..=1024.0).contains(v)), "sample {i} out of range");
        let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / 64.0;
        let label = match header["labels"]["Effusion"].as_u64() {
            Some(l) => l.to_string(),
            None => String::new(),
        };
        // a toy score: image brightness, nudged by the label so classes separate
        let bump = if label == "1" { 0.3 } else { 0.0 };
        let score = ((mean + 1024.0) / 2048.0 * 0.6 + bump).clamp(0.0, 1.0);
        rows.push_str(&format!("s{i},{score},{label}\n"));
    }
    let scores = dir.join("Effusion.csv");
    fs::write(&scores, &rows).unwrap();

    let params = dir.join("params.json");
    let (code, v, err) = cli(&["calibrate", "--scores", &s(&scores), "--out", &s(&params)]);
    check!(code == 0, "calibrate exit {code}: {err}");
    let report = &v["pathologies"]["Effusion"];
    check!(report["n"] == 12 && report["positives"] == 4, "calibrate report {v}");
    let saved: Value = serde_json::from_slice(&fs::read(&params).unwrap()).unwrap();
    check!(saved["format_version"] == 1, "params {saved}");
    let opt = saved["opts"]["Effusion"].as_f64().ok_or(format!("params {saved}"))?;
    check!(opt > 0.0 && opt < 1.0, "opt {opt}");

    let calibrated = dir.join("calibrated.csv");
    let (code, _, err) =
        cli(&["apply", "--scores", &s(&scores), "--params", &s(&params), "--out", &s(&calibrated)]);
    check!(code == 0, "apply exit {code}: {err}");
    let out = fs::read_to_string(&calibrated).unwrap();
    let (inp, outp): (Vec<&str>, Vec<&str>) = (rows.lines().collect(), out.lines().collect());
    check!(outp.first() == inp.first() && outp.len() == inp.len(), "apply output shape");
    for (a, b) in inp.iter().zip(&outp).skip(1) {
        let (fa, fb): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), b.split(',').collect());
        check!(fa[0] == fb[0] && fa[2] == fb[2], "apply changed id or label: {b}");
        let want = apply_opt(fa[1].parse().unwrap(), opt).unwrap();
        let got: f64 = fb[1].parse().unwrap();
        check!(got == want, "apply wrote {got}, map gives {want}");
    }

    let (code, stats, err) = cli(&["stats", p]);
    check!(code == 0, "stats exit {code}: {err}");
    check!(stats["num_samples"] == 12 && stats["format_version"] == 1, "stats {stats}");
    check!(stats["totals"]["Effusion"]["0"] == 8 && stats["totals"]["Effusion"]["1"] == 4, "stats totals");

    let bad_out = dir.join("never.json");
    let (scores, x, never) = (s(&scores), s(&dir.join("x")), s(&bad_out));
    let failures = [
        (vec!["stats"], 1),
        (vec!["calibrate", "--scores", &scores], 1),
        (vec!["preprocess", p, "--res", "0", "--out", &x], 1),
        (vec!["calibrate", "--scores", "missing.csv", "--out", &never], 2),
        (vec!["stats", "no/such/profile.json"], 2),
    ];
    for (args, want) in &failures {
        let (code, _, _) = cli(args);
        check!(code == *want, "{args:?} exited {code}, want {want}");
    }
    check!(!bad_out.exists(), "failed calibrate left an output behind");
    Ok(format!(
        "preprocess, calibrate (opt {opt:.4}), apply, stats ok; {} failure exits checked",
        failures.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("calibration map exactness", c1_calibration_map),
        ("auc invariance under calibration", c2_auc_invariance),
        ("auc and op_point oracle equivalence", c3_oracles),
        ("pixel scaling endpoints and affinity", c4_pixel_scaling),
        ("dataset algebra", c5_dataset_algebra),
        ("covariate splits", c6_covariate),
        ("mask semantics", c7_masks),
        ("transform determinism and draw bounds", c8_transform_determinism),
        ("class-mean difference", c9_class_difference),
        ("cli pipeline", c10_cli_pipeline),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({ms} ms): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({ms} ms): {detail}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
