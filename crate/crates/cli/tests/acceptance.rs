//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use image::RgbImage;
use mixstereo::dataset::{
    decode_sintel_disparity, pretraining_datasets, read_kitti_disparity, read_pfm, read_sintel_disparity,
    write_kitti_disparity, write_pfm, Catalog, DataKind, DatasetDescriptor, ReaderKind,
};
use mixstereo::eval::{
    avg_err, bad_tau, end_point_error, fg_bg_ratio, region_eval, render_report, round2, Layout, MethodRow,
    RegionMask,
};
use mixstereo::model::{
    build_correlation_pyramid, convex_upsample, image_to_tensor, infer, Architecture, FeatureMap,
    InferenceSession, ModelWeights,
};
use mixstereo::pipeline::{build_manifest, expected_proportions, sample_epoch, ReplicationPolicy};
use mixstereo::tensor::{avg_pool_last, Tensor};
use mixstereo::DisparityMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn manifest_arithmetic() -> Check {
    let t = Instant::now();
    let pre = Catalog {
        datasets: pretraining_datasets(),
        ..Catalog::empty()
    };
    let mixed = build_manifest(&pre, &ReplicationPolicy::pretrain()).map_err(|e| e.to_string())?;
    ensure(mixed.total() == 964_741, || format!("pretrain total {}", mixed.total()))?;
    let ones = ReplicationPolicy::uniform(pre.datasets.iter().map(|d| d.name.as_str()));
    let ones = build_manifest(&pre, &ones).map_err(|e| e.to_string())?;
    ensure(ones.total() == 643_963, || format!("all-ones total {}", ones.total()))?;
    let fine = build_manifest(&Catalog::reference(), &ReplicationPolicy::finetune()).map_err(|e| e.to_string())?;
    ensure(fine.total() == 1_745, || format!("finetune total {}", fine.total()))?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("964741 / 643963 / 1745 in {:?}", t.elapsed()))
}

// (method, backgr., foregr., published ratio)
const KITTI_REGION_ROWS: [(&str, f64, f64, f64); 18] = [
    ("LEAStereo", 1.40, 2.91, 2.08),
    ("ACVNet", 1.37, 3.07, 2.24),
    ("CREStereo", 1.45, 2.86, 1.97),
    ("CSPN", 1.51, 2.88, 1.91),
    ("GANet", 1.48, 3.46, 2.34),
    ("OptStereo", 1.50, 3.43, 2.29),
    ("AMNet", 1.53, 3.43, 2.24),
    ("AcfNet", 1.51, 3.80, 2.52),
    ("RaftStereo", 1.75, 2.89, 1.65),
    ("raft+", 1.60, 2.98, 1.86),
    ("CRE++", 1.55, 3.53, 2.28),
    ("MaskLacGwc", 1.65, 3.68, 2.23),
    ("iRaftStereo_RVC", 1.88, 3.03, 1.61),
    ("GANet_REF", 1.88, 4.58, 2.44),
    ("CroCo", 2.04, 3.75, 1.84),
    ("GEStereo", 2.29, 4.79, 2.09),
    ("SGM", 5.06, 13.00, 2.57),
    ("ELAS_RVC", 7.38, 21.15, 2.87),
];

fn region_ratios() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (name, bg, fg, published) in KITTI_REGION_ROWS {
        let r = fg_bg_ratio(fg, bg).map_err(|e| e.to_string())?;
        let err = (round2(r) - published).abs();
        worst = worst.max((r - published).abs());
        ensure(err <= 0.01 + 1e-12, || format!("{name}: {r:.4} vs {published}"))?;
    }
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("18 ratios, max raw deviation {worst:.4}"))
}

fn report_rendering() -> Check {
    let t = Instant::now();
    let columns = [
        ("KITTI-2015", "full", "bad 3.0"),
        ("KITTI-2015", "full", "avgerr"),
        ("Middlebury", "half", "bad 2.0"),
        ("Middlebury", "half", "avgerr"),
        ("Middlebury", "quarter", "bad 2.0"),
        ("Middlebury", "quarter", "avgerr"),
        ("ETH3D", "full", "bad 1.0"),
        ("ETH3D", "full", "avgerr"),
    ];
    let data: [(&str, [f64; 8]); 3] = [
        ("Mixed Dataset", [5.49, 1.10, 10.04, 1.64, 8.44, 0.98, 2.59, 0.25]),
        ("SceneFlow", [6.30, 1.77, 11.89, 1.59, 8.59, 1.01, 3.42, 0.30]),
        ("CreStereo", [7.60, 1.30, 18.54, 2.56, 15.45, 1.41, 4.20, 0.29]),
    ];
    let rows: Vec<MethodRow> = data
        .iter()
        .map(|(m, vals)| {
            let mut row = MethodRow::new(m, 0);
            for ((ds, res, metric), v) in columns.iter().zip(vals) {
                row.push(ds, res, "all", metric, Some(*v));
            }
            row
        })
        .collect();
    let report = render_report(&rows, Layout::Table2).map_err(|e| e.to_string())?;
    let expected = [
        "| Method | KITTI-2015 bad 3.0 | KITTI-2015 avgerr | Middlebury Half bad 2.0 | Middlebury Half avgerr | Middlebury Quarter bad 2.0 | Middlebury Quarter avgerr | ETH3D bad 1.0 | ETH3D avgerr |",
        "|:--|--:|--:|--:|--:|--:|--:|--:|--:|",
        "| Mixed Dataset | **5.49** | **1.10** | **10.04** | <u>1.64</u> | **8.44** | **0.98** | **2.59** | **0.25** |",
        "| SceneFlow | <u>6.30</u> | 1.77 | <u>11.89</u> | **1.59** | <u>8.59</u> | <u>1.01</u> | <u>3.42</u> | 0.30 |",
        "| CreStereo | 7.60 | <u>1.30</u> | 18.54 | 2.56 | 15.45 | 1.41 | 4.20 | <u>0.29</u> |",
    ];
    let got: Vec<&str> = report.markdown.lines().collect();
    ensure(got == expected, || format!("rendered:\n{}", report.markdown))?;
    let mixed_bold = got[2].matches("**").count() / 2;
    ensure(mixed_bold == 7, || format!("Mixed bold in {mixed_bold} columns"))?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok("Mixed bold in 7 columns, SceneFlow bold at 1.59".into())
}

fn random_features(rng: &mut ChaCha8Rng, f: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap(Tensor::from_fn([1, f, h, w], |_, _, _, _| rng.random_range(-1.0f32..1.0)))
}

fn correlation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let cases = 120;
    for case in 0..cases {
        let (f, h, w) = if case == 0 {
            (8, 16, 8)
        } else {
            (rng.random_range(1..=8), rng.random_range(1..=16), rng.random_range(1..=8))
        };
        let fl = random_features(&mut rng, f, h, w);
        let fr = random_features(&mut rng, f, h, w);
        let pyr = build_correlation_pyramid(&fl, &fr, 4).map_err(|e| e.to_string())?;
        let base = &pyr.levels[0];
        for i in 0..h {
            for j in 0..w {
                for k in 0..w {
                    let mut s = 0.0f64;
                    for c in 0..f {
                        s += fl.0.at(0, c, i, j) as f64 * fr.0.at(0, c, i, k) as f64;
                    }
                    let want = s / (f as f64).sqrt();
                    let err = (base.get(i, j, k) as f64 - want).abs();
                    worst = worst.max(err);
                    ensure(err <= 1e-5, || format!("case {case} ({i},{j},{k}): error {err:e}"))?;
                }
            }
        }
        let base_t = Tensor::new([1, h, w, w], base.data.clone()).map_err(|e| e.to_string())?;
        for (l, level) in pyr.levels.iter().enumerate().skip(1) {
            let want = avg_pool_last(&base_t, 1 << l).map_err(|e| e.to_string())?;
            ensure(level.data == want.data(), || format!("case {case}: level {l} differs from pooled level 0"))?;
        }
    }
    Ok(format!("{cases} cases, max level-0 error {worst:.1e}, pooled levels exact"))
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = 1200;
    for case in 0..cases {
        let (w, h) = (rng.random_range(1..24), rng.random_range(1..12));
        let n = w * h;
        let gt_vals: Vec<f32> = (0..n).map(|_| rng.random_range(0.0f32..200.0)).collect();
        let mut gt_mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        gt_mask[rng.random_range(0..n)] = true;
        let pred_vals: Vec<f32> = gt_vals.iter().map(|g| g + rng.random_range(-6.0f32..6.0)).collect();
        let fg: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let tau = [0.5, 1.0, 2.0, 3.0, rng.random_range(0.01..8.0)][case % 5];

        let gt = DisparityMap::with_mask(w, h, gt_vals.clone(), gt_mask.clone());
        let pred = DisparityMap::from_values(w, h, pred_vals.clone());
        let epe = end_point_error(&pred, &gt).map_err(|e| e.to_string())?;

        let errs: Vec<(f64, bool)> = (0..n)
            .filter(|&i| gt_mask[i])
            .map(|i| ((pred_vals[i] as f64 - gt_vals[i] as f64).abs(), fg[i]))
            .collect();
        let m = errs.len() as f64;
        let want_bad = 100.0 * errs.iter().filter(|(e, _)| *e > tau).count() as f64 / m;
        let want_avg = errs.iter().map(|(e, _)| e).sum::<f64>() / m;
        let bad = bad_tau(&epe, tau).map_err(|e| e.to_string())?;
        let avg = avg_err(&epe).map_err(|e| e.to_string())?;
        ensure((bad - want_bad).abs() <= 1e-9, || format!("case {case}: bad {bad} vs {want_bad}"))?;
        // f32 storage of the per-pixel error bounds the agreement.
        ensure((avg - want_avg).abs() <= 1e-9 * want_avg.max(1.0) + 1e-5, || {
            format!("case {case}: avgerr {avg} vs {want_avg}")
        })?;

        let r = region_eval(&epe, &RegionMask::new(w, h, fg.clone()), tau).map_err(|e| e.to_string())?;
        let nfg = errs.iter().filter(|(_, f)| *f).count() as f64;
        let nbg = m - nfg;
        let pooled = (r.background.unwrap_or(0.0) * nbg + r.foreground.unwrap_or(0.0) * nfg) / m;
        ensure((r.all - pooled).abs() <= 1e-9, || format!("case {case}: all {} vs {pooled}", r.all))?;
        ensure((r.all - want_bad).abs() <= 1e-9, || format!("case {case}: region all {} vs {want_bad}", r.all))?;
    }
    Ok(format!("{cases} instances"))
}

fn sampler_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cases = 60;
    for case in 0..cases {
        let mut catalog = Catalog::empty();
        let mut factors = BTreeMap::new();
        for d in 0..rng.random_range(1..6) {
            let name = format!("set{d}");
            let count = rng.random_range(1..300);
            catalog.upsert(DatasetDescriptor::new(&name, DataKind::Synthetic, count, ReaderKind::TwoView));
            factors.insert(name, rng.random_range(1..8u32));
        }
        let policy = ReplicationPolicy::new(factors).map_err(|e| e.to_string())?;
        let m = build_manifest(&catalog, &policy).map_err(|e| e.to_string())?;
        let seed: u64 = rng.random();
        let stream = sample_epoch(&m, seed);
        let mut seen = vec![false; m.entries.len()];
        for &i in stream.order() {
            ensure(!std::mem::replace(&mut seen[i as usize], true), || format!("case {case}: entry {i} repeated"))?;
        }
        ensure(seen.iter().all(|&s| s), || format!("case {case}: entries missing"))?;
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for e in sample_epoch(&m, seed) {
            *freq.entry(m.dataset_name(e)).or_default() += 1;
        }
        let total = m.total() as f64;
        for (name, share) in expected_proportions(&catalog, &policy).map_err(|e| e.to_string())? {
            let got = freq.get(name.as_str()).copied().unwrap_or(0) as f64 / total;
            ensure(got == share, || format!("case {case}: {name} frequency {got} vs {share}"))?;
        }
        let a: Vec<_> = sample_epoch(&m, seed).cloned().collect();
        let b: Vec<_> = sample_epoch(&m, seed).cloned().collect();
        ensure(a == b, || format!("case {case}: seed {seed} not reproducible"))?;
    }
    Ok(format!("{cases} random catalogs"))
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]))
}

fn model_invariants() -> Check {
    let t = Instant::now();
    let small = Architecture::small();
    let weights = ModelWeights::random(&small, 7).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let (l, r) = (random_image(&mut rng, 96, 64), random_image(&mut rng, 96, 64));
    let mut session =
        InferenceSession::new(&image_to_tensor(&l), &image_to_tensor(&r), &weights).map_err(|e| e.to_string())?;
    let mut peak = 0.0f32;
    for it in 0..64 {
        session.step().map_err(|e| e.to_string())?;
        let m = session.state().max_abs();
        peak = peak.max(m);
        ensure(m <= 1.0, || format!("GRU state {m} after {} iterations", it + 1))?;
    }

    for _ in 0..20 {
        let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
        let d = rng.random_range(-50.0f32..50.0);
        let logits = Tensor::from_fn([1, 144, h, w], |_, _, _, _| rng.random_range(-10.0f32..10.0));
        let up = convex_upsample(&Tensor::full([1, 1, h, w], d), &logits).map_err(|e| e.to_string())?;
        ensure(up.shape() == [1, 1, 4 * h, 4 * w], || format!("upsample shape {:?}", up.shape()))?;
        for &v in up.data() {
            ensure((v - 4.0 * d).abs() <= 1e-5 * (1.0 + d.abs()), || format!("upsampled {v} vs {}", 4.0 * d))?;
        }
    }

    let mut sizes = vec![(1u32, 1u32), (1242, 375)];
    while sizes.len() < 20 {
        sizes.push((rng.random_range(1..160), rng.random_range(1..100)));
    }
    for &(w, h) in &sizes {
        let (l, r) = (random_image(&mut rng, w, h), random_image(&mut rng, w, h));
        let out = infer(&l, &r, &weights, small.iters).map_err(|e| e.to_string())?;
        ensure(out.dims() == (w as usize, h as usize), || format!("{w}x{h} gave {:?}", out.dims()))?;
        if w == 1242 || w * h < 2000 {
            let again = infer(&l, &r, &weights, small.iters).map_err(|e| e.to_string())?;
            let same = out.data().iter().zip(again.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("{w}x{h}: runs differ"))?;
        }
    }

    let standard = ModelWeights::random(&Architecture::standard(), 8).map_err(|e| e.to_string())?;
    let (l, r) = (random_image(&mut rng, 128, 64), random_image(&mut rng, 128, 64));
    let a = infer(&l, &r, &standard, 4).map_err(|e| e.to_string())?;
    let b = infer(&l, &r, &standard, 4).map_err(|e| e.to_string())?;
    ensure(a.dims() == (128, 64), || format!("standard run gave {:?}", a.dims()))?;
    ensure(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), || {
        "standard runs differ".into()
    })?;
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!("GRU peak {peak:.4}, 20 sizes, deterministic, {:?}", t.elapsed()))
}

fn self_similarity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (f, h, w) = (32, 16, 32);
    let feats = Tensor::from_fn([1, f, h, w], |_, _, _, _| rng.sample(StandardNormal));
    let fm = FeatureMap(feats);
    let pyr = build_correlation_pyramid(&fm, &fm, 1).map_err(|e| e.to_string())?;
    let base = &pyr.levels[0];
    let mut hits = 0;
    for i in 0..h {
        for j in 0..w {
            let row = base.row(i, j);
            let arg = (0..w).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            hits += (arg == j) as usize;
        }
    }
    let share = hits as f64 / (h * w) as f64;
    ensure(share >= 0.99, || format!("argmax at j for {:.2}% of positions", 100.0 * share))?;
    Ok(format!("{:.2}% of positions", 100.0 * share))
}

fn format_roundtrips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..30));
        let vals: Vec<f32> = (0..w * h)
            .map(|_| f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff) * if rng.random() { 1.0 } else { -1.0 })
            .collect();
        let mask: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.9)).collect();
        let map = DisparityMap::with_mask(w, h, vals, mask);
        let back = read_pfm(&write_pfm(&map)).map_err(|e| e.to_string())?;
        ensure(back.dims() == map.dims() && back.mask() == map.mask(), || format!("PFM case {case}: mask differs"))?;
        for i in 0..w * h {
            if map.mask()[i] {
                ensure(back.data()[i].to_bits() == map.data()[i].to_bits(), || {
                    format!("PFM case {case}: pixel {i} {} vs {}", back.data()[i], map.data()[i])
                })?;
            }
        }
    }

    for case in 0..50 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..30));
        let vals: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.01f32..255.0)).collect();
        let mask: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.8)).collect();
        let map = DisparityMap::with_mask(w, h, vals.clone(), mask.clone());
        let back = read_kitti_disparity(&write_kitti_disparity(&map).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(back.mask() == &mask[..], || format!("KITTI case {case}: mask differs"))?;
        for i in 0..w * h {
            if mask[i] {
                let q = (vals[i] * 256.0).round() / 256.0;
                ensure(back.data()[i] == q, || format!("KITTI case {case}: {} vs {q}", back.data()[i]))?;
            }
        }
    }

    for c in 0..3 {
        let img = RgbImage::from_fn(256, 1, |x, _| {
            let mut p = [0u8; 3];
            p[c] = x as u8;
            image::Rgb(p)
        });
        let mut png = std::io::Cursor::new(Vec::new());
        img.write_to(&mut png, image::ImageFormat::Png).map_err(|e| e.to_string())?;
        let decoded = read_sintel_disparity(png.get_ref()).map_err(|e| e.to_string())?;
        ensure(decoded == decode_sintel_disparity(&img), || "PNG and in-memory Sintel decode differ".into())?;
        for v in 0..256usize {
            let want = [4.0 * v as f32, v as f32 / 64.0, v as f32 / 16384.0][c];
            ensure(decoded.data()[v] == want, || format!("Sintel channel {c} value {v}"))?;
        }
    }
    Ok("100 PFM maps bit-exact, KITTI exact at 1/256, Sintel 3x256 extremes".into())
}

fn schedule_fidelity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("schedule.json");
    let out = Command::new(env!("CARGO_BIN_EXE_mixstereo"))
        .args(["plan", "--out"])
        .arg(&path)
        .env_remove("TOOL_CATALOG")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("plan exited {:?}", out.status))?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    for (phase, steps, lr) in [("pretrain", 200_000, 1e-4), ("finetune", 30_000, 1e-5)] {
        let p = &json[phase];
        ensure(p["steps"] == steps, || format!("{phase} steps {}", p["steps"]))?;
        ensure(p["batch_size"] == 4, || format!("{phase} batch {}", p["batch_size"]))?;
        ensure(p["crop"] == serde_json::json!([320, 704]), || format!("{phase} crop {}", p["crop"]))?;
        ensure(p["min_lr"].as_f64() == Some(lr), || format!("{phase} min_lr {}", p["min_lr"]))?;
    }
    ensure(stdout.contains("min lr 1e-4") && stdout.contains("min lr 1e-5"), || {
        format!("min LRs not printed:\n{stdout}")
    })?;
    ensure(stdout.contains("pretrain covers 0.83 epochs of 964741 samples"), || {
        format!("epoch line missing:\n{stdout}")
    })?;
    let frac: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("pretrain epoch fraction "))
        .and_then(|l| l.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no fraction line:\n{stdout}"))?;
    ensure((frac - 800_000.0 / 964_741.0).abs() <= 1e-3, || format!("fraction {frac}"))?;
    Ok(format!("200000/30000 steps, batch 4, 320x704, 1e-4/1e-5, fraction {frac}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("manifest arithmetic", manifest_arithmetic),
        ("foreground/background ratios", region_ratios),
        ("report emphasis", report_rendering),
        ("correlation oracle", correlation_oracle),
        ("metric oracle", metric_oracle),
        ("sampler exactness", sampler_exactness),
        ("model invariants", model_invariants),
        ("self-similarity", self_similarity),
        ("format roundtrips", format_roundtrips),
        ("schedule fidelity", schedule_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
