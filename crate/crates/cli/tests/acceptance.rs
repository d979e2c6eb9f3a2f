//! Acceptance suite: one PASS/FAIL line per criterion, then a single verdict.
//!
//! Run with `cargo test --offline -p augloop --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use augloop_core::errortable::{
    frequent_unordered, pca_ordered, Column, ErrorRow, ErrorTable, FeatureKind, FeatureSchema,
    FeatureValue, PcaOptions,
};
use augloop_core::generator::{load_background, sidecar_json, Trapezoid};
use augloop_core::jsonl::read_jsonl;
use augloop_core::looper::{
    harvest_with, run_cycles, IterationRecord, LoopConfig, LoopContext, TestPackSpec,
};
use augloop_core::metrics::{average_accuracy, iou, match_detections, BBox, Detection, EvalResult};
use augloop_core::modspace::{distance, Modification, Range, SpaceLayout};
use augloop_core::sampler::{objective, sample_halton, sample_uniform, Sampler, SamplerConfig, SamplerKind};
use augloop_core::oracle::{BlindSpotRule, SurrogateConfig};
use rand::seq::SliceRandom;
use rand_distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rule(ordered: &[(&str, [f64; 2])], unordered: &[(&str, &str)]) -> BlindSpotRule {
    BlindSpotRule {
        ordered: ordered.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        unordered: unordered
            .iter()
            .map(|(k, v)| (k.to_string(), BTreeSet::from([v.to_string()])))
            .collect(),
    }
}

fn blind_spots() -> Vec<BlindSpotRule> {
    vec![
        rule(&[("brightness", [0.5, 0.7])], &[("environment", "forest")]),
        rule(&[("x1", [0.0, 0.4])], &[("car1_color", "white"), ("car1_orientation", "rear")]),
    ]
}

fn loop_config(kind: SamplerKind, backgrounds: u32, cars: u32, out: &Path) -> LoopConfig {
    let mut c = LoopConfig {
        surrogate: Some(SurrogateConfig {
            rules: blind_spots(),
            ..Default::default()
        }),
        test_pack: TestPackSpec {
            backgrounds,
            cars,
            image_size: 64,
        },
        parallelism: 8,
        save_images: false,
        out_dir: out.to_path_buf(),
        ..Default::default()
    };
    c.sampler.kind = kind;
    c
}

fn two_car_scene(bg: u32, car2: u32, x1: f64, z1: f64) -> Modification {
    let mut m = Modification::neutral(bg, 25);
    m.discrete[2] = Some(car2);
    m.continuous[0] = x1;
    m.continuous[1] = z1;
    m
}

fn distance_metric() -> Outcome {
    let m1 = two_car_scene(53, 2, 0.50, 0.41);
    let m2 = two_car_scene(53, 2, 0.20, 0.80);
    let m3 = two_car_scene(13, 7, 0.50, 0.41);
    let (d12, d13, d23) = (distance(&m1, &m2), distance(&m1, &m3), distance(&m2, &m3));
    ensure!(d13 == 2.0, "d(m1,m3) = {d13}");
    ensure!((d12 - 0.49).abs() <= 0.02, "d(m1,m2) = {d12}");
    ensure!((d23 - 2.49).abs() <= 0.02, "d(m2,m3) = {d23}");
    let layout = SpaceLayout::new(60, 36).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let [a, b, c] = std::array::from_fn(|_| sample_uniform(&layout, &mut rng));
        ensure!(distance(&a, &a) == 0.0, "d(a,a) != 0");
        ensure!(distance(&a, &b) == distance(&b, &a), "asymmetric");
        ensure!(a == b || distance(&a, &b) > 0.0, "distinct points at distance 0");
        ensure!(
            distance(&a, &c) <= distance(&a, &b) + distance(&b, &c) + 1e-12,
            "triangle inequality"
        );
    }
    Ok(format!("d12={d12:.3} d13={d13} d23={d23:.3}; axioms on 1000 triples"))
}

/// IoU by counting unit cells of integer-coordinate boxes.
fn cell_iou(a: &BBox, b: &BBox) -> f64 {
    let inside = |bb: &BBox, x: f64, y: f64| x >= bb.x_min && x < bb.x_max && y >= bb.y_min && y < bb.y_max;
    let (mut inter, mut union) = (0u32, 0u32);
    for x in -5..45 {
        for y in -5..45 {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let (ia, ib) = (inside(a, cx, cy), inside(b, cx, cy));
            inter += (ia && ib) as u32;
            union += (ia || ib) as u32;
        }
    }
    inter as f64 / union as f64
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x = rng.random_range(0..30) as f64;
    let y = rng.random_range(0..30) as f64;
    let w = rng.random_range(1..=10) as f64;
    let h = rng.random_range(1..=10) as f64;
    BBox::new(x, y, x + w, y + h)
}

/// Recount of greedy matching: scan predictions by score, claim the first
/// best unclaimed box.
fn recount(preds: &[Detection], gts: &[BBox]) -> (usize, usize, usize) {
    let mut order: Vec<&Detection> = preds.iter().collect();
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut claimed = vec![false; gts.len()];
    let mut tp = 0;
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = cell_iou(&p.bbox, gt);
            if !claimed[g] && v > 0.5 && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            tp += 1;
        }
    }
    (tp, preds.len() - tp, gts.len() - tp)
}

fn metrics() -> Outcome {
    let e = EvalResult::from_counts(3, 1, 0);
    ensure!(e.precision == 0.75 && e.recall == 1.0, "p={} r={}", e.precision, e.recall);
    ensure!(!e.misclassified, "tp=3 fp=1 flagged as misclassified");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut results = Vec::new();
    let (mut sum_p, mut sum_r) = (0.0, 0.0);
    for case in 0..1000 {
        let gts: Vec<BBox> = (0..rng.random_range(0..4)).map(|_| random_box(&mut rng)).collect();
        let mut boxes = Vec::new();
        for g in &gts {
            if rng.random_bool(0.7) {
                boxes.push(g.translate(rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64));
            }
        }
        for _ in 0..rng.random_range(0..3) {
            boxes.push(random_box(&mut rng));
        }
        let mut preds: Vec<Detection> = boxes.into_iter().map(|b| Detection::new(b, 0.0)).collect();
        preds.shuffle(&mut rng);
        for (i, p) in preds.iter_mut().enumerate() {
            p.score = 1.0 - i as f64 * 0.01;
        }
        for p in &preds {
            for g in &gts {
                let (got, want) = (iou(&p.bbox, g), cell_iou(&p.bbox, g));
                ensure!((got - want).abs() <= 1e-12, "case {case}: iou {got} vs {want}");
            }
        }
        let r = match_detections(&preds, &gts);
        let (tp, fp, fn_) = recount(&preds, &gts);
        ensure!((r.tp, r.fp, r.fn_) == (tp, fp, fn_), "case {case}: counts {:?}", (r.tp, r.fp, r.fn_));
        let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let rc = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        ensure!(r.misclassified == (p < 0.75 || rc < 0.75), "case {case}: verdict");
        sum_p += p;
        sum_r += rc;
        results.push(r);
    }
    let (ap, ar) = average_accuracy(&results).unwrap();
    ensure!((ap - sum_p / 1000.0).abs() <= 1e-12, "AP {ap}");
    ensure!((ar - sum_r / 1000.0).abs() <= 1e-12, "AR {ar}");
    Ok(format!("1000 random cases; AP={ap:.4} AR={ar:.4}"))
}

/// Anchored-box discrepancy over a 32x32 grid of corners.
fn grid_discrepancy(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mut worst: f64 = 0.0;
    for i in 1..=32 {
        for j in 1..=32 {
            let (a, b) = (i as f64 / 32.0, j as f64 / 32.0);
            let count = points.iter().filter(|(x, y)| *x < a && *y < b).count() as f64;
            worst = worst.max((count / n - a * b).abs());
        }
    }
    worst
}

fn halton_discrepancy() -> Outcome {
    let layout = SpaceLayout::new(6, 10).unwrap();
    let n = 1024;
    let xz = |m: Modification| (m.continuous[0], m.continuous[1]);
    let halton: Vec<_> = (1..=n).map(|i| xz(sample_halton(&layout, i as u64))).collect();
    let d_halton = grid_discrepancy(&halton);
    let mean_uniform = (0..20)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..n).map(|_| xz(sample_uniform(&layout, &mut rng))).collect();
            grid_discrepancy(&pts)
        })
        .sum::<f64>()
        / 20.0;
    ensure!(d_halton < mean_uniform, "halton {d_halton:.4} vs uniform {mean_uniform:.4}");
    Ok(format!("D*(halton)={d_halton:.4} < mean D*(uniform)={mean_uniform:.4}"))
}

fn cross_entropy_convergence() -> Outcome {
    let layout = SpaceLayout::new(6, 10).unwrap();
    let mut s = Sampler::new(
        layout,
        SamplerConfig {
            kind: SamplerKind::CrossEntropy,
            seed: 4,
            ..Default::default()
        },
    );
    for _ in 0..15 * 100 {
        let m = s.next().unwrap();
        let x1 = m.continuous[0];
        // Quality grows with x1, so the falsifying region is x1 < 0.2.
        s.observe(m, objective(x1 < 0.2, x1, x1)).unwrap();
    }
    let (mu, sigma) = (s.ce_params().means[0], s.ce_params().stddevs[0]);
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf((x - mu) / (sigma * std::f64::consts::SQRT_2)));
    let mass = (cdf(0.2) - cdf(0.0)) / (cdf(1.0) - cdf(0.0));
    ensure!(mass >= 0.8, "mass below 0.2 is {mass:.3} (mu={mu:.3}, sigma={sigma:.3})");
    Ok(format!("P(x1 < 0.2) = {mass:.3} after 15 iterations (mu={mu:.3}, sigma={sigma:.4})"))
}

fn table_of(cols: Vec<Column>, rows: Vec<Vec<FeatureValue>>) -> ErrorTable {
    let mut t = ErrorTable::new(FeatureSchema::new(cols).unwrap());
    for values in rows {
        t.push_row(ErrorRow {
            values,
            precision: 0.0,
            recall: 0.0,
            image_path: String::new(),
            modification: None,
        })
        .unwrap();
    }
    t
}

fn pca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = rand_distr::Normal::new(0.0, 0.05).unwrap();
    let rows: Vec<Vec<FeatureValue>> = (0..400)
        .map(|_| {
            let t: f64 = rng.random_range(-1.0..1.0);
            let e = noise.sample(&mut rng);
            vec![FeatureValue::Real(0.8 * t - 0.6 * e), FeatureValue::Real(0.6 * t + 0.8 * e)]
        })
        .collect();
    let cols = ["a", "b"].iter().map(|n| Column::ordered(n, Range::new(-10.0, 10.0))).collect();
    let l = pca_ordered(&table_of(cols, rows), PcaOptions::default()).unwrap();
    let get = |n: &str| l.iter().find(|x| x.column == n).unwrap().loading;
    let cos = (get("a") * 0.8 + get("b") * 0.6).abs();
    ensure!(cos >= 0.95, "cosine {cos}");

    let weights = [("x1", 0.77), ("brightness", 0.44), ("contrast", 0.33), ("sharpness", 0.28)];
    let noise = rand_distr::Normal::new(0.0, 0.02).unwrap();
    let rows: Vec<Vec<FeatureValue>> = (0..500)
        .map(|_| {
            let t: f64 = rng.random_range(-1.0..1.0);
            weights.iter().map(|(_, w)| FeatureValue::Real(w * t + noise.sample(&mut rng))).collect()
        })
        .collect();
    let cols = weights.iter().map(|(n, _)| Column::ordered(n, Range::new(-10.0, 10.0))).collect();
    let ranked = pca_ordered(&table_of(cols, rows), PcaOptions::default()).unwrap();
    let order: Vec<&str> = ranked.iter().map(|l| l.column.as_str()).collect();
    ensure!(order == ["x1", "brightness", "contrast", "sharpness"], "ranking {order:?}");
    Ok(format!("cosine {cos:.4}; ranking {}", order.join(" > ")))
}

fn frequent_subsets() -> Outcome {
    let envs = ["forest", "desert", "city", "tunnel", "bridge", "parking"];
    let colors = ["white", "red", "blue", "yellow", "black"];
    let orients = ["rear", "front"];
    let planted = ["forest", "white", "rear"];
    let mut others = Vec::new();
    for e in envs {
        for c in colors {
            for o in orients {
                if [e, c, o] != planted {
                    others.push([e, c, o]);
                }
            }
        }
    }
    let mut rows: Vec<[&str; 3]> = vec![planted; 13];
    rows.extend((0..487).map(|i| others[i % others.len()]));
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    let names = ["environment", "car1_color", "car1_orientation"];
    let cols = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let vals: BTreeSet<&str> = rows.iter().map(|r| r[i]).collect();
            Column::categorical(n, FeatureKind::Implicit, vals)
        })
        .collect();
    let t = table_of(
        cols,
        rows.iter().map(|r| r.iter().map(|v| FeatureValue::Cat(v.to_string())).collect()).collect(),
    );
    let all = frequent_unordered(&t, 3, usize::MAX).unwrap();
    let top = all.iter().find(|s| s.items.len() == 3).ok_or("no triples")?;
    let items: BTreeMap<&str, &str> = top.items.iter().map(|(c, v)| (c.as_str(), v.as_str())).collect();
    ensure!(
        items == BTreeMap::from([("environment", "forest"), ("car1_color", "white"), ("car1_orientation", "rear")]),
        "top triple {}",
        top.describe()
    );
    for s in &all {
        let brute = rows
            .iter()
            .filter(|r| s.items.iter().all(|(c, v)| r[names.iter().position(|n| n == c).unwrap()] == v))
            .count();
        ensure!(brute == s.count, "{}: {} vs brute {brute}", s.describe(), s.count);
    }
    Ok(format!("top triple {} ({} rows); {} sets recounted", top.describe(), top.count, all.len()))
}

fn guided_vs_uniform() -> Outcome {
    let hits = |kind| {
        let c = LoopConfig {
            target: 10_000,
            budget: 10_000,
            ..loop_config(kind, 6, 10, Path::new("unused"))
        };
        let ctx = LoopContext::new(c).unwrap();
        let model = ctx.model().unwrap();
        harvest_with(&ctx, model.detector(), 0, None).unwrap().summary.counterexamples
    };
    let (uniform, guided) = (hits(SamplerKind::Uniform), hits(SamplerKind::Feedback));
    ensure!(guided >= 2 * uniform, "guided {guided} vs uniform {uniform}");
    Ok(format!(
        "guided {guided} vs uniform {uniform} per 10k ({:.1}x)",
        guided as f64 / uniform.max(1) as f64
    ))
}

fn cycle_trend() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut c = LoopConfig {
        target: 200,
        budget: 10_000,
        train_size: 300,
        test_size: 300,
        ratios: vec![0.17],
        ..loop_config(SamplerKind::Uniform, 2, 6, dir.path())
    };
    let s = c.surrogate.as_mut().unwrap();
    s.coverage_radius = 2.5;
    s.coverage_count = 5;
    let r = run_cycles(c, 2).map_err(|e| e.to_string())?;
    let before = r.cycles[0].base_on("C_T[1]").ok_or("no C_T[1]")?.ar;
    let after = r.cycles[1].base_on("C_T[1]").ok_or("no C_T[1] in cycle 2")?.ar;
    let t0 = &r.baseline[0];
    let t2 = r.cycles[1].selected().ok_or("nothing selected")?.accuracy.iter().find(|a| a.test_set == "T").ok_or("no T")?;
    ensure!(after > before, "C_T[1] recall {before:.3} -> {after:.3}");
    ensure!(t0.ap - t2.ap < 0.02 && t0.ar - t2.ar < 0.02, "T ({:.3},{:.3}) -> ({:.3},{:.3})", t0.ap, t0.ar, t2.ap, t2.ar);
    Ok(format!(
        "C_T[1] recall {before:.3} -> {after:.3}; T (AP,AR) ({:.3},{:.3}) -> ({:.3},{:.3})",
        t0.ap, t0.ar, t2.ap, t2.ar
    ))
}

fn diversity() -> Outcome {
    let c = LoopConfig {
        target: 40,
        budget: 20_000,
        min_distance: Some(0.5),
        ..loop_config(SamplerKind::Uniform, 6, 5, Path::new("unused"))
    };
    let ctx = LoopContext::new(c).unwrap();
    let model = ctx.model().unwrap();
    let out = harvest_with(&ctx, model.detector(), 0, None).unwrap();
    let mods: Vec<_> = out.augmentation.iter().map(|s| s.image.modification).collect();
    ensure!(mods.len() > 1, "only {} counterexamples", mods.len());
    let mut closest = f64::INFINITY;
    for i in 0..mods.len() {
        for j in i + 1..mods.len() {
            closest = closest.min(distance(&mods[i], &mods[j]));
        }
    }
    ensure!(closest >= 0.5, "pair at distance {closest}");
    Ok(format!("{} counterexamples, closest pair {closest:.3}", mods.len()))
}

fn crash_safety() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let rules = serde_json::json!({ "rules": blind_spots() });
    fs::write(dir.path().join("rules.json"), rules.to_string()).unwrap();
    fs::write(
        dir.path().join("loop.toml"),
        "model = \"surrogate:rules.json\"\ntarget = 100000\nbudget = 1000000\nparallelism = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let mut child = Command::new(env!("CARGO_BIN_EXE_augloop"))
        .current_dir(dir.path())
        .args(["--config", "loop.toml", "--out", "out", "harvest"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let table = out.join("error_table.csv");
    let deadline = Instant::now() + Duration::from_secs(120);
    let rows_on_disk = || fs::read_to_string(&table).map(|s| s.lines().count().saturating_sub(2)).unwrap_or(0);
    while rows_on_disk() < 5 {
        if Instant::now() > deadline || child.try_wait().map_err(|e| e.to_string())?.is_some() {
            let _ = child.kill();
            return Err("harvest never produced rows".into());
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    child.kill().map_err(|e| e.to_string())?;
    child.wait().map_err(|e| e.to_string())?;
    let log: Vec<IterationRecord> = read_jsonl(&out.join("harvest_log.jsonl")).map_err(|e| e.to_string())?;
    let t = ErrorTable::load(&table).map_err(|e| e.to_string())?;
    let aug: Vec<serde_json::Value> = read_jsonl(&out.join("augmentation.jsonl")).map_err(|e| e.to_string())?;
    let harvested = log.iter().filter(|r| r.harvested).count();
    ensure!(!log.is_empty() && t.len() >= 5, "log {} rows, table {}", log.len(), t.len());
    ensure!(harvested.abs_diff(t.len()) <= 2 && aug.len().abs_diff(t.len()) <= 2, "log {harvested} / table {} / manifest {}", t.len(), aug.len());
    Ok(format!("killed after {} iterations; {} table rows and {} manifest records recovered", log.len(), t.len(), aug.len()))
}

fn annotation_interop() -> Outcome {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/annotations");
    let goldens: Vec<PathBuf> = fs::read_dir(root.join("golden"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    for g in &goldens {
        let bg = load_background(g).map_err(|e| format!("{}: {e}", g.display()))?;
        ensure!(sidecar_json(&bg.meta) == fs::read_to_string(g).unwrap(), "{} does not round-trip", g.display());
    }
    let fx: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("place_fixture.json")).unwrap()).unwrap();
    let t: Trapezoid = serde_json::from_value(fx["trapezoid"].clone()).unwrap();
    let cases = fx["cases"].as_array().unwrap();
    for c in cases {
        let (p, _) = t.place(c["u_x"].as_f64().unwrap(), c["u_z"].as_f64().unwrap());
        let err = (p.x - c["anchor"][0].as_f64().unwrap()).hypot(p.y - c["anchor"][1].as_f64().unwrap());
        ensure!(err <= 0.5, "place off by {err}");
    }
    Ok(format!("{} golden sidecars round-trip; {} place() cases within 0.5 px", goldens.len(), cases.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("distance metric", distance_metric),
        ("matching and accuracy", metrics),
        ("halton discrepancy", halton_discrepancy),
        ("cross-entropy convergence", cross_entropy_convergence),
        ("pca direction and ranking", pca),
        ("frequent subsets", frequent_subsets),
        ("guided vs uniform", guided_vs_uniform),
        ("cycle trend", cycle_trend),
        ("diversity audit", diversity),
        ("crash safety", crash_safety),
        ("annotation interop (secondary)", annotation_interop),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("panicked".into())))
            .collect()
    });
    let mut failed = Vec::new();
    for ((name, _), r) in criteria.iter().zip(&results) {
        match r {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.push(*name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("acceptance failed: {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all {} criteria passed", criteria.len());
}
