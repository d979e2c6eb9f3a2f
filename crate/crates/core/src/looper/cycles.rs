//! Augmentation cycles: harvest, split, augment at several ratios, retrain,
//! evaluate on every test set, keep the best variant.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::harvest::{harvest_with, write_summary};
use super::report::{AccuracyEntry, CycleReport, LoopReport, VariantReport};
use super::{subseed, write_samples, LoopContext, LoopError, Model, Sample};
use crate::jsonl::JsonlWriter;
use crate::metrics::{average_accuracy, match_detections};
use crate::oracle::{Detector, Query};

pub const TEST_SET: &str = "T";

fn counterexample_set(cycle: usize) -> String {
    format!("C_T[{cycle}]")
}

/// Random partition into `(C_X, C_T)` with `|C_X| = round(fraction * n)`.
/// Both parts keep the input order.
pub fn split<T: Clone, R: Rng + ?Sized>(items: &[T], fraction: f64, rng: &mut R) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut chosen = vec![false; n];
    for &i in &idx[..k] {
        chosen[i] = true;
    }
    let (mut x, mut t) = (Vec::with_capacity(k), Vec::with_capacity(n - k));
    for (item, c) in items.iter().zip(chosen) {
        if c {
            x.push(item.clone());
        } else {
            t.push(item.clone());
        }
    }
    (x, t)
}

/// Number of counterexamples ratio `r` adds to a training set of `n`.
pub fn ratio_count(r: f64, n: usize) -> usize {
    // Tolerate representation error, e.g. 0.08 * 1500.
    (r * n as f64 - 1e-9).ceil().max(0.0) as usize
}

/// One training set per ratio: `train` followed by the first
/// `ceil(r * |train|)` elements of `c_x`.
pub fn build_ratio_sets<T: Clone>(train: &[T], c_x: &[T], ratios: &[f64]) -> Result<Vec<Vec<T>>, LoopError> {
    if let Some(&r) = ratios.iter().max_by(|a, b| a.total_cmp(b)) {
        let needed = ratio_count(r, train.len());
        if needed > c_x.len() {
            return Err(LoopError::InsufficientCounterexamples {
                ratio: r,
                needed,
                available: c_x.len(),
            });
        }
    }
    Ok(ratios
        .iter()
        .map(|&r| {
            let mut set = train.to_vec();
            set.extend_from_slice(&c_x[..ratio_count(r, train.len())]);
            set
        })
        .collect())
}

/// Average precision and recall of `model` over `set`.
pub fn evaluate(model: &dyn Detector, set: &[Sample]) -> Result<(f64, f64), LoopError> {
    let results = set
        .par_iter()
        .map(|s| {
            let dets = model.predict(&Query {
                image_id: &s.id,
                image: &s.image,
                image_path: s.path.as_deref(),
            })?;
            Ok(match_detections(&dets, &s.image.gt_boxes()))
        })
        .collect::<Result<Vec<_>, LoopError>>()?;
    average_accuracy(&results).map_err(|e| LoopError::Config(format!("evaluation: {e}")))
}

fn evaluate_all(model: &dyn Detector, sets: &[(String, Vec<Sample>)]) -> Result<Vec<AccuracyEntry>, LoopError> {
    sets.iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(name, s)| {
            let (ap, ar) = evaluate(model, s)?;
            Ok(AccuracyEntry {
                test_set: name.clone(),
                ap,
                ar,
            })
        })
        .collect()
}

fn score(entries: &[AccuracyEntry]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    entries.iter().map(|e| e.ap + e.ar).sum::<f64>() / entries.len() as f64
}

/// Runs `n_cycles` cycles with the configured model, writing under `out_dir`.
pub fn run_cycles(config: super::LoopConfig, n_cycles: usize) -> Result<LoopReport, LoopError> {
    let ctx = LoopContext::new(config)?;
    let mut model = ctx.model()?;
    run_cycles_with(&ctx, &mut model, n_cycles)
}

fn data_dir(ctx: &LoopContext, name: &str) -> Result<Option<PathBuf>, LoopError> {
    if !ctx.config.save_images {
        return Ok(None);
    }
    let d = ctx.config.out_dir.join(name);
    fs::create_dir_all(&d).map_err(|e| LoopError::io(&d, e))?;
    Ok(Some(d))
}

pub fn run_cycles_with(ctx: &LoopContext, model: &mut Model, n_cycles: usize) -> Result<LoopReport, LoopError> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| LoopError::io(out, e))?;

    let train_dir = data_dir(ctx, "data/train")?;
    let test_dir = data_dir(ctx, "data/test")?;
    let mut train = ctx.generate_dataset(cfg.train_size, subseed(cfg.seed, "train", 0), "x", train_dir.as_deref())?;
    let test = ctx.generate_dataset(cfg.test_size, subseed(cfg.seed, "test", 0), "t", test_dir.as_deref())?;
    let data = out.join("data");
    fs::create_dir_all(&data).map_err(|e| LoopError::io(&data, e))?;
    let train_manifest = data.join("train.jsonl");
    write_samples(&train_manifest, &train)?;
    write_samples(&data.join("test.jsonl"), &test)?;

    model.fit(&train, &train_manifest)?;
    let mut test_sets = vec![(TEST_SET.to_string(), test)];
    let mut report = LoopReport {
        baseline: evaluate_all(model.detector(), &test_sets)?,
        ..Default::default()
    };
    let mut cycle_log = JsonlWriter::create(&out.join("cycles.jsonl"))?;
    log::info!("baseline on T: {:?}", report.baseline);

    for cycle in 1..=n_cycles {
        let dir = out.join(format!("cycle_{cycle}"));
        fs::create_dir_all(&dir).map_err(|e| LoopError::io(&dir, e))?;
        let table_path = dir.join("error_table.csv");
        let harvest = harvest_with(ctx, model.detector(), cycle, Some((&dir, &table_path)))?;
        write_summary(&dir.join("harvest_summary.json"), &harvest.summary)?;

        let mut rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "split", cycle as u64));
        let (c_x, c_t) = split(&harvest.augmentation, cfg.split_fraction, &mut rng);
        write_samples(&dir.join("c_x.jsonl"), &c_x)?;
        write_samples(&dir.join("c_t.jsonl"), &c_t)?;
        test_sets.push((counterexample_set(cycle), c_t.clone()));
        let base = evaluate_all(model.detector(), &test_sets)?;

        let sets = build_ratio_sets(&train, &c_x, &cfg.ratios)?;
        let mut variants = Vec::with_capacity(sets.len());
        let mut manifests = Vec::with_capacity(sets.len());
        for (&ratio, set) in cfg.ratios.iter().zip(&sets) {
            let manifest = dir.join(format!("train_r{ratio}.jsonl"));
            write_samples(&manifest, set)?;
            model.fit(set, &manifest)?;
            let accuracy = evaluate_all(model.detector(), &test_sets)?;
            log::info!("cycle {cycle} ratio {ratio}: {accuracy:?}");
            variants.push(VariantReport {
                ratio,
                train_size: set.len(),
                score: score(&accuracy),
                accuracy,
            });
            manifests.push(manifest);
        }

        // Highest score wins; ties go to the smaller ratio.
        let best = (0..variants.len()).max_by(|&a, &b| {
            variants[a]
                .score
                .total_cmp(&variants[b].score)
                .then(variants[b].ratio.total_cmp(&variants[a].ratio))
        });
        let selected_ratio = match best {
            Some(i) => {
                if i + 1 != variants.len() {
                    model.fit(&sets[i], &manifests[i])?;
                }
                train = sets[i].clone();
                variants[i].ratio
            }
            None => {
                // No ratios configured: keep the current model and training set.
                model.fit(&train, &train_manifest)?;
                0.0
            }
        };

        let cycle_report = CycleReport {
            cycle,
            harvest: harvest.summary,
            c_x: c_x.len(),
            c_t: c_t.len(),
            base,
            variants,
            selected_ratio,
        };
        cycle_log.write(&cycle_report)?;
        report.cycles.push(cycle_report);
        report.final_train_size = train.len();
        report.wall_time_s = started.elapsed().as_secs_f64();
        write_summary(&out.join("summary.json"), &report)?;
    }
    report.final_train_size = train.len();
    report.wall_time_s = started.elapsed().as_secs_f64();
    write_summary(&out.join("summary.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn ten_split_in_halves() {
        let items: Vec<u32> = (0..10).collect();
        let (x, t) = split(&items, 0.5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!((x.len(), t.len()), (5, 5));
    }

    #[test]
    fn default_ratio_sizes() {
        let train: Vec<u32> = (0..1500).collect();
        let c_x: Vec<u32> = (10_000..10_750).collect();
        let sets = build_ratio_sets(&train, &c_x, &[0.08, 0.17, 0.35, 0.50]).unwrap();
        let sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1620, 1755, 2025, 2250]);
        for w in sets.windows(2) {
            assert_eq!(&w[1][..w[0].len()], &w[0][..]);
        }
    }

    #[test]
    fn empty_ratio_list() {
        assert!(build_ratio_sets(&[1, 2, 3], &[4], &[]).unwrap().is_empty());
    }

    #[test]
    fn shortfall_is_named() {
        let train: Vec<u32> = (0..100).collect();
        let err = build_ratio_sets(&train, &[0u32; 10], &[0.08, 0.17]).unwrap_err();
        assert!(err.to_string().contains("short by 7"));
        match err {
            LoopError::InsufficientCounterexamples { needed, available, .. } => {
                assert_eq!((needed, available), (17, 10));
            }
            e => panic!("unexpected {e}"),
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..200, f in 0.01f64..0.99, seed: u64) {
            let items: Vec<usize> = (0..n).collect();
            let (x, t) = split(&items, f, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(x.len(), (f * n as f64).round() as usize);
            let xs: BTreeSet<_> = x.iter().copied().collect();
            let ts: BTreeSet<_> = t.iter().copied().collect();
            prop_assert!(xs.is_disjoint(&ts));
            prop_assert_eq!(xs.len() + ts.len(), n);
            let (x2, t2) = split(&items, f, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!((x, t), (x2, t2));
        }

        #[test]
        fn ratio_sets_nested(n in 1usize..300, mut rs in proptest::collection::vec(0.01f64..1.0, 1..5)) {
            rs.sort_by(f64::total_cmp);
            let train: Vec<usize> = (0..n).collect();
            let c_x: Vec<usize> = (n..2 * n + 1).collect();
            let sets = build_ratio_sets(&train, &c_x, &rs).unwrap();
            for (s, r) in sets.iter().zip(&rs) {
                prop_assert_eq!(s.len(), n + ratio_count(*r, n));
            }
            for w in sets.windows(2) {
                prop_assert!(w[1].starts_with(&w[0]));
            }
        }
    }
}
