//! Counterexample harvesting: sample, render, query, match, collect.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::report::{HarvestSummary, IterationRecord, StopReason};
use super::{subseed, LoopContext, LoopError, Sample};
use crate::errortable::{derive_feedback, ErrorTable, ErrorTableWriter};
use crate::generator::{concretize, LabeledImage, ManifestWriter};
use crate::jsonl::JsonlWriter;
use crate::metrics::{match_detections, Detection};
use crate::modspace::Modification;
use crate::oracle::{Detector, OracleError, Query};
use crate::sampler::{objective, DiversityFilter, Sampler, SamplerConfig, SamplerKind};

/// Give up after this many samples in a row that never reach the model.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 10_000;

pub struct HarvestOutcome {
    pub augmentation: Vec<Sample>,
    pub table: ErrorTable,
    pub summary: HarvestSummary,
}

/// Files a harvest writes under its output directory.
struct Sinks {
    log: JsonlWriter,
    table: ErrorTableWriter,
    manifest: ManifestWriter,
    images: PathBuf,
}

impl Sinks {
    fn open(dir: &Path, table_path: &Path, ctx: &LoopContext) -> Result<Self, LoopError> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| LoopError::io(&images, e))?;
        Ok(Sinks {
            log: JsonlWriter::create(&dir.join("harvest_log.jsonl"))?,
            table: ErrorTableWriter::create(table_path, &ctx.schema)?,
            manifest: ManifestWriter::create(&dir.join("augmentation.jsonl"), &images)?,
            images,
        })
    }
}

/// Standalone harvest with the configured model; artifacts go to `out_dir`.
pub fn harvest(config: super::LoopConfig) -> Result<HarvestOutcome, LoopError> {
    let ctx = LoopContext::new(config)?;
    let model = ctx.model()?;
    let dir = ctx.config.out_dir.clone();
    let table = ctx.config.error_table_path();
    let out = harvest_with(&ctx, model.detector(), 0, Some((&dir, &table)))?;
    write_summary(&dir.join("harvest_summary.json"), &out.summary)?;
    Ok(out)
}

pub(crate) fn write_summary<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), LoopError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| LoopError::io(path, e))
}

enum Active {
    Plain(Sampler),
    /// Feedback sampler with a uniform fallback until feedback is available.
    Guided {
        uniform: Sampler,
        guided: Option<Sampler>,
        next_refresh: usize,
        refreshes: u64,
    },
}

/// Runs one harvest against `model`. `out` is `(directory, error-table path)`;
/// without it nothing is written. `round` distinguishes the seeds of
/// successive harvests.
pub fn harvest_with(
    ctx: &LoopContext,
    model: &dyn Detector,
    round: usize,
    out: Option<(&Path, &Path)>,
) -> Result<HarvestOutcome, LoopError> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let mut sinks = match out {
        Some((dir, table)) => Some(Sinks::open(dir, table, ctx)?),
        None => None,
    };
    let sampler_cfg = |tag: &str, i: u64, kind: SamplerKind| SamplerConfig {
        kind,
        seed: subseed(cfg.seed, tag, (round as u64) << 32 | i),
        ..cfg.sampler.clone()
    };
    let mut table = ErrorTable::new(ctx.schema.clone());
    let mut active = match cfg.sampler.kind {
        SamplerKind::Feedback => {
            let mut guided = None;
            if let Some(path) = &cfg.feedback.table {
                let prior = ErrorTable::load(path)?;
                let fb = derive_feedback(&prior, &ctx.lib, cfg.feedback.options)?;
                guided = Some(
                    Sampler::new(ctx.layout.clone(), sampler_cfg("feedback", 0, SamplerKind::Feedback))
                        .with_feedback(fb.spec)?,
                );
            }
            Active::Guided {
                uniform: Sampler::new(ctx.layout.clone(), sampler_cfg("warmup", 0, SamplerKind::Uniform)),
                next_refresh: if guided.is_some() && cfg.feedback.refresh == 0 {
                    usize::MAX
                } else if guided.is_some() {
                    cfg.feedback.refresh
                } else {
                    cfg.feedback.warmup
                },
                guided,
                refreshes: 0,
            }
        }
        kind => Active::Plain(Sampler::new(ctx.layout.clone(), sampler_cfg("sampler", 0, kind))),
    };
    let mut filter = cfg.min_distance.map(DiversityFilter::new);
    let mut augmentation = Vec::new();
    let (mut iterations, mut rejected_render, mut rejected_diversity, mut stalled) = (0, 0, 0, 0);

    while augmentation.len() < cfg.target && iterations < cfg.budget {
        if let Active::Guided {
            guided,
            next_refresh,
            refreshes,
            ..
        } = &mut active
        {
            if iterations >= *next_refresh {
                *next_refresh = match cfg.feedback.refresh {
                    0 => usize::MAX,
                    r => iterations + r,
                };
                match derive_feedback(&table, &ctx.lib, cfg.feedback.options) {
                    Ok(fb) => {
                        *refreshes += 1;
                        log::info!(
                            "feedback refresh {refreshes} at iteration {iterations} from {} rows",
                            table.len()
                        );
                        *guided = Some(
                            Sampler::new(
                                ctx.layout.clone(),
                                sampler_cfg("feedback", *refreshes, SamplerKind::Feedback),
                            )
                            .with_feedback(fb.spec)?,
                        );
                    }
                    Err(e) => log::warn!("feedback unavailable at iteration {iterations}: {e}"),
                }
            }
        }
        let sampler = match &mut active {
            Active::Plain(s) => s,
            Active::Guided {
                guided: Some(g), ..
            } => g,
            Active::Guided { uniform, .. } => uniform,
        };

        let width = cfg.parallelism.min(cfg.budget - iterations);
        let mut batch = Vec::with_capacity(width);
        while batch.len() < width {
            let m = sampler.next()?;
            if filter.as_ref().is_some_and(|f| !f.admits(&m)) {
                rejected_diversity += 1;
                stalled += 1;
                if stalled >= MAX_CONSECUTIVE_REJECTIONS {
                    return Err(LoopError::Stalled(stalled));
                }
                continue;
            }
            batch.push(m);
        }

        let results = evaluate_batch(ctx, model, &batch, round, iterations);
        for (m, res) in batch.iter().zip(results) {
            let (img, dets) = match res {
                Ok(Some(hit)) => hit,
                Ok(None) => {
                    rejected_render += 1;
                    stalled += 1;
                    if stalled >= MAX_CONSECUTIVE_REJECTIONS {
                        return Err(LoopError::Stalled(stalled));
                    }
                    continue;
                }
                Err(Failure::Model(source)) => return Err(LoopError::Model { iterations, source }),
                Err(Failure::Render(e)) => return Err(e.into()),
            };
            stalled = 0;
            let image_id = format!("r{round}-{iterations:06}");
            iterations += 1;
            let eval = match_detections(&dets, &img.gt_boxes());
            sampler.observe(*m, objective(eval.misclassified, eval.precision, eval.recall))?;
            let diverse = filter.as_mut().is_none_or(|f| !eval.misclassified || f.accept(m));
            let harvested = eval.misclassified && diverse;
            if eval.misclassified && !diverse {
                rejected_diversity += 1;
            }
            if harvested {
                let mut path = None;
                if let Some(s) = sinks.as_mut() {
                    let record = s.manifest.push(&img, &image_id)?;
                    path = Some(PathBuf::from(record.image_path));
                }
                let label = path
                    .as_ref()
                    .map_or_else(|| image_id.clone(), |p| p.display().to_string());
                let row = table.append(&img, &eval, &label)?;
                if let Some(s) = sinks.as_mut() {
                    s.table.write_row(row)?;
                }
                augmentation.push(Sample {
                    id: image_id.clone(),
                    image: img,
                    path,
                });
            }
            if let Some(s) = sinks.as_mut() {
                s.log.write(&IterationRecord {
                    iteration: iterations,
                    image_id,
                    modification: *m,
                    misclassified: eval.misclassified,
                    precision: eval.precision,
                    recall: eval.recall,
                    harvested,
                })?;
            }
            if augmentation.len() >= cfg.target || iterations >= cfg.budget {
                break;
            }
        }
    }

    let stop = if augmentation.len() >= cfg.target {
        StopReason::TargetReached
    } else {
        log::warn!(
            "budget of {} exhausted with {} of {} counterexamples",
            cfg.budget,
            augmentation.len(),
            cfg.target
        );
        StopReason::BudgetExhausted
    };
    let summary = HarvestSummary {
        sampler: cfg.sampler.kind,
        iterations,
        counterexamples: augmentation.len(),
        rejected_diversity,
        rejected_render,
        hit_rate: if iterations == 0 {
            0.0
        } else {
            augmentation.len() as f64 / iterations as f64
        },
        stop,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    if let Some(s) = &sinks {
        log::info!("harvest images in {}", s.images.display());
    }
    Ok(HarvestOutcome {
        augmentation,
        table,
        summary,
    })
}

enum Failure {
    Render(crate::generator::GeneratorError),
    Model(OracleError),
}

/// Renders and queries a batch concurrently; results come back in batch order.
fn evaluate_batch(
    ctx: &LoopContext,
    model: &dyn Detector,
    batch: &[Modification],
    round: usize,
    first: usize,
) -> Vec<Result<Option<(LabeledImage, Vec<Detection>)>, Failure>> {
    let run = |(k, m): (usize, &Modification)| {
        let img = match concretize(m, &ctx.lib) {
            Ok(img) => img,
            Err(e) if e.is_rejection() => return Ok(None),
            Err(e) => return Err(Failure::Render(e)),
        };
        // Ids here only need to be unique among in-flight requests.
        let id = format!("r{round}-q{:06}", first + k);
        let dets = model
            .predict(&Query {
                image_id: &id,
                image: &img,
                image_path: None,
            })
            .map_err(Failure::Model)?;
        Ok(Some((img, dets)))
    };
    if batch.len() == 1 {
        return vec![run((0, &batch[0]))];
    }
    batch.par_iter().enumerate().map(run).collect()
}
