use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use augloop_core::errortable::{analyze, derive_feedback, ErrorTable, FeedbackOptions, PcaOptions};
use augloop_core::generator::{
    concretize, gen_test_assets, load_background, read_manifest, standard_augment, LabeledImage,
    ManifestRecord, ManifestWriter, TestPackOptions,
};
use augloop_core::jsonl::JsonlWriter;
use augloop_core::looper::{harvest, run_cycles, LoopConfig, LoopContext, MAX_CONSECUTIVE_REJECTIONS};
use augloop_core::metrics::{average_accuracy, match_detections};
use augloop_core::oracle::Query;
use augloop_core::sampler::{Sampler, SamplerConfig, SamplerKind};
use clap::{ArgAction, Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "augloop", version, about = "Counterexample-guided data augmentation for object detectors")]
struct Cli {
    /// Loop configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// surrogate:<rules.json> | http:<url> | exec:<cmd>
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for harvest and run-cycles.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// -v for info, -vv for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Asset library utilities.
    #[command(subcommand)]
    Assets(AssetsCmd),
    /// Background annotation sidecars.
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    /// Draw modifications and print them as JSON lines.
    Sample {
        #[arg(long, default_value = "uniform")]
        method: SamplerKind,
        #[arg(short = 'n', default_value_t = 10)]
        n: usize,
        /// Error table to derive feedback from (feedback method).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render sampled scenes into a dataset manifest.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short = 'n', default_value_t = 10)]
        n: usize,
        #[arg(long, default_value = "uniform")]
        method: SamplerKind,
        #[arg(long)]
        table: Option<PathBuf>,
        /// Image directory; `images/` next to the manifest by default.
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Collect counterexamples for the configured model.
    Harvest(LoopArgs),
    /// Run augmentation cycles.
    RunCycles {
        #[arg(short = 'c', long = "cycles", default_value_t = 1)]
        cycles: usize,
        #[command(flatten)]
        args: LoopArgs,
    },
    /// PCA ranking and frequent combinations of an error table, as JSON.
    AnalyzeErrors {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_k: usize,
        #[arg(long, default_value_t = 5)]
        top_n: usize,
        /// Scale ordered columns to unit variance before the SVD.
        #[arg(long)]
        normalize: bool,
    },
    /// Average precision and recall of the model over a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Per-image results as JSON lines.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Crop / flip / blur baseline augmentation of a manifest.
    AugmentStandard {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest; `<stem>_standard.jsonl` next to the input by default.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        copies: usize,
    },
}

#[derive(Subcommand)]
enum AssetsCmd {
    /// Write the procedural test pack.
    GenTest {
        #[arg(long, default_value = "assets")]
        dest: PathBuf,
        #[arg(long, default_value_t = 6)]
        backgrounds: u32,
        #[arg(long, default_value_t = 10)]
        cars: u32,
        #[arg(long, default_value_t = 64)]
        size: u32,
    },
}

#[derive(Subcommand)]
enum AnnotateCmd {
    /// Check background sidecars the way the generator loads them.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    min_distance: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Error table path for a standalone harvest.
    #[arg(long)]
    table: Option<PathBuf>,
}

impl LoopArgs {
    fn apply(&self, cfg: &mut LoopConfig) {
        if let Some(v) = self.target {
            cfg.target = v;
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.sampler {
            cfg.sampler.kind = v;
        }
        if let Some(v) = self.min_distance {
            cfg.min_distance = Some(v);
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
        if let Some(v) = &self.table {
            cfg.error_table = Some(v.clone());
        }
    }
}

fn load_config(cli: &Cli) -> Result<LoopConfig> {
    let mut cfg = match &cli.config {
        Some(p) => LoopConfig::load(p)?,
        None => LoopConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.model = Some(m.clone());
        cfg.surrogate = None;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn make_sampler(ctx: &LoopContext, method: SamplerKind, table: Option<&Path>) -> Result<Sampler> {
    let sampler = Sampler::new(
        ctx.layout.clone(),
        SamplerConfig {
            kind: method,
            seed: ctx.config.seed,
            ..ctx.config.sampler.clone()
        },
    );
    if method != SamplerKind::Feedback {
        if method == SamplerKind::CrossEntropy {
            log::info!("no objective available here; cross-entropy draws from its initial distribution");
        }
        return Ok(sampler);
    }
    let path = table
        .or(ctx.config.feedback.table.as_deref())
        .context("the feedback method needs --table or feedback.table")?;
    let fb = derive_feedback(&ErrorTable::load(path)?, &ctx.lib, ctx.config.feedback.options)?;
    for d in &fb.dropped {
        log::warn!("dropped unresolvable combination {{{d}}}");
    }
    Ok(sampler.with_feedback(fb.spec)?)
}

fn sibling_dir(file: &Path, name: &str) -> PathBuf {
    file.parent().unwrap_or(Path::new(".")).join(name)
}

/// Image of a manifest record: the PNG if present, otherwise a fresh render.
fn record_image(rec: &ManifestRecord, ctx: &LoopContext) -> Result<LabeledImage> {
    if Path::new(&rec.image_path).exists() {
        return Ok(rec.load_image()?);
    }
    log::debug!("{} missing; rendering from its modification", rec.image_path);
    Ok(concretize(&rec.modification, &ctx.lib)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Assets(AssetsCmd::GenTest {
            dest,
            backgrounds,
            cars,
            size,
        }) => {
            let lib = gen_test_assets(&dest, backgrounds, cars, TestPackOptions { image_size: size })?;
            println!(
                "wrote {} backgrounds and {} cars to {}",
                lib.num_backgrounds(),
                lib.num_cars(),
                dest.display()
            );
        }
        Cmd::Annotate(AnnotateCmd::Validate { files }) => {
            let mut failed = 0;
            for f in &files {
                match load_background(f) {
                    Ok(bg) => println!(
                        "ok {}: background {} ({}), {}x{} px",
                        f.display(),
                        bg.meta.id,
                        bg.meta.environment,
                        bg.pixels.width(),
                        bg.pixels.height()
                    ),
                    Err(e) => {
                        failed += 1;
                        println!("invalid {}: {e}", f.display());
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} sidecars invalid", files.len());
            }
        }
        Cmd::Sample {
            method,
            n,
            table,
            output,
        } => {
            let ctx = LoopContext::new(cfg)?;
            let mut sampler = make_sampler(&ctx, method, table.as_deref())?;
            let mut lines = String::new();
            for _ in 0..n {
                lines.push_str(&serde_json::to_string(&sampler.next()?)?);
                lines.push('\n');
            }
            match output {
                Some(p) => fs::write(&p, lines).with_context(|| p.display().to_string())?,
                None => std::io::stdout().write_all(lines.as_bytes())?,
            }
        }
        Cmd::Generate {
            manifest,
            n,
            method,
            table,
            images,
        } => {
            let ctx = LoopContext::new(cfg)?;
            let mut sampler = make_sampler(&ctx, method, table.as_deref())?;
            let images = images.unwrap_or_else(|| sibling_dir(&manifest, "images"));
            let mut w = ManifestWriter::create(&manifest, &images)?;
            let (mut rejected, mut streak) = (0, 0);
            while w.len() < n {
                let m = sampler.next()?;
                match concretize(&m, &ctx.lib) {
                    Ok(img) => {
                        streak = 0;
                        w.push(&img, &format!("g-{:06}", w.len()))?;
                    }
                    Err(e) if e.is_rejection() => {
                        rejected += 1;
                        streak += 1;
                        if streak >= MAX_CONSECUTIVE_REJECTIONS {
                            bail!("{streak} consecutive samples could not be rendered");
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            println!("wrote {n} images to {} ({rejected} samples rejected)", manifest.display());
        }
        Cmd::Harvest(args) => {
            args.apply(&mut cfg);
            let out = harvest(cfg)?;
            print_json(&out.summary)?;
        }
        Cmd::RunCycles { cycles, args } => {
            args.apply(&mut cfg);
            let report = run_cycles(cfg, cycles)?;
            print_json(&report)?;
        }
        Cmd::AnalyzeErrors {
            table,
            max_k,
            top_n,
            normalize,
        } => {
            let t = ErrorTable::load(&table)?;
            let report = analyze(
                &t,
                FeedbackOptions {
                    max_k,
                    top_n,
                    pca: PcaOptions { normalize },
                },
            )?;
            eprintln!("{}", report.summary);
            print_json(&report)?;
        }
        Cmd::Eval { manifest, output } => {
            let ctx = LoopContext::new(cfg)?;
            let model = ctx.model()?;
            let records = read_manifest(&manifest)?;
            if records.is_empty() {
                bail!("{} has no records", manifest.display());
            }
            let mut per_image = output.as_deref().map(JsonlWriter::create).transpose()?;
            let mut results = Vec::with_capacity(records.len());
            for (i, rec) in records.iter().enumerate() {
                let img = record_image(rec, &ctx)?;
                let path = Path::new(&rec.image_path);
                let id = format!("e-{i:06}");
                let dets = model.detector().predict(&Query {
                    image_id: &id,
                    image: &img,
                    image_path: path.exists().then_some(path),
                })?;
                let eval = match_detections(&dets, &img.gt_boxes());
                if let Some(w) = per_image.as_mut() {
                    w.write(&serde_json::json!({
                        "image_path": rec.image_path,
                        "precision": eval.precision,
                        "recall": eval.recall,
                        "misclassified": eval.misclassified,
                    }))?;
                }
                results.push(eval);
            }
            let (ap, ar) = average_accuracy(&results)?;
            print_json(&serde_json::json!({
                "images": results.len(),
                "misclassified": results.iter().filter(|r| r.misclassified).count(),
                "ap": ap,
                "ar": ar,
            }))?;
        }
        Cmd::AugmentStandard {
            manifest,
            output,
            images,
            copies,
        } => {
            let ctx = LoopContext::new(cfg)?;
            let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("manifest");
            let output = output.unwrap_or_else(|| sibling_dir(&manifest, &format!("{stem}_standard.jsonl")));
            let images = images.unwrap_or_else(|| sibling_dir(&manifest, "standard_images"));
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
            let mut w = ManifestWriter::create(&output, &images)?;
            let mut skipped = 0;
            for (i, rec) in read_manifest(&manifest)?.iter().enumerate() {
                let img = record_image(rec, &ctx)?;
                for c in 0..copies {
                    // A draw can crop every box away; retry a few times.
                    match (0..10).find_map(|_| standard_augment(&img, &mut rng).ok()) {
                        Some(out) => {
                            w.push(&out, &format!("s-{i:06}-{c}"))?;
                        }
                        None => skipped += 1,
                    }
                }
            }
            println!("wrote {} images to {} ({skipped} skipped)", w.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
