//! The `fda` command line.
//!
//! Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on bad flags or
//! invalid inputs.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::hash::{BuildHasher, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fda_core::ensemble::{compute_miou, mean_prediction, pseudo_labels, EnsembleConfig, ThresholdScope};
use fda_core::losses::{combined_loss, cross_entropy, robust_entropy, sst_loss, LossConfig, Reduction};
use fda_core::{LabelMap, PredictionMap};
use serde::Serialize;
use serde_json::json;

use crate::job::{run_adapt_job, run_sweep, AdaptJob, OutputFormat};
use crate::manifest::build_manifest;
use crate::pairing::Pairing;
use crate::preprocess::parse_size;
use crate::tensor::{self, TensorKind};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fda", version, about = "Fourier domain adaptation for image datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Adapt a source image set to the look of a target set.
    Adapt(AdaptArgs),
    /// Adapt one image at several β values and write a comparison strip.
    Sweep(SweepArgs),
    /// Average prediction tensors and write confidence-filtered pseudo labels.
    Ensemble(EnsembleArgs),
    /// Evaluate a loss on prediction and label tensors.
    Loss(LossArgs),
    /// Per-class IoU and mean IoU of label tensors.
    Miou(MiouArgs),
    /// Check tensor files or an image directory.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct AdaptArgs {
    /// TOML job file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    tgt: Option<PathBuf>,
    #[arg(long)]
    src_pattern: Option<String>,
    #[arg(long)]
    tgt_pattern: Option<String>,
    #[arg(long, conflicts_with = "betas")]
    beta: Option<f64>,
    /// Comma separated, e.g. `0.01,0.05,0.09`.
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    pairing: Option<Pairing>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Working size `HxW` for source images.
    #[arg(long, value_parser = parse_size)]
    resize: Option<(usize, usize)>,
    /// Random crop `HxW` after resizing.
    #[arg(long, value_parser = parse_size)]
    crop: Option<(usize, usize)>,
    /// Worker threads; default is the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Make β = 0 reproduce the source instead of matching its mean.
    #[arg(long)]
    strict_zero: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.15,1")]
    betas: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    strict_zero: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scope {
    Batch,
    Image,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Directory of prediction tensors; repeat once per model.
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.66)]
    top_fraction: f64,
    #[arg(long, default_value_t = 0.9)]
    floor: f64,
    #[arg(long, value_enum, default_value = "batch")]
    scope: Scope,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LossKind {
    /// Cross-entropy of `--pred` against `--labels`.
    CrossEntropy,
    /// Charbonnier-weighted entropy of `--pred`.
    Entropy,
    /// Cross-entropy on source plus weighted entropy of `--target-pred`.
    Combined,
    /// `combined` plus cross-entropy of `--target-pred` against `--pseudo-labels`.
    Sst,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(value_enum)]
    kind: LossKind,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    target_pred: Option<PathBuf>,
    #[arg(long)]
    pseudo_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.005)]
    lambda_ent: f64,
    #[arg(long, value_enum, default_value = "mean")]
    reduction: ReductionArg,
}

#[derive(Debug, Args)]
struct MiouArgs {
    /// Label tensor or directory of them.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    classes: usize,
    /// Also write the result as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Tensor file (payload or header) or a directory.
    path: PathBuf,
    /// File pattern when `path` is a directory.
    #[arg(long, default_value = "**/*")]
    pattern: String,
    /// Upper bound for labels in label tensors.
    #[arg(long)]
    classes: Option<usize>,
}

/// Runs the CLI with stdout and stderr of the process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Same as [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let result = match cli.command {
        Command::Adapt(a) => cmd_adapt(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Ensemble(a) => cmd_ensemble(a, out),
        Command::Loss(a) => cmd_loss(a, out),
        Command::Miou(a) => cmd_miou(a, out),
        Command::Validate(a) => cmd_validate(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn random_seed() -> u64 {
    std::collections::hash_map::RandomState::new().build_hasher().finish()
}

fn resolve_job(a: AdaptArgs) -> Result<AdaptJob> {
    let mut job = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            AdaptJob::from_toml(&text)?
        }
        None => AdaptJob::default(),
    };
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                job.$field = v;
            }
        };
    }
    set!(source, a.src);
    set!(target, a.tgt);
    set!(source_pattern, a.src_pattern);
    set!(target_pattern, a.tgt_pattern);
    set!(betas, a.beta.map(|b| vec![b]).or(a.betas));
    set!(pairing, a.pairing);
    set!(repeats, a.repeats);
    set!(output, a.out);
    set!(format, a.format);
    set!(workers, a.workers);
    if a.seed.is_some() {
        job.seed = a.seed;
    }
    if a.resize.is_some() {
        job.resize = a.resize;
    }
    if a.crop.is_some() {
        job.crop = a.crop;
    }
    job.strict_zero |= a.strict_zero;
    job.seed.get_or_insert_with(random_seed);
    Ok(job)
}

fn cmd_adapt(a: AdaptArgs, out: &mut dyn Write) -> Result<()> {
    let job = resolve_job(a)?;
    job.validate()?;
    emit(out, format_args!("seed: {}", job.seed.unwrap_or_default()))?;
    emit(out, format_args!("config: {}", serde_json::to_string(&job).expect("job serializes")))?;
    let report = run_adapt_job(&job)?;
    let t = &report.totals;
    for item in report.items.iter().filter(|i| i.error.is_some()) {
        emit(out, format_args!("failed: {} ({})", item.source, item.error.as_deref().unwrap_or("")))?;
    }
    emit(
        out,
        format_args!(
            "outputs: {}  failures: {}  wall: {:.2}s  images/s: {:.2}  workers: {}  max imag residual: {:e}",
            t.outputs, t.failures, t.wall_seconds, t.images_per_second, t.workers, t.max_imag_residual
        ),
    )?;
    emit(out, format_args!("report: {}", job.output.join("report.json").display()))
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let report = run_sweep(&a.src, &a.tgt, &a.betas, &a.out, a.strict_zero)?;
    emit(out, "beta\tswapped_energy\tmax_imag_residual\tclamped\tfile")?;
    for p in &report.panels {
        emit(
            out,
            format_args!("{}\t{:e}\t{:e}\t{}\t{}", p.beta, p.swapped_energy, p.max_imag_residual, p.clamp_count, p.path),
        )?;
    }
    emit(out, format_args!("strip: {}", a.out.join(&report.strip).display()))
}

/// Tensor files in a directory (by payload name), or the file itself.
fn tensor_files(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    if path.is_dir() {
        let m = build_manifest(path, "**/*.bin")?;
        Ok(m.entries.iter().map(|e| (e.path.clone(), path.join(&e.path))).collect())
    } else {
        let payload = tensor::payload_path(path);
        let name = payload.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![(name, payload)])
    }
}

fn cmd_ensemble(a: EnsembleArgs, out: &mut dyn Write) -> Result<()> {
    let scope = match a.scope {
        Scope::Batch => ThresholdScope::PerClassOverBatch,
        Scope::Image => ThresholdScope::PerImage,
    };
    let cfg = EnsembleConfig { top_fraction: a.top_fraction, confidence_floor: a.floor, scope };
    cfg.validate()?;
    let listings = a.preds.iter().map(|d| tensor_files(d)).collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = listings[0].iter().map(|(n, _)| n.clone()).collect();
    for (dir, listing) in a.preds.iter().zip(&listings) {
        let these: BTreeSet<&String> = listing.iter().map(|(n, _)| n).collect();
        let first: BTreeSet<&String> = names.iter().collect();
        if these != first {
            let missing: Vec<_> = first.symmetric_difference(&these).collect();
            return Err(Error::Usage(format!(
                "{} and {} hold different files: {missing:?}",
                a.preds[0].display(),
                dir.display()
            )));
        }
    }

    let mut means = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let paths: Vec<&PathBuf> = listings.iter().map(|l| &l[i].1).collect();
        let maps = paths.iter().map(|p| tensor::read_prediction(p)).collect::<Result<Vec<PredictionMap>>>()?;
        let mean = mean_prediction(&maps).map_err(|e| {
            let list: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            Error::Usage(format!("{name}: {e} ({})", list.join(", ")))
        })?;
        means.push(mean);
    }
    let result = pseudo_labels(&means, &cfg).map_err(|e| Error::Usage(format!("{e}")))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for (name, labels) in names.iter().zip(&result.labels) {
        let path = a.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        tensor::write_labels(&path, labels)?;
    }

    emit(out, format_args!("top_fraction: {}  confidence_floor: {}  scope: {:?}", cfg.top_fraction, cfg.confidence_floor, a.scope))?;
    emit(out, "class\tcandidates\tkept\tkept_fraction\tmean_confidence\tthreshold")?;
    for (k, c) in result.classes.iter().enumerate() {
        let th = c.threshold.map_or_else(|| "-".into(), |t| format!("{t:.6}"));
        emit(out, format_args!("{k}\t{}\t{}\t{:.6}\t{:.6}\t{th}", c.candidates, c.kept, c.kept_fraction, c.mean_confidence))?;
    }
    let classes: Vec<_> = result
        .classes
        .iter()
        .map(|c| {
            json!({
                "candidates": c.candidates,
                "kept": c.kept,
                "kept_fraction": c.kept_fraction,
                "mean_confidence": c.mean_confidence,
                "threshold": c.threshold,
            })
        })
        .collect();
    let report = json!({
        "config": { "top_fraction": cfg.top_fraction, "confidence_floor": cfg.confidence_floor, "scope": a.scope },
        "inputs": a.preds,
        "files": names,
        "classes": classes,
    });
    let rp = a.out.join("report.json");
    std::fs::write(&rp, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
        .map_err(|e| Error::io(&rp, e))?;
    emit(out, format_args!("report: {}", rp.display()))
}

fn need<'a>(flag: &str, value: &'a Option<PathBuf>) -> Result<&'a PathBuf> {
    value.as_ref().ok_or_else(|| Error::Usage(format!("--{flag} is required for this loss")))
}

fn checked_ce(pred: &PredictionMap, labels: &LabelMap, lp: &Path, ll: &Path, r: Reduction) -> Result<f64> {
    cross_entropy(pred, labels, r).map_err(|e| match e {
        fda_core::Error::DimensionMismatch(m) => Error::Usage(format!("{m} ({} vs {})", lp.display(), ll.display())),
        other => other.into(),
    })
}

fn cmd_loss(a: LossArgs, out: &mut dyn Write) -> Result<()> {
    let reduction = match a.reduction {
        ReductionArg::Mean => Reduction::Mean,
        ReductionArg::Sum => Reduction::Sum,
    };
    let cfg = LossConfig { eta: a.eta, lambda_ent: a.lambda_ent, reduction, ..LossConfig::default() };
    cfg.validate()?;
    let pred = tensor::read_prediction(&a.pred)?;
    let value = match a.kind {
        LossKind::Entropy => robust_entropy(&pred, &cfg),
        LossKind::CrossEntropy => {
            let lp = need("labels", &a.labels)?;
            checked_ce(&pred, &tensor::read_labels(lp)?, &a.pred, lp, reduction)?
        }
        LossKind::Combined | LossKind::Sst => {
            let lp = need("labels", &a.labels)?;
            let tp = need("target-pred", &a.target_pred)?;
            let src_ce = checked_ce(&pred, &tensor::read_labels(lp)?, &a.pred, lp, reduction)?;
            let target = tensor::read_prediction(tp)?;
            let tgt_ent = robust_entropy(&target, &cfg);
            if matches!(a.kind, LossKind::Sst) {
                let pp = need("pseudo-labels", &a.pseudo_labels)?;
                let pseudo_ce = checked_ce(&target, &tensor::read_labels(pp)?, tp, pp, reduction)?;
                sst_loss(src_ce, tgt_ent, pseudo_ce, &cfg)
            } else {
                combined_loss(src_ce, tgt_ent, &cfg)
            }
        }
    };
    let reduction_name = match reduction {
        Reduction::Mean => "mean",
        Reduction::Sum => "sum",
    };
    emit(
        out,
        format_args!(
            "kind: {}  eta: {:?}  lambda_ent: {:?}  epsilon: {:?}  reduction: {reduction_name}",
            serde_json::to_value(a.kind).expect("kind serializes").as_str().unwrap_or_default(),
            cfg.eta,
            cfg.lambda_ent,
            cfg.epsilon
        ),
    )?;
    emit(out, format_args!("{value:?}"))
}

fn cmd_miou(a: MiouArgs, out: &mut dyn Write) -> Result<()> {
    let preds = tensor_files(&a.pred)?;
    let gts = tensor_files(&a.gt)?;
    if a.pred.is_dir() || a.gt.is_dir() {
        let p: Vec<&String> = preds.iter().map(|(n, _)| n).collect();
        let g: Vec<&String> = gts.iter().map(|(n, _)| n).collect();
        if p != g {
            return Err(Error::Usage(format!("{} and {} hold different files", a.pred.display(), a.gt.display())));
        }
    }
    let mut pred_maps = Vec::with_capacity(preds.len());
    let mut gt_maps = Vec::with_capacity(gts.len());
    for ((_, pp), (_, gp)) in preds.iter().zip(&gts) {
        let (p, g) = (tensor::read_labels(pp)?, tensor::read_labels(gp)?);
        if (p.height(), p.width()) != (g.height(), g.width()) {
            return Err(Error::Usage(format!(
                "{} is {}x{} but {} is {}x{}",
                pp.display(),
                p.height(),
                p.width(),
                gp.display(),
                g.height(),
                g.width()
            )));
        }
        pred_maps.push(p);
        gt_maps.push(g);
    }
    let report = compute_miou(&pred_maps, &gt_maps, a.classes)?;
    emit(out, "class\tiou")?;
    for (k, iou) in report.per_class.iter().enumerate() {
        let cell = iou.map_or_else(|| "-".into(), |v| format!("{v:.6}"));
        emit(out, format_args!("{k}\t{cell}"))?;
    }
    emit(out, format_args!("mean\t{:.6}", report.mean))?;
    if let Some(path) = &a.report {
        let body = json!({ "classes": a.classes, "per_class": report.per_class, "mean": report.mean });
        std::fs::write(path, serde_json::to_string_pretty(&body).expect("report serializes") + "\n")
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn validate_tensor(path: &Path, classes: Option<usize>) -> Result<String> {
    let header = tensor::read_header(path)?;
    let payload = tensor::payload_path(path);
    match header.kind {
        TensorKind::Prediction => {
            tensor::read_prediction(&payload)?;
        }
        TensorKind::Labels => {
            let labels = tensor::read_labels(&payload)?;
            if let Some(k) = classes {
                labels.check_classes(k).map_err(|e| Error::format(&payload, e.to_string()))?;
            }
        }
        TensorKind::Image => {
            tensor::read_image(&payload)?;
        }
    }
    Ok(format!("{:?} {:?}", header.kind, header.dims))
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> Result<()> {
    if a.path.is_dir() {
        let m = build_manifest(&a.path, &a.pattern)?;
        let mut tensors = 0;
        for e in &m.entries {
            if e.path.ends_with(".bin") {
                validate_tensor(&a.path.join(&e.path), a.classes)?;
                tensors += 1;
            }
        }
        emit(out, format_args!("ok: {} entries, {tensors} tensors checked", m.len()))
    } else {
        let what = validate_tensor(&a.path, a.classes)?;
        emit(out, format_args!("ok: {} {what}", a.path.display()))
    }
}
