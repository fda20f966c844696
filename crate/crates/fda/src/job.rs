//! Dataset-scale adaptation runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fda_core::transfer::{multi_beta_transfer, TransferOptions, ZeroBeta};
use fda_core::RasterImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{build_manifest, DatasetManifest};
use crate::pairing::{item_rng, pair_stream, Pair, Pairing, Purpose, PRNG_NAME};
use crate::preprocess::{preprocess, resize_bilinear, PreprocessPolicy};
use crate::{image_io, tensor, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// 8-bit PNG.
    #[default]
    Png,
    /// Float32 tensor file, clamped but not quantized.
    Tensor,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Png => "png",
            OutputFormat::Tensor => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptJob {
    pub source: PathBuf,
    pub target: PathBuf,
    pub source_pattern: String,
    pub target_pattern: String,
    pub betas: Vec<f64>,
    /// `None` until resolved; the CLI picks and prints one.
    pub seed: Option<u64>,
    pub pairing: Pairing,
    /// Passes over the source set, each with fresh pairings.
    pub repeats: u32,
    pub output: PathBuf,
    pub format: OutputFormat,
    /// Working size for sources as `[height, width]`.
    pub resize: Option<(usize, usize)>,
    pub crop: Option<(usize, usize)>,
    /// 0 means available parallelism.
    pub workers: usize,
    /// Treat `β = 0` as the identity instead of a DC-only swap.
    pub strict_zero: bool,
}

impl Default for AdaptJob {
    fn default() -> Self {
        Self {
            source: PathBuf::new(),
            target: PathBuf::new(),
            source_pattern: "**/*.png".into(),
            target_pattern: "**/*.png".into(),
            betas: vec![0.09],
            seed: None,
            pairing: Pairing::Random,
            repeats: 1,
            output: PathBuf::from("adapted"),
            format: OutputFormat::Png,
            resize: None,
            crop: None,
            workers: 0,
            strict_zero: false,
        }
    }
}

impl AdaptJob {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("bad job config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::Usage("at least one beta is required".into()));
        }
        for &b in &self.betas {
            if !(0.0..=1.0).contains(&b) {
                return Err(fda_core::Error::InvalidBeta(b).into());
            }
        }
        if self.repeats == 0 || self.repeats >= 1 << 31 {
            return Err(Error::Usage(format!("repeats must be in 1..2^31, got {}", self.repeats)));
        }
        for (name, size) in [("resize", self.resize), ("crop", self.crop)] {
            if let Some((h, w)) = size {
                if h == 0 || w == 0 {
                    return Err(Error::Usage(format!("{name} {h}x{w} has zero area")));
                }
            }
        }
        if self.source.as_os_str().is_empty() || self.target.as_os_str().is_empty() {
            return Err(Error::Usage("source and target directories are required".into()));
        }
        Ok(())
    }

    pub fn transfer_options(&self) -> TransferOptions {
        let zero_beta = if self.strict_zero { ZeroBeta::Identity } else { ZeroBeta::DcOnly };
        TransferOptions { zero_beta, clamp: true }
    }

    pub fn policy(&self) -> PreprocessPolicy {
        PreprocessPolicy { resize: self.resize, crop: self.crop }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// `<source-stem>__b<beta>__t<target-stem>[__r<repeat>].<ext>`
pub fn output_name(source_stem: &str, beta: f64, target_stem: &str, repeat: Option<u32>, ext: &str) -> String {
    let suffix = repeat.map(|r| format!("__r{r}")).unwrap_or_default();
    format!("{source_stem}__b{beta}__t{target_stem}{suffix}.{ext}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputReport {
    pub beta: f64,
    /// Relative to the job output directory.
    pub path: String,
    pub max_imag_residual: f64,
    pub clamp_count: usize,
    pub swapped_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemReport {
    pub repeat: u32,
    pub source: String,
    pub target: String,
    pub seconds: f64,
    pub outputs: Vec<OutputReport>,
    /// Set when the item failed; then `outputs` is empty and every β counts
    /// as a failure.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobTotals {
    pub sources: usize,
    pub targets: usize,
    pub items: usize,
    pub outputs: usize,
    pub failures: usize,
    pub item_seconds: f64,
    pub wall_seconds: f64,
    pub workers: usize,
    pub images_per_second: f64,
    pub max_imag_residual: f64,
    pub clamp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobReport {
    pub job: AdaptJob,
    pub prng: &'static str,
    pub items: Vec<ItemReport>,
    pub totals: JobTotals,
}

impl JobReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Runs the whole job and writes `report.json` into the output directory.
///
/// Per-item failures are recorded and the job goes on; it only returns an
/// error when nothing succeeded or the setup itself fails.
pub fn run_adapt_job(job: &AdaptJob) -> Result<JobReport> {
    job.validate()?;
    let seed = job.seed.ok_or_else(|| Error::Usage("job seed is not resolved".into()))?;
    let mut sources = build_manifest(&job.source, &job.source_pattern)?;
    sources.dims = job.resize;
    let targets = build_manifest(&job.target, &job.target_pattern)?;
    fs::create_dir_all(&job.output).map_err(|e| Error::io(&job.output, e))?;

    let pairs = pair_stream(sources.len(), targets.len(), job.pairing, seed, job.repeats);
    let workers = job.worker_count();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Runtime(format!("worker pool: {e}")))?;
    let started = Instant::now();
    let items: Vec<ItemReport> =
        pool.install(|| pairs.par_iter().map(|pair| run_item(job, seed, &sources, &targets, pair)).collect());
    let wall_seconds = started.elapsed().as_secs_f64();

    let outputs = items.iter().map(|i| i.outputs.len()).sum();
    let failures = items.iter().filter(|i| i.error.is_some()).count() * job.betas.len();
    let totals = JobTotals {
        sources: sources.len(),
        targets: targets.len(),
        items: items.len(),
        outputs,
        failures,
        item_seconds: items.iter().map(|i| i.seconds).sum(),
        wall_seconds,
        workers,
        images_per_second: items.len() as f64 / wall_seconds.max(f64::MIN_POSITIVE),
        max_imag_residual: items.iter().flat_map(|i| &i.outputs).map(|o| o.max_imag_residual).fold(0.0, f64::max),
        clamp_count: items.iter().flat_map(|i| &i.outputs).map(|o| o.clamp_count).sum(),
    };
    let mut resolved = job.clone();
    resolved.workers = workers;
    let report = JobReport { job: resolved, prng: PRNG_NAME, items, totals };
    report.write(&job.output.join("report.json"))?;
    if outputs == 0 {
        let first = report.items.iter().find_map(|i| i.error.as_deref()).unwrap_or("no work items");
        return Err(Error::Runtime(format!("every item failed; first error: {first}")));
    }
    Ok(report)
}

fn run_item(job: &AdaptJob, seed: u64, sources: &DatasetManifest, targets: &DatasetManifest, pair: &Pair) -> ItemReport {
    let started = Instant::now();
    let src_entry = &sources.entries[pair.source];
    let tgt_entry = &targets.entries[pair.target];
    let result = adapt_item(job, seed, sources, targets, pair);
    let (outputs, error) = match result {
        Ok(outputs) => (outputs, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    ItemReport {
        repeat: pair.repeat,
        source: src_entry.path.clone(),
        target: tgt_entry.path.clone(),
        seconds: started.elapsed().as_secs_f64(),
        outputs,
        error,
    }
}

fn adapt_item(
    job: &AdaptJob,
    seed: u64,
    sources: &DatasetManifest,
    targets: &DatasetManifest,
    pair: &Pair,
) -> Result<Vec<OutputReport>> {
    let index = u32::try_from(pair.source).map_err(|_| Error::Runtime("source index beyond 2^32".into()))?;
    let mut crop_rng = item_rng(seed, Purpose::Crop, pair.repeat, index);
    let source = preprocess(image_io::read_image(&sources.path_of(pair.source))?, &job.policy(), &mut crop_rng)?;
    let target = image_io::read_image(&targets.path_of(pair.target))?;
    let (source, target) = match_inputs(source, target)?;

    let results = multi_beta_transfer(&source, &target, &job.betas, &job.transfer_options())?;
    let src_entry = &sources.entries[pair.source];
    let dir = if src_entry.parent().is_empty() { job.output.clone() } else { job.output.join(src_entry.parent()) };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let repeat = (job.repeats > 1).then_some(pair.repeat);
    let tgt_stem = targets.entries[pair.target].stem();
    results
        .into_iter()
        .map(|r| {
            let name = output_name(src_entry.stem(), r.beta, tgt_stem, repeat, job.format.extension());
            let path = dir.join(&name);
            match job.format {
                OutputFormat::Png => image_io::write_png(&r.adapted, &path)?,
                OutputFormat::Tensor => tensor::write_image(&path, &r.adapted)?,
            }
            let rel = if src_entry.parent().is_empty() { name } else { format!("{}/{name}", src_entry.parent()) };
            Ok(OutputReport {
                beta: r.beta,
                path: rel,
                max_imag_residual: r.max_imag_residual,
                clamp_count: r.clamp_count,
                swapped_energy: r.swapped_energy,
            })
        })
        .collect()
}

/// Resizes the target to the source dims and promotes a gray side to RGB
/// when the channel counts differ.
pub fn match_inputs(source: RasterImage, target: RasterImage) -> Result<(RasterImage, RasterImage)> {
    let (h, w, _) = source.dims();
    let target = if (target.height(), target.width()) == (h, w) { target } else { resize_bilinear(&target, h, w)? };
    Ok(match (source.channels(), target.channels()) {
        (1, 3) => (gray_to_rgb(&source)?, target),
        (3, 1) => (source, gray_to_rgb(&target)?),
        _ => (source, target),
    })
}

fn gray_to_rgb(image: &RasterImage) -> Result<RasterImage> {
    let (h, w, _) = image.dims();
    let samples = image.samples().iter().flat_map(|&v| [v, v, v]).collect();
    Ok(RasterImage::new(h, w, 3, samples)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPanel {
    pub beta: f64,
    pub path: String,
    pub swapped_energy: f64,
    pub max_imag_residual: f64,
    pub clamp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub source: PathBuf,
    pub target: PathBuf,
    pub strict_zero: bool,
    pub panels: Vec<SweepPanel>,
    pub strip: String,
}

/// One adapted image per β plus `strip.png`, the panels side by side in β
/// order. Writes `report.json` next to them.
pub fn run_sweep(source: &Path, target: &Path, betas: &[f64], output: &Path, strict_zero: bool) -> Result<SweepReport> {
    let src = image_io::read_image(source)?;
    let tgt = image_io::read_image(target)?;
    let (src, tgt) = match_inputs(src, tgt)?;
    let zero_beta = if strict_zero { ZeroBeta::Identity } else { ZeroBeta::DcOnly };
    let results = multi_beta_transfer(&src, &tgt, betas, &TransferOptions { zero_beta, clamp: true })?;
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;

    let stem = |p: &Path| p.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    let (src_stem, tgt_stem) = (stem(source), stem(target));
    let mut panels = Vec::with_capacity(results.len());
    for r in &results {
        let name = output_name(&src_stem, r.beta, &tgt_stem, None, "png");
        image_io::write_png(&r.adapted, &output.join(&name))?;
        panels.push(SweepPanel {
            beta: r.beta,
            path: name,
            swapped_energy: r.swapped_energy,
            max_imag_residual: r.max_imag_residual,
            clamp_count: r.clamp_count,
        });
    }
    let images: Vec<&RasterImage> = results.iter().map(|r| &r.adapted).collect();
    image_io::write_png(&hconcat(&images)?, &output.join("strip.png"))?;
    let report = SweepReport {
        source: source.to_path_buf(),
        target: target.to_path_buf(),
        strict_zero,
        panels,
        strip: "strip.png".into(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let rp = output.join("report.json");
    fs::write(&rp, json + "\n").map_err(|e| Error::io(&rp, e))?;
    Ok(report)
}

/// Places same-sized images left to right.
pub fn hconcat(images: &[&RasterImage]) -> Result<RasterImage> {
    let first = images.first().ok_or_else(|| Error::Usage("nothing to concatenate".into()))?;
    let (h, w, c) = first.dims();
    if images.iter().any(|i| i.dims() != (h, w, c)) {
        return Err(Error::Usage("strip panels differ in size".into()));
    }
    let mut samples = Vec::with_capacity(h * w * c * images.len());
    for row in 0..h {
        for img in images {
            samples.extend_from_slice(&img.samples()[row * w * c..(row + 1) * w * c]);
        }
    }
    Ok(RasterImage::new(h, w * images.len(), c, samples)?)
}
