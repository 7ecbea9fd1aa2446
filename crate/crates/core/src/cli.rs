//! Command-line front end: `train`, `restore`, `ablate` and `sample`.
//!
//! Every setting can come from a flat JSON config (`--config`) or a flag;
//! flags win. Multi-image runs derive per-image seeds as `seed + index`,
//! ablation cells as `seed + cell * 1_000_000 + seed_index`. Jobs run on a
//! worker pool capped by `RESTORA_THREADS` and are written in job order.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::GmmPrior;
use crate::degradation::{degrade, DegradationKind, DegradationTask, DEFAULT_MEASUREMENT_NOISE};
use crate::error::{Error, Result};
use crate::flow::{sample_unconditional, TimeGrid, VelocityField};
use crate::io;
use crate::metrics;
use crate::neural::{self, MlpVelocityNet, TrainConfig, CHECKPOINT_MAGIC};
use crate::restoration::{restore, RestorationConfig};
use crate::tensor::{ImageTensor, SeededRng, Shape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

pub const THREADS_ENV: &str = "RESTORA_THREADS";

/// ODE step counts swept by `ablate`.
pub const ABLATION_STEPS: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];
/// Correction counts swept by `ablate`.
pub const ABLATION_CORRECTIONS: [usize; 4] = [0, 1, 2, 3];

const CELL_SEED_STRIDE: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "maskflow", version, about = "Mask-guided restoration with flow-matching priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an MLP velocity field on a Gaussian-mixture target.
    Train(RunArgs),
    /// Degrade and restore images, writing outputs and results.csv.
    Restore(RunArgs),
    /// Sweep ODE steps x corrections and report per-cell metrics.
    Ablate(RunArgs),
    /// Draw unconditional samples from a prior.
    Sample(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Denoise,
    Box,
    Random,
    Sr,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config with flat keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gaussian-mixture JSON spec or RFNN checkpoint.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskName>,
    /// Denoising noise level.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Measurement noise on known pixels.
    #[arg(long)]
    pub sigma_meas: Option<f64>,
    #[arg(long = "box", num_args = 2, value_names = ["H", "W"])]
    pub box_size: Option<Vec<usize>>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub ode_steps: Option<usize>,
    #[arg(long)]
    pub corrections: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a Markdown report.
    #[arg(long)]
    pub md: bool,
    /// Synthetic images to restore, or samples to draw.
    #[arg(long)]
    pub count: Option<usize>,
    /// Seeds per ablation cell.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Sample shape for checkpoint priors.
    #[arg(long, num_args = 3, value_names = ["C", "H", "W"])]
    pub shape: Option<Vec<usize>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

/// Flat JSON config; every key mirrors a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: Option<PathBuf>,
    pub task: Option<TaskName>,
    pub sigma: Option<f64>,
    pub sigma_meas: Option<f64>,
    #[serde(rename = "box")]
    pub box_size: Option<[usize; 2]>,
    pub fraction: Option<f64>,
    pub factor: Option<usize>,
    pub ode_steps: Option<usize>,
    pub corrections: Option<usize>,
    pub seed: Option<u64>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub md: Option<bool>,
    pub count: Option<usize>,
    pub seeds: Option<usize>,
    pub shape: Option<[usize; 3]>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub hidden: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Config file values overridden by any flag that was given.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::from_json(&fs::read_to_string(path)?)?,
            None => Self::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if args.$field.is_some() { cfg.$field = args.$field.clone(); })*
            };
        }
        take!(prior, task, sigma, sigma_meas, fraction, factor, ode_steps, corrections, seed, input, out, count, seeds, steps, batch, lr, momentum, hidden);
        if let Some(b) = &args.box_size {
            cfg.box_size = Some([b[0], b[1]]);
        }
        if let Some(s) = &args.shape {
            cfg.shape = Some([s[0], s[1], s[2]]);
        }
        if args.md {
            cfg.md = Some(true);
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn task_name(&self) -> TaskName {
        self.task.unwrap_or(TaskName::Box)
    }

    /// Task descriptor with defaults: denoise sigma 0.2, a centered box
    /// covering 40/128 of each side, 70% random masking, factor 2.
    pub fn degradation(&self, shape: Shape) -> DegradationTask {
        let kind = match self.task_name() {
            TaskName::Denoise => DegradationKind::Denoise {
                sigma: self.sigma.unwrap_or(0.2),
            },
            TaskName::Box => {
                let [box_h, box_w] = self.box_size.unwrap_or([
                    (shape.height * 40 + 64) / 128,
                    (shape.width * 40 + 64) / 128,
                ]);
                DegradationKind::BoxInpaint { box_h, box_w }
            }
            TaskName::Random => DegradationKind::RandomInpaint {
                masked_fraction: self.fraction.unwrap_or(0.7),
            },
            TaskName::Sr => DegradationKind::SuperResolution {
                factor: self.factor.unwrap_or(2),
            },
        };
        DegradationTask::with_noise(kind, self.sigma_meas.unwrap_or(DEFAULT_MEASUREMENT_NOISE))
    }

    /// ODE steps: 64 for denoising and box inpainting, 128 for random
    /// inpainting and 2x super-resolution, 256 for 4x and beyond.
    pub fn n_steps(&self) -> usize {
        self.ode_steps.unwrap_or(match self.task_name() {
            TaskName::Denoise | TaskName::Box => 64,
            TaskName::Random => 128,
            TaskName::Sr if self.factor.unwrap_or(2) >= 4 => 256,
            TaskName::Sr => 128,
        })
    }

    pub fn corrections(&self) -> usize {
        self.corrections.unwrap_or(1)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            batch_size: self.batch.unwrap_or(d.batch_size),
            steps: self.steps.unwrap_or(d.steps),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            momentum: self.momentum.unwrap_or(d.momentum),
            seed: self.seed(),
        }
    }
}

/// A prior loaded from disk.
#[derive(Debug, Clone)]
pub enum Prior {
    Gmm(GmmPrior),
    Net(MlpVelocityNet),
}

impl Prior {
    /// Checkpoints are recognized by their magic; anything else is parsed as
    /// a mixture spec.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(CHECKPOINT_MAGIC) {
            Ok(Prior::Net(MlpVelocityNet::decode(&bytes)?))
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Config(format!("{} is neither a checkpoint nor JSON", path.display())))?;
            GmmPrior::from_json(&text)
                .map(Prior::Gmm)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Gmm(g) => g.dim(),
            Prior::Net(n) => n.dim(),
        }
    }

    /// Native sample shape; checkpoints fall back to `fallback` or a flat vector.
    pub fn shape(&self, fallback: Option<[usize; 3]>) -> Result<Shape> {
        let shape = match (self, fallback) {
            (Prior::Gmm(g), _) => g.shape(),
            (Prior::Net(_), Some([c, h, w])) => Shape::new(c, h, w)?,
            (Prior::Net(n), None) => Shape::vector(n.dim())?,
        };
        if shape.len() != self.dim() {
            return Err(Error::Config(format!(
                "shape {shape} does not match prior dimension {}",
                self.dim()
            )));
        }
        Ok(shape)
    }
}

impl VelocityField for Prior {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        match self {
            Prior::Gmm(g) => g.velocity(x, t),
            Prior::Net(n) => {
                if x.len() != n.dim() {
                    return Err(Error::DimMismatch {
                        expected: n.dim(),
                        found: x.len(),
                    });
                }
                n.velocity(x, t)
            }
        }
    }
}

/// One restoration outcome. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub prior: String,
    #[serde(rename = "N")]
    pub n_steps: usize,
    #[serde(rename = "C")]
    pub corrections: usize,
    pub seed: u64,
    pub psnr_db: f64,
    pub ssim: Option<f64>,
    pub consistency_rmse: f64,
    pub wall_time_s: f64,
    pub field_evals: u64,
}

/// Mean over seeds for one `(N, C)` ablation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub task: String,
    pub prior: String,
    #[serde(rename = "N")]
    pub n_steps: usize,
    #[serde(rename = "C")]
    pub corrections: usize,
    pub seeds: usize,
    pub mean_psnr_db: f64,
    pub mean_ssim: Option<f64>,
    pub mean_consistency_rmse: f64,
    pub mean_wall_time_s: f64,
    pub field_evals: u64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"))
}

/// Markdown table in the usual LPIPS / SSIM / PSNR / time layout. LPIPS is
/// not computed and always reads N/A.
pub fn markdown_table(rows: &[ResultRow]) -> String {
    let mut s = String::from(
        "| task | prior | N | C | seed | LPIPS | SSIM | PSNR (dB) | consistency RMSE | time (s) | field evals |\n\
         |---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | N/A | {} | {:.2} | {:.4} | {:.4} | {} |\n",
            r.task,
            r.prior,
            r.n_steps,
            r.corrections,
            r.seed,
            fmt_opt(r.ssim, 4),
            r.psnr_db,
            r.consistency_rmse,
            r.wall_time_s,
            r.field_evals
        ));
    }
    s
}

pub fn markdown_summary(cells: &[CellSummary]) -> String {
    let mut s = String::from(
        "| task | N | C | seeds | LPIPS | SSIM | PSNR (dB) | consistency RMSE | time (s) | field evals |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    for c in cells {
        s.push_str(&format!(
            "| {} | {} | {} | {} | N/A | {} | {:.2} | {:.4} | {:.4} | {} |\n",
            c.task,
            c.n_steps,
            c.corrections,
            c.seeds,
            fmt_opt(c.mean_ssim, 4),
            c.mean_psnr_db,
            c.mean_consistency_rmse,
            c.mean_wall_time_s,
            c.field_evals
        ));
    }
    s
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn prior_label(cfg: &RunConfig) -> String {
    cfg.prior
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "prior".into(), |s| s.to_string_lossy().into_owned())
}

fn load_prior(cfg: &RunConfig) -> Result<Prior> {
    let path = cfg
        .prior
        .as_ref()
        .ok_or_else(|| Error::Config("--prior is required".into()))?;
    Prior::load(path)
}

/// Clean images from `--in` (sorted PGM/PPM/RFT files) or, failing that,
/// `count` draws from a mixture prior seeded `seed + index`.
fn clean_images(cfg: &RunConfig, prior: &Prior) -> Result<Vec<ImageTensor>> {
    if let Some(dir) = &cfg.input {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("pgm" | "ppm" | "pnm" | "rft")
                )
            })
            .collect();
        paths.sort();
        let images = paths
            .iter()
            .map(|p| {
                if p.extension().and_then(|e| e.to_str()) == Some("rft") {
                    io::load_raw(p)
                } else {
                    io::load_pnm(p)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for (p, img) in paths.iter().zip(&images) {
            if img.len() != prior.dim() {
                return Err(Error::Config(format!(
                    "{} has {} values but the prior models {}",
                    p.display(),
                    img.len(),
                    prior.dim()
                )));
            }
        }
        return Ok(images);
    }
    match prior {
        Prior::Gmm(g) => Ok((0..cfg.count.unwrap_or(1))
            .map(|i| g.sample(&mut SeededRng::new(cfg.seed() + i as u64)))
            .collect()),
        Prior::Net(_) => Err(Error::Config(
            "a checkpoint prior needs input images (--in)".into(),
        )),
    }
}

fn write_image(t: &ImageTensor, dir: &Path, stem: &str) -> Result<()> {
    io::save_raw(t, dir.join(format!("{stem}.rft")))?;
    match t.shape().channels {
        1 => io::save_pnm(t, dir.join(format!("{stem}.pgm"))),
        3 => io::save_pnm(t, dir.join(format!("{stem}.ppm"))),
        _ => Ok(()),
    }
}

struct Job<'a> {
    clean: &'a ImageTensor,
    data_seed: u64,
    run_seed: u64,
    n_steps: usize,
    corrections: usize,
}

struct JobOutput {
    row: ResultRow,
    output: ImageTensor,
    observed: ImageTensor,
}

fn run_job(prior: &Prior, cfg: &RunConfig, label: &str, job: &Job) -> Result<JobOutput> {
    let shape = job.clean.shape();
    let task = cfg.degradation(shape);
    let obs = degrade(job.clean, &task, &mut SeededRng::new(job.data_seed))?;
    let rcfg = RestorationConfig::new(job.n_steps, job.corrections, job.run_seed);
    let (report, wall) = metrics::timed(|| restore(prior, &obs, &rcfg));
    let report = report?;
    let output = report.output.clamp(-1.0, 1.0);
    let ssim = metrics::ssim(&output, job.clean).ok();
    let row = ResultRow {
        task: task.kind.label().to_string(),
        prior: label.to_string(),
        n_steps: job.n_steps,
        corrections: job.corrections,
        seed: job.run_seed,
        psnr_db: metrics::psnr(&output, job.clean)?,
        ssim,
        consistency_rmse: metrics::consistency_rmse(&report.output, &obs.z, &obs.mask).unwrap_or(0.0),
        wall_time_s: wall,
        field_evals: report.field_evals,
    };
    Ok(JobOutput {
        row,
        output,
        observed: obs.z,
    })
}

pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_loss: f64,
    pub steps: usize,
}

/// Trains on the mixture named by `--prior`; writes `checkpoint.rfnn` and
/// `loss.csv` under `--out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let target = match load_prior(cfg)? {
        Prior::Gmm(g) => g,
        Prior::Net(_) => return Err(Error::Config("train needs a mixture spec as --prior".into())),
    };
    let hidden = cfg.hidden.clone().unwrap_or_else(|| vec![64, 64]);
    let d = target.dim();
    let mut widths = vec![d + 1];
    widths.extend(hidden);
    widths.push(d);
    let tcfg = cfg.train_config();
    let init = MlpVelocityNet::xavier(&widths, &mut SeededRng::new(tcfg.seed))?;
    let outcome = neural::train(init, &target, &tcfg)?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    let checkpoint = out.join("checkpoint.rfnn");
    outcome.net.save(&checkpoint)?;
    let mut w = csv::Writer::from_path(out.join("loss.csv"))?;
    w.write_record(["step", "loss"])?;
    for (i, l) in outcome.losses.iter().enumerate() {
        w.write_record([i.to_string(), format!("{l:e}")])?;
    }
    w.flush()?;
    Ok(TrainSummary {
        checkpoint,
        final_loss: outcome.smoothed_final_loss(100),
        steps: outcome.losses.len(),
    })
}

/// Restores every input image; writes restored and observed images plus
/// `results.csv` (and `results.md` with `--md`).
pub fn cmd_restore(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let prior = load_prior(cfg)?;
    let images = clean_images(cfg, &prior)?;
    let label = prior_label(cfg);
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    let base = cfg.seed();
    let outputs = worker_pool()?.install(|| {
        images
            .par_iter()
            .enumerate()
            .map(|(i, clean)| {
                let seed = base + i as u64;
                let job = Job {
                    clean,
                    data_seed: seed,
                    run_seed: seed,
                    n_steps: cfg.n_steps(),
                    corrections: cfg.corrections(),
                };
                run_job(&prior, cfg, &label, &job)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::with_capacity(outputs.len());
    for (i, o) in outputs.into_iter().enumerate() {
        write_image(&o.output, &out, &format!("restored_{i:04}"))?;
        write_image(&o.observed, &out, &format!("observed_{i:04}"))?;
        rows.push(o.row);
    }
    write_csv(&out.join("results.csv"), &rows)?;
    if cfg.md.unwrap_or(false) {
        fs::write(out.join("results.md"), markdown_table(&rows))?;
    }
    Ok(rows)
}

pub struct AblationReport {
    pub rows: Vec<ResultRow>,
    pub cells: Vec<CellSummary>,
}

/// Seed of ablation cell `cell`, repetition `seed_index`.
pub fn ablation_seed(base: u64, cell: usize, seed_index: usize) -> u64 {
    base + cell as u64 * CELL_SEED_STRIDE + seed_index as u64
}

/// Runs the `N x C` grid. Repetition `s` restores the same observation
/// (data seed `seed + s`) in every cell, so cells compare paired samples.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationReport> {
    let prior = load_prior(cfg)?;
    let n_seeds = cfg.seeds.unwrap_or(10);
    let base = cfg.seed();
    let label = prior_label(cfg);
    let images = match (&cfg.input, &prior) {
        (None, Prior::Gmm(g)) => (0..n_seeds)
            .map(|s| g.sample(&mut SeededRng::new(base + s as u64)))
            .collect(),
        _ => clean_images(cfg, &prior)?,
    };
    if images.is_empty() && n_seeds > 0 {
        return Err(Error::Config("no input images".into()));
    }
    let cells: Vec<(usize, usize)> = ABLATION_STEPS
        .iter()
        .flat_map(|&n| ABLATION_CORRECTIONS.iter().map(move |&c| (n, c)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|cell| (0..n_seeds).map(move |s| (cell, s)))
        .collect();
    let rows = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(cell, s)| {
                let (n_steps, corrections) = cells[cell];
                let job = Job {
                    clean: &images[s % images.len()],
                    data_seed: base + s as u64,
                    run_seed: ablation_seed(base, cell, s),
                    n_steps,
                    corrections,
                };
                run_job(&prior, cfg, &label, &job).map(|o| o.row)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(cell, &(n_steps, corrections))| {
            let rs = &rows[cell * n_seeds..(cell + 1) * n_seeds];
            let k = rs.len().max(1) as f64;
            let ssim = rs
                .iter()
                .map(|r| r.ssim)
                .collect::<Option<Vec<_>>>()
                .filter(|v| !v.is_empty())
                .map(|v| v.iter().sum::<f64>() / k);
            CellSummary {
                task: rs.first().map_or_else(String::new, |r| r.task.clone()),
                prior: label.clone(),
                n_steps,
                corrections,
                seeds: rs.len(),
                mean_psnr_db: rs.iter().map(|r| r.psnr_db).sum::<f64>() / k,
                mean_ssim: ssim,
                mean_consistency_rmse: rs.iter().map(|r| r.consistency_rmse).sum::<f64>() / k,
                mean_wall_time_s: rs.iter().map(|r| r.wall_time_s).sum::<f64>() / k,
                field_evals: rs.first().map_or(0, |r| r.field_evals),
            }
        })
        .collect::<Vec<_>>();
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    write_csv(&out.join("ablation.csv"), &rows)?;
    write_csv(&out.join("ablation_summary.csv"), &summaries)?;
    if cfg.md.unwrap_or(false) {
        fs::write(out.join("ablation.md"), markdown_summary(&summaries))?;
    }
    Ok(AblationReport {
        rows,
        cells: summaries,
    })
}

/// Draws `--count` samples (seeds `seed + i`) with `--ode-steps` Euler steps
/// (default 128) and writes `sample_XXXX.{rft,pgm,ppm}`.
pub fn cmd_sample(cfg: &RunConfig) -> Result<Vec<ImageTensor>> {
    let prior = load_prior(cfg)?;
    let shape = prior.shape(cfg.shape)?;
    let grid = TimeGrid::new(cfg.ode_steps.unwrap_or(128))?;
    let count = cfg.count.unwrap_or(1);
    let base = cfg.seed();
    let samples = worker_pool()?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| sample_unconditional(&prior, grid, shape, &mut SeededRng::new(base + i as u64)))
            .collect::<Result<Vec<_>>>()
    })?;
    if count > 0 {
        let out = cfg.out_dir();
        fs::create_dir_all(&out)?;
        for (i, s) in samples.iter().enumerate() {
            write_image(s, &out, &format!("sample_{i:04}"))?;
        }
    }
    Ok(samples)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let s = cmd_train(&RunConfig::resolve(&args)?)?;
            println!(
                "trained {} steps, smoothed final loss {:.5}, checkpoint {}",
                s.steps,
                s.final_loss,
                s.checkpoint.display()
            );
        }
        Command::Restore(args) => {
            let cfg = RunConfig::resolve(&args)?;
            let rows = cmd_restore(&cfg)?;
            print!("{}", markdown_table(&rows));
        }
        Command::Ablate(args) => {
            let cfg = RunConfig::resolve(&args)?;
            let report = cmd_ablate(&cfg)?;
            print!("{}", markdown_summary(&report.cells));
        }
        Command::Sample(args) => {
            let cfg = RunConfig::resolve(&args)?;
            let samples = cmd_sample(&cfg)?;
            println!("wrote {} samples to {}", samples.len(), cfg.out_dir().display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunArgs {
        let cli = Cli::try_parse_from(std::iter::once("maskflow").chain(args.iter().copied())).unwrap();
        match cli.command {
            Command::Train(a) | Command::Restore(a) | Command::Ablate(a) | Command::Sample(a) => a,
        }
    }

    #[test]
    fn task_defaults_follow_step_table() {
        for (task, n) in [("denoise", 64), ("box", 64), ("random", 128), ("sr", 128)] {
            let cfg = RunConfig::resolve(&parse(&["restore", "--task", task])).unwrap();
            assert_eq!(cfg.n_steps(), n, "{task}");
            assert_eq!(cfg.corrections(), 1);
        }
        let cfg = RunConfig::resolve(&parse(&["restore", "--task", "sr", "--factor", "4"])).unwrap();
        assert_eq!(cfg.n_steps(), 256);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"task": "random", "ode_steps": 10, "corrections": 3, "seed": 5, "box": [2, 3]}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = RunConfig::resolve(&parse(&["restore", "--config", p, "--corrections", "0"])).unwrap();
        assert_eq!(cfg.task, Some(TaskName::Random));
        assert_eq!(cfg.n_steps(), 10);
        assert_eq!(cfg.corrections(), 0);
        assert_eq!(cfg.seed(), 5);
        assert_eq!(cfg.box_size, Some([2, 3]));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"ode_stepz": 3}"#).is_err());
    }

    #[test]
    fn default_box_scales_with_image() {
        let cfg = RunConfig::default();
        let task = cfg.degradation(Shape::new(1, 128, 128).unwrap());
        assert_eq!(task.kind, DegradationKind::BoxInpaint { box_h: 40, box_w: 40 });
        assert_eq!(task.sigma_meas, 0.01);
    }

    #[test]
    fn ablation_seeds_are_strided() {
        assert_eq!(ablation_seed(7, 0, 3), 10);
        assert_eq!(ablation_seed(7, 2, 3), 2_000_010);
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["maskflow", "restore", "--task", "blur"]), EXIT_USAGE);
        assert_eq!(run(["maskflow", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["maskflow", "restore"]), EXIT_USAGE);
    }
}
