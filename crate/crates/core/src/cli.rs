//! The `tsq` command line: squeeze, train, eval, gradcheck and gen-data.
//!
//! Every command prints its resolved configuration as one JSON line before
//! doing any work. Failures end with a single stderr line
//! `tsq: error: <category>: <message>` and a nonzero exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{
    generate, load_dataset, load_frames, manifest_entries, save_squeezed, train_test_split, write_dataset,
    write_manifest, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::grad::{fd_check_terms, FdReport, ParamSet, DEFAULT_FD_STEP, DEFAULT_FD_TOL};
use crate::network::{Network, NetworkConfig};
use crate::tensor::{read_tensor_from, write_tensor_to, Scalar, Tensor};
use crate::train::{evaluate_checkpoint, train, write_metrics_csv, Checkpoint, StopReason, TrainConfig};
use crate::tspool::{fit_hyperplane, mean_pixel_norm, ts_backward, ts_forward, ClipTensor, TsLayerParams};

/// Environment variable selecting the working precision (`f32` or `f64`).
pub const PRECISION_ENV: &str = "TSQ_PRECISION";

#[derive(Debug, Parser, Serialize)]
#[command(name = "tsq", version, about = "Temporal squeeze pooling for short video clips")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Squeeze K frames into D images with a single temporal layer
    Squeeze(SqueezeArgs),
    /// Train a network on a dataset manifest
    Train(TrainArgs),
    /// Video-level accuracy of a checkpoint
    Eval(EvalArgs),
    /// Compare backprop with central finite differences
    Gradcheck(GradcheckArgs),
    /// Write a synthetic moving-square dataset
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SqueezeArgs {
    /// Frame directory (PNG/PGM, lexicographic order) or TSQ1 tensor file
    #[arg(long)]
    pub frames: PathBuf,
    /// Frames per clip
    #[arg(long)]
    pub k: usize,
    /// Squeezed images to produce
    #[arg(long)]
    pub d: usize,
    /// Layer weights: a training checkpoint or a `ts_layer.tsq` written by this command
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Temporal layer to take from a checkpoint
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    /// Minimize the projection residual for this many steps before squeezing
    #[arg(long)]
    pub optimize_steps: Option<usize>,
    /// Step size of the residual minimization
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Momentum of the residual minimization
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// First frame of the clip
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the layer initialization
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Network config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Validation manifest; without it a seeded split of --data is held out
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Held-out fraction when --val is absent
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Output directory for checkpoint.tsqc and metrics.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay_factor: f64,
    /// Epochs without validation improvement before the learning rate drops
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    /// Projection loss weight (overrides the network config)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight decay (overrides the network config)
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub eval_clips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Data-parallel gradients
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Clips per video; defaults to the value used in training
    #[arg(long)]
    pub clips: Option<usize>,
    /// Write per-video scores as CSV
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    /// Check a whole network from this config instead of one temporal layer
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Frame height and width of the random instance
    #[arg(long, default_value_t = 2)]
    pub hw: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub h: f64,
    /// Relative error tolerance
    #[arg(long, default_value_t = DEFAULT_FD_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Standard deviation of the per-pixel Gaussian noise
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Side of the square in pixels (default: a quarter of the frame)
    #[arg(long)]
    pub square: Option<f64>,
    #[arg(long, default_value_t = 125)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    /// Reads [`PRECISION_ENV`]; unset means `f64`.
    pub fn from_env() -> Result<Self> {
        match std::env::var(PRECISION_ENV) {
            Err(_) => Ok(Precision::F64),
            Ok(v) => match v.as_str() {
                "f32" => Ok(Precision::F32),
                "f64" => Ok(Precision::F64),
                other => Err(Error::Config(format!("{PRECISION_ENV} must be f32 or f64, got `{other}`"))),
            },
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("tsq: error: config: {first}");
            return 2;
        }
    };
    match Precision::from_env().and_then(|p| run(&cli.command, p)) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("tsq: error: {}: {msg}", e.category());
            1
        }
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    precision: Precision,
    command: &'a Command,
}

pub fn run(command: &Command, precision: Precision) -> Result<()> {
    let line = serde_json::to_string(&Resolved { precision, command }).expect("args serialize");
    println!("resolved config: {line}");
    match (command, precision) {
        (Command::Squeeze(a), Precision::F32) => cmd_squeeze::<f32>(a).map(|r| r.print()),
        (Command::Squeeze(a), Precision::F64) => cmd_squeeze::<f64>(a).map(|r| r.print()),
        (Command::Train(a), Precision::F32) => cmd_train::<f32>(a),
        (Command::Train(a), Precision::F64) => cmd_train::<f64>(a),
        (Command::Eval(a), Precision::F32) => cmd_eval::<f32>(a),
        (Command::Eval(a), Precision::F64) => cmd_eval::<f64>(a),
        (Command::Gradcheck(a), _) => {
            let report = cmd_gradcheck(a)?;
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "gradient check failed: max relative error {:.3e} > {:.1e}",
                    report.max_rel_err(),
                    report.tolerance
                )))
            }
        }
        (Command::GenData(a), _) => cmd_gen_data(a).map(|_| ()),
    }
}

pub const TS_LAYER_FILE: &str = "ts_layer.tsq";
pub const RESIDUAL_REPORT: &str = "residual.txt";

/// What `squeeze` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeReport<T> {
    pub y: Tensor<T>,
    /// Residual before any optimization step.
    pub initial_residual: f64,
    pub residual: f64,
    pub mean_pixel_norm: f64,
    pub steps: usize,
}

impl<T> SqueezeReport<T> {
    /// Final residual as a fraction of the mean pixel-trajectory norm.
    pub fn relative_residual(&self) -> f64 {
        if self.mean_pixel_norm > 0.0 {
            self.residual / self.mean_pixel_norm
        } else {
            0.0
        }
    }

    fn print(&self) {
        println!(
            "residual {:.6e} (initial {:.6e}, {:.4}% of mean pixel norm {:.6e}) after {} steps",
            self.residual,
            self.initial_residual,
            100.0 * self.relative_residual(),
            self.mean_pixel_norm,
            self.steps
        );
    }
}

/// Writes `w1` and `w2` back to back as TSQ1 tensors.
pub fn save_ts_layer<T: Scalar>(p: &TsLayerParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_tensor_to(&p.w1, &mut bytes);
    write_tensor_to(&p.w2, &mut bytes);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load_ts_weights<T: Scalar>(path: &Path, k: usize, d: usize, layer: usize) -> Result<TsLayerParams<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let p = if bytes.starts_with(b"TSQC") {
        let ck = Checkpoint::<T>::load(path)?;
        ck.network()?.ts_params(&ck.params, layer)?
    } else {
        let (w1, n) = read_tensor_from(&bytes).map_err(|e| Error::format(path, e))?;
        let (w2, m) = read_tensor_from(&bytes[n..]).map_err(|e| Error::format(path, e))?;
        if n + m != bytes.len() {
            return Err(Error::format(path, "trailing bytes after w1 and w2"));
        }
        let (w1, w2) = (w1.into_precision::<T>(), w2.into_precision::<T>());
        let kd = w2.shape().first().copied().unwrap_or(0);
        if w1.rank() != 2 || w1.shape()[0] == 0 || kd % w1.shape()[0] != 0 {
            return Err(Error::format(path, "not a temporal layer weight file"));
        }
        let d = kd / w1.shape()[0];
        TsLayerParams::new(w1, w2, d)?
    };
    if p.k() != k || p.d != d {
        return Err(Error::Config(format!(
            "weights are for K={}, D={}; requested K={k}, D={d}",
            p.k(),
            p.d
        )));
    }
    Ok(p)
}

/// Loads `--k` frames, squeezes them and writes the squeezed stack, the
/// layer weights and a residual report to `--out`.
pub fn cmd_squeeze<T: Scalar>(a: &SqueezeArgs) -> Result<SqueezeReport<T>> {
    if a.d == 0 || a.d > a.k {
        return Err(Error::Config(format!("need 1 <= D <= K, got K={}, D={}", a.k, a.d)));
    }
    let all = load_frames::<T>(&a.frames)?;
    if all.k() < a.start + a.k {
        return Err(Error::Data(format!(
            "{} has {} frames, need {} from frame {}",
            a.frames.display(),
            all.k(),
            a.k,
            a.start
        )));
    }
    let (h, w, c) = all.frame_dims();
    let per = all.pixels();
    let data = all.frames().data()[a.start * per..(a.start + a.k) * per].to_vec();
    let clip = ClipTensor::new(Tensor::new(vec![a.k, h, w, c], data)?)?;

    let mut params = match &a.weights {
        Some(p) => load_ts_weights::<T>(p, a.k, a.d, a.layer)?,
        None => TsLayerParams::init(a.k, a.d, &mut ChaCha8Rng::seed_from_u64(a.seed))?,
    };
    let steps = a.optimize_steps.unwrap_or(0);
    let history = fit_hyperplane(&clip, &mut params, steps, a.lr, a.momentum)?;
    let state = ts_forward(&clip, &params)?;
    let report = SqueezeReport {
        y: state.squeezed().y.clone(),
        initial_residual: history[0].to_f64_lossy(),
        residual: state.residual().to_f64_lossy(),
        mean_pixel_norm: mean_pixel_norm(&clip).to_f64_lossy(),
        steps,
    };

    save_squeezed(&report.y, &a.out)?;
    save_ts_layer(&params, a.out.join(TS_LAYER_FILE))?;
    let mut text = format!(
        "k {}\nd {}\nsteps {}\ninitial_residual {:e}\nresidual {:e}\nmean_pixel_norm {:e}\nrelative_residual {:e}\n",
        a.k,
        a.d,
        steps,
        report.initial_residual,
        report.residual,
        report.mean_pixel_norm,
        report.relative_residual()
    );
    if steps > 0 {
        text.push_str("# step residual\n");
        for (i, r) in history.iter().enumerate() {
            text.push_str(&format!("{i} {:e}\n", r.to_f64_lossy()));
        }
    }
    let path = a.out.join(RESIDUAL_REPORT);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

pub const CHECKPOINT_FILE: &str = "checkpoint.tsqc";
pub const METRICS_FILE: &str = "metrics.csv";

/// The training config a set of `train` flags describes.
pub fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        batch_size: a.batch_size,
        momentum: a.momentum,
        lr: a.lr,
        lr_decay_factor: a.lr_decay_factor,
        epochs: a.epochs,
        beta: a.beta,
        lambda: a.lambda,
        seed: a.seed,
        eval_clips_per_video: a.eval_clips,
        patience: a.patience,
        parallel: a.parallel,
    }
}

pub fn cmd_train<T: Scalar>(a: &TrainArgs) -> Result<()> {
    let net_cfg = NetworkConfig::load(&a.config)?;
    for w in net_cfg.validate()? {
        eprintln!("warning: {w}");
    }
    let cfg = train_config(a);
    cfg.validate()?;
    println!("network: {}", serde_json::to_string(&cfg.resolve(&net_cfg)).expect("serializes"));
    println!("training: {}", serde_json::to_string(&cfg).expect("serializes"));
    let videos = load_dataset::<T>(&a.data)?;
    let (train_set, val_set) = match &a.val {
        Some(v) => (videos, load_dataset::<T>(v)?),
        None => {
            if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
                return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
            }
            train_test_split(&videos, a.val_fraction, a.seed)
        }
    };
    println!("{} training / {} validation videos", train_set.len(), val_set.len());
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let ck_path = a.out.join(CHECKPOINT_FILE);
    let metrics_path = a.out.join(METRICS_FILE);
    let layers = net_cfg.num_ts_layers();
    let write_metrics = |rows: &[_]| -> Result<()> {
        let f = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        write_metrics_csv(rows, layers, std::io::BufWriter::new(f))
    };
    let mut rows = Vec::new();
    let outcome = train(&train_set, &val_set, &net_cfg, &cfg, |m, ck| {
        println!(
            "epoch {:3}  total {:.6}  classif {:.6}  val_acc {:.4}  lr {:e}",
            m.epoch, m.loss.total, m.loss.classif, m.val_acc, m.lr
        );
        rows.push(m.clone());
        ck.save(&ck_path)?;
        write_metrics(&rows)
    })?;
    outcome.checkpoint.save(&ck_path)?;
    write_metrics(&outcome.metrics)?;
    match outcome.stop {
        StopReason::Completed => {
            println!("wrote {} and {}", ck_path.display(), metrics_path.display());
            Ok(())
        }
        StopReason::Diverged { epoch } => Err(Error::Numerical(format!(
            "training diverged in epoch {epoch}; last good checkpoint (epoch {}) is {}",
            outcome.checkpoint.epoch,
            ck_path.display()
        ))),
    }
}

pub fn cmd_eval<T: Scalar>(a: &EvalArgs) -> Result<()> {
    let ck = Checkpoint::<T>::load(&a.checkpoint)?;
    let clips = a.clips.unwrap_or(ck.train.eval_clips_per_video);
    let videos = load_dataset::<T>(&a.data)?;
    let report = evaluate_checkpoint(&ck, &videos, clips, a.parallel)?;
    if let Some(path) = &a.scores {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        let classes = ck.network.num_classes;
        let mut head = vec!["id".to_string(), "label".into(), "predicted".into()];
        head.extend((0..classes).map(|c| format!("score_{c}")));
        let csv_err = |e: csv::Error| Error::Data(format!("scores: {e}"));
        w.write_record(&head).map_err(csv_err)?;
        for v in &report.videos {
            let mut rec = vec![v.id.clone(), v.label.to_string(), v.predicted.to_string()];
            rec.extend(v.scores.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    println!(
        "top-1 accuracy {:.4} over {} videos ({clips} clips each)",
        report.accuracy,
        report.videos.len()
    );
    Ok(())
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Gradient check in 64-bit on one random instance: a single temporal
/// layer by default, or a whole network when `--network` is given.
pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<FdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    match &a.network {
        None => {
            let layer = TsLayerParams::<f64>::init(a.k, a.d, &mut rng)?;
            let shape = [a.k, a.hw, a.hw, a.channels];
            let clip = ClipTensor::new(uniform_tensor(&mut rng, &shape, 0.0, 1.0))?;
            let probe = uniform_tensor(&mut rng, &[a.d, a.hw, a.hw, a.channels], -1.0, 1.0);
            let mut params = ParamSet::new();
            params.insert("w1", layer.w1.clone())?;
            params.insert("w2", layer.w2.clone())?;
            let with = |p: &ParamSet<f64>| -> Result<TsLayerParams<f64>> {
                let mut l = layer.clone();
                l.w1 = p.get("w1")?.clone();
                l.w2 = p.get("w2")?.clone();
                Ok(l)
            };
            let state = ts_forward(&clip, &layer)?;
            let g = ts_backward(&state, &layer, &probe, 1.0)?;
            let mut analytic = ParamSet::new();
            analytic.insert("w1", g.w1)?;
            analytic.insert("w2", g.w2)?;
            // objective: <probe, y> + residual
            let objective = |p: &ParamSet<f64>| -> Result<Vec<f64>> {
                let s = ts_forward(&clip, &with(p)?)?;
                let dot: f64 = s.squeezed().y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
                Ok(vec![dot, s.residual()])
            };
            fd_check_terms(objective, &params, &analytic, a.h, a.tol)
        }
        Some(path) => {
            let cfg = NetworkConfig::load(path)?;
            let net = Network::new(cfg.clone())?;
            let params = net.init_params::<f64>(&mut rng)?;
            let shape = [cfg.k, a.hw, a.hw, cfg.in_channels];
            let clips: Vec<ClipTensor<f64>> = (0..2)
                .map(|_| ClipTensor::new(uniform_tensor(&mut rng, &shape, 0.0, 1.0)))
                .collect::<Result<_>>()?;
            let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..cfg.num_classes)).collect();
            let pass = net.forward(&params, &clips, &labels, false)?;
            let grads = net.backward(&params, &pass, 1.0, false)?;
            fd_check_terms(
                |p| Ok(net.forward(p, &clips, &labels, false)?.loss.weighted_terms(cfg.beta, cfg.lambda)),
                &params,
                &grads,
                a.h,
                a.tol,
            )
        }
    }
}

/// Paths written by `gen-data`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub all: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Writes `videos/<id>/frame_%05d.png` plus `all.json`, `train.json` and
/// `test.json` manifests and the generator spec as `spec.json`.
pub fn cmd_gen_data(a: &GenDataArgs) -> Result<GeneratedDataset> {
    if !(0.0..1.0).contains(&a.test_fraction) {
        return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
    }
    let spec = SyntheticSpec {
        num_classes: a.classes,
        frames_per_video: a.frames,
        height: a.height,
        width: a.width,
        channels: a.channels,
        noise_std: a.noise,
        seed: a.seed,
        square_size: a.square,
    };
    let videos = generate::<f64>(&spec, a.per_class)?;
    write_dataset(&videos, a.out.join("videos"))?;
    let (train_set, test_set) = train_test_split(&videos, a.test_fraction, a.seed);
    let prefix = Path::new("videos");
    let out = GeneratedDataset {
        all: a.out.join("all.json"),
        train: a.out.join("train.json"),
        test: a.out.join("test.json"),
    };
    write_manifest(&manifest_entries(&videos, prefix), &out.all)?;
    write_manifest(&manifest_entries(&train_set, prefix), &out.train)?;
    write_manifest(&manifest_entries(&test_set, prefix), &out.test)?;
    let spec_path = a.out.join("spec.json");
    let json = serde_json::to_string_pretty(&spec).expect("spec serializes");
    fs::write(&spec_path, json).map_err(|e| Error::io(&spec_path, e))?;
    println!(
        "wrote {} videos ({} train / {} test) to {}",
        videos.len(),
        train_set.len(),
        test_set.len(),
        a.out.display()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_subcommand_parses() {
        for args in [
            vec!["tsq", "squeeze", "--frames", "f", "--k", "10", "--d", "2", "--out", "o"],
            vec!["tsq", "train", "--config", "c.json", "--data", "m.json", "--out", "o"],
            vec!["tsq", "eval", "--checkpoint", "c", "--data", "m.json"],
            vec!["tsq", "gradcheck"],
            vec!["tsq", "gen-data", "--out", "o"],
        ] {
            Cli::try_parse_from(&args).unwrap();
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["tsq", "gradcheck", "--bogus"]).is_err());
        assert_eq!(main_with_args(["tsq", "gradcheck", "--bogus"]), 2);
    }

    #[test]
    fn help_lists_defaults() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("gradcheck").unwrap().render_help().to_string();
        assert!(help.contains("[default: 0.00001]"), "{help}");
        assert!(help.contains("--seed"));
    }

    #[test]
    fn default_layer_gradcheck_passes() {
        let a = GradcheckArgs {
            network: None,
            k: 4,
            d: 2,
            hw: 2,
            channels: 1,
            h: DEFAULT_FD_STEP,
            tol: DEFAULT_FD_TOL,
            seed: 0,
        };
        let report = cmd_gradcheck(&a).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.to_string().contains("PASS"));
    }
}
