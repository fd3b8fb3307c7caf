//! SGD with momentum, clip-averaged evaluation and checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_clip, SampleMode, VideoRecord};
use crate::error::{Error, Result};
use crate::grad::ParamSet;
use crate::network::{argmax, LossBreakdown, Network, NetworkConfig};
use crate::tensor::{read_tensor_from, write_tensor_to, Scalar};

/// Epochs without a validation improvement before the learning rate drops.
pub const PLATEAU_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub epochs: usize,
    /// Overrides the network config's `beta` when set.
    pub beta: Option<f64>,
    /// Overrides the network config's `lambda` when set.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub eval_clips_per_video: usize,
    pub patience: usize,
    /// Data-parallel gradients; results match the serial path bit for bit.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            momentum: 0.9,
            lr: 0.01,
            lr_decay_factor: 0.1,
            epochs: 30,
            beta: None,
            lambda: None,
            seed: 0,
            eval_clips_per_video: 20,
            patience: PLATEAU_PATIENCE,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be finite and >= 0");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must lie in (0, 1]");
        }
        if self.eval_clips_per_video == 0 {
            return bad("eval_clips_per_video must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        for (name, v) in [("beta", self.beta), ("lambda", self.lambda)] {
            if v.is_some_and(|x| !(x >= 0.0) || !x.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// The network config with this config's loss weights applied.
    pub fn resolve(&self, net: &NetworkConfig) -> NetworkConfig {
        let mut net = net.clone();
        if let Some(b) = self.beta {
            net.beta = b;
        }
        if let Some(l) = self.lambda {
            net.lambda = l;
        }
        net
    }
}

/// `v ← momentum·v + g; p ← p − lr·v`.
pub fn sgd_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    velocity: &mut ParamSet<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(velocity) {
        return Err(Error::Shape("parameters, gradients and velocity differ in layout".into()));
    }
    velocity.scale(T::of(momentum));
    velocity.axpy(T::one(), grads)?;
    params.axpy(T::of(-lr), velocity)
}

/// Serializable snapshot of a [`ChaCha8Rng`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal string; the word position is a 128-bit counter.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Config(format!("bad rng word position `{}`", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"TSQC";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    network: NetworkConfig,
    train: TrainConfig,
    epoch: usize,
    lr: f64,
    rng: RngState,
    params: Vec<String>,
}

/// Trained parameters plus everything needed to rebuild the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    /// Network config with the loss weights used in training.
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub rng: RngState,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Layout: `TSQC`, u32 header length, JSON header, then one TSQ1 tensor
    /// per parameter in the header's name order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            network: self.network.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            lr: self.lr,
            rng: self.rng.clone(),
            params: self.params.names().map(str::to_string).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + 8 * self.params.num_elements());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            write_tensor_to(t, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let json = bytes.get(8..8 + n).ok_or("truncated header")?;
        let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| e.to_string())?;
        let mut pos = 8 + n;
        let mut params = ParamSet::new();
        for name in header.params {
            let (t, used) = read_tensor_from(&bytes[pos..]).map_err(|e| format!("`{name}`: {e}"))?;
            pos += used;
            params.put(name, t.into_precision::<T>());
        }
        if pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - pos));
        }
        Ok(Self {
            network: header.network,
            train: header.train,
            epoch: header.epoch,
            lr: header.lr,
            rng: header.rng,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// A missing or malformed file is a config error: the checkpoint is
    /// what configures evaluation.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ck = Self::from_bytes(&bytes)
            .map_err(|e| Error::Config(format!("bad checkpoint {}: {e}", path.display())))?;
        ck.network()?.check_params(&ck.params)?;
        Ok(ck)
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(self.network.clone())
    }
}

/// Scores of one evaluated video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub id: String,
    pub label: usize,
    /// Softmax averaged over the sampled clips.
    pub scores: Vec<f64>,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub videos: Vec<VideoScore>,
}

/// Elementwise mean of per-clip score vectors.
pub fn average_scores(clip_scores: &[Vec<f64>]) -> Vec<f64> {
    let n = clip_scores.len() as f64;
    let mut out = vec![0.0; clip_scores.first().map_or(0, Vec::len)];
    for s in clip_scores {
        for (o, &x) in out.iter_mut().zip(s) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Video-level top-1 accuracy: `clips_per_video` evenly spaced clips per
/// video, softmax averaged, argmax with ties to the lowest class.
pub fn evaluate<T: Scalar>(
    net: &Network,
    params: &ParamSet<T>,
    videos: &[VideoRecord<T>],
    clips_per_video: usize,
    parallel: bool,
) -> Result<EvalReport> {
    if videos.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    if clips_per_video == 0 {
        return Err(Error::Config("need at least one clip per video".into()));
    }
    net.check_params(params)?;
    let k = net.config().k;
    let score = |v: &VideoRecord<T>| -> Result<VideoScore> {
        let per_clip = (0..clips_per_video)
            .map(|index| {
                let mode = SampleMode::<ChaCha8Rng>::Uniform { index, count: clips_per_video };
                let clip = sample_clip(v, k, mode)?;
                Ok(net.predict(params, &clip)?.iter().map(|p| p.to_f64_lossy()).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let scores = average_scores(&per_clip);
        Ok(VideoScore {
            id: v.id.clone(),
            label: v.label,
            predicted: argmax(&scores),
            scores,
        })
    };
    let videos: Vec<VideoScore> = if parallel {
        videos.par_iter().map(score).collect::<Result<_>>()?
    } else {
        videos.iter().map(score).collect::<Result<_>>()?
    };
    let correct = videos.iter().filter(|v| v.predicted == v.label).count();
    Ok(EvalReport {
        accuracy: correct as f64 / videos.len() as f64,
        videos,
    })
}

/// Evaluates with the network and parameters stored in a checkpoint.
pub fn evaluate_checkpoint<T: Scalar>(
    ck: &Checkpoint<T>,
    videos: &[VideoRecord<T>],
    clips_per_video: usize,
    parallel: bool,
) -> Result<EvalReport> {
    evaluate(&ck.network()?, &ck.params, videos, clips_per_video, parallel)
}

/// One row of the metrics log; loss components are epoch means over clips.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Writes the metrics log as CSV: `epoch, classif, proj_0.., l2, total,
/// val_acc, lr`.
pub fn write_metrics_csv(rows: &[EpochMetrics], num_ts_layers: usize, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["epoch".to_string(), "classif".into()];
    head.extend((0..num_ts_layers).map(|m| format!("proj_{m}")));
    head.extend(["l2", "total", "val_acc", "lr"].map(String::from));
    let csv_err = |e: csv::Error| Error::Data(format!("metrics log: {e}"));
    w.write_record(&head).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.epoch.to_string(), r.loss.classif.to_string()];
        rec.extend(r.loss.proj_terms.iter().map(f64::to_string));
        rec.extend([r.loss.l2, r.loss.total, r.val_acc, r.lr].map(|x| x.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("metrics log: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Completed,
    /// A non-finite loss or gradient appeared during this epoch; the
    /// checkpoint holds the state after the previous one.
    Diverged { epoch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Last good state.
    pub checkpoint: Checkpoint<T>,
    pub metrics: Vec<EpochMetrics>,
    pub stop: StopReason,
}

#[derive(Default)]
struct EpochSums {
    clips: usize,
    classif: f64,
    proj: Vec<f64>,
    l2: f64,
    total: f64,
}

impl EpochSums {
    fn add(&mut self, l: &LossBreakdown, n: usize) {
        let w = n as f64;
        self.clips += n;
        self.classif += w * l.classif;
        self.proj.resize(l.proj_terms.len(), 0.0);
        for (s, p) in self.proj.iter_mut().zip(&l.proj_terms) {
            *s += w * p;
        }
        self.l2 += w * l.l2;
        self.total += w * l.total;
    }

    fn mean(&self) -> LossBreakdown {
        let n = self.clips.max(1) as f64;
        LossBreakdown {
            classif: self.classif / n,
            proj_terms: self.proj.iter().map(|p| p / n).collect(),
            l2: self.l2 / n,
            total: self.total / n,
        }
    }
}

/// Trains from a fresh initialization drawn from `cfg.seed`.
///
/// Each epoch shuffles the training videos, takes one random clip per video
/// and runs momentum SGD over batches of `batch_size`. After every epoch the
/// validation set is scored with [`evaluate`]; `patience` epochs without a
/// new best accuracy multiply the learning rate by `lr_decay_factor`.
/// `on_epoch` sees every finished epoch and its checkpoint.
pub fn train<T: Scalar>(
    train_set: &[VideoRecord<T>],
    validation: &[VideoRecord<T>],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &Checkpoint<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let net_cfg = cfg.resolve(net_cfg);
    let net = Network::new(net_cfg.clone())?;
    if let Some(v) = train_set.iter().find(|v| v.label >= net_cfg.num_classes) {
        return Err(Error::Data(format!("video `{}` has label {} >= num_classes", v.id, v.label)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = net.init_params::<T>(&mut rng)?;
    let mut velocity = params.zeros_like();
    let mut lr = cfg.lr;
    let snapshot = |params: &ParamSet<T>, rng: &ChaCha8Rng, epoch, lr| Checkpoint {
        network: net_cfg.clone(),
        train: cfg.clone(),
        epoch,
        lr,
        rng: RngState::capture(rng),
        params: params.clone(),
    };
    let mut last_good = snapshot(&params, &rng, 0, lr);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = EpochSums::default();
        let mut diverged = false;
        for batch in order.chunks(cfg.batch_size) {
            let clips = batch
                .iter()
                .map(|&i| sample_clip(&train_set[i], net_cfg.k, SampleMode::Random(&mut rng)))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label).collect();
            let step = net
                .forward(&params, &clips, &labels, cfg.parallel)
                .and_then(|pass| Ok((net.backward(&params, &pass, T::one(), cfg.parallel)?, pass.loss)));
            let (grads, loss) = match step {
                Ok(s) => s,
                Err(Error::Numerical(_) | Error::Singular { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() || !grads.is_finite() {
                diverged = true;
                break;
            }
            sums.add(&loss, batch.len());
            sgd_step(&mut params, &grads, &mut velocity, lr, cfg.momentum)?;
        }
        if diverged || !params.is_finite() {
            return Ok(TrainOutcome {
                checkpoint: last_good,
                metrics,
                stop: StopReason::Diverged { epoch },
            });
        }
        let val_acc = evaluate(&net, &params, validation, cfg.eval_clips_per_video, cfg.parallel)?.accuracy;
        let row = EpochMetrics { epoch, loss: sums.mean(), val_acc, lr };
        if val_acc > best {
            best = val_acc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                lr *= cfg.lr_decay_factor;
                stale = 0;
            }
        }
        last_good = snapshot(&params, &rng, epoch + 1, lr);
        on_epoch(&row, &last_good)?;
        metrics.push(row);
    }
    Ok(TrainOutcome {
        checkpoint: last_good,
        metrics,
        stop: StopReason::Completed,
    })
}
