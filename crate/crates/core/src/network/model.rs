use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use super::config::{NetworkConfig, TemporalPooling};
use super::conv::{conv_backward, conv_forward, ConvGeom};
use super::loss::{cross_entropy, softmax, LossBreakdown};
use crate::error::{Error, Result};
use crate::grad::ParamSet;
use crate::tensor::{Scalar, Tensor};
use crate::tspool::{ts_backward, ts_forward, ClipTensor, TsLayerParams, TsState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Ts(usize),
    Mean,
    Merge,
    Conv { block: usize, cin: usize },
}

/// Whether a parameter counts toward the L2 term.
pub fn is_weight(name: &str) -> bool {
    name.ends_with(".weight") || name.ends_with(".w1") || name.ends_with(".w2")
}

fn conv_w(b: usize) -> String {
    format!("conv{b}.weight")
}
fn conv_b(b: usize) -> String {
    format!("conv{b}.bias")
}
fn ts_w1(m: usize) -> String {
    format!("ts{m}.w1")
}
fn ts_w2(m: usize) -> String {
    format!("ts{m}.w2")
}

/// The toy temporal squeeze network: frame-wise conv blocks with shared
/// weights, temporal layers at configured depths, frames merged into
/// channels after the last temporal layer, then global average pooling and
/// a linear classifier.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetworkConfig,
    stages: Vec<Stage>,
    head_channels: usize,
}

enum StageCache<T> {
    Ts { state: TsState<T>, params: TsLayerParams<T> },
    Mean { frames: usize },
    Merge { shape: [usize; 4] },
    Conv { input: Tensor<T>, pre: Tensor<T> },
}

/// Result of running one clip through the network.
pub struct ClipPass<T> {
    pub probs: Vec<T>,
    pub logits: Vec<T>,
    pub label: Option<usize>,
    /// Projection residual of each squeeze layer.
    pub residuals: Vec<T>,
    features: Vec<T>,
    head_shape: [usize; 4],
    cache: Option<Vec<StageCache<T>>>,
}

impl<T> ClipPass<T> {
    /// Globally pooled activations fed to the linear head.
    pub fn features(&self) -> &[T] {
        &self.features
    }
}

/// Forward pass over a labelled batch, kept for the backward pass.
pub struct ForwardPass<T> {
    pub clips: Vec<ClipPass<T>>,
    pub loss: LossBreakdown,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn probs(&self) -> Vec<Vec<T>> {
        self.clips.iter().map(|c| c.probs.clone()).collect()
    }

    /// Zeroes the cached projection residual vectors of every squeeze
    /// layer, cutting the `x̂` path out of the backward pass.
    pub fn zero_projection_path(&mut self) {
        for c in &mut self.clips {
            for s in c.cache.iter_mut().flatten() {
                if let StageCache::Ts { state, .. } = s {
                    state.zero_residual_path();
                }
            }
        }
    }

    /// Drops cached intermediates; a backward pass afterwards fails.
    pub fn drop_cache(&mut self) {
        for c in &mut self.clips {
            c.cache = None;
        }
    }
}

impl Network {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut stages = Vec::new();
        let mut channels = cfg.in_channels;
        let mut frames = cfg.k;
        let last = cfg.ts_placements.len();
        let mut merged = false;
        let merge = |stages: &mut Vec<Stage>, channels: &mut usize, frames: &mut usize| {
            stages.push(Stage::Merge);
            *channels *= *frames;
            *frames = 1;
        };
        if last == 0 {
            merge(&mut stages, &mut channels, &mut frames);
            merged = true;
        }
        for block in 0..=cfg.conv_blocks.len() {
            for (m, p) in cfg.ts_placements.iter().enumerate() {
                if p.block != block {
                    continue;
                }
                match cfg.pooling {
                    TemporalPooling::Squeeze => {
                        stages.push(Stage::Ts(m));
                        frames = p.d;
                    }
                    TemporalPooling::Mean => {
                        stages.push(Stage::Mean);
                        frames = 1;
                    }
                }
                if m + 1 == last && !merged {
                    merge(&mut stages, &mut channels, &mut frames);
                    merged = true;
                }
            }
            if let Some(b) = cfg.conv_blocks.get(block) {
                stages.push(Stage::Conv { block, cin: channels });
                channels = b.out_channels;
            }
        }
        Ok(Self {
            cfg,
            stages,
            head_channels: channels,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    /// Overrides the loss weights `β` and `λ`.
    pub fn with_loss_weights(mut self, beta: f64, lambda: f64) -> Result<Self> {
        self.cfg.beta = beta;
        self.cfg.lambda = lambda;
        self.cfg.validate()?;
        Ok(self)
    }

    pub fn num_ts_layers(&self) -> usize {
        self.cfg.num_ts_layers()
    }

    /// Feature width seen by the classifier.
    pub fn head_channels(&self) -> usize {
        self.head_channels
    }

    /// Conv weights He-uniform, classifier Xavier-uniform, biases zero,
    /// squeeze layers per [`TsLayerParams::init`].
    pub fn init_params<T: Scalar>(&self, rng: &mut impl Rng) -> Result<ParamSet<T>> {
        let mut ps = ParamSet::new();
        let lengths = self.cfg.placement_input_lengths();
        for s in &self.stages {
            match *s {
                Stage::Conv { block, cin } => {
                    let b = self.cfg.conv_blocks[block];
                    let fan_in = (b.kernel * b.kernel * cin) as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    let u = Uniform::new_inclusive(-bound, bound).expect("finite");
                    let shape = [b.out_channels, b.kernel, b.kernel, cin];
                    ps.insert(conv_w(block), Tensor::from_fn(&shape, |_| T::of(u.sample(rng))))?;
                    ps.insert(conv_b(block), Tensor::zeros(&[b.out_channels]))?;
                }
                Stage::Ts(m) => {
                    let p = TsLayerParams::<T>::init(lengths[m], self.cfg.ts_placements[m].d, rng)?;
                    ps.insert(ts_w1(m), p.w1)?;
                    ps.insert(ts_w2(m), p.w2)?;
                }
                Stage::Mean | Stage::Merge => {}
            }
        }
        let (f, c) = (self.head_channels, self.cfg.num_classes);
        let bound = (6.0 / (f + c) as f64).sqrt();
        let u = Uniform::new_inclusive(-bound, bound).expect("finite");
        ps.insert("fc.weight", Tensor::from_fn(&[c, f], |_| T::of(u.sample(rng))))?;
        ps.insert("fc.bias", Tensor::zeros(&[c]))?;
        Ok(ps)
    }

    /// Name and shape of every parameter, in sorted name order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let lengths = self.cfg.placement_input_lengths();
        for s in &self.stages {
            match *s {
                Stage::Conv { block, cin } => {
                    let b = self.cfg.conv_blocks[block];
                    out.push((conv_w(block), vec![b.out_channels, b.kernel, b.kernel, cin]));
                    out.push((conv_b(block), vec![b.out_channels]));
                }
                Stage::Ts(m) => {
                    let (k, d) = (lengths[m], self.cfg.ts_placements[m].d);
                    out.push((ts_w1(m), vec![k, k]));
                    out.push((ts_w2(m), vec![k * d, k]));
                }
                Stage::Mean | Stage::Merge => {}
            }
        }
        out.push(("fc.weight".into(), vec![self.cfg.num_classes, self.head_channels]));
        out.push(("fc.bias".into(), vec![self.cfg.num_classes]));
        out.sort();
        out
    }

    /// Checks names and shapes of a parameter set against this network.
    pub fn check_params<T: Scalar>(&self, params: &ParamSet<T>) -> Result<()> {
        let want = self.param_shapes();
        let ok = want.len() == params.len()
            && want
                .iter()
                .zip(params.iter())
                .all(|((n, s), (pn, pt))| n == pn && s.as_slice() == pt.shape());
        if !ok {
            let want: Vec<String> = want.iter().map(|(n, s)| format!("{n}{s:?}")).collect();
            return Err(Error::Config(format!(
                "parameters do not match the network; expected {}",
                want.join(", ")
            )));
        }
        Ok(())
    }

    fn ts_layer<T: Scalar>(&self, params: &ParamSet<T>, m: usize) -> Result<TsLayerParams<T>> {
        let p = TsLayerParams::new(
            params.get(&ts_w1(m))?.clone(),
            params.get(&ts_w2(m))?.clone(),
            self.cfg.ts_placements[m].d,
        )?
        .with_leaky_slope(self.cfg.leaky_slope);
        p.with_ridge(self.cfg.ridge_eps, self.cfg.ridge_mode)
    }

    /// Squeeze parameters of layer `m` as a standalone layer.
    pub fn ts_params<T: Scalar>(&self, params: &ParamSet<T>, m: usize) -> Result<TsLayerParams<T>> {
        if m >= self.num_ts_layers() {
            return Err(Error::Config(format!("no squeeze layer {m}")));
        }
        self.ts_layer(params, m)
    }

    fn check_clip<T: Scalar>(&self, clip: &ClipTensor<T>) -> Result<()> {
        let (_, _, c) = clip.frame_dims();
        if clip.k() != self.cfg.k || c != self.cfg.in_channels {
            return Err(Error::Config(format!(
                "clip is {}×H×W×{c}, network expects {}×H×W×{}",
                clip.k(),
                self.cfg.k,
                self.cfg.in_channels
            )));
        }
        Ok(())
    }

    fn forward_clip<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        clip: &ClipTensor<T>,
        label: Option<usize>,
        keep_cache: bool,
    ) -> Result<ClipPass<T>> {
        self.check_clip(clip)?;
        let mut act = clip.frames().clone();
        let mut cache = Vec::new();
        let mut residuals = Vec::new();
        for s in &self.stages {
            let dims: [usize; 4] = act.shape().try_into().expect("rank 4");
            let [t, h, w, c] = dims;
            match *s {
                Stage::Ts(m) => {
                    let layer = self.ts_layer(params, m)?;
                    let state = ts_forward(&ClipTensor::new(act)?, &layer)?;
                    residuals.push(state.residual());
                    act = state.squeezed().y.clone();
                    if keep_cache {
                        cache.push(StageCache::Ts { state, params: layer });
                    }
                }
                Stage::Mean => {
                    act = act.reduce_mean(&[0])?.reshape(&[1, h, w, c])?;
                    if keep_cache {
                        cache.push(StageCache::Mean { frames: t });
                    }
                }
                Stage::Merge => {
                    let src = act.data();
                    let mut out = Vec::with_capacity(src.len());
                    for px in 0..h * w {
                        for f in 0..t {
                            out.extend_from_slice(&src[(f * h * w + px) * c..(f * h * w + px + 1) * c]);
                        }
                    }
                    act = Tensor::new(vec![1, h, w, t * c], out)?;
                    if keep_cache {
                        cache.push(StageCache::Merge { shape: dims });
                    }
                }
                Stage::Conv { block, cin } => {
                    let b = self.cfg.conv_blocks[block];
                    let g = ConvGeom { h, w, cin, cout: b.out_channels, kernel: b.kernel, stride: b.stride };
                    debug_assert_eq!(c, cin);
                    let weight = params.get(&conv_w(block))?;
                    let bias = params.get(&conv_b(block))?;
                    if weight.len() != g.weight_len() {
                        return Err(Error::Config(format!("conv{block}.weight has wrong size")));
                    }
                    let frame = h * w * c;
                    let mut pre = Vec::with_capacity(t * g.out_h() * g.out_w() * g.cout);
                    for f in 0..t {
                        pre.extend(conv_forward(
                            &g,
                            &act.data()[f * frame..(f + 1) * frame],
                            weight.data(),
                            bias.data(),
                        ));
                    }
                    let pre = Tensor::new(vec![t, g.out_h(), g.out_w(), g.cout], pre)?;
                    let out = pre.map(|x| x.max(T::zero()));
                    if keep_cache {
                        cache.push(StageCache::Conv { input: act, pre });
                    }
                    act = out;
                }
            }
        }
        let head_shape: [usize; 4] = act.shape().try_into().expect("rank 4");
        let features = act.reduce_mean(&[0, 1, 2])?.into_data();
        let fc_w = params.get("fc.weight")?;
        let fc_b = params.get("fc.bias")?;
        let classes = self.cfg.num_classes;
        if fc_w.shape() != [classes, features.len()] {
            return Err(Error::Config(format!(
                "fc.weight is {:?}, head needs [{classes}, {}]",
                fc_w.shape(),
                features.len()
            )));
        }
        let logits: Vec<T> = (0..classes)
            .map(|i| {
                let row = &fc_w.data()[i * features.len()..(i + 1) * features.len()];
                fc_b.data()[i] + row.iter().zip(&features).map(|(&a, &b)| a * b).sum::<T>()
            })
            .collect();
        let probs = softmax(&logits);
        Ok(ClipPass {
            probs,
            logits,
            label,
            residuals,
            features,
            head_shape,
            cache: keep_cache.then_some(cache),
        })
    }

    /// Class probabilities for one clip (no intermediates retained).
    pub fn predict<T: Scalar>(&self, params: &ParamSet<T>, clip: &ClipTensor<T>) -> Result<Vec<T>> {
        Ok(self.forward_clip(params, clip, None, false)?.probs)
    }

    /// Probabilities and per-layer residuals for one clip.
    pub fn inspect<T: Scalar>(&self, params: &ParamSet<T>, clip: &ClipTensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        let p = self.forward_clip(params, clip, None, false)?;
        Ok((p.probs, p.residuals))
    }

    /// `½ Σ w²` over weight tensors.
    pub fn l2_term<T: Scalar>(&self, params: &ParamSet<T>) -> f64 {
        params
            .iter()
            .filter(|(n, _)| is_weight(n))
            .map(|(_, t)| t.data().iter().map(|&x| x.to_f64_lossy() * x.to_f64_lossy()).sum::<f64>())
            .sum::<f64>()
            * 0.5
    }

    /// Forward pass over a labelled batch, computing the composite loss.
    pub fn forward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        clips: &[ClipTensor<T>],
        labels: &[usize],
        parallel: bool,
    ) -> Result<ForwardPass<T>> {
        if clips.is_empty() || clips.len() != labels.len() {
            return Err(Error::Config(format!(
                "batch has {} clips and {} labels",
                clips.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.cfg.num_classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {} classes",
                self.cfg.num_classes
            )));
        }
        if let Some(c) = clips.first() {
            let dims = c.frames().shape();
            if clips.iter().any(|x| x.frames().shape() != dims) {
                return Err(Error::Config("clips in a batch must share one shape".into()));
            }
        }
        let run = |(c, &l): (&ClipTensor<T>, &usize)| self.forward_clip(params, c, Some(l), true);
        let passes: Vec<ClipPass<T>> = if parallel {
            clips.par_iter().zip(labels.par_iter()).map(run).collect::<Result<_>>()?
        } else {
            clips.iter().zip(labels).map(run).collect::<Result<_>>()?
        };
        let n = passes.len() as f64;
        let classif = passes
            .iter()
            .map(|p| cross_entropy(&p.logits, p.label.unwrap()).to_f64_lossy())
            .sum::<f64>()
            / n;
        let proj_terms: Vec<f64> = (0..self.num_ts_layers())
            .map(|m| passes.iter().map(|p| p.residuals[m].to_f64_lossy()).sum::<f64>() / n)
            .collect();
        let loss = LossBreakdown::compose(classif, proj_terms, self.l2_term(params), self.cfg.beta, self.cfg.lambda);
        Ok(ForwardPass { clips: passes, loss })
    }

    fn backward_clip<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        pass: &ClipPass<T>,
        classif_scale: T,
        proj_scale: T,
    ) -> Result<ParamSet<T>> {
        let cache = pass
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("forward pass kept no intermediates".into()))?;
        let label = pass
            .label
            .ok_or_else(|| Error::State("forward pass has no label".into()))?;
        let mut grads = params.zeros_like();

        // softmax cross-entropy
        let g_logits: Vec<T> = pass
            .probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (if i == label { p - T::one() } else { p }) * classif_scale)
            .collect();
        let f = pass.features.len();
        {
            let gw = grads.get_mut("fc.weight")?.data_mut();
            for (i, &g) in g_logits.iter().enumerate() {
                for (j, &x) in pass.features.iter().enumerate() {
                    gw[i * f + j] = gw[i * f + j] + g * x;
                }
            }
        }
        grads.get_mut("fc.bias")?.data_mut().copy_from_slice(&g_logits);
        let fc_w = params.get("fc.weight")?.data();
        let g_feat: Vec<T> = (0..f)
            .map(|j| g_logits.iter().enumerate().map(|(i, &g)| g * fc_w[i * f + j]).sum())
            .collect();

        // global average pool
        let [t, h, w, c] = pass.head_shape;
        let inv = T::one() / T::of((t * h * w) as f64);
        let mut g_act = Tensor::from_fn(&pass.head_shape, |i| g_feat[i % c] * inv);

        for (s, sc) in self.stages.iter().zip(cache).rev() {
            g_act = match (*s, sc) {
                (Stage::Ts(m), StageCache::Ts { state, params: layer }) => {
                    let g = ts_backward(state, layer, &g_act, proj_scale)?;
                    grads.get_mut(&ts_w1(m))?.axpy(T::one(), &g.w1)?;
                    grads.get_mut(&ts_w2(m))?.axpy(T::one(), &g.w2)?;
                    g.clip
                }
                (Stage::Mean, StageCache::Mean { frames }) => {
                    let [_, h, w, c] = g_act.shape().try_into().expect("rank 4");
                    let inv = T::one() / T::of(*frames as f64);
                    let src = g_act.data();
                    let per = h * w * c;
                    Tensor::from_fn(&[*frames, h, w, c], |i| src[i % per] * inv)
                }
                (Stage::Merge, StageCache::Merge { shape }) => {
                    let [t, h, w, c] = *shape;
                    let src = g_act.data();
                    let mut out = vec![T::zero(); src.len()];
                    for px in 0..h * w {
                        for f in 0..t {
                            let dst = (f * h * w + px) * c;
                            let from = px * t * c + f * c;
                            out[dst..dst + c].copy_from_slice(&src[from..from + c]);
                        }
                    }
                    Tensor::new(shape.to_vec(), out)?
                }
                (Stage::Conv { block, cin }, StageCache::Conv { input, pre }) => {
                    let b = self.cfg.conv_blocks[block];
                    let [t, h, w, _] = input.shape().try_into().expect("rank 4");
                    let g = ConvGeom { h, w, cin, cout: b.out_channels, kernel: b.kernel, stride: b.stride };
                    let g_pre = g_act.zip_with(pre, |gr, p| if p > T::zero() { gr } else { T::zero() })?;
                    let weight = params.get(&conv_w(block))?.data();
                    let mut gw = vec![T::zero(); g.weight_len()];
                    let mut gb = vec![T::zero(); g.cout];
                    let (fin, fout) = (h * w * cin, g.out_h() * g.out_w() * g.cout);
                    let mut g_in = Vec::with_capacity(t * fin);
                    for fr in 0..t {
                        g_in.extend(conv_backward(
                            &g,
                            &input.data()[fr * fin..(fr + 1) * fin],
                            weight,
                            &g_pre.data()[fr * fout..(fr + 1) * fout],
                            &mut gw,
                            &mut gb,
                        ));
                    }
                    grads.get_mut(&conv_w(block))?.axpy(T::one(), &Tensor::new(vec![g.weight_len()], gw)?.reshape(params.get(&conv_w(block))?.shape())?)?;
                    grads.get_mut(&conv_b(block))?.axpy(T::one(), &Tensor::new(vec![g.cout], gb)?)?;
                    Tensor::new(input.shape().to_vec(), g_in)?
                }
                _ => return Err(Error::State("cache does not match network stages".into())),
            };
        }
        Ok(grads)
    }

    /// Reverse pass: gradient of `cotangent · total` with respect to every
    /// parameter. Per-clip gradients are reduced in batch order, so the
    /// parallel and serial paths give identical results.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        pass: &ForwardPass<T>,
        cotangent: T,
        parallel: bool,
    ) -> Result<ParamSet<T>> {
        let weights = LossWeights { classif: 1.0, beta: self.cfg.beta, lambda: self.cfg.lambda };
        self.backward_weighted(params, pass, cotangent, weights, parallel)
    }

    /// Like [`Network::backward`] but with explicit weights on the three loss
    /// terms, so each term's gradient can be taken on its own.
    pub fn backward_weighted<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        pass: &ForwardPass<T>,
        cotangent: T,
        weights: LossWeights,
        parallel: bool,
    ) -> Result<ParamSet<T>> {
        let scale = cotangent / T::of(pass.clips.len() as f64);
        let classif_scale = T::of(weights.classif) * scale;
        let proj_scale = T::of(weights.beta) * scale;
        let per_clip: Vec<ParamSet<T>> = if parallel {
            pass.clips
                .par_iter()
                .map(|c| self.backward_clip(params, c, classif_scale, proj_scale))
                .collect::<Result<_>>()?
        } else {
            pass.clips
                .iter()
                .map(|c| self.backward_clip(params, c, classif_scale, proj_scale))
                .collect::<Result<_>>()?
        };
        let mut grads = params.zeros_like();
        for g in &per_clip {
            grads.axpy(T::one(), g)?;
        }
        let decay = T::of(weights.lambda) * cotangent;
        for (name, g) in grads.iter_mut() {
            if is_weight(name) {
                g.axpy(decay, params.get(name)?)?;
            }
        }
        Ok(grads)
    }
}

/// Multipliers on the classification, projection and weight-decay terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub classif: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl LossWeights {
    pub const CLASSIF: Self = Self { classif: 1.0, beta: 0.0, lambda: 0.0 };

    pub fn projection(beta: f64) -> Self {
        Self { classif: 0.0, beta, lambda: 0.0 }
    }

    pub fn decay(lambda: f64) -> Self {
        Self { classif: 0.0, beta: 0.0, lambda }
    }
}
