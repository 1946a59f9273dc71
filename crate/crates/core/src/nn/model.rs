use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, BatchNorm, BlockCache, BlockGrad, ConvBlock, ConvLayer, Conv1d, LayerCache, LayerGrad};
use crate::cbp::{make_sketch_params, CbpCache, CompactBilinear, SketchParams};
use crate::error::{Error, Result};
use crate::tensor::{Mat, Real};

/// How the two branch outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Cbp,
    Concat,
}

/// Which beamformed inputs reach the output branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Both,
    B0Only,
    B1Only,
}

/// Transform applied to input and target magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScale {
    #[default]
    Linear,
    Log1p,
}

impl FeatureScale {
    pub fn forward<T: Real>(self, x: &Mat<T>) -> Mat<T> {
        match self {
            FeatureScale::Linear => x.clone(),
            FeatureScale::Log1p => x.map(|v| v.max(T::zero()).ln_1p()),
        }
    }

    pub fn inverse<T: Real>(self, x: &Mat<T>) -> Mat<T> {
        match self {
            FeatureScale::Linear => x.clone(),
            FeatureScale::Log1p => x.map(|v| v.exp_m1()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub channels: usize,
    pub taps: usize,
    /// One residual block per entry in each input branch.
    pub dilations: Vec<usize>,
    pub output_dilation: usize,
    pub sketch_dim: usize,
    pub fusion: Fusion,
    pub input_mode: InputMode,
    pub features: FeatureScale,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            channels: crate::dsp::BINS,
            taps: 3,
            dilations: vec![1, 2, 4, 8],
            output_dilation: 1,
            sketch_dim: crate::dsp::BINS,
            fusion: Fusion::Cbp,
            input_mode: InputMode::Both,
            features: FeatureScale::Linear,
            bn_eps: 1e-3,
            bn_momentum: 0.9,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.sketch_dim == 0 {
            return Err(Error::config("channel and sketch sizes must be positive"));
        }
        if self.taps % 2 == 0 {
            return Err(Error::config("filter length must be odd"));
        }
        if self.dilations.is_empty() || self.dilations.iter().chain([&self.output_dilation]).any(|&d| d == 0) {
            return Err(Error::config("dilations must be positive and nonempty"));
        }
        if !(self.bn_eps > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::config("invalid batch-norm settings"));
        }
        Ok(())
    }

    /// Width of the tensor entering the output branch.
    pub fn fused_channels(&self) -> usize {
        match (self.input_mode, self.fusion) {
            (InputMode::Both, Fusion::Cbp) => self.sketch_dim,
            (InputMode::Both, Fusion::Concat) => 2 * self.channels,
            _ => self.channels,
        }
    }

    /// Frames on either side of an output frame that can influence it.
    pub fn reach(&self) -> usize {
        let half = self.taps / 2;
        let branch: usize = self.dilations.iter().map(|d| 2 * half * d).sum();
        branch + 2 * half * self.output_dilation
    }
}

/// Two-branch dilated TCN encoder, fusion, and output branch.
#[derive(Debug, Clone)]
pub struct TcnModel<T: Real> {
    pub arch: Architecture,
    pub branch0: Vec<ConvBlock<T>>,
    pub branch1: Vec<ConvBlock<T>>,
    pub pool: CompactBilinear<T>,
    pub out_conv1: ConvLayer<T>,
    pub out_block: ConvBlock<T>,
    pub out_conv2: ConvLayer<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real> {
    width: usize,
    branch0: Vec<BlockCache<T>>,
    branch1: Vec<BlockCache<T>>,
    pool: Option<CbpCache<T>>,
    out_conv1: LayerCache<T>,
    out_block: BlockCache<T>,
    out_conv2: LayerCache<T>,
}

/// Gradients laid out like the model's trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub branch0: Vec<BlockGrad<T>>,
    pub branch1: Vec<BlockGrad<T>>,
    pub out_conv1: LayerGrad<T>,
    pub out_block: BlockGrad<T>,
    pub out_conv2: LayerGrad<T>,
}

impl<T: Real> Gradients<T> {
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut v = Vec::new();
        for b in self.branch0.iter().chain(&self.branch1) {
            v.extend(b.tensors());
        }
        v.extend(self.out_conv1.tensors());
        v.extend(self.out_block.tensors());
        v.extend(self.out_conv2.tensors());
        v
    }
}

impl<T: Real> TcnModel<T> {
    /// Randomly initialized model; weights and sketch parameters depend only on `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = arch.channels;
        let branch = |rng: &mut ChaCha8Rng| -> Vec<ConvBlock<T>> {
            arch.dilations
                .iter()
                .map(|&d| {
                    let mut b = ConvBlock::new(c, arch.taps, d, Activation::Relu, arch.bn_eps, arch.bn_momentum);
                    b.init(rng);
                    b
                })
                .collect()
        };
        let branch0 = branch(&mut rng);
        let branch1 = branch(&mut rng);
        let pu = make_sketch_params(c, arch.sketch_dim, rng.random())?;
        let pw = make_sketch_params(c, arch.sketch_dim, rng.random())?;
        let mut out_conv1 = ConvLayer {
            conv: Conv1d::zeros(arch.fused_channels(), c, 1, 1),
            act: Activation::Relu,
            bn: Some(BatchNorm::new(c, arch.bn_eps, arch.bn_momentum)),
        };
        out_conv1.conv.init(&mut rng);
        let mut out_block = ConvBlock::new(c, arch.taps, arch.output_dilation, Activation::Linear, arch.bn_eps, arch.bn_momentum);
        out_block.init(&mut rng);
        let mut out_conv2 = ConvLayer {
            conv: Conv1d::zeros(c, c, 1, 1),
            act: Activation::Linear,
            bn: None,
        };
        out_conv2.conv.init(&mut rng);
        Ok(Self {
            pool: CompactBilinear::new(pu, pw)?,
            arch,
            branch0,
            branch1,
            out_conv1,
            out_block,
            out_conv2,
        })
    }

    pub fn sketch_params(&self) -> (&SketchParams, &SketchParams) {
        self.pool.params()
    }

    fn check_inputs(&self, b0: &Mat<T>, b1: &Mat<T>, width: usize) -> Result<()> {
        let c = self.arch.channels;
        if b0.rows() != c || b1.rows() != c {
            return Err(Error::shape(format!(
                "inputs have {} and {} channels, model expects {c}",
                b0.rows(),
                b1.rows()
            )));
        }
        if b0.cols() != b1.cols() {
            return Err(Error::shape(format!(
                "inputs have {} and {} frames",
                b0.cols(),
                b1.cols()
            )));
        }
        if width == 0 || b0.cols() % width != 0 {
            return Err(Error::shape(format!(
                "{} frames do not split into windows of {width}",
                b0.cols()
            )));
        }
        Ok(())
    }

    /// Training-mode forward on `windows` side-by-side windows of `width` frames.
    /// Inputs are raw magnitudes; the output is in the feature domain.
    pub fn forward_train(&self, b0: &Mat<T>, b1: &Mat<T>, width: usize) -> Result<(Mat<T>, ForwardCache<T>)> {
        self.check_inputs(b0, b1, width)?;
        let f = self.arch.features;
        let run = |blocks: &[ConvBlock<T>], x: Mat<T>| -> Result<(Mat<T>, Vec<BlockCache<T>>)> {
            let mut h = x;
            let mut caches = Vec::with_capacity(blocks.len());
            for b in blocks {
                let (y, c) = b.forward_train(&h, width)?;
                caches.push(c);
                h = y;
            }
            Ok((h, caches))
        };
        let use0 = self.arch.input_mode != InputMode::B1Only;
        let use1 = self.arch.input_mode != InputMode::B0Only;
        let (e0, c0) = if use0 { run(&self.branch0, f.forward(b0))? } else { (Mat::zeros(0, 0), Vec::new()) };
        let (e1, c1) = if use1 { run(&self.branch1, f.forward(b1))? } else { (Mat::zeros(0, 0), Vec::new()) };
        let (fused, pool) = self.fuse(e0, e1)?;
        let (h, oc1) = self.out_conv1.forward_train(&fused, width)?;
        let (h, ob) = self.out_block.forward_train(&h, width)?;
        let (y, oc2) = self.out_conv2.forward_train(&h, width)?;
        Ok((
            y,
            ForwardCache {
                width,
                branch0: c0,
                branch1: c1,
                pool,
                out_conv1: oc1,
                out_block: ob,
                out_conv2: oc2,
            },
        ))
    }

    fn fuse(&self, e0: Mat<T>, e1: Mat<T>) -> Result<(Mat<T>, Option<CbpCache<T>>)> {
        Ok(match (self.arch.input_mode, self.arch.fusion) {
            (InputMode::B0Only, _) => (e0, None),
            (InputMode::B1Only, _) => (e1, None),
            (InputMode::Both, Fusion::Concat) => (Mat::vstack(&[&e0, &e1])?, None),
            (InputMode::Both, Fusion::Cbp) => {
                let (y, c) = self.pool.forward(&e0, &e1)?;
                (y, Some(c))
            }
        })
    }

    /// Inference-mode forward (batch norm uses running statistics); output in
    /// the feature domain.
    pub fn forward_eval(&self, b0: &Mat<T>, b1: &Mat<T>, width: usize) -> Result<Mat<T>> {
        self.check_inputs(b0, b1, width)?;
        let f = self.arch.features;
        let run = |blocks: &[ConvBlock<T>], x: Mat<T>| -> Result<Mat<T>> {
            blocks.iter().try_fold(x, |h, b| b.forward_eval(&h, width))
        };
        let e0 = if self.arch.input_mode != InputMode::B1Only { run(&self.branch0, f.forward(b0))? } else { Mat::zeros(0, 0) };
        let e1 = if self.arch.input_mode != InputMode::B0Only { run(&self.branch1, f.forward(b1))? } else { Mat::zeros(0, 0) };
        let (fused, _) = self.fuse(e0, e1)?;
        let h = self.out_conv1.forward_eval(&fused, width)?;
        let h = self.out_block.forward_eval(&h, width)?;
        self.out_conv2.forward_eval(&h, width)
    }

    /// Estimated target magnitudes (may be negative; clamp before synthesis).
    pub fn predict(&self, b0: &Mat<T>, b1: &Mat<T>, width: usize) -> Result<Mat<T>> {
        Ok(self.arch.features.inverse(&self.forward_eval(b0, b1, width)?))
    }

    pub fn update_running(&mut self, cache: &ForwardCache<T>) {
        for (b, c) in self.branch0.iter_mut().zip(&cache.branch0) {
            b.update_running(c);
        }
        for (b, c) in self.branch1.iter_mut().zip(&cache.branch1) {
            b.update_running(c);
        }
        self.out_conv1.update_running(&cache.out_conv1);
        self.out_block.update_running(&cache.out_block);
        self.out_conv2.update_running(&cache.out_conv2);
    }

    pub fn zero_grad(&self) -> Gradients<T> {
        Gradients {
            branch0: self.branch0.iter().map(|b| b.zero_grad()).collect(),
            branch1: self.branch1.iter().map(|b| b.zero_grad()).collect(),
            out_conv1: self.out_conv1.zero_grad(),
            out_block: self.out_block.zero_grad(),
            out_conv2: self.out_conv2.zero_grad(),
        }
    }

    /// Backpropagates `d_out` (gradient of the loss wrt the feature-domain
    /// output). Branches that do not feed the output get zero gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Mat<T>) -> Result<Gradients<T>> {
        let w = cache.width;
        let mut g = self.zero_grad();
        if d_out.shape() != (self.arch.channels, cache.out_conv2.cols()) {
            return Err(Error::shape(format!(
                "output gradient is {}x{}, expected {}x{}",
                d_out.rows(),
                d_out.cols(),
                self.arch.channels,
                cache.out_conv2.cols()
            )));
        }
        let dh = self
            .out_conv2
            .backward(&cache.out_conv2, w, d_out, &mut g.out_conv2, true)
            .expect("input gradient requested");
        let dh = self.out_block.backward(&cache.out_block, w, &dh, &mut g.out_block);
        let dfused = self
            .out_conv1
            .backward(&cache.out_conv1, w, &dh, &mut g.out_conv1, true)
            .expect("input gradient requested");
        let c = self.arch.channels;
        let (d0, d1) = match (self.arch.input_mode, self.arch.fusion) {
            (InputMode::B0Only, _) => (Some(dfused), None),
            (InputMode::B1Only, _) => (None, Some(dfused)),
            (InputMode::Both, Fusion::Concat) => (Some(dfused.rows_range(0, c)), Some(dfused.rows_range(c, 2 * c))),
            (InputMode::Both, Fusion::Cbp) => {
                let pool = cache.pool.as_ref().ok_or_else(|| Error::shape("missing pooling cache"))?;
                let (a, b) = self.pool.backward(&dfused, pool)?;
                (Some(a), Some(b))
            }
        };
        let back = |blocks: &[ConvBlock<T>], caches: &[BlockCache<T>], grads: &mut [BlockGrad<T>], mut d: Mat<T>| {
            for ((b, c), g) in blocks.iter().zip(caches).zip(grads.iter_mut()).rev() {
                d = b.backward(c, w, &d, g);
            }
        };
        if let Some(d) = d0 {
            back(&self.branch0, &cache.branch0, &mut g.branch0, d);
        }
        if let Some(d) = d1 {
            back(&self.branch1, &cache.branch1, &mut g.branch1, d);
        }
        Ok(g)
    }

    /// Trainable tensors with their names, in serialization order.
    pub fn named_params(&self) -> Vec<(String, &Vec<T>)> {
        let block_names = ["conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta", "conv2.weight", "conv2.bias", "bn2.gamma", "bn2.beta"];
        let mut v = Vec::new();
        for (tag, branch) in [("b0", &self.branch0), ("b1", &self.branch1)] {
            for (i, b) in branch.iter().enumerate() {
                for (n, t) in block_names.iter().zip(b.params()) {
                    v.push((format!("{tag}.block{i}.{n}"), t));
                }
            }
        }
        for (n, t) in ["weight", "bias", "bn.gamma", "bn.beta"].iter().zip(self.out_conv1.params()) {
            v.push((format!("out_conv1.{n}"), t));
        }
        for (n, t) in block_names.iter().zip(self.out_block.params()) {
            v.push((format!("out_block.{n}"), t));
        }
        for (n, t) in ["weight", "bias"].iter().zip(self.out_conv2.params()) {
            v.push((format!("out_conv2.{n}"), t));
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = Vec::new();
        for b in self.branch0.iter_mut().chain(self.branch1.iter_mut()) {
            v.extend(b.params_mut());
        }
        v.extend(self.out_conv1.params_mut());
        v.extend(self.out_block.params_mut());
        v.extend(self.out_conv2.params_mut());
        v
    }

    /// Batch-norm running statistics, in serialization order.
    pub fn buffers(&self) -> Vec<&Vec<T>> {
        let mut v = Vec::new();
        for b in self.branch0.iter().chain(&self.branch1) {
            v.extend(b.buffers());
        }
        v.extend(self.out_conv1.buffers());
        v.extend(self.out_block.buffers());
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = Vec::new();
        for b in self.branch0.iter_mut().chain(self.branch1.iter_mut()) {
            v.extend(b.buffers_mut());
        }
        v.extend(self.out_conv1.buffers_mut());
        v.extend(self.out_block.buffers_mut());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copy of the model in another precision.
    pub fn convert<U: Real>(&self) -> Result<TcnModel<U>> {
        let mut out = TcnModel::<U>::new(self.arch.clone(), 0)?;
        for (dst, (_, src)) in out.params_mut().into_iter().zip(self.named_params()) {
            *dst = src.iter().map(|v| U::of(v.f64())).collect();
        }
        for (dst, src) in out.buffers_mut().into_iter().zip(self.buffers()) {
            *dst = src.iter().map(|v| U::of(v.f64())).collect();
        }
        let (pu, pw) = self.sketch_params();
        out.pool = CompactBilinear::new(pu.clone(), pw.clone())?;
        Ok(out)
    }
}

/// Mean squared error over all entries.
pub fn mse_loss<T: Real>(pred: &Mat<T>, target: &Mat<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.as_slice().len();
    if n == 0 {
        return Err(Error::Empty("loss inputs"));
    }
    let s: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p.f64() - t.f64()).powi(2))
        .sum();
    Ok(s / n as f64)
}

/// Gradient of [`mse_loss`] with respect to `pred`.
pub fn mse_grad<T: Real>(pred: &Mat<T>, target: &Mat<T>) -> Mat<T> {
    let k = T::of(2.0 / pred.as_slice().len() as f64);
    let data = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| k * (p - t))
        .collect();
    Mat::from_vec(pred.rows(), pred.cols(), data).expect("same shape")
}
