//! Two-branch convolutional grasp regressor with hand-written backprop.
//!
//! Each branch (RGB with 3 input channels, depth with 1) is
//! `conv 3x3/2 -> relu -> conv 3x3/2 -> relu`, producing a 16x8x15 map from
//! a 36x64 input. The two flattened maps are summed into one embedding that
//! feeds two linear heads: target pixel (2 outputs) and yaw (1 output).
//!
//! Outputs and labels live in normalized units: pixel x over the input
//! width, pixel y over the input height, yaw over pi/2.

use crate::classical::{CameraCalibration, Point};
use crate::image::{
    center_quarter_rect, crop_center_quarter, load_pgm, load_ppm, resize_bilinear, DepthImage,
    ImageError, RgbImage,
};
use crate::proposal::{wrap_grasp_angle, GraspProposal};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use thiserror::Error;

pub const INPUT_H: usize = 36;
pub const INPUT_W: usize = 64;
pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const CONV1_CH: usize = 8;
pub const CONV2_CH: usize = 16;
pub const EMBED_H: usize = 8;
pub const EMBED_W: usize = 15;
pub const EMBED_DIM: usize = CONV2_CH * EMBED_H * EMBED_W;

/// Depth normalization: elevation above this plane, in units of `DEPTH_SCALE_MM`.
pub const DEPTH_REFERENCE_MM: f64 = 700.0;
pub const DEPTH_SCALE_MM: f64 = 100.0;

/// Keeps flat input regions (zero depth elevation) off the ReLU kink.
pub const CONV_BIAS_INIT: f64 = 0.01;

const PARAMS_MAGIC: &[u8; 8] = b"BGNNPRM1";

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("bad params magic")]
    BadMagic,
    #[error("params file truncated")]
    Truncated,
    #[error("params file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("params do not match the architecture: {0}")]
    Architecture(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, LearnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(LearnError::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn dims3(&self) -> Result<(usize, usize, usize), LearnError> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(LearnError::Shape(format!("expected (C, H, W), got {:?}", self.shape))),
        }
    }
}

/// Patch matrix (output pixels x `c*kh*kw`) for a valid strided convolution.
fn im2col(input: &Tensor, kh: usize, kw: usize, stride: usize, oh: usize, ow: usize) -> DMatrix<f64> {
    let (h, w) = (input.shape[1], input.shape[2]);
    let c = input.shape[0];
    DMatrix::from_fn(oh * ow, c * kh * kw, |p, k| {
        let (y, x) = (p / ow, p % ow);
        let (ic, r) = (k / (kh * kw), k % (kh * kw));
        input.data[(ic * h + y * stride + r / kw) * w + x * stride + r % kw]
    })
}

fn conv_dims(input: &Tensor, kernel: &Tensor, bias_len: usize, stride: usize) -> Result<[usize; 6], LearnError> {
    let (c, h, w) = input.dims3()?;
    let bad = || {
        LearnError::Shape(format!(
            "input {:?}, kernel {:?}, bias {bias_len}, stride {stride}",
            input.shape, kernel.shape
        ))
    };
    let [o, ci, kh, kw] = kernel.shape[..] else {
        return Err(bad());
    };
    if ci != c || kh > h || kw > w || kh == 0 || kw == 0 || stride == 0 || bias_len != o {
        return Err(bad());
    }
    Ok([o, kh, kw, (h - kh) / stride + 1, (w - kw) / stride + 1, c])
}

/// Valid (unpadded) cross-correlation. `kernel` is (out, in, k, k).
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: usize,
) -> Result<Tensor, LearnError> {
    let [o, kh, kw, oh, ow, c] = conv_dims(input, kernel, bias.len(), stride)?;
    let cols = im2col(input, kh, kw, stride, oh, ow);
    // row-major (out, k) kernel data is the column-major (k, out) matrix
    let weights = DMatrix::from_column_slice(c * kh * kw, o, &kernel.data);
    let mut out = cols * weights;
    for (oc, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(bias[oc]);
    }
    Tensor::from_vec(&[o, oh, ow], out.as_slice().to_vec())
}

/// Gradients of a valid convolution: `(d_input, d_kernel, d_bias)`.
fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    d_out: &Tensor,
    stride: usize,
    want_input: bool,
) -> (Option<Tensor>, Tensor, Vec<f64>) {
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (o, kh, kw) = (kernel.shape[0], kernel.shape[2], kernel.shape[3]);
    let (oh, ow) = (d_out.shape[1], d_out.shape[2]);
    let k = c * kh * kw;
    let cols = im2col(input, kh, kw, stride, oh, ow);
    let g = DMatrix::from_column_slice(oh * ow, o, &d_out.data);
    let d_bias = g.column_iter().map(|col| col.sum()).collect();
    let d_kernel = Tensor {
        shape: kernel.shape.clone(),
        data: cols.tr_mul(&g).as_slice().to_vec(),
    };
    let d_input = want_input.then(|| {
        let weights = DMatrix::from_column_slice(k, o, &kernel.data);
        let d_cols = g * weights.transpose();
        let mut d_in = Tensor::zeros(&input.shape);
        for kk in 0..k {
            let (ic, r) = (kk / (kh * kw), kk % (kh * kw));
            let col = d_cols.column(kk);
            for y in 0..oh {
                let base = (ic * h + y * stride + r / kw) * w + r % kw;
                for x in 0..ow {
                    d_in.data[base + x * stride] += col[y * ow + x];
                }
            }
        }
        d_in
    });
    (d_input, d_kernel, d_bias)
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `y = W x + b` with `W` of shape (out, in).
pub fn linear_forward(weight: &Tensor, bias: &[f64], x: &[f64]) -> Result<Vec<f64>, LearnError> {
    match weight.shape[..] {
        [o, i] if i == x.len() && o == bias.len() => Ok((0..o)
            .map(|r| {
                let row = &weight.data[r * i..(r + 1) * i];
                bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()),
        _ => Err(LearnError::Shape(format!(
            "weight {:?}, bias {}, input {}",
            weight.shape,
            bias.len(),
            x.len()
        ))),
    }
}

/// Parameter tensors in storage order.
pub mod slot {
    pub const RGB_CONV1_W: usize = 0;
    pub const RGB_CONV1_B: usize = 1;
    pub const RGB_CONV2_W: usize = 2;
    pub const RGB_CONV2_B: usize = 3;
    pub const DEPTH_CONV1_W: usize = 4;
    pub const DEPTH_CONV1_B: usize = 5;
    pub const DEPTH_CONV2_W: usize = 6;
    pub const DEPTH_CONV2_B: usize = 7;
    pub const POS_W: usize = 8;
    pub const POS_B: usize = 9;
    pub const THETA_W: usize = 10;
    pub const THETA_B: usize = 11;
    pub const COUNT: usize = 12;
}

pub fn architecture() -> [Vec<usize>; slot::COUNT] {
    [
        vec![CONV1_CH, 3, KERNEL, KERNEL],
        vec![CONV1_CH],
        vec![CONV2_CH, CONV1_CH, KERNEL, KERNEL],
        vec![CONV2_CH],
        vec![CONV1_CH, 1, KERNEL, KERNEL],
        vec![CONV1_CH],
        vec![CONV2_CH, CONV1_CH, KERNEL, KERNEL],
        vec![CONV2_CH],
        vec![2, EMBED_DIM],
        vec![2],
        vec![1, EMBED_DIM],
        vec![1],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros() -> Self {
        Self {
            tensors: architecture().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// He-normal convolution weights, `1/sqrt(fan_in)` head weights,
    /// convolution biases `CONV_BIAS_INIT`, zero head biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros();
        for (i, t) in params.tensors.iter_mut().enumerate() {
            if t.shape.len() == 1 {
                if i < slot::POS_W {
                    t.data.iter_mut().for_each(|v| *v = CONV_BIAS_INIT);
                }
                continue;
            }
            let fan_in: usize = t.shape[1..].iter().product();
            let gain = if i >= slot::POS_W { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
            t.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        }
        params
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check_architecture(&self) -> Result<(), LearnError> {
        let arch = architecture();
        if self.tensors.len() != arch.len() {
            return Err(LearnError::Architecture(format!(
                "expected {} tensors, found {}",
                arch.len(),
                self.tensors.len()
            )));
        }
        for (i, (t, s)) in self.tensors.iter().zip(arch.iter()).enumerate() {
            if &t.shape != s {
                return Err(LearnError::Architecture(format!(
                    "tensor {i} has shape {:?}, expected {s:?}",
                    t.shape
                )));
            }
        }
        Ok(())
    }

    /// Header (magic, tensor count, per-tensor rank and dims as u32 LE) then
    /// every value as f64 LE in storage order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = PARAMS_MAGIC.to_vec();
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        struct Reader<'a>(&'a [u8]);
        impl Reader<'_> {
            fn take(&mut self, n: usize) -> Result<&[u8], LearnError> {
                if self.0.len() < n {
                    return Err(LearnError::Truncated);
                }
                let (head, rest) = self.0.split_at(n);
                self.0 = rest;
                Ok(head)
            }
            fn u32(&mut self) -> Result<usize, LearnError> {
                Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
            }
        }
        let mut r = Reader(bytes);
        if r.take(PARAMS_MAGIC.len()).map_err(|_| LearnError::BadMagic)? != PARAMS_MAGIC {
            return Err(LearnError::BadMagic);
        }
        let count = r.u32()?;
        if count != slot::COUNT {
            return Err(LearnError::Architecture(format!(
                "expected {} tensors, found {count}",
                slot::COUNT
            )));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = r.u32()?;
            if rank > 4 {
                return Err(LearnError::Architecture(format!("tensor rank {rank}")));
            }
            shapes.push((0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?);
        }
        let params = Self {
            tensors: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        };
        params.check_architecture()?;
        let mut params = params;
        for t in params.tensors.iter_mut() {
            for v in t.data.iter_mut() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if !r.0.is_empty() {
            return Err(LearnError::TrailingBytes(r.0.len()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += alpha * y;
            }
        }
    }
}

/// Network inputs for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub rgb: Tensor,
    pub depth: Tensor,
}

impl ModelInput {
    /// Converts 64x36 rasters: RGB to [0, 1], depth to elevation above
    /// `DEPTH_REFERENCE_MM` in units of `DEPTH_SCALE_MM`.
    pub fn from_images(rgb: &RgbImage, depth: &DepthImage) -> Result<Self, LearnError> {
        for (name, w, h) in [("rgb", rgb.width(), rgb.height()), ("depth", depth.width(), depth.height())] {
            if (w, h) != (INPUT_W, INPUT_H) {
                return Err(LearnError::Shape(format!(
                    "{name} is {w}x{h}, expected {INPUT_W}x{INPUT_H}"
                )));
            }
        }
        let n = INPUT_W * INPUT_H;
        let mut rgb_data = vec![0.0; 3 * n];
        for (i, p) in rgb.pixels().iter().enumerate() {
            for c in 0..3 {
                rgb_data[c * n + i] = p[c] as f64 / 255.0;
            }
        }
        let depth_data = depth
            .pixels()
            .iter()
            .map(|&d| (DEPTH_REFERENCE_MM - d as f64) / DEPTH_SCALE_MM)
            .collect();
        Ok(Self {
            rgb: Tensor::from_vec(&[3, INPUT_H, INPUT_W], rgb_data)?,
            depth: Tensor::from_vec(&[1, INPUT_H, INPUT_W], depth_data)?,
        })
    }
}

/// Normalized outputs: `[x / INPUT_W, y / INPUT_H, theta / (pi/2)]`.
pub type RawOutput = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Pixel in the 64x36 input frame.
    pub pixel: Point,
    pub theta: f64,
}

impl Prediction {
    pub fn from_raw(raw: &RawOutput) -> Self {
        Self {
            pixel: Point::new(raw[0] * INPUT_W as f64, raw[1] * INPUT_H as f64),
            theta: raw[2] * FRAC_PI_2,
        }
    }

    pub fn to_raw(&self) -> RawOutput {
        [
            self.pixel.x / INPUT_W as f64,
            self.pixel.y / INPUT_H as f64,
            self.theta / FRAC_PI_2,
        ]
    }
}

struct BranchCache {
    z1: Tensor,
    a1: Tensor,
    z2: Tensor,
}

pub struct ForwardCache {
    rgb: BranchCache,
    depth: BranchCache,
    embedding: Vec<f64>,
}

impl ForwardCache {
    /// Sign of every ReLU pre-activation, in a fixed order. Two parameter
    /// settings with equal patterns lie on the same linear piece of the
    /// network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        [&self.rgb, &self.depth]
            .iter()
            .flat_map(|b| b.z1.data.iter().chain(&b.z2.data))
            .map(|&z| z > 0.0)
            .collect()
    }
}

fn branch_forward(
    params: &ModelParams,
    input: &Tensor,
    first: usize,
) -> Result<BranchCache, LearnError> {
    let t = &params.tensors;
    let z1 = conv2d_forward(input, &t[first], &t[first + 1].data, STRIDE)?;
    let a1 = Tensor {
        shape: z1.shape.clone(),
        data: relu_forward(&z1.data),
    };
    let z2 = conv2d_forward(&a1, &t[first + 2], &t[first + 3].data, STRIDE)?;
    Ok(BranchCache { z1, a1, z2 })
}

fn check_input(input: &ModelInput) -> Result<(), LearnError> {
    if input.rgb.shape != [3, INPUT_H, INPUT_W] || input.depth.shape != [1, INPUT_H, INPUT_W] {
        return Err(LearnError::Shape(format!(
            "inputs {:?} and {:?}, expected [3, {INPUT_H}, {INPUT_W}] and [1, {INPUT_H}, {INPUT_W}]",
            input.rgb.shape, input.depth.shape
        )));
    }
    Ok(())
}

pub fn forward_cached(
    params: &ModelParams,
    input: &ModelInput,
) -> Result<(RawOutput, ForwardCache), LearnError> {
    check_input(input)?;
    let rgb = branch_forward(params, &input.rgb, slot::RGB_CONV1_W)?;
    let depth = branch_forward(params, &input.depth, slot::DEPTH_CONV1_W)?;
    // embeddings are summed after the second activation
    let embedding: Vec<f64> = rgb
        .z2
        .data
        .iter()
        .zip(&depth.z2.data)
        .map(|(a, b)| a.max(0.0) + b.max(0.0))
        .collect();
    let t = &params.tensors;
    let pos = linear_forward(&t[slot::POS_W], &t[slot::POS_B].data, &embedding)?;
    let theta = linear_forward(&t[slot::THETA_W], &t[slot::THETA_B].data, &embedding)?;
    Ok((
        [pos[0], pos[1], theta[0]],
        ForwardCache {
            rgb,
            depth,
            embedding,
        },
    ))
}

pub fn model_forward_raw(params: &ModelParams, input: &ModelInput) -> Result<RawOutput, LearnError> {
    forward_cached(params, input).map(|(out, _)| out)
}

pub fn model_forward(params: &ModelParams, input: &ModelInput) -> Result<Prediction, LearnError> {
    model_forward_raw(params, input).map(|raw| Prediction::from_raw(&raw))
}

/// Mean absolute error over the three outputs and its subgradient
/// `sign(pred - label) / 3` (zero at equality).
pub fn l1_loss(pred: &RawOutput, label: &RawOutput) -> (f64, RawOutput) {
    let mut grad = [0.0; 3];
    let mut loss = 0.0;
    for i in 0..3 {
        let d = pred[i] - label[i];
        loss += d.abs();
        grad[i] = if d > 0.0 {
            1.0 / 3.0
        } else if d < 0.0 {
            -1.0 / 3.0
        } else {
            0.0
        };
    }
    (loss / 3.0, grad)
}

fn relu_mask(z: &Tensor, g: &mut [f64]) {
    for (gi, zi) in g.iter_mut().zip(&z.data) {
        if *zi <= 0.0 {
            *gi = 0.0;
        }
    }
}

fn branch_backward(
    params: &ModelParams,
    input: &Tensor,
    cache: &BranchCache,
    d_embedding: &[f64],
    first: usize,
    grads: &mut ModelParams,
) {
    let t = &params.tensors;
    let mut d_z2 = Tensor {
        shape: cache.z2.shape.clone(),
        data: d_embedding.to_vec(),
    };
    relu_mask(&cache.z2, &mut d_z2.data);
    let (d_a1, d_w2, d_b2) = conv2d_backward(&cache.a1, &t[first + 2], &d_z2, STRIDE, true);
    let mut d_z1 = d_a1.expect("requested");
    relu_mask(&cache.z1, &mut d_z1.data);
    let (_, d_w1, d_b1) = conv2d_backward(input, &t[first], &d_z1, STRIDE, false);
    let g = &mut grads.tensors;
    for (dst, src) in [
        (first, &d_w1.data),
        (first + 1, &d_b1),
        (first + 2, &d_w2.data),
        (first + 3, &d_b2),
    ] {
        g[dst].data.iter_mut().zip(src).for_each(|(a, b)| *a += b);
    }
}

/// Accumulates into `grads` the parameter gradient of `d_out . output`.
pub fn backward(
    params: &ModelParams,
    input: &ModelInput,
    cache: &ForwardCache,
    d_out: &RawOutput,
    grads: &mut ModelParams,
) {
    let t = &params.tensors;
    let emb = &cache.embedding;
    let mut d_emb = vec![0.0; EMBED_DIM];
    let heads = [
        (slot::POS_W, slot::POS_B, &d_out[0..2]),
        (slot::THETA_W, slot::THETA_B, &d_out[2..3]),
    ];
    for (w_slot, b_slot, g) in heads {
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            grads.tensors[b_slot].data[r] += gr;
            let w_row = &t[w_slot].data[r * EMBED_DIM..(r + 1) * EMBED_DIM];
            let dw_row = &mut grads.tensors[w_slot].data[r * EMBED_DIM..(r + 1) * EMBED_DIM];
            for k in 0..EMBED_DIM {
                dw_row[k] += gr * emb[k];
                d_emb[k] += gr * w_row[k];
            }
        }
    }
    branch_backward(params, &input.rgb, &cache.rgb, &d_emb, slot::RGB_CONV1_W, grads);
    branch_backward(params, &input.depth, &cache.depth, &d_emb, slot::DEPTH_CONV1_W, grads);
}

/// A training example: network input plus normalized label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub label: RawOutput,
}

/// Mean L1 loss over `batch` and its gradient with respect to every parameter.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[&Example],
) -> Result<(f64, ModelParams), LearnError> {
    let mut grads = ModelParams::zeros();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let (out, cache) = forward_cached(params, &ex.input)?;
        let (l, g) = l1_loss(&out, &ex.label);
        loss += l * scale;
        let g = g.map(|v| v * scale);
        backward(params, &ex.input, &cache, &g, &mut grads);
    }
    Ok((loss, grads))
}

pub fn mean_loss(params: &ModelParams, data: &[Example]) -> Result<f64, LearnError> {
    let mut total = 0.0;
    for ex in data {
        total += l1_loss(&model_forward_raw(params, &ex.input)?, &ex.label).0;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from `lr` at the first epoch to zero after the last.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            batch_size: 4,
            seed: 0,
            schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    /// Step size used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let progress = (epoch - 1) as f64 / self.epochs.max(1) as f64;
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of minibatch losses seen during the epoch (initial loss for epoch 0).
    pub running_loss: f64,
    /// Mean loss over the whole dataset after the epoch.
    pub loss: f64,
}

/// Plain minibatch SGD. Epoch 0 in the log is the initialization.
pub fn train(
    data: &[Example],
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>), LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let batch_size = config.batch_size.max(1);
    let mut params = ModelParams::init(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let initial = mean_loss(&params, data)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        running_loss: initial,
        loss: initial,
    }];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let lr = config.lr_at(epoch);
        let mut running = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = batch_gradients(&params, &batch)?;
            params.axpy(-lr, &grads);
            running += loss;
            batches += 1;
        }
        log.push(EpochLog {
            epoch,
            running_loss: running / batches as f64,
            loss: mean_loss(&params, data)?,
        });
    }
    Ok((params, log))
}

/// Network-resolution scene with its grasp label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    /// Target pixel in the 64x36 frame.
    pub pixel: Point,
    pub theta: f64,
}

/// Maps a pixel of the full frame into the 64x36 network frame after the
/// center-quarter crop and bilinear resize.
pub fn full_to_input_pixel(p: Point, width: usize, height: usize) -> Point {
    let (x0, y0, w, h) = center_quarter_rect(width, height);
    Point::new(
        (p.x - x0 as f64 + 0.5) * INPUT_W as f64 / w as f64 - 0.5,
        (p.y - y0 as f64 + 0.5) * INPUT_H as f64 / h as f64 - 0.5,
    )
}

/// Inverse of [`full_to_input_pixel`].
pub fn input_to_full_pixel(p: Point, width: usize, height: usize) -> Point {
    let (x0, y0, w, h) = center_quarter_rect(width, height);
    Point::new(
        (p.x + 0.5) * w as f64 / INPUT_W as f64 - 0.5 + x0 as f64,
        (p.y + 0.5) * h as f64 / INPUT_H as f64 - 0.5 + y0 as f64,
    )
}

fn is_input_size(w: usize, h: usize) -> bool {
    (w, h) == (INPUT_W, INPUT_H)
}

/// Crops the center quarter and resizes to the network resolution. Rasters
/// already at 64x36 pass through unchanged.
pub fn downsample(rgb: &RgbImage, depth: &DepthImage) -> Result<(RgbImage, DepthImage), LearnError> {
    if (rgb.width(), rgb.height()) != (depth.width(), depth.height()) {
        return Err(LearnError::Shape("rgb and depth sizes differ".into()));
    }
    if is_input_size(rgb.width(), rgb.height()) {
        return Ok((rgb.clone(), depth.clone()));
    }
    Ok((
        resize_bilinear(&crop_center_quarter(rgb)?, INPUT_W, INPUT_H),
        resize_bilinear(&crop_center_quarter(depth)?, INPUT_W, INPUT_H),
    ))
}

pub fn preprocess(rgb: &RgbImage, depth: &DepthImage) -> Result<ModelInput, LearnError> {
    let (rgb, depth) = downsample(rgb, depth)?;
    ModelInput::from_images(&rgb, &depth)
}

impl LabeledScene {
    pub fn new(rgb: RgbImage, depth: DepthImage, pixel: Point, theta: f64) -> Result<Self, LearnError> {
        for (w, h) in [(rgb.width(), rgb.height()), (depth.width(), depth.height())] {
            if !is_input_size(w, h) {
                return Err(LearnError::Shape(format!(
                    "scene raster is {w}x{h}, expected {INPUT_W}x{INPUT_H}"
                )));
            }
        }
        Ok(Self { rgb, depth, pixel, theta })
    }

    /// Builds a scene from full-frame rasters and a full-frame label.
    pub fn from_full_frame(
        rgb: &RgbImage,
        depth: &DepthImage,
        pixel: Point,
        theta: f64,
    ) -> Result<Self, LearnError> {
        let (w, h) = (rgb.width(), rgb.height());
        let (small_rgb, small_depth) = downsample(rgb, depth)?;
        let pixel = if is_input_size(w, h) {
            pixel
        } else {
            full_to_input_pixel(pixel, w, h)
        };
        Self::new(small_rgb, small_depth, pixel, theta)
    }

    pub fn to_example(&self) -> Result<Example, LearnError> {
        Ok(Example {
            input: ModelInput::from_images(&self.rgb, &self.depth)?,
            label: Prediction {
                pixel: self.pixel,
                theta: self.theta,
            }
            .to_raw(),
        })
    }
}

/// Reads `labels.csv` (`id,px,py,theta`) and the matching
/// `scene_####.ppm` / `scene_####.pgm` pairs. Full-frame scenes and labels
/// are mapped to the network frame.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<LabeledScene>, LearnError> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join("labels.csv"))?;
    let mut scenes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("id")) {
            continue;
        }
        let bad = || LearnError::Dataset(format!("labels.csv line {}: {line:?}", i + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let id: usize = fields[0].parse().map_err(|_| bad())?;
        let nums = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        let rgb = load_ppm(dir.join(format!("scene_{id:04}.ppm")))?;
        let depth = load_pgm(dir.join(format!("scene_{id:04}.pgm")))?;
        scenes.push(LabeledScene::from_full_frame(
            &rgb,
            &depth,
            Point::new(nums[0], nums[1]),
            nums[2],
        )?);
    }
    Ok(scenes)
}

/// Runs the model on full-frame rasters; returns the proposal and the
/// predicted pixel in the full frame.
pub fn learned_pipeline(
    params: &ModelParams,
    rgb: &RgbImage,
    depth: &DepthImage,
    calibration: &CameraCalibration,
    timestamp: f64,
) -> Result<(GraspProposal, Point), LearnError> {
    let pred = model_forward(params, &preprocess(rgb, depth)?)?;
    let full = if is_input_size(rgb.width(), rgb.height()) {
        pred.pixel
    } else {
        input_to_full_pixel(pred.pixel, rgb.width(), rgb.height())
    };
    let [x, y] = calibration.to_workspace(full);
    Ok((
        GraspProposal::new(x, y, wrap_grasp_angle(pred.theta), timestamp),
        full,
    ))
}
