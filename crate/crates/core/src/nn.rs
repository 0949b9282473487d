//! Minimal dense-network engine: batched forward/backward, SiLU / Softplus
//! activations, Smooth-L1 loss, and AdamW with decoupled weight decay.
//!
//! Weights are stored transposed (`w_t[k][o]`, input-major) so the inner
//! loops run over contiguous output lanes and autovectorize. Everything is
//! f64; the sizes in this repo are small enough that double precision costs
//! nothing and keeps gradient-check tolerances tight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    Softplus,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Softplus => softplus(x),
            Activation::Linear => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Softplus => sigmoid(x),
            Activation::Linear => 1.0,
        }
    }

    /// In-place activation over a slice; the match sits outside the loop so
    /// each arm vectorizes.
    fn apply_slice(self, s: &mut [f64]) {
        match self {
            Activation::Silu => {
                for v in s.iter_mut() {
                    *v *= sigmoid(*v);
                }
            }
            Activation::Softplus => {
                for v in s.iter_mut() {
                    *v = softplus(*v);
                }
            }
            Activation::Linear => {}
        }
    }

    /// delta[i] *= act'(pre[i]), fused over the slice.
    fn mul_derivative_slice(self, pre: &[f64], delta: &mut [f64]) {
        match self {
            Activation::Silu => {
                for (d, p) in delta.iter_mut().zip(pre.iter()) {
                    let s = sigmoid(*p);
                    *d *= s * (1.0 + *p * (1.0 - s));
                }
            }
            Activation::Softplus => {
                for (d, p) in delta.iter_mut().zip(pre.iter()) {
                    *d *= sigmoid(*p);
                }
            }
            Activation::Linear => {}
        }
    }
}

/// Branchless exp with ~1e-14 relative error, written so the activation
/// loops autovectorize (libm's exp defeats vectorization and dominates the
/// forward-pass profile otherwise). Inputs are clamped to +-700, which is
/// transparent for every sigmoid/softplus use in this crate.
#[inline]
pub fn fast_exp(x: f64) -> f64 {
    const INV_LN2: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5 * 2^52: adding it forces the integer part of x/ln2 into the low
    // mantissa bits, avoiding an int cast the vectorizer refuses to touch.
    const MAGIC: f64 = 6_755_399_441_055_744.0;
    let x = x.clamp(-700.0, 700.0);
    let shifted = x * INV_LN2 + MAGIC;
    let nf = shifted - MAGIC;
    let r = (x - nf * LN2_HI) - nf * LN2_LO;
    // degree-11 Taylor on |r| <= ln2/2 (+ rounding slack)
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0
                    + r * (1.0 / 24.0
                        + r * (1.0 / 120.0
                            + r * (1.0 / 720.0
                                + r * (1.0 / 5040.0
                                    + r * (1.0 / 40320.0
                                        + r * (1.0 / 362880.0
                                            + r * (1.0 / 3628800.0
                                                + r * (1.0 / 39916800.0)))))))))));
    // 2^n assembled from the exponent field; n stays in [-1011, 1011].
    let scale_bits = (shifted.to_bits().wrapping_add(1023) & 0x7ff) << 52;
    p * f64::from_bits(scale_bits)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + fast_exp(-x))
}

/// Numerically stable ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + fast_exp(-x.abs()).ln_1p()
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Smooth-L1 (Huber with transition at |e| = 1): 0.5 e^2 inside, |e| - 0.5 outside.
#[inline]
pub fn smooth_l1(pred: f64, target: f64) -> f64 {
    let e = pred - target;
    if e.abs() <= 1.0 {
        0.5 * e * e
    } else {
        e.abs() - 0.5
    }
}

/// d smooth_l1 / d pred.
#[inline]
pub fn smooth_l1_grad(pred: f64, target: f64) -> f64 {
    (pred - target).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Transposed weights, `w_t[k * out_dim + o]` = weight from input k to output o.
    pub w_t: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
    pub activations: Vec<Activation>,
}

impl DenseNet {
    /// Build a net with Xavier-uniform weights and zero biases.
    pub fn new(dims: &[usize], activations: &[Activation], seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        assert_eq!(dims.len() - 1, activations.len());
        let mut rng = stream(seed, "nn-init", &[]);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w_t = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    w_t,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        DenseNet {
            layers,
            activations: activations.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_t.len() + l.bias.len())
            .sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w_t.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Batched inference. `input` is row-major `rows x input_dim`.
    pub fn forward_batch(&self, input: &[f64], rows: usize) -> Vec<f64> {
        self.check_input(input, rows).expect("forward_batch");
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            next.clear();
            next.resize(rows * layer.out_dim, 0.0);
            affine_rows(layer, &cur, rows, &mut next);
            act.apply_slice(&mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Single-row convenience wrapper.
    pub fn forward_one(&self, input: &[f64]) -> Vec<f64> {
        self.forward_batch(input, 1)
    }

    /// Forward pass that keeps per-layer inputs and pre-activations for backprop.
    pub fn forward_cached(&self, input: &[f64], rows: usize) -> Result<ForwardPass> {
        self.check_input(input, rows)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let mut pre = vec![0.0; rows * layer.out_dim];
            affine_rows(layer, &cur, rows, &mut pre);
            let mut post = pre.clone();
            act.apply_slice(&mut post);
            inputs.push(cur);
            pres.push(pre);
            cur = post;
        }
        Ok(ForwardPass {
            rows,
            inputs,
            pres,
            output: cur,
        })
    }

    /// Reverse-mode gradients of a scalar loss summed over the batch.
    /// `upstream` is dL/d(output), row-major `rows x output_dim`.
    pub fn backward(&self, pass: &ForwardPass, upstream: &[f64]) -> Result<Gradients> {
        if upstream.len() != pass.rows * self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: pass.rows * self.output_dim(),
                got: upstream.len(),
                context: "backward upstream gradient",
            });
        }
        let rows = pass.rows;
        let mut grads: Vec<LayerGrad> = self
            .layers
            .iter()
            .map(|l| LayerGrad {
                w_t: vec![0.0; l.w_t.len()],
                bias: vec![0.0; l.out_dim],
            })
            .collect();

        // delta starts as upstream combined with the last activation derivative.
        let mut delta = upstream.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let act = self.activations[li];
            let pre = &pass.pres[li];
            let input = &pass.inputs[li];
            act.mul_derivative_slice(pre, &mut delta);
            accumulate_layer_grads(layer, input, &delta, rows, &mut grads[li]);
            if li > 0 {
                // delta_prev[r,k] = sum_o delta[r,o] * w_t[k,o]
                let mut prev = vec![0.0; rows * layer.in_dim];
                for r in 0..rows {
                    let drow = &delta[r * layer.out_dim..(r + 1) * layer.out_dim];
                    let prow = &mut prev[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (k, pv) in prow.iter_mut().enumerate() {
                        let wrow = &layer.w_t[k * layer.out_dim..(k + 1) * layer.out_dim];
                        let mut acc = 0.0;
                        for (d, w) in drow.iter().zip(wrow.iter()) {
                            acc += d * w;
                        }
                        *pv = acc;
                    }
                }
                delta = prev;
            }
        }
        Ok(Gradients { layers: grads })
    }

    fn check_input(&self, input: &[f64], rows: usize) -> Result<()> {
        if input.len() != rows * self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: rows * self.input_dim(),
                got: input.len(),
                context: "forward input",
            });
        }
        Ok(())
    }
}

/// out[r,:] = bias + input[r,:] @ W^T, using the transposed layout.
///
/// Register-tiled kernel: 4 rows x 16 output lanes accumulate in local
/// arrays so each weight row loaded from memory feeds four rows. Remainders
/// fall back to a plain scalar loop.
fn affine_rows(layer: &Layer, input: &[f64], rows: usize, out: &mut [f64]) {
    const TILE: usize = 16;
    let (ind, outd) = (layer.in_dim, layer.out_dim);
    debug_assert_eq!(input.len(), rows * ind);
    debug_assert_eq!(out.len(), rows * outd);

    let row_blocks = rows / 4;
    let tile_blocks = outd / TILE;

    for rb in 0..row_blocks {
        let r = rb * 4;
        let i0 = &input[r * ind..(r + 1) * ind];
        let i1 = &input[(r + 1) * ind..(r + 2) * ind];
        let i2 = &input[(r + 2) * ind..(r + 3) * ind];
        let i3 = &input[(r + 3) * ind..(r + 4) * ind];
        for tb in 0..tile_blocks {
            let c = tb * TILE;
            let mut acc0 = [0.0f64; TILE];
            let mut acc1 = [0.0f64; TILE];
            let mut acc2 = [0.0f64; TILE];
            let mut acc3 = [0.0f64; TILE];
            acc0.copy_from_slice(&layer.bias[c..c + TILE]);
            acc1.copy_from_slice(&layer.bias[c..c + TILE]);
            acc2.copy_from_slice(&layer.bias[c..c + TILE]);
            acc3.copy_from_slice(&layer.bias[c..c + TILE]);
            for k in 0..ind {
                let w: &[f64; TILE] = layer.w_t[k * outd + c..k * outd + c + TILE]
                    .try_into()
                    .unwrap();
                let (a0, a1, a2, a3) = (i0[k], i1[k], i2[k], i3[k]);
                for j in 0..TILE {
                    acc0[j] += a0 * w[j];
                    acc1[j] += a1 * w[j];
                    acc2[j] += a2 * w[j];
                    acc3[j] += a3 * w[j];
                }
            }
            out[r * outd + c..r * outd + c + TILE].copy_from_slice(&acc0);
            out[(r + 1) * outd + c..(r + 1) * outd + c + TILE].copy_from_slice(&acc1);
            out[(r + 2) * outd + c..(r + 2) * outd + c + TILE].copy_from_slice(&acc2);
            out[(r + 3) * outd + c..(r + 3) * outd + c + TILE].copy_from_slice(&acc3);
        }
        // output-column remainder for these four rows
        for rr in r..r + 4 {
            scalar_row_tail(layer, input, rr, tile_blocks * TILE, out);
        }
    }
    // leftover rows
    for rr in row_blocks * 4..rows {
        scalar_row_full(layer, input, rr, out);
    }
}

fn scalar_row_full(layer: &Layer, input: &[f64], r: usize, out: &mut [f64]) {
    let (ind, outd) = (layer.in_dim, layer.out_dim);
    let irow = &input[r * ind..(r + 1) * ind];
    let orow = &mut out[r * outd..(r + 1) * outd];
    orow.copy_from_slice(&layer.bias);
    for (k, &a) in irow.iter().enumerate() {
        let wrow = &layer.w_t[k * outd..(k + 1) * outd];
        for (o, w) in orow.iter_mut().zip(wrow.iter()) {
            *o += a * w;
        }
    }
}

fn scalar_row_tail(layer: &Layer, input: &[f64], r: usize, from_col: usize, out: &mut [f64]) {
    let (ind, outd) = (layer.in_dim, layer.out_dim);
    if from_col >= outd {
        return;
    }
    let irow = &input[r * ind..(r + 1) * ind];
    let orow = &mut out[r * outd + from_col..(r + 1) * outd];
    orow.copy_from_slice(&layer.bias[from_col..]);
    for (k, &a) in irow.iter().enumerate() {
        let wrow = &layer.w_t[k * outd + from_col..(k + 1) * outd];
        for (o, w) in orow.iter_mut().zip(wrow.iter()) {
            *o += a * w;
        }
    }
}

fn accumulate_layer_grads(
    layer: &Layer,
    input: &[f64],
    delta: &[f64],
    rows: usize,
    grad: &mut LayerGrad,
) {
    let (ind, outd) = (layer.in_dim, layer.out_dim);
    for r in 0..rows {
        let irow = &input[r * ind..(r + 1) * ind];
        let drow = &delta[r * outd..(r + 1) * outd];
        for (k, &a) in irow.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let grow = &mut grad.w_t[k * outd..(k + 1) * outd];
            for (g, d) in grow.iter_mut().zip(drow.iter()) {
                *g += a * d;
            }
        }
        for (g, d) in grad.bias.iter_mut().zip(drow.iter()) {
            *g += d;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub rows: usize,
    /// inputs[i] is the input fed to layer i.
    inputs: Vec<Vec<f64>>,
    /// pres[i] is the pre-activation of layer i.
    pres: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub w_t: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    w_t: vec![0.0; l.w_t.len()],
                    bias: vec![0.0; l.out_dim],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w_t.iter_mut().zip(&b.w_t) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            for v in l.w_t.iter_mut() {
                *v *= s;
            }
            for v in l.bias.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w_t.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// AdamW with decoupled weight decay:
/// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(net: &DenseNet, lr: f64, weight_decay: f64) -> Self {
        let shapes: Vec<usize> = net
            .layers
            .iter()
            .flat_map(|l| [l.w_t.len(), l.bias.len()])
            .collect();
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient("adamw step"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut slot = 0;
        for (layer, grad) in net.layers.iter_mut().zip(&grads.layers) {
            for (params, gs) in [(&mut layer.w_t, &grad.w_t), (&mut layer.bias, &grad.bias)] {
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                slot += 1;
                for i in 0..params.len() {
                    let g = gs[i];
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= self.lr
                        * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
                }
            }
        }
        Ok(())
    }
}

/// One forward+backward over a batch, processed in fixed 256-row chunks in
/// parallel. `loss_and_upstream` maps (row offset, chunk outputs) to the
/// chunk's summed loss and dL/d(output); gradients are reduced in chunk
/// order, so results are identical for any worker count.
pub fn train_step_chunked<F>(
    net: &DenseNet,
    input: &[f64],
    rows: usize,
    loss_and_upstream: F,
) -> Result<(f64, Gradients)>
where
    F: Fn(usize, &[f64]) -> (f64, Vec<f64>) + Sync,
{
    use rayon::prelude::*;
    const CHUNK: usize = 256;
    let ind = net.input_dim();
    let nchunks = rows.div_ceil(CHUNK);
    let parts: Vec<Result<(f64, Gradients)>> = (0..nchunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * CHUNK;
            let hi = ((ci + 1) * CHUNK).min(rows);
            let pass = net.forward_cached(&input[lo * ind..hi * ind], hi - lo)?;
            let (loss, upstream) = loss_and_upstream(lo, &pass.output);
            let grads = net.backward(&pass, &upstream)?;
            Ok((loss, grads))
        })
        .collect();
    let mut total_loss = 0.0;
    let mut total = Gradients::zeros_like(net);
    for part in parts {
        let (loss, grads) = part?;
        total_loss += loss;
        total.add_assign(&grads);
    }
    Ok((total_loss, total))
}

// --- checkpoint io ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
    pub train_config: serde_json::Value,
    pub param_count: usize,
}

const CKPT_MAGIC: &[u8; 8] = b"RLCKPT01";

/// Serialize a net: magic, little-endian JSON header length, JSON header,
/// then the raw f64 parameter blob (per layer: transposed weights, bias).
/// Round-trips bitwise.
pub fn checkpoint_bytes(
    net: &DenseNet,
    seed: u64,
    train_config: &serde_json::Value,
) -> crate::error::Result<Vec<u8>> {
    let header = CheckpointHeader {
        version: 1,
        dims: net.dims(),
        activations: net.activations.clone(),
        seed,
        train_config: train_config.clone(),
        param_count: net.param_count(),
    };
    let hjson = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + hjson.len() + net.param_count() * 8);
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
    out.extend_from_slice(&hjson);
    for layer in &net.layers {
        for v in layer.w_t.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> crate::error::Result<(DenseNet, CheckpointHeader)> {
    use crate::error::Error;
    let bad = |msg: &str| Error::InvalidConfig(format!("bad checkpoint: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != CKPT_MAGIC {
        return Err(bad("magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..16 + hlen])?;
    let mut net = DenseNet::new(&header.dims, &header.activations, header.seed);
    let mut off = 16 + hlen;
    if bytes.len() != off + header.param_count * 8 {
        return Err(bad("blob length"));
    }
    for layer in net.layers.iter_mut() {
        for v in layer.w_t.iter_mut().chain(layer.bias.iter_mut()) {
            *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    }
    Ok((net, header))
}

pub fn save_checkpoint(
    net: &DenseNet,
    seed: u64,
    train_config: &serde_json::Value,
    path: &std::path::Path,
) -> crate::error::Result<()> {
    let bytes = checkpoint_bytes(net, seed, train_config)?;
    std::fs::write(path, bytes).map_err(|e| crate::error::Error::io(path, e))
}

pub fn load_checkpoint(path: &std::path::Path) -> crate::error::Result<(DenseNet, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| crate::error::Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
