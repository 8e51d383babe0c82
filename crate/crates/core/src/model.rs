//! Per-superpixel saliency scorer.
//!
//! Depth branch: three 3×3 convolutions (stride 1, zero padding 1, ReLU) over
//! the `C × 20 × 20` stack, then a linear map to a `1 × 20 × 20` response.
//! Fusion: a ReLU hidden layer and a single logistic output unit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lowfeat::{FeatureStack, CELLS, GRID};
use crate::math;

/// Predictions are clamped to `[P_MIN, 1 - P_MIN]` before taking logs.
pub const P_MIN: f64 = 1e-7;

/// Input channel counts the scorer accepts: low-level only (4), with BED
/// (10), and each of those with the seven color layers (11, 17).
pub const SUPPORTED_CHANNELS: [usize; 4] = [4, 10, 11, 17];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub conv_widths: [usize; 3],
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            in_channels: 10,
            conv_widths: [16, 16, 8],
            hidden: 100,
        }
    }
}

impl Architecture {
    pub fn with_channels(in_channels: usize) -> Self {
        Architecture {
            in_channels,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_CHANNELS.contains(&self.in_channels) {
            return Err(Error::BadChannelCount(self.in_channels));
        }
        if self.conv_widths.contains(&0) || self.hidden == 0 {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Learning-rate group of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Convolutions and the linear reduction, trained from scratch.
    Depth,
    /// The fully connected head.
    Fusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub group: ParamGroup,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out, in, 3, 3]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv {
    fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Conv {
            in_ch,
            out_ch,
            weight: vec![0.0; out_ch * in_ch * 9],
            bias: vec![0.0; out_ch],
        }
    }

    fn forward(&self, input: &[f64], out: &mut [f64]) {
        let padded = pad_planes(input, self.in_ch);
        let mut acc = [0.0; WIDE];
        for o in 0..self.out_ch {
            acc.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let plane = &padded[i * PADDED..(i + 1) * PADDED];
                let w = &self.weight[(o * self.in_ch + i) * 9..][..9];
                for (k, &wk) in w.iter().enumerate() {
                    axpy(&mut acc, wk, &plane[tap(k)..][..WIDE]);
                }
            }
            crop(&acc, &mut out[o * CELLS..(o + 1) * CELLS]);
        }
    }

    /// Accumulates parameter gradients and, when `d_input` is given, the
    /// gradient with respect to the input.
    fn backward(
        &self,
        input: &[f64],
        d_out: &[f64],
        grad: &mut Conv,
        d_input: Option<&mut [f64]>,
    ) {
        let padded = pad_planes(input, self.in_ch);
        let mut d_padded = if d_input.is_some() {
            vec![0.0; self.in_ch * PADDED]
        } else {
            Vec::new()
        };
        let mut dz = [0.0; WIDE];
        for o in 0..self.out_ch {
            let d_o = &d_out[o * CELLS..(o + 1) * CELLS];
            grad.bias[o] += d_o.iter().sum::<f64>();
            for y in 0..GRID {
                dz[y * PAD_W..y * PAD_W + GRID].copy_from_slice(&d_o[y * GRID..(y + 1) * GRID]);
            }
            for i in 0..self.in_ch {
                let plane = &padded[i * PADDED..(i + 1) * PADDED];
                let base = (o * self.in_ch + i) * 9;
                for k in 0..9 {
                    grad.weight[base + k] += dot(&dz, &plane[tap(k)..][..WIDE]);
                }
                if d_input.is_some() {
                    let d_plane = &mut d_padded[i * PADDED..(i + 1) * PADDED];
                    for k in 0..9 {
                        axpy(&mut d_plane[tap(k)..][..WIDE], self.weight[base + k], &dz);
                    }
                }
            }
        }
        if let Some(d) = d_input {
            for i in 0..self.in_ch {
                let plane = &d_padded[i * PADDED..(i + 1) * PADDED];
                crop(&plane[PAD_W + 1..][..WIDE], &mut d[i * CELLS..(i + 1) * CELLS]);
            }
        }
    }
}

/// Row stride of a zero-padded plane.
const PAD_W: usize = GRID + 2;
/// A padded plane plus slack so every tap window stays in bounds.
const PADDED: usize = PAD_W * PAD_W + 2;
/// Output laid out with the padded row stride; the last two columns of each
/// row are scratch.
const WIDE: usize = GRID * PAD_W;

/// Offset of kernel tap `k` (row-major 3×3) in a padded plane.
#[inline]
fn tap(k: usize) -> usize {
    (k / 3) * PAD_W + k % 3
}

fn pad_planes(input: &[f64], channels: usize) -> Vec<f64> {
    let mut padded = vec![0.0; channels * PADDED];
    for c in 0..channels {
        for y in 0..GRID {
            let dst = c * PADDED + (y + 1) * PAD_W + 1;
            padded[dst..dst + GRID].copy_from_slice(&input[c * CELLS + y * GRID..][..GRID]);
        }
    }
    padded
}

fn crop(wide: &[f64], out: &mut [f64]) {
    for y in 0..GRID {
        out[y * GRID..(y + 1) * GRID].copy_from_slice(&wide[y * PAD_W..y * PAD_W + GRID]);
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Dot product with four interleaved partial sums (fixed order).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// `n` samples laid out back to back in `input` and `out`. Each weight
    /// row is read once per batch.
    fn forward(&self, n: usize, input: &[f64], out: &mut [f64]) {
        for j in 0..self.outputs {
            let row = &self.weight[j * self.inputs..(j + 1) * self.inputs];
            for s in 0..n {
                let x = &input[s * self.inputs..(s + 1) * self.inputs];
                out[s * self.outputs + j] = self.bias[j] + dot(row, x);
            }
        }
    }

    fn backward(&self, n: usize, input: &[f64], d_out: &[f64], grad: &mut Dense, mut d_input: Option<&mut [f64]>) {
        if let Some(d) = d_input.as_deref_mut() {
            d.fill(0.0);
        }
        for j in 0..self.outputs {
            let row = &self.weight[j * self.inputs..(j + 1) * self.inputs];
            let g = &mut grad.weight[j * self.inputs..(j + 1) * self.inputs];
            for s in 0..n {
                let dy = d_out[s * self.outputs + j];
                grad.bias[j] += dy;
                if dy == 0.0 {
                    continue;
                }
                let x = &input[s * self.inputs..(s + 1) * self.inputs];
                axpy(g, dy, x);
                if let Some(d) = d_input.as_deref_mut() {
                    let d = &mut d[s * self.inputs..(s + 1) * self.inputs];
                    axpy(d, dy, row);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    pub convs: [Conv; 3],
    pub reduce: Dense,
    pub hidden: Dense,
    pub output: Dense,
}

/// Intermediate values of a batch kept for backpropagation, each stored
/// sample-major.
struct Trace {
    /// Post-ReLU activations of the three convolutions.
    conv_act: [Vec<f64>; 3],
    reduced: Vec<f64>,
    hidden_act: Vec<f64>,
    p: Vec<f64>,
}

#[inline]
fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Numerically stable `1 / (1 + e^-x)`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// Binary cross-entropy `-(t ln p + (1 - t) ln(1 - p))` with `p` clamped.
pub fn loss(p: f64, target: f64) -> f64 {
    let p = p.clamp(P_MIN, 1.0 - P_MIN);
    -(target * math::ln(p) + (1.0 - target) * math::ln(1.0 - p))
}

impl Network {
    /// All-zero network of the given shape.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let [w1, w2, w3] = arch.conv_widths;
        Ok(Network {
            convs: [
                Conv::zeros(arch.in_channels, w1),
                Conv::zeros(w1, w2),
                Conv::zeros(w2, w3),
            ],
            reduce: Dense::zeros(w3 * CELLS, CELLS),
            hidden: Dense::zeros(CELLS, arch.hidden),
            output: Dense::zeros(arch.hidden, 1),
            arch,
        })
    }

    /// Xavier-uniform weights and zero biases from a seeded ChaCha8 stream.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            for v in w {
                *v = rng.gen_range(-limit..limit);
            }
        };
        for conv in &mut net.convs {
            fill(&mut conv.weight, conv.in_ch * 9, conv.out_ch * 9);
        }
        for dense in [&mut net.reduce, &mut net.hidden, &mut net.output] {
            fill(&mut dense.weight, dense.inputs, dense.outputs);
        }
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch).expect("architecture was validated")
    }

    /// Name, group and shape of every tensor, in [`Network::tensors`] order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            specs.push(ParamSpec {
                name: format!("conv{}.weight", i + 1),
                group: ParamGroup::Depth,
                dims: vec![c.out_ch, c.in_ch, 3, 3],
            });
            specs.push(ParamSpec {
                name: format!("conv{}.bias", i + 1),
                group: ParamGroup::Depth,
                dims: vec![c.out_ch],
            });
        }
        for (name, group, d) in [
            ("reduce", ParamGroup::Depth, &self.reduce),
            ("fc1", ParamGroup::Fusion, &self.hidden),
            ("fc2", ParamGroup::Fusion, &self.output),
        ] {
            specs.push(ParamSpec {
                name: format!("{name}.weight"),
                group,
                dims: vec![d.outputs, d.inputs],
            });
            specs.push(ParamSpec {
                name: format!("{name}.bias"),
                group,
                dims: vec![d.outputs],
            });
        }
        specs
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(12);
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for d in [&self.reduce, &self.hidden, &self.output] {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for d in [&mut self.reduce, &mut self.hidden, &mut self.output] {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    /// Rebuilds a network from tensors in [`Network::tensors`] order.
    pub fn from_tensors(arch: Architecture, tensors: &[Vec<f64>]) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut slots = net.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.iter_mut().zip(tensors) {
            if slot.len() != t.len() {
                return Err(Error::LengthMismatch {
                    expected: slot.len(),
                    found: t.len(),
                });
            }
            slot.copy_from_slice(t);
        }
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Network, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * scale;
            }
        }
    }

    fn check_input(&self, stack: &FeatureStack) -> Result<()> {
        if stack.channels() != self.arch.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "network takes {} channels, stack has {}",
                self.arch.in_channels,
                stack.channels()
            )));
        }
        Ok(())
    }

    fn trace(&self, stacks: &[&FeatureStack]) -> Trace {
        let n = stacks.len();
        let mut conv_act: [Vec<f64>; 3] = Default::default();
        for (i, conv) in self.convs.iter().enumerate() {
            conv_act[i] = vec![0.0; n * conv.out_ch * CELLS];
        }
        for (s, stack) in stacks.iter().enumerate() {
            for (i, conv) in self.convs.iter().enumerate() {
                let size = conv.out_ch * CELLS;
                let (done, rest) = conv_act.split_at_mut(i);
                let input: &[f64] = if i == 0 {
                    stack.data()
                } else {
                    let prev = self.convs[i - 1].out_ch * CELLS;
                    &done[i - 1][s * prev..(s + 1) * prev]
                };
                let out = &mut rest[0][s * size..(s + 1) * size];
                conv.forward(input, out);
                relu_in_place(out);
            }
        }
        let mut reduced = vec![0.0; n * CELLS];
        self.reduce.forward(n, &conv_act[2], &mut reduced);
        let mut hidden_act = vec![0.0; n * self.hidden.outputs];
        self.hidden.forward(n, &reduced, &mut hidden_act);
        relu_in_place(&mut hidden_act);
        let mut logit = vec![0.0; n];
        self.output.forward(n, &hidden_act, &mut logit);
        Trace {
            conv_act,
            reduced,
            hidden_act,
            p: logit.into_iter().map(logistic).collect(),
        }
    }

    /// Saliency probability for one focused superpixel.
    pub fn forward(&self, stack: &FeatureStack) -> Result<f64> {
        Ok(self.forward_batch(&[stack])?[0])
    }

    /// Smallest |pre-activation| over every ReLU unit for `stack`. The loss
    /// is not differentiable where this is zero.
    pub fn relu_margin(&self, stack: &FeatureStack) -> Result<f64> {
        self.check_input(stack)?;
        let mut margin = f64::INFINITY;
        let mut track = |v: &mut [f64]| {
            for x in v.iter() {
                margin = margin.min(x.abs());
            }
            relu_in_place(v);
        };
        let mut input = stack.data().to_vec();
        for conv in &self.convs {
            let mut out = vec![0.0; conv.out_ch * CELLS];
            conv.forward(&input, &mut out);
            track(&mut out);
            input = out;
        }
        let mut reduced = vec![0.0; CELLS];
        self.reduce.forward(1, &input, &mut reduced);
        let mut hidden = vec![0.0; self.hidden.outputs];
        self.hidden.forward(1, &reduced, &mut hidden);
        track(&mut hidden);
        Ok(margin)
    }

    /// [`Network::forward`] for several stacks at once.
    pub fn forward_batch(&self, stacks: &[&FeatureStack]) -> Result<Vec<f64>> {
        for s in stacks {
            self.check_input(s)?;
        }
        Ok(self.trace(stacks).p)
    }

    /// Adds the gradient of `loss(forward(stack), target)` to `grads` and
    /// returns `(p, loss)`.
    pub fn backward(&self, stack: &FeatureStack, target: f64, grads: &mut Network) -> Result<(f64, f64)> {
        Ok(self.backward_batch(&[stack], &[target], grads)?[0])
    }

    /// Adds the summed gradient over a batch to `grads` and returns
    /// `(p, loss)` per sample.
    pub fn backward_batch(
        &self,
        stacks: &[&FeatureStack],
        targets: &[f64],
        grads: &mut Network,
    ) -> Result<Vec<(f64, f64)>> {
        if stacks.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: stacks.len(),
                found: targets.len(),
            });
        }
        for s in stacks {
            self.check_input(s)?;
        }
        let n = stacks.len();
        let tr = self.trace(stacks);
        // d loss / d logit for logistic output with cross-entropy.
        let d_logit: Vec<f64> = tr.p.iter().zip(targets).map(|(p, t)| p - t).collect();

        let mut d_hidden = vec![0.0; n * self.hidden.outputs];
        self.output
            .backward(n, &tr.hidden_act, &d_logit, &mut grads.output, Some(&mut d_hidden));
        mask_relu(&mut d_hidden, &tr.hidden_act);
        let mut d_reduced = vec![0.0; n * CELLS];
        self.hidden
            .backward(n, &tr.reduced, &d_hidden, &mut grads.hidden, Some(&mut d_reduced));
        let mut d_act = vec![0.0; n * self.convs[2].out_ch * CELLS];
        self.reduce
            .backward(n, &tr.conv_act[2], &d_reduced, &mut grads.reduce, Some(&mut d_act));

        for i in (0..3).rev() {
            mask_relu(&mut d_act, &tr.conv_act[i]);
            let conv = &self.convs[i];
            let out_size = conv.out_ch * CELLS;
            let in_size = conv.in_ch * CELLS;
            let mut d_in = if i == 0 { Vec::new() } else { vec![0.0; n * in_size] };
            for s in 0..n {
                let input: &[f64] = if i == 0 {
                    stacks[s].data()
                } else {
                    &tr.conv_act[i - 1][s * in_size..(s + 1) * in_size]
                };
                let d_out = &d_act[s * out_size..(s + 1) * out_size];
                let d_input = (i > 0).then(|| &mut d_in[s * in_size..(s + 1) * in_size]);
                conv.backward(input, d_out, &mut grads.convs[i], d_input);
            }
            d_act = d_in;
        }
        Ok(tr
            .p
            .iter()
            .zip(targets)
            .map(|(&p, &t)| (p, loss(p, t)))
            .collect())
    }
}

fn mask_relu(d: &mut [f64], act: &[f64]) {
    for (d, a) in d.iter_mut().zip(act) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
}
