//! A small tanh MLP velocity field trained with the conditional
//! flow-matching regression loss, with hand-written backpropagation.
//!
//! Input is the flattened sample with the scalar time appended, output has
//! the sample dimension. Parameters are kept on the `f32` grid (rounded at
//! init and after each optimizer step) so checkpoints are lossless; the
//! arithmetic itself runs in `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{conditional_path, VelocityField};
use crate::io::ByteReader;
use crate::tensor::{ImageTensor, SeededRng, Shape};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RFNN";

/// Loss above which training is considered diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.fan_out {
            let row = &self.weights[o * self.fan_in..(o + 1) * self.fan_in];
            let dot: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum();
            out.push(dot + self.bias[o]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpVelocityNet {
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

impl MlpVelocityNet {
    /// `widths = [d + 1, hidden..., d]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        let layers = widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(widths: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for layer in &mut net.layers {
            let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = round_f32(bound * (2.0 * rng.uniform() - 1.0));
            }
        }
        Ok(net)
    }

    /// Builds a net from explicit layers; widths are read off the layers.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let mut widths = vec![layers.first().map_or(0, |l| l.fan_in)];
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in != widths[i] {
                return Err(Error::DimMismatch {
                    expected: widths[i],
                    found: l.fan_in,
                });
            }
            if l.weights.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(Error::InvalidArgument(format!("layer {i} has inconsistent sizes")));
            }
            widths.push(l.fan_out);
        }
        validate_widths(&widths)?;
        Ok(Self { widths, layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Sample dimension `d`.
    pub fn dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn input(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut a = Vec::with_capacity(x.len() + 1);
        a.extend_from_slice(x);
        a.push(t);
        Ok(a)
    }

    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut a = self.input(x, t)?;
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut a, &mut z);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "network output".into(),
            });
        }
        Ok(a)
    }

    /// Activations of every layer, input first, output last.
    fn forward_trace(&self, x: &[f64], t: f64) -> Result<Vec<Vec<f64>>> {
        let mut acts = vec![self.input(x, t)?];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(acts.last().expect("non-empty"), &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Mean of `0.5 * |v(x_t, t) - target|^2` over a fixed batch, with exact
    /// parameter gradients.
    pub fn loss_and_grad(&self, batch: &[CfmExample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        let last = self.layers.len() - 1;
        for ex in batch {
            let acts = self.forward_trace(&ex.x_t, ex.t)?;
            let out = acts.last().expect("output");
            if ex.target.len() != out.len() {
                return Err(Error::DimMismatch {
                    expected: out.len(),
                    found: ex.target.len(),
                });
            }
            // dL/d(output) for this example, already scaled by 1/B
            let mut delta: Vec<f64> = out
                .iter()
                .zip(&ex.target)
                .map(|(o, y)| {
                    loss += 0.5 * (o - y).powi(2);
                    scale * (o - y)
                })
                .collect();
            for l in (0..=last).rev() {
                let layer = &self.layers[l];
                if l < last {
                    // through tanh: a = tanh(z), da/dz = 1 - a^2
                    for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                        *d *= 1.0 - a * a;
                    }
                }
                let input = &acts[l];
                let g = &mut grads.layers[l];
                for o in 0..layer.fan_out {
                    let d = delta[o];
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if l > 0 {
                    let mut next = vec![0.0; layer.fan_in];
                    for o in 0..layer.fan_out {
                        let d = delta[o];
                        let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += d * w;
                        }
                    }
                    delta = next;
                }
            }
        }
        Ok((loss * scale, grads))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// Loads a checkpoint and checks it has exactly `widths`.
    pub fn load_with_widths(path: impl AsRef<Path>, widths: &[usize]) -> Result<Self> {
        let net = Self::load(path)?;
        if net.widths != widths {
            return Err(Error::Decode(format!(
                "checkpoint widths {:?} do not match expected {:?}",
                net.widths, widths
            )));
        }
        Ok(net)
    }

    /// `RFNN`, `u32` layer count `L`, `L + 1` `u32` widths, then per layer the
    /// row-major `f32` weight matrix followed by the `f32` bias.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for &w in &self.widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for &v in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4).map_err(|_| Error::Decode("missing magic".into()))? != CHECKPOINT_MAGIC {
            return Err(Error::Decode("bad magic, expected RFNN".into()));
        }
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(Error::Decode(format!("implausible layer count {n_layers}")));
        }
        let widths = (0..=n_layers)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        validate_widths(&widths).map_err(|e| Error::Decode(e.to_string()))?;
        let mut layers = Vec::with_capacity(n_layers);
        for w in widths.windows(2) {
            let n = w[0]
                .checked_mul(w[1])
                .ok_or_else(|| Error::Decode("layer size overflows".into()))?;
            let weights = r.f32s(n)?.into_iter().map(f64::from).collect();
            let bias = r.f32s(w[1])?.into_iter().map(f64::from).collect();
            layers.push(Layer {
                fan_in: w[0],
                fan_out: w[1],
                weights,
                bias,
            });
        }
        r.finish()?;
        let net = Self { widths, layers };
        if !net.params_finite() {
            return Err(Error::Decode("non-finite parameter".into()));
        }
        Ok(net)
    }

    fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidArgument("layer widths must be positive".into()));
    }
    let (d_in, d_out) = (widths[0], widths[widths.len() - 1]);
    if d_in != d_out + 1 {
        return Err(Error::InvalidArgument(format!(
            "input width {d_in} must be output width {d_out} plus one time input"
        )));
    }
    Ok(())
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl VelocityField for MlpVelocityNet {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        let v = self.forward(&x.to_f64(), t)?;
        ImageTensor::from_f64(x.shape(), &v)
    }
}

/// Gradient buffers shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpVelocityNet) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.fan_in, l.fan_out)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

/// One regression example: `x_t` on the conditional path at time `t`, with
/// target velocity `x1 - x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmExample {
    pub x_t: Vec<f64>,
    pub t: f64,
    pub target: Vec<f64>,
}

/// Source of training endpoints `x1`.
pub trait TargetSampler {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut SeededRng) -> Vec<f64>;
}

impl TargetSampler for crate::analytic::GmmPrior {
    fn dim(&self) -> usize {
        crate::analytic::GmmPrior::dim(self)
    }

    fn draw(&self, rng: &mut SeededRng) -> Vec<f64> {
        self.sample_labeled(rng).1
    }
}

/// Degenerate target: every draw is the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass(pub Vec<f64>);

impl TargetSampler for PointMass {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn draw(&self, _rng: &mut SeededRng) -> Vec<f64> {
        self.0.clone()
    }
}

/// Draws `t ~ U[0, 1)`, `x0 ~ N(0, I)`, `x1 ~ target` per element.
pub fn draw_cfm_batch(
    target: &impl TargetSampler,
    batch: usize,
    rng: &mut SeededRng,
) -> Result<Vec<CfmExample>> {
    let shape = Shape::vector(target.dim())?;
    (0..batch)
        .map(|_| {
            let t = rng.uniform();
            let x0 = rng.randn(shape)?;
            let x1 = target.draw(rng);
            let x1_tensor = ImageTensor::from_f64(shape, &x1)?;
            let x_t = conditional_path(&x0, &x1_tensor, t)?;
            let target = x1.iter().zip(x0.data()).map(|(a, &b)| a - b as f64).collect();
            Ok(CfmExample {
                x_t: x_t.to_f64(),
                t,
                target,
            })
        })
        .collect()
}

/// Monte-Carlo CFM loss on a freshly drawn batch, with its gradients.
pub fn cfm_loss_batch(
    net: &MlpVelocityNet,
    target: &impl TargetSampler,
    batch: usize,
    rng: &mut SeededRng,
) -> Result<(f64, Gradients)> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let examples = draw_cfm_batch(target, batch, rng)?;
    let (loss, grads) = net.loss_and_grad(&examples)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: format!("CFM loss (batch seed {})", rng.seed()),
        });
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            steps: 5000,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: MlpVelocityNet,
    /// Batch loss at every step.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// Mean of the last `window` batch losses.
    pub fn smoothed_final_loss(&self, window: usize) -> f64 {
        let n = window.clamp(1, self.losses.len().max(1));
        let tail = &self.losses[self.losses.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// SGD with heavy-ball momentum on the CFM loss.
///
/// Each step draws its batch from a fresh generator seeded off the master
/// stream; that seed is reported if the loss blows up.
pub fn train(
    mut net: MlpVelocityNet,
    target: &impl TargetSampler,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if target.dim() != net.dim() {
        return Err(Error::DimMismatch {
            expected: net.dim(),
            found: target.dim(),
        });
    }
    let mut master = SeededRng::new(cfg.seed);
    let mut velocity = Gradients::zeros_like(&net);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch_seed = master.next_u64();
        let mut rng = SeededRng::new(batch_seed);
        let (loss, grads) = match cfm_loss_batch(&net, target, cfg.batch_size, &mut rng) {
            Ok(r) => r,
            Err(e) if e.is_numerical() => {
                return Err(Error::Divergence {
                    step,
                    loss: f64::NAN,
                    batch_seed,
                })
            }
            Err(e) => return Err(e),
        };
        if loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                step,
                loss,
                batch_seed,
            });
        }
        losses.push(loss);
        for ((layer, g), m) in net.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
            for ((p, &gi), mi) in layer
                .weights
                .iter_mut()
                .chain(layer.bias.iter_mut())
                .zip(g.weights.iter().chain(&g.bias))
                .zip(m.weights.iter_mut().chain(m.bias.iter_mut()))
            {
                *mi = cfg.momentum * *mi + gi;
                *p = round_f32(*p - cfg.learning_rate * *mi);
            }
        }
        if !net.params_finite() {
            return Err(Error::Divergence {
                step,
                loss,
                batch_seed,
            });
        }
    }
    Ok(TrainOutcome { net, losses })
}
