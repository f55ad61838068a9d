//! Multilayer perceptron with attention fusion over modality blocks.
//!
//! Every block at least two columns wide is projected to a shared width.
//! Each projection is then scored by `uᵀ tanh(z_b) + s_b`, and the scores
//! are softmax-normalized across blocks. The attention-weighted sum of the
//! projections is concatenated with the single-column features. That
//! vector feeds a stack of `Linear → standardize (γ, β) → ReLU` layers and
//! a scalar head. All parameters live in one flat vector, so the optimizer
//! and the gradient probe see the network as `θ ↦ loss`.

use std::any::Any;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{huber_loss, HuberParams, Regressor, RegressorFactory, TrainData};
use crate::artifact::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::{Rng, RngSeed};

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub projection_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Gradient L2 norm cap per step; 0 disables clipping.
    pub clip_norm: f64,
    pub running_decay: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            projection_dim: 16,
            hidden: vec![64, 32],
            epochs: 20,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            clip_norm: 5.0,
            running_decay: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    input: usize,
    output: usize,
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
}

/// Offsets of every parameter group inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    feature_count: usize,
    spans: Vec<(String, Range<usize>)>,
    blocks: Vec<Range<usize>>,
    block_names: Vec<String>,
    scalars: Vec<usize>,
    proj: usize,
    block_w: Vec<usize>,
    block_c: Vec<usize>,
    score_u: usize,
    score_s: usize,
    layers: Vec<Layer>,
    out_w: usize,
    out_b: usize,
    len: usize,
}

impl Layout {
    fn new(
        feature_count: usize,
        spans: &[(String, Range<usize>)],
        proj: usize,
        hidden: &[usize],
    ) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::Input("mlp needs at least one block span".into()));
        }
        if proj == 0 || hidden.contains(&0) {
            return Err(Error::Input("mlp layer widths must be positive".into()));
        }
        let mut covered = vec![false; feature_count];
        let mut blocks = Vec::new();
        let mut block_names = Vec::new();
        for (name, r) in spans {
            if r.end > feature_count || r.start > r.end {
                return Err(Error::Shape(format!(
                    "block {name} span {r:?} exceeds {feature_count} features"
                )));
            }
            for c in r.clone() {
                if covered[c] {
                    return Err(Error::Shape(format!("block spans overlap at column {c}")));
                }
                covered[c] = true;
            }
            if r.len() >= 2 {
                blocks.push(r.clone());
                block_names.push(name.clone());
            }
        }
        let in_vector: Vec<bool> = {
            let mut v = vec![false; feature_count];
            for r in &blocks {
                v[r.clone()].iter_mut().for_each(|x| *x = true);
            }
            v
        };
        let scalars: Vec<usize> = (0..feature_count).filter(|&c| !in_vector[c]).collect();
        let mut len = 0usize;
        let mut take = |n: usize| {
            let at = len;
            len += n;
            at
        };
        let mut block_w = Vec::new();
        let mut block_c = Vec::new();
        for r in &blocks {
            block_w.push(take(proj * r.len()));
            block_c.push(take(proj));
        }
        let (score_u, score_s) = (take(proj), take(blocks.len()));
        let mut input = if blocks.is_empty() { 0 } else { proj } + scalars.len();
        let mut layers = Vec::new();
        for &output in hidden {
            layers.push(Layer {
                input,
                output,
                w: take(output * input),
                b: take(output),
                gamma: take(output),
                beta: take(output),
            });
            input = output;
        }
        let out_w = take(input);
        let out_b = take(1);
        Ok(Layout {
            feature_count,
            spans: spans.to_vec(),
            blocks,
            block_names,
            scalars,
            proj,
            block_w,
            block_c,
            score_u,
            score_s,
            layers,
            out_w,
            out_b,
            len,
        })
    }

    fn fused_width(&self) -> usize {
        if self.blocks.is_empty() {
            0
        } else {
            self.proj
        }
    }

    fn head_width(&self) -> usize {
        self.layers.last().map_or(self.fused_width() + self.scalars.len(), |l| l.output)
    }
}

/// How hidden-layer standardization gets its statistics.
#[derive(Clone, Copy)]
enum Norm<'a> {
    /// Mean and variance of the current batch.
    Batch,
    /// Stored running averages, `[mean, var]` per layer.
    Running(&'a [(Vec<f64>, Vec<f64>)]),
}

/// Intermediate values of one forward pass over a batch of `n` rows.
struct Cache {
    n: usize,
    z: Vec<f64>,     // n × B × P
    t: Vec<f64>,     // n × B × P
    alpha: Vec<f64>, // n × B
    inputs: Vec<Vec<f64>>, // per layer input, n × in; last entry feeds the head
    xhat: Vec<Vec<f64>>,   // per layer, n × out
    inv_std: Vec<Vec<f64>>, // per layer, out
    pre_relu: Vec<Vec<f64>>, // per layer, n × out
    batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
    out: Vec<f64>,
}

fn forward(theta: &[f64], lay: &Layout, x: &[f64], norm: Norm<'_>) -> Cache {
    let d = lay.feature_count;
    let n = x.len() / d.max(1);
    let (nb, p) = (lay.blocks.len(), lay.proj);
    let mut z = vec![0.0; n * nb * p];
    let mut t = vec![0.0; n * nb * p];
    let mut alpha = vec![0.0; n * nb];
    let in0 = lay.fused_width() + lay.scalars.len();
    let mut h = vec![0.0; n * in0];
    let u = &theta[lay.score_u..lay.score_u + p];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let hi = &mut h[i * in0..(i + 1) * in0];
        if nb > 0 {
            let mut scores = vec![0.0; nb];
            for (b, r) in lay.blocks.iter().enumerate() {
                let xb = &row[r.clone()];
                let w = &theta[lay.block_w[b]..lay.block_w[b] + p * r.len()];
                let c = &theta[lay.block_c[b]..lay.block_c[b] + p];
                let at = (i * nb + b) * p;
                for k in 0..p {
                    let wk = &w[k * r.len()..(k + 1) * r.len()];
                    let zk = c[k] + wk.iter().zip(xb).map(|(a, b)| a * b).sum::<f64>();
                    z[at + k] = zk;
                    t[at + k] = zk.tanh();
                }
                scores[b] = theta[lay.score_s + b]
                    + u.iter().zip(&t[at..at + p]).map(|(a, b)| a * b).sum::<f64>();
            }
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - m).exp();
                total += *s;
            }
            for b in 0..nb {
                let a = scores[b] / total;
                alpha[i * nb + b] = a;
                let at = (i * nb + b) * p;
                for k in 0..p {
                    hi[k] += a * z[at + k];
                }
            }
        }
        let off = lay.fused_width();
        for (j, &c) in lay.scalars.iter().enumerate() {
            hi[off + j] = row[c];
        }
    }

    let mut inputs = Vec::with_capacity(lay.layers.len() + 1);
    let mut xhats = Vec::new();
    let mut inv_stds = Vec::new();
    let mut pre = Vec::new();
    let mut batch_stats = Vec::new();
    for (li, l) in lay.layers.iter().enumerate() {
        let w = &theta[l.w..l.w + l.output * l.input];
        let bias = &theta[l.b..l.b + l.output];
        let mut a = vec![0.0; n * l.output];
        for i in 0..n {
            let hin = &h[i * l.input..(i + 1) * l.input];
            for o in 0..l.output {
                let wo = &w[o * l.input..(o + 1) * l.input];
                a[i * l.output + o] = bias[o] + wo.iter().zip(hin).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let (mean, var) = match norm {
            Norm::Batch => {
                let mut mean = vec![0.0; l.output];
                let mut var = vec![0.0; l.output];
                for i in 0..n {
                    for o in 0..l.output {
                        mean[o] += a[i * l.output + o];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                for i in 0..n {
                    for o in 0..l.output {
                        let dv = a[i * l.output + o] - mean[o];
                        var[o] += dv * dv;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                (mean, var)
            }
            Norm::Running(stats) => stats[li].clone(),
        };
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let gamma = &theta[l.gamma..l.gamma + l.output];
        let beta = &theta[l.beta..l.beta + l.output];
        let mut xhat = vec![0.0; n * l.output];
        let mut o_val = vec![0.0; n * l.output];
        let mut next = vec![0.0; n * l.output];
        for i in 0..n {
            for o in 0..l.output {
                let k = i * l.output + o;
                xhat[k] = (a[k] - mean[o]) * inv[o];
                o_val[k] = gamma[o] * xhat[k] + beta[o];
                next[k] = o_val[k].max(0.0);
            }
        }
        inputs.push(std::mem::replace(&mut h, next));
        xhats.push(xhat);
        inv_stds.push(inv);
        pre.push(o_val);
        batch_stats.push((mean, var));
    }
    let hw = lay.head_width();
    let wo = &theta[lay.out_w..lay.out_w + hw];
    let out = (0..n)
        .map(|i| theta[lay.out_b] + wo.iter().zip(&h[i * hw..(i + 1) * hw]).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    inputs.push(h);
    Cache {
        n,
        z,
        t,
        alpha,
        inputs,
        xhat: xhats,
        inv_std: inv_stds,
        pre_relu: pre,
        batch_stats,
        out,
    }
}

/// Gradient of `Σ_i dout_i · out_i` with respect to θ, through batch statistics.
fn backward(theta: &[f64], lay: &Layout, x: &[f64], cache: &Cache, dout: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; lay.len];
    let n = cache.n;
    let d = lay.feature_count;
    let hw = lay.head_width();
    let h_last = cache.inputs.last().expect("head input");
    let mut dh = vec![0.0; n * hw];
    for i in 0..n {
        g[lay.out_b] += dout[i];
        for k in 0..hw {
            g[lay.out_w + k] += dout[i] * h_last[i * hw + k];
            dh[i * hw + k] = dout[i] * theta[lay.out_w + k];
        }
    }
    for (li, l) in lay.layers.iter().enumerate().rev() {
        let (m, nin) = (l.output, l.input);
        let xhat = &cache.xhat[li];
        let pre = &cache.pre_relu[li];
        let inv = &cache.inv_std[li];
        let mut dxhat = vec![0.0; n * m];
        for i in 0..n {
            for o in 0..m {
                let k = i * m + o;
                let dov = if pre[k] > 0.0 { dh[k] } else { 0.0 };
                g[l.gamma + o] += dov * xhat[k];
                g[l.beta + o] += dov;
                dxhat[k] = dov * theta[l.gamma + o];
            }
        }
        let mut da = vec![0.0; n * m];
        for o in 0..m {
            let (mut mean_g, mut mean_gx) = (0.0, 0.0);
            for i in 0..n {
                mean_g += dxhat[i * m + o];
                mean_gx += dxhat[i * m + o] * xhat[i * m + o];
            }
            mean_g /= n as f64;
            mean_gx /= n as f64;
            for i in 0..n {
                let k = i * m + o;
                da[k] = inv[o] * (dxhat[k] - mean_g - xhat[k] * mean_gx);
            }
        }
        let hin = &cache.inputs[li];
        let mut dprev = vec![0.0; n * nin];
        for i in 0..n {
            for o in 0..m {
                let dak = da[i * m + o];
                if dak == 0.0 {
                    continue;
                }
                g[l.b + o] += dak;
                let wrow = l.w + o * nin;
                for j in 0..nin {
                    g[wrow + j] += dak * hin[i * nin + j];
                    dprev[i * nin + j] += dak * theta[wrow + j];
                }
            }
        }
        dh = dprev;
    }
    let nb = lay.blocks.len();
    if nb == 0 {
        return g;
    }
    let p = lay.proj;
    let in0 = lay.fused_width() + lay.scalars.len();
    let u = &theta[lay.score_u..lay.score_u + p];
    for i in 0..n {
        let dfused = &dh[i * in0..i * in0 + p];
        let alpha = &cache.alpha[i * nb..(i + 1) * nb];
        let mut dalpha = vec![0.0; nb];
        for b in 0..nb {
            let at = (i * nb + b) * p;
            dalpha[b] = (0..p).map(|k| dfused[k] * cache.z[at + k]).sum();
        }
        let mean_da: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let row = &x[i * d..(i + 1) * d];
        for (b, r) in lay.blocks.iter().enumerate() {
            let at = (i * nb + b) * p;
            let de = alpha[b] * (dalpha[b] - mean_da);
            g[lay.score_s + b] += de;
            let xb = &row[r.clone()];
            for k in 0..p {
                let tk = cache.t[at + k];
                g[lay.score_u + k] += de * tk;
                let dz = alpha[b] * dfused[k] + de * u[k] * (1.0 - tk * tk);
                g[lay.block_c[b] + k] += dz;
                let wrow = lay.block_w[b] + k * r.len();
                for (j, &xv) in xb.iter().enumerate() {
                    g[wrow + j] += dz * xv;
                }
            }
        }
    }
    g
}

/// Weighted mean Huber loss of a batch and, per row, its derivative with respect to the output.
fn batch_loss(out: &[f64], y: &[f64], w: &[f64], huber: HuberParams) -> (f64, Vec<f64>) {
    let total: f64 = w.iter().sum();
    let mut loss = 0.0;
    let grads = out
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&o, &y), &w)| {
            let (l, g) = huber_loss(y, o, huber);
            loss += w * l;
            w * g / total
        })
        .collect();
    (loss / total, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layout: Layout,
    params: MlpParams,
    theta: Vec<f64>,
    running: Vec<(Vec<f64>, Vec<f64>)>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

impl MlpModel {
    /// Freshly initialized, untrained network.
    pub fn init(data: &TrainData<'_>, params: &MlpParams, seed: RngSeed) -> Result<Self> {
        let layout = Layout::new(data.cols, data.block_spans, params.projection_dim, &params.hidden)?;
        let mut rng = seed.derive(&[0x6d6c70]).rng();
        let mut theta = vec![0.0; layout.len];
        let glorot = |theta: &mut [f64], at: usize, fan_out: usize, fan_in: usize, rng: &mut Rng| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut theta[at..at + fan_out * fan_in] {
                *v = rng.uniform_range(-limit, limit);
            }
        };
        for (b, r) in layout.blocks.iter().enumerate() {
            glorot(&mut theta, layout.block_w[b], layout.proj, r.len(), &mut rng);
        }
        if !layout.blocks.is_empty() {
            glorot(&mut theta, layout.score_u, 1, layout.proj, &mut rng);
        }
        for l in &layout.layers {
            glorot(&mut theta, l.w, l.output, l.input, &mut rng);
            theta[l.gamma..l.gamma + l.output].fill(1.0);
        }
        glorot(&mut theta, layout.out_w, 1, layout.head_width(), &mut rng);
        let running = layout
            .layers
            .iter()
            .map(|l| (vec![0.0; l.output], vec![1.0; l.output]))
            .collect();
        Ok(MlpModel {
            layout,
            params: params.clone(),
            theta,
            running,
            epoch_loss: Vec::new(),
        })
    }

    pub fn fit(data: &TrainData<'_>, params: &MlpParams, huber: HuberParams, seed: RngSeed) -> Result<Self> {
        if data.rows < 2 {
            return Err(Error::Shape(format!("mlp needs at least 2 rows, got {}", data.rows)));
        }
        if params.batch_size < 2 {
            return Err(Error::Input("mlp batch_size must be at least 2".into()));
        }
        let mut model = Self::init(data, params, seed)?;
        let batch = params.batch_size.min(data.rows);
        let mut rng = seed.derive(&[0x6f72646572]).rng();
        let mut velocity = vec![0.0; model.theta.len()];
        let mut xb = Vec::with_capacity(batch * data.cols);
        let (mut yb, mut wb) = (Vec::with_capacity(batch), Vec::with_capacity(batch));
        let mut stats_seen = false;
        for epoch in 0..params.epochs {
            let order = rng.permutation(data.rows);
            let (mut loss_sum, mut count) = (0.0, 0usize);
            for chunk in order.chunks(batch) {
                if chunk.len() < 2 {
                    continue;
                }
                xb.clear();
                yb.clear();
                wb.clear();
                for &r in chunk {
                    xb.extend_from_slice(data.row(r));
                    yb.push(data.y[r]);
                    wb.push(data.weights[r]);
                }
                if wb.iter().sum::<f64>() <= 0.0 {
                    continue;
                }
                let cache = forward(&model.theta, &model.layout, &xb, Norm::Batch);
                let (loss, dout) = batch_loss(&cache.out, &yb, &wb, huber);
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        learning_rate: params.learning_rate,
                    });
                }
                let mut grad = backward(&model.theta, &model.layout, &xb, &cache, &dout);
                if params.clip_norm > 0.0 {
                    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if norm > params.clip_norm {
                        let s = params.clip_norm / norm;
                        grad.iter_mut().for_each(|g| *g *= s);
                    }
                }
                for ((t, v), g) in model.theta.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = params.momentum * *v - params.learning_rate * g;
                    *t += *v;
                }
                if model.theta.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Divergence {
                        epoch,
                        learning_rate: params.learning_rate,
                    });
                }
                let decay = if stats_seen { params.running_decay } else { 0.0 };
                for ((rm, rv), (bm, bv)) in model.running.iter_mut().zip(&cache.batch_stats) {
                    for (r, b) in rm.iter_mut().zip(bm) {
                        *r = decay * *r + (1.0 - decay) * b;
                    }
                    for (r, b) in rv.iter_mut().zip(bv) {
                        *r = decay * *r + (1.0 - decay) * b;
                    }
                }
                stats_seen = true;
                loss_sum += loss * chunk.len() as f64;
                count += chunk.len();
            }
            model.epoch_loss.push(if count > 0 { loss_sum / count as f64 } else { 0.0 });
        }
        Ok(model)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Shape(format!(
                "parameter vector has {} values, expected {}",
                theta.len(),
                self.theta.len()
            )));
        }
        self.theta = theta;
        Ok(())
    }

    /// Index of the output bias in the parameter vector.
    pub fn output_bias_index(&self) -> usize {
        self.layout.out_b
    }

    /// Names of the blocks that take part in attention, in score order.
    pub fn attention_blocks(&self) -> &[String] {
        &self.layout.block_names
    }

    /// Batch-statistics loss and its analytic gradient at the current parameters.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64], w: &[f64], huber: HuberParams) -> Result<(f64, Vec<f64>)> {
        self.check_batch(x, y, w)?;
        let cache = forward(&self.theta, &self.layout, x, Norm::Batch);
        let (loss, dout) = batch_loss(&cache.out, y, w, huber);
        Ok((loss, backward(&self.theta, &self.layout, x, &cache, &dout)))
    }

    /// Batch-statistics loss at an arbitrary parameter vector.
    pub fn loss_at(&self, theta: &[f64], x: &[f64], y: &[f64], w: &[f64], huber: HuberParams) -> Result<f64> {
        self.check_batch(x, y, w)?;
        if theta.len() != self.theta.len() {
            return Err(Error::Shape("parameter vector length mismatch".into()));
        }
        let cache = forward(theta, &self.layout, x, Norm::Batch);
        Ok(batch_loss(&cache.out, y, w, huber).0)
    }

    fn check_batch(&self, x: &[f64], y: &[f64], w: &[f64]) -> Result<()> {
        if x.len() != y.len() * self.layout.feature_count || w.len() != y.len() || y.len() < 2 {
            return Err(Error::Shape("probe batch shape mismatch or fewer than 2 rows".into()));
        }
        Ok(())
    }

    /// Per-row attention weights, `rows × attention_blocks().len()`.
    pub fn attention(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.layout.feature_count;
        if d == 0 || !x.len().is_multiple_of(d) {
            return Err(Error::Shape(format!("expected rows of width {d}")));
        }
        Ok(forward(&self.theta, &self.layout, x, Norm::Running(&self.running)).alpha)
    }

    /// Attention weight per block averaged over rows.
    pub fn mean_attention(&self, x: &[f64]) -> Result<Vec<(String, f64)>> {
        let a = self.attention(x)?;
        let nb = self.layout.blocks.len();
        let rows = if nb == 0 { 0 } else { a.len() / nb };
        Ok(self
            .layout
            .block_names
            .iter()
            .enumerate()
            .map(|(b, name)| {
                let s: f64 = (0..rows).map(|i| a[i * nb + b]).sum();
                (name.clone(), if rows == 0 { 0.0 } else { s / rows as f64 })
            })
            .collect())
    }

    fn read_body(r: &mut Reader<'_>) -> Result<Self> {
        let feature_count = r.usize()?;
        let names = r.strs()?;
        let starts = r.usizes()?;
        let ends = r.usizes()?;
        if names.len() != starts.len() || starts.len() != ends.len() {
            return Err(r.err("mlp block span lists differ in length"));
        }
        let spans: Vec<(String, Range<usize>)> = names
            .into_iter()
            .zip(starts.into_iter().zip(ends))
            .map(|(n, (s, e))| (n, s..e))
            .collect();
        let params = MlpParams {
            projection_dim: r.usize()?,
            hidden: r.usizes()?,
            epochs: r.usize()?,
            batch_size: r.usize()?,
            learning_rate: r.f64()?,
            momentum: r.f64()?,
            clip_norm: r.f64()?,
            running_decay: r.f64()?,
        };
        let layout = Layout::new(feature_count, &spans, params.projection_dim, &params.hidden)
            .map_err(|e| r.err(e.to_string()))?;
        let theta = r.f64s()?;
        if theta.len() != layout.len {
            return Err(r.err("mlp parameter count does not match its layout"));
        }
        let mut running = Vec::with_capacity(layout.layers.len());
        for l in &layout.layers {
            let m = r.f64s()?;
            let v = r.f64s()?;
            if m.len() != l.output || v.len() != l.output {
                return Err(r.err("mlp running statistics have the wrong width"));
            }
            running.push((m, v));
        }
        let epoch_loss = r.f64s()?;
        Ok(MlpModel {
            layout,
            params,
            theta,
            running,
            epoch_loss,
        })
    }
}

impl Regressor for MlpModel {
    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn feature_count(&self) -> usize {
        self.layout.feature_count
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        forward(&self.theta, &self.layout, row, Norm::Running(&self.running)).out[0]
    }

    fn predict(&self, x: &[f64], cols: usize) -> Result<Vec<f64>> {
        if cols != self.layout.feature_count {
            return Err(Error::Shape(format!(
                "mlp model expects {} features, got {cols}",
                self.layout.feature_count
            )));
        }
        // rows are independent at inference, so chunking only bounds memory
        let mut out = Vec::with_capacity(x.len() / cols.max(1));
        for chunk in x.chunks(cols * 1024) {
            out.extend(forward(&self.theta, &self.layout, chunk, Norm::Running(&self.running)).out);
        }
        Ok(out)
    }

    fn write(&self, w: &mut Writer) {
        w.usize(self.layout.feature_count);
        let spans = &self.layout.spans;
        w.strs(&spans.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());
        w.usizes(&spans.iter().map(|(_, r)| r.start).collect::<Vec<_>>());
        w.usizes(&spans.iter().map(|(_, r)| r.end).collect::<Vec<_>>());
        let p = &self.params;
        w.usize(p.projection_dim);
        w.usizes(&p.hidden);
        w.usize(p.epochs);
        w.usize(p.batch_size);
        w.f64(p.learning_rate);
        w.f64(p.momentum);
        w.f64(p.clip_norm);
        w.f64(p.running_decay);
        w.f64s(&self.theta);
        for (m, v) in &self.running {
            w.f64s(m);
            w.f64s(v);
        }
        w.f64s(&self.epoch_loss);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub struct MlpFactory(pub MlpParams);

impl RegressorFactory for MlpFactory {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn description(&self) -> &'static str {
        "MLP with softmax attention over modality blocks and standardized ReLU layers"
    }

    fn fit(&self, data: &TrainData<'_>, huber: HuberParams, seed: RngSeed) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(MlpModel::fit(data, &self.0, huber, seed)?))
    }

    fn load(&self, r: &mut Reader<'_>) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(MlpModel::read_body(r)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans() -> Vec<(String, Range<usize>)> {
        vec![
            ("visual".into(), 0..4),
            ("textual".into(), 4..7),
            ("user".into(), 7..8),
        ]
    }

    fn sample(rows: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = RngSeed(seed).rng();
        let x: Vec<f64> = (0..rows * 9).map(|_| rng.normal()).collect();
        let y = (0..rows)
            .map(|r| 2.0 * x[r * 9] - x[r * 9 + 4] + 0.5 * x[r * 9 + 7] + 0.3 * x[r * 9 + 8])
            .collect();
        (x, y)
    }

    #[test]
    fn zero_network_outputs_the_bias() {
        let (x, y) = sample(10, 1);
        let w = vec![1.0; 10];
        let sp = spans();
        let data = TrainData::new(&x, 9, &y, &w, &sp).unwrap();
        let mut m = MlpModel::init(&data, &MlpParams::default(), RngSeed(1)).unwrap();
        let mut theta = vec![0.0; m.theta().len()];
        theta[m.output_bias_index()] = 0.75;
        m.set_theta(theta).unwrap();
        assert!(m.predict(&x, 9).unwrap().iter().all(|&p| p == 0.75));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (x, y) = sample(20, 2);
        let w: Vec<f64> = (0..20).map(|i| 0.5 + (i % 3) as f64 * 0.25).collect();
        let sp = spans();
        let data = TrainData::new(&x, 9, &y, &w, &sp).unwrap();
        let params = MlpParams { projection_dim: 4, hidden: vec![6, 5], ..Default::default() };
        let m = MlpModel::init(&data, &params, RngSeed(3)).unwrap();
        let huber = HuberParams::new(1.0).unwrap();
        let (_, grad) = m.loss_and_gradient(&x, &y, &w, huber).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut theta = m.theta().to_vec();
        for k in 0..theta.len() {
            let orig = theta[k];
            theta[k] = orig + h;
            let up = m.loss_at(&theta, &x, &y, &w, huber).unwrap();
            theta[k] = orig - h;
            let down = m.loss_at(&theta, &x, &y, &w, huber).unwrap();
            theta[k] = orig;
            let num = (up - down) / (2.0 * h);
            let rel = (grad[k] - num).abs() / grad[k].abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn attention_is_a_probability_vector() {
        let (x, y) = sample(64, 4);
        let w = vec![1.0; 64];
        let sp = spans();
        let data = TrainData::new(&x, 9, &y, &w, &sp).unwrap();
        let params = MlpParams { epochs: 3, batch_size: 16, ..Default::default() };
        let m = MlpModel::fit(&data, &params, HuberParams::default(), RngSeed(5)).unwrap();
        assert_eq!(m.attention_blocks(), ["visual", "textual"]);
        let a = m.attention(&x).unwrap();
        for row in a.chunks(2) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn constant_zero_block_loses_attention() {
        let rows = 600;
        let mut rng = RngSeed(6).rng();
        let mut x = vec![0.0; rows * 9];
        let mut y = vec![0.0; rows];
        for r in 0..rows {
            for c in 0..4 {
                x[r * 9 + c] = rng.normal();
            }
            // textual block stays all zero
            x[r * 9 + 7] = rng.normal();
            x[r * 9 + 8] = rng.normal();
            y[r] = x[r * 9] + x[r * 9 + 1] - x[r * 9 + 2] + 0.2 * rng.normal();
        }
        let w = vec![1.0; rows];
        let sp = spans();
        let data = TrainData::new(&x, 9, &y, &w, &sp).unwrap();
        let params = MlpParams { epochs: 30, batch_size: 32, ..Default::default() };
        let m = MlpModel::fit(&data, &params, HuberParams::default(), RngSeed(7)).unwrap();
        let att = m.mean_attention(&x).unwrap();
        assert_eq!(att[1].0, "textual");
        assert!(att[1].1 < 0.5, "{att:?}");
        assert!(att[1].1 < att[0].1);
    }

    #[test]
    fn learns_a_linear_signal() {
        let (x, y) = sample(512, 8);
        let w = vec![1.0; 512];
        let sp = spans();
        let data = TrainData::new(&x, 9, &y, &w, &sp).unwrap();
        let params = MlpParams { batch_size: 32, ..Default::default() };
        let m = MlpModel::fit(&data, &params, HuberParams::default(), RngSeed(9)).unwrap();
        let p = m.predict(&x, 9).unwrap();
        let mean_y = y.iter().sum::<f64>() / 512.0;
        let mae: f64 = p.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / 512.0;
        let base: f64 = y.iter().map(|v| (v - mean_y).abs()).sum::<f64>() / 512.0;
        assert!(mae < 0.3 * base, "mae {mae} vs baseline {base}");
        assert!(m.epoch_loss.last().unwrap() < m.epoch_loss.first().unwrap());
    }

    #[test]
    fn missing_spans_are_rejected() {
        let (x, y) = sample(10, 1);
        let w = vec![1.0; 10];
        let data = TrainData::new(&x, 9, &y, &w, &[]).unwrap();
        assert!(matches!(MlpModel::fit(&data, &MlpParams::default(), HuberParams::default(), RngSeed(0)), Err(Error::Input(_))));
    }
}
