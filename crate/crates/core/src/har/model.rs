//! Transformer encoder classifier with hand-written backpropagation.
//!
//! input projection -> + sinusoidal positions -> L x (pre-norm multi-head
//! self-attention + residual, pre-norm GELU feed-forward + residual) ->
//! final norm -> mean over time -> linear head.
//!
//! All parameters live in one flat buffer described by a [`Layout`]; the
//! optimizer and the checkpoint format work on that buffer directly.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    /// Average-pooling factor applied to the 130 Hz input.
    pub downsample: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            heads: 4,
            layers: 2,
            ffn_dim: 128,
            downsample: 5,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.ffn_dim == 0 || self.downsample == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must be within [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub len: usize,
}

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.len;
        let spec = TensorSpec { name, shape, offset };
        self.len += spec.size();
        self.tensors.push(spec);
        offset
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Offsets {
    w_in: usize,
    b_in: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    w_head: usize,
    b_head: usize,
}

fn build_layout(cfg: &ModelConfig, channels: usize, classes: usize) -> (Layout, Offsets) {
    let (d, f) = (cfg.d_model, cfg.ffn_dim);
    let mut l = Layout { tensors: Vec::new(), len: 0 };
    let w_in = l.push("w_in".into(), vec![channels, d]);
    let b_in = l.push("b_in".into(), vec![d]);
    let mut layers = Vec::new();
    for i in 0..cfg.layers {
        let mut p = |n: &str, shape: Vec<usize>| l.push(format!("layer{i}.{n}"), shape);
        layers.push(LayerOffsets {
            ln1_g: p("ln1_g", vec![d]),
            ln1_b: p("ln1_b", vec![d]),
            wq: p("wq", vec![d, d]),
            bq: p("bq", vec![d]),
            wk: p("wk", vec![d, d]),
            bk: p("bk", vec![d]),
            wv: p("wv", vec![d, d]),
            bv: p("bv", vec![d]),
            wo: p("wo", vec![d, d]),
            bo: p("bo", vec![d]),
            ln2_g: p("ln2_g", vec![d]),
            ln2_b: p("ln2_b", vec![d]),
            w1: p("w1", vec![d, f]),
            b1: p("b1", vec![f]),
            w2: p("w2", vec![f, d]),
            b2: p("b2", vec![d]),
        });
    }
    let lnf_g = l.push("lnf_g".into(), vec![d]);
    let lnf_b = l.push("lnf_b".into(), vec![d]);
    let w_head = l.push("w_head".into(), vec![d, classes]);
    let b_head = l.push("b_head".into(), vec![classes]);
    (
        l,
        Offsets {
            w_in,
            b_in,
            layers,
            lnf_g,
            lnf_b,
            w_head,
            b_head,
        },
    )
}

/// Model parameters plus the input geometry they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Time steps per window (after downsampling).
    pub steps: usize,
    pub channels: usize,
    pub classes: usize,
    pub layout: Layout,
    pub values: Vec<f64>,
    offsets: Offsets,
}

fn mat(p: &[f64], off: usize, r: usize, c: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((r, c), &p[off..off + r * c]).expect("layout slice")
}

fn vector(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

fn mat_mut(p: &mut [f64], off: usize, r: usize, c: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((r, c), &mut p[off..off + r * c]).expect("layout slice")
}

fn vector_mut(p: &mut [f64], off: usize, n: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut p[off..off + n])
}

pub fn positional_encoding(steps: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((steps, d), |(t, i)| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let a = t as f64 * freq;
        if i % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit norm gains.
    pub fn init(config: &ModelConfig, steps: usize, channels: usize, classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if steps == 0 || channels == 0 || classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "model needs T > 0, C > 0 and K >= 2 (got T {steps}, C {channels}, K {classes})"
            )));
        }
        let (layout, offsets) = build_layout(config, channels, classes);
        let mut values = vec![0.0; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &layout.tensors {
            let base = t.name.rsplit('.').next().unwrap_or(&t.name);
            let range = &mut values[t.offset..t.offset + t.size()];
            if base.ends_with("_g") {
                range.fill(1.0);
            } else if t.shape.len() == 2 {
                let a = (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt();
                for v in range {
                    *v = rng.random_range(-a..a);
                }
            }
        }
        Ok(ModelParams {
            config: config.clone(),
            steps,
            channels,
            classes,
            layout,
            values,
            offsets,
        })
    }

    /// Rebuilds parameters from a stored layout and buffer.
    pub fn from_parts(config: ModelConfig, steps: usize, channels: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (layout, offsets) = build_layout(&config, channels, classes);
        if values.len() != layout.len {
            return Err(Error::ShapeMismatch(format!(
                "parameter buffer has {} values, layout needs {}",
                values.len(),
                layout.len
            )));
        }
        Ok(ModelParams {
            config,
            steps,
            channels,
            classes,
            layout,
            values,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|t| &self.values[t.offset..t.offset + t.size()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let t = self.layout.get(name)?.clone();
        Some(&mut self.values[t.offset..t.offset + t.size()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row *= *is;
    }
    let y = &xhat * &g + b;
    (y, LnCache { xhat, inv_std })
}

/// Returns dx; accumulates dg, db.
fn layer_norm_backward(dy: &Array2<f64>, c: &LnCache, g: ArrayView1<f64>, mut dg: ArrayViewMut1<f64>, mut db: ArrayViewMut1<f64>) -> Array2<f64> {
    dg += &(dy * &c.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &g;
    for ((mut row, xh), &is) in dx.rows_mut().into_iter().zip(c.xhat.rows()).zip(&c.inv_std) {
        let m1 = row.sum() / d;
        let m2 = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        row.zip_mut_with(&xh, |v, &x| *v = is * (*v - m1 - x * m2));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

fn linear(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Row-wise softmax in place.
pub fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Mean cross-entropy and its gradient with respect to the logits,
/// `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let mut p = logits.clone();
    softmax_rows(&mut p);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    let mut grad = p;
    for (i, &y) in labels.iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    grad /= n as f64;
    (loss / n as f64, grad)
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention weights per (sample, head), T x T.
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    mask1: Option<Array2<f64>>,
    ln2: LnCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    mask2: Option<Array2<f64>>,
}

pub struct ForwardCache {
    batch: usize,
    x: Array2<f64>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pooled: Array2<f64>,
    pub logits: Array2<f64>,
}

impl ForwardCache {
    /// Softmax attention weights of `layer` for batch item `n`, head `h`.
    pub fn attention(&self, layer: usize, n: usize, h: usize, heads: usize) -> &Array2<f64> {
        &self.layers[layer].attn[n * heads + h]
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

impl ModelParams {
    fn check_batch(&self, x: &[Array2<f64>]) -> Result<()> {
        for (i, w) in x.iter().enumerate() {
            if w.dim() != (self.steps, self.channels) {
                return Err(Error::ShapeMismatch(format!(
                    "window {i} is {:?}, model expects ({}, {})",
                    w.dim(),
                    self.steps,
                    self.channels
                )));
            }
        }
        Ok(())
    }

    /// Forward pass over a batch of `T x C` windows. With `rng` set, dropout
    /// is active (training mode); otherwise the pass is deterministic.
    pub fn forward(&self, x: &[Array2<f64>], rng: Option<&mut ChaCha8Rng>) -> Result<ForwardCache> {
        self.check_batch(x)?;
        Ok(self.forward_unchecked(x, rng))
    }

    fn forward_unchecked(&self, x: &[Array2<f64>], mut rng: Option<&mut ChaCha8Rng>) -> ForwardCache {
        let p = &self.values;
        let o = &self.offsets;
        let (t, c, d, k) = (self.steps, self.channels, self.config.d_model, self.classes);
        let (heads, f) = (self.config.heads, self.config.ffn_dim);
        let dh = d / heads;
        let n = x.len();
        let rows = n * t;
        let mut xin = Array2::zeros((rows, c));
        for (i, w) in x.iter().enumerate() {
            xin.slice_mut(s![i * t..(i + 1) * t, ..]).assign(w);
        }
        let pe = positional_encoding(t, d);
        let mut h = linear(&xin, mat(p, o.w_in, c, d), vector(p, o.b_in, d));
        for i in 0..n {
            let mut blk = h.slice_mut(s![i * t..(i + 1) * t, ..]);
            blk += &pe;
        }
        let drop = self.config.dropout;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut layers = Vec::with_capacity(self.config.layers);
        for lo in &o.layers {
            let (h1, ln1) = layer_norm(&h, vector(p, lo.ln1_g, d), vector(p, lo.ln1_b, d));
            let q = linear(&h1, mat(p, lo.wq, d, d), vector(p, lo.bq, d));
            let kk = linear(&h1, mat(p, lo.wk, d, d), vector(p, lo.bk, d));
            let v = linear(&h1, mat(p, lo.wv, d, d), vector(p, lo.bv, d));
            let mut attn = Vec::with_capacity(n * heads);
            let mut ocat = Array2::zeros((rows, d));
            for i in 0..n {
                let r = i * t..(i + 1) * t;
                for hd in 0..heads {
                    let cs = hd * dh..(hd + 1) * dh;
                    let qs = q.slice(s![r.clone(), cs.clone()]);
                    let ks = kk.slice(s![r.clone(), cs.clone()]);
                    let vs = v.slice(s![r.clone(), cs.clone()]);
                    let mut a = qs.dot(&ks.t());
                    a *= scale;
                    softmax_rows(&mut a);
                    ocat.slice_mut(s![r.clone(), cs]).assign(&a.dot(&vs));
                    attn.push(a);
                }
            }
            let mut ao = linear(&ocat, mat(p, lo.wo, d, d), vector(p, lo.bo, d));
            let mask1 = match (rng.as_deref_mut(), drop > 0.0) {
                (Some(r), true) => {
                    let m = dropout_mask(r, (rows, d), drop);
                    ao *= &m;
                    Some(m)
                }
                _ => None,
            };
            h += &ao;
            let (h2, ln2) = layer_norm(&h, vector(p, lo.ln2_g, d), vector(p, lo.ln2_b, d));
            let u = linear(&h2, mat(p, lo.w1, d, f), vector(p, lo.b1, f));
            let g = u.mapv(gelu);
            let mut fo = linear(&g, mat(p, lo.w2, f, d), vector(p, lo.b2, d));
            let mask2 = match (rng.as_deref_mut(), drop > 0.0) {
                (Some(r), true) => {
                    let m = dropout_mask(r, (rows, d), drop);
                    fo *= &m;
                    Some(m)
                }
                _ => None,
            };
            h += &fo;
            layers.push(LayerCache {
                ln1,
                h1,
                q,
                k: kk,
                v,
                attn,
                o: ocat,
                mask1,
                ln2,
                h2,
                u,
                g,
                mask2,
            });
        }
        let (z, lnf) = layer_norm(&h, vector(p, o.lnf_g, d), vector(p, o.lnf_b, d));
        let mut pooled = Array2::zeros((n, d));
        for i in 0..n {
            pooled
                .row_mut(i)
                .assign(&z.slice(s![i * t..(i + 1) * t, ..]).mean_axis(Axis(0)).expect("T > 0"));
        }
        let logits = linear(&pooled, mat(p, o.w_head, d, k), vector(p, o.b_head, k));
        ForwardCache {
            batch: n,
            x: xin,
            layers,
            lnf,
            pooled,
            logits,
        }
    }

    /// Inference logits, `N x K`.
    pub fn logits(&self, x: &[Array2<f64>]) -> Result<Array2<f64>> {
        Ok(self.forward(x, None)?.logits)
    }

    /// Class probabilities, `N x K`.
    pub fn predict_proba(&self, x: &[Array2<f64>]) -> Result<Array2<f64>> {
        let mut l = self.logits(x)?;
        softmax_rows(&mut l);
        Ok(l)
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// gradient at the logits.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> Vec<f64> {
        let p = &self.values;
        let o = &self.offsets;
        let (t, c, d, k) = (self.steps, self.channels, self.config.d_model, self.classes);
        let (heads, f) = (self.config.heads, self.config.ffn_dim);
        let dh = d / heads;
        let n = cache.batch;
        let rows = n * t;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut grad = vec![0.0; p.len()];

        general_mat_mul(1.0, &cache.pooled.t(), dlogits, 1.0, &mut mat_mut(&mut grad, o.w_head, d, k));
        vector_mut(&mut grad, o.b_head, k).assign(&dlogits.sum_axis(Axis(0)));
        let dpooled = dlogits.dot(&mat(p, o.w_head, d, k).t());
        let mut dz = Array2::zeros((rows, d));
        for i in 0..n {
            let row = &dpooled.row(i) / t as f64;
            for mut r in dz.slice_mut(s![i * t..(i + 1) * t, ..]).rows_mut() {
                r.assign(&row);
            }
        }
        let mut dh_res = {
            let (gs, rest) = grad.split_at_mut(o.lnf_b);
            layer_norm_backward(
                &dz,
                &cache.lnf,
                vector(p, o.lnf_g, d),
                vector_mut(gs, o.lnf_g, d),
                vector_mut(rest, 0, d),
            )
        };

        for (lo, lc) in o.layers.iter().zip(&cache.layers).rev() {
            // feed-forward branch
            let mut dfo = dh_res.clone();
            if let Some(m) = &lc.mask2 {
                dfo *= m;
            }
            general_mat_mul(1.0, &lc.g.t(), &dfo, 1.0, &mut mat_mut(&mut grad, lo.w2, f, d));
            vector_mut(&mut grad, lo.b2, d).scaled_add(1.0, &dfo.sum_axis(Axis(0)));
            let mut du = dfo.dot(&mat(p, lo.w2, f, d).t());
            du.zip_mut_with(&lc.u, |a, &u| *a *= gelu_grad(u));
            general_mat_mul(1.0, &lc.h2.t(), &du, 1.0, &mut mat_mut(&mut grad, lo.w1, d, f));
            vector_mut(&mut grad, lo.b1, f).scaled_add(1.0, &du.sum_axis(Axis(0)));
            let dh2 = du.dot(&mat(p, lo.w1, d, f).t());
            let dx = {
                let (gs, rest) = grad.split_at_mut(lo.ln2_b);
                layer_norm_backward(&dh2, &lc.ln2, vector(p, lo.ln2_g, d), vector_mut(gs, lo.ln2_g, d), vector_mut(rest, 0, d))
            };
            dh_res += &dx;

            // attention branch
            let mut dao = dh_res.clone();
            if let Some(m) = &lc.mask1 {
                dao *= m;
            }
            general_mat_mul(1.0, &lc.o.t(), &dao, 1.0, &mut mat_mut(&mut grad, lo.wo, d, d));
            vector_mut(&mut grad, lo.bo, d).scaled_add(1.0, &dao.sum_axis(Axis(0)));
            let docat = dao.dot(&mat(p, lo.wo, d, d).t());
            let mut dq = Array2::zeros((rows, d));
            let mut dk = Array2::zeros((rows, d));
            let mut dv = Array2::zeros((rows, d));
            for i in 0..n {
                let r = i * t..(i + 1) * t;
                for hd in 0..heads {
                    let cs = hd * dh..(hd + 1) * dh;
                    let a = &lc.attn[i * heads + hd];
                    let dos = docat.slice(s![r.clone(), cs.clone()]);
                    let qs = lc.q.slice(s![r.clone(), cs.clone()]);
                    let ks = lc.k.slice(s![r.clone(), cs.clone()]);
                    let vs = lc.v.slice(s![r.clone(), cs.clone()]);
                    dv.slice_mut(s![r.clone(), cs.clone()]).assign(&a.t().dot(&dos));
                    let da = dos.dot(&vs.t());
                    let mut ds = a * &da;
                    for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                        let sum = row.sum();
                        row.zip_mut_with(&arow, |v, &av| *v -= av * sum);
                    }
                    ds *= scale;
                    dq.slice_mut(s![r.clone(), cs.clone()]).assign(&ds.dot(&ks));
                    dk.slice_mut(s![r.clone(), cs]).assign(&ds.t().dot(&qs));
                }
            }
            let mut dh1 = Array2::zeros((rows, d));
            for (dm, w, b) in [(&dq, lo.wq, lo.bq), (&dk, lo.wk, lo.bk), (&dv, lo.wv, lo.bv)] {
                general_mat_mul(1.0, &lc.h1.t(), dm, 1.0, &mut mat_mut(&mut grad, w, d, d));
                vector_mut(&mut grad, b, d).scaled_add(1.0, &dm.sum_axis(Axis(0)));
                general_mat_mul(1.0, dm, &mat(p, w, d, d).t(), 1.0, &mut dh1);
            }
            let dx = {
                let (gs, rest) = grad.split_at_mut(lo.ln1_b);
                layer_norm_backward(&dh1, &lc.ln1, vector(p, lo.ln1_g, d), vector_mut(gs, lo.ln1_g, d), vector_mut(rest, 0, d))
            };
            dh_res += &dx;
        }
        general_mat_mul(1.0, &cache.x.t(), &dh_res, 1.0, &mut mat_mut(&mut grad, o.w_in, c, d));
        vector_mut(&mut grad, o.b_in, d).scaled_add(1.0, &dh_res.sum_axis(Axis(0)));
        grad
    }

    /// Mean cross-entropy of a batch and the full parameter gradient.
    pub fn loss_and_grad(&self, x: &[Array2<f64>], labels: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<f64>)> {
        self.check_labels(x, labels)?;
        let cache = self.forward_unchecked(x, rng);
        let (loss, dlogits) = softmax_cross_entropy(&cache.logits, labels);
        Ok((loss, self.backward(&cache, &dlogits)))
    }

    /// Mean cross-entropy in inference mode.
    pub fn loss(&self, x: &[Array2<f64>], labels: &[usize]) -> Result<f64> {
        self.check_labels(x, labels)?;
        Ok(softmax_cross_entropy(&self.forward_unchecked(x, None).logits, labels).0)
    }

    fn check_labels(&self, x: &[Array2<f64>], labels: &[usize]) -> Result<()> {
        self.check_batch(x)?;
        if x.len() != labels.len() || x.is_empty() {
            return Err(Error::ShapeMismatch(format!("{} windows but {} labels", x.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::ShapeMismatch(format!("label index {bad} outside {} classes", self.classes)));
        }
        Ok(())
    }
}
