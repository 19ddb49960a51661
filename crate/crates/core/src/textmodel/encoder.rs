//! Post-norm transformer encoder with a dense two-class head on the
//! position-0 (`[CLS]`) hidden state.
//!
//! Each layer is: multi-head self-attention, residual, layer norm, GELU
//! feed-forward, residual, layer norm. Padded keys are excluded from
//! attention. Since a padded position can only ever influence other padded
//! positions, the encoder runs on the unmasked positions alone (keeping
//! their original position ids); the `[CLS]` output is the same as a
//! full-length pass with `-inf` key masking and padding costs nothing.
//!
//! Gradients are hand-derived and checked against finite differences in the
//! test suite.

use ndarray::{s, Array1, Array2, ArrayD, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, IxDyn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vocab::TokenizedInput;
use crate::error::{Error, Result};
use crate::rng;

pub const FORMAT_VERSION: u32 = 1;
pub const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// Small default dimensions for desk-scale training.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            d_model: 32,
            d_ff: 64,
            max_len: 256,
            vocab_size,
            dropout_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::invalid(format!(
                "d_model {} must be a positive multiple of num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::invalid("d_ff must be positive"));
        }
        if self.max_len < 2 {
            return Err(Error::invalid("max_len must be at least 2"));
        }
        if self.vocab_size < 4 {
            return Err(Error::invalid("vocab_size must cover the four special tokens"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}

/// Weight matrices are `(in, out)`; rows of activations are multiplied on
/// the left.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub query: Array2<f64>,
    pub query_bias: Array1<f64>,
    pub key: Array2<f64>,
    pub key_bias: Array1<f64>,
    pub value: Array2<f64>,
    pub value_bias: Array1<f64>,
    pub output: Array2<f64>,
    pub output_bias: Array1<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub ff1: Array2<f64>,
    pub ff1_bias: Array1<f64>,
    pub ff2: Array2<f64>,
    pub ff2_bias: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

impl LayerParams {
    fn zeros(c: &EncoderConfig) -> Self {
        let (d, f) = (c.d_model, c.d_ff);
        LayerParams {
            query: Array2::zeros((d, d)),
            query_bias: Array1::zeros(d),
            key: Array2::zeros((d, d)),
            key_bias: Array1::zeros(d),
            value: Array2::zeros((d, d)),
            value_bias: Array1::zeros(d),
            output: Array2::zeros((d, d)),
            output_bias: Array1::zeros(d),
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            ff1: Array2::zeros((d, f)),
            ff1_bias: Array1::zeros(f),
            ff2: Array2::zeros((f, d)),
            ff2_bias: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
        }
    }

    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("query", self.query.view().into_dyn()),
            ("query_bias", self.query_bias.view().into_dyn()),
            ("key", self.key.view().into_dyn()),
            ("key_bias", self.key_bias.view().into_dyn()),
            ("value", self.value.view().into_dyn()),
            ("value_bias", self.value_bias.view().into_dyn()),
            ("output", self.output.view().into_dyn()),
            ("output_bias", self.output_bias.view().into_dyn()),
            ("ln1_gain", self.ln1_gain.view().into_dyn()),
            ("ln1_bias", self.ln1_bias.view().into_dyn()),
            ("ff1", self.ff1.view().into_dyn()),
            ("ff1_bias", self.ff1_bias.view().into_dyn()),
            ("ff2", self.ff2.view().into_dyn()),
            ("ff2_bias", self.ff2_bias.view().into_dyn()),
            ("ln2_gain", self.ln2_gain.view().into_dyn()),
            ("ln2_bias", self.ln2_bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        vec![
            ("query", self.query.view_mut().into_dyn()),
            ("query_bias", self.query_bias.view_mut().into_dyn()),
            ("key", self.key.view_mut().into_dyn()),
            ("key_bias", self.key_bias.view_mut().into_dyn()),
            ("value", self.value.view_mut().into_dyn()),
            ("value_bias", self.value_bias.view_mut().into_dyn()),
            ("output", self.output.view_mut().into_dyn()),
            ("output_bias", self.output_bias.view_mut().into_dyn()),
            ("ln1_gain", self.ln1_gain.view_mut().into_dyn()),
            ("ln1_bias", self.ln1_bias.view_mut().into_dyn()),
            ("ff1", self.ff1.view_mut().into_dyn()),
            ("ff1_bias", self.ff1_bias.view_mut().into_dyn()),
            ("ff2", self.ff2.view_mut().into_dyn()),
            ("ff2_bias", self.ff2_bias.view_mut().into_dyn()),
            ("ln2_gain", self.ln2_gain.view_mut().into_dyn()),
            ("ln2_bias", self.ln2_bias.view_mut().into_dyn()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    /// `(d_model, 2)`
    pub head: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl EncoderParams {
    /// Every tensor zero, layer-norm gains included. Also the shape of a
    /// gradient.
    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(EncoderParams {
            config: config.clone(),
            token_embedding: Array2::zeros((config.vocab_size, config.d_model)),
            position_embedding: Array2::zeros((config.max_len, config.d_model)),
            layers: (0..config.num_layers).map(|_| LayerParams::zeros(config)).collect(),
            head: Array2::zeros((config.d_model, 2)),
            head_bias: Array1::zeros(2),
        })
    }

    /// Seeded initialization. Weight matrices are Xavier-uniform
    /// (`±sqrt(6 / (fan_in + fan_out))`), embeddings uniform in
    /// `±sqrt(3 / d_model)` (unit variance per vector), biases 0 and
    /// layer-norm gains 1. Tensors are filled in [`Self::tensors`] order.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = rng::seeded(seed);
        let emb_bound = (3.0 / config.d_model as f64).sqrt();
        for (name, mut t) in p.tensors_mut() {
            if name.ends_with("_gain") {
                t.fill(1.0);
            } else if name.ends_with("embedding") {
                t.iter_mut().for_each(|v| *v = rng.gen_range(-emb_bound..emb_bound));
            } else if t.ndim() == 2 {
                let bound = (6.0 / (t.shape()[0] + t.shape()[1]) as f64).sqrt();
                t.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
            }
        }
        Ok(p)
    }

    /// Named views in a fixed order, e.g. `layers.0.query`.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding.view().into_dyn()),
            ("position_embedding".to_string(), self.position_embedding.view().into_dyn()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.tensors().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.push(("head".to_string(), self.head.view().into_dyn()));
        out.push(("head_bias".to_string(), self.head_bias.view().into_dyn()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding.view_mut().into_dyn()),
            ("position_embedding".to_string(), self.position_embedding.view_mut().into_dyn()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(l.tensors_mut().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.push(("head".to_string(), self.head.view_mut().into_dyn()));
        out.push(("head_bias".to_string(), self.head_bias.view_mut().into_dyn()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn scaled_add(&mut self, alpha: f64, other: &EncoderParams) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(alpha, &b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.map_inplace(|v| *v *= alpha);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let tensors = self
            .tensors()
            .into_iter()
            .map(|(name, t)| TensorFile {
                name,
                shape: t.shape().to_vec(),
                data: t.iter().copied().collect(),
            })
            .collect();
        Ok(serde_json::to_string(&ParamsFile {
            format_version: FORMAT_VERSION,
            model_type: "transformer_encoder".into(),
            config: self.config.clone(),
            tensors,
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(json)?;
        if file.format_version != FORMAT_VERSION || file.model_type != "transformer_encoder" {
            return Err(Error::Format(format!(
                "expected transformer_encoder format_version {FORMAT_VERSION}, found {} v{}",
                file.model_type, file.format_version
            )));
        }
        let mut p = Self::zeros(&file.config)?;
        let mut by_name: std::collections::HashMap<String, TensorFile> =
            file.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        for (name, mut t) in p.tensors_mut() {
            let f = by_name
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            let loaded = ArrayD::from_shape_vec(IxDyn(&f.shape), f.data)
                .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
            if loaded.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, config implies {:?}",
                    loaded.shape(),
                    t.shape()
                )));
            }
            t.assign(&loaded);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Format(format!("unexpected tensor {extra}")));
        }
        if !p.is_finite() {
            return Err(Error::Format("non-finite parameter value".into()));
        }
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorFile {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    format_version: u32,
    model_type: String,
    config: EncoderConfig,
    tensors: Vec<TensorFile>,
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Per-row `(x - mean) / sqrt(var + eps)` and the `1 / sqrt(var + eps)`
/// factors.
pub fn standardize(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut out = x.to_owned();
    let mut inv = Array1::zeros(x.nrows());
    for (mut row, inv_std) in out.rows_mut().into_iter().zip(inv.iter_mut()) {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        row.map_inplace(|v| *v -= mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *inv_std = 1.0 / (var + LN_EPS).sqrt();
        row.map_inplace(|v| *v *= *inv_std);
    }
    (out, inv)
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let mean_d = dxhat.mean_axis(Axis(1)).expect("non-empty rows");
    let mean_dx = (&dxhat * xhat).mean_axis(Axis(1)).expect("non-empty rows");
    let mut dx = dxhat - &mean_d.insert_axis(Axis(1)) - xhat * &mean_dx.insert_axis(Axis(1));
    dx *= &inv_std.view().insert_axis(Axis(1));
    dx
}

fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.map_inplace(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row.map_inplace(|v| *v /= sum);
    }
}

/// Two-class softmax.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

/// `-log softmax(logits)[label]`, computed stably.
pub fn cross_entropy(logits: [f64; 2], label: u8) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label as usize]
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    xhat1: Array2<f64>,
    inv_std1: Array1<f64>,
    n1: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_drop: Option<Array2<f64>>,
    xhat2: Array2<f64>,
    inv_std2: Array1<f64>,
}

/// Activations of one forward pass, kept for backpropagation.
pub struct Trace {
    ids: Vec<usize>,
    positions: Vec<usize>,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    hidden: Array2<f64>,
    logits: [f64; 2],
}

impl Trace {
    pub fn logits(&self) -> [f64; 2] {
        self.logits
    }

    /// Attention probabilities `(active, active)` of one head.
    pub fn attention(&self, layer: usize, head: usize) -> ArrayView2<'_, f64> {
        self.layers[layer].probs[head].view()
    }

    /// Final hidden states of the unmasked positions.
    pub fn hidden(&self) -> ArrayView2<'_, f64> {
        self.hidden.view()
    }

    /// Standardized (pre gain/bias) residual streams of one layer's two
    /// layer norms.
    pub fn normalized(&self, layer: usize) -> [ArrayView2<'_, f64>; 2] {
        let l = &self.layers[layer];
        [l.xhat1.view(), l.xhat2.view()]
    }

    /// Original position ids of the unmasked positions.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }
}

fn dropout_mask<R: Rng>(rng: &mut R, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < p { 0.0 } else { keep })
}

fn check_input(params: &EncoderParams, input: &TokenizedInput) -> Result<(Vec<usize>, Vec<usize>)> {
    let c = &params.config;
    let n = input.input_ids.len();
    if input.attention_mask.len() != n {
        return Err(Error::Dimension(format!(
            "{} input ids but {} mask entries",
            n,
            input.attention_mask.len()
        )));
    }
    if n > c.max_len {
        return Err(Error::Dimension(format!("sequence length {n} exceeds max_len {}", c.max_len)));
    }
    if input.attention_mask.first() != Some(&1) {
        return Err(Error::Dimension("position 0 must be unmasked".into()));
    }
    let mut ids = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for (pos, (&id, &m)) in input.input_ids.iter().zip(&input.attention_mask).enumerate() {
        match m {
            0 => {}
            1 => {
                if id as usize >= c.vocab_size {
                    return Err(Error::Dimension(format!(
                        "token id {id} out of range for vocabulary of {}",
                        c.vocab_size
                    )));
                }
                ids.push(id as usize);
                positions.push(pos);
            }
            other => return Err(Error::Dimension(format!("attention mask value {other}"))),
        }
    }
    Ok((ids, positions))
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn layer_forward<R: Rng>(
    p: &LayerParams,
    c: &EncoderConfig,
    input: Array2<f64>,
    mut dropout: Option<&mut R>,
) -> (Array2<f64>, LayerCache) {
    let len = input.nrows();
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(&input, &p.query, &p.query_bias);
    let k = affine(&input, &p.key, &p.key_bias);
    let v = affine(&input, &p.value, &p.value_bias);
    let mut context = Array2::zeros((len, c.d_model));
    let mut probs = Vec::with_capacity(c.num_heads);
    for h in 0..c.num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut a);
        context.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        probs.push(a);
    }
    let mut attn = affine(&context, &p.output, &p.output_bias);
    let attn_drop = dropout.as_deref_mut().map(|r| dropout_mask(r, attn.dim(), c.dropout_rate));
    if let Some(m) = &attn_drop {
        attn *= m;
    }
    let (xhat1, inv_std1) = standardize((&input + &attn).view());
    let n1 = &xhat1 * &p.ln1_gain + &p.ln1_bias;
    let ff_pre = affine(&n1, &p.ff1, &p.ff1_bias);
    let ff_act = ff_pre.mapv(gelu);
    let mut ff = affine(&ff_act, &p.ff2, &p.ff2_bias);
    let ff_drop = dropout.map(|r| dropout_mask(r, ff.dim(), c.dropout_rate));
    if let Some(m) = &ff_drop {
        ff *= m;
    }
    let (xhat2, inv_std2) = standardize((&n1 + &ff).view());
    let out = &xhat2 * &p.ln2_gain + &p.ln2_bias;
    let cache = LayerCache {
        input,
        q,
        k,
        v,
        probs,
        context,
        attn_drop,
        xhat1,
        inv_std1,
        n1,
        ff_pre,
        ff_act,
        ff_drop,
        xhat2,
        inv_std2,
    };
    (out, cache)
}

fn forward_impl(params: &EncoderParams, input: &TokenizedInput, dropout_seed: Option<u64>) -> Result<Trace> {
    let c = &params.config;
    let (ids, positions) = check_input(params, input)?;
    let mut rng = dropout_seed.filter(|_| c.dropout_rate > 0.0).map(rng::seeded);
    let mut h = Array2::zeros((ids.len(), c.d_model));
    for (mut row, (&id, &pos)) in h.rows_mut().into_iter().zip(ids.iter().zip(&positions)) {
        row.assign(&(&params.token_embedding.row(id) + &params.position_embedding.row(pos)));
    }
    let emb_drop = rng.as_mut().map(|r| dropout_mask(r, h.dim(), c.dropout_rate));
    if let Some(m) = &emb_drop {
        h *= m;
    }
    let mut layers = Vec::with_capacity(c.num_layers);
    for lp in &params.layers {
        let (out, cache) = layer_forward(lp, c, h, rng.as_mut());
        layers.push(cache);
        h = out;
    }
    let cls = h.row(0);
    let z = cls.dot(&params.head) + &params.head_bias;
    Ok(Trace {
        ids,
        positions,
        emb_drop,
        layers,
        logits: [z[0], z[1]],
        hidden: h,
    })
}

/// Single-sequence forward pass keeping all activations.
pub fn forward_trace(params: &EncoderParams, input: &TokenizedInput) -> Result<Trace> {
    forward_impl(params, input, None)
}

/// Logits `(batch, 2)`, evaluated in parallel.
pub fn forward(params: &EncoderParams, batch: &[TokenizedInput]) -> Result<Array2<f64>> {
    let rows: Vec<[f64; 2]> = batch
        .par_iter()
        .map(|x| forward_impl(params, x, None).map(|t| t.logits))
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((rows.len(), 2));
    for (mut r, z) in out.rows_mut().into_iter().zip(rows) {
        r[0] = z[0];
        r[1] = z[1];
    }
    Ok(out)
}

/// Positive-class probability of one input.
pub fn predict_proba(params: &EncoderParams, input: &TokenizedInput) -> Result<f64> {
    Ok(softmax2(forward_impl(params, input, None)?.logits)[1])
}

fn layer_backward(
    p: &LayerParams,
    c: &LayerCache,
    g: &mut LayerParams,
    dout: Array2<f64>,
    cfg: &EncoderConfig,
) -> Array2<f64> {
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(&dout, &c.xhat2, &c.inv_std2, &p.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
    let mut dff = dr2.clone();
    if let Some(m) = &c.ff_drop {
        dff *= m;
    }
    g.ff2 += &c.ff_act.t().dot(&dff);
    g.ff2_bias += &dff.sum_axis(Axis(0));
    let dpre = dff.dot(&p.ff2.t()) * c.ff_pre.mapv(gelu_grad);
    g.ff1 += &c.n1.t().dot(&dpre);
    g.ff1_bias += &dpre.sum_axis(Axis(0));
    let dn1 = dr2 + dpre.dot(&p.ff1.t());

    let dr1 = layer_norm_backward(&dn1, &c.xhat1, &c.inv_std1, &p.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
    let mut dattn = dr1.clone();
    if let Some(m) = &c.attn_drop {
        dattn *= m;
    }
    g.output += &c.context.t().dot(&dattn);
    g.output_bias += &dattn.sum_axis(Axis(0));
    let dcontext = dattn.dot(&p.output.t());

    let shape = c.q.dim();
    let mut dq = Array2::zeros(shape);
    let mut dk = Array2::zeros(shape);
    let mut dv = Array2::zeros(shape);
    for (h, a) in c.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dctx = dcontext.slice(cols);
        let da = dctx.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dctx));
        let row_dot = (&da * a).sum_axis(Axis(1));
        let ds = (da - &row_dot.insert_axis(Axis(1))) * a * scale;
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    let xt = c.input.t();
    g.query += &xt.dot(&dq);
    g.query_bias += &dq.sum_axis(Axis(0));
    g.key += &xt.dot(&dk);
    g.key_bias += &dk.sum_axis(Axis(0));
    g.value += &xt.dot(&dv);
    g.value_bias += &dv.sum_axis(Axis(0));
    dr1 + dq.dot(&p.query.t()) + dk.dot(&p.key.t()) + dv.dot(&p.value.t())
}

/// Adds `d loss / d params` to `grads`, given `d loss / d logits`.
fn backward(params: &EncoderParams, trace: &Trace, dlogits: [f64; 2], grads: &mut EncoderParams) {
    let cfg = &params.config;
    let cls = trace.hidden.row(0);
    for (j, &d) in dlogits.iter().enumerate() {
        grads.head_bias[j] += d;
        grads.head.column_mut(j).scaled_add(d, &cls);
    }
    let mut dh = Array2::zeros(trace.hidden.dim());
    dh.row_mut(0)
        .assign(&(&params.head.column(0) * dlogits[0] + &params.head.column(1) * dlogits[1]));
    for ((lp, lc), lg) in params
        .layers
        .iter()
        .zip(&trace.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        dh = layer_backward(lp, lc, lg, dh, cfg);
    }
    if let Some(m) = &trace.emb_drop {
        dh *= m;
    }
    for (row, (&id, &pos)) in dh.rows().into_iter().zip(trace.ids.iter().zip(&trace.positions)) {
        let mut t = grads.token_embedding.row_mut(id);
        t += &row;
        let mut p = grads.position_embedding.row_mut(pos);
        p += &row;
    }
}

fn label_of(input: &TokenizedInput) -> Result<u8> {
    match input.label {
        Some(l @ (0 | 1)) => Ok(l),
        Some(l) => Err(Error::invalid(format!("label {l} is not binary"))),
        None => Err(Error::invalid("loss needs labelled inputs")),
    }
}

/// Mean cross-entropy over `batch` and its gradient.
pub fn loss_and_grads(params: &EncoderParams, batch: &[TokenizedInput]) -> Result<(f64, EncoderParams)> {
    loss_and_grads_impl(params, batch, None)
}

/// As [`loss_and_grads`], with dropout active when `dropout_seed` is set.
/// Example `i` of the batch draws its masks from
/// `derive_seed(dropout_seed, i)`.
pub(crate) fn loss_and_grads_impl(
    params: &EncoderParams,
    batch: &[TokenizedInput],
    dropout_seed: Option<u64>,
) -> Result<(f64, EncoderParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = EncoderParams::zeros(&params.config)?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (i, x) in batch.iter().enumerate() {
        let label = label_of(x)?;
        let seed = dropout_seed.map(|s| rng::derive_seed(s, i as u64));
        let trace = forward_impl(params, x, seed)?;
        loss += cross_entropy(trace.logits, label);
        let p = softmax2(trace.logits);
        let mut d = [p[0] * scale, p[1] * scale];
        d[label as usize] -= scale;
        backward(params, &trace, d, &mut grads);
    }
    Ok((loss * scale, grads))
}

/// Mean cross-entropy and accuracy (argmax, ties positive) without
/// gradients, evaluated in parallel.
pub fn evaluate(params: &EncoderParams, batch: &[TokenizedInput]) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let per: Vec<(f64, bool)> = batch
        .par_iter()
        .map(|x| {
            let label = label_of(x)?;
            let z = forward_impl(params, x, None)?.logits;
            Ok((cross_entropy(z, label), (z[1] >= z[0]) as u8 == label))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}
