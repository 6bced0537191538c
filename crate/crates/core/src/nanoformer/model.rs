use libm::erf;

use super::{ModelConfig, Positions, TokenId, Tokenizer, WeightContainer};
use crate::backend::{argmax_lowest, log_softmax, Backend, GenerationTrace, StepRecord, TapFlags};
use crate::{Error, Result};

/// `x · sigmoid(x)`
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Exact GELU, `0.5 · x · (1 + erf(x / √2))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone)]
struct Layer {
    attn_norm: Vec<f64>,
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
    wo: Vec<f64>,
    ffn_norm: Vec<f64>,
    w1: Vec<f64>,
    w3: Vec<f64>,
    w2: Vec<f64>,
}

/// Output of one gated FFN block.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnOutput {
    /// `(activation ⊗ h̃ W3) W2`, length `d_model`.
    pub output: Vec<f64>,
    /// `act_fn(h̃ W1)`, length `d_ff`.
    pub activation: Vec<f64>,
}

/// What one layer saw and produced at a single position.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTap {
    /// Normalised FFN input `h̃`.
    pub ffn_input: Vec<f64>,
    /// `act_fn(h̃ W1)`.
    pub activation: Vec<f64>,
    /// Residual stream after the layer.
    pub hidden: Vec<f64>,
    /// Key vector per head.
    pub keys: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTaps {
    pub layers: Vec<LayerTap>,
}

/// Per-call key/value cache; `k[layer]` holds `position * d_model` values.
struct Cache {
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Cache {
    fn new(n_layers: usize) -> Self {
        Cache {
            k: vec![Vec::new(); n_layers],
            v: vec![Vec::new(); n_layers],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Nanoformer {
    config: ModelConfig,
    tokenizer: Tokenizer,
    embed: Vec<f64>,
    layers: Vec<Layer>,
    final_norm: Vec<f64>,
    output: Vec<f64>,
}

fn widen(c: &WeightContainer, name: &str) -> Vec<f64> {
    c.tensor(name)
        .expect("validated container")
        .data
        .iter()
        .map(|&x| f64::from(x))
        .collect()
}

fn matvec(x: &[f64], w: &[f64], d_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; d_out];
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * d_out..(i + 1) * d_out];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    out
}

fn rms_norm(x: &[f64], gain: &[f64], eps: f64) -> Vec<f64> {
    let mut ss = 0.0;
    for &v in x {
        ss += v * v;
    }
    let scale = 1.0 / (ss / x.len() as f64 + eps).sqrt();
    x.iter().zip(gain).map(|(&v, &g)| v * scale * g).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Sinusoidal encoding: `sin(p / 10000^(2i/d))` at even and `cos` at odd indices.
fn position_encoding(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Softmax with max subtraction; rows sum to one up to rounding.
pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let mut total = 0.0;
    for &e in &exps {
        total += e;
    }
    exps.into_iter().map(|e| e / total).collect()
}

impl Nanoformer {
    pub fn new(container: &WeightContainer, tokenizer: Tokenizer) -> Result<Self> {
        container.validate()?;
        let config = container.config.clone();
        if tokenizer.vocab_size() != config.vocab_size {
            return Err(Error::Container(format!(
                "vocabulary has {} tokens but the model expects {}",
                tokenizer.vocab_size(),
                config.vocab_size
            )));
        }
        let layers = (0..config.n_layers)
            .map(|i| {
                let p = |s: &str| widen(container, &format!("layers.{i}.{s}"));
                Layer {
                    attn_norm: p("attn_norm"),
                    wq: p("wq"),
                    wk: p("wk"),
                    wv: p("wv"),
                    wo: p("wo"),
                    ffn_norm: p("ffn_norm"),
                    w1: p("w1"),
                    w3: p("w3"),
                    w2: p("w2"),
                }
            })
            .collect();
        Ok(Nanoformer {
            embed: widen(container, "tok_embeddings"),
            final_norm: widen(container, "final_norm"),
            output: widen(container, "output"),
            layers,
            config,
            tokenizer,
        })
    }

    pub fn load(weights: impl AsRef<std::path::Path>, vocab: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::new(&WeightContainer::load(weights)?, Tokenizer::load(vocab)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// The gated FFN of `layer` applied to a normalised input `h̃`.
    pub fn ffn_forward(&self, layer: usize, h_tilde: &[f64]) -> Result<FfnOutput> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::Backend(format!("layer {layer} out of range")))?;
        if h_tilde.len() != self.config.d_model {
            return Err(Error::LengthMismatch(h_tilde.len(), self.config.d_model));
        }
        Ok(self.ffn(l, h_tilde))
    }

    fn ffn(&self, l: &Layer, h_tilde: &[f64]) -> FfnOutput {
        let d_ff = self.config.d_ff;
        let act = self.config.act_fn;
        let activation: Vec<f64> = matvec(h_tilde, &l.w1, d_ff)
            .into_iter()
            .map(|x| act.apply(x))
            .collect();
        let gate = matvec(h_tilde, &l.w3, d_ff);
        let mixed: Vec<f64> = activation.iter().zip(&gate).map(|(a, g)| a * g).collect();
        FfnOutput {
            output: matvec(&mixed, &l.w2, self.config.d_model),
            activation,
        }
    }

    /// Feeds `token` at `pos`, extending the cache; returns the final residual
    /// state and, if `record`, per-layer taps.
    fn advance(&self, cache: &mut Cache, token: TokenId, pos: usize, record: bool) -> (Vec<f64>, Vec<LayerTap>) {
        let c = &self.config;
        let (d, dh) = (c.d_model, c.d_head());
        let row = token as usize * d;
        let mut x: Vec<f64> = self.embed[row..row + d].to_vec();
        if c.positions == Positions::Sinusoidal {
            for (xi, pe) in x.iter_mut().zip(position_encoding(pos, d)) {
                *xi += pe;
            }
        }
        let scale = 1.0 / (dh as f64).sqrt();
        let mut taps = Vec::new();
        for (li, l) in self.layers.iter().enumerate() {
            let a = rms_norm(&x, &l.attn_norm, c.norm_eps);
            let q = matvec(&a, &l.wq, d);
            let k = matvec(&a, &l.wk, d);
            let v = matvec(&a, &l.wv, d);
            cache.k[li].extend_from_slice(&k);
            cache.v[li].extend_from_slice(&v);
            let n_pos = pos + 1;
            let mut attn = vec![0.0; d];
            for h in 0..c.n_heads {
                let qh = &q[h * dh..(h + 1) * dh];
                let scores: Vec<f64> = (0..n_pos)
                    .map(|t| dot(qh, &cache.k[li][t * d + h * dh..t * d + (h + 1) * dh]) * scale)
                    .collect();
                let probs = softmax(&scores);
                for (t, &p) in probs.iter().enumerate() {
                    let vt = &cache.v[li][t * d + h * dh..t * d + (h + 1) * dh];
                    for (o, &vv) in attn[h * dh..(h + 1) * dh].iter_mut().zip(vt) {
                        *o += p * vv;
                    }
                }
            }
            let o = matvec(&attn, &l.wo, d);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += oi;
            }
            let h_tilde = rms_norm(&x, &l.ffn_norm, c.norm_eps);
            let ffn = self.ffn(l, &h_tilde);
            for (xi, fi) in x.iter_mut().zip(&ffn.output) {
                *xi += fi;
            }
            if record {
                taps.push(LayerTap {
                    ffn_input: h_tilde,
                    activation: ffn.activation,
                    hidden: x.clone(),
                    keys: k.chunks(dh).map(<[f64]>::to_vec).collect(),
                });
            }
        }
        (x, taps)
    }

    fn logits_from_residual(&self, x: &[f64]) -> Vec<f64> {
        let normed = rms_norm(x, &self.final_norm, self.config.norm_eps);
        matvec(&normed, &self.output, self.config.vocab_size)
    }

    fn check_context(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Backend("empty token context".into()));
        }
        if tokens.len() > self.config.max_context {
            return Err(Error::ContextOverflow {
                len: tokens.len(),
                max: self.config.max_context,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::UnknownToken(bad));
        }
        Ok(())
    }

    /// Logits and taps at the last position of `context`.
    pub fn forward_step(&self, context: &[TokenId]) -> Result<(Vec<f64>, ForwardTaps)> {
        self.check_context(context)?;
        let mut cache = Cache::new(self.config.n_layers);
        let mut last = None;
        for (p, &t) in context.iter().enumerate() {
            last = Some(self.advance(&mut cache, t, p, p + 1 == context.len()));
        }
        let (x, layers) = last.expect("nonempty context");
        Ok((self.logits_from_residual(&x), ForwardTaps { layers }))
    }

    /// Logits at every position of `context`.
    pub fn forward_all(&self, context: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        self.check_context(context)?;
        let mut cache = Cache::new(self.config.n_layers);
        Ok(context
            .iter()
            .enumerate()
            .map(|(p, &t)| {
                let (x, _) = self.advance(&mut cache, t, p, false);
                self.logits_from_residual(&x)
            })
            .collect())
    }

    fn step_record(&self, x: &[f64], layers: &[LayerTap], taps: TapFlags) -> StepRecord {
        let logprobs = log_softmax(&self.logits_from_residual(x));
        let chosen = argmax_lowest(&logprobs) as TokenId;
        StepRecord {
            chosen_token_id: chosen,
            logprobs,
            ffn_activation: taps
                .ffn
                .then(|| layers.last().expect("at least one layer").activation.clone()),
            per_layer_hidden: taps
                .hidden
                .then(|| layers.iter().map(|l| l.hidden.clone()).collect()),
            key_vectors: taps
                .keys
                .then(|| layers.iter().map(|l| l.keys.clone()).collect()),
        }
    }
}

impl Backend for Nanoformer {
    fn name(&self) -> &str {
        "nanoformer"
    }

    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn supported_taps(&self) -> TapFlags {
        TapFlags::ALL
    }

    fn generate_greedy(&self, prompt: &str, max_tokens: usize, taps: TapFlags) -> Result<GenerationTrace> {
        if max_tokens == 0 {
            return Err(Error::Backend("max_tokens must be at least 1".into()));
        }
        let ids = self.tokenizer.encode(prompt);
        self.check_context(&ids)?;
        let c = &self.config;
        let mut cache = Cache::new(c.n_layers);
        let mut last = None;
        for (p, &t) in ids.iter().enumerate() {
            last = Some(self.advance(&mut cache, t, p, p + 1 == ids.len()));
        }
        let prompt_keys = taps.keys.then(|| {
            let (d, dh) = (c.d_model, c.d_head());
            (0..ids.len())
                .map(|p| {
                    cache
                        .k
                        .iter()
                        .map(|k| k[p * d..(p + 1) * d].chunks(dh).map(<[f64]>::to_vec).collect())
                        .collect()
                })
                .collect()
        });

        let mut steps = Vec::new();
        let mut pos = ids.len();
        let (mut x, mut layers) = last.expect("nonempty prompt");
        loop {
            let step = self.step_record(&x, &layers, taps);
            let chosen = step.chosen_token_id;
            steps.push(step);
            if chosen == self.tokenizer.eos_id() || steps.len() == max_tokens || pos >= c.max_context {
                break;
            }
            (x, layers) = self.advance(&mut cache, chosen, pos, true);
            pos += 1;
        }
        let chosen: Vec<TokenId> = steps.iter().map(|s| s.chosen_token_id).collect();
        Ok(GenerationTrace {
            prompt_token_ids: ids,
            generated_text: self.tokenizer.decode(&chosen),
            steps,
            prompt_keys,
        })
    }

    fn sequence_perplexity(&self, text: &str) -> Result<f64> {
        let ids = self.tokenizer.encode(text);
        if ids.len() < 2 {
            return Err(Error::Backend(format!(
                "perplexity needs at least 2 tokens, text has {}",
                ids.len()
            )));
        }
        self.check_context(&ids)?;
        let mut cache = Cache::new(self.config.n_layers);
        let mut nll = 0.0;
        for p in 0..ids.len() - 1 {
            let (x, _) = self.advance(&mut cache, ids[p], p, false);
            let lp = log_softmax(&self.logits_from_residual(&x));
            nll -= lp[ids[p + 1] as usize];
        }
        Ok((nll / (ids.len() - 1) as f64).exp())
    }

    fn lens_logprobs(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        if hidden.len() != self.config.d_model {
            return Err(Error::LengthMismatch(hidden.len(), self.config.d_model));
        }
        Ok(log_softmax(&self.logits_from_residual(hidden)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nanoformer::{init_random, Activation};

    fn identity_model(act: Activation) -> Nanoformer {
        let tok = Tokenizer::with_pieces(Vec::<String>::new()).unwrap();
        let cfg = ModelConfig {
            vocab_size: tok.vocab_size(),
            d_model: 2,
            n_layers: 1,
            n_heads: 1,
            d_ff: 2,
            act_fn: act,
            max_context: 8,
            positions: Positions::Sinusoidal,
            norm_eps: 1e-6,
        };
        let mut c = init_random(&cfg, 0).unwrap();
        for name in ["layers.0.w1", "layers.0.w2", "layers.0.w3"] {
            c.tensor_mut(name).unwrap().data = vec![1.0, 0.0, 0.0, 1.0];
        }
        Nanoformer::new(&c, tok).unwrap()
    }

    #[test]
    fn ffn_identity_weights_silu() {
        let m = identity_model(Activation::Silu);
        let out = m.ffn_forward(0, &[1.0, 0.0]).unwrap();
        // silu(1) = 1/(1+e^-1), silu(0) = 0
        assert!((out.activation[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(out.activation[1], 0.0);
        assert!((out.output[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(out.output[1], 0.0);
    }

    #[test]
    fn ffn_identity_weights_gelu() {
        let m = identity_model(Activation::Gelu);
        let out = m.ffn_forward(0, &[1.0, 0.0]).unwrap();
        // 0.5 * (1 + erf(1/sqrt 2)) = 0.8413447460685429
        assert!((out.activation[0] - 0.841_344_746_068_542_9).abs() < 1e-12, "{}", out.activation[0]);
        assert_eq!(out.activation[1], 0.0);
    }

    #[test]
    fn ffn_zero_input() {
        let m = identity_model(Activation::Silu);
        let out = m.ffn_forward(0, &[0.0, 0.0]).unwrap();
        assert_eq!(out.activation, vec![0.0, 0.0]);
        assert_eq!(out.output, vec![0.0, 0.0]);
        assert!(m.ffn_forward(1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn attention_softmax_rows_sum_to_one() {
        for scores in [vec![0.0], vec![1.0, 2.0, 3.0], vec![-50.0, 700.0, 0.1, 0.1]] {
            let p = softmax(&scores);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
