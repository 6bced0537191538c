//! Straight-line transformer recomputation used as an oracle.
//!
//! Recomputes every position from scratch (no cache), reads weights by
//! tensor name, and uses its own sinusoid, norm, softmax and erf code.

#![allow(dead_code)]

use std::collections::HashMap;

use loads_core::nanoformer::{Activation, ModelConfig, Positions, WeightContainer};

pub struct RefModel {
    pub cfg: ModelConfig,
    w: HashMap<String, Vec<f64>>,
}

/// Values at the last position, per layer.
pub struct RefLayer {
    pub ffn_input: Vec<f64>,
    pub activation: Vec<f64>,
    pub hidden: Vec<f64>,
}

pub struct RefRun {
    pub layers: Vec<RefLayer>,
    /// `keys[position][layer]`, all heads concatenated.
    pub keys: Vec<Vec<Vec<f64>>>,
    /// Logits at every position.
    pub logits: Vec<Vec<f64>>,
}

fn act(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Silu => x * (1.0 / (1.0 + (-x).exp())),
        Activation::Gelu => 0.5 * x * (1.0 + statrs::function::erf::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
    }
}

impl RefModel {
    pub fn new(c: &WeightContainer) -> Self {
        let w = c
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.data.iter().map(|&x| x as f64).collect()))
            .collect();
        RefModel {
            cfg: c.config.clone(),
            w,
        }
    }

    fn t(&self, name: &str) -> &[f64] {
        &self.w[name]
    }

    /// `x[rows][k] · w[k][cols]` with `w` stored row-major.
    fn mm(x: &[Vec<f64>], w: &[f64], cols: usize) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                (0..cols)
                    .map(|j| row.iter().enumerate().map(|(k, v)| v * w[k * cols + j]).sum())
                    .collect()
            })
            .collect()
    }

    fn norm(x: &[Vec<f64>], g: &[f64], eps: f64) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64 + eps).sqrt();
                row.iter().zip(g).map(|(v, gi)| v / rms * gi).collect()
            })
            .collect()
    }

    /// Final norm and output head applied to one residual state.
    pub fn project(&self, hidden: &[f64]) -> Vec<f64> {
        let h = Self::norm(&[hidden.to_vec()], self.t("final_norm"), self.cfg.norm_eps);
        Self::mm(&h, self.t("output"), self.cfg.vocab_size).remove(0)
    }

    pub fn run(&self, tokens: &[u32]) -> RefRun {
        let c = &self.cfg;
        let (d, nh) = (c.d_model, c.n_heads);
        let dh = d / nh;
        let n = tokens.len();
        let emb = self.t("tok_embeddings");
        let mut x: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(p, &tok)| {
                (0..d)
                    .map(|j| {
                        let e = emb[tok as usize * d + j];
                        if c.positions == Positions::None {
                            return e;
                        }
                        let i = (j / 2) as f64;
                        let freq = (-(10000f64.ln()) * 2.0 * i / d as f64).exp();
                        let a = p as f64 * freq;
                        e + if j % 2 == 0 { a.sin() } else { a.cos() }
                    })
                    .collect()
            })
            .collect();
        let mut layers = Vec::new();
        let mut keys = vec![Vec::new(); n];
        for l in 0..c.n_layers {
            let name = |s: &str| format!("layers.{l}.{s}");
            let a = Self::norm(&x, self.t(&name("attn_norm")), c.norm_eps);
            let q = Self::mm(&a, self.t(&name("wq")), d);
            let k = Self::mm(&a, self.t(&name("wk")), d);
            let v = Self::mm(&a, self.t(&name("wv")), d);
            for p in 0..n {
                keys[p].push(k[p].clone());
            }
            let mut att = vec![vec![0.0; d]; n];
            for t in 0..n {
                for h in 0..nh {
                    let r = h * dh..(h + 1) * dh;
                    let s: Vec<f64> = (0..=t)
                        .map(|u| {
                            q[t][r.clone()].iter().zip(&k[u][r.clone()]).map(|(a, b)| a * b).sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    let m = s.iter().cloned().fold(f64::MIN, f64::max);
                    let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
                    for (u, sv) in s.iter().enumerate() {
                        let wgt = (sv - m).exp() / z;
                        for j in r.clone() {
                            att[t][j] += wgt * v[u][j];
                        }
                    }
                }
            }
            let o = Self::mm(&att, self.t(&name("wo")), d);
            for t in 0..n {
                for j in 0..d {
                    x[t][j] += o[t][j];
                }
            }
            let ht = Self::norm(&x, self.t(&name("ffn_norm")), c.norm_eps);
            let pre = Self::mm(&ht, self.t(&name("w1")), c.d_ff);
            let gate = Self::mm(&ht, self.t(&name("w3")), c.d_ff);
            let actv: Vec<Vec<f64>> = pre
                .iter()
                .map(|r| r.iter().map(|&z| act(c.act_fn, z)).collect())
                .collect();
            let mixed: Vec<Vec<f64>> = actv
                .iter()
                .zip(&gate)
                .map(|(a, g)| a.iter().zip(g).map(|(x, y)| x * y).collect())
                .collect();
            let f = Self::mm(&mixed, self.t(&name("w2")), d);
            for t in 0..n {
                for j in 0..d {
                    x[t][j] += f[t][j];
                }
            }
            layers.push(RefLayer {
                ffn_input: ht[n - 1].clone(),
                activation: actv[n - 1].clone(),
                hidden: x[n - 1].clone(),
            });
        }
        let logits = x.iter().map(|row| self.project(row)).collect();
        RefRun { layers, keys, logits }
    }
}

/// Naive two-pass population kurtosis.
pub fn naive_kurtosis(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cosine similarity from norms and products computed separately.
pub fn dot_free_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum()
}
