//! Kurtosis of activation vectors and Spearman rank correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::backend::GenerationTrace;
use crate::{Error, Result};

/// Pearson kurtosis with population moments, `m4 / m2²`.
///
/// Two passes in index order: the mean first, then central moments.
pub fn kurtosis(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(Error::TooFewValues(v.len()));
    }
    let n = v.len() as f64;
    let mut sum = 0.0;
    for &x in v {
        sum += x;
    }
    let mean = sum / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 || !m2.is_finite() {
        return Err(Error::ZeroVariance);
    }
    Ok(m4 / (m2 * m2))
}

/// Kurtosis of each trace's first-step FFN activation.
///
/// `ids[i]` names the sample behind `traces[i]` in error messages.
pub fn per_sample_kurtosis(traces: &[GenerationTrace], ids: &[String]) -> Result<Vec<f64>> {
    if traces.len() != ids.len() {
        return Err(Error::LengthMismatch(traces.len(), ids.len()));
    }
    traces
        .iter()
        .zip(ids)
        .map(|(t, id)| {
            t.first_ffn_activation()
                .and_then(kurtosis)
                .map_err(|e| Error::at_example(id, e))
        })
        .collect()
}

/// Mean of [`per_sample_kurtosis`].
pub fn mean_kurtosis(traces: &[GenerationTrace], ids: &[String]) -> Result<f64> {
    mean(&per_sample_kurtosis(traces, ids)?)
}

/// Arithmetic mean summed in ascending value order, so any permutation of
/// the same values gives the same bits.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewValues(0));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut s = 0.0;
    for v in sorted {
        s += v;
    }
    Ok(s / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleKurtosis {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetKurtosis {
    pub words: Vec<String>,
    pub mean_kurtosis: f64,
    /// 1 = lowest mean.
    pub rank: usize,
    pub per_sample: Vec<SampleKurtosis>,
}

/// Per-set kurtosis in pool order plus the ascending ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisReport {
    pub sets: Vec<SetKurtosis>,
    /// Indices into `sets`, best first.
    pub ranking: Vec<usize>,
}

impl KurtosisReport {
    /// Builds the report from `(words, per-sample values)` in pool order.
    /// Equal means keep pool order.
    pub fn new(entries: Vec<(Vec<String>, Vec<SampleKurtosis>)>) -> Result<Self> {
        let mut sets = entries
            .into_iter()
            .map(|(words, per_sample)| {
                let values: Vec<f64> = per_sample.iter().map(|s| s.value).collect();
                Ok(SetKurtosis {
                    words,
                    mean_kurtosis: mean(&values)?,
                    rank: 0,
                    per_sample,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ranking: Vec<usize> = (0..sets.len()).collect();
        ranking.sort_by(|&a, &b| sets[a].mean_kurtosis.total_cmp(&sets[b].mean_kurtosis));
        for (r, &i) in ranking.iter().enumerate() {
            sets[i].rank = r + 1;
        }
        Ok(KurtosisReport { sets, ranking })
    }

    pub fn best(&self) -> Option<&SetKurtosis> {
        self.ranking.first().map(|&i| &self.sets[i])
    }

    pub fn ranked(&self) -> impl Iterator<Item = &SetKurtosis> {
        self.ranking.iter().map(|&i| &self.sets[i])
    }
}

/// 1-based ranks; tied values share the average of their positions.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - m).collect();
    let ss = c.iter().map(|x| x * x).sum();
    (c, ss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// Largest sample size whose p-value is computed by full enumeration.
pub const EXACT_P_MAX_N: usize = 10;

/// Spearman's rho on midranks with a two-sided p-value.
///
/// For `n <= 10` the p-value is the share of all `n!` rearrangements of the
/// `xs` ranks whose |rho| reaches the observed one. Larger samples use the
/// Student-t approximation with `n - 2` degrees of freedom; a perfect
/// correlation there yields `p = 0`.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFewValues(n));
    }
    let (a, saa) = centered(&midranks(xs));
    let (b, sbb) = centered(&midranks(ys));
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("correlation of a constant sequence".into()));
    }
    let denom = (saa * sbb).sqrt();
    let dot = |p: &[f64]| p.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
    let rho = (dot(&a) / denom).clamp(-1.0, 1.0);
    let p = if n <= EXACT_P_MAX_N {
        exact_p(&a, |perm| dot(perm) / denom, rho)
    } else {
        t_approx_p(rho, n)
    };
    Ok(Correlation { rho, p, n })
}

fn exact_p(ranks: &[f64], rho_of: impl Fn(&[f64]) -> f64, observed: f64) -> f64 {
    let threshold = observed.abs() - 1e-12;
    let mut perm = ranks.to_vec();
    let n = perm.len();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut visit = |p: &[f64]| {
        total += 1;
        if rho_of(p).abs() >= threshold {
            hits += 1;
        }
    };
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            perm.swap(j, i);
            visit(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

fn t_approx_p(rho: f64, n: usize) -> f64 {
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}
