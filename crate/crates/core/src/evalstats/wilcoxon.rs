use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest non-zero difference count that uses the exact null.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `a` tends to exceed `b`.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Auto,
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    /// W+, the rank sum of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub n_effective: usize,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum WilcoxonError {
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty samples")]
    Empty,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alt: Alternative) -> Result<StatResult, WilcoxonError> {
    wilcoxon_with(a, b, alt, Method::Auto)
}

/// Zero differences are dropped. With none left the result is
/// `p = 1, W+ = 0`.
pub fn wilcoxon_with(a: &[f64], b: &[f64], alt: Alternative, method: Method) -> Result<StatResult, WilcoxonError> {
    if a.len() != b.len() {
        return Err(WilcoxonError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(WilcoxonError::Empty);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    let method = match method {
        Method::Auto if n <= EXACT_MAX_N => Method::Exact,
        Method::Auto => Method::NormalApproximation,
        m => m,
    };
    if n == 0 {
        return Ok(StatResult {
            statistic: 0.0,
            p_value: 1.0,
            method,
            n_effective: 0,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let p = match method {
        Method::Exact => exact_p(&ranks, w_plus, alt),
        _ => normal_p(&abs, &ranks, w_plus, alt),
    };
    Ok(StatResult {
        statistic: w_plus,
        p_value: p.clamp(0.0, 1.0),
        method,
        n_effective: n,
    })
}

/// Null distribution of W+ by dynamic programming over doubled ranks
/// (average ranks are multiples of 1/2).
fn exact_p(ranks: &[f64], w_plus: f64, alt: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w = (w_plus * 2.0).round() as usize;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    match alt {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
}

fn normal_p(abs: &[f64], ranks: &[f64], w_plus: f64, alt: Alternative) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    match alt {
        Alternative::Greater => std.sf((w_plus - mean - 0.5) / sd),
        Alternative::Less => std.cdf((w_plus - mean + 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * std.sf(z)).min(1.0)
        }
    }
}
