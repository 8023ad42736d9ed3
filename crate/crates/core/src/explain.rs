//! Local surrogate attribution of a score to the tokens of a response.
//!
//! Tokens are deleted at random, the score is recomputed on each variant, and
//! a kernel-weighted ridge regression of score on token presence gives one
//! weight per token.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    #[serde(default = "defaults::n_samples")]
    pub n_samples: usize,
    #[serde(default = "defaults::keep_prob")]
    pub keep_prob: f64,
    #[serde(default = "defaults::kernel_width")]
    pub kernel_width: f64,
    #[serde(default = "defaults::ridge_lambda")]
    pub ridge_lambda: f64,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Terms kept by [`aggregate_terms`].
    #[serde(default = "defaults::top_k")]
    pub top_k: usize,
}

mod defaults {
    pub fn n_samples() -> usize {
        200
    }
    pub fn keep_prob() -> f64 {
        0.7
    }
    pub fn kernel_width() -> f64 {
        0.25
    }
    pub fn ridge_lambda() -> f64 {
        0.01
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn top_k() -> usize {
        10
    }
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            n_samples: defaults::n_samples(),
            keep_prob: defaults::keep_prob(),
            kernel_width: defaults::kernel_width(),
            ridge_lambda: defaults::ridge_lambda(),
            seed: defaults::seed(),
            top_k: defaults::top_k(),
        }
    }
}

impl PerturbConfig {
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(format!("keep_prob must lie in (0, 1], got {}", self.keep_prob));
        }
        if self.n_samples < 2 {
            return Err("n_samples must be at least 2".into());
        }
        if !(self.kernel_width > 0.0) {
            return Err("kernel_width must be positive".into());
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err("ridge_lambda must be non-negative".into());
        }
        if self.top_k == 0 {
            return Err("top_k must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub fit_r2: f64,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '‘' | '’' | '“' | '”' | '…' | '–' | '—' | '«' | '»' | '¿' | '¡' | '·'
        )
}

/// Whitespace tokens with leading and trailing punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(is_punct))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// `n_samples` keep-masks; sample 0 keeps every token, the rest are
/// i.i.d. Bernoulli(keep_prob) per token.
pub fn perturb(n_tokens: usize, config: &PerturbConfig) -> Result<Vec<Vec<bool>>> {
    if n_tokens == 0 {
        return Err(Error::EmptyInput("tokens"));
    }
    config.check().map_err(|m| Error::config("lime", m))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut masks = Vec::with_capacity(config.n_samples);
    masks.push(vec![true; n_tokens]);
    for _ in 1..config.n_samples {
        masks.push((0..n_tokens).map(|_| rng.random_bool(config.keep_prob)).collect());
    }
    Ok(masks)
}

/// The kept tokens joined by single spaces.
pub fn masked_text(tokens: &[String], mask: &[bool]) -> String {
    tokens
        .iter()
        .zip(mask)
        .filter(|(_, keep)| **keep)
        .map(|(t, _)| t.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn kernel_weight(mask: &[bool], width: f64) -> f64 {
    let removed = mask.iter().filter(|k| !**k).count() as f64 / mask.len() as f64;
    (-(removed * removed) / (width * width)).exp()
}

/// Weighted ridge fit with an unpenalized intercept. Returns
/// (coefficients, intercept, weighted R²).
pub fn weighted_ridge(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> (DVector<f64>, f64, f64) {
    let (n, p) = x.shape();
    let w_sum = w.sum();
    let x_mean = DVector::from_fn(p, |j, _| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / w_sum);
    let y_mean = y.dot(w) / w_sum;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - x_mean[j]);
    let yc = y.map(|v| v - y_mean);
    let xtw = DMatrix::from_fn(p, n, |j, i| xc[(i, j)] * w[i]);
    let mut gram = &xtw * &xc;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = &xtw * &yc;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(p)),
    };
    let intercept = y_mean - x_mean.dot(&beta);
    let fitted = &xc * &beta;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        ss_res += w[i] * (yc[i] - fitted[i]).powi(2);
        ss_tot += w[i] * yc[i] * yc[i];
    }
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    (beta, intercept, r2)
}

/// Attribute `score_fn(text)` to the tokens of `text`.
pub fn lime_attribute<F>(text: &str, score_fn: F, config: &PerturbConfig) -> Result<Attribution>
where
    F: Fn(&str) -> Result<f64> + Sync,
{
    let tokens = tokenize(text);
    let masks = perturb(tokens.len(), config)?;
    if masks.iter().all(|m| m == &masks[0]) {
        return Err(Error::DegenerateDesign {
            keep_prob: config.keep_prob,
        });
    }

    let texts: Vec<String> = masks.iter().map(|m| masked_text(&tokens, m)).collect();
    let mut unique: Vec<&str> = texts.iter().map(String::as_str).collect();
    unique.sort_unstable();
    unique.dedup();
    let values: HashMap<&str, f64> = unique
        .par_iter()
        .map(|t| score_fn(t).map(|v| (*t, v)))
        .collect::<Result<_>>()?;

    let (n, p) = (masks.len(), tokens.len());
    let x = DMatrix::from_fn(n, p, |i, j| if masks[i][j] { 1.0 } else { 0.0 });
    let y = DVector::from_fn(n, |i, _| values[texts[i].as_str()]);
    let w = DVector::from_fn(n, |i, _| kernel_weight(&masks[i], config.kernel_width));
    let (beta, intercept, fit_r2) = weighted_ridge(&x, &y, &w, config.ridge_lambda);
    Ok(Attribution {
        tokens,
        weights: beta.iter().copied().collect(),
        intercept,
        fit_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub total: f64,
}

/// Rank lowercased terms by summed |weight|; ties go to the lexicographically
/// smaller term.
pub fn aggregate_terms(attributions: &[Attribution], k: usize) -> Vec<TermWeight> {
    let mut per_term: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for a in attributions {
        for (t, w) in a.tokens.iter().zip(&a.weights) {
            per_term.entry(t.to_lowercase()).or_default().push(w.abs());
        }
    }
    let mut ranked: Vec<TermWeight> = per_term
        .into_iter()
        .map(|(term, mut ws)| {
            // summing in sorted order makes the total independent of input order
            ws.sort_by(f64::total_cmp);
            TermWeight {
                term,
                total: ws.iter().sum(),
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.total.total_cmp(&a.total).then_with(|| a.term.cmp(&b.term)));
    ranked.truncate(k);
    ranked
}
