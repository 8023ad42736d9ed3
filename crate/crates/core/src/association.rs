//! WEAT-kernel association tests.
//!
//! Internally `d > 0` means targets_1 (X) sit closer to attributes_1 (A), the
//! stereotypical direction. Reported per-response scores flip the sign so that
//! positive means anti-stereotypical (see [`crate::scoring`]).

use std::fmt;

use itertools::Itertools;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{find_lexicon_mentions, IdentityClass, Mention};
use crate::embeddings::{cosine, Vector};
use crate::error::{Error, Result};

/// Spread below which an effect size is undefined.
pub const MIN_SPREAD: f64 = 1e-12;

/// Largest number of relabelings enumerated in exact mode: C(20, 10).
pub const EXACT_LIMIT: u128 = 184_756;

/// Tolerance used when counting relabelings whose statistic ties the observed one.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "CEAT")]
    Ceat,
    #[serde(rename = "I-WEAT")]
    IWeat,
    #[serde(rename = "I-SEAT")]
    ISeat,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Ceat, MetricKind::IWeat, MetricKind::ISeat];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ceat => "CEAT",
            MetricKind::IWeat => "I-WEAT",
            MetricKind::ISeat => "I-SEAT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "CEAT" => Some(MetricKind::Ceat),
            "I-WEAT" | "IWEAT" => Some(MetricKind::IWeat),
            "I-SEAT" | "ISEAT" => Some(MetricKind::ISeat),
            _ => None,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Target sets X, Y and attribute sets A (stereotypical), B (anti-stereotypical).
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSets {
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub a: Vec<Vector>,
    pub b: Vec<Vector>,
}

impl StimulusSets {
    pub fn new(x: Vec<Vector>, y: Vec<Vector>, a: Vec<Vector>, b: Vec<Vector>) -> Result<Self> {
        let sets = Self { x, y, a, b };
        sets.check()?;
        Ok(sets)
    }

    pub fn check(&self) -> Result<()> {
        for (name, set) in [("X", &self.x), ("Y", &self.y), ("A", &self.a), ("B", &self.b)] {
            if set.is_empty() {
                return Err(Error::EmptyInput(match name {
                    "X" => "target set X",
                    "Y" => "target set Y",
                    "A" => "attribute set A",
                    _ => "attribute set B",
                }));
            }
        }
        let dim = self.x[0].dim();
        for v in self.x.iter().chain(&self.y).chain(&self.a).chain(&self.b) {
            if v.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.dim(),
                    line: None,
                });
            }
        }
        Ok(())
    }

    pub fn swapped_targets(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }

    pub fn swapped_attributes(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    /// s(w, A, B) for every member of X and of Y.
    pub fn s_values(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check()?;
        let sx = self
            .x
            .iter()
            .map(|w| assoc_s(w, &self.a, &self.b))
            .collect::<Result<Vec<_>>>()?;
        let sy = self
            .y
            .iter()
            .map(|w| assoc_s(w, &self.a, &self.b))
            .collect::<Result<Vec<_>>>()?;
        Ok((sx, sy))
    }
}

fn mean_cos(w: &Vector, set: &[Vector]) -> Result<f64> {
    let mut sum = 0.0;
    for v in set {
        sum += cosine(w, v)?;
    }
    Ok(sum / set.len() as f64)
}

/// Differential association: mean cosine to A minus mean cosine to B.
pub fn assoc_s(w: &Vector, a: &[Vector], b: &[Vector]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyInput("attribute set A"));
    }
    if b.is_empty() {
        return Err(Error::EmptyInput("attribute set B"));
    }
    Ok(mean_cos(w, a)? - mean_cos(w, b)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub d: f64,
    pub n_x: usize,
    pub n_y: usize,
    /// (n_x + n_y) / (n_x n_y) + d^2 / (2 (n_x + n_y))
    pub var: f64,
}

impl EffectSize {
    pub fn with_d(d: f64, n_x: usize, n_y: usize) -> Self {
        let n = (n_x + n_y) as f64;
        let var = n / (n_x as f64 * n_y as f64) + d * d / (2.0 * n);
        Self { d, n_x, n_y, var }
    }
}

/// Effect size from precomputed association values.
///
/// `d = (mean(sx) - mean(sy)) / sigma`, sigma being the population standard
/// deviation over the pooled values. Sums are accumulated per side and then
/// combined, which makes swapping sides negate `d` exactly.
pub fn effect_size_from_s(sx: &[f64], sy: &[f64]) -> Result<EffectSize> {
    if sx.is_empty() {
        return Err(Error::EmptyInput("target set X"));
    }
    if sy.is_empty() {
        return Err(Error::EmptyInput("target set Y"));
    }
    let (n_x, n_y) = (sx.len(), sy.len());
    let n = (n_x + n_y) as f64;
    let sum_x: f64 = sx.iter().sum();
    let sum_y: f64 = sy.iter().sum();
    let pooled_mean = (sum_x + sum_y) / n;
    let ss_x: f64 = sx.iter().map(|s| (s - pooled_mean).powi(2)).sum();
    let ss_y: f64 = sy.iter().map(|s| (s - pooled_mean).powi(2)).sum();
    let sigma = ((ss_x + ss_y) / n).sqrt();
    if !(sigma >= MIN_SPREAD) {
        return Err(Error::DegenerateSpread { sigma });
    }
    let d = (sum_x / n_x as f64 - sum_y / n_y as f64) / sigma;
    Ok(EffectSize::with_d(d, n_x, n_y))
}

pub fn effect_size(sets: &StimulusSets) -> Result<EffectSize> {
    let (sx, sy) = sets.s_values()?;
    effect_size_from_s(&sx, &sy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Exact,
    Sampled { n: usize, seed: Option<u64> },
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn mean_difference(pool: &[f64], in_x: &[bool], n_x: usize, n_y: usize) -> f64 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (s, &x) in pool.iter().zip(in_x) {
        if x {
            sx += s;
        } else {
            sy += s;
        }
    }
    sx / n_x as f64 - sy / n_y as f64
}

/// One-sided permutation p-value of the mean-difference statistic over equal
/// size relabelings of X ∪ Y. The identity relabeling is always counted.
pub fn permutation_pvalue(sets: &StimulusSets, mode: PermutationMode) -> Result<f64> {
    let (sx, sy) = sets.s_values()?;
    permutation_pvalue_from_s(&sx, &sy, mode)
}

pub fn permutation_pvalue_from_s(sx: &[f64], sy: &[f64], mode: PermutationMode) -> Result<f64> {
    let (n_x, n_y) = (sx.len(), sy.len());
    if n_x == 0 || n_y == 0 {
        return Err(Error::EmptyInput("target set"));
    }
    let pool: Vec<f64> = sx.iter().chain(sy).copied().collect();
    let n = pool.len();
    let identity: Vec<bool> = (0..n).map(|i| i < n_x).collect();
    let observed = mean_difference(&pool, &identity, n_x, n_y);
    let threshold = observed - TIE_EPS;

    match mode {
        PermutationMode::Exact => {
            let count = binomial(n, n_x);
            if count > EXACT_LIMIT {
                return Err(Error::CombinatorialLimit {
                    count,
                    limit: EXACT_LIMIT,
                });
            }
            let mut hits = 0u64;
            let mut total = 0u64;
            let mut mask = vec![false; n];
            for combo in (0..n).combinations(n_x) {
                mask.iter_mut().for_each(|m| *m = false);
                for i in combo {
                    mask[i] = true;
                }
                if mean_difference(&pool, &mask, n_x, n_y) >= threshold {
                    hits += 1;
                }
                total += 1;
            }
            Ok(hits as f64 / total as f64)
        }
        PermutationMode::Sampled { n: samples, seed } => {
            let seed = seed.ok_or(Error::EmptyInput("seed for sampled permutation mode"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut hits = 1u64; // identity
            let mut mask = vec![false; n];
            for _ in 0..samples {
                mask.iter_mut().for_each(|m| *m = false);
                for i in index::sample(&mut rng, n, n_x) {
                    mask[i] = true;
                }
                if mean_difference(&pool, &mask, n_x, n_y) >= threshold {
                    hits += 1;
                }
            }
            Ok(hits as f64 / (samples as f64 + 1.0))
        }
    }
}

/// All lexicon mentions in `text`, or a seeded uniform sample of `max_n` of
/// them (without replacement), always in document order.
pub fn sample_contexts(text: &str, class: &IdentityClass, max_n: usize, seed: u64) -> Vec<Mention> {
    let mentions = find_lexicon_mentions(text, class);
    if mentions.len() <= max_n {
        return mentions;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, mentions.len(), max_n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| mentions[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedEffect {
    pub d_combined: f64,
    pub tau2: f64,
    pub k: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Weighted mean anchored at the first value, so equal inputs return that
/// value bit-for-bit.
fn anchored_weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let anchor = values[0];
    let wsum: f64 = weights.iter().sum();
    let shift: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - anchor))
        .sum();
    anchor + shift / wsum
}

/// DerSimonian–Laird random-effects combination.
pub fn ceat_combine(effects: &[EffectSize]) -> Result<CombinedEffect> {
    if effects.is_empty() {
        return Err(Error::EmptyInput("effects"));
    }
    let k = effects.len();
    let d: Vec<f64> = effects.iter().map(|e| e.d).collect();
    let w: Vec<f64> = effects.iter().map(|e| 1.0 / e.var).collect();
    let d_fixed = anchored_weighted_mean(&d, &w);
    let q: f64 = d
        .iter()
        .zip(&w)
        .map(|(di, wi)| wi * (di - d_fixed).powi(2))
        .sum();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let denom = sw - sw2 / sw;
    let tau2 = if k < 2 || denom <= 0.0 {
        0.0
    } else {
        ((q - (k as f64 - 1.0)) / denom).max(0.0)
    };
    let w_star: Vec<f64> = effects.iter().map(|e| 1.0 / (e.var + tau2)).collect();
    let d_combined = anchored_weighted_mean(&d, &w_star);
    let se = (1.0 / w_star.iter().sum::<f64>()).sqrt();
    Ok(CombinedEffect {
        d_combined,
        tau2,
        k,
        ci_low: d_combined - 1.96 * se,
        ci_high: d_combined + 1.96 * se,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    Raw,
    Half,
}

pub fn normalize_score(d: f64, mode: NormalizationMode) -> f64 {
    match mode {
        NormalizationMode::Raw => d,
        NormalizationMode::Half => d / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn hand_sets() -> StimulusSets {
        StimulusSets::new(
            vec![v(&[1.0, 0.0])],
            vec![v(&[0.0, 1.0])],
            vec![v(&[1.0, 0.0])],
            vec![v(&[0.0, 1.0])],
        )
        .unwrap()
    }

    #[test]
    fn assoc_examples() {
        let w = v(&[1.0, 0.0]);
        assert_eq!(assoc_s(&w, &[v(&[1.0, 0.0])], &[v(&[0.0, 1.0])]).unwrap(), 1.0);
        let set = vec![v(&[0.3, 0.4]), v(&[-1.0, 2.0])];
        assert_eq!(assoc_s(&v(&[0.2, 0.9]), &set, &set).unwrap(), 0.0);
        let a = vec![v(&[0.3, 0.4])];
        let b = vec![v(&[-1.0, 2.0]), v(&[5.0, 1.0])];
        let w = v(&[0.7, -0.1]);
        assert_eq!(assoc_s(&w, &a, &b).unwrap(), -assoc_s(&w, &b, &a).unwrap());
        assert!(matches!(assoc_s(&w, &[], &b), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn effect_hand_example() {
        let e = effect_size(&hand_sets()).unwrap();
        assert!((e.d - 2.0).abs() < 1e-12);
        assert_eq!((e.n_x, e.n_y), (1, 1));
        // var = 2/1 + 4/4
        assert!((e.var - 3.0).abs() < 1e-12);
    }

    #[test]
    fn effect_same_targets_is_zero_or_degenerate() {
        let x = vec![v(&[1.0, 0.2]), v(&[0.1, 0.9])];
        let sets = StimulusSets::new(x.clone(), x, vec![v(&[1.0, 0.0])], vec![v(&[0.0, 1.0])]).unwrap();
        assert_eq!(effect_size(&sets).unwrap().d, 0.0);
    }

    #[test]
    fn effect_degenerate_spread() {
        let x = vec![v(&[1.0, 0.0])];
        let sets = StimulusSets::new(x.clone(), x, vec![v(&[1.0, 0.0])], vec![v(&[0.0, 1.0])]).unwrap();
        assert!(matches!(effect_size(&sets), Err(Error::DegenerateSpread { .. })));
    }

    #[test]
    fn effect_antisymmetry_exact() {
        let s = hand_sets();
        let d = effect_size(&s).unwrap().d;
        assert_eq!(effect_size(&s.swapped_targets()).unwrap().d, -d);
        assert_eq!(effect_size(&s.swapped_attributes()).unwrap().d, -d);
    }

    #[test]
    fn permutation_one_vs_one() {
        let p = permutation_pvalue(&hand_sets(), PermutationMode::Exact).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn permutation_max_statistic() {
        // X strictly more associated than every Y member: only identity reaches it
        let sx = [3.0, 2.5, 2.0];
        let sy = [1.0, 0.5, 0.0];
        let p = permutation_pvalue_from_s(&sx, &sy, PermutationMode::Exact).unwrap();
        assert_eq!(p, 1.0 / 20.0);
    }

    #[test]
    fn permutation_limits_and_seed() {
        let sx: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let sy: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        assert!(matches!(
            permutation_pvalue_from_s(&sx, &sy, PermutationMode::Exact),
            Err(Error::CombinatorialLimit { .. })
        ));
        let ten: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(permutation_pvalue_from_s(&ten, &ten, PermutationMode::Exact).is_ok());
        assert!(permutation_pvalue_from_s(&sx, &sy, PermutationMode::Sampled { n: 10, seed: None }).is_err());
        let p = permutation_pvalue_from_s(&sx, &sy, PermutationMode::Sampled { n: 500, seed: Some(3) }).unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn permutation_identical_distributions_not_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sx: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sy: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = permutation_pvalue_from_s(&sx, &sy, PermutationMode::Sampled { n: 2000, seed: Some(42) }).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn combine_identical_and_single() {
        let e = EffectSize::with_d(0.37, 4, 5);
        let c = ceat_combine(&[e; 7]).unwrap();
        assert_eq!(c.d_combined, 0.37);
        assert_eq!(c.tau2, 0.0);
        assert_eq!(c.k, 7);
        let c1 = ceat_combine(&[e]).unwrap();
        assert_eq!(c1.d_combined, 0.37);
        assert_eq!(c1.tau2, 0.0);
        assert!(matches!(ceat_combine(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn combine_two_studies_by_hand() {
        // w = 2, 2; d_fixed = 0.6; Q = 2*0.04 + 2*0.04 = 0.16 < k-1 -> tau2 = 0
        let a = EffectSize { d: 0.4, n_x: 4, n_y: 4, var: 0.5 };
        let b = EffectSize { d: 0.8, n_x: 4, n_y: 4, var: 0.5 };
        let c = ceat_combine(&[a, b]).unwrap();
        assert!((c.d_combined - 0.6).abs() < 1e-12);
        assert_eq!(c.tau2, 0.0);
        let se = (1.0f64 / 4.0).sqrt();
        assert!((c.ci_low - (0.6 - 1.96 * se)).abs() < 1e-12);
    }

    #[test]
    fn normalize_modes() {
        assert_eq!(normalize_score(2.0, NormalizationMode::Half), 1.0);
        assert_eq!(normalize_score(-0.9, NormalizationMode::Half), -0.45);
        assert_eq!(normalize_score(0.123, NormalizationMode::Raw), 0.123);
    }

    #[test]
    fn metric_names() {
        for m in MetricKind::ALL {
            assert_eq!(MetricKind::parse(m.as_str()), Some(m));
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
    }
}
