use super::{TextEmbedder, Vector};
use crate::error::{Error, Result};
use crate::hash::{fnv1a64, SplitMix64};

/// Bit-exact pseudo-embedding of `token`.
///
/// The token's UTF-8 bytes are hashed with FNV-1a-64, the hash seeds a
/// SplitMix64 stream, and each component is `2 * ((z >> 11) * 2^-53) - 1`.
/// The result is L2-normalized; a norm below 1e-12 yields the basis vector e1.
pub fn deterministic_embed(token: &str, dim: usize) -> Result<Vector> {
    if dim < 2 {
        return Err(Error::InvalidDim(dim));
    }
    if token.is_empty() {
        return Err(Error::EmptyInput("token"));
    }
    let raw = raw_components(token, dim);
    let mut sq = 0.0;
    for c in &raw {
        sq += c * c;
    }
    let norm = sq.sqrt();
    if norm < 1e-12 {
        let mut e1 = vec![0.0; dim];
        e1[0] = 1.0;
        return Vector::new(e1);
    }
    Vector::new(raw.into_iter().map(|c| c / norm).collect())
}

/// Raw (pre-normalization) components, for distribution checks.
pub(crate) fn raw_components(token: &str, dim: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()));
    (0..dim).map(|_| 2.0 * rng.next_unit() - 1.0).collect()
}

#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl TextEmbedder for DeterministicEmbedder {
    fn id(&self) -> String {
        format!("deterministic/fnv-splitmix-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vector>> {
        texts
            .iter()
            .map(|t| deterministic_embed(t, self.dim))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let a = deterministic_embed("elite", 64).unwrap();
        let b = deterministic_embed("elite", 64).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_ne!(a, deterministic_embed("Elite", 64).unwrap());
    }

    #[test]
    fn invalid_dim() {
        assert!(matches!(deterministic_embed("x", 1), Err(Error::InvalidDim(1))));
        assert!(matches!(deterministic_embed("x", 0), Err(Error::InvalidDim(0))));
    }

    #[test]
    fn component_mean_near_zero() {
        // 10,000 seeded tokens at dim 64; per-component mean before normalization
        let mut g = SplitMix64::new(2024);
        let mut sums = vec![0.0; 64];
        let n = 10_000;
        for _ in 0..n {
            let tok = format!("tok{:016x}", g.next_u64());
            for (s, c) in sums.iter_mut().zip(raw_components(&tok, 64)) {
                *s += c;
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let mean = s / n as f64;
            assert!(mean.abs() < 0.05, "component {i} mean {mean}");
        }
    }
}
