//! String and vector similarity used by synonym candidate generation.

use alloc::vec;
use alloc::vec::Vec;

use crate::normalize::NameNormalizer;
use crate::provider::{Embedder, ProviderError};

/// Jaro similarity over Unicode scalar values.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_hit = vec![false; a.len()];
    let mut b_hit = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_hit[j] && b[j] == *ca {
                a_hit[i] = true;
                b_hit[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let mut transpositions = 0usize;
    let mut k = 0;
    for (i, ca) in a.iter().enumerate() {
        if !a_hit[i] {
            continue;
        }
        while !b_hit[k] {
            k += 1;
        }
        if *ca != b[k] {
            transpositions += 1;
        }
        k += 1;
    }
    let m = matches as f64;
    let t = (transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler with prefix scale 0.1 over at most 4 characters, applied
/// when the Jaro score exceeds 0.7.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    if j <= 0.7 {
        return j;
    }
    let prefix = a
        .chars()
        .zip(b.chars())
        .take(4)
        .take_while(|(x, y)| x == y)
        .count() as f64;
    j + prefix * 0.1 * (1.0 - j)
}

/// Name similarity in `[0, 1]`: Jaro-Winkler over normalized name keys,
/// maximized over every alias pair of the two entities.
pub fn name_similarity<A: AsRef<str>, B: AsRef<str>>(
    normalizer: &NameNormalizer,
    a: &[A],
    b: &[B],
) -> f64 {
    let kb: Vec<_> = b.iter().map(|n| normalizer.key(n.as_ref())).collect();
    a.iter()
        .map(|n| normalizer.key(n.as_ref()))
        .flat_map(|ka| {
            kb.iter()
                .map(move |k| jaro_winkler(&ka, k))
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Deterministic offline embedder: character trigrams of the padded name key,
/// FNV-hashed into `dim` buckets.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dim: usize,
    normalizer: NameNormalizer,
}

impl TrigramEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        TrigramEmbedder {
            dim: dim.max(1),
            normalizer: NameNormalizer::default(),
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        use core::hash::Hasher;
        let key = self.normalizer.key(text);
        let mut padded: Vec<char> = vec![' ', ' '];
        padded.extend(key.chars());
        padded.push(' ');
        let mut v = vec![0.0; self.dim];
        for w in padded.windows(3) {
            let mut h = fnv::FnvHasher::default();
            for c in w {
                h.write_u32(*c as u32);
            }
            v[(h.finish() % self.dim as u64) as usize] += 1.0;
        }
        v
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for TrigramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(self.vector(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaro_winkler_matches_reference_values() {
        assert!((jaro("martha", "marhta") - 0.944_444_444_444_444_4).abs() < 1e-12);
        assert!((jaro_winkler("martha", "marhta") - 0.961_111_111_111_111_1).abs() < 1e-12);
        assert!((jaro_winkler("dwayne", "duane") - 0.84).abs() < 1e-12);
        assert_eq!(jaro_winkler("", ""), 1.0);
        assert_eq!(jaro_winkler("abc", ""), 0.0);
    }

    #[test]
    fn name_gate_examples() {
        let n = NameNormalizer::default();
        assert_eq!(name_similarity(&n, &["Huawei"], &["HUAWEI"]), 1.0);
        assert!(name_similarity(&n, &["Intel"], &["AMD"]) < 0.6);
    }

    #[test]
    fn embedder_examples() {
        let e = TrigramEmbedder::default();
        let full = e.vector("Huawei Technologies Co., Ltd.");
        let short = e.vector("Huawei");
        assert!((cosine(&full, &short) - 1.0).abs() < 1e-12);
        assert!(cosine(&short, &e.vector("Tokyo Electron")) < 0.85);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
