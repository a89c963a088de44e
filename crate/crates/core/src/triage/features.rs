//! Candidate featurization.
//!
//! The text block hashes the character 2-, 3- and 4-grams of the external
//! key (SMILES) into [`TEXT_BUCKETS`] buckets with FNV-1a 64, each bucket
//! holding the n-gram count. The numeric block appends, per selected
//! attribute, its min-max scaled value and a missing flag; a missing value
//! is encoded as 0.5 with the flag set to 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Characterization, DomainObject};

pub const TEXT_BUCKETS: usize = 16_384;
pub const NGRAM_SIZES: [usize; 3] = [2, 3, 4];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn bucket_of(ngram: &str) -> usize {
    (fnv1a64(ngram.as_bytes()) % TEXT_BUCKETS as u64) as usize
}

/// All character n-grams of `key` for the configured sizes.
pub fn ngrams(key: &str) -> Vec<String> {
    let chars: Vec<char> = key.chars().collect();
    let mut out = Vec::new();
    for n in NGRAM_SIZES {
        if chars.len() >= n {
            out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub attribute: String,
    pub min: f64,
    pub max: f64,
}

impl NumericFeature {
    fn scale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            0.0
        } else {
            ((v - self.min) / span).clamp(0.0, 1.0)
        }
    }
}

/// Attribute selection plus the recorded scaling constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric: Vec<NumericFeature>,
}

impl FeatureSchema {
    /// Records min/max of each attribute over the values present in
    /// `members`.
    pub fn fit<'a>(attributes: &[String], members: impl IntoIterator<Item = &'a Characterization> + Clone) -> Self {
        let numeric = attributes
            .iter()
            .map(|name| {
                let (min, max) = members
                    .clone()
                    .into_iter()
                    .filter_map(|c| c.numeric(name))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
                NumericFeature {
                    attribute: name.clone(),
                    min,
                    max,
                }
            })
            .collect();
        Self { numeric }
    }

    pub fn numeric_dim(&self) -> usize {
        2 * self.numeric.len()
    }

    /// Full feature dimension (text block plus numeric block).
    pub fn dim(&self) -> usize {
        TEXT_BUCKETS + self.numeric_dim()
    }

    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(self).unwrap_or_default();
        fnv1a64(text.as_bytes())
    }
}

/// Logical dimension `TEXT_BUCKETS + 2 * numeric attributes`. The text block
/// is stored sparsely (sorted bucket, count) because almost all buckets are
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub text: Vec<(u32, f64)>,
    pub numeric: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        TEXT_BUCKETS + self.numeric.len()
    }

    /// Value at logical index `i`.
    pub fn get(&self, i: usize) -> f64 {
        if i < TEXT_BUCKETS {
            self.text
                .binary_search_by_key(&(i as u32), |e| e.0)
                .map_or(0.0, |k| self.text[k].1)
        } else {
            self.numeric[i - TEXT_BUCKETS]
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for &(b, c) in &self.text {
            v[b as usize] = c;
        }
        v[TEXT_BUCKETS..].copy_from_slice(&self.numeric);
        v
    }

    /// Non-zero entries as (logical index, value), text block first.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.text
            .iter()
            .map(|&(b, c)| (b as usize, c))
            .chain(self.numeric.iter().enumerate().map(|(j, &v)| (TEXT_BUCKETS + j, v)))
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries().map(|(i, v)| v * weights[i]).sum()
    }
}

pub fn text_block(key: &str) -> Vec<(u32, f64)> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for g in ngrams(key) {
        *counts.entry(bucket_of(&g) as u32).or_default() += 1.0;
    }
    counts.into_iter().collect()
}

pub fn featurize(object: &DomainObject, ch: &Characterization, schema: &FeatureSchema) -> FeatureVector {
    let mut numeric = Vec::with_capacity(schema.numeric_dim());
    for f in &schema.numeric {
        match ch.numeric(&f.attribute) {
            Some(v) => numeric.extend([f.scale(v), 0.0]),
            None => numeric.extend([0.5, 1.0]),
        }
    }
    FeatureVector {
        text: text_block(&object.external_key),
        numeric,
    }
}
