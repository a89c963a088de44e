//! Soft-label logistic triage model.
//!
//! Training minimizes
//!
//! ```text
//! L(w, b) = (1/n) Σ [softplus(z_i) − t_i z_i] + (λ/2) ‖w‖²,   z_i = w·x_i + b
//! ```
//!
//! which is the cross-entropy against soft targets `t_i ∈ [0, 1]`; the bias
//! is not regularized. Optimization is plain full-batch gradient descent
//! from zero with a fixed step and iteration count, so the result is a pure
//! function of the inputs.
//!
//! Raw n-gram counts make the problem badly conditioned for a fixed step of
//! 0.5, so the model rescales every input by `1 / input_scale`, where
//! `input_scale` is the largest Euclidean norm among the training vectors.
//! The scale is stored with the weights and applied again at scoring time.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::features::{fnv1a64, FeatureSchema, FeatureVector};
use super::TriageError;
use crate::id::Id;

pub const MIN_TRAINING_LABELS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
    /// Recorded for provenance; training itself draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub candidate: Id,
    pub features: FeatureVector,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageModel {
    pub id: Id,
    pub schema: FeatureSchema,
    /// One weight per logical feature.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
    /// Digest of the schema and the (candidate, target) pairs trained on.
    pub fingerprint: String,
    pub n_examples: usize,
    pub final_loss: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Training-set digest over the schema and the sorted (candidate, target)
/// pairs.
pub fn fingerprint(schema: &FeatureSchema, examples: &[Example]) -> String {
    let mut pairs: Vec<(Id, u64)> = examples.iter().map(|e| (e.candidate, e.target.to_bits())).collect();
    pairs.sort();
    let mut text = format!("{:016x}", schema.fingerprint());
    for (c, t) in pairs {
        text.push_str(&format!(";{c}:{t:016x}"));
    }
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

/// Objective value and gradient `(loss, ∂L/∂w, ∂L/∂b)` at `(w, b)`.
pub fn loss_and_gradient(weights: &[f64], bias: f64, examples: &[Example], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = examples.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut data_loss = 0.0;
    for ex in examples {
        let z = ex.features.dot(weights) + bias;
        data_loss += softplus(z) - ex.target * z;
        let r = (sigmoid(z) - ex.target) / n;
        for (i, v) in ex.features.entries() {
            grad[i] += r * v;
        }
        grad_b += r;
    }
    let mut penalty = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2 * w;
        penalty += w * w;
    }
    (data_loss / n + 0.5 * l2 * penalty, grad, grad_b)
}

pub fn train_triage_model(
    id: Id,
    schema: &FeatureSchema,
    examples: &[Example],
    config: TrainConfig,
) -> Result<TriageModel, TriageError> {
    if examples.len() < MIN_TRAINING_LABELS {
        return Err(TriageError::InsufficientLabels {
            found: examples.len(),
            required: MIN_TRAINING_LABELS,
        });
    }
    let distinct: BTreeSet<u64> = examples.iter().map(|e| e.target.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(TriageError::DegenerateLabels);
    }
    let dim = schema.dim();
    if let Some(bad) = examples.iter().find(|e| e.features.dim() != dim) {
        return Err(TriageError::SchemaMismatch {
            expected: dim,
            found: bad.features.dim(),
        });
    }

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..config.iterations {
        let (_, g, gb) = loss_and_gradient(&w, b, examples, config.l2);
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= config.learning_rate * gi;
        }
        b -= config.learning_rate * gb;
    }
    let (final_loss, _, _) = loss_and_gradient(&w, b, examples, config.l2);
    log::debug!(
        "triage model trained on {} examples, loss {final_loss:.6}",
        examples.len()
    );

    Ok(TriageModel {
        id,
        schema: schema.clone(),
        weights: w,
        bias: b,
        config,
        fingerprint: fingerprint(schema, examples),
        n_examples: examples.len(),
        final_loss,
    })
}

impl TriageModel {
    pub fn score(&self, features: &FeatureVector) -> Result<f64, TriageError> {
        if features.dim() != self.weights.len() {
            return Err(TriageError::SchemaMismatch {
                expected: self.weights.len(),
                found: features.dim(),
            });
        }
        Ok(sigmoid(features.dot(&self.weights) + self.bias))
    }
}

/// Scores and sorts candidates: descending score, ties by ascending id.
pub fn rank_candidates(model: &TriageModel, candidates: &[(Id, FeatureVector)]) -> Result<Vec<(Id, f64)>, TriageError> {
    let mut ranked = candidates
        .iter()
        .map(|(id, fv)| model.score(fv).map(|s| (*id, s)))
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_example(c: u128, numeric: Vec<f64>, target: f64) -> Example {
        Example {
            candidate: Id::from_u128(c),
            features: FeatureVector { text: vec![], numeric },
            target,
        }
    }

    fn schema2() -> FeatureSchema {
        FeatureSchema {
            numeric: vec![super::super::features::NumericFeature {
                attribute: "a".into(),
                min: 0.0,
                max: 1.0,
            }],
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(-40.0) - (-40.0f64).exp()).abs() < 1e-25);
    }

    #[test]
    fn too_few_and_degenerate() {
        let ex: Vec<Example> = (0..10).map(|i| numeric_example(i, vec![0.0, 0.0], 1.0)).collect();
        assert!(matches!(
            train_triage_model(Id::from_u128(1), &schema2(), &ex, TrainConfig::default()),
            Err(TriageError::InsufficientLabels { found: 10, .. })
        ));
        let ex: Vec<Example> = (0..25).map(|i| numeric_example(i, vec![0.0, 0.0], 1.0)).collect();
        assert_eq!(
            train_triage_model(Id::from_u128(1), &schema2(), &ex, TrainConfig::default()),
            Err(TriageError::DegenerateLabels)
        );
    }

    #[test]
    fn fingerprint_tracks_labels() {
        let mut ex: Vec<Example> = (0..20)
            .map(|i| numeric_example(i, vec![0.1, 0.0], (i % 2) as f64))
            .collect();
        let a = fingerprint(&schema2(), &ex);
        ex.reverse();
        assert_eq!(fingerprint(&schema2(), &ex), a);
        ex[0].target = 0.5;
        assert_ne!(fingerprint(&schema2(), &ex), a);
    }
}
