//! Reference LOK: inverse-distance-weighted k-nearest-neighbour regression
//! under Gower distance over the assessed corpus.

use super::KaraError;
use crate::id::Id;
use crate::store::similarity::{gower_distance, CharVector, VectorLayout};

pub const REFERENCE_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub candidate: Id,
    pub vector: CharVector,
    pub lok: f64,
}

/// Estimate for `target` from its [`REFERENCE_K`] nearest corpus entries
/// (ties by ascending id). Entries at distance 0 take over entirely: the
/// estimate is then the mean of their LOK values. Pairs with no comparable
/// question count as distance 1.
pub fn reference_lok(
    layout: &VectorLayout,
    corpus: &[CorpusEntry],
    target: &[Option<f64>],
    exclude: Option<Id>,
) -> Result<f64, KaraError> {
    let dim = layout.dim();
    let pool: Vec<&CorpusEntry> = corpus.iter().filter(|e| Some(e.candidate) != exclude).collect();
    if pool.len() < REFERENCE_K {
        return Err(KaraError::CorpusTooSmall {
            found: pool.len(),
            required: REFERENCE_K,
        });
    }
    if target.len() != dim || pool.iter().any(|e| e.vector.len() != dim) {
        return Err(KaraError::InvalidAnswer {
            question: "*".into(),
            reason: format!("encoded vector does not have dimension {dim}"),
        });
    }
    let mut scored: Vec<(f64, Id, f64)> = pool
        .iter()
        .map(|e| {
            (
                gower_distance(layout, target, &e.vector).unwrap_or(1.0),
                e.candidate,
                e.lok,
            )
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(REFERENCE_K);

    let exact: Vec<f64> = scored.iter().filter(|s| s.0 == 0.0).map(|s| s.2).collect();
    let estimate = if exact.is_empty() {
        let (num, den) = scored
            .iter()
            .fold((0.0, 0.0), |(n, d), &(dist, _, lok)| (n + lok / dist, d + 1.0 / dist));
        num / den
    } else {
        exact.iter().sum::<f64>() / exact.len() as f64
    };
    Ok(estimate.clamp(0.0, 1.0))
}
