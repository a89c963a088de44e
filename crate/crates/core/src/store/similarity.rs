//! Gower similarity over mixed questionnaire encodings.

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::id::Id;

/// How one question occupies the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "width", rename_all = "kebab-case")]
pub enum Segment {
    /// One entry already scaled to `[0, 1]` (ordinal or numeric answers).
    Scaled,
    /// One-hot block of the given width (categorical answers).
    OneHot(usize),
}

impl Segment {
    pub fn width(self) -> usize {
        match self {
            Segment::Scaled => 1,
            Segment::OneHot(w) => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorLayout {
    pub segments: Vec<Segment>,
}

impl VectorLayout {
    pub fn dim(&self) -> usize {
        self.segments.iter().map(|s| s.width()).sum()
    }
}

/// Flat encoded vector; `None` marks a missing entry.
pub type CharVector = Vec<Option<f64>>;

fn hot_index(block: &[Option<f64>]) -> Option<Option<usize>> {
    let values: Option<Vec<f64>> = block.iter().copied().collect();
    let values = values?;
    Some(values.iter().position(|&v| v > 0.5))
}

/// Gower distance in `[0, 1]`: the mean per-question distance over the
/// questions answered in both vectors. `None` if no question is comparable.
pub fn gower_distance(layout: &VectorLayout, a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let mut offset = 0;
    let mut total = 0.0;
    let mut counted = 0usize;
    for seg in &layout.segments {
        let w = seg.width();
        let (sa, sb) = (&a[offset..offset + w], &b[offset..offset + w]);
        offset += w;
        let d = match seg {
            Segment::Scaled => match (sa[0], sb[0]) {
                (Some(x), Some(y)) => Some((x - y).abs().min(1.0)),
                _ => None,
            },
            Segment::OneHot(_) => match (hot_index(sa), hot_index(sb)) {
                (Some(Some(x)), Some(Some(y))) => Some(if x == y { 0.0 } else { 1.0 }),
                _ => None,
            },
        };
        if let Some(d) = d {
            total += d;
            counted += 1;
        }
    }
    (counted > 0).then(|| total / counted as f64)
}

/// `1 - gower_distance`, or 0 when nothing is comparable.
pub fn gower_similarity(layout: &VectorLayout, a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    gower_distance(layout, a, b).map_or(0.0, |d| 1.0 - d)
}

/// The `k` corpus entries most similar to `target`, by descending
/// similarity, ties broken by ascending id. `exclude` drops the target's own
/// entry when it is stored.
pub fn rank_similar<'a>(
    layout: &VectorLayout,
    corpus: impl IntoIterator<Item = (Id, &'a CharVector)>,
    target: &[Option<f64>],
    k: usize,
    exclude: Option<Id>,
) -> Result<Vec<(Id, f64)>, StoreError> {
    if k == 0 {
        return Err(StoreError::InvalidArgument("k must be at least 1".into()));
    }
    let dim = layout.dim();
    if target.len() != dim {
        return Err(StoreError::DimensionMismatch {
            expected: dim,
            found: target.len(),
        });
    }
    let mut scored = Vec::new();
    for (id, v) in corpus {
        if Some(id) == exclude {
            continue;
        }
        if v.len() != dim {
            return Err(StoreError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        scored.push((id, gower_similarity(layout, target, v)));
    }
    if scored.is_empty() {
        return Err(StoreError::EmptyCorpus);
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
