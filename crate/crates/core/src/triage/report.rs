//! Attribute distribution comparison between two datasets.

use serde::{Deserialize, Serialize};

use super::TriageError;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            n: values.len(),
            mean,
            stddev: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub attribute: String,
    pub a: Summary,
    pub b: Summary,
    pub histogram_distance: f64,
}

fn bin_counts(values: &[f64], lo: f64, hi: f64) -> [u64; HISTOGRAM_BINS] {
    let mut counts = [0u64; HISTOGRAM_BINS];
    let width = hi - lo;
    for &v in values {
        let bin = if width > 0.0 {
            (((v - lo) / width * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    counts
}

/// `1 − Σ min(p_i, q_i)` over 20 equal-width bins spanning the joint range
/// of both samples; the top edge falls into the last bin. Computed on
/// integer cross-multiplied counts so identical samples give exactly 0.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let (ca, cb) = (bin_counts(a, lo, hi), bin_counts(b, lo, hi));
    let (na, nb) = (a.len() as u128, b.len() as u128);
    let overlap: u128 = ca
        .iter()
        .zip(&cb)
        .map(|(&x, &y)| (x as u128 * nb).min(y as u128 * na))
        .sum();
    1.0 - overlap as f64 / (na * nb) as f64
}

/// Per-attribute summaries of two samples. `a` and `b` map each attribute
/// to the values present in the respective dataset.
pub fn distribution_report(
    attributes: &[String],
    a: impl Fn(&str) -> Vec<f64>,
    b: impl Fn(&str) -> Vec<f64>,
) -> Result<Vec<AttributeReport>, TriageError> {
    attributes
        .iter()
        .map(|name| {
            let (va, vb) = (a(name), b(name));
            if va.is_empty() || vb.is_empty() {
                return Err(TriageError::NoNumericData(name.clone()));
            }
            Ok(AttributeReport {
                attribute: name.clone(),
                a: Summary::of(&va),
                b: Summary::of(&vb),
                histogram_distance: histogram_distance(&va, &vb),
            })
        })
        .collect()
}
