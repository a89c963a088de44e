use super::TriageError;
use crate::id::Id;
use crate::model::{derive_dataset, Dataset};

/// `⌈keep · n⌉`, ignoring floating-point excess below 1e-9 so that e.g.
/// `0.07 · 100` keeps 7 rather than 8.
pub fn reduced_size(n: usize, keep_fraction: f64) -> Result<usize, TriageError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(TriageError::InvalidFraction(keep_fraction));
    }
    let raw = keep_fraction * n as f64;
    Ok(((raw - 1e-9).ceil().max(0.0) as usize).min(n))
}

/// Keeps the top `⌈keep · N⌉` of `ranked` as a dataset derived from
/// `parent`. `ranked` must list members of `parent`, best first.
pub fn triage_reduce(
    parent: &Dataset,
    ranked: &[(Id, f64)],
    keep_fraction: f64,
    operation: Id,
    id: Id,
    name: impl Into<String>,
) -> Result<Dataset, TriageError> {
    let count = reduced_size(ranked.len(), keep_fraction)?;
    let kept: Vec<Id> = ranked[..count].iter().map(|r| r.0).collect();
    Ok(derive_dataset(parent, &kept, operation, id, name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(n: u128) -> (Dataset, Vec<(Id, f64)>) {
        let ids: Vec<Id> = (0..n).map(Id::from_u128).collect();
        let ds = Dataset::root(Id::from_u128(1 << 100), "all", ids.clone()).unwrap();
        let r = ids
            .iter()
            .rev()
            .enumerate()
            .map(|(i, &id)| (id, 1.0 / (i + 2) as f64))
            .collect();
        (ds, r)
    }

    #[test]
    fn sizes() {
        assert_eq!(reduced_size(10_000, 0.1).unwrap(), 1000);
        assert_eq!(reduced_size(100, 0.001).unwrap(), 1);
        assert_eq!(reduced_size(100, 0.07).unwrap(), 7);
        assert_eq!(reduced_size(7, 1.0).unwrap(), 7);
        assert_eq!(reduced_size(0, 0.5).unwrap(), 0);
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(reduced_size(10, bad).is_err());
        }
    }

    #[test]
    fn keeps_top_members_with_lineage() {
        let (ds, r) = ranked(10);
        let out = triage_reduce(&ds, &r, 0.3, Id::from_u128(5), Id::from_u128(6), "top").unwrap();
        assert_eq!(
            out.member_ids,
            vec![Id::from_u128(9), Id::from_u128(8), Id::from_u128(7)]
        );
        assert_eq!(out.lineage[0].parent, ds.id);
        let all = triage_reduce(&ds, &r, 1.0, Id::from_u128(5), Id::from_u128(7), "all").unwrap();
        assert_eq!(all.member_set(), ds.member_set());
    }
}
