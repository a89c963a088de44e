//! Baseline candidate generator: an order-3 character Markov chain fitted on
//! seed SMILES, with syntactic filtering and deduplication.
//!
//! Strings are padded on the left with `k` copies of [`BEGIN`] and
//! terminated with [`END`]; the model counts, for every context of exactly
//! `k` characters, how often each next character follows it.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::triage::fnv1a64;

pub const ORDER: usize = 3;
pub const BEGIN: char = '\u{2}';
pub const END: char = '\u{3}';
pub const MIN_SEEDS: usize = 10;
pub const DEFAULT_MAX_LEN: usize = 120;
/// Generation gives up after this many rejected samples in a row.
pub const STALL_LIMIT: usize = 1000;
pub const PLUGIN_NAME: &str = "markov-generator";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("{found} seed strings, at least {required} required")]
    TooFewSeeds { found: usize, required: usize },

    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

impl GeneratorError {
    pub fn code(&self) -> &'static str {
        match self {
            GeneratorError::TooFewSeeds { .. } => "too-few-seeds",
            GeneratorError::InvalidRequest(_) => "invalid-request",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    pub order: usize,
    pub transitions: BTreeMap<String, BTreeMap<char, u64>>,
    pub seed_fingerprint: String,
}

impl MarkovModel {
    /// Counts transitions over `seeds` without a minimum seed count. Empty
    /// strings are ignored.
    pub fn from_strings<S: AsRef<str>>(seeds: &[S]) -> Self {
        let mut transitions: BTreeMap<String, BTreeMap<char, u64>> = BTreeMap::new();
        let mut sorted: Vec<&str> = Vec::new();
        for seed in seeds.iter().map(AsRef::as_ref).filter(|s| !s.is_empty()) {
            sorted.push(seed);
            let padded: Vec<char> = std::iter::repeat_n(BEGIN, ORDER)
                .chain(seed.chars())
                .chain(std::iter::once(END))
                .collect();
            for w in padded.windows(ORDER + 1) {
                let ctx: String = w[..ORDER].iter().collect();
                *transitions.entry(ctx).or_default().entry(w[ORDER]).or_default() += 1;
            }
        }
        sorted.sort_unstable();
        Self {
            order: ORDER,
            transitions,
            seed_fingerprint: format!("{:016x}", fnv1a64(sorted.join("\n").as_bytes())),
        }
    }

    /// Transition probability; `context` shorter than the order is padded
    /// on the left with [`BEGIN`].
    pub fn probability(&self, context: &str, next: char) -> f64 {
        let ctx = pad_context(context);
        match self.transitions.get(&ctx) {
            Some(counts) => {
                let total: u64 = counts.values().sum();
                counts.get(&next).copied().unwrap_or(0) as f64 / total as f64
            }
            None => 0.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, max_len: usize) -> Option<String> {
        let mut ctx: Vec<char> = vec![BEGIN; ORDER];
        let mut out = String::new();
        let mut len = 0;
        loop {
            let key: String = ctx.iter().collect();
            let counts = self.transitions.get(&key)?;
            let total: u64 = counts.values().sum();
            let mut r = rng.gen_range(0..total);
            let mut next = END;
            for (&c, &n) in counts {
                if r < n {
                    next = c;
                    break;
                }
                r -= n;
            }
            if next == END {
                return Some(out);
            }
            len += 1;
            if len > max_len {
                return None;
            }
            out.push(next);
            ctx.remove(0);
            ctx.push(next);
        }
    }
}

fn pad_context(context: &str) -> String {
    let chars: Vec<char> = context.chars().collect();
    let tail = &chars[chars.len().saturating_sub(ORDER)..];
    std::iter::repeat_n(BEGIN, ORDER - tail.len())
        .chain(tail.iter().copied())
        .collect()
}

pub fn fit_generator<S: AsRef<str>>(seeds: &[S]) -> Result<MarkovModel, GeneratorError> {
    let usable = seeds.iter().filter(|s| !s.as_ref().is_empty()).count();
    if usable < MIN_SEEDS {
        return Err(GeneratorError::TooFewSeeds {
            found: usable,
            required: MIN_SEEDS,
        });
    }
    Ok(MarkovModel::from_strings(seeds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntaxError {
    Empty,
    UnbalancedParentheses,
    UnbalancedBrackets,
    OddRingBond(char),
    DanglingBond,
}

const BOND_SYMBOLS: &[char] = &['-', '=', '#', '$', ':', '/', '\\', '.'];

/// Structural well-formedness only: `()` and `[]` balanced and properly
/// nested (no parentheses or brackets inside brackets), each ring-bond label
/// outside brackets used an even number of times (`%nn` counts as one
/// label), no bond symbol at either end.
pub fn check_syntax(s: &str) -> Result<(), SyntaxError> {
    let first = s.chars().next().ok_or(SyntaxError::Empty)?;
    let last = s.chars().next_back().ok_or(SyntaxError::Empty)?;
    if BOND_SYMBOLS.contains(&first) || BOND_SYMBOLS.contains(&last) {
        return Err(SyntaxError::DanglingBond);
    }
    let mut depth = 0usize;
    let mut in_bracket = false;
    let mut ring_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if in_bracket {
            match c {
                ']' => in_bracket = false,
                '[' | '(' | ')' => return Err(SyntaxError::UnbalancedBrackets),
                _ => {}
            }
            continue;
        }
        match c {
            '[' => in_bracket = true,
            ']' => return Err(SyntaxError::UnbalancedBrackets),
            '(' => depth += 1,
            ')' => depth = depth.checked_sub(1).ok_or(SyntaxError::UnbalancedParentheses)?,
            '%' => {
                let label: String = [chars.next(), chars.next()].into_iter().flatten().collect();
                if label.len() != 2 || !label.chars().all(|d| d.is_ascii_digit()) {
                    return Err(SyntaxError::OddRingBond('%'));
                }
                *ring_counts.entry(label).or_default() += 1;
            }
            d if d.is_ascii_digit() => *ring_counts.entry(d.to_string()).or_default() += 1,
            _ => {}
        }
    }
    if in_bracket {
        return Err(SyntaxError::UnbalancedBrackets);
    }
    if depth != 0 {
        return Err(SyntaxError::UnbalancedParentheses);
    }
    if let Some((label, _)) = ring_counts.iter().find(|(_, &n)| n % 2 == 1) {
        return Err(SyntaxError::OddRingBond(label.chars().last().unwrap_or('%')));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub candidates: Vec<String>,
    pub samples: usize,
    pub rejected_syntax: usize,
    pub rejected_duplicate: usize,
    pub rejected_length: usize,
    /// Set when fewer than the requested number were produced because
    /// [`STALL_LIMIT`] consecutive samples were rejected.
    pub warning: Option<String>,
}

/// Samples until `n` new, syntactically valid strings are found or
/// generation stalls. `known` holds strings that count as duplicates from
/// the start (the seeds, typically).
pub fn generate_candidates(
    model: &MarkovModel,
    n: usize,
    seed: u64,
    max_len: usize,
    known: &HashSet<String>,
) -> Result<Generation, GeneratorError> {
    if n == 0 {
        return Err(GeneratorError::InvalidRequest("n must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(GeneratorError::InvalidRequest("max_len must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Generation {
        candidates: Vec::with_capacity(n),
        samples: 0,
        rejected_syntax: 0,
        rejected_duplicate: 0,
        rejected_length: 0,
        warning: None,
    };
    let mut streak = 0;
    while out.candidates.len() < n {
        if streak >= STALL_LIMIT {
            let msg = format!(
                "generation stalled after {STALL_LIMIT} consecutive rejects; produced {} of {n}",
                out.candidates.len()
            );
            log::warn!("{msg}");
            out.warning = Some(msg);
            break;
        }
        out.samples += 1;
        streak += 1;
        let Some(s) = model.sample(&mut rng, max_len) else {
            out.rejected_length += 1;
            continue;
        };
        if check_syntax(&s).is_err() {
            out.rejected_syntax += 1;
            continue;
        }
        if known.contains(&s) || seen.contains(&s) {
            out.rejected_duplicate += 1;
            continue;
        }
        seen.insert(s.clone());
        out.candidates.push(s);
        streak = 0;
    }
    Ok(out)
}

/// Simple string-level descriptors of a SMILES key, stored as numeric
/// attributes on generated characterizations.
pub fn constitutional_features(smiles: &str) -> BTreeMap<String, f64> {
    let mut branches = 0;
    let mut ring_labels = 0;
    let mut aromatic = 0;
    let mut halogens = 0;
    let mut charged = 0;
    let mut heteroatoms = 0;
    let mut in_bracket = false;
    let chars: Vec<char> = smiles.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            '[' => in_bracket = true,
            ']' => in_bracket = false,
            '(' => branches += 1,
            '+' | '-' if in_bracket => charged += 1,
            'C' if next == Some('l') => {
                halogens += 1;
                i += 1;
            }
            'B' if next == Some('r') => {
                halogens += 1;
                i += 1;
            }
            'F' | 'I' => halogens += 1,
            'N' | 'O' | 'S' | 'P' => heteroatoms += 1,
            'c' | 'n' | 'o' | 's' => {
                aromatic += 1;
                if c != 'c' {
                    heteroatoms += 1;
                }
            }
            d if d.is_ascii_digit() && !in_bracket => ring_labels += 1,
            _ => {}
        }
        i += 1;
    }
    [
        ("length", chars.len() as f64),
        ("branches", branches as f64),
        ("ring_closures", (ring_labels / 2) as f64),
        ("aromatic_atoms", aromatic as f64),
        ("halogens", halogens as f64),
        ("heteroatoms", heteroatoms as f64),
        ("charged_atoms", charged as f64),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_counts() {
        let m = MarkovModel::from_strings(&["CC", "CC"]);
        assert_eq!(m.probability("C", 'C'), 1.0);
        assert_eq!(m.probability("CC", END), 1.0);
        assert_eq!(m.probability("", 'C'), 1.0);
        assert!(matches!(
            fit_generator(&["CC", "CC"]),
            Err(GeneratorError::TooFewSeeds { found: 2, .. })
        ));
    }

    #[test]
    fn probabilities_renormalize() {
        let m = MarkovModel::from_strings(&["CCO", "CCN", "c1ccccc1", "C[S+](C)C"]);
        for (ctx, counts) in &m.transitions {
            assert!(counts.values().sum::<u64>() >= 1);
            let total: f64 = counts.keys().map(|&c| m.probability(ctx, c)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_path_model_yields_nothing_new() {
        // Every length-3 context occurs once, so the chain has a single path.
        let seeds = vec!["C[S+](C)C"; 10];
        let m = fit_generator(&seeds).unwrap();
        let known: HashSet<String> = seeds.iter().map(|s| s.to_string()).collect();
        let g = generate_candidates(&m, 1, 3, DEFAULT_MAX_LEN, &known).unwrap();
        assert!(g.candidates.is_empty());
        assert!(g.warning.is_some());
        assert_eq!(g.rejected_duplicate, STALL_LIMIT);
    }

    #[test]
    fn syntax_rules() {
        for ok in [
            "C",
            "c1ccccc1",
            "C[S+](C)C",
            "C%10CC%10",
            "[NH4+]",
            "CC(=O)O",
            "C1CC2CC1C2",
        ] {
            assert_eq!(check_syntax(ok), Ok(()), "{ok}");
        }
        assert_eq!(check_syntax(""), Err(SyntaxError::Empty));
        assert_eq!(check_syntax("C(C"), Err(SyntaxError::UnbalancedParentheses));
        assert_eq!(check_syntax("C)C("), Err(SyntaxError::UnbalancedParentheses));
        assert_eq!(check_syntax("C[S+"), Err(SyntaxError::UnbalancedBrackets));
        assert_eq!(check_syntax("C[S(+)]"), Err(SyntaxError::UnbalancedBrackets));
        assert_eq!(check_syntax("c1cccc"), Err(SyntaxError::OddRingBond('1')));
        assert_eq!(check_syntax("=CC"), Err(SyntaxError::DanglingBond));
        assert_eq!(check_syntax("CC."), Err(SyntaxError::DanglingBond));
        // Digits inside brackets are not ring bonds.
        assert_eq!(check_syntax("[13CH3]C"), Ok(()));
    }

    #[test]
    fn descriptors() {
        let f = constitutional_features("C[S+](c1ccc(Cl)cc1)C(F)(F)F");
        assert_eq!(f["branches"], 4.0);
        assert_eq!(f["ring_closures"], 1.0);
        assert_eq!(f["aromatic_atoms"], 6.0);
        assert_eq!(f["halogens"], 4.0);
        assert_eq!(f["charged_atoms"], 1.0);
        assert_eq!(f["heteroatoms"], 1.0);
    }
}
