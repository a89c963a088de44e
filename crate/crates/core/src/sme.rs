//! Seeded synthetic experts used to drive the adjudication and assessment
//! paths without people: a linear-rule adjudicator, a coin-flip adjudicator
//! and a KaRA assessor with a hidden "true" LOK and POS per candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::id::Id;
use crate::kara::{LokRelation, PosRegion};
use crate::triage::FeatureVector;

pub const NO: &str = "No";
pub const UNCERTAIN: &str = "Uncertain";
pub const YES: &str = "Yes";

/// Hidden linear scoring rule over the full feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRule {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearRule {
    /// Independent standard-normal weights.
    pub fn gaussian(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { weights, bias: 0.0 }
    }

    pub fn score(&self, features: &FeatureVector) -> f64 {
        features.dot(&self.weights) + self.bias
    }
}

/// Value below which a fraction `q` of `sorted` lies (nearest rank).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((q * sorted.len() as f64 + 1e-9).floor() as usize).min(sorted.len() - 1);
    sorted[i]
}

/// Adjudicator that thresholds a noisy linear score. The thresholds are set
/// from a reference population so that roughly `accept` of it is answered
/// Yes and `uncertain` of it Uncertain.
#[derive(Debug, Clone)]
pub struct ScriptedSme {
    pub expert: String,
    pub rule: LinearRule,
    /// Scores below this are answered No.
    pub no_below: f64,
    /// Scores at or above this are answered Yes.
    pub yes_from: f64,
    /// Standard deviation of the Gaussian noise added to each score.
    pub noise: f64,
    rng: ChaCha8Rng,
}

impl ScriptedSme {
    /// `noise_fraction` scales the population score spread into the noise
    /// standard deviation.
    pub fn new(
        expert: impl Into<String>,
        rule: LinearRule,
        population: &[FeatureVector],
        accept: f64,
        uncertain: f64,
        noise_fraction: f64,
        seed: u64,
    ) -> Self {
        let mut scores: Vec<f64> = population.iter().map(|f| rule.score(f)).collect();
        scores.sort_by(f64::total_cmp);
        let n = scores.len().max(1) as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            expert: expert.into(),
            no_below: quantile(&scores, 1.0 - accept - uncertain),
            yes_from: quantile(&scores, 1.0 - accept),
            noise: noise_fraction * std,
            rule,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn choice_for(&self, score: f64) -> &'static str {
        if score >= self.yes_from {
            YES
        } else if score >= self.no_below {
            UNCERTAIN
        } else {
            NO
        }
    }

    /// The answer the rule gives without noise.
    pub fn true_choice(&self, features: &FeatureVector) -> &'static str {
        self.choice_for(self.rule.score(features))
    }

    pub fn judge(&mut self, features: &FeatureVector) -> &'static str {
        let noise: f64 = StandardNormal.sample(&mut self.rng);
        self.choice_for(self.rule.score(features) + self.noise * noise)
    }
}

/// Adjudicator answering Yes with probability `p_yes`, Uncertain with
/// probability `p_uncertain` and No otherwise.
#[derive(Debug, Clone)]
pub struct BernoulliSme {
    pub expert: String,
    pub p_yes: f64,
    pub p_uncertain: f64,
    rng: ChaCha8Rng,
}

impl BernoulliSme {
    pub fn new(expert: impl Into<String>, p_yes: f64, p_uncertain: f64, seed: u64) -> Self {
        Self {
            expert: expert.into(),
            p_yes,
            p_uncertain,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn judge(&mut self) -> &'static str {
        let u: f64 = self.rng.gen();
        if u < self.p_yes {
            YES
        } else if u < self.p_yes + self.p_uncertain {
            UNCERTAIN
        } else {
            NO
        }
    }
}

/// Area under the ROC curve of `scores` against binary `positive` labels,
/// counting tied scores as half a concordant pair. `None` without both
/// classes.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mid-ranks over tie groups (Mann-Whitney U).
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            rank[k] = mid;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let rank_sum: f64 = rank.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// KaRA expert with private views of every candidate's LOK and POS. The
/// hidden values are derived from the candidate id, so all assessors agree
/// on them; each assessor perceives them through its own noise.
#[derive(Debug, Clone)]
pub struct ScriptedAssessor {
    pub expert: String,
    /// Standard deviation of the noise on perceived LOK values.
    pub lok_noise: f64,
    /// LOK differences below this are judged about equal.
    pub tie_band: f64,
    /// Standard deviation of the noise on POS submissions.
    pub pos_noise: f64,
    rng: ChaCha8Rng,
}

/// Hidden LOK of a candidate in `[0, 1]`.
pub fn hidden_lok(candidate: Id, salt: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(candidate.as_u128() as u64 ^ salt);
    rng.gen()
}

/// Hidden POS of a candidate in `[0, 1]`.
pub fn hidden_pos(candidate: Id, salt: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64((candidate.as_u128() >> 64) as u64 ^ salt.rotate_left(17));
    rng.gen()
}

impl ScriptedAssessor {
    pub fn new(expert: impl Into<String>, lok_noise: f64, tie_band: f64, pos_noise: f64, seed: u64) -> Self {
        Self {
            expert: expert.into(),
            lok_noise,
            tie_band,
            pos_noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn perceive(&mut self, value: f64, sd: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        (value + sd * z).clamp(0.0, 1.0)
    }

    /// Judgement of `(a, b)` given their hidden LOK values: `(first, second,
    /// relation)` with the higher-LOK candidate first for a strict answer.
    pub fn compare(&mut self, a: (Id, f64), b: (Id, f64)) -> (Id, Id, LokRelation) {
        let la = self.perceive(a.1, self.lok_noise);
        let lb = self.perceive(b.1, self.lok_noise);
        if (la - lb).abs() < self.tie_band {
            (a.0, b.0, LokRelation::AboutEqual)
        } else if la > lb {
            (a.0, b.0, LokRelation::MoreLok)
        } else {
            (b.0, a.0, LokRelation::MoreLok)
        }
    }

    /// Noisy POS submission pulled into `region` (the expert respects the
    /// horn plot it is shown).
    pub fn pos(&mut self, hidden: f64, region: &PosRegion) -> f64 {
        let p = self.perceive(hidden, self.pos_noise);
        region.project(p)
    }

    /// Ordinal answer index in `0..levels` whose level centre is nearest to
    /// the perceived value.
    pub fn ordinal(&mut self, hidden: f64, levels: usize) -> usize {
        let p = self.perceive(hidden, self.lok_noise);
        ((p * (levels - 1) as f64).round() as usize).min(levels - 1)
    }
}
