//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the solver or closure code
//! under test.

#![allow(dead_code)]

/// Relation of `x` to `y` in a closure matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rel {
    None,
    Equal,
    Strict,
}

/// A judgement over small integer candidates: `(a, b, strict)` reads
/// `a ≻ b` when `strict` and `a ≈ b` otherwise.
pub type Edge = (usize, usize, bool);

/// Transitive closure by Floyd-Warshall. `m[x][y]` is `Strict` when some
/// walk from `x` to `y` takes a strict step, `Equal` when only `≈` walks
/// join them.
pub fn closure(n: usize, edges: &[Edge]) -> Vec<Vec<Rel>> {
    let mut m = vec![vec![Rel::None; n]; n];
    for (x, row) in m.iter_mut().enumerate() {
        row[x] = Rel::Equal;
    }
    for &(a, b, strict) in edges {
        if strict {
            m[a][b] = m[a][b].max(Rel::Strict);
        } else {
            m[a][b] = m[a][b].max(Rel::Equal);
            m[b][a] = m[b][a].max(Rel::Equal);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if m[i][k] != Rel::None && m[k][j] != Rel::None {
                    let via = m[i][k].max(m[k][j]);
                    if via > m[i][j] {
                        m[i][j] = via;
                    }
                }
            }
        }
    }
    m
}

/// True when some candidate ends up strictly above itself.
pub fn contradictory(n: usize, edges: &[Edge]) -> bool {
    let m = closure(n, edges);
    (0..n).any(|x| m[x][x] == Rel::Strict)
}

/// Accept/reject decision for each judgement of a stream, recomputing the
/// closure from scratch over the accepted prefix every time.
pub fn stream_decisions(n: usize, stream: &[Edge]) -> Vec<bool> {
    let mut accepted: Vec<Edge> = Vec::new();
    stream
        .iter()
        .map(|&e| {
            if e.0 == e.1 {
                return false;
            }
            accepted.push(e);
            if contradictory(n, &accepted) {
                accepted.pop();
                false
            } else {
                true
            }
        })
        .collect()
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Whether `x` meets every comparison with margin `eps` (within `tol`).
pub fn satisfies(x: &[f64], edges: &[Edge], eps: f64, tol: f64) -> bool {
    edges.iter().all(|&(a, b, strict)| {
        let d = x[a] - x[b];
        if strict {
            d >= eps - tol
        } else {
            d.abs() <= eps + tol
        }
    })
}

/// Minimum of `Σ |x_c − r_c|` over `x ∈ [0, 1]^n` meeting the comparisons.
/// The objective is linear on every cell of the arrangement made of the
/// breakpoints `x_c = r_c`, the box faces and the comparison boundaries, so
/// the minimum sits on an intersection of `n` of those hyperplanes; all of
/// them are tried. `None` when no point is feasible.
pub fn l1_oracle(reference: &[f64], edges: &[Edge], eps: f64) -> Option<f64> {
    let n = reference.len();
    let unit = |c: usize| {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        v
    };
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for (c, &r) in reference.iter().enumerate() {
        planes.push((unit(c), r));
        planes.push((unit(c), 0.0));
        planes.push((unit(c), 1.0));
    }
    for &(a, b, strict) in edges {
        let mut v = vec![0.0; n];
        v[a] += 1.0;
        v[b] -= 1.0;
        planes.push((v.clone(), eps));
        if !strict {
            planes.push((v, -eps));
        }
    }
    let mut best: Option<f64> = None;
    subsets(planes.len(), n, &mut |idx| {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        let Some(x) = solve_square(a, b) else { return };
        if x.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) || !satisfies(&x, edges, eps, 1e-9) {
            return;
        }
        let obj: f64 = x.iter().zip(reference).map(|(v, r)| (v - r).abs()).sum();
        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
    });
    best
}

/// Votes on the pair `(lo, hi)`: for `lo ≻ hi`, `hi ≻ lo` and `lo ≈ hi`.
pub type Votes = [u64; 3];

/// Edge chosen for pair `(lo, hi)` by choice `k`; `None` for "no relation".
pub fn choice_edge(lo: usize, hi: usize, k: usize) -> Option<Edge> {
    match k {
        0 => Some((lo, hi, true)),
        1 => Some((hi, lo, true)),
        2 => Some((lo, hi, false)),
        _ => None,
    }
}

/// Exhaustive consensus over all `4^P` selections: minimum number of
/// disagreeing votes among consistent selections, and the lexicographically
/// smallest choice vector reaching it.
pub fn consensus_oracle(n: usize, pairs: &[((usize, usize), Votes)]) -> (u64, Vec<usize>) {
    let p = pairs.len();
    let mut best: Option<(u64, Vec<usize>)> = None;
    for code in 0..4usize.pow(p as u32) {
        // Most significant digit first, so codes run in lexicographic order.
        let choices: Vec<usize> = (0..p).map(|i| (code / 4usize.pow((p - 1 - i) as u32)) % 4).collect();
        let mut cost = 0;
        let mut edges = Vec::new();
        for (&((lo, hi), v), &k) in pairs.iter().zip(&choices) {
            let total: u64 = v.iter().sum();
            cost += total - if k < 3 { v[k] } else { 0 };
            edges.extend(choice_edge(lo, hi, k));
        }
        if best.as_ref().is_some_and(|(b, _)| cost >= *b) {
            continue;
        }
        if !contradictory(n, &edges) {
            best = Some((cost, choices));
        }
    }
    best.expect("the empty selection is always consistent")
}

use rand::seq::SliceRandom;
use rand::Rng;
use workbench_core::id::Id;
use workbench_core::kara::{Judgement, LokRelation};

pub fn cid(c: usize) -> Id {
    Id::from_u128(c as u128 + 1)
}

pub fn judgement(&(a, b, strict): &Edge) -> Judgement {
    let relation = if strict {
        LokRelation::MoreLok
    } else {
        LokRelation::AboutEqual
    };
    Judgement::new(cid(a), cid(b), relation)
}

/// A stream of up to 14 judgements over at most 6 candidates, including the
/// occasional self-comparison.
pub fn random_stream(rng: &mut impl Rng) -> (usize, Vec<Edge>) {
    let n = rng.gen_range(2..=6);
    let len = rng.gen_range(1..=14);
    let stream = (0..len)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = if rng.gen_bool(0.03) {
                a
            } else {
                (a + rng.gen_range(1..n)) % n
            };
            (a, b, rng.gen_bool(0.7))
        })
        .collect();
    (n, stream)
}

/// A calibration instance: reference LOKs for up to 5 candidates (on a
/// coarse grid, so ties occur), up to 6 mutually consistent comparisons and
/// a margin.
pub fn random_calibration(rng: &mut impl Rng) -> (Vec<f64>, Vec<Edge>, f64) {
    let n = rng.gen_range(1..=5);
    let reference: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=20) as f64 / 20.0).collect();
    let eps = *[0.01, 0.02, 0.05, 0.1, 0.2].choose(rng).unwrap();
    let mut edges = Vec::new();
    if n >= 2 {
        for _ in 0..rng.gen_range(0..=6) {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            edges.push((a, b, rng.gen_bool(0.75)));
            if contradictory(n, &edges) {
                edges.pop();
            }
        }
    }
    (reference, edges, eps)
}

/// A consensus instance: up to 8 distinct pairs over at most 5 candidates,
/// each voted on by some of up to 4 experts.
pub fn random_consensus(rng: &mut impl Rng) -> (usize, Vec<Edge>) {
    let n = rng.gen_range(2..=5);
    let mut all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    all.shuffle(rng);
    all.truncate(rng.gen_range(1..=8));
    let experts = rng.gen_range(1..=4);
    let mut judgements = Vec::new();
    for &(a, b) in &all {
        let voters = rng.gen_range(1..=experts);
        for _ in 0..voters {
            let (x, y) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            judgements.push((x, y, rng.gen_bool(0.7)));
        }
    }
    (n, judgements)
}

/// Vote tallies per `(lo, hi)` pair in ascending order.
pub fn tally(judgements: &[Edge]) -> Vec<((usize, usize), Votes)> {
    let mut votes: std::collections::BTreeMap<(usize, usize), Votes> = Default::default();
    for &(a, b, strict) in judgements {
        let (lo, hi) = (a.min(b), a.max(b));
        let v = votes.entry((lo, hi)).or_default();
        match (strict, a == lo) {
            (false, _) => v[2] += 1,
            (true, true) => v[0] += 1,
            (true, false) => v[1] += 1,
        }
    }
    votes.into_iter().collect()
}

use workbench_core::triage::{Example, FeatureVector};

/// Mean binary cross-entropy with soft targets plus `l2/2 · ‖w‖²`, written
/// out directly from its definition.
pub fn triage_loss(w: &[f64], b: f64, examples: &[Example], l2: f64) -> f64 {
    let mut total = 0.0;
    for e in examples {
        let z: f64 = e.features.entries().map(|(i, v)| w[i] * v).sum::<f64>() + b;
        let p = 1.0 / (1.0 + (-z).exp());
        total -= e.target * p.ln() + (1.0 - e.target) * (1.0 - p).ln();
    }
    total / examples.len() as f64 + 0.5 * l2 * w.iter().map(|x| x * x).sum::<f64>()
}

/// Largest relative error between `grad` (with the bias derivative last)
/// and central differences of [`triage_loss`] at step `h`, over the given
/// weight coordinates and the bias. Differences are measured relative to
/// `max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(
    w: &[f64],
    b: f64,
    examples: &[Example],
    l2: f64,
    grad: &[f64],
    grad_b: f64,
    coords: &[usize],
    h: f64,
) -> f64 {
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut probe = w.to_vec();
    for &i in coords {
        probe[i] = w[i] + h;
        let up = triage_loss(&probe, b, examples, l2);
        probe[i] = w[i] - h;
        let down = triage_loss(&probe, b, examples, l2);
        probe[i] = w[i];
        worst = worst.max(rel(grad[i], (up - down) / (2.0 * h)));
    }
    let fd_b = (triage_loss(w, b + h, examples, l2) - triage_loss(w, b - h, examples, l2)) / (2.0 * h);
    worst.max(rel(grad_b, fd_b))
}

/// Random training examples over string keys with `numeric` extra features.
pub fn random_examples(rng: &mut impl Rng, n: usize, numeric: usize) -> Vec<Example> {
    const ALPHABET: &[u8] = b"CNOSF()=[]+1c";
    (0..n)
        .map(|i| {
            let len = rng.gen_range(3..12);
            let key: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap() as char).collect();
            Example {
                candidate: cid(i),
                features: FeatureVector {
                    text: workbench_core::triage::text_block(&key),
                    numeric: (0..numeric).map(|_| rng.gen()).collect(),
                },
                target: *[0.0, 0.5, 1.0].choose(rng).unwrap(),
            }
        })
        .collect()
}

/// The active coordinates of `examples`, every numeric slot, and a few
/// coordinates no example touches.
pub fn probe_coords(examples: &[Example]) -> Vec<usize> {
    let mut coords: std::collections::BTreeSet<usize> = examples
        .iter()
        .flat_map(|e| e.features.entries().map(|(i, _)| i))
        .collect();
    coords.extend([0, 1, 4097, 9999]);
    coords.into_iter().collect()
}
