//! Score metrics, the identifiability score, the degree of consistency, and
//! the instant-diagnosis speedup benchmark.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{QMatrix, ResponseDataset, SignedResponseVector};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub f1: f64,
    pub rmse: f64,
    pub n: usize,
    /// False when there were no predicted and no actual positives, in which
    /// case `f1` is reported as 0.
    pub f1_defined: bool,
}

/// ACC and F1 (positive class) at `threshold`, RMSE of the probabilities.
pub fn score_metrics(preds: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: preds.len(),
            context: "predictions vs labels",
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    let mut sq = 0.0;
    for (&p, &y) in preds.iter().zip(labels) {
        let predicted = p >= threshold;
        let actual = y == 1;
        correct += usize::from(predicted == actual);
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        sq += (p - f64::from(y)).powi(2);
    }
    let n = preds.len();
    let denom = 2 * tp + fp + fn_;
    Ok(EvalReport {
        acc: correct as f64 / n as f64,
        f1: if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        },
        rmse: (sq / n as f64).sqrt(),
        n,
        f1_defined: denom != 0,
    })
}

/// Identifiability score over ordered pairs of distinct entities with equal
/// response vectors: the mean of `1 / (1 + L1(traits_i, traits_j))^2`.
pub fn ids(traits: &[Vec<f64>], rows: &[SignedResponseVector]) -> Result<f64> {
    if traits.len() != rows.len() {
        return Err(Error::Dimension {
            expected: rows.len(),
            actual: traits.len(),
            context: "traits vs response vectors",
        });
    }
    let mut groups: HashMap<&[i8], Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.values()).or_default().push(i);
    }
    // Visit groups in index order so the floating-point sum is reproducible.
    let mut groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    groups.sort_unstable_by_key(|g| g[0]);
    let (mut total, mut z) = (0.0, 0usize);
    for g in &groups {
        for &i in g {
            for &j in g {
                if i != j {
                    let d: f64 = traits[i]
                        .iter()
                        .zip(&traits[j])
                        .map(|(a, b)| (a - b).abs())
                        .sum();
                    total += 1.0 / (1.0 + d).powi(2);
                    z += 1;
                }
            }
        }
    }
    if z == 0 {
        return Err(Error::NoDuplicateRows);
    }
    Ok(total / z as f64)
}

/// [`ids`] for scalar traits.
pub fn ids_scalar(traits: &[f64], rows: &[SignedResponseVector]) -> Result<f64> {
    let lifted: Vec<Vec<f64>> = traits.iter().map(|&t| vec![t]).collect();
    ids(&lifted, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocReport {
    /// Per item of the test set; `None` where no pair was comparable.
    pub per_item: Vec<Option<f64>>,
    pub mean: f64,
    pub n_items: usize,
}

/// Number of values in `sorted` strictly below and equal to `x`.
fn below_and_equal(sorted: &[f64], x: f64) -> (usize, usize) {
    let lo = sorted.partition_point(|&v| v < x);
    let hi = sorted.partition_point(|&v| v <= x);
    (lo, hi - lo)
}

/// Degree of consistency. For item `l`, over learner pairs where both
/// answered `l`, `i` right and `j` wrong, and concepts `k` required by `l`:
/// the share of pairs with `theta_ik > theta_jk` among pairs with
/// `theta_ik != theta_jk`. Items with no such pair are left out of the mean.
pub fn doc(traits: &[Vec<f64>], test: &ResponseDataset, q: &QMatrix) -> Result<DocReport> {
    if traits.len() < test.n_learners() {
        return Err(Error::Dimension {
            expected: test.n_learners(),
            actual: traits.len(),
            context: "traits vs test learners",
        });
    }
    let q = if q.is_aligned_to(test.items()) {
        q.clone()
    } else {
        q.aligned_to(test.items())?
    };
    if let Some(t) = traits.iter().find(|t| t.len() != q.n_knowledge()) {
        return Err(Error::Dimension {
            expected: q.n_knowledge(),
            actual: t.len(),
            context: "trait width vs q-matrix concepts",
        });
    }
    doc_impl(
        test,
        q.n_knowledge(),
        |j| q.row(j).to_vec(),
        |i, k| traits[i][k],
    )
}

/// [`doc`] for scalar abilities: one concept, required by every item.
pub fn doc_scalar(abilities: &[f64], test: &ResponseDataset) -> Result<DocReport> {
    if abilities.len() < test.n_learners() {
        return Err(Error::Dimension {
            expected: test.n_learners(),
            actual: abilities.len(),
            context: "abilities vs test learners",
        });
    }
    doc_impl(test, 1, |_| vec![1], |i, _| abilities[i])
}

fn doc_impl(
    test: &ResponseDataset,
    k: usize,
    q_row: impl Fn(usize) -> Vec<u8>,
    trait_of: impl Fn(usize, usize) -> f64,
) -> Result<DocReport> {
    let mut by_item: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); test.n_items()];
    for r in test.responses() {
        let slot = &mut by_item[r.item];
        if r.score == 1 {
            slot.0.push(r.learner);
        } else {
            slot.1.push(r.learner);
        }
    }
    let mut per_item = Vec::with_capacity(test.n_items());
    for (j, (right, wrong)) in by_item.iter().enumerate() {
        let (mut num, mut den) = (0u64, 0u64);
        if !right.is_empty() && !wrong.is_empty() {
            for (c, &qv) in q_row(j).iter().enumerate().take(k) {
                if qv == 0 {
                    continue;
                }
                let mut lows: Vec<f64> = wrong.iter().map(|&i| trait_of(i, c)).collect();
                lows.sort_by(f64::total_cmp);
                for &i in right {
                    let (below, equal) = below_and_equal(&lows, trait_of(i, c));
                    num += below as u64;
                    den += (lows.len() - equal) as u64;
                }
            }
        }
        per_item.push((den > 0).then(|| num as f64 / den as f64));
    }
    let valid: Vec<f64> = per_item.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::NoComparablePairs);
    }
    Ok(DocReport {
        mean: valid.iter().sum::<f64>() / valid.len() as f64,
        n_items: valid.len(),
        per_item,
    })
}

/// Average ranks (ties share the mean of their positions), 1-based.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
            context: "spearman inputs",
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub min_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

impl Timings {
    fn from_samples(mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let mid = ms.len() / 2;
        let median = if ms.len() % 2 == 1 {
            ms[mid]
        } else {
            (ms[mid - 1] + ms[mid]) / 2.0
        };
        Self {
            min_ms: ms[0],
            median_ms: median,
            max_ms: ms[ms.len() - 1],
        }
    }

    fn zero() -> Self {
        Self {
            min_ms: 0.0,
            median_ms: 0.0,
            max_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub n: usize,
    pub repeat: usize,
    /// Median wall time of diagnosing all `n` learners through the GDF.
    pub t_generative_ms: f64,
    /// Median wall time of refitting the transductive model with them.
    pub t_transductive_ms: f64,
    /// `t_transductive / t_generative`; absent when `n = 0`.
    pub ratio: Option<f64>,
    pub skipped: bool,
    pub generative: Timings,
    pub transductive: Timings,
}

fn time_ms(f: &mut impl FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed().as_secs_f64() * 1e3)
}

/// Times `generative` (which must diagnose all `n` new learners) against
/// `transductive` (which must refit the baseline including them), `repeat`
/// times each. With `n = 0` nothing runs and the report is marked skipped.
pub fn speedup_benchmark(
    n: usize,
    repeat: usize,
    mut generative: impl FnMut() -> Result<()>,
    mut transductive: impl FnMut() -> Result<()>,
) -> Result<SpeedupReport> {
    if n == 0 {
        return Ok(SpeedupReport {
            n,
            repeat,
            t_generative_ms: 0.0,
            t_transductive_ms: 0.0,
            ratio: None,
            skipped: true,
            generative: Timings::zero(),
            transductive: Timings::zero(),
        });
    }
    if repeat == 0 {
        return Err(Error::Config("repeat must be at least 1".into()));
    }
    let mut gen = Vec::with_capacity(repeat);
    let mut trans = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        gen.push(time_ms(&mut generative)?);
        trans.push(time_ms(&mut transductive)?);
    }
    let (generative, transductive) = (Timings::from_samples(gen), Timings::from_samples(trans));
    let t_g = generative.median_ms.max(1e-6);
    Ok(SpeedupReport {
        n,
        repeat,
        t_generative_ms: generative.median_ms,
        t_transductive_ms: transductive.median_ms,
        ratio: Some(transductive.median_ms / t_g),
        skipped: false,
        generative,
        transductive,
    })
}
