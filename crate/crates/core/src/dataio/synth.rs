use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{IdIndex, QMatrix, Response, ResponseDataset};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::training::rng;

/// Generating parameters of a synthetic 2PL dataset, indexed like the
/// dataset's learner and item indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub theta_star: Vec<f64>,
    pub a_star: Vec<f64>,
    pub b_star: Vec<f64>,
}

impl TrueParams {
    pub fn prob(&self, learner: usize, item: usize) -> f64 {
        sigmoid(self.a_star[item] * (self.theta_star[learner] - self.b_star[item]))
    }
}

/// Samples a 2PL dataset: `theta*, b* ~ N(0, 1)`, `a* ~ U(0.5, 2.5)`, each
/// pair observed with probability `density`. Learners are `s0..`, items `e0..`.
pub fn synth_irt(
    n_learners: usize,
    n_items: usize,
    seed: u64,
    density: f64,
) -> Result<(ResponseDataset, TrueParams)> {
    if n_learners == 0 || n_items == 0 {
        return Err(Error::Config(
            "synthetic data needs at least one learner and one item".into(),
        ));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    let mut rng = rng(seed);
    let theta_star: Vec<f64> = (0..n_learners)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let b_star: Vec<f64> = (0..n_items)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let disc = Uniform::new(0.5, 2.5).expect("valid range");
    let a_star: Vec<f64> = (0..n_items).map(|_| disc.sample(&mut rng)).collect();
    let params = TrueParams {
        theta_star,
        a_star,
        b_star,
    };

    let mut responses = Vec::new();
    for learner in 0..n_learners {
        for item in 0..n_items {
            if density < 1.0 && rng.random::<f64>() >= density {
                continue;
            }
            let score = u8::from(rng.random::<f64>() < params.prob(learner, item));
            responses.push(Response {
                learner,
                item,
                score,
            });
        }
    }
    let learners: IdIndex = (0..n_learners).map(|i| format!("s{i}")).collect();
    let items: IdIndex = (0..n_items).map(|j| format!("e{j}")).collect();
    Ok((
        ResponseDataset::with_index(learners, items, responses)?,
        params,
    ))
}

/// A random Q-matrix over `items` with `k` concepts labelled `k0..`. Every
/// item requires one uniformly chosen concept and each other concept with
/// probability `extra`.
pub fn synth_qmatrix(items: &IdIndex, k: usize, extra: f64, seed: u64) -> Result<QMatrix> {
    if k == 0 {
        return Err(Error::Config(
            "a q-matrix needs at least one concept".into(),
        ));
    }
    let mut rng = rng(seed);
    let rows = (0..items.len())
        .map(|_| {
            let primary = rng.random_range(0..k);
            (0..k)
                .map(|c| u8::from(c == primary || rng.random::<f64>() < extra))
                .collect()
        })
        .collect();
    QMatrix::new(
        (0..k).map(|c| format!("k{c}")).collect(),
        items.iter().map(str::to_owned).collect(),
        rows,
    )
}
