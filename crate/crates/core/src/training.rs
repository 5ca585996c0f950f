//! Plumbing shared by every trainer: seeded mini-batching, the binary
//! cross-entropy, and the per-epoch loss log.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Response;

/// All randomness in the crate comes from ChaCha8 seeded through
/// `seed_from_u64`, which is specified bit-for-bit and platform independent.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const DEFAULT_BATCH_SIZE: usize = 256;

/// Floor applied inside the logarithms of the cross-entropy.
const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of one binary observation.
pub fn bce(p: f64, y: u8) -> f64 {
    if y == 1 {
        -p.max(PROB_FLOOR).ln()
    } else {
        -(1.0 - p).max(PROB_FLOOR).ln()
    }
}

/// Negative log-likelihood of `y` under `P(y = 1) = sigmoid(z)`, computed from
/// the logit as `softplus(z) - y z` so it stays exact when the sigmoid
/// saturates. Its derivative in `z` is `sigmoid(z) - y`.
pub fn bce_logit(z: f64, y: u8) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - f64::from(y) * z
}

/// `d bce / d p`. The variance term is floored so a saturated sigmoid yields a
/// zero (not NaN) gradient once multiplied by the sigmoid derivative.
pub fn bce_grad_wrt_prob(p: f64, y: u8) -> f64 {
    (p - f64::from(y)) / (p * (1.0 - p)).max(PROB_FLOOR)
}

/// Mean loss per training response, one entry per epoch. Entry 0 is measured
/// before the first update; entry `t` after epoch `t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub batches_per_epoch: usize,
}

/// A fitted model together with its training log.
#[derive(Debug, Clone)]
pub struct Fitted<M> {
    pub model: M,
    pub log: TrainLog,
}

/// Shuffles a copy of `responses` and yields consecutive chunks of
/// `batch_size`.
pub(crate) fn epoch_batches(
    responses: &[Response],
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<Vec<Response>> {
    let mut order = responses.to_vec();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(<[Response]>::to_vec)
        .collect()
}

pub(crate) fn n_batches(len: usize, batch_size: usize) -> usize {
    len.div_ceil(batch_size.max(1))
}

/// Dense-index bookkeeping for the distinct learners (or items) in a batch.
pub(crate) struct SlotMap {
    slot_of: Vec<usize>,
    members: Vec<usize>,
}

impl SlotMap {
    const EMPTY: usize = usize::MAX;

    pub fn new(universe: usize) -> Self {
        Self {
            slot_of: vec![Self::EMPTY; universe],
            members: Vec::new(),
        }
    }

    pub fn slot(&mut self, index: usize) -> usize {
        if self.slot_of[index] == Self::EMPTY {
            self.slot_of[index] = self.members.len();
            self.members.push(index);
        }
        self.slot_of[index]
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn clear(&mut self) {
        for &m in &self.members {
            self.slot_of[m] = Self::EMPTY;
        }
        self.members.clear();
    }
}
