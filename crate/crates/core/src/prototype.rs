//! Condensed Nearest Neighbors prototype selection (Hart's algorithm).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{DissimilaritySample, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondensationResult {
    /// Indices into the input collection, ascending.
    pub retained_indices: Vec<usize>,
    /// Full sweeps executed, including the final clean one.
    pub passes: usize,
}

impl CondensationResult {
    pub fn retained(&self) -> usize {
        self.retained_indices.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 1-NN over the store; ties resolved by lowest original index.
fn classify_1nn(samples: &[DissimilaritySample], store: &[usize], query: usize) -> Label {
    let mut best = store[0];
    let mut best_d = sq_dist(&samples[best].u, &samples[query].u);
    for &i in &store[1..] {
        let d = sq_dist(&samples[i].u, &samples[query].u);
        if d < best_d || (d == best_d && i < best) {
            best_d = d;
            best = i;
        }
    }
    samples[best].label
}

/// Hart's condensation: start from one sample per class in scan order, then
/// sweep a fixed seeded permutation, absorbing every sample the current
/// store misclassifies, until a sweep absorbs nothing.
pub fn condense(samples: &[DissimilaritySample], k: usize, seed: u64) -> Result<CondensationResult> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("condense requires samples"));
    }
    if k != 1 {
        return Err(Error::UnsupportedParameter(format!(
            "condense supports only k = 1, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut store: Vec<usize> = Vec::new();
    let mut in_store = vec![false; samples.len()];
    let mut seen_pos = false;
    let mut seen_neg = false;
    for &i in &order {
        let slot = match samples[i].label {
            Label::Positive => &mut seen_pos,
            Label::Negative => &mut seen_neg,
        };
        if !*slot {
            *slot = true;
            store.push(i);
            in_store[i] = true;
        }
        if seen_pos && seen_neg {
            break;
        }
    }

    let mut passes = 0;
    loop {
        passes += 1;
        let mut added = false;
        for &i in &order {
            if in_store[i] {
                continue;
            }
            if classify_1nn(samples, &store, i) != samples[i].label {
                store.push(i);
                in_store[i] = true;
                added = true;
            }
        }
        if !added {
            break;
        }
    }

    store.sort_unstable();
    Ok(CondensationResult {
        retained_indices: store,
        passes,
    })
}

/// Test-facing oracle view: classifies `query` by 1-NN over `subset`, same
/// tie rule as the condensation loop.
pub fn one_nn_label(samples: &[DissimilaritySample], subset: &[usize], query: &[f64]) -> Label {
    let mut best = subset[0];
    let mut best_d = sq_dist(&samples[best].u, query);
    for &i in &subset[1..] {
        let d = sq_dist(&samples[i].u, query);
        if d < best_d || (d == best_d && i < best) {
            best_d = d;
            best = i;
        }
    }
    samples[best].label
}
