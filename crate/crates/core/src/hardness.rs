//! kDisagreeing Neighbors instance-hardness estimation.

use serde::{Deserialize, Serialize};

use crate::dichotomy::{DissimilaritySample, Label};
use crate::error::{Error, Result};

/// Fraction of the k nearest training neighbors whose label disagrees with
/// the query. Stored as a ratio so every value is exactly one of
/// {0, 1/k, ..., 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardnessScore {
    pub disagreeing: usize,
    pub k: usize,
}

impl HardnessScore {
    pub fn value(&self) -> f64 {
        self.disagreeing as f64 / self.k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForgeryQuality {
    Bad,
    Good,
}

/// Skilled-forgery characterization: bad quality when IH <= 0.5, good when
/// above.
pub fn classify_forgery_quality(score: HardnessScore) -> ForgeryQuality {
    // value <= 1/2 compared in integers to keep the boundary exact
    if 2 * score.disagreeing <= score.k {
        ForgeryQuality::Bad
    } else {
        ForgeryQuality::Good
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the k nearest training samples by Euclidean distance, ties at
/// the boundary broken by lower training index. Selection runs through a
/// partial partition rather than a full sort.
pub fn k_nearest(query: &[f64], training: &[DissimilaritySample], k: usize) -> Result<Vec<usize>> {
    if training.len() < k {
        return Err(Error::TrainingSmallerThanK {
            training: training.len(),
            k,
        });
    }
    let mut keyed: Vec<(f64, usize)> = training
        .iter()
        .enumerate()
        .map(|(i, s)| (sq_dist(query, &s.u), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, cmp);
    }
    let mut head: Vec<(f64, usize)> = keyed[..k].to_vec();
    head.sort_unstable_by(cmp);
    Ok(head.into_iter().map(|(_, i)| i).collect())
}

/// kDN of a query against a fixed training collection.
pub fn kdn(
    query: &[f64],
    query_label: Label,
    training: &[DissimilaritySample],
    k: usize,
) -> Result<HardnessScore> {
    let neighbors = k_nearest(query, training, k)?;
    let disagreeing = neighbors
        .iter()
        .filter(|&&i| training[i].label != query_label)
        .count();
    Ok(HardnessScore { disagreeing, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::QueryKind;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(u: Vec<f64>, label: Label) -> DissimilaritySample {
        DissimilaritySample {
            u,
            label,
            query_kind: QueryKind::Genuine,
            query_ref: (0, 0),
            reference_ref: (0, 0),
        }
    }

    /// Independent oracle: full sort over all training points.
    fn kdn_oracle(
        query: &[f64],
        query_label: Label,
        training: &[DissimilaritySample],
        k: usize,
    ) -> HardnessScore {
        let mut all: Vec<(f64, usize)> = training
            .iter()
            .enumerate()
            .map(|(i, s)| (sq_dist(query, &s.u), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let disagreeing = all[..k]
            .iter()
            .filter(|&&(_, i)| training[i].label != query_label)
            .count();
        HardnessScore { disagreeing, k }
    }

    fn cluster(center: f64, n: usize, label: Label, rng: &mut ChaCha8Rng) -> Vec<DissimilaritySample> {
        (0..n)
            .map(|_| {
                sample(
                    vec![center + rng.gen_range(-0.3..0.3), center + rng.gen_range(-0.3..0.3)],
                    label,
                )
            })
            .collect()
    }

    #[test]
    fn all_agree_and_all_disagree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut training = cluster(0.0, 20, Label::Positive, &mut rng);
        training.extend(cluster(10.0, 20, Label::Negative, &mut rng));
        let s = kdn(&[0.0, 0.0], Label::Positive, &training, 7).unwrap();
        assert_eq!(s.value(), 0.0);
        // the good-quality skilled forgery case: negative query deep inside
        // the positive cluster
        let s = kdn(&[0.0, 0.0], Label::Negative, &training, 7).unwrap();
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn three_of_seven() {
        let mut training = Vec::new();
        for i in 0..3 {
            training.push(sample(vec![i as f64 * 0.1], Label::Negative));
        }
        for i in 0..4 {
            training.push(sample(vec![0.3 + i as f64 * 0.1], Label::Positive));
        }
        training.push(sample(vec![100.0], Label::Negative));
        let s = kdn(&[0.0], Label::Positive, &training, 7).unwrap();
        assert_eq!(s.disagreeing, 3);
        assert!((s.value() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn matches_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let training: Vec<_> = (0..50)
            .map(|_| {
                sample(
                    vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                    if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative },
                )
            })
            .collect();
        for _ in 0..20 {
            let q = vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let label = if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative };
            assert_eq!(kdn(&q, label, &training, 7).unwrap(), kdn_oracle(&q, label, &training, 7));
        }
    }

    #[test]
    fn tie_at_boundary_prefers_lower_index() {
        // four equidistant points, k = 2: indices 0 and 1 must win
        let training = vec![
            sample(vec![1.0, 0.0], Label::Positive),
            sample(vec![-1.0, 0.0], Label::Negative),
            sample(vec![0.0, 1.0], Label::Negative),
            sample(vec![0.0, -1.0], Label::Negative),
        ];
        assert_eq!(k_nearest(&[0.0, 0.0], &training, 2).unwrap(), vec![0, 1]);
        let s = kdn(&[0.0, 0.0], Label::Positive, &training, 2).unwrap();
        assert_eq!(s.disagreeing, 1);
    }

    #[test]
    fn training_smaller_than_k_errors() {
        let training = vec![sample(vec![0.0], Label::Positive)];
        assert!(kdn(&[0.0], Label::Positive, &training, 7).is_err());
    }

    #[test]
    fn forgery_quality_boundary() {
        assert_eq!(classify_forgery_quality(HardnessScore { disagreeing: 0, k: 7 }), ForgeryQuality::Bad);
        assert_eq!(classify_forgery_quality(HardnessScore { disagreeing: 4, k: 7 }), ForgeryQuality::Good);
        // even K: exactly 0.5 is bad per the <= rule
        assert_eq!(classify_forgery_quality(HardnessScore { disagreeing: 3, k: 6 }), ForgeryQuality::Bad);
    }

    #[test]
    fn duplicate_of_query_never_increases_kdn() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..30 {
            let mut training: Vec<_> = (0..15)
                .map(|_| {
                    sample(
                        vec![rng.gen_range(-2.0..2.0)],
                        if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative },
                    )
                })
                .collect();
            let q = vec![rng.gen_range(-2.0..2.0)];
            let before = kdn(&q, Label::Positive, &training, 7).unwrap();
            training.push(sample(q.clone(), Label::Positive));
            let after = kdn(&q, Label::Positive, &training, 7).unwrap();
            assert!(after.disagreeing <= before.disagreeing);
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let training: Vec<_> = (0..25)
                .map(|_| {
                    sample(
                        vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                        if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative },
                    )
                })
                .collect();
            let q = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let base = kdn(&q, Label::Positive, &training, 7).unwrap();
            let mut reversed = training.clone();
            reversed.reverse();
            let rev = kdn(&q, Label::Positive, &reversed, 7).unwrap();
            // continuous coordinates: boundary ties are measure zero, so the
            // disagreement count survives any permutation
            prop_assert_eq!(base.disagreeing, rev.disagreeing);
        }
    }
}
