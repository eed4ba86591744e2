//! Multi-reference verification: per-reference partial decisions fused into
//! a final signed score.

use serde::{Deserialize, Serialize};

use crate::datamodel::SignatureRecord;
use crate::dichotomy::build_query_set;
use crate::dichotomizer::DichotomizerModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Max,
    Min,
    Mean,
    Median,
}

impl FusionKind {
    pub const ALL: [FusionKind; 4] = [
        FusionKind::Max,
        FusionKind::Min,
        FusionKind::Mean,
        FusionKind::Median,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionKind::Max => "max",
            FusionKind::Min => "min",
            FusionKind::Mean => "mean",
            FusionKind::Median => "median",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max" => Some(FusionKind::Max),
            "min" => Some(FusionKind::Min),
            "mean" => Some(FusionKind::Mean),
            "median" => Some(FusionKind::Median),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub fused_score: f64,
    pub partial_scores: Vec<f64>,
    /// Index of the extremal partial score; present only for max/min, where
    /// it names the dynamically selected reference.
    pub selected_reference_index: Option<usize>,
    pub decision: Decision,
}

/// Fuses partial signed distances. Max/min report the first extremal index;
/// the median of an even count is the midpoint average.
pub fn fuse(scores: &[f64], kind: FusionKind) -> Result<(f64, Option<usize>)> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("fuse requires at least one score"));
    }
    Ok(match kind {
        FusionKind::Max => {
            let mut idx = 0;
            for (i, v) in scores.iter().enumerate() {
                if *v > scores[idx] {
                    idx = i;
                }
            }
            (scores[idx], Some(idx))
        }
        FusionKind::Min => {
            let mut idx = 0;
            for (i, v) in scores.iter().enumerate() {
                if *v < scores[idx] {
                    idx = i;
                }
            }
            (scores[idx], Some(idx))
        }
        FusionKind::Mean => (scores.iter().sum::<f64>() / scores.len() as f64, None),
        FusionKind::Median => {
            let mut sorted = scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let m = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            (m, None)
        }
    })
}

/// Scores the questioned signature against every reference, fuses the
/// partial scores, and accepts iff the fused score reaches the threshold.
pub fn verify(
    model: &DichotomizerModel,
    questioned: &SignatureRecord,
    references: &[&SignatureRecord],
    kind: FusionKind,
    threshold: f64,
) -> Result<VerificationOutcome> {
    let queries = build_query_set(questioned, references)?;
    let partial_scores: Vec<f64> = queries
        .iter()
        .map(|q| model.score_raw(&q.u))
        .collect::<Result<_>>()?;
    let (fused_score, selected_reference_index) = fuse(&partial_scores, kind)?;
    let decision = if fused_score >= threshold {
        Decision::Accept
    } else {
        Decision::Reject
    };
    Ok(VerificationOutcome {
        fused_score,
        partial_scores,
        selected_reference_index,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{FeatureVector, SignatureKind, StandardScaler};
    use crate::dichotomy::Label;
    use crate::dichotomizer::{train, KernelParams, TrainOptions};
    use proptest::prelude::*;

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse(&[-1.0, 0.5, 2.0], FusionKind::Max).unwrap(), (2.0, Some(2)));
        assert_eq!(fuse(&[1.0, 3.0], FusionKind::Median).unwrap(), (2.0, None));
        assert_eq!(fuse(&[-1.0, 0.5, 2.0], FusionKind::Min).unwrap(), (-1.0, Some(0)));
        assert_eq!(fuse(&[2.0, 2.0, 1.0], FusionKind::Max).unwrap().1, Some(0));
        assert!(fuse(&[], FusionKind::Max).is_err());
    }

    fn zero_origin_model() -> DichotomizerModel {
        // positives hug the origin of the dissimilarity space
        let x = vec![
            vec![0.1, 0.1],
            vec![0.2, 0.0],
            vec![3.0, 3.0],
            vec![2.5, 3.5],
        ];
        let y = vec![Label::Positive, Label::Positive, Label::Negative, Label::Negative];
        train(
            &x,
            &y,
            &KernelParams { gamma: 0.5, c: 10.0 },
            &TrainOptions { tol: 1e-6, ..TrainOptions::default() },
            StandardScaler::identity(2),
        )
        .unwrap()
    }

    fn record(w: u32, s: u32, kind: SignatureKind, v: Vec<f64>) -> SignatureRecord {
        SignatureRecord {
            writer_id: w,
            signature_id: s,
            kind,
            features: FeatureVector::new(v).unwrap(),
        }
    }

    #[test]
    fn identical_reference_selected_by_max() {
        let model = zero_origin_model();
        let questioned = record(0, 9, SignatureKind::Genuine, vec![5.0, 5.0]);
        let refs = [
            record(0, 0, SignatureKind::Genuine, vec![1.0, 1.0]),
            record(0, 1, SignatureKind::Genuine, vec![5.0, 5.0]),
            record(0, 2, SignatureKind::Genuine, vec![8.0, 2.0]),
        ];
        let ref_slice: Vec<&SignatureRecord> = refs.iter().collect();
        let out = verify(&model, &questioned, &ref_slice, FusionKind::Max, 0.0).unwrap();
        // the identical reference yields the zero dissimilarity vector, which
        // maximizes the signed distance for this model
        assert_eq!(out.selected_reference_index, Some(1));
        assert_eq!(out.decision, Decision::Accept);
        assert_eq!(out.fused_score, out.partial_scores[1]);
    }

    #[test]
    fn single_reference_reduces_to_partial_score() {
        let model = zero_origin_model();
        let questioned = record(0, 9, SignatureKind::Genuine, vec![5.0, 5.0]);
        let r = record(0, 0, SignatureKind::Genuine, vec![5.1, 4.9]);
        for kind in FusionKind::ALL {
            let out = verify(&model, &questioned, &[&r], kind, 0.0).unwrap();
            assert_eq!(out.fused_score, out.partial_scores[0]);
        }
    }

    #[test]
    fn max_decision_matches_argmax_reference_alone() {
        let model = zero_origin_model();
        let questioned = record(0, 9, SignatureKind::Genuine, vec![5.0, 5.0]);
        let refs = [
            record(0, 0, SignatureKind::Genuine, vec![4.8, 5.1]),
            record(0, 1, SignatureKind::Genuine, vec![9.0, 0.0]),
        ];
        let ref_slice: Vec<&SignatureRecord> = refs.iter().collect();
        let out = verify(&model, &questioned, &ref_slice, FusionKind::Max, 0.1).unwrap();
        let best = out.selected_reference_index.unwrap();
        let solo = verify(&model, &questioned, &[ref_slice[best]], FusionKind::Max, 0.1).unwrap();
        assert_eq!(out.decision, solo.decision);
        assert_eq!(out.fused_score, solo.fused_score);
    }

    proptest! {
        #[test]
        fn fusion_ordering(scores in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let max = fuse(&scores, FusionKind::Max).unwrap().0;
            let min = fuse(&scores, FusionKind::Min).unwrap().0;
            let mean = fuse(&scores, FusionKind::Mean).unwrap().0;
            let median = fuse(&scores, FusionKind::Median).unwrap().0;
            prop_assert!(max >= mean - 1e-12);
            prop_assert!(mean >= min - 1e-12);
            prop_assert!(max >= median - 1e-12 && median >= min - 1e-12);
        }

        #[test]
        fn max_monotone_under_append(
            scores in proptest::collection::vec(-10.0f64..10.0, 1..8),
            extra in -10.0f64..10.0,
        ) {
            let before = fuse(&scores, FusionKind::Max).unwrap().0;
            let mut extended = scores.clone();
            extended.push(extra);
            let after = fuse(&extended, FusionKind::Max).unwrap().0;
            prop_assert!(after >= before);
        }
    }
}
