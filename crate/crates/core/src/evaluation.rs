//! Per-writer user-threshold EER, IH-binned accuracy tables, and the
//! generalization / transfer-evaluation harness.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{Dataset, SignatureKind, SignatureRecord};
use crate::dichotomy::{build_query_set, DissimilaritySample, Label, QueryKind};
use crate::dichotomizer::DichotomizerModel;
use crate::error::{Error, Result};
use crate::hardness::{kdn, HardnessScore};
use crate::verification::{fuse, FusionKind};

/// Candidate thresholds are every score, the midpoints between adjacent
/// sorted scores, and the +/- infinity sentinels. FRR(t) is the fraction of
/// genuine scores below t, FAR(t) the fraction of skilled scores at or above
/// t. Returns the threshold minimizing |FAR - FRR| (ties to the smaller
/// threshold) and (FAR + FRR) / 2 there.
pub fn user_threshold_eer(genuine_scores: &[f64], skilled_scores: &[f64]) -> Result<(f64, f64)> {
    if genuine_scores.is_empty() || skilled_scores.is_empty() {
        return Err(Error::EmptyInput("user_threshold_eer requires both score sets"));
    }
    let mut all: Vec<f64> = genuine_scores
        .iter()
        .chain(skilled_scores)
        .copied()
        .collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut candidates = Vec::with_capacity(2 * all.len() + 2);
    candidates.push(f64::NEG_INFINITY);
    for w in all.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.extend_from_slice(&all);
    candidates.push(f64::INFINITY);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<(f64, f64, f64)> = None; // (|diff|, threshold, eer)
    for &t in &candidates {
        let frr = genuine_scores.iter().filter(|&&s| s < t).count() as f64
            / genuine_scores.len() as f64;
        let far = skilled_scores.iter().filter(|&&s| s >= t).count() as f64
            / skilled_scores.len() as f64;
        let diff = (far - frr).abs();
        if best.map_or(true, |(d, _, _)| diff < d) {
            best = Some((diff, t, 0.5 * (far + frr)));
        }
    }
    let (_, threshold, eer) = best.expect("candidates non-empty");
    Ok((threshold, eer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriterEvaluation {
    pub writer_id: u32,
    pub genuine_scores: Vec<f64>,
    pub skilled_scores: Vec<f64>,
    pub random_scores: Vec<f64>,
    pub simple_scores: Option<Vec<f64>>,
    pub user_threshold: f64,
    pub eer: f64,
}

/// Global EER: the mean of per-writer EERs.
pub fn global_eer(per_writer: &[WriterEvaluation]) -> Result<f64> {
    if per_writer.is_empty() {
        return Err(Error::EmptyInput("global_eer requires writer evaluations"));
    }
    Ok(per_writer.iter().map(|w| w.eer).sum::<f64>() / per_writer.len() as f64)
}

/// Mean and population standard deviation over replications.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Formats a replicated metric the way result tables report it, e.g.
/// "3.47 (0.15)".
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ({std:.2})")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalCategory {
    Positive,
    NegativeRandom,
    NegativeSkilled,
    NegativeSimple,
}

impl EvalCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalCategory::Positive => "positive",
            EvalCategory::NegativeRandom => "negative_random",
            EvalCategory::NegativeSkilled => "negative_skilled",
            EvalCategory::NegativeSimple => "negative_simple",
        }
    }

    fn of(kind: QueryKind) -> Self {
        match kind {
            QueryKind::Genuine => EvalCategory::Positive,
            QueryKind::Random => EvalCategory::NegativeRandom,
            QueryKind::Skilled => EvalCategory::NegativeSkilled,
            QueryKind::Simple => EvalCategory::NegativeSimple,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhRow {
    /// kDN numerator; the bin value is numerator / k.
    pub numerator: usize,
    pub sample_count: usize,
    /// Accuracy (in [0,1]) per reference configuration; None for empty bins.
    pub accuracy: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhAccuracyTable {
    pub k: usize,
    pub config_names: Vec<String>,
    /// k + 1 rows, one per possible kDN value.
    pub rows: Vec<IhRow>,
}

/// Builds the IH-vs-accuracy table from (hardness, per-configuration
/// correctness) outcomes. All hardness scores must share the same k.
pub fn ih_accuracy_table(
    outcomes: &[(HardnessScore, Vec<bool>)],
    config_names: &[String],
) -> Result<IhAccuracyTable> {
    let k = outcomes.first().map(|(h, _)| h.k).unwrap_or(7);
    for (h, _) in outcomes {
        if h.k != k {
            return Err(Error::MixedK(k, h.k));
        }
    }
    let n_cfg = config_names.len();
    let mut counts = vec![0usize; k + 1];
    let mut correct = vec![vec![0usize; n_cfg]; k + 1];
    for (h, flags) in outcomes {
        counts[h.disagreeing] += 1;
        for (c, &ok) in flags.iter().enumerate() {
            if ok {
                correct[h.disagreeing][c] += 1;
            }
        }
    }
    let rows = (0..=k)
        .map(|bin| IhRow {
            numerator: bin,
            sample_count: counts[bin],
            accuracy: (0..n_cfg)
                .map(|c| {
                    if counts[bin] == 0 {
                        None
                    } else {
                        Some(correct[bin][c] as f64 / counts[bin] as f64)
                    }
                })
                .collect(),
        })
        .collect();
    Ok(IhAccuracyTable {
        k,
        config_names: config_names.to_vec(),
        rows,
    })
}

/// How the exploitation set is segmented per writer: the first
/// `references_per_writer` genuines (by signature id) enroll as references,
/// the next `genuine_queries` genuines are questioned, plus skilled / simple
/// forgeries of the writer and random forgeries borrowed from other writers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitationPlan {
    pub references_per_writer: usize,
    pub genuine_queries: usize,
    pub skilled_queries: usize,
    pub random_queries: usize,
    #[serde(default)]
    pub simple_queries: usize,
    pub seed: u64,
}

impl ExploitationPlan {
    fn validate(&self) -> Result<()> {
        if self.references_per_writer == 0 {
            return Err(Error::Config("plan requires at least one reference".into()));
        }
        Ok(())
    }
}

/// One questioned signature with its per-reference partial scores and the
/// IH bin computed from the first-reference dissimilarity vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Writer the signature is claimed to belong to.
    pub claimed_writer: u32,
    /// Provenance of the questioned signature itself.
    pub query_ref: (u32, u32),
    pub category: EvalCategory,
    pub partial_scores: Vec<f64>,
    pub hardness: Option<HardnessScore>,
}

/// A reference configuration: how many references are used and how their
/// partial scores fuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefConfig {
    pub name: String,
    pub references: usize,
    pub fusion: FusionKind,
}

impl RefConfig {
    pub fn new(references: usize, fusion: FusionKind) -> Self {
        let name = if references == 1 {
            "R1".to_string()
        } else {
            format!("R{}_{}", references, fusion.as_str())
        };
        RefConfig {
            name,
            references,
            fusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRun {
    pub queries: Vec<QueryResult>,
    pub max_references: usize,
}

/// Runs the generalization phase of the pipeline: builds the per-writer
/// query sets, scores each dissimilarity vector with the frozen model and
/// scaler, and optionally attaches IH bins computed against the (condensed,
/// standardized) training collection.
pub struct Evaluator<'a> {
    pub model: &'a DichotomizerModel,
    /// Standardized training collection used for instance hardness; when
    /// absent, hardness fields stay empty.
    pub training: Option<&'a [DissimilaritySample]>,
    pub ih_k: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a DichotomizerModel) -> Self {
        Evaluator {
            model,
            training: None,
            ih_k: 7,
        }
    }

    pub fn with_training(mut self, training: &'a [DissimilaritySample]) -> Self {
        self.training = Some(training);
        self
    }

    fn score_query(
        &self,
        questioned: &SignatureRecord,
        claimed_writer: u32,
        references: &[&SignatureRecord],
    ) -> Result<QueryResult> {
        let queries = build_query_set(questioned, references)?;
        let partial_scores: Vec<f64> = queries
            .iter()
            .map(|q| self.model.score_raw(&q.u))
            .collect::<Result<_>>()?;
        let hardness = match self.training {
            Some(training) => {
                let u = self.model.scaler.transform(&queries[0].u)?;
                let label = if queries[0].label == Label::Positive {
                    Label::Positive
                } else {
                    Label::Negative
                };
                Some(kdn(&u, label, training, self.ih_k)?)
            }
            None => None,
        };
        Ok(QueryResult {
            claimed_writer,
            query_ref: (questioned.writer_id, questioned.signature_id),
            category: EvalCategory::of(if questioned.writer_id != claimed_writer {
                QueryKind::Random
            } else {
                match questioned.kind {
                    SignatureKind::Genuine => QueryKind::Genuine,
                    SignatureKind::Skilled => QueryKind::Skilled,
                    SignatureKind::Simple => QueryKind::Simple,
                }
            }),
            partial_scores,
            hardness,
        })
    }

    /// Evaluates an exploitation dataset. The model and its scaler are used
    /// verbatim, which makes this the transfer evaluation when `expl` comes
    /// from a foreign source.
    pub fn run(&self, expl: &Dataset, plan: &ExploitationPlan) -> Result<GeneralizationRun> {
        plan.validate()?;
        if expl.dimensionality != self.model.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dims(),
                actual: expl.dimensionality,
            });
        }
        let writers = expl.writer_ids();
        let r = plan.references_per_writer;
        let mut queries = Vec::new();
        for &w in &writers {
            let genuines = expl.genuines_of(w);
            let needed = r + plan.genuine_queries;
            if genuines.len() < needed {
                return Err(Error::InsufficientGenuines {
                    writer_id: w,
                    available: genuines.len(),
                    required: needed,
                });
            }
            let references: Vec<&SignatureRecord> = genuines[..r].to_vec();
            for q in &genuines[r..needed] {
                queries.push(self.score_query(q, w, &references)?);
            }
            for (kind, count) in [
                (SignatureKind::Skilled, plan.skilled_queries),
                (SignatureKind::Simple, plan.simple_queries),
            ] {
                if count == 0 {
                    continue;
                }
                let forgeries = expl.of_kind(w, kind);
                if forgeries.len() < count {
                    return Err(Error::Config(format!(
                        "writer {w} has {} {} forgeries, plan needs {count}",
                        forgeries.len(),
                        kind.as_str()
                    )));
                }
                for q in &forgeries[..count] {
                    queries.push(self.score_query(q, w, &references)?);
                }
            }
            if plan.random_queries > 0 {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(plan.seed ^ (u64::from(w).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                let mut others: Vec<u32> = writers.iter().copied().filter(|&o| o != w).collect();
                if others.is_empty() {
                    return Err(Error::Config("random queries need at least two writers".into()));
                }
                others.shuffle(&mut rng);
                for i in 0..plan.random_queries {
                    let other = others[i % others.len()];
                    let other_genuines = expl.genuines_of(other);
                    let pick = *other_genuines
                        .choose(&mut rng)
                        .ok_or_else(|| Error::Config(format!("writer {other} has no genuines")))?;
                    queries.push(self.score_query(pick, w, &references)?);
                }
            }
        }
        Ok(GeneralizationRun {
            queries,
            max_references: r,
        })
    }

    /// Transfer evaluation: the foreign exploitation set is scored with the
    /// model and scaler exactly as trained.
    pub fn transfer_eval(&self, foreign: &Dataset, plan: &ExploitationPlan) -> Result<GeneralizationRun> {
        self.run(foreign, plan)
    }
}

impl GeneralizationRun {
    pub fn fused(&self, q: &QueryResult, cfg: &RefConfig) -> Result<f64> {
        let n = cfg.references.min(q.partial_scores.len());
        Ok(fuse(&q.partial_scores[..n], cfg.fusion)?.0)
    }

    /// Per-writer evaluations under one reference configuration. Thresholds
    /// come from genuine versus skilled fused scores only; random and simple
    /// forgeries are reported but excluded from threshold selection.
    pub fn writer_evaluations(&self, cfg: &RefConfig) -> Result<Vec<WriterEvaluation>> {
        let mut writers: Vec<u32> = Vec::new();
        for q in &self.queries {
            if !writers.contains(&q.claimed_writer) {
                writers.push(q.claimed_writer);
            }
        }
        let mut out = Vec::with_capacity(writers.len());
        for w in writers {
            let mut genuine = Vec::new();
            let mut skilled = Vec::new();
            let mut random = Vec::new();
            let mut simple = Vec::new();
            for q in self.queries.iter().filter(|q| q.claimed_writer == w) {
                let s = self.fused(q, cfg)?;
                match q.category {
                    EvalCategory::Positive => genuine.push(s),
                    EvalCategory::NegativeSkilled => skilled.push(s),
                    EvalCategory::NegativeRandom => random.push(s),
                    EvalCategory::NegativeSimple => simple.push(s),
                }
            }
            let (user_threshold, eer) = user_threshold_eer(&genuine, &skilled)?;
            out.push(WriterEvaluation {
                writer_id: w,
                genuine_scores: genuine,
                skilled_scores: skilled,
                random_scores: random,
                simple_scores: if simple.is_empty() { None } else { Some(simple) },
                user_threshold,
                eer,
            });
        }
        Ok(out)
    }

    pub fn global_eer(&self, cfg: &RefConfig) -> Result<f64> {
        global_eer(&self.writer_evaluations(cfg)?)
    }

    /// IH-vs-accuracy table for one query category across several reference
    /// configurations, decided at each writer's own user threshold.
    pub fn ih_table(&self, category: EvalCategory, configs: &[RefConfig]) -> Result<IhAccuracyTable> {
        let mut thresholds: Vec<std::collections::BTreeMap<u32, f64>> = Vec::new();
        for cfg in configs {
            let evals = self.writer_evaluations(cfg)?;
            thresholds.push(evals.iter().map(|e| (e.writer_id, e.user_threshold)).collect());
        }
        let mut outcomes: Vec<(HardnessScore, Vec<bool>)> = Vec::new();
        for q in self.queries.iter().filter(|q| q.category == category) {
            let hardness = q.hardness.ok_or_else(|| {
                Error::Config("ih_table requires hardness scores; evaluator had no training set".into())
            })?;
            let mut flags = Vec::with_capacity(configs.len());
            for (cfg, th) in configs.iter().zip(&thresholds) {
                let score = self.fused(q, cfg)?;
                let threshold = th[&q.claimed_writer];
                let accept = score >= threshold;
                let correct = match category {
                    EvalCategory::Positive => accept,
                    _ => !accept,
                };
                flags.push(correct);
            }
            outcomes.push((hardness, flags));
        }
        let names: Vec<String> = configs.iter().map(|c| c.name.clone()).collect();
        ih_accuracy_table(&outcomes, &names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive-sweep oracle sharing only the definition, not the code
    /// path: evaluates every candidate threshold by brute force.
    fn eer_oracle(genuine: &[f64], skilled: &[f64]) -> (f64, f64) {
        let mut candidates = vec![f64::NEG_INFINITY, f64::INFINITY];
        let mut all: Vec<f64> = genuine.iter().chain(skilled).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        candidates.extend_from_slice(&all);
        for w in all.windows(2) {
            candidates.push((w[0] + w[1]) / 2.0);
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let mut best: Option<(f64, f64, f64)> = None;
        for &t in &candidates {
            let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
            let far = skilled.iter().filter(|&&s| s >= t).count() as f64 / skilled.len() as f64;
            let d = (far - frr).abs();
            match best {
                Some((bd, bt, _)) if d > bd || (d == bd && t >= bt) => {}
                _ => best = Some((d, t, (far + frr) / 2.0)),
            }
        }
        let (_, t, e) = best.unwrap();
        (t, e)
    }

    #[test]
    fn separable_scores_give_zero_eer() {
        let (t, eer) = user_threshold_eer(&[2.0, 3.0], &[0.0, 1.0]).unwrap();
        assert_eq!(eer, 0.0);
        assert_eq!(t, 1.5);
    }

    #[test]
    fn identical_distributions_give_half() {
        let (_, eer) = user_threshold_eer(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(eer, 0.5);
    }

    #[test]
    fn example_matches_sweep_oracle() {
        let genuine = [0.9, 0.7, 0.2];
        let skilled = [0.8, 0.1, 0.05];
        let got = user_threshold_eer(&genuine, &skilled).unwrap();
        let want = eer_oracle(&genuine, &skilled);
        assert_eq!(got, want);
    }

    #[test]
    fn random_score_sets_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let ng = rng.gen_range(1..20);
            let ns = rng.gen_range(1..20);
            let genuine: Vec<f64> = (0..ng).map(|_| rng.gen_range(-2.0..4.0)).collect();
            let skilled: Vec<f64> = (0..ns).map(|_| rng.gen_range(-4.0..2.0)).collect();
            let got = user_threshold_eer(&genuine, &skilled).unwrap();
            let want = eer_oracle(&genuine, &skilled);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn empty_inputs_error() {
        assert!(user_threshold_eer(&[], &[1.0]).is_err());
        assert!(user_threshold_eer(&[1.0], &[]).is_err());
    }

    #[test]
    fn global_eer_examples() {
        let w = |id, eer| WriterEvaluation {
            writer_id: id,
            genuine_scores: vec![],
            skilled_scores: vec![],
            random_scores: vec![],
            simple_scores: None,
            user_threshold: 0.0,
            eer,
        };
        assert_eq!(global_eer(&[w(0, 0.2)]).unwrap(), 0.2);
        assert_eq!(global_eer(&[w(0, 0.0), w(1, 0.1)]).unwrap(), 0.05);
    }

    #[test]
    fn mean_std_formatting() {
        let (m, s) = mean_std(&[3.32, 3.62, 3.47]);
        assert!((m - 3.47).abs() < 1e-9);
        assert_eq!(format_mean_std(m, s), format!("{m:.2} ({s:.2})"));
        assert_eq!(format_mean_std(3.47, 0.15), "3.47 (0.15)");
    }

    #[test]
    fn ih_table_shape_and_empty_bins() {
        let h = |d| HardnessScore { disagreeing: d, k: 7 };
        let outcomes = vec![
            (h(0), vec![true, true]),
            (h(0), vec![true, false]),
            (h(7), vec![false, true]),
        ];
        let names = vec!["R1".to_string(), "R5_max".to_string()];
        let table = ih_accuracy_table(&outcomes, &names).unwrap();
        assert_eq!(table.rows.len(), 8);
        assert_eq!(table.rows[0].sample_count, 2);
        assert_eq!(table.rows[0].accuracy[0], Some(1.0));
        assert_eq!(table.rows[0].accuracy[1], Some(0.5));
        assert_eq!(table.rows[1].sample_count, 0);
        assert_eq!(table.rows[1].accuracy[0], None);
        assert_eq!(table.rows[7].accuracy, vec![Some(0.0), Some(1.0)]);
        let total: usize = table.rows.iter().map(|r| r.sample_count).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn ih_table_rejects_mixed_k() {
        let outcomes = vec![
            (HardnessScore { disagreeing: 0, k: 7 }, vec![true]),
            (HardnessScore { disagreeing: 1, k: 5 }, vec![true]),
        ];
        assert!(matches!(
            ih_accuracy_table(&outcomes, &["R1".to_string()]),
            Err(Error::MixedK(7, 5))
        ));
    }

    proptest! {
        #[test]
        fn returned_threshold_minimizes_gap(
            genuine in proptest::collection::vec(-3.0f64..3.0, 1..15),
            skilled in proptest::collection::vec(-3.0f64..3.0, 1..15),
        ) {
            let (t, _) = user_threshold_eer(&genuine, &skilled).unwrap();
            let (ot, _) = eer_oracle(&genuine, &skilled);
            prop_assert_eq!(t, ot);
        }
    }
}
