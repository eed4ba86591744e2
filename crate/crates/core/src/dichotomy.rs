//! Dichotomy transformation and the pairing protocols that build training
//! and query dissimilarity sets.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, SignatureKind, SignatureRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Label::Positive),
            "negative" => Some(Label::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Genuine,
    Random,
    Skilled,
    Simple,
}

impl QueryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryKind::Genuine => "genuine",
            QueryKind::Random => "random",
            QueryKind::Skilled => "skilled",
            QueryKind::Simple => "simple",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "genuine" => Some(QueryKind::Genuine),
            "random" => Some(QueryKind::Random),
            "skilled" => Some(QueryKind::Skilled),
            "simple" => Some(QueryKind::Simple),
            _ => None,
        }
    }
}

/// A dissimilarity vector with its label and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilaritySample {
    pub u: Vec<f64>,
    pub label: Label,
    pub query_kind: QueryKind,
    /// (writer_id, signature_id) of the query signature.
    pub query_ref: (u32, u32),
    /// (writer_id, signature_id) of the reference signature.
    pub reference_ref: (u32, u32),
}

/// Coordinatewise absolute difference of two feature vectors.
pub fn dt(x_q: &[f64], x_r: &[f64]) -> Result<Vec<f64>> {
    if x_q.len() != x_r.len() {
        return Err(Error::DimensionMismatch {
            expected: x_q.len(),
            actual: x_r.len(),
        });
    }
    Ok(x_q.iter().zip(x_r).map(|(a, b)| (a - b).abs()).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct PairCounts {
    pub total: u64,
    pub positive: u64,
    pub negative: u64,
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair-count combinatorics: with M writers and R references each, the
/// transformation yields C(MR,2) vectors, M*C(R,2) positive and C(M,2)*R^2
/// negative.
pub fn count_pairs(m: u64, r: u64) -> PairCounts {
    PairCounts {
        total: choose2(m * r),
        positive: m * choose2(r),
        negative: choose2(m) * r * r,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingPlan {
    /// Genuine signatures selected per writer (R).
    pub genuines_per_writer: usize,
    /// Distinct other writers supplying one random forgery each (F).
    pub random_forgery_writers: usize,
    pub rng_seed: u64,
    /// When true, the R genuines are a seeded random choice instead of the
    /// R lowest signature ids.
    #[serde(default)]
    pub random_reference_choice: bool,
}

impl PairingPlan {
    pub fn new(r: usize, f: usize, seed: u64) -> Self {
        PairingPlan {
            genuines_per_writer: r,
            random_forgery_writers: f,
            rng_seed: seed,
            random_reference_choice: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.genuines_per_writer < 2 {
            return Err(Error::Config("pairing plan requires R >= 2".into()));
        }
        if self.random_forgery_writers < 1 {
            return Err(Error::Config("pairing plan requires F >= 1".into()));
        }
        Ok(())
    }
}

// Per-writer stream so generation order (and thus output) is independent of
// any parallel scheduling.
fn writer_rng(seed: u64, writer_id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (u64::from(writer_id).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Builds the development-phase training set.
///
/// Per writer: all C(R,2) pairwise transformations among the R selected
/// genuines form the positive class; R-1 of those genuines paired against
/// one genuine from each of F other writers form the negative class. Counts
/// are balanced when (R-1)*F = R*(R-1)/2.
pub fn build_training_set(dev: &Dataset, plan: &PairingPlan) -> Result<Vec<DissimilaritySample>> {
    plan.validate()?;
    let writers = dev.writer_ids();
    if plan.random_forgery_writers >= writers.len() {
        return Err(Error::Config(format!(
            "F = {} requires more than {} writers",
            plan.random_forgery_writers,
            writers.len()
        )));
    }
    let r = plan.genuines_per_writer;
    let mut out = Vec::new();
    for &w in &writers {
        let genuines = dev.genuines_of(w);
        if genuines.len() < r {
            return Err(Error::InsufficientGenuines {
                writer_id: w,
                available: genuines.len(),
                required: r,
            });
        }
        let mut rng = writer_rng(plan.rng_seed, w);
        let selected: Vec<&SignatureRecord> = if plan.random_reference_choice {
            let mut idx: Vec<usize> = (0..genuines.len()).collect();
            idx.shuffle(&mut rng);
            let mut chosen: Vec<usize> = idx.into_iter().take(r).collect();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| genuines[i]).collect()
        } else {
            genuines.iter().take(r).copied().collect()
        };

        // Positive class: all pairs among the selected genuines.
        for i in 0..r {
            for j in (i + 1)..r {
                out.push(DissimilaritySample {
                    u: dt(selected[i].features.values(), selected[j].features.values())?,
                    label: Label::Positive,
                    query_kind: QueryKind::Genuine,
                    query_ref: (w, selected[j].signature_id),
                    reference_ref: (w, selected[i].signature_id),
                });
            }
        }

        // Negative class: R-1 references (the highest-id selected genuine is
        // excluded) against one genuine from each of F other writers.
        let references = &selected[..r - 1];
        let mut others: Vec<u32> = writers.iter().copied().filter(|&o| o != w).collect();
        others.shuffle(&mut rng);
        for &other in others.iter().take(plan.random_forgery_writers) {
            let other_genuines = dev.genuines_of(other);
            if other_genuines.is_empty() {
                return Err(Error::InsufficientGenuines {
                    writer_id: other,
                    available: 0,
                    required: 1,
                });
            }
            let pick = *other_genuines
                .choose(&mut rng)
                .expect("non-empty checked above");
            for reference in references {
                out.push(DissimilaritySample {
                    u: dt(pick.features.values(), reference.features.values())?,
                    label: Label::Negative,
                    query_kind: QueryKind::Random,
                    query_ref: (other, pick.signature_id),
                    reference_ref: (w, reference.signature_id),
                });
            }
        }
    }
    Ok(out)
}

fn query_kind_for(questioned: &SignatureRecord, reference: &SignatureRecord) -> QueryKind {
    if questioned.writer_id != reference.writer_id {
        QueryKind::Random
    } else {
        match questioned.kind {
            SignatureKind::Genuine => QueryKind::Genuine,
            SignatureKind::Skilled => QueryKind::Skilled,
            SignatureKind::Simple => QueryKind::Simple,
        }
    }
}

/// One dissimilarity sample per reference, order preserved. Labels come from
/// the records' ground truth.
pub fn build_query_set(
    questioned: &SignatureRecord,
    references: &[&SignatureRecord],
) -> Result<Vec<DissimilaritySample>> {
    if references.is_empty() {
        return Err(Error::EmptyInput("build_query_set requires references"));
    }
    references
        .iter()
        .map(|reference| {
            let kind = query_kind_for(questioned, reference);
            let label = if questioned.writer_id == reference.writer_id
                && questioned.kind == SignatureKind::Genuine
            {
                Label::Positive
            } else {
                Label::Negative
            };
            Ok(DissimilaritySample {
                u: dt(questioned.features.values(), reference.features.values())?,
                label,
                query_kind: kind,
                query_ref: (questioned.writer_id, questioned.signature_id),
                reference_ref: (reference.writer_id, reference.signature_id),
            })
        })
        .collect()
}

/// Dissimilarity-set file format: header `dims=<n>`, then rows
/// `u1,...,un,label,query_kind,q_writer,q_sig,r_writer,r_sig`.
pub fn render_samples(dims: usize, samples: &[DissimilaritySample]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dims={dims}");
    for s in samples {
        for (i, v) in s.u.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{}",
            s.label.as_str(),
            s.query_kind.as_str(),
            s.query_ref.0,
            s.query_ref.1,
            s.reference_ref.0,
            s.reference_ref.1
        );
    }
    out
}

pub fn parse_samples(text: &str) -> Result<(usize, Vec<DissimilaritySample>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file, expected `dims=<n>` header"))?;
    let dims: usize = header
        .strip_prefix("dims=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(1, format!("malformed header `{header}`")))?;
    let mut samples = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != dims + 6 {
            return Err(Error::parse(
                line_no,
                format!("expected {} fields, found {}", dims + 6, fields.len()),
            ));
        }
        let mut u = Vec::with_capacity(dims);
        for f in &fields[..dims] {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad value `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value `{f}`")));
            }
            u.push(v);
        }
        let label = Label::parse(fields[dims])
            .ok_or_else(|| Error::parse(line_no, format!("unknown label `{}`", fields[dims])))?;
        let query_kind = QueryKind::parse(fields[dims + 1]).ok_or_else(|| {
            Error::parse(line_no, format!("unknown query kind `{}`", fields[dims + 1]))
        })?;
        let nums: Vec<u32> = fields[dims + 2..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad provenance id `{f}`")))
            })
            .collect::<Result<_>>()?;
        samples.push(DissimilaritySample {
            u,
            label,
            query_kind,
            query_ref: (nums[0], nums[1]),
            reference_ref: (nums[2], nums[3]),
        });
    }
    Ok((dims, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{synth_generate, FeatureVector, Split, SynthConfig};
    use proptest::prelude::*;

    fn record(w: u32, s: u32, kind: SignatureKind, v: Vec<f64>) -> SignatureRecord {
        SignatureRecord {
            writer_id: w,
            signature_id: s,
            kind,
            features: FeatureVector::new(v).unwrap(),
        }
    }

    #[test]
    fn dt_examples() {
        assert_eq!(dt(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(dt(&[3.0, 1.0], &[1.0, 4.0]).unwrap(), vec![2.0, 3.0]);
        assert!(dt(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn count_pairs_examples() {
        let c = count_pairs(2, 2);
        assert_eq!((c.total, c.positive, c.negative), (6, 2, 4));
        let c = count_pairs(1, 5);
        assert_eq!((c.total, c.positive, c.negative), (10, 10, 0));
    }

    #[test]
    fn count_pairs_identity_random() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = rng.gen_range(1..200u64);
            let r = rng.gen_range(1..50u64);
            let c = count_pairs(m, r);
            assert_eq!(c.total, c.positive + c.negative, "M={m} R={r}");
        }
    }

    fn tiny_dataset() -> Dataset {
        let mut ds = Dataset::new("tiny", 2, Split::Development);
        for w in 0..2u32 {
            for s in 0..2u32 {
                ds.records.push(record(
                    w,
                    s,
                    SignatureKind::Genuine,
                    vec![w as f64 * 10.0 + s as f64, 1.0],
                ));
            }
        }
        ds
    }

    #[test]
    fn training_set_smallest_plan() {
        let ds = tiny_dataset();
        let plan = PairingPlan::new(2, 1, 0);
        let samples = build_training_set(&ds, &plan).unwrap();
        let pos = samples.iter().filter(|s| s.label == Label::Positive).count();
        let neg = samples.iter().filter(|s| s.label == Label::Negative).count();
        assert_eq!((pos, neg), (2, 2));
    }

    #[test]
    fn training_set_errors() {
        let ds = tiny_dataset();
        assert!(matches!(
            build_training_set(&ds, &PairingPlan::new(3, 1, 0)),
            Err(Error::InsufficientGenuines { writer_id: 0, .. })
        ));
        assert!(build_training_set(&ds, &PairingPlan::new(2, 2, 0)).is_err());
    }

    #[test]
    fn training_set_reproducible_and_labels_consistent() {
        let cfg = SynthConfig {
            writers: 6,
            dimensionality: 3,
            genuine_per_writer: 5,
            skilled_per_writer: 2,
            sigma_genuine: 1.0,
            sigma_spread: 0.0,
            active_features: 0,
            mode_distance: 0.0,
            forger_noise: 1.0,
            sigma_centroid: 8.0,
            good_fraction: 0.5,
            delta_good: 1.0,
            delta_bad: 10.0,
        };
        let ds = synth_generate(&cfg, 42).unwrap();
        let plan = PairingPlan::new(4, 2, 9);
        let a = build_training_set(&ds, &plan).unwrap();
        let b = build_training_set(&ds, &plan).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert!(s.u.iter().all(|&v| v >= 0.0));
            let same_writer = s.query_ref.0 == s.reference_ref.0;
            assert_eq!(s.label == Label::Positive, same_writer && s.query_kind == QueryKind::Genuine);
        }
        // per writer: C(4,2)=6 positives, 3*2=6 negatives
        let pos = a.iter().filter(|s| s.label == Label::Positive).count();
        let neg = a.iter().filter(|s| s.label == Label::Negative).count();
        assert_eq!((pos, neg), (36, 36));
    }

    #[test]
    fn query_set_examples() {
        let q = record(0, 5, SignatureKind::Genuine, vec![1.0, 2.0]);
        let r0 = record(0, 0, SignatureKind::Genuine, vec![1.0, 2.0]);
        let r1 = record(0, 1, SignatureKind::Genuine, vec![2.0, 0.0]);
        let set = build_query_set(&q, &[&r0, &r1]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set[0].u, vec![0.0, 0.0]);
        assert_eq!(set[1].u, vec![1.0, 2.0]);
        assert_eq!(set[0].label, Label::Positive);
        assert!(build_query_set(&q, &[]).is_err());

        let forgery = record(0, 0, SignatureKind::Skilled, vec![0.0, 0.0]);
        let set = build_query_set(&forgery, &[&r0]).unwrap();
        assert_eq!(set[0].label, Label::Negative);
        assert_eq!(set[0].query_kind, QueryKind::Skilled);
    }

    #[test]
    fn sample_file_round_trip() {
        let ds = tiny_dataset();
        let samples = build_training_set(&ds, &PairingPlan::new(2, 1, 3)).unwrap();
        let text = render_samples(2, &samples);
        let (dims, back) = parse_samples(&text).unwrap();
        assert_eq!(dims, 2);
        assert_eq!(samples, back);
    }

    proptest! {
        #[test]
        fn dt_symmetry_identity_translation(
            a in proptest::collection::vec(-50.0f64..50.0, 6),
            b in proptest::collection::vec(-50.0f64..50.0, 6),
            c in -10.0f64..10.0,
        ) {
            let ab = dt(&a, &b).unwrap();
            let ba = dt(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            let aa = dt(&a, &a).unwrap();
            prop_assert!(aa.iter().all(|&v| v == 0.0));
            let at: Vec<f64> = a.iter().map(|v| v + c).collect();
            let bt: Vec<f64> = b.iter().map(|v| v + c).collect();
            let shifted = dt(&at, &bt).unwrap();
            for (x, y) in ab.iter().zip(&shifted) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
