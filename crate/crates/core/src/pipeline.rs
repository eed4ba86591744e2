//! Experiment pipeline: synthetic benchmark generation, training-phase
//! assembly (transformation, standardization, condensation, SMO training),
//! replicated evaluation, and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{synth_generate, StandardScaler, SynthConfig};
use crate::dichotomy::{build_training_set, DissimilaritySample, Label, PairingPlan};
use crate::dichotomizer::{train, DichotomizerModel, KernelParams, TrainOptions};
use crate::error::{Error, Result};
use crate::evaluation::{
    mean_std, EvalCategory, Evaluator, ExploitationPlan, IhAccuracyTable,
    RefConfig,
};
use crate::prototype::condense;
use crate::verification::FusionKind;

pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondensationStats {
    pub input_size: usize,
    pub retained_size: usize,
    pub passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    /// First `dev_writers` writers form the development set; the rest the
    /// exploitation set.
    pub dev_writers: usize,
    /// Genuines per development writer entering the pairwise transformation.
    pub pair_r: usize,
    /// Random-forgery writers per development writer.
    pub pair_f: usize,
    pub condense: bool,
    /// When set, each replication also trains on the uncondensed set and
    /// reports its EER next to the condensed one.
    #[serde(default)]
    pub compare_uncondensed: bool,
    pub params: KernelParams,
    pub tol: f64,
    pub max_passes: usize,
    pub fusion: FusionKind,
    /// Reference counts for the IH accuracy tables, e.g. [1, 5, 10].
    pub reference_counts: Vec<usize>,
    pub references_per_writer: usize,
    pub genuine_queries: usize,
    pub skilled_queries: usize,
    pub random_queries: usize,
    #[serde(default)]
    pub simple_queries: usize,
    pub ih_k: usize,
    pub replications: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// The synthetic desk-scale benchmark: 50 writers, 32 dimensions,
    /// 10 replications.
    pub fn synthetic_benchmark() -> Self {
        ExperimentConfig {
            synth: SynthConfig {
                writers: 50,
                dimensionality: 32,
                genuine_per_writer: 20,
                skilled_per_writer: 10,
                sigma_genuine: 1.0,
                sigma_spread: 0.3,
                active_features: 0,
                mode_distance: 5.0,
                forger_noise: 0.9,
                sigma_centroid: 1.75,
                good_fraction: 0.3,
                delta_good: 2.0,
                delta_bad: 12.0,
            },
            dev_writers: 25,
            pair_r: 8,
            pair_f: 4,
            condense: true,
            compare_uncondensed: true,
            params: KernelParams {
                gamma: 1.0 / 256.0,
                c: 10.0,
            },
            tol: 1e-3,
            max_passes: 20_000,
            fusion: FusionKind::Max,
            reference_counts: vec![1, 5, 10],
            references_per_writer: 10,
            genuine_queries: 10,
            skilled_queries: 10,
            random_queries: 10,
            simple_queries: 0,
            ih_k: 7,
            replications: 10,
            master_seed: 20200630,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.dev_writers == 0 || self.dev_writers >= self.synth.writers {
            return Err(Error::Config("dev_writers must split the writer set".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.reference_counts.is_empty()
            || self
                .reference_counts
                .iter()
                .any(|&r| r == 0 || r > self.references_per_writer)
        {
            return Err(Error::Config(
                "reference_counts must be within 1..=references_per_writer".into(),
            ));
        }
        self.params.validate()
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    pub fn exploitation_plan(&self, seed: u64) -> ExploitationPlan {
        ExploitationPlan {
            references_per_writer: self.references_per_writer,
            genuine_queries: self.genuine_queries,
            skilled_queries: self.skilled_queries,
            random_queries: self.random_queries,
            simple_queries: self.simple_queries,
            seed,
        }
    }
}

/// Per-replication sub-seeds, derived from the master seed so replications
/// are independent but reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubSeeds {
    pub synth: u64,
    pub plan: u64,
    pub condense: u64,
    pub train: u64,
    pub eval: u64,
}

pub fn derive_seeds(master_seed: u64, replication: usize) -> SubSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ ((replication as u64) << 32));
    SubSeeds {
        synth: rng.gen(),
        plan: rng.gen(),
        condense: rng.gen(),
        train: rng.gen(),
        eval: rng.gen(),
    }
}

pub fn standardize_samples(
    samples: &[DissimilaritySample],
    scaler: &StandardScaler,
) -> Result<Vec<DissimilaritySample>> {
    samples
        .iter()
        .map(|s| {
            Ok(DissimilaritySample {
                u: scaler.transform(&s.u)?,
                ..s.clone()
            })
        })
        .collect()
}

/// Training-phase output: the frozen scaler, the standardized (optionally
/// condensed) training collection, the trained model, and condensation
/// statistics when condensation ran.
pub struct TrainingPhase {
    pub model: DichotomizerModel,
    pub training: Vec<DissimilaritySample>,
    pub condensation: Option<CondensationStats>,
}

/// Pipeline order: transformation output -> standardize -> condense ->
/// train.
pub fn run_training_phase(
    raw: &[DissimilaritySample],
    params: &KernelParams,
    opts: &TrainOptions,
    do_condense: bool,
    condense_seed: u64,
) -> Result<TrainingPhase> {
    let vectors: Vec<&[f64]> = raw.iter().map(|s| s.u.as_slice()).collect();
    let scaler = StandardScaler::fit(&vectors)?;
    let standardized = standardize_samples(raw, &scaler)?;
    let (training, condensation) = if do_condense {
        let result = condense(&standardized, 1, condense_seed)?;
        let retained: Vec<DissimilaritySample> = result
            .retained_indices
            .iter()
            .map(|&i| standardized[i].clone())
            .collect();
        (
            retained,
            Some(CondensationStats {
                input_size: standardized.len(),
                retained_size: result.retained_indices.len(),
                passes: result.passes,
            }),
        )
    } else {
        (standardized, None)
    };
    let xs: Vec<Vec<f64>> = training.iter().map(|s| s.u.clone()).collect();
    let ys: Vec<Label> = training.iter().map(|s| s.label).collect();
    let model = train(&xs, &ys, params, opts, scaler)?;
    Ok(TrainingPhase {
        model,
        training,
        condensation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub seeds: SubSeeds,
    /// Global EER (fraction) per fusion kind at the full reference count.
    pub eer_by_fusion: BTreeMap<String, f64>,
    /// EER for the primary fusion at the full reference count.
    pub eer: f64,
    /// Same pipeline without condensation, when requested.
    pub eer_uncondensed: Option<f64>,
    pub condensation: Option<CondensationStats>,
    pub ih_tables: Vec<(EvalCategory, IhAccuracyTable)>,
    /// kDN numerators of positive queries.
    pub positive_bins: Vec<usize>,
    /// kDN numerators of skilled-forgery queries that the generator placed
    /// at the good-quality offset.
    pub good_forgery_bins: Vec<usize>,
    /// kDN numerators of all skilled-forgery queries.
    pub skilled_bins: Vec<usize>,
}

pub fn ref_configs(cfg: &ExperimentConfig) -> Vec<RefConfig> {
    cfg.reference_counts
        .iter()
        .map(|&r| RefConfig::new(r, cfg.fusion))
        .collect()
}

pub fn run_replication(cfg: &ExperimentConfig, replication: usize) -> Result<ReplicationResult> {
    cfg.validate()?;
    let seeds = derive_seeds(cfg.master_seed, replication);
    let dataset = synth_generate(&cfg.synth, seeds.synth)?;
    let (dev, expl) = dataset.split_writers(cfg.dev_writers)?;

    let plan = PairingPlan::new(cfg.pair_r, cfg.pair_f, seeds.plan);
    let raw = build_training_set(&dev, &plan)?;
    let opts = TrainOptions {
        tol: cfg.tol,
        max_passes: cfg.max_passes,
        seed: seeds.train,
        ..TrainOptions::default()
    };
    let phase = run_training_phase(&raw, &cfg.params, &opts, cfg.condense, seeds.condense)?;

    let eval_plan = cfg.exploitation_plan(seeds.eval);
    let evaluator = Evaluator {
        model: &phase.model,
        training: Some(&phase.training),
        ih_k: cfg.ih_k,
    };
    let run = evaluator.run(&expl, &eval_plan)?;

    let full = RefConfig::new(cfg.references_per_writer, cfg.fusion);
    let mut eer_by_fusion = BTreeMap::new();
    for fusion in FusionKind::ALL {
        let cfg_f = RefConfig::new(cfg.references_per_writer, fusion);
        eer_by_fusion.insert(fusion.as_str().to_string(), run.global_eer(&cfg_f)?);
    }
    let eer = run.global_eer(&full)?;

    let eer_uncondensed = if cfg.condense && cfg.compare_uncondensed {
        let phase_full = run_training_phase(&raw, &cfg.params, &opts, false, seeds.condense)?;
        let evaluator_full = Evaluator {
            model: &phase_full.model,
            training: Some(&phase_full.training),
            ih_k: cfg.ih_k,
        };
        let run_full = evaluator_full.run(&expl, &eval_plan)?;
        Some(run_full.global_eer(&full)?)
    } else {
        None
    };

    let configs = ref_configs(cfg);
    let mut ih_tables = Vec::new();
    for category in [
        EvalCategory::Positive,
        EvalCategory::NegativeRandom,
        EvalCategory::NegativeSkilled,
        EvalCategory::NegativeSimple,
    ] {
        if category == EvalCategory::NegativeSimple && cfg.simple_queries == 0 {
            continue;
        }
        ih_tables.push((category, run.ih_table(category, &configs)?));
    }

    let n_good = cfg.synth.good_forgeries_per_writer() as u32;
    let mut positive_bins = Vec::new();
    let mut good_forgery_bins = Vec::new();
    let mut skilled_bins = Vec::new();
    for q in &run.queries {
        let Some(h) = q.hardness else { continue };
        match q.category {
            EvalCategory::Positive => positive_bins.push(h.disagreeing),
            EvalCategory::NegativeSkilled => {
                skilled_bins.push(h.disagreeing);
                if q.query_ref.1 < n_good {
                    good_forgery_bins.push(h.disagreeing);
                }
            }
            _ => {}
        }
    }

    Ok(ReplicationResult {
        seeds,
        eer_by_fusion,
        eer,
        eer_uncondensed,
        condensation: phase.condensation,
        ih_tables,
        positive_bins,
        good_forgery_bins,
        skilled_bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    pub replications: Vec<ReplicationResult>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut replications = Vec::with_capacity(cfg.replications);
    for rep in 0..cfg.replications {
        replications.push(run_replication(cfg, rep)?);
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        version: PIPELINE_VERSION.to_string(),
        replications,
    })
}

fn render_ih_table(table: &IhAccuracyTable) -> String {
    let mut out = String::new();
    let _ = write!(out, "IH\t#Samples");
    for name in &table.config_names {
        let _ = write!(out, "\t{name}");
    }
    out.push('\n');
    for row in &table.rows {
        let _ = write!(
            out,
            "{:.2}\t{}",
            row.numerator as f64 / table.k as f64,
            row.sample_count
        );
        for acc in &row.accuracy {
            match acc {
                Some(a) => {
                    let _ = write!(out, "\t{:.2}", a * 100.0);
                }
                None => {
                    let _ = write!(out, "\t-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Sums IH tables of the same shape across replications.
pub fn pool_ih_tables(tables: &[&IhAccuracyTable]) -> Result<IhAccuracyTable> {
    let first = tables.first().ok_or(Error::EmptyInput("no tables to pool"))?;
    let k = first.k;
    let n_cfg = first.config_names.len();
    let mut counts = vec![0usize; k + 1];
    let mut correct = vec![vec![0f64; n_cfg]; k + 1];
    for t in tables {
        if t.k != k {
            return Err(Error::MixedK(k, t.k));
        }
        for (bin, row) in t.rows.iter().enumerate() {
            counts[bin] += row.sample_count;
            for (c, acc) in row.accuracy.iter().enumerate() {
                if let Some(a) = acc {
                    correct[bin][c] += a * row.sample_count as f64;
                }
            }
        }
    }
    Ok(IhAccuracyTable {
        k,
        config_names: first.config_names.clone(),
        rows: (0..=k)
            .map(|bin| crate::evaluation::IhRow {
                numerator: bin,
                sample_count: counts[bin],
                accuracy: (0..n_cfg)
                    .map(|c| {
                        if counts[bin] == 0 {
                            None
                        } else {
                            Some(correct[bin][c] / counts[bin] as f64)
                        }
                    })
                    .collect(),
            })
            .collect(),
    })
}

pub fn render_report(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment report (version {})", report.version);
    let _ = writeln!(out, "config hash: {}", report.config_hash);
    let _ = writeln!(out, "replications: {}", report.replications.len());
    out.push('\n');

    let _ = writeln!(out, "global EER (%) by fusion at R{}:", report.config.references_per_writer);
    for fusion in FusionKind::ALL {
        let values: Vec<f64> = report
            .replications
            .iter()
            .map(|r| r.eer_by_fusion[fusion.as_str()] * 100.0)
            .collect();
        let (m, s) = mean_std(&values);
        let _ = writeln!(out, "  {:<6} {}", fusion.as_str(), crate::evaluation::format_mean_std(m, s));
    }

    if report.replications.iter().any(|r| r.eer_uncondensed.is_some()) {
        let with: Vec<f64> = report.replications.iter().map(|r| r.eer * 100.0).collect();
        let without: Vec<f64> = report
            .replications
            .iter()
            .filter_map(|r| r.eer_uncondensed.map(|e| e * 100.0))
            .collect();
        let (mw, sw) = mean_std(&with);
        let (mo, so) = mean_std(&without);
        out.push('\n');
        let _ = writeln!(out, "condensation effect on EER (%):");
        let _ = writeln!(out, "  with condensation    {}", crate::evaluation::format_mean_std(mw, sw));
        let _ = writeln!(out, "  without condensation {}", crate::evaluation::format_mean_std(mo, so));
    }

    if let Some(stats) = report.replications.first().and_then(|r| r.condensation) {
        let retained: Vec<f64> = report
            .replications
            .iter()
            .filter_map(|r| r.condensation.map(|c| c.retained_size as f64))
            .collect();
        let (m, _) = mean_std(&retained);
        out.push('\n');
        let _ = writeln!(
            out,
            "condensation: input {} -> retained {:.1} on average",
            stats.input_size, m
        );
    }

    // pooled IH tables, note: per-signature bins use the first-reference
    // dissimilarity vector, an interpretation documented in the README
    for category in [
        EvalCategory::Positive,
        EvalCategory::NegativeRandom,
        EvalCategory::NegativeSkilled,
        EvalCategory::NegativeSimple,
    ] {
        let tables: Vec<&IhAccuracyTable> = report
            .replications
            .iter()
            .flat_map(|r| {
                r.ih_tables
                    .iter()
                    .filter(|(c, _)| *c == category)
                    .map(|(_, t)| t)
            })
            .collect();
        if tables.is_empty() {
            continue;
        }
        let pooled = pool_ih_tables(&tables).expect("uniform k");
        out.push('\n');
        let _ = writeln!(out, "IH vs accuracy (%), {} samples, pooled over replications:", category.as_str());
        out.push_str(&render_ih_table(&pooled));
    }
    out
}

/// Writes report.txt, report.json, manifest.json and per-category IH
/// histograms into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let write = |name: &str, contents: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))
    };
    write("report.txt", render_report(report))?;
    write(
        "report.json",
        serde_json::to_string_pretty(report).expect("report serializes"),
    )?;
    let manifest = serde_json::json!({
        "version": report.version,
        "config_hash": report.config_hash,
        "master_seed": report.config.master_seed,
        "config": report.config,
    });
    write(
        "manifest.json",
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    // plot-ready histogram of IH bins per category
    let mut hist = String::from("category,bin,count\n");
    let k = report.config.ih_k;
    for (name, col) in [
        ("positive", &report.replications.iter().flat_map(|r| r.positive_bins.iter()).collect::<Vec<_>>()),
        ("negative_skilled", &report.replications.iter().flat_map(|r| r.skilled_bins.iter()).collect::<Vec<_>>()),
        ("good_forgery", &report.replications.iter().flat_map(|r| r.good_forgery_bins.iter()).collect::<Vec<_>>()),
    ] {
        let mut counts = vec![0usize; k + 1];
        for &&b in col {
            counts[b] += 1;
        }
        for (bin, c) in counts.iter().enumerate() {
            let _ = writeln!(hist, "{name},{:.4},{c}", bin as f64 / k as f64);
        }
    }
    write("ih_histogram.csv", hist)?;
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads the config back out of a manifest.json written by `write_report`.
pub fn load_manifest_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = value
        .get("config")
        .cloned()
        .ok_or_else(|| Error::Config(format!("{}: manifest has no config", path.display())))?;
    serde_json::from_value(cfg).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
