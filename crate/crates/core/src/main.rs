use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sigver::datamodel::{
    load_features, save_features, SignatureKind, StandardScaler, SynthConfig,
};
use sigver::dichotomy::{
    build_query_set, build_training_set, parse_samples, render_samples, PairingPlan,
};
use sigver::dichotomizer::{
    grid_search, default_c_grid, default_gamma_grid, DichotomizerModel, KernelParams, TrainOptions,
};
use sigver::error::{Error, Result};
use sigver::evaluation::{EvalCategory, Evaluator, ExploitationPlan, RefConfig};
use sigver::neighborhood::dump_neighborhood;
use sigver::pipeline::{
    load_config, load_manifest_config, pool_ih_tables, run_experiment, run_training_phase,
    save_config, standardize_samples, write_report, ExperimentConfig,
};
use sigver::prototype::condense;
use sigver::verification::FusionKind;

#[derive(Parser)]
#[command(name = "sigver", version, about = "Writer-independent signature verification in the dissimilarity space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature-space dataset.
    Synth(SynthArgs),
    /// Build a training dissimilarity set from a feature file.
    BuildDs(BuildDsArgs),
    /// Condense a dissimilarity set with 1-NN prototype selection.
    Condense(CondenseArgs),
    /// Train the kernel dichotomizer on a dissimilarity set.
    Train(TrainArgs),
    /// Grid-search (C, gamma) on a train/validation pair of dissimilarity sets.
    GridSearch(GridSearchArgs),
    /// Verify questioned signatures listed in a query manifest.
    Verify(VerifyArgs),
    /// Run the full replicated experiment pipeline from a config file.
    Eval(EvalArgs),
    /// Run the pipeline and emit only the IH-vs-accuracy tables.
    IhReport(EvalArgs),
    /// Apply a trained model to a foreign dataset without re-fitting.
    Transfer(TransferArgs),
    /// Dump the K training neighbors of one questioned sample.
    DumpNeighborhood(DumpArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    writers: usize,
    #[arg(long)]
    genuine: usize,
    #[arg(long, default_value_t = 0)]
    skilled: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma_genuine: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_spread: f64,
    #[arg(long, default_value_t = 0)]
    active_features: usize,
    #[arg(long, default_value_t = 0.0)]
    mode_distance: f64,
    #[arg(long, default_value_t = 1.0)]
    forger_noise: f64,
    #[arg(long, default_value_t = 6.0)]
    sigma_centroid: f64,
    #[arg(long, default_value_t = 0.3)]
    good_fraction: f64,
    #[arg(long, default_value_t = 5.0)]
    delta_good: f64,
    #[arg(long, default_value_t = 25.0)]
    delta_bad: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildDsArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, short = 'r')]
    r: usize,
    #[arg(long, short = 'f')]
    f: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Select the R genuines per writer by seeded random choice instead of
    /// lowest signature ids.
    #[arg(long)]
    random_choice: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CondenseArgs {
    #[arg(long)]
    ds: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    ds: PathBuf,
    #[arg(long, default_value_t = 2f64.powi(-11))]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 20000)]
    max_passes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Condense the standardized set before training.
    #[arg(long)]
    condense: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the (standardized) training collection used for IH.
    #[arg(long)]
    emit_training: Option<PathBuf>,
}

#[derive(Args)]
struct GridSearchArgs {
    #[arg(long)]
    train_ds: PathBuf,
    #[arg(long)]
    val_ds: PathBuf,
    /// Comma-separated C grid; defaults to the standard 7-value grid.
    #[arg(long, value_delimiter = ',')]
    c_grid: Vec<f64>,
    /// Comma-separated gamma grid; defaults to the standard 8-value grid.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Manifest rows: q_writer,q_sig,q_kind,claimed_writer,ref1;ref2;...
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value = "max")]
    fusion: String,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run from a manifest.json written by a previous run.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the built-in synthetic benchmark config to this path and exit.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Training dissimilarity set (raw) for IH tables; standardized with the
    /// model's scaler.
    #[arg(long)]
    training: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    refs: usize,
    #[arg(long, default_value_t = 10)]
    genuine: usize,
    #[arg(long, default_value_t = 10)]
    skilled: usize,
    #[arg(long, default_value_t = 10)]
    random: usize,
    #[arg(long, default_value_t = 0)]
    simple: usize,
    #[arg(long, default_value = "max")]
    fusion: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training dissimilarity set (raw); standardized with the model scaler.
    #[arg(long)]
    training: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Questioned signature as writer:sig:kind, e.g. 3:2:skilled.
    #[arg(long)]
    questioned: String,
    /// Reference signature as writer:sig (a genuine of the claimed writer).
    #[arg(long)]
    reference: String,
    #[arg(long, default_value_t = 7)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_fusion(s: &str) -> Result<FusionKind> {
    FusionKind::parse(s).ok_or_else(|| Error::Config(format!("unknown fusion `{s}`")))
}

fn read_ds(path: &Path) -> Result<(usize, Vec<sigver::dichotomy::DissimilaritySample>)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_samples(&text)
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        writers: args.writers,
        dimensionality: args.dim,
        genuine_per_writer: args.genuine,
        skilled_per_writer: args.skilled,
        sigma_genuine: args.sigma_genuine,
        sigma_spread: args.sigma_spread,
        active_features: args.active_features,
        mode_distance: args.mode_distance,
        forger_noise: args.forger_noise,
        sigma_centroid: args.sigma_centroid,
        good_fraction: args.good_fraction,
        delta_good: args.delta_good,
        delta_bad: args.delta_bad,
    };
    let ds = sigver::datamodel::synth_generate(&cfg, args.seed)?;
    save_features(&ds, &args.out)?;
    println!("wrote {} records to {}", ds.records.len(), args.out.display());
    Ok(())
}

fn run_build_ds(args: BuildDsArgs) -> Result<()> {
    let ds = load_features(&args.features)?;
    let mut plan = PairingPlan::new(args.r, args.f, args.seed);
    plan.random_reference_choice = args.random_choice;
    let samples = build_training_set(&ds, &plan)?;
    write_text(&args.out, render_samples(ds.dimensionality, &samples))?;
    let pos = samples
        .iter()
        .filter(|s| s.label == sigver::dichotomy::Label::Positive)
        .count();
    println!(
        "wrote {} samples ({} positive, {} negative) to {}",
        samples.len(),
        pos,
        samples.len() - pos,
        args.out.display()
    );
    Ok(())
}

fn run_condense(args: CondenseArgs) -> Result<()> {
    let (dims, samples) = read_ds(&args.ds)?;
    let vectors: Vec<&[f64]> = samples.iter().map(|s| s.u.as_slice()).collect();
    let scaler = StandardScaler::fit(&vectors)?;
    let standardized = standardize_samples(&samples, &scaler)?;
    let result = condense(&standardized, 1, args.seed)?;
    let retained: Vec<_> = result
        .retained_indices
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    write_text(&args.out, render_samples(dims, &retained))?;
    println!(
        "condensed {} -> {} samples in {} passes; wrote {}",
        samples.len(),
        retained.len(),
        result.passes,
        args.out.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let (dims, samples) = read_ds(&args.ds)?;
    let params = KernelParams {
        gamma: args.gamma,
        c: args.c,
    };
    let opts = TrainOptions {
        tol: args.tol,
        max_passes: args.max_passes,
        seed: args.seed,
        ..TrainOptions::default()
    };
    let phase = run_training_phase(&samples, &params, &opts, args.condense, args.seed)?;
    phase.model.save(&args.out)?;
    if let Some(stats) = phase.condensation {
        println!(
            "condensed {} -> {} samples in {} passes",
            stats.input_size, stats.retained_size, stats.passes
        );
    }
    println!(
        "trained model with {} support vectors; wrote {}",
        phase.model.support_vectors.len(),
        args.out.display()
    );
    if let Some(path) = args.emit_training {
        write_text(&path, render_samples(dims, &phase.training))?;
        println!("wrote training collection to {}", path.display());
    }
    Ok(())
}

fn run_grid_search(args: GridSearchArgs) -> Result<()> {
    let (_, train_set) = read_ds(&args.train_ds)?;
    let (_, val_set) = read_ds(&args.val_ds)?;
    let vectors: Vec<&[f64]> = train_set.iter().map(|s| s.u.as_slice()).collect();
    let scaler = StandardScaler::fit(&vectors)?;
    let train_std = standardize_samples(&train_set, &scaler)?;
    let val_std = standardize_samples(&val_set, &scaler)?;
    let c_grid = if args.c_grid.is_empty() {
        default_c_grid()
    } else {
        args.c_grid
    };
    let gamma_grid = if args.gamma_grid.is_empty() {
        default_gamma_grid()
    } else {
        args.gamma_grid
    };
    let opts = TrainOptions {
        tol: args.tol,
        seed: args.seed,
        ..TrainOptions::default()
    };
    let best = grid_search(&train_std, &val_std, &c_grid, &gamma_grid, &opts)?;
    println!("best: C={} gamma={}", best.c, best.gamma);
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<()> {
    let model = DichotomizerModel::load(&args.model)?;
    let ds = load_features(&args.features)?;
    let fusion = parse_fusion(&args.fusion)?;
    let text = std::fs::read_to_string(&args.queries)
        .map_err(|e| Error::io(args.queries.display().to_string(), e))?;
    let mut out = String::from("q_writer,q_sig,claimed_writer,fused_score,decision,selected_reference\n");
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(line_no, "expected q_writer,q_sig,q_kind,claimed_writer,refs"));
        }
        let q_writer: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, "bad writer id"))?;
        let q_sig: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, "bad signature id"))?;
        let q_kind = SignatureKind::parse(fields[2].trim())
            .ok_or_else(|| Error::parse(line_no, format!("unknown kind `{}`", fields[2])))?;
        let claimed: u32 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, "bad claimed writer"))?;
        let ref_ids: Vec<u32> = fields[4]
            .split(';')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad reference id `{s}`")))
            })
            .collect::<Result<_>>()?;

        let questioned = ds
            .records
            .iter()
            .find(|r| r.writer_id == q_writer && r.signature_id == q_sig && r.kind == q_kind)
            .ok_or_else(|| {
                Error::Config(format!("questioned signature {q_writer}:{q_sig} not found"))
            })?;
        let references: Vec<&sigver::datamodel::SignatureRecord> = ref_ids
            .iter()
            .map(|&id| {
                ds.records
                    .iter()
                    .find(|r| {
                        r.writer_id == claimed
                            && r.signature_id == id
                            && r.kind == SignatureKind::Genuine
                    })
                    .ok_or_else(|| Error::Config(format!("reference {claimed}:{id} not found")))
            })
            .collect::<Result<_>>()?;
        let outcome =
            sigver::verification::verify(&model, questioned, &references, fusion, args.threshold)?;
        out.push_str(&format!(
            "{q_writer},{q_sig},{claimed},{},{},{}\n",
            outcome.fused_score,
            match outcome.decision {
                sigver::verification::Decision::Accept => "accept",
                sigver::verification::Decision::Reject => "reject",
            },
            outcome
                .selected_reference_index
                .map(|i| i.to_string())
                .unwrap_or_else(|| "-".to_string())
        ));
    }
    write_text(&args.out, out)?;
    println!("wrote outcomes to {}", args.out.display());
    Ok(())
}

fn resolve_eval_config(args: &EvalArgs) -> Result<ExperimentConfig> {
    let mut cfg = if let Some(path) = &args.manifest {
        load_manifest_config(path)?
    } else if let Some(path) = &args.config {
        load_config(path)?
    } else {
        ExperimentConfig::synthetic_benchmark()
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

/// Runs the handler; on failure after the output directory exists, leaves a
/// FAILED marker so partial artifacts are never mistaken for results.
fn with_failure_marker(dir: &Path, run: impl FnOnce() -> Result<()>) -> Result<()> {
    match run() {
        Ok(()) => Ok(()),
        Err(e) => {
            if dir.exists() {
                let _ = std::fs::write(dir.join("FAILED"), format!("{e}\n"));
            }
            Err(e)
        }
    }
}

fn run_eval(args: EvalArgs, ih_only: bool) -> Result<()> {
    if let Some(path) = &args.init {
        save_config(&ExperimentConfig::synthetic_benchmark(), path)?;
        println!("wrote default benchmark config to {}", path.display());
        return Ok(());
    }
    let cfg = resolve_eval_config(&args)?;
    let out = args.out.clone();
    with_failure_marker(&out, || {
        let report = run_experiment(&cfg)?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
        if ih_only {
            let mut text = String::new();
            for category in [
                EvalCategory::Positive,
                EvalCategory::NegativeRandom,
                EvalCategory::NegativeSkilled,
                EvalCategory::NegativeSimple,
            ] {
                let tables: Vec<_> = report
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
                let pooled = pool_ih_tables(&tables)?;
                text.push_str(&format!("category: {}\n", category.as_str()));
                for row in &pooled.rows {
                    text.push_str(&format!(
                        "{:.2}\t{}\t{}\n",
                        row.numerator as f64 / pooled.k as f64,
                        row.sample_count,
                        row.accuracy
                            .iter()
                            .map(|a| a.map(|v| format!("{:.2}", v * 100.0)).unwrap_or("-".into()))
                            .collect::<Vec<_>>()
                            .join("\t")
                    ));
                }
                text.push('\n');
            }
            write_text(&out.join("ih_tables.txt"), text)?;
        } else {
            write_report(&report, &out)?;
        }
        println!("wrote report to {}", out.display());
        Ok(())
    })
}

fn run_transfer(args: TransferArgs) -> Result<()> {
    let model = DichotomizerModel::load(&args.model)?;
    let foreign = load_features(&args.features)?;
    let fusion = parse_fusion(&args.fusion)?;
    let training_std = match &args.training {
        Some(path) => {
            let (_, raw) = read_ds(path)?;
            Some(standardize_samples(&raw, &model.scaler)?)
        }
        None => None,
    };
    let out = args.out.clone();
    with_failure_marker(&out, || {
        let mut evaluator = Evaluator::new(&model);
        if let Some(t) = &training_std {
            evaluator = evaluator.with_training(t);
        }
        let plan = ExploitationPlan {
            references_per_writer: args.refs,
            genuine_queries: args.genuine,
            skilled_queries: args.skilled,
            random_queries: args.random,
            simple_queries: args.simple,
            seed: args.seed,
        };
        let run = evaluator.transfer_eval(&foreign, &plan)?;
        let cfg = RefConfig::new(args.refs, fusion);
        let evals = run.writer_evaluations(&cfg)?;
        let global = sigver::evaluation::global_eer(&evals)?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let mut text = format!(
            "transfer evaluation of {} ({} writers)\nconfiguration: {}\nglobal EER: {:.4} ({:.2}%)\n\nwriter,threshold,eer\n",
            foreign.name,
            evals.len(),
            cfg.name,
            global,
            global * 100.0
        );
        for e in &evals {
            text.push_str(&format!("{},{},{}\n", e.writer_id, e.user_threshold, e.eer));
        }
        write_text(&out.join("transfer_report.txt"), text)?;
        if training_std.is_some() {
            let mut text = String::new();
            for category in [
                EvalCategory::Positive,
                EvalCategory::NegativeRandom,
                EvalCategory::NegativeSkilled,
            ] {
                let table = run.ih_table(category, &[RefConfig::new(1, fusion), cfg.clone()])?;
                text.push_str(&format!("category: {}\n", category.as_str()));
                for row in &table.rows {
                    text.push_str(&format!(
                        "{:.2}\t{}\t{}\n",
                        row.numerator as f64 / table.k as f64,
                        row.sample_count,
                        row.accuracy
                            .iter()
                            .map(|a| a.map(|v| format!("{:.2}", v * 100.0)).unwrap_or("-".into()))
                            .collect::<Vec<_>>()
                            .join("\t")
                    ));
                }
                text.push('\n');
            }
            write_text(&out.join("ih_tables.txt"), text)?;
        }
        println!(
            "global EER {:.2}% over {} writers; wrote {}",
            global * 100.0,
            evals.len(),
            out.display()
        );
        Ok(())
    })
}

fn parse_sig_ref(s: &str) -> Result<(u32, u32)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("expected writer:sig, got `{s}`")));
    }
    Ok((
        parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad writer in `{s}`")))?,
        parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad signature in `{s}`")))?,
    ))
}

fn run_dump(args: DumpArgs) -> Result<()> {
    let model = DichotomizerModel::load(&args.model)?;
    let (_, raw_training) = read_ds(&args.training)?;
    let training = standardize_samples(&raw_training, &model.scaler)?;
    let ds = load_features(&args.features)?;

    let parts: Vec<&str> = args.questioned.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected writer:sig:kind, got `{}`",
            args.questioned
        )));
    }
    let (qw, qs): (u32, u32) = (
        parts[0]
            .parse()
            .map_err(|_| Error::Config("bad writer id".into()))?,
        parts[1]
            .parse()
            .map_err(|_| Error::Config("bad signature id".into()))?,
    );
    let qk = SignatureKind::parse(parts[2])
        .ok_or_else(|| Error::Config(format!("unknown kind `{}`", parts[2])))?;
    let (rw, rs) = parse_sig_ref(&args.reference)?;

    let questioned = ds
        .records
        .iter()
        .find(|r| r.writer_id == qw && r.signature_id == qs && r.kind == qk)
        .ok_or_else(|| Error::Config(format!("questioned signature {} not found", args.questioned)))?;
    let reference = ds
        .records
        .iter()
        .find(|r| r.writer_id == rw && r.signature_id == rs && r.kind == SignatureKind::Genuine)
        .ok_or_else(|| Error::Config(format!("reference {} not found", args.reference)))?;

    let mut query = build_query_set(questioned, &[reference])?.remove(0);
    query.u = model.scaler.transform(&query.u)?;
    let dump = dump_neighborhood(&query, &training, args.k)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let path = args.out.join(dump.file_name());
    write_text(&path, dump.render())?;
    println!(
        "kDN = {}/{}; wrote {}",
        dump.hardness.disagreeing,
        dump.hardness.k,
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::BuildDs(a) => run_build_ds(a),
        Command::Condense(a) => run_condense(a),
        Command::Train(a) => run_train(a),
        Command::GridSearch(a) => run_grid_search(a),
        Command::Verify(a) => run_verify(a),
        Command::Eval(a) => run_eval(a, false),
        Command::IhReport(a) => run_eval(a, true),
        Command::Transfer(a) => run_transfer(a),
        Command::DumpNeighborhood(a) => run_dump(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
