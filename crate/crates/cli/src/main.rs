mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use mono_ctr::dataio::{
    generate_synthetic, load_checkpoint, load_csv, save_checkpoint, write_csv, Dataset,
};
use mono_ctr::experiment::{write_sweep_csv, Experiment, ExperimentConfig, PreparedData};
use mono_ctr::featurespace::{FeatureEncoder, FeatureSchema};
use mono_ctr::importance::{ImportanceProfile, Reference, ShapleyConfig};
use mono_ctr::metrics::{evaluate, format_table};
use mono_ctr::trainer::{train, Variant};

use config::{required, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Fit vocabularies, discretizers and dense transforms on the training split.
    FitFeatures,
    /// Train a baseline or CCSS model and write a checkpoint.
    Train,
    /// Estimate per-field Shapley importance on a checkpoint.
    Importance,
    /// AUC, GAUC and Mono_rate of a checkpoint on the test split.
    Evaluate,
    /// Write a synthetic monotone dataset and its schema.
    SynthData,
    /// Full CCSS and its four ablations, averaged over seeds.
    Ablation,
    /// Full CCSS over an alpha grid, averaged over seeds.
    SweepAlpha,
}

#[derive(Debug, Parser)]
#[command(name = "mono-ctr", version, about = "Monotonicity-aware CTR training and evaluation")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training seed; multi-seed commands run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<mono_ctr::Error> for Failure {
    fn from(e: mono_ctr::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage<T>(r: std::result::Result<T, String>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nusage: mono-ctr <COMMAND> --config <PATH> [--seed <N>] [--out <DIR>]");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    let mut cfg = RunConfig::load(&cli.config).map_err(|e| Failure::Usage(format!("{e:#}")))?;
    if let Some(out) = &cli.out {
        cfg.paths.output = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.experiment.seeds = vec![seed];
        if let Some(s) = cfg.synthetic.as_mut() {
            s.seed = seed;
        }
    }
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::SynthData => synth_data(&cfg),
        Command::FitFeatures => fit_features(&cfg),
        Command::Train => train_cmd(&cfg),
        Command::Importance => importance_cmd(&cfg),
        Command::Evaluate => evaluate_cmd(&cfg),
        Command::Ablation => ablation_cmd(&cfg),
        Command::SweepAlpha => sweep_cmd(&cfg),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_splits(cfg: &RunConfig) -> std::result::Result<(Dataset, Dataset), Failure> {
    let schema_path = usage(required(&cfg.paths.schema, "schema"))?;
    let data_path = usage(required(&cfg.paths.data, "data"))?;
    let schema = FeatureSchema::load(schema_path)?;
    let data = load_csv(data_path, &schema)?;
    let (train, test) = match (&cfg.split.cutoff, &schema.split) {
        (Some(cutoff), Some(_)) => data.split_by_key(cutoff),
        _ => data.split_random(cfg.split.train_fraction, cfg.split.seed),
    };
    if train.is_empty() || test.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "split left {} training and {} test rows",
            train.len(),
            test.len()
        )));
    }
    Ok((train, test))
}

fn synth_data(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let spec = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| Failure::Usage("synth-data needs a `[synthetic]` table in the config".into()))?;
    let (data, _) = generate_synthetic(spec, spec.seed)?;
    let data_path = cfg.path_or_output(&cfg.paths.data, "synthetic.csv");
    let schema_path = cfg.path_or_output(&cfg.paths.schema, "schema.toml");
    write_csv(&data_path, &data)?;
    write_text(&schema_path, &data.schema.to_toml_string()?)?;
    println!(
        "wrote {} rows (positive rate {:.4}) to {}",
        data.len(),
        data.positive_rate(),
        data_path.display()
    );
    println!("wrote schema to {}", schema_path.display());
    Ok(())
}

fn fit_features(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let (train, _) = load_splits(cfg)?;
    let encoder = FeatureEncoder::fit(&train.schema, &train.rows)?;
    let path = cfg.output_dir().join("encoder.json");
    encoder.save(&path)?;
    for f in &encoder.numerical {
        println!(
            "{:<24} buckets {:>3}  direction {:?}",
            f.name,
            f.n_buckets(),
            f.direction
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn train_cmd(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let (train_rows, test_rows) = load_splits(cfg)?;
    let prepared = PreparedData::new(&train_rows, &test_rows)?;
    let train_cfg = match cfg.experiment.variant {
        Some(v) => cfg.train.clone().variant(v),
        None => cfg.train.clone(),
    };
    let profile = if train_cfg.terms().any() && !train_cfg.uniform_disturb {
        let path = usage(required(&cfg.paths.importance, "importance"))?;
        Some(ImportanceProfile::load(path)?)
    } else {
        None
    };
    let (model, report) = train(
        &train_cfg,
        &cfg.model,
        &prepared.encoder,
        &prepared.train,
        profile.as_ref(),
    )?;
    let ck = cfg.path_or_output(&cfg.paths.checkpoint, "model.json");
    save_checkpoint(&ck, &model, &prepared.encoder, Some(&train_cfg), train_cfg.seed)?;
    write_json(&cfg.output_dir().join("train_report.json"), &report)?;
    for e in &report.epochs {
        println!(
            "epoch {:>3}  lr {:.5}  pointwise {:.5}  pairwise {:.5}",
            e.epoch, e.lr, e.pointwise_loss, e.pairwise_loss
        );
    }
    println!("wrote {}", ck.display());
    Ok(())
}

fn importance_cmd(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let ck_path = usage(required(&cfg.paths.checkpoint, "checkpoint"))?;
    let ck = load_checkpoint(ck_path)?;
    let (train_rows, _) = load_splits(cfg)?;
    let probes = ck.encoder.encode_all(&train_rows.rows)?;
    let reference = Reference::training_mean(&ck.encoder, &train_rows.rows)?;
    let shapley = ShapleyConfig {
        seed: cfg.train.seed,
        ..cfg.shapley.clone()
    };
    let profile = ImportanceProfile::estimate(&ck.model, &ck.encoder, &probes, &reference, &shapley)?;
    let path = cfg.path_or_output(&cfg.paths.importance, "importance.json");
    profile.save(&path)?;
    for (rank, j) in profile.top_k(profile.fields.len()).into_iter().enumerate() {
        let (name, f) = profile.fields.get_index(j).expect("index from top_k");
        println!("{:>2}. {:<24} q {:.6}  p {:.4}", rank + 1, name, f.q, f.p);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let ck_path = usage(required(&cfg.paths.checkpoint, "checkpoint"))?;
    let ck = load_checkpoint(ck_path)?;
    let (_, test_rows) = load_splits(cfg)?;
    let samples = ck.encoder.encode_all(&test_rows.rows)?;
    let fields: Vec<usize> = match &cfg.paths.importance {
        Some(path) => {
            let profile = ImportanceProfile::load(path)?;
            profile.check_against(&ck.encoder)?;
            profile.top_k(cfg.metrics.top_k)
        }
        None => ck
            .encoder
            .eligibility()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(j, _)| j)
            .collect(),
    };
    let report = evaluate(&ck.model, &ck.encoder, &samples, &test_rows.group_indices(), &fields)?;
    let out = cfg.output_dir();
    write_json(&out.join("metrics.json"), &report)?;
    let label = ck.model.spec().kind.as_str().to_uppercase();
    let table = format_table(&[(label, report)]);
    write_text(&out.join("metrics.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn experiment(cfg: &RunConfig) -> std::result::Result<Experiment, Failure> {
    let (train_rows, test_rows) = load_splits(cfg)?;
    let prepared = PreparedData::new(&train_rows, &test_rows)?;
    let config = ExperimentConfig {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        shapley: cfg.shapley.clone(),
        seeds: cfg.experiment.seeds.clone(),
        top_k: cfg.metrics.top_k,
    };
    Ok(Experiment::new(prepared, config)?)
}

fn ablation_cmd(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let exp = experiment(cfg)?;
    let rows = exp.ablation()?;
    let out = cfg.output_dir();
    write_json(&out.join("ablation.json"), &rows)?;
    let table = format_table(&rows.iter().map(|r| (r.label.clone(), r.metrics.clone())).collect::<Vec<_>>());
    write_text(&out.join("ablation.txt"), &table)?;
    print!("{table}");
    debug_assert_eq!(rows.len(), Variant::ABLATION.len());
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let exp = experiment(cfg)?;
    let points = exp.sweep_alpha(&cfg.experiment.alphas)?;
    let path = cfg.output_dir().join("sweep_alpha.csv");
    write_sweep_csv(&path, &points)?;
    println!("{:>8}  {:>8}  {:>8}  {:>9}", "alpha", "auc", "gauc", "mono_rate");
    for p in &points {
        let gauc = p.gauc.map_or_else(|| "n/a".to_string(), |g| format!("{g:.4}"));
        println!("{:>8}  {:>8.4}  {:>8}  {:>9.4}", p.alpha, p.auc, gauc, p.mono_rate);
    }
    println!("wrote {}", path.display());
    Ok(())
}
