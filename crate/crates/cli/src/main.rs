use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rba_gcn::aggregate::SecondLevelMode;
use rba_gcn::ablation::{run_ablation, write_ablation, AblationAxis};
use rba_gcn::artifacts::{
    cluster_dump, save_history, write_json, write_predictions, Checkpoint, MetricsReport, CHECKPOINT_FILE, HISTORY_FILE,
    PREDICTIONS_FILE, SPLITS_FILE,
};
use rba_gcn::cluster::NeighborhoodConfig;
use rba_gcn::config::RunConfig;
use rba_gcn::data::{
    generate_synthetic, load_dataset, load_dataset_with_labels, load_splits, save_dataset, save_splits, split, Dataset,
    SplitPart, SynthSpec, SynthTask,
};
use rba_gcn::modality::parse_modalities;
use rba_gcn::model::{evaluate, micro_gradcheck, train, LayerKind, MicroConfig};

const LOG_ENV: &str = "RBAGCN_LOG";

#[derive(Parser)]
#[command(name = "rbagcn", version, about = "Bilevel-aggregation graph model for emotion recognition in conversation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history and metrics.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Write per-utterance predictions (and optionally cluster dumps).
    Predict(PredictArgs),
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train every variant along one ablation axis.
    Ablate(AblateArgs),
    /// Finite-difference check of the analytic gradients on a micro-model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Default)]
struct Overrides {
    /// Run config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// e.g. `cg+dg_filtered`
    #[arg(long)]
    neighborhood: Option<NeighborhoodConfig>,
    /// `bilevel` or `gcnK`
    #[arg(long)]
    layers: Option<LayerKind>,
    /// `joint` or `per_cluster`
    #[arg(long)]
    second_level: Option<SecondLevelMode>,
    /// e.g. `tva`, `t+a`
    #[arg(long)]
    modalities: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.splits {
            cfg.splits = Some(v.clone());
        }
        if let Some(v) = &self.output {
            cfg.output = v.clone();
        }
        let t = &mut cfg.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.lr {
            t.lr = v;
        }
        if let Some(v) = self.dropout {
            t.dropout = v;
        }
        if let Some(v) = self.gamma {
            t.gamma = v;
        }
        if let Some(v) = self.rho {
            t.rho = v;
        }
        if let Some(v) = self.hidden {
            t.hidden = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.neighborhood {
            t.neighborhood = v;
        }
        if let Some(v) = self.layers {
            t.layers = v;
        }
        if let Some(v) = self.second_level {
            t.second_level = v;
        }
        if let Some(v) = &self.modalities {
            t.modalities = parse_modalities(v)?;
        }
        t.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Splits file; defaults to splits.json beside the checkpoint.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// train, val, test or all
    #[arg(long, default_value = "test")]
    split: SplitPart,
    /// Directory for metrics.json, confusion.csv and per_class.csv.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV path.
    #[arg(long, default_value = PREDICTIONS_FILE)]
    output: PathBuf,
    /// Also write graph and cluster assignments of every conversation.
    #[arg(long)]
    clusters: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Synthetic spec (TOML); missing keys take the task defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// prototype or long_range, used when no spec file is given.
    #[arg(long, default_value = "prototype")]
    task: SynthTask,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: Overrides,
    /// neighborhood, gamma, layers or modality
    #[arg(long)]
    axis: String,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Micro-model settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    layers: Option<LayerKind>,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn load_with_splits(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset.as_ref().context("no dataset given (use --dataset or set `dataset` in the config)")?;
    let data = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match &cfg.splits {
        Some(p) => data.with_splits(load_splits(p)?)?,
        None => split(data, cfg.split_ratios, cfg.train.seed)?,
    })
}

fn eval_part(data: &Dataset) -> SplitPart {
    [SplitPart::Test, SplitPart::Val]
        .into_iter()
        .find(|&p| data.part(p).map(|c| !c.is_empty()).unwrap_or(false))
        .unwrap_or(SplitPart::Train)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let data = load_with_splits(&cfg)?;
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    save_splits(data.splits.as_ref().expect("splits attached"), cfg.output.join(SPLITS_FILE))?;
    let out = train(&data, &cfg.train)?;
    save_history(&out.history, cfg.output.join(HISTORY_FILE))?;
    let part = eval_part(&data);
    let metrics = evaluate(&out.model, &data.part(part)?)?;
    let report = MetricsReport::new(&metrics, &data.labels, part);
    report.write_all(&cfg.output)?;
    Checkpoint::new(&out.model, &cfg.train, &data.labels, out.best_epoch, Some(report.clone())).save(cfg.output.join(CHECKPOINT_FILE))?;
    println!(
        "trained {} epochs (best {}), {} waf1 {:.4} accuracy {:.4} -> {}",
        out.history.len(),
        out.best_epoch,
        part,
        report.waf1,
        report.accuracy,
        cfg.output.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, rba_gcn::model::Model)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let model = ckpt.model()?;
    Ok((ckpt, model))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (ckpt, model) = load_checkpoint(&args.checkpoint)?;
    let mut data = load_dataset_with_labels(&args.dataset, &ckpt.labels)?;
    let splits = args
        .splits
        .clone()
        .or_else(|| Some(args.checkpoint.parent()?.join(SPLITS_FILE)).filter(|p| p.exists()));
    if let Some(p) = splits {
        if args.split != SplitPart::All {
            data = data.with_splits(load_splits(&p)?)?;
        }
    }
    let metrics = evaluate(&model, &data.part(args.split)?)?;
    let report = MetricsReport::new(&metrics, &ckpt.labels, args.split);
    if let Some(dir) = &args.output {
        fs::create_dir_all(dir)?;
        report.write_all(dir)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let (ckpt, model) = load_checkpoint(&args.checkpoint)?;
    let data = load_dataset_with_labels(&args.dataset, &ckpt.labels)?;
    let convs: Vec<_> = data.conversations.iter().collect();
    write_predictions(&model, &ckpt.labels, &convs, &args.output)?;
    if let Some(p) = &args.clusters {
        let dumps = convs.iter().map(|c| cluster_dump(&model, c)).collect::<Result<Vec<_>, _>>()?;
        write_json(p, &dumps)?;
    }
    println!("wrote {} predictions to {}", data.utterance_count(), args.output.display());
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            let task = match table.get("task").and_then(|v| v.as_str()) {
                Some(t) => t.parse()?,
                None => args.task,
            };
            // start from the task's defaults, then apply the file's keys
            let mut base = toml::Table::try_from(default_spec(task))?;
            base.extend(table);
            base.try_into::<SynthSpec>().with_context(|| format!("invalid spec {}", p.display()))?
        }
        None => default_spec(args.task),
    };
    let data = generate_synthetic(&spec, args.seed)?;
    save_dataset(&data, &args.out)?;
    println!(
        "wrote {} conversations ({} utterances) to {}",
        data.conversations.len(),
        data.utterance_count(),
        args.out.display()
    );
    Ok(())
}

fn default_spec(task: SynthTask) -> SynthSpec {
    match task {
        SynthTask::Prototype => SynthSpec::prototype(),
        SynthTask::LongRange => SynthSpec::long_range(),
    }
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let axis: AblationAxis = args.axis.parse()?;
    let cfg = args.run.resolve()?;
    let data = load_with_splits(&cfg)?;
    let rows = run_ablation(&data, &cfg.train, axis, &cfg.ablation)?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join(format!("ablation_{axis}.csv"));
    write_ablation(&rows, fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    for r in &rows {
        println!("{:<16} waf1 {:.4} accuracy {:.4}", r.variant, r.waf1, r.accuracy);
    }
    println!("-> {}", path.display());
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<bool> {
    let mut cfg: MicroConfig = match &args.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => MicroConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = args.layers {
        cfg.layers = v;
    }
    cfg.corrupt_gradient = args.corrupt_gradient;
    let r = micro_gradcheck(&cfg)?;
    println!(
        "parameters {}  max relative error {:.3e}  tolerance {:.0e}",
        r.param_count, r.report.max_rel_error, cfg.tolerance
    );
    for (name, err) in &r.segments {
        println!("  {name:<20} {err:.3e}");
    }
    if r.passed {
        println!("PASS");
    } else {
        eprintln!(
            "FAIL: worst parameter {} in segment {} (analytic {:e}, numeric {:e})",
            r.report.worst_index,
            r.worst_segment,
            r.report.analytic[r.report.worst_index],
            r.report.numeric[r.report.worst_index]
        );
    }
    Ok(r.passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Gen(a) => cmd_gen(a)?,
        Command::Ablate(a) => cmd_ablate(a)?,
        Command::Gradcheck(a) => return cmd_gradcheck(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<rba_gcn::Error>().is_some_and(|e| matches!(e, rba_gcn::Error::Argument(_))) {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
