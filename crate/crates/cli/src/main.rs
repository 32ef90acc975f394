//! `urank`: train, evaluate, and cross-validate listwise ranking models.
//!
//! Three subcommands:
//! - `train`: fit one model on a train/validation pair, writing a checkpoint,
//!   a training log, and the effective configuration into `--out`.
//! - `eval`: score a test split with a saved checkpoint and print the
//!   NDCG/ERR table.
//! - `cv`: run every fold under a LETOR-style `Fold1..FoldN` root and print
//!   per-fold rows plus the mean row.

mod settings;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use settings::Settings;
use urank::boosting::{uboost_train, urboost_train};
use urank::checkpoint::{load_model, save_model, Model};
use urank::data::{load_letor, normalize_dataset, Dataset};
use urank::gbdt::{umart_train, HessianForm, TreeBoostConfig};
use urank::metrics::{evaluate, EvalConfig, EvalReport, ZeroLabelPolicy};
use urank::mlp::{train_urank, TrainConfig, TrainingLog};

#[derive(Parser)]
#[command(
    name = "urank",
    version,
    about = "Listwise learning-to-rank on unique rating levels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoint, training log, and config dump
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test split; prints the metric table
    Eval(EvalArgs),
    /// Cross-validate over Fold1..FoldN; prints per-fold and mean rows
    Cv(CvArgs),
}

/// Flags shared by `train` and `cv`. Every flag overrides the config file,
/// which overrides built-in defaults.
#[derive(Args)]
struct HyperArgs {
    /// Model to train: urank, uboost, umart, or urboost
    #[arg(long)]
    model: Option<String>,
    /// key=value config file; flags given here override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Likelihood window size u >= 1 (omit for unwindowed)
    #[arg(long)]
    window: Option<usize>,
    /// RNG seed controlling init and epoch shuffling
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated metric cutoffs, e.g. 1,3,5,10
    #[arg(long)]
    cutoffs: Option<String>,
    /// All-zero-rating query handling: skip or one
    #[arg(long)]
    zero_label_policy: Option<String>,
    /// Min-max scale features within each query (true/false)
    #[arg(long)]
    normalize: Option<bool>,
    /// Hidden layer sizes `k1,k2` (default auto-selects by feature count)
    #[arg(long)]
    hidden_dims: Option<String>,
    /// Adam learning rate (default auto-selects by feature count)
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Epochs (trees for umart) allowed without validation improvement
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    grad_clip_norm: Option<f64>,
    /// ELU on the output layer (true/false)
    #[arg(long)]
    activate_output: Option<bool>,
    /// Maximum boosted weak learners (uboost/urboost), capped at 5
    #[arg(long)]
    max_learners: Option<usize>,
    /// RNN hidden-state size (urboost)
    #[arg(long)]
    rnn_hidden: Option<usize>,
    /// Lexicographic tolerance for validation-key comparisons
    #[arg(long)]
    selection_tolerance: Option<f64>,
    /// Boosting rounds (umart)
    #[arg(long)]
    num_trees: Option<usize>,
    #[arg(long)]
    max_leaves: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    /// L2 regularization on tree leaf values (umart)
    #[arg(long)]
    tree_lambda: Option<f64>,
    #[arg(long)]
    shrinkage: Option<f64>,
    /// Pairwise gradient scale sigma (umart)
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    max_bins: Option<usize>,
    /// Second-derivative accumulation: as-printed or symmetric (umart)
    #[arg(long)]
    hessian_form: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training split (LETOR format)
    #[arg(long)]
    train: PathBuf,
    /// Validation split used for model selection
    #[arg(long)]
    valid: PathBuf,
    /// Optional test split; its metric table prints to stdout
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Test split (LETOR format)
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated metric cutoffs
    #[arg(long)]
    cutoffs: Option<String>,
    /// All-zero-rating query handling: skip or one
    #[arg(long)]
    zero_label_policy: Option<String>,
    /// Must match the setting the checkpoint was trained with
    #[arg(long)]
    normalize: Option<bool>,
}

#[derive(Args)]
struct CvArgs {
    /// Directory containing Fold1..Fold{folds} subdirectories
    #[arg(long)]
    folds_root: PathBuf,
    /// Number of folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Output directory (one subdirectory per fold)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Cv(args) => cmd_cv(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn default_settings() -> Settings {
    Settings::with_defaults(&[
        ("model", "urank"),
        ("window", "none"),
        ("seed", "42"),
        ("cutoffs", "1,3,5,10"),
        ("zero_label_policy", "skip"),
        ("normalize", "true"),
        ("hidden_dims", "auto"),
        ("learning_rate", "auto"),
        ("max_epochs", "1000"),
        ("patience", "200"),
        ("grad_clip_norm", "5"),
        ("activate_output", "true"),
        ("max_learners", "5"),
        ("rnn_hidden", "50"),
        ("selection_tolerance", "1e-6"),
        ("num_trees", "200"),
        ("max_leaves", "31"),
        ("min_leaf", "20"),
        ("tree_lambda", "0.001"),
        ("shrinkage", "0.05"),
        ("sigma", "2"),
        ("max_bins", "255"),
        ("hessian_form", "as-printed"),
    ])
}

fn build_settings(hyper: &HyperArgs) -> Result<Settings> {
    let mut s = default_settings();
    if let Some(cfg) = &hyper.config {
        s.apply_file(cfg)?;
    }
    s.apply_flag("model", &hyper.model)?;
    s.apply_flag("window", &hyper.window)?;
    s.apply_flag("seed", &hyper.seed)?;
    s.apply_flag("cutoffs", &hyper.cutoffs)?;
    s.apply_flag("zero_label_policy", &hyper.zero_label_policy)?;
    s.apply_flag("normalize", &hyper.normalize)?;
    s.apply_flag("hidden_dims", &hyper.hidden_dims)?;
    s.apply_flag("learning_rate", &hyper.learning_rate)?;
    s.apply_flag("max_epochs", &hyper.max_epochs)?;
    s.apply_flag("patience", &hyper.patience)?;
    s.apply_flag("grad_clip_norm", &hyper.grad_clip_norm)?;
    s.apply_flag("activate_output", &hyper.activate_output)?;
    s.apply_flag("max_learners", &hyper.max_learners)?;
    s.apply_flag("rnn_hidden", &hyper.rnn_hidden)?;
    s.apply_flag("selection_tolerance", &hyper.selection_tolerance)?;
    s.apply_flag("num_trees", &hyper.num_trees)?;
    s.apply_flag("max_leaves", &hyper.max_leaves)?;
    s.apply_flag("min_leaf", &hyper.min_leaf)?;
    s.apply_flag("tree_lambda", &hyper.tree_lambda)?;
    s.apply_flag("shrinkage", &hyper.shrinkage)?;
    s.apply_flag("sigma", &hyper.sigma)?;
    s.apply_flag("max_bins", &hyper.max_bins)?;
    s.apply_flag("hessian_form", &hyper.hessian_form)?;
    Ok(s)
}

fn load_split(path: &Path, role: &str) -> Result<Dataset> {
    load_letor(path).with_context(|| format!("cannot load the {role} split"))
}

fn neural_config(s: &mut Settings, feature_count: usize) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::for_feature_count(feature_count);
    if let Some(dims) = s.parse_hidden_dims()? {
        cfg.hidden_dims = dims;
    }
    if let Some(lr) = s.parse_learning_rate()? {
        cfg.learning_rate = lr;
    }
    s.resolve_auto("hidden_dims", format!("{},{}", cfg.hidden_dims.0, cfg.hidden_dims.1));
    s.resolve_auto("learning_rate", cfg.learning_rate);
    cfg.max_epochs = s.parse("max_epochs")?;
    cfg.patience = s.parse("patience")?;
    cfg.grad_clip_norm = s.parse("grad_clip_norm")?;
    cfg.ndcg_cutoffs = s.parse_cutoffs()?;
    cfg.selection_tolerance = s.parse("selection_tolerance")?;
    cfg.seed = s.parse("seed")?;
    cfg.activate_output = s.parse("activate_output")?;
    cfg.window = s.parse_window()?;
    cfg.max_learners = s.parse("max_learners")?;
    cfg.rnn_hidden = s.parse("rnn_hidden")?;
    Ok(cfg)
}

fn tree_config(s: &Settings) -> Result<TreeBoostConfig> {
    Ok(TreeBoostConfig {
        num_trees: s.parse("num_trees")?,
        max_leaves: s.parse("max_leaves")?,
        min_leaf: s.parse("min_leaf")?,
        lambda: s.parse("tree_lambda")?,
        shrinkage: s.parse("shrinkage")?,
        sigma: s.parse("sigma")?,
        window: s.parse_window()?,
        hessian_form: HessianForm::parse(s.raw("hessian_form"))?,
        max_bins: s.parse("max_bins")?,
        ndcg_cutoffs: s.parse_cutoffs()?,
        selection_tolerance: s.parse("selection_tolerance")?,
    })
}

/// Dispatches to the selected trainer. `settings` is mutable so auto-chosen
/// hyperparameters land in the provenance dump.
fn run_training(
    train: &Dataset,
    valid: &Dataset,
    settings: &mut Settings,
) -> Result<(Model, TrainingLog)> {
    let model_name = settings.raw("model").to_string();
    match model_name.as_str() {
        "urank" => {
            let cfg = neural_config(settings, train.feature_count)?;
            let (params, log) = train_urank(train, valid, &cfg)?;
            Ok((Model::Mlp(params), log))
        }
        "uboost" => {
            let cfg = neural_config(settings, train.feature_count)?;
            let (ensemble, log) = uboost_train(train, valid, &cfg)?;
            Ok((Model::Ensemble(ensemble), log))
        }
        "urboost" => {
            let cfg = neural_config(settings, train.feature_count)?;
            let (ensemble, log) = urboost_train(train, valid, &cfg)?;
            Ok((Model::Ensemble(ensemble), log))
        }
        "umart" => {
            let cfg = tree_config(settings)?;
            let (ensemble, log) = umart_train(train, valid, &cfg)?;
            Ok((Model::TreeEnsemble(ensemble), log))
        }
        other => bail!("unknown model `{other}` (expected urank, uboost, umart, or urboost)"),
    }
}

/// Evaluates a model over a dataset whose feature width was already checked.
fn eval_dataset(
    model: &Model,
    dataset: &Dataset,
    cutoffs: &[usize],
    policy: ZeroLabelPolicy,
) -> Result<EvalReport> {
    let config = EvalConfig::new(cutoffs.to_vec(), policy, dataset.max_rating().max(1));
    let report = evaluate(
        dataset,
        |q| {
            model
                .score_query(q)
                .expect("feature width validated before evaluation")
        },
        &config,
    )?;
    Ok(report)
}

fn check_width(expected: usize, dataset: &Dataset, what: &str) -> Result<()> {
    if dataset.feature_count != expected {
        bail!(
            "feature-count mismatch: model expects {expected} features but {what} has {}",
            dataset.feature_count
        );
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut settings = build_settings(&args.hyper)?;
    let normalize = settings.parse::<bool>("normalize")?;
    let cutoffs = settings.parse_cutoffs()?;
    let policy = ZeroLabelPolicy::parse(settings.raw("zero_label_policy"))?;

    let mut train = load_split(&args.train, "training")?;
    let mut valid = load_split(&args.valid, "validation")?;
    check_width(train.feature_count, &valid, "the validation split")?;
    if normalize {
        train = normalize_dataset(&train);
        valid = normalize_dataset(&valid);
    }

    let (model, log) = run_training(&train, &valid, &mut settings)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    save_model(&model, train.feature_count, &args.out.join("model.json"))?;
    std::fs::write(args.out.join("train_log.txt"), log.to_lines())
        .with_context(|| "cannot write train_log.txt".to_string())?;
    std::fs::write(args.out.join("config.txt"), settings.provenance_dump())
        .with_context(|| "cannot write config.txt".to_string())?;

    let valid_report = eval_dataset(&model, &valid, &cutoffs, policy)?;
    std::fs::write(args.out.join("valid_report.tsv"), valid_report.to_tsv())
        .with_context(|| "cannot write valid_report.tsv".to_string())?;
    println!(
        "trained {} (best epoch {}); artifacts in {}",
        settings.raw("model"),
        log.best_epoch,
        args.out.display()
    );

    if let Some(test_path) = &args.test {
        let mut test = load_split(test_path, "test")?;
        check_width(train.feature_count, &test, "the test split")?;
        if normalize {
            test = normalize_dataset(&test);
        }
        let report = eval_dataset(&model, &test, &cutoffs, policy)?;
        std::fs::write(args.out.join("test_report.tsv"), report.to_tsv())
            .with_context(|| "cannot write test_report.tsv".to_string())?;
        print!("{}", report.to_tsv());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (model, width) = load_model(&args.model)
        .with_context(|| format!("cannot load checkpoint {}", args.model.display()))?;
    let cutoffs = settings::parse_cutoff_list(args.cutoffs.as_deref().unwrap_or("1,3,5,10"))?;
    let policy = ZeroLabelPolicy::parse(args.zero_label_policy.as_deref().unwrap_or("skip"))?;
    let normalize = args.normalize.unwrap_or(true);

    let mut test = load_split(&args.test, "test")?;
    check_width(width, &test, "the test split")?;
    if normalize {
        test = normalize_dataset(&test);
    }
    let report = eval_dataset(&model, &test, &cutoffs, policy)?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn cmd_cv(args: &CvArgs) -> Result<()> {
    if args.folds == 0 {
        bail!("need at least one fold");
    }
    let cutoffs = {
        let settings = build_settings(&args.hyper)?;
        settings.parse_cutoffs()?
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;

    let mut reports = Vec::with_capacity(args.folds);
    for fold in 1..=args.folds {
        let report = run_fold(args, fold).with_context(|| format!("Fold{fold} failed"))?;
        reports.push((format!("Fold{fold}"), report));
    }

    let table = cv_table(&cutoffs, &reports);
    std::fs::write(args.out.join("cv_report.tsv"), &table)
        .with_context(|| "cannot write cv_report.tsv".to_string())?;
    print!("{table}");
    Ok(())
}

fn run_fold(args: &CvArgs, fold: usize) -> Result<EvalReport> {
    let dir = args.folds_root.join(format!("Fold{fold}"));
    let mut settings = build_settings(&args.hyper)?;
    let normalize = settings.parse::<bool>("normalize")?;
    let cutoffs = settings.parse_cutoffs()?;
    let policy = ZeroLabelPolicy::parse(settings.raw("zero_label_policy"))?;

    let mut train = load_split(&dir.join("train.txt"), "training")?;
    let mut valid = load_split(&dir.join("vali.txt"), "validation")?;
    let mut test = load_split(&dir.join("test.txt"), "test")?;
    check_width(train.feature_count, &valid, "the validation split")?;
    check_width(train.feature_count, &test, "the test split")?;
    if normalize {
        train = normalize_dataset(&train);
        valid = normalize_dataset(&valid);
        test = normalize_dataset(&test);
    }

    let (model, log) = run_training(&train, &valid, &mut settings)?;

    let fold_out = args.out.join(format!("Fold{fold}"));
    std::fs::create_dir_all(&fold_out)
        .with_context(|| format!("cannot create {}", fold_out.display()))?;
    save_model(&model, train.feature_count, &fold_out.join("model.json"))?;
    std::fs::write(fold_out.join("train_log.txt"), log.to_lines())
        .with_context(|| "cannot write train_log.txt".to_string())?;
    std::fs::write(fold_out.join("config.txt"), settings.provenance_dump())
        .with_context(|| "cannot write config.txt".to_string())?;

    eval_dataset(&model, &test, &cutoffs, policy)
}

/// Per-fold rows plus the mean row, 4 decimal places, TSV.
fn cv_table(cutoffs: &[usize], reports: &[(String, EvalReport)]) -> String {
    let mut out = String::from("split");
    for k in cutoffs {
        out.push_str(&format!("\tndcg@{k}"));
    }
    for k in cutoffs {
        out.push_str(&format!("\terr@{k}"));
    }
    out.push('\n');

    let cell = |v: f64| format!("\t{v:.4}");
    for (name, report) in reports {
        out.push_str(name);
        for k in cutoffs {
            out.push_str(&cell(report.ndcg[k]));
        }
        for k in cutoffs {
            out.push_str(&cell(report.err[k]));
        }
        out.push('\n');
    }

    out.push_str("mean");
    let n = reports.len() as f64;
    for k in cutoffs {
        let mean = reports.iter().map(|(_, r)| r.ndcg[k]).sum::<f64>() / n;
        out.push_str(&cell(mean));
    }
    for k in cutoffs {
        let mean = reports.iter().map(|(_, r)| r.err[k]).sum::<f64>() / n;
        out.push_str(&cell(mean));
    }
    out.push('\n');
    out
}
