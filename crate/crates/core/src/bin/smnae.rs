use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use smnae::data::{
    gen_synthetic_kin, load_mnist_idx, load_pair_list, load_pairs, load_video_dir, partition_subject_disjoint,
    write_pair_list, PairRecord, SyntheticConfig,
};
use smnae::eval::{evaluate_pairs, mnist_benchmark, roc_csv, MnistConfig};
use smnae::layer::random_gradient_check;
use smnae::numerics::Seed;
use smnae::pipeline::{score_with_fusion, train_pipeline, Fusion, PipelineConfig, PipelineModel};

#[derive(Parser)]
#[command(name = "smnae", version, about = "Supervised mixed-norm autoencoders for kinship verification in videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic family dataset with pairs.csv, train.csv and test.csv.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator settings; the flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        families: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.5)]
        test_fraction: f64,
        /// Seed of the family-disjoint split (defaults to the dataset seed).
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Family-disjoint split of an existing pair list.
    Split {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Train the three-stage pipeline and its classifier.
    Train {
        /// JSON pipeline settings; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Root that video paths in the pair list are relative to.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        /// Optional JSON dump of per-epoch loss traces.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Score a pair list and write an EER report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = FusionArg::Both)]
        fusion: FusionArg,
        /// ROC curve as CSV. With both rules, `_sum` and `_max` are appended
        /// to the file stem.
        #[arg(long)]
        roc_csv: Option<PathBuf>,
    },
    /// Score one pair of video directories.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Overrides the fusion rule stored in the model.
        #[arg(long)]
        fusion: Option<Fusion>,
    },
    /// Supervised stack versus plain autoencoder on IDX digit files.
    Mnist {
        /// Directory holding train-/t10k- images and labels in IDX format.
        #[arg(long, default_value = "data/mnist")]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference check of the layer gradient on random instances.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Sum,
    Max,
    Both,
}

impl FusionArg {
    fn rules(self) -> Vec<Fusion> {
        match self {
            FusionArg::Sum => vec![Fusion::Sum],
            FusionArg::Max => vec![Fusion::Max],
            FusionArg::Both => vec![Fusion::Sum, Fusion::Max],
        }
    }
}

enum Failure {
    Usage(String),
    Library(smnae::Error),
    Numerical(String),
}

impl From<smnae::Error> for Failure {
    fn from(e: smnae::Error) -> Self {
        Failure::Library(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
}

fn gen_synthetic(
    out: &Path,
    config: Option<&Path>,
    families: Option<usize>,
    seed: Option<u64>,
    test_fraction: f64,
    split_seed: Option<u64>,
) -> CliResult {
    let mut cfg: SyntheticConfig = match config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(f) = families {
        cfg.families = f;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = gen_synthetic_kin(&cfg, out)?;
    let (train, test) = partition_subject_disjoint(&data.pairs, test_fraction, Seed(split_seed.unwrap_or(cfg.seed)))?;
    write_pair_list(&out.join("train.csv"), &train)?;
    write_pair_list(&out.join("test.csv"), &test)?;
    print_json(&json!({
        "out": out,
        "videos": data.videos.len(),
        "pairs": data.pairs.len(),
        "train_pairs": train.len(),
        "test_pairs": test.len(),
    }));
    Ok(())
}

fn split(pairs: &Path, test_fraction: f64, seed: u64, train_out: &Path, test_out: &Path) -> CliResult {
    let records = load_pair_list(pairs)?;
    let (train, test) = partition_subject_disjoint(&records, test_fraction, Seed(seed))?;
    write_pair_list(train_out, &train)?;
    write_pair_list(test_out, &test)?;
    print_json(&json!({ "train_pairs": train.len(), "test_pairs": test.len() }));
    Ok(())
}

fn train(config: Option<&Path>, data: &Path, pairs: &Path, model_out: &Path, trace_out: Option<&Path>) -> CliResult {
    let cfg: PipelineConfig = match config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    let records = load_pair_list(pairs)?;
    let labeled: Vec<_> = load_pairs(data, &records)?.into_iter().map(|p| (p.a, p.b, p.kin)).collect();
    eprintln!("training on {} pairs", labeled.len());
    let fit = train_pipeline(&labeled, &cfg)?;
    fit.model.save(model_out)?;
    if let Some(path) = trace_out {
        write_json(path, &fit.stage_traces)?;
    }
    let finals: Vec<Vec<Option<f64>>> = fit
        .stage_traces
        .iter()
        .map(|stage| stage.iter().map(|t| t.final_total()).collect())
        .collect();
    print_json(&json!({
        "model": model_out,
        "pairs": labeled.len(),
        "final_losses": finals,
        "svm_converged": fit.svm_converged,
        "svm_train_accuracy": fit.svm_train_accuracy,
        "support_vectors": fit.model.classifier.alphas.len(),
    }));
    Ok(())
}

fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{tag}"),
    };
    path.with_file_name(name)
}

fn eval(model: &Path, data: &Path, pairs: &Path, report: &Path, fusion: FusionArg, roc: Option<&Path>) -> CliResult {
    let model = PipelineModel::load(model)?;
    let records: Vec<PairRecord> = load_pair_list(pairs)?;
    let videos: Vec<_> = load_pairs(data, &records)?.into_iter().map(|p| (p.a, p.b)).collect();
    let rules = fusion.rules();
    let result = evaluate_pairs(&model, &records, &videos, &rules)?;
    write_json(report, &result)?;
    if let Some(path) = roc {
        for r in &result.reports {
            let target = if rules.len() > 1 { suffixed(path, &r.fusion.to_string()) } else { path.to_path_buf() };
            let curve = r.result.as_ref().map(|e| roc_csv(&e.roc)).unwrap_or_default();
            fs::write(&target, curve).map_err(|e| Failure::Usage(format!("{}: {e}", target.display())))?;
        }
    }
    let summary: Vec<_> = result
        .reports
        .iter()
        .map(|r| json!({ "fusion": r.fusion, "eer": r.eer, "accuracy_pct": r.accuracy_pct }))
        .collect();
    print_json(&summary);
    Ok(())
}

fn score(model: &Path, a: &Path, b: &Path, fusion: Option<Fusion>) -> CliResult {
    let model = PipelineModel::load(model)?;
    let (va, vb) = (load_video_dir(a)?, load_video_dir(b)?);
    let report = score_with_fusion(&model, &va, &vb, fusion.unwrap_or(model.fusion))?;
    print_json(&report);
    Ok(())
}

fn mnist(
    dir: &Path,
    config: Option<&Path>,
    n_train: Option<usize>,
    n_test: Option<usize>,
    epochs: Option<usize>,
    report: Option<&Path>,
) -> CliResult {
    let mut cfg: MnistConfig = match config {
        Some(p) => read_json(p)?,
        None => MnistConfig::default(),
    };
    cfg.n_train = n_train.unwrap_or(cfg.n_train);
    cfg.n_test = n_test.unwrap_or(cfg.n_test);
    cfg.max_epochs = epochs.unwrap_or(cfg.max_epochs);
    let (xtr, ytr) = load_mnist_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
    let (xte, yte) = load_mnist_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
    let result = mnist_benchmark((&xtr, &ytr), (&xte, &yte), &cfg)?;
    if let Some(path) = report {
        write_json(path, &result)?;
    }
    print_json(&result);
    Ok(())
}

fn gradcheck(instances: usize, seed: u64, tolerance: f64) -> CliResult {
    let report = random_gradient_check(instances, Seed(seed))?;
    print_json(&json!({
        "instances": report.instances,
        "max_rel_error": report.max_rel_error,
        "tolerance": tolerance,
    }));
    if report.max_rel_error > tolerance {
        return Err(Failure::Numerical(format!(
            "max relative error {:e} exceeds {tolerance:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenSynthetic { out, config, families, seed, test_fraction, split_seed } => {
            gen_synthetic(&out, config.as_deref(), families, seed, test_fraction, split_seed)
        }
        Command::Split { pairs, test_fraction, seed, train_out, test_out } => {
            split(&pairs, test_fraction, seed, &train_out, &test_out)
        }
        Command::Train { config, data, pairs, model_out, trace_out } => {
            train(config.as_deref(), &data, &pairs, &model_out, trace_out.as_deref())
        }
        Command::Eval { model, data, pairs, report, fusion, roc_csv } => {
            eval(&model, &data, &pairs, &report, fusion, roc_csv.as_deref())
        }
        Command::Score { model, a, b, fusion } => score(&model, &a, &b, fusion),
        Command::Mnist { data, config, n_train, n_test, epochs, report } => {
            mnist(&data, config.as_deref(), n_train, n_test, epochs, report.as_deref())
        }
        Command::Gradcheck { instances, seed, tolerance } => gradcheck(instances, seed, tolerance),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Library(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
