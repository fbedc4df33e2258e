//! `hybridlt` command-line entry point.
//!
//! Settings are resolved in three layers, later layers winning: built-in
//! benchmark defaults, then the `--config` file, then individual flags.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridlt::config::ExperimentConfig;
use hybridlt::data::write_csv;
use hybridlt::eval::{evaluate, run_matrix, summary_csv, write_run, MatrixConfig};
use hybridlt::gradsuite::run_suite;
use hybridlt::{Error, Trainer};

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const CONFIG_FILE: &str = "config.txt";
const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "hybridlt", version, about = "Hybrid contrastive / cross-entropy training for long-tailed data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its run report.
    Train(TrainArgs),
    /// Evaluate a trained run directory on its test split.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Write the long-tailed train split (and test split) as CSV.
    GenData(CommonArgs),
    /// Run every variant × seed cell of a matrix file.
    Matrix(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["ce", "ce-ce", "sc", "psc", "mpsc"])]
    loss: Option<String>,
    /// Imbalance ratio between the largest and smallest class.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    /// Epoch count. LR milestones are rescaled proportionally.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// parabolic, linear or constant:X
    #[arg(long)]
    alpha_schedule: Option<String>,
    /// Contrastive-branch sampler.
    #[arg(long, value_parser = ["random", "balanced"])]
    sampler: Option<String>,
    #[arg(long)]
    prototypes_per_class: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Resume from the checkpoint in `--out` if one exists.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory written by `train --out`.
    #[arg(long)]
    run: PathBuf,
    /// Where to write eval.json (defaults to printing it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Range(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("i/o error on {}: {e}", path.display()))
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut kv = Vec::new();
        let mut put = |k, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k, v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("loss", self.loss.clone());
        put("beta", self.beta.map(|v| v.to_string()));
        put("classes", self.classes.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("alpha_schedule", self.alpha_schedule.clone());
        put("sampler", self.sampler.clone());
        put("prototypes_per_class", self.prototypes_per_class.map(|v| v.to_string()));
        kv
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        for (k, v) in self.overrides() {
            cfg.set_checked(k, &v)?;
        }
        if let Some(epochs) = self.epochs {
            let old = cfg.train.epochs.max(1);
            let mut milestones: Vec<usize> = cfg
                .train
                .lr_milestones
                .iter()
                .map(|m| m * epochs / old)
                .filter(|&m| m > 0 && m < epochs)
                .collect();
            milestones.dedup();
            cfg.train.epochs = epochs;
            cfg.train.lr_milestones = milestones;
        }
        Ok(())
    }

    fn experiment(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::parse("")?,
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = args.common.experiment()?;
    let (train_set, test_set, train_cfg) = cfg.prepare()?;
    let out = args.common.out.as_deref();
    let trainer = match out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join(CONFIG_FILE);
            fs::write(&path, cfg.to_kv()).map_err(|e| io_err(&path, e))?;
            let ckpt = dir.join(CHECKPOINT_FILE);
            if args.resume && ckpt.is_file() {
                Trainer::resume(&ckpt, &train_set, test_set.as_ref(), train_cfg)?
            } else {
                Trainer::new(&train_set, test_set.as_ref(), train_cfg)?
            }
            .checkpoint_to(ckpt)
        }
        None => Trainer::new(&train_set, test_set.as_ref(), train_cfg)?,
    };
    let (_, report) = trainer.run()?;
    match out {
        Some(dir) => {
            write_run(dir, &report)?;
            let (top1, head, tail) = report
                .final_eval
                .as_ref()
                .map_or((f64::NAN, f64::NAN, f64::NAN), |e| (e.top1, e.head_acc, e.tail_acc));
            println!(
                "loss={} seed={} epochs={} top1={top1:.4} head={head:.4} tail={tail:.4} out={}",
                report.loss,
                report.seed,
                report.epochs.len(),
                dir.display()
            );
        }
        None => println!("{}", report.to_json()?),
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let path = args.run.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let (train_set, test_set, train_cfg) = cfg.prepare()?;
    let test_set = test_set
        .ok_or_else(|| Failure::Usage("run has no test split to evaluate on".into()))?;
    let trainer =
        Trainer::resume(&args.run.join(CHECKPOINT_FILE), &train_set, Some(&test_set), train_cfg)?;
    let report = evaluate(trainer.model(), &test_set, &train_set.class_counts())?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join("eval.json");
            fs::write(&path, json).map_err(|e| io_err(&path, e))?;
            println!(
                "top1={:.4} head={:.4} tail={:.4} compactness={:.4} separability={:.4}",
                report.top1,
                report.head_acc,
                report.tail_acc,
                report.intra_class_compactness,
                report.inter_class_separability
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let results = run_suite(args.instances, args.seed)?;
    let mut worst: f64 = 0.0;
    for r in &results {
        println!("{:<24} instances={} max_rel_err={:.3e}", r.name, r.instances, r.max_relative_error);
        worst = worst.max(r.max_relative_error);
    }
    if worst > GRAD_TOLERANCE {
        return Err(Failure::Runtime(format!(
            "max relative error {worst:.3e} exceeds {GRAD_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn cmd_gen_data(args: &CommonArgs) -> CliResult<()> {
    let cfg = args.experiment()?;
    let (train_set, test_set, _) = cfg.prepare()?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    create_dir(&dir)?;
    let write = |name: &str, ds: &hybridlt::data::Dataset| -> CliResult<()> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        write_csv(ds, &mut w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        let counts: Vec<String> = ds.class_counts().iter().map(|c| c.to_string()).collect();
        println!("{} rows={} counts={}", path.display(), ds.len(), counts.join(","));
        Ok(())
    };
    write("train.csv", &train_set)?;
    if let Some(test) = &test_set {
        write("test.csv", test)?;
    }
    Ok(())
}

fn cmd_matrix(args: &CommonArgs) -> CliResult<()> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("matrix needs --config".into()))?;
    let mut matrix = MatrixConfig::load(path)?;
    args.apply(&mut matrix.base)?;
    if let Some(seed) = args.seed {
        matrix.seeds = vec![seed];
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("matrix-out"));
    let (cells, summary) = run_matrix(&matrix, Some(&out), |cell| {
        let status = match &cell.result {
            Ok(r) => format!("top1={:.4}", r.final_test_top1().unwrap_or(f64::NAN)),
            Err(e) => format!("failed: {e}"),
        };
        eprintln!("{} seed={} {status}", cell.variant, cell.seed);
    })?;
    print!("{}", summary_csv(&summary));
    let failed = cells.iter().filter(|c| c.result.is_err()).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} cells failed", cells.len())));
    }
    Ok(())
}

/// Prints a failure as one JSON line on stderr.
fn report_failure(kind: &str, message: &str) {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            report_failure("usage", first);
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Matrix(a) => cmd_matrix(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            report_failure("usage", &msg);
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            report_failure("runtime", &msg);
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common(args: &[&str]) -> CommonArgs {
        let mut argv = vec!["hybridlt", "gen-data"];
        argv.extend_from_slice(args);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::GenData(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_win_over_file_values() {
        let mut cfg = ExperimentConfig::parse("tau = 0.2\nbeta = 10\n").unwrap();
        common(&["--tau", "0.7", "--sampler", "balanced"]).apply(&mut cfg).unwrap();
        assert_eq!(cfg.train.tau, 0.7);
        assert_eq!(cfg.data.beta, 10.0);
        assert_eq!(cfg.train.sc_sampler.to_string(), "balanced");
    }

    #[test]
    fn epoch_flag_rescales_milestones() {
        let mut cfg = ExperimentConfig::parse("epochs = 60\nlr_milestones = 36, 48\n").unwrap();
        common(&["--epochs", "10"]).apply(&mut cfg).unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.lr_milestones.clone()), (10, vec![6, 8]));
        common(&["--epochs", "1"]).apply(&mut cfg).unwrap();
        assert!(cfg.train.lr_milestones.is_empty());
        cfg.train.validate().unwrap();
    }
}
