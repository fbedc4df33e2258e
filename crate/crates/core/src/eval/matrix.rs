use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::training::{train, RunReport};

/// One named set of overrides on top of the base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub overrides: Vec<(String, String)>,
}

/// Variants × seeds over a shared base configuration.
///
/// The file format is the flat run config plus:
///
/// ```text
/// seeds = 1, 2, 3
/// variant.ce-ce = loss = ce-ce
/// variant.two-stage = loss = sc; two_stage = true
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    pub base: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

impl MatrixConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seeds = None;
        let mut variants = Vec::new();
        let base = ExperimentConfig::parse_with(text, |k, v| {
            if k == "seeds" {
                let list: std::result::Result<Vec<u64>, _> =
                    v.split(',').map(|s| s.trim().parse()).collect();
                seeds = Some(list.map_err(|e| Error::config(format!("`seeds`: {e}")))?);
                return Ok(true);
            }
            let Some(name) = k.strip_prefix("variant.") else {
                return Ok(false);
            };
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Error::config(format!("invalid variant name `{name}`")));
            }
            let mut overrides = Vec::new();
            for part in v.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                let (key, value) = part.split_once('=').ok_or_else(|| {
                    Error::config(format!("variant `{name}`: expected key=value, got `{part}`"))
                })?;
                overrides.push((key.trim().to_string(), value.trim().to_string()));
            }
            variants.push(Variant {
                name: name.to_string(),
                overrides,
            });
            Ok(true)
        })?;
        let seeds = seeds.unwrap_or_else(|| vec![base.train.seed]);
        if seeds.is_empty() {
            return Err(Error::config("`seeds` is empty"));
        }
        if variants.is_empty() {
            return Err(Error::config("no `variant.NAME` entries"));
        }
        // Reject unknown override keys up front rather than per cell.
        for v in &variants {
            let mut probe = base.clone();
            for (k, val) in &v.overrides {
                probe
                    .set_checked(k, val)
                    .map_err(|e| Error::config(format!("variant `{}`: {e}", v.name)))?;
            }
        }
        Ok(Self {
            base,
            seeds,
            variants,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Configuration of one cell.
    pub fn cell(&self, variant: &Variant, seed: u64) -> Result<ExperimentConfig> {
        let mut cfg = self.base.clone();
        for (k, v) in &variant.overrides {
            cfg.set_checked(k, v)?;
        }
        cfg.train.seed = seed;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub variant: String,
    pub seed: u64,
    pub result: std::result::Result<RunReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub failed: usize,
    pub top1_mean: f64,
    pub top1_std: f64,
    pub head_acc_mean: f64,
    pub tail_acc_mean: f64,
    pub compactness_mean: f64,
    pub separability_mean: f64,
    pub errors: Vec<String>,
}

/// Header of `summary.csv`. `top1_std` is the sample standard deviation over
/// successful seeds (0 for a single run).
pub const SUMMARY_CSV_HEADER: &str = "variant,runs,failed,top1_mean,top1_std,head_acc_mean,tail_acc_mean,compactness_mean,separability_mean,errors";

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn summarize(variant: &str, cells: &[&CellOutcome]) -> VariantSummary {
    let evals: Vec<_> = cells
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .filter_map(|r| r.final_eval.as_ref())
        .collect();
    let pick = |f: fn(&crate::eval::EvalReport) -> f64| evals.iter().map(|e| f(e)).collect::<Vec<_>>();
    let top1 = pick(|e| e.top1);
    let errors = cells
        .iter()
        .filter_map(|c| c.result.as_ref().err().map(|e| format!("seed {}: {e}", c.seed)))
        .collect::<Vec<_>>();
    VariantSummary {
        variant: variant.to_string(),
        runs: cells.len(),
        failed: cells.len() - evals.len(),
        top1_mean: mean(&top1),
        top1_std: sample_std(&top1),
        head_acc_mean: mean(&pick(|e| e.head_acc)),
        tail_acc_mean: mean(&pick(|e| e.tail_acc)),
        compactness_mean: mean(&pick(|e| e.intra_class_compactness)),
        separability_mean: mean(&pick(|e| e.inter_class_separability)),
        errors,
    }
}

pub fn summary_csv(rows: &[VariantSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_CSV_HEADER}");
    for r in rows {
        let errors = r.errors.join(" | ").replace([',', '\n', '"'], " ");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.runs,
            r.failed,
            r.top1_mean,
            r.top1_std,
            r.head_acc_mean,
            r.tail_acc_mean,
            r.compactness_mean,
            r.separability_mean,
            errors
        );
    }
    s
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `epochs.csv`, `accuracy.dat` (epoch,test top-1) and
/// `alpha.dat` (epoch,alpha) into `dir`.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.save_json(&dir.join("report.json"))?;
    report.save_csv(&dir.join("epochs.csv"))?;
    let mut acc = String::new();
    let mut alpha = String::new();
    for r in &report.epochs {
        let _ = writeln!(acc, "{},{}", r.epoch, r.test_top1.unwrap_or(r.train_top1));
        let _ = writeln!(alpha, "{},{}", r.epoch, r.alpha);
    }
    write_file(&dir.join("accuracy.dat"), acc)?;
    write_file(&dir.join("alpha.dat"), alpha)
}

pub fn cell_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(variant).join(format!("seed{seed}"))
}

fn run_cell(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (train_set, test_set, train_cfg) = cfg.prepare()?;
    let (_, report) = train(&train_set, test_set.as_ref(), &train_cfg)?;
    Ok(report)
}

/// Runs every cell in order. A failing cell is recorded in the summary and
/// the remaining cells still run. With `out` set, per-run files go to
/// `out/<variant>/seed<N>/` and the aggregate to `out/summary.csv`.
pub fn run_matrix(
    matrix: &MatrixConfig,
    out: Option<&Path>,
    mut progress: impl FnMut(&CellOutcome),
) -> Result<(Vec<CellOutcome>, Vec<VariantSummary>)> {
    let mut cells = Vec::new();
    for variant in &matrix.variants {
        for &seed in &matrix.seeds {
            let result = matrix
                .cell(variant, seed)
                .and_then(|cfg| run_cell(&cfg))
                .and_then(|report| {
                    if let Some(out) = out {
                        write_run(&cell_dir(out, &variant.name, seed), &report)?;
                    }
                    Ok(report)
                });
            let outcome = CellOutcome {
                variant: variant.name.clone(),
                seed,
                result: result.map_err(|e| e.to_string()),
            };
            if let (Some(out), Err(e)) = (out, &outcome.result) {
                let dir = cell_dir(out, &variant.name, seed);
                fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
                write_file(&dir.join("error.txt"), format!("{e}\n"))?;
            }
            progress(&outcome);
            cells.push(outcome);
        }
    }
    let summaries: Vec<VariantSummary> = matrix
        .variants
        .iter()
        .map(|v| {
            let mine: Vec<&CellOutcome> = cells.iter().filter(|c| c.variant == v.name).collect();
            summarize(&v.name, &mine)
        })
        .collect();
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_file(&out.join("summary.csv"), summary_csv(&summaries))?;
    }
    Ok((cells, summaries))
}

/// Parses `config_file` and runs it into `out`.
pub fn run_experiment_matrix(
    config_file: &Path,
    out: &Path,
) -> Result<(Vec<CellOutcome>, Vec<VariantSummary>)> {
    let matrix = MatrixConfig::load(config_file)?;
    run_matrix(&matrix, Some(out), |_| {})
}

/// Reads `(variant, top1_mean)` pairs back from a `summary.csv`.
pub fn read_summary_means(text: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_CSV_HEADER) {
        return Err(Error::config("summary.csv has an unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let mean = cols
                .get(3)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::config(format!("bad summary row `{l}`")))?;
            Ok((cols[0].to_string(), mean))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_variants_and_seeds() {
        let text = "epochs = 2\nseeds = 1, 2,3\nvariant.a = loss = ce-ce\nvariant.b = loss = sc; alpha_schedule = constant:0.5\n";
        let m = MatrixConfig::parse(text).unwrap();
        assert_eq!(m.seeds, vec![1, 2, 3]);
        assert_eq!(m.variants.len(), 2);
        assert_eq!(m.variants[1].overrides.len(), 2);
        let cell = m.cell(&m.variants[1], 2).unwrap();
        assert_eq!(cell.train.seed, 2);
        assert_eq!(cell.train.epochs, 2);
    }

    #[test]
    fn bad_variants_are_rejected() {
        assert!(MatrixConfig::parse("seeds = 1\n").is_err());
        assert!(MatrixConfig::parse("variant.a = nonsense = 1\n").is_err());
        assert!(MatrixConfig::parse("variant.../x = loss = sc\n").is_err());
        assert!(MatrixConfig::parse("seeds = a\nvariant.a = loss = sc\n").is_err());
    }

    #[test]
    fn statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(sample_std(&[2.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
