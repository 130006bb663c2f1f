//! Variant x seed sweeps with per-variant aggregation.
//!
//! Plan files are TOML:
//!
//! ```toml
//! base = "base.toml"        # or an inline [base] table
//! seeds = [0, 1, 2]
//! output = "sweep-out"
//!
//! [[variant]]
//! id = "small"
//! c_max = 10000             # any other key overrides the base config
//! ```
//!
//! Relative paths are resolved against the plan file's directory. Each
//! cell writes a full training run to `<output>/<variant>/seed-<seed>/`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    dataset_for, io_err, load_config, read_text, train, write_text, HarnessError, Result, TrainSummary,
    CONFIG_TOML, INTERVALS_CSV, SUMMARY_JSON,
};
use crate::learner::{read_csv, IntervalRow};
use crate::learner::RunConfig;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const FAILURES_CSV: &str = "failures.csv";

#[derive(Clone, Debug)]
pub struct Variant {
    pub id: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// SHA-256 of the plan text.
    pub hash: String,
}

fn usage(msg: impl Into<String>) -> HarnessError {
    HarnessError::Usage(msg.into())
}

fn resolve(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    if path.is_relative() {
        base.join(path).to_string_lossy().into_owned()
    } else {
        p.to_string()
    }
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path.parent().unwrap_or(Path::new("")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| usage(format!("plan: {e}")))?;
        let base_cfg = match table.remove("base") {
            None => RunConfig::default(),
            Some(toml::Value::String(p)) => load_config(Path::new(&resolve(base_dir, &p)))?,
            Some(toml::Value::Table(t)) => {
                let mut cfg = RunConfig::from_toml(&toml::to_string(&t).unwrap())?;
                cfg.dataset = cfg.dataset.map(|d| resolve(base_dir, &d));
                cfg
            }
            Some(_) => return Err(usage("plan: `base` must be a path or a table")),
        };
        let seeds: Vec<u64> = match table.remove("seeds") {
            Some(v) => v.try_into().map_err(|e| usage(format!("plan: seeds: {e}")))?,
            None => return Err(usage("plan: `seeds` is required")),
        };
        let output = match table.remove("output") {
            Some(toml::Value::String(p)) => PathBuf::from(resolve(base_dir, &p)),
            Some(_) => return Err(usage("plan: `output` must be a path")),
            None => return Err(usage("plan: `output` is required")),
        };
        let raw_variants = match table.remove("variant") {
            Some(toml::Value::Array(a)) => a,
            Some(_) => return Err(usage("plan: `variant` must be an array of tables")),
            None => vec![toml::Value::Table(toml::Table::from_iter([(
                "id".to_string(),
                toml::Value::String("base".into()),
            )]))],
        };
        if let Some(k) = table.keys().next() {
            return Err(usage(format!("plan: unknown key `{k}`")));
        }
        if seeds.is_empty() {
            return Err(usage("plan: at least one seed is required"));
        }
        let base_table: toml::Table = base_cfg.to_toml().parse().expect("config serializes to a table");
        let mut seen = HashSet::new();
        let mut variants = Vec::with_capacity(raw_variants.len());
        for v in raw_variants {
            let toml::Value::Table(mut t) = v else {
                return Err(usage("plan: each variant must be a table"));
            };
            let id = match t.remove("id") {
                Some(toml::Value::String(id)) if valid_id(&id) => id,
                _ => return Err(usage("plan: each variant needs an `id` of letters, digits, `-` or `_`")),
            };
            if !seen.insert(id.clone()) {
                return Err(usage(format!("plan: duplicate variant id `{id}`")));
            }
            if let Some(toml::Value::String(d)) = t.get_mut("dataset") {
                *d = resolve(base_dir, d);
            }
            let mut merged = base_table.clone();
            merged.extend(t);
            let config = RunConfig::from_toml(&toml::to_string(&merged).unwrap())
                .map_err(|e| usage(format!("plan: variant `{id}`: {e}")))?;
            variants.push(Variant { id, config });
        }
        Ok(ExperimentPlan {
            variants,
            seeds,
            output,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn cell_dir(&self, variant: &str, seed: u64) -> PathBuf {
        self.output.join(variant).join(format!("seed-{seed}"))
    }

    fn cell_config(&self, v: &Variant, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            ..v.config.clone()
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// How sweep cells are executed.
#[derive(Clone, Debug)]
pub enum Executor {
    /// Run cells one after another inside this process.
    InProcess,
    /// Run each cell as `<exe> train --config <cell>/config.toml --out <cell>`,
    /// at most `jobs` at a time.
    Subprocess { exe: PathBuf, jobs: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellFailure {
    pub variant: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub variant_hash: String,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub mean_final_return: f64,
    pub std_final_return: f64,
    pub mean_final_normalized: f64,
    pub std_final_normalized: f64,
    pub converged: usize,
    pub mean_convergence_step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiPoint {
    pub step: u64,
    pub mean_phi: f64,
    pub std_phi: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub variants: Vec<VariantSummary>,
    pub phi_curves: Vec<(String, Vec<PhiPoint>)>,
    pub failures: Vec<CellFailure>,
}

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn population_mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate finished cells of one variant.
pub fn summarize_variant(
    id: &str,
    variant_hash: &str,
    cells: &[(TrainSummary, Vec<IntervalRow>)],
    failed: usize,
) -> (VariantSummary, Vec<PhiPoint>) {
    let returns: Vec<f64> = cells.iter().map(|c| c.0.final_return as f64).collect();
    let normalized: Vec<f64> = cells.iter().map(|c| c.0.final_normalized as f64).collect();
    let conv: Vec<f64> = cells.iter().filter_map(|c| c.0.convergence_step.map(|s| s as f64)).collect();
    let (mean_final_return, std_final_return) = population_mean_std(&returns);
    let (mean_final_normalized, std_final_normalized) = population_mean_std(&normalized);
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (_, rows) in cells {
        for r in rows {
            by_step.entry(r.step).or_default().push(r.mean_phi as f64);
        }
    }
    let curve = by_step
        .into_iter()
        .map(|(step, xs)| {
            let (mean_phi, std_phi) = population_mean_std(&xs);
            PhiPoint {
                step,
                mean_phi,
                std_phi,
                seeds: xs.len(),
            }
        })
        .collect();
    let summary = VariantSummary {
        variant: id.to_string(),
        variant_hash: variant_hash.to_string(),
        seeds_ok: cells.len(),
        seeds_failed: failed,
        mean_final_return,
        std_final_return,
        mean_final_normalized,
        std_final_normalized,
        converged: conv.len(),
        mean_convergence_step: (!conv.is_empty()).then(|| population_mean_std(&conv).0),
    };
    (summary, curve)
}

fn run_cell_in_process(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let dataset = dataset_for(cfg)?;
    train(cfg, dataset.as_ref(), dir).map(|_| ())
}

fn spawn_cell(exe: &Path, dir: &Path) -> std::io::Result<Child> {
    Command::new(exe)
        .arg("train")
        .arg("--config")
        .arg(dir.join(CONFIG_TOML))
        .arg("--out")
        .arg(dir)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
}

fn finish_child(child: Child) -> std::result::Result<(), String> {
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        let err = String::from_utf8_lossy(&out.stderr);
        Err(format!("{}: {}", out.status, err.trim()))
    }
}

fn read_cell(dir: &Path) -> Result<(TrainSummary, Vec<IntervalRow>)> {
    let summary: TrainSummary = serde_json::from_str(&read_text(&dir.join(SUMMARY_JSON))?)?;
    let rows = read_csv(&read_text(&dir.join(INTERVALS_CSV))?)?;
    Ok((summary, rows))
}

/// Run every variant x seed cell, then aggregate and write the report.
/// Failed cells are recorded and the sweep carries on.
pub fn run_sweep(plan: &ExperimentPlan, executor: &Executor) -> Result<SweepReport> {
    let mut cells = Vec::new();
    for v in &plan.variants {
        for &seed in &plan.seeds {
            let dir = plan.cell_dir(&v.id, seed);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let cfg = plan.cell_config(v, seed);
            write_text(&dir.join(CONFIG_TOML), &cfg.to_toml())?;
            cells.push((v.id.clone(), seed, cfg, dir));
        }
    }

    let mut errors: BTreeMap<(String, u64), String> = BTreeMap::new();
    match executor {
        Executor::InProcess => {
            for (id, seed, cfg, dir) in &cells {
                if let Err(e) = run_cell_in_process(cfg, dir) {
                    errors.insert((id.clone(), *seed), e.to_string());
                }
            }
        }
        Executor::Subprocess { exe, jobs } => {
            let mut running: Vec<(String, u64, Child)> = Vec::new();
            let mut pending = cells.iter();
            loop {
                while running.len() < (*jobs).max(1) {
                    let Some((id, seed, _, dir)) = pending.next() else { break };
                    match spawn_cell(exe, dir) {
                        Ok(child) => running.push((id.clone(), *seed, child)),
                        Err(e) => {
                            errors.insert((id.clone(), *seed), format!("spawn failed: {e}"));
                        }
                    }
                }
                if running.is_empty() {
                    break;
                }
                let (id, seed, child) = running.remove(0);
                if let Err(e) = finish_child(child) {
                    errors.insert((id, seed), e);
                }
            }
        }
    }

    let mut report = SweepReport::default();
    for v in &plan.variants {
        let mut ok = Vec::new();
        let mut failed = 0;
        for &seed in &plan.seeds {
            let key = (v.id.clone(), seed);
            let outcome = match errors.remove(&key) {
                Some(e) => Err(e),
                None => read_cell(&plan.cell_dir(&v.id, seed)).map_err(|e| e.to_string()),
            };
            match outcome {
                Ok(cell) => ok.push(cell),
                Err(error) => {
                    failed += 1;
                    report.failures.push(CellFailure {
                        variant: v.id.clone(),
                        seed,
                        error,
                    });
                }
            }
        }
        let variant_hash = plan.cell_config(v, 0).hash();
        let (summary, curve) = summarize_variant(&v.id, &variant_hash, &ok, failed);
        report.variants.push(summary);
        report.phi_curves.push((v.id.clone(), curve));
    }
    write_report(plan, &report)?;
    Ok(report)
}

fn seeds_label(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn csv_text<T: Serialize>(header: &str, rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.flush().map_err(csv::Error::from)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).unwrap();
    Ok(format!("{header}{body}"))
}

/// `summary.csv`, `failures.csv` and one `phi_<variant>.csv` per variant.
pub fn write_report(plan: &ExperimentPlan, report: &SweepReport) -> Result<()> {
    let seeds = seeds_label(&plan.seeds);
    let header = format!(
        "# plan_hash={} seeds={}\n# std columns are population standard deviations over successful seeds\n",
        plan.hash, seeds
    );
    write_text(&plan.output.join(SUMMARY_CSV), &csv_text(&header, &report.variants)?)?;
    let fail_header = format!("# plan_hash={} seeds={}\nvariant,seed,error\n", plan.hash, seeds);
    let mut fail = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for f in &report.failures {
        fail.serialize(f)?;
    }
    let body = String::from_utf8(fail.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).unwrap();
    write_text(&plan.output.join(FAILURES_CSV), &format!("{fail_header}{body}"))?;
    for ((id, curve), v) in report.phi_curves.iter().zip(&report.variants) {
        let header = format!(
            "# plan_hash={} variant={} variant_hash={} seeds={}\n# std_phi is the population standard deviation over seeds\n",
            plan.hash, id, v.variant_hash, seeds
        );
        write_text(&plan.output.join(format!("phi_{id}.csv")), &csv_text(&header, curve)?)?;
    }
    Ok(())
}
