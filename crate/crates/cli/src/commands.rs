//! Subcommand implementations shared by the binary and the pipeline.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dance_core::cosearch::search::{alpha_csv, trace_csv};
use dance_core::cosearch::{
    finalize_search, retrain_accuracy, search, LossVariant, SearchResult, ToyTask, WarmupConfig,
};
use dance_core::dataset::{file_hash, load_csv, save_csv, Split};
use dance_core::evaluator::{accuracy_report, AccuracyReport, EvaluatorModel};
use dance_core::oracle::{generate_dataset, RecordKind};
use dance_core::workload::ArchDocument;
use dance_core::Error as CoreError;

use crate::config::Config;
use crate::manifest::{sidecar, RunManifest, MANIFEST_NAME};
use crate::report::{self, Method, RunInfo, FINAL_NAME, RUN_INFO_NAME};

/// Error that maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Refuses to overwrite an existing file unless `force`.
pub fn check_file_out(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

/// Refuses to reuse a non-empty directory unless `force`; creates it.
pub fn check_dir_out(dir: &Path, force: bool) -> Result<()> {
    let non_empty = dir.is_dir() && std::fs::read_dir(dir)?.next().is_some();
    if non_empty && !force {
        return Err(usage(format!("{} is not empty; pass --force to overwrite", dir.display())));
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Generates and writes the dataset; returns wall seconds.
pub fn gen_dataset_to(cfg: &Config, out: &Path) -> Result<f64> {
    if cfg.dataset.networks == 0 {
        return Err(usage("--networks must be at least 1"));
    }
    let start = Instant::now();
    let records = generate_dataset(&cfg.dataset, &cfg.arch_space, &cfg.hw_space, &cfg.cost_model)?;
    save_csv(out, &records, &cfg.arch_space, &cfg.hw_space)?;
    let secs = start.elapsed().as_secs_f64();
    let opt = records.iter().filter(|r| r.kind == RecordKind::Opt).count();
    println!(
        "wrote {} rows ({opt} opt, {} rand) for {} networks to {} in {secs:.2}s",
        records.len(),
        records.len() - opt,
        cfg.dataset.networks,
        out.display()
    );
    Ok(secs)
}

pub fn gen_dataset(cfg: &Config, out: &Path, force: bool) -> Result<()> {
    if cfg.dataset.networks == 0 {
        return Err(usage("--networks must be at least 1"));
    }
    check_file_out(out, force)?;
    let secs = gen_dataset_to(cfg, out)?;
    let mut m = RunManifest::new("gen-dataset", cfg.to_value(), cfg.dataset.seed);
    m.output(out)?;
    m.phase_done("gen-dataset", secs);
    m.save(&sidecar(out))
}

/// Trains, reports and saves an evaluator; returns the model and wall seconds.
pub fn train_evaluator_to(cfg: &Config, dataset: &Path, out: &Path) -> Result<(EvaluatorModel, f64)> {
    let start = Instant::now();
    let records = load_csv(dataset, &cfg.arch_space, &cfg.hw_space)?;
    let mut model = EvaluatorModel::train(&records, &cfg.arch_space, &cfg.hw_space, &cfg.evaluator)?;
    model.metadata.dataset_hash = file_hash(dataset)?;
    model.metadata.dataset_cost_fn = Some(cfg.dataset.cost_fn);
    let split = model.metadata.split.clone().expect("training records the split");
    let report = accuracy_report(&model, &records, &split, cfg.evaluator.noise_seed)?;
    print_report(&report);
    model.metadata.report = Some(report);
    model.save(out)?;
    let secs = start.elapsed().as_secs_f64();
    println!("trained evaluator on {} rows in {secs:.1}s -> {}", records.len(), out.display());
    Ok((model, secs))
}

pub fn train_evaluator(cfg: &Config, dataset: &Path, out: &Path, force: bool) -> Result<()> {
    check_file_out(out, force)?;
    let (_, secs) = train_evaluator_to(cfg, dataset, out)?;
    let mut m = RunManifest::new("train-evaluator", cfg.to_value(), cfg.evaluator.hwgen.seed);
    m.input(dataset)?;
    m.output(out)?;
    m.phase_done("train-evaluator", secs);
    m.save(&sidecar(out))
}

fn print_report(r: &AccuracyReport) {
    print!("{}", r.to_csv());
}

pub fn eval_evaluator(model_path: &Path, dataset: &Path, report_out: &Path, force: bool) -> Result<()> {
    check_file_out(report_out, force)?;
    let start = Instant::now();
    let model = EvaluatorModel::load(model_path)?;
    let records = load_csv(dataset, &model.arch_space, &model.hw_space)?;
    let hash = file_hash(dataset)?;
    let split = match (&model.metadata.split, hash == model.metadata.dataset_hash) {
        (Some(split), true) => split.clone(),
        _ => Split::validation_only(&records),
    };
    let seed = model.metadata.train_config.as_ref().map_or(0, |c| c.noise_seed);
    let report = accuracy_report(&model, &records, &split, seed)?;
    write(report_out, report.to_csv())?;
    print_report(&report);
    let mut m = RunManifest::new("eval-evaluator", serde_json::json!({ "noise_seed": seed }), seed);
    m.input(model_path)?;
    m.input(dataset)?;
    m.output(report_out)?;
    m.phase_done("eval-evaluator", start.elapsed().as_secs_f64());
    m.save(&sidecar(report_out))
}

/// One search run's settings on top of the config's search section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub method: Method,
    pub variant: LossVariant,
    pub lambda2: f64,
    pub warmup: bool,
}

impl RunSpec {
    pub fn apply(&self, cfg: &Config) -> Config {
        let mut c = cfg.clone();
        let s = &mut c.search.config;
        s.variant = self.variant;
        s.lambda2 = self.lambda2;
        if !self.warmup {
            s.warmup = None;
        } else if s.warmup.is_none() {
            s.warmup = Some(WarmupConfig::default());
        }
        if let Some(w) = &mut s.warmup {
            w.lambda2_small = w.lambda2_small.min(self.lambda2);
        }
        c
    }
}

fn load_evaluator(path: &Path, cfg: &Config) -> Result<EvaluatorModel> {
    let model = EvaluatorModel::load(path)?;
    if model.arch_space.fingerprint() != cfg.arch_space.fingerprint() {
        bail!(
            "evaluator {} was trained on a different architecture space than the config",
            path.display()
        );
    }
    Ok(model)
}

/// Runs one search into `out` (arch.json, trace.csv, alpha.csv, search.json,
/// run.json and the manifest).
pub fn run_search(cfg: &Config, spec: &RunSpec, evaluator: Option<&Path>, out: &Path, force: bool) -> Result<SearchResult> {
    check_dir_out(out, force)?;
    let run_cfg = spec.apply(cfg);
    run_cfg.search.config.validate()?;
    let start = Instant::now();
    let model = match evaluator {
        Some(p) => Some(load_evaluator(p, &run_cfg)?),
        None if spec.method == Method::NoPenalty => None,
        None => return Err(usage("search needs --evaluator unless --no-penalty is given")),
    };
    let task = ToyTask::generate(&run_cfg.search.task)?;
    let search_model = if spec.method == Method::NoPenalty { None } else { model.as_ref() };
    let trace_path = out.join("trace.csv");
    let mut rows = Vec::new();
    let mut alphas = Vec::new();
    let result = search(&task, search_model, &run_cfg.search.config, run_cfg.arch_space.positions, |row, alpha| {
        rows.push(row.clone());
        alphas.push(alpha.clone());
        // Persist progress so a divergence leaves the trace behind.
        let _ = std::fs::write(&trace_path, trace_csv(&rows));
    });
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            write(&out.join("alpha.csv"), alpha_csv(&alphas))?;
            return Err(e).context(format!("search aborted after {} epochs; trace in {}", rows.len(), out.display()));
        }
    };
    let secs = start.elapsed().as_secs_f64();
    let doc = ArchDocument::new(&result.final_arch, &run_cfg.arch_space);
    write(&out.join("arch.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    write(&trace_path, trace_csv(&result.trace))?;
    write(&out.join("alpha.csv"), alpha_csv(&result.alpha_trace))?;
    write(&out.join("search.json"), serde_json::to_string(&result)? + "\n")?;
    let info = RunInfo {
        method: spec.method,
        variant: spec.variant.to_string(),
        lambda2: spec.lambda2,
        warmup: spec.warmup,
        seed: run_cfg.search.config.seed,
    };
    write(&out.join(RUN_INFO_NAME), serde_json::to_string_pretty(&info)? + "\n")?;

    let mut m = RunManifest::new("search", run_cfg.to_value(), run_cfg.search.config.seed);
    if let Some(p) = evaluator {
        m.input(p)?;
        m.notes.insert("evaluator".into(), p.display().to_string());
    }
    for name in ["arch.json", "trace.csv", "alpha.csv", "search.json", RUN_INFO_NAME] {
        m.output(&out.join(name))?;
    }
    m.phase_done("search", secs);
    m.save(&out.join(MANIFEST_NAME))?;
    println!(
        "search {} finished in {secs:.1}s: {} ({} Zero positions)",
        out.display(),
        result.final_arch.iter().map(|o| o.name()).collect::<Vec<_>>().join(" "),
        result.zero_positions()
    );
    Ok(result)
}

/// Outcome of finalizing a run directory.
#[derive(Debug)]
pub enum FinalizeOutcome {
    Done(Box<dance_core::cosearch::FinalReport>),
    /// Every position chose Zero; nothing to build.
    Collapsed(String),
}

pub fn finalize_run(run: &Path, evaluator: Option<&Path>, force: bool) -> Result<FinalizeOutcome> {
    let manifest_path = run.join(MANIFEST_NAME);
    let mut m = RunManifest::load(&manifest_path)?;
    let final_path = run.join(FINAL_NAME);
    if final_path.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", final_path.display())));
    }
    let cfg: Config = serde_json::from_value(m.config.clone()).context("run manifest holds an unreadable config")?;
    let start = Instant::now();
    let text = std::fs::read_to_string(run.join("search.json")).context("reading search.json")?;
    let result: SearchResult = serde_json::from_str(&text).context("parsing search.json")?;
    let eval_path = evaluator
        .map(Path::to_path_buf)
        .or_else(|| m.notes.get("evaluator").map(PathBuf::from));
    let model = match &eval_path {
        Some(p) => Some(load_evaluator(p, &cfg)?),
        None => None,
    };
    let mut report = match finalize_search(&result, &cfg.arch_space, &cfg.hw_space, &cfg.cost_model, model.as_ref()) {
        Ok(r) => r,
        Err(CoreError::AllZero(msg)) => {
            m.notes.insert("collapsed".into(), msg.clone());
            m.phase_done("finalize", start.elapsed().as_secs_f64());
            m.save(&manifest_path)?;
            return Ok(FinalizeOutcome::Collapsed(msg));
        }
        Err(e) => return Err(e.into()),
    };
    let task = ToyTask::generate(&cfg.search.task)?;
    report.accuracy = Some(retrain_accuracy(
        &task,
        &result.final_arch,
        &cfg.search.config.supernet,
        &cfg.search.retrain,
    )?);
    write(&final_path, serde_json::to_string_pretty(&report)? + "\n")?;
    m.output(&final_path)?;
    m.phase_done("finalize", start.elapsed().as_secs_f64());
    m.save(&manifest_path)?;
    println!(
        "finalized {}: {} EDAP {:.4e} accuracy {:.2}%{}",
        run.display(),
        report.config,
        report.edap,
        report.accuracy.unwrap_or(f64::NAN),
        match report.gap_within_bound {
            Some(false) => "  [surrogate gap above bound]",
            _ => "",
        }
    );
    Ok(FinalizeOutcome::Done(Box::new(report)))
}

/// Writes `report.csv` and `scatter.svg` into `out_dir`.
pub fn write_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<report::Collected> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let collected = report::collect(run_dirs);
    for (dir, why) in &collected.skipped {
        eprintln!("warning: skipping {}: {why}", dir.display());
    }
    write(&out_dir.join(REPORT_CSV), report::to_csv(&collected.rows))?;
    write(&out_dir.join(REPORT_SVG), report::to_svg(&collected.rows))?;
    println!(
        "report: {} runs, {} skipped -> {}",
        collected.rows.len(),
        collected.skipped.len(),
        out_dir.join(REPORT_CSV).display()
    );
    Ok(collected)
}

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "scatter.svg";

pub fn report(run_dirs: &[PathBuf], out_dir: &Path, force: bool) -> Result<()> {
    if run_dirs.is_empty() {
        return Err(usage("report needs at least one run directory"));
    }
    check_file_out(&out_dir.join(REPORT_CSV), force)?;
    check_file_out(&out_dir.join(REPORT_SVG), force)?;
    let start = Instant::now();
    write_report(run_dirs, out_dir)?;
    let mut m = RunManifest::new(
        "report",
        serde_json::json!({ "runs": run_dirs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() }),
        0,
    );
    for d in run_dirs {
        let f = d.join(FINAL_NAME);
        if f.exists() {
            m.input(&f)?;
        }
    }
    m.output(&out_dir.join(REPORT_CSV))?;
    m.output(&out_dir.join(REPORT_SVG))?;
    m.phase_done("report", start.elapsed().as_secs_f64());
    m.save(&sidecar(&out_dir.join(REPORT_CSV)))
}
