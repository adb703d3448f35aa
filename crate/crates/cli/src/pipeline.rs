//! End-to-end run: dataset, evaluator, λ₂ sweep plus baselines, finalization
//! and report, resumable phase by phase.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use dance_core::cosearch::LossVariant;

use crate::commands::{
    check_dir_out, finalize_run, gen_dataset_to, run_search, train_evaluator_to, usage, write_report, FinalizeOutcome,
    RunSpec, REPORT_CSV, REPORT_SVG,
};
use crate::config::Config;
use crate::manifest::{RunManifest, MANIFEST_NAME};
use crate::report::Method;

pub const DATASET: &str = "dataset.csv";
pub const EVALUATOR: &str = "evaluator.json";
pub const EVALUATOR_REPORT: &str = "evaluator_report.csv";

/// Named runs of the sweep, in execution order.
pub fn run_specs(cfg: &Config) -> Vec<(String, RunSpec)> {
    let mut runs = vec![(
        "no-penalty".to_string(),
        RunSpec {
            method: Method::NoPenalty,
            variant: LossVariant::Dance,
            lambda2: 0.0,
            warmup: true,
        },
    )];
    for &l in &cfg.search.lambda2_grid {
        runs.push((
            format!("dance-l2-{l:e}"),
            RunSpec {
                method: Method::Dance,
                variant: LossVariant::Dance,
                lambda2: l,
                warmup: true,
            },
        ));
    }
    runs.push((
        "edd-original".into(),
        RunSpec {
            method: Method::Edd,
            variant: LossVariant::EddOriginal,
            lambda2: cfg.search.edd_lambda2,
            warmup: false,
        },
    ));
    if let Some(&l) = cfg.search.lambda2_grid.first() {
        runs.push((
            "edd-fixed".into(),
            RunSpec {
                method: Method::Edd,
                variant: LossVariant::EddFixed,
                lambda2: l,
                warmup: true,
            },
        ));
    }
    runs
}

struct Phases {
    manifest: RunManifest,
    path: PathBuf,
    resume: bool,
}

impl Phases {
    fn skip(&self, phase: &str) -> bool {
        let done = self.resume && self.manifest.is_done(phase);
        if done {
            eprintln!("resume: skipping completed phase {phase}");
        }
        done
    }

    fn run(&mut self, phase: &str, f: impl FnOnce(&mut RunManifest) -> Result<()>) -> Result<()> {
        if self.skip(phase) {
            return Ok(());
        }
        let start = Instant::now();
        let res = f(&mut self.manifest);
        match res {
            Ok(()) => {
                self.manifest.phase_done(phase, start.elapsed().as_secs_f64());
                self.manifest.save(&self.path)
            }
            Err(e) => {
                self.manifest.save(&self.path)?;
                Err(e.context(format!(
                    "phase {phase} failed; completed phases: [{}]",
                    self.manifest.completed_phases.join(", ")
                )))
            }
        }
    }
}

pub fn run_pipeline(cfg: &Config, out: &Path, resume: bool, force: bool) -> Result<()> {
    let manifest_path = out.join(MANIFEST_NAME);
    let config_value = cfg.to_value();
    let manifest = if resume && manifest_path.exists() {
        let m = RunManifest::load(&manifest_path)?;
        if m.config != config_value {
            return Err(usage(format!(
                "{} was produced with a different config; rerun without --resume (and with --force)",
                manifest_path.display()
            )));
        }
        if !m.outputs_intact() {
            return Err(usage(format!(
                "outputs recorded in {} were modified; rerun without --resume",
                manifest_path.display()
            )));
        }
        m
    } else {
        check_dir_out(out, force)?;
        RunManifest::new("pipeline", config_value, cfg.search.config.seed)
    };
    let mut phases = Phases {
        manifest,
        path: manifest_path,
        resume,
    };

    let dataset = out.join(DATASET);
    phases.run("dataset", |m| {
        gen_dataset_to(cfg, &dataset)?;
        m.output(&dataset)
    })?;

    let evaluator = out.join(EVALUATOR);
    phases.run("evaluator", |m| {
        let (model, _) = train_evaluator_to(cfg, &dataset, &evaluator)?;
        let report_path = out.join(EVALUATOR_REPORT);
        let report = model.metadata.report.as_ref().expect("training stores a report");
        std::fs::write(&report_path, report.to_csv()).with_context(|| format!("writing {}", report_path.display()))?;
        m.output(&evaluator)?;
        m.output(&report_path)
    })?;

    let runs_dir = out.join("runs");
    let mut run_dirs = Vec::new();
    for (name, spec) in run_specs(cfg) {
        let dir = runs_dir.join(&name);
        phases.run(&format!("search:{name}"), |m| {
            run_search(cfg, &spec, Some(&evaluator), &dir, true)?;
            m.output(&dir.join("search.json"))
        })?;
        phases.run(&format!("finalize:{name}"), |m| {
            if let FinalizeOutcome::Collapsed(msg) = finalize_run(&dir, Some(&evaluator), true)? {
                eprintln!("warning: run {name} collapsed: {msg}");
                m.notes.insert(format!("collapsed:{name}"), msg);
                return Ok(());
            }
            m.output(&dir.join(crate::report::FINAL_NAME))
        })?;
        run_dirs.push(dir);
    }

    phases.run("report", |m| {
        write_report(&run_dirs, out)?;
        m.output(&out.join(REPORT_CSV))?;
        m.output(&out.join(REPORT_SVG))
    })?;
    Ok(())
}
