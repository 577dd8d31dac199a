//! Executes a resolved experiment and writes its artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use mfc_core::controllers::ControllerKind;
use mfc_core::simkit::{run_scenario, Comparison, ComparisonEntry, ErrorReport, Verdict};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, PlannedRun};
use crate::output::{write_atomic, write_string};
use crate::plot;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub group: String,
    pub controller: ControllerKind,
    pub mu: f64,
    pub verdict: Verdict,
    pub report: ErrorReport,
    pub trace_file: Option<PathBuf>,
}

/// Everything a `run` produced; `report.json` is this structure.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub files: Vec<PathBuf>,
}

impl Summary {
    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(|r| r.verdict.is_completed())
    }

    /// Runs grouped by their base scenario, in first-seen order.
    pub fn comparisons(&self) -> Vec<(String, Comparison)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<ComparisonEntry>> = BTreeMap::new();
        for r in &self.runs {
            if !groups.contains_key(&r.group) {
                order.push(r.group.clone());
            }
            groups
                .entry(r.group.clone())
                .or_default()
                .push(ComparisonEntry {
                    mu: r.mu,
                    controller: r.controller,
                    report: r.report.clone(),
                });
        }
        order
            .into_iter()
            .map(|g| {
                let mut entries = groups.remove(&g).unwrap_or_default();
                entries.sort_by(|a, b| b.mu.total_cmp(&a.mu).then(a.controller.cmp(&b.controller)));
                (g, Comparison { entries })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (group, cmp) in self.comparisons() {
            let _ = writeln!(out, "== {group}");
            out.push_str(&cmp.to_table());
            out.push('\n');
        }
        for r in &self.runs {
            let _ = writeln!(out, "{:<40} {}", r.name, r.verdict.describe());
        }
        out
    }
}

fn execute_one(cfg: &ExperimentConfig, run: &PlannedRun) -> Result<(RunSummary, Vec<PathBuf>)> {
    let scn = &run.scenario;
    let trace = run_scenario(scn).map_err(|e| anyhow!("run `{}`: {e}", scn.name))?;
    let report = trace.report()?;
    let mut files = Vec::new();
    let trace_file = if cfg.emit.trace {
        let path = cfg.output_dir.join(format!("{}.trace.csv", scn.name));
        write_atomic(&path, |w| Ok(trace.write_csv(w)?))?;
        files.push(path.clone());
        Some(path)
    } else {
        None
    };
    if cfg.emit.plotdata {
        let dir = cfg.output_dir.join("plot").join(&scn.name);
        files.extend(plot::emit(&trace.rows, &[], &dir)?);
    }
    Ok((
        RunSummary {
            name: scn.name.clone(),
            group: run.group.clone(),
            controller: scn.controller,
            mu: scn.mu,
            verdict: trace.verdict.clone(),
            report,
            trace_file,
        },
        files,
    ))
}

/// Runs every planned scenario (in parallel up to `cfg.jobs`, 0 = all
/// cores) and writes traces, plot data and reports.
pub fn execute(cfg: &ExperimentConfig) -> Result<Summary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()?;
    let planned = cfg.runs();
    let results: Vec<Result<(RunSummary, Vec<PathBuf>)>> =
        pool.install(|| planned.par_iter().map(|r| execute_one(cfg, r)).collect());
    let mut runs = Vec::with_capacity(results.len());
    let mut files = Vec::new();
    for r in results {
        let (summary, written) = r?;
        runs.push(summary);
        files.extend(written);
    }
    let mut summary = Summary {
        config: cfg.clone(),
        runs,
        files,
    };
    if cfg.emit.report {
        let dir = &cfg.output_dir;
        let mut written = vec![dir.join("report.json"), dir.join("report.txt")];
        for (group, cmp) in summary.comparisons() {
            let path = dir.join(format!("{group}.report.csv"));
            write_atomic(&path, |w| Ok(cmp.write_csv(w)?))?;
            written.push(path);
        }
        summary.files.extend(written);
        write_string(&dir.join("report.txt"), &summary.to_text())?;
        write_string(
            &dir.join("report.json"),
            &serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok(summary)
}
