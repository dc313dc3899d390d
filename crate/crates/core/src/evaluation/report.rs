use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::AblationRow;
use super::deviation::DeviationReport;
use super::identification::LinkabilityReport;
use super::scenario::AdversaryScenario;
use crate::error::{Error, Result};
use crate::persist::write_atomic;

/// Everything an evaluation run produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenarios: Vec<LinkabilityReport>,
    #[serde(default)]
    pub ablation: Vec<AblationRow>,
    #[serde(default)]
    pub deviation: Option<DeviationReport>,
}

impl EvaluationReport {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Markdown summary: the scenario × identifier grid, then per-scenario details.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Identification accuracy\n\n");
        let grid: Vec<(&LinkabilityReport, AdversaryScenario)> =
            self.scenarios.iter().filter_map(|r| r.scenario.map(|s| (r, s))).collect();
        if grid.is_empty() && self.scenarios.is_empty() {
            out.push_str("No scenarios were evaluated.\n");
        }
        if !grid.is_empty() {
            let mut rows: Vec<&str> = Vec::new();
            let mut cols: Vec<&str> = Vec::new();
            let mut order: Vec<AdversaryScenario> = grid.iter().map(|(_, s)| *s).collect();
            order.sort();
            for s in &order {
                if !rows.contains(&s.row()) {
                    rows.push(s.row());
                }
                if !cols.contains(&s.column()) {
                    cols.push(s.column());
                }
            }
            rows.sort_by_key(|r| grid.iter().map(|(_, s)| *s).filter(|s| s.row() == *r).min());
            let _ = writeln!(out, "Per-sample / per-user accuracy on session 2.\n");
            let _ = writeln!(out, "| Scenario | {} |", cols.join(" | "));
            let _ = writeln!(out, "|---|{}", "---|".repeat(cols.len()));
            for r in &rows {
                let cells: Vec<String> = cols
                    .iter()
                    .map(|c| {
                        grid.iter()
                            .find(|(_, s)| s.row() == *r && s.column() == *c)
                            .map(|(rep, _)| format!("{:.1}% / {:.1}%", 100.0 * rep.per_sample_accuracy, 100.0 * rep.per_user_accuracy))
                            .unwrap_or_else(|| "n/a".into())
                    })
                    .collect();
                let _ = writeln!(out, "| {r} | {} |", cells.join(" | "));
            }
            out.push('\n');
        }
        for r in self.scenarios.iter().filter(|r| r.scenario.is_none()) {
            let _ = writeln!(
                out,
                "- {}: per-sample {:.1}%, per-user {:.1}% ({} windows, {} users)",
                r.label,
                100.0 * r.per_sample_accuracy,
                100.0 * r.per_user_accuracy,
                r.samples,
                r.users
            );
        }
        if !self.ablation.is_empty() {
            out.push_str("\n## Feature subsets\n\n| Subset | Features | Per-sample | Per-user |\n|---|---|---|---|\n");
            for a in &self.ablation {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.1}% | {:.1}% |",
                    a.subset,
                    a.features,
                    100.0 * a.per_sample_accuracy,
                    100.0 * a.per_user_accuracy
                );
            }
        }
        if let Some(d) = &self.deviation {
            out.push_str("\n## Trajectory deviation\n\n| Device | Mean cm | p95 cm | Mean deg | p95 deg |\n|---|---|---|---|---|\n");
            for v in &d.devices {
                let _ = writeln!(out, "| {} | {:.2} | {:.2} | {:.2} | {:.2} |", v.device, v.mean_cm, v.p95_cm, v.mean_deg, v.p95_deg);
            }
        }
        out
    }
}

/// Writes `evaluation.json` and `evaluation.md` into `dir`; returns both paths.
pub fn emit_report(report: &EvaluationReport, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let json = dir.join("evaluation.json");
    let md = dir.join("evaluation.md");
    write_atomic(&json, report.to_json()?.as_bytes())?;
    write_atomic(&md, report.to_markdown().as_bytes())?;
    Ok((json, md))
}
