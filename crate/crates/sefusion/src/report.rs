//! Evaluation reports: per-sub-task weighted-F1 for each split, plus the
//! group averages for the binary and scale task groups.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Split, TaskId};
use crate::error::{Error, Result};
use crate::metrics::average_weighted_f1;

pub const REPORT_FORMAT: &str = "sefusion-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub train: Option<f64>,
    pub validation: Option<f64>,
    pub test: Option<f64>,
}

impl TaskScores {
    pub fn get(&self, split: Split) -> Option<f64> {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    pub fn set(&mut self, split: Split, score: f64) {
        match split {
            Split::Train => self.train = Some(score),
            Split::Validation => self.validation = Some(score),
            Split::Test => self.test = Some(score),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_version")]
    pub version: u32,
    pub tasks: BTreeMap<TaskId, TaskScores>,
    /// Average weighted-F1 per task group, present when every member task
    /// has a score for the split.
    pub group_averages: BTreeMap<String, TaskScores>,
}

fn default_format() -> String {
    REPORT_FORMAT.to_string()
}

fn default_version() -> u32 {
    REPORT_VERSION
}

impl EvalReport {
    pub fn new() -> Self {
        EvalReport {
            format: default_format(),
            version: default_version(),
            tasks: BTreeMap::new(),
            group_averages: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, task: TaskId, split: Split, score: f64) {
        self.tasks.entry(task).or_default().set(split, score);
    }

    /// Folds another report's per-task scores into this one. Conflicting
    /// scores for the same task and split are an error.
    pub fn merge(&mut self, other: &EvalReport) -> Result<()> {
        for (task, scores) in &other.tasks {
            for split in Split::ALL {
                let Some(score) = scores.get(split) else {
                    continue;
                };
                let existing = self.tasks.entry(*task).or_default();
                match existing.get(split) {
                    Some(present) if present != score => {
                        return Err(Error::data(format!(
                            "conflicting {split} scores for task {task}: {present} vs {score}"
                        )));
                    }
                    _ => existing.set(split, score),
                }
            }
        }
        Ok(())
    }

    /// Recomputes the group averages from the per-task scores.
    pub fn compute_group_averages(&mut self) -> Result<()> {
        self.group_averages.clear();
        for (name, members) in [("B", TaskId::GROUP_B), ("C", TaskId::GROUP_C)] {
            let mut scores = TaskScores::default();
            let mut any = false;
            for split in Split::ALL {
                let member_scores: Vec<f64> = members
                    .iter()
                    .filter_map(|task| self.tasks.get(task).and_then(|s| s.get(split)))
                    .collect();
                if member_scores.len() == members.len() {
                    scores.set(split, average_weighted_f1(&member_scores)?);
                    any = true;
                }
            }
            if any {
                self.group_averages.insert(name.to_string(), scores);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.format != REPORT_FORMAT {
            return Err(Error::data(format!(
                "not a report file (format `{}`)",
                self.format
            )));
        }
        if self.version != REPORT_VERSION {
            return Err(Error::data(format!(
                "unsupported report version {} (this build reads version {REPORT_VERSION})",
                self.version
            )));
        }
        Ok(())
    }

    /// Plain-text table: one row per sub-task, grouped, with group averages.
    pub fn render_text(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            match v {
                Some(score) => format!("{score:.4}"),
                None => "-".to_string(),
            }
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:<10} {:>10} {:>12} {:>10}\n",
            "task", "sub-task", "train", "validation", "test"
        ));
        let mut row = |group: &str, label: &str, scores: Option<&TaskScores>| {
            let s = scores.copied().unwrap_or_default();
            out.push_str(&format!(
                "{group:<6} {label:<10} {:>10} {:>12} {:>10}\n",
                cell(s.train),
                cell(s.validation),
                cell(s.test),
            ));
        };
        if let Some(scores) = self.tasks.get(&TaskId::A) {
            row("A", "A", Some(scores));
        }
        let b_tasks: Vec<_> = TaskId::GROUP_B
            .iter()
            .filter(|t| self.tasks.contains_key(t))
            .collect();
        if !b_tasks.is_empty() {
            for task in &b_tasks {
                row("B", task.as_str(), self.tasks.get(task));
            }
            if let Some(avg) = self.group_averages.get("B") {
                row("B", "average", Some(avg));
            }
        }
        let c_present = TaskId::GROUP_C.iter().any(|t| self.tasks.contains_key(t));
        if c_present {
            for task in TaskId::GROUP_C {
                if !self.tasks.contains_key(&task) {
                    continue;
                }
                // The shared motivational sub-task renders as C4 here.
                let label = if task == TaskId::B4 { "C4" } else { task.as_str() };
                row("C", label, self.tasks.get(&task));
            }
            if let Some(avg) = self.group_averages.get("C") {
                row("C", "average", Some(avg));
            }
        }
        out
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<EvalReport> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::data(format!("report is not UTF-8: {e}")))?;
    let report: EvalReport =
        serde_json::from_str(text).map_err(|e| Error::data(format!("invalid report: {e}")))?;
    report.validate()?;
    Ok(report)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_report(&bytes).map_err(|e| match e {
        Error::Data { line, message, .. } => Error::Data {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })
}

pub fn save_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))
}
