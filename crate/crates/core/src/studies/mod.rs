//! The permutation study, the two mask ablations and the baseline
//! comparison, each producing a [`StudyReport`].

mod ablation;
mod compare;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{significance_pipeline, DecisionRecord, PairedSamples, TestUsed};

pub use ablation::{
    pretrain_embeddings, run_ablation_1, run_ablation_2, run_permutation_study, AblationConfig, ConvRecipe,
    PermutationConfig,
};
pub use compare::{run_baseline_comparison, ComparisonConfig};
pub use synthetic::{synthetic_dataset, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Permutation,
    Ablation1,
    Ablation2,
    BaselineComparison,
}

impl StudyKind {
    pub fn title(self) -> &'static str {
        match self {
            StudyKind::Permutation => "Factor permutation study",
            StudyKind::Ablation1 => "Ablation 1: full-map model, masked inference",
            StudyKind::Ablation2 => "Ablation 2: models trained on masked maps",
            StudyKind::BaselineComparison => "Baseline comparison",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub variant: String,
    /// Keyed by metric label such as `NDCG@10`.
    pub metrics: BTreeMap<String, f64>,
    /// `None` on success, the error message otherwise.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 with `std_defined == false` for one run.
    pub std: f64,
    pub std_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub decision: DecisionRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    /// Snapshot of every setting the study was run with.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub variants: Vec<String>,
    pub metrics: Vec<String>,
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<VariantSummary>,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl StudyReport {
    pub fn new(kind: StudyKind, config: serde_json::Value, variants: Vec<String>, metrics: Vec<String>) -> Self {
        Self {
            kind,
            config,
            seeds: Vec::new(),
            variants,
            metrics,
            runs: Vec::new(),
            summaries: Vec::new(),
            comparisons: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Successful per-run values of `variant` / `metric`, in run order.
    pub fn values(&self, variant: &str, metric: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.variant == variant && r.failure.is_none())
            .filter_map(|r| r.metrics.get(metric).copied())
            .collect()
    }

    pub fn summary(&self, variant: &str, metric: &str) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant && s.metric == metric)
    }

    pub fn comparison(&self, metric: &str, a: &str, b: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.metric == metric && c.a == a && c.b == b)
    }

    /// Recomputes mean and standard deviation for every variant and metric.
    pub fn summarize(&mut self) {
        self.summaries.clear();
        let mut single = false;
        for v in &self.variants {
            for m in &self.metrics {
                let vals = self.values(v, m);
                if vals.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&vals);
                single |= vals.len() < 2;
                self.summaries.push(VariantSummary {
                    variant: v.clone(),
                    metric: m.clone(),
                    n: vals.len(),
                    mean,
                    std,
                    std_defined: vals.len() >= 2,
                });
            }
        }
        let note = "standard deviation is undefined for a single run and shown as 0";
        if single && self.kind != StudyKind::BaselineComparison && !self.notes.iter().any(|n| n == note) {
            self.notes.push(note.into());
        }
    }

    /// Runs the significance pipeline on `a` vs `b`, paired by run. When the
    /// pipeline cannot run (too few pairs) a not-applicable record explains why.
    pub fn compare(&mut self, metric: &str, a: &str, b: &str, alpha: f64) -> Result<()> {
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        let by_run = |variant: &str| -> BTreeMap<usize, f64> {
            self.runs
                .iter()
                .filter(|r| r.variant == variant && r.failure.is_none())
                .filter_map(|r| r.metrics.get(metric).map(|&v| (r.run, v)))
                .collect()
        };
        let rb = by_run(b);
        for (run, va) in by_run(a) {
            if let Some(&vb) = rb.get(&run) {
                xa.push(va);
                xb.push(vb);
            }
        }
        let n = xa.len();
        let mean_difference = xa.iter().zip(&xb).map(|(p, q)| p - q).sum::<f64>() / n.max(1) as f64;
        let outcome = PairedSamples::labelled(xa, xb, a, b).and_then(|s| significance_pipeline(&s, alpha));
        let decision = match outcome {
            Ok(d) => d,
            Err(e) => DecisionRecord {
                labels: (a.to_string(), b.to_string()),
                n,
                alpha,
                mean_difference,
                shapiro_wilk: None,
                kolmogorov_smirnov: None,
                test_used: TestUsed::NotApplicable,
                statistic: None,
                p_value: None,
                significant: false,
                reason: format!("not applicable: {e}"),
            },
        };
        self.comparisons.push(Comparison {
            metric: metric.to_string(),
            a: a.to_string(),
            b: b.to_string(),
            decision,
        });
        Ok(())
    }

    /// One row per run and variant; metric columns in report order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,seed,variant");
        for m in &self.metrics {
            write!(out, ",{m}").unwrap();
        }
        out.push_str(",status\n");
        for r in &self.runs {
            write!(out, "{},{},{}", r.run, r.seed, r.variant).unwrap();
            for m in &self.metrics {
                match r.metrics.get(m) {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(','),
                }
            }
            let status = r.failure.as_deref().map_or("ok".to_string(), |f| format!("\"failed: {}\"", f.replace('"', "'")));
            writeln!(out, ",{status}").unwrap();
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("# {}\n\n| Variant |", self.kind.title());
        for m in &self.metrics {
            write!(out, " {m} |").unwrap();
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.metrics.len()));
        out.push('\n');
        let plain = self.kind == StudyKind::BaselineComparison;
        // best mean per metric column, highlighted in the comparison table
        let best: Vec<Option<f64>> = self
            .metrics
            .iter()
            .map(|m| {
                self.summaries
                    .iter()
                    .filter(|s| &s.metric == m)
                    .map(|s| s.mean)
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            })
            .collect();
        for v in &self.variants {
            write!(out, "| {v} |").unwrap();
            let failed = self.runs.iter().find(|r| &r.variant == v && r.failure.is_some());
            for (mi, m) in self.metrics.iter().enumerate() {
                match self.summary(v, m) {
                    Some(s) if plain => {
                        if best[mi] == Some(s.mean) {
                            write!(out, " **{:.4}** |", s.mean).unwrap();
                        } else {
                            write!(out, " {:.4} |", s.mean).unwrap();
                        }
                    }
                    Some(s) => write!(out, " {:.4} ± {:.4} |", s.mean, s.std).unwrap(),
                    None if failed.is_some() => out.push_str(" failed |"),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        if !self.comparisons.is_empty() {
            out.push_str("\n| Metric | Comparison | n | Test | Statistic | p | Significant |\n|---|---|---|---|---|---|---|\n");
            for c in &self.comparisons {
                let d = &c.decision;
                let test = match d.test_used {
                    TestUsed::PairedT => "paired t",
                    TestUsed::Wilcoxon => "Wilcoxon",
                    TestUsed::NotApplicable => "not applicable",
                };
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                writeln!(
                    out,
                    "| {} | {} vs {} | {} | {} | {} | {} | {} |",
                    c.metric,
                    c.a,
                    c.b,
                    d.n,
                    test,
                    fmt(d.statistic),
                    fmt(d.p_value),
                    if d.significant { "yes" } else { "no" }
                )
                .unwrap();
            }
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                writeln!(out, "- {n}").unwrap();
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<stem>.csv`, `<stem>.md` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.md")), self.to_markdown())?;
        fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        Ok(())
    }
}
