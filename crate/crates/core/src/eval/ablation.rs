use serde::{Deserialize, Serialize};

use super::{EvalReport, Harness};
use crate::rules::RuleSet;

pub const ABLATION_ROWS: [&str; 5] = [
    "extraction precision",
    "unit error rate",
    "period misalignment rate",
    "QA match accuracy",
    "SQL validity pass rate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub metric: String,
    /// One value per configuration, baseline first.
    pub values: Vec<Option<f64>>,
    /// Difference from the baseline, per configuration.
    pub deltas: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub docs: usize,
    pub configurations: Vec<String>,
    pub rows: Vec<AblationRow>,
    pub reports: Vec<EvalReport>,
}

fn row_values(r: &EvalReport) -> [Option<f64>; 5] {
    [
        Some(r.extraction.precision),
        Some(r.extraction.unit_error_rate),
        Some(r.extraction.period_misalignment_rate),
        Some(r.extraction.qa_match_rate),
        r.query.constraint_pass_rate,
    ]
}

/// Run every configuration over the same extraction. The first
/// configuration is the baseline for deltas.
pub fn run_ablation(harness: &Harness, configs: &[RuleSet]) -> AblationReport {
    let reports: Vec<EvalReport> = configs.iter().map(|c| harness.run(*c).report).collect();
    let table: Vec<[Option<f64>; 5]> = reports.iter().map(row_values).collect();
    let rows = ABLATION_ROWS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values: Vec<Option<f64>> = table.iter().map(|t| t[i]).collect();
            let base = values.first().copied().flatten();
            let deltas = values.iter().map(|v| v.zip(base).map(|(v, b)| v - b)).collect();
            AblationRow { metric: name.to_string(), values, deltas }
        })
        .collect();
    AblationReport {
        seed: harness.corpus().seed,
        docs: harness.corpus().documents.len(),
        configurations: configs.iter().map(RuleSet::label).collect(),
        rows,
        reports,
    }
}

impl AblationReport {
    pub fn row(&self, metric: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Delta for `metric` in configuration `idx`.
    pub fn delta(&self, metric: &str, idx: usize) -> Option<f64> {
        self.row(metric).and_then(|r| r.deltas.get(idx).copied().flatten())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let pct = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
        let pp = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{:+.1}", v * 100.0));
        let mut s = format!("# Ablation (seed {}, {} documents)\n\n| Metric |", self.seed, self.docs);
        for (i, c) in self.configurations.iter().enumerate() {
            s += &format!(" {c} |");
            if i > 0 {
                s += " delta |";
            }
        }
        s += "\n|---|";
        s += &"---|".repeat(self.configurations.len() * 2 - 1);
        s.push('\n');
        for row in &self.rows {
            s += &format!("| {} |", row.metric);
            for (i, v) in row.values.iter().enumerate() {
                s += &format!(" {} |", pct(*v));
                if i > 0 {
                    s += &format!(" {} |", pp(row.deltas[i]));
                }
            }
            s.push('\n');
        }
        s += "\nDeltas are percentage points against the first column.\n";
        s
    }
}
