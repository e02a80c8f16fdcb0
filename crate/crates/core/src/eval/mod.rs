//! Evaluation harness: synthetic corpus, scoring, oracle answers, SQL
//! mutations and rule ablations.

mod ablation;
mod corpus;
mod mutation;
mod oracle;
mod score;

pub use ablation::{run_ablation, AblationReport, AblationRow, ABLATION_ROWS};
pub use corpus::{generate_synthetic_corpus, GoldLabel, GoldQuestion, SyntheticCorpus};
pub use mutation::{aggregates, generate_mutations, MutationClass, SqlMutation};
pub use oracle::{oracle_answer, oracle_bind_year, random_intent, random_record};
pub use score::{
    f1_score, ratio, score_extraction, score_queries, values_match, ExtractionMetrics, QueryMetrics, QueryOutcome,
};

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::extraction::{ExtractionReport, MetricTaxonomy, MockBackend};
use crate::pipeline::{Pipeline, ReviewEntry};
use crate::rules::{KpiRecord, RuleSet};
use crate::store::{AuditLog, FixedClock, KpiStore, StoreError, SCHEMA_VERSION};
use crate::text_to_sql::{parse_intent, TextToSql};
use crate::validation::ValidatedRecord;

/// Knobs for one harness run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Questions scored per run, taken in corpus order. `None` scores all.
    pub question_limit: Option<usize>,
    pub parallelism: usize,
    pub backend_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { question_limit: Some(200), parallelism: 4, backend_seed: 0 }
    }
}

/// Metrics for one rule configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub docs: usize,
    pub rules: String,
    pub extraction: ExtractionMetrics,
    pub query: QueryMetrics,
    pub stored: usize,
    pub review_entries: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let e = &self.extraction;
        let q = &self.query;
        let pct = |x: f64| format!("{:.1}%", x * 100.0);
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), pct);
        let mut s = format!("# Evaluation (seed {}, {} documents, rules: {})\n\n", self.seed, self.docs, self.rules);
        s += "| Metric | Value |\n|---|---|\n";
        for (name, v) in [
            ("Precision", pct(e.precision)),
            ("Recall", pct(e.recall)),
            ("F1", pct(e.f1)),
            ("Unit error rate", pct(e.unit_error_rate)),
            ("Period misalignment rate", pct(e.period_misalignment_rate)),
            ("Structuring accuracy", pct(e.structuring_accuracy)),
            ("Schema compliance", pct(e.schema_compliance)),
            ("QA match rate", pct(e.qa_match_rate)),
            ("Intent accuracy", opt(q.intent_accuracy)),
            ("SQL syntax validity", opt(q.sql_syntax_validity)),
            ("Constraint pass rate", opt(q.constraint_pass_rate)),
            ("Execution success rate", opt(q.execution_success_rate)),
            ("Top-1 oracle accuracy", opt(q.top1_oracle_accuracy)),
        ] {
            s += &format!("| {name} | {v} |\n");
        }
        s += &format!(
            "\n{} predicted, {} gold, {} stored, {} questions.\n",
            e.predicted, e.gold, self.stored, q.questions
        );
        s
    }
}

/// Output of [`Harness::run`].
#[derive(Debug)]
pub struct EvalRun {
    pub report: EvalReport,
    pub store: KpiStore,
    pub predicted: Vec<ValidatedRecord>,
    pub review: Vec<ReviewEntry>,
}

impl EvalRun {
    /// Write `store.json`, `audit.jsonl`, `review.jsonl`, `report.json` and
    /// `report.md` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        let audit = Arc::new(AuditLog::open(dir.join("audit.jsonl"), Arc::new(FixedClock::epoch()))?);
        for e in self.store.audit().entries()? {
            audit.append(e.event)?;
        }
        let file_store = KpiStore::open(dir.join("store.json"), SCHEMA_VERSION)?
            .with_audit(Arc::new(AuditLog::in_memory(Arc::new(FixedClock::epoch()))));
        file_store.upsert_records(&self.store.records())?;
        let mut review = String::new();
        for r in &self.review {
            review += &serde_json::to_string(r).map_err(|e| io::Error::other(e.to_string()))?;
            review.push('\n');
        }
        fs::write(dir.join("review.jsonl"), review)?;
        fs::write(dir.join("report.json"), self.report.to_json())?;
        fs::write(dir.join("report.md"), self.report.to_markdown())?;
        Ok(())
    }
}

/// A corpus with its extraction done once, ready to be run under any
/// rule configuration.
pub struct Harness {
    corpus: SyntheticCorpus,
    taxonomy: MetricTaxonomy,
    options: EvalOptions,
    extractions: Vec<ExtractionReport>,
}

impl Harness {
    pub fn new(corpus: SyntheticCorpus, options: EvalOptions) -> Self {
        let pipeline = Self::pipeline_for(&options, RuleSet::all_on());
        let extractions = corpus.documents.par_iter().map(|d| pipeline.extract(d)).collect();
        Self { corpus, taxonomy: MetricTaxonomy::default(), options, extractions }
    }

    fn pipeline_for(options: &EvalOptions, rules: RuleSet) -> Pipeline {
        Pipeline::new(MetricTaxonomy::default(), Arc::new(MockBackend::new(options.backend_seed)), rules)
            .with_parallelism(options.parallelism)
    }

    pub fn corpus(&self) -> &SyntheticCorpus {
        &self.corpus
    }

    /// Rules, validation, store build and question answering for one
    /// configuration. Deterministic in (corpus, options, rules).
    pub fn run(&self, rules: RuleSet) -> EvalRun {
        let pipeline = Self::pipeline_for(&self.options, rules);
        let runs: Vec<_> =
            self.corpus.documents.par_iter().zip(&self.extractions).map(|(d, x)| pipeline.process(d, x)).collect();

        let store = KpiStore::in_memory(SCHEMA_VERSION)
            .with_audit(Arc::new(AuditLog::in_memory(Arc::new(FixedClock::epoch()))));
        let mut predicted = Vec::new();
        let mut review = Vec::new();
        for run in runs {
            store.upsert_records(&run.storable()).expect("storable records pass the gate");
            predicted.extend(run.validated);
            review.extend(run.review);
        }
        let gold: Vec<KpiRecord> = self.corpus.gold_records().cloned().collect();
        let extraction = score_extraction(&predicted, &gold);
        let query = self.score_questions(&store, &gold);
        EvalRun {
            report: EvalReport {
                seed: self.corpus.seed,
                docs: self.corpus.documents.len(),
                rules: rules.label(),
                extraction,
                query,
                stored: store.len(),
                review_entries: review.len(),
            },
            store,
            predicted,
            review,
        }
    }

    fn score_questions(&self, store: &KpiStore, gold: &[KpiRecord]) -> QueryMetrics {
        let agent = TextToSql::new(self.taxonomy.clone(), Arc::new(MockBackend::new(self.options.backend_seed)));
        let limit = self.options.question_limit.unwrap_or(usize::MAX);
        let outcomes: Vec<QueryOutcome> = self
            .corpus
            .questions
            .iter()
            .take(limit)
            .map(|q| {
                let Ok(intent) = parse_intent(&q.question, &self.taxonomy) else { return QueryOutcome::default() };
                let intent_correct = intent == q.intent;
                match agent.answer_intent(store, &q.question, &intent) {
                    Ok(bundle) => QueryOutcome {
                        intent_correct,
                        syntax_ok: bundle.validation.syntax_ok,
                        constraints_passed: bundle.validation.passed(),
                        executed: true,
                        matches_oracle: answers_match(&bundle.values(), &oracle_answer(gold, &q.intent)),
                    },
                    Err(_) => QueryOutcome { intent_correct, ..Default::default() },
                }
            })
            .collect();
        score_queries(&outcomes)
    }
}

/// Same metrics in the same order, values equal within tolerance.
pub fn answers_match(got: &[(String, Option<Decimal>)], want: &[(String, Option<Decimal>)]) -> bool {
    got.len() == want.len()
        && got.iter().zip(want).all(|((m1, v1), (m2, v2))| {
            m1 == m2
                && match (v1, v2) {
                    (Some(a), Some(b)) => values_match(*a, *b),
                    (None, None) => true,
                    _ => false,
                }
        })
}

/// Generate, extract and score in one call.
pub fn evaluate(seed: u64, docs: usize, rules: RuleSet, options: EvalOptions) -> EvalRun {
    Harness::new(generate_synthetic_corpus(seed, docs), options).run(rules)
}
