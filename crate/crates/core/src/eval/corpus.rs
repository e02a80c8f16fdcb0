//! Seeded earnings-release generator with exact gold labels.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::extraction::Provenance;
use crate::ingest::{load_document, CharRange, Document, DocumentMeta, InputFormat, SectionKind, SourceKind};
use crate::rules::{Basis, FiscalPeriod, Granularity, KpiRecord, Qualifier, ResolvedFrom, RuleName, Status, Unit};
use crate::text_to_sql::{Aggregation, BasisFilter, PeriodFilter, QueryIntent, StatusFilter};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub doc_id: String,
    pub records: Vec<KpiRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldQuestion {
    pub question: String,
    pub intent: QueryIntent,
    pub doc_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub documents: Vec<Document>,
    pub gold: Vec<GoldLabel>,
    pub questions: Vec<GoldQuestion>,
}

impl SyntheticCorpus {
    pub fn gold_records(&self) -> impl Iterator<Item = &KpiRecord> {
        self.gold.iter().flat_map(|g| g.records.iter())
    }

    /// Documents whose gold labels include a range.
    pub fn documents_with_ranges(&self) -> usize {
        self.gold.iter().filter(|g| g.records.iter().any(KpiRecord::is_range)).count()
    }
}

const TICKERS: &[&str] =
    &["ACME", "GLOBX", "INITECH", "UMBRL", "HOOLI", "STARK", "WAYNE", "TYRELL", "VANDLY", "OSCORP"];

struct MetricSpec {
    name: &'static str,
    aliases: &'static [&'static str],
    /// Phrase used when asking about the metric.
    ask: &'static str,
}

const MARGINS: &[MetricSpec] = &[
    MetricSpec { name: "operating_margin", aliases: &["operating margin"], ask: "operating margin" },
    MetricSpec { name: "gross_margin", aliases: &["gross margin"], ask: "gross margin" },
];

const AMOUNTS: &[MetricSpec] = &[
    MetricSpec { name: "revenue", aliases: &["revenue", "net sales", "total revenue", "net revenue"], ask: "revenue" },
    MetricSpec {
        name: "operating_income",

        aliases: &["operating income", "income from operations", "operating profit"],
        ask: "operating income",
    },
    MetricSpec { name: "free_cash_flow", aliases: &["free cash flow"], ask: "free cash flow" },
];

const EPS: MetricSpec = MetricSpec { name: "eps", aliases: &["EPS"], ask: "EPS" };

fn d(s: &str) -> Decimal {
    s.parse().expect("generated decimal")
}

fn pct(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> String {
    format!("{}.{}", rng.gen_range(lo..hi), rng.gen_range(0..10))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
}

struct Amount {
    surface: String,
    value: Decimal,
    scale: Decimal,
}

fn amount(rng: &mut ChaCha8Rng) -> Amount {
    if rng.gen_bool(0.5) {
        let face = format!("{}.{}", rng.gen_range(1..60), rng.gen_range(1..10));
        let surface = if rng.gen_bool(0.5) { format!("${face} billion") } else { format!("${face}B") };
        let scale = Decimal::from(1_000_000_000u64);
        Amount { surface, value: d(&face) * scale, scale }
    } else {
        let face = rng.gen_range(100..1000).to_string();
        let surface = if rng.gen_bool(0.5) { format!("${face} million") } else { format!("${face}M") };
        let scale = Decimal::from(1_000_000u64);
        Amount { surface, value: d(&face) * scale, scale }
    }
}

fn period_text(rng: &mut ChaCha8Rng, g: Granularity, y: i32) -> String {
    match g {
        Granularity::FY => {
            ["FY {y}", "fiscal {y}", "fiscal year {y}"].choose(rng).expect("non-empty").replace("{y}", &y.to_string())
        }
        g => format!("{g} {y}"),
    }
}

/// A record awaiting its section id: paragraph index and local span.
struct Pending {
    paragraph: usize,
    range: CharRange,
    metric: String,
    value: Decimal,
    low: Decimal,
    high: Decimal,
    unit: Unit,
    scale: Decimal,
    period: FiscalPeriod,
    qualifier: Qualifier,
}

struct Builder {
    paragraphs: Vec<String>,
    pending: Vec<Pending>,
    keys: BTreeSet<(String, Granularity, i32, Status)>,
}

impl Builder {
    fn text(&mut self, s: &str) {
        self.paragraphs.last_mut().expect("open paragraph").push_str(s);
    }

    fn number(&mut self, surface: &str) -> CharRange {
        let p = self.paragraphs.last_mut().expect("open paragraph");
        let start = p.len();
        p.push_str(surface);
        CharRange::new(start, p.len())
    }

    fn free(&self, metric: &str, period: &FiscalPeriod, status: Status) -> bool {
        !self.keys.contains(&(metric.to_string(), period.granularity, period.year, status))
    }

    #[allow(clippy::too_many_arguments)]
    fn gold(
        &mut self,
        range: CharRange,
        metric: &str,
        low: Decimal,
        high: Decimal,
        unit: Unit,
        scale: Decimal,
        period: FiscalPeriod,
        qualifier: Qualifier,
    ) {
        self.keys.insert((metric.to_string(), period.granularity, period.year, qualifier.status));
        self.pending.push(Pending {
            paragraph: self.paragraphs.len() - 1,
            range,
            metric: metric.to_string(),
            value: (low + high) / Decimal::TWO,
            low,
            high,
            unit,
            scale,
            period,
            qualifier,
        });
    }
}

fn actual(basis: Basis) -> Qualifier {
    Qualifier { basis, status: Status::Actual }
}

fn guidance() -> Qualifier {
    Qualifier { basis: Basis::Unstated, status: Status::Guidance }
}

fn period_end(g: Granularity, y: i32) -> NaiveDate {
    let (yy, m) = match g {
        Granularity::Q1 => (y, 3),
        Granularity::Q2 | Granularity::H1 => (y, 6),
        Granularity::Q3 => (y, 9),
        Granularity::Q4 | Granularity::FY | Granularity::H2 => (y, 12),
    };
    let first_next =
        if m == 12 { NaiveDate::from_ymd_opt(yy + 1, 1, 1) } else { NaiveDate::from_ymd_opt(yy, m + 1, 1) };
    first_next.expect("valid date").pred_opt().expect("valid date")
}

#[derive(Clone, Copy)]
enum Template {
    PercentActual,
    PercentWithPrior,
    AmountActual,
    GrowthAndAmount,
    AmountWithConsensus,
    PerShare,
    HeaderFallback,
    PercentGuidance,
    AmountGuidance,
}

const ACTUAL_TEMPLATES: &[Template] = &[
    Template::PercentActual,
    Template::PercentWithPrior,
    Template::AmountActual,
    Template::GrowthAndAmount,
    Template::AmountWithConsensus,
    Template::PerShare,
];

fn write_sentence(b: &mut Builder, rng: &mut ChaCha8Rng, t: Template, g: Granularity, y: i32) {
    let current = FiscalPeriod::explicit(g, y);
    let ptxt = period_text(rng, g, y);
    match t {
        Template::PercentActual => {
            let m = MARGINS.choose(rng).expect("non-empty");
            if !b.free(m.name, &current, Status::Actual) {
                return;
            }
            let v = pct(rng, 5, 60);
            let alias = m.aliases.choose(rng).expect("non-empty");
            if rng.gen_bool(0.5) {
                b.text(&format!("{} in {ptxt} was ", capitalize(alias)));
            } else {
                b.text(&format!("For {ptxt}, {alias} reached "));
            }
            let r = b.number(&format!("{v}%"));
            b.text(". ");
            b.gold(r, m.name, d(&v), d(&v), Unit::Percent, Decimal::ONE, current, actual(Basis::Unstated));
        }
        Template::PercentWithPrior => {
            let m = MARGINS.choose(rng).expect("non-empty");
            let prior = FiscalPeriod { granularity: g, year: y - 1, resolved_from: ResolvedFrom::RelativePrior };
            if !b.free(m.name, &current, Status::Actual) || !b.free(m.name, &prior, Status::Actual) {
                return;
            }
            let (v, w) = (pct(rng, 5, 60), pct(rng, 5, 60));
            let rel = ["last year", "a year ago", "in the prior year"].choose(rng).expect("non-empty");
            b.text(&format!("{} was ", capitalize(m.aliases[0])));
            let r1 = b.number(&format!("{v}%"));
            b.text(&format!(" in {ptxt}, compared with "));
            let r2 = b.number(&format!("{w}%"));
            b.text(&format!(" {rel}. "));
            b.gold(r1, m.name, d(&v), d(&v), Unit::Percent, Decimal::ONE, current, actual(Basis::Unstated));
            b.gold(r2, m.name, d(&w), d(&w), Unit::Percent, Decimal::ONE, prior, actual(Basis::Unstated));
        }
        Template::AmountActual => {
            let m = AMOUNTS.choose(rng).expect("non-empty");
            if !b.free(m.name, &current, Status::Actual) {
                return;
            }
            let a = amount(rng);
            let alias = m.aliases.choose(rng).expect("non-empty");
            b.text(&format!("{} for {ptxt} was ", capitalize(alias)));
            let r = b.number(&a.surface);
            b.text(". ");
            b.gold(r, m.name, a.value, a.value, Unit::USD, a.scale, current, actual(Basis::Unstated));
        }
        Template::GrowthAndAmount => {
            if !b.free("revenue", &current, Status::Actual) || !b.free("revenue_yoy_growth", &current, Status::Actual) {
                return;
            }
            let gr = pct(rng, 1, 40);
            let a = amount(rng);
            b.text(&format!("In {ptxt}, revenue grew "));
            let r1 = b.number(&format!("{gr}%"));
            b.text(" year over year to ");
            let r2 = b.number(&a.surface);
            b.text(". ");
            b.gold(
                r1,
                "revenue_yoy_growth",
                d(&gr),
                d(&gr),
                Unit::Percent,
                Decimal::ONE,
                current,
                actual(Basis::Unstated),
            );
            b.gold(r2, "revenue", a.value, a.value, Unit::USD, a.scale, current, actual(Basis::Unstated));
        }
        Template::AmountWithConsensus => {
            let m = &AMOUNTS[0];
            if !b.free(m.name, &current, Status::Actual) || !b.free("consensus_delta", &current, Status::Actual) {
                return;
            }
            let a = amount(rng);
            let delta = rng.gen_range(5..300);
            let alias = m.aliases.choose(rng).expect("non-empty");
            b.text(&format!("{} of ", capitalize(alias)));
            let r1 = b.number(&a.surface);
            b.text(&format!(" in {ptxt} beat consensus by "));
            let r2 = b.number(&format!("${delta} million"));
            b.text(". ");
            let mil = Decimal::from(1_000_000u64);
            b.gold(r1, m.name, a.value, a.value, Unit::USD, a.scale, current, actual(Basis::Unstated));
            let dv = Decimal::from(delta) * mil;
            b.gold(r2, "consensus_delta", dv, dv, Unit::USD, mil, current, actual(Basis::Unstated));
        }
        Template::PerShare => {
            if !b.free(EPS.name, &current, Status::Actual) {
                return;
            }
            let v = format!("{}.{:02}", rng.gen_range(0..8), rng.gen_range(1..100));
            let (lead, basis) = match rng.gen_range(0..3) {
                0 => ("Adjusted EPS", Basis::NonGAAP),
                1 => ("GAAP diluted EPS", Basis::GAAP),
                _ => ("Diluted EPS", Basis::Unstated),
            };
            b.text(&format!("{lead} for {ptxt} was "));
            let r = b.number(&format!("${v}"));
            b.text(". ");
            b.gold(r, EPS.name, d(&v), d(&v), Unit::USD, Decimal::ONE, current, actual(basis));
        }
        Template::HeaderFallback => {
            let m = MARGINS.choose(rng).expect("non-empty");
            let from_header = FiscalPeriod { granularity: g, year: y, resolved_from: ResolvedFrom::HeaderFallback };
            if !b.free(m.name, &from_header, Status::Actual) {
                return;
            }
            let v = pct(rng, 5, 60);
            b.text(&format!("{} came in at ", capitalize(m.aliases[0])));
            let r = b.number(&format!("{v}%"));
            b.text(". ");
            b.gold(r, m.name, d(&v), d(&v), Unit::Percent, Decimal::ONE, from_header, actual(Basis::Unstated));
        }
        Template::PercentGuidance => {
            let m = MARGINS.choose(rng).expect("non-empty");
            let next = FiscalPeriod::explicit(Granularity::FY, y + 1);
            if !b.free(m.name, &next, Status::Guidance) {
                return;
            }
            let lo = rng.gen_range(5..50);
            let hi = lo + rng.gen_range(1..5);
            let ntxt = period_text(rng, Granularity::FY, y + 1);
            let r = if rng.gen_bool(0.5) {
                b.text(&format!("The company expects {} to be between ", m.aliases[0]));
                let r = b.number(&format!("{lo}–{hi}%"));
                b.text(&format!(" in {ntxt}. "));
                r
            } else {
                b.text(&format!("Outlook: {} of ", m.aliases[0]));
                let r = b.number(&format!("{lo} to {hi}%"));
                b.text(&format!(" for {ntxt}. "));
                r
            };
            b.gold(r, m.name, Decimal::from(lo), Decimal::from(hi), Unit::Percent, Decimal::ONE, next, guidance());
        }
        Template::AmountGuidance => {
            let next = FiscalPeriod::explicit(Granularity::FY, y + 1);
            if !b.free("revenue", &next, Status::Guidance) {
                return;
            }
            let lo = rng.gen_range(10..80);
            let hi = lo + rng.gen_range(1..6);
            let ntxt = period_text(rng, Granularity::FY, y + 1);
            b.text(&format!("For {ntxt}, management expects revenue of "));
            let r = b.number(&format!("${}.{}-{}.{} billion", lo / 10, lo % 10, hi / 10, hi % 10));
            b.text(". ");
            let scale = Decimal::from(1_000_000_000u64);
            let (l, h) = (Decimal::new(lo, 1) * scale, Decimal::new(hi, 1) * scale);
            b.gold(r, "revenue", l, h, Unit::USD, scale, next, guidance());
        }
    }
}

fn questions_for(rng: &mut ChaCha8Rng, r: &KpiRecord, doc_id: &str) -> Vec<GoldQuestion> {
    let shape = MARGINS.iter().chain(AMOUNTS).chain(std::iter::once(&EPS)).find(|m| m.name == r.metric);
    let (ask, basis_filter) = match (r.metric.as_str(), r.qualifier.basis) {
        ("eps", Basis::NonGAAP) => ("adjusted EPS", Some(BasisFilter::NonGAAP)),
        ("eps", Basis::GAAP) => ("GAAP EPS", Some(BasisFilter::GAAP)),
        ("revenue_yoy_growth", _) => ("revenue growth", None),
        ("consensus_delta", _) => ("consensus", None),
        _ => (shape.map_or("revenue", |s| s.ask), None),
    };
    let company = r.company.clone();
    let (g, y) = (r.period.granularity, r.period.year);
    let base = QueryIntent {
        metrics: vec![r.metric.clone()],
        period_filter: Some(PeriodFilter::Period { granularity: g, year: Some(y) }),
        aggregation: Aggregation::None,
        basis_filter,
        status_filter: StatusFilter::ActualOnly,
        company_filter: Some(company.clone()),
        comparison: None,
    };
    let mut out = Vec::new();
    let q = |question: String, intent: QueryIntent| GoldQuestion { question, intent, doc_id: doc_id.to_string() };
    if r.qualifier.status == Status::Guidance {
        out.push(q(
            format!("What is the {g} {y} {ask} guidance for {company}?"),
            QueryIntent { status_filter: StatusFilter::GuidanceOnly, ..base.clone() },
        ));
    } else {
        out.push(q(format!("What was {g} {y} {ask} for {company}?"), base.clone()));
    }
    let extra = rng.gen_range(0..3);
    for _ in 0..extra {
        let open = QueryIntent { period_filter: None, ..base.clone() };
        let (text, intent) = match rng.gen_range(0..3) {
            0 => (
                format!("What was the average {ask} for {company} from {} to {}?", y - 2, y),
                QueryIntent {
                    aggregation: Aggregation::Avg,
                    period_filter: Some(PeriodFilter::YearRange { granularity: None, from: y - 2, to: y }),
                    ..open
                },
            ),
            1 => (
                format!("How many {ask} records are there for {company}?"),
                QueryIntent { aggregation: Aggregation::Count, ..open },
            ),
            _ => (
                format!("What was the latest {ask} for {company}?"),
                QueryIntent { aggregation: Aggregation::Latest, ..open },
            ),
        };
        if !out.iter().any(|o: &GoldQuestion| o.intent == intent) {
            out.push(q(text, intent));
        }
    }
    out
}

/// Generate `n_docs` earnings-release documents with their gold records
/// and a question set. Same seed, same bytes.
pub fn generate_synthetic_corpus(seed: u64, n_docs: usize) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = SyntheticCorpus { seed, documents: Vec::new(), gold: Vec::new(), questions: Vec::new() };
    for i in 0..n_docs {
        let company = TICKERS.choose(&mut rng).expect("non-empty").to_string();
        let g = *[Granularity::Q1, Granularity::Q2, Granularity::Q3, Granularity::Q4, Granularity::FY]
            .choose(&mut rng)
            .expect("non-empty");
        let y = rng.gen_range(2019..=2024);
        let published_on = period_end(g, y) + chrono::Days::new(rng.gen_range(15..45));
        let doc_id = format!("syn-{seed}-{i:04}");
        let has_header = rng.gen_bool(0.5);

        let mut b = Builder { paragraphs: vec![String::new()], pending: Vec::new(), keys: BTreeSet::new() };
        let k = rng.gen_range(2..4);
        let mut plan: Vec<Template> = ACTUAL_TEMPLATES.choose_multiple(&mut rng, k).copied().collect();
        if has_header {
            plan.insert(rng.gen_range(0..=plan.len()), Template::HeaderFallback);
        }
        if i % 4 == 0 || rng.gen_bool(0.1) {
            plan.push(if rng.gen_bool(0.6) { Template::PercentGuidance } else { Template::AmountGuidance });
        }
        let split = if plan.len() > 2 && rng.gen_bool(0.5) { Some(plan.len() / 2) } else { None };
        for (k, t) in plan.iter().enumerate() {
            if Some(k) == split {
                b.paragraphs.push(String::new());
            }
            write_sentence(&mut b, &mut rng, *t, g, y);
        }

        let header = format!("{} RESULTS", period_text(&mut rng, g, y).to_uppercase());
        let mut raw = String::new();
        if has_header {
            raw.push_str(&header);
            raw.push_str("\n\n");
        }
        let paragraphs: Vec<String> =
            b.paragraphs.iter().map(|p| p.trim_end().to_string()).filter(|p| !p.is_empty()).collect();
        raw.push_str(&paragraphs.join("\n\n"));

        let meta = DocumentMeta {
            doc_id: doc_id.clone(),
            source_kind: SourceKind::EarningsRelease,
            company: company.clone(),
            published_on,
            fiscal_year_end_month: 12,
        };
        let doc = load_document(raw.as_bytes(), InputFormat::PlainText, meta).expect("generated document loads");
        let narrative: Vec<_> = doc.sections.iter().filter(|s| s.kind != SectionKind::Header).collect();

        let mut records = Vec::new();
        for p in b.pending {
            let section = narrative
                .iter()
                .find(|s| s.body.trim_end() == b.paragraphs[p.paragraph].trim_end())
                .expect("paragraph maps to a section");
            let mut rules_applied = RuleName::ALL.to_vec();
            rules_applied.sort();
            records.push(KpiRecord {
                metric: p.metric,
                value: p.value,
                value_low: p.low,
                value_high: p.high,
                unit: p.unit,
                scale_applied: p.scale,
                period: p.period,
                qualifier: p.qualifier,
                confidence: Decimal::ONE,
                provenance: Provenance {
                    doc_id: doc_id.clone(),
                    section_id: section.section_id.clone(),
                    char_range: p.range,
                },
                rules_applied,
                qualifier_cues: Vec::new(),
                company: company.clone(),
                published_on,
            });
        }
        for r in &records {
            let qs = questions_for(&mut rng, r, &doc_id);
            corpus.questions.extend(qs);
        }
        corpus.documents.push(doc);
        corpus.gold.push(GoldLabel { doc_id, records });
    }
    corpus
}
