//! Synthetic labeled email corpus and its ground-truth mock script.

use std::collections::BTreeSet;
use std::path::Path;

use ctxrt::llm::{MockRule, MockScript};
use ctxrt::model::{write_jsonl, FieldValue, Record};
use ctxrt::{Error, Result};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First filter: does the email touch the planted keyword family.
pub const ENTITY_PREDICATE: &str = "mentions one of the special purpose entities Raptor, LJM, Chewco or Whitewing";
/// Second filter: first-hand correspondence rather than a newsletter.
pub const FIRST_HAND_PREDICATE: &str = "is first-hand business correspondence rather than an automated newsletter";
pub const EMAIL_QUERY: &str = "Find the emails that discuss the special purpose entities \
Raptor, LJM, Chewco or Whitewing in first-hand business correspondence, and return their ids.";

const ENTITIES: [&str; 4] = ["Raptor", "LJM", "Chewco", "Whitewing"];
const PEOPLE: [&str; 8] = [
    "jeff.skilling",
    "andrew.fastow",
    "sherron.watkins",
    "ben.glisan",
    "rick.buy",
    "vince.kaminski",
    "kristina.mordaunt",
    "michael.kopper",
];
const RELEVANT_LINES: [&str; 6] = [
    "The {e} hedge needs restructuring before the quarter closes.",
    "Legal wants the {e} equity commitments reviewed again tomorrow.",
    "Please hold the {e} unwind memo until Andy signs off.",
    "Credit capacity in {e} is short by roughly {n} million.",
    "Accounting flagged the {e} valuation as aggressive; call me.",
    "Board presentation must cover the {e} transactions in detail.",
];
const DISTRACTOR_LINES: [&str; 4] = [
    "Anyone want my two Raptors tickets for Friday's game?",
    "The kids loved the raptor exhibit at the science museum.",
    "Fantasy league update: I'm trading for a Raptors guard.",
    "Bird-watching club spotted a raptor near the parking deck.",
];
const FILLER_LINES: [&str; 10] = [
    "Gas desk volumes were up {n} percent this week.",
    "Reminder: the floor meeting moved to 3pm.",
    "Can you forward the Houston pipeline capacity numbers?",
    "Lunch order is due by eleven, sushi or barbecue.",
    "The West power book closed flat yesterday.",
    "Please submit expense reports by end of month.",
    "IT will patch the trading servers on Saturday night.",
    "Weather models show a cold front for the Northeast.",
    "Draft contract for the Dabhol plant is attached.",
    "Quarterly offsite agenda attached, comments welcome.",
];
const NEWSLETTER_LINES: [&str; 3] = [
    "ENERGY DAILY: natural gas futures slip on mild forecasts.",
    "Weekly digest: regulatory filings and market headlines.",
    "Automated notice: your mailbox is almost full.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmailKind {
    Relevant,
    /// Shares a surface keyword with the entity family but is off topic.
    Distractor,
    Filler,
    Newsletter,
}

#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub seed: u64,
    pub rho: f64,
    pub records: Vec<Record>,
    pub kinds: Vec<EmailKind>,
    pub relevant: BTreeSet<String>,
    /// Ground truth of [`ENTITY_PREDICATE`] per record id.
    pub passes_entity: BTreeSet<String>,
    /// Ground-truth replies for both filters, for every model.
    pub script: MockScript,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of the given kind, in id order.
    pub fn ids_of(&self, kind: EmailKind) -> Vec<&str> {
        self.records.iter().zip(&self.kinds).filter(|(_, k)| **k == kind).map(|(r, _)| r.id.as_str()).collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        write_jsonl(std::io::BufWriter::new(file), &self.records)
    }
}

fn fill(template: &str, entity: &str, rng: &mut ChaCha8Rng) -> String {
    template.replace("{e}", entity).replace("{n}", &rng.gen_range(2..40).to_string())
}

fn email_id(i: usize) -> String {
    format!("e{i:04}")
}

/// Generates `n` emails of which exactly `round(rho * n)` are relevant.
pub fn gen_corpus(seed: u64, n: usize, rho: f64) -> Result<LabeledCorpus> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Validation(format!("relevant fraction {rho} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_relevant = (rho * n as f64).round() as usize;
    let n_distractor = (n - n_relevant).min((n / 25).max(2));
    let n_newsletter = (n - n_relevant - n_distractor) / 10;

    let mut kinds = vec![EmailKind::Filler; n];
    let picks = index::sample(&mut rng, n, n_relevant + n_distractor + n_newsletter).into_vec();
    for (j, i) in picks.into_iter().enumerate() {
        kinds[i] = if j < n_relevant {
            EmailKind::Relevant
        } else if j < n_relevant + n_distractor {
            EmailKind::Distractor
        } else {
            EmailKind::Newsletter
        };
    }

    let mut records = Vec::with_capacity(n);
    let mut relevant = BTreeSet::new();
    for (i, kind) in kinds.iter().enumerate() {
        let id = email_id(i);
        let sender = match kind {
            EmailKind::Newsletter => "newsletter@energydaily.example".to_string(),
            _ => format!("{}@northwind.example", PEOPLE.choose(&mut rng).expect("people")),
        };
        let mut lines = Vec::new();
        let subject = match kind {
            EmailKind::Relevant => {
                let entity = ENTITIES.choose(&mut rng).expect("entities");
                lines.push(fill(RELEVANT_LINES.choose(&mut rng).expect("lines"), entity, &mut rng));
                lines.push(fill(FILLER_LINES.choose(&mut rng).expect("lines"), "", &mut rng));
                relevant.insert(id.clone());
                format!("RE: {entity} follow-up")
            }
            EmailKind::Distractor => {
                lines.push(DISTRACTOR_LINES.choose(&mut rng).expect("lines").to_string());
                "weekend plans".to_string()
            }
            EmailKind::Filler => {
                for _ in 0..2 {
                    lines.push(fill(FILLER_LINES.choose(&mut rng).expect("lines"), "", &mut rng));
                }
                "update".to_string()
            }
            EmailKind::Newsletter => {
                lines.push(NEWSLETTER_LINES.choose(&mut rng).expect("lines").to_string());
                "Energy Daily digest".to_string()
            }
        };
        let date = format!("2001-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28));
        records.push(Record::new(
            id.clone(),
            vec![
                ("message_id".to_string(), FieldValue::text(format!("<{seed}.{i}@northwind.example>"))),
                ("sender".to_string(), FieldValue::text(sender)),
                ("date".to_string(), FieldValue::text(date)),
                ("subject".to_string(), FieldValue::text(subject)),
                ("text".to_string(), FieldValue::text(lines.join("\n"))),
            ],
        )?);
    }

    // Every relevant email passes both filters and nothing else passes the
    // first, so the first filter's survivors are exactly the relevant set.
    let passes_entity = relevant.clone();
    let mut script = MockScript::new();
    let marker = |r: &Record| format!("message_id: {}", r.get("message_id").expect("message id"));
    for r in records.iter().filter(|r| relevant.contains(r.id.as_str())) {
        script.push(MockRule::contains(format!("PREDICATE: {ENTITY_PREDICATE}"), "yes").and_contains(marker(r)));
        script.push(MockRule::contains(format!("PREDICATE: {FIRST_HAND_PREDICATE}"), "yes").and_contains(marker(r)));
    }
    script.push(MockRule::contains(format!("PREDICATE: {ENTITY_PREDICATE}"), "no"));
    script.push(MockRule::contains(format!("PREDICATE: {FIRST_HAND_PREDICATE}"), "no"));

    Ok(LabeledCorpus { seed, rho, records, kinds, relevant, passes_entity, script })
}
