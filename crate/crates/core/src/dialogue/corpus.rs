//! Case corpus: JSON loading with field-level errors and the synthetic generator.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gmm::Category;

/// Lowercased whitespace tokens with surrounding punctuation removed.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRecord {
    pub id: String,
    pub text: String,
    pub category: Category,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub case_id: String,
    pub facts: Vec<FactRecord>,
    pub reference_keys: Vec<String>,
}

impl CaseFile {
    pub fn category_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for f in &self.facts {
            counts[f.category.index()] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub cases: Vec<CaseFile>,
    /// Fact counts per category in (positive, neutral, negative) order.
    pub category_counts: [usize; 3],
    pub warnings: Vec<String>,
}

fn parse_err(case_id: &str, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        case_id: case_id.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

fn str_field<'a>(obj: &'a Value, case_id: &str, field: &str) -> Result<&'a str> {
    obj.get(field)
        .ok_or_else(|| parse_err(case_id, field, "missing"))?
        .as_str()
        .ok_or_else(|| parse_err(case_id, field, "expected a string"))
}

fn string_list(v: &Value, case_id: &str, field: &str) -> Result<Vec<String>> {
    v.as_array()
        .ok_or_else(|| parse_err(case_id, field, "expected an array of strings"))?
        .iter()
        .map(|s| {
            s.as_str()
                .map(str::to_string)
                .ok_or_else(|| parse_err(case_id, field, "expected an array of strings"))
        })
        .collect()
}

fn parse_fact(v: &Value, case_id: &str, i: usize) -> Result<FactRecord> {
    let at = |f: &str| format!("facts[{i}].{f}");
    if !v.is_object() {
        return Err(parse_err(case_id, format!("facts[{i}]"), "expected an object"));
    }
    let id = str_field(v, case_id, "id").map_err(|_| parse_err(case_id, at("id"), "missing or not a string"))?;
    let text = str_field(v, case_id, "text").map_err(|_| parse_err(case_id, at("text"), "missing or not a string"))?;
    if text.trim().is_empty() {
        return Err(parse_err(case_id, at("text"), "empty text"));
    }
    let category = str_field(v, case_id, "category")
        .map_err(|_| parse_err(case_id, at("category"), "missing or not a string"))?
        .parse::<Category>()
        .map_err(|m| parse_err(case_id, at("category"), m))?;
    let keywords = match v.get("keywords") {
        None => Vec::new(),
        Some(k) => string_list(k, case_id, &at("keywords"))?,
    };
    let toks: HashSet<String> = tokens(text).into_iter().collect();
    for k in &keywords {
        if !toks.contains(&k.to_lowercase()) {
            return Err(parse_err(
                case_id,
                at("keywords"),
                format!("keyword `{k}` is not a token of the text"),
            ));
        }
    }
    Ok(FactRecord {
        id: id.to_string(),
        text: text.to_string(),
        category,
        keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
    })
}

fn parse_case(v: &Value, index: usize, warnings: &mut Vec<String>) -> Result<CaseFile> {
    let fallback = format!("#{index}");
    if !v.is_object() {
        return Err(parse_err(&fallback, "", "expected an object"));
    }
    let case_id = str_field(v, &fallback, "case_id")?.to_string();
    let facts = v
        .get("facts")
        .ok_or_else(|| parse_err(&case_id, "facts", "missing"))?
        .as_array()
        .ok_or_else(|| parse_err(&case_id, "facts", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, f)| parse_fact(f, &case_id, i))
        .collect::<Result<Vec<_>>>()?;
    if facts.is_empty() {
        return Err(parse_err(&case_id, "facts", "no facts"));
    }
    let mut ids = HashSet::new();
    for f in &facts {
        if !ids.insert(f.id.as_str()) {
            return Err(parse_err(&case_id, "facts.id", format!("duplicate fact id `{}`", f.id)));
        }
    }
    let reference_keys = match v.get("reference_keys") {
        None | Some(Value::Null) => facts.iter().map(|f| f.text.clone()).collect(),
        Some(k) => {
            let keys = string_list(k, &case_id, "reference_keys")?;
            if keys.is_empty() {
                return Err(parse_err(&case_id, "reference_keys", "empty"));
            }
            keys
        }
    };
    let case = CaseFile {
        case_id,
        facts,
        reference_keys,
    };
    let counts = case.category_counts();
    for c in Category::ALL {
        if counts[c.index()] == 0 {
            warnings.push(format!("case `{}` has no {} facts", case.case_id, c));
        }
    }
    Ok(case)
}

pub fn parse_corpus(text: &str) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus {
        cases: Vec::new(),
        category_counts: [0; 3],
        warnings: Vec::new(),
    };
    if text.trim().is_empty() {
        return Ok(out);
    }
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Schema(format!("corpus is not JSON: {e}")))?;
    let items = root
        .as_array()
        .ok_or_else(|| Error::Schema("corpus must be a JSON array of cases".into()))?;
    let mut seen = HashSet::new();
    for (i, v) in items.iter().enumerate() {
        let case = parse_case(v, i, &mut out.warnings)?;
        if !seen.insert(case.case_id.clone()) {
            out.warnings.push(format!("duplicate case id `{}`", case.case_id));
        }
        for (n, c) in out.category_counts.iter_mut().zip(case.category_counts()) {
            *n += c;
        }
        out.cases.push(case);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn save_corpus(cases: &[CaseFile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(cases).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const NAMES: &[&str] = &[
    "Zhao", "Qian", "Sun", "Li", "Zhou", "Wu", "Zheng", "Wang", "Feng", "Chen", "Chu", "Wei", "Jiang", "Shen", "Han",
    "Yang", "Zhu", "Qin", "Xu", "He",
];
const PLACES: &[&str] = &[
    "night market",
    "parking garage",
    "bus terminal",
    "jewelry store",
    "warehouse",
    "hotel lobby",
    "pharmacy",
    "train station",
    "office tower",
    "riverside park",
];
const ITEMS: &[&str] = &[
    "phone", "wallet", "laptop", "bicycle", "necklace", "handbag", "camera", "watch", "scooter", "tablet",
];
const TIMES: &[&str] = &[
    "Monday evening",
    "Tuesday morning",
    "Wednesday night",
    "Thursday noon",
    "Friday afternoon",
    "Saturday dawn",
    "Sunday midnight",
];

// Slots: {d} defendant, {v} victim, {p} place, {i} item, {t} time, {a} amount.
// The bracketed word after `|` lists the keyword slots.
const POSITIVE: &[&str] = &[
    "{d} returned the {i} to {v} shortly after the incident|d,i",
    "{d} voluntarily surrendered to police on {t}|d,t",
    "{d} paid {a} yuan in compensation to {v}|d,a",
    "{d} had no previous criminal record before the {p} incident|d,p",
    "{d} cooperated fully with investigators at the {p}|d,p",
    "{d} wrote a letter of apology to {v}|d,v",
    "{v} signed a statement forgiving {d}|v,d",
    "{d} supports two children and an elderly parent|d",
];
const NEUTRAL: &[&str] = &[
    "{d} was at the {p} on {t}|p,t",
    "{v} reported the missing {i} to the {p} security desk|v,i",
    "the {i} was valued at {a} yuan by an appraiser|i,a",
    "{d} and {v} had met twice before at the {p}|d,v",
    "a camera near the {p} recorded people entering on {t}|p,t",
    "{d} works as a delivery driver near the {p}|d,p",
    "{v} left the {p} alone on {t}|v,p",
];
const NEGATIVE: &[&str] = &[
    "{d} took the {i} from {v} without permission|d,i",
    "{d} threatened {v} with a knife at the {p}|d,v",
    "{d} sold the stolen {i} for {a} yuan|i,a",
    "{d} fled the {p} after being confronted on {t}|d,p",
    "{d} had been convicted of theft two years earlier|d",
    "{d} destroyed the {p} surveillance footage|d,p",
    "{d} lied to police about being at the {p}|d,p",
];

struct Slots {
    d: String,
    v: String,
    p: String,
    i: String,
    t: String,
    a: String,
}

impl Slots {
    fn value(&self, key: &str) -> &str {
        match key {
            "d" => &self.d,
            "v" => &self.v,
            "p" => &self.p,
            "i" => &self.i,
            "t" => &self.t,
            _ => &self.a,
        }
    }
}

fn render(template: &str, slots: &Slots) -> (String, Vec<String>) {
    let (body, keys) = template.split_once('|').expect("template has keyword slots");
    let mut text = body.to_string();
    for key in ["d", "v", "p", "i", "t", "a"] {
        text = text.replace(&format!("{{{key}}}"), slots.value(key));
    }
    let mut first = text.chars();
    let text = match first.next() {
        Some(c) => c.to_uppercase().chain(first).collect::<String>() + ".",
        None => text,
    };
    let keywords = keys.split(',').flat_map(|k| tokens(slots.value(k))).collect::<Vec<_>>();
    (text, keywords)
}

/// Per-category fact counts for a case of `n` facts, roughly 0.4 / 0.35 / 0.25.
pub fn category_split(n: usize) -> [usize; 3] {
    let neg = ((0.25 * n as f64).round() as usize).max(1);
    let neu = ((0.35 * n as f64).round() as usize).max(1);
    [n - neg - neu, neu, neg]
}

/// Synthetic legal-flavored cases with 6 to 12 facts each and every category present.
pub fn generate_cases<R: Rng + ?Sized>(n_cases: usize, rng: &mut R) -> Vec<CaseFile> {
    (0..n_cases)
        .map(|c| {
            let mut names: Vec<&str> = NAMES.choose_multiple(rng, 2).copied().collect();
            names.shuffle(rng);
            let slots = Slots {
                d: format!("Mr. {}", names[0]),
                v: format!("Ms. {}", names[1]),
                p: PLACES.choose(rng).expect("non-empty").to_string(),
                i: ITEMS.choose(rng).expect("non-empty").to_string(),
                t: TIMES.choose(rng).expect("non-empty").to_string(),
                a: (rng.random_range(5..=200) * 100).to_string(),
            };
            let n = rng.random_range(6..=12);
            let split = category_split(n);
            let mut facts = Vec::with_capacity(n);
            for (cat, (pool, count)) in Category::ALL
                .iter()
                .zip([POSITIVE, NEUTRAL, NEGATIVE].iter().zip(split))
            {
                for template in pool.choose_multiple(rng, count) {
                    let (text, keywords) = render(template, &slots);
                    facts.push(FactRecord {
                        id: format!("c{c:03}-f{:02}", facts.len()),
                        text,
                        category: *cat,
                        keywords,
                    });
                }
            }
            facts.shuffle(rng);
            let reference_keys = facts.iter().map(|f| f.text.clone()).collect();
            CaseFile {
                case_id: format!("case-{c:03}"),
                facts,
                reference_keys,
            }
        })
        .collect()
}
