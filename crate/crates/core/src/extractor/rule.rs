use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::html::{collapse, decode_entities};
use super::model::{DocumentFormat, DocumentModel};
use super::ExtractError;
use crate::typist::raw_tokens;
use crate::Value;

/// Longest token context considered by the landmark fallback.
pub const MAX_CONTEXT: usize = 8;
/// Widest span, in tokens, a landmark rule will extract.
const MAX_SPAN: usize = 64;
/// Above this many candidate predicates only small conjunctions are tried.
const FULL_LATTICE_LIMIT: usize = 12;

/// Values the user pasted, one inner vector per pasted row.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSelection {
    pub rows: Vec<Vec<String>>,
}

impl ExampleSelection {
    pub fn new<S: AsRef<str>>(rows: &[Vec<S>]) -> Self {
        ExampleSelection {
            rows: rows
                .iter()
                .map(|r| r.iter().map(|v| v.as_ref().to_string()).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    Equals { field: usize, value: String },
    NonEmpty { field: usize },
}

impl Predicate {
    pub fn holds(&self, fields: &[Value]) -> bool {
        match self {
            Predicate::Equals { field, value } => fields.get(*field).and_then(|v| v.as_deref()) == Some(value),
            Predicate::NonEmpty { field } => fields.get(*field).is_some_and(|v| v.is_some()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub prefix: Vec<String>,
    pub suffix: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RuleForm {
    Projection { filter: Vec<Predicate>, fields: Vec<usize> },
    Landmark { fields: Vec<Landmark> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub form: RuleForm,
    pub generality_rank: usize,
    /// Record indices the rule must extract.
    pub positives: BTreeSet<usize>,
    /// Record indices the rule must not extract.
    pub negatives: BTreeSet<usize>,
}

impl ExtractionRule {
    /// Every record, every field: the rule sources are ingested with.
    pub fn all_records(model: &DocumentModel) -> Self {
        ExtractionRule {
            form: RuleForm::Projection {
                filter: Vec::new(),
                fields: (0..model.arity).collect(),
            },
            generality_rank: 0,
            positives: BTreeSet::new(),
            negatives: BTreeSet::new(),
        }
    }
}

/// Output of a rule: rows in document order, with the record each came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedTable {
    pub rows: Vec<Vec<Value>>,
    pub records: Vec<Option<usize>>,
}

impl ExtractedTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn norm(s: &str) -> String {
    collapse(s)
}

/// The field tuple every example row can be read from, choosing the
/// lexicographically smallest when several fit, and the record each example
/// came from.
fn locate(model: &DocumentModel, examples: &ExampleSelection) -> Option<(Vec<usize>, Vec<usize>)> {
    let width = examples.rows.first()?.len();
    if width == 0 || examples.rows.iter().any(|r| r.len() != width) {
        return None;
    }
    let tuples_of = |row: &[String], rec: &[Value]| -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new()];
        for v in row {
            let v = norm(v);
            let options: Vec<usize> = (0..rec.len()).filter(|&f| rec[f].as_deref() == Some(v.as_str())).collect();
            out = out
                .into_iter()
                .flat_map(|t| {
                    options.iter().map(move |&f| {
                        let mut t = t.clone();
                        t.push(f);
                        t
                    })
                })
                .collect();
            if out.is_empty() || out.len() > 4096 {
                break;
            }
        }
        out
    };
    let mut common: Option<BTreeSet<Vec<usize>>> = None;
    for row in &examples.rows {
        let here: BTreeSet<Vec<usize>> = model
            .records
            .iter()
            .flat_map(|r| tuples_of(row, &r.fields))
            .filter(|t| t.len() == width)
            .collect();
        common = Some(match common {
            None => here,
            Some(c) => c.intersection(&here).cloned().collect(),
        });
    }
    let fields = common?.into_iter().next()?;
    let mut used = BTreeSet::new();
    let mut positives = Vec::new();
    for row in &examples.rows {
        let matches = |r: usize| {
            fields
                .iter()
                .zip(row)
                .all(|(&f, v)| model.records[r].fields[f].as_deref() == Some(norm(v).as_str()))
        };
        let all: Vec<usize> = (0..model.records.len()).filter(|&r| matches(r)).collect();
        let pick = all.iter().copied().find(|r| !used.contains(r)).unwrap_or(all[0]);
        used.insert(pick);
        positives.push(pick);
    }
    Some((fields, positives))
}

fn candidate_predicates(model: &DocumentModel, positives: &BTreeSet<usize>) -> Vec<Predicate> {
    let mut out = Vec::new();
    for f in 0..model.arity {
        let values: BTreeSet<&Value> = positives.iter().map(|&r| &model.records[r].fields[f]).collect();
        if values.iter().all(|v| v.is_some()) {
            if values.len() == 1 {
                let value = values.into_iter().next().unwrap().clone().unwrap();
                out.push(Predicate::Equals { field: f, value });
            }
            out.push(Predicate::NonEmpty { field: f });
        }
    }
    out
}

fn select(model: &DocumentModel, filter: &[Predicate]) -> Vec<usize> {
    (0..model.records.len())
        .filter(|&r| filter.iter().all(|p| p.holds(&model.records[r].fields)))
        .collect()
}

/// Every distinct projection hypothesis that keeps all `positives` and drops
/// all `negatives`, most general first: more output records, then fewer
/// conjuncts, then predicate order. Hypotheses with the same output collapse
/// onto the one with the fewest conjuncts.
fn lattice(
    model: &DocumentModel,
    fields: &[usize],
    positives: &BTreeSet<usize>,
    negatives: &BTreeSet<usize>,
) -> Vec<ExtractionRule> {
    let preds = candidate_predicates(model, positives);
    let n = preds.len();
    let max_size = if n > FULL_LATTICE_LIMIT { 3 } else { n };
    let mut subsets: Vec<Vec<usize>> = vec![Vec::new()];
    for size in 1..=max_size {
        let mut next = Vec::new();
        let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(s) = stack.pop() {
            if s.len() == size {
                next.push(s);
                continue;
            }
            let from = s.last().map_or(0, |l| l + 1);
            for i in (from..n).rev() {
                let mut t = s.clone();
                t.push(i);
                stack.push(t);
            }
        }
        next.sort();
        subsets.extend(next);
    }
    let mut scored: Vec<(std::cmp::Reverse<usize>, usize, Vec<usize>, Vec<usize>)> = subsets
        .into_iter()
        .filter_map(|s| {
            let filter: Vec<Predicate> = s.iter().map(|&i| preds[i].clone()).collect();
            let out = select(model, &filter);
            let ok = positives.iter().all(|p| out.binary_search(p).is_ok())
                && negatives.iter().all(|q| out.binary_search(q).is_err());
            ok.then_some((std::cmp::Reverse(out.len()), s.len(), s, out))
        })
        .collect();
    scored.sort();
    let mut seen = BTreeSet::new();
    scored
        .into_iter()
        .filter(|(_, _, _, out)| seen.insert(out.clone()))
        .enumerate()
        .map(|(rank, (_, _, s, _))| ExtractionRule {
            form: RuleForm::Projection {
                filter: s.iter().map(|&i| preds[i].clone()).collect(),
                fields: fields.to_vec(),
            },
            generality_rank: rank,
            positives: positives.clone(),
            negatives: negatives.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Tok {
    text: String,
    is_tag: bool,
}

fn landmark_tokens(model: &DocumentModel) -> Vec<Tok> {
    let mut out = Vec::new();
    let push_text = |s: &str, out: &mut Vec<Tok>| {
        let decoded = decode_entities(s);
        for t in raw_tokens(&decoded) {
            let text = if t.text.chars().all(char::is_whitespace) { " ".to_string() } else { t.text };
            if text == " " && out.last().is_some_and(|l: &Tok| l.text == " ") {
                continue;
            }
            out.push(Tok { text, is_tag: false });
        }
    };
    if model.format != DocumentFormat::Html {
        push_text(&model.raw, &mut out);
        return out;
    }
    let mut rest = model.raw.as_str();
    while !rest.is_empty() {
        match rest.find('<') {
            Some(0) => {
                let end = rest.find('>').map_or(rest.len(), |e| e + 1);
                let inner = rest[1..end].trim_end_matches('>');
                let (slash, body) = match inner.strip_prefix('/') {
                    Some(b) => ("/", b),
                    None => ("", inner),
                };
                let name: String = body
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '!' || *c == '-')
                    .collect();
                out.push(Tok {
                    text: format!("<{slash}{}>", name.to_ascii_lowercase()),
                    is_tag: true,
                });
                rest = &rest[end..];
            }
            Some(i) => {
                push_text(&rest[..i], &mut out);
                rest = &rest[i..];
            }
            None => {
                push_text(rest, &mut out);
                rest = "";
            }
        }
    }
    out
}

fn span_text(toks: &[Tok]) -> String {
    collapse(&toks.iter().map(|t| t.text.as_str()).collect::<String>())
}

/// First token span whose text equals `value`.
fn find_occurrence(toks: &[Tok], value: &str) -> Option<(usize, usize)> {
    let value = collapse(value);
    if value.is_empty() {
        return None;
    }
    for i in 0..toks.len() {
        if toks[i].is_tag || toks[i].text == " " {
            continue;
        }
        let mut acc = String::new();
        for j in i..toks.len().min(i + MAX_SPAN) {
            if toks[j].is_tag {
                break;
            }
            acc.push_str(&toks[j].text);
            let c = collapse(&acc);
            if c == value && toks[j].text != " " {
                return Some((i, j + 1));
            }
            if c.len() > value.len() {
                break;
            }
        }
    }
    None
}

fn landmark_extract(toks: &[Tok], lm: &Landmark) -> Vec<String> {
    let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
    let (p, s) = (lm.prefix.len(), lm.suffix.len());
    let mut out = Vec::new();
    let mut i = p;
    while i < toks.len() {
        if texts[i - p..i] != lm.prefix.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            i += 1;
            continue;
        }
        let mut end = None;
        for j in i + 1..=toks.len().min(i + MAX_SPAN) {
            if j + s <= toks.len() && texts[j..j + s] == lm.suffix.iter().map(String::as_str).collect::<Vec<_>>()[..] {
                end = Some(j);
                break;
            }
            if toks[j - 1].is_tag {
                break;
            }
        }
        match end {
            Some(j) => {
                let v = span_text(&toks[i..j]);
                if !v.is_empty() {
                    out.push(v);
                }
                i = j.max(i + 1);
            }
            None => i += 1,
        }
    }
    out
}

fn common_suffix(contexts: &[Vec<String>]) -> Vec<String> {
    let mut n = 0;
    let min = contexts.iter().map(Vec::len).min().unwrap_or(0);
    while n < min {
        let t = &contexts[0][contexts[0].len() - 1 - n];
        if contexts.iter().all(|c| &c[c.len() - 1 - n] == t) {
            n += 1;
        } else {
            break;
        }
    }
    contexts[0][contexts[0].len() - n..].to_vec()
}

fn common_prefix(contexts: &[Vec<String>]) -> Vec<String> {
    let mut n = 0;
    let min = contexts.iter().map(Vec::len).min().unwrap_or(0);
    while n < min && contexts.iter().all(|c| c[n] == contexts[0][n]) {
        n += 1;
    }
    contexts[0][..n].to_vec()
}

/// Per-field landmark: start from the longest shared contexts and drop outer
/// tokens while the rule still extracts exactly the same values.
fn induce_landmark(toks: &[Tok], values: &[&str]) -> Option<Landmark> {
    let spans: Vec<(usize, usize)> = values.iter().map(|v| find_occurrence(toks, v)).collect::<Option<_>>()?;
    let lefts: Vec<Vec<String>> = spans
        .iter()
        .map(|&(i, _)| toks[i.saturating_sub(MAX_CONTEXT)..i].iter().map(|t| t.text.clone()).collect())
        .collect();
    let rights: Vec<Vec<String>> = spans
        .iter()
        .map(|&(_, j)| toks[j..toks.len().min(j + MAX_CONTEXT)].iter().map(|t| t.text.clone()).collect())
        .collect();
    let mut lm = Landmark {
        prefix: common_suffix(&lefts),
        suffix: common_prefix(&rights),
    };
    if lm.prefix.is_empty() || lm.suffix.is_empty() {
        return None;
    }
    let base = landmark_extract(toks, &lm);
    if !values.iter().all(|v| base.contains(&collapse(v))) {
        return None;
    }
    let consistent = |lm: &Landmark| !lm.prefix.is_empty() && !lm.suffix.is_empty() && landmark_extract(toks, lm) == base;
    loop {
        let shorter_prefix = Landmark {
            prefix: lm.prefix[1..].to_vec(),
            suffix: lm.suffix.clone(),
        };
        if consistent(&shorter_prefix) {
            lm = shorter_prefix;
            continue;
        }
        let shorter_suffix = Landmark {
            prefix: lm.prefix.clone(),
            suffix: lm.suffix[..lm.suffix.len() - 1].to_vec(),
        };
        if consistent(&shorter_suffix) {
            lm = shorter_suffix;
            continue;
        }
        return Some(lm);
    }
}

/// Ranked extraction rules consistent with the pasted examples. Projection
/// hypotheses are tried first; landmark rules are the fallback when the
/// examples cannot be aligned to model fields.
pub fn induce_rule(model: &DocumentModel, examples: &ExampleSelection) -> Result<Vec<ExtractionRule>, ExtractError> {
    if examples.rows.is_empty() || examples.rows.iter().all(|r| r.is_empty()) {
        return Err(ExtractError::NoExamples);
    }
    if let Some((fields, positives)) = locate(model, examples) {
        let rules = lattice(model, &fields, &positives.into_iter().collect(), &BTreeSet::new());
        if !rules.is_empty() {
            return Ok(rules);
        }
    }
    let width = examples.rows.iter().map(Vec::len).max().unwrap_or(0);
    let toks = landmark_tokens(model);
    let mut landmarks = Vec::with_capacity(width);
    for f in 0..width {
        let values: Vec<&str> = examples.rows.iter().filter_map(|r| r.get(f).map(String::as_str)).collect();
        landmarks.push(induce_landmark(&toks, &values).ok_or(ExtractError::NoConsistentRule)?);
    }
    Ok(vec![ExtractionRule {
        form: RuleForm::Landmark { fields: landmarks },
        generality_rank: 0,
        positives: BTreeSet::new(),
        negatives: BTreeSet::new(),
    }])
}

/// Applies a rule to the document it will extract from.
pub fn apply_rule(rule: &ExtractionRule, model: &DocumentModel) -> Result<ExtractedTable, ExtractError> {
    match &rule.form {
        RuleForm::Projection { filter, fields } => {
            let max_field = fields.iter().chain(filter.iter().map(|p| match p {
                Predicate::Equals { field, .. } | Predicate::NonEmpty { field } => field,
            }));
            if let Some(&f) = max_field.max() {
                if f >= model.arity && !model.records.is_empty() {
                    return Err(ExtractError::RuleMismatch(format!(
                        "field {f} is outside the document's {} fields",
                        model.arity
                    )));
                }
            }
            let recs = select(model, filter);
            Ok(ExtractedTable {
                rows: recs
                    .iter()
                    .map(|&r| fields.iter().map(|&f| model.records[r].fields[f].clone()).collect())
                    .collect(),
                records: recs.into_iter().map(Some).collect(),
            })
        }
        RuleForm::Landmark { fields } => {
            let toks = landmark_tokens(model);
            let columns: Vec<Vec<String>> = fields.iter().map(|lm| landmark_extract(&toks, lm)).collect();
            let n = columns.iter().map(Vec::len).min().unwrap_or(0);
            Ok(ExtractedTable {
                rows: (0..n).map(|i| columns.iter().map(|c| Some(c[i].clone())).collect()).collect(),
                records: vec![None; n],
            })
        }
    }
}

/// Moves to the most general projection hypothesis that keeps every
/// positive (original examples plus `kept`) and drops every negative. A rule
/// that already satisfies the constraints is returned as is.
pub fn refine_rule(
    model: &DocumentModel,
    rule: &ExtractionRule,
    kept: &[usize],
    removed: &[usize],
) -> Result<ExtractionRule, ExtractError> {
    let RuleForm::Projection { filter, fields } = &rule.form else {
        return Err(ExtractError::RuleMismatch("landmark rules cannot be refined by record".into()));
    };
    if let Some(&r) = kept.iter().find(|r| removed.contains(r)) {
        return Err(ExtractError::Contradictory(r));
    }
    let current = select(model, filter);
    if let Some(&r) = kept.iter().chain(removed).find(|r| current.binary_search(r).is_err()) {
        return Err(ExtractError::NotInOutput(r));
    }
    let mut positives = rule.positives.clone();
    positives.extend(kept.iter().copied());
    let mut negatives = rule.negatives.clone();
    negatives.extend(removed.iter().copied());
    if let Some(r) = positives.intersection(&negatives).next() {
        return Err(ExtractError::Contradictory(*r));
    }
    let satisfied = positives.iter().all(|p| current.binary_search(p).is_ok())
        && negatives.iter().all(|q| current.binary_search(q).is_err());
    if satisfied {
        return Ok(ExtractionRule {
            positives,
            negatives,
            ..rule.clone()
        });
    }
    lattice(model, fields, &positives, &negatives)
        .into_iter()
        .next()
        .ok_or(ExtractError::NoSeparatingHypothesis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::infer_document_model;

    const CITIES: [&str; 12] = [
        "Margate", "Coconut Creek", "Davie", "Coconut Creek", "Weston", "Tamarac", "Margate", "Davie", "Weston",
        "Tamarac", "Plantation", "Sunrise",
    ];

    fn doc(junk: bool) -> DocumentModel {
        let mut s = String::from("<table><tr><th>Name</th><th>Street</th><th>City</th></tr>");
        if junk {
            s.push_str("<tr><td>Updated 2024</td><td></td><td></td></tr>");
        }
        for (i, c) in CITIES.iter().enumerate() {
            s.push_str(&format!("<tr><td>Shelter {i}</td><td>{} Main St</td><td>{c}</td></tr>", 100 + i));
        }
        s.push_str("</table>");
        infer_document_model(s.as_bytes(), DocumentFormat::Html).unwrap()
    }

    fn row(i: usize) -> Vec<String> {
        vec![format!("Shelter {i}"), format!("{} Main St", 100 + i), CITIES[i].to_string()]
    }

    #[test]
    fn two_rows_generalise_to_the_whole_list() {
        let m = doc(false);
        let rules = induce_rule(&m, &ExampleSelection { rows: vec![row(0), row(2)] }).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(apply_rule(&rules[0], &m).unwrap().len(), 12);
    }

    #[test]
    fn same_city_rows_give_two_hypotheses() {
        let m = doc(false);
        let rules = induce_rule(&m, &ExampleSelection { rows: vec![row(1), row(3)] }).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].generality_rank, 0);
        assert_eq!(apply_rule(&rules[0], &m).unwrap().len(), 12);
        let narrow = apply_rule(&rules[1], &m).unwrap();
        assert_eq!(narrow.rows, vec![row(1), row(3)].into_iter().map(|r| r.into_iter().map(Some).collect::<Vec<_>>()).collect::<Vec<_>>());
        assert_eq!(
            rules[1].form,
            RuleForm::Projection {
                filter: vec![Predicate::Equals { field: 2, value: "Coconut Creek".into() }],
                fields: vec![0, 1, 2]
            }
        );
    }

    #[test]
    fn covering_every_record_reproduces_the_document() {
        let m = doc(false);
        let ex = ExampleSelection { rows: (0..12).map(row).collect() };
        let rules = induce_rule(&m, &ex).unwrap();
        assert_eq!(rules.len(), 1);
        let t = apply_rule(&rules[0], &m).unwrap();
        let all: Vec<Vec<Value>> = m.records.iter().map(|r| r.fields.clone()).collect();
        assert_eq!(t.rows, all);
    }

    #[test]
    fn projection_keeps_paste_order() {
        let m = doc(false);
        let ex = ExampleSelection::new(&[vec!["Davie", "Shelter 2"], vec!["Weston", "Shelter 4"]]);
        let rules = induce_rule(&m, &ex).unwrap();
        let RuleForm::Projection { fields, .. } = &rules[0].form else { panic!() };
        assert_eq!(fields, &[2, 0]);
    }

    #[test]
    fn unaligned_value_falls_back_to_landmarks() {
        let m = doc(false);
        // "Main" is a fragment of the Street field, not a whole field
        let ex = ExampleSelection::new(&[vec!["102"], vec!["105"]]);
        let rules = induce_rule(&m, &ex).unwrap();
        assert!(matches!(rules[0].form, RuleForm::Landmark { .. }));
        let t = apply_rule(&rules[0], &m).unwrap();
        let got: Vec<String> = t.rows.iter().map(|r| r[0].clone().unwrap()).collect();
        assert!(got.contains(&"102".to_string()) && got.contains(&"105".to_string()));
        assert_eq!(got.len(), 12);
    }

    #[test]
    fn value_absent_from_document_is_an_error() {
        let m = doc(false);
        let ex = ExampleSelection::new(&[vec!["Nowhere at all"]]);
        assert!(matches!(induce_rule(&m, &ex), Err(ExtractError::NoConsistentRule)));
        assert!(matches!(induce_rule(&m, &ExampleSelection::default()), Err(ExtractError::NoExamples)));
    }

    #[test]
    fn removing_a_header_artifact() {
        let m = doc(true);
        assert_eq!(m.records.len(), 13);
        let rules = induce_rule(&m, &ExampleSelection { rows: vec![row(0), row(2)] }).unwrap();
        assert_eq!(apply_rule(&rules[0], &m).unwrap().len(), 13);
        let refined = refine_rule(&m, &rules[0], &[], &[0]).unwrap();
        let t = apply_rule(&refined, &m).unwrap();
        assert_eq!(t.len(), 12);
        assert!(!t.records.contains(&Some(0)));
    }

    #[test]
    fn keeping_everything_leaves_the_rule_alone() {
        let m = doc(false);
        let rules = induce_rule(&m, &ExampleSelection { rows: vec![row(1), row(3)] }).unwrap();
        let all: Vec<usize> = (0..12).collect();
        let same = refine_rule(&m, &rules[0], &all, &[]).unwrap();
        assert_eq!(same.form, rules[0].form);
        let narrow = refine_rule(&m, &rules[1], &[1, 3], &[]).unwrap();
        assert_eq!(narrow.form, rules[1].form);
    }

    #[test]
    fn contradictory_and_unseparable_feedback() {
        let m = doc(false);
        let rules = induce_rule(&m, &ExampleSelection { rows: vec![row(1), row(3)] }).unwrap();
        assert!(matches!(refine_rule(&m, &rules[0], &[4], &[4]), Err(ExtractError::Contradictory(4))));
        assert!(matches!(refine_rule(&m, &rules[0], &[], &[1]), Err(ExtractError::Contradictory(1))));
        assert!(matches!(refine_rule(&m, &rules[1], &[0], &[]), Err(ExtractError::NotInOutput(0))));
        let r = refine_rule(&m, &rules[0], &[0], &[5]).unwrap_err();
        assert!(matches!(r, ExtractError::NoSeparatingHypothesis));
    }

    #[test]
    fn empty_record_document_gives_empty_table() {
        let mut m = doc(false);
        m.records.clear();
        let rule = ExtractionRule {
            form: RuleForm::Projection { filter: vec![], fields: vec![0] },
            generality_rank: 0,
            positives: BTreeSet::new(),
            negatives: BTreeSet::new(),
        };
        assert!(apply_rule(&rule, &m).unwrap().is_empty());
    }
}
