use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::token::{raw_tokens, tokenize, TokenClass, TokenPattern};
use super::TypistError;
use crate::SemanticTypeId;

/// Acceptance threshold on recognition scores.
pub const DEFAULT_TYPE_THRESHOLD: f64 = 0.5;

/// A constant token must appear in at least this share of training values to
/// be kept literally in the learned patterns.
pub const CONSTANT_SUPPORT: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternFrequency {
    pub pattern: TokenPattern,
    pub freq: f64,
}

/// Token-pattern model of one semantic type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeModel {
    pub type_id: SemanticTypeId,
    /// Literal tokens kept as `CONST` in this model's patterns.
    #[serde(default)]
    pub constants: BTreeSet<String>,
    /// Relative frequency of each pattern over the training data, sorted by
    /// pattern.
    pub train_dist: Vec<PatternFrequency>,
    pub n_train: u64,
}

impl TypeModel {
    /// The pattern this model assigns to a value: the generalized pattern
    /// with the model's constants substituted back in.
    pub fn pattern_of(&self, value: &str) -> TokenPattern {
        pattern_with_constants(value, &self.constants)
    }

    pub fn patterns(&self) -> impl Iterator<Item = &TokenPattern> {
        self.train_dist.iter().map(|p| &p.pattern)
    }

    pub fn frequency(&self, pattern: &TokenPattern) -> f64 {
        self.train_dist
            .binary_search_by(|p| p.pattern.cmp(pattern))
            .map(|i| self.train_dist[i].freq)
            .unwrap_or(0.0)
    }

    /// Whether a single value falls on a pattern seen in training.
    pub fn accepts(&self, value: &str) -> bool {
        self.frequency(&self.pattern_of(value)) > 0.0
    }

    fn from_counts(
        type_id: SemanticTypeId,
        constants: BTreeSet<String>,
        counts: BTreeMap<TokenPattern, f64>,
        n: u64,
    ) -> Self {
        let total: f64 = counts.values().sum();
        let train_dist = counts
            .into_iter()
            .filter(|(_, c)| *c > 0.0)
            .map(|(pattern, c)| PatternFrequency {
                pattern,
                freq: c / total,
            })
            .collect();
        TypeModel {
            type_id,
            constants,
            train_dist,
            n_train: n,
        }
    }
}

fn pattern_with_constants(value: &str, constants: &BTreeSet<String>) -> TokenPattern {
    if constants.is_empty() || value.is_empty() {
        return tokenize(value);
    }
    TokenPattern(
        raw_tokens(value)
            .into_iter()
            .map(|t| {
                let literal = !matches!(t.class, TokenClass::Whitespace | TokenClass::Punct(_));
                if literal && constants.contains(&t.text) {
                    TokenClass::Const(t.text)
                } else {
                    t.class
                }
            })
            .collect(),
    )
}

fn frequent_constants(values: &[&str]) -> BTreeSet<String> {
    let mut support: BTreeMap<String, usize> = BTreeMap::new();
    for v in values {
        let distinct: BTreeSet<String> = raw_tokens(v)
            .into_iter()
            .filter(|t| !matches!(t.class, TokenClass::Whitespace | TokenClass::Punct(_)))
            .map(|t| t.text)
            .collect();
        for t in distinct {
            *support.entry(t).or_default() += 1;
        }
    }
    let need = CONSTANT_SUPPORT * values.len() as f64;
    support
        .into_iter()
        .filter(|(_, n)| *n as f64 >= need)
        .map(|(t, _)| t)
        .collect()
}

/// Learns a type model from example values.
pub fn learn_type<S: AsRef<str>>(
    name: impl Into<SemanticTypeId>,
    values: &[S],
) -> Result<TypeModel, TypistError> {
    if values.is_empty() {
        return Err(TypistError::EmptyTrainingSet);
    }
    let values: Vec<&str> = values.iter().map(|v| v.as_ref()).collect();
    // a single value would make every token "frequent"
    let constants = if values.len() > 1 {
        frequent_constants(&values)
    } else {
        BTreeSet::new()
    };
    let mut counts = BTreeMap::new();
    for v in &values {
        *counts.entry(pattern_with_constants(v, &constants)).or_insert(0.0) += 1.0;
    }
    Ok(TypeModel::from_counts(
        name.into(),
        constants,
        counts,
        values.len() as u64,
    ))
}

/// Folds new observations into a model, weighting the old distribution by
/// its training count.
pub fn update_type<S: AsRef<str>>(model: &TypeModel, values: &[S]) -> TypeModel {
    let n = model.n_train as f64;
    let mut counts: BTreeMap<TokenPattern, f64> = model
        .train_dist
        .iter()
        .map(|p| (p.pattern.clone(), p.freq * n))
        .collect();
    for v in values {
        *counts.entry(model.pattern_of(v.as_ref())).or_insert(0.0) += 1.0;
    }
    TypeModel::from_counts(
        model.type_id.clone(),
        model.constants.clone(),
        counts,
        model.n_train + values.len() as u64,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeHypothesis {
    pub type_id: SemanticTypeId,
    pub score: f64,
    pub accepted: bool,
}

/// Ranked type hypotheses for one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub ranked: Vec<TypeHypothesis>,
}

impl RecognitionResult {
    pub fn top(&self) -> Option<&TypeHypothesis> {
        self.ranked.first()
    }

    /// The top hypothesis, if it clears the threshold.
    pub fn accepted_top(&self) -> Option<&TypeHypothesis> {
        self.top().filter(|h| h.accepted)
    }
}

/// `1 - TV(observed, train)` where values falling outside the model's
/// patterns carry their full mass as distance.
pub fn similarity(model: &TypeModel, values: &[&str]) -> f64 {
    let mut observed: BTreeMap<TokenPattern, usize> = BTreeMap::new();
    for v in values {
        *observed.entry(model.pattern_of(v)).or_default() += 1;
    }
    let n = values.len() as f64;
    let mut distance = 0.0;
    for p in &model.train_dist {
        let o = observed.remove(&p.pattern).unwrap_or(0) as f64 / n;
        distance += (o - p.freq).abs();
    }
    // whatever is left never occurred in training
    distance += observed.values().sum::<usize>() as f64 / n;
    (1.0 - distance / 2.0).clamp(0.0, 1.0)
}

pub fn recognize_column<'a, S, I>(
    values: &[S],
    known: I,
    threshold: f64,
) -> Result<RecognitionResult, TypistError>
where
    S: AsRef<str>,
    I: IntoIterator<Item = &'a TypeModel>,
{
    if values.is_empty() {
        return Err(TypistError::NoValues);
    }
    let values: Vec<&str> = values.iter().map(|v| v.as_ref()).collect();
    let mut ranked: Vec<TypeHypothesis> = known
        .into_iter()
        .map(|m| {
            let score = similarity(m, &values);
            TypeHypothesis {
                type_id: m.type_id.clone(),
                score,
                accepted: score >= threshold,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.type_id.cmp(&b.type_id))
    });
    Ok(RecognitionResult { ranked })
}
