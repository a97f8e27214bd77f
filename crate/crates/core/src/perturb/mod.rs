//! Black-box fairness and robustness perturbations.
//!
//! Every perturbation is a deterministic function of (example, kind, seed):
//! the generator is derived from the seed, the example uid and the kind, so
//! results do not depend on dataset order or on other examples. Gold fields
//! are copied verbatim.

mod fairness;
mod lexicon;
mod robustness;
pub mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{Example, Gold, Prediction};
use crate::metrics::MetricError;
use text::{is_capitalized, Segment};

pub use fairness::perturb_fairness;
pub use lexicon::{FairnessLexicon, LexiconError, MAN, WOMAN};
pub use robustness::{apply_typo, perturb_robustness, TypoOp, EDIT_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transform {
    Contraction,
    Keyboard,
    Ocr,
    Punctuation,
    SpellingError,
    Typos,
    WordCase,
}

impl Transform {
    pub const ALL: [Transform; 7] = [
        Transform::Contraction,
        Transform::Keyboard,
        Transform::Ocr,
        Transform::Punctuation,
        Transform::SpellingError,
        Transform::Typos,
        Transform::WordCase,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Transform::Contraction => "contraction",
            Transform::Keyboard => "keyboard",
            Transform::Ocr => "ocr",
            Transform::Punctuation => "punctuation",
            Transform::SpellingError => "spelling_error",
            Transform::Typos => "typos",
            Transform::WordCase => "word_case",
        }
    }
}

impl FromStr for Transform {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, PerturbError> {
        Transform::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| PerturbError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FairnessKind {
    Race,
    Gender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PerturbationKind {
    Fairness(FairnessKind),
    Robustness(Transform),
}

impl PerturbationKind {
    pub fn all_fairness() -> Vec<PerturbationKind> {
        vec![
            PerturbationKind::Fairness(FairnessKind::Race),
            PerturbationKind::Fairness(FairnessKind::Gender),
        ]
    }

    pub fn all_robustness() -> Vec<PerturbationKind> {
        Transform::ALL.into_iter().map(PerturbationKind::Robustness).collect()
    }

    /// Parses a comma-separated list. `fairness` and `robustness` expand to
    /// every kind of that family.
    pub fn parse_list(s: &str) -> Result<Vec<PerturbationKind>, PerturbError> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "fairness" => out.extend(Self::all_fairness()),
                "robustness" => out.extend(Self::all_robustness()),
                other => out.push(other.parse()?),
            }
        }
        if out.is_empty() {
            return Err(PerturbError::UnknownKind(s.to_string()));
        }
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::Fairness(FairnessKind::Race) => f.write_str("fairness_race"),
            PerturbationKind::Fairness(FairnessKind::Gender) => f.write_str("fairness_gender"),
            PerturbationKind::Robustness(t) => write!(f, "robustness:{}", t.id()),
        }
    }
}

impl FromStr for PerturbationKind {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, PerturbError> {
        let s = s.trim().replace('-', "_");
        match s.as_str() {
            "fairness_race" => Ok(PerturbationKind::Fairness(FairnessKind::Race)),
            "fairness_gender" => Ok(PerturbationKind::Fairness(FairnessKind::Gender)),
            other => {
                let t = other.strip_prefix("robustness:").unwrap_or(other);
                Ok(PerturbationKind::Robustness(t.parse()?))
            }
        }
    }
}

impl TryFrom<String> for PerturbationKind {
    type Error = PerturbError;
    fn try_from(s: String) -> Result<Self, PerturbError> {
        s.parse()
    }
}

impl From<PerturbationKind> for String {
    fn from(k: PerturbationKind) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedEdit {
    pub field: String,
    /// Index of the first edited word within the field.
    pub position: usize,
    pub original: String,
    pub replacement: String,
}

/// A perturbed copy of an example. Same uid and gold as the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedExample {
    pub uid: String,
    pub input: BTreeMap<String, Value>,
    pub gold: Gold,
    pub applied_edits: Vec<AppliedEdit>,
    pub kind: PerturbationKind,
}

impl PerturbedExample {
    pub fn as_example(&self) -> Example {
        Example {
            uid: self.uid.clone(),
            input: self.input.clone(),
            gold: self.gold.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Nothing in the example is eligible for the perturbation.
    NoMatch,
    /// Every match sat inside a protected named entity.
    EntitySkipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("perturbation not applicable: {reason:?}")]
pub struct NotApplicable {
    pub reason: SkipReason,
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown perturbation kind `{0}`")]
    UnknownKind(String),
}

/// Whether a protected entity skips just the matched name or the whole
/// example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NerMode {
    #[default]
    Span,
    Example,
}

/// Finds named entities whose names must not be substituted ("Red Robin").
pub trait EntityRecognizer: Send + Sync {
    /// Word ordinals (index among word segments) covered by an entity.
    fn entity_words(&self, segments: &[Segment]) -> BTreeSet<usize>;
}

/// Treats two or more consecutive capitalized words as an entity.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapitalizedSpanHeuristic;

impl EntityRecognizer for CapitalizedSpanHeuristic {
    fn entity_words(&self, segments: &[Segment]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut run: Vec<usize> = Vec::new();
        let mut ordinal = 0usize;
        let flush = |run: &mut Vec<usize>, out: &mut BTreeSet<usize>| {
            if run.len() >= 2 {
                out.extend(run.iter().copied());
            }
            run.clear();
        };
        for seg in segments {
            if seg.is_word {
                if is_capitalized(&seg.text) {
                    run.push(ordinal);
                } else {
                    flush(&mut run, &mut out);
                }
                ordinal += 1;
            } else if !seg.text.chars().all(char::is_whitespace) {
                flush(&mut run, &mut out);
            }
        }
        flush(&mut run, &mut out);
        out
    }
}

/// Never reports entities.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEntities;

impl EntityRecognizer for NoEntities {
    fn entity_words(&self, _: &[Segment]) -> BTreeSet<usize> {
        BTreeSet::new()
    }
}

pub(crate) fn example_rng(seed: u64, uid: &str, salt: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(uid.as_bytes());
    h.update([0u8]);
    h.update(salt.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(bytes)
}

/// One replacement inside a field, over a range of segments.
#[derive(Debug, Clone)]
pub(crate) struct FieldEdit {
    pub seg_range: Range<usize>,
    pub position: usize,
    pub replacement: String,
}

/// Applies non-overlapping edits to every field and builds the perturbed
/// example.
pub(crate) fn build_perturbed(
    example: &Example,
    kind: PerturbationKind,
    mut edits: BTreeMap<String, (Vec<Segment>, Vec<FieldEdit>)>,
) -> Result<PerturbedExample, NotApplicable> {
    let mut input = example.input.clone();
    let mut applied = Vec::new();
    for (field, (segs, field_edits)) in edits.iter_mut() {
        if field_edits.is_empty() {
            continue;
        }
        field_edits.sort_by_key(|e| e.seg_range.start);
        for e in field_edits.iter() {
            applied.push(AppliedEdit {
                field: field.clone(),
                position: e.position,
                original: text::concat(segs, e.seg_range.clone()),
                replacement: e.replacement.clone(),
            });
        }
        let mut segs = segs.clone();
        for e in field_edits.iter().rev() {
            segs.splice(
                e.seg_range.clone(),
                [Segment {
                    text: e.replacement.clone(),
                    is_word: true,
                }],
            );
        }
        input.insert(field.clone(), Value::String(text::join(&segs)));
    }
    applied.retain(|e| e.original != e.replacement);
    if applied.is_empty() {
        return Err(NotApplicable {
            reason: SkipReason::NoMatch,
        });
    }
    Ok(PerturbedExample {
        uid: example.uid.clone(),
        input,
        gold: example.gold.clone(),
        applied_edits: applied,
        kind,
    })
}

/// Text fields of an example, segmented.
pub(crate) fn text_fields(example: &Example) -> Vec<(String, Vec<Segment>)> {
    example
        .input
        .iter()
        .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), text::segments(s))))
        .collect()
}

pub struct Perturber<'a> {
    pub lexicon: &'a FairnessLexicon,
    pub recognizer: &'a dyn EntityRecognizer,
    pub ner_mode: NerMode,
}

impl<'a> Perturber<'a> {
    pub fn new(lexicon: &'a FairnessLexicon) -> Self {
        Perturber {
            lexicon,
            recognizer: &CapitalizedSpanHeuristic,
            ner_mode: NerMode::Span,
        }
    }

    pub fn perturb(&self, example: &Example, kind: PerturbationKind, seed: u64) -> Result<PerturbedExample, NotApplicable> {
        match kind {
            PerturbationKind::Fairness(k) => {
                perturb_fairness(example, self.lexicon, k, seed, self.recognizer, self.ner_mode)
            }
            PerturbationKind::Robustness(t) => perturb_robustness(example, t, seed),
        }
    }

    /// Perturbs every example with the first applicable kind, trying kinds in
    /// a per-example seeded order. Examples with no applicable kind are
    /// counted in the skip report and left out.
    pub fn perturb_dataset(
        &self,
        dataset: &[Example],
        kinds: &[PerturbationKind],
        seed: u64,
    ) -> Result<PerturbedDataset, PerturbError> {
        if dataset.is_empty() {
            return Err(PerturbError::EmptyDataset);
        }
        if kinds.is_empty() {
            return Err(PerturbError::UnknownKind(String::new()));
        }
        let mut report = SkipReport {
            total: dataset.len(),
            ..SkipReport::default()
        };
        let mut examples = Vec::new();
        for ex in dataset {
            let mut order = kinds.to_vec();
            order.shuffle(&mut example_rng(seed, &ex.uid, "kind-order"));
            let mut entity_hit = false;
            let mut done = None;
            for kind in order {
                match self.perturb(ex, kind, seed) {
                    Ok(p) => {
                        done = Some(p);
                        break;
                    }
                    Err(NotApplicable {
                        reason: SkipReason::EntitySkipped,
                    }) => entity_hit = true,
                    Err(_) => {}
                }
            }
            match done {
                Some(p) => {
                    report.perturbed += 1;
                    examples.push(p);
                }
                None if entity_hit => report.entity_skipped += 1,
                None => report.not_applicable += 1,
            }
        }
        Ok(PerturbedDataset { examples, report })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub total: usize,
    pub perturbed: usize,
    pub not_applicable: usize,
    pub entity_skipped: usize,
}

impl SkipReport {
    pub fn skipped(&self) -> usize {
        self.not_applicable + self.entity_skipped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDataset {
    pub examples: Vec<PerturbedExample>,
    pub report: SkipReport,
}

/// Percentage of examples whose prediction is the same before and after
/// perturbation. Both sides must cover the same uids.
pub fn unchanged_fraction(original: &[Prediction], perturbed: &[Prediction]) -> Result<f64, MetricError> {
    if original.is_empty() && perturbed.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let before: BTreeMap<&str, &Prediction> = original.iter().map(|p| (p.uid.as_str(), p)).collect();
    let after: BTreeMap<&str, &Prediction> = perturbed.iter().map(|p| (p.uid.as_str(), p)).collect();
    if let Some(uid) = before
        .keys()
        .find(|u| !after.contains_key(*u))
        .or_else(|| after.keys().find(|u| !before.contains_key(*u)))
    {
        return Err(MetricError::UidMismatch(uid.to_string()));
    }
    if before.len() != original.len() || after.len() != perturbed.len() {
        return Err(MetricError::UidMismatch("duplicate uid".into()));
    }
    let same = before
        .iter()
        .filter(|(uid, p)| after[*uid].value == p.value)
        .count();
    Ok(100.0 * same as f64 / before.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(uid: &str, text: &str) -> Example {
        Example {
            uid: uid.into(),
            input: BTreeMap::from([("text".to_string(), Value::String(text.into()))]),
            gold: Gold::Label("positive".into()),
        }
    }

    #[test]
    fn kind_strings() {
        for k in PerturbationKind::all_fairness().into_iter().chain(PerturbationKind::all_robustness()) {
            assert_eq!(k.to_string().parse::<PerturbationKind>().unwrap(), k);
        }
        assert_eq!(
            "typos".parse::<PerturbationKind>().unwrap(),
            PerturbationKind::Robustness(Transform::Typos)
        );
        assert_eq!(PerturbationKind::parse_list("fairness,robustness:ocr").unwrap().len(), 3);
        assert!("nope".parse::<PerturbationKind>().is_err());
    }

    #[test]
    fn heuristic_flags_multi_word_capitalized_spans() {
        let segs = text::segments("I've always enjoyed eating at Red Robin, James said");
        let ents = CapitalizedSpanHeuristic.entity_words(&segs);
        // words: I've(0) always(1) enjoyed(2) eating(3) at(4) Red(5) Robin(6) James(7) said(8)
        assert_eq!(ents.into_iter().collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn unchanged_fraction_examples() {
        let orig: Vec<_> = (0..4).map(|i| Prediction::label(&i.to_string(), "a")).collect();
        assert_eq!(unchanged_fraction(&orig, &orig).unwrap(), 100.0);
        let mut one = orig.clone();
        one[2] = Prediction::label("2", "b");
        assert_eq!(unchanged_fraction(&orig, &one).unwrap(), 75.0);
        let all: Vec<_> = (0..4).map(|i| Prediction::label(&i.to_string(), "b")).collect();
        assert_eq!(unchanged_fraction(&orig, &all).unwrap(), 0.0);
        assert_eq!(unchanged_fraction(&[], &[]), Err(MetricError::EmptyDataset));
        assert!(matches!(
            unchanged_fraction(&orig, &all[..3]),
            Err(MetricError::UidMismatch(_))
        ));
    }

    #[test]
    fn dataset_without_hits_is_all_skipped() {
        let lex = FairnessLexicon::bundled();
        let p = Perturber::new(&lex);
        let data = vec![ex("1", "the weather is nice"), ex("2", "it rained")];
        let out = p.perturb_dataset(&data, &PerturbationKind::all_fairness(), 7).unwrap();
        assert!(out.examples.is_empty());
        assert_eq!(out.report.skipped(), 2);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let lex = FairnessLexicon::bundled();
        assert!(matches!(
            Perturber::new(&lex).perturb_dataset(&[], &PerturbationKind::all_fairness(), 1),
            Err(PerturbError::EmptyDataset)
        ));
    }

    #[test]
    fn mixed_dataset_partitions() {
        let lex = FairnessLexicon::bundled();
        let p = Perturber::new(&lex);
        let data = vec![
            ex("1", "James went home"),
            ex("2", "the weather is nice"),
            ex("3", "her sister called"),
            ex("4", "we ate at Red Robin"),
        ];
        let out = p.perturb_dataset(&data, &PerturbationKind::all_fairness(), 3).unwrap();
        assert_eq!(out.examples.len() + out.report.skipped(), data.len());
        assert_eq!(out.report.entity_skipped, 1);
    }

    proptest! {
        #[test]
        fn unchanged_fraction_is_symmetric(
            a in proptest::collection::vec(0u8..3, 1..20),
            b in proptest::collection::vec(0u8..3, 20),
        ) {
            let pa: Vec<_> = a.iter().enumerate().map(|(i, l)| Prediction::label(&i.to_string(), &l.to_string())).collect();
            let pb: Vec<_> = a.iter().enumerate().map(|(i, _)| Prediction::label(&i.to_string(), &b[i].to_string())).collect();
            prop_assert_eq!(unchanged_fraction(&pa, &pb).unwrap(), unchanged_fraction(&pb, &pa).unwrap());
        }
    }
}
