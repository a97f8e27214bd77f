//! Task performance metrics. All return percentages in [0, 100] except
//! [`span_f1`], which scores a single answer in [0, 1].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::dataset::{Example, Prediction, PredictionValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("prediction and gold uids differ at `{0}`")]
    UidMismatch(String),
    #[error("gold label `{0}` is not in the label set")]
    UnknownLabel(String),
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("example `{0}` has the wrong prediction or gold type for this metric")]
    PayloadMismatch(String),
    #[error("unknown performance metric `{0}`")]
    UnknownMetric(String),
}

/// Pairs each gold example with its prediction, requiring identical uid sets.
fn align<'a>(
    preds: &'a [Prediction],
    golds: &'a [Example],
) -> Result<Vec<(&'a Prediction, &'a Example)>, MetricError> {
    if golds.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let by_uid: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.uid.as_str(), p)).collect();
    let mut out = Vec::with_capacity(golds.len());
    for g in golds {
        let p = by_uid
            .get(g.uid.as_str())
            .ok_or_else(|| MetricError::UidMismatch(g.uid.clone()))?;
        out.push((*p, g));
    }
    if by_uid.len() != golds.len() || preds.len() != golds.len() {
        let gold_uids: BTreeSet<&str> = golds.iter().map(|g| g.uid.as_str()).collect();
        let extra = preds
            .iter()
            .find(|p| !gold_uids.contains(p.uid.as_str()))
            .map(|p| p.uid.clone())
            .unwrap_or_else(|| preds[0].uid.clone());
        return Err(MetricError::UidMismatch(extra));
    }
    Ok(out)
}

fn labels_of<'a>(p: &'a Prediction, g: &'a Example) -> Result<(&'a str, &'a str), MetricError> {
    match (&p.value, g.gold.label()) {
        (PredictionValue::Label(pl), Some(gl)) => Ok((pl, gl)),
        _ => Err(MetricError::PayloadMismatch(g.uid.clone())),
    }
}

pub fn accuracy(preds: &[Prediction], golds: &[Example]) -> Result<f64, MetricError> {
    let pairs = align(preds, golds)?;
    let mut correct = 0usize;
    for (p, g) in &pairs {
        let (pl, gl) = labels_of(p, g)?;
        if pl == gl {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / pairs.len() as f64)
}

/// Mean per-label F1 over `label_set`. Labels that are neither gold nor
/// predicted anywhere are left out of the mean.
pub fn macro_f1(preds: &[Prediction], golds: &[Example], label_set: &[String]) -> Result<f64, MetricError> {
    if label_set.is_empty() {
        return Err(MetricError::EmptyLabelSet);
    }
    let pairs = align(preds, golds)?;
    let labels: BTreeSet<&str> = label_set.iter().map(String::as_str).collect();
    // (tp, fp, fn)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = labels.iter().map(|l| (*l, (0, 0, 0))).collect();
    for (p, g) in &pairs {
        let (pl, gl) = labels_of(p, g)?;
        if !labels.contains(gl) {
            return Err(MetricError::UnknownLabel(gl.to_string()));
        }
        if pl == gl {
            counts.get_mut(gl).unwrap().0 += 1;
        } else {
            counts.get_mut(gl).unwrap().2 += 1;
            if let Some(c) = counts.get_mut(pl) {
                c.1 += 1;
            }
        }
    }
    let scored: Vec<f64> = counts
        .values()
        .filter(|(tp, fp, fn_)| tp + fp + fn_ > 0)
        .map(|&(tp, fp, fn_)| {
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    if scored.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * scored.iter().sum::<f64>() / scored.len() as f64)
}

/// Lowercases, strips punctuation, drops the articles a/an/the and collapses
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !(c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())))
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-overlap F1 of an answer against the best-matching gold answer.
pub fn span_f1(pred_answer: &str, gold_answers: &[String]) -> f64 {
    let pred = normalize_answer(pred_answer);
    gold_answers
        .iter()
        .map(|g| token_f1(&pred, &normalize_answer(g)))
        .fold(0.0, f64::max)
}

/// Mean [`span_f1`] over a dataset, as a percentage.
pub fn mean_span_f1(preds: &[Prediction], golds: &[Example]) -> Result<f64, MetricError> {
    let pairs = align(preds, golds)?;
    let mut total = 0.0;
    for (p, g) in &pairs {
        let (PredictionValue::AnswerText(text), Some(answers)) = (&p.value, g.gold.answers()) else {
            return Err(MetricError::PayloadMismatch(g.uid.clone()));
        };
        total += span_f1(text, answers);
    }
    Ok(100.0 * total / pairs.len() as f64)
}

/// Context passed to performance metrics.
#[derive(Debug, Clone, Default)]
pub struct MetricContext<'a> {
    pub labels: Option<&'a [String]>,
}

/// A performance metric computed from predictions.
pub trait PerformanceMetric: Send + Sync {
    fn id(&self) -> &str;
    fn compute(&self, preds: &[Prediction], golds: &[Example], ctx: &MetricContext<'_>) -> Result<f64, MetricError>;
}

struct Accuracy;
struct MacroF1;
struct SpanF1;

impl PerformanceMetric for Accuracy {
    fn id(&self) -> &str {
        "accuracy"
    }
    fn compute(&self, preds: &[Prediction], golds: &[Example], _: &MetricContext<'_>) -> Result<f64, MetricError> {
        accuracy(preds, golds)
    }
}

impl PerformanceMetric for MacroF1 {
    fn id(&self) -> &str {
        "macro_f1"
    }
    fn compute(&self, preds: &[Prediction], golds: &[Example], ctx: &MetricContext<'_>) -> Result<f64, MetricError> {
        match ctx.labels {
            Some(labels) => macro_f1(preds, golds, labels),
            None => {
                let derived: Vec<String> = golds
                    .iter()
                    .filter_map(|g| g.gold.label().map(str::to_string))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                macro_f1(preds, golds, &derived)
            }
        }
    }
}

impl PerformanceMetric for SpanF1 {
    fn id(&self) -> &str {
        "span_f1"
    }
    fn compute(&self, preds: &[Prediction], golds: &[Example], _: &MetricContext<'_>) -> Result<f64, MetricError> {
        mean_span_f1(preds, golds)
    }
}

/// Performance metrics keyed by metric id. New metrics plug in with
/// [`MetricRegistry::register`]; scoring never needs to know about them.
pub struct MetricRegistry {
    metrics: BTreeMap<String, Box<dyn PerformanceMetric>>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        MetricRegistry {
            metrics: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, metric: Box<dyn PerformanceMetric>) {
        self.metrics.insert(metric.id().to_string(), metric);
    }

    pub fn get(&self, id: &str) -> Option<&dyn PerformanceMetric> {
        self.metrics.get(id).map(|m| m.as_ref())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.metrics.contains_key(id)
    }

    pub fn compute(
        &self,
        id: &str,
        preds: &[Prediction],
        golds: &[Example],
        ctx: &MetricContext<'_>,
    ) -> Result<f64, MetricError> {
        self.get(id)
            .ok_or_else(|| MetricError::UnknownMetric(id.to_string()))?
            .compute(preds, golds, ctx)
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut r = MetricRegistry::empty();
        r.register(Box::new(Accuracy));
        r.register(Box::new(MacroF1));
        r.register(Box::new(SpanF1));
        r
    }
}
