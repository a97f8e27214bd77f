use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Gold annotation: a class label or a list of acceptable answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Label(String),
    Answers(Vec<String>),
}

impl Gold {
    pub fn label(&self) -> Option<&str> {
        match self {
            Gold::Label(l) => Some(l),
            Gold::Answers(_) => None,
        }
    }

    pub fn answers(&self) -> Option<&[String]> {
        match self {
            Gold::Answers(a) => Some(a),
            Gold::Label(_) => None,
        }
    }
}

/// One evaluation example. `input` holds the task-specific fields sent to the
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub uid: String,
    pub input: BTreeMap<String, Value>,
    pub gold: Gold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionValue {
    Label(String),
    AnswerText(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub uid: String,
    #[serde(flatten)]
    pub value: PredictionValue,
}

impl Prediction {
    pub fn label(uid: &str, label: &str) -> Self {
        Prediction {
            uid: uid.to_string(),
            value: PredictionValue::Label(label.to_string()),
        }
    }

    pub fn answer(uid: &str, text: &str) -> Self {
        Prediction {
            uid: uid.to_string(),
            value: PredictionValue::AnswerText(text.to_string()),
        }
    }

    pub fn text(&self) -> &str {
        match &self.value {
            PredictionValue::Label(s) | PredictionValue::AnswerText(s) => s,
        }
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Reads a JSONL file, skipping blank lines. Errors carry the 1-based line
/// number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_wire_shape() {
        let p = Prediction::label("u1", "positive");
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"uid":"u1","label":"positive"}"#);
        let a: Prediction = serde_json::from_str(r#"{"uid":"q","answer_text":"Paris"}"#).unwrap();
        assert_eq!(a, Prediction::answer("q", "Paris"));
    }

    #[test]
    fn example_gold_variants() {
        let e: Example =
            serde_json::from_str(r#"{"uid":"1","input":{"text":"hi"},"gold":"positive"}"#).unwrap();
        assert_eq!(e.gold.label(), Some("positive"));
        let q: Example = serde_json::from_str(
            r#"{"uid":"2","input":{"context":"c","question":"q"},"gold":["a","b"]}"#,
        )
        .unwrap();
        assert_eq!(q.gold.answers().unwrap().len(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, "{\"uid\":\"1\",\"input\":{},\"gold\":\"a\"}\n\nnot json\n").unwrap();
        match read_jsonl::<Example>(&path) {
            Err(JsonlError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
