//! Line protocol client.
//!
//! The model prints `{"status":"ready"}` once loaded, then answers one JSON
//! request per line with one JSON response per line, in order.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use evalboard_core::dataset::{Prediction, PredictionValue};
use serde_json::{Map, Value};

use crate::error::RunError;

/// How often a blocked read wakes up to check abort conditions.
const POLL: Duration = Duration::from_millis(20);

pub fn encode_request(uid: &str, input: &BTreeMap<String, Value>) -> String {
    let mut obj = Map::new();
    obj.insert("uid".into(), Value::String(uid.to_string()));
    for (k, v) in input {
        if k != "uid" {
            obj.insert(k.clone(), v.clone());
        }
    }
    Value::Object(obj).to_string()
}

/// Parses one response line. `line_no` is the 1-based line of the model's
/// output, used in errors.
pub fn parse_response(line: &str, expected_uid: &str, line_no: usize) -> Result<Prediction, RunError> {
    let violation = |reason: String| RunError::ProtocolViolation { line: line_no, reason };
    let v: Value = serde_json::from_str(line).map_err(|e| violation(format!("not JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| violation("response is not a JSON object".into()))?;
    let uid = obj
        .get("uid")
        .and_then(Value::as_str)
        .ok_or_else(|| violation("missing string `uid`".into()))?;
    if uid != expected_uid {
        return Err(violation(format!("expected uid `{expected_uid}`, got `{uid}`")));
    }
    let label = obj.get("label");
    let answer = obj.get("answer_text");
    let value = match (label, answer) {
        (Some(Value::String(l)), None) => PredictionValue::Label(l.clone()),
        (None, Some(Value::String(a))) => PredictionValue::AnswerText(a.clone()),
        (Some(_), Some(_)) => return Err(violation("both `label` and `answer_text` set".into())),
        _ => return Err(violation("expected a string `label` or `answer_text`".into())),
    };
    Ok(Prediction {
        uid: uid.to_string(),
        value,
    })
}

/// A running model program.
pub struct ModelProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    line_no: usize,
}

impl ModelProcess {
    /// Spawns the program and waits for the ready line.
    pub fn spawn(exec: &str, args: &[String], handshake_timeout: Duration) -> Result<Self, RunError> {
        let mut child = Command::new(exec)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| RunError::Spawn {
                exec: exec.to_string(),
                source,
            })?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut p = ModelProcess {
            child,
            stdin,
            lines: rx,
            line_no: 0,
        };
        let line = p.next_line(handshake_timeout, &mut || None).map_err(|e| match e {
            RunError::Timeout { .. } => RunError::Handshake(format!(
                "no ready line within {:.0} s",
                handshake_timeout.as_secs_f64()
            )),
            other => other,
        })?;
        let ready = serde_json::from_str::<Value>(&line)
            .ok()
            .is_some_and(|v| v.get("status").and_then(Value::as_str) == Some("ready"));
        if !ready {
            return Err(RunError::Handshake(format!("line 1 is not {{\"status\":\"ready\"}}: {line}")));
        }
        Ok(p)
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    pub fn is_alive(&mut self) -> bool {
        matches!(self.child.try_wait(), Ok(None))
    }

    fn crashed(&mut self) -> RunError {
        // give the process a moment to be reaped so the status is known
        let deadline = Instant::now() + Duration::from_millis(500);
        let status = loop {
            match self.child.try_wait() {
                Ok(Some(s)) => break Some(s),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => break None,
            }
        };
        RunError::ModelCrashed {
            status: status.map_or_else(|| "unknown".to_string(), |s| s.to_string()),
        }
    }

    /// Waits for the next output line. `abort` is polled while waiting and
    /// can end the wait with an error.
    fn next_line(
        &mut self,
        timeout: Duration,
        abort: &mut dyn FnMut() -> Option<RunError>,
    ) -> Result<String, RunError> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(e) = abort() {
                return Err(e);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RunError::Timeout {
                    limit_secs: timeout.as_secs_f64(),
                });
            }
            match self.lines.recv_timeout(POLL.min(deadline - now)) {
                Ok(Ok(line)) => {
                    self.line_no += 1;
                    return Ok(line);
                }
                Ok(Err(e)) => return Err(RunError::Io(e.to_string())),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Err(self.crashed()),
            }
        }
    }

    /// One request/response round trip.
    pub fn request(
        &mut self,
        uid: &str,
        input: &BTreeMap<String, Value>,
        timeout: Duration,
        abort: &mut dyn FnMut() -> Option<RunError>,
    ) -> Result<Prediction, RunError> {
        let mut line = encode_request(uid, input);
        line.push('\n');
        let sent = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::Error::from(std::io::ErrorKind::BrokenPipe)),
        };
        if sent.is_err() {
            return Err(self.crashed());
        }
        let reply = self.next_line(timeout, abort)?;
        parse_response(&reply, uid, self.line_no)
    }

    /// Closes stdin and waits briefly for a clean exit, then kills.
    pub fn shutdown(mut self) -> Option<ExitStatus> {
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match self.child.try_wait() {
                Ok(Some(s)) => return Some(s),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => break,
            }
        }
        let _ = self.child.kill();
        self.child.wait().ok()
    }
}

impl Drop for ModelProcess {
    fn drop(&mut self) {
        if matches!(self.child.try_wait(), Ok(None)) {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shape() {
        let input = BTreeMap::from([("text".to_string(), Value::String("hi".into()))]);
        assert_eq!(encode_request("u1", &input), r#"{"text":"hi","uid":"u1"}"#);
    }

    #[test]
    fn response_parsing() {
        assert_eq!(
            parse_response(r#"{"uid":"a","label":"positive"}"#, "a", 2).unwrap(),
            Prediction::label("a", "positive")
        );
        assert_eq!(
            parse_response(r#"{"uid":"a","answer_text":"Paris"}"#, "a", 2).unwrap(),
            Prediction::answer("a", "Paris")
        );
        for bad in [
            "nope",
            "[]",
            r#"{"uid":"b","label":"x"}"#,
            r#"{"uid":"a"}"#,
            r#"{"uid":"a","label":1}"#,
            r#"{"uid":"a","label":"x","answer_text":"y"}"#,
        ] {
            match parse_response(bad, "a", 7) {
                Err(RunError::ProtocolViolation { line, .. }) => assert_eq!(line, 7),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }
}
