//! Fixture model programs for tests and demos.
//!
//! ```text
//! fixture-model constant  [--label L | --answer A]
//! fixture-model echo      [--field F]                 answer_text = input field
//! fixture-model hash      --labels a,b,c              label picked from a hash of the input
//! fixture-model sleeper   [--delay-ms 100] [--label L]
//! fixture-model ballast   [--mib 512] [--delay-ms 50] [--label L]
//! fixture-model strict    [--label L]                 exits if a second request arrives early
//! fixture-model crash     [--after N | --on-uid U]    exits with status 3 after N answers or on uid U
//! fixture-model malformed [--after N]                 prints a non-JSON line after N answers
//! fixture-model silent                                never sends the ready line
//! ```

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::os::fd::AsRawFd;
use std::process::exit;
use std::thread::sleep;
use std::time::Duration;

use serde_json::{json, Value};

fn opts(args: &[String]) -> HashMap<String, String> {
    let mut out = HashMap::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if let Some(key) = a.strip_prefix("--") {
            out.insert(key.to_string(), it.next().cloned().unwrap_or_default());
        }
    }
    out
}

fn num(opts: &HashMap<String, String>, key: &str, default: u64) -> u64 {
    opts.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// True when more request bytes are already waiting on stdin.
fn pending(reader: &BufReader<io::StdinLock<'_>>) -> bool {
    if !reader.buffer().is_empty() {
        return true;
    }
    let mut fd = libc::pollfd {
        fd: io::stdin().as_raw_fd(),
        events: libc::POLLIN,
        revents: 0,
    };
    // SAFETY: one valid pollfd, count 1.
    let n = unsafe { libc::poll(&mut fd, 1, 20) };
    n > 0 && fd.revents & libc::POLLIN != 0
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().cloned().unwrap_or_else(|| "constant".into());
    let o = opts(&args[1.min(args.len())..]);
    let label = o.get("label").cloned().unwrap_or_else(|| "positive".into());
    let after = num(&o, "after", 0);
    let delay = Duration::from_millis(num(&o, "delay-ms", if mode == "ballast" { 50 } else { 100 }));

    if mode == "silent" {
        sleep(Duration::from_secs(3600));
        return;
    }
    let ballast = if mode == "ballast" {
        let bytes = num(&o, "mib", 512) as usize * (1 << 20);
        Some(vec![1u8; bytes])
    } else {
        None
    };

    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", json!({"status": "ready"})).unwrap();
    out.flush().unwrap();

    let mut reader = BufReader::new(io::stdin().lock());
    let mut answered = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let req: Value = serde_json::from_str(line.trim()).unwrap_or(Value::Null);
        let uid = req.get("uid").cloned().unwrap_or(Value::Null);
        let fields = req.as_object().cloned().unwrap_or_default();

        let response = match mode.as_str() {
            "constant" => match o.get("answer") {
                Some(a) => json!({"uid": uid, "answer_text": a}),
                None => json!({"uid": uid, "label": label}),
            },
            "echo" => {
                let text = match o.get("field") {
                    Some(f) => fields.get(f).and_then(Value::as_str).unwrap_or_default().to_string(),
                    None => fields
                        .iter()
                        .filter(|(k, _)| k.as_str() != "uid")
                        .find_map(|(_, v)| v.as_str())
                        .unwrap_or_default()
                        .to_string(),
                };
                json!({"uid": uid, "answer_text": text})
            }
            "hash" => {
                let labels: Vec<&str> = o.get("labels").map(|l| l.split(',').collect()).unwrap_or(vec!["positive", "negative"]);
                let text: String = fields
                    .iter()
                    .filter(|(k, _)| k.as_str() != "uid")
                    .map(|(_, v)| v.to_string())
                    .collect();
                json!({"uid": uid, "label": labels[(fnv(&text) % labels.len() as u64) as usize]})
            }
            "sleeper" | "ballast" => {
                sleep(delay);
                json!({"uid": uid, "label": label})
            }
            "strict" => {
                if pending(&reader) {
                    eprintln!("fixture-model strict: request arrived before the previous response");
                    exit(4);
                }
                json!({"uid": uid, "label": label})
            }
            "crash" => {
                let hit = match o.get("on-uid") {
                    Some(target) => uid.as_str() == Some(target.as_str()),
                    None => answered >= after,
                };
                if hit {
                    exit(3);
                }
                json!({"uid": uid, "label": label})
            }
            "malformed" => {
                if answered >= after {
                    writeln!(out, "this is not json").unwrap();
                    out.flush().unwrap();
                    continue;
                }
                json!({"uid": uid, "label": label})
            }
            other => {
                eprintln!("fixture-model: unknown mode `{other}`");
                exit(2);
            }
        };
        writeln!(out, "{response}").unwrap();
        out.flush().unwrap();
        answered += 1;
    }
    std::hint::black_box(ballast);
}
