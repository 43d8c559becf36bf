//! Minimal external model speaking the line-delimited JSON bridge
//! protocol, for tests and demos.
//!
//! Modes: `constant [value]`, `first-column`, `short` (one prediction too
//! few), `slow <millis>`, `garbage`.

use std::io::{self, BufRead, Write};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("constant");
    let param: Option<f64> = args.get(1).and_then(|s| s.parse().ok());
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Ok(msg) = serde_json::from_str::<Value>(&line) else {
            eprintln!("stub: unparsable request");
            std::process::exit(1);
        };
        let reply = match msg["type"].as_str() {
            Some("hello") => json!({"type": "ready"}),
            Some("bye") => break,
            Some("predict") => {
                let rows = msg["inputs"].as_array().cloned().unwrap_or_default();
                let mut values: Vec<f64> = match mode {
                    "first-column" => rows
                        .iter()
                        .map(|r| r[0].as_f64().unwrap_or(f64::NAN))
                        .collect(),
                    _ => vec![param.unwrap_or(0.5); rows.len()],
                };
                match mode {
                    "short" => {
                        values.pop();
                    }
                    "slow" => thread::sleep(Duration::from_millis(param.unwrap_or(5000.0) as u64)),
                    "garbage" => {
                        let _ = writeln!(out, "not json");
                        let _ = out.flush();
                        continue;
                    }
                    _ => {}
                }
                json!({"type": "predictions", "values": values})
            }
            _ => json!({"type": "error"}),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
