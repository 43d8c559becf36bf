//! Bridge to a pre-trained model living in another process.
//!
//! The child speaks newline-delimited JSON on its standard streams:
//!
//! ```text
//! -> {"type":"hello","n_features":p}        <- {"type":"ready"}
//! -> {"type":"predict","inputs":[[..],..]}  <- {"type":"predictions","values":[..]}
//! -> {"type":"bye"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{BridgeError, Error, Result};
use crate::loss::PredictiveModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModelHandle {
    pub executable_path: PathBuf,
    pub startup_args: Vec<String>,
    pub request_timeout: Duration,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Reply {
    Ready,
    Predictions { values: Vec<f64> },
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    poisoned: bool,
}

impl Session {
    fn send(&mut self, message: &serde_json::Value) -> Result<(), BridgeError> {
        let stdin = self.stdin.as_mut().ok_or(BridgeError::Closed)?;
        let mut line = message.to_string();
        line.push('\n');
        stdin.write_all(line.as_bytes()).map_err(BridgeError::Io)?;
        stdin.flush().map_err(BridgeError::Io)
    }

    fn receive(&mut self, timeout: Duration) -> Result<Reply, BridgeError> {
        let line = match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(BridgeError::Io(e)),
            Err(RecvTimeoutError::Timeout) => return Err(BridgeError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(BridgeError::Closed),
        };
        serde_json::from_str(&line).map_err(|e| {
            let shown: String = line.chars().take(120).collect();
            BridgeError::Malformed(format!("{e} in `{shown}`"))
        })
    }

    fn shut_down(&mut self) {
        if !self.poisoned {
            let _ = self.send(&json!({"type": "bye"}));
        }
        self.stdin = None;
        let grace = std::time::Instant::now() + Duration::from_millis(500);
        while std::time::Instant::now() < grace {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A live session with an external model process. Requests are serialized
/// through one session; any protocol failure ends it.
pub struct ExternalModel {
    handle: ExternalModelHandle,
    n_features: usize,
    id: String,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("handle", &self.handle)
            .field("n_features", &self.n_features)
            .finish()
    }
}

impl ExternalModel {
    /// Starts the process and completes the handshake.
    pub fn start(handle: ExternalModelHandle, n_features: usize) -> Result<Self> {
        let mut child = Command::new(&handle.executable_path)
            .args(&handle.startup_args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BridgeError::Spawn {
                path: handle.executable_path.clone(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().ok_or(BridgeError::Closed)?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut session = Session {
            child,
            stdin,
            lines: rx,
            poisoned: false,
        };
        let handshake = session
            .send(&json!({"type": "hello", "n_features": n_features}))
            .and_then(|_| session.receive(handle.request_timeout))
            .and_then(|reply| match reply {
                Reply::Ready => Ok(()),
                Reply::Predictions { .. } => Err(BridgeError::Malformed(
                    "expected `ready` during handshake".into(),
                )),
            });
        if let Err(e) = handshake {
            session.poisoned = true;
            session.shut_down();
            return Err(e.into());
        }
        let id = format!("external:{}", handle.executable_path.display());
        Ok(Self {
            handle,
            n_features,
            id,
            session: Mutex::new(session),
        })
    }

    pub fn handle(&self) -> &ExternalModelHandle {
        &self.handle
    }

    fn request(
        &self,
        session: &mut Session,
        inputs: &DMatrix<f64>,
    ) -> Result<Vec<f64>, BridgeError> {
        let rows: Vec<Vec<f64>> = inputs
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        session.send(&json!({"type": "predict", "inputs": rows}))?;
        match session.receive(self.handle.request_timeout)? {
            Reply::Predictions { values } if values.len() == inputs.nrows() => Ok(values),
            Reply::Predictions { values } => Err(BridgeError::LengthMismatch {
                expected: inputs.nrows(),
                got: values.len(),
            }),
            Reply::Ready => Err(BridgeError::Malformed("expected `predictions`".into())),
        }
    }
}

impl PredictiveModel for ExternalModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        if inputs.ncols() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features,
                inputs.ncols()
            )));
        }
        let mut session = self.session.lock().map_err(|_| BridgeError::Poisoned)?;
        if session.poisoned {
            return Err(BridgeError::Poisoned.into());
        }
        self.request(&mut session, inputs).map_err(|e| {
            session.poisoned = true;
            let _ = session.child.kill();
            e.into()
        })
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(session) = self.session.get_mut() {
            session.shut_down();
        }
    }
}
