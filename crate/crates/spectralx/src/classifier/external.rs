//! Bridge to a classifier running as a child process.
//!
//! The process speaks newline-delimited JSON on stdin/stdout. On startup it
//! receives `{"type":"hello"}` and must answer
//! `{"type":"hello","class_count":C,"input_length":L}`. Each batch is sent as
//! `{"type":"predict","id":N,"signals":[[...],...]}` and answered with
//! `{"type":"probs","id":N,"rows":[[...],...]}` where every row holds C
//! probabilities summing to 1 within 1e-3. Anything else, or silence past the
//! timeout, is reported as an external-classifier error together with the
//! tail of the process's stderr.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const STDERR_TAIL_LINES: usize = 20;
const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Serialize)]
struct HelloRequest {
    r#type: &'static str,
}

#[derive(Deserialize)]
struct HelloReply {
    r#type: String,
    class_count: usize,
    input_length: usize,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    r#type: &'static str,
    id: u64,
    signals: Vec<&'a [f64]>,
}

#[derive(Deserialize)]
struct ProbsReply {
    r#type: String,
    id: u64,
    rows: Vec<Vec<f64>>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Pipe {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Handle to a classifier process spawned from a shell-like command string.
pub struct ExternalClassifier {
    pipe: Mutex<Pipe>,
    stderr_tail: Arc<Mutex<VecDeque<String>>>,
    class_count: usize,
    input_length: usize,
    next_id: Mutex<u64>,
    timeout: Duration,
}

impl ExternalClassifier {
    /// Spawns `command` (split on whitespace) and performs the hello
    /// handshake with the default 60 s reply timeout.
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, DEFAULT_TIMEOUT)
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::invalid("external classifier command is empty"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External(format!("failed to spawn {command:?}: {e}")))?;

        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");

        let (tx, lines) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stderr_tail = Arc::new(Mutex::new(VecDeque::new()));
        let tail = Arc::clone(&stderr_tail);
        std::thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                let mut tail = tail.lock().unwrap();
                if tail.len() == STDERR_TAIL_LINES {
                    tail.pop_front();
                }
                tail.push_back(line);
            }
        });

        let mut this = ExternalClassifier {
            pipe: Mutex::new(Pipe { child, stdin, lines }),
            stderr_tail,
            class_count: 0,
            input_length: 0,
            next_id: Mutex::new(1),
            timeout,
        };
        let reply = this.round_trip(&serde_json::to_string(&HelloRequest { r#type: "hello" })?)?;
        let hello: HelloReply = serde_json::from_str(&reply)
            .map_err(|e| this.fail(format!("bad hello reply {reply:?}: {e}")))?;
        if hello.r#type != "hello" {
            return Err(this.fail(format!("expected hello reply, got type {:?}", hello.r#type)));
        }
        if hello.class_count < 2 || hello.input_length == 0 {
            return Err(this.fail(format!(
                "hello declared class_count {} and input_length {}",
                hello.class_count, hello.input_length
            )));
        }
        this.class_count = hello.class_count;
        this.input_length = hello.input_length;
        Ok(this)
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn input_length(&self) -> usize {
        self.input_length
    }

    fn fail(&self, message: String) -> Error {
        let tail = self.stderr_tail.lock().unwrap();
        if tail.is_empty() {
            Error::External(message)
        } else {
            let joined: Vec<&str> = tail.iter().map(|s| s.as_str()).collect();
            Error::External(format!("{message}; process stderr: {}", joined.join(" | ")))
        }
    }

    /// Writes one request line and waits for one reply line.
    fn round_trip(&self, request: &str) -> Result<String> {
        let mut pipe = self.pipe.lock().unwrap();
        pipe.stdin
            .write_all(request.as_bytes())
            .and_then(|_| pipe.stdin.write_all(b"\n"))
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| self.fail(format!("failed to write to classifier process: {e}")))?;
        match pipe.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(self.fail(format!("failed to read reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(format!(
                "no reply within {:.1} s",
                self.timeout.as_secs_f64()
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                let status = pipe
                    .child
                    .try_wait()
                    .ok()
                    .flatten()
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "still running".into());
                Err(self.fail(format!("classifier process closed stdout ({status})")))
            }
        }
    }

    pub(super) fn predict(&self, batch: &[TimeSeries]) -> Result<Array2<f64>> {
        let id = {
            let mut next = self.next_id.lock().unwrap();
            let id = *next;
            *next += 1;
            id
        };
        let request = PredictRequest {
            r#type: "predict",
            id,
            signals: batch.iter().map(|s| s.values()).collect(),
        };
        let reply = self.round_trip(&serde_json::to_string(&request)?)?;
        let probs: ProbsReply = serde_json::from_str(&reply)
            .map_err(|e| self.fail(format!("bad reply {reply:?}: {e}")))?;
        if probs.r#type != "probs" {
            return Err(self.fail(format!("expected probs reply, got type {:?}", probs.r#type)));
        }
        if probs.id != id {
            return Err(self.fail(format!("reply id {} does not match request id {id}", probs.id)));
        }
        if probs.rows.len() != batch.len() {
            return Err(self.fail(format!(
                "got {} rows for a batch of {}",
                probs.rows.len(),
                batch.len()
            )));
        }
        let mut out = Array2::zeros((batch.len(), self.class_count));
        for (i, row) in probs.rows.iter().enumerate() {
            if row.len() != self.class_count {
                return Err(self.fail(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    self.class_count
                )));
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|p| *p < 0.0)
            {
                return Err(self.fail(format!(
                    "row {i} is not a probability vector (sum {sum})"
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                out[(i, j)] = p;
            }
        }
        Ok(out)
    }
}
