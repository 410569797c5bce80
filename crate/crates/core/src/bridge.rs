//! External programs as model oracles over a line-oriented pipe protocol.
//!
//! A request is a header line `P <rows> <cols>` (predictions) or
//! `J <rows> <cols>` (jacobian) followed by `rows` lines of `cols`
//! space-separated floats. The reply to `P` is `rows` lines holding one float;
//! the reply to `J` is `rows` lines holding `cols` floats. Floats are written
//! with 17 significant digits so values round-trip exactly.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{EffectError, Result};
use crate::oracle::ModelOracle;

pub const DEFAULT_BATCH_SIZE: usize = 4096;
pub const DEFAULT_TIMEOUT_SECS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeMode {
    PredictOnly,
    PredictAndJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModelConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub mode: BridgeMode,
    pub batch_size: usize,
    /// Seconds allowed for one request/response exchange.
    pub timeout_secs: f64,
}

impl ExternalModelConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            mode: BridgeMode::PredictOnly,
            batch_size: DEFAULT_BATCH_SIZE,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), BridgeError> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err(BridgeError::Config("command is empty".into()));
        }
        if self.batch_size == 0 {
            return Err(BridgeError::Config("batch_size must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BridgeError::Config(format!(
                "timeout must be a positive number of seconds, got {}",
                self.timeout_secs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("invalid external model config: {0}")]
    Config(String),

    #[error("could not start `{command}`: {source}")]
    Spawn { command: String, source: io::Error },

    #[error("model process did not answer within {seconds} s ({received} of {expected} reply lines read)")]
    Timeout {
        seconds: f64,
        received: usize,
        expected: usize,
    },

    #[error("malformed reply line {line}: {reason}: {content:?}")]
    Malformed {
        line: usize,
        content: String,
        reason: String,
    },

    #[error("model process exited early: {received} of {expected} reply lines received")]
    PrematureExit { received: usize, expected: usize },

    #[error("pipe I/O failed: {0}")]
    Io(#[from] io::Error),

    #[error("model process is unusable after an earlier protocol failure")]
    Poisoned,
}

/// Formats one float for the wire.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows<W: Write>(out: &mut W, x: ArrayView2<'_, f64>) -> io::Result<()> {
    let mut line = String::new();
    for row in x.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format_float(*v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Writes a full request: header plus rows.
pub fn write_request<W: Write>(out: &mut W, kind: char, x: ArrayView2<'_, f64>) -> io::Result<()> {
    writeln!(out, "{kind} {} {}", x.nrows(), x.ncols())?;
    write_rows(out, x)?;
    out.flush()
}

fn parse_floats(line: &str, expected: usize, line_no: usize) -> std::result::Result<Vec<f64>, BridgeError> {
    let malformed = |reason: String| BridgeError::Malformed {
        line: line_no,
        content: line.to_string(),
        reason,
    };
    let vals = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| malformed(format!("{t:?} is not a number")))
        })
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    if vals.len() != expected {
        return Err(malformed(format!("expected {expected} values, found {}", vals.len())));
    }
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(malformed(format!("non-finite value {v}")));
    }
    Ok(vals)
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
    poisoned: bool,
}

impl Session {
    fn exchange(
        &mut self,
        kind: char,
        x: ArrayView2<'_, f64>,
        per_line: usize,
        timeout: Duration,
    ) -> std::result::Result<Vec<Vec<f64>>, BridgeError> {
        if self.poisoned {
            return Err(BridgeError::Poisoned);
        }
        let out = self.try_exchange(kind, x, per_line, timeout);
        if out.is_err() {
            self.poisoned = true;
        }
        out
    }

    fn try_exchange(
        &mut self,
        kind: char,
        x: ArrayView2<'_, f64>,
        per_line: usize,
        timeout: Duration,
    ) -> std::result::Result<Vec<Vec<f64>>, BridgeError> {
        let expected = x.nrows();
        let stdin = self.stdin.as_mut().ok_or(BridgeError::Poisoned)?;
        if let Err(e) = write_request(stdin, kind, x) {
            return Err(if e.kind() == io::ErrorKind::BrokenPipe {
                BridgeError::PrematureExit { received: 0, expected }
            } else {
                BridgeError::Io(e)
            });
        }
        let deadline = Instant::now() + timeout;
        let mut rows = Vec::with_capacity(expected);
        while rows.len() < expected {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(line)) => rows.push(parse_floats(&line, per_line, rows.len() + 1)?),
                Ok(Err(e)) => return Err(BridgeError::Io(e)),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(BridgeError::Timeout {
                        seconds: timeout.as_secs_f64(),
                        received: rows.len(),
                        expected,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(BridgeError::PrematureExit {
                        received: rows.len(),
                        expected,
                    })
                }
            }
        }
        Ok(rows)
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved child exit on its own.
        self.stdin.take();
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

/// A child process serving predictions. Concurrent callers are serialized.
pub struct ExternalOracle {
    config: ExternalModelConfig,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("config", &self.config)
            .finish()
    }
}

impl ExternalOracle {
    pub fn spawn(config: ExternalModelConfig) -> std::result::Result<Self, BridgeError> {
        config.validate()?;
        let mut child = Command::new(&config.command[0])
            .args(&config.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BridgeError::Spawn {
                command: config.command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            config,
            session: Mutex::new(Session {
                child,
                stdin: Some(stdin),
                lines: rx,
                poisoned: false,
            }),
        })
    }

    pub fn config(&self) -> &ExternalModelConfig {
        &self.config
    }

    fn batched(
        &self,
        kind: char,
        x: ArrayView2<'_, f64>,
        per_line: usize,
    ) -> std::result::Result<Vec<Vec<f64>>, BridgeError> {
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let mut session = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = Vec::with_capacity(x.nrows());
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + self.config.batch_size).min(x.nrows());
            let part = x.slice(ndarray::s![start..end, ..]);
            out.extend(session.exchange(kind, part, per_line, timeout)?);
            start = end;
        }
        Ok(out)
    }
}

impl ModelOracle for ExternalOracle {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let rows = self.batched('P', x, 1)?;
        Ok(rows.into_iter().map(|r| r[0]).collect())
    }

    fn jacobian(&self, x: ArrayView2<'_, f64>) -> Option<Result<Array2<f64>>> {
        if self.config.mode != BridgeMode::PredictAndJacobian {
            return None;
        }
        let d = x.ncols();
        Some(self.batched('J', x, d).map_err(EffectError::from).map(|rows| {
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            Array2::from_shape_vec((x.nrows(), d), flat).expect("rows checked")
        }))
    }
}

/// Answers protocol requests from `input` with `oracle` until end of input.
/// `J` requests use the oracle's own jacobian when it has one, central
/// differences otherwise.
/// This is the child side of the protocol.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, oracle: &dyn ModelOracle) -> Result<()> {
    let mut lines = input.lines();
    let io_err = |e: io::Error| EffectError::from(BridgeError::Io(e));
    while let Some(header) = lines.next() {
        let header = header.map_err(io_err)?;
        if header.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [k, r, c] if *k == "P" || *k == "J" => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
            _ => None,
        };
        let (rows, cols) = parsed.ok_or_else(|| {
            EffectError::InvalidData(format!("bad request header {header:?}"))
        })?;
        let mut x = Array2::zeros((rows, cols));
        for i in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| EffectError::InvalidData(format!("request ended after {i} of {rows} rows")))?
                .map_err(io_err)?;
            let vals = parse_floats(&line, cols, i + 1)?;
            x.row_mut(i).assign(&Array1::from(vals));
        }
        if parts[0] == "P" {
            let y = crate::oracle::predict(oracle, x.view())?;
            let mut buf = String::new();
            for v in y.iter() {
                buf.push_str(&format_float(*v));
                buf.push('\n');
            }
            output.write_all(buf.as_bytes()).map_err(io_err)?;
        } else {
            let jac = match oracle.jacobian(x.view()) {
                Some(j) => j?,
                None => crate::oracle::Differentiator::new(&column_ranges(x.view())).jacobian(oracle, x.view())?,
            };
            write_rows(&mut output, jac.view()).map_err(io_err)?;
        }
        output.flush().map_err(io_err)?;
    }
    Ok(())
}

fn column_ranges(x: ArrayView2<'_, f64>) -> Vec<(f64, f64)> {
    x.columns()
        .into_iter()
        .map(|c| c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
        .collect()
}
