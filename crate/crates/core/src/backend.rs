//! Propagation over a subprocess speaking newline-delimited JSON.
//!
//! Each request is one line on the backend's stdin:
//!
//! ```json
//! {"op":"propagate","entries":[{"frame":0,"id":4,"mask":{"w":2,"h":1,"runs":[0,1,1]}}],"query_frame":2}
//! ```
//!
//! and each answer one line on its stdout, either `{"masks":[{"id":4,"mask":{...}}]}`
//! or `{"error":"..."}`. For `align`, entry ids are positions in the batch and
//! `query_frame` is the reference frame. Stderr is passed through untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::propagation::{MemoryEntry, Propagator, TrackId};

pub const TIMEOUT_ENV: &str = "TRACKFUSE_BACKEND_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Time a backend gets to exit on its own once its stdin is closed.
const EXIT_GRACE: Duration = Duration::from_millis(500);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Propagate,
    Align,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub op: Op,
    pub entries: Vec<MemoryEntry>,
    pub query_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskItem {
    pub id: TrackId,
    pub mask: Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Masks { masks: Vec<MaskItem> },
    Error { error: String },
}

impl Response {
    /// Parses one response line. Any shape other than the two documented
    /// objects is a protocol error carrying the raw text.
    pub fn parse(raw: &str) -> Result<Response> {
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| Error::protocol(format!("malformed JSON: {e}"), Some(raw)))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::protocol("response is not a JSON object", Some(raw)))?;
        if obj.contains_key("error") {
            return match (obj.len(), obj["error"].as_str()) {
                (1, Some(msg)) => Ok(Response::Error { error: msg.to_owned() }),
                _ => Err(Error::protocol(
                    "\"error\" must be the only key and a string",
                    Some(raw),
                )),
            };
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Masks {
            masks: Vec<MaskItem>,
        }
        serde_json::from_value::<Masks>(value)
            .map(|m| Response::Masks { masks: m.masks })
            .map_err(|e| Error::protocol(format!("invalid response: {e}"), Some(raw)))
    }
}

/// Timeout from the environment, or the default when unset.
pub fn timeout_from_env() -> Result<Duration> {
    match std::env::var(TIMEOUT_ENV) {
        Err(_) => Ok(Duration::from_millis(DEFAULT_TIMEOUT_MS)),
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|&ms| ms > 0)
            .map(Duration::from_millis)
            .ok_or_else(|| Error::InvalidConfig(format!("{TIMEOUT_ENV} must be a positive integer, got {v:?}"))),
    }
}

/// Client for one backend process. Requests are strictly sequential.
///
/// After a timeout or protocol failure the client refuses further requests:
/// a late answer would otherwise be taken for the next request's.
pub struct ExternalPropagator {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    broken: Option<String>,
}

impl ExternalPropagator {
    /// Starts `command` through `sh -c` with the timeout from the environment.
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, timeout_from_env()?)
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            broken: None,
        })
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Kills the shell and everything it started.
    fn kill(&mut self) {
        #[cfg(unix)]
        if let Ok(pid) = i32::try_from(self.child.id()) {
            // SAFETY: signals the process group created at spawn; no memory is touched.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
    }

    fn exit_description(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => format!("backend exited ({status})"),
            _ => "backend closed its output".to_string(),
        }
    }

    /// Sends one request and waits for its answer.
    pub fn request(&mut self, req: &Request) -> Result<Vec<MaskItem>> {
        if let Some(why) = &self.broken {
            return Err(Error::Backend(format!("backend unusable after earlier failure: {why}")));
        }
        let out = self.exchange(req);
        if let Err(e) = &out {
            if !matches!(e, Error::Backend(_)) || self.child.try_wait().ok().flatten().is_some() {
                self.broken = Some(e.to_string());
            }
        }
        out
    }

    fn exchange(&mut self, req: &Request) -> Result<Vec<MaskItem>> {
        let mut line = serde_json::to_string(req).expect("requests always serialize");
        line.push('\n');
        let sent = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if sent.is_err() {
            self.stdin = None;
            return Err(Error::Backend(self.exit_description()));
        }
        let raw = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => return Err(Error::Backend(format!("reading backend output: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(Error::BackendTimeout(self.timeout.as_millis() as u64));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let _ = self.child.wait();
                return Err(Error::Backend(self.exit_description()));
            }
        };
        let masks = match Response::parse(&raw)? {
            Response::Error { error } => return Err(Error::Backend(error)),
            Response::Masks { masks } => masks,
        };
        check_response(req, &masks, &raw)?;
        Ok(masks)
    }
}

/// Every requested id answered exactly once, nothing else, same dimensions.
fn check_response(req: &Request, masks: &[MaskItem], raw: &str) -> Result<()> {
    let expected: BTreeSet<TrackId> = req.entries.iter().map(|e| e.id).collect();
    let mut seen = BTreeSet::new();
    for item in masks {
        if !expected.contains(&item.id) {
            return Err(Error::protocol(
                format!("response names unknown id {}", item.id),
                Some(raw),
            ));
        }
        if !seen.insert(item.id) {
            return Err(Error::protocol(format!("response repeats id {}", item.id), Some(raw)));
        }
    }
    if let Some(missing) = expected.difference(&seen).next() {
        return Err(Error::protocol(format!("response lacks id {missing}"), Some(raw)));
    }
    if let Some(first) = req.entries.first() {
        if let Some(bad) = masks.iter().find(|m| !m.mask.same_dims(&first.mask)) {
            return Err(Error::protocol(
                format!(
                    "mask for id {} is {}x{}, request masks are {}x{}",
                    bad.id,
                    bad.mask.width(),
                    bad.mask.height(),
                    first.mask.width(),
                    first.mask.height()
                ),
                Some(raw),
            ));
        }
    }
    Ok(())
}

impl Propagator for ExternalPropagator {
    fn propagate(&mut self, entries: &[MemoryEntry], query_frame: usize) -> Result<BTreeMap<TrackId, Mask>> {
        if entries.is_empty() {
            return Ok(BTreeMap::new());
        }
        let req = Request {
            op: Op::Propagate,
            entries: entries.to_vec(),
            query_frame,
        };
        Ok(self.request(&req)?.into_iter().map(|m| (m.id, m.mask)).collect())
    }

    fn align(&mut self, masks: &[Mask], from_frame: usize, ref_frame: usize) -> Result<Vec<Mask>> {
        if masks.is_empty() {
            return Ok(Vec::new());
        }
        let req = Request {
            op: Op::Align,
            entries: masks
                .iter()
                .enumerate()
                .map(|(i, m)| MemoryEntry {
                    frame: from_frame,
                    id: i as TrackId,
                    mask: m.clone(),
                })
                .collect(),
            query_frame: ref_frame,
        };
        let mut by_id: BTreeMap<TrackId, Mask> = self.request(&req)?.into_iter().map(|m| (m.id, m.mask)).collect();
        Ok((0..masks.len() as TrackId)
            .map(|i| by_id.remove(&i).expect("checked"))
            .collect())
    }
}

impl Drop for ExternalPropagator {
    fn drop(&mut self) {
        self.stdin = None;
        let deadline = std::time::Instant::now() + EXIT_GRACE;
        while self.child.try_wait().ok().flatten().is_none() {
            if std::time::Instant::now() >= deadline {
                self.kill();
                break;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.wait();
    }
}

/// Answers protocol requests from `input` with `propagator` until EOF.
/// Malformed requests and engine errors become `{"error": ...}` replies.
pub fn serve<P: Propagator, R: BufRead, W: Write>(propagator: &mut P, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::Backend(format!("reading requests: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response::Error {
                error: format!("malformed request: {e}"),
            },
            Ok(req) => match answer(propagator, &req) {
                Ok(masks) => Response::Masks { masks },
                Err(e) => Response::Error { error: e.to_string() },
            },
        };
        let text = serde_json::to_string(&response).expect("responses always serialize");
        writeln!(output, "{text}")
            .and_then(|_| output.flush())
            .map_err(|e| Error::Backend(format!("writing response: {e}")))?;
    }
    Ok(())
}

fn answer<P: Propagator>(p: &mut P, req: &Request) -> Result<Vec<MaskItem>> {
    match req.op {
        Op::Propagate => Ok(p
            .propagate(&req.entries, req.query_frame)?
            .into_iter()
            .map(|(id, mask)| MaskItem { id, mask })
            .collect()),
        Op::Align => req
            .entries
            .iter()
            .map(|e| {
                let mut out = p.align(std::slice::from_ref(&e.mask), e.frame, req.query_frame)?;
                Ok(MaskItem {
                    id: e.id,
                    mask: out.pop().expect("one mask in, one out"),
                })
            })
            .collect(),
    }
}
