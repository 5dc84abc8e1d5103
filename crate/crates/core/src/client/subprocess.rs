//! Newline-delimited JSON over a child process's stdin/stdout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{ModelClient, ModelRequest, ModelResponse};
use crate::error::ClientError;

type Reply = Result<ModelResponse, ClientError>;

#[derive(Default)]
struct Pending {
    waiters: HashMap<String, Sender<Reply>>,
    closed: Option<String>,
}

/// Counting semaphore bounding requests in flight.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

/// Talks to a model server running as a child process. Requests from many
/// threads are multiplexed over one pipe and matched to responses by id, so
/// the server may answer out of order.
pub struct SubprocessClient {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: Arc<Mutex<Pending>>,
    gate: Gate,
    timeout: Duration,
}

impl SubprocessClient {
    /// Runs `command` through `sh -c`.
    pub fn spawn_shell(command: &str, timeout: Duration, max_in_flight: usize) -> Result<Self, ClientError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        Self::spawn(cmd, timeout, max_in_flight)
    }

    pub fn spawn(mut cmd: Command, timeout: Duration, max_in_flight: usize) -> Result<Self, ClientError> {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ClientError::Transport(format!("cannot start model process: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let pending = Arc::new(Mutex::new(Pending::default()));
        let reader_pending = Arc::clone(&pending);
        thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                let line = match line {
                    Ok(l) => l,
                    Err(e) => {
                        close(&reader_pending, format!("reading model output: {e}"));
                        return;
                    }
                };
                if line.trim().is_empty() {
                    continue;
                }
                dispatch(&reader_pending, &line);
            }
            close(&reader_pending, "model process closed its output".into());
        });
        Ok(Self {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
            gate: Gate { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() },
            timeout,
        })
    }

    fn send_inner(&self, request: &ModelRequest) -> Reply {
        let (tx, rx) = mpsc::channel();
        {
            let mut pending = self.pending.lock().unwrap();
            if let Some(why) = &pending.closed {
                return Err(ClientError::Transport(why.clone()));
            }
            if pending.waiters.contains_key(&request.id) {
                return Err(ClientError::Transport(format!("request id {:?} already in flight", request.id)));
            }
            pending.waiters.insert(request.id.clone(), tx);
        }
        let written = {
            let mut stdin = self.stdin.lock().unwrap();
            writeln!(stdin, "{}", request.to_line()).and_then(|_| stdin.flush())
        };
        if let Err(e) = written {
            self.pending.lock().unwrap().waiters.remove(&request.id);
            return Err(ClientError::Transport(format!("writing to model process: {e}")));
        }
        match rx.recv_timeout(self.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().waiters.remove(&request.id);
                Err(ClientError::Timeout(request.id.clone()))
            }
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Transport("model process went away".into())),
        }
    }
}

fn dispatch(pending: &Mutex<Pending>, line: &str) {
    let id =
        serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_owned));
    let Some(id) = id else {
        log::warn!("dropping model output without a request id: {line}");
        return;
    };
    let Some(tx) = pending.lock().unwrap().waiters.remove(&id) else {
        log::warn!("dropping response for unknown or expired request {id:?}");
        return;
    };
    let _ = tx.send(ModelResponse::parse(line));
}

fn close(pending: &Mutex<Pending>, why: String) {
    let mut p = pending.lock().unwrap();
    for (_, tx) in p.waiters.drain() {
        let _ = tx.send(Err(ClientError::Transport(why.clone())));
    }
    p.closed = Some(why);
}

impl ModelClient for SubprocessClient {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, ClientError> {
        self.gate.acquire();
        let reply = self.send_inner(request);
        self.gate.release();
        reply
    }
}

impl Drop for SubprocessClient {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
