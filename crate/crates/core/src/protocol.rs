//! Newline-delimited JSON over child-process stdio.
//!
//! Each child first writes a `hello` line describing itself. The engine then
//! sends `{"id":…, "op":…}` requests and reads one response per request,
//! matched by id. Requests to one child are serialized; a pool of children
//! serves concurrent callers.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// How to launch an external worker.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    /// Shell command line, run with `sh -c`.
    pub command: String,
    pub pool_size: usize,
    pub timeout: Duration,
}

impl ProcessSpec {
    pub fn new(command: impl Into<String>) -> Self {
        ProcessSpec {
            command: command.into(),
            pool_size: 1,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_pool_size(mut self, n: usize) -> Self {
        self.pool_size = n.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exited(&mut self) -> Error {
        match self.child.try_wait() {
            Ok(Some(status)) => Error::ProcessExited(status.to_string()),
            _ => Error::ProcessExited("stdout closed".into()),
        }
    }

    fn read_line(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                // give the child a moment to be reaped so the status is reported
                thread::sleep(Duration::from_millis(20));
                Err(self.exited())
            }
        }
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::ProcessExited("stdin closed".into()))?;
        let res = stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush());
        match res {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Err(self.exited()),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.stdin.take();
        if let Ok(None) = self.child.try_wait() {
            thread::sleep(Duration::from_millis(5));
            if let Ok(None) = self.child.try_wait() {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

/// A pool of identical protocol workers.
pub struct ProcessPool {
    workers: Vec<Mutex<Worker>>,
    hello: Value,
    next_id: AtomicU64,
    next_worker: AtomicUsize,
    timeout: Duration,
}

impl std::fmt::Debug for ProcessPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessPool")
            .field("workers", &self.workers.len())
            .field("hello", &self.hello)
            .finish()
    }
}

impl ProcessPool {
    /// Spawns the workers and reads their handshakes, which must agree.
    pub fn spawn(spec: &ProcessSpec, role: &str) -> Result<Self> {
        let mut workers = Vec::with_capacity(spec.pool_size);
        let mut hello: Option<Value> = None;
        for _ in 0..spec.pool_size.max(1) {
            let mut w = Worker::spawn(&spec.command)?;
            let line = w.read_line(spec.timeout)?;
            let msg: Value = serde_json::from_str(&line)
                .map_err(|e| Error::protocol(None, format!("malformed handshake {line:?}: {e}")))?;
            if msg.get("type").and_then(Value::as_str) != Some("hello") {
                return Err(Error::protocol(None, format!("expected hello, got {line}")));
            }
            if msg.get("role").and_then(Value::as_str) != Some(role) {
                return Err(Error::protocol(
                    None,
                    format!("expected role {role:?}, handshake says {:?}", msg.get("role")),
                ));
            }
            match &hello {
                Some(h) if *h != msg => return Err(Error::protocol(None, "pool workers disagree in their handshakes")),
                Some(_) => {}
                None => hello = Some(msg),
            }
            workers.push(Mutex::new(w));
        }
        Ok(ProcessPool {
            workers,
            hello: hello.expect("at least one worker"),
            next_id: AtomicU64::new(0),
            next_worker: AtomicUsize::new(0),
            timeout: spec.timeout,
        })
    }

    pub fn hello(&self) -> &Value {
        &self.hello
    }

    /// Sends `op` with `fields` and returns the response object.
    pub fn request(&self, op: &str, fields: Map<String, Value>) -> Result<Map<String, Value>> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut msg = Map::new();
        msg.insert("id".into(), Value::from(id));
        msg.insert("op".into(), Value::from(op));
        msg.extend(fields);
        let line = serde_json::to_string(&Value::Object(msg)).expect("json");

        let mut worker = self.acquire();
        worker.write_line(&line)?;
        let reply = worker.read_line(self.timeout)?;
        drop(worker);

        let value: Value = serde_json::from_str(&reply)
            .map_err(|e| Error::protocol(Some(id), format!("malformed response line {reply:?}: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(Error::protocol(Some(id), format!("response is not an object: {reply}")));
        };
        match obj.get("id").and_then(Value::as_u64) {
            Some(got) if got == id => {}
            other => {
                return Err(Error::protocol(
                    Some(id),
                    format!("response id {other:?} does not match request"),
                ))
            }
        }
        if let Some(err) = obj.get("error") {
            let text = err.as_str().map(str::to_owned).unwrap_or_else(|| err.to_string());
            return Err(Error::protocol(Some(id), format!("worker error: {text}")));
        }
        Ok(obj)
    }

    fn acquire(&self) -> std::sync::MutexGuard<'_, Worker> {
        let n = self.workers.len();
        let start = self.next_worker.fetch_add(1, Ordering::Relaxed) % n;
        for k in 0..n {
            if let Ok(guard) = self.workers[(start + k) % n].try_lock() {
                return guard;
            }
        }
        self.workers[start].lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Reads a required field of a response, with the request id for context.
pub(crate) fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::protocol(obj.get("id").and_then(Value::as_u64), format!("response lacks {key:?}")))
}

pub(crate) fn as_f64_vec(v: &Value, id: Option<u64>, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::protocol(id, format!("{what} is not an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::protocol(id, format!("{what} contains a non-number")))
        })
        .collect()
}

pub(crate) fn as_usize(v: Option<&Value>, what: &str) -> Result<usize> {
    v.and_then(Value::as_u64)
        .map(|x| x as usize)
        .ok_or_else(|| Error::protocol(None, format!("handshake {what} missing or invalid")))
}

pub(crate) fn as_shape(v: Option<&Value>) -> Result<crate::image::Shape> {
    let dims = v
        .and_then(Value::as_array)
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Error::protocol(None, "handshake input_shape must be [H,W,C]"))?;
    let d: Vec<usize> = dims
        .iter()
        .map(|x| as_usize(Some(x), "input_shape"))
        .collect::<Result<_>>()?;
    Ok(crate::image::Shape::new(d[0], d[1], d[2]))
}
