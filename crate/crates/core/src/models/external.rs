//! Out-of-process models speaking a line protocol over stdin/stdout.
//!
//! ```text
//! -> HELLO 1 <task> <q>
//! <- OK <kinds>                 kinds: score and/or probability
//! -> PREDICT <m>
//! -> m lines of q comma-separated numbers
//! <- m lines holding one number each, or a single "ERR <message>"
//! ```

use std::ffi::OsStr;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::{check_width, Model, Prediction};
use crate::data::Task;
use crate::error::{Result, XperError};
use crate::scalar::Scalar;

pub const PROTOCOL_VERSION: u32 = 1;

struct Channel {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    line: String,
}

pub struct ExternalModel {
    program: String,
    task: Task,
    n_features: usize,
    kinds: Vec<String>,
    channel: Mutex<Channel>,
    stderr: Arc<Mutex<String>>,
    stderr_thread: Mutex<Option<JoinHandle<()>>>,
}

impl fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalModel")
            .field("program", &self.program)
            .field("task", &self.task)
            .field("n_features", &self.n_features)
            .field("kinds", &self.kinds)
            .finish_non_exhaustive()
    }
}

impl ExternalModel {
    /// Starts `program` and performs the handshake.
    pub fn spawn<S: AsRef<OsStr>>(program: S, args: &[String], task: Task, n_features: usize) -> Result<Self> {
        let program_name = program.as_ref().to_string_lossy().into_owned();
        let mut child = Command::new(program.as_ref())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| XperError::adapter(format!("cannot start `{program_name}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let stderr_thread = std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(k) = stderr_pipe.read(&mut buf) {
                if k == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap_or_else(|p| p.into_inner());
                s.push_str(&String::from_utf8_lossy(&buf[..k]));
                // Keep only the tail of a chatty adapter.
                if s.len() > 16_384 {
                    let cut = s.len() - 8_192;
                    let cut = (cut..s.len()).find(|&i| s.is_char_boundary(i)).unwrap_or(cut);
                    s.drain(..cut);
                }
            }
        });
        let mut model = Self {
            program: program_name,
            task,
            n_features,
            kinds: Vec::new(),
            channel: Mutex::new(Channel {
                child,
                stdin: Some(stdin),
                stdout,
                line: String::new(),
            }),
            stderr,
            stderr_thread: Mutex::new(Some(stderr_thread)),
        };
        model.kinds = model.handshake()?;
        let needed = match task {
            Task::BinaryClassification => "probability",
            Task::Regression => "score",
        };
        if !model.kinds.iter().any(|k| k == needed) {
            return Err(model.failure(format!(
                "adapter offers {:?} but a {} model must provide `{needed}`",
                model.kinds,
                task.as_str()
            )));
        }
        Ok(model)
    }

    pub fn kinds(&self) -> &[String] {
        &self.kinds
    }

    fn handshake(&self) -> Result<Vec<String>> {
        let mut ch = self.lock();
        let hello = format!("HELLO {PROTOCOL_VERSION} {} {}\n", self.task.as_str(), self.n_features);
        if let Err(e) = ch.send(hello.as_bytes()) {
            drop(ch);
            return Err(self.failure(format!("handshake write failed: {e}")));
        }
        let reply = match ch.read_line() {
            Ok(Some(line)) => line,
            Ok(None) => {
                drop(ch);
                return Err(self.failure("adapter closed its output during the handshake"));
            }
            Err(e) => {
                drop(ch);
                return Err(self.failure(format!("handshake read failed: {e}")));
            }
        };
        drop(ch);
        let rest = reply
            .strip_prefix("OK")
            .ok_or_else(|| self.failure(format!("unexpected handshake reply `{reply}`")))?;
        let kinds: Vec<String> = rest
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|k| !k.is_empty())
            .map(str::to_string)
            .collect();
        if let Some(bad) = kinds.iter().find(|k| *k != "score" && *k != "probability") {
            return Err(self.failure(format!("unknown output kind `{bad}`")));
        }
        Ok(kinds)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Channel> {
        self.channel.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Builds an adapter error carrying whatever the child wrote to stderr.
    fn failure(&self, message: impl Into<String>) -> XperError {
        {
            let mut ch = self.lock();
            if let Ok(Some(_)) = ch.child.try_wait() {
                drop(ch);
                if let Some(handle) = self.stderr_thread.lock().unwrap_or_else(|p| p.into_inner()).take() {
                    let _ = handle.join();
                }
            }
        }
        XperError::Adapter {
            message: format!("`{}`: {}", self.program, message.into()),
            diagnostics: self.stderr.lock().unwrap_or_else(|p| p.into_inner()).clone(),
        }
    }

    fn exchange(&self, rows: &[f64]) -> std::result::Result<Vec<f64>, String> {
        let m = rows.len() / self.n_features;
        let mut request = String::with_capacity(16 + rows.len() * 20);
        request.push_str(&format!("PREDICT {m}\n"));
        for row in rows.chunks_exact(self.n_features) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    request.push(',');
                }
                request.push_str(&format!("{v}"));
            }
            request.push('\n');
        }
        let mut ch = self.lock();
        ch.send(request.as_bytes()).map_err(|e| format!("write failed: {e}"))?;
        let mut out = Vec::with_capacity(m);
        for k in 0..m {
            let line = ch
                .read_line()
                .map_err(|e| format!("read failed: {e}"))?
                .ok_or_else(|| format!("adapter exited after {k} of {m} predictions"))?;
            if let Some(msg) = line.strip_prefix("ERR") {
                return Err(format!("adapter rejected the batch: {}", msg.trim()));
            }
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| format!("response line {} `{line}` is not a number", k + 1))?;
            out.push(v);
        }
        Ok(out)
    }
}

impl Channel {
    fn send(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::other("stdin already closed"))?;
        stdin.write_all(bytes)?;
        stdin.flush()
    }

    fn read_line(&mut self) -> std::io::Result<Option<String>> {
        self.line.clear();
        if self.stdout.read_line(&mut self.line)? == 0 {
            return Ok(None);
        }
        Ok(Some(self.line.trim_end_matches(['\r', '\n']).to_string()))
    }
}

impl<T: Scalar> Model<T> for ExternalModel {
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        let m = check_width(rows, self.n_features)?;
        if m == 0 {
            return Ok(Vec::new());
        }
        let wire: Vec<f64> = rows.iter().map(|v| v.as_f64()).collect();
        let values = self.exchange(&wire).map_err(|msg| self.failure(msg))?;
        values
            .into_iter()
            .map(|v| {
                if !v.is_finite() {
                    return Err(self.failure(format!("non-finite prediction {v}")));
                }
                let v = T::lit(v);
                Ok(match self.task {
                    Task::BinaryClassification => {
                        if v < T::zero() || v > T::one() {
                            return Err(self.failure(format!("probability {v} outside [0, 1]")));
                        }
                        Prediction::probability(v, v)
                    }
                    Task::Regression => Prediction::score(v),
                })
            })
            .collect()
    }

    fn supports_concurrent_predict(&self) -> bool {
        false
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let ch = self.channel.get_mut().unwrap_or_else(|p| p.into_inner());
        ch.stdin.take();
        let _ = ch.child.kill();
        let _ = ch.child.wait();
        if let Some(handle) = self.stderr_thread.get_mut().unwrap_or_else(|p| p.into_inner()).take() {
            let _ = handle.join();
        }
    }
}
