//! Subprocess adapter for black-box classifiers.
//!
//! Protocol: one request per line with the coordinates separated by single
//! spaces, one response per line holding the label token. Calls are
//! serialized through a mutex; a call that does not answer within the
//! timeout fails with [`Error::External`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use crate::classifier::{Label, LabelOracle};
use crate::error::{Error, Result};
use crate::metric::Point;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    dead: bool,
}

pub struct SubprocessClassifier {
    command: Vec<String>,
    timeout: Duration,
    inner: Mutex<Channel>,
}

/// Formats one request line; coordinates use shortest round-trip decimals.
pub fn encode_request(p: &Point) -> String {
    let parts: Vec<String> = p.coords().iter().map(|c| format!("{c:?}")).collect();
    parts.join(" ")
}

impl SubprocessClassifier {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (prog, args) = command.split_first().ok_or_else(|| Error::External("empty classifier command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start `{prog}`: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| Error::External("no stdin pipe".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| Error::External("no stdout pipe".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_vec(),
            timeout,
            inner: Mutex::new(Channel { child, stdin, lines: rx, dead: false }),
        })
    }
}

impl LabelOracle for SubprocessClassifier {
    fn label(&self, p: &Point) -> Result<Label> {
        let mut ch = self.inner.lock().map_err(|_| Error::External("classifier lock poisoned".into()))?;
        if ch.dead {
            return Err(Error::External("classifier process is unusable after an earlier failure".into()));
        }
        let request = encode_request(p);
        if let Err(e) = writeln!(ch.stdin, "{request}").and_then(|_| ch.stdin.flush()) {
            ch.dead = true;
            return Err(Error::External(format!("write failed: {e}")));
        }
        match ch.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) if !line.trim().is_empty() => Ok(Label::parse(&line)),
            Ok(Ok(_)) => {
                ch.dead = true;
                Err(Error::External("empty response line".into()))
            }
            Ok(Err(e)) => {
                ch.dead = true;
                Err(Error::External(format!("read failed: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                // a late answer would desynchronize the stream
                ch.dead = true;
                Err(Error::External(format!("no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                ch.dead = true;
                Err(Error::External("classifier process closed its output".into()))
            }
        }
    }

    fn describe(&self) -> String {
        format!("subprocess `{}`", self.command.join(" "))
    }
}

impl Drop for SubprocessClassifier {
    fn drop(&mut self) {
        if let Ok(ch) = self.inner.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    /// Runs the awk program once per request line, so output is never held in a buffer.
    fn line_filter(program: &str) -> Vec<String> {
        sh(&format!("while read -r l; do echo \"$l\" | awk '{program}'; done"))
    }

    #[test]
    fn request_format() {
        assert_eq!(encode_request(&Point::from_slice(&[0.1, -2.0, 3.5e-9])), "0.1 -2.0 3.5e-9");
    }

    #[test]
    fn labels_through_pipe() {
        let cmd = line_filter(r#"{ if ($1 < 0.5) print "A"; else print "B" }"#);
        let c = SubprocessClassifier::spawn(&cmd, Duration::from_secs(5)).unwrap();
        assert_eq!(c.label(&Point::from_slice(&[0.25, 0.0])).unwrap(), Label::from("A"));
        assert_eq!(c.label(&Point::from_slice(&[0.75, 1.0])).unwrap(), Label::from("B"));
    }

    #[test]
    fn integer_labels() {
        let cmd = line_filter(r#"{ print ($1 > 0) ? 1 : 0 }"#);
        let c = SubprocessClassifier::spawn(&cmd, Duration::from_secs(5)).unwrap();
        assert_eq!(c.label(&Point::from_slice(&[2.0])).unwrap(), Label::Int(1));
        assert_eq!(c.label(&Point::from_slice(&[-2.0])).unwrap(), Label::Int(0));
    }

    #[test]
    fn timeout_is_an_error() {
        let c = SubprocessClassifier::spawn(&sh("sleep 5"), Duration::from_millis(100)).unwrap();
        let e = c.label(&Point::from_slice(&[0.0])).unwrap_err();
        assert!(matches!(e, Error::External(_)));
        assert!(c.label(&Point::from_slice(&[0.0])).is_err());
    }

    #[test]
    fn missing_program() {
        assert!(SubprocessClassifier::spawn(&["/nonexistent/model".to_string()], DEFAULT_TIMEOUT).is_err());
    }
}
