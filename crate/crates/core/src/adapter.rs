//! External-process adapters for heavyweight encoders and sentence splitters.
//!
//! Protocol (UTF-8, one JSON document per line):
//!
//! * on start the adapter writes a handshake: `{"identity": "...", "dim": 768}`
//!   (`dim` is omitted by segmenters);
//! * for each request line `{"text": "..."}` it answers with one line, either
//!   `{"vector": [f64, ...]}` (encoders), `{"sentences": [[start, end], ...]}`
//!   (segmenters, half-open char offsets) or `{"error": "..."}`.
//!
//! Requests are serialized through a mutex, so adapters are treated as
//! single-threaded.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::encoding::Encoder;
use crate::error::{Error, Result};
use crate::segmentation::Segmenter;

#[derive(Debug, Deserialize)]
struct Handshake {
    identity: String,
    #[serde(default)]
    dim: Option<usize>,
}

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Debug, Default, Deserialize)]
struct Response {
    #[serde(default)]
    vector: Option<Vec<f64>>,
    #[serde(default)]
    sentences: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    error: Option<String>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Pipe {
    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line).map_err(|e| Error::Adapter(e.to_string()))?;
        if n == 0 {
            return Err(Error::Adapter("adapter closed its output".into()));
        }
        Ok(line)
    }
}

struct JsonLineProcess {
    pipe: Mutex<Pipe>,
    handshake: Handshake,
}

impl JsonLineProcess {
    fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Adapter(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut pipe = Pipe { child, stdin, stdout };
        let line = pipe.read_line()?;
        let handshake: Handshake =
            serde_json::from_str(&line).map_err(|e| Error::Adapter(format!("bad handshake {line:?}: {e}")))?;
        Ok(Self { pipe: Mutex::new(pipe), handshake })
    }

    fn call(&self, text: &str) -> Result<Response> {
        let mut pipe = self.pipe.lock().map_err(|_| Error::Adapter("adapter lock poisoned".into()))?;
        let mut req = serde_json::to_string(&Request { text })?;
        req.push('\n');
        pipe.stdin
            .write_all(req.as_bytes())
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| Error::Adapter(e.to_string()))?;
        let line = pipe.read_line()?;
        let resp: Response =
            serde_json::from_str(&line).map_err(|e| Error::Adapter(format!("bad response {line:?}: {e}")))?;
        if let Some(err) = resp.error {
            return Err(Error::Adapter(err));
        }
        Ok(resp)
    }
}

impl Drop for JsonLineProcess {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

/// Encoder backed by an external process (e.g. a pretrained transformer server).
pub struct CommandEncoder {
    process: JsonLineProcess,
    dim: usize,
}

impl CommandEncoder {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let process = JsonLineProcess::spawn(program, args)?;
        let dim = process
            .handshake
            .dim
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Adapter("encoder handshake lacks a positive dim".into()))?;
        Ok(Self { process, dim })
    }
}

impl Encoder for CommandEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> &str {
        &self.process.handshake.identity
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        self.process
            .call(text)?
            .vector
            .ok_or_else(|| Error::Adapter("response lacks \"vector\"".into()))
    }
}

/// Sentence splitter backed by an external process (e.g. a scientific-text splitter).
pub struct CommandSegmenter {
    process: JsonLineProcess,
}

impl CommandSegmenter {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        Ok(Self { process: JsonLineProcess::spawn(program, args)? })
    }
}

impl Segmenter for CommandSegmenter {
    fn identity(&self) -> &str {
        &self.process.handshake.identity
    }

    fn boundaries(&self, text: &str) -> Result<Vec<(usize, usize)>> {
        self.process
            .call(text)?
            .sentences
            .ok_or_else(|| Error::Adapter("response lacks \"sentences\"".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::encode_text;

    fn sh(script: &str) -> Vec<String> {
        vec!["-c".into(), script.into()]
    }

    #[test]
    fn command_encoder_round_trip() {
        let script = r#"echo '{"identity":"const-v1","dim":3}'; while read -r line; do echo '{"vector":[0.5,0.25,1.0]}'; done"#;
        let enc = CommandEncoder::spawn("sh", &sh(script)).unwrap();
        assert_eq!(enc.dim(), 3);
        assert_eq!(enc.identity(), "const-v1");
        assert!(!enc.concurrent());
        assert_eq!(encode_text(&enc, "anything").unwrap(), vec![0.5, 0.25, 1.0]);
        assert_eq!(encode_text(&enc, "again").unwrap(), vec![0.5, 0.25, 1.0]);
    }

    #[test]
    fn adapter_errors_surface() {
        let script = r#"echo '{"identity":"broken","dim":2}'; while read -r line; do echo '{"error":"model not loaded"}'; done"#;
        let enc = CommandEncoder::spawn("sh", &sh(script)).unwrap();
        let err = enc.encode("x").unwrap_err();
        assert_eq!(err.code(), "ADAPTER_FAILURE");
        assert!(err.to_string().contains("model not loaded"));
    }

    #[test]
    fn handshake_without_dim_rejected_for_encoders() {
        let script = r#"echo '{"identity":"seg"}'; cat > /dev/null"#;
        assert!(CommandEncoder::spawn("sh", &sh(script)).is_err());
    }

    #[test]
    fn command_segmenter() {
        let script = r#"echo '{"identity":"fixed-seg"}'; while read -r line; do echo '{"sentences":[[0,4],[5,9]]}'; done"#;
        let seg = CommandSegmenter::spawn("sh", &sh(script)).unwrap();
        assert_eq!(seg.identity(), "fixed-seg");
        assert_eq!(seg.boundaries("A b. C d.").unwrap(), vec![(0, 4), (5, 9)]);
    }

    #[test]
    fn missing_program() {
        assert!(CommandEncoder::spawn("/nonexistent/adapter", &[]).is_err());
    }
}
