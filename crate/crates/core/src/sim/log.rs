//! Newline-delimited JSON event log with a running SHA-256 digest.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub round: u64,
    pub node: Option<NodeId>,
    pub event: String,
    /// FNV-1a 64 of the payload, as 16 hex digits.
    pub payload_hash: String,
    pub bits: u64,
}

impl EventRecord {
    pub fn new(round: u64, node: Option<NodeId>, event: &str, payload_hash: u64, bits: u64) -> Self {
        Self { round, node, event: event.to_string(), payload_hash: format!("{payload_hash:016x}"), bits }
    }
}

pub enum LogSink {
    Off,
    Digest,
    Memory(Vec<String>),
    File(BufWriter<File>),
}

pub struct EventLog {
    sink: LogSink,
    hasher: Sha256,
    lines: u64,
    error: Option<io::Error>,
}

impl EventLog {
    fn with(sink: LogSink) -> Self {
        Self { sink, hasher: Sha256::new(), lines: 0, error: None }
    }

    pub fn off() -> Self {
        Self::with(LogSink::Off)
    }

    /// Keeps only the digest of the log.
    pub fn digest_only() -> Self {
        Self::with(LogSink::Digest)
    }

    pub fn memory() -> Self {
        Self::with(LogSink::Memory(Vec::new()))
    }

    pub fn file(path: &Path) -> io::Result<Self> {
        Ok(Self::with(LogSink::File(BufWriter::new(File::create(path)?))))
    }

    pub fn is_enabled(&self) -> bool {
        !matches!(self.sink, LogSink::Off)
    }

    fn write_line(&mut self, line: &str) {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.lines += 1;
        match &mut self.sink {
            LogSink::Off | LogSink::Digest => {}
            LogSink::Memory(lines) => lines.push(line.to_string()),
            LogSink::File(w) => {
                if let Err(e) = writeln!(w, "{line}") {
                    self.error.get_or_insert(e);
                }
            }
        }
    }

    /// First record of a log: the full scenario configuration.
    pub fn header(&mut self, config: &serde_json::Value) {
        if self.is_enabled() {
            let line = serde_json::json!({ "event": "scenario_start", "config": config }).to_string();
            self.write_line(&line);
        }
    }

    pub fn record(&mut self, rec: &EventRecord) {
        if self.is_enabled() {
            let line = serde_json::to_string(rec).expect("event records serialize");
            self.write_line(&line);
        }
    }

    pub fn line_count(&self) -> u64 {
        self.lines
    }

    pub fn digest_hex(&self) -> Option<String> {
        if !self.is_enabled() {
            return None;
        }
        let d = self.hasher.clone().finalize();
        Some(d.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn lines(&self) -> Option<&[String]> {
        match &self.sink {
            LogSink::Memory(lines) => Some(lines),
            _ => None,
        }
    }

    /// Flushes a file sink and surfaces any deferred write error.
    pub fn finish(&mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let LogSink::File(w) = &mut self.sink {
            w.flush()?;
        }
        Ok(())
    }

    /// Reads a log written by a file sink: its header configuration and all
    /// remaining lines verbatim.
    pub fn read(path: &Path) -> io::Result<(serde_json::Value, Vec<String>)> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let first = lines.next().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty event log"))??;
        let header: serde_json::Value =
            serde_json::from_str(&first).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if header.get("event").and_then(|e| e.as_str()) != Some("scenario_start") {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "log does not start with scenario_start"));
        }
        let config = header.get("config").cloned().unwrap_or(serde_json::Value::Null);
        let mut rest = vec![first];
        for line in lines {
            rest.push(line?);
        }
        Ok((config, rest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_and_digest_agree() {
        let mut a = EventLog::memory();
        let mut b = EventLog::digest_only();
        for log in [&mut a, &mut b] {
            log.header(&serde_json::json!({"seed": 3}));
            log.record(&EventRecord::new(0, Some(1), "send", 0xabc, 64));
        }
        assert_eq!(a.digest_hex(), b.digest_hex());
        assert_eq!(a.lines().unwrap().len(), 2);
        assert!(a.lines().unwrap()[1].contains("\"payload_hash\":\"0000000000000abc\""));
        assert!(EventLog::off().digest_hex().is_none());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndjson");
        let mut log = EventLog::file(&path).unwrap();
        log.header(&serde_json::json!({"seed": 9}));
        log.record(&EventRecord::new(2, None, "level", 7, 0));
        log.finish().unwrap();
        let (cfg, lines) = EventLog::read(&path).unwrap();
        assert_eq!(cfg["seed"], 9);
        assert_eq!(lines.len(), 2);
    }
}
