use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::domain::Digest;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Keep only the running hash and event count.
    #[default]
    HashOnly,
    /// Also keep the JSON-lines text.
    Full,
}

/// JSON-lines event log. The trace hash is SHA-256 over the exact bytes of
/// the log, so equal hashes mean byte-identical `events.jsonl` files.
pub struct TraceWriter {
    mode: TraceMode,
    hasher: Sha256,
    buf: Vec<u8>,
    line: String,
    count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSummary {
    pub hash: Digest,
    pub events: u64,
    pub jsonl: Option<Vec<u8>>,
}

impl TraceWriter {
    pub fn new(mode: TraceMode) -> Self {
        Self { mode, hasher: Sha256::new(), buf: Vec::new(), line: String::new(), count: 0 }
    }

    /// Appends one line; `args` must render a single JSON object.
    pub fn record(&mut self, args: fmt::Arguments<'_>) {
        self.line.clear();
        // Writing into a String cannot fail.
        let _ = self.line.write_fmt(args);
        self.line.push('\n');
        self.hasher.update(self.line.as_bytes());
        if self.mode == TraceMode::Full {
            self.buf.extend_from_slice(self.line.as_bytes());
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(self) -> TraceSummary {
        let hash = Digest(self.hasher.finalize().into());
        let jsonl = (self.mode == TraceMode::Full).then_some(self.buf);
        TraceSummary { hash, events: self.count, jsonl }
    }
}

/// Hash of a JSON-lines log as produced by [`TraceWriter`].
pub fn hash_jsonl(bytes: &[u8]) -> Digest {
    Digest::of(bytes)
}
