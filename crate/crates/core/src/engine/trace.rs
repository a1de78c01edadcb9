use sha2::{Digest, Sha256};

use super::SimTime;

/// Ordered event log. Every line feeds a running SHA-256; the lines
/// themselves are only retained when `keep_lines` is set.
#[derive(Clone, Default)]
pub struct Trace {
    hasher: Sha256,
    lines: Vec<String>,
    keep_lines: bool,
    count: u64,
}

impl std::fmt::Debug for Trace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trace")
            .field("count", &self.count)
            .field("digest", &self.digest())
            .finish()
    }
}

impl Trace {
    pub fn keep_lines(&mut self, keep: bool) {
        self.keep_lines = keep;
    }

    pub fn record(&mut self, at: SimTime, line: &str) {
        let stamped = format!("{} {}", at.as_micros(), line);
        self.hasher.update(stamped.as_bytes());
        self.hasher.update(b"\n");
        self.count += 1;
        if self.keep_lines {
            self.lines.push(stamped);
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}
