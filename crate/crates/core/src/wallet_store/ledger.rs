//! Append-only journal of bank state transitions.
//!
//! One compact JSON record per line, sequence numbers starting at 1 with no
//! gaps. Replaying the records from an empty state rebuilds the registries.

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::bank::{BankEvent, BankState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerRecord {
    pub seq: u64,
    pub event: BankEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
}

impl Ledger {
    pub fn push(&mut self, event: BankEvent) -> u64 {
        let seq = self.records.len() as u64 + 1;
        self.records.push(LedgerRecord { seq, event });
        seq
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn events(&self) -> impl Iterator<Item = &BankEvent> {
        self.records.iter().map(|r| &r.event)
    }

    pub fn render(&self) -> String {
        self.render_from(0)
    }

    /// Lines for records after the first `skip`.
    pub fn render_from(&self, skip: usize) -> String {
        let mut out = String::new();
        for record in self.records.iter().skip(skip) {
            out.push_str(&serde_json::to_string(record).expect("ledger records always serialize"));
            out.push('\n');
        }
        out
    }

    /// Strict parse: every line, including the last, must be a complete
    /// record.
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(StoreError::LedgerRecord {
                line: text.lines().count(),
                reason: "unterminated record".into(),
            });
        }
        Self::parse_prefix(text)
    }

    /// Parses the complete lines of `text`, ignoring an unterminated tail as
    /// a concurrent reader would.
    pub fn parse_prefix(text: &str) -> Result<Self, StoreError> {
        let complete = match text.rfind('\n') {
            Some(end) => &text[..=end],
            None => "",
        };
        let mut ledger = Ledger::default();
        for (i, line) in complete.lines().enumerate() {
            let lineno = i + 1;
            let record: LedgerRecord = serde_json::from_str(line).map_err(|e| StoreError::LedgerRecord {
                line: lineno,
                reason: e.to_string(),
            })?;
            let expected = ledger.records.len() as u64 + 1;
            if record.seq != expected {
                let reason = if record.seq < expected {
                    format!("duplicate sequence number {} (expected {expected})", record.seq)
                } else {
                    format!("gap: sequence number {} (expected {expected})", record.seq)
                };
                return Err(StoreError::LedgerRecord { line: lineno, reason });
            }
            ledger.records.push(record);
        }
        Ok(ledger)
    }

    /// Applies every record to an empty state, halting at the first one that
    /// does not apply.
    pub fn replay(&self) -> Result<BankState, StoreError> {
        let mut state = BankState::default();
        for record in &self.records {
            state.apply(&record.event).map_err(|source| StoreError::Replay {
                seq: record.seq,
                source,
            })?;
        }
        Ok(state)
    }
}
