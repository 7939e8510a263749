//! Line-oriented JSON chain dump: a context line followed by one block per
//! line, digests and byte fields in lowercase hex.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Block, LedgerContext};
use crate::crypto::Digest;

pub const DUMP_FORMAT: &str = "govledger-chain/1";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("dump is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Context { format: String, context: LedgerContext },
    Block { height: usize, hash: Digest, block: Block },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainDump {
    pub context: LedgerContext,
    pub blocks: Vec<Block>,
}

impl ChainDump {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ctx = Line::Context { format: DUMP_FORMAT.to_string(), context: self.context.clone() };
        writeln!(out, "{}", serde_json::to_string(&ctx).expect("context serializes")).unwrap();
        for (height, block) in self.blocks.iter().enumerate() {
            let line = Line::Block { height, hash: block.hash(), block: block.clone() };
            writeln!(out, "{}", serde_json::to_string(&line).expect("block serializes")).unwrap();
        }
        out
    }

    /// Parses a dump. The `hash` field of each block line is informational
    /// and not checked here; validation recomputes hashes.
    pub fn parse(text: &str) -> Result<Self, DumpError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (first_no, first) = lines.next().ok_or(DumpError::Empty)?;
        let err = |line: usize, message: String| DumpError::Parse { line: line + 1, message };
        let context = match serde_json::from_str::<Line>(first).map_err(|e| err(first_no, e.to_string()))? {
            Line::Context { format, context } => {
                if format != DUMP_FORMAT {
                    return Err(err(first_no, format!("unsupported format {format:?}")));
                }
                context
            }
            Line::Block { .. } => return Err(err(first_no, "first line must be the context".into())),
        };
        let mut blocks = Vec::new();
        for (no, text) in lines {
            match serde_json::from_str::<Line>(text).map_err(|e| err(no, e.to_string()))? {
                Line::Block { height, block, .. } => {
                    if height != blocks.len() {
                        return Err(err(no, format!("expected height {}, found {height}", blocks.len())));
                    }
                    blocks.push(block);
                }
                Line::Context { .. } => return Err(err(no, "duplicate context line".into())),
            }
        }
        if blocks.is_empty() {
            return Err(DumpError::Empty);
        }
        Ok(ChainDump { context, blocks })
    }
}
