//! Per-row annotation slots and lineage sets.
//!
//! Every materialized row carries one annotation slot per active inspection,
//! so instrumentation overhead per tuple is constant in dataset size and
//! pipeline length.

use crate::ir::value::Value;
use serde::Serialize;

/// A provenance token: the identity of one source row, `(source_id, index)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RowToken {
    pub source: String,
    pub index: u64,
}

impl RowToken {
    pub fn new(source: impl Into<String>, index: u64) -> RowToken {
        RowToken { source: source.into(), index }
    }
}

/// Above this cardinality, aggregate lineage degrades to a count plus a
/// bloom digest so the per-annotation footprint stays bounded.
pub const LINEAGE_EXACT_LIMIT: usize = 10_000;

/// Why-provenance of a row: the set of source rows responsible for it.
///
/// Exact (sorted, deduplicated) below [`LINEAGE_EXACT_LIMIT`]; summarized
/// above it. Desk-scale pipelines stay exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineageSet {
    Exact(Vec<RowToken>),
    Summary { count: u64, digest: [u64; 4] },
}

impl LineageSet {
    pub fn single(token: RowToken) -> LineageSet {
        LineageSet::Exact(vec![token])
    }

    pub fn empty() -> LineageSet {
        LineageSet::Exact(Vec::new())
    }

    pub fn len(&self) -> u64 {
        match self {
            LineageSet::Exact(v) => v.len() as u64,
            LineageSet::Summary { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> Option<&[RowToken]> {
        match self {
            LineageSet::Exact(v) => Some(v),
            LineageSet::Summary { .. } => None,
        }
    }

    pub fn contains(&self, token: &RowToken) -> bool {
        match self {
            LineageSet::Exact(v) => v.binary_search(token).is_ok(),
            LineageSet::Summary { digest, .. } => {
                let (word, bit) = bloom_position(token);
                digest[word] & (1 << bit) != 0
            }
        }
    }

    /// Set union; degrades to a summary past the exact limit.
    pub fn union(&self, other: &LineageSet) -> LineageSet {
        match (self, other) {
            (LineageSet::Exact(a), LineageSet::Exact(b)) => {
                let mut merged = Vec::with_capacity(a.len() + b.len());
                merged.extend_from_slice(a);
                merged.extend_from_slice(b);
                merged.sort();
                merged.dedup();
                if merged.len() > LINEAGE_EXACT_LIMIT {
                    LineageSet::summarize(&merged)
                } else {
                    LineageSet::Exact(merged)
                }
            }
            _ => {
                let (ca, da) = self.as_summary();
                let (cb, db) = other.as_summary();
                // counts are upper bounds once summarized; overlap is unknowable
                LineageSet::Summary {
                    count: ca + cb,
                    digest: [da[0] | db[0], da[1] | db[1], da[2] | db[2], da[3] | db[3]],
                }
            }
        }
    }

    fn summarize(tokens: &[RowToken]) -> LineageSet {
        let mut digest = [0u64; 4];
        for t in tokens {
            let (word, bit) = bloom_position(t);
            digest[word] |= 1 << bit;
        }
        LineageSet::Summary { count: tokens.len() as u64, digest }
    }

    fn as_summary(&self) -> (u64, [u64; 4]) {
        match self {
            LineageSet::Exact(v) => {
                if let LineageSet::Summary { count, digest } = LineageSet::summarize(v) {
                    (count, digest)
                } else {
                    unreachable!()
                }
            }
            LineageSet::Summary { count, digest } => (*count, *digest),
        }
    }
}

fn bloom_position(token: &RowToken) -> (usize, u32) {
    let mut h = crate::exec::split::FNV_OFFSET;
    for b in token.source.as_bytes() {
        h = crate::exec::split::fnv1a_step(h, *b);
    }
    for b in token.index.to_le_bytes() {
        h = crate::exec::split::fnv1a_step(h, b);
    }
    ((h as usize >> 6) % 4, (h % 64) as u32)
}

/// One annotation slot. The variants cover the built-in inspections; custom
/// inspections can reuse them or carry text.
#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    /// No information propagated for this inspection at this row.
    Absent,
    Lineage(LineageSet),
    Value(Value),
    Text(String),
}

impl Annotation {
    pub fn lineage(&self) -> Option<&LineageSet> {
        match self {
            Annotation::Lineage(l) => Some(l),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            Annotation::Value(v) => Some(v),
            _ => None,
        }
    }
}
