//! Deterministic train/test assignment.
//!
//! Each row hashes independently of every other row, so the assignment is
//! stable under filtering, reordering, and concatenation upstream.

use crate::ir::plan::SplitBranch;
use crate::ir::relation::RowId;

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x100_0000_01b3;

#[inline]
pub fn fnv1a_step(hash: u64, byte: u8) -> u64 {
    (hash ^ byte as u64).wrapping_mul(FNV_PRIME)
}

/// FNV-1a 64-bit over a byte slice, continuing from `hash`.
#[inline]
pub fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash = fnv1a_step(hash, b);
    }
    hash
}

/// Hash of (seed ‖ source ‖ index), the per-row key for splits and for
/// corruption sampling. Integers enter the stream little-endian.
pub fn row_hash(row_id: &RowId, seed: u64) -> u64 {
    let mut h = fnv1a_extend(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a_extend(h, row_id.source.as_bytes());
    fnv1a_extend(h, &row_id.index.to_le_bytes())
}

/// Buckets the hash into 10^6 cells; the low `test_fraction` share is Test.
pub fn split_assign(row_id: &RowId, seed: u64, test_fraction: f64) -> SplitBranch {
    debug_assert!(test_fraction > 0.0 && test_fraction < 1.0);
    let bucket = row_hash(row_id, seed) % 1_000_000;
    if (bucket as f64) / 1_000_000.0 < test_fraction {
        SplitBranch::Test
    } else {
        SplitBranch::Train
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        // Published FNV-1a 64 values for "" and "a".
        assert_eq!(fnv1a_extend(FNV_OFFSET, b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_extend(FNV_OFFSET, b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn tiny_fraction_sends_nonzero_buckets_to_train() {
        for index in 0..50 {
            let row = RowId { source: "s".into(), index };
            let bucket = row_hash(&row, 3) % 1_000_000;
            let got = split_assign(&row, 3, 1e-9);
            if bucket >= 1 {
                assert_eq!(got, SplitBranch::Train);
            }
        }
    }

    #[test]
    fn assignment_is_pure() {
        let row = RowId { source: "orders".into(), index: 17 };
        let first = split_assign(&row, 42, 0.3);
        for _ in 0..10 {
            assert_eq!(split_assign(&row, 42, 0.3), first);
        }
    }

    #[test]
    fn thousand_rows_land_near_the_fraction() {
        let test_count = (0..1000)
            .filter(|&i| {
                let row = RowId { source: "synthetic".into(), index: i };
                split_assign(&row, 7, 0.2) == SplitBranch::Test
            })
            .count();
        // 197 frozen from an independent reimplementation of the hash.
        assert_eq!(test_count, 197);
        assert!((150..=250).contains(&test_count));
    }

    #[test]
    fn spot_assignments_match_reference() {
        let cases = [(0, SplitBranch::Test), (1, SplitBranch::Train), (2, SplitBranch::Test), (17, SplitBranch::Train)];
        for (index, expected) in cases {
            let row = RowId { source: "orders".into(), index };
            assert_eq!(split_assign(&row, 42, 0.3), expected);
        }
    }
}
