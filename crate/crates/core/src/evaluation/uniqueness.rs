use crate::bits::BitVector;
use crate::error::{AncError, Result};

/// Per-message similarity of the ciphertexts produced under every key, and
/// the derived uniqueness. Both are percentages.
#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessScore {
    pub message: BitVector,
    /// Share of ciphertext bits equal to their column mode, in percent.
    pub similarity_pct: f64,
    /// `100·(100 − s)/50`.
    pub uniqueness_pct: f64,
}

/// Scores one message from its `N_k` ciphertexts (one per key).
///
/// For each bit position the mode is taken over the keys, ties resolving to
/// 1. A perfect even split contributes exactly half its column either way.
pub fn score_table(message: BitVector, table: &[BitVector]) -> Result<UniquenessScore> {
    if table.len() < 2 {
        return Err(AncError::Argument(format!(
            "uniqueness needs at least two keys, got {}",
            table.len()
        )));
    }
    let n_bits = table[0].len();
    if table.iter().any(|row| row.len() != n_bits) || n_bits == 0 {
        return Err(AncError::Argument("ciphertexts differ in length".into()));
    }
    let n_keys = table.len();
    let mut agree = 0usize;
    for i in 0..n_bits {
        let ones = table.iter().filter(|row| row.get(i)).count();
        agree += ones.max(n_keys - ones);
    }
    let similarity_pct = 100.0 * agree as f64 / (n_bits * n_keys) as f64;
    Ok(UniquenessScore {
        message,
        similarity_pct,
        uniqueness_pct: 100.0 * (100.0 - similarity_pct) / 50.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: u64) -> BitVector {
        BitVector::from_value(v, 8)
    }

    /// Direct transcription of the double sum: find the mode, then count
    /// matches entry by entry.
    fn brute_force(table: &[BitVector]) -> f64 {
        let (n_keys, n_bits) = (table.len(), table[0].len());
        let mut hits = 0;
        for i in 0..n_bits {
            let ones = (0..n_keys).filter(|&j| table[j].get(i)).count();
            let mode = ones * 2 >= n_keys;
            for j in 0..n_keys {
                if table[j].get(i) == mode {
                    hits += 1;
                }
            }
        }
        100.0 * hits as f64 / (n_bits * n_keys) as f64
    }

    #[test]
    fn identical_ciphertexts() {
        let s = score_table(row(0), &vec![row(0x3C); 70]).unwrap();
        assert_eq!(s.similarity_pct, 100.0);
        assert_eq!(s.uniqueness_pct, 0.0);
    }

    #[test]
    fn even_split_is_fully_unique() {
        let table: Vec<_> = (0..70).map(|j| row(if j < 35 { 0x00 } else { 0xFF })).collect();
        let s = score_table(row(0), &table).unwrap();
        assert_eq!(s.similarity_pct, 50.0);
        assert_eq!(s.uniqueness_pct, 100.0);
    }

    #[test]
    fn three_one_split() {
        let table = [row(0xFF), row(0xFF), row(0xFF), row(0x00)];
        let s = score_table(row(0), &table).unwrap();
        assert_eq!(s.similarity_pct, 75.0);
        assert_eq!(s.uniqueness_pct, 50.0);
    }

    #[test]
    fn too_few_keys() {
        assert!(score_table(row(0), &[row(1)]).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(values in proptest::collection::vec(0u64..256, 6)) {
            let table: Vec<_> = values.into_iter().map(row).collect();
            let s = score_table(row(0), &table).unwrap();
            prop_assert_eq!(s.similarity_pct, brute_force(&table));
            prop_assert!(s.similarity_pct >= 50.0 && s.similarity_pct <= 100.0);
            prop_assert!(s.uniqueness_pct >= 0.0 && s.uniqueness_pct <= 100.0);
        }

        #[test]
        fn odd_key_counts_stay_in_range(values in proptest::collection::vec(0u64..256, 2..12)) {
            let table: Vec<_> = values.into_iter().map(row).collect();
            let s = score_table(row(0), &table).unwrap();
            prop_assert!(s.uniqueness_pct >= 0.0 && s.uniqueness_pct <= 100.0);
        }
    }
}
