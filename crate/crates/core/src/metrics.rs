//! Agreement measures between true and estimated anomalies.

use alloc::format;

use crate::error::{Error, Result};

/// Adjusted Rand index of two binary labellings. When either labelling puts
/// every observation in one class the index is undefined; it is then 1 if the
/// two partitions coincide (up to swapping labels) and 0 otherwise.
pub fn adjusted_rand_index(truth: &[bool], pred: &[bool]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "labellings have lengths {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let n = truth.len();
    let mut table = [[0u64; 2]; 2];
    for (&a, &b) in truth.iter().zip(pred) {
        table[a as usize][b as usize] += 1;
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let same = || truth == pred || truth.iter().zip(pred).all(|(a, b)| a != b);
    let single = |m: [u64; 2]| m[0] == 0 || m[1] == 0;
    if n < 2 || single(rows) || single(cols) {
        return Ok(if same() { 1.0 } else { 0.0 });
    }
    let pairs = |k: u64| (k * k.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&k| pairs(k)).sum();
    let sum_rows: f64 = rows.iter().map(|&k| pairs(k)).sum();
    let sum_cols: f64 = cols.iter().map(|&k| pairs(k)).sum();
    let expected = sum_rows * sum_cols / pairs(n as u64);
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        // only possible when both partitions are made of singletons
        return Ok(if same() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Precision and recall of an estimated variable subset. Precision is 1 when
/// both subsets are empty and 0 when only the estimate is; recall is 1 for an
/// empty true subset.
pub fn subset_metrics(truth: &[usize], pred: &[usize]) -> (f64, f64) {
    let hits = pred.iter().filter(|j| truth.contains(j)).count() as f64;
    let precision = if pred.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / pred.len() as f64
    };
    let recall = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(v: &[u8]) -> alloc::vec::Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn identical_and_degenerate() {
        let a = bits(&[1, 1, 0, 0, 1]);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &[false; 5]).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[false; 5], &[false; 5]).unwrap(), 1.0);
        assert!(adjusted_rand_index(&a, &[false; 4]).is_err());
    }

    #[test]
    fn hand_contingency_table() {
        // table [[4, 0], [1, 1]]; pairs: index 6 + 0 + 0 + 0 = 6,
        // rows (4, 2) -> 6 + 1 = 7, cols (5, 1) -> 10, total pairs 15
        // expected 7*10/15 = 14/3, max 8.5, ARI = (6 - 14/3)/(8.5 - 14/3) = 8/23
        let t = bits(&[1, 1, 0, 0, 0, 0]);
        let p = bits(&[1, 0, 0, 0, 0, 0]);
        let ari = adjusted_rand_index(&t, &p).unwrap();
        assert!((ari - 8.0 / 23.0).abs() < 1e-15);
    }

    #[test]
    fn subset_examples() {
        assert_eq!(subset_metrics(&[1, 2], &[1, 2]), (1.0, 1.0));
        assert_eq!(subset_metrics(&[1], &[1, 2]), (0.5, 1.0));
        assert_eq!(subset_metrics(&[1, 2, 3], &[2, 4]), (0.5, 1.0 / 3.0));
        assert_eq!(subset_metrics(&[1], &[]), (0.0, 0.0));
        assert_eq!(subset_metrics(&[], &[]), (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn ari_symmetric_and_label_invariant(v in proptest::collection::vec((any::<bool>(), any::<bool>()), 2..60)) {
            let a: alloc::vec::Vec<bool> = v.iter().map(|x| x.0).collect();
            let b: alloc::vec::Vec<bool> = v.iter().map(|x| x.1).collect();
            let ab = adjusted_rand_index(&a, &b).unwrap();
            prop_assert_eq!(ab, adjusted_rand_index(&b, &a).unwrap());
            let flipped: alloc::vec::Vec<bool> = b.iter().map(|x| !x).collect();
            let af = adjusted_rand_index(&a, &flipped).unwrap();
            prop_assert!((ab - af).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12);
        }
    }
}
