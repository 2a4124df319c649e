/// Euclidean projection of `values` onto non-increasing sequences
/// (pool-adjacent-violators). Pooled blocks take their mean, so the total sum
/// is preserved.
pub fn isotonic_correct(values: &[f64]) -> Vec<f64> {
    // (sum, count) per block
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (s0 + s1, c0 + c1);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        out.extend(std::iter::repeat_n(s / c as f64, c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: the projection onto the closed cone of
    /// non-increasing sequences is the minimum-distance candidate among all
    /// contiguous partitions with block means (feasible ones only).
    fn partition_oracle(y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << (n - 1)) {
            let mut cand = Vec::with_capacity(n);
            let mut start = 0;
            for i in 0..n {
                let cut = i == n - 1 || mask & (1 << i) != 0;
                if cut {
                    let block = &y[start..=i];
                    let m = block.iter().sum::<f64>() / block.len() as f64;
                    cand.extend(std::iter::repeat_n(m, block.len()));
                    start = i + 1;
                }
            }
            if cand.windows(2).any(|w| w[0] < w[1] - 1e-12) {
                continue;
            }
            let d: f64 = cand.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, cand));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn already_decreasing() {
        assert_eq!(isotonic_correct(&[3.0, 1.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn single_pool() {
        assert_eq!(isotonic_correct(&[1.0, 2.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn three_way_pool_matches_oracle() {
        let out = isotonic_correct(&[1.0, 3.0, 2.0]);
        let oracle = partition_oracle(&[1.0, 3.0, 2.0]);
        assert_eq!(oracle, vec![2.0, 2.0, 2.0]);
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(isotonic_correct(&[5.0]), vec![5.0]);
        assert!(isotonic_correct(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn matches_partition_oracle(y in prop::collection::vec(-10.0f64..10.0, 1..9)) {
            let out = isotonic_correct(&y);
            let oracle = partition_oracle(&y);
            for (a, b) in out.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn monotone_and_sum_preserving(y in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let out = isotonic_correct(&y);
            prop_assert_eq!(out.len(), y.len());
            for w in out.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let (s0, s1): (f64, f64) = (y.iter().sum(), out.iter().sum());
            prop_assert!((s0 - s1).abs() <= 1e-10 * s0.abs().max(1.0));
        }
    }
}
