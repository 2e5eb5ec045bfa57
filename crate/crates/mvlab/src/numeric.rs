//! Fixed-order summation and small vector helpers.
//!
//! All reductions in the crate go through [`pairwise_sum`] (or its strided
//! variant) so that a sum's value depends only on the operand sequence, never
//! on chunking or thread count. The tree splits exactly in half, which makes
//! any power-of-two aligned block an exact subtree: summing per-block partial
//! sums bitwise reproduces the full sum. The Brownian coarsening cache relies
//! on this.

/// Pairwise sum with a fixed binary tree (split at `n/2`, leaves of size <= 2).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Pairwise sum of `count` elements starting at `start` with step `stride`.
pub fn pairwise_sum_strided(xs: &[f64], start: usize, stride: usize, count: usize) -> f64 {
    match count {
        0 => 0.0,
        1 => xs[start],
        2 => xs[start] + xs[start + stride],
        n => {
            let mid = n / 2;
            pairwise_sum_strided(xs, start, stride, mid)
                + pairwise_sum_strided(xs, start + mid * stride, stride, n - mid)
        }
    }
}

/// Pairwise sum of `f(0), ..., f(n-1)` with the same fixed tree.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: &F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, n: usize, f: &F) -> f64 {
        match n {
            0 => 0.0,
            1 => f(lo),
            2 => f(lo) + f(lo + 1),
            n => {
                let mid = n / 2;
                rec(lo, mid, f) + rec(lo + mid, n - mid, f)
            }
        }
    }
    rec(0, n, f)
}

/// Euclidean norm of a vector.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance between two equal-length vectors.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Median of a slice (average of the two central order statistics for even
/// lengths). Returns NaN for an empty slice.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_block_alignment_is_exact() {
        // Power-of-two aligned blocks are subtrees: block sums recombine
        // bitwise to the full sum.
        let xs: Vec<f64> = (0..1024).map(|i| ((i * 2654435761u64 as usize) as f64).sin()).collect();
        let total = pairwise_sum(&xs);
        for block in [2usize, 4, 8, 64, 256, 1024] {
            let partials: Vec<f64> = xs.chunks(block).map(pairwise_sum).collect();
            assert_eq!(pairwise_sum(&partials).to_bits(), total.to_bits());
        }
    }

    #[test]
    fn strided_matches_dense() {
        let xs: Vec<f64> = (0..300).map(|i| (i as f64).cos()).collect();
        let dense: Vec<f64> = xs.iter().skip(1).step_by(3).copied().collect();
        assert_eq!(
            pairwise_sum_strided(&xs, 1, 3, dense.len()).to_bits(),
            pairwise_sum(&dense).to_bits()
        );
    }

    #[test]
    fn sum_by_matches_slice() {
        let xs: Vec<f64> = (0..257).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert_eq!(
            pairwise_sum_by(xs.len(), &|i| xs[i]).to_bits(),
            pairwise_sum(&xs).to_bits()
        );
    }

    #[test]
    fn median_basics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
