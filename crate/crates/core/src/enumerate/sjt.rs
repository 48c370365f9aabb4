//! Steinhaus-Johnson-Trotter permutation order.

/// All permutations of `0..n` in SJT order. Each permutation after the first
/// comes with the position `k` of the adjacent transposition `(k, k+1)` that
/// produced it from its predecessor.
pub fn sjt(n: usize) -> Vec<(Vec<usize>, Option<usize>)> {
    let mut perm: Vec<usize> = (0..n).collect();
    // true: the element looks left
    let mut left = vec![true; n];
    let mut out = vec![(perm.clone(), None)];
    loop {
        let mobile = (0..n)
            .filter(|&p| {
                let x = perm[p];
                if left[x] {
                    p > 0 && perm[p - 1] < x
                } else {
                    p + 1 < n && perm[p + 1] < x
                }
            })
            .max_by_key(|&p| perm[p]);
        let Some(p) = mobile else { break };
        let x = perm[p];
        let q = if left[x] { p - 1 } else { p + 1 };
        perm.swap(p, q);
        for y in x + 1..n {
            left[y] = !left[y];
        }
        out.push((perm.clone(), Some(p.min(q))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn visits_every_permutation_once() {
        for n in 0..=6 {
            let all = sjt(n);
            let expected: usize = (1..=n).product();
            assert_eq!(all.len(), expected.max(1));
            let distinct: BTreeSet<_> = all.iter().map(|(p, _)| p.clone()).collect();
            assert_eq!(distinct.len(), all.len());
        }
    }

    #[test]
    fn consecutive_permutations_differ_by_one_adjacent_swap() {
        let all = sjt(4);
        for w in all.windows(2) {
            let k = w[1].1.unwrap();
            let mut prev = w[0].0.clone();
            prev.swap(k, k + 1);
            assert_eq!(prev, w[1].0);
        }
    }

    #[test]
    fn known_prefix() {
        let perms: Vec<Vec<usize>> = sjt(3).into_iter().map(|(p, _)| p).collect();
        assert_eq!(perms, vec![vec![0, 1, 2], vec![0, 2, 1], vec![2, 0, 1], vec![2, 1, 0], vec![1, 2, 0], vec![1, 0, 2]]);
    }
}
