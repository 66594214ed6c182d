//! Binomial coefficients and fixed-size subset enumeration.

/// `C(n, k)`, or 0 when `k > n`. Saturates at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All `size`-subsets of `{1..=n}` in colexicographic order, each sorted ascending.
pub fn subsets(n: usize, size: usize) -> Subsets {
    Subsets {
        n,
        current: if size <= n { Some((1..=size).collect()) } else { None },
    }
}

#[derive(Clone, Debug)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        let r = next.len();
        // Bump the lowest element that has room, reset everything below it.
        let mut advanced = false;
        for i in 0..r {
            let limit = if i + 1 < r { next[i + 1] } else { self.n + 1 };
            if next[i] + 1 < limit {
                next[i] += 1;
                for (j, slot) in next.iter_mut().enumerate().take(i) {
                    *slot = j + 1;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Position of a sorted subset in the colexicographic order of [`subsets`].
pub fn colex_rank(subset: &[usize]) -> u128 {
    subset
        .iter()
        .enumerate()
        .map(|(i, &e)| binomial(e - 1, i + 1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(3, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }

    #[test]
    fn colex_order_small() {
        let got: Vec<_> = subsets(4, 2).collect();
        assert_eq!(
            got,
            vec![vec![1, 2], vec![1, 3], vec![2, 3], vec![1, 4], vec![2, 4], vec![3, 4]]
        );
        assert_eq!(subsets(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(subsets(2, 3).count(), 0);
        assert_eq!(subsets(3, 3).collect::<Vec<_>>(), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn counts_and_ranks_agree() {
        for n in 0..8 {
            for k in 0..=n + 1 {
                let all: Vec<_> = subsets(n, k).collect();
                assert_eq!(all.len() as u128, binomial(n, k));
                for (i, s) in all.iter().enumerate() {
                    assert_eq!(colex_rank(s), i as u128);
                    assert!(s.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }
}
