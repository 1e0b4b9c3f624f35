//! Search for the perfect-balance allocation `w* = argmin |μᵀw|` over
//! balanced vectors. Small problems are solved exhaustively; larger ones by
//! single-swap descent from random balanced starts.

use rand::seq::SliceRandom;
use rand::Rng;

use super::allocation::{for_each_combination, Allocation, ArmSizes};
use crate::error::{Error, Result};

/// Largest `2n` solved by exhaustive search.
pub const EXHAUSTIVE_LIMIT: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceResult {
    pub allocation: Allocation,
    pub imbalance: f64,
    pub exhaustive: bool,
}

pub fn find_perfect_balance<R: Rng + ?Sized>(
    mu: &[f64],
    arms: &ArmSizes,
    restarts: usize,
    rng: &mut R,
) -> Result<BalanceResult> {
    if mu.len() != arms.total() {
        return Err(Error::DimensionMismatch {
            expected: arms.total(),
            got: mu.len(),
        });
    }
    if !arms.is_equal() {
        return Err(Error::Unsupported(
            "no perfect-balance heuristic exists for unequal allocation".into(),
        ));
    }
    if mu.len() <= EXHAUSTIVE_LIMIT {
        Ok(exhaustive(mu))
    } else {
        Ok(greedy(mu, restarts.max(1), rng))
    }
}

/// Exact minimizer with subject 0 pinned to treatment (mirror symmetry).
pub fn exhaustive(mu: &[f64]) -> BalanceResult {
    let total = mu.len();
    let half = total / 2;
    let sum: f64 = mu.iter().sum();
    let mut best = (f64::INFINITY, Vec::new());
    for_each_combination(total - 1, half - 1, |rest| {
        let treated = mu[0] + rest.iter().map(|&k| mu[k + 1]).sum::<f64>();
        let imbalance = (2.0 * treated - sum).abs();
        if imbalance < best.0 {
            best = (imbalance, rest.to_vec());
        }
    });
    let allocation =
        Allocation::from_treated(total, std::iter::once(0).chain(best.1.iter().map(|k| k + 1)));
    BalanceResult {
        imbalance: allocation.dot(mu).abs(),
        allocation,
        exhaustive: true,
    }
}

/// Best single T/C swap descent over `restarts` random balanced starts.
pub fn greedy<R: Rng + ?Sized>(mu: &[f64], restarts: usize, rng: &mut R) -> BalanceResult {
    let total = mu.len();
    let mut best: Option<(f64, Vec<i8>)> = None;
    for _ in 0..restarts {
        let mut w: Vec<i8> = (0..total).map(|i| if i < total / 2 { 1 } else { -1 }).collect();
        w.shuffle(rng);
        let imbalance = descend(mu, &mut w);
        if best.as_ref().is_none_or(|(b, _)| imbalance < *b) {
            best = Some((imbalance, w));
        }
        if imbalance == 0.0 {
            break;
        }
    }
    let (_, w) = best.expect("at least one restart");
    let allocation = Allocation::new(w).expect("swaps preserve signs");
    BalanceResult {
        imbalance: allocation.dot(mu).abs(),
        allocation,
        exhaustive: false,
    }
}

fn descend(mu: &[f64], w: &mut [i8]) -> f64 {
    let mut s: f64 = w.iter().zip(mu).map(|(&wi, &m)| wi as f64 * m).sum();
    loop {
        // controls sorted by μ, so the best partner for each treated subject
        // is found by binary search for μ_j ≈ μ_i - s/2
        let mut controls: Vec<usize> = (0..w.len()).filter(|&i| w[i] == -1).collect();
        controls.sort_by(|&a, &b| mu[a].total_cmp(&mu[b]));
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..w.len()).filter(|&i| w[i] == 1) {
            let target = mu[i] - s / 2.0;
            let pos = controls.partition_point(|&j| mu[j] < target);
            for &j in controls[pos.saturating_sub(1)..(pos + 1).min(controls.len())].iter() {
                let next = (s - 2.0 * mu[i] + 2.0 * mu[j]).abs();
                if best.is_none_or(|(b, _, _)| next < b) {
                    best = Some((next, i, j));
                }
            }
        }
        match best {
            Some((next, i, j)) if next < s.abs() => {
                w[i] = -1;
                w[j] = 1;
                s = s - 2.0 * mu[i] + 2.0 * mu[j];
            }
            _ => return s.abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn solve(mu: &[f64]) -> BalanceResult {
        let arms = ArmSizes::equal(mu.len() / 2).unwrap();
        find_perfect_balance(mu, &arms, 10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn symmetric_pairs_balance_exactly() {
        let r = solve(&[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(r.imbalance, 0.0);
        let w = r.allocation.entries();
        assert_eq!(w[0] + w[1], 0);
    }

    #[test]
    fn one_two_three_four() {
        let r = solve(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.imbalance, 0.0);
        assert_eq!(r.allocation.entries(), &[1, -1, -1, 1]);
        assert!(r.exhaustive);
    }

    #[test]
    fn powers_of_two_minimum_is_three() {
        // sums of treated pairs: 3, 5, 9, 6, 10, 12 against a total of 15
        let r = solve(&[1.0, 2.0, 4.0, 8.0]);
        assert_eq!(r.imbalance, 3.0);
    }

    #[test]
    fn unequal_allocation_is_unsupported() {
        let arms = ArmSizes::new(2, 1).unwrap();
        let err = find_perfect_balance(&[1.0; 4], &arms, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn greedy_reaches_small_imbalance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let r = greedy(&mu, 5, &mut rng);
        assert!(r.allocation.is_valid_for(&ArmSizes::equal(100).unwrap()));
        assert!(r.imbalance < 1e-3, "imbalance {}", r.imbalance);
    }
}
