use super::StatsError;

fn check(pvals: &[f64]) -> Result<(), StatsError> {
    match pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&bad) => Err(StatsError::InvalidPValue(bad)),
        None => Ok(()),
    }
}

/// Holm's sequential Bonferroni procedure.
///
/// Hypotheses are visited in ascending p order; the i-th smallest (1-based)
/// is rejected while `p <= alpha / (m - i + 1)`. The first failure retains it
/// and every larger p. Flags come back in input order.
pub fn holm(pvals: &[f64], alpha: f64) -> Result<Vec<bool>, StatsError> {
    check(pvals)?;
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut reject = vec![false; m];
    for (rank, &idx) in order.iter().enumerate() {
        if pvals[idx] <= alpha / (m - rank) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    Ok(reject)
}

/// Single-step Bonferroni: reject where `p <= alpha / m`.
pub fn bonferroni(pvals: &[f64], alpha: f64) -> Result<Vec<bool>, StatsError> {
    check(pvals)?;
    let m = pvals.len() as f64;
    Ok(pvals.iter().map(|&p| p <= alpha / m).collect())
}

/// No correction: reject where `p <= alpha`.
pub fn uncorrected(pvals: &[f64], alpha: f64) -> Result<Vec<bool>, StatsError> {
    check(pvals)?;
    Ok(pvals.iter().map(|&p| p <= alpha).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        assert_eq!(
            holm(&[0.001, 0.011, 0.02, 0.04], 0.05).unwrap(),
            vec![true; 4]
        );
        assert_eq!(
            holm(&[0.001, 0.02, 0.03, 0.04], 0.05).unwrap(),
            vec![true, false, false, false]
        );
        assert_eq!(holm(&[1.0; 5], 0.05).unwrap(), vec![false; 5]);
        assert!(holm(&[], 0.05).unwrap().is_empty());
    }

    #[test]
    fn order_of_input_does_not_matter() {
        assert_eq!(
            holm(&[0.04, 0.001, 0.03, 0.02], 0.05).unwrap(),
            vec![false, true, false, false]
        );
    }

    #[test]
    fn reported_anxiety_family() {
        // .007 > .05/8 stops the procedure after the first hypothesis
        let p = [0.001, 0.007, 0.01, 0.01, 0.02, 0.10, 0.25, 0.52, 0.71];
        let flags = holm(&p, 0.05).unwrap();
        assert_eq!(flags.iter().filter(|f| **f).count(), 1);
        assert!(flags[0]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(holm(&[0.1, 1.2], 0.05), Err(StatsError::InvalidPValue(1.2)));
        assert!(holm(&[f64::NAN], 0.05).is_err());
    }

    proptest! {
        #[test]
        fn sandwiched_between_bonferroni_and_uncorrected(
            p in prop::collection::vec(0.0f64..=1.0, 1..20)
        ) {
            let h = holm(&p, 0.05).unwrap();
            let b = bonferroni(&p, 0.05).unwrap();
            let u = uncorrected(&p, 0.05).unwrap();
            for i in 0..p.len() {
                prop_assert!(!b[i] || h[i]);
                prop_assert!(!h[i] || u[i]);
            }
        }

        #[test]
        fn permutation_invariant(
            p in prop::collection::vec(0.0f64..0.1, 1..15),
            seed in any::<u64>()
        ) {
            let mut perm: Vec<usize> = (0..p.len()).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            let base = holm(&p, 0.05).unwrap();
            let other = holm(&shuffled, 0.05).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(other[k], base[i]);
            }
        }
    }
}
