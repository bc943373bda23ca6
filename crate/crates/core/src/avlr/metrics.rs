use crate::error::{Error, Result};

/// Rank-based (Mann-Whitney) area under the ROC curve. Tied scores share
/// their mean rank, so a tied positive/negative pair counts one half.
pub fn auc(scored: &[(f64, u8)]) -> Result<f64> {
    if scored.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Data("AUC input contains NaN scores".into()));
    }
    let positives = scored.iter().filter(|(_, y)| *y == 1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Data("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks are 1-based; the tie block i..=j shares their mean.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| scored[k].1 == 1).count();
        rank_sum += mean_rank * tied_pos as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scored: &[(f64, u8)]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (sp, _) in scored.iter().filter(|(_, y)| *y == 1) {
            for (sn, _) in scored.iter().filter(|(_, y)| *y == 0) {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(auc(&[(0.1, 0), (0.2, 0), (0.7, 1), (0.9, 1)]).unwrap(), 1.0);
        assert_eq!(auc(&[(0.9, 0), (0.7, 1)]).unwrap(), 0.0);
        assert_eq!(auc(&[(0.3, 0), (0.3, 1), (0.3, 0), (0.3, 1)]).unwrap(), 0.5);
    }

    #[test]
    fn four_point_case() {
        let s = [(0.1, 0), (0.4, 0), (0.35, 1), (0.8, 1)];
        assert_eq!(auc(&s).unwrap(), 0.75);
        assert_eq!(pairwise(&s), 0.75);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auc(&[(0.1, 1), (0.2, 1)]).is_err());
        assert!(auc(&[]).is_err());
        assert!(auc(&[(f64::NAN, 1), (0.2, 0)]).is_err());
    }

    proptest! {
        #[test]
        fn matches_pair_enumeration(v in proptest::collection::vec((0u8..6, 0u8..2), 2..60)) {
            let scored: Vec<(f64, u8)> = v.iter().map(|&(s, y)| (s as f64 / 4.0, y)).collect();
            prop_assume!(scored.iter().any(|x| x.1 == 1) && scored.iter().any(|x| x.1 == 0));
            let got = auc(&scored).unwrap();
            prop_assert!((got - pairwise(&scored)).abs() < 1e-12);
        }
    }
}
