use statrs::distribution::{Binomial, DiscreteCDF};

/// Paired comparison tally: how often `a` beat, tied or lost to `b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SignTally {
    pub wins: u64,
    pub ties: u64,
    pub losses: u64,
}

impl SignTally {
    pub fn from_pairs<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> Self {
        let mut t = Self::default();
        for (a, b) in pairs {
            match a.total_cmp(&b) {
                std::cmp::Ordering::Greater => t.wins += 1,
                std::cmp::Ordering::Equal => t.ties += 1,
                std::cmp::Ordering::Less => t.losses += 1,
            }
        }
        t
    }

    /// One-sided sign-test p-value for "a tends to exceed b"; ties dropped.
    pub fn p_value(&self) -> f64 {
        sign_test_p(self.wins, self.losses)
    }
}

/// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
pub fn sign_test_p(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    b.sf(wins - 1)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test_p(0, 0), 1.0);
        assert!((sign_test_p(20, 0) - 0.5f64.powi(20)).abs() < 1e-18);
        // P(X >= 2 | n=3) = 4/8
        assert!((sign_test_p(2, 1) - 0.5).abs() < 1e-12);
        // P(X >= 15 | n=20) = 21700/1048576
        assert!((sign_test_p(15, 5) - 21700.0 / 1048576.0).abs() < 1e-12);
    }

    #[test]
    fn tally_counts() {
        let t = SignTally::from_pairs([(1.0, 0.0), (0.5, 0.5), (0.0, 1.0), (2.0, 1.0)]);
        assert_eq!(t, SignTally { wins: 2, ties: 1, losses: 1 });
    }
}
