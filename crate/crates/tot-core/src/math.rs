//! Log-space accumulation helpers used by the solver and the CTC recursion.

/// log(exp(a) + exp(b)) without leaving log space.
#[inline]
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ exp(x_i) over a slice; empty input and all -inf both give -inf.
#[inline]
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - hi).exp()).sum();
    hi + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logaddexp_matches_direct_sum_in_safe_range() {
        let got = logaddexp(0.1_f64.ln(), 0.2_f64.ln());
        let want = 0.3_f64.ln();
        assert!((got - want).abs() < 1e-15, "got={got} want={want}");
    }

    #[test]
    fn logaddexp_survives_magnitudes_that_overflow_exp() {
        let got = logaddexp(1000.0, 1000.0);
        let want = 1000.0 + std::f64::consts::LN_2;
        assert!((got - want).abs() < 1e-12, "got={got} want={want}");
        assert!(logaddexp(-1e9, 3.5) == 3.5 || (logaddexp(-1e9, 3.5) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn logaddexp_ignores_neg_infinity_operands() {
        assert_eq!(logaddexp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(logaddexp(2.0, f64::NEG_INFINITY), 2.0);
        assert_eq!(
            logaddexp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn logsumexp_of_uniform_terms_is_log_count() {
        let xs = [0.0; 8];
        let got = logsumexp(&xs);
        let want = 8.0_f64.ln();
        assert!((got - want).abs() < 1e-15, "got={got} want={want}");
    }

    #[test]
    fn logsumexp_handles_empty_and_all_neg_infinity() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }
}
