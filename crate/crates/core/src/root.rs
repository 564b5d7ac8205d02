//! Bracketing root finders shared by the threshold and cutoff solvers.

use crate::error::{Error, Result};

/// Bisection on a sign-changing bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl Bisection {
    /// Root of `f` on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
    pub fn solve<F>(&self, f: F, mut lo: f64, mut hi: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let mut flo = f(lo);
        let fhi = f(hi);
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
            return Err(Error::RootNotBracketed { lo, hi });
        }
        for _ in 0..self.max_iter {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= self.tol || mid <= lo || mid >= hi {
                break;
            }
            let fmid = f(mid);
            if fmid == 0.0 {
                return Ok(mid);
            }
            if fmid.signum() == flo.signum() {
                lo = mid;
                flo = fmid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Smallest `x` in `[lo, hi]` (to within `tol`) at which the monotone
    /// predicate switches from false to true. The returned point always
    /// satisfies the predicate.
    pub fn first_true<P>(&self, pred: P, mut lo: f64, mut hi: f64) -> Result<f64>
    where
        P: Fn(f64) -> bool,
    {
        if pred(lo) {
            return Ok(lo);
        }
        if !pred(hi) {
            return Err(Error::RootNotBracketed { lo, hi });
        }
        for _ in 0..self.max_iter {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= self.tol || mid <= lo || mid >= hi {
                break;
            }
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Doubles `hi` until `pred(hi)` holds, giving up after `max_doublings`.
pub fn expand_upper<P>(pred: P, lo: f64, mut hi: f64, max_doublings: usize) -> Result<f64>
where
    P: Fn(f64) -> bool,
{
    for _ in 0..=max_doublings {
        if pred(hi) {
            return Ok(hi);
        }
        hi = lo + 2.0 * (hi - lo);
    }
    Err(Error::RootNotBracketed { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = Bisection::default()
            .solve(|x| x * x - 2.0, 0.0, 2.0)
            .unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn rejects_same_sign_bracket() {
        let e = Bisection::default().solve(|x| x * x + 1.0, -1.0, 1.0);
        assert!(matches!(e, Err(Error::RootNotBracketed { .. })));
    }

    #[test]
    fn first_true_returns_satisfying_point() {
        let b = Bisection::default();
        let x = b.first_true(|x| x >= 0.3, 0.0, 1.0).unwrap();
        assert!(x >= 0.3 && x - 0.3 < 1e-9);
        assert_eq!(b.first_true(|_| true, 0.0, 1.0).unwrap(), 0.0);
        assert!(b.first_true(|_| false, 0.0, 1.0).is_err());
    }

    #[test]
    fn expand_upper_grows_bracket() {
        let hi = expand_upper(|x| x > 100.0, 0.0, 1.0, 20).unwrap();
        assert!(hi > 100.0);
        assert!(expand_upper(|_| false, 0.0, 1.0, 5).is_err());
    }
}
