use super::NumericsError;

/// Number of doublings (and halvings) of the seed tried while bracketing.
pub const BRACKET_DOUBLINGS: i32 = 60;

/// Root of a strictly monotone function on `(0, ∞)`.
///
/// A bracket is grown geometrically around `seed` (alternately `seed * 2^k`
/// and `seed * 2^-k`, `k <= 60`) until the sign flips, then bisected at
/// geometric midpoints until the bracket's relative width is below `tol`.
pub fn bisect_monotone<F>(f: F, seed: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    if !(seed > 0.0 && seed.is_finite()) {
        return Err(NumericsError::InvalidInput(format!(
            "seed must be positive and finite, got {seed}"
        )));
    }
    if !(tol > 0.0) {
        return Err(NumericsError::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let eval = |c: f64| {
        let v = f(c);
        if v.is_nan() {
            Err(NumericsError::NonFinite { at: c })
        } else {
            Ok(v)
        }
    };

    let f_seed = eval(seed)?;
    if f_seed == 0.0 {
        return Ok(seed);
    }

    // (lo, sign of f(lo), hi) with f(hi) of the opposite sign
    let mut bracket = None;
    let mut up = seed;
    let mut down = seed;
    for _ in 0..BRACKET_DOUBLINGS {
        up *= 2.0;
        let f_up = eval(up)?;
        if f_up == 0.0 {
            return Ok(up);
        }
        if f_up.signum() != f_seed.signum() {
            bracket = Some((up / 2.0, f_seed.signum(), up));
            break;
        }
        down /= 2.0;
        let f_down = eval(down)?;
        if f_down == 0.0 {
            return Ok(down);
        }
        if f_down.signum() != f_seed.signum() {
            bracket = Some((down, f_down.signum(), down * 2.0));
            break;
        }
    }
    let Some((mut lo, lo_sign, mut hi)) = bracket else {
        return Err(NumericsError::NoSignChange {
            lo: seed * 2f64.powi(-BRACKET_DOUBLINGS),
            hi: seed * 2f64.powi(BRACKET_DOUBLINGS),
        });
    };

    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = eval(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_root() {
        let root = bisect_monotone(|c| c - 3.0, 1.0, 1e-13).unwrap();
        assert_relative_eq!(root, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn decreasing_function() {
        let root = bisect_monotone(|c: f64| 1.0 / c - 4.0, 1.0, 1e-13).unwrap();
        assert_relative_eq!(root, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn seed_far_from_root() {
        let root = bisect_monotone(|c| c - 1e12, 1e-6, 1e-13).unwrap();
        assert_relative_eq!(root, 1e12, max_relative = 1e-12);
    }

    #[test]
    fn missing_sign_change() {
        let err = bisect_monotone(|c: f64| c + 1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, NumericsError::NoSignChange { .. }));
    }

    proptest! {
        #[test]
        fn monotone_cubic_roots(root in 1e-3f64..1e3, a in 0.1f64..10.0, seed in 1e-2f64..1e2) {
            // a (c^3 - root^3) + (c - root): strictly increasing, single root
            let f = |c: f64| a * (c.powi(3) - root.powi(3)) + (c - root);
            let found = bisect_monotone(f, seed, 1e-13).unwrap();
            prop_assert!((found / root - 1.0).abs() < 1e-12);
        }
    }
}
