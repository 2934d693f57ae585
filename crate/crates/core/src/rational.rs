//! Exact rational helpers shared by the effective-velocity and limit-ODE
//! machinery.
//!
//! All comparisons that decide minimizer uniqueness, singular-set membership
//! or event times are equality tests on rationals; doing them in floating
//! point would be meaningless. `f64` inputs enter either exactly (every
//! finite `f64` is a dyadic rational) or through [`rationalize`].

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{FromPrimitive, Signed, ToPrimitive, Zero};

/// Exact conversion: every finite `f64` is a dyadic rational.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite float")
}

/// Rational from an integer pair.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Rational from an integer.
pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Best rational approximation of `x` with denominator at most `max_den`,
/// via the Stern-Brocot / continued-fraction walk.
///
/// Floating-point means entered through configuration files are rationalized
/// with `max_den = 10^6`; values like `-0.125` or `0.3` recover `-1/8` and
/// `3/10` exactly.
pub fn rationalize(x: f64, max_den: u64) -> BigRational {
    assert!(x.is_finite(), "cannot rationalize a non-finite value");
    let negative = x < 0.0;
    let target = exact(x.abs());
    let mut rest = x.abs();
    // Continued-fraction expansion of |x| with convergent denominators
    // capped by max_den.
    let (mut p0, mut q0, mut p1, mut q1) = (1i128, 0i128, 0i128, 1i128);
    let cap = max_den as i128;
    let sign = |r: BigRational| if negative { -r } else { r };
    for _ in 0..64 {
        let a = rest.floor();
        if a > 1e18 {
            break;
        }
        let ai = a as i128;
        let p2 = ai * p0 + p1;
        let q2 = ai * q0 + q1;
        if q2 > cap {
            // Best semiconvergent still under the cap, compared against the
            // exact dyadic value of the input.
            let k = (cap - q1) / q0.max(1);
            let conv = BigRational::new(BigInt::from(p0), BigInt::from(q0.max(1)));
            if k > 0 {
                let semi =
                    BigRational::new(BigInt::from(k * p0 + p1), BigInt::from(k * q0 + q1));
                if (&semi - &target).abs() < (&conv - &target).abs() {
                    return sign(semi);
                }
            }
            return sign(conv);
        }
        p1 = p0;
        q1 = q0;
        p0 = p2;
        q0 = q2;
        let frac = rest - a;
        if frac < 1e-12 {
            break;
        }
        rest = 1.0 / frac;
    }
    sign(BigRational::new(BigInt::from(p0), BigInt::from(q0.max(1))))
}

/// Lossy view for reporting.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `"num/den"` (or plain integer) rendering used by the JSON/CSV exports.
pub fn fmt_ratio(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Floor of a nonnegative-or-negative rational as a BigInt.
pub fn floor_int(r: &BigRational) -> BigInt {
    r.floor().to_integer()
}

/// Decimal rendering with 12 significant digits (CSV numeric format).
pub fn fmt_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (11 - mag).clamp(0, 30) as usize;
    let s = format!("{v:.decimals$}");
    // Trim trailing zeros but keep at least one digit after the point.
    if s.contains('.') {
        let t = s.trim_end_matches('0');
        let t = t.strip_suffix('.').unwrap_or(t);
        t.to_string()
    } else {
        s
    }
}

/// Parse `"num/den"`, a plain integer, or a decimal string into a rational.
pub fn parse_ratio(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Ok(n) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(n));
    }
    s.parse::<f64>().ok().map(|v| rationalize(v, 1_000_000))
}
