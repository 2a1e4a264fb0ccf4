//! Exact rational helpers on top of `num-rational`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn frac(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `"p/q"`, `"p"` or `"-p/q"`. Whitespace around the parts is allowed.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("`{s}` is not a rational of the form p/q"));
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let p: BigInt = p.parse().map_err(|_| bad())?;
    let q: BigInt = q.parse().map_err(|_| bad())?;
    if q.is_zero() {
        return Err(Error::Parse(format!("`{s}` has a zero denominator")));
    }
    Ok(Rational::new(p, q))
}

/// Like [`parse`], but also accepts terminating decimals such as `-0.25`,
/// converted exactly.
pub fn parse_decimal(s: &str) -> Result<Rational> {
    let t = s.trim();
    if let Some((int_part, frac_part)) = t.split_once('.') {
        let neg = int_part.starts_with('-');
        let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Parse(format!("`{t}` is not a decimal number")));
        }
        let n: BigInt = digits.parse().map_err(|_| Error::Parse(format!("`{t}` is not a decimal number")))?;
        let d = num_traits::pow(BigInt::from(10), frac_part.len());
        let r = Rational::new(n, d);
        return Ok(if neg { -r } else { r });
    }
    parse(t)
}

/// Canonical text form: `p/q` in lowest terms, `p` for integers.
pub fn fmt(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact square root when `r` is the square of a rational.
pub fn sqrt_exact(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let p = r.numer().sqrt();
    let q = r.denom().sqrt();
    if &(&p * &p) == r.numer() && &(&q * &q) == r.denom() {
        Some(Rational::new(p, q))
    } else {
        None
    }
}

pub fn require_sqrt(r: &Rational, what: &str) -> Result<Rational> {
    sqrt_exact(r).ok_or_else(|| Error::NotSquare(format!("{what} = {}", fmt(r))))
}

pub fn to_f64(r: &Rational) -> f64 {
    // fall back to dividing the parts when the ratio itself does not convert
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn pow(r: &Rational, k: u32) -> Rational {
    let mut out = Rational::one();
    for _ in 0..k {
        out *= r;
    }
    out
}

/// Catalan number `C_n` as an exact integer.
pub fn catalan(n: usize) -> BigInt {
    let mut c = BigInt::one();
    for k in 0..n {
        c = c * BigInt::from(2 * (2 * k + 1)) / BigInt::from(k + 2);
    }
    c
}
