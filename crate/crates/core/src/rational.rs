//! Exact arithmetic shared by every inequality check.
//!
//! Ratios are arbitrary-precision rationals. Fractional powers never appear:
//! `x^(1/n) <= y^(1/m)` is decided as `x^m <= y^n`, and quantities involving
//! `Q^(-1/2)` live in the quadratic field `Q(sqrt(q))` via [`Surd`].

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Ratio = BigRational;

pub fn ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Ratio {
    Ratio::new(num.into(), den.into())
}

pub fn int(n: impl Into<BigInt>) -> Ratio {
    Ratio::from_integer(n.into())
}

pub fn to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"p/q"`, `"p"` or a plain JSON integer rendered as text.
pub fn parse_ratio(s: &str) -> Result<Ratio> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational numerator in {s:?}")))?;
    let d: BigInt = d
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational denominator in {s:?}")))?;
    if d.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Ratio::new(n, d))
}

pub fn format_ratio(r: &Ratio) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Serde adapter writing a ratio as a `"p/q"` string.
pub mod serde_ratio {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Ratio, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_ratio_vec {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Ratio], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&format_ratio(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Ratio>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_ratio(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub fn pow(r: &Ratio, e: u32) -> Ratio {
    num_traits::pow(r.clone(), e as usize)
}

/// `x^a <= y^b` for nonnegative `x`, `y`.
pub fn pow_le(x: &Ratio, a: u32, y: &Ratio, b: u32) -> bool {
    pow(x, a) <= pow(y, b)
}

/// Compares `p1/q1` against `p2/q2` for nonnegative integer fractions with
/// positive denominators.
pub fn cmp_frac(p1: u64, q1: u64, p2: u64, q2: u64) -> Ordering {
    (p1 as u128 * q2 as u128).cmp(&(p2 as u128 * q1 as u128))
}

/// An element `a + b / sqrt(q)` of the quadratic field over the rationals.
///
/// `q` is a positive integer; when it is a perfect square the value is simply
/// rational and comparisons still work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Surd {
    pub a: Ratio,
    pub b: Ratio,
    pub q: u64,
}

impl Surd {
    pub fn rational(a: Ratio, q: u64) -> Self {
        Surd { a, b: Ratio::zero(), q }
    }

    /// `1 / sqrt(q)`.
    pub fn inv_sqrt(q: u64) -> Self {
        Surd { a: Ratio::zero(), b: Ratio::one(), q }
    }

    pub fn add(&self, o: &Surd) -> Surd {
        debug_assert_eq!(self.q, o.q);
        Surd { a: &self.a + &o.a, b: &self.b + &o.b, q: self.q }
    }

    pub fn sub(&self, o: &Surd) -> Surd {
        debug_assert_eq!(self.q, o.q);
        Surd { a: &self.a - &o.a, b: &self.b - &o.b, q: self.q }
    }

    pub fn mul(&self, o: &Surd) -> Surd {
        debug_assert_eq!(self.q, o.q);
        let q = int(self.q);
        Surd {
            a: &self.a * &o.a + &self.b * &o.b / q,
            b: &self.a * &o.b + &self.b * &o.a,
            q: self.q,
        }
    }

    pub fn scale(&self, r: &Ratio) -> Surd {
        Surd { a: &self.a * r, b: &self.b * r, q: self.q }
    }

    pub fn pow(&self, e: u32) -> Surd {
        let mut acc = Surd::rational(Ratio::one(), self.q);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// `1 / self`, by the conjugate `a - b/sqrt(q)`; `None` for zero.
    pub fn recip(&self) -> Option<Surd> {
        let norm = &self.a * &self.a - &self.b * &self.b / int(self.q);
        if norm.is_zero() {
            // a = ±b/sqrt(q) only happens for perfect squares q
            let v = self.to_rational()?;
            return if v.is_zero() { None } else { Some(Surd::rational(v.recip(), self.q)) };
        }
        Some(Surd { a: &self.a / &norm, b: -&self.b / &norm, q: self.q })
    }

    /// The value as a rational, if it is one.
    pub fn to_rational(&self) -> Option<Ratio> {
        if self.b.is_zero() {
            return Some(self.a.clone());
        }
        let r = num_integer::Roots::sqrt(&self.q);
        (r * r == self.q).then(|| &self.a + &self.b / int(r))
    }

    /// Exact sign of `a + b/sqrt(q)`.
    pub fn signum(&self) -> Ordering {
        let sa = self.a.cmp(&Ratio::zero());
        let sb = self.b.cmp(&Ratio::zero());
        if sb == Ordering::Equal {
            return sa;
        }
        if sa == Ordering::Equal || sa == sb {
            return sb;
        }
        // opposite signs: compare a^2 with b^2 / q
        let a2 = &self.a * &self.a;
        let b2 = &self.b * &self.b / int(self.q);
        match a2.cmp(&b2) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        }
    }

    pub fn cmp_to(&self, o: &Surd) -> Ordering {
        self.sub(o).signum()
    }

    pub fn is_negative(&self) -> bool {
        self.signum() == Ordering::Less
    }

    /// Clamps negative values to zero.
    pub fn positive_part(&self) -> Surd {
        if self.is_negative() {
            Surd::rational(Ratio::zero(), self.q)
        } else {
            self.clone()
        }
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.a) + to_f64(&self.b) / (self.q as f64).sqrt()
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            write!(f, "{}", format_ratio(&self.a))
        } else if self.a.is_zero() {
            write!(f, "{}/sqrt({})", format_ratio(&self.b), self.q)
        } else {
            let sign = if self.b.is_negative() { "-" } else { "+" };
            write!(
                f,
                "{} {} {}/sqrt({})",
                format_ratio(&self.a),
                sign,
                format_ratio(&self.b.abs()),
                self.q
            )
        }
    }
}

/// Checks `prod lhs_i^{e_i} >= prod rhs_j^{f_j}` for nonnegative bases.
pub fn power_product_ge(lhs: &[(Surd, u32)], rhs: &[(Surd, u32)], q: u64) -> bool {
    let eval = |terms: &[(Surd, u32)]| {
        terms
            .iter()
            .fold(Surd::rational(Ratio::one(), q), |acc, (b, e)| acc.mul(&b.pow(*e)))
    };
    eval(lhs).cmp_to(&eval(rhs)) != Ordering::Less
}
