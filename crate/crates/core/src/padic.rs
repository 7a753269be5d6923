//! Exact finite-precision arithmetic in Q_p and Q_p^4: valuations, norms,
//! fractional part, the additive character, balls and Haar bookkeeping.
//!
//! A nonzero scalar is stored as `p^valuation * (d0 + d1 p + d2 p^2 + ...)`
//! with `d0 != 0` (little-endian unit digits). The digit expansion denotes
//! the exact rational it spells; `precision` (the digit count) records the
//! level below which nothing is known. Arithmetic is exact and errors out
//! rather than silently truncating when an answer would need digits beyond
//! the available precision.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fmath;

/// Default number of significant unit digits.
pub const DEFAULT_PRECISION: usize = 16;

pub fn check_odd_prime(p: u32) -> Result<()> {
    if p < 3 || p % 2 == 0 {
        return Err(Error::NonOddPrime(p));
    }
    let mut d = 3u32;
    while d * d <= p {
        if p % d == 0 {
            return Err(Error::NonOddPrime(p));
        }
        d += 2;
    }
    Ok(())
}

/// Element of Q_p at finite precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PAdicScalar {
    prime: u32,
    valuation: i64,
    digits: Vec<u8>,
}

impl PAdicScalar {
    pub fn zero(prime: u32) -> Self {
        PAdicScalar { prime, valuation: 0, digits: Vec::new() }
    }

    pub fn from_parts(prime: u32, valuation: i64, digits: Vec<u8>) -> Result<Self> {
        check_odd_prime(prime)?;
        if digits.is_empty() {
            return Ok(Self::zero(prime));
        }
        if digits[0] == 0 {
            return Err(Error::InvalidParameter(String::from("leading digit must be nonzero")));
        }
        if digits.iter().any(|&d| d as u32 >= prime) {
            return Err(Error::InvalidParameter(String::from("digit out of range")));
        }
        Ok(PAdicScalar { prime, valuation, digits })
    }

    pub fn from_integer(n: i64, prime: u32, precision: usize) -> Result<Self> {
        Self::from_rational(n, 1, prime, precision)
    }

    /// p-adic expansion of `num/den` truncated to `precision` digits, with
    /// exact valuation.
    pub fn from_rational(num: i64, den: i64, prime: u32, precision: usize) -> Result<Self> {
        check_odd_prime(prime)?;
        if den == 0 {
            return Err(Error::ZeroDenominator);
        }
        if precision == 0 {
            return Err(Error::InvalidParameter(String::from("precision must be >= 1")));
        }
        if num == 0 {
            return Ok(Self::zero(prime));
        }
        let p = BigInt::from(prime);
        let mut n = BigInt::from(num);
        let mut d = BigInt::from(den);
        if d.is_negative() {
            n = -n;
            d = -d;
        }
        let mut val = 0i64;
        while (&n % &p).is_zero() {
            n /= &p;
            val += 1;
        }
        while (&d % &p).is_zero() {
            d /= &p;
            val -= 1;
        }
        // digits of n * d^{-1} mod p^precision
        let modulus = p.pow(precision as u32);
        let dinv = mod_inverse(&d, &modulus, &p)?;
        let mut unit = (n * dinv) % &modulus;
        if unit.is_negative() {
            unit += &modulus;
        }
        let digits = digits_of(&unit, prime, precision);
        debug_assert!(digits[0] != 0);
        Ok(PAdicScalar { prime, valuation: val, digits })
    }

    pub fn prime(&self) -> u32 {
        self.prime
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    /// ord(x); None for the zero element (ord = +infinity).
    pub fn valuation(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.valuation)
        }
    }

    pub fn precision(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// Level below which the element is undetermined: the expansion is known
    /// modulo p^level_known. (+infinity for zero, represented as i64::MAX.)
    fn level_known(&self) -> i64 {
        if self.is_zero() {
            i64::MAX
        } else {
            self.valuation + self.digits.len() as i64
        }
    }

    /// |x|_p as an exact power of p: `Some(e)` means p^e, `None` means 0.
    pub fn abs_exponent(&self) -> Option<i64> {
        self.valuation().map(|v| -v)
    }

    pub fn norm_f64(&self) -> f64 {
        match self.abs_exponent() {
            None => 0.0,
            Some(e) => fmath::p_pow(self.prime, e),
        }
    }

    /// Unit part as an exact integer (sum of the stored digits).
    pub fn unit_big(&self) -> BigInt {
        let p = BigInt::from(self.prime);
        let mut acc = BigInt::zero();
        for &d in self.digits.iter().rev() {
            acc = acc * &p + BigInt::from(d);
        }
        acc
    }

    /// The exact rational denoted by the stored digits.
    pub fn to_rational(&self) -> BigRational {
        if self.is_zero() {
            return BigRational::zero();
        }
        let unit = BigRational::from_integer(self.unit_big());
        unit * p_power_rational(self.prime, self.valuation)
    }

    /// x mod p^level as an exact integer in [0, p^level), for x with
    /// valuation >= 0. Errors if digits do not reach `level`.
    pub fn residue_mod(&self, level: i64) -> Result<BigInt> {
        if self.is_zero() {
            return Ok(BigInt::zero());
        }
        if self.valuation < 0 {
            return Err(Error::InvalidParameter(String::from("negative valuation residue")));
        }
        if self.level_known() < level {
            return Err(Error::InsufficientPrecision {
                needed: level,
                available: self.level_known(),
            });
        }
        if self.valuation >= level {
            return Ok(BigInt::zero());
        }
        let p = BigInt::from(self.prime);
        let mut acc = BigInt::zero();
        let take = (level - self.valuation) as usize;
        for &d in self.digits.iter().take(take).rev() {
            acc = acc * &p + BigInt::from(d);
        }
        Ok(acc * p.pow(self.valuation as u32))
    }

    /// Whether x == other modulo p^level (i.e. |x - other|_p <= p^{-level}).
    pub fn congruent_mod(&self, other: &Self, level: i64) -> Result<bool> {
        debug_assert_eq!(self.prime, other.prime);
        let avail = self.level_known().min(other.level_known());
        if avail < level {
            // compare what we can; only an error if the comparison is
            // undecidable from the available digits
            if self.agree_up_to(other, avail) {
                return Err(Error::InsufficientPrecision { needed: level, available: avail });
            }
            return Ok(false);
        }
        Ok(self.agree_up_to(other, level))
    }

    fn digit_at_level(&self, level: i64) -> u8 {
        if self.is_zero() {
            return 0;
        }
        let idx = level - self.valuation;
        if idx < 0 || idx as usize >= self.digits.len() {
            0
        } else {
            self.digits[idx as usize]
        }
    }

    fn agree_up_to(&self, other: &Self, level: i64) -> bool {
        let lo = self
            .valuation()
            .unwrap_or(level)
            .min(other.valuation().unwrap_or(level));
        (lo..level).all(|l| self.digit_at_level(l) == other.digit_at_level(l))
    }

    /// Multiply by p^k (exact).
    pub fn scale_by_p(&self, k: i64) -> Self {
        let mut out = self.clone();
        if !out.is_zero() {
            out.valuation += k;
        }
        out
    }

    pub fn truncated(&self, precision: usize) -> Self {
        let mut out = self.clone();
        if out.digits.len() > precision {
            out.digits.truncate(precision);
        }
        out
    }

    pub fn neg(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let p = BigInt::from(self.prime);
        let modulus = p.pow(self.digits.len() as u32);
        let unit = (&modulus - self.unit_big()) % &modulus;
        PAdicScalar {
            prime: self.prime,
            valuation: self.valuation,
            digits: digits_of(&unit, self.prime, self.digits.len()),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, false)
    }

    /// Exact difference of the spelled values (x - x is exactly zero).
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, true)
    }

    fn combine(&self, other: &Self, negate: bool) -> Result<Self> {
        debug_assert_eq!(self.prime, other.prime);
        if self.is_zero() && negate {
            // -x is only representable modulo p^{val+len}; the complement
            // keeps the exact valuation and residue class
            return Ok(other.neg());
        }
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        let v = self.valuation.min(other.valuation);
        let known = self.level_known().min(other.level_known());
        let p = BigInt::from(self.prime);
        let rhs = other.unit_big() * p.pow((other.valuation - v) as u32);
        let mut sum = self.unit_big() * p.pow((self.valuation - v) as u32);
        if negate {
            sum -= rhs;
        } else {
            sum += rhs;
        }
        if sum.is_zero() {
            return Ok(Self::zero(self.prime));
        }
        let (w, unit) = split_valuation(&sum, self.prime);
        let val = v + w;
        if val >= known {
            // cancellation swallowed every certain digit
            return Err(Error::InsufficientPrecision { needed: val + 1, available: known });
        }
        let len = (known - val) as usize;
        let modulus = p.pow(len as u32);
        let mut u = unit % &modulus;
        if u.is_negative() {
            u += &modulus;
        }
        if u.is_zero() {
            return Err(Error::InsufficientPrecision { needed: val + 1, available: known });
        }
        // the reduced unit may itself be divisible by p after the modulus cut
        let (w2, u2) = split_valuation(&u, self.prime);
        let len2 = len - w2 as usize;
        Ok(PAdicScalar {
            prime: self.prime,
            valuation: val + w2,
            digits: digits_of(&u2, self.prime, len2),
        })
    }


    pub fn mul(&self, other: &Self) -> Result<Self> {
        debug_assert_eq!(self.prime, other.prime);
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.prime));
        }
        let len = self.digits.len().min(other.digits.len());
        let p = BigInt::from(self.prime);
        let modulus = p.pow(len as u32);
        let unit = (self.unit_big() * other.unit_big()) % &modulus;
        Ok(PAdicScalar {
            prime: self.prime,
            valuation: self.valuation + other.valuation,
            digits: digits_of(&unit, self.prime, len),
        })
    }

    /// The fractional part {x}_p: 0 if x = 0 or ord(x) >= 0, otherwise the
    /// rational p^ord(x) * sum_{j < -ord(x)} x_j p^j, in [0, 1).
    pub fn fractional_part(&self) -> Result<BigRational> {
        match self.valuation() {
            None => Ok(BigRational::zero()),
            Some(v) if v >= 0 => Ok(BigRational::zero()),
            Some(v) => {
                let need = (-v) as usize;
                if self.digits.len() < need {
                    return Err(Error::InsufficientPrecision {
                        needed: 0,
                        available: self.level_known(),
                    });
                }
                let p = BigInt::from(self.prime);
                let mut acc = BigInt::zero();
                for &d in self.digits[..need].iter().rev() {
                    acc = acc * &p + BigInt::from(d);
                }
                Ok(BigRational::new(acc, p.pow(need as u32)))
            }
        }
    }

    /// chi(x) = exp(2 pi i {x}_p).
    pub fn additive_character(&self) -> Result<Complex64> {
        let frac = self.fractional_part()?;
        Ok(unit_character(&frac))
    }

    /// Uniform sample from the ball of radius p^{radius_exp} around 0,
    /// carrying `depth` digits (i.i.d. uniform digits: the Haar sampler).
    pub fn sample_uniform(
        rng: &mut impl Rng,
        prime: u32,
        radius_exp: i64,
        depth: usize,
    ) -> Self {
        let mut lead = 0usize;
        let mut digits = Vec::with_capacity(depth);
        for i in 0..depth {
            let d = rng.gen_range(0..prime) as u8;
            if digits.is_empty() && d == 0 {
                lead = i + 1;
                continue;
            }
            digits.push(d);
        }
        if digits.is_empty() {
            return Self::zero(prime);
        }
        PAdicScalar { prime, valuation: -radius_exp + lead as i64, digits }
    }
}

/// exp(2 pi i q) for an exact rational q.
pub fn unit_character(q: &BigRational) -> Complex64 {
    // reduce mod 1 exactly, then a single rounding into f64
    let num = q.numer().mod_floor(q.denom());
    let frac = BigRational::new(num, q.denom().clone());
    let theta = 2.0 * core::f64::consts::PI * frac.to_f64().unwrap_or(0.0);
    let (s, c) = fmath::sin_cos(theta);
    Complex64::new(c, s)
}

fn p_power_rational(prime: u32, e: i64) -> BigRational {
    let p = BigInt::from(prime);
    if e >= 0 {
        BigRational::from_integer(p.pow(e as u32))
    } else {
        BigRational::new(BigInt::one(), p.pow((-e) as u32))
    }
}

fn digits_of(unit: &BigInt, prime: u32, len: usize) -> Vec<u8> {
    let p = BigInt::from(prime);
    let mut out = Vec::with_capacity(len);
    let mut cur = unit.clone();
    for _ in 0..len {
        let (q, r) = cur.div_rem(&p);
        out.push(r.to_u8().unwrap_or(0));
        cur = q;
    }
    out
}

fn split_valuation(n: &BigInt, prime: u32) -> (i64, BigInt) {
    let p = BigInt::from(prime);
    let mut v = 0i64;
    let mut cur = n.clone();
    while !cur.is_zero() && (&cur % &p).is_zero() {
        cur /= &p;
        v += 1;
    }
    (v, cur)
}

fn mod_inverse(a: &BigInt, modulus: &BigInt, p: &BigInt) -> Result<BigInt> {
    debug_assert!(!(a % p).is_zero());
    let e = a.extended_gcd(modulus);
    if !e.gcd.is_one() {
        return Err(Error::InvalidParameter(String::from("unit expected")));
    }
    let mut inv = e.x % modulus;
    if inv.is_negative() {
        inv += modulus;
    }
    Ok(inv)
}

impl fmt::Display for PAdicScalar {
    /// `p^k * (d0,d1,...)`, or `0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        write!(f, "{}^{} * (", self.prime, self.valuation)?;
        for (i, d) in self.digits.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

impl PAdicScalar {
    /// Parse `num/den`, a bare integer, or `p^k * (d0,d1,...)` (the display
    /// format; the base must match `prime`).
    pub fn parse(s: &str, prime: u32, precision: usize) -> Result<Self> {
        let s = s.trim();
        if s == "0" {
            return Ok(Self::zero(prime));
        }
        if let Some(caret) = s.find('^') {
            let base: u32 = s[..caret]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(String::from("bad base")))?;
            if base != prime {
                return Err(Error::InvalidParameter(String::from("prime mismatch")));
            }
            let rest = &s[caret + 1..];
            let star = rest
                .find('*')
                .ok_or_else(|| Error::InvalidParameter(String::from("missing '*'")))?;
            let val: i64 = rest[..star]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(String::from("bad exponent")))?;
            let digits_str = rest[star + 1..].trim();
            let inner = digits_str
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| Error::InvalidParameter(String::from("missing digit list")))?;
            let digits = inner
                .split(',')
                .map(|d| d.trim().parse::<u8>())
                .collect::<core::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::InvalidParameter(String::from("bad digit")))?;
            Self::from_parts(prime, val, digits)
        } else if let Some(slash) = s.find('/') {
            let num: i64 = s[..slash]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(String::from("bad numerator")))?;
            let den: i64 = s[slash + 1..]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(String::from("bad denominator")))?;
            Self::from_rational(num, den, prime, precision)
        } else {
            let n: i64 = s
                .parse()
                .map_err(|_| Error::InvalidParameter(String::from("bad integer")))?;
            Self::from_integer(n, prime, precision)
        }
    }
}

/// Element of Q_p^4 with the max-norm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PAdicPoint {
    coords: [PAdicScalar; 4],
}

impl PAdicPoint {
    pub fn new(coords: [PAdicScalar; 4]) -> Result<Self> {
        let p = coords[0].prime();
        if coords.iter().any(|c| c.prime() != p) {
            return Err(Error::InvalidParameter(String::from("mixed primes in point")));
        }
        Ok(PAdicPoint { coords })
    }

    pub fn zero(prime: u32) -> Self {
        PAdicPoint {
            coords: [
                PAdicScalar::zero(prime),
                PAdicScalar::zero(prime),
                PAdicScalar::zero(prime),
                PAdicScalar::zero(prime),
            ],
        }
    }

    pub fn from_integers(v: [i64; 4], prime: u32, precision: usize) -> Result<Self> {
        Ok(PAdicPoint {
            coords: [
                PAdicScalar::from_integer(v[0], prime, precision)?,
                PAdicScalar::from_integer(v[1], prime, precision)?,
                PAdicScalar::from_integer(v[2], prime, precision)?,
                PAdicScalar::from_integer(v[3], prime, precision)?,
            ],
        })
    }

    pub fn from_rationals(v: [(i64, i64); 4], prime: u32, precision: usize) -> Result<Self> {
        Ok(PAdicPoint {
            coords: [
                PAdicScalar::from_rational(v[0].0, v[0].1, prime, precision)?,
                PAdicScalar::from_rational(v[1].0, v[1].1, prime, precision)?,
                PAdicScalar::from_rational(v[2].0, v[2].1, prime, precision)?,
                PAdicScalar::from_rational(v[3].0, v[3].1, prime, precision)?,
            ],
        })
    }

    pub fn prime(&self) -> u32 {
        self.coords[0].prime()
    }

    pub fn coords(&self) -> &[PAdicScalar; 4] {
        &self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    /// ord(x) = min over coordinates; None for the zero point.
    pub fn ord(&self) -> Option<i64> {
        self.coords.iter().filter_map(|c| c.valuation()).min()
    }

    /// ||x||_p as an exact power of p: `Some(e)` means p^e, `None` means 0.
    pub fn norm_exponent(&self) -> Option<i64> {
        self.ord().map(|v| -v)
    }

    pub fn norm_f64(&self) -> f64 {
        match self.norm_exponent() {
            None => 0.0,
            Some(e) => fmath::p_pow(self.prime(), e),
        }
    }

    /// Exact max-norm as a rational.
    pub fn norm_rational(&self) -> BigRational {
        match self.norm_exponent() {
            None => BigRational::zero(),
            Some(e) => p_power_rational(self.prime(), e),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(PAdicPoint {
            coords: [
                self.coords[0].add(&other.coords[0])?,
                self.coords[1].add(&other.coords[1])?,
                self.coords[2].add(&other.coords[2])?,
                self.coords[3].add(&other.coords[3])?,
            ],
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(PAdicPoint {
            coords: [
                self.coords[0].sub(&other.coords[0])?,
                self.coords[1].sub(&other.coords[1])?,
                self.coords[2].sub(&other.coords[2])?,
                self.coords[3].sub(&other.coords[3])?,
            ],
        })
    }

    pub fn scale_by_p(&self, k: i64) -> Self {
        PAdicPoint {
            coords: [
                self.coords[0].scale_by_p(k),
                self.coords[1].scale_by_p(k),
                self.coords[2].scale_by_p(k),
                self.coords[3].scale_by_p(k),
            ],
        }
    }

    /// xi . x = sum xi_i x_i (exact).
    pub fn dot(&self, other: &Self) -> Result<PAdicScalar> {
        let mut acc = PAdicScalar::zero(self.prime());
        for i in 0..4 {
            let prod = self.coords[i].mul(&other.coords[i])?;
            acc = acc.add(&prod)?;
        }
        Ok(acc)
    }

    /// Uniform sample from the ball ||x|| <= p^{radius_exp} (4 i.i.d. Haar
    /// coordinates).
    pub fn sample_uniform(
        rng: &mut impl Rng,
        prime: u32,
        radius_exp: i64,
        depth: usize,
    ) -> Self {
        PAdicPoint {
            coords: [
                PAdicScalar::sample_uniform(rng, prime, radius_exp, depth),
                PAdicScalar::sample_uniform(rng, prime, radius_exp, depth),
                PAdicScalar::sample_uniform(rng, prime, radius_exp, depth),
                PAdicScalar::sample_uniform(rng, prime, radius_exp, depth),
            ],
        }
    }
}

impl fmt::Display for PAdicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}; {}; {}; {})",
            self.coords[0], self.coords[1], self.coords[2], self.coords[3]
        )
    }
}

/// Ball of radius p^{radius_exp} in Q_p^4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ball {
    pub center: PAdicPoint,
    pub radius_exp: i64,
}

impl Ball {
    pub fn new(center: PAdicPoint, radius_exp: i64) -> Self {
        Ball { center, radius_exp }
    }

    pub fn unit(prime: u32) -> Self {
        Ball { center: PAdicPoint::zero(prime), radius_exp: 0 }
    }

    /// Haar volume p^{4 radius_exp} (vol(Z_p^4) = 1).
    pub fn volume(&self) -> BigRational {
        p_power_rational(self.center.prime(), 4 * self.radius_exp)
    }

    pub fn volume_f64(&self) -> f64 {
        fmath::p_pow(self.center.prime(), 4 * self.radius_exp)
    }

    pub fn contains(&self, x: &PAdicPoint) -> Result<bool> {
        let level = -self.radius_exp;
        for i in 0..4 {
            if !self.center.coords[i].congruent_mod(&x.coords[i], level)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Either disjoint or nested (ultrametricity).
    pub fn intersects(&self, other: &Ball) -> Result<bool> {
        let level = -self.radius_exp.max(other.radius_exp);
        for i in 0..4 {
            if !self.center.coords[i].congruent_mod(&other.center.coords[i], level)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The p^4 children of radius p^{radius_exp - 1}.
    pub fn children(&self) -> Result<Vec<Ball>> {
        let p = self.center.prime();
        let mut out = Vec::with_capacity((p as usize).pow(4));
        // generous digit depth so recursive splitting keeps exact centers
        let shift_prec = 48usize;
        for d0 in 0..p {
            for d1 in 0..p {
                for d2 in 0..p {
                    for d3 in 0..p {
                        let shift = PAdicPoint::from_integers(
                            [d0 as i64, d1 as i64, d2 as i64, d3 as i64],
                            p,
                            shift_prec,
                        )?
                        .scale_by_p(-self.radius_exp);
                        let center = self.center.add(&shift)?;
                        out.push(Ball::new(center, self.radius_exp - 1));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Indicator of the unit ball applied to a norm exponent (Omega(||x||_p)).
pub fn omega(norm_exp: Option<i64>) -> f64 {
    match norm_exp {
        None => 1.0,
        Some(e) if e <= 0 => 1.0,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn zero_element() {
        let z = PAdicScalar::from_rational(0, 1, 3, 8).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.valuation(), None);
        assert_eq!(z.norm_f64(), 0.0);
    }

    #[test]
    fn valuation_of_75_base_5() {
        // 75 = 3 * 5^2
        let x = PAdicScalar::from_rational(75, 1, 5, 8).unwrap();
        assert_eq!(x.valuation(), Some(2));
        assert_eq!(x.norm_f64(), 1.0 / 25.0);
    }

    #[test]
    fn expansion_of_one_fifth() {
        // oracle: long division base 5; check x * 5 == 1 to precision
        let x = PAdicScalar::from_rational(1, 5, 5, 10).unwrap();
        assert_eq!(x.valuation(), Some(-1));
        let five = PAdicScalar::from_integer(5, 5, 10).unwrap();
        let prod = x.mul(&five).unwrap();
        assert_eq!(prod.to_rational(), BigRational::one());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(PAdicScalar::from_rational(1, 0, 5, 8), Err(Error::ZeroDenominator));
        assert_eq!(PAdicScalar::from_rational(1, 2, 4, 8), Err(Error::NonOddPrime(4)));
        assert_eq!(PAdicScalar::from_rational(1, 2, 2, 8), Err(Error::NonOddPrime(2)));
        assert_eq!(PAdicScalar::from_rational(1, 2, 9, 8), Err(Error::NonOddPrime(9)));
    }

    #[test]
    fn fractional_part_examples() {
        let p3 = PAdicScalar::from_integer(3, 3, 8).unwrap();
        assert_eq!(p3.fractional_part().unwrap(), BigRational::zero());

        let third = PAdicScalar::from_rational(1, 3, 3, 8).unwrap();
        assert_eq!(third.fractional_part().unwrap(), rat(1, 3));

        // 7/9 = 9^{-1}(7) : digits 1,2 at levels -2,-1 -> {x} = 7/9
        let x = PAdicScalar::from_rational(7, 9, 3, 8).unwrap();
        assert_eq!(x.fractional_part().unwrap(), rat(7, 9));

        // negative-valuation part of -1/3: -1/3 = p^{-1} * (2 + 2p + ...),
        // {x} = 2/3
        let y = PAdicScalar::from_rational(-1, 3, 3, 8).unwrap();
        assert_eq!(y.fractional_part().unwrap(), rat(2, 3));
    }

    #[test]
    fn character_is_periodic_mod_one() {
        // chi(x + 1) = chi(x)
        let x = PAdicScalar::from_rational(7, 9, 3, 12).unwrap();
        let one = PAdicScalar::from_integer(1, 3, 12).unwrap();
        let y = x.add(&one).unwrap();
        let cx = x.additive_character().unwrap();
        let cy = y.additive_character().unwrap();
        assert!((cx - cy).norm() < 1e-14);
    }

    #[test]
    fn character_on_integers_is_one() {
        for n in [0i64, 1, 5, 81, -4] {
            let x = PAdicScalar::from_integer(n, 3, 10).unwrap();
            let c = x.additive_character().unwrap();
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn character_at_one_third() {
        let x = PAdicScalar::from_rational(1, 3, 3, 8).unwrap();
        let c = x.additive_character().unwrap();
        let theta = 2.0 * core::f64::consts::PI / 3.0;
        assert!((c - Complex64::new(theta.cos(), theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn insufficient_precision_is_reported() {
        // 1/3 with one digit of precision: {x} needs digit 0 only, fine;
        // but level -2 data with precision 1 must fail
        let x = PAdicScalar::from_rational(1, 9, 3, 1).unwrap();
        assert_eq!(x.valuation(), Some(-2));
        assert!(matches!(
            x.fractional_part(),
            Err(Error::InsufficientPrecision { .. })
        ));
    }

    #[test]
    fn cancellation_errors_out() {
        // x spells 13 mod 27 (precision 3); y spells 230, and 13 + 230 = 243
        // vanishes mod 27, so every certain digit cancels
        let x = PAdicScalar::from_integer(13, 3, 3).unwrap();
        let y = PAdicScalar::from_integer(230, 3, 3).unwrap();
        assert!(matches!(x.add(&y), Err(Error::InsufficientPrecision { .. })));
        // likewise x + (-x): the negation is exact only modulo p^precision
        assert!(matches!(x.add(&x.neg()), Err(Error::InsufficientPrecision { .. })));
        // adding zero is always exact
        let z = PAdicScalar::zero(3);
        assert_eq!(x.add(&z).unwrap(), x);
    }

    #[test]
    fn vector_norm_examples() {
        let p = 3u32;
        let zero = PAdicPoint::zero(p);
        assert_eq!(zero.norm_exponent(), None);
        assert_eq!(zero.norm_f64(), 0.0);

        let x = PAdicPoint::from_integers([1, 3, 9, 27], p, 10).unwrap();
        assert_eq!(x.norm_exponent(), Some(0));

        let y = PAdicPoint::from_rationals([(1, 9), (3, 1), (0, 1), (1, 1)], p, 10).unwrap();
        assert_eq!(y.norm_exponent(), Some(2));
        assert_eq!(y.norm_f64(), 9.0);
    }

    #[test]
    fn ball_volume_and_membership() {
        let b = Ball::unit(3);
        assert_eq!(b.volume(), BigRational::one());
        let b2 = Ball::new(PAdicPoint::zero(3), 2);
        assert_eq!(b2.volume(), BigRational::from_i64(6561).unwrap());
        let x = PAdicPoint::from_integers([1, 2, 3, 4], 3, 8).unwrap();
        assert!(b.contains(&x).unwrap());
        let y = PAdicPoint::from_rationals([(1, 3), (0, 1), (0, 1), (0, 1)], 3, 8).unwrap();
        assert!(!b.contains(&y).unwrap());
    }

    #[test]
    fn ball_children_partition() {
        let b = Ball::unit(3);
        let kids = b.children().unwrap();
        assert_eq!(kids.len(), 81);
        let total: BigRational = kids.iter().map(|k| k.volume()).sum();
        assert_eq!(total, b.volume());
        // children pairwise disjoint
        for i in 0..kids.len() {
            for j in (i + 1)..kids.len() {
                assert!(!kids[i].intersects(&kids[j]).unwrap());
            }
        }
    }

    #[test]
    fn display_and_parse_round_trip() {
        let x = PAdicScalar::from_rational(22, 7, 5, 6).unwrap();
        let s = alloc::format!("{x}");
        let y = PAdicScalar::parse(&s, 5, 6).unwrap();
        assert_eq!(x, y);
        let z = PAdicScalar::parse("22/7", 5, 6).unwrap();
        assert_eq!(x, z);
        assert!(PAdicScalar::parse("2^1 * (1)", 5, 6).is_err());
    }

    proptest! {
        #[test]
        fn ultrametric_inequality(a in -200i64..200, b in -200i64..200, c in 1i64..60, d in 1i64..60) {
            let p = 3u32;
            let x = PAdicScalar::from_rational(a, c, p, 24).unwrap();
            let y = PAdicScalar::from_rational(b, d, p, 24).unwrap();
            if let Ok(s) = x.add(&y) {
                let nx = x.norm_f64();
                let ny = y.norm_f64();
                let ns = s.norm_f64();
                prop_assert!(ns <= nx.max(ny) * (1.0 + 1e-12));
                if (nx - ny).abs() > 1e-12 * nx.max(ny) {
                    prop_assert!((ns - nx.max(ny)).abs() <= 1e-12 * nx.max(ny));
                }
            }
        }

        #[test]
        fn norm_is_multiplicative(a in -200i64..200, b in -200i64..200, c in 1i64..60, d in 1i64..60) {
            let p = 5u32;
            let x = PAdicScalar::from_rational(a, c, p, 20).unwrap();
            let y = PAdicScalar::from_rational(b, d, p, 20).unwrap();
            let prod = x.mul(&y).unwrap();
            match (x.abs_exponent(), y.abs_exponent()) {
                (Some(ex), Some(ey)) => prop_assert_eq!(prod.abs_exponent(), Some(ex + ey)),
                _ => prop_assert!(prod.is_zero()),
            }
        }

        #[test]
        fn rational_round_trip(a in -300i64..300, den in 1i64..100) {
            let p = 7u32;
            prop_assume!(a != 0);
            let prec = 12usize;
            let x = PAdicScalar::from_rational(a, den, p, prec).unwrap();
            // x * den == a to the available precision
            let d = PAdicScalar::from_integer(den, p, prec + 6).unwrap();
            let back = x.mul(&d).unwrap();
            let diff = back.sub(&PAdicScalar::from_integer(a, p, prec + 6).unwrap());
            match diff {
                Ok(z) => {
                    if let Some(v) = z.valuation() {
                        // any residual sits below the carried precision
                        prop_assert!(v >= x.valuation().unwrap() + prec as i64);
                    }
                }
                Err(Error::InsufficientPrecision { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(alloc::format!("{e}"))),
            }
        }

        #[test]
        fn character_bilinearity(a in -100i64..100, b in -100i64..100, e1 in 0u32..4, e2 in 0u32..4) {
            let p = 3u32;
            let x = PAdicScalar::from_rational(a, 3i64.pow(e1), p, 20).unwrap();
            let y = PAdicScalar::from_rational(b, 3i64.pow(e2), p, 20).unwrap();
            // deep cancellation can exhaust the carried digits; skip those draws
            if let Ok(s) = x.add(&y) {
                let cx = x.additive_character().unwrap();
                let cy = y.additive_character().unwrap();
                let cs = s.additive_character().unwrap();
                prop_assert!((cx * cy - cs).norm() < 1e-12);
            }
        }

        #[test]
        fn balls_disjoint_or_nested(c1 in -20i64..20, c2 in -20i64..20, r1 in -3i64..3, r2 in -3i64..3) {
            let p = 3u32;
            let b1 = Ball::new(PAdicPoint::from_integers([c1, 0, c2, 1], p, 16).unwrap(), r1);
            let b2 = Ball::new(PAdicPoint::from_integers([c2, c1, 0, 1], p, 16).unwrap(), r2);
            if b1.intersects(&b2).unwrap() {
                // the smaller is inside the larger: centers within the
                // larger radius
                let big = if r1 >= r2 { &b1 } else { &b2 };
                let small = if r1 >= r2 { &b2 } else { &b1 };
                prop_assert!(big.contains(&small.center).unwrap());
            }
        }
    }

    #[test]
    fn haar_sampler_digit_frequencies() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let x = PAdicScalar::sample_uniform(&mut rng, 3, 0, 6);
            // digit at level 2
            let d = x.digit_at_level(2);
            counts[d as usize] += 1;
        }
        for &c in &counts {
            assert!(c > 800 && c < 1200, "digit frequencies skewed: {counts:?}");
        }
    }
}
