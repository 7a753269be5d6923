//! Level-set geometry of |f|_p: exact Haar volumes per norm shell, radial
//! quadrature with certified tails, and the brute-force oscillatory-sum
//! oracle.
//!
//! On the unit sphere |f(u)|_p takes only the values 1 and 1/p, so every
//! integral of a function of |f(x)|_p reduces to a sum over shells
//! ||x|| = p^j weighted by two rational masses. Those masses are obtained by
//! exhaustive residue counting (never assumed), and every truncated sum is
//! returned together with a rigorous tail bound.

use alloc::vec::Vec;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::fmath;
use crate::numerics::CompensatedSum;
use crate::padic::PAdicPoint;
use crate::qform::{power_rational, unit_sphere_counts, FormSide, QFormPair};

/// Exact masses of the level sets {||x||_p = p^j, |f(x)|_p = p^{2j-m}}.
#[derive(Debug, Clone)]
pub struct ShellProfile {
    prime: u32,
    side: FormSide,
    /// vol{ ||u|| = 1, |f(u)| = 1 } (exact)
    v0: BigRational,
    /// vol{ ||u|| = 1, |f(u)| = 1/p } (exact)
    v1: BigRational,
    v0_f: f64,
    v1_f: f64,
}

impl ShellProfile {
    /// Count solutions of f ≡ c (mod p^2) over primitive vectors and divide
    /// by p^8.
    pub fn compute(form: &QFormPair, side: FormSide) -> Result<Self> {
        let counts = unit_sphere_counts(form, side, 2)?;
        let p8 = power_rational(form.prime(), 8);
        let v0 = BigRational::from_integer(counts[0].into()) / &p8;
        let v1 = BigRational::from_integer(counts[1].into()) / &p8;
        Ok(ShellProfile {
            prime: form.prime(),
            side,
            v0_f: v0.to_f64().unwrap_or(0.0),
            v1_f: v1.to_f64().unwrap_or(0.0),
            v0,
            v1,
        })
    }

    pub fn prime(&self) -> u32 {
        self.prime
    }

    pub fn side(&self) -> FormSide {
        self.side
    }

    pub fn base_volumes(&self) -> (&BigRational, &BigRational) {
        (&self.v0, &self.v1)
    }

    pub fn base_volumes_f64(&self) -> (f64, f64) {
        (self.v0_f, self.v1_f)
    }

    /// vol{ ||x|| = p^j, |f(x)| = p^{2j-m} } = p^{4j} v_m (exact).
    pub fn volume(&self, m: u8, j: i64) -> BigRational {
        let base = if m == 0 { &self.v0 } else { &self.v1 };
        base * power_rational(self.prime, 4 * j)
    }

    pub fn volume_f64(&self, m: u8, j: i64) -> f64 {
        let base = if m == 0 { self.v0_f } else { self.v1_f };
        base * fmath::p_pow(self.prime, 4 * j)
    }

    /// p^{4j} (v0 g(2j) + v1 g(2j-1)): one shell of a radial sum.
    pub fn shell_term(&self, g: &mut impl FnMut(i64) -> f64, j: i64) -> f64 {
        fmath::p_pow(self.prime, 4 * j) * (self.v0_f * g(2 * j) + self.v1_f * g(2 * j - 1))
    }
}

/// A value with a rigorous error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certified {
    pub value: f64,
    pub bound: f64,
}

impl Certified {
    pub fn new(value: f64, bound: f64) -> Self {
        Certified { value, bound }
    }
}

/// Caller-declared majorant of |g| on the shells beyond j_max, as a function
/// of the f-value exponent e (|f| = p^e).
#[derive(Debug, Clone, Copy)]
pub enum Majorant {
    /// C p^{s e}; the shell series is exactly geometric (needs 4 + 2s < 0).
    Power { coeff: f64, exponent: f64 },
    /// C p^{s e} exp(-rate p^{alpha e}), rate > 0, alpha > 0.
    PowerExp { coeff: f64, exponent: f64, rate: f64, alpha: f64 },
}

impl Majorant {
    pub fn none() -> Self {
        Majorant::Power { coeff: 0.0, exponent: 0.0 }
    }

    fn eval(&self, p: u32, e: i64) -> f64 {
        match *self {
            Majorant::Power { coeff, exponent } => coeff * fmath::p_pow_f(p, exponent * e as f64),
            Majorant::PowerExp { coeff, exponent, rate, alpha } => {
                coeff
                    * fmath::p_pow_f(p, exponent * e as f64)
                    * fmath::exp(-rate * fmath::p_pow_f(p, alpha * e as f64))
            }
        }
    }
}

/// Bound for sum_{j >= j_from} p^{4j} (v0 U(2j) + v1 U(2j-1)).
fn outer_tail(profile: &ShellProfile, maj: &Majorant, j_from: i64) -> Result<f64> {
    let p = profile.prime;
    match *maj {
        Majorant::Power { coeff, exponent } => {
            if coeff == 0.0 {
                return Ok(0.0);
            }
            let ratio = fmath::p_pow_f(p, 4.0 + 2.0 * exponent);
            if !(ratio < 1.0) {
                return Err(Error::TailNotControlled);
            }
            let lead = profile.v0_f * maj.eval(p, 2 * j_from)
                + profile.v1_f * maj.eval(p, 2 * j_from - 1);
            Ok(fmath::p_pow(p, 4 * j_from) * lead / (1.0 - ratio))
        }
        Majorant::PowerExp { coeff, .. } => {
            if coeff == 0.0 {
                return Ok(0.0);
            }
            let mut acc = 0.0f64;
            let mut prev = f64::INFINITY;
            for step in 0..500 {
                let j = j_from + step;
                let term = fmath::p_pow(p, 4 * j)
                    * (profile.v0_f * maj.eval(p, 2 * j) + profile.v1_f * maj.eval(p, 2 * j - 1));
                if term == 0.0 {
                    return Ok(acc);
                }
                let ratio = term / prev;
                if step > 0 && ratio < 0.5 && term < 1e-3 * (acc + 1e-300) {
                    // the decay rate only grows with j, so the remainder is
                    // dominated by the geometric series at this ratio
                    return Ok(acc + term * ratio / (1.0 - ratio));
                }
                if step > 100 && ratio >= 1.0 {
                    return Err(Error::TailNotControlled);
                }
                acc += term;
                prev = term;
            }
            Err(Error::TailNotControlled)
        }
    }
}

/// sum_{j in [j_min, j_max]} p^{4j} (v0 g(p^{2j}) + v1 g(p^{2j-1})), plus a
/// rigorous bound for both discarded tails: `inner_sup` must dominate |g| on
/// all exponents <= 2 j_min - 1 and `outer` must dominate |g| beyond j_max.
pub fn radial_integral(
    profile: &ShellProfile,
    mut g: impl FnMut(i64) -> f64,
    j_min: i64,
    j_max: i64,
    inner_sup: f64,
    outer: &Majorant,
) -> Result<Certified> {
    let p = profile.prime;
    let mut acc = CompensatedSum::new();
    for j in j_min..=j_max {
        acc.add(profile.shell_term(&mut g, j));
    }
    // sum_{j < j_min} p^{4j} (v0 + v1) = p^{4(j_min-1)} (1 - p^{-4}) / (1 - p^{-4})
    let inner = inner_sup * fmath::p_pow(p, 4 * (j_min - 1)) / (1.0 - fmath::p_pow(p, -4))
        * (profile.v0_f + profile.v1_f);
    let outer_bound = outer_tail(profile, outer, j_max + 1)?;
    Ok(Certified::new(acc.value(), inner + outer_bound + acc.rounding_bound()))
}

const ORACLE_BUDGET: u128 = 300_000_000;

/// Exact Riemann sum for the oscillatory integral over the ball
/// ||xi|| <= p^{m_ball}:
///
///   p^{-4k} * sum over xi in p^{-m_ball} Z_p^4 / p^k Z_p^4 of
///   chi(xi . x) g(|f*(xi)|_p)
///
/// with g given as a function of the value exponent (|f*| = p^e).
///
/// Cosets where the integrand is provably constant are enumerated directly;
/// the residual ball p^{k-1} Z_p^4 (where |f*| is not locally constant at
/// resolution p^k) is integrated exactly by the scaled shell decomposition,
/// so the result carries no discretization error for any admissible k.
/// `g` must be bounded near 0.
pub fn oscillatory_sum_oracle(
    form: &QFormPair,
    x: &PAdicPoint,
    mut g: impl FnMut(i64) -> f64,
    m_ball: i64,
    k: i64,
) -> Result<Complex64> {
    let p = form.prime();
    let k_min = match x.ord() {
        None => 1,
        Some(r) => (1 - r).max(1),
    };
    if k < k_min {
        return Err(Error::CosetResolutionTooCoarse { needed: k_min, got: k });
    }
    let cap = m_ball + k;
    if cap < 1 {
        return Err(Error::CosetResolutionTooCoarse { needed: 1 - m_ball, got: k });
    }
    let count = (p as u128).pow(4 * cap as u32);
    if count > ORACLE_BUDGET {
        return Err(Error::EnumerationTooLarge(count));
    }
    let pp = p as i64;
    let big_p = pp.pow(cap as u32);
    let deep_mod = big_p / pp; // p^{cap-1}

    // per-coordinate character tables: chi(p^{-m_ball} n x_i) for n < P
    let mut chi: [Vec<Complex64>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for (i, slot) in chi.iter_mut().enumerate() {
        let xi = &x.coords()[i];
        let mut t = Vec::with_capacity(big_p as usize);
        match xi.valuation() {
            Some(v) if v < m_ball => {
                let s = (m_ball - v) as usize;
                if xi.precision() < s {
                    return Err(Error::InsufficientPrecision {
                        needed: s as i64,
                        available: xi.precision() as i64,
                    });
                }
                let d = pp.pow(s as u32);
                let mut u = 0i64;
                for &dig in xi.digits()[..s].iter().rev() {
                    u = u * pp + dig as i64;
                }
                let theta = 2.0 * core::f64::consts::PI / d as f64;
                for n in 0..big_p {
                    let j = (n % d) * u % d;
                    let (sn, cs) = fmath::sin_cos(theta * j as f64);
                    t.push(Complex64::new(cs, sn));
                }
            }
            _ => {
                t.resize(big_p as usize, Complex64::new(1.0, 0.0));
            }
        }
        *slot = t;
    }

    let coeffs = form.coefficients(FormSide::FStar);
    // g values by integer valuation w of f*(n): exponent e = 2 m_ball - w
    let w_cap = (2 * cap + 10) as usize;
    let mut g_by_w = Vec::with_capacity(w_cap);
    for w in 0..w_cap as i64 {
        g_by_w.push(g(2 * m_ball - w));
    }

    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    let sq: Vec<i64> = (0..big_p).map(|n| n * n).collect();
    for n4 in 0..big_p {
        let v4 = coeffs[3] * sq[n4 as usize];
        let c4 = chi[3][n4 as usize];
        let deep4 = n4 % deep_mod == 0;
        for n3 in 0..big_p {
            let v34 = v4 + coeffs[2] * sq[n3 as usize];
            let c34 = c4 * chi[2][n3 as usize];
            let deep34 = deep4 && n3 % deep_mod == 0;
            for n2 in 0..big_p {
                let v234 = v34 + coeffs[1] * sq[n2 as usize];
                let c234 = c34 * chi[1][n2 as usize];
                let deep234 = deep34 && n2 % deep_mod == 0;
                for n1 in 0..big_p {
                    if deep234 && n1 % deep_mod == 0 {
                        continue;
                    }
                    let val = v234 + coeffs[0] * sq[n1 as usize];
                    let mut w = 0usize;
                    let mut cur = val.unsigned_abs();
                    debug_assert!(cur != 0, "elliptic form vanished on a primitive vector");
                    while cur % p as u64 == 0 {
                        cur /= p as u64;
                        w += 1;
                    }
                    let gv = g_by_w[w];
                    let c = c234 * chi[0][n1 as usize];
                    re.add(c.re * gv);
                    im.add(c.im * gv);
                }
            }
        }
    }
    let scale = fmath::p_pow(p, -4 * k);
    let mut total = Complex64::new(re.value() * scale, im.value() * scale);

    // residual ball ||xi|| <= p^{m_ball - cap + 1} = p^{1-k}: chi = 1 there
    // (k >= 1 - ord(x)), so only the exact radial part remains
    let profile = ShellProfile::compute(form, FormSide::FStar)?;
    let j_top = 1 - k;
    let mut deep = CompensatedSum::new();
    for j in (j_top - 60..=j_top).rev() {
        let term = profile.shell_term(&mut g, j);
        deep.add(term);
        if fmath::abs(term) < 1e-280 {
            break;
        }
    }
    total += Complex64::new(deep.value(), 0.0);
    Ok(total)
}
