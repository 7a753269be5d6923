//! The elliptic diagonal forms f(x) = x1^2 - a x2^2 - p x3^2 + a p x4^2 and
//! f*(xi) = a p xi1^2 - p xi2^2 - a xi3^2 + xi4^2 (a a quadratic non-residue
//! mod p), exact evaluation of |f(x)|_p, and the residue-search certificate
//! for the two-sided bound B ||x||^2 <= |f(x)|_p <= A ||x||^2.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::padic::{check_odd_prime, PAdicPoint};

/// Which of the dual pair to evaluate: f acts on the x-side, f* on the
/// frequency side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormSide {
    F,
    FStar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QFormPair {
    prime: u32,
    nonresidue: u32,
}

impl QFormPair {
    pub fn new(prime: u32, nonresidue: u32) -> Result<Self> {
        check_odd_prime(prime)?;
        if !is_nonresidue(nonresidue % prime, prime) {
            return Err(Error::InvalidParameter(format!(
                "{nonresidue} is a quadratic residue mod {prime}"
            )));
        }
        Ok(QFormPair { prime, nonresidue })
    }

    /// Uses the smallest positive non-residue.
    pub fn with_default_nonresidue(prime: u32) -> Result<Self> {
        let a = find_nonresidue(prime)?;
        Ok(QFormPair { prime, nonresidue: a })
    }

    pub fn prime(&self) -> u32 {
        self.prime
    }

    pub fn nonresidue(&self) -> u32 {
        self.nonresidue
    }

    /// Diagonal coefficients of the requested form.
    pub fn coefficients(&self, side: FormSide) -> [i64; 4] {
        let p = self.prime as i64;
        let a = self.nonresidue as i64;
        match side {
            FormSide::F => [1, -a, -p, a * p],
            FormSide::FStar => [a * p, -p, -a, 1],
        }
    }

    /// |f(x)|_p (or |f*(x)|_p) as an exact power of p: `Some(e)` means p^e,
    /// `None` means the value 0 (only possible at x = 0 by ellipticity).
    pub fn eval_abs_exp(&self, x: &PAdicPoint, side: FormSide) -> Result<Option<i64>> {
        if x.is_zero() {
            return Ok(None);
        }
        let v = x.ord().expect("nonzero point");
        let p = BigInt::from(self.prime);
        // rescale to the primitive vector y = p^{-v} x and evaluate f(y)
        // exactly modulo p^level, level = min over coordinates of the known
        // digit range of y_i^2
        let mut level = i64::MAX;
        let mut acc = BigInt::zero();
        for (i, &c) in self.coefficients(side).iter().enumerate() {
            let xi = &x.coords()[i];
            match xi.valuation() {
                None => {}
                Some(vi) => {
                    let shift = vi - v;
                    let known = shift + xi.precision() as i64;
                    level = level.min(known);
                    let yi = xi.unit_big() * p.pow(shift as u32);
                    acc += BigInt::from(c) * &yi * &yi;
                }
            }
        }
        if level < 2 {
            return Err(Error::InsufficientPrecision { needed: 2, available: level });
        }
        let modulus = p.pow(level as u32);
        let mut res = acc % &modulus;
        if res.is_negative() {
            res += &modulus;
        }
        if res.is_zero() {
            // impossible for a certified non-residue: |f(u)|_p ∈ {1, 1/p}
            // on the unit sphere
            return Err(Error::CertificationFailed(String::from(
                "unit vector with f ≡ 0 beyond level 2; nonresidue parameter invalid",
            )));
        }
        let mut w = 0i64;
        let mut cur = res;
        while (&cur % &p).is_zero() {
            cur /= &p;
            w += 1;
        }
        Ok(Some(-(2 * v + w)))
    }

    /// |f(x)|_p as an exact rational.
    pub fn eval_abs(&self, x: &PAdicPoint, side: FormSide) -> Result<BigRational> {
        Ok(match self.eval_abs_exp(x, side)? {
            None => BigRational::zero(),
            Some(e) => power_rational(self.prime, e),
        })
    }

    /// Certify B = 1/p, A = 1 by the exhaustive residue search mod p^2.
    pub fn certify_bounds(&self, side: FormSide) -> Result<EllipticityBounds> {
        let counts = unit_sphere_counts(self, side, 2)?;
        Ok(EllipticityBounds {
            lower: power_rational(self.prime, -1),
            upper: BigRational::one(),
            unit_count: counts[0],
            sub_count: counts[1],
        })
    }
}

/// The constants of the two-sided ellipticity estimate, with the residue
/// counts that certify them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EllipticityBounds {
    /// B (lower constant).
    pub lower: BigRational,
    /// A (upper constant).
    pub upper: BigRational,
    /// primitive vectors mod p^2 with |f(u)|_p = 1
    pub unit_count: u64,
    /// primitive vectors mod p^2 with |f(u)|_p = 1/p
    pub sub_count: u64,
}

/// Smallest positive quadratic non-residue mod p.
pub fn find_nonresidue(prime: u32) -> Result<u32> {
    check_odd_prime(prime)?;
    (2..prime)
        .find(|&a| is_nonresidue(a, prime))
        .ok_or_else(|| Error::InvalidParameter(String::from("no nonresidue found")))
}

/// Euler criterion: a^((p-1)/2) ≡ -1 (mod p).
pub fn is_nonresidue(a: u32, prime: u32) -> bool {
    if a % prime == 0 {
        return false;
    }
    mod_pow(a as u64 % prime as u64, (prime as u64 - 1) / 2, prime as u64) == prime as u64 - 1
}

fn mod_pow(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut acc = 1u64;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % modulus;
        }
        base = base * base % modulus;
        exp >>= 1;
    }
    acc
}

pub(crate) fn power_rational(prime: u32, e: i64) -> BigRational {
    let p = BigInt::from(prime);
    if e >= 0 {
        BigRational::from_integer(p.pow(e as u32))
    } else {
        BigRational::new(BigInt::one(), p.pow((-e) as u32))
    }
}

/// Histogram of form values over all of (Z/p^k)^4: `counts[s]` is the number
/// of vectors with f(x) ≡ s (mod p^k). Computed by convolving the four
/// one-dimensional histograms of c_i x^2, so the cost is O(p^{2k}) instead
/// of p^{4k}.
pub fn value_histogram(form: &QFormPair, side: FormSide, k: u32) -> Vec<u64> {
    let p = form.prime as u64;
    let modulus = p.pow(k) as usize;
    let coeffs = form.coefficients(side);
    let mut acc: Vec<u64> = vec![0; modulus];
    acc[0] = 1;
    for &c in &coeffs {
        let mut hist = vec![0u64; modulus];
        let cm = c.rem_euclid(modulus as i64) as u64;
        for x in 0..modulus as u64 {
            let v = (cm * (x * x % modulus as u64)) % modulus as u64;
            hist[v as usize] += 1;
        }
        let mut next = vec![0u64; modulus];
        for (s, &n) in acc.iter().enumerate() {
            if n == 0 {
                continue;
            }
            for (t, &m) in hist.iter().enumerate() {
                if m == 0 {
                    continue;
                }
                next[(s + t) % modulus] += n * m;
            }
        }
        acc = next;
    }
    acc
}

/// Valuation distribution of f over all of (Z/p^k)^4: entry v < k is the
/// number of vectors with v_p(f(x)) = v exactly; entry k counts f ≡ 0
/// (mod p^k).
fn all_valuation_counts(form: &QFormPair, side: FormSide, k: u32) -> Vec<u64> {
    if k == 0 {
        return vec![1];
    }
    let p = form.prime as u64;
    let hist = value_histogram(form, side, k);
    let mut by_val = vec![0u64; k as usize + 1];
    for (s, &n) in hist.iter().enumerate() {
        let v = if s == 0 {
            k as usize
        } else {
            let mut v = 0usize;
            let mut cur = s as u64;
            while cur % p == 0 {
                cur /= p;
                v += 1;
            }
            v
        };
        by_val[v] += n;
    }
    by_val
}

/// Counts of primitive vectors mod p^k by the valuation of f: entry m < k
/// is the number with v_p(f(u)) = m; the final entry counts primitive
/// vectors with f ≡ 0 (mod p^k). Ellipticity forces every entry m >= 2 to
/// vanish; a nonzero one signals an invalid non-residue.
pub fn unit_sphere_counts(form: &QFormPair, side: FormSide, k: u32) -> Result<Vec<u64>> {
    let p = form.prime as u64;
    let mut by_val = all_valuation_counts(form, side, k);
    // remove non-primitive vectors: x = p x' with x' over (Z/p^{k-1})^4 has
    // f(x) = p^2 f(x'), so its valuation mod p^k is min(k, 2 + v) where v is
    // the valuation class of f(x') mod p^{k-2}
    let sub = |by_val: &mut Vec<u64>, idx: usize, c: u64| -> Result<()> {
        by_val[idx] = by_val[idx]
            .checked_sub(c)
            .ok_or_else(|| Error::CertificationFailed(String::from("count underflow")))?;
        Ok(())
    };
    if k == 1 {
        // only the zero vector is non-primitive mod p
        sub(&mut by_val, 1, 1)?;
    } else {
        let inner = all_valuation_counts(form, side, k - 2);
        let lift = p.pow(4); // lifts of an x' class mod p^{k-2} to mod p^{k-1}
        for (v, &c) in inner.iter().enumerate() {
            sub(&mut by_val, (v + 2).min(k as usize), c * lift)?;
        }
    }
    for (m, &c) in by_val.iter().enumerate() {
        if m >= 2 && c != 0 {
            return Err(Error::CertificationFailed(format!(
                "{c} primitive vectors with v_p(f) = {m}"
            )));
        }
    }
    Ok(by_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::PAdicScalar;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_nonresidues() {
        assert_eq!(find_nonresidue(3).unwrap(), 2);
        assert_eq!(find_nonresidue(5).unwrap(), 2);
        // oracle: squares mod 7 are {1, 2, 4}
        let squares: alloc::vec::Vec<u32> = (1..7).map(|x| x * x % 7).collect();
        assert!(!squares.contains(&3));
        assert_eq!(find_nonresidue(7).unwrap(), 3);
        assert_eq!(find_nonresidue(2), Err(Error::NonOddPrime(2)));
    }

    #[test]
    fn rejects_residue_parameter() {
        assert!(QFormPair::new(5, 4).is_err());
        assert!(QFormPair::new(5, 2).is_ok());
        assert!(QFormPair::new(7, 3).is_ok());
    }

    #[test]
    fn eval_abs_basic() {
        let form = QFormPair::new(3, 2).unwrap();
        let e1 = PAdicPoint::from_integers([1, 0, 0, 0], 3, 8).unwrap();
        assert_eq!(form.eval_abs_exp(&e1, FormSide::F).unwrap(), Some(0));
        assert_eq!(form.eval_abs(&e1, FormSide::F).unwrap(), BigRational::one());

        let zero = PAdicPoint::zero(3);
        assert_eq!(form.eval_abs_exp(&zero, FormSide::F).unwrap(), None);

        // f(e3) = -p
        let e3 = PAdicPoint::from_integers([0, 0, 1, 0], 3, 8).unwrap();
        assert_eq!(form.eval_abs_exp(&e3, FormSide::F).unwrap(), Some(-1));

        // homogeneity: |f(p x)| = p^{-2} |f(x)|
        let x = PAdicPoint::from_integers([2, 1, 1, 1], 3, 8).unwrap();
        let ex = form.eval_abs_exp(&x, FormSide::F).unwrap().unwrap();
        let epx = form.eval_abs_exp(&x.scale_by_p(1), FormSide::F).unwrap().unwrap();
        assert_eq!(epx, ex - 2);
    }

    #[test]
    fn unit_vectors_have_abs_one_or_one_over_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [3u32, 5] {
            let form = QFormPair::with_default_nonresidue(p).unwrap();
            for _ in 0..1000 {
                let mut x = PAdicPoint::sample_uniform(&mut rng, p, 0, 10);
                if x.norm_exponent() != Some(0) {
                    continue;
                }
                let e = form.eval_abs_exp(&x, FormSide::F).unwrap().unwrap();
                assert!(e == 0 || e == -1, "p={p} got exponent {e}");
                // and the dual form too
                let ef = form.eval_abs_exp(&x, FormSide::FStar).unwrap().unwrap();
                assert!(ef == 0 || ef == -1);
                x = x.scale_by_p(3);
                let shifted = form.eval_abs_exp(&x, FormSide::F).unwrap().unwrap();
                assert_eq!(shifted, e - 6);
            }
        }
    }

    #[test]
    fn certify_bounds_small_primes() {
        // oracle: exhaustive scan of (Z/9Z)^4 for p = 3
        let form = QFormPair::new(3, 2).unwrap();
        let b = form.certify_bounds(FormSide::F).unwrap();
        assert_eq!(b.upper, BigRational::one());
        assert_eq!(b.lower, power_rational(3, -1));

        let mut n0 = 0u64;
        let mut n1 = 0u64;
        for x1 in 0..9i64 {
            for x2 in 0..9i64 {
                for x3 in 0..9i64 {
                    for x4 in 0..9i64 {
                        if x1 % 3 == 0 && x2 % 3 == 0 && x3 % 3 == 0 && x4 % 3 == 0 {
                            continue;
                        }
                        let f = (x1 * x1 - 2 * x2 * x2 - 3 * x3 * x3 + 6 * x4 * x4).rem_euclid(81);
                        if f % 3 != 0 {
                            n0 += 1;
                        } else if f % 9 != 0 {
                            n1 += 1;
                        } else {
                            panic!("primitive vector with f ≡ 0 mod 9");
                        }
                    }
                }
            }
        }
        assert_eq!(b.unit_count, n0);
        assert_eq!(b.sub_count, n1);
        // closed forms: (1 - p^{-2}) p^8 and p^{-2}(1 - p^{-2}) p^8
        assert_eq!(n0, 6561 - 729);
        assert_eq!(n1, 729 - 81);

        let b5 = QFormPair::new(5, 2).unwrap().certify_bounds(FormSide::F).unwrap();
        assert_eq!(b5.lower, power_rational(5, -1));
        assert_eq!(b5.unit_count, 5u64.pow(8) - 5u64.pow(6));
        assert_eq!(b5.sub_count, 5u64.pow(6) - 5u64.pow(4));
    }

    #[test]
    fn invalid_nonresidue_fails_certification() {
        // bypass the constructor check to exercise the counting path
        let bogus = QFormPair { prime: 5, nonresidue: 4 };
        assert!(matches!(
            unit_sphere_counts(&bogus, FormSide::F, 2),
            Err(Error::CertificationFailed(_))
        ));
    }

    #[test]
    fn ellipticity_exhaustive_mod_p3() {
        let form = QFormPair::new(3, 2).unwrap();
        for side in [FormSide::F, FormSide::FStar] {
            let counts = unit_sphere_counts(&form, side, 3).unwrap();
            assert_eq!(counts[2], 0);
            assert_eq!(counts[3], 0);
            // Hensel stability: mod p^3 counts are p^4 times mod p^2 counts
            let c2 = unit_sphere_counts(&form, side, 2).unwrap();
            assert_eq!(counts[0], c2[0] * 81);
            assert_eq!(counts[1], c2[1] * 81);
        }
    }

    #[test]
    fn local_constancy_of_abs_f() {
        // |f(x + xi)| = |f(x)| whenever ||xi|| < p^{-1} ||x||, exactly
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let form = QFormPair::new(3, 2).unwrap();
        let mut checked = 0u32;
        while checked < 10_000 {
            let x = PAdicPoint::sample_uniform(&mut rng, 3, 1, 12);
            if x.is_zero() {
                continue;
            }
            // ||xi|| < p^{-1} ||x||, i.e. ord(xi) >= ord(x) + 2
            let depth: i64 = rng.gen_range(2..5);
            let xi = PAdicPoint::sample_uniform(&mut rng, 3, -(x.ord().unwrap() + depth), 8);
            let sum = x.add(&xi).unwrap();
            let a = form.eval_abs_exp(&x, FormSide::F).unwrap();
            let b = form.eval_abs_exp(&sum, FormSide::F).unwrap();
            assert_eq!(a, b);
            checked += 1;
        }
    }

    #[test]
    fn duality_identity() {
        // f*(xi) = a p f(xi1/1, xi2/(-a), xi3/(-p), xi4/(a p)), exactly
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = 3u32;
        let a = 2i64;
        let form = QFormPair::new(p, a as u32).unwrap();
        let prec = 14usize;
        for _ in 0..200 {
            let xi = PAdicPoint::sample_uniform(&mut rng, p, 1, prec);
            if xi.is_zero() {
                continue;
            }
            let denoms = [1i64, -a, -(p as i64), a * p as i64];
            let mut coords = alloc::vec::Vec::new();
            for (c, d) in xi.coords().iter().zip(denoms) {
                let inv = PAdicScalar::from_rational(1, d, p, prec).unwrap();
                coords.push(c.mul(&inv).unwrap());
            }
            let y = PAdicPoint::new([
                coords[0].clone(),
                coords[1].clone(),
                coords[2].clone(),
                coords[3].clone(),
            ])
            .unwrap();
            let lhs = form.eval_abs_exp(&xi, FormSide::FStar).unwrap();
            let rhs = form.eval_abs_exp(&y, FormSide::F).unwrap();
            // |a p|_p = p^{-1}
            assert_eq!(lhs, rhs.map(|e| e - 1));
        }
    }
}
