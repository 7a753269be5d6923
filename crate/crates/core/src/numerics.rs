//! Small numerical utilities: compensated summation, adaptive midpoint
//! quadrature, and chi-square tail probabilities.

use crate::error::{Error, Result};
use crate::fmath;

/// Neumaier-compensated accumulator. Also tracks the sum of absolute values
/// so callers can certify cancellation-induced rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
    abs: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if fmath::abs(self.sum) >= fmath::abs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs += fmath::abs(x);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Sum of |terms|; `EPS * abs_value()` bounds the accumulated rounding.
    pub fn abs_value(&self) -> f64 {
        self.abs
    }

    /// Rounding-error bound for the accumulated sum.
    pub fn rounding_bound(&self) -> f64 {
        2.0 * f64::EPSILON * self.abs
    }
}

/// Composite midpoint quadrature with 3x refinement (never evaluates the
/// endpoints) and a Richardson error estimate.
///
/// Returns `(value, error_estimate, evals)`.
pub fn adaptive_midpoint<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol_rel: f64,
    tol_abs: f64,
    max_evals: usize,
) -> Result<(f64, f64, usize)> {
    if !(b > a) {
        return Ok((0.0, 0.0, 0));
    }
    let mut n: usize = 1;
    let mut evals: usize = 0;
    let mut value = (b - a) * f(0.5 * (a + b));
    evals += 1;
    let mut prev;
    loop {
        // refine to 3n points, reusing the previous n
        let step = (b - a) / (3.0 * n as f64);
        let mut acc = CompensatedSum::new();
        for i in 0..n {
            let left = a + 3.0 * i as f64 * step;
            acc.add(f(left + 0.5 * step));
            acc.add(f(left + 2.5 * step));
        }
        evals += 2 * n;
        prev = value;
        value = value / 3.0 + step * acc.value();
        n *= 3;
        let err = fmath::abs(value - prev);
        if err <= tol_rel * fmath::abs(value) + tol_abs {
            // one Richardson step (midpoint error ~ h^2)
            let extrap = (9.0 * value - prev) / 8.0;
            return Ok((extrap, err, evals));
        }
        if evals + 2 * n > max_evals {
            return Err(Error::QuadratureBudgetExceeded);
        }
    }
}

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = core::f64::consts::PI;
        return fmath::ln(pi / fmath::abs(fmath::sin_cos(pi * x).0)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * fmath::ln(2.0 * core::f64::consts::PI) + (x + 0.5) * fmath::ln(t) - t + fmath::ln(a)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = 1.0;
        while fmath::abs(term) > fmath::abs(sum) * 1e-16 && n < 1e4 {
            term *= x / (a + n);
            sum += term;
            n += 1.0;
        }
        sum * fmath::exp(-x + a * fmath::ln(x) - ln_gamma(a))
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

// Lentz continued fraction, valid for x >= a + 1.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    let mut i = 1.0;
    loop {
        let an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if fmath::abs(d) < tiny {
            d = tiny;
        }
        c = b + an / c;
        if fmath::abs(c) < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fmath::abs(del - 1.0) < 1e-16 || i > 1e4 {
            break;
        }
        i += 1.0;
    }
    fmath::exp(-x + a * fmath::ln(x) - ln_gamma(a)) * h
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom (the p-value of a goodness-of-fit statistic).
pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    gamma_q(0.5 * dof, 0.5 * stat)
}

/// Pearson goodness-of-fit test of observed counts against probabilities
/// (cells with expected count below `min_expected` are pooled).
/// Returns `(statistic, dof, p_value)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> (f64, f64, f64) {
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut pool_obs = 0.0;
    let mut pool_exp = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = nf * p;
        if e < min_expected {
            pool_obs += o as f64;
            pool_exp += e;
        } else {
            stat += (o as f64 - e) * (o as f64 - e) / e;
            cells += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp) * (pool_obs - pool_exp) / pool_exp;
        cells += 1;
    }
    let dof = (cells.max(2) - 1) as f64;
    (stat, dof, chi_square_sf(stat, dof))
}

/// Two-sample chi-square homogeneity test over shared bins.
/// Returns `(statistic, dof, p_value)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_expected: f64) -> (f64, f64, f64) {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (ka, kb) = (fmath::sqrt(nb as f64 / na as f64), fmath::sqrt(na as f64 / nb as f64));
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut pa = 0.0;
    let mut pb = 0.0;
    for (&oa, &ob) in a.iter().zip(b) {
        let tot = (oa + ob) as f64;
        if tot < min_expected {
            pa += oa as f64;
            pb += ob as f64;
            continue;
        }
        let d = ka * oa as f64 - kb * ob as f64;
        stat += d * d / tot;
        cells += 1;
    }
    if pa + pb >= min_expected {
        let d = ka * pa - kb * pb;
        stat += d * d / (pa + pb);
        cells += 1;
    }
    let dof = (cells.max(2) - 1) as f64;
    (stat, dof, chi_square_sf(stat, dof))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(2.0)).abs() < 1e-12);
        assert!((ln_gamma(5.0) - fmath::ln(24.0)).abs() < 1e-10);
        assert!((ln_gamma(0.5) - 0.5 * fmath::ln(core::f64::consts::PI)).abs() < 1e-10);
    }

    #[test]
    fn chi_square_tail_matches_closed_form() {
        // dof = 2: sf(x) = exp(-x/2)
        for &x in &[0.1, 1.0, 5.0, 20.0] {
            let sf = chi_square_sf(x, 2.0);
            assert!((sf - fmath::exp(-0.5 * x)).abs() < 1e-10, "x={x} sf={sf}");
        }
        // dof = 4: sf(x) = exp(-x/2)(1 + x/2)
        for &x in &[0.5, 3.0, 12.0] {
            let sf = chi_square_sf(x, 4.0);
            let want = fmath::exp(-0.5 * x) * (1.0 + 0.5 * x);
            assert!((sf - want).abs() < 1e-10);
        }
    }

    #[test]
    fn midpoint_integrates_smooth_functions() {
        let (v, err, _) =
            adaptive_midpoint(|x| fmath::exp(-x), 0.0, 2.0, 1e-9, 1e-11, 1 << 16).unwrap();
        assert!((v - (1.0 - fmath::exp(-2.0))).abs() < 1e-10, "v={v} err={err}");
        // integrable endpoint behaviour (sqrt derivative singularity):
        // midpoint converges ~ h^{3/2}, so only moderate accuracy is cheap
        let (v, _, _) =
            adaptive_midpoint(|x| fmath::sqrt(x), 0.0, 1.0, 1e-6, 1e-8, 1 << 18).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 2e-5);
    }

    #[test]
    fn midpoint_budget_is_enforced() {
        let r = adaptive_midpoint(|x| fmath::sqrt(x), 0.0, 1.0, 1e-14, 0.0, 100);
        assert_eq!(r.unwrap_err(), Error::QuadratureBudgetExceeded);
    }

    #[test]
    fn compensated_sum_tracks_cancellation() {
        let mut s = CompensatedSum::new();
        for _ in 0..1000 {
            s.add(1e16);
            s.add(1.0);
            s.add(-1e16);
        }
        assert_eq!(s.value(), 1000.0);
        assert!(s.abs_value() > 1e18);
    }
}
