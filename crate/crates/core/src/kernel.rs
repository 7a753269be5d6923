//! The heat kernel Z(x, t) attached to f*, its time derivative, the
//! operators f(d, gamma) applied to it, and certified integration of
//! products of shifted kernels.
//!
//! Two independent evaluation routes are kept side by side:
//!
//! * the power series in t (valid everywhere, numerically trustworthy while
//!   q = kappa t p^{alpha(1-e)} stays small, where |f(x)|_p = p^e);
//! * an exact Fourier-side shell decomposition: chi(xi.x) integrates to a
//!   closed form over every f*-level set (shells above ord(x)+1 vanish by
//!   ball-character orthogonality), leaving a rapidly convergent positive
//!   sum that is stable precisely where the series cancels catastrophically.
//!
//! The production entry points dispatch on q and report certified bounds;
//! the brute-force coset oracle in `radial` stays available as the trust
//! anchor for both routes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::fmath;
use crate::numerics::CompensatedSum;
use crate::padic::{Ball, PAdicPoint};
use crate::qform::{FormSide, QFormPair};
use crate::radial::{radial_integral, Certified, Majorant, ShellProfile};

/// Parameters of the kernel Z(x, t) = int chi(xi.x) exp(-kappa t |f*(xi)|^alpha).
#[derive(Debug, Clone)]
pub struct KernelParams {
    form: QFormPair,
    alpha: f64,
    kappa: f64,
}

impl KernelParams {
    pub fn new(form: QFormPair, alpha: f64, kappa: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("alpha = {alpha} must be > 0")));
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("kappa = {kappa} must be > 0")));
        }
        Ok(KernelParams { form, alpha, kappa })
    }

    pub fn form(&self) -> &QFormPair {
        &self.form
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn prime(&self) -> u32 {
        self.form.prime()
    }
}

/// A kernel evaluation: value, certified error, and the number of terms or
/// shells consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub truncation_error: f64,
    pub terms_used: u32,
}

impl KernelValue {
    pub fn certified(&self) -> Certified {
        Certified::new(self.value, self.truncation_error)
    }
}

/// |f(x)|_p = p^e determines ||x|| = p^{-r} and the unit type m in {0, 1}
/// through e = -(2r + m).
pub fn split_exponent(e: i64) -> (i64, u8) {
    let m = (-e).rem_euclid(2);
    let r = (-e - m) / 2;
    (r, m as u8)
}

/// Relative accuracy target of the series stop rule.
const SERIES_REL_EPS: f64 = 1e-14;
const SERIES_ABS_FLOOR: f64 = 1e-300;
const SERIES_MAX_TERMS: u32 = 400;
/// Beyond this the alternating series cannot certify anything in f64.
const SERIES_Q_HARD_LIMIT: f64 = 35.0;
/// Production dispatch: series below, shell decomposition above.
const Q_SWITCH: f64 = 1.0;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Integrand {
    /// exp(-kappa t v^alpha)
    Heat,
    /// -kappa v^alpha exp(-kappa t v^alpha)
    HeatDt,
    /// v^gamma exp(-kappa t v^alpha)
    Symbol,
}

type CacheKey = (u8, u64, u64, i64);

/// Memoizing evaluator bound to one parameter set. All heavy consumers
/// (mass sums, potentials, convolutions) call through here.
pub struct KernelEvaluator {
    params: KernelParams,
    /// x-side level sets (form f)
    profile_x: ShellProfile,
    /// frequency-side shells (form f*)
    profile_xi: ShellProfile,
    cache: RefCell<BTreeMap<CacheKey, KernelValue>>,
}

impl KernelEvaluator {
    pub fn new(params: KernelParams) -> Result<Self> {
        let profile_x = ShellProfile::compute(&params.form, FormSide::F)?;
        let profile_xi = ShellProfile::compute(&params.form, FormSide::FStar)?;
        Ok(KernelEvaluator { params, profile_x, profile_xi, cache: RefCell::new(BTreeMap::new()) })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn profile_x(&self) -> &ShellProfile {
        &self.profile_x
    }

    pub fn profile_xi(&self) -> &ShellProfile {
        &self.profile_xi
    }

    fn p(&self) -> u32 {
        self.params.prime()
    }

    /// q = kappa t p^{alpha (1 - e)}: the growth parameter of the series.
    pub fn series_regime(&self, e: i64, t: f64) -> f64 {
        self.params.kappa * t * fmath::p_pow_f(self.p(), self.params.alpha * (1 - e) as f64)
    }

    /// (1 - p^{-s}) / (1 - p^{-s-2}): the bounded part of the Riesz constant
    /// (1 - p^s)/(1 - p^{-s-2}) = -p^s D(s).
    fn riesz_d(&self, s: f64) -> f64 {
        let p = self.p();
        (1.0 - fmath::p_pow_f(p, -s)) / (1.0 - fmath::p_pow_f(p, -s - 2.0))
    }

    fn d_max(&self) -> f64 {
        1.0 / (1.0 - fmath::p_pow(self.p(), -2))
    }

    /// Power series at |f(x)| = p^e:
    ///   Z-type      : p^{-2e}       sum_{m>=1} (-1)^{m+1} D(am)   q^m/m!
    ///   symbol-type : p^{g(1-e)-2e} sum_{m>=0} (-1)^{m+1} D(am+g) q^m/m!
    ///   d/dt        : termwise derivative of the Z-type series.
    /// This is an exact rewrite of the Taylor expansion of the oscillatory
    /// integral; the prefactor keeps every accumulated quantity O(q^m/m!).
    fn series(&self, e: i64, t: f64, kind: Integrand, gamma: f64) -> Result<KernelValue> {
        let alpha = self.params.alpha;
        let q = self.series_regime(e, t);
        if q > SERIES_Q_HARD_LIMIT {
            return Err(Error::SeriesNotConverged);
        }
        let (m_start, g) = match kind {
            Integrand::Heat | Integrand::HeatDt => (1u32, 0.0),
            Integrand::Symbol => (0u32, gamma),
        };
        let prefactor = fmath::p_pow_f(self.p(), g * (1 - e) as f64 - 2.0 * e as f64);
        let mut acc = CompensatedSum::new();
        let mut pow = 1.0f64; // q^m / m!
        for m in 1..=m_start {
            pow *= q / m as f64;
        }
        let mut m = m_start;
        let mut last;
        loop {
            let s = alpha * m as f64 + g;
            let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
            let dt_factor = if kind == Integrand::HeatDt { m as f64 / t } else { 1.0 };
            let term = sign * self.riesz_d(s) * pow * dt_factor;
            acc.add(term);
            last = fmath::abs(term);
            let small = last <= SERIES_REL_EPS * fmath::abs(acc.value()) + SERIES_ABS_FLOOR;
            if small && m as f64 >= q {
                break;
            }
            m += 1;
            if m > SERIES_MAX_TERMS {
                return Err(Error::SeriesNotConverged);
            }
            pow *= q / m as f64;
        }
        // remaining terms are dominated by D_max q^{M+1}/(M+1)!, geometric
        // with ratio q/(M+2)
        let mnext = m as f64 + 1.0;
        let tail_geo = q / (mnext + 1.0);
        let dt_factor = if kind == Integrand::HeatDt { (mnext + 1.0) / t } else { 1.0 };
        let tail = if tail_geo < 0.9 {
            self.d_max() * (pow * q / mnext) * dt_factor / (1.0 - tail_geo)
        } else {
            f64::INFINITY
        };
        let value = prefactor * acc.value();
        let err = prefactor * (tail + acc.rounding_bound() + last);
        if !err.is_finite() || err > 0.5 * fmath::abs(value) + SERIES_ABS_FLOOR {
            return Err(Error::SeriesNotConverged);
        }
        Ok(KernelValue { value, truncation_error: err, terms_used: m })
    }

    fn integrand_value(&self, kind: Integrand, gamma: f64, t: f64, ee: i64) -> f64 {
        let p = self.p();
        let decay =
            fmath::exp(-self.params.kappa * t * fmath::p_pow_f(p, self.params.alpha * ee as f64));
        match kind {
            Integrand::Heat => decay,
            Integrand::HeatDt => {
                -self.params.kappa * fmath::p_pow_f(p, self.params.alpha * ee as f64) * decay
            }
            Integrand::Symbol => fmath::p_pow_f(p, gamma * ee as f64) * decay,
        }
    }

    /// Exact Fourier-side shell decomposition at |f(x)| = p^e: the character
    /// integrates to p^{4j} w_m over the level sets of shells j <= ord(x),
    /// vanishes on shells >= ord(x) + 2, and takes closed boundary values
    /// (fixed by the Riesz functional equation) on the shell ord(x) + 1.
    fn shell_route(&self, e: i64, t: f64, kind: Integrand, gamma: f64) -> Result<KernelValue> {
        let p = self.p();
        let (r, m_x) = split_exponent(e);
        let h = |ee: i64| self.integrand_value(kind, gamma, t, ee);
        let mut acc = CompensatedSum::new();
        // boundary shell r + 1
        let p4r = fmath::p_pow(p, 4 * r);
        if !p4r.is_finite() || p4r == 0.0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "exponent {e} out of floating-point range"
            )));
        }
        if m_x == 0 {
            acc.add(-p4r * h(2 * r + 1));
        } else {
            acc.add(-p4r * fmath::p_pow(p, 2) * h(2 * r + 2));
            acc.add(p4r * (fmath::p_pow(p, 2) - 1.0) * h(2 * r + 1));
        }
        // low shells j <= r; the decay factor underflows to exactly 0 on the
        // top shells when kappa t p^{2j alpha} is huge, so the small-term
        // stop must wait until the live region has been crossed
        let (w0, w1) = self.profile_xi.base_volumes_f64();
        let mut shells = 0u32;
        let mut seen_live = false;
        let mut j = r;
        loop {
            let term = fmath::p_pow(p, 4 * j) * (w0 * h(2 * j) + w1 * h(2 * j - 1));
            acc.add(term);
            shells += 1;
            seen_live |= term != 0.0;
            let small = fmath::abs(term) <= 1e-18 * fmath::abs(acc.value()) + 1e-280;
            if (seen_live && small) || shells > 260 {
                break;
            }
            j -= 1;
        }
        // tail over j' < j: |h(ee)| <= c0 p^{ee s0}, so the remainder is
        // geometric with ratio p^{-4-2 s0}
        let (s0, c0) = match kind {
            Integrand::Heat => (0.0, 1.0),
            Integrand::HeatDt => (self.params.alpha, self.params.kappa),
            Integrand::Symbol => (gamma, 1.0),
        };
        let jf = (j - 1) as f64;
        let tail = c0 * fmath::p_pow_f(p, 4.0 * jf + s0 * (2.0 * jf)) * (w0 + w1)
            / (1.0 - fmath::p_pow_f(p, -4.0 - 2.0 * s0));
        Ok(KernelValue {
            value: acc.value(),
            truncation_error: tail + acc.rounding_bound(),
            terms_used: shells,
        })
    }

    fn cached(
        &self,
        kind: Integrand,
        gamma: f64,
        e: i64,
        t: f64,
        compute: impl FnOnce() -> Result<KernelValue>,
    ) -> Result<KernelValue> {
        let tag = match kind {
            Integrand::Heat => 0u8,
            Integrand::HeatDt => 1,
            Integrand::Symbol => 2,
        };
        let key = (tag, t.to_bits(), gamma.to_bits(), e);
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let v = compute()?;
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }

    fn dispatch(&self, e: i64, t: f64, kind: Integrand, gamma: f64) -> Result<KernelValue> {
        self.cached(kind, gamma, e, t, || {
            if self.series_regime(e, t) <= Q_SWITCH {
                self.series(e, t, kind, gamma)
            } else {
                self.shell_route(e, t, kind, gamma)
            }
        })
    }

    /// Z(x, t) for x != 0 with |f(x)|_p = p^e; t > 0.
    pub fn kernel(&self, e: i64, t: f64) -> Result<KernelValue> {
        check_time(t)?;
        self.dispatch(e, t, Integrand::Heat, 0.0)
    }

    /// The raw power series (production path for small q; errors in the
    /// cancellation regime instead of degrading silently).
    pub fn kernel_series_only(&self, e: i64, t: f64) -> Result<KernelValue> {
        check_time(t)?;
        self.series(e, t, Integrand::Heat, 0.0)
    }

    /// The exact shell decomposition on its own (the dual route).
    pub fn kernel_shell_only(&self, e: i64, t: f64) -> Result<KernelValue> {
        check_time(t)?;
        self.shell_route(e, t, Integrand::Heat, 0.0)
    }

    /// Z(0, t) = integral of exp(-kappa t |f*|^alpha) over all of Q_p^4.
    pub fn kernel_at_zero(&self, t: f64) -> Result<KernelValue> {
        check_time(t)?;
        self.at_zero(t, Integrand::Heat, 0.0)
    }

    fn at_zero(&self, t: f64, kind: Integrand, gamma: f64) -> Result<KernelValue> {
        let p = self.p();
        let alpha = self.params.alpha;
        let kt = self.params.kappa * t;
        // highest shell where the integrand is still representable
        let top =
            ((fmath::ln(745.0 / kt.min(745.0)) / fmath::ln(p as f64) / alpha + 1.0) / 2.0).max(1.0);
        let j_max = (fmath::ceil(top) as i64 + 2).clamp(1, 400);
        let j_min = -((18.0 * core::f64::consts::LN_10 / (4.0 * fmath::ln(p as f64))) as i64 + 3);
        let (s0, c0) = match kind {
            Integrand::Heat => (0.0, 1.0),
            Integrand::HeatDt => (alpha, self.params.kappa),
            Integrand::Symbol => (gamma, 1.0),
        };
        let inner_sup = c0 * fmath::p_pow_f(p, s0 * (2 * j_min - 1) as f64);
        let outer = Majorant::PowerExp { coeff: c0, exponent: s0, rate: kt, alpha };
        let r = radial_integral(
            &self.profile_xi,
            |ee| self.integrand_value(kind, gamma, t, ee),
            j_min,
            j_max,
            inner_sup,
            &outer,
        )?;
        Ok(KernelValue {
            value: r.value,
            truncation_error: r.bound,
            terms_used: (j_max - j_min) as u32,
        })
    }

    /// dZ/dt at |f(x)| = p^e.
    pub fn time_derivative(&self, e: i64, t: f64) -> Result<KernelValue> {
        check_time(t)?;
        self.dispatch(e, t, Integrand::HeatDt, 0.0)
    }

    /// (f(d, gamma) Z_t)(x): symbol route at |f(x)| = p^e, radial route at
    /// x = 0 (`e = None`). Requires 0 < gamma <= alpha.
    pub fn apply_symbol(&self, e: Option<i64>, gamma: f64, t: f64) -> Result<KernelValue> {
        check_time(t)?;
        if !(gamma > 0.0 && gamma <= self.params.alpha) {
            return Err(Error::GammaOutOfRange);
        }
        match e {
            Some(e) => self.dispatch(e, t, Integrand::Symbol, gamma),
            None => self.at_zero(t, Integrand::Symbol, gamma),
        }
    }

    /// Value of Z at a point given by its f-exponent (None encodes x = 0).
    pub fn kernel_opt(&self, e: Option<i64>, t: f64) -> Result<KernelValue> {
        match e {
            Some(e) => self.kernel(e, t),
            None => self.kernel_at_zero(t),
        }
    }

    /// A rigorous global bound: 0 <= Z(y, t) <= Z(0, t).
    pub fn sup_bound(&self, t: f64) -> Result<f64> {
        let z0 = self.kernel_at_zero(t)?;
        Ok(z0.value + z0.truncation_error)
    }

    /// |Z(e)| bound from the series leading term, valid when q(e) <= 1/2.
    pub(crate) fn far_bound(&self, e: i64, t: f64) -> f64 {
        let q = self.series_regime(e, t);
        let p2e = fmath::p_pow_f(self.p(), -2.0 * e as f64);
        self.d_max() * p2e * q * fmath::exp(q)
    }

    /// integral of Z_t over Q_p^4, summed over the f-level sets of x-space,
    /// with certified truncation. The exact value is 1.
    pub fn mass(&self, t: f64) -> Result<Certified> {
        check_time(t)?;
        let p = self.p();
        let (v0, v1) = self.profile_x.base_volumes_f64();
        let mut acc = CompensatedSum::new();
        let mut bound = 0.0f64;
        // outward shells until the far-regime bound certifies the tail
        let mut j = 0i64;
        loop {
            let z0 = self.kernel(2 * j, t)?;
            let z1 = self.kernel(2 * j - 1, t)?;
            let vol = fmath::p_pow(p, 4 * j);
            acc.add(vol * (v0 * z0.value + v1 * z1.value));
            bound += vol * (v0 * z0.truncation_error + v1 * z1.truncation_error);
            j += 1;
            if j > 110 {
                return Err(Error::TailNotControlled);
            }
            if self.series_regime(2 * j - 1, t) <= 0.5 {
                let term = fmath::p_pow(p, 4 * j)
                    * (v0 * self.far_bound(2 * j, t) + v1 * self.far_bound(2 * j - 1, t));
                if term < 1e-14 {
                    // remaining shells decay geometrically with ratio p^{-2 alpha}
                    let ratio = fmath::p_pow_f(p, -2.0 * self.params.alpha);
                    bound += term / (1.0 - ratio);
                    break;
                }
            }
        }
        // inward shells; Z is bounded by Z(0, t)
        let sup = self.sup_bound(t)?;
        let mut jn = -1i64;
        loop {
            let z0 = self.kernel(2 * jn, t)?;
            let z1 = self.kernel(2 * jn - 1, t)?;
            let vol = fmath::p_pow(p, 4 * jn);
            acc.add(vol * (v0 * z0.value + v1 * z1.value));
            bound += vol * (v0 * z0.truncation_error + v1 * z1.truncation_error);
            let remaining = sup * fmath::p_pow(p, 4 * jn) / (1.0 - fmath::p_pow(p, -4));
            if remaining < 1e-14 {
                bound += remaining;
                break;
            }
            jn -= 1;
            if jn < -110 {
                return Err(Error::TailNotControlled);
            }
        }
        Ok(Certified::new(acc.value(), bound + acc.rounding_bound()))
    }

    /// integral of (f(d, gamma) Z_t) over Q_p^4 (exactly 0 by the mass and
    /// symbol identities), returned with its certified truncation.
    pub fn symbol_integral(&self, gamma: f64, t: f64) -> Result<Certified> {
        check_time(t)?;
        if !(gamma > 0.0 && gamma <= self.params.alpha) {
            return Err(Error::GammaOutOfRange);
        }
        let p = self.p();
        let (v0, v1) = self.profile_x.base_volumes_f64();
        let mut acc = CompensatedSum::new();
        let mut bound = 0.0f64;
        let mut j = 0i64;
        loop {
            let a0 = self.apply_symbol(Some(2 * j), gamma, t)?;
            let a1 = self.apply_symbol(Some(2 * j - 1), gamma, t)?;
            let vol = fmath::p_pow(p, 4 * j);
            acc.add(vol * (v0 * a0.value + v1 * a1.value));
            bound += vol * (v0 * a0.truncation_error + v1 * a1.truncation_error);
            j += 1;
            if j > 110 {
                return Err(Error::TailNotControlled);
            }
            if self.series_regime(2 * j - 1, t) <= 0.5 {
                // |A(e)| <= D_max p^{gamma(1-e) - 2e} e^q: shells decay like
                // p^{-2 gamma j}
                let e = 2 * j - 1;
                let far = self.d_max()
                    * fmath::p_pow_f(p, gamma * (1 - e) as f64 - 2.0 * e as f64)
                    * fmath::exp(0.5);
                let term = fmath::p_pow(p, 4 * j) * (v0 + v1) * far;
                if term < 1e-13 {
                    bound += term / (1.0 - fmath::p_pow_f(p, -2.0 * gamma));
                    break;
                }
            }
        }
        let sup0 = {
            let a = self.at_zero(t, Integrand::Symbol, gamma)?;
            fmath::abs(a.value) + a.truncation_error
        };
        let mut jn = -1i64;
        loop {
            let a0 = self.apply_symbol(Some(2 * jn), gamma, t)?;
            let a1 = self.apply_symbol(Some(2 * jn - 1), gamma, t)?;
            let vol = fmath::p_pow(p, 4 * jn);
            acc.add(vol * (v0 * a0.value + v1 * a1.value));
            bound += vol * (v0 * a0.truncation_error + v1 * a1.truncation_error);
            let remaining = sup0 * fmath::p_pow(p, 4 * jn) / (1.0 - fmath::p_pow(p, -4));
            if remaining < 1e-13 {
                bound += remaining;
                break;
            }
            jn -= 1;
            if jn < -110 {
                return Err(Error::TailNotControlled);
            }
        }
        Ok(Certified::new(acc.value(), bound + acc.rounding_bound()))
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("t = {t} must be > 0")));
    }
    Ok(())
}

/// A radial kernel with a fixed argument shift: y -> K(center - y).
pub struct ShiftedKernel<'a> {
    pub center: &'a PAdicPoint,
    pub eval: &'a KernelEvaluator,
    pub t: f64,
    /// None = the heat kernel Z; Some(gamma) = f(d, gamma) Z.
    pub gamma: Option<f64>,
}

impl ShiftedKernel<'_> {
    fn value_at(&self, e: Option<i64>) -> Result<Certified> {
        let kv = match self.gamma {
            None => self.eval.kernel_opt(e, self.t)?,
            Some(g) => self.eval.apply_symbol(e, g, self.t)?,
        };
        Ok(kv.certified())
    }

    fn sup(&self) -> Result<f64> {
        match self.gamma {
            None => self.eval.sup_bound(self.t),
            Some(g) => {
                // |f(d,g)Z| <= int |f*|^g exp(...): the radial value at 0
                let a = self.eval.at_zero(self.t, Integrand::Symbol, g)?;
                Ok(fmath::abs(a.value) + a.truncation_error)
            }
        }
    }
}

enum FactorState {
    /// |f(center - y)| = p^e on the whole ball (certified)
    Constant(Option<i64>),
    /// the shifted center lies inside the ball
    SingularInside,
    /// constant only after one more split
    Unresolved,
}

/// Whether |f(shift - y)| is constant for y in the ball.
fn classify(shift: &PAdicPoint, ball: &Ball, form: &QFormPair) -> Result<FactorState> {
    let d = match shift.sub(&ball.center) {
        Ok(d) => d,
        Err(Error::InsufficientPrecision { .. }) => {
            // the difference vanishes beyond working precision
            return Ok(FactorState::SingularInside);
        }
        Err(e) => return Err(e),
    };
    match d.norm_exponent() {
        None => Ok(FactorState::SingularInside),
        Some(ne) if ne <= ball.radius_exp => Ok(FactorState::SingularInside),
        Some(_) => {
            let e = form.eval_abs_exp(&d, FormSide::F)?.expect("nonzero difference");
            let (r, m) = split_exponent(e);
            // perturbations obey |2B(d,delta)| <= ||d|| p^g and |f(delta)| <=
            // p^{2g}; both stay below |f(d)| = p^{-2r-m} iff g <= -r - 1 - m
            if ball.radius_exp <= -r - 1 - i64::from(m) {
                Ok(FactorState::Constant(Some(e)))
            } else {
                Ok(FactorState::Unresolved)
            }
        }
    }
}

/// integral over `ball` of a product of shifted kernels, with quadrature
/// error at most `tol` plus the kernels' own evaluation bounds.
///
/// Non-constant factors are resolved by p^4 splitting; around a singular
/// shifted center with all other factors constant the integral collapses to
/// an exact radial sum.
pub fn integrate_product_over_ball(
    ball: &Ball,
    factors: &[ShiftedKernel<'_>],
    tol: f64,
) -> Result<Certified> {
    if factors.is_empty() {
        return Ok(Certified::new(ball.volume_f64(), 0.0));
    }
    let form = factors[0].eval.params().form().clone();
    let mut states = Vec::with_capacity(factors.len());
    for f in factors {
        states.push(classify(f.center, ball, &form)?);
    }

    // all constant: product of point values
    if states.iter().all(|s| matches!(s, FactorState::Constant(_))) {
        let vol = ball.volume_f64();
        let mut value = vol;
        let mut rel_bound = 0.0f64;
        for (f, s) in factors.iter().zip(&states) {
            if let FactorState::Constant(e) = s {
                let c = f.value_at(*e)?;
                value *= c.value;
                rel_bound += c.bound / fmath::abs(c.value).max(1e-300);
            }
        }
        return Ok(Certified::new(value, fmath::abs(value) * rel_bound));
    }

    // one singular factor, the rest constant: exact radial sum over the
    // shifted ball (which contains 0)
    let n_bad = states.iter().filter(|s| !matches!(s, FactorState::Constant(_))).count();
    if n_bad == 1 {
        if let Some(idx) = states.iter().position(|s| matches!(s, FactorState::SingularInside)) {
            let mut const_prod = 1.0f64;
            let mut rel_bound = 0.0f64;
            for (i, (f, s)) in factors.iter().zip(&states).enumerate() {
                if i == idx {
                    continue;
                }
                if let FactorState::Constant(e) = s {
                    let c = f.value_at(*e)?;
                    const_prod *= c.value;
                    rel_bound += c.bound / fmath::abs(c.value).max(1e-300);
                }
            }
            let r = radial_ball_integral(&factors[idx], ball.radius_exp)?;
            let value = const_prod * r.value;
            let bound = fmath::abs(value) * rel_bound + fmath::abs(const_prod) * r.bound;
            return Ok(Certified::new(value, bound));
        }
    }

    // below tolerance: endpoint estimate with the product of global sups
    let mut sup_prod = 1.0f64;
    for f in factors {
        sup_prod *= f.sup()?;
    }
    let vol = ball.volume_f64();
    if vol * sup_prod * 2.0 <= tol {
        let mut value = vol;
        for f in factors {
            let e = match f.center.sub(&ball.center) {
                Ok(d) if !d.is_zero() => form.eval_abs_exp(&d, FormSide::F)?,
                _ => None,
            };
            value *= f.value_at(e)?.value;
        }
        return Ok(Certified::new(value, vol * sup_prod * 2.0));
    }

    // split; only children that cannot resolve immediately (at most a few
    // singular towers) consume the error budget
    let children = ball.children()?;
    let mut recursing = 0usize;
    let mut child_states = Vec::with_capacity(children.len());
    for child in &children {
        let mut all_const = true;
        let mut n_sing = 0usize;
        let mut n_unres = 0usize;
        for f in factors {
            match classify(f.center, child, &form)? {
                FactorState::Constant(_) => {}
                FactorState::SingularInside => {
                    all_const = false;
                    n_sing += 1;
                }
                FactorState::Unresolved => {
                    all_const = false;
                    n_unres += 1;
                }
            }
        }
        // direct cases: fully constant, or one singular factor with the
        // rest constant (radial fast path)
        let direct = all_const || (n_sing == 1 && n_unres == 0);
        if !direct {
            recursing += 1;
        }
        child_states.push(direct);
    }
    let child_tol = tol / recursing.max(1) as f64;
    let mut value = CompensatedSum::new();
    let mut bound = 0.0f64;
    for (child, &direct) in children.iter().zip(&child_states) {
        let c = integrate_product_over_ball(child, factors, if direct { tol } else { child_tol })?;
        value.add(c.value);
        bound += c.bound;
    }
    Ok(Certified::new(value.value(), bound + value.rounding_bound()))
}

/// integral of K(center - y) over a ball containing `center`: after the
/// substitution w = center - y this is the radial integral over a ball
/// around 0.
fn radial_ball_integral(factor: &ShiftedKernel<'_>, radius_exp: i64) -> Result<Certified> {
    let eval = factor.eval;
    let p = eval.params().prime();
    let (v0, v1) = eval.profile_x().base_volumes_f64();
    let mut acc = CompensatedSum::new();
    let mut bound = 0.0f64;
    let sup = factor.sup()?;
    let mut j = radius_exp;
    loop {
        let k0 = factor.value_at(Some(2 * j))?;
        let k1 = factor.value_at(Some(2 * j - 1))?;
        let vol = fmath::p_pow(p, 4 * j);
        acc.add(vol * (v0 * k0.value + v1 * k1.value));
        bound += vol * (v0 * k0.bound + v1 * k1.bound);
        let remaining = sup * fmath::p_pow(p, 4 * (j - 1)) / (1.0 - fmath::p_pow(p, -4));
        if remaining < 1e-16 * fmath::abs(acc.value()) + 1e-300 || j < radius_exp - 200 {
            bound += remaining;
            break;
        }
        j -= 1;
    }
    Ok(Certified::new(acc.value(), bound + acc.rounding_bound()))
}

/// Chapman-Kolmogorov left side: integral of Z_s(x - y) Z_t(y) d^4 y with
/// quadrature error at most `tol` plus evaluation bounds.
pub fn convolve(
    eval: &KernelEvaluator,
    x: &PAdicPoint,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<Certified> {
    check_time(s)?;
    check_time(t)?;
    let p = eval.params().prime();
    let nx = x.norm_exponent().unwrap_or(0);

    // outside ||y|| = p^{j_out} both factors are radial in y; extend until
    // the product tail is certified below tol/2
    let (v0, v1) = eval.profile_x().base_volumes_f64();
    let mut j_out = nx.max(0) + 1;
    let mut outer_bound;
    loop {
        let e = 2 * (j_out + 1) - 1;
        if eval.series_regime(e, s) <= 0.5 && eval.series_regime(e, t) <= 0.5 {
            let term = fmath::p_pow(p, 4 * (j_out + 1))
                * (v0 + v1)
                * eval.far_bound(e, s)
                * eval.far_bound(e, t);
            // shells decay like p^{-(4 + 4 alpha) j}
            let ratio = fmath::p_pow_f(p, -4.0 * eval.params().alpha() - 4.0);
            outer_bound = term / (1.0 - ratio);
            if outer_bound < 0.5 * tol {
                break;
            }
        }
        j_out += 1;
        if j_out > 120 {
            return Err(Error::TailNotControlled);
        }
    }

    // exact radial shells between ||x||+2 and j_out (|f(x-y)| = |f(y)| there);
    // the rest goes through the ball engine
    let mut acc = CompensatedSum::new();
    let mut bound = outer_bound;
    let j_ball = nx + 1;
    for j in (nx + 2)..=j_out {
        let z0s = eval.kernel(2 * j, s)?;
        let z0t = eval.kernel(2 * j, t)?;
        let z1s = eval.kernel(2 * j - 1, s)?;
        let z1t = eval.kernel(2 * j - 1, t)?;
        let vol = fmath::p_pow(p, 4 * j);
        acc.add(vol * (v0 * z0s.value * z0t.value + v1 * z1s.value * z1t.value));
        bound += vol
            * (v0
                * (z0s.truncation_error * fmath::abs(z0t.value)
                    + fmath::abs(z0s.value) * z0t.truncation_error)
                + v1 * (z1s.truncation_error * fmath::abs(z1t.value)
                    + fmath::abs(z1s.value) * z1t.truncation_error));
    }

    let zero = PAdicPoint::zero(p);
    let ball = Ball::new(zero.clone(), j_ball);
    let factors = [
        ShiftedKernel { center: x, eval, t: s, gamma: None },
        ShiftedKernel { center: &zero, eval, t, gamma: None },
    ];
    let inner = integrate_product_over_ball(&ball, &factors, 0.5 * tol)?;
    acc.add(inner.value);
    bound += inner.bound;
    Ok(Certified::new(acc.value(), bound + acc.rounding_bound()))
}

/// Fitted constant of a kernel estimate over a grid of (f-exponent, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub max_ratio: f64,
    pub argmax_e: i64,
    pub argmax_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundKind {
    /// Z <= C1 t (t^{1/2a} + ||x||)^{-2a-4}
    Kernel,
    /// |dZ/dt| <= C2 (t^{1/2a} + ||x||)^{-2a-4}
    TimeDerivative,
    /// |f(d,g)Z| <= C (t^{1/2a} + ||x||)^{-2g-4}
    Symbol(f64),
}

pub fn fitted_constant(
    eval: &KernelEvaluator,
    kind: BoundKind,
    grid: &[(i64, f64)],
) -> Result<BoundReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(alloc::string::String::from("empty grid")));
    }
    let p = eval.params().prime();
    let alpha = eval.params().alpha();
    let mut report = BoundReport { max_ratio: 0.0, argmax_e: 0, argmax_t: 0.0 };
    for &(e, t) in grid {
        let (r, _) = split_exponent(e);
        let norm_x = fmath::p_pow(p, -r);
        let scale = fmath::pow(t, 1.0 / (2.0 * alpha)) + norm_x;
        let (num, decay) = match kind {
            BoundKind::Kernel => {
                (eval.kernel(e, t)?.value, t * fmath::pow(scale, -2.0 * alpha - 4.0))
            }
            BoundKind::TimeDerivative => (
                fmath::abs(eval.time_derivative(e, t)?.value),
                fmath::pow(scale, -2.0 * alpha - 4.0),
            ),
            BoundKind::Symbol(g) => (
                fmath::abs(eval.apply_symbol(Some(e), g, t)?.value),
                fmath::pow(scale, -2.0 * g - 4.0),
            ),
        };
        let ratio = num / decay;
        if ratio > report.max_ratio {
            report = BoundReport { max_ratio: ratio, argmax_e: e, argmax_t: t };
        }
    }
    Ok(report)
}
