//! Poisson arrivals and the law of the transformed characteristic `x̂ = x^(1/η)`.
//!
//! Every threshold equation is stated on the transformed variable, so the
//! laws below describe `x̂` directly; raw characteristics are recovered as
//! `x = x̂^η` when sampling.

use std::fmt;
use std::sync::Arc;

use rand::distributions::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{bisect, central_derivative, simpson};

/// Offsets below this fraction of the base point are handled by
/// linearisation in the shifted-difference helpers.
pub(crate) const LINEARISE_BELOW: f64 = 1e-6;

/// Probability law of the transformed characteristic.
///
/// Implementors supply the density, distribution function and quantile
/// function; the hazard quantities used by the solver are derived from them.
pub trait CharacteristicLaw: fmt::Debug + Send + Sync {
    /// Lower and upper end of the support (upper may be `+∞`).
    fn support(&self) -> (f64, f64);

    fn pdf(&self, x: f64) -> Result<f64>;

    fn cdf(&self, x: f64) -> f64;

    fn inverse_cdf(&self, p: f64) -> Result<f64>;

    /// `(1 − F(x)) / f(x)`.
    fn hazard_inverse(&self, x: f64) -> Result<f64> {
        let f = self.pdf(x)?;
        if f <= 0.0 {
            return Err(Error::ZeroDensity { x });
        }
        Ok((1.0 - self.cdf(x)) / f)
    }

    /// `(1 − F(x))² / f(x)`, the integrand of every threshold equation.
    fn squared_survival_over_pdf(&self, x: f64) -> Result<f64> {
        let f = self.pdf(x)?;
        if f <= 0.0 {
            return Err(Error::ZeroDensity { x });
        }
        let s = 1.0 - self.cdf(x);
        Ok(s * s / f)
    }

    /// Myerson virtual valuation `ψ(x) = x − (1 − F(x))/f(x)`.
    fn virtual_valuation(&self, x: f64) -> Result<f64> {
        Ok(x - self.hazard_inverse(x)?)
    }

    /// Root of the virtual valuation.
    fn reserve(&self) -> Result<f64> {
        reserve_by_bisection(self)
    }

    /// `h(base + e) − h(base)` with `h` the hazard inverse. Stays accurate
    /// when `e` is far below the resolution of `base`.
    fn hazard_inverse_shift(&self, base: f64, e: f64) -> Result<f64> {
        if e.abs() > LINEARISE_BELOW * base.abs().max(1.0) {
            return Ok(self.hazard_inverse(base + e)? - self.hazard_inverse(base)?);
        }
        Ok(central_derivative(|x| self.hazard_inverse(x), base)? * e)
    }

    /// `S(base + a) − S(base + b)` with `S = (1 − F)²/f`.
    fn survival_term_difference(&self, base: f64, a: f64, b: f64) -> Result<f64> {
        if a.abs().max(b.abs()) > LINEARISE_BELOW * base.abs().max(1.0) {
            return Ok(self.squared_survival_over_pdf(base + a)?
                - self.squared_survival_over_pdf(base + b)?);
        }
        Ok(central_derivative(|x| self.squared_survival_over_pdf(x), base)? * (a - b))
    }

    /// Mean of the law, used by mean-characteristic sweeps.
    fn mean(&self) -> f64;
}

/// Bisection for `ψ(x*) = 0` on `[support min, quantile 1 − 1e−9]`.
pub fn reserve_by_bisection<L: CharacteristicLaw + ?Sized>(law: &L) -> Result<f64> {
    let (lo, _) = law.support();
    let hi = law.inverse_cdf(1.0 - 1e-9)?;
    // the density may vanish exactly at the lower end
    let lo = if law.pdf(lo).map(|f| f > 0.0).unwrap_or(false) {
        lo
    } else {
        lo + 1e-12 * (hi - lo)
    };
    bisect(|x| law.virtual_valuation(x), lo, hi, 1e-13)
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::OutsideSupport {
            what: "probability",
            value: p,
            lower: 0.0,
            upper: 1.0,
        })
    }
}

/// Exponential law with rate `alpha` (mean `1/alpha`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    alpha: f64,
}

impl Exponential {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must be positive and finite",
            });
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl CharacteristicLaw for Exponential {
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn pdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::OutsideSupport {
                what: "x",
                value: x,
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        Ok(self.alpha * (-self.alpha * x).exp())
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.alpha * x).exp_m1()
        }
    }

    fn inverse_cdf(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(-(-p).ln_1p() / self.alpha)
    }

    fn hazard_inverse(&self, x: f64) -> Result<f64> {
        self.pdf(x)?;
        Ok(1.0 / self.alpha)
    }

    fn squared_survival_over_pdf(&self, x: f64) -> Result<f64> {
        self.pdf(x)?;
        Ok((-self.alpha * x).exp() / self.alpha)
    }

    fn reserve(&self) -> Result<f64> {
        Ok(1.0 / self.alpha)
    }

    fn hazard_inverse_shift(&self, base: f64, e: f64) -> Result<f64> {
        self.pdf(base + e)?;
        Ok(0.0)
    }

    fn survival_term_difference(&self, base: f64, a: f64, b: f64) -> Result<f64> {
        self.pdf(base + a)?;
        self.pdf(base + b)?;
        let scale = (-self.alpha * base).exp() / self.alpha;
        Ok(scale * ((-self.alpha * a).exp_m1() - (-self.alpha * b).exp_m1()))
    }

    fn mean(&self) -> f64 {
        1.0 / self.alpha
    }
}

/// Uniform law on `[0, beta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    beta: f64,
}

impl Uniform {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
                reason: "must be positive and finite",
            });
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn check(&self, x: f64) -> Result<()> {
        if (0.0..=self.beta).contains(&x) {
            Ok(())
        } else {
            Err(Error::OutsideSupport {
                what: "x",
                value: x,
                lower: 0.0,
                upper: self.beta,
            })
        }
    }
}

impl CharacteristicLaw for Uniform {
    fn support(&self) -> (f64, f64) {
        (0.0, self.beta)
    }

    fn pdf(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(1.0 / self.beta)
    }

    fn cdf(&self, x: f64) -> f64 {
        (x / self.beta).clamp(0.0, 1.0)
    }

    fn inverse_cdf(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(p * self.beta)
    }

    fn hazard_inverse(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.beta - x)
    }

    fn squared_survival_over_pdf(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        let gap = self.beta - x;
        Ok(gap * gap / self.beta)
    }

    fn reserve(&self) -> Result<f64> {
        Ok(0.5 * self.beta)
    }

    fn hazard_inverse_shift(&self, base: f64, e: f64) -> Result<f64> {
        self.check(base + e)?;
        Ok(-e)
    }

    fn survival_term_difference(&self, base: f64, a: f64, b: f64) -> Result<f64> {
        self.check(base + a)?;
        self.check(base + b)?;
        // (β−base−a)² − (β−base−b)² factored to avoid cancellation
        let gap = self.beta - base;
        Ok((b - a) * (2.0 * gap - a - b) / self.beta)
    }

    fn mean(&self) -> f64 {
        0.5 * self.beta
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A law given by user callables for density, distribution and quantile.
#[derive(Clone)]
pub struct CustomLaw {
    support: (f64, f64),
    pdf: ScalarFn,
    cdf: ScalarFn,
    inverse_cdf: ScalarFn,
    mean: f64,
}

impl CustomLaw {
    pub fn new(
        support: (f64, f64),
        mean: f64,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse_cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            support,
            pdf: Arc::new(pdf),
            cdf: Arc::new(cdf),
            inverse_cdf: Arc::new(inverse_cdf),
            mean,
        }
    }
}

impl fmt::Debug for CustomLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLaw")
            .field("support", &self.support)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

impl CharacteristicLaw for CustomLaw {
    fn support(&self) -> (f64, f64) {
        self.support
    }

    fn pdf(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.support;
        if !(lo..=hi).contains(&x) {
            return Err(Error::OutsideSupport {
                what: "x",
                value: x,
                lower: lo,
                upper: hi,
            });
        }
        Ok((self.pdf)(x))
    }

    fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support;
        if x <= lo {
            0.0
        } else if x >= hi {
            1.0
        } else {
            (self.cdf)(x)
        }
    }

    fn inverse_cdf(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok((self.inverse_cdf)(p))
    }

    fn mean(&self) -> f64 {
        self.mean
    }
}

/// One request: arrival time (hours) and raw characteristic `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub id: u64,
    pub time: f64,
    pub x: f64,
}

/// Poisson arrival intensity, characteristic law and QoE exponent.
#[derive(Debug, Clone)]
pub struct ArrivalModel {
    lambda: f64,
    law: Arc<dyn CharacteristicLaw>,
    eta: f64,
}

impl ArrivalModel {
    pub fn new(lambda: f64, law: Arc<dyn CharacteristicLaw>, eta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lambda,
                reason: "must be positive and finite",
            });
        }
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: eta,
                reason: "must be at least 1",
            });
        }
        Ok(Self { lambda, law, eta })
    }

    pub fn exponential(lambda: f64, alpha: f64, eta: f64) -> Result<Self> {
        Self::new(lambda, Arc::new(Exponential::new(alpha)?), eta)
    }

    pub fn uniform(lambda: f64, beta: f64, eta: f64) -> Result<Self> {
        Self::new(lambda, Arc::new(Uniform::new(beta)?), eta)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn law(&self) -> &dyn CharacteristicLaw {
        self.law.as_ref()
    }

    /// Same law and exponent with a different arrival rate.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, Arc::clone(&self.law), self.eta)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.law.pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.law.cdf(x)
    }

    pub fn inverse_cdf(&self, p: f64) -> Result<f64> {
        self.law.inverse_cdf(p)
    }

    pub fn hazard_inverse(&self, x: f64) -> Result<f64> {
        self.law.hazard_inverse(x)
    }

    pub fn squared_survival_over_pdf(&self, x: f64) -> Result<f64> {
        self.law.squared_survival_over_pdf(x)
    }

    pub fn virtual_valuation(&self, x: f64) -> Result<f64> {
        self.law.virtual_valuation(x)
    }

    /// Terminal reserve `x*` on the transformed scale.
    pub fn reserve(&self) -> Result<f64> {
        self.law.reserve()
    }

    /// Homogeneous Poisson arrivals on `[0, horizon]` with raw
    /// characteristics `x = x̂^η`.
    ///
    /// Each arrival consumes two draws from `rng` (gap, then quantile), so
    /// streams with the same seed stay coupled across arrival rates.
    pub fn sample_arrivals<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Vec<Arrival> {
        let mut out = Vec::with_capacity((self.lambda * horizon * 1.2) as usize + 4);
        if horizon <= 0.0 {
            return out;
        }
        let mut t = 0.0;
        loop {
            let u: f64 = rng.sample(Open01);
            t += -u.ln() / self.lambda;
            let p: f64 = rng.sample(Open01);
            if t > horizon {
                break;
            }
            let x_hat = self
                .law
                .inverse_cdf(p)
                .expect("Open01 draws are valid probabilities");
            out.push(Arrival {
                id: out.len() as u64,
                time: t,
                x: x_hat.powf(self.eta),
            });
        }
        out
    }

    /// Density of the first arrival after `t` whose characteristic clears
    /// the raw threshold curve `y`, evaluated at `s`.
    pub fn first_qualifying_density<Y>(&self, y: Y, t: f64, s: f64) -> f64
    where
        Y: Fn(f64) -> f64,
    {
        if s < t {
            return 0.0;
        }
        let qualify = |u: f64| {
            let threshold = y(u);
            if threshold.is_infinite() && threshold > 0.0 {
                0.0
            } else {
                1.0 - self.law.cdf(threshold.max(0.0).powf(1.0 / self.eta))
            }
        };
        let intensity = self.lambda * qualify(s);
        if intensity == 0.0 {
            return 0.0;
        }
        let cumulative = if s > t {
            self.lambda * simpson(qualify, t, s, 512)
        } else {
            0.0
        };
        intensity * (-cumulative).exp()
    }
}
