//! Parametric time-to-event distributions.
//!
//! The families are the generalized gamma (Prentice parameterisation, which
//! nests log-normal, Weibull and gamma as special cases) plus those three
//! special cases as directly-parameterised families, and a mixture-cure
//! wrapper that adds a point mass `p` on "the event never occurs":
//! `Pr(T <= t) = (1 - p) F(t)`.
//!
//! Covariates enter any parameter through a linear model on its transformed
//! scale: identity for unrestricted parameters, log for positive parameters,
//! logit for probabilities.

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_gamma, normal_cdf, normal_logpdf, normal_quantile, normal_sf, reg_gamma};

/// Below this |Q| the generalized gamma is evaluated on its log-normal branch;
/// the Prentice form is singular at Q = 0 and the shape terms lose all
/// precision once 1/Q^2 overwhelms f64.
pub const GENGAMMA_Q_EPS: f64 = 1e-5;

/// Relative tolerance of the numeric quantile inversion.
const QUANTILE_REL_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Families and parameter metadata
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    GenGamma,
    Gamma,
    Weibull,
    LogNormal,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::GenGamma => "gengamma",
            Family::Gamma => "gamma",
            Family::Weibull => "weibull",
            Family::LogNormal => "lognormal",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s {
            "gengamma" => Ok(Family::GenGamma),
            "gamma" => Ok(Family::Gamma),
            "weibull" => Ok(Family::Weibull),
            "lognormal" => Ok(Family::LogNormal),
            other => Err(Error::Config(format!(
                "unknown family `{other}` (expected gengamma|gamma|weibull|lognormal)"
            ))),
        }
    }

    /// Parameter names in canonical order.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Family::GenGamma => &["mu", "sigma", "Q"],
            Family::Gamma => &["shape", "rate"],
            Family::Weibull => &["shape", "scale"],
            Family::LogNormal => &["meanlog", "sdlog"],
        }
    }

    /// Transform under which each parameter is unrestricted.
    pub fn transforms(&self) -> &'static [Transform] {
        match self {
            Family::GenGamma => &[Transform::Identity, Transform::Log, Transform::Identity],
            Family::Gamma => &[Transform::Log, Transform::Log],
            Family::Weibull => &[Transform::Log, Transform::Log],
            Family::LogNormal => &[Transform::Identity, Transform::Log],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Reasonable transformed-scale starting values when nothing better is
    /// known (log times centred at 0, unit spread, mild shape).
    pub fn default_transformed(&self) -> Vec<f64> {
        match self {
            Family::GenGamma => vec![1.0, 0.0, 0.5],
            Family::Gamma => vec![0.0, 0.0],
            Family::Weibull => vec![0.0, 1.0],
            Family::LogNormal => vec![1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
    Logit,
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
            Transform::Logit => "logit",
        }
    }

    /// Transformed scale -> natural scale.
    pub fn to_natural(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
            Transform::Logit => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Natural scale -> transformed scale.
    pub fn to_transformed(&self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Logit => (v / (1.0 - v)).ln(),
        }
    }
}

// ---------------------------------------------------------------------------
// Resolved distributions
// ---------------------------------------------------------------------------

/// Generalized gamma parameters (Prentice form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenGammaParams {
    /// Location on the log-time scale.
    pub mu: f64,
    /// Scale, positive.
    pub sigma: f64,
    /// Shape; Q = 0 is the log-normal, Q = 1 the Weibull, Q = sigma the gamma.
    pub q: f64,
}

impl GenGammaParams {
    pub fn new(mu: f64, sigma: f64, q: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || !q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gengamma parameters must be finite (mu={mu}, sigma={sigma}, Q={q})"
            )));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gengamma sigma must be > 0, got {sigma}")));
        }
        Ok(GenGammaParams { mu, sigma, q })
    }
}

/// A fully resolved base distribution (no covariates left).
#[derive(Debug, Clone, PartialEq)]
pub enum BaseDist {
    GenGamma(GenGammaParams),
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

/// A resolved distribution, optionally cure-wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    pub base: BaseDist,
    /// Cure probability: mass on the event never occurring.
    pub cure: Option<f64>,
}

/// Result of a quantile lookup: cure distributions have no finite quantile
/// beyond probability `1 - p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantile {
    Finite(f64),
    Never,
}

/// One random draw: cure distributions return `Never` with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Draw {
    Event(f64),
    Never,
}

impl Draw {
    pub fn time(&self) -> Option<f64> {
        match self {
            Draw::Event(t) => Some(*t),
            Draw::Never => None,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

impl BaseDist {
    pub fn from_params(family: Family, params: &[f64]) -> Result<BaseDist> {
        if params.len() != family.n_params() {
            return Err(Error::InvalidParameter(format!(
                "family {} expects {} parameters, got {}",
                family.name(),
                family.n_params(),
                params.len()
            )));
        }
        for (&v, &name) in params.iter().zip(family.param_names()) {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{} parameter {name} must be finite, got {v}",
                    family.name()
                )));
            }
        }
        let positive = |v: f64, name: &str| -> Result<f64> {
            if v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{} parameter {name} must be > 0, got {v}",
                    family.name()
                )));
            }
            Ok(v)
        };
        Ok(match family {
            Family::GenGamma => BaseDist::GenGamma(GenGammaParams::new(params[0], params[1], params[2])?),
            Family::Gamma => BaseDist::Gamma {
                shape: positive(params[0], "shape")?,
                rate: positive(params[1], "rate")?,
            },
            Family::Weibull => BaseDist::Weibull {
                shape: positive(params[0], "shape")?,
                scale: positive(params[1], "scale")?,
            },
            Family::LogNormal => BaseDist::LogNormal {
                mu: params[0],
                sigma: positive(params[1], "sdlog")?,
            },
        })
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match *self {
            BaseDist::GenGamma(p) => gengamma_cdf_sf(t, p)?.0,
            BaseDist::Gamma { shape, rate } => reg_gamma(shape, rate * t)?.0,
            BaseDist::Weibull { shape, scale } => -(-(t / scale).powf(shape)).exp_m1(),
            BaseDist::LogNormal { mu, sigma } => normal_cdf((t.ln() - mu) / sigma),
        })
    }

    /// Survival `1 - F`, computed on its own route so the upper tail keeps
    /// relative accuracy (censored log-likelihood terms depend on it).
    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match *self {
            BaseDist::GenGamma(p) => gengamma_cdf_sf(t, p)?.1,
            BaseDist::Gamma { shape, rate } => reg_gamma(shape, rate * t)?.1,
            BaseDist::Weibull { shape, scale } => (-(t / scale).powf(shape)).exp(),
            BaseDist::LogNormal { mu, sigma } => normal_sf((t.ln() - mu) / sigma),
        })
    }

    pub fn logpdf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match *self {
            BaseDist::GenGamma(p) => gengamma_logpdf(t, p),
            BaseDist::Gamma { shape, rate } => {
                shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)
            }
            BaseDist::Weibull { shape, scale } => {
                let z = t / scale;
                shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
            }
            BaseDist::LogNormal { mu, sigma } => {
                let w = (t.ln() - mu) / sigma;
                normal_logpdf(w) - sigma.ln() - t.ln()
            }
        })
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        Ok(self.logpdf(t)?.exp())
    }

    /// Quantile by closed form where one exists, otherwise bracketing from a
    /// median-scale guess plus a bisection/Newton hybrid.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile requires u in (0,1), got {u}")));
        }
        match *self {
            BaseDist::LogNormal { mu, sigma } => Ok((mu + sigma * normal_quantile(u)?).exp()),
            BaseDist::Weibull { shape, scale } => {
                Ok(scale * (-(-u).ln_1p()).powf(1.0 / shape))
            }
            BaseDist::Gamma { shape, rate } => {
                let guess = shape / rate; // mean
                invert_cdf(|t| self.cdf(t), |t| self.pdf(t), u, guess)
            }
            BaseDist::GenGamma(p) => {
                let guess = p.mu.exp(); // median of the log-normal branch
                invert_cdf(|t| self.cdf(t), |t| self.pdf(t), u, guess)
            }
        }
    }

    /// Draw one event time.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            BaseDist::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                (mu + sigma * z).exp()
            }
            BaseDist::Weibull { shape, scale } => {
                let u: f64 = rng.gen::<f64>();
                scale * (-(-u).ln_1p()).powf(1.0 / shape)
            }
            BaseDist::Gamma { shape, rate } => {
                let g = rand_distr::Gamma::new(shape, 1.0 / rate)
                    .expect("validated gamma parameters");
                g.sample(rng)
            }
            BaseDist::GenGamma(p) => {
                if p.q.abs() < GENGAMMA_Q_EPS {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (p.mu + p.sigma * z).exp()
                } else {
                    // If G ~ Gamma(1/Q^2, 1) then exp(mu + sigma log(Q^2 G)/Q)
                    // has the generalized gamma law for either sign of Q.
                    let a = 1.0 / (p.q * p.q);
                    let g = rand_distr::Gamma::new(a, 1.0).expect("positive shape");
                    let gv: f64 = g.sample(rng);
                    (p.mu + p.sigma * (p.q * p.q * gv).ln() / p.q).exp()
                }
            }
        }
    }

    /// Mean; `+inf` for the heavy-tailed generalized gamma region where the
    /// first moment diverges.
    pub fn mean(&self) -> f64 {
        match *self {
            BaseDist::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            BaseDist::Weibull { shape, scale } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
            BaseDist::Gamma { shape, rate } => shape / rate,
            BaseDist::GenGamma(p) => {
                if p.q.abs() < GENGAMMA_Q_EPS {
                    (p.mu + 0.5 * p.sigma * p.sigma).exp()
                } else {
                    let a = 1.0 / (p.q * p.q);
                    let c = p.sigma / p.q;
                    if a + c <= 0.0 {
                        f64::INFINITY
                    } else {
                        (p.mu + 2.0 * c * p.q.abs().ln() + ln_gamma(a + c) - ln_gamma(a)).exp()
                    }
                }
            }
        }
    }
}

impl Dist {
    pub fn base(base: BaseDist) -> Dist {
        Dist { base, cure: None }
    }

    pub fn with_cure(base: BaseDist, p: f64) -> Result<Dist> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("cure probability must be in [0,1], got {p}")));
        }
        Ok(Dist { base, cure: Some(p) })
    }

    /// `Pr(T <= t)`; for cure distributions `(1 - p) F(t)`.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        let f = self.base.cdf(t)?;
        Ok(match self.cure {
            Some(p) => (1.0 - p) * f,
            None => f,
        })
    }

    /// `Pr(T > t)`, which tends to `p` rather than 0 for cure distributions.
    pub fn survival(&self, t: f64) -> Result<f64> {
        let s = self.base.survival(t)?;
        Ok(match self.cure {
            Some(p) => p + (1.0 - p) * s,
            None => s,
        })
    }

    pub fn log_survival(&self, t: f64) -> Result<f64> {
        Ok(self.survival(t)?.ln())
    }

    /// Log density of the continuous part; `-inf` when the cure mass is 1.
    pub fn logpdf(&self, t: f64) -> Result<f64> {
        let lp = self.base.logpdf(t)?;
        Ok(match self.cure {
            Some(p) => (1.0 - p).ln() + lp,
            None => lp,
        })
    }

    /// Hazard of the (possibly improper) distribution; this is the transition
    /// intensity used in the Kolmogorov forward equation.
    pub fn hazard(&self, t: f64) -> Result<f64> {
        let s = self.survival(t)?;
        if s <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((self.logpdf(t)? - s.ln()).exp())
    }

    pub fn quantile(&self, u: f64) -> Result<Quantile> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile requires u in (0,1), got {u}")));
        }
        match self.cure {
            Some(p) => {
                if u >= 1.0 - p {
                    Ok(Quantile::Never)
                } else {
                    Ok(Quantile::Finite(self.base.quantile(u / (1.0 - p))?))
                }
            }
            None => Ok(Quantile::Finite(self.base.quantile(u)?)),
        }
    }

    /// Bernoulli(p) first, then the base draw; matches the mixture definition.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        if let Some(p) = self.cure {
            if rng.gen::<f64>() < p {
                return Draw::Never;
            }
        }
        Draw::Event(self.base.sample(rng))
    }

    pub fn mean(&self) -> f64 {
        match self.cure {
            Some(p) if p > 0.0 => f64::INFINITY,
            _ => self.base.mean(),
        }
    }
}

// ---------------------------------------------------------------------------
// Generalized gamma internals
// ---------------------------------------------------------------------------

/// `(F, S)` of the Prentice generalized gamma.
///
/// Three branches: for Q > 0, `F = P(a, a e^{Qw})` with `a = 1/Q^2` and
/// `w = (ln t - mu)/sigma`; for Q < 0 the tail flips; |Q| below the switch is
/// the log-normal limit.
fn gengamma_cdf_sf(t: f64, p: GenGammaParams) -> Result<(f64, f64)> {
    let w = (t.ln() - p.mu) / p.sigma;
    if p.q.abs() < GENGAMMA_Q_EPS {
        return Ok((normal_cdf(w), normal_sf(w)));
    }
    let a = 1.0 / (p.q * p.q);
    let x = a * (p.q * w).exp();
    let (lo, hi) = reg_gamma(a, x)?;
    if p.q > 0.0 {
        Ok((lo, hi))
    } else {
        Ok((hi, lo))
    }
}

/// `a ln a - a - ln Γ(a)`, which collapses to `-ln sqrt(2 pi a)` + small
/// corrections for large `a`; computed via Stirling there to dodge the
/// cancellation between the two big terms.
fn ln_gamma_corr(a: f64) -> f64 {
    if a <= 1.0e5 {
        a * a.ln() - a - ln_gamma(a)
    } else {
        let inv = 1.0 / a;
        -0.5 * (2.0 * std::f64::consts::PI * a).ln() - inv / 12.0 + inv * inv * inv / 360.0
    }
}

fn gengamma_logpdf(t: f64, p: GenGammaParams) -> f64 {
    let w = (t.ln() - p.mu) / p.sigma;
    if p.q.abs() < GENGAMMA_Q_EPS {
        return normal_logpdf(w) - p.sigma.ln() - t.ln();
    }
    let a = 1.0 / (p.q * p.q);
    let qw = p.q * w;
    // a(Qw - e^{Qw}) = -a - a(expm1(Qw) - Qw); the second term stays accurate
    // as Q -> 0 where it tends to w^2/2.
    let tail = a * (qw.exp_m1() - qw);
    p.q.abs().ln() + ln_gamma_corr(a) - tail - p.sigma.ln() - t.ln()
}

// ---------------------------------------------------------------------------
// Numeric quantile inversion
// ---------------------------------------------------------------------------

/// Invert a CDF: bracket by doubling/halving from `guess`, then a safeguarded
/// Newton iteration that falls back to bisection whenever the Newton step
/// leaves the bracket.
fn invert_cdf<F, G>(cdf: F, pdf: G, u: f64, guess: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> Result<f64>,
{
    let mut lo = guess.max(1e-300);
    let mut hi = lo;
    if cdf(lo)? >= u {
        for _ in 0..2048 {
            lo *= 0.5;
            if cdf(lo)? < u {
                break;
            }
        }
        if cdf(lo)? >= u {
            return Err(Error::Numerical("quantile bracketing failed at lower end".into()));
        }
    } else {
        for _ in 0..2048 {
            hi *= 2.0;
            if cdf(hi)? >= u {
                break;
            }
        }
        if cdf(hi)? < u {
            return Err(Error::Numerical("quantile bracketing failed at upper end".into()));
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(x)? - u;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x)?;
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= QUANTILE_REL_TOL * x.abs() || (hi - lo) <= QUANTILE_REL_TOL * x.abs() {
            return Ok(x);
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Covariate links
// ---------------------------------------------------------------------------

/// Linear model for one distribution parameter on its transformed scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLink {
    pub name: String,
    pub transform: Transform,
    /// Baseline (intercept) on the transformed scale.
    pub baseline: f64,
    /// (design column index, coefficient) pairs.
    pub coefs: Vec<(usize, f64)>,
}

impl ParamLink {
    pub fn constant(name: &str, transform: Transform, baseline: f64) -> ParamLink {
        ParamLink { name: name.to_string(), transform, baseline, coefs: Vec::new() }
    }

    /// Natural-scale value under covariate row `cov`.
    pub fn value(&self, cov: &[f64]) -> f64 {
        let mut eta = self.baseline;
        for &(col, beta) in &self.coefs {
            eta += beta * cov[col];
        }
        self.transform.to_natural(eta)
    }

    pub fn n_coefs(&self) -> usize {
        1 + self.coefs.len()
    }
}

/// A distribution family with covariate links on its parameters: the unit the
/// optimiser fits and the unit that resolves to a concrete [`Dist`] per
/// covariate profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedDist {
    pub family: Family,
    /// Base-family parameter links in canonical order, then the cure link.
    pub links: Vec<ParamLink>,
    pub cure: bool,
}

impl LinkedDist {
    /// A constant (covariate-free) model with the family's default start.
    pub fn constant(family: Family, cure: bool) -> LinkedDist {
        let mut links: Vec<ParamLink> = family
            .param_names()
            .iter()
            .zip(family.transforms())
            .zip(family.default_transformed())
            .map(|((name, tr), x0)| ParamLink::constant(name, *tr, x0))
            .collect();
        if cure {
            links.push(ParamLink::constant("p", Transform::Logit, 0.0));
        }
        LinkedDist { family, links, cure }
    }

    /// Resolve to a concrete distribution for one covariate row.
    pub fn resolve(&self, cov: &[f64]) -> Result<Dist> {
        let n_base = self.family.n_params();
        let values: Vec<f64> = self.links.iter().map(|l| l.value(cov)).collect();
        let base = BaseDist::from_params(self.family, &values[..n_base])?;
        if self.cure {
            Dist::with_cure(base, values[n_base])
        } else {
            Ok(Dist::base(base))
        }
    }

    /// Total number of free coefficients (baselines + covariate effects).
    pub fn n_coefs(&self) -> usize {
        self.links.iter().map(ParamLink::n_coefs).sum()
    }

    /// Flatten all coefficients (transformed scale) for the optimiser.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_coefs());
        for l in &self.links {
            v.push(l.baseline);
            v.extend(l.coefs.iter().map(|&(_, b)| b));
        }
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.n_coefs());
        let mut i = 0;
        for l in &mut self.links {
            l.baseline = v[i];
            i += 1;
            for c in &mut l.coefs {
                c.1 = v[i];
                i += 1;
            }
        }
    }

    /// Names of the flattened coefficients, e.g. `mu`, `mu:age_group=65-74`.
    pub fn coef_names(&self, columns: &[String]) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_coefs());
        for l in &self.links {
            names.push(l.name.clone());
            for &(col, _) in &l.coefs {
                names.push(format!("{}:{}", l.name, columns[col]));
            }
        }
        names
    }

    /// Transform of each flattened coefficient's parameter (used for
    /// reporting; covariate effects are additive on the transformed scale).
    pub fn coef_transforms(&self) -> Vec<Transform> {
        let mut t = Vec::with_capacity(self.n_coefs());
        for l in &self.links {
            for _ in 0..l.n_coefs() {
                t.push(l.transform);
            }
        }
        t
    }
}
