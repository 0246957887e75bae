//! Ordinary Boltzmann sampling through an exponential generator.
//!
//! To draw from the ordinary law `P(ω) = x^n / A(x)`:
//!
//! 1. draw `u >= 0` with density `d(u) = e^{-u} Â(xu) / A(x)`;
//! 2. return one exponential draw at parameter `xu`.
//!
//! Conditioned on `u`, the exponential draw has size `n` with probability
//! `(xu)^n a_n / (n! Â(xu))`; integrating against `d(u)` gives
//! `a_n x^n / (n! A(x)) ∫ e^{-u} u^n du = a_n x^n / A(x)`. The conditional
//! law among objects of one size is untouched.
//!
//! Two ways to draw `u` are provided. [`Strategy::Mixture`] uses the
//! termwise form `d(u) = Σ π_n e^{-u} u^n / n!` with `π_n = a_n x^n / A(x)`:
//! pick `n` with probability `π_n`, then `u ~ Gamma(n + 1)`.
//! [`Strategy::InverseCdf`] tabulates the cumulative of `d` on a grid and
//! inverts it by linear interpolation; it needs only the `Â` evaluator.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exp_sampler::ExponentialGenerator;
use crate::oracle::{self, EvalResult, GrowthEstimate, SeriesCoeffs, Verdict, DEFAULT_ORDER};
use crate::quad;
use crate::rng::RandomSource;
use crate::series;

/// Largest coefficient order the mixture table may require.
pub const N_MAX: usize = 4096;

/// Size-law mass allowed outside the tables.
pub const TAIL_TARGET: f64 = 1e-9;

/// Grid step of the inverse-CDF table.
pub const CDF_STEP: f64 = 1.0 / 64.0;

/// Largest `u` the inverse-CDF table will tabulate.
const CDF_LIMIT: f64 = 20_000.0;

/// Draws retried when `xu` falls outside the evaluator's range.
const DIVERGENT_RETRIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mixture,
    #[serde(rename = "invcdf")]
    InverseCdf,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(Strategy::Mixture),
            "invcdf" | "inverse-cdf" => Ok(Strategy::InverseCdf),
            other => Err(Error::Domain(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Size-law table `π_n = a_n x^n / A(x)`, `n < len`.
#[derive(Clone, Debug)]
pub struct MixtureTable {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    tail: f64,
}

impl MixtureTable {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of table entries (sizes `0..len`).
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Bound on the mass of sizes beyond the table.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// Size index by inversion. Mass beyond the table (below 1e-9) is
    /// conditioned away.
    fn draw_index(&self, rng: &mut RandomSource) -> usize {
        let total = *self.cumulative.last().expect("nonempty table");
        let v = rng.unit() * total;
        self.cumulative.partition_point(|&c| c <= v).min(self.weights.len() - 1)
    }
}

/// Tabulated cumulative of `d(u)` on `[0, cutoff]`.
#[derive(Clone, Debug)]
pub struct CdfTable {
    step: f64,
    cdf: Vec<f64>,
}

impl CdfTable {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cutoff(&self) -> f64 {
        self.step * (self.cdf.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.cdf
    }

    fn draw(&self, rng: &mut RandomSource) -> f64 {
        let total = *self.cdf.last().expect("nonempty table");
        let v = rng.unit() * total;
        let i = self.cdf.partition_point(|&c| c <= v).clamp(1, self.cdf.len() - 1);
        let (lo, hi) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        self.step * ((i - 1) as f64 + frac.clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug)]
pub enum UDrawStrategy {
    Mixture(MixtureTable),
    InverseCdf(CdfTable),
}

/// One draw of the randomized parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UDraw {
    pub u: f64,
    /// Gamma shape minus one, for the mixture path.
    pub component: Option<usize>,
}

/// Output of the ordinary sampler.
#[derive(Clone, Debug)]
pub struct OrdinarySample<O> {
    pub object: O,
    pub u: f64,
    pub x_effective: f64,
}

/// Ordinary Boltzmann sampler built on an exponential generator.
pub struct OrdinarySampler<G: ExponentialGenerator> {
    x: f64,
    generator: Arc<G>,
    coeffs: SeriesCoeffs,
    growth: GrowthEstimate,
    ogf: EvalResult,
    laplace: EvalResult,
    strategy: Arc<UDrawStrategy>,
    rng: RandomSource,
    retries: usize,
}

fn check_tail(growth: &GrowthEstimate, x: f64, coeffs: &SeriesCoeffs) -> Result<()> {
    match growth.verdict {
        Verdict::AtMostExponential(_) => Ok(()),
        Verdict::Superexponential => Err(Error::DivergentOgf {
            x,
            detail: format!(
                "coefficients of {} grow superexponentially (orders {}..{})",
                coeffs.class,
                coeffs.order() / 2,
                coeffs.order()
            ),
        }),
        Verdict::Inconclusive => Err(Error::InconclusiveGrowth(format!(
            "ratio test over orders {}..{} of {} did not settle",
            coeffs.order() / 2,
            coeffs.order(),
            coeffs.class
        ))),
    }
}

/// Coefficients long enough that the size-law tail at `x` is below
/// `TAIL_TARGET / 10`, with the OGF value from them.
fn coefficients_for<G: ExponentialGenerator>(
    generator: &G,
    x: f64,
) -> Result<(SeriesCoeffs, GrowthEstimate, EvalResult)> {
    let mut order = DEFAULT_ORDER;
    loop {
        let coeffs = generator.coefficients(order)?;
        let growth = oracle::growth_estimate(&coeffs);
        check_tail(&growth, x, &coeffs)?;
        let ogf = oracle::ogf_eval_series(&coeffs, &growth, x)?;
        if ogf.value <= 0.0 {
            return Err(Error::EmptyClass);
        }
        let target = TAIL_TARGET * 0.1 * ogf.value;
        if growth.tail_bound(x) < target {
            return Ok((coeffs, growth, ogf));
        }
        let needed = growth.order_for_tail(x, target).unwrap_or(usize::MAX);
        if needed > N_MAX || order >= N_MAX {
            return Err(Error::TailTooHeavy { n_max: N_MAX });
        }
        order = (needed + needed / 8 + 1).clamp(order + 1, N_MAX);
    }
}

fn build_mixture(coeffs: &SeriesCoeffs, growth: &GrowthEstimate, ogf: &EvalResult, x: f64) -> Result<MixtureTable> {
    let terms: Vec<f64> = coeffs
        .counts()
        .iter()
        .enumerate()
        .map(|(n, a)| series::scaled(a, x, n))
        .collect();
    let beyond = growth.tail_bound(x);
    // suffix[n] = Σ_{m >= n} terms[m]
    let mut suffix = vec![0.0; terms.len() + 1];
    for n in (0..terms.len()).rev() {
        suffix[n] = suffix[n + 1] + terms[n];
    }
    let mut weights = Vec::new();
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    for (n, t) in terms.iter().enumerate() {
        let w = t / ogf.value;
        acc += w;
        weights.push(w);
        cumulative.push(acc);
        let tail = (suffix[n + 1] + beyond) / ogf.value;
        if tail < TAIL_TARGET {
            let slack = ogf.error / ogf.value + 1e-12;
            if acc > 1.0 + slack || acc + tail < 1.0 - slack {
                return Err(Error::InconsistentOracle(format!(
                    "size law sums to {} plus tail {tail:e}",
                    acc
                )));
            }
            return Ok(MixtureTable {
                weights,
                cumulative,
                tail,
            });
        }
    }
    Err(Error::TailTooHeavy { n_max: coeffs.order() })
}

fn build_cdf(density: &mut impl FnMut(f64) -> Result<f64>) -> Result<CdfTable> {
    let step = CDF_STEP;
    let mut cdf = vec![0.0];
    let mut acc = 0.0;
    let mut u = 0.0;
    while u < CDF_LIMIT {
        acc += quad::gl_panel(density, u, u + step)?;
        u += step;
        cdf.push(acc);
        if acc >= 1.0 - TAIL_TARGET {
            if acc > 1.0 + 1e-8 {
                return Err(Error::InconsistentOracle(format!(
                    "density integrates to {acc} on [0, {u}]"
                )));
            }
            return Ok(CdfTable { step, cdf });
        }
    }
    Err(Error::InconsistentOracle(format!(
        "cumulative of the density reached only {acc} by u = {CDF_LIMIT}"
    )))
}

/// Builds an ordinary sampler at parameter `x`.
///
/// Fails with `DivergentOgf` or `InconclusiveGrowth` when `A(x)` cannot be
/// certified finite, and with `InconsistentOracle` when the series and
/// Laplace–Borel values of `A(x)` disagree beyond their error bounds.
pub fn build_ordinary<G: ExponentialGenerator>(
    generator: G,
    x: f64,
    strategy: Strategy,
    rng: RandomSource,
) -> Result<OrdinarySampler<G>> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be a finite nonnegative real, got {x}")));
    }
    let (coeffs, growth, ogf) = coefficients_for(&generator, x)?;
    let tol = 1e-10 * ogf.value.max(1.0);
    let laplace = oracle::ogf_eval_laplace(|y| generator.egf(y), x, tol)?;
    if !ogf.agrees_with(&laplace) {
        return Err(Error::InconsistentOracle(format!(
            "A({x}) = {} ± {:e} by series but {} ± {:e} by the Laplace integral",
            ogf.value, ogf.error, laplace.value, laplace.error
        )));
    }
    let table = match strategy {
        Strategy::Mixture => UDrawStrategy::Mixture(build_mixture(&coeffs, &growth, &ogf, x)?),
        Strategy::InverseCdf => {
            let a = ogf.value;
            let mut density = |u: f64| Ok((-u).exp() * generator.egf(x * u)? / a);
            UDrawStrategy::InverseCdf(build_cdf(&mut density)?)
        }
    };
    Ok(OrdinarySampler {
        x,
        generator: Arc::new(generator),
        coeffs,
        growth,
        ogf,
        laplace,
        strategy: Arc::new(table),
        rng,
        retries: 0,
    })
}

impl<G: ExponentialGenerator> OrdinarySampler<G> {
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn generator(&self) -> &G {
        &self.generator
    }

    /// `A(x)` from the coefficient series.
    pub fn ogf(&self) -> EvalResult {
        self.ogf
    }

    /// `A(x)` from the Laplace–Borel integral.
    pub fn ogf_laplace(&self) -> EvalResult {
        self.laplace
    }

    pub fn coefficients(&self) -> &SeriesCoeffs {
        &self.coeffs
    }

    pub fn growth(&self) -> &GrowthEstimate {
        &self.growth
    }

    pub fn strategy(&self) -> &Arc<UDrawStrategy> {
        &self.strategy
    }

    /// Draws lost to `xu` landing outside the evaluator's range.
    pub fn divergent_retries(&self) -> usize {
        self.retries
    }

    /// A sampler sharing this one's tables with its own random source.
    pub fn fork(&self, rng: RandomSource) -> Self {
        OrdinarySampler {
            x: self.x,
            generator: Arc::clone(&self.generator),
            coeffs: self.coeffs.clone(),
            growth: self.growth,
            ogf: self.ogf,
            laplace: self.laplace,
            strategy: Arc::clone(&self.strategy),
            rng,
            retries: 0,
        }
    }

    /// Exact ordinary size law `a_n x^n / A(x)` for `n <= max`.
    pub fn size_law(&self, max: usize) -> Result<Vec<f64>> {
        let coeffs = if max <= self.coeffs.order() {
            self.coeffs.clone()
        } else {
            self.generator.coefficients(max)?
        };
        Ok((0..=max)
            .map(|n| series::scaled(&coeffs.counts()[n], self.x, n) / self.ogf.value)
            .collect())
    }

    /// `d(u) = e^{-u} Â(xu) / A(x)`.
    pub fn density_eval(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("density argument {u} is negative")));
        }
        Ok((-u).exp() * self.generator.egf(self.x * u)? / self.ogf.value)
    }

    /// `∫₀^U d(u) du` by composite Gauss–Legendre on unit panels, with `U`
    /// doubled until the last doubling adds less than `1e-12`. Returns the
    /// quadrature and `U`.
    pub fn density_mass(&self) -> Result<(quad::Quadrature, f64)> {
        let mut cutoff = 16.0;
        let mut prev: Option<quad::Quadrature> = None;
        while cutoff <= CDF_LIMIT {
            let q = quad::integrate(|u| self.density_eval(u), 0.0, cutoff, cutoff as usize, 1e-13, 4)?;
            if let Some(p) = prev {
                if (q.value - p.value).abs() < 1e-12 {
                    return Ok((q, cutoff));
                }
            }
            prev = Some(q);
            cutoff *= 2.0;
        }
        Err(Error::InconsistentOracle(format!(
            "density mass still growing at u = {CDF_LIMIT}"
        )))
    }

    pub fn draw_u_detailed(&mut self) -> Result<UDraw> {
        match &*self.strategy {
            UDrawStrategy::Mixture(table) => {
                let n = table.draw_index(&mut self.rng);
                let u = self.rng.gamma(n as f64 + 1.0)?;
                Ok(UDraw { u, component: Some(n) })
            }
            UDrawStrategy::InverseCdf(table) => Ok(UDraw {
                u: table.draw(&mut self.rng),
                component: None,
            }),
        }
    }

    pub fn draw_u(&mut self) -> Result<f64> {
        Ok(self.draw_u_detailed()?.u)
    }

    /// One ordinary Boltzmann draw.
    pub fn sample(&mut self) -> Result<OrdinarySample<G::Object>> {
        for _ in 0..DIVERGENT_RETRIES {
            let u = self.draw_u()?;
            let y = self.x * u;
            match self.generator.sample_at(y, &mut self.rng) {
                Ok(object) => {
                    return Ok(OrdinarySample {
                        object,
                        u,
                        x_effective: y,
                    })
                }
                Err(Error::EgfDivergent { .. }) => {
                    self.retries += 1;
                    log::warn!("exponential generator diverged at x*u = {y}; redrawing u");
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::InconsistentOracle(format!(
            "exponential generator diverged on {DIVERGENT_RETRIES} consecutive draws of u"
        )))
    }

    pub fn rng_mut(&mut self) -> &mut RandomSource {
        &mut self.rng
    }
}
