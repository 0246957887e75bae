//! Generating-function oracles.
//!
//! * `Â(x) = Σ a_n x^n / n!` is evaluated in closed form when the class does
//!   not recurse, and by monotone fixed-point iteration from 0 otherwise.
//! * `A(x) = Σ a_n x^n` is evaluated two independent ways: by summing exact
//!   coefficients with a geometric tail bound, and by the Laplace–Borel
//!   integral `A(x) = ∫₀^∞ e^{-u} Â(xu) du`.
//!
//! Tail bounds rest on [`growth_estimate`], a ratio test over the last half
//! of the coefficient window. That estimate is a heuristic: it cannot see
//! past the window. The Laplace route does not use coefficients at all and
//! serves as the cross-check.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad;
use crate::series::{self, LabeledCounter};
use crate::spec::{ClassId, Collection, SpecExpr, ValidatedSpec};

/// Default truncation order for coefficient prefixes.
pub const DEFAULT_ORDER: usize = 64;

/// Series evaluation requires `x * R <= SAFETY`.
pub const SAFETY: f64 = 0.95;

/// Relative spread of the ratio window accepted as "settled".
const RATIO_SPREAD: f64 = 0.10;

const FIXED_POINT_LIMIT: f64 = 1e12;
const FIXED_POINT_ITERATIONS: usize = 10_000;

/// Exact counting sequence of a class up to order `N`.
#[derive(Clone, Debug)]
pub struct SeriesCoeffs {
    pub class: String,
    counts: Vec<BigUint>,
    egf: Vec<BigRational>,
}

impl SeriesCoeffs {
    pub fn from_counts(class: impl Into<String>, counts: Vec<BigUint>) -> Self {
        let mut fact = BigUint::from(1u32);
        let egf = counts
            .iter()
            .enumerate()
            .map(|(n, a)| {
                if n > 0 {
                    fact *= n;
                }
                BigRational::new(a.clone().into(), fact.clone().into())
            })
            .collect();
        SeriesCoeffs {
            class: class.into(),
            counts,
            egf,
        }
    }

    /// Truncation order `N`; coefficients `0..=N` are stored.
    pub fn order(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    pub fn counts(&self) -> &[BigUint] {
        &self.counts
    }

    /// `a_n / n!` exactly.
    pub fn egf(&self) -> &[BigRational] {
        &self.egf
    }

    pub fn count_f64(&self, n: usize) -> f64 {
        self.counts[n].to_f64().unwrap_or(f64::INFINITY)
    }

    /// `ln a_n`, `-inf` for zero counts.
    pub fn ln_counts(&self) -> Vec<f64> {
        self.counts.iter().map(series::ln_big).collect()
    }

    /// `ln (a_n / n!)`.
    pub fn ln_egf(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(n, a)| series::ln_big(a) - series::ln_factorial(n))
            .collect()
    }
}

/// Evaluation strategy behind an [`EvalResult`].
///
/// The error bound of `ClosedForm` and `FixedPoint` is a floating-point
/// round-off estimate (plus the contraction bound for `FixedPoint`); for
/// `Series` it adds the geometric tail bound implied by the growth
/// estimate; for `Laplace` it is the quadrature step-halving difference
/// plus the monitored tail. `Rational` bounds the linear-solve residual.
/// None of them is certified interval arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Series,
    Laplace,
    ClosedForm,
    FixedPoint,
    Rational,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvalResult {
    pub value: f64,
    #[serde(rename = "err")]
    pub error: f64,
    pub method: Method,
}

impl EvalResult {
    fn exact(value: f64, method: Method) -> Self {
        EvalResult {
            value,
            error: 0.0,
            method,
        }
    }

    /// Whether two results agree within their combined error bounds.
    pub fn agrees_with(&self, other: &EvalResult) -> bool {
        (self.value - other.value).abs() <= self.error + other.error
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "R")]
pub enum Verdict {
    AtMostExponential(f64),
    Superexponential,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthEstimate {
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Relative spread of the ratio window.
    pub margin: f64,
    /// Envelope constant `C` with `a_n <= C R^n` over the window.
    pub envelope: f64,
    /// Last index inspected.
    pub order: usize,
}

impl GrowthEstimate {
    pub fn rate(&self) -> Option<f64> {
        match self.verdict {
            Verdict::AtMostExponential(r) => Some(r),
            _ => None,
        }
    }

    /// `Σ_{n>N} C (xR)^n`, the tail bound used by series evaluation.
    pub fn tail_bound(&self, x: f64) -> f64 {
        match self.verdict {
            Verdict::AtMostExponential(r) if r == 0.0 || x == 0.0 => 0.0,
            Verdict::AtMostExponential(r) => {
                let q = x * r;
                if q >= 1.0 {
                    f64::INFINITY
                } else {
                    self.envelope * q.powi(self.order as i32 + 1) / (1.0 - q)
                }
            }
            _ => f64::INFINITY,
        }
    }

    /// Bound on `Σ_{n>N} n C (xR)^n`.
    pub fn weighted_tail_bound(&self, x: f64) -> f64 {
        match self.verdict {
            Verdict::AtMostExponential(r) if r == 0.0 || x == 0.0 => 0.0,
            Verdict::AtMostExponential(r) => {
                let q = x * r;
                if q >= 1.0 {
                    return f64::INFINITY;
                }
                let m = self.order as f64 + 1.0;
                self.envelope * q.powf(m) * (m / (1.0 - q) + q / ((1.0 - q) * (1.0 - q)))
            }
            _ => f64::INFINITY,
        }
    }

    /// Smallest order whose tail bound at `x` falls below `target`, if the
    /// estimate is exponential and `xR < 1`.
    pub fn order_for_tail(&self, x: f64, target: f64) -> Option<usize> {
        match self.verdict {
            Verdict::AtMostExponential(r) if r == 0.0 || x == 0.0 => Some(self.order),
            Verdict::AtMostExponential(r) if x * r < 1.0 => {
                let q = x * r;
                // C q^{N+1} / (1-q) < target
                let need = ((target * (1.0 - q) / self.envelope).ln() / q.ln()).ceil() - 1.0;
                Some(need.max(self.order as f64) as usize)
            }
            _ => None,
        }
    }
}

/// Exact coefficients `a_0..a_N` of one class.
pub fn egf_coeffs(spec: &ValidatedSpec, class: ClassId, order: usize) -> Result<SeriesCoeffs> {
    let mut counter = LabeledCounter::new(spec);
    let counts = counter.counts(class, order)?;
    Ok(SeriesCoeffs::from_counts(spec.name(class), counts))
}

/// Ratio test on a sequence given by its logarithms (`-inf` marks zeros).
///
/// Consecutive nonzero terms `i < j` give the normalized ratio
/// `(t_j / t_i)^{1/(j-i)}`, so periodic zero patterns are handled.
pub fn growth_from_logs(ln_terms: &[f64]) -> GrowthEstimate {
    let order = ln_terms.len().saturating_sub(1);
    let inconclusive = GrowthEstimate {
        verdict: Verdict::Inconclusive,
        margin: f64::NAN,
        envelope: f64::NAN,
        order,
    };
    let nonzero: Vec<usize> = (0..ln_terms.len()).filter(|&n| ln_terms[n].is_finite()).collect();
    if order < 8 {
        return inconclusive;
    }
    let half = order / 2;
    if nonzero.iter().all(|&n| n < half) {
        // eventually zero: a finite class
        return GrowthEstimate {
            verdict: Verdict::AtMostExponential(0.0),
            margin: 0.0,
            envelope: 0.0,
            order,
        };
    }
    if nonzero.len() < 8 {
        return inconclusive;
    }
    let ratios: Vec<f64> = nonzero
        .windows(2)
        .filter(|w| w[1] >= half)
        .map(|w| ((ln_terms[w[1]] - ln_terms[w[0]]) / (w[1] - w[0]) as f64).exp())
        .collect();
    if ratios.len() < 2 {
        return inconclusive;
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    let slack = 1e-12 * max;
    let nonincreasing = ratios.windows(2).all(|w| w[1] <= w[0] + slack);
    let nondecreasing = ratios.windows(2).all(|w| w[1] + slack >= w[0]);

    let exponential = |rate: f64| {
        // C = max a_n / R^n over the whole window
        let ln_c = nonzero
            .iter()
            .map(|&n| ln_terms[n] - n as f64 * rate.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        GrowthEstimate {
            verdict: Verdict::AtMostExponential(rate),
            margin: spread,
            envelope: ln_c.exp(),
            order,
        }
    };

    if spread <= RATIO_SPREAD {
        return exponential(max * (1.0 + spread));
    }
    if nonincreasing {
        // decreasing ratios: the largest one bounds every later ratio
        return exponential(max);
    }
    if nondecreasing {
        let mid = ratios.len() / 2;
        let first = ratios[mid] - ratios[0];
        let second = ratios[ratios.len() - 1] - ratios[mid];
        // A ratio sequence converging like L(1 - c/n) gains half as much in
        // the second half of the window as in the first.
        if second >= 0.7 * first {
            return GrowthEstimate {
                verdict: Verdict::Superexponential,
                margin: spread,
                envelope: f64::NAN,
                order,
            };
        }
    }
    inconclusive
}

/// Growth of the counts `a_n`.
pub fn growth_estimate(coeffs: &SeriesCoeffs) -> GrowthEstimate {
    growth_from_logs(&coeffs.ln_counts())
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be a finite nonnegative real, got {x}")));
    }
    Ok(())
}

fn require_rate(growth: &GrowthEstimate, x: f64) -> Result<f64> {
    match growth.verdict {
        Verdict::AtMostExponential(r) => {
            if x * r > SAFETY {
                Err(Error::DivergentOgf {
                    x,
                    detail: format!("x * R = {:.6} exceeds the safety margin {SAFETY}", x * r),
                })
            } else {
                Ok(r)
            }
        }
        Verdict::Superexponential => Err(Error::DivergentOgf {
            x,
            detail: "coefficients grow superexponentially".into(),
        }),
        Verdict::Inconclusive => Err(Error::InconclusiveGrowth(format!(
            "ratio test over orders {}..{} did not settle",
            growth.order / 2,
            growth.order
        ))),
    }
}

/// `A(x) = Σ a_n x^n` from exact coefficients plus a geometric tail bound.
pub fn ogf_eval_series(coeffs: &SeriesCoeffs, growth: &GrowthEstimate, x: f64) -> Result<EvalResult> {
    check_x(x)?;
    if x == 0.0 {
        return Ok(EvalResult::exact(coeffs.count_f64(0), Method::Series));
    }
    require_rate(growth, x)?;
    let sum: f64 = coeffs
        .counts()
        .iter()
        .enumerate()
        .map(|(n, a)| series::scaled(a, x, n))
        .sum();
    let roundoff = sum * (coeffs.order() as f64 + 1.0) * f64::EPSILON * 4.0;
    Ok(EvalResult {
        value: sum,
        error: growth.tail_bound(x) + roundoff,
        method: Method::Series,
    })
}

/// Mean of the ordinary size law `P(n) = a_n x^n / A(x)`.
pub fn expected_size_ordinary(coeffs: &SeriesCoeffs, growth: &GrowthEstimate, x: f64) -> Result<EvalResult> {
    check_x(x)?;
    if x == 0.0 {
        if coeffs.counts()[0].is_zero() {
            return Err(Error::EmptyClass);
        }
        return Ok(EvalResult::exact(0.0, Method::Series));
    }
    require_rate(growth, x)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (n, a) in coeffs.counts().iter().enumerate() {
        let t = series::scaled(a, x, n);
        num += n as f64 * t;
        den += t;
    }
    if den == 0.0 {
        return Err(Error::EmptyClass);
    }
    let tail = growth.tail_bound(x);
    let wtail = growth.weighted_tail_bound(x);
    let mean = num / den;
    // true mean lies in [num/(den+tail), (num+wtail)/den]
    let error = ((num + wtail) / den - mean).max(mean - num / (den + tail));
    Ok(EvalResult {
        value: mean,
        error: error + mean * 1e-14,
        method: Method::Series,
    })
}

/// `Â(x)` by partial summation of exact EGF coefficients with a tail bound
/// from the ratio test on `a_n / n!`.
pub fn egf_eval_series(coeffs: &SeriesCoeffs, x: f64, tol: f64) -> Result<EvalResult> {
    check_x(x)?;
    if x == 0.0 {
        return Ok(EvalResult::exact(coeffs.count_f64(0), Method::Series));
    }
    let ln_egf = coeffs.ln_egf();
    let growth = growth_from_logs(&ln_egf);
    let tail = match growth.verdict {
        Verdict::AtMostExponential(r) if x * r < 1.0 => growth.tail_bound(x),
        Verdict::AtMostExponential(_) | Verdict::Superexponential => {
            return Err(Error::EgfDivergent {
                x,
                detail: "series ratio test exceeds the radius".into(),
            })
        }
        Verdict::Inconclusive => return Err(Error::InconclusiveTail { x }),
    };
    let sum: f64 = ln_egf
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(n, l)| (l + n as f64 * x.ln()).exp())
        .sum();
    let error = tail + sum * (coeffs.order() as f64 + 1.0) * f64::EPSILON * 4.0;
    if error > tol {
        return Err(Error::InconclusiveTail { x });
    }
    Ok(EvalResult {
        value: sum,
        error,
        method: Method::Series,
    })
}

// ---------------------------------------------------------------------------
// Closed forms and fixed points

fn divergent(x: f64, what: &str) -> Error {
    Error::EgfDivergent {
        x,
        detail: format!("{what} argument reached 1"),
    }
}

/// `Σ_{j>=k} f^j / j!`.
pub(crate) fn exp_tail(f: f64, k: u32) -> f64 {
    if k == 0 {
        return f.exp();
    }
    if f > 1.0 {
        let mut partial = 0.0;
        let mut term = 1.0;
        for j in 0..k {
            if j > 0 {
                term *= f / j as f64;
            }
            partial += term;
        }
        return f.exp() - partial;
    }
    let mut term = (1..=k).fold(1.0, |t, j| t * f / j as f64);
    let mut sum = 0.0;
    let mut j = k;
    while term > 0.0 && term > sum * 1e-18 {
        sum += term;
        j += 1;
        term *= f / j as f64;
    }
    sum
}

/// `Σ_{j>=k} f^j / j`, `k >= 1`, `f < 1`.
pub(crate) fn log_tail(f: f64, k: u32) -> f64 {
    let full = -(-f).ln_1p();
    if k <= 1 {
        return full;
    }
    if f > 0.5 {
        let partial: f64 = (1..k).map(|j| f.powi(j as i32) / j as f64).sum();
        return full - partial;
    }
    let mut sum = 0.0;
    let mut p = f.powi(k as i32);
    let mut j = k;
    while p > 0.0 && p / j as f64 > sum * 1e-18 {
        sum += p / j as f64;
        p *= f;
        j += 1;
    }
    sum
}

/// Value of a collection constructor applied to an inner EGF value `f`.
pub fn collection_value(kind: Collection, min: u32, f: f64, x: f64) -> Result<f64> {
    match kind {
        Collection::Seq => {
            if f >= 1.0 {
                return Err(divergent(x, "SEQ"));
            }
            Ok(f.powi(min as i32) / (1.0 - f))
        }
        Collection::Set => Ok(exp_tail(f, min)),
        Collection::Cyc => {
            if f >= 1.0 {
                return Err(divergent(x, "CYC"));
            }
            Ok(log_tail(f, min.max(1)))
        }
    }
}

/// Value of an expression at `x` given the values of every class.
pub fn expr_value(e: &SpecExpr, x: f64, classes: &[f64]) -> Result<f64> {
    Ok(match e {
        SpecExpr::Epsilon => 1.0,
        SpecExpr::Atom(_) => x,
        SpecExpr::Union(l, r) => expr_value(l, x, classes)? + expr_value(r, x, classes)?,
        SpecExpr::Product(l, r) => expr_value(l, x, classes)? * expr_value(r, x, classes)?,
        SpecExpr::Collection { kind, inner, min } => {
            collection_value(*kind, *min, expr_value(inner, x, classes)?, x)?
        }
        SpecExpr::Ref(c) => classes[c.0],
    })
}

fn refs(e: &SpecExpr, out: &mut Vec<ClassId>) {
    match e {
        SpecExpr::Union(l, r) | SpecExpr::Product(l, r) => {
            refs(l, out);
            refs(r, out);
        }
        SpecExpr::Collection { inner, .. } => refs(inner, out),
        SpecExpr::Ref(c) => out.push(*c),
        _ => {}
    }
}

/// Evaluator of every class EGF of a validated system.
#[derive(Clone, Debug)]
pub struct EgfOracle {
    spec: ValidatedSpec,
    /// Class depends (transitively) on a recursive definition.
    recursive: Vec<bool>,
}

impl EgfOracle {
    pub fn new(spec: ValidatedSpec) -> Self {
        let system = spec.system();
        let n = system.len();
        let deps: Vec<Vec<ClassId>> = system
            .classes()
            .map(|c| {
                let mut out = Vec::new();
                refs(system.expr(c), &mut out);
                out
            })
            .collect();
        // reach[i][j]: j reachable from i in one or more steps
        let mut reach = vec![vec![false; n]; n];
        for (i, d) in deps.iter().enumerate() {
            for c in d {
                reach[i][c.0] = true;
            }
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let cyclic: Vec<bool> = (0..n).map(|i| reach[i][i]).collect();
        let recursive = (0..n).map(|i| cyclic[i] || (0..n).any(|j| reach[i][j] && cyclic[j])).collect();
        EgfOracle { spec, recursive }
    }

    pub fn spec(&self) -> &ValidatedSpec {
        &self.spec
    }

    pub fn is_recursive(&self, class: ClassId) -> bool {
        self.recursive[class.0]
    }

    /// Values of every class EGF at `x`, with an absolute error bound valid
    /// for all of them.
    pub fn class_values(&self, x: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
        check_x(x)?;
        let n = self.spec.system().len();
        if self.recursive.iter().any(|&r| r) {
            return self.fixed_point(x, tol);
        }
        let mut memo: Vec<Option<f64>> = vec![None; n];
        let mut values = Vec::with_capacity(n);
        for c in self.spec.system().classes() {
            values.push(self.closed_form(c, x, &mut memo)?);
        }
        let err = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 64.0 * f64::EPSILON;
        Ok((values, err))
    }

    fn closed_form(&self, class: ClassId, x: f64, memo: &mut Vec<Option<f64>>) -> Result<f64> {
        if let Some(v) = memo[class.0] {
            return Ok(v);
        }
        let mut deps = Vec::new();
        refs(self.spec.system().expr(class), &mut deps);
        for d in deps {
            self.closed_form(d, x, memo)?;
        }
        let values: Vec<f64> = memo.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let v = expr_value(self.spec.system().expr(class), x, &values)?;
        memo[class.0] = Some(v);
        Ok(v)
    }

    fn fixed_point(&self, x: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
        let system = self.spec.system();
        let mut y = vec![0.0; system.len()];
        let mut prev_delta = f64::NAN;
        for _ in 0..FIXED_POINT_ITERATIONS {
            let next = system
                .classes()
                .map(|c| expr_value(system.expr(c), x, &y))
                .collect::<Result<Vec<f64>>>()?;
            if next.iter().any(|v| !v.is_finite() || *v > FIXED_POINT_LIMIT) {
                return Err(Error::EgfDivergent {
                    x,
                    detail: format!("fixed-point iterate exceeded {FIXED_POINT_LIMIT:e}"),
                });
            }
            let delta = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            y = next;
            if delta == 0.0 {
                return Ok((y, scale * 64.0 * f64::EPSILON));
            }
            let rho = delta / prev_delta;
            prev_delta = delta;
            // NaN on the first step: no contraction estimate yet
            if rho < 1.0 {
                let err = delta * rho / (1.0 - rho) + scale * 64.0 * f64::EPSILON;
                if err <= tol * scale {
                    return Ok((y, err));
                }
            }
        }
        Err(Error::EgfDivergent {
            x,
            detail: format!("fixed-point iteration did not contract in {FIXED_POINT_ITERATIONS} steps"),
        })
    }

    /// `Â(x)` of one class.
    pub fn egf_eval(&self, class: ClassId, x: f64, tol: f64) -> Result<EvalResult> {
        check_x(x)?;
        if self.recursive[class.0] {
            let (values, err) = self.fixed_point(x, tol)?;
            return Ok(EvalResult {
                value: values[class.0],
                error: err,
                method: Method::FixedPoint,
            });
        }
        let mut memo = vec![None; self.spec.system().len()];
        let v = self.closed_form(class, x, &mut memo)?;
        Ok(EvalResult {
            value: v,
            error: v.abs() * 64.0 * f64::EPSILON,
            method: Method::ClosedForm,
        })
    }
}

/// `Â(x)` of one class of a validated system.
pub fn egf_eval(spec: &ValidatedSpec, class: ClassId, x: f64, tol: f64) -> Result<EvalResult> {
    EgfOracle::new(spec.clone()).egf_eval(class, x, tol)
}

// ---------------------------------------------------------------------------
// Laplace–Borel integral

/// Panel width for the marching quadrature.
const PANEL: f64 = 1.0;
/// Largest abscissa examined before declaring the integral divergent.
const U_MAX: f64 = 5_000.0;

/// `∫₀^∞ e^{-u} h(u) du` by marching Gauss–Legendre panels.
///
/// Marching stops once the integrand has decreased over the last three
/// panels and the bound `w g(U) / (1 - ρ)` on the remainder (with `ρ` the
/// largest of the last three panel-to-panel ratios) is below `tol / 2`.
/// This treats the remaining decay as at least geometric, which holds for
/// integrands of the form `e^{-u}` times an entire function of exponential
/// type below 1.
pub fn laplace_integral(mut h: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<EvalResult> {
    let mut g = |u: f64| -> Result<f64> {
        let v = h(u)?;
        let r = (-u).exp() * v;
        if !r.is_finite() {
            return Err(Error::DivergentOgf {
                x: f64::NAN,
                detail: format!("integrand overflowed at u = {u}"),
            });
        }
        Ok(r)
    };
    let panel_tol = tol * 1e-3;
    let mut total = 0.0;
    let mut error = 0.0;
    let mut a = 0.0;
    let mut g_prev = g(0.0)?;
    let mut ratios: Vec<f64> = Vec::new();
    while a < U_MAX {
        let b = a + PANEL;
        let q = quad::integrate(&mut g, a, b, 1, panel_tol, 12)?;
        total += q.value;
        error += q.error;
        let g_end = g(b)?;
        ratios.push(if g_prev > 0.0 { g_end / g_prev } else if g_end > 0.0 { f64::INFINITY } else { 0.0 });
        g_prev = g_end;
        a = b;
        if g_end == 0.0 && ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|&r| r == 0.0) {
            return Ok(EvalResult {
                value: total,
                error,
                method: Method::Laplace,
            });
        }
        if ratios.len() >= 3 {
            let recent = &ratios[ratios.len() - 3..];
            let rho = recent.iter().cloned().fold(0.0, f64::max);
            if rho < 1.0 {
                let tail = PANEL * g_end / (1.0 - rho);
                if tail < tol / 2.0 {
                    error += tail;
                    if error > tol {
                        return Err(Error::ToleranceNotReached { tol, estimate: error });
                    }
                    return Ok(EvalResult {
                        value: total,
                        error,
                        method: Method::Laplace,
                    });
                }
            }
        }
    }
    Err(Error::DivergentOgf {
        x: f64::NAN,
        detail: format!("integrand did not decay by u = {U_MAX}"),
    })
}

/// `A(x) = ∫₀^∞ e^{-u} Â(xu) du`.
pub fn ogf_eval_laplace(mut egf: impl FnMut(f64) -> Result<f64>, x: f64, tol: f64) -> Result<EvalResult> {
    check_x(x)?;
    laplace_integral(|u| egf(x * u), tol).map_err(|e| match e {
        Error::EgfDivergent { detail, .. } => Error::DivergentOgf {
            x,
            detail: format!("Â(xu) is singular on the integration path: {detail}"),
        },
        Error::DivergentOgf { detail, .. } => Error::DivergentOgf { x, detail },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::load_spec;

    fn oracle(src: &str) -> EgfOracle {
        EgfOracle::new(load_spec(src).unwrap())
    }

    fn seq(v: &[u64]) -> SeriesCoeffs {
        SeriesCoeffs::from_counts("s", v.iter().map(|&a| BigUint::from(a)).collect())
    }

    /// Bisection on `T - x e^T = 0` below the branch point `T = 1`.
    fn tree_function(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - x * mid.exp() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn egf_closed_forms() {
        let o = oracle("A = SET(Z)");
        let r = o.egf_eval(ClassId(0), 0.5, 1e-12).unwrap();
        assert_eq!(r.method, Method::ClosedForm);
        assert!((r.value - 1.648_721_270_7).abs() < 1e-10);
        assert!((r.value - 0.5f64.exp()).abs() <= r.error + 1e-16);
        assert_eq!(o.egf_eval(ClassId(0), 0.0, 1e-12).unwrap().value, 1.0);

        let bell = oracle("P = SET(SET>=1(Z))");
        let v = bell.egf_eval(ClassId(0), 0.4, 1e-12).unwrap().value;
        assert!((v - (0.4f64.exp() - 1.0).exp()).abs() < 1e-14);

        let seq = oracle("S = SEQ(Z)");
        assert!(matches!(seq.egf_eval(ClassId(0), 1.0, 1e-12), Err(Error::EgfDivergent { .. })));
    }

    #[test]
    fn cayley_fixed_point_matches_bisection() {
        let o = oracle("T = Z * SET(T)");
        let r = o.egf_eval(ClassId(0), 0.2, 1e-13).unwrap();
        assert_eq!(r.method, Method::FixedPoint);
        let expected = tree_function(0.2);
        assert!((expected - 0.259_171_101_8).abs() < 1e-10);
        assert!((r.value - expected).abs() < 1e-12, "{} vs {expected}", r.value);
        assert!(matches!(o.egf_eval(ClassId(0), 0.5, 1e-12), Err(Error::EgfDivergent { .. })));
        // at the singularity 1/e the iteration stalls
        assert!(o.egf_eval(ClassId(0), (-1.0f64).exp(), 1e-12).is_err());
    }

    #[test]
    fn egf_series_agrees_with_closed_form() {
        let spec = load_spec("P = SET(SET>=1(Z))").unwrap();
        let coeffs = egf_coeffs(&spec, ClassId(0), 64).unwrap();
        let s = egf_eval_series(&coeffs, 0.4, 1e-8).unwrap();
        let c = egf_eval(&spec, ClassId(0), 0.4, 1e-12).unwrap();
        assert!(s.agrees_with(&c), "{s:?} {c:?}");
    }

    #[test]
    fn growth_verdicts() {
        let pow2: Vec<u64> = (0..20).map(|n| 1u64 << n).collect();
        let g = growth_estimate(&seq(&pow2));
        assert!((g.rate().unwrap() - 2.0).abs() < 1e-12);

        let facts = SeriesCoeffs::from_counts("f", (0..=20).map(series::factorial).collect());
        assert_eq!(growth_estimate(&facts).verdict, Verdict::Superexponential);

        let spec = load_spec("P = SET(SET>=1(Z))").unwrap();
        let bell = egf_coeffs(&spec, ClassId(0), 16).unwrap();
        assert_eq!(growth_estimate(&bell).verdict, Verdict::Superexponential);

        assert_eq!(growth_estimate(&seq(&[1, 1, 1])).verdict, Verdict::Inconclusive);
        let finite = seq(&[1, 2, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(growth_estimate(&finite).verdict, Verdict::AtMostExponential(0.0));
        let alternating: Vec<u64> = (0..30).map(|n| u64::from(n % 2 == 0)).collect();
        assert_eq!(growth_estimate(&seq(&alternating)).verdict, Verdict::AtMostExponential(1.0));
    }

    #[test]
    fn ogf_series_values() {
        let ones = seq(&[1; 65]);
        let g = growth_estimate(&ones);
        let r = ogf_eval_series(&ones, &g, 0.5).unwrap();
        assert!((r.value - 2.0).abs() <= r.error);
        assert!(r.error < 1e-12);
        assert_eq!(ogf_eval_series(&ones, &g, 0.0).unwrap().value, 1.0);
        assert!(matches!(ogf_eval_series(&ones, &g, 0.96), Err(Error::DivergentOgf { .. })));

        let spec = load_spec("S = SEQ(Z)").unwrap();
        let c = egf_coeffs(&spec, ClassId(0), 64).unwrap();
        let g = growth_estimate(&c);
        for x in [0.001, 0.1, 0.5] {
            assert!(matches!(ogf_eval_series(&c, &g, x), Err(Error::DivergentOgf { .. })));
        }
    }

    #[test]
    fn expected_sizes() {
        let ones = seq(&[1; 65]);
        let g = growth_estimate(&ones);
        let m = expected_size_ordinary(&ones, &g, 0.5).unwrap();
        assert!((m.value - 1.0).abs() <= m.error + 1e-12);
        assert_eq!(expected_size_ordinary(&ones, &g, 0.0).unwrap().value, 0.0);
        let pow2: Vec<u64> = (0..=60).map(|n| 1u64 << n).collect();
        let g = growth_estimate(&seq(&pow2));
        let m = expected_size_ordinary(&seq(&pow2), &g, 0.25).unwrap();
        assert!((m.value - 1.0).abs() <= m.error + 1e-12);
    }

    #[test]
    fn laplace_values() {
        let r = ogf_eval_laplace(|y| Ok(y.exp()), 0.5, 1e-10).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10, "{r:?}");
        let r = ogf_eval_laplace(|_| Ok(1.0), 0.3, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);

        let seq = oracle("S = SEQ(Z)");
        let e = ogf_eval_laplace(|y| seq.egf_eval(ClassId(0), y, 1e-12).map(|r| r.value), 0.1, 1e-10);
        assert!(matches!(e, Err(Error::DivergentOgf { .. })), "{e:?}");
        // exponential type above 1 never decays
        assert!(matches!(
            ogf_eval_laplace(|y| Ok(y.exp()), 1.2, 1e-10),
            Err(Error::DivergentOgf { .. })
        ));
    }

    #[test]
    fn gamma_integral() {
        let mut fact = 1.0f64;
        for n in 0..=20 {
            if n > 0 {
                fact *= n as f64;
            }
            let r = laplace_integral(|u| Ok(u.powi(n)), 1e-12 * fact).unwrap();
            assert!(((r.value - fact) / fact).abs() < 1e-8, "n = {n}: {}", r.value);
        }
    }

    #[test]
    fn order_for_tail_matches_bound() {
        let ones = seq(&[1; 65]);
        let g = growth_estimate(&ones);
        let n = g.order_for_tail(0.9, 1e-9).unwrap();
        let q: f64 = 0.9;
        assert!(q.powi(n as i32 + 1) / (1.0 - q) < 1e-9);
        assert!(q.powi(n as i32) / (1.0 - q) >= 1e-9);
    }
}
