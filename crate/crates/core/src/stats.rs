//! Empirical verification: exhaustive enumeration for small sizes, size
//! histograms, Pearson chi-square tests and the bundled check suite.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exp_sampler::{ExponentialGenerator, SpecGenerator};
use crate::object::{LabeledObject, Shape};
use crate::oracle::{self, EvalResult, SeriesCoeffs};
use crate::ord_transform::{self, OrdinarySampler, Strategy, UDrawStrategy};
use crate::rng::RandomSource;
use crate::series;
use crate::spec::{ClassId, Collection, SpecExpr, ValidatedSpec};
use crate::special;
use crate::words::{self, Dfa, Interleaving, ShuffleLanguage, WordGenerator, WordObject};

/// Largest size `enumerate_objects` accepts.
pub const MAX_ENUMERATION: usize = 8;

/// Sizes checked against enumeration by the suite.
pub const SUITE_ENUMERATION: usize = 6;

/// Per-test significance level of the suite.
pub const ALPHA: f64 = 1e-3;

/// Expected count below which buckets are merged.
const MIN_EXPECTED: f64 = 5.0;

// ---------------------------------------------------------------------------
// Enumeration

type Memo = HashMap<(usize, u32), Rc<Vec<Shape>>>;

fn submasks(mask: u32) -> impl Iterator<Item = u32> {
    let mut sub = Some(mask);
    std::iter::from_fn(move || {
        let s = sub?;
        sub = if s == 0 { None } else { Some((s - 1) & mask) };
        Some(s)
    })
}

struct Enumerator<'a> {
    spec: &'a ValidatedSpec,
    memo: Memo,
}

impl Enumerator<'_> {
    fn class(&mut self, c: ClassId, mask: u32) -> Rc<Vec<Shape>> {
        if let Some(v) = self.memo.get(&(c.0, mask)) {
            return Rc::clone(v);
        }
        let v = Rc::new(self.expr(self.spec.system().expr(c), mask));
        self.memo.insert((c.0, mask), Rc::clone(&v));
        v
    }

    fn expr(&mut self, e: &SpecExpr, mask: u32) -> Vec<Shape> {
        match e {
            SpecExpr::Epsilon => {
                if mask == 0 {
                    vec![Shape::Epsilon]
                } else {
                    vec![]
                }
            }
            SpecExpr::Atom(letter) => {
                if mask.count_ones() == 1 {
                    vec![Shape::Atom {
                        letter: *letter,
                        label: mask.trailing_zeros() + 1,
                    }]
                } else {
                    vec![]
                }
            }
            SpecExpr::Union(l, r) => {
                let mut out: Vec<Shape> = self.expr(l, mask).into_iter().map(|s| Shape::Left(Box::new(s))).collect();
                out.extend(self.expr(r, mask).into_iter().map(|s| Shape::Right(Box::new(s))));
                out
            }
            SpecExpr::Product(l, r) => {
                let mut out = Vec::new();
                for sub in submasks(mask) {
                    // a side given no labels must hold the empty object;
                    // checking first keeps recursive products finite
                    if (sub == 0 && !self.spec.expr_has_empty(l)) || (sub == mask && !self.spec.expr_has_empty(r)) {
                        continue;
                    }
                    let left = self.expr(l, sub);
                    if left.is_empty() {
                        continue;
                    }
                    let right = self.expr(r, mask ^ sub);
                    for a in &left {
                        for b in &right {
                            out.push(Shape::Pair(Box::new(a.clone()), Box::new(b.clone())));
                        }
                    }
                }
                out
            }
            SpecExpr::Collection { kind, inner, min } => {
                let min = *min as usize;
                let lists = match kind {
                    Collection::Seq => self.seqs(inner, mask, min),
                    Collection::Set => self.sets(inner, mask, min),
                    Collection::Cyc => self.cycs(inner, mask, min.max(1)),
                };
                lists
                    .into_iter()
                    .map(|v| match kind {
                        Collection::Seq => Shape::Seq(v),
                        Collection::Set => Shape::Set(v),
                        Collection::Cyc => Shape::Cyc(v),
                    })
                    .collect()
            }
            SpecExpr::Ref(c) if mask == 0 && !self.spec.has_empty(*c) => vec![],
            SpecExpr::Ref(c) => self.class(*c, mask).as_ref().clone(),
        }
    }

    /// Components of a validated collection are never empty, so each one
    /// takes a nonempty block of labels.
    fn chains(&mut self, inner: &SpecExpr, mask: u32, need: usize, out: &mut Vec<Vec<Shape>>, prefix: &mut Vec<Shape>) {
        if mask == 0 {
            if need == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for sub in submasks(mask).filter(|&s| s != 0) {
            for first in self.expr(inner, sub) {
                prefix.push(first);
                self.chains(inner, mask ^ sub, need.saturating_sub(1), out, prefix);
                prefix.pop();
            }
        }
    }

    fn seqs(&mut self, inner: &SpecExpr, mask: u32, need: usize) -> Vec<Vec<Shape>> {
        let mut out = Vec::new();
        self.chains(inner, mask, need, &mut out, &mut Vec::new());
        out
    }

    fn sets(&mut self, inner: &SpecExpr, mask: u32, need: usize) -> Vec<Vec<Shape>> {
        if mask == 0 {
            return if need == 0 { vec![vec![]] } else { vec![] };
        }
        // the block holding the smallest label comes first
        let low = mask & mask.wrapping_neg();
        let mut out = Vec::new();
        for sub in submasks(mask).filter(|&s| s & low != 0) {
            let firsts = self.expr(inner, sub);
            if firsts.is_empty() {
                continue;
            }
            let rests = self.sets(inner, mask ^ sub, need.saturating_sub(1));
            for f in &firsts {
                for r in &rests {
                    let mut v = vec![f.clone()];
                    v.extend(r.iter().cloned());
                    out.push(v);
                }
            }
        }
        out
    }

    fn cycs(&mut self, inner: &SpecExpr, mask: u32, need: usize) -> Vec<Vec<Shape>> {
        if mask == 0 {
            return vec![];
        }
        let low = mask & mask.wrapping_neg();
        let mut out = Vec::new();
        for sub in submasks(mask).filter(|&s| s & low != 0) {
            let firsts = self.expr(inner, sub);
            if firsts.is_empty() {
                continue;
            }
            let rests = self.seqs(inner, mask ^ sub, need - 1);
            for f in &firsts {
                for r in &rests {
                    let mut v = vec![f.clone()];
                    v.extend(r.iter().cloned());
                    out.push(v);
                }
            }
        }
        out
    }
}

/// Every labeled object of size `n` in `class`.
pub fn enumerate_objects(spec: &ValidatedSpec, class: ClassId, n: usize) -> Result<Vec<LabeledObject>> {
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    let mut e = Enumerator {
        spec,
        memo: HashMap::new(),
    };
    let mask = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
    Ok(e.class(class, mask).iter().cloned().map(LabeledObject::from_labeled).collect())
}

/// All words of length `n` over `alphabet`.
fn all_words(alphabet: &[char], n: usize) -> Vec<Vec<char>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                alphabet.iter().map(move |&c| {
                    let mut v = w.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out
}

/// Accepted words of length `n`, by filtering all words.
pub fn enumerate_words(dfa: &Dfa, n: usize) -> Result<Vec<WordObject>> {
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    Ok(all_words(dfa.alphabet(), n)
        .into_iter()
        .filter(|w| dfa.accepts(w))
        .map(|letters| WordObject { letters })
        .collect())
}

/// Annotated interleavings of size `n`, built from every left word, right
/// word and merge pattern.
pub fn enumerate_interleavings(left: &Dfa, right: &Dfa, n: usize) -> Result<Vec<Interleaving>> {
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    let mut out = Vec::new();
    for k in 0..=n {
        let lw = enumerate_words(left, k)?;
        let rw = enumerate_words(right, n - k)?;
        for mask in 0u32..1 << n {
            if mask.count_ones() as usize != k {
                continue;
            }
            let pattern: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            for l in &lw {
                for r in &rw {
                    out.push(Interleaving {
                        left: l.clone(),
                        right: r.clone(),
                        pattern: pattern.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Histograms and chi-square

/// Size counts; the final bucket collects every size `>= cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub total: u64,
    pub seed: u64,
    pub descriptor: String,
}

impl Histogram {
    pub fn new(cutoff: usize, seed: u64, descriptor: impl Into<String>) -> Self {
        Histogram {
            counts: vec![0; cutoff + 1],
            total: 0,
            seed,
            descriptor: descriptor.into(),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn add(&mut self, size: usize) {
        let i = size.min(self.cutoff());
        self.counts[i] += 1;
        self.total += 1;
    }

    pub fn extend(&mut self, sizes: impl IntoIterator<Item = usize>) {
        for s in sizes {
            self.add(s);
        }
    }

    /// Adds the counts of a histogram with the same cutoff.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::Domain(format!(
                "cannot merge histograms with cutoffs {} and {}",
                self.cutoff(),
                other.cutoff()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    /// Relative frequencies.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total.max(1) as f64).collect()
    }
}

/// Folds a size law into `cutoff + 1` buckets, the last one holding the
/// mass of every size `>= cutoff`.
pub fn fold_law(law: &[f64], cutoff: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..cutoff).map(|n| law.get(n).copied().unwrap_or(0.0)).collect();
    out.push(law.iter().skip(cutoff).sum());
    out
}

/// Total-variation distance between two histograms' frequencies.
pub fn total_variation(a: &Histogram, b: &Histogram) -> f64 {
    let (fa, fb) = (a.frequencies(), b.frequencies());
    let n = fa.len().max(fb.len());
    0.5 * (0..n)
        .map(|i| (fa.get(i).copied().unwrap_or(0.0) - fb.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bucket ranges `[first, last]` after merging, in ascending order.
    pub groups: Vec<[usize; 2]>,
}

/// Pearson test of observed category counts against probabilities.
///
/// Buckets whose expected count is below 5 are merged from the tail
/// inward; a short leftover at the head joins its neighbour.
pub fn chi_square_counts(observed: &[u64], law: &[f64]) -> Result<Chi2Result> {
    if observed.len() != law.len() {
        return Err(Error::Domain(format!(
            "{} buckets observed but the law has {}",
            observed.len(),
            law.len()
        )));
    }
    let sum: f64 = law.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || law.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::LawNotNormalized { sum });
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Domain("no observations".into()));
    }
    let t = total as f64;

    // (first, last, observed, expected), built from the tail
    let mut groups: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut open: Option<(usize, usize, f64, f64)> = None;
    for i in (0..law.len()).rev() {
        let g = open.get_or_insert((i, i, 0.0, 0.0));
        g.0 = i;
        g.2 += observed[i] as f64;
        g.3 += law[i] * t;
        if g.3 >= MIN_EXPECTED {
            groups.push(open.take().expect("open group"));
        }
    }
    if let Some(rest) = open {
        match groups.last_mut() {
            Some(g) => {
                g.0 = rest.0;
                g.2 += rest.2;
                g.3 += rest.3;
            }
            None => groups.push(rest),
        }
    }
    groups.reverse();
    if groups.len() < 2 {
        return Err(Error::DegenerateLaw);
    }
    let statistic: f64 = groups
        .iter()
        .map(|&(_, _, o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = groups.len() - 1;
    let p_value = if statistic.is_finite() {
        special::chi2_sf(statistic, dof)
    } else {
        0.0
    };
    Ok(Chi2Result {
        statistic,
        dof,
        p_value,
        groups: groups.iter().map(|g| [g.0, g.1]).collect(),
    })
}

/// Chi-square of a size histogram against bucket probabilities (see
/// [`fold_law`]).
pub fn chi_square(hist: &Histogram, law: &[f64]) -> Result<Chi2Result> {
    chi_square_counts(&hist.counts, law)
}

// ---------------------------------------------------------------------------
// Check suite

/// What the check suite runs against.
#[derive(Clone, Debug)]
pub enum Target {
    Spec { spec: ValidatedSpec, class: ClassId },
    Words(Dfa),
    Shuffle(Dfa, Dfa),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Error kind when the check failed on an error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            status,
            detail: detail.into(),
            statistic: None,
            p_value: None,
            error: None,
        }
    }

    fn pass(name: &str, detail: impl Into<String>) -> Self {
        Self::new(name, Status::Pass, detail)
    }

    fn verdict(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }

    fn skipped(name: &str, detail: impl Into<String>) -> Self {
        Self::new(name, Status::Skipped, detail)
    }

    fn failed(name: &str, e: &Error) -> Self {
        let mut c = Self::new(name, Status::Fail, e.to_string());
        c.error = Some(e.kind().into());
        c
    }

    fn chi2(name: &str, r: &Chi2Result, alpha: f64, detail: String) -> Self {
        let mut c = Self::verdict(
            name,
            r.p_value >= alpha,
            format!("{detail}; chi2 = {:.4} on {} dof, p = {:.4}", r.statistic, r.dof, r.p_value),
        );
        c.statistic = Some(r.statistic);
        c.p_value = Some(r.p_value);
        c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub checks: Vec<CheckResult>,
    pub seed: u64,
    pub trials: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    /// Whether every failure is a divergent OGF.
    pub fn failed_on_divergence_only(&self) -> bool {
        let mut fails = self.checks.iter().filter(|c| c.status == Status::Fail).peekable();
        fails.peek().is_some() && fails.all(|c| c.error.as_deref() == Some("DivergentOGF"))
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    /// Worker threads for sampling; each uses stream `(seed, index)`.
    pub workers: usize,
    pub alpha: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { workers: 1, alpha: ALPHA }
    }
}

/// Generator-specific hooks of the suite.
trait Subject: ExponentialGenerator + Clone + Send + Sync + 'static
where
    Self::Object: Send,
{
    fn key(object: &Self::Object) -> String;
    /// Enumerated objects of size `n`, as keys.
    fn enumerate(&self, n: usize) -> Result<Vec<String>>;
    /// `Â(x)` from a route other than coefficient summation.
    fn egf_direct(&self, x: f64) -> Result<EvalResult>;
    fn ogf_extra(&self, _x: f64) -> Option<Result<EvalResult>> {
        None
    }
}

impl Subject for SpecGenerator {
    fn key(o: &LabeledObject) -> String {
        o.term()
    }

    fn enumerate(&self, n: usize) -> Result<Vec<String>> {
        Ok(enumerate_objects(self.spec(), self.class(), n)?.iter().map(LabeledObject::term).collect())
    }

    fn egf_direct(&self, x: f64) -> Result<EvalResult> {
        self.oracle().egf_eval(self.class(), x, 1e-13)
    }
}

impl Subject for WordGenerator {
    fn key(o: &WordObject) -> String {
        o.to_string()
    }

    fn enumerate(&self, n: usize) -> Result<Vec<String>> {
        Ok(enumerate_words(self.dfa(), n)?.iter().map(WordObject::to_string).collect())
    }

    fn egf_direct(&self, x: f64) -> Result<EvalResult> {
        let v = self.egf(x)?;
        Ok(EvalResult {
            value: v,
            error: v * 2.0 * words::LENGTH_TAIL,
            method: oracle::Method::Series,
        })
    }

    fn ogf_extra(&self, x: f64) -> Option<Result<EvalResult>> {
        Some(words::ogf_rational_eval(self.dfa(), x))
    }
}

impl Subject for ShuffleLanguage {
    fn key(o: &Interleaving) -> String {
        o.to_json().to_string()
    }

    fn enumerate(&self, n: usize) -> Result<Vec<String>> {
        Ok(enumerate_interleavings(self.left.dfa(), self.right.dfa(), n)?
            .iter()
            .map(|i| i.to_json().to_string())
            .collect())
    }

    fn egf_direct(&self, x: f64) -> Result<EvalResult> {
        let l = self.left.egf_direct(x)?;
        let r = self.right.egf_direct(x)?;
        Ok(EvalResult {
            value: l.value * r.value,
            error: l.error * r.value + r.error * l.value + l.error * r.error,
            method: oracle::Method::Series,
        })
    }
}

/// Runs `trials` draws split over workers; worker `w` uses stream
/// `(seed, base + w)`.
fn fan_out<T: Send>(
    trials: usize,
    workers: usize,
    seed: u64,
    base: u64,
    draw: impl Fn(usize, RandomSource) -> Result<Vec<T>> + Sync,
) -> Result<Vec<T>> {
    let workers = workers.clamp(1, trials.max(1));
    if workers == 1 {
        return draw(trials, RandomSource::derive(seed, base));
    }
    let share = |w: usize| trials / workers + usize::from(w < trials % workers);
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let draw = &draw;
                scope.spawn(move || draw(share(w), RandomSource::derive(seed, base + w as u64)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(trials);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Size law `terms[n] / norm` extended until it sums to within `1e-10` of
/// one (or `cap` coefficients are used).
fn size_law(
    generator: &impl ExponentialGenerator,
    norm: f64,
    term: impl Fn(&BigUint, usize) -> f64,
    cap: usize,
) -> Result<Vec<f64>> {
    let mut order = oracle::DEFAULT_ORDER;
    loop {
        let c = generator.coefficients(order)?;
        let law: Vec<f64> = c.counts().iter().enumerate().map(|(n, a)| term(a, n) / norm).collect();
        let s: f64 = law.iter().sum();
        if s >= 1.0 - 1e-10 || order >= cap {
            return Ok(law);
        }
        order = (order * 2).min(cap);
    }
}

/// `a x^n / n!`.
fn egf_term(a: &BigUint, x: f64, n: usize) -> f64 {
    if a.is_zero() {
        0.0
    } else if x == 0.0 {
        if n == 0 { a.to_f64().unwrap_or(f64::INFINITY) } else { 0.0 }
    } else {
        (series::ln_big(a) + n as f64 * x.ln() - series::ln_factorial(n)).exp()
    }
}

fn cutoff_for(law: &[f64]) -> usize {
    let mut acc = 0.0;
    for (n, p) in law.iter().enumerate() {
        acc += p;
        if acc >= 1.0 - 1e-7 {
            return (n + 1).max(1);
        }
    }
    law.len().max(1)
}

fn size_check(name: &str, sizes: &[usize], law: &[f64], seed: u64, alpha: f64) -> CheckResult {
    let cutoff = cutoff_for(law);
    let mut h = Histogram::new(cutoff, seed, name);
    h.extend(sizes.iter().copied());
    match chi_square(&h, &fold_law(law, cutoff)) {
        Ok(r) => CheckResult::chi2(name, &r, alpha, format!("{} draws, sizes folded at {cutoff}", sizes.len())),
        Err(e) => CheckResult::failed(name, &e),
    }
}

/// Runs the full verification suite at parameter `x`.
pub fn run_check_suite(target: &Target, x: f64, trials: usize, seed: u64) -> Report {
    run_check_suite_with(target, x, trials, seed, &SuiteOptions::default())
}

pub fn run_check_suite_with(target: &Target, x: f64, trials: usize, seed: u64, opts: &SuiteOptions) -> Report {
    let checks = match target {
        Target::Spec { spec, class } => suite(SpecGenerator::new(spec.clone(), *class), x, trials, seed, opts),
        Target::Words(d) => suite(WordGenerator::new(d.clone()), x, trials, seed, opts),
        Target::Shuffle(l, r) => suite(ShuffleLanguage::new(l.clone(), r.clone()), x, trials, seed, opts),
    };
    Report { checks, seed, trials }
}

fn suite<G>(g: G, x: f64, trials: usize, seed: u64, opts: &SuiteOptions) -> Vec<CheckResult>
where
    G: Subject,
    G::Object: Send,
{
    let mut out = Vec::new();
    let alpha = opts.alpha;

    // coefficients against enumeration
    const ENUM: &str = "coefficients-vs-enumeration";
    let coeffs = match g.coefficients(oracle::DEFAULT_ORDER) {
        Ok(c) => Some(c),
        Err(e) => {
            out.push(CheckResult::failed(ENUM, &e));
            None
        }
    };
    if let Some(c) = &coeffs {
        out.push(enumeration_check(&g, c));
    }

    // EGF routes
    const EGF: &str = "egf-agreement";
    let egf = g.egf_direct(x);
    match (&egf, &coeffs) {
        (Err(e), _) => out.push(CheckResult::failed(EGF, e)),
        (Ok(d), Some(c)) => match oracle::egf_eval_series(c, x, 1e-6) {
            Ok(s) => out.push(CheckResult::verdict(
                EGF,
                d.agrees_with(&s),
                format!("{:?} {} ± {:e}, series {} ± {:e}", d.method, d.value, d.error, s.value, s.error),
            )),
            Err(e) => out.push(CheckResult::skipped(
                EGF,
                format!("{:?} {}; series route unavailable ({})", d.method, d.value, e.kind()),
            )),
        },
        (Ok(_), None) => out.push(CheckResult::skipped(EGF, "no coefficients")),
    }

    // exponential size law
    const EXP: &str = "exponential-size-law";
    let mut exp_objects: Vec<G::Object> = Vec::new();
    if trials == 0 {
        out.push(CheckResult::skipped(EXP, "trials = 0"));
    } else if let Ok(d) = &egf {
        let run = || -> Result<(Vec<G::Object>, Vec<f64>)> {
            let objects = fan_out(trials, opts.workers, seed, 1_000, |n, mut rng| g.sample_many(x, n, &mut rng))?;
            let law = size_law(&g, d.value, |a, n| egf_term(a, x, n), 4096)?;
            Ok((objects, law))
        };
        match run() {
            Ok((objects, law)) => {
                let sizes: Vec<usize> = objects.iter().map(G::object_size).collect();
                out.push(size_check(EXP, &sizes, &law, seed, alpha));
                exp_objects = objects;
            }
            Err(e) => out.push(CheckResult::failed(EXP, &e)),
        }
    } else {
        out.push(CheckResult::skipped(EXP, "EGF unavailable at x"));
    }

    // ordinary construction and OGF routes
    const OGF: &str = "ogf-agreement";
    let dependents = [
        "density-normalization",
        "ordinary-size-law",
        "gamma-moments",
        "strategy-equivalence",
    ];
    let sampler = match ord_transform::build_ordinary(g.clone(), x, Strategy::Mixture, RandomSource::derive(seed, 0)) {
        Ok(s) => s,
        Err(e) => {
            out.push(CheckResult::failed(OGF, &e));
            for d in dependents {
                out.push(CheckResult::skipped(d, format!("ordinary sampler unavailable ({})", e.kind())));
            }
            out.push(uniformity_check::<G>(&coeffs, &exp_objects, alpha, "exponential"));
            return out;
        }
    };
    let (s, l) = (sampler.ogf(), sampler.ogf_laplace());
    let mut detail = format!("series {} ± {:e}, laplace {} ± {:e}", s.value, s.error, l.value, l.error);
    let mut ok = s.agrees_with(&l);
    match g.ogf_extra(x) {
        Some(Ok(r)) => {
            detail += &format!(", rational {} ± {:e}", r.value, r.error);
            ok &= r.agrees_with(&s) && r.agrees_with(&l);
        }
        Some(Err(e)) => {
            detail += &format!(", rational failed ({})", e.kind());
            ok = false;
        }
        None => {}
    }
    out.push(CheckResult::verdict(OGF, ok, detail));

    const NORM: &str = "density-normalization";
    match sampler.density_mass() {
        Ok((q, cut)) => out.push(CheckResult::verdict(
            NORM,
            (q.value - 1.0).abs() <= 1e-8,
            format!("mass {} on [0, {cut}] (quadrature error {:e})", q.value, q.error),
        )),
        Err(e) => out.push(CheckResult::failed(NORM, &e)),
    }

    if trials == 0 {
        for d in ["ordinary-size-law", "gamma-moments", "strategy-equivalence", "conditional-uniformity"] {
            out.push(CheckResult::skipped(d, "trials = 0"));
        }
        return out;
    }

    const ORD: &str = "ordinary-size-law";
    let ord_draws = |strategy_sampler: &OrdinarySampler<G>, base: u64| {
        fan_out(trials, opts.workers, seed, base, |n, rng| {
            let mut s = strategy_sampler.fork(rng);
            (0..n).map(|_| s.sample().map(|d| d.object)).collect::<Result<Vec<_>>>()
        })
    };
    let mut ord_sizes = Vec::new();
    let mut ord_objects = Vec::new();
    match ord_draws(&sampler, 2_000).and_then(|objs| {
        let law = size_law(&g, 1.0, |a, n| series::scaled(a, x, n) / s.value, 4096)?;
        Ok((objs, law))
    }) {
        Ok((objects, law)) => {
            ord_sizes = objects.iter().map(G::object_size).collect();
            out.push(size_check(ORD, &ord_sizes, &law, seed, alpha));
            ord_objects = objects;
        }
        Err(e) => out.push(CheckResult::failed(ORD, &e)),
    }

    out.push(gamma_check(&sampler, trials.min(50_000), seed));
    out.push(strategy_check(&g, x, trials, seed, &ord_sizes, &ord_draws));
    out.push(uniformity_check::<G>(&coeffs, &ord_objects, alpha, "ordinary"));
    out
}

fn enumeration_check<G: Subject>(g: &G, c: &SeriesCoeffs) -> CheckResult
where
    G::Object: Send,
{
    const NAME: &str = "coefficients-vs-enumeration";
    let mut found = Vec::new();
    for n in 0..=SUITE_ENUMERATION {
        let objects = match g.enumerate(n) {
            Ok(o) => o,
            Err(e) => return CheckResult::failed(NAME, &e),
        };
        let distinct: HashSet<&String> = objects.iter().collect();
        if distinct.len() != objects.len() {
            return CheckResult::verdict(NAME, false, format!("enumeration of size {n} has duplicates"));
        }
        if BigUint::from(objects.len()) != c.counts()[n] {
            return CheckResult::verdict(
                NAME,
                false,
                format!("size {n}: {} enumerated, coefficient {}", objects.len(), c.counts()[n]),
            );
        }
        found.push(objects.len());
    }
    CheckResult::pass(NAME, format!("counts {found:?} for sizes 0..={SUITE_ENUMERATION}"))
}

fn gamma_check<G: ExponentialGenerator>(sampler: &OrdinarySampler<G>, draws: usize, seed: u64) -> CheckResult {
    const NAME: &str = "gamma-moments";
    if !matches!(**sampler.strategy(), UDrawStrategy::Mixture(_)) {
        return CheckResult::skipped(NAME, "not a mixture sampler");
    }
    let mut s = sampler.fork(RandomSource::derive(seed, 4_000));
    let mut by_component: HashMap<usize, (f64, usize)> = HashMap::new();
    for _ in 0..draws {
        match s.draw_u_detailed() {
            Ok(d) => {
                let e = by_component.entry(d.component.unwrap_or(0)).or_insert((0.0, 0));
                e.0 += d.u;
                e.1 += 1;
            }
            Err(e) => return CheckResult::failed(NAME, &e),
        }
    }
    let Some((&k, &(sum, count))) = by_component.iter().max_by_key(|(k, (_, c))| (*c, usize::MAX - **k)) else {
        return CheckResult::skipped(NAME, "no draws");
    };
    // Gamma(k+1): mean and variance k+1
    let shape = k as f64 + 1.0;
    let mean = sum / count as f64;
    let sigma = (shape / count as f64).sqrt();
    CheckResult::verdict(
        NAME,
        (mean - shape).abs() <= 3.0 * sigma,
        format!("component {k}: mean u {mean:.5} over {count} draws, expected {shape} (3 sigma = {:.5})", 3.0 * sigma),
    )
}

fn strategy_check<G>(
    g: &G,
    x: f64,
    trials: usize,
    seed: u64,
    mixture_sizes: &[usize],
    draws: &dyn Fn(&OrdinarySampler<G>, u64) -> Result<Vec<G::Object>>,
) -> CheckResult
where
    G: Subject,
    G::Object: Send,
{
    const NAME: &str = "strategy-equivalence";
    if mixture_sizes.is_empty() {
        return CheckResult::skipped(NAME, "no mixture draws");
    }
    let inv = match ord_transform::build_ordinary(g.clone(), x, Strategy::InverseCdf, RandomSource::derive(seed, 0)) {
        Ok(s) => s,
        Err(e) => return CheckResult::failed(NAME, &e),
    };
    let objects = match draws(&inv, 3_000) {
        Ok(o) => o,
        Err(e) => return CheckResult::failed(NAME, &e),
    };
    let cutoff = mixture_sizes.iter().copied().max().unwrap_or(0).max(objects.iter().map(G::object_size).max().unwrap_or(0)) + 1;
    let mut a = Histogram::new(cutoff, seed, "mixture");
    a.extend(mixture_sizes.iter().copied());
    let mut b = Histogram::new(cutoff, seed, "invcdf");
    b.extend(objects.iter().map(G::object_size));
    let tv = total_variation(&a, &b);
    // 0.01 at 10^5 draws each, widened with the sampling noise below that
    let threshold = 0.01 * (100_000.0 / trials as f64).sqrt().max(1.0);
    let mut c = CheckResult::verdict(NAME, tv < threshold, format!("total variation {tv:.5} (threshold {threshold:.4})"));
    c.statistic = Some(tv);
    c
}

fn uniformity_check<G>(coeffs: &Option<SeriesCoeffs>, objects: &[G::Object], alpha: f64, path: &str) -> CheckResult
where
    G: Subject,
    G::Object: Send,
{
    const NAME: &str = "conditional-uniformity";
    if objects.is_empty() {
        return CheckResult::skipped(NAME, "no draws");
    }
    let Some(c) = coeffs else {
        return CheckResult::skipped(NAME, "no coefficients");
    };
    let mut by_size: HashMap<usize, HashMap<String, u64>> = HashMap::new();
    for o in objects {
        let n = G::object_size(o);
        if n <= MAX_ENUMERATION {
            *by_size.entry(n).or_default().entry(G::key(o)).or_default() += 1;
        }
    }
    // the size with the most draws per object, among 2..=256 objects
    let best = (1..=MAX_ENUMERATION.min(c.order()))
        .filter_map(|n| {
            let a = c.counts()[n].to_u64()?;
            let drawn = by_size.get(&n).map_or(0, |m| m.values().sum::<u64>());
            ((2..=256).contains(&a) && drawn as f64 >= MIN_EXPECTED * a as f64).then_some((n, a, drawn))
        })
        .max_by(|p, q| (p.2 as f64 / p.1 as f64).total_cmp(&(q.2 as f64 / q.1 as f64)));
    let Some((n, a, drawn)) = best else {
        return CheckResult::skipped(NAME, "no size with at least 5 draws per object");
    };
    let seen = &by_size[&n];
    if seen.len() as u64 > a {
        return CheckResult::verdict(NAME, false, format!("{} distinct objects of size {n}, only {a} exist", seen.len()));
    }
    let mut observed: Vec<u64> = seen.values().copied().collect();
    observed.sort_unstable();
    observed.resize(a as usize, 0);
    let law = vec![1.0 / a as f64; a as usize];
    match chi_square_counts(&observed, &law) {
        Ok(r) => CheckResult::chi2(NAME, &r, alpha, format!("{drawn} {path} draws of size {n} over {a} objects")),
        Err(e) => CheckResult::failed(NAME, &e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::load_spec;

    fn spec(src: &str) -> (ValidatedSpec, ClassId) {
        let s = load_spec(src).unwrap();
        let root = s.system().root();
        (s, root)
    }

    fn count(src: &str, n: usize) -> usize {
        let (s, c) = spec(src);
        let objs = enumerate_objects(&s, c, n).unwrap();
        let distinct: HashSet<_> = objs.iter().collect();
        assert_eq!(distinct.len(), objs.len(), "duplicates in {src} at {n}");
        assert!(objs.iter().all(|o| o.size == n));
        objs.len()
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(count("A = SET(Z)", 3), 1);
        assert_eq!(count("P = SET(SET>=1(Z))", 3), 5);
        assert_eq!(count("T = Z * SET(T)", 3), 9);
        let bell: Vec<usize> = (0..6).map(|n| count("P = SET(SET>=1(Z))", n)).collect();
        assert_eq!(bell, [1, 1, 2, 5, 15, 52]);
        let trees: Vec<usize> = (0..5).map(|n| count("T = Z * SET(T)", n)).collect();
        assert_eq!(trees, [0, 1, 2, 9, 64]);
        assert_eq!(count("P = SET(CYC(Z))", 4), 24);
        assert_eq!(count("D = SET(CYC>=2(Z))", 4), 9);
        assert_eq!(count("S = SEQ>=2(Z)", 3), 6);
        let (s, c) = spec("A = SET(Z)");
        assert!(matches!(enumerate_objects(&s, c, 9), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn enumeration_matches_counts() {
        for src in [
            "P = SET(SET>=1(Z))",
            "T = Z * SET(T)",
            "B = Z + B * B",
            "M = Z * (1 + M + M * M)",
            "A = SEQ(Z<a> + Z<b>)",
            "S = SET>=2(CYC(Z))",
        ] {
            let (s, c) = spec(src);
            let coeffs = oracle::egf_coeffs(&s, c, 6).unwrap();
            for n in 0..=6 {
                assert_eq!(BigUint::from(count(src, n)), coeffs.counts()[n], "{src} at {n}");
            }
        }
    }

    #[test]
    fn proportional_histogram_has_zero_statistic() {
        let law = [0.5, 0.25, 0.125, 0.125];
        let r = chi_square_counts(&[400, 200, 100, 100], &law).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 3);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_unnormalized_laws() {
        assert!(matches!(chi_square_counts(&[10], &[1.0]), Err(Error::DegenerateLaw)));
        // all mass in expected counts too small to split
        assert!(matches!(chi_square_counts(&[2, 1], &[0.5, 0.5]), Err(Error::DegenerateLaw)));
        assert!(matches!(
            chi_square_counts(&[10, 10], &[0.5, 0.4]),
            Err(Error::LawNotNormalized { .. })
        ));
    }

    #[test]
    fn tail_buckets_merge_inward() {
        // expected: 50, 30, 15, 4, 1 -> the last two merge
        let law = [0.5, 0.3, 0.15, 0.04, 0.01];
        let r = chi_square_counts(&[50, 30, 15, 4, 1], &law).unwrap();
        assert_eq!(r.groups, vec![[0, 0], [1, 1], [2, 2], [3, 4]]);
        assert_eq!(r.dof, 3);
        let law = [0.5, 0.3, 0.17, 0.02, 0.01];
        let r = chi_square_counts(&[50, 30, 17, 2, 1], &law).unwrap();
        assert_eq!(r.groups, vec![[0, 0], [1, 1], [2, 4]]);
        // leftover at the head joins its neighbour
        let law = [0.01, 0.49, 0.5];
        let r = chi_square_counts(&[1, 49, 50], &law).unwrap();
        assert_eq!(r.groups, vec![[0, 1], [2, 2]]);
    }

    #[test]
    fn statistic_scales_and_ignores_relabeling() {
        let law = [0.4, 0.3, 0.2, 0.1];
        let obs = [380u64, 320, 190, 110];
        let r = chi_square_counts(&obs, &law).unwrap();
        let doubled: Vec<u64> = obs.iter().map(|c| 2 * c).collect();
        let r2 = chi_square_counts(&doubled, &law).unwrap();
        assert!((r2.statistic - 2.0 * r.statistic).abs() < 1e-12);
        let perm = [2usize, 0, 3, 1];
        let lp: Vec<f64> = perm.iter().map(|&i| law[i]).collect();
        let op: Vec<u64> = perm.iter().map(|&i| obs[i]).collect();
        let rp = chi_square_counts(&op, &lp).unwrap();
        assert!((rp.statistic - r.statistic).abs() < 1e-12);
    }

    #[test]
    fn histograms_merge() {
        let mut a = Histogram::new(3, 1, "a");
        a.extend([0, 1, 5, 7]);
        let mut b = Histogram::new(3, 1, "b");
        b.extend([2, 3]);
        a.merge(&b).unwrap();
        assert_eq!(a.counts, vec![1, 1, 1, 3]);
        assert_eq!(a.total, a.counts.iter().sum::<u64>());
        assert!(a.merge(&Histogram::new(4, 1, "c")).is_err());
        assert_eq!(fold_law(&[0.5, 0.25, 0.125, 0.0625, 0.0625], 2), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn suite_on_sets_of_atoms() {
        let (s, c) = spec("A = SET(Z)");
        let r = run_check_suite(&Target::Spec { spec: s, class: c }, 0.5, 20_000, 42);
        assert!(r.passed(), "{}", serde_json::to_string_pretty(&r).unwrap());
        // one object per size: nothing to compare within a size
        assert_eq!(r.check("conditional-uniformity").unwrap().status, Status::Skipped);
        let passed = r.checks.iter().filter(|c| c.status == Status::Pass).count();
        assert_eq!(passed, r.checks.len() - 1, "{:?}", r.checks);
    }

    #[test]
    fn suite_without_trials_is_analytic() {
        let (s, c) = spec("A = SET(Z)");
        let r = run_check_suite(&Target::Spec { spec: s, class: c }, 0.5, 0, 1);
        assert!(r.passed());
        for name in ["exponential-size-law", "ordinary-size-law", "strategy-equivalence", "conditional-uniformity"] {
            assert_eq!(r.check(name).unwrap().status, Status::Skipped, "{name}");
        }
        assert_eq!(r.check("density-normalization").unwrap().status, Status::Pass);
    }

    #[test]
    fn suite_reports_divergence() {
        let (s, c) = spec("S = SEQ(Z)");
        let r = run_check_suite(&Target::Spec { spec: s, class: c }, 0.1, 5_000, 3);
        assert!(!r.passed());
        assert!(r.failed_on_divergence_only());
        assert_eq!(r.check("ogf-agreement").unwrap().error.as_deref(), Some("DivergentOGF"));
        assert_eq!(r.check("exponential-size-law").unwrap().status, Status::Pass);
    }

    #[test]
    fn suite_on_words_and_shuffle() {
        let binary = Dfa::from_json(r#"{"alphabet":["a","b"],"states":1,"start":0,"accept":[0],"delta":{"0,a":0,"0,b":0}}"#).unwrap();
        let opts = SuiteOptions { workers: 3, alpha: ALPHA };
        let r = run_check_suite_with(&Target::Words(binary), 0.25, 20_000, 5, &opts);
        assert!(r.passed(), "{}", serde_json::to_string_pretty(&r).unwrap());
        let a = Dfa::new(vec!['a'], 0, vec![true], vec![vec![0]]).unwrap();
        let b = Dfa::new(vec!['b'], 0, vec![true], vec![vec![0]]).unwrap();
        let r = run_check_suite_with(&Target::Shuffle(a, b), 0.25, 20_000, 5, &opts);
        assert!(r.passed(), "{}", serde_json::to_string_pretty(&r).unwrap());
    }

    #[test]
    fn fan_out_is_deterministic() {
        let draw = |n: usize, mut rng: RandomSource| Ok((0..n).map(|_| rng.below(1000)).collect());
        let a: Vec<u64> = fan_out(100, 4, 9, 0, draw).unwrap();
        let b: Vec<u64> = fan_out(100, 4, 9, 0, draw).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
    }

    /// Slow: 200 runs of the ordinary check.
    #[test]
    #[ignore]
    fn p_values_are_roughly_uniform() {
        let (s, c) = spec("A = SET(Z)");
        let g = SpecGenerator::new(s, c);
        let sampler = ord_transform::build_ordinary(g, 0.5, Strategy::Mixture, RandomSource::new(0)).unwrap();
        let law: Vec<f64> = (0..64).map(|n| 0.5f64.powi(n + 1)).collect();
        let mut small = 0;
        for run in 0..200 {
            let mut s = sampler.fork(RandomSource::new(10_000 + run));
            let sizes: Vec<usize> = (0..10_000).map(|_| s.sample().unwrap().object.size).collect();
            let c = size_check("ordinary", &sizes, &law, run, ALPHA);
            if c.p_value.unwrap() < 0.01 {
                small += 1;
            }
        }
        assert!(small as f64 / 200.0 <= 0.05, "{small} of 200 runs below 0.01");
    }
}
