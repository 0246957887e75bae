//! Word classes defined by deterministic automata, and their shuffle.
//!
//! A word of length `n` is read as a labeled object whose positions carry
//! the labels `1..n` in order, so a language with `a_n` words of length `n`
//! has EGF `Σ a_n x^n / n!`. The shuffle of two languages then has the
//! product EGF: its objects are annotated interleavings (left word, right
//! word, set of positions taken from the left), counted with multiplicity.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::RwLock;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_sampler::ExponentialGenerator;
use crate::oracle::{self, EvalResult, Method, SeriesCoeffs};
use crate::ord_transform::{self, OrdinarySampler, Strategy};
use crate::rng::RandomSource;
use crate::series;

/// Longest word length the exponential length table may reach.
pub const N_MAX: usize = 4096;

/// Length-law mass left outside the inversion table.
pub const LENGTH_TAIL: f64 = 1e-12;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDfa {
    alphabet: Vec<String>,
    states: usize,
    start: usize,
    accept: Vec<usize>,
    delta: HashMap<String, usize>,
}

/// Complete deterministic automaton with every state reachable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    alphabet: Vec<char>,
    start: usize,
    accept: Vec<bool>,
    /// `delta[state][letter]`
    delta: Vec<Vec<usize>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDfa(msg.into())
}

impl Dfa {
    /// Checks totality and prunes unreachable states.
    pub fn new(alphabet: Vec<char>, start: usize, accept: Vec<bool>, delta: Vec<Vec<usize>>) -> Result<Self> {
        let k = delta.len();
        if k == 0 {
            return Err(invalid("no states"));
        }
        if start >= k {
            return Err(invalid(format!("start state {start} out of range")));
        }
        if accept.len() != k {
            return Err(invalid("accepting flags do not cover every state"));
        }
        for (i, c) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(c) {
                return Err(invalid(format!("letter {c:?} repeated")));
            }
        }
        for (s, row) in delta.iter().enumerate() {
            if row.len() != alphabet.len() {
                return Err(invalid(format!("state {s} lacks transitions")));
            }
            if let Some(t) = row.iter().find(|&&t| t >= k) {
                return Err(invalid(format!("transition from {s} to missing state {t}")));
            }
        }

        let mut index = vec![usize::MAX; k];
        let mut order = vec![start];
        index[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for &t in &delta[s] {
                if index[t] == usize::MAX {
                    index[t] = order.len();
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        Ok(Dfa {
            alphabet,
            start: 0,
            accept: order.iter().map(|&s| accept[s]).collect(),
            delta: order.iter().map(|&s| delta[s].iter().map(|&t| index[t]).collect()).collect(),
        })
    }

    /// Reads the JSON form
    /// `{"alphabet":["a","b"],"states":K,"start":0,"accept":[..],"delta":{"s,letter":t}}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawDfa = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let mut alphabet = Vec::with_capacity(raw.alphabet.len());
        for l in &raw.alphabet {
            let mut chars = l.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c != ',' => alphabet.push(c),
                _ => return Err(invalid(format!("letter {l:?} is not a single character"))),
            }
        }
        let mut accept = vec![false; raw.states];
        for &a in &raw.accept {
            *accept
                .get_mut(a)
                .ok_or_else(|| invalid(format!("accepting state {a} out of range")))? = true;
        }
        let mut delta = vec![vec![usize::MAX; alphabet.len()]; raw.states];
        for (key, &t) in &raw.delta {
            let (s, l) = key
                .split_once(',')
                .ok_or_else(|| invalid(format!("transition key {key:?} is not \"state,letter\"")))?;
            let s: usize = s
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad state in transition key {key:?}")))?;
            let l = l.trim();
            let li = alphabet
                .iter()
                .position(|c| l.chars().eq(std::iter::once(*c)))
                .ok_or_else(|| invalid(format!("unknown letter in transition key {key:?}")))?;
            if s >= raw.states {
                return Err(invalid(format!("transition key {key:?} names a missing state")));
            }
            delta[s][li] = t;
        }
        for (s, row) in delta.iter().enumerate() {
            if let Some(li) = row.iter().position(|&t| t == usize::MAX) {
                return Err(invalid(format!(
                    "transition function is partial: no move from {s} on {:?}",
                    alphabet[li]
                )));
            }
        }
        Dfa::new(alphabet, raw.start, accept, delta)
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    /// States left after pruning.
    pub fn states(&self) -> usize {
        self.delta.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accept[state]
    }

    pub fn next(&self, state: usize, letter: usize) -> usize {
        self.delta[state][letter]
    }

    pub fn accepts(&self, word: &[char]) -> bool {
        let mut s = self.start;
        for c in word {
            match self.alphabet.iter().position(|a| a == c) {
                Some(l) => s = self.delta[s][l],
                None => return false,
            }
        }
        self.accept[s]
    }
}

/// `w[n][s]`: accepted words of length `n` read from state `s`.
fn extend_rows(dfa: &Dfa, rows: &mut Vec<Vec<BigUint>>, n: usize) {
    if rows.is_empty() {
        rows.push(dfa.accept.iter().map(|&a| BigUint::from(a as u8)).collect());
    }
    while rows.len() <= n {
        let prev = rows.last().expect("row 0 present");
        let row = dfa
            .delta
            .iter()
            .map(|moves| moves.iter().map(|&t| &prev[t]).sum())
            .collect();
        rows.push(row);
    }
}

/// Number of accepted words of each length `0..=order`.
pub fn count_words(dfa: &Dfa, order: usize) -> SeriesCoeffs {
    let mut rows = Vec::new();
    extend_rows(dfa, &mut rows, order);
    SeriesCoeffs::from_counts("L", rows.into_iter().map(|r| r[dfa.start].clone()).collect())
}

/// States from which some accepting state is reachable.
fn live_states(dfa: &Dfa) -> Vec<bool> {
    let mut live = dfa.accept.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..dfa.states() {
            if !live[s] && dfa.delta[s].iter().any(|&t| live[t]) {
                live[s] = true;
                changed = true;
            }
        }
    }
    live
}

/// Gauss–Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>], x: f64) -> Result<Vec<Vec<f64>>> {
    let k = a.len();
    let norm = a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..k {
        let p = (col..k)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .expect("nonempty");
        if aug[p][col].abs() <= 1e-13 * norm {
            return Err(Error::SingularSystem { x });
        }
        aug.swap(col, p);
        for i in 0..k {
            if i != col {
                let f = aug[i][col] / aug[col][col];
                if f != 0.0 {
                    for j in col..2 * k {
                        aug[i][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    Ok((0..k).map(|i| aug[i][k..].iter().map(|v| v / aug[i][i]).collect()).collect())
}

/// `A(x)` of the language as the start component of the solution of
/// `v = acc + xMv`, restricted to states that can still accept (dead
/// states contribute nothing and would only add spurious poles).
pub fn ogf_rational_eval(dfa: &Dfa, x: f64) -> Result<EvalResult> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be a finite nonnegative real, got {x}")));
    }
    let coeffs = count_words(dfa, oracle::DEFAULT_ORDER);
    let growth = oracle::growth_estimate(&coeffs);
    // reuse the series guard so both routes refuse the same x
    oracle::ogf_eval_series(&coeffs, &growth, x)?;

    let live = live_states(dfa);
    if !live[dfa.start] {
        return Ok(EvalResult {
            value: 0.0,
            error: 0.0,
            method: Method::Rational,
        });
    }
    let states: Vec<usize> = (0..dfa.states()).filter(|&s| live[s]).collect();
    let mut index = vec![usize::MAX; dfa.states()];
    for (i, &s) in states.iter().enumerate() {
        index[s] = i;
    }
    let k = states.len();
    let mut a = vec![vec![0.0; k]; k];
    for (i, &s) in states.iter().enumerate() {
        a[i][i] += 1.0;
        for &t in &dfa.delta[s] {
            if live[t] {
                a[i][index[t]] -= x;
            }
        }
    }
    let b: Vec<f64> = states.iter().map(|&s| dfa.accept[s] as u8 as f64).collect();
    let inv = invert(&a, x)?;
    let v: Vec<f64> = inv.iter().map(|r| r.iter().zip(&b).map(|(p, q)| p * q).sum()).collect();

    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..k {
        let (r, mag) = (0..k).fold((b[i], b[i]), |(r, m), j| (r - a[i][j] * v[j], m + (a[i][j] * v[j]).abs()));
        residual = residual.max(r.abs());
        scale = scale.max(mag);
    }
    let inv_norm = inv.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let bound = inv_norm * (residual + (k as f64 + 2.0) * f64::EPSILON * scale);
    Ok(EvalResult {
        value: v[index[dfa.start]],
        error: bound,
        method: Method::Rational,
    })
}

/// A word over the automaton's alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordObject {
    pub letters: Vec<char>,
}

impl WordObject {
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "size": self.len(), "word": self.to_string() })
    }
}

impl fmt::Display for WordObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.letters.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

struct Tables {
    rows: Vec<Vec<BigUint>>,
    ln_counts: Vec<f64>,
}

/// Exponential sampler for the words of a [`Dfa`].
pub struct WordGenerator {
    dfa: Dfa,
    tables: RwLock<Tables>,
}

impl fmt::Debug for WordGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WordGenerator").field("dfa", &self.dfa).finish()
    }
}

impl Clone for WordGenerator {
    fn clone(&self) -> Self {
        WordGenerator::new(self.dfa.clone())
    }
}

impl WordGenerator {
    pub fn new(dfa: Dfa) -> Self {
        WordGenerator {
            dfa,
            tables: RwLock::new(Tables {
                rows: Vec::new(),
                ln_counts: Vec::new(),
            }),
        }
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    fn ensure(&self, n: usize) {
        if self.tables.read().expect("table lock").rows.len() > n {
            return;
        }
        let mut t = self.tables.write().expect("table lock");
        extend_rows(&self.dfa, &mut t.rows, n);
        let start = self.dfa.start;
        while t.ln_counts.len() < t.rows.len() {
            let m = t.ln_counts.len();
            let l = series::ln_big(&t.rows[m][start]);
            t.ln_counts.push(l);
        }
    }

    /// Terms `a_n y^n / n!` until the remainder is below `LENGTH_TAIL`
    /// relative to their sum.
    ///
    /// Since `a_n <= |Σ|^n`, the remainder after `N` is at most
    /// `(|Σ|y)^{N+1} / (N+1)! / (1 - |Σ|y/(N+2))`.
    fn length_terms(&self, y: f64) -> Result<Vec<f64>> {
        if !(y >= 0.0 && y.is_finite()) {
            return Err(Error::Domain(format!("parameter must be a finite nonnegative real, got {y}")));
        }
        let sigma = self.dfa.alphabet.len() as f64;
        let sy = sigma * y;
        let ln_y = y.ln();
        let ln_sy = sy.ln();
        let mut terms: Vec<f64> = Vec::new();
        let mut sum = 0.0;
        let mut n = 0;
        let mut ln_fact = 0.0;
        loop {
            if n > N_MAX {
                return Err(Error::EgfDivergent {
                    x: y,
                    detail: format!("length table would exceed {N_MAX} entries"),
                });
            }
            self.ensure(n + 64);
            let t = self.tables.read().expect("table lock");
            while n < t.ln_counts.len() {
                let term = if y == 0.0 {
                    if n == 0 { t.ln_counts[0].exp() } else { 0.0 }
                } else {
                    (t.ln_counts[n] + n as f64 * ln_y - ln_fact).exp()
                };
                terms.push(term);
                sum += term;
                n += 1;
                ln_fact += (n as f64).ln();
                let remainder = if sy == 0.0 {
                    0.0
                } else if (n as f64 + 1.0) <= sy {
                    f64::INFINITY
                } else {
                    (n as f64 * ln_sy - ln_fact).exp() / (1.0 - sy / (n as f64 + 1.0))
                };
                if remainder <= LENGTH_TAIL * sum {
                    return Ok(terms);
                }
            }
        }
    }

    fn uniform_word(&self, n: usize, rng: &mut RandomSource) -> WordObject {
        self.ensure(n);
        let t = self.tables.read().expect("table lock");
        let mut s = self.dfa.start;
        let mut letters = Vec::with_capacity(n);
        for i in 0..n {
            let rest = n - i - 1;
            let mut v = rng.below_big(&t.rows[rest + 1][s]);
            for (l, &next) in self.dfa.delta[s].iter().enumerate() {
                let c = &t.rows[rest][next];
                if &v < c {
                    letters.push(self.dfa.alphabet[l]);
                    s = next;
                    break;
                }
                v -= c;
            }
        }
        debug_assert!(self.dfa.accept[s]);
        WordObject { letters }
    }

    /// Uniform accepted word of length `n`, or `None` when there is none.
    pub fn uniform_of_length(&self, n: usize, rng: &mut RandomSource) -> Option<WordObject> {
        self.ensure(n);
        let empty = self.tables.read().expect("table lock").rows[n][self.dfa.start].is_zero();
        (!empty).then(|| self.uniform_word(n, rng))
    }
}

impl ExponentialGenerator for WordGenerator {
    type Object = WordObject;

    fn egf(&self, y: f64) -> Result<f64> {
        Ok(self.length_terms(y)?.iter().sum())
    }

    fn coefficients(&self, order: usize) -> Result<SeriesCoeffs> {
        Ok(count_words(&self.dfa, order))
    }

    fn sample_at(&self, y: f64, rng: &mut RandomSource) -> Result<WordObject> {
        let terms = self.length_terms(y)?;
        let total: f64 = terms.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyLanguage);
        }
        let v = rng.unit() * total;
        let mut acc = 0.0;
        let mut n = terms.len() - 1;
        for (i, t) in terms.iter().enumerate() {
            acc += t;
            if v < acc {
                n = i;
                break;
            }
        }
        // rounding can leave v in the last zero-weight entries
        while terms[n] == 0.0 {
            n -= 1;
        }
        Ok(self.uniform_word(n, rng))
    }

    fn object_size(object: &WordObject) -> usize {
        object.len()
    }
}

/// One exponential draw of a word at parameter `x`.
pub fn exp_word_sampler(generator: &WordGenerator, x: f64, rng: &mut RandomSource) -> Result<WordObject> {
    generator.sample_at(x, rng)
}

/// An interleaving of a left and a right word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Interleaving {
    #[serde(serialize_with = "as_string")]
    pub left: WordObject,
    #[serde(serialize_with = "as_string")]
    pub right: WordObject,
    /// `pattern[i]` is true when position `i` comes from the left word.
    pub pattern: Vec<bool>,
}

fn as_string<S: serde::Serializer>(w: &WordObject, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(w)
}

impl Interleaving {
    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }

    pub fn merged(&self) -> WordObject {
        let (mut l, mut r) = (self.left.letters.iter(), self.right.letters.iter());
        let letters = self
            .pattern
            .iter()
            .map(|&from_left| *if from_left { l.next() } else { r.next() }.expect("pattern matches lengths"))
            .collect();
        WordObject { letters }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mask: String = self.pattern.iter().map(|&b| if b { 'L' } else { 'R' }).collect();
        serde_json::json!({
            "size": self.len(),
            "word": self.merged().to_string(),
            "left": self.left.to_string(),
            "right": self.right.to_string(),
            "pattern": mask,
        })
    }
}

/// Shuffle of two word languages.
#[derive(Clone, Debug)]
pub struct ShuffleLanguage {
    pub left: WordGenerator,
    pub right: WordGenerator,
}

impl ShuffleLanguage {
    pub fn new(left: Dfa, right: Dfa) -> Self {
        ShuffleLanguage {
            left: WordGenerator::new(left),
            right: WordGenerator::new(right),
        }
    }
}

impl ExponentialGenerator for ShuffleLanguage {
    type Object = Interleaving;

    fn egf(&self, y: f64) -> Result<f64> {
        Ok(self.left.egf(y)? * self.right.egf(y)?)
    }

    fn coefficients(&self, order: usize) -> Result<SeriesCoeffs> {
        let a = self.left.coefficients(order)?;
        let b = self.right.coefficients(order)?;
        Ok(SeriesCoeffs::from_counts(
            "L ⧢ R",
            series::binomial_convolution(a.counts(), b.counts()),
        ))
    }

    fn sample_at(&self, y: f64, rng: &mut RandomSource) -> Result<Interleaving> {
        let left = self.left.sample_at(y, rng)?;
        let right = self.right.sample_at(y, rng)?;
        let pattern = rng.subset(left.len() + right.len(), left.len());
        Ok(Interleaving { left, right, pattern })
    }

    fn object_size(object: &Interleaving) -> usize {
        object.len()
    }
}

/// One exponential draw from the shuffle at parameter `x`.
pub fn shuffle_exp_sampler(shuffle: &ShuffleLanguage, x: f64, rng: &mut RandomSource) -> Result<Interleaving> {
    shuffle.sample_at(x, rng)
}

/// Ordinary sampler for the shuffle, with size law `c_n x^n / C(x)`.
pub fn ordinary_shuffle_sampler(
    shuffle: ShuffleLanguage,
    x: f64,
    strategy: Strategy,
    rng: RandomSource,
) -> Result<OrdinarySampler<ShuffleLanguage>> {
    ord_transform::build_ordinary(shuffle, x, strategy, rng)
}
