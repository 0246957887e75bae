//! Exact counting sequences of labeled classes.
//!
//! Series are kept in the count basis `a_n = n! [z^n] Â(z)`, where the
//! labeled product is the binomial convolution and every constructor
//! stays in the integers:
//!
//! ```text
//! SEQ(f)  s_n = Σ_{i=1..n} C(n,i) f_i s_{n-i}            s_0 = 1
//! SET(f)  g_n = Σ_{i=0..n-1} C(n-1,i) f_{i+1} g_{n-1-i}   g_0 = 1
//! CYC(f)  l_n = Σ_{i=0..n-1} C(n-1,i) f_{i+1} s_{n-1-i}   l_0 = 0
//! ```
//!
//! Coefficients are produced one order at a time. Within an order, a class
//! may depend on the same order of another class only through a size-0
//! context, and validation rules out cycles of those, so a handful of
//! passes settles each order.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::spec::{ClassId, Collection, SpecExpr, ValidatedSpec};

#[derive(Debug, Clone)]
enum Kind {
    Epsilon,
    Atom,
    Union(usize, usize),
    Product(usize, usize),
    Collection { kind: Collection, inner: usize, min: u32 },
    Ref(ClassId),
}

#[derive(Debug, Clone)]
struct Node {
    kind: Kind,
    coef: Vec<BigInt>,
    /// SEQ(inner) for Seq/Cyc nodes, exp(inner) for Set nodes.
    base: Vec<BigInt>,
    /// `pows[j]` holds the labeled power inner^j, for 2 <= j <= needed.
    pows: Vec<Vec<BigInt>>,
}

impl Node {
    fn new(kind: Kind) -> Self {
        let npows = match &kind {
            Kind::Collection { kind: Collection::Seq, min, .. } => *min as usize + 1,
            Kind::Collection { min, .. } => *min as usize,
            _ => 0,
        };
        Node {
            kind,
            coef: Vec::new(),
            base: Vec::new(),
            pows: vec![Vec::new(); npows.max(2)],
        }
    }
}

/// Incremental exact counter for every class of a validated system.
#[derive(Debug, Clone)]
pub struct LabeledCounter {
    nodes: Vec<Node>,
    roots: Vec<usize>,
    /// C(n-1, .) and C(n, .) for the last computed order n.
    prev_row: Vec<BigInt>,
    row: Vec<BigInt>,
    orders: usize,
}

impl LabeledCounter {
    pub fn new(spec: &ValidatedSpec) -> Self {
        let system = spec.system();
        let mut nodes = Vec::new();
        let roots = system
            .classes()
            .map(|id| compile(system.expr(id), &mut nodes))
            .collect();
        LabeledCounter {
            nodes,
            roots,
            prev_row: Vec::new(),
            row: Vec::new(),
            orders: 0,
        }
    }

    /// Number of coefficients available per class.
    pub fn len(&self) -> usize {
        self.orders
    }

    pub fn is_empty(&self) -> bool {
        self.orders == 0
    }

    /// Makes coefficients `0..=n` available.
    pub fn extend_to(&mut self, n: usize) -> Result<()> {
        while self.orders <= n {
            self.step()?;
        }
        Ok(())
    }

    /// Counts `a_0..a_n` of a class.
    pub fn counts(&mut self, class: ClassId, n: usize) -> Result<Vec<BigUint>> {
        self.extend_to(n)?;
        Ok(self.nodes[self.roots[class.0]].coef[..=n]
            .iter()
            .map(|c| c.to_biguint().expect("labeled counts are nonnegative"))
            .collect())
    }

    fn step(&mut self) -> Result<()> {
        let n = self.orders;
        let next_row = pascal_next(&self.row);
        self.prev_row = std::mem::replace(&mut self.row, next_row);
        for node in &mut self.nodes {
            node.coef.push(BigInt::zero());
            node.base.push(BigInt::zero());
            for p in node.pows.iter_mut() {
                p.push(BigInt::zero());
            }
        }
        let max_passes = self.roots.len() + 2;
        for _ in 0..max_passes {
            let before: Vec<BigInt> = self.roots.iter().map(|&r| self.nodes[r].coef[n].clone()).collect();
            for i in 0..self.nodes.len() {
                self.compute(i, n);
            }
            let settled = self
                .roots
                .iter()
                .zip(&before)
                .all(|(&r, b)| &self.nodes[r].coef[n] == b);
            if settled {
                self.orders += 1;
                return Ok(());
            }
        }
        Err(Error::IllFounded {
            class: String::from("?"),
            reason: format!("coefficient {n} did not settle"),
        })
    }

    fn compute(&mut self, i: usize, n: usize) {
        let value = match self.nodes[i].kind.clone() {
            Kind::Epsilon => BigInt::from(u8::from(n == 0)),
            Kind::Atom => BigInt::from(u8::from(n == 1)),
            Kind::Union(l, r) => &self.nodes[l].coef[n] + &self.nodes[r].coef[n],
            Kind::Product(l, r) => convolve_at(&self.row, &self.nodes[l].coef, &self.nodes[r].coef, n),
            Kind::Ref(c) => self.nodes[self.roots[c.0]].coef[n].clone(),
            Kind::Collection { kind, inner, min } => self.collection_at(i, kind, inner, min, n),
        };
        self.nodes[i].coef[n] = value;
    }

    fn collection_at(&mut self, i: usize, kind: Collection, inner: usize, min: u32, n: usize) -> BigInt {
        let f = self.nodes[inner].coef.clone();
        let node = &mut self.nodes[i];
        let min = min as usize;

        // labeled powers inner^j, j >= 2; inner^1 is `f` itself
        for j in 2..node.pows.len() {
            let (lower, upper) = node.pows.split_at_mut(j);
            let prev: &[BigInt] = if j == 2 { &f } else { &lower[j - 1] };
            upper[0][n] = convolve_at(&self.row, &f, prev, n);
        }
        let power_at = |node: &Node, j: usize| -> BigInt {
            match j {
                0 => BigInt::from(u8::from(n == 0)),
                1 => f[n].clone(),
                _ => node.pows[j][n].clone(),
            }
        };

        match kind {
            Collection::Seq => {
                node.base[n] = if n == 0 {
                    BigInt::one()
                } else {
                    (1..=n).map(|k| &self.row[k] * &f[k] * &node.base[n - k]).sum()
                };
                match min {
                    0 => node.base[n].clone(),
                    _ => {
                        let pk: Vec<BigInt> = (0..=n).map(|m| power_coef(node, &f, min, m)).collect();
                        convolve_at(&self.row, &pk, &node.base, n)
                    }
                }
            }
            Collection::Set => {
                node.base[n] = if n == 0 {
                    BigInt::one()
                } else {
                    (0..n).map(|k| &self.prev_row[k] * &f[k + 1] * &node.base[n - 1 - k]).sum()
                };
                let mut value = node.base[n].clone();
                let mut fact = BigInt::one();
                for j in 0..min {
                    if j > 0 {
                        fact *= j;
                    }
                    let (q, r) = power_at(node, j).div_rem(&fact);
                    debug_assert!(r.is_zero());
                    value -= q;
                }
                value
            }
            Collection::Cyc => {
                node.base[n] = if n == 0 {
                    BigInt::one()
                } else {
                    (1..=n).map(|k| &self.row[k] * &f[k] * &node.base[n - k]).sum()
                };
                let mut value = if n == 0 {
                    BigInt::zero()
                } else {
                    (0..n).map(|k| &self.prev_row[k] * &f[k + 1] * &node.base[n - 1 - k]).sum()
                };
                for j in 1..min {
                    let (q, r) = power_at(node, j).div_rem(&BigInt::from(j));
                    debug_assert!(r.is_zero());
                    value -= q;
                }
                value
            }
        }
    }
}

fn power_coef(node: &Node, f: &[BigInt], j: usize, m: usize) -> BigInt {
    match j {
        0 => BigInt::from(u8::from(m == 0)),
        1 => f[m].clone(),
        _ => node.pows[j][m].clone(),
    }
}

fn compile(e: &SpecExpr, nodes: &mut Vec<Node>) -> usize {
    let kind = match e {
        SpecExpr::Epsilon => Kind::Epsilon,
        SpecExpr::Atom(_) => Kind::Atom,
        SpecExpr::Union(l, r) => {
            let l = compile(l, nodes);
            let r = compile(r, nodes);
            Kind::Union(l, r)
        }
        SpecExpr::Product(l, r) => {
            let l = compile(l, nodes);
            let r = compile(r, nodes);
            Kind::Product(l, r)
        }
        SpecExpr::Collection { kind, inner, min } => {
            let inner = compile(inner, nodes);
            Kind::Collection {
                kind: *kind,
                inner,
                min: *min,
            }
        }
        SpecExpr::Ref(c) => Kind::Ref(*c),
    };
    nodes.push(Node::new(kind));
    nodes.len() - 1
}

fn pascal_next(row: &[BigInt]) -> Vec<BigInt> {
    if row.is_empty() {
        return vec![BigInt::one()];
    }
    let mut next = Vec::with_capacity(row.len() + 1);
    next.push(BigInt::one());
    for k in 1..row.len() {
        next.push(&row[k - 1] + &row[k]);
    }
    next.push(BigInt::one());
    next
}

/// Coefficient `n` of the labeled product of two count sequences.
fn convolve_at(row: &[BigInt], a: &[BigInt], b: &[BigInt], n: usize) -> BigInt {
    (0..=n)
        .filter(|&k| !a[k].is_zero() && !b[n - k].is_zero())
        .map(|k| &row[k] * &a[k] * &b[n - k])
        .sum()
}

/// Binomial convolution `c_n = Σ_k C(n,k) a_k b_{n-k}`: the counts of the
/// labeled product (equivalently, the shuffle of two word classes).
pub fn binomial_convolution(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    let len = a.len().min(b.len());
    let mut out = Vec::with_capacity(len);
    let mut row = vec![BigUint::one()];
    for n in 0..len {
        if n > 0 {
            let mut next = Vec::with_capacity(n + 1);
            next.push(BigUint::one());
            for k in 1..n {
                next.push(&row[k - 1] + &row[k]);
            }
            next.push(BigUint::one());
            row = next;
        }
        out.push((0..=n).map(|k| &row[k] * &a[k] * &b[n - k]).sum());
    }
    out
}

/// Exact `n!`.
pub fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// Natural log of a big integer; `-inf` for zero.
pub fn ln_big(a: &BigUint) -> f64 {
    if a.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = a.bits();
    if bits <= 1000 {
        return num_traits::ToPrimitive::to_f64(a).unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top: BigUint = a >> shift;
    let top = num_traits::ToPrimitive::to_f64(&top).unwrap_or(f64::MAX);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln Γ(n+1)`, exact summation for small `n`.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 256 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        crate::special::ln_gamma(n as f64 + 1.0)
    }
}

/// `a * x^n` in floating point, robust to huge `a`.
pub fn scaled(a: &BigUint, x: f64, n: usize) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    if n == 0 {
        return num_traits::ToPrimitive::to_f64(a).unwrap_or(f64::INFINITY);
    }
    if x == 0.0 {
        return 0.0;
    }
    (ln_big(a) + n as f64 * x.ln()).exp()
}
