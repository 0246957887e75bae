//! Exponential Boltzmann samplers.
//!
//! At parameter `x` an object of size `n` is returned with probability
//! `x^n / (n! Â(x))`. Shapes are drawn by the usual constructor rules
//! (Bernoulli for unions, independent calls for products, geometric /
//! Poisson / logarithmic component counts for SEQ / SET / CYC) and the
//! atoms are then labeled by one uniform permutation.

use crate::error::{Error, Result};
use crate::laws;
use crate::object::{LabeledObject, Shape};
use crate::oracle::{self, EgfOracle, SeriesCoeffs};
use crate::rng::RandomSource;
use crate::spec::{ClassId, Collection, SpecExpr, ValidatedSpec};

/// Tolerance used for EGF evaluations that feed branching probabilities.
pub const EGF_TOL: f64 = 1e-13;

/// Attempts before a configured size ceiling gives up.
const CEILING_ATTEMPTS: usize = 100_000;

/// Anything that can act as the exponential generator of a class.
pub trait ExponentialGenerator {
    type Object;

    /// `Â(y)`.
    fn egf(&self, y: f64) -> Result<f64>;

    /// Exact counts `a_0..a_order`.
    fn coefficients(&self, order: usize) -> Result<SeriesCoeffs>;

    /// One draw at parameter `y`.
    fn sample_at(&self, y: f64, rng: &mut RandomSource) -> Result<Self::Object>;

    fn object_size(object: &Self::Object) -> usize;

    /// `count` independent draws at parameter `y`.
    fn sample_many(&self, y: f64, count: usize, rng: &mut RandomSource) -> Result<Vec<Self::Object>> {
        (0..count).map(|_| self.sample_at(y, rng)).collect()
    }
}

#[derive(Clone, Debug)]
enum Node {
    Epsilon,
    Atom(Option<char>),
    Union(usize, usize),
    Product(usize, usize),
    Collection { kind: Collection, inner: usize, min: u32 },
    Ref(ClassId),
}

fn compile(e: &SpecExpr, nodes: &mut Vec<Node>) -> usize {
    let node = match e {
        SpecExpr::Epsilon => Node::Epsilon,
        SpecExpr::Atom(l) => Node::Atom(*l),
        SpecExpr::Union(l, r) => {
            let l = compile(l, nodes);
            let r = compile(r, nodes);
            Node::Union(l, r)
        }
        SpecExpr::Product(l, r) => {
            let l = compile(l, nodes);
            let r = compile(r, nodes);
            Node::Product(l, r)
        }
        SpecExpr::Collection { kind, inner, min } => {
            let inner = compile(inner, nodes);
            Node::Collection {
                kind: *kind,
                inner,
                min: *min,
            }
        }
        SpecExpr::Ref(c) => Node::Ref(*c),
    };
    nodes.push(node);
    nodes.len() - 1
}

/// Exponential sampler for one class of a validated specification.
#[derive(Clone, Debug)]
pub struct SpecGenerator {
    oracle: EgfOracle,
    nodes: Vec<Node>,
    roots: Vec<usize>,
    class: ClassId,
    ceiling: Option<usize>,
}

enum Abort {
    Ceiling,
    Fail(Error),
}

impl From<Error> for Abort {
    fn from(e: Error) -> Self {
        Abort::Fail(e)
    }
}

impl SpecGenerator {
    pub fn new(spec: ValidatedSpec, class: ClassId) -> Self {
        let mut nodes = Vec::new();
        let roots = spec
            .system()
            .classes()
            .map(|c| compile(spec.system().expr(c), &mut nodes))
            .collect();
        SpecGenerator {
            oracle: EgfOracle::new(spec),
            nodes,
            roots,
            class,
            ceiling: None,
        }
    }

    /// Resample whenever the size exceeds `ceiling`. The output law becomes
    /// the Boltzmann law conditioned on `n <= ceiling`.
    pub fn with_ceiling(mut self, ceiling: Option<usize>) -> Self {
        self.ceiling = ceiling;
        self
    }

    pub fn ceiling(&self) -> Option<usize> {
        self.ceiling
    }

    pub fn class(&self) -> ClassId {
        self.class
    }

    pub fn spec(&self) -> &ValidatedSpec {
        self.oracle.spec()
    }

    pub fn oracle(&self) -> &EgfOracle {
        &self.oracle
    }

    /// Precomputes branching values at `x`.
    pub fn at(&self, x: f64) -> Result<BoundSampler<'_>> {
        let (classes, _) = self.oracle.class_values(x, EGF_TOL)?;
        let mut values = vec![0.0; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            values[i] = match node {
                Node::Epsilon => 1.0,
                Node::Atom(_) => x,
                Node::Union(l, r) => values[*l] + values[*r],
                Node::Product(l, r) => values[*l] * values[*r],
                Node::Collection { kind, inner, min } => oracle::collection_value(*kind, *min, values[*inner], x)?,
                Node::Ref(c) => classes[c.0],
            };
        }
        if values[self.roots[self.class.0]] <= 0.0 {
            return Err(Error::EmptyClass);
        }
        Ok(BoundSampler {
            generator: self,
            x,
            values,
        })
    }
}

/// A [`SpecGenerator`] with branching values fixed at one parameter.
#[derive(Debug)]
pub struct BoundSampler<'a> {
    generator: &'a SpecGenerator,
    x: f64,
    values: Vec<f64>,
}

impl BoundSampler<'_> {
    pub fn x(&self) -> f64 {
        self.x
    }

    /// `Â(x)` of the sampled class.
    pub fn value(&self) -> f64 {
        self.values[self.generator.roots[self.generator.class.0]]
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Result<LabeledObject> {
        let root = self.generator.roots[self.generator.class.0];
        for _ in 0..CEILING_ATTEMPTS {
            let mut size = 0;
            match self.shape(root, rng, &mut size) {
                Ok(shape) => return Ok(LabeledObject::label_uniformly(shape, rng)),
                Err(Abort::Ceiling) => continue,
                Err(Abort::Fail(e)) => return Err(e),
            }
        }
        Err(Error::SizeCeilingExceeded {
            ceiling: self.generator.ceiling.unwrap_or(usize::MAX),
            attempts: CEILING_ATTEMPTS,
        })
    }

    fn shape(&self, node: usize, rng: &mut RandomSource, size: &mut usize) -> Result<Shape, Abort> {
        let g = self.generator;
        Ok(match &g.nodes[node] {
            Node::Epsilon => Shape::Epsilon,
            Node::Atom(letter) => {
                *size += 1;
                if g.ceiling.is_some_and(|c| *size > c) {
                    return Err(Abort::Ceiling);
                }
                Shape::Atom {
                    letter: *letter,
                    label: 0,
                }
            }
            Node::Union(l, r) => {
                if rng.unit() * self.values[node] < self.values[*l] {
                    Shape::Left(Box::new(self.shape(*l, rng, size)?))
                } else {
                    Shape::Right(Box::new(self.shape(*r, rng, size)?))
                }
            }
            Node::Product(l, r) => {
                let left = self.shape(*l, rng, size)?;
                let right = self.shape(*r, rng, size)?;
                Shape::Pair(Box::new(left), Box::new(right))
            }
            Node::Collection { kind, inner, min } => {
                let f = self.values[*inner];
                let count = match kind {
                    Collection::Seq => *min as u64 + laws::draw_geometric(f, rng)?,
                    Collection::Set => laws::draw_poisson_at_least(f, *min, rng)?,
                    Collection::Cyc => laws::draw_loglaw_at_least(f, *min, rng)?,
                };
                let mut items = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    items.push(self.shape(*inner, rng, size)?);
                }
                match kind {
                    Collection::Seq => Shape::Seq(items),
                    Collection::Set => Shape::Set(items),
                    Collection::Cyc => Shape::Cyc(items),
                }
            }
            Node::Ref(c) => self.shape(g.roots[c.0], rng, size)?,
        })
    }
}

impl ExponentialGenerator for SpecGenerator {
    type Object = LabeledObject;

    fn egf(&self, y: f64) -> Result<f64> {
        Ok(self.oracle.egf_eval(self.class, y, EGF_TOL)?.value)
    }

    fn coefficients(&self, order: usize) -> Result<SeriesCoeffs> {
        oracle::egf_coeffs(self.oracle.spec(), self.class, order)
    }

    fn sample_at(&self, y: f64, rng: &mut RandomSource) -> Result<LabeledObject> {
        self.at(y)?.sample(rng)
    }

    fn object_size(object: &LabeledObject) -> usize {
        object.size
    }

    fn sample_many(&self, y: f64, count: usize, rng: &mut RandomSource) -> Result<Vec<LabeledObject>> {
        let bound = self.at(y)?;
        (0..count).map(|_| bound.sample(rng)).collect()
    }
}

/// One exponential Boltzmann draw from `class` at parameter `x`.
pub fn gamma_exp(spec: &ValidatedSpec, class: ClassId, x: f64, rng: &mut RandomSource) -> Result<LabeledObject> {
    SpecGenerator::new(spec.clone(), class).sample_at(x, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::load_spec;

    fn generator(src: &str) -> SpecGenerator {
        let spec = load_spec(src).unwrap();
        let root = spec.system().root();
        SpecGenerator::new(spec, root)
    }

    #[test]
    fn set_of_atoms_is_poisson() {
        let g = generator("A = SET(Z)");
        let b = g.at(0.5).unwrap();
        let mut rng = RandomSource::new(2);
        let n = 100_000;
        let zeros = (0..n).filter(|_| b.sample(&mut rng).unwrap().size == 0).count();
        let p0 = (-0.5f64).exp();
        assert!((p0 - 0.6065).abs() < 1e-4);
        let sd = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - p0).abs() < 4.0 * sd);
    }

    #[test]
    fn zero_parameter_gives_the_empty_object() {
        let g = generator("P = SET(CYC(Z))");
        let mut rng = RandomSource::new(0);
        for _ in 0..100 {
            let o = g.sample_at(0.0, &mut rng).unwrap();
            assert_eq!(o.size, 0);
            assert_eq!(o.shape, Shape::Set(vec![]));
        }
        let t = generator("T = Z * SET(T)");
        assert!(matches!(t.sample_at(0.0, &mut rng), Err(Error::EmptyClass)));
    }

    #[test]
    fn out_of_range_parameter() {
        let g = generator("T = Z * SET(T)");
        let mut rng = RandomSource::new(0);
        assert!(matches!(g.sample_at(0.5, &mut rng), Err(Error::EgfDivergent { .. })));
        let s = generator("S = SEQ(Z)");
        assert!(matches!(s.sample_at(1.5, &mut rng), Err(Error::EgfDivergent { .. })));
    }

    #[test]
    fn ceiling_bounds_sizes() {
        let g = generator("S = SEQ(Z)").with_ceiling(Some(3));
        let b = g.at(0.8).unwrap();
        let mut rng = RandomSource::new(4);
        for _ in 0..1000 {
            assert!(b.sample(&mut rng).unwrap().size <= 3);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let g = generator("T = Z * SET(T)");
        let b = g.at(0.3).unwrap();
        let draw = |seed| {
            let mut rng = RandomSource::new(seed);
            (0..50).map(|_| b.sample(&mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(17), draw(17));
        assert_ne!(draw(17), draw(18));
    }

    #[test]
    fn objects_are_consistent() {
        let g = generator("P = SET(SET>=1(Z))\n");
        let b = g.at(1.0).unwrap();
        let mut rng = RandomSource::new(8);
        for _ in 0..200 {
            let o = b.sample(&mut rng).unwrap();
            let mut labels = o.labels();
            labels.sort();
            assert_eq!(labels, (1..=o.size as u32).collect::<Vec<_>>());
            if let Shape::Set(blocks) = &o.shape {
                assert!(blocks.iter().all(|blk| blk.size() >= 1));
            } else {
                panic!("not a set");
            }
        }
    }
}
