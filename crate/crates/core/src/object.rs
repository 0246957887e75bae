//! Labeled objects produced by the samplers and the enumerator.

use std::fmt;

use serde::Serialize;

use crate::rng::RandomSource;

/// Constructor tree of a labeled object.
///
/// Atoms carry their label (1-based once labeled). `Set` children are kept
/// ordered by their smallest label and `Cyc` children are rotated so the
/// child holding the smallest label comes first; together with the labels
/// this makes structural equality coincide with equality of labeled objects.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Epsilon,
    Atom {
        #[serde(skip_serializing_if = "Option::is_none")]
        letter: Option<char>,
        label: u32,
    },
    Left(Box<Shape>),
    Right(Box<Shape>),
    Pair(Box<Shape>, Box<Shape>),
    Seq(Vec<Shape>),
    Set(Vec<Shape>),
    Cyc(Vec<Shape>),
}

impl Shape {
    pub fn size(&self) -> usize {
        match self {
            Shape::Epsilon => 0,
            Shape::Atom { .. } => 1,
            Shape::Left(s) | Shape::Right(s) => s.size(),
            Shape::Pair(l, r) => l.size() + r.size(),
            Shape::Seq(v) | Shape::Set(v) | Shape::Cyc(v) => v.iter().map(Shape::size).sum(),
        }
    }

    fn min_label(&self) -> u32 {
        match self {
            Shape::Epsilon => u32::MAX,
            Shape::Atom { label, .. } => *label,
            Shape::Left(s) | Shape::Right(s) => s.min_label(),
            Shape::Pair(l, r) => l.min_label().min(r.min_label()),
            Shape::Seq(v) | Shape::Set(v) | Shape::Cyc(v) => v.iter().map(Shape::min_label).min().unwrap_or(u32::MAX),
        }
    }

    fn atoms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut u32>) {
        match self {
            Shape::Epsilon => {}
            Shape::Atom { label, .. } => out.push(label),
            Shape::Left(s) | Shape::Right(s) => s.atoms_mut(out),
            Shape::Pair(l, r) => {
                l.atoms_mut(out);
                r.atoms_mut(out);
            }
            Shape::Seq(v) | Shape::Set(v) | Shape::Cyc(v) => {
                for s in v {
                    s.atoms_mut(out);
                }
            }
        }
    }

    fn labels_into(&self, out: &mut Vec<u32>) {
        match self {
            Shape::Epsilon => {}
            Shape::Atom { label, .. } => out.push(*label),
            Shape::Left(s) | Shape::Right(s) => s.labels_into(out),
            Shape::Pair(l, r) => {
                l.labels_into(out);
                r.labels_into(out);
            }
            Shape::Seq(v) | Shape::Set(v) | Shape::Cyc(v) => v.iter().for_each(|s| s.labels_into(out)),
        }
    }

    /// Puts `Set` and `Cyc` children into canonical order.
    pub fn canonicalize(&mut self) {
        match self {
            Shape::Epsilon | Shape::Atom { .. } => {}
            Shape::Left(s) | Shape::Right(s) => s.canonicalize(),
            Shape::Pair(l, r) => {
                l.canonicalize();
                r.canonicalize();
            }
            Shape::Seq(v) => v.iter_mut().for_each(Shape::canonicalize),
            Shape::Set(v) => {
                v.iter_mut().for_each(Shape::canonicalize);
                v.sort_by_key(Shape::min_label);
            }
            Shape::Cyc(v) => {
                v.iter_mut().for_each(Shape::canonicalize);
                if let Some(first) = (0..v.len()).min_by_key(|&i| v[i].min_label()) {
                    v.rotate_left(first);
                }
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, open: &str, v: &[Shape], close: &str) -> fmt::Result {
            f.write_str(open)?;
            for (i, s) in v.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{s}")?;
            }
            f.write_str(close)
        }
        match self {
            Shape::Epsilon => f.write_str("1"),
            Shape::Atom { letter: None, label } => write!(f, "{label}"),
            Shape::Atom { letter: Some(c), label } => write!(f, "{c}{label}"),
            Shape::Left(s) => write!(f, "inl {s}"),
            Shape::Right(s) => write!(f, "inr {s}"),
            Shape::Pair(l, r) => write!(f, "({l}, {r})"),
            Shape::Seq(v) => list(f, "SEQ[", v, "]"),
            Shape::Set(v) => list(f, "SET{", v, "}"),
            Shape::Cyc(v) => list(f, "CYC<", v, ">"),
        }
    }
}

/// A labeled object: shape plus size.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledObject {
    pub shape: Shape,
    pub size: usize,
}

impl LabeledObject {
    /// Wraps a shape whose atoms already carry labels `1..=n`, canonicalizing it.
    pub fn from_labeled(mut shape: Shape) -> Self {
        shape.canonicalize();
        let size = shape.size();
        LabeledObject { shape, size }
    }

    /// Labels the atoms of an unlabeled shape by a uniform permutation of
    /// `1..=n`, then canonicalizes.
    pub fn label_uniformly(mut shape: Shape, rng: &mut RandomSource) -> Self {
        let mut slots = Vec::new();
        shape.atoms_mut(&mut slots);
        let perm = rng.permutation(slots.len());
        for (slot, p) in slots.into_iter().zip(perm) {
            *slot = p + 1;
        }
        Self::from_labeled(shape)
    }

    /// Atom labels in depth-first order.
    pub fn labels(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.size);
        self.shape.labels_into(&mut out);
        out
    }

    /// One-line term syntax.
    pub fn term(&self) -> String {
        self.shape.to_string()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "size": self.size,
            "shape": self.shape,
            "labels": self.labels(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(label: u32) -> Shape {
        Shape::Atom { letter: None, label }
    }

    #[test]
    fn canonical_order() {
        let set = Shape::Set(vec![Shape::Set(vec![atom(3), atom(2)]), Shape::Set(vec![atom(1)])]);
        let o = LabeledObject::from_labeled(set);
        assert_eq!(o.shape, Shape::Set(vec![Shape::Set(vec![atom(1)]), Shape::Set(vec![atom(2), atom(3)])]));
        let cyc = Shape::Cyc(vec![atom(2), atom(3), atom(1)]);
        let o = LabeledObject::from_labeled(cyc);
        assert_eq!(o.shape, Shape::Cyc(vec![atom(1), atom(2), atom(3)]));
        assert_eq!(o.size, 3);
        assert_eq!(o.term(), "CYC<1, 2, 3>");
    }

    #[test]
    fn uniform_labels_are_a_permutation() {
        let mut rng = RandomSource::new(1);
        let shape = Shape::Pair(Box::new(atom(0)), Box::new(Shape::Seq(vec![atom(0), atom(0)])));
        let o = LabeledObject::label_uniformly(shape, &mut rng);
        let mut l = o.labels();
        l.sort();
        assert_eq!(l, vec![1, 2, 3]);
    }

    #[test]
    fn json_shape() {
        let o = LabeledObject::from_labeled(Shape::Left(Box::new(Shape::Atom {
            letter: Some('a'),
            label: 1,
        })));
        let j = o.to_json();
        assert_eq!(j["size"], 1);
        assert_eq!(j["shape"]["left"]["atom"]["letter"], "a");
        assert_eq!(j["labels"][0], 1);
        assert_eq!(o.term(), "inl a1");
    }
}
