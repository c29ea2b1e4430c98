//! Well-quasi-order combinators and antichain bases of upward-closed sets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Carrier elements. Letters and atoms are indices into a finite alphabet.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Elem {
    Atom(u32),
    Vec(Vec<u64>),
    Word(Vec<u32>),
    /// Sorted multiset.
    Bag(Vec<u32>),
    Tuple(Vec<Elem>),
}

impl Elem {
    pub fn bag(mut xs: Vec<u32>) -> Elem {
        xs.sort_unstable();
        Elem::Bag(xs)
    }

    pub fn tuple(&self) -> &[Elem] {
        match self {
            Elem::Tuple(xs) => xs,
            _ => &[],
        }
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, open: &str, xs: &[T], close: &str) -> fmt::Result {
            f.write_str(open)?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{x}")?;
            }
            f.write_str(close)
        }
        match self {
            Elem::Atom(a) => write!(f, "@{a}"),
            Elem::Vec(v) => list(f, "(", v, ")"),
            Elem::Word(w) => list(f, "\"", w, "\""),
            Elem::Bag(b) => list(f, "{", b, "}"),
            Elem::Tuple(t) => list(f, "<", t, ">"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuasiOrder {
    /// Equality on `{0 .. n-1}`.
    EqualityOn(u32),
    /// Pointwise order on vectors of naturals.
    DicksonVec(usize),
    /// Multiset inclusion over an alphabet of the given size.
    BagEmbed(u32),
    /// Scattered-subsequence order (Higman).
    Subword(u32),
    Product(Vec<QuasiOrder>),
}

impl QuasiOrder {
    /// Whether `e` belongs to the carrier.
    pub fn fits(&self, e: &Elem) -> bool {
        match (self, e) {
            (QuasiOrder::EqualityOn(n), Elem::Atom(a)) => a < n,
            (QuasiOrder::DicksonVec(d), Elem::Vec(v)) => v.len() == *d,
            (QuasiOrder::BagEmbed(n), Elem::Bag(b)) => {
                b.iter().all(|x| x < n) && b.windows(2).all(|w| w[0] <= w[1])
            }
            (QuasiOrder::Subword(n), Elem::Word(w)) => w.iter().all(|x| x < n),
            (QuasiOrder::Product(os), Elem::Tuple(xs)) => {
                os.len() == xs.len() && os.iter().zip(xs).all(|(o, x)| o.fits(x))
            }
            _ => false,
        }
    }

    fn check(&self, e: &Elem) -> Result<()> {
        if self.fits(e) {
            Ok(())
        } else {
            Err(Error::CarrierMismatch(format!("{e} is not in the carrier of {self:?}")))
        }
    }

    pub fn leq(&self, a: &Elem, b: &Elem) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.leq_unchecked(a, b))
    }

    /// `leq` for elements already known to be in the carrier.
    pub fn leq_unchecked(&self, a: &Elem, b: &Elem) -> bool {
        match (self, a, b) {
            (QuasiOrder::EqualityOn(_), x, y) => x == y,
            (QuasiOrder::DicksonVec(_), Elem::Vec(x), Elem::Vec(y)) => {
                x.iter().zip(y).all(|(p, q)| p <= q)
            }
            (QuasiOrder::BagEmbed(_), Elem::Bag(x), Elem::Bag(y)) => bag_leq(x, y),
            (QuasiOrder::Subword(_), Elem::Word(x), Elem::Word(y)) => subword(x, y),
            (QuasiOrder::Product(os), Elem::Tuple(x), Elem::Tuple(y)) => os
                .iter()
                .zip(x.iter().zip(y))
                .all(|(o, (p, q))| o.leq_unchecked(p, q)),
            _ => false,
        }
    }

    pub fn equivalent(&self, a: &Elem, b: &Elem) -> bool {
        self.leq_unchecked(a, b) && self.leq_unchecked(b, a)
    }
}

fn bag_leq(x: &[u32], y: &[u32]) -> bool {
    // both sorted: merge walk
    let mut j = 0;
    for &a in x {
        while j < y.len() && y[j] < a {
            j += 1;
        }
        if j == y.len() || y[j] != a {
            return false;
        }
        j += 1;
    }
    true
}

fn subword(x: &[u32], y: &[u32]) -> bool {
    let mut it = y.iter();
    x.iter().all(|a| it.any(|b| b == a))
}

/// Antichain of minimal elements representing its upward closure.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    elems: Vec<Elem>,
}

impl Basis {
    pub fn empty() -> Self {
        Basis::default()
    }

    pub fn elems(&self) -> &[Elem] {
        &self.elems
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn into_elems(self) -> Vec<Elem> {
        self.elems
    }
}

/// Minimal elements of `xs`; among equivalent elements the least representation wins.
pub fn minimize(ord: &QuasiOrder, xs: impl IntoIterator<Item = Elem>) -> Result<Basis> {
    let mut xs: Vec<Elem> = xs.into_iter().collect();
    for x in &xs {
        ord.check(x)?;
    }
    xs.sort();
    xs.dedup();
    let mut out: Vec<Elem> = Vec::new();
    // scanning in representation order keeps the least of each equivalence class
    for x in xs {
        if out.iter().any(|m| ord.leq_unchecked(m, &x)) {
            continue;
        }
        out.retain(|m| !ord.leq_unchecked(&x, m));
        out.push(x);
    }
    out.sort();
    Ok(Basis { elems: out })
}

/// Leading atom of `x` when the order's first factor is an equality;
/// elements with different keys are incomparable.
pub(crate) fn bucket_key(ord: &QuasiOrder, x: &Elem) -> Option<u32> {
    match (ord, x) {
        (QuasiOrder::Product(fs), Elem::Tuple(xs)) => match (fs.first(), xs.first()) {
            (Some(QuasiOrder::EqualityOn(_)), Some(Elem::Atom(a))) => Some(*a),
            _ => None,
        },
        _ => None,
    }
}

/// The slice of a sorted antichain that can lie below `x`. Under a product
/// whose first factor is an equality, only elements sharing `x`'s first
/// atom qualify, and those are contiguous.
fn candidates(ord: &QuasiOrder, elems: &[Elem], x: &Elem) -> std::ops::Range<usize> {
    let Some(a) = bucket_key(ord, x) else { return 0..elems.len() };
    let key = |m: &Elem| match m {
        Elem::Tuple(ms) => match ms.first() {
            Some(Elem::Atom(b)) => *b,
            _ => u32::MAX,
        },
        _ => u32::MAX,
    };
    let lo = elems.partition_point(|m| key(m) < a);
    let hi = elems.partition_point(|m| key(m) <= a);
    lo..hi
}

/// Wraps elements already known to form an antichain.
pub(crate) fn basis_from_antichain(mut elems: Vec<Elem>) -> Basis {
    elems.sort();
    Basis { elems }
}

pub fn member_up(ord: &QuasiOrder, b: &Basis, x: &Elem) -> bool {
    b.elems[candidates(ord, &b.elems, x)].iter().any(|m| ord.leq_unchecked(m, x))
}

pub fn union_bases(ord: &QuasiOrder, b1: &Basis, b2: &Basis) -> Result<Basis> {
    minimize(ord, b1.elems.iter().chain(&b2.elems).cloned())
}

/// Whether `↑b1 ⊇ ↑b2`.
pub fn includes(ord: &QuasiOrder, b1: &Basis, b2: &Basis) -> Result<bool> {
    for m in b1.elems.iter().chain(&b2.elems) {
        ord.check(m)?;
    }
    Ok(b2.elems.iter().all(|m| member_up(ord, b1, m)))
}

/// Adds `x` to a basis in place; returns false when `x` was already covered.
pub fn insert(ord: &QuasiOrder, b: &mut Basis, x: Elem) -> bool {
    if member_up(ord, b, &x) {
        return false;
    }
    let range = candidates(ord, &b.elems, &x);
    let mut tail = b.elems.split_off(range.start);
    let rest = tail.split_off(range.len());
    tail.retain(|m| !ord.leq_unchecked(&x, m));
    b.elems.extend(tail);
    b.elems.extend(rest);
    let pos = b.elems.binary_search(&x).unwrap_or_else(|p| p);
    b.elems.insert(pos, x);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[u64]) -> Elem {
        Elem::Vec(xs.to_vec())
    }

    #[test]
    fn leq_examples() {
        let d2 = QuasiOrder::DicksonVec(2);
        assert!(d2.leq(&v(&[1, 2]), &v(&[2, 2])).unwrap());
        let bag = QuasiOrder::BagEmbed(2);
        assert!(bag.leq(&Elem::bag(vec![0]), &Elem::bag(vec![1, 0])).unwrap());
        let sw = QuasiOrder::Subword(3);
        assert!(sw.leq(&Elem::Word(vec![0, 1]), &Elem::Word(vec![0, 2, 1])).unwrap());
        assert!(!sw.leq(&Elem::Word(vec![1, 0]), &Elem::Word(vec![0, 1])).unwrap());
    }

    #[test]
    fn carrier_mismatch() {
        let d2 = QuasiOrder::DicksonVec(2);
        assert!(matches!(d2.leq(&v(&[1]), &v(&[1, 2])), Err(Error::CarrierMismatch(_))));
        let b1 = Basis { elems: vec![v(&[1])] };
        assert!(includes(&d2, &b1, &Basis::empty()).is_err());
    }

    #[test]
    fn minimize_examples() {
        let d2 = QuasiOrder::DicksonVec(2);
        let b = minimize(&d2, vec![v(&[1, 0]), v(&[0, 1]), v(&[1, 1])]).unwrap();
        assert_eq!(b.elems(), &[v(&[0, 1]), v(&[1, 0])]);
        assert!(minimize(&d2, vec![]).unwrap().is_empty());
    }

    #[test]
    fn membership_union_includes() {
        let d2 = QuasiOrder::DicksonVec(2);
        let b = minimize(&d2, vec![v(&[1, 0])]).unwrap();
        assert!(member_up(&d2, &b, &v(&[2, 3])));
        assert!(!member_up(&d2, &Basis::empty(), &v(&[2, 3])));
        let b2 = minimize(&d2, vec![v(&[1, 1])]).unwrap();
        assert_eq!(union_bases(&d2, &b, &b2).unwrap(), b);
        assert_eq!(union_bases(&d2, &Basis::empty(), &b2).unwrap(), b2);
        assert!(includes(&d2, &b, &b).unwrap());
        let bottom = minimize(&d2, vec![v(&[0, 0])]).unwrap();
        assert!(includes(&d2, &bottom, &b2).unwrap());
        assert!(!includes(&d2, &b2, &bottom).unwrap());
    }

    #[test]
    fn insert_keeps_antichain() {
        let d2 = QuasiOrder::DicksonVec(2);
        let mut b = Basis::empty();
        assert!(insert(&d2, &mut b, v(&[2, 2])));
        assert!(insert(&d2, &mut b, v(&[3, 0])));
        assert!(!insert(&d2, &mut b, v(&[3, 3])));
        assert!(insert(&d2, &mut b, v(&[1, 0])));
        assert_eq!(b.elems(), &[v(&[1, 0])]);
    }

    #[test]
    fn equivalent_elements_keep_least_representation() {
        let eq = QuasiOrder::Product(vec![QuasiOrder::BagEmbed(2), QuasiOrder::EqualityOn(2)]);
        let a = Elem::Tuple(vec![Elem::bag(vec![0, 1]), Elem::Atom(0)]);
        let b = minimize(&eq, vec![a.clone(), a.clone()]).unwrap();
        assert_eq!(b.elems(), &[a]);
    }
}
