//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Terms are kept in canonical form: a map from exponent vector to a nonzero
//! coefficient, ordered graded-lexicographically. Two polynomials are equal
//! iff their term maps are equal.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exponent vector of a monomial, ordered graded-lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(dim: usize) -> Self {
        Monomial(vec![0; dim])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn product(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        let mut p = Polynomial::zero(dim);
        p.add_term(Monomial::one(dim), c);
        p
    }

    pub fn from_int(dim: usize, c: i64) -> Self {
        Polynomial::constant(dim, BigRational::from_integer(c.into()))
    }

    /// The coordinate function `x_k`.
    pub fn var(dim: usize, k: usize) -> Self {
        let mut e = vec![0; dim];
        e[k] = 1;
        Polynomial::monomial(dim, e, BigRational::one())
    }

    pub fn monomial(dim: usize, exponents: Vec<u32>, c: BigRational) -> Self {
        assert_eq!(exponents.len(), dim, "exponent vector length must equal dim");
        let mut p = Polynomial::zero(dim);
        p.add_term(Monomial(exponents), c);
        p
    }

    /// Builds a polynomial from `(exponents, numerator, denominator)` triples.
    pub fn from_terms(dim: usize, terms: &[(&[u32], i64, i64)]) -> Self {
        let mut p = Polynomial::zero(dim);
        for (e, n, d) in terms {
            assert_eq!(e.len(), dim);
            p.add_term(
                Monomial(e.to_vec()),
                BigRational::new(BigInt::from(*n), BigInt::from(*d)),
            );
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> BigRational {
        self.terms
            .get(&Monomial(exponents.to_vec()))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn check_dim(&self, other: &Polynomial) {
        assert_eq!(
            self.dim, other.dim,
            "polynomial dimension mismatch ({} vs {})",
            self.dim, other.dim
        );
    }

    pub fn scale(&self, c: &BigRational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn scale_int(&self, c: i64) -> Polynomial {
        self.scale(&BigRational::from_integer(c.into()))
    }

    pub fn square(&self) -> Polynomial {
        self * self
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut acc = Polynomial::from_int(self.dim, 1);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to coordinate `k`.
    pub fn derivative(&self, k: usize) -> Polynomial {
        assert!(k < self.dim, "derivative index out of range");
        let mut out = Polynomial::zero(self.dim);
        for (m, c) in &self.terms {
            let e = m.0[k];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[k] -= 1;
            out.add_term(Monomial(exps), c * BigRational::from_integer(e.into()));
        }
        out
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.dim);
        self.terms
            .iter()
            .map(|(m, c)| {
                let mono: f64 = m
                    .0
                    .iter()
                    .zip(point)
                    .map(|(&e, &x)| x.powi(e as i32))
                    .product();
                c.to_f64().unwrap_or(f64::NAN) * mono
            })
            .sum()
    }

    pub fn eval_exact(&self, point: &[BigRational]) -> BigRational {
        debug_assert_eq!(point.len(), self.dim);
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (&e, x) in m.0.iter().zip(point) {
                for _ in 0..e {
                    t *= x;
                }
            }
            acc += t;
        }
        acc
    }

    /// Coefficients with denominators cleared: `self = numerators / denominator`.
    fn integer_form(&self) -> (Vec<(&Monomial, BigInt)>, BigInt) {
        let den = self
            .terms
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let nums = self
            .terms
            .iter()
            .map(|(m, c)| (m, c.numer() * (&den / c.denom())))
            .collect();
        (nums, den)
    }

    fn mul_impl(&self, other: &Polynomial) -> Polynomial {
        self.check_dim(other);
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero(self.dim);
        }
        let (an, ad) = self.integer_form();
        let (bn, bd) = other.integer_form();
        let den = ad * bd;
        let mut out = Polynomial::zero(self.dim);
        match convolve_i128(&an, &bn) {
            Some(acc) => {
                for (m, v) in acc {
                    out.add_term(m, BigRational::new(BigInt::from(v), den.clone()));
                }
            }
            None => {
                let mut acc: HashMap<Monomial, BigInt> = HashMap::new();
                for (ma, ca) in &an {
                    for (mb, cb) in &bn {
                        *acc.entry(ma.product(mb)).or_insert_with(BigInt::zero) += ca * cb;
                    }
                }
                for (m, v) in acc {
                    out.add_term(m, BigRational::new(v, den.clone()));
                }
            }
        }
        out
    }

    /// Random polynomial of total degree at most `max_degree`. Each monomial is
    /// present with probability `density` and gets a coefficient drawn
    /// uniformly from `-bound..=bound`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        dim: usize,
        max_degree: u32,
        bound: i64,
        density: f64,
    ) -> Polynomial {
        let mut p = Polynomial::zero(dim);
        for e in monomials_up_to(dim, max_degree) {
            if rng.gen::<f64>() < density {
                let c = rng.gen_range(-bound..=bound);
                p.add_term(Monomial(e), BigRational::from_integer(c.into()));
            }
        }
        p
    }
}

fn convolve_i128(a: &[(&Monomial, BigInt)], b: &[(&Monomial, BigInt)]) -> Option<HashMap<Monomial, i128>> {
    let a: Vec<(&Monomial, i128)> = a
        .iter()
        .map(|(m, c)| c.to_i128().map(|v| (*m, v)))
        .collect::<Option<_>>()?;
    let b: Vec<(&Monomial, i128)> = b
        .iter()
        .map(|(m, c)| c.to_i128().map(|v| (*m, v)))
        .collect::<Option<_>>()?;
    let mut acc: HashMap<Monomial, i128> = HashMap::with_capacity(a.len() * b.len() / 2 + 1);
    for (ma, ca) in &a {
        for (mb, cb) in &b {
            let prod = ca.checked_mul(*cb)?;
            let slot = acc.entry(ma.product(mb)).or_insert(0);
            *slot = slot.checked_add(prod)?;
        }
    }
    Some(acc)
}

/// All exponent vectors in `dim` variables with total degree `<= max_degree`.
pub fn monomials_up_to(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, max_degree, &mut Vec::with_capacity(dim), &mut out);
    out.sort_by_key(|a| Monomial(a.clone()));
    out
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.check_dim(rhs);
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.check_dim(rhs);
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.mul_impl(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                (&self).$method(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

fn var_name(dim: usize, k: usize) -> String {
    if dim <= 3 {
        ["x", "y", "z"][k].to_string()
    } else {
        format!("x{k}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let vars: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(k, &e)| {
                    let v = var_name(self.dim, k);
                    if e == 1 {
                        v
                    } else {
                        format!("{v}^{e}")
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{abs}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

// JSON form: {"dim": 2, "terms": {"1,0": "1/2", "0,2": -3}}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CoeffRepr {
    Int(i64),
    Text(String),
    Float(f64),
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    dim: usize,
    terms: BTreeMap<String, CoeffRepr>,
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid rational '{s}'"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => {
            if let Ok(n) = s.parse::<BigInt>() {
                return Ok(BigRational::from_integer(n));
            }
            let x: f64 = s.parse().map_err(|_| bad())?;
            BigRational::from_float(x).ok_or_else(bad)
        }
    }
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let key = m.0.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
                (key, CoeffRepr::Text(c.to_string()))
            })
            .collect();
        PolynomialRepr {
            dim: self.dim,
            terms,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PolynomialRepr::deserialize(deserializer)?;
        let mut p = Polynomial::zero(repr.dim);
        for (key, c) in repr.terms {
            let exps: Vec<u32> = key
                .split(',')
                .map(|e| e.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| D::Error::custom(format!("bad exponent key '{key}'")))?;
            if exps.len() != repr.dim {
                return Err(D::Error::custom(format!(
                    "exponent key '{key}' has {} entries, expected {}",
                    exps.len(),
                    repr.dim
                )));
            }
            let coeff = match c {
                CoeffRepr::Int(n) => BigRational::from_integer(n.into()),
                CoeffRepr::Text(s) => parse_rational(&s).map_err(D::Error::custom)?,
                CoeffRepr::Float(x) => BigRational::from_float(x)
                    .ok_or_else(|| D::Error::custom("non-finite coefficient"))?,
            };
            p.add_term(Monomial(exps), coeff);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xy() -> (Polynomial, Polynomial) {
        (Polynomial::var(2, 0), Polynomial::var(2, 1))
    }

    #[test]
    fn canonical_form_drops_zero_terms() {
        let (x, y) = xy();
        let p = &(&x + &y) - &y;
        assert_eq!(p, x);
        assert_eq!((&x - &x).term_count(), 0);
        assert!((&x - &x).is_zero());
    }

    #[test]
    fn graded_lex_order() {
        let a = Monomial::new(vec![2, 0]);
        let b = Monomial::new(vec![1, 1]);
        let c = Monomial::new(vec![0, 3]);
        assert!(a > b);
        assert!(c > a);
        assert_eq!(monomials_up_to(2, 1), vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn product_and_derivative() {
        let (x, y) = xy();
        let p = &(&x + &y).square() - &(&x * &y).scale_int(2);
        assert_eq!(p, &x.square() + &y.square());
        assert_eq!(p.derivative(0), x.scale_int(2));
        assert_eq!(p.degree(), Some(2));
        assert_eq!(Polynomial::zero(2).degree(), None);
    }

    #[test]
    fn big_coefficients_fall_back_to_bigint() {
        let x = Polynomial::var(1, 0);
        let big = Polynomial::from_int(1, i64::MAX);
        let p = (&x + &big).pow(4);
        let expect = BigInt::from(i64::MAX).pow(4);
        assert_eq!(p.coefficient(&[0]), BigRational::from_integer(expect));
    }

    #[test]
    fn rational_coefficients() {
        let y = Polynomial::var(3, 1);
        let half_y = y.scale(&BigRational::new(1.into(), 2.into()));
        let p = half_y.square();
        assert_eq!(p.coefficient(&[0, 2, 0]), BigRational::new(1.into(), 4.into()));
        assert!((p.eval_f64(&[0.0, 2.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_roundtrip_and_display() {
        let p = Polynomial::from_terms(2, &[(&[1, 0], 1, 2), (&[0, 2], -3, 1)]);
        let s = serde_json::to_string(&p).unwrap();
        let q: Polynomial = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.to_string(), "-3*y^2 + 1/2*x");
        let r: Polynomial = serde_json::from_str(r#"{"dim":2,"terms":{"1,0":1,"0,1":"-1/2"}}"#).unwrap();
        assert_eq!(r.coefficient(&[0, 1]), BigRational::new((-1).into(), 2.into()));
        assert!(serde_json::from_str::<Polynomial>(r#"{"dim":2,"terms":{"1":1}}"#).is_err());
    }

    fn small_poly() -> impl Strategy<Value = Polynomial> {
        prop::collection::vec(((0u32..3, 0u32..3), -3i64..=3), 0..6).prop_map(|ts| {
            let mut p = Polynomial::zero(2);
            for ((a, b), c) in ts {
                p = &p + &Polynomial::monomial(2, vec![a, b], BigRational::from_integer(c.into()));
            }
            p
        })
    }

    proptest! {
        #[test]
        fn ring_laws(p in small_poly(), q in small_poly(), r in small_poly()) {
            prop_assert_eq!(&p * &(&q + &r), &(&p * &q) + &(&p * &r));
            prop_assert_eq!(&p * &q, &q * &p);
            prop_assert_eq!(&(&p * &q) * &r, &p * &(&q * &r));
        }

        #[test]
        fn leibniz_for_partials(p in small_poly(), q in small_poly(), k in 0usize..2) {
            let lhs = (&p * &q).derivative(k);
            let rhs = &(&p.derivative(k) * &q) + &(&p * &q.derivative(k));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn evaluation_is_a_ring_map(p in small_poly(), q in small_poly(), x in -2i64..3, y in -2i64..3) {
            let pt = [BigRational::from_integer(x.into()), BigRational::from_integer(y.into())];
            prop_assert_eq!((&p * &q).eval_exact(&pt), p.eval_exact(&pt) * q.eval_exact(&pt));
        }
    }
}
