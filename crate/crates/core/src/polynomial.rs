//! Sparse multivariate polynomials over `f64` and graded monomial bases.
//!
//! Monomials are keyed by [`PowerVector`]s. The canonical order used
//! everywhere in the crate is graded lexicographic: lower total degree first,
//! and within one degree the vector with the larger exponent on the earliest
//! variable comes first, so for two variables the sequence starts
//! `1, x1, x2, x1^2, x1 x2, x2^2, x1^3, ...`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot parse polynomial line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Exponent vector of a monomial, one entry per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PowerVector(Vec<u32>);

impl PowerVector {
    pub fn new(exponents: Vec<u32>) -> Self {
        PowerVector(exponents)
    }

    pub fn zero(n_vars: usize) -> Self {
        PowerVector(vec![0; n_vars])
    }

    /// Unit vector for variable `var` (0-based).
    pub fn unit(n_vars: usize, var: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[var] = 1;
        PowerVector(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn n_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Exponent-wise sum, i.e. the exponent of the product monomial.
    pub fn add(&self, other: &PowerVector) -> PowerVector {
        debug_assert_eq!(self.0.len(), other.0.len());
        PowerVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl Ord for PowerVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for PowerVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<Vec<u32>> for PowerVector {
    fn from(v: Vec<u32>) -> Self {
        PowerVector(v)
    }
}

/// Sparse polynomial `sum c_a x^a`. Stored terms never carry an exact zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: BTreeMap<PowerVector, f64>,
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n_vars);
        p.add_term(PowerVector::zero(n_vars), c);
        p
    }

    /// The polynomial `x_var` (0-based).
    pub fn variable(n_vars: usize, var: usize) -> Self {
        let mut p = Polynomial::zero(n_vars);
        p.add_term(PowerVector::unit(n_vars, var), 1.0);
        p
    }

    pub fn monomial(exponents: PowerVector, coef: f64) -> Self {
        let mut p = Polynomial::zero(exponents.n_vars());
        p.add_term(exponents, coef);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, summing duplicates.
    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(n_vars);
        for (e, c) in terms {
            if e.len() != n_vars {
                return Err(PolyError::DimensionMismatch {
                    expected: n_vars,
                    found: e.len(),
                });
            }
            p.add_term(PowerVector(e), c);
        }
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in canonical graded order.
    pub fn terms(&self) -> impl Iterator<Item = (&PowerVector, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    /// Coefficient of `x^alpha`, zero when absent.
    pub fn coefficient(&self, alpha: &PowerVector) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn coefficient_of(&self, exponents: &[u32]) -> f64 {
        self.coefficient(&PowerVector(exponents.to_vec()))
    }

    /// Accumulates `c x^alpha`; a resulting exact zero removes the term.
    pub fn add_term(&mut self, alpha: PowerVector, c: f64) {
        debug_assert_eq!(alpha.n_vars(), self.n_vars);
        if c == 0.0 {
            return;
        }
        match self.terms.entry(alpha) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(PowerVector::degree).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars,
                found: x.len(),
            });
        }
        Ok(self.terms.iter().map(|(a, c)| c * a.eval(x)).sum())
    }

    fn check_same(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.n_vars != other.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars,
                found: other.n_vars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (a, &c) in &other.terms {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = Polynomial::zero(self.n_vars);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.add_term(a.add(b), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n_vars);
        for (a, &v) in &self.terms {
            out.add_term(a.clone(), v * c);
        }
        out
    }

    pub fn square(&self) -> Polynomial {
        self.mul(self).expect("same polynomial")
    }

    /// Largest coefficient magnitude (zero for the zero polynomial).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl fmt::Display for Polynomial {
    /// One `coef * x1^a1 ... xn^an` line per term in canonical order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (alpha, c) in &self.terms {
            write!(f, "{c:e} *")?;
            for (i, e) in alpha.0.iter().enumerate() {
                write!(f, " x{}^{}", i + 1, e)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for Polynomial {
    type Err = PolyError;

    /// Parses the dump format. Blank lines and `#` comments are ignored; the
    /// variable count is taken from the first term line.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut n_vars = None;
        let mut terms = Vec::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| PolyError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let (coef, rest) = line.split_once('*').ok_or_else(|| err("missing '*'"))?;
            let coef: f64 = coef.trim().parse().map_err(|_| err("bad coefficient"))?;
            let mut exps = Vec::new();
            for (i, tok) in rest.split_whitespace().enumerate() {
                let (var, e) = tok.split_once('^').ok_or_else(|| err("missing '^'"))?;
                if var != format!("x{}", i + 1) {
                    return Err(err("variables must appear as x1 .. xn in order"));
                }
                exps.push(e.parse::<u32>().map_err(|_| err("bad exponent"))?);
            }
            match n_vars {
                None => n_vars = Some(exps.len()),
                Some(n) if n != exps.len() => return Err(err("inconsistent variable count")),
                _ => {}
            }
            terms.push((exps, coef));
        }
        let n = n_vars.ok_or(PolyError::Parse {
            line: 0,
            reason: "no terms".into(),
        })?;
        Polynomial::from_terms(n, terms)
    }
}

/// All monomials of degree `<= max_degree` in canonical order, with an index.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    n_vars: usize,
    max_degree: u32,
    monomials: Vec<PowerVector>,
    index: HashMap<PowerVector, usize>,
}

impl MonomialBasis {
    pub fn new(n_vars: usize, max_degree: u32) -> Self {
        assert!(n_vars >= 1, "monomial basis needs at least one variable");
        let mut monomials = Vec::with_capacity(binomial(n_vars + max_degree as usize, n_vars));
        let mut scratch = vec![0u32; n_vars];
        for d in 0..=max_degree {
            push_exact_degree(&mut scratch, 0, d, &mut monomials);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis {
            n_vars,
            max_degree,
            monomials,
            index,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn get(&self, k: usize) -> &PowerVector {
        &self.monomials[k]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PowerVector> {
        self.monomials.iter()
    }

    pub fn index_of(&self, alpha: &PowerVector) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    /// Evaluates every basis monomial at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|m| m.eval(x)).collect()
    }
}

impl std::ops::Index<usize> for MonomialBasis {
    type Output = PowerVector;
    fn index(&self, k: usize) -> &PowerVector {
        &self.monomials[k]
    }
}

/// Convenience wrapper for [`MonomialBasis::new`].
pub fn monomial_basis(n_vars: usize, max_degree: u32) -> MonomialBasis {
    MonomialBasis::new(n_vars, max_degree)
}

// Fills exponents from position `pos` onward so they sum to `remaining`,
// visiting larger leading exponents first.
fn push_exact_degree(scratch: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<PowerVector>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(PowerVector(scratch.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[pos] = e;
        push_exact_degree(scratch, pos + 1, remaining - e, out);
    }
    scratch[pos] = 0;
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
