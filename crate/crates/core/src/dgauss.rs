//! Exact 𝒟-valued moments of the Gaussian family `{T1, T1*, T2, T2*}`.
//!
//! 𝒟 is modelled as piecewise polynomials on `[0,1]` with rational
//! coefficients. The only non-vanishing covariances are
//! `E(T_i f T_i*) = L(f)` and `E(T_i* f T_i) = L*(f)` with
//! `L(f)(x) = ∫_x^1 f` and `L*(f)(x) = ∫_0^x f`, so every moment is a sum
//! over non-crossing pairings with the covariance maps applied inside-out.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_traits::{One, Zero};

use crate::error::{arg, Error, Result};
use crate::ncpart::{all_words, moments_to_cumulants, FreeProduct, Family as FreeFamily, MomentSequence};
use crate::rational::{self, fmt as rfmt, int, require_sqrt, Rational};

/// Maximum number of generators in a single word handed to [`ed_moment`].
pub const MAX_GENERATORS: usize = 12;

// polynomials are ascending coefficient vectors with no trailing zeros

fn trim(p: &mut Vec<Rational>) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

fn padd(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut out: Vec<Rational> = (0..a.len().max(b.len()))
        .map(|i| match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => x + y,
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        })
        .collect();
    trim(&mut out);
    out
}

fn pscale(a: &[Rational], s: &Rational) -> Vec<Rational> {
    if s.is_zero() {
        return Vec::new();
    }
    a.iter().map(|c| c * s).collect()
}

fn pmul(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(&mut out);
    out
}

fn peval(p: &[Rational], x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn pantider(p: &[Rational]) -> Vec<Rational> {
    let mut out = Vec::with_capacity(p.len() + 1);
    out.push(Rational::zero());
    for (k, c) in p.iter().enumerate() {
        out.push(c / int(k as i64 + 1));
    }
    trim(&mut out);
    out
}

/// An element of 𝒟: a piecewise polynomial on `[0,1]`.
///
/// Pieces are stored with coefficients in the global variable `x`. The form
/// is canonical (no trailing zero coefficients, equal neighbours merged), so
/// structural equality is equality of functions up to values at breakpoints.
/// Evaluation at an interior breakpoint uses the piece to its right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PiecewisePoly {
    breaks: Vec<Rational>,
    polys: Vec<Vec<Rational>>,
}

impl PiecewisePoly {
    fn canonical(breaks: Vec<Rational>, polys: Vec<Vec<Rational>>) -> Self {
        let mut b = vec![breaks[0].clone()];
        let mut ps: Vec<Vec<Rational>> = Vec::with_capacity(polys.len());
        for (k, mut p) in polys.into_iter().enumerate() {
            trim(&mut p);
            if ps.last() == Some(&p) {
                *b.last_mut().unwrap() = breaks[k + 1].clone();
            } else {
                ps.push(p);
                b.push(breaks[k + 1].clone());
            }
        }
        PiecewisePoly { breaks: b, polys: ps }
    }

    /// A single polynomial on all of `[0,1]`, coefficients ascending.
    pub fn poly(coeffs: Vec<Rational>) -> Self {
        Self::canonical(vec![int(0), int(1)], vec![coeffs])
    }

    pub fn constant(c: Rational) -> Self {
        Self::poly(vec![c])
    }

    pub fn zero() -> Self {
        Self::poly(Vec::new())
    }

    pub fn one() -> Self {
        Self::constant(int(1))
    }

    /// The identity function `x`.
    pub fn identity() -> Self {
        Self::monomial(1)
    }

    pub fn monomial(k: usize) -> Self {
        let mut c = vec![Rational::zero(); k + 1];
        c[k] = int(1);
        Self::poly(c)
    }

    /// Builds from `(a, b, coefficients)` triples that tile `[0,1]` in order.
    pub fn from_pieces(pieces: Vec<(Rational, Rational, Vec<Rational>)>) -> Result<Self> {
        if pieces.is_empty() {
            return arg("a piecewise polynomial needs at least one piece");
        }
        let mut breaks = vec![pieces[0].0.clone()];
        if !breaks[0].is_zero() {
            return arg("the first piece must start at 0");
        }
        let mut polys = Vec::with_capacity(pieces.len());
        for (a, b, c) in pieces {
            if &a != breaks.last().unwrap() {
                return arg(format!("gap or overlap at {}", rfmt(&a)));
            }
            if b <= a {
                return arg(format!("empty interval [{}, {}]", rfmt(&a), rfmt(&b)));
            }
            breaks.push(b);
            polys.push(c);
        }
        if !breaks.last().unwrap().is_one() {
            return arg("the last piece must end at 1");
        }
        Ok(Self::canonical(breaks, polys))
    }

    /// `(a, b, coefficients)` for each piece.
    pub fn pieces(&self) -> impl Iterator<Item = (&Rational, &Rational, &[Rational])> {
        self.polys.iter().enumerate().map(|(k, p)| (&self.breaks[k], &self.breaks[k + 1], p.as_slice()))
    }

    pub fn is_zero(&self) -> bool {
        self.polys.len() == 1 && self.polys[0].is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.polys.len() == 1 && self.polys[0].len() == 1 && self.polys[0][0].is_one()
    }

    /// The value if this is a constant function.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.polys.as_slice() {
            [p] if p.is_empty() => Some(Rational::zero()),
            [p] if p.len() == 1 => Some(p[0].clone()),
            _ => None,
        }
    }

    pub fn degree(&self) -> usize {
        self.polys.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &Rational) -> Result<Rational> {
        if x < &Rational::zero() || x > &Rational::one() {
            return arg(format!("{} is outside [0,1]", rfmt(x)));
        }
        let k = self.breaks[1..self.breaks.len() - 1].partition_point(|b| b <= x);
        Ok(peval(&self.polys[k], x))
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let k = self.breaks[1..self.breaks.len() - 1].partition_point(|b| rational::to_f64(b) <= x);
        self.polys[k].iter().rev().fold(0.0, |acc, c| acc * x + rational::to_f64(c))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&[Rational], &[Rational]) -> Vec<Rational>) -> Self {
        if self.polys.len() == 1 && other.polys.len() == 1 {
            return Self::canonical(self.breaks.clone(), vec![f(&self.polys[0], &other.polys[0])]);
        }
        let mut breaks: Vec<Rational> = self.breaks.iter().chain(other.breaks.iter()).cloned().collect();
        breaks.sort();
        breaks.dedup();
        let (mut i, mut j) = (0, 0);
        let mut polys = Vec::with_capacity(breaks.len() - 1);
        for u in &breaks[..breaks.len() - 1] {
            while &self.breaks[i + 1] <= u {
                i += 1;
            }
            while &other.breaks[j + 1] <= u {
                j += 1;
            }
            polys.push(f(&self.polys[i], &other.polys[j]));
        }
        Self::canonical(breaks, polys)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, padd)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&int(-1)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        self.zip_with(other, pmul)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self::canonical(self.breaks.clone(), self.polys.iter().map(|p| pscale(p, s)).collect())
    }

    /// `∫_0^1 f`.
    pub fn integral(&self) -> Rational {
        self.pieces()
            .map(|(a, b, p)| {
                let anti = pantider(p);
                peval(&anti, b) - peval(&anti, a)
            })
            .sum()
    }

    /// `x ↦ ∫_0^x f`.
    pub fn cov_lstar(&self) -> Self {
        let mut acc = Rational::zero();
        let mut polys = Vec::with_capacity(self.polys.len());
        for (a, b, p) in self.pieces() {
            let anti = pantider(p);
            let at_a = peval(&anti, a);
            polys.push(padd(&anti, &[&acc - &at_a]));
            acc += peval(&anti, b) - at_a;
        }
        Self::canonical(self.breaks.clone(), polys)
    }

    /// `x ↦ ∫_x^1 f`.
    pub fn cov_l(&self) -> Self {
        Self::constant(self.integral()).sub(&self.cov_lstar())
    }
}

impl fmt::Display for PiecewisePoly {
    /// `[a,b]:c0,c1,...;[b,c]:...` with exact `p/q` coefficients; `0` for the
    /// zero polynomial on a piece.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (a, b, p)) in self.pieces().enumerate() {
            if k > 0 {
                write!(f, ";")?;
            }
            write!(f, "[{},{}]:", rfmt(a), rfmt(b))?;
            if p.is_empty() {
                write!(f, "0")?;
            }
            for (i, c) in p.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", rfmt(c))?;
            }
        }
        Ok(())
    }
}

impl FromStr for PiecewisePoly {
    type Err = Error;

    /// Accepts the canonical form, or a bare coefficient list `c0,c1,...`
    /// for a single polynomial on `[0,1]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let coeffs = |t: &str| -> Result<Vec<Rational>> { t.split(',').map(rational::parse).collect() };
        if !s.starts_with('[') {
            return Ok(Self::poly(coeffs(s)?));
        }
        let mut pieces = Vec::new();
        for piece in s.split(';') {
            let bad = || Error::Parse(format!("malformed piece `{piece}`"));
            let piece = piece.trim();
            let (interval, cs) = piece.split_once(':').ok_or_else(bad)?;
            let inner = interval.trim().strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            pieces.push((rational::parse(a)?, rational::parse(b)?, coeffs(cs)?));
        }
        Self::from_pieces(pieces).map_err(|e| match e {
            Error::Argument(m) => Error::Parse(m),
            other => other,
        })
    }
}

pub fn cov_l(f: &PiecewisePoly) -> PiecewisePoly {
    f.cov_l()
}

pub fn cov_lstar(f: &PiecewisePoly) -> PiecewisePoly {
    f.cov_lstar()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    T1,
    T2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Generator {
    pub family: Family,
    pub adjoint: bool,
}

impl Generator {
    pub const T1: Generator = Generator { family: Family::T1, adjoint: false };
    pub const T1_STAR: Generator = Generator { family: Family::T1, adjoint: true };
    pub const T2: Generator = Generator { family: Family::T2, adjoint: false };
    pub const T2_STAR: Generator = Generator { family: Family::T2, adjoint: true };
    pub const ALL: [Generator; 4] = [Self::T1, Self::T1_STAR, Self::T2, Self::T2_STAR];

    pub fn adjoint(self) -> Self {
        Generator { adjoint: !self.adjoint, ..self }
    }

    /// Position in [`Generator::ALL`].
    pub fn index(self) -> usize {
        (self.family as usize) * 2 + self.adjoint as usize
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self.family {
            Family::T1 => "T1",
            Family::T2 => "T2",
        };
        write!(f, "{n}{}", if self.adjoint { "*" } else { "" })
    }
}

impl FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T1" => Ok(Self::T1),
            "T1*" => Ok(Self::T1_STAR),
            "T2" => Ok(Self::T2),
            "T2*" => Ok(Self::T2_STAR),
            _ => Err(Error::Parse(format!("unknown generator `{s}`"))),
        }
    }
}

/// `d_0 g_1 d_1 ⋯ g_k d_k`; `inserts` has one more entry than `gens`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    pub inserts: Vec<PiecewisePoly>,
    pub gens: Vec<Generator>,
}

impl Word {
    pub fn plain(gens: Vec<Generator>) -> Self {
        Word { inserts: vec![PiecewisePoly::one(); gens.len() + 1], gens }
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    fn concat(&self, other: &Word) -> Word {
        let mut inserts = self.inserts[..self.inserts.len() - 1].to_vec();
        inserts.push(self.inserts.last().unwrap().mul(&other.inserts[0]));
        inserts.extend_from_slice(&other.inserts[1..]);
        let mut gens = self.gens.clone();
        gens.extend_from_slice(&other.gens);
        Word { inserts, gens }
    }

    fn adjoint(&self) -> Word {
        // insertions are real-valued, hence self-adjoint
        Word {
            inserts: self.inserts.iter().rev().cloned().collect(),
            gens: self.gens.iter().rev().map(|g| g.adjoint()).collect(),
        }
    }
}

/// A finite rational linear combination of words, kept normalized: constant
/// insertions are folded into the coefficient, equal words are merged and
/// zero terms dropped.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct WordExpr {
    terms: Vec<(Rational, Word)>,
}

impl WordExpr {
    fn from_terms(terms: impl IntoIterator<Item = (Rational, Word)>) -> Self {
        let mut merged: BTreeMap<Word, Rational> = BTreeMap::new();
        for (mut c, mut w) in terms {
            for d in w.inserts.iter_mut() {
                if let Some(k) = d.as_constant() {
                    c *= k;
                    *d = PiecewisePoly::one();
                }
            }
            if c.is_zero() {
                continue;
            }
            *merged.entry(w).or_insert_with(Rational::zero) += c;
        }
        WordExpr { terms: merged.into_iter().filter(|(_, c)| !c.is_zero()).map(|(w, c)| (c, w)).collect() }
    }

    pub fn zero() -> Self {
        WordExpr::default()
    }

    pub fn one() -> Self {
        Self::scalar(int(1))
    }

    pub fn scalar(c: Rational) -> Self {
        Self::from_terms([(c, Word::plain(vec![]))])
    }

    pub fn poly(d: PiecewisePoly) -> Self {
        Self::from_terms([(int(1), Word { inserts: vec![d], gens: vec![] })])
    }

    pub fn gen(g: Generator) -> Self {
        Self::from_terms([(int(1), Word::plain(vec![g]))])
    }

    pub fn word(c: Rational, w: Word) -> Result<Self> {
        if w.inserts.len() != w.gens.len() + 1 {
            return arg("a word needs exactly one more insertion than generators");
        }
        Ok(Self::from_terms([(c, w)]))
    }

    pub fn t1() -> Self {
        Self::gen(Generator::T1)
    }

    pub fn t1_star() -> Self {
        Self::gen(Generator::T1_STAR)
    }

    pub fn t2() -> Self {
        Self::gen(Generator::T2)
    }

    pub fn t2_star() -> Self {
        Self::gen(Generator::T2_STAR)
    }

    pub fn terms(&self) -> &[(Rational, Word)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Longest word, counted in generators.
    pub fn max_len(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self::from_terms(self.terms.iter().map(|(c, w)| (c * s, w.clone())))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_terms(self.terms.iter().map(|(c, w)| (c.clone(), w.adjoint())))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::one(), |acc, _| &acc * self)
    }
}

impl Add for &WordExpr {
    type Output = WordExpr;
    fn add(self, rhs: &WordExpr) -> WordExpr {
        WordExpr::from_terms(self.terms.iter().chain(rhs.terms.iter()).cloned())
    }
}

impl Sub for &WordExpr {
    type Output = WordExpr;
    fn sub(self, rhs: &WordExpr) -> WordExpr {
        self + &(-rhs)
    }
}

impl Neg for &WordExpr {
    type Output = WordExpr;
    fn neg(self) -> WordExpr {
        self.scale(&int(-1))
    }
}

impl Mul for &WordExpr {
    type Output = WordExpr;
    fn mul(self, rhs: &WordExpr) -> WordExpr {
        let mut out = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (a, u) in &self.terms {
            for (b, v) in &rhs.terms {
                out.push((a * b, u.concat(v)));
            }
        }
        WordExpr::from_terms(out)
    }
}

impl fmt::Display for WordExpr {
    /// Space-separated tokens. Each term starts with its rational coefficient,
    /// followed by generators and `{piecewise}` insertions in order; trivial
    /// insertions are omitted. The zero expression is `0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (c, w)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", rfmt(c))?;
            for (i, d) in w.inserts.iter().enumerate() {
                if !d.is_one() {
                    write!(f, " {{{d}}}")?;
                }
                if let Some(g) = w.gens.get(i) {
                    write!(f, " {g}")?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for WordExpr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut cur: Option<(Rational, Word)> = None;
        for tok in s.split_whitespace() {
            if let Ok(c) = rational::parse(tok) {
                terms.extend(cur.take());
                cur = Some((c, Word::plain(vec![])));
                continue;
            }
            let (_, w) = cur.get_or_insert_with(|| (int(1), Word::plain(vec![])));
            if let Some(inner) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                let d: PiecewisePoly = inner.parse()?;
                let last = w.inserts.last_mut().unwrap();
                *last = last.mul(&d);
            } else {
                w.gens.push(tok.parse()?);
                w.inserts.push(PiecewisePoly::one());
            }
        }
        terms.extend(cur);
        Ok(WordExpr::from_terms(terms))
    }
}

/// `m + Σ_g a_g g`: a 𝒟-valued mean plus a rational combination of the four
/// generators (coefficients indexed as [`Generator::ALL`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineLetter {
    pub mean: PiecewisePoly,
    pub coef: [Rational; 4],
}

impl AffineLetter {
    pub fn new(mean: PiecewisePoly, coef: [Rational; 4]) -> Self {
        AffineLetter { mean, coef }
    }

    pub fn gen(g: Generator) -> Self {
        let mut coef: [Rational; 4] = Default::default();
        coef[g.index()] = int(1);
        AffineLetter { mean: PiecewisePoly::zero(), coef }
    }

    pub fn adjoint(&self) -> Self {
        let c = &self.coef;
        AffineLetter { mean: self.mean.clone(), coef: [c[1].clone(), c[0].clone(), c[3].clone(), c[2].clone()] }
    }

    pub fn scale(&self, s: &Rational) -> Self {
        AffineLetter { mean: self.mean.scale(s), coef: self.coef.clone().map(|c| c * s) }
    }

    fn gaussian_zero(&self) -> bool {
        self.coef.iter().all(|c| c.is_zero())
    }

    /// As a [`WordExpr`].
    pub fn to_expr(&self) -> WordExpr {
        let mut out = WordExpr::poly(self.mean.clone());
        for (g, c) in Generator::ALL.iter().zip(&self.coef) {
            out = &out + &WordExpr::gen(*g).scale(c);
        }
        out
    }
}

/// `η_{x,y}(b)`: covariance of the Gaussian parts of `x` (left) and `y`
/// (right) with `b` in between.
fn eta(x: &AffineLetter, y: &AffineLetter, b: &PiecewisePoly) -> PiecewisePoly {
    let (x, y) = (&x.coef, &y.coef);
    let l = &x[0] * &y[1] + &x[2] * &y[3];
    let ls = &x[1] * &y[0] + &x[3] * &y[2];
    let mut out = PiecewisePoly::zero();
    if !l.is_zero() {
        out = out.add(&b.cov_l().scale(&l));
    }
    if !ls.is_zero() {
        out = out.add(&b.cov_lstar().scale(&ls));
    }
    out
}

/// `E_𝒟(d_0 A_1 d_1 ⋯ A_k d_k)` for affine letters `A_i`.
///
/// With `F(p,q) = E_𝒟(A_p d_{p+1} ⋯ A_{q-1} d_q)` the first letter either
/// contributes its mean or pairs with a later letter `l`, giving
/// `F(p,q) = m_p d_{p+1} F(p+1,q) + Σ_l η_{p,l}(d_{p+1} F(p+1,l)) d_{l+1} F(l+1,q)`.
pub fn ed_chain(inserts: &[PiecewisePoly], letters: &[AffineLetter]) -> Result<PiecewisePoly> {
    let k = letters.len();
    if inserts.len() != k + 1 {
        return arg(format!("{} letters need {} insertions, got {}", k, k + 1, inserts.len()));
    }
    // f[p][q - p]
    let mut f: Vec<Vec<PiecewisePoly>> = (0..=k).map(|_| vec![PiecewisePoly::one()]).collect();
    for len in 1..=k {
        for p in 0..=k - len {
            let q = p + len;
            let a = &letters[p];
            let mut acc = if a.mean.is_zero() {
                PiecewisePoly::zero()
            } else {
                a.mean.mul(&inserts[p + 1]).mul(&f[p + 1][q - p - 1])
            };
            if !a.gaussian_zero() {
                for l in p + 1..q {
                    if letters[l].gaussian_zero() {
                        continue;
                    }
                    let inner = inserts[p + 1].mul(&f[p + 1][l - p - 1]);
                    let paired = eta(a, &letters[l], &inner);
                    if paired.is_zero() {
                        continue;
                    }
                    acc = acc.add(&paired.mul(&inserts[l + 1]).mul(&f[l + 1][q - l - 1]));
                }
            }
            f[p].push(acc);
        }
    }
    Ok(inserts[0].mul(&f[0][k]))
}

/// `τ(d_0 A_1 d_1 ⋯ A_k d_k)`.
pub fn tau_chain(inserts: &[PiecewisePoly], letters: &[AffineLetter]) -> Result<Rational> {
    Ok(ed_chain(inserts, letters)?.integral())
}

fn word_letters(w: &Word) -> Vec<AffineLetter> {
    w.gens.iter().map(|&g| AffineLetter::gen(g)).collect()
}

/// `E_𝒟(w)`, linear over the terms.
pub fn ed_moment(w: &WordExpr) -> Result<PiecewisePoly> {
    if w.max_len() > MAX_GENERATORS {
        return arg(format!("word with {} generators exceeds the cap of {MAX_GENERATORS}", w.max_len()));
    }
    let mut acc = PiecewisePoly::zero();
    for (c, word) in &w.terms {
        acc = acc.add(&ed_chain(&word.inserts, &word_letters(word))?.scale(c));
    }
    Ok(acc)
}

/// `τ(w) = ∫_0^1 E_𝒟(w)`.
pub fn tau(w: &WordExpr) -> Result<Rational> {
    Ok(ed_moment(w)?.integral())
}

/// `τ(w · A_1 b_1 ⋯ A_n b_n)` where the tail is given as letters and the
/// insertions `b_0..b_n`, `b_0` sitting between `w` and `A_1`.
pub fn tau_expr_then_chain(w: &WordExpr, inserts: &[PiecewisePoly], letters: &[AffineLetter]) -> Result<Rational> {
    if inserts.len() != letters.len() + 1 {
        return arg("tail needs one more insertion than letters");
    }
    let mut acc = Rational::zero();
    for (c, word) in &w.terms {
        let mut ins = word.inserts[..word.inserts.len() - 1].to_vec();
        ins.push(word.inserts.last().unwrap().mul(&inserts[0]));
        ins.extend_from_slice(&inserts[1..]);
        let mut ls = word_letters(word);
        ls.extend_from_slice(letters);
        acc += c * tau_chain(&ins, &ls)?;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SLetter {
    S,
    SStar,
}

impl fmt::Display for SLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SLetter::S => "S",
            SLetter::SStar => "S*",
        })
    }
}

/// All words over `{S, S*}` of length `0..=max_len`, shortest first.
pub fn s_words(max_len: usize) -> Vec<Vec<SLetter>> {
    let mut out = vec![vec![]];
    out.extend(
        all_words(2, max_len)
            .into_iter()
            .map(|w| w.into_iter().map(|l| if l == 0 { SLetter::S } else { SLetter::SStar }).collect()),
    );
    out
}

pub fn s_word_name(w: &[SLetter]) -> String {
    if w.is_empty() {
        return "1".into();
    }
    w.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

/// The perturbed model `S_t = D/√t + (1/r) T1 + T2*` with conjugate vector
/// `ξ_t = r T1* + T2`, where `r = √(t/(c²+t))`.
///
/// Exact evaluation needs `r` rational, and `√t` too whenever `D ≠ 0`.
#[derive(Clone, Debug)]
pub struct DtModel {
    pub t: Rational,
    pub csq: Rational,
    pub r: Rational,
    pub d: PiecewisePoly,
    /// `D/√t`, zero when `D = 0`.
    pub d_scaled: PiecewisePoly,
}

impl DtModel {
    pub fn new(t: Rational, csq: Rational, d: PiecewisePoly) -> Result<Self> {
        if t <= Rational::zero() || csq <= Rational::zero() {
            return arg("t and c² must be positive");
        }
        let r = require_sqrt(&(&t / (&csq + &t)), "t/(c²+t)")?;
        let d_scaled = if d.is_zero() {
            PiecewisePoly::zero()
        } else {
            d.scale(&(int(1) / require_sqrt(&t, "t")?))
        };
        Ok(DtModel { t, csq, r, d, d_scaled })
    }

    /// The model with `D` the identity function on `[0,1]`.
    pub fn with_identity(t: Rational, csq: Rational) -> Result<Self> {
        Self::new(t, csq, PiecewisePoly::identity())
    }

    pub fn s_letter(&self) -> AffineLetter {
        let z = Rational::zero();
        AffineLetter::new(self.d_scaled.clone(), [int(1) / &self.r, z.clone(), z, int(1)])
    }

    pub fn letter(&self, l: SLetter) -> AffineLetter {
        match l {
            SLetter::S => self.s_letter(),
            SLetter::SStar => self.s_letter().adjoint(),
        }
    }

    pub fn s(&self) -> WordExpr {
        self.s_letter().to_expr()
    }

    pub fn xi(&self) -> WordExpr {
        &WordExpr::t1_star().scale(&self.r) + &WordExpr::t2()
    }

    pub fn ratio(&self) -> Rational {
        &self.t / (&self.csq + &self.t)
    }

    /// `[ξ_t, S_t] + [ξ_t*, S_t*]` expanded from its definition.
    pub fn j_definition(&self) -> WordExpr {
        let (xi, s) = (self.xi(), self.s());
        &xi.commutator(&s) + &xi.adjoint().commutator(&s.adjoint())
    }

    /// The expanded closed form
    /// `(1/r − r)([T1,T2] + [T1*,T2*]) + [D/√t, r T1* + T2] + [D*/√t, r T1 + T2*]`
    /// as it is usually displayed. Expanding the definition gives the negative
    /// of this expression; see [`LiberationReport::display_is_negation`].
    pub fn j_display(&self) -> WordExpr {
        let k = int(1) / &self.r - &self.r;
        let a = &WordExpr::t1().commutator(&WordExpr::t2()) + &WordExpr::t1_star().commutator(&WordExpr::t2_star());
        let d = WordExpr::poly(self.d_scaled.clone());
        let xi = self.xi();
        &(&a.scale(&k) + &d.commutator(&xi)) + &d.adjoint().commutator(&xi.adjoint())
    }
}

/// `LHS − RHS` of the conjugate relation for `xi` against the letter family
/// `family` with target index `target`, on the word `word` with insertions
/// `insertions = (b_0, .., b_n)`:
///
/// `τ(ξ b_0 a_{i_1} b_1 ⋯ a_{i_n} b_n) − Σ_{m: i_m = target} τ(b_0 ⋯ b_{m-1}) τ(b_m ⋯ b_n)`.
pub fn conjugate_residual_family(
    xi: &WordExpr,
    family: &[AffineLetter],
    target: usize,
    word: &[usize],
    insertions: &[PiecewisePoly],
) -> Result<Rational> {
    if insertions.len() != word.len() + 1 {
        return arg(format!("a word of length {} needs {} insertions", word.len(), word.len() + 1));
    }
    if target >= family.len() || word.iter().any(|&i| i >= family.len()) {
        return arg("letter index outside the family");
    }
    let letters: Vec<AffineLetter> = word.iter().map(|&i| family[i].clone()).collect();
    let lhs = tau_expr_then_chain(xi, insertions, &letters)?;
    let mut rhs = Rational::zero();
    for m in 0..word.len() {
        if word[m] != target {
            continue;
        }
        let left = tau_chain(&insertions[..=m], &letters[..m])?;
        if left.is_zero() {
            continue;
        }
        rhs += left * tau_chain(&insertions[m + 1..], &letters[m + 1..])?;
    }
    Ok(lhs - rhs)
}

/// Maximum word length for [`conjugate_residual`].
pub const MAX_CONJUGATE_LEN: usize = 5;

/// Conjugate-relation residual for `xi` as the conjugate vector of `target`
/// within the pair `(S_t, S_t*)` of `model`.
pub fn conjugate_residual(
    model: &DtModel,
    xi: &WordExpr,
    target: SLetter,
    letters: &[SLetter],
    insertions: &[PiecewisePoly],
) -> Result<Rational> {
    if letters.len() > MAX_CONJUGATE_LEN {
        return arg(format!("word length {} exceeds {MAX_CONJUGATE_LEN}", letters.len()));
    }
    let family = [model.letter(SLetter::S), model.letter(SLetter::SStar)];
    let idx = |l: SLetter| if l == SLetter::S { 0 } else { 1 };
    let word: Vec<usize> = letters.iter().map(|&l| idx(l)).collect();
    conjugate_residual_family(xi, &family, idx(target), &word, insertions)
}

/// `2 τ(ξ_t* ξ_t)`, checked against `t/(c²+t) + 1`.
pub fn fisher_exact(t: &Rational, csq: &Rational) -> Result<Rational> {
    let model = DtModel::new(t.clone(), csq.clone(), PiecewisePoly::zero())?;
    let xi = model.xi();
    let value = tau(&(&xi.adjoint() * &xi))? * int(2);
    let closed = model.ratio() + int(1);
    if value != closed {
        return Err(Error::Check(format!("2τ(ξ*ξ) = {} but t/(c²+t)+1 = {}", rfmt(&value), rfmt(&closed))));
    }
    Ok(value)
}

/// One word with an expected and an actual exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactRow {
    pub word: String,
    pub expected: Rational,
    pub actual: Rational,
}

impl ExactRow {
    pub fn pass(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Clone, Debug)]
pub struct CircularityReport {
    pub moments: MomentSequence,
    pub cumulants: MomentSequence,
    pub rows: Vec<ExactRow>,
}

impl CircularityReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(ExactRow::pass)
    }
}

pub const MAX_CIRCULARITY_LEN: usize = 8;

fn circular_letters() -> [AffineLetter; 2] {
    let c = AffineLetter::new(PiecewisePoly::zero(), [int(1), int(0), int(0), int(1)]);
    let cs = c.adjoint();
    [c, cs]
}

/// *-moments of `c = T1 + T2*` over the alphabet `{c, c*}` up to `max_len`.
pub fn circular_moments(max_len: usize) -> Result<MomentSequence> {
    if max_len == 0 || max_len > MAX_CIRCULARITY_LEN {
        return arg(format!("max_len must be in 1..={MAX_CIRCULARITY_LEN}"));
    }
    let letters = circular_letters();
    let mut err = None;
    let moments = MomentSequence::from_fn(vec!["c".into(), "c*".into()], max_len, |w| {
        let ls: Vec<AffineLetter> = w.iter().map(|&i| letters[i].clone()).collect();
        tau_chain(&vec![PiecewisePoly::one(); w.len() + 1], &ls).unwrap_or_else(|e| {
            err = Some(e);
            Rational::zero()
        })
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(moments),
    }
}

/// *-moments of `c = T1 + T2*` up to `max_len`, their free cumulants, and a
/// row per cumulant comparing against the circular pattern.
pub fn circularity_check(max_len: usize) -> Result<CircularityReport> {
    if max_len == 0 || max_len % 2 == 1 || max_len > MAX_CIRCULARITY_LEN {
        return arg(format!("max_len must be even and in 2..={MAX_CIRCULARITY_LEN}"));
    }
    let moments = circular_moments(max_len)?;
    let cumulants = moments_to_cumulants(&moments)?;
    let rows = cumulants
        .values()
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, v)| ExactRow {
            word: cumulants.word_name(w),
            expected: if w == &[0, 1] || w == &[1, 0] { int(1) } else { int(0) },
            actual: v.clone(),
        })
        .collect();
    Ok(CircularityReport { moments, cumulants, rows })
}

pub const MAX_DISTRIBUTION_LEN: usize = 6;

#[derive(Clone, Debug)]
pub struct DistributionReport {
    pub rows: Vec<ExactRow>,
}

impl DistributionReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(ExactRow::pass)
    }
}

/// Compares the *-moments of `√a T1 + √b Y` (`Y` circular and free from
/// `T1`, evaluated by free convolution) with those of `√(a+b) T1 + √b T2*`
/// (evaluated directly). `expected` holds the free-convolution side.
pub fn distribution_identity_check(a: &Rational, b: &Rational, max_len: usize) -> Result<DistributionReport> {
    if max_len == 0 || max_len > MAX_DISTRIBUTION_LEN {
        return arg(format!("max_len must be in 1..={MAX_DISTRIBUTION_LEN}"));
    }
    if a < &Rational::zero() || b < &Rational::zero() {
        return arg("a and b must be non-negative");
    }
    let sa = require_sqrt(a, "a")?;
    let sb = require_sqrt(b, "b")?;
    let sab = require_sqrt(&(a + b), "a+b")?;

    let t_letters = [AffineLetter::gen(Generator::T1), AffineLetter::gen(Generator::T1_STAR)];
    let mut err = None;
    let fam_t = MomentSequence::from_fn(vec!["T1".into(), "T1*".into()], max_len, |w| {
        let ls: Vec<AffineLetter> = w.iter().map(|&i| t_letters[i].clone()).collect();
        tau_chain(&vec![PiecewisePoly::one(); w.len() + 1], &ls).unwrap_or_else(|e| {
            err = Some(e);
            Rational::zero()
        })
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let kappa_y = MomentSequence::from_fn(vec!["Y".into(), "Y*".into()], max_len, |w| {
        if w == [0, 1] || w == [1, 0] {
            int(1)
        } else {
            int(0)
        }
    })?;
    let fam_y = crate::ncpart::cumulants_to_moments(&kappa_y)?;
    let free = FreeProduct::new(&fam_t, &fam_y, max_len)?;

    let z = AffineLetter::new(PiecewisePoly::zero(), [sab.clone(), int(0), int(0), sb.clone()]);
    let rhs_letters = [z.clone(), z.adjoint()];

    let mut rows = Vec::new();
    for w in all_words(2, max_len) {
        let k = w.len();
        let mut lhs = Rational::zero();
        for mask in 0u32..(1 << k) {
            let mut coeff = int(1);
            let mut mixed = Vec::with_capacity(k);
            for (i, &star) in w.iter().enumerate() {
                if mask >> i & 1 == 0 {
                    coeff *= &sa;
                    mixed.push((FreeFamily::A, star));
                } else {
                    coeff *= &sb;
                    mixed.push((FreeFamily::B, star));
                }
            }
            if coeff.is_zero() {
                continue;
            }
            lhs += coeff * free.mixed_moment(&mixed)?;
        }
        let ls: Vec<AffineLetter> = w.iter().map(|&i| rhs_letters[i].clone()).collect();
        let rhs = tau_chain(&vec![PiecewisePoly::one(); k + 1], &ls)?;
        let name = w.iter().map(|&i| if i == 0 { "Z" } else { "Z*" }).collect::<Vec<_>>().join(" ");
        rows.push(ExactRow { word: name, expected: lhs, actual: rhs });
    }
    Ok(DistributionReport { rows })
}

pub const MAX_LIBERATION_LEN: usize = 4;

#[derive(Clone, Debug)]
pub struct LiberationReport {
    /// `τ(j_t w)` per word, `j_t` expanded from its definition.
    pub rows: Vec<ExactRow>,
    /// Whether the displayed closed form equals minus the definition.
    pub display_is_negation: bool,
}

impl LiberationReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(ExactRow::pass)
    }
}

/// `τ(j_t w) = 0` for every *-word `w` in `S_t` of length `≤ max_len`, with
/// `D` the identity function.
pub fn liberation_orthogonality(t: &Rational, csq: &Rational, max_len: usize) -> Result<LiberationReport> {
    if max_len > MAX_LIBERATION_LEN {
        return arg(format!("max_len exceeds {MAX_LIBERATION_LEN}"));
    }
    let model = DtModel::with_identity(t.clone(), csq.clone())?;
    liberation_rows(&model, max_len)
}

pub fn liberation_rows(model: &DtModel, max_len: usize) -> Result<LiberationReport> {
    let j = model.j_definition();
    let display_is_negation = (&j + &model.j_display()).is_zero();
    let mut rows = Vec::new();
    for w in s_words(max_len) {
        let letters: Vec<AffineLetter> = w.iter().map(|&l| model.letter(l)).collect();
        let v = tau_expr_then_chain(&j, &vec![PiecewisePoly::one(); w.len() + 1], &letters)?;
        rows.push(ExactRow { word: s_word_name(&w), expected: int(0), actual: v });
    }
    Ok(LiberationReport { rows, display_is_negation })
}

/// `(τ(T2* a T2 b), ∫∫_{t ≤ x} a(t) b(x) dt dx)`. The right side integrates in
/// the other order, `∫_0^1 a(t) ∫_t^1 b(x) dx dt`, so it does not reuse the
/// covariance that the left side goes through.
pub fn statelemma_kernel_check(a: &PiecewisePoly, b: &PiecewisePoly) -> Result<(Rational, Rational)> {
    let w = WordExpr::word(
        int(1),
        Word { inserts: vec![PiecewisePoly::one(), a.clone(), b.clone()], gens: vec![Generator::T2_STAR, Generator::T2] },
    )?;
    let lhs = tau(&w)?;
    let rhs = a.mul(&b.cov_l()).integral();
    Ok((lhs, rhs))
}

/// Conjugate residual rows for `ξ_t` against `S_t` and `ξ_t*` against `S_t*`,
/// over all words of length `1..=max_len` in `{S, S*}` and all monomial
/// insertions of degree `≤ max_degree`. By multilinearity this covers every
/// polynomial insertion of that degree.
pub fn conjugate_suite(model: &DtModel, max_len: usize, max_degree: usize) -> Result<Vec<ExactRow>> {
    if max_len > MAX_CONJUGATE_LEN {
        return arg(format!("word length {max_len} exceeds {MAX_CONJUGATE_LEN}"));
    }
    let xi = model.xi();
    let targets = [(SLetter::S, xi.clone()), (SLetter::SStar, xi.adjoint())];
    let monos: Vec<PiecewisePoly> = (0..=max_degree).map(PiecewisePoly::monomial).collect();
    let mut rows = Vec::new();
    for w in s_words(max_len).into_iter().filter(|w| !w.is_empty()) {
        let slots = w.len() + 1;
        let count = (max_degree + 1).pow(slots as u32);
        for code in 0..count {
            let mut c = code;
            let mut degrees = Vec::with_capacity(slots);
            for _ in 0..slots {
                degrees.push(c % (max_degree + 1));
                c /= max_degree + 1;
            }
            let ins: Vec<PiecewisePoly> = degrees.iter().map(|&d| monos[d].clone()).collect();
            for (target, x) in &targets {
                let actual = conjugate_residual(model, x, *target, &w, &ins)?;
                let degs: Vec<String> = degrees.iter().map(|d| d.to_string()).collect();
                rows.push(ExactRow {
                    word: format!("{target}: {} [x^{}]", s_word_name(&w), degs.join(",x^")),
                    expected: Rational::zero(),
                    actual,
                });
            }
        }
    }
    Ok(rows)
}

/// [`statelemma_kernel_check`] for all monomial pairs of degree `≤ max_degree`.
pub fn statelemma_suite(max_degree: usize) -> Result<Vec<ExactRow>> {
    let mut rows = Vec::new();
    for i in 0..=max_degree {
        for j in 0..=max_degree {
            let (lhs, rhs) = statelemma_kernel_check(&PiecewisePoly::monomial(i), &PiecewisePoly::monomial(j))?;
            rows.push(ExactRow { word: format!("a=x^{i} b=x^{j}"), expected: rhs, actual: lhs });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpart::enumerate_nc_pairings;
    use crate::rational::frac;

    fn x() -> PiecewisePoly {
        PiecewisePoly::identity()
    }

    #[test]
    fn conjugate_suite_small() {
        let m = DtModel::with_identity(frac(1, 4), frac(3, 4)).unwrap();
        let rows = conjugate_suite(&m, 2, 1).unwrap();
        // (2 + 4 words) × insertion tuples × 2 targets
        assert_eq!(rows.len(), 2 * (2 * 4 + 4 * 8));
        assert!(rows.iter().all(ExactRow::pass));
        assert!(statelemma_suite(2).unwrap().iter().all(ExactRow::pass));
    }

    /// Independent oracle: explicit sum over NC pairings of the generator
    /// positions of a plain word, nesting covariances inside-out.
    fn pairing_oracle(w: &Word) -> PiecewisePoly {
        fn cov(a: Generator, b: Generator, d: &PiecewisePoly) -> PiecewisePoly {
            if a.family != b.family || a.adjoint == b.adjoint {
                PiecewisePoly::zero()
            } else if a.adjoint {
                d.cov_lstar()
            } else {
                d.cov_l()
            }
        }
        fn seg(w: &Word, partner: &[usize], i: usize, j: usize) -> PiecewisePoly {
            if i == j {
                return PiecewisePoly::one();
            }
            let p = partner[i];
            let inner = if p == i + 1 {
                w.inserts[i + 1].clone()
            } else {
                w.inserts[i + 1].mul(&seg(w, partner, i + 1, p)).mul(&w.inserts[p])
            };
            let val = cov(w.gens[i], w.gens[p], &inner);
            if p + 1 == j {
                val
            } else {
                val.mul(&w.inserts[p + 1]).mul(&seg(w, partner, p + 1, j))
            }
        }
        let k = w.len();
        if k == 0 {
            return w.inserts[0].clone();
        }
        let mut acc = PiecewisePoly::zero();
        for pairing in enumerate_nc_pairings(k) {
            let mut partner = vec![0; k];
            for &(a, b) in pairing.pairs() {
                partner[a] = b;
                partner[b] = a;
            }
            acc = acc.add(&w.inserts[0].mul(&seg(w, &partner, 0, k)).mul(&w.inserts[k]));
        }
        acc
    }

    #[test]
    fn covariance_maps() {
        assert_eq!(cov_l(&PiecewisePoly::one()), PiecewisePoly::poly(vec![int(1), int(-1)]));
        assert_eq!(cov_l(&x()), PiecewisePoly::poly(vec![frac(1, 2), int(0), frac(-1, 2)]));
        assert!(cov_l(&PiecewisePoly::zero()).is_zero());
        assert_eq!(cov_lstar(&PiecewisePoly::one()), x());
        assert_eq!(cov_lstar(&x()), PiecewisePoly::poly(vec![int(0), int(0), frac(1, 2)]));
        let step = PiecewisePoly::from_pieces(vec![(int(0), frac(1, 2), vec![int(1)]), (frac(1, 2), int(1), vec![])]).unwrap();
        let expected =
            PiecewisePoly::from_pieces(vec![(int(0), frac(1, 2), vec![int(0), int(1)]), (frac(1, 2), int(1), vec![frac(1, 2)])])
                .unwrap();
        assert_eq!(cov_lstar(&step), expected);
    }

    #[test]
    fn piecewise_text_round_trip() {
        let p = PiecewisePoly::from_pieces(vec![(int(0), frac(1, 3), vec![int(1), frac(-2, 5)]), (frac(1, 3), int(1), vec![])])
            .unwrap();
        let s = p.to_string();
        assert_eq!(s, "[0,1/3]:1,-2/5;[1/3,1]:0");
        assert_eq!(s.parse::<PiecewisePoly>().unwrap(), p);
        assert_eq!("0,1".parse::<PiecewisePoly>().unwrap(), x());
        assert!("[0,1/2]:1".parse::<PiecewisePoly>().is_err());
        assert!("[0,1]:a".parse::<PiecewisePoly>().is_err());
    }

    #[test]
    fn evaluation_is_left_closed() {
        let p = PiecewisePoly::from_pieces(vec![(int(0), frac(1, 2), vec![int(1)]), (frac(1, 2), int(1), vec![int(2)])]).unwrap();
        assert_eq!(p.eval(&frac(1, 2)).unwrap(), int(2));
        assert_eq!(p.eval(&int(0)).unwrap(), int(1));
        assert_eq!(p.eval(&int(1)).unwrap(), int(2));
        assert!(p.eval(&int(2)).is_err());
        assert_eq!(p.eval_f64(0.25), 1.0);
    }

    #[test]
    fn merge_keeps_canonical_form() {
        let a = PiecewisePoly::from_pieces(vec![(int(0), frac(1, 2), vec![int(1)]), (frac(1, 2), int(1), vec![int(1)])]).unwrap();
        assert_eq!(a, PiecewisePoly::one());
    }

    #[test]
    fn ed_moment_examples() {
        let w: WordExpr = "1 T1 T1*".parse().unwrap();
        assert_eq!(ed_moment(&w).unwrap(), PiecewisePoly::poly(vec![int(1), int(-1)]));
        let w: WordExpr = "1 T1 T2*".parse().unwrap();
        assert!(ed_moment(&w).unwrap().is_zero());
        let w: WordExpr = "1 T1 T1* T1 T1*".parse().unwrap();
        let one_minus_x = PiecewisePoly::poly(vec![int(1), int(-1)]);
        let expected = one_minus_x.mul(&one_minus_x).add(&PiecewisePoly::poly(vec![frac(1, 2), int(0), frac(-1, 2)]));
        assert_eq!(ed_moment(&w).unwrap(), expected);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau(&"1 T1 T1*".parse().unwrap()).unwrap(), frac(1, 2));
        assert_eq!(tau(&"1 T1 T1* T1 T1*".parse().unwrap()).unwrap(), frac(2, 3));
        assert_eq!(tau(&WordExpr::one()).unwrap(), int(1));
        let long = WordExpr::gen(Generator::T1).pow(13);
        assert!(ed_moment(&long).is_err());
    }

    #[test]
    fn chain_matches_pairing_oracle_on_all_short_words() {
        let inserts = [PiecewisePoly::one(), x(), PiecewisePoly::poly(vec![int(1), int(0), int(-3)])];
        for k in 0..=6usize {
            let total = 4usize.pow(k as u32);
            for code in 0..total {
                let gens: Vec<Generator> = (0..k).map(|i| Generator::ALL[code / 4usize.pow(i as u32) % 4]).collect();
                let ins: Vec<PiecewisePoly> = (0..=k).map(|i| inserts[(code + i) % 3].clone()).collect();
                let w = Word { inserts: ins, gens };
                let fast = ed_chain(&w.inserts, &word_letters(&w)).unwrap();
                assert_eq!(fast, pairing_oracle(&w), "word {:?}", w.gens);
            }
        }
    }

    #[test]
    fn word_text_round_trip() {
        let w: WordExpr = "2 T1 {[0,1]:0,1} T2* -1/3 T2".parse().unwrap();
        assert_eq!(w.to_string(), "2 T1 {[0,1]:0,1} T2* -1/3 T2");
        assert_eq!(w.to_string().parse::<WordExpr>().unwrap(), w);
        assert_eq!(WordExpr::zero().to_string(), "0");
        assert_eq!("0".parse::<WordExpr>().unwrap(), WordExpr::zero());
        assert!("1 T3".parse::<WordExpr>().is_err());
    }

    #[test]
    fn normalization_merges_and_drops() {
        let a: WordExpr = "1 T1 1 T1 -2 T1".parse().unwrap();
        assert!(a.is_zero());
        let b: WordExpr = "1 {[0,1]:3} T1".parse().unwrap();
        assert_eq!(b, WordExpr::t1().scale(&int(3)));
    }

    #[test]
    fn fisher_exact_values() {
        assert_eq!(fisher_exact(&frac(1, 4), &frac(3, 4)).unwrap(), frac(5, 4));
        assert_eq!(fisher_exact(&int(1), &int(3)).unwrap(), frac(5, 4));
        assert_eq!(fisher_exact(&frac(1, 9), &frac(8, 9)).unwrap(), frac(10, 9));
        assert!(matches!(fisher_exact(&int(1), &int(1)), Err(Error::NotSquare(_))));
        assert!(fisher_exact(&int(0), &int(1)).is_err());
    }

    #[test]
    fn conjugate_examples() {
        let m = DtModel::with_identity(frac(1, 4), frac(3, 4)).unwrap();
        let one = PiecewisePoly::one();
        let r = conjugate_residual(&m, &m.xi(), SLetter::S, &[SLetter::S], &[one.clone(), one.clone()]).unwrap();
        assert!(r.is_zero());
        let z = PiecewisePoly::zero();
        let r = conjugate_residual(&m, &m.xi(), SLetter::S, &[SLetter::S, SLetter::SStar], &[z, x(), one.clone()]).unwrap();
        assert!(r.is_zero());
        let wrong = conjugate_residual(&m, &WordExpr::t2(), SLetter::S, &[SLetter::S], &[one.clone(), one.clone()]).unwrap();
        assert!(!wrong.is_zero());
        assert!(conjugate_residual(&m, &m.xi(), SLetter::S, &[SLetter::S], &[one]).is_err());
    }

    #[test]
    fn model_needs_rational_roots() {
        assert!(matches!(DtModel::with_identity(frac(1, 2), frac(1, 2)), Err(Error::NotSquare(_))));
        // r = 1/2 but √t irrational
        assert!(matches!(DtModel::with_identity(int(2), int(6)), Err(Error::NotSquare(_))));
        assert!(DtModel::new(int(2), int(6), PiecewisePoly::zero()).is_ok());
    }

    #[test]
    fn circularity_moments() {
        let rep = circularity_check(4).unwrap();
        assert_eq!(rep.moments.get_named(&["c", "c*"]).unwrap(), &int(1));
        assert_eq!(rep.moments.get_named(&["c", "c"]).unwrap(), &int(0));
        assert_eq!(rep.moments.get_named(&["c", "c*", "c", "c*"]).unwrap(), &int(2));
        assert!(rep.pass());
        assert!(circularity_check(3).is_err());
        assert!(circularity_check(10).is_err());
    }

    #[test]
    fn distribution_examples() {
        let rep = distribution_identity_check(&frac(9, 25), &frac(16, 25), 2).unwrap();
        let zz = rep.rows.iter().find(|r| r.word == "Z Z*").unwrap();
        assert_eq!(zz.expected, frac(41, 50));
        assert_eq!(zz.actual, frac(41, 50));
        assert!(rep.pass());
        assert!(distribution_identity_check(&frac(9, 25), &int(0), 4).unwrap().pass());
        assert!(matches!(distribution_identity_check(&frac(1, 2), &int(0), 2), Err(Error::NotSquare(_))));
    }

    #[test]
    fn distribution_with_a_zero_is_scaled_circular() {
        let b = frac(4, 9);
        let rep = distribution_identity_check(&int(0), &b, 4).unwrap();
        let circ = circularity_check(4).unwrap();
        for row in &rep.rows {
            let names: Vec<&str> = row.word.split(' ').map(|l| if l == "Z" { "c" } else { "c*" }).collect();
            let scaled = circ.moments.get_named(&names).unwrap() * crate::rational::pow(&frac(2, 3), names.len() as u32);
            assert_eq!(row.actual, scaled, "{}", row.word);
            assert!(row.pass());
        }
    }

    #[test]
    fn liberation_examples() {
        let rep = liberation_orthogonality(&frac(1, 4), &frac(3, 4), 2).unwrap();
        assert!(rep.pass());
        assert!(rep.display_is_negation);
        assert!(rep.rows.iter().any(|r| r.word == "1"));
        assert!(rep.rows.iter().any(|r| r.word == "S S*"));
    }

    #[test]
    fn statelemma_examples() {
        let one = PiecewisePoly::one();
        assert_eq!(statelemma_kernel_check(&one, &one).unwrap(), (frac(1, 2), frac(1, 2)));
        assert_eq!(statelemma_kernel_check(&PiecewisePoly::zero(), &one).unwrap(), (int(0), int(0)));
        assert_eq!(statelemma_kernel_check(&one, &x()).unwrap(), (frac(1, 3), frac(1, 3)));
    }

    #[test]
    fn commutator_of_adjoint_pair() {
        let m = DtModel::with_identity(frac(1, 4), frac(3, 4)).unwrap();
        // τ of a commutator vanishes
        assert!(tau(&m.j_definition()).unwrap().is_zero());
        assert_eq!(m.s().adjoint().adjoint(), m.s());
    }
}
