//! Finite-n matrix models `Z_n = D_n + c T_n` and Monte Carlo estimators.
//!
//! Complex Gaussian entries are stored with `E|z|² = 1/n`, i.e. real and
//! imaginary parts are independent `N(0, 1/(2n))`.
//!
//! Every replicate draws from its own ChaCha stream keyed by the master seed,
//! the replicate index and the role of the matrix being drawn, so results do
//! not depend on scheduling. Replicates run on a rayon pool sized by
//! `DTLAB_THREADS` when that variable is set, sequentially otherwise.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dgauss::{tau_chain, AffineLetter, PiecewisePoly};
use crate::error::{arg, Error, Result};
use crate::rational::{self, fmt as rfmt, int, Rational};

pub const THREADS_ENV: &str = "DTLAB_THREADS";
pub const MAX_WORD_LEN: usize = 12;

/// Distribution of the diagonal entries.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    /// `(re, im, weight)` triples, weights positive and summing to 1.
    Atomic(Vec<(Rational, Rational, Rational)>),
    /// Law of `f(U)` with `U` uniform on `[0,1]`.
    Pushforward(PiecewisePoly),
}

impl MeasureSpec {
    pub fn delta(re: Rational) -> Self {
        MeasureSpec::Atomic(vec![(re, Rational::zero(), Rational::one())])
    }

    pub fn atomic(atoms: Vec<(Rational, Rational, Rational)>) -> Result<Self> {
        if atoms.is_empty() {
            return arg("an atomic measure needs at least one atom");
        }
        if atoms.iter().any(|(_, _, w)| !w.is_positive()) {
            return arg("atom weights must be positive");
        }
        let total: Rational = atoms.iter().map(|(_, _, w)| w.clone()).sum();
        if !total.is_one() {
            return arg(format!("atom weights sum to {}, not 1", rfmt(&total)));
        }
        Ok(MeasureSpec::Atomic(atoms))
    }

    pub fn is_real(&self) -> bool {
        match self {
            MeasureSpec::Atomic(a) => a.iter().all(|(_, im, _)| im.is_zero()),
            MeasureSpec::Pushforward(_) => true,
        }
    }

    /// The measure as an element of 𝒟 with the same law under Lebesgue
    /// measure, when that element is exactly representable: a step function
    /// for real atoms, `f` itself for a pushforward.
    pub fn as_diagonal_function(&self) -> Option<PiecewisePoly> {
        match self {
            MeasureSpec::Pushforward(f) => Some(f.clone()),
            MeasureSpec::Atomic(atoms) => {
                if !self.is_real() {
                    return None;
                }
                let mut lo = Rational::zero();
                let mut pieces = Vec::with_capacity(atoms.len());
                for (re, _, w) in atoms {
                    let hi = &lo + w;
                    pieces.push((lo.clone(), hi.clone(), vec![re.clone()]));
                    lo = hi;
                }
                PiecewisePoly::from_pieces(pieces).ok()
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        let u: f64 = rng.random();
        match self {
            MeasureSpec::Pushforward(f) => Complex64::new(f.eval_f64(u), 0.0),
            MeasureSpec::Atomic(atoms) => {
                let mut acc = 0.0;
                for (re, im, w) in atoms {
                    acc += rational::to_f64(w);
                    if u < acc {
                        return Complex64::new(rational::to_f64(re), rational::to_f64(im));
                    }
                }
                let (re, im, _) = atoms.last().unwrap();
                Complex64::new(rational::to_f64(re), rational::to_f64(im))
            }
        }
    }
}

fn fmt_atom(re: &Rational, im: &Rational) -> String {
    if im.is_zero() {
        rfmt(re)
    } else {
        format!("({},{})", rfmt(re), rfmt(im))
    }
}

fn parse_atom(s: &str) -> Result<(Rational, Rational)> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        let (re, im) = inner.split_once(',').ok_or_else(|| Error::Parse(format!("bad complex atom `{s}`")))?;
        Ok((rational::parse_decimal(re)?, rational::parse_decimal(im)?))
    } else {
        Ok((rational::parse_decimal(s)?, Rational::zero()))
    }
}

impl fmt::Display for MeasureSpec {
    /// `delta:a`, `atomic:a@w;(re,im)@w;...` or `pushforward:<piecewise>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSpec::Atomic(atoms) if atoms.len() == 1 => write!(f, "delta:{}", fmt_atom(&atoms[0].0, &atoms[0].1)),
            MeasureSpec::Atomic(atoms) => {
                let parts: Vec<String> = atoms.iter().map(|(re, im, w)| format!("{}@{}", fmt_atom(re, im), rfmt(w))).collect();
                write!(f, "atomic:{}", parts.join(";"))
            }
            MeasureSpec::Pushforward(p) => write!(f, "pushforward:{p}"),
        }
    }
}

impl FromStr for MeasureSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.trim().split_once(':').ok_or_else(|| Error::Parse(format!("measure `{s}` has no kind prefix")))?;
        let to_parse = |e: Error| match e {
            Error::Argument(m) => Error::Parse(m),
            other => other,
        };
        match kind {
            "delta" => {
                let (re, im) = parse_atom(body)?;
                Ok(MeasureSpec::Atomic(vec![(re, im, Rational::one())]))
            }
            "atomic" => {
                let mut atoms = Vec::new();
                for part in body.split(';') {
                    let (a, w) = part.rsplit_once('@').ok_or_else(|| Error::Parse(format!("atom `{part}` lacks `@weight`")))?;
                    let (re, im) = parse_atom(a)?;
                    atoms.push((re, im, rational::parse_decimal(w)?));
                }
                MeasureSpec::atomic(atoms).map_err(to_parse)
            }
            "pushforward" => Ok(MeasureSpec::Pushforward(body.parse()?)),
            _ => Err(Error::Parse(format!("unknown measure kind `{kind}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub mu: MeasureSpec,
    pub c: f64,
    pub n: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(mu: MeasureSpec, c: f64, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return arg("matrix dimension must be at least 1");
        }
        if !(c >= 0.0 && c.is_finite()) {
            return arg("c must be a finite non-negative number");
        }
        Ok(EnsembleSpec { mu, c, n, seed })
    }

    pub fn with_n(&self, n: usize) -> Self {
        EnsembleSpec { n, ..self.clone() }
    }
}

/// Which matrix of a replicate a stream feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Diagonal = 1,
    Upper1 = 2,
    Upper2 = 3,
    Circular = 4,
    Auxiliary = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The random stream for `(seed, replicate, role)`.
pub fn replicate_rng(seed: u64, replicate: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(replicate)));
    rng.set_stream(role as u64);
    rng
}

/// Runs `f` for replicates `0..reps` and returns results in replicate order.
pub fn map_replicates<T: Send>(reps: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(threads) if threads > 1 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
            pool.install(|| (0..reps as u64).into_par_iter().map(&f).collect())
        }
        _ => (0..reps as u64).map(f).collect(),
    }
}

fn gaussian_entry(rng: &mut ChaCha8Rng, sd: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sd, im * sd)
}

pub fn sample_diagonal_entries(mu: &MeasureSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n).map(|_| mu.draw(rng)).collect()
}

pub fn sample_diagonal(mu: &MeasureSpec, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&DVector::from_vec(sample_diagonal_entries(mu, n, rng)))
}

/// Strictly upper triangular with `N(0, 1/(2n))` real and imaginary parts.
pub fn sample_strict_upper(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let sd = (0.5 / n as f64).sqrt();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = gaussian_entry(rng, sd);
        }
    }
    m
}

/// All entries i.i.d. with `E|z|² = 1/n`.
pub fn sample_ginibre_circular(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let sd = (0.5 / n as f64).sqrt();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = gaussian_entry(rng, sd);
        }
    }
    m
}

/// `D_n + c T_n` for one replicate.
pub fn sample_dt(spec: &EnsembleSpec, replicate: u64) -> DMatrix<Complex64> {
    let d = sample_diagonal(&spec.mu, spec.n, &mut replicate_rng(spec.seed, replicate, Role::Diagonal));
    if spec.c == 0.0 {
        return d;
    }
    d + sample_strict_upper(spec.n, &mut replicate_rng(spec.seed, replicate, Role::Upper1)) * Complex64::new(spec.c, 0.0)
}

/// Complex matrix held as separate real and imaginary parts, which lets
/// products run on real GEMM.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl SplitMatrix {
    pub fn from_complex(m: &DMatrix<Complex64>) -> Self {
        SplitMatrix { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        self.re.zip_map(&self.im, Complex64::new)
    }

    pub fn identity(n: usize) -> Self {
        SplitMatrix { re: DMatrix::identity(n, n), im: DMatrix::zeros(n, n) }
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn mul(&self, o: &Self) -> Self {
        SplitMatrix { re: &self.re * &o.re - &self.im * &o.im, im: &self.re * &o.im + &self.im * &o.re }
    }

    pub fn adjoint(&self) -> Self {
        SplitMatrix { re: self.re.transpose(), im: -self.im.transpose() }
    }

    pub fn add(&self, o: &Self) -> Self {
        SplitMatrix { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn sub(&self, o: &Self) -> Self {
        SplitMatrix { re: &self.re - &o.re, im: &self.im - &o.im }
    }

    pub fn scale(&self, s: f64) -> Self {
        SplitMatrix { re: &self.re * s, im: &self.im * s }
    }

    pub fn trace(&self) -> Complex64 {
        Complex64::new(self.re.trace(), self.im.trace())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im[(i, j)])
    }
}

/// `Tr(AB)`, summed so that `trace_product(a, b)` and `trace_product(b, a)`
/// agree bit for bit.
pub fn trace_product(a: &SplitMatrix, b: &SplitMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::zero();
    for i in 0..n {
        acc += a.get(i, i) * b.get(i, i);
        for j in i + 1..n {
            acc += a.get(i, j) * b.get(j, i) + a.get(j, i) * b.get(i, j);
        }
    }
    acc
}

/// Normalized trace of the product of `letters`.
fn tr_word(letters: &[&SplitMatrix], n: usize) -> Complex64 {
    let nf = n as f64;
    match letters {
        [] => Complex64::one(),
        [a] => a.trace() / nf,
        [first, middle @ .., last] => {
            let mut p = (*first).clone();
            for m in middle {
                p = p.mul(m);
            }
            trace_product(&p, last) / nf
        }
    }
}

/// Letters a matrix word may use. `Z = D + c T1`; `T1`, `T2` are independent
/// strictly upper triangular samples, `Y` a Ginibre sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixLetter {
    Z,
    ZStar,
    D,
    DStar,
    T1,
    T1Star,
    T2,
    T2Star,
    Y,
    YStar,
}

impl MatrixLetter {
    const NAMES: [(&'static str, MatrixLetter); 10] = [
        ("Z*", MatrixLetter::ZStar),
        ("Z", MatrixLetter::Z),
        ("D*", MatrixLetter::DStar),
        ("D", MatrixLetter::D),
        ("T1*", MatrixLetter::T1Star),
        ("T1", MatrixLetter::T1),
        ("T2*", MatrixLetter::T2Star),
        ("T2", MatrixLetter::T2),
        ("Y*", MatrixLetter::YStar),
        ("Y", MatrixLetter::Y),
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, l)| *l == self).unwrap().0
    }

    pub fn adjoint(self) -> Self {
        use MatrixLetter::*;
        match self {
            Z => ZStar,
            ZStar => Z,
            D => DStar,
            DStar => D,
            T1 => T1Star,
            T1Star => T1,
            T2 => T2Star,
            T2Star => T2,
            Y => YStar,
            YStar => Y,
        }
    }
}

/// A word over [`MatrixLetter`]s.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatrixWord(pub Vec<MatrixLetter>);

impl MatrixWord {
    pub fn adjoint(&self) -> Self {
        MatrixWord(self.0.iter().rev().map(|l| l.adjoint()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for MatrixWord {
    /// Letters separated by spaces; the empty word is `1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let names: Vec<&str> = self.0.iter().map(|l| l.name()).collect();
        write!(f, "{}", names.join(" "))
    }
}

impl FromStr for MatrixWord {
    type Err = Error;

    /// Letters with optional whitespace; parenthesised groups may carry a
    /// power, as in `(Z Z*)^2`. `1` is the empty word.
    fn from_str(s: &str) -> Result<Self> {
        fn group(s: &[u8], pos: &mut usize, depth: usize) -> Result<Vec<MatrixLetter>> {
            let mut out = Vec::new();
            while *pos < s.len() {
                let c = s[*pos];
                if c.is_ascii_whitespace() {
                    *pos += 1;
                } else if c == b'(' {
                    *pos += 1;
                    let inner = group(s, pos, depth + 1)?;
                    if s.get(*pos) != Some(&b')') {
                        return Err(Error::Parse("unbalanced parenthesis".into()));
                    }
                    *pos += 1;
                    let mut k = 1;
                    if s.get(*pos) == Some(&b'^') {
                        *pos += 1;
                        let start = *pos;
                        while s.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
                            *pos += 1;
                        }
                        k = std::str::from_utf8(&s[start..*pos])
                            .unwrap()
                            .parse()
                            .map_err(|_| Error::Parse("missing exponent".into()))?;
                    }
                    for _ in 0..k {
                        out.extend_from_slice(&inner);
                    }
                } else if c == b')' {
                    if depth == 0 {
                        return Err(Error::Parse("unbalanced parenthesis".into()));
                    }
                    return Ok(out);
                } else if c == b'1' && depth == 0 && out.is_empty() && s[*pos + 1..].iter().all(|b| b.is_ascii_whitespace()) {
                    *pos = s.len();
                } else {
                    let rest = &s[*pos..];
                    let (name, letter) = MatrixLetter::NAMES
                        .iter()
                        .find(|(name, _)| rest.starts_with(name.as_bytes()))
                        .ok_or_else(|| Error::Parse(format!("unknown letter at `{}`", String::from_utf8_lossy(rest))))?;
                    out.push(*letter);
                    *pos += name.len();
                }
            }
            if depth > 0 {
                return Err(Error::Parse("unbalanced parenthesis".into()));
            }
            Ok(out)
        }
        let mut pos = 0;
        Ok(MatrixWord(group(s.as_bytes(), &mut pos, 0)?))
    }
}

/// One replicate's matrices, sampled on demand.
struct Replicate {
    d: Option<SplitMatrix>,
    t1: Option<SplitMatrix>,
    t2: Option<SplitMatrix>,
    y: Option<SplitMatrix>,
    z: Option<SplitMatrix>,
    adj: std::collections::HashMap<MatrixLetter, SplitMatrix>,
}

impl Replicate {
    fn new(spec: &EnsembleSpec, rep: u64, word: &[MatrixLetter]) -> Self {
        use MatrixLetter::*;
        let uses = |ls: &[MatrixLetter]| word.iter().any(|l| ls.contains(l));
        let n = spec.n;
        let need_z = uses(&[Z, ZStar]);
        let d = (need_z || uses(&[D, DStar]))
            .then(|| SplitMatrix::from_complex(&sample_diagonal(&spec.mu, n, &mut replicate_rng(spec.seed, rep, Role::Diagonal))));
        let t1 = (need_z || uses(&[T1, T1Star]))
            .then(|| SplitMatrix::from_complex(&sample_strict_upper(n, &mut replicate_rng(spec.seed, rep, Role::Upper1))));
        let t2 = uses(&[T2, T2Star])
            .then(|| SplitMatrix::from_complex(&sample_strict_upper(n, &mut replicate_rng(spec.seed, rep, Role::Upper2))));
        let y = uses(&[Y, YStar])
            .then(|| SplitMatrix::from_complex(&sample_ginibre_circular(n, &mut replicate_rng(spec.seed, rep, Role::Circular))));
        let z = need_z.then(|| d.as_ref().unwrap().add(&t1.as_ref().unwrap().scale(spec.c)));
        let mut r = Replicate { d, t1, t2, y, z, adj: Default::default() };
        for &l in word {
            let base = r.base(l).clone();
            if l != r.base_letter(l) {
                r.adj.entry(l).or_insert_with(|| base.adjoint());
            }
        }
        r
    }

    fn base_letter(&self, l: MatrixLetter) -> MatrixLetter {
        use MatrixLetter::*;
        match l {
            ZStar | DStar | T1Star | T2Star | YStar => l.adjoint(),
            _ => l,
        }
    }

    fn base(&self, l: MatrixLetter) -> &SplitMatrix {
        use MatrixLetter::*;
        match self.base_letter(l) {
            Z => self.z.as_ref(),
            D => self.d.as_ref(),
            T1 => self.t1.as_ref(),
            T2 => self.t2.as_ref(),
            Y => self.y.as_ref(),
            _ => unreachable!(),
        }
        .expect("sampled for this word")
    }

    fn get(&self, l: MatrixLetter) -> &SplitMatrix {
        if l == self.base_letter(l) {
            self.base(l)
        } else {
            &self.adj[&l]
        }
    }

    fn tr(&self, w: &MatrixWord, n: usize) -> Complex64 {
        let ls: Vec<&SplitMatrix> = w.0.iter().map(|&l| self.get(l)).collect();
        tr_word(&ls, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub word: String,
    /// Mean of the real part of the normalized trace.
    pub mean: f64,
    /// Mean of the imaginary part.
    pub mean_im: f64,
    pub stderr: f64,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
}

/// Mean and `sd/√k` of a sample, summed in order.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn estimate_from(word: String, samples: &[Complex64], spec: &EnsembleSpec) -> MomentEstimate {
    let re: Vec<f64> = samples.iter().map(|z| z.re).collect();
    let im: Vec<f64> = samples.iter().map(|z| z.im).collect();
    let (mean, stderr) = mean_stderr(&re);
    let (mean_im, _) = mean_stderr(&im);
    MomentEstimate { word, mean, mean_im, stderr, reps: samples.len(), n: spec.n, seed: spec.seed }
}

/// Per-replicate normalized traces of each word, all words sharing the same
/// samples within a replicate. Indexed `[word][replicate]`.
pub fn replicate_traces(spec: &EnsembleSpec, words: &[MatrixWord], reps: usize) -> Result<Vec<Vec<Complex64>>> {
    if let Some(w) = words.iter().find(|w| w.len() > MAX_WORD_LEN) {
        return arg(format!("word `{w}` is longer than {MAX_WORD_LEN}"));
    }
    let all: Vec<MatrixLetter> = words.iter().flat_map(|w| w.0.iter().copied()).collect();
    let per_rep = map_replicates(reps, |rep| {
        let r = Replicate::new(spec, rep, &all);
        words.iter().map(|w| r.tr(w, spec.n)).collect::<Vec<_>>()
    });
    Ok((0..words.len()).map(|k| per_rep.iter().map(|v| v[k]).collect()).collect())
}

/// Monte Carlo estimates of `τ_n(w)` for several words from shared samples.
pub fn estimate_star_moments(spec: &EnsembleSpec, words: &[MatrixWord], reps: usize) -> Result<Vec<MomentEstimate>> {
    if reps < 2 {
        return arg("at least 2 replicates are needed for a standard error");
    }
    let traces = replicate_traces(spec, words, reps)?;
    Ok(words.iter().zip(&traces).map(|(w, s)| estimate_from(w.to_string(), s, spec)).collect())
}

pub fn estimate_star_moment(spec: &EnsembleSpec, word: &MatrixWord, reps: usize) -> Result<MomentEstimate> {
    Ok(estimate_star_moments(spec, std::slice::from_ref(word), reps)?.remove(0))
}

/// The limiting value of `τ(w)` when the exact engine can produce it: `μ`
/// must be representable in 𝒟, `c` rational, and `w` built from `Z`, `D`,
/// `T1`, `T2` and their adjoints.
///
/// The engine places `D` in 𝒟 as a function of the same variable that
/// carries the covariance of `T1`, `T2`. That matches a sorted diagonal, while
/// the sampler draws i.i.d. entries whose positions are independent of their
/// values. The two limits agree when `D` is constant or `w` has no
/// triangular part, so other cases return `None`.
pub fn exact_star_moment(mu: &MeasureSpec, c: f64, word: &MatrixWord) -> Option<Result<Rational>> {
    use MatrixLetter::*;
    let d = mu.as_diagonal_function()?;
    let constant = d.as_constant().is_some();
    let triangular = word.0.iter().any(|l| !matches!(l, D | DStar)) && c != 0.0;
    if !constant && triangular {
        return None;
    }
    let c = Rational::from_float(c)?;
    let zero = PiecewisePoly::zero();
    let z = || Rational::zero();
    let letters: Option<Vec<AffineLetter>> = word
        .0
        .iter()
        .map(|l| {
            Some(match l {
                Z => AffineLetter::new(d.clone(), [c.clone(), z(), z(), z()]),
                ZStar => AffineLetter::new(d.clone(), [z(), c.clone(), z(), z()]),
                D | DStar => AffineLetter::new(d.clone(), [z(), z(), z(), z()]),
                T1 => AffineLetter::new(zero.clone(), [int(1), z(), z(), z()]),
                T1Star => AffineLetter::new(zero.clone(), [z(), int(1), z(), z()]),
                T2 => AffineLetter::new(zero.clone(), [z(), z(), int(1), z()]),
                T2Star => AffineLetter::new(zero.clone(), [z(), z(), z(), int(1)]),
                Y | YStar => return None,
            })
        })
        .collect();
    let letters = letters?;
    Some(tau_chain(&vec![PiecewisePoly::one(); letters.len() + 1], &letters))
}

/// Largest eigenvalue of a Hermitian positive semidefinite operator given
/// by `apply`, by Lanczos with full reorthogonalization.
fn lanczos_top(n: usize, apply: impl Fn(&DVector<Complex64>) -> DVector<Complex64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(n, |_, _| gaussian_entry(&mut rng, 1.0));
    v /= Complex64::new(v.norm(), 0.0);
    let max_iter = n.min(300);
    let mut basis: Vec<DVector<Complex64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    for j in 0..max_iter {
        let mut w = apply(&basis[j]);
        alpha.push(basis[j].dotc(&w).re);
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&w);
                w.axpy(-proj, b, Complex64::one());
            }
        }
        let b = w.norm();
        let k = alpha.len();
        if k % 8 == 0 || b <= 1e-13 * alpha[0].abs() || j + 1 == max_iter {
            let t = DMatrix::from_fn(k, k, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let (idx, &top) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            theta = top;
            // |λ − θ| ≤ resid for Hermitian operators
            let resid = b * eig.eigenvectors[(k - 1, idx)].abs();
            if b <= 1e-13 * top.abs().max(f64::MIN_POSITIVE) || resid <= 1e-10 * top.abs() || j + 1 == max_iter {
                break;
            }
        }
        beta.push(b);
        basis.push(w / Complex64::new(b, 0.0));
    }
    theta.max(0.0)
}

/// Largest singular value of `m`.
pub fn largest_singular_value(m: &DMatrix<Complex64>) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    let (re, im) = (m.map(|z| z.re), m.map(|z| z.im));
    lanczos_top(c, |v| {
        let (vr, vi) = (v.map(|z| z.re), v.map(|z| z.im));
        let yr = &re * &vr - &im * &vi;
        let yi = &re * &vi + &im * &vr;
        let zr = re.tr_mul(&yr) + im.tr_mul(&yi);
        let zi = re.tr_mul(&yi) - im.tr_mul(&yr);
        zr.zip_map(&zi, Complex64::new)
    })
    .sqrt()
}

/// Mean largest singular value of `Z_n` over replicates.
pub fn norm_estimate(spec: &EnsembleSpec, reps: usize) -> Result<MomentEstimate> {
    if reps == 0 {
        return arg("at least one replicate is needed");
    }
    let values = map_replicates(reps, |rep| largest_singular_value(&sample_dt(spec, rep)));
    let (mean, stderr) = mean_stderr(&values);
    Ok(MomentEstimate { word: "||Z||".into(), mean, mean_im: 0.0, stderr, reps, n: spec.n, seed: spec.seed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutoutReport {
    pub n: usize,
    pub k_blocks: usize,
    /// `‖Σ_i p_i T p_i‖` per replicate.
    pub block_norms: Vec<f64>,
    /// `√(e/k)`.
    pub reference: f64,
    /// Largest Frobenius norm over replicates of the part of
    /// `[(D + c T1)*, T2*]` above the block diagonal.
    pub upper_block_residual: f64,
}

impl CutoutReport {
    pub fn max_block_norm(&self) -> f64 {
        self.block_norms.iter().cloned().fold(0.0, f64::max)
    }
}

/// Block compression of `T` to `k` equal coordinate blocks, and the
/// triangularity residual. With a real `μ` the diagonal is sorted ascending
/// first so the coordinate blocks play the role of spectral projections of
/// `D`.
pub fn cutout_residual(spec: &EnsembleSpec, k_blocks: usize, reps: usize) -> Result<CutoutReport> {
    let n = spec.n;
    if k_blocks == 0 || n % k_blocks != 0 {
        return arg(format!("k = {k_blocks} does not divide n = {n}"));
    }
    if reps == 0 {
        return arg("at least one replicate is needed");
    }
    let m = n / k_blocks;
    let rows = map_replicates(reps, |rep| {
        let mut diag = sample_diagonal_entries(&spec.mu, n, &mut replicate_rng(spec.seed, rep, Role::Diagonal));
        if spec.mu.is_real() {
            diag.sort_by(|a, b| a.re.total_cmp(&b.re));
        }
        let t1 = sample_strict_upper(n, &mut replicate_rng(spec.seed, rep, Role::Upper1));
        let t2 = sample_strict_upper(n, &mut replicate_rng(spec.seed, rep, Role::Upper2));
        let block_norm = (0..k_blocks)
            .map(|b| largest_singular_value(&t1.view((b * m, b * m), (m, m)).into_owned()))
            .fold(0.0, f64::max);
        let z = DMatrix::from_diagonal(&DVector::from_vec(diag)) + &t1 * Complex64::new(spec.c, 0.0);
        let a = SplitMatrix::from_complex(&z.adjoint());
        let b = SplitMatrix::from_complex(&t2.adjoint());
        let comm = a.mul(&b).sub(&b.mul(&a));
        let mut upper = 0.0;
        for col in 0..n {
            for row in 0..(col / m) * m {
                upper += comm.get(row, col).norm_sqr();
            }
        }
        (block_norm, upper.sqrt())
    });
    Ok(CutoutReport {
        n,
        k_blocks,
        block_norms: rows.iter().map(|r| r.0).collect(),
        reference: (std::f64::consts::E / k_blocks as f64).sqrt(),
        upper_block_residual: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// A word over `{S_t, S_t*}` for the finite-n liberation experiment.
pub type SWord = Vec<crate::dgauss::SLetter>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiberationEstimate {
    pub word: String,
    pub n: usize,
    pub estimate: MomentEstimate,
}

/// `tr_n(j_t w)` at finite n, where `S_t = D/√t + (1/r) T1 + T2*`,
/// `ξ_t = r T1* + T2`, `r = √(t/(c²+t))` and `j_t = [ξ_t,S_t] + [ξ_t*,S_t*]`.
///
/// Each commutator trace is formed as a difference of two
/// [`trace_product`]s, so the empty word gives exactly zero per replicate.
pub fn liberation_mc(spec: &EnsembleSpec, t: f64, words: &[SWord], ns: &[usize], reps: usize) -> Result<Vec<LiberationEstimate>> {
    use crate::dgauss::{s_word_name, SLetter};
    if !(t > 0.0) {
        return arg("t must be positive");
    }
    if reps < 2 {
        return arg("at least 2 replicates are needed for a standard error");
    }
    let csq = spec.c * spec.c;
    if csq == 0.0 {
        return arg("c must be positive for the liberation model");
    }
    let r = (t / (csq + t)).sqrt();
    let mut out = Vec::new();
    for &n in ns {
        let sp = spec.with_n(n);
        let per_rep = map_replicates(reps, |rep| {
            let d = SplitMatrix::from_complex(&sample_diagonal(&sp.mu, n, &mut replicate_rng(sp.seed, rep, Role::Diagonal)));
            let t1 = SplitMatrix::from_complex(&sample_strict_upper(n, &mut replicate_rng(sp.seed, rep, Role::Upper1)));
            let t2 = SplitMatrix::from_complex(&sample_strict_upper(n, &mut replicate_rng(sp.seed, rep, Role::Upper2)));
            let s = d.scale(1.0 / t.sqrt()).add(&t1.scale(1.0 / r)).add(&t2.adjoint());
            let ss = s.adjoint();
            let xi = t1.adjoint().scale(r).add(&t2);
            let xis = xi.adjoint();
            words
                .iter()
                .map(|w| {
                    let tail = w.iter().fold(None::<SplitMatrix>, |acc, l| {
                        let m = if *l == SLetter::S { &s } else { &ss };
                        Some(match acc {
                            None => m.clone(),
                            Some(p) => p.mul(m),
                        })
                    });
                    let tr = match &tail {
                        None => {
                            trace_product(&xi, &s) - trace_product(&s, &xi) + trace_product(&xis, &ss)
                                - trace_product(&ss, &xis)
                        }
                        Some(wm) => {
                            trace_product(&xi, &s.mul(wm)) - trace_product(&s, &xi.mul(wm)) + trace_product(&xis, &ss.mul(wm))
                                - trace_product(&ss, &xis.mul(wm))
                        }
                    };
                    tr / n as f64
                })
                .collect::<Vec<_>>()
        });
        for (k, w) in words.iter().enumerate() {
            let samples: Vec<Complex64> = per_rep.iter().map(|v| v[k]).collect();
            out.push(LiberationEstimate {
                word: s_word_name(w),
                n,
                estimate: estimate_from(format!("j {}", s_word_name(w)), &samples, &sp),
            });
        }
    }
    Ok(out)
}

const MATRIX_MAGIC: &str = "DTLAB-MATRIX";

/// Writes `m` as a one-line header
/// `DTLAB-MATRIX rows=R cols=C dtype=complex128-le` followed by column-major
/// little-endian `(re, im)` f64 pairs.
pub fn write_matrix(w: &mut impl Write, m: &DMatrix<Complex64>) -> Result<()> {
    writeln!(w, "{MATRIX_MAGIC} rows={} cols={} dtype=complex128-le", m.nrows(), m.ncols())?;
    let mut buf = Vec::with_capacity(16 * m.len());
    for z in m.iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix(r: &mut impl Read) -> Result<DMatrix<Complex64>> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Parse("matrix header is not terminated".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 256 {
            return Err(Error::Parse("matrix header too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::Parse("matrix header is not UTF-8".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MATRIX_MAGIC) {
        return Err(Error::Parse("not a DTLAB-MATRIX file".into()));
    }
    let (mut rows, mut cols, mut dtype) = (None, None, None);
    for p in parts {
        match p.split_once('=') {
            Some(("rows", v)) => rows = v.parse::<usize>().ok(),
            Some(("cols", v)) => cols = v.parse::<usize>().ok(),
            Some(("dtype", v)) => dtype = Some(v.to_string()),
            _ => return Err(Error::Parse(format!("unexpected header field `{p}`"))),
        }
    }
    let (rows, cols) = rows.zip(cols).ok_or_else(|| Error::Parse("header lacks rows/cols".into()))?;
    if dtype.as_deref() != Some("complex128-le") {
        return Err(Error::Parse("unsupported dtype".into()));
    }
    let mut buf = vec![0u8; 16 * rows * cols];
    r.read_exact(&mut buf).map_err(|_| Error::Parse("matrix payload is truncated".into()))?;
    let f = |k: usize| f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().unwrap());
    Ok(DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|k| Complex64::new(f(2 * k), f(2 * k + 1)))))
}

/// CSV rows `word,mean,stderr,reps,n,seed`.
pub fn write_estimates_csv(w: impl Write, estimates: &[MomentEstimate]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wr.write_record(["word", "mean", "stderr", "reps", "n", "seed"]).map_err(io)?;
    for e in estimates {
        wr.write_record([
            e.word.clone(),
            e.mean.to_string(),
            e.stderr.to_string(),
            e.reps.to_string(),
            e.n.to_string(),
            e.seed.to_string(),
        ])
        .map_err(io)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::frac;

    fn delta0(c: f64, n: usize) -> EnsembleSpec {
        EnsembleSpec::new(MeasureSpec::delta(int(0)), c, n, 7).unwrap()
    }

    #[test]
    fn measure_text_round_trip() {
        for s in ["delta:0", "delta:(1/2,-1)", "atomic:0@1/2;1@1/2", "pushforward:[0,1]:0,1"] {
            let m: MeasureSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        let m: MeasureSpec = "atomic:0.5@0.25;(1,2)@0.75".parse().unwrap();
        assert_eq!(m.to_string(), "atomic:1/2@1/4;(1,2)@3/4");
        assert!("atomic:0@1/2".parse::<MeasureSpec>().is_err());
        assert!("atomic:0@-1/2;1@3/2".parse::<MeasureSpec>().is_err());
        assert!("gauss:0".parse::<MeasureSpec>().is_err());
    }

    #[test]
    fn step_function_of_atoms() {
        let m: MeasureSpec = "atomic:0@1/2;1@1/2".parse().unwrap();
        let f = m.as_diagonal_function().unwrap();
        assert_eq!(f.integral(), frac(1, 2));
        assert!("delta:(0,1)".parse::<MeasureSpec>().unwrap().as_diagonal_function().is_none());
    }

    #[test]
    fn delta_diagonal() {
        let mu = MeasureSpec::delta(frac(3, 2));
        let d = sample_diagonal(&mu, 5, &mut replicate_rng(1, 0, Role::Diagonal));
        for i in 0..5 {
            assert_eq!(d[(i, i)], Complex64::new(1.5, 0.0));
        }
    }

    #[test]
    fn strict_upper_structure() {
        let t = sample_strict_upper(1, &mut replicate_rng(1, 0, Role::Upper1));
        assert_eq!(t[(0, 0)], Complex64::zero());
        let t = sample_strict_upper(6, &mut replicate_rng(1, 0, Role::Upper1));
        for i in 0..6 {
            for j in 0..=i {
                assert_eq!(t[(i, j)], Complex64::zero());
            }
        }
        assert!(t[(0, 5)] != Complex64::zero());
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = sample_dt(&delta0(1.0, 8), 3);
        let b = sample_dt(&delta0(1.0, 8), 3);
        let c = sample_dt(&delta0(1.0, 8), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let s1 = sample_strict_upper(8, &mut replicate_rng(7, 3, Role::Upper1));
        let s2 = sample_strict_upper(8, &mut replicate_rng(7, 3, Role::Upper2));
        assert_ne!(s1, s2);
    }

    #[test]
    fn c_zero_is_diagonal() {
        let spec = EnsembleSpec::new("atomic:0@1/2;1@1/2".parse().unwrap(), 0.0, 6, 9).unwrap();
        let z = sample_dt(&spec, 0);
        let d = sample_diagonal(&spec.mu, 6, &mut replicate_rng(9, 0, Role::Diagonal));
        assert_eq!(z, d);
    }

    #[test]
    fn word_parsing() {
        let w: MatrixWord = "(Z Z*)^2".parse().unwrap();
        assert_eq!(w.to_string(), "Z Z* Z Z*");
        assert_eq!("ZZ*".parse::<MatrixWord>().unwrap().to_string(), "Z Z*");
        assert_eq!("1".parse::<MatrixWord>().unwrap(), MatrixWord(vec![]));
        assert_eq!("T1* Y".parse::<MatrixWord>().unwrap().0, vec![MatrixLetter::T1Star, MatrixLetter::Y]);
        assert!("(Z".parse::<MatrixWord>().is_err());
        assert!("Q".parse::<MatrixWord>().is_err());
        assert_eq!(w.adjoint(), w);
    }

    #[test]
    fn trace_product_is_symmetric_bitwise() {
        let a = SplitMatrix::from_complex(&sample_ginibre_circular(7, &mut replicate_rng(1, 0, Role::Circular)));
        let b = SplitMatrix::from_complex(&sample_ginibre_circular(7, &mut replicate_rng(2, 0, Role::Circular)));
        assert_eq!(trace_product(&a, &b), trace_product(&b, &a));
        let direct = a.mul(&b).trace();
        assert!((direct - trace_product(&a, &b)).norm() < 1e-12);
    }

    #[test]
    fn split_product_matches_complex() {
        let a = sample_ginibre_circular(5, &mut replicate_rng(3, 0, Role::Circular));
        let b = sample_ginibre_circular(5, &mut replicate_rng(4, 0, Role::Circular));
        let p = SplitMatrix::from_complex(&a).mul(&SplitMatrix::from_complex(&b)).to_complex();
        assert!((p - &a * &b).norm() < 1e-12);
    }

    #[test]
    fn norm_of_scalar_matrix() {
        let spec = EnsembleSpec::new(MeasureSpec::delta(int(-2)), 0.0, 16, 1).unwrap();
        let e = norm_estimate(&spec, 2).unwrap();
        assert!((e.mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_matches_svd() {
        let m = sample_ginibre_circular(40, &mut replicate_rng(5, 0, Role::Circular));
        let svd = m.clone().svd(false, false);
        let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        assert!((largest_singular_value(&m) - top).abs() < 1e-9);
    }

    #[test]
    fn reps_guard() {
        let w: MatrixWord = "Z Z*".parse().unwrap();
        assert!(estimate_star_moment(&delta0(1.0, 8), &w, 1).is_err());
    }

    #[test]
    fn exact_oracle_words() {
        let mu = MeasureSpec::delta(int(0));
        let w: MatrixWord = "(Z Z*)^2".parse().unwrap();
        assert_eq!(exact_star_moment(&mu, 1.0, &w).unwrap().unwrap(), frac(2, 3));
        let w: MatrixWord = "Z Z*".parse().unwrap();
        assert_eq!(exact_star_moment(&mu, 2.0, &w).unwrap().unwrap(), int(2));
        assert!(exact_star_moment(&mu, 1.0, &"Y Y*".parse().unwrap()).is_none());
        let uniform: MeasureSpec = "pushforward:[0,1]:0,1".parse().unwrap();
        assert!(exact_star_moment(&uniform, 1.0, &"D Z* Z".parse().unwrap()).is_none());
        assert_eq!(exact_star_moment(&uniform, 1.0, &"D D*".parse().unwrap()).unwrap().unwrap(), frac(1, 3));
    }

    #[test]
    fn matrix_io_round_trip() {
        let m = sample_ginibre_circular(3, &mut replicate_rng(1, 1, Role::Circular)).columns(0, 2).into_owned();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert!(buf.starts_with(b"DTLAB-MATRIX rows=3 cols=2 dtype=complex128-le\n"));
        assert_eq!(read_matrix(&mut buf.as_slice()).unwrap(), m);
        assert!(read_matrix(&mut &buf[..buf.len() - 1]).is_err());
        assert!(read_matrix(&mut &b"NOPE rows=1 cols=1\n"[..]).is_err());
    }

    #[test]
    fn cutout_structure() {
        let spec = EnsembleSpec::new("pushforward:[0,1]:0,1".parse().unwrap(), 1.0, 32, 3).unwrap();
        let rep = cutout_residual(&spec, 4, 2).unwrap();
        assert_eq!(rep.upper_block_residual, 0.0);
        let full = cutout_residual(&spec, 32, 1).unwrap();
        assert_eq!(full.max_block_norm(), 0.0);
        assert!(cutout_residual(&spec, 5, 1).is_err());
    }

    #[test]
    fn liberation_empty_word_is_exact_zero() {
        let spec = EnsembleSpec::new("pushforward:[0,1]:0,1".parse().unwrap(), (3.0f64 / 4.0).sqrt(), 16, 11).unwrap();
        let out = liberation_mc(&spec, 0.25, &[vec![]], &[16], 3).unwrap();
        assert_eq!(out[0].estimate.mean, 0.0);
        assert_eq!(out[0].estimate.stderr, 0.0);
    }

    #[test]
    fn csv_layout() {
        let e = MomentEstimate { word: "Z Z*".into(), mean: 0.5, mean_im: 0.0, stderr: 0.01, reps: 3, n: 4, seed: 9 };
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[e]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "word,mean,stderr,reps,n,seed\nZ Z*,0.5,0.01,3,4,9\n");
    }
}
