//! Non-crossing partitions, the Möbius function of their lattice, and the
//! scalar moment/cumulant transforms built on it.
//!
//! Ground sets are `0..n` internally; `Display` prints the customary 1-based
//! labels.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_traits::{One, Zero};

use crate::error::{arg, Error, Result};
use crate::rational::{catalan, Rational};

/// Largest ground set [`enumerate_nc_partitions`] accepts.
pub const MAX_ENUMERATION: usize = 14;
/// Largest word length the moment/cumulant transforms accept.
pub const MAX_TRANSFORM_ORDER: usize = 12;
/// Largest word length [`free_mixed_moments`] accepts.
pub const MAX_MIXED_ORDER: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NCPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl NCPartition {
    /// Validates that `blocks` partition `0..n` without crossings. Blocks are
    /// sorted internally and ordered by their least element.
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return arg("empty block");
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x >= n {
                    return arg(format!("element {} outside ground set of size {n}", x + 1));
                }
                if std::mem::replace(&mut seen[x], true) {
                    return arg(format!("element {} appears twice", x + 1));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return arg("blocks do not cover the ground set");
        }
        blocks.sort();
        let p = NCPartition { n, blocks };
        if p.has_crossing() {
            return arg(format!("{p} is crossing"));
        }
        Ok(p)
    }

    fn from_sorted(n: usize, mut blocks: Vec<Vec<usize>>) -> Self {
        blocks.sort();
        NCPartition { n, blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// The maximal element `1̂_n`, a single block.
    pub fn one(n: usize) -> Self {
        NCPartition { n, blocks: if n == 0 { vec![] } else { vec![(0..n).collect()] } }
    }

    /// The minimal element `0̂_n`, all singletons.
    pub fn zero(n: usize) -> Self {
        NCPartition { n, blocks: (0..n).map(|i| vec![i]).collect() }
    }

    fn block_labels(&self) -> Vec<usize> {
        let mut lab = vec![0; self.n];
        for (k, b) in self.blocks.iter().enumerate() {
            for &x in b {
                lab[x] = k;
            }
        }
        lab
    }

    fn has_crossing(&self) -> bool {
        let lab = self.block_labels();
        let n = self.n;
        // a<b<c<d with a~c, b~d, and the two blocks distinct
        for a in 0..n {
            for b in a + 1..n {
                if lab[b] == lab[a] {
                    continue;
                }
                for c in b + 1..n {
                    if lab[c] != lab[a] {
                        continue;
                    }
                    if (c + 1..n).any(|d| lab[d] == lab[b]) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// `self ≤ other` in refinement order.
    pub fn refines(&self, other: &NCPartition) -> bool {
        if self.n != other.n {
            return false;
        }
        let lab = other.block_labels();
        self.blocks.iter().all(|b| b.iter().all(|&x| lab[x] == lab[b[0]]))
    }

    /// Kreweras complement, computed as the cycles of `σ⁻¹ γ` where `σ` maps
    /// each block to its increasing cycle and `γ` is the full cycle.
    pub fn kreweras(&self) -> NCPartition {
        let n = self.n;
        let mut sigma_inv = vec![0; n];
        for b in &self.blocks {
            for (i, &x) in b.iter().enumerate() {
                let next = b[(i + 1) % b.len()];
                sigma_inv[next] = x;
            }
        }
        let mut visited = vec![false; n];
        let mut blocks = Vec::new();
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut x = start;
            while !visited[x] {
                visited[x] = true;
                cycle.push(x);
                x = sigma_inv[(x + 1) % n];
            }
            cycle.sort_unstable();
            blocks.push(cycle);
        }
        NCPartition::from_sorted(n, blocks)
    }
}

impl fmt::Display for NCPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (i, x) in b.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", x + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NCPairing {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl NCPairing {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Pairs `(i, j)` with `i < j`, ordered by `i`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn partner(&self, i: usize) -> usize {
        self.pairs
            .iter()
            .find_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .expect("index outside pairing")
    }

    pub fn to_partition(&self) -> NCPartition {
        NCPartition::from_sorted(self.n, self.pairs.iter().map(|&(a, b)| vec![a, b]).collect())
    }
}

/// All partitions of `0..m`, built by choosing the block of the first element
/// and recursing into the gaps it leaves. Never produces a crossing.
fn partitions_of_len(m: usize, memo: &mut Vec<Option<Vec<Vec<Vec<usize>>>>>) -> Vec<Vec<Vec<usize>>> {
    if let Some(Some(v)) = memo.get(m) {
        return v.clone();
    }
    let out = if m == 0 {
        vec![vec![]]
    } else {
        let mut out = Vec::new();
        grow_first_block(vec![0], 0, m, vec![], &mut out, memo);
        out
    };
    if memo.len() <= m {
        memo.resize(m + 1, None);
    }
    memo[m] = Some(out.clone());
    out
}

fn shifted(parts: &[Vec<Vec<usize>>], by: usize) -> Vec<Vec<Vec<usize>>> {
    parts
        .iter()
        .map(|p| p.iter().map(|b| b.iter().map(|x| x + by).collect()).collect())
        .collect()
}

fn product(acc: Vec<Vec<Vec<usize>>>, gap: &[Vec<Vec<usize>>]) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(acc.len() * gap.len());
    for a in &acc {
        for g in gap {
            let mut p = a.clone();
            p.extend(g.iter().cloned());
            out.push(p);
        }
    }
    out
}

fn grow_first_block(
    block: Vec<usize>,
    last: usize,
    m: usize,
    gaps: Vec<Vec<Vec<usize>>>,
    out: &mut Vec<Vec<Vec<usize>>>,
    memo: &mut Vec<Option<Vec<Vec<Vec<usize>>>>>,
) {
    // close the block: the tail after `last` is partitioned on its own
    let tail = shifted(&partitions_of_len(m - last - 1, memo), last + 1);
    let mut closed = product(if gaps.is_empty() { vec![vec![]] } else { gaps.clone() }, &tail);
    for p in closed.iter_mut() {
        p.push(block.clone());
    }
    out.extend(closed);
    // or extend it with a later element, partitioning the gap in between
    for next in last + 1..m {
        let gap = shifted(&partitions_of_len(next - last - 1, memo), last + 1);
        let acc = product(if gaps.is_empty() { vec![vec![]] } else { gaps.clone() }, &gap);
        let mut b = block.clone();
        b.push(next);
        grow_first_block(b, next, m, acc, out, memo);
    }
}

/// Every non-crossing partition of an `n`-element set, in lexicographic order
/// of their (sorted) block lists.
pub fn enumerate_nc_partitions(n: usize) -> Result<Vec<NCPartition>> {
    if n == 0 || n > MAX_ENUMERATION {
        return arg(format!("n = {n} outside 1..={MAX_ENUMERATION}"));
    }
    Ok(cached_partitions(n).to_vec())
}

static PARTITION_CACHE: [OnceLock<Vec<NCPartition>>; MAX_ENUMERATION + 1] =
    [const { OnceLock::new() }; MAX_ENUMERATION + 1];

pub(crate) fn cached_partitions(n: usize) -> &'static [NCPartition] {
    PARTITION_CACHE[n].get_or_init(|| {
        let mut memo = Vec::new();
        let mut all: Vec<NCPartition> = partitions_of_len(n, &mut memo)
            .into_iter()
            .map(|blocks| NCPartition::from_sorted(n, blocks))
            .collect();
        all.sort();
        all
    })
}

/// Every non-crossing pair partition of `0..n`; empty for odd `n`.
pub fn enumerate_nc_pairings(n: usize) -> Vec<NCPairing> {
    fn rec(lo: usize, hi: usize) -> Vec<Vec<(usize, usize)>> {
        if lo >= hi {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for j in (lo + 1..hi).step_by(2) {
            let inner = rec(lo + 1, j);
            let outer = rec(j + 1, hi);
            for a in &inner {
                for b in &outer {
                    let mut p = vec![(lo, j)];
                    p.extend_from_slice(a);
                    p.extend_from_slice(b);
                    out.push(p);
                }
            }
        }
        out
    }
    if n % 2 == 1 {
        return Vec::new();
    }
    let mut all: Vec<NCPairing> = rec(0, n)
        .into_iter()
        .map(|mut pairs| {
            pairs.sort_unstable();
            NCPairing { n, pairs }
        })
        .collect();
    all.sort();
    all
}

fn signed_catalan(k: usize) -> Rational {
    let c = Rational::from_integer(catalan(k - 1));
    if k % 2 == 0 {
        -c
    } else {
        c
    }
}

/// Möbius function of the interval `[sigma, pi]` in NC(n).
///
/// The interval factors over the blocks of `pi`; on each block the value is
/// the product of signed Catalan numbers `(-1)^{k-1} C_{k-1}` over the blocks
/// of the Kreweras complement of the restriction of `sigma`.
pub fn moebius_nc(sigma: &NCPartition, pi: &NCPartition) -> Result<Rational> {
    if sigma.n != pi.n {
        return arg("partitions live on different ground sets");
    }
    if !sigma.refines(pi) {
        return arg(format!("{sigma} does not refine {pi}"));
    }
    let mut mu = Rational::one();
    for v in &pi.blocks {
        let pos = |x: usize| v.binary_search(&x).expect("refinement checked");
        let restricted = NCPartition::from_sorted(
            v.len(),
            sigma
                .blocks
                .iter()
                .filter(|b| v.binary_search(&b[0]).is_ok())
                .map(|b| b.iter().map(|&x| pos(x)).collect())
                .collect(),
        );
        for w in restricted.kreweras().blocks {
            mu *= signed_catalan(w.len());
        }
    }
    Ok(mu)
}

static MU_TO_TOP: [OnceLock<Vec<Rational>>; MAX_TRANSFORM_ORDER + 1] =
    [const { OnceLock::new() }; MAX_TRANSFORM_ORDER + 1];

fn mu_to_top(n: usize) -> &'static [Rational] {
    MU_TO_TOP[n].get_or_init(|| {
        let top = NCPartition::one(n);
        cached_partitions(n).iter().map(|p| moebius_nc(p, &top).expect("p ≤ 1̂")).collect()
    })
}

/// Values indexed by words (explicit letter sequences) over a named alphabet.
/// Used both for moments and for cumulants; the empty word always carries 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSequence {
    alphabet: Vec<String>,
    order: usize,
    values: BTreeMap<Vec<usize>, Rational>,
}

impl MomentSequence {
    pub fn new(alphabet: Vec<String>, order: usize, mut values: BTreeMap<Vec<usize>, Rational>) -> Result<Self> {
        if order == 0 {
            return arg("order must be positive");
        }
        for w in values.keys() {
            if w.len() > order {
                return arg(format!("word of length {} exceeds order {order}", w.len()));
            }
            if let Some(&l) = w.iter().find(|&&l| l >= alphabet.len()) {
                return arg(format!("letter index {l} outside alphabet of size {}", alphabet.len()));
            }
        }
        match values.get(&Vec::new()) {
            Some(v) if !v.is_one() => return arg("the empty word must carry the value 1"),
            Some(_) => {}
            None => {
                values.insert(Vec::new(), Rational::one());
            }
        }
        Ok(MomentSequence { alphabet, order, values })
    }

    /// Fills every word of length `1..=order` from `f`.
    pub fn from_fn(alphabet: Vec<String>, order: usize, mut f: impl FnMut(&[usize]) -> Rational) -> Result<Self> {
        let k = alphabet.len();
        let mut values = BTreeMap::new();
        for w in all_words(k, order) {
            let v = f(&w);
            values.insert(w, v);
        }
        values.insert(Vec::new(), Rational::one());
        MomentSequence::new(alphabet, order, values)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &BTreeMap<Vec<usize>, Rational> {
        &self.values
    }

    pub fn get(&self, word: &[usize]) -> Option<&Rational> {
        self.values.get(word)
    }

    pub fn letter(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|a| a == name)
    }

    /// Looks a word up by letter names.
    pub fn get_named(&self, word: &[&str]) -> Option<&Rational> {
        let idx: Option<Vec<usize>> = word.iter().map(|l| self.letter(l)).collect();
        self.values.get(&idx?)
    }

    pub fn word_name(&self, word: &[usize]) -> String {
        if word.is_empty() {
            return "1".into();
        }
        word.iter().map(|&l| self.alphabet[l].as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// All words of length `1..=order` over `k` letters, shortest first.
pub fn all_words(k: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..order {
        let mut next = Vec::with_capacity(layer.len() * k);
        for w in &layer {
            for l in 0..k {
                let mut v = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn restrict(word: &[usize], block: &[usize]) -> Vec<usize> {
    block.iter().map(|&i| word[i]).collect()
}

fn lookup<'a>(seq: &'a MomentSequence, w: &[usize]) -> Result<&'a Rational> {
    seq.values
        .get(w)
        .ok_or_else(|| Error::Argument(format!("missing value for word `{}`", seq.word_name(w))))
}

/// `κ_w = Σ_{π ∈ NC(|w|)} μ(π, 1̂) ∏_{B ∈ π} m_{w|B}` for every word in `m`.
pub fn moments_to_cumulants(m: &MomentSequence) -> Result<MomentSequence> {
    if m.order > MAX_TRANSFORM_ORDER {
        return arg(format!("order {} exceeds {MAX_TRANSFORM_ORDER}", m.order));
    }
    let mut out = BTreeMap::new();
    for w in m.values.keys() {
        if w.is_empty() {
            out.insert(Vec::new(), Rational::one());
            continue;
        }
        let n = w.len();
        let mut acc = Rational::zero();
        for (p, mu) in cached_partitions(n).iter().zip(mu_to_top(n)) {
            let mut term = mu.clone();
            for b in &p.blocks {
                let v = lookup(m, &restrict(w, b))?;
                if v.is_zero() {
                    term.set_zero();
                    break;
                }
                term *= v;
            }
            acc += term;
        }
        out.insert(w.clone(), acc);
    }
    MomentSequence::new(m.alphabet.clone(), m.order, out)
}

/// `m_w = Σ_{π ∈ NC(|w|)} ∏_{B ∈ π} κ_{w|B}` for every word in `k`.
pub fn cumulants_to_moments(k: &MomentSequence) -> Result<MomentSequence> {
    if k.order > MAX_TRANSFORM_ORDER {
        return arg(format!("order {} exceeds {MAX_TRANSFORM_ORDER}", k.order));
    }
    let mut out = BTreeMap::new();
    for w in k.values.keys() {
        if w.is_empty() {
            out.insert(Vec::new(), Rational::one());
            continue;
        }
        let mut acc = Rational::zero();
        for p in cached_partitions(w.len()) {
            let mut term = Rational::one();
            for b in &p.blocks {
                let v = lookup(k, &restrict(w, b))?;
                if v.is_zero() {
                    term.set_zero();
                    break;
                }
                term *= v;
            }
            acc += term;
        }
        out.insert(w.clone(), acc);
    }
    MomentSequence::new(k.alphabet.clone(), k.order, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    A,
    B,
}

/// Two families assumed free from each other, with cumulants precomputed so
/// that many mixed moments can be evaluated cheaply.
#[derive(Clone, Debug)]
pub struct FreeProduct {
    cum_a: MomentSequence,
    cum_b: MomentSequence,
    cap: usize,
}

impl FreeProduct {
    pub fn new(fam_a: &MomentSequence, fam_b: &MomentSequence, cap: usize) -> Result<Self> {
        if cap > MAX_MIXED_ORDER {
            return arg(format!("order cap {cap} exceeds {MAX_MIXED_ORDER}"));
        }
        Ok(FreeProduct { cum_a: moments_to_cumulants(fam_a)?, cum_b: moments_to_cumulants(fam_b)?, cap })
    }

    pub fn cumulants(&self, fam: Family) -> &MomentSequence {
        match fam {
            Family::A => &self.cum_a,
            Family::B => &self.cum_b,
        }
    }

    /// Resolves letter names against both alphabets.
    pub fn resolve(&self, word: &[&str]) -> Result<Vec<(Family, usize)>> {
        word.iter()
            .map(|name| match (self.cum_a.letter(name), self.cum_b.letter(name)) {
                (Some(_), Some(_)) => arg(format!("letter `{name}` is in both alphabets")),
                (Some(i), None) => Ok((Family::A, i)),
                (None, Some(i)) => Ok((Family::B, i)),
                (None, None) => arg(format!("letter `{name}` is in neither alphabet")),
            })
            .collect()
    }

    /// Mixed moment: sum over NC partitions whose blocks each stay inside one
    /// family, weighted by that family's cumulants.
    pub fn mixed_moment(&self, word: &[(Family, usize)]) -> Result<Rational> {
        let n = word.len();
        if n > self.cap {
            return arg(format!("word length {n} exceeds order cap {}", self.cap));
        }
        if n == 0 {
            return Ok(Rational::one());
        }
        let mut acc = Rational::zero();
        'outer: for p in cached_partitions(n) {
            let mut term = Rational::one();
            for b in &p.blocks {
                let fam = word[b[0]].0;
                if b.iter().any(|&i| word[i].0 != fam) {
                    continue 'outer;
                }
                let letters: Vec<usize> = b.iter().map(|&i| word[i].1).collect();
                let v = lookup(self.cumulants(fam), &letters)?;
                if v.is_zero() {
                    continue 'outer;
                }
                term *= v;
            }
            acc += term;
        }
        Ok(acc)
    }
}

/// Mixed moment of a word over the union of two free families' alphabets.
pub fn free_mixed_moments(
    fam_a: &MomentSequence,
    fam_b: &MomentSequence,
    word: &[&str],
    order_cap: usize,
) -> Result<Rational> {
    if word.len() > order_cap {
        return arg(format!("word length {} exceeds order cap {order_cap}", word.len()));
    }
    let fp = FreeProduct::new(fam_a, fam_b, order_cap)?;
    let w = fp.resolve(word)?;
    fp.mixed_moment(&w)
}
