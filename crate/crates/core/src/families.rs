//! Built-in generating systems: S-gap and generalized gap shifts, beta
//! shifts with eventually periodic expansion of 1, the Dyck shift, and the
//! two-generator example with its modified companion.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rint::{exp_bounds, int, log_bounds, pow2, ratio, Rat, RatInterval};
use crate::spectral::solve_lambda;
use crate::symbolic::{
    Declared, GeneratorOracle, GeneratorSystem, LanguageOracle, Provenance, Structure, TailControl, Word,
};
use crate::verejones::{kappa_certified, pick_gap_epsilon, KappaCertificate};

const CHUNK: usize = 64;

/// A decidable set of nonnegative integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum IntSet {
    Explicit {
        values: Vec<u64>,
    },
    /// `{a + b k : k >= 0}`; `b = 0` is the singleton `{a}`.
    Arithmetic {
        a: u64,
        b: u64,
    },
    Cofinite {
        excluded: Vec<u64>,
    },
    /// Indicator bits: `preperiod` first, then `period` repeated forever.
    Periodic {
        preperiod: Vec<u8>,
        period: Vec<u8>,
    },
}

impl IntSet {
    pub fn all() -> IntSet {
        IntSet::Cofinite { excluded: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if let IntSet::Periodic { preperiod, period } = self {
            if period.is_empty() {
                return Err(Error::Parse("periodic set needs a nonempty period".into()));
            }
            if preperiod.iter().chain(period).any(|&b| b > 1) {
                return Err(Error::Parse("periodic set bits must be 0 or 1".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, s: u64) -> bool {
        match self {
            IntSet::Explicit { values } => values.contains(&s),
            IntSet::Arithmetic { a, b } => {
                if *b == 0 {
                    s == *a
                } else {
                    s >= *a && (s - a).is_multiple_of(*b)
                }
            }
            IntSet::Cofinite { excluded } => !excluded.contains(&s),
            IntSet::Periodic { preperiod, period } => {
                let p = preperiod.len() as u64;
                if s < p {
                    preperiod[s as usize] == 1
                } else {
                    period[((s - p) % period.len() as u64) as usize] == 1
                }
            }
        }
    }

    /// Least element `>= s`.
    pub fn next_at_least(&self, s: u64) -> Option<u64> {
        match self {
            IntSet::Explicit { values } => values.iter().copied().filter(|&v| v >= s).min(),
            IntSet::Arithmetic { a, b } => {
                if s <= *a {
                    Some(*a)
                } else if *b == 0 {
                    None
                } else {
                    Some(a + (s - a).div_ceil(*b) * b)
                }
            }
            IntSet::Cofinite { .. } => (s..).find(|&v| self.contains(v)),
            IntSet::Periodic { preperiod, period } => {
                let reach = s.max(preperiod.len() as u64) + period.len() as u64;
                (s..=reach).find(|&v| self.contains(v))
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.next_at_least(0).is_none()
    }

    pub fn is_finite(&self) -> bool {
        match self {
            IntSet::Explicit { .. } => true,
            IntSet::Arithmetic { b, .. } => *b == 0,
            IntSet::Cofinite { .. } => false,
            IntSet::Periodic { period, .. } => period.iter().all(|&b| b == 0),
        }
    }

    /// Elements in increasing order, for finite sets.
    pub fn finite_elements(&self) -> Option<Vec<u64>> {
        if !self.is_finite() {
            return None;
        }
        let mut out = Vec::new();
        let mut s = 0;
        while let Some(v) = self.next_at_least(s) {
            out.push(v);
            s = v + 1;
        }
        Some(out)
    }
}

// ---------------------------------------------------------------- S-gap

struct SGapOracle {
    set: IntSet,
}

impl GeneratorOracle for SGapOracle {
    fn alphabet_size(&self) -> usize {
        2
    }

    fn next_chunk(&self, _start: usize, last_len: usize) -> Result<Vec<Word>> {
        let mut out = Vec::with_capacity(CHUNK);
        let mut s = last_len as u64;
        while out.len() < CHUNK {
            match self.set.next_at_least(s) {
                Some(v) => {
                    let mut w = vec![0u8; v as usize];
                    w.push(1);
                    out.push(Word::new(w)?);
                    s = v + 1;
                }
                None => break,
            }
        }
        Ok(out)
    }

    fn count_of_length(&self, k: usize) -> Option<BigUint> {
        Some(BigUint::from((k >= 1 && self.set.contains(k as u64 - 1)) as u32))
    }
}

pub struct SGapLanguage {
    set: IntSet,
}

impl LanguageOracle for SGapLanguage {
    fn alphabet_size(&self) -> usize {
        2
    }

    fn member(&self, w: &[u8]) -> bool {
        if w.iter().any(|&c| c > 1) {
            return false;
        }
        let ones: Vec<usize> = w.iter().enumerate().filter(|(_, &c)| c == 1).map(|(i, _)| i).collect();
        let room = |r: usize| self.set.next_at_least(r as u64).is_some();
        match (ones.first(), ones.last()) {
            (None, _) | (_, None) => room(w.len()),
            (Some(&f), Some(&l)) => {
                if !room(f) || !room(w.len() - 1 - l) {
                    return false;
                }
                ones.windows(2).all(|p| self.set.contains((p[1] - p[0] - 1) as u64))
            }
        }
    }
}

/// The S-gap shift: generators `0^s 1` for `s` in `S`.
pub fn sgap_system(set: IntSet) -> Result<GeneratorSystem> {
    set.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyS);
    }
    let tail = match set.finite_elements() {
        Some(v) => TailControl::Finite(v.len()),
        None => TailControl::BoundedGrowth(1),
    };
    Ok(GeneratorSystem::new("sgap", Box::new(SGapOracle { set: set.clone() }), tail)
        .with_language(Arc::new(SGapLanguage { set })))
}

// ---------------------------------------------------- generalized gap

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenGapSpec {
    pub d: usize,
    pub sets: Vec<IntSet>,
    pub perms: Vec<Vec<usize>>,
}

impl GenGapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d + 1 > crate::symbolic::MAX_ALPHABET {
            return Err(Error::InvalidPermutation(format!("d = {} out of range", self.d)));
        }
        if self.sets.len() != self.d {
            return Err(Error::InvalidPermutation(format!("expected {} sets, got {}", self.d, self.sets.len())));
        }
        for s in &self.sets {
            s.validate()?;
            if s.is_empty() {
                return Err(Error::EmptyS);
            }
        }
        if self.perms.is_empty() {
            return Err(Error::InvalidPermutation("no permutations given".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.perms {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (0..self.d).collect::<Vec<_>>() {
                return Err(Error::InvalidPermutation(format!("{p:?} is not a permutation of 0..{}", self.d)));
            }
            if !seen.insert(p.clone()) {
                return Err(Error::InvalidPermutation(format!("{p:?} listed twice")));
            }
        }
        Ok(())
    }
}

/// Two tuples `(perm, s)` that spell the same word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collision {
    pub word: Word,
    pub first: (usize, Vec<u64>),
    pub second: (usize, Vec<u64>),
}

fn compositions(sets: &[IntSet], total: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    let j = cur.len();
    if j + 1 == sets.len() {
        if sets[j].contains(total) {
            cur.push(total);
            out.push(cur.clone());
            cur.pop();
        }
        return;
    }
    let mut s = 0;
    while let Some(v) = sets[j].next_at_least(s) {
        if v > total {
            break;
        }
        cur.push(v);
        compositions(sets, total - v, cur, out);
        cur.pop();
        s = v + 1;
    }
}

/// Words of total length `len` with the tuples that produce them.
fn gengap_level(spec: &GenGapSpec, len: usize) -> (Vec<Word>, Vec<Collision>) {
    let mut tuples = Vec::new();
    if len >= 1 {
        compositions(&spec.sets, len as u64 - 1, &mut Vec::new(), &mut tuples);
    }
    let mut first_source: HashMap<Vec<u8>, (usize, Vec<u64>)> = HashMap::new();
    let mut collisions = Vec::new();
    let mut words = BTreeSet::new();
    for s in &tuples {
        for (pi, p) in spec.perms.iter().enumerate() {
            let mut w = Vec::with_capacity(len);
            for &sym in p {
                w.extend(std::iter::repeat_n(sym as u8, s[sym] as usize));
            }
            w.push(spec.d as u8);
            match first_source.get(&w) {
                Some(src) => collisions.push(Collision {
                    word: Word::new(w.clone()).expect("nonempty"),
                    first: src.clone(),
                    second: (pi, s.clone()),
                }),
                None => {
                    first_source.insert(w.clone(), (pi, s.clone()));
                }
            }
            words.insert(w);
        }
    }
    let words = words.into_iter().map(|w| Word::new(w).expect("nonempty")).collect();
    (words, collisions)
}

/// Byte-identical words produced by distinct tuples, over lengths `<= maxlen`.
pub fn gengap_collisions(spec: &GenGapSpec, maxlen: usize) -> Result<Vec<Collision>> {
    spec.validate()?;
    Ok((1..=maxlen).flat_map(|k| gengap_level(spec, k).1).collect())
}

struct GenGapOracle {
    spec: GenGapSpec,
    max_len: Option<usize>,
}

impl GeneratorOracle for GenGapOracle {
    fn alphabet_size(&self) -> usize {
        self.spec.d + 1
    }

    fn next_chunk(&self, _start: usize, last_len: usize) -> Result<Vec<Word>> {
        // every call returns whole levels, so `last_len` marks a finished level
        let mut len = last_len + 1;
        loop {
            if self.max_len.is_some_and(|m| len > m) {
                return Ok(Vec::new());
            }
            let (words, _) = gengap_level(&self.spec, len);
            if !words.is_empty() {
                return Ok(words);
            }
            len += 1;
        }
    }
}

fn gengap_max_len(spec: &GenGapSpec) -> Option<usize> {
    let mut total = 1u64;
    for s in &spec.sets {
        total += *s.finite_elements()?.last()?;
    }
    Some(total as usize)
}

pub struct GenGapLanguage {
    spec: GenGapSpec,
}

impl GenGapLanguage {
    /// Whether the run sequence fits one block under some permutation.
    /// `head`/`tail` mark runs cut by the window edge.
    fn fits(&self, runs: &[(u8, u64)], head: bool, tail: bool) -> bool {
        let sets = &self.spec.sets;
        let zero = |j: usize| sets[j].contains(0);
        if runs.is_empty() {
            return head || tail || (0..self.spec.d).all(zero);
        }
        'perm: for p in &self.spec.perms {
            let mut pos = vec![0usize; self.spec.d];
            for (i, &sym) in p.iter().enumerate() {
                pos[sym] = i;
            }
            let mut prev: Option<usize> = None;
            for (i, &(c, r)) in runs.iter().enumerate() {
                let c = c as usize;
                let at = pos[c];
                if prev.is_some_and(|q| at <= q) {
                    continue 'perm;
                }
                let from = prev.map_or(0, |q| q + 1);
                if (prev.is_some() || !head) && !p[from..at].iter().all(|&j| zero(j)) {
                    continue 'perm;
                }
                let cut = (i == 0 && head) || (i + 1 == runs.len() && tail);
                let ok = if cut { sets[c].next_at_least(r).is_some() } else { sets[c].contains(r) };
                if !ok {
                    continue 'perm;
                }
                prev = Some(at);
            }
            if !tail && !p[prev.unwrap() + 1..].iter().all(|&j| zero(j)) {
                continue 'perm;
            }
            return true;
        }
        false
    }
}

fn runs_of(seg: &[u8]) -> Vec<(u8, u64)> {
    let mut out: Vec<(u8, u64)> = Vec::new();
    for &c in seg {
        match out.last_mut() {
            Some((d, r)) if *d == c => *r += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

impl LanguageOracle for GenGapLanguage {
    fn alphabet_size(&self) -> usize {
        self.spec.d + 1
    }

    fn member(&self, w: &[u8]) -> bool {
        let sep = self.spec.d as u8;
        if w.iter().any(|&c| c > sep) {
            return false;
        }
        let segs: Vec<&[u8]> = w.split(|&c| c == sep).collect();
        let last = segs.len() - 1;
        segs.iter().enumerate().all(|(i, seg)| self.fits(&runs_of(seg), i == 0, i == last))
    }
}

/// Generalized gap shift generated by the words
/// `pi(0)^{s_pi(0)} .. pi(d-1)^{s_pi(d-1)} d`.
///
/// Distinct tuples spelling the same word contribute that word once; see
/// [`gengap_collisions`] for the list of such coincidences.
pub fn gengap_system(spec: GenGapSpec) -> Result<GeneratorSystem> {
    spec.validate()?;
    let max_len = gengap_max_len(&spec);
    let lang = Arc::new(GenGapLanguage { spec: spec.clone() });
    let oracle = Box::new(GenGapOracle { spec: spec.clone(), max_len });
    let base = GeneratorSystem::new("gengap", oracle, TailControl::None).with_language(lang);
    if max_len.is_some() {
        let n = base.first(usize::MAX)?.len();
        return Ok(base.with_tail_control(TailControl::Finite(n)));
    }
    let poly = TailControl::PolynomialGrowth { coef: spec.perms.len() as u64, degree: spec.d as u32 - 1 };
    let bootstrap = base.clone().with_tail_control(poly);
    let lambda = solve_lambda(&bootstrap, 24)?;
    let eps = gengap_epsilon(&spec, &bootstrap, &lambda)?;
    Ok(base
        .with_tail_control(TailControl::GapEpsilon(eps))
        .with_growth_bound(spec.perms.len() as u64, spec.d as u32 - 1))
}

/// A gap `eps` with `0 < eps < h - r(G)` for a generalized gap shift.
///
/// With `P = |Pi|` we have `|G_k| <= P k^{d-1}`, whose normalized log is
/// decreasing for `k >= 3`. The scan finds `M >= 3` with
/// `P^2 M^{2(d-1)} < lambda_lo^M`, then compares the exact prefix
/// `(1/k) log |G_k|`, `k < M`, and the bound at `M` against `h`.
pub fn gengap_epsilon(spec: &GenGapSpec, sys: &GeneratorSystem, lambda: &RatInterval) -> Result<Rat> {
    if lambda.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    let p = spec.perms.len() as i64;
    let deg = spec.d - 1;
    let mut m = 3usize;
    loop {
        let lhs = int(p * p) * num_traits::pow(int(m as i64), 2 * deg);
        if lhs < num_traits::pow(lambda.lo().clone(), m) {
            break;
        }
        m += 1;
        if m > 1 << 14 {
            return Err(Error::PrecisionExhausted("no cutoff with P^2 M^(2(d-1)) < lambda^M".into()));
        }
    }
    let bits = 40;
    let bound_at_m = int(p) * num_traits::pow(int(m as i64), deg);
    let mut u = log_bounds(&bound_at_m, bits)?.hi() / int(m as i64);
    let counts = sys.counts_up_to(m - 1)?;
    for (k, c) in counts.iter().enumerate().skip(1) {
        if c.is_zero() {
            continue;
        }
        let v = log_bounds(&crate::rint::from_biguint(c), bits)?.hi() / int(k as i64);
        if v > u {
            u = v;
        }
    }
    let h = crate::spectral::h_from_lambda(lambda, 20).or_else(|_| {
        let a = log_bounds(lambda.lo(), bits)?;
        let b = log_bounds(lambda.hi(), bits)?;
        Ok::<_, Error>(RatInterval::new_unchecked(a.lo().clone(), b.hi().clone()))
    })?;
    pick_gap_epsilon(&h, &u)
}

// ------------------------------------------------------------ beta

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaSpec {
    #[serde(default)]
    pub preperiod: Vec<u8>,
    pub period: Vec<u8>,
}

impl BetaSpec {
    pub fn digit(&self, k: usize) -> u8 {
        if k < self.preperiod.len() {
            self.preperiod[k]
        } else {
            self.period[(k - self.preperiod.len()) % self.period.len()]
        }
    }

    pub fn prefix(&self, n: usize) -> Vec<u8> {
        (0..n).map(|k| self.digit(k)).collect()
    }

    /// Checks the quasi-greedy condition `sigma^k(eps) <= eps` exactly.
    pub fn validate(&self) -> Result<()> {
        if self.period.is_empty() {
            return Err(Error::NotQuasiGreedy("the period is empty".into()));
        }
        if self.period.iter().all(|&e| e == 0) {
            return Err(Error::NotQuasiGreedy("the expansion ends in 0^inf, which is not quasi-greedy".into()));
        }
        let e1 = self.digit(0);
        if e1 == 0 {
            return Err(Error::NotQuasiGreedy("the first digit must be at least 1".into()));
        }
        if e1 as usize + 1 > crate::symbolic::MAX_ALPHABET {
            return Err(Error::NotQuasiGreedy(format!("digit {e1} is too large")));
        }
        let pp = self.preperiod.len();
        let span = pp + self.period.len();
        for k in 1..=span {
            // both sides are periodic from index `pp` on with the same period
            for i in 0..span + self.period.len() {
                let a = self.digit(k + i);
                let b = self.digit(i);
                if a < b {
                    break;
                }
                if a > b {
                    return Err(Error::NotQuasiGreedy(format!(
                        "the shift by {k} exceeds the expansion at digit {}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

struct BetaOracle {
    spec: BetaSpec,
}

impl GeneratorOracle for BetaOracle {
    fn alphabet_size(&self) -> usize {
        self.spec.digit(0) as usize + 1
    }

    fn next_chunk(&self, _start: usize, last_len: usize) -> Result<Vec<Word>> {
        let mut len = last_len + 1;
        loop {
            let words = if len == 1 {
                (0..self.spec.digit(0)).map(|i| Word::new(vec![i])).collect::<Result<Vec<_>>>()?
            } else {
                let head = self.spec.prefix(len - 1);
                (0..self.spec.digit(len - 1))
                    .map(|i| {
                        let mut w = head.clone();
                        w.push(i);
                        Word::new(w)
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            if !words.is_empty() {
                return Ok(words);
            }
            len += 1;
        }
    }

    fn count_of_length(&self, k: usize) -> Option<BigUint> {
        Some(BigUint::from(if k == 0 { 0 } else { self.spec.digit(k - 1) as u32 }))
    }
}

pub struct BetaLanguage {
    spec: BetaSpec,
}

impl LanguageOracle for BetaLanguage {
    fn alphabet_size(&self) -> usize {
        self.spec.digit(0) as usize + 1
    }

    fn member(&self, w: &[u8]) -> bool {
        if w.iter().any(|&c| c > self.spec.digit(0)) {
            return false;
        }
        (0..w.len()).all(|k| {
            for (i, &c) in w[k..].iter().enumerate() {
                let e = self.spec.digit(i);
                if c != e {
                    return c < e;
                }
            }
            true
        })
    }
}

pub fn beta_system(spec: BetaSpec) -> Result<GeneratorSystem> {
    spec.validate()?;
    let b = spec.digit(0) as u64;
    Ok(GeneratorSystem::new("beta", Box::new(BetaOracle { spec: spec.clone() }), TailControl::BoundedGrowth(b))
        .with_language(Arc::new(BetaLanguage { spec })))
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaRecovery {
    pub prefix: Vec<u8>,
    pub beta: RatInterval,
}

/// Reads `eps_1 .. eps_depth` off the generators and encloses `beta` with
/// width `< 2^-n` (only `[eps_1, eps_1 + 1]` at depth 1).
pub fn beta_recover(sys: &GeneratorSystem, depth: usize, n: u32) -> Result<BetaRecovery> {
    if depth == 0 {
        return Err(Error::ShapeMismatch("depth must be at least 1".into()));
    }
    let words = sys.words_up_to_len(depth)?;
    let mut by_len: Vec<Vec<&Word>> = vec![Vec::new(); depth + 1];
    for w in &words {
        by_len[w.len()].push(w);
    }
    let mut prefix: Vec<u8> = Vec::with_capacity(depth);
    for len in 1..=depth {
        let level = &by_len[len];
        let c = level.len();
        for (i, w) in level.iter().enumerate() {
            let expect_head = &prefix[..len - 1];
            if &w[..len - 1] != expect_head || w[len - 1] as usize != i {
                return Err(Error::ShapeMismatch(format!(
                    "generator {w} does not fit the beta pattern at length {len}"
                )));
            }
        }
        if len == 1 && c == 0 {
            return Err(Error::ShapeMismatch("no generators of length 1".into()));
        }
        if c > u8::MAX as usize {
            return Err(Error::ShapeMismatch(format!("{c} generators of length {len}")));
        }
        prefix.push(c as u8);
    }
    let e1 = prefix[0];
    if sys.alphabet_size() != e1 as usize + 1 || prefix.iter().any(|&e| e > e1) {
        return Err(Error::ShapeMismatch("digits exceed the first digit or the alphabet".into()));
    }
    let coarse = RatInterval::new_unchecked(int(e1 as i64), int(e1 as i64 + 1));
    if depth == 1 {
        return Ok(BetaRecovery { prefix, beta: coarse });
    }
    let lam = solve_lambda(sys, n)?;
    let beta = lam.intersect(&coarse).unwrap_or(lam);
    Ok(BetaRecovery { prefix, beta })
}

// ------------------------------------------------------------ Dyck

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DyckVariant {
    Open,
    Close,
}

pub const DYCK_SYMBOLS: [char; 4] = ['(', ')', '[', ']'];

fn dyck_is_open(c: u8) -> bool {
    c.is_multiple_of(2)
}

pub fn dyck_display(w: &[u8]) -> String {
    w.iter().map(|&c| DYCK_SYMBOLS.get(c as usize).copied().unwrap_or('?')).collect()
}

fn balanced(len: usize) -> Vec<Vec<u8>> {
    fn go(len: usize, cur: &mut Vec<u8>, stack: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == len {
            if stack.is_empty() {
                out.push(cur.clone());
            }
            return;
        }
        let left = len - cur.len();
        for c in 0..4u8 {
            if dyck_is_open(c) {
                if stack.len() < left - 1 {
                    stack.push(c);
                    cur.push(c);
                    go(len, cur, stack, out);
                    cur.pop();
                    stack.pop();
                }
            } else if stack.last() == Some(&(c - 1)) {
                let top = stack.pop().unwrap();
                cur.push(c);
                go(len, cur, stack, out);
                cur.pop();
                stack.push(top);
            }
        }
    }
    let mut out = Vec::new();
    go(len, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

fn catalan(n: usize) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..n {
        c = c * BigUint::from(2 * (2 * i + 1)) / BigUint::from(i + 2);
    }
    c
}

struct DyckOracle {
    variant: DyckVariant,
    max_len: usize,
}

impl GeneratorOracle for DyckOracle {
    fn alphabet_size(&self) -> usize {
        4
    }

    fn next_chunk(&self, _start: usize, last_len: usize) -> Result<Vec<Word>> {
        if last_len == 0 {
            let syms = match self.variant {
                DyckVariant::Open => [0u8, 2],
                DyckVariant::Close => [1u8, 3],
            };
            return syms.iter().map(|&c| Word::new(vec![c])).collect();
        }
        let len = if last_len == 1 { 2 } else { last_len + 2 };
        if len > self.max_len {
            return Err(Error::BudgetExceeded(format!("Dyck enumeration capped at length {}", self.max_len)));
        }
        let inner = balanced(len - 2);
        let mut out = Vec::with_capacity(2 * inner.len());
        for open in [0u8, 2] {
            for u in &inner {
                let mut w = Vec::with_capacity(len);
                w.push(open);
                w.extend_from_slice(u);
                w.push(open + 1);
                out.push(Word::new(w)?);
            }
        }
        Ok(out)
    }

    fn count_of_length(&self, k: usize) -> Option<BigUint> {
        Some(match k {
            0 => BigUint::zero(),
            1 => BigUint::from(2u32),
            k if k % 2 == 1 => BigUint::zero(),
            k => (BigUint::one() << (k / 2)) * catalan(k / 2 - 1),
        })
    }
}

pub struct DyckLanguage;

impl LanguageOracle for DyckLanguage {
    fn alphabet_size(&self) -> usize {
        4
    }

    fn member(&self, w: &[u8]) -> bool {
        let mut stack = Vec::new();
        for &c in w {
            if c > 3 {
                return false;
            }
            if dyck_is_open(c) {
                stack.push(c);
            } else {
                match stack.pop() {
                    None => {}
                    Some(o) if o + 1 == c => {}
                    Some(_) => return false,
                }
            }
        }
        true
    }
}

/// The Dyck shift on two bracket types as a coded shift, with the two
/// single brackets of the chosen variant added to the generating set.
///
/// Explicit enumeration stops at `max_len`; per-length counts are exact at
/// every length.
pub fn dyck_system(variant: DyckVariant, max_len: usize) -> Result<GeneratorSystem> {
    let eps = ratio(1, 20);
    // |W_n| <= 8^n = 9^n (8/9)^n, so any eps with e^{2 eps} <= 9/8 is a gap
    if exp_bounds(&(&eps * int(2)), 30).hi() >= &ratio(9, 8) {
        return Err(Error::PrecisionExhausted("the built-in Dyck gap failed its check".into()));
    }
    let declared =
        Declared { lambda: Some(RatInterval::from_int(3)), kappa: Some(int(2)), provenance: Some(Provenance::Paper) };
    Ok(GeneratorSystem::new(
        "dyck",
        Box::new(DyckOracle { variant, max_len: max_len.max(2) }),
        TailControl::GapEpsilon(eps),
    )
    .with_declared(declared)
    .with_language(Arc::new(DyckLanguage))
    .with_structure(Structure::Dyck))
}

// ------------------------------------------------- two-generator example

fn ex51_base(len: usize) -> Vec<Word> {
    if len < 2 || len % 2 == 1 {
        return Vec::new();
    }
    [1u8, 2]
        .iter()
        .map(|&c| {
            let mut w = vec![c; len];
            w[0] = 0;
            Word::new(w).expect("nonempty")
        })
        .collect()
}

/// All concatenations of base generators with total length `len`.
fn ex51_star(len: usize) -> Vec<Vec<u8>> {
    let mut table: Vec<Vec<Vec<u8>>> = vec![Vec::new(); len + 1];
    table[0].push(Vec::new());
    for l in (2..=len).step_by(2) {
        let mut level = Vec::new();
        for k in (2..=l).step_by(2) {
            for g in ex51_base(k) {
                for rest in &table[l - k] {
                    let mut w = g.to_vec();
                    w.extend_from_slice(rest);
                    level.push(w);
                }
            }
        }
        table[l] = level;
    }
    std::mem::take(&mut table[len])
}

struct Ex51Oracle {
    modified: Option<(usize, usize)>,
}

impl Ex51Oracle {
    fn level(&self, len: usize) -> Vec<Word> {
        let mut words = ex51_base(len);
        if let Some((n, _)) = self.modified {
            if len > 2 * n && len.is_multiple_of(2) {
                for w in ex51_star(len - 2 * n) {
                    let mut v = Vec::with_capacity(len);
                    v.push(0);
                    v.extend(std::iter::repeat_n(1u8, n - 1));
                    v.extend_from_slice(&w);
                    v.push(0);
                    v.extend(std::iter::repeat_n(2u8, n - 1));
                    words.push(Word::new(v).expect("nonempty"));
                }
            }
        }
        words.sort();
        words
    }
}

impl GeneratorOracle for Ex51Oracle {
    fn alphabet_size(&self) -> usize {
        3
    }

    fn next_chunk(&self, _start: usize, last_len: usize) -> Result<Vec<Word>> {
        let len = if last_len == 0 { 2 } else { last_len + 2 };
        if let Some((_, cap)) = self.modified {
            if len > cap {
                return Err(Error::BudgetExceeded(format!("modified system enumeration capped at length {cap}")));
            }
        }
        Ok(self.level(len))
    }

    fn count_of_length(&self, k: usize) -> Option<BigUint> {
        if k < 2 || k % 2 == 1 {
            return Some(BigUint::zero());
        }
        let mut c = BigUint::from(2u32);
        if let Some((n, _)) = self.modified {
            let m = k / 2;
            if m > n {
                c += BigUint::from(2u32) * num_traits::pow(BigUint::from(3u32), m - n - 1);
            }
        }
        Some(c)
    }
}

pub struct Ex51Language;

impl LanguageOracle for Ex51Language {
    fn alphabet_size(&self) -> usize {
        3
    }

    fn member(&self, w: &[u8]) -> bool {
        if w.iter().any(|&c| c > 2) {
            return false;
        }
        let segs: Vec<&[u8]> = w.split(|&c| c == 0).collect();
        let last = segs.len() - 1;
        segs.iter().enumerate().all(|(i, s)| {
            let uniform = s.windows(2).all(|p| p[0] == p[1]);
            if i == 0 || i == last {
                uniform
            } else {
                uniform && s.len() % 2 == 1
            }
        })
    }
}

/// Sqrt(3) bracketed on the grid `2^-64`.
pub fn sqrt3_enclosure() -> RatInterval {
    let scaled = (BigUint::from(3u32) << 128usize).sqrt();
    let lo = crate::rint::from_biguint(&scaled) * pow2(-64);
    let hi = &lo + pow2(-64);
    RatInterval::new_unchecked(lo, hi)
}

/// Generators `0 1^{2n-1}` and `0 2^{2n-1}`, `n >= 1`.
pub fn example51_system() -> GeneratorSystem {
    let declared =
        Declared { lambda: Some(sqrt3_enclosure()), kappa: Some(int(3)), provenance: Some(Provenance::Paper) };
    GeneratorSystem::new("example51", Box::new(Ex51Oracle { modified: None }), TailControl::BoundedGrowth(2))
        .with_declared(declared)
        .with_language(Arc::new(Ex51Language))
}

/// The base generators together with `0 1^{N-1} w 0 2^{N-1}` for every
/// nonempty concatenation `w` of base generators. Enumeration past length
/// `cap` fails with a budget error; per-length counts stay exact.
pub fn example51_modified(n: usize, cap: usize) -> Result<GeneratorSystem> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::Parse(format!("N = {n} must be odd and at least 3")));
    }
    Ok(GeneratorSystem::new(
        format!("example51 modified N={n}"),
        Box::new(Ex51Oracle { modified: Some((n, cap)) }),
        TailControl::None,
    ))
}

/// Length-`len` factors of concatenations of the given generators.
pub fn concatenation_factors(gens: &[Word], len: usize) -> BTreeSet<Vec<u8>> {
    // a trie of the generators; reaching a terminal node may restart at the root
    let mut child: Vec<HashMap<u8, usize>> = vec![HashMap::new()];
    let mut terminal = vec![false];
    for g in gens {
        let mut v = 0;
        for &c in g.iter() {
            v = match child[v].get(&c) {
                Some(&u) => u,
                None => {
                    child.push(HashMap::new());
                    terminal.push(false);
                    let u = child.len() - 1;
                    child[v].insert(c, u);
                    u
                }
            };
        }
        terminal[v] = true;
    }
    let mut frontier: HashSet<(Vec<u8>, usize)> = (0..child.len()).map(|v| (Vec::new(), v)).collect();
    for _ in 0..len {
        let mut next = HashSet::new();
        for (win, v) in &frontier {
            for (&c, &u) in &child[*v] {
                let mut w = win.clone();
                w.push(c);
                if terminal[u] {
                    next.insert((w.clone(), 0));
                }
                next.insert((w, u));
            }
        }
        frontier = next;
    }
    frontier.into_iter().map(|(w, _)| w).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub n0: usize,
    pub kappa_base: KappaCertificate,
    pub lambda_modified: RatInterval,
    #[serde(serialize_with = "crate::rint::ser_rat")]
    pub kappa_modified_lower: Rat,
    #[serde(serialize_with = "crate::rint::ser_rat")]
    pub gate_lower: Rat,
    #[serde(serialize_with = "crate::rint::ser_rat")]
    pub separation_lower: Rat,
    pub agreeing_generators: usize,
    pub generators_agree: bool,
    pub agreeing_levels: usize,
    pub levels_agree: bool,
    pub separated: bool,
}

/// Root in `(0, 1/sqrt 3)` of `2x^2/(1-x^2) + 2x^{2N+2}/(1-3x^2) = 1`.
fn modified_root(n: usize, bits: u32) -> RatInterval {
    let f = |x: &Rat| {
        let x2 = x * x;
        let one = Rat::one();
        int(2) * &x2 / (&one - &x2) + int(2) * num_traits::pow(x.clone(), 2 * n + 2) / (&one - int(3) * &x2) - one
    };
    let mut lo = Rat::zero();
    // 4/7 < 1/sqrt 3 since 48 < 49
    let mut hi = ratio(4, 7);
    debug_assert!(f(&hi) > Rat::zero());
    while &hi - &lo >= pow2(-(bits as i64)) {
        let mid = crate::rint::floor_dyadic(&((&lo + &hi) / int(2)), bits + 1);
        if f(&mid) > Rat::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    RatInterval::new_unchecked(lo, hi)
}

fn gate_value(x: &Rat) -> Rat {
    let x2 = x * x;
    let one = Rat::one();
    let d = &one - &x2;
    int(4) * &x2 / (&d * &d) + (int(2) * &d).recip()
}

fn kappa_modified(x: &Rat, n: usize) -> Rat {
    let x2 = x * x;
    let one = Rat::one();
    let d = &one - &x2;
    let e = &one - int(3) * &x2;
    let top = num_traits::pow(x.clone(), 2 * n + 2);
    int(4) * &x2 / (&d * &d) + int(4 * n as i64) * &top / &e + int(4) * &top / (&e * &e)
}

/// Certifies that `kappa` separates the example from its modification
/// while the first generators and the short language levels coincide.
pub fn kappa_separation_demo(n0: Option<usize>, n: u32) -> Result<SeparationReport> {
    let base = example51_system();
    let kappa_base = kappa_certified(&base, n)?;
    let bits = n.max(10) + 20;
    let candidates: Vec<usize> = match n0 {
        Some(v) => vec![v],
        None => (3..=61).step_by(2).collect(),
    };
    let mut last_gate = None;
    for cand in candidates {
        if cand < 3 || cand % 2 == 0 {
            return Err(Error::Parse(format!("N0 = {cand} must be odd and at least 3")));
        }
        let x = modified_root(cand, bits);
        let gate = gate_value(x.lo());
        if gate <= ratio(7, 2) {
            last_gate = Some((cand, gate));
            continue;
        }
        let k_lo = kappa_modified(x.lo(), cand);
        let separation = &k_lo - kappa_base.value.hi();
        let lambda_modified = x.recip()?;

        let max_gen = 2 * cand + 6;
        let modified = example51_modified(cand, max_gen)?;
        let m = 2 * cand;
        let a = base.first(m)?;
        let b = modified.first(m)?;
        let generators_agree = a == b;

        let gens_mod = modified.words_up_to_len(max_gen)?;
        let lang = Ex51Language;
        let mut levels_agree = true;
        for l in 1..=cand {
            let lhs: BTreeSet<Vec<u8>> = lang.enumerate_level(l).into_iter().map(|w| w.to_vec()).collect();
            if lhs != concatenation_factors(&gens_mod, l) {
                levels_agree = false;
            }
        }
        return Ok(SeparationReport {
            n0: cand,
            kappa_base,
            lambda_modified,
            kappa_modified_lower: k_lo,
            gate_lower: gate,
            separated: separation >= ratio(1, 2),
            separation_lower: separation,
            agreeing_generators: m,
            generators_agree,
            agreeing_levels: cand,
            levels_agree,
        });
    }
    let (n0, gate) = last_gate.expect("at least one candidate");
    Err(Error::GateNotSatisfied { n0, gate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digits(ws: &[Word]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn intset_queries() {
        let s = IntSet::Arithmetic { a: 2, b: 3 };
        assert!(s.contains(5) && !s.contains(4));
        assert_eq!(s.next_at_least(6), Some(8));
        let p = IntSet::Periodic { preperiod: vec![1, 0], period: vec![0, 1] };
        assert_eq!(p.next_at_least(1), Some(3));
        assert!(!p.is_finite());
        assert_eq!(IntSet::Explicit { values: vec![4, 1] }.finite_elements(), Some(vec![1, 4]));
    }

    #[test]
    fn sgap_generators() {
        let sys = sgap_system(IntSet::all()).unwrap();
        assert_eq!(digits(&sys.first(3).unwrap()), ["1", "01", "001"]);
        assert!(matches!(sgap_system(IntSet::Explicit { values: vec![] }), Err(Error::EmptyS)));
        let lang = sys.language().unwrap();
        assert!(lang.member(&[0, 0, 1, 1, 0]));
    }

    #[test]
    fn gengap_small_levels() {
        let spec = GenGapSpec {
            d: 2,
            sets: vec![IntSet::Explicit { values: vec![0, 1] }, IntSet::Explicit { values: vec![0, 1] }],
            perms: vec![vec![0, 1], vec![1, 0]],
        };
        let sys = gengap_system(spec.clone()).unwrap();
        assert_eq!(digits(&sys.first(10).unwrap()), ["2", "02", "12", "012", "102"]);
        // (id, 0, 0) and (swap, 0, 0) both spell "2"
        assert!(!gengap_collisions(&spec, 3).unwrap().is_empty());
    }

    #[test]
    fn beta_golden_generators() {
        let sys = beta_system(BetaSpec { preperiod: vec![], period: vec![1, 0] }).unwrap();
        assert_eq!(digits(&sys.first(3).unwrap()), ["0", "100", "10100"]);
        let bad = BetaSpec { preperiod: vec![1], period: vec![2] };
        assert!(matches!(bad.validate(), Err(Error::NotQuasiGreedy(_))));
    }

    #[test]
    fn dyck_levels() {
        let sys = dyck_system(DyckVariant::Open, 12).unwrap();
        let w: Vec<String> = sys.words_up_to_len(4).unwrap().iter().map(|w| dyck_display(w)).collect();
        assert_eq!(w, ["(", "[", "()", "[]", "(())", "([])", "[()]", "[[]]"]);
        let lang = DyckLanguage;
        assert!(!lang.member(&[0, 2, 1]));
        assert!(lang.member(&[1, 0]));
    }

    #[test]
    fn example51_modified_counts() {
        let sys = example51_modified(3, 12).unwrap();
        assert_eq!(sys.words_up_to_len(8).unwrap().iter().filter(|w| w.len() == 8).count(), 4);
        assert_eq!(sys.length_count(8).unwrap(), BigUint::from(4u32));
    }
}
