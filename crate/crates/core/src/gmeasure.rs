//! G-Bernoulli measures on cylinders, finitely supported approximations in
//! the Wasserstein-1 metric, and exact W1 between such approximations.
//!
//! A word `w` sits inside a concatenation `g_0 g_1 .. g_k` at offset `t` of
//! `g_0`, overlapping every generator. Summing `(1/c) prod p_g` over all such
//! placements gives `mu([w])`. The sum is organised by where the placement
//! crosses generator boundaries:
//!
//! ```text
//! c mu([w]) = F(w) + sum_{0<i<|w|} Suf(w[..i]) R(i)
//! R(i)      = Pre(w[i..]) + sum_{i<j<|w|} [w[i..j] in G] p(w[i..j]) R(j)
//! ```
//!
//! with `F` the occurrence-weighted sum over generators containing `w`, and
//! `Suf`/`Pre` the weights of generators ending with / starting with a word.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, RwLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rint::{
    fx_ceil, fx_floor, fx_mul_ceil, fx_mul_floor, fx_to_rat, int, pow2, rat_to_string, Rat, RatInterval,
};
use crate::spectral::count_tail;
use crate::symbolic::{occurrences, EpPoint, GeneratorSystem, LanguageOracle, Structure, Word};
use crate::verejones::kappa_certified;

#[derive(Clone, Debug)]
pub enum WeightMode {
    /// `p_g = lambda^{-|g|}`.
    Mme,
    /// Explicit weights for the first generators; `tail` bounds
    /// `sum_{i > len} |g_i| p_i` over the rest.
    Custom { weights: Vec<Rat>, tail: Rat },
}

#[derive(Clone, Debug)]
pub struct GBernoulliSpec {
    pub system: GeneratorSystem,
    pub lambda: RatInterval,
    pub c: RatInterval,
    pub weight_mode: WeightMode,
}

impl GBernoulliSpec {
    pub fn new(system: GeneratorSystem, lambda: RatInterval, c: RatInterval, weight_mode: WeightMode) -> Result<Self> {
        if !c.lo().is_positive() {
            return Err(Error::NonPositiveArgument(format!("normalizing constant {c}")));
        }
        match &weight_mode {
            WeightMode::Mme => {
                if lambda.lo() < &Rat::one() {
                    return Err(Error::LambdaTooSmall);
                }
            }
            WeightMode::Custom { weights, tail } => {
                if tail.is_negative() {
                    return Err(Error::NonPositiveArgument("custom tail bound".into()));
                }
                if system.first(weights.len())?.len() < weights.len() {
                    return Err(Error::ShapeMismatch("more custom weights than generators".into()));
                }
                let mut s = Rat::zero();
                for (i, p) in weights.iter().enumerate() {
                    if p.is_negative() {
                        return Err(Error::NonPositiveArgument(format!("weight {i} is negative")));
                    }
                    s += p;
                    if s > Rat::one() {
                        return Err(Error::ShapeMismatch(format!("weights exceed total mass 1 at index {i}")));
                    }
                }
            }
        }
        Ok(GBernoulliSpec { system, lambda, c, weight_mode })
    }

    /// The measure of maximal entropy, with `lambda` and `c = kappa` certified
    /// to width `< 2^-n`.
    ///
    /// A finite code with a single generator `g` is a periodic orbit; its
    /// measure is the Bernoulli measure with `p_g = 1` and `c = |g|`.
    pub fn mme(system: GeneratorSystem, n: u32) -> Result<Self> {
        if system.is_finite() {
            let gens = system.first(2)?;
            if gens.len() == 1 {
                let len = gens[0].len() as i64;
                return GBernoulliSpec::new(
                    system,
                    RatInterval::from_int(1),
                    RatInterval::from_int(len),
                    WeightMode::Mme,
                );
            }
        }
        let cert = kappa_certified(&system, n)?;
        GBernoulliSpec::new(system, cert.lambda_used, cert.value, WeightMode::Mme)
    }

    fn is_degenerate_orbit(&self) -> bool {
        matches!(self.weight_mode, WeightMode::Mme) && self.lambda.lo() == &Rat::one()
    }

    fn refined(&self, n: u32) -> Result<Option<GBernoulliSpec>> {
        match self.weight_mode {
            WeightMode::Mme if !self.is_degenerate_orbit() => Ok(Some(GBernoulliSpec::mme(self.system.clone(), n)?)),
            _ => Ok(None),
        }
    }

    fn x_bounds(&self) -> RatInterval {
        RatInterval::new_unchecked(self.lambda.hi().recip(), self.lambda.lo().recip())
    }
}

/// One placement of a word: the generator indices of the concatenation and
/// the start of the word inside the first generator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GCylinderTerm {
    pub tuple: Vec<usize>,
    pub offset: usize,
}

/// Encloses `(1/c) prod p_g` over the tuple.
pub fn g_cylinder_measure(spec: &GBernoulliSpec, tuple: &[usize]) -> Result<RatInterval> {
    if tuple.is_empty() {
        return Err(Error::EmptyWord);
    }
    let prod = match &spec.weight_mode {
        WeightMode::Mme => {
            let mut total = 0usize;
            for &i in tuple {
                let g = spec.system.generator(i)?.ok_or_else(|| Error::ShapeMismatch(format!("no generator {i}")))?;
                total += g.len();
            }
            spec.x_bounds().pow(total as u32)
        }
        WeightMode::Custom { weights, .. } => {
            let mut p = Rat::one();
            for &i in tuple {
                p *= weights
                    .get(i)
                    .ok_or_else(|| Error::ShapeMismatch(format!("no custom weight for generator {i}")))?;
            }
            RatInterval::point(p)
        }
    };
    prod.div(&spec.c)
}

/// Every placement of `w` in concatenations of generators of length `<= maxlen`.
pub fn enumerate_occurrences(w: &[u8], sys: &GeneratorSystem, maxlen: usize) -> Result<Vec<GCylinderTerm>> {
    if w.is_empty() {
        return Err(Error::EmptyWord);
    }
    let gens = sys.words_up_to_len(maxlen)?;
    let mut out = Vec::new();
    let mut tuple = Vec::new();
    for (i0, g0) in gens.iter().enumerate() {
        for t in 0..g0.len() {
            let over = (g0.len() - t).min(w.len());
            if g0[t..t + over] != w[..over] {
                continue;
            }
            tuple.clear();
            tuple.push(i0);
            if over == w.len() {
                out.push(GCylinderTerm { tuple: tuple.clone(), offset: t });
            } else {
                extend(w, &gens, over, &mut tuple, t, &mut out);
            }
        }
    }
    Ok(out)
}

fn extend(w: &[u8], gens: &[Word], pos: usize, tuple: &mut Vec<usize>, t: usize, out: &mut Vec<GCylinderTerm>) {
    let rest = &w[pos..];
    for (i, g) in gens.iter().enumerate() {
        let over = g.len().min(rest.len());
        if g[..over] != rest[..over] {
            continue;
        }
        tuple.push(i);
        if g.len() >= rest.len() {
            out.push(GCylinderTerm { tuple: tuple.clone(), offset: t });
        } else {
            extend(w, gens, pos + g.len(), tuple, t, out);
        }
        tuple.pop();
    }
}

// ------------------------------------------------------------ fixed point

/// A pair of fixed-point values rounded down / up.
#[derive(Clone, Debug, Default)]
struct Fx {
    lo: BigUint,
    hi: BigUint,
}

impl Fx {
    fn from_rat(lo: &Rat, hi: &Rat, bits: u32) -> Fx {
        Fx { lo: fx_floor(lo, bits), hi: fx_ceil(hi, bits) }
    }

    fn add(&mut self, o: &Fx) {
        self.lo += &o.lo;
        self.hi += &o.hi;
    }

    fn mul(&self, o: &Fx, bits: u32) -> Fx {
        Fx { lo: fx_mul_floor(&self.lo, &o.lo, bits), hi: fx_mul_ceil(&self.hi, &o.hi, bits) }
    }

    fn add_mul(&mut self, a: &Fx, b: &Fx, bits: u32) {
        self.lo += fx_mul_floor(&a.lo, &b.lo, bits);
        self.hi += fx_mul_ceil(&a.hi, &b.hi, bits);
    }

    fn shr(&self, a: usize) -> Fx {
        let hi = &self.hi >> a;
        let hi = if (&hi << a) == self.hi { hi } else { hi + 1u32 };
        Fx { lo: &self.lo >> a, hi }
    }

    fn is_zero(&self) -> bool {
        self.hi.is_zero()
    }
}

fn bit_len(v: usize) -> u32 {
    usize::BITS - v.leading_zeros()
}

// ------------------------------------------------------------ engine

type Table = HashMap<Vec<u8>, (Fx, usize)>;

struct Generic {
    gens: Vec<Word>,
    gen: HashMap<Vec<u8>, (Fx, usize)>,
    pre: Vec<Table>,
    suf: Vec<Table>,
    fac: HashMap<usize, Table>,
}

fn add_entry(t: &mut Table, key: &[u8], v: &Fx, idx: usize) {
    match t.get_mut(key) {
        Some(e) => e.0.add(v),
        None => {
            t.insert(key.to_vec(), (v.clone(), idx));
        }
    }
}

impl Generic {
    fn build(gens: Vec<Word>, p: Vec<Fx>, max_len: usize, fac_lens: &[usize]) -> Generic {
        let mut gen = HashMap::with_capacity(gens.len());
        let mut pre = vec![Table::new(); max_len + 1];
        let mut suf = vec![Table::new(); max_len + 1];
        let mut fac: HashMap<usize, Table> = fac_lens.iter().map(|&l| (l, Table::new())).collect();
        for (i, (g, pg)) in gens.iter().zip(&p).enumerate() {
            if pg.is_zero() {
                continue;
            }
            gen.insert(g.to_vec(), (pg.clone(), i));
            for l in 1..=max_len.min(g.len()) {
                add_entry(&mut pre[l], &g[..l], pg, i);
                add_entry(&mut suf[l], &g[g.len() - l..], pg, i);
            }
            for (&l, t) in fac.iter_mut() {
                if l <= g.len() {
                    for s in 0..=g.len() - l {
                        add_entry(t, &g[s..s + l], pg, i);
                    }
                }
            }
        }
        Generic { gens, gen, pre, suf, fac }
    }

    fn eval(&self, w: &[u8], bits: u32) -> Fx {
        let l = w.len();
        let mut total = self.fac.get(&l).and_then(|t| t.get(w)).map(|e| e.0.clone()).unwrap_or_default();
        let mut r = vec![Fx::default(); l];
        for i in (1..l).rev() {
            let mut v = self.pre[l - i].get(&w[i..]).map(|e| e.0.clone()).unwrap_or_default();
            for j in i + 1..l {
                if let Some((p, _)) = self.gen.get(&w[i..j]) {
                    if !r[j].is_zero() {
                        v.add_mul(p, &r[j], bits);
                    }
                }
            }
            r[i] = v;
        }
        for (i, ri) in r.iter().enumerate().skip(1) {
            if ri.is_zero() {
                continue;
            }
            if let Some((s, _)) = self.suf[i].get(&w[..i]) {
                total.add_mul(s, ri, bits);
            }
        }
        total
    }

    /// A concatenation of generators containing `w`, with the start of `w`.
    fn witness(&self, w: &[u8]) -> Option<(Vec<u8>, usize)> {
        let l = w.len();
        if let Some((_, gi)) = self.fac.get(&l).and_then(|t| t.get(w)) {
            let g = &self.gens[*gi];
            return Some((g.to_vec(), occurrences(w, g)[0]));
        }
        let mut chain: Vec<Option<Vec<usize>>> = vec![None; l];
        for i in (1..l).rev() {
            if let Some((_, gi)) = self.pre[l - i].get(&w[i..]) {
                chain[i] = Some(vec![*gi]);
                continue;
            }
            for j in i + 1..l {
                if let (Some((_, gi)), Some(rest)) = (self.gen.get(&w[i..j]), &chain[j]) {
                    let mut c = vec![*gi];
                    c.extend_from_slice(rest);
                    chain[i] = Some(c);
                    break;
                }
            }
        }
        for i in 1..l {
            if let (Some((_, g0)), Some(rest)) = (self.suf[i].get(&w[..i]), &chain[i]) {
                let first = &self.gens[*g0];
                let mut u = first.to_vec();
                for &gi in rest {
                    u.extend_from_slice(&self.gens[gi]);
                }
                return Some((u, first.len() - i));
            }
        }
        None
    }
}

/// Closed-form sums over Dyck generators, driven by the bracket heights.
///
/// `pp[h]` weighs the proper prefixes of irreducible balanced words that end
/// at height `h`, `ss[h]` the proper suffixes that start at height `h`, both
/// with `x^length` and the free bracket types counted.
struct Dyck {
    g1_open: bool,
    pp: Vec<Fx>,
    ss: Vec<Fx>,
    pw: Vec<Fx>,
    // sum_{h > a} pp[h] ss[h + delta], keyed by (a, delta)
    inner: RwLock<HashMap<(i64, i64), Fx>>,
}

struct Heights {
    rel: Vec<i64>,
    a: i64,
    b: i64,
}

fn heights(v: &[u8]) -> Heights {
    let mut rel = Vec::with_capacity(v.len() + 1);
    let mut h = 0i64;
    rel.push(0);
    for &c in v {
        h += if c % 2 == 0 { 1 } else { -1 };
        rel.push(h);
    }
    let a = -rel.iter().copied().min().unwrap_or(0);
    Heights { b: h + a, rel, a }
}

impl Dyck {
    fn build(x: &Fx, cut: usize, max_len: usize, g1_open: bool, bits: u32) -> Dyck {
        let one = BigUint::one() << bits as usize;
        let mut pw = vec![Fx { lo: one.clone(), hi: one.clone() }];
        for k in 1..=max_len.max(1) {
            let next = pw[k - 1].mul(x, bits);
            pw.push(next);
        }
        let x2 = Fx { lo: &x.lo << 1, hi: &x.hi << 1 };
        // b[h]: paths from 0 with first step up staying >= 1, typed, times x^p
        let mut pp = vec![Fx::default(); cut + 2];
        let mut ss = vec![Fx::default(); cut + 2];
        let mut b = vec![Fx::default(); cut + 3];
        let mut c = vec![Fx::default(); cut + 3];
        b[1] = x2.clone();
        c[1] = x.clone();
        pp[1].add(&b[1]);
        ss[1].add(&c[1]);
        for p in 2..=cut {
            let mut nb = vec![Fx::default(); cut + 3];
            let mut nc = vec![Fx::default(); cut + 3];
            for h in 1..=p {
                if (p + h) % 2 == 1 {
                    continue;
                }
                let mut vb = Fx::default();
                let mut vc = Fx::default();
                if h >= 2 {
                    vb.add_mul(&x2, &b[h - 1], bits);
                    vc.add_mul(x, &c[h - 1], bits);
                }
                if h < p {
                    vb.add_mul(x, &b[h + 1], bits);
                    vc.add_mul(&x2, &c[h + 1], bits);
                }
                pp[h].add(&vb);
                ss[h].add(&vc);
                nb[h] = vb;
                nc[h] = vc;
            }
            b = nb;
            c = nc;
        }
        Dyck { g1_open, pp, ss, pw, inner: RwLock::new(HashMap::new()) }
    }

    fn g1(&self, v: &[u8]) -> bool {
        v.len() == 1 && v[0].is_multiple_of(2) == self.g1_open
    }

    fn pp(&self, h: i64) -> Option<&Fx> {
        self.pp.get(h as usize).filter(|_| h >= 1)
    }

    fn ss(&self, h: i64) -> Option<&Fx> {
        self.ss.get(h as usize).filter(|_| h >= 1)
    }

    fn irreducible(hs: &Heights) -> bool {
        let n = hs.rel.len() - 1;
        n >= 2 && hs.rel[n] == 0 && hs.rel[1..n].iter().all(|&h| h >= 1)
    }

    fn is_gen(&self, v: &[u8]) -> bool {
        self.g1(v) || Dyck::irreducible(&heights(v))
    }

    fn base(&self, v: &[u8], hs: &Heights) -> Fx {
        let mut t = Fx::default();
        if self.g1(v) {
            t.add(&self.pw[1]);
        }
        if Dyck::irreducible(hs) {
            t.add(&self.pw[v.len()]);
        }
        t
    }

    /// Generators starting with `v`.
    fn pre(&self, v: &[u8], bits: u32) -> Fx {
        let hs = heights(v);
        let mut t = self.base(v, &hs);
        if hs.rel[1..].iter().all(|&h| h >= 1) {
            if let Some(s) = self.ss(hs.rel[v.len()]) {
                t.add(&self.pw[v.len()].mul(s, bits));
            }
        }
        t
    }

    fn proper_suffix(hs: &Heights) -> bool {
        let n = hs.rel.len() - 1;
        hs.a >= 1 && hs.rel[n] == -hs.a && hs.rel[..n].iter().all(|&h| h >= 1 - hs.a)
    }

    /// Generators ending with `u`.
    fn suf(&self, u: &[u8], bits: u32) -> Fx {
        let hs = heights(u);
        let mut t = self.base(u, &hs);
        if Dyck::proper_suffix(&hs) {
            if let Some(p) = self.pp(hs.a) {
                t.add(&self.pw[u.len()].mul(p, bits).shr(hs.a as usize));
            }
        }
        t
    }

    /// Occurrence-weighted sum over generators containing `w`.
    fn fac(&self, w: &[u8], bits: u32) -> Fx {
        let hs = heights(w);
        let n = w.len();
        let mut t = self.base(w, &hs);
        let xw = &self.pw[n];
        if hs.rel[1..].iter().all(|&h| h >= 1) {
            if let Some(s) = self.ss(hs.b) {
                t.add(&xw.mul(s, bits));
            }
        }
        if Dyck::proper_suffix(&hs) {
            if let Some(p) = self.pp(hs.a) {
                t.add(&xw.mul(p, bits).shr(hs.a as usize));
            }
        }
        let inner = self.inner_sum(hs.a, hs.b - hs.a, bits);
        t.add(&xw.mul(&inner, bits).shr(hs.a as usize));
        t
    }

    fn inner_sum(&self, a: i64, delta: i64, bits: u32) -> Fx {
        if let Some(v) = self.inner.read().unwrap().get(&(a, delta)) {
            return v.clone();
        }
        let mut sum = Fx::default();
        for h in a + 1..self.pp.len() as i64 {
            if let (Some(p), Some(s)) = (self.pp(h), self.ss(h + delta)) {
                if !p.is_zero() && !s.is_zero() {
                    sum.add_mul(p, s, bits);
                }
            }
        }
        self.inner.write().unwrap().insert((a, delta), sum.clone());
        sum
    }

    fn eval(&self, w: &[u8], bits: u32) -> Fx {
        let l = w.len();
        let mut total = self.fac(w, bits);
        let mut r = vec![Fx::default(); l];
        for i in (1..l).rev() {
            let mut v = self.pre(&w[i..], bits);
            for j in i + 1..l {
                if !r[j].is_zero() && self.is_gen(&w[i..j]) {
                    v.add_mul(&self.pw[j - i], &r[j], bits);
                }
            }
            r[i] = v;
        }
        for (i, ri) in r.iter().enumerate().skip(1) {
            if !ri.is_zero() {
                total.add_mul(&self.suf(&w[..i], bits), ri, bits);
            }
        }
        total
    }

    /// `pre w post` balanced, as a periodic representative.
    fn completion(w: &[u8]) -> (Vec<u8>, usize) {
        let mut pre = Vec::new();
        let mut stack = Vec::new();
        for &c in w {
            if c % 2 == 0 {
                stack.push(c);
            } else if stack.pop().is_none() {
                pre.push(c - 1);
            }
        }
        pre.reverse();
        let start = pre.len();
        let mut u = pre;
        u.extend_from_slice(w);
        u.extend(stack.iter().rev().map(|&o| o + 1));
        (u, start)
    }
}

enum Kind {
    Generic(Generic),
    Dyck(Dyck),
}

struct Engine<'a> {
    spec: &'a GBernoulliSpec,
    bits: u32,
    out_bits: u32,
    /// `1/c` rounded down and up
    inv_c: Fx,
    /// bounds on `sum |g| p_g / c` and `sum p_g / c` over the generators left out
    tail_len: BigUint,
    tail_count: BigUint,
    symbols: Option<BTreeSet<u8>>,
    kind: Kind,
}

impl<'a> Engine<'a> {
    /// Prepares evaluation of words with lengths in `lens` to width `< 2^-n`.
    fn new(spec: &'a GBernoulliSpec, lens: &[usize], n: u32) -> Result<Engine<'a>> {
        let max_len = lens.iter().copied().max().unwrap_or(1).max(1);
        let sys = &spec.system;
        let c_lo = spec.c.lo().clone();
        let target = pow2(-(n as i64) - 1);
        let tail_of = |cut: usize| -> Result<(Rat, Rat)> {
            let x_hi = spec.lambda.lo().recip();
            Ok((count_tail(sys, &x_hi, cut, 1)?, count_tail(sys, &x_hi, cut, 0)?))
        };
        let fits = |tl: &Rat, tc: &Rat| (tl + tc * int(max_len as i64 - 1)) / &c_lo < target;

        let (cut, tail_len, tail_count) = match &spec.weight_mode {
            WeightMode::Custom { weights, tail } => {
                if !fits(tail, tail) {
                    return Err(Error::InsufficientPrecision(format!(
                        "custom tail bound {} is too large for precision {n}",
                        rat_to_string(tail)
                    )));
                }
                (weights.len(), tail.clone(), tail.clone())
            }
            WeightMode::Mme => match sys.finite_max_len()? {
                Some(m) => (m, Rat::zero(), Rat::zero()),
                None => {
                    let mut hi = max_len.max(8);
                    let mut found = None;
                    for _ in 0..crate::budget().max(4) {
                        let (tl, tc) = tail_of(hi)?;
                        if fits(&tl, &tc) {
                            found = Some((tl, tc));
                            break;
                        }
                        hi *= 2;
                    }
                    let (mut tl, mut tc) = found
                        .ok_or_else(|| Error::BudgetExceeded("no generator cutoff meets the tail target".into()))?;
                    let mut lo = hi / 2;
                    while hi - lo > 1 {
                        let mid = (lo + hi) / 2;
                        let (a, b) = tail_of(mid)?;
                        if fits(&a, &b) {
                            hi = mid;
                            tl = a;
                            tc = b;
                        } else {
                            lo = mid;
                        }
                    }
                    (hi, tl, tc)
                }
            },
        };
        let bits = n + 24 + 2 * bit_len(cut + max_len) + bit_len(max_len * max_len);
        let x = spec.x_bounds();
        let xf = Fx::from_rat(x.lo(), x.hi(), bits);

        let dyck = sys.structure() == Structure::Dyck && matches!(spec.weight_mode, WeightMode::Mme);
        let kind = if dyck {
            let g1_open = sys.first(1)?.first().is_some_and(|g| g[0] % 2 == 0);
            Kind::Dyck(Dyck::build(&xf, cut, max_len, g1_open, bits))
        } else {
            let (gens, p) = match &spec.weight_mode {
                WeightMode::Mme => {
                    let gens = sys.words_up_to_len(cut)?;
                    let one = BigUint::one() << bits as usize;
                    let mut pw = vec![Fx { lo: one.clone(), hi: one }];
                    for k in 1..=cut {
                        let next = pw[k - 1].mul(&xf, bits);
                        pw.push(next);
                    }
                    let p = gens.iter().map(|g| pw[g.len()].clone()).collect();
                    (gens, p)
                }
                WeightMode::Custom { weights, .. } => {
                    let gens = sys.first(weights.len())?;
                    let p = weights.iter().map(|w| Fx::from_rat(w, w, bits)).collect();
                    (gens, p)
                }
            };
            let mut fl: Vec<usize> = lens.to_vec();
            fl.sort_unstable();
            fl.dedup();
            Kind::Generic(Generic::build(gens, p, max_len, &fl))
        };
        let symbols = if sys.is_finite() {
            Some(sys.first(usize::MAX)?.iter().flat_map(|g| g.iter().copied()).collect())
        } else {
            None
        };
        let inv_c = Fx::from_rat(&spec.c.hi().recip(), &spec.c.lo().recip(), bits);
        let tail_len = fx_ceil(&(tail_len / spec.c.lo()), bits);
        let tail_count = fx_ceil(&(tail_count / spec.c.lo()), bits);
        Ok(Engine { spec, bits, out_bits: n + 6, inv_c, tail_len, tail_count, symbols, kind })
    }

    fn impossible(&self, w: &[u8]) -> bool {
        let sys = &self.spec.system;
        if w.iter().any(|&c| c as usize >= sys.alphabet_size()) {
            return true;
        }
        if let Some(s) = &self.symbols {
            if w.iter().any(|c| !s.contains(c)) {
                return true;
            }
        }
        matches!(sys.language(), Some(l) if !l.member(w))
    }

    fn measure(&self, w: &[u8]) -> RatInterval {
        if self.impossible(w) {
            return RatInterval::from_int(0);
        }
        let s = match &self.kind {
            Kind::Generic(g) => g.eval(w, self.bits),
            Kind::Dyck(d) => d.eval(w, self.bits),
        };
        let m = s.mul(&self.inv_c, self.bits);
        let one = BigUint::one() << self.bits as usize;
        let hi = (m.hi + &self.tail_len + &self.tail_count * BigUint::from(w.len() - 1)).min(one);
        let shift = (self.bits - self.out_bits) as usize;
        let r = Fx { lo: m.lo, hi }.shr(shift);
        RatInterval::new_unchecked(fx_to_rat(&r.lo, self.out_bits), fx_to_rat(&r.hi, self.out_bits))
    }

    fn witness(&self, w: &[u8]) -> Option<(Vec<u8>, usize)> {
        match &self.kind {
            Kind::Generic(g) => g.witness(w),
            Kind::Dyck(_) => Some(Dyck::completion(w)),
        }
    }
}

/// Encloses `mu([w])` with width `< 2^-n`.
///
/// Words outside the language, or using symbols that no generator uses, get
/// the exact value 0. A word with no placement among the retained generators
/// gets `[0, tail]`.
pub fn cylinder_measure(spec: &GBernoulliSpec, w: &[u8], n: u32) -> Result<RatInterval> {
    if w.is_empty() {
        return Err(Error::EmptyWord);
    }
    let mut owned: Option<GBernoulliSpec> = None;
    let mut p = n + 4;
    for _ in 0..4 {
        let s = owned.as_ref().unwrap_or(spec);
        let r = Engine::new(s, &[w.len()], n + 1)?.measure(w);
        if r.width_below_pow2(n) {
            return Ok(r);
        }
        match spec.refined(p)? {
            Some(s) => owned = Some(s),
            None => break,
        }
        p += 6;
    }
    Err(Error::InsufficientPrecision(format!(
        "lambda and c enclosures of the spec are too wide for a cylinder width below 2^-{n}"
    )))
}

/// `mu(sigma^{-r}[w])`; equal to [`cylinder_measure`] by shift invariance.
pub fn noncentered_measure(spec: &GBernoulliSpec, w: &[u8], _r: i64, n: u32) -> Result<RatInterval> {
    cylinder_measure(spec, w, n)
}

// ------------------------------------------------------------ ideal measures

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Atom {
    pub point: EpPoint,
    #[serde(serialize_with = "crate::rint::ser_rat", deserialize_with = "crate::rint::de_rat")]
    pub weight: Rat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdealMeasure {
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<usize>,
}

impl IdealMeasure {
    pub fn new(atoms: Vec<Atom>, alphabet: Option<usize>) -> Result<Self> {
        let m = IdealMeasure { atoms, alphabet };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mut total = Rat::zero();
        for (i, a) in self.atoms.iter().enumerate() {
            if !a.weight.is_positive() {
                return Err(Error::InvalidMeasure(format!("atom {i} has weight {}", rat_to_string(&a.weight))));
            }
            if let Some(d) = self.alphabet {
                if a.point.max_symbol() as usize >= d {
                    return Err(Error::InvalidMeasure(format!("atom {i} uses a symbol outside the alphabet")));
                }
            }
            total += &a.weight;
        }
        if !total.is_one() {
            return Err(Error::InvalidMeasure(format!("weights sum to {}", rat_to_string(&total))));
        }
        let points: Vec<&EpPoint> = self.atoms.iter().map(|a| &a.point).collect();
        let order = sort_points(&points);
        for w in order.windows(2) {
            if points[w[0]].first_difference(points[w[1]]).is_none() {
                return Err(Error::InvalidMeasure(format!("atoms {} and {} share a point", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: IdealMeasure = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn total_mass(&self) -> Rat {
        self.atoms.iter().map(|a| &a.weight).fold(Rat::zero(), |s, w| s + w)
    }
}

fn ceil_log2(v: usize) -> u32 {
    if v <= 1 {
        0
    } else {
        bit_len(v - 1)
    }
}

fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    if threads <= 1 || items.len() < 1024 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// A finitely supported `nu` with rational weights and `W1(mu, nu) < 2^-n`.
///
/// Atoms sit on the words of length `2n+1` of the language, centred at
/// coordinate 0. Each weight is the certified lower bound of the cylinder
/// value rounded down on the grid `2^-k-1`, with `2^k >= 6 l 2^n` for `l`
/// words and enclosures narrower than one grid step; the leftover mass goes
/// to the last atom. Moving mass inside a cylinder costs at most `2^-n-1`
/// and the total weight deficit is at most `l 2^-k <= 2^-n / 6`.
pub fn ideal_measure(spec: &GBernoulliSpec, lang: &dyn LanguageOracle, n: u32) -> Result<IdealMeasure> {
    let d = spec.system.alphabet_size();
    if lang.alphabet_size() != d {
        return Err(Error::AlphabetMismatch(format!(
            "language over {} symbols, generators over {d}",
            lang.alphabet_size()
        )));
    }
    let half = n as usize;
    let len = 2 * half + 1;
    let words = lang.enumerate_level(len);
    if words.is_empty() {
        return Err(Error::LanguageLevelEmpty(len));
    }
    let ell = words.len();
    let k = ceil_log2(6 * ell) + n;
    let prec = k + 1;

    let mut owned: Option<GBernoulliSpec> = None;
    if !spec.is_degenerate_orbit() && (!spec.c.width_below_pow2(prec + 4) || !spec.lambda.width_below_pow2(prec + 8)) {
        owned = spec.refined(prec + 8)?;
    }
    let mut extra = 8;
    let scaled = loop {
        let s = owned.as_ref().unwrap_or(spec);
        let engine = Engine::new(s, &[len], prec + 1)?;
        let encl = parallel_map(&words, |w| engine.measure(w));
        if encl.iter().all(|e| e.width_below_pow2(prec)) {
            let q: Vec<BigInt> = encl
                .iter()
                .map(|e| {
                    let t: BigInt = (e.lo().numer() << prec as usize).div_floor(e.lo().denom());
                    if t.is_positive() {
                        t
                    } else {
                        BigInt::zero()
                    }
                })
                .collect();
            let mut reps = Vec::new();
            for (i, qi) in q.iter().enumerate() {
                if qi.is_positive() {
                    let (u, t) = engine.witness(&words[i]).ok_or_else(|| {
                        Error::PrecisionExhausted(format!("no witnessing concatenation for {}", words[i]))
                    })?;
                    reps.push((i, u, t));
                }
            }
            break (q, reps);
        }
        extra += 8;
        if extra > 40 {
            return Err(Error::PrecisionExhausted("cylinder enclosures stay too wide".into()));
        }
        owned = match spec.refined(prec + extra)? {
            Some(s) => Some(s),
            None => {
                return Err(Error::InsufficientPrecision(format!(
                    "spec enclosures are too wide for cylinder width 2^-{prec}"
                )))
            }
        };
    };
    let (q, reps) = scaled;
    let unit = BigInt::one() << prec as usize;
    let used: BigInt = q.iter().sum();
    let leftover = &unit - used;
    let denom = unit;
    let count = reps.len();
    let mut atoms = Vec::with_capacity(count);
    for (j, (i, u, t)) in reps.into_iter().enumerate() {
        let mut wq = q[i].clone();
        if j + 1 == count {
            wq += &leftover;
        }
        let point = EpPoint::periodic(Arc::from(u), (t + half) as i64)?;
        atoms.push(Atom { point, weight: Rat::new(wq, denom.clone()) });
    }
    Ok(IdealMeasure { atoms, alphabet: Some(d) })
}

// ------------------------------------------------------------ W1

const KEY: usize = 32;

/// Coordinate visited at step `j` of the order `0, 1, -1, 2, -2, ..`.
fn interleaved(j: usize) -> i64 {
    if j == 0 {
        0
    } else if j % 2 == 1 {
        j.div_ceil(2) as i64
    } else {
        -((j / 2) as i64)
    }
}

fn key_of(p: &EpPoint) -> [u8; KEY] {
    let mut k = [0u8; KEY];
    for (j, slot) in k.iter_mut().enumerate() {
        *slot = p.at(interleaved(j));
    }
    k
}

/// First index in the interleaved order where the points differ.
fn split_index(x: &EpPoint, y: &EpPoint) -> Option<usize> {
    let m = x.first_difference(y)?;
    Some(if m == 0 {
        0
    } else if x.at(m as i64) != y.at(m as i64) {
        2 * m as usize - 1
    } else {
        2 * m as usize
    })
}

fn cmp_points(x: &EpPoint, y: &EpPoint) -> Ordering {
    match split_index(x, y) {
        None => Ordering::Equal,
        Some(j) => x.at(interleaved(j)).cmp(&y.at(interleaved(j))),
    }
}

fn sort_points(points: &[&EpPoint]) -> Vec<usize> {
    let keys: Vec<[u8; KEY]> = parallel_map(points, |p| key_of(p));
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_unstable_by(|&a, &b| keys[a].cmp(&keys[b]).then_with(|| cmp_points(points[a], points[b])));
    order
}

/// Exact Wasserstein-1 distance between two finitely supported measures.
///
/// `d` is an ultrametric: two points at distance `2^-m` share every
/// coordinate in the interleaved order `0, 1, -1, .., ` up to the split. The
/// optimal cost is therefore a sum over the nodes of the prefix tree of the
/// edge length times the absolute mass imbalance below the node.
pub fn w1_exact(a: &IdealMeasure, b: &IdealMeasure) -> Result<Rat> {
    if let (Some(x), Some(y)) = (a.alphabet, b.alphabet) {
        if x != y {
            return Err(Error::AlphabetMismatch(format!("measures over {x} and {y} symbols")));
        }
    }
    let mut points: Vec<&EpPoint> = Vec::with_capacity(a.atoms.len() + b.atoms.len());
    let mut weights: Vec<Rat> = Vec::with_capacity(points.capacity());
    for at in &a.atoms {
        points.push(&at.point);
        weights.push(at.weight.clone());
    }
    for at in &b.atoms {
        points.push(&at.point);
        weights.push(-at.weight.clone());
    }
    if points.is_empty() {
        return Ok(Rat::zero());
    }
    let scale = weights.iter().fold(BigInt::one(), |l, w| l.lcm(w.denom()));
    let ints: Vec<BigInt> = weights.iter().map(|w| w.numer() * (&scale / w.denom())).collect();
    let order = sort_points(&points);

    // merge equal points, then record split depths between neighbours
    let mut merged: Vec<(usize, BigInt)> = Vec::new();
    let mut splits: Vec<usize> = Vec::new();
    for &i in &order {
        if let Some((j, acc)) = merged.last_mut() {
            match split_index(points[*j], points[i]) {
                None => {
                    *acc += &ints[i];
                    continue;
                }
                Some(s) => splits.push(s),
            }
        }
        merged.push((i, ints[i].clone()));
    }
    let fits = ints.iter().all(|v| v.bits() < 64) && (ints.len() as u64) < (1 << 40);
    let total = if fits {
        let vals: Vec<i128> = merged.iter().map(|(_, v)| v.to_i128().unwrap()).collect();
        tree_cost(&vals, &splits, |v: &i128| BigInt::from(*v))
    } else {
        let vals: Vec<BigInt> = merged.into_iter().map(|(_, v)| v).collect();
        tree_cost(&vals, &splits, |v: &BigInt| v.clone())
    };
    Ok(total / Rat::from_integer(scale))
}

/// `sum_{t even} 2^{-t/2-2} sum_{runs at depth t+1} |mass|`, with the
/// singleton levels past the deepest split summed in closed form.
fn tree_cost<T>(vals: &[T], splits: &[usize], big: impl Fn(&T) -> BigInt) -> Rat
where
    T: Clone + Zero + Signed + std::ops::AddAssign,
{
    let deepest = splits.iter().copied().max().unwrap_or(0);
    let end = deepest + deepest % 2;
    let mut total = Rat::zero();
    let mut t = 0;
    while t < end {
        let mut level = T::zero();
        let mut run = vals[0].clone();
        for (i, v) in vals.iter().enumerate().skip(1) {
            if splits[i - 1] > t {
                run += v.clone();
            } else {
                level += run.abs();
                run = v.clone();
            }
        }
        level += run.abs();
        if !level.is_zero() {
            total += Rat::from_integer(big(&level)) * pow2(-(t as i64) / 2 - 2);
        }
        t += 2;
    }
    let mut leaves = T::zero();
    for v in vals {
        leaves += v.abs();
    }
    total + Rat::from_integer(big(&leaves)) * pow2(-(end as i64) / 2 - 1)
}

/// Optimal transport cost by successive shortest paths on the bipartite
/// support graph, with exact rational flows and costs. Quadratic in the
/// support sizes per augmentation; meant for small supports.
pub fn w1_transport(a: &IdealMeasure, b: &IdealMeasure) -> Result<Rat> {
    let (na, nb) = (a.atoms.len(), b.atoms.len());
    // nodes: 0 source, 1..=na, na+1..=na+nb, sink
    let sink = na + nb + 1;
    let nodes = sink + 1;
    struct E {
        to: usize,
        cap: Option<Rat>,
        cost: Rat,
        rev: usize,
    }
    let mut g: Vec<Vec<E>> = (0..nodes).map(|_| Vec::new()).collect();
    let add = |g: &mut Vec<Vec<E>>, u: usize, v: usize, cap: Option<Rat>, cost: Rat| {
        let (ru, rv) = (g[v].len(), g[u].len());
        g[u].push(E { to: v, cap, cost: cost.clone(), rev: ru });
        g[v].push(E { to: u, cap: Some(Rat::zero()), cost: -cost, rev: rv });
    };
    for (i, at) in a.atoms.iter().enumerate() {
        add(&mut g, 0, 1 + i, Some(at.weight.clone()), Rat::zero());
    }
    for (j, at) in b.atoms.iter().enumerate() {
        add(&mut g, 1 + na + j, sink, Some(at.weight.clone()), Rat::zero());
    }
    for (i, x) in a.atoms.iter().enumerate() {
        for (j, y) in b.atoms.iter().enumerate() {
            add(&mut g, 1 + i, 1 + na + j, None, crate::symbolic::metric_d(&x.point, &y.point));
        }
    }
    let residual = |e: &E| e.cap.as_ref().is_none_or(|c| c.is_positive());
    let mut cost = Rat::zero();
    loop {
        let mut dist: Vec<Option<Rat>> = vec![None; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        dist[0] = Some(Rat::zero());
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                let Some(du) = dist[u].clone() else { continue };
                for (k, e) in g[u].iter().enumerate() {
                    if !residual(e) {
                        continue;
                    }
                    let nd = &du + &e.cost;
                    if dist[e.to].as_ref().is_none_or(|d| &nd < d) {
                        dist[e.to] = Some(nd);
                        prev[e.to] = Some((u, k));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_none() {
            break;
        }
        let mut push: Option<Rat> = None;
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            if let Some(c) = &g[u][k].cap {
                if push.as_ref().is_none_or(|p| c < p) {
                    push = Some(c.clone());
                }
            }
            v = u;
        }
        let push = push.expect("source edges are finite");
        let mut v = sink;
        while let Some((u, k)) = prev[v] {
            let r = g[u][k].rev;
            if let Some(c) = g[u][k].cap.as_mut() {
                *c -= &push;
            }
            if let Some(c) = g[v][r].cap.as_mut() {
                *c += &push;
            }
            cost += &push * &g[u][k].cost;
            v = u;
        }
    }
    Ok(cost)
}
