//! Words, generator oracles, eventually periodic points, and unique
//! decodability of finite codes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::ops::Deref;
use std::sync::{Arc, RwLock};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rint::{int, pow2, Rat, RatInterval};

pub const MAX_ALPHABET: usize = 64;

/// Nonempty finite word over `{0, .., d-1}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Arc<[u8]>);

impl Word {
    pub fn new(symbols: Vec<u8>) -> Result<Word> {
        if symbols.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(Word(symbols.into()))
    }

    pub fn from_slice(symbols: &[u8]) -> Result<Word> {
        Word::new(symbols.to_vec())
    }

    /// Parses a string of decimal digits, one symbol per character.
    pub fn parse_digits(s: &str) -> Result<Word> {
        let syms = s
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as u8))
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| Error::Parse(format!("not a digit word: {s:?}")))?;
        Word::new(syms)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn arc(&self) -> Arc<[u8]> {
        self.0.clone()
    }

    pub fn check_alphabet(&self, d: usize) -> Result<()> {
        check_symbols(&self.0, d)
    }

    pub fn concat(parts: &[Word]) -> Vec<u8> {
        parts.iter().flat_map(|w| w.0.iter().copied()).collect()
    }
}

pub fn check_symbols(w: &[u8], d: usize) -> Result<()> {
    match w.iter().find(|&&s| s as usize >= d) {
        Some(&s) => Err(Error::SymbolOutOfAlphabet { symbol: s, alphabet: d }),
        None => Ok(()),
    }
}

pub fn format_symbols(w: &[u8]) -> String {
    if w.iter().all(|&s| s < 10) {
        w.iter().map(|&s| char::from(b'0' + s)).collect()
    } else {
        let parts: Vec<String> = w.iter().map(|s| s.to_string()).collect();
        format!("[{}]", parts.join(","))
    }
}

impl Deref for Word {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_symbols(&self.0))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({})", format_symbols(&self.0))
    }
}

pub(crate) fn ser_symbols<S: Serializer>(w: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    if w.iter().all(|&c| c < 10) {
        s.serialize_str(&format_symbols(w))
    } else {
        w.serialize(s)
    }
}

pub(crate) fn de_symbols<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Digits(String),
        Array(Vec<u8>),
    }
    match Raw::deserialize(d)? {
        Raw::Array(v) => Ok(v),
        Raw::Digits(s) => s
            .chars()
            .map(|c| c.to_digit(10).map(|x| x as u8))
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| serde::de::Error::custom(format!("not a digit word: {s:?}"))),
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ser_symbols(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = de_symbols(d)?;
        Word::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TailControl {
    /// The generating set is finite with this many words.
    Finite(usize),
    /// At most `b` generators of every length.
    BoundedGrowth(u64),
    /// A rational `eps` with `0 < eps < h - r(G)`, i.e.
    /// `|G_k| <= lambda*^k e^{-k eps}` for every `k`.
    GapEpsilon(Rat),
    /// `|G_k| <= coef * k^degree` for every `k`.
    PolynomialGrowth {
        coef: u64,
        degree: u32,
    },
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Paper,
    User,
}

/// Constants a system declares about itself. They are cross-checked, never
/// trusted blindly.
#[derive(Clone, Debug, Default)]
pub struct Declared {
    pub lambda: Option<RatInterval>,
    pub kappa: Option<Rat>,
    pub provenance: Option<Provenance>,
}

/// Families whose cylinder measures have a dedicated evaluation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    Generic,
    Dyck,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationReason {
    LengthDecrease { previous: usize, got: usize },
    SymbolOutOfAlphabet { symbol: u8 },
    Duplicate { first_index: usize },
    GrowthBound { length: usize, bound: u64 },
}

/// A contract violation of a generator oracle; `index` is 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            ViolationReason::LengthDecrease { previous, got } => {
                write!(f, "generator {} has length {} after length {}", self.index, got, previous)
            }
            ViolationReason::SymbolOutOfAlphabet { symbol } => {
                write!(f, "generator {} uses symbol {} outside the alphabet", self.index, symbol)
            }
            ViolationReason::Duplicate { first_index } => {
                write!(f, "generator {} repeats generator {}", self.index, first_index)
            }
            ViolationReason::GrowthBound { length, bound } => write!(
                f,
                "generator {} is the {}-th of length {}, more than the declared bound",
                self.index,
                bound + 1,
                length
            ),
        }
    }
}

/// Enumerates a generating set in nondecreasing length.
pub trait GeneratorOracle: Send + Sync {
    fn alphabet_size(&self) -> usize;

    /// Generators starting at index `start` (0-based). `last_len` is the
    /// length of generator `start - 1`, or 0. Returning an empty vector means
    /// the set is exhausted.
    fn next_chunk(&self, start: usize, last_len: usize) -> Result<Vec<Word>>;

    /// Number of generators of length `k`, when known in closed form.
    fn count_of_length(&self, _k: usize) -> Option<BigUint> {
        None
    }
}

/// Oracle over an explicit finite list.
pub struct ListOracle {
    alphabet: usize,
    words: Vec<Word>,
}

impl ListOracle {
    pub fn new(alphabet: usize, words: Vec<Word>) -> Self {
        ListOracle { alphabet, words }
    }
}

impl GeneratorOracle for ListOracle {
    fn alphabet_size(&self) -> usize {
        self.alphabet
    }
    fn next_chunk(&self, start: usize, _last_len: usize) -> Result<Vec<Word>> {
        Ok(self.words.get(start..).map(|s| s.to_vec()).unwrap_or_default())
    }
}

#[derive(Default)]
struct Memo {
    words: Vec<Word>,
    seen: HashMap<Word, usize>,
    level_counts: Vec<usize>,
    exhausted: bool,
    poisoned: Option<Violation>,
}

struct Inner {
    oracle: Box<dyn GeneratorOracle>,
    alphabet: usize,
    memo: RwLock<Memo>,
}

impl Inner {
    /// Pulls chunks until `done(memo)` holds, the oracle is exhausted, or a
    /// violation appears. Single writer, many readers.
    fn extend_until(&self, done: impl Fn(&Memo) -> bool) -> Result<()> {
        {
            let m = self.memo.read().unwrap();
            if done(&m) || m.exhausted || m.poisoned.is_some() {
                return Ok(());
            }
        }
        let mut m = self.memo.write().unwrap();
        while !done(&m) && !m.exhausted && m.poisoned.is_none() {
            let start = m.words.len();
            let last_len = m.words.last().map_or(0, |w| w.len());
            let chunk = self.oracle.next_chunk(start, last_len)?;
            if chunk.is_empty() {
                m.exhausted = true;
                break;
            }
            for w in chunk {
                let index = m.words.len() + 1;
                let prev = m.words.last().map_or(0, |p| p.len());
                let reason = if w.len() < prev {
                    Some(ViolationReason::LengthDecrease { previous: prev, got: w.len() })
                } else if let Some(&s) = w.iter().find(|&&s| s as usize >= self.alphabet) {
                    Some(ViolationReason::SymbolOutOfAlphabet { symbol: s })
                } else {
                    m.seen.get(&w).map(|&f| ViolationReason::Duplicate { first_index: f })
                };
                if let Some(reason) = reason {
                    m.poisoned = Some(Violation { index, reason });
                    break;
                }
                if m.level_counts.len() <= w.len() {
                    m.level_counts.resize(w.len() + 1, 0);
                }
                m.level_counts[w.len()] += 1;
                m.seen.insert(w.clone(), index);
                m.words.push(w);
            }
        }
        Ok(())
    }
}

/// A generating set `G` behind a memoized oracle, together with its tail
/// control, declared constants and optional language oracle.
#[derive(Clone)]
pub struct GeneratorSystem {
    inner: Arc<Inner>,
    name: String,
    tail: TailControl,
    declared: Declared,
    language: Option<Arc<dyn LanguageOracle>>,
    structure: Structure,
    growth: Option<(u64, u32)>,
}

impl fmt::Debug for GeneratorSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSystem")
            .field("name", &self.name)
            .field("alphabet", &self.inner.alphabet)
            .field("tail", &self.tail)
            .finish()
    }
}

impl GeneratorSystem {
    pub fn new(name: impl Into<String>, oracle: Box<dyn GeneratorOracle>, tail: TailControl) -> Self {
        let alphabet = oracle.alphabet_size();
        GeneratorSystem {
            inner: Arc::new(Inner { oracle, alphabet, memo: RwLock::new(Memo::default()) }),
            name: name.into(),
            tail,
            declared: Declared::default(),
            language: None,
            structure: Structure::Generic,
            growth: None,
        }
    }

    /// A finite code given as a list (order is normalized by length, then
    /// lexicographically).
    pub fn finite(name: impl Into<String>, alphabet: usize, mut words: Vec<Word>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyCode);
        }
        if alphabet == 0 || alphabet > MAX_ALPHABET {
            return Err(Error::AlphabetMismatch(format!("alphabet size {alphabet} not in 1..=64")));
        }
        words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let n = words.len();
        Ok(GeneratorSystem::new(name, Box::new(ListOracle::new(alphabet, words)), TailControl::Finite(n)))
    }

    pub fn with_tail_control(mut self, tail: TailControl) -> Self {
        self.tail = tail;
        self
    }

    pub fn with_declared(mut self, declared: Declared) -> Self {
        self.declared = declared;
        self
    }

    pub fn with_language(mut self, lang: Arc<dyn LanguageOracle>) -> Self {
        self.language = Some(lang);
        self
    }

    pub fn with_structure(mut self, structure: Structure) -> Self {
        self.structure = structure;
        self
    }

    /// Records a known count bound `|G_k| <= coef k^degree`, used alongside
    /// the tail control wherever it gives a smaller tail.
    pub fn with_growth_bound(mut self, coef: u64, degree: u32) -> Self {
        self.growth = Some((coef, degree));
        self
    }

    pub fn growth_bound(&self) -> Option<(u64, u32)> {
        self.growth
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn alphabet_size(&self) -> usize {
        self.inner.alphabet
    }

    pub fn tail_control(&self) -> &TailControl {
        &self.tail
    }

    pub fn declared(&self) -> &Declared {
        &self.declared
    }

    pub fn language(&self) -> Option<&Arc<dyn LanguageOracle>> {
        self.language.as_ref()
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.tail, TailControl::Finite(_))
    }

    fn check_memo(&self, m: &Memo, upto: usize) -> Result<()> {
        if let Some(v) = &m.poisoned {
            if upto >= v.index {
                return Err(Error::OracleViolation(v.clone()));
            }
        }
        if let TailControl::BoundedGrowth(b) = self.tail {
            for (k, &c) in m.level_counts.iter().enumerate() {
                if c as u64 > b {
                    let index = m.words.partition_point(|w| w.len() < k) + b as usize + 1;
                    if upto >= index {
                        return Err(Error::OracleViolation(Violation {
                            index,
                            reason: ViolationReason::GrowthBound { length: k, bound: b },
                        }));
                    }
                }
            }
        }
        Ok(())
    }

    /// Generator with 0-based index `i`, or `None` past the end of a finite set.
    pub fn generator(&self, i: usize) -> Result<Option<Word>> {
        self.inner.extend_until(|m| m.words.len() > i)?;
        let m = self.inner.memo.read().unwrap();
        self.check_memo(&m, i + 1)?;
        Ok(m.words.get(i).cloned())
    }

    /// The first `count` generators (fewer if the set is smaller).
    pub fn first(&self, count: usize) -> Result<Vec<Word>> {
        self.inner.extend_until(|m| m.words.len() >= count)?;
        let m = self.inner.memo.read().unwrap();
        let upto = count.min(m.words.len());
        self.check_memo(&m, count)?;
        Ok(m.words[..upto].to_vec())
    }

    /// All generators of length at most `maxlen`.
    pub fn words_up_to_len(&self, maxlen: usize) -> Result<Vec<Word>> {
        // with a closed-form profile the level is known to be complete
        // without peeking at the next length
        let known: Option<usize> = (0..=maxlen)
            .map(|k| self.inner.oracle.count_of_length(k).and_then(|c| usize::try_from(c).ok()))
            .try_fold(0usize, |acc, c| acc.checked_add(c?));
        match known {
            Some(total) => self.inner.extend_until(|m| m.words.len() >= total)?,
            None => self.inner.extend_until(|m| m.words.last().is_some_and(|w| w.len() > maxlen))?,
        }
        let m = self.inner.memo.read().unwrap();
        let upto = m.words.partition_point(|w| w.len() <= maxlen);
        if let Some(v) = &m.poisoned {
            if v.index <= upto + 1 {
                return Err(Error::OracleViolation(v.clone()));
            }
        }
        self.check_memo(&m, upto)?;
        Ok(m.words[..upto].to_vec())
    }

    /// `|G_k|`, from the closed-form profile when the oracle provides one.
    pub fn length_count(&self, k: usize) -> Result<BigUint> {
        if let Some(c) = self.inner.oracle.count_of_length(k) {
            return Ok(c);
        }
        Ok(BigUint::from(self.words_up_to_len(k)?.iter().filter(|w| w.len() == k).count()))
    }

    /// `[|G_0|, |G_1|, .., |G_maxlen|]`.
    pub fn counts_up_to(&self, maxlen: usize) -> Result<Vec<BigUint>> {
        if self.inner.oracle.count_of_length(1).is_some() {
            return (0..=maxlen).map(|k| self.length_count(k)).collect();
        }
        let words = self.words_up_to_len(maxlen)?;
        let mut c = vec![BigUint::zero(); maxlen + 1];
        for w in &words {
            c[w.len()] += 1u32;
        }
        Ok(c)
    }

    /// Length of the longest generator, for finite systems.
    pub fn finite_max_len(&self) -> Result<Option<usize>> {
        if !self.is_finite() {
            return Ok(None);
        }
        let n = match self.tail {
            TailControl::Finite(n) => n,
            _ => unreachable!(),
        };
        let all = self.first(n)?;
        Ok(all.last().map(|w| w.len()))
    }

    /// Shortest generator length `k0` with `|G_k0| > 0`.
    pub fn min_len(&self) -> Result<Option<usize>> {
        Ok(self.generator(0)?.map(|w| w.len()))
    }
}

/// Membership and level enumeration for the language `L(X)`.
pub trait LanguageOracle: Send + Sync {
    fn alphabet_size(&self) -> usize;

    fn member(&self, w: &[u8]) -> bool;

    /// All members of length `n`, lexicographically ordered. The default
    /// extends level `n-1` symbol by symbol, relying on factor closure.
    fn enumerate_level(&self, n: usize) -> Vec<Word> {
        let d = self.alphabet_size() as u8;
        let mut level: Vec<Vec<u8>> = (0..d).filter(|&a| self.member(&[a])).map(|a| vec![a]).collect();
        for _ in 1..n {
            let mut next = Vec::with_capacity(level.len() * 2);
            for w in &level {
                let mut v = w.clone();
                v.push(0);
                for a in 0..d {
                    *v.last_mut().unwrap() = a;
                    if self.member(&v) {
                        next.push(v.clone());
                    }
                }
            }
            level = next;
        }
        if n == 0 {
            return Vec::new();
        }
        level.into_iter().map(|v| Word(v.into())).collect()
    }
}

/// Eventually periodic bi-infinite sequence `...LLL center RRR...`.
///
/// Coordinate `k` of the sequence sits at position `k + offset` of the
/// layout, where position 0 is the first symbol of `center`, positions
/// `>= |center|` run through copies of `right` and negative positions run
/// backwards through copies of `left`.
#[derive(Clone)]
pub struct EpPoint {
    left: Arc<[u8]>,
    center: Arc<[u8]>,
    right: Arc<[u8]>,
    offset: i64,
}

impl EpPoint {
    pub fn new(left: Arc<[u8]>, center: Arc<[u8]>, right: Arc<[u8]>, offset: i64) -> Result<EpPoint> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(EpPoint { left, center, right, offset })
    }

    /// The periodic point `period^infinity` with coordinate 0 at position
    /// `offset` of a copy of `period`.
    pub fn periodic(period: Arc<[u8]>, offset: i64) -> Result<EpPoint> {
        let empty: Arc<[u8]> = Arc::from(Vec::new());
        EpPoint::new(period.clone(), empty, period, offset)
    }

    pub fn left(&self) -> &[u8] {
        &self.left
    }
    pub fn center(&self) -> &[u8] {
        &self.center
    }
    pub fn right(&self) -> &[u8] {
        &self.right
    }
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn max_symbol(&self) -> u8 {
        self.left.iter().chain(self.center.iter()).chain(self.right.iter()).copied().max().unwrap_or(0)
    }

    #[inline]
    pub fn at(&self, k: i64) -> u8 {
        let p = k + self.offset;
        let c = self.center.len() as i64;
        if p < 0 {
            let l = self.left.len() as i64;
            self.left[p.rem_euclid(l) as usize]
        } else if p < c {
            self.center[p as usize]
        } else {
            let r = self.right.len() as i64;
            self.right[(p - c).rem_euclid(r) as usize]
        }
    }

    /// `min{|k| : x_k != y_k}`, or `None` when the sequences are equal.
    pub fn first_difference(&self, other: &EpPoint) -> Option<u64> {
        let r0 = (self.center.len() as i64 - self.offset).max(other.center.len() as i64 - other.offset);
        let l0 = (-self.offset).min(-other.offset);
        let lr = self.right.len().lcm(&other.right.len()) as i64;
        let ll = self.left.len().lcm(&other.left.len()) as i64;
        let reach = (r0 + lr).abs().max((l0 - ll).abs()).max(1);
        for m in 0..=reach {
            if self.at(-m) != other.at(-m) || self.at(m) != other.at(m) {
                return Some(m as u64);
            }
        }
        None
    }
}

impl PartialEq for EpPoint {
    fn eq(&self, other: &Self) -> bool {
        self.first_difference(other).is_none()
    }
}

impl fmt::Debug for EpPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "EpPoint({}^inf . {} . {}^inf @ {})",
            format_symbols(&self.left),
            format_symbols(&self.center),
            format_symbols(&self.right),
            self.offset
        )
    }
}

impl Serialize for EpPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        struct Sym<'a>(&'a [u8]);
        impl Serialize for Sym<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                ser_symbols(self.0, s)
            }
        }
        let mut st = s.serialize_struct("EpPoint", 4)?;
        st.serialize_field("left", &Sym(&self.left))?;
        st.serialize_field("center", &Sym(&self.center))?;
        st.serialize_field("right", &Sym(&self.right))?;
        st.serialize_field("offset", &self.offset)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for EpPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(deserialize_with = "de_symbols")]
            left: Vec<u8>,
            #[serde(deserialize_with = "de_symbols")]
            center: Vec<u8>,
            #[serde(deserialize_with = "de_symbols")]
            right: Vec<u8>,
            offset: i64,
        }
        let r = Raw::deserialize(d)?;
        EpPoint::new(r.left.into(), r.center.into(), r.right.into(), r.offset).map_err(serde::de::Error::custom)
    }
}

/// `d(x, y) = 2^{-min{|k| : x_k != y_k}}`, and 0 when `x = y`.
pub fn metric_d(x: &EpPoint, y: &EpPoint) -> Rat {
    match x.first_difference(y) {
        None => int(0),
        Some(m) => pow2(-(m as i64)),
    }
}

/// All start positions of `w` in `v`, overlapping occurrences included.
pub fn occurrences(w: &[u8], v: &[u8]) -> Vec<usize> {
    if w.is_empty() || w.len() > v.len() {
        return Vec::new();
    }
    let mut fail = vec![0usize; w.len()];
    let mut k = 0;
    for i in 1..w.len() {
        while k > 0 && w[i] != w[k] {
            k = fail[k - 1];
        }
        if w[i] == w[k] {
            k += 1;
        }
        fail[i] = k;
    }
    let mut out = Vec::new();
    let mut k = 0;
    for (i, &c) in v.iter().enumerate() {
        while k > 0 && c != w[k] {
            k = fail[k - 1];
        }
        if c == w[k] {
            k += 1;
        }
        if k == w.len() {
            out.push(i + 1 - w.len());
            k = fail[k - 1];
        }
    }
    out
}

/// Checks the first `count` generators for the oracle contract. Oracle
/// failures other than contract violations are passed through as errors.
pub fn validate_oracle_prefix(sys: &GeneratorSystem, count: usize) -> Result<Option<Violation>> {
    match sys.first(count) {
        Ok(_) => Ok(None),
        Err(Error::OracleViolation(v)) => Ok(Some(v)),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UdVerdict {
    UniquelyDecodable,
    /// `word` has the two distinct factorizations `first` and `second`.
    Counterexample {
        word: Vec<u8>,
        first: Vec<Word>,
        second: Vec<Word>,
    },
}

fn normalize_code(code: &[Word]) -> Result<Vec<Word>> {
    if code.is_empty() {
        return Err(Error::EmptyCode);
    }
    let mut c = code.to_vec();
    c.sort();
    c.dedup();
    if c.len() != code.len() {
        return Err(Error::Parse("code contains duplicate words".into()));
    }
    Ok(c)
}

/// Sardinas–Patterson test, run as a shortest-path search over dangling
/// suffixes so that a reported counterexample is a shortest one.
pub fn sardinas_patterson(code: &[Word]) -> Result<UdVerdict> {
    let code = normalize_code(code)?;
    struct State {
        dangling: Vec<u8>,
        ahead: Vec<usize>,
        behind: Vec<usize>,
    }
    let mut states: Vec<State> = Vec::new();
    let mut best: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut heap = BinaryHeap::new();
    fn push(
        states: &mut Vec<State>,
        best: &mut HashMap<Vec<u8>, usize>,
        heap: &mut BinaryHeap<Reverse<(usize, usize)>>,
        d: usize,
        st: State,
    ) {
        if best.get(&st.dangling).is_some_and(|&b| b <= d) {
            return;
        }
        best.insert(st.dangling.clone(), d);
        states.push(st);
        heap.push(Reverse((d, states.len() - 1)));
    }
    for (i, u) in code.iter().enumerate() {
        for (j, v) in code.iter().enumerate() {
            if i != j && v.len() > u.len() && v.starts_with(u) {
                let st = State { dangling: v[u.len()..].to_vec(), ahead: vec![j], behind: vec![i] };
                push(&mut states, &mut best, &mut heap, v.len(), st);
            }
        }
    }
    while let Some(Reverse((d, id))) = heap.pop() {
        let s = &states[id].dangling;
        if best.get(s).is_some_and(|&b| b < d) {
            continue;
        }
        let s = s.clone();
        let ahead = states[id].ahead.clone();
        let behind = states[id].behind.clone();
        for (ci, c) in code.iter().enumerate() {
            if c.as_slice() == s.as_slice() {
                let mut b = behind.clone();
                b.push(ci);
                let first: Vec<Word> = ahead.iter().map(|&k| code[k].clone()).collect();
                let second: Vec<Word> = b.iter().map(|&k| code[k].clone()).collect();
                let word = Word::concat(&first);
                debug_assert_eq!(word, Word::concat(&second));
                return Ok(UdVerdict::Counterexample { word, first, second });
            }
        }
        for (ci, c) in code.iter().enumerate() {
            if c.len() < s.len() && s.starts_with(c) {
                let mut b = behind.clone();
                b.push(ci);
                let st = State { dangling: s[c.len()..].to_vec(), ahead: ahead.clone(), behind: b };
                push(&mut states, &mut best, &mut heap, d, st);
            } else if c.len() > s.len() && c.starts_with(&s) {
                let mut b = behind.clone();
                b.push(ci);
                let st = State { dangling: c[s.len()..].to_vec(), ahead: b, behind: ahead.clone() };
                push(&mut states, &mut best, &mut heap, d + c.len() - s.len(), st);
            }
        }
    }
    Ok(UdVerdict::UniquelyDecodable)
}

/// Every factorization of `w` into codewords (`limit` caps the count).
pub fn factorizations(code: &[Word], w: &[u8], limit: usize) -> Vec<Vec<Word>> {
    fn go(code: &[Word], w: &[u8], pos: usize, cur: &mut Vec<Word>, out: &mut Vec<Vec<Word>>, limit: usize) {
        if out.len() >= limit {
            return;
        }
        if pos == w.len() {
            out.push(cur.clone());
            return;
        }
        for c in code {
            if w[pos..].starts_with(c) {
                cur.push(c.clone());
                go(code, w, pos + c.len(), cur, out, limit);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(code, w, 0, &mut Vec::new(), &mut out, limit);
    out
}

/// Exhaustive search, by increasing length, for a word of length at most
/// `max_len` with two distinct factorizations. Returns a shortest witness
/// (lexicographically first among those).
pub fn brute_force_double_parse(code: &[Word], max_len: usize) -> Option<(Vec<u8>, Vec<Word>, Vec<Word>)> {
    let mut alphabet: Vec<u8> = code.iter().flat_map(|w| w.iter().copied()).collect();
    alphabet.sort();
    alphabet.dedup();
    let max_code = code.iter().map(|w| w.len()).max().unwrap_or(0);
    // frontier entries: word, parse counts (capped at 2) of each prefix
    let mut frontier: Vec<(Vec<u8>, Vec<u8>)> = vec![(Vec::new(), vec![1])];
    for len in 1..=max_len {
        let mut next = Vec::new();
        // Words agreeing on their last `max_code` symbols and counts behave
        // alike from here on; the frontier is in lexicographic order, so the
        // first one seen is the one to keep.
        let mut seen: HashSet<(Vec<u8>, Vec<u8>)> = HashSet::new();
        for (w, counts) in &frontier {
            for &a in &alphabet {
                let mut v = w.clone();
                v.push(a);
                let mut c = 0u8;
                for cw in code {
                    if cw.len() <= len && v[len - cw.len()..] == cw[..] {
                        c = (c + counts[len - cw.len()]).min(2);
                    }
                }
                if c >= 2 {
                    let parses = factorizations(code, &v, 2);
                    return Some((v, parses[0].clone(), parses[1].clone()));
                }
                let mut cs = counts.clone();
                cs.push(c);
                let lo = len.saturating_sub(max_code);
                let viable = (lo..=len).any(|i| {
                    cs[i] > 0 && (i == len || code.iter().any(|cw| cw.len() > len - i && cw.starts_with(&v[i..])))
                });
                if viable {
                    let key = (v[len.saturating_sub(max_code)..].to_vec(), cs[lo..].to_vec());
                    if seen.insert(key) {
                        next.push((v, cs));
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    None
}
