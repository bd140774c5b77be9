//! System description files.
//!
//! A system file is a JSON object with a `family` tag:
//!
//! ```json
//! {"family": "sgap", "S": {"type": "arithmetic", "a": 0, "b": 2}}
//! {"family": "gengap", "d": 2, "sets": [...], "perms": [[0, 1], [1, 0]]}
//! {"family": "beta", "preperiod": [], "period": [1, 0]}
//! {"family": "dyck", "variant": "open", "max_len": 64}
//! {"family": "example51"}
//! {"family": "custom", "alphabet": 2, "generators": ["0", "01"],
//!  "templates": [{"head": "0", "repeat": "1", "tail": "", "min": 1}],
//!  "tail_control": {"type": "bounded_growth", "b": 2}}
//! ```
//!
//! Every file may carry `"declared": {"lambda": ..., "kappa": ..., "provenance": ...}`.

use std::path::Path;

use codedshift_core::families::{
    beta_system, dyck_system, example51_modified, example51_system, gengap_system, sgap_system, BetaSpec, DyckVariant,
    GenGapSpec, IntSet, DYCK_SYMBOLS,
};
use codedshift_core::rint::{parse_rat, Rat, RatInterval};
use codedshift_core::symbolic::{
    check_symbols, Declared, GeneratorOracle, GeneratorSystem, Provenance, TailControl, Word,
};
use codedshift_core::{Error, Result};
use num_bigint::BigUint;
use serde::Deserialize;
use serde_json::Value;

/// How words of a system are read from and written to text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Display {
    Digits,
    Brackets,
}

impl Display {
    pub fn render(self, w: &[u8]) -> String {
        match self {
            Display::Digits => w.iter().map(|s| char::from(b'0' + s)).collect(),
            Display::Brackets => codedshift_core::families::dyck_display(w),
        }
    }

    pub fn parse(self, s: &str) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(s.len());
        for c in s.chars() {
            let sym = match (self, c) {
                (_, '0'..='9') => c as u8 - b'0',
                (Display::Brackets, _) => match DYCK_SYMBOLS.iter().position(|&b| b == c) {
                    Some(i) => i as u8,
                    None => return Err(Error::Parse(format!("unknown symbol {c:?} in {s:?}"))),
                },
                _ => return Err(Error::Parse(format!("unknown symbol {c:?} in {s:?}"))),
            };
            out.push(sym);
        }
        if out.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(out)
    }
}

pub struct LoadedSystem {
    pub system: GeneratorSystem,
    pub display: Display,
}

/// Explanation attached to every tail-control failure.
pub const NO_TAIL_MESSAGE: &str = "infinite generating set without tail control: \
the Vere-Jones parameter is not computable from a generator oracle alone \
(two systems can agree on any finite prefix of generators and language levels \
while their kappa values differ by at least 1/2; run `codedshift demo-noncomputable`). \
custom systems must supply tail_control as bounded_growth, polynomial_growth or gap_epsilon";

/// Levels up to this length are checked against a claimed growth bound.
const GROWTH_CHECK_LEN: usize = 512;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SgapFile {
    #[serde(rename = "S")]
    s: IntSet,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DyckFile {
    #[serde(default = "open")]
    variant: DyckVariant,
    #[serde(default = "default_dyck_len")]
    max_len: usize,
}

fn open() -> DyckVariant {
    DyckVariant::Open
}

fn default_dyck_len() -> usize {
    64
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Ex51File {
    #[serde(default)]
    modified: Option<usize>,
    #[serde(default = "default_cap")]
    cap: usize,
}

fn default_cap() -> usize {
    24
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomFile {
    alphabet: usize,
    #[serde(default)]
    generators: Vec<String>,
    #[serde(default)]
    templates: Vec<TemplateFile>,
    #[serde(default)]
    tail_control: Option<TailFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[serde(default)]
    head: String,
    repeat: String,
    #[serde(default)]
    tail: String,
    #[serde(default)]
    min: usize,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum TailFile {
    BoundedGrowth { b: u64 },
    PolynomialGrowth { coef: u64, degree: u32 },
    GapEpsilon { epsilon: String },
    None,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeclaredFile {
    #[serde(default)]
    lambda: Option<Value>,
    #[serde(default)]
    kappa: Option<String>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn take<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(parse_err)
}

fn digits(s: &str, alphabet: usize, allow_empty: bool) -> Result<Vec<u8>> {
    if s.is_empty() && allow_empty {
        return Ok(Vec::new());
    }
    let w = Word::parse_digits(s)?;
    check_symbols(&w, alphabet)?;
    Ok(w.to_vec())
}

fn parse_interval(v: &Value) -> Result<RatInterval> {
    match v {
        Value::String(s) => Ok(RatInterval::point(parse_rat(s)?)),
        Value::Object(m) => {
            let get = |k: &str| -> Result<Rat> {
                let s = m
                    .get(k)
                    .and_then(Value::as_str)
                    .ok_or_else(|| parse_err(format!("interval needs string {k:?}")))?;
                parse_rat(s)
            };
            RatInterval::new(get("lo")?, get("hi")?)
        }
        _ => Err(parse_err("lambda must be a rational string or {\"lo\", \"hi\"}")),
    }
}

fn parse_declared(v: Value) -> Result<Declared> {
    let f: DeclaredFile = take(v)?;
    Ok(Declared {
        lambda: f.lambda.as_ref().map(parse_interval).transpose()?,
        kappa: f.kappa.as_deref().map(parse_rat).transpose()?,
        provenance: f.provenance.or(Some(Provenance::User)),
    })
}

pub fn load_file(path: &Path) -> Result<LoadedSystem> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    load_str(&text)
}

pub fn load_str(text: &str) -> Result<LoadedSystem> {
    let value: Value = serde_json::from_str(text).map_err(parse_err)?;
    let Value::Object(mut obj) = value else {
        return Err(parse_err("system file must be a JSON object"));
    };
    let family = match obj.remove("family") {
        Some(Value::String(s)) => s,
        _ => return Err(parse_err("missing string field \"family\"")),
    };
    let declared = obj.remove("declared").map(parse_declared).transpose()?;
    if family != "custom" && obj.contains_key("tail_control") {
        return Err(parse_err("tail_control is only accepted for custom systems"));
    }
    let rest = Value::Object(obj);
    let mut display = Display::Digits;
    let system = match family.as_str() {
        "sgap" => sgap_system(take::<SgapFile>(rest)?.s)?,
        "gengap" => gengap_system(take::<GenGapSpec>(rest)?)?,
        "beta" => beta_system(take::<BetaSpec>(rest)?)?,
        "dyck" => {
            let f: DyckFile = take(rest)?;
            display = Display::Brackets;
            dyck_system(f.variant, f.max_len)?
        }
        "example51" => {
            let f: Ex51File = take(rest)?;
            match f.modified {
                Some(n) => example51_modified(n, f.cap)?,
                None => example51_system(),
            }
        }
        "custom" => custom_system(take(rest)?)?,
        other => return Err(parse_err(format!("unknown family {other:?}"))),
    };
    let system = match declared {
        Some(d) => system.with_declared(d),
        None => system,
    };
    Ok(LoadedSystem { system, display })
}

fn custom_system(f: CustomFile) -> Result<GeneratorSystem> {
    if f.alphabet == 0 || f.alphabet > 10 {
        return Err(parse_err("custom alphabet must have between 1 and 10 symbols"));
    }
    let mut words = Vec::with_capacity(f.generators.len());
    for g in &f.generators {
        words.push(digits(g, f.alphabet, false)?);
    }
    let mut templates = Vec::with_capacity(f.templates.len());
    for t in &f.templates {
        let tpl = Template {
            head: digits(&t.head, f.alphabet, true)?,
            repeat: digits(&t.repeat, f.alphabet, false)?,
            tail: digits(&t.tail, f.alphabet, true)?,
            min: t.min,
        };
        if tpl.len_at(tpl.min) == 0 {
            return Err(Error::EmptyWord);
        }
        templates.push(tpl);
    }
    if templates.is_empty() {
        if f.tail_control.is_some() {
            return Err(parse_err("tail_control is meaningless for a finite custom system"));
        }
        let words = words.into_iter().map(Word::new).collect::<Result<Vec<_>>>()?;
        return GeneratorSystem::finite("custom", f.alphabet, words);
    }
    let tail = match f.tail_control {
        None | Some(TailFile::None) => return Err(Error::TailNotBoundable),
        Some(TailFile::BoundedGrowth { b }) => TailControl::BoundedGrowth(b),
        Some(TailFile::PolynomialGrowth { coef, degree }) => TailControl::PolynomialGrowth { coef, degree },
        Some(TailFile::GapEpsilon { epsilon }) => TailControl::GapEpsilon(parse_rat(&epsilon)?),
    };
    words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let oracle = TemplateOracle { alphabet: f.alphabet, words, templates };
    check_growth_claim(&oracle, &tail)?;
    Ok(GeneratorSystem::new("custom", Box::new(oracle), tail))
}

fn check_growth_claim(oracle: &TemplateOracle, tail: &TailControl) -> Result<()> {
    for k in 1..=GROWTH_CHECK_LEN {
        let c = oracle.level(k).len() as u64;
        let bound = match tail {
            TailControl::BoundedGrowth(b) => *b,
            TailControl::PolynomialGrowth { coef, degree } => coef.saturating_mul((k as u64).saturating_pow(*degree)),
            _ => u64::MAX,
        };
        if c > bound {
            return Err(parse_err(format!("tail_control claims at most {bound} generators of length {k}, found {c}")));
        }
    }
    Ok(())
}

/// `head repeat^j tail` for every `j >= min`.
struct Template {
    head: Vec<u8>,
    repeat: Vec<u8>,
    tail: Vec<u8>,
    min: usize,
}

impl Template {
    fn len_at(&self, j: usize) -> usize {
        self.head.len() + j * self.repeat.len() + self.tail.len()
    }

    fn at_len(&self, k: usize) -> Option<Vec<u8>> {
        let fixed = self.head.len() + self.tail.len();
        if k < self.len_at(self.min) || !(k - fixed).is_multiple_of(self.repeat.len()) {
            return None;
        }
        let j = (k - fixed) / self.repeat.len();
        let mut w = self.head.clone();
        for _ in 0..j {
            w.extend_from_slice(&self.repeat);
        }
        w.extend_from_slice(&self.tail);
        Some(w)
    }
}

/// Explicit words plus template instances, level by level. Duplicates are
/// kept so that the oracle checks report them.
struct TemplateOracle {
    alphabet: usize,
    words: Vec<Vec<u8>>,
    templates: Vec<Template>,
}

impl TemplateOracle {
    fn level(&self, k: usize) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = self.words.iter().filter(|w| w.len() == k).cloned().collect();
        out.extend(self.templates.iter().filter_map(|t| t.at_len(k)));
        out.sort();
        out
    }
}

impl GeneratorOracle for TemplateOracle {
    fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    fn next_chunk(&self, start: usize, _last_len: usize) -> Result<Vec<Word>> {
        let mut skipped = 0usize;
        let mut out = Vec::new();
        let mut k = 1;
        while out.len() < 64 {
            let level = self.level(k);
            if skipped + level.len() <= start {
                skipped += level.len();
            } else {
                let from = start.saturating_sub(skipped);
                skipped += level.len();
                for w in level.into_iter().skip(from) {
                    out.push(Word::new(w)?);
                }
            }
            k += 1;
        }
        Ok(out)
    }

    fn count_of_length(&self, k: usize) -> Option<BigUint> {
        Some(BigUint::from(self.level(k).len()))
    }
}
