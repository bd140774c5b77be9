//! Command-line frontend for `codedshift_core`.
//!
//! Every command builds a JSON report. Rationals are printed as exact strings
//! (`"p/q"`), and every enclosure is re-checked against the requested width
//! before it is emitted.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure while writing output |
//! | 2 | certification failed: no tail control, ratio not certifiable, budget or precision exhausted, gate not satisfied |
//! | 3 | invalid input: parse error, invalid system or measure |
//! | 4 | symbol outside the alphabet, or measures over different alphabets |
//! | 5 | the system has no language oracle |

pub mod system;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use codedshift_core::families::kappa_separation_demo;
use codedshift_core::gmeasure::{
    cylinder_measure, enumerate_occurrences, g_cylinder_measure, ideal_measure, w1_exact, GBernoulliSpec, IdealMeasure,
};
use codedshift_core::rint::{ceil_dyadic, floor_dyadic, int, pow2, rat_to_string, Rat, RatInterval};
use codedshift_core::spectral::entropy;
use codedshift_core::symbolic::{check_symbols, sardinas_patterson, validate_oracle_prefix, UdVerdict};
use codedshift_core::verejones::kappa_certified;
use codedshift_core::Error;
use num_bigint::BigInt;
use num_traits::{One, Signed};
use serde_json::{json, Value};

use crate::system::{load_file, LoadedSystem, NO_TAIL_MESSAGE};

pub const EXIT_IO: i32 = 1;
pub const EXIT_CERTIFICATION: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_ALPHABET: i32 = 4;
pub const EXIT_NO_LANGUAGE: i32 = 5;

/// Maximum number of placements listed by `measure --terms`.
const MAX_TERMS: usize = 256;

#[derive(Parser, Debug)]
#[command(name = "codedshift", version, about = "Certified computations for coded shift spaces")]
pub struct Cli {
    /// Emit JSON instead of `key: value` lines.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enclose lambda* and the entropy h = log lambda*.
    Entropy {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        precision: u32,
        /// Also print decimal approximations (not certified).
        #[arg(long)]
        float: bool,
    },
    /// Enclose the Vere-Jones parameter kappa.
    Kappa {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        precision: u32,
    },
    /// Enclose the measure of maximal entropy of a cylinder [W].
    Measure {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(long)]
        precision: u32,
        /// List the generator placements of W among generators no longer than W.
        #[arg(long)]
        terms: bool,
    },
    /// Write a finitely supported measure within W1 distance 2^-N of the measure of maximal entropy.
    Approx {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        precision: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact Wasserstein-1 distance between two measure files.
    W1 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also check W1 <= 2^-N + 2^-M.
        #[arg(long, num_args = 2, value_names = ["N", "M"])]
        check: Option<Vec<u32>>,
    },
    /// Oracle checks and unique decodability of the generators of length <= K.
    Validate {
        #[arg(long)]
        system: PathBuf,
        #[arg(long = "max-len", value_parser = clap::value_parser!(u32).range(1..))]
        max_len: u32,
    },
    /// Two systems that agree on long prefixes but whose kappa differ by at least 1/2.
    DemoNoncomputable {
        #[arg(long)]
        precision: u32,
        /// Odd N0 >= 3; searched for when omitted.
        #[arg(long = "N0")]
        n0: Option<usize>,
    },
}

/// A failed command: exit code, message, and an optional partial report.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub report: Option<Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = exit_code(&e);
        let message = match e {
            Error::TailNotBoundable => NO_TAIL_MESSAGE.to_string(),
            other => other.to_string(),
        };
        Failure { code, message, report: None }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TailNotBoundable
        | Error::RatioNotCertifiable { .. }
        | Error::RatioOutOfRange(_)
        | Error::BudgetExceeded(_)
        | Error::PrecisionExhausted(_)
        | Error::InsufficientPrecision(_)
        | Error::NoRootBracket(_)
        | Error::LambdaTooSmall
        | Error::DivisionByZeroInterval
        | Error::NonPositiveArgument(_)
        | Error::GateNotSatisfied { .. } => EXIT_CERTIFICATION,
        Error::SymbolOutOfAlphabet { .. } | Error::AlphabetMismatch(_) => EXIT_ALPHABET,
        Error::InvalidInterval
        | Error::EmptyWord
        | Error::EmptyCode
        | Error::OracleViolation(_)
        | Error::DeclaredMismatch(_)
        | Error::LanguageLevelEmpty(_)
        | Error::EmptyS
        | Error::InvalidPermutation(_)
        | Error::NotQuasiGreedy(_)
        | Error::ShapeMismatch(_)
        | Error::Parse(_)
        | Error::InvalidMeasure(_) => EXIT_INPUT,
    }
}

type CmdResult = std::result::Result<Value, Failure>;

/// Runs a command and returns its exit code, printing the report to stdout
/// and diagnostics plus wall time to stderr.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let result = execute(&cli.command);
    let code = match result {
        Ok(report) => {
            println!("{}", render(&report, cli.json));
            0
        }
        Err(f) => {
            if let Some(report) = &f.report {
                println!("{}", render(report, cli.json));
            }
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    eprintln!("wall time: {:.3}s", start.elapsed().as_secs_f64());
    code
}

pub fn execute(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Entropy { system, precision, float } => cmd_entropy(system, *precision, *float),
        Command::Kappa { system, precision } => cmd_kappa(system, *precision),
        Command::Measure { system, word, precision, terms } => cmd_measure(system, word, *precision, *terms),
        Command::Approx { system, precision, out } => cmd_approx(system, *precision, out),
        Command::W1 { a, b, check } => cmd_w1(a, b, check.as_deref()),
        Command::Validate { system, max_len } => cmd_validate(system, *max_len as usize),
        Command::DemoNoncomputable { precision, n0 } => cmd_demo(*precision, *n0),
    }
}

pub fn render(report: &Value, json: bool) -> String {
    if json {
        return serde_json::to_string_pretty(report).expect("JSON values always serialize");
    }
    let mut lines = Vec::new();
    flatten("", report, &mut lines);
    lines.join("\n")
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) if m.len() == 2 && m.contains_key("lo") && m.contains_key("hi") => {
            out.push(format!("{prefix}: [{}, {}]", scalar(&m["lo"]), scalar(&m["hi"])));
        }
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) if xs.iter().any(|x| x.is_object() || x.is_array()) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Array(xs) => {
            let items: Vec<String> = xs.iter().map(scalar).collect();
            out.push(format!("{prefix}: [{}]", items.join(", ")));
        }
        _ => out.push(format!("{prefix}: {}", scalar(v))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn load(path: &Path) -> std::result::Result<LoadedSystem, Failure> {
    Ok(load_file(path)?)
}

fn iv(x: &RatInterval) -> Value {
    json!({ "lo": rat_to_string(x.lo()), "hi": rat_to_string(x.hi()) })
}

fn rat(x: &Rat) -> Value {
    Value::String(rat_to_string(x))
}

/// Refuses to emit an enclosure whose width is not below `2^-n`.
fn audit(name: &str, x: &RatInterval, n: u32) -> std::result::Result<(), Failure> {
    if x.width_below_pow2(n) {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CERTIFICATION,
            message: format!("self-audit failed: {name} enclosure has width {} >= 2^-{n}", rat_to_string(&x.width())),
            report: None,
        })
    }
}

/// Truncated decimal expansion; used only for output marked non-certified.
pub fn decimal(x: &Rat, digits: u32) -> String {
    let scale = num_traits::pow(BigInt::from(10), digits as usize);
    let scaled = (x.abs() * Rat::from_integer(scale)).floor().to_integer();
    let s = format!("{:0>width$}", scaled.to_string(), width = digits as usize + 1);
    let (int_part, frac) = s.split_at(s.len() - digits as usize);
    let sign = if x.is_negative() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac}")
    }
}

fn declared_check(value: Option<&Rat>, provenance: Option<Value>, enclosure: &RatInterval) -> Value {
    match value {
        Some(v) => json!({
            "value": rat(v),
            "provenance": provenance.unwrap_or(Value::Null),
            "contained": enclosure.contains(v),
        }),
        None => Value::Null,
    }
}

fn provenance(sys: &LoadedSystem) -> Option<Value> {
    sys.system.declared().provenance.map(|p| serde_json::to_value(p).expect("enum serializes"))
}

pub fn cmd_entropy(path: &Path, n: u32, float: bool) -> CmdResult {
    let loaded = load(path)?;
    let rep = entropy(&loaded.system, n)?;
    audit("lambda", &rep.lambda, n)?;
    audit("h", &rep.h, n)?;
    let mut out = json!({
        "command": "entropy",
        "system": loaded.system.name(),
        "precision": n,
        "lambda": iv(&rep.lambda),
        "h": iv(&rep.h),
        "terms_used": rep.terms_used,
    });
    if let Some(dl) = &loaded.system.declared().lambda {
        out["declared_lambda"] = json!({
            "value": iv(dl),
            "provenance": provenance(&loaded).unwrap_or(Value::Null),
            "overlaps": dl.overlaps(&rep.lambda),
        });
    }
    if float {
        out["approximation_not_certified"] = json!({
            "lambda": decimal(&rep.lambda.mid(), 15),
            "h": decimal(&rep.h.mid(), 15),
        });
    }
    Ok(out)
}

pub fn cmd_kappa(path: &Path, n: u32) -> CmdResult {
    let loaded = load(path)?;
    let cert = kappa_certified(&loaded.system, n)?;
    audit("kappa", &cert.value, n)?;
    let declared = loaded.system.declared();
    Ok(json!({
        "command": "kappa",
        "system": loaded.system.name(),
        "precision": n,
        "kappa": iv(&cert.value),
        "lambda_used": iv(&cert.lambda_used),
        "terms_used": cert.terms_used,
        "tail_bound": rat(&ceil_dyadic(&cert.tail_bound, n + 16)),
        "lipschitz_slack": rat(&ceil_dyadic(&cert.lipschitz_slack, n + 16)),
        "declared_kappa": declared_check(declared.kappa.as_ref(), provenance(&loaded), &cert.value),
    }))
}

pub fn cmd_measure(path: &Path, word: &str, n: u32, terms: bool) -> CmdResult {
    let loaded = load(path)?;
    let sys = &loaded.system;
    let w = loaded.display.parse(word)?;
    check_symbols(&w, sys.alphabet_size())?;
    let spec = GBernoulliSpec::mme(sys.clone(), n + 4)?;
    let m = cylinder_measure(&spec, &w, n)?;
    audit("measure", &m, n)?;
    let mut out = json!({
        "command": "measure",
        "system": sys.name(),
        "precision": n,
        "word": loaded.display.render(&w),
        "measure": iv(&m),
    });
    if terms {
        let occ = enumerate_occurrences(&w, sys, w.len())?;
        let gens = sys.words_up_to_len(w.len())?;
        let mut listed = Vec::new();
        for t in occ.iter().take(MAX_TERMS) {
            let parts: Vec<String> = t.tuple.iter().map(|&i| loaded.display.render(&gens[i])).collect();
            let value = g_cylinder_measure(&spec, &t.tuple)?;
            let value = value.round_outward(n + 8);
            listed.push(json!({ "generators": parts, "offset": t.offset, "value": iv(&value) }));
        }
        out["terms"] = json!({
            "cutoff_length": w.len(),
            "total": occ.len(),
            "listed": listed,
        });
    }
    Ok(out)
}

pub fn cmd_approx(path: &Path, n: u32, out_path: &Path) -> CmdResult {
    let loaded = load(path)?;
    let sys = &loaded.system;
    let Some(lang) = sys.language().cloned() else {
        return Err(Failure {
            code: EXIT_NO_LANGUAGE,
            message: format!("system {:?} has no language oracle; ideal measures need one", sys.name()),
            report: None,
        });
    };
    let spec = GBernoulliSpec::mme(sys.clone(), n + 8)?;
    let measure = ideal_measure(&spec, lang.as_ref(), n)?;
    let text =
        serde_json::to_string(&measure).map_err(|e| Failure { code: EXIT_IO, message: e.to_string(), report: None })?;
    std::fs::write(out_path, &text).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", out_path.display()),
        report: None,
    })?;
    let reread = std::fs::read_to_string(out_path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", out_path.display()),
        report: None,
    })?;
    let back = IdealMeasure::from_json(&reread)?;
    let mass = back.total_mass();
    Ok(json!({
        "command": "approx",
        "system": sys.name(),
        "precision": n,
        "out": out_path.display().to_string(),
        "atoms": back.atoms.len(),
        "total_mass": rat(&mass),
        "mass_is_one": mass.is_one(),
        "w1_bound": rat(&pow2(-(n as i64))),
    }))
}

fn read_measure(path: &Path) -> std::result::Result<IdealMeasure, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(IdealMeasure::from_json(&text)?)
}

pub fn cmd_w1(a: &Path, b: &Path, check: Option<&[u32]>) -> CmdResult {
    let ma = read_measure(a)?;
    let mb = read_measure(b)?;
    let d = w1_exact(&ma, &mb)?;
    let mut out = json!({
        "command": "w1",
        "atoms_a": ma.atoms.len(),
        "atoms_b": mb.atoms.len(),
        "w1": rat(&d),
    });
    if let Some(&[n, m]) = check {
        let bound = pow2(-(n as i64)) + pow2(-(m as i64));
        out["check"] = json!({ "bound": rat(&bound), "holds": d <= bound });
    }
    Ok(out)
}

pub fn cmd_validate(path: &Path, max_len: usize) -> CmdResult {
    let loaded = load(path)?;
    let sys = &loaded.system;
    let show = |w: &[u8]| loaded.display.render(w);
    let mut out = json!({
        "command": "validate",
        "system": sys.name(),
        "label": "finite-truncation evidence",
        "max_len": max_len,
    });
    let words = match sys.words_up_to_len(max_len) {
        Ok(words) => words,
        Err(e) => {
            out["oracle"] = json!({ "ok": false, "finding": e.to_string() });
            return Ok(out);
        }
    };
    let oracle = match validate_oracle_prefix(sys, words.len().max(1)) {
        Ok(None) => json!({ "ok": true }),
        Ok(Some(v)) => json!({ "ok": false, "finding": v.to_string() }),
        Err(e) => json!({ "ok": false, "finding": e.to_string() }),
    };
    out["oracle"] = oracle;
    out["generators_checked"] = json!(words.len());
    out["unique_decodability"] = match sardinas_patterson(&words) {
        Ok(UdVerdict::UniquelyDecodable) => json!({ "verdict": "uniquely decodable" }),
        Ok(UdVerdict::Counterexample { word, first, second }) => json!({
            "verdict": "not uniquely decodable",
            "witness": show(&word),
            "first": first.iter().map(|w| show(w)).collect::<Vec<_>>(),
            "second": second.iter().map(|w| show(w)).collect::<Vec<_>>(),
        }),
        Err(e) => json!({ "verdict": "not run", "reason": e.to_string() }),
    };
    Ok(out)
}

pub fn cmd_demo(n: u32, n0: Option<usize>) -> CmdResult {
    match kappa_separation_demo(n0, n) {
        Ok(rep) => {
            audit("kappa", &rep.kappa_base.value, n)?;
            let verdict = if rep.separated { "separated by >= 1/2" } else { "not separated" };
            Ok(json!({
                "command": "demo-noncomputable",
                "precision": n,
                "n0": rep.n0,
                "kappa_base": iv(&rep.kappa_base.value),
                "kappa_base_terms": rep.kappa_base.terms_used,
                "lambda_modified": iv(&rep.lambda_modified),
                "kappa_modified_lower": rat(&floor_dyadic(&rep.kappa_modified_lower, n + 16)),
                "gate_lower": rat(&rep.gate_lower),
                "gate_threshold": rat(&(int(7) / int(2))),
                "separation_lower": rat(&rep.separation_lower),
                "agreeing_generators": rep.agreeing_generators,
                "generators_agree": rep.generators_agree,
                "agreeing_levels": rep.agreeing_levels,
                "levels_agree": rep.levels_agree,
                "verdict": verdict,
            }))
        }
        Err(Error::GateNotSatisfied { n0, gate }) => Err(Failure {
            code: EXIT_CERTIFICATION,
            message: format!("gate not satisfied for N0 = {n0}"),
            report: Some(json!({
                "command": "demo-noncomputable",
                "precision": n,
                "n0": n0,
                "gate_lower": rat(&gate),
                "gate_threshold": rat(&(int(7) / int(2))),
                "verdict": "gate not satisfied",
            })),
        }),
        Err(e) => Err(e.into()),
    }
}
