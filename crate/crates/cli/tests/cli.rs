use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codedshift_core::families::DyckLanguage;
use codedshift_core::gmeasure::{Atom, IdealMeasure};
use codedshift_core::rint::{int, log_bounds, parse_rat, pow2, ratio, Rat};
use codedshift_core::symbolic::{metric_d, EpPoint, LanguageOracle};
use num_traits::Zero;
use serde_json::Value;

fn systems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems")
}

fn sys(name: &str) -> String {
    systems().join(format!("{name}.json")).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codedshift")).args(args).output().expect("binary runs")
}

fn run_json(args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn r(v: &Value) -> Rat {
    parse_rat(v.as_str().expect("rational string")).unwrap()
}

fn bounds(v: &Value) -> (Rat, Rat) {
    (r(&v["lo"]), r(&v["hi"]))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn entropy_of_the_full_shift() {
    let v = run_json(&["entropy", "--system", &sys("full_shift"), "--precision", "20", "--float"]);
    let (lo, hi) = bounds(&v["lambda"]);
    assert!(lo <= int(2) && int(2) <= hi);
    assert!(&hi - &lo < pow2(-20));
    let (hlo, hhi) = bounds(&v["h"]);
    let ln2 = log_bounds(&int(2), 30).unwrap();
    assert!(&hlo <= ln2.lo() && ln2.hi() <= &hhi);
    assert!(v["approximation_not_certified"]["h"].as_str().unwrap().starts_with("0.6931"));
}

#[test]
fn missing_tail_control_is_explained() {
    let out = run(&["entropy", "--system", &sys("custom_no_tail"), "--precision", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not computable"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_system_files() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("broken.json", "{\"family\": "),
        ("unknown.json", "{\"family\": \"sofic\"}"),
        ("empty_s.json", "{\"family\": \"sgap\", \"S\": {\"type\": \"explicit\", \"values\": []}}"),
        ("extra.json", "{\"family\": \"dyck\", \"colour\": 1}"),
        ("even_n0.json", "{\"family\": \"example51\", \"modified\": 4}"),
        ("false_growth.json", "{\"family\": \"custom\", \"alphabet\": 2, \"generators\": [\"11\"], \"templates\": [{\"repeat\": \"0\", \"tail\": \"1\"}], \"tail_control\": {\"type\": \"bounded_growth\", \"b\": 1}}"),
    ];
    for (name, text) in cases {
        let p = write(dir.path(), name, text);
        assert_eq!(code(&["entropy", "--system", &p, "--precision", "8"]), 3, "{name}");
    }
    let missing = dir.path().join("nope.json").display().to_string();
    assert_eq!(code(&["kappa", "--system", &missing, "--precision", "8"]), 3);
    let foreign =
        write(dir.path(), "foreign.json", "{\"family\": \"custom\", \"alphabet\": 2, \"generators\": [\"02\"]}");
    assert_eq!(code(&["entropy", "--system", &foreign, "--precision", "8"]), 4);
}

#[test]
fn kappa_values() {
    for (name, n, expect) in [("example51", "20", 3), ("full_shift", "20", 2), ("dyck", "12", 2)] {
        let v = run_json(&["kappa", "--system", &sys(name), "--precision", n]);
        let (lo, hi) = bounds(&v["kappa"]);
        assert!(lo <= int(expect) && int(expect) <= hi, "{name}");
        assert!(&hi - &lo < pow2(-n.parse::<i64>().unwrap()));
        for k in ["tail_bound", "lipschitz_slack"] {
            assert!(r(&v[k]) >= Rat::zero());
        }
    }
}

#[test]
fn cylinder_measures() {
    let full = sys("full_shift");
    for (w, p) in [("01", ratio(1, 4)), ("1", ratio(1, 2)), ("110", ratio(1, 8))] {
        let v = run_json(&["measure", "--system", &full, "--word", w, "--precision", "20"]);
        let (lo, hi) = bounds(&v["measure"]);
        assert!(lo <= p && p <= hi && &hi - &lo < pow2(-20), "{w}");
    }
    assert_eq!(code(&["measure", "--system", &full, "--word", "012", "--precision", "20"]), 4);
    assert_eq!(code(&["measure", "--system", &full, "--word", "0x", "--precision", "20"]), 3);

    let v = run_json(&["measure", "--system", &full, "--word", "10", "--precision", "12", "--terms"]);
    let listed = v["terms"]["listed"].as_array().unwrap();
    assert_eq!(v["terms"]["total"].as_u64().unwrap() as usize, listed.len());
    assert!(!listed.is_empty());

    let dyck = sys("dyck");
    let v = run_json(&["measure", "--system", &dyck, "--word", "(]", "--precision", "8"]);
    assert_eq!(bounds(&v["measure"]), (int(0), int(0)));
    let v = run_json(&["measure", "--system", &dyck, "--word", "[", "--precision", "8"]);
    assert_eq!(v["word"], "[");
}

#[test]
fn approximations_and_distances() {
    let dir = tempfile::tempdir().unwrap();
    let out3 = dir.path().join("full3.json").display().to_string();
    let out4 = dir.path().join("full4.json").display().to_string();
    let v = run_json(&["approx", "--system", &sys("full_shift"), "--precision", "3", "--out", &out3]);
    assert!(v["atoms"].as_u64().unwrap() <= 128);
    assert_eq!(v["mass_is_one"], true);
    let m = IdealMeasure::from_json(&std::fs::read_to_string(&out3).unwrap()).unwrap();
    assert_eq!(m.total_mass(), int(1));
    run_json(&["approx", "--system", &sys("full_shift"), "--precision", "4", "--out", &out4]);

    let same = run_json(&["w1", "--a", &out3, "--b", &out3]);
    assert_eq!(r(&same["w1"]), int(0));
    let v = run_json(&["w1", "--a", &out3, "--b", &out4, "--check", "3", "4"]);
    assert!(r(&v["w1"]) <= ratio(3, 16));
    assert_eq!(v["check"]["holds"], true);

    let x = EpPoint::periodic(vec![0u8, 1].into(), 0).unwrap();
    let y = EpPoint::new(vec![0u8].into(), vec![1u8, 1, 0].into(), vec![0u8].into(), 0).unwrap();
    let single = |p: &EpPoint| {
        serde_json::to_string(&IdealMeasure::new(vec![Atom { point: p.clone(), weight: int(1) }], Some(2)).unwrap())
            .unwrap()
    };
    let a = write(dir.path(), "a.json", &single(&x));
    let b = write(dir.path(), "b.json", &single(&y));
    let v = run_json(&["w1", "--a", &a, "--b", &b]);
    assert_eq!(r(&v["w1"]), metric_d(&x, &y));

    let three = IdealMeasure::new(vec![Atom { point: x.clone(), weight: int(1) }], Some(3)).unwrap();
    let c = write(dir.path(), "c.json", &serde_json::to_string(&three).unwrap());
    assert_eq!(code(&["w1", "--a", &a, "--b", &c]), 4);
    let bad = write(dir.path(), "bad.json", "{\"atoms\": []}");
    assert_eq!(code(&["w1", "--a", &a, "--b", &bad]), 3);

    let none = dir.path().join("none.json").display().to_string();
    assert_eq!(code(&["approx", "--system", &sys("ambiguous_code"), "--precision", "3", "--out", &none]), 5);
}

#[test]
fn dyck_atoms_sit_on_language_words() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dyck2.json").display().to_string();
    run_json(&["approx", "--system", &sys("dyck"), "--precision", "2", "--out", &out]);
    let m = IdealMeasure::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for a in &m.atoms {
        let central: Vec<u8> = (-2..=2).map(|k| a.point.at(k)).collect();
        assert!(DyckLanguage.member(&central), "{central:?}");
    }
}

#[test]
fn validation_reports() {
    let v = run_json(&["validate", "--system", &sys("ambiguous_code"), "--max-len", "4"]);
    assert_eq!(v["label"], "finite-truncation evidence");
    assert_eq!(v["unique_decodability"]["witness"], "00");
    for (name, k) in [("full_shift", "12"), ("dyck", "4"), ("golden_beta", "8"), ("custom_bounded", "8")] {
        let v = run_json(&["validate", "--system", &sys(name), "--max-len", k]);
        assert_eq!(v["unique_decodability"]["verdict"], "uniquely decodable", "{name}");
        assert_eq!(v["oracle"]["ok"], true);
    }
    assert_ne!(code(&["validate", "--system", &sys("full_shift"), "--max-len", "0"]), 0);
}

#[test]
fn noncomputability_demo() {
    let v = run_json(&["demo-noncomputable", "--precision", "10"]);
    assert_eq!(v["verdict"], "separated by >= 1/2");
    let (lo, hi) = bounds(&v["kappa_base"]);
    assert!(lo <= int(3) && int(3) <= hi);
    assert!(r(&v["separation_lower"]) >= ratio(1, 2));

    let out = run(&["--json", "demo-noncomputable", "--precision", "10", "--N0", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "gate not satisfied");
    assert!(r(&v["gate_lower"]) <= ratio(7, 2));
}

#[test]
fn outputs_are_deterministic() {
    let args = ["--json", "kappa", "--system", &sys("gengap_d2"), "--precision", "16"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json").display().to_string();
    let b = dir.path().join("b.json").display().to_string();
    run_json(&["approx", "--system", &sys("example51"), "--precision", "4", "--out", &a]);
    run_json(&["approx", "--system", &sys("example51"), "--precision", "4", "--out", &b]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn text_output_is_line_based() {
    let out = run(&["entropy", "--system", &sys("example51"), "--precision", "12"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("h: [")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wall time"));
}
