use std::collections::BTreeSet;

use codedshift_core::families::*;
use codedshift_core::symbolic::*;
use codedshift_core::Error;
use num_bigint::BigUint;
use proptest::prelude::*;

fn words_of(ws: &[Word]) -> BTreeSet<Vec<u8>> {
    ws.iter().map(|w| w.to_vec()).collect()
}

fn all_words(d: u8, len: usize) -> Vec<Vec<u8>> {
    let mut level = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(level.len() * d as usize);
        for w in &level {
            for a in 0..d {
                let mut v: Vec<u8> = w.clone();
                v.push(a);
                next.push(v);
            }
        }
        level = next;
    }
    level
}

/// Length-`len` factors of concatenations of `gens` of total length
/// `<= len + 2 * max|g|`.
fn naive_factors(gens: &[Vec<u8>], len: usize) -> BTreeSet<Vec<u8>> {
    let m = gens.iter().map(|g| g.len()).max().unwrap();
    let limit = len + 2 * m;
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<u8>> = vec![Vec::new()];
    while let Some(c) = stack.pop() {
        for i in 0..c.len().saturating_sub(len - 1) {
            out.insert(c[i..i + len].to_vec());
        }
        for g in gens {
            if c.len() + g.len() <= limit {
                let mut v = c.clone();
                v.extend_from_slice(g);
                stack.push(v);
            }
        }
    }
    out
}

fn family_systems() -> Vec<GeneratorSystem> {
    vec![
        sgap_system(IntSet::all()).unwrap(),
        sgap_system(IntSet::Arithmetic { a: 1, b: 3 }).unwrap(),
        gengap_system(GenGapSpec {
            d: 2,
            sets: vec![IntSet::all(), IntSet::all()],
            perms: vec![vec![0, 1], vec![1, 0]],
        })
        .unwrap(),
        beta_system(BetaSpec { preperiod: vec![], period: vec![1, 0] }).unwrap(),
        beta_system(BetaSpec { preperiod: vec![2, 1], period: vec![0, 1] }).unwrap(),
        dyck_system(DyckVariant::Open, 10).unwrap(),
        example51_system(),
        example51_modified(3, 40).unwrap(),
    ]
}

#[test]
fn every_family_passes_oracle_validation() {
    for sys in family_systems() {
        assert_eq!(validate_oracle_prefix(&sys, 500).unwrap(), None, "{}", sys.name());
        let ws = sys.first(500).unwrap();
        assert_eq!(ws.len(), 500, "{}", sys.name());
        assert!(ws.windows(2).all(|p| p[0].len() <= p[1].len()));
    }
}

#[test]
fn sgap_language_matches_concatenation_factors() {
    for values in [vec![0, 2], vec![1], vec![1, 2], vec![0, 3], vec![0, 1, 2, 3]] {
        let set = IntSet::Explicit { values: values.clone() };
        let sys = sgap_system(set).unwrap();
        let lang = sys.language().unwrap().clone();
        let gens: Vec<Vec<u8>> = sys.first(100).unwrap().iter().map(|w| w.to_vec()).collect();
        for len in 1..=6 {
            let expect = naive_factors(&gens, len);
            let got: BTreeSet<Vec<u8>> = all_words(2, len).into_iter().filter(|w| lang.member(w)).collect();
            assert_eq!(got, expect, "S = {values:?}, length {len}");
        }
    }
}

fn intset() -> impl Strategy<Value = IntSet> {
    prop_oneof![
        prop::collection::btree_set(0u64..7, 1..4).prop_map(|s| IntSet::Explicit { values: s.into_iter().collect() }),
        (0u64..4, 1u64..4).prop_map(|(a, b)| IntSet::Arithmetic { a, b }),
        prop::collection::btree_set(0u64..6, 0..3).prop_map(|s| IntSet::Cofinite { excluded: s.into_iter().collect() }),
        (prop::collection::vec(0u8..2, 0..3), prop::collection::vec(0u8..2, 1..4))
            .prop_filter("nonempty", |(p, q)| q.contains(&1) || p.contains(&1))
            .prop_map(|(preperiod, period)| IntSet::Periodic { preperiod, period }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sgap_language_is_factor_closed_and_extendable(set in intset()) {
        let sys = sgap_system(set).unwrap();
        let lang = sys.language().unwrap().clone();
        for len in 1..=8 {
            for w in all_words(2, len) {
                if !lang.member(&w) {
                    continue;
                }
                prop_assert!(len == 1 || lang.member(&w[1..]) && lang.member(&w[..len - 1]));
                let right = (0..2u8).any(|a| { let mut v = w.clone(); v.push(a); lang.member(&v) });
                let left = (0..2u8).any(|a| { let mut v = vec![a]; v.extend_from_slice(&w); lang.member(&v) });
                prop_assert!(right && left, "{:?}", w);
            }
        }
    }

    #[test]
    fn beta_recover_round_trips(pre in prop::collection::vec(0u8..3, 0..3), per in prop::collection::vec(0u8..3, 1..4)) {
        let spec = BetaSpec { preperiod: pre, period: per };
        prop_assume!(spec.validate().is_ok());
        let depth = 6;
        let sys = beta_system(spec.clone()).unwrap();
        let rec = beta_recover(&sys, depth, 20).unwrap();
        prop_assert_eq!(rec.prefix, spec.prefix(depth));
        let e1 = spec.digit(0) as i64;
        prop_assert!(rec.beta.lo() >= &codedshift_core::rint::int(e1));
        prop_assert!(rec.beta.hi() <= &codedshift_core::rint::int(e1 + 1));
    }
}

#[test]
fn golden_beta_language_is_extendable() {
    let sys = beta_system(BetaSpec { preperiod: vec![], period: vec![1, 0] }).unwrap();
    let lang = sys.language().unwrap().clone();
    for g in sys.words_up_to_len(13).unwrap() {
        assert!(lang.member(&g), "{g}");
    }
    for len in 1..=8 {
        for w in all_words(2, len) {
            if lang.member(&w) {
                assert!((0..2u8).any(|a| {
                    let mut v = w.clone();
                    v.push(a);
                    lang.member(&v)
                }));
                assert!((0..2u8).any(|a| {
                    let mut v = vec![a];
                    v.extend_from_slice(&w);
                    lang.member(&v)
                }));
            }
        }
    }
    // golden mean shift: no "11"
    assert!(!lang.member(&[0, 1, 1]));
    assert!(lang.member(&[1, 0, 1, 0, 0, 1]));
    let rec = beta_recover(&sys, 12, 20).unwrap();
    assert_eq!(rec.prefix, vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0]);
}

#[test]
fn beta_with_two_as_first_digit() {
    let sys = beta_system(BetaSpec { preperiod: vec![2, 1], period: vec![0, 1] }).unwrap();
    let ws: Vec<String> = sys.words_up_to_len(3).unwrap().iter().map(|w| w.to_string()).collect();
    // digits 2 1 0 1 0 ..: nothing of length 3, then 2100
    assert_eq!(ws, ["0", "1", "20"]);
    assert_eq!(sys.length_count(4).unwrap(), BigUint::from(1u32));
    let fs = sgap_system(IntSet::all()).unwrap();
    assert!(matches!(beta_recover(&fs, 4, 10), Err(Error::ShapeMismatch(_))));
    let coarse = beta_recover(&sys, 1, 10).unwrap();
    assert_eq!(coarse.prefix, vec![2]);
    assert_eq!(coarse.beta.width(), codedshift_core::rint::int(1));
}

fn dyck_brute(len: usize) -> BTreeSet<Vec<u8>> {
    // symbols: 0 = '(', 1 = ')', 2 = '[', 3 = ']'
    let mut out = BTreeSet::new();
    for w in all_words(4, len) {
        let mut stack = Vec::new();
        let mut ok = true;
        let mut closes_first_at = None;
        for (i, &c) in w.iter().enumerate() {
            if c % 2 == 0 {
                stack.push(c);
            } else if stack.pop() != Some(c - 1) {
                ok = false;
                break;
            } else if stack.is_empty() && closes_first_at.is_none() {
                closes_first_at = Some(i);
            }
        }
        if ok && stack.is_empty() && closes_first_at == Some(len - 1) {
            out.insert(w);
        }
    }
    out
}

#[test]
fn dyck_levels_match_brute_force() {
    let sys = dyck_system(DyckVariant::Open, 10).unwrap();
    let ws = sys.words_up_to_len(10).unwrap();
    assert_eq!(words_of(&ws).iter().filter(|w| w.len() == 1).count(), 2);
    for n in 1..=5 {
        let got: BTreeSet<Vec<u8>> = words_of(&ws).into_iter().filter(|w| w.len() == 2 * n).collect();
        assert_eq!(got, dyck_brute(2 * n), "length {}", 2 * n);
        assert_eq!(sys.length_count(2 * n).unwrap(), BigUint::from(got.len()));
        assert!(words_of(&ws).iter().all(|w| w.len() % 2 == 0 || w.len() == 1));
    }
    let lang = DyckLanguage;
    assert!(!lang.member(&[0, 2, 1]));
    assert!(lang.member(&[1, 0]));
    assert!(lang.member(&[3, 1, 0, 2]));
}

#[test]
fn dyck_counts_are_twice_the_inner_balanced_words() {
    let sys = dyck_system(DyckVariant::Open, 10).unwrap();
    for n in 1..=6usize {
        let inner = dyck_balanced_count(2 * n - 2);
        assert_eq!(sys.length_count(2 * n).unwrap(), BigUint::from(2 * inner), "n = {n}");
    }
}

fn dyck_balanced_count(len: usize) -> usize {
    all_words(4, len)
        .into_iter()
        .filter(|w| {
            let mut stack = Vec::new();
            for &c in w {
                if c % 2 == 0 {
                    stack.push(c);
                } else if stack.pop() != Some(c - 1) {
                    return false;
                }
            }
            stack.is_empty()
        })
        .count()
}

#[test]
fn example51_counts() {
    let base = example51_system();
    let lens: Vec<usize> = base.first(8).unwrap().iter().map(|w| w.len()).collect();
    assert_eq!(lens, [2, 2, 4, 4, 6, 6, 8, 8]);
    for k in 1..=20 {
        let expect = if k % 2 == 0 { 2u32 } else { 0 };
        assert_eq!(base.length_count(k).unwrap(), BigUint::from(expect));
    }
    for big_n in [3usize, 5, 7] {
        let m = example51_modified(big_n, 64).unwrap();
        for n in 1..=big_n + 6 {
            let expect = if n > big_n { 2 + 2 * 3u64.pow((n - big_n - 1) as u32) } else { 2 };
            assert_eq!(m.length_count(2 * n).unwrap(), BigUint::from(expect), "N={big_n} n={n}");
            assert_eq!(m.length_count(2 * n - 1).unwrap(), BigUint::from(0u32));
        }
    }
}

#[test]
fn example51_modified_words_have_the_stated_shape() {
    let big_n = 3;
    let m = example51_modified(big_n, 64).unwrap();
    let base: Vec<Word> = example51_system().words_up_to_len(16).unwrap();
    let base_set = words_of(&base);
    let mut extra_by_len = [0usize; 17];
    for w in m.words_up_to_len(16).unwrap() {
        if base_set.contains(&w.to_vec()) {
            continue;
        }
        let head: Vec<u8> = std::iter::once(0).chain(std::iter::repeat_n(1, big_n - 1)).collect();
        let tail: Vec<u8> = std::iter::once(0).chain(std::iter::repeat_n(2, big_n - 1)).collect();
        assert!(w.starts_with(&head) && w.ends_with(&tail), "{w}");
        let mid = &w[head.len()..w.len() - tail.len()];
        assert!(!mid.is_empty() && !factorizations(&base, mid, 1).is_empty(), "{w}");
        extra_by_len[w.len()] += 1;
    }
    // c_3(8) - 2 = 2 words with |w| = 2, namely w in {01, 02}
    assert_eq!(extra_by_len[8], 2);
    assert_eq!(extra_by_len[10], 6);
    assert_eq!(extra_by_len[12], 18);
}

#[test]
fn example51_language() {
    let lang = Ex51Language;
    assert!(lang.member(&[1, 1, 0, 2, 0, 1, 1, 1, 0]));
    assert!(!lang.member(&[0, 1, 1, 0]));
    assert!(!lang.member(&[0, 1, 2, 0]));
    let sys = example51_system();
    for g in sys.words_up_to_len(12).unwrap() {
        let mut w = g.to_vec();
        w.extend_from_slice(&g);
        assert!(lang.member(&w));
    }
}

#[test]
fn gengap_with_one_symbol_is_sgap() {
    for set in [IntSet::all(), IntSet::Arithmetic { a: 1, b: 2 }, IntSet::Explicit { values: vec![0, 4, 5] }] {
        let g = gengap_system(GenGapSpec { d: 1, sets: vec![set.clone()], perms: vec![vec![0]] }).unwrap();
        let s = sgap_system(set).unwrap();
        let a = g.words_up_to_len(12).unwrap();
        let b = s.words_up_to_len(12).unwrap();
        assert_eq!(words_of(&a), words_of(&b));
    }
}

#[test]
fn gengap_levels_match_tuple_expansion() {
    let sets = vec![IntSet::Explicit { values: vec![0, 1] }, IntSet::Explicit { values: vec![0, 1] }];
    let perms = vec![vec![0, 1], vec![1, 0]];
    let sys = gengap_system(GenGapSpec { d: 2, sets, perms: perms.clone() }).unwrap();
    let mut expect = BTreeSet::new();
    for s0 in 0..=1usize {
        for s1 in 0..=1usize {
            for p in &perms {
                let s = [s0, s1];
                let mut w = Vec::new();
                for &j in p {
                    w.extend(std::iter::repeat_n(j as u8, s[j]));
                }
                w.push(2);
                expect.insert(w);
            }
        }
    }
    assert_eq!(words_of(&sys.words_up_to_len(6).unwrap()), expect);
}

#[test]
fn gengap_full_group_growth_bound() {
    let perms = vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]];
    let spec = GenGapSpec { d: 3, sets: vec![IntSet::all(), IntSet::all(), IntSet::all()], perms };
    let sys = gengap_system(spec).unwrap();
    for n in 1..=14usize {
        let c = sys.length_count(n).unwrap();
        assert!(c <= BigUint::from(6 * n * n), "length {n}: {c}");
    }
}

#[test]
fn invalid_family_inputs() {
    assert!(matches!(sgap_system(IntSet::Explicit { values: vec![] }), Err(Error::EmptyS)));
    let dup = GenGapSpec { d: 2, sets: vec![IntSet::all(), IntSet::all()], perms: vec![vec![0, 1], vec![0, 1]] };
    assert!(matches!(gengap_system(dup), Err(Error::InvalidPermutation(_))));
    let not_perm = GenGapSpec { d: 2, sets: vec![IntSet::all(), IntSet::all()], perms: vec![vec![0, 0]] };
    assert!(matches!(gengap_system(not_perm), Err(Error::InvalidPermutation(_))));
    assert!(matches!(BetaSpec { preperiod: vec![], period: vec![1, 1, 2] }.validate(), Err(Error::NotQuasiGreedy(_))));
    assert!(matches!(BetaSpec { preperiod: vec![1], period: vec![0] }.validate(), Err(Error::NotQuasiGreedy(_))));
    assert!(example51_modified(4, 10).is_err());
}
