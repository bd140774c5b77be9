use codedshift_core::families::*;
use codedshift_core::rint::*;
use codedshift_core::spectral::*;
use codedshift_core::symbolic::*;
use codedshift_core::verejones::*;
use codedshift_core::Error;
use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

fn code(ws: &[Vec<u8>]) -> GeneratorSystem {
    let words = ws.iter().map(|w| Word::new(w.clone()).unwrap()).collect();
    GeneratorSystem::finite("code", 2, words).unwrap()
}

/// `sum_{k <= n} c_k lambda^-k` in exact arithmetic.
fn exact_partial(counts: &[BigUint], lambda: &Rat) -> Rat {
    let x = lambda.recip();
    let mut s = Rat::zero();
    let mut p = Rat::one();
    for c in counts {
        s += from_biguint(c) * &p;
        p *= &x;
    }
    s - from_biguint(&counts[0])
}

fn check_certificate(sys: &GeneratorSystem, at: &Rat, cert: &Certificate, below: bool) {
    match cert {
        Certificate::Evaluated { tail, terms_used, .. } => {
            let f = exact_partial(&sys.counts_up_to(*terms_used).unwrap(), at);
            if below {
                assert!(f > Rat::one(), "f_N(lo) = {f}");
            } else {
                assert!(f + tail <= Rat::one());
            }
        }
        Certificate::Slope { midpoint, residual, slope } => {
            assert!(!residual.is_negative());
            assert!(slope.is_positive());
            let r = residual / slope;
            assert!(if below { at >= &(midpoint - &r) } else { at <= &(midpoint + &r) });
        }
    }
}

fn systems() -> Vec<GeneratorSystem> {
    vec![
        sgap_system(IntSet::all()).unwrap(),
        sgap_system(IntSet::Explicit { values: vec![1, 2] }).unwrap(),
        sgap_system(IntSet::Arithmetic { a: 0, b: 2 }).unwrap(),
        beta_system(BetaSpec { preperiod: vec![], period: vec![1, 0] }).unwrap(),
        example51_system(),
    ]
}

#[test]
fn brackets_are_certified() {
    for sys in systems() {
        let mut prev: Option<Rat> = None;
        for n in [4u32, 10, 20, 30] {
            let br = solve_lambda_bracket(&sys, n).unwrap();
            assert!(br.interval().width_below_pow2(n));
            check_certificate(&sys, &br.lo, &br.certificate_lo, true);
            check_certificate(&sys, &br.hi, &br.certificate_hi, false);
            let w = br.interval().width();
            if let Some(p) = &prev {
                assert!(&w <= p || w < pow2(-(n as i64)));
            }
            prev = Some(w);
        }
    }
}

#[test]
fn known_roots() {
    // S = {1, 2}: lambda^-2 + lambda^-3 = 1, i.e. l^3 - l - 1 = 0
    let sys = sgap_system(IntSet::Explicit { values: vec![1, 2] }).unwrap();
    let l = solve_lambda(&sys, 40).unwrap();
    let g = |x: &Rat| x * x * x - x - int(1);
    assert!(g(l.lo()) < Rat::zero() && g(l.hi()) > Rat::zero());

    let fs = entropy(&sgap_system(IntSet::all()).unwrap(), 20).unwrap();
    assert!(fs.lambda.contains(&int(2)));
    assert!(fs.h.overlaps(&log_bounds(&int(2), 30).unwrap()));

    let ex = entropy(&example51_system(), 20).unwrap();
    assert!(ex.lambda.lo() * ex.lambda.lo() <= int(3) && int(3) <= ex.lambda.hi() * ex.lambda.hi());
    let half_ln3 = log_bounds(&int(3), 30).unwrap().scale(&ratio(1, 2));
    assert!(ex.h.overlaps(&half_ln3));
    assert!(ex.h.width_below_pow2(20));

    let golden = entropy(&beta_system(BetaSpec { preperiod: vec![], period: vec![1, 0] }).unwrap(), 24).unwrap();
    let q = |x: &Rat| x * x - x - int(1);
    assert!(q(golden.lambda.lo()) <= Rat::zero() && q(golden.lambda.hi()) >= Rat::zero());
}

#[test]
fn missing_tail_control_is_reported() {
    let sys = GeneratorSystem::new(
        "opaque",
        Box::new(ListOracle::new(2, vec![Word::parse_digits("0").unwrap(), Word::parse_digits("1").unwrap()])),
        TailControl::None,
    );
    assert!(matches!(char_eval(&sys, &RatInterval::from_int(2), 4), Err(Error::TailNotBoundable)));
}

fn small_code() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::btree_set(prop::collection::vec(0u8..2, 1..=5), 2..=5).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn finite_codes_solve_their_polynomial(ws in small_code()) {
        let sys = code(&ws);
        let l = solve_lambda(&sys, 24).unwrap();
        let counts = sys.counts_up_to(5).unwrap();
        prop_assert!(exact_partial(&counts, l.lo()) >= Rat::one());
        prop_assert!(exact_partial(&counts, l.hi()) <= Rat::one());
        let fin = h_lower_finite(&sys, ws.len(), 24).unwrap();
        prop_assert!(fin.lambda.overlaps(&l));
    }

    #[test]
    fn kappa_partial_sums_grow(ws in small_code(), num in 11i64..40) {
        let sys = code(&ws);
        let lam = RatInterval::point(ratio(num, 10));
        let mut prev = Rat::zero();
        for ell in 0..=ws.len() {
            let p = kappa_partial(&sys, &lam, ell).unwrap();
            prop_assert!(p.lo() >= &prev);
            prev = p.lo().clone();
        }
    }

    #[test]
    fn doubling_lengths_rescales_kappa(ws in small_code(), num in 11i64..30) {
        let sys = code(&ws);
        let doubled: Vec<Vec<u8>> = ws.iter().map(|w| [w.clone(), w.clone()].concat()).collect();
        let sys2 = code(&doubled);
        let lam = ratio(num, 10);
        let a = kappa_partial(&sys2, &RatInterval::point(lam.clone()), ws.len()).unwrap();
        let b = kappa_partial(&sys, &RatInterval::point(&lam * &lam), ws.len()).unwrap().scale(&int(2));
        prop_assert!(a.overlaps(&b), "{} vs {}", a, b);
    }
}

#[test]
fn kappa_sandwich() {
    for sys in systems() {
        for n in [8u32, 16] {
            let cert = kappa_certified(&sys, n).unwrap();
            assert!(cert.value.width_below_pow2(n));
            assert!(&cert.tail_bound + &cert.lipschitz_slack < pow2(-(n as i64)), "{}", sys.name());
            let seq = kappa_lower_seq(&sys, &cert.lambda_used, 40).unwrap();
            assert!(seq.windows(2).all(|p| p[0] <= p[1]));
            assert!(seq.iter().all(|v| v <= cert.value.hi()));
            assert!(seq.last().unwrap() > &(cert.value.lo() - pow2(-(n as i64))), "{}", sys.name());
        }
    }
}

#[test]
fn kappa_known_values() {
    let full = kappa_certified(&sgap_system(IntSet::all()).unwrap(), 20).unwrap();
    assert!(full.value.contains(&int(2)));
    let ex = kappa_certified(&example51_system(), 20).unwrap();
    assert!(ex.value.contains(&int(3)));
    let dyck = kappa_certified(&dyck_system(DyckVariant::Open, 64).unwrap(), 12).unwrap();
    assert!(dyck.value.contains(&int(2)));
    assert!(dyck.lambda_used.contains(&int(3)));
}

#[test]
fn upper_search_tracks_entropy() {
    let sys = example51_system();
    let oracle = CertifiedKappaOracle::new(example51_system());
    let ups = h_upper_search(&sys, &oracle, 10).unwrap();
    assert_eq!(ups.len(), 10);
    assert!(ups.windows(2).all(|p| p[1] <= p[0]));
    let lower = h_lower_finite_seq(&sys, 40, 20).unwrap();
    assert!(lower.windows(2).all(|p| p[0] <= p[1]));
    let lo = lower.last().unwrap();
    for u in &ups {
        assert!(u >= &(lo - pow2(-20)));
    }
    let h = entropy(&sys, 20).unwrap().h;
    assert!(ups.last().unwrap() >= h.lo());

    // an honest constant lower bound of kappa still yields valid upper bounds
    let weak = h_upper_search(&sys, &ConstantKappaOracle(int(1)), 6).unwrap();
    assert!(weak.iter().all(|u| u >= h.lo()));
}

#[test]
fn separation_demo() {
    let rep = kappa_separation_demo(None, 10).unwrap();
    assert!(rep.separated);
    assert!(rep.generators_agree && rep.levels_agree);
    assert!(rep.gate_lower > ratio(7, 2));
    assert!(rep.separation_lower >= ratio(1, 2));
    assert!(rep.kappa_base.value.contains(&int(3)));
    assert!(rep.n0 % 2 == 1 && rep.n0 >= 3);
    match kappa_separation_demo(Some(3), 10) {
        Err(Error::GateNotSatisfied { n0, gate }) => {
            assert_eq!(n0, 3);
            assert!(gate <= ratio(7, 2));
        }
        other => panic!("{:?}", other.map(|r| r.n0)),
    }
}

#[test]
fn gap_epsilons() {
    let spec = GenGapSpec { d: 2, sets: vec![IntSet::all(), IntSet::all()], perms: vec![vec![0, 1], vec![1, 0]] };
    let sys = gengap_system(spec.clone()).unwrap();
    let lam = solve_lambda(&sys, 30).unwrap();
    let eps = gengap_epsilon(&spec, &sys, &lam).unwrap();
    let h = h_from_lambda(&lam, 20).unwrap();
    assert!(eps.is_positive() && &eps < h.lo());
    let loose = RatInterval::new(ratio(11, 10), int(40)).unwrap();
    assert!(gengap_epsilon(&spec, &sys, &loose).is_err());

    let one = GenGapSpec { d: 1, sets: vec![IntSet::all()], perms: vec![vec![0]] };
    let s1 = gengap_system(one.clone()).unwrap();
    let l1 = solve_lambda(&s1, 30).unwrap();
    let e1 = gengap_epsilon(&one, &s1, &l1).unwrap();
    let h1 = h_from_lambda(&l1, 20).unwrap();
    assert!(e1.is_positive() && &e1 < h1.lo());
}
