//! The characteristic equation `f(lambda) = sum_g lambda^{-|g|} = 1`, its
//! certified root `lambda* = e^{h}`, and the upper search for `h` driven by a
//! `kappa` oracle.
//!
//! Everything runs in the variable `x = 1/lambda`: `f` is a power series in
//! `x` with the nonnegative integer coefficients `|G_k|`.

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rint::{
    ceil_dyadic, exp_bounds, fx_ceil, fx_horner, fx_to_rat, geom_tails, int, log_bounds, poly_bounds, pow2,
    rat_to_string, Rat, RatInterval,
};
use crate::symbolic::{GeneratorSystem, TailControl};

#[derive(Clone, Debug, Serialize)]
pub struct CharEvaluation {
    pub lambda: RatInterval,
    pub partial_value: RatInterval,
    #[serde(serialize_with = "crate::rint::ser_rat")]
    pub tail_bound: Rat,
    pub terms_used: usize,
}

#[derive(Clone, Debug)]
pub enum Certificate {
    /// `partial` encloses `f_N` at the endpoint; with `tail` it decides the side.
    Evaluated { partial: RatInterval, tail: Rat, terms_used: usize },
    /// The endpoint came from `|f(mid) - 1| <= residual` and `|f'| >= slope`.
    Slope { midpoint: Rat, residual: Rat, slope: Rat },
}

#[derive(Clone, Debug)]
pub struct LambdaBracket {
    pub lo: Rat,
    pub hi: Rat,
    pub certificate_lo: Certificate,
    pub certificate_hi: Certificate,
    pub terms_used: usize,
}

impl LambdaBracket {
    pub fn interval(&self) -> RatInterval {
        RatInterval::new_unchecked(self.lo.clone(), self.hi.clone())
    }
}

/// Upper bound for `e^{-eps}` strictly below 1.
pub(crate) fn eps_ratio(eps: &Rat) -> Result<Rat> {
    if !eps.is_positive() {
        return Err(Error::RatioNotCertifiable { achieved: int(1) });
    }
    let mut bits = 32;
    loop {
        let r = ceil_dyadic(exp_bounds(&-eps, bits).hi(), bits + 2);
        if r < Rat::one() {
            return Ok(r);
        }
        if bits > 4096 {
            return Err(Error::RatioNotCertifiable { achieved: r });
        }
        bits *= 2;
    }
}

/// Bound on `sum_{k > n} k^moment |G_k| x^k`.
///
/// For `GapEpsilon` the bound uses `|G_k| x^k <= e^{-k eps}`, which holds for
/// `x <= 1/lambda*` only; `x_hi` is ignored in that case.
pub(crate) fn count_tail(sys: &GeneratorSystem, x_hi: &Rat, n: usize, moment: u32) -> Result<Rat> {
    let t = tail_from_control(sys, x_hi, n, moment)?;
    match sys.growth_bound() {
        Some((coef, degree)) if x_hi < &Rat::one() && !t.is_zero() => {
            let g = int(coef as i64) * geom_tails(x_hi, n as u64, degree + moment)?;
            Ok(if g < t { g } else { t })
        }
        _ => Ok(t),
    }
}

fn tail_from_control(sys: &GeneratorSystem, x_hi: &Rat, n: usize, moment: u32) -> Result<Rat> {
    let n64 = n as u64;
    match sys.tail_control() {
        TailControl::Finite(_) => {
            let max = sys.finite_max_len()?.unwrap_or(0);
            if n >= max {
                Ok(Rat::zero())
            } else {
                // crude but valid: every remaining generator has x^k <= x^{n+1}
                let words = sys.first(usize::MAX)?;
                let mut t = Rat::zero();
                for w in words.iter().filter(|w| w.len() > n) {
                    t += num_traits::pow(x_hi.clone(), w.len()) * num_traits::pow(int(w.len() as i64), moment as usize);
                }
                Ok(t)
            }
        }
        TailControl::BoundedGrowth(b) => Ok(int(*b as i64) * geom_tails(x_hi, n64, moment)?),
        TailControl::PolynomialGrowth { coef, degree } => {
            Ok(int(*coef as i64) * geom_tails(x_hi, n64, degree + moment)?)
        }
        TailControl::GapEpsilon(eps) => geom_tails(&eps_ratio(eps)?, n64, moment),
        TailControl::None => Err(Error::TailNotBoundable),
    }
}

fn cutoff_for(sys: &GeneratorSystem, n: usize) -> Result<usize> {
    Ok(match sys.finite_max_len()? {
        Some(m) => m,
        None => n,
    })
}

fn working_bits(n: u32, terms: usize) -> u32 {
    n + 40 + (usize::BITS - terms.leading_zeros())
}

fn eval_partial(counts: &[BigUint], lam: &RatInterval, bits: u32) -> Result<RatInterval> {
    if lam.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    let xs = lam.recip()?;
    Ok(poly_bounds(counts, &xs, bits))
}

/// Evaluates `f_N` over `lambda` and bounds the omitted tail.
pub fn char_eval(sys: &GeneratorSystem, lambda: &RatInterval, n: usize) -> Result<CharEvaluation> {
    if lambda.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    if matches!(sys.tail_control(), TailControl::None) {
        return Err(Error::TailNotBoundable);
    }
    let cutoff = cutoff_for(sys, n)?;
    let counts = sys.counts_up_to(cutoff)?;
    let partial = eval_partial(&counts, lambda, working_bits(64, cutoff))?;
    let tail = count_tail(sys, &lambda.lo().recip(), cutoff, 0)?;
    Ok(CharEvaluation { lambda: lambda.clone(), partial_value: partial, tail_bound: tail, terms_used: cutoff })
}

enum Side {
    Below(Certificate),
    Above(Certificate),
    Undecided(Rat),
}

struct Solver<'a> {
    sys: &'a GeneratorSystem,
    counts: Vec<BigUint>,
    cutoff: usize,
    max_cutoff: usize,
    finite: bool,
    bits: u32,
}

impl<'a> Solver<'a> {
    fn new(sys: &'a GeneratorSystem, n: u32) -> Result<Self> {
        let finite_len = sys.finite_max_len()?;
        let budget = crate::budget().min(40);
        let (cutoff, max_cutoff) = match finite_len {
            Some(m) => (m, m),
            None => {
                let start = 32usize;
                (start, start.saturating_mul(1usize << budget.min(12)))
            }
        };
        if matches!(sys.tail_control(), TailControl::None) && finite_len.is_none() {
            return Err(Error::TailNotBoundable);
        }
        let counts = sys.counts_up_to(cutoff)?;
        Ok(Solver { sys, counts, cutoff, max_cutoff, finite: finite_len.is_some(), bits: working_bits(n, cutoff) })
    }

    fn grow(&mut self) -> Result<bool> {
        if self.finite || self.cutoff >= self.max_cutoff {
            return Ok(false);
        }
        self.cutoff *= 2;
        self.counts = self.sys.counts_up_to(self.cutoff)?;
        self.bits = self.bits.max(working_bits(self.bits - 40, self.cutoff));
        Ok(true)
    }

    fn classify(&self, lam: &Rat) -> Result<Side> {
        let partial = eval_partial(&self.counts, &RatInterval::point(lam.clone()), self.bits)?;
        let tail = count_tail(self.sys, &lam.recip(), self.cutoff, 0)?;
        let one = Rat::one();
        if partial.lo() > &one {
            return Ok(Side::Below(Certificate::Evaluated { partial, tail, terms_used: self.cutoff }));
        }
        if (partial.hi() + &tail) < one {
            return Ok(Side::Above(Certificate::Evaluated { partial, tail, terms_used: self.cutoff }));
        }
        Ok(Side::Undecided(partial.hi() + &tail - partial.lo()))
    }

    fn classify_growing(&mut self, lam: &Rat) -> Result<Side> {
        loop {
            match self.classify(lam)? {
                Side::Undecided(r) => {
                    if !self.grow()? {
                        return Ok(Side::Undecided(r));
                    }
                }
                s => return Ok(s),
            }
        }
    }
}

/// Certified bracket of `lambda*` of width `< 2^-n`.
pub fn solve_lambda_bracket(sys: &GeneratorSystem, n: u32) -> Result<LambdaBracket> {
    let k0 = sys.min_len()?.ok_or_else(|| Error::NoRootBracket("the generating set is empty".into()))?;
    if sys.is_finite() && sys.first(2)?.len() == 1 {
        return Err(Error::NoRootBracket(format!(
            "a single generator of length {k0} gives lambda = 1 (a periodic orbit)"
        )));
    }
    let mut s = Solver::new(sys, n)?;
    let d = sys.alphabet_size() as i64;

    let mut hi = int(d + 1);
    let cert_hi = loop {
        match s.classify_growing(&hi)? {
            Side::Above(c) => break c,
            _ => {
                hi *= int(2);
                if hi > int(1 << 20) {
                    return Err(Error::NoRootBracket("f stays above 1 for every tested lambda".into()));
                }
            }
        }
    };

    let mut found = None;
    for j in 1..=64i64 {
        let lo = Rat::one() + pow2(-j);
        if let Side::Below(c) = s.classify(&lo)? {
            found = Some((lo, c));
            break;
        }
        if j % 4 == 0 {
            s.grow()?;
        }
    }
    let (mut lo, mut cert_lo) = found.ok_or_else(|| {
        Error::NoRootBracket("f_N(lambda) <= 1 for all tested lambda > 1; the system looks degenerate".into())
    })?;
    let mut cert_hi = cert_hi;

    let target = pow2(-(n as i64));
    while &hi - &lo >= target {
        let w = &hi - &lo;
        let mid = (&lo + &hi) / int(2);
        match s.classify_growing(&mid)? {
            Side::Below(c) => {
                lo = mid;
                cert_lo = c;
                continue;
            }
            Side::Above(c) => {
                hi = mid;
                cert_hi = c;
                continue;
            }
            Side::Undecided(residual) => {
                let mut progressed = false;
                for q in [&lo + &w / int(4), &lo + &w * int(3) / int(4)] {
                    match s.classify(&q)? {
                        Side::Below(c) if q > lo => {
                            lo = q;
                            cert_lo = c;
                            progressed = true;
                        }
                        Side::Above(c) if q < hi => {
                            hi = q;
                            cert_hi = c;
                            progressed = true;
                        }
                        _ => {}
                    }
                }
                if progressed {
                    continue;
                }
                // f is decreasing with |f'(l)| >= k0 * l^{-k0-1} on the bracket.
                let slope = int(k0 as i64) / num_traits::pow(hi.clone(), k0 + 1);
                let r = &residual / &slope;
                let new_lo = (&mid - &r).max(lo.clone());
                let new_hi = (&mid + &r).min(hi.clone());
                if &new_hi - &new_lo >= w * Rat::new(3.into(), 4.into()) {
                    return Err(Error::PrecisionExhausted(format!(
                        "bisection undecided at {} within the term budget",
                        rat_to_string(&mid)
                    )));
                }
                let cert = Certificate::Slope { midpoint: mid.clone(), residual, slope };
                if new_lo > lo {
                    lo = new_lo;
                    cert_lo = cert.clone();
                }
                if new_hi < hi {
                    hi = new_hi;
                    cert_hi = cert;
                }
            }
        }
    }
    Ok(LambdaBracket { lo, hi, certificate_lo: cert_lo, certificate_hi: cert_hi, terms_used: s.cutoff })
}

/// Interval of width `< 2^-n` containing `lambda*`.
pub fn solve_lambda(sys: &GeneratorSystem, n: u32) -> Result<RatInterval> {
    Ok(solve_lambda_bracket(sys, n)?.interval())
}

/// Encloses `log` over `lam` with width `< 2^-n`, or reports the input width
/// that would be needed.
pub fn h_from_lambda(lam: &RatInterval, n: u32) -> Result<RatInterval> {
    if lam.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    let a = log_bounds(lam.lo(), n + 2)?;
    let b = log_bounds(lam.hi(), n + 2)?;
    let r = RatInterval::new_unchecked(a.lo().clone(), b.hi().clone());
    if r.width_below_pow2(n) {
        Ok(r)
    } else {
        let need = lam.lo() * pow2(-(n as i64) - 1);
        Err(Error::InsufficientPrecision(format!("lambda width must be below {}", rat_to_string(&need))))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    pub lambda: RatInterval,
    pub h: RatInterval,
    pub terms_used: usize,
}

/// `lambda*` and `h = log lambda*`, both with width `< 2^-n`.
pub fn entropy(sys: &GeneratorSystem, n: u32) -> Result<EntropyReport> {
    let mut p = n + 4;
    for _ in 0..crate::budget().max(1) {
        let br = solve_lambda_bracket(sys, p)?;
        let lam = br.interval();
        match h_from_lambda(&lam, n) {
            Ok(h) => return Ok(EntropyReport { lambda: lam, h, terms_used: br.terms_used }),
            Err(Error::InsufficientPrecision(_)) => p += 8,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BudgetExceeded("lambda refinement for the entropy enclosure".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteLowerBound {
    pub lambda: RatInterval,
    pub h: RatInterval,
}

/// Root of `sum_{i <= m} lambda^{-|g_i|} = 1`; its log is a lower bound for `h`.
pub fn h_lower_finite(sys: &GeneratorSystem, m: usize, n: u32) -> Result<FiniteLowerBound> {
    let words = sys.first(m.max(1))?;
    if words.len() == 1 {
        return Ok(FiniteLowerBound { lambda: RatInterval::from_int(1), h: RatInterval::from_int(0) });
    }
    let code = GeneratorSystem::finite(format!("{} (first {})", sys.name(), words.len()), sys.alphabet_size(), words)?;
    let e = entropy(&code, n)?;
    Ok(FiniteLowerBound { lambda: e.lambda, h: e.h })
}

/// Running maximum of the lower endpoints from [`h_lower_finite`] over `m = 1..=m_max`.
pub fn h_lower_finite_seq(sys: &GeneratorSystem, m_max: usize, n: u32) -> Result<Vec<Rat>> {
    let mut out: Vec<Rat> = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let lb = h_lower_finite(sys, m, n)?.h.lo().clone();
        let v = match out.last() {
            Some(prev) if prev > &lb => prev.clone(),
            _ => lb,
        };
        out.push(v);
    }
    Ok(out)
}

/// Oracle for `kappa`: `|approx(n) - kappa| < 2^-n`, nondecreasing in `n`.
pub trait KappaOracle {
    fn approx(&self, n: u32) -> Result<Rat>;
}

/// Always returns the same value; honest when the value is a lower bound of
/// `kappa` (then `approx(n) - 2^-n` is still below `kappa`).
pub struct ConstantKappaOracle(pub Rat);

impl KappaOracle for ConstantKappaOracle {
    fn approx(&self, _n: u32) -> Result<Rat> {
        Ok(self.0.clone())
    }
}

const MAX_GRID_LOG2: u32 = 16;

/// Upper bound of `K(t) = sum_g |g| e^{-t|g|}` at `t`, or `None` when no
/// finite bound is available there.
fn kappa_fn_upper(
    sys: &GeneratorSystem,
    counts: &[BigUint],
    cutoff: usize,
    t: &Rat,
    lambda_hi: Option<&Rat>,
    bits: u32,
) -> Result<Option<Rat>> {
    let y = exp_bounds(&-t, bits).hi().clone();
    if y >= Rat::one() {
        return Ok(None);
    }
    let tail = match sys.tail_control() {
        TailControl::GapEpsilon(eps) => {
            let r = lambda_hi.expect("lambda bound for gap tails") * &y * eps_ratio(eps)?;
            if r >= Rat::one() {
                return Ok(None);
            }
            geom_tails(&r, cutoff as u64, 1)?
        }
        TailControl::None => return Err(Error::TailNotBoundable),
        _ => count_tail(sys, &y, cutoff, 1)?,
    };
    let weighted: Vec<BigUint> = counts.iter().enumerate().map(|(k, c)| c * BigUint::from(k)).collect();
    let part = fx_horner(&weighted, &fx_ceil(&y, bits), bits, true);
    Ok(Some(fx_to_rat(&part, bits) + tail))
}

/// Nonincreasing upper bounds `h_1 >= h_2 >= ...` for `h`.
///
/// Step `n` lays a grid of `2^n` points on `[0, h_n]` (capped at `2^16`) and
/// takes the least grid point `t` whose certified upper bound of `K(t)` is at
/// most `q_n = approx(n) - 2^-n`, a certified lower bound of `kappa`. Since
/// `K` is strictly decreasing with `K(h) = kappa`, every accepted `t` is `>= h`.
pub fn h_upper_search(sys: &GeneratorSystem, oracle: &dyn KappaOracle, steps: usize) -> Result<Vec<Rat>> {
    let d = sys.alphabet_size() as i64;
    let h1 = ceil_dyadic(log_bounds(&int(d), 30)?.hi(), 30);
    let mut out = vec![h1];
    if steps <= 1 {
        return Ok(out);
    }
    let lambda_hi = match sys.tail_control() {
        TailControl::GapEpsilon(_) => Some(solve_lambda(sys, 24)?.hi().clone()),
        _ => None,
    };
    for n in 1..steps as u32 {
        let h_n = out.last().unwrap().clone();
        let q_n = oracle.approx(n)? - pow2(-(n as i64));
        let g = 1u64 << n.min(MAX_GRID_LOG2);
        let cutoff = match sys.finite_max_len()? {
            Some(m) => m,
            None => (64 * n as usize).clamp(128, 2048),
        };
        let counts = sys.counts_up_to(cutoff)?;
        let bits = n + 48;
        let mut next = h_n.clone();
        for i in 1..g {
            let t = &h_n * Rat::new(i.into(), g.into());
            if let Some(p) = kappa_fn_upper(sys, &counts, cutoff, &t, lambda_hi.as_ref(), bits)? {
                if p <= q_n {
                    next = t;
                    break;
                }
            }
        }
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rint::ratio;
    use crate::symbolic::Word;

    fn code(words: &[&str]) -> GeneratorSystem {
        let ws = words.iter().map(|s| Word::parse_digits(s).unwrap()).collect();
        GeneratorSystem::finite("code", 2, ws).unwrap()
    }

    #[test]
    fn golden_code_bracket() {
        let sys = code(&["0", "01"]);
        let br = solve_lambda_bracket(&sys, 30).unwrap();
        // phi^2 = phi + 1: g(l) = l^2 - l - 1 changes sign across the bracket
        let g = |l: &Rat| l * l - l - int(1);
        assert!(g(&br.lo) < Rat::zero() && g(&br.hi) > Rat::zero());
        assert!(br.interval().width_below_pow2(30));
    }

    #[test]
    fn single_generator_is_degenerate() {
        assert!(matches!(solve_lambda(&code(&["1"]), 10), Err(Error::NoRootBracket(_))));
    }

    #[test]
    fn h_from_lambda_examples() {
        let l = h_from_lambda(&RatInterval::from_int(2), 10).unwrap();
        assert!(l.width_below_pow2(10));
        let near_one = Rat::one() + ratio(1, 1_000_000_000);
        let h = h_from_lambda(&RatInterval::point(near_one), 40).unwrap();
        assert!(h.hi().is_positive());
        assert!(matches!(h_from_lambda(&RatInterval::from_int(1), 5), Err(Error::LambdaTooSmall)));
        let wide = RatInterval::new(int(2), int(3)).unwrap();
        assert!(matches!(h_from_lambda(&wide, 5), Err(Error::InsufficientPrecision(_))));
    }
}
