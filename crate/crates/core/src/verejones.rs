//! The Vere-Jones parameter `kappa = sum_g |g| lambda*^{-|g|}`.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rint::{
    floor_dyadic, from_biguint, geom_tails, int, log_bounds, poly_bounds, pow2, rat_to_string, Rat, RatInterval,
};
use crate::spectral::{count_tail, eps_ratio, solve_lambda, KappaOracle};
use crate::symbolic::{GeneratorSystem, TailControl};

#[derive(Clone, Debug, Serialize)]
pub struct KappaCertificate {
    pub value: RatInterval,
    pub lambda_used: RatInterval,
    pub terms_used: usize,
    #[serde(serialize_with = "crate::rint::ser_rat")]
    pub tail_bound: Rat,
    #[serde(serialize_with = "crate::rint::ser_rat")]
    /// Bound on `|kappa(l) - kappa(l')|` over the lambda enclosure.
    pub lipschitz_slack: Rat,
}

fn weighted(counts: &[BigUint]) -> Vec<BigUint> {
    counts.iter().enumerate().map(|(k, c)| c * BigUint::from(k)).collect()
}

fn eval_bits(n: u32, terms: usize) -> u32 {
    n + 24 + 2 * (usize::BITS - terms.leading_zeros())
}

/// Encloses `sum_{i <= ell} |g_i| lambda^{-|g_i|}` over `lambda`.
pub fn kappa_partial(sys: &GeneratorSystem, lambda: &RatInterval, ell: usize) -> Result<RatInterval> {
    if lambda.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    if ell == 0 {
        return Ok(RatInterval::from_int(0));
    }
    let words = sys.first(ell)?;
    let max = words.last().map_or(0, |w| w.len());
    let mut counts = vec![BigUint::zero(); max + 1];
    for w in &words {
        counts[w.len()] += 1u32;
    }
    Ok(poly_bounds(&weighted(&counts), &lambda.recip()?, eval_bits(64, max)))
}

/// Same sum, cut by generator length instead of index.
pub fn kappa_partial_by_len(
    sys: &GeneratorSystem,
    lambda: &RatInterval,
    maxlen: usize,
    bits: u32,
) -> Result<RatInterval> {
    if lambda.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    let counts = sys.counts_up_to(maxlen)?;
    Ok(poly_bounds(&weighted(&counts), &lambda.recip()?, bits))
}

/// Bound on `sum_{k > n} k |G_k| lambda*^{-k}` given `x_hi >= 1/lambda*`.
fn kappa_tail(sys: &GeneratorSystem, x_hi: &Rat, n: usize) -> Result<Rat> {
    count_tail(sys, x_hi, n, 1)
}

/// Bound on `sum_k k^2 |G_k| lambda^{-k-1}` for every `lambda` in `lam`.
fn lipschitz(sys: &GeneratorSystem, lam: &RatInterval) -> Result<Option<Rat>> {
    let x = lam.lo().recip();
    Ok(Some(match sys.tail_control() {
        TailControl::Finite(_) => {
            let max = sys.finite_max_len()?.unwrap_or(0);
            let counts = sys.counts_up_to(max)?;
            let mut s = Rat::zero();
            for (k, c) in counts.iter().enumerate() {
                s += from_biguint(c) * int((k * k) as i64) * num_traits::pow(x.clone(), k + 1);
            }
            s
        }
        TailControl::BoundedGrowth(b) => int(*b as i64) * geom_tails(&x, 0, 2)? * &x,
        TailControl::PolynomialGrowth { coef, degree } => int(*coef as i64) * geom_tails(&x, 0, degree + 2)? * &x,
        TailControl::GapEpsilon(eps) => {
            let rho = eps_ratio(eps)? * lam.hi() / lam.lo();
            if rho >= Rat::one() {
                return Ok(None);
            }
            geom_tails(&rho, 0, 2)? * &x
        }
        TailControl::None => return Err(Error::TailNotBoundable),
    }))
}

/// Smallest doubling cutoff whose tail bound is below `target`.
fn choose_cutoff(sys: &GeneratorSystem, x_hi: &Rat, target: &Rat) -> Result<(usize, Rat)> {
    if let Some(max) = sys.finite_max_len()? {
        return Ok((max, Rat::zero()));
    }
    let mut n = 16usize;
    for _ in 0..crate::budget().max(4) {
        let t = kappa_tail(sys, x_hi, n)?;
        if &t < target {
            return Ok((n, t));
        }
        n *= 2;
    }
    Err(Error::BudgetExceeded("no term cutoff brings the kappa tail below the target".into()))
}

fn check_declared_kappa(sys: &GeneratorSystem, value: &RatInterval) -> Result<()> {
    if let Some(k) = &sys.declared().kappa {
        if !value.contains(k) {
            return Err(Error::DeclaredMismatch(format!(
                "declared kappa {} lies outside the certified enclosure {}",
                rat_to_string(k),
                value
            )));
        }
    }
    Ok(())
}

/// Certified enclosure of `kappa` with width `< 2^-n`.
///
/// A system that declares `lambda*` as an exact point is run in cross-check
/// mode: the declared value is verified against the characteristic
/// equation and then used directly, and a declared `kappa` must land inside
/// the result.
pub fn kappa_certified(sys: &GeneratorSystem, n: u32) -> Result<KappaCertificate> {
    if matches!(sys.tail_control(), TailControl::None) {
        return Err(Error::TailNotBoundable);
    }
    let target_tail = pow2(-(n as i64) - 2);
    let target = pow2(-(n as i64));
    let declared_point = sys.declared().lambda.clone().filter(|l| l.is_point());

    if let Some(lam) = declared_point {
        let x = lam.lo().recip();
        let (cut, tail) = choose_cutoff(sys, &x, &target_tail)?;
        let bits = eval_bits(n, cut);
        let counts = sys.counts_up_to(cut)?;
        let f = poly_bounds(&counts, &lam.recip()?, bits);
        let f_tail = count_tail(sys, &x, cut, 0)?;
        if f.lo() > &Rat::one() || (f.hi() + &f_tail) < Rat::one() {
            return Err(Error::DeclaredMismatch(format!(
                "declared lambda {} does not solve the characteristic equation",
                rat_to_string(lam.lo())
            )));
        }
        let part = poly_bounds(&weighted(&counts), &lam.recip()?, bits);
        let value = RatInterval::new_unchecked(part.lo().clone(), part.hi() + &tail).round_outward(n + 8);
        if !value.width_below_pow2(n) {
            return Err(Error::PrecisionExhausted(format!("kappa enclosure {value} is too wide")));
        }
        check_declared_kappa(sys, &value)?;
        return Ok(KappaCertificate {
            value,
            lambda_used: lam,
            terms_used: cut,
            tail_bound: tail,
            lipschitz_slack: Rat::zero(),
        });
    }

    let mut p = n + 6;
    let mut last_rho = None;
    for _ in 0..crate::budget().max(4) {
        let lam = solve_lambda(sys, p)?;
        if let Some(decl) = &sys.declared().lambda {
            if !decl.overlaps(&lam) {
                return Err(Error::DeclaredMismatch(format!(
                    "declared lambda {decl} is disjoint from the certified {lam}"
                )));
            }
        }
        let lip = match lipschitz(sys, &lam)? {
            Some(l) => l,
            None => {
                last_rho = Some(eps_ratio_of(sys)? * lam.hi() / lam.lo());
                p += 4;
                continue;
            }
        };
        let x = lam.lo().recip();
        let (cut, tail) = choose_cutoff(sys, &x, &target_tail)?;
        let bits = eval_bits(n, cut);
        let counts = sys.counts_up_to(cut)?;
        let part = poly_bounds(&weighted(&counts), &lam.recip()?, bits);
        let value = RatInterval::new_unchecked(part.lo().clone(), part.hi() + &tail).round_outward(n + 8);
        let slack = &lip * lam.width();
        if value.width() < target && &tail + &slack < target {
            check_declared_kappa(sys, &value)?;
            return Ok(KappaCertificate {
                value,
                lambda_used: lam,
                terms_used: cut,
                tail_bound: tail,
                lipschitz_slack: slack,
            });
        }
        // the lambda contribution is about lip * width(lambda); aim below 2^-n-2
        p += 4;
    }
    match last_rho {
        Some(r) => Err(Error::RatioNotCertifiable { achieved: r }),
        None => Err(Error::BudgetExceeded("lambda refinement for the kappa enclosure".into())),
    }
}

fn eps_ratio_of(sys: &GeneratorSystem) -> Result<Rat> {
    match sys.tail_control() {
        TailControl::GapEpsilon(eps) => eps_ratio(eps),
        _ => Ok(Rat::one()),
    }
}

/// Nondecreasing lower approximations of `kappa`: element `j` is the best of
/// the partial sums over lengths `<= i`, `i <= j`, each evaluated at
/// `lambda.hi` and rounded down to the grid `2^-i`.
pub fn kappa_lower_seq(sys: &GeneratorSystem, lambda: &RatInterval, steps: usize) -> Result<Vec<Rat>> {
    if lambda.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    let top = RatInterval::point(lambda.hi().clone());
    let mut out: Vec<Rat> = Vec::with_capacity(steps);
    let mut best = Rat::zero();
    for j in 1..=steps {
        let cut = match sys.finite_max_len()? {
            Some(m) => j.min(m),
            None => j,
        };
        let s = kappa_partial_by_len(sys, &top, cut, eval_bits(j as u32, cut))?;
        let v = floor_dyadic(s.lo(), j as u32);
        if v > best {
            best = v;
        }
        out.push(best.clone());
    }
    Ok(out)
}

/// Picks a gap `eps` in `(0, h_lo - u)`, above `h_hi / 2` when that still
/// leaves room.
pub(crate) fn pick_gap_epsilon(h: &RatInterval, u: &Rat) -> Result<Rat> {
    let gap = h.lo() - u;
    if !gap.is_positive() {
        return Err(Error::PrecisionExhausted(format!(
            "growth bound {} is not below the entropy lower bound {}",
            rat_to_string(u),
            rat_to_string(h.lo())
        )));
    }
    let half = h.hi() / int(2);
    let raw = if gap > half { (&half + &gap) / int(2) } else { &gap / int(2) };
    let mut bits = 8;
    loop {
        let e = floor_dyadic(&raw, bits);
        if e.is_positive() && e < gap {
            return Ok(e);
        }
        bits += 8;
    }
}

/// A gap `eps` with `0 < eps < h - r(G)` for a system with bounded growth.
///
/// With `b = max |G_k|`, every `k` with `lambda_lo^k > b^2` has
/// `(1/k) log |G_k| < h/2`; the finitely many earlier lengths are compared
/// one by one.
pub fn gap_epsilon_bounded(sys: &GeneratorSystem, lambda: &RatInterval) -> Result<Rat> {
    let b = match sys.tail_control() {
        TailControl::BoundedGrowth(b) => *b,
        _ => return Err(Error::TailNotBoundable),
    };
    if lambda.lo() <= &Rat::one() {
        return Err(Error::LambdaTooSmall);
    }
    let bits = 40;
    let a = log_bounds(lambda.lo(), bits)?;
    let z = log_bounds(lambda.hi(), bits)?;
    let h = RatInterval::new_unchecked(a.lo().clone(), z.hi().clone());
    let b2 = int((b * b) as i64);
    let mut n = 1usize;
    while num_traits::pow(lambda.lo().clone(), n + 1) <= b2 {
        n += 1;
        if n > 1 << 16 {
            return Err(Error::PrecisionExhausted("lambda enclosure too close to 1".into()));
        }
    }
    let mut u = if b > 1 { log_bounds(&int(b as i64), bits)?.hi() / int(n as i64 + 1) } else { Rat::zero() };
    let counts = sys.counts_up_to(n)?;
    for (k, c) in counts.iter().enumerate().skip(1) {
        if c > &BigUint::one() {
            let v = log_bounds(&from_biguint(c), bits)?.hi() / int(k as i64);
            if v > u {
                u = v;
            }
        }
    }
    pick_gap_epsilon(&h, &u).map_err(|e| match e {
        Error::PrecisionExhausted(m) => Error::PrecisionExhausted(format!("{m} (lengths up to {n} checked)")),
        e => e,
    })
}

/// Oracle backed by [`kappa_certified`]: `approx(n)` is a certified lower
/// bound within `2^-n` of `kappa`, nondecreasing in `n`.
pub struct CertifiedKappaOracle {
    sys: GeneratorSystem,
    cache: Mutex<HashMap<u32, Rat>>,
}

impl CertifiedKappaOracle {
    pub fn new(sys: GeneratorSystem) -> Self {
        CertifiedKappaOracle { sys, cache: Mutex::new(HashMap::new()) }
    }
}

impl KappaOracle for CertifiedKappaOracle {
    fn approx(&self, n: u32) -> Result<Rat> {
        if let Some(v) = self.cache.lock().unwrap().get(&n) {
            return Ok(v.clone());
        }
        let mut v = kappa_certified(&self.sys, n + 1)?.value.lo().clone();
        let mut cache = self.cache.lock().unwrap();
        for (k, w) in cache.iter() {
            if *k < n && w > &v {
                v = w.clone();
            }
        }
        cache.insert(n, v.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{example51_system, sgap_system, IntSet};
    use crate::rint::ratio;

    #[test]
    fn empty_partial_sum() {
        let sys = sgap_system(IntSet::all()).unwrap();
        assert_eq!(kappa_partial(&sys, &RatInterval::from_int(2), 0).unwrap(), RatInterval::from_int(0));
    }

    #[test]
    fn full_shift_kappa_is_two() {
        let sys = sgap_system(IntSet::all()).unwrap();
        let c = kappa_certified(&sys, 20).unwrap();
        assert!(c.value.contains(&int(2)));
        assert!(c.value.width_below_pow2(20));
    }

    #[test]
    fn example_gap_is_below_half_entropy() {
        let sys = example51_system();
        let lam = solve_lambda(&sys, 30).unwrap();
        let eps = gap_epsilon_bounded(&sys, &lam).unwrap();
        // h - r(G) = (ln 3 - ln 2) / 2 < 0.2028
        assert!(eps.is_positive() && eps < ratio(2028, 10000));
    }
}
