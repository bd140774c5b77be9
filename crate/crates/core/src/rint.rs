//! Exact rational intervals and rigorous bounds for `exp`, `log` and
//! geometric-type tails.
//!
//! Every endpoint is an exact [`BigRational`]. Operations that would make
//! denominators explode (long Taylor sums, polynomial evaluation) round
//! outward onto a dyadic grid, so enclosures stay valid while sizes stay
//! bounded.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn int(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn from_biguint(v: &BigUint) -> Rat {
    Rat::from_integer(BigInt::from_biguint(Sign::Plus, v.clone()))
}

/// `2^e` for any integer exponent.
pub fn pow2(e: i64) -> Rat {
    if e >= 0 {
        Rat::from_integer(BigInt::one() << (e as usize))
    } else {
        Rat::new(BigInt::one(), BigInt::one() << ((-e) as usize))
    }
}

/// Largest multiple of `2^-bits` that is `<= x`.
pub fn floor_dyadic(x: &Rat, bits: u32) -> Rat {
    let scaled = x.numer() << (bits as usize);
    let q = scaled.div_floor(x.denom());
    Rat::new(q, BigInt::one() << (bits as usize))
}

/// Smallest multiple of `2^-bits` that is `>= x`.
pub fn ceil_dyadic(x: &Rat, bits: u32) -> Rat {
    let scaled = x.numer() << (bits as usize);
    let q = scaled.div_ceil(x.denom());
    Rat::new(q, BigInt::one() << (bits as usize))
}

/// Serializes as `"num/den"`, always with an explicit denominator.
pub fn rat_to_string(x: &Rat) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Accepts `"p/q"` or a bare integer `"p"`.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rat::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| bad())?;
            Ok(Rat::from_integer(n))
        }
    }
}

/// Non-certified decimal rendering, for human-facing output only.
pub fn to_f64(x: &Rat) -> f64 {
    let n = x.numer();
    let d = x.denom();
    let shift = (n.bits() as i64).max(d.bits() as i64) - 60;
    if shift <= 0 {
        return n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN);
    }
    let s = shift as usize;
    let nn = (n >> s).to_f64().unwrap_or(0.0);
    let dd = (d >> s).to_f64().unwrap_or(f64::INFINITY);
    nn / dd
}

pub fn ser_rat<S: Serializer>(x: &Rat, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rat_to_string(x))
}

pub fn de_rat<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rat, D::Error> {
    let s = String::deserialize(d)?;
    parse_rat(&s).map_err(serde::de::Error::custom)
}

/// Closed interval `[lo, hi]` with exact rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RatInterval {
    lo: Rat,
    hi: Rat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl RatInterval {
    pub fn new(lo: Rat, hi: Rat) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidInterval);
        }
        Ok(RatInterval { lo, hi })
    }

    pub(crate) fn new_unchecked(lo: Rat, hi: Rat) -> Self {
        debug_assert!(lo <= hi);
        RatInterval { lo, hi }
    }

    pub fn point(x: Rat) -> Self {
        RatInterval { lo: x.clone(), hi: x }
    }

    pub fn from_int(v: i64) -> Self {
        Self::point(int(v))
    }

    pub fn lo(&self) -> &Rat {
        &self.lo
    }

    pub fn hi(&self) -> &Rat {
        &self.hi
    }

    pub fn into_bounds(self) -> (Rat, Rat) {
        (self.lo, self.hi)
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn mid(&self) -> Rat {
        (&self.lo + &self.hi) / int(2)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Rat) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn contains_interval(&self, other: &RatInterval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn overlaps(&self, other: &RatInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(&self, other: &RatInterval) -> Option<RatInterval> {
        let lo = (&self.lo).max(&other.lo).clone();
        let hi = (&self.hi).min(&other.hi).clone();
        (lo <= hi).then_some(RatInterval { lo, hi })
    }

    pub fn hull(&self, other: &RatInterval) -> RatInterval {
        RatInterval { lo: (&self.lo).min(&other.lo).clone(), hi: (&self.hi).max(&other.hi).clone() }
    }

    /// True when the width is strictly below `2^-n`.
    pub fn width_below_pow2(&self, n: u32) -> bool {
        self.width() < pow2(-(n as i64))
    }

    pub fn neg(&self) -> RatInterval {
        RatInterval { lo: -&self.hi, hi: -&self.lo }
    }

    pub fn add(&self, b: &RatInterval) -> RatInterval {
        RatInterval { lo: &self.lo + &b.lo, hi: &self.hi + &b.hi }
    }

    pub fn sub(&self, b: &RatInterval) -> RatInterval {
        RatInterval { lo: &self.lo - &b.hi, hi: &self.hi - &b.lo }
    }

    pub fn mul(&self, b: &RatInterval) -> RatInterval {
        if !self.lo.is_negative() && !b.lo.is_negative() {
            return RatInterval { lo: &self.lo * &b.lo, hi: &self.hi * &b.hi };
        }
        let c = [&self.lo * &b.lo, &self.lo * &b.hi, &self.hi * &b.lo, &self.hi * &b.hi];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        RatInterval { lo, hi }
    }

    pub fn recip(&self) -> Result<RatInterval> {
        if self.contains(&Rat::zero()) {
            return Err(Error::DivisionByZeroInterval);
        }
        Ok(RatInterval { lo: self.hi.recip(), hi: self.lo.recip() })
    }

    pub fn div(&self, b: &RatInterval) -> Result<RatInterval> {
        Ok(self.mul(&b.recip()?))
    }

    pub fn scale(&self, k: &Rat) -> RatInterval {
        if k.is_negative() {
            RatInterval { lo: &self.hi * k, hi: &self.lo * k }
        } else {
            RatInterval { lo: &self.lo * k, hi: &self.hi * k }
        }
    }

    pub fn shift(&self, k: &Rat) -> RatInterval {
        RatInterval { lo: &self.lo + k, hi: &self.hi + k }
    }

    pub fn pow(&self, k: u32) -> RatInterval {
        if k == 0 {
            return Self::from_int(1);
        }
        let a = num_traits::pow(self.lo.clone(), k as usize);
        let b = num_traits::pow(self.hi.clone(), k as usize);
        if k % 2 == 1 || !self.lo.is_negative() {
            return RatInterval { lo: a.clone().min(b.clone()), hi: a.max(b) };
        }
        if !self.hi.is_positive() {
            return RatInterval { lo: b, hi: a };
        }
        RatInterval { lo: Rat::zero(), hi: a.max(b) }
    }

    /// Widens the endpoints outward onto the grid `2^-bits`.
    pub fn round_outward(&self, bits: u32) -> RatInterval {
        RatInterval { lo: floor_dyadic(&self.lo, bits), hi: ceil_dyadic(&self.hi, bits) }
    }
}

impl fmt::Display for RatInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", rat_to_string(&self.lo), rat_to_string(&self.hi))
    }
}

impl Serialize for RatInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RatInterval", 2)?;
        st.serialize_field("lo", &rat_to_string(&self.lo))?;
        st.serialize_field("hi", &rat_to_string(&self.hi))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for RatInterval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lo: String,
            hi: String,
        }
        let raw = Raw::deserialize(d)?;
        let lo = parse_rat(&raw.lo).map_err(serde::de::Error::custom)?;
        let hi = parse_rat(&raw.hi).map_err(serde::de::Error::custom)?;
        RatInterval::new(lo, hi).map_err(serde::de::Error::custom)
    }
}

pub fn iv_arith(a: &RatInterval, b: &RatInterval, op: ArithOp) -> Result<RatInterval> {
    Ok(match op {
        ArithOp::Add => a.add(b),
        ArithOp::Sub => a.sub(b),
        ArithOp::Mul => a.mul(b),
        ArithOp::Div => a.div(b)?,
    })
}

pub fn iv_pow(a: &RatInterval, k: u32) -> RatInterval {
    a.pow(k)
}

/// Taylor enclosure of `e^f` for `f` in `[0, 1]`, on the grid `2^-bits`.
fn exp_unit(f: &Rat, bits: u32) -> RatInterval {
    let f_lo = floor_dyadic(f, bits);
    let f_hi = ceil_dyadic(f, bits);
    let grid = pow2(-(bits as i64));

    let mut t_lo = Rat::one();
    let mut s_lo = Rat::one();
    let mut j = 1i64;
    while !t_lo.is_zero() {
        t_lo = floor_dyadic(&(&t_lo * &f_lo / int(j)), bits);
        s_lo += &t_lo;
        j += 1;
    }

    let mut t_hi = Rat::one();
    let mut s_hi = Rat::zero();
    let mut j = 1i64;
    // Sum terms 0..J-1, then bound the rest by twice the J-th term.
    loop {
        s_hi += &t_hi;
        t_hi = ceil_dyadic(&(&t_hi * &f_hi / int(j)), bits);
        j += 1;
        if t_hi <= grid && j > 2 {
            break;
        }
    }
    s_hi += &t_hi * int(2);
    RatInterval::new_unchecked(s_lo.min(s_hi.clone()), s_hi)
}

/// Enclosure of `e^x` with width `< 2^-n`.
pub fn exp_bounds(x: &Rat, n: u32) -> RatInterval {
    if x.is_zero() {
        return RatInterval::from_int(1);
    }
    let k = x.floor();
    let f = x - &k;
    let k = k.to_integer().to_i64().expect("exponent argument out of range");
    let target = pow2(-(n as i64));
    let mut bits = n + 16 + (64 - (k.unsigned_abs()).leading_zeros()) * 2;
    if k > 0 {
        bits += (k as u32).saturating_mul(3) / 2;
    }
    loop {
        let ef = exp_unit(&f, bits);
        let ek = if k == 0 {
            RatInterval::from_int(1)
        } else {
            let e = exp_unit(&Rat::one(), bits);
            let p = e.pow(k.unsigned_abs() as u32);
            if k > 0 {
                p
            } else {
                p.recip().expect("e^k is positive")
            }
        };
        let r = ek.mul(&ef).round_outward(n + 4);
        if r.width() < target {
            return r;
        }
        bits = bits + bits / 2 + 8;
    }
}

/// Enclosure of `ln x` with width `< 2^-n`, by bisection against [`exp_bounds`].
pub fn log_bounds(x: &Rat, n: u32) -> Result<RatInterval> {
    if !x.is_positive() {
        return Err(Error::NonPositiveArgument(rat_to_string(x)));
    }
    if x.is_one() {
        return Ok(RatInterval::from_int(0));
    }
    if x < &Rat::one() {
        return Ok(log_bounds(&x.recip(), n)?.neg());
    }
    // ln x < log2 x <= bit length of ceil(x)
    let top = x.ceil().to_integer().bits() as i64;
    let mut lo = Rat::zero();
    let mut hi = int(top.max(1));
    let bits = n + 4;
    let eps = pow2(-(bits as i64));
    let target = pow2(-(n as i64));
    while &hi - &lo >= target {
        let mid = (&lo + &hi) / int(2);
        let e = exp_bounds(&mid, bits);
        if e.lo() > x {
            hi = mid;
        } else if e.hi() < x {
            lo = mid;
        } else {
            // |e^mid - x| < 2^-bits and both exceed 1, so |mid - ln x| < 2^-bits.
            let l = (&mid - &eps).max(lo);
            let h = (&mid + &eps).min(hi);
            return Ok(RatInterval::new_unchecked(l, h));
        }
    }
    Ok(RatInterval::new_unchecked(lo, hi))
}

fn stirling2(d: usize) -> Vec<Vec<BigUint>> {
    let mut s = vec![vec![BigUint::zero(); d + 1]; d + 1];
    s[0][0] = BigUint::one();
    for i in 1..=d {
        for k in 1..=i {
            s[i][k] = &s[i - 1][k] * BigUint::from(k) + &s[i - 1][k - 1];
        }
    }
    s
}

fn binom(n: usize, k: usize) -> BigUint {
    let mut r = BigUint::one();
    for i in 0..k {
        r = r * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    r
}

/// Exact value of `sum_{k > big_n} k^degree x^k` for `0 < x < 1`.
///
/// Any degree is accepted; the closed form goes through Stirling numbers of
/// the second kind.
pub fn geom_tails(x: &Rat, big_n: u64, degree: u32) -> Result<Rat> {
    if !x.is_positive() || x >= &Rat::one() {
        return Err(Error::RatioOutOfRange(rat_to_string(x)));
    }
    let d = degree as usize;
    let s2 = stirling2(d);
    let one_minus = Rat::one() - x;
    let mut fact = BigUint::one();
    // moments[i] = sum_{j >= 0} j^i x^j
    let mut moments = vec![Rat::zero(); d + 1];
    let mut xk_over = Vec::with_capacity(d + 1);
    for k in 0..=d {
        let num = num_traits::pow(x.clone(), k);
        let den = num_traits::pow(one_minus.clone(), k + 1);
        xk_over.push(num / den);
    }
    for (i, m) in moments.iter_mut().enumerate() {
        let mut acc = Rat::zero();
        fact.set_one();
        for k in 0..=i {
            if k > 0 {
                fact *= BigUint::from(k);
            }
            if !s2[i][k].is_zero() {
                acc += from_biguint(&(&s2[i][k] * &fact)) * &xk_over[k];
            }
        }
        *m = acc;
    }
    let n1 = Rat::from_integer(BigInt::from(big_n + 1));
    let mut total = Rat::zero();
    for (i, m) in moments.iter().enumerate() {
        let c = from_biguint(&binom(d, i)) * num_traits::pow(n1.clone(), d - i);
        total += c * m;
    }
    Ok(num_traits::pow(x.clone(), (big_n + 1) as usize) * total)
}

/// Fixed-point `floor(x * 2^bits)` for `x >= 0`.
pub fn fx_floor(x: &Rat, bits: u32) -> BigUint {
    let q = (x.numer() << (bits as usize)).div_floor(x.denom());
    q.to_biguint().expect("fixed-point value must be nonnegative")
}

pub fn fx_ceil(x: &Rat, bits: u32) -> BigUint {
    let q = (x.numer() << (bits as usize)).div_ceil(x.denom());
    q.to_biguint().expect("fixed-point value must be nonnegative")
}

pub fn fx_to_rat(v: &BigUint, bits: u32) -> Rat {
    Rat::new(BigInt::from_biguint(Sign::Plus, v.clone()), BigInt::one() << (bits as usize))
}

pub fn fx_mul_floor(a: &BigUint, b: &BigUint, bits: u32) -> BigUint {
    (a * b) >> (bits as usize)
}

pub fn fx_mul_ceil(a: &BigUint, b: &BigUint, bits: u32) -> BigUint {
    let p = a * b;
    let q = &p >> (bits as usize);
    if (&q << (bits as usize)) == p {
        q
    } else {
        q + 1u32
    }
}

/// Horner evaluation of `sum_k coeffs[k] x^k` (nonnegative coefficients)
/// at a fixed-point `x`, rounding every step in one direction.
pub fn fx_horner(coeffs: &[BigUint], x: &BigUint, bits: u32, upward: bool) -> BigUint {
    let mut acc = BigUint::zero();
    for c in coeffs.iter().rev() {
        acc = if upward { fx_mul_ceil(&acc, x, bits) } else { fx_mul_floor(&acc, x, bits) };
        acc += c << (bits as usize);
    }
    acc
}

/// Enclosure of `sum_k coeffs[k] x^k` over `x in xs` (requires `xs.lo >= 0`).
pub fn poly_bounds(coeffs: &[BigUint], xs: &RatInterval, bits: u32) -> RatInterval {
    debug_assert!(!xs.lo().is_negative());
    let lo = fx_horner(coeffs, &fx_floor(xs.lo(), bits), bits, false);
    let hi = fx_horner(coeffs, &fx_ceil(xs.hi(), bits), bits, true);
    RatInterval::new_unchecked(fx_to_rat(&lo, bits), fx_to_rat(&hi, bits))
}

pub fn cmp_rat(a: &Rat, b: &Rat) -> Ordering {
    a.cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: Rat, b: Rat) -> RatInterval {
        RatInterval::new(a, b).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        let r = iv_arith(&RatInterval::from_int(1), &RatInterval::from_int(2), ArithOp::Add).unwrap();
        assert_eq!(r, RatInterval::from_int(3));
        let r = iv_arith(&iv(int(0), int(1)), &iv(int(-1), int(1)), ArithOp::Mul).unwrap();
        assert_eq!(r, iv(int(-1), int(1)));
        let e = iv_arith(&iv(int(1), int(2)), &iv(int(0), int(1)), ArithOp::Div);
        assert!(matches!(e, Err(Error::DivisionByZeroInterval)));
    }

    #[test]
    fn pow_examples() {
        assert_eq!(iv_pow(&RatInterval::from_int(2), 3), RatInterval::from_int(8));
        assert_eq!(iv_pow(&iv(int(-1), int(1)), 2), iv(int(0), int(1)));
        assert_eq!(iv_pow(&RatInterval::point(ratio(1, 2)), 4), RatInterval::point(ratio(1, 16)));
        assert_eq!(iv_pow(&iv(int(-3), int(-2)), 2), iv(int(4), int(9)));
        assert_eq!(iv_pow(&iv(int(-3), int(-2)), 3), iv(int(-27), int(-8)));
    }

    #[test]
    fn exp_of_zero_and_one() {
        let r = exp_bounds(&Rat::zero(), 40);
        assert!(r.contains(&Rat::one()));
        // 50-term exact partial sum of e is within 1/50! of e
        let mut s = Rat::zero();
        let mut t = Rat::one();
        for j in 0..50 {
            if j > 0 {
                t /= int(j);
            }
            s += &t;
        }
        let r = exp_bounds(&Rat::one(), 10);
        assert!(r.width_below_pow2(10));
        assert!(r.lo() < &s && s < (r.hi() + pow2(-100)));
        let inv = exp_bounds(&int(-1), 10);
        let s_inv = s.recip();
        assert!(inv.lo() <= &(&s_inv + pow2(-100)) && &(&s_inv - pow2(-100)) <= inv.hi());
    }

    #[test]
    fn log_examples() {
        assert!(log_bounds(&Rat::one(), 10).unwrap().contains(&Rat::zero()));
        let l2 = log_bounds(&int(2), 10).unwrap();
        assert!(l2.width_below_pow2(10));
        // ln 2 = sum 1/(k 2^k); the tail after K terms is below 2^-K
        let mut s = Rat::zero();
        for k in 1..=80i64 {
            s += Rat::new(BigInt::one(), BigInt::from(k) << (k as usize));
        }
        assert!(l2.lo() <= &s && &s - pow2(-80) <= *l2.hi());
        assert!(matches!(log_bounds(&int(0), 5), Err(Error::NonPositiveArgument(_))));
        assert!(matches!(log_bounds(&int(-2), 5), Err(Error::NonPositiveArgument(_))));
    }

    #[test]
    fn geom_examples() {
        assert_eq!(geom_tails(&ratio(1, 2), 0, 0).unwrap(), int(1));
        assert_eq!(geom_tails(&ratio(1, 2), 0, 1).unwrap(), int(2));
        assert_eq!(geom_tails(&ratio(1, 2), 2, 0).unwrap(), ratio(1, 4));
        // sum k^2 / 2^k = 6
        assert_eq!(geom_tails(&ratio(1, 2), 0, 2).unwrap(), int(6));
        assert!(geom_tails(&int(1), 0, 0).is_err());
        assert!(geom_tails(&int(0), 0, 0).is_err());
    }

    #[test]
    fn dyadic_rounding() {
        let x = ratio(1, 3);
        assert!(floor_dyadic(&x, 10) <= x && x <= ceil_dyadic(&x, 10));
        assert_eq!(floor_dyadic(&int(-1), 3), int(-1));
        assert_eq!(ceil_dyadic(&ratio(-1, 3), 0), int(0));
    }

    #[test]
    fn rat_strings() {
        assert_eq!(rat_to_string(&ratio(-3, 6)), "-1/2");
        assert_eq!(parse_rat("7").unwrap(), int(7));
        assert_eq!(parse_rat(" -10/4 ").unwrap(), ratio(-5, 2));
        assert!(parse_rat("1/0").is_err());
        let iv = RatInterval::new(ratio(1, 3), ratio(1, 2)).unwrap();
        let js = serde_json::to_string(&iv).unwrap();
        assert_eq!(js, r#"{"lo":"1/3","hi":"1/2"}"#);
        let back: RatInterval = serde_json::from_str(&js).unwrap();
        assert_eq!(back, iv);
    }

    #[test]
    fn horner_encloses_exact_value() {
        let coeffs: Vec<BigUint> = [0u32, 1, 3, 0, 7].iter().map(|&c| BigUint::from(c)).collect();
        let x = ratio(2, 7);
        let exact = &x + int(3) * &x * &x + int(7) * num_traits::pow(x.clone(), 4);
        let b = poly_bounds(&coeffs, &RatInterval::point(x), 30);
        assert!(b.contains(&exact));
        assert!(b.width_below_pow2(25));
    }
}
