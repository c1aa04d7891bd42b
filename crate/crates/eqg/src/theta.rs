//! Jacobi theta function and exact affine shifts.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Terms larger than this in the theta series mean the caller skipped strip reduction.
const TERM_BOUND: f64 = 1e200;

/// Range of the rationality probe `p*hbar = m + n*tau`.
const PROBE_RANGE: i64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticParams {
    pub tau: C64,
    pub hbar: C64,
    pub series_terms: usize,
    pub tol: f64,
}

impl EllipticParams {
    pub fn new(tau: C64, hbar: C64, series_terms: usize, tol: f64) -> Result<Self> {
        let p = EllipticParams { tau, hbar, series_terms, tol };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.im > 0.0) {
            return Err(Error::InvalidParams(format!("Im(tau) must be positive, got {}", self.tau)));
        }
        if self.series_terms == 0 {
            return Err(Error::InvalidParams("series_terms must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams("tol must be positive".into()));
        }
        if let Some((p, m, n)) = self.lattice_coincidence() {
            return Err(Error::InvalidParams(format!(
                "hbar is not generic: {p}*hbar is within tol of {m} + {n}*tau"
            )));
        }
        Ok(())
    }

    /// Small integers with `p*hbar` within tol of the lattice point `m + n*tau`, if any.
    pub fn lattice_coincidence(&self) -> Option<(i64, i64, i64)> {
        for p in 1..=PROBE_RANGE {
            let ph = self.hbar * p as f64;
            for n in -PROBE_RANGE..=PROBE_RANGE {
                let r = ph - self.tau * n as f64;
                let m = r.re.round();
                if m.abs() <= PROBE_RANGE as f64 && (r - C64::new(m, 0.0)).norm() < self.tol {
                    return Some((p, m as i64, n));
                }
            }
        }
        None
    }

    pub fn with_series_terms(mut self, j: usize) -> Self {
        self.series_terms = j;
        self
    }
}

impl Default for EllipticParams {
    fn default() -> Self {
        EllipticParams {
            tau: C64::new(0.0, 0.8),
            hbar: C64::new(0.23, 0.11),
            series_terms: 60,
            tol: 1e-12,
        }
    }
}

/// Truncated theta series over `j in [-J, J-1]`.
///
/// Accurate when `|Im z| <= Im tau`; use [`theta_reduced`] for arbitrary arguments.
pub fn theta(z: C64, params: &EllipticParams) -> Result<C64> {
    let j_max = params.series_terms as i64;
    let i_pi = C64::new(0.0, std::f64::consts::PI);
    let shifted = z + 0.5;
    let mut sum = C64::zero();
    for j in -j_max..j_max {
        let h = j as f64 + 0.5;
        let e = i_pi * (h * h) * params.tau + i_pi * (2.0 * h) * shifted;
        if e.re > TERM_BOUND.ln() {
            return Err(Error::OutsideStrip(e.re.exp()));
        }
        sum += e.exp();
    }
    Ok(-sum)
}

/// Reduce `z` modulo the period lattice and apply the quasi-periodicity multiplier.
pub fn theta_reduced(z: C64, params: &EllipticParams) -> C64 {
    let (z0, m, n) = reduce(z, &params.tau);
    let base = theta(z0, params).expect("reduced argument lies in the strip");
    base * multiplier(z0, m, n, &params.tau)
}

/// Write `z = z0 + m + n*tau` with `z0` in the fundamental strip.
pub fn reduce(z: C64, tau: &C64) -> (C64, i64, i64) {
    let n = (z.im / tau.im).round();
    let z1 = z - tau * n;
    let m = z1.re.round();
    (z1 - m, m as i64, n as i64)
}

/// Factor `c` with `theta(z0 + m + n*tau) = c * theta(z0)`.
pub fn multiplier(z0: C64, m: i64, n: i64, tau: &C64) -> C64 {
    let sign = if (m + n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let nf = n as f64;
    let i_pi = C64::new(0.0, std::f64::consts::PI);
    let e = -i_pi * (nf * nf) * tau - i_pi * (2.0 * nf) * z0;
    e.exp() * sign
}

/// Exact number `constant + sum coeff * name`, measured in units of hbar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AffineShift {
    linear: BTreeMap<String, Rational64>,
    constant: Rational64,
}

impl AffineShift {
    pub fn zero() -> Self {
        AffineShift::default()
    }

    pub fn constant(c: Rational64) -> Self {
        AffineShift { linear: BTreeMap::new(), constant: c }
    }

    pub fn int(c: i64) -> Self {
        Self::constant(Rational64::from_integer(c))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Self::constant(Rational64::new(n, d))
    }

    pub fn half(n: i64) -> Self {
        Self::ratio(n, 2)
    }

    pub fn var(name: &str) -> Self {
        let mut linear = BTreeMap::new();
        linear.insert(name.to_string(), Rational64::from_integer(1));
        AffineShift { linear, constant: Rational64::zero() }
    }

    pub fn constant_part(&self) -> Rational64 {
        self.constant
    }

    pub fn linear_part(&self) -> &BTreeMap<String, Rational64> {
        &self.linear
    }

    pub fn is_constant(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.linear.is_empty() && self.constant.is_zero()
    }

    /// Same indeterminate part as `other`.
    pub fn same_class(&self, other: &AffineShift) -> bool {
        self.linear == other.linear
    }

    pub fn indeterminates(&self) -> impl Iterator<Item = &String> {
        self.linear.keys()
    }

    pub fn scale(&self, c: Rational64) -> Self {
        if c.is_zero() {
            return AffineShift::zero();
        }
        AffineShift {
            linear: self.linear.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
            constant: self.constant * c,
        }
    }

    /// Rename indeterminates through `f`.
    pub fn rename(&self, f: &dyn Fn(&str) -> String) -> Self {
        let mut out = AffineShift::constant(self.constant);
        for (k, v) in &self.linear {
            out = out + AffineShift::var(&f(k)).scale(*v);
        }
        out
    }

    /// Substitute indeterminates by shifts; missing names are kept.
    pub fn substitute(&self, map: &BTreeMap<String, AffineShift>) -> Self {
        let mut out = AffineShift::constant(self.constant);
        for (k, v) in &self.linear {
            let s = map.get(k).cloned().unwrap_or_else(|| AffineShift::var(k));
            out = out + s.scale(*v);
        }
        out
    }

    pub fn to_f64(&self) -> Option<f64> {
        if self.is_constant() {
            self.constant.to_f64()
        } else {
            None
        }
    }

    fn canonical(mut self) -> Self {
        self.linear.retain(|_, v| !v.is_zero());
        self
    }
}

impl Add for AffineShift {
    type Output = AffineShift;
    fn add(mut self, rhs: AffineShift) -> AffineShift {
        for (k, v) in rhs.linear {
            *self.linear.entry(k).or_insert_with(Rational64::zero) += v;
        }
        self.constant += rhs.constant;
        self.canonical()
    }
}

impl<'a> Add<&'a AffineShift> for &'a AffineShift {
    type Output = AffineShift;
    fn add(self, rhs: &AffineShift) -> AffineShift {
        self.clone() + rhs.clone()
    }
}

impl Neg for AffineShift {
    type Output = AffineShift;
    fn neg(self) -> AffineShift {
        self.scale(Rational64::from_integer(-1))
    }
}

impl Sub for AffineShift {
    type Output = AffineShift;
    fn sub(self, rhs: AffineShift) -> AffineShift {
        self + (-rhs)
    }
}

impl<'a> Sub<&'a AffineShift> for &'a AffineShift {
    type Output = AffineShift;
    fn sub(self, rhs: &AffineShift) -> AffineShift {
        self.clone() - rhs.clone()
    }
}

impl Mul<i64> for AffineShift {
    type Output = AffineShift;
    fn mul(self, rhs: i64) -> AffineShift {
        self.scale(Rational64::from_integer(rhs))
    }
}

impl Add<Rational64> for AffineShift {
    type Output = AffineShift;
    fn add(mut self, rhs: Rational64) -> AffineShift {
        self.constant += rhs;
        self
    }
}

fn fmt_rational(r: &Rational64) -> String {
    if r.is_integer() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for AffineShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        for (k, v) in &self.linear {
            let one = Rational64::from_integer(1);
            let term = if *v == one {
                k.clone()
            } else if *v == -one {
                format!("-{k}")
            } else {
                format!("{}*{k}", fmt_rational(v))
            };
            parts.push(term);
        }
        if !self.constant.is_zero() || parts.is_empty() {
            parts.push(fmt_rational(&self.constant));
        }
        let mut s = String::new();
        for (i, p) in parts.iter().enumerate() {
            if i > 0 && !p.starts_with('-') {
                s.push('+');
            }
            s.push_str(p);
        }
        write!(f, "{s}")
    }
}

fn parse_rational(s: &str) -> Result<Rational64> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| Error::Parse(format!("bad numerator in `{s}`")))?;
        let d: i64 = d.trim().parse().map_err(|_| Error::Parse(format!("bad denominator in `{s}`")))?;
        if d == 0 {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        Ok(Rational64::new(n, d))
    } else if s.contains('.') {
        let v: f64 = s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
        Rational64::approximate_float(v).ok_or_else(|| Error::Parse(format!("bad number `{s}`")))
    } else {
        let n: i64 = s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
        Ok(Rational64::from_integer(n))
    }
}

impl FromStr for AffineShift {
    type Err = Error;

    /// Parses sums like `k+3/2`, `-1/2`, `2*k-t`.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::Parse("empty shift".into()));
        }
        let mut terms = Vec::new();
        let mut cur = String::new();
        for (i, c) in s.chars().enumerate() {
            if (c == '+' || c == '-') && i > 0 {
                terms.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        terms.push(cur);
        let mut out = AffineShift::zero();
        for t in terms {
            let (sign, body) = match t.strip_prefix('-') {
                Some(b) => (-1, b.to_string()),
                None => (1, t.trim_start_matches('+').to_string()),
            };
            let sign = Rational64::from_integer(sign);
            if body.is_empty() {
                return Err(Error::Parse(format!("dangling sign in `{s}`")));
            }
            let is_name = |x: &str| x.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_');
            if let Some((coef, name)) = body.split_once('*') {
                if !is_name(name) {
                    return Err(Error::Parse(format!("bad term `{body}`")));
                }
                out = out + AffineShift::var(name).scale(parse_rational(coef)? * sign);
            } else if is_name(&body) {
                out = out + AffineShift::var(&body).scale(sign);
            } else {
                out = out + parse_rational(&body)? * sign;
            }
        }
        Ok(out)
    }
}

impl Serialize for AffineShift {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AffineShift {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type Assignment = BTreeMap<String, C64>;

/// `constant + sum coeff * value` as a complex number.
pub fn eval_shift(s: &AffineShift, assignment: &Assignment) -> Result<C64> {
    let mut v = C64::new(s.constant.to_f64().unwrap_or(f64::NAN), 0.0);
    for (k, c) in &s.linear {
        let x = assignment.get(k).ok_or_else(|| Error::MissingIndeterminate(k.clone()))?;
        v += x * c.to_f64().unwrap_or(f64::NAN);
    }
    Ok(v)
}

/// `theta(z + s*hbar)` for a constant shift.
pub fn theta_shift(z: C64, s: &AffineShift, assignment: &Assignment, params: &EllipticParams) -> Result<C64> {
    let v = eval_shift(s, assignment)?;
    Ok(theta_reduced(z + v * params.hbar, params))
}

/// Absolute value of a rational as f64, used for shift ordering diagnostics.
pub fn rational_abs(r: &Rational64) -> f64 {
    r.abs().to_f64().unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> EllipticParams {
        EllipticParams::default()
    }

    // Independent direct summation with an explicit loop over both signs of j.
    fn direct_series(z: C64, tau: C64, j: i64) -> C64 {
        let mut s = C64::zero();
        for k in 0..j {
            for h in [k as f64 + 0.5, -(k as f64) - 0.5] {
                let arg = C64::new(0.0, std::f64::consts::PI) * (h * h * tau + 2.0 * h * (z + 0.5));
                s += arg.exp();
            }
        }
        -s
    }

    #[test]
    fn theta_vanishes_at_origin() {
        assert!(theta(C64::zero(), &params()).unwrap().norm() < 1e-14);
    }

    #[test]
    fn antiperiodic_in_one() {
        let p = params();
        let z = C64::new(0.3, 0.1);
        let r = theta(z + 1.0, &p).unwrap() + theta(z, &p).unwrap();
        assert!(r.norm() < 1e-13);
    }

    #[test]
    fn truncations_agree() {
        let p = params();
        let z = C64::new(0.25, 0.0);
        let a = theta(z, &p.with_series_terms(50)).unwrap();
        let b = direct_series(z, p.tau, 200);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn reduced_matches_on_strip() {
        let p = params();
        let z = C64::new(0.2, 0.1);
        assert_eq!(theta_reduced(z, &p), theta(z, &p).unwrap());
    }

    #[test]
    fn reduced_tau_quasi_periodicity() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let z = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = theta_reduced(z + p.tau, &p);
            let i_pi = C64::new(0.0, std::f64::consts::PI);
            let rhs = -(-i_pi * p.tau - 2.0 * i_pi * z).exp() * theta_reduced(z, &p);
            assert!((lhs - rhs).norm() < 1e-11 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn reduced_against_high_order_series() {
        let p = params();
        let z0 = C64::new(0.1, 0.0);
        let z = z0 + 3.0 + p.tau * 2.0;
        let red = theta_reduced(z, &p);
        let expected = multiplier(z0, 3, 2, &p.tau) * theta(z0, &p).unwrap();
        assert!((red - expected).norm() < 1e-12 * expected.norm());
        let direct = direct_series(z, p.tau, 400);
        assert!((red - direct).norm() < 1e-10 * direct.norm());
    }

    #[test]
    fn overflow_guard_trips() {
        let p = params();
        let far = C64::new(0.0, 400.0);
        assert!(matches!(theta(far, &p), Err(Error::OutsideStrip(_))));
    }

    #[test]
    fn genericity_guard_rejects_lattice_hbar() {
        let tau = C64::new(0.0, 0.8);
        let bad = (C64::new(1.0, 0.0) + tau) / 3.0;
        assert!(EllipticParams::new(tau, bad, 60, 1e-10).is_err());
        assert!(EllipticParams::new(tau, C64::new(0.23, 0.11), 60, 1e-10).is_ok());
        assert!(EllipticParams::new(C64::new(0.1, -0.5), C64::new(0.23, 0.11), 60, 1e-10).is_err());
    }

    #[test]
    fn eval_shift_examples() {
        let mut a = Assignment::new();
        assert_eq!(eval_shift(&AffineShift::half(1), &a).unwrap(), C64::new(0.5, 0.0));
        a.insert("k".into(), C64::new(2.0, 0.0));
        let s: AffineShift = "k+3/2".parse().unwrap();
        assert_eq!(eval_shift(&s, &a).unwrap(), C64::new(3.5, 0.0));
        let mut b = Assignment::new();
        b.insert("k".into(), C64::new(1.25, 0.0));
        b.insert("t".into(), C64::new(0.25, 0.0));
        let s: AffineShift = "k-t".parse().unwrap();
        assert_eq!(eval_shift(&s, &b).unwrap(), C64::new(1.0, 0.0));
        assert!(matches!(eval_shift(&s, &a), Err(Error::MissingIndeterminate(_))));
    }

    #[test]
    fn shift_display_round_trip() {
        for text in ["0", "1/2", "k+3/2", "-k", "2*k-t+1", "-1/3*a"] {
            let s: AffineShift = text.parse().unwrap();
            let back: AffineShift = s.to_string().parse().unwrap();
            assert_eq!(s, back, "{text}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn shift() -> impl Strategy<Value = AffineShift> {
            (-20i64..20, 1i64..6, -5i64..5, -5i64..5).prop_map(|(n, d, a, b)| {
                AffineShift::ratio(n, d) + AffineShift::var("k") * a + AffineShift::var("t") * b
            })
        }

        proptest! {
            #[test]
            fn shifts_form_abelian_group(a in shift(), b in shift(), c in shift()) {
                prop_assert_eq!(&a + &b, &b + &a);
                prop_assert_eq!((&a + &b) + c.clone(), a.clone() + (&b + &c));
                prop_assert_eq!(&a - &a, AffineShift::zero());
                prop_assert_eq!(a.clone() + AffineShift::zero(), a.clone());
                prop_assert_eq!(a.clone() * 3, &(&a + &a) + &a);
                prop_assert!((&a - &a).linear_part().is_empty());
            }

            #[test]
            fn theta_is_odd(x in -1.5f64..1.5, y in -0.7f64..0.7) {
                let p = EllipticParams::default();
                let z = C64::new(x, y);
                let r = theta_reduced(z, &p) + theta_reduced(-z, &p);
                prop_assert!(r.norm() < 1e-12);
            }
        }
    }
}
