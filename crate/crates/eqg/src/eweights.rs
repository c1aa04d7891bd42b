//! E-weights as Psi-monomials and q-characters as their formal integer sums.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Rational64;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::cartan::{weight_depth, Weight};
use crate::error::{Error, Result};
use crate::theta::{eval_shift, theta_reduced, AffineShift, Assignment, EllipticParams, C64};

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// `ell_k = (N - k - 1)/2`.
pub fn ell(n: usize, k: usize) -> Rational64 {
    r(n as i64 - k as i64 - 1, 2)
}

/// A monomial in `Psi_{k,a}`, `1 <= k <= N`, with its weight.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EWeight {
    n: usize,
    psi: BTreeMap<(usize, AffineShift), i64>,
    weight: Weight,
}

/// Per-slot factors `(shift, exponent)` meaning `prod theta(z + shift*hbar)^exponent`.
pub type Slot = BTreeMap<AffineShift, i64>;

impl EWeight {
    pub fn unit(n: usize) -> Self {
        EWeight { n, psi: BTreeMap::new(), weight: Weight::zero(n) }
    }

    pub fn from_psi(n: usize, psi: BTreeMap<(usize, AffineShift), i64>) -> Result<Self> {
        let mut e = EWeight::unit(n);
        for ((k, s), x) in psi {
            e = e * EWeight::psi_pow(n, k, s, x)?;
        }
        Ok(e)
    }

    fn psi_pow(n: usize, k: usize, s: AffineShift, x: i64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::IndexOutOfRange(format!("level {k} for N={n}")));
        }
        let mut psi = BTreeMap::new();
        if x != 0 {
            psi.insert((k, s.clone()), x);
        }
        let weight = Weight::varpi(n, k).scale(&s).scale_int(x);
        Ok(EWeight { n, psi, weight })
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn psi_exponents(&self) -> &BTreeMap<(usize, AffineShift), i64> {
        &self.psi
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn is_unit(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn pow(&self, x: i64) -> Self {
        let psi = if x == 0 {
            BTreeMap::new()
        } else {
            self.psi.iter().map(|(k, v)| (k.clone(), v * x)).collect()
        };
        EWeight { n: self.n, psi, weight: self.weight.scale_int(x) }
    }

    pub fn inv(&self) -> Self {
        self.pow(-1)
    }

    /// Part of the monomial at the given levels.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        let psi: BTreeMap<_, _> = self.psi.iter().filter(|((k, _), _)| keep(*k)).map(|(k, v)| (k.clone(), *v)).collect();
        EWeight::from_psi(self.n, psi).expect("levels already validated")
    }

    pub fn indeterminates(&self) -> Vec<String> {
        let mut v: Vec<String> = self.psi.keys().flat_map(|(_, s)| s.indeterminates().cloned()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn map_shifts(&self, f: &dyn Fn(&AffineShift) -> AffineShift) -> Self {
        let mut e = EWeight::unit(self.n);
        for ((k, s), x) in &self.psi {
            e = e * EWeight::psi_pow(self.n, *k, f(s), *x).expect("level validated");
        }
        e
    }

    /// Slot `i` (1-based) collects `theta(z + (a - ell_k) hbar)` from every `Psi_{k,a}` with `k >= i`.
    pub fn components(&self) -> Vec<Slot> {
        let mut slots = vec![Slot::new(); self.n];
        for ((k, s), x) in &self.psi {
            let shift = s.clone() + (-ell(self.n, *k));
            for slot in slots.iter_mut().take(*k) {
                let e = slot.entry(shift.clone()).or_insert(0);
                *e += x;
                if *e == 0 {
                    slot.remove(&shift);
                }
            }
        }
        slots
    }

    /// Y-exponents at levels `< N` and the remaining level-N part.
    pub fn y_decompose(&self) -> Result<(BTreeMap<(usize, AffineShift), i64>, EWeight)> {
        let mut chains: BTreeMap<(usize, BTreeMap<String, Rational64>, Rational64), Vec<(Rational64, i64)>> = BTreeMap::new();
        for ((k, s), x) in &self.psi {
            if *k == self.n {
                continue;
            }
            let c = s.constant_part();
            let frac = c - c.floor();
            chains.entry((*k, s.linear_part().clone(), frac)).or_default().push((c, *x));
        }
        let mut ys = BTreeMap::new();
        for ((k, lin, _), mut pts) in chains {
            pts.sort();
            let base = {
                let mut b = AffineShift::zero();
                for (name, c) in &lin {
                    b = b + AffineShift::var(name).scale(*c);
                }
                b
            };
            let mut y = 0i64;
            for w in 0..pts.len() {
                let (c, x) = pts[w];
                y -= x;
                if w + 1 == pts.len() {
                    if y != 0 {
                        return Err(Error::NotYExpressible(format!("level {k} chain through {} has net exponent {}", base.clone() + c, -y)));
                    }
                    break;
                }
                if y != 0 {
                    let next = pts[w + 1].0;
                    let mut b = c + r(1, 2);
                    while b < next {
                        ys.insert((k, base.clone() + b), y);
                        b += Rational64::one();
                    }
                }
            }
        }
        Ok((ys, self.restrict(|k| k == self.n)))
    }

    /// Minimal-shift Y-factors at levels `< N` all carry negative exponents, per indeterminate class.
    pub fn is_right_negative(&self) -> Result<bool> {
        let (ys, _) = self.y_decompose()?;
        if ys.is_empty() {
            return Ok(false);
        }
        let mut min: BTreeMap<BTreeMap<String, Rational64>, Rational64> = BTreeMap::new();
        for (_, s) in ys.keys() {
            let c = s.constant_part();
            min.entry(s.linear_part().clone()).and_modify(|m| *m = (*m).min(c)).or_insert(c);
        }
        Ok(ys.iter().all(|((_, s), x)| s.constant_part() != min[s.linear_part()] || *x < 0))
    }

    pub fn is_dominant(&self) -> Result<bool> {
        let (ys, _) = self.y_decompose()?;
        Ok(ys.values().all(|x| *x >= 0))
    }

    /// Whether `self` is a product of `A_{i,a+m}^{-1}`, `m` in `Z/2`.
    pub fn in_q_minus(&self, a: &AffineShift) -> bool {
        let mut rest = self.clone();
        loop {
            let lower: Vec<(&(usize, AffineShift), &i64)> = rest.psi.iter().filter(|((k, _), _)| *k < rest.n).collect();
            if lower.is_empty() {
                return rest.is_unit();
            }
            if lower.iter().any(|((_, s), _)| !s.same_class(a)) {
                return false;
            }
            // The largest shift comes only from the Psi_{i,b+1} factors of the A_{i,b} with maximal b.
            let top = lower.iter().map(|((_, s), _)| s).max_by_key(|s| s.constant_part()).expect("nonempty").clone();
            let m = (top.clone() - a.clone()).constant_part() - Rational64::one();
            if !(m * 2).is_integer() {
                return false;
            }
            let peel: Vec<(usize, i64)> = lower.iter().filter(|((_, s), _)| *s == top).map(|((k, _), x)| (*k, **x)).collect();
            for (i, x) in peel {
                if x > 0 {
                    return false;
                }
                let b = top.clone() + (-Rational64::one());
                let a_pow = gen_a(rest.n, i, &b).expect("level < N").pow(-x);
                rest = rest * a_pow;
            }
        }
    }

    /// `f_N(z) f_{N-1}(z+hbar) ... f_{N-l+1}(z+(l-1)hbar)`.
    pub fn minor_value(&self, l: usize, z: C64, assignment: &Assignment, params: &EllipticParams) -> Result<C64> {
        if l == 0 || l > self.n {
            return Err(Error::IndexOutOfRange(format!("minor {l} for N={}", self.n)));
        }
        let comps = self.components();
        let mut v = C64::new(1.0, 0.0);
        for m in 0..l {
            let zm = z + params.hbar * m as f64;
            for (s, x) in &comps[self.n - 1 - m] {
                let t = theta_reduced(zm + eval_shift(s, assignment)? * params.hbar, params);
                if *x < 0 && t.norm() < crate::rmatrix::POLE_GUARD {
                    return Err(Error::Pole(format!("theta(z+({s})hbar) in slot {}", self.n - m)));
                }
                v *= t.powi(*x as i32);
            }
        }
        Ok(v)
    }
}

impl Mul for EWeight {
    type Output = EWeight;
    fn mul(mut self, rhs: EWeight) -> EWeight {
        assert_eq!(self.n, rhs.n, "e-weights of different rank");
        for (k, x) in rhs.psi {
            let e = self.psi.entry(k.clone()).or_insert(0);
            *e += x;
            if *e == 0 {
                self.psi.remove(&k);
            }
        }
        self.weight = self.weight + rhs.weight;
        self
    }
}

impl<'a> Mul<&'a EWeight> for &'a EWeight {
    type Output = EWeight;
    fn mul(self, rhs: &EWeight) -> EWeight {
        self.clone() * rhs.clone()
    }
}

impl fmt::Display for EWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.psi.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .psi
            .iter()
            .map(|((k, s), x)| if *x == 1 { format!("Psi[{k},{s}]") } else { format!("Psi[{k},{s}]^{x}") })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[derive(Serialize, Deserialize)]
struct EWeightRepr {
    n: usize,
    psi: Vec<(usize, AffineShift, i64)>,
}

impl Serialize for EWeight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EWeightRepr { n: self.n, psi: self.psi.iter().map(|((k, a), x)| (*k, a.clone(), *x)).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EWeight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rep = EWeightRepr::deserialize(d)?;
        let mut psi = BTreeMap::new();
        for (k, a, x) in rep.psi {
            *psi.entry((k, a)).or_insert(0) += x;
        }
        psi.retain(|_, x| *x != 0);
        EWeight::from_psi(rep.n, psi).map_err(serde::de::Error::custom)
    }
}

pub fn gen_psi(n: usize, k: usize, s: &AffineShift) -> Result<EWeight> {
    EWeight::psi_pow(n, k, s.clone(), 1)
}

/// `Y_{k,a} = Psi_{k,a+1/2} / Psi_{k,a-1/2}`; `Y_{0,a} = 1`.
pub fn gen_y(n: usize, k: usize, s: &AffineShift) -> Result<EWeight> {
    if k == 0 {
        return Ok(EWeight::unit(n));
    }
    Ok(EWeight::psi_pow(n, k, s.clone() + r(1, 2), 1)? * EWeight::psi_pow(n, k, s.clone() + r(-1, 2), -1)?)
}

/// `A_{i,a} = prod_j Psi_{j,a+c_ij/2} / Psi_{j,a-c_ij/2}` over `j = 1..N`.
pub fn gen_a(n: usize, i: usize, s: &AffineShift) -> Result<EWeight> {
    if i == 0 || i >= n {
        return Err(Error::IndexOutOfRange(format!("A index {i} for N={n}")));
    }
    let mut e = EWeight::psi_pow(n, i, s.clone() + Rational64::one(), 1)? * EWeight::psi_pow(n, i, s.clone() - AffineShift::int(1), -1)?;
    for j in [i - 1, i + 1] {
        if j >= 1 && j <= n {
            e = e * EWeight::psi_pow(n, j, s.clone() + r(-1, 2), 1)? * EWeight::psi_pow(n, j, s.clone() + r(1, 2), -1)?;
        }
    }
    Ok(e)
}

/// `box_{k,a} = Y_{k,a+ell_k+1/2} / Y_{k-1,a+ell_k}`.
pub fn gen_box(n: usize, k: usize, s: &AffineShift) -> Result<EWeight> {
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange(format!("box {k} for N={n}")));
    }
    let l = ell(n, k);
    Ok(gen_y(n, k, &(s.clone() + l + r(1, 2)))? * gen_y(n, k - 1, &(s.clone() + l))?.inv())
}

/// Formal integer combination of e-weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QCharacter {
    n: usize,
    terms: BTreeMap<EWeight, i64>,
    anchor: Option<Weight>,
    depth_limit: Option<u32>,
}

impl QCharacter {
    pub fn zero(n: usize) -> Self {
        QCharacter { n, terms: BTreeMap::new(), anchor: None, depth_limit: None }
    }

    pub fn one(n: usize) -> Self {
        QCharacter::monomial(EWeight::unit(n))
    }

    pub fn monomial(e: EWeight) -> Self {
        let mut q = QCharacter::zero(e.rank());
        q.add_term(e, 1);
        q
    }

    /// Keeps only terms within `limit` alpha-depth below `anchor`, now and after products.
    pub fn with_truncation(mut self, anchor: Weight, limit: u32) -> Self {
        self.anchor = Some(anchor);
        self.depth_limit = Some(limit);
        self.truncate();
        self
    }

    fn truncate(&mut self) {
        if let (Some(anchor), Some(limit)) = (&self.anchor, self.depth_limit) {
            self.terms.retain(|e, _| weight_depth(e.weight(), anchor).map(|d| d.depth() <= limit).unwrap_or(false));
        }
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<EWeight, i64> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_multiplicity(&self) -> i64 {
        self.terms.values().sum()
    }

    pub fn coefficient(&self, e: &EWeight) -> i64 {
        self.terms.get(e).copied().unwrap_or(0)
    }

    pub fn add_term(&mut self, e: EWeight, c: i64) {
        if c == 0 {
            return;
        }
        let v = self.terms.entry(e.clone()).or_insert(0);
        *v += c;
        if *v == 0 {
            self.terms.remove(&e);
        }
    }

    pub fn scale(&self, c: i64) -> Self {
        let mut q = QCharacter { terms: BTreeMap::new(), ..self.clone() };
        for (e, x) in &self.terms {
            q.add_term(e.clone(), x * c);
        }
        q
    }

    pub fn mul_monomial(&self, m: &EWeight) -> Self {
        let mut q = QCharacter { terms: BTreeMap::new(), ..self.clone() };
        for (e, x) in &self.terms {
            q.add_term(e * m, *x);
        }
        if let Some(a) = &q.anchor {
            q.anchor = Some(a.clone() + m.weight().clone());
        }
        q
    }

    pub fn map_shifts(&self, f: &dyn Fn(&AffineShift) -> AffineShift) -> Self {
        let mut q = QCharacter { terms: BTreeMap::new(), ..self.clone() };
        for (e, x) in &self.terms {
            q.add_term(e.map_shifts(f), *x);
        }
        q
    }

    pub fn all_nonnegative(&self) -> bool {
        self.terms.values().all(|c| *c > 0)
    }

    pub fn dominant_terms(&self) -> Result<Vec<EWeight>> {
        let mut out = Vec::new();
        for e in self.terms.keys() {
            if e.is_dominant()? {
                out.push(e.clone());
            }
        }
        Ok(out)
    }

    /// Sum of `c * minor_value(e, l, z)` over the terms whose weight equals `weight`.
    pub fn minor_trace(&self, weight: &Weight, l: usize, z: C64, assignment: &Assignment, params: &EllipticParams) -> Result<C64> {
        let mut s = C64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            if e.weight() == weight {
                s += e.minor_value(l, z, assignment, params)? * *c as f64;
            }
        }
        Ok(s)
    }

    /// Distinct weights appearing.
    pub fn weights(&self) -> Vec<Weight> {
        let mut w: Vec<Weight> = self.terms.keys().map(|e| e.weight().clone()).collect();
        w.sort();
        w.dedup();
        w
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("q-character serializes")
    }
}

impl Add for QCharacter {
    type Output = QCharacter;
    fn add(mut self, rhs: QCharacter) -> QCharacter {
        assert_eq!(self.n, rhs.n, "q-characters of different rank");
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self.truncate();
        self
    }
}

impl Neg for QCharacter {
    type Output = QCharacter;
    fn neg(self) -> QCharacter {
        self.scale(-1)
    }
}

impl Sub for QCharacter {
    type Output = QCharacter;
    fn sub(self, rhs: QCharacter) -> QCharacter {
        self + (-rhs)
    }
}

impl<'a> Mul<&'a QCharacter> for &'a QCharacter {
    type Output = QCharacter;
    fn mul(self, rhs: &QCharacter) -> QCharacter {
        assert_eq!(self.n, rhs.n, "q-characters of different rank");
        let anchor = match (&self.anchor, &rhs.anchor) {
            (Some(a), Some(b)) => Some(a.clone() + b.clone()),
            _ => None,
        };
        let depth_limit = match (self.depth_limit, rhs.depth_limit) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let mut q = QCharacter { n: self.n, terms: BTreeMap::new(), anchor, depth_limit };
        for (e, x) in &self.terms {
            for (f, y) in &rhs.terms {
                q.add_term(e * f, x * y);
            }
        }
        q.truncate();
        q
    }
}

impl Mul for QCharacter {
    type Output = QCharacter;
    fn mul(self, rhs: QCharacter) -> QCharacter {
        &self * &rhs
    }
}

impl fmt::Display for QCharacter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| if *c == 1 { format!("{e}") } else { format!("{c}*({e})") })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[derive(Serialize, Deserialize)]
struct QCharacterRepr {
    n: usize,
    terms: Vec<(EWeight, i64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<Weight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth_limit: Option<u32>,
}

impl Serialize for QCharacter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QCharacterRepr {
            n: self.n,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), *c)).collect(),
            anchor: self.anchor.clone(),
            depth_limit: self.depth_limit,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QCharacter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rep = QCharacterRepr::deserialize(d)?;
        let mut q = QCharacter { n: rep.n, terms: BTreeMap::new(), anchor: rep.anchor, depth_limit: rep.depth_limit };
        for (e, c) in rep.terms {
            if e.rank() != rep.n {
                return Err(serde::de::Error::custom("term rank differs from q-character rank"));
            }
            q.add_term(e, c);
        }
        Ok(q)
    }
}
