//! Grothendieck-ring identities checked exactly on q-characters: T-systems, Demazure-type
//! classes, Baxter expansions and asymptotic TQ relations.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul};
use std::time::{Duration, Instant};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eweights::{gen_a, gen_psi, EWeight, QCharacter};
use crate::tableaux::qchar_kr;
use crate::theta::AffineShift;

/// Exponents of the opaque factors `Omega_{s,x}`, `1 <= s < N`.
pub type OmegaKey = BTreeMap<(usize, AffineShift), i64>;

/// A finite sum of `q-character x prod Omega_{s,x}^{e}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormalClass {
    n: usize,
    parts: BTreeMap<OmegaKey, QCharacter>,
}

impl FormalClass {
    pub fn zero(n: usize) -> Self {
        FormalClass { n, parts: BTreeMap::new() }
    }

    pub fn from_qchar(q: QCharacter) -> Self {
        FormalClass::with_omega(q, OmegaKey::new())
    }

    pub fn with_omega(q: QCharacter, key: OmegaKey) -> Self {
        let mut f = FormalClass::zero(q.rank());
        f.insert(key, q);
        f
    }

    /// `Omega_{s,x}`; the level-N factor is the unit.
    pub fn omega(n: usize, s: usize, x: &AffineShift) -> Self {
        let mut key = OmegaKey::new();
        if s < n {
            key.insert((s, x.clone()), 1);
        }
        FormalClass::with_omega(QCharacter::one(n), key)
    }

    fn insert(&mut self, key: OmegaKey, q: QCharacter) {
        let merged = match self.parts.remove(&key) {
            Some(old) => old + q,
            None => q,
        };
        if !merged.is_empty() {
            self.parts.insert(key, merged);
        }
    }

    pub fn parts(&self) -> &BTreeMap<OmegaKey, QCharacter> {
        &self.parts
    }

    pub fn omega_keys(&self) -> Vec<OmegaKey> {
        self.parts.keys().cloned().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    /// The finite part when exactly one Omega-key occurs.
    pub fn single_part(&self) -> Result<(OmegaKey, QCharacter)> {
        match self.parts.len() {
            0 => Ok((OmegaKey::new(), QCharacter::zero(self.n))),
            1 => {
                let (k, q) = self.parts.iter().next().expect("one part");
                Ok((k.clone(), q.clone()))
            }
            m => Err(Error::OmegaMismatch(format!("{m} distinct opaque factors"))),
        }
    }
}

fn merge_keys(a: &OmegaKey, b: &OmegaKey) -> OmegaKey {
    let mut k = a.clone();
    for (g, e) in b {
        let v = k.entry(g.clone()).or_insert(0);
        *v += e;
        if *v == 0 {
            k.remove(g);
        }
    }
    k
}

impl Add for FormalClass {
    type Output = FormalClass;
    fn add(mut self, rhs: FormalClass) -> FormalClass {
        for (k, q) in rhs.parts {
            self.insert(k, q);
        }
        self
    }
}

impl<'a> Mul<&'a FormalClass> for &'a FormalClass {
    type Output = FormalClass;
    fn mul(self, rhs: &FormalClass) -> FormalClass {
        let mut out = FormalClass::zero(self.n);
        for (ka, qa) in &self.parts {
            for (kb, qb) in &rhs.parts {
                out.insert(merge_keys(ka, kb), qa * qb);
            }
        }
        out
    }
}

impl fmt::Display for FormalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .parts
            .iter()
            .map(|(k, q)| {
                let om: Vec<String> = k.iter().map(|((s, x), e)| format!("Omega[{s},{x}]^{e}")).collect();
                format!("[{q}] {}", om.join(" "))
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

fn shift(a: &AffineShift, c: Rational64) -> AffineShift {
    a.clone() + c
}

fn half(n: i64) -> Rational64 {
    Rational64::new(n, 2)
}

fn int(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

/// Neighbours `s = r +- 1` inside `1..=N`; the level-N neighbour carries the one-dimensional Psi_N.
pub fn neighbours(n: usize, r: usize) -> Vec<usize> {
    [r.wrapping_sub(1), r + 1].into_iter().filter(|&s| s >= 1 && s <= n).collect()
}

/// `w^{(r)}_{k,a} = Psi_{r,a+k} / Psi_{r,a}`.
pub fn kr_weight(n: usize, r: usize, k: &AffineShift, a: &AffineShift) -> Result<EWeight> {
    Ok(gen_psi(n, r, &(a + k))? * gen_psi(n, r, a)?.inv())
}

/// `d^{(r,t)}_{k,a} = Psi_{r,a+t}/Psi_{r,a} * prod_{s=r+-1} Psi_{s,a-1/2}/Psi_{s,a-1/2-k}`.
pub fn demazure_weight(n: usize, r: usize, k: &AffineShift, a: &AffineShift, t: &AffineShift) -> Result<EWeight> {
    if r == 0 || r >= n {
        return Err(Error::IndexOutOfRange(format!("node {r} for N={n}")));
    }
    let mut d = kr_weight(n, r, t, a)?;
    let base = shift(a, half(-1));
    for s in neighbours(n, r) {
        d = d * gen_psi(n, s, &base)? * gen_psi(n, s, &(base.clone() - k.clone()))?.inv();
    }
    Ok(d)
}

/// `A_{r,a}^{-1} A_{r,a+1}^{-1} ... A_{r,a+l-1}^{-1}`.
pub fn a_chain(n: usize, r: usize, a: &AffineShift, l: usize) -> Result<EWeight> {
    let mut e = EWeight::unit(n);
    for j in 0..l {
        e = e * gen_a(n, r, &shift(a, int(j as i64)))?.inv();
    }
    Ok(e)
}

/// Exact-arithmetic budget for ring checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_terms: usize,
    pub max_seconds: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_terms: 200_000, max_seconds: 10.0 }
    }
}

struct Clock {
    start: Instant,
    budget: Budget,
}

impl Clock {
    fn new(budget: Budget) -> Self {
        Clock { start: Instant::now(), budget }
    }

    fn check(&self, q: &QCharacter, what: &str) -> Result<()> {
        if q.len() > self.budget.max_terms {
            return Err(Error::Budget(format!("{what}: {} terms exceed {}", q.len(), self.budget.max_terms)));
        }
        if self.start.elapsed() > Duration::from_secs_f64(self.budget.max_seconds) {
            return Err(Error::Budget(format!("{what}: time limit {}s", self.budget.max_seconds)));
        }
        Ok(())
    }
}

fn kr(n: usize, r: usize, k: i64, a: i64, clock: &Clock) -> Result<QCharacter> {
    let q = if k < 0 { QCharacter::zero(n) } else { qchar_kr(r, k as usize, &AffineShift::half(a), n)? };
    clock.check(&q, "KR q-character")?;
    Ok(q)
}

fn kr_product(n: usize, r: usize, (k1, a1): (i64, i64), (k2, a2): (i64, i64), clock: &Clock) -> Result<QCharacter> {
    let q = &kr(n, r, k1, a1, clock)? * &kr(n, r, k2, a2, clock)?;
    clock.check(&q, "KR product")?;
    Ok(q)
}

/// Result of one T-system check; shifts `a` are in half-units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TSystemReport {
    pub n: usize,
    pub r: usize,
    pub k: usize,
    pub t: usize,
    pub d_qchar: QCharacter,
    pub d_terms: usize,
    pub expected_leading: EWeight,
    pub dominant_terms: Vec<EWeight>,
    pub nonnegative: bool,
    pub leading_ok: bool,
    pub chain_ok: bool,
    pub factorization_ok: Option<bool>,
    pub demazure_tsystem_ok: bool,
    pub ok: bool,
}

/// Checks `[D^{(r,t)}_{k,k+1}] = [W_{k+t,1}][W_{k,0}] - [W_{k-1,1}][W_{k+t+1,0}]` and its consequences.
pub fn tsystem_check(n: usize, r: usize, k: usize, t: usize, budget: Budget) -> Result<TSystemReport> {
    if r == 0 || r >= n || k == 0 {
        return Err(Error::IndexOutOfRange(format!("N={n} r={r} k={k}")));
    }
    let clock = Clock::new(budget);
    let (ki, ti) = (k as i64, t as i64);
    // Shifts in half-units: a = 1 is passed as 2.
    let d = kr_product(n, r, (ki + ti, 2), (ki, 0), &clock)? - kr_product(n, r, (ki - 1, 2), (ki + ti + 1, 0), &clock)?;
    clock.check(&d, "D class")?;
    let a = AffineShift::int(ki + 1);
    let expected = demazure_weight(n, r, &AffineShift::int(ki), &a, &AffineShift::int(ti))?;
    let dominant = d.dominant_terms()?;
    let nonnegative = d.all_nonnegative();
    let leading_ok = dominant.len() == 1 && dominant[0] == expected && d.coefficient(&expected) == 1;
    let mut chain_ok = true;
    for l in 1..=t {
        chain_ok &= d.coefficient(&(&expected * &a_chain(n, r, &a, l)?)) > 0;
    }
    let factorization_ok = if t == 0 {
        let half = AffineShift::half(1);
        let f = &qchar_kr(r - 1, k, &half, n)? * &qchar_kr(r + 1, k, &half, n)?;
        Some(f == d)
    } else {
        None
    };
    let demazure_tsystem_ok = demazure_tsystem(n, r, k, t, &clock)?;
    let ok = nonnegative && leading_ok && chain_ok && factorization_ok.unwrap_or(true) && demazure_tsystem_ok;
    Ok(TSystemReport {
        n,
        r,
        k,
        t,
        d_terms: d.len(),
        d_qchar: d,
        expected_leading: expected,
        dominant_terms: dominant,
        nonnegative,
        leading_ok,
        chain_ok,
        factorization_ok,
        demazure_tsystem_ok,
        ok,
    })
}

/// `[D^{(r,t+1)}_{k,k}][W_{k+t,0}] = [D^{(r,0)}_{k+t+1,k+t+1}][W_{k-1,0}] + [D^{(r,t)}_{k,k}][W_{k+t+1,0}]`
/// with each D written through KR products at spectral shifts 0 and -1.
fn demazure_tsystem(n: usize, r: usize, k: usize, t: usize, clock: &Clock) -> Result<bool> {
    let (k, t) = (k as i64, t as i64);
    let d = |kk: i64, tt: i64| -> Result<QCharacter> {
        Ok(kr_product(n, r, (kk + tt, 0), (kk, -2), clock)? - kr_product(n, r, (kk - 1, 0), (kk + tt + 1, -2), clock)?)
    };
    let lhs = &d(k, t + 1)? * &kr(n, r, k + t, 0, clock)?;
    let rhs = &d(k + t + 1, 0)? * &kr(n, r, k - 1, 0, clock)? + &d(k, t)? * &kr(n, r, k + t + 1, 0, clock)?;
    clock.check(&lhs, "Demazure T-system")?;
    Ok(lhs == rhs)
}

/// One term of a Baxter expansion: `coefficient * r0 * prod (Psi_{r,x}/Psi_{r,y})^m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaxterTerm {
    pub coefficient: i64,
    pub r0: EWeight,
    pub ratios: Vec<((usize, AffineShift, AffineShift), i64)>,
}

impl BaxterTerm {
    pub fn ratio_map(&self) -> BTreeMap<(usize, AffineShift, AffineShift), i64> {
        self.ratios.iter().cloned().collect()
    }

    pub fn recombine(&self) -> Result<EWeight> {
        let n = self.r0.rank();
        let mut e = self.r0.clone();
        for ((r, x, y), m) in &self.ratios {
            e = e * (gen_psi(n, *r, x)? * gen_psi(n, *r, y)?.inv()).pow(*m);
        }
        Ok(e)
    }
}

/// Splits each e-weight into its level-N part and ratios `Psi_{r,x}/Psi_{r,y}`, pairing
/// positive shifts in descending order with negative shifts in descending order.
pub fn baxter_expand(q: &QCharacter) -> Result<Vec<BaxterTerm>> {
    let n = q.rank();
    let mut out = Vec::new();
    for (e, c) in q.terms() {
        let r0 = e.restrict(|k| k == n);
        let mut ratios: BTreeMap<(usize, AffineShift, AffineShift), i64> = BTreeMap::new();
        for r in 1..n {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for ((k, s), x) in e.psi_exponents() {
                if *k != r {
                    continue;
                }
                let bucket = if *x > 0 { &mut pos } else { &mut neg };
                for _ in 0..x.unsigned_abs() {
                    bucket.push(s.clone());
                }
            }
            if pos.len() != neg.len() {
                return Err(Error::Unbalanced(format!("level {r} of {e}: {} vs {}", pos.len(), neg.len())));
            }
            pos.sort_by(|a, b| b.cmp(a));
            neg.sort_by(|a, b| b.cmp(a));
            for (x, y) in pos.into_iter().zip(neg) {
                *ratios.entry((r, x, y)).or_insert(0) += 1;
            }
        }
        out.push(BaxterTerm { coefficient: *c, r0, ratios: ratios.into_iter().collect() });
    }
    Ok(out)
}

pub fn baxter_recombine(n: usize, terms: &[BaxterTerm]) -> Result<QCharacter> {
    let mut q = QCharacter::zero(n);
    for t in terms {
        q.add_term(t.recombine()?, t.coefficient);
    }
    Ok(q)
}

/// `qc(D^{(r,t)}_{k,a}) = d (1 + sum_{l<=t} A-chain) prod_{s=r+-1} Omega_{s,a-k-1/2}`.
pub fn asymptotic_demazure_class(n: usize, r: usize, k: &AffineShift, a: &AffineShift, t: usize) -> Result<FormalClass> {
    let d = demazure_weight(n, r, k, a, &AffineShift::int(t as i64))?;
    let mut q = QCharacter::one(n);
    for l in 1..=t {
        q.add_term(a_chain(n, r, a, l)?, 1);
    }
    let q = q.mul_monomial(&d);
    let mut f = FormalClass::from_qchar(q);
    let x = a.clone() - k.clone() + half(-1);
    for s in neighbours(n, r) {
        f = &f * &FormalClass::omega(n, s, &x);
    }
    Ok(f)
}

/// `qc(CW^{(r)}_{d,x}) = w_{d,x} Omega_{r,x}`.
pub fn asymptotic_kr_class(n: usize, r: usize, d: &AffineShift, x: &AffineShift) -> Result<FormalClass> {
    let w = kr_weight(n, r, d, x)?;
    Ok(&FormalClass::from_qchar(QCharacter::monomial(w)) * &FormalClass::omega(n, r, x))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticTqReport {
    pub n: usize,
    pub r: usize,
    pub t: usize,
    pub indeterminates: [String; 3],
    pub lhs_terms: usize,
    pub rhs_terms: usize,
    pub omega_key: Vec<((usize, AffineShift), i64)>,
    pub omega_cancel: bool,
    pub ok: bool,
}

/// `[D^{(r,t)}_{k,a}][CW_{a-b+t-1,b}] = [D^{(r,0)}_{k+t,a+t}][CW_{a-b-1,b}] + [D^{(r,t-1)}_{k,a}][CW_{a-b+t,b}]`
/// with `k, a, b` indeterminates named by `names`.
pub fn asymptotic_tq_check_named(n: usize, r: usize, t: usize, names: [&str; 3]) -> Result<AsymptoticTqReport> {
    if r == 0 || r >= n || t == 0 {
        return Err(Error::IndexOutOfRange(format!("N={n} r={r} t={t}")));
    }
    let k = AffineShift::var(names[0]);
    let a = AffineShift::var(names[1]);
    let b = AffineShift::var(names[2]);
    let ti = t as i64;
    let amb = a.clone() - b.clone();
    let lhs = &asymptotic_demazure_class(n, r, &k, &a, t)? * &asymptotic_kr_class(n, r, &shift(&amb, int(ti - 1)), &b)?;
    let rhs1 = &asymptotic_demazure_class(n, r, &shift(&k, int(ti)), &shift(&a, int(ti)), 0)? * &asymptotic_kr_class(n, r, &shift(&amb, int(-1)), &b)?;
    let rhs2 = &asymptotic_demazure_class(n, r, &k, &a, t - 1)? * &asymptotic_kr_class(n, r, &shift(&amb, int(ti)), &b)?;
    // Every term must carry the same opaque factor, so that it divides out.
    let (kl, ql) = lhs.single_part()?;
    let (k1, _) = rhs1.single_part()?;
    let (k2, _) = rhs2.single_part()?;
    if kl != k1 || kl != k2 {
        return Err(Error::OmegaMismatch(format!("opaque factors differ: {lhs} vs {rhs1} + {rhs2}")));
    }
    let rhs = rhs1 + rhs2;
    let (_, qr) = rhs.single_part()?;
    Ok(AsymptoticTqReport {
        n,
        r,
        t,
        indeterminates: names.map(|s| s.to_string()),
        lhs_terms: ql.len(),
        rhs_terms: qr.len(),
        omega_key: kl.into_iter().collect(),
        omega_cancel: true,
        ok: ql == qr,
    })
}

pub fn asymptotic_tq_check(n: usize, r: usize, t: usize) -> Result<AsymptoticTqReport> {
    asymptotic_tq_check_named(n, r, t, ["k", "a", "b"])
}

/// Warning text when a numeric `k` is non-generic (lies in `Z/2`).
pub fn genericity_warning(k: &AffineShift) -> Option<String> {
    if !k.is_constant() {
        return None;
    }
    let twice = k.constant_part() * int(2);
    twice.is_integer().then(|| format!("k = {k} lies in Z/2; the asymptotic identities assume generic k"))
}

/// For N = 2: `d^{(1,1)}_{k,0} (1 + A_{1,0}^{-1})` divided by `qc(W^{(1)}_{1,0})`, a one-dimensional level-2 class.
pub fn sl2_tq_module_factor(k: &AffineShift) -> Result<EWeight> {
    let zero = AffineShift::zero();
    let d = demazure_weight(2, 1, k, &zero, &AffineShift::int(1))?;
    let mut q = QCharacter::one(2);
    q.add_term(gen_a(2, 1, &zero)?.inv(), 1);
    let lhs = q.mul_monomial(&d);
    let w = qchar_kr(1, 1, &zero, 2)?;
    let ratio = d * kr_weight(2, 1, &AffineShift::int(1), &zero)?.inv();
    if lhs != w.mul_monomial(&ratio) {
        return Err(Error::Mismatch("two-dimensional class is not a twist of W_{1,0}".into()));
    }
    Ok(ratio)
}
