//! Partitions, Young tableaux and the tableau-sum q-characters of evaluation and KR modules.
//!
//! Box `(i, j)` sits in row `i` counted from the bottom and column `j` counted from the right.
//! Drawn with the diagram flush to the upper right, entries weakly increase along rows from left
//! to right and strictly increase down columns; in `(i, j)` terms that is
//! `T(i, j) >= T(i, j+1)` and `T(i, j) > T(i+1, j)`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eweights::{ell, gen_box, EWeight, QCharacter};
use crate::theta::AffineShift;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    parts: Vec<usize>,
}

impl Partition {
    /// Pads `parts` with zeros to length `n`.
    pub fn new(parts: &[usize], n: usize) -> Result<Self> {
        let trimmed: Vec<usize> = parts.to_vec();
        let nonzero = trimmed.iter().filter(|&&x| x > 0).count();
        if nonzero > n || trimmed.iter().skip(n).any(|&x| x > 0) {
            return Err(Error::IndexOutOfRange(format!("partition {parts:?} has more than {n} parts")));
        }
        if trimmed.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParams(format!("partition {parts:?} is not weakly decreasing")));
        }
        let mut p: Vec<usize> = trimmed.into_iter().take(n).collect();
        p.resize(n, 0);
        Ok(Partition { parts: p })
    }

    /// `k` columns of height `r`.
    pub fn rectangle(r: usize, k: usize, n: usize) -> Result<Self> {
        if r > n {
            return Err(Error::IndexOutOfRange(format!("rectangle height {r} for N={n}")));
        }
        Partition::new(&vec![k; r], n)
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn rank(&self) -> usize {
        self.parts.len()
    }

    pub fn size(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Height of column `j` (1-based).
    pub fn column_height(&self, j: usize) -> usize {
        self.parts.iter().filter(|&&m| m >= j).count()
    }

    /// Boxes in reading order: rows from the top down, each from left (large `j`) to right.
    pub fn reading_order(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.size());
        for i in (1..=self.parts.len()).rev() {
            for j in (1..=self.parts[i - 1]).rev() {
                out.push((i, j));
            }
        }
        out
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tableau {
    pub shape: Partition,
    pub entries: BTreeMap<(usize, usize), usize>,
}

impl Tableau {
    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn reading_word(&self) -> Vec<usize> {
        self.shape.reading_order().into_iter().map(|c| self.entries[&c]).collect()
    }

    pub fn is_valid(&self, n: usize) -> bool {
        self.entries.iter().all(|(&(i, j), &t)| {
            let height = self.shape.column_height(j);
            (1..=n).contains(&t)
                // Counting rows from the top of the column, entries dominate their row index.
                && t > height - i
                && self.get(i, j + 1).is_none_or(|u| t >= u)
                && self.get(i + 1, j).is_none_or(|u| t > u)
        }) && self.entries.len() == self.shape.size()
    }

    /// `prod box_{T(i,j), a+j-i}`.
    pub fn monomial(&self, a: &AffineShift) -> Result<EWeight> {
        let n = self.shape.rank();
        let mut e = EWeight::unit(n);
        for (&(i, j), &t) in &self.entries {
            e = e * gen_box(n, t, &(a.clone() + Rational64::from_integer(j as i64 - i as i64)))?;
        }
        Ok(e)
    }
}

impl fmt::Display for Tableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.shape.parts.first().copied().unwrap_or(0);
        let mut rows = Vec::new();
        for i in (1..=self.shape.rank()).rev() {
            let m = self.shape.parts[i - 1];
            if m == 0 {
                continue;
            }
            let mut row = " ".repeat(width - m);
            for j in (1..=m).rev() {
                row.push_str(&self.entries[&(i, j)].to_string());
            }
            rows.push(row);
        }
        write!(f, "{}", rows.join("/"))
    }
}

/// All tableaux of shape `mu` with letters `1..=N`, in lexicographic order of reading words.
pub fn enumerate_tableaux(mu: &Partition, n: usize) -> Result<Vec<Tableau>> {
    if mu.rank() != n {
        return Err(Error::Mismatch(format!("partition of rank {} for N={n}", mu.rank())));
    }
    let cells = mu.reading_order();
    let mut out = Vec::new();
    let mut cur = BTreeMap::new();
    fill(mu, n, &cells, 0, &mut cur, &mut out);
    Ok(out)
}

fn fill(mu: &Partition, n: usize, cells: &[(usize, usize)], at: usize, cur: &mut BTreeMap<(usize, usize), usize>, out: &mut Vec<Tableau>) {
    if at == cells.len() {
        out.push(Tableau { shape: mu.clone(), entries: cur.clone() });
        return;
    }
    let (i, j) = cells[at];
    let lo = [cur.get(&(i + 1, j)).map_or(1, |u| u + 1), cur.get(&(i, j + 1)).copied().unwrap_or(1)]
        .into_iter()
        .max()
        .unwrap_or(1);
    // The i-1 boxes below need strictly larger letters.
    let hi = n + 1 - i;
    for t in lo..=hi {
        cur.insert((i, j), t);
        fill(mu, n, cells, at + 1, cur, out);
    }
    cur.remove(&(i, j));
}

/// `sum_T prod box_{T(i,j), a+j-i}`.
pub fn qchar_evaluation(mu: &Partition, a: &AffineShift, n: usize) -> Result<QCharacter> {
    let mut q = QCharacter::zero(n);
    for t in enumerate_tableaux(mu, n)? {
        q.add_term(t.monomial(a)?, 1);
    }
    Ok(q)
}

/// q-character of `W^{(r)}_{k,a} = S_{k varpi_r, a - ell_r}`; `r = 0` gives the unit and `r = N` a one-dimensional class.
pub fn qchar_kr(r: usize, k: usize, a: &AffineShift, n: usize) -> Result<QCharacter> {
    if r > n {
        return Err(Error::IndexOutOfRange(format!("KR node {r} for N={n}")));
    }
    if r == 0 {
        return Ok(QCharacter::one(n));
    }
    qchar_evaluation(&Partition::rectangle(r, k, n)?, &(a.clone() - AffineShift::constant(ell(n, r))), n)
}

/// Number of semistandard tableaux via the hook-content formula.
pub fn hook_content_count(mu: &Partition, n: usize) -> u128 {
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 1..=mu.rank() {
        for j in 1..=mu.parts[i - 1] {
            let arm = mu.parts[i - 1] - j;
            let leg = mu.column_height(j) - i;
            num *= (n as i64 + j as i64 - i as i64) as u128;
            den *= (arm + leg + 1) as u128;
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eweights::{gen_a, gen_psi, gen_y};
    use proptest::prelude::*;

    fn a0() -> AffineShift {
        AffineShift::var("a")
    }

    #[test]
    fn sl3_shape_21() {
        let mu = Partition::new(&[2, 1], 3).unwrap();
        let ts = enumerate_tableaux(&mu, 3).unwrap();
        assert_eq!(ts.len(), 8);
        let pictures: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
        assert_eq!(pictures, [" 1/12", " 1/13", " 1/22", " 1/23", " 1/33", " 2/13", " 2/23", " 2/33"]);
        let a = a0();
        let want = gen_box(3, 2, &(a.clone() + Rational64::from_integer(1))).unwrap()
            * gen_box(3, 3, &a).unwrap()
            * gen_box(3, 1, &(a.clone() - AffineShift::int(1))).unwrap();
        assert_eq!(ts[3].monomial(&a).unwrap(), want);
        let q = qchar_evaluation(&mu, &a, 3).unwrap();
        assert!(q.coefficient(&want) >= 1);
        assert_eq!(q.total_multiplicity(), 8);
        assert!(ts.iter().all(|t| t.is_valid(3)));
    }

    #[test]
    fn single_box_and_sl1() {
        for n in 1..5 {
            let q = qchar_evaluation(&Partition::new(&[1], n).unwrap(), &a0(), n).unwrap();
            let mut want = QCharacter::zero(n);
            for k in 1..=n {
                want.add_term(gen_box(n, k, &a0()).unwrap(), 1);
            }
            assert_eq!(q, want);
        }
        for m in 0..4 {
            let q = qchar_evaluation(&Partition::new(&[m], 1).unwrap(), &a0(), 1).unwrap();
            let mut e = EWeight::unit(1);
            for j in 1..=m {
                e = e * gen_box(1, 1, &(a0() + Rational64::from_integer(j as i64 - 1))).unwrap();
            }
            assert_eq!(q, QCharacter::monomial(e));
        }
        let empty = enumerate_tableaux(&Partition::new(&[], 3).unwrap(), 3).unwrap();
        assert_eq!(empty.len(), 1);
    }

    #[test]
    fn sl2_rows_count() {
        for k in 0..=6 {
            assert_eq!(enumerate_tableaux(&Partition::new(&[k], 2).unwrap(), 2).unwrap().len(), k + 1);
        }
    }

    // Brute force over all fillings of the diagram.
    fn brute_count(mu: &Partition, n: usize) -> usize {
        let cells = mu.reading_order();
        let total = n.pow(cells.len() as u32);
        (0..total)
            .filter(|code| {
                let mut c = *code;
                let mut entries = BTreeMap::new();
                for cell in &cells {
                    entries.insert(*cell, c % n + 1);
                    c /= n;
                }
                Tableau { shape: mu.clone(), entries }.is_valid(n)
            })
            .count()
    }

    #[test]
    fn counts_match_hook_content_and_brute_force() {
        for n in 1..=4 {
            for r in 1..=n {
                for k in 1..=(12 / r).min(4) {
                    let mu = Partition::rectangle(r, k, n).unwrap();
                    let got = enumerate_tableaux(&mu, n).unwrap().len();
                    assert_eq!(got as u128, hook_content_count(&mu, n), "N={n} r={r} k={k}");
                    if mu.size() <= 8 {
                        assert_eq!(got, brute_count(&mu, n));
                    }
                }
            }
        }
    }

    #[test]
    fn sl2_fundamental_kr() {
        let q = qchar_kr(1, 1, &AffineShift::zero(), 2).unwrap();
        let mut want = QCharacter::zero(2);
        want.add_term(gen_y(2, 1, &AffineShift::half(1)).unwrap(), 1);
        // The second term keeps the level-2 factor Y_{2,0}.
        want.add_term(gen_y(2, 1, &AffineShift::half(-1)).unwrap().inv() * gen_y(2, 2, &AffineShift::zero()).unwrap(), 1);
        assert_eq!(q, want);
    }

    #[test]
    fn kr_structure() {
        for n in 2..=3 {
            for r in 1..n {
                for k in 1..=4 {
                    let a = a0();
                    let q = qchar_kr(r, k, &a, n).unwrap();
                    let w = gen_psi(n, r, &(a.clone() + Rational64::from_integer(k as i64))).unwrap() * gen_psi(n, r, &a).unwrap().inv();
                    assert_eq!(q.coefficient(&w), 1);
                    for e in q.terms().keys() {
                        if *e != w {
                            assert!(e.is_right_negative().unwrap(), "{e}");
                        }
                        assert!((&w.inv() * e).in_q_minus(&a));
                    }
                    let mut chain = w.clone();
                    for l in 0..k {
                        chain = chain * gen_a(n, r, &(a.clone() + Rational64::from_integer(l as i64))).unwrap().inv();
                        assert_eq!(q.coefficient(&chain), 1, "N={n} r={r} k={k} l={}", l + 1);
                    }
                }
            }
        }
        for n in 2..=3 {
            let q = qchar_kr(n, 2, &a0(), n).unwrap();
            let w = gen_psi(n, n, &(a0() + Rational64::from_integer(2))).unwrap() * gen_psi(n, n, &a0()).unwrap().inv();
            assert_eq!(q, QCharacter::monomial(w));
        }
        assert_eq!(qchar_kr(0, 3, &a0(), 3).unwrap(), QCharacter::one(3));
        assert!(qchar_kr(4, 1, &a0(), 3).is_err());
    }

    fn small_partition() -> impl Strategy<Value = (Partition, usize)> {
        (2usize..=3, prop::collection::vec(0usize..=3, 3)).prop_map(|(n, mut v)| {
            v.truncate(n);
            v.sort_by(|a, b| b.cmp(a));
            (Partition::new(&v, n).unwrap(), n)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn evaluation_terms_lie_in_highest_times_q_minus((mu, n) in small_partition()) {
            let a = a0();
            let q = qchar_evaluation(&mu, &a, n).unwrap();
            // The lexicographically first tableau carries the highest weight.
            let top = enumerate_tableaux(&mu, n).unwrap()[0].monomial(&a).unwrap();
            prop_assert!(top.is_dominant().unwrap());
            for e in q.terms().keys() {
                prop_assert!((&top.inv() * e).in_q_minus(&a));
            }
            prop_assert_eq!(q.total_multiplicity() as u128, hook_content_count(&mu, n));
        }
    }
}
