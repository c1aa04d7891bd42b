//! The ring D_p of formal difference operators, transfer matrices and Baxter Q-operators.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_traits::ToPrimitive;

use crate::cartan::{enumerate_zero_weight_states, DepthVector, StateBasis};
use crate::error::{Error, Result};
use crate::eweights::ell;
use crate::repr::{asymptotic_sl2_module, eps, normalize_weight, one_dimensional, shifted, vector_module, EModule};
use crate::rmatrix::{max_norm, CMatrix};
use crate::theta::{theta_reduced, EllipticParams, C64};

const ROOT_EPS: f64 = 1e-9;

fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

/// `-sum c_i alpha_i` in eps-coordinates.
fn depth_weight(n: usize, c: &DepthVector) -> Vec<C64> {
    let mut w = vec![czero(); n];
    for (i, &k) in c.n.iter().enumerate() {
        w[i] -= k as f64;
        w[i + 1] += k as f64;
    }
    w
}

/// Coefficients `d` with `w = sum d_i alpha_i`, if `w` lies in the root lattice.
pub fn root_coordinates(w: &[C64]) -> Option<Vec<i64>> {
    let w = normalize_weight(w);
    let mut partial = czero();
    let mut out = Vec::with_capacity(w.len() - 1);
    for x in &w[..w.len() - 1] {
        partial += x;
        let r = partial.re.round();
        if partial.im.abs() > ROOT_EPS || (partial.re - r).abs() > ROOT_EPS {
            return None;
        }
        out.push(r as i64);
    }
    Some(out)
}

pub type TermMap = BTreeMap<DepthVector, CMatrix>;
type TermFn = Arc<dyn Fn(&[C64]) -> Result<TermMap> + Send + Sync>;

/// Element of `M(I_0^ell; D_p)`: `sum_c p^{P - c.alpha} T_{P - c.alpha} F_c(lam)`, exact for total depth `<= limit`.
#[derive(Clone)]
pub struct DpElement {
    pub n: usize,
    pub dim: usize,
    pub hbar: C64,
    /// Mean-zero eps-coordinates of `P`.
    pub prefactor: Vec<C64>,
    pub limit: u32,
    f: TermFn,
}

impl fmt::Debug for DpElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DpElement(N={}, dim={}, prefactor={:?}, limit={})", self.n, self.dim, self.prefactor, self.limit)
    }
}

impl DpElement {
    pub fn new(n: usize, dim: usize, hbar: C64, prefactor: Vec<C64>, limit: u32, f: TermFn) -> Self {
        DpElement { n, dim, hbar, prefactor: normalize_weight(&prefactor), limit, f }
    }

    /// Constant `c` times the identity, weight zero.
    pub fn scalar(n: usize, dim: usize, hbar: C64, limit: u32, c: C64) -> Self {
        DpElement::new(
            n,
            dim,
            hbar,
            vec![czero(); n],
            limit,
            Arc::new(move |_| Ok(BTreeMap::from([(DepthVector::zero(n - 1), CMatrix::identity(dim, dim) * c)]))),
        )
    }

    pub fn terms(&self, lam: &[C64]) -> Result<TermMap> {
        let mut t = (self.f)(lam)?;
        t.retain(|k, _| k.depth() <= self.limit);
        Ok(t)
    }

    fn term_weight(&self, c: &DepthVector) -> Vec<C64> {
        self.prefactor.iter().zip(depth_weight(self.n, c)).map(|(a, b)| a + b).collect()
    }

    fn check_compatible(&self, other: &DpElement) -> Result<()> {
        if self.n != other.n || self.dim != other.dim {
            return Err(Error::Mismatch("D_p elements of different shape".into()));
        }
        Ok(())
    }

    /// `p^a T_a f * p^b T_b g = p^{a+b} T_{a+b} f(lam + hbar b) g(lam)`.
    pub fn mul(&self, other: &DpElement) -> Result<DpElement> {
        self.check_compatible(other)?;
        let (a, b) = (self.clone(), other.clone());
        let limit = a.limit.min(b.limit);
        let prefactor: Vec<C64> = a.prefactor.iter().zip(&b.prefactor).map(|(x, y)| x + y).collect();
        let f: TermFn = Arc::new(move |lam| {
            let bt = b.terms(lam)?;
            let mut out = TermMap::new();
            for (cb, mb) in &bt {
                let at = a.terms(&shifted(lam, &b.term_weight(cb), b.hbar))?;
                for (ca, ma) in at {
                    let c = ca.add(cb);
                    if c.depth() > limit {
                        continue;
                    }
                    let prod = ma * mb;
                    match out.get_mut(&c) {
                        Some(m) => *m += prod,
                        None => {
                            out.insert(c, prod);
                        }
                    }
                }
            }
            Ok(out)
        });
        Ok(DpElement::new(self.n, self.dim, self.hbar, prefactor, limit, f))
    }

    /// Re-expresses the element on a prefactor `p + shift.alpha`; depths grow by `shift`.
    fn rebased(&self, shift: &[i64]) -> DpElement {
        let a = self.clone();
        let s = DepthVector { n: shift.iter().map(|&x| x as u32).collect() };
        let mut pre = self.prefactor.clone();
        for (i, &k) in shift.iter().enumerate() {
            pre[i] += k as f64;
            pre[i + 1] -= k as f64;
        }
        let limit = self.limit.saturating_add(s.depth());
        let s2 = s.clone();
        DpElement::new(
            self.n,
            self.dim,
            self.hbar,
            pre,
            limit,
            Arc::new(move |lam| Ok(a.terms(lam)?.into_iter().map(|(c, m)| (c.add(&s2), m)).collect())),
        )
    }

    /// Brings two elements onto a common prefactor.
    pub fn aligned(&self, other: &DpElement) -> Result<(DpElement, DpElement)> {
        self.check_compatible(other)?;
        let diff: Vec<C64> = self.prefactor.iter().zip(&other.prefactor).map(|(x, y)| x - y).collect();
        let d = root_coordinates(&diff).ok_or_else(|| Error::Mismatch("prefactors differ by a non-root-lattice weight".into()))?;
        let sa: Vec<i64> = d.iter().map(|&x| x.max(0) - x).collect();
        let sb: Vec<i64> = d.iter().map(|&x| x.max(0)).collect();
        Ok((self.rebased(&sa), other.rebased(&sb)))
    }

    pub fn add(&self, other: &DpElement) -> Result<DpElement> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &DpElement) -> Result<DpElement> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &DpElement, sign: f64) -> Result<DpElement> {
        let (a, b) = self.aligned(other)?;
        let limit = a.limit.min(b.limit);
        let pre = a.prefactor.clone();
        let (a2, b2) = (a.clone(), b.clone());
        let f: TermFn = Arc::new(move |lam| {
            let mut out = a2.terms(lam)?;
            for (c, m) in b2.terms(lam)? {
                let m = m * C64::new(sign, 0.0);
                match out.get_mut(&c) {
                    Some(x) => *x += m,
                    None => {
                        out.insert(c, m);
                    }
                }
            }
            Ok(out)
        });
        Ok(DpElement::new(a.n, a.dim, a.hbar, pre, limit, f))
    }

    pub fn scale(&self, c: C64) -> DpElement {
        let a = self.clone();
        DpElement { f: Arc::new(move |lam| Ok(a.terms(lam)?.into_iter().map(|(k, m)| (k, m * c)).collect())), ..self.clone() }
    }

    /// Graded inverse: requires an invertible depth-zero term.
    pub fn inverse(&self) -> Result<DpElement> {
        let a = self.clone();
        let n = self.n;
        let limit = self.limit;
        let pre: Vec<C64> = self.prefactor.iter().map(|x| -x).collect();
        let pre_b = pre.clone();
        let hbar = self.hbar;
        let f: TermFn = Arc::new(move |lam| {
            let wt_b = |c: &DepthVector| -> Vec<C64> { pre_b.iter().zip(depth_weight(n, c)).map(|(x, y)| x + y).collect() };
            let order = DepthVector::all_up_to(n - 1, limit);
            let mut a_at: HashMap<DepthVector, TermMap> = HashMap::new();
            let mut out = TermMap::new();
            for m in &order {
                let am = a.terms(&shifted(lam, &wt_b(m), hbar))?;
                let a0 = am.get(&DepthVector::zero(n - 1)).cloned().unwrap_or_else(|| CMatrix::zeros(a.dim, a.dim));
                let a0inv = a0.try_inverse().ok_or_else(|| Error::Singular("depth-zero term of a D_p element".into()))?;
                a_at.insert(m.clone(), am);
                if m.depth() == 0 {
                    out.insert(m.clone(), a0inv);
                    continue;
                }
                let mut acc = CMatrix::zeros(a.dim, a.dim);
                for (cb, mb) in &out {
                    if cb.n.iter().zip(&m.n).any(|(x, y)| x > y) {
                        continue;
                    }
                    let ca = DepthVector { n: m.n.iter().zip(&cb.n).map(|(x, y)| x - y).collect() };
                    if let Some(ma) = a_at[cb].get(&ca) {
                        acc += ma * mb;
                    }
                }
                out.insert(m.clone(), -(a0inv * acc));
            }
            Ok(out)
        });
        Ok(DpElement::new(self.n, self.dim, self.hbar, pre, limit, f))
    }

    /// Max-norm of each term (after alignment with `other`) of `self - other`, by depth vector.
    pub fn residual(&self, other: &DpElement, lam: &[C64]) -> Result<Vec<(DepthVector, f64)>> {
        let d = self.sub(other)?;
        let t = d.terms(lam)?;
        Ok(DepthVector::all_up_to(self.n - 1, d.limit).into_iter().map(|c| {
            let r = t.get(&c).map(max_norm).unwrap_or(0.0);
            (c, r)
        }).collect())
    }

    /// Terms indexed by their full weight (prefactor included), for comparisons across prefactors.
    pub fn weighted_terms(&self, lam: &[C64]) -> Result<Vec<(Vec<C64>, DepthVector, CMatrix)>> {
        Ok(self.terms(lam)?.into_iter().map(|(c, m)| (self.term_weight(&c), c, m)).collect())
    }

    /// `sum_c p^{|c|} F_c(lam)`: the specialization at numeric `p` that forgets the shift operators.
    pub fn specialize(&self, p: C64, lam: &[C64]) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (c, m) in self.terms(lam)? {
            out += m * p.powu(c.depth());
        }
        Ok(out)
    }
}

/// Quantum space `V^{(x) ell}[0]` with inhomogeneities `a_1..a_ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSpaceConfig {
    pub n: usize,
    pub ell: usize,
    pub a: Vec<C64>,
    pub params: EllipticParams,
}

impl QuantumSpaceConfig {
    pub fn new(n: usize, a: Vec<C64>, params: EllipticParams) -> Result<Self> {
        let cfg = QuantumSpaceConfig { n, ell: a.len(), a, params };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.ell != self.a.len() {
            return Err(Error::InvalidParams("ell differs from the number of inhomogeneities".into()));
        }
        enumerate_zero_weight_states(self.n, self.ell)?;
        for (i, a) in self.a.iter().enumerate() {
            if theta_reduced(*a, &self.params).norm() < crate::rmatrix::POLE_GUARD {
                return Err(Error::InvalidParams(format!("a_{} lies on the lattice", i + 1)));
            }
        }
        Ok(())
    }

    pub fn states(&self) -> StateBasis {
        enumerate_zero_weight_states(self.n, self.ell).expect("validated")
    }
}

/// Highest weight of `X` and the depth vector of every basis vector below it.
fn module_depths(x: &EModule) -> Result<(Vec<C64>, Vec<DepthVector>)> {
    'anchor: for cand in &x.space.basis {
        let mut depths = Vec::with_capacity(x.dim());
        for b in &x.space.basis {
            let diff: Vec<C64> = cand.weight.iter().zip(&b.weight).map(|(p, q)| p - q).collect();
            match root_coordinates(&diff) {
                Some(d) if d.iter().all(|&v| v >= 0) => depths.push(DepthVector { n: d.iter().map(|&v| v as u32).collect() }),
                _ => continue 'anchor,
            }
        }
        return Ok((normalize_weight(&cand.weight), depths));
    }
    Err(Error::NotInRootCone(format!("{} has no highest weight", x.tag)))
}

/// `t_X(z)`: entry `(i, j)` is `sum_alpha p^alpha T_alpha Tr_{X[alpha]} L_{i_1 j_1}(z+a_1) ... L_{i_l j_l}(z+a_l)`.
pub fn transfer_matrix(x: &EModule, cfg: &QuantumSpaceConfig, z: C64, depth: u32) -> Result<DpElement> {
    if x.n != cfg.n || x.params != cfg.params {
        return Err(Error::Mismatch("module and quantum space differ in N or parameters".into()));
    }
    let (anchor, depths) = module_depths(x)?;
    if let Some(exact) = x.exact_below {
        let top = depths.iter().map(|d| d.depth()).max().unwrap_or(0);
        if depth as usize + cfg.ell > exact || top as usize > exact {
            return Err(Error::Budget(format!("depth {depth} needs a module built to depth {}", depth as usize + cfg.ell)));
        }
    }
    let states = cfg.states().states;
    let n = cfg.n;
    let (xm, cfg2) = (x.clone(), cfg.clone());
    let hbar = cfg.params.hbar;
    let f: TermFn = Arc::new(move |lam| {
        let blocks: Vec<(DepthVector, Vec<usize>)> = {
            let mut m: BTreeMap<DepthVector, Vec<usize>> = BTreeMap::new();
            for (b, d) in depths.iter().enumerate() {
                if d.depth() <= depth {
                    m.entry(d.clone()).or_default().push(b);
                }
            }
            m.into_iter().collect()
        };
        // L_all at site s for each accumulated right weight (as letter counts).
        let mut cache: HashMap<(usize, Vec<usize>), Arc<Vec<CMatrix>>> = HashMap::new();
        let mut site = |s: usize, counts: &[usize]| -> Result<Arc<Vec<CMatrix>>> {
            let key = (s, counts.to_vec());
            if let Some(v) = cache.get(&key) {
                return Ok(v.clone());
            }
            let w: Vec<C64> = counts.iter().map(|&c| C64::new(c as f64, 0.0)).collect();
            let v = Arc::new(xm.l_all(z + cfg2.a[s], &shifted(lam, &w, hbar))?);
            cache.insert(key, v.clone());
            Ok(v)
        };
        let d = states.len();
        let mut out: TermMap = blocks.iter().map(|(c, _)| (c.clone(), CMatrix::zeros(d, d))).collect();
        for (r, is) in states.iter().enumerate() {
            for (col, js) in states.iter().enumerate() {
                let mut counts = vec![0usize; n];
                let mut prod: Option<CMatrix> = None;
                for s in 0..cfg2.ell {
                    let l = site(s, &counts)?;
                    let m = &l[(is[s] - 1) * n + (js[s] - 1)];
                    prod = Some(match prod {
                        None => m.clone(),
                        Some(p) => p * m,
                    });
                    counts[js[s] - 1] += 1;
                }
                let prod = prod.expect("ell >= 1");
                for (c, idx) in &blocks {
                    let tr: C64 = idx.iter().map(|&b| prod[(b, b)]).sum();
                    out.get_mut(c).expect("block")[(r, col)] = tr;
                }
            }
        }
        Ok(out)
    });
    Ok(DpElement::new(n, cfg.states().len(), hbar, anchor, depth, f))
}

/// `Q_r(u) = t_{CW'_{r,u/hbar}}(0)`; realized for `N = 2, r = 1` and for `r = N`.
pub fn q_operator(cfg: &QuantumSpaceConfig, r: usize, u: C64, depth: u32) -> Result<DpElement> {
    let p = cfg.params;
    let n = cfg.n;
    let x = u / p.hbar;
    if r == n {
        let g = Arc::new(move |z: C64| theta_reduced(z + (x + 0.5) * p.hbar, &p));
        return transfer_matrix(&one_dimensional(n, &p, g, "CW'_N"), cfg, czero(), depth);
    }
    if n != 2 || r != 1 {
        return Err(Error::Unsupported(format!("Q-operator for N={n}, r={r}")));
    }
    let ell_r = ell(n, r).to_f64().unwrap_or(0.0);
    let m = asymptotic_sl2_module(x, depth as usize + cfg.ell, &p)?.twisted(Arc::new(move |z| theta_reduced(z - ell_r * p.hbar, &p)), "S");
    transfer_matrix(&m, cfg, czero(), depth)
}

/// `t_{CW_{1,x}}(z) t_{CW_{1,0}}(z)^{-1} - Q_1(z + x hbar) Q_1(z)^{-1}` per depth, N = 2.
pub fn q_shift_law_residual(cfg: &QuantumSpaceConfig, z: C64, x: C64, lam: &[C64], depth: u32) -> Result<DepthResiduals> {
    if cfg.n != 2 {
        return Err(Error::Unsupported("shift law is realized for N = 2".into()));
    }
    let p = cfg.params;
    let cw = |d: C64| -> Result<DpElement> { transfer_matrix(&asymptotic_sl2_module(d, depth as usize + cfg.ell, &p)?, cfg, z, depth) };
    let lhs = cw(x)?.mul(&cw(czero())?.inverse()?)?;
    let rhs = q_operator(cfg, 1, z + x * p.hbar, depth)?.mul(&q_operator(cfg, 1, z, depth)?.inverse()?)?;
    lhs.residual(&rhs, lam)
}

/// `Q_N(u) = prod_i theta(u + a_i + hbar/2)`.
pub fn q_top_closed_form(cfg: &QuantumSpaceConfig, u: C64) -> C64 {
    cfg.a.iter().map(|a| theta_reduced(u + a + 0.5 * cfg.params.hbar, &cfg.params)).product()
}

pub type DepthResiduals = Vec<(DepthVector, f64)>;

pub fn max_residual(r: &DepthResiduals) -> f64 {
    r.iter().map(|(_, x)| *x).fold(0.0, f64::max)
}

/// `t_X(z) t_Y(w) - t_Y(w) t_X(z)` per depth.
pub fn commutator_residual(x: &EModule, y: &EModule, cfg: &QuantumSpaceConfig, z: C64, w: C64, lam: &[C64], depth: u32) -> Result<DepthResiduals> {
    let tx = transfer_matrix(x, cfg, z, depth)?;
    let ty = transfer_matrix(y, cfg, w, depth)?;
    tx.mul(&ty)?.residual(&ty.mul(&tx)?, lam)
}

/// `t_X(z) t_Y(z) - t_{X (x) Y}(z)` per depth.
pub fn product_law_residual(x: &EModule, y: &EModule, cfg: &QuantumSpaceConfig, z: C64, lam: &[C64], depth: u32) -> Result<DepthResiduals> {
    let txy = transfer_matrix(&crate::repr::tensor_module(x, y)?, cfg, z, depth)?;
    let prod = transfer_matrix(x, cfg, z, depth)?.mul(&transfer_matrix(y, cfg, z, depth)?)?;
    prod.residual(&txy, lam)
}

/// Which two-dimensional module stands in for `D^{(1,1)}_{k,0}` in the TQ check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TqVariant {
    /// `V(0) (x) S(theta(z)/theta(z - k hbar))`, divided by `t_{CW_{2,k+1}}(w - (k+1/2) hbar)`.
    #[default]
    Faithful,
    /// Drops the one-dimensional twist: a deliberately wrong module.
    WrongTwist,
    /// Faithful `X_k` but without the level-2 factor on the right-hand side.
    NoLevelTwoFactor,
}

/// `X_k(w) Q(w) Q(w-hbar)^{-1} - 1 - Q(w+hbar) Q(w-hbar)^{-1} Q_2(w-hbar/2)/Q_2(w+hbar/2)` per depth, N = 2.
pub fn tq_residual(cfg: &QuantumSpaceConfig, k: C64, w: C64, lam: &[C64], depth: u32, variant: TqVariant) -> Result<DepthResiduals> {
    if cfg.n != 2 {
        return Err(Error::Unsupported("TQ check is realized for N = 2".into()));
    }
    let p = cfg.params;
    let h = p.hbar;
    let th = move |x: C64| theta_reduced(x, &p);
    let v0 = vector_module(2, czero(), &p);
    let xk = match variant {
        TqVariant::WrongTwist => transfer_matrix(&v0, cfg, w, depth)?,
        _ => {
            let d = v0.twisted(Arc::new(move |z| th(z) / th(z - k * h)), "S(d)");
            // CW_{2,x} is one-dimensional with L = theta(z+(x+1/2)hbar)/theta(z+hbar/2).
            let x2 = k + 1.0;
            let inv: C64 = cfg.a.iter().map(|a| {
                let z = w - (k + 0.5) * h + a;
                th(z + 0.5 * h) / th(z + (x2 + 0.5) * h)
            }).product();
            transfer_matrix(&d, cfg, w, depth)?.scale(inv)
        }
    };
    let q0 = q_operator(cfg, 1, w, depth)?;
    let qm_inv = q_operator(cfg, 1, w - h, depth)?.inverse()?;
    let qp = q_operator(cfg, 1, w + h, depth)?;
    let level2 = match variant {
        TqVariant::NoLevelTwoFactor => C64::new(1.0, 0.0),
        _ => q_top_closed_form(cfg, w - 0.5 * h) / q_top_closed_form(cfg, w + 0.5 * h),
    };
    let dim = cfg.states().len();
    let lhs = xk.mul(&q0)?.mul(&qm_inv)?;
    let rhs = DpElement::scalar(2, dim, h, depth, C64::new(1.0, 0.0)).add(&qp.mul(&qm_inv)?.scale(level2))?;
    lhs.residual(&rhs, lam)
}

/// One located Bethe root.
#[derive(Debug, Clone, PartialEq)]
pub struct BetheRoot {
    pub u: C64,
    pub residual: f64,
    pub truncation_proxy: f64,
}

/// Eigenvalue branch of `Q~_1(u)` specialized at numeric `p`, continued from a base point by nearest match.
pub struct EigenBranch {
    cfg: QuantumSpaceConfig,
    p: C64,
    lam: Vec<C64>,
    depth: u32,
    /// Position in the sorted spectrum at the base point.
    pub index: usize,
    base: C64,
}

fn eigenvalues(m: &CMatrix) -> Vec<C64> {
    let ev = m.clone().schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default();
    let mut v: Vec<C64> = ev;
    v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap_or(std::cmp::Ordering::Equal));
    v
}

impl EigenBranch {
    pub fn new(cfg: &QuantumSpaceConfig, p: C64, lam: &[C64], depth: u32, index: usize, base: C64) -> Self {
        EigenBranch { cfg: cfg.clone(), p, lam: lam.to_vec(), depth, index, base }
    }

    fn spectrum(&self, u: C64) -> Result<Vec<C64>> {
        let q = q_operator(&self.cfg, 1, u, self.depth)?;
        Ok(eigenvalues(&q.specialize(self.p, &self.lam)?))
    }

    /// Follows the branch from the base point to `u` in small steps.
    pub fn value(&self, u: C64) -> Result<C64> {
        let steps = 16;
        let mut cur = self.spectrum(self.base)?.get(self.index).copied().ok_or_else(|| Error::IndexOutOfRange("eigenvalue index".into()))?;
        for s in 1..=steps {
            let at = self.base + (u - self.base) * (s as f64 / steps as f64);
            let spec = self.spectrum(at)?;
            let mut d: Vec<(f64, C64)> = spec.iter().map(|e| ((e - cur).norm(), *e)).collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            if d.len() > 1 && d[1].0 < 2.0 * d[0].0 + 1e-12 && (d[1].1 - d[0].1).norm() < 1e-6 * (1.0 + cur.norm()) {
                return Err(Error::BranchCrossing(format!("eigenvalues meet near u = {at}")));
            }
            cur = d[0].1;
        }
        Ok(cur)
    }
}

/// Damped Newton iteration with a secant derivative.
pub fn find_root(f: &dyn Fn(C64) -> Result<C64>, start: C64, tol: f64, max_iter: usize) -> Result<C64> {
    let mut u = start;
    let mut fu = f(u)?;
    let dh = 1e-6;
    for _ in 0..max_iter {
        if fu.norm() < tol {
            return Ok(u);
        }
        let deriv = (f(u + dh)? - fu) / dh;
        if deriv.norm() < 1e-300 {
            break;
        }
        let mut step = fu / deriv;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = u - step;
            let fc = f(cand)?;
            if fc.norm() < fu.norm() {
                u = cand;
                fu = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fu.norm() < tol {
        Ok(u)
    } else {
        Err(Error::NoRoot(format!("|f| = {:e} near u = {u}", fu.norm())))
    }
}

/// For N = 2: roots of a Q-eigenvalue branch and `|p^{-1} q(u+hbar)/q(u-hbar) Q_2(u-hbar/2)/Q_2(u+hbar/2) + 1|`.
///
/// `p^{alpha_1}` from the prefactor ratio becomes `1/p` under the specialization `p^{-alpha_1} -> p`.
pub fn bethe_residual(cfg: &QuantumSpaceConfig, p: C64, lam: &[C64], depth: u32, starts: &[C64], branch: usize) -> Result<Vec<BetheRoot>> {
    if cfg.n != 2 {
        return Err(Error::Unsupported("Bethe check is realized for N = 2".into()));
    }
    let h = cfg.params.hbar;
    let mut out: Vec<BetheRoot> = Vec::new();
    for &s in starts {
        let br = EigenBranch::new(cfg, p, lam, depth, branch, s);
        let f = |u: C64| -> Result<C64> {
            let b = EigenBranch { base: s, ..EigenBranch::new(cfg, p, lam, depth, branch, s) };
            b.value(u)
        };
        let root = match find_root(&f, s, 1e-11, 60) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if out.iter().any(|r| (r.u - root).norm() < 1e-6) {
            continue;
        }
        let qp = br.value(root + h)?;
        let qm = br.value(root - h)?;
        let level2 = q_top_closed_form(cfg, root - 0.5 * h) / q_top_closed_form(cfg, root + 0.5 * h);
        let res = (qp / (qm * p) * level2 + 1.0).norm();
        out.push(BetheRoot { u: root, residual: res, truncation_proxy: p.norm().powi(depth as i32 + 1) });
    }
    if out.is_empty() {
        return Err(Error::NoRoot("no Q-eigenvalue zero located from the given starts".into()));
    }
    Ok(out)
}

/// Max over `lams` of the distance between sorted spectra of the specialized `Q~_1(u)` and those at `lams[0]`.
///
/// A nonzero value means the fixed-`lambda` eigenvalues are not eigenvalues of the difference operator.
pub fn eigenvalue_lambda_spread(cfg: &QuantumSpaceConfig, p: C64, u: C64, depth: u32, lams: &[Vec<C64>]) -> Result<f64> {
    let q = q_operator(cfg, 1, u, depth)?;
    let base = eigenvalues(&q.specialize(p, &lams[0])?);
    let mut worst: f64 = 0.0;
    for l in &lams[1..] {
        let ev = eigenvalues(&q.specialize(p, l)?);
        for (a, b) in base.iter().zip(&ev) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// Roots of `Q_N` located numerically and compared with `-a_i - hbar/2`.
pub fn top_root_check(cfg: &QuantumSpaceConfig) -> Result<f64> {
    let h = cfg.params.hbar;
    let mut worst: f64 = 0.0;
    for a in &cfg.a {
        let exact = -a - 0.5 * h;
        let f = |u: C64| -> Result<C64> {
            let q = q_operator(cfg, cfg.n, u, 0)?;
            Ok(q.terms(&vec![czero(); cfg.n])?.values().next().map(|m| m[(0, 0)]).unwrap_or_default())
        };
        let root = find_root(&f, exact + C64::new(0.01, 0.005), 1e-13, 60)?;
        worst = worst.max((root - exact).norm());
    }
    Ok(worst)
}

/// Eps-coordinates of `eps_i`, re-exported for callers assembling weights by hand.
pub fn unit_weight(n: usize, i: usize) -> Vec<C64> {
    eps(n, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rc(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.25..0.25))
    }

    fn cfg(n: usize, ell: usize) -> QuantumSpaceConfig {
        let a = (0..ell).map(|i| C64::new(0.13 + 0.21 * i as f64, 0.07 - 0.03 * i as f64)).collect();
        QuantumSpaceConfig::new(n, a, EllipticParams::default()).unwrap()
    }

    fn lam(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| rc(rng)).collect()
    }

    fn random_element(rng: &mut ChaCha8Rng, n: usize, dim: usize, limit: u32) -> DpElement {
        let coeffs: Vec<(DepthVector, CMatrix, CMatrix)> = DepthVector::all_up_to(n - 1, limit)
            .into_iter()
            .map(|c| (c, CMatrix::from_fn(dim, dim, |_, _| rc(rng)), CMatrix::from_fn(dim, dim, |_, _| rc(rng))))
            .collect();
        let pre: Vec<C64> = (0..n).map(|_| rc(rng)).collect();
        let f: TermFn = Arc::new(move |lam: &[C64]| {
            let s: C64 = lam.iter().enumerate().map(|(i, l)| l * (i as f64 + 1.0)).sum();
            Ok(coeffs.iter().map(|(c, a, b)| (c.clone(), a + b * s.sin())).collect())
        });
        DpElement::new(n, dim, EllipticParams::default().hbar, pre, limit, f)
    }

    #[test]
    fn dp_product_is_associative_and_inverse_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3] {
            let (a, b, c) = (random_element(&mut rng, n, 2, 2), random_element(&mut rng, n, 2, 2), random_element(&mut rng, n, 2, 2));
            let l = lam(&mut rng, n);
            let r = a.mul(&b).unwrap().mul(&c).unwrap().residual(&a.mul(&b.mul(&c).unwrap()).unwrap(), &l).unwrap();
            assert!(max_residual(&r) < 1e-12);
            let one = DpElement::scalar(n, 2, a.hbar, 2, C64::new(1.0, 0.0));
            let ai = a.inverse().unwrap();
            assert!(max_residual(&a.mul(&ai).unwrap().residual(&one, &l).unwrap()) < 1e-10);
            assert!(max_residual(&ai.mul(&a).unwrap().residual(&one, &l).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn one_dimensional_and_top_q() {
        let c = cfg(2, 2);
        let p = c.params;
        let g = Arc::new(move |z: C64| theta_reduced(z + 0.3, &p) / theta_reduced(z - 0.2, &p));
        let m = one_dimensional(2, &p, g.clone(), "S");
        let z = C64::new(0.11, 0.05);
        let t = transfer_matrix(&m, &c, z, 2).unwrap();
        let want: C64 = c.a.iter().map(|a| g(z + a)).product();
        let terms = t.terms(&[czero(), czero()]).unwrap();
        assert_eq!(terms.len(), 1);
        let m0 = &terms[&DepthVector::zero(1)];
        assert!(max_norm(&(m0 - CMatrix::identity(2, 2) * want)) < 1e-12);
        let u = C64::new(0.2, -0.1);
        let q = q_operator(&c, 2, u, 0).unwrap().terms(&[czero(), czero()]).unwrap();
        assert!(max_norm(&(&q[&DepthVector::zero(1)] - CMatrix::identity(2, 2) * q_top_closed_form(&c, u))) < 1e-12);
        assert!(top_root_check(&c).unwrap() < 1e-8);
    }

    #[test]
    fn two_site_vector_transfer_by_hand() {
        // Direct assembly of the p^{eps_1} coefficient for V(0), N = 2, ell = 2.
        let c = cfg(2, 2);
        let p = c.params;
        let v = vector_module(2, czero(), &p);
        let z = C64::new(0.07, 0.02);
        let l = vec![C64::new(0.15, 0.03), C64::new(-0.2, 0.01)];
        let t = transfer_matrix(&v, &c, z, 1).unwrap().terms(&l).unwrap();
        let states = c.states().states;
        let r = |i, j, p2, q, zz, ll: &[C64]| crate::rmatrix::r_entry(i, j, p2, q, zz, ll, &p).unwrap();
        let pre = |zz: C64| theta_reduced(zz + p.hbar, &p) / theta_reduced(zz, &p);
        for (ri, is) in states.iter().enumerate() {
            for (ci, js) in states.iter().enumerate() {
                // <v_1| L_{i1 j1}(z+a1) L_{i2 j2}(z+a2)|v_1> with the second factor at lam + hbar eps_{j1}.
                let l2 = shifted(&l, &eps(2, js[0]), p.hbar);
                let mut want = czero();
                for mid in 1..=2 {
                    let (z1, z2) = (z + c.a[0], z + c.a[1]);
                    want += pre(z1) * r(js[0], mid, is[0], 1, z1, &l) * pre(z2) * r(js[1], 1, is[1], mid, z2, &l2);
                }
                assert!((t[&DepthVector::zero(1)][(ri, ci)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn commutativity_and_product_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c2 = cfg(2, 2);
        let p = c2.params;
        let (v0, v1) = (vector_module(2, czero(), &p), vector_module(2, C64::new(0.37, 0.0), &p));
        let (z, w, l) = (rc(&mut rng), rc(&mut rng), lam(&mut rng, 2));
        assert!(max_residual(&commutator_residual(&v0, &v0, &c2, z, w, &l, 2).unwrap()) < 1e-12);
        assert!(max_residual(&commutator_residual(&v0, &v1, &c2, z, w, &l, 2).unwrap()) < 1e-9);
        let c3 = cfg(3, 3);
        let (u0, u1) = (vector_module(3, czero(), &p), vector_module(3, C64::new(0.41, 0.0), &p));
        let l3 = lam(&mut rng, 3);
        assert!(max_residual(&commutator_residual(&u0, &u1, &c3, z, w, &l3, 2).unwrap()) < 1e-8);
        let v1b = vector_module(2, C64::new(1.0, 0.0), &p);
        assert!(max_residual(&product_law_residual(&v0, &v1b, &c2, z, &l, 2).unwrap()) < 1e-9);
    }

    #[test]
    fn spectral_shift_law() {
        let c = cfg(2, 2);
        let p = c.params;
        let z = C64::new(0.1, 0.03);
        let l = vec![C64::new(0.15, 0.03), C64::new(-0.2, 0.01)];
        let a = C64::new(0.6, 0.0);
        let lhs = transfer_matrix(&vector_module(2, a, &p), &c, z, 1).unwrap();
        let rhs = transfer_matrix(&vector_module(2, czero(), &p), &c, z + a * p.hbar, 1).unwrap();
        assert!(max_residual(&lhs.residual(&rhs, &l).unwrap()) < 1e-12);
    }

    #[test]
    fn q_operator_leading_term_at_zero() {
        let c = cfg(2, 2);
        let l = vec![C64::new(0.15, 0.03), C64::new(-0.2, 0.01)];
        let q = q_operator(&c, 1, czero(), 2).unwrap().terms(&l).unwrap();
        let want: C64 = c.a.iter().map(|a| theta_reduced(*a, &c.params)).product();
        assert!(max_norm(&(&q[&DepthVector::zero(1)] - CMatrix::identity(2, 2) * want)) < 1e-10);
    }

    #[test]
    fn q_shift_law() {
        let c = cfg(2, 2);
        let l = vec![C64::new(0.15, 0.03), C64::new(-0.2, 0.01)];
        let r = q_shift_law_residual(&c, C64::new(0.12, 0.04), C64::new(0.7, 0.2), &l, 4).unwrap();
        assert!(max_residual(&r) < 1e-8, "{r:?}");
    }

    #[test]
    fn tq_relation_holds_per_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = cfg(2, 2);
        let k = C64::new(0.31, 0.17);
        for _ in 0..2 {
            let (w, l) = (rc(&mut rng), lam(&mut rng, 2));
            let r = tq_residual(&c, k, w, &l, 3, TqVariant::Faithful).unwrap();
            assert!(max_residual(&r) < 1e-8, "{r:?}");
            let bad = tq_residual(&c, k, w, &l, 3, TqVariant::WrongTwist).unwrap();
            assert!(max_residual(&bad) > 1e-3);
        }
    }

    // Depth-0 diagonal of Q~_1(u) at lambda_12 = x is c_j(u) g_j(x+u)/g_j(x): the fixed-lambda
    // eigenvalue carries a gauge factor that the T-shift of the prefactor moves.
    #[test]
    fn depth_zero_diagonal_is_a_gauge_cocycle() {
        let c = cfg(2, 2);
        let p = c.params;
        let th = |x: C64| theta_reduced(x, &p);
        let u = C64::new(0.1, 0.05);
        let q = q_operator(&c, 1, u, 0).unwrap();
        let mut gauged: Vec<(C64, C64)> = vec![];
        let mut raw: Vec<C64> = vec![];
        for x in [C64::new(0.1, 0.02), C64::new(0.27, -0.05), C64::new(-0.31, 0.08)] {
            let m = q.terms(&[x * 0.5, -x * 0.5]).unwrap()[&DepthVector::zero(1)].clone();
            gauged.push((m[(0, 0)] * th(x + p.hbar) / th(x + u + p.hbar), m[(1, 1)] * th(x) / th(x + u)));
            raw.push(m[(0, 0)]);
        }
        for g in &gauged[1..] {
            assert!((g.0 - gauged[0].0).norm() < 1e-12 && (g.1 - gauged[0].1).norm() < 1e-12);
        }
        assert!((raw[1] - raw[0]).norm() > 1e-2);
        let lams = vec![vec![C64::new(0.05, 0.01), C64::new(-0.05, -0.01)], vec![C64::new(0.2, -0.03), C64::new(-0.1, 0.0)]];
        assert!(eigenvalue_lambda_spread(&c, C64::new(0.05, 0.0), u, 4, &lams).unwrap() > 1e-3);
    }

    // Roots of the specialized branch tend to the depth-0 zero as p -> 0.
    #[test]
    fn bethe_roots_continue_to_depth_zero() {
        let c = cfg(2, 2);
        let l = vec![C64::new(0.15, 0.03), C64::new(-0.2, 0.01)];
        let start = -c.a[0];
        let root = |p: f64, depth: u32| {
            let b = EigenBranch::new(&c, C64::new(p, 0.0), &l, depth, 0, start);
            let f = |u: C64| b.value(u);
            find_root(&f, start, 1e-11, 60)
        };
        let branch_root = |depth: u32, ps: &[f64]| -> Option<Vec<C64>> { ps.iter().map(|&p| root(p, depth).ok()).collect() };
        let (zero, ps) = (root(0.0, 0), [0.1, 0.05, 0.01]);
        if let (Ok(z0), Some(rs)) = (zero, branch_root(4, &ps)) {
            let d: Vec<f64> = rs.iter().map(|r| (r - z0).norm()).collect();
            assert!(d[2] < d[1] && d[1] < d[0], "{d:?}");
            assert!(d[2] < 0.05, "{d:?}");
        } else {
            panic!("branch 0 has no zero near -a_1");
        }
    }
}
