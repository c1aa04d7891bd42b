//! Numeric modules: difference operators, vector and tensor modules, quantum minors,
//! the sl_2 asymptotic module and the small elliptic group.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rmatrix::{guard, max_norm, r_matrix, CMatrix};
use crate::theta::{theta_reduced, EllipticParams, C64};

const WEIGHT_EPS: f64 = 1e-9;

fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

fn cone() -> C64 {
    C64::new(1.0, 0.0)
}

/// `lam + hbar * w`.
pub fn shifted(lam: &[C64], w: &[C64], hbar: C64) -> Vec<C64> {
    lam.iter().zip(w).map(|(l, x)| l + hbar * x).collect()
}

pub fn eps(n: usize, i: usize) -> Vec<C64> {
    let mut v = vec![czero(); n];
    v[i - 1] = cone();
    v
}

fn add_w(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Weight modulo the diagonal, as mean-zero coordinates.
pub fn normalize_weight(w: &[C64]) -> Vec<C64> {
    let m = w.iter().sum::<C64>() / w.len() as f64;
    w.iter().map(|x| x - m).collect()
}

pub fn same_weight(a: &[C64], b: &[C64]) -> bool {
    normalize_weight(a).iter().zip(normalize_weight(b)).all(|(x, y)| (x - y).norm() < WEIGHT_EPS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    pub label: String,
    pub weight: Vec<C64>,
}

/// Finite ordered weight basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedSpace {
    pub n: usize,
    pub basis: Vec<BasisVector>,
}

impl GradedSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn weight(&self, b: usize) -> &[C64] {
        &self.basis[b].weight
    }

    /// Basis indices grouped by weight, groups in order of first appearance.
    pub fn weight_blocks(&self) -> Vec<(Vec<C64>, Vec<usize>)> {
        let mut blocks: Vec<(Vec<C64>, Vec<usize>)> = Vec::new();
        for (i, b) in self.basis.iter().enumerate() {
            match blocks.iter_mut().find(|(w, _)| same_weight(w, &b.weight)) {
                Some((_, v)) => v.push(i),
                None => blocks.push((b.weight.clone(), vec![i])),
            }
        }
        blocks
    }

    pub fn tensor(&self, other: &GradedSpace) -> GradedSpace {
        let mut basis = Vec::with_capacity(self.dim() * other.dim());
        for b in &self.basis {
            for c in &other.basis {
                basis.push(BasisVector { label: format!("{}*{}", b.label, c.label), weight: add_w(&b.weight, &c.weight) });
            }
        }
        GradedSpace { n: self.n, basis }
    }
}

pub type MatrixFn = Arc<dyn Fn(&[C64]) -> Result<CMatrix> + Send + Sync>;

/// A difference map of bidegree `(alpha, beta)`, as its matrix function of lambda.
#[derive(Clone)]
pub struct DifferenceOperator {
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
    pub rows: usize,
    pub cols: usize,
    pub hbar: C64,
    f: MatrixFn,
}

impl fmt::Debug for DifferenceOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DifferenceOperator({}x{}, alpha={:?}, beta={:?})", self.rows, self.cols, self.alpha, self.beta)
    }
}

impl DifferenceOperator {
    pub fn new(rows: usize, cols: usize, alpha: Vec<C64>, beta: Vec<C64>, hbar: C64, f: MatrixFn) -> Self {
        DifferenceOperator { alpha, beta, rows, cols, hbar, f }
    }

    pub fn eval(&self, lam: &[C64]) -> Result<CMatrix> {
        (self.f)(lam)
    }

    /// `[self o other](lam) = [self](lam) [other](lam + hbar beta_self)`.
    pub fn compose(&self, other: &DifferenceOperator) -> DifferenceOperator {
        let (a, b) = (self.clone(), other.clone());
        let hbar = self.hbar;
        DifferenceOperator {
            alpha: add_w(&self.alpha, &other.alpha),
            beta: add_w(&self.beta, &other.beta),
            rows: self.rows,
            cols: other.cols,
            hbar,
            f: Arc::new(move |lam| Ok(a.eval(lam)? * b.eval(&shifted(lam, &a.beta, hbar))?)),
        }
    }

    pub fn add(&self, other: &DifferenceOperator) -> DifferenceOperator {
        let (a, b) = (self.clone(), other.clone());
        DifferenceOperator { f: Arc::new(move |lam| Ok(a.eval(lam)? + b.eval(lam)?)), ..self.clone() }
    }

    pub fn scale(&self, c: C64) -> DifferenceOperator {
        let a = self.clone();
        DifferenceOperator { f: Arc::new(move |lam| Ok(a.eval(lam)? * c)), ..self.clone() }
    }

    /// Multiplies row `b'` by `g(lam, lam + hbar wt(b'))`: a function of both moment maps.
    pub fn left_coefficient(&self, space: &GradedSpace, g: Arc<dyn Fn(&[C64], &[C64]) -> Result<C64> + Send + Sync>) -> DifferenceOperator {
        let a = self.clone();
        let space = space.clone();
        let hbar = self.hbar;
        DifferenceOperator {
            f: Arc::new(move |lam| {
                let mut m = a.eval(lam)?;
                for r in 0..m.nrows() {
                    let c = g(lam, &shifted(lam, space.weight(r), hbar))?;
                    for x in m.row_mut(r).iter_mut() {
                        *x *= c;
                    }
                }
                Ok(m)
            }),
            ..self.clone()
        }
    }

    /// Bidegree-(0,0) operator `b -> g(lam, lam + hbar wt(b)) b`, i.e. `g(mu_r, mu_l)`.
    pub fn moment(space: &GradedSpace, hbar: C64, g: Arc<dyn Fn(&[C64], &[C64]) -> Result<C64> + Send + Sync>) -> DifferenceOperator {
        let d = space.dim();
        let zero = vec![czero(); space.n];
        let sp = space.clone();
        DifferenceOperator::new(
            d,
            d,
            zero.clone(),
            zero,
            hbar,
            Arc::new(move |lam| {
                let mut m = CMatrix::zeros(d, d);
                for b in 0..d {
                    m[(b, b)] = g(lam, &shifted(lam, sp.weight(b), hbar))?;
                }
                Ok(m)
            }),
        )
    }

    /// Same operator on the basis `g_b(lam) b`.
    pub fn gauged(&self, gauge: &Gauge) -> DifferenceOperator {
        let a = self.clone();
        let g = gauge.clone();
        let hbar = self.hbar;
        DifferenceOperator {
            f: Arc::new(move |lam| {
                let mut m = a.eval(lam)?;
                let lb = shifted(lam, &a.beta, hbar);
                for r in 0..m.nrows() {
                    let gr = g.value(r, lam)?;
                    for c in 0..m.ncols() {
                        if m[(r, c)] != czero() {
                            m[(r, c)] *= g.value(c, &lb)? / gr;
                        }
                    }
                }
                Ok(m)
            }),
            ..self.clone()
        }
    }
}

/// Basis rescaling `b -> g_b(lam) b`.
#[derive(Clone)]
pub struct Gauge {
    f: Arc<dyn Fn(usize, &[C64]) -> Result<C64> + Send + Sync>,
}

impl Gauge {
    pub fn new(f: Arc<dyn Fn(usize, &[C64]) -> Result<C64> + Send + Sync>) -> Self {
        Gauge { f }
    }

    pub fn value(&self, b: usize, lam: &[C64]) -> Result<C64> {
        (self.f)(b, lam)
    }

    /// `v_i -> v_i prod_{l>i} theta(lambda_il + hbar)`.
    pub fn vector(params: &EllipticParams) -> Gauge {
        let p = *params;
        Gauge::new(Arc::new(move |b, lam| {
            let mut g = cone();
            for l in (b + 1)..lam.len() {
                g *= theta_reduced(lam[b] - lam[l] + p.hbar, &p);
            }
            guard(g, "vector gauge")
        }))
    }

    pub fn trivial() -> Gauge {
        Gauge::new(Arc::new(|_, _| Ok(cone())))
    }

    /// `G_{(b,c)}(lam) = G_b(lam + hbar wt(c)) G_c(lam)` on `X (x) Y`.
    pub fn tensor(gx: &Gauge, gy: &Gauge, y: &GradedSpace, hbar: C64) -> Gauge {
        let (gx, gy, y) = (gx.clone(), gy.clone(), y.clone());
        Gauge::new(Arc::new(move |bc, lam| {
            let (b, c) = (bc / y.dim(), bc % y.dim());
            Ok(gx.value(b, &shifted(lam, y.weight(c), hbar))? * gy.value(c, lam)?)
        }))
    }
}

/// All `L_ij(z)` at once, index `(i-1)*N + (j-1)`.
pub type LFamily = Arc<dyn Fn(C64, &[C64]) -> Result<Vec<CMatrix>> + Send + Sync>;

/// A module over the elliptic quantum group given by its L-operator matrices.
#[derive(Clone)]
pub struct EModule {
    pub n: usize,
    pub params: EllipticParams,
    pub space: GradedSpace,
    pub tag: String,
    /// Rows and columns below this index are exact; set for truncated infinite modules.
    pub exact_below: Option<usize>,
    l: LFamily,
}

impl fmt::Debug for EModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EModule({}, dim {})", self.tag, self.space.dim())
    }
}

impl EModule {
    pub fn new(n: usize, params: EllipticParams, space: GradedSpace, tag: &str, l: LFamily) -> Self {
        EModule { n, params, space, tag: tag.to_string(), exact_below: None, l }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn l_all(&self, z: C64, lam: &[C64]) -> Result<Vec<CMatrix>> {
        if lam.len() != self.n {
            return Err(Error::Mismatch(format!("lambda has {} coordinates, N={}", lam.len(), self.n)));
        }
        (self.l)(z, lam)
    }

    pub fn l(&self, i: usize, j: usize, z: C64, lam: &[C64]) -> Result<CMatrix> {
        Ok(self.l_all(z, lam)?.swap_remove((i - 1) * self.n + (j - 1)))
    }

    /// `L_ij(z)` as a difference map of bidegree `(eps_i, eps_j)`.
    pub fn l_op(&self, i: usize, j: usize, z: C64) -> DifferenceOperator {
        let m = self.clone();
        let d = self.dim();
        DifferenceOperator::new(d, d, eps(self.n, i), eps(self.n, j), self.params.hbar, Arc::new(move |lam| m.l(i, j, z, lam)))
    }

    /// Pullback by the spectral shift `z -> z + u hbar`.
    pub fn spectral_shift(&self, u: C64) -> EModule {
        let l = self.l.clone();
        let h = self.params.hbar;
        EModule { l: Arc::new(move |z, lam| l(z + u * h, lam)), tag: format!("{}[+{u}]", self.tag), ..self.clone() }
    }

    /// Tensor with the one-dimensional module whose L-matrix is `g(z) Id`.
    pub fn twisted(&self, g: Arc<dyn Fn(C64) -> C64 + Send + Sync>, label: &str) -> EModule {
        let l = self.l.clone();
        EModule {
            l: Arc::new(move |z, lam| {
                let s = g(z);
                Ok(l(z, lam)?.into_iter().map(|m| m * s).collect())
            }),
            tag: format!("{}*{label}", self.tag),
            ..self.clone()
        }
    }

    /// Scales entry `(row, col)` of `L_ij` by `factor`; used to probe the residual checks.
    pub fn corrupted(&self, i: usize, j: usize, row: usize, col: usize, factor: f64) -> EModule {
        let l = self.l.clone();
        let n = self.n;
        EModule {
            l: Arc::new(move |z, lam| {
                let mut v = l(z, lam)?;
                v[(i - 1) * n + (j - 1)][(row, col)] *= factor;
                Ok(v)
            }),
            tag: format!("{}(corrupted)", self.tag),
            ..self.clone()
        }
    }
}

/// `V(a)`: `L_ij(z) v_k = sum_l theta(z'+hbar)/theta(z') R^{jk}_{il}(z'; lam) v_l`, `z' = z + a hbar`.
pub fn vector_module(n: usize, a: C64, params: &EllipticParams) -> EModule {
    let p = *params;
    let space = GradedSpace { n, basis: (1..=n).map(|i| BasisVector { label: format!("v{i}"), weight: eps(n, i) }).collect() };
    let l: LFamily = Arc::new(move |z, lam| {
        let zz = z + a * p.hbar;
        let pre = theta_reduced(zz + p.hbar, &p) / guard(theta_reduced(zz, &p), "theta(z) in V(a)")?;
        let r = r_matrix(n, zz, lam, &p)?;
        let mut out = Vec::with_capacity(n * n);
        for i in 1..=n {
            for j in 1..=n {
                let mut m = CMatrix::zeros(n, n);
                for k in 1..=n {
                    for l in 1..=n {
                        let v = r.get(j, k, i, l);
                        if v != czero() {
                            m[(l - 1, k - 1)] = pre * v;
                        }
                    }
                }
                out.push(m);
            }
        }
        Ok(out)
    });
    EModule::new(n, p, space, &format!("V({a})"), l)
}

/// One-dimensional weight-zero module with `L_ij(z) = delta_ij g(z)`.
pub fn one_dimensional(n: usize, params: &EllipticParams, g: Arc<dyn Fn(C64) -> C64 + Send + Sync>, label: &str) -> EModule {
    let space = GradedSpace { n, basis: vec![BasisVector { label: "1".into(), weight: vec![czero(); n] }] };
    let l: LFamily = Arc::new(move |z, _| {
        let v = g(z);
        Ok((0..n * n).map(|ij| CMatrix::from_element(1, 1, if ij / n == ij % n { v } else { czero() })).collect())
    });
    EModule::new(n, *params, space, label, l)
}

/// `L^{X (x) Y}_ij = sum_k L^X_ik (x) L^Y_kj`, with
/// `[Phi (x) Psi]_{(b',c'),(b,c)}(lam) = [Phi]_{b'b}(lam + hbar wt(c')) [Psi]_{c'c}(lam)`.
pub fn tensor_module(x: &EModule, y: &EModule) -> Result<EModule> {
    if x.n != y.n || x.params != y.params {
        return Err(Error::Mismatch("tensor factors differ in N or parameters".into()));
    }
    let n = x.n;
    let (xs, ys) = (x.clone(), y.clone());
    let hbar = x.params.hbar;
    let blocks = y.space.weight_blocks();
    let (dx, dy) = (x.dim(), y.dim());
    let l: LFamily = Arc::new(move |z, lam| {
        let ly = ys.l_all(z, lam)?;
        // X evaluated at lam + hbar wt(c') for each weight c' of Y.
        let mut lx_by_row = vec![None; dy];
        for (w, idx) in &blocks {
            let v = Arc::new(xs.l_all(z, &shifted(lam, w, hbar))?);
            for &c in idx {
                lx_by_row[c] = Some(v.clone());
            }
        }
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut m = CMatrix::zeros(dx * dy, dx * dy);
                for k in 0..n {
                    let lyk = &ly[k * n + j];
                    for cp in 0..dy {
                        let lxk = &lx_by_row[cp].as_ref().expect("row weight evaluated")[i * n + k];
                        for c in 0..dy {
                            let yv = lyk[(cp, c)];
                            if yv == czero() {
                                continue;
                            }
                            for bp in 0..dx {
                                for b in 0..dx {
                                    let xv = lxk[(bp, b)];
                                    if xv != czero() {
                                        m[(bp * dy + cp, b * dy + c)] += xv * yv;
                                    }
                                }
                            }
                        }
                    }
                }
                out.push(m);
            }
        }
        Ok(out)
    });
    let mut m = EModule::new(n, x.params, x.space.tensor(&y.space), &format!("({})*({})", x.tag, y.tag), l);
    m.exact_below = match (x.exact_below, y.exact_below) {
        (None, None) => None,
        _ => return Err(Error::Unsupported("tensor products of truncated modules".into())),
    };
    Ok(m)
}

/// Max over `(i,j,m,n)` and matrix entries of `|LHS - RHS|` in the dynamical RLL relation,
/// divided by `max(1, |LHS|, |RHS|)` over the same window so large-entry modules are judged at
/// working precision.
pub fn rll_residual(x: &EModule, z: C64, w: C64, lam: &[C64]) -> Result<f64> {
    let n = x.n;
    let h = x.params.hbar;
    let p = &x.params;
    let d = x.dim();
    let keep = x.exact_below.unwrap_or(d);
    let lz = x.l_all(z, lam)?;
    let lw = x.l_all(w, lam)?;
    let mut lw_shift = Vec::with_capacity(n);
    let mut lz_shift = Vec::with_capacity(n);
    for i in 1..=n {
        let s = shifted(lam, &eps(n, i), h);
        lw_shift.push(x.l_all(w, &s)?);
        lz_shift.push(x.l_all(z, &s)?);
    }
    let r0 = r_matrix(n, z - w, lam, p)?;
    let mut r_rows = Vec::with_capacity(d);
    let mut cache: Vec<(Vec<C64>, Arc<crate::rmatrix::RMatrixValue>)> = Vec::new();
    for b in 0..d {
        let wt = x.space.weight(b);
        let hit = cache.iter().find(|(cw, _)| same_weight(cw, wt)).map(|(_, r)| r.clone());
        let r = match hit {
            Some(r) => r,
            None => {
                let r = Arc::new(r_matrix(n, z - w, &shifted(lam, wt, h), p)?);
                cache.push((wt.to_vec(), r.clone()));
                r
            }
        };
        r_rows.push(r);
    }
    let idx = |i: usize, j: usize| (i - 1) * n + (j - 1);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 1..=n {
        for j in 1..=n {
            for mm in 1..=n {
                for nn in 1..=n {
                    let mut lhs = CMatrix::zeros(d, d);
                    let mut rhs = CMatrix::zeros(d, d);
                    for pp in 1..=n {
                        for q in 1..=n {
                            let prod = &lz[idx(pp, i)] * &lw_shift[i - 1][idx(q, j)];
                            for row in 0..d {
                                let c = r_rows[row].get(pp, q, mm, nn);
                                if c != czero() {
                                    for col in 0..d {
                                        lhs[(row, col)] += c * prod[(row, col)];
                                    }
                                }
                            }
                            let c = r0.get(i, j, pp, q);
                            if c != czero() {
                                rhs += (&lw[idx(nn, q)] * &lz_shift[q - 1][idx(mm, pp)]) * c;
                            }
                        }
                    }
                    let window = |m: &CMatrix| max_norm(&m.view((0, 0), (keep, keep)).into_owned());
                    scale = scale.max(window(&lhs)).max(window(&rhs));
                    worst = worst.max(window(&(lhs - rhs)));
                }
            }
        }
    }
    Ok(worst / scale)
}

/// Which permutations enter the quantum minor `D_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MinorReading {
    /// Permutations of the last `k` letters.
    #[default]
    LastLetters,
    /// Permutations fixing the last `k` letters: only the identity survives in the product.
    FixLastLetters,
}

fn permutations(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    if items.len() <= 1 {
        return vec![(items.to_vec(), 1.0)];
    }
    let mut out = Vec::new();
    for (pos, &first) in items.iter().enumerate() {
        let rest: Vec<usize> = items.iter().enumerate().filter(|(q, _)| *q != pos).map(|(_, &v)| v).collect();
        let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
        for (mut p, s) in permutations(&rest) {
            p.insert(0, first);
            out.push((p, s * sign));
        }
    }
    out
}

/// `Theta_k(lam) = prod_{N-k < i < j <= N} theta(lambda_ij)`.
pub fn theta_k(k: usize, lam: &[C64], params: &EllipticParams) -> C64 {
    let n = lam.len();
    let mut v = cone();
    for i in (n - k)..n {
        for j in (i + 1)..n {
            v *= theta_reduced(lam[i] - lam[j], params);
        }
    }
    v
}

/// `D_k(z) = mu_r(Theta_k)/mu_l(Theta_k) sum_sigma sign(sigma) prod_{i=N}^{N-k+1} L_{sigma(i),i}(z+(N-i)hbar)`.
pub fn quantum_minor(x: &EModule, k: usize, z: C64, reading: MinorReading) -> Result<DifferenceOperator> {
    let n = x.n;
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange(format!("minor {k} for N={n}")));
    }
    let letters: Vec<usize> = ((n - k + 1)..=n).rev().collect();
    let perms = match reading {
        MinorReading::LastLetters => permutations(&letters),
        MinorReading::FixLastLetters => vec![(letters.clone(), 1.0)],
    };
    let h = x.params.hbar;
    let mut total: Option<DifferenceOperator> = None;
    for (img, sign) in perms {
        // img[t] = sigma(N - t)
        let mut op: Option<DifferenceOperator> = None;
        for (t, &i) in letters.iter().enumerate() {
            let f = x.l_op(img[t], i, z + h * t as f64);
            op = Some(match op {
                None => f,
                Some(o) => o.compose(&f),
            });
        }
        let op = op.expect("k >= 1").scale(C64::new(sign, 0.0));
        total = Some(match total {
            None => op,
            Some(t) => t.add(&op),
        });
    }
    let p = x.params;
    let pre: Arc<dyn Fn(&[C64], &[C64]) -> Result<C64> + Send + Sync> =
        Arc::new(move |l1, l2| Ok(theta_k(k, l1, &p) / guard(theta_k(k, l2, &p), "Theta_k")?));
    Ok(total.expect("nonempty").left_coefficient(&x.space, pre))
}

/// Diagonal of `D_1, ..., D_N` in a basis where they are triangular; entry `[l-1][b]`.
pub fn minor_diagonals(x: &EModule, z: C64, lam: &[C64], gauge: &Gauge) -> Result<Vec<Vec<C64>>> {
    (1..=x.n)
        .map(|l| {
            let m = quantum_minor(x, l, z, MinorReading::LastLetters)?.gauged(gauge).eval(lam)?;
            Ok((0..x.dim()).map(|b| m[(b, b)]).collect())
        })
        .collect()
}

/// `K_m(z)` eigenvalues of a common eigenvector from the minor factorization
/// `D_l(z) = K_N(z) K_{N-1}(z+hbar) ... K_{N-l+1}(z+(l-1)hbar)`; index `m-1`.
pub fn k_eigenvalues(x: &EModule, b: usize, z: C64, lam: &[C64], gauge: &Gauge) -> Result<Vec<C64>> {
    let n = x.n;
    let h = x.params.hbar;
    let mut out = vec![czero(); n];
    for l in 1..=n {
        let zz = z - h * (l - 1) as f64;
        let dl = quantum_minor(x, l, zz, MinorReading::LastLetters)?.gauged(gauge).eval(lam)?[(b, b)];
        let prev = if l == 1 { cone() } else { quantum_minor(x, l - 1, zz, MinorReading::LastLetters)?.gauged(gauge).eval(lam)?[(b, b)] };
        out[n - l] = dl / guard(prev, "minor eigenvalue")?;
    }
    Ok(out)
}

/// `hat L_k(z) = L_kk(z) prod_{j>k} mu_r(theta(lambda_kj)) / mu_l(theta(lambda_kj))`.
pub fn l_hat(x: &EModule, k: usize, z: C64) -> DifferenceOperator {
    let p = x.params;
    let g: Arc<dyn Fn(&[C64], &[C64]) -> Result<C64> + Send + Sync> = Arc::new(move |l1, l2| {
        let mut v = cone();
        for j in k..l1.len() {
            v *= theta_reduced(l1[k - 1] - l1[j], &p) / guard(theta_reduced(l2[k - 1] - l2[j], &p), "theta(lambda_kj)")?;
        }
        Ok(v)
    });
    x.l_op(k, k, z).compose(&DifferenceOperator::moment(&x.space, x.params.hbar, g))
}

/// The sl_2 module `CW_{1,Lambda}` on `v_0..v_depth`, `wt(v_k) = (Lambda-k) eps_1 + k eps_2`;
/// the `b`-action out of `v_depth` is dropped.
pub fn asymptotic_sl2_module(big_lambda: C64, depth: usize, params: &EllipticParams) -> Result<EModule> {
    if depth == 0 {
        return Err(Error::InvalidParams("depth must be positive".into()));
    }
    let p = *params;
    let h = p.hbar;
    let space = GradedSpace {
        n: 2,
        basis: (0..=depth).map(|k| BasisVector { label: format!("v{k}"), weight: vec![big_lambda - k as f64, C64::new(k as f64, 0.0)] }).collect(),
    };
    let dim = depth + 1;
    let l: LFamily = Arc::new(move |w, lam| {
        let th = |x: C64| theta_reduced(x, &p);
        let l12 = lam[0] - lam[1];
        let tw = guard(th(w), "theta(w)")?;
        let (tlm, tl) = (guard(th(l12 - h), "theta(lambda-hbar)")?, guard(th(l12), "theta(lambda)")?);
        let th_h = th(h);
        let mut a = CMatrix::zeros(dim, dim);
        let mut b = CMatrix::zeros(dim, dim);
        let mut c = CMatrix::zeros(dim, dim);
        let mut d = CMatrix::zeros(dim, dim);
        for k in 0..dim {
            let kf = k as f64;
            let lk = big_lambda - kf;
            a[(k, k)] = th(w + lk * h) / tw * th(l12 + (lk + 1.0) * h) / guard(th(l12 + (1.0 - kf) * h), "a(w) denominator")?;
            if k + 1 < dim {
                b[(k + 1, k)] = th(w + l12 + (lk - 1.0) * h) / tw * th(lk * h) * th_h / (tlm * tl);
            }
            if k >= 1 {
                c[(k - 1, k)] = -th(w - l12 + (kf - 1.0) * h) / tw * th(kf * h) / th_h;
            }
            d[(k, k)] = th(w + kf * h) / tw * th(l12 - (kf + 1.0) * h) * th(l12 - kf * h) / (tlm * tl);
        }
        Ok(vec![a, b, c, d])
    });
    let mut m = EModule::new(2, p, space, &format!("CW_1,{big_lambda}"), l);
    m.exact_below = Some(depth);
    Ok(m)
}

/// Small elliptic group generators `t_pq` recovered from an evaluation module.
#[derive(Clone)]
pub struct SmallE {
    pub n: usize,
    pub space: GradedSpace,
    pub hbar: C64,
    /// `t[(p-1)*N + (q-1)]`, bidegree `(eps_q, eps_p)`.
    pub t: Vec<DifferenceOperator>,
    pub z_spread: f64,
}

/// `t_ji = theta(z+a hbar) / theta(z + a hbar + lambda^{2}_i - lambda^{1}_j) L_ij(z)`, checked z-independent at `zs`.
pub fn small_e_extract(x: &EModule, a: C64, zs: &[C64], lam_probe: &[C64]) -> Result<SmallE> {
    let n = x.n;
    let p = x.params;
    let h = p.hbar;
    let make = |i: usize, j: usize, z: C64| {
        let g: Arc<dyn Fn(&[C64], &[C64]) -> Result<C64> + Send + Sync> = Arc::new(move |l1, l2| {
            let za = z + a * h;
            Ok(theta_reduced(za, &p) / guard(theta_reduced(za + l2[i - 1] - l1[j - 1], &p), "evaluation denominator")?)
        });
        x.l_op(i, j, z).left_coefficient(&x.space, g)
    };
    let mut spread: f64 = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            let base = make(i, j, zs[0]).eval(lam_probe)?;
            for z in &zs[1..] {
                spread = spread.max(max_norm(&(make(i, j, *z).eval(lam_probe)? - &base)));
            }
        }
    }
    if spread > 1e-9 {
        return Err(Error::ZDependence(format!("spread {spread:e}")));
    }
    let mut t = Vec::with_capacity(n * n);
    for pp in 1..=n {
        for q in 1..=n {
            // t_pq comes from L_qp.
            let op = make(q, pp, zs[0]);
            t.push(DifferenceOperator { alpha: eps(n, q), beta: eps(n, pp), ..op });
        }
    }
    Ok(SmallE { n, space: x.space.clone(), hbar: h, t, z_spread: spread })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallEResiduals {
    pub row_commute: f64,
    pub column_exchange: f64,
    pub four_term: f64,
}

impl SmallE {
    pub fn t(&self, p: usize, q: usize) -> &DifferenceOperator {
        &self.t[(p - 1) * self.n + (q - 1)]
    }

    fn coeff(&self, op: &DifferenceOperator, g: impl Fn(&[C64], &[C64]) -> C64 + Send + Sync + 'static) -> DifferenceOperator {
        op.left_coefficient(&self.space, Arc::new(move |l1, l2| Ok(g(l1, l2))))
    }

    /// Residuals of the three families of defining relations at `lam`.
    pub fn relation_residuals(&self, lam: &[C64], params: &EllipticParams) -> Result<SmallEResiduals> {
        let n = self.n;
        let h = self.hbar;
        let p = *params;
        let th = move |x: C64| theta_reduced(x, &p);
        let mut res = SmallEResiduals { row_commute: 0.0, column_exchange: 0.0, four_term: 0.0 };
        for i in 1..=n {
            for j in 1..=n {
                for k in 1..=n {
                    let lhs = self.t(i, j).compose(self.t(i, k)).eval(lam)?;
                    let rhs = self.t(i, k).compose(self.t(i, j)).eval(lam)?;
                    res.row_commute = res.row_commute.max(max_norm(&(lhs - rhs)));
                    if i != j {
                        let lhs = self.t(i, k).compose(self.t(j, k)).eval(lam)?;
                        let c = th(lam[i - 1] - lam[j - 1] - h) / th(lam[i - 1] - lam[j - 1] + h);
                        let rhs = self.t(j, k).compose(self.t(i, k)).eval(lam)? * c;
                        res.column_exchange = res.column_exchange.max(max_norm(&(lhs - rhs)));
                    }
                }
            }
        }
        for i in 1..=n {
            for j in 1..=n {
                for k in 1..=n {
                    for l in 1..=n {
                        if i == k || j == l {
                            continue;
                        }
                        let (i0, j0, k0, l0) = (i - 1, j - 1, k - 1, l - 1);
                        let a = self.coeff(&self.t(i, j).compose(self.t(k, l)), move |_, l2| th(l2[j0] - l2[l0] - h) / th(l2[j0] - l2[l0]));
                        let b = self.coeff(&self.t(k, l).compose(self.t(i, j)), move |l1, _| th(l1[i0] - l1[k0] - h) / th(l1[i0] - l1[k0]));
                        let c = self.coeff(&self.t(i, l).compose(self.t(k, j)), move |l1, l2| {
                            let (x, y) = (l1[i0] - l1[k0], l2[j0] - l2[l0]);
                            th(x + y) * th(-h) / (th(x) * th(y))
                        });
                        let r = a.eval(lam)? - b.eval(lam)? - c.eval(lam)?;
                        res.four_term = res.four_term.max(max_norm(&r));
                    }
                }
            }
        }
        Ok(res)
    }
}
