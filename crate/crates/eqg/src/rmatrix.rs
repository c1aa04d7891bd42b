//! The dynamical elliptic R-matrix and the dynamical Yang-Baxter residual.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::theta::{theta_reduced, EllipticParams, C64};

pub type CMatrix = DMatrix<C64>;

/// Denominators smaller than this are treated as poles.
pub const POLE_GUARD: f64 = 1e-8;

/// `R(z; lambda)` as an `N^2 x N^2` matrix; row `(p,q)`, column `(i,j)` holds `R^{ij}_{pq}`.
#[derive(Debug, Clone)]
pub struct RMatrixValue {
    pub n: usize,
    pub entries: CMatrix,
}

impl RMatrixValue {
    /// `R^{ij}_{pq}` with 1-based indices.
    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> C64 {
        let n = self.n;
        self.entries[((p - 1) * n + (q - 1), (i - 1) * n + (j - 1))]
    }
}

pub(crate) fn guard(v: C64, what: &str) -> Result<C64> {
    if v.norm() < POLE_GUARD {
        Err(Error::Pole(format!("{what} = {v:e}")))
    } else {
        Ok(v)
    }
}

/// Precomputed theta values shared by all entries at one `(z, lambda)`.
struct Kernel {
    n: usize,
    /// `theta(z)/theta(z+hbar)`
    diag_z: C64,
    /// `theta(hbar)/theta(z+hbar)`
    exch_z: C64,
    /// `theta(lambda_ij - hbar)/theta(lambda_ij)`
    diag_l: Vec<C64>,
    /// `theta(z + lambda_ij)/theta(lambda_ij)`
    exch_l: Vec<C64>,
}

impl Kernel {
    fn new(n: usize, z: C64, lam: &[C64], params: &EllipticParams) -> Result<Self> {
        let th = |x: C64| theta_reduced(x, params);
        let h = params.hbar;
        let den = guard(th(z + h), "theta(z+hbar)")?;
        let mut diag_l = vec![C64::new(0.0, 0.0); n * n];
        let mut exch_l = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let l = lam[i] - lam[j];
                let tl = guard(th(l), &format!("theta(lambda_{}{})", i + 1, j + 1))?;
                diag_l[i * n + j] = th(l - h) / tl;
                exch_l[i * n + j] = th(z + l) / tl;
            }
        }
        Ok(Kernel { n, diag_z: th(z) / den, exch_z: th(h) / den, diag_l, exch_l })
    }

    fn entry(&self, i: usize, j: usize, p: usize, q: usize) -> C64 {
        let n = self.n;
        if i == j {
            if p == i && q == i {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        } else if p == i && q == j {
            self.diag_z * self.diag_l[i * n + j]
        } else if p == j && q == i {
            // E_pq (x) E_qp maps v_q (x) v_p to v_p (x) v_q.
            self.exch_z * self.exch_l[p * n + q]
        } else {
            C64::new(0.0, 0.0)
        }
    }
}

/// `R^{ij}_{pq}(z; lambda)`, 1-based, without building the full matrix.
pub fn r_entry(i: usize, j: usize, p: usize, q: usize, z: C64, lam: &[C64], params: &EllipticParams) -> Result<C64> {
    let n = lam.len();
    for x in [i, j, p, q] {
        if x == 0 || x > n {
            return Err(Error::IndexOutOfRange(format!("{x} for N={n}")));
        }
    }
    Ok(Kernel::new(n, z, lam, params)?.entry(i - 1, j - 1, p - 1, q - 1))
}

pub fn r_matrix(n: usize, z: C64, lam: &[C64], params: &EllipticParams) -> Result<RMatrixValue> {
    if lam.len() != n {
        return Err(Error::Mismatch(format!("lambda has {} coordinates, N={n}", lam.len())));
    }
    let k = Kernel::new(n, z, lam, params)?;
    let mut m = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            for p in 0..n {
                for q in 0..n {
                    let v = k.entry(i, j, p, q);
                    if v != C64::new(0.0, 0.0) {
                        m[(p * n + q, i * n + j)] = v;
                    }
                }
            }
        }
    }
    Ok(RMatrixValue { n, entries: m })
}

/// `R` acting on legs `(a, b)` of `(C^N)^{(x)3}`, with lambda shifted by `hbar eps_c`
/// where `c` is the basis index on leg `shift_leg`.
fn leg_matrix(
    n: usize,
    legs: (usize, usize),
    shift_leg: Option<usize>,
    z: C64,
    lam: &[C64],
    params: &EllipticParams,
) -> Result<CMatrix> {
    let dim = n * n * n;
    let idx = |t: [usize; 3]| t[0] * n * n + t[1] * n + t[2];
    let other = 3 - legs.0 - legs.1;
    let mut kernels = Vec::with_capacity(n);
    for c in 0..n {
        let mut l = lam.to_vec();
        if shift_leg.is_some() {
            l[c] += params.hbar;
        }
        kernels.push(Kernel::new(n, z, &l, params)?);
    }
    let mut m = CMatrix::zeros(dim, dim);
    for c in 0..n {
        let k = if shift_leg.is_some() { &kernels[c] } else { &kernels[0] };
        for i in 0..n {
            for j in 0..n {
                for p in 0..n {
                    for q in 0..n {
                        let v = k.entry(i, j, p, q);
                        if v == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut col = [0; 3];
                        let mut row = [0; 3];
                        col[legs.0] = i;
                        col[legs.1] = j;
                        col[other] = c;
                        row[legs.0] = p;
                        row[legs.1] = q;
                        row[other] = c;
                        m[(idx(row), idx(col))] = v;
                    }
                }
            }
        }
    }
    debug_assert!(shift_leg.is_none() || shift_leg == Some(other));
    Ok(m)
}

/// Max-norm of the difference of the two sides of the dynamical Yang-Baxter equation.
pub fn dybe_residual(n: usize, z: C64, w: C64, lam: &[C64], params: &EllipticParams) -> Result<f64> {
    if lam.len() != n {
        return Err(Error::Mismatch(format!("lambda has {} coordinates, N={n}", lam.len())));
    }
    let r12_h3 = leg_matrix(n, (0, 1), Some(2), z - w, lam, params)?;
    let r13 = leg_matrix(n, (0, 2), None, z, lam, params)?;
    let r23_h1 = leg_matrix(n, (1, 2), Some(0), w, lam, params)?;
    let r23 = leg_matrix(n, (1, 2), None, w, lam, params)?;
    let r13_h2 = leg_matrix(n, (0, 2), Some(1), z, lam, params)?;
    let r12 = leg_matrix(n, (0, 1), None, z - w, lam, params)?;
    let lhs = r12_h3 * r13 * r23_h1;
    let rhs = r23 * r13_h2 * r12;
    Ok(max_norm(&(lhs - rhs)))
}

pub fn max_norm(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}
