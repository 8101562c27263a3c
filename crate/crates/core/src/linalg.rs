//! Dense complex linear algebra on top of `faer`.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Par, Scale, Side};

pub use faer::{c64, Col, Mat};

pub type CMat = Mat<c64>;
pub type CVec = Col<c64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("matrix is singular to working precision")]
    Singular,
}

pub fn re(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { re(d[i]) } else { c64::ZERO })
}

pub fn diag(d: &[c64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { c64::ZERO })
}

pub fn scale(a: &CMat, s: c64) -> CMat {
    Scale(s) * a
}

pub fn scale_re(a: &CMat, s: f64) -> CMat {
    Scale(re(s)) * a
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Frobenius norm; all residuals in this crate are reported in it.
pub fn norm(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn spectral_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().map(|s| s[0]).unwrap_or(f64::NAN)
}

pub fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vnorm(u: &CVec) -> f64 {
    u.norm_l2()
}

/// (u|v), conjugate-linear in `u`.
pub fn dot(u: &CVec, v: &CVec) -> c64 {
    u.adjoint() * v
}

pub fn hermitian_part(a: &CMat) -> CMat {
    scale_re(&(a + a.adjoint()), 0.5)
}

pub fn hermiticity_residual(a: &CMat) -> f64 {
    norm(&(a - a.adjoint()))
}

pub fn is_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// Builds `[[a, b], [c, d]]` from square blocks of equal size.
pub fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = zeros(2 * n, 2 * n);
    out.submatrix_mut(0, 0, n, n).copy_from(a);
    out.submatrix_mut(0, n, n, n).copy_from(b);
    out.submatrix_mut(n, 0, n, n).copy_from(c);
    out.submatrix_mut(n, n, n, n).copy_from(d);
    out
}

pub fn block(a: &CMat, row: usize, col: usize, n: usize) -> CMat {
    a.submatrix(row * n, col * n, n, n).to_owned()
}

pub fn concat(top: &CVec, bottom: &CVec) -> CVec {
    let n = top.nrows();
    Col::from_fn(n + bottom.nrows(), |i| if i < n { top[i] } else { bottom[i - n] })
}

pub fn split(u: &CVec) -> (CVec, CVec) {
    let n = u.nrows() / 2;
    (Col::from_fn(n, |i| u[i]), Col::from_fn(n, |i| u[n + i]))
}

pub struct HermitianEigen {
    /// ascending
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn hermitian_eigen(a: &CMat) -> Result<HermitianEigen, LinalgError> {
    let h = hermitian_part(a);
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|_| LinalgError::NoConvergence)?;
    let s = evd.S();
    let values = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok(HermitianEigen { values, vectors: evd.U().to_owned() })
}

pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>, LinalgError> {
    hermitian_part(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| LinalgError::NoConvergence)
}

/// `g(A)` for hermitian `A` through its eigendecomposition.
pub fn hermitian_apply(a: &CMat, g: impl Fn(f64) -> f64) -> Result<CMat, LinalgError> {
    let e = hermitian_eigen(a)?;
    let n = a.nrows();
    let v = &e.vectors;
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * g(e.values[j]));
    Ok(&scaled * v.adjoint())
}

#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<c64>,
    pub vectors: CMat,
}

pub fn eigen(a: &CMat) -> Result<Eigen, LinalgError> {
    let evd = a.eigen().map_err(|_| LinalgError::NoConvergence)?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok(Eigen { values, vectors: evd.U().to_owned() })
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<c64>, LinalgError> {
    a.eigenvalues().map_err(|_| LinalgError::NoConvergence)
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>, LinalgError> {
    a.singular_values().map_err(|_| LinalgError::NoConvergence)
}

pub fn rank(a: &CMat, tol: f64) -> Result<usize, LinalgError> {
    Ok(singular_values(a)?.iter().filter(|&&s| s > tol).count())
}

pub fn inverse(a: &CMat) -> Result<CMat, LinalgError> {
    let inv = a.partial_piv_lu().inverse();
    if is_finite(&inv) {
        Ok(inv)
    } else {
        Err(LinalgError::Singular)
    }
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat, LinalgError> {
    let x = a.partial_piv_lu().solve(b);
    if is_finite(&x) {
        Ok(x)
    } else {
        Err(LinalgError::Singular)
    }
}

pub fn solve_vec(a: &CMat, b: &CVec) -> Result<CVec, LinalgError> {
    let x = a.partial_piv_lu().solve(b);
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(x)
    } else {
        Err(LinalgError::Singular)
    }
}

/// Condition number in the 1-norm after normalizing the columns of `v`.
pub fn column_scaled_condition(v: &CMat) -> f64 {
    let n = v.ncols();
    let mut w = v.clone();
    for j in 0..n {
        let s = w.col(j).norm_l2();
        if s > 0.0 {
            for i in 0..w.nrows() {
                w[(i, j)] /= s;
            }
        }
    }
    match inverse(&w) {
        Ok(inv) => one_norm(&w) * one_norm(&inv),
        Err(_) => f64::INFINITY,
    }
}

/// Evaluates `sum c_k A^k` by Horner's rule; `coeffs[k]` multiplies `A^k`.
pub fn polynomial(a: &CMat, coeffs: &[f64]) -> CMat {
    let n = a.nrows();
    let mut acc = zeros(n, n);
    for &c in coeffs.iter().rev() {
        acc = &acc * a;
        for i in 0..n {
            acc[(i, i)] += re(c);
        }
    }
    acc
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by degree-13 Pade approximation with scaling and squaring.
pub fn expm(a: &CMat) -> Result<CMat, LinalgError> {
    let n = a.nrows();
    let theta13 = 5.371920351148152;
    let nrm = one_norm(a);
    if !nrm.is_finite() {
        return Err(LinalgError::Singular);
    }
    let s = if nrm > theta13 { (nrm / theta13).log2().ceil() as i32 } else { 0 };
    let a = scale_re(a, 0.5f64.powi(s));
    let b = &PADE13;
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |x6: f64, x4: f64, x2: f64, x0: f64| {
        scale_re(&a6, x6) + scale_re(&a4, x4) + scale_re(&a2, x2) + scale_re(&id, x0)
    };
    let inner_u = &a6 * (scale_re(&a6, b[13]) + scale_re(&a4, b[11]) + scale_re(&a2, b[9]));
    let u = &a * (inner_u + lin(b[7], b[5], b[3], b[1]));
    let v = &a6 * (scale_re(&a6, b[12]) + scale_re(&a4, b[10]) + scale_re(&a2, b[8]))
        + lin(b[6], b[4], b[2], b[0]);
    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Complex Schur form `A = Q T Q*` with `Q` unitary and `T` upper triangular.
#[derive(Debug, Clone)]
pub struct Schur {
    pub q: CMat,
    pub t: CMat,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<c64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }
}

fn hessenberg(a: &CMat) -> (CMat, CMat) {
    use faer::linalg::{evd::hessenberg as hb, householder, qr::no_pivoting::factor::recommended_block_size};
    let n = a.nrows();
    let mut h = a.clone();
    let mut z = identity(n);
    if n < 3 {
        return (h, z);
    }
    let bs = recommended_block_size::<c64>(n - 1, n - 1);
    let par = Par::Seq;
    let req = hb::hessenberg_in_place_scratch::<c64>(n, bs, par, Default::default()).or(
        householder::apply_block_householder_sequence_on_the_right_in_place_scratch::<c64>(n - 1, bs, n - 1),
    );
    let mut buf = MemBuffer::new(req);
    let stack = MemStack::new(&mut buf);
    let mut hh = zeros(bs, n - 1);
    hb::hessenberg_in_place(h.as_mut(), hh.as_mut(), par, stack, Default::default());
    householder::apply_block_householder_sequence_on_the_right_in_place_with_conj(
        h.submatrix(1, 0, n - 1, n - 1),
        hh.as_ref(),
        faer::Conj::No,
        z.submatrix_mut(1, 1, n - 1, n - 1),
        par,
        stack,
    );
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = c64::ZERO;
        }
    }
    (h, z)
}

fn givens(a: c64, b: c64) -> (f64, c64) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, c64::ZERO);
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let r = na.hypot(nb);
    (na / r, (a / na) * b.conj() / r)
}

fn rot_rows(h: &mut CMat, k: usize, c: f64, s: c64, cols: std::ops::Range<usize>) {
    for j in cols {
        let (x, y) = (h[(k, j)], h[(k + 1, j)]);
        h[(k, j)] = x * c + s * y;
        h[(k + 1, j)] = -s.conj() * x + y * c;
    }
}

fn rot_cols(h: &mut CMat, k: usize, c: f64, s: c64, rows: std::ops::Range<usize>) {
    for i in rows {
        let (x, y) = (h[(i, k)], h[(i, k + 1)]);
        h[(i, k)] = x * c + s.conj() * y;
        h[(i, k + 1)] = -s * x + y * c;
    }
}

fn wilkinson_shift(a: c64, b: c64, c: c64, d: c64) -> c64 {
    let p = (a - d) * 0.5;
    let bc = b * c;
    let disc = (p * p + bc).sqrt();
    let (d1, d2) = (p + disc, p - disc);
    let den = if d1.norm() >= d2.norm() { d1 } else { d2 };
    if den.norm() == 0.0 {
        d
    } else {
        d - bc / den
    }
}

/// Hessenberg reduction followed by single-shift implicit QR sweeps.
pub fn schur(a: &CMat) -> Result<Schur, LinalgError> {
    let n = a.nrows();
    if !is_finite(a) {
        return Err(LinalgError::NoConvergence);
    }
    let (mut h, mut q) = hessenberg(a);
    if n <= 1 {
        return Ok(Schur { q, t: h });
    }
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let max_iter = 60 * n;
    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let mut scale = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if scale == 0.0 {
                scale = norm(&h);
            }
            if sub <= eps * scale {
                h[(lo, lo - 1)] = c64::ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > max_iter {
            return Err(LinalgError::NoConvergence);
        }
        let mu = if iter % 11 == 0 {
            h[(hi, hi)] + re(h[(hi, hi - 1)].norm() * 0.75)
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };
        let (c, s) = givens(h[(lo, lo)] - mu, h[(lo + 1, lo)]);
        rot_rows(&mut h, lo, c, s, lo..n);
        rot_cols(&mut h, lo, c, s, 0..(lo + 3).min(hi + 1));
        rot_cols(&mut q, lo, c, s, 0..n);
        for k in lo + 1..hi {
            let (c, s) = givens(h[(k, k - 1)], h[(k + 1, k - 1)]);
            rot_rows(&mut h, k, c, s, k - 1..n);
            h[(k + 1, k - 1)] = c64::ZERO;
            rot_cols(&mut h, k, c, s, 0..(k + 3).min(hi + 1));
            rot_cols(&mut q, k, c, s, 0..n);
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            h[(i, j)] = c64::ZERO;
        }
    }
    Ok(Schur { q, t: h })
}

impl Schur {
    /// Swaps the diagonal entries `k` and `k + 1` by a unitary rotation.
    pub fn swap(&mut self, k: usize) {
        let n = self.t.nrows();
        let (a, b) = (self.t[(k, k)], self.t[(k + 1, k + 1)]);
        if a == b {
            return;
        }
        let (c, s) = givens(self.t[(k, k + 1)], b - a);
        rot_rows(&mut self.t, k, c, s, k..n);
        rot_cols(&mut self.t, k, c, s, 0..k + 2);
        rot_cols(&mut self.q, k, c, s, 0..n);
        self.t[(k + 1, k)] = c64::ZERO;
        self.t[(k, k)] = b;
        self.t[(k + 1, k + 1)] = a;
    }

    /// Reorders the form so that eigenvalues chained within `gap` of each other are
    /// contiguous, returning the diagonal blocks as ranges.
    pub fn cluster(&mut self, gap: f64) -> Vec<std::ops::Range<usize>> {
        let n = self.t.nrows();
        let values = self.eigenvalues();
        let mut group: Vec<usize> = (0..n).collect();
        fn root(g: &mut [usize], mut i: usize) -> usize {
            while g[i] != i {
                g[i] = g[g[i]];
                i = g[i];
            }
            i
        }
        for i in 0..n {
            for j in i + 1..n {
                if (values[i] - values[j]).norm() <= gap {
                    let (ri, rj) = (root(&mut group, i), root(&mut group, j));
                    group[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let mut key: Vec<usize> = (0..n).map(|i| root(&mut group, i)).collect();
        // stable bubble sort by the first position of each group
        for pass in 0..n {
            let mut moved = false;
            for k in 0..n.saturating_sub(1 + pass) {
                if key[k] > key[k + 1] {
                    self.swap(k);
                    key.swap(k, k + 1);
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        let mut blocks = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || key[k] != key[start] {
                blocks.push(start..k);
                start = k;
            }
        }
        blocks
    }
}
