//! Finite-dimensional Krein spaces: a hermitian invertible Gram matrix `M`
//! defines the indefinite form `[u, v] = (u | M v)`.

use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::linalg::{self, c64, CMat, CVec, LinalgError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KreinError {
    #[error("Gram matrix is not hermitian (residual {residual:.3e})")]
    NonHermitian { residual: f64 },
    #[error("Gram matrix is degenerate (eigenvalue {eigenvalue:.3e} inside the threshold)")]
    Degenerate { eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("basis of {len} vectors has rank {rank}")]
    RankDeficientBasis { rank: usize, len: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy)]
pub struct GramTolerance {
    /// relative hermiticity tolerance
    pub hermitian: f64,
    /// eigenvalues with modulus below `threshold * |M|` are degenerate
    pub threshold: f64,
}

impl Default for GramTolerance {
    fn default() -> Self {
        GramTolerance { hermitian: 1e-10, threshold: 1e-12 }
    }
}

/// A hermitian invertible Gram matrix together with its polar data `M = J |M|`.
#[derive(Debug, Clone)]
pub struct GramStructure {
    gram: CMat,
    gram_inv: CMat,
    fundamental_symmetry: CMat,
    modulus: CMat,
    neg_index: usize,
    inversion_condition: f64,
    norm: f64,
}

pub fn build_gram(m: &CMat) -> Result<GramStructure, KreinError> {
    build_gram_with(m, GramTolerance::default())
}

pub fn build_gram_with(m: &CMat, tol: GramTolerance) -> Result<GramStructure, KreinError> {
    if m.nrows() != m.ncols() {
        return Err(KreinError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let scale = linalg::norm(m).max(f64::MIN_POSITIVE);
    let residual = linalg::hermiticity_residual(m);
    if residual > tol.hermitian * scale {
        return Err(KreinError::NonHermitian { residual });
    }
    let eig = linalg::hermitian_eigen(m)?;
    let top = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = tol.threshold * top;
    if let Some(&bad) = eig.values.iter().find(|x| x.abs() <= floor) {
        return Err(KreinError::Degenerate { eigenvalue: bad });
    }
    let n = m.nrows();
    let v = &eig.vectors;
    let with = |g: &dyn Fn(f64) -> f64| {
        let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * g(eig.values[j]));
        &scaled * v.adjoint()
    };
    let fundamental_symmetry = with(&|x: f64| x.signum());
    let modulus = with(&|x: f64| x.abs());
    let gram_inv = with(&|x: f64| 1.0 / x);
    let neg_index = eig.values.iter().filter(|&&x| x < 0.0).count();
    let inversion_condition = eig.values.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    Ok(GramStructure {
        gram: linalg::hermitian_part(m),
        gram_inv,
        fundamental_symmetry,
        modulus,
        neg_index,
        inversion_condition,
        norm: top,
    })
}

impl GramStructure {
    pub fn identity(n: usize) -> Self {
        GramStructure {
            gram: linalg::identity(n),
            gram_inv: linalg::identity(n),
            fundamental_symmetry: linalg::identity(n),
            modulus: linalg::identity(n),
            neg_index: 0,
            inversion_condition: 1.0,
            norm: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    pub fn gram_inverse(&self) -> &CMat {
        &self.gram_inv
    }

    pub fn fundamental_symmetry(&self) -> &CMat {
        &self.fundamental_symmetry
    }

    pub fn modulus(&self) -> &CMat {
        &self.modulus
    }

    /// Number of negative squares of the form.
    pub fn neg_index(&self) -> usize {
        self.neg_index
    }

    /// Smallest singular value of `M`.
    pub fn inversion_condition(&self) -> f64 {
        self.inversion_condition
    }

    /// Spectral norm of `M`.
    pub fn gram_norm(&self) -> f64 {
        self.norm
    }

    /// Always true in finite dimension; kept for symmetry with the infinite-dimensional notion.
    pub fn is_pontryagin(&self) -> bool {
        self.neg_index.min(self.dim() - self.neg_index) < self.dim()
    }

    fn check_vec(&self, u: &CVec) -> Result<(), KreinError> {
        if u.nrows() != self.dim() {
            return Err(KreinError::DimensionMismatch { expected: self.dim(), found: u.nrows() });
        }
        Ok(())
    }

    fn check_mat(&self, a: &CMat) -> Result<(), KreinError> {
        for d in [a.nrows(), a.ncols()] {
            if d != self.dim() {
                return Err(KreinError::DimensionMismatch { expected: self.dim(), found: d });
            }
        }
        Ok(())
    }

    /// `[u, v] = (u | M v)`.
    pub fn inner(&self, u: &CVec, v: &CVec) -> Result<c64, KreinError> {
        self.check_vec(u)?;
        self.check_vec(v)?;
        Ok(u.adjoint() * (&self.gram * v))
    }

    /// `M^{-1} A* M`.
    pub fn dagger(&self, a: &CMat) -> Result<CMat, KreinError> {
        self.check_mat(a)?;
        Ok(&self.gram_inv * a.adjoint() * &self.gram)
    }

    /// `|M A - A* M|`, zero for Krein-selfadjoint `A`.
    pub fn selfadjoint_residual(&self, a: &CMat) -> Result<f64, KreinError> {
        self.check_mat(a)?;
        let ma = &self.gram * a;
        Ok(linalg::norm(&(&ma - ma.adjoint())))
    }

    pub fn classify_subspace(&self, basis: &[CVec]) -> Result<SubspaceClass, KreinError> {
        classify_subspace_with(self, basis, 1e-10)
    }

    pub fn projection_check(&self, p: &CMat) -> Result<ProjectionReport, KreinError> {
        orthogonal_projection_check(self, p)
    }
}

pub fn krein_inner(g: &GramStructure, u: &CVec, v: &CVec) -> Result<c64, KreinError> {
    g.inner(u, v)
}

pub fn dagger(g: &GramStructure, a: &CMat) -> Result<CMat, KreinError> {
    g.dagger(a)
}

/// A matrix viewed as an operator on a Krein space.
#[derive(Debug, Clone)]
pub struct KreinOperator {
    pub matrix: CMat,
    pub gram: Arc<GramStructure>,
    /// `|M A - A* M|`
    pub selfadjoint_residual: f64,
    /// `|A† A - I|`
    pub unitary_residual: f64,
}

impl KreinOperator {
    pub fn new(matrix: CMat, gram: Arc<GramStructure>) -> Result<Self, KreinError> {
        let selfadjoint_residual = gram.selfadjoint_residual(&matrix)?;
        let ad = gram.dagger(&matrix)?;
        let unitary_residual = linalg::norm(&(&ad * &matrix - linalg::identity(matrix.nrows())));
        Ok(KreinOperator { matrix, gram, selfadjoint_residual, unitary_residual })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Selfadjointness residual relative to `|M A|`.
    pub fn relative_selfadjoint_residual(&self) -> f64 {
        let scale = linalg::norm(&(self.gram.gram() * &self.matrix)).max(f64::MIN_POSITIVE);
        self.selfadjoint_residual / scale
    }

    pub fn is_selfadjoint(&self, tol: f64) -> bool {
        self.relative_selfadjoint_residual() <= tol
    }

    pub fn dagger(&self) -> CMat {
        self.gram.gram_inverse() * self.matrix.adjoint() * self.gram.gram()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubspaceKind {
    Positive,
    UniformlyPositive,
    Negative,
    Neutral,
    Indefinite,
}

#[derive(Debug, Clone)]
pub struct SubspaceClass {
    pub kind: SubspaceKind,
    /// restricted Gram is invertible
    pub krein_subspace: bool,
    pub witness: Option<CVec>,
    pub gram_restriction: CMat,
    /// smallest eigenvalue of the restricted Gram over its largest modulus
    pub margin: f64,
}

pub fn classify_subspace(g: &GramStructure, basis: &[CVec]) -> Result<SubspaceClass, KreinError> {
    classify_subspace_with(g, basis, 1e-10)
}

pub fn classify_subspace_with(
    g: &GramStructure,
    basis: &[CVec],
    tol: f64,
) -> Result<SubspaceClass, KreinError> {
    let k = basis.len();
    if k == 0 {
        return Err(KreinError::RankDeficientBasis { rank: 0, len: 0 });
    }
    for b in basis {
        g.check_vec(b)?;
    }
    let n = g.dim();
    let bmat = Mat::from_fn(n, k, |i, j| basis[j][i]);
    let sv = linalg::singular_values(&bmat)?;
    let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count();
    if rank < k {
        return Err(KreinError::RankDeficientBasis { rank, len: k });
    }
    let restricted = linalg::hermitian_part(&(bmat.adjoint() * g.gram() * &bmat));
    let eig = linalg::hermitian_eigen(&restricted)?;
    let lo = eig.values[0];
    let hi = eig.values[k - 1];
    let cut = tol * g.gram_norm() * sv[0] * sv[0];
    let kind = if lo.abs() <= cut && hi.abs() <= cut {
        SubspaceKind::Neutral
    } else if lo > cut {
        SubspaceKind::UniformlyPositive
    } else if lo >= -cut {
        SubspaceKind::Positive
    } else if hi <= cut {
        SubspaceKind::Negative
    } else {
        SubspaceKind::Indefinite
    };
    let pick = match kind {
        SubspaceKind::Negative => k - 1,
        _ => 0,
    };
    let coeffs = eig.vectors.col(pick).to_owned();
    let witness = &bmat * &coeffs;
    let krein_subspace = eig.values.iter().all(|x| x.abs() > cut);
    let top = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    Ok(SubspaceClass {
        kind,
        krein_subspace,
        witness: Some(witness),
        gram_restriction: restricted,
        margin: lo / top,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectionReport {
    pub idempotent_residual: f64,
    pub selfadjoint_residual: f64,
    pub positive: bool,
}

pub fn orthogonal_projection_check(g: &GramStructure, p: &CMat) -> Result<ProjectionReport, KreinError> {
    g.check_mat(p)?;
    let idempotent_residual = linalg::norm(&(p * p - p));
    let selfadjoint_residual = linalg::norm(&(g.dagger(p)? - p));
    let mp = g.gram() * p;
    let lo = linalg::hermitian_eigenvalues(&mp)?[0];
    let scale = g.gram_norm() * linalg::norm(p);
    Ok(ProjectionReport {
        idempotent_residual,
        selfadjoint_residual,
        positive: lo >= -1e-10 * scale.max(1.0),
    })
}
