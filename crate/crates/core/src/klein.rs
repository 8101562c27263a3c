//! Coupling sweeps `v -> g v` locating loss of positivity and the onset of complex frequencies.

use serde::Serialize;

use crate::linalg::{self, LinalgError};
use crate::model::{self, ModelError};
use crate::par;
use crate::scenario::ModelSpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KleinError {
    #[error("sweep values must be finite, non-negative and strictly increasing")]
    InvalidSweep,
    #[error("sweep too coarse: {0}")]
    SweepTooCoarse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Relative bracket width for the positivity threshold.
pub const BRACKET_TOLERANCE: f64 = 1e-3;
/// `|Im z| > REALITY_TOLERANCE * spectral radius` counts as non-real.
pub const REALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub coupling: f64,
    pub neg_index: usize,
    pub complex_pairs: usize,
    pub max_imag: f64,
    pub spectral_radius: f64,
    /// smallest eigenvalue of `eps^2 - v^2`
    pub min_energy: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn relative_width(&self) -> f64 {
        (self.hi - self.lo) / self.hi.abs().max(f64::MIN_POSITIVE)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KleinReport {
    pub points: Vec<SweepPoint>,
    pub gamma_pos: Option<Bracket>,
    pub gamma_cplx: Option<f64>,
    pub ordering_ok: bool,
    pub neg_index_monotone: bool,
    /// no non-real eigenvalue at any point with positive energy
    pub reality_ok: bool,
}

/// Evenly spaced couplings `lo, ..., hi`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}

struct Family {
    eps2: linalg::CMat,
    v: Vec<f64>,
}

impl Family {
    fn new(spec: &ModelSpec) -> Result<Self, KleinError> {
        let grid = model::Grid1D::new(spec.grid.half_width, spec.grid.points)?;
        let eps2 = model::build_epsilon2(&grid, &spec.coefficient_set()?)?;
        let v = spec.with_coupling(1.0).potential.split(&grid).v;
        Ok(Family { eps2, v })
    }

    fn potential(&self, g: f64) -> Vec<f64> {
        self.v.iter().map(|x| g * x).collect()
    }

    fn min_energy(&self, g: f64) -> Result<f64, KleinError> {
        Ok(linalg::hermitian_eigenvalues(&model::shifted(&self.eps2, &self.potential(g)))?[0])
    }

    fn point(&self, g: f64) -> Result<SweepPoint, KleinError> {
        let v = self.potential(g);
        let energy = model::shifted(&self.eps2, &v);
        let spectrum = linalg::hermitian_eigenvalues(&energy)?;
        let values = linalg::eigenvalues(&model::generator_matrix(&energy, &v))?;
        let radius = values.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let cut = REALITY_TOLERANCE * radius;
        Ok(SweepPoint {
            coupling: g,
            neg_index: spectrum.iter().filter(|x| **x < 0.0).count(),
            complex_pairs: values.iter().filter(|z| z.im > cut).count(),
            max_imag: values.iter().fold(0.0f64, |m, z| m.max(z.im.abs())),
            spectral_radius: radius,
            min_energy: spectrum[0],
        })
    }
}

/// Bisection on the smallest eigenvalue of `eps^2 - g^2 v^2`, which decreases in `g >= 0`.
fn refine(family: &Family, mut lo: f64, mut hi: f64) -> Result<Bracket, KleinError> {
    if !(family.min_energy(lo)? > 0.0) || !(family.min_energy(hi)? < 0.0) {
        return Err(KleinError::SweepTooCoarse(format!("no sign change of the energy on [{lo}, {hi}]")));
    }
    while (hi - lo) > BRACKET_TOLERANCE * hi {
        let mid = 0.5 * (lo + hi);
        if family.min_energy(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bracket { lo, hi })
}

/// Index, complex pairs and spectral radius of one model, at its own coupling.
pub fn spectrum_point(spec: &ModelSpec) -> Result<SweepPoint, KleinError> {
    Family::new(spec)?.point(spec.potential.coupling)
}

/// Scans the couplings of `spec`'s potential. The base potential is taken at coupling 1.
pub fn klein_paradox_scan(spec: &ModelSpec, couplings: &[f64]) -> Result<KleinReport, KleinError> {
    let valid = couplings.iter().all(|g| g.is_finite() && *g >= 0.0) && couplings.windows(2).all(|w| w[0] < w[1]);
    if couplings.is_empty() || !valid {
        return Err(KleinError::InvalidSweep);
    }
    let family = Family::new(spec)?;
    let points = par::map(couplings.len(), |k| family.point(couplings[k])).into_iter().collect::<Result<Vec<_>, _>>()?;

    let gamma_pos = match points.iter().position(|p| p.neg_index > 0) {
        None => None,
        Some(0) => {
            return Err(KleinError::SweepTooCoarse(format!(
                "energy already indefinite at the first coupling {}",
                couplings[0]
            )))
        }
        Some(k) => Some(refine(&family, couplings[k - 1], couplings[k])?),
    };
    let gamma_cplx = points.iter().find(|p| p.complex_pairs > 0).map(|p| p.coupling);
    let ordering_ok = match (gamma_pos, gamma_cplx) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(b), Some(c)) => c >= b.lo,
    };
    Ok(KleinReport {
        neg_index_monotone: points.windows(2).all(|w| w[0].neg_index <= w[1].neg_index),
        reality_ok: points.iter().filter(|p| p.neg_index == 0).all(|p| p.complex_pairs == 0),
        points,
        gamma_pos,
        gamma_cplx,
        ordering_ok,
    })
}
