//! Time evolution `exp(-itG)` for Krein-selfadjoint generators and propagation diagnostics.

use faer::Col;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{self, c64, CMat, CVec, LinalgError, Schur};
use crate::model::Grid1D;
use crate::par;
use crate::smooth::{Bump, Plateau, SmoothFunction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("exp(-itG) overflows at t = {t}: eigenvalue {eigenvalue} grows like exp({rate} t)")]
    OverflowAtExponentialGrowth { eigenvalue: c64, rate: f64, t: f64 },
    #[error("time {t} exceeds the reflection horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("energy filter support [{lo}, {hi}] meets the threshold band [-{threshold}, {threshold}]")]
    FilterTouchesThreshold { lo: f64, hi: f64, threshold: f64 },
    #[error("window around {center} of half width {half_width} meets the threshold {threshold}")]
    WindowTouchesThreshold { center: f64, half_width: f64, threshold: f64 },
    #[error("energy filtering needs a diagonalizable generator")]
    NotDiagonalizable,
    #[error("state has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, DynamicsError>;

/// Largest admissible `|t| * Im(lambda)`.
const GROWTH_CAP: f64 = 600.0;

/// Eigenvector condition above which the Schur route is used.
pub const SPECTRAL_CONDITION_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagatorMethod {
    Spectral,
    Schur,
}

#[derive(Debug, Clone)]
enum Factorization {
    Spectral { values: Vec<c64>, vectors: CMat, inverse: CMat },
    Schur(Schur),
}

/// `t -> exp(-itG)` through an eigen or Schur factorization of `G`.
#[derive(Debug, Clone)]
pub struct Propagator {
    factor: Factorization,
    dim: usize,
    max_growth: (f64, c64),
}

fn max_growth(values: &[c64]) -> (f64, c64) {
    values
        .iter()
        .map(|z| (z.im.abs(), *z))
        .fold((0.0, c64::ZERO), |a, b| if b.0 > a.0 { b } else { a })
}

impl Propagator {
    pub fn new(generator: &CMat) -> Result<Self> {
        let eig = linalg::eigen(generator)?;
        Self::from_eigen(generator, eig)
    }

    /// Uses a precomputed eigendecomposition when it is well conditioned.
    pub fn from_eigen(generator: &CMat, eig: linalg::Eigen) -> Result<Self> {
        let cond = linalg::column_scaled_condition(&eig.vectors);
        if cond.is_finite() && cond < SPECTRAL_CONDITION_CAP {
            if let Ok(inverse) = linalg::inverse(&eig.vectors) {
                let dim = generator.nrows();
                let mg = max_growth(&eig.values);
                return Ok(Propagator {
                    factor: Factorization::Spectral { values: eig.values, vectors: eig.vectors, inverse },
                    dim,
                    max_growth: mg,
                });
            }
        }
        Self::schur(generator)
    }

    /// Closed-form factorization of `-[[0, I], [eps2, 0]]` from the hermitian eigenpairs of `eps2 > 0`.
    pub fn free_klein_gordon(eps2: &CMat) -> Result<Self> {
        let e = linalg::hermitian_eigen(eps2)?;
        let n = eps2.nrows();
        let roots: Vec<f64> = e.values.iter().map(|m| m.max(0.0).sqrt()).collect();
        if roots.iter().any(|r| *r <= 0.0) {
            return Err(DynamicsError::NotDiagonalizable);
        }
        let phi = &e.vectors;
        // eigenvector columns (phi_k, -lambda phi_k) for lambda = +root_k, then -root_k
        let vectors = CMat::from_fn(2 * n, 2 * n, |i, j| {
            let (k, lambda) = if j < n { (j, roots[j]) } else { (j - n, -roots[j - n]) };
            if i < n { phi[(i, k)] } else { phi[(i - n, k)] * (-lambda) }
        });
        let inverse = CMat::from_fn(2 * n, 2 * n, |i, j| {
            let k = i % n;
            let sign = if i < n { -1.0 } else { 1.0 };
            if j < n { 0.5 * phi[(j, k)].conj() } else { 0.5 * sign * phi[(j - n, k)].conj() / roots[k] }
        });
        let values: Vec<c64> = (0..2 * n).map(|j| c64::new(if j < n { roots[j] } else { -roots[j - n] }, 0.0)).collect();
        Ok(Propagator {
            factor: Factorization::Spectral { values, vectors, inverse },
            dim: 2 * n,
            max_growth: (0.0, c64::ZERO),
        })
    }

    pub fn schur(generator: &CMat) -> Result<Self> {
        let s = linalg::schur(generator)?;
        let mg = max_growth(&s.eigenvalues());
        Ok(Propagator { factor: Factorization::Schur(s), dim: generator.nrows(), max_growth: mg })
    }

    pub fn method(&self) -> PropagatorMethod {
        match self.factor {
            Factorization::Spectral { .. } => PropagatorMethod::Spectral,
            Factorization::Schur(_) => PropagatorMethod::Schur,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> Vec<c64> {
        match &self.factor {
            Factorization::Spectral { values, .. } => values.clone(),
            Factorization::Schur(s) => s.eigenvalues(),
        }
    }

    /// `|factorization - G| / |G|`.
    pub fn reconstruction_residual(&self, generator: &CMat) -> f64 {
        let rebuilt = match &self.factor {
            Factorization::Spectral { values, vectors, inverse } => vectors * linalg::diag(values) * inverse,
            Factorization::Schur(s) => &s.q * &s.t * s.q.adjoint(),
        };
        linalg::norm(&(rebuilt - generator)) / linalg::norm(generator).max(f64::MIN_POSITIVE)
    }

    fn guard(&self, t: f64) -> Result<()> {
        let (rate, z) = self.max_growth;
        if rate * t.abs() > GROWTH_CAP {
            return Err(DynamicsError::OverflowAtExponentialGrowth { eigenvalue: z, rate, t });
        }
        Ok(())
    }

    /// `exp(-itG) f`.
    pub fn evolve(&self, f: &CVec, t: f64) -> Result<CVec> {
        if f.nrows() != self.dim {
            return Err(DynamicsError::DimensionMismatch { expected: self.dim, found: f.nrows() });
        }
        self.guard(t)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        match &self.factor {
            Factorization::Spectral { values, vectors, inverse } => {
                let mut c = inverse * f;
                for (ci, z) in c.iter_mut().zip(values) {
                    *ci *= (c64::new(0.0, -t) * z).exp();
                }
                Ok(vectors * c)
            }
            Factorization::Schur(_) => Ok(self.matrix(t)? * f),
        }
    }

    /// `exp(-itG)` as a dense matrix.
    pub fn matrix(&self, t: f64) -> Result<CMat> {
        self.guard(t)?;
        match &self.factor {
            Factorization::Spectral { values, vectors, inverse } => {
                let d: Vec<c64> = values.iter().map(|z| (c64::new(0.0, -t) * z).exp()).collect();
                Ok(vectors * linalg::diag(&d) * inverse)
            }
            Factorization::Schur(s) => {
                let e = linalg::expm(&linalg::scale(&s.t, c64::new(0.0, -t)))?;
                Ok(&s.q * e * s.q.adjoint())
            }
        }
    }

    /// `chi(G) f` with `chi` evaluated on real eigenvalues and zero on non-real ones.
    pub fn filter(&self, f: &CVec, chi: &dyn Fn(f64) -> f64, imag_tol: f64) -> Result<CVec> {
        match &self.factor {
            Factorization::Spectral { values, vectors, inverse } => {
                let mut c = inverse * f;
                for (ci, z) in c.iter_mut().zip(values) {
                    *ci *= if z.im.abs() <= imag_tol { chi(z.re) } else { 0.0 };
                }
                Ok(vectors * c)
            }
            Factorization::Schur(_) => Err(DynamicsError::NotDiagonalizable),
        }
    }

    /// `chi(G)` as a dense matrix.
    pub fn filter_matrix(&self, chi: &dyn Fn(f64) -> f64, imag_tol: f64) -> Result<CMat> {
        match &self.factor {
            Factorization::Spectral { values, vectors, inverse } => {
                let d: Vec<c64> =
                    values.iter().map(|z| c64::new(if z.im.abs() <= imag_tol { chi(z.re) } else { 0.0 }, 0.0)).collect();
                Ok(vectors * linalg::diag(&d) * inverse)
            }
            Factorization::Schur(_) => Err(DynamicsError::NotDiagonalizable),
        }
    }
}

/// Hermitian forms conserved by the flow.
#[derive(Debug, Clone)]
pub struct ConservedForms {
    pub energy: CMat,
    pub charge: CMat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum GrowthClass {
    Bounded,
    Polynomial { degree: u32 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub charge: Vec<f64>,
    pub h_drift: f64,
    pub q_drift: f64,
    pub norm_curve: Vec<f64>,
    pub growth_class: GrowthClass,
    pub fit_residual: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// Classifies `t -> |f_t|` as bounded, polynomial or exponential from least-squares fits of its logarithm.
pub fn classify_growth(times: &[f64], norms: &[f64], growth_rate: f64) -> (GrowthClass, f64) {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(t, n)| **t >= 0.25 * t_max && **t > 0.0 && **n > 0.0)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    if pts.len() < 3 {
        return (GrowthClass::Bounded, 0.0);
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ls: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (rate, _, rms_lin) = least_squares(&ts, &ls);
    if growth_rate > 0.0 && rate > 0.25 * growth_rate && rate * t_max > 2.0 {
        return (GrowthClass::Exponential { rate }, rms_lin);
    }
    let logt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (k, _, rms_log) = least_squares(&logt, &ls);
    let spread = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ls.iter().copied().fold(f64::INFINITY, f64::min);
    if k > 0.5 && spread > 0.5 {
        return (GrowthClass::Polynomial { degree: k.round() as u32 }, rms_log);
    }
    (GrowthClass::Bounded, rms_log)
}

pub fn conservation_report(p: &Propagator, forms: &ConservedForms, f: &CVec, times: &[f64]) -> Result<TrajectoryReport> {
    let states: Vec<Result<CVec>> = par::map(times.len(), |k| p.evolve(f, times[k]));
    let mut energy = Vec::with_capacity(times.len());
    let mut charge = Vec::with_capacity(times.len());
    let mut norm_curve = Vec::with_capacity(times.len());
    for s in states {
        let s = s?;
        energy.push(linalg::dot(&s, &(&forms.energy * &s)).re);
        charge.push(linalg::dot(&s, &(&forms.charge * &s)).re);
        norm_curve.push(linalg::vnorm(&s));
    }
    let h0 = linalg::dot(f, &(&forms.energy * f)).re;
    let q0 = linalg::dot(f, &(&forms.charge * f)).re;
    let h_drift = energy.iter().fold(0.0f64, |m, h| m.max((h - h0).abs())) / h0.abs().max(1.0);
    let q_drift = charge.iter().fold(0.0f64, |m, q| m.max((q - q0).abs())) / q0.abs().max(1.0);
    let (growth_class, fit_residual) = classify_growth(times, &norm_curve, p.max_growth.0);
    Ok(TrajectoryReport { times: times.to_vec(), energy, charge, h_drift, q_drift, norm_curve, growth_class, fit_residual })
}

/// Smooth energy window: 1 on `[lo, hi]`, falling to 0 over `ramp` on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
    pub ramp: f64,
}

impl EnergyWindow {
    pub fn value(&self, x: f64) -> f64 {
        Plateau { lo: self.lo, hi: self.hi, ramp: self.ramp }.value(x)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo - self.ramp, self.hi + self.ramp)
    }

    pub fn describe(&self) -> String {
        format!("smooth window equal to 1 on [{}, {}] with ramps of length {}", self.lo, self.hi, self.ramp)
    }

    /// Smallest free group speed `sqrt(l^2 - m^2) / |l|` over the support.
    pub fn min_group_speed(&self, m: f64) -> f64 {
        let (a, b) = self.support();
        let e = if a > 0.0 { a } else if b < 0.0 { -b } else { 0.0 };
        if e <= m {
            0.0
        } else {
            (e * e - m * m).sqrt() / e
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VelocityDiagnostic {
    pub times: Vec<f64>,
    pub thetas: Vec<f64>,
    /// `tail_mass[k][j] = |1_{|x| >= theta_k t_j} u_t|`
    pub tail_mass: Vec<Vec<f64>>,
    pub theta0: f64,
    /// `|1_{|x| <= theta0 t_j} chi(L) u_t|`
    pub inner_mass: Vec<f64>,
    pub energy_filter: String,
    /// norm of the unfiltered state
    pub norm: f64,
    pub filtered_norm: f64,
    pub horizon: f64,
    pub tail_trend: Vec<bool>,
    pub inner_trend: bool,
}

/// Decay trend: terminal value at most a quarter of the window maximum, or below an absolute floor.
pub fn decays(curve: &[f64], scale: f64) -> bool {
    let Some(last) = curve.last() else { return true };
    let max = curve.iter().copied().fold(0.0, f64::max);
    *last <= 0.25 * max || *last <= 1e-6 * scale
}

/// Radius around the origin containing all but `1e-4` of the mass of `u` (both components).
pub fn support_radius(grid: &Grid1D, u: &CVec) -> f64 {
    let n = grid.points;
    let xs = grid.nodes();
    let mass: Vec<(f64, f64)> = (0..u.nrows()).map(|i| (xs[i % n].abs(), u[i].norm_sqr())).collect();
    let total: f64 = mass.iter().map(|m| m.1).sum();
    let mut sorted = mass;
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    for (r, w) in sorted {
        acc += w;
        if acc > 1e-4 * total {
            return r;
        }
    }
    0.0
}

fn region_mass(grid: &Grid1D, u: &CVec, keep: impl Fn(f64) -> bool) -> f64 {
    let n = grid.points;
    let xs = grid.nodes();
    (0..u.nrows()).filter(|i| keep(xs[i % n].abs())).map(|i| u[i].norm_sqr()).sum::<f64>().sqrt()
}

/// Large- and minimal-velocity masses of `exp(-itL) chi(L) u`.
#[allow(clippy::too_many_arguments)]
pub fn velocity_diagnostics(
    grid: &Grid1D,
    p: &Propagator,
    u: &CVec,
    window: &EnergyWindow,
    thetas: &[f64],
    theta0: f64,
    times: &[f64],
    threshold: f64,
) -> Result<VelocityDiagnostic> {
    let (lo, hi) = window.support();
    if lo <= threshold && hi >= -threshold {
        return Err(DynamicsError::FilterTouchesThreshold { lo, hi, threshold });
    }
    let horizon = grid.half_width - support_radius(grid, u);
    if let Some(&t) = times.iter().find(|t| t.abs() > horizon + 1e-9) {
        return Err(DynamicsError::HorizonExceeded { t, horizon });
    }
    let radius = p.eigenvalues().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let filtered = p.filter(u, &|x| window.value(x), 1e-8 * radius.max(1.0))?;
    let states: Vec<Result<CVec>> = par::map(times.len(), |k| p.evolve(&filtered, times[k]));
    let states: Vec<CVec> = states.into_iter().collect::<Result<_>>()?;
    let tail_mass: Vec<Vec<f64>> = thetas
        .iter()
        .map(|th| times.iter().zip(&states).map(|(t, s)| region_mass(grid, s, |x| x >= th * t)).collect())
        .collect();
    let inner_mass: Vec<f64> =
        times.iter().zip(&states).map(|(t, s)| region_mass(grid, s, |x| x <= theta0 * t)).collect();
    let norm = linalg::vnorm(u);
    let tail_trend = tail_mass.iter().map(|c| decays(c, norm)).collect();
    let inner_trend = decays(&inner_mass, norm);
    Ok(VelocityDiagnostic {
        times: times.to_vec(),
        thetas: thetas.to_vec(),
        tail_mass,
        theta0,
        inner_mass,
        energy_filter: window.describe(),
        norm,
        filtered_norm: linalg::vnorm(&filtered),
        horizon,
        tail_trend,
        inner_trend,
    })
}

/// Centred difference `D = -i d/dx` with Dirichlet ghosts.
pub fn centered_derivative(grid: &Grid1D) -> CMat {
    let n = grid.points;
    let h = grid.spacing();
    let mut d = linalg::zeros(n, n);
    for j in 0..n {
        if j + 1 < n {
            d[(j, j + 1)] = c64::new(0.0, -0.5 / h);
        }
        if j > 0 {
            d[(j, j - 1)] = c64::new(0.0, 0.5 / h);
        }
    }
    d
}

/// `a = (x S + S x) / 2` with `S` the symmetrized `D (D^2 + m^2)^{-1}`.
pub fn build_conjugate_operator(grid: &Grid1D, m_inf: f64) -> Result<CMat> {
    let n = grid.points;
    let h = grid.spacing();
    let mut lap = linalg::zeros(n, n);
    for j in 0..n {
        lap[(j, j)] = c64::new(2.0 / (h * h) + m_inf * m_inf, 0.0);
        if j + 1 < n {
            lap[(j, j + 1)] = c64::new(-1.0 / (h * h), 0.0);
            lap[(j + 1, j)] = c64::new(-1.0 / (h * h), 0.0);
        }
    }
    let r = linalg::hermitian_apply(&lap, |x| 1.0 / x)?;
    let d = centered_derivative(grid);
    let dr = &d * &r;
    let s = linalg::hermitian_part(&dr);
    let x = linalg::diag_real(&grid.nodes());
    let a = linalg::scale_re(&(&x * &s + &s * &x), 0.5);
    Ok(linalg::hermitian_part(&a))
}

#[derive(Debug, Clone, Serialize)]
pub struct MourreReport {
    pub lambda0: f64,
    pub half_width: f64,
    pub c0_hat: f64,
    /// spread of the sampled Rayleigh quotients
    pub defect: f64,
    pub samples: usize,
    pub quotient_min: f64,
    pub quotient_max: f64,
}

/// Samples `+-[w, [L, ia] w] / (w|w)` over `w = chi_delta(L) u`.
///
/// On a finite box the commutator has zero expectation on every eigenvector, so
/// random vectors see only cancellation. The samples `u` are therefore Gaussian
/// packets centred in the inner half of the box, on the branch selected by the
/// sign of `lambda0`, with free energies drawn from the window.
#[allow(clippy::too_many_arguments)]
pub fn mourre_probe(
    grid: &Grid1D,
    l: &CMat,
    p_l: &Propagator,
    k: &CMat,
    a: &CMat,
    lambda0: f64,
    delta: f64,
    threshold: f64,
    samples: usize,
    seed: u64,
) -> Result<MourreReport> {
    if lambda0.abs() - delta <= threshold {
        return Err(DynamicsError::WindowTouchesThreshold { center: lambda0, half_width: delta, threshold });
    }
    let dim = l.nrows();
    let n = a.nrows();
    if 2 * n != dim || grid.points != n {
        return Err(DynamicsError::DimensionMismatch { expected: dim, found: 2 * n });
    }
    let big_a = linalg::block2(a, &linalg::zeros(n, n), &linalg::zeros(n, n), a);
    let comm = linalg::scale(&linalg::commutator(l, &big_a), c64::new(0.0, 1.0));
    let form = (k + linalg::identity(dim)) * comm;
    let bump = Bump::new(lambda0, delta);
    let chi = p_l.filter_matrix(&|x| bump.value(x), 1e-8 * linalg::spectral_norm(l).max(1.0))?;
    let sign = lambda0.signum();
    let mass = threshold.max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotients = Vec::with_capacity(samples);
    for _ in 0..samples {
        let energy = lambda0.abs() + delta * rng.gen_range(-0.5..0.5);
        let xi = (energy * energy - mass * mass).max(0.0).sqrt() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let x0 = grid.half_width * rng.gen_range(-0.25..0.25);
        let packet = crate::model::gaussian(grid, x0, xi, grid.half_width / 12.0);
        let phase = c64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
        let u = Col::from_fn(dim, |i| {
            let upper = i < n;
            if upper == (sign > 0.0) { phase * packet[i % n] } else { c64::ZERO }
        });
        let w = &chi * &u;
        let den = linalg::dot(&w, &w).re;
        if den > 0.0 {
            quotients.push(sign * linalg::dot(&w, &(&form * &w)).re / den);
        }
    }
    let qmin = quotients.iter().copied().fold(f64::INFINITY, f64::min);
    let qmax = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MourreReport {
        lambda0,
        half_width: delta,
        c0_hat: qmin.max(0.0),
        defect: (qmax - qmin).max(0.0),
        samples: quotients.len(),
        quotient_min: qmin,
        quotient_max: qmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, i, r) = least_squares(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (i - 1.0).abs() < 1e-14 && r < 1e-14);
    }

    #[test]
    fn growth_classes() {
        let t: Vec<f64> = (0..=50).map(|k| k as f64).collect();
        let bounded: Vec<f64> = t.iter().map(|x| 1.0 + 0.3 * x.sin()).collect();
        assert_eq!(classify_growth(&t, &bounded, 0.0).0, GrowthClass::Bounded);
        let lin: Vec<f64> = t.iter().map(|x| (1.0 + x * x).sqrt()).collect();
        assert_eq!(classify_growth(&t, &lin, 0.0).0, GrowthClass::Polynomial { degree: 1 });
        let exp: Vec<f64> = t.iter().map(|x| (0.2 * x).exp()).collect();
        assert!(matches!(classify_growth(&t, &exp, 0.2).0, GrowthClass::Exponential { .. }));
    }

    #[test]
    fn decay_trend() {
        assert!(decays(&[1.0, 0.5, 0.2], 1.0));
        assert!(!decays(&[1.0, 0.9, 0.8], 1.0));
        assert!(decays(&[1e-9, 2e-9], 1.0));
    }

    #[test]
    fn window_group_speed() {
        let w = EnergyWindow { lo: 1.3, hi: 3.0, ramp: 0.1 };
        assert!((w.min_group_speed(1.0) - (1.44f64 - 1.0).sqrt() / 1.2).abs() < 1e-12);
        assert_eq!(EnergyWindow { lo: 0.5, hi: 2.0, ramp: 0.1 }.min_group_speed(1.0), 0.0);
    }
}
