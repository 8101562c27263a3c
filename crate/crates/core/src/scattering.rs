//! Wave operators on packet families, the bound/scattering split and the long-range modifier.

use faer::Col;
use serde::Serialize;

use crate::definitize::{
    self, DefinitizeError, ProjectorMethod, SpectralProjectors, SpectralTolerances, SpectrumClassification,
};
use crate::dynamics::{DynamicsError, Propagator};
use crate::krein::{KreinError, KreinOperator};
use crate::linalg::{self, c64, CMat, CVec, LinalgError};
use crate::model::{self, Grid1D, KgOperators, ModelError};
use crate::par;
use crate::quad;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScatteringError {
    #[error("threshold {threshold} is a critical point of the spectrum")]
    CriticalThreshold { threshold: f64 },
    #[error("eigenvalue {lambda} has indeterminate localization score {score}")]
    ClassificationAmbiguous { lambda: f64, score: f64 },
    #[error("horizon {t} exceeds the reflection-free time {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("potential is not short range (decay exponent {mu})")]
    ShortRangeViolated { mu: f64 },
    #[error("eikonal radicand vanishes at x = {x}, xi = {xi}")]
    BranchCollapse { x: f64, xi: f64 },
    #[error("state has a fraction {fraction} of its spectral mass near the Nyquist limit")]
    BandwidthExceeded { fraction: f64 },
    #[error("eikonal residual {residual} above the certification bound")]
    PhaseNotCertified { residual: f64 },
    #[error("long-range part has no fixed sign at infinity")]
    LongRangeSignUnknown,
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error("full-matrix assembly is limited to N <= {max}, got {n}")]
    MatrixTooLarge { n: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Definitize(#[from] DefinitizeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Krein(#[from] KreinError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, ScatteringError>;

/// Localization threshold of the point-spectrum rule.
pub const LOCALIZATION_CUT: f64 = 0.9;
/// Scores closer than this to the cut are refused.
pub const LOCALIZATION_BAND: f64 = 0.01;
/// Certification bound for the eikonal plug-back residual.
pub const EIKONAL_TOLERANCE: f64 = 1e-8;
pub const FULL_MATRIX_MAX_N: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shell {
    Upper,
    Lower,
}

impl Shell {
    fn sign(self) -> f64 {
        match self {
            Shell::Upper => 1.0,
            Shell::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacketSpec {
    pub center: f64,
    pub momentum: f64,
    pub width: f64,
    pub shell: Shell,
}

impl WavePacketSpec {
    pub fn upper(center: f64, momentum: f64, width: f64) -> Self {
        WavePacketSpec { center, momentum, width, shell: Shell::Upper }
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        let margin = 0.1 * grid.half_width;
        if self.width <= 0.0 || self.center.abs() + 4.0 * self.width > grid.half_width - margin {
            return Err(ScatteringError::InvalidPacket(format!(
                "support |x0| + 4 sigma = {} leaves the box minus margin {}",
                self.center.abs() + 4.0 * self.width,
                grid.half_width - margin
            )));
        }
        let nyquist = std::f64::consts::PI / grid.spacing();
        if self.momentum.abs() < 1.0 / self.width || self.momentum.abs() + 1.5 / self.width > 0.5 * nyquist {
            return Err(ScatteringError::InvalidPacket(format!(
                "momentum {} outside the band [{}, {}]",
                self.momentum,
                1.0 / self.width,
                0.5 * nyquist - 1.5 / self.width
            )));
        }
        Ok(())
    }
}

/// `(eps^-1 u, -s u)/sqrt 2` for the Gaussian `u`, scaled to unit free energy.
pub fn packet_state(ops: &KgOperators, spec: &WavePacketSpec) -> Result<CVec> {
    spec.validate(&ops.grid)?;
    let u = model::gaussian(&ops.grid, spec.center, spec.momentum, spec.width);
    let top = &ops.free_eps_inv * &u;
    let s = -spec.shell.sign();
    let bottom = Col::from_fn(u.nrows(), |i| u[i] * s);
    let f = linalg::concat(&top, &bottom);
    let norm = linalg::dot(&f, &(&ops.free_gram * &f)).re.sqrt();
    Ok(Col::from_fn(f.nrows(), |i| f[i] / norm))
}

/// Fraction of `|u|^2` (both components) inside `|x| <= X/2`.
pub fn localization_score(grid: &Grid1D, v: &CVec) -> f64 {
    let n = grid.points;
    let xs = grid.nodes();
    let mut inside = 0.0;
    let mut total = 0.0;
    for i in 0..v.nrows() {
        let w = v[i].norm_sqr();
        total += w;
        if xs[i % n].abs() <= 0.5 * grid.half_width {
            inside += w;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    #[serde(skip)]
    pub p_pp: CMat,
    #[serde(skip)]
    pub p_scatt: CMat,
    pub rank: usize,
    #[serde(serialize_with = "ser_c64_vec")]
    pub point_eigenvalues: Vec<c64>,
    pub localization: Vec<f64>,
    pub dagger_residual: f64,
    pub idempotence_residual: f64,
    pub product_residual: f64,
    pub h_orthogonality: f64,
    pub omega_orthogonality: f64,
}

fn ser_c64_vec<S: serde::Serializer>(v: &[c64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// `P_pp` from complex pairs and localized gap eigenvalues, `P_scatt = I - P_pp`.
pub fn bound_scatt_decomposition(
    ops: &KgOperators,
    op: &KreinOperator,
    spec: &SpectrumClassification,
) -> Result<Decomposition> {
    let m_grid = ops.m_grid;
    let tol = 1e-6 * m_grid.max(1.0);
    for p in &spec.real_points {
        if p.is_critical && (p.lambda.abs() - m_grid).abs() <= tol {
            return Err(ScatteringError::CriticalThreshold { threshold: p.lambda });
        }
    }
    let dim = op.dim();
    let mut chosen = Vec::new();
    let mut point_eigenvalues = Vec::new();
    let mut localization = Vec::new();
    for (ci, c) in spec.clusters.iter().enumerate() {
        if c.center.im.abs() > spec.eta {
            chosen.push(ci);
            point_eigenvalues.push(c.center);
            localization.push(
                c.members.iter().map(|&i| localization_score(&ops.grid, &spec.eigenvectors.col(i).to_owned())).fold(1.0, f64::min),
            );
            continue;
        }
        if c.center.re.abs() >= m_grid {
            continue;
        }
        let score = c
            .members
            .iter()
            .map(|&i| localization_score(&ops.grid, &spec.eigenvectors.col(i).to_owned()))
            .fold(1.0, f64::min);
        if (score - LOCALIZATION_CUT).abs() < LOCALIZATION_BAND {
            return Err(ScatteringError::ClassificationAmbiguous { lambda: c.center.re, score });
        }
        if score >= LOCALIZATION_CUT {
            chosen.push(ci);
            point_eigenvalues.push(c.center);
            localization.push(score);
        }
    }
    let mut projectors = SpectralProjectors::new(op, spec, ProjectorMethod::Eigenvector);
    let mut p_pp = linalg::zeros(dim, dim);
    let mut rank = 0;
    for &ci in &chosen {
        p_pp += projectors.cluster(ci)?;
        rank += spec.clusters[ci].members.len();
    }
    let p_scatt = linalg::identity(dim) - &p_pp;

    let scale = linalg::norm(&p_pp).max(1.0);
    let dagger_residual = linalg::norm(&(op.gram.dagger(&p_pp)? - &p_pp)) / scale;
    let idempotence_residual = linalg::norm(&(&p_pp * &p_pp - &p_pp)) / scale;
    let product_residual = linalg::norm(&(&p_pp * &p_scatt)) / scale;
    let m = op.gram.gram();
    let omega = ops.symplectic();
    let cross = |g: &CMat| linalg::norm(&(p_pp.adjoint() * g * &p_scatt)) / (linalg::norm(g) * scale);
    let h_orthogonality = if rank == 0 { 0.0 } else { cross(m) };
    let omega_orthogonality = if rank == 0 { 0.0 } else { cross(&omega) };
    Ok(Decomposition {
        p_pp,
        p_scatt,
        rank,
        point_eigenvalues,
        localization,
        dagger_residual,
        idempotence_residual,
        product_residual,
        h_orthogonality,
        omega_orthogonality,
    })
}

/// Everything a scattering run needs, assembled once per model.
pub struct ScatteringModel {
    pub ops: KgOperators,
    pub classification: SpectrumClassification,
    pub propagator: Propagator,
    pub free_propagator: Propagator,
    pub decomposition: Decomposition,
}

impl ScatteringModel {
    /// Clusters at relative radius `1e-12`, merging near-degenerate clusters.
    pub fn new(ops: KgOperators) -> Result<Self> {
        Self::with_tolerances(ops, SpectralTolerances { cluster: 1e-12, merge_ambiguous: true, ..SpectralTolerances::default() })
    }

    pub fn with_tolerances(ops: KgOperators, tol: SpectralTolerances) -> Result<Self> {
        let op = ops.krein_generator()?;
        let classification = definitize::classify_spectrum_with(&op, tol)?;
        Self::assemble(ops, &op, classification)
    }

    fn assemble(ops: KgOperators, op: &KreinOperator, classification: SpectrumClassification) -> Result<Self> {
        let decomposition = bound_scatt_decomposition(&ops, op, &classification)?;
        let eig = linalg::Eigen {
            values: classification.eigenvalues.clone(),
            vectors: classification.eigenvectors.clone(),
        };
        let propagator = Propagator::from_eigen(&ops.generator, eig)?;
        let free_propagator = Propagator::free_klein_gordon(&ops.free_eps2)?;
        Ok(ScatteringModel { ops, classification, propagator, free_propagator, decomposition })
    }

    /// Reflection-free time for a state: `X` minus the radius holding all but `1e-4` of its mass.
    pub fn horizon_for(&self, f: &CVec) -> f64 {
        self.ops.grid.half_width - crate::dynamics::support_radius(&self.ops.grid, f)
    }

    fn free_norm(&self, f: &CVec) -> f64 {
        linalg::dot(f, &(&self.ops.free_gram * f)).re.abs().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outgoing,
    Incoming,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Outgoing => 1.0,
            Direction::Incoming => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Horizons {
    pub t: f64,
    pub half: f64,
    pub quarter: f64,
    pub probe: f64,
}

impl Horizons {
    pub fn new(t: f64) -> Self {
        Horizons { t, half: 0.5 * t, quarter: 0.25 * t, probe: 5.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PacketRecord {
    pub spec: WavePacketSpec,
    #[serde(skip)]
    pub f_in: CVec,
    #[serde(skip)]
    pub f_out: CVec,
    pub horizon_limit: f64,
    pub unitarity_defect: f64,
    pub symplectic_defect: f64,
    pub intertwining_residual: f64,
    pub intertwining_residual_half: f64,
    pub completeness_defect: f64,
    /// `|Omega_H f - Omega_{H/2} f|` at `H = T/2` and `H = T`
    pub cauchy: [f64; 2],
    pub convergence_ratio: f64,
    pub inverse_defect: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectSummary {
    /// max over packet pairs
    pub unitarity: f64,
    pub symplectic: f64,
    pub intertwining: f64,
    pub intertwining_half: f64,
    pub completeness: f64,
    pub convergence_ratio: f64,
    pub inverse: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatteringReport {
    pub kind: String,
    pub direction: Direction,
    pub packets: Vec<PacketRecord>,
    pub defects: DefectSummary,
    pub decomposition: Decomposition,
    pub horizons: Horizons,
}

struct Run<'a> {
    model: &'a ScatteringModel,
    modifier: Option<&'a CMat>,
    sign: f64,
}

impl Run<'_> {
    /// `exp(itB) T exp(-itB_inf) f` before projection.
    fn raw(&self, f: &CVec, t: f64) -> Result<CVec> {
        let t = self.sign * t;
        let mut g = self.model.free_propagator.evolve(f, t)?;
        if let Some(m) = self.modifier {
            g = m * &g;
        }
        Ok(self.model.propagator.evolve(&g, -t)?)
    }

    fn omega(&self, f: &CVec, t: f64) -> Result<CVec> {
        Ok(&self.model.decomposition.p_scatt * self.raw(f, t)?)
    }

    fn intertwining(&self, f: &CVec, t: f64, s: f64) -> Result<f64> {
        let shifted = self.model.free_propagator.evolve(f, s)?;
        let a = self.omega(&shifted, t)?;
        let b = self.model.propagator.evolve(&self.omega(f, t)?, s)?;
        Ok(self.model.free_norm(&(a - b)))
    }
}

fn run_packets(
    model: &ScatteringModel,
    packets: &[WavePacketSpec],
    t: f64,
    direction: Direction,
    modifier: Option<&CMat>,
    kind: &str,
    with_inverse: bool,
) -> Result<ScatteringReport> {
    let horizons = Horizons::new(t);
    let states: Vec<CVec> = packets.iter().map(|p| packet_state(&model.ops, p)).collect::<Result<_>>()?;
    for f in &states {
        let limit = model.horizon_for(f);
        if t > limit + 1e-9 {
            return Err(ScatteringError::HorizonExceeded { t, horizon: limit });
        }
    }
    let run = Run { model, modifier, sign: direction.sign() };
    let p_pp = &model.decomposition.p_pp;
    let records: Vec<Result<PacketRecord>> = par::map(packets.len(), |k| {
        let f = &states[k];
        let raw = run.raw(f, horizons.t)?;
        let f_out = &model.decomposition.p_scatt * &raw;
        let quarter = run.omega(f, horizons.quarter)?;
        let half = run.omega(f, horizons.half)?;
        let cauchy = [model.free_norm(&(&half - &quarter)), model.free_norm(&(&f_out - &half))];
        let convergence_ratio = if cauchy[0] > 0.0 { cauchy[1] / cauchy[0] } else { 0.0 };
        let completeness_defect = model.free_norm(&(p_pp * &raw)) / model.free_norm(f);
        let inverse_defect = if with_inverse {
            let back = model.propagator.evolve(&f_out, run.sign * horizons.t)?;
            let back = model.free_propagator.evolve(&back, -run.sign * horizons.t)?;
            Some(model.free_norm(&(back - f)))
        } else {
            None
        };
        Ok(PacketRecord {
            spec: packets[k],
            f_in: f.clone(),
            horizon_limit: model.horizon_for(f),
            unitarity_defect: 0.0,
            symplectic_defect: 0.0,
            intertwining_residual: run.intertwining(f, horizons.t, horizons.probe)?,
            intertwining_residual_half: run.intertwining(f, horizons.half, horizons.probe)?,
            completeness_defect,
            cauchy,
            convergence_ratio,
            inverse_defect,
            f_out,
        })
    });
    let mut records: Vec<PacketRecord> = records.into_iter().collect::<Result<_>>()?;

    let ops = &model.ops;
    let omega = ops.symplectic();
    let free_omega = ops.free_symplectic();
    let mut unitarity = 0.0f64;
    let mut symplectic = 0.0f64;
    for i in 0..records.len() {
        for j in 0..records.len() {
            let (fi, fj) = (&records[i].f_in, &records[j].f_in);
            let (gi, gj) = (&records[i].f_out, &records[j].f_out);
            let h = linalg::dot(gi, &(&ops.energy_gram * gj)) - linalg::dot(fi, &(&ops.free_gram * fj));
            let w = linalg::dot(gi, &(&omega * gj)) - linalg::dot(fi, &(&free_omega * fj));
            unitarity = unitarity.max(h.norm());
            symplectic = symplectic.max(w.norm());
            if i == j {
                records[i].unitarity_defect = h.norm();
                records[i].symplectic_defect = w.norm();
            }
        }
    }
    let max = |g: &dyn Fn(&PacketRecord) -> f64| records.iter().map(g).fold(0.0, f64::max);
    let defects = DefectSummary {
        unitarity,
        symplectic,
        intertwining: max(&|r| r.intertwining_residual),
        intertwining_half: max(&|r| r.intertwining_residual_half),
        completeness: max(&|r| r.completeness_defect),
        convergence_ratio: max(&|r| r.convergence_ratio),
        inverse: if with_inverse { Some(max(&|r| r.inverse_defect.unwrap_or(0.0))) } else { None },
    };
    Ok(ScatteringReport {
        kind: kind.to_string(),
        direction,
        packets: records,
        defects,
        decomposition: model.decomposition.clone(),
        horizons,
    })
}

/// `Omega f = P_scatt exp(itB) exp(-itB_inf) f` at `t = T/4, T/2, T` for each packet.
pub fn short_range_wave_operator(
    model: &ScatteringModel,
    packets: &[WavePacketSpec],
    t: f64,
    direction: Direction,
) -> Result<ScatteringReport> {
    let split = &model.ops.split;
    if split.is_long_range() {
        return Err(ScatteringError::ShortRangeViolated { mu: split.mu_l });
    }
    if split.mu_s <= 1.0 {
        return Err(ScatteringError::ShortRangeViolated { mu: split.mu_s });
    }
    run_packets(model, packets, t, direction, None, "short_range", true)
}

/// The same construction without a modifier, regardless of the decay of `v`.
pub fn unmodified_wave_operator(
    model: &ScatteringModel,
    packets: &[WavePacketSpec],
    t: f64,
    direction: Direction,
) -> Result<ScatteringReport> {
    run_packets(model, packets, t, direction, None, "unmodified", true)
}

/// Dense `P_scatt exp(itB) exp(-itB_inf)`, offered for small grids only.
pub fn short_range_wave_matrix(model: &ScatteringModel, t: f64) -> Result<CMat> {
    let n = model.ops.grid.points;
    if n > FULL_MATRIX_MAX_N {
        return Err(ScatteringError::MatrixTooLarge { n, max: FULL_MATRIX_MAX_N });
    }
    let w = model.propagator.matrix(-t)? * model.free_propagator.matrix(t)?;
    Ok(&model.decomposition.p_scatt * w)
}

/// Symbol used for the free energy in the eikonal equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    /// `sqrt(eta^2 + m^2)`
    Continuum,
    /// `sqrt(w(eta)^2 + m^2)` with `w(k) = (2/dx) sin(k dx / 2)`, matching the finite-difference operator
    Lattice,
}

/// `|x| >= r`, `|xi| >= sigma`, `+-sgn(x xi) >= alpha`, `|xi| <= xi_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct EikonalRegion {
    pub r: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub xi_max: f64,
}

impl EikonalRegion {
    pub fn band(grid: &Grid1D, sigma: f64) -> Self {
        EikonalRegion { r: 0.0, alpha: -1.0, sigma, xi_max: 0.5 * std::f64::consts::PI / grid.spacing() }
    }

    fn contains(&self, x: f64, xi: f64, branch: f64) -> bool {
        let dir = branch * (x * xi).signum();
        x.abs() >= self.r && xi.abs() >= self.sigma && xi.abs() <= self.xi_max && dir >= self.alpha
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EikonalPhase {
    pub xs: Vec<f64>,
    pub xis: Vec<f64>,
    /// `phi_+(x_j, xi_k)` at `j * n + k`
    #[serde(skip)]
    pub plus: Vec<f64>,
    #[serde(skip)]
    pub minus: Vec<f64>,
    pub dispersion: Dispersion,
    pub region: EikonalRegion,
    pub m_inf: f64,
    pub spacing: f64,
    pub residual: f64,
    pub region_points: usize,
}

impl EikonalPhase {
    pub fn branch(&self, sign: f64) -> &[f64] {
        if sign > 0.0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    /// `phi - x xi` on branch `sign`.
    pub fn correction(&self, sign: f64) -> Vec<f64> {
        let n = self.xis.len();
        self.branch(sign).iter().enumerate().map(|(i, p)| p - self.xs[i / n] * self.xis[i % n]).collect()
    }
}

struct Eikonal<'a> {
    v_long: &'a (dyn Fn(f64) -> f64 + Sync),
    m: f64,
    dx: f64,
    dispersion: Dispersion,
}

impl Eikonal<'_> {
    fn lattice_freq(&self, k: f64) -> f64 {
        2.0 / self.dx * (0.5 * k * self.dx).sin()
    }

    fn energy(&self, xi: f64) -> f64 {
        let w = match self.dispersion {
            Dispersion::Continuum => xi,
            Dispersion::Lattice => self.lattice_freq(xi),
        };
        (w * w + self.m * self.m).sqrt()
    }

    /// `(d/dx) phi` and the radicand.
    fn slope(&self, x: f64, xi: f64, sign: f64) -> (f64, f64) {
        let target = self.energy(xi) + sign * (self.v_long)(x);
        let rad = target * target - self.m * self.m;
        let r = rad.max(0.0).sqrt();
        let eta = match self.dispersion {
            Dispersion::Continuum => r,
            Dispersion::Lattice => 2.0 / self.dx * (0.5 * r * self.dx).min(1.0).asin(),
        };
        (xi.signum() * eta, rad)
    }

    fn symbol(&self, eta: f64) -> f64 {
        self.energy(eta)
    }

    fn integrate(&self, a: f64, b: f64, xi: f64, sign: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        rule.0.iter().zip(&rule.1).map(|(t, w)| w * half * self.slope(mid + half * t, xi, sign).0).sum()
    }

    /// `phi(x_j)` for every node, anchored at `phi(0) = 0`.
    fn profile(&self, xs: &[f64], xi: f64, sign: f64, rule: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
        let mut out = vec![0.0; xs.len()];
        let mut order: Vec<usize> = (0..xs.len()).filter(|&j| xs[j] > 0.0).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let (mut at, mut acc) = (0.0, 0.0);
        for j in order {
            acc += self.integrate(at, xs[j], xi, sign, rule);
            at = xs[j];
            out[j] = acc;
        }
        let mut order: Vec<usize> = (0..xs.len()).filter(|&j| xs[j] < 0.0).collect();
        order.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]));
        let (mut at, mut acc) = (0.0, 0.0);
        for j in order {
            acc += self.integrate(at, xs[j], xi, sign, rule);
            at = xs[j];
            out[j] = acc;
        }
        out
    }

    /// Plug-back residual with `d phi / dx` from fourth-order differences of short quadratures.
    fn residual(&self, x: f64, xi: f64, sign: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let h = 1e-3;
        let d1 = self.integrate(x - h, x + h, xi, sign, rule) / (2.0 * h);
        let d2 = self.integrate(x - 2.0 * h, x + 2.0 * h, xi, sign, rule) / (4.0 * h);
        let eta = (4.0 * d1 - d2) / 3.0;
        (self.symbol(eta) - sign * (self.v_long)(x) - self.energy(xi)).abs()
    }
}

/// Eikonal phases `phi_+-` on the node and DFT-frequency grids of `grid`.
pub fn eikonal_phase_1d(
    grid: &Grid1D,
    v_long: &(dyn Fn(f64) -> f64 + Sync),
    m_inf: f64,
    dispersion: Dispersion,
    region: EikonalRegion,
) -> Result<EikonalPhase> {
    let xs = grid.nodes();
    let xis = grid.frequencies();
    let n = xs.len();
    let nk = xis.len();
    let eik = Eikonal { v_long, m: m_inf, dx: grid.spacing(), dispersion };
    let rule = quad::gauss_legendre(12);
    let mut branches = Vec::new();
    for sign in [1.0, -1.0] {
        let cols: Vec<Vec<f64>> = par::map(nk, |k| eik.profile(&xs, xis[k], sign, &rule));
        let mut flat = vec![0.0; n * nk];
        for (k, col) in cols.iter().enumerate() {
            for j in 0..n {
                flat[j * nk + k] = col[j];
            }
        }
        branches.push(flat);
    }
    let mut residual = 0.0f64;
    let mut region_points = 0;
    let stride = (n / 64).max(1);
    for sign in [1.0, -1.0] {
        for j in (0..n).step_by(stride) {
            for &xi in &xis {
                if !region.contains(xs[j], xi, sign) {
                    continue;
                }
                let (_, rad) = eik.slope(xs[j], xi, sign);
                if rad <= 0.0 {
                    return Err(ScatteringError::BranchCollapse { x: xs[j], xi });
                }
                region_points += 1;
                residual = residual.max(eik.residual(xs[j], xi, sign, &rule));
            }
        }
    }
    let minus = branches.pop().unwrap_or_default();
    let plus = branches.pop().unwrap_or_default();
    Ok(EikonalPhase {
        xs,
        xis,
        plus,
        minus,
        dispersion,
        region,
        m_inf,
        spacing: grid.spacing(),
        residual,
        region_points,
    })
}

/// Log-log slope of `max_{|x| <= r} |phi(x, xi) - x xi|` over `r` in `[X/8, X]`.
pub fn correction_growth_exponent(
    grid: &Grid1D,
    v_long: &(dyn Fn(f64) -> f64 + Sync),
    m_inf: f64,
    dispersion: Dispersion,
    xi: f64,
    sign: f64,
) -> f64 {
    let xs = grid.nodes();
    let eik = Eikonal { v_long, m: m_inf, dx: grid.spacing(), dispersion };
    let rule = quad::gauss_legendre(12);
    let phi = eik.profile(&xs, xi, sign, &rule);
    let corr: Vec<f64> = xs.iter().zip(&phi).map(|(x, p)| (p - x * xi).abs()).collect();
    let pts: Vec<(f64, f64)> = (0..=12)
        .map(|k| grid.half_width * 2f64.powf(-3.0 + 3.0 * k as f64 / 12.0))
        .map(|r| {
            let m = xs.iter().zip(&corr).filter(|(x, _)| x.abs() <= r).map(|(_, c)| *c).fold(0.0, f64::max);
            (r.ln(), m.max(f64::MIN_POSITIVE).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Dense `j(phi, a)`: `(1/N) sum_k a(x_j, xi_k) e^{i phi(x_j, xi_k)} sum_l e^{-i xi_k x_l} u_l`.
pub fn fio_matrix(grid: &Grid1D, phase: &[f64], amplitude: Option<&(dyn Fn(f64, f64) -> c64 + Sync)>) -> CMat {
    let xs = grid.nodes();
    let xis = grid.frequencies();
    let n = xs.len();
    let nk = xis.len();
    let e = CMat::from_fn(n, nk, |j, k| {
        let a = amplitude.map(|f| f(xs[j], xis[k])).unwrap_or(c64::ONE);
        a * c64::from_polar(1.0, phase[j * nk + k])
    });
    let f = CMat::from_fn(nk, n, |k, l| c64::from_polar(1.0 / nk as f64, -xis[k] * xs[l]));
    e * f
}

/// Free phase `x xi` on the grid.
pub fn linear_phase(grid: &Grid1D) -> Vec<f64> {
    let xs = grid.nodes();
    let xis = grid.frequencies();
    xs.iter().flat_map(|x| xis.iter().map(move |k| x * k)).collect()
}

/// Spectral mass of `u` above `0.8` of the Nyquist frequency, relative.
pub fn high_band_fraction(grid: &Grid1D, u: &CVec) -> f64 {
    let xs = grid.nodes();
    let xis = grid.frequencies();
    let cut = 0.8 * std::f64::consts::PI / grid.spacing();
    let mut hi = 0.0;
    let mut total = 0.0;
    for &k in &xis {
        let c: c64 = xs.iter().enumerate().map(|(l, x)| c64::from_polar(1.0, -k * x) * u[l]).sum();
        total += c.norm_sqr();
        if k.abs() > cut {
            hi += c.norm_sqr();
        }
    }
    if total > 0.0 {
        hi / total
    } else {
        0.0
    }
}

pub fn fio_apply(
    grid: &Grid1D,
    phase: &[f64],
    amplitude: Option<&(dyn Fn(f64, f64) -> c64 + Sync)>,
    u: &CVec,
) -> Result<CVec> {
    let fraction = high_band_fraction(grid, u);
    if fraction > 1e-8 {
        return Err(ScatteringError::BandwidthExceeded { fraction });
    }
    Ok(fio_matrix(grid, phase, amplitude) * u)
}

/// The 2x2 block modifier and the FIOs it is built from.
#[derive(Debug, Clone)]
pub struct Modifier {
    pub matrix: CMat,
    pub j_plus: CMat,
    pub j_minus: CMat,
    pub sign: f64,
}

/// `s/2 [[j+ - j-, -(j+ + j-) eps^-1], [-(j+ + j-) eps, j+ - j-]]` with the free `eps`.
pub fn build_modifier_t(ops: &KgOperators, phase: &EikonalPhase, lr_sign: i8) -> Result<Modifier> {
    if !(phase.residual <= EIKONAL_TOLERANCE) {
        return Err(ScatteringError::PhaseNotCertified { residual: phase.residual });
    }
    let grid = &ops.grid;
    let j_plus = fio_matrix(grid, &phase.plus, None);
    let j_minus = fio_matrix(grid, &phase.minus, None);
    let sign = if lr_sign >= 0 { 1.0 } else { -1.0 };
    let diff = &j_plus - &j_minus;
    let sum = &j_plus + &j_minus;
    let matrix = linalg::scale_re(
        &linalg::block2(&diff, &linalg::scale_re(&(&sum * &ops.free_eps_inv), -1.0), &linalg::scale_re(&(&sum * &ops.free_eps), -1.0), &diff),
        0.5 * sign,
    );
    Ok(Modifier { matrix, j_plus, j_minus, sign })
}

/// `U^-1 (s diag(1, -1)) U_inf`.
pub fn hat_j(ops: &KgOperators, sign: f64) -> CMat {
    let n = ops.grid.points;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let id = linalg::identity(n);
    let u_inf = linalg::scale_re(&linalg::block2(&ops.free_eps, &linalg::scale_re(&id, -1.0), &ops.free_eps, &id), s);
    let flip = linalg::block2(&linalg::scale_re(&id, sign), &linalg::zeros(n, n), &linalg::zeros(n, n), &linalg::scale_re(&id, -sign));
    &ops.u_inv * flip * u_inf
}

/// `U^-1 s diag(j+, -j-) U_inf`.
pub fn hat_j_proxy(ops: &KgOperators, modifier: &Modifier) -> CMat {
    let n = ops.grid.points;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let id = linalg::identity(n);
    let u_inf = linalg::scale_re(&linalg::block2(&ops.free_eps, &linalg::scale_re(&id, -1.0), &ops.free_eps, &id), s);
    let d = linalg::block2(
        &linalg::scale_re(&modifier.j_plus, modifier.sign),
        &linalg::zeros(n, n),
        &linalg::zeros(n, n),
        &linalg::scale_re(&modifier.j_minus, -modifier.sign),
    );
    &ops.u_inv * d * u_inf
}

/// `Omega f = P_scatt exp(itB) T exp(-itB_inf) f`.
pub fn long_range_wave_operator(
    model: &ScatteringModel,
    modifier: &Modifier,
    packets: &[WavePacketSpec],
    t: f64,
    direction: Direction,
) -> Result<ScatteringReport> {
    if model.ops.split.is_long_range() && model.ops.split.lr_sign.is_none() {
        return Err(ScatteringError::LongRangeSignUnknown);
    }
    run_packets(model, packets, t, direction, Some(&modifier.matrix), "long_range", false)
}

/// `|(T - J) exp(-itB_inf) f|` in the free energy norm, for each `t`.
pub fn modifier_residual_curve(model: &ScatteringModel, modifier: &Modifier, j: &CMat, f: &CVec, times: &[f64]) -> Result<Vec<f64>> {
    let diff = &modifier.matrix - j;
    times
        .iter()
        .map(|&t| {
            let g = model.free_propagator.evolve(f, t)?;
            Ok(model.free_norm(&(&diff * g)))
        })
        .collect()
}
