//! Spectral analysis of Krein-selfadjoint matrices: eigenvalue classification,
//! Riesz projections, definitizing polynomials and smooth functional calculus.

use faer::Mat;
use serde::Serialize;

use crate::krein::{KreinError, KreinOperator};
use crate::linalg::{self, c64, re, CMat, LinalgError, Schur};
use crate::par;
use crate::quad;
use crate::smooth::{smoothstep_jet, Jet, SmoothFunction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DefinitizeError {
    #[error("operator is not Krein-selfadjoint (relative residual {residual:.3e})")]
    NotKreinSelfadjoint { residual: f64 },
    #[error("eigenvalue clusters at {a} and {b} are closer than twice the clustering radius")]
    ClusterAmbiguity { a: c64, b: c64 },
    #[error("eigenvalue {eigenvalue} lies within {distance:.3e} of the contour")]
    EigenvalueOnContour { eigenvalue: c64, distance: f64 },
    #[error("contour quadrature did not settle after {nodes} nodes (change {change:.3e})")]
    QuadratureDiverged { nodes: usize, change: f64 },
    #[error("no candidate polynomial passed the certificate ({candidates} tried)")]
    NoCertifiedPolynomial { candidates: usize },
    #[error("interval endpoint meets the critical point {point}")]
    CriticalBoundary { point: f64 },
    #[error("support of f touches the critical point {point}")]
    SupportTouchesCriticalPoint { point: c64 },
    #[error("two-dimensional quadrature not converged (estimate {estimate:.3e})")]
    QuadratureNotConverged { estimate: f64 },
    #[error("sample {z} is too close to the spectrum")]
    SampleTooCloseToSpectrum { z: c64 },
    #[error(transparent)]
    Krein(#[from] KreinError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, DefinitizeError>;

#[derive(Debug, Clone, Copy)]
pub struct SpectralTolerances {
    /// clustering radius relative to the spectral radius
    pub cluster: f64,
    /// rank threshold relative to |A| for Jordan data
    pub jordan: f64,
    /// relative threshold below which an eigenvector counts as neutral
    pub sign: f64,
    /// admissible relative selfadjointness residual
    pub selfadjoint: f64,
    /// link clusters closer than twice the radius instead of failing
    pub merge_ambiguous: bool,
}

impl Default for SpectralTolerances {
    fn default() -> Self {
        SpectralTolerances { cluster: 1e-7, jordan: 1e-8, sign: 1e-8, selfadjoint: 1e-8, merge_ambiguous: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignCharacteristic {
    Positive,
    Negative,
    Indefinite,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexPair {
    /// representative with positive imaginary part
    #[serde(serialize_with = "ser_c64")]
    pub z: c64,
    pub riesz_rank: usize,
    pub jordan_index: usize,
    /// cluster indices of `z` and of its conjugate partner
    #[serde(skip)]
    pub clusters: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct RealPoint {
    pub lambda: f64,
    pub alg_mult: usize,
    pub geo_mult: usize,
    pub jordan_index: usize,
    pub sign_char: SignCharacteristic,
    pub is_critical: bool,
    #[serde(skip)]
    pub cluster: usize,
}

#[derive(Debug, Clone)]
pub struct Cluster {
    pub center: c64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SpectrumClassification {
    pub complex_pairs: Vec<ComplexPair>,
    pub real_points: Vec<RealPoint>,
    pub pairing_residual: f64,
    pub eta: f64,
    pub spectral_radius: f64,
    pub eigenvalues: Vec<c64>,
    pub eigenvectors: CMat,
    pub clusters: Vec<Cluster>,
}

pub(crate) fn ser_c64<S: serde::Serializer>(z: &c64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

impl SpectrumClassification {
    pub fn critical_points(&self) -> Vec<f64> {
        self.real_points.iter().filter(|p| p.is_critical).map(|p| p.lambda).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |a, z| a.max(z.im.abs()))
    }

    /// Non-real eigenvalues, both members of every pair.
    pub fn nonreal(&self) -> Vec<c64> {
        self.complex_pairs.iter().flat_map(|p| [p.z, p.z.conj()]).collect()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.complex_pairs.iter().map(|p| 2 * p.riesz_rank).sum::<usize>()
            + self.real_points.iter().map(|p| p.alg_mult).sum::<usize>()
    }
}

/// Single-linkage clusters of radius `eta`. With `merge_ambiguous` the linkage radius is `2 eta`
/// and no ambiguity is reported.
fn cluster_eigenvalues(values: &[c64], eta: f64, merge_ambiguous: bool) -> Result<Vec<Cluster>> {
    let eta = if merge_ambiguous { 2.0 * eta } else { eta };
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re).then(values[a].im.total_cmp(&values[b].im)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if values[j].re - values[i].re > eta {
                break;
            }
            if (values[i] - values[j]).norm() <= eta {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index = vec![usize::MAX; n];
    for &i in &order {
        let r = find(&mut parent, i);
        if index[r] == usize::MAX {
            index[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[index[r]].push(i);
    }
    let clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|members| {
            let center = members.iter().map(|&i| values[i]).sum::<c64>() / members.len() as f64;
            Cluster { center, members }
        })
        .collect();
    if merge_ambiguous {
        return Ok(clusters);
    }
    for (a, ca) in clusters.iter().enumerate() {
        for cb in &clusters[a + 1..] {
            if cb.center.re - ca.center.re > 2.0 * eta {
                break;
            }
            let gap = ca
                .members
                .iter()
                .flat_map(|&i| cb.members.iter().map(move |&j| (values[i] - values[j]).norm()))
                .fold(f64::INFINITY, f64::min);
            if gap <= 2.0 * eta {
                return Err(DefinitizeError::ClusterAmbiguity { a: ca.center, b: cb.center });
            }
        }
    }
    Ok(clusters)
}

fn shifted_power_ranks(a: &CMat, lambda: c64, max_power: usize, tol: f64) -> Result<Vec<usize>> {
    let n = a.nrows();
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let mut power = shifted.clone();
    let mut ranks = Vec::with_capacity(max_power);
    for k in 0..max_power {
        if k > 0 {
            power = &power * &shifted;
        }
        let sv = linalg::singular_values(&power)?;
        let cut = tol * linalg::spectral_norm(a).powi(k as i32 + 1).max(f64::MIN_POSITIVE);
        ranks.push(sv.iter().filter(|&&s| s > cut).count());
    }
    Ok(ranks)
}

/// Geometric multiplicity, Jordan index and an orthonormal eigenspace basis.
fn jordan_data(a: &CMat, lambda: c64, alg: usize, tol: f64) -> Result<(usize, usize, CMat)> {
    let n = a.nrows();
    let ranks = shifted_power_ranks(a, lambda, alg, tol)?;
    let geo = (n - ranks[0]).clamp(1, alg);
    let nu = ranks
        .iter()
        .position(|&r| r <= n - alg)
        .map(|k| k + 1)
        .unwrap_or(alg);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted.svd().map_err(|_| LinalgError::NoConvergence)?;
    let v = svd.V();
    let kernel = Mat::from_fn(n, geo, |i, j| v[(i, n - geo + j)]);
    Ok((geo, nu.max(1), kernel))
}

/// Member eigenvectors as a basis when they are numerically independent (no Jordan chain).
fn semisimple_basis(vectors: &CMat, members: &[usize]) -> Option<CMat> {
    let n = vectors.nrows();
    let basis = Mat::from_fn(n, members.len(), |i, j| vectors[(i, members[j])]);
    let sv = linalg::singular_values(&basis).ok()?;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (max > 0.0 && min > 1e-6 * max).then_some(basis)
}

pub fn classify_spectrum(a: &KreinOperator) -> Result<SpectrumClassification> {
    classify_spectrum_with(a, SpectralTolerances::default())
}

pub fn classify_spectrum_with(a: &KreinOperator, tol: SpectralTolerances) -> Result<SpectrumClassification> {
    let residual = a.relative_selfadjoint_residual();
    if residual > tol.selfadjoint {
        return Err(DefinitizeError::NotKreinSelfadjoint { residual });
    }
    let eig = linalg::eigen(&a.matrix)?;
    classify_spectrum_from(a, tol, eig)
}

/// Classification from a precomputed eigendecomposition of `a`.
pub fn classify_spectrum_from(a: &KreinOperator, tol: SpectralTolerances, eig: linalg::Eigen) -> Result<SpectrumClassification> {
    let radius = eig.values.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let eta = tol.cluster * radius.max(f64::MIN_POSITIVE);
    let clusters = cluster_eigenvalues(&eig.values, eta, tol.merge_ambiguous)?;
    let m = a.gram.gram();
    let m_norm = a.gram.gram_norm();

    let mut real_points = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        if c.center.im.abs() <= eta {
            let alg = c.members.len();
            let (geo, nu, basis) = if alg == 1 {
                let v = eig.vectors.col(c.members[0]).to_owned();
                (1, 1, Mat::from_fn(v.nrows(), 1, |i, _| v[i]))
            } else if let Some(b) = semisimple_basis(&eig.vectors, &c.members) {
                (alg, 1, b)
            } else {
                jordan_data(&a.matrix, re(c.center.re), alg, tol.jordan)?
            };
            let g = linalg::hermitian_part(&(basis.adjoint() * m * &basis));
            let gv = linalg::hermitian_eigenvalues(&g)?;
            let scale = m_norm * linalg::norm(&basis).powi(2) / basis.ncols() as f64;
            let cut = tol.sign * scale;
            let sign_char = if gv.iter().any(|x| x.abs() <= cut) {
                SignCharacteristic::Degenerate
            } else if gv.iter().all(|&x| x > 0.0) {
                SignCharacteristic::Positive
            } else if gv.iter().all(|&x| x < 0.0) {
                SignCharacteristic::Negative
            } else {
                SignCharacteristic::Indefinite
            };
            real_points.push(RealPoint {
                lambda: c.center.re,
                alg_mult: alg,
                geo_mult: geo,
                jordan_index: nu,
                sign_char,
                is_critical: sign_char != SignCharacteristic::Positive || nu > 1,
                cluster: ci,
            });
        } else if c.center.im > 0.0 {
            upper.push(ci);
        } else {
            lower.push(ci);
        }
    }
    let mut complex_pairs = Vec::new();
    let mut pairing_residual = 0.0f64;
    let mut used = vec![false; lower.len()];
    for &ui in &upper {
        let z = clusters[ui].center;
        let best = lower
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, &li)| (k, li, (clusters[li].center - z.conj()).norm()))
            .min_by(|a, b| a.2.total_cmp(&b.2));
        match best {
            Some((k, li, d)) if d <= 2.0 * eta.max(1e-12 * radius) && clusters[li].members.len() == clusters[ui].members.len() => {
                used[k] = true;
                pairing_residual = pairing_residual.max(d);
                let rank = clusters[ui].members.len();
                let nu = if rank == 1 || semisimple_basis(&eig.vectors, &clusters[ui].members).is_some() {
                    1
                } else {
                    jordan_data(&a.matrix, z, rank, tol.jordan)?.1
                };
                complex_pairs.push(ComplexPair { z, riesz_rank: rank, jordan_index: nu, clusters: (ui, li) });
            }
            _ => {
                return Err(DefinitizeError::ClusterAmbiguity { a: z, b: z.conj() });
            }
        }
    }
    if let Some(k) = used.iter().position(|u| !u) {
        let z = clusters[lower[k]].center;
        return Err(DefinitizeError::ClusterAmbiguity { a: z, b: z.conj() });
    }
    real_points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    complex_pairs.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    Ok(SpectrumClassification {
        complex_pairs,
        real_points,
        pairing_residual,
        eta,
        spectral_radius: radius,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        clusters,
    })
}

/// Contour integrals of the resolvent, evaluated through a Schur form of `A`.
pub struct RieszEngine {
    schur: Schur,
    scale: f64,
}

#[derive(Debug, Clone)]
pub struct RieszProjection {
    pub matrix: CMat,
    pub nodes: usize,
    pub change: f64,
}

/// `(z - T)^{-1}` for upper-triangular `T`, accumulated as `w * (z - T)^{-1}` into `acc`.
fn add_triangular_resolvent(t: &CMat, z: c64, w: c64, acc: &mut CMat) {
    let n = t.nrows();
    let mut x = vec![c64::ZERO; n];
    for j in 0..n {
        x[j] = c64::new(1.0, 0.0) / (z - t[(j, j)]);
        for i in (0..j).rev() {
            let mut s = c64::ZERO;
            for k in i + 1..=j {
                s += t[(i, k)] * x[k];
            }
            x[i] = s / (z - t[(i, i)]);
        }
        for i in 0..=j {
            acc[(i, j)] += w * x[i];
        }
    }
}

impl RieszEngine {
    pub fn new(a: &CMat) -> Result<Self> {
        let schur = linalg::schur(a)?;
        let scale = schur.eigenvalues().iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1.0);
        Ok(RieszEngine { schur, scale })
    }

    pub fn schur(&self) -> &Schur {
        &self.schur
    }

    fn ring_sum(&self, center: c64, radius: f64, k: usize, offset: f64) -> CMat {
        let t = &self.schur.t;
        let n = t.nrows();
        par::sum_matrices(k, n, n, |i, acc| {
            let theta = 2.0 * std::f64::consts::PI * (i as f64 + offset) / k as f64;
            let e = c64::from_polar(1.0, theta);
            add_triangular_resolvent(t, center + e * radius, e * radius, acc);
        })
    }

    /// `(1/2 pi i) \oint (z - A)^{-1} dz` over the circle, doubling the node count until settled.
    pub fn project(&self, center: c64, radius: f64, quad_points: usize) -> Result<RieszProjection> {
        let margin = 0.02 * radius;
        for z in self.schur.eigenvalues() {
            let d = ((z - center).norm() - radius).abs();
            if d <= margin {
                return Err(DefinitizeError::EigenvalueOnContour { eigenvalue: z, distance: d });
            }
        }
        let mut k = quad_points.max(4);
        let mut sum = self.ring_sum(center, radius, k, 0.0);
        let mut est = linalg::scale_re(&sum, 1.0 / k as f64);
        let mut change = f64::INFINITY;
        while k <= 1 << 14 {
            let extra = self.ring_sum(center, radius, k, 0.5);
            sum += extra;
            k *= 2;
            let next = linalg::scale_re(&sum, 1.0 / k as f64);
            change = linalg::norm(&(&next - &est));
            est = next;
            if !linalg::is_finite(&est) {
                break;
            }
            if change <= 1e-10 * linalg::norm(&est).max(1.0) {
                let q = &self.schur.q;
                let matrix = q * &est * q.adjoint();
                return Ok(RieszProjection { matrix, nodes: k, change });
            }
        }
        Err(DefinitizeError::QuadratureDiverged { nodes: k, change })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn riesz_projection(a: &CMat, center: c64, radius: f64, quad_points: usize) -> Result<RieszProjection> {
    RieszEngine::new(a)?.project(center, radius, quad_points)
}

/// How cluster projectors are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorMethod {
    /// contour quadrature around each cluster
    Contour,
    /// rank-one Krein formula `v v* M / [v, v]` for simple eigenvalues, contour otherwise
    Eigenvector,
}

/// Riesz projectors for the clusters of a classified spectrum.
pub struct SpectralProjectors<'a> {
    op: &'a KreinOperator,
    spec: &'a SpectrumClassification,
    engine: Option<RieszEngine>,
    method: ProjectorMethod,
}

impl<'a> SpectralProjectors<'a> {
    pub fn new(op: &'a KreinOperator, spec: &'a SpectrumClassification, method: ProjectorMethod) -> Self {
        SpectralProjectors { op, spec, engine: None, method }
    }

    fn engine(&mut self) -> Result<&RieszEngine> {
        if self.engine.is_none() {
            self.engine = Some(RieszEngine::new(&self.op.matrix)?);
        }
        Ok(self.engine.as_ref().unwrap())
    }

    fn isolation_radius(&self, ci: usize) -> f64 {
        let c = self.spec.clusters[ci].center;
        let spread = self.spec.clusters[ci]
            .members
            .iter()
            .map(|&i| (self.spec.eigenvalues[i] - c).norm())
            .fold(0.0, f64::max);
        let gap = self
            .spec
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.spec.clusters[ci].members.contains(i))
            .map(|(_, z)| (z - c).norm())
            .fold(f64::INFINITY, f64::min);
        let r = if gap.is_finite() { 0.5 * (gap + spread) } else { 1.0 + 2.0 * spread };
        r.max(2.0 * spread + self.spec.eta)
    }

    /// Krein partner of a simple eigenvalue: the eigenvector of the conjugate eigenvalue.
    fn partner_vector(&self, ci: usize) -> Option<usize> {
        let c = self.spec.clusters[ci].center;
        if c.im.abs() <= self.spec.eta {
            return Some(self.spec.clusters[ci].members[0]);
        }
        self.spec
            .complex_pairs
            .iter()
            .find_map(|p| {
                if p.clusters.0 == ci {
                    Some(p.clusters.1)
                } else if p.clusters.1 == ci {
                    Some(p.clusters.0)
                } else {
                    None
                }
            })
            .map(|other| self.spec.clusters[other].members[0])
    }

    pub fn cluster(&mut self, ci: usize) -> Result<CMat> {
        let simple = self.spec.clusters[ci].members.len() == 1;
        if self.method == ProjectorMethod::Eigenvector && simple {
            let i = self.spec.clusters[ci].members[0];
            if let Some(j) = self.partner_vector(ci) {
                let v = self.spec.eigenvectors.col(i).to_owned();
                let w = self.spec.eigenvectors.col(j).to_owned();
                let mw = self.op.gram.gram() * &w;
                let den: c64 = mw.adjoint() * &v;
                let cut = 1e-10 * self.op.gram.gram_norm() * v.norm_l2() * w.norm_l2();
                if den.norm() > cut {
                    let n = v.nrows();
                    return Ok(Mat::from_fn(n, n, |r, s| v[r] * mw[s].conj() / den));
                }
            }
        }
        let center = self.spec.clusters[ci].center;
        let radius = self.isolation_radius(ci);
        Ok(self.engine()?.project(center, radius, 64)?.matrix)
    }

    pub fn real_point(&mut self, k: usize) -> Result<CMat> {
        let ci = self.spec.real_points[k].cluster;
        self.cluster(ci)
    }

    /// `E(z) + E(conj z)` for the `k`-th complex pair.
    pub fn pair(&mut self, k: usize) -> Result<CMat> {
        let (a, b) = self.spec.complex_pairs[k].clusters;
        Ok(self.cluster(a)? + self.cluster(b)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletenessReport {
    pub residual: f64,
    /// max |E(z) E(z') | over distinct clusters
    pub orthogonality: f64,
    /// max |E^2 - E|
    pub idempotence: f64,
    /// max |dagger(E(z)) - E(conj z)|
    pub dagger_pairing: f64,
}

/// `|E_0 + 1(A) - I|` together with the projector algebra residuals.
pub fn completeness_identity(a: &KreinOperator, s: &SpectrumClassification) -> Result<CompletenessReport> {
    completeness_identity_with(a, s, ProjectorMethod::Contour)
}

pub fn completeness_identity_with(
    a: &KreinOperator,
    s: &SpectrumClassification,
    method: ProjectorMethod,
) -> Result<CompletenessReport> {
    let n = a.dim();
    let mut sp = SpectralProjectors::new(a, s, method);
    let projectors: Vec<CMat> = (0..s.clusters.len()).map(|c| sp.cluster(c)).collect::<Result<_>>()?;
    let mut total = linalg::zeros(n, n);
    let mut idempotence = 0.0f64;
    for p in &projectors {
        total += p;
        idempotence = idempotence.max(linalg::norm(&(p * p - p)));
    }
    let mut orthogonality = 0.0f64;
    if projectors.len() <= 64 {
        for (i, p) in projectors.iter().enumerate() {
            for q in projectors.iter().skip(i + 1) {
                orthogonality = orthogonality.max(linalg::norm(&(p * q)));
            }
        }
    } else {
        // pairwise products against the complement are equivalent and linear in the count
        for p in &projectors {
            let rest = &total - p;
            orthogonality = orthogonality.max(linalg::norm(&(p * &rest)));
        }
    }
    let mut dagger_pairing = 0.0f64;
    for (ci, c) in s.clusters.iter().enumerate() {
        let target = s
            .clusters
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1.center - c.center.conj()).norm().total_cmp(&(y.1.center - c.center.conj()).norm()))
            .map(|x| x.0)
            .unwrap_or(ci);
        let d = a.gram.dagger(&projectors[ci])?;
        dagger_pairing = dagger_pairing.max(linalg::norm(&(d - &projectors[target])));
    }
    let residual = linalg::norm(&(total - linalg::identity(n)));
    Ok(CompletenessReport { residual, orthogonality, idempotence, dagger_pairing })
}

/// Sum of the Riesz projections of the real eigenvalues inside `[lo, hi]`.
pub fn spectral_projection_interval(
    a: &KreinOperator,
    s: &SpectrumClassification,
    lo: f64,
    hi: f64,
) -> Result<CMat> {
    let tol = s.eta.max(1e-12 * s.spectral_radius);
    for c in s.critical_points() {
        if (c - lo).abs() <= tol || (c - hi).abs() <= tol {
            return Err(DefinitizeError::CriticalBoundary { point: c });
        }
    }
    let n = a.dim();
    let mut sp = SpectralProjectors::new(a, s, ProjectorMethod::Eigenvector);
    let mut out = linalg::zeros(n, n);
    for (k, p) in s.real_points.iter().enumerate() {
        if p.lambda >= lo && p.lambda <= hi {
            out += sp.real_point(k)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DefinitizingPolynomial {
    /// `coeffs[k]` multiplies `z^k`
    pub coeffs: Vec<f64>,
    /// smallest eigenvalue of the hermitian part of `M p(A)`, normalized
    pub certificate_residual: f64,
    pub critical_points: Vec<f64>,
    /// factors as (root, exponent); complex roots stand for the conjugate pair
    #[serde(skip)]
    pub factors: Vec<(c64, usize)>,
    pub candidates_tried: usize,
}

impl DefinitizingPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: c64) -> c64 {
        self.coeffs.iter().rev().fold(c64::ZERO, |acc, &c| acc * z + c)
    }

    /// `p(A)` evaluated as a product of factors.
    pub fn apply(&self, a: &CMat) -> CMat {
        factor_product(a, &self.factors)
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn factor_poly(root: c64, exp: usize) -> Vec<f64> {
    let base = if root.im == 0.0 { vec![-root.re, 1.0] } else { vec![root.norm_sqr(), -2.0 * root.re, 1.0] };
    (0..exp).fold(vec![1.0], |acc, _| poly_mul(&acc, &base))
}

fn factor_product(a: &CMat, factors: &[(c64, usize)]) -> CMat {
    let n = a.nrows();
    let mut out = linalg::identity(n);
    for &(root, exp) in factors {
        let mut f = a.clone();
        if root.im == 0.0 {
            for i in 0..n {
                f[(i, i)] -= re(root.re);
            }
        } else {
            f = a * a;
            for i in 0..n {
                for j in 0..n {
                    f[(i, j)] -= a[(i, j)] * (2.0 * root.re);
                }
                f[(i, i)] += re(root.norm_sqr());
            }
        }
        for _ in 0..exp {
            out = &out * &f;
        }
    }
    out
}

/// Searches for an even-degree polynomial `p` with `[u, p(A) u] >= 0`.
pub fn definitizing_polynomial(a: &KreinOperator, s: &SpectrumClassification) -> Result<DefinitizingPolynomial> {
    // candidate factors: every complex pair and every real point of non-positive type or with a Jordan chain
    let mut slots: Vec<(c64, usize)> = s.complex_pairs.iter().map(|p| (p.z, p.jordan_index + 1)).collect();
    for p in &s.real_points {
        if p.sign_char != SignCharacteristic::Positive || p.jordan_index > 1 {
            slots.push((re(p.lambda), p.jordan_index + 1));
        }
    }
    let max_slots = 10;
    if slots.len() > max_slots {
        slots.truncate(max_slots);
    }
    let mnorm = a.gram.gram_norm();
    let anorm = linalg::spectral_norm(&a.matrix).max(1.0);
    let mut tried = 0usize;
    for size in 0..=slots.len() {
        let mut candidates: Vec<Vec<(c64, usize)>> = Vec::new();
        for subset in combinations(slots.len(), size) {
            let ranges: Vec<usize> = subset.iter().map(|&i| slots[i].1).collect();
            for exps in exponent_grid(&ranges) {
                let factors: Vec<(c64, usize)> = subset
                    .iter()
                    .zip(&exps)
                    .map(|(&i, &e)| {
                        let root = slots[i].0;
                        // real monomials of odd order are squared to keep the degree even
                        let e = if root.im == 0.0 && e % 2 == 1 { e + 1 } else { e };
                        (root, e)
                    })
                    .collect();
                if !candidates.contains(&factors) {
                    candidates.push(factors);
                }
            }
        }
        candidates.sort_by_key(|f| f.iter().map(|&(r, e)| if r.im == 0.0 { e } else { 2 * e }).sum::<usize>());
        for factors in candidates {
            tried += 1;
            if tried > 20000 {
                return Err(DefinitizeError::NoCertifiedPolynomial { candidates: tried });
            }
            let pa = factor_product(&a.matrix, &factors);
            let coeffs = factors.iter().fold(vec![1.0], |acc, &(r, e)| poly_mul(&acc, &factor_poly(r, e)));
            let cert = linalg::hermitian_eigenvalues(&(a.gram.gram() * &pa))?[0];
            let scale = mnorm * coeffs.iter().enumerate().map(|(k, c)| c.abs() * anorm.powi(k as i32)).sum::<f64>();
            let certificate_residual = cert / scale;
            if certificate_residual >= -1e-8 {
                let mut critical_points: Vec<f64> = factors.iter().filter(|f| f.0.im == 0.0).map(|f| f.0.re).collect();
                critical_points.sort_by(f64::total_cmp);
                return Ok(DefinitizingPolynomial {
                    coeffs,
                    certificate_residual,
                    critical_points,
                    factors,
                    candidates_tried: tried,
                });
            }
        }
    }
    Err(DefinitizeError::NoCertifiedPolynomial { candidates: tried })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn exponent_grid(ranges: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &r in ranges {
        out = out
            .into_iter()
            .flat_map(|v| {
                (1..=r).map(move |e| {
                    let mut w = v.clone();
                    w.push(e);
                    w
                })
            })
            .collect();
    }
    out
}

/// Parameters of the almost-analytic extension
/// `f~(x + iy) = sum_{q <= N} f^(q)(x) (iy)^q / q! * chi(y / (delta <x>))`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HsConfig {
    pub taylor_order: usize,
    /// `None` picks the width from the critical points and the size of `f^(N)`
    pub cutoff_width: Option<f64>,
    /// absolute tolerance relative to `|f|_inf` for the refinement estimate
    pub tolerance: f64,
    pub max_level: usize,
    /// the strip `|Im z| < im_cut` is dropped
    pub im_cut: f64,
    /// eigenvalues closer than this share a Schur block
    pub block_gap: f64,
}

impl Default for HsConfig {
    fn default() -> Self {
        HsConfig { taylor_order: 4, cutoff_width: None, tolerance: 1e-7, max_level: 3, im_cut: 1e-4, block_gap: 0.02 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlmostAnalyticExtension {
    pub taylor_order: usize,
    pub cutoff_width: f64,
    /// `[x_min, x_max, y_min, y_max]`
    pub support_box: [f64; 4],
    /// empirical constant in `|dbar f~| <= C <x>^{-N-1} |y|^N` over the sample grid
    pub decay_constant: f64,
    pub config: HsConfig,
    #[serde(skip)]
    pub sup_norm: f64,
}

fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// `chi(s)` and `chi'(s)`: 1 on `|s| <= 1/2`, 0 on `|s| >= 1`.
pub fn hs_cutoff(s: f64) -> (f64, f64) {
    let a = s.abs();
    let t = Jet::affine((1.0 - a) / 0.5, -2.0, 2);
    let j = smoothstep_jet(&t);
    (j.0[0], j.0[1] * s.signum())
}

/// Chooses the cutoff width and measures the extension on its sample grid.
pub fn almost_analytic_extension(
    f: &dyn SmoothFunction,
    avoid: &[c64],
    config: HsConfig,
) -> Result<AlmostAnalyticExtension> {
    let (a, b) = f.support();
    let bmax = bracket(a).max(bracket(b));
    let mut gap = f64::INFINITY;
    for &z in avoid {
        let dx = if z.re < a { a - z.re } else if z.re > b { z.re - b } else { 0.0 };
        let d = dx.hypot(z.im);
        if d <= 1e-12 * (1.0 + z.norm()) {
            return Err(DefinitizeError::SupportTouchesCriticalPoint { point: z });
        }
        gap = gap.min(d);
    }
    let nn = config.taylor_order;
    let sup = f.sup_norm();
    let width = match config.cutoff_width {
        Some(w) => w,
        None => {
            let dn = f.derivative_sup(nn).max(f64::MIN_POSITIVE);
            let fact: f64 = (1..=nn).map(|k| k as f64).product();
            let taylor = (fact * sup.max(f64::MIN_POSITIVE) / dn).powf(1.0 / nn as f64);
            let geometric = if gap.is_finite() { 0.5 * gap / bmax } else { f64::INFINITY };
            taylor.min(geometric).min(1.0)
        }
    };
    let mut ext = AlmostAnalyticExtension {
        taylor_order: nn,
        cutoff_width: width,
        support_box: [a, b, -width * bmax, width * bmax],
        decay_constant: 0.0,
        config,
        sup_norm: sup,
    };
    let nodes = hs_nodes(f, &ext, 0);
    ext.decay_constant = nodes
        .iter()
        .filter(|n| n.dbar.norm() > 0.0)
        .map(|n| n.dbar.norm() * bracket(n.z.re).powi(nn as i32 + 1) / n.z.im.abs().powi(nn as i32))
        .fold(0.0, f64::max);
    Ok(ext)
}

#[derive(Debug, Clone, Copy)]
struct HsNode {
    z: c64,
    dbar: c64,
    weight: f64,
}

/// `d` holds `f, f', ..., f^(nn+1)` at `x`.
fn dbar_extension(d: &[f64], nn: usize, delta: f64, x: f64, y: f64) -> c64 {
    let bx = bracket(x);
    let s = y / (delta * bx);
    let (ch, dch) = hs_cutoff(s);
    let iy = c64::new(0.0, y);
    let mut taylor = c64::ZERO;
    let mut pw = c64::new(1.0, 0.0);
    let mut fact = 1.0;
    let mut top = c64::ZERO;
    for (q, dq) in d.iter().enumerate().take(nn + 1) {
        if q > 0 {
            pw *= iy;
            fact *= q as f64;
        }
        taylor += pw * (dq / fact);
        if q == nn {
            top = pw / fact;
        }
    }
    let dchx = dch * (-y * x / (delta * bx * bx * bx));
    let dchy = dch / (delta * bx);
    (top * d[nn + 1] * ch + taylor * dchx + c64::new(0.0, 1.0) * taylor * dchy) * 0.5
}

/// Tensor Gauss-Legendre nodes: dyadic layers in `s = y/(delta <x>)` toward the axis,
/// panels in `x` graded toward the support edges.
fn hs_nodes(f: &dyn SmoothFunction, ext: &AlmostAnalyticExtension, level: usize) -> Vec<HsNode> {
    let rule = quad::gauss_legendre(8);
    let (a, b) = (ext.support_box[0], ext.support_box[1]);
    if b <= a {
        return Vec::new();
    }
    let delta = ext.cutoff_width;
    let nx = 16usize << level;
    let sub0 = 8usize << level;
    let h = (b - a) / nx as f64;
    let mut edges: Vec<f64> = Vec::new();
    edges.push(a);
    for j in (1..=6).rev() {
        edges.push(a + h * 0.5f64.powi(j));
    }
    for k in 1..nx {
        edges.push(a + h * k as f64);
    }
    for j in 1..=6 {
        edges.push(b - h * 0.5f64.powi(j));
    }
    edges.push(b);
    let mut xs = Vec::new();
    for w in edges.windows(2) {
        quad::push_panel(&mut xs, w[0], w[1], &rule);
    }
    let bmin = if a <= 0.0 && b >= 0.0 { 1.0 } else { bracket(a.abs().min(b.abs())) };
    let layers = ((delta * bmin / ext.config.im_cut).log2().ceil().max(1.0)) as usize;
    let mut ss = Vec::new();
    for k in 0..layers {
        let hi = 0.5f64.powi(k as i32);
        let lo = 0.5 * hi;
        let parts = if k == 0 { sub0 } else { 1 };
        for p in 0..parts {
            let pa = lo + (hi - lo) * p as f64 / parts as f64;
            let pb = lo + (hi - lo) * (p + 1) as f64 / parts as f64;
            quad::push_panel(&mut ss, pa, pb, &rule);
        }
    }
    let nn = ext.taylor_order;
    let mut out = Vec::with_capacity(xs.len() * ss.len() * 2);
    for &(x, wx) in &xs {
        let bx = bracket(x);
        let d = f.jet(x, nn + 2).derivatives();
        for sign in [1.0, -1.0] {
            for &(s, ws) in &ss {
                let y = sign * s * delta * bx;
                if y.abs() < ext.config.im_cut {
                    continue;
                }
                let dbar = dbar_extension(&d, nn, delta, x, y);
                out.push(HsNode { z: c64::new(x, y), dbar, weight: wx * ws * delta * bx });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct HsResult {
    pub matrix: CMat,
    pub error_estimate: f64,
    pub level: usize,
    pub nodes: usize,
}

/// `f(A) = -(1/pi) \int dbar f~(z) (z - A)^{-1} dx dy`, refined until two levels agree.
///
/// The integral is taken on the diagonal blocks of a clustered Schur form; the
/// off-diagonal blocks follow from `f(T) T = T f(T)`.
pub fn hs_functional_calculus(
    a: &CMat,
    f: &dyn SmoothFunction,
    ext: &AlmostAnalyticExtension,
) -> Result<HsResult> {
    let n = a.nrows();
    if ext.sup_norm == 0.0 {
        return Ok(HsResult { matrix: linalg::zeros(n, n), error_estimate: 0.0, level: 0, nodes: 0 });
    }
    let mut schur = linalg::schur(a)?;
    let blocks = schur.cluster(ext.config.block_gap);
    let diagonal: Vec<CMat> =
        blocks.iter().map(|b| schur.t.submatrix(b.start, b.start, b.len(), b.len()).to_owned()).collect();
    let eval = |level: usize| -> (CMat, usize) {
        let nodes = hs_nodes(f, ext, level);
        let mut fd = Vec::with_capacity(blocks.len());
        for t in &diagonal {
            let m = t.nrows();
            fd.push(par::sum_matrices(nodes.len(), m, m, |i, acc| {
                let nd = nodes[i];
                let w = nd.dbar * (-nd.weight / std::f64::consts::PI);
                add_triangular_resolvent(t, nd.z, w, acc);
            }));
        }
        let ft = parlett_blocks(&schur.t, &blocks, &fd);
        (&schur.q * ft * schur.q.adjoint(), nodes.len())
    };
    let tol = ext.config.tolerance * ext.sup_norm;
    let (mut prev, mut count) = eval(0);
    let mut estimate = f64::INFINITY;
    for level in 1..=ext.config.max_level {
        let (next, c) = eval(level);
        count += c;
        estimate = linalg::norm(&(&next - &prev));
        prev = next;
        if estimate <= tol {
            return Ok(HsResult { matrix: prev, error_estimate: estimate, level, nodes: count });
        }
    }
    Err(DefinitizeError::QuadratureNotConverged { estimate })
}

/// Completes `f(T)` from its diagonal blocks by the block Parlett recurrence.
fn parlett_blocks(t: &CMat, blocks: &[std::ops::Range<usize>], diagonal: &[CMat]) -> CMat {
    let n = t.nrows();
    let mut out = linalg::zeros(n, n);
    for (b, d) in blocks.iter().zip(diagonal) {
        out.submatrix_mut(b.start, b.start, b.len(), b.len()).copy_from(d);
    }
    for j in 0..blocks.len() {
        let cj = blocks[j].clone();
        for i in (0..j).rev() {
            let ci = blocks[i].clone();
            let block = |m: &CMat, r: &std::ops::Range<usize>, c: &std::ops::Range<usize>| {
                m.submatrix(r.start, c.start, r.len(), c.len()).to_owned()
            };
            let mut rhs = block(&out, &ci, &ci) * block(t, &ci, &cj) - block(t, &ci, &cj) * block(&out, &cj, &cj);
            for k in i + 1..j {
                let ck = &blocks[k];
                rhs += block(&out, &ci, ck) * block(t, ck, &cj) - block(t, &ci, ck) * block(&out, ck, &cj);
            }
            let x = triangular_sylvester(&block(t, &ci, &ci), &block(t, &cj, &cj), rhs);
            out.submatrix_mut(ci.start, cj.start, ci.len(), cj.len()).copy_from(&x);
        }
    }
    out
}

/// Solves `P X - X R = C` for upper triangular `P`, `R` with disjoint spectra.
fn triangular_sylvester(p: &CMat, r: &CMat, mut c: CMat) -> CMat {
    let (m, k) = (p.nrows(), r.nrows());
    for col in 0..k {
        for l in 0..col {
            let coef = r[(l, col)];
            for row in 0..m {
                let v = c[(row, l)] * coef;
                c[(row, col)] += v;
            }
        }
        let shift = r[(col, col)];
        for row in (0..m).rev() {
            let mut acc = c[(row, col)];
            for q in row + 1..m {
                acc -= p[(row, q)] * c[(q, col)];
            }
            c[(row, col)] = acc / (p[(row, row)] - shift);
        }
    }
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventProbe {
    /// sup of `|q(A)(A - z)^{-1}| |Im z|` over the samples
    pub c_hat: f64,
    /// sup of `|(A - z)^{-1}| |Im z|^{deg p + 1}` over the samples
    pub strip_c_hat: f64,
    #[serde(serialize_with = "ser_c64")]
    pub z0: c64,
    pub samples: usize,
}

/// Empirical constants in the resolvent bounds of a definitizable operator.
pub fn resolvent_bound_probe(
    a: &KreinOperator,
    p: &DefinitizingPolynomial,
    samples: &[c64],
) -> Result<ResolventProbe> {
    let n = a.dim();
    let eigs = linalg::eigenvalues(&a.matrix)?;
    let radius = eigs.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    for &z in samples {
        let d = eigs.iter().fold(f64::INFINITY, |m, e| m.min((e - z).norm()));
        if z.im.abs() <= 1e-12 * radius.max(1.0) || d <= 1e-10 * radius.max(1.0) {
            return Err(DefinitizeError::SampleTooCloseToSpectrum { z });
        }
    }
    let z0 = c64::new(0.0, 2.0 * radius + 1.0);
    let k = p.degree() / 2;
    let pa = p.apply(&a.matrix);
    let mut shift = linalg::zeros(n, n);
    for i in 0..n {
        shift[(i, i)] = z0;
    }
    let left = &a.matrix - &shift;
    let right = &a.matrix - shift.adjoint();
    let denom = &left * &right;
    let mut inv_k = linalg::identity(n);
    let dinv = linalg::inverse(&denom)?;
    for _ in 0..k {
        inv_k = &inv_k * &dinv;
    }
    let qa = &pa * &inv_k;
    let mut c_hat = 0.0f64;
    let mut strip_c_hat = 0.0f64;
    for &z in samples {
        let mut az = a.matrix.clone();
        for i in 0..n {
            az[(i, i)] -= z;
        }
        let r = linalg::inverse(&az)?;
        let y = z.im.abs();
        c_hat = c_hat.max(linalg::spectral_norm(&(&qa * &r)) * y);
        strip_c_hat = strip_c_hat.max(linalg::spectral_norm(&r) * y.powi(p.degree() as i32 + 1));
    }
    Ok(ResolventProbe { c_hat, strip_c_hat, z0, samples: samples.len() })
}
