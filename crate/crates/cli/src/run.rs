//! Command dispatch and report assembly.

use kgscatter::definitize::{
    classify_spectrum_with, completeness_identity_with, definitizing_polynomial, CompletenessReport, ComplexPair,
    DefinitizingPolynomial, ProjectorMethod, RealPoint,
};
use kgscatter::dynamics::{
    conservation_report, velocity_diagnostics, ConservedForms, EnergyWindow, Propagator, TrajectoryReport,
    VelocityDiagnostic,
};
use kgscatter::klein::{self, KleinError, SweepPoint, REALITY_TOLERANCE};
use kgscatter::linalg::{self, c64, Col, CVec};
use kgscatter::model::{self, check_hypotheses, HypothesisReport, KgOperators, MatrixHeader};
use kgscatter::scattering::{
    build_modifier_t, eikonal_phase_1d, long_range_wave_operator, packet_state, short_range_wave_operator,
    unmodified_wave_operator, Direction, Dispersion, EikonalRegion, ScatteringModel, ScatteringReport,
};
use kgscatter::scenario::ModelSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{self, Command, ExperimentConfig, Format, InitialState, TimeGrid};
use crate::error::CliError;
use crate::output::{BundleWriter, FileEntry, Table};

pub struct RunOptions {
    pub seed: u64,
    pub parallel: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub code_version: &'static str,
    pub seed: u64,
    pub parallel: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_width: Option<usize>,
    pub timestamps: Timestamps,
}

/// Seconds since the Unix epoch.
#[derive(Debug, Serialize)]
pub struct Timestamps {
    pub started: f64,
    pub finished: f64,
}

#[derive(Debug, Serialize)]
pub struct OperatorSummary {
    pub points: usize,
    pub half_width: f64,
    pub dx: f64,
    pub dim: usize,
    pub m_inf: f64,
    pub m_grid: f64,
    pub neg_index: usize,
    pub min_energy: f64,
    pub generator_selfadjoint_residual: f64,
    pub reduced_selfadjoint_residual: f64,
    pub diagonalization_residual: f64,
    pub inverse_residual: f64,
    pub long_range: bool,
    pub mu_s: f64,
    pub mu_l: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_sign: Option<i8>,
}

#[derive(Debug, Serialize)]
pub struct SpectrumSummary {
    pub dim: usize,
    pub eta: f64,
    pub spectral_radius: f64,
    pub pairing_residual: f64,
    pub max_imag: f64,
    pub complex_pairs: Vec<ComplexPair>,
    pub real_points: Vec<RealPoint>,
    pub critical_points: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completeness: Option<CompletenessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub definitizing_polynomial: Option<DefinitizingPolynomial>,
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub neg_index: usize,
    pub complex_pairs: usize,
    pub max_imag: f64,
    pub spectral_radius: f64,
    pub min_energy: f64,
    pub reality_tolerance: f64,
}

impl SweepRow {
    fn new(value: f64, p: &SweepPoint) -> Self {
        SweepRow {
            value,
            neg_index: p.neg_index,
            complex_pairs: p.complex_pairs,
            max_imag: p.max_imag,
            spectral_radius: p.spectral_radius,
            min_energy: p.min_energy,
            reality_tolerance: REALITY_TOLERANCE * p.spectral_radius,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub param: String,
    pub rows: Vec<SweepRow>,
    /// bracket `[lo, hi]` on the first value with `kappa >= 1`; bisected for coupling sweeps
    pub gamma_pos: Option<[f64; 2]>,
    pub gamma_cplx: Option<f64>,
    pub ordering_ok: bool,
    pub neg_index_monotone: bool,
    pub reality_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_too_coarse: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Bundle {
    pub command: Command,
    pub config: ExperimentConfig,
    pub operator: OperatorSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<HypothesisReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity: Option<VelocityDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scattering: Option<ScatteringReport>,
    /// the same packets without a modifier, for long-range models
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scattering_unmodified: Option<ScatteringReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepReport>,
    /// soft failures: refusals and checks that did not pass
    pub diagnostics: Vec<String>,
    pub files: Vec<FileEntry>,
    pub provenance: Provenance,
}

fn now() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn operator_summary(ops: &KgOperators) -> OperatorSummary {
    let (diagonalization_residual, inverse_residual) = ops.reduction_residuals();
    OperatorSummary {
        points: ops.grid.points,
        half_width: ops.grid.half_width,
        dx: ops.grid.spacing(),
        dim: ops.dim(),
        m_inf: ops.m_inf,
        m_grid: ops.m_grid,
        neg_index: ops.neg_index,
        min_energy: ops.energy_spectrum.first().copied().unwrap_or(f64::NAN),
        generator_selfadjoint_residual: ops.generator_selfadjoint_residual(),
        reduced_selfadjoint_residual: ops.reduced_selfadjoint_residual(),
        diagonalization_residual,
        inverse_residual,
        long_range: ops.split.is_long_range(),
        mu_s: ops.split.mu_s,
        mu_l: ops.split.mu_l,
        lr_sign: ops.split.lr_sign,
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    spec: ModelSpec,
    ops: KgOperators,
    seed: u64,
    out: BundleWriter,
    diagnostics: Vec<String>,
}

impl Context<'_> {
    fn csv(&self) -> bool {
        self.cfg.output.wants(Format::Csv)
    }

    fn header(&self, tags: &[&str]) -> MatrixHeader {
        MatrixHeader {
            dim: self.ops.dim(),
            dx: self.ops.grid.spacing(),
            half_width: self.ops.grid.half_width,
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn export_matrices(&mut self) -> Result<(), CliError> {
        if !self.cfg.output.wants(Format::Matrix) {
            return Ok(());
        }
        let generator = self.header(&["generator", "first-order form", "acts on (u, du/dt)"]);
        let gram = self.header(&["energy_gram", "hermitian", "possibly indefinite"]);
        self.out.matrix("generator", &self.ops.generator.clone(), generator)?;
        self.out.matrix("energy_gram", &self.ops.energy_gram.clone(), gram)?;
        Ok(())
    }
}

/// Runs `command` and writes its bundle. Returns the path of the report.
pub fn run_command(
    command: Command,
    cfg: &ExperimentConfig,
    out_dir: std::path::PathBuf,
    opts: &RunOptions,
) -> Result<std::path::PathBuf, CliError> {
    let started = now();
    let spec = cfg.validate(command)?;
    let ops = spec.build().map_err(|e| match e {
        model::ModelError::SampleCount { name, .. } => {
            CliError::ConfigInvalid { pointer: format!("/coefficients/{name}"), message: e.to_string() }
        }
        other => CliError::model(other),
    })?;
    let mut echo = cfg.clone();
    echo.scenario = None;
    echo.grid = Some(spec.grid);
    echo.coefficients = Some(spec.coefficients.clone());
    echo.potential = Some(spec.potential.clone());
    echo.run.command = Some(command);
    echo.run.seed = Some(opts.seed);

    let mut ctx =
        Context { cfg, spec, ops, seed: opts.seed, out: BundleWriter::new(out_dir)?, diagnostics: Vec::new() };
    let mut bundle = Bundle {
        command,
        config: echo,
        operator: operator_summary(&ctx.ops),
        hypotheses: None,
        spectrum: None,
        trajectory: None,
        velocity: None,
        scattering: None,
        scattering_unmodified: None,
        sweep: None,
        diagnostics: Vec::new(),
        files: Vec::new(),
        provenance: Provenance {
            code_version: env!("CARGO_PKG_VERSION"),
            seed: opts.seed,
            parallel: kgscatter::par::is_parallel(),
            pool_width: opts.parallel,
            timestamps: Timestamps { started, finished: 0.0 },
        },
    };
    kgscatter::par::with_threads(opts.parallel, || -> Result<(), CliError> {
        match command {
            Command::Check => {
                bundle.hypotheses = Some(check(&mut ctx)?);
                ctx.export_matrices()
            }
            Command::Spectrum => {
                bundle.spectrum = Some(spectrum(&mut ctx)?);
                ctx.export_matrices()
            }
            Command::Evolve => {
                let (t, v) = evolve(&mut ctx)?;
                bundle.trajectory = Some(t);
                bundle.velocity = v;
                Ok(())
            }
            Command::Scatter => {
                let (r, u) = scatter(&mut ctx)?;
                bundle.scattering = Some(r);
                bundle.scattering_unmodified = u;
                Ok(())
            }
            Command::Sweep => {
                bundle.sweep = Some(sweep(&mut ctx)?);
                Ok(())
            }
        }
    })?;
    bundle.diagnostics = std::mem::take(&mut ctx.diagnostics);
    bundle.files = ctx.out.files.clone();
    bundle.provenance.timestamps.finished = now();
    if cfg.output.wants(Format::Json) || cfg.output.formats.is_empty() {
        ctx.out.report("report.json", &bundle)
    } else {
        Ok(ctx.out.dir().to_path_buf())
    }
}

fn check(ctx: &mut Context) -> Result<HypothesisReport, CliError> {
    let coeffs = ctx.spec.coefficient_set().map_err(CliError::model)?;
    let report = check_hypotheses(&ctx.ops, &coeffs, &ctx.ops.split);
    for e in report.entries.iter().filter(|e| !e.pass) {
        ctx.diagnostics.push(format!("hypothesis {} not satisfied: {}", e.name, e.detail));
    }
    if ctx.csv() {
        let mut t = Table::new(&["index", "pass [bool]", "margin [1]", "proxy [bool]"]);
        for (k, e) in report.entries.iter().enumerate() {
            t.push(vec![k as f64, e.pass as u8 as f64, e.margin, e.proxy as u8 as f64]);
        }
        ctx.out.table("hypotheses.csv", &t)?;
    }
    Ok(report)
}

fn spectrum(ctx: &mut Context) -> Result<SpectrumSummary, CliError> {
    let op = ctx.ops.krein_generator().map_err(CliError::model)?;
    let s = classify_spectrum_with(&op, ctx.cfg.tolerances.spectral()).map_err(CliError::compute)?;
    let completeness = match completeness_identity_with(&op, &s, ProjectorMethod::Eigenvector) {
        Ok(c) => Some(c),
        Err(e) => {
            ctx.diagnostics.push(format!("completeness identity: {e}"));
            None
        }
    };
    let polynomial = match definitizing_polynomial(&op, &s) {
        Ok(p) => Some(p),
        Err(e) => {
            ctx.diagnostics.push(format!("definitizing polynomial: {e}"));
            None
        }
    };
    if ctx.csv() {
        let mut t = Table::new(&["index", "re_lambda [1/L]", "im_lambda [1/L]", "cluster_radius [1/L]"]);
        for (k, z) in s.eigenvalues.iter().enumerate() {
            t.push(vec![k as f64, z.re, z.im, s.eta]);
        }
        ctx.out.table("eigenvalues.csv", &t)?;
        let mut t = Table::new(&[
            "lambda [1/L]",
            "alg_mult [1]",
            "geo_mult [1]",
            "jordan_index [1]",
            "sign [+1/-1/0/2]",
            "critical [bool]",
            "cluster_radius [1/L]",
        ]);
        for p in &s.real_points {
            let sign = match p.sign_char {
                kgscatter::definitize::SignCharacteristic::Positive => 1.0,
                kgscatter::definitize::SignCharacteristic::Negative => -1.0,
                kgscatter::definitize::SignCharacteristic::Degenerate => 0.0,
                kgscatter::definitize::SignCharacteristic::Indefinite => 2.0,
            };
            t.push(vec![
                p.lambda,
                p.alg_mult as f64,
                p.geo_mult as f64,
                p.jordan_index as f64,
                sign,
                p.is_critical as u8 as f64,
                s.eta,
            ]);
        }
        ctx.out.table("real_points.csv", &t)?;
    }
    Ok(SpectrumSummary {
        dim: op.dim(),
        eta: s.eta,
        spectral_radius: s.spectral_radius,
        pairing_residual: s.pairing_residual,
        max_imag: s.max_imag(),
        critical_points: s.critical_points(),
        complex_pairs: s.complex_pairs,
        real_points: s.real_points,
        completeness,
        definitizing_polynomial: polynomial,
    })
}

fn initial_state(ctx: &Context) -> Result<CVec, CliError> {
    let grid = &ctx.ops.grid;
    let n = grid.points;
    let initial = ctx.cfg.run.initial.clone().unwrap_or(InitialState::Gaussian { center: 0.0, momentum: 1.5, width: 3.0 });
    Ok(match initial {
        InitialState::Gaussian { center, momentum, width } => {
            if !(width > 0.0) {
                return Err(CliError::ConfigInvalid {
                    pointer: "/run/initial/width".into(),
                    message: format!("width must be positive, got {width}"),
                });
            }
            linalg::concat(&model::gaussian(grid, center, momentum, width), &Col::zeros(n))
        }
        InitialState::Packet { packet } => packet_state(&ctx.ops, &packet).map_err(CliError::model)?,
        InitialState::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            Col::from_fn(2 * n, |_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        }
    })
}

fn evolve(ctx: &mut Context) -> Result<(TrajectoryReport, Option<VelocityDiagnostic>), CliError> {
    let times = ctx.cfg.run.times.clone().unwrap_or(TimeGrid::Uniform { t_max: 50.0, steps: 25 }).values();
    let f = initial_state(ctx)?;
    let p = Propagator::new(&ctx.ops.generator).map_err(CliError::compute)?;
    let residual = p.reconstruction_residual(&ctx.ops.generator);
    let forms = ConservedForms {
        energy: ctx.ops.energy_gram.clone(),
        charge: linalg::scale(&ctx.ops.symplectic(), c64::new(0.0, 1.0)),
    };
    let trajectory = conservation_report(&p, &forms, &f, &times).map_err(CliError::compute)?;

    let velocity = if ctx.cfg.run.thetas.is_empty() {
        None
    } else {
        // the estimates are stated for the diagonalized generator L = U B U^-1
        let window = ctx.cfg.run.window.unwrap_or(EnergyWindow { lo: 1.3, hi: 3.0, ramp: 0.1 });
        let theta0 = ctx.cfg.run.theta0.unwrap_or(0.1 * window.min_group_speed(ctx.ops.m_inf));
        let pl = Propagator::new(&ctx.ops.l).map_err(CliError::compute)?;
        let g = &ctx.ops.u * &f;
        match velocity_diagnostics(&ctx.ops.grid, &pl, &g, &window, &ctx.cfg.run.thetas, theta0, &times, ctx.ops.m_grid) {
            Ok(v) => Some(v),
            Err(e) => {
                ctx.diagnostics.push(format!("velocity diagnostics refused: {e}"));
                None
            }
        }
    };

    if ctx.csv() {
        let mut cols: Vec<String> =
            ["t [L]", "h [energy]", "q [charge]", "norm [1]"].iter().map(|s| s.to_string()).collect();
        if let Some(v) = &velocity {
            cols.extend(v.thetas.iter().map(|th| format!("tail_theta_{th} [1]")));
            cols.push(format!("inner_theta0_{} [1]", v.theta0));
        }
        cols.push("reconstruction_residual [1]".into());
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut t = Table::new(&refs);
        for (j, time) in trajectory.times.iter().enumerate() {
            let mut row = vec![*time, trajectory.energy[j], trajectory.charge[j], trajectory.norm_curve[j]];
            if let Some(v) = &velocity {
                row.extend(v.tail_mass.iter().map(|curve| curve[j]));
                row.push(v.inner_mass[j]);
            }
            row.push(residual);
            t.push(row);
        }
        ctx.out.table("trajectory.csv", &t)?;
    }
    Ok((trajectory, velocity))
}

fn scatter(ctx: &mut Context) -> Result<(ScatteringReport, Option<ScatteringReport>), CliError> {
    let packets = ctx.cfg.run.packets.clone();
    let direction = ctx.cfg.run.direction.unwrap_or(Direction::Outgoing);
    let long_range = ctx.ops.split.is_long_range();
    let modifier = if long_range {
        let sign = ctx.ops.split.lr_sign.ok_or_else(|| CliError::ConfigInvalid {
            pointer: "/potential/lr_sign".into(),
            message: "long-range scattering needs the sign of the long-range part".into(),
        })?;
        let v = ctx.spec.potential.long_range_fn(ctx.ops.adjust_radius);
        let band = EikonalRegion::band(&ctx.ops.grid, ctx.cfg.run.eikonal_band.unwrap_or(0.7));
        let phase = eikonal_phase_1d(&ctx.ops.grid, &*v, ctx.ops.m_inf, Dispersion::Lattice, band)
            .map_err(CliError::compute)?;
        Some(build_modifier_t(&ctx.ops, &phase, sign).map_err(CliError::compute)?)
    } else {
        None
    };
    let model = ScatteringModel::with_tolerances(ctx.ops.clone(), ctx.cfg.tolerances.spectral()).map_err(CliError::compute)?;
    let mut limit = f64::INFINITY;
    for (k, p) in packets.iter().enumerate() {
        let f = packet_state(&model.ops, p).map_err(|e| CliError::ConfigInvalid {
            pointer: format!("/run/packets/{k}"),
            message: e.to_string(),
        })?;
        limit = limit.min(model.horizon_for(&f));
    }
    let t = ctx.cfg.run.horizon.unwrap_or(limit);
    if t > limit + 1e-9 {
        return Err(CliError::ConfigInvalid {
            pointer: "/run/horizon".into(),
            message: format!("horizon {t} exceeds the admissible {limit:.4} for these packets"),
        });
    }
    let (report, plain) = match &modifier {
        Some(m) => (
            long_range_wave_operator(&model, m, &packets, t, direction).map_err(CliError::compute)?,
            Some(unmodified_wave_operator(&model, &packets, t, direction).map_err(CliError::compute)?),
        ),
        None => (short_range_wave_operator(&model, &packets, t, direction).map_err(CliError::compute)?, None),
    };
    if ctx.csv() {
        let mut table = Table::new(&[
            "center [L]",
            "momentum [1/L]",
            "width [L]",
            "shell [+1/-1]",
            "horizon_limit [L]",
            "unitarity_defect [1]",
            "symplectic_defect [1]",
            "intertwining_residual [1]",
            "completeness_defect [1]",
            "cauchy_half [1]",
            "cauchy_full [1]",
            "convergence_ratio [1]",
        ]);
        for r in &report.packets {
            let shell = if r.spec.shell == kgscatter::scattering::Shell::Upper { 1.0 } else { -1.0 };
            table.push(vec![
                r.spec.center,
                r.spec.momentum,
                r.spec.width,
                shell,
                r.horizon_limit,
                r.unitarity_defect,
                r.symplectic_defect,
                r.intertwining_residual,
                r.completeness_defect,
                r.cauchy[0],
                r.cauchy[1],
                r.convergence_ratio,
            ]);
        }
        ctx.out.table("packets.csv", &table)?;
        let grid = &model.ops.grid;
        let n = grid.points;
        let mut cols = vec!["x [L]".to_string()];
        for k in 0..report.packets.len() {
            cols.push(format!("re_u_out_{k} [1]"));
            cols.push(format!("im_u_out_{k} [1]"));
        }
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut states = Table::new(&refs);
        for (j, x) in grid.nodes().into_iter().enumerate() {
            let mut row = vec![x];
            for r in &report.packets {
                row.push(r.f_out[j].re);
                row.push(r.f_out[j].im);
            }
            debug_assert!(j < n);
            states.push(row);
        }
        ctx.out.table("states.csv", &states)?;
    }
    Ok((report, plain))
}

fn sweep(ctx: &mut Context) -> Result<SweepReport, CliError> {
    let sweep = ctx.cfg.run.sweep.clone().expect("validated");
    let values = sweep.values();
    let specs: Vec<ModelSpec> =
        values.iter().map(|v| config::with_param(&ctx.spec, &sweep.param, *v)).collect::<Result<_, _>>()?;
    let points = kgscatter::par::map(specs.len(), |k| klein::spectrum_point(&specs[k]));
    let points: Vec<SweepPoint> = points.into_iter().collect::<Result<_, _>>().map_err(CliError::model)?;
    let rows: Vec<SweepRow> = values.iter().zip(&points).map(|(v, p)| SweepRow::new(*v, p)).collect();

    let first_pos = rows.iter().position(|r| r.neg_index > 0);
    let mut gamma_pos = first_pos.map(|k| [values[k.saturating_sub(1)], values[k]]);
    let gamma_cplx = rows.iter().find(|r| r.complex_pairs > 0).map(|r| r.value);
    let mut sweep_too_coarse = None;
    if sweep.is_coupling() {
        match klein::klein_paradox_scan(&ctx.spec, &values) {
            Ok(report) => gamma_pos = report.gamma_pos.map(|b| [b.lo, b.hi]),
            Err(KleinError::SweepTooCoarse(why)) => sweep_too_coarse = Some(why),
            Err(e) => return Err(CliError::model(e)),
        }
    }
    let ordering_ok = match (gamma_pos, gamma_cplx) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(b), Some(c)) => c >= b[0],
    };
    let report = SweepReport {
        param: sweep.param.clone(),
        neg_index_monotone: rows.windows(2).all(|w| w[0].neg_index <= w[1].neg_index),
        reality_ok: rows.iter().filter(|r| r.neg_index == 0).all(|r| r.complex_pairs == 0),
        rows,
        gamma_pos,
        gamma_cplx,
        ordering_ok,
        sweep_too_coarse,
    };
    if let Some(why) = &report.sweep_too_coarse {
        ctx.diagnostics.push(format!("SweepTooCoarse: {why}"));
    }
    if !report.ordering_ok {
        ctx.diagnostics.push("complex pair before loss of positivity".into());
    }
    if !report.reality_ok {
        ctx.diagnostics.push("non-real eigenvalue at a point with positive energy".into());
    }
    if ctx.csv() {
        let value_col = format!("{} [config]", sweep.param);
        let mut t = Table::new(&[
            &value_col,
            "kappa [1]",
            "complex_pairs [1]",
            "max_imag [1/L]",
            "spectral_radius [1/L]",
            "min_energy [1/L^2]",
            "reality_tolerance [1/L]",
        ]);
        for r in &report.rows {
            t.push(vec![
                r.value,
                r.neg_index as f64,
                r.complex_pairs as f64,
                r.max_imag,
                r.spectral_radius,
                r.min_energy,
                r.reality_tolerance,
            ]);
        }
        ctx.out.table("sweep.csv", &t)?;
    }
    Ok(report)
}
