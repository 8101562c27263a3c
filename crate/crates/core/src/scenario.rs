//! Serializable model descriptions and the stock scenario library.

use serde::{Deserialize, Serialize};

use crate::model::{self, CoefficientSet, Grid1D, KgOperators, ModelError, PotentialSplit, Profile};

/// A coefficient given as a constant, a constant plus a profile, or raw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Constant(f64),
    Samples(Vec<f64>),
    Shifted { base: f64, profile: Profile },
}

impl Field {
    pub fn value(&self, x: f64) -> Option<f64> {
        match self {
            Field::Constant(c) => Some(*c),
            Field::Shifted { base, profile } => Some(base + profile.value(x)),
            Field::Samples(_) => None,
        }
    }

    fn at_points(&self, name: &'static str, points: &[f64]) -> Result<Vec<f64>, ModelError> {
        match self {
            Field::Samples(s) if s.len() == points.len() => Ok(s.clone()),
            Field::Samples(s) => Err(ModelError::SampleCount { name, expected: points.len(), found: s.len() }),
            _ => Ok(points.iter().map(|x| self.value(*x).unwrap_or(0.0)).collect()),
        }
    }
}

fn one() -> Field {
    Field::Constant(1.0)
}

fn zero() -> Field {
    Field::Constant(0.0)
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(default = "one")]
    pub metric: Field,
    #[serde(default = "zero")]
    pub magnetic: Field,
    #[serde(default = "one")]
    pub weight: Field,
    /// defaults to the constant `m_inf`
    #[serde(default)]
    pub mass: Option<Field>,
    pub m_inf: f64,
    #[serde(default = "unit")]
    pub mu0: f64,
}

impl CoefficientSpec {
    pub fn flat(m: f64) -> Self {
        CoefficientSpec { metric: one(), magnetic: zero(), weight: one(), mass: None, m_inf: m, mu0: 1.0 }
    }

    pub fn sample(&self, grid: &Grid1D) -> Result<CoefficientSet, ModelError> {
        let n = grid.points;
        let h = grid.spacing();
        let edges: Vec<f64> = (0..=n).map(|e| grid.edge(e)).collect();
        let nodes = grid.nodes();
        let mass = self.mass.clone().unwrap_or(Field::Constant(self.m_inf));
        let magnetic = self.magnetic.at_points("magnetic", &edges)?;
        let link_phase = match &self.magnetic {
            Field::Samples(_) => magnetic.iter().map(|b| b * h).collect(),
            _ => {
                let field = self.magnetic.clone();
                CoefficientSet::from_fns(grid, |_| 1.0, move |x| field.value(x).unwrap_or(0.0), |_| 1.0, |_| 1.0, 1.0, 1.0)
                    .link_phase
            }
        };
        Ok(CoefficientSet {
            metric: self.metric.at_points("metric", &edges)?,
            link_phase,
            magnetic,
            weight: self.weight.at_points("weight", &nodes)?,
            mass: mass.at_points("mass", &nodes)?,
            m_inf: self.m_inf,
            mu0: self.mu0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(default)]
    pub short: Option<Profile>,
    #[serde(default)]
    pub long: Option<Profile>,
    /// decay exponents; inferred from the profiles when absent
    #[serde(default)]
    pub mu_s: Option<f64>,
    #[serde(default)]
    pub mu_l: Option<f64>,
    #[serde(default)]
    pub lr_sign: Option<i8>,
    /// overall factor applied to both parts
    #[serde(default = "unit")]
    pub coupling: f64,
}

impl PotentialSpec {
    pub fn none() -> Self {
        PotentialSpec { short: None, long: None, mu_s: None, mu_l: None, lr_sign: None, coupling: 1.0 }
    }

    pub fn short(p: Profile) -> Self {
        PotentialSpec { short: Some(p), ..PotentialSpec::none() }
    }

    pub fn long(p: Profile, sign: i8) -> Self {
        PotentialSpec { long: Some(p), lr_sign: Some(sign), ..PotentialSpec::none() }
    }

    fn scaled(&self) -> (Option<Profile>, Option<Profile>) {
        (self.short.as_ref().map(|p| p.scaled(self.coupling)), self.long.as_ref().map(|p| p.scaled(self.coupling)))
    }

    pub fn split(&self, grid: &Grid1D) -> PotentialSplit {
        let (short, long) = self.scaled();
        let mut split = PotentialSplit::from_profiles(grid, short.as_ref(), long.as_ref(), self.lr_sign);
        if let Some(mu) = self.mu_s {
            split.mu_s = mu;
        }
        if let Some(mu) = self.mu_l {
            split.mu_l = mu;
        }
        split
    }

    /// Long-range part as a function, cut off like the assembled model.
    pub fn long_range_fn(&self, adjust_radius: f64) -> Box<dyn Fn(f64) -> f64 + Sync + Send> {
        let long = self.scaled().1;
        Box::new(move |x| long.as_ref().map(|p| p.value(x) * model::smooth_outside(adjust_radius, x)).unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub grid: Grid1D,
    pub coefficients: CoefficientSpec,
    pub potential: PotentialSpec,
}

impl ModelSpec {
    pub fn build(&self) -> Result<KgOperators, ModelError> {
        let grid = Grid1D::new(self.grid.half_width, self.grid.points)?;
        let coeffs = self.coefficients.sample(&grid)?;
        let eps2 = model::build_epsilon2(&grid, &coeffs)?;
        let split = self.potential.split(&grid);
        model::build_generator(&grid, &eps2, &split, self.coefficients.m_inf)
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet, ModelError> {
        self.coefficients.sample(&Grid1D::new(self.grid.half_width, self.grid.points)?)
    }

    pub fn with_points(&self, points: usize) -> Self {
        let mut s = self.clone();
        s.grid.points = points;
        s
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        let mut s = self.clone();
        s.potential.coupling = coupling;
        s
    }
}

pub const STOCK: [&str; 8] = [
    "free",
    "short_range_well",
    "bound_state_well",
    "klein_kappa1",
    "supercritical_well",
    "magnetic_well",
    "long_range_tail",
    "deep_well_sweep",
];

fn gaussian(amplitude: f64, width: f64) -> Profile {
    Profile::GaussianWell { amplitude, width, center: 0.0 }
}

fn spec(half_width: f64, points: usize, coefficients: CoefficientSpec, potential: PotentialSpec) -> ModelSpec {
    ModelSpec { grid: Grid1D { half_width, points }, coefficients, potential }
}

/// Stock models. Scattering scenarios use their own grid; the others are sized for N = 256.
pub fn stock(name: &str) -> Option<ModelSpec> {
    let flat = CoefficientSpec::flat(1.0);
    Some(match name {
        "free" => spec(20.0, 256, flat, PotentialSpec::none()),
        "short_range_well" => spec(
            60.0,
            512,
            flat,
            PotentialSpec::short(Profile::SmoothedSquareWell { amplitude: -0.5, half_width: 1.0, edge: 1.5 }),
        ),
        "bound_state_well" => spec(20.0, 256, flat, PotentialSpec::short(gaussian(0.25, 1.0))),
        "klein_kappa1" => spec(20.0, 256, flat, PotentialSpec::short(gaussian(2.0, 1.0))),
        "supercritical_well" => spec(20.0, 256, flat, PotentialSpec::short(gaussian(3.0, 1.0))),
        "magnetic_well" => spec(
            20.0,
            256,
            CoefficientSpec {
                metric: Field::Shifted { base: 1.0, profile: gaussian(0.3, 2.0) },
                magnetic: Field::Shifted { base: 0.0, profile: gaussian(0.5, 1.5) },
                weight: Field::Shifted { base: 1.0, profile: gaussian(-0.2, 2.0) },
                mass: Some(Field::Shifted { base: 1.0, profile: gaussian(0.2, 1.0) }),
                m_inf: 1.0,
                mu0: 1.0,
            },
            PotentialSpec::short(gaussian(-0.6, 1.0)),
        ),
        "long_range_tail" => spec(80.0, 512, flat, PotentialSpec::long(Profile::PowerTail { amplitude: 0.2, mu: 0.5 }, 1)),
        "deep_well_sweep" => spec(20.0, 256, flat, PotentialSpec::short(gaussian(1.0, 1.0))),
        _ => return None,
    })
}
