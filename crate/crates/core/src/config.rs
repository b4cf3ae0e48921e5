//! TOML scenario configuration.
//!
//! ```toml
//! [array]
//! basepoint = [0.0, 0.0, 0.0]
//! offsets = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
//! # or: positions = [[...], ...]   (absolute, body frame)
//! # or: random = { radius = 1.0, sensors = 3, seed = 7 }
//!
//! [noise]
//! sigma_g = 1e-4                  # or one value per offset sensor
//! basepoint_sigma = 0.0
//! correlated_basepoint = false
//!
//! [rates]                         # exclusive with [trajectory]
//! omega = [-0.1716, -0.1056, -0.3043]
//! omega_dot = [0.0901, 0.0225, -0.0266]
//!
//! [montecarlo]
//! draws = 10000
//! seed = 42
//! prior_omega = [-0.1716, -0.1056, -0.3043]
//! omega_route = "diagonal"        # or "eigen"
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Deserialize;

use crate::array::SensorArray;
use crate::error::{Error, Result};
use crate::kinematics::{BodyRates, InertiaModel};
use crate::montecarlo::{random_sphere_array, OmegaRoute, RateProfile, Scenario};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub array: Option<ArraySection>,
    #[serde(default)]
    pub noise: NoiseSection,
    pub rates: Option<RatesSection>,
    pub trajectory: Option<TrajectorySection>,
    #[serde(default)]
    pub montecarlo: MonteCarloSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub basepoint: Option<[f64; 3]>,
    pub offsets: Option<Vec<[f64; 3]>>,
    pub positions: Option<Vec<[f64; 3]>>,
    pub random: Option<RandomArray>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomArray {
    pub radius: f64,
    pub sensors: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Uniform(f64),
    PerSensor(Vec<f64>),
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::Uniform(0.0)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub sigma_g: SigmaSpec,
    #[serde(default)]
    pub basepoint_sigma: f64,
    #[serde(default)]
    pub correlated_basepoint: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub omega: [f64; 3],
    #[serde(default)]
    pub omega_dot: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub inertia: [f64; 3],
    pub initial_omega: [f64; 3],
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub allow_nonphysical_inertia: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    pub prior_omega: Option<[f64; 3]>,
    #[serde(default)]
    pub omega_route: RouteName,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            draws: default_draws(),
            seed: 0,
            prior_omega: None,
            omega_route: RouteName::default(),
        }
    }
}

fn default_draws() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteName {
    #[default]
    Diagonal,
    Eigen,
}

impl From<RouteName> for OmegaRoute {
    fn from(r: RouteName) -> Self {
        match r {
            RouteName::Diagonal => OmegaRoute::Diagonal,
            RouteName::Eigen => OmegaRoute::Eigen,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Command-line or environment values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub draws: Option<usize>,
    pub sigma_g: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|span| key_at(text, span.start))
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.montecarlo.seed = seed;
        }
        if let Some(draws) = overrides.draws {
            self.montecarlo.draws = draws;
        }
        if let Some(sigma) = overrides.sigma_g {
            self.noise.sigma_g = SigmaSpec::Uniform(sigma);
        }
        if let Some(out) = &overrides.out {
            self.output.dir = Some(out.clone());
        }
    }

    pub fn sensor_array(&self) -> Result<SensorArray> {
        let section = self.array.as_ref().ok_or_else(|| Error::config("array", "section is required"))?;
        let basepoint: Vector3<f64> = section.basepoint.unwrap_or_default().into();
        let given = [section.offsets.is_some(), section.positions.is_some(), section.random.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::config(
                "array",
                "exactly one of `offsets`, `positions`, `random` must be given",
            ));
        }
        let offsets: Vec<Vector3<f64>> = if let Some(offsets) = &section.offsets {
            offsets.iter().map(|&o| o.into()).collect()
        } else if let Some(positions) = &section.positions {
            positions.iter().map(|&p| Vector3::from(p) - basepoint).collect()
        } else {
            let r = section.random.as_ref().expect("checked above");
            random_sphere_array(r.radius, r.sensors, r.seed)
                .map_err(|e| Error::config("array.random", e.to_string()))?
                .offsets()
                .to_vec()
        };
        if offsets.len() < 3 {
            return Err(Error::config("array.offsets", format!("need at least 3 sensors, got {}", offsets.len())));
        }
        let n = offsets.len();
        let sigmas = match &self.noise.sigma_g {
            SigmaSpec::Uniform(s) => vec![*s; n],
            SigmaSpec::PerSensor(v) if v.len() == n => v.clone(),
            SigmaSpec::PerSensor(v) => {
                return Err(Error::config(
                    "noise.sigma_g",
                    format!("expected {n} values, got {}", v.len()),
                ))
            }
        };
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("noise.sigma_g", "values must be finite and non-negative"));
        }
        if !(self.noise.basepoint_sigma.is_finite() && self.noise.basepoint_sigma >= 0.0) {
            return Err(Error::config("noise.basepoint_sigma", "must be finite and non-negative"));
        }
        let array = SensorArray::new(basepoint, offsets, sigmas).map_err(|e| Error::config("array", e.to_string()))?;
        Ok(array.with_basepoint_noise(self.noise.basepoint_sigma, self.noise.correlated_basepoint))
    }

    pub fn rate_profile(&self) -> Result<RateProfile> {
        match (&self.rates, &self.trajectory) {
            (Some(r), None) => BodyRates::new(r.omega.into(), r.omega_dot.into())
                .map(RateProfile::Epoch)
                .map_err(|e| Error::config("rates", e.to_string())),
            (None, Some(t)) => {
                let inertia = if t.allow_nonphysical_inertia {
                    InertiaModel::nonphysical(t.inertia.into())
                } else {
                    InertiaModel::new(t.inertia.into())
                }
                .map_err(|e| Error::config("trajectory.inertia", e.to_string()))?;
                if !(t.dt.is_finite() && t.dt > 0.0) {
                    return Err(Error::config("trajectory.dt", "must be positive"));
                }
                if t.steps == 0 {
                    return Err(Error::config("trajectory.steps", "must be at least 1"));
                }
                Ok(RateProfile::Trajectory {
                    inertia,
                    initial_omega: t.initial_omega.into(),
                    dt: t.dt,
                    n_steps: t.steps,
                })
            }
            (Some(_), Some(_)) => Err(Error::config("rates", "`rates` and `trajectory` are mutually exclusive")),
            (None, None) => Err(Error::config("rates", "one of `rates` or `trajectory` is required")),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let array = self.sensor_array()?;
        let profile = self.rate_profile()?;
        if self.montecarlo.draws == 0 {
            return Err(Error::config("montecarlo.draws", "must be at least 1"));
        }
        let truth = match &profile {
            RateProfile::Epoch(r) => r.omega,
            RateProfile::Trajectory { initial_omega, .. } => *initial_omega,
        };
        Ok(Scenario {
            array,
            profile,
            n_draws: self.montecarlo.draws,
            seed: self.montecarlo.seed,
            prior_omega: self.montecarlo.prior_omega.map(Vector3::from).unwrap_or(truth),
            omega_route: self.montecarlo.omega_route.into(),
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Dotted key path (`section.key`) of the assignment enclosing `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let mut section = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            section = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            if !trimmed.starts_with('#') {
                key = k.trim().to_string();
            }
        }
        pos += line.len();
        if pos > offset {
            break;
        }
    }
    match (section.is_empty(), key.is_empty()) {
        (true, true) => "<document>".into(),
        (true, false) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}
