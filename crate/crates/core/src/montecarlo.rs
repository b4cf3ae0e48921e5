//! Monte Carlo validation of the analytic covariance.
//!
//! Every draw gets its own ChaCha stream (`stream = draw + 1`) under the
//! master seed, so results do not depend on how draws are scheduled across
//! threads.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

use crate::array::{build_design_matrix, validate_geometry, DesignMatrix, SensorArray};
use crate::covariance::{omega_covariance_linearized, omega_dot_covariance};
use crate::error::{Error, Result};
use crate::estimator::{estimate_rates, RateEstimate};
use crate::kinematics::{
    add_measurement_noise_with, propagate_torque_free, relative_accelerations, BodyRates, InertiaModel,
};

pub const REFERENCE_OMEGA: [f64; 3] = [-0.1716, -0.1056, -0.3043];
pub const REFERENCE_OMEGA_DOT: [f64; 3] = [0.0901, 0.0225, -0.0266];
pub const REFERENCE_INERTIA: [f64; 3] = [14.3850, 95.7408, 55.5078];
pub const REFERENCE_DRAWS: usize = 10_000;
pub const REFERENCE_SIGMA_G: f64 = 1e-4;

/// Minimum per-channel 3σ containment accepted by the reference reproduction.
pub const CONTAINMENT_FLOOR: f64 = 0.99;
/// Minimum fraction of ω errors inside the 3σ covariance ellipsoid.
pub const ELLIPSOID_FLOOR: f64 = 0.985;
/// Relative tolerance between sample and analytic ω̇ variances.
pub const OMEGA_DOT_VARIANCE_TOL: f64 = 0.05;
/// Relative tolerance between sample and linearized ω variances.
pub const OMEGA_VARIANCE_TOL: f64 = 0.10;

const MAX_ARRAY_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum RateProfile {
    /// One fixed epoch, re-measured with fresh noise on every draw.
    Epoch(BodyRates),
    /// One noisy draw per epoch along a torque-free trajectory; the previous
    /// epoch's estimate is the sign prior for the next.
    Trajectory {
        inertia: InertiaModel,
        initial_omega: Vector3<f64>,
        dt: f64,
        n_steps: usize,
    },
}

/// Which ω estimate the error statistics are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaRoute {
    /// Diagonal-entry square roots, signs from the eigen route. This is the
    /// estimator the linearized `P_ω` describes.
    #[default]
    Diagonal,
    /// Null eigenvector of the symmetric part.
    Eigen,
}

impl OmegaRoute {
    pub fn pick(self, estimate: &RateEstimate) -> Vector3<f64> {
        match self {
            OmegaRoute::Diagonal => estimate.omega_diagonal,
            OmegaRoute::Eigen => estimate.omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub array: SensorArray,
    pub profile: RateProfile,
    /// Ignored for trajectories, which produce one draw per epoch.
    pub n_draws: usize,
    pub seed: u64,
    pub prior_omega: Vector3<f64>,
    pub omega_route: OmegaRoute,
}

impl Scenario {
    /// Unit-sphere three-offset array seeded by `seed`, the published rates,
    /// and a correct-sign prior.
    pub fn reference(seed: u64, sigma_g: f64, n_draws: usize) -> Result<Self> {
        let array = random_sphere_array(1.0, 3, seed)?.with_uniform_noise(sigma_g)?;
        Ok(Self {
            array,
            profile: RateProfile::Epoch(BodyRates::new(REFERENCE_OMEGA.into(), REFERENCE_OMEGA_DOT.into())?),
            n_draws,
            seed,
            prior_omega: REFERENCE_OMEGA.into(),
            omega_route: OmegaRoute::Diagonal,
        })
    }

    pub fn draws(&self) -> usize {
        match &self.profile {
            RateProfile::Epoch(_) => self.n_draws,
            RateProfile::Trajectory { n_steps, .. } => n_steps + 1,
        }
    }
}

/// Offsets drawn uniformly on a sphere of `radius`, redrawn until the array
/// is observable. Noise levels are zero; set them with
/// [`SensorArray::with_uniform_noise`].
pub fn random_sphere_array(radius: f64, n_sensors: usize, seed: u64) -> Result<SensorArray> {
    if n_sensors < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 sensors, got {n_sensors}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ARRAY_ROUNDS {
        let offsets = (0..n_sensors)
            .map(|_| Vector3::from(UnitSphere.sample(&mut rng)) * radius)
            .collect();
        let array = SensorArray::with_uniform_sigma(Vector3::zeros(), offsets, 0.0)?;
        if validate_geometry(&array).valid {
            return Ok(array);
        }
    }
    Err(Error::InvalidInput(format!(
        "no observable array found in {MAX_ARRAY_ROUNDS} rounds"
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub errors_omega: Vec<Vector3<f64>>,
    pub errors_omega_dot: Vec<Vector3<f64>>,
    /// Analytic covariances; averaged over epochs for trajectories.
    pub predicted_cov_omega: Matrix3<f64>,
    pub predicted_cov_omega_dot: Matrix3<f64>,
    pub predicted_sigma_omega: Vector3<f64>,
    pub predicted_sigma_omega_dot: Vector3<f64>,
    /// Fractions with `|e| ≤ 3σ` for ω₁, ω₂, ω₃, ω̇₁, ω̇₂, ω̇₃.
    pub containment_3sigma: [f64; 6],
    /// Fraction of ω errors with Mahalanobis distance ≤ 3 under `P_ω`.
    pub ellipsoid_containment: f64,
    /// Root-mean-square Mahalanobis distance of the ω errors (≈ √3 when the
    /// covariance model is right).
    pub mahalanobis_rms: f64,
    pub sample_cov_omega: Matrix3<f64>,
    pub sample_cov_omega_dot: Matrix3<f64>,
    /// Draws where the prior could not decide the sign.
    pub sign_unresolved: usize,
}

struct DrawOutcome {
    error_omega: Vector3<f64>,
    error_omega_dot: Vector3<f64>,
    p_omega: Matrix3<f64>,
    p_omega_dot: Matrix3<f64>,
    sign_resolved: bool,
    floor: f64,
}

fn draw_rng(seed: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64 + 1);
    rng
}

/// Absolute slack on the containment bounds so that a noiseless run, whose
/// errors are pure roundoff, counts as contained.
fn roundoff_floor(rates: &BodyRates) -> f64 {
    1e-12 * rates.omega.norm().max(rates.omega_dot.norm()).max(1.0)
}

fn analytic(design: &DesignMatrix, rates: &BodyRates) -> (Matrix3<f64>, Matrix3<f64>) {
    let p_alpha = design.covariance();
    let (p_omega, _) = omega_covariance_linearized(p_alpha, &rates.omega);
    (p_omega, omega_dot_covariance(p_alpha))
}

fn one_draw(
    design: &DesignMatrix,
    array: &SensorArray,
    rates: &BodyRates,
    prior: &Vector3<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<RateEstimate> {
    let clean = relative_accelerations(array, rates);
    let noisy = add_measurement_noise_with(&clean, array, rng);
    estimate_rates(design, &noisy, prior)
}

pub fn run_monte_carlo(scenario: &Scenario) -> Result<McReport> {
    if scenario.draws() == 0 {
        return Err(Error::InvalidInput("n_draws must be at least 1".into()));
    }
    let design = build_design_matrix(&scenario.array)?;
    let route = scenario.omega_route;

    let outcomes: Vec<DrawOutcome> = match &scenario.profile {
        RateProfile::Epoch(rates) => {
            let (p_omega, p_omega_dot) = analytic(&design, rates);
            let floor = roundoff_floor(rates);
            (0..scenario.n_draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = draw_rng(scenario.seed, i);
                    let est = one_draw(&design, &scenario.array, rates, &scenario.prior_omega, &mut rng)
                        .map_err(|e| Error::Draw {
                            draw: i,
                            source: Box::new(e),
                        })?;
                    Ok(DrawOutcome {
                        error_omega: route.pick(&est) - rates.omega,
                        error_omega_dot: est.omega_dot - rates.omega_dot,
                        p_omega,
                        p_omega_dot,
                        sign_resolved: est.sign_resolved,
                        floor,
                    })
                })
                .collect::<Result<_>>()?
        }
        RateProfile::Trajectory {
            inertia,
            initial_omega,
            dt,
            n_steps,
        } => {
            let states = propagate_torque_free(inertia, *initial_omega, *dt, *n_steps)?;
            let mut prior = scenario.prior_omega;
            let mut out = Vec::with_capacity(states.len());
            for (i, rates) in states.iter().enumerate() {
                let mut rng = draw_rng(scenario.seed, i);
                let est = one_draw(&design, &scenario.array, rates, &prior, &mut rng).map_err(|e| {
                    Error::Draw {
                        draw: i,
                        source: Box::new(e),
                    }
                })?;
                let (p_omega, p_omega_dot) = analytic(&design, rates);
                out.push(DrawOutcome {
                    error_omega: route.pick(&est) - rates.omega,
                    error_omega_dot: est.omega_dot - rates.omega_dot,
                    p_omega,
                    p_omega_dot,
                    sign_resolved: est.sign_resolved,
                    floor: roundoff_floor(rates),
                });
                prior = est.omega;
            }
            out
        }
    };
    Ok(summarize(&outcomes))
}

fn sample_covariance(samples: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = samples.len();
    if n < 2 {
        return Matrix3::zeros();
    }
    let mean = samples.iter().sum::<Vector3<f64>>() / n as f64;
    let scatter: Matrix3<f64> = samples.iter().map(|e| (e - mean) * (e - mean).transpose()).sum();
    scatter / (n - 1) as f64
}

/// Squared Mahalanobis distance over the axes with finite variance. A zero
/// covariance gives 0 for roundoff-sized errors and +∞ otherwise.
fn mahalanobis_sq(p: &Matrix3<f64>, e: &Vector3<f64>, floor: f64) -> f64 {
    let axes: Vec<usize> = (0..3).filter(|&i| p[(i, i)].is_finite()).collect();
    if axes.is_empty() {
        return 0.0;
    }
    let sub = DMatrix::from_fn(axes.len(), axes.len(), |r, c| p[(axes[r], axes[c])]);
    let v = DVector::from_iterator(axes.len(), axes.iter().map(|&i| e[i]));
    match sub.cholesky() {
        Some(chol) => v.dot(&chol.solve(&v)),
        None if v.amax() <= floor => 0.0,
        None => f64::INFINITY,
    }
}

fn summarize(outcomes: &[DrawOutcome]) -> McReport {
    let n = outcomes.len() as f64;
    let errors_omega: Vec<_> = outcomes.iter().map(|o| o.error_omega).collect();
    let errors_omega_dot: Vec<_> = outcomes.iter().map(|o| o.error_omega_dot).collect();

    let mut inside = [0usize; 6];
    let mut in_ellipsoid = 0usize;
    let mut d2_sum = 0.0;
    let mut d2_count = 0usize;
    for o in outcomes {
        for i in 0..3 {
            if o.error_omega[i].abs() <= 3.0 * o.p_omega[(i, i)].sqrt() + o.floor {
                inside[i] += 1;
            }
            if o.error_omega_dot[i].abs() <= 3.0 * o.p_omega_dot[(i, i)].sqrt() + o.floor {
                inside[3 + i] += 1;
            }
        }
        let d2 = mahalanobis_sq(&o.p_omega, &o.error_omega, o.floor);
        if d2 <= 9.0 {
            in_ellipsoid += 1;
        }
        if d2.is_finite() {
            d2_sum += d2;
            d2_count += 1;
        }
    }

    let predicted_cov_omega = outcomes.iter().map(|o| o.p_omega).sum::<Matrix3<f64>>() / n;
    let predicted_cov_omega_dot = outcomes.iter().map(|o| o.p_omega_dot).sum::<Matrix3<f64>>() / n;
    McReport {
        predicted_sigma_omega: predicted_cov_omega.diagonal().map(f64::sqrt),
        predicted_sigma_omega_dot: predicted_cov_omega_dot.diagonal().map(f64::sqrt),
        predicted_cov_omega,
        predicted_cov_omega_dot,
        containment_3sigma: inside.map(|c| c as f64 / n),
        ellipsoid_containment: in_ellipsoid as f64 / n,
        mahalanobis_rms: if d2_count > 0 { (d2_sum / d2_count as f64).sqrt() } else { 0.0 },
        sample_cov_omega: sample_covariance(&errors_omega),
        sample_cov_omega_dot: sample_covariance(&errors_omega_dot),
        sign_unresolved: outcomes.iter().filter(|o| !o.sign_resolved).count(),
        errors_omega,
        errors_omega_dot,
    }
}

/// Channel labels in report order.
pub const CHANNELS: [&str; 6] = ["omega_1", "omega_2", "omega_3", "omega_dot_1", "omega_dot_2", "omega_dot_3"];

impl McReport {
    pub fn n_draws(&self) -> usize {
        self.errors_omega.len()
    }

    pub fn sample_sigma_omega(&self) -> Vector3<f64> {
        self.sample_cov_omega.diagonal().map(f64::sqrt)
    }

    pub fn sample_sigma_omega_dot(&self) -> Vector3<f64> {
        self.sample_cov_omega_dot.diagonal().map(f64::sqrt)
    }

    /// `Some(fraction)` when the Mahalanobis containment is below
    /// [`ELLIPSOID_FLOOR`]. A calibrated 3-D Gaussian puts only
    /// `P(χ²₃ ≤ 9) ≈ 0.9707` inside the 3σ ellipsoid.
    pub fn ellipsoid_shortfall(&self) -> Option<f64> {
        (self.ellipsoid_containment < ELLIPSOID_FLOOR).then_some(self.ellipsoid_containment)
    }

    /// `|sample − analytic| / analytic` on the ω̇ variance diagonal.
    pub fn omega_dot_variance_mismatch(&self) -> Vector3<f64> {
        relative_mismatch(&self.sample_cov_omega_dot, &self.predicted_cov_omega_dot)
    }

    /// `|sample − linearized| / linearized` on the ω variance diagonal.
    pub fn omega_variance_mismatch(&self) -> Vector3<f64> {
        relative_mismatch(&self.sample_cov_omega, &self.predicted_cov_omega)
    }

    /// Pass/fail lines for per-channel containment and covariance agreement.
    /// Empty when all pass. The ellipsoid fraction is checked separately with
    /// [`McReport::ellipsoid_shortfall`].
    pub fn reproduction_failures(&self) -> Vec<String> {
        let mut failures = Vec::new();
        for (label, frac) in CHANNELS.iter().zip(self.containment_3sigma) {
            if frac < CONTAINMENT_FLOOR {
                failures.push(format!("{label}: 3-sigma containment {frac} < {CONTAINMENT_FLOOR}"));
            }
        }
        for (i, m) in self.omega_dot_variance_mismatch().iter().enumerate() {
            if m.is_nan() || *m > OMEGA_DOT_VARIANCE_TOL {
                failures.push(format!("omega_dot_{}: variance mismatch {m} > {OMEGA_DOT_VARIANCE_TOL}", i + 1));
            }
        }
        for (i, m) in self.omega_variance_mismatch().iter().enumerate() {
            if m.is_nan() || *m > OMEGA_VARIANCE_TOL {
                failures.push(format!("omega_{}: variance mismatch {m} > {OMEGA_VARIANCE_TOL}", i + 1));
            }
        }
        failures
    }
}

fn relative_mismatch(sample: &Matrix3<f64>, predicted: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let (s, p) = (sample[(i, i)], predicted[(i, i)]);
        if p == 0.0 && s == 0.0 {
            0.0
        } else {
            (s - p).abs() / p
        }
    })
}
