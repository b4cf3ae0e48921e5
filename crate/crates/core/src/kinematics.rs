//! Forward models: the gyroscopic acceleration matrix, synthetic differenced
//! accelerometer measurements, and torque-free rigid-body propagation.
//!
//! A sensor fixed in the body at offset `r` from the basepoint sees the
//! relative acceleration `g = A(ω, ω̇) r` with `A = [ω̇×] + [ω×]²`. The
//! translational acceleration of the centre of mass cancels in the
//! difference, so measurements are generated directly in differenced form.

use nalgebra::{DVector, Matrix3, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::SensorArray;
use crate::error::{Error, Result};

pub type Vector9 = SVector<f64, 9>;

/// Cross-product matrix `[v×]`, so that `skew(v) * u == v.cross(&u)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Angular velocity and angular acceleration in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyRates {
    /// rad/s
    pub omega: Vector3<f64>,
    /// rad/s²
    pub omega_dot: Vector3<f64>,
}

impl BodyRates {
    pub fn new(omega: Vector3<f64>, omega_dot: Vector3<f64>) -> Result<Self> {
        if omega.iter().chain(omega_dot.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("body rates must be finite".into()));
        }
        Ok(Self { omega, omega_dot })
    }
}

/// The 3×3 matrix `A(ω, ω̇)` mapping a body-frame offset to its relative
/// acceleration. The vectorized form `alpha` is row-major:
/// `(A11, A12, A13, A21, ..., A33)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroMatrix(Matrix3<f64>);

impl GyroMatrix {
    pub fn from_matrix(a: Matrix3<f64>) -> Self {
        Self(a)
    }

    pub fn from_alpha(alpha: &Vector9) -> Self {
        Self(Matrix3::from_row_slice(alpha.as_slice()))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn alpha(&self) -> Vector9 {
        let a = &self.0;
        Vector9::from_fn(|k, _| a[(k / 3, k % 3)])
    }

    /// `S = ½(A + Aᵀ)`; depends on ω only.
    pub fn symmetric_part(&self) -> Matrix3<f64> {
        (self.0 + self.0.transpose()) * 0.5
    }

    /// `½(A − Aᵀ)`; equals `[ω̇×]`.
    pub fn skew_part(&self) -> Matrix3<f64> {
        (self.0 - self.0.transpose()) * 0.5
    }

    /// Relative acceleration of a sensor at `offset` from the basepoint.
    pub fn apply(&self, offset: &Vector3<f64>) -> Vector3<f64> {
        self.0 * offset
    }
}

/// Builds `A(ω, ω̇)` entry by entry.
pub fn build_gyro_matrix(rates: &BodyRates) -> GyroMatrix {
    let [w1, w2, w3]: [f64; 3] = rates.omega.into();
    let [d1, d2, d3]: [f64; 3] = rates.omega_dot.into();
    GyroMatrix(Matrix3::new(
        -(w2 * w2 + w3 * w3),
        w1 * w2 - d3,
        w1 * w3 + d2,
        w1 * w2 + d3,
        -(w1 * w1 + w3 * w3),
        w2 * w3 - d1,
        w1 * w3 - d2,
        w2 * w3 + d1,
        -(w1 * w1 + w2 * w2),
    ))
}

/// Stacked differenced accelerations `(g₁, g₂, …, g_N)` for one epoch, m/s².
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    values: DVector<f64>,
}

impl MeasurementSet {
    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(3) || values.is_empty() {
            return Err(Error::InvalidInput(format!(
                "measurement vector length {} is not a positive multiple of 3",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn from_sensors(sensors: &[Vector3<f64>]) -> Result<Self> {
        Self::from_vector(DVector::from_iterator(
            sensors.len() * 3,
            sensors.iter().flat_map(|g| g.iter().copied()),
        ))
    }

    pub fn n_sensors(&self) -> usize {
        self.values.len() / 3
    }

    /// Measurement of offset sensor `i` (zero-based over the offset list).
    pub fn sensor(&self, i: usize) -> Vector3<f64> {
        Vector3::new(
            self.values[3 * i],
            self.values[3 * i + 1],
            self.values[3 * i + 2],
        )
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Noiseless `gᵢ = A(ω, ω̇)(aᵢ − a₀)` for every offset sensor.
pub fn relative_accelerations(array: &SensorArray, rates: &BodyRates) -> MeasurementSet {
    let a = build_gyro_matrix(rates);
    let g: Vec<Vector3<f64>> = array.offsets().iter().map(|r| a.apply(r)).collect();
    MeasurementSet::from_sensors(&g).expect("array has at least one sensor")
}

/// Adds seeded zero-mean Gaussian noise using the array's noise model.
pub fn add_measurement_noise(
    clean: &MeasurementSet,
    array: &SensorArray,
    seed: u64,
) -> MeasurementSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_measurement_noise_with(clean, array, &mut rng)
}

/// As [`add_measurement_noise`], drawing from a caller-supplied generator.
///
/// Channels are drawn in sensor order. Under the correlated basepoint model
/// one extra 3-vector is drawn for the basepoint and subtracted from every
/// sensor.
pub fn add_measurement_noise_with<R: Rng + ?Sized>(
    clean: &MeasurementSet,
    array: &SensorArray,
    rng: &mut R,
) -> MeasurementSet {
    let n = clean.n_sensors();
    debug_assert_eq!(n, array.n_sensors());
    let mut values = clean.values.clone();
    for (i, &sigma) in array.sigmas().iter().enumerate().take(n) {
        for k in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            values[3 * i + k] += sigma * z;
        }
    }
    if array.correlated_basepoint() {
        let sigma0 = array.basepoint_sigma();
        let nu0 = Vector3::from_fn(|_, _| sigma0 * rng.sample::<f64, _>(StandardNormal));
        for i in 0..n {
            for k in 0..3 {
                values[3 * i + k] -= nu0[k];
            }
        }
    }
    MeasurementSet { values }
}

/// Principal moments of inertia, kg·m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaModel {
    principal: Vector3<f64>,
}

impl InertiaModel {
    /// Physical inertia: positive entries satisfying `Iᵢ + Iⱼ ≥ I_k`.
    pub fn new(principal: Vector3<f64>) -> Result<Self> {
        let model = Self::nonphysical(principal)?;
        if !model.is_physical() {
            return Err(Error::InvalidInput(format!(
                "inertia {:?} violates the triangle inequality",
                principal.as_slice()
            )));
        }
        Ok(model)
    }

    /// Positive entries only. The Euler equations do not need the triangle
    /// inequality, and some published scenarios (e.g.
    /// `diag(14.3850, 95.7408, 55.5078)`) violate it.
    pub fn nonphysical(principal: Vector3<f64>) -> Result<Self> {
        if principal.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidInput(
                "principal inertia entries must be finite and positive".into(),
            ));
        }
        Ok(Self { principal })
    }

    pub fn is_physical(&self) -> bool {
        let [a, b, c]: [f64; 3] = self.principal.into();
        // roundoff slack for thin-rod limits
        let slack = 1e-12 * (a + b + c);
        a + b >= c - slack && b + c >= a - slack && a + c >= b - slack
    }

    pub fn principal(&self) -> &Vector3<f64> {
        &self.principal
    }

    /// Torque-free Euler equations, `ω̇ = I⁻¹(−ω × Iω)`, written per axis as
    /// `ω̇₁ = (I₂ − I₃)/I₁ · ω₂ω₃` and cyclic.
    pub fn euler_rates(&self, omega: &Vector3<f64>) -> Vector3<f64> {
        let [i1, i2, i3]: [f64; 3] = self.principal.into();
        Vector3::new(
            (i2 - i3) / i1 * omega.y * omega.z,
            (i3 - i1) / i2 * omega.z * omega.x,
            (i1 - i2) / i3 * omega.x * omega.y,
        )
    }

    pub fn angular_momentum(&self, omega: &Vector3<f64>) -> Vector3<f64> {
        self.principal.component_mul(omega)
    }

    pub fn kinetic_energy(&self, omega: &Vector3<f64>) -> f64 {
        0.5 * omega.dot(&self.angular_momentum(omega))
    }
}

/// Propagates torque-free rotation with fixed-step classical RK4.
///
/// Returns `n_steps + 1` states, starting with `initial_omega`; each state
/// carries the ω̇ implied by the dynamics at that ω.
pub fn propagate_torque_free(
    inertia: &InertiaModel,
    initial_omega: Vector3<f64>,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<BodyRates>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be at least 1".into()));
    }
    if initial_omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial angular velocity must be finite".into()));
    }
    let f = |w: &Vector3<f64>| inertia.euler_rates(w);
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut w = initial_omega;
    out.push(BodyRates {
        omega: w,
        omega_dot: f(&w),
    });
    for _ in 0..n_steps {
        let k1 = f(&w);
        let k2 = f(&(w + k1 * (0.5 * dt)));
        let k3 = f(&(w + k2 * (0.5 * dt)));
        let k4 = f(&(w + k3 * dt));
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(BodyRates {
            omega: w,
            omega_dot: f(&w),
        });
    }
    Ok(out)
}
