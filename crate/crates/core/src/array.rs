//! Accelerometer array geometry, the least-squares design matrix, and the
//! closed-form three-sensor inverse and covariance kernels.
//!
//! Sensors are numbered as in the measurement model: `0` is the basepoint and
//! `1..=N` are the offset sensors. Offsets are stored relative to the
//! basepoint, `a_{i0} = aᵢ − a₀`.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{MeasurementSet, Vector9};

pub type Matrix9 = nalgebra::SMatrix<f64, 9, 9>;

/// Scale-invariant degeneracy threshold for the triple product, relative to
/// `‖a₁₀‖‖a₂₀‖‖a₃₀‖`.
pub const TRIPLE_DEGENERACY_RATIO: f64 = 1e-9;

/// Relative tolerance used to name parallel offset pairs in diagnostics.
const PARALLEL_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    basepoint: Vector3<f64>,
    offsets: Vec<Vector3<f64>>,
    sigmas: Vec<f64>,
    basepoint_sigma: f64,
    correlated_basepoint: bool,
}

impl SensorArray {
    /// `offsets` are relative to `basepoint`; `sigmas` holds one noise level
    /// (m/s²) per offset sensor. Geometry is not checked here, see
    /// [`validate_geometry`].
    pub fn new(basepoint: Vector3<f64>, offsets: Vec<Vector3<f64>>, sigmas: Vec<f64>) -> Result<Self> {
        if offsets.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "at least 3 offset sensors are required, got {}",
                offsets.len()
            )));
        }
        if sigmas.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: offsets.len(),
                actual: sigmas.len(),
            });
        }
        if basepoint.iter().chain(offsets.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sensor positions must be finite".into()));
        }
        if let Some(i) = sigmas.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "noise sigma of sensor {} must be finite and non-negative",
                i + 1
            )));
        }
        Ok(Self {
            basepoint,
            offsets,
            sigmas,
            basepoint_sigma: 0.0,
            correlated_basepoint: false,
        })
    }

    pub fn with_uniform_sigma(basepoint: Vector3<f64>, offsets: Vec<Vector3<f64>>, sigma: f64) -> Result<Self> {
        let n = offsets.len();
        Self::new(basepoint, offsets, vec![sigma; n])
    }

    /// Builds an array from absolute body-frame positions.
    pub fn from_positions(basepoint: Vector3<f64>, positions: &[Vector3<f64>], sigmas: Vec<f64>) -> Result<Self> {
        Self::new(basepoint, positions.iter().map(|p| p - basepoint).collect(), sigmas)
    }

    /// Sets the basepoint's own noise. With `correlated == false` (the
    /// default model) every differenced channel is treated as independent
    /// and `sigma0` does not enter the estimator; with `correlated == true`
    /// the shared basepoint noise couples all differenced measurements.
    pub fn with_basepoint_noise(mut self, sigma0: f64, correlated: bool) -> Self {
        self.basepoint_sigma = sigma0.max(0.0);
        self.correlated_basepoint = correlated;
        self
    }

    pub fn with_sigmas(mut self, sigmas: Vec<f64>) -> Result<Self> {
        let fresh = Self::new(self.basepoint, std::mem::take(&mut self.offsets), sigmas)?;
        Ok(fresh.with_basepoint_noise(self.basepoint_sigma, self.correlated_basepoint))
    }

    pub fn with_uniform_noise(self, sigma: f64) -> Result<Self> {
        let n = self.n_sensors();
        self.with_sigmas(vec![sigma; n])
    }

    /// All offsets multiplied by `factor`, basepoint unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            offsets: self.offsets.iter().map(|r| r * factor).collect(),
            ..self.clone()
        }
    }

    pub fn basepoint(&self) -> &Vector3<f64> {
        &self.basepoint
    }

    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.offsets.iter().map(|r| r + self.basepoint).collect()
    }

    pub fn n_sensors(&self) -> usize {
        self.offsets.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn basepoint_sigma(&self) -> f64 {
        self.basepoint_sigma
    }

    pub fn correlated_basepoint(&self) -> bool {
        self.correlated_basepoint
    }

    /// The common noise level when every differenced channel has the same
    /// independent noise.
    pub fn uniform_sigma(&self) -> Option<f64> {
        let first = self.sigmas[0];
        let uniform = self.sigmas.iter().all(|&s| s == first);
        let independent = !self.correlated_basepoint || self.basepoint_sigma == 0.0;
        (uniform && independent).then_some(first)
    }

    /// Noise covariance of the stacked differenced measurements.
    pub fn measurement_covariance(&self) -> DMatrix<f64> {
        let n = self.n_sensors();
        let mut r = DMatrix::zeros(3 * n, 3 * n);
        for (i, s) in self.sigmas.iter().enumerate() {
            for k in 0..3 {
                r[(3 * i + k, 3 * i + k)] = s * s;
            }
        }
        if self.correlated_basepoint {
            let s0 = self.basepoint_sigma * self.basepoint_sigma;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..3 {
                        r[(3 * i + k, 3 * j + k)] += s0;
                    }
                }
            }
        }
        r
    }

    fn triad(&self) -> Result<[Vector3<f64>; 3]> {
        match self.offsets.as_slice() {
            [a, b, c] => Ok([*a, *b, *c]),
            _ => Err(Error::WrongSensorCount(self.n_sensors())),
        }
    }

    /// `(a₁₀ × a₂₀) · a₃₀` for a three-sensor array.
    pub fn triple_product(&self) -> Result<f64> {
        let [a1, a2, a3] = self.triad()?;
        Ok(a1.cross(&a2).dot(&a3))
    }
}

/// Stacks the `3N × 9` matrix `H_N` with `H_N α = g`: sensor `i` contributes
/// three rows, row `k` holding the offset in column block `k`.
pub fn assemble_h(array: &SensorArray) -> DMatrix<f64> {
    let n = array.n_sensors();
    let mut h = DMatrix::zeros(3 * n, 9);
    for (i, r) in array.offsets().iter().enumerate() {
        for k in 0..3 {
            for j in 0..3 {
                h[(3 * i + k, 3 * k + j)] = r[j];
            }
        }
    }
    h
}

/// Outcome of the observability check.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub valid: bool,
    /// Numerical rank of `H_N`.
    pub rank: usize,
    /// Singular values of `H_N`, descending.
    pub singular_values: Vec<f64>,
    /// Sensor numbers (1-based) responsible for a rank deficiency; empty
    /// when valid.
    pub offending: Vec<usize>,
}

fn numerical_rank(singular_values: &[f64], rows: usize) -> usize {
    let max = singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rows.max(9) as f64 * f64::EPSILON * max;
    singular_values.iter().filter(|&&s| s > cutoff).count()
}

/// Checks that `H_N` has rank 9 and, when it does not, names the sensors at
/// fault: zero offsets and parallel pairs if there are any, otherwise the
/// whole (coplanar) set.
pub fn validate_geometry(array: &SensorArray) -> GeometryReport {
    let h = assemble_h(array);
    let mut singular_values: Vec<f64> = h.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let rank = numerical_rank(&singular_values, h.nrows());
    let valid = rank == 9;
    let offending = if valid { Vec::new() } else { offending_sensors(array.offsets()) };
    GeometryReport {
        valid,
        rank,
        singular_values,
        offending,
    }
}

fn offending_sensors(offsets: &[Vector3<f64>]) -> Vec<usize> {
    let mut bad = Vec::new();
    for (i, a) in offsets.iter().enumerate() {
        if a.norm() == 0.0 {
            bad.push(i + 1);
        }
    }
    for (i, a) in offsets.iter().enumerate() {
        for (j, b) in offsets.iter().enumerate().skip(i + 1) {
            let scale = a.norm() * b.norm();
            if scale > 0.0 && a.cross(b).norm() <= PARALLEL_RATIO * scale {
                bad.extend([i + 1, j + 1]);
            }
        }
    }
    if bad.is_empty() {
        return (1..=offsets.len()).collect();
    }
    bad.sort_unstable();
    bad.dedup();
    bad
}

/// `H_N` with its noise weighting and a precomputed least-squares operator.
///
/// The operator is formed from a QR factorization of the whitened system
/// `L⁻¹H` where `R = LLᵀ`. When every noise level is zero the weighting is
/// uniform and the reported covariance is zero.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    h: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    weight: DMatrix<f64>,
    operator: DMatrix<f64>,
    covariance: Matrix9,
}

impl DesignMatrix {
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Measurement noise covariance `R`.
    pub fn noise_covariance(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    /// `R⁻¹`, or the identity when `R = 0`.
    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    /// The `9 × 3N` map `[HᵀR⁻¹H]⁻¹HᵀR⁻¹`.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    /// `[HᵀR⁻¹H]⁻¹`.
    pub fn covariance(&self) -> &Matrix9 {
        &self.covariance
    }

    pub fn n_sensors(&self) -> usize {
        self.h.nrows() / 3
    }

    pub fn apply(&self, measurements: &MeasurementSet) -> Result<Vector9> {
        let g = measurements.as_vector();
        if g.len() != self.h.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.h.nrows(),
                actual: g.len(),
            });
        }
        let alpha = &self.operator * g;
        Ok(Vector9::from_iterator(alpha.iter().copied()))
    }
}

pub fn build_design_matrix(array: &SensorArray) -> Result<DesignMatrix> {
    let report = validate_geometry(array);
    if !report.valid {
        return Err(Error::Unobservable {
            rank: report.rank,
            sensors: report.offending,
        });
    }
    let h = assemble_h(array);
    let rows = h.nrows();
    let noise_cov = array.measurement_covariance();
    let noiseless = noise_cov.iter().all(|&v| v == 0.0);

    let (whitener, weight) = if noiseless {
        (DMatrix::identity(rows, rows), DMatrix::identity(rows, rows))
    } else {
        let chol = noise_cov.clone().cholesky().ok_or_else(|| {
            Error::InvalidInput(
                "measurement covariance is singular; zero noise is only supported on every sensor at once".into(),
            )
        })?;
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(rows, rows))
            .expect("Cholesky factor has a positive diagonal");
        let weight = l_inv.transpose() * &l_inv;
        (l_inv, weight)
    };

    let qr = (&whitener * &h).qr();
    let r = qr.r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(9, 9))
        .ok_or(Error::Unobservable {
            rank: report.rank,
            sensors: (1..=array.n_sensors()).collect(),
        })?;
    let operator = &r_inv * qr.q().transpose() * &whitener;
    let mut covariance = if noiseless {
        Matrix9::zeros()
    } else {
        let p = &r_inv * r_inv.transpose();
        Matrix9::from_iterator(p.iter().copied())
    };
    covariance = (covariance + covariance.transpose()) * 0.5;

    Ok(DesignMatrix {
        h,
        noise_cov,
        weight,
        operator,
        covariance,
    })
}

fn check_triad(array: &SensorArray) -> Result<([Vector3<f64>; 3], f64)> {
    let triad = array.triad()?;
    let triple = triad[0].cross(&triad[1]).dot(&triad[2]);
    let threshold = TRIPLE_DEGENERACY_RATIO * triad.iter().map(|a| a.norm()).product::<f64>();
    if triple.is_nan() || triple.abs() < threshold || triple == 0.0 {
        return Err(Error::DegenerateGeometry { triple, threshold });
    }
    Ok((triad, triple))
}

/// Closed-form `H₃⁻¹ = [I₃⊗(a₂₀×a₃₀) | I₃⊗(a₃₀×a₁₀) | I₃⊗(a₁₀×a₂₀)] / ((a₁₀×a₂₀)·a₃₀)`.
pub fn closed_form_inverse_n3(array: &SensorArray) -> Result<Matrix9> {
    let ([a1, a2, a3], triple) = check_triad(array)?;
    let eye = Matrix3::<f64>::identity();
    let mut inv = Matrix9::zeros();
    for (block, c) in [a2.cross(&a3), a3.cross(&a1), a1.cross(&a2)].iter().enumerate() {
        let kron = eye.kronecker(c);
        inv.fixed_view_mut::<9, 3>(0, 3 * block).copy_from(&(kron / triple));
    }
    Ok(inv)
}

/// Geometry-only quantities behind the three-sensor covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryKernel {
    /// Columns `a₂₀×a₃₀`, `a₃₀×a₁₀`, `a₁₀×a₂₀`.
    pub k: Matrix3<f64>,
    /// `(a₁₀×a₂₀)·a₃₀`, m³.
    pub triple: f64,
    /// Per-block covariance `M = σ²/det(K) · KKᵀ`.
    pub m: Matrix3<f64>,
}

/// `K` with cross-product columns.
pub fn kernel_columns(array: &SensorArray) -> Result<Matrix3<f64>> {
    let [a1, a2, a3] = array.triad()?;
    Ok(Matrix3::from_columns(&[a2.cross(&a3), a3.cross(&a1), a1.cross(&a2)]))
}

/// `K` built from per-axis coordinate vectors `x, y, z` (each collecting one
/// coordinate across the three sensors), with rows `(y×z)ᵀ, (z×x)ᵀ, (x×y)ᵀ`.
pub fn kernel_rows(array: &SensorArray) -> Result<Matrix3<f64>> {
    let [x, y, z] = axis_coordinates(array)?;
    Ok(Matrix3::from_rows(&[
        y.cross(&z).transpose(),
        z.cross(&x).transpose(),
        x.cross(&y).transpose(),
    ]))
}

fn axis_coordinates(array: &SensorArray) -> Result<[Vector3<f64>; 3]> {
    let [a1, a2, a3] = array.triad()?;
    Ok([
        Vector3::new(a1.x, a2.x, a3.x),
        Vector3::new(a1.y, a2.y, a3.y),
        Vector3::new(a1.z, a2.z, a3.z),
    ])
}

/// `M` from the explicit Gram matrix of `y×z, z×x, x×y` over the squared
/// triple product.
pub fn kernel_m_explicit(array: &SensorArray, sigma: f64) -> Result<Matrix3<f64>> {
    let (_, triple) = check_triad(array)?;
    let [x, y, z] = axis_coordinates(array)?;
    let c = [y.cross(&z), z.cross(&x), x.cross(&y)];
    let gram = Matrix3::from_fn(|i, j| c[i].dot(&c[j]));
    Ok(gram * (sigma * sigma / (triple * triple)))
}

/// Requires three sensors with equal independent noise.
pub fn geometry_kernel(array: &SensorArray) -> Result<GeometryKernel> {
    let (_, triple) = check_triad(array)?;
    let sigma = array.uniform_sigma().ok_or(Error::HeterogeneousNoise)?;
    let k = kernel_columns(array)?;
    let m = k * k.transpose() * (sigma * sigma / k.determinant());
    Ok(GeometryKernel {
        k,
        triple,
        m: (m + m.transpose()) * 0.5,
    })
}
