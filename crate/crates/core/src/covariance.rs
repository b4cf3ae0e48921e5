//! Analytic covariance propagation from `P_α` to angular acceleration and
//! (linearized) angular velocity.
//!
//! Indices below are zero-based into the row-major `α`, so the one-based
//! entry `P₆₈` is `p[(5, 7)]`.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::array::{build_design_matrix, geometry_kernel, kernel_rows, Matrix9, SensorArray};
use crate::error::{Error, Result};

pub type Matrix3x9 = SMatrix<f64, 3, 9>;

/// Below this `|ωᵢ|` (rad/s) the square-root linearization is treated as
/// singular for that axis.
pub const OMEGA_SINGULAR_THRESHOLD: f64 = 1e-6;

/// `P_α`: the three-sensor equal-noise case uses `blockdiag(M, M, M)`, every
/// other array the normal-equation inverse `[HᵀR⁻¹H]⁻¹`.
pub fn alpha_covariance(array: &SensorArray) -> Result<Matrix9> {
    if array.n_sensors() == 3 && array.uniform_sigma().is_some() {
        let m = geometry_kernel(array)?.m;
        let mut p = Matrix9::zeros();
        for b in 0..3 {
            p.fixed_view_mut::<3, 3>(3 * b, 3 * b).copy_from(&m);
        }
        return Ok(p);
    }
    Ok(*build_design_matrix(array)?.covariance())
}

/// The linear map `L` with `ω̇ = L α`.
pub fn omega_dot_map() -> Matrix3x9 {
    let mut l = Matrix3x9::zeros();
    // ω̇₁ = ½(A₃₂ − A₂₃)
    l[(0, 7)] = 0.5;
    l[(0, 5)] = -0.5;
    // ω̇₂ = ½(A₁₃ − A₃₁)
    l[(1, 2)] = 0.5;
    l[(1, 6)] = -0.5;
    // ω̇₃ = ½(A₂₁ − A₁₂)
    l[(2, 3)] = 0.5;
    l[(2, 1)] = -0.5;
    l
}

/// `P_ω̇ = L P_α Lᵀ`; its diagonal is `¼(P₈₈ + P₆₆ − 2P₆₈)` and cyclic.
pub fn omega_dot_covariance(p_alpha: &Matrix9) -> Matrix3<f64> {
    let l = omega_dot_map();
    let p = l * p_alpha * l.transpose();
    (p + p.transpose()) * 0.5
}

/// `∂ω/∂α` of the diagonal route, with rows `(1, −1, −1)`, `(−1, 1, −1)`,
/// `(−1, −1, 1)` over `(A₁₁, A₂₂, A₃₃)`, each scaled by `1/(4ωᵢ)`.
pub fn omega_jacobian(omega: &Vector3<f64>) -> Matrix3x9 {
    const SIGNS: [[f64; 3]; 3] = [[1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    let mut j = Matrix3x9::zeros();
    for (i, row) in SIGNS.iter().enumerate() {
        for (d, s) in row.iter().enumerate() {
            j[(i, 4 * d)] = s / (4.0 * omega[i]);
        }
    }
    j
}

/// `P_ω = J P_α Jᵀ`, symmetrized.
///
/// Axes with `|ωᵢ| < OMEGA_SINGULAR_THRESHOLD` are flagged; their variance is
/// reported as `+∞` and their cross terms as zero.
pub fn omega_covariance_linearized(p_alpha: &Matrix9, omega: &Vector3<f64>) -> (Matrix3<f64>, [bool; 3]) {
    let singular = [0, 1, 2].map(|i| omega[i].is_nan() || omega[i].abs() < OMEGA_SINGULAR_THRESHOLD);
    let safe = Vector3::from_fn(|i, _| if singular[i] { 1.0 } else { omega[i] });
    let j = omega_jacobian(&safe);
    let mut p = j * p_alpha * j.transpose();
    p = (p + p.transpose()) * 0.5;
    for (i, &flag) in singular.iter().enumerate() {
        if flag {
            for k in 0..3 {
                p[(i, k)] = 0.0;
                p[(k, i)] = 0.0;
            }
            p[(i, i)] = f64::INFINITY;
        }
    }
    (p, singular)
}

/// Sum of squared norms of `y×z`, `z×x`, `x×y` over the squared triple
/// product; equals `trace(KKᵀ)/det(K)`.
fn kernel_trace_ratio(array: &SensorArray) -> Result<(Vector3<f64>, f64)> {
    let k = kernel_rows(array)?;
    let triple = geometry_kernel(array)?.triple;
    let norms = Vector3::from_fn(|i, _| k.row(i).norm_squared());
    Ok((norms, triple * triple))
}

/// The scalar `s` with `σ²_ωᵢ = s/ωᵢ²` for a three-sensor equal-noise array:
/// `s = σ²/(16 t²) · [‖y×z‖² + ‖z×x‖² + ‖x×y‖²]` with `t` the triple product.
pub fn scalar_s(array: &SensorArray) -> Result<f64> {
    if array.n_sensors() != 3 {
        return Err(Error::WrongSensorCount(array.n_sensors()));
    }
    let sigma = array.uniform_sigma().ok_or(Error::HeterogeneousNoise)?;
    let (norms, t2) = kernel_trace_ratio(array)?;
    Ok(sigma * sigma / (16.0 * t2) * norms.sum())
}

/// Compact three-sensor angular-acceleration variances,
/// `σ²_ω̇₁ = σ²/(4t²)·[‖z×x‖² + ‖x×y‖²]` and cyclic.
pub fn omega_dot_variances_compact(array: &SensorArray) -> Result<Vector3<f64>> {
    if array.n_sensors() != 3 {
        return Err(Error::WrongSensorCount(array.n_sensors()));
    }
    let sigma = array.uniform_sigma().ok_or(Error::HeterogeneousNoise)?;
    let (n, t2) = kernel_trace_ratio(array)?;
    let c = sigma * sigma / (4.0 * t2);
    Ok(Vector3::new(c * (n[1] + n[2]), c * (n[2] + n[0]), c * (n[1] + n[0])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub p_alpha: Matrix9,
    pub p_omega_dot: Matrix3<f64>,
    pub p_omega: Matrix3<f64>,
    /// Present for three-sensor equal-noise arrays only.
    pub s_scalar: Option<f64>,
    /// Axes where the ω linearization is singular.
    pub omega_singular: [bool; 3],
}

pub fn covariance_report(array: &SensorArray, omega: &Vector3<f64>) -> Result<CovarianceReport> {
    let p_alpha = alpha_covariance(array)?;
    let (p_omega, omega_singular) = omega_covariance_linearized(&p_alpha, omega);
    let s_scalar = match scalar_s(array) {
        Ok(s) => Some(s),
        Err(Error::WrongSensorCount(_) | Error::HeterogeneousNoise) => None,
        Err(e) => return Err(e),
    };
    Ok(CovarianceReport {
        p_alpha,
        p_omega_dot: omega_dot_covariance(&p_alpha),
        p_omega,
        s_scalar,
        omega_singular,
    })
}
