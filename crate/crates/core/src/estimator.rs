//! Weighted least-squares solution for the gyroscopic matrix and extraction
//! of angular acceleration and angular velocity from it.
//!
//! Angular acceleration is linear in `A` (its skew part). Angular velocity
//! enters quadratically, so only the spin axis is observable; its direction
//! is fixed with a prior rate estimate under the assumption that the axis
//! turns by less than 90° between epochs.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::array::{DesignMatrix, Matrix9};
use crate::covariance::{omega_covariance_linearized, omega_dot_covariance};
use crate::error::Result;
use crate::kinematics::{GyroMatrix, MeasurementSet, Vector9};

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    /// `vec(Â)`, row-major.
    pub alpha: Vector9,
    /// `P_α = [HᵀR⁻¹H]⁻¹`.
    pub covariance: Matrix9,
}

impl AlphaEstimate {
    pub fn gyro_matrix(&self) -> GyroMatrix {
        GyroMatrix::from_alpha(&self.alpha)
    }
}

pub fn solve_alpha(design: &DesignMatrix, measurements: &MeasurementSet) -> Result<AlphaEstimate> {
    Ok(AlphaEstimate {
        alpha: design.apply(measurements)?,
        covariance: *design.covariance(),
    })
}

/// `ω̇ = (½(A₃₂−A₂₃), ½(A₁₃−A₃₁), ½(A₂₁−A₁₂))`.
pub fn extract_omega_dot(a: &GyroMatrix) -> Vector3<f64> {
    let a = a.matrix();
    Vector3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

/// `ωᵢ²` from the diagonal of `A`. Values can go negative under noise and
/// are returned as-is.
pub fn extract_omega_squared(a: &GyroMatrix) -> Vector3<f64> {
    let a = a.matrix();
    let (a11, a22, a33) = (a[(0, 0)], a[(1, 1)], a[(2, 2)]);
    Vector3::new(
        0.5 * (a11 - a22 - a33),
        0.5 * (a22 - a11 - a33),
        0.5 * (a33 - a11 - a22),
    )
}

/// Null-space direction of `S = ½(A + Aᵀ)`, sign unresolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinAxis {
    pub axis: Vector3<f64>,
    /// `‖ω‖`, rad/s.
    pub magnitude: f64,
    /// Eigenvalues of `S`, ascending.
    pub eigenvalues: Vector3<f64>,
    /// False when all three eigenvalues coincide (ω ≈ 0) and the axis is
    /// arbitrary.
    pub reliable: bool,
}

pub fn spin_axis_eigen(a: &GyroMatrix) -> SpinAxis {
    let s = a.symmetric_part();
    let eig = SymmetricEigen::new(s);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = Vector3::from_fn(|i, _| eig.eigenvalues[order[i]]);

    let spread = eigenvalues[2] - eigenvalues[0];
    let scale = a.matrix().norm();
    if spread <= 64.0 * f64::EPSILON * scale || spread == 0.0 {
        return SpinAxis {
            axis: Vector3::z(),
            magnitude: 0.0,
            eigenvalues,
            reliable: false,
        };
    }

    let null = (0..3)
        .min_by(|&i, &j| eig.eigenvalues[i].abs().total_cmp(&eig.eigenvalues[j].abs()))
        .expect("three eigenvalues");
    let repeated: f64 = (0..3).filter(|&i| i != null).map(|i| eig.eigenvalues[i]).sum::<f64>() / 2.0;
    let axis = eig.eigenvectors.column(null).normalize();
    SpinAxis {
        axis,
        magnitude: (-repeated).max(0.0).sqrt(),
        eigenvalues,
        reliable: true,
    }
}

/// Sign convention used when the prior cannot decide: the component of
/// largest magnitude is made positive.
fn canonical_sign(axis: &Vector3<f64>) -> f64 {
    let lead = axis.iamax();
    if axis[lead] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Picks `±magnitude·axis` so that it points along `previous_omega`.
/// Returns the signed vector and whether the prior decided the sign.
pub fn resolve_sign(axis: &Vector3<f64>, magnitude: f64, previous_omega: &Vector3<f64>) -> (Vector3<f64>, bool) {
    let dot = axis.dot(previous_omega);
    if dot > 0.0 {
        (axis * magnitude, true)
    } else if dot < 0.0 {
        (-axis * magnitude, true)
    } else {
        (axis * (canonical_sign(axis) * magnitude), false)
    }
}

/// Output of the one-epoch pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Signed ω̂ from the eigen route, rad/s.
    pub omega: Vector3<f64>,
    /// ω̇̂, rad/s².
    pub omega_dot: Vector3<f64>,
    /// Unit null-space axis as returned by the eigensolver.
    pub spin_axis: Vector3<f64>,
    pub omega_magnitude: f64,
    pub sign_resolved: bool,
    pub axis_reliable: bool,
    /// Signed ω̂ from the diagonal route: `|ωᵢ| = sqrt(max(0, ωᵢ²))` with
    /// component signs taken from `omega`.
    pub omega_diagonal: Vector3<f64>,
    /// Raw diagonal-route `ωᵢ²`, possibly negative.
    pub omega_squared: Vector3<f64>,
    pub alpha: AlphaEstimate,
    /// Linearized covariance of the diagonal-route ω, evaluated at `omega`.
    pub p_omega: Matrix3<f64>,
    pub p_omega_dot: Matrix3<f64>,
    /// Axes where the linearization is singular (`|ωᵢ|` below threshold).
    pub omega_singular: [bool; 3],
}

pub fn estimate_rates(
    design: &DesignMatrix,
    measurements: &MeasurementSet,
    previous_omega: &Vector3<f64>,
) -> Result<RateEstimate> {
    let alpha = solve_alpha(design, measurements)?;
    let a = alpha.gyro_matrix();
    let omega_dot = extract_omega_dot(&a);
    let omega_squared = extract_omega_squared(&a);
    let spin = spin_axis_eigen(&a);
    let (omega, sign_resolved) = resolve_sign(&spin.axis, spin.magnitude, previous_omega);
    let omega_diagonal = Vector3::from_fn(|i, _| {
        let sign = if omega[i] < 0.0 { -1.0 } else { 1.0 };
        sign * omega_squared[i].max(0.0).sqrt()
    });
    let p_omega_dot = omega_dot_covariance(&alpha.covariance);
    let (p_omega, omega_singular) = omega_covariance_linearized(&alpha.covariance, &omega);
    Ok(RateEstimate {
        omega,
        omega_dot,
        spin_axis: spin.axis,
        omega_magnitude: spin.magnitude,
        sign_resolved: sign_resolved && spin.reliable,
        axis_reliable: spin.reliable,
        omega_diagonal,
        omega_squared,
        alpha,
        p_omega,
        p_omega_dot,
        omega_singular,
    })
}
