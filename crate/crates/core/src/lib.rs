//! Gyro-free angular rate estimation from an array of body-fixed triaxial
//! accelerometers.
//!
//! Differenced accelerometer readings are linear in the nine entries of the
//! gyroscopic matrix `A(ω, ω̇) = [ω̇×] + [ω×]²`. A weighted linear
//! least-squares fit recovers `A`, from which angular acceleration (skew
//! part) and the spin axis and rate magnitude (symmetric part) follow, along
//! with their analytic covariances.
//!
//! ```
//! use gyrofree_core::{
//!     build_design_matrix, estimate_rates, relative_accelerations, BodyRates, SensorArray,
//! };
//! use nalgebra::Vector3;
//!
//! let array = SensorArray::with_uniform_sigma(
//!     Vector3::zeros(),
//!     vec![Vector3::x(), Vector3::y(), Vector3::z()],
//!     1e-4,
//! )
//! .unwrap();
//! let truth = BodyRates::new(Vector3::new(0.2, -0.1, 0.3), Vector3::new(0.01, 0.0, -0.02)).unwrap();
//! let g = relative_accelerations(&array, &truth);
//! let design = build_design_matrix(&array).unwrap();
//! let est = estimate_rates(&design, &g, &truth.omega).unwrap();
//! assert!((est.omega - truth.omega).norm() < 1e-12);
//! ```

pub mod array;
pub mod config;
pub mod covariance;
pub mod error;
pub mod estimator;
pub mod kinematics;
pub mod montecarlo;
pub mod report;

pub use array::{
    build_design_matrix, closed_form_inverse_n3, geometry_kernel, validate_geometry, DesignMatrix, GeometryKernel,
    GeometryReport, Matrix9, SensorArray,
};
pub use covariance::{
    alpha_covariance, omega_covariance_linearized, omega_dot_covariance, scalar_s, CovarianceReport,
};
pub use error::{Error, Result};
pub use estimator::{
    estimate_rates, extract_omega_dot, extract_omega_squared, resolve_sign, solve_alpha, spin_axis_eigen,
    AlphaEstimate, RateEstimate, SpinAxis,
};
pub use kinematics::{
    add_measurement_noise, build_gyro_matrix, propagate_torque_free, relative_accelerations, BodyRates, GyroMatrix,
    InertiaModel, MeasurementSet, Vector9,
};
pub use montecarlo::{random_sphere_array, run_monte_carlo, McReport, OmegaRoute, RateProfile, Scenario};
pub use report::{emit_report, ReportFiles};
