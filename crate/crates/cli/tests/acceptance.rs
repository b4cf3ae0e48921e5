//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gyrofree_core::array::{kernel_columns, kernel_rows};
use gyrofree_core::covariance::omega_jacobian;
use gyrofree_core::montecarlo::{REFERENCE_DRAWS, REFERENCE_OMEGA, REFERENCE_OMEGA_DOT};
use gyrofree_core::{
    alpha_covariance, build_design_matrix, build_gyro_matrix, closed_form_inverse_n3, estimate_rates, geometry_kernel,
    omega_dot_covariance, relative_accelerations, run_monte_carlo, scalar_s, spin_axis_eigen, BodyRates, McReport,
    OmegaRoute, RateProfile, Scenario, SensorArray,
};
use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 closed-form inverse", closed_form_inverse),
        ("2 adjugate identity", adjugate_identity),
        ("3 noiseless round trip", noiseless_round_trip),
        ("4 eigenstructure", eigenstructure),
        ("5 reference Monte Carlo", reference_monte_carlo),
        ("6 covariance consistency", covariance_consistency),
        ("7 geometry laws", geometry_laws),
        ("8 jacobian", jacobian),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform3(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| r.random_range(lo..hi))
}

fn unit(r: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = uniform3(r, -1.0, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Components with |ωᵢ| ∈ [0.05, 2] and random sign.
fn spin(r: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| {
        let m: f64 = r.random_range(0.05..2.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Offsets with normalized volume above 0.1, so the conditioning is bounded.
fn random_array(r: &mut ChaCha8Rng, n: usize, sigma: f64) -> SensorArray {
    loop {
        let offsets: Vec<_> = (0..n).map(|_| uniform3(r, -1.0, 1.0)).collect();
        let t = offsets[0].cross(&offsets[1]).dot(&offsets[2]);
        let scale: f64 = offsets[..3].iter().map(|a| a.norm()).product();
        if t.abs() > 0.1 * scale {
            return SensorArray::with_uniform_sigma(uniform3(r, -0.5, 0.5), offsets, sigma).unwrap();
        }
    }
}

fn h_by_hand(offsets: &[Vector3<f64>]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(3 * offsets.len(), 9);
    for (i, a) in offsets.iter().enumerate() {
        for k in 0..3 {
            for j in 0..3 {
                h[(3 * i + k, 3 * k + j)] = a[j];
            }
        }
    }
    h
}

fn closed_form_inverse() -> Outcome {
    let mut r = rng(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let array = random_array(&mut r, 3, 1.0);
        let inv = closed_form_inverse_n3(&array).map_err(|e| e.to_string())?;
        let h = h_by_hand(array.offsets());
        let prod = DMatrix::from_column_slice(9, 9, inv.as_slice()) * h;
        worst = worst.max((prod - DMatrix::<f64>::identity(9, 9)).amax());
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-10 && elapsed < Duration::from_secs(5),
        format!("max |H⁻¹H − I| = {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn adjugate_identity() -> Outcome {
    let mut r = rng(2);
    let (mut worst_det, mut worst_dual) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let array = random_array(&mut r, 3, 1.0);
        let a = array.offsets();
        let t = a[0].cross(&a[1]).dot(&a[2]);
        let cols = kernel_columns(&array).map_err(|e| e.to_string())?;
        let rows = kernel_rows(&array).map_err(|e| e.to_string())?;
        // det(X)·X⁻ᵀ with X = [a₁ a₂ a₃] is the cross-product kernel
        let x = Matrix3::from_columns(a);
        let adj = x.try_inverse().unwrap().transpose() * x.determinant();
        worst_det = worst_det.max((cols.determinant() - t * t).abs() / (t * t));
        worst_dual = worst_dual
            .max((cols - rows).amax() / cols.amax())
            .max((cols - adj).amax() / cols.amax());
    }
    check(
        worst_det < 1e-12 && worst_dual < 1e-12,
        format!("det(K) vs triple² rel {worst_det:.2e}, row/column forms rel {worst_dual:.2e}"),
    )
}

fn noiseless_round_trip() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for n in [3usize, 6] {
        for _ in 0..1000 {
            let array = random_array(&mut r, n, 0.0);
            let truth = BodyRates::new(spin(&mut r), uniform3(&mut r, -2.0, 2.0)).unwrap();
            let design = build_design_matrix(&array).map_err(|e| e.to_string())?;
            let g = relative_accelerations(&array, &truth);
            let est = estimate_rates(&design, &g, &truth.omega).map_err(|e| e.to_string())?;
            worst = worst
                .max((est.omega - truth.omega).norm() / truth.omega.norm())
                .max((est.omega_dot - truth.omega_dot).norm() / truth.omega_dot.norm());
        }
    }
    check(worst < 1e-10, format!("worst relative error {worst:.2e} over N = 3 and N = 6"))
}

/// Eigenvalues of a symmetric 3×3 matrix by cyclic Jacobi rotations, ascending.
fn symmetric_eigenvalues(s: &Matrix3<f64>) -> [f64; 3] {
    let mut a = *s;
    for _ in 0..50 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off <= 1e-40 * a.norm_squared() {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[(p, q)] == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let mut g = Matrix3::identity();
            g[(p, p)] = c;
            g[(q, q)] = c;
            g[(p, q)] = t * c;
            g[(q, p)] = -t * c;
            a = g.transpose() * a * g;
        }
    }
    let mut ev = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
    ev.sort_by(f64::total_cmp);
    ev
}

fn eigenstructure() -> Outcome {
    let mut r = rng(4);
    let (mut worst_eig, mut worst_axis) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let w = uniform3(&mut r, -2.0, 2.0);
        let a = build_gyro_matrix(&BodyRates::new(w, uniform3(&mut r, -2.0, 2.0)).unwrap());
        let w2 = w.norm_squared();
        let ev = symmetric_eigenvalues(&a.symmetric_part());
        let err = (ev[0] + w2).abs().max((ev[1] + w2).abs()).max(ev[2].abs());
        worst_eig = worst_eig.max(err / w2);
        let spin = spin_axis_eigen(&a);
        worst_axis = worst_axis.max(spin.axis.cross(&(w / w.norm())).norm());
        let lib = spin.eigenvalues;
        worst_eig = worst_eig.max((0..3).map(|i| (lib[i] - ev[i]).abs()).fold(0.0, f64::max) / w2);
    }
    check(
        worst_eig < 1e-10 && worst_axis < 1e-8,
        format!("eigenvalue error {worst_eig:.2e}·ω², axis misalignment {worst_axis:.2e}"),
    )
}

fn reference_report() -> Result<(McReport, Duration), String> {
    let start = Instant::now();
    let scenario = Scenario::reference(42, 1e-4, REFERENCE_DRAWS).map_err(|e| e.to_string())?;
    let report = run_monte_carlo(&scenario).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

fn reference_monte_carlo() -> Outcome {
    let (report, elapsed) = reference_report()?;
    let scenario = Scenario::reference(42, 1e-4, REFERENCE_DRAWS).unwrap();
    let sensors = scenario.array.n_sensors() + 1;
    let setup_ok = sensors == 4
        && scenario.array.offsets().iter().all(|a| (a.norm() - 1.0).abs() < 1e-12)
        && scenario.prior_omega == Vector3::from(REFERENCE_OMEGA)
        && report.n_draws() == 10_000;
    // independent recount of the per-channel containment
    let mut inside = [0usize; 6];
    for (ew, ewd) in report.errors_omega.iter().zip(&report.errors_omega_dot) {
        for i in 0..3 {
            inside[i] += (ew[i].abs() <= 3.0 * report.predicted_sigma_omega[i]) as usize;
            inside[i + 3] += (ewd[i].abs() <= 3.0 * report.predicted_sigma_omega_dot[i]) as usize;
        }
    }
    let fractions: Vec<f64> = inside.iter().map(|&k| k as f64 / report.n_draws() as f64).collect();
    let per_channel_ok = fractions.iter().all(|&f| (0.990..=1.0).contains(&f));
    let chol = report.predicted_cov_omega.cholesky().ok_or("P_ω not positive definite")?;
    let d2: Vec<f64> = report.errors_omega.iter().map(|e| chol.solve(e).dot(e)).collect();
    let inside = |bound: f64| d2.iter().filter(|&&d| d <= bound).count() as f64 / d2.len() as f64;
    let ellipsoid = inside(9.0);
    // 3-D region with the same 0.9973 probability as a 1-D 3σ interval
    let equal_probability = inside(14.156);
    check(
        setup_ok && per_channel_ok && ellipsoid >= 0.985 && elapsed < Duration::from_secs(60),
        format!(
            "containment {:?}, ellipsoid d ≤ 3: {ellipsoid:.4} (need ≥ 0.985; calibrated Gaussian gives 0.9707), \
             d² ≤ 14.156: {equal_probability:.4}, {:.2} s",
            fractions,
            elapsed.as_secs_f64()
        ),
    )
}

fn sample_variances(errors: &[Vector3<f64>]) -> Vector3<f64> {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<Vector3<f64>>() / n;
    errors.iter().map(|e| (e - mean).component_mul(&(e - mean))).sum::<Vector3<f64>>() / (n - 1.0)
}

fn covariance_consistency() -> Outcome {
    let (report, _) = reference_report()?;
    let scenario = Scenario::reference(42, 1e-4, 1).unwrap();
    // analytic predictions rebuilt from the normal equations
    let h = h_by_hand(scenario.array.offsets());
    let sigma = scenario.array.sigmas()[0];
    let p_alpha = (h.transpose() * &h / (sigma * sigma)).try_inverse().unwrap();
    let p = |i: usize, j: usize| p_alpha[(i, j)];
    let w = Vector3::from(REFERENCE_OMEGA);
    let pred_wd = Vector3::new(
        0.25 * (p(7, 7) + p(5, 5) - 2.0 * p(5, 7)),
        0.25 * (p(2, 2) + p(6, 6) - 2.0 * p(2, 6)),
        0.25 * (p(1, 1) + p(3, 3) - 2.0 * p(1, 3)),
    );
    let diag = [(0, 4, 8), (4, 0, 8), (8, 0, 4)];
    let pred_w = Vector3::from_fn(|i, _| {
        let (a, b, c) = diag[i];
        (p(a, a) + p(b, b) + p(c, c) - 2.0 * p(a, b) - 2.0 * p(a, c) + 2.0 * p(b, c)) / (16.0 * w[i] * w[i])
    });
    let lib_agrees = (pred_wd - report.predicted_cov_omega_dot.diagonal()).amax() <= 1e-9 * pred_wd.amax()
        && (pred_w - report.predicted_cov_omega.diagonal()).amax() <= 1e-9 * pred_w.amax();
    let mis_wd = (sample_variances(&report.errors_omega_dot) - pred_wd).component_div(&pred_wd).abs();
    let mis_w = (sample_variances(&report.errors_omega) - pred_w).component_div(&pred_w).abs();
    check(
        lib_agrees && mis_wd.max() <= 0.05 && mis_w.max() <= 0.10,
        format!(
            "ω̇ variance mismatch {:.3?} (≤ 0.05), ω variance mismatch {:.3?} (≤ 0.10)",
            mis_wd.as_slice(),
            mis_w.as_slice()
        ),
    )
}

fn trace_m(offsets: &[Vector3<f64>], sigma: f64) -> f64 {
    // M = σ²(XXᵀ)⁻¹ with X = [a₁ a₂ a₃]
    let x = Matrix3::from_columns(offsets);
    ((x * x.transpose()).try_inverse().unwrap() * sigma * sigma).trace()
}

fn geometry_laws() -> Outcome {
    let mut r = rng(7);
    let sigma = 1e-4;
    let array = random_array(&mut r, 3, sigma);
    let doubled = array.scaled(2.0);
    let quarter = |a: f64, b: f64| (b / a - 0.25).abs() / 0.25;

    let k1 = geometry_kernel(&array).map_err(|e| e.to_string())?;
    let k2 = geometry_kernel(&doubled).map_err(|e| e.to_string())?;
    let wd1 = omega_dot_covariance(&alpha_covariance(&array).unwrap()).diagonal();
    let wd2 = omega_dot_covariance(&alpha_covariance(&doubled).unwrap()).diagonal();
    let s1 = scalar_s(&array).map_err(|e| e.to_string())?;
    let s2 = scalar_s(&doubled).map_err(|e| e.to_string())?;
    let mut analytic = quarter(k1.m.trace(), k2.m.trace()).max(quarter(s1, s2));
    analytic = analytic.max(quarter(trace_m(array.offsets(), sigma), trace_m(doubled.offsets(), sigma)));
    for i in 0..3 {
        analytic = analytic.max(quarter(wd1[i], wd2[i]));
    }

    // MC with independent seeds for the two arrays
    let truth = BodyRates::new(REFERENCE_OMEGA.into(), REFERENCE_OMEGA_DOT.into()).unwrap();
    let run = |a: &SensorArray, seed: u64| {
        run_monte_carlo(&Scenario {
            array: a.clone(),
            profile: RateProfile::Epoch(truth),
            n_draws: 20_000,
            seed,
            prior_omega: truth.omega,
            omega_route: OmegaRoute::Diagonal,
        })
    };
    let mc1 = run(&array, 70).map_err(|e| e.to_string())?;
    let mc2 = run(&doubled, 71).map_err(|e| e.to_string())?;
    let v1 = sample_variances(&mc1.errors_omega_dot);
    let v2 = sample_variances(&mc2.errors_omega_dot);
    let mut mc = 0.0f64;
    for i in 0..3 {
        mc = mc.max(quarter(v1[i], v2[i]));
    }
    let sum1: f64 = sample_variances(&mc1.errors_omega).iter().zip(truth.omega.iter()).map(|(v, w)| v * w * w).sum();
    let sum2: f64 = sample_variances(&mc2.errors_omega).iter().zip(truth.omega.iter()).map(|(v, w)| v * w * w).sum();
    mc = mc.max(quarter(sum1, sum2));

    // orthogonality optimality at fixed norms
    let norms = [1.0, 0.7, 1.3];
    let ortho: Vec<_> = [Vector3::x(), Vector3::y(), Vector3::z()].iter().zip(norms).map(|(e, n)| e * n).collect();
    let best = geometry_kernel(&SensorArray::with_uniform_sigma(Vector3::zeros(), ortho, 1.0).unwrap())
        .unwrap()
        .m
        .trace();
    let mut below = 0;
    let mut min_trace = f64::INFINITY;
    for _ in 0..10_000 {
        let offsets: Vec<_> = norms.iter().map(|&n| unit(&mut r) * n).collect();
        let arr = SensorArray::with_uniform_sigma(Vector3::zeros(), offsets, 1.0).unwrap();
        if let Ok(k) = geometry_kernel(&arr) {
            min_trace = min_trace.min(k.m.trace());
            below += (k.m.trace() < best - 1e-12) as usize;
        }
    }
    check(
        analytic < 1e-10 && mc < 0.05 && below == 0,
        format!(
            "analytic quarter-law error {analytic:.2e}, MC error {mc:.3}, \
             min trace(M) {min_trace:.6} vs orthogonal {best:.6}, {below} below"
        ),
    )
}

fn diagonal_map(alpha: &SMatrix<f64, 9, 1>, signs: &Vector3<f64>) -> Vector3<f64> {
    let (a11, a22, a33) = (alpha[0], alpha[4], alpha[8]);
    let sq = Vector3::new(a11 - a22 - a33, a22 - a11 - a33, a33 - a11 - a22) * 0.5;
    Vector3::from_fn(|i, _| signs[i] * sq[i].sqrt())
}

fn jacobian() -> Outcome {
    let mut r = rng(8);
    let step = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = spin(&mut r);
        let alpha = build_gyro_matrix(&BodyRates::new(w, uniform3(&mut r, -1.0, 1.0)).unwrap()).alpha();
        let signs = w.map(f64::signum);
        let j = omega_jacobian(&w);
        for k in 0..9 {
            let mut e = SMatrix::<f64, 9, 1>::zeros();
            e[k] = step;
            let fd = (diagonal_map(&(alpha + e), &signs) - diagonal_map(&(alpha - e), &signs)) / (2.0 * step);
            for i in 0..3 {
                let scale = j.row(i).amax();
                worst = worst.max((fd[i] - j[(i, k)]).abs() / scale);
            }
        }
    }
    check(worst < 1e-6, format!("worst relative deviation {worst:.2e} at 100 points"))
}

fn run_reference(dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gyrofree"))
        .args(["paper-repro", "--seed", "42", "--out"])
        .arg(dir)
        .env_remove("GYROFREE_DRAWS")
        .env_remove("GYROFREE_SIGMA_G")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_reference(&a)?;
    run_reference(&b)?;
    let mut bytes = 0;
    for name in ["errors.csv", "summary.csv", "ellipsoid.csv"] {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
        bytes += x.len();
    }
    Ok(format!("3 CSVs, {bytes} bytes, identical"))
}
