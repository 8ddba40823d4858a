//! Independent 1D cross-check solver in the Neumann cosine eigenbasis.
//!
//! On the interval (0, L) the negative Laplacian with homogeneous
//! Neumann condition has the closed-form eigenpairs λ_0 = 0, φ_0 = 1/√L
//! and λ_j = (jπ/L)², φ_j = √(2/L)·cos(jπx/L). This module integrates
//! the equivalent damping/precession form of the dynamics,
//!   ∂_t m = β′Δm + β′|∇m|²m + α′ m×Δm + F(m, ∂_x m),
//! with α′ = α/(1+β²), β′ = αβ/(1+β²), truncated to K modes, evaluating
//! nonlinear terms pointwise on a quadrature grid. It shares no code
//! with the finite-element path, which is what makes it a useful oracle.
//! The unit-length constraint is not enforced; its drift is a measured
//! quantity, not a corrected one.

use std::io::Write as IoWrite;
use std::path::Path;

use crate::fem::ElementGradient;
use crate::stepper::{SolverConfig, StateSnapshot};
use crate::torque::TorqueModel;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Matching tolerance when looking up requested comparison times in a
/// trajectory or snapshot list.
const TIME_MATCH_TOL: f64 = 1e-9;

/// Cosine eigenbasis on (0, L) with a composite midpoint quadrature
/// grid. The midpoint rule integrates products of the first 2Q modes
/// exactly, so the quadrature Gram is the identity to rounding whenever
/// Q ≥ K.
pub struct SpectralBasis {
    length: f64,
    modes: usize,
    nodes: Vec<f64>,
    weight: f64,
    lambda: Vec<f64>,
    /// phi[j][q] = φ_j(x_q)
    phi: Vec<Vec<f64>>,
    /// dphi[j][q] = φ_j'(x_q)
    dphi: Vec<Vec<f64>>,
}

impl SpectralBasis {
    pub fn new(length: f64, modes: usize, quad_points: usize) -> Result<SpectralBasis> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "interval length must be positive, got {length}"
            )));
        }
        if modes == 0 || quad_points == 0 {
            return Err(Error::InvalidArgument(
                "mode and quadrature point counts must be at least 1".into(),
            ));
        }
        let weight = length / quad_points as f64;
        let nodes: Vec<f64> = (0..quad_points)
            .map(|q| (q as f64 + 0.5) * weight)
            .collect();
        let mut lambda = Vec::with_capacity(modes);
        let mut phi = Vec::with_capacity(modes);
        let mut dphi = Vec::with_capacity(modes);
        for j in 0..modes {
            if j == 0 {
                lambda.push(0.0);
                phi.push(vec![1.0 / length.sqrt(); quad_points]);
                dphi.push(vec![0.0; quad_points]);
            } else {
                let freq = j as f64 * std::f64::consts::PI / length;
                let amp = (2.0 / length).sqrt();
                lambda.push(freq * freq);
                phi.push(nodes.iter().map(|x| amp * (freq * x).cos()).collect());
                dphi.push(nodes.iter().map(|x| -amp * freq * (freq * x).sin()).collect());
            }
        }
        Ok(SpectralBasis {
            length,
            modes,
            nodes,
            weight,
            lambda,
            phi,
            dphi,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quad_weight(&self) -> f64 {
        self.weight
    }

    pub fn eigenvalue(&self, mode: usize) -> f64 {
        self.lambda[mode]
    }

    /// Largest deviation of the quadrature Gram matrix from identity.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.modes {
            for j in i..self.modes {
                let g: f64 = self.phi[i]
                    .iter()
                    .zip(&self.phi[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    * self.weight;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// m(x_q) for all quadrature points.
    pub fn evaluate(&self, coeffs: &[Vec3]) -> Vec<Vec3> {
        self.synthesize(coeffs, &self.phi)
    }

    /// ∂_x m(x_q) for all quadrature points.
    pub fn evaluate_derivative(&self, coeffs: &[Vec3]) -> Vec<Vec3> {
        self.synthesize(coeffs, &self.dphi)
    }

    /// Δm(x_q) = Σ_j −λ_j c_j φ_j(x_q).
    pub fn evaluate_laplacian(&self, coeffs: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![vec3::ZERO; self.nodes.len()];
        for (j, c) in coeffs.iter().enumerate() {
            let scaled = vec3::scale(-self.lambda[j], *c);
            for (q, val) in self.phi[j].iter().enumerate() {
                out[q] = vec3::axpy(out[q], *val, scaled);
            }
        }
        out
    }

    fn synthesize(&self, coeffs: &[Vec3], table: &[Vec<f64>]) -> Vec<Vec3> {
        let mut out = vec![vec3::ZERO; self.nodes.len()];
        for (j, c) in coeffs.iter().enumerate() {
            for (q, val) in table[j].iter().enumerate() {
                out[q] = vec3::axpy(out[q], *val, *c);
            }
        }
        out
    }

    /// Quadrature projection of grid values onto the basis:
    /// c_j = Σ_q w·φ_j(x_q)·g(x_q).
    pub fn project_grid(&self, grid: &[Vec3]) -> Vec<Vec3> {
        let mut coeffs = Vec::with_capacity(self.modes);
        for j in 0..self.modes {
            let mut c = vec3::ZERO;
            for (q, g) in grid.iter().enumerate() {
                c = vec3::axpy(c, self.phi[j][q], *g);
            }
            coeffs.push(vec3::scale(self.weight, c));
        }
        coeffs
    }

    /// Project a pointwise function of position.
    pub fn project<F: Fn(f64) -> Vec3>(&self, f: F) -> Vec<Vec3> {
        let grid: Vec<Vec3> = self.nodes.iter().map(|&x| f(x)).collect();
        self.project_grid(&grid)
    }

    /// Quadrature value of ‖∂_x m‖² for a coefficient vector.
    pub fn gradient_energy(&self, coeffs: &[Vec3]) -> f64 {
        self.evaluate_derivative(coeffs)
            .iter()
            .map(|d| vec3::norm_sq(*d))
            .sum::<f64>()
            * self.weight
    }
}

/// Mode coefficients at one instant; m(t, x) = Σ_j c_j(t)·φ_j(x).
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub time: f64,
    pub coeffs: Vec<Vec3>,
}

/// Time derivative of the coefficients under the truncated dynamics:
/// pointwise evaluation of β′Δm + β′|∂_x m|²m + α′ m×Δm + F(m, ∂_x m)
/// on the grid, projected back onto the basis.
pub fn spectral_rhs(
    coeffs: &[Vec3],
    basis: &SpectralBasis,
    model: &TorqueModel,
    alpha: f64,
    beta: f64,
) -> Vec<Vec3> {
    let denom = 1.0 + beta * beta;
    let alpha_p = alpha / denom;
    let beta_p = alpha * beta / denom;
    let m = basis.evaluate(coeffs);
    let dm = basis.evaluate_derivative(coeffs);
    let lap = basis.evaluate_laplacian(coeffs);
    let grid: Vec<Vec3> = (0..m.len())
        .map(|q| {
            let mut g = vec3::scale(beta_p, lap[q]);
            g = vec3::axpy(g, beta_p * vec3::norm_sq(dm[q]), m[q]);
            g = vec3::axpy(g, alpha_p, vec3::cross(m[q], lap[q]));
            let b: ElementGradient = [[dm[q][0], 0.0], [dm[q][1], 0.0], [dm[q][2], 0.0]];
            vec3::add(g, model.evaluate_split_form(m[q], &b, beta))
        })
        .collect();
    basis.project_grid(&grid)
}

fn coeffs_axpy(base: &[Vec3], scale: f64, dir: &[Vec3]) -> Vec<Vec3> {
    base.iter()
        .zip(dir)
        .map(|(b, d)| vec3::axpy(*b, scale, *d))
        .collect()
}

/// Integrate the truncated system with the classical 4-stage explicit
/// one-step method at step size k/substeps, recording a state per outer
/// step. Non-finite coefficients abort with the time reached.
pub fn integrate<F>(
    initial: F,
    basis: &SpectralBasis,
    model: &TorqueModel,
    config: &SolverConfig,
    substeps: usize,
) -> Result<Vec<SpectralState>>
where
    F: Fn(f64) -> Vec3,
{
    config.validate()?;
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    if model.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "the spectral solver is one-dimensional; torque model is {}-dimensional",
            model.dim()
        )));
    }
    let dt = config.time_step / substeps as f64;
    let mut coeffs = basis.project(&initial);
    let mut trajectory = Vec::with_capacity(config.steps + 1);
    trajectory.push(SpectralState {
        time: 0.0,
        coeffs: coeffs.clone(),
    });
    for step in 0..config.steps {
        for _ in 0..substeps {
            let k1 = spectral_rhs(&coeffs, basis, model, config.alpha, config.beta);
            let k2 = spectral_rhs(
                &coeffs_axpy(&coeffs, 0.5 * dt, &k1),
                basis,
                model,
                config.alpha,
                config.beta,
            );
            let k3 = spectral_rhs(
                &coeffs_axpy(&coeffs, 0.5 * dt, &k2),
                basis,
                model,
                config.alpha,
                config.beta,
            );
            let k4 = spectral_rhs(
                &coeffs_axpy(&coeffs, dt, &k3),
                basis,
                model,
                config.alpha,
                config.beta,
            );
            for (j, c) in coeffs.iter_mut().enumerate() {
                let mut incr = k1[j];
                incr = vec3::axpy(incr, 2.0, k2[j]);
                incr = vec3::axpy(incr, 2.0, k3[j]);
                incr = vec3::axpy(incr, 1.0, k4[j]);
                *c = vec3::axpy(*c, dt / 6.0, incr);
            }
        }
        let time = (step + 1) as f64 * config.time_step;
        if coeffs
            .iter()
            .any(|c| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::SpectralBlowup {
                time,
                msg: "non-finite mode coefficients (instability or blow-up)".into(),
            });
        }
        trajectory.push(SpectralState {
            time,
            coeffs: coeffs.clone(),
        });
    }
    Ok(trajectory)
}

fn find_time<'a, T>(items: &'a [T], time_of: impl Fn(&T) -> f64, t: f64) -> Result<&'a T> {
    items
        .iter()
        .find(|s| (time_of(s) - t).abs() <= TIME_MATCH_TOL)
        .ok_or_else(|| Error::InvalidArgument(format!("time {t} not present in trajectory")))
}

/// Largest L² difference, over the requested times, between the spectral
/// solution and the piecewise-linear interpolant of nodal snapshots,
/// both evaluated on the quadrature grid.
pub fn compare_to_fem(
    trajectory: &[SpectralState],
    basis: &SpectralBasis,
    mesh: &crate::mesh::Mesh,
    snapshots: &[StateSnapshot],
    times: &[f64],
) -> Result<f64> {
    if mesh.dimension() != 1 {
        return Err(Error::InvalidArgument(
            "spectral comparison requires a 1D mesh".into(),
        ));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("no comparison times given".into()));
    }
    // sorted node order for interval lookup
    let mut order: Vec<usize> = (0..mesh.num_nodes()).collect();
    order.sort_by(|&a, &b| mesh.node(a)[0].total_cmp(&mesh.node(b)[0]));
    let xs: Vec<f64> = order.iter().map(|&i| mesh.node(i)[0]).collect();
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if lo.abs() > 1e-10 || (hi - basis.length()).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "mesh covers [{lo}, {hi}] but the basis interval is [0, {}]",
            basis.length()
        )));
    }
    let mut worst = 0.0f64;
    for &t in times {
        let spec = find_time(trajectory, |s| s.time, t)?;
        let snap = find_time(snapshots, |s| s.time, t)?;
        let spectral_grid = basis.evaluate(&spec.coeffs);
        let mut diff_sq = 0.0;
        for (q, &x) in basis.quad_nodes().iter().enumerate() {
            // locate the interval containing x and interpolate linearly
            let idx = xs.partition_point(|&xi| xi <= x).clamp(1, xs.len() - 1);
            let (xa, xb) = (xs[idx - 1], xs[idx]);
            let s = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
            let va = snap.m.value(order[idx - 1]);
            let vb = snap.m.value(order[idx]);
            let fem = vec3::axpy(va, s, vec3::sub(vb, va));
            diff_sq += vec3::norm_sq(vec3::sub(spectral_grid[q], fem));
        }
        worst = worst.max((diff_sq * basis.quad_weight()).sqrt());
    }
    Ok(worst)
}

/// Dump a trajectory as CSV rows `t,mode,cx,cy,cz`.
pub fn write_trajectory_csv(trajectory: &[SpectralState], path: &Path) -> Result<()> {
    let mut out = String::from("t,mode,cx,cy,cz\n");
    for state in trajectory {
        for (j, c) in state.coeffs.iter().enumerate() {
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{:.16e}\n",
                state.time, j, c[0], c[1], c[2]
            ));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured, DiagonalRule};
    use crate::stepper::{rotation_initial, run};
    use crate::torque::{make_stt, make_zero, SttParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle_config(steps: usize, time_step: f64) -> SolverConfig {
        SolverConfig {
            alpha: 1.0,
            beta: 1.0,
            theta: 0.75,
            theta_override: false,
            time_step,
            steps,
            snapshot_interval: 1,
            solver_tol: 1e-12,
            solver_max_iter: None,
        }
    }

    #[test]
    fn basis_is_orthonormal_under_quadrature() {
        let basis = SpectralBasis::new(1.0, 16, 128).unwrap();
        assert!(basis.gram_deviation() <= 1e-12);
        let coarse = SpectralBasis::new(2.5, 8, 64).unwrap();
        assert!(coarse.gram_deviation() <= 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        let basis = SpectralBasis::new(1.0, 12, 96).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<Vec3> = (0..12)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let once = basis.project_grid(&basis.evaluate(&coeffs));
        let twice = basis.project_grid(&basis.evaluate(&once));
        for (a, b) in coeffs.iter().zip(&once) {
            assert!(vec3::norm(vec3::sub(*a, *b)) < 1e-12);
        }
        for (a, b) in once.iter().zip(&twice) {
            assert!(vec3::norm(vec3::sub(*a, *b)) < 1e-12);
        }
    }

    #[test]
    fn constant_state_has_zero_derivative() {
        let basis = SpectralBasis::new(1.0, 8, 64).unwrap();
        let model = make_zero(1);
        let mut coeffs = vec![vec3::ZERO; 8];
        coeffs[0] = [0.3, -0.4, 0.5];
        let rhs = spectral_rhs(&coeffs, &basis, &model, 1.0, 1.0);
        for c in &rhs {
            assert!(vec3::norm(*c) < 1e-13);
        }
    }

    #[test]
    fn single_small_mode_matches_linearization() {
        // m = ε·φ_1·x̂: the cross and cubic terms vanish or are O(ε³),
        // leaving ∂_t c_1 ≈ −β′λ_1·ε with λ_1 = π²
        let basis = SpectralBasis::new(1.0, 8, 64).unwrap();
        let model = make_zero(1);
        let eps = 1e-4;
        let mut coeffs = vec![vec3::ZERO; 8];
        coeffs[1] = [eps, 0.0, 0.0];
        let rhs = spectral_rhs(&coeffs, &basis, &model, 1.0, 1.0);
        let expected = -0.5 * basis.eigenvalue(1) * eps;
        assert!((rhs[1][0] - expected).abs() <= 1e-9);
        for (j, c) in rhs.iter().enumerate() {
            if j != 1 {
                assert!(vec3::norm(*c) <= 1e-9);
            }
        }
    }

    #[test]
    fn constant_initial_data_stays_constant() {
        let basis = SpectralBasis::new(1.0, 8, 64).unwrap();
        let model = make_zero(1);
        let trajectory =
            integrate(|_| [0.0, 0.0, 1.0], &basis, &model, &oracle_config(10, 0.01), 2).unwrap();
        assert_eq!(trajectory.len(), 11);
        for state in &trajectory {
            assert!(vec3::norm(vec3::sub(state.coeffs[0], [0.0, 0.0, 1.0])) < 1e-12);
            for c in &state.coeffs[1..] {
                assert!(vec3::norm(*c) < 1e-12);
            }
        }
    }

    #[test]
    fn unit_norm_drift_and_energy_decay_stay_small() {
        // zero-torque reference run to t = 0.5: the constraint |m| = 1
        // is only approximate at finite mode count; measure the drift
        // and the monotonicity of the gradient energy
        let basis = SpectralBasis::new(1.0, 32, 512).unwrap();
        let model = make_zero(1);
        let trajectory = integrate(
            |x| rotation_initial(&[x]),
            &basis,
            &model,
            &oracle_config(200, 2.5e-3),
            8,
        )
        .unwrap();
        let mut drift = 0.0f64;
        for state in &trajectory {
            for m in basis.evaluate(&state.coeffs) {
                drift = drift.max((vec3::norm(m) - 1.0).abs());
            }
        }
        assert!(drift <= 1e-3, "unit-norm drift {drift:.3e}");
        for pair in trajectory.windows(2) {
            let e0 = basis.gradient_energy(&pair[0].coeffs);
            let e1 = basis.gradient_energy(&pair[1].coeffs);
            assert!(e1 <= e0 + 1e-6 * (pair[1].time - pair[0].time));
        }
    }

    #[test]
    fn halving_the_substep_barely_changes_the_result() {
        let basis = SpectralBasis::new(1.0, 16, 128).unwrap();
        let model = make_stt(SttParams {
            lambda: 1.0,
            mu: 1.0,
            j: vec![1.0],
        })
        .unwrap();
        let config = oracle_config(40, 2.5e-3);
        let a = integrate(|x| rotation_initial(&[x]), &basis, &model, &config, 4).unwrap();
        let b = integrate(|x| rotation_initial(&[x]), &basis, &model, &config, 8).unwrap();
        let fa = &a.last().unwrap().coeffs;
        let fb = &b.last().unwrap().coeffs;
        let scale: f64 = fa.iter().map(|c| vec3::norm_sq(*c)).sum::<f64>().sqrt();
        let diff: f64 = fa
            .iter()
            .zip(fb)
            .map(|(x, y)| vec3::norm_sq(vec3::sub(*x, *y)))
            .sum::<f64>()
            .sqrt();
        assert!(diff / scale <= 1e-6, "relative change {:.3e}", diff / scale);
    }

    #[test]
    fn unstable_step_size_is_reported_as_blowup() {
        let basis = SpectralBasis::new(1.0, 8, 64).unwrap();
        let model = make_zero(1);
        let r = integrate(
            |x| rotation_initial(&[x]),
            &basis,
            &model,
            &oracle_config(20, 1.0),
            1,
        );
        match r {
            Err(Error::SpectralBlowup { time, .. }) => assert!(time > 0.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn comparison_of_identical_constant_solutions_is_zero() {
        let basis = SpectralBasis::new(1.0, 8, 64).unwrap();
        let mesh = generate_structured(&[[0.0, 1.0]], &[8], DiagonalRule::Fixed).unwrap();
        let model = make_zero(1);
        let config = oracle_config(4, 0.01);
        let trajectory = integrate(|_| [0.0, 0.0, 1.0], &basis, &model, &config, 2).unwrap();
        let fem = run(&mesh, &config, &model, |_| [0.0, 0.0, 1.0]).unwrap();
        let d = compare_to_fem(&trajectory, &basis, &mesh, &fem.snapshots, &[0.0, 0.02, 0.04])
            .unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn comparison_rejects_uncovered_times() {
        let basis = SpectralBasis::new(1.0, 8, 64).unwrap();
        let mesh = generate_structured(&[[0.0, 1.0]], &[8], DiagonalRule::Fixed).unwrap();
        let model = make_zero(1);
        let config = oracle_config(4, 0.01);
        let trajectory = integrate(|_| [0.0, 0.0, 1.0], &basis, &model, &config, 2).unwrap();
        let fem = run(&mesh, &config, &model, |_| [0.0, 0.0, 1.0]).unwrap();
        let r = compare_to_fem(&trajectory, &basis, &mesh, &fem.snapshots, &[0.3]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn finer_fem_discretization_tracks_the_oracle_better() {
        let basis = SpectralBasis::new(1.0, 16, 256).unwrap();
        let model = make_zero(1);
        let reference = integrate(
            |x| rotation_initial(&[x]),
            &basis,
            &model,
            &oracle_config(10, 0.01),
            8,
        )
        .unwrap();
        let times = [0.05, 0.1];
        let mut errors = Vec::new();
        for (n, steps, k, interval) in [(16usize, 10usize, 0.01, 5usize), (32, 20, 0.005, 10)] {
            let mesh = generate_structured(&[[0.0, 1.0]], &[n], DiagonalRule::Fixed).unwrap();
            let mut config = oracle_config(steps, k);
            config.snapshot_interval = interval;
            let fem = run(&mesh, &config, &model, rotation_initial).unwrap();
            errors.push(
                compare_to_fem(&reference, &basis, &mesh, &fem.snapshots, &times).unwrap(),
            );
        }
        assert!(
            errors[1] < errors[0],
            "refinement did not reduce the oracle gap: {errors:?}"
        );
    }

    #[test]
    fn trajectory_csv_has_one_row_per_mode_per_state() {
        let basis = SpectralBasis::new(1.0, 4, 32).unwrap();
        let model = make_zero(1);
        let trajectory =
            integrate(|_| [0.0, 0.0, 1.0], &basis, &model, &oracle_config(3, 0.01), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&trajectory, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,mode,cx,cy,cz");
        assert_eq!(lines.count(), 4 * 4);
    }
}
