//! Time integration: the projection-free tangent-plane θ-scheme.
//!
//! Each step solves the implicit tangent-space system at the current
//! magnetization, advances `m ← (m + k·v)/|m + k·v|` nodewise, and
//! records an energy/diagnostics trace. The scheme is unconditionally
//! stable for θ in (1/2, 1]: on meshes whose stiffness off-diagonals are
//! non-positive the exchange energy decreases at every zero-torque step,
//! which the trace makes checkable after the fact.

use std::io::Write as IoWrite;
use std::path::Path;

use crate::fem::{
    assemble_mass_lumped, assemble_stiffness, element_gradient, exchange_energy,
    gradient_norm_sq, interpolate,
};
use crate::field::NodalVectorField;
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;
use crate::tangent::{assemble_step_system, build_frame, solve_step, TangentFrame};
use crate::torque::TorqueModel;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Max allowed deviation of interpolated initial nodal values from unit
/// length; smaller deviations are removed by exact renormalization.
const INITIAL_UNIT_TOL: f64 = 1e-8;

/// Hard bound on the nodal identity |m + k·v|² = 1 + k²|v|²; a larger
/// deviation means v was not tangent and the step must not proceed.
const PYTHAGORAS_TOL: f64 = 1e-10;

/// Scheme and solver parameters of one run.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Implicitness weight; (1/2, 1] unless `theta_override`.
    pub theta: f64,
    /// Permit θ in (0, 1] even though stability is only proven above 1/2.
    pub theta_override: bool,
    /// Time-step size k.
    pub time_step: f64,
    /// Number of steps J; the horizon is T = J·k.
    pub steps: usize,
    /// Record a state snapshot every this many steps (≥ 1).
    pub snapshot_interval: usize,
    /// Relative residual target of the inner linear solves.
    pub solver_tol: f64,
    /// Iteration budget per solve; `None` picks 10× the unknown count.
    pub solver_max_iter: Option<usize>,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(Error::Config(format!(
                "time step must be positive, got {}",
                self.time_step
            )));
        }
        if self.theta_override {
            if !(self.theta > 0.0 && self.theta <= 1.0) {
                return Err(Error::Config(format!(
                    "theta = {} outside (0, 1]",
                    self.theta
                )));
            }
        } else if !(self.theta > 0.5 && self.theta <= 1.0) {
            return Err(Error::Config(format!(
                "theta = {} outside the stable range (1/2, 1]; set theta_override to allow (0, 1]",
                self.theta
            )));
        }
        if self.snapshot_interval == 0 {
            return Err(Error::Config("snapshot interval must be at least 1".into()));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol.is_finite()) {
            return Err(Error::Config(format!(
                "solver tolerance must be positive, got {}",
                self.solver_tol
            )));
        }
        Ok(())
    }
}

/// One row of the energy trace. Row j holds the state energy of m^j and
/// the update statistics of the solve performed at step j; the final row
/// J has zero update statistics.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    /// ‖∇m^j‖².
    pub exchange_energy: f64,
    /// Lumped ‖v^j‖².
    pub v_l2_lumped: f64,
    /// ‖∇v^j‖².
    pub v_h1: f64,
    /// max_n ||m^j_n| − 1|.
    pub max_norm_err: f64,
    /// max_n |v^j_n · m^j_n|.
    pub max_tangency: f64,
    /// ‖∇m^j‖² + Σ_{i<j} k‖v^i‖² + k²(2θ−1)·Σ_{i<j} ‖∇v^i‖².
    pub bound_ej: f64,
    pub solver_iters: usize,
}

/// Energy/diagnostics trace of a run: one row per step plus a final row.
#[derive(Debug, Clone, Default)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
}

impl EnergyTrace {
    /// All entries finite and times strictly increasing.
    pub fn validate(&self) -> Result<()> {
        for pair in self.rows.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(Error::Invariant(format!(
                    "trace times not increasing at step {}",
                    pair[1].step
                )));
            }
        }
        for row in &self.rows {
            let entries = [
                row.time,
                row.exchange_energy,
                row.v_l2_lumped,
                row.v_h1,
                row.max_norm_err,
                row.max_tangency,
                row.bound_ej,
            ];
            if entries.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!(
                    "non-finite trace entry at step {}",
                    row.step
                )));
            }
        }
        Ok(())
    }

    /// Worst violation of the per-step decay inequality
    /// ‖∇m^{j+1}‖² + (2θ−1)k²‖∇v^j‖² + (2β/α)k‖v^j‖² ≤ ‖∇m^j‖²,
    /// as a signed excess (≤ 0 means the inequality held everywhere).
    pub fn max_decay_violation(&self, alpha: f64, beta: f64, theta: f64, k: f64) -> f64 {
        self.rows
            .windows(2)
            .map(|pair| {
                pair[1].exchange_energy
                    + (2.0 * theta - 1.0) * k * k * pair[0].v_h1
                    + (2.0 * beta / alpha) * k * pair[0].v_l2_lumped
                    - pair[0].exchange_energy
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest increase of the bounded quantity E_j between consecutive
    /// steps (≤ 0 means E_j was non-increasing).
    pub fn max_bound_growth(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|pair| pair[1].bound_ej - pair[0].bound_ej)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "step,time,exchange_energy,v_l2_lumped,v_h1,max_norm_err,max_tangency,bound_Ej,solver_iters\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.step,
                r.time,
                r.exchange_energy,
                r.v_l2_lumped,
                r.v_h1,
                r.max_norm_err,
                r.max_tangency,
                r.bound_ej,
                r.solver_iters
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// The magnetization and its tangent update at one recorded step.
#[derive(Debug, Clone)]
pub struct StateSnapshot {
    pub step: usize,
    pub time: f64,
    pub m: NodalVectorField,
    pub v: NodalVectorField,
}

/// Diagnostics of a single completed step.
pub struct StepDiagnostics {
    /// The tangent update solved at this step.
    pub v: NodalVectorField,
    pub solver_iters: usize,
    pub solver_residual: f64,
    /// Worst nodal deviation from |m + k·v|² = 1 + k²|v|².
    pub pythagoras_err: f64,
}

/// Driver of the θ-scheme over one mesh. Owns the assembled operators,
/// the current state, and the trace; `advance` performs one step.
pub struct Stepper<'a> {
    mesh: &'a Mesh,
    model: &'a TorqueModel,
    config: SolverConfig,
    stiffness: CsrMatrix,
    lumped_mass: Vec<f64>,
    m: NodalVectorField,
    frame: Option<TangentFrame>,
    step_index: usize,
    sum_k_v_l2: f64,
    sum_v_h1: f64,
    trace: EnergyTrace,
}

impl<'a> Stepper<'a> {
    /// Interpolate the initial data (must be unit length at nodes to
    /// within 1e-8; renormalized exactly) and assemble the operators.
    pub fn new<F>(
        mesh: &'a Mesh,
        model: &'a TorqueModel,
        config: SolverConfig,
        initial: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec3,
    {
        Stepper::from_field(mesh, model, config, interpolate(&initial, mesh))
    }

    /// Start from explicit nodal values instead of a closed-form
    /// function (e.g. a stored snapshot).
    pub fn from_field(
        mesh: &'a Mesh,
        model: &'a TorqueModel,
        config: SolverConfig,
        raw: NodalVectorField,
    ) -> Result<Self> {
        config.validate()?;
        if model.dim() != mesh.dimension() {
            return Err(Error::InvalidArgument(format!(
                "torque model is {}-dimensional, mesh is {}-dimensional",
                model.dim(),
                mesh.dimension()
            )));
        }
        if raw.len() != mesh.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "initial field has {} values for a mesh with {} nodes",
                raw.len(),
                mesh.num_nodes()
            )));
        }
        let deviation = raw.max_norm_deviation();
        if deviation > INITIAL_UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "initial data deviates from unit length by {deviation:.3e} at some node \
                 (tolerance {INITIAL_UNIT_TOL:.0e})"
            )));
        }
        let m = raw.normalize_nodal()?;
        let stiffness = assemble_stiffness(mesh)?;
        let lumped_mass = assemble_mass_lumped(mesh)?;
        Ok(Stepper {
            mesh,
            model,
            config,
            stiffness,
            lumped_mass,
            m,
            frame: None,
            step_index: 0,
            sum_k_v_l2: 0.0,
            sum_v_h1: 0.0,
            trace: EnergyTrace::default(),
        })
    }

    pub fn m(&self) -> &NodalVectorField {
        &self.m
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Trace so far (partial until `finish`); preserved across a failed
    /// `advance`, so callers can report what happened before an abort.
    pub fn trace(&self) -> &EnergyTrace {
        &self.trace
    }

    /// Solve the tangent system at the current state, record the trace
    /// row, and advance the magnetization by the normalized update.
    pub fn advance(&mut self) -> Result<StepDiagnostics> {
        let k = self.config.time_step;
        let j = self.step_index;
        let energy = exchange_energy(&self.m, &self.stiffness)?;
        let frame = build_frame(&self.m, self.frame.as_ref())?;
        let system = assemble_step_system(
            self.mesh,
            &self.stiffness,
            &self.lumped_mass,
            &self.m,
            frame,
            self.model,
            self.config.alpha,
            self.config.beta,
            self.config.theta,
            k,
        )?;
        let max_iter = self
            .config
            .solver_max_iter
            .unwrap_or(10 * system.unknowns());
        let update = solve_step(&system, self.config.solver_tol, max_iter)?;

        let v_l2_lumped: f64 = self
            .lumped_mass
            .iter()
            .zip(update.v.values())
            .map(|(w, v)| w * vec3::norm_sq(*v))
            .sum();
        let v_h1 = {
            let mut total = 0.0;
            let mut comp = vec![0.0; self.m.len()];
            for r in 0..3 {
                for (i, c) in comp.iter_mut().enumerate() {
                    *c = update.v.value(i)[r];
                }
                total += self.stiffness.quadratic_form(&comp);
            }
            total
        };
        let max_tangency = update
            .v
            .values()
            .iter()
            .zip(self.m.values())
            .map(|(v, m)| vec3::dot(*v, *m).abs())
            .fold(0.0f64, f64::max);
        self.trace.rows.push(TraceRow {
            step: j,
            time: j as f64 * k,
            exchange_energy: energy,
            v_l2_lumped,
            v_h1,
            max_norm_err: self.m.max_norm_deviation(),
            max_tangency,
            bound_ej: energy
                + self.sum_k_v_l2
                + k * k * (2.0 * self.config.theta - 1.0) * self.sum_v_h1,
            solver_iters: update.iterations,
        });
        self.sum_k_v_l2 += k * v_l2_lumped;
        self.sum_v_h1 += v_h1;

        // Step 3: nodal update and exact renormalization. Tangency makes
        // the pre-normalization norm √(1 + k²|v_n|²) ≥ 1, so the division
        // is always safe; verify that identity before dividing.
        let mut pythagoras_err = 0.0f64;
        let mut next = Vec::with_capacity(self.m.len());
        for (mn, vn) in self.m.values().iter().zip(update.v.values()) {
            let pre = vec3::axpy(*mn, k, *vn);
            let expected = 1.0 + k * k * vec3::norm_sq(*vn);
            pythagoras_err = pythagoras_err.max((vec3::norm_sq(pre) - expected).abs());
            next.push(pre);
        }
        if pythagoras_err > PYTHAGORAS_TOL {
            return Err(Error::Invariant(format!(
                "nodal update is not tangent: |m + k·v|² deviates from 1 + k²|v|² by {pythagoras_err:.3e}"
            )));
        }
        self.m = NodalVectorField::from_values(next).normalize_nodal()?;
        self.frame = Some(system.frame().clone());
        self.step_index += 1;
        Ok(StepDiagnostics {
            v: update.v,
            solver_iters: update.iterations,
            solver_residual: update.residual,
            pythagoras_err,
        })
    }

    /// Append the final trace row and hand back the state and trace.
    pub fn finish(mut self) -> Result<(NodalVectorField, EnergyTrace)> {
        let k = self.config.time_step;
        let j = self.step_index;
        let energy = exchange_energy(&self.m, &self.stiffness)?;
        self.trace.rows.push(TraceRow {
            step: j,
            time: j as f64 * k,
            exchange_energy: energy,
            v_l2_lumped: 0.0,
            v_h1: 0.0,
            max_norm_err: self.m.max_norm_deviation(),
            max_tangency: 0.0,
            bound_ej: energy
                + self.sum_k_v_l2
                + k * k * (2.0 * self.config.theta - 1.0) * self.sum_v_h1,
            solver_iters: 0,
        });
        self.trace.validate()?;
        Ok((self.m, self.trace))
    }
}

/// Everything a completed run produces.
pub struct RunResult {
    pub m: NodalVectorField,
    pub trace: EnergyTrace,
    pub snapshots: Vec<StateSnapshot>,
    /// Worst per-step deviation from the tangency Pythagoras identity.
    pub max_pythagoras_err: f64,
}

/// Run the full scheme: interpolate, then `steps` implicit updates,
/// recording snapshots at the configured cadence plus the final state.
/// Deterministic for fixed inputs.
pub fn run<F>(
    mesh: &Mesh,
    config: &SolverConfig,
    model: &TorqueModel,
    initial: F,
) -> Result<RunResult>
where
    F: Fn(&[f64]) -> Vec3,
{
    let mut stepper = Stepper::new(mesh, model, config.clone(), initial)?;
    let mut snapshots = Vec::new();
    let mut max_pythagoras_err = 0.0f64;
    for j in 0..config.steps {
        let recorded = j % config.snapshot_interval == 0;
        let m_before = recorded.then(|| stepper.m().clone());
        let diag = stepper.advance()?;
        max_pythagoras_err = max_pythagoras_err.max(diag.pythagoras_err);
        if let Some(m) = m_before {
            snapshots.push(StateSnapshot {
                step: j,
                time: j as f64 * config.time_step,
                m,
                v: diag.v,
            });
        }
    }
    let (m, trace) = stepper.finish()?;
    snapshots.push(StateSnapshot {
        step: config.steps,
        time: config.steps as f64 * config.time_step,
        m: m.clone(),
        v: NodalVectorField::constant(m.len(), vec3::ZERO),
    });
    Ok(RunResult {
        m,
        trace,
        snapshots,
        max_pythagoras_err,
    })
}

/// Compactly supported skyrmion-like initial data on [−1/2, 1/2]²:
/// up at the center, down on the ring |x| = 1/4, in-plane radial on
/// |x| ≥ 1/2, with A = (1 − 4|x|)⁴ smoothing the joins.
pub fn skyrmion_initial(x: &[f64]) -> Vec3 {
    let r2 = x.iter().map(|c| c * c).sum::<f64>();
    let r = r2.sqrt();
    if r >= 0.5 {
        return [-x[0] / r, -x[1] / r, 0.0];
    }
    let a = (1.0 - 4.0 * r).powi(4);
    let denom = a * a + 4.0 * r2;
    let sign = if r < 0.25 { 4.0 } else { -4.0 };
    [
        sign * a * x[0] / denom,
        sign * a * x[1] / denom,
        (a * a - 4.0 * r2) / denom,
    ]
}

/// Smooth 1D initial data: a rotation in the xz-plane by the angle
/// profile θ(x) = (π/2)·cos(πx), unit length by construction.
pub fn rotation_initial(x: &[f64]) -> Vec3 {
    let angle = std::f64::consts::FRAC_PI_2 * (std::f64::consts::PI * x[0]).cos();
    [angle.sin(), 0.0, angle.cos()]
}

/// Space-time weak-form defect of a trajectory against one smooth test
/// function ψ (vanishing near the initial and final times):
/// the time integral (trapezoid over snapshots) of
/// |β(v,ψ) − (m×v,ψ) − α(|∇m|²m,ψ) + α(∇m,∇ψ) + (m×f(m,∇m),ψ)|
/// with lumped/vertex quadrature in space and ∂_t m replaced by v.
pub fn weak_residual<F>(
    mesh: &Mesh,
    snapshots: &[StateSnapshot],
    psi: F,
    alpha: f64,
    beta: f64,
    model: &TorqueModel,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Vec3,
{
    if snapshots.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "weak residual needs at least 2 snapshots, got {}",
            snapshots.len()
        )));
    }
    let n = mesh.num_nodes();
    let stiffness = assemble_stiffness(mesh)?;
    let lumped_mass = assemble_mass_lumped(mesh)?;
    let vertices_per_element = mesh.dimension() + 1;
    let mut defects = Vec::with_capacity(snapshots.len());
    let mut comp_m = vec![0.0; n];
    let mut comp_psi = vec![0.0; n];
    let mut k_psi = vec![0.0; n];
    for snap in snapshots {
        if snap.m.len() != n || snap.v.len() != n {
            return Err(Error::InvalidArgument(
                "snapshot size does not match mesh".into(),
            ));
        }
        let psi_nodes: Vec<Vec3> = (0..n).map(|i| psi(mesh.node(i), snap.time)).collect();
        let mut acc = 0.0;
        // lumped nodal terms: β v·ψ − (m×v)·ψ
        for (i, ((w, vn), mn)) in lumped_mass
            .iter()
            .zip(snap.v.values())
            .zip(snap.m.values())
            .enumerate()
        {
            let term = vec3::axpy(
                vec3::scale(beta, *vn),
                -1.0,
                vec3::cross(*mn, *vn),
            );
            acc += w * vec3::dot(term, psi_nodes[i]);
        }
        // element-wise vertex rule: −α|∇m|²(m·ψ) + (m×f)·ψ
        for e in 0..mesh.num_elements() {
            let grad = element_gradient(mesh, &snap.m, e)?;
            let gsq = gradient_norm_sq(&grad);
            let factor = mesh.element_measure(e) / vertices_per_element as f64;
            for &vtx in mesh.element(e) {
                let mv = snap.m.value(vtx);
                let pv = psi_nodes[vtx];
                acc -= factor * alpha * gsq * vec3::dot(mv, pv);
                acc += factor * vec3::dot(vec3::cross(mv, model.evaluate(mv, &grad)), pv);
            }
        }
        // stiffness term: +α Σ_r m_rᵀ K (I_h ψ)_r
        for r in 0..3 {
            for i in 0..n {
                comp_m[i] = snap.m.value(i)[r];
                comp_psi[i] = psi_nodes[i][r];
            }
            stiffness.mul_vec(&comp_psi, &mut k_psi);
            acc += alpha * comp_m.iter().zip(&k_psi).map(|(a, b)| a * b).sum::<f64>();
        }
        defects.push(acc.abs());
    }
    let mut total = 0.0;
    for (pair, d) in snapshots.windows(2).zip(defects.windows(2)) {
        total += 0.5 * (d[0] + d[1]) * (pair[1].time - pair[0].time);
    }
    Ok(total)
}
