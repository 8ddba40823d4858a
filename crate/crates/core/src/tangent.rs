//! Per-node tangent frames and the reduced linear system of one
//! implicit tangent-plane step.
//!
//! The update `v` lives in the discrete tangent space `v(x_n) · m_n = 0`,
//! so each node carries two scalar unknowns: the coordinates of `v_n` in
//! an orthonormal basis `(t1_n, t2_n)` of the plane normal to `m_n`. The
//! assembled system is 2N×2N, positive definite (its symmetric part is
//! the lumped mass plus a scaled stiffness), and solved with GMRES.

use crate::fem::element_gradient;
use crate::field::NodalVectorField;
use crate::mesh::Mesh;
use crate::sparse::{gmres, CooBuilder, CsrMatrix};
use crate::torque::TorqueModel;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Reuse a projected previous tangent vector only if its length is at
/// least this; likewise for the fallback axis cross products.
const FRAME_THRESHOLD: f64 = 0.1;

/// Nodal magnetization values must be unit vectors to within this before
/// a frame or a step system can be built from them.
const UNIT_NORM_TOL: f64 = 1e-8;

/// GMRES restart length for step systems.
const RESTART: usize = 50;

/// An orthonormal basis pair (t1, t2) of the tangent plane at every node,
/// oriented so that t1 × t2 equals the magnetization.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pairs: Vec<[Vec3; 2]>,
}

impl TangentFrame {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The pair (t1, t2) at one node.
    pub fn pair(&self, node: usize) -> [Vec3; 2] {
        self.pairs[node]
    }

    pub fn from_pairs(pairs: Vec<[Vec3; 2]>) -> Self {
        TangentFrame { pairs }
    }
}

fn axis_tangent(m: Vec3) -> Vec3 {
    // For a unit m at most one of ẑ×m, ŷ×m can be short: |ẑ×m| < 0.1
    // forces |m_z| > 0.99, which makes |ŷ×m| ≥ |m_z| > 0.9.
    for axis in [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]] {
        let c = vec3::cross(axis, m);
        let n = vec3::norm(c);
        if n >= FRAME_THRESHOLD {
            return vec3::scale(1.0 / n, c);
        }
    }
    unreachable!("a unit vector cannot be nearly parallel to two coordinate axes")
}

/// Build an orthonormal tangent frame over a unit-length nodal field.
///
/// With `previous` given, each node first tries to continue the previous
/// t1 by projecting it onto the new tangent plane; nodes where that
/// projection is too short (or without `previous`) fall back to a fixed
/// axis rule. Either way the result is an exactly orthonormal pair with
/// t1 × t2 = m.
pub fn build_frame(
    m: &NodalVectorField,
    previous: Option<&TangentFrame>,
) -> Result<TangentFrame> {
    if let Some(prev) = previous {
        if prev.len() != m.len() {
            return Err(Error::InvalidArgument(format!(
                "previous frame has {} nodes, field has {}",
                prev.len(),
                m.len()
            )));
        }
    }
    let mut pairs = Vec::with_capacity(m.len());
    for (n, &mn) in m.values().iter().enumerate() {
        let norm = vec3::norm(mn);
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "node {n} has |m| = {norm:.12}, expected a unit vector"
            )));
        }
        let continued = previous.and_then(|prev| {
            let old = prev.pairs[n][0];
            let proj = vec3::axpy(old, -vec3::dot(old, mn), mn);
            let len = vec3::norm(proj);
            (len >= FRAME_THRESHOLD).then(|| vec3::scale(1.0 / len, proj))
        });
        let t1 = continued.unwrap_or_else(|| axis_tangent(mn));
        let t2 = vec3::cross(mn, t1);
        pairs.push([t1, t2]);
    }
    Ok(TangentFrame { pairs })
}

/// The assembled 2N×2N system of one implicit step, together with the
/// frame that defines its unknowns.
pub struct ReducedSystem {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    frame: TangentFrame,
    beta: f64,
    alpha_theta_k: f64,
}

impl ReducedSystem {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn frame(&self) -> &TangentFrame {
        &self.frame
    }

    /// Number of scalar unknowns (twice the node count).
    pub fn unknowns(&self) -> usize {
        self.rhs.len()
    }

    /// Expand reduced coordinates into a nodal vector field.
    pub fn reconstruct(&self, coeffs: &[f64]) -> NodalVectorField {
        let values = self
            .frame
            .pairs
            .iter()
            .enumerate()
            .map(|(n, [t1, t2])| {
                vec3::add(
                    vec3::scale(coeffs[2 * n], *t1),
                    vec3::scale(coeffs[2 * n + 1], *t2),
                )
            })
            .collect();
        NodalVectorField::from_values(values)
    }

    /// Residual of the quadratic-form identity
    /// x·Ax = β‖v‖²_lumped + αθk‖∇v‖², where v is the expansion of x.
    /// The skew (precession) block drops out of x·Ax, so this should
    /// vanish to rounding for every x; a nonzero value indicates an
    /// assembly error.
    pub fn coercivity_identity(
        &self,
        coeffs: &[f64],
        stiffness: &CsrMatrix,
        lumped_mass: &[f64],
    ) -> f64 {
        let n = self.frame.len();
        let mut ax = vec![0.0; 2 * n];
        self.matrix.mul_vec(coeffs, &mut ax);
        let xax: f64 = coeffs.iter().zip(&ax).map(|(x, y)| x * y).sum();
        let v = self.reconstruct(coeffs);
        let mass: f64 = lumped_mass
            .iter()
            .zip(v.values())
            .map(|(w, vn)| w * vec3::norm_sq(*vn))
            .sum();
        let mut grad = 0.0;
        let mut comp = vec![0.0; n];
        for r in 0..3 {
            for (i, c) in comp.iter_mut().enumerate() {
                *c = v.value(i)[r];
            }
            grad += stiffness.quadratic_form(&comp);
        }
        xax - (self.beta * mass + self.alpha_theta_k * grad)
    }
}

/// Assemble the reduced system of one implicit step at state `m`.
///
/// Row pair (2n, 2n+1) discretizes, against test functions t1_n φ_n and
/// t2_n φ_n with lumped mass quadrature,
///   β(v, ψ) − (m×v, ψ) + αθk(∇v, ∇ψ) = −α(∇m, ∇ψ) − (m×f(m,∇m), ψ).
#[allow(clippy::too_many_arguments)]
pub fn assemble_step_system(
    mesh: &Mesh,
    stiffness: &CsrMatrix,
    lumped_mass: &[f64],
    m: &NodalVectorField,
    frame: TangentFrame,
    model: &TorqueModel,
    alpha: f64,
    beta: f64,
    theta: f64,
    k: f64,
) -> Result<ReducedSystem> {
    let n = mesh.num_nodes();
    if m.len() != n || frame.len() != n || stiffness.n() != n || lumped_mass.len() != n {
        return Err(Error::InvalidArgument(format!(
            "mesh has {n} nodes but field/frame/stiffness/mass have sizes {}/{}/{}/{}",
            m.len(),
            frame.len(),
            stiffness.n(),
            lumped_mass.len()
        )));
    }
    if model.dim() != mesh.dimension() {
        return Err(Error::InvalidArgument(format!(
            "torque model is {}-dimensional, mesh is {}-dimensional",
            model.dim(),
            mesh.dimension()
        )));
    }
    if !(alpha > 0.0 && beta > 0.0 && k > 0.0) || !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "parameters out of range: alpha = {alpha}, beta = {beta}, theta = {theta}, k = {k}"
        )));
    }
    if m.max_norm_deviation() > UNIT_NORM_TOL {
        return Err(Error::InvalidArgument(
            "magnetization must have unit nodal values".into(),
        ));
    }

    let atk = alpha * theta * k;
    let mut coo = CooBuilder::new(2 * n);

    // Lumped mass and precession blocks: β w_n I + w_n S per node, with
    // S the 2×2 rotation generator in the (t1, t2) coordinates.
    for (p, &w) in lumped_mass.iter().enumerate() {
        coo.add(2 * p, 2 * p, beta * w);
        coo.add(2 * p + 1, 2 * p + 1, beta * w);
        coo.add(2 * p, 2 * p + 1, w);
        coo.add(2 * p + 1, 2 * p, -w);
    }

    // Stiffness blocks: αθk K_nc · (t_i^n · t_j^c).
    for p in 0..n {
        let [t1p, t2p] = frame.pairs[p];
        for (c, k_pc) in stiffness.row(p) {
            let [t1c, t2c] = frame.pairs[c];
            let scale = atk * k_pc;
            coo.add(2 * p, 2 * c, scale * vec3::dot(t1p, t1c));
            coo.add(2 * p, 2 * c + 1, scale * vec3::dot(t1p, t2c));
            coo.add(2 * p + 1, 2 * c, scale * vec3::dot(t2p, t1c));
            coo.add(2 * p + 1, 2 * c + 1, scale * vec3::dot(t2p, t2c));
        }
    }

    // Torque load (m × f, ψ) with element-wise vertex quadrature: each
    // element contributes |e|/(d+1) times its vertex values, with the
    // gradient argument constant per element.
    let vertices_per_element = mesh.dimension() + 1;
    let mut load = vec![vec3::ZERO; n];
    for e in 0..mesh.num_elements() {
        let grad = element_gradient(mesh, m, e)?;
        let factor = mesh.element_measure(e) / vertices_per_element as f64;
        for &v in mesh.element(e) {
            let f = model.evaluate(m.value(v), &grad);
            load[v] = vec3::axpy(load[v], factor, vec3::cross(m.value(v), f));
        }
    }

    // Right-hand side: −α(∇m, ∇ψ) − (m×f, ψ), projected on the frame.
    let mut rhs = vec![0.0; 2 * n];
    for p in 0..n {
        let mut s = vec3::ZERO;
        for (c, k_pc) in stiffness.row(p) {
            s = vec3::axpy(s, k_pc, m.value(c));
        }
        let [t1, t2] = frame.pairs[p];
        rhs[2 * p] = -alpha * vec3::dot(s, t1) - vec3::dot(load[p], t1);
        rhs[2 * p + 1] = -alpha * vec3::dot(s, t2) - vec3::dot(load[p], t2);
    }

    Ok(ReducedSystem {
        matrix: coo.build(),
        rhs,
        frame,
        beta,
        alpha_theta_k: atk,
    })
}

/// The solved tangent update of one step.
pub struct TangentUpdate {
    /// Reduced coordinates, two per node.
    pub coefficients: Vec<f64>,
    /// The update expanded to nodal vectors; tangent to m by construction.
    pub v: NodalVectorField,
    /// GMRES iterations used.
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

/// Solve the reduced system with restarted, Jacobi-preconditioned GMRES.
pub fn solve_step(system: &ReducedSystem, tol: f64, max_iter: usize) -> Result<TangentUpdate> {
    let stats = gmres(&system.matrix, &system.rhs, tol, max_iter, RESTART)?;
    let v = system.reconstruct(&stats.x);
    Ok(TangentUpdate {
        coefficients: stats.x,
        v,
        iterations: stats.iters,
        residual: stats.residual,
    })
}
