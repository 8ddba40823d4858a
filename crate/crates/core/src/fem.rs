//! P1 finite element operators: stiffness, consistent and lumped mass,
//! nodal interpolation, elementwise gradients, and the exchange energy.
//!
//! Gradients of P1 fields are constant per element, so stiffness entries
//! are integrated exactly. Zeroth-order products in the time-stepping
//! scheme use the lumped (vertex-rule) mass; the consistent mass is also
//! assembled for diagnostics.

use crate::field::NodalVectorField;
use crate::mesh::Mesh;
use crate::sparse::{CooBuilder, CsrMatrix};
use crate::vec3::Vec3;
use crate::{Error, Result};

/// Constant gradient of a P1 vector field on one element: row r is the
/// spatial gradient of component r; only the first `mesh.dimension()`
/// columns are meaningful (the rest stay zero in 1D).
pub type ElementGradient = [[f64; 2]; 3];

/// Σ_r |∇(component r)|² for an element gradient.
pub fn gradient_norm_sq(g: &ElementGradient) -> f64 {
    g.iter().map(|row| row[0] * row[0] + row[1] * row[1]).sum()
}

/// Gradients of the barycentric (hat) basis functions on element `e`,
/// one row per vertex, and the element measure.
fn basis_gradients(mesh: &Mesh, e: usize) -> Result<(Vec<[f64; 2]>, f64)> {
    let el = mesh.element(e);
    match mesh.dimension() {
        1 => {
            let xa = mesh.node(el[0])[0];
            let xb = mesh.node(el[1])[0];
            let h = xb - xa;
            if h == 0.0 {
                return Err(Error::InvalidMesh(format!("element {e} has zero length")));
            }
            Ok((vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]], h.abs()))
        }
        _ => {
            let area = mesh.element_measure(e);
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "element {e} is degenerate (area {area:.3e})"
                )));
            }
            let mut grads = Vec::with_capacity(3);
            for v in 0..3 {
                let p1 = mesh.node(el[(v + 1) % 3]);
                let p2 = mesh.node(el[(v + 2) % 3]);
                // rotate the opposite edge by +90° and scale by 1/(2A)
                let edge = [p2[0] - p1[0], p2[1] - p1[1]];
                grads.push([-edge[1] / (2.0 * area), edge[0] / (2.0 * area)]);
            }
            Ok((grads, area))
        }
    }
}

/// K[n][m] = ∫ ∇φ_n · ∇φ_m. Symmetric, row sums zero.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    let mut builder = CooBuilder::new(mesh.num_nodes());
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let (grads, measure) = basis_gradients(mesh, e)?;
        for (i, &ni) in el.iter().enumerate() {
            for (j, &nj) in el.iter().enumerate() {
                let gij = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                builder.add(ni, nj, measure * gij);
            }
        }
    }
    Ok(builder.build())
}

/// M[n][m] = ∫ φ_n φ_m, exact on each element:
/// diagonal |e|·2/((d+1)(d+2)), off-diagonal |e|/((d+1)(d+2)).
pub fn assemble_mass_consistent(mesh: &Mesh) -> Result<CsrMatrix> {
    let d = mesh.dimension();
    let denom = ((d + 1) * (d + 2)) as f64;
    let mut builder = CooBuilder::new(mesh.num_nodes());
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let measure = mesh.element_measure(e);
        if measure <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "element {e} is degenerate (measure {measure:.3e})"
            )));
        }
        for (i, &ni) in el.iter().enumerate() {
            for (j, &nj) in el.iter().enumerate() {
                let factor = if i == j { 2.0 } else { 1.0 };
                builder.add(ni, nj, measure * factor / denom);
            }
        }
    }
    Ok(builder.build())
}

/// Vertex-rule (lumped) mass: w_n = Σ_{e ∋ n} |e|/(d+1). Positive, sums to
/// the domain measure.
pub fn assemble_mass_lumped(mesh: &Mesh) -> Result<Vec<f64>> {
    let share = (mesh.dimension() + 1) as f64;
    let mut w = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let measure = mesh.element_measure(e);
        if measure <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "element {e} is degenerate (measure {measure:.3e})"
            )));
        }
        for &n in mesh.element(e) {
            w[n] += measure / share;
        }
    }
    Ok(w)
}

/// Nodal interpolation: values[n] = f(x_n).
pub fn interpolate<F: Fn(&[f64]) -> Vec3>(f: F, mesh: &Mesh) -> NodalVectorField {
    NodalVectorField::from_values((0..mesh.num_nodes()).map(|n| f(mesh.node(n))).collect())
}

/// Constant gradient of the P1 interpolant of `field` on one element.
pub fn element_gradient(
    mesh: &Mesh,
    field: &NodalVectorField,
    element: usize,
) -> Result<ElementGradient> {
    if field.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "field has {} values but the mesh has {} nodes",
            field.len(),
            mesh.num_nodes()
        )));
    }
    let (grads, _) = basis_gradients(mesh, element)?;
    let mut g: ElementGradient = [[0.0; 2]; 3];
    for (v, &n) in mesh.element(element).iter().enumerate() {
        let value = field.value(n);
        for r in 0..3 {
            g[r][0] += value[r] * grads[v][0];
            g[r][1] += value[r] * grads[v][1];
        }
    }
    Ok(g)
}

/// Exchange energy ‖∇u_h‖²_{L²} = Σ_r u_r · (K u_r).
pub fn exchange_energy(field: &NodalVectorField, stiffness: &CsrMatrix) -> Result<f64> {
    if field.len() != stiffness.n() {
        return Err(Error::InvalidArgument(format!(
            "field has {} values but the stiffness has size {}",
            field.len(),
            stiffness.n()
        )));
    }
    let n = field.len();
    let mut comp = vec![0.0; n];
    let mut ks = vec![0.0; n];
    let mut energy = 0.0;
    for r in 0..3 {
        for i in 0..n {
            comp[i] = field.value(i)[r];
        }
        stiffness.mul_vec(&comp, &mut ks);
        energy += comp.iter().zip(&ks).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(energy)
}

/// The same quantity evaluated independently, element by element:
/// Σ_e |e| · Σ_r |∇u_r|². Used to cross-check [`exchange_energy`].
pub fn exchange_energy_by_elements(mesh: &Mesh, field: &NodalVectorField) -> Result<f64> {
    let mut energy = 0.0;
    for e in 0..mesh.num_elements() {
        let g = element_gradient(mesh, field, e)?;
        energy += mesh.element_measure(e) * gradient_norm_sq(&g);
    }
    Ok(energy)
}
