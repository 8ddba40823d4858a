//! Per-node R³ vector fields and the field snapshot text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::mesh::Mesh;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Nodal norms below this during normalization indicate an upstream bug
/// (tangent updates keep pre-normalization norms at or above 1).
pub const MIN_NORMALIZE_NORM: f64 = 0.5;

/// A vector in R³ attached to every mesh node. The `unit_constrained` flag
/// records that every nodal norm was exactly renormalized.
#[derive(Debug, Clone)]
pub struct NodalVectorField {
    values: Vec<Vec3>,
    unit_constrained: bool,
}

impl NodalVectorField {
    pub fn from_values(values: Vec<Vec3>) -> Self {
        NodalVectorField {
            values,
            unit_constrained: false,
        }
    }

    pub fn constant(num_nodes: usize, value: Vec3) -> Self {
        NodalVectorField {
            values: vec![value; num_nodes],
            unit_constrained: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn value(&self, node: usize) -> Vec3 {
        self.values[node]
    }

    pub fn is_unit_constrained(&self) -> bool {
        self.unit_constrained
    }

    /// max over nodes of ||m_n| − 1|.
    pub fn max_norm_deviation(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (vec3::norm(*v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Nodal normalization u_n ← u_n/|u_n|. Fails on any nodal norm below
    /// [`MIN_NORMALIZE_NORM`], naming the node.
    pub fn normalize_nodal(&self) -> Result<NodalVectorField> {
        let mut values = Vec::with_capacity(self.values.len());
        for (node, &v) in self.values.iter().enumerate() {
            let n = vec3::norm(v);
            if n < MIN_NORMALIZE_NORM {
                return Err(Error::DegenerateNode {
                    node,
                    norm: n,
                    min_norm: MIN_NORMALIZE_NORM,
                });
            }
            values.push(vec3::scale(1.0 / n, v));
        }
        Ok(NodalVectorField {
            values,
            unit_constrained: true,
        })
    }
}

/// Writes the snapshot format: header `t N`, then one line per node with
/// the node coordinates followed by the three vector components.
pub fn write_snapshot(field: &NodalVectorField, mesh: &Mesh, time: f64, path: &Path) -> Result<()> {
    if field.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "field has {} values but the mesh has {} nodes",
            field.len(),
            mesh.num_nodes()
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:.16e} {}", time, mesh.num_nodes());
    for n in 0..mesh.num_nodes() {
        let mut cols: Vec<String> = mesh.node(n).iter().map(|c| format!("{c:.16e}")).collect();
        cols.extend(field.value(n).iter().map(|c| format!("{c:.16e}")));
        let _ = writeln!(out, "{}", cols.join(" "));
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A snapshot read back from disk; coordinates are kept so consumers can
/// check mesh consistency.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub time: f64,
    pub dimension: usize,
    pub coords: Vec<f64>,
    pub field: NodalVectorField,
}

/// Reads the snapshot format written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<FieldSnapshot> {
    let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fmt_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (ln, header) = lines.next().ok_or_else(|| fmt_err(1, "empty file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [time_tok, n_tok] = parts[..] else {
        return Err(fmt_err(ln + 1, "header must be `t N`".into()));
    };
    let time: f64 = time_tok
        .parse()
        .map_err(|e| fmt_err(ln + 1, format!("bad time: {e}")))?;
    let n: usize = n_tok
        .parse()
        .map_err(|e| fmt_err(ln + 1, format!("bad node count: {e}")))?;
    let mut dimension = 0usize;
    let mut coords = Vec::new();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| fmt_err(0, format!("expected {n} node lines")))?;
        let cols: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt_err(ln + 1, format!("bad number: {e}")))?;
        if dimension == 0 {
            dimension = cols
                .len()
                .checked_sub(3)
                .filter(|&d| d == 1 || d == 2)
                .ok_or_else(|| {
                    fmt_err(ln + 1, "node line must be `x [y] m1 m2 m3`".into())
                })?;
        }
        if cols.len() != dimension + 3 {
            return Err(fmt_err(
                ln + 1,
                format!("expected {} columns, got {}", dimension + 3, cols.len()),
            ));
        }
        coords.extend(&cols[..dimension]);
        values.push([cols[dimension], cols[dimension + 1], cols[dimension + 2]]);
    }
    Ok(FieldSnapshot {
        time,
        dimension,
        coords,
        field: NodalVectorField::from_values(values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured, DiagonalRule};

    #[test]
    fn normalize_scales_to_unit() {
        let f = NodalVectorField::from_values(vec![[0.0, 0.0, 2.0], [3.0, 0.0, 4.0]]);
        let g = f.normalize_nodal().unwrap();
        assert!(g.is_unit_constrained());
        assert_eq!(g.value(0), [0.0, 0.0, 1.0]);
        for (got, want) in g.value(1).iter().zip([0.6, 0.0, 0.8]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(g.max_norm_deviation() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent_on_unit_fields() {
        let f = NodalVectorField::from_values(vec![[0.6, 0.0, 0.8]]);
        let once = f.normalize_nodal().unwrap();
        let twice = once.normalize_nodal().unwrap();
        assert_eq!(once.value(0), twice.value(0));
    }

    #[test]
    fn normalize_reports_degenerate_node() {
        let f = NodalVectorField::from_values(vec![[1.0, 0.0, 0.0], [0.1, 0.0, 0.0]]);
        match f.normalize_nodal() {
            Err(Error::DegenerateNode { node, .. }) => assert_eq!(node, 1),
            other => panic!("expected degenerate-node error, got {other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.txt");
        let mesh =
            generate_structured(&[[-0.5, 0.5], [-0.5, 0.5]], &[2, 2], DiagonalRule::Fixed).unwrap();
        let values: Vec<Vec3> = (0..mesh.num_nodes())
            .map(|n| {
                let x = mesh.node(n);
                [x[0] + 0.125, x[1] * 3.0, 1.0 / (n as f64 + 1.0)]
            })
            .collect();
        let f = NodalVectorField::from_values(values.clone());
        write_snapshot(&f, &mesh, 0.625, &path).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.time, 0.625);
        assert_eq!(back.dimension, 2);
        assert_eq!(back.field.len(), mesh.num_nodes());
        for n in 0..mesh.num_nodes() {
            assert_eq!(back.field.value(n), values[n]);
            assert_eq!(back.coords[2 * n], mesh.node(n)[0]);
            assert_eq!(back.coords[2 * n + 1], mesh.node(n)[1]);
        }
    }

    #[test]
    fn snapshot_reader_rejects_ragged_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.txt");
        std::fs::write(&path, "0.0 2\n0.0 1.0 0.0 0.0\n0.5 1.0 0.0\n").unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(Error::Format { line: 3, .. })
        ));
    }
}
