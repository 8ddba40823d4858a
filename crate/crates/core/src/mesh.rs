//! Simplicial meshes (segments in 1D, triangles in 2D): structured
//! generation over interval boxes, text I/O, structural validation, and the
//! stiffness sign condition required for projection non-expansion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Off-diagonal stiffness entries above this are sign-condition violations.
pub const SIGN_CONDITION_TOL: f64 = 1e-12;
/// Nodes closer than this are considered duplicates.
const DUPLICATE_NODE_TOL: f64 = 1e-12;
/// Relative slack for "element measures sum to the bounding-box measure".
const TILING_REL_TOL: f64 = 1e-10;

/// How square cells are split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalRule {
    /// Every cell uses the same (lower-left to upper-right) diagonal.
    Fixed,
    /// Diagonal direction alternates in a checkerboard pattern.
    Alternating,
}

/// Immutable simplicial mesh. Coordinates are stored flat (`d` per node),
/// elements as flat index tuples (`d+1` per element).
#[derive(Debug, Clone)]
pub struct Mesh {
    dimension: usize,
    coords: Vec<f64>,
    elements: Vec<usize>,
    boundary_nodes: Vec<usize>,
}

impl Mesh {
    /// Builds from raw parts, detects boundary nodes, and validates.
    pub fn from_parts(dimension: usize, coords: Vec<f64>, elements: Vec<usize>) -> Result<Mesh> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidMesh(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        if coords.len() % dimension != 0 {
            return Err(Error::InvalidMesh(
                "coordinate count is not a multiple of the dimension".into(),
            ));
        }
        if elements.len() % (dimension + 1) != 0 {
            return Err(Error::InvalidMesh(
                "element index count is not a multiple of d+1".into(),
            ));
        }
        let mut mesh = Mesh {
            dimension,
            coords,
            elements,
            boundary_nodes: Vec::new(),
        };
        mesh.validate()?;
        mesh.boundary_nodes = mesh.detect_boundary();
        Ok(mesh)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / (self.dimension + 1)
    }

    /// Coordinates of node `n` (slice of length `dimension`).
    pub fn node(&self, n: usize) -> &[f64] {
        &self.coords[n * self.dimension..(n + 1) * self.dimension]
    }

    /// Node indices of element `e` (slice of length `dimension + 1`).
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e * (self.dimension + 1)..(e + 1) * (self.dimension + 1)]
    }

    /// Indices of nodes on the domain boundary, ascending.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Segment length in 1D; signed triangle area in 2D (positive for the
    /// counterclockwise orientation the invariants require).
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = self.element(e);
        match self.dimension {
            1 => (self.node(el[1])[0] - self.node(el[0])[0]).abs(),
            _ => {
                let a = self.node(el[0]);
                let b = self.node(el[1]);
                let c = self.node(el[2]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            }
        }
    }

    /// Sum of element measures.
    pub fn domain_measure(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_measure(e)).sum()
    }

    /// Structural invariants: valid indices, no duplicate nodes or
    /// elements, positively-oriented non-degenerate elements, and manifold
    /// connectivity (each facet shared by at most two elements).
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if n == 0 || self.num_elements() == 0 {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        for (e, chunk) in self.elements.chunks(self.dimension + 1).enumerate() {
            for &idx in chunk {
                if idx >= n {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} references node {idx} but only {n} nodes exist"
                    )));
                }
            }
        }
        for e in 0..self.num_elements() {
            let measure = match self.dimension {
                1 => {
                    let el = self.element(e);
                    (self.node(el[1])[0] - self.node(el[0])[0]).abs()
                }
                _ => self.element_measure(e),
            };
            if measure <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "element {e} is degenerate or negatively oriented (measure {measure:.3e})"
                )));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let d2: f64 = self
                    .node(i)
                    .iter()
                    .zip(self.node(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2.sqrt() <= DUPLICATE_NODE_TOL {
                    return Err(Error::InvalidMesh(format!(
                        "nodes {i} and {j} coincide (distance {:.3e})",
                        d2.sqrt()
                    )));
                }
            }
        }
        let mut seen = BTreeMap::new();
        for e in 0..self.num_elements() {
            let mut key: Vec<usize> = self.element(e).to_vec();
            key.sort_unstable();
            if let Some(first) = seen.insert(key, e) {
                return Err(Error::InvalidMesh(format!(
                    "elements {first} and {e} use the same node set"
                )));
            }
        }
        for (facet, count) in self.facet_counts() {
            if count > 2 {
                return Err(Error::InvalidMesh(format!(
                    "facet {facet:?} is shared by {count} elements"
                )));
            }
        }
        Ok(())
    }

    fn facet_counts(&self) -> BTreeMap<Vec<usize>, usize> {
        let mut facet_count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for e in 0..self.num_elements() {
            let el = self.element(e);
            match self.dimension {
                1 => {
                    for &v in el {
                        *facet_count.entry(vec![v]).or_insert(0) += 1;
                    }
                }
                _ => {
                    for (a, b) in [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])] {
                        *facet_count.entry(vec![a.min(b), a.max(b)]).or_insert(0) += 1;
                    }
                }
            }
        }
        facet_count
    }

    /// Boundary nodes via facet counting: a facet (endpoint in 1D, edge in
    /// 2D) on the boundary belongs to exactly one element.
    fn detect_boundary(&self) -> Vec<usize> {
        let mut on_boundary = vec![false; self.num_nodes()];
        for (facet, count) in self.facet_counts() {
            if count == 1 {
                for v in facet {
                    on_boundary[v] = true;
                }
            }
        }
        on_boundary
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Writes the text format: `d N E`, then N coordinate lines, then E
    /// element lines of 0-based node indices.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.dimension,
            self.num_nodes(),
            self.num_elements()
        );
        for n in 0..self.num_nodes() {
            let line: Vec<String> = self.node(n).iter().map(|c| format!("{c:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        for e in 0..self.num_elements() {
            let line: Vec<String> = self.element(e).iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads the text format written by [`Mesh::write_text`].
    pub fn read_text(path: &Path) -> Result<Mesh> {
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
        let (ln, header) = lines
            .next()
            .ok_or_else(|| fmt_err(1, "empty file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt_err(ln + 1, format!("bad header: {e}")))?;
        let [d, n, e] = head[..] else {
            return Err(fmt_err(ln + 1, "header must be `d N E`".into()));
        };
        if d != 1 && d != 2 {
            return Err(fmt_err(ln + 1, format!("dimension must be 1 or 2, got {d}")));
        }
        let mut coords = Vec::with_capacity(n * d);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| fmt_err(0, format!("expected {n} coordinate lines")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(ln + 1, format!("bad coordinate: {e}")))?;
            if vals.len() != d {
                return Err(fmt_err(ln + 1, format!("expected {d} coordinates, got {}", vals.len())));
            }
            coords.extend(vals);
        }
        let mut elements = Vec::with_capacity(e * (d + 1));
        for _ in 0..e {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| fmt_err(0, format!("expected {e} element lines")))?;
            let vals: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(ln + 1, format!("bad element index: {e}")))?;
            if vals.len() != d + 1 {
                return Err(fmt_err(
                    ln + 1,
                    format!("expected {} node indices, got {}", d + 1, vals.len()),
                ));
            }
            elements.extend(vals);
        }
        Mesh::from_parts(d, coords, elements)
    }
}

/// Uniform mesh of an interval box. 1D: `subdivisions[0]` equal segments.
/// 2D: an (n1+1)×(n2+1) node grid, each cell split into two triangles per
/// `rule`, all counterclockwise.
pub fn generate_structured(
    bounds: &[[f64; 2]],
    subdivisions: &[usize],
    rule: DiagonalRule,
) -> Result<Mesh> {
    let d = bounds.len();
    if d != 1 && d != 2 {
        return Err(Error::InvalidArgument(format!(
            "bounds must have 1 or 2 axes, got {d}"
        )));
    }
    if subdivisions.len() != d {
        return Err(Error::InvalidArgument(
            "subdivisions must match the number of axes".into(),
        ));
    }
    for (axis, ([lo, hi], &sub)) in bounds.iter().zip(subdivisions).enumerate() {
        if sub == 0 {
            return Err(Error::InvalidArgument(format!(
                "subdivisions must be ≥ 1 (axis {axis})"
            )));
        }
        if !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "empty bounds on axis {axis}: [{lo}, {hi}]"
            )));
        }
    }
    let box_measure: f64 = bounds.iter().map(|[lo, hi]| hi - lo).product();
    let check_tiling = |mesh: Mesh| {
        let total = mesh.domain_measure();
        if (total - box_measure).abs() > TILING_REL_TOL * box_measure {
            return Err(Error::InvalidMesh(format!(
                "elements cover measure {total:.12e}, box has {box_measure:.12e}"
            )));
        }
        Ok(mesh)
    };
    match d {
        1 => {
            let n = subdivisions[0];
            let [lo, hi] = bounds[0];
            let coords: Vec<f64> = (0..=n)
                .map(|i| lo + (hi - lo) * i as f64 / n as f64)
                .collect();
            let elements: Vec<usize> = (0..n).flat_map(|i| [i, i + 1]).collect();
            check_tiling(Mesh::from_parts(1, coords, elements)?)
        }
        _ => {
            let (n1, n2) = (subdivisions[0], subdivisions[1]);
            let [x_lo, x_hi] = bounds[0];
            let [y_lo, y_hi] = bounds[1];
            let mut coords = Vec::with_capacity((n1 + 1) * (n2 + 1) * 2);
            for j in 0..=n2 {
                for i in 0..=n1 {
                    coords.push(x_lo + (x_hi - x_lo) * i as f64 / n1 as f64);
                    coords.push(y_lo + (y_hi - y_lo) * j as f64 / n2 as f64);
                }
            }
            let node = |i: usize, j: usize| j * (n1 + 1) + i;
            let mut elements = Vec::with_capacity(n1 * n2 * 6);
            for j in 0..n2 {
                for i in 0..n1 {
                    let (a, b) = (node(i, j), node(i + 1, j));
                    let (c, e) = (node(i + 1, j + 1), node(i, j + 1));
                    let use_main_diagonal = match rule {
                        DiagonalRule::Fixed => true,
                        DiagonalRule::Alternating => (i + j) % 2 == 0,
                    };
                    if use_main_diagonal {
                        // diagonal a–c
                        elements.extend([a, b, c, a, c, e]);
                    } else {
                        // diagonal b–e
                        elements.extend([a, b, e, b, c, e]);
                    }
                }
            }
            check_tiling(Mesh::from_parts(2, coords, elements)?)
        }
    }
}

/// Result of the stiffness sign-condition check.
#[derive(Debug, Clone)]
pub struct MeshQualityReport {
    /// Largest off-diagonal stiffness entry (negative on good meshes).
    pub max_offdiagonal_stiffness: f64,
    /// True iff every off-diagonal entry is ≤ [`SIGN_CONDITION_TOL`].
    pub satisfies_sign_condition: bool,
    /// Smallest interior angle over all triangles (2D only).
    pub min_angle: Option<f64>,
    /// Largest interior angle over all triangles (2D only).
    pub max_angle: Option<f64>,
}

/// Checks the condition under which nodal renormalization cannot
/// increase exchange energy — no positive off-diagonal stiffness
/// entries — directly on the assembled matrix, and reports the triangle
/// angle range in 2D.
pub fn check_sign_condition(mesh: &Mesh, stiffness: &CsrMatrix) -> Result<MeshQualityReport> {
    if stiffness.n() != mesh.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "stiffness size {} does not match node count {}",
            stiffness.n(),
            mesh.num_nodes()
        )));
    }
    let max_off = stiffness.max_offdiagonal();
    let (mut min_angle, mut max_angle) = (None, None);
    if mesh.dimension() == 2 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e);
            for v in 0..3 {
                let p = mesh.node(el[v]);
                let q = mesh.node(el[(v + 1) % 3]);
                let r = mesh.node(el[(v + 2) % 3]);
                let u = [q[0] - p[0], q[1] - p[1]];
                let w = [r[0] - p[0], r[1] - p[1]];
                let cosine = (u[0] * w[0] + u[1] * w[1])
                    / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (w[0] * w[0] + w[1] * w[1]).sqrt());
                let angle = cosine.clamp(-1.0, 1.0).acos();
                lo = lo.min(angle);
                hi = hi.max(angle);
            }
        }
        min_angle = Some(lo);
        max_angle = Some(hi);
    }
    Ok(MeshQualityReport {
        max_offdiagonal_stiffness: max_off,
        satisfies_sign_condition: max_off <= SIGN_CONDITION_TOL,
        min_angle,
        max_angle,
    })
}
