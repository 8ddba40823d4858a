//! Separable spin-torque models.
//!
//! Every supported torque has the shape
//! `f(a, B) = f1(a) + f2(a) × g1(B) + f3(a) × (f4(a) × g2(B))`
//! with `g1`, `g2` linear in the field gradient `B`. Built-in instances:
//! spin-transfer torque (gradient-dependent), spin-orbit torque
//! (polynomial in the magnetization alone), and the zero torque. All of
//! them are pointwise orthogonal to the magnetization, which the solver
//! relies on and [`check_orthogonality`] verifies numerically.

use crate::fem::ElementGradient;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// A linear map from gradients (R^{3×d}) to R³, stored as an explicit
/// 3×(3·d) coefficient array so it stays inspectable and transposable.
/// The flattened column index for gradient entry `B[s][i]` (component s,
/// direction i) is `3·i + s`.
#[derive(Debug, Clone)]
pub struct LinearGradientMap {
    dim: usize,
    coeff: [[f64; 6]; 3],
}

impl LinearGradientMap {
    pub fn zero(dim: usize) -> Self {
        LinearGradientMap {
            dim,
            coeff: [[0.0; 6]; 3],
        }
    }

    pub fn from_coefficients(dim: usize, coeff: [[f64; 6]; 3]) -> Self {
        LinearGradientMap { dim, coeff }
    }

    /// The directional derivative along `j`: out = Σ_i j_i · B[·][i],
    /// i.e. each output component r receives j · (row r of B).
    pub fn directional(j: &[f64]) -> Self {
        let mut coeff = [[0.0; 6]; 3];
        for (i, &ji) in j.iter().enumerate() {
            for r in 0..3 {
                coeff[r][3 * i + r] = ji;
            }
        }
        LinearGradientMap {
            dim: j.len(),
            coeff,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficients(&self) -> &[[f64; 6]; 3] {
        &self.coeff
    }

    pub fn apply(&self, b: &ElementGradient) -> Vec3 {
        let mut out = [0.0; 3];
        for r in 0..3 {
            let mut acc = 0.0;
            for i in 0..self.dim {
                for s in 0..3 {
                    acc += self.coeff[r][3 * i + s] * b[s][i];
                }
            }
            out[r] = acc;
        }
        out
    }
}

type ComponentMap = Box<dyn Fn(Vec3) -> Vec3 + Send + Sync>;

/// Spin-transfer torque parameters: strengths of the field-like and
/// damping-like terms and the in-plane current direction (a unit vector
/// with one entry per mesh dimension).
#[derive(Debug, Clone)]
pub struct SttParams {
    pub lambda: f64,
    pub mu: f64,
    pub j: Vec<f64>,
}

/// Spin-orbit torque coefficients c1..c8 (stored as c[0]..c[7]).
#[derive(Debug, Clone)]
pub struct SotParams {
    pub c: [f64; 8],
}

/// A torque in separable form. Immutable; evaluation is pure.
pub struct TorqueModel {
    name: String,
    dim: usize,
    f1: ComponentMap,
    f2: ComponentMap,
    f3: ComponentMap,
    f4: ComponentMap,
    g1: LinearGradientMap,
    g2: LinearGradientMap,
}

impl std::fmt::Debug for TorqueModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorqueModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl TorqueModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f1: ComponentMap,
        f2: ComponentMap,
        f3: ComponentMap,
        f4: ComponentMap,
        g1: LinearGradientMap,
        g2: LinearGradientMap,
    ) -> Self {
        TorqueModel {
            name: name.into(),
            dim,
            f1,
            f2,
            f3,
            f4,
            g1,
            g2,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Spatial dimension the model was built for.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn g1(&self) -> &LinearGradientMap {
        &self.g1
    }

    pub fn g2(&self) -> &LinearGradientMap {
        &self.g2
    }

    /// f(a, B) = f1(a) + f2(a) × g1(B) + f3(a) × (f4(a) × g2(B)).
    pub fn evaluate(&self, a: Vec3, b: &ElementGradient) -> Vec3 {
        let mut out = (self.f1)(a);
        out = vec3::add(out, vec3::cross((self.f2)(a), self.g1.apply(b)));
        let inner = vec3::cross((self.f4)(a), self.g2.apply(b));
        vec3::add(out, vec3::cross((self.f3)(a), inner))
    }

    /// Torque term of the damping/precession split form solved by the
    /// spectral cross-check: (f − β·a×f) / (1+β²).
    pub fn evaluate_split_form(&self, a: Vec3, b: &ElementGradient, beta: f64) -> Vec3 {
        let f = self.evaluate(a, b);
        let denom = 1.0 + beta * beta;
        vec3::axpy(vec3::scale(1.0 / denom, f), -beta / denom, vec3::cross(a, f))
    }
}

fn zero_map() -> ComponentMap {
    Box::new(|_| vec3::ZERO)
}

/// The torque that is identically zero.
pub fn make_zero(dim: usize) -> TorqueModel {
    TorqueModel::new(
        "none",
        dim,
        zero_map(),
        zero_map(),
        zero_map(),
        zero_map(),
        LinearGradientMap::zero(dim),
        LinearGradientMap::zero(dim),
    )
}

/// Spin-transfer torque λ·a×(j·∇a) + μ·a×(a×(j·∇a)):
/// f2 = λ·id, f3 = id, f4 = μ·id, g1 = g2 = directional derivative along j.
pub fn make_stt(params: SttParams) -> Result<TorqueModel> {
    let d = params.j.len();
    if d != 1 && d != 2 {
        return Err(Error::InvalidArgument(format!(
            "current direction must have 1 or 2 components, got {d}"
        )));
    }
    let norm: f64 = params.j.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "current direction must be a unit vector (|j| = {norm:.15})"
        )));
    }
    let (lambda, mu) = (params.lambda, params.mu);
    Ok(TorqueModel::new(
        "stt",
        d,
        zero_map(),
        Box::new(move |a| vec3::scale(lambda, a)),
        Box::new(|a| a),
        Box::new(move |a| vec3::scale(mu, a)),
        LinearGradientMap::directional(&params.j),
        LinearGradientMap::directional(&params.j),
    ))
}

const I_HAT: Vec3 = [1.0, 0.0, 0.0];
const J_HAT: Vec3 = [0.0, 1.0, 0.0];
const K_HAT: Vec3 = [0.0, 0.0, 1.0];

/// Damping-like part of the spin-orbit torque; grows like |a|⁵.
pub fn sot_parallel(c: &[f64; 8], a: Vec3) -> Vec3 {
    let kxa = vec3::cross(K_HAT, a);
    let s = vec3::norm_sq(kxa);
    let first = vec3::scale(c[0] + c[1] * s + c[2] * s * s, vec3::cross(J_HAT, a));
    let second = vec3::scale(
        (c[3] + c[4] * s) * vec3::dot(a, I_HAT),
        vec3::cross(a, kxa),
    );
    vec3::add(first, second)
}

/// Field-like part of the spin-orbit torque; grows like |a|⁴.
pub fn sot_perpendicular(c: &[f64; 8], a: Vec3) -> Vec3 {
    let kxa = vec3::cross(K_HAT, a);
    let s = vec3::norm_sq(kxa);
    let first = vec3::scale(c[5], vec3::cross(a, vec3::cross(J_HAT, a)));
    let second = vec3::scale((c[6] + c[7] * s) * vec3::dot(a, I_HAT), kxa);
    vec3::add(first, second)
}

/// Spin-orbit torque: gradient-free, so f1 carries the whole expression
/// and the remaining components vanish.
pub fn make_sot(params: SotParams, dim: usize) -> TorqueModel {
    let c = params.c;
    TorqueModel::new(
        "sot",
        dim,
        Box::new(move |a| vec3::add(sot_parallel(&c, a), sot_perpendicular(&c, a))),
        zero_map(),
        zero_map(),
        zero_map(),
        LinearGradientMap::zero(dim),
        LinearGradientMap::zero(dim),
    )
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn uniform_pm1(state: &mut u64) -> f64 {
    // 53 random mantissa bits mapped to [-1, 1)
    (splitmix64(state) >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Max |f(a,B) · a| over `samples` random unit vectors a and gradients B
/// with entries in [-1,1]. Deterministic for a given seed (internal
/// splitmix64 stream, no global RNG state).
pub fn check_orthogonality(model: &TorqueModel, samples: usize, seed: u64) -> f64 {
    let mut state = seed;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a = loop {
            let v = [
                uniform_pm1(&mut state),
                uniform_pm1(&mut state),
                uniform_pm1(&mut state),
            ];
            let n = vec3::norm(v);
            if n > 1e-3 {
                break vec3::scale(1.0 / n, v);
            }
        };
        let mut b: ElementGradient = [[0.0; 2]; 3];
        for row in b.iter_mut().take(3) {
            for i in 0..model.dim {
                row[i] = uniform_pm1(&mut state);
            }
        }
        worst = worst.max(vec3::dot(model.evaluate(a, &b), a).abs());
    }
    worst
}
