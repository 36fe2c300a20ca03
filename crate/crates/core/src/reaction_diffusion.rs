//! Lagrangian reaction–diffusion on the moving domain.
//!
//! The density `τ` lives on the reference mesh and solves
//! `∂_t τ = div(Jφ 𝐒_φ (∇τ − τ ∇Jφ/Jφ)) + R(τ/Jφ) Jφ` with the zero-flux
//! condition, where `𝐒_φ = Dφ⁻¹ S Dφ⁻ᵀ` is the pulled-back Eulerian tensor.
//! P1 elements, lumped mass, and a semi-implicit step (transport implicit,
//! reaction explicit).

use nalgebra::{DMatrix, DVector, Matrix2, Point2};

use crate::error::{Error, Result};
use crate::geometry::{log_jacobian_gradient, DeformationState, DensityField, Mesh, QUAD_BARY};

/// Eulerian diffusion rates along x and y (`S = diag(rx, ry)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    pub rx: f64,
    pub ry: f64,
}

impl Default for DiffusionSpec {
    fn default() -> Self {
        DiffusionSpec {
            rx: 0.025,
            ry: 0.005,
        }
    }
}

impl DiffusionSpec {
    pub fn new(rx: f64, ry: f64) -> Result<Self> {
        if !(rx > 0.0 && rx.is_finite()) {
            return Err(Error::param("diffusion.rx", "must be > 0"));
        }
        if !(ry > 0.0 && ry.is_finite()) {
            return Err(Error::param("diffusion.ry", "must be > 0"));
        }
        Ok(DiffusionSpec { rx, ry })
    }

    pub fn isotropic(r: f64) -> Result<Self> {
        Self::new(r, r)
    }

    pub fn tensor(&self) -> Matrix2<f64> {
        Matrix2::new(self.rx, 0.0, 0.0, self.ry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpShape {
    /// `(4u(1−u))³`, peak 1 at `u = ½`.
    Symmetric,
    /// Quintic smoothstep up on `[0, 0.2]`, flat on `[0.2, 0.8]`, down on `[0.8, 1]`.
    Plateau,
}

impl BumpShape {
    pub fn name(&self) -> &'static str {
        match self {
            BumpShape::Symmetric => "symmetric_bump",
            BumpShape::Plateau => "plateau_bump",
        }
    }
}

impl std::str::FromStr for BumpShape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "symmetric_bump" => Ok(BumpShape::Symmetric),
            "plateau_bump" => Ok(BumpShape::Plateau),
            other => Err(format!("unknown profile shape `{other}`")),
        }
    }
}

/// C² piecewise-polynomial profile supported on `[p_min, p_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpProfile {
    pub p_min: f64,
    pub p_max: f64,
    pub height: f64,
    pub shape: BumpShape,
}

fn smoothstep5(x: f64) -> f64 {
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

impl BumpProfile {
    pub fn new(p_min: f64, p_max: f64, height: f64, shape: BumpShape) -> Result<Self> {
        if !(p_min.is_finite() && p_max.is_finite() && p_min < p_max) {
            return Err(Error::param("profile", "support must satisfy p_min < p_max"));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::param("profile.height", "must be > 0"));
        }
        Ok(BumpProfile {
            p_min,
            p_max,
            height,
            shape,
        })
    }

    /// Default reaction: symmetric bump on `[0.01, 1]` with height 0.3.
    pub fn default_reaction() -> Self {
        BumpProfile {
            p_min: 0.01,
            p_max: 1.0,
            height: 0.3,
            shape: BumpShape::Symmetric,
        }
    }

    /// Default yank profile: plateau bump on `[0.01, 1]` with height 1.
    pub fn default_yank() -> Self {
        BumpProfile {
            p_min: 0.01,
            p_max: 1.0,
            height: 1.0,
            shape: BumpShape::Plateau,
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        if !(p > self.p_min && p < self.p_max) {
            return 0.0;
        }
        let u = (p - self.p_min) / (self.p_max - self.p_min);
        let shape = match self.shape {
            BumpShape::Symmetric => (4.0 * u * (1.0 - u)).powi(3),
            BumpShape::Plateau => {
                if u < 0.2 {
                    smoothstep5(u / 0.2)
                } else if u > 0.8 {
                    smoothstep5((1.0 - u) / 0.2)
                } else {
                    1.0
                }
            }
        };
        self.height * shape
    }

    /// Supremum of the profile.
    pub fn sup(&self) -> f64 {
        self.height
    }
}

/// Evaluates an optional profile; `None` is the zero function.
pub fn bump_eval(profile: Option<&BumpProfile>, p: f64) -> f64 {
    profile.map_or(0.0, |b| b.eval(p))
}

/// Element-wise `𝐒_φ = Dφ⁻¹ S Dφ⁻ᵀ` with the element-averaged `Dφ`.
pub fn pullback_diffusion(mesh: &Mesh, state: &DeformationState, spec: &DiffusionSpec) -> Result<Vec<Matrix2<f64>>> {
    state.ensure_positive()?;
    let s = spec.tensor();
    mesh.triangles()
        .iter()
        .map(|tri| {
            let g = (state.grad[tri[0]] + state.grad[tri[1]] + state.grad[tri[2]]) / 3.0;
            let inv = g.try_inverse().ok_or(Error::DegenerateDeformation {
                node: tri[0],
                jac: g.determinant(),
            })?;
            let m = inv * s * inv.transpose();
            // symmetric by construction; remove rounding asymmetry
            let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
            Ok(Matrix2::new(m[(0, 0)], off, off, m[(1, 1)]))
        })
        .collect()
}

/// Discrete transport operator for one deformation state.
#[derive(Debug, Clone)]
pub struct RdSystem {
    /// `K[i][j] = ∫ Jφ (𝐒∇ψ_j)·∇ψ_i`.
    pub stiffness: DMatrix<f64>,
    /// `D[i][j] = −∫ ψ_j Jφ (𝐒 ∇log Jφ)·∇ψ_i`.
    pub drift: DMatrix<f64>,
    /// Lumped reference mass `∫ ψ_i`.
    pub mass: Vec<f64>,
    /// Lumped `Jφ`-weighted mass `∫ Jφ ψ_i`, used for the reaction source.
    pub weighted_mass: Vec<f64>,
    /// Nodal Jacobians of the state the system was built for.
    pub jac: Vec<f64>,
}

impl RdSystem {
    /// `K + D`.
    pub fn transport(&self) -> DMatrix<f64> {
        &self.stiffness + &self.drift
    }
}

pub fn assemble_rd_system(mesh: &Mesh, state: &DeformationState, spec: &DiffusionSpec) -> Result<RdSystem> {
    let tensors = pullback_diffusion(mesh, state, spec)?;
    let glog = log_jacobian_gradient(state, mesh)?;
    let n = mesh.node_count();
    let mut stiffness = DMatrix::zeros(n, n);
    let mut drift = DMatrix::zeros(n, n);
    let mut weighted_mass = vec![0.0; n];
    for ((tri, el), s) in mesh.triangles().iter().zip(mesh.elements()).zip(&tensors) {
        let jac = [state.jac[tri[0]], state.jac[tri[1]], state.jac[tri[2]]];
        let mean_jac = (jac[0] + jac[1] + jac[2]) / 3.0;
        let sg = [s * el.grads[0], s * el.grads[1], s * el.grads[2]];
        for a in 0..3 {
            for b in 0..3 {
                stiffness[(tri[a], tri[b])] += el.area * mean_jac * sg[b].dot(&el.grads[a]);
            }
            // ∫ Jφ ψ_a, exact for the linear Jφ: area (2 J_a + J_b + J_c) / 12
            weighted_mass[tri[a]] += el.area * (jac[a] + mean_jac * 3.0) / 12.0;
        }
        for bary in QUAD_BARY.iter() {
            let jq: f64 = (0..3).map(|k| bary[k] * jac[k]).sum();
            let gq = glog[tri[0]] * bary[0] + glog[tri[1]] * bary[1] + glog[tri[2]] * bary[2];
            let flux = s * gq * jq;
            let w = el.area / 3.0;
            for a in 0..3 {
                let f = flux.dot(&el.grads[a]);
                for b in 0..3 {
                    drift[(tri[a], tri[b])] -= w * bary[b] * f;
                }
            }
        }
    }
    Ok(RdSystem {
        stiffness,
        drift,
        mass: mesh.lumped_mass(),
        weighted_mass,
        jac: state.jac.clone(),
    })
}

/// Factorized semi-implicit step for a fixed deformation state:
/// `(M/dt + K + D) τⁿ⁺¹ = (M/dt) τⁿ + M_J R(τⁿ/Jφ)`.
#[derive(Debug, Clone)]
pub struct ImplicitStepper {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dt: f64,
    mass: Vec<f64>,
    weighted_mass: Vec<f64>,
    jac: Vec<f64>,
}

impl ImplicitStepper {
    pub fn new(system: &RdSystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("time.dt", "must be > 0"));
        }
        let mut m = system.transport();
        for (i, mi) in system.mass.iter().enumerate() {
            m[(i, i)] += mi / dt;
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::LinearSolve("reaction-diffusion matrix is singular".into()));
        }
        Ok(ImplicitStepper {
            lu,
            dt,
            mass: system.mass.clone(),
            weighted_mass: system.weighted_mass.clone(),
            jac: system.jac.clone(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, tau: &DensityField, reaction: Option<&BumpProfile>) -> Result<DensityField> {
        let n = self.mass.len();
        if tau.len() != n {
            return Err(Error::param("tau", "length does not match the mesh"));
        }
        let rhs = DVector::from_fn(n, |i, _| {
            let t = tau.values[i];
            self.mass[i] / self.dt * t + self.weighted_mass[i] * bump_eval(reaction, t / self.jac[i])
        });
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolve("LU back-substitution failed".into()))?;
        if let Some(i) = sol.iter().position(|v| !v.is_finite()) {
            return Err(Error::LinearSolve(format!("non-finite density at node {i}")));
        }
        Ok(DensityField::new(sol.iter().copied().collect()))
    }
}

/// One semi-implicit density step on the given state.
pub fn step_density(
    mesh: &Mesh,
    tau: &DensityField,
    state: &DeformationState,
    spec: &DiffusionSpec,
    reaction: Option<&BumpProfile>,
    dt: f64,
) -> Result<DensityField> {
    let system = assemble_rd_system(mesh, state, spec)?;
    ImplicitStepper::new(&system, dt)?.step(tau, reaction)
}

/// Nodal samples of `h (|x − c|²/r² − 1)² 1_{|x − c| < r}`.
pub fn initial_potential(center: Point2<f64>, radius: f64, height: f64, mesh: &Mesh) -> Result<DensityField> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("potential.radius", "must be > 0"));
    }
    if !(height >= 0.0 && height.is_finite()) {
        return Err(Error::param("potential.height", "must be >= 0"));
    }
    Ok(DensityField::new(
        mesh.nodes()
            .iter()
            .map(|x| potential_profile(x, &center, radius, height))
            .collect(),
    ))
}

pub fn potential_profile(x: &Point2<f64>, center: &Point2<f64>, radius: f64, height: f64) -> f64 {
    let s = (x - center).norm_squared() / (radius * radius);
    if s < 1.0 {
        height * (s - 1.0) * (s - 1.0)
    } else {
        0.0
    }
}
