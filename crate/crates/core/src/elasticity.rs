//! Isotropic linear-elastic energy on the deformed domain, restricted to
//! kernel velocity fields.

use nalgebra::{DMatrix, Matrix2, Point2};

use crate::error::{Error, Result};
use crate::geometry::{deformed_quadrature, DeformationState, Mesh};
use crate::rkhs::{weighted_kernel_gradients, KernelSpec, VelocityField};

/// Lamé parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticParams {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        ElasticParams {
            lambda: 0.0,
            mu: 1.0,
        }
    }
}

impl ElasticParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param("elastic.lambda", "must be >= 0"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::param("elastic.mu", "must be > 0"));
        }
        Ok(ElasticParams { lambda, mu })
    }

    /// `λ tr(ε_v) tr(ε_w) + 2μ tr(ε_vᵀ ε_w)` for velocity gradients `dv`, `dw`.
    pub fn energy_density(&self, dv: &Matrix2<f64>, dw: &Matrix2<f64>) -> f64 {
        let ev = (dv + dv.transpose()) * 0.5;
        let ew = (dw + dw.transpose()) * 0.5;
        self.lambda * ev.trace() * ew.trace() + 2.0 * self.mu * ev.component_mul(&ew).sum()
    }
}

/// `(A_φ v | w)` integrated over the deformed triangles.
pub fn elastic_pairing(
    mesh: &Mesh,
    state: &DeformationState,
    params: &ElasticParams,
    v: &VelocityField,
    w: &VelocityField,
) -> Result<f64> {
    state.ensure_positive()?;
    let cloud = deformed_quadrature(mesh, &state.positions)?;
    let (_, dv) = v.eval(&cloud.points);
    let (_, dw) = w.eval(&cloud.points);
    Ok(cloud
        .weights
        .iter()
        .zip(dv.iter().zip(&dw))
        .map(|(wq, (a, b))| wq * params.energy_density(a, b))
        .sum())
}

/// Galerkin matrix of the elastic form on the basis `κ(|· − x_i| / σ) e_d`.
///
/// Unknowns are interleaved (`2 i + d`). With `g_i = ∇κ_i`,
/// `A[(i,d),(j,e)] = ∫ λ g_{i,d} g_{j,e} + μ (δ_{de} g_i·g_j + g_{i,e} g_{j,d})`.
pub fn assemble_elastic_matrix(
    mesh: &Mesh,
    state: &DeformationState,
    params: &ElasticParams,
    spec: &KernelSpec,
    points: &[Point2<f64>],
) -> Result<DMatrix<f64>> {
    state.ensure_positive()?;
    let cloud = deformed_quadrature(mesh, &state.positions)?;
    let (cx, cy) = weighted_kernel_gradients(&cloud.points, &cloud.weights, points, spec);
    Ok(elastic_from_gradients(&cx, &cy, params))
}

pub(crate) fn elastic_from_gradients(
    cx: &DMatrix<f64>,
    cy: &DMatrix<f64>,
    params: &ElasticParams,
) -> DMatrix<f64> {
    let n = cx.nrows();
    let xx = cx * cx.transpose();
    let yy = cy * cy.transpose();
    let xy = cx * cy.transpose();
    let (lambda, mu) = (params.lambda, params.mu);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            a[(2 * i, 2 * j)] = (lambda + 2.0 * mu) * xx[(i, j)] + mu * yy[(i, j)];
            a[(2 * i + 1, 2 * j + 1)] = (lambda + 2.0 * mu) * yy[(i, j)] + mu * xx[(i, j)];
            a[(2 * i, 2 * j + 1)] = lambda * xy[(i, j)] + mu * xy[(j, i)];
            a[(2 * i + 1, 2 * j)] = lambda * xy[(j, i)] + mu * xy[(i, j)];
        }
    }
    // exact symmetry regardless of gemm summation order
    for j in 0..2 * n {
        for i in (j + 1)..2 * n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    a
}
