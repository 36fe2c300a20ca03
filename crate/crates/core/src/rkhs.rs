//! Reproducing-kernel space of velocity fields.
//!
//! Fields are finite kernel expansions `v(x) = Σ_i κ(|x − x_i| / σ) a_i` with
//! the order-3 Matérn profile
//! `κ(t) = (1 + t + 2t²/15 + t³/15) e^{−t}` and the scalar matrix kernel
//! `κ · I₂`. Vector unknowns are interleaved as `2 i + d`.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default kernel width.
pub const DEFAULT_SIGMA: f64 = 0.2;

/// Relative (to σ) distance below which control points are merged.
pub const COLLAPSE_TOLERANCE: f64 = 1e-9;

#[inline]
pub(crate) fn kappa_unchecked(t: f64) -> f64 {
    (1.0 + t + t * t * (2.0 + t) / 15.0) * (-t).exp()
}

/// `κ′(t) / t`, which stays finite at the origin.
#[inline]
pub(crate) fn kappa_d1_over_t(t: f64) -> f64 {
    -(11.0 - t + t * t) / 15.0 * (-t).exp()
}

#[inline]
fn kappa_d2_unchecked(t: f64) -> f64 {
    (-11.0 + t * (13.0 + t * (-4.0 + t))) / 15.0 * (-t).exp()
}

fn check_domain(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::param("t", format!("kernel argument must be >= 0, got {t}")))
    }
}

/// Matérn-3 radial profile.
pub fn kappa(t: f64) -> Result<f64> {
    check_domain(t)?;
    Ok(kappa_unchecked(t))
}

/// `(κ′(t), κ″(t))`.
pub fn kappa_derivatives(t: f64) -> Result<(f64, f64)> {
    check_domain(t)?;
    Ok((t * kappa_d1_over_t(t), kappa_d2_unchecked(t)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub sigma: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl KernelSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("kernel.sigma", "must be positive"));
        }
        Ok(KernelSpec { sigma })
    }

    /// `κ(|x − y| / σ)`.
    #[inline]
    pub fn value(&self, x: &Point2<f64>, y: &Point2<f64>) -> f64 {
        kappa_unchecked((x - y).norm() / self.sigma)
    }

    /// Gradient in `x` of `κ(|x − y| / σ)`.
    #[inline]
    pub fn gradient(&self, x: &Point2<f64>, y: &Point2<f64>) -> Vector2<f64> {
        let d = x - y;
        let t = d.norm() / self.sigma;
        d * (kappa_d1_over_t(t) / (self.sigma * self.sigma))
    }

    /// Value and gradient in `x` together.
    #[inline]
    pub fn value_and_gradient(&self, x: &Point2<f64>, y: &Point2<f64>) -> (f64, Vector2<f64>) {
        let d = x - y;
        let t = d.norm() / self.sigma;
        let e = (-t).exp();
        let value = (1.0 + t + t * t * (2.0 + t) / 15.0) * e;
        let slope = -(11.0 - t + t * t) / 15.0 * e / (self.sigma * self.sigma);
        (value, d * slope)
    }
}

/// Scalar Gram matrix `G[i][j] = κ(|x_i − x_j| / σ)`.
pub fn gram_matrix(points: &[Point2<f64>], spec: &KernelSpec) -> DMatrix<f64> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| points.iter().map(|y| spec.value(x, y)).collect())
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Expands a scalar Gram matrix to the interleaved vector system `G ⊗ I₂`.
pub fn vector_gram(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let n = gram.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        if r % 2 == c % 2 {
            gram[(r / 2, c / 2)]
        } else {
            0.0
        }
    })
}

/// Kernel gradients at weighted quadrature points, scaled by `√w_q`.
///
/// Returns `(cx, cy)`, both `N × Q`, with
/// `cx[(i, q)] = √w_q ∂_x κ(|y_q − x_i| / σ)` and likewise for `y`.
pub fn weighted_kernel_gradients(
    queries: &[Point2<f64>],
    weights: &[f64],
    points: &[Point2<f64>],
    spec: &KernelSpec,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = points.len();
    let nq = queries.len();
    let mut cx = DMatrix::<f64>::zeros(n, nq);
    let mut cy = DMatrix::<f64>::zeros(n, nq);
    cx.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .zip(cy.as_mut_slice().par_chunks_mut(n.max(1)))
        .enumerate()
        .for_each(|(q, (colx, coly))| {
            let sw = weights[q].sqrt();
            for (i, x) in points.iter().enumerate() {
                let g = spec.gradient(&queries[q], x) * sw;
                colx[i] = g.x;
                coly[i] = g.y;
            }
        });
    (cx, cy)
}

/// Control points with near-duplicates merged.
#[derive(Debug, Clone)]
pub struct CollapsedPoints {
    pub points: Vec<Point2<f64>>,
    /// Representative index (into `points`) of every input point.
    pub map: Vec<usize>,
}

/// Merges points closer than `COLLAPSE_TOLERANCE · σ` to an earlier point.
pub fn collapse_points(points: &[Point2<f64>], spec: &KernelSpec) -> CollapsedPoints {
    let tol = COLLAPSE_TOLERANCE * spec.sigma;
    let cell = |p: &Point2<f64>| ((p.x / tol).floor() as i64, (p.y / tol).floor() as i64);
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    let mut unique: Vec<Point2<f64>> = Vec::with_capacity(points.len());
    let mut map = Vec::with_capacity(points.len());
    for p in points {
        let (cx, cy) = cell(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(cx + dx, cy + dy)) {
                    if let Some(&u) = list.iter().find(|&&u| (unique[u] - p).norm() < tol) {
                        found = Some(u);
                        break 'search;
                    }
                }
            }
        }
        let idx = found.unwrap_or_else(|| {
            unique.push(*p);
            buckets.entry((cx, cy)).or_default().push(unique.len() - 1);
            unique.len() - 1
        });
        map.push(idx);
    }
    CollapsedPoints {
        points: unique,
        map,
    }
}

/// Kernel expansion `v(x) = Σ_i κ(|x − x_i| / σ) a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub spec: KernelSpec,
    pub points: Vec<Point2<f64>>,
    pub momenta: Vec<Vector2<f64>>,
}

impl VelocityField {
    pub fn new(spec: KernelSpec, points: Vec<Point2<f64>>, momenta: Vec<Vector2<f64>>) -> Result<Self> {
        if points.len() != momenta.len() {
            return Err(Error::param(
                "momenta",
                format!("{} momenta for {} control points", momenta.len(), points.len()),
            ));
        }
        Ok(VelocityField {
            spec,
            points,
            momenta,
        })
    }

    /// Builds a field from an interleaved momentum vector.
    pub fn from_interleaved(spec: KernelSpec, points: Vec<Point2<f64>>, a: &DVector<f64>) -> Result<Self> {
        if a.len() != 2 * points.len() {
            return Err(Error::param("momenta", "interleaved length must be twice the point count"));
        }
        let momenta = (0..points.len()).map(|i| Vector2::new(a[2 * i], a[2 * i + 1])).collect();
        Self::new(spec, points, momenta)
    }

    pub fn zero(spec: KernelSpec, points: Vec<Point2<f64>>) -> Self {
        let momenta = vec![Vector2::zeros(); points.len()];
        VelocityField {
            spec,
            points,
            momenta,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.momenta.iter().all(|a| a.x == 0.0 && a.y == 0.0)
    }

    pub fn interleaved(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.momenta.len(),
            self.momenta.iter().flat_map(|a| [a.x, a.y]),
        )
    }

    pub fn value_at(&self, q: &Point2<f64>) -> Vector2<f64> {
        self.points
            .iter()
            .zip(&self.momenta)
            .map(|(x, a)| a * self.spec.value(q, x))
            .sum()
    }

    /// `Dv(q)` with `Dv[d][k] = ∂_k v_d`.
    pub fn jacobian_at(&self, q: &Point2<f64>) -> Matrix2<f64> {
        self.points
            .iter()
            .zip(&self.momenta)
            .map(|(x, a)| a * self.spec.gradient(q, x).transpose())
            .sum()
    }

    /// Values and Jacobians at every query point.
    pub fn eval(&self, queries: &[Point2<f64>]) -> (Vec<Vector2<f64>>, Vec<Matrix2<f64>>) {
        queries
            .par_iter()
            .map(|q| {
                let mut v = Vector2::zeros();
                let mut dv = Matrix2::zeros();
                for (x, a) in self.points.iter().zip(&self.momenta) {
                    let (k, g) = self.spec.value_and_gradient(q, x);
                    v += a * k;
                    dv += a * g.transpose();
                }
                (v, dv)
            })
            .unzip()
    }

    /// `‖v‖²_V = Σ_ij κ(|x_i − x_j| / σ) a_i · a_j`.
    pub fn norm_squared(&self) -> f64 {
        v_norm_squared(self)
    }
}

pub fn v_norm_squared(v: &VelocityField) -> f64 {
    let g = gram_matrix(&v.points, &v.spec);
    let n = v.points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = Vector2::zeros();
        for j in 0..n {
            row += v.momenta[j] * g[(i, j)];
        }
        total += v.momenta[i].dot(&row);
    }
    total.max(0.0)
}
