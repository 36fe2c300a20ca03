//! Unoriented varifold distance between closed polylines and the grid search
//! over initial-potential centers.

use nalgebra::{Point2, Vector2};
use rayon::prelude::*;

use crate::coupling::{Simulation, SimulationConfig};
use crate::error::{Error, Result};
use crate::geometry::{DeformationState, Mesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarifoldSpec {
    pub sigma_w: f64,
}

impl Default for VarifoldSpec {
    fn default() -> Self {
        VarifoldSpec { sigma_w: 0.3 }
    }
}

impl VarifoldSpec {
    pub fn new(sigma_w: f64) -> Result<Self> {
        if !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return Err(Error::param("varifold.sigma", "must be > 0"));
        }
        Ok(VarifoldSpec { sigma_w })
    }
}

/// Closed polyline; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    vertices: Vec<Point2<f64>>,
}

impl Curve {
    pub fn new(vertices: Vec<Point2<f64>>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::param("curve", "needs at least 3 vertices"));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::param("curve", "vertices must be finite"));
        }
        let n = vertices.len();
        if (0..n).any(|i| vertices[i] == vertices[(i + 1) % n]) {
            return Err(Error::param("curve", "consecutive vertices must be distinct"));
        }
        Ok(Curve { vertices })
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn reversed(&self) -> Curve {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Curve { vertices }
    }

    /// Edge midpoints and edge vectors.
    pub fn segments(&self) -> (Vec<Point2<f64>>, Vec<Vector2<f64>>) {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                (Point2::from((a.coords + b.coords) * 0.5), b - a)
            })
            .unzip()
    }

    pub fn length(&self) -> f64 {
        self.segments().1.iter().map(|t| t.norm()).sum()
    }
}

/// `Σ_{e,f} exp(−|m_e − m_f|²/σ²) (t_e·t_f)² / (|t_e||t_f|)`.
pub fn varifold_inner(c1: &Curve, c2: &Curve, spec: &VarifoldSpec) -> f64 {
    let (m1, t1) = c1.segments();
    let (m2, t2) = c2.segments();
    let n2: Vec<f64> = t2.iter().map(|t| t.norm()).collect();
    let s2 = spec.sigma_w * spec.sigma_w;
    m1.iter()
        .zip(&t1)
        .map(|(me, te)| {
            let ne = te.norm();
            m2.iter()
                .zip(&t2)
                .zip(&n2)
                .map(|((mf, tf), nf)| {
                    let d = te.dot(tf);
                    (-(me - mf).norm_squared() / s2).exp() * d * d / (ne * nf)
                })
                .sum::<f64>()
        })
        .sum()
}

pub fn varifold_distance_squared(c1: &Curve, c2: &Curve, spec: &VarifoldSpec) -> f64 {
    if c1 == c2 {
        return 0.0;
    }
    let d2 = varifold_inner(c1, c1, spec) - 2.0 * varifold_inner(c1, c2, spec) + varifold_inner(c2, c2, spec);
    d2.max(0.0)
}

pub fn varifold_distance(c1: &Curve, c2: &Curve, spec: &VarifoldSpec) -> f64 {
    varifold_distance_squared(c1, c2, spec).sqrt()
}

/// Outer boundary of the mesh mapped through `positions`.
pub fn boundary_curve(mesh: &Mesh, positions: &[Point2<f64>]) -> Result<Curve> {
    let loops = mesh.boundary_loops();
    let outer = loops
        .iter()
        .max_by_key(|l| l.len())
        .ok_or_else(|| Error::Mesh("mesh has no boundary".into()))?;
    Curve::new(outer.iter().map(|&i| positions[i]).collect())
}

pub fn state_boundary(mesh: &Mesh, state: &DeformationState) -> Result<Curve> {
    boundary_curve(mesh, &state.positions)
}

/// One evaluated candidate; failed simulations keep their error message.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub center: Point2<f64>,
    pub distance: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub truth_center: Point2<f64>,
    pub truth_curve: Curve,
    pub rows: Vec<GridRow>,
}

impl GridSearch {
    /// Row with the smallest successful distance (first one on ties).
    pub fn argmin(&self) -> Option<&GridRow> {
        self.rows
            .iter()
            .filter(|r| r.distance.is_ok())
            .min_by(|a, b| {
                let (x, y) = (a.distance.as_ref().unwrap(), b.distance.as_ref().unwrap());
                x.total_cmp(y)
            })
    }
}

/// Regular grid `x0:x1:nx × y0:y1:ny`, x varying fastest.
pub fn center_grid(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Vec<Point2<f64>>> {
    let axis = |(a, b, n): (f64, f64, usize), name: &'static str| -> Result<Vec<f64>> {
        if n == 0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::param(name, "needs a finite range and at least one point"));
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        Ok((0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                a * (1.0 - s) + b * s
            })
            .collect())
    };
    let xs = axis(x, "grid.x")?;
    let ys = axis(y, "grid.y")?;
    Ok(ys.iter().flat_map(|&cy| xs.iter().map(move |&cx| Point2::new(cx, cy))).collect())
}

/// Final boundary at `T′` of the run whose initial potential is centered at `center`.
pub fn boundary_at(base: &SimulationConfig, mesh: &Mesh, center: Point2<f64>, t_prime: f64) -> Result<Curve> {
    let mut config = base.clone();
    config.potential.center = center;
    let p0 = config.potential.sample(mesh)?;
    let steps = config.steps_to(t_prime);
    let (state, _) = Simulation::new(config, mesh, p0)?.run_final(steps)?;
    state_boundary(mesh, &state)
}

/// Runs the ground truth and every candidate to `t_prime` and compares final
/// boundaries. Output order follows `centers` regardless of `jobs`.
pub fn grid_search_center(
    base: &SimulationConfig,
    mesh: &Mesh,
    centers: &[Point2<f64>],
    t_prime: f64,
    truth_center: Point2<f64>,
    jobs: Option<usize>,
) -> Result<GridSearch> {
    if centers.is_empty() {
        return Err(Error::param("centers", "must be nonempty"));
    }
    base.validate()?;
    if !(t_prime > 0.0 && t_prime <= base.t_end + 1e-12) {
        return Err(Error::param("tprime", "must lie in (0, time.T]"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    pool.install(|| {
        let truth_curve = boundary_at(base, mesh, truth_center, t_prime)?;
        let rows = centers
            .par_iter()
            .map(|&center| GridRow {
                center,
                distance: boundary_at(base, mesh, center, t_prime)
                    .map(|c| varifold_distance(&truth_curve, &c, &base.varifold))
                    .map_err(|e| e.to_string()),
            })
            .collect();
        Ok(GridSearch {
            truth_center,
            truth_curve,
            rows,
        })
    })
}
