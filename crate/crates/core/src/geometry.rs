//! Reference mesh, deformation state and the nodal fields carried on them.
//!
//! Everything downstream works on the reference triangulation of the initial
//! domain: the deformation is stored per node (position, deformation gradient
//! and its determinant) and the growth potential is stored in its Lagrangian
//! form on the same nodes.

use std::collections::HashMap;

use nalgebra::{Matrix2, Point2, Vector2};

use crate::error::{Error, Result};

/// Barycentric coordinates of the 3-point interior rule (degree 2).
pub const QUAD_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Weights of [`QUAD_BARY`], relative to the triangle area.
pub const QUAD_WEIGHT: f64 = 1.0 / 3.0;

/// Signed area of the triangle `(a, b, c)`; positive when counterclockwise.
pub fn signed_area(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    0.5 * ((b - a).perp(&(c - a)))
}

/// Gradients of the three P1 hat functions on a triangle.
pub fn hat_gradients(p: [&Point2<f64>; 3]) -> (f64, [Vector2<f64>; 3]) {
    let area = signed_area(p[0], p[1], p[2]);
    let inv = 1.0 / (2.0 * area);
    let grad = |a: &Point2<f64>, b: &Point2<f64>| Vector2::new(a.y - b.y, b.x - a.x) * inv;
    (
        area,
        [grad(p[1], p[2]), grad(p[2], p[0]), grad(p[0], p[1])],
    )
}

/// Per-triangle quantities on the reference configuration.
#[derive(Debug, Clone)]
pub struct Element {
    pub area: f64,
    pub grads: [Vector2<f64>; 3],
}

/// Triangulated reference domain.
///
/// Triangles are counterclockwise and boundary edges are oriented so that the
/// domain lies on their left (outward normal on the right).
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Point2<f64>>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    elements: Vec<Element>,
}

impl Mesh {
    pub fn new(
        nodes: Vec<Point2<f64>>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::Mesh("mesh has no nodes or no triangles".into()));
        }
        let n = nodes.len();
        let mut elements = Vec::with_capacity(triangles.len());
        // directed edge -> number of triangles using it
        let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            let p = [&nodes[tri[0]], &nodes[tri[1]], &nodes[tri[2]]];
            let (area, grads) = hat_gradients(p);
            if !(area > 0.0) {
                return Err(Error::Mesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for k in 0..3 {
                *edge_use.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
            elements.push(Element { area, grads });
        }

        let mut outgoing = vec![0usize; n];
        let mut incoming = vec![0usize; n];
        for (e, &[i, j]) in boundary_edges.iter().enumerate() {
            if i >= n || j >= n || i == j {
                return Err(Error::Mesh(format!("boundary edge {e} is malformed")));
            }
            let forward = edge_use.get(&(i, j)).copied().unwrap_or(0);
            let backward = edge_use.get(&(j, i)).copied().unwrap_or(0);
            if forward != 1 || backward != 0 {
                return Err(Error::Mesh(format!(
                    "boundary edge {e} ({i}, {j}) must belong to exactly one triangle with matching orientation"
                )));
            }
            outgoing[i] += 1;
            incoming[j] += 1;
        }
        if outgoing.iter().zip(&incoming).any(|(&o, &i)| o != i || o > 1) {
            return Err(Error::Mesh("boundary edges do not form closed loops".into()));
        }
        // every edge used by a single triangle must be declared as boundary
        let declared = boundary_edges.len();
        let open = edge_use
            .keys()
            .filter(|(i, j)| !edge_use.contains_key(&(*j, *i)))
            .count();
        if open != declared {
            return Err(Error::Mesh(format!(
                "{open} edges lie on the boundary but {declared} boundary edges were declared"
            )));
        }

        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges,
            elements,
        })
    }

    pub fn nodes(&self) -> &[Point2<f64>] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    /// Lumped (row-sum) reference mass: `∫ ψ_i dx` for every node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.nodes.len()];
        for (tri, el) in self.triangles.iter().zip(&self.elements) {
            for &i in tri {
                mass[i] += el.area / 3.0;
            }
        }
        mass
    }

    /// Ordered boundary loops, each starting at its smallest node index.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let next: HashMap<usize, usize> = self.boundary_edges.iter().map(|&[i, j]| (i, j)).collect();
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut seen = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for s in starts {
            if seen.contains(&s) {
                continue;
            }
            let mut lp = vec![s];
            seen.insert(s);
            let mut cur = next[&s];
            while cur != s {
                seen.insert(cur);
                lp.push(cur);
                cur = next[&cur];
            }
            loops.push(lp);
        }
        loops
    }

    /// Largest edge length over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(i, j)| (self.nodes[i] - self.nodes[j]).norm())
            .fold(0.0, f64::max)
    }
}

/// Ramanujan's approximation of the ellipse perimeter.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
}

/// Structured ring/sector triangulation of the ellipse `x²/a² + y²/b² ≤ 1`.
///
/// Rings are concentric scaled copies of the boundary; consecutive rings are
/// stitched by merging their nodes in angular order.
pub fn make_ellipse_mesh(semi_axes: (f64, f64), target_edge_length: f64) -> Result<Mesh> {
    let (a, b) = semi_axes;
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("mesh.semi_axes", "semi-axes must be positive"));
    }
    let h = target_edge_length;
    if !(h > 0.0) || h >= a.min(b) {
        return Err(Error::param(
            "mesh.edge_length",
            format!("edge length must lie in (0, {})", a.min(b)),
        ));
    }
    let rings = (a.max(b) / h).ceil() as usize;
    let perimeter = ellipse_perimeter(a, b);

    let mut nodes = vec![Point2::origin()];
    // (first node index, node count, angles) per ring
    let mut ring_info: Vec<(usize, Vec<f64>)> = Vec::with_capacity(rings);
    for k in 1..=rings {
        let s = k as f64 / rings as f64;
        let count = ((s * perimeter / h).ceil() as usize).max(6);
        let step = std::f64::consts::TAU / count as f64;
        let offset = if k % 2 == 0 { 0.5 * step } else { 0.0 };
        let first = nodes.len();
        let angles: Vec<f64> = (0..count).map(|i| offset + i as f64 * step).collect();
        nodes.extend(
            angles
                .iter()
                .map(|&th| Point2::new(a * s * th.cos(), b * s * th.sin())),
        );
        ring_info.push((first, angles));
    }

    let mut triangles = Vec::new();
    let (first, angles) = &ring_info[0];
    let m = angles.len();
    for i in 0..m {
        triangles.push([0, first + i, first + (i + 1) % m]);
    }
    for pair in ring_info.windows(2) {
        let (fi, ai) = &pair[0];
        let (fo, ao) = &pair[1];
        let (m, n) = (ai.len(), ao.len());
        let angle = |angles: &[f64], k: usize| {
            let c = angles.len();
            angles[k % c] + std::f64::consts::TAU * (k / c) as f64
        };
        let (mut i, mut j) = (0usize, 0usize);
        while i < m || j < n {
            let advance_outer = if j == n {
                false
            } else if i == m {
                true
            } else {
                angle(ao, j + 1) <= angle(ai, i + 1)
            };
            if advance_outer {
                triangles.push([fi + i % m, fo + j % n, fo + (j + 1) % n]);
                j += 1;
            } else {
                triangles.push([fi + i % m, fo + j % n, fi + (i + 1) % m]);
                i += 1;
            }
        }
    }

    let (fo, ao) = ring_info.last().expect("at least one ring");
    let n = ao.len();
    let boundary_edges = (0..n).map(|j| [fo + j, fo + (j + 1) % n]).collect();
    Mesh::new(nodes, triangles, boundary_edges)
}

/// Per-node deformation: `φ(t, x_i)`, `Dφ(t, x_i)` and `Jφ = det Dφ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationState {
    pub positions: Vec<Point2<f64>>,
    pub grad: Vec<Matrix2<f64>>,
    pub jac: Vec<f64>,
    pub time: f64,
}

impl DeformationState {
    pub fn identity(mesh: &Mesh) -> Self {
        let n = mesh.node_count();
        DeformationState {
            positions: mesh.nodes().to_vec(),
            grad: vec![Matrix2::identity(); n],
            jac: vec![1.0; n],
            time: 0.0,
        }
    }

    /// Builds a state from positions and gradients, deriving the Jacobians.
    pub fn from_parts(positions: Vec<Point2<f64>>, grad: Vec<Matrix2<f64>>, time: f64) -> Self {
        let jac = grad.iter().map(|g| g.determinant()).collect();
        DeformationState {
            positions,
            grad,
            jac,
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn min_jacobian(&self) -> f64 {
        self.jac.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fails on the first node whose Jacobian is not strictly positive.
    pub fn ensure_positive(&self) -> Result<()> {
        match self.jac.iter().position(|&j| !(j > 0.0)) {
            Some(node) => Err(Error::DegenerateDeformation {
                node,
                jac: self.jac[node],
            }),
            None => Ok(()),
        }
    }

    /// Area of the deformed domain `φ(M_0)`.
    pub fn deformed_area(&self, mesh: &Mesh) -> f64 {
        mesh.triangles()
            .iter()
            .map(|t| {
                signed_area(
                    &self.positions[t[0]],
                    &self.positions[t[1]],
                    &self.positions[t[2]],
                )
            })
            .sum()
    }
}

/// Lagrangian density of the growth potential on the reference nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(values: Vec<f64>) -> Self {
        DensityField { values }
    }

    pub fn zeros(n: usize) -> Self {
        DensityField {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Total potential mass `∫_{M_0} τ dx` with the lumped reference mass.
    pub fn total_mass(&self, mesh: &Mesh) -> f64 {
        mesh.lumped_mass()
            .iter()
            .zip(&self.values)
            .map(|(m, t)| m * t)
            .sum()
    }
}

/// Eulerian potential at material points: `p(φ(x_i)) = τ(x_i) / Jφ(x_i)`.
pub fn eulerian_density(state: &DeformationState, tau: &DensityField) -> Result<Vec<f64>> {
    if state.len() != tau.len() {
        return Err(Error::param(
            "tau",
            format!("{} values for {} nodes", tau.len(), state.len()),
        ));
    }
    state.ensure_positive()?;
    Ok(tau
        .values
        .iter()
        .zip(&state.jac)
        .map(|(t, j)| t / j)
        .collect())
}

/// Lumped L2 projection of the element-wise gradient of a P1 field.
///
/// Each node receives the area-weighted mean of the gradients of its
/// incident triangles, so affine fields are reproduced exactly.
pub fn recover_gradient(values: &[f64], mesh: &Mesh) -> Vec<Vector2<f64>> {
    let n = mesh.node_count();
    let mut acc = vec![Vector2::zeros(); n];
    let mut weight = vec![0.0; n];
    for (tri, el) in mesh.triangles().iter().zip(mesh.elements()) {
        let g: Vector2<f64> = (0..3).map(|k| el.grads[k] * values[tri[k]]).sum();
        for &i in tri {
            acc[i] += g * el.area;
            weight[i] += el.area;
        }
    }
    acc.iter()
        .zip(&weight)
        .map(|(g, w)| if *w > 0.0 { g / *w } else { Vector2::zeros() })
        .collect()
}

/// Recovered `∇Jφ / Jφ`, computed as the gradient of `log Jφ`.
pub fn log_jacobian_gradient(state: &DeformationState, mesh: &Mesh) -> Result<Vec<Vector2<f64>>> {
    state.ensure_positive()?;
    let logs: Vec<f64> = state.jac.iter().map(|j| j.ln()).collect();
    Ok(recover_gradient(&logs, mesh))
}

/// Quadrature points and weights on the deformed configuration.
#[derive(Debug, Clone)]
pub struct QuadratureCloud {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    /// Owning triangle of each point.
    pub triangle: Vec<usize>,
    /// Barycentric rule index of each point.
    pub rule: Vec<usize>,
}

impl QuadratureCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interpolates a nodal P1 field at every point.
    pub fn interpolate(&self, mesh: &Mesh, values: &[f64]) -> Vec<f64> {
        self.triangle
            .iter()
            .zip(&self.rule)
            .map(|(&t, &q)| {
                let tri = mesh.triangles()[t];
                (0..3).map(|k| QUAD_BARY[q][k] * values[tri[k]]).sum()
            })
            .collect()
    }
}

/// Three-point quadrature on every deformed triangle `φ(T)`.
pub fn deformed_quadrature(mesh: &Mesh, positions: &[Point2<f64>]) -> Result<QuadratureCloud> {
    let nt = mesh.triangles().len();
    let mut cloud = QuadratureCloud {
        points: Vec::with_capacity(3 * nt),
        weights: Vec::with_capacity(3 * nt),
        triangle: Vec::with_capacity(3 * nt),
        rule: Vec::with_capacity(3 * nt),
    };
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = [&positions[tri[0]], &positions[tri[1]], &positions[tri[2]]];
        let area = signed_area(p[0], p[1], p[2]);
        if !(area > 0.0) {
            return Err(Error::InvertedElement { triangle: t, area });
        }
        for (q, bary) in QUAD_BARY.iter().enumerate() {
            let coords = p[0].coords * bary[0] + p[1].coords * bary[1] + p[2].coords * bary[2];
            cloud.points.push(Point2::from(coords));
            cloud.weights.push(area * QUAD_WEIGHT);
            cloud.triangle.push(t);
            cloud.rule.push(q);
        }
    }
    Ok(cloud)
}

/// `∫ f dx` of a nodal P1 field over the mesh placed at `positions`.
pub fn integrate_nodal(mesh: &Mesh, positions: &[Point2<f64>], values: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .map(|t| {
            let area = signed_area(&positions[t[0]], &positions[t[1]], &positions[t[2]]);
            area * (values[t[0]] + values[t[1]] + values[t[2]]) / 3.0
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square(n: usize) -> Mesh {
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut nodes = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                nodes.push(Point2::new(i as f64 * h, j as f64 * h));
            }
        }
        let mut tris = Vec::new();
        for j in 0..n {
            for i in 0..n {
                tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let mut b = Vec::new();
        for i in 0..n {
            b.push([idx(i, 0), idx(i + 1, 0)]);
            b.push([idx(n, i), idx(n, i + 1)]);
            b.push([idx(n - i, n), idx(n - i - 1, n)]);
            b.push([idx(0, n - i), idx(0, n - i - 1)]);
        }
        Mesh::new(nodes, tris, b).unwrap()
    }

    #[test]
    fn ellipse_mesh_is_valid_with_single_boundary_loop() {
        let mesh = make_ellipse_mesh((1.0, 0.6), 0.05).unwrap();
        assert!(mesh.elements().iter().all(|e| e.area > 0.0));
        assert_eq!(mesh.boundary_loops().len(), 1);
        assert!(mesh.max_edge_length() <= 2.0 * 0.05);
    }

    #[test]
    fn disk_mesh_area_close_to_pi() {
        let mesh = make_ellipse_mesh((1.0, 1.0), 0.1).unwrap();
        let rel = (mesh.total_area() - std::f64::consts::PI).abs() / std::f64::consts::PI;
        assert!(rel < 0.02, "relative area error {rel}");
    }

    #[test]
    fn boundary_node_count_tracks_perimeter() {
        let mesh = make_ellipse_mesh((1.0, 0.6), 0.05).unwrap();
        let expected = ellipse_perimeter(1.0, 0.6) / 0.05;
        let count = mesh.boundary_loops()[0].len() as f64;
        assert!(count >= expected / 2.0 && count <= expected * 2.0);
    }

    #[test]
    fn ellipse_mesh_rejects_bad_parameters() {
        assert!(make_ellipse_mesh((0.0, 1.0), 0.1).is_err());
        assert!(make_ellipse_mesh((1.0, 0.6), 0.6).is_err());
        assert!(make_ellipse_mesh((1.0, 0.6), -0.1).is_err());
    }

    #[test]
    fn mesh_rejects_clockwise_triangle() {
        let nodes = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        let err = Mesh::new(nodes, vec![[0, 2, 1]], vec![[0, 2], [2, 1], [1, 0]]);
        assert!(err.is_err());
    }

    #[test]
    fn mesh_rejects_open_boundary() {
        let nodes = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        let err = Mesh::new(nodes, vec![[0, 1, 2]], vec![[0, 1], [1, 2]]);
        assert!(err.is_err());
    }

    #[test]
    fn eulerian_density_identity_and_dilation() {
        let mesh = make_ellipse_mesh((1.0, 0.6), 0.1).unwrap();
        let tau = DensityField::new(vec![1.0; mesh.node_count()]);
        let id = DeformationState::identity(&mesh);
        assert!(eulerian_density(&id, &tau).unwrap().iter().all(|&p| p == 1.0));

        let grad = vec![Matrix2::identity() * 2.0; mesh.node_count()];
        let pos = mesh.nodes().iter().map(|p| Point2::from(p.coords * 2.0)).collect();
        let dil = DeformationState::from_parts(pos, grad, 0.0);
        assert!(eulerian_density(&dil, &tau).unwrap().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn eulerian_density_rejects_folded_state() {
        let mesh = make_ellipse_mesh((1.0, 0.6), 0.2).unwrap();
        let mut state = DeformationState::identity(&mesh);
        state.grad[3] = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        state.jac[3] = -1.0;
        let tau = DensityField::zeros(mesh.node_count());
        assert!(matches!(
            eulerian_density(&state, &tau),
            Err(Error::DegenerateDeformation { node: 3, .. })
        ));
    }

    #[test]
    fn affine_change_of_variables_preserves_mass() {
        let mesh = make_ellipse_mesh((1.0, 0.6), 0.1).unwrap();
        let lin = Matrix2::new(1.1, 0.2, -0.05, 0.9);
        let shift = Vector2::new(0.3, -0.1);
        let positions: Vec<_> = mesh.nodes().iter().map(|p| Point2::from(lin * p.coords + shift)).collect();
        let state = DeformationState::from_parts(positions, vec![lin; mesh.node_count()], 0.0);
        let tau = DensityField::new(
            mesh.nodes().iter().map(|p| 1.0 + p.x * p.x - 0.5 * p.y).collect(),
        );
        let p = eulerian_density(&state, &tau).unwrap();
        let reference = integrate_nodal(&mesh, mesh.nodes(), &tau.values);
        let deformed = integrate_nodal(&mesh, &state.positions, &p);
        assert_relative_eq!(reference, deformed, max_relative = 1e-12);
    }

    #[test]
    fn gradient_recovery_exact_for_affine() {
        let mesh = make_ellipse_mesh((1.0, 0.6), 0.1).unwrap();
        let vals: Vec<f64> = mesh.nodes().iter().map(|p| 3.0 * p.x + 2.0 * p.y - 1.0).collect();
        for g in recover_gradient(&vals, &mesh) {
            assert_relative_eq!(g.x, 3.0, epsilon = 1e-11);
            assert_relative_eq!(g.y, 2.0, epsilon = 1e-11);
        }
        let consts = vec![4.2; mesh.node_count()];
        for g in recover_gradient(&consts, &mesh) {
            assert!(g.norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_recovery_converges_for_quadratic() {
        // x² has gradient 2x; interior error should at least halve with h.
        let err = |n: usize| {
            let mesh = unit_square(n);
            let vals: Vec<f64> = mesh.nodes().iter().map(|p| p.x * p.x).collect();
            let g = recover_gradient(&vals, &mesh);
            mesh.nodes()
                .iter()
                .zip(&g)
                .filter(|(p, _)| p.x > 1e-9 && p.x < 1.0 - 1e-9 && p.y > 1e-9 && p.y < 1.0 - 1e-9)
                .map(|(p, g)| ((g.x - 2.0 * p.x).abs()).max(g.y.abs()))
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(8), err(16));
        assert!(fine <= 0.5 * coarse + 1e-12, "coarse {coarse} fine {fine}");
    }
}
