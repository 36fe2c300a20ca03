//! The closed loop: yank from the Eulerian potential, regularized elastic
//! velocity, flow of the domain, and the density update on the new domain.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Matrix2, Point2};

use crate::elasticity::{elastic_from_gradients, ElasticParams};
use crate::error::{Error, Result};
use crate::geometry::{
    deformed_quadrature, eulerian_density, make_ellipse_mesh, DeformationState, DensityField, Mesh,
};
use crate::reaction_diffusion::{
    assemble_rd_system, initial_potential, BumpProfile, DiffusionSpec, ImplicitStepper,
};
use crate::rkhs::{collapse_points, gram_matrix, vector_gram, weighted_kernel_gradients, KernelSpec, VelocityField};
use crate::varifold::VarifoldSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub semi_axes: (f64, f64),
    pub edge_length: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec {
            semi_axes: (1.0, 0.6),
            edge_length: 0.08,
        }
    }
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        make_ellipse_mesh(self.semi_axes, self.edge_length)
    }
}

/// Parameters of the initial radial potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub center: Point2<f64>,
    pub radius: f64,
    pub height: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            center: Point2::new(-0.5, 0.3),
            radius: 0.3,
            height: 0.8,
        }
    }
}

impl PotentialSpec {
    pub fn sample(&self, mesh: &Mesh) -> Result<DensityField> {
        initial_potential(self.center, self.radius, self.height, mesh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Snapshot cadence in steps.
    pub every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            every: 1,
        }
    }
}

/// Every physical and numerical parameter of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub mesh: MeshSpec,
    pub kernel: KernelSpec,
    pub omega: f64,
    pub elastic: ElasticParams,
    pub diffusion: DiffusionSpec,
    pub reaction: Option<BumpProfile>,
    pub yank: Option<BumpProfile>,
    pub potential: PotentialSpec,
    pub dt: f64,
    pub t_end: f64,
    pub inner_iters: usize,
    pub varifold: VarifoldSpec,
    pub output: OutputSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mesh: MeshSpec::default(),
            kernel: KernelSpec::default(),
            omega: 16.0,
            elastic: ElasticParams::default(),
            diffusion: DiffusionSpec::default(),
            reaction: Some(BumpProfile::default_reaction()),
            yank: Some(BumpProfile::default_yank()),
            potential: PotentialSpec::default(),
            dt: 0.25,
            t_end: 25.0,
            inner_iters: 0,
            varifold: VarifoldSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::param("solver.omega", "must be > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("time.dt", "must be > 0"));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::param("time.T", "must be >= time.dt"));
        }
        if self.output.every == 0 {
            return Err(Error::param("output.every", "must be >= 1"));
        }
        KernelSpec::new(self.kernel.sigma)?;
        ElasticParams::new(self.elastic.lambda, self.elastic.mu)?;
        DiffusionSpec::new(self.diffusion.rx, self.diffusion.ry)?;
        for b in self.reaction.iter().chain(self.yank.iter()) {
            BumpProfile::new(b.p_min, b.p_max, b.height, b.shape)?;
        }
        VarifoldSpec::new(self.varifold.sigma_w)?;
        Ok(())
    }

    /// Number of steps to reach `t` (rounded to the nearest step).
    pub fn steps_to(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).max(1)
    }

    pub fn step_count(&self) -> usize {
        self.steps_to(self.t_end)
    }
}

/// Yank paired with every kernel basis field:
/// `j[(i,d)] = ∫_{φ(M_0)} Q(p) (−∂_d κ(|· − x_i| / σ)) dx`.
pub fn assemble_yank(
    mesh: &Mesh,
    state: &DeformationState,
    tau: &DensityField,
    yank: Option<&BumpProfile>,
    spec: &KernelSpec,
    points: &[Point2<f64>],
) -> Result<DVector<f64>> {
    let problem = VelocityProblem::new(mesh, state, tau, yank, spec, points)?;
    Ok(problem.yank)
}

/// Discrete velocity problem at one state: Gram, elastic matrix and yank on
/// a common set of control points.
#[derive(Debug, Clone)]
pub struct VelocityProblem {
    pub points: Vec<Point2<f64>>,
    pub gram: DMatrix<f64>,
    pub yank: DVector<f64>,
    cx: DMatrix<f64>,
    cy: DMatrix<f64>,
}

impl VelocityProblem {
    pub fn new(
        mesh: &Mesh,
        state: &DeformationState,
        tau: &DensityField,
        yank: Option<&BumpProfile>,
        spec: &KernelSpec,
        points: &[Point2<f64>],
    ) -> Result<Self> {
        let p = eulerian_density(state, tau)?;
        let cloud = deformed_quadrature(mesh, &state.positions)?;
        let pq = cloud.interpolate(mesh, &p);
        let q: Vec<f64> = pq
            .iter()
            .map(|&v| crate::reaction_diffusion::bump_eval(yank, v))
            .collect();
        let n = points.len();
        let (cx, cy, yank) = if q.iter().all(|&v| v == 0.0) {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DVector::zeros(2 * n))
        } else {
            let (cx, cy) = weighted_kernel_gradients(&cloud.points, &cloud.weights, points, spec);
            // √w_q Q(p_q), so that cx * s = Σ_q w_q Q_q ∂_x κ_i
            let s = DVector::from_iterator(q.len(), q.iter().zip(&cloud.weights).map(|(qv, w)| qv * w.sqrt()));
            let jx = -(&cx * &s);
            let jy = -(&cy * &s);
            let j = DVector::from_fn(2 * n, |r, _| if r % 2 == 0 { jx[r / 2] } else { jy[r / 2] });
            (cx, cy, j)
        };
        Ok(VelocityProblem {
            points: points.to_vec(),
            gram: gram_matrix(points, spec),
            yank,
            cx,
            cy,
        })
    }

    pub fn yank_is_zero(&self) -> bool {
        self.yank.iter().all(|&v| v == 0.0)
    }

    /// Elastic matrix on the same quadrature; zero-size when the yank vanishes.
    pub fn elastic(
        &self,
        mesh: &Mesh,
        state: &DeformationState,
        params: &ElasticParams,
        spec: &KernelSpec,
    ) -> Result<DMatrix<f64>> {
        if self.cx.ncols() > 0 {
            Ok(elastic_from_gradients(&self.cx, &self.cy, params))
        } else {
            crate::elasticity::assemble_elastic_matrix(mesh, state, params, spec, &self.points)
        }
    }
}

/// Minimizer of `(ω/2) aᵀ(G⊗I)a + ½ aᵀAa − aᵀj`, i.e. `(ω G⊗I + A) a = j`.
pub fn solve_velocity(j: &DVector<f64>, gram: &DMatrix<f64>, elastic: &DMatrix<f64>, omega: f64) -> Result<DVector<f64>> {
    if !(omega > 0.0) {
        return Err(Error::param("solver.omega", "must be > 0"));
    }
    let n2 = j.len();
    if gram.nrows() * 2 != n2 || elastic.nrows() != n2 || elastic.ncols() != n2 {
        return Err(Error::param("velocity system", "dimension mismatch"));
    }
    if j.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(n2));
    }
    let system = vector_gram(gram) * omega + elastic;
    let chol = system.clone().cholesky().ok_or_else(|| {
        Error::Indefinite("Cholesky factorization of ωG + A failed".into())
    })?;
    let mut a = chol.solve(j);
    // two rounds of iterative refinement
    for _ in 0..2 {
        let r = j - &system * &a;
        a += chol.solve(&r);
    }
    if let Some(i) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::LinearSolve(format!("non-finite momentum component {i}")));
    }
    Ok(a)
}

/// Discrete objective `(ω/2) aᵀGa + ½ aᵀAa − aᵀj`.
pub fn velocity_objective(a: &DVector<f64>, j: &DVector<f64>, gram: &DMatrix<f64>, elastic: &DMatrix<f64>, omega: f64) -> f64 {
    let g = vector_gram(gram);
    0.5 * omega * a.dot(&(&g * a)) + 0.5 * a.dot(&(elastic * a)) - a.dot(j)
}

/// Forward Euler on `φ` and on `Dφ` (`d/dt Dφ = Dv(φ) Dφ`).
pub fn advance_flow(state: &DeformationState, v: &VelocityField, dt: f64) -> Result<DeformationState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("time.dt", "must be > 0"));
    }
    let time = state.time + dt;
    if v.is_zero() {
        let mut next = state.clone();
        next.time = time;
        return Ok(next);
    }
    let (values, jacobians) = v.eval(&state.positions);
    let positions = state
        .positions
        .iter()
        .zip(&values)
        .map(|(p, u)| p + u * dt)
        .collect();
    let grad = state
        .grad
        .iter()
        .zip(&jacobians)
        .map(|(g, dv)| (Matrix2::identity() + dv * dt) * g)
        .collect();
    let next = DeformationState::from_parts(positions, grad, time);
    if let Some(node) = next.jac.iter().position(|&j| !(j > 0.0)) {
        return Err(Error::DiffeomorphismViolation {
            time,
            node,
            jac: next.jac[node],
        });
    }
    Ok(next)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// `ω aᵀGa`.
    pub regularization: f64,
    /// `aᵀj`.
    pub work: f64,
    pub max_displacement: f64,
    pub min_jacobian: f64,
    pub min_tau: f64,
    pub max_tau: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: DeformationState,
    pub tau: DensityField,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

/// A run that failed part-way; `trajectory` holds everything up to the failure.
#[derive(Debug)]
pub struct Aborted {
    pub trajectory: Trajectory,
    pub error: Error,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "simulation aborted after {} snapshots: {}", self.trajectory.snapshots.len(), self.error)
    }
}

impl std::error::Error for Aborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Solved velocity at one state, with the pieces needed for diagnostics.
#[derive(Debug, Clone)]
pub struct VelocitySolution {
    pub field: VelocityField,
    pub momenta: DVector<f64>,
    pub yank: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub elastic: Option<DMatrix<f64>>,
}

/// Solves for the velocity at `(state, tau)` with control points at the
/// current node positions (near-duplicates merged).
pub fn velocity_at(mesh: &Mesh, state: &DeformationState, tau: &DensityField, config: &SimulationConfig) -> Result<VelocitySolution> {
    let collapsed = collapse_points(&state.positions, &config.kernel);
    let problem = VelocityProblem::new(mesh, state, tau, config.yank.as_ref(), &config.kernel, &collapsed.points)?;
    let (momenta, elastic) = if problem.yank_is_zero() {
        (DVector::zeros(problem.yank.len()), None)
    } else {
        let a_mat = problem.elastic(mesh, state, &config.elastic, &config.kernel)?;
        let a = solve_velocity(&problem.yank, &problem.gram, &a_mat, config.omega)?;
        (a, Some(a_mat))
    };
    let field = VelocityField::from_interleaved(config.kernel, collapsed.points, &momenta)?;
    Ok(VelocitySolution {
        field,
        momenta,
        yank: problem.yank,
        gram: problem.gram,
        elastic,
    })
}

/// Sequential driver of the coupled system.
pub struct Simulation<'m> {
    mesh: &'m Mesh,
    config: SimulationConfig,
    state: DeformationState,
    tau: DensityField,
    step: usize,
    stepper: Option<ImplicitStepper>,
}

impl<'m> Simulation<'m> {
    pub fn new(config: SimulationConfig, mesh: &'m Mesh, p0: DensityField) -> Result<Self> {
        config.validate()?;
        if p0.len() != mesh.node_count() {
            return Err(Error::param("p0", "length does not match the mesh"));
        }
        if !p0.is_finite() {
            return Err(Error::param("p0", "must be finite"));
        }
        Ok(Simulation {
            mesh,
            config,
            state: DeformationState::identity(mesh),
            // φ(0) = id, so τ(0) = p0
            tau: p0,
            step: 0,
            stepper: None,
        })
    }

    pub fn state(&self) -> &DeformationState {
        &self.state
    }

    pub fn tau(&self) -> &DensityField {
        &self.tau
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            step: self.step,
            time: self.state.time,
            state: self.state.clone(),
            tau: self.tau.clone(),
        }
    }

    fn density_step(&mut self, state: &DeformationState, unchanged: bool) -> Result<DensityField> {
        if !(unchanged && self.stepper.is_some()) {
            let system = assemble_rd_system(self.mesh, state, &self.config.diffusion)?;
            self.stepper = Some(ImplicitStepper::new(&system, self.config.dt)?);
        }
        self.stepper
            .as_ref()
            .expect("stepper initialized above")
            .step(&self.tau, self.config.reaction.as_ref())
    }

    /// Advances one time step: yank → velocity → flow → density.
    pub fn step(&mut self) -> Result<StepReport> {
        let dt = self.config.dt;
        let sol = velocity_at(self.mesh, &self.state, &self.tau, &self.config)?;
        let mut next_state = advance_flow(&self.state, &sol.field, dt)?;
        let mut unchanged = sol.field.is_zero();
        let mut next_tau = self.density_step(&next_state, unchanged)?;
        let mut sol = sol;

        for _ in 0..self.config.inner_iters {
            let trial = velocity_at(self.mesh, &next_state, &next_tau, &self.config)?;
            next_state = advance_flow(&self.state, &trial.field, dt)?;
            unchanged = trial.field.is_zero();
            next_tau = self.density_step(&next_state, unchanged)?;
            sol = trial;
        }

        let regularization = self.config.omega * {
            let g = vector_gram(&sol.gram);
            sol.momenta.dot(&(&g * &sol.momenta))
        };
        let work = sol.momenta.dot(&sol.yank);
        let max_displacement = next_state
            .positions
            .iter()
            .zip(&self.state.positions)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);

        self.state = next_state;
        self.tau = next_tau;
        self.step += 1;
        let (min_tau, max_tau) = self
            .tau
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(StepReport {
            step: self.step,
            time: self.state.time,
            regularization,
            work,
            max_displacement,
            min_jacobian: self.state.min_jacobian(),
            min_tau,
            max_tau,
        })
    }

    /// Runs `steps` steps, recording snapshots every `output.every` steps
    /// (and always the final one).
    pub fn run(mut self, steps: usize) -> std::result::Result<Trajectory, Box<Aborted>> {
        let every = self.config.output.every;
        let mut traj = Trajectory {
            snapshots: vec![self.snapshot()],
            reports: Vec::with_capacity(steps),
        };
        for k in 1..=steps {
            match self.step() {
                Ok(report) => traj.reports.push(report),
                Err(error) => {
                    return Err(Box::new(Aborted {
                        trajectory: traj,
                        error,
                    }))
                }
            }
            if k % every == 0 || k == steps {
                traj.snapshots.push(self.snapshot());
            }
        }
        Ok(traj)
    }

    /// Runs `steps` steps and returns only the final state.
    pub fn run_final(mut self, steps: usize) -> Result<(DeformationState, DensityField)> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok((self.state, self.tau))
    }
}

/// Full run over `[0, T]` with the configured cadence.
pub fn run_simulation(config: &SimulationConfig, mesh: &Mesh, p0: DensityField) -> std::result::Result<Trajectory, Box<Aborted>> {
    let steps = config.step_count();
    let sim = Simulation::new(config.clone(), mesh, p0).map_err(|error| {
        Box::new(Aborted {
            trajectory: Trajectory::default(),
            error,
        })
    })?;
    sim.run(steps)
}
