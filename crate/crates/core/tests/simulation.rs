use morphoflow::coupling::{MeshSpec, OutputSpec};
use morphoflow::io::{parse_polyline, polyline_text, read_mesh, write_mesh};
use morphoflow::reaction_diffusion::{assemble_rd_system, ImplicitStepper};
use morphoflow::varifold::{boundary_at, grid_search_center, state_boundary};
use morphoflow::*;
use nalgebra::{Matrix2, Point2};

fn small() -> SimulationConfig {
    SimulationConfig {
        mesh: MeshSpec {
            semi_axes: (1.0, 0.6),
            edge_length: 0.15,
        },
        t_end: 3.0,
        ..Default::default()
    }
}

/// Smooth nonaffine map x + 0.1 (sin 2x, cos 3y) with its exact gradient.
fn wavy_state(mesh: &Mesh) -> DeformationState {
    let positions = mesh
        .nodes()
        .iter()
        .map(|p| Point2::new(p.x + 0.1 * (2.0 * p.x).sin(), p.y + 0.1 * (3.0 * p.y).cos()))
        .collect();
    let grad = mesh
        .nodes()
        .iter()
        .map(|p| Matrix2::new(1.0 + 0.2 * (2.0 * p.x).cos(), 0.0, 0.0, 1.0 - 0.3 * (3.0 * p.y).sin()))
        .collect();
    DeformationState::from_parts(positions, grad, 0.0)
}

#[test]
fn trajectory_records_every_step_in_order() {
    let config = small();
    let mesh = config.mesh.build().unwrap();
    let p0 = config.potential.sample(&mesh).unwrap();
    let traj = run_simulation(&config, &mesh, p0.clone()).unwrap();
    let steps = config.step_count();
    assert_eq!(traj.reports.len(), steps);
    assert_eq!(traj.snapshots.len(), steps + 1);
    let first = &traj.snapshots[0];
    assert_eq!(first.state.positions, mesh.nodes());
    assert_eq!(first.tau, p0);
    assert!(traj.snapshots.windows(2).all(|w| w[1].time > w[0].time && w[1].step == w[0].step + 1));
    assert!((traj.last().unwrap().time - config.t_end).abs() < 1e-12);
    for r in &traj.reports {
        assert!(r.min_jacobian > 0.0);
        assert!(r.regularization <= r.work * (1.0 + 1e-12) + 1e-15, "{r:?}");
    }
}

#[test]
fn snapshot_cadence_keeps_the_final_state() {
    let config = SimulationConfig {
        output: OutputSpec {
            every: 5,
            ..Default::default()
        },
        ..small()
    };
    let mesh = config.mesh.build().unwrap();
    let p0 = config.potential.sample(&mesh).unwrap();
    let traj = run_simulation(&config, &mesh, p0).unwrap();
    let steps: Vec<usize> = traj.snapshots.iter().map(|s| s.step).collect();
    assert_eq!(steps, vec![0, 5, 10, 12]);
}

#[test]
fn runs_are_deterministic() {
    let config = small();
    let mesh = config.mesh.build().unwrap();
    let p0 = config.potential.sample(&mesh).unwrap();
    let a = Simulation::new(config.clone(), &mesh, p0.clone()).unwrap().run_final(12).unwrap();
    let b = Simulation::new(config, &mesh, p0).unwrap().run_final(12).unwrap();
    assert_eq!(a.0.positions, b.0.positions);
    assert_eq!(a.1, b.1);
}

#[test]
fn picard_iterations_stay_close_to_the_plain_step() {
    let base = small();
    let mesh = base.mesh.build().unwrap();
    let p0 = base.potential.sample(&mesh).unwrap();
    let plain = Simulation::new(base.clone(), &mesh, p0.clone()).unwrap().run_final(12).unwrap();
    let config = SimulationConfig { inner_iters: 2, ..base };
    let iter = Simulation::new(config, &mesh, p0).unwrap().run_final(12).unwrap();
    assert!(iter.0.min_jacobian() > 0.0);
    let gap = plain
        .0
        .positions
        .iter()
        .zip(&iter.0.positions)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let moved = plain
        .0
        .positions
        .iter()
        .zip(mesh.nodes())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(moved > 0.0 && gap < 0.5 * moved, "gap {gap}, moved {moved}");
}

#[test]
fn mass_is_conserved_on_a_deformed_state() {
    let mesh = make_ellipse_mesh((1.0, 0.6), 0.15).unwrap();
    let state = wavy_state(&mesh);
    let spec = DiffusionSpec::new(0.025, 0.005).unwrap();
    let system = assemble_rd_system(&mesh, &state, &spec).unwrap();
    let stepper = ImplicitStepper::new(&system, 0.1).unwrap();
    let mut tau = DensityField::new(mesh.nodes().iter().map(|p| (-(p.x * p.x + 4.0 * p.y * p.y)).exp()).collect());
    let m0 = tau.total_mass(&mesh);
    for _ in 0..100 {
        tau = stepper.step(&tau, None).unwrap();
    }
    assert!((tau.total_mass(&mesh) - m0).abs() <= 1e-10 * m0);
}

#[test]
fn uniform_eulerian_density_is_nearly_steady_and_improves_with_refinement() {
    // τ = c Jφ means a uniform density in the deformed domain: the transport
    // operator should annihilate it up to discretization error
    let spec = DiffusionSpec::new(0.025, 0.005).unwrap();
    let residual = |h: f64| {
        let mesh = make_ellipse_mesh((1.0, 0.6), h).unwrap();
        let state = wavy_state(&mesh);
        let system = assemble_rd_system(&mesh, &state, &spec).unwrap();
        let tau = nalgebra::DVector::from_vec(state.jac.clone());
        let r = system.transport() * &tau;
        let flux = system.stiffness.clone() * &tau;
        r.norm() / flux.norm()
    };
    let coarse = residual(0.2);
    let fine = residual(0.1);
    assert!(fine < coarse, "coarse {coarse:.3e}, fine {fine:.3e}");
    assert!(fine < 0.2, "fine {fine:.3e}");
}

#[test]
fn grid_search_at_the_truth_is_zero_and_job_count_does_not_matter() {
    let base = SimulationConfig { t_end: 2.0, ..small() };
    let mesh = base.mesh.build().unwrap();
    let truth = Point2::new(-0.5, 0.3);
    let centers = vec![Point2::new(0.0, 0.0), truth, Point2::new(0.4, -0.2)];
    let one = grid_search_center(&base, &mesh, &centers, 2.0, truth, Some(1)).unwrap();
    let three = grid_search_center(&base, &mesh, &centers, 2.0, truth, Some(3)).unwrap();
    assert_eq!(one.rows, three.rows);
    assert_eq!(one.rows.iter().map(|r| r.center).collect::<Vec<_>>(), centers);
    assert_eq!(one.rows[1].distance, Ok(0.0));
    assert_eq!(one.argmin().unwrap().center, truth);
    assert!(one.rows[0].distance.clone().unwrap() > 0.0);
}

#[test]
fn potentials_outside_the_domain_leave_the_shape_alone() {
    let base = SimulationConfig { t_end: 2.0, ..small() };
    let mesh = base.mesh.build().unwrap();
    let a = boundary_at(&base, &mesh, Point2::new(5.0, 5.0), 2.0).unwrap();
    let b = boundary_at(&base, &mesh, Point2::new(-7.0, 3.0), 2.0).unwrap();
    let rest = state_boundary(&mesh, &DeformationState::identity(&mesh)).unwrap();
    assert_eq!(a, rest);
    assert_eq!(b, rest);
}

#[test]
fn grid_search_rejects_bad_arguments() {
    let base = small();
    let mesh = base.mesh.build().unwrap();
    let c = Point2::new(0.0, 0.0);
    assert!(grid_search_center(&base, &mesh, &[], 1.0, c, None).is_err());
    assert!(grid_search_center(&base, &mesh, &[c], 0.0, c, None).is_err());
    assert!(grid_search_center(&base, &mesh, &[c], base.t_end + 1.0, c, None).is_err());
}

#[test]
fn files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = SimulationConfig {
        omega: 3.5,
        inner_iters: 1,
        ..small()
    };
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, write_config(&config)).unwrap();
    assert_eq!(parse_config(&cfg).unwrap(), config);

    let mesh = config.mesh.build().unwrap();
    let path = tmp.path().join("mesh.txt");
    write_mesh(&path, &mesh).unwrap();
    let back = read_mesh(&path).unwrap();
    assert_eq!(back.nodes(), mesh.nodes());
    assert_eq!(back.triangles(), mesh.triangles());

    let curve = state_boundary(&mesh, &wavy_state(&mesh)).unwrap();
    let text = polyline_text(&curve);
    assert_eq!(parse_polyline(&text, &path).unwrap(), curve);
}
