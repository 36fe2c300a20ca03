use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use morphoflow::io::{landscape_csv, polyline_text, write_mesh, write_trajectory, RunStatus};
use morphoflow::varifold::center_grid;
use morphoflow::{grid_search_center, parse_config, run_simulation, Error, SimulationConfig};

#[derive(Parser)]
#[command(name = "morphoflow", version, about = "Growth-potential driven shape evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coupled simulation and write snapshots plus a manifest.
    Simulate { config: PathBuf },
    /// Compare final boundaries over a grid of initial-potential centers.
    Gridsearch {
        config: PathBuf,
        /// `x0:x1:nx,y0:y1:ny`
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        tprime: f64,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write the reference mesh only.
    Mesh { config: PathBuf },
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Parameter { .. } => "parameter",
            Error::Mesh(_) => "mesh",
            Error::DegenerateDeformation { .. } => "degenerate_deformation",
            Error::DiffeomorphismViolation { .. } => "diffeomorphism_violation",
            Error::InvertedElement { .. } => "inverted_element",
            Error::LinearSolve(_) => "linear_solve",
            Error::Indefinite(_) => "indefinite",
            Error::Config { .. } => "config",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::from(Error::Io(e))
    }
}

fn usage(message: String) -> Failure {
    Failure { kind: "usage", message }
}

fn output_dir(config: &SimulationConfig) -> PathBuf {
    std::env::var_os("MORPHOFLOW_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output.dir.clone())
}

fn parse_axis(text: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("grid axis `{text}` must look like x0:x1:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a = parts[0].trim().parse().map_err(|_| bad())?;
    let b = parts[1].trim().parse().map_err(|_| bad())?;
    let n = parts[2].trim().parse().map_err(|_| bad())?;
    Ok((a, b, n))
}

fn parse_grid(text: &str) -> Result<((f64, f64, usize), (f64, f64, usize)), Failure> {
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| usage(format!("grid `{text}` must look like x0:x1:nx,y0:y1:ny")))?;
    Ok((parse_axis(x)?, parse_axis(y)?))
}

fn simulate(path: &Path) -> Result<(), Failure> {
    let config = parse_config(path)?;
    let mesh = config.mesh.build()?;
    let p0 = config.potential.sample(&mesh)?;
    let dir = output_dir(&config);
    let start = Instant::now();
    let result = run_simulation(&config, &mesh, p0);
    let wall = start.elapsed().as_secs_f64();
    match result {
        Ok(traj) => {
            let m = write_trajectory(&dir, &mesh, &config, &traj, &RunStatus::Completed, wall)?;
            println!(
                "simulate: {} snapshots in {}, min_jacobian = {}, wall {wall:.2}s",
                traj.snapshots.len(),
                dir.display(),
                m.get("min_jacobian").unwrap_or("?")
            );
            Ok(())
        }
        Err(aborted) => {
            let aborted = *aborted;
            let message = aborted.error.to_string();
            write_trajectory(
                &dir,
                &mesh,
                &config,
                &aborted.trajectory,
                &RunStatus::Aborted(message.clone()),
                wall,
            )?;
            Err(Failure::from(aborted.error))
        }
    }
}

fn gridsearch(path: &Path, grid: &str, tprime: f64, jobs: Option<usize>) -> Result<(), Failure> {
    let config = parse_config(path)?;
    let (x, y) = parse_grid(grid)?;
    let centers = center_grid(x, y)?;
    if jobs == Some(0) {
        return Err(usage("--jobs must be >= 1".into()));
    }
    let mesh = config.mesh.build()?;
    let truth = config.potential.center;
    let search = grid_search_center(&config, &mesh, &centers, tprime, truth, jobs)?;
    let dir = output_dir(&config);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("landscape.csv"), landscape_csv(&search))?;
    std::fs::write(dir.join("truth_boundary.txt"), polyline_text(&search.truth_curve))?;
    let mut failures = 0;
    for row in &search.rows {
        if let Err(e) = &row.distance {
            failures += 1;
            eprintln!("warning: center ({}, {}) failed: {e}", row.center.x, row.center.y);
        }
    }
    match search.argmin() {
        Some(best) => {
            println!(
                "gridsearch: {} centers, argmin ({}, {}) distance {:e}, {failures} failed, output {}",
                search.rows.len(),
                best.center.x,
                best.center.y,
                best.distance.as_ref().copied().unwrap_or(f64::NAN),
                dir.display()
            );
            Ok(())
        }
        None => Err(Failure {
            kind: "simulation",
            message: "every candidate simulation failed".into(),
        }),
    }
}

fn mesh(path: &Path) -> Result<(), Failure> {
    let config = parse_config(path)?;
    let mesh = config.mesh.build()?;
    let dir = output_dir(&config);
    std::fs::create_dir_all(&dir)?;
    let file = dir.join("mesh.txt");
    write_mesh(&file, &mesh)?;
    println!(
        "mesh: {} nodes, {} triangles, {} boundary edges -> {}",
        mesh.node_count(),
        mesh.triangles().len(),
        mesh.boundary_edges().len(),
        file.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config } => simulate(config),
        Command::Gridsearch {
            config,
            grid,
            tprime,
            jobs,
        } => gridsearch(config, grid, *tprime, *jobs),
        Command::Mesh { config } => mesh(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error kind={} message={:?}", f.kind, f.message);
            ExitCode::FAILURE
        }
    }
}
