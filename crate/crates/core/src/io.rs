//! Plain-text artifacts: mesh files, snapshot CSVs, boundary polylines,
//! landscape tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Point2;
use sha2::{Digest, Sha256};

use crate::config::write_config;
use crate::coupling::{SimulationConfig, Snapshot, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{eulerian_density, Mesh};
use crate::varifold::{state_boundary, Curve, GridSearch};

/// `v x y`, `t i j k` and `b i j` lines with zero-based indices.
pub fn format_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    for p in mesh.nodes() {
        let _ = writeln!(out, "v {} {}", p.x, p.y);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "t {} {} {}", t[0], t[1], t[2]);
    }
    for b in mesh.boundary_edges() {
        let _ = writeln!(out, "b {} {}", b[0], b[1]);
    }
    out
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let fail = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    let mut boundary = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut it = raw.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let fields: Vec<&str> = it.collect();
        let arity = match tag {
            "v" | "b" => 2,
            "t" => 3,
            other => return Err(fail(line, format!("unknown record `{other}`"))),
        };
        if fields.len() != arity {
            return Err(fail(line, format!("`{tag}` expects {arity} fields, got {}", fields.len())));
        }
        if tag == "v" {
            let xy: Vec<f64> = fields
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| fail(line, format!("bad coordinate `{s}`"))))
                .collect::<Result<_>>()?;
            nodes.push(Point2::new(xy[0], xy[1]));
        } else {
            let ix: Vec<usize> = fields
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| fail(line, format!("bad index `{s}`"))))
                .collect::<Result<_>>()?;
            if tag == "t" {
                triangles.push([ix[0], ix[1], ix[2]]);
            } else {
                boundary.push([ix[0], ix[1]]);
            }
        }
    }
    Mesh::new(nodes, triangles, boundary)
}

pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    parse_mesh(&fs::read_to_string(path)?, path)
}

/// CSV `node,x,y,tau,p` at the current positions, with `p = τ / J`.
pub fn snapshot_csv(snapshot: &Snapshot) -> Result<String> {
    let p = eulerian_density(&snapshot.state, &snapshot.tau)?;
    let mut out = String::from("node,x,y,tau,p\n");
    for (i, x) in snapshot.state.positions.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", x.x, x.y, snapshot.tau.values[i], p[i]);
    }
    Ok(out)
}

/// One `x y` pair per line, in boundary order.
pub fn polyline_text(curve: &Curve) -> String {
    let mut out = String::new();
    for v in curve.vertices() {
        let _ = writeln!(out, "{} {}", v.x, v.y);
    }
    out
}

pub fn parse_polyline(text: &str, path: &Path) -> Result<Curve> {
    let mut pts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = raw
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: expected `x y`", idx + 1),
            })?;
        if v.len() != 2 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: expected `x y`", idx + 1),
            });
        }
        pts.push(Point2::new(v[0], v[1]));
    }
    Curve::new(pts)
}

/// CSV `cx,cy,distance`; failed rows carry `nan`.
pub fn landscape_csv(search: &GridSearch) -> String {
    let mut out = String::from("cx,cy,distance\n");
    for row in &search.rows {
        match &row.distance {
            Ok(d) => {
                let _ = writeln!(out, "{},{},{}", row.center.x, row.center.y, d);
            }
            Err(_) => {
                let _ = writeln!(out, "{},{},nan", row.center.x, row.center.y);
            }
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Ordered plain `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Manifest {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Manifest { entries }
    }
}

/// Outcome recorded in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

/// Writes `step_####.csv` and `boundary_####.txt` for every snapshot, then the
/// manifest with checksums of everything written.
pub fn write_trajectory(
    dir: &Path,
    mesh: &Mesh,
    config: &SimulationConfig,
    trajectory: &Trajectory,
    status: &RunStatus,
    wall_time: f64,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<PathBuf> = Vec::new();
    for snap in &trajectory.snapshots {
        let csv = dir.join(format!("step_{:04}.csv", snap.step));
        fs::write(&csv, snapshot_csv(snap)?)?;
        let poly = dir.join(format!("boundary_{:04}.txt", snap.step));
        fs::write(&poly, polyline_text(&state_boundary(mesh, &snap.state)?))?;
        files.push(csv);
        files.push(poly);
    }

    let mut m = Manifest::default();
    match status {
        RunStatus::Completed => m.push("status", "completed"),
        RunStatus::Aborted(e) => {
            m.push("status", "aborted");
            m.push("partial", "true");
            m.push("error", e.replace('\n', " "));
        }
    }
    m.push("steps_planned", config.step_count());
    m.push("steps_completed", trajectory.reports.len());
    m.push("snapshot_count", trajectory.snapshots.len());
    m.push("node_count", mesh.node_count());
    m.push("triangle_count", mesh.triangles().len());
    m.push("wall_time_s", format!("{wall_time:.3}"));
    let min_jac = trajectory
        .snapshots
        .iter()
        .flat_map(|s| s.state.jac.iter().copied())
        .fold(f64::INFINITY, f64::min);
    m.push("min_jacobian", min_jac);
    m.push("all_jacobians_positive", min_jac > 0.0);
    if let Some(last) = trajectory.last() {
        m.push("final_time", last.time);
        m.push("final_area", last.state.deformed_area(mesh));
        m.push("final_mass", last.tau.total_mass(mesh));
    }
    for line in write_config(config).lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            m.push(format!("config.{k}"), v);
        }
    }
    for f in &files {
        let name = f.file_name().expect("file name").to_string_lossy().into_owned();
        m.push(format!("sha256.{name}"), sha256_file(f)?);
    }
    fs::write(dir.join("manifest"), m.to_text())?;
    Ok(m)
}
