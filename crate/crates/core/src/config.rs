//! Line-oriented `key = value` configuration with dotted keys.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys keep the values of [`SimulationConfig::default`].
//!
//! | key | default |
//! |-----|---------|
//! | `mesh.a`, `mesh.b` | 1.0, 0.6 |
//! | `mesh.h` | 0.08 |
//! | `potential.cx`, `potential.cy` | -0.5, 0.3 |
//! | `potential.radius`, `potential.height` | 0.3, 0.8 |
//! | `kernel.sigma` | 0.2 |
//! | `solver.omega` | 16 |
//! | `elastic.lambda`, `elastic.mu` | 0, 1 |
//! | `diffusion.rx`, `diffusion.ry` | 0.025, 0.005 |
//! | `reaction.shape` | `symmetric_bump` (or `plateau_bump`, `none`) |
//! | `reaction.p_min`, `reaction.p_max`, `reaction.height` | 0.01, 1, 0.3 |
//! | `yank.shape` | `plateau_bump` |
//! | `yank.p_min`, `yank.p_max`, `yank.height` | 0.01, 1, 1 |
//! | `time.dt`, `time.T` | 0.25, 25 |
//! | `coupling.inner_iters` | 0 |
//! | `varifold.sigma` | 0.3 |
//! | `output.dir`, `output.every` | `out`, 1 |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coupling::SimulationConfig;
use crate::error::{Error, Result};
use crate::reaction_diffusion::{BumpProfile, BumpShape};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Range {
    Positive,
    NonNegative,
    Any,
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    shape: Option<BumpShape>,
    p_min: f64,
    p_max: f64,
    height: f64,
}

impl Profile {
    fn from(b: Option<BumpProfile>, fallback: BumpProfile) -> Self {
        let src = b.unwrap_or(fallback);
        Profile {
            shape: b.map(|b| b.shape),
            p_min: src.p_min,
            p_max: src.p_max,
            height: src.height,
        }
    }
}

struct Parser<'a> {
    path: &'a str,
    lines: HashMap<&'static str, usize>,
}

impl Parser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.to_string(),
            line,
            message: message.into(),
        }
    }

    fn line_of(&self, keys: &[&str]) -> usize {
        keys.iter().filter_map(|k| self.lines.get(k)).copied().max().unwrap_or(0)
    }
}

fn parse_f64(parser: &Parser, line: usize, key: &str, value: &str, range: Range) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| parser.err(line, format!("`{key}`: expected a number, got `{value}`")))?;
    let ok = v.is_finite()
        && match range {
            Range::Positive => v > 0.0,
            Range::NonNegative => v >= 0.0,
            Range::Any => true,
        };
    if !ok {
        let what = match range {
            Range::Positive => "must be > 0",
            Range::NonNegative => "must be >= 0",
            Range::Any => "must be finite",
        };
        return Err(parser.err(line, format!("`{key}` {what}, got {value}")));
    }
    Ok(v)
}

fn parse_usize(parser: &Parser, line: usize, key: &str, value: &str, min: usize) -> Result<usize> {
    let v: usize = value
        .parse()
        .map_err(|_| parser.err(line, format!("`{key}`: expected a nonnegative integer, got `{value}`")))?;
    if v < min {
        return Err(parser.err(line, format!("`{key}` must be >= {min}, got {v}")));
    }
    Ok(v)
}

fn parse_shape(parser: &Parser, line: usize, key: &str, value: &str) -> Result<Option<BumpShape>> {
    if value == "none" {
        return Ok(None);
    }
    value
        .parse::<BumpShape>()
        .map(Some)
        .map_err(|e| parser.err(line, format!("`{key}`: {e}")))
}

/// Parses configuration text; `origin` labels error messages.
pub fn parse_config_str(text: &str, origin: &str) -> Result<SimulationConfig> {
    let mut parser = Parser {
        path: origin,
        lines: HashMap::new(),
    };
    let mut c = SimulationConfig::default();
    let mut reaction = Profile::from(c.reaction, BumpProfile::default_reaction());
    let mut yank = Profile::from(c.yank, BumpProfile::default_yank());

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parser.err(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(parser.err(line, format!("`{key}` has no value")));
        }
        let p = &parser;
        let canonical: &'static str = match key {
            "mesh.a" => {
                c.mesh.semi_axes.0 = parse_f64(p, line, key, value, Range::Positive)?;
                "mesh.a"
            }
            "mesh.b" => {
                c.mesh.semi_axes.1 = parse_f64(p, line, key, value, Range::Positive)?;
                "mesh.b"
            }
            "mesh.h" => {
                c.mesh.edge_length = parse_f64(p, line, key, value, Range::Positive)?;
                "mesh.h"
            }
            "potential.cx" => {
                c.potential.center.x = parse_f64(p, line, key, value, Range::Any)?;
                "potential.cx"
            }
            "potential.cy" => {
                c.potential.center.y = parse_f64(p, line, key, value, Range::Any)?;
                "potential.cy"
            }
            "potential.radius" => {
                c.potential.radius = parse_f64(p, line, key, value, Range::Positive)?;
                "potential.radius"
            }
            "potential.height" => {
                c.potential.height = parse_f64(p, line, key, value, Range::NonNegative)?;
                "potential.height"
            }
            "kernel.sigma" => {
                c.kernel.sigma = parse_f64(p, line, key, value, Range::Positive)?;
                "kernel.sigma"
            }
            "solver.omega" => {
                c.omega = parse_f64(p, line, key, value, Range::Positive)?;
                "solver.omega"
            }
            "elastic.lambda" => {
                c.elastic.lambda = parse_f64(p, line, key, value, Range::NonNegative)?;
                "elastic.lambda"
            }
            "elastic.mu" => {
                c.elastic.mu = parse_f64(p, line, key, value, Range::Positive)?;
                "elastic.mu"
            }
            "diffusion.rx" => {
                c.diffusion.rx = parse_f64(p, line, key, value, Range::Positive)?;
                "diffusion.rx"
            }
            "diffusion.ry" => {
                c.diffusion.ry = parse_f64(p, line, key, value, Range::Positive)?;
                "diffusion.ry"
            }
            "reaction.shape" => {
                reaction.shape = parse_shape(p, line, key, value)?;
                "reaction.shape"
            }
            "reaction.p_min" => {
                reaction.p_min = parse_f64(p, line, key, value, Range::Any)?;
                "reaction.p_min"
            }
            "reaction.p_max" => {
                reaction.p_max = parse_f64(p, line, key, value, Range::Any)?;
                "reaction.p_max"
            }
            "reaction.height" => {
                reaction.height = parse_f64(p, line, key, value, Range::Positive)?;
                "reaction.height"
            }
            "yank.shape" => {
                yank.shape = parse_shape(p, line, key, value)?;
                "yank.shape"
            }
            "yank.p_min" => {
                yank.p_min = parse_f64(p, line, key, value, Range::Any)?;
                "yank.p_min"
            }
            "yank.p_max" => {
                yank.p_max = parse_f64(p, line, key, value, Range::Any)?;
                "yank.p_max"
            }
            "yank.height" => {
                yank.height = parse_f64(p, line, key, value, Range::Positive)?;
                "yank.height"
            }
            "time.dt" => {
                c.dt = parse_f64(p, line, key, value, Range::Positive)?;
                "time.dt"
            }
            "time.T" => {
                c.t_end = parse_f64(p, line, key, value, Range::Positive)?;
                "time.T"
            }
            "coupling.inner_iters" => {
                c.inner_iters = parse_usize(p, line, key, value, 0)?;
                "coupling.inner_iters"
            }
            "varifold.sigma" => {
                c.varifold.sigma_w = parse_f64(p, line, key, value, Range::Positive)?;
                "varifold.sigma"
            }
            "output.dir" => {
                c.output.dir = PathBuf::from(value);
                "output.dir"
            }
            "output.every" => {
                c.output.every = parse_usize(p, line, key, value, 1)?;
                "output.every"
            }
            _ => return Err(parser.err(line, format!("unknown key `{key}`"))),
        };
        if let Some(first) = parser.lines.insert(canonical, line) {
            return Err(parser.err(line, format!("duplicate key `{key}` (first set on line {first})")));
        }
    }

    for (name, prof, slot) in [("reaction", reaction, &mut c.reaction), ("yank", yank, &mut c.yank)] {
        *slot = match prof.shape {
            None => None,
            Some(shape) => {
                if !(prof.p_min < prof.p_max) {
                    let keys = [format!("{name}.p_min"), format!("{name}.p_max")];
                    let line = parser.line_of(&[keys[0].as_str(), keys[1].as_str()]);
                    return Err(parser.err(line, format!("`{name}.p_min` must be < `{name}.p_max`")));
                }
                Some(BumpProfile::new(prof.p_min, prof.p_max, prof.height, shape)?)
            }
        };
    }
    if c.t_end < c.dt {
        let line = parser.line_of(&["time.T", "time.dt"]);
        return Err(parser.err(line, "`time.T` must be >= `time.dt`"));
    }
    c.validate().map_err(|e| parser.err(0, e.to_string()))?;
    parser.lines.clear();
    Ok(c)
}

pub fn parse_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot read: {e}"),
    })?;
    parse_config_str(&text, &path.display().to_string())
}

fn write_profile(out: &mut String, name: &str, profile: Option<BumpProfile>, fallback: BumpProfile) {
    let p = Profile::from(profile, fallback);
    let shape = p.shape.map_or("none", |s| s.name());
    let _ = writeln!(out, "{name}.shape = {shape}");
    let _ = writeln!(out, "{name}.p_min = {}", p.p_min);
    let _ = writeln!(out, "{name}.p_max = {}", p.p_max);
    let _ = writeln!(out, "{name}.height = {}", p.height);
}

/// Fully resolved configuration text; `parse_config_str` inverts it exactly.
pub fn write_config(c: &SimulationConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mesh.a = {}", c.mesh.semi_axes.0);
    let _ = writeln!(out, "mesh.b = {}", c.mesh.semi_axes.1);
    let _ = writeln!(out, "mesh.h = {}", c.mesh.edge_length);
    let _ = writeln!(out, "potential.cx = {}", c.potential.center.x);
    let _ = writeln!(out, "potential.cy = {}", c.potential.center.y);
    let _ = writeln!(out, "potential.radius = {}", c.potential.radius);
    let _ = writeln!(out, "potential.height = {}", c.potential.height);
    let _ = writeln!(out, "kernel.sigma = {}", c.kernel.sigma);
    let _ = writeln!(out, "solver.omega = {}", c.omega);
    let _ = writeln!(out, "elastic.lambda = {}", c.elastic.lambda);
    let _ = writeln!(out, "elastic.mu = {}", c.elastic.mu);
    let _ = writeln!(out, "diffusion.rx = {}", c.diffusion.rx);
    let _ = writeln!(out, "diffusion.ry = {}", c.diffusion.ry);
    write_profile(&mut out, "reaction", c.reaction, BumpProfile::default_reaction());
    write_profile(&mut out, "yank", c.yank, BumpProfile::default_yank());
    let _ = writeln!(out, "time.dt = {}", c.dt);
    let _ = writeln!(out, "time.T = {}", c.t_end);
    let _ = writeln!(out, "coupling.inner_iters = {}", c.inner_iters);
    let _ = writeln!(out, "varifold.sigma = {}", c.varifold.sigma_w);
    let _ = writeln!(out, "output.dir = {}", c.output.dir.display());
    let _ = writeln!(out, "output.every = {}", c.output.every);
    out
}
