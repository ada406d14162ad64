//! Case configuration files.
//!
//! Flat `key = value` text; `#` starts a comment, blank lines are ignored and
//! every key may appear once. Paths are relative to the config file.
//!
//! ```text
//! mesh = cylinder.mesh
//! curves = cylinder.curves
//! mode = nefem                  # or sfem
//! bc.1 = noslip                 # boundary tag -> inflow|farfield|outflow|slip|noslip
//! curve.1 = 1                   # boundary tag -> wall curve id
//! freestream.rho = 1
//! freestream.u = 1
//! freestream.v = 0
//! freestream.e = 1.1179
//! freestream.l_ref = 1
//! gas.gamma = 1.4
//! gas.inviscid = false
//! gas.reynolds = 2e5            # or gas.mu
//! gas.prandtl = 0.72
//! solver.dt = 0.05
//! output.dir = out
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::bc::BcKind;
use crate::mapping::QuadratureOptions;
use crate::physics::{FreeStream, GasModel};
use crate::solver::SolverOptions;
use crate::stabilization::StabilizationOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
    #[error("{path}: missing required key `{key}`")]
    Missing { path: String, key: String },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nefem,
    Sfem,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nefem" => Ok(Mode::Nefem),
            "sfem" => Ok(Mode::Sfem),
            _ => Err(format!("unknown mode '{s}' (expected nefem or sfem)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Nefem => "nefem",
            Mode::Sfem => "sfem",
        })
    }
}

/// Abscissa used for wall samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallCoordinate {
    /// Degrees from the upstream stagnation point, `atan2(y, -x)` in [0, 360).
    Angle,
    /// x divided by the reference length.
    Chord,
}

impl FromStr for WallCoordinate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "angle" => Ok(WallCoordinate::Angle),
            "chord" => Ok(WallCoordinate::Chord),
            _ => Err(format!("unknown wall coordinate '{s}' (expected angle or chord)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Field snapshot every this many slabs (0 disables intermediate
    /// snapshots); the final field is always written.
    pub cadence: usize,
    pub wall_coordinate: WallCoordinate,
}

#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub source: PathBuf,
    pub mesh: PathBuf,
    pub curves: Option<PathBuf>,
    pub mode: Mode,
    pub bcs: BTreeMap<u32, BcKind>,
    /// Boundary tag -> wall curve id.
    pub wall_curves: BTreeMap<u32, u32>,
    pub free_stream: FreeStream,
    pub gas: GasModel,
    pub solver: SolverOptions,
    pub stabilization: StabilizationOptions,
    pub quadrature: QuadratureOptions,
    /// Forces serial reductions and a single worker thread.
    pub deterministic: bool,
    pub output: OutputOptions,
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Reader<'a> {
    path: &'a str,
    entries: BTreeMap<String, Entry>,
}

impl<'a> Reader<'a> {
    fn parse(path: &'a str, text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |msg: String| ConfigError::Syntax { path: path.to_string(), line, msg };
            let (k, v) = content.split_once('=').ok_or_else(|| syntax(format!("expected `key = value`, got `{content}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(syntax(format!("invalid key `{k}`")));
            }
            if v.is_empty() {
                return Err(syntax(format!("empty value for `{k}`")));
            }
            if let Some(prev) = entries.insert(k.to_string(), Entry { line, value: v.to_string(), used: false }) {
                return Err(syntax(format!("duplicate key `{k}` (first set on line {})", prev.line)));
            }
        }
        Ok(Reader { path, entries })
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entries.get_mut(key) else { return Ok(None) };
        e.used = true;
        e.value.parse::<T>().map(Some).map_err(|err| ConfigError::Syntax {
            path: self.path.to_string(),
            line: e.line,
            msg: format!("`{key}`: {err}"),
        })
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing { path: self.path.to_string(), key: key.to_string() })
    }

    /// `prefix.<tag>` entries.
    fn tagged<T: FromStr>(&mut self, prefix: &str) -> Result<BTreeMap<u32, T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        let mut out = BTreeMap::new();
        for k in keys {
            let line = self.entries[&k].line;
            let tag: u32 = k[prefix.len()..].parse().map_err(|_| ConfigError::Syntax {
                path: self.path.to_string(),
                line,
                msg: format!("`{k}`: expected a numeric boundary tag"),
            })?;
            out.insert(tag, self.require(&k)?);
        }
        Ok(out)
    }

    fn check_unused(&self) -> Result<(), ConfigError> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some((k, e)) => Err(ConfigError::Syntax {
                path: self.path.to_string(),
                line: e.line,
                msg: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}

impl CaseConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(path, &text)
    }

    /// Parses config text; `path` is used for messages and to resolve
    /// relative file names.
    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let mut r = Reader::parse(&name, text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let invalid = |msg: String| ConfigError::Invalid { path: name.clone(), msg };

        let mesh = base.join(r.require::<String>("mesh")?);
        let curves = r.get::<String>("curves")?.map(|c| base.join(c));
        let mode = r.or("mode", Mode::Nefem)?;
        let bcs: BTreeMap<u32, BcKind> = r.tagged("bc.")?;
        let wall_curves: BTreeMap<u32, u32> = r.tagged("curve.")?;
        if bcs.is_empty() {
            return Err(invalid("no boundary conditions (`bc.<tag>` keys)".into()));
        }
        if !wall_curves.is_empty() && curves.is_none() {
            return Err(invalid("`curve.<tag>` given without a `curves` file".into()));
        }

        let free_stream = FreeStream {
            rho: r.require("freestream.rho")?,
            u: r.require("freestream.u")?,
            v: r.or("freestream.v", 0.0)?,
            e: r.require("freestream.e")?,
            l_ref: r.or("freestream.l_ref", 1.0)?,
        };
        if !(free_stream.rho > 0.0 && free_stream.e > 0.0 && free_stream.l_ref > 0.0) {
            return Err(invalid("free-stream density, energy and reference length must be positive".into()));
        }
        if free_stream.speed() == 0.0 {
            return Err(invalid("free-stream speed must be nonzero".into()));
        }

        let gamma = r.or("gas.gamma", 1.4)?;
        let inviscid = r.or("gas.inviscid", false)?;
        let prandtl = r.or("gas.prandtl", 0.72)?;
        let reynolds: Option<f64> = r.get("gas.reynolds")?;
        let mu: Option<f64> = r.get("gas.mu")?;
        let gas = if inviscid {
            if reynolds.is_some() || mu.is_some() {
                return Err(invalid("`gas.inviscid = true` conflicts with `gas.reynolds`/`gas.mu`".into()));
            }
            GasModel::inviscid(gamma)
        } else {
            let mu = match (reynolds, mu) {
                (Some(re), None) if re > 0.0 => free_stream.viscosity_for_reynolds(re),
                (None, Some(mu)) => mu,
                (Some(_), Some(_)) => return Err(invalid("set only one of `gas.reynolds` and `gas.mu`".into())),
                (Some(_), None) => return Err(invalid("`gas.reynolds` must be positive".into())),
                (None, None) => return Err(invalid("viscous gas needs `gas.reynolds` or `gas.mu`".into())),
            };
            GasModel::viscous(gamma, mu, prandtl)
        };
        gas.validate().map_err(|e| invalid(e.to_string()))?;

        let d = SolverOptions::default();
        let solver = SolverOptions {
            newton_tol: r.or("solver.newton_tol", d.newton_tol)?,
            newton_abs_tol: r.or("solver.newton_abs_tol", d.newton_abs_tol)?,
            max_newton: r.or("solver.max_newton", d.max_newton)?,
            gmres: crate::linalg::GmresOptions {
                restart: r.or("solver.gmres_restart", d.gmres.restart)?,
                rel_tol: r.or("solver.gmres_tol", d.gmres.rel_tol)?,
                max_iter: r.or("solver.gmres_max_iter", d.gmres.max_iter)?,
            },
            gmres_accept: r.or("solver.gmres_accept", d.gmres_accept)?,
            preconditioner: r.or("solver.preconditioner", d.preconditioner)?,
            max_line_search: r.or("solver.line_search", d.max_line_search)?,
            tau_update: r.or("solver.tau_update", d.tau_update)?,
            dt: r.or("solver.dt", d.dt)?,
            dt_growth: r.or("solver.dt_growth", d.dt_growth)?,
            dt_max: r.or("solver.dt_max", d.dt_max)?,
            dt_retries: r.or("solver.dt_retries", d.dt_retries)?,
            max_slabs: r.or("solver.max_slabs", d.max_slabs)?,
            steady_tol: r.or("solver.steady_tol", d.steady_tol)?,
        };
        let positive = [
            ("solver.newton_tol", solver.newton_tol),
            ("solver.newton_abs_tol", solver.newton_abs_tol),
            ("solver.gmres_tol", solver.gmres.rel_tol),
            ("solver.dt", solver.dt),
            ("solver.dt_max", solver.dt_max),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(invalid(format!("`{k}` must be positive")));
        }
        // zero disables the steady stop and requires full linear convergence
        if !(solver.steady_tol >= 0.0) {
            return Err(invalid("`solver.steady_tol` must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&solver.gmres_accept) {
            return Err(invalid("`solver.gmres_accept` must lie in [0, 1)".into()));
        }
        if solver.max_newton == 0 || solver.gmres.restart == 0 || solver.gmres.max_iter == 0 {
            return Err(invalid("iteration counts must be at least 1".into()));
        }
        if !(solver.dt_growth >= 1.0) {
            return Err(invalid("`solver.dt_growth` must be at least 1".into()));
        }
        let deterministic = r.or("solver.deterministic", false)?;

        let sd = StabilizationOptions::default();
        let stabilization = StabilizationOptions {
            supg: r.or("supg.enabled", sd.supg)?,
            shock_capturing: r.or("dc.enabled", sd.shock_capturing)?,
            clamp_factor: r.or("dc.clamp_factor", sd.clamp_factor)?,
        };
        if !(stabilization.clamp_factor >= 0.0) {
            return Err(invalid("`dc.clamp_factor` must be nonnegative".into()));
        }

        let qd = QuadratureOptions::default();
        let quadrature = QuadratureOptions {
            standard_order: r.or("quadrature.order", qd.standard_order)?,
            nefem_points: r.or("quadrature.nefem_points", qd.nefem_points)?,
            edge_points: r.or("quadrature.edge_points", qd.edge_points)?,
        };

        let output = OutputOptions {
            dir: base.join(r.or("output.dir", String::from("output"))?),
            cadence: r.or("output.cadence", 10)?,
            wall_coordinate: r.or("output.wall_coordinate", WallCoordinate::Angle)?,
        };
        r.check_unused()?;

        let unknown: BTreeSet<u32> = wall_curves.keys().filter(|t| !bcs.contains_key(t)).copied().collect();
        if let Some(t) = unknown.first() {
            return Err(invalid(format!("`curve.{t}` refers to a tag without a boundary condition")));
        }
        Ok(CaseConfig {
            source: path.to_path_buf(),
            mesh,
            curves,
            mode,
            bcs,
            wall_curves,
            free_stream,
            gas,
            solver,
            stabilization,
            quadrature,
            deterministic,
            output,
        })
    }
}
