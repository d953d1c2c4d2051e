//! Flat `key = value` run configuration.
//!
//! ```text
//! # homogeneous relaxation
//! alpha = 0.1
//! kernel.family = grad_cutoff
//! kernel.coeffs = 1.0
//! n_particles = 200000
//! grid = 1
//! t_end = 1.9099
//! init = anisotropic
//! init.u0 = 0.63, 0.2, 0.1
//! output.path = homogeneous.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsmc::{InitSpec, SimConfig, VelocityShape};
use crate::error::{Result, UsfError};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::profile::ProfileOrder;

pub const KEYS: &[&str] = &[
    "alpha",
    "kernel.family",
    "kernel.coeffs",
    "n_particles",
    "grid",
    "dt",
    "t_end",
    "seed",
    "output_every",
    "K_modes",
    "init",
    "init.mode",
    "init.amplitude",
    "init.shape",
    "init.u0",
    "profile.order",
    "profile.truncation_radius",
    "output.path",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub output_path: Option<PathBuf>,
}

fn err(msg: impl Into<String>) -> UsfError {
    UsfError::Config(msg.into())
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| err(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|s| parse_scalar(key, s.trim()))
        .collect()
}

fn parse_triple<T: FromStr + Copy>(key: &str, value: &str) -> Result<[T; 3]>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = parse_list(key, value)?;
    v.try_into()
        .map_err(|v: Vec<T>| err(format!("`{key}` needs 3 components, got {}", v.len())))
}

fn format_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.insert(key, value).is_some() {
                return Err(err(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }

        let mut sim = SimConfig::default();
        let get = |k: &str| entries.get(k).copied();
        if let Some(v) = get("alpha") {
            sim.alpha = parse_scalar("alpha", v)?;
        }
        let family = match get("kernel.family") {
            Some(v) => v.parse::<KernelFamily>()?,
            None => KernelFamily::GradCutoff,
        };
        let coeffs = match get("kernel.coeffs") {
            Some(v) => parse_list("kernel.coeffs", v)?,
            None => vec![1.0],
        };
        sim.kernel = KernelSpec::new(family, coeffs)?;
        if let Some(v) = get("n_particles") {
            sim.n_particles = parse_scalar::<f64>("n_particles", v)
                .and_then(|x| {
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(err(format!("`n_particles` must be a whole number, got `{v}`")))
                    }
                })?;
        }
        if let Some(v) = get("grid") {
            sim.grid = parse_scalar("grid", v)?;
        }
        if let Some(v) = get("dt") {
            sim.dt = Some(parse_scalar("dt", v)?);
        }
        if let Some(v) = get("t_end") {
            sim.t_end = parse_scalar("t_end", v)?;
        }
        if let Some(v) = get("seed") {
            sim.seed = parse_scalar("seed", v)?;
        }
        if let Some(v) = get("output_every") {
            sim.output_every = parse_scalar("output_every", v)?;
        }
        if let Some(v) = get("K_modes") {
            sim.k_modes = parse_scalar("K_modes", v)?;
        }
        if let Some(v) = get("profile.order") {
            sim.profile_order = ProfileOrder::from_index(parse_scalar("profile.order", v)?)?;
        }
        if let Some(v) = get("profile.truncation_radius") {
            sim.truncation_radius = parse_scalar("profile.truncation_radius", v)?;
        }

        let init_keys = ["init.mode", "init.amplitude", "init.shape", "init.u0"];
        let allowed: &[&str] = match get("init").unwrap_or("profile") {
            "profile" => {
                sim.init = InitSpec::Profile;
                &[]
            }
            "perturbed" => {
                sim.init = InitSpec::Perturbed {
                    mode: get("init.mode").map_or(Ok([1, 0, 0]), |v| parse_triple("init.mode", v))?,
                    amplitude: get("init.amplitude").map_or(Ok(0.0), |v| parse_scalar("init.amplitude", v))?,
                    shape: get("init.shape").map_or(Ok(VelocityShape::Mass), VelocityShape::from_str)?,
                };
                &["init.mode", "init.amplitude", "init.shape"]
            }
            "anisotropic" => {
                let u0 = get("init.u0").ok_or_else(|| err("`init = anisotropic` requires `init.u0`"))?;
                sim.init = InitSpec::Anisotropic {
                    u0: parse_triple("init.u0", u0)?,
                };
                &["init.u0"]
            }
            other => return Err(err(format!("unknown init `{other}`"))),
        };
        if let Some(k) = init_keys.iter().find(|k| entries.contains_key(*k) && !allowed.contains(k)) {
            return Err(err(format!("`{k}` does not apply to `init = {}`", get("init").unwrap_or("profile"))));
        }

        Ok(RunConfig {
            sim,
            output_path: get("output.path").map(PathBuf::from),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let s = &self.sim;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("alpha", s.alpha.to_string());
        put("kernel.family", s.kernel.family().to_string());
        put("kernel.coeffs", format_list(s.kernel.coeffs()));
        put("n_particles", s.n_particles.to_string());
        put("grid", s.grid.to_string());
        if let Some(dt) = s.dt {
            put("dt", dt.to_string());
        }
        put("t_end", s.t_end.to_string());
        put("seed", s.seed.to_string());
        put("output_every", s.output_every.to_string());
        put("K_modes", s.k_modes.to_string());
        match s.init {
            InitSpec::Profile => put("init", "profile".into()),
            InitSpec::Perturbed { mode, amplitude, shape } => {
                put("init", "perturbed".into());
                put("init.mode", format_list(&mode));
                put("init.amplitude", amplitude.to_string());
                put("init.shape", shape.to_string());
            }
            InitSpec::Anisotropic { u0 } => {
                put("init", "anisotropic".into());
                put("init.u0", format_list(&u0));
            }
        }
        put("profile.order", s.profile_order.index().to_string());
        put("profile.truncation_radius", s.truncation_radius.to_string());
        if let Some(p) = &self.output_path {
            put("output.path", p.display().to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# inhomogeneous
alpha = 0.1
kernel.family = grad_cutoff
kernel.coeffs = 1.0
n_particles = 1e6
grid = 16
t_end = 1.9
seed = 7
output_every = 20
K_modes = 3
init = perturbed
init.mode = 1, 0, 0
init.amplitude = 0.2   # mass modulation
init.shape = mass
output.path = out/run.csv
";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.sim.n_particles, 1_000_000);
        assert_eq!(c.sim.grid, 16);
        assert_eq!(c.sim.dt, None);
        assert_eq!(
            c.sim.init,
            InitSpec::Perturbed { mode: [1, 0, 0], amplitude: 0.2, shape: VelocityShape::Mass }
        );
        assert_eq!(c.output_path.as_deref(), Some(Path::new("out/run.csv")));
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::parse("init = anisotropic\ninit.u0 = 0.63,0.2,0.1\ndt = 0.01").unwrap();
        assert_eq!(c.sim.init, InitSpec::Anisotropic { u0: [0.63, 0.2, 0.1] });
        assert_eq!(c.sim.kernel, KernelSpec::default());
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "alpha 0.1",
            "beta = 0.1",
            "alpha = 0.1\nalpha = 0.2",
            "alpha = fast",
            "n_particles = 10.5",
            "init = anisotropic",
            "init = profile\ninit.amplitude = 0.1",
            "init = perturbed\ninit.mode = 1, 0",
            "init = wave",
            "kernel.family = hard_sphere",
            "kernel.coeffs = -1",
            "profile.order = 2",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }
}
