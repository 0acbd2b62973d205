//! Flat `key = value` run configuration with dotted sections.
//!
//! ```text
//! subcommand = gp
//! dim = 2
//! alpha = 1
//! grid.points_per_axis = 129
//! trap.kind = harmonic
//! ```
//!
//! `#` starts a comment. Lists are comma separated. Every key is range-checked
//! and unknown keys are rejected; errors carry the key and the line (line 0
//! for command-line overrides).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::dv_rate::InitialDistribution;
use crate::extrapolate::ExtrapolationModel;
use crate::free_energy::Sampler;
use crate::grid::{Boundary, GridParams};
use crate::path_mc::StartLaw;
use crate::potentials::{InteractionSpec, TrapSpec};
use crate::scattering::AlphaRule;

/// Where a key came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line(pub usize);

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            f.write_str("override")
        } else {
            write!(f, "line {}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{line}: unknown key '{key}'")]
    UnknownKey { key: String, line: Line },
    #[error("{line}: '{key}' out of range: {reason}")]
    OutOfRange { key: String, line: Line, reason: String },
    #[error("missing required key '{key}'")]
    MissingRequired { key: String },
    #[error("{line}: '{key}' has invalid value: {reason}")]
    InvalidValue { key: String, line: Line, reason: String },
    #[error("{line}: expected 'key = value', got '{text}'")]
    Syntax { line: Line, text: String },
    #[error("{line}: key '{key}' given twice")]
    Duplicate { key: String, line: Line },
}

impl ConfigError {
    pub fn name(&self) -> &'static str {
        match self {
            ConfigError::UnknownKey { .. } => "UnknownKey",
            ConfigError::OutOfRange { .. } => "OutOfRange",
            ConfigError::MissingRequired { .. } => "MissingRequired",
            ConfigError::InvalidValue { .. } => "InvalidValue",
            ConfigError::Syntax { .. } => "Syntax",
            ConfigError::Duplicate { .. } => "Duplicate",
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. }
            | ConfigError::OutOfRange { key, .. }
            | ConfigError::MissingRequired { key }
            | ConfigError::InvalidValue { key, .. }
            | ConfigError::Duplicate { key, .. } => Some(key),
            ConfigError::Syntax { .. } => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::UnknownKey { line, .. }
            | ConfigError::OutOfRange { line, .. }
            | ConfigError::InvalidValue { line, .. }
            | ConfigError::Syntax { line, .. }
            | ConfigError::Duplicate { line, .. } => Some(line.0),
            ConfigError::MissingRequired { .. } => None,
        }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Gp,
    Hartree,
    Scattering,
    Rate,
    ChiBeta,
    FreeEnergy,
    Diagram,
    Validate,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Gp,
        Subcommand::Hartree,
        Subcommand::Scattering,
        Subcommand::Rate,
        Subcommand::ChiBeta,
        Subcommand::FreeEnergy,
        Subcommand::Diagram,
        Subcommand::Validate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Gp => "gp",
            Subcommand::Hartree => "hartree",
            Subcommand::Scattering => "scattering",
            Subcommand::Rate => "rate",
            Subcommand::ChiBeta => "chi-beta",
            Subcommand::FreeEnergy => "free-energy",
            Subcommand::Diagram => "diagram",
            Subcommand::Validate => "validate",
        }
    }
}

impl FromStr for Subcommand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Subcommand::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown subcommand '{s}'"))
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pair interaction used by `hartree` and `free-energy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairModelKind {
    /// v_N = N^{d-1} v(N·).
    Smeared,
    /// Contact interaction, mollified at the ε list in Monte Carlo.
    Contact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub m: usize,
    pub dt: f64,
    pub seed: u64,
    pub sampler: Sampler,
    pub stride: usize,
    pub start: StartLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteringConfig {
    pub mesh: usize,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramSection {
    pub tolerance: f64,
    pub model: ExtrapolationModel,
    /// 0 disables the Monte Carlo corner.
    pub corner_n: usize,
    pub corner_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub dim: usize,
    pub convention_a: f64,
    pub grid: GridParams,
    pub rate_grid: GridParams,
    pub trap: TrapSpec,
    pub interaction: InteractionSpec,
    /// Explicit GP coupling; otherwise derived from the interaction by `alpha_rule`.
    pub alpha: Option<f64>,
    pub alpha_rule: AlphaRule,
    pub ns: Vec<usize>,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub pair_model: PairModelKind,
    pub dirac_coupling: f64,
    /// Width of the Gaussian density fed to `rate`.
    pub rate_sigma: f64,
    pub rate_init: InitialDistribution,
    pub mc: McConfig,
    pub scattering: ScatteringConfig,
    pub diagram: DiagramSection,
    pub output_dir: String,
}

const KEYS: &[&str] = &[
    "subcommand",
    "dim",
    "convention_a",
    "alpha",
    "alpha_rule",
    "ns",
    "betas",
    "epsilons",
    "pair_model",
    "dirac_coupling",
    "grid.half_width",
    "grid.points_per_axis",
    "grid.boundary",
    "rate_grid.half_width",
    "rate_grid.points_per_axis",
    "rate_grid.boundary",
    "trap.kind",
    "trap.radius",
    "interaction.kind",
    "interaction.g",
    "interaction.s",
    "interaction.radius",
    "interaction.cap",
    "interaction.p",
    "interaction.support",
    "rate.sigma",
    "rate.init",
    "mc.m",
    "mc.dt",
    "mc.seed",
    "mc.sampler",
    "mc.stride",
    "mc.start",
    "scattering.mesh",
    "scattering.r_max",
    "diagram.tolerance",
    "diagram.model",
    "diagram.corner_n",
    "diagram.corner_beta",
    "output.dir",
];

struct Entries {
    map: BTreeMap<String, (String, Line)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(String, Line)> {
        self.map.get(key)
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> CResult<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.into(),
                line: *line,
                reason: e.to_string(),
            }),
        }
    }

    fn checked<T: FromStr + Copy>(&self, key: &str, default: T, ok: impl Fn(T) -> bool, reason: &str) -> CResult<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.parse(key, default)?;
        if !ok(v) {
            let line = self.raw(key).map(|r| r.1).unwrap_or(Line(0));
            return Err(ConfigError::OutOfRange { key: key.into(), line, reason: reason.into() });
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: f64) -> CResult<f64> {
        self.checked(key, default, |v: f64| v.is_finite() && v > 0.0, "must be positive and finite")
    }

    fn list<T: FromStr + Copy>(&self, key: &str, default: &[T], ok: impl Fn(T) -> bool, reason: &str) -> CResult<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let Some((v, line)) = self.raw(key) else { return Ok(default.to_vec()) };
        let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
        let mut out = Vec::new();
        for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let x: T = item.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.into(),
                line: *line,
                reason: e.to_string(),
            })?;
            if !ok(x) {
                return Err(ConfigError::OutOfRange { key: key.into(), line: *line, reason: reason.into() });
            }
            out.push(x);
        }
        if out.is_empty() {
            return Err(ConfigError::OutOfRange { key: key.into(), line: *line, reason: "list is empty".into() });
        }
        Ok(out)
    }

    fn line(&self, key: &str) -> Line {
        self.raw(key).map(|r| r.1).unwrap_or(Line(0))
    }
}

fn split_lines(text: &str, first_line: Option<usize>) -> CResult<Vec<(String, String, Line)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = Line(first_line.map(|_| 0).unwrap_or(i + 1));
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax { line, text: raw.trim().into() });
        };
        let k = k.trim();
        let v = v.trim().trim_matches('"');
        if k.is_empty() {
            return Err(ConfigError::Syntax { line, text: raw.trim().into() });
        }
        out.push((k.to_string(), v.to_string(), line));
    }
    Ok(out)
}

/// Parse and validate a config file.
pub fn parse_config(text: &str) -> CResult<RunConfig> {
    parse_with_overrides(text, &[])
}

/// Parse a config, then apply `key=value` overrides (which may replace keys).
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> CResult<RunConfig> {
    let mut map = BTreeMap::new();
    for (k, v, line) in split_lines(text, None)? {
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey { key: k, line });
        }
        if map.contains_key(&k) {
            return Err(ConfigError::Duplicate { key: k, line });
        }
        map.insert(k, (v, line));
    }
    for o in overrides {
        for (k, v, line) in split_lines(o, Some(0))? {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey { key: k, line });
            }
            map.insert(k, (v, line));
        }
    }
    build(&Entries { map })
}

fn grid_params(e: &Entries, prefix: &str, default: GridParams) -> CResult<GridParams> {
    let key = |s: &str| format!("{prefix}.{s}");
    Ok(GridParams {
        half_width: e.positive(&key("half_width"), default.half_width)?,
        points_per_axis: e.checked(
            &key("points_per_axis"),
            default.points_per_axis,
            |n: usize| (8..=4096).contains(&n),
            "must be between 8 and 4096",
        )?,
        boundary: e.parse(&key("boundary"), default.boundary)?,
    })
}

fn trap(e: &Entries) -> CResult<TrapSpec> {
    let kind: String = e.parse("trap.kind", "harmonic".to_string())?;
    Ok(match kind.as_str() {
        "harmonic" => TrapSpec::Harmonic,
        "quartic" => TrapSpec::Quartic,
        "zero" => TrapSpec::Zero,
        "box" => TrapSpec::Box { radius: e.positive("trap.radius", 1.0)? },
        other => {
            return Err(ConfigError::InvalidValue {
                key: "trap.kind".into(),
                line: e.line("trap.kind"),
                reason: format!("unknown trap '{other}'"),
            })
        }
    })
}

fn interaction(e: &Entries) -> CResult<InteractionSpec> {
    let kind: String = e.parse("interaction.kind", "none".to_string())?;
    let finite = |key: &str, d: f64| e.checked(key, d, |v: f64| v.is_finite(), "must be finite");
    let spec = match kind.as_str() {
        "none" => InteractionSpec::zero(),
        "gaussian" => {
            InteractionSpec::Gaussian { g: finite("interaction.g", 1.0)?, s: e.positive("interaction.s", 1.0)? }
        }
        "hard_sphere" => InteractionSpec::HardSphere {
            radius: e.positive("interaction.radius", 1.0)?,
            cap: e.positive("interaction.cap", 1e4)?,
        },
        "truncated_inverse" => InteractionSpec::TruncatedInverse {
            g: finite("interaction.g", 1.0)?,
            p: e.positive("interaction.p", 1.0)?,
            cap: e.positive("interaction.cap", 1e4)?,
            support: e.positive("interaction.support", 1.0)?,
        },
        other => {
            return Err(ConfigError::InvalidValue {
                key: "interaction.kind".into(),
                line: e.line("interaction.kind"),
                reason: format!("unknown interaction '{other}'"),
            })
        }
    };
    spec.validate().map_err(|err| ConfigError::OutOfRange {
        key: "interaction".into(),
        line: e.line("interaction.kind"),
        reason: err.to_string(),
    })?;
    Ok(spec)
}

fn build(e: &Entries) -> CResult<RunConfig> {
    let subcommand: Subcommand = match e.raw("subcommand") {
        None => return Err(ConfigError::MissingRequired { key: "subcommand".into() }),
        Some(_) => e.parse("subcommand", Subcommand::Gp)?,
    };
    if subcommand == Subcommand::Scattering && e.raw("interaction.kind").is_none() {
        return Err(ConfigError::MissingRequired { key: "interaction.kind".into() });
    }
    let alpha = match e.raw("alpha") {
        None => None,
        Some(_) => Some(e.checked("alpha", 0.0, |a: f64| a.is_finite() && a >= 0.0, "must be nonnegative")?),
    };
    let pair_model = match e.parse("pair_model", "smeared".to_string())?.as_str() {
        "smeared" => PairModelKind::Smeared,
        "contact" => PairModelKind::Contact,
        other => {
            return Err(ConfigError::InvalidValue {
                key: "pair_model".into(),
                line: e.line("pair_model"),
                reason: format!("unknown pair model '{other}'"),
            })
        }
    };
    let start = match e.parse("mc.start", "origin".to_string())?.as_str() {
        "origin" => StartLaw::Origin,
        "stationary" => StartLaw::Stationary,
        other => {
            return Err(ConfigError::InvalidValue {
                key: "mc.start".into(),
                line: e.line("mc.start"),
                reason: format!("unknown start law '{other}'"),
            })
        }
    };
    let model = match e.parse("diagram.model", "inverse_x".to_string())?.as_str() {
        "inverse_x" => ExtrapolationModel::InverseX,
        "inverse_x_squared" => ExtrapolationModel::InverseXSquared,
        other => {
            return Err(ConfigError::InvalidValue {
                key: "diagram.model".into(),
                line: e.line("diagram.model"),
                reason: format!("unknown model '{other}'"),
            })
        }
    };
    let cfg = RunConfig {
        subcommand,
        dim: e.checked("dim", 2, |d: usize| (1..=3).contains(&d), "must be 1, 2 or 3")?,
        convention_a: e.positive("convention_a", 1.0)?,
        grid: grid_params(
            e,
            "grid",
            GridParams { half_width: 6.0, points_per_axis: 64, boundary: Boundary::Dirichlet },
        )?,
        rate_grid: grid_params(
            e,
            "rate_grid",
            GridParams { half_width: 6.0, points_per_axis: 48, boundary: Boundary::Periodic },
        )?,
        trap: trap(e)?,
        interaction: interaction(e)?,
        alpha,
        alpha_rule: e.parse("alpha_rule", AlphaRule::MeanField)?,
        ns: e.list("ns", &[2, 4, 8, 16], |n: usize| n >= 1, "particle numbers must be at least 1")?,
        betas: e.list("betas", &[5.0, 10.0, 20.0, 40.0], |b: f64| b.is_finite() && b > 0.0, "must be positive")?,
        epsilons: e.list("epsilons", &[0.8, 0.4, 0.2], |x: f64| x.is_finite() && x > 0.0, "must be positive")?,
        pair_model,
        dirac_coupling: e.checked("dirac_coupling", 1.0, |c: f64| c.is_finite() && c >= 0.0, "must be nonnegative")?,
        rate_sigma: e.positive("rate.sigma", 1.0)?,
        rate_init: e.parse("rate.init", InitialDistribution::Stationary)?,
        mc: McConfig {
            m: e.checked("mc.m", 10_000, |m: usize| m >= 1, "must be at least 1")?,
            dt: e.positive("mc.dt", 0.01)?,
            seed: e.parse("mc.seed", 1)?,
            sampler: e.parse("mc.sampler", Sampler::Direct)?,
            stride: e.parse("mc.stride", 1)?,
            start,
        },
        scattering: ScatteringConfig {
            mesh: e.checked("scattering.mesh", 10_000, |m: usize| m >= 10, "must be at least 10")?,
            r_max: e.positive("scattering.r_max", 20.0)?,
        },
        diagram: DiagramSection {
            tolerance: e.checked("diagram.tolerance", 0.05, |t: f64| t > 0.0 && t <= 1.0, "must lie in (0, 1]")?,
            model,
            corner_n: e.parse("diagram.corner_n", 0)?,
            corner_beta: e.positive("diagram.corner_beta", 2.0)?,
        },
        output_dir: e.parse("output.dir", "out".to_string())?,
    };
    Ok(cfg)
}

fn list_text<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Canonical text form; `parse_config` of it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("subcommand", self.subcommand.to_string());
        kv("dim", self.dim.to_string());
        kv("convention_a", self.convention_a.to_string());
        if let Some(a) = self.alpha {
            kv("alpha", a.to_string());
        }
        kv("alpha_rule", self.alpha_rule.to_string());
        kv("ns", list_text(&self.ns));
        kv("betas", list_text(&self.betas));
        kv("epsilons", list_text(&self.epsilons));
        kv(
            "pair_model",
            match self.pair_model {
                PairModelKind::Smeared => "smeared",
                PairModelKind::Contact => "contact",
            }
            .into(),
        );
        kv("dirac_coupling", self.dirac_coupling.to_string());
        for (name, g) in [("grid", &self.grid), ("rate_grid", &self.rate_grid)] {
            kv(&format!("{name}.half_width"), g.half_width.to_string());
            kv(&format!("{name}.points_per_axis"), g.points_per_axis.to_string());
            kv(&format!("{name}.boundary"), g.boundary.to_string());
        }
        match self.trap {
            TrapSpec::Harmonic => kv("trap.kind", "harmonic".into()),
            TrapSpec::Quartic => kv("trap.kind", "quartic".into()),
            TrapSpec::Zero => kv("trap.kind", "zero".into()),
            TrapSpec::Box { radius } => {
                kv("trap.kind", "box".into());
                kv("trap.radius", radius.to_string());
            }
        }
        match self.interaction {
            v if v.is_zero() && v == InteractionSpec::zero() => kv("interaction.kind", "none".into()),
            InteractionSpec::Gaussian { g, s: w } => {
                kv("interaction.kind", "gaussian".into());
                kv("interaction.g", g.to_string());
                kv("interaction.s", w.to_string());
            }
            InteractionSpec::HardSphere { radius, cap } => {
                kv("interaction.kind", "hard_sphere".into());
                kv("interaction.radius", radius.to_string());
                kv("interaction.cap", cap.to_string());
            }
            InteractionSpec::TruncatedInverse { g, p, cap, support } => {
                kv("interaction.kind", "truncated_inverse".into());
                kv("interaction.g", g.to_string());
                kv("interaction.p", p.to_string());
                kv("interaction.cap", cap.to_string());
                kv("interaction.support", support.to_string());
            }
        }
        kv("rate.sigma", self.rate_sigma.to_string());
        kv(
            "rate.init",
            match self.rate_init {
                InitialDistribution::Stationary => "stationary",
                InitialDistribution::PointCenter => "point_center",
            }
            .into(),
        );
        kv("mc.m", self.mc.m.to_string());
        kv("mc.dt", self.mc.dt.to_string());
        kv("mc.seed", self.mc.seed.to_string());
        kv("mc.sampler", self.mc.sampler.to_string());
        kv("mc.stride", self.mc.stride.to_string());
        kv(
            "mc.start",
            match self.mc.start {
                StartLaw::Stationary => "stationary",
                _ => "origin",
            }
            .into(),
        );
        kv("scattering.mesh", self.scattering.mesh.to_string());
        kv("scattering.r_max", self.scattering.r_max.to_string());
        kv("diagram.tolerance", self.diagram.tolerance.to_string());
        kv(
            "diagram.model",
            match self.diagram.model {
                ExtrapolationModel::InverseX => "inverse_x",
                ExtrapolationModel::InverseXSquared => "inverse_x_squared",
            }
            .into(),
        );
        kv("diagram.corner_n", self.diagram.corner_n.to_string());
        kv("diagram.corner_beta", self.diagram.corner_beta.to_string());
        kv("output.dir", self.output_dir.clone());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "subcommand = gp\ndim = 2\ntrap.kind = harmonic\nalpha = 1\n";

    #[test]
    fn minimal_gp_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.subcommand, Subcommand::Gp);
        assert_eq!(c.alpha, Some(1.0));
        assert_eq!(c.trap, TrapSpec::Harmonic);
        assert_eq!(c.grid.points_per_axis, 64);
        assert_eq!(c.mc.seed, 1);
        assert_eq!(c.convention_a, 1.0);
    }

    #[test]
    fn out_of_range_names_key_and_line() {
        let err = parse_config("subcommand = gp\n# comment\ngrid.points_per_axis = 4\n").unwrap_err();
        assert_eq!(err.name(), "OutOfRange");
        assert_eq!(err.key(), Some("grid.points_per_axis"));
        assert_eq!(err.line(), Some(3));
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config("subcommand = gp\nvortex = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref key, line: Line(2) } if key == "vortex"));
        let err = parse_config("dim = 2\n").unwrap_err();
        assert_eq!(err.name(), "MissingRequired");
        let err = parse_config("subcommand = scattering\n").unwrap_err();
        assert_eq!(err.key(), Some("interaction.kind"));
    }

    #[test]
    fn syntax_duplicate_and_bad_values() {
        assert_eq!(parse_config("subcommand gp\n").unwrap_err().name(), "Syntax");
        assert_eq!(parse_config("subcommand = gp\ndim = 2\ndim = 3\n").unwrap_err().name(), "Duplicate");
        assert_eq!(parse_config("subcommand = gp\ndim = two\n").unwrap_err().name(), "InvalidValue");
        assert_eq!(parse_config("subcommand = gp\ndim = 4\n").unwrap_err().name(), "OutOfRange");
        assert_eq!(parse_config("subcommand = gp\nbetas = 1, -2\n").unwrap_err().name(), "OutOfRange");
        assert_eq!(
            parse_config("subcommand = gp\ninteraction.kind = gaussian\ninteraction.s = 0\n").unwrap_err().name(),
            "OutOfRange"
        );
    }

    #[test]
    fn overrides_replace_values() {
        let c = parse_with_overrides(MINIMAL, &["dim=3".into(), "mc.seed = 9".into()]).unwrap();
        assert_eq!((c.dim, c.mc.seed), (3, 9));
        let err = parse_with_overrides(MINIMAL, &["nope=1".into()]).unwrap_err();
        assert_eq!(err.line(), Some(0));
    }

    #[test]
    fn round_trip() {
        let text = "subcommand = free-energy\ndim = 1\ninteraction.kind = gaussian\ninteraction.g = 0.3\n\
                    interaction.s = 0.1\nbetas = [2, 4, 8.5]\nmc.sampler = girsanov_tilted\nmc.dt = 0.003125\n\
                    trap.kind = box\ntrap.radius = 2.5\nmc.start = stationary\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }
}
