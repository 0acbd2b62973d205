//! Subcommand dispatch, JSON/CSV outputs and run manifests.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{parse_with_overrides, ConfigError, PairModelKind, RunConfig, Subcommand};
use crate::diagram::{run_diagram, DiagramConfig, FCorner};
use crate::dv_rate::{chi_otimes_beta, rate_j, ChiOptions, RateOptions};
use crate::error::{Error, Result};
use crate::extrapolate::{extrapolate, ExtrapolationModel};
use crate::free_energy::{estimate_f, estimate_g, extrapolate_in_beta, hartree_guides, FreeEnergyEstimate, McParams};
use crate::gp_solver::{gp_minimize, GpOptions};
use crate::grid::gradient_sq_norm;
use crate::hartree::{dirac_hartree_minimize, hartree_minimize, max_resolved_n, HartreeOptions, HartreeSolution};
use crate::potentials::{eval_trap, validate_assumptions, TrapField};
use crate::scattering::{alpha_from_rule, compute_scattering};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Result of one subcommand: a JSON object and an optional CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub json: Value,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    /// SHA-256 of `config`.
    pub config_sha256: String,
    /// Canonical config text; rerunning it reproduces every output.
    pub config: String,
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn manifest(cfg: &RunConfig) -> Manifest {
    let config = cfg.to_text();
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cfg.subcommand.to_string(),
        seed: cfg.mc.seed,
        config_sha256: config_hash(&config),
        config,
    }
}

/// Recover the config recorded in a manifest, checking its hash.
pub fn config_from_manifest(m: &Manifest) -> Result<RunConfig> {
    if config_hash(&m.config) != m.config_sha256 {
        return Err(Error::param("manifest", "config hash does not match"));
    }
    Ok(crate::config::parse_config(&m.config)?)
}

fn alpha(cfg: &RunConfig) -> Result<f64> {
    match cfg.alpha {
        Some(a) => Ok(a),
        None => alpha_from_rule(cfg.alpha_rule, &cfg.interaction, cfg.dim),
    }
}

fn main_trap(cfg: &RunConfig) -> Result<TrapField> {
    Ok(eval_trap(&cfg.trap, &cfg.grid.build(cfg.dim)?))
}

fn hartree_for(cfg: &RunConfig, trap: &TrapField, n: usize) -> Result<HartreeSolution> {
    match cfg.pair_model {
        PairModelKind::Smeared => hartree_minimize(trap, &cfg.interaction, n, &HartreeOptions::default()),
        PairModelKind::Contact => dirac_hartree_minimize(
            trap,
            n,
            &HartreeOptions { dirac_coupling: cfg.dirac_coupling, ..Default::default() },
        ),
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn limit_of(xs: &[f64], ys: &[f64]) -> Option<Value> {
    (xs.len() >= 3).then(|| match extrapolate(xs, ys, ExtrapolationModel::InverseX) {
        Ok(e) => json!(e),
        Err(e) => json!({ "error": e.to_string() }),
    })
}

fn run_gp(cfg: &RunConfig) -> Result<RunOutput> {
    let trap = main_trap(cfg)?;
    let a = alpha(cfg)?;
    let sol = gp_minimize(&trap, a, &GpOptions::default())?;
    Ok(RunOutput { json: json!({ "alpha": a, "solution": sol }), csv: None })
}

fn run_hartree(cfg: &RunConfig) -> Result<RunOutput> {
    let trap = main_trap(cfg)?;
    let rows: Vec<HartreeSolution> = cfg.ns.iter().map(|&n| hartree_for(cfg, &trap, n)).collect::<Result<_>>()?;
    let table = csv(
        "n,energy,per_particle,converged",
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                format!("{:.12e}", r.energy),
                format!("{:.12e}", r.per_particle),
                r.converged.to_string(),
            ]
        }),
    );
    let resolved = match cfg.pair_model {
        PairModelKind::Smeared => Some(max_resolved_n(trap.grid(), &cfg.interaction)),
        PairModelKind::Contact => None,
    };
    Ok(RunOutput { json: json!({ "max_resolved_n": resolved, "rows": rows }), csv: Some(table) })
}

fn run_rate(cfg: &RunConfig) -> Result<RunOutput> {
    let grid = cfg.grid.build(cfg.dim)?;
    let s2 = cfg.rate_sigma * cfg.rate_sigma;
    let raw = grid.field_from_fn(|x| (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * s2)).exp());
    let mass = raw.integrate();
    let mu = raw.map(|v| v / mass);
    let phi = mu.map(f64::sqrt);
    let target = cfg.convention_a * gradient_sq_norm(&phi);
    let opts = RateOptions { a: cfg.convention_a, init: cfg.rate_init, ..Default::default() };
    let evals = cfg.betas.iter().map(|&b| rate_j(&mu, b, &opts)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = evals.iter().map(|e| e.value).collect();
    let table = csv("beta,j", cfg.betas.iter().zip(&ys).map(|(b, y)| vec![b.to_string(), format!("{y:.12e}")]));
    Ok(RunOutput {
        json: json!({ "target": target, "rows": evals, "extrapolation": limit_of(&cfg.betas, &ys) }),
        csv: Some(table),
    })
}

fn run_chi_beta(cfg: &RunConfig) -> Result<RunOutput> {
    let grid = cfg.rate_grid.build(cfg.dim)?;
    let trap = eval_trap(&cfg.trap, &grid);
    let a = alpha(cfg)?;
    let gp = gp_minimize(&trap, a, &GpOptions { tol: 1e-7, ..Default::default() })?;
    let opts = ChiOptions { rate: RateOptions { a: cfg.convention_a, ..Default::default() }, ..Default::default() };
    let sols = cfg.betas.iter().map(|&b| chi_otimes_beta(&trap, a, b, &opts)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = sols.iter().map(|s| s.value).collect();
    let table = csv("beta,chi", cfg.betas.iter().zip(&ys).map(|(b, y)| vec![b.to_string(), format!("{y:.12e}")]));
    Ok(RunOutput {
        json: json!({ "alpha": a, "chi_gp": gp.energy, "rows": sols, "extrapolation": limit_of(&cfg.betas, &ys) }),
        csv: Some(table),
    })
}

fn run_free_energy(cfg: &RunConfig) -> Result<RunOutput> {
    let trap = main_trap(cfg)?;
    let mc = McParams {
        m: cfg.mc.m,
        dt: cfg.mc.dt,
        seed: cfg.mc.seed,
        sampler: cfg.mc.sampler,
        a: cfg.convention_a,
        stride: cfg.mc.stride,
        start: cfg.mc.start.clone(),
    };
    let tilted = cfg.mc.sampler == crate::free_energy::Sampler::GirsanovTilted;
    let mut rows: Vec<FreeEnergyEstimate> = Vec::new();
    let mut per_n = Vec::new();
    for &n in &cfg.ns {
        let h = hartree_for(cfg, &trap, n)?;
        let guides = if tilted { Some(hartree_guides(&h)?) } else { None };
        let mut limits = Vec::new();
        for &beta in &cfg.betas {
            match cfg.pair_model {
                PairModelKind::Smeared => {
                    limits.push(estimate_f(n, beta, cfg.dim, &cfg.trap, &cfg.interaction, &mc, guides.as_deref())?);
                }
                PairModelKind::Contact => {
                    let g = estimate_g(n, beta, cfg.dim, &cfg.trap, &cfg.epsilons, &mc, guides.as_deref())?;
                    rows.extend(g.per_epsilon);
                    limits.push(g.extrapolated);
                }
            }
        }
        let fit = if limits.len() >= 3 { Some(extrapolate_in_beta(&limits)?) } else { None };
        per_n.push(json!({ "n": n, "hartree_target": -h.per_particle, "beta_extrapolation": fit }));
        rows.extend(limits);
    }
    let table = csv(
        "n,beta,epsilon,value,stderr,ess",
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.beta.to_string(),
                r.epsilon.map(|e| e.to_string()).unwrap_or_default(),
                format!("{:.12e}", r.value),
                format!("{:.12e}", r.stderr),
                format!("{:.3}", r.ess),
            ]
        }),
    );
    Ok(RunOutput { json: json!({ "rows": rows, "per_n": per_n }), csv: Some(table) })
}

pub fn diagram_config(cfg: &RunConfig) -> DiagramConfig {
    DiagramConfig {
        dim: cfg.dim,
        trap: cfg.trap,
        interaction: cfg.interaction,
        alpha_rule: cfg.alpha_rule,
        grid: cfg.grid,
        rate_grid: cfg.rate_grid,
        betas: cfg.betas.clone(),
        ns: cfg.ns.clone(),
        tolerance: cfg.diagram.tolerance,
        model: cfg.diagram.model,
        convention_a: cfg.convention_a,
        corner_f: (cfg.diagram.corner_n > 0).then_some(FCorner {
            n: cfg.diagram.corner_n,
            beta: cfg.diagram.corner_beta,
            m: cfg.mc.m,
            dt: cfg.mc.dt,
            seed: cfg.mc.seed,
        }),
    }
}

/// Run the configured subcommand.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.subcommand {
        Subcommand::Gp => run_gp(cfg),
        Subcommand::Hartree => run_hartree(cfg),
        Subcommand::Scattering => {
            let r = compute_scattering(&cfg.interaction, cfg.dim, cfg.scattering.r_max, cfg.scattering.mesh)?;
            Ok(RunOutput { json: json!(r), csv: None })
        }
        Subcommand::Rate => run_rate(cfg),
        Subcommand::ChiBeta => run_chi_beta(cfg),
        Subcommand::FreeEnergy => run_free_energy(cfg),
        Subcommand::Diagram => {
            let r = run_diagram(&diagram_config(cfg))?;
            Ok(RunOutput { json: json!(r), csv: Some(r.sweep_csv()) })
        }
        Subcommand::Validate => {
            let r = validate_assumptions(&cfg.interaction, &cfg.trap, cfg.dim)?;
            Ok(RunOutput { json: json!({ "assumptions": r, "config": cfg }), csv: None })
        }
    }
}

/// Write `<sub>.json`, `<sub>.csv` and `manifest.json` into `dir`.
pub fn write_outputs(cfg: &RunConfig, out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = cfg.subcommand.as_str();
    let mut written = Vec::new();
    let p = dir.join(format!("{stem}.json"));
    fs::write(&p, serde_json::to_string_pretty(&out.json)? + "\n")?;
    written.push(p);
    if let Some(t) = &out.csv {
        let p = dir.join(format!("{stem}.csv"));
        fs::write(&p, t)?;
        written.push(p);
    }
    let p = dir.join("manifest.json");
    fs::write(&p, serde_json::to_string_pretty(&manifest(cfg))? + "\n")?;
    written.push(p);
    Ok(written)
}

#[derive(Debug, Parser)]
#[command(
    name = "gp-limits",
    version,
    about = "Ground-state energies of trapped Bose gases and their path-integral limits"
)]
struct Cli {
    /// One of gp, hartree, scattering, rate, chi-beta, free-energy, diagram, validate.
    subcommand: String,
    /// Config file in key = value form.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Rerun the config recorded in a manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// key=value, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Do not print the JSON result.
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> std::result::Result<RunConfig, String> {
    let sub: Subcommand = cli.subcommand.parse()?;
    let mut overrides = cli.overrides.clone();
    overrides.push(format!("subcommand = {sub}"));
    let text = match (&cli.config, &cli.manifest) {
        (Some(p), _) => fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        (None, Some(p)) => {
            let raw = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            let m: Manifest = serde_json::from_str(&raw).map_err(|e| format!("bad manifest: {e}"))?;
            if config_hash(&m.config) != m.config_sha256 {
                return Err("manifest config hash does not match".into());
            }
            m.config
        }
        (None, None) => return Err("one of --config or --manifest is required".into()),
    };
    parse_with_overrides(&text, &overrides).map_err(|e: ConfigError| format!("{}: {e}", e.name()))
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let result = execute(&cfg).and_then(|out| write_outputs(&cfg, &out, &dir).map(|_| out));
    match result {
        Ok(out) => {
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&out.json).unwrap_or_default());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            EXIT_SOLVER
        }
    }
}
