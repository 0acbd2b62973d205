//! The two iterated limits of the rescaled free energy, side by side.
//!
//! Edge A sends β → ∞ in χ^⊗(β); edge B sends N → ∞ in (1/N)χ_N^⊗. Both are
//! compared against χ^GP and with each other.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dv_rate::{chi_otimes_beta, ChiOptions, RateOptions};
use crate::error::{Error, Result};
use crate::extrapolate::{extrapolate, ExtrapolationModel};
use crate::free_energy::{estimate_f, McParams};
use crate::gp_solver::{gp_minimize, GpOptions};
use crate::grid::{Boundary, GridParams};
use crate::hartree::{hartree_energy, hartree_minimize, max_resolved_n, HartreeOptions, ProductState};
use crate::potentials::{eval_trap, rescale_interaction, InteractionSpec, TrapSpec};
use crate::scattering::{alpha_from_rule, AlphaRule};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FCorner {
    pub n: usize,
    pub beta: f64,
    pub m: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagramConfig {
    pub dim: usize,
    pub trap: TrapSpec,
    pub interaction: InteractionSpec,
    pub alpha_rule: AlphaRule,
    /// Grid for χ^GP and the N-sweep.
    pub grid: GridParams,
    /// Grid for the β-sweep (dense transfer matrices, so coarser).
    pub rate_grid: GridParams,
    pub betas: Vec<f64>,
    pub ns: Vec<usize>,
    pub tolerance: f64,
    pub model: ExtrapolationModel,
    pub convention_a: f64,
    pub corner_f: Option<FCorner>,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        DiagramConfig {
            dim: 2,
            trap: TrapSpec::Harmonic,
            interaction: InteractionSpec::Gaussian { g: 0.3, s: 2.0 },
            alpha_rule: AlphaRule::MeanField,
            grid: GridParams { half_width: 6.0, points_per_axis: 96, boundary: Boundary::Periodic },
            rate_grid: GridParams { half_width: 6.0, points_per_axis: 48, boundary: Boundary::Periodic },
            betas: vec![5.0, 10.0, 20.0, 40.0],
            ns: vec![2, 4, 8, 16],
            tolerance: 0.05,
            model: ExtrapolationModel::InverseX,
            convention_a: 1.0,
            corner_f: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    /// β values for edge A, N values for edge B.
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: f64,
    pub slope: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: bool,
    pub error: Option<String>,
}

impl EdgeReport {
    fn failed(tolerance: f64, e: &Error) -> Self {
        EdgeReport {
            xs: vec![],
            values: vec![],
            limit: f64::NAN,
            slope: f64::NAN,
            residual: f64::NAN,
            tolerance,
            verdict: false,
            error: Some(format!("{}: {e}", e.name())),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FCornerRow {
    pub n: usize,
    pub beta: f64,
    /// (1/(Nβ)) log E[e^{−𝒦}].
    pub value: f64,
    pub stderr: f64,
    /// −χ_N^⊗/N on the main grid.
    pub hartree_target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramReport {
    pub chi_gp: f64,
    pub lambda0: f64,
    pub alpha_used: f64,
    pub alpha_rule: AlphaRule,
    pub path_a: EdgeReport,
    pub path_b: EdgeReport,
    /// Largest N the main grid resolves for v_N.
    pub max_resolved_n: usize,
    /// Per-particle energy of the frozen noninteracting ground state, per N.
    pub envelope: Vec<f64>,
    pub envelope_ok: bool,
    pub edge_gap: f64,
    pub corner_f: Option<Vec<FCornerRow>>,
    pub partial: bool,
}

impl DiagramReport {
    /// `edge,x,value` rows for both sweeps.
    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("edge,x,value\n");
        for (name, e) in [("beta", &self.path_a), ("n", &self.path_b)] {
            for (x, y) in e.xs.iter().zip(&e.values) {
                let _ = writeln!(out, "{name},{x},{y:.12e}");
            }
        }
        out
    }
}

fn check(cfg: &DiagramConfig) -> Result<()> {
    if cfg.betas.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: cfg.betas.len() });
    }
    if cfg.ns.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: cfg.ns.len() });
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::param("tolerance", "must be positive"));
    }
    if cfg.betas.windows(2).any(|w| w[1] <= w[0]) || cfg.ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("sweep", "sweep values must be strictly increasing"));
    }
    cfg.interaction.validate()
}

fn edge(xs: Vec<f64>, values: Vec<f64>, model: ExtrapolationModel, target: f64, tolerance: f64) -> Result<EdgeReport> {
    let fit = extrapolate(&xs, &values, model)?;
    Ok(EdgeReport {
        verdict: (fit.limit - target).abs() <= tolerance * target.abs(),
        xs,
        values,
        limit: fit.limit,
        slope: fit.slope,
        residual: fit.residual,
        tolerance,
        error: None,
    })
}

pub fn run_diagram(cfg: &DiagramConfig) -> Result<DiagramReport> {
    check(cfg)?;
    let d = cfg.dim;
    let grid = cfg.grid.build(d)?;
    let rate_grid = cfg.rate_grid.build(d)?;
    let trap = eval_trap(&cfg.trap, &grid);
    let rate_trap = eval_trap(&cfg.trap, &rate_grid);
    let alpha = alpha_from_rule(cfg.alpha_rule, &cfg.interaction, d)?;
    let resolved = max_resolved_n(&grid, &cfg.interaction);
    if let Some(&n) = cfg.ns.iter().find(|&&n| n > resolved) {
        log::warn!("N = {n} exceeds the resolved range (max {resolved})");
    }

    let gp_opts = GpOptions { tol: 1e-7, ..Default::default() };
    let free = gp_minimize(&trap, 0.0, &gp_opts)?.require_converged()?;
    let gp = gp_minimize(&trap, alpha, &gp_opts)?.require_converged()?;
    let chi_gp = gp.energy;

    let chi_opts = ChiOptions { rate: RateOptions { a: cfg.convention_a, ..Default::default() }, ..Default::default() };
    let a_vals: Result<Vec<f64>> =
        cfg.betas.par_iter().map(|&b| chi_otimes_beta(&rate_trap, alpha, b, &chi_opts).map(|s| s.value)).collect();
    let path_a = a_vals
        .and_then(|v| edge(cfg.betas.clone(), v, cfg.model, chi_gp, cfg.tolerance))
        .unwrap_or_else(|e| EdgeReport::failed(cfg.tolerance, &e));

    let h_opts = HartreeOptions::default();
    let b_vals: Result<Vec<f64>> = cfg
        .ns
        .par_iter()
        .map(|&n| hartree_minimize(&trap, &cfg.interaction, n, &h_opts).map(|s| s.per_particle))
        .collect();
    let xs_b: Vec<f64> = cfg.ns.iter().map(|&n| n as f64).collect();
    let path_b = b_vals
        .and_then(|v| edge(xs_b, v, cfg.model, chi_gp, cfg.tolerance))
        .unwrap_or_else(|e| EdgeReport::failed(cfg.tolerance, &e));

    let envelope: Vec<f64> = cfg
        .ns
        .iter()
        .map(|&n| {
            let vn = rescale_interaction(&cfg.interaction, n, d)?;
            let state = ProductState::symmetric(free.phi.clone(), n)?;
            Ok(hartree_energy(&state, &trap, &vn)? / n as f64)
        })
        .collect::<Result<_>>()?;
    let envelope_ok = path_b.values.iter().zip(&envelope).all(|(v, e)| *v <= e + 1e-9 * e.abs());

    let mut partial = path_a.error.is_some() || path_b.error.is_some();
    let corner_f = match &cfg.corner_f {
        None => None,
        Some(c) => match f_corner(cfg, c, &trap) {
            Ok(row) => Some(vec![row]),
            Err(e) => {
                log::warn!("F corner failed: {e}");
                partial = true;
                None
            }
        },
    };

    Ok(DiagramReport {
        chi_gp,
        lambda0: free.energy,
        alpha_used: alpha,
        alpha_rule: cfg.alpha_rule,
        edge_gap: (path_a.limit - path_b.limit).abs(),
        path_a,
        path_b,
        max_resolved_n: resolved,
        envelope,
        envelope_ok,
        corner_f,
        partial,
    })
}

fn f_corner(cfg: &DiagramConfig, c: &FCorner, trap: &crate::potentials::TrapField) -> Result<FCornerRow> {
    let h = hartree_minimize(trap, &cfg.interaction, c.n, &HartreeOptions::default())?;
    let mc = McParams { m: c.m, dt: c.dt, seed: c.seed, a: cfg.convention_a, ..Default::default() };
    let est = estimate_f(c.n, c.beta, cfg.dim, &cfg.trap, &cfg.interaction, &mc, None)?;
    Ok(FCornerRow { n: c.n, beta: c.beta, value: est.value, stderr: est.stderr, hartree_target: -h.per_particle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(v: InteractionSpec) -> DiagramConfig {
        DiagramConfig {
            interaction: v,
            grid: GridParams { half_width: 5.0, points_per_axis: 32, boundary: Boundary::Periodic },
            rate_grid: GridParams { half_width: 5.0, points_per_axis: 24, boundary: Boundary::Periodic },
            betas: vec![5.0, 10.0, 20.0],
            ns: vec![2, 4, 8],
            ..Default::default()
        }
    }

    #[test]
    fn decoupled_corners_agree() {
        let r = run_diagram(&small(InteractionSpec::zero())).unwrap();
        assert_eq!(r.alpha_used, 0.0);
        assert_relative_eq!(r.chi_gp, r.lambda0, max_relative = 1e-12);
        for e in [&r.path_a, &r.path_b] {
            assert!((e.limit - r.chi_gp).abs() < 0.02 * r.chi_gp, "{e:?} vs {}", r.chi_gp);
        }
        assert!(r.envelope_ok && !r.partial);
        assert!(r.sweep_csv().lines().count() == 7);
    }

    #[test]
    fn short_sweep_is_rejected() {
        let cfg = DiagramConfig { betas: vec![10.0], ..small(InteractionSpec::zero()) };
        assert!(matches!(run_diagram(&cfg), Err(Error::TooFewPoints { .. })));
    }
}
