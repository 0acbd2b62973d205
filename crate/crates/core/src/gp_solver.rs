//! The Gross-Pitaevskii functional ‖∇φ‖² + ⟨W, φ²⟩ + (α/2)‖φ‖⁴₄ and its minimizer.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{gradient_sq_norm, laplacian_into, weighted_dot, Grid, GridField};
use crate::potentials::TrapField;

#[derive(Debug, Clone)]
pub struct GpOptions {
    /// Pseudo-time step; `None` picks 1/λ_max from a Gershgorin bound.
    pub step: Option<f64>,
    pub max_iter: usize,
    /// Target for the Euler-Lagrange residual ‖Hφ − λφ‖₂.
    pub tol: f64,
    pub initial: Option<GridField>,
}

impl Default for GpOptions {
    fn default() -> Self {
        GpOptions { step: None, max_iter: 500_000, tol: 1e-8, initial: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GpSolution {
    pub energy: f64,
    #[serde(skip)]
    pub phi: GridField,
    pub alpha: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Rayleigh quotient ⟨φ, Hφ⟩ of the converged state.
    pub chemical_potential: f64,
    pub converged: bool,
}

impl GpSolution {
    /// Turn a non-converged result into `MaxIterExceeded`.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterExceeded { iterations: self.iterations, residual: self.residual })
        }
    }
}

fn check_state(phi: &GridField, trap: &TrapField) -> Result<()> {
    phi.check_same(&trap.field)?;
    let norm = phi.norm_sq().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    if phi.values.iter().zip(&trap.infinite).any(|(&p, &inf)| inf && p != 0.0) {
        return Err(Error::InfiniteOverlap);
    }
    Ok(())
}

/// GP energy with grid quadrature.
pub fn gp_energy(phi: &GridField, trap: &TrapField, alpha: f64) -> Result<f64> {
    check_state(phi, trap)?;
    Ok(energy_unchecked(phi, &trap.field.values, alpha))
}

fn energy_unchecked(phi: &GridField, w: &[f64], alpha: f64) -> f64 {
    let weights = phi.grid.weights();
    let mut pot = 0.0;
    let mut quart = 0.0;
    for ((&p, &wi), &q) in phi.values.iter().zip(w).zip(weights) {
        let p2 = p * p;
        pot += q * wi * p2;
        quart += q * p2 * p2;
    }
    gradient_sq_norm(phi) + pot + 0.5 * alpha * quart
}

/// Positive Gaussian start, matched to a quadratic trap when there is one.
pub fn initial_guess(trap: &TrapField, quadratic: Option<f64>) -> Result<GridField> {
    let g = trap.grid();
    let allowed = trap.allowed();
    let width2 = match quadratic {
        Some(c) if c > 0.0 => 1.0 / c.sqrt(),
        _ => (g.half_width / 3.0).powi(2),
    };
    let mut f = g.field_from_fn(|x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>() / width2).exp());
    for (v, &ok) in f.values.iter_mut().zip(&allowed) {
        if !ok {
            *v = 0.0;
        }
    }
    f.normalized()
}

/// Hφ = −Δφ + Wφ + αφ³ on allowed nodes.
fn apply_h(g: &Grid, phi: &[f64], w: &[f64], alpha: f64, allowed: &[bool], out: &mut [f64]) {
    laplacian_into(g, phi, out);
    for i in 0..phi.len() {
        out[i] = if allowed[i] { -out[i] + (w[i] + alpha * phi[i] * phi[i]) * phi[i] } else { 0.0 };
    }
}

/// Normalized projected gradient descent (explicit imaginary-time stepping).
///
/// Each step is accepted only if the energy does not increase beyond roundoff;
/// otherwise the step is halved, at most 20 times in a row.
pub fn gp_minimize(trap: &TrapField, alpha: f64, opts: &GpOptions) -> Result<GpSolution> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be nonnegative, got {alpha}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let g: Arc<Grid> = Arc::clone(trap.grid());
    let w = &trap.field.values;
    let allowed = trap.allowed();
    let weights = g.weights();
    let mut phi = match &opts.initial {
        Some(f) => {
            f.check_same(&trap.field)?;
            let mut f = f.clone();
            for (v, &ok) in f.values.iter_mut().zip(&allowed) {
                *v = if ok { v.abs() } else { 0.0 };
            }
            f.normalized()?
        }
        None => initial_guess(trap, trap.spec.and_then(|s| s.quadratic_coefficient()))?,
    };
    let n = phi.values.len();
    let mut hphi = vec![0.0; n];
    let mut energy = energy_unchecked(&phi, w, alpha);
    let lam_max = |p: &[f64]| {
        let wmax = w.iter().zip(&allowed).filter(|(_, &ok)| ok).map(|(v, _)| *v).fold(0.0, f64::max);
        let pmax = p.iter().fold(0.0f64, |a, &v| a.max(v * v));
        4.0 * g.dim as f64 / (g.spacing * g.spacing) + wmax + alpha * pmax
    };
    let tau0 = opts.step.unwrap_or_else(|| 1.0 / lam_max(&phi.values));
    let mut tau = tau0;
    let mut residual = f64::INFINITY;
    let mut mu = 0.0;
    let mut trial = phi.clone();
    for it in 0..opts.max_iter {
        apply_h(&g, &phi.values, w, alpha, &allowed, &mut hphi);
        mu = weighted_dot(weights, &phi.values, &hphi);
        for i in 0..n {
            hphi[i] -= mu * phi.values[i];
        }
        residual = weighted_dot(weights, &hphi, &hphi).sqrt();
        if residual <= opts.tol {
            return Ok(GpSolution {
                energy,
                phi,
                alpha,
                iterations: it,
                residual,
                chemical_potential: mu,
                converged: true,
            });
        }
        let mut halvings = 0;
        loop {
            for i in 0..n {
                trial.values[i] = if allowed[i] { (phi.values[i] - tau * hphi[i]).abs() } else { 0.0 };
            }
            let nrm = trial.norm_sq().sqrt();
            trial.values.iter_mut().for_each(|v| *v /= nrm);
            let e_new = energy_unchecked(&trial, w, alpha);
            if e_new <= energy + 1e-13 * energy.abs().max(1.0) {
                energy = e_new;
                std::mem::swap(&mut phi, &mut trial);
                // Let the step recover after roundoff-driven rejections.
                tau = (tau * 1.25).min(tau0);
                break;
            }
            halvings += 1;
            if halvings > 20 {
                return Err(Error::StepTooLarge { halvings });
            }
            tau *= 0.5;
        }
    }
    Ok(GpSolution { energy, phi, alpha, iterations: opts.max_iter, residual, chemical_potential: mu, converged: false })
}

/// ‖(−Δφ + Wφ + αφ³) − λφ‖₂ with λ the Rayleigh quotient.
pub fn euler_lagrange_residual(phi: &GridField, trap: &TrapField, alpha: f64) -> f64 {
    let allowed = trap.allowed();
    let mut out = vec![0.0; phi.values.len()];
    apply_h(&phi.grid, &phi.values, &trap.field.values, alpha, &allowed, &mut out);
    let w = phi.grid.weights();
    let lam = weighted_dot(w, &phi.values, &out) / phi.norm_sq();
    for (o, p) in out.iter_mut().zip(&phi.values) {
        *o -= lam * p;
    }
    weighted_dot(w, &out, &out).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Boundary};
    use crate::potentials::{eval_trap, TrapSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_state_on_periodic_box() {
        let g = build_grid(2, 2.0, 16, Boundary::Periodic).unwrap();
        let trap = eval_trap(&TrapSpec::Zero, &g);
        let phi = g.constant(1.0 / 4.0);
        let alpha = 3.0;
        assert_relative_eq!(gp_energy(&phi, &trap, alpha).unwrap(), alpha / (2.0 * 16.0), max_relative = 1e-12);
    }

    #[test]
    fn oscillator_gaussian_energy() {
        for d in 1..=2 {
            let g = build_grid(d, 8.0, 129, Boundary::Dirichlet).unwrap();
            let trap = eval_trap(&TrapSpec::Harmonic, &g);
            let phi = g.field_from_fn(|x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()).normalized().unwrap();
            assert_relative_eq!(gp_energy(&phi, &trap, 0.0).unwrap(), d as f64, max_relative = 1e-2);
        }
    }

    #[test]
    fn dirichlet_box_mode_energy() {
        let l = 3.0;
        let g = build_grid(2, l, 101, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Zero, &g);
        let phi =
            g.field_from_fn(|x| x.iter().map(|v| (PI * (v + l) / (2.0 * l)).sin()).product()).normalized().unwrap();
        assert_relative_eq!(gp_energy(&phi, &trap, 0.0).unwrap(), 2.0 * PI * PI / (4.0 * l * l), max_relative = 1e-2);
    }

    #[test]
    fn energy_rejects_bad_states() {
        let g = build_grid(1, 3.0, 32, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Box { radius: 1.0 }, &g);
        assert!(matches!(gp_energy(&g.constant(1.0), &trap, 0.0), Err(Error::NotNormalized { .. })));
        let phi = g.constant(1.0).normalized().unwrap();
        assert!(matches!(gp_energy(&phi, &trap, 0.0), Err(Error::InfiniteOverlap)));
    }

    #[test]
    fn minimizer_invariants() {
        let g = build_grid(2, 6.0, 48, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let opts = GpOptions { tol: 1e-7, ..Default::default() };
        let sol = gp_minimize(&trap, 2.0, &opts).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.phi.norm_sq(), 1.0, max_relative = 1e-10);
        assert!(sol.phi.values.iter().all(|&v| v >= 0.0));
        assert_relative_eq!(gp_energy(&sol.phi, &trap, 2.0).unwrap(), sol.energy, max_relative = 1e-12);
        assert!(euler_lagrange_residual(&sol.phi, &trap, 2.0) <= 10.0 * opts.tol);
        let allowed = trap.allowed();
        assert!(sol.phi.values.iter().zip(&allowed).all(|(&v, &ok)| !ok || v > 0.0));
    }

    #[test]
    fn energy_increases_with_alpha() {
        let g = build_grid(2, 5.0, 32, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let opts = GpOptions { tol: 1e-7, ..Default::default() };
        let es: Vec<f64> = [0.0, 1.0, 4.0].iter().map(|&a| gp_minimize(&trap, a, &opts).unwrap().energy).collect();
        assert!(es[0] < es[1] && es[1] < es[2], "{es:?}");
    }

    #[test]
    fn periodic_free_case_is_constant() {
        let g = build_grid(1, 2.0, 24, Boundary::Periodic).unwrap();
        let trap = eval_trap(&TrapSpec::Zero, &g);
        let sol = gp_minimize(&trap, 0.0, &GpOptions { tol: 1e-9, ..Default::default() }).unwrap();
        assert!(sol.energy.abs() < 1e-12);
        let c = 0.5;
        assert!(sol.phi.values.iter().all(|&v| (v - c).abs() < 1e-6), "{:?} {}", sol.phi.values, sol.iterations);
    }

    #[test]
    fn independent_of_initial_guess() {
        let g = build_grid(2, 5.0, 40, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Quartic, &g);
        let tol = 1e-8;
        let a = gp_minimize(&trap, 3.0, &GpOptions { tol, ..Default::default() }).unwrap();
        let skew = g.field_from_fn(|x| (-(x[0] - 1.0).powi(2) - 0.3 * x[1] * x[1]).exp() + 0.01);
        let b = gp_minimize(&trap, 3.0, &GpOptions { tol, initial: Some(skew), ..Default::default() }).unwrap();
        assert!((a.energy - b.energy).abs() <= 5.0 * tol, "{} {}", a.energy, b.energy);
    }

    #[test]
    fn rejects_negative_alpha() {
        let g = build_grid(1, 2.0, 16, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        assert!(gp_minimize(&trap, -1.0, &GpOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let g = build_grid(1, 4.0, 64, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let sol = gp_minimize(&trap, 0.0, &GpOptions { max_iter: 3, ..Default::default() }).unwrap();
        assert!(!sol.converged);
        assert!(matches!(sol.require_converged(), Err(Error::MaxIterExceeded { .. })));
    }
}
