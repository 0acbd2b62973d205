//! Product-state (Hartree) energies with smeared or contact pair interactions.

use std::sync::Arc;

use serde::Serialize;

use crate::conv::{Convolver, Kernel};
use crate::error::{Error, Result};
use crate::gp_solver::initial_guess;
use crate::grid::{gradient_sq_norm, laplacian_into, weighted_dot, Grid, GridField};
use crate::potentials::{rescale_interaction, InteractionSpec, TrapField};
use crate::spectral::lowest_eigenpair;

/// h_1 ⊗ … ⊗ h_N, each factor L²-normalized and nonnegative.
#[derive(Debug, Clone)]
pub struct ProductState {
    pub orbitals: Vec<GridField>,
}

impl ProductState {
    pub fn new(orbitals: Vec<GridField>) -> Result<Self> {
        if orbitals.is_empty() {
            return Err(Error::InvalidN(0));
        }
        for h in &orbitals {
            h.check_same(&orbitals[0])?;
            let norm = h.norm_sq().sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::NotNormalized { norm });
            }
        }
        Ok(ProductState { orbitals })
    }

    /// N copies of one orbital.
    pub fn symmetric(h: GridField, n: usize) -> Result<Self> {
        ProductState::new(vec![h; n])
    }

    pub fn n(&self) -> usize {
        self.orbitals.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.orbitals[0].grid
    }

    /// Largest weighted L² distance of any orbital from the first.
    pub fn asymmetry(&self) -> f64 {
        let w = self.grid().weights();
        let h0 = &self.orbitals[0].values;
        self.orbitals
            .iter()
            .map(|h| {
                let d: Vec<f64> = h.values.iter().zip(h0).map(|(a, b)| a - b).collect();
                weighted_dot(w, &d, &d).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// The pair term of a product-state energy.
#[derive(Debug, Clone, Copy)]
pub enum PairModel {
    /// Smeared interaction with the already rescaled potential v_N.
    Kernel(InteractionSpec),
    /// Contact interaction coupling·Σ_{i<j} ⟨h_i², h_j²⟩.
    Contact { coupling: f64 },
}

enum PairOp {
    Conv(Convolver),
    Contact(f64),
}

impl PairOp {
    fn new(grid: &Arc<Grid>, model: PairModel) -> Result<Self> {
        Ok(match model {
            PairModel::Kernel(v) => PairOp::Conv(Convolver::new(grid, Kernel::Interaction(v))?),
            PairModel::Contact { coupling } => PairOp::Contact(coupling),
        })
    }

    /// Mean field generated by density ρ = h².
    fn field(&self, h: &[f64]) -> Vec<f64> {
        let rho: Vec<f64> = h.iter().map(|v| v * v).collect();
        match self {
            PairOp::Conv(c) => c.apply(&rho),
            PairOp::Contact(k) => rho.into_iter().map(|r| k * r).collect(),
        }
    }
}

fn one_body(h: &GridField, w: &[f64]) -> f64 {
    let weights = h.grid.weights();
    let pot: f64 = h.values.iter().zip(w).zip(weights).map(|((p, wi), q)| q * wi * p * p).sum();
    gradient_sq_norm(h) + pot
}

fn total_energy(state: &ProductState, w: &[f64], fields: &[Vec<f64>]) -> f64 {
    let weights = state.grid().weights();
    let n = state.n();
    let mut e: f64 = state.orbitals.iter().map(|h| one_body(h, w)).sum();
    for i in 0..n {
        let rho_i: Vec<f64> = state.orbitals[i].values.iter().map(|v| v * v).collect();
        for field in &fields[i + 1..] {
            e += weighted_dot(weights, &rho_i, field);
        }
    }
    e
}

fn energy_with(state: &ProductState, trap: &TrapField, model: PairModel) -> Result<f64> {
    state.orbitals[0].check_same(&trap.field)?;
    for h in &state.orbitals {
        if h.values.iter().zip(&trap.infinite).any(|(&p, &inf)| inf && p != 0.0) {
            return Err(Error::InfiniteOverlap);
        }
    }
    let op = PairOp::new(state.grid(), model)?;
    let fields: Vec<Vec<f64>> = state.orbitals.iter().map(|h| op.field(&h.values)).collect();
    Ok(total_energy(state, &trap.field.values, &fields))
}

/// Σ_i (‖∇h_i‖² + ⟨W, h_i²⟩) + Σ_{i<j} ⟨h_i², V_N h_j²⟩ for an already rescaled v_N.
pub fn hartree_energy(state: &ProductState, trap: &TrapField, vn: &InteractionSpec) -> Result<f64> {
    energy_with(state, trap, PairModel::Kernel(*vn))
}

/// Σ_i (‖∇h_i‖² + ⟨W, h_i²⟩) + coupling·Σ_{i<j} ⟨h_i², h_j²⟩.
pub fn dirac_hartree_energy(state: &ProductState, trap: &TrapField, coupling: f64) -> Result<f64> {
    energy_with(state, trap, PairModel::Contact { coupling })
}

#[derive(Debug, Clone)]
pub struct HartreeOptions {
    pub mixing: f64,
    /// Stop when the relative energy decrease over a sweep falls below this.
    pub tol: f64,
    /// ... and no orbital moved by more than this (weighted L²).
    pub orbital_tol: f64,
    pub max_sweeps: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub symmetry_tol: f64,
    /// Coupling of the contact interaction.
    pub dirac_coupling: f64,
    pub initial: Option<ProductState>,
}

impl Default for HartreeOptions {
    fn default() -> Self {
        HartreeOptions {
            mixing: 0.5,
            tol: 1e-12,
            orbital_tol: 1e-6,
            max_sweeps: 400,
            inner_tol: 1e-9,
            inner_max_iter: 20_000,
            symmetry_tol: 1e-5,
            dirac_coupling: 1.0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HartreeSolution {
    pub n: usize,
    pub energy: f64,
    pub per_particle: f64,
    pub scf_iterations: usize,
    pub symmetric: bool,
    pub converged: bool,
    /// Mixing parameter in force at the end (reduced after rejected sweeps).
    pub mixing: f64,
    #[serde(skip)]
    pub state: ProductState,
}

impl HartreeSolution {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterExceeded { iterations: self.scf_iterations, residual: f64::NAN })
        }
    }
}

/// Largest N for which v_N = N^{d-1} v(N·) is still resolved by the grid.
pub fn max_resolved_n(grid: &Grid, v: &InteractionSpec) -> usize {
    if v.is_zero() {
        return usize::MAX;
    }
    (v.width() / grid.spacing).floor().max(0.0) as usize
}

/// Minimize the Hartree energy with v_N = N^{d-1} v(N·).
pub fn hartree_minimize(
    trap: &TrapField,
    v: &InteractionSpec,
    n: usize,
    opts: &HartreeOptions,
) -> Result<HartreeSolution> {
    let d = trap.grid().dim;
    let vn = rescale_interaction(v, n, d)?;
    scf(trap, PairModel::Kernel(vn), n, opts)
}

/// Minimize the contact-interaction product energy.
pub fn dirac_hartree_minimize(trap: &TrapField, n: usize, opts: &HartreeOptions) -> Result<HartreeSolution> {
    scf(trap, PairModel::Contact { coupling: opts.dirac_coupling }, n, opts)
}

/// Damped self-consistent field iteration, one orbital at a time.
///
/// With the other orbitals fixed the energy is a Rayleigh quotient in h_i, so
/// mixing h_i towards the ground state of its mean-field operator can only
/// lower it. A sweep that raises the energy (inexact inner solves) is undone
/// and retried with half the mixing.
pub fn scf(trap: &TrapField, model: PairModel, n: usize, opts: &HartreeOptions) -> Result<HartreeSolution> {
    if n == 0 {
        return Err(Error::InvalidN(n));
    }
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::param("mixing", format!("must lie in (0, 1], got {}", opts.mixing)));
    }
    let g = Arc::clone(trap.grid());
    let w = &trap.field.values;
    let allowed = trap.allowed();
    let weights = g.weights();
    let op = PairOp::new(&g, model)?;
    let mut state = match &opts.initial {
        Some(s) => {
            if s.n() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.n() });
            }
            s.clone()
        }
        None => ProductState::symmetric(initial_guess(trap, trap.spec.and_then(|s| s.quadratic_coefficient()))?, n)?,
    };
    let mut fields: Vec<Vec<f64>> = state.orbitals.iter().map(|h| op.field(&h.values)).collect();
    let mut total: Vec<f64> = vec![0.0; g.node_count()];
    for f in &fields {
        total.iter_mut().zip(f).for_each(|(t, v)| *t += v);
    }
    let mut energy = total_energy(&state, w, &fields);
    let mut mixing = opts.mixing;
    let mut rejections = 0;
    let cell = weights.iter().copied().fold(0.0, f64::max);
    let mut u = vec![0.0; g.node_count()];

    for sweep in 1..=opts.max_sweeps {
        let saved = (state.clone(), fields.clone(), total.clone());
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            for k in 0..u.len() {
                u[k] = w[k] + total[k] - fields[i][k];
            }
            let apply = |x: &[f64], out: &mut [f64]| {
                let mut l = vec![0.0; x.len()];
                laplacian_into(&g, x, &mut l);
                for k in 0..x.len() {
                    out[k] = if allowed[k] { -l[k] + u[k] * x[k] } else { 0.0 };
                }
            };
            // The solver works in the Euclidean norm; scale the target to match.
            let tol = opts.inner_tol / cell.sqrt();
            let eig = lowest_eigenpair(apply, &allowed, &state.orbitals[i].values, tol, opts.inner_max_iter)?;
            let gs = eig.vector;
            let sign = if gs.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let old = &state.orbitals[i].values;
            let mut mixed: Vec<f64> =
                old.iter().zip(&gs).map(|(o, gv)| (1.0 - mixing) * o + mixing * sign * gv).collect();
            mixed.iter_mut().for_each(|v| *v = v.abs());
            let nrm = weighted_dot(weights, &mixed, &mixed).sqrt();
            mixed.iter_mut().for_each(|v| *v /= nrm);
            let diff: Vec<f64> = mixed.iter().zip(old).map(|(a, b)| a - b).collect();
            max_change = max_change.max(weighted_dot(weights, &diff, &diff).sqrt());
            let new_field = op.field(&mixed);
            for k in 0..total.len() {
                total[k] += new_field[k] - fields[i][k];
            }
            fields[i] = new_field;
            state.orbitals[i].values = mixed;
        }
        // Refresh the running total to keep roundoff from accumulating.
        total.iter_mut().for_each(|t| *t = 0.0);
        for f in &fields {
            total.iter_mut().zip(f).for_each(|(t, v)| *t += v);
        }
        let new_energy = total_energy(&state, w, &fields);
        let slack = 1e-12 * energy.abs().max(1.0);
        if new_energy > energy + slack {
            rejections += 1;
            if rejections > 8 {
                return Err(Error::EnergyIncrease { before: energy, after: new_energy });
            }
            log::warn!("SCF sweep {sweep} raised the energy ({energy} -> {new_energy}); halving mixing");
            (state, fields, total) = saved;
            mixing *= 0.5;
            continue;
        }
        let decrease = energy - new_energy;
        energy = new_energy;
        if decrease <= opts.tol * energy.abs().max(1.0) && max_change <= opts.orbital_tol {
            return Ok(finish(state, energy, sweep, true, mixing, opts));
        }
    }
    Ok(finish(state, energy, opts.max_sweeps, false, mixing, opts))
}

fn finish(
    state: ProductState,
    energy: f64,
    sweeps: usize,
    converged: bool,
    mixing: f64,
    opts: &HartreeOptions,
) -> HartreeSolution {
    let n = state.n();
    HartreeSolution {
        n,
        energy,
        per_particle: energy / n as f64,
        scf_iterations: sweeps,
        symmetric: state.asymmetry() <= opts.symmetry_tol,
        converged,
        mixing,
        state,
    }
}

/// a Σ_i ‖∇ψ_i‖².
pub fn product_rate_i(psis: &[GridField], a: f64) -> Result<f64> {
    let mut total = 0.0;
    for psi in psis {
        let norm = psi.norm_sq().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NotNormalized { norm });
        }
        total += gradient_sq_norm(psi);
    }
    Ok(a * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Boundary};
    use crate::potentials::{eval_trap, radial_integral, TrapSpec};
    use crate::spectral::{inverse_power_iteration, MaskedHamiltonian};
    use approx::assert_relative_eq;

    fn lambda0(trap: &TrapField) -> (f64, GridField) {
        let g = trap.grid();
        let allowed = trap.allowed();
        let h = MaskedHamiltonian { grid: g, a: 1.0, potential: &trap.field.values, allowed: &allowed };
        let r = inverse_power_iteration(&h, 1e-11, 1000).unwrap();
        let f =
            GridField::new(Arc::clone(g), r.vector.iter().map(|v| v.abs()).collect()).unwrap().normalized().unwrap();
        (r.eigenvalue, f)
    }

    #[test]
    fn decoupled_energy_is_n_lambda0() {
        let g = build_grid(2, 5.0, 40, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let (l0, h0) = lambda0(&trap);
        let state = ProductState::symmetric(h0.clone(), 3).unwrap();
        let e = hartree_energy(&state, &trap, &InteractionSpec::zero()).unwrap();
        assert_relative_eq!(e, 3.0 * l0, max_relative = 1e-9);
        let single = ProductState::symmetric(h0, 1).unwrap();
        let v = InteractionSpec::Gaussian { g: 5.0, s: 1.0 };
        assert_relative_eq!(hartree_energy(&single, &trap, &v).unwrap(), l0, max_relative = 1e-9);
    }

    #[test]
    fn constant_pair_term() {
        let l = 4.0;
        let g = build_grid(2, l, 64, Boundary::Periodic).unwrap();
        let trap = eval_trap(&TrapSpec::Zero, &g);
        let h = g.constant(1.0).normalized().unwrap();
        let v = InteractionSpec::Gaussian { g: 1.0, s: 0.6 };
        let e = hartree_energy(&ProductState::symmetric(h, 2).unwrap(), &trap, &v).unwrap();
        assert_relative_eq!(e, radial_integral(&v, 2) / (2.0 * l).powi(2), max_relative = 1e-8);
    }

    #[test]
    fn permutation_invariant() {
        let g = build_grid(2, 4.0, 32, Boundary::Periodic).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let orbs: Vec<GridField> = (0..4)
            .map(|k| {
                let c = k as f64 * 0.4 - 0.6;
                g.field_from_fn(|x| (-(x[0] - c).powi(2) - 0.5 * x[1] * x[1]).exp()).normalized().unwrap()
            })
            .collect();
        let v = InteractionSpec::Gaussian { g: 2.0, s: 0.5 };
        let e1 = hartree_energy(&ProductState::new(orbs.clone()).unwrap(), &trap, &v).unwrap();
        let perm = vec![orbs[2].clone(), orbs[0].clone(), orbs[3].clone(), orbs[1].clone()];
        let e2 = hartree_energy(&ProductState::new(perm).unwrap(), &trap, &v).unwrap();
        assert_relative_eq!(e1, e2, max_relative = 1e-13);
    }

    #[test]
    fn free_minimization_gives_n_lambda0() {
        let g = build_grid(1, 6.0, 96, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let (l0, _) = lambda0(&trap);
        for n in [1, 3] {
            let sol = hartree_minimize(&trap, &InteractionSpec::zero(), n, &HartreeOptions::default()).unwrap();
            assert!(sol.converged && sol.symmetric);
            assert_relative_eq!(sol.energy, n as f64 * l0, max_relative = 1e-8);
            assert_relative_eq!(sol.per_particle, sol.energy / n as f64, max_relative = 1e-15);
        }
    }

    #[test]
    fn single_particle_ignores_interaction() {
        let g = build_grid(1, 6.0, 64, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let (l0, _) = lambda0(&trap);
        let v = InteractionSpec::Gaussian { g: 3.0, s: 1.0 };
        let sol = hartree_minimize(&trap, &v, 1, &HartreeOptions::default()).unwrap();
        assert_relative_eq!(sol.energy, l0, max_relative = 1e-8);
    }

    #[test]
    fn below_frozen_orbital_ansatz() {
        let g = build_grid(2, 5.0, 40, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let (l0, h0) = lambda0(&trap);
        let v = InteractionSpec::Gaussian { g: 0.5, s: 1.0 };
        let vn = rescale_interaction(&v, 2, 2).unwrap();
        let ansatz = hartree_energy(&ProductState::symmetric(h0, 2).unwrap(), &trap, &vn).unwrap();
        let sol = hartree_minimize(&trap, &v, 2, &HartreeOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.energy <= ansatz + 1e-12);
        assert!(sol.energy > 2.0 * l0);
        assert_relative_eq!(hartree_energy(&sol.state, &trap, &vn).unwrap(), sol.energy, max_relative = 1e-12);
    }

    #[test]
    fn dirac_constant_state_is_stationary() {
        let l = 2.0;
        let g = build_grid(2, l, 24, Boundary::Periodic).unwrap();
        let trap = eval_trap(&TrapSpec::Zero, &g);
        let sol = dirac_hartree_minimize(&trap, 2, &HartreeOptions::default()).unwrap();
        assert_relative_eq!(sol.energy, 1.0 / (2.0 * l).powi(2), max_relative = 1e-6);
    }

    #[test]
    fn dirac_bracket() {
        let g = build_grid(2, 5.0, 40, Boundary::Dirichlet).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let (l0, h0) = lambda0(&trap);
        let quartic: f64 = h0.values.iter().zip(g.weights()).map(|(v, w)| w * v.powi(4)).sum();
        let sol = dirac_hartree_minimize(&trap, 2, &HartreeOptions::default()).unwrap();
        assert!(sol.energy >= 2.0 * l0 && sol.energy <= 2.0 * l0 + quartic, "{} {} {}", sol.energy, l0, quartic);
        let one = dirac_hartree_minimize(&trap, 1, &HartreeOptions::default()).unwrap();
        assert_relative_eq!(one.energy, l0, max_relative = 1e-8);
    }

    #[test]
    fn unresolved_kernel_for_large_n() {
        let g = build_grid(2, 5.0, 20, Boundary::Periodic).unwrap();
        let trap = eval_trap(&TrapSpec::Harmonic, &g);
        let v = InteractionSpec::Gaussian { g: 1.0, s: 1.0 };
        let nmax = max_resolved_n(&g, &v);
        assert_eq!(nmax, 2);
        assert!(matches!(
            hartree_minimize(&trap, &v, 4, &HartreeOptions::default()),
            Err(Error::KernelUnresolved { .. })
        ));
    }

    #[test]
    fn product_rate_values() {
        let g = build_grid(1, 16.0, 1025, Boundary::Periodic).unwrap();
        let gauss = g.field_from_fn(|x| (-0.25 * x[0] * x[0]).exp()).normalized().unwrap();
        let i = product_rate_i(&[gauss.clone(), gauss.clone()], 1.0).unwrap();
        assert_relative_eq!(i, 0.5, max_relative = 1e-2);
        let wide = g.field_from_fn(|x| (-0.25 * x[0] * x[0] / 4.0).exp()).normalized().unwrap();
        let ratio = product_rate_i(&[wide], 1.0).unwrap() / product_rate_i(&[gauss], 1.0).unwrap();
        assert_relative_eq!(ratio, 0.25, max_relative = 1e-3);
        let c = g.constant(1.0).normalized().unwrap();
        assert_eq!(product_rate_i(&[c.clone(), c], 1.0).unwrap(), 0.0);
        assert!(matches!(product_rate_i(&[g.constant(1.0)], 1.0), Err(Error::NotNormalized { .. })));
    }
}
