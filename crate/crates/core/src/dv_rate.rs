//! Donsker-Varadhan quantities for the grid random walk with generator aΔ_h.
//!
//! Λ_β(f) = (1/β) log E_ν[exp ∫₀^β f(X_s) ds] is evaluated with the Lie
//! splitting P = E·K per step, where K = e^{dt·aΔ_h} is the exact walk
//! kernel and E = diag(e^{dt f}). Everything downstream (occupation
//! densities, the rate functional, witnesses) is built from the same
//! discrete evolution, so identities such as J_β(μ) ≥ ⟨μ,f⟩ − Λ_β(f) and
//! the witness bound hold exactly on the grid, not only as dt → 0.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp_solver::{gp_minimize, GpOptions};
use crate::grid::{weighted_dot, Grid, GridField};
use crate::potentials::TrapField;
use crate::spectral::{ground_mode, heat_kernel, SeparableOperator};

/// Starting law ν of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Uniform on a periodic grid; the lowest sine mode on a Dirichlet grid.
    #[default]
    Stationary,
    /// Point mass at the node nearest the origin.
    PointCenter,
}

impl FromStr for InitialDistribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(InitialDistribution::Stationary),
            "point_center" | "point-center" => Ok(InitialDistribution::PointCenter),
            other => Err(Error::param("init", format!("unknown initial distribution {other:?}"))),
        }
    }
}

/// Default upper bound on the splitting step.
pub const DEFAULT_DT_MAX: f64 = 0.05;

/// Discretized Feynman-Kac evolution on one grid for one horizon β.
#[derive(Debug, Clone)]
pub struct FeynmanKac {
    grid: Arc<Grid>,
    kernel: SeparableOperator,
    /// w·ν, the starting law paired with the quadrature.
    start: Vec<f64>,
    /// Nodes where the walk is killed outright (infinite trap).
    killed: Vec<bool>,
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    pub a: f64,
}

impl FeynmanKac {
    pub fn new(grid: &Arc<Grid>, beta: f64, init: InitialDistribution, a: f64, dt_max: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param("convention_a", format!("must be positive, got {a}")));
        }
        if !(dt_max > 0.0) {
            return Err(Error::param("dt_max", "must be positive"));
        }
        let steps = (beta / dt_max).ceil().max(1.0) as usize;
        let dt = beta / steps as f64;
        let w = grid.weights();
        let mut nu = match init {
            InitialDistribution::Stationary => ground_mode(grid),
            InitialDistribution::PointCenter => {
                let (idx, _) = grid.nearest_node(&vec![0.0; grid.dim]);
                let mut v = vec![0.0; grid.node_count()];
                v[idx] = 1.0 / w[idx];
                v
            }
        };
        let mass = weighted_dot(w, &nu, &vec![1.0; nu.len()]);
        nu.iter_mut().for_each(|v| *v /= mass);
        let start = nu.iter().zip(w).map(|(v, w)| v * w).collect();
        Ok(FeynmanKac {
            grid: Arc::clone(grid),
            kernel: heat_kernel(grid, a, dt),
            start,
            killed: vec![false; grid.node_count()],
            beta,
            dt,
            steps,
            a,
        })
    }

    /// Kill the walk on the flagged nodes (an infinite trap region).
    pub fn with_killing(mut self, killed: &[bool]) -> Self {
        self.killed = killed.to_vec();
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn check_tilt(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.grid.node_count() {
            return Err(Error::DimensionMismatch { expected: self.grid.node_count(), got: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tilt f"));
        }
        Ok(())
    }

    fn multipliers(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.killed).map(|(&v, &k)| if k { 0.0 } else { (self.dt * v).exp() }).collect()
    }

    /// One backward step v ← E K v.
    fn step(&self, e: &[f64], v: &mut [f64], scratch: &mut Vec<f64>) {
        self.kernel.apply(&self.grid, v, scratch);
        v.iter_mut().zip(e).for_each(|(x, m)| *x *= m);
    }

    /// One forward step u ← K E u (the adjoint of [`Self::step`]).
    fn step_adjoint(&self, e: &[f64], u: &mut [f64], scratch: &mut Vec<f64>) {
        u.iter_mut().zip(e).for_each(|(x, m)| *x *= m);
        self.kernel.apply(&self.grid, u, scratch);
    }

    /// Transition kernel applied once (for witnesses).
    pub(crate) fn apply_kernel(&self, v: &mut [f64]) {
        let mut scratch = Vec::new();
        self.kernel.apply(&self.grid, v, &mut scratch);
    }

    /// Λ_β(f).
    pub fn log_mgf(&self, f: &[f64]) -> Result<f64> {
        self.check_tilt(f)?;
        let e = self.multipliers(f);
        let mut v = vec![1.0; f.len()];
        let mut scratch = Vec::new();
        let mut log_scale = 0.0;
        for _ in 0..self.steps {
            self.step(&e, &mut v, &mut scratch);
            let s = v.iter().fold(0.0f64, |m, &x| m.max(x));
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NonFinite("Feynman-Kac evolution"));
            }
            v.iter_mut().for_each(|x| *x /= s);
            log_scale += s.ln();
        }
        let z: f64 = self.start.iter().zip(&v).map(|(a, b)| a * b).sum();
        if !(z > 0.0) {
            return Err(Error::NonFinite("Feynman-Kac mass"));
        }
        Ok((log_scale + z.ln()) / self.beta)
    }

    /// Λ_β(f) together with the tilted occupation density ρ_β(f), the
    /// gradient of Λ_β with respect to the pairing Σ w μ f.
    pub fn log_mgf_with_density(&self, f: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_tilt(f)?;
        let n = self.steps;
        let e = self.multipliers(f);
        let len = f.len();
        let mut scratch = Vec::new();
        // back[k] ∝ (EK)^k 1, each scaled to unit maximum.
        let mut back: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        back.push(vec![1.0; len]);
        let mut log_scale = 0.0;
        for k in 0..n {
            let mut v = back[k].clone();
            self.step(&e, &mut v, &mut scratch);
            let s = v.iter().fold(0.0f64, |m, &x| m.max(x));
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NonFinite("Feynman-Kac evolution"));
            }
            v.iter_mut().for_each(|x| *x /= s);
            log_scale += s.ln();
            back.push(v);
        }
        let z: f64 = self.start.iter().zip(&back[n]).map(|(a, b)| a * b).sum();
        if !(z > 0.0) {
            return Err(Error::NonFinite("Feynman-Kac mass"));
        }
        let value = (log_scale + z.ln()) / self.beta;
        // Forward factors u_j ∝ (KE)^j wν. Each pairing ⟨u_j, back[n−j]⟩ equals
        // the partition function up to the scalings, so dividing by it removes them.
        let mut rho = vec![0.0; len];
        let mut u = self.start.clone();
        for j in 0..n {
            let b = &back[n - j];
            let pair: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            for k in 0..len {
                rho[k] += u[k] * b[k] / pair;
            }
            self.step_adjoint(&e, &mut u, &mut scratch);
            let s = u.iter().fold(0.0f64, |m, &x| m.max(x));
            u.iter_mut().for_each(|x| *x /= s);
        }
        let w = self.grid.weights();
        for (r, &wk) in rho.iter_mut().zip(w) {
            *r = if wk > 0.0 { *r / (n as f64 * wk) } else { 0.0 };
        }
        Ok((value, rho))
    }
}

/// Λ_β(f) with the default splitting step and a = 1.
pub fn log_mgf(f: &GridField, beta: f64, init: InitialDistribution) -> Result<f64> {
    FeynmanKac::new(&f.grid, beta, init, 1.0, DEFAULT_DT_MAX)?.log_mgf(&f.values)
}

/// Occupation density ρ_β(f) of the tilted walk, with the default step and a = 1.
pub fn occupation_density(f: &GridField, beta: f64, init: InitialDistribution) -> Result<GridField> {
    let fk = FeynmanKac::new(&f.grid, beta, init, 1.0, DEFAULT_DT_MAX)?;
    let (_, rho) = fk.log_mgf_with_density(&f.values)?;
    Ok(GridField { grid: Arc::clone(&f.grid), values: rho })
}

#[derive(Debug, Clone)]
pub struct RateOptions {
    pub f_cap: f64,
    /// First trial step of the line search; `None` scales the gradient to unit sup norm.
    pub step: Option<f64>,
    pub max_iter: usize,
    /// Stop when the weighted ℓ¹ norm of the gradient falls below this.
    pub tol: f64,
    pub init: InitialDistribution,
    pub a: f64,
    pub dt_max: f64,
    /// Starting tilt; zero when absent.
    pub initial_f: Option<Vec<f64>>,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            f_cap: 50.0,
            step: None,
            max_iter: 3000,
            tol: 1e-7,
            init: InitialDistribution::Stationary,
            a: 1.0,
            dt_max: DEFAULT_DT_MAX,
            initial_f: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateEvaluation {
    pub value: f64,
    #[serde(skip)]
    pub witness_f: GridField,
    pub beta: f64,
    pub ascent_iterations: usize,
    /// Second-order prediction of the gain still available at the returned tilt.
    pub duality_gap_estimate: f64,
    pub gradient_l1: f64,
    /// The clip |f| ≤ f_cap binds somewhere.
    pub cap_active: bool,
    pub converged: bool,
}

struct AscentOutcome {
    x: Vec<f64>,
    iterations: usize,
    gap: f64,
    grad_l1: f64,
    cap_active: bool,
    converged: bool,
}

/// Projected limited-memory quasi-Newton ascent of a concave objective on
/// the box |x| ≤ cap, in the weighted inner product.
fn maximize(
    mut eval: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    w: &[f64],
    cap: f64,
    first_step: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<AscentOutcome> {
    const MEMORY: usize = 10;
    let clip = |v: f64| v.clamp(-cap, cap);
    let mut x: Vec<f64> = x0.into_iter().map(clip).collect();
    let (mut fx, mut g) = eval(&x)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut recent_gain: Vec<f64> = Vec::new();
    let l1 = |g: &[f64]| g.iter().zip(w).map(|(a, b)| a.abs() * b).sum::<f64>();
    let mut iterations = 0;
    let mut converged = false;
    let direction = |g: &[f64], hist: &[(Vec<f64>, Vec<f64>, f64)]| -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let al = rho * weighted_dot(w, s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= al * yi);
            alphas.push(al);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = weighted_dot(w, s, y) / weighted_dot(w, y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), al) in hist.iter().zip(alphas.into_iter().rev()) {
            let be = rho * weighted_dot(w, y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (al - be) * si);
        }
        q
    };
    while iterations < max_iter {
        if l1(&g) < tol {
            converged = true;
            break;
        }
        let mut p = direction(&g, &hist);
        if weighted_dot(w, &g, &p) <= 0.0 {
            hist.clear();
            p = g.clone();
        }
        let mut t = 1.0;
        if hist.is_empty() {
            let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            t = first_step.unwrap_or(1.0) / pmax.max(1e-300);
        }
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| clip(xi + t * pi)).collect();
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let slope = weighted_dot(w, &g, &moved);
            if slope <= 0.0 {
                break;
            }
            let (ft, gt) = eval(&trial)?;
            if ft >= fx + 1e-4 * slope {
                accepted = Some((trial, ft, gt, moved));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((xn, fn_, gn, s)) = accepted else {
            if hist.is_empty() {
                // Even a steepest-ascent step fails: roundoff floor.
                break;
            }
            hist.clear();
            continue;
        };
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = weighted_dot(w, &s, &y);
        if sy > 1e-300 {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > MEMORY {
                hist.remove(0);
            }
        }
        recent_gain.push(fn_ - fx);
        x = xn;
        fx = fn_;
        g = gn;
        if recent_gain.len() >= 10 {
            let gain: f64 = recent_gain[recent_gain.len() - 10..].iter().sum();
            if gain <= 1e-13 * fx.abs().max(1.0) {
                break;
            }
        }
    }
    let p = direction(&g, &hist);
    let gap = 0.5 * weighted_dot(w, &g, &p).max(0.0);
    let cap_active = x.iter().any(|v| v.abs() >= cap);
    Ok(AscentOutcome { grad_l1: l1(&g), x, iterations, gap, cap_active, converged })
}

/// J_β(μ) = sup_f [⟨μ, f⟩ − Λ_β(f)] over |f| ≤ f_cap.
pub fn rate_j(mu: &GridField, beta: f64, opts: &RateOptions) -> Result<RateEvaluation> {
    let fk = FeynmanKac::new(&mu.grid, beta, opts.init, opts.a, opts.dt_max)?;
    rate_j_with(&fk, mu, opts)
}

/// [`rate_j`] with a prepared evolution (reused across calls on one grid and β).
pub fn rate_j_with(fk: &FeynmanKac, mu: &GridField, opts: &RateOptions) -> Result<RateEvaluation> {
    let grid = Arc::clone(fk.grid());
    if !mu.grid.same_as(&grid) {
        return Err(Error::GridMismatch);
    }
    mu.check_density(1e-8)?;
    if !(opts.f_cap > 0.0) {
        return Err(Error::param("f_cap", "must be positive"));
    }
    let w = grid.weights();
    let x0 = match &opts.initial_f {
        Some(f) => {
            fk.check_tilt(f)?;
            f.clone()
        }
        None => vec![0.0; grid.node_count()],
    };
    let eval = |f: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (lam, rho) = fk.log_mgf_with_density(f)?;
        let value = weighted_dot(w, &mu.values, f) - lam;
        let grad = mu.values.iter().zip(&rho).map(|(m, r)| m - r).collect();
        Ok((value, grad))
    };
    let out = maximize(eval, x0, w, opts.f_cap, opts.step, opts.tol, opts.max_iter)?;
    if out.cap_active {
        log::warn!("rate functional: the tilt cap {} binds; the density may be too singular", opts.f_cap);
    }
    // Report exactly ⟨μ,f⟩ − Λ_β(f) at the returned tilt.
    let value = weighted_dot(w, &mu.values, &out.x) - fk.log_mgf(&out.x)?;
    Ok(RateEvaluation {
        value,
        witness_f: GridField { grid, values: out.x },
        beta: fk.beta,
        ascent_iterations: out.iterations,
        duality_gap_estimate: out.gap,
        gradient_l1: out.grad_l1,
        cap_active: out.cap_active,
        converged: out.converged,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WitnessCheck {
    pub lambda: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The tilt f_c = −(1/dt) log(KΨ/Ψ), Ψ = c + φ, for which Ψ is exactly
/// invariant under one step E·K of the discrete evolution. As dt → 0 it
/// tends to −aΔφ/(c + φ). Nodes where KΨ vanishes (Dirichlet faces) get 0.
pub fn witness_tilt(fk: &FeynmanKac, phi: &GridField, c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    if phi.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::param("phi", "must be nonnegative and finite"));
    }
    let psi: Vec<f64> = phi.values.iter().map(|v| c + v).collect();
    let mut kpsi = psi.clone();
    fk.apply_kernel(&mut kpsi);
    Ok(kpsi.iter().zip(&psi).map(|(k, p)| if *k > 0.0 { -(k / p).ln() / fk.dt } else { 0.0 }).collect())
}

/// Λ_β(f_c) against (1/β) log((c + max φ)/c), with a = 1 and the default step.
pub fn witness_bound_check(phi: &GridField, c: f64, beta: f64) -> Result<WitnessCheck> {
    let fk = FeynmanKac::new(&phi.grid, beta, InitialDistribution::Stationary, 1.0, DEFAULT_DT_MAX)?;
    let f = witness_tilt(&fk, phi, c)?;
    let lambda = fk.log_mgf(&f)?;
    let pmax = phi.values.iter().fold(0.0f64, |m, &v| m.max(v));
    let bound = ((c + pmax) / c).ln() / beta;
    Ok(WitnessCheck { lambda, bound, pass: lambda <= bound + 1e-10 })
}

#[derive(Debug, Clone)]
pub struct ChiOptions {
    pub rate: RateOptions,
    /// Initial damping of the fixed-point iteration (halved whenever the residual grows).
    pub mixing: f64,
    /// Stop when Σ w |ρ(f) − μ| falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ChiOptions {
    fn default() -> Self {
        ChiOptions { rate: RateOptions::default(), mixing: 0.5, tol: 1e-9, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChiBetaSolution {
    /// J_β(φ²) + ⟨W, φ²⟩ + (α/2)‖φ‖₄⁴ at the returned φ.
    pub value: f64,
    #[serde(skip)]
    pub phi: GridField,
    pub alpha: f64,
    pub beta: f64,
    pub outer_iterations: usize,
    pub rate_term: f64,
    pub trap_term: f64,
    pub interaction_term: f64,
    /// Value of the concave dual; a lower bound for the infimum.
    pub dual_value: f64,
    pub duality_gap: f64,
    pub converged: bool,
}

/// Minimizer of ⟨μ, c⟩ + (α/2) Σ w μ² over densities: μ = (λ − c)_+/α.
fn water_fill(c: &[f64], w: &[f64], active: &[bool], alpha: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..c.len()).filter(|&i| active[i] && w[i] > 0.0).collect();
    idx.sort_by(|&i, &j| c[i].total_cmp(&c[j]));
    // Mass with level λ between consecutive sorted values is (λ·S_w − S_wc)/α.
    let (mut sw, mut swc) = (0.0, 0.0);
    let mut level = f64::INFINITY;
    for (k, &i) in idx.iter().enumerate() {
        sw += w[i];
        swc += w[i] * c[i];
        let lam = (alpha + swc) / sw;
        let next = idx.get(k + 1).map(|&j| c[j]).unwrap_or(f64::INFINITY);
        if lam <= next {
            level = lam;
            break;
        }
    }
    c.iter()
        .enumerate()
        .map(|(i, &ci)| if active[i] && w[i] > 0.0 { ((level - ci) / alpha).max(0.0) } else { 0.0 })
        .collect()
}

/// χ^⊗(β) = inf_φ [J_β(φ²) + ⟨W, φ²⟩ + (α/2)‖φ‖₄⁴].
///
/// For α = 0 the infimum is −Λ_β(−W), attained at the occupation density of
/// the tilt −W. For α > 0 the minimizer solves μ = ρ_β(−W − αμ), found by
/// damped fixed-point iteration from the GP density. At μ = ρ_β(f) the rate
/// term is exactly ⟨μ, f⟩ − Λ_β(f), so `value` is an upper bound; the concave
/// dual sup_f [G(f) − Λ_β(f)] evaluated at the same f gives the lower bound
/// `dual_value`.
pub fn chi_otimes_beta(trap: &TrapField, alpha: f64, beta: f64, opts: &ChiOptions) -> Result<ChiBetaSolution> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be nonnegative, got {alpha}")));
    }
    let grid = Arc::clone(trap.grid());
    let ro = &opts.rate;
    let fk = FeynmanKac::new(&grid, beta, ro.init, ro.a, ro.dt_max)?.with_killing(&trap.infinite);
    let w = grid.weights();
    let wv = &trap.field.values;
    let active = trap.allowed();
    let finish = |mu: Vec<f64>, rate: f64, iterations: usize, dual: f64, converged: bool| -> ChiBetaSolution {
        let trap_term = weighted_dot(w, wv, &mu);
        let interaction_term = 0.5 * alpha * weighted_dot(w, &mu, &mu);
        let value = rate + trap_term + interaction_term;
        let phi = GridField { grid: Arc::clone(&grid), values: mu.iter().map(|m| m.max(0.0).sqrt()).collect() };
        ChiBetaSolution {
            value,
            phi,
            alpha,
            beta,
            outer_iterations: iterations,
            rate_term: rate,
            trap_term,
            interaction_term,
            dual_value: dual,
            duality_gap: value - dual,
            converged,
        }
    };
    if alpha == 0.0 {
        let f: Vec<f64> = wv.iter().map(|v| -v).collect();
        let (lam, rho) = fk.log_mgf_with_density(&f)?;
        let rate = weighted_dot(w, &rho, &f) - lam;
        return Ok(finish(rho, rate, 0, -lam, true));
    }
    // Stationarity: f + W + αμ = const with μ = ρ(f). Damped fixed-point
    // iteration on μ, started from the GP density.
    let gp = gp_minimize(trap, alpha, &GpOptions { tol: 1e-6, max_iter: 200_000, ..Default::default() })?;
    let mut mu: Vec<f64> = gp.phi.values.iter().map(|p| p * p).collect();
    let tilt = |mu: &[f64]| -> Vec<f64> {
        wv.iter().zip(mu).zip(&active).map(|((wi, m), &ok)| if ok { -wi - alpha * m } else { 0.0 }).collect()
    };
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(w).map(|((x, y), wk)| (x - y).abs() * wk).sum::<f64>();
    let mut theta = opts.mixing;
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let (mut f, (mut lam, mut rho)) = {
        let f = tilt(&mu);
        let r = fk.log_mgf_with_density(&f)?;
        (f, r)
    };
    while iterations < opts.max_iter {
        let res = l1(&rho, &mu);
        if res < opts.tol {
            converged = true;
            break;
        }
        if res > prev {
            theta = (0.5 * theta).max(1e-3);
        }
        prev = res;
        for (m, r) in mu.iter_mut().zip(&rho) {
            *m += theta * (r - *m);
        }
        f = tilt(&mu);
        (lam, rho) = fk.log_mgf_with_density(&f)?;
        iterations += 1;
    }
    // f maximizes ⟨ρ, ·⟩ − Λ_β at μ = ρ(f), so J_β(ρ) is exact there.
    let rate = weighted_dot(w, &rho, &f) - lam;
    let shifted: Vec<f64> = f.iter().zip(wv).map(|(a, b)| a + b).collect();
    let mu_star = water_fill(&shifted, w, &active, alpha);
    let dual = weighted_dot(w, &mu_star, &shifted) + 0.5 * alpha * weighted_dot(w, &mu_star, &mu_star) - lam;
    if !converged {
        log::warn!("χ^⊗(β) fixed point not converged after {iterations} iterations (β = {beta})");
    }
    Ok(finish(rho, rate, iterations, dual, converged))
}

/// The three-term χ^⊗(β) objective at a given φ.
pub fn chi_beta_objective(phi: &GridField, trap: &TrapField, alpha: f64, beta: f64, opts: &RateOptions) -> Result<f64> {
    let mu = phi.map(|v| v * v);
    let w = phi.grid.weights();
    let rate = rate_j(&mu, beta, opts)?;
    Ok(rate.value
        + weighted_dot(w, &trap.field.values, &mu.values)
        + 0.5 * alpha * weighted_dot(w, &mu.values, &mu.values))
}
