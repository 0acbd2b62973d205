//! Monte Carlo estimates of (1/(Nβ)) log E[e^{−𝒦}] for N independent Brownian paths.
//!
//! 𝒦 = Σ_i ∫₀^β W(B^i_s) ds + (1/N)(1/β) Σ_{i<j} ∫∫ k(B^i_s − B^j_t) ds dt,
//! with k = N^d v(N·) for the smeared model and k = φ_ε for the contact model.
//! Both paths and reference measure start at the same point, so the tilted
//! sampler only carries the Girsanov factor.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extrapolate::{extrapolate, ExtrapolationModel};
use crate::hartree::HartreeSolution;
use crate::path_mc::{generate_path, pair_sum, strided_points, Guide, PairKernel, SampleSpec, StartLaw, Storage};
use crate::potentials::{rescale_interaction, InteractionSpec, MollifierSpec, TrapSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    #[default]
    Direct,
    GirsanovTilted,
}

impl FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Sampler::Direct),
            "girsanov" | "girsanov_tilted" | "tilted" => Ok(Sampler::GirsanovTilted),
            other => Err(Error::param("sampler", format!("unknown sampler {other:?}"))),
        }
    }
}

impl std::fmt::Display for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sampler::Direct => "direct",
            Sampler::GirsanovTilted => "girsanov_tilted",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McParams {
    pub m: usize,
    pub dt: f64,
    pub seed: u64,
    pub sampler: Sampler,
    pub a: f64,
    /// Use every k-th time point in the double-time pair sums. 0 picks the
    /// largest k with 2√(2a·k·dt) still below the kernel width.
    pub stride: usize,
    pub start: StartLaw,
}

impl Default for McParams {
    fn default() -> Self {
        McParams { m: 10_000, dt: 0.01, seed: 1, sampler: Sampler::Direct, a: 1.0, stride: 1, start: StartLaw::Origin }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FreeEnergyEstimate {
    /// (1/(Nβ)) log of the sample mean of e^{−𝒦}·(dP/dQ).
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub beta: f64,
    pub epsilon: Option<f64>,
    pub m: usize,
    pub sampler: Sampler,
    /// Effective sample size of the weights e^{−𝒦}·(dP/dQ).
    pub ess: f64,
    /// −(1/(Nβ)) E[𝒦], a lower bound for `value` by Jensen (direct sampler only).
    pub jensen_bound: Option<f64>,
    pub jensen_stderr: Option<f64>,
    /// Time stride used in the pair sums.
    pub stride: usize,
}

/// log of the sample mean of e^{x}, its delta-method standard error, and the ESS.
pub fn log_mean_exp(xs: &[f64]) -> (f64, f64, f64) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = if e.len() > 1 { e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let ess = e.iter().sum::<f64>().powi(2) / e.iter().map(|v| v * v).sum::<f64>();
    (max + mean.ln(), (var / n).sqrt() / mean, ess)
}

/// Guides for the tilted sampler from a product-state solution.
pub fn hartree_guides(sol: &HartreeSolution) -> Result<Vec<Guide>> {
    sol.state.orbitals.iter().map(Guide::from_grid).collect()
}

struct Setup<'a> {
    n: usize,
    beta: f64,
    d: usize,
    trap: &'a TrapSpec,
    kernel: Option<PairKernel>,
    mc: &'a McParams,
    guides: Option<&'a [Guide]>,
    epsilon: Option<f64>,
    /// Kernel width for the automatic stride.
    width: f64,
}

fn auto_stride(mc: &McParams, width: f64) -> usize {
    if mc.stride > 0 {
        return mc.stride;
    }
    ((width * width / (8.0 * mc.a * mc.dt)).floor() as usize).max(1)
}

fn run(s: &Setup<'_>) -> Result<FreeEnergyEstimate> {
    let mc = s.mc;
    if s.n == 0 {
        return Err(Error::InvalidN(0));
    }
    let guides = match (mc.sampler, s.guides) {
        (Sampler::Direct, _) => None,
        (Sampler::GirsanovTilted, None) => return Err(Error::MissingGuide),
        (Sampler::GirsanovTilted, Some(g)) => {
            if g.len() != s.n {
                return Err(Error::DimensionMismatch { expected: s.n, got: g.len() });
            }
            Some(g)
        }
    };
    let spec = SampleSpec {
        dim: s.d,
        beta: s.beta,
        dt: mc.dt,
        m: mc.m,
        seed: mc.seed,
        a: mc.a,
        start: mc.start.clone(),
        storage: Storage::Full,
    };
    let steps = spec.steps();
    if steps == 0 || mc.m == 0 {
        return Err(Error::param("mc", "need at least one step and one sample"));
    }
    let stride = auto_stride(mc, s.width);
    let count = steps.div_ceil(stride) as f64;
    let dt = s.beta / steps as f64;
    let d = s.d;
    let nf = s.n as f64;
    // Pair normalization: (1/N)(1/β)·(β/count)² per pair of time points.
    let pair_scale = s.beta / (nf * count * count);
    let eval_kernel = s.kernel.map(|k| {
        let inv = match k {
            PairKernel::Mollifier(m) => m.inv_norm(d),
            _ => 0.0,
        };
        (k, inv)
    });
    let sample = |m: usize| -> Result<(f64, f64)> {
        let mut paths = Vec::with_capacity(s.n);
        let mut log_w = 0.0;
        for i in 0..s.n {
            let guide = guides.map(|g| &g[i]);
            let (p, lw) = generate_path(&spec, guide, (m * s.n + i) as u64)?;
            log_w += lw;
            paths.push(p);
        }
        let mut k_total = 0.0;
        for p in &paths {
            k_total += p[..steps * d].chunks_exact(d).map(|x| s.trap.eval(x)).sum::<f64>() * dt;
        }
        if let Some((kernel, inv)) = &eval_kernel {
            let pts: Vec<Vec<f64>> = paths.iter().map(|p| strided_points(p, d, steps, stride)).collect();
            for i in 0..s.n {
                for j in i + 1..s.n {
                    let sum = match kernel {
                        PairKernel::Interaction { v, amplitude } => pair_sum(
                            &pts[i],
                            &pts[j],
                            d,
                            kernel.radius(),
                            |r2| amplitude * v.eval_capped(r2.sqrt()),
                            |_| 1.0,
                        ),
                        PairKernel::Mollifier(ms) => {
                            pair_sum(&pts[i], &pts[j], d, kernel.radius(), |r2| ms.eval_r2(r2, *inv), |_| 1.0)
                        }
                    };
                    k_total += pair_scale * sum;
                }
            }
        }
        Ok((k_total, log_w))
    };
    let results: Vec<(f64, f64)> = (0..mc.m).into_par_iter().map(sample).collect::<Result<_>>()?;
    let xs: Vec<f64> = results.iter().map(|(k, lw)| -k + lw).collect();
    let (lme, se, ess) = log_mean_exp(&xs);
    let norm = nf * s.beta;
    let kest = (mc.sampler == Sampler::Direct).then(|| {
        let ks: Vec<f64> = results.iter().map(|(k, _)| *k).collect();
        crate::path_mc::mean_se(&ks)
    });
    let threshold = 0.01 * mc.m as f64;
    if ess < threshold {
        return Err(Error::DegenerateWeights { ess, threshold });
    }
    Ok(FreeEnergyEstimate {
        value: lme / norm,
        stderr: se / norm,
        n: s.n,
        beta: s.beta,
        epsilon: s.epsilon,
        m: mc.m,
        sampler: mc.sampler,
        ess,
        jensen_bound: kest.map(|k| -k.mean / norm),
        jensen_stderr: kest.map(|k| k.stderr / norm),
        stride,
    })
}

/// Smeared model: pair kernel N^d v(N·) = N·v_N.
pub fn estimate_f(
    n: usize,
    beta: f64,
    d: usize,
    trap: &TrapSpec,
    v: &InteractionSpec,
    mc: &McParams,
    guides: Option<&[Guide]>,
) -> Result<FreeEnergyEstimate> {
    v.validate()?;
    let mut width = 0.0;
    let kernel = if v.is_zero() || n == 1 {
        None
    } else {
        let vn = rescale_interaction(v, n, d)?;
        let step_scale = (2.0 * mc.a * mc.dt).sqrt();
        if vn.width() < 2.0 * step_scale {
            return Err(Error::KernelUnresolvedAtStepScale { width: vn.width(), step_scale });
        }
        width = vn.width();
        Some(PairKernel::Interaction { v: vn, amplitude: n as f64 })
    };
    run(&Setup { n, beta, d, trap, kernel, mc, guides, epsilon: None, width })
}

/// Contact model with the pair term mollified at one ε.
pub fn estimate_g_at(
    n: usize,
    beta: f64,
    d: usize,
    trap: &TrapSpec,
    epsilon: f64,
    mc: &McParams,
    guides: Option<&[Guide]>,
) -> Result<FreeEnergyEstimate> {
    let moll = MollifierSpec::new(epsilon)?;
    let step_scale = (2.0 * mc.a * mc.dt).sqrt();
    if moll.support_radius() < 2.0 * step_scale {
        return Err(Error::EpsilonUnderresolved { epsilon, step_scale });
    }
    if d == 3 {
        log::warn!("contact model in d = 3: expect large variance");
    }
    let kernel = (n > 1).then_some(PairKernel::Mollifier(moll));
    run(&Setup { n, beta, d, trap, kernel, mc, guides, epsilon: Some(epsilon), width: moll.support_radius() })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContactEstimates {
    pub per_epsilon: Vec<FreeEnergyEstimate>,
    /// Linear-in-ε extrapolation through the two smallest ε.
    pub extrapolated: FreeEnergyEstimate,
}

/// Contact model over an ε list, extrapolated to ε → 0.
pub fn estimate_g(
    n: usize,
    beta: f64,
    d: usize,
    trap: &TrapSpec,
    eps_list: &[f64],
    mc: &McParams,
    guides: Option<&[Guide]>,
) -> Result<ContactEstimates> {
    if eps_list.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let per_epsilon: Vec<FreeEnergyEstimate> =
        eps_list.iter().map(|&e| estimate_g_at(n, beta, d, trap, e, mc, guides)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..per_epsilon.len()).collect();
    order.sort_by(|&i, &j| eps_list[i].total_cmp(&eps_list[j]));
    let mut extrapolated = per_epsilon[order[0]].clone();
    if order.len() >= 2 {
        let (a, b) = (&per_epsilon[order[0]], &per_epsilon[order[1]]);
        let (e1, e2) = (eps_list[order[0]], eps_list[order[1]]);
        // y(0) = (e2 y1 − e1 y2)/(e2 − e1).
        let c1 = e2 / (e2 - e1);
        let c2 = -e1 / (e2 - e1);
        extrapolated.value = c1 * a.value + c2 * b.value;
        // Same seeds for every ε: treat the errors as fully correlated (conservative bound).
        extrapolated.stderr = (c1 * a.stderr).abs() + (c2 * b.stderr).abs();
        extrapolated.epsilon = Some(0.0);
        extrapolated.ess = a.ess.min(b.ess);
    }
    Ok(ContactEstimates { per_epsilon, extrapolated })
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaExtrapolation {
    pub limit: f64,
    pub slope: f64,
    pub residual: f64,
    /// Standard error of the limit propagated from the point standard errors.
    pub stderr: f64,
}

/// Fit value = c + b/β and propagate the per-point standard errors into c.
pub fn extrapolate_in_beta(estimates: &[FreeEnergyEstimate]) -> Result<BetaExtrapolation> {
    let xs: Vec<f64> = estimates.iter().map(|e| e.beta).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let fit = extrapolate(&xs, &ys, ExtrapolationModel::InverseX)?;
    // c is linear in y: c = Σ_k a_k y_k; recover a_k by fitting unit vectors.
    let mut var = 0.0;
    for (k, e) in estimates.iter().enumerate() {
        let unit: Vec<f64> = (0..ys.len()).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
        let ak = extrapolate(&xs, &unit, ExtrapolationModel::InverseX)?.limit;
        var += (ak * e.stderr).powi(2);
    }
    Ok(BetaExtrapolation { limit: fit.limit, slope: fit.slope, residual: fit.residual, stderr: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_mean_exp_basics() {
        let (v, se, ess) = log_mean_exp(&[0.0, 0.0, 0.0]);
        assert_eq!(v, 0.0);
        assert_eq!(se, 0.0);
        assert_relative_eq!(ess, 3.0);
        let (v, _, ess) = log_mean_exp(&[1000.0, 1000.0 + 2f64.ln()]);
        assert_relative_eq!(v, 1000.0 + 1.5f64.ln(), max_relative = 1e-15);
        assert!(ess < 2.0);
        let (v, _, _) = log_mean_exp(&[f64::NEG_INFINITY, 0.0]);
        assert_relative_eq!(v, 0.5f64.ln());
    }

    #[test]
    fn free_case_is_exactly_zero() {
        let mc = McParams { m: 50, dt: 0.1, ..Default::default() };
        let e = estimate_f(3, 2.0, 2, &TrapSpec::Zero, &InteractionSpec::zero(), &mc, None).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn nonpositive_for_nonnegative_potentials() {
        let mc = McParams { m: 400, dt: 0.01, ..Default::default() };
        let v = InteractionSpec::Gaussian { g: 1.0, s: 1.0 };
        let e = estimate_f(2, 1.0, 1, &TrapSpec::Harmonic, &v, &mc, None).unwrap();
        assert!(e.value <= 3.0 * e.stderr);
        assert!(e.value >= e.jensen_bound.unwrap() - 3.0 * (e.stderr + e.jensen_stderr.unwrap()));
    }

    #[test]
    fn contact_single_particle_matches_trap_only() {
        let mc = McParams { m: 200, dt: 0.01, seed: 4, ..Default::default() };
        let g = estimate_g_at(1, 1.0, 2, &TrapSpec::Harmonic, 0.4, &mc, None).unwrap();
        let f = estimate_f(1, 1.0, 2, &TrapSpec::Harmonic, &InteractionSpec::zero(), &mc, None).unwrap();
        assert_eq!(g.value, f.value);
    }

    #[test]
    fn resolution_and_guide_errors() {
        let mc = McParams { m: 10, dt: 0.1, ..Default::default() };
        let v = InteractionSpec::Gaussian { g: 1.0, s: 0.5 };
        assert!(matches!(
            estimate_f(2, 1.0, 1, &TrapSpec::Harmonic, &v, &mc, None),
            Err(Error::KernelUnresolvedAtStepScale { .. })
        ));
        assert!(matches!(
            estimate_g_at(2, 1.0, 2, &TrapSpec::Harmonic, 0.2, &mc, None),
            Err(Error::EpsilonUnderresolved { .. })
        ));
        let tilted = McParams { sampler: Sampler::GirsanovTilted, dt: 0.01, ..mc };
        assert!(matches!(
            estimate_f(1, 1.0, 1, &TrapSpec::Harmonic, &InteractionSpec::zero(), &tilted, None),
            Err(Error::MissingGuide)
        ));
    }

    #[test]
    fn automatic_stride_follows_kernel_width() {
        let mc = McParams { stride: 0, dt: 0.01, ..Default::default() };
        assert_eq!(auto_stride(&mc, 0.5), 3);
        assert_eq!(auto_stride(&mc, 0.2), 1);
        assert_eq!(auto_stride(&McParams { stride: 7, ..mc }, 0.2), 7);
    }

    #[test]
    fn degenerate_weights_detected() {
        // A huge trap over a long horizon makes e^{−𝒦} dominated by a few paths.
        let mc = McParams { m: 200, dt: 0.05, seed: 9, ..Default::default() };
        let r = estimate_f(1, 30.0, 1, &TrapSpec::Quartic, &InteractionSpec::zero(), &mc, None);
        assert!(matches!(r, Err(Error::DegenerateWeights { .. })), "{r:?}");
    }

    #[test]
    fn stride_subsampling_is_close() {
        let v = InteractionSpec::Gaussian { g: 1.0, s: 1.0 };
        let base = McParams { m: 300, dt: 0.01, seed: 2, ..Default::default() };
        let full = estimate_f(2, 1.0, 1, &TrapSpec::Harmonic, &v, &base, None).unwrap();
        let sub = estimate_f(2, 1.0, 1, &TrapSpec::Harmonic, &v, &McParams { stride: 5, ..base }, None).unwrap();
        assert!((full.value - sub.value).abs() < 0.02 * full.value.abs() + 1e-3, "{} {}", full.value, sub.value);
    }

    #[test]
    fn beta_extrapolation_propagates_errors() {
        let mk = |beta: f64, value: f64| FreeEnergyEstimate {
            value,
            stderr: 0.01,
            n: 1,
            beta,
            epsilon: None,
            m: 1,
            sampler: Sampler::Direct,
            ess: 1.0,
            jensen_bound: None,
            jensen_stderr: None,
            stride: 1,
        };
        let est: Vec<_> = [2.0, 4.0, 8.0].iter().map(|&b| mk(b, -1.0 + 0.5 / b)).collect();
        let fit = extrapolate_in_beta(&est).unwrap();
        assert_relative_eq!(fit.limit, -1.0, max_relative = 1e-10);
        assert!(fit.stderr > 0.01);
    }
}
