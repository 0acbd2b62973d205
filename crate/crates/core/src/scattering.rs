//! Zero-energy scattering lengths and Born-type coupling constants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{integrate_panels, radial_integral, InteractionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatteringMethod {
    Ode3d,
    Formula2d,
    HardSphereClosedForm,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatteringResult {
    pub alpha_tilde: f64,
    /// (1/8π) ∫₀^∞ v(r) dr, or ∞ for a hard core.
    pub born: f64,
    /// (1/8π) ∫_{R^d} v(|x|) dx.
    pub born_radial: f64,
    pub method: ScatteringMethod,
    pub ode_mesh: usize,
}

/// How the GP coupling α is derived from v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// (1/8π) ∫₀^∞ v(r) dr.
    BornLiteral,
    /// (1/8π) ∫_{R^d} v(|x|) dx.
    BornRadial,
    /// ∫_{R^d} v(|x|) dx, the coupling reached by the rescaled Hartree energies.
    MeanField,
}

impl std::str::FromStr for AlphaRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "born_literal" => Ok(AlphaRule::BornLiteral),
            "born_radial" => Ok(AlphaRule::BornRadial),
            "mean_field" => Ok(AlphaRule::MeanField),
            other => Err(format!("unknown alpha rule '{other}'")),
        }
    }
}

impl std::fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlphaRule::BornLiteral => "born_literal",
            AlphaRule::BornRadial => "born_radial",
            AlphaRule::MeanField => "mean_field",
        })
    }
}

pub fn alpha_from_rule(rule: AlphaRule, v: &InteractionSpec, d: usize) -> Result<f64> {
    match rule {
        AlphaRule::BornLiteral => born_alpha(v),
        AlphaRule::BornRadial => born_alpha_radial(v, d),
        AlphaRule::MeanField => mean_field_alpha(v, d),
    }
}

fn reject_hard_core(v: &InteractionSpec) -> Result<()> {
    if let InteractionSpec::HardSphere { radius, .. } = v {
        if *radius > 0.0 {
            return Err(Error::DivergentIntegral("hard core has infinite integral".into()));
        }
    }
    Ok(())
}

/// (1/8π) ∫₀^∞ v(r) dr.
pub fn born_alpha(v: &InteractionSpec) -> Result<f64> {
    v.validate()?;
    reject_hard_core(v)?;
    if v.is_zero() {
        return Ok(0.0);
    }
    let i = integrate_panels(|r| v.eval_capped(r), 0.0, v.outer_radius(), &v.breakpoints(), 1e-14);
    if !i.is_finite() {
        return Err(Error::DivergentIntegral("∫ v dr".into()));
    }
    Ok(i / (8.0 * PI))
}

/// (1/8π) ∫_{R^d} v(|x|) dx; for d = 3 this is ½ ∫ v(r) r² dr.
pub fn born_alpha_radial(v: &InteractionSpec, d: usize) -> Result<f64> {
    Ok(mean_field_alpha(v, d)? / (8.0 * PI))
}

/// ∫_{R^d} v(|x|) dx.
pub fn mean_field_alpha(v: &InteractionSpec, d: usize) -> Result<f64> {
    v.validate()?;
    reject_hard_core(v)?;
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidDimension(d));
    }
    if v.is_zero() {
        return Ok(0.0);
    }
    Ok(radial_integral(v, d))
}

/// Split [a, b] at the breakpoints of v and distribute about `mesh` RK4 steps
/// proportionally, so that every jump of v falls on a mesh point.
fn panels(v: &InteractionSpec, a: f64, b: f64, mesh: usize) -> Vec<(f64, f64, usize)> {
    let mut pts = vec![a];
    let mut bs: Vec<f64> = v.breakpoints().into_iter().filter(|&x| x > a && x < b).collect();
    bs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.extend(bs);
    pts.push(b);
    pts.windows(2)
        .map(|w| {
            let steps = ((mesh as f64) * (w[1] - w[0]) / (b - a)).ceil().max(1.0) as usize;
            (w[0], w[1], steps)
        })
        .collect()
}

/// Integrate y' = f(r, y) for y = (u, u') across the panels by classical RK4.
///
/// Values of v are taken from the left inside each panel, so a jump at the
/// panel end is never sampled from the wrong side. With `rescale`, y is scaled
/// down whenever it grows past 1e150 (only valid when the caller needs y up to a factor).
fn rk4(
    panels: &[(f64, f64, usize)],
    mut y: [f64; 2],
    rescale: bool,
    f: impl Fn(f64, [f64; 2], (f64, f64)) -> [f64; 2],
    mut on_step: impl FnMut(f64, [f64; 2]) -> Result<()>,
) -> Result<[f64; 2]> {
    for &(a, b, steps) in panels {
        let h = (b - a) / steps as f64;
        for k in 0..steps {
            let r = a + k as f64 * h;
            let span = (a, b);
            let k1 = f(r, y, span);
            let k2 = f(r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]], span);
            let k3 = f(r + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]], span);
            let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]], span);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            if rescale && y[0].abs().max(y[1].abs()) > 1e150 {
                y = [y[0] * 1e-150, y[1] * 1e-150];
            }
            on_step(r + h, y)?;
        }
    }
    Ok(y)
}

/// v evaluated just inside the panel (a, b), so jumps at the ends are one-sided.
fn v_inside(v: &InteractionSpec, r: f64, span: (f64, f64)) -> f64 {
    let eps = 1e-12 * (span.1 - span.0);
    v.eval_capped(r.clamp(span.0 + eps, span.1 - eps))
}

/// α̃ in d = 3: shoot u'' = ½ v u from u(0) = 0, u'(0) = 1 and return r − u/u' at r_max.
pub fn scattering_length_3d(v: &InteractionSpec, r_max: f64, mesh: usize) -> Result<f64> {
    v.validate()?;
    if mesh < 1000 {
        return Err(Error::param("mesh", format!("need at least 1000 steps, got {mesh}")));
    }
    if let InteractionSpec::HardSphere { radius, .. } = *v {
        return Ok(radius);
    }
    if v.is_zero() {
        return Ok(0.0);
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::param("r_max", "must be positive"));
    }
    let ps = panels(v, 0.0, r_max, mesh);
    let y = rk4(
        &ps,
        [0.0, 1.0],
        true,
        |r, y, span| [y[1], 0.5 * v_inside(v, r, span) * y[0]],
        |r, y| if y[1] <= 0.0 { Err(Error::NodeCrossing { r }) } else { Ok(()) },
    )?;
    Ok(r_max - y[0] / y[1])
}

/// α̃ in d = 2 from the radial equation u'' + u'/r = ½ v u.
///
/// The regular solution is scaled to u(r_outer) = 1 and the two-radius formula
/// log α̃ = (log r − u(r) log r_outer)/(1 − u(r)) is evaluated at `r_eval`, which
/// must lie between the support of v and r_outer.
pub fn scattering_length_2d_at(v: &InteractionSpec, r_eval: f64, r_outer: f64, mesh: usize) -> Result<f64> {
    v.validate()?;
    if mesh < 1000 {
        return Err(Error::param("mesh", format!("need at least 1000 steps, got {mesh}")));
    }
    if let InteractionSpec::HardSphere { radius, .. } = *v {
        if radius > 0.0 {
            return Ok(radius);
        }
    }
    let support = v.outer_radius();
    if !(r_eval >= support && r_eval < r_outer) {
        return Err(Error::UnsupportedPotential(format!(
            "need support {support} ≤ r_eval {r_eval} < r_outer {r_outer}"
        )));
    }
    let v0 = v.eval_capped(0.0);
    let rhs = |r: f64, y: [f64; 2], span| {
        let vr = v_inside(v, r, span);
        if r == 0.0 {
            [y[1], 0.25 * v0 * y[0]]
        } else {
            [y[1], 0.5 * vr * y[0] - y[1] / r]
        }
    };
    let ps_eval = panels(v, 0.0, r_eval, mesh);
    let at_eval =
        rk4(
            &ps_eval,
            [1.0, 0.0],
            false,
            rhs,
            |r, y| {
                if y[0] <= 0.0 {
                    Err(Error::NodeCrossing { r })
                } else {
                    Ok(())
                }
            },
        )?;
    let outer_steps = ((mesh as f64) * (r_outer - r_eval) / r_outer).ceil().max(1.0) as usize;
    let at_outer = rk4(&[(r_eval, r_outer, outer_steps)], at_eval, false, rhs, |_, _| Ok(()))?;
    let u = at_eval[0] / at_outer[0];
    let denom = 1.0 - u;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateFormula("u(r) = u(R): v vanishes, α̃ is undefined".into()));
    }
    let log_a = (r_eval.ln() - u * r_outer.ln()) / denom;
    Ok(log_a.exp())
}

/// α̃ in d = 2 with the evaluation point midway between `r_support` and `r_outer`.
pub fn scattering_length_2d(v: &InteractionSpec, r_support: f64, r_outer: f64, mesh: usize) -> Result<f64> {
    scattering_length_2d_at(v, 0.5 * (r_support + r_outer), r_outer, mesh)
}

/// α̃ together with the Born values for d ∈ {2, 3}.
pub fn compute_scattering(v: &InteractionSpec, d: usize, r_max: f64, mesh: usize) -> Result<ScatteringResult> {
    let (alpha_tilde, method) = match (d, v) {
        (_, InteractionSpec::HardSphere { radius, .. }) => (*radius, ScatteringMethod::HardSphereClosedForm),
        (3, _) => (scattering_length_3d(v, r_max, mesh)?, ScatteringMethod::Ode3d),
        (2, _) => {
            let support = v.outer_radius();
            (scattering_length_2d(v, support, r_max.max(2.0 * support), mesh)?, ScatteringMethod::Formula2d)
        }
        _ => return Err(Error::InvalidDimension(d)),
    };
    let (born, born_radial) = match v {
        InteractionSpec::HardSphere { radius, .. } if *radius > 0.0 => (f64::INFINITY, f64::INFINITY),
        _ => (born_alpha(v)?, born_alpha_radial(v, d)?),
    };
    Ok(ScatteringResult { alpha_tilde, born, born_radial, method, ode_mesh: mesh })
}
