//! Traps W, pair interactions v, their N-dependent rescaling, and mollifiers.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrapSpec {
    /// W(x) = |x|².
    Harmonic,
    /// W = 0 for |x| ≤ radius, +∞ outside.
    Box { radius: f64 },
    /// W(x) = |x|⁴.
    Quartic,
    /// W ≡ 0. Only meaningful on a periodic box.
    Zero,
}

impl TrapSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match *self {
            TrapSpec::Harmonic => r2,
            TrapSpec::Quartic => r2 * r2,
            TrapSpec::Box { radius } => {
                if r2 <= radius * radius {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            TrapSpec::Zero => 0.0,
        }
    }

    /// Quadratic coefficient used to size the Gaussian initial guess, if any.
    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match self {
            TrapSpec::Harmonic => Some(1.0),
            _ => None,
        }
    }
}

/// Trap sampled on a grid; infinite nodes are flagged and stored as 0.
#[derive(Debug, Clone)]
pub struct TrapField {
    pub field: GridField,
    pub infinite: Vec<bool>,
    /// The analytic trap, when the field was sampled from one.
    pub spec: Option<TrapSpec>,
}

impl TrapField {
    /// Nodes where a wavefunction may be nonzero: finite W and not on a Dirichlet face.
    pub fn allowed(&self) -> Vec<bool> {
        let g = &self.field.grid;
        self.infinite.iter().enumerate().map(|(i, &inf)| !inf && !g.is_boundary(i)).collect()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.field.grid
    }

    /// A trap field from finite node values (no infinite region).
    pub fn from_field(field: GridField) -> Self {
        let n = field.values.len();
        TrapField { field, infinite: vec![false; n], spec: None }
    }
}

pub fn eval_trap(spec: &TrapSpec, grid: &Arc<Grid>) -> TrapField {
    let mut infinite = vec![false; grid.node_count()];
    let mut values = vec![0.0; grid.node_count()];
    for (i, (v, inf)) in values.iter_mut().zip(infinite.iter_mut()).enumerate() {
        let x = grid.position(i);
        let w = spec.eval(&x[..grid.dim]);
        if w.is_finite() {
            *v = w;
        } else {
            *inf = true;
        }
    }
    TrapField { field: GridField { grid: Arc::clone(grid), values }, infinite, spec: Some(*spec) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionSpec {
    /// v(r) = g exp(-r²/(2s²)).
    Gaussian { g: f64, s: f64 },
    /// v = ∞ on [0, radius]; grids use the finite `cap` instead.
    HardSphere { radius: f64, cap: f64 },
    /// v(r) = g min(r^{-p}, cap) for r < support, 0 beyond.
    TruncatedInverse { g: f64, p: f64, cap: f64, support: f64 },
}

impl InteractionSpec {
    pub fn zero() -> Self {
        InteractionSpec::Gaussian { g: 0.0, s: 1.0 }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            InteractionSpec::Gaussian { g, .. } | InteractionSpec::TruncatedInverse { g, .. } => g == 0.0,
            InteractionSpec::HardSphere { radius, .. } => radius == 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        };
        match *self {
            InteractionSpec::Gaussian { g, s } => {
                if !g.is_finite() {
                    return Err(Error::param("g", "must be finite"));
                }
                pos("s", s)
            }
            InteractionSpec::HardSphere { radius, cap } => {
                if !(radius.is_finite() && radius >= 0.0) {
                    return Err(Error::param("radius", "must be nonnegative"));
                }
                pos("cap", cap)
            }
            InteractionSpec::TruncatedInverse { g, p, cap, support } => {
                if !g.is_finite() {
                    return Err(Error::param("g", "must be finite"));
                }
                pos("p", p)?;
                pos("cap", cap)?;
                pos("support", support)
            }
        }
    }

    /// The exact profile; ∞ inside a hard core.
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            InteractionSpec::HardSphere { radius, .. } => {
                if r <= radius {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            _ => self.eval_capped(r),
        }
    }

    /// The profile used on grids and in path functionals (hard core replaced by its cap).
    pub fn eval_capped(&self, r: f64) -> f64 {
        match *self {
            InteractionSpec::Gaussian { g, s } => g * (-0.5 * r * r / (s * s)).exp(),
            InteractionSpec::HardSphere { radius, cap } => {
                if r <= radius {
                    cap
                } else {
                    0.0
                }
            }
            InteractionSpec::TruncatedInverse { g, p, cap, support } => {
                if r < support {
                    g * r.powf(-p).min(cap)
                } else {
                    0.0
                }
            }
        }
    }

    /// Profile with numerical caps removed, used to judge integrability near 0.
    pub fn eval_singular(&self, r: f64) -> f64 {
        match *self {
            InteractionSpec::TruncatedInverse { g, p, support, .. } => {
                if r < support {
                    g * r.powf(-p)
                } else {
                    0.0
                }
            }
            _ => self.eval(r),
        }
    }

    /// Length scale that a grid must resolve.
    pub fn width(&self) -> f64 {
        match *self {
            InteractionSpec::Gaussian { s, .. } => s,
            InteractionSpec::HardSphere { radius, .. } => radius,
            InteractionSpec::TruncatedInverse { support, .. } => support,
        }
    }

    /// Radius beyond which v is zero (or below 1e-300 relative for the Gaussian).
    pub fn outer_radius(&self) -> f64 {
        match *self {
            InteractionSpec::Gaussian { s, .. } => 38.0 * s,
            InteractionSpec::HardSphere { radius, .. } => radius,
            InteractionSpec::TruncatedInverse { support, .. } => support,
        }
    }

    /// Points where the profile has a kink or jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            InteractionSpec::Gaussian { s, .. } => vec![s, 4.0 * s, 10.0 * s],
            InteractionSpec::HardSphere { radius, .. } => vec![radius],
            InteractionSpec::TruncatedInverse { p, cap, support, .. } => {
                let rc = cap.powf(-1.0 / p);
                if rc < support {
                    vec![rc, support]
                } else {
                    vec![support]
                }
            }
        }
    }
}

/// v_N(r) = N^{d-1} v(N r).
///
/// The family is closed under this map, so the result is again an `InteractionSpec`.
/// Note that ∫ v_N = ∫ v / N; it is N ∫ v_N that stays fixed.
pub fn rescale_interaction(spec: &InteractionSpec, n: usize, d: usize) -> Result<InteractionSpec> {
    if n == 0 {
        return Err(Error::InvalidN(n));
    }
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidDimension(d));
    }
    if n == 1 {
        return Ok(*spec);
    }
    let nf = n as f64;
    let amp = nf.powi(d as i32 - 1);
    Ok(match *spec {
        InteractionSpec::Gaussian { g, s } => InteractionSpec::Gaussian { g: g * amp, s: s / nf },
        InteractionSpec::HardSphere { radius, cap } => {
            InteractionSpec::HardSphere { radius: radius / nf, cap: cap * amp }
        }
        InteractionSpec::TruncatedInverse { g, p, cap, support } => InteractionSpec::TruncatedInverse {
            g: g * amp * nf.powf(-p),
            p,
            cap: cap * nf.powf(p),
            support: support / nf,
        },
    })
}

/// Surface area of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// ∫_a^b f over panels split at `breaks`, each done by double-exponential quadrature.
pub(crate) fn integrate_panels(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = vec![a];
    let mut bs: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    bs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.extend(bs);
    pts.push(b);
    pts.windows(2).filter(|w| w[1] > w[0]).map(|w| quadrature::integrate(&f, w[0], w[1], tol).integral).sum()
}

/// ∫_{R^d} v(|x|) dx using the capped profile.
pub fn radial_integral(v: &InteractionSpec, d: usize) -> f64 {
    let r_out = v.outer_radius();
    sphere_area(d) * integrate_panels(|r| v.eval_capped(r) * r.powi(d as i32 - 1), 0.0, r_out, &v.breakpoints(), 1e-13)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum MollifierShape {
    TruncatedGaussian,
}

/// φ_ε(x) = Z⁻¹ exp(-|x|²/(2ε)) 1{|x| ≤ ε}, optionally dilated: x ↦ x/scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub shape: MollifierShape,
    /// Dilation factor λ: the kernel becomes λ^{-d} φ_ε(x/λ). Default 1.
    pub scale: f64,
}

impl MollifierSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(MollifierSpec { epsilon, shape: MollifierShape::TruncatedGaussian, scale: 1.0 })
    }

    pub fn dilated(mut self, scale: f64) -> Self {
        self.scale *= scale;
        self
    }

    pub fn support_radius(&self) -> f64 {
        self.epsilon * self.scale
    }

    /// Normalizing constant Z of the undilated kernel, by quadrature.
    pub fn normalization(&self, d: usize) -> f64 {
        let e = self.epsilon;
        sphere_area(d) * integrate_panels(|r| (-0.5 * r * r / e).exp() * r.powi(d as i32 - 1), 0.0, e, &[], 1e-15)
    }

    /// Evaluate at squared distance `r2` in dimension d.
    #[inline]
    pub fn eval_r2(&self, r2: f64, inv_norm: f64) -> f64 {
        let rs = self.support_radius();
        if r2 > rs * rs {
            return 0.0;
        }
        let u2 = r2 / (self.scale * self.scale);
        inv_norm * (-0.5 * u2 / self.epsilon).exp()
    }

    /// 1 / (Z λ^d), the prefactor passed to [`Self::eval_r2`].
    pub fn inv_norm(&self, d: usize) -> f64 {
        1.0 / (self.normalization(d) * self.scale.powi(d as i32))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2 = x.iter().map(|v| v * v).sum();
        self.eval_r2(r2, self.inv_norm(x.len()))
    }
}

/// φ_ε(· − center) on the grid, rescaled so its quadrature sum is exactly 1.
pub fn eval_mollifier(spec: &MollifierSpec, grid: &Arc<Grid>, center: &[f64]) -> Result<GridField> {
    if spec.support_radius() < grid.spacing {
        return Err(Error::KernelUnresolved { width: spec.support_radius(), spacing: grid.spacing });
    }
    let d = grid.dim;
    let inv = spec.inv_norm(d);
    let mut f = grid.field_from_fn(|x| {
        let r2 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        spec.eval_r2(r2, inv)
    });
    let mass = f.integrate();
    f.values.iter_mut().for_each(|v| *v /= mass);
    Ok(f)
}

/// One numerical check from [`validate_assumptions`].
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub value: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub all_pass: bool,
}

/// Sequence of truncated integrals ∫_δ^R as δ ↓ 0; judged divergent if the
/// increments stop shrinking geometrically.
fn integral_near_zero(f: impl Fn(f64) -> f64, upper: f64, breaks: &[f64]) -> (f64, bool) {
    let deltas: Vec<f64> = (1..=6).map(|k| upper * 10f64.powi(-2 * k)).collect();
    let mut vals = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        let mut bs: Vec<f64> = breaks.to_vec();
        // Geometric panels resolve a power-law singularity.
        let mut x = d;
        while x < upper {
            bs.push(x);
            x *= 10.0;
        }
        vals.push(integrate_panels(&f, d, upper, &bs, 1e-12));
    }
    let inc: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let last = *vals.last().unwrap();
    if !last.is_finite() {
        return (f64::INFINITY, false);
    }
    let scale = last.abs().max(1e-300);
    let tail = inc[inc.len() - 1];
    let prev = inc[inc.len() - 2];
    let converged = tail <= 1e-6 * scale || (tail <= 0.5 * prev && tail <= 1e-3 * scale);
    (if converged { last } else { f64::INFINITY }, converged)
}

/// Numerical check of the integrability conditions on v (and confinement of W).
pub fn validate_assumptions(v: &InteractionSpec, w: &TrapSpec, d: usize) -> Result<AssumptionReport> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidDimension(d));
    }
    let mut checks = Vec::new();
    let area = sphere_area(d);
    let breaks = v.breakpoints();
    let r_out = v.outer_radius();

    if v.is_zero() {
        for name in ["v_integrable", "v_square_integrable", "green_integrable"] {
            checks.push(AssumptionCheck { name: name.into(), value: 0.0, pass: true, note: "v = 0".into() });
        }
    } else if let InteractionSpec::HardSphere { .. } = v {
        checks.push(AssumptionCheck {
            name: "v_integrable".into(),
            value: f64::INFINITY,
            pass: false,
            note: "hard core: v = ∞ on a set of positive measure".into(),
        });
        checks.push(AssumptionCheck {
            name: "v_square_integrable".into(),
            value: f64::INFINITY,
            pass: false,
            note: "hard core".into(),
        });
        checks.push(AssumptionCheck {
            name: "green_integrable".into(),
            value: f64::INFINITY,
            pass: false,
            note: "hard core".into(),
        });
    } else {
        let (i1, ok1) = integral_near_zero(|r| v.eval_singular(r) * r.powi(d as i32 - 1), r_out, &breaks);
        checks.push(AssumptionCheck {
            name: "v_integrable".into(),
            value: area * i1,
            pass: ok1,
            note: if ok1 { "finite".into() } else { "divergent at r → 0".into() },
        });
        let (i2, ok2) = integral_near_zero(|r| v.eval_singular(r).powi(2) * r.powi(d as i32 - 1), r_out, &breaks);
        checks.push(AssumptionCheck {
            name: "v_square_integrable".into(),
            value: area * i2,
            pass: ok2,
            note: if ok2 { "finite".into() } else { "divergent at r → 0".into() },
        });
        if d == 3 {
            let eps = r_out.min(1.0);
            // Decreasing envelope sup_{r ≤ s ≤ eps} v(s), sampled.
            let env =
                |r: f64| (0..=64).map(|k| v.eval_singular(r + (eps - r) * k as f64 / 64.0)).fold(0.0f64, f64::max);
            let (ig, okg) = integral_near_zero(|r| env(r) * r, eps, &breaks);
            checks.push(AssumptionCheck {
                name: "green_integrable".into(),
                value: area * ig,
                pass: okg,
                note: if okg { "finite".into() } else { "divergent at r → 0".into() },
            });
        } else {
            checks.push(AssumptionCheck {
                name: "green_integrable".into(),
                value: f64::NAN,
                pass: true,
                note: "checked only in d = 3".into(),
            });
        }
    }

    let confining = match w {
        TrapSpec::Harmonic | TrapSpec::Quartic | TrapSpec::Box { .. } => true,
        TrapSpec::Zero => false,
    };
    checks.push(AssumptionCheck {
        name: "trap_confining".into(),
        value: if confining { 1.0 } else { 0.0 },
        pass: confining,
        note: if confining { "W → ∞ or hard walls".into() } else { "W ≡ 0 needs a periodic box".into() },
    });
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(AssumptionReport { checks, all_pass })
}
