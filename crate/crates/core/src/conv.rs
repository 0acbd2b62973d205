//! Radial-kernel convolutions on grids by FFT.
//!
//! Periodic grids use circular convolution with minimum-image distances;
//! Dirichlet grids are zero-padded to twice the size so the result is a plain
//! (linear) convolution restricted to the box.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, GridField};
use crate::potentials::{InteractionSpec, MollifierSpec};

#[derive(Debug, Clone, Copy)]
pub enum Kernel {
    Interaction(InteractionSpec),
    Mollifier(MollifierSpec),
}

impl Kernel {
    fn width(&self) -> f64 {
        match self {
            Kernel::Interaction(v) => v.width(),
            Kernel::Mollifier(m) => m.support_radius(),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Kernel::Interaction(v) if v.is_zero())
    }
}

/// Precomputed transform of a kernel on one grid.
pub struct Convolver {
    grid: Arc<Grid>,
    m: usize,
    kernel_hat: Vec<Complex64>,
    zero: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver").field("m", &self.m).field("zero", &self.zero).finish()
    }
}

impl Convolver {
    pub fn new(grid: &Arc<Grid>, kernel: Kernel) -> Result<Self> {
        let n = grid.points_per_axis;
        let m = match grid.boundary {
            Boundary::Periodic => n,
            Boundary::Dirichlet => 2 * n,
        };
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let zero = kernel.is_zero();
        if !zero && kernel.width() < grid.spacing {
            return Err(Error::KernelUnresolved { width: kernel.width(), spacing: grid.spacing });
        }
        let d = grid.dim;
        let total = m.pow(d as u32);
        let h = grid.spacing;
        let offset = |j: usize| -> f64 {
            let j = j as i64;
            let m = m as i64;
            let s = if j <= m / 2 { j } else { j - m };
            s as f64 * h
        };
        let mut kernel_vals = vec![0.0; total];
        if !zero {
            let inv = match kernel {
                Kernel::Mollifier(ms) => ms.inv_norm(d),
                Kernel::Interaction(_) => 0.0,
            };
            for (idx, kv) in kernel_vals.iter_mut().enumerate() {
                let mut rest = idx;
                let mut r2 = 0.0;
                for _ in 0..d {
                    let x = offset(rest % m);
                    r2 += x * x;
                    rest /= m;
                }
                *kv = match kernel {
                    Kernel::Interaction(v) => v.eval_capped(r2.sqrt()),
                    Kernel::Mollifier(ms) => ms.eval_r2(r2, inv),
                };
            }
            if let Kernel::Mollifier(_) = kernel {
                let cell = h.powi(d as i32);
                let mass: f64 = kernel_vals.iter().sum::<f64>() * cell;
                kernel_vals.iter_mut().for_each(|v| *v /= mass);
            }
        }
        let mut conv = Convolver { grid: Arc::clone(grid), m, kernel_hat: Vec::new(), zero, forward, inverse };
        let mut buf: Vec<Complex64> = kernel_vals.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        if !zero {
            conv.fft_nd(&mut buf, false);
        }
        conv.kernel_hat = buf;
        Ok(conv)
    }

    fn fft_nd(&self, buf: &mut [Complex64], inverse: bool) {
        let m = self.m;
        let d = self.grid.dim;
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = m.pow((d - 1 - axis) as u32);
            let outer = buf.len() / (m * stride);
            for o in 0..outer {
                for i in 0..stride {
                    let start = o * m * stride + i;
                    for k in 0..m {
                        line[k] = buf[start + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..m {
                        buf[start + k * stride] = line[k];
                    }
                }
            }
        }
    }

    /// out(x) = Σ_y w_y k(|x − y|) ρ(y).
    pub fn apply(&self, density: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim;
        if self.zero {
            return vec![0.0; density.len()];
        }
        let m = self.m;
        let total = m.pow(d as u32);
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        let w = g.weights();
        let embed = |idx: usize| -> usize {
            let mi = g.multi_index(idx);
            mi[..d].iter().fold(0, |acc, &i| acc * m + i)
        };
        for (idx, &rho) in density.iter().enumerate() {
            buf[embed(idx)] = Complex64::new(rho * w[idx], 0.0);
        }
        self.fft_nd(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft_nd(&mut buf, true);
        let scale = 1.0 / total as f64;
        (0..density.len()).map(|idx| buf[embed(idx)].re * scale).collect()
    }
}

/// Convolve a density with a radial kernel (see [`Convolver::apply`]).
pub fn convolve_density(kernel: Kernel, density: &GridField) -> Result<GridField> {
    let c = Convolver::new(&density.grid, kernel)?;
    Ok(GridField { grid: Arc::clone(&density.grid), values: c.apply(&density.values) })
}
