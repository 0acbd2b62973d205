//! Brownian and tilted path sampling, occupation measures and intersection functionals.
//!
//! Paths solve dX = b(X)dt + √(2a) dW by Euler-Maruyama, so the untilted
//! walk has generator aΔ. Path `i` draws from its own ChaCha stream `i` of
//! the root seed; ensembles are therefore reproducible bit for bit and
//! independent of how the work is split across threads.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, GridField};
use crate::potentials::{InteractionSpec, MollifierSpec};

/// Positive function φ whose tilt 2a∇φ/φ drives the sampler.
#[derive(Debug, Clone)]
pub enum Guide {
    /// φ ∝ exp(−|x − c|²/(4σ²)); the tilted process is Ornstein-Uhlenbeck with stationary law N(c, σ²).
    Gaussian {
        center: Vec<f64>,
        variance: f64,
    },
    Grid(GridGuide),
}

/// A sampled φ with multilinear interpolation of φ and ∇log φ.
#[derive(Debug, Clone)]
pub struct GridGuide {
    phi: GridField,
    grad_log: Vec<[f64; 3]>,
    /// Cumulative w·φ² over nodes, for stationary starts.
    cdf: Vec<f64>,
    floor: f64,
}

impl GridGuide {
    pub fn new(phi: &GridField) -> Result<Self> {
        let g = &phi.grid;
        if phi.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::param("phi", "guide must be nonnegative and finite"));
        }
        let pmax = phi.values.iter().fold(0.0f64, |m, &v| m.max(v));
        if pmax <= 0.0 {
            return Err(Error::param("phi", "guide vanishes identically"));
        }
        let n = g.points_per_axis;
        let h = g.spacing;
        let mut grad_log = vec![[0.0; 3]; g.node_count()];
        for (idx, gl) in grad_log.iter_mut().enumerate() {
            if phi.values[idx] <= 0.0 {
                continue;
            }
            let m = g.multi_index(idx);
            let lp = phi.values[idx].ln();
            for axis in 0..g.dim {
                let s = g.stride(axis);
                let i = m[axis];
                let neighbor = |up: bool| -> Option<f64> {
                    let j = match (g.boundary, up) {
                        (Boundary::Periodic, true) => Some((i + 1) % n),
                        (Boundary::Periodic, false) => Some((i + n - 1) % n),
                        (Boundary::Dirichlet, true) => (i + 1 < n).then_some(i + 1),
                        (Boundary::Dirichlet, false) => i.checked_sub(1),
                    }?;
                    let v = phi.values[idx - i * s + j * s];
                    (v > 0.0).then(|| v.ln())
                };
                gl[axis] = match (neighbor(true), neighbor(false)) {
                    (Some(u), Some(d)) => (u - d) / (2.0 * h),
                    (Some(u), None) => (u - lp) / h,
                    (None, Some(d)) => (lp - d) / h,
                    (None, None) => 0.0,
                };
            }
        }
        let w = g.weights();
        let mut acc = 0.0;
        let cdf = phi
            .values
            .iter()
            .zip(w)
            .map(|(p, wi)| {
                acc += wi * p * p;
                acc
            })
            .collect();
        Ok(GridGuide { phi: phi.clone(), grad_log, cdf, floor: 1e-12 * pmax })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.phi.grid
    }

    /// Interpolated (φ, ∇log φ) at x.
    fn eval(&self, x: &[f64]) -> Result<(f64, [f64; 3])> {
        let g = &self.phi.grid;
        let n = g.points_per_axis;
        let h = g.spacing;
        let l = g.half_width;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..g.dim {
            let mut t = (x[k] + l) / h;
            match g.boundary {
                Boundary::Periodic => t = t.rem_euclid(n as f64),
                Boundary::Dirichlet => {
                    if !(0.0..=(n - 1) as f64).contains(&t) {
                        return Err(Error::DriftSingularity { position: x.to_vec(), value: 0.0 });
                    }
                }
            }
            let i = (t.floor() as usize).min(n - 2 + (g.boundary == Boundary::Periodic) as usize);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut phi = 0.0;
        let mut grad = [0.0; 3];
        for corner in 0..(1usize << g.dim) {
            let mut idx = 0;
            let mut wgt = 1.0;
            for k in 0..g.dim {
                let up = (corner >> k) & 1;
                let i = (base[k] + up) % n;
                idx = idx * n + i;
                wgt *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if wgt == 0.0 {
                continue;
            }
            let p = self.phi.values[idx];
            phi += wgt * p;
            if p <= 0.0 {
                return Err(Error::DriftSingularity { position: x.to_vec(), value: p });
            }
            for k in 0..g.dim {
                grad[k] += wgt * self.grad_log[idx][k];
            }
        }
        if phi < self.floor {
            return Err(Error::DriftSingularity { position: x.to_vec(), value: phi });
        }
        Ok((phi, grad))
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let g = &self.phi.grid;
        let total = *self.cdf.last().unwrap_or(&0.0);
        let u: f64 = rng.gen::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let pos = g.position(idx);
        for k in 0..g.dim {
            let jitter: f64 = rng.gen::<f64>() - 0.5;
            out[k] = (pos[k] + jitter * g.spacing).clamp(-g.half_width, g.half_width);
        }
    }
}

impl Guide {
    pub fn from_grid(phi: &GridField) -> Result<Self> {
        Ok(Guide::Grid(GridGuide::new(phi)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Guide::Gaussian { center, .. } => center.len(),
            Guide::Grid(gg) => gg.grid().dim,
        }
    }

    /// Drift 2a∇φ/φ at x.
    pub fn drift(&self, x: &[f64], a: f64, out: &mut [f64]) -> Result<()> {
        match self {
            Guide::Gaussian { center, variance } => {
                for k in 0..out.len() {
                    out[k] = -a * (x[k] - center[k]) / variance;
                }
            }
            Guide::Grid(gg) => {
                let (_, grad) = gg.eval(x)?;
                for k in 0..out.len() {
                    out[k] = 2.0 * a * grad[k];
                }
            }
        }
        Ok(())
    }

    fn sample_stationary(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Guide::Gaussian { center, variance } => {
                for k in 0..out.len() {
                    let z: f64 = rng.sample(StandardNormal);
                    out[k] = center[k] + variance.sqrt() * z;
                }
            }
            Guide::Grid(gg) => gg.sample(rng, out),
        }
    }
}

/// Law of the starting point, shared by the reference and the tilted process.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub enum StartLaw {
    #[default]
    Origin,
    Point(Vec<f64>),
    /// φ² of the guide (needs a guide).
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Storage {
    #[default]
    Full,
    /// Keep only the log-weights (for long tilted runs).
    WeightsOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSpec {
    pub dim: usize,
    pub beta: f64,
    pub dt: f64,
    pub m: usize,
    pub seed: u64,
    pub a: f64,
    pub start: StartLaw,
    pub storage: Storage,
}

impl SampleSpec {
    pub fn new(dim: usize, beta: f64, dt: f64, m: usize, seed: u64) -> Self {
        SampleSpec { dim, beta, dt, m, seed, a: 1.0, start: StartLaw::Origin, storage: Storage::Full }
    }

    pub fn steps(&self) -> usize {
        (self.beta / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidDimension(self.dim));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt <= self.beta) {
            return Err(Error::param("dt", format!("must lie in (0, beta], got {}", self.dt)));
        }
        if self.m == 0 {
            return Err(Error::param("M", "need at least one path"));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::param("convention_a", "must be positive"));
        }
        if let StartLaw::Point(p) = &self.start {
            if p.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: p.len() });
            }
        }
        Ok(())
    }
}

/// Path `index` of the ensemble described by `spec`: the (steps+1)·dim positions
/// and the log-likelihood ratio log dP/dP^(φ) (0 without a guide).
pub fn generate_path(spec: &SampleSpec, guide: Option<&Guide>, index: u64) -> Result<(Vec<f64>, f64)> {
    let d = spec.dim;
    let steps = spec.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let mut path = vec![0.0; (steps + 1) * d];
    match &spec.start {
        StartLaw::Origin => {}
        StartLaw::Point(p) => path[..d].copy_from_slice(p),
        StartLaw::Stationary => guide.ok_or(Error::MissingGuide)?.sample_stationary(&mut rng, &mut path[..d]),
    }
    let sd = (2.0 * spec.a * spec.dt).sqrt();
    let mut b = [0.0; 3];
    let mut log_w = 0.0;
    for k in 0..steps {
        let (head, tail) = path.split_at_mut((k + 1) * d);
        let x = &head[k * d..];
        let next = &mut tail[..d];
        if let Some(gd) = guide {
            gd.drift(x, spec.a, &mut b[..d])?;
        }
        let mut bdx = 0.0;
        let mut b2 = 0.0;
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let dx = b[j] * spec.dt + sd * z;
            next[j] = x[j] + dx;
            bdx += b[j] * dx;
            b2 += b[j] * b[j];
        }
        if guide.is_some() {
            log_w += -bdx / (2.0 * spec.a) + b2 * spec.dt / (4.0 * spec.a);
        }
    }
    Ok((path, log_w))
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub dim: usize,
    pub beta: f64,
    pub dt: f64,
    pub m: usize,
    pub steps: usize,
    pub seed: u64,
    pub convention_a: f64,
    /// Path-major, then time, then axis. Empty for [`Storage::WeightsOnly`].
    pub paths: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl PathEnsemble {
    pub fn has_paths(&self) -> bool {
        !self.paths.is_empty()
    }

    /// Positions of path i, (steps+1)·dim values.
    pub fn path(&self, i: usize) -> Result<&[f64]> {
        if !self.has_paths() {
            return Err(Error::param("storage", "paths were not stored"));
        }
        if i >= self.m {
            return Err(Error::param("path_index", format!("{i} out of range (M = {})", self.m)));
        }
        let len = (self.steps + 1) * self.dim;
        Ok(&self.paths[i * len..(i + 1) * len])
    }

    /// Little-endian dump: dim, beta, dt, M, seed, a, then the paths and the log-weights.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.beta.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.convention_a.to_le_bytes())?;
        w.write_all(&[self.has_paths() as u8])?;
        for v in self.paths.iter().chain(&self.log_weights) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let beta = f64::from_le_bytes(next(&mut r)?);
        let dt = f64::from_le_bytes(next(&mut r)?);
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let a = f64::from_le_bytes(next(&mut r)?);
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let steps = (beta / dt).round() as usize;
        let n_paths = if flag[0] == 1 { m * (steps + 1) * dim } else { 0 };
        let mut read_vec =
            |count: usize| -> Result<Vec<f64>> { (0..count).map(|_| next(&mut r).map(f64::from_le_bytes)).collect() };
        let paths = read_vec(n_paths)?;
        let log_weights = read_vec(m)?;
        Ok(PathEnsemble { dim, beta, dt, m, steps, seed, convention_a: a, paths, log_weights })
    }
}

/// Sample M paths in parallel (path i on stream i).
pub fn sample_paths(spec: &SampleSpec, guide: Option<&Guide>) -> Result<PathEnsemble> {
    spec.validate()?;
    if let Some(g) = guide {
        if g.dim() != spec.dim {
            return Err(Error::DimensionMismatch { expected: spec.dim, got: g.dim() });
        }
    }
    if spec.steps() < 10 {
        log::debug!("only {} steps per path", spec.steps());
    }
    let results: Vec<Result<(Vec<f64>, f64)>> =
        (0..spec.m as u64).into_par_iter().map(|i| generate_path(spec, guide, i)).collect();
    let keep = spec.storage == Storage::Full;
    let mut paths = Vec::new();
    let mut log_weights = Vec::with_capacity(spec.m);
    for r in results {
        let (p, lw) = r?;
        if keep {
            paths.extend_from_slice(&p);
        }
        log_weights.push(lw);
    }
    Ok(PathEnsemble {
        dim: spec.dim,
        beta: spec.beta,
        dt: spec.dt,
        m: spec.m,
        steps: spec.steps(),
        seed: spec.seed,
        convention_a: spec.a,
        paths,
        log_weights,
    })
}

#[derive(Debug, Clone)]
pub struct OccupationHistogram {
    pub mass: GridField,
    pub path_index: usize,
    /// Time steps that fell outside the box (or on a Dirichlet face) and were moved inward.
    pub out_of_box: usize,
}

/// Node receiving the point x: nearest node, pushed off Dirichlet faces.
fn deposit_node(grid: &Grid, x: &[f64]) -> (usize, bool) {
    let n = grid.points_per_axis;
    let mut idx = 0;
    let mut moved = false;
    for &xk in &x[..grid.dim] {
        let t = ((xk + grid.half_width) / grid.spacing).round();
        let i = match grid.boundary {
            Boundary::Periodic => {
                if xk.abs() > grid.half_width {
                    moved = true;
                }
                (t.rem_euclid(n as f64) as usize) % n
            }
            Boundary::Dirichlet => {
                let c = t.clamp(1.0, (n - 2) as f64);
                if c != t {
                    moved = true;
                }
                c as usize
            }
        };
        idx = idx * n + i;
    }
    (idx, moved)
}

/// μ_β of one path: weight dt/β per step at the nearest node, divided by the node weight.
pub fn occupation_measure(ens: &PathEnsemble, path_index: usize, grid: &Arc<Grid>) -> Result<OccupationHistogram> {
    if grid.dim != ens.dim {
        return Err(Error::DimensionMismatch { expected: ens.dim, got: grid.dim });
    }
    let p = ens.path(path_index)?;
    let w = grid.weights();
    let mut mass = vec![0.0; grid.node_count()];
    let mut out_of_box = 0;
    let share = 1.0 / ens.steps as f64;
    for k in 0..ens.steps {
        let (idx, moved) = deposit_node(grid, &p[k * ens.dim..(k + 1) * ens.dim]);
        out_of_box += moved as usize;
        mass[idx] += share / w[idx];
    }
    Ok(OccupationHistogram { mass: GridField { grid: Arc::clone(grid), values: mass }, path_index, out_of_box })
}

/// Kernel of a two-path double-time functional.
#[derive(Debug, Clone, Copy)]
pub enum PairKernel {
    /// amplitude · v(r).
    Interaction {
        v: InteractionSpec,
        amplitude: f64,
    },
    Mollifier(MollifierSpec),
}

impl PairKernel {
    /// Radius beyond which the kernel is zero (or negligible for the Gaussian).
    pub fn radius(&self) -> f64 {
        match self {
            PairKernel::Interaction { v: InteractionSpec::Gaussian { s, .. }, .. } => 9.0 * s,
            PairKernel::Interaction { v, .. } => v.outer_radius(),
            PairKernel::Mollifier(m) => m.support_radius(),
        }
    }

    fn evaluator(&self, d: usize) -> impl Fn(f64) -> f64 + '_ {
        let inv = match self {
            PairKernel::Mollifier(m) => m.inv_norm(d),
            _ => 0.0,
        };
        move |r2| match self {
            PairKernel::Interaction { v, amplitude } => amplitude * v.eval_capped(r2.sqrt()),
            PairKernel::Mollifier(m) => m.eval_r2(r2, inv),
        }
    }
}

/// Σ_{s,t} k(x_s − y_t) f(x_s) over all point pairs within `radius`,
/// using a cell hash of the y points. Summation order is fixed.
pub(crate) fn pair_sum(
    xs: &[f64],
    ys: &[f64],
    d: usize,
    radius: f64,
    kernel: impl Fn(f64) -> f64,
    weight: impl Fn(&[f64]) -> f64,
) -> f64 {
    let cell = radius.max(1e-300);
    let key = |p: &[f64]| -> [i64; 3] {
        let mut k = [0i64; 3];
        for j in 0..d {
            k[j] = (p[j] / cell).floor() as i64;
        }
        k
    };
    let mut table: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (t, y) in ys.chunks_exact(d).enumerate() {
        table.entry(key(y)).or_default().push(t);
    }
    let offsets: Vec<[i64; 3]> = (0..3usize.pow(d as u32))
        .map(|c| {
            let mut o = [0i64; 3];
            let mut rest = c;
            for v in o.iter_mut().take(d) {
                *v = (rest % 3) as i64 - 1;
                rest /= 3;
            }
            o
        })
        .collect();
    let r2max = radius * radius;
    let mut total = 0.0;
    for x in xs.chunks_exact(d) {
        let k0 = key(x);
        let mut local = 0.0;
        for o in &offsets {
            let k = [k0[0] + o[0], k0[1] + o[1], k0[2] + o[2]];
            if let Some(list) = table.get(&k) {
                for &t in list {
                    let y = &ys[t * d..(t + 1) * d];
                    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if r2 <= r2max {
                        local += kernel(r2);
                    }
                }
            }
        }
        if local != 0.0 {
            total += weight(x) * local;
        }
    }
    total
}

/// Time points 0, k, 2k, … below `steps`, flattened.
pub(crate) fn strided_points(path: &[f64], d: usize, steps: usize, stride: usize) -> Vec<f64> {
    (0..steps).step_by(stride.max(1)).flat_map(|k| path[k * d..(k + 1) * d].iter().copied()).collect()
}

fn check_pair(ens: &PathEnsemble, i: usize, j: usize, moll: &MollifierSpec) -> Result<()> {
    if i == j {
        return Err(Error::param("pair", "i and j must differ"));
    }
    let step_scale = (2.0 * ens.convention_a * ens.dt).sqrt();
    if moll.support_radius() < 2.0 * step_scale {
        return Err(Error::EpsilonUnderresolved { epsilon: moll.support_radius(), step_scale });
    }
    Ok(())
}

/// (1/β²) Σ_s Σ_t f(B^i_s) φ_ε(B^i_s − B^j_t) dt².
pub fn weighted_intersection(
    ens: &PathEnsemble,
    i: usize,
    j: usize,
    moll: &MollifierSpec,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    check_pair(ens, i, j, moll)?;
    let d = ens.dim;
    let xs = strided_points(ens.path(i)?, d, ens.steps, 1);
    let ys = strided_points(ens.path(j)?, d, ens.steps, 1);
    let k = PairKernel::Mollifier(*moll);
    let s = pair_sum(&xs, &ys, d, k.radius(), k.evaluator(d), f);
    Ok(s / (ens.steps as f64).powi(2))
}

/// Mollified intersection local time at 0, L_{ε,β}^{(i,j)}(0).
pub fn intersection_mass(ens: &PathEnsemble, i: usize, j: usize, moll: &MollifierSpec) -> Result<f64> {
    weighted_intersection(ens, i, j, moll, |_| 1.0)
}

/// Σ_s Σ_t g(B^i_s − B^j_t) / steps², for an arbitrary bounded g.
pub fn pair_average(ens: &PathEnsemble, i: usize, j: usize, g: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let d = ens.dim;
    let (p, q) = (ens.path(i)?, ens.path(j)?);
    let mut diff = vec![0.0; d];
    let mut total = 0.0;
    for s in 0..ens.steps {
        for t in 0..ens.steps {
            for k in 0..d {
                diff[k] = p[s * d + k] - q[t * d + k];
            }
            total += g(&diff);
        }
    }
    Ok(total / (ens.steps as f64).powi(2))
}

/// The mollified intersection density x ↦ L_{ε,β}^{(i,j)}(x) on grid nodes.
pub fn intersection_density(
    ens: &PathEnsemble,
    i: usize,
    j: usize,
    moll: &MollifierSpec,
    grid: &Arc<Grid>,
) -> Result<GridField> {
    check_pair(ens, i, j, moll)?;
    let d = ens.dim;
    let inv = moll.inv_norm(d);
    let rad = moll.support_radius();
    let (p, q) = (ens.path(i)?, ens.path(j)?);
    let mut diffs = Vec::with_capacity(ens.steps * ens.steps * d);
    for s in 0..ens.steps {
        for t in 0..ens.steps {
            for k in 0..d {
                diffs.push(p[s * d + k] - q[t * d + k]);
            }
        }
    }
    let nodes: Vec<f64> = (0..grid.node_count()).flat_map(|idx| grid.position(idx)[..d].to_vec()).collect();
    let norm = (ens.steps as f64).powi(2);
    let values = nodes
        .chunks_exact(d)
        .map(|x| pair_sum(x, &diffs, d, rad, |r2| moll.eval_r2(r2, inv), |_| 1.0) / norm)
        .collect();
    Ok(GridField { grid: Arc::clone(grid), values })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

pub(crate) fn mean_se(xs: &[f64]) -> MeanEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    MeanEstimate { mean, stderr: (var / n).sqrt() }
}

/// (1/β) H(P^(φ) | P) estimated as the mean of −log_weight/β.
pub fn entropy_rate_estimate(ens: &PathEnsemble) -> MeanEstimate {
    let xs: Vec<f64> = ens.log_weights.iter().map(|lw| -lw / ens.beta).collect();
    mean_se(&xs)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeRow {
    pub epsilon: f64,
    pub mean_abs_diff: f64,
    pub stderr: f64,
}

/// E|⟨f, ℓ_ε⟩ − ⟨f, ℓ_ε_min⟩| over the given pairs, for each ε in the list.
pub fn mollification_error_probe(
    ens: &PathEnsemble,
    pairs: &[(usize, usize)],
    f: impl Fn(&[f64]) -> f64 + Sync,
    eps_list: &[f64],
) -> Result<Vec<ProbeRow>> {
    if eps_list.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("eps_list", "must be strictly decreasing"));
    }
    let molls: Vec<MollifierSpec> = eps_list.iter().map(|&e| MollifierSpec::new(e)).collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| molls.iter().map(|m| weighted_intersection(ens, i, j, m, &f)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let last = eps_list.len() - 1;
    Ok(eps_list
        .iter()
        .enumerate()
        .map(|(k, &epsilon)| {
            let diffs: Vec<f64> = values.iter().map(|v| (v[k] - v[last]).abs()).collect();
            let est = mean_se(&diffs);
            ProbeRow { epsilon, mean_abs_diff: est.mean, stderr: est.stderr }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_relative_eq;

    fn constant_ensemble(points: &[Vec<f64>], steps: usize, dt: f64) -> PathEnsemble {
        let d = points[0].len();
        let mut paths = Vec::new();
        for p in points {
            for _ in 0..=steps {
                paths.extend_from_slice(p);
            }
        }
        PathEnsemble {
            dim: d,
            beta: steps as f64 * dt,
            dt,
            m: points.len(),
            steps,
            seed: 0,
            convention_a: 1.0,
            paths,
            log_weights: vec![0.0; points.len()],
        }
    }

    #[test]
    fn one_step_variance() {
        let spec = SampleSpec::new(2, 0.7, 0.7, 100_000, 11);
        let ens = sample_paths(&spec, None).unwrap();
        for axis in 0..2 {
            let xs: Vec<f64> = (0..ens.m).map(|i| ens.path(i).unwrap()[2 + axis].powi(2)).collect();
            let est = mean_se(&xs);
            assert!((est.mean - 1.4).abs() < 3.0 * est.stderr, "{est:?}");
        }
    }

    #[test]
    fn deterministic_and_order_free() {
        let spec = SampleSpec::new(1, 1.0, 0.1, 50, 99);
        let a = sample_paths(&spec, None).unwrap();
        let b = sample_paths(&spec, None).unwrap();
        assert_eq!(a.paths, b.paths);
        let (p7, _) = generate_path(&spec, None, 7).unwrap();
        assert_eq!(a.path(7).unwrap(), &p7[..]);
        let other = sample_paths(&SampleSpec { seed: 100, ..spec }, None).unwrap();
        assert_ne!(a.paths, other.paths);
    }

    #[test]
    fn binary_round_trip() {
        let mut spec = SampleSpec::new(2, 1.0, 0.25, 3, 5);
        let guide = Guide::Gaussian { center: vec![0.0, 0.0], variance: 1.0 };
        spec.start = StartLaw::Stationary;
        let ens = sample_paths(&spec, Some(&guide)).unwrap();
        let mut buf = Vec::new();
        ens.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 6 * 8 + 1 + 8 * (3 * 5 * 2 + 3));
        let back = PathEnsemble::read_binary(&buf[..]).unwrap();
        assert_eq!(back.paths, ens.paths);
        assert_eq!(back.log_weights, ens.log_weights);
        assert_eq!((back.dim, back.m, back.steps, back.seed), (2, 3, 4, 5));
    }

    #[test]
    fn tilted_weights_average_to_one() {
        let mut spec = SampleSpec::new(1, 0.5, 0.01, 20_000, 3);
        spec.storage = Storage::WeightsOnly;
        let guide = Guide::Gaussian { center: vec![0.3], variance: 1.0 };
        let ens = sample_paths(&spec, Some(&guide)).unwrap();
        assert!(!ens.has_paths());
        let w: Vec<f64> = ens.log_weights.iter().map(|l| l.exp()).collect();
        let est = mean_se(&w);
        assert!((est.mean - 1.0).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn zero_drift_gives_zero_entropy() {
        let g = build_grid(1, 2.0, 16, Boundary::Periodic).unwrap();
        let guide = Guide::from_grid(&g.constant(0.5)).unwrap();
        let ens = sample_paths(&SampleSpec::new(1, 3.0, 0.05, 20, 1), Some(&guide)).unwrap();
        let e = entropy_rate_estimate(&ens);
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn grid_guide_matches_gaussian_drift() {
        let g = build_grid(1, 8.0, 161, Boundary::Dirichlet).unwrap();
        let phi = g.field_from_fn(|x| (-x[0] * x[0] / 4.0).exp());
        let guide = Guide::from_grid(&phi).unwrap();
        let mut b = [0.0];
        for x in [-2.3, 0.0, 0.77, 3.1] {
            guide.drift(&[x], 1.0, &mut b).unwrap();
            assert!((b[0] + x).abs() < 1e-9, "{x} {}", b[0]);
        }
        assert!(matches!(guide.drift(&[9.0], 1.0, &mut b), Err(Error::DriftSingularity { .. })));
        let holey = g.field_from_fn(|x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 });
        let guide = Guide::from_grid(&holey).unwrap();
        assert!(matches!(guide.drift(&[2.0], 1.0, &mut b), Err(Error::DriftSingularity { .. })));
    }

    #[test]
    fn occupation_point_mass_and_unit_mass() {
        let g = build_grid(2, 2.0, 9, Boundary::Dirichlet).unwrap();
        let ens = constant_ensemble(&[vec![0.5, -0.5]], 10, 0.1);
        let occ = occupation_measure(&ens, 0, &g).unwrap();
        let idx = g.nearest_node(&[0.5, -0.5]).0;
        assert_relative_eq!(occ.mass.values[idx] * g.weights()[idx], 1.0, max_relative = 1e-14);
        assert_eq!(occ.out_of_box, 0);
        let ens = sample_paths(&SampleSpec::new(2, 4.0, 0.01, 3, 2), None).unwrap();
        for i in 0..3 {
            let occ = occupation_measure(&ens, i, &g).unwrap();
            assert!((occ.mass.integrate() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn coincident_paths_give_kernel_peak() {
        let ens = constant_ensemble(&[vec![0.2, 0.1], vec![0.2, 0.1]], 20, 0.01);
        let m = MollifierSpec::new(0.5).unwrap();
        let v = intersection_mass(&ens, 0, 1, &m).unwrap();
        assert_relative_eq!(v, m.eval(&[0.0, 0.0]), max_relative = 1e-12);
        let far = constant_ensemble(&[vec![0.0, 0.0], vec![3.0, 0.0]], 20, 0.01);
        assert_eq!(intersection_mass(&far, 0, 1, &m).unwrap(), 0.0);
        assert!(intersection_mass(&ens, 1, 1, &m).is_err());
        let tiny = MollifierSpec::new(0.05).unwrap();
        assert!(matches!(intersection_mass(&ens, 0, 1, &tiny), Err(Error::EpsilonUnderresolved { .. })));
    }

    #[test]
    fn intersection_symmetric() {
        let ens = sample_paths(&SampleSpec::new(2, 2.0, 0.01, 2, 8), None).unwrap();
        let m = MollifierSpec::new(0.6).unwrap();
        let a = intersection_mass(&ens, 0, 1, &m).unwrap();
        let b = intersection_mass(&ens, 1, 0, &m).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert!(a >= 0.0);
    }

    #[test]
    fn hashed_sum_matches_brute_force() {
        let ens = sample_paths(&SampleSpec::new(2, 1.0, 0.02, 2, 4), None).unwrap();
        let m = MollifierSpec::new(0.5).unwrap();
        let fast = intersection_mass(&ens, 0, 1, &m).unwrap();
        let slow = pair_average(&ens, 0, 1, |z| m.eval(z)).unwrap();
        assert_relative_eq!(fast, slow, max_relative = 1e-12);
    }

    #[test]
    fn density_identity() {
        let ens = sample_paths(&SampleSpec::new(2, 0.5, 0.01, 2, 21), None).unwrap();
        let m = MollifierSpec::new(0.4).unwrap();
        let g = build_grid(2, 4.0, 41, Boundary::Periodic).unwrap();
        let dens = intersection_density(&ens, 0, 1, &m, &g).unwrap();
        let f = |x: &[f64]| (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp();
        let lhs: f64 =
            dens.values.iter().zip(g.weights()).enumerate().map(|(i, (l, w))| w * l * f(&g.position(i)[..2])).sum();
        let inv = m.inv_norm(2);
        let conv = |z: &[f64]| -> f64 {
            (0..g.node_count())
                .map(|i| {
                    let x = g.position(i);
                    let r2 = (x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2);
                    g.weights()[i] * f(&x[..2]) * m.eval_r2(r2, inv)
                })
                .sum()
        };
        let rhs = pair_average(&ens, 0, 1, conv).unwrap();
        assert!((lhs - rhs).abs() < 1e-6 * rhs.abs().max(1e-3), "{lhs} {rhs}");
    }

    #[test]
    fn probe_zero_function() {
        let ens = sample_paths(&SampleSpec::new(2, 1.0, 0.01, 4, 6), None).unwrap();
        let rows = mollification_error_probe(&ens, &[(0, 1), (2, 3)], |_| 0.0, &[0.8, 0.4, 0.3]).unwrap();
        assert!(rows.iter().all(|r| r.mean_abs_diff == 0.0));
        assert!(mollification_error_probe(&ens, &[(0, 1)], |_| 1.0, &[0.4, 0.8]).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(sample_paths(&SampleSpec::new(4, 1.0, 0.1, 1, 0), None).is_err());
        assert!(sample_paths(&SampleSpec::new(1, 1.0, 2.0, 1, 0), None).is_err());
        assert!(sample_paths(&SampleSpec::new(1, 1.0, 0.1, 0, 0), None).is_err());
        let mut spec = SampleSpec::new(1, 1.0, 0.1, 1, 0);
        spec.start = StartLaw::Stationary;
        assert!(matches!(sample_paths(&spec, None), Err(Error::MissingGuide)));
    }
}
