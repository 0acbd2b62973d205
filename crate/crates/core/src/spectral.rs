//! Exact eigenbases of the 1D discrete Laplacian and the operators built from them.
//!
//! The d-dimensional Laplacian on a tensor grid is a Kronecker sum of identical
//! 1D operators, so heat kernels and resolvents factor axis by axis.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid};

/// Orthonormal (unweighted) eigenbasis of the 1D second difference on one axis.
#[derive(Debug, Clone)]
pub struct AxisBasis {
    pub n: usize,
    /// `vectors[k]` is the k-th eigenvector, length n.
    pub vectors: Vec<Vec<f64>>,
    /// Eigenvalues of the unscaled Δ_h (nonpositive).
    pub eigenvalues: Vec<f64>,
    /// False for the two Dirichlet boundary unit vectors, which are not eigenmodes.
    pub active: Vec<bool>,
}

impl AxisBasis {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.points_per_axis;
        let h = grid.spacing;
        let mut vectors = Vec::with_capacity(n);
        let mut eigenvalues = Vec::with_capacity(n);
        let mut active = Vec::with_capacity(n);
        match grid.boundary {
            Boundary::Periodic => {
                let nf = n as f64;
                let eig = |k: usize| -4.0 / (h * h) * (PI * k as f64 / nf).sin().powi(2);
                vectors.push(vec![1.0 / nf.sqrt(); n]);
                eigenvalues.push(0.0);
                for k in 1..=(n - 1) / 2 {
                    let c = (2.0 / nf).sqrt();
                    let th = 2.0 * PI * k as f64 / nf;
                    vectors.push((0..n).map(|j| c * (th * j as f64).cos()).collect());
                    vectors.push((0..n).map(|j| c * (th * j as f64).sin()).collect());
                    eigenvalues.push(eig(k));
                    eigenvalues.push(eig(k));
                }
                if n % 2 == 0 {
                    vectors.push((0..n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / nf.sqrt()).collect());
                    eigenvalues.push(eig(n / 2));
                }
                active = vec![true; n];
            }
            Boundary::Dirichlet => {
                let m1 = (n - 1) as f64;
                let c = (2.0 / m1).sqrt();
                for k in 1..n - 1 {
                    let th = PI * k as f64 / m1;
                    let mut v: Vec<f64> = (0..n).map(|j| c * (th * j as f64).sin()).collect();
                    v[0] = 0.0;
                    v[n - 1] = 0.0;
                    vectors.push(v);
                    eigenvalues.push(-4.0 / (h * h) * (0.5 * th).sin().powi(2));
                    active.push(true);
                }
                for j in [0, n - 1] {
                    let mut v = vec![0.0; n];
                    v[j] = 1.0;
                    vectors.push(v);
                    eigenvalues.push(0.0);
                    active.push(false);
                }
            }
        }
        AxisBasis { n, vectors, eigenvalues, active }
    }

    /// Dense n×n matrix Σ_k g(λ_k) q_k q_kᵀ over active modes, row-major.
    pub fn function_matrix(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for ((q, &lam), &act) in self.vectors.iter().zip(&self.eigenvalues).zip(&self.active) {
            if !act {
                continue;
            }
            let s = g(lam);
            for i in 0..n {
                let si = s * q[i];
                if si == 0.0 {
                    continue;
                }
                let row = &mut m[i * n..(i + 1) * n];
                for (r, &qj) in row.iter_mut().zip(q) {
                    *r += si * qj;
                }
            }
        }
        m
    }

    /// Rows are eigenvectors: coefficients = Qᵀ v.
    pub fn analysis_matrix(&self) -> Vec<f64> {
        self.vectors.iter().flat_map(|q| q.iter().copied()).collect()
    }

    /// Columns are eigenvectors: v = Q c.
    pub fn synthesis_matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for (k, q) in self.vectors.iter().enumerate() {
            for i in 0..n {
                m[i * n + k] = q[i];
            }
        }
        m
    }
}

/// Apply the dense n×n matrix `m` along `axis` of the node array `v`, in place.
pub fn apply_along_axis(grid: &Grid, m: &[f64], axis: usize, v: &mut [f64], line: &mut Vec<f64>) {
    let n = grid.points_per_axis;
    line.resize(2 * n, 0.0);
    let (src, dst) = line.split_at_mut(n);
    let stride = grid.stride(axis);
    let outer = v.len() / (n * stride);
    for o in 0..outer {
        for inner in 0..stride {
            let start = o * n * stride + inner;
            for i in 0..n {
                src[i] = v[start + i * stride];
            }
            for (i, d) in dst.iter_mut().enumerate() {
                let row = &m[i * n..(i + 1) * n];
                *d = row.iter().zip(src.iter()).map(|(a, b)| a * b).sum();
            }
            for i in 0..n {
                v[start + i * stride] = dst[i];
            }
        }
    }
}

/// An operator that is the same dense matrix applied along every axis.
#[derive(Debug, Clone)]
pub struct SeparableOperator {
    pub n: usize,
    pub matrix: Vec<f64>,
}

impl SeparableOperator {
    pub fn apply(&self, grid: &Grid, v: &mut [f64], scratch: &mut Vec<f64>) {
        for axis in 0..grid.dim {
            apply_along_axis(grid, &self.matrix, axis, v, scratch);
        }
    }
}

/// Transition matrix e^{t a Δ_h} of the grid random walk.
///
/// Entries are clamped at zero to remove roundoff; Dirichlet boundary rows and
/// columns vanish (killing).
pub fn heat_kernel(grid: &Grid, a: f64, t: f64) -> SeparableOperator {
    let basis = AxisBasis::new(grid);
    let mut matrix = basis.function_matrix(|lam| (t * a * lam).exp());
    matrix.iter_mut().for_each(|x| *x = x.max(0.0));
    SeparableOperator { n: basis.n, matrix }
}

/// Diagonalization of the full d-dimensional Laplacian through per-axis transforms.
#[derive(Debug, Clone)]
pub struct SpectralTransform {
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    /// Eigenvalue of Δ_h for every multi-index, in node order.
    pub eigenvalues: Vec<f64>,
    /// False if any axis index is an inactive (Dirichlet boundary) mode.
    pub active: Vec<bool>,
}

impl SpectralTransform {
    pub fn new(grid: &Grid) -> Self {
        let basis = AxisBasis::new(grid);
        let total = grid.node_count();
        let mut eigenvalues = vec![0.0; total];
        let mut active = vec![true; total];
        for idx in 0..total {
            let m = grid.multi_index(idx);
            for &k in &m[..grid.dim] {
                eigenvalues[idx] += basis.eigenvalues[k];
                active[idx] &= basis.active[k];
            }
        }
        SpectralTransform {
            analysis: basis.analysis_matrix(),
            synthesis: basis.synthesis_matrix(),
            eigenvalues,
            active,
        }
    }

    /// v ← Σ g(λ) q qᵀ v over active multi-modes.
    pub fn apply_function(&self, grid: &Grid, v: &mut [f64], g: impl Fn(f64) -> f64) {
        let mut scratch = Vec::new();
        for axis in 0..grid.dim {
            apply_along_axis(grid, &self.analysis, axis, v, &mut scratch);
        }
        for ((c, &lam), &act) in v.iter_mut().zip(&self.eigenvalues).zip(&self.active) {
            *c = if act { *c * g(lam) } else { 0.0 };
        }
        for axis in 0..grid.dim {
            apply_along_axis(grid, &self.synthesis, axis, v, &mut scratch);
        }
    }

    /// (I − c Δ_h)⁻¹ v.
    pub fn resolvent(&self, grid: &Grid, c: f64, v: &mut [f64]) {
        self.apply_function(grid, v, |lam| 1.0 / (1.0 - c * lam));
    }
}

/// Normalized lowest Dirichlet or periodic eigenmode of the bare walk, as a node array.
///
/// Periodic: constant. Dirichlet: product of half-period sines vanishing on the faces.
pub fn ground_mode(grid: &Grid) -> Vec<f64> {
    let n = grid.points_per_axis;
    let total = grid.node_count();
    match grid.boundary {
        Boundary::Periodic => vec![1.0; total],
        Boundary::Dirichlet => (0..total)
            .map(|idx| {
                let m = grid.multi_index(idx);
                m[..grid.dim].iter().map(|&i| (PI * i as f64 / (n - 1) as f64).sin()).product::<f64>()
            })
            .collect(),
    }
}

/// Schrödinger-type operator -aΔ_h + W restricted to the nodes where `allowed` holds.
pub struct MaskedHamiltonian<'a> {
    pub grid: &'a Grid,
    pub a: f64,
    pub potential: &'a [f64],
    pub allowed: &'a [bool],
}

impl MaskedHamiltonian<'_> {
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        crate::grid::laplacian_into(self.grid, v, out);
        for i in 0..v.len() {
            out[i] = if self.allowed[i] { -self.a * out[i] + self.potential[i] * v[i] } else { 0.0 };
        }
    }

    fn project(&self, v: &mut [f64]) {
        for (x, &ok) in v.iter_mut().zip(self.allowed) {
            if !ok {
                *x = 0.0;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalue: f64,
    /// Unit Euclidean norm; callers rescale to their quadrature.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Lowest eigenpair of H by inverse iteration, with each solve done by conjugate gradients.
///
/// A shift of -1 keeps the shifted operator positive definite even when W ≡ 0
/// on a periodic box.
pub fn inverse_power_iteration(h: &MaskedHamiltonian<'_>, tol: f64, max_iter: usize) -> Result<EigenResult> {
    let total = h.potential.len();
    let shift = 1.0;
    let mut x = ground_mode(h.grid);
    h.project(&mut x);
    let nrm = dot(&x, &x).sqrt();
    if nrm == 0.0 {
        return Err(Error::param("allowed", "no admissible nodes"));
    }
    x.iter_mut().for_each(|v| *v /= nrm);
    let mut hx = vec![0.0; total];
    let mut lam = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        // Solve (H + shift) y = x.
        let y = cg_solve(h, shift, &x, 1e-13, 20 * total.max(100))?;
        let ny = dot(&y, &y).sqrt();
        x = y.into_iter().map(|v| v / ny).collect();
        h.apply(&x, &mut hx);
        let new_lam = dot(&x, &hx);
        let mut r = hx.clone();
        axpy(-new_lam, &x, &mut r);
        residual = dot(&r, &r).sqrt();
        let change = (new_lam - lam).abs();
        lam = new_lam;
        if residual < tol || change < 1e-15 * lam.abs().max(1.0) && residual < tol.sqrt() {
            return Ok(EigenResult { eigenvalue: lam, vector: x, iterations: it, residual, converged: true });
        }
    }
    Ok(EigenResult { eigenvalue: lam, vector: x, iterations: max_iter, residual, converged: false })
}

fn cg_solve(h: &MaskedHamiltonian<'_>, shift: f64, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    h.project(&mut r);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let stop = rel_tol * rel_tol * rr;
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        h.apply(&p, &mut ap);
        axpy(shift, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonFinite("conjugate gradient curvature"));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(x)
}

/// Lowest eigenpair of a symmetric operator by the locally optimal block-free CG
/// recurrence (Rayleigh-Ritz on span{x, r, p}).
///
/// The Rayleigh quotient never increases from one iterate to the next (up to
/// roundoff). Iteration stops early when the residual stagnates at the
/// roundoff floor; `converged` then reports whether `tol` was met.
pub fn lowest_eigenpair(
    apply: impl Fn(&[f64], &mut [f64]),
    allowed: &[bool],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EigenResult> {
    let n = x0.len();
    let project = |v: &mut [f64]| {
        for (x, &ok) in v.iter_mut().zip(allowed) {
            if !ok {
                *x = 0.0;
            }
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let nx = dot(&x, &x).sqrt();
    if !(nx > 0.0) {
        return Err(Error::param("x0", "initial vector vanishes on the admissible nodes"));
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut hx = vec![0.0; n];
    apply(&x, &mut hx);
    let mut lam = dot(&x, &hx);
    let mut p: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut r = vec![0.0; n];
    let mut hr = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let (mut best, mut best_it) = (f64::INFINITY, 0);
    for it in 0..max_iter {
        r.copy_from_slice(&hx);
        axpy(-lam, &x, &mut r);
        project(&mut r);
        residual = dot(&r, &r).sqrt();
        if residual < tol {
            return Ok(EigenResult { eigenvalue: lam, vector: x, iterations: it, residual, converged: true });
        }
        // Stop once roundoff dominates: no 1% gain over the last 25 iterations.
        if residual < 0.99 * best {
            best = residual;
            best_it = it;
        } else if it - best_it > 25 {
            return Ok(EigenResult { eigenvalue: lam, vector: x, iterations: it, residual, converged: false });
        }
        // Orthonormal basis of span{x, r, p} together with H applied to each.
        let mut basis: Vec<(Vec<f64>, Vec<f64>)> = vec![(x.clone(), hx.clone())];
        let mut candidates = vec![r.clone()];
        if let Some((pv, _)) = &p {
            candidates.push(pv.clone());
        }
        for mut c in candidates {
            for _ in 0..2 {
                for (b, _) in &basis {
                    let s = dot(b, &c);
                    axpy(-s, b, &mut c);
                }
            }
            let nc = dot(&c, &c).sqrt();
            if nc < 1e-14 {
                continue;
            }
            c.iter_mut().for_each(|v| *v /= nc);
            apply(&c, &mut hr);
            basis.push((c, hr.clone()));
        }
        let k = basis.len();
        // Shifted by the current Rayleigh quotient so the small couplings are
        // resolved relative to zero rather than to λ.
        let m = DMatrix::from_fn(k, k, |i, j| {
            let hij = 0.5 * (dot(&basis[i].0, &basis[j].1) + dot(&basis[j].0, &basis[i].1));
            if i == j {
                hij - lam
            } else {
                hij
            }
        });
        let eig = SymmetricEigen::new(m);
        let (imin, _) =
            eig.eigenvalues
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let c = eig.eigenvectors.column(imin);
        let new_lam = eig.eigenvalues[imin] + lam;
        if !new_lam.is_finite() {
            return Err(Error::NonFinite("Rayleigh-Ritz eigenvalue"));
        }
        let mut nx = vec![0.0; n];
        let mut pv = vec![0.0; n];
        let mut hp = vec![0.0; n];
        for i in 0..k {
            axpy(c[i], &basis[i].0, &mut nx);
            if i > 0 {
                axpy(c[i], &basis[i].0, &mut pv);
                axpy(c[i], &basis[i].1, &mut hp);
            }
        }
        let sign = if c[0] < 0.0 { -1.0 } else { 1.0 };
        let norm = dot(&nx, &nx).sqrt() * sign;
        nx.iter_mut().for_each(|v| *v /= norm);
        x = nx;
        // Recompute rather than recombine, so Hx does not drift from x.
        apply(&x, &mut hx);
        lam = dot(&x, &hx);
        p = Some((pv, hp));
    }
    Ok(EigenResult { eigenvalue: lam, vector: x, iterations: max_iter, residual, converged: false })
}
