//! Sparse polar-to-Cartesian interpolation in the frequency plane.
//!
//! Both grids use frequency bin units: a centered Cartesian spectrum of side
//! `n` has nodes at integer `(kx, ky) ∈ [-n/2, n/2)²`, and a centered polar
//! spectrum has radial nodes at integer `k ∈ [-n_rho/2, n_rho/2)` on angles
//! `θ_j = jπ/n_theta`. With the image and the radial axis both spanning
//! length 2, one bin is the same physical frequency on either grid.
//!
//! Polar columns are ordered `c * n_theta + j`, with `c = k + n_rho/2`, which
//! matches a ρ-major sinogram after a centering shift along ρ. Cartesian rows
//! are ordered `cy * n + cx` with `c = k + n/2`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterpolationScheme {
    NearestNeighbor,
    Simplex,
    Bilinear,
}

impl InterpolationScheme {
    pub const ALL: [InterpolationScheme; 3] = [
        InterpolationScheme::NearestNeighbor,
        InterpolationScheme::Simplex,
        InterpolationScheme::Bilinear,
    ];

    /// Maximum entries per row.
    pub fn sparsity(self) -> usize {
        match self {
            InterpolationScheme::NearestNeighbor => 1,
            InterpolationScheme::Simplex => 3,
            InterpolationScheme::Bilinear => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InterpolationScheme::NearestNeighbor => "nearest",
            InterpolationScheme::Simplex => "simplex",
            InterpolationScheme::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for InterpolationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpolationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" | "nearest-neighbor" => Ok(InterpolationScheme::NearestNeighbor),
            "simplex" => Ok(InterpolationScheme::Simplex),
            "bilinear" => Ok(InterpolationScheme::Bilinear),
            other => Err(Error::invalid(format!("unknown interpolation scheme {other:?}"))),
        }
    }
}

/// Polar sample layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarGrid {
    pub n_rho: usize,
    pub n_theta: usize,
}

impl PolarGrid {
    pub fn theta_step(&self) -> f64 {
        PI / self.n_theta as f64
    }

    /// Largest radius at which every bracketing node exists for both signs.
    pub fn max_radius(&self) -> f64 {
        (self.n_rho / 2) as f64 - 1.0
    }

    /// Column of node `(k, j)`. `j == n_theta` wraps to `(-k, 0)`.
    pub fn column(&self, k: i64, j: i64) -> Option<usize> {
        let (k, j) = if j >= self.n_theta as i64 { (-k, j - self.n_theta as i64) } else { (k, j) };
        let half = (self.n_rho / 2) as i64;
        if j < 0 || j >= self.n_theta as i64 || k < -half || k >= self.n_rho as i64 - half {
            return None;
        }
        Some((k + half) as usize * self.n_theta + j as usize)
    }

    /// Inverse of [`column`](Self::column).
    pub fn node(&self, column: usize) -> (i64, usize) {
        let c = column / self.n_theta;
        (c as i64 - (self.n_rho / 2) as i64, column % self.n_theta)
    }
}

/// Converts a Cartesian frequency to `(k, θ)` with `θ ∈ [0, π)`, flipping
/// the sign of `k` when the angle is folded back by π.
pub fn fold_to_half_plane(kx: f64, ky: f64) -> (f64, f64) {
    let r = kx.hypot(ky);
    let theta = ky.atan2(kx);
    if theta < 0.0 {
        (-r, theta + PI)
    } else if theta >= PI {
        (-r, theta - PI)
    } else {
        (r, theta)
    }
}

/// Interpolation entries `(column, weight)` for the polar point `(k, θ)`,
/// `θ ∈ [0, π)`. Zero-weight nodes are dropped and duplicate columns merged.
/// `None` when a node with nonzero weight lies off the grid.
pub fn polar_weights(
    scheme: InterpolationScheme,
    grid: PolarGrid,
    k: f64,
    theta: f64,
) -> Option<Vec<(usize, f64)>> {
    let tpos = theta / grid.theta_step();
    let tl = (tpos.floor() as i64).clamp(0, grid.n_theta as i64);
    let wt = (tpos - tl as f64).clamp(0.0, 1.0);
    let kl = k.floor() as i64;
    let wk = (k - kl as f64).clamp(0.0, 1.0);

    let nodes: Vec<(i64, i64, f64)> = match scheme {
        InterpolationScheme::Bilinear => vec![
            (kl, tl, (1.0 - wt) * (1.0 - wk)),
            (kl + 1, tl, (1.0 - wt) * wk),
            (kl, tl + 1, wt * (1.0 - wk)),
            (kl + 1, tl + 1, wt * wk),
        ],
        InterpolationScheme::NearestNeighbor => {
            // ties go to the lower index
            let kk = if wk > 0.5 { kl + 1 } else { kl };
            let tt = if wt > 0.5 { tl + 1 } else { tl };
            vec![(kk, tt, 1.0)]
        }
        InterpolationScheme::Simplex => {
            // cell split along the (θ_l, k_l) -> (θ_h, k_h) diagonal
            if wk <= wt {
                vec![(kl, tl, 1.0 - wt), (kl, tl + 1, wt - wk), (kl + 1, tl + 1, wk)]
            } else {
                vec![(kl, tl, 1.0 - wk), (kl + 1, tl, wk - wt), (kl + 1, tl + 1, wt)]
            }
        }
    };

    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(nodes.len());
    for (kn, tn, w) in nodes {
        if w == 0.0 {
            continue;
        }
        let col = grid.column(kn, tn)?;
        match entries.iter_mut().find(|(c, _)| *c == col) {
            Some(e) => e.1 += w,
            None => entries.push((col, w)),
        }
    }
    entries.sort_by_key(|e| e.0);
    Some(entries)
}

/// Row-sparse (CSR) real matrix from a centered polar spectrum to a centered
/// Cartesian spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInterpMatrix {
    side: usize,
    polar: PolarGrid,
    scheme: InterpolationScheme,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
}

pub fn build_interp_matrix(
    n: usize,
    n_rho: usize,
    n_theta: usize,
    scheme: InterpolationScheme,
) -> Result<SparseInterpMatrix> {
    if n < 2 || n_rho < 2 || n_theta < 1 || !n.is_multiple_of(2) || !n_rho.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "interpolation grids need even n, n_rho >= 2 and n_theta >= 1 (got {n}, {n_rho}, {n_theta})"
        )));
    }
    let polar = PolarGrid { n_rho, n_theta };
    let half = (n / 2) as i64;
    let r_max = polar.max_radius();
    let mut row_ptr = Vec::with_capacity(n * n + 1);
    let mut col_idx = Vec::new();
    let mut weights = Vec::new();
    row_ptr.push(0);
    for cy in 0..n as i64 {
        for cx in 0..n as i64 {
            let (kx, ky) = ((cx - half) as f64, (cy - half) as f64);
            let (k, theta) = fold_to_half_plane(kx, ky);
            if k.abs() <= r_max {
                if let Some(entries) = polar_weights(scheme, polar, k, theta) {
                    for (c, w) in entries {
                        col_idx.push(c);
                        weights.push(w);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(SparseInterpMatrix { side: n, polar, scheme, row_ptr, col_idx, weights })
}

impl SparseInterpMatrix {
    /// Builds a matrix directly from CSR parts; used for structural tests.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        for row in rows {
            for (c, w) in row {
                if c >= n_cols {
                    return Err(Error::invalid("column index out of range"));
                }
                col_idx.push(c);
                weights.push(w);
            }
            row_ptr.push(col_idx.len());
        }
        let n_rows = row_ptr.len() - 1;
        let side = (n_rows as f64).sqrt() as usize;
        Ok(SparseInterpMatrix {
            side,
            polar: PolarGrid { n_rho: n_cols, n_theta: 1 },
            scheme: InterpolationScheme::Bilinear,
            row_ptr,
            col_idx,
            weights,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.polar.n_rho * self.polar.n_theta
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn polar_grid(&self) -> PolarGrid {
        self.polar
    }

    pub fn scheme(&self) -> InterpolationScheme {
        self.scheme
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_cols() {
            return Err(Error::invalid(format!(
                "vector length {} does not match {} columns",
                x.len(),
                self.n_cols()
            )));
        }
        Ok((0..self.n_rows())
            .map(|i| self.row(i).map(|(c, w)| x[c] * w).sum())
            .collect())
    }

    /// `y = Aᵀ x` (`A` is real, so this is also `A†`).
    pub fn apply_transpose(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_rows() {
            return Err(Error::invalid(format!(
                "vector length {} does not match {} rows",
                x.len(),
                self.n_rows()
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.n_cols()];
        for (i, &xi) in x.iter().enumerate() {
            for (c, w) in self.row(i) {
                y[c] += xi * w;
            }
        }
        Ok(y)
    }

    fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, w)| x[c] * w).sum();
        }
    }

    fn apply_transpose_real(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (c, w) in self.row(i) {
                y[c] += xi * w;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_cols());
        for i in 0..self.n_rows() {
            for (c, w) in self.row(i) {
                m[(i, c)] += w;
            }
        }
        m
    }

    /// One `row col weight` triplet per line, sorted by `(row, col)`.
    pub fn write_triplets<W: Write>(&self, w: &mut W) -> Result<()> {
        for i in 0..self.n_rows() {
            for (c, v) in self.row(i) {
                writeln!(w, "{i} {c} {v}")?;
            }
        }
        Ok(())
    }
}

pub fn apply_interp(a: &SparseInterpMatrix, polar_spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    a.apply(polar_spectrum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurBound {
    pub max_row_abs_sum: f64,
    pub max_col_abs_sum: f64,
    /// `σ²(A) ≤ max_row_abs_sum * max_col_abs_sum`.
    pub sigma_sq_bound: f64,
}

pub fn schur_bound(a: &SparseInterpMatrix) -> SchurBound {
    let mut col_sums = vec![0.0f64; a.n_cols()];
    let mut max_row = 0.0f64;
    for i in 0..a.n_rows() {
        let mut r = 0.0;
        for (c, w) in a.row(i) {
            r += w.abs();
            col_sums[c] += w.abs();
        }
        max_row = max_row.max(r);
    }
    let max_col = col_sums.into_iter().fold(0.0, f64::max);
    SchurBound { max_row_abs_sum: max_row, max_col_abs_sum: max_col, sigma_sq_bound: max_row * max_col }
}

const POWER_ITERATION_CAP: usize = 100_000;
const POWER_ITERATION_SEED: u64 = 0x5eed_0f_a11;

/// Largest singular value by power iteration on `AᵀA`, stopping when the
/// Rayleigh quotient changes by less than `tol` relative.
pub fn max_singular_value(a: &SparseInterpMatrix, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..a.n_cols()).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut av = vec![0.0; a.n_rows()];
    let mut w = vec![0.0; a.n_cols()];
    normalize(&mut v);
    let mut prev = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        a.apply_real(&v, &mut av);
        a.apply_transpose_real(&av, &mut w);
        let rayleigh: f64 = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        if rayleigh <= 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - prev).abs() <= tol * rayleigh {
            return Ok(rayleigh.sqrt());
        }
        prev = rayleigh;
        std::mem::swap(&mut v, &mut w);
        normalize(&mut v);
    }
    Err(Error::NotConverged { iterations: POWER_ITERATION_CAP, last_estimate: prev.max(0.0).sqrt() })
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
