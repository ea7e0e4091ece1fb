//! Parallel-beam forward projection and unfiltered backprojection.
//!
//! Radial offsets sit at bin centers `ρ_i = -1 + (i + 0.5) * 2/n_rho` and
//! angles at `θ_j = j * π/n_theta`, so `[0, π)` is covered once. Objects are
//! expected to live inside the unit disk.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fileio;
use crate::grids::ImageGrid;

/// Line integrals `f(ρ_i, θ_j)`, stored ρ-major: `data[i * n_theta + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    n_rho: usize,
    n_theta: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_rho: usize, n_theta: usize, data: Vec<f64>) -> Result<Self> {
        if n_rho == 0 || n_theta == 0 {
            return Err(Error::invalid("sinogram dimensions must be positive"));
        }
        if data.len() != n_rho * n_theta {
            return Err(Error::invalid(format!(
                "sinogram data has {} values, expected {n_rho}x{n_theta}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sinogram contains non-finite values"));
        }
        Ok(Sinogram { n_rho, n_theta, data })
    }

    pub fn zeros(n_rho: usize, n_theta: usize) -> Self {
        Sinogram { n_rho, n_theta, data: vec![0.0; n_rho * n_theta] }
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_theta + j]
    }

    pub fn rho_step(&self) -> f64 {
        2.0 / self.n_rho as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.rho_step()
    }

    pub fn theta_step(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.theta_step()
    }

    /// Projection at angle index `j`, as a length-`n_rho` vector.
    pub fn projection(&self, j: usize) -> Vec<f64> {
        (0..self.n_rho).map(|i| self.get(i, j)).collect()
    }

    /// Linear interpolation in ρ, zero beyond the outermost samples.
    pub fn sample_rho(&self, rho: f64, j: usize) -> f64 {
        let u = (rho + 1.0) / self.rho_step() - 0.5;
        let i0 = u.floor();
        let w = u - i0;
        let i0 = i0 as i64;
        let at = |i: i64| {
            if i < 0 || i >= self.n_rho as i64 {
                0.0
            } else {
                self.get(i as usize, j)
            }
        };
        (1.0 - w) * at(i0) + w * at(i0 + 1)
    }
}

/// Samples each line `x cosθ + y sinθ = ρ` at step `h = 1/n` over
/// `s ∈ [-√2, √2]` with bilinear image lookup, summed times `h`.
pub fn forward_radon(img: &ImageGrid, n_rho: usize, n_theta: usize) -> Result<Sinogram> {
    if n_rho == 0 || n_theta == 0 {
        return Err(Error::invalid("n_rho and n_theta must be >= 1"));
    }
    let mut sino = Sinogram::zeros(n_rho, n_theta);
    let h = 1.0 / img.side() as f64;
    let half_steps = (std::f64::consts::SQRT_2 / h).ceil() as i64;
    for j in 0..n_theta {
        let (sin_t, cos_t) = sino.theta(j).sin_cos();
        for i in 0..n_rho {
            let rho = sino.rho(i);
            let (bx, by) = (rho * cos_t, rho * sin_t);
            let mut acc = 0.0;
            for k in -half_steps..=half_steps {
                let s = k as f64 * h;
                acc += img.sample_bilinear(bx - s * sin_t, by + s * cos_t);
            }
            sino.data[i * n_theta + j] = acc * h;
        }
    }
    Ok(sino)
}

/// `G(x, y) = (π/n_theta) Σ_j f(x cosθ_j + y sinθ_j, θ_j)`.
pub fn backproject(sino: &Sinogram, n: usize) -> Result<ImageGrid> {
    if n == 0 {
        return Err(Error::invalid("output side must be positive"));
    }
    let trig: Vec<(f64, f64)> = (0..sino.n_theta).map(|j| sino.theta(j).sin_cos()).collect();
    let scale = PI / sino.n_theta as f64;
    Ok(ImageGrid::from_fn(n, |x, y| {
        trig.iter()
            .enumerate()
            .map(|(j, &(s, c))| sino.sample_rho(x * c + y * s, j))
            .sum::<f64>()
            * scale
    }))
}

pub fn encode_sinogram<W: Write>(sino: &Sinogram, w: &mut W) -> Result<()> {
    writeln!(w, "RSIN1 {} {}", sino.n_rho, sino.n_theta)?;
    fileio::write_f64s(w, sino.data.iter().copied())
}

pub fn decode_sinogram<R: Read>(r: &mut R) -> Result<Sinogram> {
    let fields = fileio::read_header(r)?;
    if fields.len() != 3 || fields[0] != "RSIN1" {
        return Err(Error::format("expected `RSIN1 <n_rho> <n_theta>` header"));
    }
    let n_rho = fileio::parse_usize(&fields[1], "n_rho")?;
    let n_theta = fileio::parse_usize(&fields[2], "n_theta")?;
    let data = fileio::read_f64s(r, n_rho * n_theta)?;
    Sinogram::new(n_rho, n_theta, data).map_err(|e| Error::format(e.to_string()))
}

pub fn write_sinogram(sino: &Sinogram, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_sinogram(sino, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    decode_sinogram(&mut BufReader::new(File::open(path)?))
}
