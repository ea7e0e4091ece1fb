//! Radix-2 FFT in one and two dimensions, unitary (QFT-normalized) variants,
//! frequency centering and the ramp filter.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Kernel `e^{-2πi kn/m}`.
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    /// No scaling forward, `1/m` on the inverse.
    Unnormalized,
    /// `1/sqrt(m)` both ways.
    Unitary,
}

/// Row-major complex 2D array in standard DFT ordering, or centered when
/// `centered` is set (zero frequency at index `m/2` along both axes).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    centered: bool,
}

impl ComplexField {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "field data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(ComplexField { rows, cols, data, centered: false })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexField {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
            centered: false,
        }
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    /// Applies `f` to every column (a strided 1D slice of length `rows`).
    fn map_columns(&mut self, mut f: impl FnMut(&mut [Complex64]) -> Result<()>) -> Result<()> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                buf[r] = self.data[r * self.cols + c];
            }
            f(&mut buf)?;
            for r in 0..self.rows {
                self.data[r * self.cols + c] = buf[r];
            }
        }
        Ok(())
    }

    fn map_rows(&mut self, mut f: impl FnMut(&mut [Complex64]) -> Result<()>) -> Result<()> {
        if self.cols == 0 {
            return Ok(());
        }
        for row in self.data.chunks_exact_mut(self.cols) {
            f(row)?;
        }
        Ok(())
    }
}

/// Signed frequency of DFT bin `k` of length `m` in the centered convention,
/// in `[-m/2, m/2 - 1]`.
pub fn centered_frequency(k: usize, m: usize) -> i64 {
    if k < m.div_ceil(2) {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

/// Phase that re-references a DFT of samples at bin centers of `[-1, 1)`
/// to the physical origin: `e^{iπ k (m-1)/m}` for signed bin `k`.
///
/// Without it, a projection spectrum and an image spectrum disagree by a
/// direction-dependent phase and slices no longer line up off-axis.
pub fn origin_phase(k: i64, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, PI * k as f64 * (m as f64 - 1.0) / m as f64)
}

fn check_len(m: usize) -> Result<()> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::invalid(format!("transform length {m} is not a power of two")));
    }
    Ok(())
}

/// In-place iterative radix-2 Cooley-Tukey transform.
pub fn dft_in_place(v: &mut [Complex64], direction: Direction, norm: Norm) -> Result<()> {
    let m = v.len();
    check_len(m)?;
    let bits = m.trailing_zeros();
    if bits > 0 {
        for i in 0..m {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                v.swap(i, j);
            }
        }
    }
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= m {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for block in v.chunks_exact_mut(len) {
            let (lo, hi) = block.split_at_mut(half);
            for k in 0..half {
                let t = hi[k] * twiddles[k];
                hi[k] = lo[k] - t;
                lo[k] += t;
            }
        }
        len <<= 1;
    }
    let scale = match (norm, direction) {
        (Norm::Unitary, _) => 1.0 / (m as f64).sqrt(),
        (Norm::Unnormalized, Direction::Inverse) => 1.0 / m as f64,
        (Norm::Unnormalized, Direction::Forward) => 1.0,
    };
    if scale != 1.0 {
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(())
}

pub fn dft1d(v: &[Complex64], direction: Direction, norm: Norm) -> Result<Vec<Complex64>> {
    let mut out = v.to_vec();
    dft_in_place(&mut out, direction, norm)?;
    Ok(out)
}

/// Transform along the first axis (each column, length `rows`).
pub fn dft_along_rows_axis(field: &ComplexField, direction: Direction, norm: Norm) -> Result<ComplexField> {
    check_len(field.rows)?;
    let mut out = field.clone();
    out.map_columns(|col| dft_in_place(col, direction, norm))?;
    Ok(out)
}

/// Transform along the second axis (each row, length `cols`).
pub fn dft_along_cols_axis(field: &ComplexField, direction: Direction, norm: Norm) -> Result<ComplexField> {
    check_len(field.cols)?;
    let mut out = field.clone();
    out.map_rows(|row| dft_in_place(row, direction, norm))?;
    Ok(out)
}

/// Separable 2D transform: every row, then every column.
pub fn dft2d(field: &ComplexField, direction: Direction, norm: Norm) -> Result<ComplexField> {
    check_len(field.rows)?;
    check_len(field.cols)?;
    let rows_done = dft_along_cols_axis(field, direction, norm)?;
    dft_along_rows_axis(&rows_done, direction, norm)
}

/// Cyclic shift by `floor(m/2)`: index `i` moves to `(i + m/2) mod m`.
pub fn shift_slice<T: Copy>(v: &mut [T]) {
    let m = v.len();
    v.rotate_right(m / 2);
}

pub fn unshift_slice<T: Copy>(v: &mut [T]) {
    let m = v.len();
    v.rotate_left(m / 2);
}

/// Moves the zero frequency to the center along both axes.
pub fn fftshift(field: &ComplexField) -> ComplexField {
    let mut out = field.clone();
    out.map_rows(|r| {
        shift_slice(r);
        Ok(())
    })
    .unwrap();
    out.map_columns(|c| {
        shift_slice(c);
        Ok(())
    })
    .unwrap();
    out.centered = !field.centered;
    out
}

pub fn ifftshift(field: &ComplexField) -> ComplexField {
    let mut out = field.clone();
    out.map_rows(|r| {
        unshift_slice(r);
        Ok(())
    })
    .unwrap();
    out.map_columns(|c| {
        unshift_slice(c);
        Ok(())
    })
    .unwrap();
    out.centered = !field.centered;
    out
}

/// Ramp filter `|ν_k|`, `ν_k` in cycles per sample, applied along the first
/// axis of a sinogram spectrum (rows are ρ-frequency bins, columns angles).
pub fn ramp_filter(sino_spectrum: &ComplexField) -> Result<ComplexField> {
    if sino_spectrum.centered {
        return Err(Error::invalid("ramp filter expects standard DFT ordering"));
    }
    let m = sino_spectrum.rows;
    let mut out = sino_spectrum.clone();
    for k in 0..m {
        let nu = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 } / m as f64;
        let w = nu.abs();
        for c in 0..out.cols {
            out.data[k * out.cols + c] *= w;
        }
    }
    Ok(out)
}

pub fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_vec(m: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// O(m²) oracle.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let m = x.len();
        (0..m)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(n, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * n) as f64 / m as f64))
                    .sum()
            })
            .collect()
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_transforms_to_constant() {
        let mut e0 = vec![c(0.0); 8];
        e0[0] = c(1.0);
        let un = dft1d(&e0, Direction::Forward, Norm::Unnormalized).unwrap();
        assert!(un.iter().all(|v| (v - c(1.0)).norm() < 1e-15));
        let u = dft1d(&e0, Direction::Forward, Norm::Unitary).unwrap();
        let s = 1.0 / 8f64.sqrt();
        assert!(u.iter().all(|v| (v - c(s)).norm() < 1e-15));
    }

    #[test]
    fn constant_transforms_to_dc() {
        let out = dft1d(&[c(1.0); 4], Direction::Forward, Norm::Unnormalized).unwrap();
        assert!(max_abs_diff(&out, &[c(4.0), c(0.0), c(0.0), c(0.0)]) < 1e-15);
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        assert!(matches!(
            dft1d(&[c(1.0); 6], Direction::Forward, Norm::Unitary),
            Err(Error::InvalidArgument(_))
        ));
        assert!(dft1d(&[], Direction::Forward, Norm::Unitary).is_err());
    }

    #[test]
    fn matches_naive_dft() {
        for m in [1, 2, 4, 16, 128] {
            let x = random_vec(m, m as u64);
            let fast = dft1d(&x, Direction::Forward, Norm::Unnormalized).unwrap();
            assert!(max_abs_diff(&fast, &naive_dft(&x)) < 1e-11 * m as f64);
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        for norm in [Norm::Unnormalized, Norm::Unitary] {
            for seed in 0..5 {
                let x = random_vec(64, seed);
                let y = dft1d(&x, Direction::Forward, norm).unwrap();
                let back = dft1d(&y, Direction::Inverse, norm).unwrap();
                assert!(max_abs_diff(&x, &back) < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_and_unitarity() {
        let x = random_vec(256, 3);
        let nx = l2_norm(&x);
        let un = dft1d(&x, Direction::Forward, Norm::Unnormalized).unwrap();
        let rel = (l2_norm(&un).powi(2) - 256.0 * nx * nx).abs() / (256.0 * nx * nx);
        assert!(rel < 1e-10);
        let u = dft1d(&x, Direction::Forward, Norm::Unitary).unwrap();
        assert!((l2_norm(&u) - nx).abs() / nx < 1e-12);
    }

    #[test]
    fn two_d_delta_and_inverse() {
        let mut f = ComplexField::zeros(8, 16);
        f.data_mut()[0] = c(1.0);
        let s = dft2d(&f, Direction::Forward, Norm::Unnormalized).unwrap();
        assert!(s.data().iter().all(|v| (v - c(1.0)).norm() < 1e-15));

        let g = ComplexField::new(16, 8, random_vec(128, 11)).unwrap();
        for norm in [Norm::Unnormalized, Norm::Unitary] {
            let back = dft2d(
                &dft2d(&g, Direction::Forward, norm).unwrap(),
                Direction::Inverse,
                norm,
            )
            .unwrap();
            assert!(max_abs_diff(back.data(), g.data()) < 1e-12);
        }
    }

    #[test]
    fn two_d_is_rows_then_columns() {
        let g = ComplexField::new(8, 4, random_vec(32, 5)).unwrap();
        let full = dft2d(&g, Direction::Forward, Norm::Unitary).unwrap();
        let mut manual = g.data().to_vec();
        for row in manual.chunks_exact_mut(4) {
            let t = dft1d(row, Direction::Forward, Norm::Unitary).unwrap();
            row.copy_from_slice(&t);
        }
        for col in 0..4 {
            let v: Vec<_> = (0..8).map(|r| manual[r * 4 + col]).collect();
            let t = dft1d(&v, Direction::Forward, Norm::Unitary).unwrap();
            for r in 0..8 {
                manual[r * 4 + col] = t[r];
            }
        }
        assert_eq!(full.data(), &manual[..]);
    }

    #[test]
    fn shift_examples() {
        let mut v = ['a', 'b', 'c', 'd'];
        shift_slice(&mut v);
        assert_eq!(v, ['c', 'd', 'a', 'b']);
        shift_slice(&mut v);
        assert_eq!(v, ['a', 'b', 'c', 'd']);

        let mut delta = vec![0; 8];
        delta[0] = 1;
        shift_slice(&mut delta);
        assert_eq!(delta[4], 1);
    }

    #[test]
    fn fftshift_toggles_flag_and_inverts() {
        let g = ComplexField::new(4, 8, random_vec(32, 1)).unwrap();
        let s = fftshift(&g);
        assert!(s.is_centered());
        assert_eq!(s.get(2, 4), g.get(0, 0));
        let back = ifftshift(&s);
        assert!(!back.is_centered());
        assert_eq!(back, g);
    }

    #[test]
    fn centered_frequency_convention() {
        let f: Vec<i64> = (0..8).map(|k| centered_frequency(k, 8)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }

    #[test]
    fn ramp_annihilates_dc() {
        let mut f = ComplexField::zeros(8, 3);
        for c0 in 0..3 {
            f.data_mut()[c0] = c(2.0);
        }
        let out = ramp_filter(&f).unwrap();
        assert!(out.data().iter().all(|v| v.norm() == 0.0));

        // constant projection: filtered row sums to zero
        let flat = ComplexField::from_real(16, 1, &[3.0; 16]).unwrap();
        let spec = dft_along_rows_axis(&flat, Direction::Forward, Norm::Unnormalized).unwrap();
        let back = dft_along_rows_axis(&ramp_filter(&spec).unwrap(), Direction::Inverse, Norm::Unnormalized)
            .unwrap();
        let total: Complex64 = back.data().iter().sum();
        assert!(total.norm() < 1e-12);
    }

    #[test]
    fn ramp_twice_is_nu_squared() {
        let g = ComplexField::new(16, 2, random_vec(32, 9)).unwrap();
        let twice = ramp_filter(&ramp_filter(&g).unwrap()).unwrap();
        for k in 0..16 {
            let nu = if k <= 8 { k as f64 } else { k as f64 - 16.0 } / 16.0;
            for col in 0..2 {
                assert!((twice.get(k, col) - g.get(k, col) * nu * nu).norm() < 1e-15);
            }
        }
        assert!(ramp_filter(&fftshift(&g)).is_err());
    }

    proptest! {
        #[test]
        fn unitary_preserves_norm(bits in 0u32..9, seed in any::<u64>()) {
            let x = random_vec(1 << bits, seed);
            let y = dft1d(&x, Direction::Forward, Norm::Unitary).unwrap();
            prop_assert!((l2_norm(&y) - l2_norm(&x)).abs() <= 1e-12 * l2_norm(&x).max(1e-300));
        }

        #[test]
        fn shift_then_unshift_is_identity(len in 1usize..40) {
            let orig: Vec<usize> = (0..len).collect();
            let mut v = orig.clone();
            shift_slice(&mut v);
            unshift_slice(&mut v);
            prop_assert_eq!(v, orig);
        }
    }
}
