//! Classical reconstructions: direct Fourier-slice gridding and filtered
//! back-projection, plus image-quality metrics.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grids::ImageGrid;
use crate::interp::{build_interp_matrix, InterpolationScheme};
use crate::radon::{backproject, Sinogram};
use crate::spectral::{
    centered_frequency, dft2d, dft_in_place, origin_phase, ramp_filter, shift_slice, unshift_slice,
    ComplexField, Direction, Norm,
};

/// Centered, origin-referenced polar spectrum of a sinogram, laid out as
/// interpolation-matrix columns (`c * n_theta + j`). Unnormalized DFT.
///
/// With `apply_ramp`, each radial bin `k` is weighted by `|k| π / n_theta`,
/// the polar cell area measured in Cartesian cells.
pub fn polar_spectrum(sino: &Sinogram, apply_ramp: bool) -> Result<Vec<Complex64>> {
    let (m, nt) = (sino.n_rho(), sino.n_theta());
    let mut out = vec![Complex64::new(0.0, 0.0); m * nt];
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..nt {
        for (i, v) in col.iter_mut().enumerate() {
            *v = Complex64::new(sino.get(i, j), 0.0);
        }
        dft_in_place(&mut col, Direction::Forward, Norm::Unnormalized)?;
        for (k, v) in col.iter_mut().enumerate() {
            let ks = centered_frequency(k, m);
            *v *= origin_phase(ks, m);
            if apply_ramp {
                *v *= ks.abs() as f64 * PI / nt as f64;
            }
        }
        shift_slice(&mut col);
        for (c, v) in col.iter().enumerate() {
            out[c * nt + j] = *v;
        }
    }
    Ok(out)
}

/// Inverse of the Cartesian bookkeeping: removes the origin phase from a
/// centered `n x n` spectrum, uncenters it and applies an inverse 2D DFT.
pub fn centered_spectrum_to_image(spectrum: &[Complex64], n: usize, norm: Norm) -> Result<ComplexField> {
    if spectrum.len() != n * n {
        return Err(Error::invalid("spectrum length does not match n x n"));
    }
    let mut data = spectrum.to_vec();
    remove_cartesian_origin_phase(&mut data, n);
    for row in data.chunks_exact_mut(n) {
        unshift_slice(row);
    }
    let mut field = ComplexField::new(n, n, data)?;
    unshift_columns(&mut field);
    dft2d(&field, Direction::Inverse, norm)
}

/// Multiplies centered Cartesian bin `(kx, ky)` by the conjugate origin phase.
pub(crate) fn remove_cartesian_origin_phase(data: &mut [Complex64], n: usize) {
    let half = (n / 2) as i64;
    for (idx, v) in data.iter_mut().enumerate() {
        let (cy, cx) = ((idx / n) as i64, (idx % n) as i64);
        *v *= (origin_phase(cx - half, n) * origin_phase(cy - half, n)).conj();
    }
}

fn unshift_columns(field: &mut ComplexField) {
    let (rows, cols) = (field.rows(), field.cols());
    let data = field.data_mut();
    let mut buf = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            buf[r] = data[r * cols + c];
        }
        unshift_slice(&mut buf);
        for r in 0..rows {
            data[r * cols + c] = buf[r];
        }
    }
}

#[derive(Debug, Clone)]
pub struct FourierSliceOutput {
    pub image: ImageGrid,
    /// Complex image before taking the real part.
    pub complex_image: ComplexField,
    /// `‖Im‖₂ / ‖Re‖₂` of the complex image.
    pub imag_residual: f64,
}

/// 1D DFT over ρ, polar-to-Cartesian interpolation, inverse 2D DFT.
///
/// Scaled so the output approximates the source image in value: a unit
/// delta phantom comes back with unit total mass.
pub fn fourier_slice_reconstruct_detailed(
    sino: &Sinogram,
    n: usize,
    scheme: InterpolationScheme,
    apply_ramp: bool,
) -> Result<FourierSliceOutput> {
    if !n.is_power_of_two() || !sino.n_rho().is_power_of_two() {
        return Err(Error::invalid("Fourier-slice reconstruction needs power-of-two n and n_rho"));
    }
    let polar = polar_spectrum(sino, apply_ramp)?;
    let a = build_interp_matrix(n, sino.n_rho(), sino.n_theta(), scheme)?;
    // DFT2 ≈ P · Δρ / Δx² with Δρ = 2/n_rho, Δx = 2/n
    let scale = (n * n) as f64 / (2.0 * sino.n_rho() as f64);
    let cart: Vec<Complex64> = a.apply(&polar)?.into_iter().map(|v| v * scale).collect();
    let complex_image = centered_spectrum_to_image(&cart, n, Norm::Unnormalized)?;
    let re: Vec<f64> = complex_image.data().iter().map(|c| c.re).collect();
    let re_norm = re.iter().map(|v| v * v).sum::<f64>().sqrt();
    let im_norm = complex_image.data().iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    let imag_residual = if re_norm > 0.0 { im_norm / re_norm } else { 0.0 };
    Ok(FourierSliceOutput { image: ImageGrid::new(n, re)?, complex_image, imag_residual })
}

pub fn fourier_slice_reconstruct(
    sino: &Sinogram,
    n: usize,
    scheme: InterpolationScheme,
    apply_ramp: bool,
) -> Result<ImageGrid> {
    Ok(fourier_slice_reconstruct_detailed(sino, n, scheme, apply_ramp)?.image)
}

/// Ramp-filters each projection (zero-padded to twice its length to avoid
/// circular wrap), in physical frequency units.
pub fn filter_sinogram(sino: &Sinogram) -> Result<Sinogram> {
    let (m, nt) = (sino.n_rho(), sino.n_theta());
    if !m.is_power_of_two() {
        return Err(Error::invalid("filtered back-projection needs power-of-two n_rho"));
    }
    let padded = 2 * m;
    let mut field = ComplexField::zeros(padded, nt);
    for i in 0..m {
        for j in 0..nt {
            field.data_mut()[i * nt + j] = Complex64::new(sino.get(i, j), 0.0);
        }
    }
    let spec = crate::spectral::dft_along_rows_axis(&field, Direction::Forward, Norm::Unnormalized)?;
    let filtered = ramp_filter(&spec)?;
    let back = crate::spectral::dft_along_rows_axis(&filtered, Direction::Inverse, Norm::Unnormalized)?;
    // |ν| per sample -> per unit length
    let inv_step = 1.0 / sino.rho_step();
    let data = (0..m)
        .flat_map(|i| (0..nt).map(move |j| (i, j)))
        .map(|(i, j)| back.get(i, j).re * inv_step)
        .collect();
    Sinogram::new(m, nt, data)
}

pub fn fbp_reconstruct(sino: &Sinogram, n: usize) -> Result<ImageGrid> {
    backproject(&filter_sinogram(sino)?, n)
}

fn check_dims(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.side() != b.side() {
        return Err(Error::invalid(format!(
            "image sizes differ: {} vs {}",
            a.side(),
            b.side()
        )));
    }
    Ok(())
}

pub fn rmse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_dims(a, b)?;
    let sq: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((sq / a.data().len() as f64).sqrt())
}

/// `20 log10(peak / rmse)`; infinite for identical images.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64> {
    let e = rmse(a, b)?;
    Ok(20.0 * (peak / e).log10())
}

/// Pearson correlation over pixels. Zero if either image is constant.
pub fn ncc(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    check_dims(a, b)?;
    Ok(pearson(a.data(), b.data()))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len() as f64;
    let ma = a.iter().sum::<f64>() / len;
    let mb = b.iter().sum::<f64>() / len;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// RMSE of `alpha * img + beta` against `reference`, with the least-squares
/// optimal `alpha` and `beta`.
pub fn best_affine_fit_rmse(img: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_dims(img, reference)?;
    let len = img.data().len() as f64;
    let mx = img.data().iter().sum::<f64>() / len;
    let my = reference.data().iter().sum::<f64>() / len;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in img.data().iter().zip(reference.data()) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let alpha = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let beta = my - alpha * mx;
    let fitted = ImageGrid::new(img.side(), img.data().iter().map(|x| alpha * x + beta).collect())?;
    rmse(&fitted, reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconMethod {
    FourierSlice,
    Fbp,
    Backproject,
}

impl ReconMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReconMethod::FourierSlice => "fourier-slice",
            ReconMethod::Fbp => "fbp",
            ReconMethod::Backproject => "backproject",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconReport {
    pub method: ReconMethod,
    pub image: ImageGrid,
    pub rmse_vs_reference: Option<f64>,
    pub psnr: Option<f64>,
    pub imag_residual: Option<f64>,
    pub wall_time: f64,
}

impl ReconReport {
    /// `key=value` lines. Wall time is left out so reports are reproducible.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "method={}", self.method.name()).unwrap();
        writeln!(s, "size={}", self.image.side()).unwrap();
        if let Some(v) = self.rmse_vs_reference {
            writeln!(s, "rmse={v}").unwrap();
        }
        if let Some(v) = self.psnr {
            writeln!(s, "psnr={v}").unwrap();
        }
        if let Some(v) = self.imag_residual {
            writeln!(s, "imag_residual={v}").unwrap();
        }
        s
    }
}

/// Runs one reconstruction method and fills in metrics against an optional
/// reference (PSNR peak is the reference's value range).
pub fn reconstruct(
    method: ReconMethod,
    sino: &Sinogram,
    n: usize,
    scheme: InterpolationScheme,
    apply_ramp: bool,
    reference: Option<&ImageGrid>,
) -> Result<ReconReport> {
    let start = Instant::now();
    let (image, imag_residual) = match method {
        ReconMethod::FourierSlice => {
            let out = fourier_slice_reconstruct_detailed(sino, n, scheme, apply_ramp)?;
            (out.image, Some(out.imag_residual))
        }
        ReconMethod::Fbp => (fbp_reconstruct(sino, n)?, None),
        ReconMethod::Backproject => (backproject(sino, n)?, None),
    };
    let wall_time = start.elapsed().as_secs_f64();
    let (rmse_vs_reference, psnr_v) = match reference {
        Some(r) => {
            let e = rmse(&image, r)?;
            let lo = r.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (Some(e), Some(psnr(&image, r, hi - lo)?))
        }
        None => (None, None),
    };
    Ok(ReconReport { method, image, rmse_vs_reference, psnr: psnr_v, imag_residual, wall_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{disk_phantom, shepp_logan};
    use crate::radon::forward_radon;

    #[test]
    fn metric_examples() {
        let x = shepp_logan(16).unwrap();
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        assert!(psnr(&x, &x, 1.0).unwrap().is_infinite());
        let y = ImageGrid::new(16, x.data().iter().map(|v| 3.0 * v + 2.0).collect()).unwrap();
        assert!((ncc(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse(&x, &ImageGrid::zeros(8)).is_err());
        // 1x2 grids are not square; the formula is exercised on the raw slices
        let e = ((0.0f64 - 3.0).powi(2) + (0.0f64 - 4.0).powi(2)) / 2.0;
        assert_eq!(e.sqrt(), (25.0f64 / 2.0).sqrt());
        let a = ImageGrid::new(1, vec![0.0]).unwrap();
        let b = ImageGrid::new(1, vec![5.0]).unwrap();
        assert_eq!(rmse(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn affine_fit_of_scaled_image_is_exact() {
        let x = shepp_logan(16).unwrap();
        let y = ImageGrid::new(16, x.data().iter().map(|v| 0.5 * v - 1.0).collect()).unwrap();
        assert!(best_affine_fit_rmse(&y, &x).unwrap() < 1e-12);
    }

    #[test]
    fn zero_sinogram_gives_zero_images() {
        let z = Sinogram::zeros(32, 32);
        for img in [
            fourier_slice_reconstruct(&z, 32, InterpolationScheme::Bilinear, false).unwrap(),
            fbp_reconstruct(&z, 32).unwrap(),
        ] {
            assert!(img.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fourier_slice_recovers_disk() {
        let phantom = disk_phantom(128, 0.0, 0.0, 0.5, 1.0).unwrap();
        let sino = forward_radon(&phantom, 128, 128).unwrap();
        let recon = fourier_slice_reconstruct(&sino, 128, InterpolationScheme::Bilinear, false).unwrap();
        let c = ncc(&recon, &phantom).unwrap();
        assert!(c >= 0.85, "ncc {c}");
    }

    #[test]
    fn delta_round_trips_to_unit_mass() {
        let mut data = vec![0.0; 64 * 64];
        data[32 * 64 + 32] = 1.0;
        let delta = ImageGrid::new(64, data).unwrap();
        let sino = forward_radon(&delta, 64, 64).unwrap();
        let recon = fourier_slice_reconstruct(&sino, 64, InterpolationScheme::Bilinear, false).unwrap();
        let mass: f64 = recon.data().iter().sum();
        assert!((mass - 1.0).abs() < 0.02, "mass {mass}");
    }

    #[test]
    fn bilinear_output_is_real() {
        let phantom = shepp_logan(64).unwrap();
        let sino = forward_radon(&phantom, 64, 64).unwrap();
        let out = fourier_slice_reconstruct_detailed(&sino, 64, InterpolationScheme::Bilinear, false).unwrap();
        assert!(out.imag_residual <= 1e-6, "{}", out.imag_residual);
    }

    #[test]
    fn reconstructors_are_linear() {
        let s1 = forward_radon(&shepp_logan(32).unwrap(), 32, 32).unwrap();
        let s2 = forward_radon(&disk_phantom(32, 0.3, 0.1, 0.4, 1.0).unwrap(), 32, 32).unwrap();
        let combo = Sinogram::new(
            32,
            32,
            s1.data().iter().zip(s2.data()).map(|(a, b)| 1.5 * a - 2.0 * b).collect(),
        )
        .unwrap();
        type Recon = fn(&Sinogram) -> ImageGrid;
        let methods: [Recon; 3] = [
            |s| fourier_slice_reconstruct(s, 32, InterpolationScheme::Bilinear, false).unwrap(),
            |s| fourier_slice_reconstruct(s, 32, InterpolationScheme::Simplex, true).unwrap(),
            |s| fbp_reconstruct(s, 32).unwrap(),
        ];
        for f in methods {
            let (a, b, c) = (f(&s1), f(&s2), f(&combo));
            for k in 0..c.data().len() {
                let lin = 1.5 * a.data()[k] - 2.0 * b.data()[k];
                assert!((c.data()[k] - lin).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fbp_beats_unfiltered_backprojection_on_disk() {
        let phantom = disk_phantom(128, 0.0, 0.0, 0.5, 1.0).unwrap();
        let sino = forward_radon(&phantom, 128, 180).unwrap();
        let fbp = rmse(&fbp_reconstruct(&sino, 128).unwrap(), &phantom).unwrap();
        let bp = best_affine_fit_rmse(&backproject(&sino, 128).unwrap(), &phantom).unwrap();
        assert!(fbp < bp, "fbp {fbp} vs bp {bp}");
    }

    #[test]
    fn fourier_slice_and_fbp_agree() {
        let phantom = shepp_logan(128).unwrap();
        let sino = forward_radon(&phantom, 128, 128).unwrap();
        let fs = fourier_slice_reconstruct(&sino, 128, InterpolationScheme::Bilinear, false).unwrap();
        let fbp = fbp_reconstruct(&sino, 128).unwrap();
        let c = ncc(&fs, &fbp).unwrap();
        assert!(c >= 0.8, "ncc {c}");
    }

    #[test]
    fn report_text_has_no_timing() {
        let sino = forward_radon(&shepp_logan(16).unwrap(), 16, 16).unwrap();
        let r = reconstruct(ReconMethod::Fbp, &sino, 16, InterpolationScheme::Bilinear, false, None).unwrap();
        assert!(r.wall_time >= 0.0);
        assert_eq!(r.to_text(), "method=fbp\nsize=16\n");
    }
}
