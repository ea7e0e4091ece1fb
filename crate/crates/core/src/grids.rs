//! Square image grids on the physical extent [-1, 1]², analytic phantoms and
//! the `rimg` / `pgm16` image formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fileio;

/// An `n x n` real image covering [-1, 1]². Row index is y, column index is x.
///
/// Pixel `(col, row)` has its center at
/// `(-1 + (col + 0.5) * 2/n, -1 + (row + 0.5) * 2/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    n: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("image side must be positive"));
        }
        if data.len() != n * n {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}",
                data.len(),
                n * n
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(ImageGrid { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "image side must be positive");
        ImageGrid { n, data: vec![0.0; n * n] }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel center.
    pub fn from_fn(n: usize, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut img = ImageGrid::zeros(n);
        for row in 0..n {
            for col in 0..n {
                let (x, y) = img.pixel_center(col, row);
                img.data[row * n + col] = f(x, y);
            }
        }
        img
    }

    pub fn side(&self) -> usize {
        self.n
    }

    /// Pixel pitch `2/n`.
    pub fn pixel_size(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        let d = self.pixel_size();
        (-1.0 + (col as f64 + 0.5) * d, -1.0 + (row as f64 + 0.5) * d)
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Bilinear sample at physical `(x, y)`; pixels outside the grid read as zero.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let inv = self.n as f64 / 2.0;
        let u = (x + 1.0) * inv - 0.5;
        let v = (y + 1.0) * inv - 0.5;
        let u0 = u.floor();
        let v0 = v.floor();
        let fu = u - u0;
        let fv = v - v0;
        let (c0, r0) = (u0 as i64, v0 as i64);
        let at = |c: i64, r: i64| -> f64 {
            if c < 0 || r < 0 || c >= self.n as i64 || r >= self.n as i64 {
                0.0
            } else {
                self.data[r as usize * self.n + c as usize]
            }
        };
        (1.0 - fv) * ((1.0 - fu) * at(c0, r0) + fu * at(c0 + 1, r0))
            + fv * ((1.0 - fu) * at(c0, r0 + 1) + fu * at(c0 + 1, r0 + 1))
    }

    /// Sum of pixel values times pixel area.
    pub fn integral(&self) -> f64 {
        let d = self.pixel_size();
        self.data.iter().sum::<f64>() * d * d
    }
}

/// One additive ellipse of a phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_axis_a: f64,
    pub semi_axis_b: f64,
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axis_a).powi(2) + (v / self.semi_axis_b).powi(2) <= 1.0
    }
}

/// A list of additive ellipses, all contained in the unit disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    ellipses: Vec<Ellipse>,
}

impl PhantomSpec {
    pub fn new(ellipses: Vec<Ellipse>) -> Result<Self> {
        for (i, e) in ellipses.iter().enumerate() {
            if !(e.semi_axis_a > 0.0 && e.semi_axis_b > 0.0) {
                return Err(Error::invalid(format!("ellipse {i}: semi-axes must be positive")));
            }
            let reach = e.center_x.hypot(e.center_y) + e.semi_axis_a.max(e.semi_axis_b);
            if reach > 1.0 + 1e-12 {
                return Err(Error::invalid(format!("ellipse {i} leaves the unit disk")));
            }
        }
        Ok(PhantomSpec { ellipses })
    }

    pub fn ellipses(&self) -> &[Ellipse] {
        &self.ellipses
    }

    /// Sums the intensity of every ellipse containing each pixel center.
    pub fn rasterize(&self, n: usize) -> ImageGrid {
        ImageGrid::from_fn(n, |x, y| {
            self.ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum()
        })
    }
}

const SHEPP_LOGAN_TABLE: &str = include_str!("../data/shepp_logan.csv");

/// The modified (Toft contrast) Shepp-Logan parameter table shipped in
/// `data/shepp_logan.csv`.
pub fn shepp_logan_spec() -> PhantomSpec {
    let ellipses = SHEPP_LOGAN_TABLE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let v: Vec<f64> = line.split(',').map(|f| f.trim().parse().unwrap()).collect();
            Ellipse {
                intensity: v[0],
                semi_axis_a: v[1],
                semi_axis_b: v[2],
                center_x: v[3],
                center_y: v[4],
                rotation: v[5].to_radians(),
            }
        })
        .collect();
    PhantomSpec::new(ellipses).expect("bundled Shepp-Logan table is valid")
}

pub fn shepp_logan(n: usize) -> Result<ImageGrid> {
    if n < 16 {
        return Err(Error::invalid("Shepp-Logan needs n >= 16"));
    }
    Ok(shepp_logan_spec().rasterize(n))
}

/// Uniform disk of value `v`, sampled at pixel centers.
pub fn disk_phantom(n: usize, cx: f64, cy: f64, r: f64, v: f64) -> Result<ImageGrid> {
    if n < 2 {
        return Err(Error::invalid("disk phantom needs n >= 2"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid("disk radius must be positive"));
    }
    if cx.abs() + r > 1.0 || cy.abs() + r > 1.0 {
        return Err(Error::invalid("disk exceeds the [-1, 1]² extent"));
    }
    let r2 = r * r;
    Ok(ImageGrid::from_fn(n, |x, y| {
        if (x - cx).powi(2) + (y - cy).powi(2) <= r2 {
            v
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Lossless: `RIMG1 <n> <n>\n` then n² little-endian f64, row-major.
    Rimg,
    /// Binary PGM, maxval 65535, min-max normalized. Rows are written top
    /// (largest y) first so viewers show +y up.
    Pgm16,
}

impl ImageFormat {
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "rimg" => Some(ImageFormat::Rimg),
            "pgm" => Some(ImageFormat::Pgm16),
            _ => None,
        }
    }
}

pub fn encode_image<W: Write>(img: &ImageGrid, format: ImageFormat, w: &mut W) -> Result<()> {
    let n = img.side();
    match format {
        ImageFormat::Rimg => {
            writeln!(w, "RIMG1 {n} {n}")?;
            fileio::write_f64s(w, img.data().iter().copied())?;
        }
        ImageFormat::Pgm16 => {
            write!(w, "P5\n{n} {n}\n65535\n")?;
            let q = quantize_u16(img.data());
            for row in q.chunks_exact(n).rev() {
                for s in row {
                    w.write_all(&s.to_be_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Min-max normalization to [0, 65535]; a constant image maps to zeros.
pub fn quantize_u16(values: &[f64]) -> Vec<u16> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect()
}

pub fn write_image(img: &ImageGrid, path: &Path, format: ImageFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_image(img, format, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn decode_image<R: Read>(r: &mut R) -> Result<ImageGrid> {
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("file too short for a header"))?;
    let img = match &magic {
        b"RI" => decode_rimg(r)?,
        b"P5" => decode_pgm(r)?,
        _ => return Err(Error::format("unknown image magic")),
    };
    if !img.side().is_power_of_two() {
        log::warn!(
            "image side {} is not a power of two; quantum pipelines will reject it",
            img.side()
        );
    }
    Ok(img)
}

fn decode_rimg<R: Read>(r: &mut R) -> Result<ImageGrid> {
    let fields = fileio::read_header(r)?;
    if fields.len() != 3 || fields[0] != "MG1" {
        return Err(Error::format("expected `RIMG1 <n> <n>` header"));
    }
    let w = fileio::parse_usize(&fields[1], "width")?;
    let h = fileio::parse_usize(&fields[2], "height")?;
    if w != h || w == 0 {
        return Err(Error::format(format!("image must be square and non-empty, got {w}x{h}")));
    }
    let data = fileio::read_f64s(r, w * h)?;
    ImageGrid::new(w, data).map_err(|e| Error::format(e.to_string()))
}

fn decode_pgm<R: Read>(r: &mut R) -> Result<ImageGrid> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("malformed PGM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).unwrap();
        tokens.push(fileio::parse_usize(tok, "PGM header")?);
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("malformed PGM header"));
    }
    pos += 1;
    let (w, h, maxval) = (tokens[0], tokens[1], tokens[2]);
    if w != h || w == 0 {
        return Err(Error::format(format!("image must be square and non-empty, got {w}x{h}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("PGM maxval out of range"));
    }
    let width = if maxval > 255 { 2 } else { 1 };
    let payload = &bytes[pos..];
    if payload.len() != w * h * width {
        return Err(Error::format("truncated or oversized PGM payload"));
    }
    let scale = 1.0 / maxval as f64;
    let data = payload
        .chunks_exact(w * width)
        .rev()
        .flat_map(|row| {
            row.chunks_exact(width).map(move |c| match c {
                [hi, lo] => u16::from_be_bytes([*hi, *lo]) as f64 * scale,
                [b] => *b as f64 * scale,
                _ => unreachable!(),
            })
        })
        .collect();
    ImageGrid::new(w, data)
}

pub fn read_image(path: &Path) -> Result<ImageGrid> {
    decode_image(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(img: &ImageGrid, f: ImageFormat) -> Vec<u8> {
        let mut buf = Vec::new();
        encode_image(img, f, &mut buf).unwrap();
        buf
    }

    #[test]
    fn disk_outside_extent_is_rejected() {
        assert!(matches!(
            disk_phantom(4, 0.0, 0.0, 2.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn disk_center_and_corner() {
        let img = disk_phantom(16, 0.0, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(img.get(8, 8), 1.0);
        assert_eq!(img.get(0, 0), 0.0);
    }

    #[test]
    fn disk_area_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let trials = 200_000;
        let hits = (0..trials)
            .filter(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                x * x + y * y <= 0.25
            })
            .count();
        let mc_area = 4.0 * hits as f64 / trials as f64;
        let img = disk_phantom(16, 0.0, 0.0, 0.5, 1.0).unwrap();
        assert!((img.integral() - mc_area).abs() / mc_area < 0.15);
    }

    #[test]
    fn disk_area_error_shrinks_with_resolution() {
        let exact = std::f64::consts::PI * 0.3f64.powi(2) * 2.0;
        let errs: Vec<f64> = [32, 64, 128, 256]
            .iter()
            .map(|&n| {
                let img = disk_phantom(n, 0.1, -0.2, 0.3, 2.0).unwrap();
                (img.integral() - exact).abs() / exact
            })
            .collect();
        // pixel-center rasterization error is O(1/n) up to lattice noise
        for w in errs.windows(2) {
            assert!(w[1] < w[0] * 1.2, "{errs:?}");
        }
        assert!(errs[3] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn shepp_logan_range_and_head() {
        let img = shepp_logan(64).unwrap();
        assert!(img.data().iter().all(|&v| (-0.02..=1.02).contains(&v)));
        // physical (0, -0.25): pixel whose center is nearest
        let col = ((0.0 + 1.0) / img.pixel_size() - 0.5).round() as usize;
        let row = ((-0.25 + 1.0) / img.pixel_size() - 0.5).round() as usize;
        assert!(img.get(col, row) > 0.0);
    }

    #[test]
    fn shepp_logan_matches_membership_oracle() {
        // independent oracle: plain quadratic-form membership per ellipse
        let rows: Vec<[f64; 6]> = vec![
            [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
            [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
            [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
            [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
            [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
            [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
            [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
            [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
            [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
            [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
        ];
        let img = shepp_logan(64).unwrap();
        for row in 0..64 {
            for col in 0..64 {
                let (x, y) = img.pixel_center(col, row);
                let mut expect = 0.0;
                for [v, a, b, cx, cy, deg] in &rows {
                    let phi = deg.to_radians();
                    let (px, py) = (x - cx, y - cy);
                    let u = px * phi.cos() + py * phi.sin();
                    let w = -px * phi.sin() + py * phi.cos();
                    if u * u / (a * a) + w * w / (b * b) <= 1.0 {
                        expect += v;
                    }
                }
                assert_eq!(img.get(col, row), expect);
            }
        }
    }

    #[test]
    fn shepp_logan_consistent_across_resolution() {
        let coarse = shepp_logan(16).unwrap();
        let fine = shepp_logan(32).unwrap();
        for row in 1..15 {
            for col in 1..15 {
                // interior: all eight coarse neighbours share the value
                let v = coarse.get(col, row);
                let flat = (row - 1..=row + 1)
                    .all(|r| (col - 1..=col + 1).all(|c| coarse.get(c, r) == v));
                if !flat {
                    continue;
                }
                let mean = (fine.get(2 * col, 2 * row)
                    + fine.get(2 * col + 1, 2 * row)
                    + fine.get(2 * col, 2 * row + 1)
                    + fine.get(2 * col + 1, 2 * row + 1))
                    / 4.0;
                assert!((mean - coarse.get(col, row)).abs() <= 0.5);
            }
        }
    }

    #[test]
    fn shepp_logan_is_deterministic() {
        let a = encode(&shepp_logan(64).unwrap(), ImageFormat::Rimg);
        let b = encode(&shepp_logan(64).unwrap(), ImageFormat::Rimg);
        assert_eq!(a, b);
    }

    #[test]
    fn rimg_header_layout() {
        let img = ImageGrid::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&img, ImageFormat::Rimg);
        assert!(bytes.starts_with(b"RIMG1 2 2\n"));
        assert_eq!(bytes.len(), 10 + 32);
        assert_eq!(&bytes[10..18], &1.0f64.to_le_bytes());
    }

    #[test]
    fn pgm_constant_image_is_all_zero() {
        let img = ImageGrid::new(4, vec![3.5; 16]).unwrap();
        assert!(quantize_u16(img.data()).iter().all(|&s| s == 0));
        let back = decode_image(&mut encode(&img, ImageFormat::Pgm16).as_slice()).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pgm_hand_quantization() {
        let img = ImageGrid::new(2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let bytes = encode(&img, ImageFormat::Pgm16);
        assert!(bytes.starts_with(b"P5\n2 2\n65535\n"));
        let samples: Vec<i64> = bytes[13..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as i64)
            .collect();
        // bottom row (y < 0) comes last
        for (got, want) in samples.iter().zip([32768i64, 16384, 0, 65535]) {
            assert!((got - want).abs() <= 1, "{samples:?}");
        }
    }

    #[test]
    fn pgm_round_trip_within_one_step() {
        let img = shepp_logan(32).unwrap();
        let back = decode_image(&mut encode(&img, ImageFormat::Pgm16).as_slice()).unwrap();
        let lo = img.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in img.data().iter().zip(back.data()) {
            let norm = (a - lo) / (hi - lo);
            assert!((norm - b).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn malformed_inputs_are_format_errors() {
        let cases: [&[u8]; 5] = [
            b"XX",
            b"RIMG1 2 2",
            b"RIMG1 2 3\n",
            b"RIMG1 2 2\n\x00\x00\x00",
            b"P5\n2 2\n65535\n\x00\x01",
        ];
        for c in cases {
            assert!(matches!(decode_image(&mut &c[..]), Err(Error::Format(_))), "{c:?}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rimg");
        let img = shepp_logan(16).unwrap();
        write_image(&img, &path, ImageFormat::Rimg).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn non_power_of_two_side_still_reads() {
        let img = ImageGrid::new(3, vec![0.0; 9]).unwrap();
        let back = decode_image(&mut encode(&img, ImageFormat::Rimg).as_slice()).unwrap();
        assert_eq!(back.side(), 3);
    }

    proptest! {
        #[test]
        fn rimg_round_trip_is_identity(n in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1e6..1e6)).collect();
            let img = ImageGrid::new(n, data).unwrap();
            let back = decode_image(&mut encode(&img, ImageFormat::Rimg).as_slice()).unwrap();
            prop_assert_eq!(
                img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
