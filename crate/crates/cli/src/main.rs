//! `qtomo`: phantoms, projections, classical and simulated-quantum
//! reconstructions, interpolation bounds and image comparison.
//!
//! Every command writes into its `--out` directory together with a
//! `config.txt` echo of the resolved parameters. All inputs are read and all
//! results computed before the first file is written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use qtomo::classical_recon::{best_affine_fit_rmse, reconstruct, ReconMethod};
use qtomo::interp::{build_interp_matrix, max_singular_value, schur_bound};
use qtomo::qsim::{self, EvolutionEngine, PipelineMode, PipelineOptions};
use qtomo::spectral::{dft2d, ComplexField, Direction, Norm};
use qtomo::{
    disk_phantom, forward_radon, read_image, read_sinogram, shepp_logan, Error, ImageFormat, ImageGrid,
    InterpolationScheme,
};

#[derive(Parser)]
#[command(name = "qtomo", version, about = "Tomographic reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom.
    Phantom {
        kind: PhantomKind,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Disk radius.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Disk center x.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        cx: f64,
        /// Disk center y.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        cy: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward-project an image into a sinogram.
    Project {
        image: PathBuf,
        #[arg(long)]
        angles: usize,
        /// Radial bins; defaults to the image side.
        #[arg(long)]
        rho: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical reconstruction from a sinogram.
    Reconstruct {
        method: Method,
        sinogram: PathBuf,
        /// Output side; defaults to the sinogram's radial bin count.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value = "bilinear")]
        scheme: InterpolationScheme,
        /// Ramp-weight the polar spectrum (Fourier-slice only).
        #[arg(long)]
        ramp: bool,
        /// Reference image for RMSE/PSNR in the report.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated quantum CT reconstruction.
    Qreconstruct {
        sinogram: PathBuf,
        #[arg(long, default_value = "bilinear")]
        scheme: InterpolationScheme,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value = "exact")]
        engine: EvolutionEngine,
        #[arg(long, value_enum, default_value_t = Mode::Postselect)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evolution time; derived from epsilon when absent.
        #[arg(long)]
        time: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize k-space from an image and reconstruct it by inverse QFT.
    MriSim {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolation-operator norm bounds as CSV.
    Bounds {
        /// Comma-separated grid sizes.
        sizes: String,
        #[arg(default_value = "bilinear")]
        scheme: InterpolationScheme,
        #[arg(long)]
        out: PathBuf,
    },
    /// Image metrics (second image is the reference) as CSV.
    Compare {
        image: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomKind {
    SheppLogan,
    Disk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    FourierSlice,
    Fbp,
    Backproject,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Postselect,
    Sample,
}

/// A failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => 2,
            Error::Format(_) | Error::Io(_) => 3,
            Error::NotConverged { .. } | Error::Numerical(_) => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

/// Files to write, in order. `config.txt` is always last.
struct Outputs {
    dir: PathBuf,
    config: Vec<(&'static str, String)>,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), config: Vec::new(), files: Vec::new() }
    }

    fn param(&mut self, key: &'static str, value: impl ToString) -> &mut Self {
        self.config.push((key, value.to_string()));
        self
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn image(&mut self, stem: &str, img: &ImageGrid) -> Result<(), Failure> {
        for (format, ext) in [(ImageFormat::Rimg, "rimg"), (ImageFormat::Pgm16, "pgm")] {
            let mut buf = Vec::new();
            qtomo::grids::encode_image(img, format, &mut buf)?;
            self.file(&format!("{stem}.{ext}"), buf);
        }
        Ok(())
    }

    fn commit(self) -> Result<(), Failure> {
        fs::create_dir_all(&self.dir).map_err(Error::from)?;
        let mut config = String::new();
        for (k, v) in &self.config {
            writeln!(config, "{k}={v}").unwrap();
        }
        for (name, bytes) in self.files.iter().chain([&("config.txt".to_string(), config.into_bytes())]) {
            fs::write(self.dir.join(name), bytes).map_err(Error::from)?;
        }
        Ok(())
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Phantom { kind, size, radius, cx, cy, out } => {
            let mut o = Outputs::new(&out);
            o.param("command", "phantom");
            let img = match kind {
                PhantomKind::SheppLogan => {
                    o.param("kind", "shepp-logan");
                    shepp_logan(size)?
                }
                PhantomKind::Disk => {
                    o.param("kind", "disk").param("radius", radius).param("cx", cx).param("cy", cy);
                    disk_phantom(size, cx, cy, radius, 1.0)?
                }
            };
            o.param("size", size);
            o.image("phantom", &img)?;
            o.commit()
        }
        Command::Project { image, angles, rho, out } => {
            let img = read_image(&image)?;
            let n_rho = rho.unwrap_or(img.side());
            let sino = forward_radon(&img, n_rho, angles)?;
            let mut o = Outputs::new(&out);
            o.param("command", "project")
                .param("image", path_str(&image))
                .param("rho", n_rho)
                .param("angles", angles);
            let mut buf = Vec::new();
            qtomo::radon::encode_sinogram(&sino, &mut buf)?;
            o.file("sinogram.rsin", buf);
            o.commit()
        }
        Command::Reconstruct { method, sinogram, size, scheme, ramp, reference, out } => {
            let sino = read_sinogram(&sinogram)?;
            let n = size.unwrap_or(sino.n_rho());
            let reference_img = reference.as_deref().map(read_image).transpose()?;
            let method = match method {
                Method::FourierSlice => ReconMethod::FourierSlice,
                Method::Fbp => ReconMethod::Fbp,
                Method::Backproject => ReconMethod::Backproject,
            };
            let report = reconstruct(method, &sino, n, scheme, ramp, reference_img.as_ref())?;
            eprintln!("{} reconstruction took {:.3} s", method.name(), report.wall_time);
            let mut o = Outputs::new(&out);
            o.param("command", "reconstruct")
                .param("method", method.name())
                .param("sinogram", path_str(&sinogram))
                .param("size", n)
                .param("scheme", scheme)
                .param("ramp", ramp)
                .param("reference", reference.as_deref().map(path_str).unwrap_or_default());
            o.image("recon", &report.image)?;
            o.file("report.txt", report.to_text().into_bytes());
            o.commit()
        }
        Command::Qreconstruct { sinogram, scheme, epsilon, engine, mode, seed, time, out } => {
            let sino = read_sinogram(&sinogram)?;
            if !(epsilon > 0.0) {
                return Err(usage("--epsilon must be positive"));
            }
            let pipeline_mode = match mode {
                Mode::Postselect => PipelineMode::Postselect,
                Mode::Sample => PipelineMode::Sample { seed },
            };
            let mut opts = PipelineOptions::new(scheme, epsilon, engine, pipeline_mode);
            opts.time = time;
            let start = Instant::now();
            let result = qsim::run_ct_quantum_pipeline(&sino, &opts)?;
            eprintln!("quantum reconstruction took {:.3} s", start.elapsed().as_secs_f64());
            let mut o = Outputs::new(&out);
            o.param("command", "qreconstruct")
                .param("sinogram", path_str(&sinogram))
                .param("scheme", scheme)
                .param("epsilon", epsilon)
                .param("engine", engine)
                .param("mode", if matches!(mode, Mode::Postselect) { "postselect" } else { "sample" })
                .param("seed", seed)
                .param("time", result.report.t);
            o.image("qrecon", &result.image)?;
            let mut buf = Vec::new();
            qsim::encode_rvec(&result.state, &mut buf)?;
            o.file("state.rvec", buf);
            o.file("report.txt", result.report.to_text().into_bytes());
            o.commit()
        }
        Command::MriSim { image, out } => {
            let img = read_image(&image)?;
            let field = ComplexField::from_real(img.side(), img.side(), img.data())?;
            let kspace = dft2d(&field, Direction::Forward, Norm::Unitary)?;
            let (kstate, scale) = qsim::encode_amplitudes(&kspace, "ky", "kx")?;
            let recon_state = qsim::mri_reconstruct_quantum(&kspace)?;
            let recon = ImageGrid::new(img.side(), recon_state.amplitudes().iter().map(|a| a.re * scale).collect())?;
            let mut o = Outputs::new(&out);
            o.param("command", "mri-sim").param("image", path_str(&image)).param("kspace_norm", scale);
            let mut buf = Vec::new();
            qsim::encode_rvec(&kstate, &mut buf)?;
            o.file("kspace.rvec", buf);
            o.image("mri", &recon)?;
            o.commit()
        }
        Command::Bounds { sizes, scheme, out } => {
            let sizes: Vec<usize> = sizes
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| usage(format!("bad size `{s}`"))))
                .collect::<Result<_, _>>()?;
            let mut csv = String::from("n,max_row_sum,max_col_sum,schur_bound,sigma_max_sq\n");
            for &n in &sizes {
                let a = build_interp_matrix(n, n, n, scheme)?;
                let sb = schur_bound(&a);
                let sigma = max_singular_value(&a, 1e-10)?;
                writeln!(
                    csv,
                    "{n},{},{},{},{}",
                    sb.max_row_abs_sum,
                    sb.max_col_abs_sum,
                    sb.sigma_sq_bound,
                    sigma * sigma
                )
                .unwrap();
            }
            let mut o = Outputs::new(&out);
            o.param("command", "bounds")
                .param("sizes", sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
                .param("scheme", scheme);
            o.file("bounds.csv", csv.into_bytes());
            o.commit()
        }
        Command::Compare { image, reference, out } => {
            let (a, b) = (read_image(&image)?, read_image(&reference)?);
            let lo = b.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = b.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let rmse = qtomo::rmse(&a, &b)?;
            let psnr = qtomo::psnr(&a, &b, hi - lo)?;
            let ncc = qtomo::ncc(&a, &b)?;
            let affine = best_affine_fit_rmse(&a, &b)?;
            let csv = format!("rmse,psnr,ncc,affine_rmse\n{rmse},{psnr},{ncc},{affine}\n");
            let mut o = Outputs::new(&out);
            o.param("command", "compare")
                .param("image", path_str(&image))
                .param("reference", path_str(&reference));
            o.file("metrics.csv", csv.into_bytes());
            o.commit()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::InvalidArgument("x".into())).code, 2);
        assert_eq!(Failure::from(Error::Format("x".into())).code, 3);
        assert_eq!(Failure::from(Error::Numerical("x".into())).code, 4);
        assert_eq!(Failure::from(Error::NotConverged { iterations: 1, last_estimate: 0.0 }).code, 4);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
