//! Exact statevector simulation of quantum MRI and CT reconstruction.
//!
//! Amplitude index convention: registers are listed most significant first,
//! and a basis state's index is `Σ value_r · 2^(bits after r)`. A `[rho,
//! theta]` state therefore has the same flat order as a ρ-major sinogram, and
//! `[ky, kx]` / `[y, x]` match row-major images.
//!
//! The CT algorithm works on `[anc:1, idx]`. Ancilla `|1⟩` (upper half of the
//! vector) holds the polar spectrum and ancilla `|0⟩` (lower half) the
//! Cartesian spectrum. The dilation `H = [[0, A], [Aᵀ, 0]]` acts on
//! `(cart, polar)` as `(A·polar, Aᵀ·cart)`.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fileio;
use crate::grids::ImageGrid;
use crate::interp::{build_interp_matrix, schur_bound, InterpolationScheme, SparseInterpMatrix};
use crate::radon::Sinogram;
use crate::spectral::{dft_in_place, origin_phase, shift_slice, unshift_slice, ComplexField, Direction, Norm};

const NORM_TOL: f64 = 1e-10;
const MAX_QUBITS: u32 = 40;
const TAYLOR_ORDER_CAP: usize = 64;
/// Post-selection attempts before the sample-mode pipeline gives up.
pub const DEFAULT_ITERATION_CAP: u64 = 1_000_000;
/// Sample mode gives up once `p0` falls below this (far past any reachable
/// iteration count, above the ~1e-29 round-off floor). Re-entered states decay
/// toward `ker A`, where the ancilla-`|0⟩` branch vanishes.
pub const DEAD_BRANCH_P0: f64 = 1e-20;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const NEG_I: Complex64 = Complex64 { re: 0.0, im: -1.0 };

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: Vec<(String, u32)>,
}

impl RegisterLayout {
    pub fn new<S: Into<String>>(registers: impl IntoIterator<Item = (S, u32)>) -> Result<Self> {
        let registers: Vec<(String, u32)> = registers.into_iter().map(|(n, w)| (n.into(), w)).collect();
        if registers.is_empty() {
            return Err(Error::invalid("layout needs at least one register"));
        }
        let mut total = 0u32;
        for (i, (name, w)) in registers.iter().enumerate() {
            if *w == 0 {
                return Err(Error::invalid(format!("register `{name}` has zero width")));
            }
            if name.is_empty() || name.contains([',', ':', ' ', '\n']) {
                return Err(Error::invalid(format!("bad register name `{name}`")));
            }
            if registers[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::invalid(format!("duplicate register `{name}`")));
            }
            total += w;
        }
        if total > MAX_QUBITS {
            return Err(Error::invalid(format!("{total} qubits exceeds the simulator limit")));
        }
        Ok(RegisterLayout { registers })
    }

    pub fn registers(&self) -> &[(String, u32)] {
        &self.registers
    }

    pub fn total_qubits(&self) -> u32 {
        self.registers.iter().map(|(_, w)| w).sum()
    }

    pub fn dim(&self) -> usize {
        1usize << self.total_qubits()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.registers.iter().position(|(n, _)| n == name)
    }

    pub fn width(&self, name: &str) -> Option<u32> {
        self.position(name).map(|p| self.registers[p].1)
    }

    /// Index step between consecutive values of register `pos`.
    pub fn stride(&self, pos: usize) -> usize {
        1usize << self.registers[pos + 1..].iter().map(|(_, w)| w).sum::<u32>()
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.position(name)
            .ok_or_else(|| Error::invalid(format!("no register named `{name}` in layout {self}")))
    }
}

impl fmt::Display for RegisterLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, w)) in self.registers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}:{w}")?;
        }
        Ok(())
    }
}

impl FromStr for RegisterLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let regs = s
            .split(',')
            .map(|part| {
                let (name, w) = part
                    .split_once(':')
                    .ok_or_else(|| Error::format(format!("register `{part}` lacks `:width`")))?;
                let w = w.parse::<u32>().map_err(|_| Error::format(format!("bad width in `{part}`")))?;
                Ok((name.to_string(), w))
            })
            .collect::<Result<Vec<_>>>()?;
        RegisterLayout::new(regs).map_err(|e| Error::format(e.to_string()))
    }
}

/// Normalized amplitudes over a register layout. Immutable: operations
/// return new states.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterState {
    layout: RegisterLayout,
    amplitudes: Vec<Complex64>,
}

impl RegisterState {
    /// Requires `‖amplitudes‖₂ = 1` within `1e-10`.
    pub fn new(layout: RegisterLayout, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::invalid(format!(
                "{} amplitudes for a {}-qubit layout",
                amplitudes.len(),
                layout.total_qubits()
            )));
        }
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(RegisterState { layout, amplitudes })
    }

    /// Divides by the 2-norm; errors on the zero vector.
    pub fn normalized(layout: RegisterLayout, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        amplitudes.iter_mut().for_each(|a| *a /= n);
        RegisterState::new(layout, amplitudes)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// Same amplitudes under a different layout of equal total width.
    pub fn relabel(self, layout: RegisterLayout) -> Result<Self> {
        if layout.total_qubits() != self.layout.total_qubits() {
            return Err(Error::invalid("relabel must keep the total qubit count"));
        }
        Ok(RegisterState { layout, amplitudes: self.amplitudes })
    }

    /// Applies `f` to every length-`2^w` slice of register `name`, with the
    /// other registers held fixed.
    fn map_register(&self, name: &str, mut f: impl FnMut(&mut [Complex64]) -> Result<()>) -> Result<Self> {
        let pos = self.layout.require(name)?;
        let m = 1usize << self.layout.registers[pos].1;
        let stride = self.layout.stride(pos);
        let mut amps = self.amplitudes.clone();
        let mut buf = vec![ZERO; m];
        for outer in 0..amps.len() / (m * stride) {
            for s in 0..stride {
                let base = outer * m * stride + s;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = amps[base + k * stride];
                }
                f(&mut buf)?;
                for (k, b) in buf.iter().enumerate() {
                    amps[base + k * stride] = *b;
                }
            }
        }
        Ok(RegisterState { layout: self.layout.clone(), amplitudes: amps })
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn log2_exact(m: usize, what: &str) -> Result<u32> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::invalid(format!("{what} = {m} is not a power of two")));
    }
    Ok(m.trailing_zeros())
}

/// Encodes a 2D field as amplitudes over registers `[hi, lo]` (rows, cols).
/// Returns the state and the field's 2-norm.
pub fn encode_amplitudes(field: &ComplexField, hi: &str, lo: &str) -> Result<(RegisterState, f64)> {
    let layout = RegisterLayout::new([
        (hi, log2_exact(field.rows(), "row count")?),
        (lo, log2_exact(field.cols(), "column count")?),
    ])?;
    let n = norm(field.data());
    if n == 0.0 {
        return Err(Error::invalid("cannot encode an all-zero field"));
    }
    Ok((RegisterState::normalized(layout, field.data().to_vec())?, n))
}

/// Unitary DFT on one register. `Forward` uses the `e^{-2πi jk/m}` kernel,
/// matching [`crate::spectral::dft1d`].
pub fn qft_on_register(state: &RegisterState, register: &str, direction: Direction) -> Result<RegisterState> {
    state.map_register(register, |slice| dft_in_place(slice, direction, Norm::Unitary))
}

/// Inverse QFT over both index registers of an encoded k-space; amplitudes
/// come out proportional to the image, on registers `[y, x]`.
pub fn mri_reconstruct_quantum(kspace: &ComplexField) -> Result<RegisterState> {
    let (state, _) = encode_amplitudes(kspace, "ky", "kx")?;
    let state = qft_on_register(&state, "ky", Direction::Inverse)?;
    let state = qft_on_register(&state, "kx", Direction::Inverse)?;
    let layout = RegisterLayout::new([("y", state.layout.registers[0].1), ("x", state.layout.registers[1].1)])?;
    state.relabel(layout)
}

/// Largest `t` with `norm_bound³ t³ / 6 ≤ epsilon`.
pub fn choose_evolution_time(epsilon: f64, norm_bound: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(norm_bound > 0.0) || !norm_bound.is_finite() {
        return Err(Error::invalid("norm bound must be positive"));
    }
    Ok((6.0 * epsilon).cbrt() / norm_bound)
}

/// Smallest order `K ≥ 1` with `x^(K+1)/(K+1)! ≤ epsilon/10`, `x = norm_bound·t`.
pub fn taylor_order(norm_bound: f64, t: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let x = (norm_bound * t).abs();
    let mut term = x; // x^k / k! at k = 1
    for k in 1..=TAYLOR_ORDER_CAP {
        term *= x / (k + 1) as f64;
        if term <= epsilon / 10.0 {
            return Ok(k);
        }
    }
    Err(Error::Numerical(format!(
        "Taylor order exceeds {TAYLOR_ORDER_CAP} for norm_bound*t = {x}"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionEngine {
    /// Functional calculus on the eigendecomposition of `AᵀA`.
    ExactSpectral,
    /// Truncated Taylor series plus renormalization.
    Taylor,
}

impl EvolutionEngine {
    pub fn name(self) -> &'static str {
        match self {
            EvolutionEngine::ExactSpectral => "exact",
            EvolutionEngine::Taylor => "taylor",
        }
    }
}

impl fmt::Display for EvolutionEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvolutionEngine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-spectral" | "exact_spectral" => Ok(EvolutionEngine::ExactSpectral),
            "taylor" => Ok(EvolutionEngine::Taylor),
            other => Err(Error::invalid(format!("unknown engine `{other}` (exact, taylor)"))),
        }
    }
}

/// Eigendecomposition of `AᵀA`: `V diag(λ) Vᵀ`, with `λ` clamped at zero.
#[derive(Debug)]
struct GramSpectrum {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

/// The Hermitian dilation of an interpolation matrix, represented by `A`
/// itself. Both blocks are padded to `d = max(n_rows, n_cols)`.
#[derive(Debug)]
pub struct DilatedHamiltonian {
    a: SparseInterpMatrix,
    dim: usize,
    norm_bound: f64,
    spectrum: OnceLock<GramSpectrum>,
}

impl DilatedHamiltonian {
    pub fn new(a: SparseInterpMatrix) -> Result<Self> {
        let dim = a.n_rows().max(a.n_cols());
        log2_exact(dim, "dilation block size")?;
        let norm_bound = schur_bound(&a).sigma_sq_bound.sqrt();
        Ok(DilatedHamiltonian { a, dim, norm_bound, spectrum: OnceLock::new() })
    }

    pub fn matrix(&self) -> &SparseInterpMatrix {
        &self.a
    }

    /// Size of each block; the full operator is `2·block_dim` square.
    pub fn block_dim(&self) -> usize {
        self.dim
    }

    /// `√(Schur bound)`, an upper bound on `‖H‖ = σ_max(A)`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    fn split<'v>(&self, x: &'v [Complex64]) -> Result<(&'v [Complex64], &'v [Complex64])> {
        if x.len() != 2 * self.dim {
            return Err(Error::invalid(format!(
                "vector length {} does not match dilation size {}",
                x.len(),
                2 * self.dim
            )));
        }
        let (cart, polar) = x.split_at(self.dim);
        Ok((&cart[..self.a.n_rows()], &polar[..self.a.n_cols()]))
    }

    fn join(&self, cart: &[Complex64], polar: &[Complex64], pad_from: &[Complex64]) -> Vec<Complex64> {
        let mut out = pad_from.to_vec();
        out[..cart.len()].copy_from_slice(cart);
        out[self.dim..self.dim + polar.len()].copy_from_slice(polar);
        out
    }

    /// `H x` on a full `[cart | polar]` vector. Padding rows map to zero.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let (cart, polar) = self.split(x)?;
        let top = self.a.apply(polar)?;
        let bottom = self.a.apply_transpose(cart)?;
        Ok(self.join(&top, &bottom, &vec![ZERO; 2 * self.dim]))
    }

    fn spectrum(&self) -> &GramSpectrum {
        self.spectrum.get_or_init(|| {
            let nc = self.a.n_cols();
            let mut gram = DMatrix::<f64>::zeros(nc, nc);
            for i in 0..self.a.n_rows() {
                for (c1, w1) in self.a.row(i) {
                    for (c2, w2) in self.a.row(i) {
                        gram[(c1, c2)] += w1 * w2;
                    }
                }
            }
            log::debug!("eigendecomposing {nc}x{nc} Gram matrix");
            let eig = SymmetricEigen::new(gram);
            GramSpectrum { values: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(), vectors: eig.eigenvectors }
        })
    }

    /// `sin(H t) x`, exactly, via `sin(Ht) = H · S(H²)` with
    /// `S(λ) = sin(t√λ)/√λ`.
    pub fn sin_apply(&self, t: f64, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let (cart, polar) = self.split(x)?;
        let spec = self.spectrum();
        let s: Vec<f64> = spec.values.iter().map(|&l| spectral_fns(t, l).1).collect();
        let at_cart = self.a.apply_transpose(cart)?;
        let top = self.a.apply(&eigen_apply(spec, &s, polar))?;
        let bottom = eigen_apply(spec, &s, &at_cart);
        Ok(self.join(&top, &bottom, &vec![ZERO; 2 * self.dim]))
    }

    /// `e^{-iHt} x` through `cos(Ht) - i sin(Ht)`. Padding entries are fixed.
    fn exact_evolve(&self, t: f64, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let (cart, polar) = self.split(x)?;
        let spec = self.spectrum();
        let at_cart = DVector::from_vec(self.a.apply_transpose(cart)?);
        let polar_v = DVector::from_column_slice(polar);
        let a_hat = tr_mul(&spec.vectors, &at_cart);
        let p_hat = tr_mul(&spec.vectors, &polar_v);
        let mut top_hat = DVector::from_element(spec.values.len(), ZERO);
        let mut bottom_hat = DVector::from_element(spec.values.len(), ZERO);
        for (i, &l) in spec.values.iter().enumerate() {
            let (c, s, g) = spectral_fns(t, l);
            top_hat[i] = a_hat[i] * g + NEG_I * p_hat[i] * s;
            bottom_hat[i] = p_hat[i] * c + NEG_I * a_hat[i] * s;
        }
        let top_delta = self.a.apply(mul(&spec.vectors, &top_hat).as_slice())?;
        let top: Vec<Complex64> = cart.iter().zip(&top_delta).map(|(u, d)| u + d).collect();
        let bottom = mul(&spec.vectors, &bottom_hat);
        Ok(self.join(&top, bottom.as_slice(), x))
    }

    /// Truncated series `Σ_{k≤K} (-iHt)^k/k! x`. Returns the raw sum.
    fn taylor_evolve(&self, t: f64, order: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut sum = x.to_vec();
        let mut term = x.to_vec();
        for k in 1..=order {
            let scale = NEG_I * (t / k as f64);
            term = self.apply(&term)?.into_iter().map(|v| v * scale).collect();
            sum.iter_mut().zip(&term).for_each(|(s, v)| *s += v);
        }
        Ok(sum)
    }
}

/// `(cos(t√λ), sin(t√λ)/√λ, (cos(t√λ)-1)/λ)`, by series when `t²λ` is small.
fn spectral_fns(t: f64, lambda: f64) -> (f64, f64, f64) {
    let z = t * t * lambda;
    if z < 1e-2 {
        let s = t * (1.0 - z / 6.0 + z * z / 120.0 - z * z * z / 5040.0);
        let g = t * t * (-0.5 + z / 24.0 - z * z / 720.0 + z * z * z / 40320.0);
        (1.0 + lambda * g, s, g)
    } else {
        let r = lambda.sqrt();
        let c = (t * r).cos();
        (c, (t * r).sin() / r, (c - 1.0) / lambda)
    }
}

/// `V diag(f) Vᵀ x`.
fn eigen_apply(spec: &GramSpectrum, f: &[f64], x: &[Complex64]) -> Vec<Complex64> {
    let mut hat = tr_mul(&spec.vectors, &DVector::from_column_slice(x));
    hat.iter_mut().zip(f).for_each(|(h, &w)| *h *= w);
    mul(&spec.vectors, &hat).as_slice().to_vec()
}

fn split_parts(x: &DVector<Complex64>) -> (DVector<f64>, DVector<f64>) {
    (x.map(|c| c.re), x.map(|c| c.im))
}

fn tr_mul(m: &DMatrix<f64>, x: &DVector<Complex64>) -> DVector<Complex64> {
    let (re, im) = split_parts(x);
    let (r, i) = (m.tr_mul(&re), m.tr_mul(&im));
    r.zip_map(&i, Complex64::new)
}

fn mul(m: &DMatrix<f64>, x: &DVector<Complex64>) -> DVector<Complex64> {
    let (re, im) = split_parts(x);
    let (r, i) = (m * re, m * im);
    r.zip_map(&i, Complex64::new)
}

/// `e^{-iHt}` on a `[anc:1, idx]` state whose ancilla-`|0⟩` block is zero.
///
/// The Taylor engine errors if the truncated sum's norm drifts from 1 by
/// more than `epsilon`; otherwise the sum is renormalized.
pub fn evolve_dilated(
    state: &RegisterState,
    h: &DilatedHamiltonian,
    t: f64,
    epsilon: f64,
    engine: EvolutionEngine,
) -> Result<RegisterState> {
    check_dilation_layout(state.layout(), h)?;
    if !t.is_finite() {
        return Err(Error::invalid("evolution time must be finite"));
    }
    let cart_norm = norm(&state.amplitudes[..h.dim]);
    if cart_norm > NORM_TOL {
        return Err(Error::invalid(format!(
            "ancilla-|0⟩ block must be empty on entry (norm {cart_norm})"
        )));
    }
    let out = match engine {
        EvolutionEngine::ExactSpectral => h.exact_evolve(t, &state.amplitudes)?,
        EvolutionEngine::Taylor => {
            let order = taylor_order(h.norm_bound, t, epsilon)?;
            let raw = h.taylor_evolve(t, order, &state.amplitudes)?;
            let drift = (norm(&raw) - 1.0).abs();
            if drift > epsilon {
                return Err(Error::Numerical(format!(
                    "Taylor renormalization drift {drift:e} exceeds epsilon {epsilon:e}"
                )));
            }
            raw
        }
    };
    RegisterState::normalized(state.layout.clone(), out)
}

fn check_dilation_layout(layout: &RegisterLayout, h: &DilatedHamiltonian) -> Result<()> {
    let regs = layout.registers();
    if regs[0] != ("anc".to_string(), 1) {
        return Err(Error::invalid(format!("layout {layout} must start with `anc:1`")));
    }
    if layout.dim() != 2 * h.dim {
        return Err(Error::invalid(format!(
            "layout {layout} does not match dilation size {}",
            2 * h.dim
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureMode {
    /// Draw the outcome from a ChaCha8 generator seeded with this value.
    Sample(u64),
    /// Force this outcome (0 or 1).
    Postselect(u8),
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub outcome: u8,
    /// Selected block renormalized; the other block is zero.
    pub collapsed: RegisterState,
    /// True probability of `outcome`.
    pub probability: f64,
    /// Probability of ancilla `|0⟩`.
    pub p0: f64,
}

/// Measures register `anc` (width 1).
pub fn measure_ancilla(state: &RegisterState, mode: MeasureMode) -> Result<Measurement> {
    let pos = state.layout.require("anc")?;
    if state.layout.registers[pos].1 != 1 {
        return Err(Error::invalid("ancilla register must be one qubit"));
    }
    let stride = state.layout.stride(pos);
    let bit = |idx: usize| ((idx / stride) & 1) as u8;
    let p0: f64 = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| bit(*i) == 0)
        .map(|(_, a)| a.norm_sqr())
        .sum::<f64>()
        .clamp(0.0, 1.0);
    let outcome = match mode {
        MeasureMode::Sample(seed) => u8::from(ChaCha8Rng::seed_from_u64(seed).random::<f64>() >= p0),
        MeasureMode::Postselect(o) if o <= 1 => o,
        MeasureMode::Postselect(o) => return Err(Error::invalid(format!("ancilla outcome {o} is not a bit"))),
    };
    let probability = if outcome == 0 { p0 } else { 1.0 - p0 };
    if probability <= 0.0 {
        return Err(Error::invalid(format!("ancilla outcome {outcome} has zero probability")));
    }
    let amps = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| if bit(i) == outcome { a } else { ZERO })
        .collect();
    let collapsed = RegisterState::normalized(state.layout.clone(), amps)?;
    Ok(Measurement { outcome, collapsed, probability, p0 })
}

/// Repetition counts for reaching ancilla `|0⟩`: `1/p0` without
/// amplification, `⌈(π/4)/asin(√p0)⌉` Grover rounds with it.
pub fn amplification_cost(p0: f64) -> Result<(f64, u64)> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::invalid(format!("p0 = {p0} outside (0, 1]")));
    }
    Ok((1.0 / p0, ((PI / 4.0) / p0.sqrt().asin()).ceil() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Repeat evolve-and-measure until ancilla `|0⟩`, seeded.
    Sample { seed: u64 },
    /// Condition on ancilla `|0⟩` after one evolution.
    Postselect,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub scheme: InterpolationScheme,
    pub epsilon: f64,
    pub engine: EvolutionEngine,
    pub mode: PipelineMode,
    /// Overrides the evolution time chosen from `epsilon` and `√21`.
    pub time: Option<f64>,
    pub iteration_cap: u64,
}

impl PipelineOptions {
    pub fn new(scheme: InterpolationScheme, epsilon: f64, engine: EvolutionEngine, mode: PipelineMode) -> Self {
        PipelineOptions { scheme, epsilon, engine, mode, time: None, iteration_cap: DEFAULT_ITERATION_CAP }
    }
}

/// Operator-norm bound on bilinear interpolation used to pick `t`.
pub const SIGMA_SQ_BOUND: f64 = 21.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    pub t: f64,
    pub epsilon: f64,
    pub engine: EvolutionEngine,
    /// Terms the Taylor engine uses at this `t` (or would, for the exact engine).
    pub taylor_order: usize,
    pub norm_bound: f64,
    pub p0: f64,
    pub expected_iterations_plain: f64,
    pub expected_iterations_amplified: u64,
    pub post_selected: bool,
    /// Evolve-and-measure rounds actually run (1 when post-selected).
    pub iterations: u64,
    /// `‖state entering the last round - initial state‖₂`, nonzero only when
    /// failed rounds fed their collapsed state back in.
    pub reentry_deviation: f64,
}

impl EvolutionReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "t={}", self.t).unwrap();
        writeln!(s, "epsilon={}", self.epsilon).unwrap();
        writeln!(s, "engine={}", self.engine).unwrap();
        writeln!(s, "taylor_order={}", self.taylor_order).unwrap();
        writeln!(s, "norm_bound={}", self.norm_bound).unwrap();
        writeln!(s, "p0={}", self.p0).unwrap();
        writeln!(s, "expected_iterations_plain={}", self.expected_iterations_plain).unwrap();
        writeln!(s, "expected_iterations_amplified={}", self.expected_iterations_amplified).unwrap();
        writeln!(s, "post_selected={}", self.post_selected).unwrap();
        writeln!(s, "iterations={}", self.iterations).unwrap();
        writeln!(s, "reentry_deviation={}", self.reentry_deviation).unwrap();
        s
    }
}

#[derive(Debug, Clone)]
pub struct QuantumCtOutput {
    /// `|amplitude|` with the sign of the phase-aligned real part.
    pub image: ImageGrid,
    /// Final `[y, x]` state, globally phase-aligned.
    pub state: RegisterState,
    pub report: EvolutionReport,
}

/// Prepares `|1⟩ ⊗ polar spectrum` on `[anc:1, idx]`: encode the sinogram,
/// QFT the ρ register, then center and origin-reference the ρ bins.
pub fn prepare_polar_state(sino: &Sinogram, block_dim: usize) -> Result<RegisterState> {
    let (n_rho, n_theta) = (sino.n_rho(), sino.n_theta());
    let field = ComplexField::from_real(n_rho, n_theta, sino.data())?;
    let (state, _) = encode_amplitudes(&field, "rho", "theta")?;
    let state = qft_on_register(&state, "rho", Direction::Forward)?;
    let state = state.map_register("rho", |slice| {
        let m = slice.len();
        for (k, v) in slice.iter_mut().enumerate() {
            *v *= origin_phase(crate::spectral::centered_frequency(k, m), m);
        }
        shift_slice(slice);
        Ok(())
    })?;
    if block_dim < n_rho * n_theta {
        return Err(Error::invalid("block dimension smaller than the polar grid"));
    }
    let mut amps = vec![ZERO; 2 * block_dim];
    amps[block_dim..block_dim + n_rho * n_theta].copy_from_slice(state.amplitudes());
    let layout = RegisterLayout::new([("anc", 1), ("idx", log2_exact(block_dim, "block dimension")?)])?;
    RegisterState::new(layout, amps)
}

/// Maps a post-selected `[anc, idx]` state (ancilla `|0⟩`) to the image
/// state on `[y, x]`: drop the ancilla, undo centering and origin phase,
/// inverse QFT on both frequency registers, align the global phase.
pub fn finish_cartesian_state(state: &RegisterState, n: usize) -> Result<RegisterState> {
    let w = log2_exact(n, "image side")?;
    if state.amplitudes.len() < 2 * n * n {
        return Err(Error::invalid("state too small for the image"));
    }
    let cart = state.amplitudes[..n * n].to_vec();
    let spec = RegisterState::normalized(RegisterLayout::new([("ky", w), ("kx", w)])?, cart)?;
    let uncenter = |slice: &mut [Complex64]| {
        let m = slice.len();
        let half = (m / 2) as i64;
        for (c, v) in slice.iter_mut().enumerate() {
            *v *= origin_phase(c as i64 - half, m).conj();
        }
        unshift_slice(slice);
        Ok(())
    };
    let spec = spec.map_register("ky", uncenter)?.map_register("kx", uncenter)?;
    let img = qft_on_register(&spec, "ky", Direction::Inverse)?;
    let img = qft_on_register(&img, "kx", Direction::Inverse)?;
    let aligned = phase_align(img.amplitudes());
    RegisterState::new(RegisterLayout::new([("y", w), ("x", w)])?, aligned)
}

/// Multiplies by `e^{-iφ}`, `φ = arg(Σ a²)/2`, choosing the branch with a
/// nonnegative real sum. Makes a real-proportional vector real.
pub fn phase_align(a: &[Complex64]) -> Vec<Complex64> {
    let s: Complex64 = a.iter().map(|v| v * v).sum();
    let rot = Complex64::from_polar(1.0, -s.arg() / 2.0);
    let mut out: Vec<Complex64> = a.iter().map(|v| v * rot).collect();
    if out.iter().map(|v| v.re).sum::<f64>() < 0.0 {
        out.iter_mut().for_each(|v| *v = -*v);
    }
    out
}

/// `min_φ ‖a/‖a‖ · e^{iφ} - b/‖b‖‖₂`.
pub fn phase_aligned_distance(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("vectors differ in length"));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cannot compare against a zero vector"));
    }
    let overlap: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok((2.0 - 2.0 * (overlap.norm() / (na * nb)).min(1.0)).max(0.0).sqrt())
}

/// End-to-end quantum CT reconstruction on an `n_rho x n_rho` image.
pub fn run_ct_quantum_pipeline(sino: &Sinogram, opts: &PipelineOptions) -> Result<QuantumCtOutput> {
    let n = sino.n_rho();
    log2_exact(n, "n_rho")?;
    log2_exact(sino.n_theta(), "n_theta")?;
    if sino.data().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("sinogram is identically zero"));
    }
    let a = build_interp_matrix(n, sino.n_rho(), sino.n_theta(), opts.scheme)?;
    let h = DilatedHamiltonian::new(a)?;
    run_ct_quantum_pipeline_with(sino, &h, opts)
}

/// As [`run_ct_quantum_pipeline`] with a prebuilt Hamiltonian (reusing its
/// cached spectrum).
pub fn run_ct_quantum_pipeline_with(
    sino: &Sinogram,
    h: &DilatedHamiltonian,
    opts: &PipelineOptions,
) -> Result<QuantumCtOutput> {
    let n = h.matrix().side();
    let polar = h.matrix().polar_grid();
    if (polar.n_rho, polar.n_theta) != (sino.n_rho(), sino.n_theta()) {
        return Err(Error::invalid("sinogram shape does not match the interpolation matrix"));
    }
    let t = match opts.time {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::invalid(format!("evolution time {t} must be positive"))),
        None => choose_evolution_time(opts.epsilon, SIGMA_SQ_BOUND.sqrt())?,
    };
    let order = taylor_order(h.norm_bound(), t, opts.epsilon)?;
    let initial = prepare_polar_state(sino, h.block_dim())?;

    let (selected, p0, iterations, entering) = match opts.mode {
        PipelineMode::Postselect => {
            let evolved = evolve_dilated(&initial, h, t, opts.epsilon, opts.engine)?;
            let m = measure_ancilla(&evolved, MeasureMode::Postselect(0))?;
            (m.collapsed, m.p0, 1, initial.clone())
        }
        PipelineMode::Sample { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut current = initial.clone();
            let mut last_p0 = f64::NAN;
            let mut found = None;
            for it in 1..=opts.iteration_cap {
                let evolved = evolve_dilated(&current, h, t, opts.epsilon, opts.engine)?;
                let m = measure_ancilla(&evolved, MeasureMode::Sample(rng.next_u64()))?;
                last_p0 = m.p0;
                if m.outcome == 0 {
                    found = Some((m.collapsed, m.p0, it, current));
                    break;
                }
                if m.p0 < DEAD_BRANCH_P0 {
                    return Err(Error::Numerical(format!(
                        "ancilla |0⟩ branch vanished after {it} rounds (p0 = {:e}); \
                         the re-entered state has collapsed into ker A",
                        m.p0
                    )));
                }
                current = m.collapsed;
            }
            found.ok_or_else(|| {
                Error::Numerical(format!(
                    "no ancilla |0⟩ after {} rounds (last p0 = {last_p0:e})",
                    opts.iteration_cap
                ))
            })?
        }
    };
    let reentry_deviation = norm(
        &entering.amplitudes().iter().zip(initial.amplitudes()).map(|(a, b)| a - b).collect::<Vec<_>>(),
    );
    let (plain, amplified) = amplification_cost(p0)?;
    let state = finish_cartesian_state(&selected, n)?;
    let image = ImageGrid::new(
        n,
        state.amplitudes().iter().map(|a| a.norm().copysign(a.re)).collect(),
    )?;
    let report = EvolutionReport {
        t,
        epsilon: opts.epsilon,
        engine: opts.engine,
        taylor_order: order,
        norm_bound: h.norm_bound(),
        p0,
        expected_iterations_plain: plain,
        expected_iterations_amplified: amplified,
        post_selected: opts.mode == PipelineMode::Postselect,
        iterations,
        reentry_deviation,
    };
    Ok(QuantumCtOutput { image, state, report })
}

/// Shot counts over the last two registers, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelHistogram {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u64>,
}

impl PixelHistogram {
    pub fn shots(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `½ Σ |count/shots - p|`.
    pub fn total_variation(&self, probabilities: &[f64]) -> f64 {
        let shots = self.shots() as f64;
        0.5 * self.counts.iter().zip(probabilities).map(|(&c, p)| (c as f64 / shots - p).abs()).sum::<f64>()
    }
}

/// Measures every qubit `shots` times and histograms the last two registers.
pub fn sample_pixels(state: &RegisterState, shots: u64, seed: u64) -> Result<PixelHistogram> {
    if shots == 0 {
        return Err(Error::invalid("shots must be >= 1"));
    }
    let regs = state.layout.registers();
    if regs.len() < 2 {
        return Err(Error::invalid("pixel sampling needs row and column registers"));
    }
    let rows = 1usize << regs[regs.len() - 2].1;
    let cols = 1usize << regs[regs.len() - 1].1;
    let probs: Vec<f64> = state.amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; rows * cols];
    for _ in 0..shots {
        counts[dist.sample(&mut rng) % (rows * cols)] += 1;
    }
    Ok(PixelHistogram { rows, cols, counts })
}

/// `|amplitude|²` summed onto the last two registers.
pub fn pixel_probabilities(state: &RegisterState) -> Vec<f64> {
    let regs = state.layout.registers();
    let cells = 1usize << regs.iter().rev().take(2).map(|(_, w)| w).sum::<u32>();
    let mut p = vec![0.0; cells];
    for (i, a) in state.amplitudes.iter().enumerate() {
        p[i % cells] += a.norm_sqr();
    }
    p
}

pub fn encode_rvec<W: Write>(state: &RegisterState, w: &mut W) -> Result<()> {
    writeln!(w, "RVEC1 {} {}", state.layout.total_qubits(), state.layout)?;
    fileio::write_f64s(w, state.amplitudes.iter().flat_map(|a| [a.re, a.im]))
}

pub fn decode_rvec<R: Read>(r: &mut R) -> Result<RegisterState> {
    let fields = fileio::read_header(r)?;
    if fields.len() != 3 || fields[0] != "RVEC1" {
        return Err(Error::format("expected `RVEC1 <q> <layout>` header"));
    }
    let q = fileio::parse_usize(&fields[1], "qubit count")?;
    let layout: RegisterLayout = fields[2].parse()?;
    if layout.total_qubits() as usize != q {
        return Err(Error::format(format!("layout {layout} does not have {q} qubits")));
    }
    let flat = fileio::read_f64s(r, 2 * layout.dim())?;
    let amps = flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    RegisterState::new(layout, amps).map_err(|e| Error::format(e.to_string()))
}

pub fn write_rvec(state: &RegisterState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_rvec(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_rvec(path: &Path) -> Result<RegisterState> {
    decode_rvec(&mut BufReader::new(File::open(path)?))
}
