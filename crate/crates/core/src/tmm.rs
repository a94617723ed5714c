//! Normal-incidence transfer matrix simulation of a thin-film stack on a
//! thick, incoherently treated substrate.
//!
//! Index convention: materials are described by `N = n + i·k` with `k ≥ 0`
//! meaning absorption. Internally the characteristic matrices are written in
//! the `n − i·k` convention of the classic thin-film literature, so every
//! admittance and phase uses `conj(N)`. For lossless layers the two agree.

use std::ops::Mul;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::materials::{index_on_grid, MaterialDb, WavelengthGrid, NUM_MATERIALS};
use crate::{Error, Result};

/// Longest stack the simulator accepts.
pub const MAX_LAYERS: usize = 64;

/// Default substrate thickness in µm.
pub const SUBSTRATE_THICKNESS_UM: f64 = 500.0;

const DENOM_FLOOR: f64 = 1e-300;
const RESCALE_AT: f64 = 1e100;

/// A multilayer stack, listed from the air side toward the substrate.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    materials: Vec<usize>,
    thicknesses: Vec<f64>,
}

impl Design {
    pub fn new(materials: Vec<usize>, thicknesses: Vec<f64>) -> Result<Self> {
        if materials.len() != thicknesses.len() {
            return Err(Error::InvalidDesign(format!(
                "{} materials but {} thicknesses",
                materials.len(),
                thicknesses.len()
            )));
        }
        if materials.len() > MAX_LAYERS {
            return Err(Error::InvalidDesign(format!(
                "{} layers exceeds the limit of {MAX_LAYERS}",
                materials.len()
            )));
        }
        if let Some(&m) = materials.iter().find(|&&m| m >= NUM_MATERIALS) {
            return Err(Error::InvalidDesign(format!("material id {m} is not a design material")));
        }
        if let Some(d) = thicknesses.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidDesign(format!("thickness {d} is not positive")));
        }
        Ok(Self {
            materials,
            thicknesses,
        })
    }

    pub fn empty() -> Self {
        Self {
            materials: Vec::new(),
            thicknesses: Vec::new(),
        }
    }

    pub fn materials(&self) -> &[usize] {
        &self.materials
    }

    pub fn thicknesses(&self) -> &[f64] {
        &self.thicknesses
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.materials.iter().copied().zip(self.thicknesses.iter().copied())
    }

    /// Same materials with new thicknesses.
    pub fn with_thicknesses(&self, thicknesses: Vec<f64>) -> Result<Self> {
        Self::new(self.materials.clone(), thicknesses)
    }

    pub fn total_thickness(&self) -> f64 {
        self.thicknesses.iter().sum()
    }
}

/// Reflectance block followed by transmittance block, each aligned with the
/// wavelength grid (142 values on the default grid).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(Error::Other(format!(
                "spectrum needs an even, non-zero number of values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Other("spectrum contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn from_parts(reflectance: &[f64], transmittance: &[f64]) -> Result<Self> {
        if reflectance.len() != transmittance.len() {
            return Err(Error::Other("R and T blocks differ in length".into()));
        }
        Self::new([reflectance, transmittance].concat())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn wavelengths(&self) -> usize {
        self.values.len() / 2
    }

    pub fn reflectance(&self) -> &[f64] {
        &self.values[..self.wavelengths()]
    }

    pub fn transmittance(&self) -> &[f64] {
        &self.values[self.wavelengths()..]
    }
}

/// 2×2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mat2([[one, zero], [zero, one]])
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Mat2(self.0.map(|row| row.map(|z| z * s)))
    }

    /// Product matrix of the same stack traversed in the opposite direction.
    /// Holds for products of characteristic matrices (equal diagonal entries).
    pub fn reversed(&self) -> Self {
        let m = &self.0;
        Mat2([[m[1][1], m[0][1]], [m[1][0], m[0][0]]])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// Admittance of a medium with index `n + i·k`, in the matrix convention.
pub fn admittance(index: Complex64) -> Complex64 {
    index.conj()
}

/// Characteristic matrix of one layer at normal incidence.
///
/// With `η = conj(N)` and `δ = 2π·η·d/λ`:
/// `[[cos δ, i·sin δ/η], [i·η·sin δ, cos δ]]`. Unimodular for any index.
pub fn layer_matrix(index: Complex64, thickness_nm: f64, wavelength_nm: f64) -> Mat2 {
    let eta = admittance(index);
    let delta = eta * (2.0 * std::f64::consts::PI * thickness_nm / wavelength_nm);
    let (c, s) = (delta.cos(), delta.sin());
    let i = Complex64::i();
    Mat2([[c, i * s / eta], [i * eta * s, c]])
}

/// Derivative of [`layer_matrix`] with respect to the thickness.
pub fn layer_matrix_dthickness(index: Complex64, thickness_nm: f64, wavelength_nm: f64) -> Mat2 {
    let eta = admittance(index);
    let k = eta * (2.0 * std::f64::consts::PI / wavelength_nm);
    let delta = k * thickness_nm;
    let (c, s) = (delta.cos(), delta.sin());
    let i = Complex64::i();
    Mat2([[-s * k, i * c * k / eta], [i * eta * c * k, -s * k]])
}

/// Amplitude reflection and transmission coefficients of a stack with product
/// matrix `m` between media of admittance `eta_in` and `eta_out`.
pub fn amplitudes(m: &Mat2, eta_in: Complex64, eta_out: Complex64) -> (Complex64, Complex64) {
    let m = &m.0;
    let b = m[0][0] + m[0][1] * eta_out;
    let c = m[1][0] + m[1][1] * eta_out;
    let denom = eta_in * b + c;
    ((eta_in * b - c) / denom, 2.0 * eta_in / denom)
}

/// Intensity coefficients `(R, T)` from amplitude coefficients.
pub fn intensities(r: Complex64, t: Complex64, eta_in: Complex64, eta_out: Complex64) -> (f64, f64) {
    (r.norm_sqr(), eta_out.re / eta_in.re * t.norm_sqr())
}

/// Front (air-side) and back (substrate-side) coefficients of the coherent
/// coating, per wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct StackCoefficients {
    pub r_front: Vec<f64>,
    pub t_front: Vec<f64>,
    pub r_back: Vec<f64>,
    pub t_back: Vec<f64>,
}

/// Incoherent combination of the coating with a thick substrate.
///
/// `tau` is the single-pass internal transmittance of the substrate and
/// `(r_b, t_b)` the bare substrate→air back interface.
#[derive(Debug, Clone, Copy)]
pub struct SubstrateClosure {
    pub tau: f64,
    pub r_b: f64,
    pub t_b: f64,
}

impl SubstrateClosure {
    /// Total `(R, T)` for given coating coefficients.
    pub fn combine(&self, r_front: f64, t_front: f64, r_back: f64, t_back: f64) -> (f64, f64) {
        let tau2 = self.tau * self.tau;
        let loop_gain = r_back * self.r_b * tau2;
        debug_assert!(!(loop_gain >= 1.0), "passive media cannot have loop gain {loop_gain}");
        let denom = (1.0 - loop_gain).max(DENOM_FLOOR);
        let t = t_front * self.tau * self.t_b / denom;
        let r = r_front + t_front * t_back * self.r_b * tau2 / denom;
        (r, t)
    }

    /// Partial derivatives of `(R, T)` with respect to
    /// `(r_front, t_front, r_back, t_back)`.
    pub fn combine_partials(
        &self,
        _r_front: f64,
        t_front: f64,
        r_back: f64,
        t_back: f64,
    ) -> ([f64; 4], [f64; 4]) {
        let tau2 = self.tau * self.tau;
        let g = self.r_b * tau2;
        let denom = (1.0 - r_back * g).max(DENOM_FLOOR);
        let dr = [
            1.0,
            t_back * g / denom,
            t_front * t_back * g * g / (denom * denom),
            t_front * g / denom,
        ];
        let tt = self.tau * self.t_b;
        let dt = [0.0, tt / denom, t_front * tt * g / (denom * denom), 0.0];
        (dr, dt)
    }
}

/// Forward model bound to a material database and wavelength grid. Indices
/// are interpolated once at construction; simulation is then a pure function
/// of the design.
#[derive(Debug, Clone)]
pub struct Simulator {
    grid: WavelengthGrid,
    indices: Vec<Vec<Complex64>>,
    substrate: Vec<Complex64>,
    closures: Vec<SubstrateClosure>,
    substrate_thickness_um: f64,
}

impl Simulator {
    pub fn new(db: &MaterialDb, grid: &WavelengthGrid) -> Result<Self> {
        Self::with_substrate_thickness(db, grid, SUBSTRATE_THICKNESS_UM)
    }

    pub fn with_substrate_thickness(
        db: &MaterialDb,
        grid: &WavelengthGrid,
        substrate_thickness_um: f64,
    ) -> Result<Self> {
        let indices = db
            .tables()
            .iter()
            .map(|t| index_on_grid(t, grid))
            .collect::<Result<Vec<_>>>()?;
        let substrate = db.substrate().index_on_grid(grid)?;
        let air = Complex64::new(1.0, 0.0);
        let d_sub_nm = substrate_thickness_um * 1e3;
        let closures = substrate
            .iter()
            .zip(grid.points())
            .map(|(&ns, &w)| {
                let tau = (-4.0 * std::f64::consts::PI * ns.im * d_sub_nm / w).exp();
                let eta_s = admittance(ns);
                let (r, t) = amplitudes(&Mat2::identity(), eta_s, air);
                let (r_b, t_b) = intensities(r, t, eta_s, air);
                SubstrateClosure { tau, r_b, t_b }
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            indices,
            substrate,
            closures,
            substrate_thickness_um,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn substrate_thickness_um(&self) -> f64 {
        self.substrate_thickness_um
    }

    /// Interpolated index of `material` at grid point `w`.
    pub fn index(&self, material: usize, w: usize) -> Complex64 {
        self.indices[material][w]
    }

    pub fn substrate_index(&self, w: usize) -> Complex64 {
        self.substrate[w]
    }

    pub fn closure(&self, w: usize) -> SubstrateClosure {
        self.closures[w]
    }

    fn check(&self, design: &Design) -> Result<()> {
        if let Some(&m) = design.materials().iter().find(|&&m| m >= self.indices.len()) {
            return Err(Error::UnknownMaterial(m));
        }
        Ok(())
    }

    /// Characteristic matrix product of the coating at grid point `w`.
    /// Unscaled; can overflow for thick absorbing stacks, see
    /// [`Simulator::scaled_stack_matrix`].
    pub fn stack_matrix(&self, design: &Design, w: usize) -> Mat2 {
        let lambda = self.grid.points()[w];
        design.layers().fold(Mat2::identity(), |acc, (m, d)| {
            acc * layer_matrix(self.indices[m][w], d, lambda)
        })
    }

    /// Product matrix as `(M / e^s, s)`. Absorbing layers grow the entries
    /// exponentially; the scale is pulled out whenever they get large.
    pub fn scaled_stack_matrix(&self, design: &Design, w: usize) -> (Mat2, f64) {
        let lambda = self.grid.points()[w];
        let mut acc = Mat2::identity();
        let mut log_scale = 0.0;
        for (m, d) in design.layers() {
            acc = acc * layer_matrix(self.indices[m][w], d, lambda);
            let big = acc.max_norm();
            if big > RESCALE_AT {
                acc = acc.scaled(1.0 / big);
                log_scale += big.ln();
            }
        }
        (acc, log_scale)
    }

    /// `(r_front, t_front, r_back, t_back)` at grid point `w`.
    pub fn coefficients_at(&self, design: &Design, w: usize) -> (f64, f64, f64, f64) {
        let (m, log_scale) = self.scaled_stack_matrix(design, w);
        let air = Complex64::new(1.0, 0.0);
        let sub = admittance(self.substrate[w]);
        let t_scale = (-2.0 * log_scale).exp();
        let (r, t) = amplitudes(&m, air, sub);
        let (rf, tf) = intensities(r, t, air, sub);
        let (r, t) = amplitudes(&m.reversed(), sub, air);
        let (rb, tb) = intensities(r, t, sub, air);
        (rf, tf * t_scale, rb, tb * t_scale)
    }

    /// Coherent coefficients of the coating for both incidence directions.
    pub fn coherent_stack(&self, design: &Design) -> Result<StackCoefficients> {
        self.check(design)?;
        let n = self.grid.len();
        let mut out = StackCoefficients {
            r_front: Vec::with_capacity(n),
            t_front: Vec::with_capacity(n),
            r_back: Vec::with_capacity(n),
            t_back: Vec::with_capacity(n),
        };
        for w in 0..n {
            let (rf, tf, rb, tb) = self.coefficients_at(design, w);
            out.r_front.push(rf);
            out.t_front.push(tf);
            out.r_back.push(rb);
            out.t_back.push(tb);
        }
        Ok(out)
    }

    /// Total reflectance and transmittance spectrum of coating + substrate.
    pub fn simulate(&self, design: &Design) -> Result<Spectrum> {
        self.check(design)?;
        let n = self.grid.len();
        let mut values = vec![0.0; 2 * n];
        for w in 0..n {
            let (rf, tf, rb, tb) = self.coefficients_at(design, w);
            let (r, t) = self.closures[w].combine(rf, tf, rb, tb);
            if !(r.is_finite() && t.is_finite()) || r < -1e-12 || t < -1e-12 || r + t > 1.0 + 1e-9 {
                return Err(Error::NonPhysical {
                    wavelength: self.grid.points()[w],
                });
            }
            values[w] = r.clamp(0.0, 1.0);
            values[n + w] = t.clamp(0.0, 1.0);
        }
        Ok(Spectrum { values })
    }

    /// Simulates many designs in parallel. Results keep input order and match
    /// [`Simulator::simulate`] exactly; one failure does not abort the batch.
    pub fn simulate_batch(&self, designs: &[Design]) -> Vec<Result<Spectrum>> {
        designs.par_iter().map(|d| self.simulate(d)).collect()
    }
}
