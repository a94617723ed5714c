//! Exact derivatives of the simulated spectrum with respect to layer
//! thicknesses, by the chain rule through the matrix product.

use num_complex::Complex64;

use prism_core::tmm::{admittance, amplitudes, layer_matrix, layer_matrix_dthickness, Mat2};
use prism_core::{Design, Error, Result, Simulator};

const RESCALE_AT: f64 = 1e100;

/// Spectrum (unclamped) and its thickness Jacobian, `values.len() × layers`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub values: Vec<f64>,
    pub layers: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, row: usize, layer: usize) -> f64 {
        self.data[row * self.layers + layer]
    }

    /// `Jᵀ·v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layers];
        for (r, vr) in v.iter().enumerate() {
            for (l, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.layers + l] * vr;
            }
        }
        out
    }
}

fn push_scaled(acc: Mat2, log: f64) -> (Mat2, f64) {
    let big = acc.max_norm();
    if big > RESCALE_AT {
        (acc.scaled(1.0 / big), log + big.ln())
    } else {
        (acc, log)
    }
}

/// Intensity reflectance/transmittance and their differentials for a
/// perturbation `dm` of the product matrix `m`.
fn intensity_differential(m: &Mat2, dm: &Mat2, eta_in: Complex64, eta_out: Complex64) -> (f64, f64, f64, f64) {
    let (r, t) = amplitudes(m, eta_in, eta_out);
    let (a, da) = (&m.0, &dm.0);
    let b = a[0][0] + a[0][1] * eta_out;
    let c = a[1][0] + a[1][1] * eta_out;
    let denom = eta_in * b + c;
    let db = da[0][0] + da[0][1] * eta_out;
    let dc = da[1][0] + da[1][1] * eta_out;
    let dden = eta_in * db + dc;
    let dr = (eta_in * db - dc) / denom - r * dden / denom;
    let dt = -t * dden / denom;
    let ratio = eta_out.re / eta_in.re;
    (
        r.norm_sqr(),
        ratio * t.norm_sqr(),
        2.0 * (r.conj() * dr).re,
        2.0 * ratio * (t.conj() * dt).re,
    )
}

/// `∂s/∂d_ℓ` for the 2W-entry spectrum `[R; T]` of `design`, materials fixed.
///
/// The values are the unclamped model output; they equal
/// [`Simulator::simulate`] wherever that lies inside `[0, 1]`.
pub fn spectrum_thickness_jacobian(design: &Design, sim: &Simulator) -> Result<Jacobian> {
    if let Some(&m) = design.materials().iter().find(|&&m| m >= prism_core::materials::NUM_MATERIALS) {
        return Err(Error::UnknownMaterial(m));
    }
    let grid = sim.grid();
    let nw = grid.len();
    let nl = design.len();
    let mut values = vec![0.0; 2 * nw];
    let mut data = vec![0.0; 2 * nw * nl];
    let air = Complex64::new(1.0, 0.0);
    let layers: Vec<(usize, f64)> = design.layers().collect();
    for (w, &lambda) in grid.points().iter().enumerate() {
        let mats: Vec<Mat2> = layers.iter().map(|&(m, d)| layer_matrix(sim.index(m, w), d, lambda)).collect();
        // prefix[l] = M_0 ⋯ M_{l-1}, suffix[l] = M_{l+1} ⋯ M_{L-1}, each with a log scale.
        let mut prefix = Vec::with_capacity(nl + 1);
        prefix.push((Mat2::identity(), 0.0));
        for m in &mats {
            let (p, s) = *prefix.last().unwrap();
            prefix.push(push_scaled(p * *m, s));
        }
        let mut suffix = vec![(Mat2::identity(), 0.0); nl];
        for l in (0..nl.saturating_sub(1)).rev() {
            let (p, s) = suffix[l + 1];
            suffix[l] = push_scaled(mats[l + 1] * p, s);
        }
        let (full, log_full) = prefix[nl];
        let sub = admittance(sim.substrate_index(w));
        let t_scale = (-2.0 * log_full).exp();
        let (rf, tf, _, _) = intensity_differential(&full, &Mat2::identity(), air, sub);
        let (rb, tb, _, _) = intensity_differential(&full.reversed(), &Mat2::identity(), sub, air);
        let (tf, tb) = (tf * t_scale, tb * t_scale);
        let closure = sim.closure(w);
        let (r_tot, t_tot) = closure.combine(rf, tf, rb, tb);
        let (pr, pt) = closure.combine_partials(rf, tf, rb, tb);
        values[w] = r_tot;
        values[nw + w] = t_tot;
        for (l, &(m, d)) in layers.iter().enumerate() {
            let dl = layer_matrix_dthickness(sim.index(m, w), d, lambda);
            let (p, lp) = prefix[l];
            let (s, ls) = suffix[l];
            let dm = (p * dl * s).scaled((lp + ls - log_full).exp());
            let (_, _, drf, dtf) = intensity_differential(&full, &dm, air, sub);
            let (_, _, drb, dtb) = intensity_differential(&full.reversed(), &dm.reversed(), sub, air);
            let grads = [drf, dtf * t_scale, drb, dtb * t_scale];
            let dr: f64 = pr.iter().zip(&grads).map(|(a, b)| a * b).sum();
            let dt: f64 = pt.iter().zip(&grads).map(|(a, b)| a * b).sum();
            data[w * nl + l] = dr;
            data[(nw + w) * nl + l] = dt;
        }
    }
    Ok(Jacobian {
        values,
        layers: nl,
        data,
    })
}
