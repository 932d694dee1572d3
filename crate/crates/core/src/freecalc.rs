//! Free-probability functionals of grid densities: Hilbert transform,
//! Voiculescu free entropy, free Fisher information, Stieltjes transform and
//! the complex Burgers residual.
//!
//! On a uniform grid `x_i − x_j = (i − j) h`, so the principal-value sum
//! `h Σ_{j≠i} ρ_j / (x_i − x_j)` becomes a convolution with the fixed odd
//! kernel `1/k`, and the log-interaction of the entropy a convolution with
//! `log|k|`. Both are evaluated as direct sums with a fixed summation order
//! per output cell.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::measures::{Grid, GridDensity};
use crate::potentials::{Family, Potential};

/// Real field sampled at the cell centres of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(invalid("field length does not match grid"));
        }
        Ok(GridField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// `(z, G(z))` with `G(z) = ∫ μ(dx)/(z − x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StieltjesValue {
    pub z: Complex64,
    pub g: Complex64,
}

/// Sum `Σ_j a[j] b[j]` with eight interleaved partial sums; the order is
/// fixed so results do not depend on how callers split the outer loop.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

const PARALLEL_MIN_CELLS: usize = 512;

/// Indices of cells with `ρ_i > frac · max ρ` whose neighbours both carry
/// mass. Cells straddling a support endpoint are excluded.
pub fn support_interior(density: &GridDensity, frac: f64) -> impl Iterator<Item = usize> + '_ {
    let rho = density.values();
    let threshold = frac * density.max_value();
    (1..rho.len().saturating_sub(1))
        .filter(move |&i| rho[i] > threshold && rho[i - 1] > 0.0 && rho[i + 1] > 0.0)
}

/// `Hρ(x_i) = h Σ_{j≠i} ρ_j/(x_i − x_j) − h ρ'(x_i)`.
///
/// The `−h ρ'` term restores the contribution of the omitted singular cell;
/// `ρ'` is a central difference, one-sided at the two boundary cells. The sum
/// runs over distances `d = |i − j|` pairing `ρ_{i−d} − ρ_{i+d}`, so mirrored
/// inputs give exactly negated outputs.
pub fn hilbert_transform(density: &GridDensity) -> GridField {
    let grid = *density.grid();
    let rho = density.values();
    let n = grid.n;
    let weights: Vec<f64> = (1..n).map(|d| 1.0 / d as f64).collect();
    let mut padded = vec![0.0; 3 * n - 2];
    padded[n - 1..2 * n - 1].copy_from_slice(rho);
    let cell = |i: usize| -> f64 {
        let c = i + n - 1;
        let mut acc = [0.0f64; 8];
        for (block, w) in weights.chunks(8).enumerate() {
            let base = c - 8 * block - 1;
            let top = c + 8 * block + 1;
            for (k, wk) in w.iter().enumerate() {
                acc[k] += (padded[base - k] - padded[top + k]) * wk;
            }
        }
        let conv = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
        let hd = if i == 0 {
            rho[1] - rho[0]
        } else if i == n - 1 {
            rho[n - 1] - rho[n - 2]
        } else {
            0.5 * (rho[i + 1] - rho[i - 1])
        };
        conv - hd
    };
    let values = if n >= PARALLEL_MIN_CELLS {
        (0..n).into_par_iter().map(cell).collect()
    } else {
        (0..n).map(cell).collect()
    };
    GridField { grid, values }
}

/// `Σ_V(μ) = −∬ log|x − y| μ(dx)μ(dy) + ∫ V dμ` on the grid, with the exact
/// self-cell integral `∫∫_{cell²} −log|x − y| = h²(3/2 − log h)` on the
/// diagonal.
pub fn free_entropy(density: &GridDensity, potential: &Potential) -> Result<f64> {
    let grid = *density.grid();
    potential.check_grid(&grid)?;
    let rho = density.values();
    let n = grid.n;
    let h = grid.h();
    let logs: Vec<f64> = (0..n).map(|d| if d == 0 { 0.0 } else { (d as f64).ln() }).collect();
    let row = |i: usize| -> f64 { rho[i] * dot(&rho[i + 1..], &logs[1..n - i]) };
    let off: f64 = if n >= PARALLEL_MIN_CELLS {
        (0..n).into_par_iter().map(row).collect::<Vec<_>>().iter().sum()
    } else {
        (0..n).map(row).sum()
    };
    let total: f64 = rho.iter().sum::<f64>() * h;
    let diag: f64 = rho.iter().map(|r| r * r).sum::<f64>() * h * h;
    // Σ_{i≠j} ρ_iρ_j h² log|x_i−x_j| = 2h² Σ_{i<j} ρ_iρ_j log|i−j| + (total² − diag) log h
    let interaction = -2.0 * h * h * off - (total * total - diag) * h.ln() - diag * (h.ln() - 1.5);
    let external = density.integrate(|x| potential.v(x));
    Ok(interaction + external)
}

/// `Σ_V(μ) − Σ_V(reference)`.
pub fn relative_free_entropy(
    density: &GridDensity,
    potential: &Potential,
    reference: &GridDensity,
) -> Result<f64> {
    density.grid().ensure_matches(reference.grid())?;
    if density.values() == reference.values() {
        return Ok(0.0);
    }
    Ok(free_entropy(density, potential)? - free_entropy(reference, potential)?)
}

/// Free Fisher information and squared Wasserstein gradient norm, from one
/// shared Hilbert transform. Vacuum cells contribute nothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherTerms {
    /// `∫ (Hρ − V'/2)² dμ`
    pub fisher: f64,
    /// `∫ ρ (V' − 2Hρ)² dx`
    pub grad_sq: f64,
}

pub fn fisher_terms_with(density: &GridDensity, potential: &Potential, hilbert: &GridField) -> FisherTerms {
    let grid = density.grid();
    let h = grid.h();
    let mut fisher_acc = 0.0;
    let mut grad_acc = 0.0;
    for (i, (&r, &hr)) in density.values().iter().zip(hilbert.values()).enumerate() {
        if r > 0.0 {
            let dv = potential.dv(grid.center(i));
            let e = hr - 0.5 * dv;
            fisher_acc += e * e * r;
            let g = dv - 2.0 * hr;
            grad_acc += r * g * g;
        }
    }
    FisherTerms { fisher: h * fisher_acc, grad_sq: h * grad_acc }
}

pub fn fisher_terms(density: &GridDensity, potential: &Potential) -> FisherTerms {
    fisher_terms_with(density, potential, &hilbert_transform(density))
}

pub fn free_fisher(density: &GridDensity, potential: &Potential) -> f64 {
    fisher_terms(density, potential).fisher
}

pub fn grad_norm_sq(density: &GridDensity, potential: &Potential) -> f64 {
    fisher_terms(density, potential).grad_sq
}

/// `G(z) = h Σ_i ρ_i/(z − x_i)`.
pub fn stieltjes(density: &GridDensity, z: Complex64) -> Result<StieltjesValue> {
    let grid = density.grid();
    let h = grid.h();
    let dx = if z.re < grid.left {
        grid.left - z.re
    } else if z.re > grid.right {
        z.re - grid.right
    } else {
        0.0
    };
    if dx.hypot(z.im) <= 2.0 * h || !(z.re.is_finite() && z.im.is_finite()) {
        return Err(invalid(format!("z = {z} lies within 2h of the grid on the real axis")));
    }
    Ok(StieltjesValue { z, g: stieltjes_raw(grid, density.values(), z) })
}

fn stieltjes_raw(grid: &Grid, rho: &[f64], z: Complex64) -> Complex64 {
    let h = grid.h();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &r) in rho.iter().enumerate() {
        if r != 0.0 {
            acc += r / (z - grid.center(i));
        }
    }
    acc * h
}

/// Finite-difference step for `∂_z G`.
pub const BURGERS_DZ: f64 = 1e-4;

fn dz(grid: &Grid, rho: &[f64], z: Complex64) -> Complex64 {
    let d = Complex64::new(BURGERS_DZ, 0.0);
    (stieltjes_raw(grid, rho, z + d) - stieltjes_raw(grid, rho, z - d)) / (2.0 * BURGERS_DZ)
}

fn burgers_setup(
    rho_prev: &GridDensity,
    rho_next: &GridDensity,
    dt: f64,
    z: Complex64,
) -> Result<Vec<f64>> {
    rho_prev.grid().ensure_matches(rho_next.grid())?;
    if !(dt > 0.0) {
        return Err(invalid("Burgers residual needs dt > 0"));
    }
    if z.im < 0.5 {
        return Err(invalid(format!("Burgers residual needs Im z >= 0.5, got {z}")));
    }
    Ok(rho_prev
        .values()
        .iter()
        .zip(rho_next.values())
        .map(|(a, b)| 0.5 * (a + b))
        .collect())
}

/// Residual of `∂_t G = −G ∂_z G − ½ ∫ V'(x)/(z − x)² μ(dx)` between two
/// densities `dt` apart, evaluated at the midpoint density.
pub fn burgers_residual(
    rho_prev: &GridDensity,
    rho_next: &GridDensity,
    dt: f64,
    potential: &Potential,
    z: Complex64,
) -> Result<Complex64> {
    let mid = burgers_setup(rho_prev, rho_next, dt, z)?;
    let grid = rho_prev.grid();
    let dgdt = (stieltjes_raw(grid, rho_next.values(), z) - stieltjes_raw(grid, rho_prev.values(), z)) / dt;
    let g = stieltjes_raw(grid, &mid, z);
    let gp = dz(grid, &mid, z);
    let h = grid.h();
    let mut force = Complex64::new(0.0, 0.0);
    for (i, &r) in mid.iter().enumerate() {
        if r != 0.0 {
            let x = grid.center(i);
            let w = z - x;
            force += potential.dv(x) * r / (w * w);
        }
    }
    Ok(dgdt + g * gp + 0.5 * h * force)
}

/// Same residual through the closed Burgers form for `V = θx²`:
/// `∂_t G = (−G + θz) ∂_z G + θ G`.
pub fn burgers_residual_quadratic(
    rho_prev: &GridDensity,
    rho_next: &GridDensity,
    dt: f64,
    potential: &Potential,
    z: Complex64,
) -> Result<Complex64> {
    let Family::Quadratic { theta } = *potential.family() else {
        return Err(Error::UnsupportedPotential(format!(
            "closed Burgers form needs a quadratic potential, got {}",
            potential.spec()
        )));
    };
    let mid = burgers_setup(rho_prev, rho_next, dt, z)?;
    let grid = rho_prev.grid();
    let dgdt = (stieltjes_raw(grid, rho_next.values(), z) - stieltjes_raw(grid, rho_prev.values(), z)) / dt;
    let g = stieltjes_raw(grid, &mid, z);
    let gp = dz(grid, &mid, z);
    Ok(dgdt - ((-g + theta * z) * gp + theta * g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::equilibrium_closed_form;
    use std::f64::consts::PI;

    fn semicircle(n: usize) -> GridDensity {
        let grid = Grid::symmetric(2.5, n).unwrap();
        equilibrium_closed_form(&Potential::quadratic(0.5).unwrap(), &grid).unwrap()
    }

    fn sup_error_semicircle(n: usize) -> f64 {
        let d = semicircle(n);
        let hr = hilbert_transform(&d);
        let g = d.grid();
        (0..g.n)
            .filter(|&i| g.center(i).abs() <= 1.8)
            .map(|i| (hr.values()[i] - 0.5 * g.center(i)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn semicircle_hilbert_accuracy() {
        let e1024 = sup_error_semicircle(1024);
        let e512 = sup_error_semicircle(512);
        assert!(e1024 <= 5e-3, "{e1024}");
        assert!(e512 / e1024 >= 1.5, "ratio {}", e512 / e1024);
    }

    #[test]
    fn even_density_has_zero_hilbert_at_origin() {
        let grid = Grid::symmetric(3.0, 301).unwrap();
        let d = GridDensity::from_fn(grid, |x| (-(x * x)).exp() * (2.0 + x.cos())).unwrap();
        let hr = hilbert_transform(&d);
        assert!(hr.values()[150].abs() < 1e-10);
    }

    #[test]
    fn critical_quartic_hilbert_matches_force() {
        let p = Potential::quartic(-2.0).unwrap();
        let grid = Grid::symmetric(3.0, 1024).unwrap();
        let d = equilibrium_closed_form(&p, &grid).unwrap();
        let hr = hilbert_transform(&d);
        let worst = support_interior(&d, 0.01)
            .map(|i| (hr.values()[i] - 0.5 * p.dv(grid.center(i))).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-2, "{worst}");
    }

    #[test]
    fn hilbert_is_odd_under_reflection() {
        let grid = Grid::symmetric(3.0, 200).unwrap();
        let d = GridDensity::from_fn(grid, |x| (-(x - 0.7).powi(2)).exp() + 0.3 * (-(x + 1.0).powi(2) * 4.0).exp())
            .unwrap();
        let r = d.reflected();
        let hd = hilbert_transform(&d);
        let hr = hilbert_transform(&r);
        for i in 0..grid.n {
            let a = hr.values()[i];
            let b = -hd.values()[grid.n - 1 - i];
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{i}: {a} vs {b}");
        }
    }

    /// Oracle for −∫∫_{[0,1]²} log|x − y| by tensor Gauss-Legendre on the
    /// triangles x > y after the substitution u = x − y.
    fn unit_square_log_oracle() -> f64 {
        // −∫∫ log|x−y| = −2 ∫_0^1 (1 − u) log u du
        let (x, w) = crate::quadrature::gauss_legendre(64);
        // integrate on [0,1] with u = s², du = 2s ds to tame the log
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let s = 0.5 * (xi + 1.0);
            let u = s * s;
            acc += 0.5 * wi * (1.0 - u) * u.ln() * 2.0 * s;
        }
        -2.0 * acc
    }

    #[test]
    fn uniform_free_entropy() {
        let oracle = unit_square_log_oracle();
        assert!((oracle - 1.5).abs() < 1e-6, "oracle {oracle}");
        let grid = Grid::new(0.0, 1.0, 512).unwrap();
        let d = GridDensity::from_fn(grid, |_| 1.0).unwrap();
        let s = free_entropy(&d, &Potential::zero()).unwrap();
        assert!((s - oracle).abs() < 5e-3, "{s}");
    }

    #[test]
    fn free_entropy_translation_invariant() {
        let grid = Grid::symmetric(4.0, 256).unwrap();
        let k = 17;
        let shift = k as f64 * grid.h();
        let f = |x: f64| (-(x * x) * 2.0).exp();
        let a = GridDensity::from_fn(grid, f).unwrap();
        let b = GridDensity::from_fn(grid, |x| f(x - shift)).unwrap();
        let z = Potential::zero();
        let d = free_entropy(&a, &z).unwrap() - free_entropy(&b, &z).unwrap();
        assert!(d.abs() < 1e-8, "{d}");
    }

    #[test]
    fn semicircle_minimizes_against_uniform() {
        let q = Potential::quadratic(0.5).unwrap();
        let sc = semicircle(1024);
        let uni = GridDensity::from_fn(*sc.grid(), |x| if x.abs() < 2.0 { 1.0 } else { 0.0 }).unwrap();
        let gap = free_entropy(&uni, &q).unwrap() - free_entropy(&sc, &q).unwrap();
        // uniform on an interval of length L: −∬ log = 3/2 − log L; here L = 4,
        // ∫ x²/2 = 2/3, against Σ_V(semicircle) = 1/4 + 1/2
        let exact = 1.5 - 4f64.ln() + 2.0 / 3.0 - 0.75;
        assert!(gap > 0.0 && (gap - exact).abs() < 2e-3, "{gap} vs {exact}");
        let rel = relative_free_entropy(&uni, &q, &sc).unwrap();
        assert!((rel - gap).abs() < 1e-12);
        assert_eq!(relative_free_entropy(&sc, &q, &sc).unwrap(), 0.0);
    }

    #[test]
    fn free_entropy_values_against_closed_forms() {
        // −∬ log|x−y| dμ_sc dμ_sc = 1/4 and ∫ x²/2 dμ_sc = 1/2 for radius 2
        let q = Potential::quadratic(0.5).unwrap();
        let s = free_entropy(&semicircle(1024), &q).unwrap();
        assert!((s - 0.75).abs() < 2e-3, "{s}");
    }

    fn translated_semicircle(a: f64, n: usize) -> GridDensity {
        let grid = Grid::symmetric(3.0, n).unwrap();
        GridDensity::from_fn(grid, |x| (4.0 - (x - a).powi(2)).max(0.0).sqrt() / (2.0 * PI)).unwrap()
    }

    #[test]
    fn translate_identities() {
        let q = Potential::quadratic(0.5).unwrap();
        let a = 0.5;
        let grid = Grid::symmetric(3.0, 1024).unwrap();
        let reference = equilibrium_closed_form(&q, &grid).unwrap();
        let mu = translated_semicircle(a, 1024);
        let rel = relative_free_entropy(&mu, &q, &reference).unwrap();
        assert!((rel - 0.125).abs() < 2e-3, "{rel}");
        let t = fisher_terms(&mu, &q);
        assert!((t.fisher - 0.0625).abs() < 2e-3, "{}", t.fisher);
        assert!((t.grad_sq - 0.25).abs() < 8e-3, "{}", t.grad_sq);
        assert!((t.grad_sq - 4.0 * t.fisher).abs() <= 1e-12 * t.grad_sq);
    }

    #[test]
    fn fisher_vanishes_at_equilibrium() {
        let q = Potential::quadratic(0.5).unwrap();
        let t = fisher_terms(&semicircle(1024), &q);
        assert!(t.fisher <= 1e-4, "{}", t.fisher);
        assert!(t.grad_sq <= 4e-4);
    }

    #[test]
    fn fisher_positive_for_free_bump() {
        let grid = Grid::symmetric(2.0, 256).unwrap();
        let d = GridDensity::from_fn(grid, |x| (0.25 - x * x).max(0.0)).unwrap();
        assert!(free_fisher(&d, &Potential::zero()) > 0.0);
    }

    #[test]
    fn stieltjes_examples() {
        let sc = semicircle(2048);
        let g = stieltjes(&sc, Complex64::new(0.0, 2.0)).unwrap().g;
        assert!((g - Complex64::new(0.0, 1.0 - 2f64.sqrt())).norm() < 1e-3, "{g}");
        let g = stieltjes(&sc, Complex64::new(10.0, 0.0)).unwrap().g;
        assert!((g.re - (10.0 - 96f64.sqrt()) / 2.0).abs() < 1e-3 && g.im.abs() < 1e-12);
        let z = Complex64::new(0.0, 1e3);
        let g = stieltjes(&sc, z).unwrap().g;
        assert!((z * g - 1.0).norm() <= 2e-3);
        assert!(stieltjes(&sc, Complex64::new(1.0, 0.0)).is_err());
        assert!(stieltjes(&sc, Complex64::new(2.5 + 1e-3, 0.0)).is_err());
    }

    #[test]
    fn plemelj_inversion_converges() {
        let sc = semicircle(2048);
        let x: f64 = 0.6;
        let exact = (4.0 - x * x).sqrt() / (2.0 * PI);
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&eps| {
                let g = stieltjes(&sc, Complex64::new(x, eps)).unwrap().g;
                (-g.im / PI - exact).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn burgers_stationary_semicircle() {
        let q = Potential::quadratic(0.5).unwrap();
        let sc = semicircle(1024);
        let z = Complex64::new(1.0, 1.0);
        let r = burgers_residual(&sc, &sc, 1e-3, &q, z).unwrap();
        assert!(r.norm() <= 1e-3, "{r}");
        let r2 = burgers_residual_quadratic(&sc, &sc, 1e-3, &q, z).unwrap();
        assert!((r - r2).norm() <= 1e-8, "{}", (r - r2).norm());
    }

    #[test]
    fn burgers_zero_potential_is_nonlinear_term() {
        let grid = Grid::symmetric(3.0, 256).unwrap();
        let d = GridDensity::from_fn(grid, |x| (-(x - 0.3).powi(2)).exp()).unwrap();
        let z = Complex64::new(0.4, 0.8);
        let r = burgers_residual(&d, &d, 0.01, &Potential::zero(), z).unwrap();
        let g = stieltjes_raw(&grid, d.values(), z);
        let gp = dz(&grid, d.values(), z);
        assert_eq!(r, g * gp);
    }

    #[test]
    fn burgers_rejects_bad_inputs() {
        let q = Potential::quadratic(0.5).unwrap();
        let sc = semicircle(256);
        assert!(burgers_residual(&sc, &sc, 1e-3, &q, Complex64::new(0.0, 0.2)).is_err());
        let other = semicircle(512);
        assert!(burgers_residual(&sc, &other, 1e-3, &q, Complex64::new(0.0, 1.0)).is_err());
        assert!(burgers_residual_quadratic(&sc, &sc, 1e-3, &Potential::quartic(1.0).unwrap(), Complex64::new(0.0, 1.0))
            .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn herglotz(c in -2.0f64..2.0, w in 0.1f64..1.5, re in -5.0f64..5.0, im in 1e-3f64..5.0) {
                let grid = Grid::symmetric(4.0, 64).unwrap();
                let d = GridDensity::from_fn(grid, |x| (-((x - c) / w).powi(2)).exp() + 1e-6).unwrap();
                let v = stieltjes(&d, Complex64::new(re, im));
                if let Ok(v) = v {
                    prop_assert!(v.g.im < 0.0);
                }
            }
        }
    }
}
