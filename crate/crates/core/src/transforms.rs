//! Singular integral operators on the grid.
//!
//! The Beurling transform, its adjoint and iterates, and the Cauchy transform
//! are Fourier multipliers with the zero mode sent to zero. Truncated singular
//! integrals are node sums over `|x - y| >= eps`; translation-invariant kernels
//! are summed through a padded FFT, anything else by direct quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{normalize, random_smooth, rng};
use crate::conv::PaddedKernel;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::weights::Weight;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn unimodular(xi: Complex64, power: i32) -> Complex64 {
    if xi.re == 0.0 && xi.im == 0.0 {
        ZERO
    } else {
        (xi.conj() / xi).powi(power)
    }
}

/// Beurling transform: multiplier `conj(xi) / xi`.
pub fn beurling(f: &Field) -> Field {
    f.grid()
        .apply_multiplier(f, |xi| unimodular(xi, 1))
        .expect("own grid")
}

/// Adjoint (and inverse on mean-zero fields): multiplier `xi / conj(xi)`.
pub fn beurling_adjoint(f: &Field) -> Field {
    f.grid()
        .apply_multiplier(f, |xi| unimodular(xi, -1))
        .expect("own grid")
}

/// `conj(B f)`; real-linear only.
pub fn beurling_conjugate(f: &Field) -> Field {
    beurling(f).conj()
}

/// Inverse of `d/dzbar` on the mean-zero subspace: multiplier `1 / ((i/2) xi)`.
pub fn cauchy(f: &Field) -> Field {
    let half_i = Complex64::new(0.0, 0.5);
    f.grid()
        .apply_multiplier(f, |xi| {
            if xi.re == 0.0 && xi.im == 0.0 {
                ZERO
            } else {
                1.0 / (half_i * xi)
            }
        })
        .expect("own grid")
}

/// `B^N`: multiplier `(conj(xi) / xi)^N`.
pub fn beurling_iterate(f: &Field, order: u32) -> Result<Field> {
    if order == 0 {
        return Err(Error::InvalidParameter("iterate order must be at least 1".into()));
    }
    let power = i32::try_from(order).map_err(|_| Error::InvalidParameter("order too large".into()))?;
    f.grid().apply_multiplier(f, |xi| unimodular(xi, power))
}

/// Kernel of `B^N`: `((-1)^N N / pi) conj(z)^(N-1) / z^(N+1)`.
pub fn kernel_bn(z: Complex64, order: u32) -> Result<Complex64> {
    if order == 0 {
        return Err(Error::InvalidParameter("B^0 is the identity and has no kernel".into()));
    }
    let n = order as i32;
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * order as f64 / PI * z.conj().powi(n - 1) / z.powi(n + 1))
}

/// Two-point singular kernel in the plane.
pub trait Kernel: Send + Sync {
    fn evaluate(&self, x: Complex64, y: Complex64) -> Complex64;

    /// `C0` in `|K(x, y)| <= C0 / |x - y|^2`.
    fn size_constant(&self) -> f64;

    /// True when `K(x, y)` depends on `x - y` only.
    fn translation_invariant(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

/// Kernel of `B^N` as a convolution kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeurlingKernel {
    pub order: u32,
}

impl BeurlingKernel {
    pub fn new(order: u32) -> Result<BeurlingKernel> {
        kernel_bn(Complex64::new(1.0, 0.0), order)?;
        Ok(BeurlingKernel { order })
    }
}

impl Default for BeurlingKernel {
    fn default() -> Self {
        BeurlingKernel { order: 1 }
    }
}

impl Kernel for BeurlingKernel {
    fn evaluate(&self, x: Complex64, y: Complex64) -> Complex64 {
        let d = x - y;
        if d.norm() == 0.0 {
            return ZERO;
        }
        kernel_bn(d, self.order).expect("order checked at construction")
    }

    fn size_constant(&self) -> f64 {
        self.order as f64 / PI
    }

    fn translation_invariant(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("beurling^{}", self.order)
    }
}

/// Sampled kernel constants, for the JSON diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    pub name: String,
    pub size_constant: f64,
    /// Largest `|K(x,y)| |x-y|^2` seen.
    pub sampled_size: f64,
    /// Largest `|K(x,y) - K(x,y')| |x-y|^3 / |y-y'|` with `|x-y| >= 2|y-y'|`.
    pub sampled_regularity: f64,
    pub samples: usize,
}

pub fn kernel_diagnostics<K: Kernel + ?Sized>(k: &K, samples: usize, seed: u64) -> KernelDiagnostics {
    let mut r = rng(seed);
    let mut size = 0.0f64;
    let mut reg = 0.0f64;
    for _ in 0..samples {
        let x = Complex64::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let d = Complex64::from_polar(10f64.powf(r.random_range(-2.0..1.0)), r.random_range(0.0..2.0 * PI));
        let y = x - d;
        size = size.max(k.evaluate(x, y).norm() * d.norm_sqr());
        let t = Complex64::from_polar(d.norm() * r.random_range(0.0..0.5), r.random_range(0.0..2.0 * PI));
        if t.norm() > 0.0 {
            let diff = (k.evaluate(x, y) - k.evaluate(x, y + t)).norm();
            reg = reg.max(diff * d.norm().powi(3) / t.norm());
        }
    }
    KernelDiagnostics {
        name: k.name(),
        size_constant: k.size_constant(),
        sampled_size: size,
        sampled_regularity: reg,
        samples,
    }
}

fn check_eps(f: &Field, eps: f64) -> Result<()> {
    let h = f.grid().spacing();
    if !(eps >= 2.0 * h) {
        return Err(Error::InvalidParameter(format!(
            "truncation radius {eps} is below twice the spacing {h}"
        )));
    }
    Ok(())
}

/// `T_eps f(x) = sum over nodes y with |x - y| >= eps of K(x, y) f(y) h^2`.
pub fn truncated_singular<K: Kernel + ?Sized>(f: &Field, k: &K, eps: f64) -> Result<Field> {
    check_eps(f, eps)?;
    if !k.translation_invariant() {
        return truncated_singular_direct(f, k, eps);
    }
    let grid = f.grid();
    let h = grid.spacing();
    let area = grid.cell_area();
    let origin = Complex64::new(0.0, 0.0);
    let table = PaddedKernel::new(grid, |dx, dy| {
        let d = Complex64::new(dx as f64 * h, dy as f64 * h);
        if d.norm() >= eps {
            k.evaluate(d, origin) * area
        } else {
            ZERO
        }
    });
    Field::new(grid.clone(), table.apply(f.values()), "truncated")
}

/// Same sum as [`truncated_singular`], evaluated term by term over the
/// nonzero samples of `f`.
pub fn truncated_singular_direct<K: Kernel + ?Sized>(f: &Field, k: &K, eps: f64) -> Result<Field> {
    check_eps(f, eps)?;
    let grid = f.grid();
    let area = grid.cell_area();
    let sources: Vec<(Complex64, Complex64)> = f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() != 0.0)
        .map(|(i, v)| (grid.point_at(i), *v))
        .collect();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point_at(i);
            let mut s = ZERO;
            for (y, v) in &sources {
                if (x - y).norm() >= eps {
                    s += k.evaluate(x, *y) * v;
                }
            }
            s * area
        })
        .collect();
    Field::new(grid.clone(), values, "truncated")
}

/// Pointwise `max |T_eps f|` over the listed radii.
pub fn maximal_singular<K: Kernel + ?Sized>(f: &Field, k: &K, eps_list: &[f64]) -> Result<Field> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("empty truncation list".into()));
    }
    let mut best = vec![0.0f64; f.grid().len()];
    for &eps in eps_list {
        let t = truncated_singular(f, k, eps)?;
        best.par_iter_mut()
            .zip(t.values().par_iter())
            .for_each(|(b, v)| *b = b.max(v.norm()));
    }
    Field::from_real(f.grid(), &best, "maximal")
}

/// Radii `2^j h` used by [`hl_maximal`], up to the box diagonal.
pub fn hl_radii(f: &Field) -> Vec<f64> {
    let h = f.grid().spacing();
    let diag = 2.0 * 2f64.sqrt() * f.grid().half_side();
    let mut r = vec![h];
    while *r.last().expect("nonempty") < diag {
        let next = 2.0 * r.last().expect("nonempty");
        r.push(next);
    }
    r
}

/// Centred maximal function over the open discrete balls `|x - y| < r`,
/// `r = 2^j h`, intersected with the box. The smallest ball is the node itself.
pub fn hl_maximal(f: &Field) -> Result<Field> {
    let grid = f.grid();
    let n = grid.n();
    let abs: Vec<Complex64> = f.values().iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
    let ones = vec![Complex64::new(1.0, 0.0); n * n];
    let mut best: Vec<f64> = abs.iter().map(|v| v.re).collect();
    for r in hl_radii(f).into_iter().skip(1) {
        let rr = (r / grid.spacing()).powi(2);
        let ball = PaddedKernel::new(grid, |dx, dy| {
            if ((dx * dx + dy * dy) as f64) < rr {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        let sums = ball.apply(&abs);
        let counts = ball.apply(&ones);
        best.par_iter_mut()
            .zip(sums.par_iter().zip(counts.par_iter()))
            .for_each(|(b, (s, c))| {
                let avg = s.re.max(0.0) / c.re.round().max(1.0);
                *b = b.max(avg);
            });
    }
    Field::from_real(grid, &best, "maximal")
}

/// Largest `||apply(f)||_{L^p(w)}` over seeded random unit-norm smooth `f`.
pub fn operator_norm_estimate<F>(apply: F, grid: &crate::grid::Grid, p: f64, weight: Option<&Weight>, trials: usize, seed: u64) -> Result<f64>
where
    F: Fn(&Field) -> Result<Field>,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mut r = rng(seed);
    let mut best = 0.0f64;
    for _ in 0..trials {
        let f = normalize(&random_smooth(&mut r, grid).sample(grid)?, p, weight)?;
        best = best.max(apply(&f)?.lp_norm(p, weight)?);
    }
    Ok(best)
}
