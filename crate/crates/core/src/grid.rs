//! Periodic square grid on `[-L, L)^2` with spectral differentiation.
//!
//! Samples are stored row-major, `values[iy * n + ix]` at the point
//! `z = (-L + ix*h) + i(-L + iy*h)`. The discrete Fourier transform is taken
//! unnormalized forward and divided by `n^2` on the way back. A frequency index
//! `k` maps to `xi = (pi / L) * k` with `k` in `-n/2 .. n/2 - 1`, and the pair
//! `(xi_x, xi_y)` is identified with the complex number `xi_x + i xi_y`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::weights::Weight;

/// Cached one-dimensional transforms for a square of side `n`.
pub(crate) struct Plan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plan {
    pub(crate) fn shared(n: usize) -> Arc<Plan> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Plan {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    /// In-place unnormalized 2D transform of an `n x n` row-major block.
    pub(crate) fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let fft = if inverse { &self.inverse } else { &self.forward };
        let scratch_len = fft.get_inplace_scratch_len();
        let rows = |buf: &mut [Complex64]| {
            buf.par_chunks_mut(n).for_each_init(
                || vec![Complex64::new(0.0, 0.0); scratch_len],
                |scratch, row| fft.process_with_scratch(row, scratch),
            );
        };
        rows(data);
        let mut t = transpose(data, n);
        rows(&mut t);
        let back = transpose(&t, n);
        data.copy_from_slice(&back);
    }
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = data[i * n + j];
        }
    });
    out
}

/// Signed frequency index of FFT bin `i` on an axis of length `n`.
pub(crate) fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Uniform periodic grid on the square `[-L, L)^2`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    half_side: f64,
    spacing: f64,
    plan: Arc<Plan>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_side.to_bits() == other.half_side.to_bits()
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("half_side", &self.half_side)
            .field("spacing", &self.spacing)
            .finish()
    }
}

/// Builds a grid with `n` samples per axis on `[-half_side, half_side)^2`.
pub fn make_grid(n: usize, half_side: f64) -> Result<Grid> {
    Grid::new(n, half_side)
}

impl Grid {
    pub fn new(n: usize, half_side: f64) -> Result<Grid> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two and at least 8 (got {n})"
            )));
        }
        if !(half_side.is_finite() && half_side > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half side L must be positive (got {half_side})"
            )));
        }
        Ok(Grid {
            n,
            half_side,
            spacing: 2.0 * half_side / n as f64,
            plan: Plan::shared(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Half side length `L`.
    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Number of samples, `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_side + i as f64 * self.spacing
    }

    pub fn point(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(self.coordinate(ix), self.coordinate(iy))
    }

    /// Point of the flat sample index `idx`.
    pub fn point_at(&self, idx: usize) -> Complex64 {
        self.point(idx % self.n, idx / self.n)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Index of the node at the origin.
    pub fn origin_index(&self) -> usize {
        self.index(self.n / 2, self.n / 2)
    }

    /// Angular frequency of FFT bin `i` along one axis.
    pub fn frequency(&self, i: usize) -> f64 {
        std::f64::consts::PI / self.half_side * signed_index(i, self.n) as f64
    }

    /// Complex frequency `xi_x + i xi_y` of spectral bin `(ix, iy)`.
    pub fn xi(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(self.frequency(ix), self.frequency(iy))
    }

    /// Sorted list of the axis frequencies, `(pi/L) * {-n/2, .., n/2 - 1}`.
    pub fn axis_frequencies(&self) -> Vec<f64> {
        let mut f: Vec<f64> = (0..self.n).map(|i| self.frequency(i)).collect();
        f.sort_by(f64::total_cmp);
        f
    }

    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.plan.transform(&mut data, false);
        data
    }

    /// Inverse transform including the `1/n^2` normalization.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut data = spectrum.to_vec();
        self.plan.transform(&mut data, true);
        let scale = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
        data
    }

    /// Multiplies the spectrum of `f` pointwise by `m(xi)`.
    pub fn apply_multiplier<M>(&self, f: &Field, m: M) -> Result<Field>
    where
        M: Fn(Complex64) -> Complex64 + Sync,
    {
        self.check(f.grid())?;
        let n = self.n;
        let mut spec = self.forward(f.values());
        spec.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            for (ix, v) in row.iter_mut().enumerate() {
                *v *= m(self.xi(ix, iy));
            }
        });
        Field::new(self.clone(), self.inverse(&spec), f.tag())
    }

    pub(crate) fn check(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Complex samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
    tag: String,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>, tag: impl Into<String>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} samples, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Field {
            grid,
            values,
            tag: tag.into(),
        })
    }

    pub fn zeros(grid: &Grid) -> Field {
        Field::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn constant(grid: &Grid, c: Complex64) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            tag: String::from("constant"),
        }
    }

    /// Samples `f(z)` at every node.
    pub fn from_fn<F>(grid: &Grid, tag: &str, f: F) -> Result<Field>
    where
        F: Fn(Complex64) -> Complex64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(grid.point_at(i)))
            .collect();
        Field::new(grid.clone(), values, tag)
    }

    /// Real samples lifted to a complex field.
    pub fn from_real(grid: &Grid, values: &[f64], tag: &str) -> Result<Field> {
        Field::new(
            grid.clone(),
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            tag,
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Field {
        self.tag = tag.into();
        self
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn map<F>(&self, f: F) -> Result<Field>
    where
        F: Fn(Complex64) -> Complex64 + Sync,
    {
        let values = self.values.par_iter().map(|&v| f(v)).collect();
        Field::new(self.grid.clone(), values, self.tag.clone())
    }

    /// Like [`Field::map`] with the sample point as an extra argument.
    pub fn map_with_point<F>(&self, f: F) -> Result<Field>
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Sync,
    {
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.point_at(i), v))
            .collect();
        Field::new(self.grid.clone(), values, self.tag.clone())
    }

    pub fn zip_with<F>(&self, other: &Field, f: F) -> Result<Field>
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Sync,
    {
        self.grid.check(&other.grid)?;
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::new(self.grid.clone(), values, self.tag.clone())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|&v| v * c).collect(),
            tag: self.tag.clone(),
        }
    }

    pub fn conj(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|v| v.conj()).collect(),
            tag: self.tag.clone(),
        }
    }

    /// Pointwise modulus as a real-valued field.
    pub fn abs(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .par_iter()
                .map(|v| Complex64::new(v.norm(), 0.0))
                .collect(),
            tag: self.tag.clone(),
        }
    }

    pub fn real_part(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|v| Complex64::new(v.re, 0.0)).collect(),
            tag: self.tag.clone(),
        }
    }

    pub fn imag_part(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|v| Complex64::new(v.im, 0.0)).collect(),
            tag: self.tag.clone(),
        }
    }

    /// Average over the box (the zero Fourier mode).
    pub fn mean(&self) -> Complex64 {
        ordered_sum(&self.values, |v| *v) / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Plain `L^2` norm with trapezoid quadrature.
    pub fn l2_norm(&self) -> f64 {
        (ordered_sum_real(&self.values, |v| v.norm_sqr()) * self.grid.cell_area()).sqrt()
    }

    /// Quadrature of `f * conj(g)`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.grid.check(&other.grid)?;
        let pairs: Vec<Complex64> = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| a * b.conj())
            .collect();
        Ok(ordered_sum(&pairs, |v| *v) * self.grid.cell_area())
    }

    pub fn integral(&self) -> Complex64 {
        ordered_sum(&self.values, |v| *v) * self.grid.cell_area()
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    pub fn from_spectrum(grid: &Grid, spectrum: &[Complex64], tag: &str) -> Result<Field> {
        Field::new(grid.clone(), grid.inverse(spectrum), tag)
    }

    /// `L^2` norm evaluated from the spectrum (Parseval).
    pub fn spectral_l2_norm(&self) -> f64 {
        let spec = self.spectrum();
        let s = ordered_sum_real(&spec, |v| v.norm_sqr());
        (s * self.grid.cell_area() / self.grid.len() as f64).sqrt()
    }

    pub fn dz(&self) -> Field {
        wirtinger_derivative(self, Wirtinger::Dz)
    }

    pub fn dzbar(&self) -> Field {
        wirtinger_derivative(self, Wirtinger::DzBar)
    }

    pub fn lp_norm(&self, p: f64, weight: Option<&Weight>) -> Result<f64> {
        weighted_lp_norm(self, p, weight)
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.grid.check(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }
}

/// Row-blocked sum with a fixed reduction order, independent of thread count.
pub(crate) fn ordered_sum<T, F>(values: &[T], f: F) -> Complex64
where
    T: Sync,
    F: Fn(&T) -> Complex64 + Sync,
{
    let block = 4096;
    let partial: Vec<Complex64> = values
        .par_chunks(block)
        .map(|c| c.iter().map(&f).sum())
        .collect();
    partial.iter().sum()
}

pub(crate) fn ordered_sum_real<T, F>(values: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    let block = 4096;
    let partial: Vec<f64> = values
        .par_chunks(block)
        .map(|c| c.iter().map(&f).sum())
        .collect();
    partial.iter().sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wirtinger {
    /// `d/dz = (d/dx - i d/dy) / 2`
    Dz,
    /// `d/dzbar = (d/dx + i d/dy) / 2`
    DzBar,
}

pub fn wirtinger_derivative(f: &Field, which: Wirtinger) -> Field {
    let half_i = Complex64::new(0.0, 0.5);
    let out = match which {
        Wirtinger::Dz => f.grid().apply_multiplier(f, |xi| half_i * xi.conj()),
        Wirtinger::DzBar => f.grid().apply_multiplier(f, |xi| half_i * xi),
    };
    out.expect("multiplier on own grid")
}

/// `(sum |f|^p w h^2)^(1/p)`; `None` is the unit weight.
pub fn weighted_lp_norm(f: &Field, p: f64, weight: Option<&Weight>) -> Result<f64> {
    check_exponent(p)?;
    let s = match weight {
        None => ordered_sum_real(f.values(), |v| v.norm().powf(p)),
        Some(w) => {
            f.grid().check(w.grid())?;
            let pairs: Vec<(Complex64, f64)> =
                f.values().iter().copied().zip(w.values().iter().copied()).collect();
            ordered_sum_real(&pairs, |(v, w)| v.norm().powf(p) * w)
        }
    };
    Ok((s * f.grid().cell_area()).powf(1.0 / p))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn small_grid_arithmetic() {
        let g = make_grid(8, 1.0).unwrap();
        assert_eq!(g.spacing(), 0.25);
        let f = g.axis_frequencies();
        let expected: Vec<f64> = (-4..4).map(|k| PI * k as f64).collect();
        assert_eq!(f, expected);
        assert_eq!(make_grid(256, 4.0).unwrap().spacing(), 1.0 / 32.0);
    }

    #[test]
    fn rejects_bad_sizes() {
        let e = make_grid(7, 1.0).unwrap_err();
        assert!(e.to_string().contains("n must be a power of two"));
        assert!(make_grid(4, 1.0).is_err());
        assert!(make_grid(16, 0.0).is_err());
        assert!(make_grid(16, -2.0).is_err());
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = make_grid(32, 2.0).unwrap();
        let xi0 = Complex64::new(PI / 2.0 * 3.0, -PI / 2.0 * 5.0);
        let f = Field::from_fn(&g, "wave", |z| {
            Complex64::new(0.0, xi0.re * z.re + xi0.im * z.im).exp()
        })
        .unwrap();
        let expected = f.scale(Complex64::new(0.0, 0.5) * xi0.conj());
        assert!(f.dz().max_abs_diff(&expected).unwrap() < 1e-11);
        let expected = f.scale(Complex64::new(0.0, 0.5) * xi0);
        assert!(f.dzbar().max_abs_diff(&expected).unwrap() < 1e-11);
    }

    #[test]
    fn constants_have_zero_derivatives() {
        let g = make_grid(16, 1.0).unwrap();
        let f = Field::constant(&g, Complex64::new(1.0, 0.0));
        assert!(f.dz().sup_norm() < 1e-15);
        assert!(f.dzbar().sup_norm() < 1e-15);
    }

    #[test]
    fn gaussian_dzbar_converges_spectrally() {
        let sigma = 0.4;
        let err = |n: usize| {
            let g = make_grid(n, 4.0).unwrap();
            let f = Field::from_fn(&g, "gauss", |z| {
                Complex64::new((-z.norm_sqr() / (2.0 * sigma * sigma)).exp(), 0.0)
            })
            .unwrap();
            let exact = f.map_with_point(|z, v| -z / (2.0 * sigma * sigma) * v).unwrap();
            f.dzbar().max_abs_diff(&exact).unwrap()
        };
        let (e32, e64) = (err(32), err(64));
        assert!(e64 < 1e-9, "{e64}");
        assert!(e64 < e32 * 1e-3, "{e32} {e64}");
    }

    #[test]
    fn single_cell_norm() {
        let g = make_grid(16, 1.0).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); g.len()];
        v[g.index(3, 5)] = Complex64::new(1.0, 0.0);
        let f = Field::new(g.clone(), v, "cell").unwrap();
        let norm = weighted_lp_norm(&f, 2.0, None).unwrap();
        assert!((norm - g.spacing()).abs() < 1e-15);
        assert!(weighted_lp_norm(&f, 1.0, None).is_err());
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        let g = make_grid(8, 1.0).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); g.len()];
        v[7] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(Field::new(g.clone(), v, "x"), Err(Error::NonFinite { index: 7 })));
        let h = make_grid(8, 2.0).unwrap();
        assert!(Field::zeros(&g).add(&Field::zeros(&h)).is_err());
    }
}
