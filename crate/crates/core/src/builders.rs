//! Test data: indicators, smooth bumps, Beltrami coefficients with known
//! solutions, and seeded random ensembles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{signed_index, Field, Grid};
use crate::weights::Weight;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How a set with a sharp boundary is transferred to the nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiskSampling {
    /// 1 if the node lies in the closed disk.
    Point,
    /// Fraction of the node's cell covered by the disk (`sub x sub` subsamples).
    AreaFraction { sub: usize },
    /// Band-limited interpolant built from the exact Fourier coefficients.
    Spectral,
}

/// Indicator of the disk `|z - center| <= radius`.
pub fn disk_indicator(grid: &Grid, center: Complex64, radius: f64, sampling: DiskSampling) -> Result<Field> {
    match sampling {
        DiskSampling::Point => Field::from_fn(grid, "disk", |z| {
            Complex64::new(if (z - center).norm() <= radius { 1.0 } else { 0.0 }, 0.0)
        }),
        DiskSampling::AreaFraction { sub } => {
            let sub = sub.max(1);
            let h = grid.spacing();
            Field::from_fn(grid, "disk", |z| {
                let d = (z - center).norm() - radius;
                let v = if d > h {
                    0.0
                } else if d < -h {
                    1.0
                } else {
                    let mut inside = 0usize;
                    for a in 0..sub {
                        for b in 0..sub {
                            let dx = ((a as f64 + 0.5) / sub as f64 - 0.5) * h;
                            let dy = ((b as f64 + 0.5) / sub as f64 - 0.5) * h;
                            if (z + Complex64::new(dx, dy) - center).norm() <= radius {
                                inside += 1;
                            }
                        }
                    }
                    inside as f64 / (sub * sub) as f64
                };
                Complex64::new(v, 0.0)
            })
        }
        DiskSampling::Spectral => {
            let n = grid.n();
            let area = grid.cell_area();
            let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
            spec.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
                for (ix, v) in row.iter_mut().enumerate() {
                    let xi = grid.xi(ix, iy);
                    let s = xi.norm();
                    let hat = if s == 0.0 {
                        PI * radius * radius
                    } else {
                        2.0 * PI * radius * libm::j1(radius * s) / s
                    };
                    let shift = -(xi.re * center.re + xi.im * center.im)
                        - PI * (signed_index(ix, n) + signed_index(iy, n)) as f64;
                    *v = Complex64::from_polar(hat / area, shift);
                }
            });
            Field::from_spectrum(grid, &spec, "disk")
        }
    }
}

/// Pointwise indicator of the closed half-plane `Re z >= 0`.
pub fn half_plane_indicator(grid: &Grid) -> Result<Field> {
    Field::from_fn(grid, "half-plane", |z| {
        Complex64::new(if z.re >= 0.0 { 1.0 } else { 0.0 }, 0.0)
    })
}

/// `C^infinity` bump `amplitude * exp(1 - 1/(1 - (|z-c|/R)^2))`, supported in `|z - c| < R`.
pub fn smooth_bump(grid: &Grid, center: Complex64, radius: f64, amplitude: Complex64) -> Result<Field> {
    Field::from_fn(grid, "bump", |z| amplitude * bump_profile((z - center).norm() / radius))
}

pub fn bump_profile(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Beltrami coefficient of the radial stretch `z |z|^(K-1)` inside the unit disk.
pub fn radial_stretch_mu(grid: &Grid, stretch: f64, sampling: DiskSampling) -> Result<Field> {
    let chi = disk_indicator(grid, Complex64::new(0.0, 0.0), 1.0, sampling)?;
    let c = (stretch - 1.0) / (stretch + 1.0);
    chi.map_with_point(|z, v| {
        if z.norm() == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            v * c * z / z.conj()
        }
    })
    .map(|f| f.with_tag("mu"))
}

/// Gaussian `amplitude * exp(-|z - center|^2 / (2 sigma^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Complex64,
    pub sigma: f64,
    pub amplitude: Complex64,
}

impl GaussianBump {
    fn envelope(&self, z: Complex64) -> f64 {
        (-(z - self.center).norm_sqr() / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Superposition of Gaussian bumps with closed-form Wirtinger derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSum {
    pub bumps: Vec<GaussianBump>,
}

impl BumpSum {
    /// `count` bumps with centers uniform in the disk of radius `reach` around `center`.
    pub fn random<R: Rng>(rng: &mut R, count: usize, center: Complex64, reach: f64, sigma: (f64, f64)) -> BumpSum {
        let bumps = (0..count)
            .map(|_| {
                let r = reach * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                let s = sigma.0 + (sigma.1 - sigma.0) * rng.random::<f64>();
                let a = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                GaussianBump {
                    center: center + Complex64::from_polar(r, t),
                    sigma: s,
                    amplitude: a,
                }
            })
            .collect();
        BumpSum { bumps }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.bumps.iter().map(|b| b.amplitude * b.envelope(z)).sum()
    }

    pub fn dz(&self, z: Complex64) -> Complex64 {
        self.bumps
            .iter()
            .map(|b| -b.amplitude * b.envelope(z) * (z - b.center).conj() / (2.0 * b.sigma * b.sigma))
            .sum()
    }

    pub fn dzbar(&self, z: Complex64) -> Complex64 {
        self.bumps
            .iter()
            .map(|b| -b.amplitude * b.envelope(z) * (z - b.center) / (2.0 * b.sigma * b.sigma))
            .sum()
    }

    /// Multiplies every amplitude by `c`.
    pub fn scaled(&self, c: f64) -> BumpSum {
        BumpSum {
            bumps: self
                .bumps
                .iter()
                .map(|b| GaussianBump {
                    amplitude: b.amplitude * c,
                    ..*b
                })
                .collect(),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        Field::from_fn(grid, "bumps", |z| self.eval(z))
    }
}

/// Default smooth ensemble member: a few bumps inside the central quarter.
pub fn random_smooth<R: Rng>(rng: &mut R, grid: &Grid) -> BumpSum {
    let l = grid.half_side();
    let count = rng.random_range(2..=5);
    BumpSum::random(rng, count, Complex64::new(0.0, 0.0), 0.25 * l, (l / 24.0, l / 10.0))
}

/// Independent standard complex normal samples on the nodes where `inside` holds.
pub fn random_rough<R: Rng, F: Fn(Complex64) -> bool>(rng: &mut R, grid: &Grid, inside: F) -> Result<Field> {
    let values = (0..grid.len())
        .map(|i| {
            let z = grid.point_at(i);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if inside(z) {
                Complex64::new(re, im)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Field::new(grid.clone(), values, "rough")
}

/// Rescales `f` to unit `L^p(w)` norm; zero fields are returned unchanged.
pub fn normalize(f: &Field, p: f64, weight: Option<&Weight>) -> Result<Field> {
    let norm = f.lp_norm(p, weight)?;
    if norm == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.scale(Complex64::new(1.0 / norm, 0.0)))
}
