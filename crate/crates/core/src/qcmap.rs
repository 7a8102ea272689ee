//! Principal solutions `phi(z) = z + C h` of the homogeneous Beltrami equation,
//! their Jacobians and inverses, and weight transport under `phi`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{normalize, rng, BumpSum};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::solver::{neumann_solve, BeltramiCoefficients, SolveOptions, SolveSummary};
use crate::transforms::{beurling, cauchy};
use crate::weights::{ap_report, ApReport, CubeFamily, Weight};

/// Largest fraction of nodes allowed to fail inversion.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

/// Newton residual accepted by the inverse table.
pub const INVERSE_TOLERANCE: f64 = 1e-8;

/// Bilinear interpolation of periodic node samples at an arbitrary point.
fn interp<T>(grid: &Grid, values: &[T], z: Complex64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let (i, j, fx, fy) = cell(grid, z);
    let n = grid.n();
    let (i1, j1) = ((i + 1) % n, (j + 1) % n);
    let v00 = values[j * n + i];
    let v10 = values[j * n + i1];
    let v01 = values[j1 * n + i];
    let v11 = values[j1 * n + i1];
    v00 * ((1.0 - fx) * (1.0 - fy)) + v10 * (fx * (1.0 - fy)) + v01 * ((1.0 - fx) * fy) + v11 * (fx * fy)
}

/// Wrapped lower-left node and fractional offsets of `z`.
fn cell(grid: &Grid, z: Complex64) -> (usize, usize, f64, f64) {
    let n = grid.n() as i64;
    let h = grid.spacing();
    let tx = (z.re + grid.half_side()) / h;
    let ty = (z.im + grid.half_side()) / h;
    let (fx0, fy0) = (tx.floor(), ty.floor());
    (
        (fx0 as i64).rem_euclid(n) as usize,
        (fy0 as i64).rem_euclid(n) as usize,
        tx - fx0,
        ty - fy0,
    )
}

/// Node preimages `phi^{-1}(zeta)` and inverse Jacobians.
#[derive(Clone, Debug)]
pub struct InverseTable {
    grid: Grid,
    preimage: Vec<Complex64>,
    inv_jac: Vec<f64>,
    corner_preimage: Vec<Complex64>,
    cell_inv_jac: Vec<f64>,
    residual: Vec<f64>,
    flagged: Vec<usize>,
}

impl InverseTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn preimages(&self) -> &[Complex64] {
        &self.preimage
    }

    /// `J(zeta, phi^{-1}) = 1 / J(phi^{-1}(zeta), phi)` at each node.
    pub fn inverse_jacobian(&self) -> &[f64] {
        &self.inv_jac
    }

    /// Preimages of the cell corners `zeta + (h/2, h/2)`.
    pub fn corner_preimages(&self) -> &[Complex64] {
        &self.corner_preimage
    }

    /// `|phi^{-1}(Q)| / |Q|` for the cell `Q` centred at each node, from the
    /// quadrilateral spanned by the corner preimages. This is the sampling of
    /// the inverse Jacobian used by the A_p scans, since the pointwise value
    /// misrepresents integrable singularities at a node.
    pub fn cell_inverse_jacobian(&self) -> &[f64] {
        &self.cell_inv_jac
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }

    pub fn flagged_fraction(&self) -> f64 {
        self.flagged.len() as f64 / self.preimage.len() as f64
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Principal solution record; immutable once built.
#[derive(Clone, Debug)]
pub struct QcMap {
    coef: BeltramiCoefficients,
    phi: Field,
    dphi: Field,
    dbarphi: Field,
    jac: Vec<f64>,
    jac_flagged: Vec<usize>,
    solve: SolveSummary,
    inverse: InverseTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcMapSummary {
    pub n: usize,
    pub half_side: f64,
    pub k: f64,
    pub distortion: f64,
    pub beltrami_residual: f64,
    pub iterations: usize,
    pub mean_mode: Complex64,
    pub jacobian_positive_fraction: f64,
    pub jacobian_flagged: usize,
    pub inverse_flagged: usize,
    pub max_inverse_residual: f64,
}

/// Solves `(Id - mu B - nu Bbar) h = mu + nu` and assembles `phi = z + C h`,
/// `d phi = 1 + B h`, `dbar phi = h`.
pub fn principal_solution(coef: &BeltramiCoefficients, tol: f64, max_iter: usize) -> Result<QcMap> {
    let grid = coef.grid().clone();
    let g = coef.mu().add(coef.nu())?;
    let opts = SolveOptions {
        tol,
        max_iter,
        ..SolveOptions::default()
    };
    let sol = neumann_solve(coef, &g, &opts)?;
    let h = sol.h.clone();
    let phi = cauchy(&h).map_with_point(|z, u| z + u)?.with_tag("phi");
    let dphi = beurling(&h).map(|b| b + 1.0)?.with_tag("dphi");
    let raw: Vec<f64> = dphi
        .values()
        .iter()
        .zip(h.values())
        .map(|(a, b)| a.norm_sqr() - b.norm_sqr())
        .collect();
    let (jac, jac_flagged) = floor_jacobian(&grid, &raw);
    let mut map = QcMap {
        coef: coef.clone(),
        phi,
        dphi,
        dbarphi: h.with_tag("dbarphi"),
        jac,
        jac_flagged,
        solve: sol.summary(),
        inverse: InverseTable {
            grid: grid.clone(),
            preimage: Vec::new(),
            inv_jac: Vec::new(),
            corner_preimage: Vec::new(),
            cell_inv_jac: Vec::new(),
            residual: Vec::new(),
            flagged: Vec::new(),
        },
    };
    map.inverse = invert_map(&map)?;
    Ok(map)
}

/// Replaces nonpositive samples by the smallest positive value among the eight
/// neighbours and returns the replaced indices.
fn floor_jacobian(grid: &Grid, raw: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = grid.n();
    let global = raw.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let mut out = raw.to_vec();
    let mut flagged = Vec::new();
    for (i, v) in raw.iter().enumerate() {
        if *v > 0.0 {
            continue;
        }
        let (ix, iy) = ((i % n) as i64, (i / n) as i64);
        let mut best = f64::INFINITY;
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let j = ((iy + dy).rem_euclid(n as i64) as usize) * n + (ix + dx).rem_euclid(n as i64) as usize;
                if raw[j] > 0.0 {
                    best = best.min(raw[j]);
                }
            }
        }
        out[i] = if best.is_finite() { best } else { global };
        flagged.push(i);
    }
    (out, flagged)
}

impl QcMap {
    pub fn coefficients(&self) -> &BeltramiCoefficients {
        &self.coef
    }

    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn dphi(&self) -> &Field {
        &self.dphi
    }

    pub fn dbarphi(&self) -> &Field {
        &self.dbarphi
    }

    pub fn inverse(&self) -> &InverseTable {
        &self.inverse
    }

    pub fn solve_summary(&self) -> &SolveSummary {
        &self.solve
    }

    /// Nodes where `|dphi|^2 - |dbar phi|^2 <= 0` before flooring.
    pub fn jacobian_flagged(&self) -> &[usize] {
        &self.jac_flagged
    }

    pub fn jacobian_positive_fraction(&self) -> f64 {
        1.0 - self.jac_flagged.len() as f64 / self.jac.len() as f64
    }

    /// `phi` at an arbitrary point by bilinear interpolation of `phi - z`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        z + interp(self.grid(), &self.periodic_part(), z)
    }

    fn periodic_part(&self) -> Vec<Complex64> {
        let grid = self.grid();
        self.phi.values().iter().enumerate().map(|(i, v)| v - grid.point_at(i)).collect()
    }

    /// Largest `|dbar phi| - k |d phi|` over the nodes.
    pub fn distortion_excess(&self) -> f64 {
        let k = self.coef.k();
        self.dphi
            .values()
            .iter()
            .zip(self.dbarphi.values())
            .map(|(a, b)| b.norm() - k * a.norm())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `|| dbar phi - mu d phi - nu conj(d phi) ||_2`.
    pub fn beltrami_residual(&self) -> Result<f64> {
        let c = &self.coef;
        let values = self
            .dbarphi
            .values()
            .iter()
            .zip(self.dphi.values())
            .zip(c.mu().values().iter().zip(c.nu().values()))
            .map(|((b, a), (m, n))| b - m * a - n * a.conj())
            .collect();
        Ok(Field::new(self.grid().clone(), values, "residual")?.l2_norm())
    }

    /// `lambda(zeta)` with `lambda(phi(z)) = -2 i nu / (1 - |mu|^2 + |nu|^2)`.
    pub fn lambda(&self) -> Result<Field> {
        let grid = self.grid();
        let mu = self.coef.mu().values();
        let nu = self.coef.nu().values();
        let source: Vec<Complex64> = mu
            .iter()
            .zip(nu)
            .map(|(m, n)| Complex64::new(0.0, -2.0) * n / (1.0 - m.norm_sqr() + n.norm_sqr()))
            .collect();
        let values = self
            .inverse
            .preimage
            .par_iter()
            .map(|z| interp(grid, &source, *z))
            .collect();
        Field::new(grid.clone(), values, "lambda")
    }

    pub fn summary(&self) -> Result<QcMapSummary> {
        Ok(QcMapSummary {
            n: self.grid().n(),
            half_side: self.grid().half_side(),
            k: self.coef.k(),
            distortion: self.coef.distortion(),
            beltrami_residual: self.beltrami_residual()?,
            iterations: self.solve.iterations,
            mean_mode: self.solve.mean_mode,
            jacobian_positive_fraction: self.jacobian_positive_fraction(),
            jacobian_flagged: self.jac_flagged.len(),
            inverse_flagged: self.inverse.flagged.len(),
            max_inverse_residual: self.inverse.max_residual(),
        })
    }
}

/// `J(z, phi) = |d phi|^2 - |dbar phi|^2`, with nonpositive samples floored
/// (see [`QcMap::jacobian_flagged`]).
pub fn jacobian(map: &QcMap) -> Field {
    Field::from_real(map.grid(), &map.jac, "jacobian").expect("jacobian samples are finite")
}

/// Solves `phi(z) = zeta` at every node by damped Newton on the bilinear
/// interpolant of `phi`, seeded from the nearest forward image.
pub fn invert_map(map: &QcMap) -> Result<InverseTable> {
    let grid = map.grid().clone();
    let n = grid.n();
    let h = grid.spacing();
    let l = grid.half_side();
    let u = map.periodic_part();
    let bucket_of = |w: Complex64| -> (usize, usize) {
        let bx = ((w.re + l) / h).floor().clamp(0.0, (n - 1) as f64) as usize;
        let by = ((w.im + l) / h).floor().clamp(0.0, (n - 1) as f64) as usize;
        (bx, by)
    };
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); n * n];
    for (i, w) in map.phi.values().iter().enumerate() {
        let (bx, by) = bucket_of(*w);
        buckets[by * n + bx].push(i as u32);
    }
    let phi = map.phi.values();
    let nearest = |zeta: Complex64| -> usize {
        let (bx, by) = bucket_of(zeta);
        let mut best = (f64::INFINITY, grid.index(bx, by));
        for r in 0..n as i64 {
            if best.0.is_finite() && (r as f64 - 1.0) * h > best.0 {
                break;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let (x, y) = (bx as i64 + dx, by as i64 + dy);
                    if x < 0 || y < 0 || x >= n as i64 || y >= n as i64 {
                        continue;
                    }
                    for &j in &buckets[y as usize * n + x as usize] {
                        let d = (phi[j as usize] - zeta).norm();
                        if d < best.0 {
                            best = (d, j as usize);
                        }
                    }
                }
            }
        }
        best.1
    };
    let rows: Vec<(Complex64, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let zeta = grid.point_at(i);
            let z0 = grid.point_at(nearest(zeta));
            let (z, res) = newton(&grid, &u, zeta, z0);
            let j = interp(&grid, &map.jac, z);
            (z, 1.0 / j, res)
        })
        .collect();
    let half = Complex64::new(0.5 * h, 0.5 * h);
    let corners: Vec<(Complex64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| newton(&grid, &u, grid.point_at(i) + half, rows[i].0))
        .collect();
    let flagged: Vec<usize> = (0..grid.len())
        .filter(|&i| !(rows[i].2 <= INVERSE_TOLERANCE && corners[i].1 <= INVERSE_TOLERANCE))
        .collect();
    if flagged.len() as f64 > MAX_FLAGGED_FRACTION * grid.len() as f64 {
        return Err(Error::Inversion {
            flagged: flagged.len(),
            total: grid.len(),
        });
    }
    let period = 2.0 * l;
    let unwrap = |d: f64| d - period * (d / period).round();
    let cell_inv_jac = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (ix, iy) = (i % n, i / n);
            let (xm, ym) = ((ix + n - 1) % n, (iy + n - 1) % n);
            let base = rows[i].0;
            let quad = [(xm, ym), (ix, ym), (ix, iy), (xm, iy)].map(|(x, y)| {
                let d = corners[y * n + x].0 - base;
                Complex64::new(unwrap(d.re), unwrap(d.im))
            });
            let mut a = 0.0;
            for k in 0..4 {
                let (p, q) = (quad[k], quad[(k + 1) % 4]);
                a += p.re * q.im - q.re * p.im;
            }
            (0.5 * a / (h * h)).max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok(InverseTable {
        grid,
        preimage: rows.iter().map(|r| r.0).collect(),
        inv_jac: rows.iter().map(|r| r.1).collect(),
        corner_preimage: corners.iter().map(|c| c.0).collect(),
        cell_inv_jac,
        residual: rows.iter().map(|r| r.2).collect(),
        flagged,
    })
}

fn newton(grid: &Grid, u: &[Complex64], zeta: Complex64, mut z: Complex64) -> (Complex64, f64) {
    let n = grid.n();
    let h = grid.spacing();
    let f = |z: Complex64| z + interp(grid, u, z) - zeta;
    let mut r = f(z);
    for _ in 0..60 {
        if r.norm() <= 1e-13 * (1.0 + zeta.norm()) {
            break;
        }
        let (i, j, fx, fy) = cell(grid, z);
        let (i1, j1) = ((i + 1) % n, (j + 1) % n);
        let (u00, u10, u01, u11) = (u[j * n + i], u[j * n + i1], u[j1 * n + i], u[j1 * n + i1]);
        let ux = ((u10 - u00) * (1.0 - fy) + (u11 - u01) * fy) / h;
        let uy = ((u01 - u00) * (1.0 - fx) + (u11 - u10) * fx) / h;
        let (a, b, c, d) = (1.0 + ux.re, uy.re, ux.im, 1.0 + uy.im);
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            break;
        }
        let step = Complex64::new((d * r.re - b * r.im) / det, (a * r.im - c * r.re) / det);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = z - step * t;
            let rc = f(cand);
            if rc.norm() < r.norm() {
                z = cand;
                r = rc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (z, r.norm())
}

/// `eta(zeta) = w(phi^{-1}(zeta)) J(zeta, phi^{-1})^(1 - p/2)` with `w`
/// interpolated bilinearly; flagged inverse nodes keep `w(zeta)`.
#[derive(Clone, Debug)]
pub struct Pushforward {
    pub weight: Weight,
    pub flagged: Vec<usize>,
}

pub fn pushforward_weight(w: &Weight, map: &QcMap, p: f64) -> Result<Pushforward> {
    crate::grid::check_exponent(p)?;
    map.grid().check(w.grid())?;
    let inv = &map.inverse;
    let wv = w.values();
    let mut values: Vec<f64> = inv
        .preimage
        .par_iter()
        .zip(inv.inv_jac.par_iter())
        .map(|(z, j)| interp(map.grid(), wv, *z) * j.powf(1.0 - 0.5 * p))
        .collect();
    for &i in &inv.flagged {
        values[i] = wv[i];
    }
    let tag = format!("pushforward of {}", w.tag());
    Ok(Pushforward {
        weight: Weight::new(map.grid(), values, tag)?,
        flagged: inv.flagged.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianScanEntry {
    pub p: f64,
    /// `J(., phi)`.
    pub forward: ApReport,
    /// `J(., phi^{-1})`.
    pub inverse: ApReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianScan {
    pub entries: Vec<JacobianScanEntry>,
    pub excluded_cubes: usize,
}

/// A_p estimates of the forward and inverse Jacobians; cubes touching flagged
/// inverse nodes are left out.
pub fn jacobian_ap_scan(map: &QcMap, p_list: &[f64], cubes: &CubeFamily) -> Result<JacobianScan> {
    let grid = map.grid();
    let n = grid.n();
    let flagged = &map.inverse.flagged;
    let kept = cubes.filtered(|c| !flagged.iter().any(|&i| c.contains(i % n, i / n)));
    let forward = Weight::new(grid, map.jac.clone(), "forward jacobian")?;
    let inverse = Weight::new(grid, map.inverse.cell_inv_jac.clone(), "inverse jacobian")?;
    let entries = p_list
        .iter()
        .map(|&p| {
            Ok(JacobianScanEntry {
                p,
                forward: ap_report(&forward, p, &kept)?,
                inverse: ap_report(&inverse, p, &kept)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(JacobianScan {
        entries,
        excluded_cubes: cubes.len() - kept.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfVariablesReport {
    pub p: f64,
    pub k: f64,
    /// `||h~||_{L^p(eta)} / ||h||_{L^p(w)}` with `h~(phi(z)) = h(z) d phi / J`,
    /// the left side integrated over `zeta` nodes.
    pub h_ratios: Vec<f64>,
    /// `(1 - k^2)^(-1/2)`.
    pub h_bound: f64,
    /// `(int |Dg|^p eta / int |Df|^p w)^(1/p)` with `f = g o phi`.
    pub df_ratios: Vec<f64>,
    /// `((1 + k) / (1 - k))^(1/2)`.
    pub df_bound: f64,
    pub max_h_ratio: f64,
    pub max_df_ratio: f64,
}

/// Measures both sides of the substitution identities for seeded smooth `g`
/// concentrated in the unit disk.
pub fn change_of_variables_check(
    w: &Weight,
    map: &QcMap,
    p: f64,
    ensemble_size: usize,
    seed: u64,
) -> Result<ChangeOfVariablesReport> {
    let grid = map.grid().clone();
    crate::grid::check_exponent(p)?;
    grid.check(w.grid())?;
    let inv = &map.inverse;
    let half = Complex64::new(0.5 * grid.spacing(), 0.5 * grid.spacing());
    // Midpoint rule on the cell corners keeps quadrature points off any node
    // where the inverse Jacobian is singular.
    let eta: Vec<f64> = inv
        .corner_preimage
        .iter()
        .map(|z| interp(&grid, w.values(), *z) * interp(&grid, &map.jac, *z).powf(0.5 * p - 1.0))
        .collect();
    let coef = &map.coef;
    let k = coef.k();
    let mut r = rng(seed);
    let draws: Vec<BumpSum> = (0..ensemble_size)
        .map(|_| {
            let count = r.random_range(2..=4);
            BumpSum::random(&mut r, count, Complex64::new(0.0, 0.0), 0.5, (0.1, 0.25))
        })
        .collect();
    let area = grid.cell_area();
    let rows: Vec<(f64, f64)> = draws
        .par_iter()
        .map(|g| {
            let gs = normalize(&g.sample(&grid)?, p, Some(w))?;
            let opts = SolveOptions {
                tol: 1e-10,
                max_iter: 1000,
                p,
                weight: Some(w),
                initial: None,
            };
            let h = neumann_solve(coef, &gs, &opts)?.h;
            let h_norm = h.lp_norm(p, Some(w))?;
            let lhs: f64 = inv
                .corner_preimage
                .iter()
                .zip(&eta)
                .map(|(z, e)| {
                    let carried = interp(&grid, h.values(), *z) * interp(&grid, map.dphi.values(), *z) / interp(&grid, &map.jac, *z);
                    carried.norm().powf(p) * e
                })
                .sum::<f64>()
                * area;
            let dg: f64 = grid_points(&grid)
                .zip(&eta)
                .map(|(z, e)| {
                    let zc = z + half;
                    (g.dz(zc).norm() + g.dzbar(zc).norm()).powf(p) * e
                })
                .sum::<f64>()
                * area;
            let df: f64 = map
                .phi
                .values()
                .iter()
                .zip(map.dphi.values().iter().zip(map.dbarphi.values()))
                .zip(w.values())
                .map(|((w0, (a, b)), om)| {
                    let (gz, gzb) = (g.dz(*w0), g.dzbar(*w0));
                    let fz = gz * a + gzb * b.conj();
                    let fzb = gz * b + gzb * a.conj();
                    (fz.norm() + fzb.norm()).powf(p) * om
                })
                .sum::<f64>()
                * area;
            Ok((lhs.powf(1.0 / p) / h_norm, (dg / df).powf(1.0 / p)))
        })
        .collect::<Result<_>>()?;
    let h_ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let df_ratios: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ChangeOfVariablesReport {
        p,
        k,
        h_bound: (1.0 - k * k).powf(-0.5),
        df_bound: ((1.0 + k) / (1.0 - k)).sqrt(),
        max_h_ratio: h_ratios.iter().copied().fold(0.0, f64::max),
        max_df_ratio: df_ratios.iter().copied().fold(0.0, f64::max),
        h_ratios,
        df_ratios,
    })
}

fn grid_points(grid: &Grid) -> impl Iterator<Item = Complex64> + '_ {
    (0..grid.len()).map(move |i| grid.point_at(i))
}

/// Closed forms for the radial stretch `z |z|^(K-1)`: `(phi, d phi, dbar phi, J)`
/// on the unit disk, identity outside.
pub fn radial_stretch_oracle(z: Complex64, stretch: f64) -> (Complex64, Complex64, Complex64, f64) {
    let r = z.norm();
    if r >= 1.0 {
        return (z, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), 1.0);
    }
    if r == 0.0 {
        return (z, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0.0);
    }
    let kk = stretch;
    let phi = z * r.powf(kk - 1.0);
    let d = Complex64::new(0.5 * (kk + 1.0) * r.powf(kk - 1.0), 0.0);
    let db = z * z * (0.5 * (kk - 1.0) * r.powf(kk - 3.0));
    (phi, d, db, kk * r.powf(2.0 * kk - 2.0))
}

/// `zeta |zeta|^(1/K - 1)` on the unit disk, identity outside.
pub fn radial_stretch_inverse_oracle(zeta: Complex64, stretch: f64) -> Complex64 {
    let r = zeta.norm();
    if r >= 1.0 || r == 0.0 {
        zeta
    } else {
        zeta * r.powf(1.0 / stretch - 1.0)
    }
}

/// Shoelace area of the image of the boundary of the node square
/// `[ix, ix + m] x [iy, iy + m]`.
pub fn image_area(map: &QcMap, ix: usize, iy: usize, m: usize) -> f64 {
    let grid = map.grid();
    let n = grid.n();
    assert!(ix + m < n && iy + m < n, "square leaves the grid");
    let mut path = Vec::with_capacity(4 * m);
    for i in 0..m {
        path.push((ix + i, iy));
    }
    for j in 0..m {
        path.push((ix + m, iy + j));
    }
    for i in 0..m {
        path.push((ix + m - i, iy + m));
    }
    for j in 0..m {
        path.push((ix, iy + m - j));
    }
    let pts: Vec<Complex64> = path.iter().map(|&(x, y)| map.phi.at(x, y)).collect();
    let mut s = 0.0;
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
        s += a.re * b.im - b.re * a.im;
    }
    0.5 * s
}

/// Trapezoidal integral of `J(., phi)` over the same node square.
pub fn jacobian_integral(map: &QcMap, ix: usize, iy: usize, m: usize) -> f64 {
    let grid = map.grid();
    let n = grid.n();
    assert!(ix + m < n && iy + m < n, "square leaves the grid");
    let mut s = 0.0;
    for y in iy..=iy + m {
        for x in ix..=ix + m {
            let wx = if x == ix || x == ix + m { 0.5 } else { 1.0 };
            let wy = if y == iy || y == iy + m { 0.5 } else { 1.0 };
            s += wx * wy * map.jac[y * n + x];
        }
    }
    s * grid.cell_area()
}

/// Images of every `stride`-th grid line as CSV rows `family,line,x,y`.
pub fn write_mesh_csv<W: Write>(map: &QcMap, stride: usize, mut out: W) -> Result<()> {
    let n = map.grid().n();
    let stride = stride.max(1);
    writeln!(out, "family,line,x,y")?;
    for line in (0..n).step_by(stride) {
        for i in 0..n {
            let v = map.phi.at(i, line);
            writeln!(out, "row,{line},{:.12e},{:.12e}", v.re, v.im)?;
        }
        for j in 0..n {
            let v = map.phi.at(line, j);
            writeln!(out, "column,{line},{:.12e},{:.12e}", v.re, v.im)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{disk_indicator, radial_stretch_mu, DiskSampling};
    use crate::grid::make_grid;
    use crate::weights::power_weight;

    #[test]
    fn identity_map() {
        let g = make_grid(32, 4.0).unwrap();
        let map = principal_solution(&BeltramiCoefficients::zero(&g), 1e-12, 10).unwrap();
        for (i, v) in map.phi().values().iter().enumerate() {
            assert!((v - g.point_at(i)).norm() < 1e-14);
        }
        assert!(jacobian(&map).values().iter().all(|j| (j.re - 1.0).abs() < 1e-14));
        assert_eq!(map.inverse().flagged().len(), 0);
        for (i, z) in map.inverse().preimages().iter().enumerate() {
            assert!((z - g.point_at(i)).norm() < 1e-14);
        }
        let w = power_weight(1.0, &g);
        let eta = pushforward_weight(&w, &map, 3.0).unwrap().weight;
        for (a, b) in eta.values().iter().zip(w.values()) {
            assert!((a - b).abs() <= 1e-14 * b);
        }
        let scan = jacobian_ap_scan(&map, &[1.5, 3.0], &CubeFamily::standard(&g, 1)).unwrap();
        for e in &scan.entries {
            assert!((e.forward.estimate - 1.0).abs() < 1e-12);
            assert!((e.inverse.estimate - 1.0).abs() < 1e-12);
        }
        let l = map.lambda().unwrap();
        assert_eq!(l.sup_norm(), 0.0);
    }

    #[test]
    fn small_constant_coefficient_matches_first_order_term() {
        let g = make_grid(128, 4.0).unwrap();
        let c = Complex64::new(0.06, 0.08);
        let chi = disk_indicator(&g, Complex64::new(0.0, 0.0), 1.0, DiskSampling::Point).unwrap();
        let coef = BeltramiCoefficients::mu_only(chi.scale(c)).unwrap();
        let map = principal_solution(&coef, 1e-12, 200).unwrap();
        let first = cauchy(&chi).scale(c);
        let mut err = 0.0f64;
        for (i, v) in map.phi().values().iter().enumerate() {
            err = err.max((v - g.point_at(i) - first.values()[i]).norm());
        }
        assert!(err <= 0.02, "{err}");
        assert!(map.beltrami_residual().unwrap() < 1e-10);
        assert!(map.distortion_excess() <= 1e-9);
    }

    #[test]
    fn radial_stretch_coarse() {
        let g = make_grid(128, 4.0).unwrap();
        let mu = radial_stretch_mu(&g, 2.0, DiskSampling::Point).unwrap();
        let map = principal_solution(&BeltramiCoefficients::mu_only(mu).unwrap(), 1e-12, 500).unwrap();
        assert!(map.jacobian_positive_fraction() > 0.999);
        let mut err = 0.0f64;
        for (i, v) in map.phi().values().iter().enumerate() {
            err = err.max((v - radial_stretch_oracle(g.point_at(i), 2.0).0).norm());
        }
        assert!(err < 0.05, "{err}");
        let inv = map.inverse();
        assert!(inv.flagged_fraction() < MAX_FLAGGED_FRACTION);
        for (i, z) in inv.preimages().iter().enumerate() {
            if !inv.flagged().contains(&i) {
                assert!((map.eval(*z) - g.point_at(i)).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn oracle_closed_forms() {
        let z = Complex64::new(0.3, -0.4);
        let (phi, d, db, j) = radial_stretch_oracle(z, 2.0);
        assert!((phi - z * 0.5).norm() < 1e-15);
        assert!((db / d - z / z.conj() / 3.0).norm() < 1e-15);
        assert!((j - (d.norm_sqr() - db.norm_sqr())).abs() < 1e-15);
        assert!((radial_stretch_oracle(Complex64::new(0.5, 0.0), 2.0).3 - 0.5).abs() < 1e-15);
        assert!((radial_stretch_inverse_oracle(phi, 2.0) - z).norm() < 1e-15);
    }

    #[test]
    fn jacobian_flooring() {
        let g = make_grid(8, 1.0).unwrap();
        let mut raw = vec![1.0; 64];
        raw[5] = -0.1;
        raw[6] = 0.25;
        let (out, flagged) = floor_jacobian(&g, &raw);
        assert_eq!(flagged, vec![5]);
        assert_eq!(out[5], 0.25);
    }

    #[test]
    fn interpolation_is_exact_for_affine_data() {
        let g = make_grid(16, 2.0).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| (i % 16) as f64 * 2.0 + (i / 16) as f64).collect();
        let z = Complex64::new(-2.0 + 0.25 * 3.3, -2.0 + 0.25 * 4.6);
        let v = interp(&g, &vals, z);
        assert!((v - (3.3 * 2.0 + 4.6)).abs() < 1e-12);
    }
}
