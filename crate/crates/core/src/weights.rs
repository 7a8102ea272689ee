//! Muckenhoupt weights and oscillation estimators.
//!
//! A cube is an index square of `m x m` nodes; each node stands for the cell of
//! side `h` centred on it, so the cube has side `m h`. Averages are plain node
//! means, which makes the discrete `A_p` characteristic satisfy Jensen exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::rng;
use crate::error::{Error, Result};
use crate::grid::{check_exponent, ordered_sum_real, Field, Grid};
use crate::stats::loglog_slope;

/// Positive weight with a per-exponent cache of `A_p` estimates.
pub struct Weight {
    grid: Grid,
    values: Vec<f64>,
    tag: String,
    cache: Mutex<BTreeMap<(u64, u64), f64>>,
}

impl Clone for Weight {
    fn clone(&self) -> Self {
        let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner()).clone();
        Weight {
            grid: self.grid.clone(),
            values: self.values.clone(),
            tag: self.tag.clone(),
            cache: Mutex::new(cache),
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Weight")
            .field("grid", &self.grid)
            .field("tag", &self.tag)
            .finish_non_exhaustive()
    }
}

impl Weight {
    pub fn new(grid: &Grid, values: Vec<f64>, tag: impl Into<String>) -> Result<Weight> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter("weight length does not match grid".into()));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weight must be positive and finite (sample {i} is {})",
                values[i]
            )));
        }
        Ok(Weight {
            grid: grid.clone(),
            values,
            tag: tag.into(),
            cache: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn unit(grid: &Grid) -> Weight {
        Weight::new(grid, vec![1.0; grid.len()], "unit").expect("unit weight is valid")
    }

    /// Real part of a field; the imaginary part must vanish.
    pub fn from_field(f: &Field) -> Result<Weight> {
        if f.values().iter().any(|v| v.im.abs() > 1e-12 * v.re.abs().max(1.0)) {
            return Err(Error::InvalidParameter("weight field is not real".into()));
        }
        Weight::new(f.grid(), f.values().iter().map(|v| v.re).collect(), f.tag())
    }

    pub fn to_field(&self) -> Field {
        Field::from_real(&self.grid, &self.values, &self.tag).expect("weight samples are finite")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn scaled(&self, c: f64) -> Result<Weight> {
        Weight::new(&self.grid, self.values.iter().map(|v| v * c).collect(), self.tag.clone())
    }

    /// Cached [`ap_constant`]; the key is the exponent and the family fingerprint.
    pub fn ap_cached(&self, p: f64, cubes: &CubeFamily) -> Result<f64> {
        let key = (p.to_bits(), cubes.fingerprint());
        if let Some(v) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(*v);
        }
        let v = ap_constant(self, p, cubes)?;
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(key)
            .or_insert(v);
        Ok(v)
    }

    pub fn cached_exponents(&self) -> Vec<f64> {
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .map(|k| f64::from_bits(k.0))
            .collect()
    }
}

/// `|z|^alpha`, with the origin node set to `(h/2)^alpha`.
pub fn power_weight(alpha: f64, grid: &Grid) -> Weight {
    let floor = (0.5 * grid.spacing()).powf(alpha);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let r = grid.point_at(i).norm();
            if r == 0.0 {
                floor
            } else {
                r.powf(alpha)
            }
        })
        .collect();
    Weight::new(grid, values, format!("|z|^{alpha}")).expect("power weight is positive")
}

/// Axis-parallel square of `m x m` nodes with lower-left node `(ix, iy)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub ix: usize,
    pub iy: usize,
    pub m: usize,
}

impl Cube {
    pub fn side(&self, grid: &Grid) -> f64 {
        self.m as f64 * grid.spacing()
    }

    pub fn center(&self, grid: &Grid) -> Complex64 {
        let off = 0.5 * (self.m as f64 - 1.0) * grid.spacing();
        grid.point(self.ix, self.iy) + Complex64::new(off, off)
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        ix >= self.ix && ix < self.ix + self.m && iy >= self.iy && iy < self.iy + self.m
    }

    fn mean<F: Fn(usize) -> f64>(&self, n: usize, f: F) -> f64 {
        let mut s = 0.0;
        for y in self.iy..self.iy + self.m {
            for x in self.ix..self.ix + self.m {
                s += f(y * n + x);
            }
        }
        s / (self.m * self.m) as f64
    }
}

/// Finite family of cubes standing in for "all cubes".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    pub n: usize,
    pub cubes: Vec<Cube>,
    /// Node counts per side of the dyadic levels, smallest first.
    pub levels: Vec<usize>,
    pub translates_per_level: usize,
    pub seed: Option<u64>,
}

impl CubeFamily {
    /// Dyadic cubes with sides `4h .. L`, their half-shifted copies, and eight
    /// seeded random translates per level.
    pub fn standard(grid: &Grid, seed: u64) -> CubeFamily {
        CubeFamily::dyadic(grid, 4, grid.n() / 2, 8, seed).expect("standard levels are valid")
    }

    /// Levels `m = min_nodes, 2 min_nodes, .., max_nodes` (powers of two).
    pub fn dyadic(grid: &Grid, min_nodes: usize, max_nodes: usize, translates: usize, seed: u64) -> Result<CubeFamily> {
        let n = grid.n();
        if min_nodes < 2 || !min_nodes.is_power_of_two() || max_nodes > n || max_nodes < min_nodes {
            return Err(Error::InvalidParameter(format!(
                "dyadic levels {min_nodes}..{max_nodes} do not fit a grid of {n}"
            )));
        }
        let mut r = rng(seed);
        let mut cubes = Vec::new();
        let mut levels = Vec::new();
        let mut m = min_nodes;
        while m <= max_nodes {
            levels.push(m);
            for iy in (0..n).step_by(m) {
                for ix in (0..n).step_by(m) {
                    cubes.push(Cube { ix, iy, m });
                }
            }
            if m < n {
                let s = m / 2;
                for iy in (s..=n - m).step_by(m) {
                    for ix in (s..=n - m).step_by(m) {
                        cubes.push(Cube { ix, iy, m });
                    }
                }
            }
            for _ in 0..translates {
                let ix = r.random_range(0..=n - m);
                let iy = r.random_range(0..=n - m);
                cubes.push(Cube { ix, iy, m });
            }
            m *= 2;
        }
        Ok(CubeFamily {
            n,
            cubes,
            levels,
            translates_per_level: translates,
            seed: Some(seed),
        })
    }

    /// Cells of `cell_nodes` nodes tiling the centred square of `outer_nodes` nodes.
    pub fn tiling(grid: &Grid, outer_nodes: usize, cell_nodes: usize) -> Result<CubeFamily> {
        let n = grid.n();
        if outer_nodes == 0 || cell_nodes == 0 || outer_nodes % cell_nodes != 0 || outer_nodes > n || outer_nodes % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "cells of {cell_nodes} nodes do not tile a centred square of {outer_nodes} nodes"
            )));
        }
        let start = n / 2 - outer_nodes / 2;
        let k = outer_nodes / cell_nodes;
        let cubes = (0..k)
            .flat_map(|j| (0..k).map(move |i| Cube { ix: start + i * cell_nodes, iy: start + j * cell_nodes, m: cell_nodes }))
            .collect();
        Ok(CubeFamily {
            n,
            cubes,
            levels: vec![cell_nodes],
            translates_per_level: 0,
            seed: None,
        })
    }

    pub fn from_cubes(grid: &Grid, cubes: Vec<Cube>) -> Result<CubeFamily> {
        let n = grid.n();
        for c in &cubes {
            if c.m < 2 || c.ix + c.m > n || c.iy + c.m > n {
                return Err(Error::InvalidParameter(format!("cube {c:?} leaves the box or is too small")));
            }
        }
        let mut levels: Vec<usize> = cubes.iter().map(|c| c.m).collect();
        levels.sort_unstable();
        levels.dedup();
        Ok(CubeFamily {
            n,
            cubes,
            levels,
            translates_per_level: 0,
            seed: None,
        })
    }

    pub fn union(&self, other: &CubeFamily) -> CubeFamily {
        let mut cubes = self.cubes.clone();
        cubes.extend(other.cubes.iter().copied());
        let mut levels = self.levels.clone();
        levels.extend(other.levels.iter().copied());
        levels.sort_unstable();
        levels.dedup();
        CubeFamily {
            n: self.n,
            cubes,
            levels,
            translates_per_level: self.translates_per_level,
            seed: self.seed,
        }
    }

    /// Keeps the cubes for which `keep` holds.
    pub fn filtered<F: Fn(&Cube) -> bool>(&self, keep: F) -> CubeFamily {
        CubeFamily {
            cubes: self.cubes.iter().copied().filter(|c| keep(c)).collect(),
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over the cube list.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.n as u64);
        for c in &self.cubes {
            eat(c.ix as u64);
            eat(c.iy as u64);
            eat(c.m as u64);
        }
        h
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.cubes.is_empty() {
            return Err(Error::EmptyFamily);
        }
        if self.n != grid.n() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

fn ap_per_cube(w: &Weight, p: f64, cubes: &CubeFamily) -> Result<Vec<f64>> {
    check_exponent(p)?;
    cubes.check(w.grid())?;
    let dual: Vec<f64> = w.values.par_iter().map(|v| v.powf(-1.0 / (p - 1.0))).collect();
    let n = w.grid.n();
    Ok(cubes
        .cubes
        .par_iter()
        .map(|c| {
            let a = c.mean(n, |i| w.values[i]);
            let b = c.mean(n, |i| dual[i]);
            a * b.powf(p - 1.0)
        })
        .collect())
}

/// Largest `(avg w)(avg w^(-p'/p))^(p/p')` over the family.
pub fn ap_constant(w: &Weight, p: f64, cubes: &CubeFamily) -> Result<f64> {
    Ok(ap_per_cube(w, p, cubes)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub p: f64,
    pub levels: Vec<f64>,
    pub estimate_per_level: Vec<f64>,
    pub estimate: f64,
    /// Log-log slope of the per-level estimate against side length.
    pub trend_slope: Option<f64>,
}

/// Per-level breakdown of [`ap_constant`].
pub fn ap_report(w: &Weight, p: f64, cubes: &CubeFamily) -> Result<ApReport> {
    let per = ap_per_cube(w, p, cubes)?;
    let mut by_level: BTreeMap<usize, f64> = BTreeMap::new();
    for (c, v) in cubes.cubes.iter().zip(&per) {
        let e = by_level.entry(c.m).or_insert(f64::NEG_INFINITY);
        *e = e.max(*v);
    }
    let h = w.grid.spacing();
    let levels: Vec<f64> = by_level.keys().map(|m| *m as f64 * h).collect();
    let estimate_per_level: Vec<f64> = by_level.values().copied().collect();
    Ok(ApReport {
        p,
        trend_slope: loglog_slope(&levels, &estimate_per_level),
        estimate: estimate_per_level.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        levels,
        estimate_per_level,
    })
}

fn oscillations(b: &Field, cubes: &CubeFamily) -> Result<Vec<f64>> {
    cubes.check(b.grid())?;
    let n = b.grid().n();
    let v = b.values();
    Ok(cubes
        .cubes
        .par_iter()
        .map(|c| {
            let mut s = Complex64::new(0.0, 0.0);
            for y in c.iy..c.iy + c.m {
                for x in c.ix..c.ix + c.m {
                    s += v[y * n + x];
                }
            }
            let avg = s / (c.m * c.m) as f64;
            c.mean(n, |i| (v[i] - avg).norm())
        })
        .collect())
}

/// Largest mean oscillation `avg_Q |b - avg_Q b|` over the family.
pub fn bmo_norm(b: &Field, cubes: &CubeFamily) -> Result<f64> {
    Ok(oscillations(b, cubes)?.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideValue {
    pub side: f64,
    pub value: f64,
}

/// Largest mean oscillation per cube side, smallest side first.
pub fn vmo_modulus(b: &Field, cubes: &CubeFamily) -> Result<Vec<SideValue>> {
    let osc = oscillations(b, cubes)?;
    let mut by_side: BTreeMap<usize, f64> = BTreeMap::new();
    for (c, v) in cubes.cubes.iter().zip(osc) {
        let e = by_side.entry(c.m).or_insert(0.0);
        *e = e.max(v);
    }
    let h = b.grid().spacing();
    Ok(by_side
        .into_iter()
        .map(|(m, value)| SideValue { side: m as f64 * h, value })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub p: f64,
    pub q: f64,
    pub radii: Vec<f64>,
    /// Quadrature of `w(x) / |x|^(2p)` over the nodes with `|x| > R`.
    pub tails: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    /// `2 (p - q)`.
    pub predicted_exponent: f64,
    pub insufficient_range: bool,
}

pub fn tail_decay_check(w: &Weight, p: f64, q: f64, radii: &[f64]) -> Result<TailReport> {
    check_exponent(p)?;
    check_exponent(q)?;
    if q >= p {
        return Err(Error::InvalidParameter(format!("need q < p (got q = {q}, p = {p})")));
    }
    if radii.windows(2).any(|r| r[1] <= r[0]) || radii.iter().any(|r| *r <= 0.0) {
        return Err(Error::InvalidParameter("radii must be positive and increasing".into()));
    }
    let grid = w.grid();
    let area = grid.cell_area();
    let tails: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let terms: Vec<f64> = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let x = grid.point_at(i).norm();
                    if x > r {
                        w.values[i] / x.powf(2.0 * p)
                    } else {
                        0.0
                    }
                })
                .collect();
            ordered_sum_real(&terms, |t| *t) * area
        })
        .collect();
    let usable: Vec<(f64, f64)> = radii
        .iter()
        .copied()
        .zip(tails.iter().copied())
        .filter(|(_, t)| *t > 0.0)
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = usable.iter().copied().unzip();
    let slope = loglog_slope(&xs, &ys);
    Ok(TailReport {
        p,
        q,
        radii: radii.to_vec(),
        tails,
        fitted_exponent: slope.map(|s| -s),
        predicted_exponent: 2.0 * (p - q),
        insufficient_range: usable.len() < 2,
    })
}
