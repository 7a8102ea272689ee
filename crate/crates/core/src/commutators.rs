//! Commutators `[b, T] f = b T f - T(b f)` and compactness diagnostics.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{normalize, random_rough, rng, smooth_bump};
use crate::conv::PaddedKernel;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::stats::{self, loglog_slope};
use crate::transforms::{beurling, beurling_conjugate, hl_maximal, truncated_singular, BeurlingKernel, Kernel};
use crate::weights::{ap_constant, CubeFamily, Weight};

/// Smooth compactly supported multiplier `b` with its sup and gradient bounds.
#[derive(Clone, Debug)]
pub struct SmoothSymbol {
    b: Field,
    grad_sup: f64,
    sup: f64,
    support_radius: f64,
}

impl SmoothSymbol {
    /// Checks that `b` vanishes for `|z| >= support_radius`; the gradient bound
    /// is `max(|db| + |dbar b|)`, taken spectrally.
    pub fn new(b: Field, support_radius: f64) -> Result<SmoothSymbol> {
        let grid = b.grid().clone();
        let quarter = 0.5 * grid.half_side();
        if support_radius > quarter {
            return Err(Error::InvalidParameter(format!(
                "symbol support radius {support_radius} exceeds the central quarter"
            )));
        }
        for (i, v) in b.values().iter().enumerate() {
            if grid.point_at(i).norm() >= support_radius && v.norm() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "symbol does not vanish outside radius {support_radius}"
                )));
            }
        }
        let grad = b.dz().abs().add(&b.dzbar().abs())?;
        Ok(SmoothSymbol {
            grad_sup: grad.sup_norm(),
            sup: b.sup_norm(),
            support_radius,
            b,
        })
    }

    /// Standard test symbol: a real bump of height `amplitude` on `|z| < radius`.
    pub fn bump(grid: &Grid, radius: f64, amplitude: f64) -> Result<SmoothSymbol> {
        let b = smooth_bump(grid, Complex64::new(0.0, 0.0), radius, Complex64::new(amplitude, 0.0))?;
        SmoothSymbol::new(b.with_tag("b"), radius)
    }

    pub fn field(&self) -> &Field {
        &self.b
    }

    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }
}

/// `b T(f) - T(b f)`.
pub fn commutator_apply<T>(b: &Field, t: T, f: &Field) -> Result<Field>
where
    T: Fn(&Field) -> Result<Field>,
{
    b.grid().check(f.grid())?;
    let tf = t(f)?;
    let tbf = t(&b.mul(f)?)?;
    b.mul(&tf)?.sub(&tbf).map(|c| c.with_tag("commutator"))
}

/// Quintic smoothstep: 0 on `[0, 1/2]`, 1 on `[1, inf)`, `C^2` in between.
pub fn ramp(t: f64) -> f64 {
    if t <= 0.5 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let s = 2.0 * t - 1.0;
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `K(x, y) ramp(|x - y| / eta)`.
#[derive(Clone, Debug)]
pub struct SmoothedKernel<K> {
    pub inner: K,
    pub eta: f64,
}

impl<K: Kernel> Kernel for SmoothedKernel<K> {
    fn evaluate(&self, x: Complex64, y: Complex64) -> Complex64 {
        let w = ramp((x - y).norm() / self.eta);
        if w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.inner.evaluate(x, y) * w
        }
    }

    fn size_constant(&self) -> f64 {
        self.inner.size_constant()
    }

    fn translation_invariant(&self) -> bool {
        self.inner.translation_invariant()
    }

    fn name(&self) -> String {
        format!("{} smoothed at {}", self.inner.name(), self.eta)
    }
}

pub fn smoothed_kernel<K: Kernel>(k: K, eta: f64, grid: &Grid) -> Result<SmoothedKernel<K>> {
    if !(eta >= 4.0 * grid.spacing()) {
        return Err(Error::InvalidParameter(format!(
            "smoothing radius {eta} is below four grid spacings"
        )));
    }
    Ok(SmoothedKernel { inner: k, eta })
}

/// `sum_y K(x, y) f(y) h^2` over all nodes (the kernel must vanish on the diagonal).
fn kernel_sum<K: Kernel + ?Sized>(f: &Field, k: &K) -> Result<Field> {
    let grid = f.grid();
    let area = grid.cell_area();
    let h = grid.spacing();
    if k.translation_invariant() {
        let origin = Complex64::new(0.0, 0.0);
        let table = PaddedKernel::new(grid, |dx, dy| {
            if dx == 0 && dy == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                k.evaluate(Complex64::new(dx as f64 * h, dy as f64 * h), origin) * area
            }
        });
        return Field::new(grid.clone(), table.apply(f.values()), "kernel sum");
    }
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
            sources
                .iter()
                .filter(|(y, _)| *y != x)
                .map(|(y, v)| k.evaluate(x, *y) * v)
                .sum::<Complex64>()
                * area
        })
        .collect();
    Field::new(grid.clone(), values, "kernel sum")
}

/// `C_b^eta f(x) = sum_y (b(x) - b(y)) K^eta(x, y) f(y) h^2`.
pub fn smoothed_commutator_apply<K: Kernel>(b: &SmoothSymbol, k: &SmoothedKernel<K>, f: &Field) -> Result<Field> {
    commutator_apply(b.field(), |u| kernel_sum(u, k), f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub etas: Vec<f64>,
    /// Largest `|C_b f - C_b^eta f| / (eta |grad b| M f)` per radius.
    pub max_ratio: Vec<f64>,
    /// `max(max_ratio) / min(max_ratio)`.
    pub ratio_spread: f64,
    pub p: f64,
    /// `||C_b f - C_b^eta f||_{L^p(w)}` per radius.
    pub lp_error: Vec<f64>,
    pub lp_slope: Option<f64>,
    pub grad_sup: f64,
}

/// Compares `C_b` (truncated at two spacings) with `C_b^eta` along a ladder of radii.
pub fn smoothing_error_check(
    b: &SmoothSymbol,
    etas: &[f64],
    f: &Field,
    p: f64,
    weight: Option<&Weight>,
) -> Result<SmoothingReport> {
    let grid = f.grid();
    if etas.len() < 3 {
        return Err(Error::InvalidParameter("need at least three smoothing radii".into()));
    }
    if f.sup_norm() == 0.0 {
        return Err(Error::TrivialInput("f vanishes identically".into()));
    }
    let k = BeurlingKernel::default();
    let eps = 2.0 * grid.spacing();
    let full = commutator_apply(b.field(), |u| truncated_singular(u, &k, eps), f)?;
    let mf = hl_maximal(f)?;
    let mut max_ratio = Vec::new();
    let mut lp_error = Vec::new();
    for &eta in etas {
        let ke = smoothed_kernel(k, eta, grid)?;
        let diff = full.sub(&smoothed_commutator_apply(b, &ke, f)?)?;
        let reach = b.support_radius() + eta;
        let scale = eta * b.grad_sup();
        let worst = diff
            .values()
            .par_iter()
            .zip(mf.values().par_iter())
            .enumerate()
            .filter(|(i, (_, m))| m.re > 0.0 && grid.point_at(*i).norm() <= reach)
            .map(|(_, (d, m))| d.norm() / (scale * m.re))
            .reduce(|| 0.0, f64::max);
        max_ratio.push(worst);
        lp_error.push(diff.lp_norm(p, weight)?);
    }
    let hi = stats::max(&max_ratio);
    let lo = max_ratio.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SmoothingReport {
        etas: etas.to_vec(),
        ratio_spread: hi / lo,
        lp_slope: loglog_slope(etas, &lp_error),
        max_ratio,
        p,
        lp_error,
        grad_sup: b.grad_sup(),
    })
}

fn node_count(len: f64, grid: &Grid, what: &str) -> Result<usize> {
    let m = len / grid.spacing();
    let r = m.round();
    if r < 1.0 || (m - r).abs() > 1e-9 * m.max(1.0) {
        return Err(Error::InvalidParameter(format!("{what} {len} is not a multiple of the spacing")));
    }
    Ok(r as usize)
}

/// Cells of side `rho` tiling the centred square of side `outer`.
pub fn phi_cells(grid: &Grid, outer: f64, rho: f64) -> Result<CubeFamily> {
    let big = node_count(outer, grid, "outer side")?;
    let cell = node_count(rho, grid, "cell side")?;
    CubeFamily::tiling(grid, big, cell)
}

/// Piecewise-constant projection onto cell averages inside `Q(0, outer)`, zero outside.
pub fn phi_projection(f: &Field, outer: f64, rho: f64) -> Result<Field> {
    let cells = phi_cells(f.grid(), outer, rho)?;
    phi_project_cells(f, &cells)
}

pub fn phi_project_cells(f: &Field, cells: &CubeFamily) -> Result<Field> {
    let grid = f.grid();
    let n = grid.n();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for c in &cells.cubes {
        let mut s = Complex64::new(0.0, 0.0);
        for y in c.iy..c.iy + c.m {
            for x in c.ix..c.ix + c.m {
                s += f.values()[y * n + x];
            }
        }
        let avg = s / (c.m * c.m) as f64;
        for y in c.iy..c.iy + c.m {
            for x in c.ix..c.ix + c.m {
                out[y * n + x] = avg;
            }
        }
    }
    Field::new(grid.clone(), out, "phi")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiInequality {
    /// `integral |Phi f|^p w`.
    pub lhs: f64,
    /// `[w]_{A_p, cells} ||f||^p_{L^p(w)}`.
    pub rhs: f64,
    pub ap_cells: f64,
}

pub fn phi_inequality(f: &Field, cells: &CubeFamily, p: f64, weight: &Weight) -> Result<PhiInequality> {
    let phi = phi_project_cells(f, cells)?;
    let ap = ap_constant(weight, p, cells)?;
    Ok(PhiInequality {
        lhs: phi.lp_norm(p, Some(weight))?.powf(p),
        rhs: ap * f.lp_norm(p, Some(weight))?.powf(p),
        ap_cells: ap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSup {
    pub dx: i64,
    pub dy: i64,
    pub length: f64,
    pub sup: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSup {
    pub radius: f64,
    pub sup: f64,
    /// Largest exterior norm relative to the member's full norm.
    pub sup_fraction: f64,
}

/// Frechet-Kolmogorov diagnostics of a finite family in `L^p(w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub family_size: usize,
    pub p: f64,
    pub uniform_bound: f64,
    pub equicontinuity: Vec<ShiftSup>,
    pub tail: Vec<TailSup>,
    /// Slope of `ln sup` against `ln(1/|h|)`; negative when the shift error
    /// vanishes with the shift.
    pub equicontinuity_slope: Option<f64>,
    /// Slope of `ln sup` against `ln R`.
    pub tail_slope: Option<f64>,
    pub equicontinuity_monotone: bool,
    pub tail_monotone: bool,
    /// Trend tests on a finite grid cannot decide compactness.
    pub heuristic: bool,
}

fn roll(f: &Field, dx: i64, dy: i64) -> Result<Field> {
    let n = f.grid().n() as i64;
    let v = f.values();
    let values = (0..f.grid().len())
        .into_par_iter()
        .map(|i| {
            let ix = (i as i64 % n + dx).rem_euclid(n);
            let iy = (i as i64 / n + dy).rem_euclid(n);
            v[(iy * n + ix) as usize]
        })
        .collect();
    Field::new(f.grid().clone(), values, f.tag())
}

fn outside_square(f: &Field, side: f64) -> Result<Field> {
    let half = 0.5 * side;
    f.map_with_point(|z, v| {
        if z.re.abs() < half && z.im.abs() < half {
            Complex64::new(0.0, 0.0)
        } else {
            v
        }
    })
}

/// `shifts` are physical translations that must land on the lattice.
pub fn fk_diagnostics(
    family: &[Field],
    p: f64,
    weight: Option<&Weight>,
    shifts: &[Complex64],
    radii: &[f64],
) -> Result<CompactnessReport> {
    let first = family
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty family".into()))?;
    let grid = first.grid().clone();
    for f in family {
        grid.check(f.grid())?;
    }
    let h = grid.spacing();
    let mut lattice = Vec::new();
    for s in shifts {
        let (ax, ay) = (s.re / h, s.im / h);
        let (rx, ry) = (ax.round(), ay.round());
        if (ax - rx).abs() > 1e-9 || (ay - ry).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("shift {s} is not on the lattice")));
        }
        lattice.push((rx as i64, ry as i64));
    }
    let norms: Vec<f64> = family
        .par_iter()
        .map(|f| f.lp_norm(p, weight))
        .collect::<Result<_>>()?;
    let uniform_bound = stats::max(&norms).max(0.0);
    let mut equicontinuity = Vec::new();
    for &(dx, dy) in &lattice {
        let sups: Vec<f64> = family
            .par_iter()
            .map(|f| roll(f, dx, dy)?.sub(f)?.lp_norm(p, weight))
            .collect::<Result<_>>()?;
        equicontinuity.push(ShiftSup {
            dx,
            dy,
            length: h * ((dx * dx + dy * dy) as f64).sqrt(),
            sup: stats::max(&sups).max(0.0),
        });
    }
    let mut tail = Vec::new();
    for &r in radii {
        let outs: Vec<f64> = family
            .par_iter()
            .map(|f| outside_square(f, r)?.lp_norm(p, weight))
            .collect::<Result<_>>()?;
        let fraction = outs
            .iter()
            .zip(&norms)
            .map(|(o, n)| if *n > 0.0 { o / n } else { 0.0 })
            .fold(0.0, f64::max);
        tail.push(TailSup {
            radius: r,
            sup: stats::max(&outs).max(0.0),
            sup_fraction: fraction,
        });
    }
    let inv: Vec<f64> = equicontinuity.iter().map(|e| 1.0 / e.length).collect();
    let eq: Vec<f64> = equicontinuity.iter().map(|e| e.sup).collect();
    let mut by_len = equicontinuity.clone();
    by_len.sort_by(|a, b| a.length.total_cmp(&b.length));
    let mut by_r = tail.clone();
    by_r.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    Ok(CompactnessReport {
        family_size: family.len(),
        p,
        uniform_bound,
        equicontinuity_slope: loglog_slope(&inv, &eq),
        tail_slope: loglog_slope(
            &tail.iter().map(|t| t.radius).collect::<Vec<_>>(),
            &tail.iter().map(|t| t.sup).collect::<Vec<_>>(),
        ),
        equicontinuity_monotone: by_len.windows(2).all(|w| w[0].sup < w[1].sup),
        tail_monotone: by_r.windows(2).all(|w| w[1].sup <= w[0].sup),
        equicontinuity,
        tail,
        heuristic: true,
    })
}

/// Parameters of the conjugate-symbol negative control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateExampleConfig {
    pub n: usize,
    pub half_side: f64,
    pub p: f64,
    /// Height of `nu = i nu0` on the unit disk.
    pub nu0: f64,
    pub family_size: usize,
    pub seed: u64,
    /// Shift lengths in nodes along the real axis.
    pub shift_nodes: Vec<i64>,
    /// Side lengths of the tail squares.
    pub radii: Vec<f64>,
    /// Smoothing radius, in spacings, of the contrast commutator.
    pub eta_cells: f64,
    /// Radius of the contrast symbol bump.
    pub symbol_radius: f64,
}

impl Default for ConjugateExampleConfig {
    fn default() -> Self {
        ConjugateExampleConfig {
            n: 512,
            half_side: 4.0,
            p: 2.0,
            nu0: 0.5,
            family_size: 40,
            seed: 7,
            shift_nodes: vec![1, 2, 4],
            radii: vec![2.0, 3.0, 4.0, 6.0],
            eta_cells: 16.0,
            symbol_radius: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateReport {
    pub config: ConjugateExampleConfig,
    /// Largest `sup_D |[nu, Bbar] f - 2 i nu0 conj(B f)|` over the family.
    pub identity_error: f64,
    /// The same error divided by `sup_D |2 nu0 B f|`.
    pub identity_relative_error: f64,
    /// Diagnostics of `{[nu, Bbar] f}`.
    pub conjugate: CompactnessReport,
    /// Diagnostics of `{C_b^eta f}` for a smooth bump symbol `b`, same `f`.
    pub smooth_symbol: CompactnessReport,
}

/// `nu = i nu0` on the unit disk, ramping linearly to zero at `|z| = 2`.
pub fn conjugate_example_nu(grid: &Grid, nu0: f64) -> Result<Field> {
    Field::from_fn(grid, "nu", |z| {
        let r = z.norm();
        let t = if r <= 1.0 { 1.0 } else if r < 2.0 { 2.0 - r } else { 0.0 };
        Complex64::new(0.0, nu0 * t)
    })
}

/// Unit-norm rough fields supported strictly inside the unit disk.
pub fn disk_family(grid: &Grid, size: usize, p: f64, seed: u64) -> Result<Vec<Field>> {
    let mut r = rng(seed);
    (0..size)
        .map(|_| {
            let s: u64 = r.random();
            let f = random_rough(&mut rng(s), grid, |z| z.norm() < 0.95)?;
            normalize(&f, p, None)
        })
        .collect()
}

pub fn noncompact_conjugate_example(cfg: &ConjugateExampleConfig) -> Result<ConjugateReport> {
    if !(cfg.nu0 > 0.0 && cfg.nu0 < 1.0) {
        return Err(Error::InvalidParameter("nu0 must lie in (0, 1)".into()));
    }
    let grid = Grid::new(cfg.n, cfg.half_side)?;
    let nu = conjugate_example_nu(&grid, cfg.nu0)?;
    let family = disk_family(&grid, cfg.family_size, cfg.p, cfg.seed)?;
    let two_i_nu0 = Complex64::new(0.0, 2.0 * cfg.nu0);
    let images: Vec<(Field, f64, f64)> = family
        .par_iter()
        .map(|f| {
            let c = commutator_apply(&nu, |u| Ok(beurling_conjugate(u)), f)?;
            let reference = beurling(f).conj().scale(two_i_nu0);
            let mut err = 0.0f64;
            let mut size = 0.0f64;
            for (i, (a, b)) in c.values().iter().zip(reference.values()).enumerate() {
                if grid.point_at(i).norm() <= 1.0 {
                    err = err.max((a - b).norm());
                    size = size.max(b.norm());
                }
            }
            Ok((c, err, size))
        })
        .collect::<Result<_>>()?;
    let identity_error = images.iter().map(|x| x.1).fold(0.0, f64::max);
    let identity_relative_error = images
        .iter()
        .map(|x| if x.2 > 0.0 { x.1 / x.2 } else { 0.0 })
        .fold(0.0, f64::max);
    let h = grid.spacing();
    let shifts: Vec<Complex64> = cfg
        .shift_nodes
        .iter()
        .map(|&s| Complex64::new(s as f64 * h, 0.0))
        .collect();
    let conj_images: Vec<Field> = images.into_iter().map(|x| x.0).collect();
    let conjugate = fk_diagnostics(&conj_images, cfg.p, None, &shifts, &cfg.radii)?;
    let b = SmoothSymbol::bump(&grid, cfg.symbol_radius, 1.0)?;
    let ke = smoothed_kernel(BeurlingKernel::default(), cfg.eta_cells * h, &grid)?;
    let smooth_images: Vec<Field> = family
        .iter()
        .map(|f| smoothed_commutator_apply(&b, &ke, f))
        .collect::<Result<_>>()?;
    let smooth_symbol = fk_diagnostics(&smooth_images, cfg.p, None, &shifts, &cfg.radii)?;
    Ok(ConjugateReport {
        config: cfg.clone(),
        identity_error,
        identity_relative_error,
        conjugate,
        smooth_symbol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{disk_indicator, random_smooth, DiskSampling};
    use crate::grid::make_grid;

    fn grid() -> Grid {
        make_grid(64, 4.0).unwrap()
    }

    fn sample(g: &Grid, seed: u64) -> Field {
        random_smooth(&mut rng(seed), g).sample(g).unwrap()
    }

    #[test]
    fn constant_symbol_and_identity_give_zero() {
        let g = grid();
        let f = sample(&g, 1);
        let c = Field::constant(&g, Complex64::new(2.0, -1.0));
        let out = commutator_apply(&c, |u| Ok(beurling(u)), &f).unwrap();
        assert!(out.sup_norm() < 1e-12 * f.sup_norm());
        let b = sample(&g, 2);
        let out = commutator_apply(&b, |u| Ok(u.clone()), &f).unwrap();
        assert!(out.sup_norm() < 1e-15);
    }

    #[test]
    fn commutator_is_linear_in_the_symbol() {
        let g = grid();
        let f = disk_indicator(&g, Complex64::new(0.0, 0.0), 1.0, DiskSampling::Point).unwrap();
        let b1 = SmoothSymbol::bump(&g, 1.5, 1.0).unwrap();
        let b2 = sample(&g, 6);
        let t = |u: &Field| Ok(beurling(u));
        let sum = commutator_apply(&b1.field().add(&b2).unwrap(), t, &f).unwrap();
        let parts = commutator_apply(b1.field(), t, &f).unwrap().add(&commutator_apply(&b2, t, &f).unwrap()).unwrap();
        assert!(sum.max_abs_diff(&parts).unwrap() < 1e-12);
    }

    #[test]
    fn ramp_and_kernel_axioms() {
        let g = grid();
        assert_eq!(ramp(0.5), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        assert!((ramp(0.75) - 0.5).abs() < 1e-15);
        let eta = 8.0 * g.spacing();
        let k = smoothed_kernel(BeurlingKernel::default(), eta, &g).unwrap();
        let x = Complex64::new(0.1, 0.2);
        let far = x - Complex64::from_polar(2.0 * eta, 0.7);
        assert_eq!(k.evaluate(x, far), BeurlingKernel::default().evaluate(x, far));
        assert_eq!(k.evaluate(x, x - Complex64::new(0.25 * eta, 0.0)).norm(), 0.0);
        let mid = x - Complex64::from_polar(0.75 * eta, 1.1);
        assert!(k.evaluate(x, mid).norm() <= k.size_constant() / (0.75 * eta).powi(2));
        assert!(smoothed_kernel(BeurlingKernel::default(), 3.0 * g.spacing(), &g).is_err());
    }

    #[test]
    fn smoothed_commutator_trivial_cases() {
        let g = grid();
        let k = smoothed_kernel(BeurlingKernel::default(), 8.0 * g.spacing(), &g).unwrap();
        let b = SmoothSymbol::bump(&g, 1.0, 1.0).unwrap();
        let zero = Field::zeros(&g);
        assert_eq!(smoothed_commutator_apply(&b, &k, &zero).unwrap().sup_norm(), 0.0);
        let flat = SmoothSymbol::new(Field::zeros(&g), 1.0).unwrap();
        assert!(smoothed_commutator_apply(&flat, &k, &sample(&g, 3)).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn smoothing_check_rejects_trivial_input() {
        let g = grid();
        let b = SmoothSymbol::bump(&g, 1.0, 1.0).unwrap();
        let h = g.spacing();
        let e = smoothing_error_check(&b, &[8.0 * h, 16.0 * h, 32.0 * h], &Field::zeros(&g), 2.0, None);
        assert!(matches!(e, Err(Error::TrivialInput(_))));
    }

    #[test]
    fn symbol_support_is_validated() {
        let g = grid();
        let b = smooth_bump(&g, Complex64::new(0.0, 0.0), 1.0, Complex64::new(1.0, 0.0)).unwrap();
        assert!(SmoothSymbol::new(b.clone(), 0.5).is_err());
        let s = SmoothSymbol::new(b, 1.0).unwrap();
        assert_eq!(s.sup(), 1.0);
        assert!(s.grad_sup() > 0.0);
    }

    #[test]
    fn phi_projection_basics() {
        let g = grid();
        let c = Complex64::new(1.5, 0.5);
        let f = Field::constant(&g, c);
        let phi = phi_projection(&f, 2.0, 0.5).unwrap();
        for (i, v) in phi.values().iter().enumerate() {
            let z = g.point_at(i);
            let inside = z.re >= -1.0 && z.re < 1.0 && z.im >= -1.0 && z.im < 1.0;
            assert_eq!(*v, if inside { c } else { Complex64::new(0.0, 0.0) });
        }
        let f = sample(&g, 4);
        let once = phi_projection(&f, 2.0, 0.5).unwrap();
        let twice = phi_projection(&once, 2.0, 0.5).unwrap();
        assert!(once.max_abs_diff(&twice).unwrap() < 1e-15);
        assert!(phi_projection(&f, 2.0, 0.3).is_err());
    }

    #[test]
    fn shifts_must_be_on_lattice() {
        let g = grid();
        let fam = vec![sample(&g, 5)];
        let r = fk_diagnostics(&fam, 2.0, None, &[Complex64::new(0.3 * g.spacing(), 0.0)], &[1.0]);
        assert!(r.is_err());
        assert!(fk_diagnostics(&[], 2.0, None, &[], &[]).is_err());
    }

    #[test]
    fn single_bump_family_passes() {
        let g = make_grid(128, 4.0).unwrap();
        let b = smooth_bump(&g, Complex64::new(0.0, 0.0), 1.0, Complex64::new(1.0, 0.0)).unwrap();
        let h = g.spacing();
        let shifts: Vec<Complex64> = [1.0, 2.0, 4.0].iter().map(|s| Complex64::new(s * h, 0.0)).collect();
        let r = fk_diagnostics(&[b], 2.0, None, &shifts, &[1.0, 1.5, 2.0, 3.0]).unwrap();
        assert!(r.equicontinuity_monotone && r.tail_monotone);
        assert!(r.equicontinuity_slope.unwrap() < -0.9);
        assert_eq!(r.tail.last().unwrap().sup, 0.0);
        assert_eq!(r.family_size, 1);
    }
}
