//! Neumann-series solver for `dbar f - mu df - nu conj(df) = g`.
//!
//! With `h = dbar f` the equation becomes `(Id - mu B - nu Bbar) h = g`, solved
//! by the fixed-point iteration `h <- g + mu B h + nu conj(B h)` starting from
//! `h = g`. Convergence is measured in `L^2`, where the iteration contracts by
//! `k`; weighted norms of the result are reported afterwards.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builders::{normalize, random_smooth, rng};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::stats::{self, loglog_slope};
use crate::transforms::{beurling, cauchy};
use crate::weights::Weight;

/// Pair `(mu, nu)` with ellipticity `k = max(|mu| + |nu|) < 1`.
#[derive(Clone, Debug)]
pub struct BeltramiCoefficients {
    mu: Field,
    nu: Field,
    k: f64,
    support_radius: f64,
}

impl BeltramiCoefficients {
    pub fn new(mu: Field, nu: Field) -> Result<BeltramiCoefficients> {
        mu.grid().check(nu.grid())?;
        let grid = mu.grid().clone();
        let quarter = 0.5 * grid.half_side();
        let mut k = 0.0f64;
        let mut radius = 0.0f64;
        for (i, (a, b)) in mu.values().iter().zip(nu.values()).enumerate() {
            let s = a.norm() + b.norm();
            k = k.max(s);
            if s > 1e-12 {
                let z = grid.point_at(i);
                if z.re.abs() > quarter || z.im.abs() > quarter {
                    return Err(Error::InvalidParameter(format!(
                        "coefficients must vanish outside the central quarter (nonzero at {z})"
                    )));
                }
                radius = radius.max(z.norm());
            }
        }
        if k >= 1.0 {
            return Err(Error::NotElliptic { k });
        }
        Ok(BeltramiCoefficients {
            mu,
            nu,
            k,
            support_radius: radius,
        })
    }

    pub fn mu_only(mu: Field) -> Result<BeltramiCoefficients> {
        let nu = Field::zeros(mu.grid());
        BeltramiCoefficients::new(mu, nu)
    }

    pub fn zero(grid: &Grid) -> BeltramiCoefficients {
        BeltramiCoefficients::new(Field::zeros(grid), Field::zeros(grid)).expect("zero is elliptic")
    }

    pub fn mu(&self) -> &Field {
        &self.mu
    }

    pub fn nu(&self) -> &Field {
        &self.nu
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Distortion `K = (1 + k) / (1 - k)`.
    pub fn distortion(&self) -> f64 {
        (1.0 + self.k) / (1.0 - self.k)
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }

    /// `mu B u + nu conj(B u)`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.grid().check(u.grid())?;
        let bu = beurling(u);
        let values = bu
            .values()
            .par_iter()
            .zip(self.mu.values().par_iter().zip(self.nu.values().par_iter()))
            .map(|(b, (m, n))| m * b + n * b.conj())
            .collect();
        Field::new(u.grid().clone(), values, "A u")
    }
}

/// `||(Id - mu B - nu Bbar) h - g||_2`.
pub fn beltrami_residual(coef: &BeltramiCoefficients, h: &Field, g: &Field) -> Result<f64> {
    Ok(h.sub(&coef.apply(h)?)?.sub(g)?.l2_norm())
}

/// Stepwise form of the fixed-point iteration.
pub struct NeumannIteration<'a> {
    coef: &'a BeltramiCoefficients,
    g: Field,
    h: Field,
    steps: usize,
}

impl<'a> NeumannIteration<'a> {
    pub fn new(coef: &'a BeltramiCoefficients, g: &Field) -> Result<Self> {
        Self::from_initial(coef, g, g)
    }

    pub fn from_initial(coef: &'a BeltramiCoefficients, g: &Field, h0: &Field) -> Result<Self> {
        coef.grid().check(g.grid())?;
        coef.grid().check(h0.grid())?;
        Ok(NeumannIteration {
            coef,
            g: g.clone(),
            h: h0.clone(),
            steps: 0,
        })
    }

    /// Advances one step and returns `||h_new - h_old||_2`.
    pub fn step(&mut self) -> Result<f64> {
        let next = self.g.add(&self.coef.apply(&self.h)?)?;
        let inc = next.sub(&self.h)?.l2_norm();
        self.h = next;
        self.steps += 1;
        Ok(inc)
    }

    pub fn current(&self) -> &Field {
        &self.h
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions<'a> {
    pub tol: f64,
    pub max_iter: usize,
    /// Exponent for the reported norms.
    pub p: f64,
    pub weight: Option<&'a Weight>,
    pub initial: Option<&'a Field>,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 500,
            p: 2.0,
            weight: None,
            initial: None,
        }
    }
}

/// Norms of the derivatives of a solution in `L^p(w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfNorms {
    pub dz: f64,
    pub dzbar: f64,
    /// `||df|| + ||dbar f||`.
    pub sum: f64,
    /// `|| |df| + |dbar f| ||`.
    pub pointwise: f64,
}

impl DfNorms {
    pub fn measure(dz: &Field, dzbar: &Field, p: f64, weight: Option<&Weight>) -> Result<DfNorms> {
        let a = dz.lp_norm(p, weight)?;
        let b = dzbar.lp_norm(p, weight)?;
        let both = dz.abs().add(&dzbar.abs())?;
        Ok(DfNorms {
            dz: a,
            dzbar: b,
            sum: a + b,
            pointwise: both.lp_norm(p, weight)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// `dbar f`.
    pub h: Field,
    /// `C h`.
    pub f: Field,
    /// Norms with `df = B h` and `dbar f = h`.
    pub df: DfNorms,
    pub g_norm: f64,
    /// `df.sum / g_norm`.
    pub ratio: f64,
    pub residual: f64,
    pub iterations: usize,
    pub increments: Vec<f64>,
    /// Mean of `h`; `dbar (C h)` equals `h` minus this constant on the torus.
    pub mean_mode: Complex64,
    pub p: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub p: f64,
    pub df: DfNorms,
    pub g_norm: f64,
    pub ratio: f64,
    pub residual: f64,
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub mean_mode: Complex64,
    pub converged: bool,
}

impl SolveResult {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            p: self.p,
            df: self.df,
            g_norm: self.g_norm,
            ratio: self.ratio,
            residual: self.residual,
            iterations: self.iterations,
            increments: self.increments.clone(),
            mean_mode: self.mean_mode,
            converged: self.converged,
        }
    }
}

/// Solves `(Id - mu B - nu Bbar) h = g` and returns `f = C h` with diagnostics.
pub fn neumann_solve(coef: &BeltramiCoefficients, g: &Field, opts: &SolveOptions<'_>) -> Result<SolveResult> {
    let mut it = match opts.initial {
        Some(h0) => NeumannIteration::from_initial(coef, g, h0)?,
        None => NeumannIteration::new(coef, g)?,
    };
    let mut increments = Vec::new();
    let mut converged = false;
    while it.steps() < opts.max_iter {
        let inc = it.step()?;
        increments.push(inc);
        if inc <= opts.tol {
            converged = true;
            break;
        }
    }
    let h = it.current().clone().with_tag("h");
    let residual = beltrami_residual(coef, &h, g)?;
    let bh = beurling(&h);
    let df = DfNorms::measure(&bh, &h, opts.p, opts.weight)?;
    let g_norm = g.lp_norm(opts.p, opts.weight)?;
    let result = SolveResult {
        f: cauchy(&h).with_tag("f"),
        mean_mode: h.mean(),
        h,
        df,
        g_norm,
        ratio: if g_norm > 0.0 { df.sum / g_norm } else { f64::NAN },
        residual,
        iterations: it.steps(),
        increments,
        p: opts.p,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NotConverged { best: Box::new(result) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub p: f64,
    /// `(||df|| + ||dbar f||) / ||g||` per draw.
    pub ratios: Vec<f64>,
    /// `|| |df| + |dbar f| || / ||g||` per draw.
    pub pointwise_ratios: Vec<f64>,
    pub max: f64,
    pub median: f64,
    pub pointwise_max: f64,
    pub max_iterations: usize,
}

/// Solves for seeded random smooth `g` of unit `L^p(w)` norm and collects the
/// ratios `||Df|| / ||g||`.
pub fn apriori_ratio(
    coef: &BeltramiCoefficients,
    p: f64,
    weight: Option<&Weight>,
    ensemble_size: usize,
    seed: u64,
) -> Result<RatioSummary> {
    let grid = coef.grid();
    let mut r = rng(seed);
    let draws: Vec<Field> = (0..ensemble_size)
        .map(|_| random_smooth(&mut r, grid).sample(grid))
        .collect::<Result<_>>()?;
    let opts = SolveOptions {
        tol: 1e-10,
        max_iter: 1000,
        p,
        weight,
        initial: None,
    };
    let results: Vec<(f64, f64, usize)> = draws
        .par_iter()
        .map(|g| {
            let g = normalize(g, p, weight)?;
            let s = neumann_solve(coef, &g, &opts)?;
            Ok((s.ratio, s.df.pointwise / s.g_norm, s.iterations))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = results.iter().map(|r| r.0).collect();
    let pointwise: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(RatioSummary {
        p,
        max: stats::max(&ratios),
        median: stats::median(&ratios),
        pointwise_max: stats::max(&pointwise),
        max_iterations: results.iter().map(|r| r.2).max().unwrap_or(0),
        ratios,
        pointwise_ratios: pointwise,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub k: f64,
    pub p: f64,
    pub orders: Vec<u32>,
    /// Largest `||(mu B + nu Bbar)^N f||` over the unit-norm draws.
    pub estimates: Vec<f64>,
    /// Smallest `c` with `estimate_N <= c k^N N^3` for every listed `N`.
    pub fitted_c: f64,
    /// Slope of `ln estimate_N` against `N`; compare with `ln k`.
    pub log_rate: Option<f64>,
}

pub fn rn_kn_growth_diag(
    coef: &BeltramiCoefficients,
    n_max: u32,
    p: f64,
    weight: Option<&Weight>,
    trials: usize,
    seed: u64,
) -> Result<GrowthReport> {
    if n_max == 0 || n_max > 12 {
        return Err(Error::InvalidParameter(format!("N_max must be in 1..=12 (got {n_max})")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let grid = coef.grid();
    let mut r = rng(seed);
    let mut estimates = vec![0.0f64; n_max as usize];
    for _ in 0..trials {
        let mut u = normalize(&random_smooth(&mut r, grid).sample(grid)?, p, weight)?;
        for e in estimates.iter_mut() {
            u = coef.apply(&u)?;
            *e = e.max(u.lp_norm(p, weight)?);
        }
    }
    let orders: Vec<u32> = (1..=n_max).collect();
    let k = coef.k();
    let fitted_c = orders
        .iter()
        .zip(&estimates)
        .map(|(&n, e)| e / (k.powi(n as i32) * (n as f64).powi(3)))
        .fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = orders
        .iter()
        .zip(&estimates)
        .filter(|(_, e)| **e > 0.0)
        .map(|(&n, e)| (n as f64, e.ln()))
        .collect();
    Ok(GrowthReport {
        k,
        p,
        orders,
        estimates,
        fitted_c,
        log_rate: stats::linear_slope(&pts),
    })
}

/// `dbar g - lambda Im(dg)`.
pub fn im_operator_apply(lambda: &Field, g: &Field) -> Result<Field> {
    lambda.grid().check(g.grid())?;
    let sup = lambda.sup_norm();
    if sup >= 1.0 {
        return Err(Error::NotElliptic { k: sup });
    }
    let dz = g.dz();
    let dzbar = g.dzbar();
    let values = dzbar
        .values()
        .par_iter()
        .zip(dz.values().par_iter().zip(lambda.values().par_iter()))
        .map(|(b, (a, l))| b - l * a.im)
        .collect();
    Field::new(g.grid().clone(), values, "im-operator")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub experiment: String,
    pub p: f64,
    /// `sup |lambda|`.
    pub epsilon: f64,
    /// `(||df|| + ||dbar f||) / ||dbar f - lambda Im df||` per draw.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Largest `||df|| / ||dbar f||` over the draws.
    pub max_dz_over_dzbar: f64,
    pub unbounded_candidate: bool,
}

/// Empirical lower bound for the best constant in
/// `||Df|| <= C ||dbar f - lambda Im df||`.
pub fn weighted_estimate_probe(
    lambda: &Field,
    p: f64,
    weight: Option<&Weight>,
    ensemble_size: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let grid = lambda.grid();
    let mut r = rng(seed);
    let draws: Vec<Field> = (0..ensemble_size)
        .map(|_| random_smooth(&mut r, grid).sample(grid))
        .collect::<Result<_>>()?;
    let rows: Vec<(f64, f64, bool)> = draws
        .par_iter()
        .map(|f| {
            let f = normalize(f, p, weight)?;
            let df = DfNorms::measure(&f.dz(), &f.dzbar(), p, weight)?;
            let denom = im_operator_apply(lambda, &f)?.lp_norm(p, weight)?;
            let unbounded = denom < 1e-14;
            let ratio = if unbounded { f64::INFINITY } else { df.sum / denom };
            Ok((ratio, df.dz / df.dzbar, unbounded))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(ProbeReport {
        experiment: "best-constant probe for the Im-derivative operator".into(),
        p,
        epsilon: lambda.sup_norm(),
        max_ratio: stats::max(&ratios),
        max_dz_over_dzbar: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        unbounded_candidate: rows.iter().any(|r| r.2),
        ratios,
    })
}

/// Refinement growth of a measured quantity: slope of `ln value` against `ln n`.
pub fn refinement_slope(ns: &[usize], values: &[f64]) -> Option<f64> {
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    loglog_slope(&xs, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{disk_indicator, smooth_bump, DiskSampling};
    use crate::grid::make_grid;

    fn grid() -> Grid {
        make_grid(64, 4.0).unwrap()
    }

    fn g_field(grid: &Grid) -> Field {
        random_smooth(&mut rng(11), grid).sample(grid).unwrap()
    }

    #[test]
    fn rejects_non_elliptic_and_wide_support() {
        let g = grid();
        let mu = Field::from_fn(&g, "mu", |z| {
            Complex64::new(if z.norm() < 1.0 { 0.7 } else { 0.0 }, 0.0)
        })
        .unwrap();
        let nu = mu.clone();
        assert!(matches!(BeltramiCoefficients::new(mu.clone(), nu), Err(Error::NotElliptic { .. })));
        let wide = disk_indicator(&g, Complex64::new(0.0, 0.0), 3.0, DiskSampling::Point).unwrap().scale(Complex64::new(0.1, 0.0));
        assert!(BeltramiCoefficients::mu_only(wide).is_err());
        let c = BeltramiCoefficients::mu_only(mu).unwrap();
        assert_eq!(c.k(), 0.7);
        assert!(c.support_radius() < 1.0);
    }

    #[test]
    fn zero_coefficients_solve_in_one_step() {
        let g = grid();
        let rhs = g_field(&g);
        let s = neumann_solve(&BeltramiCoefficients::zero(&g), &rhs, &SolveOptions::default()).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.h.values(), rhs.values());
        assert!(s.f.max_abs_diff(&cauchy(&rhs)).unwrap() == 0.0);
        assert!(s.residual == 0.0);
    }

    #[test]
    fn not_converged_carries_best_iterate() {
        let g = grid();
        let mu = disk_indicator(&g, Complex64::new(0.0, 0.0), 1.0, DiskSampling::Point).unwrap().scale(Complex64::new(0.0, 0.5));
        let coef = BeltramiCoefficients::mu_only(mu).unwrap();
        let opts = SolveOptions { tol: 0.0, max_iter: 3, ..SolveOptions::default() };
        match neumann_solve(&coef, &g_field(&g), &opts) {
            Err(Error::NotConverged { best }) => {
                assert_eq!(best.iterations, 3);
                assert!(best.residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solution_satisfies_the_equation() {
        let g = grid();
        let mu = smooth_bump(&g, Complex64::new(0.3, 0.0), 1.2, Complex64::new(0.3, 0.2)).unwrap();
        let nu = smooth_bump(&g, Complex64::new(-0.2, 0.1), 1.0, Complex64::new(0.0, 0.25)).unwrap();
        let coef = BeltramiCoefficients::new(mu.clone(), nu.clone()).unwrap();
        let rhs = g_field(&g);
        let opts = SolveOptions { tol: 1e-12, ..SolveOptions::default() };
        let s = neumann_solve(&coef, &rhs, &opts).unwrap();
        let k = coef.k();
        assert!(s.residual <= opts.tol * (1.0 + k) / (1.0 - k));
        // dbar f = h - mean(h), df = B h on the torus.
        let f = &s.f;
        let eq = f.dzbar().sub(&mu.mul(&f.dz()).unwrap()).unwrap().sub(&nu.mul(&f.dz().conj()).unwrap()).unwrap().sub(&rhs).unwrap();
        let mean_shift = (s.mean_mode.norm() * (2.0 * g.half_side())) * (1.0 + k);
        assert!(eq.l2_norm() <= s.residual + mean_shift + 1e-9);
    }

    #[test]
    fn uniqueness_from_two_starts() {
        let g = grid();
        let mu = smooth_bump(&g, Complex64::new(0.0, 0.0), 1.5, Complex64::new(0.4, 0.0)).unwrap();
        let coef = BeltramiCoefficients::mu_only(mu).unwrap();
        let rhs = g_field(&g);
        let tol = 1e-11;
        let a = neumann_solve(&coef, &rhs, &SolveOptions { tol, ..SolveOptions::default() }).unwrap();
        let start = Field::zeros(&g);
        let b = neumann_solve(&coef, &rhs, &SolveOptions { tol, initial: Some(&start), ..SolveOptions::default() }).unwrap();
        assert!(a.h.sub(&b.h).unwrap().l2_norm() <= 10.0 * tol);
    }

    #[test]
    fn zero_coefficient_ratio_is_two_for_mean_zero_data() {
        let g = grid();
        let rhs = g_field(&g);
        let rhs = rhs.map(|v| v - rhs.mean()).unwrap();
        let s = neumann_solve(&BeltramiCoefficients::zero(&g), &rhs, &SolveOptions::default()).unwrap();
        assert!((s.ratio - 2.0).abs() < 1e-10, "{}", s.ratio);
        let r = apriori_ratio(&BeltramiCoefficients::zero(&g), 2.0, None, 6, 3).unwrap();
        assert!(r.ratios.iter().all(|v| *v <= 2.0 + 1e-12 && *v > 1.0));
    }

    #[test]
    fn growth_needs_sane_order() {
        let g = grid();
        assert!(rn_kn_growth_diag(&BeltramiCoefficients::zero(&g), 13, 2.0, None, 1, 0).is_err());
        assert!(rn_kn_growth_diag(&BeltramiCoefficients::zero(&g), 0, 2.0, None, 1, 0).is_err());
    }

    #[test]
    fn im_operator_basics() {
        let g = grid();
        let f = g_field(&g);
        let zero = Field::zeros(&g);
        assert!(im_operator_apply(&zero, &f).unwrap().max_abs_diff(&f.dzbar()).unwrap() == 0.0);
        let big = Field::constant(&g, Complex64::new(1.0, 0.0));
        assert!(matches!(im_operator_apply(&big, &f), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn im_of_dz_for_real_gaussian_matches_finite_differences() {
        let g = make_grid(256, 4.0).unwrap();
        let s = 0.5;
        let f = Field::from_fn(&g, "gauss", |z| Complex64::new((-z.norm_sqr() / (2.0 * s * s)).exp(), 0.0)).unwrap();
        let lam = Field::constant(&g, Complex64::new(0.5, 0.0));
        let out = im_operator_apply(&lam, &f).unwrap();
        let h = 1e-5;
        let gauss = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * s * s)).exp();
        let mut worst = 0.0f64;
        for (ix, iy) in [(128, 140), (120, 131), (150, 100), (133, 133)] {
            let z = g.point(ix, iy);
            let dy = (gauss(z.re, z.im + h) - gauss(z.re, z.im - h)) / (2.0 * h);
            let im_dz = -0.5 * dy;
            let expected = f.dzbar().at(ix, iy) - 0.5 * im_dz;
            worst = worst.max((out.at(ix, iy) - expected).norm() / expected.norm());
        }
        assert!(worst < 1e-6, "{worst}");
    }
}
