//! Aperiodic discrete convolution on the grid through a zero-padded FFT.
//!
//! For `x, y` on the `n x n` node lattice the offset `x - y` ranges over
//! `(-n, n)^2`, so a circular convolution of side `2n` reproduces the linear
//! sum `sum_y k(x - y) f(y)` exactly (up to rounding).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{Grid, Plan};

pub(crate) struct PaddedKernel {
    n: usize,
    spectrum: Vec<Complex64>,
}

impl PaddedKernel {
    /// `table(dx, dy)` is the kernel at the node offset `(dx, dy)`.
    pub(crate) fn new<F>(grid: &Grid, table: F) -> PaddedKernel
    where
        F: Fn(i64, i64) -> Complex64 + Sync,
    {
        let n = grid.n();
        let m = 2 * n;
        let mut data = vec![Complex64::new(0.0, 0.0); m * m];
        data.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            let dy = if j < n { j as i64 } else { j as i64 - m as i64 };
            if j == n {
                return;
            }
            for (i, v) in row.iter_mut().enumerate() {
                if i == n {
                    continue;
                }
                let dx = if i < n { i as i64 } else { i as i64 - m as i64 };
                *v = table(dx, dy);
            }
        });
        Plan::shared(m).transform(&mut data, false);
        PaddedKernel { n, spectrum: data }
    }

    /// `out[x] = sum_y k(x - y) values[y]` (no area factor).
    pub(crate) fn apply(&self, values: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let m = 2 * n;
        let mut data = vec![Complex64::new(0.0, 0.0); m * m];
        data.par_chunks_mut(m).take(n).enumerate().for_each(|(j, row)| {
            row[..n].copy_from_slice(&values[j * n..(j + 1) * n]);
        });
        let plan = Plan::shared(m);
        plan.transform(&mut data, false);
        data.par_iter_mut()
            .zip(self.spectrum.par_iter())
            .for_each(|(a, b)| *a *= b);
        plan.transform(&mut data, true);
        let scale = 1.0 / (m * m) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = data[j * m + i] * scale;
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn matches_direct_sum() {
        let g = make_grid(8, 1.0).unwrap();
        let k = |dx: i64, dy: i64| Complex64::new(dx as f64 * 0.3 - dy as f64, (dx * dy) as f64 * 0.1 + 1.0);
        let vals: Vec<Complex64> = (0..64).map(|i| Complex64::new((i % 7) as f64, (i % 3) as f64 - 1.0)).collect();
        let out = PaddedKernel::new(&g, k).apply(&vals);
        for x in 0..64usize {
            let (xi, xj) = ((x % 8) as i64, (x / 8) as i64);
            let mut s = Complex64::new(0.0, 0.0);
            for y in 0..64usize {
                let (yi, yj) = ((y % 8) as i64, (y / 8) as i64);
                s += k(xi - yi, xj - yj) * vals[y];
            }
            assert!((s - out[x]).norm() < 1e-10 * s.norm().max(1.0));
        }
    }
}
