//! Inverse Lipschitz constants of injective ReLU layers.
//!
//! For injective `W` the bound `|ReLU(Wx0) - ReLU(Wx1)| >= C(W) |x0 - x1|`
//! holds with `C(W) = (2m)^{-1/2} min_x sigma(W|_{S(x,W)})`. Boundary active
//! sets contain the active set of an adjacent open wedge and adding rows
//! cannot lower the smallest singular value, so the minimum runs over open
//! wedges only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::Verdict;
use crate::dss::{active_rows, certify_dss_all_with, enumerate_wedges_with_budget, DssOptions};
use crate::error::{Error, Result};
use crate::numeric::linalg::smallest_singular_value;
use crate::numeric::matrix::{distance, dot, relu, IndexSet, Matrix};
use crate::numeric::Prng;

/// Absolute tolerance for stability comparisons.
pub const TAU_NUM: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub m: usize,
    pub n: usize,
    /// `(2m)^{-1/2}` times the smallest wedge singular value; absent when the
    /// wedges are out of budget.
    pub c_exact: Option<f64>,
    pub c_sampled: Option<f64>,
    pub empirical_min_ratio: Option<f64>,
    /// Sign pattern of the wedge attaining `c_exact`.
    pub argmin_wedge: Option<Vec<i8>>,
    pub wedge_count: usize,
}

fn sigma_on(w: &Matrix, s: &IndexSet) -> f64 {
    if s.len() < w.cols() {
        return 0.0;
    }
    let sub = w.select_rows(s.as_slice()).expect("indices in range");
    smallest_singular_value(&sub).unwrap_or(0.0)
}

fn prefactor(m: usize) -> f64 {
    1.0 / (2.0 * m as f64).sqrt()
}

pub fn inverse_lipschitz_exact(w: &Matrix) -> Result<StabilityReport> {
    inverse_lipschitz_exact_with(w, &DssOptions::default())
}

/// Exact constant by wedge enumeration. Fails with `NotInjective` unless the
/// layer certifies.
pub fn inverse_lipschitz_exact_with(w: &Matrix, opts: &DssOptions) -> Result<StabilityReport> {
    let cert = certify_dss_all_with(w, opts);
    if cert.verdict != Verdict::Injective {
        return Err(Error::NotInjective(format!(
            "layer is {:?}; the inverse Lipschitz bound needs an injective layer",
            cert.verdict
        )));
    }
    let mut report = StabilityReport {
        m: w.rows(),
        n: w.cols(),
        ..Default::default()
    };
    let wedges = match enumerate_wedges_with_budget(w, opts.budget) {
        Ok(ws) => ws,
        Err(Error::BudgetExceeded { .. }) => return Ok(report),
        Err(e) => return Err(e),
    };
    let sigmas: Vec<f64> = wedges
        .par_iter()
        .map(|c| sigma_on(w, &c.active_set))
        .collect();
    let (idx, sigma) = sigmas
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("at least one wedge");
    report.c_exact = Some(prefactor(w.rows()) * sigma);
    report.argmin_wedge = Some(wedges[idx].sign_pattern.clone());
    report.wedge_count = wedges.len();
    Ok(report)
}

/// `(2m)^{-1/2}` times the smallest singular value seen over sampled
/// directions. Never below the exact constant.
pub fn inverse_lipschitz_sampled(w: &Matrix, trials: usize, prng: &mut Prng) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..trials {
        let x = prng.unit_vector(w.cols());
        let s = active_rows(w, &x).expect("dims");
        best = best.min(sigma_on(w, &s));
    }
    prefactor(w.rows()) * best
}

/// Smallest observed `|f(x0) - f(x1)| / |x0 - x1|` for `f = ReLU(W. + b)`.
///
/// Even-numbered pairs are near pairs: a uniform sphere point and a step of
/// log-uniform length in `[1e-3, 10]`. Odd-numbered pairs are two independent
/// Gaussian points. Pair `k` draws from substream `k`.
pub fn empirical_min_ratio(w: &Matrix, b: &[f64], pairs: usize, prng: &Prng) -> Result<f64> {
    if b.len() != w.rows() {
        return Err(Error::Dimension(format!(
            "bias has length {}, weight has {} rows",
            b.len(),
            w.rows()
        )));
    }
    let n = w.cols();
    let f = |x: &[f64]| -> Vec<f64> {
        let mut y = w.mul_vec(x).expect("dims");
        y.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        relu(&y)
    };
    let (lo, hi) = (1e-3f64.ln(), 10f64.ln());
    let ratio = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut r = prng.substream(k as u64);
            let (x0, x1) = if k % 2 == 0 {
                let x0 = r.unit_vector(n);
                let step = r.uniform_range(lo, hi).exp();
                let u = r.unit_vector(n);
                let x1: Vec<f64> = x0.iter().zip(&u).map(|(a, d)| a + step * d).collect();
                (x0, x1)
            } else {
                (r.normal_vec(n), r.normal_vec(n))
            };
            let d = distance(&x0, &x1);
            if d == 0.0 {
                f64::INFINITY
            } else {
                distance(&f(&x0), &f(&x1)) / d
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(ratio)
}

/// Checks, along the segment `x1 -> x2` cut at `breakpoints`, that
/// `sum_k |f(x_{t_k}) - f(x_{t_{k+1}})|^2 <= |f(x1) - f(x2)|^2` and
/// `sum_k |f(x_{t_k}) - f(x_{t_{k+1}})| <= sqrt(n_t) |f(x1) - f(x2)|`
/// for `f = ReLU(W.)`, within [`TAU_NUM`].
pub fn colinear_additivity_check(
    w: &Matrix,
    x1: &[f64],
    x2: &[f64],
    breakpoints: &[f64],
) -> Result<bool> {
    let nt = breakpoints.len();
    if nt < 2
        || breakpoints[0] != 0.0
        || breakpoints[nt - 1] != 1.0
        || breakpoints.windows(2).any(|p| p[1] < p[0])
    {
        return Err(Error::InvalidArgument(
            "breakpoints must rise from 0 to 1".into(),
        ));
    }
    let point = |t: f64| -> Vec<f64> { x1.iter().zip(x2).map(|(a, b)| a + t * (b - a)).collect() };
    let f = |x: &[f64]| relu(&w.mul_vec(x).expect("dims"));
    let images: Vec<Vec<f64>> = breakpoints.iter().map(|t| f(&point(*t))).collect();
    let total = distance(&images[0], &images[nt - 1]);
    let pieces: Vec<f64> = images.windows(2).map(|p| distance(&p[0], &p[1])).collect();
    let squared: f64 = pieces.iter().map(|d| d * d).sum();
    let linear: f64 = pieces.iter().sum();
    let tol = TAU_NUM * (1.0 + total * total);
    Ok(squared <= total * total + tol && linear <= (nt as f64).sqrt() * total + tol)
}

/// Number of distinct active sets on the open pieces of the segment
/// `x0 -> x1` (crossing points excluded). Each row changes state at most
/// once, so this is at most `m + 1`.
pub fn segment_active_sets(w: &Matrix, x0: &[f64], x1: &[f64]) -> usize {
    let dir: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
    let mut ts: Vec<f64> = w
        .row_iter()
        .filter_map(|r| {
            let slope = dot(r, &dir);
            (slope != 0.0).then(|| -dot(r, x0) / slope)
        })
        .filter(|t| *t > 0.0 && *t < 1.0)
        .collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut probes = vec![0.0];
    for (i, t) in ts.iter().enumerate() {
        let next = ts.get(i + 1).copied().unwrap_or(1.0);
        probes.push(0.5 * (t + next));
    }
    probes.push(1.0);
    let mut sets: Vec<IndexSet> = probes
        .iter()
        .map(|t| {
            let x: Vec<f64> = x0.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            active_rows(w, &x).expect("dims")
        })
        .collect();
    sets.sort_by(|a, b| a.as_slice().cmp(b.as_slice()));
    sets.dedup();
    sets.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::construct_minimal;
    use crate::numeric::prng::sample_orthogonal;

    fn pm2() -> Matrix {
        construct_minimal(&Matrix::identity(2), &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn exact_examples() {
        let r = inverse_lipschitz_exact(&pm2()).unwrap();
        assert!((r.c_exact.unwrap() - 1.0 / 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.wedge_count, 4);

        let r2 = inverse_lipschitz_exact(&pm2().scaled(2.0).unwrap()).unwrap();
        assert!((r2.c_exact.unwrap() - 2.0 * r.c_exact.unwrap()).abs() < 1e-12);

        let b = sample_orthogonal(3, &mut Prng::new(4, 0));
        let w = construct_minimal(&b, &[1.0; 3]).unwrap();
        let r = inverse_lipschitz_exact(&w).unwrap();
        assert!((r.c_exact.unwrap() - 1.0 / 12f64.sqrt()).abs() < 1e-12);

        assert!(matches!(
            inverse_lipschitz_exact(&Matrix::identity(2)),
            Err(Error::NotInjective(_))
        ));
    }

    #[test]
    fn sampled_examples() {
        let c = inverse_lipschitz_sampled(&pm2(), 1000, &mut Prng::new(1, 0));
        assert!((c - 1.0 / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ratio_examples() {
        let w = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let r = empirical_min_ratio(&w, &[0.0, 0.0], 5000, &Prng::new(2, 0)).unwrap();
        assert!(r >= 1.0 / 2f64.sqrt() - 1e-12 && r <= 1.0 + 1e-12, "{r}");
        let r = empirical_min_ratio(&pm2(), &[0.0; 4], 5000, &Prng::new(2, 0)).unwrap();
        assert!(r >= 1.0 / 8f64.sqrt() - TAU_NUM);
    }

    #[test]
    fn additivity_examples() {
        let w = pm2();
        assert!(colinear_additivity_check(&w, &[1.0, 0.5], &[-1.0, 0.5], &[0.0, 1.0]).unwrap());
        assert!(
            colinear_additivity_check(&w, &[1.0, 0.5], &[-1.0, 0.5], &[0.0, 0.3, 1.0]).unwrap()
        );
        assert!(colinear_additivity_check(&w, &[1.0], &[1.0], &[0.0, 0.5]).is_err());
    }

    #[test]
    fn crossing_count() {
        let w = pm2();
        assert_eq!(segment_active_sets(&w, &[1.0, 0.5], &[-1.0, 0.5]), 2);
        assert_eq!(segment_active_sets(&w, &[1.0, 2.0], &[-2.0, -1.0]), 3);
    }
}
