//! Injectivity of layers with iid Gaussian weights.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::arrangement::central_cell_bound;
use crate::certificate::Verdict;
use crate::dss::{active_rows, certify_dss_all_with, has_dss_at, DssOptions};
use crate::error::{Error, Result};
use crate::numeric::lp::{linear_feasibility, FeasibilityResult, LinearSystem};
use crate::numeric::matrix::{fmt_f64, norm, Matrix};
use crate::numeric::{sample_gaussian_matrix, Prng};

/// Largest input dimension for which the study runs exact certification.
pub const EXACT_ARM_MAX_N: usize = 6;

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `P(k iid Gaussian vectors in R^n share a strictly positive direction)`
/// as the exact fraction `sum_{i<n} C(k-1, i) / 2^(k-1)`.
pub fn halfspace_probability_fraction(k: u64, n: u64) -> Result<(BigUint, BigUint)> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k and n must be positive".into()));
    }
    let num = (0..n).fold(BigUint::zero(), |acc, i| acc + binomial(k - 1, i));
    Ok((num, BigUint::one() << (k - 1)))
}

pub fn halfspace_probability_exact(k: u64, n: u64) -> Result<f64> {
    let (mut num, mut den) = halfspace_probability_fraction(k, n)?;
    let excess = den.bits().saturating_sub(1000);
    if excess > 0 {
        num >>= excess;
        den >>= excess;
    }
    Ok(num.to_f64().expect("fits") / den.to_f64().expect("fits"))
}

/// Monte Carlo estimate of the same probability: sample `k x n` Gaussian `A`
/// and test `{x : Ax > 0}` for nonemptiness. Trial `t` uses substream `t`.
pub fn halfspace_probability_mc(k: usize, n: usize, trials: usize, prng: &Prng) -> f64 {
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let a = sample_gaussian_matrix(k, n, &mut prng.substream(t as u64));
            let mut sys = LinearSystem::new(n);
            for r in a.row_iter() {
                sys = sys.gt(r.to_vec(), 0.0);
            }
            usize::from(matches!(
                linear_feasibility(&sys),
                Ok(FeasibilityResult::Feasible(_))
            ))
        })
        .sum();
    hits as f64 / trials as f64
}

/// Generic number of wedges cut by `m` central hyperplanes in `R^n`.
pub fn wedge_count_formula(m: usize, n: usize) -> u128 {
    central_cell_bound(m, n)
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `-log2(c e) - (c - 1)(H(1/(c - 1)) - 1)`; positive means the union bound
/// on non-injectivity decays.
pub fn union_bound_exponent(c: f64) -> f64 {
    -(c * std::f64::consts::E).log2() - (c - 1.0) * (binary_entropy(1.0 / (c - 1.0)) - 1.0)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) < 0.0, "root not bracketed");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest expansivity at which the union-bound exponent turns positive.
pub fn union_bound_threshold() -> f64 {
    bisect(union_bound_exponent, 3.0, 20.0, 1e-10)
}

/// `erfc(1/sqrt(2c)) / 2 - 1/c`.
pub fn cstar_gap(c: f64) -> f64 {
    0.5 * erfc(1.0 / (2.0 * c).sqrt()) - 1.0 / c
}

/// Root of `erfc(1/sqrt(2c)) / 2 = 1/c`, below which Gaussian layers are
/// non-injective with high probability.
pub fn cstar_lower_solve() -> f64 {
    bisect(cstar_gap, 1.0, 10.0, 1e-12)
}

/// `-(1/m) sum_j w_j / |w_j|`.
pub fn mean_direction(w: &Matrix) -> Result<Vec<f64>> {
    let mut x = vec![0.0; w.cols()];
    for (j, r) in w.row_iter().enumerate() {
        let s = norm(r);
        if s == 0.0 {
            return Err(Error::ZeroRow(j));
        }
        for (xi, v) in x.iter_mut().zip(r) {
            *xi -= v / s;
        }
    }
    let m = w.rows() as f64;
    x.iter_mut().for_each(|v| *v /= m);
    Ok(x)
}

/// `|S(x_bar, W)|` at the mean direction. Below `n` proves `W` non-injective.
/// A symmetric `W` gives `x_bar = 0` and every row counts as active.
pub fn mean_direction_test(w: &Matrix) -> Result<usize> {
    Ok(active_rows(w, &mean_direction(w)?)?.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub c: f64,
    pub m: usize,
    pub mean_active_count: f64,
    pub dss_at_mean_freq: f64,
    /// Fraction certified injective; absent when the exact arm is skipped or
    /// some trial could not be decided.
    pub exact_injective_freq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityStudy {
    pub n: usize,
    pub c_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<StudyRow>,
}

struct Trial {
    active: usize,
    dss: bool,
    exact: Option<Verdict>,
}

/// For each `c`, sample `trials` Gaussian `m x n` matrices with
/// `m = round(c n)`. Trial `t` draws from `Prng::new(seed, t)` for every `c`,
/// so the grid points share random numbers.
pub fn run_expansivity_study(
    n: usize,
    c_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ExpansivityStudy> {
    run_expansivity_study_with(n, c_grid, trials, seed, &DssOptions::default())
}

pub fn run_expansivity_study_with(
    n: usize,
    c_grid: &[f64],
    trials: usize,
    seed: u64,
    opts: &DssOptions,
) -> Result<ExpansivityStudy> {
    if trials == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "n and trials must be positive".into(),
        ));
    }
    let mut rows = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        if c.is_nan() || c <= 0.0 || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("ratio {c} is not positive")));
        }
        let m = ((c * n as f64).round() as usize).max(1);
        let results: Vec<Trial> = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<Trial> {
                let w = sample_gaussian_matrix(m, n, &mut Prng::new(seed, t as u64));
                let x = mean_direction(&w)?;
                let active = active_rows(&w, &x)?.len();
                let dss = active >= n && has_dss_at(&w, &x)?;
                let exact = (n <= EXACT_ARM_MAX_N).then(|| certify_dss_all_with(&w, opts).verdict);
                Ok(Trial { active, dss, exact })
            })
            .collect::<Result<_>>()?;
        let tf = trials as f64;
        let exact_injective_freq = if results.iter().all(|r| {
            matches!(
                r.exact,
                Some(Verdict::Injective) | Some(Verdict::NonInjective)
            )
        }) {
            Some(
                results
                    .iter()
                    .filter(|r| r.exact == Some(Verdict::Injective))
                    .count() as f64
                    / tf,
            )
        } else {
            None
        };
        rows.push(StudyRow {
            c,
            m,
            mean_active_count: results.iter().map(|r| r.active as f64).sum::<f64>() / tf,
            dss_at_mean_freq: results.iter().filter(|r| r.dss).count() as f64 / tf,
            exact_injective_freq,
        });
    }
    Ok(ExpansivityStudy {
        n,
        c_grid: c_grid.to_vec(),
        trials,
        seed,
        rows,
    })
}

impl ExpansivityStudy {
    /// CSV with columns `c, mean_active_count, dss_at_mean_freq,
    /// exact_injective_freq`, preceded by a `# seed=...` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# n={} trials={} seed={}\nc,mean_active_count,dss_at_mean_freq,exact_injective_freq\n",
            self.n, self.trials, self.seed
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(r.c),
                fmt_f64(r.mean_active_count),
                fmt_f64(r.dss_at_mean_freq),
                r.exact_injective_freq.map(fmt_f64).unwrap_or_default()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::construct_minimal;

    #[test]
    fn exact_probabilities() {
        assert_eq!(halfspace_probability_exact(3, 2).unwrap(), 0.75);
        assert_eq!(halfspace_probability_exact(1, 5).unwrap(), 1.0);
        assert_eq!(halfspace_probability_exact(2, 1).unwrap(), 0.5);
        let p = halfspace_probability_exact(3000, 10).unwrap();
        assert!((0.0..1e-300).contains(&p));
        assert!(halfspace_probability_exact(0, 1).is_err());
    }

    #[test]
    fn thresholds() {
        assert!(union_bound_exponent(12.0) > 0.0);
        assert!(union_bound_exponent(8.0) < 0.0);
        let u = union_bound_threshold();
        assert!((10.4..=10.6).contains(&u), "{u}");
        assert!(cstar_gap(10.0) > 0.0);
        assert!(cstar_gap(1.0) < 0.0);
        let c = cstar_lower_solve();
        assert!((c - 3.4).abs() <= 0.05, "{c}");
    }

    #[test]
    fn wedge_formula() {
        assert_eq!(wedge_count_formula(3, 2), 6);
        assert_eq!(wedge_count_formula(9, 1), 2);
        assert_eq!(wedge_count_formula(5, 3), 22);
    }

    #[test]
    fn mean_direction_examples() {
        let w = construct_minimal(&Matrix::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(mean_direction(&w).unwrap(), vec![0.0, 0.0]);
        assert_eq!(mean_direction_test(&w).unwrap(), 4);
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(mean_direction_test(&z), Err(Error::ZeroRow(1))));
    }

    #[test]
    fn small_study_is_deterministic() {
        let a = run_expansivity_study(2, &[2.0, 6.0], 40, 9).unwrap();
        let b = run_expansivity_study(2, &[2.0, 6.0], 40, 9).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.rows[0].exact_injective_freq.is_some());
        let big = run_expansivity_study(8, &[2.0], 3, 9).unwrap();
        assert!(big.rows[0].exact_injective_freq.is_none());
        assert!(big.to_csv().lines().last().unwrap().ends_with(','));
    }
}
