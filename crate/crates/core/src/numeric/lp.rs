//! Small dense linear feasibility solver.
//!
//! Systems mix equalities `a.x = b`, weak inequalities `a.x >= b` and strict
//! inequalities `a.x > b`. Every row is normalized to unit coefficient norm and
//! the strict rows are interiorized through a shared margin variable `t`:
//! `a.x >= b + t`, `0 <= t <= cap`. A two-phase simplex on the weak relaxation
//! then maximizes `t`, so the reported witness clears each strict constraint by
//! `t*` in Euclidean distance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm};
use crate::error::{Error, Result};

/// Absolute margin strict constraints must clear (unit-norm rows).
pub const DELTA_STRICT: f64 = 1e-7;
/// Residual tolerance when verifying a witness.
pub const TAU_FEAS: f64 = 1e-9;
/// Margins below this are treated as exactly zero.
const ZERO_MARGIN: f64 = 1e-10;
const PIVOT_EPS: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-12;
const NOISE_RC: f64 = 1e-8;
const REINVERT_EVERY: usize = 32;
const PHASE1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }
}

/// A polyhedral system over `dim` free variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearSystem {
    pub dim: usize,
    pub equalities: Vec<LinearConstraint>,
    pub weak: Vec<LinearConstraint>,
    pub strict: Vec<LinearConstraint>,
}

impl LinearSystem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn eq(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.equalities.push(LinearConstraint::new(coeffs, rhs));
        self
    }

    pub fn ge(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.weak.push(LinearConstraint::new(coeffs, rhs));
        self
    }

    pub fn gt(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.strict.push(LinearConstraint::new(coeffs, rhs));
        self
    }

    fn check_dims(&self) -> Result<()> {
        let all = self.equalities.iter().chain(&self.weak).chain(&self.strict);
        for c in all {
            if c.coeffs.len() != self.dim {
                return Err(Error::Dimension(format!(
                    "constraint has {} coefficients, system dimension is {}",
                    c.coeffs.len(),
                    self.dim
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite constraint".into()));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint at `x` (strict rows checked as weak),
    /// measured on unit-normalized rows.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.equalities {
            let s = norm(&c.coeffs).max(1.0);
            worst = worst.max((dot(&c.coeffs, x) - c.rhs).abs() / s);
        }
        for c in self.weak.iter().chain(&self.strict) {
            let s = norm(&c.coeffs).max(f64::MIN_POSITIVE);
            worst = worst.max((c.rhs - dot(&c.coeffs, x)) / s);
        }
        worst
    }

    /// Smallest normalized slack of the strict rows at `x` (infinite when none).
    pub fn strict_margin(&self, x: &[f64]) -> f64 {
        self.strict
            .iter()
            .filter(|c| norm(&c.coeffs) > 0.0)
            .map(|c| (dot(&c.coeffs, x) - c.rhs) / norm(&c.coeffs))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "witness")]
pub enum FeasibilityResult {
    Feasible(Vec<f64>),
    Infeasible,
    Inconclusive,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }

    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            Self::Feasible(w) => Some(w),
            _ => None,
        }
    }
}

/// Outcome of margin maximization.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginOutcome {
    /// Weak relaxation is empty.
    Empty,
    /// Optimal margin and a point attaining it.
    Optimal { margin: f64, point: Vec<f64> },
    /// The simplex did not converge.
    Failed,
}

/// Decide whether the system has a solution.
///
/// `Feasible` carries a witness satisfying equalities and weak rows within
/// [`TAU_FEAS`] and strict rows by at least [`DELTA_STRICT`]. `Infeasible`
/// means the weak relaxation is empty or the best strict margin is zero.
pub fn linear_feasibility(system: &LinearSystem) -> Result<FeasibilityResult> {
    linear_feasibility_with(system, DELTA_STRICT)
}

pub fn linear_feasibility_with(system: &LinearSystem, delta: f64) -> Result<FeasibilityResult> {
    system.check_dims()?;
    let has_strict = !system.strict.is_empty();
    let outcome = maximize_margin(system, 1.0, !has_strict)?;
    let result = match outcome {
        MarginOutcome::Empty => FeasibilityResult::Infeasible,
        MarginOutcome::Failed => FeasibilityResult::Inconclusive,
        MarginOutcome::Optimal { margin, point } => {
            if has_strict && margin < ZERO_MARGIN {
                FeasibilityResult::Infeasible
            } else if has_strict && margin < delta {
                FeasibilityResult::Inconclusive
            } else {
                let scale = 1.0 + point.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let violation = system.max_violation(&point);
                let margin_ok = !has_strict || system.strict_margin(&point) >= delta * (1.0 - 1e-6);
                if violation <= TAU_FEAS * scale && margin_ok {
                    FeasibilityResult::Feasible(point)
                } else {
                    FeasibilityResult::Inconclusive
                }
            }
        }
    };
    Ok(result)
}

/// Maximize the common margin `t in [0, cap]` of the strict rows (or of the
/// weak rows too when `margin_on_weak` is set).
pub fn maximize_margin(
    system: &LinearSystem,
    cap: f64,
    margin_on_weak: bool,
) -> Result<MarginOutcome> {
    system.check_dims()?;
    let n = system.dim;

    // Normalized rows: (coeffs, rhs, kind). kind: 0 = eq, 1 = weak, 2 = margin row.
    let mut rows: Vec<(Vec<f64>, f64, u8)> = Vec::new();
    let mut push = |c: &LinearConstraint, kind: u8| -> Option<()> {
        let s = norm(&c.coeffs);
        if s == 0.0 {
            let ok = match kind {
                0 => c.rhs.abs() <= TAU_FEAS,
                1 => c.rhs <= TAU_FEAS,
                _ => c.rhs < 0.0,
            };
            return if ok { Some(()) } else { None };
        }
        rows.push((c.coeffs.iter().map(|v| v / s).collect(), c.rhs / s, kind));
        Some(())
    };
    for c in &system.equalities {
        if push(c, 0).is_none() {
            return Ok(MarginOutcome::Empty);
        }
    }
    for c in &system.weak {
        if push(c, if margin_on_weak { 2 } else { 1 }).is_none() {
            return Ok(MarginOutcome::Empty);
        }
    }
    for c in &system.strict {
        if push(c, 2).is_none() {
            return Ok(MarginOutcome::Empty);
        }
    }
    let uses_margin = rows.iter().any(|r| r.2 == 2);

    // Columns: u (n), v (n), t (1), one slack per inequality row, slack for cap.
    let n_ineq = rows.iter().filter(|r| r.2 != 0).count();
    let t_col = 2 * n;
    let first_slack = t_col + 1;
    let cap_slack = first_slack + n_ineq;
    let n_struct = cap_slack + 1;
    let n_rows = rows.len() + 1;

    let mut a = vec![vec![0.0; n_struct]; n_rows];
    let mut b = vec![0.0; n_rows];
    let mut slack = first_slack;
    for (i, (coeffs, rhs, kind)) in rows.iter().enumerate() {
        for j in 0..n {
            a[i][j] = coeffs[j];
            a[i][n + j] = -coeffs[j];
        }
        if *kind != 0 {
            a[i][slack] = -1.0;
            slack += 1;
        }
        if *kind == 2 {
            a[i][t_col] = -1.0;
        }
        b[i] = *rhs;
    }
    let last = n_rows - 1;
    a[last][t_col] = 1.0;
    a[last][cap_slack] = 1.0;
    b[last] = if uses_margin { cap } else { 0.0 };

    let mut tableau = Simplex::new(a, b);
    if !tableau.phase_one() {
        return Ok(if tableau.failed {
            MarginOutcome::Failed
        } else {
            MarginOutcome::Empty
        });
    }
    let mut objective = vec![0.0; n_struct];
    if uses_margin {
        objective[t_col] = -1.0;
    }
    if !tableau.phase_two(&objective) {
        return Ok(MarginOutcome::Failed);
    }
    let z = tableau.solution(n_struct);
    let point: Vec<f64> = (0..n).map(|j| z[j] - z[n + j]).collect();
    let margin = if uses_margin { z[t_col] } else { 0.0 };
    Ok(MarginOutcome::Optimal { margin, point })
}

/// Dense tableau for `min c.z  s.t.  A z = b, z >= 0`.
struct Simplex {
    /// Row-major tableau; each row has `n_cols + 1` entries, last is rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    failed: bool,
    /// Initial tableau, kept for reinversion.
    orig: Vec<Vec<f64>>,
}

impl Simplex {
    fn new(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Self {
        let m = a.len();
        let n_struct = a.first().map(Vec::len).unwrap_or(0);
        let mut nonzeros = vec![0usize; n_struct];
        for row in &a {
            for (j, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    nonzeros[j] += 1;
                }
            }
        }
        // Start from a slack basis where a row owns a unit column of the
        // right sign; other rows get an artificial.
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let own = (0..n_struct)
                .find(|&j| nonzeros[j] == 1 && a[i][j] != 0.0 && b[i] / a[i][j] >= 0.0);
            match own {
                Some(j) => {
                    let p = a[i][j];
                    a[i].iter_mut().for_each(|v| *v /= p);
                    b[i] /= p;
                    a[i][j] = 1.0;
                    basis.push(j);
                }
                None => {
                    if b[i] < 0.0 {
                        b[i] = -b[i];
                        a[i].iter_mut().for_each(|v| *v = -*v);
                    }
                    basis.push(n_struct + i);
                }
            }
        }
        // One artificial per row; columns n_struct .. n_struct + m.
        let n_cols = n_struct + m;
        let mut t = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = std::mem::take(&mut a[i]);
            row.resize(n_cols + 1, 0.0);
            row[n_struct + i] = 1.0;
            row[n_cols] = b[i];
            t.push(row);
        }
        Self {
            orig: t.clone(),
            t,
            basis,
            n_struct,
            n_cols,
            failed: false,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.n_cols + 1;
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f.abs() < 1e-300 {
                continue;
            }
            for j in 0..width {
                row[j] -= f * pivot_row[j];
            }
            row[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Recomputes the tableau as `B^-1 [A | b]` from the initial data to
    /// discard accumulated rounding drift. False if the basis is singular.
    fn reinvert(&mut self) -> bool {
        let m = self.t.len();
        let width = self.n_cols + 1;
        let basis = DMatrix::from_fn(m, m, |i, k| self.orig[i][self.basis[k]]);
        let rhs = DMatrix::from_fn(m, width, |i, j| self.orig[i][j]);
        let Some(sol) = basis.lu().solve(&rhs) else {
            return false;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return false;
        }
        for i in 0..m {
            for j in 0..width {
                self.t[i][j] = sol[(i, j)];
            }
            for (k, &bv) in self.basis.iter().enumerate() {
                self.t[i][bv] = if k == i { 1.0 } else { 0.0 };
            }
            if self.t[i][self.n_cols] < 0.0 && self.t[i][self.n_cols] > -PHASE1_TOL {
                self.t[i][self.n_cols] = 0.0;
            }
        }
        true
    }

    /// Runs simplex iterations on `cost` restricted to `allowed` columns.
    /// Returns false on iteration blow-up.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        let m = self.t.len();
        let max_iter = 50 * (m + allowed) + 1000;
        let mut degenerate_run = 0usize;
        // Columns whose negative reduced cost is rounding noise with no
        // bounding row; cleared after every pivot.
        let mut blocked: Vec<usize> = Vec::new();
        let mut since_reinvert = 0usize;
        for _ in 0..max_iter {
            if since_reinvert >= REINVERT_EVERY {
                if !self.reinvert() {
                    self.failed = true;
                    return false;
                }
                since_reinvert = 0;
            }
            // Reduced costs: c_j - c_B B^-1 A_j.
            let mut entering = None;
            let mut best = -PIVOT_EPS;
            let bland = degenerate_run > 25;
            let mut is_basic = vec![false; self.n_cols];
            self.basis.iter().for_each(|&j| is_basic[j] = true);
            let priced: Vec<(usize, f64)> = (0..m)
                .map(|i| (i, cost[self.basis[i]]))
                .filter(|(_, cb)| *cb != 0.0)
                .collect();
            for j in 0..allowed {
                if is_basic[j] || blocked.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for &(i, cb) in &priced {
                    rc -= cb * self.t[i][j];
                }
                if rc < best {
                    entering = Some(j);
                    best = rc;
                    if bland {
                        break;
                    }
                }
            }
            let Some(c) = entering else { return true };
            // Harris ratio test: bound the step with slightly relaxed
            // ratios, then take the largest pivot among rows within it.
            let rhs = |i: usize| self.t[i][self.n_cols].max(0.0);
            let theta = (0..m)
                .filter(|&i| self.t[i][c] > PIVOT_EPS)
                .map(|i| (rhs(i) + HARRIS_TOL) / self.t[i][c])
                .fold(f64::INFINITY, f64::min);
            let candidates: Vec<usize> = (0..m)
                .filter(|&i| self.t[i][c] > PIVOT_EPS && rhs(i) / self.t[i][c] <= theta)
                .collect();
            let largest = candidates
                .iter()
                .map(|&i| self.t[i][c])
                .fold(0.0f64, f64::max);
            let pick = if bland {
                candidates
                    .iter()
                    .copied()
                    .filter(|&i| self.t[i][c] >= 1e-3 * largest)
                    .min_by_key(|&i| self.basis[i])
            } else {
                candidates
                    .iter()
                    .copied()
                    .max_by(|&a, &b| self.t[a][c].total_cmp(&self.t[b][c]).then(b.cmp(&a)))
            };
            let leave = pick.map(|i| (i, rhs(i) / self.t[i][c]));
            let Some((r, ratio)) = leave else {
                // Unbounded direction; cannot happen with the margin cap
                // unless the reduced cost is noise.
                if best > -NOISE_RC {
                    blocked.push(c);
                    continue;
                }
                // A ray cannot exist; retry on a freshly inverted tableau.
                if since_reinvert > 0 && self.reinvert() {
                    since_reinvert = 0;
                    continue;
                }
                self.failed = true;
                return false;
            };
            blocked.clear();
            since_reinvert += 1;
            if ratio.abs() < 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        self.failed = true;
        false
    }

    fn phase_one(&mut self) -> bool {
        let total = self.n_cols;
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(self.n_struct) {
            *c = 1.0;
        }
        if !self.optimize(&cost, total) {
            return false;
        }
        let infeas: f64 = self
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &bv)| bv >= self.n_struct)
            .map(|(i, _)| self.t[i][self.n_cols])
            .sum();
        if infeas > PHASE1_TOL {
            return false;
        }
        // Drive artificials out of the basis where possible.
        for r in 0..self.t.len() {
            if self.basis[r] >= self.n_struct {
                let col = (0..self.n_struct)
                    .filter(|j| !self.basis.contains(j))
                    .max_by(|a, b| self.t[r][*a].abs().total_cmp(&self.t[r][*b].abs()));
                if let Some(c) = col {
                    if self.t[r][c].abs() > 1e-9 {
                        self.pivot(r, c);
                    }
                }
            }
        }
        // Redundant rows keep a zero-valued artificial; freeze them.
        for r in 0..self.t.len() {
            if self.basis[r] >= self.n_struct {
                self.t[r][self.n_cols] = 0.0;
            }
        }
        true
    }

    fn phase_two(&mut self, objective: &[f64]) -> bool {
        let mut cost = vec![0.0; self.n_cols];
        cost[..self.n_struct].copy_from_slice(objective);
        // Artificials are excluded from entering by restricting to structural columns.
        self.optimize(&cost, self.n_struct)
    }

    fn solution(&self, n: usize) -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (i, &bv) in self.basis.iter().enumerate() {
            if bv < n {
                z[bv] = self.t[i][self.n_cols].max(0.0);
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_is_centered() {
        let sys = LinearSystem::new(1).ge(vec![1.0], 0.0).ge(vec![-1.0], -1.0);
        match linear_feasibility(&sys).unwrap() {
            FeasibilityResult::Feasible(x) => assert!((x[0] - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn opposite_strict_is_infeasible() {
        let sys = LinearSystem::new(1).gt(vec![1.0], 0.0).gt(vec![-1.0], 0.0);
        assert_eq!(
            linear_feasibility(&sys).unwrap(),
            FeasibilityResult::Infeasible
        );
    }

    #[test]
    fn open_segment_witness() {
        let sys = LinearSystem::new(2)
            .eq(vec![1.0, 1.0], 1.0)
            .gt(vec![1.0, 0.0], 0.0)
            .gt(vec![0.0, 1.0], 0.0);
        let r = linear_feasibility(&sys).unwrap();
        let x = r.witness().expect("feasible");
        assert!((x[0] + x[1] - 1.0).abs() < 1e-9);
        assert!(x[0] >= DELTA_STRICT && x[1] >= DELTA_STRICT);
    }

    #[test]
    fn empty_weak_relaxation() {
        let sys = LinearSystem::new(2)
            .ge(vec![1.0, 0.0], 1.0)
            .ge(vec![-1.0, 0.0], 0.0);
        assert_eq!(
            linear_feasibility(&sys).unwrap(),
            FeasibilityResult::Infeasible
        );
    }

    #[test]
    fn thin_slab_is_inconclusive() {
        // 0 < x < 1e-9: nonempty but thinner than the strict margin.
        let sys = LinearSystem::new(1)
            .gt(vec![1.0], 0.0)
            .gt(vec![-1.0], -1e-9);
        assert_eq!(
            linear_feasibility(&sys).unwrap(),
            FeasibilityResult::Inconclusive
        );
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let sys = LinearSystem::new(2).ge(vec![1.0], 0.0);
        assert!(matches!(linear_feasibility(&sys), Err(Error::Dimension(_))));
    }

    #[test]
    fn redundant_equalities() {
        let sys = LinearSystem::new(2)
            .eq(vec![1.0, 1.0], 2.0)
            .eq(vec![2.0, 2.0], 4.0)
            .ge(vec![1.0, -1.0], 0.0);
        let r = linear_feasibility(&sys).unwrap();
        let x = r.witness().unwrap();
        assert!(sys.max_violation(x) < 1e-9);
    }
}
