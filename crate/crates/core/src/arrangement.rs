//! Incremental enumeration of the open cells of a hyperplane arrangement.
//!
//! Cells are refined one hyperplane at a time. A cell is kept as its list of
//! strict constraints plus an interior witness; inserting a hyperplane splits
//! each cell into the nonempty sides, each side certified by a margin LP.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::lp::{maximize_margin, LinearSystem, MarginOutcome};
use crate::numeric::matrix::{dot, norm};
use crate::numeric::DELTA_STRICT;

/// Default cap on the number of cells.
pub const DEFAULT_CELL_BUDGET: usize = 1_000_000;

const EMPTY_MARGIN: f64 = 1e-10;

/// `normal . x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunctional {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl AffineFunctional {
    pub fn linear(normal: Vec<f64>) -> Self {
        Self {
            normal,
            offset: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    /// Signed distance of `x` from the zero set.
    fn distance(&self, x: &[f64]) -> f64 {
        self.eval(x) / norm(&self.normal)
    }
}

/// One open cell: the sign of every inserted hyperplane, and a point that
/// realizes them with margin at least [`DELTA_STRICT`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub signs: Vec<i8>,
    pub witness: Vec<f64>,
}

/// Open polyhedron `{x : f_k(x) > 0}` used as the ambient region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OpenRegion {
    pub dim: usize,
    pub constraints: Vec<AffineFunctional>,
}

impl OpenRegion {
    pub fn whole_space(dim: usize) -> Self {
        Self {
            dim,
            constraints: Vec::new(),
        }
    }

    pub fn positive_orthant(dim: usize) -> Self {
        let constraints = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                AffineFunctional::linear(e)
            })
            .collect();
        Self { dim, constraints }
    }
}

/// Upper bound on the number of cells cut by `m` distinct central
/// hyperplanes in `R^n`; attained in general position.
pub fn central_cell_bound(m: usize, n: usize) -> u128 {
    if m == 0 {
        return 1;
    }
    let mut sum: u128 = 0;
    let mut binom: u128 = 1;
    for i in 0..n.min(m) {
        sum = sum.saturating_add(binom);
        binom = binom.saturating_mul((m - 1 - i) as u128) / (i as u128 + 1);
    }
    sum.saturating_mul(2)
}

/// Bound for `m` affine hyperplanes in `R^n`: `sum_{i<=n} C(m, i)`.
pub fn affine_cell_bound(m: usize, n: usize) -> u128 {
    let mut sum: u128 = 0;
    let mut binom: u128 = 1;
    for i in 0..=n.min(m) {
        sum = sum.saturating_add(binom);
        binom = binom.saturating_mul((m - i) as u128) / (i as u128 + 1);
    }
    sum
}

fn cell_system(
    region: &OpenRegion,
    hyperplanes: &[AffineFunctional],
    signs: &[i8],
) -> LinearSystem {
    let mut sys = LinearSystem::new(region.dim);
    for c in &region.constraints {
        sys = sys.gt(c.normal.clone(), -c.offset);
    }
    for (h, &s) in hyperplanes.iter().zip(signs) {
        let sf = f64::from(s);
        sys = sys.gt(h.normal.iter().map(|v| sf * v).collect(), -sf * h.offset);
    }
    sys
}

/// Side test: is `{cell} ∩ {sign * h > 0}` nonempty? Returns its witness.
fn probe_side(
    region: &OpenRegion,
    hyperplanes: &[AffineFunctional],
    signs: &[i8],
    h: &AffineFunctional,
    sign: i8,
) -> Result<Option<Vec<f64>>> {
    let mut sys = cell_system(region, hyperplanes, signs);
    let sf = f64::from(sign);
    sys = sys.gt(h.normal.iter().map(|v| sf * v).collect(), -sf * h.offset);
    match maximize_margin(&sys, 1.0, false)? {
        MarginOutcome::Empty => Ok(None),
        MarginOutcome::Failed => Err(Error::Numerical("simplex failed during cell split".into())),
        MarginOutcome::Optimal { margin, point } => {
            if margin >= DELTA_STRICT {
                Ok(Some(point))
            } else if margin < EMPTY_MARGIN {
                Ok(None)
            } else {
                Err(Error::Numerical(format!(
                    "cell margin {margin:.3e} below the strict threshold"
                )))
            }
        }
    }
}

/// Enumerate all open cells of `hyperplanes` inside `region`.
///
/// Hyperplanes must have nonzero normals. Returns `BudgetExceeded` as soon as
/// the running cell count passes `cap`.
pub fn enumerate_cells(
    region: &OpenRegion,
    hyperplanes: &[AffineFunctional],
    cap: usize,
) -> Result<Vec<Cell>> {
    let dim = region.dim;
    for h in hyperplanes {
        if h.normal.len() != dim {
            return Err(Error::Dimension("hyperplane dimension".into()));
        }
        if norm(&h.normal) == 0.0 {
            return Err(Error::InvalidArgument("hyperplane with zero normal".into()));
        }
    }
    let root = match maximize_margin(&cell_system(region, &[], &[]), 1.0, false)? {
        MarginOutcome::Optimal { margin, point }
            if region.constraints.is_empty() || margin >= DELTA_STRICT =>
        {
            if region.constraints.is_empty() {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                e
            } else {
                point
            }
        }
        MarginOutcome::Optimal { margin, .. } if margin < EMPTY_MARGIN => return Ok(Vec::new()),
        MarginOutcome::Empty => return Ok(Vec::new()),
        _ => return Err(Error::Numerical("ambient region is too thin".into())),
    };
    let mut cells = vec![Cell {
        signs: Vec::new(),
        witness: root,
    }];

    for (k, h) in hyperplanes.iter().enumerate() {
        let previous = &hyperplanes[..k];
        let split: Vec<Result<Vec<Cell>>> = cells
            .par_iter()
            .map(|cell| {
                let d = h.distance(&cell.witness);
                let mut out = Vec::with_capacity(2);
                for sign in [1i8, -1] {
                    let side = if f64::from(sign) * d >= DELTA_STRICT {
                        Some(cell.witness.clone())
                    } else {
                        probe_side(region, previous, &cell.signs, h, sign)?
                    };
                    if let Some(w) = side {
                        let mut signs = cell.signs.clone();
                        signs.push(sign);
                        out.push(Cell { signs, witness: w });
                    }
                }
                Ok(out)
            })
            .collect();
        let mut next = Vec::with_capacity(cells.len() * 2);
        for part in split {
            next.extend(part?);
            if next.len() > cap {
                return Err(Error::BudgetExceeded { cap });
            }
        }
        cells = next;
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert_eq!(central_cell_bound(3, 2), 6);
        assert_eq!(central_cell_bound(5, 3), 22);
        assert_eq!(central_cell_bound(7, 1), 2);
        assert_eq!(central_cell_bound(2, 3), 4);
        assert_eq!(affine_cell_bound(3, 2), 7);
    }

    #[test]
    fn three_lines_through_origin() {
        let hs = vec![
            AffineFunctional::linear(vec![1.0, 0.0]),
            AffineFunctional::linear(vec![0.0, 1.0]),
            AffineFunctional::linear(vec![1.0, 1.0]),
        ];
        let cells = enumerate_cells(&OpenRegion::whole_space(2), &hs, 100).unwrap();
        assert_eq!(cells.len(), 6);
        for c in &cells {
            for (h, s) in hs.iter().zip(&c.signs) {
                assert!(f64::from(*s) * h.distance(&c.witness) >= DELTA_STRICT);
            }
        }
    }

    #[test]
    fn affine_lines_in_general_position() {
        let hs = vec![
            AffineFunctional {
                normal: vec![1.0, 0.0],
                offset: 0.0,
            },
            AffineFunctional {
                normal: vec![0.0, 1.0],
                offset: 0.0,
            },
            AffineFunctional {
                normal: vec![1.0, 1.0],
                offset: -1.0,
            },
        ];
        let cells = enumerate_cells(&OpenRegion::whole_space(2), &hs, 100).unwrap();
        assert_eq!(cells.len(), 7);
    }

    #[test]
    fn budget_is_enforced() {
        let hs: Vec<_> = (0..6)
            .map(|i| {
                let a = i as f64 * 0.5;
                AffineFunctional::linear(vec![a.cos(), a.sin()])
            })
            .collect();
        assert!(matches!(
            enumerate_cells(&OpenRegion::whole_space(2), &hs, 5),
            Err(Error::BudgetExceeded { cap: 5 })
        ));
    }

    #[test]
    fn orthant_restriction() {
        let hs = vec![AffineFunctional::linear(vec![1.0, -1.0])];
        let cells = enumerate_cells(&OpenRegion::positive_orthant(2), &hs, 100).unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert!(c.witness.iter().all(|v| *v > 0.0));
        }
    }
}
