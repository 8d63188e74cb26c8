//! Directed spanning sets.
//!
//! `W` has a DSS with respect to `x` when the rows with `<w_j, x> >= 0` span
//! `R^n`. A ReLU layer `x -> ReLU(Wx)` is injective exactly when that holds
//! for every `x`. Checking every `x` reduces to one interior point per open
//! wedge of the arrangement `{<w_j, x> = 0}`: a boundary point's active set
//! contains the active set of an adjacent open wedge.

use serde::{Deserialize, Serialize};

use crate::arrangement::{
    central_cell_bound, enumerate_cells, AffineFunctional, OpenRegion, DEFAULT_CELL_BUDGET,
};
use crate::certificate::{Collision, InjectivityCertificate, Method, Verdict, WedgeEvidence};
use crate::error::{Error, Result};
use crate::numeric::linalg::{nullspace_vector_with_tol, rank, rank_of_rows};
use crate::numeric::matrix::{axpy, distance, dot, norm, relu, IndexSet, Matrix};
use crate::numeric::{Prng, DEFAULT_RANK_TOL};

/// Output-space tolerance for verifying collisions.
pub const TAU_COLLIDE: f64 = 1e-9;

/// Rows closer than this (as unit vectors, up to sign) share a hyperplane.
const SAME_HYPERPLANE_TOL: f64 = 1e-9;

/// Trials used by the random screen when exact enumeration is out of budget.
const FALLBACK_SCREEN_TRIALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DssOptions {
    /// Maximum number of wedges to enumerate.
    pub budget: usize,
    /// Relative rank tolerance.
    pub rank_tol: f64,
    /// Keep the per-wedge rank table in the certificate.
    pub record_evidence: bool,
}

impl Default for DssOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_CELL_BUDGET,
            rank_tol: DEFAULT_RANK_TOL,
            record_evidence: false,
        }
    }
}

/// One open wedge of the central arrangement of `W`.
///
/// `sign_pattern[j]` is the sign of `<w_j, x>` inside the wedge, `0` for zero
/// rows (which count as active).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeCell {
    pub sign_pattern: Vec<i8>,
    pub witness: Vec<f64>,
    pub active_set: IndexSet,
}

/// Rows of `W` grouped into distinct hyperplanes through the origin.
#[derive(Debug, Clone)]
pub(crate) struct HyperplaneGroups {
    /// Unit normal of each distinct hyperplane.
    pub normals: Vec<Vec<f64>>,
    /// For each row: `(hyperplane index, orientation)`, or `None` for zero rows.
    pub row_map: Vec<Option<(usize, i8)>>,
}

pub(crate) fn group_rows(w: &Matrix) -> HyperplaneGroups {
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut row_map = Vec::with_capacity(w.rows());
    for r in w.row_iter() {
        let s = norm(r);
        if s == 0.0 {
            row_map.push(None);
            continue;
        }
        let u: Vec<f64> = r.iter().map(|v| v / s).collect();
        let mut found = None;
        for (k, n) in normals.iter().enumerate() {
            let plus = distance(&u, n);
            let minus = u
                .iter()
                .zip(n)
                .map(|(a, b)| (a + b) * (a + b))
                .sum::<f64>()
                .sqrt();
            if plus <= SAME_HYPERPLANE_TOL {
                found = Some((k, 1));
                break;
            }
            if minus <= SAME_HYPERPLANE_TOL {
                found = Some((k, -1));
                break;
            }
        }
        match found {
            Some(f) => row_map.push(Some(f)),
            None => {
                normals.push(u);
                row_map.push(Some((normals.len() - 1, 1)));
            }
        }
    }
    HyperplaneGroups { normals, row_map }
}

fn check_dim(w: &Matrix, x: &[f64]) -> Result<()> {
    if x.len() != w.cols() {
        return Err(Error::Dimension(format!(
            "point has dimension {}, matrix has {} columns",
            x.len(),
            w.cols()
        )));
    }
    Ok(())
}

/// `S(x, W) = { j : <w_j, x> >= 0 }`, inclusive of zero products.
pub fn active_rows(w: &Matrix, x: &[f64]) -> Result<IndexSet> {
    check_dim(w, x)?;
    Ok(IndexSet::new(
        w.row_iter()
            .enumerate()
            .filter(|(_, r)| dot(r, x) >= 0.0)
            .map(|(j, _)| j)
            .collect(),
    ))
}

/// Whether the active rows at `x` span `R^n`.
pub fn has_dss_at(w: &Matrix, x: &[f64]) -> Result<bool> {
    has_dss_at_with_tol(w, x, DEFAULT_RANK_TOL)
}

pub fn has_dss_at_with_tol(w: &Matrix, x: &[f64], tol: f64) -> Result<bool> {
    let s = active_rows(w, x)?;
    if s.len() < w.cols() {
        return Ok(false);
    }
    Ok(rank_of_rows(w, s.as_slice(), tol) == w.cols())
}

fn wedges_in(w: &Matrix, region: &OpenRegion, budget: usize) -> Result<Vec<WedgeCell>> {
    let groups = group_rows(w);
    let bound = central_cell_bound(groups.normals.len(), w.cols());
    if bound > budget as u128 {
        return Err(Error::BudgetExceeded { cap: budget });
    }
    let hyperplanes: Vec<AffineFunctional> = groups
        .normals
        .iter()
        .map(|n| AffineFunctional::linear(n.clone()))
        .collect();
    let cells = enumerate_cells(region, &hyperplanes, budget)?;
    Ok(cells
        .into_iter()
        .map(|c| {
            let sign_pattern: Vec<i8> = groups
                .row_map
                .iter()
                .map(|g| match g {
                    None => 0,
                    Some((k, o)) => c.signs[*k] * o,
                })
                .collect();
            let active_set = IndexSet::new(
                sign_pattern
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s >= 0)
                    .map(|(j, _)| j)
                    .collect(),
            );
            WedgeCell {
                sign_pattern,
                witness: c.witness,
                active_set,
            }
        })
        .collect())
}

/// All open wedges of the arrangement `{<w_j, x> = 0}`.
///
/// Zero rows spawn no hyperplane; parallel and antiparallel rows share one.
/// Fails with `BudgetExceeded` when the general-position cell bound for the
/// distinct hyperplanes exceeds `budget`.
pub fn enumerate_wedges(w: &Matrix) -> Result<Vec<WedgeCell>> {
    enumerate_wedges_with_budget(w, DEFAULT_CELL_BUDGET)
}

pub fn enumerate_wedges_with_budget(w: &Matrix, budget: usize) -> Result<Vec<WedgeCell>> {
    wedges_in(w, &OpenRegion::whole_space(w.cols()), budget)
}

/// Collision from a point `x` where the active rows fail to span, following
/// the kernel-direction argument: move along `x_perp ∈ ker W|_S` by half the
/// distance to the nearest inactive hyperplane.
///
/// `keep_nonnegative` additionally keeps both points in the closed orthant.
fn collision_from_witness(
    w: &Matrix,
    x: &[f64],
    tol: f64,
    keep_nonnegative: bool,
) -> Option<Collision> {
    let s = active_rows(w, x).ok()?;
    let x_perp = nullspace_vector_with_tol(&w.restrict(&s), tol)?;
    let mut bound = f64::INFINITY;
    for j in s.complement(w.rows()).as_slice() {
        let wj = w.row(*j);
        let denom = dot(&x_perp, wj).abs();
        if denom > 1e-14 * norm(wj) {
            bound = bound.min(-dot(x, wj) / denom);
        }
    }
    if keep_nonnegative {
        for (xi, pi) in x.iter().zip(&x_perp) {
            if *pi < -1e-14 {
                bound = bound.min(xi / -pi);
            }
        }
    }
    let alpha = if bound.is_finite() { 0.5 * bound } else { 1.0 };
    if alpha.is_nan() || alpha <= 0.0 {
        return None;
    }
    let x2 = axpy(alpha, &x_perp, x);
    let mut c = verify_collision(w, x, &x2);
    // Homogeneous map: rescale tiny steps up to unit separation.
    if c.input_distance < 1e-6 {
        let f = 1.0 / alpha;
        let y1: Vec<f64> = x.iter().map(|v| v * f).collect();
        let y2 = axpy(1.0, &x_perp, &y1);
        c = verify_collision(w, &y1, &y2);
    }
    Some(c)
}

fn verify_collision(w: &Matrix, x1: &[f64], x2: &[f64]) -> Collision {
    let y1 = relu(&w.mul_vec(x1).expect("dims"));
    let y2 = relu(&w.mul_vec(x2).expect("dims"));
    Collision {
        x1: x1.to_vec(),
        x2: x2.to_vec(),
        input_distance: distance(x1, x2),
        output_distance: distance(&y1, &y2),
    }
}

fn collision_is_valid(c: &Collision) -> bool {
    c.output_distance <= TAU_COLLIDE && c.input_distance >= 10.0 * TAU_COLLIDE
}

fn unit(x: &[f64]) -> Vec<f64> {
    let s = norm(x);
    x.iter().map(|v| v / s).collect()
}

/// Rows of `W` that have an antiparallel partner. If those rows span `R^n`
/// the layer is injective: for any `x`, one row of each pair is active.
pub fn antipodal_pairs_span(w: &Matrix, tol: f64) -> bool {
    let groups = group_rows(w);
    let mut pos = vec![false; groups.normals.len()];
    let mut neg = vec![false; groups.normals.len()];
    for (k, o) in groups.row_map.iter().flatten() {
        if *o > 0 {
            pos[*k] = true;
        } else {
            neg[*k] = true;
        }
    }
    let paired: Vec<usize> = (0..groups.normals.len())
        .filter(|k| pos[*k] && neg[*k])
        .collect();
    if paired.len() < w.cols() {
        return false;
    }
    let rows: Vec<Vec<f64>> = paired.iter().map(|k| groups.normals[*k].clone()).collect();
    Matrix::from_rows(&rows)
        .map(|m| rank(&m, tol) == w.cols())
        .unwrap_or(false)
}

/// First sampled unit direction at which `W` has no DSS. `None` is not a
/// certificate of injectivity.
pub fn falsify_random(w: &Matrix, trials: usize, prng: &mut Prng) -> Option<Vec<f64>> {
    for _ in 0..trials {
        let x = prng.unit_vector(w.cols());
        if !has_dss_at(w, &x).unwrap_or(true) {
            return Some(x);
        }
    }
    None
}

fn certify_over(
    w: &Matrix,
    region: OpenRegion,
    orthant: bool,
    opts: &DssOptions,
) -> InjectivityCertificate {
    let n = w.cols();
    let tol = opts.rank_tol;

    // Rank-deficient W fails everywhere: 0 and any kernel vector collide.
    if rank(w, tol) < n {
        if let Some(v) = nullspace_vector_with_tol(w, tol) {
            let v = if orthant {
                // Keep the pair inside the orthant: shift into the interior.
                let shift: Vec<f64> = v.iter().map(|x| x.abs() + 1.0).collect();
                let c = verify_collision(w, &shift, &axpy(1.0, &v, &shift));
                if collision_is_valid(&c) {
                    let mut cert =
                        InjectivityCertificate::new(Verdict::NonInjective, Method::RankDeficiency);
                    cert.failing_witness = Some(shift);
                    cert.collision = Some(c);
                    return cert;
                }
                None
            } else {
                Some(v)
            };
            if let Some(v) = v {
                let zero = vec![0.0; n];
                let c = verify_collision(w, &zero, &v);
                if collision_is_valid(&c) {
                    let mut cert =
                        InjectivityCertificate::new(Verdict::NonInjective, Method::RankDeficiency);
                    cert.failing_witness = Some(v);
                    cert.collision = Some(c);
                    return cert;
                }
            }
        }
    }

    let wedges = match wedges_in(w, &region, opts.budget) {
        Ok(ws) => ws,
        Err(Error::BudgetExceeded { cap }) => return budget_fallback(w, cap, orthant, opts),
        Err(e) => {
            return InjectivityCertificate::inconclusive(Method::WedgeEnumeration, e.to_string())
        }
    };

    let mut cert = InjectivityCertificate::new(Verdict::Injective, Method::WedgeEnumeration);
    cert.wedge_count = wedges.len();
    let mut worst: Option<(usize, usize, usize)> = None; // (rank, active, index)
    for (i, wedge) in wedges.iter().enumerate() {
        let r = rank_of_rows(w, wedge.active_set.as_slice(), tol);
        if opts.record_evidence {
            cert.evidence.push(WedgeEvidence {
                sign_pattern: wedge.sign_pattern.clone(),
                active_count: wedge.active_set.len(),
                rank: r,
            });
        }
        if r < n {
            let key = (r, wedge.active_set.len(), i);
            if worst.is_none_or(|w0| (key.0, key.1) < (w0.0, w0.1)) {
                worst = Some(key);
            }
        }
    }
    if let Some((_, _, idx)) = worst {
        let x = unit(&wedges[idx].witness);
        cert.verdict = Verdict::NonInjective;
        cert.failing_witness = Some(x.clone());
        match collision_from_witness(w, &x, tol, orthant) {
            Some(c) if collision_is_valid(&c) => cert.collision = Some(c),
            Some(c) => {
                cert.verdict = Verdict::Inconclusive;
                cert.note = Some(format!(
                    "failing wedge found but collision check gave output gap {:.3e}",
                    c.output_distance
                ));
                cert.collision = Some(c);
            }
            None => {
                cert.verdict = Verdict::Inconclusive;
                cert.note = Some("failing wedge found but no kernel direction".into());
            }
        }
    }
    cert
}

fn budget_fallback(
    w: &Matrix,
    cap: usize,
    orthant: bool,
    opts: &DssOptions,
) -> InjectivityCertificate {
    if antipodal_pairs_span(w, opts.rank_tol) {
        return InjectivityCertificate::new(Verdict::Injective, Method::AntipodalPairs).with_note(
            format!("wedge budget {cap} exceeded; antiparallel row pairs span the input space"),
        );
    }
    let mut prng = Prng::new(0x05EE_DD55, w.rows() as u64);
    for _ in 0..FALLBACK_SCREEN_TRIALS {
        let mut x = prng.unit_vector(w.cols());
        if orthant {
            x.iter_mut().for_each(|v| *v = v.abs());
        }
        if has_dss_at_with_tol(w, &x, opts.rank_tol).unwrap_or(true) {
            continue;
        }
        if let Some(c) = collision_from_witness(w, &x, opts.rank_tol, orthant) {
            if collision_is_valid(&c) {
                let mut cert =
                    InjectivityCertificate::new(Verdict::NonInjective, Method::RandomFalsification);
                cert.failing_witness = Some(x);
                cert.collision = Some(c);
                return cert;
            }
        }
    }
    InjectivityCertificate::inconclusive(
        Method::BudgetExceeded,
        format!("wedge budget {cap} exceeded and no shortcut applied"),
    )
}

/// Decide injectivity of `x -> ReLU(Wx)` on all of `R^n`.
pub fn certify_dss_all(w: &Matrix) -> InjectivityCertificate {
    certify_dss_all_with(w, &DssOptions::default())
}

pub fn certify_dss_all_with(w: &Matrix, opts: &DssOptions) -> InjectivityCertificate {
    certify_over(w, OpenRegion::whole_space(w.cols()), false, opts)
}

/// Decide injectivity of `x -> ReLU(Wx)` on the closed nonnegative orthant.
pub fn certify_dss_orthant(w: &Matrix) -> InjectivityCertificate {
    certify_dss_orthant_with(w, &DssOptions::default())
}

pub fn certify_dss_orthant_with(w: &Matrix, opts: &DssOptions) -> InjectivityCertificate {
    certify_over(w, OpenRegion::positive_orthant(w.cols()), true, opts)
}
