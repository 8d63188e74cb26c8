//! Small deep ReLU networks: evaluation, region enumeration and exact
//! injectivity.
//!
//! A network is piecewise affine. Each activation pattern cuts out an open
//! polyhedron on which `N(x) = A x + c`. The network fails to be injective
//! exactly when two points of the closures of (possibly equal) regions share
//! an output, which is a family of linear feasibility problems.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrangement::{enumerate_cells, AffineFunctional, OpenRegion, DEFAULT_CELL_BUDGET};
use crate::certificate::{Collision, InjectivityCertificate, Method, Verdict};
use crate::dense::{check_dense_with, construct_expanded, Activation, DenseLayer};
use crate::dss::{DssOptions, TAU_COLLIDE};
use crate::error::{Error, Result};
use crate::numeric::linalg::rank;
use crate::numeric::lp::{linear_feasibility, FeasibilityResult, LinearSystem};
use crate::numeric::matrix::{distance, dot, norm, Matrix};
use crate::numeric::prng::{sample_gaussian_matrix, sample_orthogonal};
use crate::numeric::{Prng, DEFAULT_RANK_TOL};

/// Minimum sup-norm separation of the two inputs in a region-pair problem.
pub const DELTA_SEP: f64 = 1e-4;

/// Absolute tolerance for affine-data consistency checks.
pub const TAU_NUM: f64 = 1e-8;

const DESCENT_STEPS: usize = 200;
const DESCENT_STARTS: usize = 16;
const SAME_HYPERPLANE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "NetworkRepr")]
pub struct ReluNetwork {
    layers: Vec<DenseLayer>,
    final_linear: Option<Matrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NetworkRepr {
    Layers(Vec<DenseLayer>),
    Full {
        layers: Vec<DenseLayer>,
        #[serde(default)]
        final_linear: Option<Matrix>,
    },
}

impl From<ReluNetwork> for NetworkRepr {
    fn from(net: ReluNetwork) -> Self {
        match net.final_linear {
            None => NetworkRepr::Layers(net.layers),
            Some(f) => NetworkRepr::Full {
                layers: net.layers,
                final_linear: Some(f),
            },
        }
    }
}

impl<'de> Deserialize<'de> for ReluNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (layers, final_linear) = match NetworkRepr::deserialize(d)? {
            NetworkRepr::Layers(l) => (l, None),
            NetworkRepr::Full {
                layers,
                final_linear,
            } => (layers, final_linear),
        };
        ReluNetwork::new(layers, final_linear).map_err(serde::de::Error::custom)
    }
}

impl ReluNetwork {
    pub fn new(layers: Vec<DenseLayer>, final_linear: Option<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    k + 1,
                    pair[1].input_dim(),
                    k,
                    pair[0].output_dim()
                )));
            }
        }
        if let Some(f) = &final_linear {
            let last = layers.last().expect("nonempty").output_dim();
            if f.cols() != last {
                return Err(Error::Dimension(format!(
                    "final map expects {} inputs but the last layer produces {last}",
                    f.cols()
                )));
            }
        }
        Ok(Self {
            layers,
            final_linear,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn final_linear(&self) -> Option<&Matrix> {
        self.final_linear.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        match &self.final_linear {
            Some(f) => f.rows(),
            None => self.layers.last().expect("nonempty").output_dim(),
        }
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has dimension {}, network expects {}",
                z.len(),
                self.input_dim()
            )));
        }
        let mut h = z.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        if let Some(f) = &self.final_linear {
            h = f.mul_vec(&h)?;
        }
        Ok(h)
    }

    fn collision(&self, x1: &[f64], x2: &[f64]) -> Collision {
        let y1 = self.forward(x1).expect("dims");
        let y2 = self.forward(x2).expect("dims");
        Collision {
            x1: x1.to_vec(),
            x2: x2.to_vec(),
            input_distance: distance(x1, x2),
            output_distance: distance(&y1, &y2),
        }
    }
}

/// Sufficient check: every layer injective and the final map of full column
/// rank. A failure here says nothing about the composition.
pub fn certify_layerwise(net: &ReluNetwork) -> InjectivityCertificate {
    certify_layerwise_with(net, &DssOptions::default())
}

pub fn certify_layerwise_with(net: &ReluNetwork, opts: &DssOptions) -> InjectivityCertificate {
    let mut wedges = 0;
    for (k, layer) in net.layers.iter().enumerate() {
        let cert = check_dense_with(layer, opts);
        wedges += cert.wedge_count;
        if cert.verdict != Verdict::Injective {
            let mut out = InjectivityCertificate::inconclusive(
                Method::Layerwise,
                format!(
                    "layer {k} is {:?}; end-to-end injectivity undecided",
                    cert.verdict
                ),
            );
            out.wedge_count = wedges;
            return out;
        }
    }
    if let Some(f) = &net.final_linear {
        if rank(f, opts.rank_tol) < f.cols() {
            return InjectivityCertificate::inconclusive(
                Method::Layerwise,
                "final linear map is rank deficient; end-to-end injectivity undecided",
            );
        }
    }
    let mut cert = InjectivityCertificate::new(Verdict::Injective, Method::Layerwise);
    cert.wedge_count = wedges;
    cert
}

/// One linear piece of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRegion {
    /// Per layer, the sign of each pre-activation (`0` when identically zero).
    /// Layers with identity activation record an empty pattern.
    pub activation_pattern: Vec<Vec<i8>>,
    pub a: Matrix,
    pub c: Vec<f64>,
    pub witness: Vec<f64>,
    /// Functionals that are positive on the open region.
    #[serde(skip)]
    pub constraints: Vec<AffineFunctional>,
}

impl AffineRegion {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a.mul_vec(x).expect("dims");
        for (v, c) in y.iter_mut().zip(&self.c) {
            *v += c;
        }
        y
    }
}

struct Piece {
    pattern: Vec<Vec<i8>>,
    a: Matrix,
    c: Vec<f64>,
    witness: Vec<f64>,
    constraints: Vec<AffineFunctional>,
}

fn affine_after(w: &Matrix, b: &[f64], a: &Matrix, c: &[f64]) -> (Matrix, Vec<f64>) {
    let wa = w.matmul(a).expect("dims");
    let mut wc = w.mul_vec(c).expect("dims");
    for (v, bi) in wc.iter_mut().zip(b) {
        *v += bi;
    }
    (wa, wc)
}

/// Per neuron: `Ok((hyperplane, orientation))`, or `Err(sign)` when the
/// functional is constant.
type NeuronPlane = std::result::Result<(usize, i8), i8>;

/// Groups pre-activation functionals into distinct hyperplanes.
fn group_functionals(a: &Matrix, c: &[f64]) -> (Vec<AffineFunctional>, Vec<NeuronPlane>) {
    let scale = 1.0 + a.max_abs();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut map = Vec::with_capacity(a.rows());
    for (row, off) in a.row_iter().zip(c) {
        let s = norm(row);
        if s <= 1e-12 * scale {
            let sign = if *off > 0.0 {
                1
            } else if *off < 0.0 {
                -1
            } else {
                0
            };
            map.push(Err(sign));
            continue;
        }
        let u: Vec<f64> = row.iter().map(|v| v / s).collect();
        let o = off / s;
        let mut found = None;
        for (k, (pu, po)) in planes.iter().enumerate() {
            let dp = distance(&u, pu).max((o - po).abs());
            let dm = u
                .iter()
                .zip(pu)
                .map(|(x, y)| (x + y) * (x + y))
                .sum::<f64>()
                .sqrt()
                .max((o + po).abs());
            if dp <= SAME_HYPERPLANE_TOL {
                found = Some((k, 1));
                break;
            }
            if dm <= SAME_HYPERPLANE_TOL {
                found = Some((k, -1));
                break;
            }
        }
        match found {
            Some(f) => map.push(Ok(f)),
            None => {
                planes.push((u, o));
                map.push(Ok((planes.len() - 1, 1)));
            }
        }
    }
    let hyperplanes = planes
        .into_iter()
        .map(|(normal, offset)| AffineFunctional { normal, offset })
        .collect();
    (hyperplanes, map)
}

fn refine(piece: &Piece, layer: &DenseLayer, budget: usize) -> Result<Vec<Piece>> {
    let (pa, pc) = affine_after(&layer.weight, &layer.bias, &piece.a, &piece.c);
    if layer.activation == Activation::Identity {
        let mut pattern = piece.pattern.clone();
        pattern.push(Vec::new());
        return Ok(vec![Piece {
            pattern,
            a: pa,
            c: pc,
            witness: piece.witness.clone(),
            constraints: piece.constraints.clone(),
        }]);
    }
    let (planes, map) = group_functionals(&pa, &pc);
    let region = OpenRegion {
        dim: pa.cols(),
        constraints: piece.constraints.clone(),
    };
    let cells = enumerate_cells(&region, &planes, budget)?;
    let slope = match layer.activation {
        Activation::LeakyRelu(a) => a,
        _ => 0.0,
    };
    Ok(cells
        .into_iter()
        .map(|cell| {
            let signs: Vec<i8> = map
                .iter()
                .map(|m| match m {
                    Err(s) => *s,
                    Ok((k, o)) => cell.signs[*k] * o,
                })
                .collect();
            let mut a = pa.clone();
            let mut c = pc.clone();
            for (i, s) in signs.iter().enumerate() {
                if *s < 0 {
                    for j in 0..a.cols() {
                        a.set(i, j, slope * a.get(i, j));
                    }
                    c[i] *= slope;
                }
            }
            let mut constraints = piece.constraints.clone();
            for (h, s) in planes.iter().zip(&cell.signs) {
                let sf = f64::from(*s);
                constraints.push(AffineFunctional {
                    normal: h.normal.iter().map(|v| sf * v).collect(),
                    offset: sf * h.offset,
                });
            }
            let mut pattern = piece.pattern.clone();
            pattern.push(signs);
            Piece {
                pattern,
                a,
                c,
                witness: cell.witness,
                constraints,
            }
        })
        .collect())
}

/// All activation regions of `net`, refined layer by layer.
pub fn enumerate_regions(net: &ReluNetwork, budget: usize) -> Result<Vec<AffineRegion>> {
    let n = net.input_dim();
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let mut pieces = vec![Piece {
        pattern: Vec::new(),
        a: Matrix::identity(n),
        c: vec![0.0; n],
        witness: e1,
        constraints: Vec::new(),
    }];
    for layer in &net.layers {
        let parts: Vec<Result<Vec<Piece>>> = pieces
            .par_iter()
            .map(|p| refine(p, layer, budget))
            .collect();
        let mut next = Vec::new();
        for part in parts {
            next.extend(part?);
            if next.len() > budget {
                return Err(Error::BudgetExceeded { cap: budget });
            }
        }
        pieces = next;
    }
    Ok(pieces
        .into_iter()
        .map(|p| {
            let (a, c) = match &net.final_linear {
                Some(f) => affine_after(f, &vec![0.0; f.rows()], &p.a, &p.c),
                None => (p.a, p.c),
            };
            AffineRegion {
                activation_pattern: p.pattern,
                a,
                c,
                witness: p.witness,
                constraints: p.constraints,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Maximum number of regions.
    pub budget: usize,
    pub rank_tol: f64,
    pub delta_sep: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_CELL_BUDGET,
            rank_tol: DEFAULT_RANK_TOL,
            delta_sep: DELTA_SEP,
        }
    }
}

enum PairOutcome {
    Separate,
    Collide(Collision),
    Unsure(String),
}

/// Is there `x` in closure(ra), `y` in closure(rb) with equal outputs and
/// `(x - y)_i >= delta` or `<= -delta` for some `i`?
fn check_pair(net: &ReluNetwork, ra: &AffineRegion, rb: &AffineRegion, delta: f64) -> PairOutcome {
    let n = ra.a.cols();
    let mut base = LinearSystem::new(2 * n);
    for f in &ra.constraints {
        let mut coeffs = f.normal.clone();
        coeffs.extend(std::iter::repeat_n(0.0, n));
        base = base.ge(coeffs, -f.offset);
    }
    for f in &rb.constraints {
        let mut coeffs = vec![0.0; n];
        coeffs.extend_from_slice(&f.normal);
        base = base.ge(coeffs, -f.offset);
    }
    for i in 0..ra.a.rows() {
        let mut coeffs = ra.a.row(i).to_vec();
        coeffs.extend(rb.a.row(i).iter().map(|v| -v));
        base = base.eq(coeffs, rb.c[i] - ra.c[i]);
    }
    let mut unsure = None;
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut coeffs = vec![0.0; 2 * n];
            coeffs[i] = s;
            coeffs[n + i] = -s;
            let sys = base.clone().ge(coeffs, delta);
            match linear_feasibility(&sys) {
                Ok(FeasibilityResult::Infeasible) => {}
                Ok(FeasibilityResult::Feasible(p)) => {
                    let c = net.collision(&p[..n], &p[n..]);
                    if c.output_distance <= TAU_COLLIDE {
                        return PairOutcome::Collide(c);
                    }
                    unsure = Some(format!(
                        "region-pair witness failed forward check (output gap {:.3e})",
                        c.output_distance
                    ));
                }
                Ok(FeasibilityResult::Inconclusive) => {
                    unsure = Some("region-pair feasibility inconclusive".into());
                }
                Err(e) => unsure = Some(e.to_string()),
            }
        }
    }
    match unsure {
        Some(s) => PairOutcome::Unsure(s),
        None => PairOutcome::Separate,
    }
}

pub fn certify_exact(net: &ReluNetwork) -> InjectivityCertificate {
    certify_exact_with(net, &ExactOptions::default())
}

/// Exact injectivity by region pairs.
pub fn certify_exact_with(net: &ReluNetwork, opts: &ExactOptions) -> InjectivityCertificate {
    let regions = match enumerate_regions(net, opts.budget) {
        Ok(r) => r,
        Err(Error::BudgetExceeded { cap }) => {
            return InjectivityCertificate::inconclusive(
                Method::BudgetExceeded,
                format!("region budget {cap} exceeded"),
            )
        }
        Err(e) => return InjectivityCertificate::inconclusive(Method::RegionPairs, e.to_string()),
    };
    let n = net.input_dim();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        if rank(&r.a, opts.rank_tol) < n {
            pairs.push((i, i));
        }
    }
    let deficient = pairs.len();
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            pairs.push((i, j));
        }
    }
    let outcomes: Vec<(usize, PairOutcome)> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| (k, check_pair(net, &regions[i], &regions[j], opts.delta_sep)))
        .collect();

    let mut cert = InjectivityCertificate::new(Verdict::Injective, Method::RegionPairs);
    cert.wedge_count = regions.len();
    let mut unsure = None;
    for (k, out) in outcomes {
        match out {
            PairOutcome::Collide(c) => {
                cert.verdict = Verdict::NonInjective;
                cert.failing_witness = Some(c.x1.clone());
                cert.collision = Some(c);
                if k < deficient {
                    cert.method = Method::RankDeficiency;
                }
                return cert;
            }
            PairOutcome::Unsure(s) => {
                unsure.get_or_insert(s);
            }
            PairOutcome::Separate => {}
        }
    }
    if deficient > 0 {
        cert.verdict = Verdict::Inconclusive;
        cert.note = Some("rank-deficient region without a verified collision".into());
    } else if let Some(s) = unsure {
        cert.verdict = Verdict::Inconclusive;
        cert.note = Some(s);
    }
    cert
}

fn pair_gap(net: &ReluNetwork, m: &[f64], u: &[f64], s: f64) -> f64 {
    let un = norm(u);
    let z1: Vec<f64> = m.iter().zip(u).map(|(a, b)| a + 0.5 * s * b / un).collect();
    let z2: Vec<f64> = m.iter().zip(u).map(|(a, b)| a - 0.5 * s * b / un).collect();
    let y1 = net.forward(&z1).expect("dims");
    let y2 = net.forward(&z2).expect("dims");
    y1.iter().zip(&y2).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn split_pair(m: &[f64], u: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let un = norm(u);
    (
        m.iter().zip(u).map(|(a, b)| a + 0.5 * s * b / un).collect(),
        m.iter().zip(u).map(|(a, b)| a - 0.5 * s * b / un).collect(),
    )
}

fn descend(net: &ReluNetwork, m0: &[f64], u0: &[f64], s: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let n = m0.len();
    let mut params: Vec<f64> = m0.iter().chain(u0).copied().collect();
    let eval = |p: &[f64]| pair_gap(net, &p[..n], &p[n..], s);
    let mut best = eval(&params);
    let mut step = 0.5 * (1.0 + norm(m0));
    for _ in 0..DESCENT_STEPS {
        if best == 0.0 || step < 1e-12 {
            break;
        }
        let mut improved = false;
        for k in 0..2 * n {
            for dir in [1.0, -1.0] {
                let old = params[k];
                params[k] = old + dir * step;
                let f = if norm(&params[n..]) > 0.0 {
                    eval(&params)
                } else {
                    f64::INFINITY
                };
                if f < best {
                    best = f;
                    improved = true;
                    break;
                }
                params[k] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (params[..n].to_vec(), params[n..].to_vec(), best.sqrt())
}

/// Randomized falsifier. Samples input pairs at mixed scales, then runs a
/// derivative-free coordinate descent on `|N(z1) - N(z2)|^2` at fixed
/// separation from the most promising pairs. `None` is not a certificate.
pub fn collision_search(
    net: &ReluNetwork,
    trials: usize,
    prng: &mut Prng,
    tol: f64,
) -> Option<Collision> {
    let n = net.input_dim();
    let min_sep = 1e3 * tol;
    let lo = min_sep.max(1e-3).ln();
    let hi = 2.0f64.max(min_sep * 10.0).ln();
    let samples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..trials)
        .map(|_| {
            let r = prng.uniform_range(-2.0, 2.5).exp();
            let m: Vec<f64> = prng.unit_vector(n).iter().map(|v| v * r).collect();
            let u = prng.unit_vector(n);
            let s = prng.uniform_range(lo, hi).exp();
            (m, u, s)
        })
        .collect();
    let scored: Vec<(usize, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(k, (m, u, s))| (k, pair_gap(net, m, u, *s).sqrt()))
        .collect();
    if let Some((k, _)) = scored.iter().find(|(_, g)| *g <= tol) {
        let (m, u, s) = &samples[*k];
        let (z1, z2) = split_pair(m, u, *s);
        return Some(net.collision(&z1, &z2));
    }
    let mut ranked: Vec<(usize, f64)> = scored
        .iter()
        .map(|(k, g)| (*k, g / samples[*k].2))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.truncate(DESCENT_STARTS);
    let found: Vec<Option<Collision>> = ranked
        .par_iter()
        .map(|(k, _)| {
            let (m, u, s) = &samples[*k];
            let (m, u, gap) = descend(net, m, u, *s);
            if gap <= tol {
                let (z1, z2) = split_pair(&m, &u, *s);
                let c = net.collision(&z1, &z2);
                (c.output_distance <= tol && c.input_distance >= min_sep).then_some(c)
            } else {
                None
            }
        })
        .collect();
    found.into_iter().flatten().next()
}

/// Dimensions and projections of a random-projection cascade.
///
/// `dims = [d0, d1, d2, ...]`: `d_{2j} -> d_{2j+1}` is an injective ReLU block
/// and `d_{2j+1} -> d_{2j+2}` a linear projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    pub dims: Vec<usize>,
    /// Supplied projections, in order; sampled Gaussian when absent.
    #[serde(default)]
    pub projections: Option<Vec<Matrix>>,
}

impl CascadeSpec {
    pub fn new(dims: Vec<usize>) -> Self {
        Self {
            dims,
            projections: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.len() < 2 || d.contains(&0) {
            return Err(Error::Dimension(
                "cascade needs at least two positive dimensions".into(),
            ));
        }
        let n = d[0];
        for j in (0..d.len() - 1).step_by(2) {
            if d[j + 1] < 2 * d[j] {
                return Err(Error::Dimension(format!(
                    "block {} maps {} -> {}; an injective ReLU block needs at least {}",
                    j / 2,
                    d[j],
                    d[j + 1],
                    2 * d[j]
                )));
            }
        }
        for j in (2..d.len()).step_by(2) {
            if d[j] < 2 * n + 1 {
                return Err(Error::Dimension(format!(
                    "projection target d{j} = {} is below 2n+1 = {}",
                    d[j],
                    2 * n + 1
                )));
            }
        }
        if let Some(ps) = &self.projections {
            let expected: Vec<(usize, usize)> =
                (2..d.len()).step_by(2).map(|j| (d[j], d[j - 1])).collect();
            if ps.len() != expected.len() {
                return Err(Error::Dimension(format!(
                    "expected {} projections, got {}",
                    expected.len(),
                    ps.len()
                )));
            }
            for (p, (r, c)) in ps.iter().zip(expected) {
                if p.rows() != r || p.cols() != c {
                    return Err(Error::Dimension(format!(
                        "projection is {}x{}, expected {r}x{c}",
                        p.rows(),
                        p.cols()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn random_minimal(from: usize, to: usize, prng: &mut Prng) -> Result<Matrix> {
    let b = sample_orthogonal(from, prng);
    let d: Vec<f64> = (0..from).map(|_| prng.uniform_range(0.5, 2.0)).collect();
    let extra = (to > 2 * from).then(|| sample_gaussian_matrix(to - 2 * from, from, prng));
    construct_expanded(&b, &d, extra.as_ref())
}

/// Injective ReLU layers from `from` to `to` dimensions: doubling layers
/// while there is room, then one expanded layer.
pub fn injective_block(from: usize, to: usize, prng: &mut Prng) -> Result<Vec<DenseLayer>> {
    if to < 2 * from {
        return Err(Error::Dimension(format!(
            "injective ReLU block needs {to} >= 2 * {from}"
        )));
    }
    let mut layers = Vec::new();
    let mut cur = from;
    while 4 * cur <= to {
        layers.push(DenseLayer::relu(random_minimal(cur, 2 * cur, prng)?));
        cur *= 2;
    }
    layers.push(DenseLayer::relu(random_minimal(cur, to, prng)?));
    Ok(layers)
}

/// Alternate injective ReLU blocks with linear projections.
pub fn build_cascade(spec: &CascadeSpec, prng: &mut Prng) -> Result<ReluNetwork> {
    spec.validate()?;
    let d = &spec.dims;
    let mut layers = Vec::new();
    let mut proj_index = 0;
    for j in 0..d.len() - 1 {
        if j % 2 == 0 {
            layers.extend(injective_block(d[j], d[j + 1], prng)?);
        } else {
            let b = match &spec.projections {
                Some(ps) => ps[proj_index].clone(),
                None => sample_gaussian_matrix(d[j + 1], d[j], prng)
                    .scaled(1.0 / (d[j + 1] as f64).sqrt())?,
            };
            proj_index += 1;
            let rows = b.rows();
            layers.push(DenseLayer::new(b, vec![0.0; rows], Activation::Identity)?);
        }
    }
    ReluNetwork::new(layers, None)
}

/// Nearest sampled input whose output is closest to `y`.
pub fn nearest_preimage<'a>(
    net: &ReluNetwork,
    grid: &'a [Vec<f64>],
    y: &[f64],
) -> Option<&'a [f64]> {
    grid.iter()
        .map(|x| (x, distance(&net.forward(x).expect("dims"), y)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x.as_slice())
}

/// Whether `x` lies in the open region.
pub fn region_contains(region: &AffineRegion, x: &[f64]) -> bool {
    region
        .constraints
        .iter()
        .all(|f| dot(&f.normal, x) + f.offset > 0.0)
}
