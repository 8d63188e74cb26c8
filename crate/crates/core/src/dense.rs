//! Fully connected layers `x -> phi(Wx + b)`.

use serde::{Deserialize, Serialize};

use crate::certificate::{Collision, InjectivityCertificate, Method, Verdict};
use crate::dss::{certify_dss_all_with, DssOptions, TAU_COLLIDE};
use crate::error::{Error, Result};
use crate::network::{certify_exact_with, ExactOptions, ReluNetwork};
use crate::numeric::linalg::{nullspace_vector_with_tol, rank};
use crate::numeric::matrix::{distance, dot, norm, Matrix};

/// Pointwise activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(a) => {
                if v >= 0.0 {
                    v
                } else {
                    a * v
                }
            }
            Activation::Identity => v,
        }
    }

    /// Whether the activation is one-to-one on `R`.
    pub fn is_injective(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDenseLayer")]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Deserialize)]
struct RawDenseLayer {
    weight: Matrix,
    #[serde(default)]
    bias: Option<Vec<f64>>,
    #[serde(default = "default_activation")]
    activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl TryFrom<RawDenseLayer> for DenseLayer {
    type Error = Error;

    fn try_from(raw: RawDenseLayer) -> Result<Self> {
        let bias = raw.bias.unwrap_or_else(|| vec![0.0; raw.weight.rows()]);
        DenseLayer::new(raw.weight, bias, raw.activation)
    }
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::Shape("layer weight must be at least 1x1".into()));
        }
        if bias.len() != weight.rows() {
            return Err(Error::Dimension(format!(
                "bias has length {}, weight has {} rows",
                bias.len(),
                weight.rows()
            )));
        }
        if let Some(i) = bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        if let Activation::LeakyRelu(a) = activation {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "leaky slope must lie in (0, 1), got {a}"
                )));
            }
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// Bias-free ReLU layer.
    pub fn relu(weight: Matrix) -> Self {
        let m = weight.rows();
        Self::new(weight, vec![0.0; m], Activation::Relu).expect("valid layer")
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weight.mul_vec(x)?;
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v = self.activation.apply(*v + b);
        }
        Ok(y)
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

/// `W` with the rows whose bias is negative replaced by zero.
pub fn reduce_bias(layer: &DenseLayer) -> Matrix {
    let mut w = layer.weight.clone();
    for (i, b) in layer.bias.iter().enumerate() {
        if *b < 0.0 {
            for j in 0..w.cols() {
                w.set(i, j, 0.0);
            }
        }
    }
    w
}

pub fn check_dense(layer: &DenseLayer) -> InjectivityCertificate {
    check_dense_with(layer, &DssOptions::default())
}

/// Injectivity of a single layer.
///
/// For ReLU the bias-reduced matrix is certified first; an injective reduced
/// matrix proves the biased layer injective. A non-injective reduced matrix
/// does not in general, so the collision is rebuilt on the original layer and
/// the exact region checker decides when that fails.
pub fn check_dense_with(layer: &DenseLayer, opts: &DssOptions) -> InjectivityCertificate {
    let n = layer.input_dim();
    if layer.activation.is_injective() {
        if rank(&layer.weight, opts.rank_tol) == n {
            return InjectivityCertificate::new(Verdict::Injective, Method::FullRank);
        }
        let mut cert = InjectivityCertificate::new(Verdict::NonInjective, Method::RankDeficiency);
        if let Some(v) = nullspace_vector_with_tol(&layer.weight, opts.rank_tol) {
            let zero = vec![0.0; n];
            cert.failing_witness = Some(v.clone());
            cert.collision = Some(layer.collision(&zero, &v));
        }
        return cert;
    }

    if layer.bias.iter().all(|b| *b == 0.0) {
        return certify_dss_all_with(&layer.weight, opts);
    }

    let reduced = certify_dss_all_with(&reduce_bias(layer), opts);
    if reduced.verdict != Verdict::NonInjective {
        return reduced.with_note("certified on the bias-reduced matrix");
    }

    // Far from the origin the bias is negligible: a collision of ReLU(W.)
    // inside an open wedge survives scaling.
    let unbiased = certify_dss_all_with(&layer.weight, opts);
    if let Some(c) = &unbiased.collision {
        if let Some(c) = scaled_collision(layer, c) {
            let mut cert =
                InjectivityCertificate::new(Verdict::NonInjective, Method::BiasedCollision);
            cert.failing_witness = unbiased.failing_witness.clone();
            cert.collision = Some(c);
            return cert;
        }
    }

    let net = ReluNetwork::new(vec![layer.clone()], None).expect("single layer chains");
    let exact_opts = ExactOptions {
        budget: opts.budget,
        rank_tol: opts.rank_tol,
        ..ExactOptions::default()
    };
    certify_exact_with(&net, &exact_opts)
        .with_note("bias-reduced matrix is not injective; decided by region pairs")
}

fn scaled_collision(layer: &DenseLayer, c: &Collision) -> Option<Collision> {
    let mut lambda: f64 = 1.0;
    for (row, b) in layer.weight.row_iter().zip(&layer.bias) {
        for x in [&c.x1, &c.x2] {
            let p = dot(row, x);
            if p < 0.0 {
                lambda = lambda.max(4.0 * b.abs() / -p);
            }
        }
    }
    for _ in 0..8 {
        let x1: Vec<f64> = c.x1.iter().map(|v| v * lambda).collect();
        let x2: Vec<f64> = c.x2.iter().map(|v| v * lambda).collect();
        let cand = layer.collision(&x1, &x2);
        if cand.output_distance <= TAU_COLLIDE && cand.input_distance >= 1e-6 {
            return Some(cand);
        }
        lambda *= 4.0;
    }
    None
}

fn check_basis(b: &Matrix, d: &[f64]) -> Result<()> {
    let n = b.cols();
    if b.rows() != n {
        return Err(Error::Shape(format!(
            "basis must be square, got {}x{}",
            b.rows(),
            n
        )));
    }
    if d.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} scales, got {}",
            d.len()
        )));
    }
    if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
        return Err(Error::NonPositiveScale {
            index: i,
            value: *v,
        });
    }
    let r = rank(b, crate::numeric::DEFAULT_RANK_TOL);
    if r < n {
        return Err(Error::SingularBasis { rank: r, dim: n });
    }
    Ok(())
}

/// `[B; -DB]`, the minimal injective ReLU layer.
pub fn construct_minimal(b: &Matrix, d: &[f64]) -> Result<Matrix> {
    check_basis(b, d)?;
    let mut neg = b.clone();
    for (i, s) in d.iter().enumerate() {
        for j in 0..b.cols() {
            neg.set(i, j, -s * b.get(i, j));
        }
    }
    Matrix::vstack(&[b, &neg])
}

/// `[B; -DB; M]`; `None` for an empty `M`.
pub fn construct_expanded(b: &Matrix, d: &[f64], extra: Option<&Matrix>) -> Result<Matrix> {
    let base = construct_minimal(b, d)?;
    let Some(extra) = extra else {
        return Ok(base);
    };
    if extra.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "extra rows have {} columns, basis has {}",
            extra.cols(),
            b.cols()
        )));
    }
    Matrix::vstack(&[&base, extra])
}

/// `false` when `m` rows cannot give an injective ReLU layer on `R^n`.
///
/// Fewer than `2n` rows always fail, including `n = 1` where a single row
/// cannot point both ways.
pub fn minimal_expansivity_gate(m: usize, n: usize) -> bool {
    m >= 2 * n
}

/// Result of the antiparallel pairing search on a weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    /// Every row has a distinct antiparallel partner within the tolerance.
    pub paired: bool,
    /// Largest, over rows, of the smallest angle between `-w_i` and another row.
    pub worst_angle: f64,
    /// Row achieving `worst_angle`.
    pub worst_row: usize,
}

/// For each row, the angle to the nearest other row pointing the opposite way.
pub fn antiparallel_pairing(w: &Matrix, angle_tol: f64) -> PairingReport {
    let units: Vec<Option<Vec<f64>>> = w
        .row_iter()
        .map(|r| {
            let s = norm(r);
            (s > 0.0).then(|| r.iter().map(|v| v / s).collect())
        })
        .collect();
    let mut worst_angle = 0.0f64;
    let mut worst_row = 0;
    for (i, ui) in units.iter().enumerate() {
        let best = match ui {
            None => std::f64::consts::PI,
            Some(ui) => units
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .filter_map(|(_, uj)| uj.as_ref())
                .map(|uj| (-dot(ui, uj)).clamp(-1.0, 1.0).acos())
                .fold(std::f64::consts::PI, f64::min),
        };
        if best > worst_angle {
            worst_angle = best;
            worst_row = i;
        }
    }
    PairingReport {
        paired: worst_angle <= angle_tol,
        worst_angle,
        worst_row,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn reduce_bias_examples() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let l = DenseLayer::new(w.clone(), vec![0.0, 0.0], Activation::Relu).unwrap();
        assert_eq!(reduce_bias(&l), w);
        let l = DenseLayer::new(w.clone(), vec![0.5, 2.0], Activation::Relu).unwrap();
        assert_eq!(reduce_bias(&l), w);
        let l = DenseLayer::new(col(&[1.0, -1.0]), vec![-1.0, 0.0], Activation::Relu).unwrap();
        assert_eq!(reduce_bias(&l), col(&[0.0, -1.0]));
    }

    #[test]
    fn check_dense_examples() {
        let i2 = Matrix::identity(2);
        let w = Matrix::vstack(&[&i2, &i2.scaled(-1.0).unwrap()]).unwrap();
        assert_eq!(
            check_dense(&DenseLayer::relu(w)).verdict,
            Verdict::Injective
        );

        let l = DenseLayer::new(col(&[1.0, -1.0]), vec![-1.0, 0.0], Activation::Relu).unwrap();
        let cert = check_dense(&l);
        assert_eq!(cert.verdict, Verdict::NonInjective);
        let c = cert.collision.unwrap();
        assert!(c.output_distance <= TAU_COLLIDE);
        assert!(c.input_distance > 1e-6);
        for x in [c.x1[0], c.x2[0]] {
            assert!((0.0..=1.0).contains(&x), "{x}");
        }

        let l = DenseLayer::new(i2, vec![0.0; 2], Activation::LeakyRelu(0.1)).unwrap();
        assert_eq!(check_dense(&l).verdict, Verdict::Injective);
    }

    #[test]
    fn reduced_failure_does_not_imply_failure() {
        // Reduced matrix [0; -1] is not injective, but the layer is.
        let l = DenseLayer::new(col(&[1.0, -1.0]), vec![-1.0, 2.0], Activation::Relu).unwrap();
        assert_eq!(
            certify_dss_all_with(&reduce_bias(&l), &DssOptions::default()).verdict,
            Verdict::NonInjective
        );
        assert_eq!(check_dense(&l).verdict, Verdict::Injective);
    }

    #[test]
    fn leaky_rank_deficient() {
        let w = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0]]).unwrap();
        let l = DenseLayer::new(w, vec![0.3, 0.0, 1.0], Activation::LeakyRelu(0.2)).unwrap();
        let cert = check_dense(&l);
        assert_eq!(cert.verdict, Verdict::NonInjective);
        assert!(cert.collision.unwrap().output_distance <= TAU_COLLIDE);
    }

    #[test]
    fn constructors() {
        let i2 = Matrix::identity(2);
        let w = construct_minimal(&i2, &[1.0, 1.0]).unwrap();
        assert_eq!(
            w,
            Matrix::vstack(&[&i2, &i2.scaled(-1.0).unwrap()]).unwrap()
        );
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            construct_minimal(&singular, &[1.0, 1.0]),
            Err(Error::SingularBasis { rank: 1, dim: 2 })
        ));
        assert!(matches!(
            construct_minimal(&i2, &[1.0, 0.0]),
            Err(Error::NonPositiveScale { index: 1, .. })
        ));
        let e = construct_expanded(&i2, &[1.0, 1.0], None).unwrap();
        assert_eq!(e, w);
    }

    #[test]
    fn gate() {
        assert!(!minimal_expansivity_gate(3, 2));
        assert!(minimal_expansivity_gate(4, 2));
        assert!(minimal_expansivity_gate(21, 10));
        assert!(!minimal_expansivity_gate(1, 1));
        assert!(minimal_expansivity_gate(2, 1));
    }

    #[test]
    fn pairing() {
        let i2 = Matrix::identity(2);
        let w = construct_minimal(&i2, &[0.5, 3.0]).unwrap();
        assert!(antiparallel_pairing(&w, 1e-6).paired);
        let tri = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        assert!(!antiparallel_pairing(&tri, 1e-6).paired);
    }

    #[test]
    fn layer_json() {
        let l: DenseLayer = serde_json::from_str(
            r#"{"weight": [[1, 0], [0, 1]], "bias": [0, 1], "activation": {"leaky_relu": 0.1}}"#,
        )
        .unwrap();
        assert_eq!(l.activation, Activation::LeakyRelu(0.1));
        let l: DenseLayer = serde_json::from_str(r#"{"weight": [[1, 0]]}"#).unwrap();
        assert_eq!(l.bias, vec![0.0]);
        assert_eq!(l.activation, Activation::Relu);
        assert!(
            serde_json::from_str::<DenseLayer>(r#"{"weight": [[1]], "bias": [1, 2]}"#).is_err()
        );
    }
}
