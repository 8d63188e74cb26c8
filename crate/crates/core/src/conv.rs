//! Convolutional layers as structured matrices, and the padded-kernel test.
//!
//! Signals and kernels are p-dimensional arrays stored row-major (last axis
//! fastest). Indices are 0-based: output `J` of a kernel `c` of width `O` is
//! `(Cx)_J = sum_{0 <= I < O} c[O - 1 - I] x[J + I]`, with stride 1.

use serde::{Deserialize, Serialize};

use crate::certificate::{InjectivityCertificate, Method, Verdict};
use crate::dss::{certify_dss_all_with, DssOptions};
use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;

/// Tuple of positive integers, compared componentwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MultiIndex(Vec<usize>);

impl TryFrom<Vec<usize>> for MultiIndex {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        MultiIndex::new(v)
    }
}

impl From<MultiIndex> for Vec<usize> {
    fn from(m: MultiIndex) -> Self {
        m.0
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl MultiIndex {
    pub fn new(components: Vec<usize>) -> Result<Self> {
        if components.is_empty() || components.contains(&0) {
            return Err(Error::Shape(format!(
                "multi-index needs positive components, got {components:?}"
            )));
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    /// Number of axes `p`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of entries of an array of this shape.
    pub fn size(&self) -> usize {
        self.0.iter().product()
    }

    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }

    /// `self <= other` componentwise (same length required).
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self < other` componentwise.
    pub fn lt(&self, other: &MultiIndex) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a < b)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.len()];
        for k in (0..self.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.0[k + 1];
        }
        s
    }

    /// Row-major offset of `index`.
    pub fn flat(&self, index: &[usize]) -> usize {
        index.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    /// All indices `0 <= I < self`, row-major.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.size());
        let mut cur = vec![0; self.len()];
        for _ in 0..self.size() {
            out.push(cur.clone());
            for k in (0..self.len()).rev() {
                cur[k] += 1;
                if cur[k] < self.0[k] {
                    break;
                }
                cur[k] = 0;
            }
        }
        out
    }
}

/// Convolution kernel of width `O`, values row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct Kernel {
    pub shape: MultiIndex,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKernel {
    shape: Vec<usize>,
    values: serde_json::Value,
}

fn flatten_json(v: &serde_json::Value, out: &mut Vec<f64>) -> Result<()> {
    match v {
        serde_json::Value::Array(items) => {
            for item in items {
                flatten_json(item, out)?;
            }
            Ok(())
        }
        serde_json::Value::Number(n) => {
            out.push(n.as_f64().ok_or_else(|| {
                Error::InvalidArgument(format!("kernel value {n} is not a float"))
            })?);
            Ok(())
        }
        other => Err(Error::InvalidArgument(format!(
            "kernel values must be numbers, got {other}"
        ))),
    }
}

impl TryFrom<RawKernel> for Kernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        let mut values = Vec::new();
        flatten_json(&raw.values, &mut values)?;
        Kernel::new(MultiIndex::new(raw.shape)?, values)
    }
}

impl Kernel {
    pub fn new(shape: MultiIndex, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.size() {
            return Err(Error::Shape(format!(
                "kernel of shape {shape} needs {} values, got {}",
                shape.size(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: i });
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("kernel has no nonzero value".into()));
        }
        Ok(Self { shape, values })
    }

    /// One-dimensional kernel.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(MultiIndex::new(vec![values.len()])?, values.to_vec())
    }

    pub fn scaled(&self, s: f64) -> Kernel {
        Kernel {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    ZeroPadded,
    Periodic,
}

/// A bank of kernels applied to one signal shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernels: Vec<Kernel>,
    pub signal_shape: MultiIndex,
    #[serde(default)]
    pub boundary: Boundary,
}

impl ConvSpec {
    pub fn new(kernels: Vec<Kernel>, signal_shape: MultiIndex, boundary: Boundary) -> Result<Self> {
        Self::with_stride(kernels, signal_shape, boundary, 1)
    }

    pub fn with_stride(
        kernels: Vec<Kernel>,
        signal_shape: MultiIndex,
        boundary: Boundary,
        stride: usize,
    ) -> Result<Self> {
        if stride != 1 {
            return Err(Error::UnsupportedStride(stride));
        }
        let spec = Self {
            kernels,
            signal_shape,
            boundary,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::Shape("convolution needs at least one kernel".into()));
        }
        for k in &self.kernels {
            if !k.shape.le(&self.signal_shape) {
                return Err(Error::Shape(format!(
                    "kernel width {} does not fit signal shape {}",
                    k.shape, self.signal_shape
                )));
            }
        }
        Ok(())
    }
}

/// Kernel bank file: kernels plus optional signal shape and boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub kernels: Vec<Kernel>,
    #[serde(default)]
    pub signal_shape: Option<MultiIndex>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl KernelBank {
    pub fn to_spec(&self, signal_shape: Option<&MultiIndex>) -> Result<ConvSpec> {
        let shape = signal_shape
            .or(self.signal_shape.as_ref())
            .ok_or_else(|| Error::InvalidArgument("no signal shape given".into()))?;
        ConvSpec::with_stride(
            self.kernels.clone(),
            shape.clone(),
            self.boundary,
            self.stride,
        )
    }
}

/// Stacked matrix `[C_1; ...; C_k]` acting on row-major signals.
pub fn conv_matrix(spec: &ConvSpec) -> Result<Matrix> {
    spec.validate()?;
    let n = &spec.signal_shape;
    let size = n.size();
    let outputs = n.indices();
    let mut data = Vec::with_capacity(spec.kernels.len() * size * size);
    for k in &spec.kernels {
        let o = &k.shape;
        let taps = o.indices();
        for j in &outputs {
            let mut row = vec![0.0; size];
            'tap: for i in &taps {
                let mut pos = Vec::with_capacity(n.len());
                for axis in 0..n.len() {
                    let p = j[axis] + i[axis];
                    let len = n.components()[axis];
                    if p < len {
                        pos.push(p);
                    } else if spec.boundary == Boundary::Periodic {
                        pos.push(p % len);
                    } else {
                        continue 'tap;
                    }
                }
                let flipped: Vec<usize> = i
                    .iter()
                    .zip(o.components())
                    .map(|(a, w)| w - 1 - a)
                    .collect();
                row[n.flat(&pos)] += k.values[o.flat(&flipped)];
            }
            data.extend(row);
        }
    }
    Matrix::new(spec.kernels.len() * size, size, data)
}

/// Every placement of `c` inside an array of shape `P`, offsets in
/// colexicographic order (first axis fastest). Empty when `O` does not fit.
pub fn padded_kernels(c: &Kernel, p: &MultiIndex) -> Vec<Vec<f64>> {
    let o = &c.shape;
    if !o.le(p) {
        return Vec::new();
    }
    let room: Vec<usize> = o
        .components()
        .iter()
        .zip(p.components())
        .map(|(a, b)| b - a + 1)
        .collect();
    let room_rev = MultiIndex(room.iter().rev().copied().collect());
    let taps = o.indices();
    room_rev
        .indices()
        .into_iter()
        .map(|d_rev| {
            let d: Vec<usize> = d_rev.into_iter().rev().collect();
            let mut out = vec![0.0; p.size()];
            for t in &taps {
                let pos: Vec<usize> = t.iter().zip(&d).map(|(a, b)| a + b).collect();
                out[p.flat(&pos)] = c.values[o.flat(t)];
            }
            out
        })
        .collect()
}

/// Matrix whose rows are all padded placements of all kernels at `P`.
pub fn padded_family(kernels: &[Kernel], p: &MultiIndex) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = kernels
        .iter()
        .filter(|k| k.shape.len() == p.len())
        .flat_map(|k| padded_kernels(k, p))
        .collect();
    if rows.is_empty() {
        return Err(Error::Shape(format!("no kernel fits inside {p}")));
    }
    Matrix::from_rows(&rows)
}

pub fn check_conv(kernels: &[Kernel], p: &MultiIndex) -> Result<InjectivityCertificate> {
    check_conv_with(kernels, p, &DssOptions::default())
}

/// Padded-family test: a DSS of `R^P` at every direction for the union of
/// the placements proves the full layer injective for every signal shape.
/// Anything else is inconclusive for the layer.
pub fn check_conv_with(
    kernels: &[Kernel],
    p: &MultiIndex,
    opts: &DssOptions,
) -> Result<InjectivityCertificate> {
    let family = padded_family(kernels, p)?;
    let inner = certify_dss_all_with(&family, opts);
    let mut cert = InjectivityCertificate::new(Verdict::Injective, Method::PaddedFamily);
    cert.wedge_count = inner.wedge_count;
    cert.evidence = inner.evidence;
    if inner.verdict != Verdict::Injective {
        cert.verdict = Verdict::Inconclusive;
        cert.failing_witness = inner.failing_witness;
        cert.note = Some(format!(
            "padded family at {p} ({} vectors) is {:?} by {:?}; the padded test is only sufficient",
            family.rows(),
            inner.verdict,
            inner.method
        ));
    } else {
        cert.note = Some(format!("padded family at {p} has a DSS everywhere"));
    }
    Ok(cert)
}

/// All shapes `1 <= P <= P_max` in search order: increasing `|P|` (number of
/// entries), ties broken lexicographically.
pub fn padding_candidates(p_max: &MultiIndex) -> Vec<MultiIndex> {
    let mut all: Vec<MultiIndex> = p_max
        .indices()
        .into_iter()
        .map(|i| MultiIndex(i.into_iter().map(|v| v + 1).collect()))
        .collect();
    all.sort_by(|a, b| a.size().cmp(&b.size()).then_with(|| a.cmp(b)));
    all
}

pub fn search_padding(
    kernels: &[Kernel],
    p_max: &MultiIndex,
) -> Option<(MultiIndex, InjectivityCertificate)> {
    search_padding_with(kernels, p_max, &DssOptions::default())
}

/// First padding in search order whose padded test certifies.
pub fn search_padding_with(
    kernels: &[Kernel],
    p_max: &MultiIndex,
    opts: &DssOptions,
) -> Option<(MultiIndex, InjectivityCertificate)> {
    for p in padding_candidates(p_max) {
        let fits: usize = kernels
            .iter()
            .filter(|k| k.shape.le(&p))
            .map(|k| padded_kernels(k, &p).len())
            .sum();
        // Fewer than 2|P| vectors can never have a DSS everywhere.
        if fits < 2 * p.size() {
            continue;
        }
        if let Ok(cert) = check_conv_with(kernels, &p, opts) {
            if cert.verdict == Verdict::Injective {
                return Some((p, cert));
            }
        }
    }
    None
}

/// Kernel-count bounds for a padded family of width `O` at padding `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBound {
    /// `2 prod_j 1 / (1 - O_j / P_j)`.
    pub formula: f64,
    /// Ceiling of `formula`.
    pub count: usize,
    /// Smallest `k` with `k * prod_j (P_j - O_j + 1) >= 2 prod_j P_j`.
    pub vector_count: usize,
}

pub fn min_channels(o: &MultiIndex, p: &MultiIndex) -> Result<ChannelBound> {
    if o.len() != p.len() {
        return Err(Error::Dimension(format!("{o} and {p} differ in length")));
    }
    let mut formula = 2.0;
    for (axis, (oj, pj)) in o.components().iter().zip(p.components()).enumerate() {
        if oj >= pj {
            return Err(Error::DegenerateRatio {
                axis,
                width: *oj,
                padding: *pj,
            });
        }
        formula /= 1.0 - *oj as f64 / *pj as f64;
    }
    let placements: usize = o
        .components()
        .iter()
        .zip(p.components())
        .map(|(a, b)| b - a + 1)
        .product();
    let needed = 2 * p.size();
    Ok(ChannelBound {
        formula,
        count: (formula - 1e-9).ceil() as usize,
        vector_count: needed.div_ceil(placements),
    })
}

/// `{c_k} ∪ {-s_k^2 c_k}`.
pub fn construct_pm_filters(base: &[Kernel], scales: &[f64]) -> Result<Vec<Kernel>> {
    if base.len() != scales.len() {
        return Err(Error::Dimension(format!(
            "{} kernels but {} scales",
            base.len(),
            scales.len()
        )));
    }
    if let Some((i, s)) = scales
        .iter()
        .enumerate()
        .find(|(_, s)| s.is_nan() || **s <= 0.0)
    {
        return Err(Error::NonPositiveScale {
            index: i,
            value: *s,
        });
    }
    let mut out = base.to_vec();
    out.extend(base.iter().zip(scales).map(|(k, s)| k.scaled(-s * s)));
    Ok(out)
}

pub fn cross_check_full(spec: &ConvSpec) -> Result<InjectivityCertificate> {
    cross_check_full_with(spec, &DssOptions::default())
}

/// Direct certification of the full convolution matrix.
pub fn cross_check_full_with(spec: &ConvSpec, opts: &DssOptions) -> Result<InjectivityCertificate> {
    Ok(certify_dss_all_with(&conv_matrix(spec)?, opts))
}
