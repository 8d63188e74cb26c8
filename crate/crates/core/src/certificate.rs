use serde::{Deserialize, Serialize};

/// Tri-state injectivity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Injective,
    NonInjective,
    Inconclusive,
}

impl Verdict {
    /// CLI exit code for this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Injective => 0,
            Verdict::NonInjective => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

/// How a verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WedgeEnumeration,
    RankDeficiency,
    AntipodalPairs,
    RandomFalsification,
    FullRank,
    BiasedCollision,
    PaddedFamily,
    Layerwise,
    RegionPairs,
    BudgetExceeded,
}

/// Two distinct inputs with (numerically) equal outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub input_distance: f64,
    pub output_distance: f64,
}

/// Rank record of one enumerated wedge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeEvidence {
    pub sign_pattern: Vec<i8>,
    pub active_count: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityCertificate {
    pub verdict: Verdict,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failing_witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub collision: Option<Collision>,
    pub wedge_count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub evidence: Vec<WedgeEvidence>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl InjectivityCertificate {
    pub fn new(verdict: Verdict, method: Method) -> Self {
        Self {
            verdict,
            method,
            failing_witness: None,
            collision: None,
            wedge_count: 0,
            evidence: Vec::new(),
            note: None,
        }
    }

    pub fn inconclusive(method: Method, note: impl Into<String>) -> Self {
        let mut c = Self::new(Verdict::Inconclusive, method);
        c.note = Some(note.into());
        c
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn is_injective(&self) -> bool {
        self.verdict == Verdict::Injective
    }

    pub fn to_json(&self, include_evidence: bool) -> String {
        let mut c = self.clone();
        if !include_evidence {
            c.evidence.clear();
        }
        serde_json::to_string_pretty(&c).expect("certificate serializes")
    }
}
