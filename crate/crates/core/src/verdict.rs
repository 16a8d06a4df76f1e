use std::collections::BTreeMap;

use serde::Serialize;

use crate::linalg::CVector;

/// The sample at which a check attained its worst margin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub sample_index: usize,
    /// Sample vector as `[re, im]` pairs.
    pub vector: Vec<[f64; 2]>,
    pub value: f64,
}

impl Witness {
    pub fn new(sample_index: usize, x: &CVector, value: f64) -> Self {
        Self {
            sample_index,
            vector: x.iter().map(|z| [z.re, z.im]).collect(),
            value,
        }
    }
}

/// Structured result of an analysis: outcome, worst margin, witness,
/// named metrics and nested sub-verdicts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Verdict>,
}

impl Verdict {
    pub fn new(check: impl Into<String>, passed: bool) -> Self {
        Self {
            check: check.into(),
            passed,
            margin: None,
            tolerance: None,
            witness: None,
            metrics: BTreeMap::new(),
            diagnostics: Vec::new(),
            children: Vec::new(),
        }
    }

    /// Passes iff every child passes.
    pub fn all_of(check: impl Into<String>, children: Vec<Verdict>) -> Self {
        let passed = children.iter().all(|c| c.passed);
        let mut v = Self::new(check, passed);
        v.children = children;
        v
    }

    pub fn with_name(mut self, check: impl Into<String>) -> Self {
        self.check = check.into();
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn with_witness(mut self, w: Witness) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn metric(mut self, key: impl Into<String>, value: f64) -> Self {
        self.metrics.insert(key.into(), value);
        self
    }

    pub fn note(mut self, msg: impl Into<String>) -> Self {
        self.diagnostics.push(msg.into());
        self
    }

    pub fn child(&self, check: &str) -> Option<&Verdict> {
        self.children.iter().find(|c| c.check == check)
    }
}
