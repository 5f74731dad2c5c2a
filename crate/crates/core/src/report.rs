//! Shared estimator configuration and result reporting.

use crate::error::{Error, Result};

/// Configuration shared by every randomized procedure.
///
/// `scale` multiplies every hard-coded sample-count constant (the 10⁶, 10³,
/// 10¹², … factors inside the estimators) and nothing else: accuracy and
/// error parameters, amplification counts and all structural formulas stay
/// untouched. `scale = 1` runs the faithful constants, which target analysis
/// slack rather than practicality; experiments pick smaller documented values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub eps: f64,
    pub eta: f64,
    pub scale: f64,
    pub cap: Option<u64>,
}

impl EstimatorParams {
    pub fn new(eps: f64, eta: f64, scale: f64, cap: Option<u64>) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps {eps} not in (0, 1]")));
        }
        if !(eta > 0.0 && eta <= 1.0 / 3.0) {
            return Err(Error::InvalidParameter(format!(
                "eta {eta} not in (0, 1/3]"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            eps,
            eta,
            scale,
            cap,
        })
    }
}

/// One step in an estimator's execution trace: which procedure ran, which
/// branch it took, and how many samples that step consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub proc: &'static str,
    pub branch: String,
    pub samples: u64,
}

pub type Trace = Vec<TraceEntry>;

/// Value plus cost accounting, returned by every estimator. `samples` equals
/// the oracle's draw-counter delta over the call, exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub value: f64,
    pub samples: u64,
    pub trace: Trace,
}

impl EstimateReport {
    pub fn new(value: f64, samples: u64, trace: Trace) -> Self {
        Self {
            value,
            samples,
            trace,
        }
    }

    pub fn leaf(value: f64, samples: u64, proc: &'static str, branch: impl Into<String>) -> Self {
        Self {
            value,
            samples,
            trace: vec![TraceEntry {
                proc,
                branch: branch.into(),
                samples,
            }],
        }
    }

    /// The branch recorded by the outermost trace entry, if any.
    pub fn top_branch(&self) -> Option<&str> {
        self.trace.last().map(|t| t.branch.as_str())
    }
}

/// An advice value r ≥ 0 plus its cost accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct AdviceReport {
    pub r: f64,
    pub samples: u64,
    pub trace: Trace,
}

impl AdviceReport {
    pub fn new(r: f64, samples: u64, trace: Trace) -> Self {
        debug_assert!(r >= 0.0, "advice must be non-negative, got {r}");
        Self { r, samples, trace }
    }
}
