//! JSON diagnostics report.

use serde::Serialize;

use crate::suites::Check;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: ScenarioSummary,
    pub seed: u64,
    pub pass: bool,
    pub suites: Vec<SuiteReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub potential: String,
    pub gamma: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub pass: bool,
    pub identities: Vec<IdentityEntry>,
    /// One entry per sample whose flow left its domain.
    pub domain_failures: Vec<DomainFailure>,
    /// Informational outcomes that are not failures.
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityEntry {
    #[serde(rename = "ref")]
    pub id: String,
    pub quote: String,
    /// `false` when the suite's preconditions rule the identity out; the
    /// reason is among the findings.
    pub applicable: bool,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub threshold: f64,
    pub pass: bool,
    /// `evaluated / samples`.
    pub coverage: f64,
    pub samples: usize,
    pub evaluated: usize,
    pub domain_failures: usize,
    /// Evaluations that failed for reasons other than leaving the domain.
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainFailure {
    pub sample: usize,
    pub identity: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
}

impl Finding {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into(), points: Vec::new() }
    }
}

/// Collects the residuals of one identity over a suite's samples.
#[derive(Debug, Clone)]
pub struct Tally {
    check: &'static Check,
    threshold: f64,
    residuals: Vec<f64>,
    samples: usize,
    domain: usize,
    errors: usize,
    first_error: Option<String>,
}

impl Tally {
    pub fn new(check: &'static Check, threshold: f64) -> Self {
        Self { check, threshold, residuals: Vec::new(), samples: 0, domain: 0, errors: 0, first_error: None }
    }

    pub fn id(&self) -> &'static str {
        self.check.id
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Records one sample; returns the domain failure reason, if any.
    pub fn record(&mut self, outcome: contactkit::Result<f64>) -> Option<String> {
        self.samples += 1;
        match outcome {
            Ok(r) if r.is_finite() => self.residuals.push(r.abs()),
            Ok(r) => self.fail(format!("non-finite residual {r}")),
            Err(e) if e.is_domain_failure() => {
                self.domain += 1;
                return Some(e.to_string());
            }
            Err(e) => self.fail(e.to_string()),
        }
        None
    }

    fn fail(&mut self, message: String) {
        self.errors += 1;
        self.first_error.get_or_insert(message);
    }

    /// Message of the first non-domain failure.
    pub fn first_error(&self) -> Option<&str> {
        self.first_error.as_deref()
    }

    pub fn finish(self) -> IdentityEntry {
        let evaluated = self.residuals.len();
        let max = self.residuals.iter().copied().fold(0.0, f64::max);
        let mean = if evaluated == 0 { 0.0 } else { self.residuals.iter().sum::<f64>() / evaluated as f64 };
        IdentityEntry {
            id: self.check.id.into(),
            quote: self.check.quote.into(),
            applicable: true,
            max_residual: max,
            mean_residual: mean,
            threshold: self.threshold,
            pass: self.errors == 0 && max <= self.threshold,
            coverage: if self.samples == 0 { 0.0 } else { evaluated as f64 / self.samples as f64 },
            samples: self.samples,
            evaluated,
            domain_failures: self.domain,
            errors: self.errors,
        }
    }

    /// Entry for an identity the suite could not apply.
    pub fn not_applicable(check: &'static Check, threshold: f64) -> IdentityEntry {
        IdentityEntry {
            id: check.id.into(),
            quote: check.quote.into(),
            applicable: false,
            max_residual: 0.0,
            mean_residual: 0.0,
            threshold,
            pass: true,
            coverage: 0.0,
            samples: 0,
            evaluated: 0,
            domain_failures: 0,
            errors: 0,
        }
    }
}
