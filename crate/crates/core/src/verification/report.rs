use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The quadrature error is too large to decide the inequality.
    Inconclusive,
}

/// One checked inequality `measured_margin ≤ tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub index: usize,
    pub label: String,
    pub inputs: Value,
    pub measured_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CaseRecord {
    pub fn new(label: impl Into<String>, inputs: Value, measured_margin: f64, tolerance: f64) -> Self {
        let passed = measured_margin <= tolerance;
        Self {
            index: 0,
            label: label.into(),
            inputs,
            measured_margin,
            tolerance,
            passed,
            verdict: if passed { Verdict::Pass } else { Verdict::Fail },
            note: None,
        }
    }

    /// Downgrade a failure to inconclusive when `unresolved` holds.
    pub fn inconclusive_if(mut self, unresolved: bool) -> Self {
        if !self.passed && unresolved {
            self.verdict = Verdict::Inconclusive;
        }
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub inconclusive: usize,
    /// Suites that stopped with an error (aggregate reports only).
    #[serde(default)]
    pub errors: usize,
}

impl Summary {
    fn add(&mut self, other: &Summary) {
        self.total += other.total;
        self.passed += other.passed;
        self.failed += other.failed;
        self.inconclusive += other.inconclusive;
        self.errors += other.errors;
    }
}

/// Result of one property suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite_name: String,
    pub cases: Vec<CaseRecord>,
    pub summary: Summary,
    /// Observed quantities that are reported, not asserted.
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl SuiteReport {
    pub fn new(suite_name: impl Into<String>) -> Self {
        Self {
            suite_name: suite_name.into(),
            cases: Vec::new(),
            summary: Summary::default(),
            diagnostics: BTreeMap::new(),
            error: None,
        }
    }

    pub fn failed_with(suite_name: impl Into<String>, error: impl std::fmt::Display) -> Self {
        let mut r = Self::new(suite_name);
        r.error = Some(error.to_string());
        r.summary.errors = 1;
        r
    }

    pub fn push(&mut self, mut case: CaseRecord) {
        case.index = self.cases.len();
        self.summary.total += 1;
        match case.verdict {
            Verdict::Pass => self.summary.passed += 1,
            Verdict::Fail => self.summary.failed += 1,
            Verdict::Inconclusive => self.summary.inconclusive += 1,
        }
        self.cases.push(case);
    }

    pub fn extend(&mut self, cases: impl IntoIterator<Item = CaseRecord>) {
        for c in cases {
            self.push(c);
        }
    }

    pub fn diagnostic(&mut self, key: impl Into<String>, value: f64) {
        self.diagnostics.insert(key.into(), value);
    }

    /// No failed case and no error. Inconclusive cases do not fail a suite.
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.summary.failed == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseRecord> {
        self.cases.iter().filter(|c| c.verdict == Verdict::Fail)
    }
}

/// All suites of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suites: Vec<SuiteReport>,
    pub summary: Summary,
    pub passed: bool,
    #[serde(default)]
    pub config: Value,
}

impl VerificationReport {
    pub fn from_suites(suites: Vec<SuiteReport>, config: Value) -> Self {
        let mut summary = Summary::default();
        for s in &suites {
            summary.add(&s.summary);
        }
        let passed = suites.iter().all(SuiteReport::passed);
        Self { suites, summary, passed, config }
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite_name == name)
    }

    /// One line per suite.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let status = if s.error.is_some() {
                "ERROR"
            } else if s.passed() {
                "PASS"
            } else {
                "FAIL"
            };
            out.push_str(&format!(
                "{status:<5} {:<28} passed={} failed={} inconclusive={}",
                s.suite_name, s.summary.passed, s.summary.failed, s.summary.inconclusive
            ));
            if let Some(e) = &s.error {
                out.push_str(&format!("  error: {e}"));
            }
            out.push('\n');
            for c in s.failures() {
                out.push_str(&format!(
                    "      case {} {}: margin {:.6e} > tolerance {:.6e}\n",
                    c.index, c.label, c.measured_margin, c.tolerance
                ));
            }
        }
        out.push_str(&format!(
            "total={} passed={} failed={} inconclusive={} suite_errors={}\n",
            self.summary.total,
            self.summary.passed,
            self.summary.failed,
            self.summary.inconclusive,
            self.summary.errors
        ));
        out
    }
}
