//! Property suites for the quantitative lemmas, collected into a
//! machine-readable report.
//!
//! Every case records a measured margin and the tolerance it must not
//! exceed. Tolerances combine a proved constant with the reported quadrature
//! error; no suite asserts a constant that is only observed.

mod bv;
mod mollifier;
mod report;
mod suites;

pub use bv::{indicator_measure, indicator_superlevel};
pub use mollifier::{Mollified, Mollifier};
pub use report::{CaseRecord, SuiteReport, Summary, Verdict, VerificationReport};
pub use suites::{
    check_bv_divergence, check_limit, check_linear_distribution, check_local_expansion, check_maximal_domination,
    check_mollification, check_q_sandwich, check_smooth_p1, check_tail_bounds, maximal_ratio, POINCARE_BOUND,
};

use serde::{Deserialize, Serialize};

use crate::catalog::{SmoothnessTag, TestFunction};
use crate::error::Result;
use crate::quadrature::QuadratureSpec;
use crate::weak_norm::{BoxDomain, Constants, CurveOptions, Domain};

/// Sizes and seeds of a verification batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    pub seed: u64,
    /// Catalog ids; `None` selects the default catalog.
    pub functions: Option<Vec<String>>,
    pub constants: Constants,
    pub mc_nodes: usize,
    pub gauss_nodes: usize,
    pub local_expansion_samples: usize,
    pub r_ceiling: f64,
    pub mollifier_scales: Vec<f64>,
    pub mollification_samples: usize,
    pub maximal_samples: usize,
    pub tail_samples: usize,
    pub q_queries: usize,
    pub q_values: Vec<f64>,
    pub curve_samples: usize,
    pub closed_form_exponents: Vec<f64>,
    pub limit_tolerance: f64,
    pub bv_kappas: Vec<f64>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            seed: 0x05C1_1A7E,
            functions: None,
            constants: Constants::default(),
            mc_nodes: 4096,
            gauss_nodes: 8,
            local_expansion_samples: 200,
            r_ceiling: 0.05,
            mollifier_scales: vec![0.05, 0.2],
            mollification_samples: 20,
            maximal_samples: 40,
            tail_samples: 40,
            q_queries: 100,
            q_values: vec![1.0, 1.5, 2.0, 3.0],
            curve_samples: 64,
            closed_form_exponents: vec![1.5, 2.0, 3.0],
            limit_tolerance: 0.05,
            bv_kappas: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

impl VerificationConfig {
    pub fn selected(&self) -> Result<Vec<TestFunction>> {
        match &self.functions {
            None => Ok(TestFunction::default_catalog()),
            Some(ids) => ids.iter().map(|id| id.parse()).collect(),
        }
    }

    fn spec(&self, dim: usize) -> QuadratureSpec {
        if dim == 1 {
            QuadratureSpec { seed: self.seed, ..QuadratureSpec::gauss(self.gauss_nodes) }
        } else {
            QuadratureSpec::monte_carlo(self.mc_nodes, self.seed)
        }
    }

    fn curve_options(&self) -> CurveOptions {
        CurveOptions { samples: self.curve_samples, constants: self.constants, ..CurveOptions::default() }
    }
}

/// Collects per-function results of one suite; errors are recorded, never
/// propagated.
struct Collector {
    report: SuiteReport,
    errors: Vec<String>,
    touched: bool,
}

impl Collector {
    fn new(name: &str) -> Self {
        Self { report: SuiteReport::new(name), errors: Vec::new(), touched: false }
    }

    fn add(&mut self, label: &str, result: Result<SuiteReport>) {
        self.touched = true;
        match result {
            Ok(r) => {
                self.report.extend(r.cases);
                self.report.diagnostics.extend(r.diagnostics);
            }
            Err(e) => self.errors.push(format!("{label}: {e}")),
        }
    }

    fn finish(mut self, out: &mut Vec<SuiteReport>) {
        if !self.touched {
            return;
        }
        if !self.errors.is_empty() {
            self.report.error = Some(self.errors.join("; "));
            self.report.summary.errors = 1;
        }
        out.push(self.report);
    }
}

/// Every suite over the selected catalog entries.
pub fn run_all(config: &VerificationConfig) -> VerificationReport {
    let echo = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    let functions = match config.selected() {
        Ok(f) => f,
        Err(e) => return VerificationReport::from_suites(vec![SuiteReport::failed_with("catalog_selection", e)], echo),
    };
    let c = &config.constants;
    let mut suites = Vec::new();

    let mut s = Collector::new("local_expansion");
    for f in functions.iter().filter(|f| f.has_grad() && f.grad_lipschitz().is_some()) {
        s.add(
            f.id(),
            check_local_expansion(f, config.local_expansion_samples, config.r_ceiling, &config.spec(f.dim()), c),
        );
    }
    s.finish(&mut suites);

    let mut s = Collector::new("mollification");
    for f in functions.iter().filter(|f| f.dim() == 1) {
        for &t in &config.mollifier_scales {
            let r = Mollifier::new(1, t)
                .and_then(|phi| check_mollification(f, &phi, config.mollification_samples, &config.spec(1)));
            s.add(&format!("{} t={t}", f.id()), r);
        }
    }
    s.finish(&mut suites);

    let mut s = Collector::new("maximal_domination");
    for f in functions.iter().filter(|f| f.has_grad()) {
        s.add(f.id(), check_maximal_domination(f, config.maximal_samples, &config.spec(f.dim()), c));
    }
    s.finish(&mut suites);

    let mut s = Collector::new("bv_divergence");
    for f in functions.iter().filter(|f| f.dim() == 1 && f.smoothness_tag() == SmoothnessTag::Indicator) {
        let r = f.support_radius().unwrap_or(0.0);
        let center = f.support_center()[0];
        let result = BoxDomain::new(vec![center - 2.0 * r], vec![center + 2.0 * r]).and_then(|omega| {
            let domain = Domain::default_for(f, omega);
            check_bv_divergence(r, &config.bv_kappas, &domain, 1.0, c)
        });
        s.add(f.id(), result);
    }
    for f in functions.iter().filter(|f| f.dim() == 1 && f.smoothness_tag() == SmoothnessTag::SmoothCompactGradient) {
        s.add(f.id(), check_smooth_p1(f, &config.spec(1), &config.curve_options(), config.limit_tolerance));
    }
    s.finish(&mut suites);

    let mut s = Collector::new("tail_bounds");
    for f in functions.iter().filter(|f| f.support_radius().is_some()) {
        s.add(f.id(), check_tail_bounds(f, config.tail_samples, &config.spec(f.dim())));
    }
    s.finish(&mut suites);

    if !functions.is_empty() {
        let spec = QuadratureSpec::monte_carlo(config.mc_nodes, config.seed);
        let mut s = Collector::new("q_sandwich");
        s.add("catalog", check_q_sandwich(&functions, config.q_queries, &config.q_values, &spec));
        s.finish(&mut suites);
    }

    let mut s = Collector::new("distribution_closed_form");
    for f in functions.iter().filter(|f| f.grad_lipschitz() == Some(0.0) && f.dim() <= 2) {
        if f.grad_sup() == Some(0.0) {
            continue;
        }
        for &p in &config.closed_form_exponents {
            let result = BoxDomain::cube(f.dim(), 0.0, 1.0).and_then(|omega| {
                check_linear_distribution(f, p, &omega, &config.spec(f.dim()), &config.curve_options())
            });
            s.add(&format!("{} p={p}", f.id()), result);
        }
    }
    s.finish(&mut suites);

    let mut s = Collector::new("limit_theorem");
    for f in functions.iter().filter(|f| f.dim() == 1 && f.smoothness_tag() == SmoothnessTag::SmoothCompactGradient) {
        let opts = CurveOptions { samples: config.curve_samples.max(256), ..config.curve_options() };
        s.add(f.id(), check_limit(f, 2.0, config.limit_tolerance, &config.spec(1), &opts));
    }
    s.finish(&mut suites);

    VerificationReport::from_suites(suites, echo)
}
