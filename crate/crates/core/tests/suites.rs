use osclab::oscillation::mean_oscillation;
use osclab::verification::{check_local_expansion, maximal_ratio, run_all, VerificationConfig};
use osclab::weak_norm::{c_d_prime, Constants, Fault};
use osclab::{BallSample, QuadratureSpec, TestFunction};

#[test]
fn local_expansion_d2_with_large_monte_carlo() {
    let f = TestFunction::plateau(2, 1.0, 0.5, 1.0).unwrap();
    let r =
        check_local_expansion(&f, 20, 0.05, &QuadratureSpec::monte_carlo(200_000, 11), &Constants::default()).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    // at this node count the noise no longer hides the second-order term
    for c in &r.cases {
        if let Some(se) = c.inputs.get("std_error").and_then(|v| v.as_f64()) {
            assert!(se < 2e-3 * c.inputs["m"].as_f64().unwrap().max(1e-3), "{}", c.inputs);
        }
    }
}

#[test]
fn maximal_ratio_is_stable_under_sample_doubling() {
    for f in ["plateau:d=1:a=1:ri=0.5:ro=1", "plateau:d=2:a=1:ri=0.5:ro=1"] {
        let f: TestFunction = f.parse().unwrap();
        let spec = QuadratureSpec::auto(f.dim(), 2048, 5);
        let a = maximal_ratio(&f, 100, &spec).unwrap();
        let b = maximal_ratio(&f, 200, &spec).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!((b / a - 1.0).abs() <= 0.10, "{}: {a} vs {b}", f.id());
    }
}

#[test]
fn monte_carlo_error_bars_are_honest_on_linear_functions() {
    let f = TestFunction::linear(2, vec![1.0, 0.0]).unwrap();
    let ball = BallSample::new(vec![0.2, 0.7], 0.3).unwrap();
    let exact = c_d_prime(2) * 0.3;
    let covered = (0..500u64)
        .filter(|&seed| {
            let m = mean_oscillation(&f, &ball, &QuadratureSpec::monte_carlo(1024, seed)).unwrap();
            (m.value - exact).abs() <= 4.0 * m.std_error
        })
        .count();
    assert!(covered >= 475, "{covered} / 500");
}

fn small_config() -> VerificationConfig {
    VerificationConfig {
        functions: Some(vec!["linear:d=1:v=1".into(), "plateau:d=1:a=1:ri=0.5:ro=1".into(), "linear:d=2:v=1,0".into()]),
        mc_nodes: 1024,
        local_expansion_samples: 40,
        mollification_samples: 8,
        maximal_samples: 10,
        tail_samples: 10,
        q_queries: 20,
        curve_samples: 32,
        ..VerificationConfig::default()
    }
}

#[test]
fn report_is_identical_across_thread_counts() {
    let c = small_config();
    let run = |n| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        serde_json::to_string(&pool.install(|| run_all(&c))).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(3));
    let report: osclab::verification::VerificationReport = serde_json::from_str(&one).unwrap();
    assert!(report.passed, "{}", report.render_text());
}

#[test]
fn every_fault_flips_a_suite() {
    for fault in [Fault::CdPrime, Fault::WeightExponent, Fault::ExpansionConstant] {
        let c = VerificationConfig { constants: Constants::with_fault(fault, 1.05), ..small_config() };
        let report = run_all(&c);
        assert!(!report.passed, "{fault:?} went unnoticed");
    }
    let c = VerificationConfig { constants: Constants::with_fault(Fault::CdPrime, 0.95), ..small_config() };
    let report = run_all(&c);
    assert!(!report.suite("local_expansion").unwrap().passed());
}

#[test]
fn empty_selection_gives_an_empty_report() {
    let c = VerificationConfig { functions: Some(Vec::new()), ..VerificationConfig::default() };
    let r = run_all(&c);
    assert!(r.suites.is_empty());
    assert_eq!(r.summary.total, 0);
    assert!(r.passed);
}

#[test]
fn unknown_function_is_reported_not_raised() {
    let c = VerificationConfig { functions: Some(vec!["spline:d=1".into()]), ..VerificationConfig::default() };
    let r = run_all(&c);
    assert!(!r.passed);
    assert!(r.suites[0].error.is_some());
}
