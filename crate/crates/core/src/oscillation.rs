//! Mean oscillation on balls and the centered maximal function of `|∇f|`.
//!
//! `m_f^{(q)}(a,r) = (⨍_B |f - ⨍_B f|^q)^{1/q}` is computed in two passes. With
//! the Monte-Carlo rule the inner mean and the outer average use independent
//! node sets, both fixed in the ball's local frame. The error of the inner
//! mean is propagated to first order: `μ ↦ ‖f - μ‖_{L^q(B)}` is 1-Lipschitz,
//! and its slope is estimated from the outer nodes (plus one standard error
//! of that estimate, capped at 1).
//!
//! In d = 1 the deterministic rule splits the interval at the kinks of `f`
//! and at the roots of `f - μ`, so piecewise polynomial integrands are
//! integrated exactly for integer `q`.

use serde::{Deserialize, Serialize};

use crate::catalog::{ScalarField, TestFunction};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{
    ball_average_with_breaks, inner_nodes, integrate_adaptive, mean_and_stderr, outer_nodes, pieces, BallSample,
    EstimatedValue, GaussLegendre, Method, QuadratureSpec, UnitBallNodes,
};

/// Sub-samples per piece used to detect sign changes of `f - μ`.
const SIGN_PROBES: usize = 8;

/// A single oscillation query, as read from a CLI or config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationQuery {
    pub function_id: String,
    pub ball: BallSample,
    pub q: f64,
    pub spec: QuadratureSpec,
}

impl OscillationQuery {
    pub fn validate(&self) -> Result<()> {
        check_q(self.q)?;
        self.spec.validate(self.ball.dim())
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0 && q.is_finite()) {
        return invalid(format!("q must be a finite real >= 1, got {q}"));
    }
    Ok(())
}

/// Precomputed rule for repeated oscillation queries with one spec.
///
/// For the Monte-Carlo rule the node sets are drawn once, so successive calls
/// at different `(a, r)` see the same layout relative to the ball.
#[derive(Clone, Debug)]
pub struct OscillationRule {
    kind: RuleKind,
}

#[derive(Clone, Debug)]
enum RuleKind {
    Gauss(GaussLegendre),
    MonteCarlo { inner: UnitBallNodes, outer: UnitBallNodes },
}

impl OscillationRule {
    pub fn new(dim: usize, spec: &QuadratureSpec) -> Result<Self> {
        spec.validate(dim)?;
        let kind = match spec.method {
            Method::Gauss1d => RuleKind::Gauss(GaussLegendre::new(spec.node_count)),
            Method::MonteCarlo => RuleKind::MonteCarlo { inner: inner_nodes(dim, spec), outer: outer_nodes(dim, spec) },
        };
        Ok(Self { kind })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, RuleKind::Gauss(_))
    }

    /// `m_f^{(q)}(a, r)`.
    pub fn oscillation<F: ScalarField + ?Sized>(&self, f: &F, ball: &BallSample, q: f64) -> Result<EstimatedValue> {
        check_q(q)?;
        if f.constant_on_ball(&ball.center, ball.radius).is_some() {
            return Ok(EstimatedValue::exact(0.0));
        }
        match &self.kind {
            RuleKind::Gauss(rule) => {
                let kinks = f.kinks_1d();
                let v = oscillation_1d(rule, |x| f.value(&[x]), &kinks, ball.center[0], ball.radius, q)?;
                Ok(EstimatedValue::exact(v))
            }
            RuleKind::MonteCarlo { inner, outer } => {
                let g = |x: &[f64]| f.value(x);
                let (mu, se_mu) = mean_and_stderr(&inner.evaluate(ball, &g)?);
                let vals = outer.evaluate(ball, &g)?;
                Ok(centered_power_mean(&vals, mu, se_mu, q))
            }
        }
    }

    /// `tilde m_f^{(q)}(a, r) = (⨍⨍ |f(x) - f(y)|^q)^{1/q}`.
    pub fn pair_oscillation<F: ScalarField + ?Sized>(
        &self,
        f: &F,
        ball: &BallSample,
        q: f64,
    ) -> Result<EstimatedValue> {
        check_q(q)?;
        if f.constant_on_ball(&ball.center, ball.radius).is_some() {
            return Ok(EstimatedValue::exact(0.0));
        }
        match &self.kind {
            RuleKind::Gauss(rule) => {
                let kinks = f.kinks_1d();
                let v = pair_oscillation_1d(rule, |x| f.value(&[x]), &kinks, ball.center[0], ball.radius, q)?;
                Ok(EstimatedValue::exact(v))
            }
            RuleKind::MonteCarlo { inner, outer } => {
                let g = |x: &[f64]| f.value(x);
                let xs = inner.evaluate(ball, &g)?;
                let ys = outer.evaluate(ball, &g)?;
                let terms: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs().powf(q)).collect();
                let (t, se_t) = mean_and_stderr(&terms);
                Ok(power_root(t, se_t, q))
            }
        }
    }
}

/// `(T ± se)^{1/q}` by the delta method.
fn power_root(t: f64, se_t: f64, q: f64) -> EstimatedValue {
    if t <= 0.0 {
        return EstimatedValue { value: 0.0, std_error: if q == 1.0 { se_t } else { se_t.powf(1.0 / q) } };
    }
    let value = t.powf(1.0 / q);
    EstimatedValue { value, std_error: value / (q * t) * se_t }
}

/// Outer pass of the two-pass estimate given `μ` and its standard error.
fn centered_power_mean(vals: &[f64], mu: f64, se_mu: f64, q: f64) -> EstimatedValue {
    let n = vals.len() as f64;
    let terms: Vec<f64> = vals.iter().map(|v| (v - mu).abs().powf(q)).collect();
    let (t, se_t) = mean_and_stderr(&terms);
    let est = power_root(t, se_t, q);
    if t <= 0.0 {
        return EstimatedValue { value: 0.0, std_error: est.std_error + se_mu };
    }
    // d m / d μ = -(1/q) T^{1/q - 1} · q ⨍ |g|^{q-1} sgn g
    let slope_terms: Vec<f64> = vals
        .iter()
        .map(|v| {
            let g = v - mu;
            if g == 0.0 {
                0.0
            } else {
                g.signum() * g.abs().powf(q - 1.0)
            }
        })
        .collect();
    let (s, _) = mean_and_stderr(&slope_terms);
    let slope = (est.value / t * s).abs();
    let slope = (slope + 1.0 / n.sqrt()).min(1.0);
    EstimatedValue { value: est.value, std_error: est.std_error + slope * se_mu }
}

/// Roots of `g` on `[lo, hi]` located by sign probing and bisection.
fn roots_in(g: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let h = (hi - lo) / SIGN_PROBES as f64;
    let mut x0 = lo;
    let mut g0 = g(lo);
    for k in 1..=SIGN_PROBES {
        let x1 = if k == SIGN_PROBES { hi } else { lo + h * k as f64 };
        let g1 = g(x1);
        if g0 == 0.0 && k > 1 {
            out.push(x0);
        } else if g0 * g1 < 0.0 {
            out.push(bisect(g, x0, x1, g0));
        }
        x0 = x1;
        g0 = g1;
    }
    out
}

/// Root of `g` in `[lo, hi]` given a sign change; `g_lo = g(lo)`.
pub(crate) fn bisect(g: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, g_lo: f64) -> f64 {
    let s_lo = g_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn is_integer(q: f64) -> bool {
    q.fract() == 0.0
}

/// `∫_p^q |g|^e` on a piece where `g` has no sign change.
fn abs_pow_integral(rule: &GaussLegendre, g: &mut impl FnMut(f64) -> f64, p: f64, q: f64, e: f64) -> f64 {
    if is_integer(e) {
        let k = e as i32;
        rule.integrate(p, q, |x| g(x).abs().powi(k))
    } else {
        integrate_adaptive(|x| g(x).abs().powf(e), p, q, &[], 0.0, 1e-13).0
    }
}

/// `∫_{lo}^{hi} |g(x) - level|^e dx`, split at `kinks` and at the roots.
fn centered_integral(
    rule: &GaussLegendre,
    f: &mut impl FnMut(f64) -> f64,
    kinks: &[f64],
    lo: f64,
    hi: f64,
    level: f64,
    e: f64,
) -> f64 {
    let mut g = |x: f64| f(x) - level;
    let mut total = 0.0;
    for (p, q) in pieces(lo, hi, kinks) {
        let roots = roots_in(&mut g, p, q);
        let mut prev = p;
        for r in roots.into_iter().chain(std::iter::once(q)) {
            if r > prev {
                total += abs_pow_integral(rule, &mut g, prev, r, e);
            }
            prev = r;
        }
    }
    total
}

/// Deterministic `m^{(q)}` of a one-variable function on `(a - r, a + r)`.
pub fn oscillation_1d(
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> f64,
    kinks: &[f64],
    center: f64,
    radius: f64,
    q: f64,
) -> Result<f64> {
    let lo = center - radius;
    let hi = center + radius;
    let mut bad = None;
    let mut checked = |x: f64| {
        let v = f(x);
        if !v.is_finite() && bad.is_none() {
            bad = Some(Error::NonFinite { point: vec![x], value: v });
        }
        v
    };
    let mu =
        pieces(lo, hi, kinks).into_iter().map(|(p, q)| rule.integrate(p, q, &mut checked)).sum::<f64>() / (hi - lo);
    let t = centered_integral(rule, &mut checked, kinks, lo, hi, mu, q) / (hi - lo);
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(t.max(0.0).powf(1.0 / q))
}

/// Deterministic `tilde m^{(q)}` on `(a - r, a + r)` by a tensor rule.
pub fn pair_oscillation_1d(
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> f64,
    kinks: &[f64],
    center: f64,
    radius: f64,
    q: f64,
) -> Result<f64> {
    const OUTER_PANELS: usize = 4;
    let lo = center - radius;
    let hi = center + radius;
    let len = hi - lo;
    let mut total = 0.0;
    for (p, r) in pieces(lo, hi, kinks) {
        let h = (r - p) / OUTER_PANELS as f64;
        for k in 0..OUTER_PANELS {
            let a = p + h * k as f64;
            let b = if k + 1 == OUTER_PANELS { r } else { a + h };
            let nodes: Vec<(f64, f64)> = rule.mapped(a, b).collect();
            for (x, w) in nodes {
                let fx = f(x);
                if !fx.is_finite() {
                    return Err(Error::NonFinite { point: vec![x], value: fx });
                }
                total += w * centered_integral(rule, &mut f, kinks, lo, hi, fx, q);
            }
        }
    }
    let t = total / (len * len);
    Ok(t.max(0.0).powf(1.0 / q))
}

/// `m_f(a, r)` for the indicator of `[c - R, c + R]`: `2λ(1 - λ)` with `λ`
/// the fraction of `(a - r, a + r)` covered by the interval.
pub fn interval_indicator_oscillation(half_width: f64, center: f64, a: f64, r: f64) -> f64 {
    let lam = interval_overlap_fraction(half_width, center, a, r);
    2.0 * lam * (1.0 - lam)
}

pub fn interval_overlap_fraction(half_width: f64, center: f64, a: f64, r: f64) -> f64 {
    let lo = (a - r).max(center - half_width);
    let hi = (a + r).min(center + half_width);
    ((hi - lo).max(0.0) / (2.0 * r)).min(1.0)
}

/// `m_f(a, r)` (plain mean oscillation, `q = 1`).
pub fn mean_oscillation<F: ScalarField + ?Sized>(
    f: &F,
    ball: &BallSample,
    spec: &QuadratureSpec,
) -> Result<EstimatedValue> {
    OscillationRule::new(ball.dim(), spec)?.oscillation(f, ball, 1.0)
}

/// `m_f^{(q)}(a, r)`.
pub fn q_oscillation<F: ScalarField + ?Sized>(
    f: &F,
    ball: &BallSample,
    q: f64,
    spec: &QuadratureSpec,
) -> Result<EstimatedValue> {
    OscillationRule::new(ball.dim(), spec)?.oscillation(f, ball, q)
}

/// `tilde m_f^{(q)}(a, r)`.
pub fn pair_oscillation<F: ScalarField + ?Sized>(
    f: &F,
    ball: &BallSample,
    q: f64,
    spec: &QuadratureSpec,
) -> Result<EstimatedValue> {
    OscillationRule::new(ball.dim(), spec)?.pair_oscillation(f, ball, q)
}

/// Geometric grid of radii `r_lo · ratio^k` up to `r_hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    pub r_lo: f64,
    pub r_hi: f64,
    pub ratio: f64,
}

impl RadiusGrid {
    /// `[1e-3, 1e2] · scale` with ratio 1.05.
    pub fn default_for(scale: f64) -> Self {
        Self { r_lo: 1e-3 * scale, r_hi: 1e2 * scale, ratio: 1.05 }
    }

    pub fn radii(&self) -> Result<Vec<f64>> {
        if !(self.r_lo > 0.0 && self.r_hi > self.r_lo && self.ratio > 1.0) {
            return invalid(format!("invalid radius grid {self:?}"));
        }
        let n = ((self.r_hi / self.r_lo).ln() / self.ratio.ln()).ceil() as usize;
        let step = (self.r_hi / self.r_lo).ln() / n as f64;
        Ok((0..=n).map(|k| self.r_lo * (step * k as f64).exp()).collect())
    }
}

/// Grid approximation of `M|∇f|(a) = sup_r ⨍_{B_r(a)} |∇f|`.
///
/// Includes the `r → 0` limit `|∇f(a)|`. With the deterministic rule the
/// result is a lower bound of the true supremum; the grid bias is controlled
/// by the modulus of continuity of `r ↦ ⨍_{B_r(a)} |∇f|` over one grid step.
pub fn maximal_gradient(f: &TestFunction, a: &[f64], grid: &RadiusGrid, spec: &QuadratureSpec) -> Result<f64> {
    if !f.has_grad() {
        return Err(Error::NoGradient(f.id().to_string()));
    }
    let d = f.dim();
    spec.validate(d)?;
    let g = |x: &[f64]| f.grad_norm(x).unwrap_or(0.0);
    let mut best = g(a);
    let kinks = f.kinks_1d();
    for r in grid.radii()? {
        let ball = BallSample::new(a.to_vec(), r)?;
        let v = ball_average_with_breaks(&g, &ball, spec, &kinks)?;
        best = best.max(v.value);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::BallSample;

    fn ball1(a: f64, r: f64) -> BallSample {
        BallSample::new(vec![a], r).unwrap()
    }

    #[test]
    fn constant_has_zero_oscillation() {
        let f = TestFunction::constant(2, 3.0).unwrap();
        let b = BallSample::new(vec![0.1, 0.2], 0.7).unwrap();
        let spec = QuadratureSpec::monte_carlo(512, 1);
        for q in [1.0, 2.0, 3.5] {
            assert_eq!(q_oscillation(&f, &b, q, &spec).unwrap(), EstimatedValue::exact(0.0));
            assert_eq!(pair_oscillation(&f, &b, q, &spec).unwrap().value, 0.0);
        }
    }

    #[test]
    fn linear_d1_values() {
        let f = TestFunction::linear(1, vec![1.0]).unwrap();
        let spec = QuadratureSpec::gauss(8);
        for a in [-3.0, 0.0, 0.4, 10.0] {
            for r in [0.1, 1.0, 2.5] {
                let b = ball1(a, r);
                let m = mean_oscillation(&f, &b, &spec).unwrap();
                assert!((m.value - 0.5 * r).abs() <= 1e-12 * r, "a={a} r={r} m={}", m.value);
                let m2 = q_oscillation(&f, &b, 2.0, &spec).unwrap();
                assert!((m2.value - r / 3f64.sqrt()).abs() <= 1e-12 * r);
                let p1 = pair_oscillation(&f, &b, 1.0, &spec).unwrap();
                assert!((p1.value - 2.0 * r / 3.0).abs() <= 1e-12 * r, "{}", p1.value);
                let p2 = pair_oscillation(&f, &b, 2.0, &spec).unwrap();
                assert!((p2.value - r * (2.0f64 / 3.0).sqrt()).abs() <= 1e-12 * r);
            }
        }
    }

    #[test]
    fn indicator_d1_matches_closed_form() {
        // indicator of [0, 1]: center 0.5, half width 0.5; ball (-0.5, 0.5) → λ = 1/2.
        let f = TestFunction::ball_indicator_at(1, 0.5, vec![0.5]).unwrap();
        let m = mean_oscillation(&f, &ball1(0.0, 0.5), &QuadratureSpec::gauss(4)).unwrap();
        assert!((m.value - 0.5).abs() < 1e-14);
        for (a, r) in [(0.2, 0.1), (0.9, 0.3), (-0.3, 2.0), (1.7, 0.4), (0.5, 0.5)] {
            let m = mean_oscillation(&f, &ball1(a, r), &QuadratureSpec::gauss(4)).unwrap();
            let c = interval_indicator_oscillation(0.5, 0.5, a, r);
            assert!((m.value - c).abs() < 1e-13, "a={a} r={r}: {} vs {c}", m.value);
        }
    }

    #[test]
    fn q_equal_one_is_mean_oscillation() {
        let f = TestFunction::plateau(2, 1.0, 0.5, 1.0).unwrap();
        let b = BallSample::new(vec![0.6, 0.1], 0.3).unwrap();
        let spec = QuadratureSpec::monte_carlo(2000, 5);
        assert_eq!(mean_oscillation(&f, &b, &spec).unwrap(), q_oscillation(&f, &b, 1.0, &spec).unwrap());
    }

    #[test]
    fn invalid_q_is_rejected() {
        let f = TestFunction::linear(1, vec![1.0]).unwrap();
        assert!(q_oscillation(&f, &ball1(0.0, 1.0), 0.5, &QuadratureSpec::gauss(4)).is_err());
        assert!(pair_oscillation(&f, &ball1(0.0, 1.0), f64::NAN, &QuadratureSpec::gauss(4)).is_err());
    }

    #[test]
    fn mc_linear_matches_constant_within_error() {
        // c'_2 = 4 / (3π)
        let f = TestFunction::linear(2, vec![3.0, 4.0]).unwrap();
        let b = BallSample::new(vec![0.3, -0.2], 0.5).unwrap();
        let m = mean_oscillation(&f, &b, &QuadratureSpec::monte_carlo(100_000, 17)).unwrap();
        let exact = 4.0 / (3.0 * std::f64::consts::PI) * 0.5 * 5.0;
        assert!((m.value - exact).abs() <= 4.0 * m.std_error, "{m} vs {exact}");
    }

    #[test]
    fn translation_and_scaling_covariance_with_fixed_layouts() {
        let spec = QuadratureSpec::monte_carlo(4096, 99);
        let f = TestFunction::plateau(2, 1.0, 0.5, 1.0).unwrap();
        let h = [0.37, -1.25];
        let g = TestFunction::plateau_at(2, 1.0, 0.5, 1.0, h.to_vec()).unwrap();
        let two = TestFunction::plateau(2, 2.5, 0.5, 1.0).unwrap();
        let rule = OscillationRule::new(2, &spec).unwrap();
        for (a, r) in [([0.6, 0.2], 0.3), ([0.0, 0.9], 0.05), ([1.1, 0.0], 0.4)] {
            let base = rule.oscillation(&f, &BallSample::new(a.to_vec(), r).unwrap(), 1.0).unwrap();
            let shifted =
                rule.oscillation(&g, &BallSample::new(vec![a[0] + h[0], a[1] + h[1]], r).unwrap(), 1.0).unwrap();
            assert!((base.value - shifted.value).abs() <= 1e-12 * base.value.max(1e-300));
            let scaled = rule.oscillation(&two, &BallSample::new(a.to_vec(), r).unwrap(), 1.0).unwrap();
            assert!((scaled.value - 2.5 * base.value).abs() <= 1e-12 * scaled.value);
        }
    }

    #[test]
    fn maximal_gradient_simple_cases() {
        let spec = QuadratureSpec::monte_carlo(256, 1);
        let f = TestFunction::linear(3, vec![1.0, 2.0, 2.0]).unwrap();
        let m = maximal_gradient(&f, &[0.0, 0.0, 0.0], &RadiusGrid::default_for(1.0), &spec).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
        let c = TestFunction::constant(1, 4.0).unwrap();
        let m = maximal_gradient(&c, &[0.0], &RadiusGrid::default_for(1.0), &QuadratureSpec::gauss(8)).unwrap();
        assert_eq!(m, 0.0);
        let ind = TestFunction::ball_indicator(1, 1.0).unwrap();
        assert!(matches!(
            maximal_gradient(&ind, &[0.0], &RadiusGrid::default_for(1.0), &QuadratureSpec::gauss(8)),
            Err(Error::NoGradient(_))
        ));
    }

    #[test]
    fn maximal_gradient_plateau_matches_finer_grid() {
        let f = TestFunction::plateau(1, 1.0, 0.5, 1.0).unwrap();
        let spec = QuadratureSpec::gauss(8);
        let coarse = maximal_gradient(&f, &[0.0], &RadiusGrid::default_for(1.0), &spec).unwrap();
        let fine = maximal_gradient(&f, &[0.0], &RadiusGrid { r_lo: 1e-3, r_hi: 1e2, ratio: 1.005 }, &spec).unwrap();
        assert!(coarse <= fine + 1e-15);
        assert!((fine - coarse) <= 0.01 * fine, "coarse={coarse} fine={fine}");
        // for 1/2 < r < 1 the average is taper(2r - 1) / r
        let oracle = (0..=200_000)
            .map(|k| {
                let t = k as f64 / 200_000.0;
                (10.0 * t.powi(3) - 15.0 * t.powi(4) + 6.0 * t.powi(5)) / (0.5 + 0.5 * t)
            })
            .fold(0.0_f64, f64::max);
        assert!((fine - oracle).abs() < 1e-4 * oracle, "{fine} vs {oracle}");
    }

    #[test]
    fn radius_grid_endpoints() {
        let r = RadiusGrid { r_lo: 0.01, r_hi: 10.0, ratio: 1.1 }.radii().unwrap();
        assert!((r[0] - 0.01).abs() < 1e-18);
        assert!((r.last().unwrap() - 10.0).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[1] / w[0] <= 1.1 + 1e-12));
        assert!(RadiusGrid { r_lo: 1.0, r_hi: 0.5, ratio: 1.1 }.radii().is_err());
    }
}
