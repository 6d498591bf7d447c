//! Superlevel statistics of `m_f` under `dν_p = da dr / r^{p+1}`.
//!
//! For every sampled center `a ∈ ω` the radius axis is scanned on a
//! log-spaced grid, the superlevel set `{r : m_f(a, r) > κ}` is assembled
//! from the sign changes (refined by bisection) and weighted in closed form,
//! `∫_{lo}^{hi} r^{-p-1} dr = (lo^{-p} - hi^{-p}) / p`. The node layout at a
//! given `a` is fixed across radii and across the whole κ-grid, so the
//! estimated superlevel sets are nested in κ.
//!
//! Below `r_min` the crossing of a smooth entry is bracketed by the local
//! expansion `|m_f(a,r) - c'_d r |∇f(a)|| ≤ (3d/(d+2)) A r²`; above `r_max`
//! the missing mass is bounded by the tail estimate `m_f ≤ γ r^{-d}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::catalog::TestFunction;
use crate::error::{invalid, Error, Result};
use crate::oscillation::OscillationRule;
use crate::quadrature::{
    mean_and_stderr, pairwise_sum, unit_ball_volume, BallSample, EstimatedValue, GaussLegendre, Method, QuadratureSpec,
};
use crate::rng::{derive_seed, rng_for, stream};

/// `c'_d = π^{-1/2} Γ((d+2)/2) / Γ((d+3)/2)`, the slope of `m_f` in `r` for
/// smooth `f`.
pub fn c_d_prime(d: usize) -> f64 {
    let d = d as f64;
    (ln_gamma(0.5 * (d + 2.0)) - ln_gamma(0.5 * (d + 3.0))).exp() / PI.sqrt()
}

/// `c_{d,p} = p^{-1} (c'_d)^p`.
pub fn c_dp(d: usize, p: f64) -> f64 {
    c_d_prime(d).powf(p) / p
}

/// `3d / (d + 2)`, the constant in the second-order remainder of the local
/// expansion.
pub fn expansion_constant(d: usize) -> f64 {
    3.0 * d as f64 / (d as f64 + 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    CdPrime,
    WeightExponent,
    ExpansionConstant,
}

impl std::str::FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c-d-prime" | "cd-prime" | "c_d_prime" => Ok(Fault::CdPrime),
            "weight-exponent" | "weight_exponent" => Ok(Fault::WeightExponent),
            "expansion-constant" | "expansion_constant" => Ok(Fault::ExpansionConstant),
            other => invalid(format!("unknown fault `{other}`")),
        }
    }
}

/// The proved constants as used by the numerical code, with optional fault
/// injection. `Constants::default()` is exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_d_prime_factor: f64,
    pub weight_exponent_factor: f64,
    pub expansion_constant_factor: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { c_d_prime_factor: 1.0, weight_exponent_factor: 1.0, expansion_constant_factor: 1.0 }
    }
}

impl Constants {
    pub fn with_fault(fault: Fault, factor: f64) -> Self {
        let mut c = Self::default();
        match fault {
            Fault::CdPrime => c.c_d_prime_factor = factor,
            Fault::WeightExponent => c.weight_exponent_factor = factor,
            Fault::ExpansionConstant => c.expansion_constant_factor = factor,
        }
        c
    }

    pub fn is_exact(&self) -> bool {
        *self == Self::default()
    }

    pub fn c_d_prime(&self, d: usize) -> f64 {
        c_d_prime(d) * self.c_d_prime_factor
    }

    pub fn c_dp(&self, d: usize, p: f64) -> f64 {
        self.c_d_prime(d).powf(p) / p
    }

    /// Exponent `e` of the radial weight `r^{-e}`; `p + 1` when exact.
    pub fn weight_exponent(&self, p: f64) -> f64 {
        (p + 1.0) * self.weight_exponent_factor
    }

    pub fn expansion_constant(&self, d: usize) -> f64 {
        expansion_constant(d) * self.expansion_constant_factor
    }

    /// `∫_{lo}^{hi} r^{-e} dr`.
    pub fn radial_weight(&self, p: f64, lo: f64, hi: f64) -> f64 {
        let k = self.weight_exponent(p) - 1.0;
        if hi <= lo {
            return 0.0;
        }
        if k.abs() < 1e-14 {
            return (hi / lo).ln();
        }
        if hi.is_infinite() {
            return lo.powf(-k) / k;
        }
        (lo.powf(-k) - hi.powf(-k)) / k
    }
}

/// Axis-aligned box `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return invalid("box bounds must be nonempty and of equal length");
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return invalid(format!("box must satisfy lo < hi on every axis, got {lo:?} / {hi:?}"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }

    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        self.lo.iter().zip(&self.hi).zip(center).all(|((l, h), c)| c - radius >= *l && c + radius <= *h)
    }

    /// The point with unit-cube coordinates `u`.
    pub fn map_unit(&self, u: &[f64]) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).zip(u).map(|((l, h), t)| l + (h - l) * t).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { lo: self.lo.iter().map(|x| x * s).collect(), hi: self.hi.iter().map(|x| x * s).collect() }
    }
}

/// `ω × [r_min, r_max]`, with `r_min` the floor under which the small-radius
/// asymptotics take over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub omega: BoxDomain,
    pub r_min: f64,
    pub r_max: f64,
}

impl Domain {
    pub fn new(omega: BoxDomain, r_min: f64, r_max: f64) -> Result<Self> {
        let d = Self { omega, r_min, r_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return invalid(format!("need 0 < r_min < r_max, got r_min={} r_max={}", self.r_min, self.r_max));
        }
        BoxDomain::new(self.omega.lo.clone(), self.omega.hi.clone()).map(|_| ())
    }

    /// `r_max = 10 (diam ω + R_0)`, `r_min = 1e-4 · feature scale`.
    pub fn default_for(f: &TestFunction, omega: BoxDomain) -> Self {
        let diam = omega.diameter();
        let r_max = 10.0 * (diam + f.support_radius().unwrap_or(0.0));
        let r_min = 1e-4 * f.feature_scale().unwrap_or(diam).min(diam);
        Self { omega, r_min, r_max }
    }

    /// Default box: `[-1.2 R_0, 1.2 R_0]^d` around the support, or the unit
    /// box for entries without one.
    pub fn default_omega(f: &TestFunction) -> BoxDomain {
        let d = f.dim();
        match f.support_radius() {
            Some(r0) => {
                let c = f.support_center();
                BoxDomain::new(c.iter().map(|x| x - 1.2 * r0).collect(), c.iter().map(|x| x + 1.2 * r0).collect())
                    .expect("positive support radius")
            }
            None => BoxDomain::cube(d, 0.0, 1.0).expect("unit box"),
        }
    }
}

/// Geometric κ-grid, listed in decreasing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaGrid {
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
}

impl KappaGrid {
    pub const DEFAULT_RATIO: f64 = 1.778_279_410_038_922_8; // 10^{1/4}

    /// `[1e-4, 1] · c'_d · r_typ · sup|∇f|` with ratio `10^{1/4}`.
    pub fn default_for(f: &TestFunction) -> Self {
        let scale = c_d_prime(f.dim()) * f.feature_scale().unwrap_or(1.0) * f.grad_sup().unwrap_or(1.0);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Self { min: 1e-4 * scale, max: scale, ratio: Self::DEFAULT_RATIO }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max > self.min && self.ratio > 1.0) {
            return invalid(format!("invalid κ-grid {self:?}"));
        }
        let n = ((self.max / self.min).ln() / self.ratio.ln()).round().max(1.0) as usize;
        let step = (self.max / self.min).ln() / n as f64;
        Ok((0..=n).map(|k| self.max * (-step * k as f64).exp()).collect())
    }
}

/// A maximal interval of radii on which `m_f(a, ·) > κ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusInterval {
    pub lo: f64,
    pub hi: f64,
    /// The quadrature noise at one of the endpoints exceeds what the local
    /// slope can resolve within one scan step.
    pub flagged: bool,
    /// Uncertainty of the endpoints induced by quadrature noise (absolute,
    /// in units of r); zero unless flagged.
    pub lo_uncertainty: f64,
    pub hi_uncertainty: f64,
}

/// Knobs of the superlevel computations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    /// Number of centers `a` sampled in ω.
    pub samples: usize,
    /// Jittered stratification of the centers (two per cell).
    pub stratified: bool,
    /// Ratio of the log-spaced radius scan.
    pub scan_ratio: f64,
    /// Relative tolerance of the crossing bisection.
    pub bisection_rel_tol: f64,
    pub constants: Constants,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            samples: 4096,
            stratified: true,
            scan_ratio: 1.02,
            bisection_rel_tol: 1e-6,
            constants: Constants::default(),
        }
    }
}

impl CurveOptions {
    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return invalid("need at least two a-samples");
        }
        if !(self.scan_ratio > 1.0 && self.scan_ratio <= 1.02) {
            return invalid(format!("scan ratio must lie in (1, 1.02], got {}", self.scan_ratio));
        }
        if !(self.bisection_rel_tol > 0.0 && self.bisection_rel_tol < 1e-2) {
            return invalid("bisection tolerance must lie in (0, 1e-2)");
        }
        Ok(())
    }
}

/// `m_f(a, ·)` sampled on the scan grid with one fixed node layout.
struct RadialScan<'a> {
    f: &'a TestFunction,
    rule: OscillationRule,
    center: Vec<f64>,
    radii: Vec<f64>,
    values: Vec<EstimatedValue>,
    /// `(c'_d |∇f(a)|, (3d/(d+2)) A)` for entries with a Lipschitz gradient.
    linearization: Option<(f64, f64)>,
}

impl<'a> RadialScan<'a> {
    fn new(
        f: &'a TestFunction,
        center: Vec<f64>,
        domain: &Domain,
        spec: &QuadratureSpec,
        opts: &CurveOptions,
    ) -> Result<Self> {
        let rule = OscillationRule::new(f.dim(), spec)?;
        let span = (domain.r_max / domain.r_min).ln();
        let n = (span / opts.scan_ratio.ln()).ceil() as usize;
        let step = span / n as f64;
        let radii: Vec<f64> =
            (0..=n).map(|k| if k == n { domain.r_max } else { domain.r_min * (step * k as f64).exp() }).collect();
        let linearization = match (f.grad_norm(&center), f.grad_lipschitz()) {
            (Some(g), Some(a)) => {
                let c = &opts.constants;
                Some((c.c_d_prime(f.dim()) * g, c.expansion_constant(f.dim()) * a))
            }
            _ => None,
        };
        let mut scan = Self { f, rule, center, radii, values: Vec::new(), linearization };
        scan.values = scan.radii.iter().map(|r| scan.eval(*r)).collect::<Result<_>>()?;
        Ok(scan)
    }

    fn eval(&self, r: f64) -> Result<EstimatedValue> {
        let ball = BallSample { center: self.center.clone(), radius: r };
        self.rule.oscillation(self.f, &ball, 1.0)
    }

    /// Crossing of level κ inside `[lo, hi]`, where `m(lo) ≤ κ < m(hi)` or the
    /// reverse. Returns the crossing and its noise-induced uncertainty.
    fn refine(&self, kappa: f64, mut lo: f64, mut hi: f64, rising: bool, tol: f64) -> Result<(f64, EstimatedValue)> {
        let mut at = self.eval(hi)?;
        while hi / lo - 1.0 > tol {
            let mid = (lo * hi).sqrt();
            let m = self.eval(mid)?;
            if (m.value > kappa) == rising {
                hi = mid;
                at = m;
            } else {
                lo = mid;
            }
        }
        Ok(((lo * hi).sqrt(), at))
    }

    /// `None` if the crossing is resolved; otherwise the uncertainty in r.
    fn ambiguity(&self, at: EstimatedValue, r: f64, slope: f64, cell: f64) -> Option<f64> {
        if at.std_error == 0.0 {
            return None;
        }
        let dr = if slope.abs() > 0.0 { at.std_error / slope.abs() } else { f64::INFINITY };
        (dr > cell).then_some(dr.min(r))
    }

    /// Lower end of an interval that is already open at `r_min`.
    fn below_floor(&self, kappa: f64, tol: f64) -> Result<(f64, bool)> {
        let r0 = self.radii[0];
        let mut start = match self.linearization {
            Some((slope, curv)) => {
                // positive root of curv r^2 + slope r - κ: a certified lower
                // bound for the crossing of the true m_f
                let disc = (slope * slope + 4.0 * curv * kappa).sqrt();
                let r_plus = if slope + disc > 0.0 { 2.0 * kappa / (slope + disc) } else { r0 };
                (0.5 * r_plus).min(0.5 * r0)
            }
            None => 0.5 * r0,
        };
        let mut m = self.eval(start)?;
        let mut halvings = 0;
        while m.value > kappa {
            halvings += 1;
            if halvings > 60 {
                return Ok((start, true));
            }
            start *= 0.5;
            m = self.eval(start)?;
        }
        let (r, _) = self.refine(kappa, start, r0, true, tol)?;
        // the bracket came from the quadrature alone when the certified bound
        // was violated by noise
        let flagged = match self.linearization {
            Some(_) => halvings > 0,
            None => false,
        };
        Ok((r, flagged))
    }

    fn intervals(&self, kappa: f64, opts: &CurveOptions) -> Result<Vec<RadiusInterval>> {
        let tol = opts.bisection_rel_tol;
        let n = self.radii.len();
        let above: Vec<bool> = self.values.iter().map(|m| m.value > kappa).collect();
        let mut out = Vec::new();
        let mut k = 0;
        while k < n {
            if !above[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k + 1 < n && above[k + 1] {
                k += 1;
            }
            let end = k;
            let mut iv = RadiusInterval { lo: 0.0, hi: 0.0, flagged: false, lo_uncertainty: 0.0, hi_uncertainty: 0.0 };
            if start == 0 {
                let (lo, flagged) = self.below_floor(kappa, tol)?;
                iv.lo = lo;
                iv.flagged |= flagged;
            } else {
                let (a, b) = (self.radii[start - 1], self.radii[start]);
                let (r, at) = self.refine(kappa, a, b, true, tol)?;
                let slope = (self.values[start].value - self.values[start - 1].value) / (b - a);
                if let Some(dr) = self.ambiguity(at, r, slope, b - a) {
                    iv.flagged = true;
                    iv.lo_uncertainty = dr;
                }
                iv.lo = r;
            }
            if end + 1 == n {
                iv.hi = self.radii[n - 1];
            } else {
                let (a, b) = (self.radii[end], self.radii[end + 1]);
                let (r, at) = self.refine(kappa, a, b, false, tol)?;
                let slope = (self.values[end + 1].value - self.values[end].value) / (b - a);
                if let Some(dr) = self.ambiguity(at, r, slope, b - a) {
                    iv.flagged = true;
                    iv.hi_uncertainty = dr;
                }
                iv.hi = r;
            }
            out.push(iv);
            k += 1;
        }
        Ok(out)
    }
}

/// Weighted mass of a set of intervals, with the uncertainty from flagged
/// endpoints.
fn interval_weight(constants: &Constants, p: f64, ivs: &[RadiusInterval]) -> (f64, f64) {
    let e = constants.weight_exponent(p);
    let mut w = 0.0;
    let mut u = 0.0;
    for iv in ivs {
        w += constants.radial_weight(p, iv.lo, iv.hi);
        u += iv.lo.powf(-e) * iv.lo_uncertainty + iv.hi.powf(-e) * iv.hi_uncertainty;
    }
    (w, u)
}

/// `{r ∈ (0, r_max] : m_f(a, r) > κ}` as disjoint intervals.
pub fn superlevel_radius_set(
    f: &TestFunction,
    a: &[f64],
    kappa: f64,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Result<Vec<RadiusInterval>> {
    superlevel_radius_set_with(f, a, kappa, domain, spec, &CurveOptions::default())
}

pub fn superlevel_radius_set_with(
    f: &TestFunction,
    a: &[f64],
    kappa: f64,
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &CurveOptions,
) -> Result<Vec<RadiusInterval>> {
    if !(kappa > 0.0) {
        return invalid(format!("κ must be positive, got {kappa}"));
    }
    domain.validate()?;
    opts.validate()?;
    if a.len() != f.dim() {
        return invalid("center has the wrong dimension");
    }
    RadialScan::new(f, a.to_vec(), domain, spec, opts)?.intervals(kappa, opts)
}

/// `ν_p(ω × (r_max, ∞) ∩ {m_f > κ})` is at most this.
pub fn tail_bound(f: &TestFunction, p: f64, kappa: f64, domain: &Domain) -> f64 {
    let vol = domain.omega.volume();
    let d = f.dim() as f64;
    let all = vol * domain.r_max.powf(-p) / p;
    match tail_gamma(f) {
        Some(gamma) => {
            let r_gamma = (gamma / kappa).powf(1.0 / d);
            if r_gamma <= domain.r_max {
                0.0
            } else {
                vol * (domain.r_max.powf(-p) - r_gamma.powf(-p)) / p
            }
        }
        None => all,
    }
}

/// `γ = 2 ‖f - f_∞‖_{L¹} / |B_1|`, so that `m_f(a, r) ≤ γ r^{-d}`.
pub fn tail_gamma(f: &TestFunction) -> Option<f64> {
    f.far_field_l1().map(|l1| 2.0 * l1 / unit_ball_volume(f.dim()))
}

/// Centers sampled in ω, with the stratum each belongs to.
fn sample_centers(omega: &BoxDomain, opts: &CurveOptions, seed: u64) -> (Vec<Vec<f64>>, Option<usize>) {
    use rand::Rng;
    let d = omega.dim();
    if opts.stratified {
        let per_axis = ((opts.samples as f64 / 2.0).powf(1.0 / d as f64).floor() as usize).max(1);
        let cells = per_axis.pow(d as u32);
        let mut pts = Vec::with_capacity(2 * cells);
        for c in 0..cells {
            let mut idx = Vec::with_capacity(d);
            let mut rem = c;
            for _ in 0..d {
                idx.push(rem % per_axis);
                rem /= per_axis;
            }
            for j in 0..2 {
                let mut rng = rng_for(seed, stream::A_SAMPLES, (2 * c + j) as u64);
                let u: Vec<f64> = idx.iter().map(|i| (*i as f64 + rng.random::<f64>()) / per_axis as f64).collect();
                pts.push(omega.map_unit(&u));
            }
        }
        (pts, Some(cells))
    } else {
        let pts = (0..opts.samples)
            .map(|i| {
                let mut rng = rng_for(seed, stream::A_SAMPLES, i as u64);
                let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                omega.map_unit(&u)
            })
            .collect();
        (pts, None)
    }
}

/// `|ω| · mean(w)` and its standard error.
fn estimate_over_omega(weights: &[f64], volume: f64, strata: Option<usize>) -> EstimatedValue {
    match strata {
        Some(h) => {
            let means: Vec<f64> = weights.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect();
            let var_terms: Vec<f64> = weights.chunks_exact(2).map(|c| 0.25 * (c[0] - c[1]).powi(2)).collect();
            let hf = h as f64;
            EstimatedValue {
                value: volume * pairwise_sum(&means) / hf,
                std_error: volume * pairwise_sum(&var_terms).sqrt() / hf,
            }
        }
        None => {
            let (m, se) = mean_and_stderr(weights);
            EstimatedValue { value: volume * m, std_error: volume * se }
        }
    }
}

/// Per-center weights for every κ, computed with one radial scan per center.
struct CenterWeights {
    weights: Vec<f64>,
    uncertainty: Vec<f64>,
    flagged: Vec<usize>,
}

fn center_weights(
    f: &TestFunction,
    p: f64,
    kappas: &[f64],
    center: Vec<f64>,
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &CurveOptions,
) -> Result<CenterWeights> {
    let scan = RadialScan::new(f, center, domain, spec, opts)?;
    let mut out = CenterWeights { weights: Vec::new(), uncertainty: Vec::new(), flagged: Vec::new() };
    for &kappa in kappas {
        let ivs = scan.intervals(kappa, opts)?;
        let (w, u) = interval_weight(&opts.constants, p, &ivs);
        out.weights.push(w);
        out.uncertainty.push(u);
        out.flagged.push(ivs.iter().filter(|iv| iv.flagged).count());
    }
    Ok(out)
}

/// `ν_p` estimates of `{m_f > κ} ∩ ω × (0, r_max]` for a list of κ, sharing
/// the sampled centers and node layouts across κ.
fn superlevel_measures(
    f: &TestFunction,
    p: f64,
    kappas: &[f64],
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &CurveOptions,
) -> Result<(Vec<EstimatedValue>, Vec<usize>, usize)> {
    if !(p >= 1.0 && p.is_finite()) {
        return invalid(format!("p must be >= 1, got {p}"));
    }
    if kappas.iter().any(|k| !(*k > 0.0)) {
        return invalid("every κ must be positive");
    }
    domain.validate()?;
    opts.validate()?;
    if domain.omega.dim() != f.dim() {
        return invalid("ω has the wrong dimension");
    }
    spec.validate(f.dim())?;

    let (centers, strata) = sample_centers(&domain.omega, opts, spec.seed);
    let n = centers.len();
    let per_center: Vec<CenterWeights> = centers
        .into_par_iter()
        .enumerate()
        .map(|(i, a)| {
            let local = match spec.method {
                Method::Gauss1d => spec.clone(),
                Method::MonteCarlo => spec.with_seed(derive_seed(spec.seed, stream::PER_A, i as u64)),
            };
            center_weights(f, p, kappas, a, domain, &local, opts)
        })
        .collect::<Result<_>>()?;

    let vol = domain.omega.volume();
    let mut estimates = Vec::with_capacity(kappas.len());
    let mut flagged = Vec::with_capacity(kappas.len());
    for j in 0..kappas.len() {
        let w: Vec<f64> = per_center.iter().map(|c| c.weights[j]).collect();
        let u: Vec<f64> = per_center.iter().map(|c| c.uncertainty[j]).collect();
        let mut est = estimate_over_omega(&w, vol, strata);
        // the node layouts differ between centers, so endpoint errors are
        // independent across centers
        let u2: Vec<f64> = u.iter().map(|x| x * x).collect();
        est.std_error += vol * pairwise_sum(&u2).sqrt() / n as f64;
        estimates.push(est);
        flagged.push(per_center.iter().map(|c| c.flagged[j]).sum());
    }
    Ok((estimates, flagged, n))
}

/// `ν_p({m_f > κ} ∩ ω × (0, r_max])`, with a tail bound for `r > r_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub nu: EstimatedValue,
    pub tail_bound: f64,
    pub flagged_intervals: usize,
    pub samples: usize,
}

pub fn superlevel_measure(
    f: &TestFunction,
    p: f64,
    kappa: f64,
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &CurveOptions,
) -> Result<MeasureEstimate> {
    let (est, flagged, n) = superlevel_measures(f, p, &[kappa], domain, spec, opts)?;
    Ok(MeasureEstimate {
        nu: est[0],
        tail_bound: tail_bound(f, p, kappa, domain),
        flagged_intervals: flagged[0],
        samples: n,
    })
}

/// Numerical carrier of `κ ↦ κ^p ν_p({m_f > κ})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionCurve {
    pub p: f64,
    pub kappa_grid: Vec<f64>,
    pub nu_estimates: Vec<EstimatedValue>,
    pub scaled: Vec<f64>,
    pub tail_bound: Vec<f64>,
    pub flagged: Vec<usize>,
    pub samples: usize,
}

impl DistributionCurve {
    pub const CSV_SCHEMA: &'static str = "# schema: osclab.distribution_curve v1";
    pub const CSV_HEADER: &'static str = "kappa,nu,nu_stderr,kappa_p_nu,tail_bound";

    pub fn scaled_stderr(&self, i: usize) -> f64 {
        self.kappa_grid[i].powf(self.p) * self.nu_estimates[i].std_error
    }

    /// Fixed-format CSV; identical curves give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(Self::CSV_SCHEMA);
        s.push('\n');
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for i in 0..self.kappa_grid.len() {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.kappa_grid[i],
                self.nu_estimates[i].value,
                self.nu_estimates[i].std_error,
                self.scaled[i],
                self.tail_bound[i]
            ));
        }
        s
    }

    /// Largest relative deviation of the scaled values from their mean.
    pub fn relative_spread(&self) -> f64 {
        let n = self.scaled.len() as f64;
        let mean = self.scaled.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return 0.0;
        }
        let max = self.scaled.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.scaled.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / mean.abs()
    }
}

/// `κ ↦ ν_p({m_f > κ})` on a decreasing grid.
pub fn distribution_curve(
    f: &TestFunction,
    p: f64,
    kappa_grid: &[f64],
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &CurveOptions,
) -> Result<DistributionCurve> {
    if kappa_grid.len() < 8 {
        return invalid(format!("κ-grid needs at least 8 points, got {}", kappa_grid.len()));
    }
    if kappa_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return invalid("κ-grid must be strictly decreasing");
    }
    let span = kappa_grid[0] / kappa_grid[kappa_grid.len() - 1];
    if span < 1e3 * (1.0 - 1e-9) {
        return invalid(format!("κ-grid must span at least 3 decades, spans {span:.3e}"));
    }
    curve_unchecked(f, p, kappa_grid, domain, spec, opts)
}

pub(crate) fn curve_unchecked(
    f: &TestFunction,
    p: f64,
    kappa_grid: &[f64],
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &CurveOptions,
) -> Result<DistributionCurve> {
    let (nu, flagged, n) = superlevel_measures(f, p, kappa_grid, domain, spec, opts)?;
    let scaled = kappa_grid.iter().zip(&nu).map(|(k, v)| k.powf(p) * v.value).collect();
    let tails = kappa_grid.iter().map(|k| tail_bound(f, p, *k, domain)).collect();
    Ok(DistributionCurve {
        p,
        kappa_grid: kappa_grid.to_vec(),
        nu_estimates: nu,
        scaled,
        tail_bound: tails,
        flagged,
        samples: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakSup {
    pub value: f64,
    pub argmax_kappa: f64,
}

/// `max_κ κ^p ν + one standard error`, a conservative estimate of the weak
/// quasi-norm.
pub fn weak_sup(curve: &DistributionCurve) -> Result<WeakSup> {
    if curve.kappa_grid.is_empty() {
        return invalid("empty curve");
    }
    let (i, v) = (0..curve.kappa_grid.len())
        .map(|i| (i, curve.scaled[i] + curve.scaled_stderr(i)))
        .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(WeakSup { value: v, argmax_kappa: curve.kappa_grid[i] })
}

/// Result of fitting `scaled(κ) = L + c κ^α` over the smallest decade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub limit: f64,
    /// Fit residual (RMS) plus the sampling error of the curve at its
    /// smallest κ.
    pub uncertainty: f64,
    pub residual: f64,
    pub alpha: f64,
    pub coefficient: f64,
    pub points: usize,
}

/// Extrapolate `κ^p ν_p` to `κ → 0`.
pub fn limit_extrapolate(curve: &DistributionCurve) -> Result<LimitEstimate> {
    let n = curve.kappa_grid.len();
    if n == 0 {
        return invalid("empty curve");
    }
    let k_min = curve.kappa_grid.iter().cloned().fold(f64::MAX, f64::min);
    let idx: Vec<usize> = (0..n).filter(|&i| curve.kappa_grid[i] <= 10.0 * k_min * (1.0 + 1e-9)).collect();
    if idx.len() < 5 {
        return Err(Error::Extrapolation(format!("only {} points in the smallest decade, need 5", idx.len())));
    }
    let smallest =
        *idx.iter().min_by(|a, b| curve.kappa_grid[**a].partial_cmp(&curve.kappa_grid[**b]).unwrap()).unwrap();
    let stat = curve.scaled_stderr(smallest);
    if idx.iter().all(|&i| curve.scaled[i] == 0.0) {
        return Ok(LimitEstimate {
            limit: 0.0,
            uncertainty: stat,
            residual: 0.0,
            alpha: 1.0,
            coefficient: 0.0,
            points: idx.len(),
        });
    }
    for &i in &idx {
        let rel = curve.nu_estimates[i].rel_error();
        if !(rel < 0.02) {
            return Err(Error::Extrapolation(format!(
                "relative standard error {rel:.3e} at κ = {:.3e} exceeds 2%",
                curve.kappa_grid[i]
            )));
        }
    }
    let xs: Vec<f64> = idx.iter().map(|&i| curve.kappa_grid[i] / k_min).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| curve.scaled[i]).collect();

    let fit = |alpha: f64| -> (f64, f64, f64) {
        let m = xs.len() as f64;
        let t: Vec<f64> = xs.iter().map(|x| x.powf(alpha)).collect();
        let st: f64 = t.iter().sum();
        let stt: f64 = t.iter().map(|v| v * v).sum();
        let sy: f64 = ys.iter().sum();
        let sty: f64 = t.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let det = m * stt - st * st;
        let (l, c) =
            if det.abs() < 1e-300 { (sy / m, 0.0) } else { ((stt * sy - st * sty) / det, (m * sty - st * sy) / det) };
        let rss: f64 = t.iter().zip(&ys).map(|(ti, yi)| (yi - l - c * ti).powi(2)).sum();
        (l, c, (rss / m).sqrt())
    };
    let mut best = (f64::MAX, 0.0, 0.0, 0.0);
    for k in 0..=200 {
        let alpha = 0.5 + k as f64 * 0.005;
        let (l, c, res) = fit(alpha);
        if res < best.0 {
            best = (res, alpha, l, c);
        }
    }
    let (residual, alpha, limit, coeff) = best;
    // c was fitted against κ / κ_min; report it against κ
    let coefficient = coeff * k_min.powf(-alpha);
    if residual > 0.05 * limit.abs() {
        return Err(Error::Extrapolation(format!("fit residual {residual:.3e} exceeds 5% of L = {limit:.3e}")));
    }
    Ok(LimitEstimate { limit, uncertainty: residual + stat, residual, alpha, coefficient, points: idx.len() })
}

/// `c_{d,p} ∫_ω |∇f|^p`, the limit of `κ^p ν_p` over `ω`, when available.
pub fn reference_value(f: &TestFunction, p: f64, omega: &BoxDomain, constants: &Constants) -> Option<f64> {
    gradient_power_integral(f, p, omega).map(|v| constants.c_dp(f.dim(), p) * v)
}

/// `∫_ω |∇f|^p`.
pub fn gradient_power_integral(f: &TestFunction, p: f64, omega: &BoxDomain) -> Option<f64> {
    if !f.has_grad() {
        return None;
    }
    if let (Some(r0), Some(full)) = (f.support_radius(), f.grad_norm_pow(p)) {
        if omega.contains_ball(&f.support_center(), r0) {
            return Some(full);
        }
    }
    if f.grad_lipschitz() == Some(0.0) {
        let g = f.grad_norm(&omega.lo).unwrap();
        return Some(omega.volume() * g.powf(p));
    }
    Some(box_gradient_integral(f, p, omega))
}

/// Tensor composite Gauss-Legendre over the box.
pub fn box_gradient_integral(f: &TestFunction, p: f64, omega: &BoxDomain) -> f64 {
    let d = f.dim();
    let (panels, nodes) = match d {
        1 => (512, 8),
        2 => (128, 4),
        _ => (32, 4),
    };
    let rule = GaussLegendre::new(nodes);
    let axes: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| {
            let (lo, hi) = (omega.lo[k], omega.hi[k]);
            let h = (hi - lo) / panels as f64;
            (0..panels)
                .flat_map(|j| rule.mapped(lo + h * j as f64, lo + h * (j + 1) as f64).collect::<Vec<_>>())
                .collect()
        })
        .collect();
    let per_axis = axes[0].len();
    let total = per_axis.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for k in 0..d {
            let (xk, wk) = axes[k][rem % per_axis];
            rem /= per_axis;
            x[k] = xk;
            w *= wk;
        }
        sum += w * f.grad_norm(&x).unwrap().powf(p);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_closed_forms() {
        assert!((c_d_prime(1) - 0.5).abs() < 1e-14);
        assert!((c_d_prime(2) - 4.0 / (3.0 * PI)).abs() < 1e-14);
        assert!((c_d_prime(3) - 0.375).abs() < 1e-14);
        assert!((c_dp(1, 2.0) - 0.125).abs() < 1e-14);
        assert!((c_dp(2, 2.0) - 8.0 / (9.0 * PI * PI)).abs() < 1e-14);
        for d in 1..6 {
            assert!((c_dp(d, 1.0) - c_d_prime(d)).abs() < 1e-15);
        }
    }

    #[test]
    fn c_d_prime_equals_the_beta_function_route() {
        // (d/(d+1)) · B(1, (d-1)/2) / B(1/2, (d-1)/2) for d ≥ 2
        for d in 2..8 {
            let df = d as f64;
            let b = |x: f64, y: f64| (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp();
            let route = df / (df + 1.0) * b(1.0, 0.5 * (df - 1.0)) / b(0.5, 0.5 * (df - 1.0));
            assert!((route - c_d_prime(d)).abs() < 1e-13, "d={d}");
        }
    }

    #[test]
    fn radial_weight_closed_form() {
        let c = Constants::default();
        assert!((c.radial_weight(2.0, 1.0, 2.0) - (1.0 - 0.25) / 2.0).abs() < 1e-15);
        assert!((c.radial_weight(1.0, 0.5, f64::INFINITY) - 2.0).abs() < 1e-15);
        assert_eq!(c.radial_weight(2.0, 2.0, 1.0), 0.0);
    }

    #[test]
    fn kappa_grid_is_decreasing_geometric() {
        let g = KappaGrid { min: 1e-4, max: 1.0, ratio: KappaGrid::DEFAULT_RATIO }.values().unwrap();
        assert_eq!(g.len(), 17);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[16] - 1e-4).abs() < 1e-18);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    fn linear_domain(d: usize) -> Domain {
        Domain::new(BoxDomain::cube(d, 0.0, 1.0).unwrap(), 1e-4, 10.0 * (d as f64).sqrt()).unwrap()
    }

    #[test]
    fn linear_superlevel_set_is_a_single_ray() {
        let f = TestFunction::linear(1, vec![2.0]).unwrap();
        let dom = linear_domain(1);
        let ivs = superlevel_radius_set(&f, &[0.3], 0.01, &dom, &QuadratureSpec::gauss(8)).unwrap();
        assert_eq!(ivs.len(), 1);
        // m = r |v| / 2 > κ  ⇔  r > κ
        assert!((ivs[0].lo / 0.01 - 1.0).abs() < 2e-6, "{:?}", ivs);
        assert_eq!(ivs[0].hi, dom.r_max);
        // crossing below the floor
        let ivs = superlevel_radius_set(&f, &[0.3], 1e-5, &dom, &QuadratureSpec::gauss(8)).unwrap();
        assert!((ivs[0].lo / 1e-5 - 1.0).abs() < 2e-6, "{:?}", ivs);
    }

    #[test]
    fn constant_has_empty_superlevel_sets() {
        let f = TestFunction::constant(2, 1.0).unwrap();
        let dom = linear_domain(2);
        let spec = QuadratureSpec::monte_carlo(64, 1);
        for k in [1e-8, 1e-3, 1.0] {
            assert!(superlevel_radius_set(&f, &[0.5, 0.5], k, &dom, &spec).unwrap().is_empty());
        }
        let opts = CurveOptions { samples: 32, ..Default::default() };
        let m = superlevel_measure(&f, 2.0, 1e-3, &dom, &spec, &opts).unwrap();
        assert_eq!(m.nu.value, 0.0);
    }

    #[test]
    fn invalid_inputs() {
        let f = TestFunction::linear(1, vec![1.0]).unwrap();
        let dom = linear_domain(1);
        let spec = QuadratureSpec::gauss(8);
        assert!(superlevel_radius_set(&f, &[0.0], 0.0, &dom, &spec).is_err());
        assert!(Domain::new(BoxDomain::cube(1, 0.0, 1.0).unwrap(), 1.0, 0.5).is_err());
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        let opts = CurveOptions { samples: 16, ..Default::default() };
        assert!(distribution_curve(&f, 2.0, &[1.0, 0.1, 0.01], &dom, &spec, &opts).is_err());
        let inc: Vec<f64> = (0..10).map(|k| 10f64.powi(k - 9)).collect();
        assert!(distribution_curve(&f, 2.0, &inc, &dom, &spec, &opts).is_err());
        let narrow: Vec<f64> = (0..10).map(|k| 1.0 - 0.01 * k as f64).collect();
        assert!(distribution_curve(&f, 2.0, &narrow, &dom, &spec, &opts).is_err());
    }

    #[test]
    fn weak_sup_and_limit_of_constant_curve() {
        let f = TestFunction::constant(1, 2.0).unwrap();
        let dom = linear_domain(1);
        let grid = KappaGrid { min: 1e-4, max: 1.0, ratio: KappaGrid::DEFAULT_RATIO }.values().unwrap();
        let opts = CurveOptions { samples: 16, ..Default::default() };
        let c = distribution_curve(&f, 2.0, &grid, &dom, &QuadratureSpec::gauss(8), &opts).unwrap();
        assert!(c.scaled.iter().all(|v| *v == 0.0));
        assert_eq!(weak_sup(&c).unwrap().value, 0.0);
        assert_eq!(limit_extrapolate(&c).unwrap().limit, 0.0);
    }

    #[test]
    fn linear_curve_is_flat_and_matches_closed_form() {
        let f = TestFunction::linear(1, vec![1.5]).unwrap();
        let dom = linear_domain(1);
        let s = c_d_prime(1) * 1.5;
        let grid = KappaGrid { min: 1e-4 * s, max: 1e-1 * s, ratio: KappaGrid::DEFAULT_RATIO }.values().unwrap();
        let opts = CurveOptions { samples: 64, ..Default::default() };
        let p = 2.0;
        let c = distribution_curve(&f, p, &grid, &dom, &QuadratureSpec::gauss(8), &opts).unwrap();
        let exact = c_dp(1, p) * 1.5f64.powf(p);
        for v in &c.scaled {
            assert!((v - exact).abs() <= 1e-3 * exact, "{v} vs {exact}");
        }
        assert!(c.relative_spread() < 1e-3);
        let sup = weak_sup(&c).unwrap();
        assert!((sup.value - exact).abs() <= 1e-3 * exact);
        let lim = limit_extrapolate(&c).unwrap();
        assert!((lim.limit - exact).abs() <= 1e-3 * exact, "{lim:?}");
    }

    #[test]
    fn tail_bound_vanishes_when_the_tail_radius_is_inside() {
        let f = TestFunction::plateau(1, 1.0, 0.5, 1.0).unwrap();
        let omega = Domain::default_omega(&f);
        let dom = Domain::default_for(&f, omega);
        let gamma = tail_gamma(&f).unwrap();
        assert_eq!(tail_bound(&f, 2.0, 2.0 * gamma / dom.r_max, &dom), 0.0);
        assert!(tail_bound(&f, 2.0, 1e-6 * gamma / dom.r_max, &dom) > 0.0);
    }

    #[test]
    fn box_and_radial_gradient_integrals_agree() {
        for d in [1, 2] {
            let f = TestFunction::plateau(d, 1.0, 0.5, 1.0).unwrap();
            let omega = BoxDomain::cube(d, -1.2, 1.2).unwrap();
            let radial = f.grad_norm_pow(2.0).unwrap();
            let tensor = box_gradient_integral(&f, 2.0, &omega);
            assert!((radial - tensor).abs() <= 1e-4 * radial, "d={d}: {radial} vs {tensor}");
        }
    }

    #[test]
    fn nested_superlevel_sets_give_monotone_measures() {
        let f = TestFunction::plateau(2, 1.0, 0.5, 1.0).unwrap();
        let dom = Domain::default_for(&f, Domain::default_omega(&f));
        let spec = QuadratureSpec::monte_carlo(128, 4);
        let opts = CurveOptions { samples: 32, ..Default::default() };
        let grid = KappaGrid::default_for(&f).values().unwrap();
        let c = distribution_curve(&f, 2.0, &grid, &dom, &spec, &opts).unwrap();
        for w in c.nu_estimates.windows(2) {
            assert!(w[1].value >= w[0].value * (1.0 - 1e-5), "{:?}", w);
        }
    }
}
