//! Averages over Euclidean balls.
//!
//! Two rules are provided. In one dimension a composite Gauss-Legendre rule
//! split at caller-supplied breakpoints is exact for piecewise polynomials of
//! degree `2n - 1`. In any dimension a seeded Monte-Carlo rule draws `n`
//! uniform nodes from the unit ball and maps them onto `B_r(a)` by
//! `x = a + r u`; the node layout therefore lives in the ball's local frame,
//! which makes translation and dilation covariance exact.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, rng_for, stream};

/// A point `(a, r)` of the upper half-space, indexing the ball `B_r(a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallSample {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("ball radius must be positive and finite, got {radius}"));
        }
        if center.is_empty() {
            return invalid("ball center must have at least one coordinate");
        }
        if center.iter().any(|c| !c.is_finite()) {
            return invalid("ball center must be finite");
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "gauss_1d")]
    Gauss1d,
    MonteCarlo,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss_1d" | "gauss" => Ok(Method::Gauss1d),
            "monte_carlo" | "mc" => Ok(Method::MonteCarlo),
            other => invalid(format!("unknown quadrature method `{other}`")),
        }
    }
}

/// Recipe for averaging over one ball. For `Gauss1d` the node count is the
/// number of Gauss-Legendre nodes per smooth piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: Method,
    pub node_count: usize,
    pub seed: u64,
    pub target_rel_error: f64,
}

impl QuadratureSpec {
    pub fn gauss(node_count: usize) -> Self {
        Self { method: Method::Gauss1d, node_count, seed: 0, target_rel_error: 1e-10 }
    }

    pub fn monte_carlo(node_count: usize, seed: u64) -> Self {
        Self { method: Method::MonteCarlo, node_count, seed, target_rel_error: 1e-2 }
    }

    /// Deterministic rule in d = 1, Monte-Carlo otherwise.
    pub fn auto(dim: usize, mc_nodes: usize, seed: u64) -> Self {
        if dim == 1 {
            Self { seed, ..Self::gauss(8) }
        } else {
            Self::monte_carlo(mc_nodes, seed)
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.node_count < 2 {
            return invalid(format!("node_count must be at least 2, got {}", self.node_count));
        }
        if self.method == Method::Gauss1d && dim != 1 {
            return invalid(format!("gauss_1d is only valid in d = 1 (got d = {dim})"));
        }
        if !(self.target_rel_error > 0.0) {
            return invalid("target_rel_error must be positive");
        }
        Ok(())
    }
}

/// A value with its statistical error (zero for deterministic rules).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedValue {
    pub value: f64,
    pub std_error: f64,
}

impl EstimatedValue {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }

    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.std_error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.std_error / self.value.abs()
        }
    }
}

impl std::fmt::Display for EstimatedValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.12e} ± {:.3e}", self.value, self.std_error)
    }
}

pub fn unit_ball_volume(dim: usize) -> f64 {
    let d = dim as f64;
    (0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0)).exp()
}

pub fn unit_sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    (2.0f64.ln() + 0.5 * d * PI.ln() - ln_gamma(0.5 * d)).exp()
}

pub fn ball_volume(dim: usize, radius: f64) -> f64 {
    unit_ball_volume(dim) * radius.powi(dim as i32)
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Gauss-Legendre

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        self.mapped(lo, hi).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule on `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, panels: usize, mut f: F) -> f64 {
        let h = (hi - lo) / panels as f64;
        (0..panels)
            .map(|k| {
                let a = lo + h * k as f64;
                let b = if k + 1 == panels { hi } else { a + h };
                self.integrate(a, b, &mut f)
            })
            .sum()
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (7/15) for reference integrals in one variable.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive 15-point Gauss-Kronrod integration of `f` over `[a, b]`, split
/// first at `breaks`. Returns the value and an error estimate.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> (f64, f64) {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|x| *x > a && *x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();

    let mut segments: Vec<(f64, f64, f64, f64)> = pts
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..5000 {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = segments.iter().enumerate().max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap()).unwrap();
        let (lo, hi, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        segments.push((lo, mid, v1, e1));
        segments.push((mid, hi, v2, e2));
    }
    segments.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let total = segments.iter().map(|s| s.2).sum();
    let err = segments.iter().map(|s| s.3).sum();
    (total, err)
}

// ---------------------------------------------------------------------------
// Monte-Carlo nodes

/// `n` points drawn uniformly from the open unit ball in `dim` dimensions,
/// stored row-major.
#[derive(Clone, Debug)]
pub struct UnitBallNodes {
    dim: usize,
    coords: Vec<f64>,
}

impl UnitBallNodes {
    /// Gaussian direction times a radius `U^{1/d}`: exact and rejection-free.
    pub fn generate(dim: usize, n: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, stream::INNER_NODES, 0);
        let mut coords = Vec::with_capacity(dim * n);
        let mut g = vec![0.0; dim];
        let inv_d = 1.0 / dim as f64;
        for _ in 0..n {
            let norm = loop {
                for gi in g.iter_mut() {
                    *gi = rng.sample(StandardNormal);
                }
                let s = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if s > 0.0 {
                    break s;
                }
            };
            let u: f64 = rng.random::<f64>();
            let rho = if dim == 1 { u } else { u.powf(inv_d) };
            coords.extend(g.iter().map(|x| x / norm * rho));
        }
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Map every node onto `B_r(a)` and hand it to `visit`.
    pub fn for_each_mapped<F: FnMut(&[f64])>(&self, ball: &BallSample, mut visit: F) {
        let mut x = vec![0.0; self.dim];
        for u in self.iter() {
            for k in 0..self.dim {
                x[k] = ball.center[k] + ball.radius * u[k];
            }
            visit(&x);
        }
    }

    /// Evaluate `g` at every mapped node, rejecting non-finite values.
    pub fn evaluate<G: Fn(&[f64]) -> f64 + ?Sized>(&self, ball: &BallSample, g: &G) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        let mut bad = None;
        self.for_each_mapped(ball, |x| {
            let v = g(x);
            if !v.is_finite() && bad.is_none() {
                bad = Some(Error::NonFinite { point: x.to_vec(), value: v });
            }
            out.push(v);
        });
        match bad {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

/// Node set used by [`ball_average`] for a given spec.
pub fn outer_nodes(dim: usize, spec: &QuadratureSpec) -> UnitBallNodes {
    UnitBallNodes::generate(dim, spec.node_count, derive_seed(spec.seed, stream::OUTER_NODES, 0))
}

/// Node set for the inner mean of a two-pass estimate; independent of
/// [`outer_nodes`] for the same spec.
pub fn inner_nodes(dim: usize, spec: &QuadratureSpec) -> UnitBallNodes {
    UnitBallNodes::generate(dim, spec.node_count, derive_seed(spec.seed, stream::INNER_NODES, 0))
}

/// `n` i.i.d. uniform points in the ball, deterministic per `(seed, ball, n)`.
pub fn sample_ball_uniform(ball: &BallSample, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return invalid("sample count must be at least 1");
    }
    let nodes = UnitBallNodes::generate(ball.dim(), n, seed);
    let mut out = Vec::with_capacity(n);
    nodes.for_each_mapped(ball, |x| out.push(x.to_vec()));
    Ok(out)
}

/// Gauss-Legendre average over `(a - r, a + r)`, split at the interior
/// `breaks`.
pub fn interval_average<G: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    center: f64,
    radius: f64,
    breaks: &[f64],
    mut g: G,
) -> Result<f64> {
    let lo = center - radius;
    let hi = center + radius;
    let mut total = 0.0;
    let mut bad = None;
    for (p, q) in pieces(lo, hi, breaks) {
        total += rule.integrate(p, q, |x| {
            let v = g(x);
            if !v.is_finite() && bad.is_none() {
                bad = Some(Error::NonFinite { point: vec![x], value: v });
            }
            v
        });
    }
    match bad {
        Some(e) => Err(e),
        None => Ok(total / (hi - lo)),
    }
}

/// Consecutive sub-intervals of `[lo, hi]` cut at the `breaks` lying strictly
/// inside.
pub fn pieces(lo: f64, hi: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut out = Vec::with_capacity(pts.len() + 1);
    let mut prev = lo;
    for b in pts {
        out.push((prev, b));
        prev = b;
    }
    out.push((prev, hi));
    out
}

/// `⨍_{B_r(a)} g`. Deterministic given `(spec.seed, ball, g)`.
pub fn ball_average<G: Fn(&[f64]) -> f64 + ?Sized>(
    g: &G,
    ball: &BallSample,
    spec: &QuadratureSpec,
) -> Result<EstimatedValue> {
    ball_average_with_breaks(g, ball, spec, &[])
}

/// As [`ball_average`], but the one-dimensional rule is split at `breaks`.
pub fn ball_average_with_breaks<G: Fn(&[f64]) -> f64 + ?Sized>(
    g: &G,
    ball: &BallSample,
    spec: &QuadratureSpec,
    breaks: &[f64],
) -> Result<EstimatedValue> {
    let d = ball.dim();
    spec.validate(d)?;
    match spec.method {
        Method::Gauss1d => {
            let rule = GaussLegendre::new(spec.node_count);
            let v = interval_average(&rule, ball.center[0], ball.radius, breaks, |x| g(&[x]))?;
            Ok(EstimatedValue::exact(v))
        }
        Method::MonteCarlo => {
            let nodes = outer_nodes(d, spec);
            let vals = nodes.evaluate(ball, g)?;
            let (m, se) = mean_and_stderr(&vals);
            Ok(EstimatedValue { value: m, std_error: se })
        }
    }
}
