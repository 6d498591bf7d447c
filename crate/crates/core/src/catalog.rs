//! Analytic test functions with exact gradients.
//!
//! Entries are addressed by string identifiers such as
//! `linear:d=2:v=1,0`, `plateau:d=1:a=1:ri=0.5:ro=1` or
//! `indicator:d=1:r=0.5`. Optional keys: `o=` (additive offset of a linear
//! entry) and `c=` (center of a plateau or indicator, comma separated).
//! `constant:d=..:k=..` is shorthand for a linear entry with zero slope.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, unit_ball_volume, unit_sphere_area, GaussLegendre};

/// A real-valued field on `R^d`, as seen by the quadrature rules.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// In d = 1, the points where the field or one of its first few
    /// derivatives is not smooth. Splitting the Gauss rule there keeps it
    /// exact on piecewise polynomials.
    fn kinks_1d(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `Some(c)` when the field equals `c` everywhere on the open ball.
    fn constant_on_ball(&self, _center: &[f64], _radius: f64) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessTag {
    SmoothCompactGradient,
    Linear,
    Indicator,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Linear { slope: Vec<f64>, offset: f64 },
    Plateau { amplitude: f64, inner: f64, outer: f64, center: Vec<f64> },
    Indicator { radius: f64, center: Vec<f64> },
}

/// A catalog entry. Evaluation is pure; entries can be shared across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    id: String,
    dim: usize,
    shape: Shape,
}

// Quintic taper s(t) = 10t^3 - 15t^4 + 6t^5 (C^2 at both ends).
// sup |s'| = 15/8 at t = 1/2, sup |s''| = 10/sqrt(3) at t = (3 ± sqrt 3)/6.
const TAPER_SUP_D1: f64 = 15.0 / 8.0;
const TAPER_SUP_D2: f64 = 5.773_502_691_896_258; // 10 / sqrt(3)

fn taper(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn taper_d1(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    let u = t * (1.0 - t);
    30.0 * u * u
}

#[cfg(test)]
fn taper_d2(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    Ok(())
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl TestFunction {
    /// `f(x) = v·x`.
    pub fn linear(dim: usize, slope: Vec<f64>) -> Result<Self> {
        Self::affine(dim, slope, 0.0)
    }

    /// `f(x) = v·x + offset`.
    pub fn affine(dim: usize, slope: Vec<f64>, offset: f64) -> Result<Self> {
        check_dim(dim)?;
        if slope.len() != dim {
            return Err(Error::InvalidArgument(format!("slope has {} components, expected {dim}", slope.len())));
        }
        if slope.iter().chain(std::iter::once(&offset)).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("slope and offset must be finite".into()));
        }
        let mut id = format!("linear:d={dim}:v={}", fmt_list(&slope));
        if offset != 0.0 {
            id.push_str(&format!(":o={offset}"));
        }
        Ok(Self { id, dim, shape: Shape::Linear { slope, offset } })
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        Self::affine(dim, vec![0.0; dim.max(1)], value).map(|f| Self { id: format!("constant:d={dim}:k={value}"), ..f })
    }

    /// Radial C^2 bump: `amplitude` on `|x| <= inner`, zero on `|x| >= outer`,
    /// quintic taper in between.
    pub fn plateau(dim: usize, amplitude: f64, inner: f64, outer: f64) -> Result<Self> {
        Self::plateau_at(dim, amplitude, inner, outer, vec![0.0; dim])
    }

    pub fn plateau_at(dim: usize, amplitude: f64, inner: f64, outer: f64, center: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if !(inner > 0.0 && outer > 0.0 && inner.is_finite() && outer.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "plateau radii must be positive, got inner={inner} outer={outer}"
            )));
        }
        if inner >= outer {
            return Err(Error::InvalidArgument(format!(
                "plateau needs inner < outer, got inner={inner} outer={outer}"
            )));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidArgument("amplitude must be finite".into()));
        }
        if center.len() != dim {
            return Err(Error::InvalidArgument("center has the wrong dimension".into()));
        }
        let mut id = format!("plateau:d={dim}:a={amplitude}:ri={inner}:ro={outer}");
        if center.iter().any(|c| *c != 0.0) {
            id.push_str(&format!(":c={}", fmt_list(&center)));
        }
        Ok(Self { id, dim, shape: Shape::Plateau { amplitude, inner, outer, center } })
    }

    /// Characteristic function of the closed ball of the given radius.
    pub fn ball_indicator(dim: usize, radius: f64) -> Result<Self> {
        Self::ball_indicator_at(dim, radius, vec![0.0; dim])
    }

    pub fn ball_indicator_at(dim: usize, radius: f64, center: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("indicator radius must be positive, got {radius}")));
        }
        if center.len() != dim {
            return Err(Error::InvalidArgument("center has the wrong dimension".into()));
        }
        let mut id = format!("indicator:d={dim}:r={radius}");
        if center.iter().any(|c| *c != 0.0) {
            id.push_str(&format!(":c={}", fmt_list(&center)));
        }
        Ok(Self { id, dim, shape: Shape::Indicator { radius, center } })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness_tag(&self) -> SmoothnessTag {
        match self.shape {
            Shape::Linear { .. } => SmoothnessTag::Linear,
            Shape::Plateau { .. } => SmoothnessTag::SmoothCompactGradient,
            Shape::Indicator { .. } => SmoothnessTag::Indicator,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Linear { slope, offset } => slope.iter().zip(x).map(|(v, xi)| v * xi).sum::<f64>() + offset,
            Shape::Plateau { amplitude, inner, outer, center } => {
                let rho = dist(x, center);
                if rho <= *inner {
                    *amplitude
                } else if rho >= *outer {
                    0.0
                } else {
                    amplitude * (1.0 - taper((rho - inner) / (outer - inner)))
                }
            }
            Shape::Indicator { radius, center } => {
                if dist(x, center) <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact gradient; `None` for non-differentiable entries.
    pub fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.shape {
            Shape::Linear { slope, .. } => Some(slope.clone()),
            Shape::Plateau { amplitude, inner, outer, center } => {
                let rho = dist(x, center);
                if rho <= *inner || rho >= *outer {
                    return Some(vec![0.0; self.dim]);
                }
                let w = outer - inner;
                let dh = -amplitude * taper_d1((rho - inner) / w) / w;
                Some(x.iter().zip(center).map(|(xi, ci)| dh * (xi - ci) / rho).collect())
            }
            Shape::Indicator { .. } => None,
        }
    }

    pub fn has_grad(&self) -> bool {
        !matches!(self.shape, Shape::Indicator { .. })
    }

    pub fn grad_norm(&self, x: &[f64]) -> Option<f64> {
        self.grad(x).map(|g| norm(&g))
    }

    /// A valid global Lipschitz constant of the gradient (an upper bound).
    ///
    /// For the plateau the Hessian of the radial profile `h(|x|)` has
    /// eigenvalues `h''` (radial) and `h'/|x|` (tangential, d >= 2), and
    /// `|x| >= inner` wherever `h' != 0`.
    pub fn grad_lipschitz(&self) -> Option<f64> {
        match &self.shape {
            Shape::Linear { .. } => Some(0.0),
            Shape::Plateau { amplitude, inner, outer, .. } => {
                let w = outer - inner;
                let radial = TAPER_SUP_D2 / (w * w);
                let tangential = if self.dim >= 2 { TAPER_SUP_D1 / (w * inner) } else { 0.0 };
                Some(amplitude.abs() * radial.max(tangential))
            }
            Shape::Indicator { .. } => None,
        }
    }

    /// `R_0` with `grad f = 0` (resp. `f` constant) outside `B_{R_0}(center)`.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.shape {
            Shape::Linear { slope, .. } if slope.iter().all(|v| *v == 0.0) => None,
            Shape::Linear { .. } => None,
            Shape::Plateau { outer, .. } => Some(*outer),
            Shape::Indicator { radius, .. } => Some(*radius),
        }
    }

    pub fn support_center(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Plateau { center, .. } | Shape::Indicator { center, .. } => center.clone(),
            Shape::Linear { .. } => vec![0.0; self.dim],
        }
    }

    /// `sup |grad f|`, when finite.
    pub fn grad_sup(&self) -> Option<f64> {
        match &self.shape {
            Shape::Linear { slope, .. } => Some(norm(slope)),
            Shape::Plateau { amplitude, inner, outer, .. } => Some(amplitude.abs() * TAPER_SUP_D1 / (outer - inner)),
            Shape::Indicator { .. } => None,
        }
    }

    /// Smallest length scale on which the function changes.
    pub fn feature_scale(&self) -> Option<f64> {
        match &self.shape {
            Shape::Linear { .. } => None,
            Shape::Plateau { inner, outer, .. } => Some(inner.min(outer - inner)),
            Shape::Indicator { radius, .. } => Some(*radius),
        }
    }

    /// Value of `f` outside the support radius.
    pub fn far_field_value(&self) -> Option<f64> {
        match &self.shape {
            Shape::Linear { .. } => None,
            Shape::Plateau { .. } | Shape::Indicator { .. } => Some(0.0),
        }
    }

    /// `∫ |f - far field|` over `R^d`.
    pub fn far_field_l1(&self) -> Option<f64> {
        match &self.shape {
            Shape::Linear { .. } => None,
            Shape::Plateau { amplitude, inner, outer, .. } => {
                let d = self.dim as i32;
                // The profile is a polynomial of degree 5 in rho on the taper.
                let rule = GaussLegendre::new(8);
                let w = outer - inner;
                let taper_part =
                    rule.integrate(*inner, *outer, |rho| (1.0 - taper((rho - inner) / w)) * rho.powi(d - 1));
                let core = inner.powi(d) / d as f64;
                Some(amplitude.abs() * unit_sphere_area(self.dim) * (core + taper_part))
            }
            Shape::Indicator { radius, .. } => Some(unit_ball_volume(self.dim) * radius.powi(self.dim as i32)),
        }
    }

    /// `‖grad f‖_p^p` over `R^d`, when finite.
    pub fn grad_norm_pow(&self, p: f64) -> Option<f64> {
        match &self.shape {
            Shape::Linear { slope, .. } if slope.iter().all(|v| *v == 0.0) => Some(0.0),
            Shape::Linear { .. } | Shape::Indicator { .. } => None,
            Shape::Plateau { amplitude, inner, outer, .. } => {
                let w = outer - inner;
                let d = self.dim as i32;
                let (v, _) = integrate_adaptive(
                    |rho| (amplitude.abs() * taper_d1((rho - inner) / w) / w).powf(p) * rho.powi(d - 1),
                    *inner,
                    *outer,
                    &[],
                    0.0,
                    1e-13,
                );
                Some(unit_sphere_area(self.dim) * v)
            }
        }
    }

    /// Catalog identifiers shipped with the tool.
    pub fn default_catalog() -> Vec<TestFunction> {
        [
            "constant:d=1:k=1",
            "linear:d=1:v=1",
            "linear:d=2:v=1,0",
            "linear:d=3:v=1,2,2",
            "plateau:d=1:a=1:ri=0.5:ro=1",
            "plateau:d=2:a=1:ri=0.5:ro=1",
            "plateau:d=3:a=1:ri=0.5:ro=1",
            "indicator:d=1:r=0.5",
            "indicator:d=2:r=1",
        ]
        .iter()
        .map(|s| s.parse().expect("built-in catalog id"))
        .collect()
    }
}

impl ScalarField for TestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn kinks_1d(&self) -> Vec<f64> {
        if self.dim != 1 {
            return Vec::new();
        }
        match &self.shape {
            Shape::Linear { .. } => Vec::new(),
            Shape::Plateau { inner, outer, center, .. } => {
                let c = center[0];
                vec![c - outer, c - inner, c + inner, c + outer]
            }
            Shape::Indicator { radius, center } => vec![center[0] - radius, center[0] + radius],
        }
    }

    fn constant_on_ball(&self, a: &[f64], r: f64) -> Option<f64> {
        match &self.shape {
            Shape::Linear { slope, offset } => slope.iter().all(|v| *v == 0.0).then_some(*offset),
            Shape::Plateau { amplitude, inner, outer, center } => {
                let s = dist(a, center);
                if s - r >= *outer {
                    Some(0.0)
                } else if s + r <= *inner {
                    Some(*amplitude)
                } else {
                    None
                }
            }
            Shape::Indicator { radius, center } => {
                let s = dist(a, center);
                if s - r >= *radius {
                    Some(0.0)
                } else if s + r <= *radius {
                    Some(1.0)
                } else {
                    None
                }
            }
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn bad(id: &str, reason: impl Into<String>) -> Error {
    Error::BadFunctionId { id: id.to_string(), reason: reason.into() }
}

fn parse_list(id: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad(id, format!("`{t}` is not a number")))).collect()
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(id: &str) -> Result<Self> {
        let mut parts = id.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut kv = std::collections::BTreeMap::new();
        for part in parts {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(id, format!("`{part}` is not key=value")))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(bad(id, format!("duplicate key `{k}`")));
            }
        }
        let take = |kv: &mut std::collections::BTreeMap<String, String>, key: &str| -> Result<String> {
            kv.remove(key).ok_or_else(|| bad(id, format!("missing `{key}=`")))
        };
        let num =
            |s: String| -> Result<f64> { s.parse::<f64>().map_err(|_| bad(id, format!("`{s}` is not a number"))) };

        let d: usize = take(&mut kv, "d")?.parse().map_err(|_| bad(id, "d must be a positive integer"))?;
        if d == 0 {
            return Err(bad(id, "d must be at least 1"));
        }
        let center = match kv.remove("c") {
            Some(s) => Some(parse_list(id, &s)?),
            None => None,
        };
        let f = match kind {
            "linear" => {
                let v = parse_list(id, &take(&mut kv, "v")?)?;
                let o = match kv.remove("o") {
                    Some(s) => num(s)?,
                    None => 0.0,
                };
                if center.is_some() {
                    return Err(bad(id, "linear entries take `o=` for an offset, not `c=`"));
                }
                TestFunction::affine(d, v, o)
            }
            "constant" => {
                let k = num(take(&mut kv, "k")?)?;
                TestFunction::constant(d, k)
            }
            "plateau" => {
                let a = num(take(&mut kv, "a")?)?;
                let ri = num(take(&mut kv, "ri")?)?;
                let ro = num(take(&mut kv, "ro")?)?;
                TestFunction::plateau_at(d, a, ri, ro, center.unwrap_or_else(|| vec![0.0; d]))
            }
            "indicator" => {
                let r = num(take(&mut kv, "r")?)?;
                TestFunction::ball_indicator_at(d, r, center.unwrap_or_else(|| vec![0.0; d]))
            }
            other => return Err(bad(id, format!("unknown function kind `{other}`"))),
        }
        .map_err(|e| bad(id, e.to_string()))?;
        if let Some(k) = kv.keys().next() {
            return Err(bad(id, format!("unexpected key `{k}`")));
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_derivative_sups() {
        let (mut s1, mut s2) = (0.0_f64, 0.0_f64);
        for k in 0..=100_000 {
            let t = k as f64 / 100_000.0;
            s1 = s1.max(taper_d1(t).abs());
            s2 = s2.max(taper_d2(t).abs());
        }
        assert!((s1 - TAPER_SUP_D1).abs() < 1e-9);
        assert!((s2 - TAPER_SUP_D2).abs() < 1e-6);
    }
    use crate::rng::{rng_for, stream};
    use rand::Rng;

    fn random_point(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn linear_entries() {
        let f = TestFunction::linear(1, vec![1.0]).unwrap();
        assert_eq!(f.eval(&[0.5]), 0.5);
        assert_eq!(f.grad(&[0.5]).unwrap(), vec![1.0]);
        assert_eq!(f.grad_lipschitz(), Some(0.0));
        assert_eq!(f.support_radius(), None);

        let z = TestFunction::linear(2, vec![0.0, 0.0]).unwrap();
        assert_eq!(z.eval(&[3.0, -1.0]), 0.0);
        assert_eq!(z.grad(&[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);

        let g = TestFunction::linear(3, vec![1.0, 2.0, 2.0]).unwrap();
        assert!((g.grad_norm(&[0.1, 0.2, 0.3]).unwrap() - 3.0).abs() < 1e-15);

        assert!(TestFunction::linear(0, vec![]).is_err());
        assert!(TestFunction::linear(2, vec![1.0]).is_err());
    }

    #[test]
    fn plateau_entries() {
        let f = TestFunction::plateau(2, 1.5, 0.5, 1.0).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]), 1.5);
        assert_eq!(f.grad(&[2.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f.eval(&[0.0, 1.0]), 0.0);
        assert_eq!(f.support_radius(), Some(1.0));
        assert!(TestFunction::plateau(1, 1.0, 0.0, 1.0).is_err());
        assert!(TestFunction::plateau(1, 1.0, -0.5, 1.0).is_err());
        assert!(TestFunction::plateau(1, 1.0, 1.0, 1.0).is_err());
        assert!(TestFunction::plateau(1, 1.0, 1.2, 1.0).is_err());
    }

    #[test]
    fn plateau_gradient_norm_d1_matches_closed_form() {
        // ∫ s'(t)^2 dt = 900 B(5,5) = 10/7, two sides, width 1/2 → 40/7.
        let f = TestFunction::plateau(1, 1.0, 0.5, 1.0).unwrap();
        let v = f.grad_norm_pow(2.0).unwrap();
        assert!((v - 40.0 / 7.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn plateau_gradient_norm_d1_matches_brute_force_on_the_line() {
        let f = TestFunction::plateau(1, 1.0, 0.5, 1.0).unwrap();
        for p in [1.0, 1.5, 2.0, 3.0] {
            let (v, _) =
                integrate_adaptive(|x| f.grad_norm(&[x]).unwrap().powf(p), -1.5, 1.5, &f.kinks_1d(), 0.0, 1e-13);
            let r = f.grad_norm_pow(p).unwrap();
            assert!((v - r).abs() <= 1e-10 * r, "p={p} {v} vs {r}");
        }
    }

    #[test]
    fn indicator_entries() {
        let f = TestFunction::ball_indicator(1, 0.5).unwrap();
        assert_eq!(f.eval(&[0.0]), 1.0);
        assert_eq!(f.eval(&[1.0]), 0.0);
        assert_eq!(f.smoothness_tag(), SmoothnessTag::Indicator);
        assert!(f.grad(&[0.0]).is_none());
        let g = TestFunction::ball_indicator(2, 1.0).unwrap();
        // closed ball convention
        assert_eq!(g.eval(&[1.0, 0.0]), 1.0);
        assert!(TestFunction::ball_indicator(1, 0.0).is_err());
        assert!(TestFunction::ball_indicator(1, -1.0).is_err());
    }

    #[test]
    fn ids_round_trip() {
        for f in TestFunction::default_catalog() {
            let g: TestFunction = f.id().parse().unwrap();
            assert_eq!(f, g);
        }
        let f: TestFunction = "plateau:d=2:a=2:ri=0.25:ro=1:c=0.5,-1".parse().unwrap();
        assert_eq!(f.support_center(), vec![0.5, -1.0]);
        assert_eq!(f.id(), "plateau:d=2:a=2:ri=0.25:ro=1:c=0.5,-1");
    }

    #[test]
    fn bad_ids_are_rejected() {
        for id in [
            "",
            "linear",
            "linear:d=0:v=",
            "linear:d=2:v=1",
            "linear:d=1:v=x",
            "plateau:d=1:a=1:ri=1:ro=0.5",
            "plateau:d=1:a=1:ri=0.5",
            "indicator:d=1:r=-1",
            "indicator:d=1:r=1:zz=3",
            "wavelet:d=1",
            "linear:d=1:v=1:v=2",
        ] {
            assert!(id.parse::<TestFunction>().is_err(), "{id}");
        }
    }

    #[test]
    fn finite_differences_match_gradients() {
        let mut rng = rng_for(1, stream::CASES, 0);
        let h = 1e-4;
        for f in TestFunction::default_catalog().into_iter().filter(|f| f.has_grad()) {
            let d = f.dim();
            for _ in 0..100 {
                let x = random_point(&mut rng, d, 1.3);
                let g = f.grad(&x).unwrap();
                let gn = norm(&g);
                for k in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (f.eval(&xp) - f.eval(&xm)) / (2.0 * h);
                    assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + gn), "{f} at {x:?}: fd={fd} grad={}", g[k]);
                }
            }
        }
    }

    #[test]
    fn finite_difference_error_decays_quadratically() {
        let f = TestFunction::plateau(2, 1.0, 0.5, 1.0).unwrap();
        let x = [0.55, 0.3];
        let g = f.grad(&x).unwrap();
        let err = |h: f64| ((f.eval(&[x[0] + h, x[1]]) - f.eval(&[x[0] - h, x[1]])) / (2.0 * h) - g[0]).abs();
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.2, "ratio={ratio}");
    }

    #[test]
    fn lipschitz_certificates_hold_on_random_pairs() {
        let mut rng = rng_for(2, stream::CASES, 0);
        for f in TestFunction::default_catalog().into_iter().filter(|f| f.has_grad()) {
            let a = f.grad_lipschitz().unwrap();
            let d = f.dim();
            for i in 0..10_000 {
                let x = random_point(&mut rng, d, 1.2);
                // mix far pairs with close pairs
                let y: Vec<f64> = if i % 2 == 0 {
                    random_point(&mut rng, d, 1.2)
                } else {
                    x.iter().map(|xi| xi + rng.random_range(-0.01..0.01)).collect()
                };
                let gx = f.grad(&x).unwrap();
                let gy = f.grad(&y).unwrap();
                let dg = norm(&gx.iter().zip(&gy).map(|(p, q)| p - q).collect::<Vec<_>>());
                let dx = dist(&x, &y);
                assert!(dg <= a * dx * (1.0 + 1e-12) + 1e-15, "{f}: {dg} > {a}·{dx}");
            }
        }
    }

    #[test]
    fn gradients_vanish_outside_the_support_radius() {
        let mut rng = rng_for(3, stream::CASES, 0);
        for f in TestFunction::default_catalog().into_iter().filter(|f| f.has_grad()) {
            let Some(r0) = f.support_radius() else { continue };
            for _ in 0..2000 {
                let dir = random_point(&mut rng, f.dim(), 1.0);
                let n = norm(&dir);
                if n == 0.0 {
                    continue;
                }
                let s = r0 * (1.0 + rng.random_range(0.0..3.0));
                let x: Vec<f64> = dir.iter().map(|v| v / n * s).collect();
                assert!(f.grad(&x).unwrap().iter().all(|g| *g == 0.0));
            }
        }
    }

    #[test]
    fn far_field_l1_matches_quadrature() {
        let f = TestFunction::plateau(1, 2.0, 0.5, 1.0).unwrap();
        let (v, _) = integrate_adaptive(|x| f.eval(&[x]).abs(), -2.0, 2.0, &f.kinks_1d(), 0.0, 1e-13);
        assert!((f.far_field_l1().unwrap() - v).abs() < 1e-10);
        let g = TestFunction::ball_indicator(2, 0.5).unwrap();
        assert!((g.far_field_l1().unwrap() - std::f64::consts::PI * 0.25).abs() < 1e-14);
    }

    #[test]
    fn catalog_is_thread_safe() {
        fn assert_sync<T: Send + Sync>() {}
        assert_sync::<TestFunction>();
    }
}
