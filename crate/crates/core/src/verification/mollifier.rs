//! `φ(z) = c_d (1 - |z|²)³` on the unit ball and its convolutions.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::catalog::{ScalarField, TestFunction};
use crate::error::{invalid, Result};
use crate::quadrature::{pieces, unit_sphere_area, GaussLegendre};
use crate::rng::{rng_for, stream};

/// Nodes per piece for the 1-d convolution; the integrands are polynomials
/// of degree at most 11 on every piece.
const CONV_NODES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub dim: usize,
    /// Scale `t`: `φ_t(z) = t^{-d} φ(z / t)`, supported in `|z| ≤ t`.
    pub scale: f64,
    normalization: f64,
}

impl Mollifier {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("mollifier scale must be positive, got {scale}"));
        }
        // ∫_{B_1} (1 - |z|²)³ dz = |S^{d-1}| B(d/2, 4) / 2
        let h = 0.5 * dim as f64;
        let beta = (ln_gamma(h) + ln_gamma(4.0) - ln_gamma(h + 4.0)).exp();
        let normalization = 2.0 / (unit_sphere_area(dim) * beta);
        let m = Self { dim, scale, normalization };
        let mass = m.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return invalid(format!("mollifier mass {mass} differs from 1"));
        }
        Ok(m)
    }

    pub fn support_radius(&self) -> f64 {
        self.scale
    }

    /// `φ` itself, at scale 1.
    pub fn profile(&self, z: &[f64]) -> f64 {
        let s: f64 = z.iter().map(|v| v * v).sum();
        if s >= 1.0 {
            0.0
        } else {
            self.normalization * (1.0 - s).powi(3)
        }
    }

    /// `φ_t(z)`.
    pub fn density(&self, z: &[f64]) -> f64 {
        let t = self.scale;
        let u: Vec<f64> = z.iter().map(|v| v / t).collect();
        self.profile(&u) * t.powi(-(self.dim as i32))
    }

    /// `∫ φ_t` by radial Gauss-Legendre quadrature (exact for the profile).
    pub fn mass(&self) -> f64 {
        let rule = GaussLegendre::new(16);
        let d = self.dim as i32;
        let radial = rule.integrate(0.0, 1.0, |rho| (1.0 - rho * rho).powi(3) * rho.powi(d - 1));
        self.normalization * unit_sphere_area(self.dim) * radial
    }

    /// `n` points with density `φ` (scale 1), by rejection from the cube.
    pub fn sample_profile(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, stream::MOLLIFIER, 0);
        let mut out = Vec::with_capacity(n);
        let mut z = vec![0.0; self.dim];
        while out.len() < n {
            for v in z.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let s: f64 = z.iter().map(|v| v * v).sum();
            if s < 1.0 && rng.random::<f64>() < (1.0 - s).powi(3) {
                out.push(z.clone());
            }
        }
        out
    }
}

/// `φ_t * f`.
///
/// In d = 1 the convolution is evaluated by Gauss-Legendre on the pieces of
/// `[-t, t]` cut at the kinks of `f`, which is exact for the piecewise
/// polynomial catalog entries. In higher dimension `φ_t` is replaced by the
/// empirical measure of a fixed sample from it; the convolution with that
/// probability measure is then exact, and so is the inequality it satisfies.
#[derive(Clone, Debug)]
pub struct Mollified<'a> {
    f: &'a TestFunction,
    phi: Mollifier,
    rule: GaussLegendre,
    kinks: Vec<f64>,
    shifts: Vec<Vec<f64>>,
}

impl<'a> Mollified<'a> {
    pub fn new(f: &'a TestFunction, phi: Mollifier, shift_samples: usize, seed: u64) -> Result<Self> {
        if phi.dim != f.dim() {
            return invalid("mollifier and function dimensions differ");
        }
        let shifts = if f.dim() == 1 {
            Vec::new()
        } else {
            if shift_samples == 0 {
                return invalid("need at least one shift sample in d >= 2");
            }
            phi.sample_profile(shift_samples, seed)
                .into_iter()
                .map(|z| z.into_iter().map(|v| v * phi.scale).collect())
                .collect()
        };
        Ok(Self { f, phi, rule: GaussLegendre::new(CONV_NODES), kinks: f.kinks_1d(), shifts })
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.phi
    }

    /// The shifts `z_j` of the empirical measure (empty in d = 1).
    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }

    fn value_1d(&self, x: f64) -> f64 {
        let t = self.phi.scale;
        // f(x - z) has kinks at z = x - k
        let breaks: Vec<f64> = self.kinks.iter().map(|k| x - k).collect();
        pieces(-t, t, &breaks)
            .into_iter()
            .map(|(lo, hi)| self.rule.integrate(lo, hi, |z| self.phi.density(&[z]) * self.f.eval(&[x - z])))
            .sum()
    }
}

impl ScalarField for Mollified<'_> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.f.dim() == 1 {
            return self.value_1d(x[0]);
        }
        let mut y = vec![0.0; x.len()];
        let mut acc = 0.0;
        for z in &self.shifts {
            for k in 0..x.len() {
                y[k] = x[k] - z[k];
            }
            acc += self.f.eval(&y);
        }
        acc / self.shifts.len() as f64
    }

    fn kinks_1d(&self) -> Vec<f64> {
        let t = self.phi.scale;
        let mut k: Vec<f64> = self.kinks.iter().flat_map(|k| [k - t, k + t]).collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k
    }

    fn constant_on_ball(&self, center: &[f64], radius: f64) -> Option<f64> {
        self.f.constant_on_ball(center, radius + self.phi.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;

    #[test]
    fn normalization_matches_closed_forms() {
        let m = Mollifier::new(1, 1.0).unwrap();
        assert!((m.profile(&[0.0]) - 35.0 / 32.0).abs() < 1e-14);
        // d = 2: ∫ (1 - ρ²)³ 2πρ dρ = π / 4
        let m = Mollifier::new(2, 1.0).unwrap();
        assert!((m.profile(&[0.0, 0.0]) - 4.0 / std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn unit_mass_at_every_scale() {
        for d in 1..5 {
            for t in [0.05, 0.2, 3.0] {
                assert!((Mollifier::new(d, t).unwrap().mass() - 1.0).abs() < 1e-12);
            }
        }
        let m = Mollifier::new(1, 0.2).unwrap();
        let (v, _) = integrate_adaptive(|z| m.density(&[z]), -0.3, 0.3, &[-0.2, 0.2], 0.0, 1e-13);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nonnegative_and_compactly_supported() {
        let m = Mollifier::new(1, 0.2).unwrap();
        for k in -100..=100 {
            let z = k as f64 * 0.005;
            let v = m.density(&[z]);
            assert!(v >= 0.0);
            if z.abs() >= 0.2 {
                assert_eq!(v, 0.0);
            }
        }
        assert!(Mollifier::new(1, 0.0).is_err());
    }

    #[test]
    fn convolution_preserves_linear_functions() {
        let f = TestFunction::affine(1, vec![2.0], 0.5).unwrap();
        let g = Mollified::new(&f, Mollifier::new(1, 0.2).unwrap(), 0, 1).unwrap();
        for x in [-1.0, 0.0, 0.3] {
            assert!((g.value(&[x]) - (2.0 * x + 0.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn convolution_of_indicator_matches_adaptive_oracle() {
        let f = TestFunction::ball_indicator(1, 0.5).unwrap();
        let phi = Mollifier::new(1, 0.1).unwrap();
        let g = Mollified::new(&f, phi.clone(), 0, 1).unwrap();
        for x in [0.0, 0.42, 0.47, 0.5, 0.55, 0.61] {
            let (oracle, _) = integrate_adaptive(
                |y| phi.density(&[x - y]) * f.eval(&[y]),
                x - 0.1,
                x + 0.1,
                &[-0.5, 0.5],
                0.0,
                1e-13,
            );
            assert!((g.value(&[x]) - oracle).abs() < 1e-11, "x={x}");
        }
        assert!((g.value(&[0.0]) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn profile_samples_have_the_right_second_moment() {
        // E|z|² under (1-|z|²)³ in d = 2: ∫ρ³(1-ρ²)³ / ∫ρ(1-ρ²)³ = 1/5
        let m = Mollifier::new(2, 1.0).unwrap();
        let zs = m.sample_profile(40_000, 3);
        let mean: f64 = zs.iter().map(|z| z[0] * z[0] + z[1] * z[1]).sum::<f64>() / zs.len() as f64;
        assert!((mean - 0.2).abs() < 0.005, "{mean}");
        assert!(zs.iter().all(|z| z[0] * z[0] + z[1] * z[1] < 1.0));
    }
}
