//! Closed-form superlevel sets of `m_f` for the indicator of `[-R, R]`.
//!
//! With `λ(a, r)` the fraction of `(a - r, a + r)` covered by `[-R, R]`,
//! `m_f = 2λ(1 - λ)`, so `m_f > κ` iff `λ_- < λ < λ_+` with
//! `λ_± = (1 ± √(1 - 2κ)) / 2`. On each of its monotone pieces `λ` has the
//! form `α + β / r`, which gives the endpoints directly.

use crate::quadrature::integrate_adaptive;
use crate::weak_norm::{Constants, Domain};

/// `[(lo, hi, α, β)]`: the pieces of `r ↦ λ(a, r)` on `(0, ∞)`.
fn lambda_pieces(half_width: f64, a: f64) -> Vec<(f64, f64, f64, f64)> {
    let big_r = half_width;
    let s = a.abs();
    if s <= big_r {
        vec![
            (0.0, big_r - s, 1.0, 0.0),
            (big_r - s, big_r + s, 0.5, 0.5 * (big_r - s)),
            (big_r + s, f64::INFINITY, 0.0, big_r),
        ]
    } else {
        vec![
            (0.0, s - big_r, 0.0, 0.0),
            (s - big_r, s + big_r, 0.5, -0.5 * (s - big_r)),
            (s + big_r, f64::INFINITY, 0.0, big_r),
        ]
    }
}

/// `{r : c_lo < α + β / r < c_hi}` intersected with `(lo, hi)`.
fn solve_piece(lo: f64, hi: f64, alpha: f64, beta: f64, c_lo: f64, c_hi: f64) -> Option<(f64, f64)> {
    if lo >= hi {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    if beta == 0.0 {
        return (c_lo < alpha && alpha < c_hi).then_some((a, b));
    }
    // β / r lies in (c_lo - α, c_hi - α)
    let (u_lo, u_hi) = (c_lo - alpha, c_hi - alpha);
    if beta > 0.0 {
        // r in (β / u_hi, β / u_lo)
        if u_hi <= 0.0 {
            return None;
        }
        a = a.max(beta / u_hi);
        if u_lo > 0.0 {
            b = b.min(beta / u_lo);
        }
    } else {
        // β / r increases toward 0⁻: r in (β / u_lo, β / u_hi) with the
        // signs handled below
        if u_lo >= 0.0 {
            return None;
        }
        a = a.max(beta / u_lo);
        if u_hi < 0.0 {
            b = b.min(beta / u_hi);
        }
    }
    (a < b).then_some((a, b))
}

/// `{r > 0 : m_f(a, r) > κ}` for the indicator of `[-R, R]`.
pub fn indicator_superlevel(half_width: f64, a: f64, kappa: f64) -> Vec<(f64, f64)> {
    if !(kappa > 0.0) || kappa >= 0.5 {
        return Vec::new();
    }
    let w = (1.0 - 2.0 * kappa).sqrt();
    let (l_lo, l_hi) = (0.5 * (1.0 - w), 0.5 * (1.0 + w));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi, alpha, beta) in lambda_pieces(half_width, a) {
        if let Some((x, y)) = solve_piece(lo, hi, alpha, beta, l_lo, l_hi) {
            match out.last_mut() {
                Some(last) if (last.1 - x).abs() <= 1e-15 * x.max(1.0) => last.1 = y,
                _ => out.push((x, y)),
            }
        }
    }
    out
}

/// `ν_p({m_f > κ} ∩ ω × [r_min, r_max])`, by adaptive integration over `a`.
pub fn indicator_measure(half_width: f64, p: f64, kappa: f64, domain: &Domain, constants: &Constants) -> (f64, f64) {
    let (r_min, r_max) = (domain.r_min, domain.r_max);
    let weight = |a: f64| -> f64 {
        indicator_superlevel(half_width, a, kappa)
            .into_iter()
            .map(|(lo, hi)| constants.radial_weight(p, lo.max(r_min), hi.min(r_max)))
            .sum()
    };
    let (lo, hi) = (domain.omega.lo[0], domain.omega.hi[0]);
    let w = (1.0 - 2.0 * kappa).max(0.0).sqrt();
    // the weight changes form where the lower endpoint meets r_min
    let mut breaks = vec![-half_width, 0.0, half_width];
    for edge in [-half_width, half_width] {
        for side in [-1.0, 1.0] {
            breaks.push(edge + side * r_min * w);
        }
    }
    integrate_adaptive(weight, lo, hi, &breaks, 1e-13, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillation::interval_indicator_oscillation;
    use crate::weak_norm::BoxDomain;

    #[test]
    fn intervals_agree_with_direct_evaluation() {
        let r0 = 0.5;
        for &a in &[0.0, 0.1, 0.3, 0.49, 0.5, 0.51, 0.8, 1.7, -0.2] {
            for &kappa in &[1e-4, 1e-2, 0.1, 0.3, 0.49] {
                let ivs = indicator_superlevel(r0, a, kappa);
                for k in 0..4000 {
                    let r = 1e-4 * (1e8_f64).powf(k as f64 / 3999.0);
                    let m = interval_indicator_oscillation(r0, 0.0, a, r);
                    let inside = ivs.iter().any(|(lo, hi)| *lo < r && r < *hi);
                    // skip grid points within rounding of an endpoint
                    let near = ivs.iter().any(|(lo, hi)| (r / lo - 1.0).abs() < 1e-9 || (r / hi - 1.0).abs() < 1e-9);
                    if !near {
                        assert_eq!(m > kappa, inside, "a={a} κ={kappa} r={r} m={m} {ivs:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn no_superlevel_above_one_half() {
        assert!(indicator_superlevel(0.5, 0.2, 0.5).is_empty());
        assert!(indicator_superlevel(0.5, 0.2, 0.7).is_empty());
    }

    #[test]
    fn measure_matches_brute_force_lattice() {
        let dom = Domain::new(BoxDomain::cube(1, -1.0, 1.0).unwrap(), 1e-2, 10.0).unwrap();
        let kappa = 0.05;
        let (nu, err) = indicator_measure(0.5, 1.0, kappa, &dom, &Constants::default());
        assert!(err < 1e-8);
        // midpoint lattice in (a, log r)
        let (na, nr) = (2000, 2000);
        let (l0, l1) = (dom.r_min.ln(), dom.r_max.ln());
        let mut acc = 0.0;
        for i in 0..na {
            let a = -1.0 + 2.0 * (i as f64 + 0.5) / na as f64;
            for j in 0..nr {
                let r = (l0 + (l1 - l0) * (j as f64 + 0.5) / nr as f64).exp();
                if interval_indicator_oscillation(0.5, 0.0, a, r) > kappa {
                    // dr / r² = d(ln r) / r
                    acc += 1.0 / r;
                }
            }
        }
        let brute = acc * (2.0 / na as f64) * ((l1 - l0) / nr as f64);
        assert!((nu - brute).abs() < 0.01 * nu, "{nu} vs {brute}");
    }
}
