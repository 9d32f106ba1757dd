//! Pointwise constitutive laws: the isentropic pressure, its potential, the
//! double-well phase potential, and the semi-implicit splitting of its
//! derivative used by the time stepper.

use crate::error::{Error, Result};

/// Barotropic gamma-law pressure p = a rho^gamma. The potential P solves
/// P'(rho) rho - P(rho) = p(rho) with P(0) = 0, giving P = a rho^gamma/(gamma-1).
#[derive(Clone, Copy, Debug)]
pub struct GammaLaw {
    pub a: f64,
    pub gamma: f64,
}

impl GammaLaw {
    pub fn new(a: f64, gamma: f64) -> Result<GammaLaw> {
        if !(a > 0.0) {
            return Err(Error::config(format!("pressure coefficient a must be > 0, got {a}")));
        }
        if !(gamma > 1.0) {
            return Err(Error::config(format!("adiabatic exponent gamma must be > 1, got {gamma}")));
        }
        Ok(GammaLaw { a, gamma })
    }

    /// p(rho). Density must be nonnegative.
    pub fn p(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0, "pressure of negative density {rho}");
        self.a * rho.powf(self.gamma)
    }

    pub fn p_deriv(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0, "pressure slope at negative density {rho}");
        self.a * self.gamma * rho.powf(self.gamma - 1.0)
    }

    /// P(rho) = a rho^gamma / (gamma - 1).
    pub fn potential(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0, "pressure potential of negative density {rho}");
        self.a * rho.powf(self.gamma) / (self.gamma - 1.0)
    }

    pub fn potential_deriv(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0, "potential slope at negative density {rho}");
        self.a * self.gamma / (self.gamma - 1.0) * rho.powf(self.gamma - 1.0)
    }

    /// Bregman distance of the potential: P(x) - P(y) - P'(y)(x - y).
    /// Nonnegative because P is convex; this is the exact remainder in the
    /// discrete internal-energy balance.
    pub fn bregman(&self, x: f64, y: f64) -> f64 {
        self.potential(x) - self.potential(y) - self.potential_deriv(y) * (x - y)
    }
}

/// Double-well potential with quadratic growth outside [-1, 1]:
/// (c+1)^2 below, (c^2-1)^2/4 inside, (c-1)^2 above. C^2 at the joins.
pub fn double_well(c: f64) -> f64 {
    if c < -1.0 {
        (c + 1.0) * (c + 1.0)
    } else if c <= 1.0 {
        let s = c * c - 1.0;
        0.25 * s * s
    } else {
        (c - 1.0) * (c - 1.0)
    }
}

/// F'(c) for the potential above.
pub fn double_well_deriv(c: f64) -> f64 {
    if c < -1.0 {
        2.0 * (c + 1.0)
    } else if c <= 1.0 {
        c * c * c - c
    } else {
        2.0 * (c - 1.0)
    }
}

/// Semi-implicit splitting of F': the convex part (c^3 and the outer
/// branches) is taken at the new value, the concave part (-c) at the old one.
pub fn f_split(c_k: f64, c_km1: f64) -> f64 {
    if c_k < -1.0 {
        2.0 * (c_k + 1.0)
    } else if c_k <= 1.0 {
        c_k * c_k * c_k - c_km1
    } else {
        2.0 * (c_k - 1.0)
    }
}

/// Derivative of `f_split` in its first argument (active branch).
pub fn f_split_deriv(c_k: f64) -> f64 {
    if (-1.0..=1.0).contains(&c_k) {
        3.0 * c_k * c_k
    } else {
        2.0
    }
}

/// Admissibility of the flux-diffusion exponent given the pressure law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonVerdict {
    /// epsilon lies in the open window (f64::INFINITY marks an unbounded top).
    Admissible { window: (f64, f64) },
    /// gamma admits a window but epsilon falls outside it.
    OutsideWindow { window: (f64, f64) },
    /// gamma is too small for any admissible epsilon.
    NoWindow { gamma_min: f64 },
}

impl EpsilonVerdict {
    pub fn is_admissible(&self) -> bool {
        matches!(self, EpsilonVerdict::Admissible { .. })
    }
}

/// Open admissibility window for epsilon, or None when gamma is too small.
/// gamma >= 2 allows any positive epsilon; below that the top shrinks to
/// 2 gamma - 1 - d/3 and closes entirely at gamma = 4d/(1+3d) (d=2; the
/// three-dimensional convergence theory needs gamma > 3/2, which is the
/// binding constraint there).
pub fn epsilon_window(d: usize, gamma: f64) -> Option<(f64, f64)> {
    let gamma_min = epsilon_gamma_min(d);
    if gamma >= 2.0 {
        Some((0.0, f64::INFINITY))
    } else if gamma > gamma_min {
        Some((0.0, 2.0 * gamma - 1.0 - d as f64 / 3.0))
    } else {
        None
    }
}

pub fn epsilon_gamma_min(d: usize) -> f64 {
    let window_min = 4.0 * d as f64 / (1.0 + 3.0 * d as f64);
    let convergence_min = if d == 3 { 1.5 } else { 0.0 };
    window_min.max(convergence_min)
}

pub fn epsilon_verdict(d: usize, gamma: f64, epsilon: f64) -> EpsilonVerdict {
    match epsilon_window(d, gamma) {
        None => EpsilonVerdict::NoWindow {
            gamma_min: epsilon_gamma_min(d),
        },
        Some(window) => {
            if epsilon > window.0 && epsilon < window.1 {
                EpsilonVerdict::Admissible { window }
            } else {
                EpsilonVerdict::OutsideWindow { window }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_two_values() {
        let law = GammaLaw::new(1.0, 2.0).unwrap();
        assert_eq!(law.p(2.0), 4.0);
        assert_eq!(law.potential(2.0), 4.0);
        assert_eq!(law.p(0.0), 0.0);
        assert_eq!(law.potential(0.0), 0.0);
    }

    #[test]
    fn rejects_bad_law_parameters() {
        assert!(GammaLaw::new(0.0, 2.0).is_err());
        assert!(GammaLaw::new(-1.0, 2.0).is_err());
        assert!(GammaLaw::new(1.0, 1.0).is_err());
        assert!(GammaLaw::new(1.0, f64::NAN).is_err());
    }

    #[test]
    #[should_panic]
    fn rejects_negative_density() {
        let law = GammaLaw::new(1.0, 2.0).unwrap();
        law.p(-0.1);
    }

    #[test]
    fn potential_solves_defining_identity() {
        // P' rho - P = p, with P' checked against a centered difference.
        for gamma in [1.4, 2.0, 3.0] {
            let law = GammaLaw::new(0.7, gamma).unwrap();
            for rho in [0.5, 1.0, 3.0] {
                let lhs = law.potential_deriv(rho) * rho - law.potential(rho);
                assert!((lhs - law.p(rho)).abs() < 1e-12 * law.p(rho).max(1.0));
                let dh = 1e-6;
                let fd = (law.potential(rho + dh) - law.potential(rho - dh)) / (2.0 * dh);
                assert!((fd - law.potential_deriv(rho)).abs() < 1e-5 * law.potential_deriv(rho).abs());
                let fdp = (law.p(rho + dh) - law.p(rho - dh)) / (2.0 * dh);
                assert!((fdp - law.p_deriv(rho)).abs() < 1e-5 * law.p_deriv(rho).abs().max(1.0));
                assert!(law.p_deriv(rho) > 0.0);
            }
        }
    }

    #[test]
    fn bregman_nonnegative_and_quadratic_for_gamma_two() {
        let law = GammaLaw::new(1.0, 2.0).unwrap();
        // gamma = 2: P(rho) = rho^2, so the Bregman remainder is (x-y)^2.
        for (x, y) in [(1.0, 2.0), (0.3, 0.31), (5.0, 0.1)] {
            let b = law.bregman(x, y);
            assert!((b - (x - y) * (x - y)).abs() < 1e-12 * b.max(1.0));
        }
        let law = GammaLaw::new(2.0, 1.7).unwrap();
        for i in 0..100 {
            let x = 0.01 + 0.07 * i as f64;
            let y = 7.0 - 0.06 * i as f64;
            assert!(law.bregman(x, y) >= 0.0);
        }
        assert_eq!(law.bregman(1.3, 1.3), 0.0);
    }

    #[test]
    fn double_well_branch_values() {
        assert_eq!(double_well(0.0), 0.25);
        assert_eq!(double_well(-3.0), 4.0);
        assert_eq!(double_well(1.0), 0.0);
        assert_eq!(double_well(-1.0), 0.0);
        assert_eq!(double_well(2.0), 1.0);
    }

    #[test]
    fn double_well_is_c2_at_joins() {
        let dh = 1e-7;
        for c in [-1.0, 1.0] {
            // Values and first derivatives vanish from both sides.
            assert!(double_well(c - dh) < 1e-13);
            assert!(double_well(c + dh) < 1e-13);
            assert!(double_well_deriv(c - dh).abs() < 1e-6);
            assert!(double_well_deriv(c + dh).abs() < 1e-6);
            // One-sided second derivatives are both 2.
            let inner = (double_well_deriv(c) - double_well_deriv(c - dh)) / dh;
            let outer = (double_well_deriv(c + dh) - double_well_deriv(c)) / dh;
            assert!((inner - 2.0).abs() < 1e-5, "inner {inner}");
            assert!((outer - 2.0).abs() < 1e-5, "outer {outer}");
        }
        // F' matches a centered difference of F away from the joins.
        for c in [-2.5, -0.7, 0.0, 0.4, 1.9] {
            let fd = (double_well(c + dh) - double_well(c - dh)) / (2.0 * dh);
            assert!((fd - double_well_deriv(c)).abs() < 1e-6);
        }
    }

    #[test]
    fn f_split_branches() {
        assert_eq!(f_split(2.0, 123.0), 2.0);
        assert_eq!(f_split(0.5, 0.2), 0.125 - 0.2);
        assert_eq!(f_split(-1.0, -1.0), 0.0);
        // Adjacent branches agree at the join when c_km1 sits at the well.
        assert_eq!(2.0 * (-1.0_f64 + 1.0), 0.0);
        assert_eq!((-1.0_f64).powi(3) - (-1.0), 0.0);
        // Steady wells and the unstable center are exact zeros.
        for c in [-1.0, 0.0, 1.0] {
            assert_eq!(f_split(c, c), 0.0);
        }
    }

    #[test]
    fn f_split_derivative_matches_branches() {
        assert_eq!(f_split_deriv(2.0), 2.0);
        assert_eq!(f_split_deriv(-3.0), 2.0);
        assert_eq!(f_split_deriv(0.5), 0.75);
        for c in [-0.9, 0.0, 0.3, 2.0] {
            let dh = 1e-6;
            let fd = (f_split(c + dh, 0.1) - f_split(c - dh, 0.1)) / (2.0 * dh);
            assert!((fd - f_split_deriv(c)).abs() < 1e-5);
        }
    }

    #[test]
    fn epsilon_admissibility_cases() {
        // gamma = 2: any positive epsilon.
        assert!(epsilon_verdict(2, 2.0, 1.0).is_admissible());
        assert!(!epsilon_verdict(2, 2.0, 0.0).is_admissible());
        // gamma = 1.5 in 2D: window (0, 4/3), so epsilon = 2 falls outside.
        match epsilon_verdict(2, 1.5, 2.0) {
            EpsilonVerdict::OutsideWindow { window } => {
                assert!((window.1 - 4.0 / 3.0).abs() < 1e-15);
            }
            v => panic!("expected OutsideWindow, got {v:?}"),
        }
        assert!(epsilon_verdict(2, 1.5, 1.0).is_admissible());
        // gamma = 1.1 in 2D sits below the 8/7 threshold.
        match epsilon_verdict(2, 1.1, 0.5) {
            EpsilonVerdict::NoWindow { gamma_min } => {
                assert!((gamma_min - 8.0 / 7.0).abs() < 1e-15);
            }
            v => panic!("expected NoWindow, got {v:?}"),
        }
        // d = 3 is bound by the convergence threshold 3/2.
        assert_eq!(epsilon_gamma_min(3), 1.5);
        assert!(matches!(
            epsilon_verdict(3, 1.4, 0.1),
            EpsilonVerdict::NoWindow { .. }
        ));
    }
}
