//! Machine-epsilon estimation and the representability floor.
//!
//! Two recurrences are supported. `Halving` divides by two at every step and
//! lands on the binary64 unit roundoff. `Compounding` divides the n-th iterate by
//! `2^n`, so the divisor compounds (1, 1/2, 1/8, 1/64, ...) and the loop
//! overshoots the unit roundoff by several binades before `1 + eps == 1`.
//! Resolution defaults are always derived from the halving estimate.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default multiplier applied to the machine epsilon when forming radii.
pub const DEFAULT_K: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonVariant {
    /// `eps_n = eps_{n-1} / 2^n`.
    Compounding,
    /// `eps_n = eps_{n-1} / 2`.
    Halving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCalibration {
    pub variant: EpsilonVariant,
    pub epsilon_0: f64,
    /// First iterate with `1 + epsilon == 1`.
    pub epsilon: f64,
    /// Last iterate with `1 + epsilon_prev > 1`.
    pub epsilon_prev: f64,
    pub iterations: u32,
    pub k: u32,
    /// Infinity norm of the reference point the resolution is scaled to.
    pub reference_norm: f64,
    /// `k * epsilon_prev * (1 + reference_norm)`.
    pub resolution: f64,
}

/// Runs the stopping loop from `epsilon_0` with `k = 4` and a reference at the origin.
pub fn estimate_machine_epsilon(epsilon_0: f64, variant: EpsilonVariant) -> Result<EpsilonCalibration> {
    calibrate(epsilon_0, variant, DEFAULT_K, 0.0)
}

/// Same as [`estimate_machine_epsilon`] with an explicit `k` and reference norm.
pub fn calibrate(epsilon_0: f64, variant: EpsilonVariant, k: u32, reference_norm: f64) -> Result<EpsilonCalibration> {
    if !epsilon_0.is_finite() || epsilon_0 <= 0.0 {
        return Err(Error::InvalidInput(format!("epsilon_0 must be positive and finite, got {epsilon_0}")));
    }
    if !reference_norm.is_finite() || reference_norm < 0.0 {
        return Err(Error::InvalidInput(format!(
            "reference norm must be finite and non-negative, got {reference_norm}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if 1.0 + epsilon_0 == 1.0 {
        return Err(Error::InvalidInput(format!(
            "epsilon_0 = {epsilon_0:e} is already absorbed by 1.0; start from a larger value"
        )));
    }

    let mut prev = epsilon_0;
    let mut n: u32 = 0;
    let eps = loop {
        n += 1;
        let next = match variant {
            EpsilonVariant::Halving => prev / 2.0,
            // 2^n overflows to +inf past n = 1023, which sends the iterate to 0
            // and terminates the loop.
            EpsilonVariant::Compounding => prev / 2f64.powi(n as i32),
        };
        if 1.0 + next == 1.0 {
            break next;
        }
        prev = next;
    };

    Ok(EpsilonCalibration {
        variant,
        epsilon_0,
        epsilon: eps,
        epsilon_prev: prev,
        iterations: n,
        k,
        reference_norm,
        resolution: f64::from(k) * prev * (1.0 + reference_norm),
    })
}

/// Halving-loop estimate of the unit roundoff from `epsilon_0 = 1`, computed once.
pub fn machine_epsilon() -> f64 {
    static EPS: OnceLock<f64> = OnceLock::new();
    *EPS.get_or_init(|| {
        estimate_machine_epsilon(1.0, EpsilonVariant::Halving).expect("1.0 is a valid starting value").epsilon_prev
    })
}

/// Smallest radius around `coords` at which distinct neighbors are resolvable:
/// `k * eps * (1 + |x|_inf)`.
pub fn representability_floor(coords: &[f64], k: u32) -> f64 {
    let norm = coords.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    f64::from(k) * machine_epsilon() * (1.0 + norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_from_one_finds_unit_roundoff() {
        let cal = estimate_machine_epsilon(1.0, EpsilonVariant::Halving).unwrap();
        assert_eq!(cal.epsilon_prev, f64::EPSILON);
        assert_eq!(cal.epsilon, f64::EPSILON / 2.0);
        assert!(1.0 + cal.epsilon_prev > 1.0);
        assert_eq!(1.0 + cal.epsilon, 1.0);
        assert_eq!(cal.iterations, 53);
    }

    #[test]
    fn compounding_recurrence_grows_divisor() {
        // exponents 1, 3, 6, 10, 15, 21, 28, 36, 45, 55: triangular numbers
        let cal = estimate_machine_epsilon(1.0, EpsilonVariant::Compounding).unwrap();
        assert_eq!(cal.iterations, 10);
        assert_eq!(cal.epsilon_prev, 2f64.powi(-45));
        assert_eq!(cal.epsilon, 2f64.powi(-55));
        assert_eq!(1.0 + cal.epsilon, 1.0);
        assert!(1.0 + cal.epsilon_prev > 1.0);
    }

    #[test]
    fn rejects_bad_start() {
        assert!(matches!(estimate_machine_epsilon(0.0, EpsilonVariant::Halving), Err(Error::InvalidInput(_))));
        assert!(estimate_machine_epsilon(-1.0, EpsilonVariant::Compounding).is_err());
        assert!(estimate_machine_epsilon(f64::NAN, EpsilonVariant::Compounding).is_err());
        assert!(estimate_machine_epsilon(f64::INFINITY, EpsilonVariant::Halving).is_err());
        assert!(estimate_machine_epsilon(1e-30, EpsilonVariant::Halving).is_err());
    }

    #[test]
    fn huge_start_still_terminates() {
        let cal = estimate_machine_epsilon(1e300, EpsilonVariant::Compounding).unwrap();
        assert_eq!(1.0 + cal.epsilon, 1.0);
        let cal = estimate_machine_epsilon(1e300, EpsilonVariant::Halving).unwrap();
        assert!(1.0 + cal.epsilon_prev > 1.0);
        assert_eq!(1.0 + cal.epsilon_prev / 2.0, 1.0);
    }

    #[test]
    fn resolution_scales_with_reference() {
        let cal = calibrate(1.0, EpsilonVariant::Halving, 4, 1.0).unwrap();
        assert_eq!(cal.resolution, 4.0 * f64::EPSILON * 2.0);
        assert_eq!(representability_floor(&[1.0, -1.0], 4), cal.resolution);
    }
}
