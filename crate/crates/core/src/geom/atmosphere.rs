use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// International Standard Atmosphere, troposphere plus the isothermal layer above it.
pub struct Isa;

impl Isa {
    pub const T0: f64 = 288.15;
    pub const P0: f64 = 101_325.0;
    pub const LAPSE: f64 = 0.0065;
    pub const TROPOPAUSE_M: f64 = 11_000.0;
    pub const G0: f64 = 9.806_65;
    pub const R: f64 = 287.05;
    pub const GAMMA: f64 = 1.4;
    pub const MU_REF: f64 = 1.716e-5;
    pub const T_REF: f64 = 273.15;
    pub const SUTHERLAND: f64 = 110.4;
    pub const M_PER_KFT: f64 = 304.8;

    /// Temperature [K] and pressure [Pa] at geometric altitude `h` metres.
    pub fn temperature_pressure(h: f64) -> (f64, f64) {
        let expo = Self::G0 / (Self::LAPSE * Self::R);
        if h <= Self::TROPOPAUSE_M {
            let t = Self::T0 - Self::LAPSE * h;
            (t, Self::P0 * (t / Self::T0).powf(expo))
        } else {
            let t11 = Self::T0 - Self::LAPSE * Self::TROPOPAUSE_M;
            let p11 = Self::P0 * (t11 / Self::T0).powf(expo);
            let p = p11 * (-Self::G0 * (h - Self::TROPOPAUSE_M) / (Self::R * t11)).exp();
            (t11, p)
        }
    }

    pub fn density(h: f64) -> f64 {
        let (t, p) = Self::temperature_pressure(h);
        p / (Self::R * t)
    }

    pub fn speed_of_sound(t: f64) -> f64 {
        (Self::GAMMA * Self::R * t).sqrt()
    }

    /// Sutherland's law.
    pub fn viscosity(t: f64) -> f64 {
        Self::MU_REF * (t / Self::T_REF).powf(1.5) * (Self::T_REF + Self::SUTHERLAND)
            / (t + Self::SUTHERLAND)
    }
}

/// Sampling ranges of the four flight inputs: altitude [kft], Mach, centerline
/// length [m], angle of attack [deg].
pub const FLIGHT_RANGES: [(f64, f64); 4] = [(0.0, 40.0), (0.05, 0.5), (0.1, 10.0), (-8.0, 16.0)];

/// Reynolds number based on centerline length.
pub fn derive_reynolds(altitude_kft: f64, mach: f64, centerline_length: f64) -> f64 {
    let h = altitude_kft * Isa::M_PER_KFT;
    let (t, p) = Isa::temperature_pressure(h);
    let rho = p / (Isa::R * t);
    let v = mach * Isa::speed_of_sound(t);
    rho * v * centerline_length / Isa::viscosity(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightCondition {
    pub altitude_kft: f64,
    pub mach: f64,
    pub centerline_length: f64,
    pub alpha_deg: f64,
    pub reynolds: f64,
    pub log10_reynolds: f64,
}

impl FlightCondition {
    /// Builds a condition and derives its Reynolds number. Inputs must lie in
    /// [`FLIGHT_RANGES`].
    pub fn new(altitude_kft: f64, mach: f64, centerline_length: f64, alpha_deg: f64) -> Result<Self> {
        let names = ["altitude_kft", "mach", "centerline_length", "alpha_deg"];
        let vals = [altitude_kft, mach, centerline_length, alpha_deg];
        for k in 0..4 {
            let (lo, hi) = FLIGHT_RANGES[k];
            let tol = 1e-9 * (hi - lo);
            if !vals[k].is_finite() || vals[k] < lo - tol || vals[k] > hi + tol {
                return Err(Error::Domain(format!(
                    "{} = {} outside [{lo}, {hi}]",
                    names[k], vals[k]
                )));
            }
        }
        let reynolds = derive_reynolds(altitude_kft, mach, centerline_length);
        Ok(Self {
            altitude_kft,
            mach,
            centerline_length,
            alpha_deg,
            reynolds,
            log10_reynolds: reynolds.log10(),
        })
    }

    /// Returns the same condition at a different angle of attack.
    pub fn with_alpha(&self, alpha_deg: f64) -> Result<Self> {
        Self::new(self.altitude_kft, self.mach, self.centerline_length, alpha_deg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sea_level_reynolds() {
        // rho = 1.225, a = 340.3, mu = 1.789e-5 by hand.
        let hand = 1.225 * 0.3 * 340.3 * 1.0 / 1.789e-5;
        let re = derive_reynolds(0.0, 0.3, 1.0);
        assert!((re / hand - 1.0).abs() < 0.02, "{re} vs {hand}");
        assert!((re / 7.0e6 - 1.0).abs() < 0.02);
        assert!((Isa::density(0.0) - 1.225).abs() < 1e-3);
    }

    #[test]
    fn reynolds_linear_in_length() {
        let a = derive_reynolds(12.0, 0.2, 1.5);
        let b = derive_reynolds(12.0, 0.2, 3.0);
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn reynolds_drops_with_altitude() {
        assert!(derive_reynolds(40.0, 0.3, 2.0) < derive_reynolds(0.0, 0.3, 2.0));
    }

    #[test]
    fn continuous_across_tropopause() {
        let kft = Isa::TROPOPAUSE_M / Isa::M_PER_KFT;
        let eps = 1e-9;
        let lo = derive_reynolds(kft - eps, 0.4, 1.0);
        let hi = derive_reynolds(kft + eps, 0.4, 1.0);
        assert!(((lo - hi) / lo).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_condition_rejected() {
        assert!(FlightCondition::new(41.0, 0.3, 1.0, 0.0).is_err());
        assert!(FlightCondition::new(10.0, 0.3, 1.0, 17.0).is_err());
        let fc = FlightCondition::new(10.0, 0.3, 1.0, 2.0).unwrap();
        assert!((fc.log10_reynolds - fc.reynolds.log10()).abs() == 0.0);
    }
}
