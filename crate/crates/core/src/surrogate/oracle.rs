//! Synthetic closed-form aerodynamics used in place of CFD labels.
//!
//! Lifting-line lift slope, a Schlichting-style turbulent flat-plate friction
//! floor and a sweep-dependent span efficiency. The numbers are engineering
//! conventions only; they are not meant to reproduce any CFD dataset.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{loft, planform_stations, FlightCondition, PlanformParams, SurfaceOptions, SurfacePointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Zero-lift angle per unit `c2`, degrees (`alpha0 = -camber_deg * c2`).
    pub camber_deg: f64,
    pub efficiency_base: f64,
    pub efficiency_sweep: f64,
    /// Wetted-to-reference area ratio applied to the friction coefficient.
    pub wetted_ratio: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            camber_deg: 2.0,
            efficiency_base: 0.85,
            efficiency_sweep: 0.05,
            wetted_ratio: 2.0 * (1.0 + 0.2 * 0.12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeroCoefficients {
    pub cl: f64,
    pub cd: f64,
    pub cm: f64,
    pub ld: f64,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub coefficients: AeroCoefficients,
    pub surface: SurfacePointCloud,
}

impl OracleConfig {
    pub fn zero_lift_alpha_deg(&self, p: &PlanformParams) -> f64 {
        -self.camber_deg * p.c2
    }

    pub fn span_efficiency(&self, p: &PlanformParams) -> f64 {
        self.efficiency_base - self.efficiency_sweep * (p.s1.to_radians().tan() - 1.0).powi(2)
    }

    /// Integrated coefficients of a planform at a flight condition.
    pub fn coefficients(&self, p: &PlanformParams, fc: &FlightCondition) -> Result<AeroCoefficients> {
        let st = planform_stations(p)?;
        let ar = st.aspect_ratio();
        let slope = 2.0 * std::f64::consts::PI * ar / (ar + 2.0);
        let da = (fc.alpha_deg - self.zero_lift_alpha_deg(p)).to_radians();
        let cl = slope * da;
        let cd0 = self.wetted_ratio * 0.455 / fc.log10_reynolds.powf(2.58);
        let e = self.span_efficiency(p);
        let cd = cd0 + cl * cl / (std::f64::consts::PI * e * ar);

        // Area-weighted quarter-chord line as the aerodynamic centre.
        let s = &st.0;
        let mut moment_arm = 0.0;
        let mut area = 0.0;
        for k in 0..3 {
            let dy = s[k + 1].y - s[k].y;
            let a = 0.5 * (s[k].chord + s[k + 1].chord) * dy;
            let xq = 0.5 * (s[k].le_x + s[k + 1].le_x) + 0.25 * 0.5 * (s[k].chord + s[k + 1].chord);
            moment_arm += a * xq;
            area += a;
        }
        let cm = -cl * moment_arm / area;
        Ok(AeroCoefficients {
            cl,
            cd,
            cm,
            ld: cl / cd,
        })
    }

    /// Coefficients plus `Cp`, `Cfx`, `Cfz` on a lofted surface.
    pub fn evaluate(&self, p: &PlanformParams, fc: &FlightCondition, opts: &SurfaceOptions) -> Result<OracleResult> {
        let coefficients = self.coefficients(p, fc)?;
        let lofted = loft(p, opts)?;
        let da = (fc.alpha_deg - self.zero_lift_alpha_deg(p)).to_radians();
        let n = lofted.samples.len();
        let (mut cp, mut cfx, mut cfz) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for s in &lofted.samples {
            let side = if s.upper { 1.0 } else { -1.0 };
            let load = -4.0 * da * ((1.0 - s.xi) / s.xi).sqrt();
            cp.push((side * load).clamp(-2.0, 2.0));
            let re_x = fc.reynolds * s.xi * s.local_chord;
            let cf = 0.0592 * re_x.powf(-0.2);
            cfx.push(cf);
            cfz.push(cf * s.slope);
        }
        let mut surface = lofted.cloud;
        surface.cp = Some(cp);
        surface.cfx = Some(cfx);
        surface.cfz = Some(cfz);
        Ok(OracleResult {
            coefficients,
            surface,
        })
    }
}

/// Oracle evaluation with the default configuration.
pub fn oracle_aero(p: &PlanformParams, fc: &FlightCondition, opts: &SurfaceOptions) -> Result<OracleResult> {
    OracleConfig::default().evaluate(p, fc, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{lhs_conditions, lhs_planforms, ParamBox};

    #[test]
    fn zero_lift_angle_gives_no_lift_or_load() {
        let cfg = OracleConfig::default();
        for p in lhs_planforms(&ParamBox::default(), 10, 1).unwrap() {
            let a0 = cfg.zero_lift_alpha_deg(&p);
            let fc = FlightCondition::new(10.0, 0.3, 2.0, a0).unwrap();
            let r = cfg.evaluate(&p, &fc, &SurfaceOptions::new(6, 6)).unwrap();
            assert!(r.coefficients.cl.abs() < 1e-15);
            assert!(r.surface.cp.unwrap().iter().all(|&c| c == 0.0));
        }
        let flat = OracleConfig {
            camber_deg: 0.0,
            ..cfg
        };
        let p = ParamBox::default().midpoint();
        let fc = FlightCondition::new(10.0, 0.3, 2.0, 0.0).unwrap();
        let r = flat.evaluate(&p, &fc, &SurfaceOptions::new(6, 6)).unwrap();
        assert_eq!(r.coefficients.cl, 0.0);
        assert!(r.surface.cp.unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn drag_is_positive() {
        let cfg = OracleConfig::default();
        let ps = lhs_planforms(&ParamBox::default(), 200, 3).unwrap();
        let fcs = lhs_conditions(200, 4).unwrap();
        for (p, fc) in ps.iter().zip(&fcs) {
            assert!(cfg.coefficients(p, fc).unwrap().cd > 0.0);
        }
    }

    #[test]
    fn lift_to_drag_has_interior_maximum_in_alpha() {
        let cfg = OracleConfig::default();
        let ps = lhs_planforms(&ParamBox::default(), 100, 9).unwrap();
        let fcs = lhs_conditions(100, 10).unwrap();
        for (p, fc) in ps.iter().zip(&fcs) {
            let scan: Vec<f64> = (0..=48)
                .map(|k| {
                    let fc = fc.with_alpha(-8.0 + 0.5 * k as f64).unwrap();
                    cfg.coefficients(p, &fc).unwrap().ld
                })
                .collect();
            let (imax, _) = scan
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            assert!(imax > 0 && imax < scan.len() - 1, "max at edge {imax}");
        }
    }

    #[test]
    fn deterministic() {
        let p = ParamBox::default().midpoint();
        let fc = FlightCondition::new(5.0, 0.2, 1.0, 3.0).unwrap();
        let a = oracle_aero(&p, &fc, &SurfaceOptions::new(8, 8)).unwrap();
        let b = oracle_aero(&p, &fc, &SurfaceOptions::new(8, 8)).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert_eq!(a.surface, b.surface);
    }
}
