//! Planform parameterization, surface lofting, Latin hypercube sampling and
//! flight-condition derivation.
//!
//! All length-like planform quantities are fractions of the centerline chord
//! `C1`, so a planform always has a unit-chord root at `y = 0` and a leading
//! edge apex at the origin. `x` is streamwise, `y` spanwise, `z` up.

mod atmosphere;
mod lhs;
mod surface;

pub use atmosphere::{derive_reynolds, FlightCondition, Isa, FLIGHT_RANGES};
pub use lhs::{lhs_conditions, lhs_planforms, lhs_sample, lhs_unit, SamplingRange, SamplingScale};
pub use surface::{
    loft, lofted_planform_area, synthesize_surface, LoftedSurface, SurfaceOptions, SurfacePointCloud, SurfaceSample,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of planform parameters.
pub const N_PARAMS: usize = 9;

/// Canonical parameter order, shared by every vector form of a planform.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["b1", "b2", "b3", "c2", "c3", "c4", "s1", "s3", "x3"];

/// The nine planform parameters.
///
/// `b*` are span fractions, `c*` chord fractions, `x3` the streamwise
/// position of the outboard break (all relative to `C1`); `s1`, `s3` are
/// leading-edge sweep angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanformParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub s1: f64,
    pub s3: f64,
    pub x3: f64,
}

impl PlanformParams {
    pub fn from_array(v: [f64; N_PARAMS]) -> Self {
        Self {
            b1: v[0],
            b2: v[1],
            b3: v[2],
            c2: v[3],
            c3: v[4],
            c4: v[5],
            s1: v[6],
            s3: v[7],
            x3: v[8],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_PARAMS] = v.try_into().map_err(|_| {
            Error::Argument(format!("planform vector needs {N_PARAMS} entries, got {}", v.len()))
        })?;
        Ok(Self::from_array(arr))
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [
            self.b1, self.b2, self.b3, self.c2, self.c3, self.c4, self.s1, self.s3, self.x3,
        ]
    }
}

/// Axis-aligned feasible box for [`PlanformParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: [f64; N_PARAMS],
    pub hi: [f64; N_PARAMS],
    pub names: [String; N_PARAMS],
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            //    b1    b2    b3    c2    c3    c4    s1    s3    x3
            lo: [0.10, 0.05, 0.35, 0.55, 0.18, 0.06, 40.0, 20.0, 0.50],
            hi: [0.20, 0.20, 0.70, 0.85, 0.28, 0.09, 60.0, 40.0, 0.65],
            names: PARAM_NAMES.map(String::from),
        }
    }
}

impl ParamBox {
    pub fn new(lo: [f64; N_PARAMS], hi: [f64; N_PARAMS]) -> Result<Self> {
        for j in 0..N_PARAMS {
            if !(lo[j].is_finite() && hi[j].is_finite() && lo[j] < hi[j]) {
                return Err(Error::Argument(format!(
                    "box bound for {} must satisfy lo < hi, got [{}, {}]",
                    PARAM_NAMES[j], lo[j], hi[j]
                )));
            }
        }
        Ok(Self {
            lo,
            hi,
            names: PARAM_NAMES.map(String::from),
        })
    }

    pub fn midpoint(&self) -> PlanformParams {
        let mut v = [0.0; N_PARAMS];
        for (j, x) in v.iter_mut().enumerate() {
            *x = 0.5 * (self.lo[j] + self.hi[j]);
        }
        PlanformParams::from_array(v)
    }

    pub fn contains(&self, p: &PlanformParams) -> bool {
        self.check(p).is_ok()
    }

    /// Fails with a domain error naming the first field outside its bound.
    pub fn check(&self, p: &PlanformParams) -> Result<()> {
        for (j, v) in p.to_array().into_iter().enumerate() {
            if !v.is_finite() || v < self.lo[j] || v > self.hi[j] {
                return Err(Error::Domain(format!(
                    "parameter {} = {} outside [{}, {}]",
                    self.names[j], v, self.lo[j], self.hi[j]
                )));
            }
        }
        Ok(())
    }

    /// Componentwise projection onto the box.
    pub fn clip(&self, p: &PlanformParams) -> PlanformParams {
        let mut v = p.to_array();
        for (j, x) in v.iter_mut().enumerate() {
            *x = x.clamp(self.lo[j], self.hi[j]);
        }
        PlanformParams::from_array(v)
    }
}

/// One spanwise station of the planform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Station {
    pub y: f64,
    pub le_x: f64,
    pub chord: f64,
}

/// The four defining stations, root first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationTable(pub [Station; 4]);

impl StationTable {
    pub fn half_span(&self) -> f64 {
        self.0[3].y
    }

    /// Full-span reference area, twice the sum of the three trapezoidal panels.
    pub fn planform_area(&self) -> f64 {
        let s = &self.0;
        2.0 * (0..3)
            .map(|k| 0.5 * (s[k].chord + s[k + 1].chord) * (s[k + 1].y - s[k].y))
            .sum::<f64>()
    }

    pub fn aspect_ratio(&self) -> f64 {
        let span = 2.0 * self.half_span();
        span * span / self.planform_area()
    }

    /// Leading-edge x and chord at spanwise position `y` (linear between stations).
    pub fn section_at(&self, y: f64) -> (f64, f64) {
        let s = &self.0;
        let y = y.abs().min(s[3].y);
        let k = if y <= s[1].y {
            0
        } else if y <= s[2].y {
            1
        } else {
            2
        };
        let (a, b) = (s[k], s[k + 1]);
        let t = if b.y > a.y { (y - a.y) / (b.y - a.y) } else { 0.0 };
        (a.le_x + t * (b.le_x - a.le_x), a.chord + t * (b.chord - a.chord))
    }
}

/// Station layout of a planform: root at the origin with unit chord, then the
/// inboard break, the outboard break (leading edge at `x3`) and the tip.
pub fn planform_stations(p: &PlanformParams) -> Result<StationTable> {
    ParamBox::default().check(p)?;
    Ok(stations_unchecked(p))
}

pub(crate) fn stations_unchecked(p: &PlanformParams) -> StationTable {
    let y2 = p.b1;
    let y3 = p.b1 + p.b2;
    let y4 = y3 + p.b3;
    StationTable([
        Station {
            y: 0.0,
            le_x: 0.0,
            chord: 1.0,
        },
        Station {
            y: y2,
            le_x: p.b1 * p.s1.to_radians().tan(),
            chord: p.c2,
        },
        Station {
            y: y3,
            le_x: p.x3,
            chord: p.c3,
        },
        Station {
            y: y4,
            le_x: p.x3 + p.b3 * p.s3.to_radians().tan(),
            chord: p.c4,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PlanformParams {
        PlanformParams {
            b1: 0.15,
            b2: 0.1,
            b3: 0.5,
            c2: 0.7,
            c3: 0.2,
            c4: 0.07,
            s1: 45.0,
            s3: 30.0,
            x3: 0.55,
        }
    }

    #[test]
    fn station_leading_edges_follow_sweep() {
        let st = planform_stations(&sample()).unwrap();
        assert!((st.0[1].le_x - 0.15).abs() < 1e-12);
        assert!((st.0[3].le_x - 0.838_675_134_594_812_9).abs() < 1e-12);
        assert_eq!(st.0[2].le_x, 0.55);
    }

    #[test]
    fn root_station_is_reference() {
        let st = planform_stations(&ParamBox::default().midpoint()).unwrap();
        assert_eq!(
            st.0[0],
            Station {
                y: 0.0,
                le_x: 0.0,
                chord: 1.0
            }
        );
    }

    #[test]
    fn lower_corner_half_span() {
        let bx = ParamBox::default();
        let st = planform_stations(&PlanformParams::from_array(bx.lo)).unwrap();
        assert!((st.half_span() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_box_names_field() {
        let mut p = sample();
        p.s3 = 41.0;
        let err = planform_stations(&p).unwrap_err().to_string();
        assert!(err.contains("s3"), "{err}");
    }

    #[test]
    fn stations_are_monotone_in_sweep_and_span() {
        let mut p = sample();
        let a = planform_stations(&p).unwrap();
        p.s1 = 46.0;
        p.b3 = 0.55;
        let b = planform_stations(&p).unwrap();
        assert!(b.0[1].le_x > a.0[1].le_x);
        assert!(b.half_span() > a.half_span());
    }

    #[test]
    fn clip_lands_on_bounds() {
        let bx = ParamBox::default();
        let mut v = bx.midpoint().to_array();
        v[0] = 5.0;
        v[7] = -3.0;
        let c = bx.clip(&PlanformParams::from_array(v)).to_array();
        assert_eq!(c[0], bx.hi[0]);
        assert_eq!(c[7], bx.lo[7]);
        assert!(bx.contains(&PlanformParams::from_array(c)));
    }
}
