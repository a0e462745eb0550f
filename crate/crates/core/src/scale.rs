//! Affine feature scalers: z-score and box min-max.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{ParamBox, PlanformParams, N_PARAMS};

/// Per-column z-score scaler. Columns with zero spread keep `std = 1` and
/// are flagged in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl StandardScaler {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Argument("cannot fit a scaler on zero rows".into()))?;
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Argument("scaler rows differ in width".into()));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let mut std = Vec::with_capacity(d);
        let mut degenerate = Vec::with_capacity(d);
        for (j, v) in var.into_iter().enumerate() {
            let s = v.sqrt();
            if s > 1e-12 * mean[j].abs().max(1.0) {
                std.push(s);
                degenerate.push(false);
            } else {
                std.push(1.0);
                degenerate.push(true);
                // Exact centre so constant targets normalize to exactly 0.
                mean[j] = first.as_ref()[j];
            }
        }
        Ok(Self {
            mean,
            std,
            degenerate,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            degenerate: vec![false; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Symmetric min-max map of the planform box onto `[-1, 1]^9`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomScaler {
    pub min: [f64; N_PARAMS],
    pub max: [f64; N_PARAMS],
}

impl GeomScaler {
    pub fn from_box(bx: &ParamBox) -> Self {
        Self {
            min: bx.lo,
            max: bx.hi,
        }
    }

    /// Fits the per-parameter range on a set of planforms.
    pub fn fit(ps: &[PlanformParams]) -> Result<Self> {
        if ps.is_empty() {
            return Err(Error::Argument("cannot fit a geometry scaler on zero rows".into()));
        }
        let mut min = [f64::INFINITY; N_PARAMS];
        let mut max = [f64::NEG_INFINITY; N_PARAMS];
        for p in ps {
            for (j, v) in p.to_array().into_iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        for j in 0..N_PARAMS {
            if max[j] <= min[j] {
                return Err(Error::Argument(format!(
                    "parameter {j} has zero range in the fit set"
                )));
            }
        }
        Ok(Self { min, max })
    }

    /// `dx_norm / dp` per coordinate is `2 / (max - min)`.
    pub fn half_range(&self) -> [f64; N_PARAMS] {
        let mut h = [0.0; N_PARAMS];
        for j in 0..N_PARAMS {
            h[j] = 0.5 * (self.max[j] - self.min[j]);
        }
        h
    }

    pub fn normalize(&self, p: &PlanformParams) -> [f64; N_PARAMS] {
        let v = p.to_array();
        let mut out = [0.0; N_PARAMS];
        for j in 0..N_PARAMS {
            out[j] = 2.0 * (v[j] - self.min[j]) / (self.max[j] - self.min[j]) - 1.0;
        }
        out
    }

    pub fn denormalize(&self, x: &[f64; N_PARAMS]) -> PlanformParams {
        let mut out = [0.0; N_PARAMS];
        for j in 0..N_PARAMS {
            out[j] = self.min[j] + 0.5 * (x[j] + 1.0) * (self.max[j] - self.min[j]);
        }
        PlanformParams::from_array(out)
    }
}
