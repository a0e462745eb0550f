//! Accuracy, diversity, geometry-recovery and field-error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PlanformParams, N_PARAMS, PARAM_NAMES};
use crate::invert::{InverseResult, Method};
use crate::scale::StandardScaler;

/// `1 - SS_res / SS_tot` over all rows, with `SS_tot` about the target mean.
pub fn r2_global(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Argument(format!(
            "r2 needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::NotApplicable("r2 of constant targets".into()));
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    /// Mean Euclidean distance over unordered pairs.
    pub mpd: f64,
    /// Mean distance from each sample to its nearest other sample.
    pub min_dist: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn diversity<R: AsRef<[f64]>>(samples: &[R]) -> Result<Diversity> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::Argument(format!("diversity needs at least 2 samples, got {k}")));
    }
    let mut nearest = vec![f64::INFINITY; k];
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let d = dist(samples[i].as_ref(), samples[j].as_ref());
            total += d;
            nearest[i] = nearest[i].min(d);
            nearest[j] = nearest[j].min(d);
        }
    }
    Ok(Diversity {
        mpd: total / (k * (k - 1) / 2) as f64,
        min_dist: nearest.iter().sum::<f64>() / k as f64,
    })
}

/// Per-parameter spread `max - min` over a geometry set.
pub fn param_ranges(ps: &[PlanformParams]) -> [f64; N_PARAMS] {
    let mut lo = [f64::INFINITY; N_PARAMS];
    let mut hi = [f64::NEG_INFINITY; N_PARAMS];
    for p in ps {
        for (j, v) in p.to_array().into_iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    std::array::from_fn(|j| (hi[j] - lo[j]).max(0.0))
}

/// Mean over the 9 parameters of `|g_j - t_j| / range_j`.
pub fn mre(g: &PlanformParams, t: &PlanformParams, ranges: &[f64; N_PARAMS]) -> Result<f64> {
    let (a, b) = (g.to_array(), t.to_array());
    let mut s = 0.0;
    for j in 0..N_PARAMS {
        if !(ranges[j] > 0.0) {
            return Err(Error::Argument(format!(
                "parameter {} has non-positive range {}",
                PARAM_NAMES[j], ranges[j]
            )));
        }
        s += (a[j] - b[j]).abs() / ranges[j];
    }
    Ok(s / N_PARAMS as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Share of samples within the threshold, averaged over conditions.
    pub sample_fraction: f64,
    /// Share of conditions with at least one sample within the threshold.
    pub condition_fraction: f64,
}

/// Geometry recovery against the true planform of each condition.
pub fn recovery_stats(
    samples: &[Vec<PlanformParams>],
    truth: &[PlanformParams],
    ranges: &[f64; N_PARAMS],
    threshold: f64,
) -> Result<Recovery> {
    if samples.len() != truth.len() || samples.is_empty() {
        return Err(Error::Argument(format!(
            "{} sample sets for {} true geometries",
            samples.len(),
            truth.len()
        )));
    }
    let mut frac = 0.0;
    let mut hits = 0usize;
    for (set, t) in samples.iter().zip(truth) {
        let mut m = 0usize;
        for g in set {
            if mre(g, t, ranges)? <= threshold {
                m += 1;
            }
        }
        frac += m as f64 / set.len().max(1) as f64;
        if m > 0 {
            hits += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(Recovery {
        sample_fraction: frac / n,
        condition_fraction: hits as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub mse: f64,
    pub mae: f64,
    /// `None` when the reference has zero norm.
    pub rel_l1: Option<f64>,
    pub rel_l2: Option<f64>,
}

pub fn field_errors(pred: &[f64], truth: &[f64]) -> Result<FieldErrors> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Argument(format!(
            "field errors need matching non-empty point counts, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let (mut se, mut ae, mut l1, mut l2) = (0.0, 0.0, 0.0, 0.0);
    for (p, y) in pred.iter().zip(truth) {
        let e = p - y;
        se += e * e;
        ae += e.abs();
        l1 += y.abs();
        l2 += y * y;
    }
    Ok(FieldErrors {
        mse: se / n,
        mae: ae / n,
        rel_l1: (l1 > 0.0).then(|| ae / l1),
        rel_l2: (l2 > 0.0).then(|| se.sqrt() / l2.sqrt()),
    })
}

/// Per-case field errors averaged over cases. Relative errors average only
/// the cases where they are defined.
pub fn mean_field_errors(per_case: &[FieldErrors]) -> Result<FieldErrors> {
    if per_case.is_empty() {
        return Err(Error::Argument("no cases to average".into()));
    }
    let n = per_case.len() as f64;
    let avg = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(FieldErrors {
        mse: per_case.iter().map(|e| e.mse).sum::<f64>() / n,
        mae: per_case.iter().map(|e| e.mae).sum::<f64>() / n,
        rel_l1: avg(per_case.iter().filter_map(|e| e.rel_l1).collect()),
        rel_l2: avg(per_case.iter().filter_map(|e| e.rel_l2).collect()),
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// One row of the per-condition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition_id: usize,
    pub method: Method,
    pub target_ld: f64,
    pub rmse: f64,
    pub mae: f64,
    pub best_abs_error: f64,
    pub mpd: f64,
    pub min_dist: f64,
    /// mRE of the best candidate; `None` without true geometries.
    pub best_mre: Option<f64>,
    pub match_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub conditions: usize,
    pub samples: usize,
    pub r2_global: Option<f64>,
    pub r2_best_of_k: Option<f64>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub best_abs_error_mean: f64,
    pub mpd_mean: f64,
    pub mpd_std: f64,
    pub mindist_mean: f64,
    pub mindist_std: f64,
    pub recovery: Option<Recovery>,
    pub threshold: f64,
    /// Z-score scaler used for the diversity metrics.
    pub diversity_scaler: StandardScaler,
    pub rows: Vec<ConditionRow>,
}

/// Evaluation settings.
#[derive(Debug, Clone)]
pub struct EvalSetup<'a> {
    /// Z-score scaler fitted on the training planforms.
    pub diversity_scaler: &'a StandardScaler,
    /// True geometry per condition id, when known.
    pub truth: Option<&'a [PlanformParams]>,
    /// Per-parameter ranges of the test geometries.
    pub ranges: Option<[f64; N_PARAMS]>,
    pub threshold: f64,
}

/// Aggregates the results of one method.
pub fn evaluate_method(results: &[InverseResult], setup: &EvalSetup<'_>) -> Result<MetricReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::Argument("no inversion results to evaluate".into()))?;
    let method = first.method;
    let mut rows = Vec::with_capacity(results.len());
    let (mut all_pred, mut all_tgt, mut best_pred, mut best_tgt) = (vec![], vec![], vec![], vec![]);
    let mut sets = Vec::new();
    let mut truths = Vec::new();
    for r in results {
        if r.method != method {
            return Err(Error::Argument("results mix several methods".into()));
        }
        let n = r.predicted_ld.len().max(1) as f64;
        let mae = r.predicted_ld.iter().map(|v| (v - r.target_ld).abs()).sum::<f64>() / n;
        let z: Vec<Vec<f64>> = r
            .candidates
            .iter()
            .map(|p| setup.diversity_scaler.transform(&p.to_array()))
            .collect();
        let div = if z.len() >= 2 {
            diversity(&z)?
        } else {
            Diversity {
                mpd: 0.0,
                min_dist: 0.0,
            }
        };
        let (best_mre, match_fraction) = match (setup.truth, &setup.ranges) {
            (Some(t), Some(rg)) => {
                let tp = t.get(r.condition_id).ok_or_else(|| {
                    Error::Argument(format!("no true geometry for condition {}", r.condition_id))
                })?;
                sets.push(r.candidates.clone());
                truths.push(*tp);
                let mut m = 0usize;
                for g in &r.candidates {
                    if mre(g, tp, rg)? <= setup.threshold {
                        m += 1;
                    }
                }
                (
                    Some(mre(r.best_candidate(), tp, rg)?),
                    Some(m as f64 / r.candidates.len().max(1) as f64),
                )
            }
            _ => (None, None),
        };
        all_pred.extend_from_slice(&r.predicted_ld);
        all_tgt.extend(std::iter::repeat_n(r.target_ld, r.predicted_ld.len()));
        best_pred.push(r.predicted_ld[r.best]);
        best_tgt.push(r.target_ld);
        rows.push(ConditionRow {
            condition_id: r.condition_id,
            method,
            target_ld: r.target_ld,
            rmse: r.rmse(),
            mae,
            best_abs_error: (r.predicted_ld[r.best] - r.target_ld).abs(),
            mpd: div.mpd,
            min_dist: div.min_dist,
            best_mre,
            match_fraction,
        });
    }
    let col = |f: fn(&ConditionRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (rmse_mean, rmse_std) = mean_std(&col(|r| r.rmse));
    let (mae_mean, mae_std) = mean_std(&col(|r| r.mae));
    let (mpd_mean, mpd_std) = mean_std(&col(|r| r.mpd));
    let (mindist_mean, mindist_std) = mean_std(&col(|r| r.min_dist));
    let best_abs_error_mean = mean_std(&col(|r| r.best_abs_error)).0;
    let recovery = match &setup.ranges {
        Some(rg) if !sets.is_empty() => Some(recovery_stats(&sets, &truths, rg, setup.threshold)?),
        _ => None,
    };
    Ok(MetricReport {
        method,
        conditions: results.len(),
        samples: all_pred.len(),
        r2_global: r2_global(&all_pred, &all_tgt).ok(),
        r2_best_of_k: r2_global(&best_pred, &best_tgt).ok(),
        rmse_mean,
        rmse_std,
        mae_mean,
        mae_std,
        best_abs_error_mean,
        mpd_mean,
        mpd_std,
        mindist_mean,
        mindist_std,
        recovery,
        threshold: setup.threshold,
        diversity_scaler: setup.diversity_scaler.clone(),
        rows,
    })
}
