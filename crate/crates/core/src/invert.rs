//! Inverse design: multi-start projected gradient descent on the L/D
//! surrogate, conditional diffusion sampling, and the sample-then-refine hybrid.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{CdmModel, ConditionVector};
use crate::error::{Error, Result};
use crate::geom::{FlightCondition, ParamBox, PlanformParams, N_PARAMS};
use crate::nn::{seeded_rng, Rng64};
use crate::scale::GeomScaler;
use crate::surrogate::LdSurrogate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub steps: usize,
    pub lr: f64,
    pub seeds: usize,
    /// Redraws allowed for a seed whose starting objective is not finite.
    pub max_redraws: usize,
}

impl PgdConfig {
    pub fn baseline() -> Self {
        Self {
            steps: 1000,
            lr: 0.05,
            seeds: 100,
            max_redraws: 3,
        }
    }

    pub fn hybrid() -> Self {
        Self {
            steps: 200,
            ..Self::baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Argument(format!(
                "PGD needs seeds >= 1 and a finite lr > 0 (seeds {}, lr {})",
                self.seeds, self.lr
            )));
        }
        Ok(())
    }
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cdm,
    Opt,
    Hybrid,
}

impl Method {
    /// Reporting order.
    pub const ALL: [Method; 3] = [Method::Cdm, Method::Opt, Method::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cdm => "cdm",
            Method::Opt => "opt",
            Method::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cdm" => Ok(Method::Cdm),
            "opt" => Ok(Method::Opt),
            "hybrid" => Ok(Method::Hybrid),
            _ => Err(Error::Argument(format!("unknown method {s:?}; expected cdm, opt or hybrid"))),
        }
    }
}

/// Differentiable objective over normalized planforms: for each row returns
/// the predicted L/D and the gradient of `(L/D - target)^2`.
pub trait TargetObjective: Sync {
    fn value_grad(
        &self,
        xs: &[[f64; N_PARAMS]],
        fc: &FlightCondition,
        target: f64,
    ) -> Result<(Vec<f64>, Vec<[f64; N_PARAMS]>)>;
}

/// The L/D surrogate seen through a geometry scaler.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateObjective<'a> {
    pub ld: &'a LdSurrogate,
    pub geom: &'a GeomScaler,
}

impl TargetObjective for SurrogateObjective<'_> {
    fn value_grad(
        &self,
        xs: &[[f64; N_PARAMS]],
        fc: &FlightCondition,
        target: f64,
    ) -> Result<(Vec<f64>, Vec<[f64; N_PARAMS]>)> {
        self.ld.target_objective(self.geom, xs, fc, target)
    }
}

/// End state of a batch of PGD trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    /// Final iterates, clipped, in raw units.
    pub params: Vec<PlanformParams>,
    pub initial_ld: Vec<f64>,
}

/// Plain projected gradient descent from each starting planform. After every
/// step the iterate is mapped to raw units, clipped to the box and mapped back.
pub fn pgd<O: TargetObjective + ?Sized>(
    obj: &O,
    geom: &GeomScaler,
    bx: &ParamBox,
    fc: &FlightCondition,
    target: f64,
    init: &[PlanformParams],
    steps: usize,
    lr: f64,
) -> Result<PgdOutcome> {
    let mut raw: Vec<PlanformParams> = init.iter().map(|p| bx.clip(p)).collect();
    let mut xs: Vec<[f64; N_PARAMS]> = raw.iter().map(|p| geom.normalize(p)).collect();
    let mut initial_ld = Vec::new();
    for step in 0..steps {
        let (ld, grads) = obj.value_grad(&xs, fc, target)?;
        if step == 0 {
            initial_ld = ld;
        }
        for ((x, p), g) in xs.iter_mut().zip(raw.iter_mut()).zip(&grads) {
            for j in 0..N_PARAMS {
                x[j] -= lr * g[j];
            }
            *p = bx.clip(&geom.denormalize(x));
            *x = geom.normalize(p);
        }
    }
    if steps == 0 && !xs.is_empty() {
        initial_ld = obj.value_grad(&xs, fc, target)?.0;
    }
    Ok(PgdOutcome {
        params: raw,
        initial_ld,
    })
}

/// One inversion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseCondition {
    pub id: usize,
    pub flight: FlightCondition,
    pub target_ld: f64,
}

impl InverseCondition {
    pub fn condition_vector(&self) -> ConditionVector {
        ConditionVector::new(&self.flight, self.target_ld)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseResult {
    pub condition_id: usize,
    pub method: Method,
    pub target_ld: f64,
    pub candidates: Vec<PlanformParams>,
    /// Surrogate L/D of each candidate.
    pub predicted_ld: Vec<f64>,
    /// Surrogate L/D of each candidate's starting point.
    pub initial_ld: Vec<f64>,
    pub best: usize,
    pub seconds: f64,
    /// Seeds dropped after exhausting redraws.
    pub dropped: usize,
}

impl InverseResult {
    pub fn best_candidate(&self) -> &PlanformParams {
        &self.candidates[self.best]
    }

    /// Root-mean-square surrogate error to the target over all candidates.
    pub fn rmse(&self) -> f64 {
        let n = self.predicted_ld.len().max(1) as f64;
        (self.predicted_ld.iter().map(|v| (v - self.target_ld).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Index of the smallest squared target error; ties keep the lowest index.
pub fn best_index(pred: &[f64], target: f64) -> usize {
    let mut best = 0;
    let mut err = f64::INFINITY;
    for (i, v) in pred.iter().enumerate() {
        let e = (v - target).powi(2);
        if e < err {
            err = e;
            best = i;
        }
    }
    best
}

/// Frozen models and settings shared by every condition of a batch.
#[derive(Debug, Clone, Copy)]
pub struct InverseContext<'a> {
    pub ld: &'a LdSurrogate,
    pub cdm: Option<&'a CdmModel>,
    pub geom: &'a GeomScaler,
    pub param_box: &'a ParamBox,
    pub opt: PgdConfig,
    pub hybrid: PgdConfig,
    /// Samples per condition for the diffusion-based methods.
    pub k: usize,
    pub seed: u64,
}

fn uniform_in_box(bx: &ParamBox, rng: &mut Rng64) -> PlanformParams {
    let mut v = [0.0; N_PARAMS];
    for (j, x) in v.iter_mut().enumerate() {
        *x = rng.random_range(bx.lo[j]..=bx.hi[j]);
    }
    PlanformParams::from_array(v)
}

fn finite_start<O: TargetObjective + ?Sized>(
    obj: &O,
    geom: &GeomScaler,
    fc: &FlightCondition,
    target: f64,
    p: &PlanformParams,
) -> bool {
    match obj.value_grad(&[geom.normalize(p)], fc, target) {
        Ok((v, g)) => v[0].is_finite() && g[0].iter().all(|x| x.is_finite()),
        Err(_) => false,
    }
}

/// Replaces starts with a non-finite objective, drawing replacements from
/// `redraw` at most `max_redraws` times each; returns the kept starts and the
/// number dropped.
fn screen_starts<O: TargetObjective + ?Sized>(
    obj: &O,
    geom: &GeomScaler,
    fc: &FlightCondition,
    target: f64,
    starts: Vec<PlanformParams>,
    max_redraws: usize,
    mut redraw: impl FnMut() -> Result<PlanformParams>,
) -> Result<(Vec<PlanformParams>, usize)> {
    let xs: Vec<_> = starts.iter().map(|p| geom.normalize(p)).collect();
    if obj.value_grad(&xs, fc, target).is_ok() {
        return Ok((starts, 0));
    }
    let mut kept = Vec::with_capacity(starts.len());
    let mut dropped = 0;
    for mut p in starts {
        let mut tries = 0;
        while !finite_start(obj, geom, fc, target, &p) && tries < max_redraws {
            log::warn!("non-finite objective at a PGD start; redrawing");
            p = redraw()?;
            tries += 1;
        }
        if finite_start(obj, geom, fc, target, &p) {
            kept.push(p);
        } else {
            log::warn!("dropping a PGD start after {max_redraws} redraws");
            dropped += 1;
        }
    }
    if kept.is_empty() {
        return Err(Error::NonFinite("every PGD start has a non-finite objective".into()));
    }
    Ok((kept, dropped))
}

fn finish(
    ctx: &InverseContext<'_>,
    cond: &InverseCondition,
    method: Method,
    candidates: Vec<PlanformParams>,
    initial_ld: Option<Vec<f64>>,
    dropped: usize,
    start: Instant,
) -> Result<InverseResult> {
    for p in &candidates {
        if !ctx.param_box.contains(p) {
            return Err(Error::Domain(format!("{method} produced a candidate outside the box")));
        }
    }
    let rows: Vec<_> = candidates.iter().map(|p| (*p, cond.flight)).collect();
    let predicted_ld = ctx.ld.predict_batch(&rows)?;
    let seconds = start.elapsed().as_secs_f64();
    let best = best_index(&predicted_ld, cond.target_ld);
    Ok(InverseResult {
        condition_id: cond.id,
        method,
        target_ld: cond.target_ld,
        candidates,
        initial_ld: initial_ld.unwrap_or_else(|| predicted_ld.clone()),
        predicted_ld,
        best,
        seconds,
        dropped,
    })
}

/// Seed of condition `id` derived from the batch seed.
pub fn condition_seed(seed: u64, id: usize) -> u64 {
    // SplitMix64 finalizer so neighbouring ids get unrelated streams.
    let mut z = seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Multi-start PGD from seeds drawn uniformly in the box.
pub fn run_opt_baseline(ctx: &InverseContext<'_>, cond: &InverseCondition) -> Result<InverseResult> {
    ctx.opt.validate()?;
    let start = Instant::now();
    let obj = SurrogateObjective {
        ld: ctx.ld,
        geom: ctx.geom,
    };
    let mut rng = seeded_rng(condition_seed(ctx.seed, cond.id));
    let starts: Vec<_> = (0..ctx.opt.seeds).map(|_| uniform_in_box(ctx.param_box, &mut rng)).collect();
    let (starts, dropped) = screen_starts(&obj, ctx.geom, &cond.flight, cond.target_ld, starts, ctx.opt.max_redraws, || {
        Ok(uniform_in_box(ctx.param_box, &mut rng))
    })?;
    let out = pgd(
        &obj,
        ctx.geom,
        ctx.param_box,
        &cond.flight,
        cond.target_ld,
        &starts,
        ctx.opt.steps,
        ctx.opt.lr,
    )?;
    finish(ctx, cond, Method::Opt, out.params, Some(out.initial_ld), dropped, start)
}

fn cdm_model<'a>(ctx: &InverseContext<'a>) -> Result<&'a CdmModel> {
    ctx.cdm
        .ok_or_else(|| Error::State("diffusion model required for cdm and hybrid inversion".into()))
}

/// `k` conditional diffusion samples.
pub fn run_cdm(ctx: &InverseContext<'_>, cond: &InverseCondition) -> Result<InverseResult> {
    let cdm = cdm_model(ctx)?;
    let start = Instant::now();
    let ps = cdm.sample(&cond.condition_vector(), ctx.k, condition_seed(ctx.seed, cond.id))?;
    finish(ctx, cond, Method::Cdm, ps, None, 0, start)
}

/// Diffusion samples refined by a short PGD pass each.
pub fn run_hybrid(ctx: &InverseContext<'_>, cond: &InverseCondition) -> Result<InverseResult> {
    let cdm = cdm_model(ctx)?;
    let start = Instant::now();
    let seed = condition_seed(ctx.seed, cond.id);
    let ps = cdm.sample(&cond.condition_vector(), ctx.k, seed)?;
    let obj = SurrogateObjective {
        ld: ctx.ld,
        geom: ctx.geom,
    };
    let mut extra = 0u64;
    let (starts, dropped) = screen_starts(
        &obj,
        ctx.geom,
        &cond.flight,
        cond.target_ld,
        ps,
        ctx.hybrid.max_redraws,
        || {
            extra += 1;
            Ok(cdm.sample(&cond.condition_vector(), 1, seed ^ extra.rotate_left(32))?[0])
        },
    )?;
    let out = pgd(
        &obj,
        ctx.geom,
        ctx.param_box,
        &cond.flight,
        cond.target_ld,
        &starts,
        ctx.hybrid.steps,
        ctx.hybrid.lr,
    )?;
    finish(ctx, cond, Method::Hybrid, out.params, Some(out.initial_ld), dropped, start)
}

pub fn run_method(ctx: &InverseContext<'_>, method: Method, cond: &InverseCondition) -> Result<InverseResult> {
    match method {
        Method::Cdm => run_cdm(ctx, cond),
        Method::Opt => run_opt_baseline(ctx, cond),
        Method::Hybrid => run_hybrid(ctx, cond),
    }
}

/// Runs `method` on every condition using up to `workers` threads. Results
/// come back in input order and do not depend on the worker count.
pub fn run_batch(
    ctx: &InverseContext<'_>,
    method: Method,
    conds: &[InverseCondition],
    workers: usize,
) -> Result<Vec<InverseResult>> {
    if workers <= 1 {
        return conds.iter().map(|c| run_method(ctx, method, c)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    pool.install(|| conds.par_iter().map(|c| run_method(ctx, method, c)).collect())
}
