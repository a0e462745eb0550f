use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::{cosine_schedule, predict_x0, reverse_mean, NoiseSchedule};
use crate::error::{Error, Result};
use crate::geom::{FlightCondition, ParamBox, PlanformParams, N_PARAMS};
use crate::nn::{
    seeded_rng, sinusoidal_embed, sinusoidal_embed_batch, stream_rng, AdamState, LayerNorm, Linear, NodeId,
    ParamStore, Tape, Tensor2,
};
use crate::scale::{GeomScaler, StandardScaler};

pub const CONDITION_ORDER: [&str; 5] = ["altitude_kft", "log10_reynolds", "mach", "alpha_deg", "ld_target"];

/// Raw diffusion conditioning vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub altitude_kft: f64,
    pub log10_reynolds: f64,
    pub mach: f64,
    pub alpha_deg: f64,
    pub ld_target: f64,
}

impl ConditionVector {
    pub fn new(fc: &FlightCondition, ld_target: f64) -> Self {
        Self {
            altitude_kft: fc.altitude_kft,
            log10_reynolds: fc.log10_reynolds,
            mach: fc.mach,
            alpha_deg: fc.alpha_deg,
            ld_target,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.altitude_kft,
            self.log10_reynolds,
            self.mach,
            self.alpha_deg,
            self.ld_target,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub width: usize,
    pub blocks: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            width: 512,
            blocks: 6,
            time_dim: 128,
            cond_dim: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ResBlock {
    norm: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Residual MLP noise predictor `eps_hat = f(x_t, t, mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub params: ParamStore,
    time_proj: Linear,
    cond_proj: Linear,
    // The input layer acting on [x_t, time, cond] is stored as two blocks of
    // rows so the embedding part can be computed once and broadcast.
    in_x: Linear,
    in_emb: Linear,
    blocks: Vec<ResBlock>,
    out_norm: LayerNorm,
    head: Linear,
}

impl DenoiserModel {
    pub fn new(config: DenoiserConfig, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let w = config.width;
        let time_proj = Linear::new(&mut params, "time", config.time_dim, config.time_dim, &mut rng);
        let cond_proj = Linear::new(&mut params, "cond", 5, config.cond_dim, &mut rng);
        let fan_in = N_PARAMS + config.time_dim + config.cond_dim;
        let in_x = Linear::new(&mut params, "in.x", N_PARAMS, w, &mut rng);
        let in_emb = Linear::new(&mut params, "in.emb", config.time_dim + config.cond_dim, w, &mut rng);
        rescale(&mut params, &[in_x.w, in_emb.w], fan_in);
        let blocks = (0..config.blocks)
            .map(|k| ResBlock {
                norm: LayerNorm::new(&mut params, &format!("block.{k}.norm"), w),
                fc1: Linear::new(&mut params, &format!("block.{k}.fc1"), w, w, &mut rng),
                fc2: Linear::new(&mut params, &format!("block.{k}.fc2"), w, w, &mut rng),
            })
            .collect();
        let out_norm = LayerNorm::new(&mut params, "out.norm", w);
        let head = Linear::new(&mut params, "head", w, N_PARAMS, &mut rng);
        Self {
            config,
            params,
            time_proj,
            cond_proj,
            in_x,
            in_emb,
            blocks,
            out_norm,
            head,
        }
    }

    /// `x` is `K x 9`; `temb` (raw sinusoidal) and `cond` (standardized) are
    /// either one row shared by all `K` or one row each.
    pub fn graph(&self, tape: &mut Tape, p: &[NodeId], x: NodeId, temb: NodeId, cond: NodeId) -> Result<NodeId> {
        if tape.value(x).cols() != N_PARAMS || tape.value(cond).cols() != 5 {
            return Err(Error::Shape {
                op: "denoiser",
                lhs: tape.value(x).shape(),
                rhs: tape.value(cond).shape(),
            });
        }
        let te = self.time_proj.forward(tape, p, temb)?;
        let ce = self.cond_proj.forward(tape, p, cond)?;
        let emb = tape.concat(&[te, ce])?;
        let e = self.in_emb.forward(tape, p, emb)?;
        let hx = self.in_x.forward(tape, p, x)?;
        let mut h = tape.add(hx, e)?;
        for b in &self.blocks {
            let u = b.norm.forward(tape, p, h)?;
            let u = b.fc1.forward(tape, p, u)?;
            let u = tape.silu(u)?;
            let u = b.fc2.forward(tape, p, u)?;
            h = tape.add(h, u)?;
        }
        let h = self.out_norm.forward(tape, p, h)?;
        let h = tape.silu(h)?;
        self.head.forward(tape, p, h)
    }
}

fn rescale(params: &mut ParamStore, ids: &[usize], fan_in: usize) {
    // Input blocks were drawn with their own fan-in; match the full layer.
    for &id in ids {
        let rows = params.tensors[id].rows() as f64;
        let f = (rows / fan_in as f64).sqrt();
        params.tensors[id].data_mut().iter_mut().for_each(|v| *v *= f);
    }
}

/// Anything that predicts the noise of a `K x 9` batch at one step index.
pub trait EpsPredictor {
    fn predict_eps(&self, x_t: &Tensor2, step: usize, cond: &[f64]) -> Result<Tensor2>;
}

impl EpsPredictor for DenoiserModel {
    fn predict_eps(&self, x_t: &Tensor2, step: usize, cond: &[f64]) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = tape.constant(x_t.clone());
        let t = tape.constant(Tensor2::row_vector(sinusoidal_embed(step + 1, self.config.time_dim)?));
        let c = tape.constant(Tensor2::row_vector(cond.to_vec()));
        let y = self.graph(&mut tape, &p, x, t, c)?;
        Ok(tape.value(y).clone())
    }
}

/// Full ancestral sampling of `k` chains in normalized space. Chain `j` draws
/// all of its noise from stream `j` of `seed`.
pub fn ancestral_sample<P: EpsPredictor + ?Sized>(
    model: &P,
    sched: &NoiseSchedule,
    cond: &[f64],
    k: usize,
    seed: u64,
    clamp_x0: Option<f64>,
) -> Result<Vec<[f64; N_PARAMS]>> {
    let mut rngs: Vec<_> = (0..k).map(|j| stream_rng(seed, j as u64)).collect();
    let mut x = Tensor2::zeros(k, N_PARAMS);
    for (j, r) in rngs.iter_mut().enumerate() {
        for c in 0..N_PARAMS {
            x.set(j, c, r.sample(StandardNormal));
        }
    }
    for i in (0..sched.steps).rev() {
        let eps = model.predict_eps(&x, i, cond)?;
        let mut next = Tensor2::zeros(k, N_PARAMS);
        for j in 0..k {
            let mut x0 = predict_x0(x.row(j), eps.row(j), i, sched);
            if let Some(c) = clamp_x0 {
                x0.iter_mut().for_each(|v| *v = v.clamp(-c, c));
            }
            let (mean, sigma) = reverse_mean(&x0, x.row(j), i, sched);
            for c in 0..N_PARAMS {
                let z: f64 = if i > 0 { rngs[j].sample(StandardNormal) } else { 0.0 };
                next.set(j, c, mean[c] + sigma * z);
            }
        }
        if !next.is_finite() {
            return Err(Error::NonFinite("reverse diffusion".into()));
        }
        x = next;
    }
    Ok(x.data()
        .chunks_exact(N_PARAMS)
        .map(|r| std::array::from_fn(|c| r[c]))
        .collect())
}

/// Trained conditional diffusion model with its scalers and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdmModel {
    pub denoiser: DenoiserModel,
    pub schedule: NoiseSchedule,
    pub cond_scaler: Option<StandardScaler>,
    pub geom_scaler: Option<GeomScaler>,
    pub param_box: ParamBox,
    pub clamp_x0: Option<f64>,
    pub seed: u64,
    pub train_losses: Vec<f64>,
}

impl CdmModel {
    pub fn untrained(config: DenoiserConfig, steps: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            denoiser: DenoiserModel::new(config, seed),
            schedule: cosine_schedule(steps)?,
            cond_scaler: None,
            geom_scaler: None,
            param_box: ParamBox::default(),
            clamp_x0: Some(1.5),
            seed,
            train_losses: Vec::new(),
        })
    }

    fn scalers(&self) -> Result<(&StandardScaler, &GeomScaler)> {
        match (&self.cond_scaler, &self.geom_scaler) {
            (Some(c), Some(g)) => Ok((c, g)),
            _ => Err(Error::State("diffusion model scalers are not fitted".into())),
        }
    }

    /// Standardized conditioning row for `mu`.
    pub fn standardize(&self, mu: &ConditionVector) -> Result<Vec<f64>> {
        if !mu.is_finite() {
            return Err(Error::Domain("condition vector has non-finite entries".into()));
        }
        Ok(self.scalers()?.0.transform(&mu.to_array()))
    }

    /// Normalized-space samples before denormalization and projection.
    pub fn sample_normalized(&self, mu: &ConditionVector, k: usize, seed: u64) -> Result<Vec<[f64; N_PARAMS]>> {
        let cond = self.standardize(mu)?;
        ancestral_sample(&self.denoiser, &self.schedule, &cond, k, seed, self.clamp_x0)
    }

    /// `k` planforms for condition `mu`, clipped into the box.
    pub fn sample(&self, mu: &ConditionVector, k: usize, seed: u64) -> Result<Vec<PlanformParams>> {
        let (_, g) = self.scalers()?;
        Ok(self
            .sample_normalized(mu, k, seed)?
            .iter()
            .map(|x| self.param_box.clip(&g.denormalize(x)))
            .collect())
    }

    /// Mean noise-prediction loss on `data` with fixed seeded draws of `t` and `eps`.
    pub fn eval_loss(&self, data: &[DiffusionSample], seed: u64) -> Result<f64> {
        let (cs, gs) = self.scalers()?;
        let mut rng = seeded_rng(seed);
        let b = make_batch(
            data,
            &(0..data.len()).collect::<Vec<_>>(),
            cs,
            gs,
            &self.schedule,
            self.denoiser.config.time_dim,
            &mut rng,
        )?;
        let eps_hat = self.predict_batch(&b)?;
        Ok(mean_sq(&eps_hat, &b.eps))
    }

    fn predict_batch(&self, b: &Batch) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let p = self.denoiser.params.bind(&mut tape, false);
        let (x, t, c) = (
            tape.constant(b.x_t.clone()),
            tape.constant(b.temb.clone()),
            tape.constant(b.cond.clone()),
        );
        let y = self.denoiser.graph(&mut tape, &p, x, t, c)?;
        Ok(tape.value(y).clone())
    }
}

/// Per-row squared error summed over columns, averaged over rows.
fn mean_sq(a: &Tensor2, b: &Tensor2) -> f64 {
    let n = a.rows().max(1) as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n
}

/// One training pair: a planform and the condition it realizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSample {
    pub params: PlanformParams,
    pub condition: ConditionVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTrainConfig {
    pub model: DenoiserConfig,
    pub steps: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub clamp_x0: Option<f64>,
    /// Fit the geometry scaler on the data instead of using the box.
    pub fit_geom_scaler: bool,
    pub seed: u64,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            model: DenoiserConfig::default(),
            steps: 1000,
            epochs: 200,
            lr: 5e-4,
            weight_decay: 1e-4,
            batch_size: 64,
            clamp_x0: Some(1.5),
            fit_geom_scaler: true,
            seed: 0,
        }
    }
}

struct Batch {
    x_t: Tensor2,
    temb: Tensor2,
    cond: Tensor2,
    eps: Tensor2,
}

fn make_batch(
    data: &[DiffusionSample],
    idx: &[usize],
    cs: &StandardScaler,
    gs: &GeomScaler,
    sched: &NoiseSchedule,
    time_dim: usize,
    rng: &mut crate::nn::Rng64,
) -> Result<Batch> {
    let n = idx.len();
    let mut x_t = Vec::with_capacity(n * N_PARAMS);
    let mut eps = Vec::with_capacity(n * N_PARAMS);
    let mut cond = Vec::with_capacity(n * 5);
    let mut steps = Vec::with_capacity(n);
    for &i in idx {
        let d = &data[i];
        let x0 = gs.normalize(&d.params);
        let s = rng.random_range(0..sched.steps);
        let ab = sched.alpha_bar[s];
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for x in x0 {
            let e: f64 = rng.sample(StandardNormal);
            x_t.push(a * x + b * e);
            eps.push(e);
        }
        cond.extend(cs.transform(&d.condition.to_array()));
        steps.push(s + 1);
    }
    Ok(Batch {
        x_t: Tensor2::from_vec(n, N_PARAMS, x_t)?,
        temb: sinusoidal_embed_batch(&steps, time_dim)?,
        cond: Tensor2::from_vec(n, 5, cond)?,
        eps: Tensor2::from_vec(n, N_PARAMS, eps)?,
    })
}

/// Trains the denoiser on the noise-prediction loss with AdamW.
pub fn train_denoiser(data: &[DiffusionSample], cfg: &DiffusionTrainConfig) -> Result<CdmModel> {
    if data.is_empty() {
        return Err(Error::Argument("diffusion training set is empty".into()));
    }
    let mut model = CdmModel::untrained(cfg.model, cfg.steps, cfg.seed.wrapping_add(1))?;
    model.clamp_x0 = cfg.clamp_x0;
    let conds: Vec<[f64; 5]> = data.iter().map(|d| d.condition.to_array()).collect();
    model.cond_scaler = Some(StandardScaler::fit(&conds)?);
    let ps: Vec<PlanformParams> = data.iter().map(|d| d.params).collect();
    model.geom_scaler = Some(if cfg.fit_geom_scaler && data.len() >= 2 {
        GeomScaler::fit(&ps).unwrap_or_else(|_| GeomScaler::from_box(&model.param_box))
    } else {
        GeomScaler::from_box(&model.param_box)
    });
    let cs = model.cond_scaler.clone().expect("set above");
    let gs = model.geom_scaler.clone().expect("set above");

    let mut rng = seeded_rng(cfg.seed);
    let mut adam = AdamState::new(&model.denoiser.params.tensors, cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let b = make_batch(data, chunk, &cs, &gs, &model.schedule, cfg.model.time_dim, &mut rng)?;
            let mut tape = Tape::new();
            let p = model.denoiser.params.bind(&mut tape, true);
            let x = tape.constant(b.x_t);
            let t = tape.constant(b.temb);
            let c = tape.constant(b.cond);
            let e = tape.constant(b.eps);
            let y = model.denoiser.graph(&mut tape, &p, x, t, c)?;
            let mse = tape.mse(y, e)?;
            // Sum over the 9 coordinates, mean over the batch.
            let loss = tape.scale(mse, N_PARAMS as f64)?;
            total += tape.value(loss).item() * chunk.len() as f64;
            count += chunk.len();
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor2> = p
                .iter()
                .zip(&model.denoiser.params.tensors)
                .map(|(&id, t)| grads.get_or_zeros(id, t.shape()))
                .collect();
            adam.update(&mut model.denoiser.params.tensors, &g)?;
        }
        model.train_losses.push(total / count as f64);
    }
    Ok(model)
}
