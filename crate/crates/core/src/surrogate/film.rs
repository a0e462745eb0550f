use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FlightCondition, PlanformParams, SurfacePointCloud};
use crate::nn::{seeded_rng, AdamState, EarlyStopping, Linear, NodeId, ParamStore, Rng64, Tape, Tensor2};
use crate::scale::StandardScaler;

/// Order of the 12 conditioning entries fed to the hypernetwork. Altitude is
/// not part of it; it only enters through the Reynolds number.
pub const FILM_CONDITION_ORDER: [&str; 12] = [
    "log10_reynolds",
    "mach",
    "alpha_deg",
    "b1",
    "b2",
    "b3",
    "c2",
    "c3",
    "c4",
    "s1",
    "s3",
    "x3",
];

pub const FIELD_CHANNELS: [&str; 3] = ["cp", "cfx", "cfz"];

/// Raw conditioning vector in [`FILM_CONDITION_ORDER`].
pub fn film_condition(p: &PlanformParams, fc: &FlightCondition) -> [f64; 12] {
    let v = p.to_array();
    let mut out = [0.0; 12];
    out[0] = fc.log10_reynolds;
    out[1] = fc.mach;
    out[2] = fc.alpha_deg;
    out[3..].copy_from_slice(&v);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilmConfig {
    pub in_dim: usize,
    pub cond_dim: usize,
    pub width: usize,
    pub modulated: usize,
    pub plain: usize,
    pub out_dim: usize,
    pub hyper_hidden: usize,
}

impl Default for FilmConfig {
    fn default() -> Self {
        Self {
            in_dim: 6,
            cond_dim: 12,
            width: 256,
            modulated: 4,
            plain: 3,
            out_dim: 3,
            hyper_hidden: 64,
        }
    }
}

/// Coordinate MLP whose first hidden activations are scaled and shifted per
/// layer by a hypernetwork of the conditioning vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmModel {
    pub config: FilmConfig,
    pub params: ParamStore,
    input: Linear,
    hidden: Vec<Linear>,
    head: Linear,
    hyper_in: Linear,
    hyper_out: Linear,
}

impl FilmModel {
    pub fn new(config: FilmConfig, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let w = config.width;
        let input = Linear::new(&mut params, "base.0", config.in_dim, w, &mut rng);
        // `modulated` modulated activations feed `modulated` linears; the
        // last of those plus `plain - 1` more form the plain layers.
        let n_hidden = config.modulated + config.plain - 1;
        let hidden = (0..n_hidden)
            .map(|k| Linear::new(&mut params, &format!("base.{}", k + 1), w, w, &mut rng))
            .collect();
        let head = Linear::new(&mut params, "head", w, config.out_dim, &mut rng);
        let hyper_in = Linear::new(&mut params, "hyper.0", config.cond_dim, config.hyper_hidden, &mut rng);
        let hyper_out = Linear::new(
            &mut params,
            "hyper.1",
            config.hyper_hidden,
            2 * config.modulated * w,
            &mut rng,
        );
        let mut m = Self {
            config,
            params,
            input,
            hidden,
            head,
            hyper_in,
            hyper_out,
        };
        m.set_hyper_bias(1.0, 0.0);
        m
    }

    /// Sets the hypernetwork output bias so the untrained modulation is
    /// `gamma = gamma_bias`, `beta = beta_bias` plus the learned part.
    pub fn set_hyper_bias(&mut self, gamma_bias: f64, beta_bias: f64) {
        let w = self.config.width;
        let b = &mut self.params.tensors[self.hyper_out.b];
        for l in 0..self.config.modulated {
            for j in 0..w {
                b.set(0, 2 * l * w + j, gamma_bias);
                b.set(0, (2 * l + 1) * w + j, beta_bias);
            }
        }
    }

    pub fn zero_hyper_weights(&mut self) {
        for idx in [self.hyper_in.w, self.hyper_out.w] {
            let t = &mut self.params.tensors[idx];
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Builds the graph for a batch of points. `points` is `N x 6`, `cond` is
    /// `B x 12` (standardized), `point_case[i]` names the row of `cond` that
    /// point `i` belongs to. Output `N x 3` in normalized channel units.
    pub fn graph(
        &self,
        tape: &mut Tape,
        p: &[NodeId],
        points: NodeId,
        cond: NodeId,
        point_case: &[usize],
        modulate: bool,
    ) -> Result<NodeId> {
        let (n, d) = tape.value(points).shape();
        if d != self.config.in_dim || tape.value(cond).cols() != self.config.cond_dim {
            return Err(Error::Shape {
                op: "film_forward",
                lhs: (n, d),
                rhs: tape.value(cond).shape(),
            });
        }
        if point_case.len() != n {
            return Err(Error::Argument(format!(
                "{} point-to-case indices for {n} points",
                point_case.len()
            )));
        }
        let w = self.config.width;
        let mut h = self.input.forward(tape, p, points)?;
        h = tape.gelu(h)?;
        let film = if modulate {
            let z = self.hyper_in.forward(tape, p, cond)?;
            let z = tape.silu(z)?;
            let gb = self.hyper_out.forward(tape, p, z)?;
            Some(tape.gather_rows(gb, point_case)?)
        } else {
            None
        };
        for (k, layer) in self.hidden.iter().enumerate() {
            if let (Some(gb), true) = (film, k < self.config.modulated) {
                let gamma = tape.slice_cols(gb, 2 * k * w, w)?;
                let beta = tape.slice_cols(gb, (2 * k + 1) * w, w)?;
                h = tape.mul(h, gamma)?;
                h = tape.add(h, beta)?;
            }
            h = layer.forward(tape, p, h)?;
            h = tape.gelu(h)?;
        }
        self.head.forward(tape, p, h)
    }

    /// Normalized `(Cp, Cfx, Cfz)` for each point of one case.
    pub fn forward(&self, points: &[[f64; 6]], cond: &[f64]) -> Result<Vec<[f64; 3]>> {
        self.forward_inner(points, cond, true)
    }

    /// The base network with modulation switched off.
    pub fn forward_unmodulated(&self, points: &[[f64; 6]]) -> Result<Vec<[f64; 3]>> {
        self.forward_inner(points, &vec![0.0; self.config.cond_dim], false)
    }

    fn forward_inner(&self, points: &[[f64; 6]], cond: &[f64], modulate: bool) -> Result<Vec<[f64; 3]>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let s = tape.constant(points_tensor(points));
        let c = tape.constant(Tensor2::row_vector(cond.to_vec()));
        let out = self.graph(&mut tape, &p, s, c, &vec![0; points.len()], modulate)?;
        Ok(tape
            .value(out)
            .data()
            .chunks_exact(3)
            .map(|r| [r[0], r[1], r[2]])
            .collect())
    }
}

fn points_tensor(points: &[[f64; 6]]) -> Tensor2 {
    Tensor2::from_vec(points.len(), 6, points.iter().flatten().copied().collect()).expect("sized")
}

/// Channel and conditioning scalers, fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldScaler {
    pub channels: StandardScaler,
    pub condition: StandardScaler,
}

impl FieldScaler {
    pub fn fit(cases: &[FieldCase]) -> Result<Self> {
        let mut rows = Vec::new();
        for c in cases {
            rows.extend(c.targets()?.into_iter().map(|t| t.to_vec()));
        }
        let conds: Vec<Vec<f64>> = cases.iter().map(|c| c.condition_vector().to_vec()).collect();
        Ok(Self {
            channels: StandardScaler::fit(&rows)?,
            condition: StandardScaler::fit(&conds)?,
        })
    }

    pub fn normalize_channels(&self, t: &[f64; 3]) -> [f64; 3] {
        let v = self.channels.transform(t);
        [v[0], v[1], v[2]]
    }

    pub fn denormalize_channels(&self, t: &[f64; 3]) -> [f64; 3] {
        let v = self.channels.inverse(t);
        [v[0], v[1], v[2]]
    }
}

/// One labeled surface: planform, flight condition and a point cloud with
/// `cp`, `cfx` and `cfz` filled.
#[derive(Debug, Clone)]
pub struct FieldCase {
    pub params: PlanformParams,
    pub condition: FlightCondition,
    pub cloud: SurfacePointCloud,
}

impl FieldCase {
    pub fn condition_vector(&self) -> [f64; 12] {
        film_condition(&self.params, &self.condition)
    }

    pub fn targets(&self) -> Result<Vec<[f64; 3]>> {
        match (&self.cloud.cp, &self.cloud.cfx, &self.cloud.cfz) {
            (Some(a), Some(b), Some(c)) => Ok(a
                .iter()
                .zip(b)
                .zip(c)
                .map(|((x, y), z)| [*x, *y, *z])
                .collect()),
            _ => Err(Error::Argument("field case lacks cp/cfx/cfz labels".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrainConfig {
    pub model: FilmConfig,
    pub epochs: usize,
    pub lr: f64,
    /// Cases (point groups) per optimizer step.
    pub batch_cases: usize,
    /// Points drawn per case per step; `None` uses every point.
    pub points_per_case: Option<usize>,
    pub val_fraction: f64,
    pub patience: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for FieldTrainConfig {
    fn default() -> Self {
        Self {
            model: FilmConfig::default(),
            epochs: 200,
            lr: 5e-4,
            batch_cases: 64,
            points_per_case: None,
            val_fraction: 0.1,
            patience: 30,
            warmup_epochs: 50,
            seed: 0,
        }
    }
}

/// Trained field surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSurrogate {
    pub model: FilmModel,
    pub scaler: FieldScaler,
    pub seed: u64,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

impl FieldSurrogate {
    /// Denormalized `(Cp, Cfx, Cfz)` at every point of `cloud`.
    pub fn predict(&self, cloud: &SurfacePointCloud, p: &PlanformParams, fc: &FlightCondition) -> Result<Vec<[f64; 3]>> {
        let cond = self.scaler.condition.transform(&film_condition(p, fc));
        let out = self.model.forward(&cloud.features(), &cond)?;
        Ok(out.iter().map(|r| self.scaler.denormalize_channels(r)).collect())
    }

    /// Per-point loss of one case: mean over points of the summed squared
    /// normalized channel errors.
    pub fn case_loss(&self, case: &FieldCase) -> Result<f64> {
        let cond = self.scaler.condition.transform(&case.condition_vector());
        let pred = self.model.forward(&case.cloud.features(), &cond)?;
        let t = case.targets()?;
        Ok(field_loss(&pred, &t.iter().map(|r| self.scaler.normalize_channels(r)).collect::<Vec<_>>()))
    }
}

/// Mean over points of the summed squared error across the three channels.
pub fn field_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n
}

struct Batch {
    points: Tensor2,
    cond: Tensor2,
    target: Tensor2,
    point_case: Vec<usize>,
}

fn make_batch(
    cases: &[&FieldCase],
    scaler: &FieldScaler,
    points_per_case: Option<usize>,
    rng: &mut Rng64,
) -> Result<Batch> {
    let mut pts = Vec::new();
    let mut tgt = Vec::new();
    let mut conds = Vec::new();
    let mut point_case = Vec::new();
    for (b, c) in cases.iter().enumerate() {
        let feats = c.cloud.features();
        let t = c.targets()?;
        let mut idx: Vec<usize> = (0..feats.len()).collect();
        if let Some(k) = points_per_case {
            if k < idx.len() {
                idx.shuffle(rng);
                idx.truncate(k);
            }
        }
        for i in idx {
            pts.extend_from_slice(&feats[i]);
            tgt.extend_from_slice(&scaler.normalize_channels(&t[i]));
            point_case.push(b);
        }
        conds.extend(scaler.condition.transform(&c.condition_vector()));
    }
    let n = point_case.len();
    Ok(Batch {
        points: Tensor2::from_vec(n, 6, pts)?,
        cond: Tensor2::from_vec(cases.len(), 12, conds)?,
        target: Tensor2::from_vec(n, 3, tgt)?,
        point_case,
    })
}

/// Fits a FiLM field surrogate by minimizing the normalized three-channel
/// per-point MSE with Adam, early-stopped on a held-out slice of the cases.
pub fn train_field_surrogate(cases: &[FieldCase], cfg: &FieldTrainConfig) -> Result<FieldSurrogate> {
    if cases.len() < 2 {
        return Err(Error::Argument(format!(
            "field surrogate needs at least 2 labeled cases, got {}",
            cases.len()
        )));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((cases.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, cases.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train: Vec<FieldCase> = train_idx.iter().map(|&i| cases[i].clone()).collect();
    let val: Vec<&FieldCase> = val_idx.iter().map(|&i| &cases[i]).collect();

    let scaler = FieldScaler::fit(&train)?;
    let model = FilmModel::new(cfg.model, cfg.seed.wrapping_add(1));
    let mut sur = FieldSurrogate {
        model,
        scaler,
        seed: cfg.seed,
        train_losses: Vec::new(),
        val_losses: Vec::new(),
    };
    let mut adam = AdamState::new(&sur.model.params.tensors, cfg.lr);
    let mut stop = EarlyStopping::new(cfg.patience, cfg.warmup_epochs);
    let bs = cfg.batch_cases.max(1);
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in idx.chunks(bs) {
            let group: Vec<&FieldCase> = chunk.iter().map(|&i| &train[i]).collect();
            let b = make_batch(&group, &sur.scaler, cfg.points_per_case, &mut rng)?;
            let mut tape = Tape::new();
            let p = sur.model.params.bind(&mut tape, true);
            let s = tape.constant(b.points);
            let c = tape.constant(b.cond);
            let y = tape.constant(b.target);
            let out = sur.model.graph(&mut tape, &p, s, c, &b.point_case, true)?;
            let mse = tape.mse(out, y)?;
            let loss = tape.scale(mse, 3.0)?;
            total += tape.value(loss).item();
            steps += 1;
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor2> = p
                .iter()
                .zip(&sur.model.params.tensors)
                .map(|(&id, t)| grads.get_or_zeros(id, t.shape()))
                .collect();
            adam.update(&mut sur.model.params.tensors, &g)?;
        }
        sur.train_losses.push(total / steps.max(1) as f64);
        let mut vl = 0.0;
        for c in &val {
            vl += sur.case_loss(c)?;
        }
        vl /= val.len() as f64;
        sur.val_losses.push(vl);
        if stop.observe(epoch, vl, &sur.model.params) {
            break;
        }
    }
    if let Some(best) = stop.best_params() {
        sur.model.params.load_from(best)?;
    }
    Ok(sur)
}
