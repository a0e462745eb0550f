use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FlightCondition, PlanformParams, N_PARAMS};
use crate::nn::{seeded_rng, AdamState, EarlyStopping, Linear, NodeId, ParamStore, Tape, Tensor2};
use crate::scale::{GeomScaler, StandardScaler};

/// Width of the L/D surrogate input: 9 planform values, altitude, log10 Re,
/// Mach, alpha and a constant slot fixed at 1.
pub const LD_INPUT_DIM: usize = 14;

pub const LD_INPUT_ORDER: [&str; LD_INPUT_DIM] = [
    "b1",
    "b2",
    "b3",
    "c2",
    "c3",
    "c4",
    "s1",
    "s3",
    "x3",
    "altitude_kft",
    "log10_reynolds",
    "mach",
    "alpha_deg",
    "bias",
];

/// The 13 scaled inputs (everything except the constant slot).
pub fn ld_raw_input(p: &PlanformParams, fc: &FlightCondition) -> [f64; LD_INPUT_DIM - 1] {
    let mut v = [0.0; LD_INPUT_DIM - 1];
    v[..N_PARAMS].copy_from_slice(&p.to_array());
    v[9] = fc.altitude_kft;
    v[10] = fc.log10_reynolds;
    v[11] = fc.mach;
    v[12] = fc.alpha_deg;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdConfig {
    pub hidden: usize,
    pub depth: usize,
}

impl Default for LdConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            depth: 3,
        }
    }
}

/// Scalar MLP surrogate of L/D over planform and flight condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdSurrogate {
    pub config: LdConfig,
    pub params: ParamStore,
    layers: Vec<Linear>,
    head: Linear,
    pub input_scaler: StandardScaler,
    pub output_scaler: StandardScaler,
    pub seed: u64,
}

impl LdSurrogate {
    /// Untrained network with identity scalers.
    pub fn new(config: LdConfig, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(config.depth);
        let mut fan_in = LD_INPUT_DIM;
        for k in 0..config.depth {
            layers.push(Linear::new(&mut params, &format!("ld.{k}"), fan_in, config.hidden, &mut rng));
            fan_in = config.hidden;
        }
        let head = Linear::new(&mut params, "ld.head", fan_in, 1, &mut rng);
        Self {
            config,
            params,
            layers,
            head,
            input_scaler: StandardScaler::identity(LD_INPUT_DIM - 1),
            output_scaler: StandardScaler::identity(1),
            seed,
        }
    }

    /// Network body on standardized `K x 14` input; output `K x 1` in L/D units.
    fn graph(&self, tape: &mut Tape, p: &[NodeId], z: NodeId) -> Result<NodeId> {
        if tape.value(z).cols() != LD_INPUT_DIM {
            return Err(Error::Shape {
                op: "ld_forward",
                lhs: tape.value(z).shape(),
                rhs: (1, LD_INPUT_DIM),
            });
        }
        let mut h = z;
        for l in &self.layers {
            h = l.forward(tape, p, h)?;
            h = tape.silu(h)?;
        }
        let y = self.head.forward(tape, p, h)?;
        tape.affine_cols(y, &self.output_scaler.std, &self.output_scaler.mean)
    }

    fn standardized_row(&self, p: &PlanformParams, fc: &FlightCondition) -> Vec<f64> {
        let mut z = self.input_scaler.transform(&ld_raw_input(p, fc));
        z.push(1.0);
        z
    }

    pub fn predict_batch(&self, rows: &[(PlanformParams, FlightCondition)]) -> Result<Vec<f64>> {
        let mut data = Vec::with_capacity(rows.len() * LD_INPUT_DIM);
        for (p, fc) in rows {
            data.extend(self.standardized_row(p, fc));
        }
        let mut tape = Tape::new();
        let pr = self.params.bind(&mut tape, false);
        let z = tape.constant(Tensor2::from_vec(rows.len(), LD_INPUT_DIM, data)?);
        let y = self.graph(&mut tape, &pr, z)?;
        Ok(tape.value(y).data().to_vec())
    }

    pub fn predict_ld(&self, p: &PlanformParams, fc: &FlightCondition) -> Result<f64> {
        Ok(self.predict_batch(&[(*p, *fc)])?[0])
    }

    /// L/D and its exact gradient with respect to the raw planform parameters.
    pub fn predict_ld_grad(&self, p: &PlanformParams, fc: &FlightCondition) -> Result<(f64, [f64; N_PARAMS])> {
        let mut tape = Tape::new();
        let pr = self.params.bind(&mut tape, false);
        let x = tape.leaf(Tensor2::row_vector(p.to_array().to_vec()));
        let (scale, shift) = self.geom_affine(None);
        let y = self.geometry_graph(&mut tape, &pr, x, &scale, &shift, fc, 1)?;
        let ld = tape.value(y).item();
        let g = tape.backward(y)?;
        let mut grad = [0.0; N_PARAMS];
        grad.copy_from_slice(g.get_or_zeros(x, (1, N_PARAMS)).data());
        Ok((ld, grad))
    }

    /// Per-column affine map from the decision variables to standardized
    /// inputs: raw parameters when `geom` is `None`, else `[-1, 1]` coordinates.
    fn geom_affine(&self, geom: Option<&GeomScaler>) -> (Vec<f64>, Vec<f64>) {
        let mut scale = vec![0.0; N_PARAMS];
        let mut shift = vec![0.0; N_PARAMS];
        for j in 0..N_PARAMS {
            let (m, s) = (self.input_scaler.mean[j], self.input_scaler.std[j]);
            match geom {
                None => {
                    scale[j] = 1.0 / s;
                    shift[j] = -m / s;
                }
                Some(g) => {
                    let h = 0.5 * (g.max[j] - g.min[j]);
                    scale[j] = h / s;
                    shift[j] = (g.min[j] + h - m) / s;
                }
            }
        }
        (scale, shift)
    }

    #[allow(clippy::too_many_arguments)]
    fn geometry_graph(
        &self,
        tape: &mut Tape,
        pr: &[NodeId],
        x: NodeId,
        scale: &[f64],
        shift: &[f64],
        fc: &FlightCondition,
        k: usize,
    ) -> Result<NodeId> {
        let zg = tape.affine_cols(x, scale, shift)?;
        let full = self.standardized_row(&PlanformParams::from_array([0.0; N_PARAMS]), fc);
        let tail: Vec<f64> = (0..k).flat_map(|_| full[N_PARAMS..].iter().copied()).collect();
        let c = tape.constant(Tensor2::from_vec(k, LD_INPUT_DIM - N_PARAMS, tail)?);
        let z = tape.concat(&[zg, c])?;
        self.graph(tape, pr, z)
    }

    /// For each row of `xs` (normalized `[-1, 1]` planforms) returns the
    /// predicted L/D and the gradient of `(L/D - target)^2` with respect to
    /// that row.
    pub fn target_objective(
        &self,
        geom: &GeomScaler,
        xs: &[[f64; N_PARAMS]],
        fc: &FlightCondition,
        target: f64,
    ) -> Result<(Vec<f64>, Vec<[f64; N_PARAMS]>)> {
        let k = xs.len();
        let mut tape = Tape::new();
        let pr = self.params.bind(&mut tape, false);
        let x = tape.leaf(Tensor2::from_vec(k, N_PARAMS, xs.iter().flatten().copied().collect())?);
        let (scale, shift) = self.geom_affine(Some(geom));
        let y = self.geometry_graph(&mut tape, &pr, x, &scale, &shift, fc, k)?;
        let preds = tape.value(y).data().to_vec();
        let t = tape.constant(Tensor2::filled(k, 1, target));
        let r = tape.sub(y, t)?;
        let loss = tape.sum_squares(r)?;
        let g = tape.backward(loss)?;
        let gx = g.get_or_zeros(x, (k, N_PARAMS));
        let grads = gx
            .data()
            .chunks_exact(N_PARAMS)
            .map(|c| {
                let mut a = [0.0; N_PARAMS];
                a.copy_from_slice(c);
                a
            })
            .collect();
        Ok((preds, grads))
    }
}

/// One labeled sample for the L/D surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdSample {
    pub params: PlanformParams,
    pub condition: FlightCondition,
    pub ld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdTrainConfig {
    pub model: LdConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub val_fraction: f64,
    pub patience: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for LdTrainConfig {
    fn default() -> Self {
        Self {
            model: LdConfig::default(),
            epochs: 300,
            lr: 1e-3,
            batch_size: 64,
            weight_decay: 0.0,
            val_fraction: 0.1,
            patience: 30,
            warmup_epochs: 50,
            seed: 0,
        }
    }
}

/// Fits the L/D surrogate (MSE on standardized L/D) with early stopping.
pub fn train_ld_surrogate(data: &[LdSample], cfg: &LdTrainConfig) -> Result<LdSurrogate> {
    if data.len() < 2 {
        return Err(Error::Argument(format!(
            "L/D surrogate needs at least 2 samples, got {}",
            data.len()
        )));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let mut model = LdSurrogate::new(cfg.model, cfg.seed.wrapping_add(1));
    let raw: Vec<Vec<f64>> = train_idx
        .iter()
        .map(|&i| ld_raw_input(&data[i].params, &data[i].condition).to_vec())
        .collect();
    model.input_scaler = StandardScaler::fit(&raw)?;
    let ys: Vec<Vec<f64>> = train_idx.iter().map(|&i| vec![data[i].ld]).collect();
    model.output_scaler = StandardScaler::fit(&ys)?;

    let z: Vec<Vec<f64>> = data.iter().map(|d| model.standardized_row(&d.params, &d.condition)).collect();
    let rows = |idx: &[usize]| -> Result<(Tensor2, Tensor2)> {
        let mut x = Vec::with_capacity(idx.len() * LD_INPUT_DIM);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(&z[i]);
            y.push(data[i].ld);
        }
        Ok((
            Tensor2::from_vec(idx.len(), LD_INPUT_DIM, x)?,
            Tensor2::from_vec(idx.len(), 1, y)?,
        ))
    };
    let (val_x, val_y) = rows(val_idx)?;
    let mut idx: Vec<usize> = train_idx.to_vec();
    let y_std = model.output_scaler.std[0];

    let mut adam = AdamState::new(&model.params.tensors, cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut stop = EarlyStopping::new(cfg.patience, cfg.warmup_epochs);
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let (x, y) = rows(chunk)?;
            let mut tape = Tape::new();
            let pr = model.params.bind(&mut tape, true);
            let xi = tape.constant(x);
            let yi = tape.constant(y);
            let out = model.graph(&mut tape, &pr, xi)?;
            let mse = tape.mse(out, yi)?;
            // Loss in standardized units so the step size is label-scale free.
            let loss = tape.scale(mse, 1.0 / (y_std * y_std))?;
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor2> = pr
                .iter()
                .zip(&model.params.tensors)
                .map(|(&id, t)| grads.get_or_zeros(id, t.shape()))
                .collect();
            adam.update(&mut model.params.tensors, &g)?;
        }
        let mut tape = Tape::new();
        let pr = model.params.bind(&mut tape, false);
        let xi = tape.constant(val_x.clone());
        let yi = tape.constant(val_y.clone());
        let out = model.graph(&mut tape, &pr, xi)?;
        let vl = tape.mse(out, yi)?;
        if stop.observe(epoch, tape.value(vl).item(), &model.params) {
            break;
        }
    }
    if let Some(best) = stop.best_params() {
        model.params.load_from(best)?;
    }
    Ok(model)
}
