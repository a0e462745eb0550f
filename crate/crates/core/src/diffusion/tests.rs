use std::cell::RefCell;

use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::error::Result;
use crate::geom::{lhs_conditions, lhs_planforms, ParamBox, N_PARAMS};
use crate::nn::{seeded_rng, Tensor2};
use crate::scale::{GeomScaler, StandardScaler};

fn tiny() -> DenoiserConfig {
    DenoiserConfig {
        width: 32,
        blocks: 2,
        time_dim: 16,
        cond_dim: 16,
    }
}

fn synthetic_pairs(n: usize, seed: u64) -> Vec<DiffusionSample> {
    let ps = lhs_planforms(&ParamBox::default(), n, seed).unwrap();
    let fcs = lhs_conditions(n, seed + 1).unwrap();
    ps.into_iter()
        .zip(fcs)
        .map(|(p, fc)| DiffusionSample {
            params: p,
            condition: ConditionVector::new(&fc, 5.0 + 10.0 * p.c2),
        })
        .collect()
}

fn fitted_untrained(steps: usize, seed: u64) -> CdmModel {
    let mut m = CdmModel::untrained(tiny(), steps, seed).unwrap();
    let data = synthetic_pairs(40, seed);
    let conds: Vec<[f64; 5]> = data.iter().map(|d| d.condition.to_array()).collect();
    m.cond_scaler = Some(StandardScaler::fit(&conds).unwrap());
    m.geom_scaler = Some(GeomScaler::from_box(&ParamBox::default()));
    m
}

#[test]
fn forward_noise_moments() {
    let s = cosine_schedule(1000).unwrap();
    let x0 = [0.8, -0.4, 0.1, -1.0, 0.5, 0.0, 0.9, -0.6, 0.3];
    let n = 100_000;
    for i in [10, 300, 700] {
        let mut rng = seeded_rng(i as u64);
        let mut sum = [0.0; N_PARAMS];
        let mut sq = [0.0; N_PARAMS];
        for _ in 0..n {
            let eps: Vec<f64> = (0..N_PARAMS).map(|_| rng.sample(StandardNormal)).collect();
            let x = forward_noise(&x0, i, &eps, &s).unwrap();
            for c in 0..N_PARAMS {
                sum[c] += x[c];
                sq[c] += x[c] * x[c];
            }
        }
        let ab = s.alpha_bar[i];
        let var_true = 1.0 - ab;
        for c in 0..N_PARAMS {
            let mean = sum[c] / n as f64;
            let var = sq[c] / n as f64 - mean * mean;
            let band = 3.0 * (var_true / n as f64).sqrt();
            assert!((mean - ab.sqrt() * x0[c]).abs() < band, "mean step {i} coord {c}");
            assert!((var / var_true - 1.0).abs() < 0.05, "var step {i} coord {c}");
        }
    }
}

struct TrueEps(Vec<f64>);

impl EpsPredictor for TrueEps {
    fn predict_eps(&self, x_t: &Tensor2, _step: usize, _cond: &[f64]) -> Result<Tensor2> {
        Tensor2::from_vec(x_t.rows(), N_PARAMS, self.0.repeat(x_t.rows()))
    }
}

#[test]
fn true_noise_inverts_forward_map() {
    let s = cosine_schedule(1000).unwrap();
    let mut rng = seeded_rng(2);
    for i in [0, 1, 50, 500, 900, 998] {
        let x0: Vec<f64> = (0..N_PARAMS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eps: Vec<f64> = (0..N_PARAMS).map(|_| rng.sample(StandardNormal)).collect();
        let xt = forward_noise(&x0, i, &eps, &s).unwrap();
        let pred = TrueEps(eps.clone());
        let e = pred.predict_eps(&Tensor2::row_vector(xt.clone()), i, &[]).unwrap();
        let x0_hat = predict_x0(&xt, e.row(0), i, &s);
        for (a, b) in x0_hat.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-10, "step {i}: {a} vs {b}");
        }
    }
}

/// Zero predictor that remembers the input it saw at the final step.
struct Recorder(RefCell<Option<Tensor2>>);

impl EpsPredictor for Recorder {
    fn predict_eps(&self, x_t: &Tensor2, step: usize, _cond: &[f64]) -> Result<Tensor2> {
        if step == 0 {
            *self.0.borrow_mut() = Some(x_t.clone());
        }
        Ok(Tensor2::zeros(x_t.rows(), N_PARAMS))
    }
}

#[test]
fn last_step_adds_no_noise() {
    let s = cosine_schedule(20).unwrap();
    let rec = Recorder(RefCell::new(None));
    let out = ancestral_sample(&rec, &s, &[0.0; 5], 3, 7, None).unwrap();
    let x1 = rec.0.borrow().clone().unwrap();
    for j in 0..3 {
        let x0 = predict_x0(x1.row(j), &[0.0; N_PARAMS], 0, &s);
        let (mean, sigma) = reverse_mean(&x0, x1.row(j), 0, &s);
        assert_eq!(sigma, 0.0);
        assert_eq!(&out[j][..], &mean[..]);
    }
}

#[test]
fn samples_distinct_reproducible_and_in_box() {
    let m = fitted_untrained(20, 3);
    let mu = ConditionVector::new(&crate::geom::FlightCondition::new(20.0, 0.3, 2.0, 3.0).unwrap(), 12.0);
    let a = m.sample(&mu, 16, 99).unwrap();
    let b = m.sample(&mu, 16, 99).unwrap();
    assert_eq!(a, b);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            assert_ne!(a[i], a[j]);
        }
    }
    let c = m.sample(&mu, 16, 100).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sampler_output_always_in_box() {
    let mut m = fitted_untrained(10, 5);
    // Without the x0 clamp an untrained model wanders far outside the box.
    m.clamp_x0 = None;
    let bx = ParamBox::default();
    let fcs = lhs_conditions(20, 4).unwrap();
    let mut n = 0;
    for (k, fc) in fcs.iter().enumerate() {
        let mu = ConditionVector::new(fc, 3.0 + k as f64);
        for p in m.sample(&mu, 500, k as u64).unwrap() {
            assert!(bx.contains(&p));
            n += 1;
        }
    }
    assert_eq!(n, 10_000);
}

#[test]
fn unfitted_scalers_are_a_state_error() {
    let m = CdmModel::untrained(tiny(), 10, 0).unwrap();
    let mu = ConditionVector {
        altitude_kft: 1.0,
        log10_reynolds: 6.0,
        mach: 0.2,
        alpha_deg: 0.0,
        ld_target: 10.0,
    };
    assert!(matches!(m.sample(&mu, 2, 0), Err(crate::Error::State(_))));
}

#[test]
fn zero_predictor_loss_is_dimension() {
    let mut m = fitted_untrained(100, 1);
    for name in ["head.weight", "head.bias"] {
        m.denoiser.params.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let data = synthetic_pairs(4000, 8);
    let l = m.eval_loss(&data, 3).unwrap();
    assert!((l - 9.0).abs() < 0.25, "{l}");
}

#[test]
fn training_beats_zero_baseline_on_held_out() {
    let train = synthetic_pairs(256, 1);
    let test = synthetic_pairs(256, 50);
    let cfg = DiffusionTrainConfig {
        model: tiny(),
        steps: 50,
        epochs: 30,
        lr: 2e-3,
        batch_size: 32,
        seed: 4,
        ..DiffusionTrainConfig::default()
    };
    let m = train_denoiser(&train, &cfg).unwrap();
    let l = m.eval_loss(&test, 6).unwrap();
    assert!(l < 9.0 * 0.9, "{l}");
    assert!(m.train_losses.last().unwrap() < &m.train_losses[0]);
}

#[test]
fn empty_dataset_rejected() {
    assert!(train_denoiser(&[], &DiffusionTrainConfig::default()).is_err());
}

#[test]
fn schedule_index_checked() {
    let s = cosine_schedule(10).unwrap();
    assert!(forward_noise(&[0.0; 9], 10, &[0.0; 9], &s).is_err());
    assert!(forward_noise(&[0.0; 9], 9, &[0.0; 9], &s).is_ok());
}
