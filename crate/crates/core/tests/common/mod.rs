#![allow(dead_code)]

use std::sync::OnceLock;

use bwb_core::diffusion::{train_denoiser, CdmModel, ConditionVector, DenoiserConfig, DiffusionSample, DiffusionTrainConfig};
use bwb_core::geom::{lhs_conditions, lhs_planforms, FlightCondition, ParamBox, PlanformParams};
use bwb_core::surrogate::{train_ld_surrogate, LdSample, LdSurrogate, LdTrainConfig, OracleConfig};

pub struct Labeled {
    pub params: PlanformParams,
    pub flight: FlightCondition,
    pub ld: f64,
}

pub fn labeled(n: usize, seed: u64) -> Vec<Labeled> {
    let ps = lhs_planforms(&ParamBox::default(), n, seed).unwrap();
    let fcs = lhs_conditions(n, seed + 1).unwrap();
    let o = OracleConfig::default();
    ps.into_iter()
        .zip(fcs)
        .map(|(params, flight)| Labeled {
            params,
            flight,
            ld: o.coefficients(&params, &flight).unwrap().ld,
        })
        .collect()
}

pub struct Models {
    pub train: Vec<Labeled>,
    pub test: Vec<Labeled>,
    pub ld: LdSurrogate,
    pub cdm: CdmModel,
}

/// Oracle-trained L/D surrogate and a small diffusion model, built once per
/// test binary.
pub fn models() -> &'static Models {
    static M: OnceLock<Models> = OnceLock::new();
    M.get_or_init(|| {
        let train = labeled(1500, 100);
        let test = labeled(100, 200);
        let samples: Vec<LdSample> = train
            .iter()
            .map(|r| LdSample {
                params: r.params,
                condition: r.flight,
                ld: r.ld,
            })
            .collect();
        let ld = train_ld_surrogate(
            &samples,
            &LdTrainConfig {
                epochs: 200,
                seed: 3,
                ..LdTrainConfig::default()
            },
        )
        .unwrap();
        let data: Vec<DiffusionSample> = train
            .iter()
            .map(|r| DiffusionSample {
                params: r.params,
                condition: ConditionVector::new(&r.flight, r.ld),
            })
            .collect();
        let cdm = train_denoiser(
            &data,
            &DiffusionTrainConfig {
                model: DenoiserConfig {
                    width: 64,
                    blocks: 2,
                    time_dim: 32,
                    cond_dim: 32,
                },
                steps: 100,
                epochs: 150,
                lr: 1e-3,
                seed: 4,
                ..DiffusionTrainConfig::default()
            },
        )
        .unwrap();
        Models { train, test, ld, cdm }
    })
}
