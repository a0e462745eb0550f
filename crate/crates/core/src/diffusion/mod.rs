//! Conditional DDPM over the normalized 9-parameter planform vector.

mod model;
mod schedule;

pub use model::{
    ancestral_sample, train_denoiser, CdmModel, ConditionVector, DenoiserConfig, DenoiserModel, DiffusionSample,
    DiffusionTrainConfig, EpsPredictor, CONDITION_ORDER,
};
pub use schedule::{
    cosine_schedule, forward_noise, predict_x0, reverse_mean, NoiseSchedule, BETA_MAX, BETA_MIN, COSINE_OFFSET,
};

#[cfg(test)]
mod tests;
