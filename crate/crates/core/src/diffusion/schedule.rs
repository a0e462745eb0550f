use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COSINE_OFFSET: f64 = 0.008;
pub const BETA_MIN: f64 = 1e-8;
pub const BETA_MAX: f64 = 0.999;

/// Discrete noise schedule. Entry `i` of each vector belongs to diffusion
/// step `t = i + 1`, so `alpha_bar[0]` is the first (largest) value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub offset: f64,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// `alpha_bar` one step earlier, with the clean-data value 1 before step 1.
    pub fn alpha_bar_prev(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.alpha_bar[i - 1]
        }
    }

    /// Posterior variance of the reverse step at index `i`.
    pub fn posterior_variance(&self, i: usize) -> f64 {
        self.beta[i] * (1.0 - self.alpha_bar_prev(i)) / (1.0 - self.alpha_bar[i])
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.steps {
            return Err(Error::Argument(format!(
                "timestep index {i} outside [0, {})",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
/// `f(t) = cos^2(((t / T) + s) / (1 + s) * pi / 2)`, betas clipped, then
/// `alpha_bar` rebuilt as the cumulative product of the clipped `1 - beta`.
pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::Argument(format!("schedule needs at least 2 steps, got {steps}")));
    }
    let s = COSINE_OFFSET;
    let f = |t: f64| {
        let a = ((t / steps as f64) + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
        a.cos().powi(2)
    };
    let f0 = f(0.0);
    let mut beta = Vec::with_capacity(steps);
    let mut prev = 1.0;
    for t in 1..=steps {
        let ab = f(t as f64) / f0;
        beta.push((1.0 - ab / prev).clamp(BETA_MIN, BETA_MAX));
        prev = ab;
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule {
        steps,
        offset: s,
        beta,
        alpha,
        alpha_bar,
    })
}

/// `x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps` at step index `i`.
pub fn forward_noise(x0: &[f64], i: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_index(i)?;
    if x0.len() != eps.len() {
        return Err(Error::Shape {
            op: "forward_noise",
            lhs: (1, x0.len()),
            rhs: (1, eps.len()),
        });
    }
    let ab = sched.alpha_bar[i];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Clean-sample estimate from a noise prediction.
pub fn predict_x0(x_t: &[f64], eps_hat: &[f64], i: usize, sched: &NoiseSchedule) -> Vec<f64> {
    let ab = sched.alpha_bar[i];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_t.iter().zip(eps_hat).map(|(x, e)| (x - b * e) / a).collect()
}

/// Reverse-process mean given `x0_hat` and `x_t`, plus the standard
/// deviation of the noise added at this step (zero at the last step).
pub fn reverse_mean(x0_hat: &[f64], x_t: &[f64], i: usize, sched: &NoiseSchedule) -> (Vec<f64>, f64) {
    let ab = sched.alpha_bar[i];
    let ab_prev = sched.alpha_bar_prev(i);
    let beta = sched.beta[i];
    let c0 = beta * ab_prev.sqrt() / (1.0 - ab);
    let ct = (1.0 - ab_prev) * sched.alpha[i].sqrt() / (1.0 - ab);
    let mean = x0_hat.iter().zip(x_t).map(|(x0, xt)| c0 * x0 + ct * xt).collect();
    let sigma = if i == 0 { 0.0 } else { sched.posterior_variance(i).sqrt() };
    (mean, sigma)
}
