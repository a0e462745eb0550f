use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FlightCondition, ParamBox, PlanformParams, FLIGHT_RANGES, N_PARAMS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingScale {
    Linear,
    /// Stratified uniformly in `log10` of the value.
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRange {
    pub lo: f64,
    pub hi: f64,
    pub scale: SamplingScale,
}

impl SamplingRange {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            scale: SamplingScale::Linear,
        }
    }

    pub fn log10(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            scale: SamplingScale::Log10,
        }
    }

    fn map(&self, u: f64) -> f64 {
        match self.scale {
            SamplingScale::Linear => self.lo + u * (self.hi - self.lo),
            SamplingScale::Log10 => {
                let (a, b) = (self.lo.log10(), self.hi.log10());
                10f64.powf(a + u * (b - a))
            }
        }
    }
}

/// Latin hypercube design on the unit cube: `n` rows of `dims` values where
/// each column visits every stratum `[k/n, (k+1)/n)` exactly once.
pub fn lhs_unit<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Argument("LHS sample count must be at least 1".into()));
    }
    let mut out = vec![vec![0.0; dims]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        strata.shuffle(rng);
        for (row, &k) in out.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            row[d] = (k as f64 + u) / n as f64;
        }
    }
    Ok(out)
}

/// Latin hypercube sample over arbitrary ranges, deterministic in `seed`.
pub fn lhs_sample(ranges: &[SamplingRange], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = lhs_unit(n, ranges.len(), &mut rng)?;
    for row in rows.iter_mut() {
        for (x, r) in row.iter_mut().zip(ranges) {
            *x = r.map(*x);
        }
    }
    Ok(rows)
}

pub fn lhs_planforms(bx: &ParamBox, n: usize, seed: u64) -> Result<Vec<PlanformParams>> {
    let ranges: Vec<_> = (0..N_PARAMS)
        .map(|j| SamplingRange::linear(bx.lo[j], bx.hi[j]))
        .collect();
    lhs_sample(&ranges, n, seed)?
        .into_iter()
        .map(|r| PlanformParams::from_slice(&r))
        .collect()
}

/// Flight conditions with altitude, Mach and alpha linear and length on a log scale.
pub fn lhs_conditions(n: usize, seed: u64) -> Result<Vec<FlightCondition>> {
    let [alt, mach, len, alpha] = FLIGHT_RANGES;
    let ranges = [
        SamplingRange::linear(alt.0, alt.1),
        SamplingRange::linear(mach.0, mach.1),
        SamplingRange::log10(len.0, len.1),
        SamplingRange::linear(alpha.0, alpha.1),
    ];
    lhs_sample(&ranges, n, seed)?
        .into_iter()
        .map(|r| FlightCondition::new(r[0], r[1], r[2].clamp(len.0, len.1), r[3]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strata_counts(values: impl Iterator<Item = f64>, lo: f64, hi: f64, n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for v in values {
            let k = (((v - lo) / (hi - lo)) * n as f64).floor() as usize;
            c[k.min(n - 1)] += 1;
        }
        c
    }

    #[test]
    fn four_points_one_per_quarter() {
        let rows = lhs_sample(&[SamplingRange::linear(0.0, 1.0); 3], 4, 7).unwrap();
        for d in 0..3 {
            let c = strata_counts(rows.iter().map(|r| r[d]), 0.0, 1.0, 4);
            assert_eq!(c, vec![1, 1, 1, 1]);
        }
    }

    #[test]
    fn same_seed_same_design() {
        let r = [SamplingRange::linear(-2.0, 5.0), SamplingRange::log10(0.1, 10.0)];
        assert_eq!(lhs_sample(&r, 50, 3).unwrap(), lhs_sample(&r, 50, 3).unwrap());
        assert_ne!(lhs_sample(&r, 50, 3).unwrap(), lhs_sample(&r, 50, 4).unwrap());
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(lhs_sample(&[SamplingRange::linear(0.0, 1.0)], 0, 1).is_err());
    }

    #[test]
    fn length_stratified_in_log_space() {
        let n = 40;
        let fcs = lhs_conditions(n, 11).unwrap();
        let c = strata_counts(fcs.iter().map(|f| f.centerline_length.log10()), -1.0, 1.0, n);
        assert!(c.iter().all(|&k| k == 1), "{c:?}");
        let c = strata_counts(fcs.iter().map(|f| f.alpha_deg), -8.0, 16.0, n);
        assert!(c.iter().all(|&k| k == 1));
    }

    #[test]
    fn planform_marginals_stratified() {
        let bx = ParamBox::default();
        let n = 25;
        let ps = lhs_planforms(&bx, n, 5).unwrap();
        for j in 0..N_PARAMS {
            let c = strata_counts(ps.iter().map(|p| p.to_array()[j]), bx.lo[j], bx.hi[j], n);
            assert!(c.iter().all(|&k| k == 1), "dim {j}: {c:?}");
        }
        assert!(ps.iter().all(|p| bx.contains(p)));
    }
}
