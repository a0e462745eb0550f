use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NodeId, Tape, Tensor2};
use crate::error::{Error, Result};

/// Named parameter tensors of one model, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor2>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor2) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        let i = self.index_of(name)?;
        Some(&mut self.tensors[i])
    }

    /// Puts every parameter on the tape, trainable or constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<NodeId> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    /// Replaces parameter values, checking names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Integrity("parameter names differ from the architecture".into()));
        }
        for (k, (a, b)) in self.tensors.iter().zip(&other.tensors).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Integrity(format!(
                    "parameter {}: expected shape {:?}, found {:?}",
                    self.names[k],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        self.tensors = other.tensors.clone();
        Ok(())
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
pub fn init_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor2 {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor2::from_vec(rows, cols, data).expect("sized buffer")
}

/// Dense layer `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.weight"), init_uniform(fan_in, fan_out, fan_in, rng));
        let b = store.add(format!("{name}.bias"), Tensor2::zeros(1, fan_out));
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[NodeId], x: NodeId) -> Result<NodeId> {
        let h = tape.matmul(x, p[self.w])?;
        tape.add(h, p[self.b])
    }
}

/// Row normalization followed by a learned per-feature scale and shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: usize,
    pub shift: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor2::filled(1, width, 1.0)),
            shift: store.add(format!("{name}.shift"), Tensor2::zeros(1, width)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[NodeId], x: NodeId) -> Result<NodeId> {
        let n = tape.layer_norm(x)?;
        let s = tape.mul(n, p[self.gain])?;
        tape.add(s, p[self.shift])
    }
}

/// Interleaved `[sin(t w0), cos(t w0), sin(t w1), ...]` with frequencies
/// spaced geometrically from 1 down to 1e-4.
pub fn sinusoidal_embed(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Argument(format!("embedding dim must be even and positive, got {dim}")));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let expo = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
        let w = 1e-4f64.powf(expo);
        let a = t as f64 * w;
        out.push(a.sin());
        out.push(a.cos());
    }
    Ok(out)
}

/// One embedding row per timestep.
pub fn sinusoidal_embed_batch(ts: &[usize], dim: usize) -> Result<Tensor2> {
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        data.extend(sinusoidal_embed(t, dim)?);
    }
    Tensor2::from_vec(ts.len(), dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_zero() {
        let e = sinusoidal_embed(0, 16).unwrap();
        for k in 0..8 {
            assert_eq!(e[2 * k], 0.0);
            assert_eq!(e[2 * k + 1], 1.0);
        }
    }

    #[test]
    fn embedding_bounded_and_odd_dim_rejected() {
        for t in [0, 1, 17, 999] {
            assert!(sinusoidal_embed(t, 32).unwrap().iter().all(|v| v.abs() <= 1.0));
        }
        assert!(sinusoidal_embed(3, 7).is_err());
    }

    #[test]
    fn embeddings_pairwise_distinct() {
        let t_max = 1000;
        let embs: Vec<_> = (0..t_max).map(|t| sinusoidal_embed(t, 8).unwrap()).collect();
        let mut min_d = f64::INFINITY;
        for i in 0..t_max {
            for j in i + 1..t_max {
                let d: f64 = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b).powi(2)).sum();
                min_d = min_d.min(d);
            }
        }
        assert!(min_d > 0.0);
    }
}
