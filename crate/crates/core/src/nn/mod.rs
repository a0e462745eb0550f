//! Minimal dense reverse-mode autodiff and training kernel shared by the
//! surrogates and the diffusion denoiser. 64-bit floats throughout.

mod early;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use early::EarlyStopping;
pub use layers::{
    init_uniform, sinusoidal_embed, sinusoidal_embed_batch, LayerNorm, Linear, ParamStore,
};
pub use optim::{adam_step, AdamState};
pub use tape::{Activation, Gradients, NodeId, Tape};
pub use tensor::Tensor2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used for all seeded work in the crate.
pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub mod gradcheck;
