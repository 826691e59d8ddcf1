//! Dense tensors, reverse-mode autodiff, Adam and a portable PRNG.

mod adam;
mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_many};
pub use rng::Rng;
pub use tape::{sigmoid, Gradients, Index, Tape, Var};
pub use tensor::{Tensor, TensorError};

/// Glorot-uniform `fan_in x fan_out` matrix: `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.range(-a, a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches")
}
