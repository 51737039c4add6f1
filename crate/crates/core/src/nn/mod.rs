//! The scheduling network: per-job input module, transformer encoder over
//! jobs, and a softmax over time windows.

mod arch;
mod gradcheck;
pub(crate) mod layers;
mod network;
mod params;

pub use arch::Arch;
pub use gradcheck::{check_gradient, sample_coords, GradCheck, FLAT};
pub use network::{backward, encode_input, forward, forward_cached, EncodedInput, Forward};
pub use params::{grads_add, grads_dot, init_params, Grads, Params, Tensor};
