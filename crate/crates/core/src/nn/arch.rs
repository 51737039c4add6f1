use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture descriptor. Shapes of every parameter tensor follow from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub t_arch: usize,
    pub p_max_enc: usize,
    pub gamma: usize,
    pub kernels: [usize; 3],
    pub strides: [usize; 3],
    pub cost_channels: [usize; 3],
    pub release_channels: [usize; 3],
    pub d_c: usize,
    pub p_hidden: usize,
    pub d_p: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub out_hidden: usize,
    pub ln_eps: f64,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            t_arch: 512,
            p_max_enc: 20,
            gamma: 64,
            kernels: [9, 5, 3],
            strides: [4, 2, 1],
            cost_channels: [16, 32, 1],
            release_channels: [8, 16, 1],
            d_c: 128,
            p_hidden: 32,
            d_p: 32,
            layers: 2,
            heads: 4,
            d_ff: 256,
            out_hidden: 160,
            ln_eps: 1e-5,
        }
    }
}

impl Arch {
    /// A few-dozen-parameter network for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Arch {
            t_arch: 24,
            p_max_enc: 6,
            gamma: 4,
            kernels: [3, 3, 2],
            strides: [2, 1, 1],
            cost_channels: [2, 3, 1],
            release_channels: [2, 2, 1],
            d_c: 6,
            p_hidden: 5,
            d_p: 4,
            layers: 2,
            heads: 2,
            d_ff: 7,
            out_hidden: 6,
            ln_eps: 1e-5,
        }
    }

    pub fn d_e(&self) -> usize {
        self.d_c + self.d_p
    }

    pub fn d_head(&self) -> usize {
        self.d_e() / self.heads
    }

    /// Window width in time slots.
    pub fn eta(&self) -> usize {
        self.t_arch.div_ceil(self.gamma)
    }

    /// Sequence lengths after each convolution (valid padding).
    pub fn conv_lengths(&self) -> [usize; 3] {
        let mut len = self.t_arch;
        let mut out = [0; 3];
        for i in 0..3 {
            len = if len >= self.kernels[i] {
                (len - self.kernels[i]) / self.strides[i] + 1
            } else {
                0
            };
            out[i] = len;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("architecture: {m}")));
        let positive = [
            self.t_arch,
            self.p_max_enc,
            self.gamma,
            self.d_c,
            self.p_hidden,
            self.d_p,
            self.layers,
            self.heads,
            self.d_ff,
            self.out_hidden,
        ];
        if positive.contains(&0)
            || self.kernels.contains(&0)
            || self.strides.contains(&0)
            || self.cost_channels.contains(&0)
            || self.release_channels.contains(&0)
        {
            return bad("all sizes must be positive".into());
        }
        if self.conv_lengths()[2] == 0 {
            return bad(format!("convolutions leave no output for T = {}", self.t_arch));
        }
        if self.d_e() % self.heads != 0 {
            return bad(format!("d_e = {} not divisible by {} heads", self.d_e(), self.heads));
        }
        if !(self.ln_eps > 0.0) {
            return bad("ln_eps must be positive".into());
        }
        Ok(())
    }
}
