//! Central finite-difference checks of parameter gradients.

use rand::Rng;

use super::params::{Grads, Params};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `|a - n| / max(|a|, |n|)` over the checked coordinates as vectors.
    pub rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a kink.
    pub kinked: usize,
    /// Both gradients vanish on the checked coordinates (below `FLAT`), so
    /// the relative error is meaningless.
    pub flat: bool,
}

pub const FLAT: f64 = 1e-9;

impl GradCheck {
    /// Usable for a relative comparison.
    pub fn informative(&self) -> bool {
        self.checked > 0 && !self.flat
    }
}

/// `per_tensor` random coordinates from each tensor.
pub fn sample_coords<R: Rng + ?Sized>(params: &Params, per_tensor: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, t) in params.tensors.iter().enumerate() {
        for _ in 0..per_tensor.min(t.data.len()) {
            out.push((i, rng.random_range(0..t.data.len())));
        }
    }
    out
}

/// Compares `analytic` with central differences of `f`. `f` returns the loss
/// and a signature of its piecewise branch; coordinates whose perturbations
/// change the signature are excluded.
pub fn check_gradient<F, S>(params: &Params, analytic: &Grads, f: F, coords: &[(usize, usize)], h: f64) -> GradCheck
where
    F: Fn(&Params) -> (f64, S),
    S: PartialEq,
{
    let (_, base_sig) = f(params);
    let mut p = params.clone();
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    let mut checked = 0;
    let mut kinked = 0;
    for &(t, k) in coords {
        let x = p.tensors[t].data[k];
        p.tensors[t].data[k] = x + h;
        let (fp, sp) = f(&p);
        p.tensors[t].data[k] = x - h;
        let (fm, sm) = f(&p);
        p.tensors[t].data[k] = x;
        if sp != base_sig || sm != base_sig {
            kinked += 1;
            continue;
        }
        let num = (fp - fm) / (2.0 * h);
        let a = analytic[t][k];
        diff += (a - num) * (a - num);
        na += a * a;
        nn += num * num;
        checked += 1;
    }
    let scale = na.sqrt().max(nn.sqrt());
    GradCheck {
        rel_error: if scale > 0.0 { diff.sqrt() / scale } else { 0.0 },
        checked,
        kinked,
        flat: scale < FLAT,
    }
}
