use ndarray::{s, Array2, ArrayView2};

use super::arch::Arch;
use super::layers::{
    affine, affine_backward, conv1d, conv1d_backward, layer_norm, layer_norm_backward, relu,
    relu_backward, softmax_rows, softmax_rows_backward, view2, ConvGeom, NormCache, SeqShape,
};
use super::params::{Affine, EncoderIdx, Grads, Params};
use crate::error::{Error, Result};
use crate::model::{normalize_costs, starting_costs, Instance};

/// Network input for one instance: normalized cost rows, unary processing
/// times and release masks, one row per job.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub costs: Array2<f64>,
    pub ptime: Array2<f64>,
    pub release: Array2<f64>,
}

impl EncodedInput {
    pub fn n(&self) -> usize {
        self.costs.nrows()
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> EncodedInput {
        let pick = |a: &Array2<f64>| a.select(ndarray::Axis(0), perm);
        EncodedInput {
            costs: pick(&self.costs),
            ptime: pick(&self.ptime),
            release: pick(&self.release),
        }
    }
}

pub fn encode_input(instance: &Instance, arch: &Arch) -> Result<EncodedInput> {
    let t = arch.t_arch;
    if instance.horizon() > t {
        return Err(Error::Capacity(format!(
            "horizon {} exceeds the model horizon T = {t}",
            instance.horizon()
        )));
    }
    if let Some((j, job)) = instance
        .jobs()
        .iter()
        .enumerate()
        .find(|(_, job)| job.p > arch.p_max_enc)
    {
        return Err(Error::Capacity(format!(
            "job {j} has processing time {} above p_max_enc = {}",
            job.p, arch.p_max_enc
        )));
    }
    let n = instance.n();
    let norm = normalize_costs(&starting_costs(instance));
    let h = instance.horizon();
    let costs = Array2::from_shape_fn((n, t), |(j, k)| norm.get(j, k.min(h - 1)));
    let ptime = Array2::from_shape_fn((n, arch.p_max_enc), |(j, k)| {
        if k < instance.job(j).p {
            1.0
        } else {
            0.0
        }
    });
    let release = Array2::from_shape_fn((n, t), |(j, k)| {
        if k < instance.job(j).r {
            1.0
        } else {
            0.0
        }
    });
    Ok(EncodedInput {
        costs,
        ptime,
        release,
    })
}

struct CnnCache {
    cols: Vec<Array2<f64>>,
    acts: Vec<Array2<f64>>,
    flat: Array2<f64>,
}

struct EncoderCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    z: Array2<f64>,
    ln1: NormCache,
    x1: Array2<f64>,
    hidden: Array2<f64>,
    ln2: NormCache,
}

/// Output rows plus everything the backward pass needs.
pub struct Forward {
    pub o: Array2<f64>,
    cost: CnnCache,
    rel: CnnCache,
    p_hidden: Array2<f64>,
    p_out: Array2<f64>,
    enc: Vec<EncoderCache>,
    top: Array2<f64>,
    out_hidden: Array2<f64>,
}

impl Forward {
    /// ReLU activation pattern, used to detect kinks in finite-difference checks.
    pub fn relu_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        let mut push = |a: &Array2<f64>| sig.extend(a.iter().map(|&v| v > 0.0));
        for c in [&self.cost, &self.rel] {
            c.acts.iter().for_each(&mut push);
        }
        push(&self.p_hidden);
        for e in &self.enc {
            push(&e.hidden);
        }
        push(&self.out_hidden);
        sig
    }
}

fn geometries(arch: &Arch) -> [ConvGeom; 3] {
    let lens = arch.conv_lengths();
    std::array::from_fn(|i| ConvGeom {
        kernel: arch.kernels[i],
        stride: arch.strides[i],
        out_len: lens[i],
    })
}

fn data<'a>(params: &'a Params, idx: usize) -> &'a [f64] {
    &params.tensors[idx].data
}

fn cnn_forward(
    params: &Params,
    convs: &[Affine; 3],
    proj: Affine,
    channels: [usize; 3],
    input: &Array2<f64>,
) -> (Array2<f64>, CnnCache) {
    let arch = &params.arch;
    let n = input.nrows();
    let geoms = geometries(arch);
    let mut x = input
        .to_shape((n * arch.t_arch, 1))
        .expect("contiguous input")
        .to_owned();
    let mut shape = SeqShape {
        batch: n,
        len: arch.t_arch,
        channels: 1,
    };
    let mut cols = Vec::with_capacity(3);
    let mut acts = Vec::with_capacity(3);
    for i in 0..3 {
        let (y, c) = conv1d(&x.view(), shape, &geoms[i], data(params, convs[i].w), data(params, convs[i].b));
        x = relu(y);
        cols.push(c);
        acts.push(x.clone());
        shape = SeqShape {
            batch: n,
            len: geoms[i].out_len,
            channels: channels[i],
        };
    }
    let flat = x
        .to_shape((n, shape.len * shape.channels))
        .expect("contiguous activations")
        .to_owned();
    let out = affine(&flat.view(), data(params, proj.w), data(params, proj.b));
    (out, CnnCache { cols, acts, flat })
}

fn cnn_backward(
    params: &Params,
    convs: &[Affine; 3],
    proj: Affine,
    channels: [usize; 3],
    cache: &CnnCache,
    dout: &Array2<f64>,
    grads: &mut Grads,
) {
    let arch = &params.arch;
    let n = dout.nrows();
    let geoms = geometries(arch);
    let (gw, gb) = two_mut(grads, proj.w, proj.b);
    let dflat = affine_backward(&cache.flat.view(), data(params, proj.w), dout, gw, gb, true)
        .expect("requested dx");
    let mut dy = dflat
        .to_shape((n * geoms[2].out_len, channels[2]))
        .expect("contiguous gradient")
        .to_owned();
    for i in (0..3).rev() {
        dy = relu_backward(&cache.acts[i], dy);
        let shape = if i == 0 {
            SeqShape {
                batch: n,
                len: arch.t_arch,
                channels: 1,
            }
        } else {
            SeqShape {
                batch: n,
                len: geoms[i - 1].out_len,
                channels: channels[i - 1],
            }
        };
        let (gw, gb) = two_mut(grads, convs[i].w, convs[i].b);
        match conv1d_backward(&cache.cols[i], shape, &geoms[i], data(params, convs[i].w), &dy, gw, gb, i > 0) {
            Some(dx) => dy = dx,
            None => break,
        }
    }
}

/// Two distinct mutable gradient slices.
fn two_mut(grads: &mut Grads, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    assert!(a < b, "weights precede biases in the layout");
    let (lo, hi) = grads.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

fn encoder_forward(params: &Params, idx: &EncoderIdx, x: Array2<f64>) -> (Array2<f64>, EncoderCache) {
    let arch = &params.arch;
    let d = arch.d_e();
    let dh = arch.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = x.dot(&view2(data(params, idx.wq), d, d));
    let k = x.dot(&view2(data(params, idx.wk), d, d));
    let v = x.dot(&view2(data(params, idx.wv), d, d));
    let mut z = Array2::<f64>::zeros(x.raw_dim());
    let mut probs = Vec::with_capacity(arch.heads);
    for h in 0..arch.heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let p = softmax_rows(scores);
        z.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let attn = affine(&z.view(), data(params, idx.out.w), data(params, idx.out.b));
    let (x1, ln1) = layer_norm(&(&x + &attn), data(params, idx.ln1.w), data(params, idx.ln1.b), arch.ln_eps);
    let hidden = relu(affine(&x1.view(), data(params, idx.ff1.w), data(params, idx.ff1.b)));
    let ff = affine(&hidden.view(), data(params, idx.ff2.w), data(params, idx.ff2.b));
    let (x2, ln2) = layer_norm(&(&x1 + &ff), data(params, idx.ln2.w), data(params, idx.ln2.b), arch.ln_eps);
    let cache = EncoderCache {
        x,
        q,
        k,
        v,
        probs,
        z,
        ln1,
        x1,
        hidden,
        ln2,
    };
    (x2, cache)
}

fn encoder_backward(
    params: &Params,
    idx: &EncoderIdx,
    c: &EncoderCache,
    dx2: &Array2<f64>,
    grads: &mut Grads,
) -> Array2<f64> {
    let arch = &params.arch;
    let d = arch.d_e();
    let dh = arch.d_head();
    let scale = 1.0 / (dh as f64).sqrt();

    let (gg, gb) = two_mut(grads, idx.ln2.w, idx.ln2.b);
    let dpre2 = layer_norm_backward(&c.ln2, data(params, idx.ln2.w), dx2, gg, gb);
    let (gw, gb) = two_mut(grads, idx.ff2.w, idx.ff2.b);
    let dhidden = affine_backward(&c.hidden.view(), data(params, idx.ff2.w), &dpre2, gw, gb, true)
        .expect("requested dx");
    let dhidden = relu_backward(&c.hidden, dhidden);
    let (gw, gb) = two_mut(grads, idx.ff1.w, idx.ff1.b);
    let dx1 = dpre2
        + affine_backward(&c.x1.view(), data(params, idx.ff1.w), &dhidden, gw, gb, true)
            .expect("requested dx");

    let (gg, gb) = two_mut(grads, idx.ln1.w, idx.ln1.b);
    let dpre1 = layer_norm_backward(&c.ln1, data(params, idx.ln1.w), &dx1, gg, gb);
    let (gw, gb) = two_mut(grads, idx.out.w, idx.out.b);
    let dz = affine_backward(&c.z.view(), data(params, idx.out.w), &dpre1, gw, gb, true)
        .expect("requested dx");

    let mut dq = Array2::<f64>::zeros(c.q.raw_dim());
    let mut dk = Array2::<f64>::zeros(c.k.raw_dim());
    let mut dv = Array2::<f64>::zeros(c.v.raw_dim());
    for h in 0..arch.heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let p = &c.probs[h];
        let dzh = dz.slice(cols);
        let dp = dzh.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dzh));
        let ds = softmax_rows_backward(p, &dp) * scale;
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    let mut dx = dpre1;
    for (w, g) in [(idx.wq, &dq), (idx.wk, &dk), (idx.wv, &dv)] {
        let gw = c.x.t().dot(g);
        for (a, b) in grads[w].iter_mut().zip(gw.iter()) {
            *a += b;
        }
        dx += &g.dot(&view2(data(params, w), d, d).t());
    }
    dx
}

/// Runs the network and keeps intermediate activations.
pub fn forward_cached(params: &Params, enc: &EncodedInput) -> Result<Forward> {
    let arch = &params.arch;
    if enc.costs.ncols() != arch.t_arch
        || enc.release.ncols() != arch.t_arch
        || enc.ptime.ncols() != arch.p_max_enc
        || enc.n() == 0
        || enc.release.nrows() != enc.n()
        || enc.ptime.nrows() != enc.n()
    {
        return Err(Error::Capacity(format!(
            "encoded input shapes {:?}/{:?}/{:?} do not match the architecture (T = {}, p_max_enc = {})",
            enc.costs.dim(),
            enc.ptime.dim(),
            enc.release.dim(),
            arch.t_arch,
            arch.p_max_enc
        )));
    }
    let lay = params.layout();
    let (c_out, cost) = cnn_forward(params, &lay.cost_conv, lay.cost_proj, arch.cost_channels, &enc.costs);
    let (r_out, rel) = cnn_forward(params, &lay.rel_conv, lay.rel_proj, arch.release_channels, &enc.release);
    let p_hidden = relu(affine(&enc.ptime.view(), data(params, lay.p1.w), data(params, lay.p1.b)));
    let p_out = affine(&p_hidden.view(), data(params, lay.p2.w), data(params, lay.p2.b));

    let n = enc.n();
    let mut x = Array2::<f64>::zeros((n, arch.d_e()));
    x.slice_mut(s![.., ..arch.d_p]).assign(&p_out);
    x.slice_mut(s![.., arch.d_p..]).assign(&(&c_out + &r_out));
    let mut caches = Vec::with_capacity(arch.layers);
    for idx in &lay.enc {
        let (y, c) = encoder_forward(params, idx, x);
        caches.push(c);
        x = y;
    }
    let out_hidden = relu(affine(&x.view(), data(params, lay.out1.w), data(params, lay.out1.b)));
    let logits = affine(&out_hidden.view(), data(params, lay.out2.w), data(params, lay.out2.b));
    Ok(Forward {
        o: softmax_rows(logits),
        cost,
        rel,
        p_hidden,
        p_out,
        enc: caches,
        top: x,
        out_hidden,
    })
}

/// Window distribution `o` (n x gamma).
pub fn forward(params: &Params, enc: &EncodedInput) -> Result<Array2<f64>> {
    forward_cached(params, enc).map(|f| f.o)
}

/// Gradient of a scalar with respect to every parameter, given its gradient
/// with respect to the output distribution.
pub fn backward(params: &Params, fwd: &Forward, enc: &EncodedInput, d_o: &ArrayView2<f64>) -> Grads {
    let arch = &params.arch;
    let lay = params.layout();
    let mut grads = params.zeros_like();

    let dlogits = softmax_rows_backward(&fwd.o, &d_o.to_owned());
    let (gw, gb) = two_mut(&mut grads, lay.out2.w, lay.out2.b);
    let dh = affine_backward(&fwd.out_hidden.view(), data(params, lay.out2.w), &dlogits, gw, gb, true)
        .expect("requested dx");
    let dh = relu_backward(&fwd.out_hidden, dh);
    let (gw, gb) = two_mut(&mut grads, lay.out1.w, lay.out1.b);
    let mut dx = affine_backward(&fwd.top.view(), data(params, lay.out1.w), &dh, gw, gb, true)
        .expect("requested dx");

    for (idx, cache) in lay.enc.iter().zip(&fwd.enc).rev() {
        dx = encoder_backward(params, idx, cache, &dx, &mut grads);
    }

    let dp_out = dx.slice(s![.., ..arch.d_p]).to_owned();
    let dcr = dx.slice(s![.., arch.d_p..]).to_owned();
    let (gw, gb) = two_mut(&mut grads, lay.p2.w, lay.p2.b);
    let dph = affine_backward(&fwd.p_hidden.view(), data(params, lay.p2.w), &dp_out, gw, gb, true)
        .expect("requested dx");
    let dph = relu_backward(&fwd.p_hidden, dph);
    let (gw, gb) = two_mut(&mut grads, lay.p1.w, lay.p1.b);
    affine_backward(&enc.ptime.view(), data(params, lay.p1.w), &dph, gw, gb, false);
    let _ = &fwd.p_out;

    cnn_backward(params, &lay.cost_conv, lay.cost_proj, arch.cost_channels, &fwd.cost, &dcr, &mut grads);
    cnn_backward(params, &lay.rel_conv, lay.rel_proj, arch.release_channels, &fwd.rel, &dcr, &mut grads);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_instance, Job, ObjectiveKind, ObjectiveSpec};
    use crate::nn::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_instance(case: u8, n: usize, seed: u64) -> Instance {
        sample_instance(case, n, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn encoding_examples() {
        let arch = Arch::tiny();
        let inst = Instance::new(
            vec![Job::new(3, 0, 1.0), Job::new(1, 2, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wc),
            6,
        )
        .unwrap();
        let e = encode_input(&inst, &arch).unwrap();
        assert_eq!(e.ptime.row(0).to_vec(), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(e.release.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(e.release.row(1).sum(), 2.0);
        assert_eq!(e.costs[[0, 23]], e.costs[[0, 5]]);
        assert!(e.costs.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let wt = small_instance(2, 4, 1);
        assert!(encode_input(&wt, &arch).unwrap().release.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn capacity_errors_name_the_dimension() {
        let arch = Arch::tiny();
        let inst = Instance::with_min_horizon(
            vec![Job::new(7, 0, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wc),
        )
        .unwrap();
        let err = encode_input(&inst, &arch).unwrap_err().to_string();
        assert!(err.contains("p_max_enc"), "{err}");
        let inst = Instance::new(
            vec![Job::new(1, 0, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wc),
            30,
        )
        .unwrap();
        let err = encode_input(&inst, &arch).unwrap_err().to_string();
        assert!(err.contains("horizon"), "{err}");
    }

    #[test]
    fn rows_are_distributions_for_any_n() {
        let params = init_params(&Arch::tiny(), 4).unwrap();
        for n in [1, 2, 5, 9] {
            let inst = small_instance(11, n, n as u64);
            let o = forward(&params, &encode_input(&inst, &params.arch).unwrap()).unwrap();
            assert_eq!(o.dim(), (n, 4));
            for row in o.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let params = init_params(&Arch::tiny(), 5).unwrap();
        let inst = small_instance(13, 6, 3);
        let enc = encode_input(&inst, &params.arch).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let o = forward(&params, &enc).unwrap();
        let op = forward(&params, &enc.permuted(&perm)).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            for k in 0..4 {
                assert!((op[[i, k]] - o[[src, k]]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn near_uniform_at_init() {
        let params = init_params(&Arch::default(), 0).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..5 {
            let inst = sample_instance(11, 12, 20, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let o = forward(&params, &encode_input(&inst, &params.arch).unwrap()).unwrap();
            worst = worst.max(o.iter().copied().fold(0.0, f64::max));
        }
        assert!(worst < 3.0 / 64.0, "max row entry at init {worst}");
    }
}
