use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::Arch;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"UMSNNPAR";
const VERSION: u32 = 1;
/// Shrinks the last layer so initial window distributions start near uniform.
const OUTPUT_GAIN: f64 = 0.1;
const CONV_BIAS: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize, gain: f64 },
    /// Magnitudes of a Xavier draw. Used for single-channel convs over
    /// non-negative inputs so their ReLU starts live.
    XavierAbs { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Affine {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderIdx {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub out: Affine,
    pub ln1: Affine,
    pub ff1: Affine,
    pub ff2: Affine,
    pub ln2: Affine,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub cost_conv: [Affine; 3],
    pub cost_proj: Affine,
    pub rel_conv: [Affine; 3],
    pub rel_proj: Affine,
    pub p1: Affine,
    pub p2: Affine,
    pub enc: Vec<EncoderIdx>,
    pub out1: Affine,
    pub out2: Affine,
}

struct Builder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn affine(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Affine {
        Affine {
            w: self.push(
                format!("{name}.w"),
                vec![fan_in, fan_out],
                Init::Xavier {
                    fan_in,
                    fan_out,
                    gain: 1.0,
                },
            ),
            b: self.push(format!("{name}.b"), vec![fan_out], Init::Zeros),
        }
    }

    fn conv(&mut self, name: &str, k: usize, c_in: usize, c_out: usize) -> Affine {
        let (fan_in, fan_out) = (k * c_in, k * c_out);
        let init = if c_out == 1 {
            Init::XavierAbs { fan_in, fan_out }
        } else {
            Init::Xavier { fan_in, fan_out, gain: 1.0 }
        };
        Affine {
            w: self.push(format!("{name}.w"), vec![k, c_in, c_out], init),
            b: self.push(format!("{name}.b"), vec![c_out], Init::Const(CONV_BIAS)),
        }
    }

    fn square(&mut self, name: String, d: usize) -> usize {
        let init = Init::Xavier {
            fan_in: d,
            fan_out: d,
            gain: 1.0,
        };
        self.push(name, vec![d, d], init)
    }

    fn norm(&mut self, name: &str, d: usize) -> Affine {
        Affine {
            w: self.push(format!("{name}.g"), vec![d], Init::Ones),
            b: self.push(format!("{name}.b"), vec![d], Init::Zeros),
        }
    }

    fn cnn(&mut self, prefix: &str, arch: &Arch, channels: [usize; 3]) -> ([Affine; 3], Affine) {
        let mut c_in = 1;
        let convs = std::array::from_fn(|i| {
            let a = self.conv(&format!("{prefix}.conv{i}"), arch.kernels[i], c_in, channels[i]);
            c_in = channels[i];
            a
        });
        let flat = arch.conv_lengths()[2] * channels[2];
        let proj = self.affine(&format!("{prefix}.proj"), flat, arch.d_c);
        (convs, proj)
    }
}

/// Tensor order: cost CNN, release CNN, processing-time MLP, encoder layers,
/// output MLP. Within a layer weights precede biases.
fn build_layout(arch: &Arch) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let mut b = Builder { specs: Vec::new() };
    let (cost_conv, cost_proj) = b.cnn("cost", arch, arch.cost_channels);
    let (rel_conv, rel_proj) = b.cnn("release", arch, arch.release_channels);
    let p1 = b.affine("ptime.fc1", arch.p_max_enc, arch.p_hidden);
    let p2 = b.affine("ptime.fc2", arch.p_hidden, arch.d_p);
    let d = arch.d_e();
    let enc = (0..arch.layers)
        .map(|l| EncoderIdx {
            wq: b.square(format!("enc{l}.wq"), d),
            wk: b.square(format!("enc{l}.wk"), d),
            wv: b.square(format!("enc{l}.wv"), d),
            out: b.affine(&format!("enc{l}.wo"), d, d),
            ln1: b.norm(&format!("enc{l}.ln1"), d),
            ff1: b.affine(&format!("enc{l}.ff1"), d, arch.d_ff),
            ff2: b.affine(&format!("enc{l}.ff2"), arch.d_ff, d),
            ln2: b.norm(&format!("enc{l}.ln2"), d),
        })
        .collect();
    let out1 = b.affine("out.fc1", d, arch.out_hidden);
    let out2 = b.affine("out.fc2", arch.out_hidden, arch.gamma);
    if let Init::Xavier { gain, .. } = &mut b.specs[out2.w].2 {
        *gain = OUTPUT_GAIN;
    }
    let layout = Layout {
        cost_conv,
        cost_proj,
        rel_conv,
        rel_proj,
        p1,
        p2,
        enc,
        out1,
        out2,
    };
    (layout, b.specs)
}

/// Network parameters as a flat list of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub arch: Arch,
    pub tensors: Vec<Tensor>,
}

/// Gradient (or any other direction) with the same layout as [`Params`].
pub type Grads = Vec<Vec<f64>>;

pub fn init_params(arch: &Arch, seed: u64) -> Result<Params> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, specs) = build_layout(arch);
    let tensors = specs
        .into_iter()
        .map(|(name, shape, init)| {
            let len = shape.iter().product();
            let data = match init {
                Init::Xavier {
                    fan_in,
                    fan_out,
                    gain,
                } => {
                    let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
                }
                Init::XavierAbs { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..len).map(|_| rng.random_range(0.0..=bound)).collect()
                }
                Init::Zeros => vec![0.0; len],
                Init::Ones => vec![1.0; len],
                Init::Const(v) => vec![v; len],
            };
            Tensor { name, shape, data }
        })
        .collect();
    Ok(Params {
        arch: arch.clone(),
        tensors,
    })
}

impl Params {
    pub(crate) fn layout(&self) -> Layout {
        build_layout(&self.arch).0
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// `theta += scale * dir`.
    pub fn axpy(&mut self, scale: f64, dir: &Grads) {
        for (t, g) in self.tensors.iter_mut().zip(dir) {
            for (x, d) in t.data.iter_mut().zip(g) {
                *x += scale * d;
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.num_scalars() * 8 + 4096);
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let arch = serde_json::to_vec(&self.arch)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(arch.len() as u32).to_le_bytes())?;
        w.write_all(&arch)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u16).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&[t.shape.len() as u8])?;
            for &d in &t.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Params> {
        let corrupt = |m: &str| Error::Config(format!("parameter file: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let mut arch = vec![0u8; read_u32(r)? as usize];
        r.read_exact(&mut arch)?;
        let arch: Arch = serde_json::from_slice(&arch)?;
        arch.validate()?;
        let (_, specs) = build_layout(&arch);
        let count = read_u32(r)? as usize;
        if count != specs.len() {
            return Err(corrupt(&format!("expected {} tensors, found {count}", specs.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape, _) in specs {
            let mut len = [0u8; 2];
            r.read_exact(&mut len)?;
            let mut got = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut got)?;
            if got != name.as_bytes() {
                return Err(corrupt(&format!("expected tensor {name}")));
            }
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim)?;
            let dims = (0..ndim[0])
                .map(|_| read_u32(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims != shape {
                return Err(corrupt(&format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
            }
            let mut data = vec![0f64; shape.iter().product()];
            let mut buf = [0u8; 8];
            for x in &mut data {
                r.read_exact(&mut buf)?;
                *x = f64::from_le_bytes(buf);
            }
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Params { arch, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Params> {
        let bytes = std::fs::read(path)?;
        Params::read_from(&mut bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn grads_dot(a: &Grads, b: &Grads) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

pub fn grads_add(acc: &mut Grads, g: &Grads) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}
