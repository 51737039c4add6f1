//! Supervised training on window labels.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{read_dataset, TrainingExample};
use crate::decode::greedy_decode;
use crate::error::{Error, Result};
use crate::model::{objective_value, Instance};
use crate::nn::{backward, encode_input, forward, forward_cached, grads_add, init_params, Arch, EncodedInput, Grads, Params};
use crate::tiform::lp_lower_bound;

const LOG_FLOOR: f64 = 1e-12;

pub fn cross_entropy_loss(o: &ArrayView2<f64>, labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    -labels
        .iter()
        .enumerate()
        .map(|(j, &l)| o[[j, l]].max(LOG_FLOOR).ln())
        .sum::<f64>()
        / n
}

/// Gradient of [`cross_entropy_loss`] with respect to `o`.
pub fn cross_entropy_grad(o: &ArrayView2<f64>, labels: &[usize]) -> Array2<f64> {
    let n = labels.len() as f64;
    let mut g = Array2::zeros(o.raw_dim());
    for (j, &l) in labels.iter().enumerate() {
        let v = o[[j, l]];
        if v > LOG_FLOOR {
            g[[j, l]] = -1.0 / (n * v);
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            lr0: 5e-5,
            lr_decay: 0.9,
            patience_epochs: 2,
            max_epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience_epochs == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience_epochs and max_epochs must be positive".into()));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::Config("lr0 and lr_decay must be positive".into()));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(params: &Params) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let data = &mut params.tensors[i].data;
            for (k, &gk) in g.iter().enumerate() {
                let m = &mut self.m[i][k];
                let v = &mut self.v[i][k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gk;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gk * gk;
                data[k] -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Tracks validation gaps; strict improvement resets the patience counter.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_index: usize,
    seen: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_index: 0,
            seen: 0,
            stale: 0,
        }
    }

    /// Records one observation; returns true when training should stop.
    pub fn observe(&mut self, gap: f64) -> bool {
        if gap < self.best {
            self.best = gap;
            self.best_index = self.seen;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.seen += 1;
        self.stale >= self.patience
    }

    pub fn best_index(&self) -> usize {
        self.best_index
    }

    pub fn improved_last(&self) -> bool {
        self.seen > 0 && self.best_index == self.seen - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub value: f64,
    /// Set when the lower bound vanishes and `value` is the raw objective.
    pub absolute: bool,
}

pub fn gap_percent(objective: f64, lower_bound: f64) -> Gap {
    if lower_bound <= 1e-9 {
        Gap {
            value: objective,
            absolute: true,
        }
    } else {
        Gap {
            value: 100.0 * (objective - lower_bound) / lower_bound,
            absolute: false,
        }
    }
}

/// Mean over relative gaps; absolute-mode entries are averaged separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSummary {
    pub mean_gap: f64,
    pub gaps: Vec<Gap>,
    pub flagged: usize,
}

impl GapSummary {
    pub fn from_gaps(gaps: Vec<Gap>) -> Self {
        let rel: Vec<f64> = gaps.iter().filter(|g| !g.absolute).map(|g| g.value).collect();
        let flagged = gaps.len() - rel.len();
        let mean_gap = if rel.is_empty() {
            gaps.iter().map(|g| g.value).sum::<f64>() / gaps.len().max(1) as f64
        } else {
            rel.iter().sum::<f64>() / rel.len() as f64
        };
        GapSummary { mean_gap, gaps, flagged }
    }
}

/// LP lower bounds keyed by the instance's canonical JSON.
#[derive(Default)]
pub struct BoundCache {
    map: Mutex<HashMap<String, f64>>,
}

impl BoundCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lower_bound(&self, instance: &Instance) -> Result<f64> {
        let key = serde_json::to_string(instance)?;
        if let Some(&v) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let lb = lp_lower_bound(instance)?.0;
        self.map.lock().expect("cache lock").insert(key, lb);
        Ok(lb)
    }
}

pub fn validate_gap(params: &Params, instances: &[Instance], cache: &BoundCache) -> Result<GapSummary> {
    let gaps = instances
        .par_iter()
        .map(|inst| {
            let enc = encode_input(inst, &params.arch)?;
            let o = forward(params, &enc)?;
            let s = greedy_decode(&o.view(), inst);
            Ok(gap_percent(objective_value(inst, &s.starts), cache.lower_bound(inst)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapSummary::from_gaps(gaps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_gap_percent: f64,
    pub lr: f64,
}

pub fn write_history<W: Write>(rows: &[HistoryRow], out: &mut W) -> Result<()> {
    writeln!(out, "epoch,mean_loss,val_gap_percent,lr")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.epoch, r.mean_loss, r.val_gap_percent, r.lr)?;
    }
    Ok(())
}

struct Prepared<'a> {
    enc: EncodedInput,
    labels: &'a [usize],
}

fn prepare<'a>(examples: &'a [TrainingExample], arch: &Arch) -> Result<Vec<Prepared<'a>>> {
    let eta = arch.eta();
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let consistent = ex.labels.len() == ex.instance.n()
                && ex.labels.iter().zip(&ex.starts).all(|(&l, &s)| l < arch.gamma && l == s / eta);
            if !consistent {
                return Err(Error::Config(format!(
                    "example {i} labels do not match the architecture (gamma {}, window {eta})",
                    arch.gamma
                )));
            }
            let enc = encode_input(&ex.instance, arch).map_err(|e| match e {
                Error::Capacity(m) => Error::Config(format!("example {i}: {m}")),
                other => other,
            })?;
            Ok(Prepared { enc, labels: &ex.labels })
        })
        .collect()
}

fn example_grad(params: &Params, ex: &Prepared) -> Result<(f64, Grads)> {
    let fwd = forward_cached(params, &ex.enc)?;
    let loss = cross_entropy_loss(&fwd.o.view(), ex.labels);
    let d_o = cross_entropy_grad(&fwd.o.view(), ex.labels);
    Ok((loss, backward(params, &fwd, &ex.enc, &d_o.view())))
}

fn mean_loss(params: &Params, data: &[Prepared]) -> Result<f64> {
    let losses = data
        .par_iter()
        .map(|ex| Ok(cross_entropy_loss(&forward(params, &ex.enc)?.view(), ex.labels)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Minibatch Adam from `init` (or a fresh initialization seeded by
/// `config.seed`). Returns the parameters of the best validation epoch,
/// epoch 0 included, and one history row per evaluated epoch.
pub fn train_supervised(
    examples: &[TrainingExample],
    val: &[Instance],
    arch: &Arch,
    config: &TrainConfig,
    init: Option<Params>,
) -> Result<(Params, Vec<HistoryRow>)> {
    config.validate()?;
    arch.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let mut params = match init {
        Some(p) if &p.arch != arch => {
            return Err(Error::Config("initial parameters were built for another architecture".into()))
        }
        Some(p) => p,
        None => init_params(arch, config.seed)?,
    };
    let data = prepare(examples, arch)?;
    let cache = BoundCache::new();
    let mut adam = Adam::new(&params);
    let mut stopper = EarlyStopper::new(config.patience_epochs);
    let mut best = params.clone();
    let mut history = Vec::new();

    let gap0 = validate_gap(&params, val, &cache)?.mean_gap;
    stopper.observe(gap0);
    history.push(HistoryRow {
        epoch: 0,
        mean_loss: mean_loss(&params, &data)?,
        val_gap_percent: gap0,
        lr: 0.0,
    });

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.max_epochs {
        let lr = config.lr(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let parts = batch
                .par_iter()
                .map(|&i| example_grad(&params, &data[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut acc = params.zeros_like();
            for (loss, g) in &parts {
                loss_sum += loss;
                grads_add(&mut acc, g);
            }
            let scale = 1.0 / batch.len() as f64;
            for t in acc.iter_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &acc, lr);
        }
        let gap = validate_gap(&params, val, &cache)?.mean_gap;
        history.push(HistoryRow {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            val_gap_percent: gap,
            lr,
        });
        let stop = stopper.observe(gap);
        if stopper.improved_last() {
            best = params.clone();
        }
        if stop {
            break;
        }
    }
    Ok((best, history))
}

/// [`train_supervised`] on a dataset file.
pub fn train_from_file(
    dataset: &Path,
    val: &[Instance],
    arch: &Arch,
    config: &TrainConfig,
    init: Option<Params>,
) -> Result<(Params, Vec<HistoryRow>)> {
    train_supervised(&read_dataset(dataset)?, val, arch, config, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_examples, DataGenConfig};
    use crate::model::{Job, ObjectiveKind, ObjectiveSpec};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn loss_examples() {
        let l = cross_entropy_loss(&array![[0.5, 0.5]].view(), &[0]);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert_eq!(cross_entropy_loss(&array![[0.0, 1.0], [1.0, 0.0]].view(), &[1, 0]), 0.0);
        let l = cross_entropy_loss(&array![[0.9, 0.1], [0.25, 0.75]].view(), &[0, 1]);
        assert!((l - 0.196521).abs() < 1e-6);
        assert!(cross_entropy_loss(&array![[0.0, 1.0]].view(), &[0]).is_finite());
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap_percent(105.0, 100.0), Gap { value: 5.0, absolute: false });
        assert_eq!(gap_percent(100.0, 100.0).value, 0.0);
        assert!(gap_percent(0.0, 0.0).absolute);
        let s = GapSummary::from_gaps(vec![gap_percent(1.0, 0.0), gap_percent(110.0, 100.0)]);
        assert_eq!((s.mean_gap, s.flagged), (10.0, 1));
    }

    #[test]
    fn early_stopping_examples() {
        let mut s = EarlyStopper::new(2);
        assert!(!s.observe(5.0));
        assert!(!s.observe(5.0));
        assert!(s.observe(5.0));

        let mut s = EarlyStopper::new(2);
        for g in [8.0, 4.0, 6.0] {
            assert!(!s.observe(g));
        }
        assert!(s.observe(7.0));
        assert_eq!(s.best_index(), 1);
    }

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.lr(1), 5e-5);
        assert!((c.lr(3) - 5e-5 * 0.81).abs() < 1e-18);
        assert!(TrainConfig { patience_epochs: 0, ..c }.validate().is_err());
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let arch = Arch::tiny();
        let mut p = init_params(&arch, 0).unwrap();
        let before = p.tensors[0].data[0];
        let mut g = p.zeros_like();
        g[0][0] = 3.0;
        Adam::new(&p).step(&mut p, &g, 0.01);
        assert!((p.tensors[0].data[0] - (before - 0.01)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 1..6)) {
            let n = rows.len();
            let o = Array2::from_shape_fn((n, 3), |(j, k)| rows[j][k] / rows[j].iter().sum::<f64>());
            let labels: Vec<usize> = (0..n).map(|j| j % 3).collect();
            prop_assert!(cross_entropy_loss(&o.view(), &labels) >= 0.0);
        }
    }

    fn toy_setup() -> (Vec<TrainingExample>, Vec<Instance>, Arch) {
        let arch = Arch::tiny();
        let cfg = DataGenConfig {
            case: 2,
            count: 4,
            n_lo: 3,
            n_hi: 4,
            seed: 3,
            alpha_max: 2,
            eta: arch.eta(),
            gamma: arch.gamma,
            max_horizon: arch.t_arch,
            micro_p_max: 3,
        };
        let examples = generate_examples(&cfg).unwrap();
        let val = examples.iter().step_by(4).map(|e| e.instance.clone()).collect();
        (examples, val, arch)
    }

    #[test]
    fn toy_loss_decreases() {
        let (examples, val, arch) = toy_setup();
        assert_eq!(examples.len(), 16);
        let cfg = TrainConfig {
            lr0: 1e-2,
            max_epochs: 2,
            patience_epochs: 5,
            ..TrainConfig::default()
        };
        let (_, hist) = train_supervised(&examples, &val, &arch, &cfg, None).unwrap();
        assert_eq!(hist.len(), 3);
        assert!(hist[2].mean_loss < hist[1].mean_loss);
        let (_, again) = train_supervised(&examples, &val, &arch, &cfg, None).unwrap();
        assert_eq!(hist, again);
    }

    #[test]
    fn best_epoch_never_worse_than_start() {
        let (examples, val, arch) = toy_setup();
        let cfg = TrainConfig {
            lr0: 5e-2,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let (best, hist) = train_supervised(&examples, &val, &arch, &cfg, None).unwrap();
        let gap = validate_gap(&best, &val, &BoundCache::new()).unwrap().mean_gap;
        assert!(gap <= hist[0].val_gap_percent);
        let min = hist.iter().map(|h| h.val_gap_percent).fold(f64::INFINITY, f64::min);
        assert_eq!(gap, min);
    }

    #[test]
    fn loss_gradient_through_the_network() {
        use crate::model::sample_instance;
        use crate::nn::{check_gradient, sample_coords};
        let arch = Arch::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..6 {
            let params = init_params(&arch, seed).unwrap();
            let inst = sample_instance(1 + seed as u8, 4, 2, &mut rng).unwrap();
            let enc = encode_input(&inst, &arch).unwrap();
            let labels: Vec<usize> = (0..4).map(|j| (j + seed as usize) % arch.gamma).collect();
            let fwd = forward_cached(&params, &enc).unwrap();
            let d_o = cross_entropy_grad(&fwd.o.view(), &labels);
            let g = backward(&params, &fwd, &enc, &d_o.view());
            let f = |p: &Params| {
                let fw = forward_cached(p, &enc).unwrap();
                (cross_entropy_loss(&fw.o.view(), &labels), fw.relu_signature())
            };
            let coords = sample_coords(&params, 3, &mut rng);
            let r = check_gradient(&params, &g, f, &coords, 1e-5);
            assert!(r.checked > coords.len() / 2);
            assert!(r.flat || r.rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn architecture_mismatch_is_a_config_error() {
        let (examples, val, arch) = toy_setup();
        let other = Arch { gamma: 2, ..arch.clone() };
        let err = train_supervised(&examples, &val, &other, &TrainConfig::default(), None);
        assert!(matches!(err, Err(Error::Config(_))));

        let big = Instance::with_min_horizon(
            vec![Job::new(30, 0, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wc),
        )
        .unwrap();
        let ex = TrainingExample { instance: big, labels: vec![0], starts: vec![0], ..examples[0].clone() };
        let err = train_supervised(&[ex], &val, &arch, &TrainConfig::default(), None);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
