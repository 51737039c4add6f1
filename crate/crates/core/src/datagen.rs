//! Training-set factory: exact labels for micro instances, carried to larger
//! instances by time scaling and enriched by tightening due and release dates
//! around the known optimum.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    evaluate_schedule, sample_instance, starting_costs, Agent, Instance, Job, ObjectiveKind,
    ProblemCase, Schedule, DEFAULT_MICRO_P_MAX,
};
use crate::oracle::{subset_dp, tol, DEFAULT_DP_CAP};

/// Scales every time quantity by `alpha`. Returns the scaled instance, the
/// scaled optimum and the cost multiplier `beta`.
pub fn scale_instance(
    small: &Instance,
    s_opt: &Schedule,
    alpha: usize,
) -> Result<(Instance, Schedule, f64)> {
    if alpha == 0 {
        return Err(Error::Config("scale factor must be >= 1".into()));
    }
    let a = alpha as f64;
    let power = small.kind() == ObjectiveKind::Power;
    let jobs: Vec<Job> = small
        .jobs()
        .iter()
        .map(|job| {
            let mut out = job.clone();
            out.p *= alpha;
            out.r *= alpha;
            out.d = job.d.map(|d| d * alpha);
            if power {
                out.w = job.w / a.powf(job.a.unwrap_or(1.0));
            }
            out
        })
        .collect();
    let large = Instance::new(jobs, small.objective(), alpha * small.horizon())?;
    let beta = if power { 1.0 } else { a };

    let c_small = starting_costs(small);
    let c_large = starting_costs(&large);
    for j in 0..small.n() {
        for t in 0..small.horizon() {
            let (lhs, rhs) = (c_large.get(j, alpha * t), beta * c_small.get(j, t));
            if (lhs - rhs).abs() > tol(lhs, rhs) {
                return Err(Error::Consistency(format!(
                    "scaled cost of job {j} at slot {t}: {lhs} != {beta} * {}",
                    c_small.get(j, t)
                )));
            }
        }
    }
    let starts = s_opt.starts.iter().map(|&s| s * alpha).collect();
    Ok((large, Schedule::new(starts), beta))
}

/// Outcome of [`augment_instance`].
#[derive(Debug, Clone)]
pub struct Augmented {
    pub instance: Instance,
    pub due_changes: usize,
    pub release_changes: usize,
}

impl Augmented {
    pub fn changed(&self) -> bool {
        self.due_changes + self.release_changes > 0
    }
}

/// Tightens due dates of half the on-time jobs and raises release dates of
/// half the jobs that start after their release, keeping `s_opt` optimal.
/// Raised releases stay within `horizon - P`, so the horizon is unchanged.
pub fn augment_instance<R: Rng + ?Sized>(
    inst: &Instance,
    s_opt: &Schedule,
    rng: &mut R,
) -> Result<Augmented> {
    s_opt.check(inst)?;
    let mut jobs = inst.jobs().to_vec();
    let starts = &s_opt.starts;

    let has_due = |job: &Job| match inst.kind() {
        ObjectiveKind::Wt | ObjectiveKind::Bicriteria => true,
        ObjectiveKind::TwoAgent => job.agent == Some(Agent::A),
        _ => false,
    };
    let on_time: Vec<usize> = (0..jobs.len())
        .filter(|&j| has_due(&jobs[j]) && starts[j] + jobs[j].p < jobs[j].d.unwrap_or(0))
        .collect();
    let mut picked: Vec<usize> = sample(rng, on_time.len(), on_time.len() / 2)
        .iter()
        .map(|i| on_time[i])
        .collect();
    picked.sort_unstable();
    for &j in &picked {
        let lo = starts[j] + jobs[j].p;
        let hi = jobs[j].d.expect("on-time jobs have due dates") - 1;
        jobs[j].d = Some(rng.random_range(lo..=hi));
    }
    let due_changes = picked.len();

    let mut release_changes = 0;
    if inst.has_releases() {
        let r_cap = inst.horizon() - inst.total_processing();
        let eligible: Vec<usize> = (0..jobs.len())
            .filter(|&j| jobs[j].r < starts[j].min(r_cap))
            .collect();
        let mut picked: Vec<usize> = sample(rng, eligible.len(), eligible.len() / 2)
            .iter()
            .map(|i| eligible[i])
            .collect();
        picked.sort_unstable();
        for &j in &picked {
            let hi = starts[j].min(r_cap);
            jobs[j].r = rng.random_range(jobs[j].r + 1..=hi);
        }
        release_changes = picked.len();
    }

    Ok(Augmented {
        instance: Instance::new(jobs, inst.objective(), inst.horizon())?,
        due_changes,
        release_changes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub index: u64,
    pub alpha: usize,
    pub augmented: bool,
    /// False when augmentation found nothing eligible and emitted a copy.
    #[serde(default = "default_true")]
    pub modified: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub instance: Instance,
    pub labels: Vec<usize>,
    pub starts: Vec<usize>,
    pub value: f64,
    pub provenance: Provenance,
}

impl TrainingExample {
    fn new(instance: Instance, starts: Schedule, eta: usize, provenance: Provenance) -> Result<Self> {
        let value = evaluate_schedule(&instance, &starts)?;
        Ok(TrainingExample {
            labels: starts.starts.iter().map(|&s| s / eta).collect(),
            starts: starts.starts,
            instance,
            value,
            provenance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataGenConfig {
    pub case: u8,
    /// Number of base micro instances; four examples are emitted per base.
    pub count: usize,
    pub n_lo: usize,
    pub n_hi: usize,
    pub seed: u64,
    pub alpha_max: usize,
    pub eta: usize,
    pub gamma: usize,
    pub max_horizon: usize,
    pub micro_p_max: usize,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            case: 2,
            count: 100,
            n_lo: 12,
            n_hi: 16,
            seed: 0,
            alpha_max: 4,
            eta: 8,
            gamma: 64,
            max_horizon: 512,
            micro_p_max: DEFAULT_MICRO_P_MAX,
        }
    }
}

impl DataGenConfig {
    pub fn validate(&self) -> Result<()> {
        ProblemCase::get(self.case)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.count == 0 {
            return bad("count must be >= 1");
        }
        if self.n_lo == 0 || self.n_lo > self.n_hi {
            return bad("size range must satisfy 1 <= n_lo <= n_hi");
        }
        if self.n_hi > DEFAULT_DP_CAP {
            return Err(Error::Config(format!(
                "n_hi = {} exceeds the exact oracle's limit of {DEFAULT_DP_CAP} jobs",
                self.n_hi
            )));
        }
        if self.alpha_max == 0 || self.eta == 0 || self.gamma == 0 || self.micro_p_max == 0 {
            return bad("alpha_max, eta, gamma and micro_p_max must be >= 1");
        }
        if self.eta * self.gamma < self.max_horizon {
            return bad("eta * gamma must cover max_horizon");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub examples: usize,
    pub base_instances: usize,
    pub unmodified_augmentations: usize,
    pub max_label: usize,
    pub max_horizon: usize,
}

fn base_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Produces the four examples derived from base instance `index`.
pub fn examples_for_base(cfg: &DataGenConfig, index: u64) -> Result<Vec<TrainingExample>> {
    let mut rng = base_rng(cfg.seed, index);
    let n = rng.random_range(cfg.n_lo..=cfg.n_hi);
    let micro = sample_instance(cfg.case, n, cfg.micro_p_max, &mut rng)?;
    let alphas = [cfg.alpha_max, rng.random_range(1..=cfg.alpha_max.saturating_sub(1).max(1))];

    let mut solved: Option<(Instance, Schedule)> = None;
    let mut out = Vec::with_capacity(4);
    for alpha in alphas {
        let (small, s_opt) = if micro.kind() == ObjectiveKind::Power {
            let jobs: Vec<Job> = micro
                .jobs()
                .iter()
                .map(|j| {
                    let mut j = j.clone();
                    j.w *= (alpha as f64).powf(j.a.unwrap_or(1.0));
                    j
                })
                .collect();
            let small = Instance::new(jobs, micro.objective(), micro.horizon())?;
            let (s, _) = subset_dp(&small, DEFAULT_DP_CAP)?;
            (small, s)
        } else {
            if solved.is_none() {
                let (s, _) = subset_dp(&micro, DEFAULT_DP_CAP)?;
                solved = Some((micro.clone(), s));
            }
            solved.clone().expect("solved above")
        };
        let (large, s_large, _) = scale_instance(&small, &s_opt, alpha)?;
        let prov = |augmented, modified| Provenance {
            seed: cfg.seed,
            index,
            alpha,
            augmented,
            modified,
        };
        let aug = augment_instance(&large, &s_large, &mut rng)?;
        let modified = aug.changed();
        out.push(TrainingExample::new(large, s_large.clone(), cfg.eta, prov(false, true))?);
        out.push(TrainingExample::new(aug.instance, s_large, cfg.eta, prov(true, modified))?);
    }
    for ex in &out {
        if ex.instance.horizon() > cfg.max_horizon {
            return Err(Error::Capacity(format!(
                "generated horizon {} exceeds {}; lower n_hi or alpha_max",
                ex.instance.horizon(),
                cfg.max_horizon
            )));
        }
        if let Some(&l) = ex.labels.iter().find(|&&l| l >= cfg.gamma) {
            return Err(Error::Consistency(format!("label {l} outside {} windows", cfg.gamma)));
        }
    }
    Ok(out)
}

pub fn generate_examples(cfg: &DataGenConfig) -> Result<Vec<TrainingExample>> {
    cfg.validate()?;
    let batches: Vec<Vec<TrainingExample>> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| examples_for_base(cfg, i))
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Generates the dataset and writes it as JSON lines.
pub fn build_training_set(cfg: &DataGenConfig, out_path: &Path) -> Result<DatasetSummary> {
    let examples = generate_examples(cfg)?;
    write_dataset(&examples, out_path)?;
    Ok(DatasetSummary {
        examples: examples.len(),
        base_instances: cfg.count,
        unmodified_augmentations: examples
            .iter()
            .filter(|e| e.provenance.augmented && !e.provenance.modified)
            .count(),
        max_label: examples.iter().flat_map(|e| e.labels.iter().copied()).max().unwrap_or(0),
        max_horizon: examples.iter().map(|e| e.instance.horizon()).max().unwrap_or(0),
    })
}

pub fn write_dataset(examples: &[TrainingExample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<TrainingExample>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainingExample = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if ex.labels.len() != ex.instance.n() || ex.starts.len() != ex.instance.n() {
            return Err(Error::Config(format!(
                "{}:{}: label/start count does not match job count",
                path.display(),
                i + 1
            )));
        }
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectiveSpec, Schedule};
    use crate::oracle::exact_enumerate;
    use proptest::prelude::*;

    fn wc(p: &[usize], w: &[f64]) -> Instance {
        let jobs = p.iter().zip(w).map(|(&p, &w)| Job::new(p, 0, w)).collect();
        Instance::with_min_horizon(jobs, ObjectiveSpec::simple(ObjectiveKind::Wc)).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let inst = wc(&[1, 2, 3], &[3.0, 2.0, 1.0]);
        let (s, v) = subset_dp(&inst, 16).unwrap();
        assert_eq!(v, 15.0);
        let (large, sl, beta) = scale_instance(&inst, &s, 2).unwrap();
        assert_eq!(beta, 2.0);
        assert_eq!(sl.starts, vec![0, 2, 6]);
        assert_eq!(evaluate_schedule(&large, &sl).unwrap(), 30.0);
        assert_eq!(exact_enumerate(&large, 9).unwrap().1, 30.0);

        let (same, s1, b1) = scale_instance(&inst, &s, 1).unwrap();
        assert_eq!((same, s1, b1), (inst, s, 1.0));

        let pow = Instance::with_min_horizon(
            vec![Job::new(1, 0, 8.0).with_exponent(1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Power),
        )
        .unwrap();
        let (large, _, beta) = scale_instance(&pow, &Schedule::new(vec![0]), 2).unwrap();
        assert_eq!((large.job(0).w, beta), (4.0, 1.0));
    }

    #[test]
    fn augmentation_examples() {
        let jobs = vec![Job::new(2, 0, 1.0).with_due(9), Job::new(4, 0, 1.0).with_due(30)];
        let inst =
            Instance::with_min_horizon(jobs, ObjectiveSpec::simple(ObjectiveKind::Wt)).unwrap();
        let s = Schedule::new(vec![4, 0]);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let aug = augment_instance(&inst, &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(aug.due_changes, 1);
            let d0 = aug.instance.job(0).d.unwrap();
            if d0 != 9 {
                seen.insert(d0);
            }
        }
        assert!(seen.iter().all(|d| (6..=8).contains(d)));
        assert_eq!(seen.len(), 3);

        let inst = wc(&[2, 3], &[1.0, 1.0]);
        let aug = augment_instance(&inst, &Schedule::new(vec![0, 2]), &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert!(!aug.changed());
        assert_eq!(aug.instance, inst);
    }

    #[test]
    fn release_at_start_is_left_alone() {
        let jobs = vec![Job::new(2, 3, 1.0), Job::new(2, 0, 1.0)];
        let inst =
            Instance::with_min_horizon(jobs, ObjectiveSpec::simple(ObjectiveKind::Wc)).unwrap();
        let s = Schedule::new(vec![3, 0]);
        for seed in 0..20 {
            let aug = augment_instance(&inst, &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(aug.instance.job(0).r, 3);
        }
    }

    #[test]
    fn pipeline_counts_and_determinism() {
        let cfg = DataGenConfig {
            case: 11,
            count: 5,
            n_lo: 5,
            n_hi: 7,
            seed: 3,
            ..DataGenConfig::default()
        };
        let a = generate_examples(&cfg).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|e| e.labels.iter().all(|&l| l < cfg.gamma)));
        for e in &a {
            let v = evaluate_schedule(&e.instance, &Schedule::new(e.starts.clone())).unwrap();
            assert_eq!(v, e.value);
        }
        let b = generate_examples(&cfg).unwrap();
        assert_eq!(a, b);

        let dir = std::env::temp_dir().join(format!("umsched-dg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("d.jsonl");
        build_training_set(&cfg, &p).unwrap();
        let first = std::fs::read(&p).unwrap();
        build_training_set(&cfg, &p).unwrap();
        assert_eq!(first, std::fs::read(&p).unwrap());
        assert_eq!(read_dataset(&p).unwrap(), a);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn oversize_request_is_refused_early() {
        let cfg = DataGenConfig {
            n_hi: 20,
            ..DataGenConfig::default()
        };
        assert!(matches!(generate_examples(&cfg), Err(Error::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn scaling_preserves_optimality(case in 1u8..=17, n in 1usize..=6, alpha in 2usize..=4, seed in any::<u64>()) {
            let inst = sample_instance(case, n, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (s, v) = subset_dp(&inst, 16).unwrap();
            let (large, sl, beta) = scale_instance(&inst, &s, alpha).unwrap();
            let (_, vl) = subset_dp(&large, 16).unwrap();
            prop_assert!((vl - beta * v).abs() <= tol(vl, beta * v));
            let ve = evaluate_schedule(&large, &sl).unwrap();
            prop_assert!((ve - vl).abs() <= tol(ve, vl));
        }

        #[test]
        fn augmentation_preserves_optimality(case in 1u8..=17, n in 1usize..=7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = sample_instance(case, n, 5, &mut rng).unwrap();
            let (s, v) = subset_dp(&inst, 16).unwrap();
            let aug = augment_instance(&inst, &s, &mut rng).unwrap();
            prop_assert!(evaluate_schedule(&aug.instance, &s).is_ok());
            let (_, va) = subset_dp(&aug.instance, 16).unwrap();
            prop_assert!((va - v).abs() <= tol(va, v));
        }
    }
}
