use rand::seq::index::sample;
use rand::Rng;

use super::{Agent, Instance, Job, ObjectiveKind, ObjectiveSpec};
use crate::error::{Error, Result};

/// Upper bound of `p` for micro instances.
pub const DEFAULT_MICRO_P_MAX: usize = 5;
/// Upper bound of `p` for generic instances sized for the network horizon.
pub const GENERIC_P_MAX: usize = 20;

const XI_R: f64 = 0.5;

/// Parameters of one numbered problem case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemCase {
    pub id: u8,
    pub kind: ObjectiveKind,
    pub xi_d: Option<f64>,
    pub releases: bool,
    pub rho: Option<f64>,
    pub agent_a_share: Option<f64>,
}

impl ProblemCase {
    pub fn get(id: u8) -> Result<Self> {
        use ObjectiveKind::*;
        let c = |kind, xi_d, releases, rho, share| ProblemCase {
            id,
            kind,
            xi_d,
            releases,
            rho,
            agent_a_share: share,
        };
        Ok(match id {
            1 => c(Wt, Some(0.2), false, None, None),
            2 => c(Wt, Some(0.5), false, None, None),
            3 => c(Wt, Some(0.8), false, None, None),
            4 => c(Bicriteria, Some(0.5), false, Some(0.3), None),
            5 => c(Bicriteria, Some(0.5), false, Some(0.7), None),
            6 => c(TwoAgent, Some(0.5), false, Some(0.5), Some(0.3)),
            7 => c(TwoAgent, Some(0.5), false, Some(0.5), Some(0.7)),
            8 => c(Power, None, false, None, None),
            9 => c(Wc, None, true, None, None),
            10 => c(Wt, Some(0.2), true, None, None),
            11 => c(Wt, Some(0.5), true, None, None),
            12 => c(Wt, Some(0.8), true, None, None),
            13 => c(TwoAgent, Some(0.5), true, Some(0.5), Some(0.3)),
            14 => c(TwoAgent, Some(0.5), true, Some(0.5), Some(0.7)),
            15 => c(Bicriteria, Some(0.5), true, Some(0.3), None),
            16 => c(Bicriteria, Some(0.5), true, Some(0.7), None),
            17 => c(Power, None, true, None, None),
            _ => return Err(Error::Config(format!("unknown problem case {id}"))),
        })
    }

    pub fn all() -> impl Iterator<Item = ProblemCase> {
        (1..=17).map(|id| ProblemCase::get(id).expect("ids 1..=17 are registered"))
    }

    pub fn objective(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            kind: self.kind,
            rho: self.rho,
        }
    }
}

fn upper(frac: f64, total: usize) -> usize {
    ((frac * total as f64).floor() as usize).max(1)
}

/// Draws an instance of the given case with `p ~ U{1, p_max}` and the tightest
/// admissible horizon.
pub fn sample_instance<R: Rng + ?Sized>(
    case: u8,
    n: usize,
    p_max: usize,
    rng: &mut R,
) -> Result<Instance> {
    let case = ProblemCase::get(case)?;
    if n == 0 {
        return Err(Error::Config("job count must be >= 1".into()));
    }
    if p_max == 0 {
        return Err(Error::Config("p_max must be >= 1".into()));
    }
    let p: Vec<usize> = (0..n).map(|_| rng.random_range(1..=p_max)).collect();
    let total: usize = p.iter().sum();

    let mut is_a = vec![false; n];
    if let Some(share) = case.agent_a_share {
        let n_a = ((share * n as f64).round() as usize).min(n);
        for j in sample(rng, n, n_a).iter() {
            is_a[j] = true;
        }
    }

    let mut jobs = Vec::with_capacity(n);
    for (j, &pj) in p.iter().enumerate() {
        let r = if case.releases {
            rng.random_range(1..=upper(XI_R, total))
        } else {
            0
        };
        let w = rng.random_range(1..=100u32) as f64;
        let mut job = Job::new(pj, r, w);
        match case.kind {
            ObjectiveKind::Wt => {
                job = job.with_due(rng.random_range(1..=upper(case.xi_d.unwrap(), total)));
            }
            ObjectiveKind::Wc => {}
            ObjectiveKind::Power => job = job.with_exponent(rng.random_range(0.5..=1.5)),
            ObjectiveKind::Bicriteria => {
                let d = rng.random_range(1..=upper(case.xi_d.unwrap(), total));
                let w2 = rng.random_range(1..=100u32) as f64;
                job = job.with_due(d).with_w2(w2);
            }
            ObjectiveKind::TwoAgent => {
                if is_a[j] {
                    let d = rng.random_range(1..=upper(case.xi_d.unwrap(), total));
                    job = job.with_due(d).with_agent(Agent::A);
                } else {
                    job = job.with_agent(Agent::B);
                }
            }
        }
        jobs.push(job);
    }
    Instance::with_min_horizon(jobs, case.objective())
}
