//! Instances, objectives, schedules and the time-indexed starting-cost view.
//!
//! Every objective handled by the crate is a sum of per-job costs `z_j(C_j)`,
//! each non-decreasing in the completion time. The starting cost of job `j`
//! at slot `t` is `z_j(t + p_j)`; downstream modules only ever see that
//! matrix plus the processing and release times.

mod cases;
mod repr;

pub use cases::{sample_instance, ProblemCase, DEFAULT_MICRO_P_MAX, GENERIC_P_MAX};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective families in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectiveKind {
    /// Total weighted tardiness.
    Wt,
    /// Total weighted completion time.
    Wc,
    /// Weighted power of completion time, `w C^a`.
    Power,
    /// `rho * w1 * T + (1 - rho) * w2 * C`.
    Bicriteria,
    /// Agent A pays `rho * w * T`, agent B pays `(1 - rho) * w * C`.
    TwoAgent,
}

impl ObjectiveKind {
    pub fn uses_rho(self) -> bool {
        matches!(self, ObjectiveKind::Bicriteria | ObjectiveKind::TwoAgent)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Wt => "WT",
            ObjectiveKind::Wc => "WC",
            ObjectiveKind::Power => "POWER",
            ObjectiveKind::Bicriteria => "BICRITERIA",
            ObjectiveKind::TwoAgent => "TWO_AGENT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "repr::opt_decimal"
    )]
    pub rho: Option<f64>,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, rho: Option<f64>) -> Result<Self> {
        let spec = ObjectiveSpec { kind, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn simple(kind: ObjectiveKind) -> Self {
        debug_assert!(!kind.uses_rho());
        ObjectiveSpec { kind, rho: None }
    }

    fn validate(&self) -> Result<()> {
        match (self.kind.uses_rho(), self.rho) {
            (true, Some(rho)) if rho > 0.0 && rho < 1.0 => Ok(()),
            (true, Some(rho)) => Err(Error::Config(format!("rho must lie in (0,1), got {rho}"))),
            (true, None) => Err(Error::Config(format!(
                "objective {} requires rho",
                self.kind.name()
            ))),
            (false, Some(_)) => Err(Error::Config(format!(
                "objective {} does not take rho",
                self.kind.name()
            ))),
            (false, None) => Ok(()),
        }
    }

    fn rho(&self) -> f64 {
        self.rho.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Agent {
    A,
    B,
}

/// One job. Optional fields are required or forbidden depending on the
/// instance's objective kind; [`Instance::new`] enforces that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub p: usize,
    #[serde(default)]
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(with = "repr::weight")]
    pub w: f64,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "repr::opt_weight"
    )]
    pub w2: Option<f64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "repr::opt_decimal"
    )]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<Agent>,
}

impl Job {
    /// A job with only the fields shared by every kind.
    pub fn new(p: usize, r: usize, w: f64) -> Self {
        Job {
            p,
            r,
            d: None,
            w,
            w2: None,
            a: None,
            agent: None,
        }
    }

    pub fn with_due(mut self, d: usize) -> Self {
        self.d = Some(d);
        self
    }

    pub fn with_w2(mut self, w2: f64) -> Self {
        self.w2 = Some(w2);
        self
    }

    pub fn with_exponent(mut self, a: f64) -> Self {
        self.a = Some(a);
        self
    }

    pub fn with_agent(mut self, agent: Agent) -> Self {
        self.agent = Some(agent);
        self
    }
}

/// A validated single-machine instance. The horizon is stored, never
/// recomputed, so the serialized form is authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct Instance {
    objective: ObjectiveSpec,
    horizon: usize,
    jobs: Vec<Job>,
}

#[derive(Deserialize)]
struct RawInstance {
    objective: ObjectiveSpec,
    horizon: usize,
    jobs: Vec<Job>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        Instance::new(raw.jobs, raw.objective, raw.horizon)
    }
}

impl Instance {
    pub fn new(jobs: Vec<Job>, objective: ObjectiveSpec, horizon: usize) -> Result<Self> {
        objective.validate()?;
        if jobs.is_empty() {
            return Err(Error::Config("an instance needs at least one job".into()));
        }
        for (j, job) in jobs.iter().enumerate() {
            validate_job(j, job, objective.kind)?;
        }
        let inst = Instance {
            objective,
            horizon,
            jobs,
        };
        let need = inst.min_horizon();
        if horizon < need {
            return Err(Error::Horizon(format!(
                "horizon {horizon} is below max(r) + P = {need}"
            )));
        }
        Ok(inst)
    }

    /// Builds an instance with the tightest admissible horizon, `max(r) + P`.
    pub fn with_min_horizon(jobs: Vec<Job>, objective: ObjectiveSpec) -> Result<Self> {
        let horizon = jobs.iter().map(|j| j.r).max().unwrap_or(0)
            + jobs.iter().map(|j| j.p).sum::<usize>();
        Instance::new(jobs, objective, horizon)
    }

    pub fn objective(&self) -> ObjectiveSpec {
        self.objective
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.objective.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn job(&self, j: usize) -> &Job {
        &self.jobs[j]
    }

    pub fn n(&self) -> usize {
        self.jobs.len()
    }

    pub fn total_processing(&self) -> usize {
        self.jobs.iter().map(|j| j.p).sum()
    }

    pub fn max_release(&self) -> usize {
        self.jobs.iter().map(|j| j.r).max().unwrap_or(0)
    }

    pub fn max_processing(&self) -> usize {
        self.jobs.iter().map(|j| j.p).max().unwrap_or(0)
    }

    pub fn min_horizon(&self) -> usize {
        self.max_release() + self.total_processing()
    }

    pub fn has_releases(&self) -> bool {
        self.jobs.iter().any(|j| j.r > 0)
    }

    /// `z_j(C)`. Real-valued completion times are accepted so smooth
    /// relaxations can evaluate the cost between integer slots.
    pub fn job_cost(&self, j: usize, completion: f64) -> f64 {
        let job = &self.jobs[j];
        let rho = self.objective.rho();
        let tardy = |d: Option<usize>| (completion - d.unwrap_or(0) as f64).max(0.0);
        match self.objective.kind {
            ObjectiveKind::Wt => job.w * tardy(job.d),
            ObjectiveKind::Wc => job.w * completion,
            ObjectiveKind::Power => job.w * completion.powf(job.a.unwrap_or(1.0)),
            ObjectiveKind::Bicriteria => {
                rho * job.w * tardy(job.d) + (1.0 - rho) * job.w2.unwrap_or(0.0) * completion
            }
            ObjectiveKind::TwoAgent => match job.agent {
                Some(Agent::A) => rho * job.w * tardy(job.d),
                _ => (1.0 - rho) * job.w * completion,
            },
        }
    }

    /// Right derivative of `z_j` at `completion`.
    pub fn job_cost_slope(&self, j: usize, completion: f64) -> f64 {
        let job = &self.jobs[j];
        let rho = self.objective.rho();
        let late = |d: Option<usize>| {
            if completion >= d.unwrap_or(0) as f64 {
                1.0
            } else {
                0.0
            }
        };
        match self.objective.kind {
            ObjectiveKind::Wt => job.w * late(job.d),
            ObjectiveKind::Wc => job.w,
            ObjectiveKind::Power => {
                let a = job.a.unwrap_or(1.0);
                job.w * a * completion.powf(a - 1.0)
            }
            ObjectiveKind::Bicriteria => {
                rho * job.w * late(job.d) + (1.0 - rho) * job.w2.unwrap_or(0.0)
            }
            ObjectiveKind::TwoAgent => match job.agent {
                Some(Agent::A) => rho * job.w * late(job.d),
                _ => (1.0 - rho) * job.w,
            },
        }
    }

    /// Weight used to order jobs that land in the same window.
    pub fn tie_weight(&self, j: usize) -> f64 {
        let job = &self.jobs[j];
        let rho = self.objective.rho();
        match self.objective.kind {
            ObjectiveKind::Wt | ObjectiveKind::Wc | ObjectiveKind::Power => job.w,
            ObjectiveKind::Bicriteria => rho * job.w + (1.0 - rho) * job.w2.unwrap_or(0.0),
            ObjectiveKind::TwoAgent => match job.agent {
                Some(Agent::A) => rho * job.w,
                _ => (1.0 - rho) * job.w,
            },
        }
    }

    /// Returns a copy with jobs reordered so that new job `i` is old job `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Instance {
        Instance {
            objective: self.objective,
            horizon: self.horizon,
            jobs: perm.iter().map(|&i| self.jobs[i].clone()).collect(),
        }
    }
}

fn validate_job(j: usize, job: &Job, kind: ObjectiveKind) -> Result<()> {
    let missing = |field: &str| {
        Error::Config(format!(
            "job {j}: field `{field}` is required for objective {}",
            kind.name()
        ))
    };
    let forbidden = |field: &str| {
        Error::Config(format!(
            "job {j}: field `{field}` is not used by objective {}",
            kind.name()
        ))
    };
    if job.p == 0 {
        return Err(Error::Config(format!("job {j}: processing time must be >= 1")));
    }
    if !(job.w.is_finite() && job.w > 0.0) {
        return Err(Error::Config(format!("job {j}: weight must be positive")));
    }
    match kind {
        ObjectiveKind::Wt => {
            job.d.ok_or_else(|| missing("d"))?;
        }
        ObjectiveKind::Wc => {}
        ObjectiveKind::Power => {
            let a = job.a.ok_or_else(|| missing("a"))?;
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config(format!("job {j}: exponent must be positive")));
            }
        }
        ObjectiveKind::Bicriteria => {
            job.d.ok_or_else(|| missing("d"))?;
            let w2 = job.w2.ok_or_else(|| missing("w2"))?;
            if !(w2.is_finite() && w2 > 0.0) {
                return Err(Error::Config(format!("job {j}: w2 must be positive")));
            }
        }
        ObjectiveKind::TwoAgent => match job.agent.ok_or_else(|| missing("agent"))? {
            Agent::A => {
                job.d.ok_or_else(|| missing("d"))?;
            }
            Agent::B => {
                if job.d.is_some() {
                    return Err(forbidden("d"));
                }
            }
        },
    }
    if job.a.is_some() && kind != ObjectiveKind::Power {
        return Err(forbidden("a"));
    }
    if job.w2.is_some() && kind != ObjectiveKind::Bicriteria {
        return Err(forbidden("w2"));
    }
    if job.agent.is_some() && kind != ObjectiveKind::TwoAgent {
        return Err(forbidden("agent"));
    }
    if job.d.is_some() && matches!(kind, ObjectiveKind::Wc | ObjectiveKind::Power) {
        return Err(forbidden("d"));
    }
    Ok(())
}

/// Integer start time per job, indexed like the instance's jobs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    pub starts: Vec<usize>,
}

impl Schedule {
    pub fn new(starts: Vec<usize>) -> Self {
        Schedule { starts }
    }

    /// Job indices in processing order (ties by index).
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq: Vec<usize> = (0..self.starts.len()).collect();
        seq.sort_by_key(|&j| (self.starts[j], j));
        seq
    }

    /// Checks release and non-overlap constraints.
    pub fn check(&self, instance: &Instance) -> Result<()> {
        if self.starts.len() != instance.n() {
            return Err(Error::InfeasibleSchedule(format!(
                "schedule has {} starts for {} jobs",
                self.starts.len(),
                instance.n()
            )));
        }
        for (j, (&s, job)) in self.starts.iter().zip(instance.jobs()).enumerate() {
            if s < job.r {
                return Err(Error::InfeasibleSchedule(format!(
                    "job {j} starts at {s} before its release {}",
                    job.r
                )));
            }
        }
        let seq = self.sequence();
        for pair in seq.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if self.starts[a] + instance.job(a).p > self.starts[b] {
                return Err(Error::InfeasibleSchedule(format!(
                    "jobs {a} and {b} overlap"
                )));
            }
        }
        Ok(())
    }
}

/// `Z(S) = sum_j z_j(S_j + p_j)` after verifying feasibility.
pub fn evaluate_schedule(instance: &Instance, schedule: &Schedule) -> Result<f64> {
    schedule.check(instance)?;
    Ok(objective_value(instance, &schedule.starts))
}

/// Objective without the feasibility check; callers must guarantee it.
pub(crate) fn objective_value(instance: &Instance, starts: &[usize]) -> f64 {
    starts
        .iter()
        .enumerate()
        .map(|(j, &s)| instance.job_cost(j, (s + instance.job(j).p) as f64))
        .sum()
}

/// Active schedule for a job order: each job starts at the later of its
/// release and its predecessor's completion.
pub fn schedule_from_sequence(instance: &Instance, seq: &[usize]) -> Schedule {
    let n = instance.n();
    assert_eq!(seq.len(), n, "sequence length must equal job count");
    let mut starts = vec![usize::MAX; n];
    let mut t = 0usize;
    for &j in seq {
        assert!(starts[j] == usize::MAX, "job {j} appears twice in sequence");
        let job = instance.job(j);
        let s = t.max(job.r);
        starts[j] = s;
        t = s + job.p;
    }
    Schedule { starts }
}

/// Dense `n x T` matrix of starting costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let horizon = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == horizon), "ragged cost rows");
        CostMatrix {
            n,
            horizon,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.values[j * self.horizon + t]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.horizon..(j + 1) * self.horizon]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `c_jt = z_j(t + p_j)` for every `t` in the horizon, including slots
/// before the job's release.
pub fn starting_costs(instance: &Instance) -> CostMatrix {
    let horizon = instance.horizon();
    let mut values = Vec::with_capacity(instance.n() * horizon);
    for (j, job) in instance.jobs().iter().enumerate() {
        values.extend((0..horizon).map(|t| instance.job_cost(j, (t + job.p) as f64)));
    }
    CostMatrix {
        n: instance.n(),
        horizon,
        values,
    }
}

/// Min-max normalization over the whole matrix. A constant matrix maps to
/// all zeros.
pub fn normalize_costs(cm: &CostMatrix) -> CostMatrix {
    let lo = cm.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cm.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = if span > 0.0 {
        cm.values.iter().map(|&c| (c - lo) / span).collect()
    } else {
        vec![0.0; cm.values.len()]
    };
    CostMatrix {
        n: cm.n,
        horizon: cm.horizon,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wt(jobs: &[(usize, usize, f64)]) -> Instance {
        let jobs = jobs
            .iter()
            .map(|&(p, d, w)| Job::new(p, 0, w).with_due(d))
            .collect();
        Instance::with_min_horizon(jobs, ObjectiveSpec::simple(ObjectiveKind::Wt)).unwrap()
    }

    fn wc(jobs: &[(usize, usize, f64)]) -> Instance {
        let jobs = jobs.iter().map(|&(p, r, w)| Job::new(p, r, w)).collect();
        Instance::with_min_horizon(jobs, ObjectiveSpec::simple(ObjectiveKind::Wc)).unwrap()
    }

    #[test]
    fn job_cost_examples() {
        let inst = wt(&[(2, 5, 3.0)]);
        assert_eq!(inst.job_cost(0, 9.0), 12.0);
        assert_eq!(inst.job_cost(0, 4.0), 0.0);

        let jobs = vec![Job::new(1, 0, 2.0).with_exponent(1.0)];
        let pow = Instance::with_min_horizon(jobs, ObjectiveSpec::simple(ObjectiveKind::Power))
            .unwrap();
        assert_eq!(pow.job_cost(0, 7.0), 14.0);
    }

    #[test]
    fn bicriteria_and_two_agent_costs() {
        let spec = ObjectiveSpec::new(ObjectiveKind::Bicriteria, Some(0.25)).unwrap();
        let inst = Instance::with_min_horizon(
            vec![Job::new(1, 0, 4.0).with_due(2).with_w2(8.0)],
            spec,
        )
        .unwrap();
        // 0.25 * 4 * 3 + 0.75 * 8 * 5
        assert_eq!(inst.job_cost(0, 5.0), 3.0 + 30.0);

        let spec = ObjectiveSpec::new(ObjectiveKind::TwoAgent, Some(0.5)).unwrap();
        let inst = Instance::with_min_horizon(
            vec![
                Job::new(1, 0, 4.0).with_due(2).with_agent(Agent::A),
                Job::new(1, 0, 6.0).with_agent(Agent::B),
            ],
            spec,
        )
        .unwrap();
        assert_eq!(inst.job_cost(0, 5.0), 6.0);
        assert_eq!(inst.job_cost(1, 5.0), 15.0);
    }

    #[test]
    fn missing_fields_are_config_errors() {
        let err = Instance::with_min_horizon(
            vec![Job::new(1, 0, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wt),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(ObjectiveSpec::new(ObjectiveKind::Bicriteria, None).is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::Wc, Some(0.5)).is_err());
        let bad = r#"{"objective":{"kind":"MAKESPAN"},"horizon":3,"jobs":[{"p":1,"w":1}]}"#;
        assert!(serde_json::from_str::<Instance>(bad).is_err());
    }

    #[test]
    fn horizon_must_cover_active_schedules() {
        let err = Instance::new(
            vec![Job::new(2, 3, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wc),
            4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Horizon(_)));
    }

    #[test]
    fn starting_cost_rows() {
        let inst = Instance::new(
            vec![Job::new(2, 0, 1.0)],
            ObjectiveSpec::simple(ObjectiveKind::Wc),
            3,
        )
        .unwrap();
        assert_eq!(starting_costs(&inst).row(0), &[2.0, 3.0, 4.0]);

        let inst = Instance::new(
            vec![Job::new(1, 0, 1.0).with_due(2)],
            ObjectiveSpec::simple(ObjectiveKind::Wt),
            4,
        )
        .unwrap();
        let cm = starting_costs(&inst);
        assert_eq!(cm.row(0), &[0.0, 0.0, 1.0, 2.0]);
        assert_eq!(normalize_costs(&cm).row(0), &[0.0, 0.0, 0.5, 1.0]);

        let inst = Instance::new(
            vec![Job::new(1, 0, 4.0).with_exponent(0.5)],
            ObjectiveSpec::simple(ObjectiveKind::Power),
            4,
        )
        .unwrap();
        assert_eq!(starting_costs(&inst).get(0, 3), 8.0);
    }

    #[test]
    fn normalization_examples() {
        let cm = CostMatrix::from_rows(vec![vec![0.0, 5.0, 10.0]]);
        assert_eq!(normalize_costs(&cm).row(0), &[0.0, 0.5, 1.0]);
        let flat = CostMatrix::from_rows(vec![vec![3.0, 3.0], vec![3.0, 3.0]]);
        assert!(normalize_costs(&flat).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluate_examples() {
        let inst = wc(&[(1, 0, 3.0), (2, 0, 1.0)]);
        assert_eq!(evaluate_schedule(&inst, &Schedule::new(vec![0, 1])).unwrap(), 6.0);

        let inst = wt(&[(2, 5, 4.0)]);
        assert_eq!(evaluate_schedule(&inst, &Schedule::new(vec![1])).unwrap(), 0.0);

        let inst = wc(&[(2, 0, 1.0), (2, 0, 1.0)]);
        let err = evaluate_schedule(&inst, &Schedule::new(vec![0, 0])).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSchedule(ref m) if m.contains("0 and 1")));

        let inst = wc(&[(2, 3, 1.0)]);
        assert!(evaluate_schedule(&inst, &Schedule::new(vec![2])).is_err());
    }

    #[test]
    fn sequence_examples() {
        let inst = wc(&[(2, 0, 1.0), (3, 0, 1.0)]);
        assert_eq!(schedule_from_sequence(&inst, &[0, 1]).starts, vec![0, 2]);
        let inst = wc(&[(2, 3, 1.0), (2, 0, 1.0)]);
        assert_eq!(schedule_from_sequence(&inst, &[0, 1]).starts, vec![3, 5]);
        let inst = wc(&[(2, 0, 1.0), (2, 0, 1.0)]);
        assert_eq!(schedule_from_sequence(&inst, &[1, 0]).starts, vec![2, 0]);
    }

    #[test]
    fn json_round_trip_keeps_reals_exact() {
        let spec = ObjectiveSpec::new(ObjectiveKind::Bicriteria, Some(0.3)).unwrap();
        let inst = Instance::with_min_horizon(
            vec![Job::new(3, 1, 7.0).with_due(4).with_w2(2.0)],
            spec,
        )
        .unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        assert_eq!(
            text,
            r#"{"objective":{"kind":"BICRITERIA","rho":"0.3"},"horizon":4,"jobs":[{"p":3,"r":1,"d":4,"w":7,"w2":2}]}"#
        );
        let back: Instance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inst);

        let a = 0.123_456_789_012_345_67_f64;
        let inst = Instance::with_min_horizon(
            vec![Job::new(1, 0, 2.5).with_exponent(a)],
            ObjectiveSpec::simple(ObjectiveKind::Power),
        )
        .unwrap();
        let back: Instance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(back.job(0).a.unwrap().to_bits(), a.to_bits());
        assert_eq!(back.job(0).w, 2.5);
    }
}
