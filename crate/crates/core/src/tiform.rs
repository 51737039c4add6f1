//! Time-indexed formulation, its LP relaxation, and a best-effort integral
//! solver driven by LP dives.

use std::io::Write;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{evaluate_schedule, schedule_from_sequence, Instance, Schedule};

/// Largest variable count the LP path accepts.
pub const MAX_LP_VARIABLES: usize = 250_000;
/// Samples drawn when rounding an LP solution.
pub const DEFAULT_LP_SAMPLES: usize = 100;

/// Sparse time-indexed model. Variable `v` is `x_{j,t}` for the pair
/// `index[v]`; each job's variables are contiguous and ordered by `t`.
#[derive(Debug, Clone)]
pub struct TimeIndexedModel {
    n: usize,
    horizon: usize,
    index: Vec<(usize, usize)>,
    cost: Vec<f64>,
    job_vars: Vec<std::ops::Range<usize>>,
    capacity: Vec<Vec<usize>>,
}

impl TimeIndexedModel {
    pub fn num_vars(&self) -> usize {
        self.index.len()
    }

    pub fn num_assignment_rows(&self) -> usize {
        self.n
    }

    /// One row per time slot, including slots no variable touches.
    pub fn num_capacity_rows(&self) -> usize {
        self.horizon
    }

    pub fn var(&self, v: usize) -> (usize, usize) {
        self.index[v]
    }

    pub fn cost(&self, v: usize) -> f64 {
        self.cost[v]
    }

    pub fn job_vars(&self, j: usize) -> std::ops::Range<usize> {
        self.job_vars[j].clone()
    }

    /// Variable id of `x_{j,t}` if it exists.
    pub fn lookup(&self, j: usize, t: usize) -> Option<usize> {
        let range = &self.job_vars[j];
        let first = self.index.get(range.start)?.1;
        (t >= first && t - first < range.len()).then(|| range.start + t - first)
    }

    pub fn capacity_row(&self, t: usize) -> &[usize] {
        &self.capacity[t]
    }
}

pub fn build_time_indexed(instance: &Instance) -> Result<TimeIndexedModel> {
    let horizon = instance.horizon();
    if horizon < instance.min_horizon() {
        return Err(Error::Horizon(format!(
            "horizon {horizon} is below max(r) + P = {}",
            instance.min_horizon()
        )));
    }
    let mut index = Vec::new();
    let mut cost = Vec::new();
    let mut job_vars = Vec::with_capacity(instance.n());
    let mut capacity = vec![Vec::new(); horizon];
    for (j, job) in instance.jobs().iter().enumerate() {
        let first = index.len();
        for t in job.r..=horizon - job.p {
            let v = index.len();
            index.push((j, t));
            cost.push(instance.job_cost(j, (t + job.p) as f64));
            for row in &mut capacity[t..t + job.p] {
                row.push(v);
            }
        }
        job_vars.push(first..index.len());
    }
    Ok(TimeIndexedModel {
        n: instance.n(),
        horizon,
        index,
        cost,
        job_vars,
        capacity,
    })
}

#[derive(Debug, Clone)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl FractionalSolution {
    /// Per-job start distribution over the full horizon.
    pub fn start_distribution(&self, model: &TimeIndexedModel, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; model.horizon];
        for v in model.job_vars(j) {
            out[model.var(v).1] = self.x[v];
        }
        out
    }

    pub fn is_integral(&self) -> bool {
        self.x.iter().all(|&x| x < 1e-6 || x > 1.0 - 1e-6)
    }

    /// Decodes an integral solution into a schedule.
    pub fn to_schedule(&self, model: &TimeIndexedModel) -> Option<Schedule> {
        if !self.is_integral() {
            return None;
        }
        let starts = (0..model.n)
            .map(|j| {
                model
                    .job_vars(j)
                    .find(|&v| self.x[v] > 0.5)
                    .map(|v| model.var(v).1)
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Schedule::new(starts))
    }
}

struct Lp {
    vars: Vec<Variable>,
    solution: Solution,
}

impl Lp {
    fn solve(model: &TimeIndexedModel, deadline: Option<Duration>) -> Result<Lp> {
        if model.num_vars() > MAX_LP_VARIABLES {
            return Err(Error::Capacity(format!(
                "time-indexed LP has {} variables, limit is {MAX_LP_VARIABLES}",
                model.num_vars()
            )));
        }
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        if let Some(limit) = deadline {
            problem.set_time_limit(limit);
        }
        let vars: Vec<Variable> = model
            .cost
            .iter()
            .map(|&c| problem.add_var(c, (0.0, 1.0)))
            .collect();
        for j in 0..model.n {
            let row: Vec<(Variable, f64)> = model.job_vars(j).map(|v| (vars[v], 1.0)).collect();
            problem.add_constraint(row.as_slice(), ComparisonOp::Eq, 1.0);
        }
        for t in 0..model.horizon {
            let members = model.capacity_row(t);
            if members.len() > 1 {
                let row: Vec<(Variable, f64)> = members.iter().map(|&v| (vars[v], 1.0)).collect();
                problem.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0);
            }
        }
        let outcome = problem.solve().map_err(lp_error)?;
        let solution = outcome
            .solution()
            .cloned()
            .ok_or_else(|| Error::Lp("LP solve interrupted before a solution".into()))?;
        Ok(Lp { vars, solution })
    }

    fn fractional(&self) -> FractionalSolution {
        FractionalSolution {
            x: self
                .vars
                .iter()
                .map(|&v| self.solution.var_value(v).clamp(0.0, 1.0))
                .collect(),
            objective: self.solution.objective(),
        }
    }

    fn fix(&self, v: usize, value: f64) -> Option<Lp> {
        let outcome = self.solution.clone().fix_var(self.vars[v], value).ok()?;
        let solution = outcome.solution()?.clone();
        Some(Lp {
            vars: self.vars.clone(),
            solution,
        })
    }
}

fn lp_error(e: microlp::Error) -> Error {
    match e {
        microlp::Error::Infeasible => {
            Error::Horizon("time-indexed LP is infeasible; the horizon is too short".into())
        }
        other => Error::Lp(other.to_string()),
    }
}

/// Optimal value of the LP relaxation and its primal solution.
pub fn lp_lower_bound(instance: &Instance) -> Result<(f64, FractionalSolution)> {
    let model = build_time_indexed(instance)?;
    let lp = Lp::solve(&model, None)?;
    let frac = lp.fractional();
    Ok((frac.objective, frac))
}

fn mean_start_schedule(
    instance: &Instance,
    model: &TimeIndexedModel,
    frac: &FractionalSolution,
) -> Schedule {
    let mean: Vec<f64> = (0..instance.n())
        .map(|j| model.job_vars(j).map(|v| frac.x[v] * model.var(v).1 as f64).sum())
        .collect();
    let mut seq: Vec<usize> = (0..instance.n()).collect();
    seq.sort_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(a.cmp(&b)));
    schedule_from_sequence(instance, &seq)
}

/// Samples one start per job from the (clamped, renormalized) LP rows, orders
/// jobs by sampled start (ties by index) and builds the active schedule.
pub fn sample_from_lp<R: Rng + ?Sized>(
    instance: &Instance,
    model: &TimeIndexedModel,
    frac: &FractionalSolution,
    rng: &mut R,
) -> Schedule {
    let n = instance.n();
    let mut sampled = vec![0usize; n];
    for (j, slot) in sampled.iter_mut().enumerate() {
        let vars = model.job_vars(j);
        let total: f64 = vars.clone().map(|v| frac.x[v].max(0.0)).sum();
        let first_t = model.var(vars.start).1;
        if total <= 0.0 {
            *slot = first_t;
            continue;
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        *slot = model.var(vars.end - 1).1;
        for v in vars {
            acc += frac.x[v].max(0.0);
            if u < acc {
                *slot = model.var(v).1;
                break;
            }
        }
    }
    let mut seq: Vec<usize> = (0..n).collect();
    seq.sort_by_key(|&j| (sampled[j], j));
    schedule_from_sequence(instance, &seq)
}

struct Incumbent<'a> {
    instance: &'a Instance,
    schedule: Schedule,
    value: f64,
}

impl Incumbent<'_> {
    fn offer(&mut self, schedule: Schedule) {
        if let Ok(v) = evaluate_schedule(self.instance, &schedule) {
            if v < self.value {
                self.value = v;
                self.schedule = schedule;
            }
        }
    }
}

/// LP-guided dive-and-fix. Never returns anything worse than `warm`; when the
/// time cap runs out the current incumbent is returned.
pub fn mip_best_effort(instance: &Instance, warm: &Schedule, time_cap: f64) -> Result<Schedule> {
    let warm_value = evaluate_schedule(instance, warm)?;
    if !(time_cap > 0.0) {
        return Ok(warm.clone());
    }
    let started = Instant::now();
    let cap = Duration::from_secs_f64(time_cap.min(1e6));
    let remaining = || cap.checked_sub(started.elapsed());

    let mut best = Incumbent {
        instance,
        schedule: warm.clone(),
        value: warm_value,
    };
    let model = build_time_indexed(instance)?;
    let Some(left) = remaining() else {
        return Ok(best.schedule);
    };
    let mut lp = match Lp::solve(&model, Some(left)) {
        Ok(lp) => lp,
        Err(Error::Lp(_)) => return Ok(best.schedule),
        Err(e) => return Err(e),
    };
    let root = lp.fractional();
    let mut frac = root.clone();
    let budget = 2 * instance.n() + 10;
    let mut fixed_one = vec![false; instance.n()];
    for _ in 0..budget {
        best.offer(mean_start_schedule(instance, &model, &frac));
        if let Some(s) = frac.to_schedule(&model) {
            best.offer(s);
            break;
        }
        if remaining().is_none() {
            return Ok(best.schedule);
        }
        let pick = (0..model.num_vars())
            .filter(|&v| !fixed_one[model.var(v).0])
            .filter(|&v| frac.x[v] > 1e-6 && frac.x[v] < 1.0 - 1e-6)
            .max_by(|&a, &b| frac.x[a].total_cmp(&frac.x[b]).then(b.cmp(&a)));
        let Some(v) = pick else { break };
        let next = match lp.fix(v, 1.0) {
            Some(next) => {
                fixed_one[model.var(v).0] = true;
                next
            }
            None => match lp.fix(v, 0.0) {
                Some(next) => next,
                None => break,
            },
        };
        lp = next;
        frac = lp.fractional();
    }
    if remaining().is_some() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for src in [&frac, &root] {
            for _ in 0..DEFAULT_LP_SAMPLES / 2 {
                best.offer(sample_from_lp(instance, &model, src, &mut rng));
            }
        }
    }
    Ok(best.schedule)
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros trimmed.
pub fn format_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Writes the model in free MPS format.
pub fn write_mps<W: Write>(model: &TimeIndexedModel, name: &str, out: &mut W) -> Result<()> {
    let col = |v: usize| {
        let (j, t) = model.var(v);
        format!("x_{j}_{t}")
    };
    let mut rows_of: Vec<Vec<String>> = vec![Vec::new(); model.num_vars()];
    for t in 0..model.horizon {
        for &v in model.capacity_row(t) {
            rows_of[v].push(format!("cap_{t}"));
        }
    }
    writeln!(out, "NAME {name}")?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N obj")?;
    for j in 0..model.n {
        writeln!(out, " E assign_{j}")?;
    }
    for t in 0..model.horizon {
        writeln!(out, " L cap_{t}")?;
    }
    writeln!(out, "COLUMNS")?;
    for v in 0..model.num_vars() {
        let name = col(v);
        writeln!(out, " {name} obj {}", format_g12(model.cost(v)))?;
        writeln!(out, " {name} assign_{} 1", model.var(v).0)?;
        for row in &rows_of[v] {
            writeln!(out, " {name} {row} 1")?;
        }
    }
    writeln!(out, "RHS")?;
    for j in 0..model.n {
        writeln!(out, " rhs assign_{j} 1")?;
    }
    for t in 0..model.horizon {
        writeln!(out, " rhs cap_{t} 1")?;
    }
    writeln!(out, "BOUNDS")?;
    for v in 0..model.num_vars() {
        writeln!(out, " UP bnd {} 1", col(v))?;
    }
    writeln!(out, "ENDATA")?;
    Ok(())
}
