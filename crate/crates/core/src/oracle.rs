//! Exact solvers for small instances.
//!
//! Both solvers return the same optimum: among schedules whose objective is
//! within a relative `1e-9` of the best, the lexicographically smallest start
//! vector. Values are recomputed from the final start vector so the two
//! oracles report bit-identical numbers for the same schedule.

use crate::error::{Error, Result};
use crate::model::{objective_value, Instance, Schedule};

pub const DEFAULT_ENUMERATE_CAP: usize = 9;
pub const DEFAULT_DP_CAP: usize = 16;
/// Total number of frontier states the DP may hold before giving up.
pub const DP_STATE_LIMIT: usize = 6_000_000;

const UNSET: u32 = u32::MAX;

pub(crate) fn tol(a: f64, b: f64) -> f64 {
    1e-9 * 1f64.max(a.abs()).max(b.abs())
}

/// `(cost, starts)` strictly better than the incumbent under the shared tie rule.
fn improves(cost: f64, starts: &[u32], best_cost: f64, best_starts: &[u32]) -> bool {
    let t = tol(cost, best_cost);
    if cost < best_cost - t {
        true
    } else if cost > best_cost + t {
        false
    } else {
        starts < best_starts
    }
}

fn to_schedule(starts: &[u32]) -> Schedule {
    Schedule::new(starts.iter().map(|&s| s as usize).collect())
}

/// Exhaustive search over job orders with an admissible lower bound.
pub fn exact_enumerate(instance: &Instance, n_cap: usize) -> Result<(Schedule, f64)> {
    let n = instance.n();
    if n > n_cap {
        return Err(Error::OracleSize(format!(
            "enumeration accepts at most {n_cap} jobs, got {n}"
        )));
    }
    let mut search = Enumeration {
        instance,
        used: vec![false; n],
        starts: vec![UNSET; n],
        best_cost: f64::INFINITY,
        best_starts: vec![UNSET; n],
    };
    search.descend(0, 0, 0.0);
    let schedule = to_schedule(&search.best_starts);
    let value = objective_value(instance, &schedule.starts);
    Ok((schedule, value))
}

struct Enumeration<'a> {
    instance: &'a Instance,
    used: Vec<bool>,
    starts: Vec<u32>,
    best_cost: f64,
    best_starts: Vec<u32>,
}

impl Enumeration<'_> {
    fn descend(&mut self, depth: usize, t: usize, cost: f64) {
        let n = self.instance.n();
        if depth == n {
            if improves(cost, &self.starts, self.best_cost, &self.best_starts) {
                self.best_cost = cost;
                self.best_starts.copy_from_slice(&self.starts);
            }
            return;
        }
        let bound: f64 = cost
            + (0..n)
                .filter(|&j| !self.used[j])
                .map(|j| {
                    let job = self.instance.job(j);
                    self.instance.job_cost(j, (t.max(job.r) + job.p) as f64)
                })
                .sum::<f64>();
        if bound > self.best_cost + tol(bound, self.best_cost) {
            return;
        }
        for j in 0..n {
            if self.used[j] {
                continue;
            }
            let job = self.instance.job(j);
            let s = t.max(job.r);
            let c = s + job.p;
            self.used[j] = true;
            self.starts[j] = s as u32;
            self.descend(depth + 1, c, cost + self.instance.job_cost(j, c as f64));
            self.starts[j] = UNSET;
            self.used[j] = false;
        }
    }
}

/// One non-dominated partial schedule of a job subset.
#[derive(Debug, Clone)]
pub struct ParetoState {
    pub completion: usize,
    pub cost: f64,
    /// Start times of the subset's jobs; other entries are unset.
    starts: Box<[u32]>,
}

impl ParetoState {
    /// `self` is at least as good as `other` for every completion of the
    /// remaining jobs, including the lexicographic tie-break.
    fn dominates(&self, other: &ParetoState) -> bool {
        if self.completion > other.completion {
            return false;
        }
        let t = tol(self.cost, other.cost);
        self.cost < other.cost - t || (self.cost <= other.cost + t && self.starts <= other.starts)
    }
}

fn insert_state(frontier: &mut Vec<ParetoState>, state: ParetoState) -> bool {
    if frontier.iter().any(|s| s.dominates(&state)) {
        return false;
    }
    frontier.retain(|s| !state.dominates(s));
    frontier.push(state);
    debug_assert!(frontier_is_clean(frontier));
    true
}

fn frontier_is_clean(frontier: &[ParetoState]) -> bool {
    frontier.iter().enumerate().all(|(i, a)| {
        frontier
            .iter()
            .enumerate()
            .all(|(k, b)| i == k || !a.dominates(b))
    })
}

/// Dynamic program over scheduled-prefix subsets. Without release times each
/// subset collapses to a single state.
pub fn subset_dp(instance: &Instance, n_cap: usize) -> Result<(Schedule, f64)> {
    let n = instance.n();
    if n > n_cap {
        return Err(Error::OracleSize(format!(
            "subset DP accepts at most {n_cap} jobs, got {n}"
        )));
    }
    if n >= usize::BITS as usize - 1 {
        return Err(Error::OracleSize(format!("{n} jobs exceed the subset encoding")));
    }
    let full = (1usize << n) - 1;
    let mut frontiers: Vec<Vec<ParetoState>> = vec![Vec::new(); full + 1];
    frontiers[0].push(ParetoState {
        completion: 0,
        cost: 0.0,
        starts: vec![UNSET; n].into_boxed_slice(),
    });
    let mut live = 1usize;
    for mask in 0..full {
        let states = std::mem::take(&mut frontiers[mask]);
        live -= states.len();
        for state in &states {
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                let job = instance.job(j);
                let s = state.completion.max(job.r);
                let c = s + job.p;
                let mut starts = state.starts.clone();
                starts[j] = s as u32;
                let next = ParetoState {
                    completion: c,
                    cost: state.cost + instance.job_cost(j, c as f64),
                    starts,
                };
                let target = &mut frontiers[mask | (1 << j)];
                let before = target.len();
                if insert_state(target, next) {
                    live = live + target.len() - before;
                    if live > DP_STATE_LIMIT {
                        return Err(Error::OracleSize(format!(
                            "subset DP frontier exceeded {DP_STATE_LIMIT} states"
                        )));
                    }
                } else {
                    debug_assert_eq!(target.len(), before);
                }
            }
        }
    }
    let best = frontiers[full]
        .iter()
        .fold(None::<&ParetoState>, |acc, s| match acc {
            Some(b) if !improves(s.cost, &s.starts, b.cost, &b.starts) => Some(b),
            _ => Some(s),
        })
        .ok_or_else(|| Error::Consistency("subset DP produced no complete state".into()))?;
    let schedule = to_schedule(&best.starts);
    let value = objective_value(instance, &schedule.starts);
    Ok((schedule, value))
}

/// Subset DP with the default size cap.
pub fn solve_exact(instance: &Instance) -> Result<(Schedule, f64)> {
    subset_dp(instance, DEFAULT_DP_CAP)
}
