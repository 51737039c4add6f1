//! Single-instance refinement: a smooth surrogate of the order-to-schedule
//! map and Polyak-step descent on the network parameters.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::decode::greedy_decode;
use crate::error::Result;
use crate::model::{objective_value, schedule_from_sequence, Instance, ObjectiveKind, Schedule};
use crate::nn::{backward, encode_input, forward_cached, grads_dot, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineHyper {
    pub b: usize,
    pub b_stop: usize,
    pub eps: f64,
    pub phi0: f64,
    pub dphi: f64,
    /// Hard cap on iterations.
    pub max_iters: usize,
}

impl Default for OnlineHyper {
    fn default() -> Self {
        OnlineHyper {
            b: 50,
            b_stop: 100,
            eps: 0.02,
            phi0: 0.5,
            dphi: 0.1,
            max_iters: 1000,
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which term attains the max in a job's push-back amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PushBranch {
    Zero,
    Own,
    Pred(usize),
}

#[derive(Debug, Clone)]
pub struct SoftEval {
    pub value: f64,
    pub weighted_windows: Vec<f64>,
    /// Smoothed start times `S~_j + dS_j`.
    pub starts: Vec<f64>,
    pub branches: Vec<PushBranch>,
}

impl SoftEval {
    /// Piecewise regime: the active push-back branch and, for jobs with a due
    /// date, whether the smoothed completion is at or past it. Finite
    /// differences are only meaningful while this stays fixed.
    pub fn regime(&self, instance: &Instance) -> (Vec<PushBranch>, Vec<bool>) {
        let late = (0..instance.n())
            .map(|j| {
                let job = instance.job(j);
                job.d.is_some_and(|d| self.starts[j] + job.p as f64 >= d as f64)
            })
            .collect();
        (self.branches.clone(), late)
    }
}

pub fn weighted_windows(o: &ArrayView2<f64>) -> Vec<f64> {
    o.rows()
        .into_iter()
        .map(|row| row.iter().enumerate().map(|(k, &v)| k as f64 * v).sum())
        .collect()
}

struct Pass {
    omega: Vec<f64>,
    sig: Array2<f64>,
    pre: Vec<f64>,
    slack: Vec<f64>,
    push: Vec<f64>,
    branches: Vec<PushBranch>,
    completion: Vec<f64>,
}

fn soft_pass(o: &ArrayView2<f64>, instance: &Instance, phi: f64) -> Pass {
    let n = instance.n();
    let omega = weighted_windows(o);
    let mut sig = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            if i != j {
                sig[[j, i]] = sigmoid(phi * (omega[j] - omega[i]));
            }
        }
    }
    let pre: Vec<f64> = (0..n)
        .map(|j| (0..n).filter(|&i| i != j).map(|i| sig[[j, i]] * instance.job(i).p as f64).sum())
        .collect();
    let slack: Vec<f64> = (0..n).map(|j| instance.job(j).r as f64 - pre[j]).collect();
    let mut push = vec![0.0; n];
    let mut branches = vec![PushBranch::Zero; n];
    for j in 0..n {
        let mut best = 0.0;
        let mut branch = PushBranch::Zero;
        if slack[j] >= best {
            best = slack[j];
            branch = PushBranch::Own;
        }
        for i in 0..n {
            if i != j {
                let cand = sig[[j, i]] * slack[i];
                if cand >= best {
                    best = cand;
                    branch = PushBranch::Pred(i);
                }
            }
        }
        push[j] = best;
        branches[j] = branch;
    }
    let power = instance.kind() == ObjectiveKind::Power;
    let completion = (0..n)
        .map(|j| {
            let p = instance.job(j).p as f64;
            let c = pre[j] + push[j] + p;
            if power {
                c.max(p * 1e-3)
            } else {
                c
            }
        })
        .collect();
    Pass {
        omega,
        sig,
        pre,
        slack,
        push,
        branches,
        completion,
    }
}

/// Smoothed objective of the order implied by weighted window values.
pub fn soft_surrogate(o: &ArrayView2<f64>, instance: &Instance, phi: f64) -> SoftEval {
    let pass = soft_pass(o, instance, phi);
    let value = pass
        .completion
        .iter()
        .enumerate()
        .map(|(j, &c)| instance.job_cost(j, c))
        .sum();
    SoftEval {
        value,
        starts: (0..instance.n()).map(|j| pass.pre[j] + pass.push[j]).collect(),
        weighted_windows: pass.omega,
        branches: pass.branches,
    }
}

/// Surrogate value and its gradient with respect to `o`. At ties in the
/// push-back max the last maximal term supplies the gradient.
pub fn soft_surrogate_grad(o: &ArrayView2<f64>, instance: &Instance, phi: f64) -> (SoftEval, Array2<f64>) {
    let n = instance.n();
    let pass = soft_pass(o, instance, phi);
    let g_c: Vec<f64> = (0..n).map(|j| instance.job_cost_slope(j, pass.completion[j])).collect();
    let mut g_pre = g_c.clone();
    let mut g_slack = vec![0.0; n];
    let mut g_sig = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        match pass.branches[j] {
            PushBranch::Zero => {}
            PushBranch::Own => g_slack[j] += g_c[j],
            PushBranch::Pred(i) => {
                g_sig[[j, i]] += g_c[j] * pass.slack[i];
                g_slack[i] += g_c[j] * pass.sig[[j, i]];
            }
        }
    }
    for j in 0..n {
        g_pre[j] -= g_slack[j];
    }
    let mut g_omega = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let g = g_sig[[j, i]] + g_pre[j] * instance.job(i).p as f64;
            let s = pass.sig[[j, i]];
            let d = g * phi * s * (1.0 - s);
            g_omega[j] += d;
            g_omega[i] -= d;
        }
    }
    let g_o = Array2::from_shape_fn(o.raw_dim(), |(j, k)| g_omega[j] * k as f64);
    let value = pass
        .completion
        .iter()
        .enumerate()
        .map(|(j, &c)| instance.job_cost(j, c))
        .sum();
    let eval = SoftEval {
        value,
        starts: (0..n).map(|j| pass.pre[j] + pass.push[j]).collect(),
        weighted_windows: pass.omega,
        branches: pass.branches,
    };
    (eval, g_o)
}

/// Active schedule of the order by ascending weighted window (ties by index).
pub fn hard_feasibility(o: &ArrayView2<f64>, instance: &Instance) -> Schedule {
    let omega = weighted_windows(o);
    let mut seq: Vec<usize> = (0..instance.n()).collect();
    seq.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]).then(a.cmp(&b)));
    schedule_from_sequence(instance, &seq)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub surrogate: f64,
    pub objective: f64,
    pub lambda: f64,
    pub phi: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineResult {
    /// Parameters with the best hard-feasibility objective.
    pub params: Params,
    /// Best schedule seen under either decoder.
    pub schedule: Schedule,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub stagnation_events: usize,
    pub flat_gradient_exit: bool,
    pub trace: Vec<TraceRow>,
}

/// Polyak step towards `target`, never negative.
pub fn polyak_step(value: f64, target: f64, grad_norm_sq: f64) -> f64 {
    ((value - target) / grad_norm_sq).max(0.0)
}

/// Descends the surrogate from `params0`. The returned schedule is never
/// worse than the hard-feasibility or greedy decode at `params0`.
pub fn online_learn(params0: &Params, instance: &Instance, hyper: &OnlineHyper) -> Result<OnlineResult> {
    let enc = encode_input(instance, &params0.arch)?;
    let mut theta = params0.clone();
    let mut theta_best = params0.clone();
    let mut lambda = 0.0;
    let mut phi = hyper.phi0;
    let mut best_j = f64::INFINITY;
    let mut best_schedule = Schedule::new(Vec::new());
    let mut best_value = f64::INFINITY;
    let mut initial_value = f64::INFINITY;
    let mut inf_surrogate = f64::INFINITY;
    let mut last_surrogate_gain = 0usize;
    let mut last_j_gain = 0usize;
    let mut stagnation_events = 0;
    let mut flat = false;
    let mut trace = Vec::new();
    let mut k = 0usize;
    loop {
        let fwd = forward_cached(&theta, &enc)?;
        let hard = hard_feasibility(&fwd.o.view(), instance);
        let j_val = objective_value(instance, &hard.starts);
        let greedy = greedy_decode(&fwd.o.view(), instance);
        let g_val = objective_value(instance, &greedy.starts);
        for (s, v) in [(hard, j_val), (greedy, g_val)] {
            if v < best_value {
                best_value = v;
                best_schedule = s;
            }
        }
        if k == 0 {
            initial_value = best_value;
            lambda = hyper.eps * j_val;
        }
        if j_val < best_j {
            best_j = j_val;
            theta_best = theta.clone();
            last_j_gain = k;
        }
        if best_value <= 0.0 {
            break;
        }

        let (soft, g_o) = soft_surrogate_grad(&fwd.o.view(), instance, phi);
        let grads = backward(&theta, &fwd, &enc, &g_o.view());
        let norm_sq = grads_dot(&grads, &grads);
        if k == 0 {
            inf_surrogate = soft.value;
        }
        let target = inf_surrogate - lambda;
        if soft.value < inf_surrogate {
            inf_surrogate = soft.value;
            last_surrogate_gain = k;
        }
        if !(norm_sq >= 1e-18) {
            flat = true;
            trace.push(TraceRow {
                k,
                surrogate: soft.value,
                objective: j_val,
                lambda,
                phi,
                step: 0.0,
            });
            break;
        }
        let step = polyak_step(soft.value, target, norm_sq);
        trace.push(TraceRow {
            k,
            surrogate: soft.value,
            objective: j_val,
            lambda,
            phi,
            step,
        });
        theta.axpy(-step, &grads);
        if k - last_surrogate_gain > hyper.b {
            lambda /= 2.0;
            phi += hyper.dphi;
            theta = theta_best.clone();
            last_surrogate_gain = k;
            stagnation_events += 1;
        }
        if k - last_j_gain > hyper.b_stop || k + 1 >= hyper.max_iters {
            break;
        }
        k += 1;
    }
    Ok(OnlineResult {
        params: theta_best,
        schedule: best_schedule,
        value: best_value,
        initial_value,
        iterations: k + 1,
        stagnation_events,
        flat_gradient_exit: flat,
        trace,
    })
}

pub fn write_trace<W: Write>(trace: &[TraceRow], out: &mut W) -> Result<()> {
    writeln!(out, "k,surrogate,objective,lambda,phi,step")?;
    for r in trace {
        writeln!(out, "{},{},{},{},{},{}", r.k, r.surrogate, r.objective, r.lambda, r.phi, r.step)?;
    }
    Ok(())
}
