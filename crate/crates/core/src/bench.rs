//! Baselines and the evaluation harness.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{greedy_decode, sampling_decode, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::model::{evaluate_schedule, sample_instance, schedule_from_sequence, Instance, Job, ObjectiveKind, Schedule};
use crate::nn::{encode_input, forward, Params};
use crate::online::{online_learn, OnlineHyper};
use crate::oracle::{subset_dp, DEFAULT_DP_CAP};
use crate::tiform::{build_time_indexed, lp_lower_bound, mip_best_effort, sample_from_lp, DEFAULT_LP_SAMPLES};
use crate::train::{gap_percent, Gap};

pub const DEFAULT_SHRINK: usize = 4;
/// Lower-bound slack allowed when checking `LB <= objective`.
pub const LB_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Supervised+greedy")]
    Greedy,
    #[serde(rename = "Supervised+sampling")]
    Sampling,
    #[serde(rename = "Supervised+online")]
    Online,
    #[serde(rename = "LP+sampling")]
    LpSampling,
    #[serde(rename = "Shrink+dive")]
    ShrinkDive,
    #[serde(rename = "Random")]
    Random,
    #[serde(rename = "Oracle")]
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Greedy,
        Method::Sampling,
        Method::Online,
        Method::LpSampling,
        Method::ShrinkDive,
        Method::Random,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Greedy => "Supervised+greedy",
            Method::Sampling => "Supervised+sampling",
            Method::Online => "Supervised+online",
            Method::LpSampling => "LP+sampling",
            Method::ShrinkDive => "Shrink+dive",
            Method::Random => "Random",
            Method::Oracle => "Oracle",
        }
    }

    pub fn supervised(self) -> bool {
        matches!(self, Method::Greedy | Method::Sampling | Method::Online)
    }
}

/// Best of `k` schedules sampled from the LP relaxation. The time cap is
/// checked between rounds; the incumbent is returned on expiry.
pub fn benchmark_lp_sampling<R: Rng + ?Sized>(
    instance: &Instance,
    k: usize,
    time_cap: f64,
    rng: &mut R,
) -> Result<(Schedule, f64)> {
    let started = Instant::now();
    let cap = Duration::from_secs_f64(time_cap.max(0.0).min(1e6));
    let model = build_time_indexed(instance)?;
    let (_, frac) = lp_lower_bound(instance)?;
    let mut best: Option<(Schedule, f64)> = None;
    for round in 0..k.max(1) {
        if round > 0 && started.elapsed() >= cap {
            break;
        }
        let s = sample_from_lp(instance, &model, &frac, rng);
        let v = evaluate_schedule(instance, &s)?;
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((s, v));
        }
    }
    let (s, _) = best.expect("at least one round");
    Ok((s, started.elapsed().as_secs_f64()))
}

/// Divides every time quantity by `shrink`, rounding up. POWER weights are
/// multiplied by `shrink^a` to keep costs on the original scale.
pub fn shrink_instance(instance: &Instance, shrink: usize) -> Result<Instance> {
    if shrink < 2 {
        return Err(Error::Config("shrink factor must be at least 2".into()));
    }
    let s = shrink as f64;
    let power = instance.kind() == ObjectiveKind::Power;
    let jobs: Vec<Job> = instance
        .jobs()
        .iter()
        .map(|job| {
            let mut out = job.clone();
            out.p = job.p.div_ceil(shrink);
            out.r = job.r.div_ceil(shrink);
            out.d = job.d.map(|d| d.div_ceil(shrink));
            if power {
                out.w = job.w * s.powf(job.a.unwrap_or(1.0));
            }
            out
        })
        .collect();
    let min_h = jobs.iter().map(|j| j.r).max().unwrap_or(0) + jobs.iter().map(|j| j.p).sum::<usize>();
    Instance::new(jobs, instance.objective(), instance.horizon().div_ceil(shrink).max(min_h))
}

/// Solves a shrunk copy with an LP-sampling warm start and the dive, then
/// replays the resulting job order on the original instance.
pub fn benchmark_shrink_ip<R: Rng + ?Sized>(
    instance: &Instance,
    shrink: usize,
    time_cap: f64,
    rng: &mut R,
) -> Result<(Schedule, f64)> {
    let started = Instant::now();
    let small = shrink_instance(instance, shrink)?;
    let (warm, _) = benchmark_lp_sampling(&small, DEFAULT_LP_SAMPLES, time_cap, rng)?;
    let left = (time_cap - started.elapsed().as_secs_f64()).max(0.0);
    let solved = mip_best_effort(&small, &warm, left)?;
    let lifted = schedule_from_sequence(instance, &solved.sequence());
    Ok((lifted, started.elapsed().as_secs_f64()))
}

pub fn random_sequence<R: Rng + ?Sized>(instance: &Instance, rng: &mut R) -> Schedule {
    let mut seq: Vec<usize> = (0..instance.n()).collect();
    seq.shuffle(rng);
    schedule_from_sequence(instance, &seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cases: Vec<u8>,
    pub sizes: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    pub p_max: usize,
    pub samples: usize,
    pub lp_samples: usize,
    pub shrink: usize,
    /// Seconds per instance for each benchmark method.
    pub time_cap: f64,
    pub online: OnlineHyper,
    pub params: Option<PathBuf>,
    pub methods: Vec<Method>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cases: vec![2, 9, 11],
            sizes: vec![10, 14],
            instances: 5,
            seed: 0,
            p_max: 20,
            samples: DEFAULT_SAMPLES,
            lp_samples: DEFAULT_LP_SAMPLES,
            shrink: DEFAULT_SHRINK,
            time_cap: 30.0,
            online: OnlineHyper::default(),
            params: None,
            methods: Method::ALL.to_vec(),
        }
    }
}

/// One method on one instance, with everything needed to re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub case: u8,
    pub n: usize,
    pub index: usize,
    pub method: Method,
    pub instance: Instance,
    pub lower_bound: f64,
    pub starts: Option<Vec<usize>>,
    pub objective: Option<f64>,
    pub time: f64,
    /// Why no schedule was produced.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub case: u8,
    pub n: usize,
    pub method: Method,
    pub gap_avg: f64,
    pub gap_max: f64,
    pub time_avg: f64,
    pub time_max: f64,
    pub solved: usize,
    /// Instances whose lower bound vanished; their gaps are absolute objectives.
    pub absolute: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<RawRecord>,
    pub rows: Vec<ReportRow>,
}

pub fn eval_instance(case: u8, n: usize, index: usize, cfg: &EvalConfig) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((case as u64) << 48) | ((n as u64) << 24) | index as u64);
    sample_instance(case, n, cfg.p_max, &mut rng)
}

fn method_rng(cfg: &EvalConfig, case: u8, n: usize, index: usize, method: Method) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000 ^ method as u64);
    rng.set_stream(((case as u64) << 48) | ((n as u64) << 24) | index as u64);
    rng
}

fn run_method(
    method: Method,
    inst: &Instance,
    params: Option<&Params>,
    cfg: &EvalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Schedule, f64)> {
    let started = Instant::now();
    let supervised = |p: &Params| -> Result<_> { forward(p, &encode_input(inst, &p.arch)?) };
    let s = match method {
        Method::Greedy | Method::Sampling | Method::Online => {
            let p = params.ok_or_else(|| Error::Config("no trained parameters".into()))?;
            match method {
                Method::Greedy => greedy_decode(&supervised(p)?.view(), inst),
                Method::Sampling => sampling_decode(&supervised(p)?.view(), inst, rng, cfg.samples),
                _ => online_learn(p, inst, &cfg.online)?.schedule,
            }
        }
        Method::LpSampling => return benchmark_lp_sampling(inst, cfg.lp_samples, cfg.time_cap, rng),
        Method::ShrinkDive => return benchmark_shrink_ip(inst, cfg.shrink, cfg.time_cap, rng),
        Method::Random => random_sequence(inst, rng),
        Method::Oracle => {
            if inst.n() > DEFAULT_DP_CAP {
                return Err(Error::OracleSize(format!("n = {} exceeds the oracle cap", inst.n())));
            }
            subset_dp(inst, DEFAULT_DP_CAP)?.0
        }
    };
    Ok((s, started.elapsed().as_secs_f64()))
}

/// Runs every configured method on every grid instance.
pub fn run_evaluation(cfg: &EvalConfig, params: Option<&Params>) -> Result<EvalReport> {
    let mut grid = Vec::new();
    for &case in &cfg.cases {
        for &n in &cfg.sizes {
            for index in 0..cfg.instances {
                grid.push((case, n, index));
            }
        }
    }
    let per_instance = grid
        .par_iter()
        .map(|&(case, n, index)| {
            let inst = eval_instance(case, n, index, cfg)?;
            let lb = lp_lower_bound(&inst)?.0;
            let mut out = Vec::with_capacity(cfg.methods.len());
            for &method in &cfg.methods {
                let mut rng = method_rng(cfg, case, n, index, method);
                let (starts, objective, time, note) = if method.supervised() && params.is_none() {
                    (None, None, 0.0, Some("unavailable".to_string()))
                } else {
                    match run_method(method, &inst, params, cfg, &mut rng) {
                        Ok((s, t)) => {
                            let v = evaluate_schedule(&inst, &s)?;
                            (Some(s.starts), Some(v), t, None)
                        }
                        Err(e @ (Error::Capacity(_) | Error::OracleSize(_) | Error::Lp(_))) => {
                            (None, None, 0.0, Some(e.to_string()))
                        }
                        Err(e) => return Err(e),
                    }
                };
                out.push(RawRecord {
                    case,
                    n,
                    index,
                    method,
                    instance: inst.clone(),
                    lower_bound: lb,
                    starts,
                    objective,
                    time,
                    note,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<RawRecord> = per_instance.into_iter().flatten().collect();
    let rows = revalidate(&records)?;
    Ok(EvalReport { records, rows })
}

/// Re-checks every stored schedule against its instance, confirms the stored
/// objective and the lower-bound ordering, then aggregates.
pub fn revalidate(records: &[RawRecord]) -> Result<Vec<ReportRow>> {
    let mut groups: BTreeMap<(u8, usize, Method), Vec<(Gap, f64)>> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((r.case, r.n, r.method)).or_default();
        let (Some(starts), Some(stored)) = (&r.starts, r.objective) else {
            continue;
        };
        let s = Schedule::new(starts.clone());
        let v = evaluate_schedule(&r.instance, &s)?;
        if (v - stored).abs() > 1e-9 * v.abs().max(1.0) {
            return Err(Error::Consistency(format!(
                "case {} n {} #{} {}: stored objective {stored} but schedule evaluates to {v}",
                r.case,
                r.n,
                r.index,
                r.method.name()
            )));
        }
        if r.lower_bound > v + LB_SLACK {
            return Err(Error::Consistency(format!(
                "case {} n {} #{} {}: lower bound {} above objective {v}",
                r.case,
                r.n,
                r.index,
                r.method.name(),
                r.lower_bound
            )));
        }
        entry.push((gap_percent(v, r.lower_bound), r.time));
    }
    Ok(groups
        .into_iter()
        .map(|((case, n, method), entries)| aggregate(case, n, method, &entries))
        .collect())
}

pub fn aggregate(case: u8, n: usize, method: Method, entries: &[(Gap, f64)]) -> ReportRow {
    let rel: Vec<f64> = entries.iter().filter(|(g, _)| !g.absolute).map(|(g, _)| g.value).collect();
    let gaps: Vec<f64> = if rel.is_empty() {
        entries.iter().map(|(g, _)| g.value).collect()
    } else {
        rel
    };
    let times: Vec<f64> = entries.iter().map(|&(_, t)| t).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let max = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::max);
    ReportRow {
        case,
        n,
        method,
        gap_avg: mean(&gaps),
        gap_max: max(&gaps),
        time_avg: mean(&times),
        time_max: max(&times),
        solved: entries.len(),
        absolute: entries.iter().filter(|(g, _)| g.absolute).count(),
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: &mut W) -> Result<()> {
    writeln!(out, "case,n,method,gap_avg,gap_max,time_avg,time_max,solved")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.case,
            r.n,
            r.method.name(),
            num(r.gap_avg),
            num(r.gap_max),
            num(r.time_avg),
            num(r.time_max),
            r.solved
        )?;
    }
    Ok(())
}

pub fn write_raw(records: &[RawRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRecord>> {
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// One bar chart of mean gap per method for each (case, n).
pub fn write_plots(rows: &[ReportRow], dir: &Path) -> Result<Vec<PathBuf>> {
    use plotters::prelude::*;
    std::fs::create_dir_all(dir)?;
    let mut by_group: BTreeMap<(u8, usize), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        by_group.entry((r.case, r.n)).or_default().push(r);
    }
    let mut written = Vec::new();
    for ((case, n), group) in by_group {
        let path = dir.join(format!("gap_case{case}_n{n}.svg"));
        let bars: Vec<(usize, f64)> = group
            .iter()
            .enumerate()
            .filter(|(_, r)| r.gap_avg.is_finite())
            .map(|(i, r)| (i, r.gap_avg))
            .collect();
        let top = bars.iter().map(|b| b.1).fold(1.0, f64::max) * 1.1;
        let labels: Vec<&str> = group.iter().map(|r| r.method.name()).collect();
        let draw = || -> std::result::Result<(), Box<dyn std::error::Error>> {
            let root = SVGBackend::new(&path, (720, 420)).into_drawing_area();
            root.fill(&WHITE)?;
            let mut chart = ChartBuilder::on(&root)
                .caption(format!("case {case}, n = {n}: mean gap (%)"), ("sans-serif", 18))
                .margin(10)
                .x_label_area_size(40)
                .y_label_area_size(50)
                .build_cartesian_2d((0..labels.len()).into_segmented(), 0.0..top)?;
            chart
                .configure_mesh()
                .disable_x_mesh()
                .x_label_formatter(&|x| match x {
                    SegmentValue::CenterOf(i) => labels.get(*i).copied().unwrap_or("").to_string(),
                    _ => String::new(),
                })
                .draw()?;
            chart.draw_series(Histogram::vertical(&chart).style(BLUE.filled()).margin(8).data(bars.iter().copied()))?;
            root.present()?;
            Ok(())
        };
        draw().map_err(|e| Error::Consistency(format!("plot {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
