use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use umsched::bench::{read_raw, revalidate, run_evaluation, write_plots, write_raw, write_report_csv, EvalConfig};
use umsched::datagen::{build_training_set, DataGenConfig};
use umsched::decode::{greedy_decode, sampling_decode, DEFAULT_SAMPLES};
use umsched::model::{evaluate_schedule, sample_instance, Instance};
use umsched::nn::{encode_input, forward, Arch, Params};
use umsched::online::{online_learn, write_trace, OnlineHyper};
use umsched::train::{train_from_file, write_history, TrainConfig};
use umsched::{Error, Result};

#[derive(Parser)]
#[command(name = "umsched", version, about = "Learned single-machine scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled training set.
    GenData(GenData),
    /// Train network parameters on a dataset.
    Train(Train),
    /// Solve one instance with trained parameters.
    Solve(Solve),
    /// Run the evaluation grid.
    Bench(Bench),
    /// Re-validate a raw evaluation dump and rebuild the report.
    Report(Report),
    /// Draw random instances of a problem case.
    Sample(Sample),
}

#[derive(clap::Args)]
struct GenData {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n_lo: Option<usize>,
    #[arg(long)]
    n_hi: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha_max: Option<usize>,
    #[arg(long)]
    micro_p_max: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(clap::Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    /// Validation instances, one JSON object per line.
    #[arg(long)]
    val: PathBuf,
    /// Architecture JSON; the built-in default when omitted.
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long)]
    out_params: PathBuf,
    /// Per-epoch history CSV; defaults to `<out-params>.history.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    init_params: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    patience_epochs: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Greedy,
    Sampling,
    Online,
}

#[derive(clap::Args)]
struct Solve {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: SolveMethod,
    /// Sampling rounds.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Online hyperparameters as JSON.
    #[arg(long)]
    online_config: Option<PathBuf>,
    /// Per-iteration CSV of the online run.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args)]
struct Bench {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(clap::Args)]
struct Report {
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for SVG plots.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct Sample {
    #[arg(long)]
    case: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 20)]
    p_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn config_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn workers(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--workers: {e}")))?;
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    BufReader::new(File::open(path)?)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            serde_json::from_str(&l?).map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn gen_data(a: GenData) -> Result<()> {
    workers(a.workers)?;
    let mut cfg: DataGenConfig = config_or_default(a.config.as_deref())?;
    set(&mut cfg.case, a.case);
    set(&mut cfg.count, a.count);
    set(&mut cfg.n_lo, a.n_lo);
    set(&mut cfg.n_hi, a.n_hi);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.alpha_max, a.alpha_max);
    set(&mut cfg.micro_p_max, a.micro_p_max);
    print_json(&build_training_set(&cfg, &a.out)?)
}

fn train(a: Train) -> Result<()> {
    let mut cfg: TrainConfig = config_or_default(a.config.as_deref())?;
    set(&mut cfg.batch_size, a.batch_size);
    set(&mut cfg.lr0, a.lr0);
    set(&mut cfg.lr_decay, a.lr_decay);
    set(&mut cfg.patience_epochs, a.patience_epochs);
    set(&mut cfg.max_epochs, a.max_epochs);
    set(&mut cfg.seed, a.seed);
    let arch: Arch = config_or_default(a.arch.as_deref())?;
    let init = a.init_params.as_deref().map(Params::load).transpose()?;
    let val = read_instances(&a.val)?;
    let (params, history) = train_from_file(&a.data, &val, &arch, &cfg, init)?;
    params.save(&a.out_params)?;
    let hist_path = a.history.unwrap_or_else(|| {
        let mut p = a.out_params.clone().into_os_string();
        p.push(".history.csv");
        p.into()
    });
    let mut w = BufWriter::new(File::create(&hist_path)?);
    write_history(&history, &mut w)?;
    w.flush()?;
    let best = history.iter().map(|h| h.val_gap_percent).fold(f64::INFINITY, f64::min);
    print_json(&serde_json::json!({ "epochs": history.len() - 1, "best_val_gap_percent": best }))
}

fn solve(a: Solve) -> Result<()> {
    let params = Params::load(&a.params)?;
    let inst: Instance = read_json(&a.instance)?;
    let schedule = match a.method {
        SolveMethod::Greedy | SolveMethod::Sampling => {
            let o = forward(&params, &encode_input(&inst, &params.arch)?)?;
            if matches!(a.method, SolveMethod::Greedy) {
                greedy_decode(&o.view(), &inst)
            } else {
                sampling_decode(&o.view(), &inst, &mut ChaCha8Rng::seed_from_u64(a.seed), a.k)
            }
        }
        SolveMethod::Online => {
            let hyper: OnlineHyper = config_or_default(a.online_config.as_deref())?;
            let res = online_learn(&params, &inst, &hyper)?;
            if let Some(path) = &a.trace {
                let mut w = BufWriter::new(File::create(path)?);
                write_trace(&res.trace, &mut w)?;
                w.flush()?;
            }
            res.schedule
        }
    };
    let value = evaluate_schedule(&inst, &schedule)?;
    print_json(&serde_json::json!({ "starts": schedule.starts, "value": value }))
}

fn bench(a: Bench) -> Result<()> {
    workers(a.workers)?;
    let mut cfg: EvalConfig = config_or_default(a.config.as_deref())?;
    if a.params.is_some() {
        cfg.params = a.params;
    }
    let params = cfg.params.as_deref().map(Params::load).transpose()?;
    let report = run_evaluation(&cfg, params.as_ref())?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_raw(&report.records, &a.out_dir.join("raw.jsonl"))?;
    let mut w = BufWriter::new(File::create(a.out_dir.join("report.csv"))?);
    write_report_csv(&report.rows, &mut w)?;
    w.flush()?;
    write_plots(&report.rows, &a.out_dir.join("plots"))?;
    write_report_csv(&report.rows, &mut std::io::stdout().lock())
}

fn report(a: Report) -> Result<()> {
    let rows = revalidate(&read_raw(&a.input)?)?;
    if let Some(dir) = &a.plots {
        write_plots(&rows, dir)?;
    }
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_report_csv(&rows, &mut w)?;
            w.flush()?;
            Ok(())
        }
        None => write_report_csv(&rows, &mut std::io::stdout().lock()),
    }
}

fn sample(a: Sample) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut w = BufWriter::new(File::create(&a.out)?);
    for _ in 0..a.count {
        serde_json::to_writer(&mut w, &sample_instance(a.case, a.n, a.p_max, &mut rng)?)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
        Command::Sample(a) => sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
