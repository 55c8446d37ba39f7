mod manifest;
mod samples;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dpmix::data::{load_dataset, standardize, Dataset};
use dpmix::mcmc::{run_chain, McmcConfig, RunMode, SampleRecord};
use dpmix::sim::{generate_case, run_benchmark, BenchmarkReport, SimCase};
use dpmix::state::PriorConfig;
use dpmix::summary::summarize;
use manifest::RunManifest;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "dpmix", version, about = "Nonparametric clustering with variable selection for mixed, partially observed data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the model to a CSV dataset
    Fit(FitArgs),
    /// Summarize the sample files produced by `fit`
    Summarize(SummarizeArgs),
    /// Write a generated simulation case to disk
    Simulate(SimulateArgs),
    /// Run the replicated simulation benchmark
    Benchmark(BenchmarkArgs),
}

/// Flags shared by fitting commands, mirroring the sampler and prior
/// configuration fields; unset flags fall back to the config file, then to
/// the defaults.
#[derive(Args, Debug, Clone)]
struct ConfigFlags {
    /// JSON config file; any subset of the sampler fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_chains: Option<usize>,
    #[arg(long)]
    s_alpha: Option<f64>,
    #[arg(long)]
    s_lambda: Option<f64>,
    #[arg(long)]
    s_eta: Option<f64>,
    #[arg(long)]
    swap_prob: Option<f64>,
    #[arg(long)]
    l_restricted: Option<usize>,
    #[arg(long)]
    l_gamma: Option<usize>,
    #[arg(long)]
    z_block: Option<usize>,
    /// vs | novs | cont
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    joint_every_iteration: bool,
    // prior fields
    #[arg(long)]
    a_lambda: Option<f64>,
    #[arg(long)]
    b_lambda: Option<f64>,
    #[arg(long)]
    a_eta: Option<f64>,
    #[arg(long)]
    b_eta: Option<f64>,
    #[arg(long)]
    a_alpha: Option<f64>,
    #[arg(long)]
    b_alpha: Option<f64>,
    #[arg(long)]
    wishart_df: Option<f64>,
    /// inclusion prior probability, applied to every variable
    #[arg(long)]
    rho: Option<f64>,
}

fn parse_mode(s: &str) -> Result<RunMode> {
    match s {
        "vs" => Ok(RunMode::Vs),
        "novs" => Ok(RunMode::Novs),
        "cont" => Ok(RunMode::Cont),
        other => Err(usage(anyhow!("unknown mode '{other}' (expected vs|novs|cont)"))),
    }
}

impl ConfigFlags {
    fn mcmc_config(&self) -> Result<McmcConfig> {
        let mut cfg: McmcConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(anyhow!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| usage(anyhow!("bad config {}: {e}", path.display())))?
            }
            None => McmcConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        over!(iterations, burn_in, thin, seed, n_chains, s_alpha, s_lambda, s_eta, swap_prob,
              l_restricted, l_gamma, z_block);
        if let Some(m) = &self.mode {
            cfg.mode = parse_mode(m)?;
        }
        if self.joint_every_iteration {
            cfg.joint_every_iteration = true;
        }
        cfg.validate().map_err(|e| usage(e.into()))?;
        Ok(cfg)
    }

    fn prior_config(&self, p: usize) -> Result<PriorConfig> {
        let mut prior = PriorConfig::defaults_for(p);
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { prior.$f = v; } )* };
        }
        over!(a_lambda, b_lambda, a_eta, b_eta, a_alpha, b_alpha, wishart_df);
        if let Some(r) = self.rho {
            prior.rho = vec![r; p];
        }
        prior.validate(p).map_err(|e| usage(e.into()))?;
        Ok(prior)
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV data file (header row; NA or empty for missing)
    #[arg(long)]
    data: PathBuf,
    /// JSON schema file (array of variable descriptors)
    #[arg(long)]
    schema: PathBuf,
    /// output directory (env DPMIX_OUT_DIR overrides)
    #[arg(long, default_value = "dpmix_out")]
    out: PathBuf,
    /// worker threads (env DPMIX_WORKERS overrides; default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct SummarizeArgs {
    /// directory containing chain_*.csv sample files
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value = "dpmix_out")]
    out: PathBuf,
    /// inclusion threshold ρ used for γ̂ (default 0.5)
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// case id: 1a 1b 1c 1d 2a 2b 2c 2d
    #[arg(long)]
    case: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long, default_value = "dpmix_out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// comma-separated case ids
    #[arg(long, default_value = "1a")]
    cases: String,
    /// comma-separated modes (vs|novs|cont)
    #[arg(long, default_value = "vs")]
    modes: String,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    /// 100 replicates × 20,000 iterations instead of the desk-scale defaults
    #[arg(long)]
    full_paper_budget: bool,
    #[arg(long, default_value = "dpmix_out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    cfg: ConfigFlags,
}

/// Wrapper marking an error as a usage/validation failure (exit 2 instead
/// of 1).
#[derive(Debug)]
struct UsageError(anyhow::Error);
impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}
impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(e))
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                2
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}

fn out_dir(flag: PathBuf) -> PathBuf {
    match std::env::var("DPMIX_OUT_DIR") {
        Ok(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag,
    }
}

fn worker_pool(flag: Option<usize>) -> Result<()> {
    let n = match std::env::var("DPMIX_WORKERS") {
        Ok(v) if !v.is_empty() => Some(v.parse().map_err(|e| usage(anyhow!("DPMIX_WORKERS: {e}")))?),
        _ => flag,
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    Ok(())
}

fn ensure_readable(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!(usage(anyhow!("{what} file not found: {}", path.display())));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Summarize(a) => cmd_summarize(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Benchmark(a) => cmd_benchmark(a),
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let start = Instant::now();
    ensure_readable(&a.data, "data")?;
    ensure_readable(&a.schema, "schema")?;
    let out = out_dir(a.out);
    std::fs::create_dir_all(&out)?;
    worker_pool(a.workers)?;

    let raw = load_dataset(&a.data, &a.schema).map_err(|e| usage(e.into()))?;
    let ds = standardize(&raw).map_err(|e| usage(e.into()))?;
    let cfg = a.cfg.mcmc_config()?;
    let prior = a.cfg.prior_config(ds.p())?;

    let chains: Vec<(u64, Vec<SampleRecord>)> = (0..cfg.n_chains.max(1) as u64)
        .into_par_iter()
        .map(|c| run_chain(&ds, &prior, &cfg, c).map(|r| (c, r)))
        .collect::<dpmix::Result<_>>()?;

    let mut man = RunManifest::new("fit");
    man.hash_input(&a.data)?;
    man.hash_input(&a.schema)?;
    man.config = serde_json::to_value(&cfg)?;
    man.prior = serde_json::to_value(&prior)?;
    man.seed = cfg.seed;
    for (c, recs) in &chains {
        let path = out.join(format!("chain_{c}.csv"));
        samples::write_records(&path, recs)?;
        man.add_artifact(&path);
        man.chain_streams.push(*c);
    }
    man.wall_secs = start.elapsed().as_secs_f64();
    man.write(&out)?;
    println!("fit: {} chains -> {}", chains.len(), out.display());
    Ok(())
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    let start = Instant::now();
    let out = out_dir(a.out);
    std::fs::create_dir_all(&out)?;

    let mut chain_paths: Vec<PathBuf> = std::fs::read_dir(&a.samples)
        .map_err(|e| usage(anyhow!("cannot read {}: {e}", a.samples.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("chain_") && n.ends_with(".csv"))
        })
        .collect();
    chain_paths.sort();
    if chain_paths.is_empty() {
        bail!(usage(anyhow!("no chain_*.csv files in {}", a.samples.display())));
    }
    let chains: Vec<Vec<SampleRecord>> =
        chain_paths.iter().map(|p| samples::read_records(p)).collect::<Result<_>>()?;

    let p = chains[0][0].gamma.len();
    let mut prior = PriorConfig::defaults_for(p);
    if let Some(r) = a.rho {
        prior.rho = vec![r; p];
    }
    let s = summarize(&chains, &prior)?;

    let summary_json = serde_json::json!({
        "n_chains": chains.len(),
        "n_samples": chains.iter().map(|c| c.len()).sum::<usize>(),
        "modal_m": s.modal_m(),
        "m_posterior": s.m_posterior,
        "gamma_prob": s.gamma_prob,
        "gamma_hat": s.gamma_hat,
        "phi_hat": s.phi_hat,
    });
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary_json)?)?;

    let p_hat_path = out.join("p_hat.csv");
    {
        let mut w = csv::Writer::from_path(&p_hat_path)?;
        let header: Vec<String> = (0..s.p_hat.ncols()).map(|k| format!("cluster_{k}")).collect();
        w.write_record(&header)?;
        for i in 0..s.p_hat.nrows() {
            let row: Vec<String> = (0..s.p_hat.ncols()).map(|k| s.p_hat[(i, k)].to_string()).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
    }

    let trace_path = out.join("trace.csv");
    {
        let mut w = csv::Writer::from_path(&trace_path)?;
        w.write_record(["chain", "iteration", "p1", "m", "lambda", "eta", "alpha", "log_marginal"])?;
        for (c, chain) in chains.iter().enumerate() {
            for r in chain {
                let p1 = r.gamma.iter().filter(|&&g| g).count();
                w.write_record([
                    c.to_string(),
                    r.iteration.to_string(),
                    p1.to_string(),
                    r.m.to_string(),
                    r.lambda.to_string(),
                    r.eta.to_string(),
                    r.alpha.to_string(),
                    r.log_marginal.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }

    let mut man = RunManifest::new("summarize");
    for p in &chain_paths {
        man.hash_input(p)?;
    }
    for p in [&summary_path, &p_hat_path, &trace_path] {
        man.add_artifact(p);
    }
    man.wall_secs = start.elapsed().as_secs_f64();
    man.write(&out)?;
    println!("summarize: modal M = {} -> {}", s.modal_m(), out.display());
    Ok(())
}

fn write_dataset_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<&str> = ds.schema.iter().map(|s| s.name.as_str()).collect();
    w.write_record(&names)?;
    for i in 0..ds.n() {
        let row: Vec<String> = (0..ds.p())
            .map(|j| if ds.observed[(i, j)] { ds.y[(i, j)].to_string() } else { "NA".into() })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let case = SimCase::from_str(&a.case).map_err(|e| usage(e.into()))?;
    let out = out_dir(a.out);
    std::fs::create_dir_all(&out)?;
    let mut rng = dpmix::RngStream::new(a.seed, a.replicate as u64);
    let (ds, truth) = generate_case(case, &mut rng)?;

    let data_path = out.join(format!("case_{}_data.csv", case.id()));
    write_dataset_csv(&data_path, &ds)?;
    let schema_path = out.join(format!("case_{}_schema.json", case.id()));
    std::fs::write(&schema_path, serde_json::to_string_pretty(&ds.schema)?)?;
    let truth_path = out.join(format!("case_{}_truth.json", case.id()));
    std::fs::write(
        &truth_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "case": case.id(),
            "phi_true": truth.phi_true,
            "gamma_true": truth.gamma_true,
            "mixing": truth.mixing,
        }))?,
    )?;

    let mut man = RunManifest::new("simulate");
    man.seed = a.seed;
    for p in [&data_path, &schema_path, &truth_path] {
        man.add_artifact(p);
    }
    man.wall_secs = start.elapsed().as_secs_f64();
    man.write(&out)?;
    println!("simulate: case {} -> {}", case.id(), out.display());
    Ok(())
}

fn format_report(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<6} {:<5} {:>4}  {:>12} {:>12} {:>12} {:>10} {:>10} {:>12} {:>10}\n",
        "case", "mode", "reps", "Acc", "FI", "ARI", "M", "p1", "PVC", "CompT(s)"
    ));
    for r in &report.rows {
        let cell = |m: dpmix::sim::MetricSummary| format!("{:.2} ({:.2})", m.mean, m.sd);
        s.push_str(&format!(
            "{:<6} {:<5} {:>4}  {:>12} {:>12} {:>12} {:>10} {:>10} {:>12} {:>10}\n",
            r.case.id(),
            format!("{:?}", r.mode).to_lowercase(),
            r.replicates,
            cell(r.acc),
            cell(r.fi),
            cell(r.ari),
            cell(r.m),
            cell(r.p1),
            cell(r.pvc),
            format!("{:.1}", r.comp_secs.mean),
        ));
    }
    s
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let start = Instant::now();
    let out = out_dir(a.out);
    std::fs::create_dir_all(&out)?;
    worker_pool(a.workers)?;

    let cases: Vec<SimCase> = a
        .cases
        .split(',')
        .map(|s| SimCase::from_str(s.trim()).map_err(|e| usage(e.into())))
        .collect::<Result<_>>()?;
    let modes: Vec<RunMode> =
        a.modes.split(',').map(|s| parse_mode(s.trim())).collect::<Result<_>>()?;

    let mut cfg = a.cfg.mcmc_config()?;
    let mut replicates = a.replicates;
    if a.full_paper_budget {
        replicates = 100;
        cfg.iterations = 20_000;
        cfg.burn_in = 3_000;
    }
    let report = run_benchmark(&cases, &modes, replicates, &cfg)?;

    let report_path = out.join("benchmark.csv");
    {
        let mut w = csv::Writer::from_path(&report_path)?;
        w.write_record([
            "case", "mode", "replicates", "failed", "acc_mean", "acc_sd", "fi_mean", "fi_sd",
            "ari_mean", "ari_sd", "m_mean", "m_sd", "p1_mean", "p1_sd", "pvc_mean", "pvc_sd",
            "compt_mean", "compt_sd",
        ])?;
        for r in &report.rows {
            w.write_record([
                r.case.id().to_string(),
                format!("{:?}", r.mode).to_lowercase(),
                r.replicates.to_string(),
                r.failed.to_string(),
                r.acc.mean.to_string(),
                r.acc.sd.to_string(),
                r.fi.mean.to_string(),
                r.fi.sd.to_string(),
                r.ari.mean.to_string(),
                r.ari.sd.to_string(),
                r.m.mean.to_string(),
                r.m.sd.to_string(),
                r.p1.mean.to_string(),
                r.p1.sd.to_string(),
                r.pvc.mean.to_string(),
                r.pvc.sd.to_string(),
                r.comp_secs.mean.to_string(),
                r.comp_secs.sd.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let table = format_report(&report);
    let table_path = out.join("benchmark.txt");
    std::fs::write(&table_path, &table)?;
    let per_rep_path = out.join("replicates.json");
    std::fs::write(&per_rep_path, serde_json::to_string_pretty(&report.per_replicate)?)?;

    let mut man = RunManifest::new("benchmark");
    man.config = serde_json::to_value(&cfg)?;
    man.seed = cfg.seed;
    for p in [&report_path, &table_path, &per_rep_path] {
        man.add_artifact(p);
    }
    man.wall_secs = start.elapsed().as_secs_f64();
    man.write(&out)?;
    print!("{table}");
    Ok(())
}
