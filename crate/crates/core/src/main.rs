use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spikegh::distributions::{
    fit_gh_to_truncated_normal, kl_from_half_normal, FitOptions, DEFAULT_ALPHA_MAX, DEFAULT_FIT_SAMPLES,
    DEFAULT_FIT_SEED,
};
use spikegh::experiment::{
    create_out_dir, load_dataset, load_fit, run_sampler, ComparisonReport, Dataset, ExperimentConfig, SamplerChoice,
    SamplerRun, FIT_FILE,
};
use spikegh::io;
use spikegh::samplers::SamplerKind;
use spikegh::simulation::generate;
use spikegh::Error;

/// Sparse spike-train restoration with BGH and BTG samplers.
#[derive(Debug, Parser)]
#[command(name = "spikegh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the GH approximation of N+(0,1) and write nu_n.toml.
    Fit(FitArgs),
    /// Simulate a dataset (y.csv, truth.csv, scenario.toml).
    Generate(CommonArgs),
    /// Run chains of one or both samplers and write them out.
    Run(CommonArgs),
    /// Run both samplers and report MPSRF traces, posterior means and the convergence ratio.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FIT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_FIT_SAMPLES)]
    samples: usize,
    /// Upper bound on alpha during the fit.
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: f64,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sampler: Option<SamplerChoice>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Base seed; chain j uses seed + j. Also reseeds the simulated scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep the noise variance at the scenario value.
    #[arg(long)]
    fixed_noise: bool,
    /// Sample the impulse-response scale.
    #[arg(long)]
    sample_scale: bool,
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.sampler {
            cfg.sampler = s;
        }
        if let Some(j) = self.chains {
            cfg.chains = j;
        }
        if let Some(i) = self.iterations {
            cfg.mcmc.iterations = i;
            cfg.bgh_iterations = None;
            cfg.btg_iterations = None;
        }
        if self.batch.is_some() {
            cfg.batch = self.batch;
        }
        if let Some(r) = self.threshold {
            cfg.threshold = r;
        }
        if let Some(s) = self.seed {
            cfg.mcmc.seed = s;
            cfg.scenario.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.fixed_noise |= self.fixed_noise;
        cfg.mcmc.sample_ir_scale |= self.sample_scale;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } => 1,
        Error::Io { .. } => 3,
        _ => 2,
    }
}

fn cmd_fit(a: &FitArgs) -> Result<(), Error> {
    let opts = FitOptions {
        alpha_max: a.alpha_max,
        ..FitOptions::default()
    };
    let fit = fit_gh_to_truncated_normal(a.samples, a.seed, &opts)?;
    create_out_dir(&a.out)?;
    let path = a.out.join(FIT_FILE);
    fit.save(&path)?;
    let p = fit.nu_n;
    println!(
        "nu_N: lambda={} alpha={} beta={} delta={} mu={}",
        p.lambda, p.alpha, p.beta, p.delta, p.mu
    );
    println!("KL (sample estimate): {:.6} nats", fit.fit_kl_estimate);
    println!("KL (quadrature):      {:.6} nats", kl_from_half_normal(&p));
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_generate(a: &CommonArgs) -> Result<(), Error> {
    let cfg = a.config()?;
    let g = generate(&cfg.scenario)?;
    create_out_dir(&cfg.out)?;
    io::write_vector_csv(&cfg.out.join("y.csv"), g.obs.y().as_slice())?;
    io::write_truth_csv(&cfg.out.join("truth.csv"), &g.truth)?;
    io::write_toml(&cfg.out.join("scenario.toml"), &cfg.scenario)?;
    io::write_toml(
        &cfg.out.join("dataset.toml"),
        &DatasetMeta {
            realized_snr_db: g.snr_db,
            amp_rescale: g.amp_rescale,
            n_obs: g.obs.n(),
            sites: g.obs.m(),
        },
    )?;
    println!(
        "generated N={} M={} spikes={} SNR={:.10} dB into {}",
        g.obs.n(),
        g.obs.m(),
        g.truth.support_size(),
        g.snr_db,
        cfg.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct DatasetMeta {
    realized_snr_db: f64,
    amp_rescale: f64,
    n_obs: usize,
    sites: usize,
}

/// Runs every requested sampler before anything is written.
fn run_all(cfg: &ExperimentConfig, kinds: &[SamplerKind]) -> Result<(Vec<SamplerRun>, Dataset), Error> {
    let nu = if kinds.contains(&SamplerKind::Bgh) {
        Some(load_fit(&cfg.fit_path())?.nu_n)
    } else {
        None
    };
    let data = load_dataset(cfg)?;
    let runs = kinds
        .iter()
        .map(|&kind| run_sampler(cfg, &data, kind, nu.as_ref()))
        .collect::<Result<Vec<_>, Error>>()?;
    create_out_dir(&cfg.out)?;
    for run in &runs {
        run.write_chains(&cfg.out, &run.metadata(cfg, &data, nu.as_ref()))?;
        if !run.trace.is_empty() {
            run.write_summaries(&cfg.out, data.truth.as_ref())?;
        }
    }
    Ok((runs, data))
}

fn describe(run: &SamplerRun) {
    let conv = run
        .converged_at
        .map_or_else(|| "not converged".to_string(), |c| format!("converged at {c}"));
    let r = run.trace.last().map_or_else(|| "n/a".into(), |p| format!("{:.4}", p.r));
    print!("{}: {} chains, final R {r}, {conv}", run.kind, run.chains.len());
    if let Some(m) = run.metrics {
        print!(
            ", recall {:.2} precision {:.2} rmse {:.4e}",
            m.recall, m.precision, m.rmse
        );
    }
    println!();
}

fn cmd_run(a: &CommonArgs) -> Result<(), Error> {
    let cfg = a.config()?;
    for run in run_all(&cfg, &cfg.sampler.kinds())?.0 {
        describe(&run);
    }
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn cmd_compare(a: &CommonArgs) -> Result<(), Error> {
    let mut cfg = a.config()?;
    cfg.sampler = SamplerChoice::Both;
    if cfg.chains < 2 {
        return Err(Error::Config("compare needs at least 2 chains".into()));
    }
    let (runs, data) = run_all(&cfg, &[SamplerKind::Bgh, SamplerKind::Btg])?;
    let report = ComparisonReport::new(&cfg, &data, &runs[0], &runs[1]);
    let path: &Path = &cfg.out.join("report.toml");
    io::write_toml(path, &report)?;
    for run in &runs {
        describe(run);
    }
    match report.convergence_ratio {
        Some(r) => println!("convergence ratio BTG/BGH: {r:.2}"),
        None => println!("convergence ratio BTG/BGH: n/a"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
