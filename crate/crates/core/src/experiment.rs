//! Multi-chain experiments: data source, chain runs, convergence monitoring and reports.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    convergence_iteration, mpsrf_trace, posterior_mean, MultiChain, PosteriorSummary, TracePoint,
};
use crate::distributions::{FittedGhApprox, GhParams};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{Hyperparams, LatentState, Observation, ParametricIr};
use crate::samplers::{run_chains, ChainStore, MoveCounters, SamplerConfig, SamplerKind};
use crate::simulation::{generate, reconstruction_metrics, ReconstructionMetrics, Scenario};

pub const FIT_FILE: &str = "nu_n.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerChoice {
    Bgh,
    Btg,
    Both,
}

impl SamplerChoice {
    pub fn kinds(self) -> Vec<SamplerKind> {
        match self {
            SamplerChoice::Bgh => vec![SamplerKind::Bgh],
            SamplerChoice::Btg => vec![SamplerKind::Btg],
            SamplerChoice::Both => vec![SamplerKind::Bgh, SamplerKind::Btg],
        }
    }
}

impl std::str::FromStr for SamplerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bgh" => Ok(SamplerChoice::Bgh),
            "btg" => Ok(SamplerChoice::Btg),
            "both" => Ok(SamplerChoice::Both),
            other => Err(Error::Config(format!(
                "unknown sampler '{other}', expected bgh, btg or both"
            ))),
        }
    }
}

/// Observed data read from disk instead of simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    /// One observation per line.
    pub y: PathBuf,
    /// Dense `N×M` dictionary. Without it the parametric impulse response of the scenario is used.
    pub dictionary: Option<PathBuf>,
    /// `site, amplitude` ground truth, for reconstruction metrics.
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub data: Option<DataFiles>,
    pub sampler: SamplerChoice,
    pub chains: usize,
    /// Overrides `mcmc.iterations` for one sampler.
    pub bgh_iterations: Option<usize>,
    pub btg_iterations: Option<usize>,
    /// Batch size of the MPSRF trace; defaults to a twentieth of the recorded length.
    pub batch: Option<usize>,
    pub threshold: f64,
    /// Keep the noise variance at the scenario value instead of sampling it.
    pub fixed_noise: bool,
    /// Threads for running chains; 0 uses every available core.
    pub workers: usize,
    /// Fitted GH prior; defaults to `nu_n.toml` in the output directory.
    pub fit: Option<PathBuf>,
    pub out: PathBuf,
    pub mcmc: SamplerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            data: None,
            sampler: SamplerChoice::Both,
            chains: 4,
            bgh_iterations: None,
            btg_iterations: None,
            batch: None,
            threshold: 1.2,
            fixed_noise: false,
            workers: 0,
            fit: None,
            out: PathBuf::from("out"),
            mcmc: SamplerConfig {
                sample_noise_var: true,
                ..SamplerConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_toml(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be positive".into()));
        }
        if !(self.threshold > 1.0) {
            return Err(Error::Config(format!(
                "threshold must exceed 1, got {}",
                self.threshold
            )));
        }
        if self.batch.is_some_and(|b| b < 2) {
            return Err(Error::Config("batch must be at least 2".into()));
        }
        for kind in self.sampler.kinds() {
            self.sampler_config(kind, None).validate()?;
        }
        if self.data.is_none() {
            self.scenario.validate()?;
        }
        Ok(())
    }

    pub fn fit_path(&self) -> PathBuf {
        self.fit.clone().unwrap_or_else(|| self.out.join(FIT_FILE))
    }

    /// Sampler settings for one kind. A fixed noise variance or impulse-response
    /// scale starts, and stays, at the known value.
    pub fn sampler_config(&self, kind: SamplerKind, data: Option<&Dataset>) -> SamplerConfig {
        let mut cfg = self.mcmc.clone();
        let iters = match kind {
            SamplerKind::Bgh => self.bgh_iterations,
            SamplerKind::Btg => self.btg_iterations,
        };
        if let Some(i) = iters {
            cfg.iterations = i;
        }
        if self.fixed_noise {
            cfg.sample_noise_var = false;
            cfg.init.noise_var = self.scenario.noise_var;
        }
        if let Some(ir) = data.and_then(|d| d.obs.ir()) {
            if !cfg.sample_ir_scale {
                cfg.init.ir_scale = ir.scale;
            }
        }
        cfg
    }

    fn batch_for(&self, records: usize) -> usize {
        self.batch.unwrap_or((records / 20).max(2))
    }

    fn workers(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, usize::from),
            w => w,
        }
    }
}

/// Observation plus, when known, the spike train that produced it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub obs: Observation,
    pub truth: Option<LatentState>,
    pub snr_db: Option<f64>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let Some(files) = &cfg.data else {
        let g = generate(&cfg.scenario)?;
        return Ok(Dataset {
            obs: g.obs,
            truth: Some(g.truth),
            snr_db: Some(g.snr_db),
        });
    };
    let y = DVector::from_vec(io::read_vector_csv(&files.y)?);
    let obs = match &files.dictionary {
        Some(p) => Observation::new(y, io::read_matrix_csv(p)?)?,
        None => Observation::parametric(
            y,
            ParametricIr {
                scale: cfg.scenario.ir_scale,
                length: cfg.scenario.ir_length,
            },
        )?,
    };
    let truth = files
        .truth
        .as_deref()
        .map(|p| io::read_truth_csv(p, obs.m()))
        .transpose()?;
    Ok(Dataset {
        obs,
        truth,
        snr_db: None,
    })
}

/// Loads the fitted GH prior, pointing at the `fit` command when it is missing.
pub fn load_fit(path: &Path) -> Result<FittedGhApprox> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "no fitted GH prior at {}; run `spikegh fit` first (or set `fit` in the config)",
            path.display()
        )));
    }
    FittedGhApprox::load(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub counters: MoveCounters,
    pub birth_rate: f64,
    pub death_rate: f64,
    pub update_rate: f64,
    pub amp_var_rate: f64,
    pub ir_scale_rate: f64,
    pub final_hyper: Option<Hyperparams>,
}

impl ChainSummary {
    fn new(c: &ChainStore) -> Self {
        let counters = c.final_counters();
        Self {
            seed: c.seed,
            counters,
            birth_rate: counters.birth.rate(),
            death_rate: counters.death.rate(),
            update_rate: counters.update.rate(),
            amp_var_rate: counters.amp_var.rate(),
            ir_scale_rate: counters.ir_scale.rate(),
            final_hyper: c.len().checked_sub(1).map(|i| *c.hyper(i)),
        }
    }
}

/// Chains of one sampler and what was learned from them.
#[derive(Debug, Clone)]
pub struct SamplerRun {
    pub kind: SamplerKind,
    pub config: SamplerConfig,
    pub chains: Vec<ChainStore>,
    pub trace: Vec<TracePoint>,
    pub batch: usize,
    /// Iteration from which the MPSRF stays below the threshold.
    pub converged_at: Option<usize>,
    pub burn_in: usize,
    pub pm: PosteriorSummary,
    pub metrics: Option<ReconstructionMetrics>,
}

/// Runs `cfg.chains` chains of one sampler and summarizes them. The posterior
/// mean discards the configured burn-in, or else everything before convergence,
/// or else the first half.
pub fn run_sampler(
    cfg: &ExperimentConfig,
    data: &Dataset,
    kind: SamplerKind,
    nu_n: Option<&GhParams>,
) -> Result<SamplerRun> {
    let scfg = cfg.sampler_config(kind, Some(data));
    scfg.validate()?;
    let chains = run_chains(&scfg, &data.obs, kind, nu_n, cfg.chains, cfg.workers())?;
    let records = chains.first().map_or(0, ChainStore::len);
    let batch = cfg.batch_for(records);
    let (trace, converged_at) = if cfg.chains >= 2 && records >= batch {
        let mc = MultiChain::from_supports(&chains)?;
        let trace: Vec<TracePoint> = mpsrf_trace(&mc, batch)?
            .into_iter()
            .map(|p| TracePoint {
                samples_used: p.samples_used * scfg.thin,
                r: p.r,
            })
            .collect();
        let conv = convergence_iteration(&trace, cfg.threshold);
        (trace, conv)
    } else {
        (Vec::new(), None)
    };
    let burn_in = if scfg.burn_in > 0 {
        scfg.burn_in
    } else {
        converged_at
            .filter(|&c| c < scfg.iterations)
            .unwrap_or(scfg.iterations / 2)
    };
    let pm = posterior_mean(&chains, burn_in)?;
    let metrics = data
        .truth
        .as_ref()
        .map(|t| reconstruction_metrics(&pm.pm_x, Some(&pm.inclusion), t, 1))
        .transpose()?;
    Ok(SamplerRun {
        kind,
        config: scfg,
        chains,
        trace,
        batch,
        converged_at,
        burn_in,
        pm,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub sampler: SamplerKind,
    pub version: String,
    pub chains: usize,
    pub batch: usize,
    pub threshold: f64,
    pub converged_at: Option<usize>,
    pub burn_in: usize,
    pub realized_snr_db: Option<f64>,
    pub scenario: Option<Scenario>,
    pub nu_n: Option<GhParams>,
    pub mcmc: SamplerConfig,
    pub chain: Vec<ChainSummary>,
    pub metrics: Option<ReconstructionMetrics>,
}

impl SamplerRun {
    pub fn metadata(&self, cfg: &ExperimentConfig, data: &Dataset, nu_n: Option<&GhParams>) -> RunMetadata {
        RunMetadata {
            sampler: self.kind,
            version: env!("CARGO_PKG_VERSION").to_string(),
            chains: self.chains.len(),
            batch: self.batch,
            threshold: cfg.threshold,
            converged_at: self.converged_at,
            burn_in: self.burn_in,
            realized_snr_db: data.snr_db,
            scenario: cfg.data.is_none().then(|| cfg.scenario.clone()),
            nu_n: nu_n.copied(),
            mcmc: self.config.clone(),
            chain: self.chains.iter().map(ChainSummary::new).collect(),
            metrics: self.metrics,
        }
    }

    /// `chain_<kind>_<j>.csv` for every chain and `run_<kind>.toml`.
    pub fn write_chains(&self, dir: &Path, meta: &RunMetadata) -> Result<()> {
        for (j, c) in self.chains.iter().enumerate() {
            io::write_chain_csv(&dir.join(format!("chain_{}_{j}.csv", self.kind)), c)?;
        }
        io::write_toml(&dir.join(format!("run_{}.toml", self.kind)), meta)
    }

    /// `trace_<kind>.csv` and `pm_<kind>.csv`.
    pub fn write_summaries(&self, dir: &Path, truth: Option<&LatentState>) -> Result<()> {
        io::write_trace_csv(&dir.join(format!("trace_{}.csv", self.kind)), &self.trace)?;
        io::write_pm_csv(
            &dir.join(format!("pm_{}.csv", self.kind)),
            &self.pm,
            truth.map(|t| t.x.as_slice()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    /// Iteration of sustained convergence, or "not converged".
    pub convergence: String,
    pub converged_at: Option<usize>,
    pub final_r: Option<f64>,
    pub burn_in: usize,
    pub metrics: Option<ReconstructionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub chains: usize,
    pub realized_snr_db: Option<f64>,
    pub bgh: SamplerReport,
    pub btg: SamplerReport,
    /// BTG iterations over BGH iterations to convergence, when both converged.
    pub convergence_ratio: Option<f64>,
}

impl SamplerReport {
    pub fn new(run: &SamplerRun) -> Self {
        Self {
            convergence: run
                .converged_at
                .map_or_else(|| "not converged".to_string(), |c| c.to_string()),
            converged_at: run.converged_at,
            final_r: run.trace.last().map(|p| p.r),
            burn_in: run.burn_in,
            metrics: run.metrics,
        }
    }
}

impl ComparisonReport {
    pub fn new(cfg: &ExperimentConfig, data: &Dataset, bgh: &SamplerRun, btg: &SamplerRun) -> Self {
        let convergence_ratio = match (bgh.converged_at, btg.converged_at) {
            (Some(g), Some(t)) => Some(t as f64 / g as f64),
            _ => None,
        };
        Self {
            threshold: cfg.threshold,
            chains: cfg.chains,
            realized_snr_db: data.snr_db,
            bgh: SamplerReport::new(bgh),
            btg: SamplerReport::new(btg),
            convergence_ratio,
        }
    }
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
