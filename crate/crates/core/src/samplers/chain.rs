use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bgh::BghChain;
use super::btg::BtgChain;
use super::config::{MoveCounters, SamplerConfig};
use crate::distributions::{truncnorm_sample, GhParams};
use crate::error::{Error, Result};
use crate::model::{BghPrior, Hyperparams, LatentState, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Bgh,
    Btg,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Bgh => "bgh",
            SamplerKind::Btg => "btg",
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bgh" => Ok(SamplerKind::Bgh),
            "btg" => Ok(SamplerKind::Btg),
            other => Err(Error::Config(format!("unknown sampler '{other}', expected bgh or btg"))),
        }
    }
}

/// Recorded iterations of one chain. Supports are bit-packed and amplitudes kept
/// sparse, since only a handful of sites are active at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub kind: SamplerKind,
    pub seed: u64,
    m: usize,
    words: usize,
    iterations: Vec<usize>,
    support: Vec<u64>,
    amp_sites: Vec<u32>,
    amp_values: Vec<f64>,
    amp_offsets: Vec<usize>,
    hyper: Vec<Hyperparams>,
    counters: Vec<MoveCounters>,
}

impl ChainStore {
    pub fn new(kind: SamplerKind, seed: u64, m: usize) -> Self {
        Self {
            kind,
            seed,
            m,
            words: m.div_ceil(64),
            iterations: Vec::new(),
            support: Vec::new(),
            amp_sites: Vec::new(),
            amp_values: Vec::new(),
            amp_offsets: vec![0],
            hyper: Vec::new(),
            counters: Vec::new(),
        }
    }

    pub fn push(&mut self, iteration: usize, state: &LatentState, hp: &Hyperparams, counters: &MoveCounters) {
        let base = self.support.len();
        self.support.resize(base + self.words, 0);
        for (k, &on) in state.q.iter().enumerate() {
            if on {
                self.support[base + k / 64] |= 1 << (k % 64);
            }
        }
        for (k, &x) in state.x.iter().enumerate() {
            if x != 0.0 {
                self.amp_sites.push(k as u32);
                self.amp_values.push(x);
            }
        }
        self.amp_offsets.push(self.amp_sites.len());
        self.iterations.push(iteration);
        self.hyper.push(*hp);
        self.counters.push(*counters);
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn iteration(&self, i: usize) -> usize {
        self.iterations[i]
    }

    pub fn q_bit(&self, i: usize, k: usize) -> bool {
        self.support[i * self.words + k / 64] >> (k % 64) & 1 == 1
    }

    pub fn q(&self, i: usize) -> Vec<bool> {
        (0..self.m).map(|k| self.q_bit(i, k)).collect()
    }

    /// `q` as a string of `0`/`1`, site 0 first.
    pub fn q_bits(&self, i: usize) -> String {
        (0..self.m).map(|k| if self.q_bit(i, k) { '1' } else { '0' }).collect()
    }

    pub fn x(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.m];
        for j in self.amp_offsets[i]..self.amp_offsets[i + 1] {
            x[self.amp_sites[j] as usize] = self.amp_values[j];
        }
        x
    }

    pub fn hyper(&self, i: usize) -> &Hyperparams {
        &self.hyper[i]
    }

    pub fn counters(&self, i: usize) -> &MoveCounters {
        &self.counters[i]
    }

    pub fn final_counters(&self) -> MoveCounters {
        self.counters.last().copied().unwrap_or_default()
    }
}

/// A state with every site inactive.
pub fn empty_state(m: usize) -> LatentState {
    LatentState::empty(m)
}

/// Over-dispersed start: each site active with probability `inclusion`, latent
/// quantities drawn from the prior of the given sampler.
pub fn random_state<R: Rng + ?Sized>(
    kind: SamplerKind,
    m: usize,
    inclusion: f64,
    hp: &Hyperparams,
    nu_n: Option<&GhParams>,
    rng: &mut R,
) -> Result<LatentState> {
    let mut s = LatentState::empty(m);
    let prior = match kind {
        SamplerKind::Bgh => {
            let nu = nu_n.ok_or_else(|| Error::Config("the BGH sampler needs a fitted GH prior".into()))?;
            Some(BghPrior::new(nu, hp.amp_var)?)
        }
        SamplerKind::Btg => None,
    };
    for k in 0..m {
        if rng.random::<f64>() < inclusion {
            s.q[k] = true;
            match &prior {
                Some(p) => {
                    let w = p.mixing_sampler.sample(rng);
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    s.w[k] = Some(w);
                    s.x[k] = p.mean_model.mean(w) + w.sqrt() * z;
                }
                None => s.x[k] = truncnorm_sample(0.0, hp.amp_var.sqrt(), rng),
            }
        }
    }
    Ok(s)
}

/// Runs one chain for `cfg.iterations` sweeps, recording every `cfg.thin`-th.
/// Deterministic given `cfg.seed`.
pub fn run_chain(
    cfg: &SamplerConfig,
    obs: &Observation,
    init: LatentState,
    kind: SamplerKind,
    nu_n: Option<&GhParams>,
) -> Result<ChainStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ChainStore::new(kind, cfg.seed, obs.m());
    match kind {
        SamplerKind::Bgh => {
            let nu = nu_n.ok_or_else(|| Error::Config("the BGH sampler needs a fitted GH prior".into()))?;
            let mut chain = BghChain::new(cfg, obs, init, nu)?;
            for it in 0..cfg.iterations {
                chain.iteration(&mut rng)?;
                if (it + 1) % cfg.thin == 0 {
                    store.push(it + 1, chain.state(), chain.hyperparams(), chain.counters());
                }
            }
        }
        SamplerKind::Btg => {
            let mut chain = BtgChain::new(cfg, obs, init)?;
            for it in 0..cfg.iterations {
                chain.iteration(&mut rng)?;
                if (it + 1) % cfg.thin == 0 {
                    store.push(it + 1, chain.state(), chain.hyperparams(), chain.counters());
                }
            }
        }
    }
    Ok(store)
}

/// Runs `chains` independent chains with seeds `cfg.seed + j`. Chain 0 starts empty,
/// the others from random supports with inclusion probability ½. Chains are spread
/// over up to `workers` threads.
pub fn run_chains(
    cfg: &SamplerConfig,
    obs: &Observation,
    kind: SamplerKind,
    nu_n: Option<&GhParams>,
    chains: usize,
    workers: usize,
) -> Result<Vec<ChainStore>> {
    let job = |j: usize| -> Result<ChainStore> {
        let seed = cfg.seed.wrapping_add(j as u64);
        let chain_cfg = SamplerConfig { seed, ..cfg.clone() };
        let init = if j == 0 {
            empty_state(obs.m())
        } else {
            // Separate stream for the start so the sweep stream matches the seed contract.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_57a7);
            random_state(kind, obs.m(), 0.5, &cfg.init, nu_n, &mut rng)?
        };
        run_chain(&chain_cfg, obs, init, kind, nu_n)
    };
    let workers = workers.max(1).min(chains.max(1));
    if workers == 1 {
        return (0..chains).map(job).collect();
    }
    let mut out: Vec<Option<Result<ChainStore>>> = (0..chains).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, slots) in out.chunks_mut(chains.div_ceil(workers)).enumerate() {
            let job = &job;
            let base = w * chains.div_ceil(workers);
            scope.spawn(move || {
                for (i, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(job(base + i));
                }
            });
        }
    });
    out.into_iter()
        .map(|r| r.expect("every chain slot is filled"))
        .collect()
}
