//! Multivariate potential scale reduction factor and posterior summaries.
//!
//! `R = (I−1)/I + ((J+1)/J)·λ_max(W⁻¹B)` with `W` the pooled within-chain
//! covariance and `B` the covariance of the chain means.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::ChainStore;

/// Relative ridge added to the retained block of `W` before whitening.
pub const WITHIN_RIDGE: f64 = 1e-12;

/// `J` chains of `I` vectors in `ℝ^d`, rows stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChain {
    chains: usize,
    len: usize,
    dim: usize,
    offsets: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl MultiChain {
    /// `data[j][i]` is the `i`-th vector of chain `j`.
    pub fn from_dense(data: &[Vec<Vec<f64>>]) -> Result<Self> {
        let chains = data.len();
        let len = data.first().map_or(0, Vec::len);
        let dim = data.first().and_then(|c| c.first()).map_or(0, Vec::len);
        let mut out = Self::with_shape(chains, len, dim);
        for chain in data {
            if chain.len() != len {
                return Err(Error::domain("all chains must have the same length"));
            }
            for row in chain {
                if row.len() != dim {
                    return Err(Error::domain("all samples must have the same dimension"));
                }
                out.push_row(row.iter().copied().enumerate());
            }
        }
        Ok(out)
    }

    /// Support indicators `q` of sampler chains.
    pub fn from_supports(stores: &[ChainStore]) -> Result<Self> {
        let chains = stores.len();
        let len = stores.first().map_or(0, ChainStore::len);
        let dim = stores.first().map_or(0, ChainStore::m);
        let mut out = Self::with_shape(chains, len, dim);
        for s in stores {
            if s.len() != len || s.m() != dim {
                return Err(Error::domain("all chains must have the same length and dimension"));
            }
            for i in 0..len {
                out.push_row((0..dim).filter(|&k| s.q_bit(i, k)).map(|k| (k, 1.0)));
            }
        }
        Ok(out)
    }

    fn with_shape(chains: usize, len: usize, dim: usize) -> Self {
        Self {
            chains,
            len,
            dim,
            offsets: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    fn push_row(&mut self, entries: impl Iterator<Item = (usize, f64)>) {
        for (k, v) in entries {
            if v != 0.0 {
                self.idx.push(k as u32);
                self.val.push(v);
            }
        }
        self.offsets.push(self.idx.len());
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, j: usize, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = j * self.len + i;
        (self.offsets[r]..self.offsets[r + 1]).map(move |p| (self.idx[p] as usize, self.val[p]))
    }

    /// Per-chain sums over iterations `[start, end)`.
    fn moments(&self, start: usize, end: usize) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        (0..self.chains)
            .map(|j| {
                let mut s1 = DVector::zeros(self.dim);
                let mut s2 = DMatrix::zeros(self.dim, self.dim);
                for i in start..end {
                    let row: Vec<(usize, f64)> = self.row(j, i).collect();
                    for &(a, va) in &row {
                        s1[a] += va;
                        for &(b, vb) in &row {
                            s2[(a, b)] += va * vb;
                        }
                    }
                }
                (s1, s2)
            })
            .collect()
    }

    /// Within and between covariances of iterations `[start, end)`.
    fn covariances(&self, start: usize, end: usize) -> Result<Covariances> {
        let n = end - start;
        if n < 2 {
            return Err(Error::Singular(format!("need at least 2 samples per chain, got {n}")));
        }
        if self.chains < 2 {
            return Err(Error::Singular(format!("need at least 2 chains, got {}", self.chains)));
        }
        let nf = n as f64;
        let jf = self.chains as f64;
        let moments = self.moments(start, end);
        let mut within = DMatrix::zeros(self.dim, self.dim);
        let mut means = Vec::with_capacity(self.chains);
        for (s1, s2) in moments {
            let mean = s1 / nf;
            within += s2 - (&mean * mean.transpose()) * nf;
            means.push(mean);
        }
        within /= jf * (nf - 1.0);
        let grand = means.iter().fold(DVector::zeros(self.dim), |acc, m| acc + m) / jf;
        let mut between = DMatrix::zeros(self.dim, self.dim);
        for m in &means {
            let d = m - &grand;
            between += &d * d.transpose();
        }
        between /= jf - 1.0;
        let scale = grand.map(|g| g * g);
        Ok(Covariances {
            within,
            between,
            scale,
            n,
        })
    }
}

struct Covariances {
    within: DMatrix<f64>,
    between: DMatrix<f64>,
    /// Squared grand mean per coordinate, the reference for "numerically zero".
    scale: DVector<f64>,
    n: usize,
}

/// Pooled within-chain covariance over all iterations.
pub fn intra_chain_cov(chains: &MultiChain) -> Result<DMatrix<f64>> {
    if chains.len() < 2 {
        return Err(Error::Singular(format!(
            "need at least 2 samples per chain, got {}",
            chains.len()
        )));
    }
    let nf = chains.len() as f64;
    let jf = chains.chains() as f64;
    let mut within = DMatrix::zeros(chains.dim(), chains.dim());
    for (s1, s2) in chains.moments(0, chains.len()) {
        let mean = s1 / nf;
        within += s2 - (&mean * mean.transpose()) * nf;
    }
    Ok(within / (jf * (nf - 1.0)))
}

/// Covariance of the chain means.
pub fn inter_chain_cov(chains: &MultiChain) -> Result<DMatrix<f64>> {
    if chains.chains() < 2 {
        return Err(Error::Singular(format!(
            "need at least 2 chains, got {}",
            chains.chains()
        )));
    }
    let nf = chains.len() as f64;
    let jf = chains.chains() as f64;
    let means: Vec<DVector<f64>> = chains
        .moments(0, chains.len())
        .into_iter()
        .map(|(s1, _)| s1 / nf)
        .collect();
    let grand = means.iter().fold(DVector::zeros(chains.dim()), |acc, m| acc + m) / jf;
    let mut between = DMatrix::zeros(chains.dim(), chains.dim());
    for m in &means {
        let d = m - &grand;
        between += &d * d.transpose();
    }
    Ok(between / (jf - 1.0))
}

fn numerically_zero(v: f64, scale: f64) -> bool {
    v <= 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE)
}

fn mpsrf_from(cov: &Covariances, chains: usize) -> Result<f64> {
    let d = cov.within.nrows();
    let mut keep = Vec::with_capacity(d);
    for k in 0..d {
        let w = cov.within[(k, k)];
        if numerically_zero(w, cov.scale[k] + w) {
            // Frozen inside every chain: harmless if all chains agree, otherwise unmixed.
            if !numerically_zero(cov.between[(k, k)], cov.scale[k]) {
                return Ok(f64::INFINITY);
            }
        } else {
            keep.push(k);
        }
    }
    if keep.is_empty() {
        return Err(Error::Singular("every coordinate is constant".into()));
    }
    let p = keep.len();
    let mut w = DMatrix::from_fn(p, p, |a, b| cov.within[(keep[a], keep[b])]);
    let b = DMatrix::from_fn(p, p, |a, c| cov.between[(keep[a], keep[c])]);
    let ridge = WITHIN_RIDGE * w.trace() / p as f64;
    for a in 0..p {
        w[(a, a)] += ridge;
    }
    let chol = w
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("within-chain covariance".into()))?;
    let l = chol.l();
    // L⁻¹ B L⁻ᵀ
    let left = l
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::Singular("within-chain factor".into()))?;
    let whitened = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Singular("within-chain factor".into()))?;
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let lmax = SymmetricEigen::new(sym).eigenvalues.max().max(0.0);
    let nf = cov.n as f64;
    let jf = chains as f64;
    Ok((nf - 1.0) / nf + (jf + 1.0) / jf * lmax)
}

/// MPSRF over all iterations of every chain.
pub fn mpsrf(chains: &MultiChain) -> Result<f64> {
    let cov = chains.covariances(0, chains.len())?;
    mpsrf_from(&cov, chains.chains())
}

/// MPSRF over 0-based iterations `[start, end)`.
pub fn mpsrf_window(chains: &MultiChain, start: usize, end: usize) -> Result<f64> {
    if end > chains.len() || start >= end {
        return Err(Error::Index(format!(
            "window [{start}, {end}) outside 0..{}",
            chains.len()
        )));
    }
    let cov = chains.covariances(start, end)?;
    mpsrf_from(&cov, chains.chains())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Chain length `kb` considered at this point.
    pub samples_used: usize,
    pub r: f64,
}

/// `R` on the second halves (iterations `⌈kb/2⌉ … kb`, 1-based) of growing prefixes `kb`.
pub fn mpsrf_trace(chains: &MultiChain, batch: usize) -> Result<Vec<TracePoint>> {
    if batch < 2 {
        return Err(Error::Config(format!("batch must be at least 2, got {batch}")));
    }
    (1..=chains.len() / batch)
        .map(|k| {
            let kb = k * batch;
            let start = kb.div_ceil(2) - 1;
            Ok(TracePoint {
                samples_used: kb,
                r: mpsrf_window(chains, start, kb)?,
            })
        })
        .collect()
}

/// Smallest `kb` from which every later trace point stays below `threshold`.
pub fn convergence_iteration(trace: &[TracePoint], threshold: f64) -> Option<usize> {
    let mut first = None;
    for p in trace {
        if p.r < threshold {
            first.get_or_insert(p.samples_used);
        } else {
            first = None;
        }
    }
    first
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Posterior mean of each amplitude.
    pub pm_x: Vec<f64>,
    /// Fraction of retained iterations in which each site was active.
    pub inclusion: Vec<f64>,
    pub samples: usize,
}

/// Mean over recorded iterations strictly after `burn_in`, pooled over chains.
pub fn posterior_mean(chains: &[ChainStore], burn_in: usize) -> Result<PosteriorSummary> {
    let m = chains
        .first()
        .map(ChainStore::m)
        .ok_or_else(|| Error::domain("no chains to summarize"))?;
    let mut pm = vec![0.0; m];
    let mut inc = vec![0.0; m];
    let mut n = 0usize;
    for c in chains {
        if c.m() != m {
            return Err(Error::domain("chains disagree on the number of sites"));
        }
        for i in 0..c.len() {
            if c.iteration(i) <= burn_in {
                continue;
            }
            n += 1;
            for (k, x) in c.x(i).into_iter().enumerate() {
                pm[k] += x;
            }
            for (k, v) in inc.iter_mut().enumerate() {
                if c.q_bit(i, k) {
                    *v += 1.0;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::domain(format!("no recorded iterations after burn-in {burn_in}")));
    }
    let nf = n as f64;
    pm.iter_mut().for_each(|v| *v /= nf);
    inc.iter_mut().for_each(|v| *v /= nf);
    Ok(PosteriorSummary {
        pm_x: pm,
        inclusion: inc,
        samples: n,
    })
}
