//! Maximum-likelihood fit of a GH law to the half-normal `N⁺(0, 1)`.
//!
//! The log-likelihood has no interior maximizer over the full GH family: it
//! keeps climbing towards the shifted-gamma limit `α → ∞, δ → 0`. The fit
//! therefore bounds `α ≤ alpha_max` and optimizes on an unconstrained
//! reparameterization
//!
//! ```text
//! λ = t0,  α = alpha_max·sigmoid(t1),  β = α·tanh(t2),  δ = exp(t3),  μ = t4
//! ```
//!
//! with BFGS. Gradients in `α, β, δ, μ` are analytic (through
//! `d/dz ln K_ν(z) = ν/z − K_{ν+1}(z)/K_ν(z)`); the index derivative uses a
//! central difference.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gh::GhParams;
use super::gig::GigParams;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::specfun::ln_k_and_ratio;

pub const DEFAULT_FIT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_FIT_SEED: u64 = 20_200_504;
pub const DEFAULT_ALPHA_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub alpha_max: f64,
    pub max_iterations: usize,
    /// Stop when the sup-norm of the gradient of the mean log-likelihood falls below this.
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha_max: DEFAULT_ALPHA_MAX,
            max_iterations: 400,
            grad_tol: 1e-7,
        }
    }
}

/// A fitted approximation `GH(ν_N) ≈ N⁺(0, 1)` and its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedGhApprox {
    pub nu_n: GhParams,
    pub fit_sample_count: usize,
    pub fit_seed: u64,
    /// Monte-Carlo estimate of `KL(N⁺(0,1) ‖ GH(ν_N))` on the fitting sample.
    pub fit_kl_estimate: f64,
    /// Mean log-likelihood per sample at the optimum.
    pub mean_log_likelihood: f64,
    pub alpha_max: f64,
}

/// Mean GH log-likelihood of `data`.
pub fn mean_log_likelihood(p: &GhParams, data: &[f64]) -> f64 {
    let norm = p.log_norm_const();
    let sum: f64 = data.iter().map(|&x| p.log_kernel(x)).sum();
    norm + sum / data.len() as f64
}

/// Mean of `ln` of the half-normal density over `data`.
/// `KL(N⁺(0,1) ‖ GH(p))` by adaptive quadrature, split at the GH location.
pub fn kl_from_half_normal(p: &GhParams) -> f64 {
    let c = 0.5 * (2.0 / std::f64::consts::PI).ln();
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        ..QuadOptions::default()
    };
    let f = |x: f64| {
        let lf = c - 0.5 * x * x;
        lf.exp() * (lf - p.log_pdf(x))
    };
    let cut = p.mu.clamp(0.0, 1.0);
    let head = if cut > 0.0 {
        integrate(f, 0.0, cut, opts).value
    } else {
        0.0
    };
    head + integrate(f, cut, f64::INFINITY, opts).value
}

fn mean_half_normal_log_pdf(data: &[f64]) -> f64 {
    let c = 0.5 * (2.0 / std::f64::consts::PI).ln();
    c - 0.5 * data.iter().map(|x| x * x).sum::<f64>() / data.len() as f64
}

#[derive(Debug, Clone, Copy)]
struct Reparam {
    alpha_max: f64,
}

impl Reparam {
    fn params(&self, t: &[f64; 5]) -> GhParams {
        let sig = 1.0 / (1.0 + (-t[1]).exp());
        let alpha = self.alpha_max * sig;
        GhParams {
            lambda: t[0],
            alpha,
            beta: alpha * t[2].tanh(),
            delta: t[3].exp(),
            mu: t[4],
        }
    }

    fn coords(&self, p: &GhParams) -> [f64; 5] {
        let frac = (p.alpha / self.alpha_max).clamp(1e-12, 1.0 - 1e-12);
        [
            p.lambda,
            (frac / (1.0 - frac)).ln(),
            (p.beta / p.alpha).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh(),
            p.delta.ln(),
            p.mu,
        ]
    }
}

/// Mean log-likelihood and its gradient in `(λ, α, β, δ, μ)`; the λ entry is left at zero.
fn value_and_partial_grad(p: &GhParams, data: &[f64]) -> (f64, [f64; 5]) {
    let gamma = p.gamma();
    let omega = p.delta * gamma;
    let (ln_k_norm, ln_r_norm) = ln_k_and_ratio(p.lambda.abs(), omega);
    // d/dz ln K_λ(z) at z = δγ.
    let dk_norm = bessel_log_derivative(p.lambda, omega, ln_r_norm);
    let norm = p.lambda * (gamma.ln() - p.delta.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln() - ln_k_norm;
    let d_norm_d_gamma = p.lambda / gamma - p.delta * dk_norm;
    let d_norm_d_delta = -p.lambda / p.delta - gamma * dk_norm;

    let nu = p.lambda - 0.5;
    let ln_alpha = p.alpha.ln();
    let mut sum = 0.0;
    let (mut g_alpha, mut g_beta, mut g_delta, mut g_mu) = (0.0, 0.0, 0.0, 0.0);
    for &x in data {
        let dx = x - p.mu;
        let r = p.delta.hypot(dx);
        let z = p.alpha * r;
        let (ln_k, ln_r) = ln_k_and_ratio(nu.abs(), z);
        sum += ln_k + nu * (r.ln() - ln_alpha) + p.beta * dx;
        let dk = bessel_log_derivative(nu, z, ln_r);
        let ds_dr = p.alpha * dk + nu / r;
        g_alpha += r * dk - nu / p.alpha;
        g_beta += dx;
        g_delta += ds_dr * p.delta / r;
        g_mu += -ds_dr * dx / r - p.beta;
    }
    let n = data.len() as f64;
    let value = norm + sum / n;
    let grad = [
        0.0,
        d_norm_d_gamma * p.alpha / gamma + g_alpha / n,
        -d_norm_d_gamma * p.beta / gamma + g_beta / n,
        d_norm_d_delta + g_delta / n,
        g_mu / n,
    ];
    (value, grad)
}

/// `d/dz ln K_ν(z)` given `ln(K_{|ν|+1}(z)/K_{|ν|}(z))`.
fn bessel_log_derivative(nu: f64, z: f64, ln_ratio_abs: f64) -> f64 {
    // K_ν = K_{|ν|}, and K'_a/K_a = a/z − K_{a+1}/K_a for a = |ν|.
    let a = nu.abs();
    a / z - ln_ratio_abs.exp()
}

struct Objective<'a> {
    data: &'a [f64],
    reparam: Reparam,
    evaluations: usize,
}

impl Objective<'_> {
    /// Negative mean log-likelihood and gradient in the unconstrained coordinates.
    fn eval(&mut self, t: &[f64; 5]) -> (f64, [f64; 5]) {
        let p = self.reparam.params(t);
        let (ll, g) = value_and_partial_grad(&p, self.data);
        self.evaluations += 1;
        let h = 1e-5 * (1.0 + t[0].abs());
        let mut up = p;
        up.lambda += h;
        let mut down = p;
        down.lambda -= h;
        let d_lambda = (mean_log_likelihood(&up, self.data) - mean_log_likelihood(&down, self.data)) / (2.0 * h);

        let sig = p.alpha / self.reparam.alpha_max;
        let th = t[2].tanh();
        let d_alpha_dt1 = p.alpha * (1.0 - sig);
        let grad = [
            -d_lambda,
            -(g[1] * d_alpha_dt1 + g[2] * th * d_alpha_dt1),
            -(g[2] * p.alpha * (1.0 - th * th)),
            -(g[3] * p.delta),
            -g[4],
        ];
        (-ll, grad)
    }

    fn value(&mut self, t: &[f64; 5]) -> f64 {
        self.evaluations += 1;
        let p = self.reparam.params(t);
        let v = -mean_log_likelihood(&p, self.data);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct BfgsOutcome {
    t: [f64; 5],
    value: f64,
}

fn bfgs(obj: &mut Objective<'_>, start: [f64; 5], opts: &FitOptions) -> BfgsOutcome {
    let mut t = start;
    let (mut f, mut g) = obj.eval(&t);
    let mut h_inv = [[0.0; 5]; 5];
    for (i, row) in h_inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut stalls = 0;
    for _ in 0..opts.max_iterations {
        if g.iter().all(|v| v.abs() < opts.grad_tol) {
            break;
        }
        let mut dir = [0.0; 5];
        for i in 0..5 {
            dir[i] = -dot(&h_inv[i], &g);
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // Lost descent; restart from steepest descent.
            for (i, row) in h_inv.iter_mut().enumerate() {
                *row = [0.0; 5];
                row[i] = 1.0;
            }
            dir = g.map(|v| -v);
            slope = dot(&dir, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = t;
            for i in 0..5 {
                trial[i] += step * dir[i];
            }
            let ft = obj.value(&trial);
            if ft <= f + 1e-4 * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        let (f_next, g_next) = obj.eval(&next);
        let s: [f64; 5] = std::array::from_fn(|i| next[i] - t[i]);
        let y: [f64; 5] = std::array::from_fn(|i| g_next[i] - g[i]);
        let sy = dot(&s, &y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let hy: [f64; 5] = std::array::from_fn(|i| dot(&h_inv[i], &y));
            let yhy = dot(&y, &hy);
            for i in 0..5 {
                for j in 0..5 {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let improvement = f - f_next;
        t = next;
        f = f_next;
        g = g_next;
        if improvement < 1e-14 * (1.0 + f.abs()) {
            stalls += 1;
            if stalls >= 5 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    BfgsOutcome { t, value: f }
}

/// Moments of the standardized law `GIG(λ, √ω, √ω)`: mean, variance, third central moment.
fn standard_gig_moments(lambda: f64, omega: f64) -> (f64, f64, f64) {
    let g = GigParams {
        lambda,
        gamma: omega.sqrt(),
        delta: omega.sqrt(),
    };
    let (m1, m2, m3) = (g.moment(1.0), g.moment(2.0), g.moment(3.0));
    let var = m2 - m1 * m1;
    let k3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
    (m1, var, k3)
}

/// Matches mean, variance and third central moment with index `lambda` and
/// concentration `omega` held fixed. `None` when the skewness is out of reach.
fn moment_match(lambda: f64, omega: f64, mean: f64, var: f64, third: f64) -> Option<GhParams> {
    let (m1, v, k3) = standard_gig_moments(lambda, omega);
    // With W = η·Y and b = βη: var = η m1 + b² v, third = 3 b η v + b³ k3.
    let eta_of = |b: f64| (var - b * b * v) / m1;
    let g = |b: f64| 3.0 * b * eta_of(b) * v + b * b * b * k3 - third;
    let b_max = (var / v).sqrt();
    if !(g(b_max * (1.0 - 1e-12)) > 0.0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, b_max * (1.0 - 1e-12));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    let eta = eta_of(b);
    if !(eta > 0.0) {
        return None;
    }
    let delta = (omega * eta).sqrt();
    let gamma = (omega / eta).sqrt();
    let beta = b / eta;
    let alpha = gamma.hypot(beta);
    let mu = mean - b * m1;
    GhParams::new(lambda, alpha, beta, delta, mu).ok()
}

/// Draws `n` half-normal variates.
pub fn half_normal_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect()
}

/// Fits `ν_N` on a given sample.
pub fn fit_gh_to_sample(data: &[f64], opts: &FitOptions) -> Result<(GhParams, f64)> {
    if data.len() < 2 {
        return Err(Error::domain("need at least two samples to fit"));
    }
    if !(opts.alpha_max > 0.0) {
        return Err(Error::domain(format!(
            "alpha_max must be positive, got {}",
            opts.alpha_max
        )));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let third = data.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;

    let reparam = Reparam {
        alpha_max: opts.alpha_max,
    };
    let mut obj = Objective {
        data,
        reparam,
        evaluations: 0,
    };
    // Moment-matched starting points over a small (λ, ω) grid, clipped into the α bound.
    let mut best: Option<([f64; 5], f64)> = None;
    for &lambda in &[0.5, 1.0, 1.5, 2.0] {
        for &omega in &[0.25, 1.0, 4.0] {
            let Some(mut p) = moment_match(lambda, omega, mean, var, third) else {
                continue;
            };
            if p.alpha >= 0.95 * opts.alpha_max {
                let shrink = 0.95 * opts.alpha_max / p.alpha;
                p.alpha *= shrink;
                p.beta *= shrink;
            }
            let t = reparam.coords(&p);
            let v = obj.value(&t);
            if v.is_finite() && best.map_or(true, |(_, bv)| v < bv) {
                best = Some((t, v));
            }
        }
    }
    let (start, start_value) =
        best.ok_or_else(|| Error::Optimization("no feasible moment-matched starting point".into()))?;
    let out = bfgs(&mut obj, start, opts);
    if !(out.value < start_value) {
        return Err(Error::Optimization(format!(
            "likelihood did not improve on the initialization ({} vs {})",
            -out.value, -start_value
        )));
    }
    let p = reparam.params(&out.t);
    p.validate()
        .map_err(|e| Error::Optimization(format!("fit left the feasible set: {e}")))?;
    Ok((p, -out.value))
}

/// Generates `sample_count` half-normal draws from `seed` and fits `ν_N` by
/// maximum likelihood under `opts`.
pub fn fit_gh_to_truncated_normal(sample_count: usize, seed: u64, opts: &FitOptions) -> Result<FittedGhApprox> {
    if sample_count < 10_000 {
        return Err(Error::domain(format!(
            "fitting needs at least 10^4 samples, got {sample_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = half_normal_sample(sample_count, &mut rng);
    let (nu_n, mean_ll) = fit_gh_to_sample(&data, opts)?;
    let kl = (mean_half_normal_log_pdf(&data) - mean_ll).max(0.0);
    Ok(FittedGhApprox {
        nu_n,
        fit_sample_count: sample_count,
        fit_seed: seed,
        fit_kl_estimate: kl,
        mean_log_likelihood: mean_ll,
        alpha_max: opts.alpha_max,
    })
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    lambda: f64,
    alpha: f64,
    beta: f64,
    delta: f64,
    mu: f64,
    sample_count: usize,
    seed: u64,
    kl_estimate: f64,
    mean_log_likelihood: f64,
    alpha_max: f64,
}

impl FittedGhApprox {
    pub fn to_toml(&self) -> String {
        let file = FitFile {
            lambda: self.nu_n.lambda,
            alpha: self.nu_n.alpha,
            beta: self.nu_n.beta,
            delta: self.nu_n.delta,
            mu: self.nu_n.mu,
            sample_count: self.fit_sample_count,
            seed: self.fit_seed,
            kl_estimate: self.fit_kl_estimate,
            mean_log_likelihood: self.mean_log_likelihood,
            alpha_max: self.alpha_max,
        };
        let body = toml::to_string(&file).expect("fit record serializes");
        format!("# GH approximation of the half-normal N+(0,1)\n{body}")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let f: FitFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let nu_n = GhParams::new(f.lambda, f.alpha, f.beta, f.delta, f.mu).map_err(|e| e.to_string())?;
        Ok(Self {
            nu_n,
            fit_sample_count: f.sample_count,
            fit_seed: f.seed,
            fit_kl_estimate: f.kl_estimate,
            mean_log_likelihood: f.mean_log_likelihood,
            alpha_max: f.alpha_max,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            msg,
        })
    }
}

/// The fit shipped with the crate (10⁶ samples, default seed and bound).
pub fn default_fit() -> FittedGhApprox {
    FittedGhApprox::from_toml(include_str!("../../data/nu_n.toml")).expect("bundled fit parses")
}
