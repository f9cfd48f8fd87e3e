//! Cholesky factor of the collapsed precision `P = σ⁻² H̄ᵀH̄ + W⁻¹` over the active set.
//!
//! Atoms are stored in insertion order, which need not be site order. Alongside `L`
//! the cache keeps `b = σ⁻² H̄ᵀy + W⁻¹μ` and `z = L⁻¹ b`, so the conditional mean of
//! the amplitudes is `L⁻ᵀ z` and the collapsed evidence is available in `O(L)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::dictionary::Observation;
use super::prior::MeanModel;
use crate::error::{Error, Result};

/// Schur complement `s₀` and reduced right-hand side `t₀` of one site against the
/// rest of the active set, with the site's own prior term excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteContext {
    pub s0: f64,
    pub t0: f64,
}

impl SiteContext {
    /// Change in the log evidence when the site is present with variance `w`,
    /// relative to the site being absent.
    pub fn log_evidence_gain(&self, w: f64, mean: &MeanModel) -> f64 {
        let s = self.s0 + 1.0 / w;
        let mw = mean.mean(w);
        let t = self.t0 + mean.mean_over_w(w);
        -0.5 * (w * self.s0).ln_1p() - 0.5 * mw * mw / w + 0.5 * t * t / s
    }
}

/// Relative pivot below which a downdate is replaced by remove + insert.
const DOWNDATE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ActiveSetCholesky {
    cap: usize,
    active: Vec<usize>,
    pos: Vec<Option<usize>>,
    w: Vec<f64>,
    /// Row-major `cap × cap`, lower triangle of the leading `len × len` block in use.
    l: Vec<f64>,
    b: Vec<f64>,
    z: Vec<f64>,
    inv_noise: f64,
    mean: MeanModel,
}

impl ActiveSetCholesky {
    pub fn empty(m: usize, noise_var: f64, mean: MeanModel) -> Self {
        Self {
            cap: m,
            active: Vec::with_capacity(m),
            pos: vec![None; m],
            w: Vec::with_capacity(m),
            l: vec![0.0; m * m],
            b: Vec::with_capacity(m),
            z: Vec::with_capacity(m),
            inv_noise: 1.0 / noise_var,
            mean,
        }
    }

    /// Factor for the given `(site, w)` pairs, inserted in order.
    pub fn build(obs: &Observation, noise_var: f64, mean: MeanModel, sites: &[(usize, f64)]) -> Result<Self> {
        let mut c = Self::empty(obs.m(), noise_var, mean);
        for &(k, w) in sites {
            c.insert(k, w, obs)?;
        }
        Ok(c)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.cap + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.l[i * self.cap + j]
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Active sites in factor order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Variances in factor order.
    pub fn variances(&self) -> &[f64] {
        &self.w
    }

    pub fn w_of(&self, k: usize) -> Option<f64> {
        self.pos[k].map(|j| self.w[j])
    }

    pub fn contains(&self, k: usize) -> bool {
        self.pos[k].is_some()
    }

    pub fn noise_var(&self) -> f64 {
        1.0 / self.inv_noise
    }

    pub fn mean_model(&self) -> MeanModel {
        self.mean
    }

    fn check_w(w: f64) -> Result<()> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::domain(format!(
                "atom variance must be positive and finite, got {w}"
            )));
        }
        Ok(())
    }

    /// `v = L⁻¹ c` with `c_i = σ⁻² G[active_i, k]`.
    fn cross_solve(&self, k: usize, obs: &Observation) -> Vec<f64> {
        let n = self.len();
        let g = obs.gram();
        let mut v = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.inv_noise * g[(self.active[i], k)];
            let row = &self.l[i * self.cap..i * self.cap + i];
            for (lij, vj) in row.iter().zip(&v[..i]) {
                acc -= lij * vj;
            }
            v[i] = acc / self.at(i, i);
        }
        v
    }

    /// `s₀, t₀` for site `k`, whether or not it is active.
    pub fn site_context(&self, k: usize, obs: &Observation) -> SiteContext {
        match self.pos[k] {
            None => {
                let v = self.cross_solve(k, obs);
                let vv: f64 = v.iter().map(|x| x * x).sum();
                let vz: f64 = v.iter().zip(&self.z).map(|(a, b)| a * b).sum();
                SiteContext {
                    s0: (self.inv_noise * obs.gram()[(k, k)] - vv).max(0.0),
                    t0: self.inv_noise * obs.hty()[k] - vz,
                }
            }
            Some(j) => {
                let n = self.len();
                // u = L⁻¹ e_j, zero above j.
                let mut u = vec![0.0; n];
                u[j] = 1.0 / self.at(j, j);
                for i in j + 1..n {
                    let mut acc = 0.0;
                    for m in j..i {
                        acc += self.at(i, m) * u[m];
                    }
                    u[i] = -acc / self.at(i, i);
                }
                let pinv_jj: f64 = u[j..].iter().map(|x| x * x).sum();
                // η_j = (L⁻ᵀ z)_j = u · z.
                let eta_j: f64 = u[j..].iter().zip(&self.z[j..]).map(|(a, b)| a * b).sum();
                let s = 1.0 / pinv_jj;
                let w = self.w[j];
                SiteContext {
                    s0: (s - 1.0 / w).max(0.0),
                    t0: eta_j * s - self.mean.mean_over_w(w),
                }
            }
        }
    }

    /// Appends site `k` with variance `w`.
    pub fn insert(&mut self, k: usize, w: f64, obs: &Observation) -> Result<()> {
        Self::check_w(w)?;
        if self.pos[k].is_some() {
            return Err(Error::Index(format!("site {k} is already active")));
        }
        let n = self.len();
        let v = self.cross_solve(k, obs);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let s = self.inv_noise * obs.gram()[(k, k)] + 1.0 / w - vv;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {s:e} when inserting site {k} with w = {w:e}"
            )));
        }
        let d = s.sqrt();
        for (i, vi) in v.iter().enumerate() {
            *self.at_mut(n, i) = *vi;
        }
        *self.at_mut(n, n) = d;
        let b = self.inv_noise * obs.hty()[k] + self.mean.mean_over_w(w);
        let vz: f64 = v.iter().zip(&self.z).map(|(a, b)| a * b).sum();
        self.z.push((b - vz) / d);
        self.b.push(b);
        self.w.push(w);
        self.active.push(k);
        self.pos[k] = Some(n);
        Ok(())
    }

    /// Drops site `k`, restoring triangularity with Givens rotations.
    pub fn remove(&mut self, k: usize) -> Result<()> {
        let j = self.pos[k].ok_or_else(|| Error::Index(format!("site {k} is not active")))?;
        let n = self.len();
        for i in j + 1..n {
            let a = self.at(i, i);
            let v = self.at(i, j);
            let r = a.hypot(v);
            let (c, s) = (a / r, v / r);
            *self.at_mut(i, i) = r;
            for m in i + 1..n {
                let lmi = self.at(m, i);
                let vm = self.at(m, j);
                *self.at_mut(m, i) = c * lmi + s * vm;
                *self.at_mut(m, j) = -s * lmi + c * vm;
            }
            let (zi, zj) = (self.z[i], self.z[j]);
            self.z[i] = c * zi + s * zj;
            self.z[j] = -s * zi + c * zj;
        }
        // Delete row j and column j.
        let cap = self.cap;
        for i in j..n - 1 {
            for m in 0..=i {
                let src = if m < j { m } else { m + 1 };
                self.l[i * cap + m] = self.l[(i + 1) * cap + src];
            }
        }
        for m in 0..n {
            self.l[(n - 1) * cap + m] = 0.0;
        }
        self.z.remove(j);
        self.b.remove(j);
        self.w.remove(j);
        self.active.remove(j);
        self.pos[k] = None;
        for (p, &site) in self.active.iter().enumerate().skip(j) {
            self.pos[site] = Some(p);
        }
        Ok(())
    }

    /// Changes the variance of an active site by a rank-one modification of the
    /// diagonal entry `1/w`. If the downdate would cancel most of the pivot the
    /// site is removed and re-appended instead.
    pub fn update_w(&mut self, k: usize, w: f64, obs: &Observation) -> Result<()> {
        Self::check_w(w)?;
        let j = self.pos[k].ok_or_else(|| Error::Index(format!("site {k} is not active")))?;
        let old = self.w[j];
        let delta = 1.0 / w - 1.0 / old;
        if delta == 0.0 {
            return Ok(());
        }
        let ljj = self.at(j, j);
        if delta < 0.0 && ljj * ljj + delta < DOWNDATE_FLOOR * ljj * ljj {
            self.remove(k)?;
            if let Err(e) = self.insert(k, w, obs) {
                self.insert(k, old, obs)?;
                return Err(e);
            }
            return Ok(());
        }
        let n = self.len();
        let sign = delta.signum();
        let mut x = vec![0.0; n];
        x[j] = delta.abs().sqrt();
        for c in j..n {
            let lcc = self.at(c, c);
            let xc = x[c];
            let r2 = lcc * lcc + sign * xc * xc;
            if !(r2 > 0.0) {
                // Factor is partially modified; rebuild with the old variance.
                self.refactor(obs, 1.0 / self.inv_noise, self.mean)?;
                return Err(Error::NotPositiveDefinite(format!(
                    "downdate failed when setting w = {w:e} at site {k}"
                )));
            }
            let r = r2.sqrt();
            let (cs, sn) = (r / lcc, xc / lcc);
            *self.at_mut(c, c) = r;
            for i in c + 1..n {
                let lic = (self.at(i, c) + sign * sn * x[i]) / cs;
                *self.at_mut(i, c) = lic;
                x[i] = cs * x[i] - sn * lic;
            }
        }
        self.w[j] = w;
        self.b[j] = self.inv_noise * obs.hty()[k] + self.mean.mean_over_w(w);
        self.resolve_z(j);
        Ok(())
    }

    /// New `σ_x`: only `b` and `z` change.
    pub fn set_mean_model(&mut self, mean: MeanModel, obs: &Observation) {
        self.mean = mean;
        for (j, &k) in self.active.iter().enumerate() {
            self.b[j] = self.inv_noise * obs.hty()[k] + mean.mean_over_w(self.w[j]);
        }
        self.resolve_z(0);
    }

    fn resolve_z(&mut self, from: usize) {
        for i in from..self.len() {
            let mut acc = self.b[i];
            for m in 0..i {
                acc -= self.at(i, m) * self.z[m];
            }
            self.z[i] = acc / self.at(i, i);
        }
    }

    /// Rebuilds from scratch, e.g. after `σ²` or the dictionary changed.
    pub fn refactor(&mut self, obs: &Observation, noise_var: f64, mean: MeanModel) -> Result<()> {
        let sites: Vec<(usize, f64)> = self.active.iter().copied().zip(self.w.iter().copied()).collect();
        *self = Self::build(obs, noise_var, mean, &sites)?;
        Ok(())
    }

    /// `ln N(y; H̄μ, σ²I + H̄WH̄ᵀ)`.
    pub fn log_evidence(&self, obs: &Observation) -> f64 {
        let n = obs.n() as f64;
        let mut acc = -0.5 * n * (2.0 * PI / self.inv_noise).ln() - 0.5 * self.inv_noise * obs.yty();
        for j in 0..self.len() {
            let w = self.w[j];
            let mu = self.mean.mean(w);
            acc += -0.5 * w.ln() - self.at(j, j).ln() - 0.5 * mu * mu / w + 0.5 * self.z[j] * self.z[j];
        }
        acc
    }

    /// `x ↦ L⁻ᵀ x` in place.
    fn back_solve(&self, x: &mut [f64]) {
        let n = self.len();
        for i in (0..n).rev() {
            let mut acc = x[i];
            for m in i + 1..n {
                acc -= self.at(m, i) * x[m];
            }
            x[i] = acc / self.at(i, i);
        }
    }

    /// Conditional mean `η` of the active amplitudes, in factor order.
    pub fn conditional_mean(&self) -> Vec<f64> {
        let mut eta = self.z.clone();
        self.back_solve(&mut eta);
        eta
    }

    /// Draw from `N(η, Γ)` in factor order.
    pub fn sample_amplitudes<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .z
            .iter()
            .map(|z| z + rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.back_solve(&mut x);
        x
    }

    /// The precision factor as a dense lower-triangular matrix.
    pub fn factor(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| if j <= i { self.at(i, j) } else { 0.0 })
    }

    /// `Γ = P⁻¹` as a dense matrix, in factor order.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut cov = DMatrix::zeros(n, n);
        for c in 0..n {
            // column c of L⁻ᵀL⁻¹: L⁻ᵀ (L⁻¹ e_c)
            let mut u = vec![0.0; n];
            u[c] = 1.0 / self.at(c, c);
            for i in c + 1..n {
                let mut acc = 0.0;
                for m in c..i {
                    acc += self.at(i, m) * u[m];
                }
                u[i] = -acc / self.at(i, i);
            }
            self.back_solve(&mut u);
            cov.set_column(c, &DVector::from_vec(u));
        }
        cov
    }

    /// Largest absolute entry of `LLᵀ − P` over the active block, with `P` assembled densely.
    pub fn reconstruction_error(&self, obs: &Observation) -> f64 {
        let l = self.factor();
        let llt = &l * l.transpose();
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut p = self.inv_noise * obs.gram()[(self.active[i], self.active[j])];
                if i == j {
                    p += 1.0 / self.w[i];
                }
                worst = worst.max((llt[(i, j)] - p).abs() / p.abs().max(1.0));
            }
        }
        worst
    }
}
