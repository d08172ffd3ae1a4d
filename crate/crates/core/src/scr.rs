//! Modelled one-year loss engines and the solvency capital requirement.
//!
//! Three engines simulate next year's payments from an observed triangle:
//! plug-in estimates only, a conditional bootstrap of the parameters, and
//! the adjusted inversion method. Each payment vector is turned into a loss
//! `X = Z + R_1 - R_0` and the SCR is an empirical quantile of the losses.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chain_ladder::{estimate, CdrEvaluator, DevFactorEstimates, Gamma};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::triangle::Triangle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Without,
    Bootstrap,
    InversionAdj,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Without, Method::Bootstrap, Method::InversionAdj];

    pub fn name(self) -> &'static str {
        match self {
            Method::Without => "without",
            Method::Bootstrap => "bootstrap",
            Method::InversionAdj => "inversion",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "without" => Ok(Method::Without),
            "bootstrap" => Ok(Method::Bootstrap),
            "inversion" | "inversion_adj" => Ok(Method::InversionAdj),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected without, bootstrap or inversion)"
            ))),
        }
    }
}

/// 1-based rank `ceil(alpha * t)` of the lower empirical quantile.
pub fn quantile_rank(t: usize, alpha: f64) -> usize {
    let x = alpha * t as f64;
    // absorb rounding such as 0.95 * 100 = 95.00000000000001
    let r = (x - 4.0 * f64::EPSILON * x.abs()).ceil();
    (r as usize).clamp(1, t)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("confidence level must lie in (0, 1), got {alpha}")))
    }
}

/// The `ceil(alpha * t)`-th smallest sample.
pub fn empirical_quantile(samples: &[f64], alpha: f64) -> Result<f64> {
    let mut work = samples.to_vec();
    Ok(empirical_quantiles(&mut work, &[alpha])?[0])
}

/// Quantiles at several levels from one sample; sorts `samples` in place.
pub fn empirical_quantiles(samples: &mut [f64], alphas: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Validation("empirical quantile of an empty sample".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    samples.sort_unstable_by(f64::total_cmp);
    Ok(alphas
        .iter()
        .map(|&a| samples[quantile_rank(samples.len(), a) - 1])
        .collect())
}

/// Adjusted bootstrap residues drawn uniformly with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResiduePool {
    raw: Vec<f64>,
    adjusted: Vec<f64>,
}

impl ResiduePool {
    /// A pool of given adjusted residues.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config(format!(
                "bootstrap needs at least 2 residues, got {}",
                values.len()
            )));
        }
        Ok(Self {
            raw: values.clone(),
            adjusted: values,
        })
    }

    /// Unadjusted residues, in column-major order of their cells.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn adjusted(&self) -> &[f64] {
        &self.adjusted
    }

    pub fn len(&self) -> usize {
        self.adjusted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjusted.is_empty()
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.adjusted[rng.random_range(0..self.adjusted.len())]
    }
}

/// Residues `(F - f_k) sqrt(C^g) / sigma_k` of every column `k < n` with
/// positive dispersion, each scaled by `(1 - C^g / sum C^g)^(-1/2)`.
pub fn build_residue_pool(tri: &Triangle, est: &DevFactorEstimates) -> Result<ResiduePool> {
    let n = tri.n();
    let gamma = est.gamma();
    let mut raw = Vec::new();
    let mut adjusted = Vec::new();
    for k in 1..n {
        let sigma = est.sigma(k);
        if sigma <= 0.0 {
            continue;
        }
        let sum_w: f64 = (0..=n - k).map(|i| gamma.weight(tri.get(i, k - 1))).sum();
        for i in 0..=n - k {
            let prev = tri.get(i, k - 1);
            let w = gamma.weight(prev);
            let z = (tri.get(i, k) / prev - est.f(k)) / sigma * w.sqrt();
            raw.push(z);
            adjusted.push(z / (1.0 - w / sum_w).sqrt());
        }
    }
    if adjusted.is_empty() {
        return Err(Error::EmptyPool);
    }
    if adjusted.len() < 2 {
        return Err(Error::Config("bootstrap needs at least 2 residues".into()));
    }
    Ok(ResiduePool { raw, adjusted })
}

/// One draw of the inversion method; index `k - 1` belongs to column `k`.
/// The last column carries no estimation error: `R' = 0`, `M' = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionDraw {
    pub r_prime: Vec<f64>,
    pub m_prime: Vec<f64>,
    pub f_sim: Vec<f64>,
    pub sigma2_sim: Vec<f64>,
    pub a_sim: f64,
}

impl InversionDraw {
    fn identity(n: usize) -> Self {
        Self {
            r_prime: vec![0.0; n],
            m_prime: vec![1.0; n],
            f_sim: vec![0.0; n],
            sigma2_sim: vec![0.0; n],
            a_sim: 1.0,
        }
    }
}

/// Reusable buffers for scenario generation.
#[derive(Debug, Clone)]
pub struct Scratch {
    payments: Vec<f64>,
    f_sim: Vec<f64>,
    sigma_sim: Vec<f64>,
    column: Vec<f64>,
    draw: InversionDraw,
    /// Non-positive simulated factors reset to 1 so far.
    pub resets: usize,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            payments: vec![0.0; n],
            f_sim: vec![0.0; n],
            sigma_sim: vec![0.0; n],
            column: vec![0.0; n + 1],
            draw: InversionDraw::identity(n),
            resets: 0,
        }
    }

    /// Payments `Z[i][n-i+1]` of the latest scenario, index `i - 1`.
    pub fn payments(&self) -> &[f64] {
        &self.payments
    }

    pub fn inversion_draw(&self) -> &InversionDraw {
        &self.draw
    }
}

/// Everything about a triangle that the engines need, precomputed once.
#[derive(Debug, Clone)]
pub struct ScenarioContext {
    n: usize,
    est: DevFactorEstimates,
    /// `C[i][k-1]^gamma` for `i = 0..=n-k`, index `k - 1`.
    col_weights: Vec<Vec<f64>>,
    col_weight_sums: Vec<f64>,
    /// `C[i][n-i]` for `i = 1..=n`, index `i - 1`.
    latest: Vec<f64>,
    latest_inv_sd: Vec<f64>,
    /// Plug-in payments `(f_k - 1) C[i][n-i]`, `k = n-i+1`, index `i - 1`.
    plug_in: Vec<f64>,
    /// Normalised variance weights from the estimates, index `k - 1`.
    variance_weights: Vec<f64>,
    /// Weights of the `sum w M'` factor in the adjustment; defaults to
    /// `variance_weights`.
    adjustment_weights: Vec<f64>,
    evaluator: CdrEvaluator,
}

impl ScenarioContext {
    pub fn new(tri: &Triangle, est: &DevFactorEstimates) -> Result<Self> {
        let evaluator = CdrEvaluator::new(tri, est)?;
        let n = tri.n();
        let gamma = est.gamma();
        let col_weights: Vec<Vec<f64>> = (1..=n)
            .map(|k| (0..=n - k).map(|i| gamma.weight(tri.get(i, k - 1))).collect())
            .collect();
        let col_weight_sums: Vec<f64> = col_weights.iter().map(|w| w.iter().sum()).collect();
        let latest: Vec<f64> = (1..=n).map(|i| tri.latest(i)).collect();
        let latest_inv_sd = latest.iter().map(|&c| 1.0 / gamma.weight(c).sqrt()).collect();
        let plug_in = (1..=n).map(|i| (est.f(n - i + 1) - 1.0) * latest[i - 1]).collect();
        let mut ctx = Self {
            n,
            est: est.clone(),
            col_weights,
            col_weight_sums,
            latest,
            latest_inv_sd,
            plug_in,
            variance_weights: Vec::new(),
            adjustment_weights: Vec::new(),
            evaluator,
        };
        ctx.variance_weights = ctx.variance_weights_for(est.sigma2hat());
        ctx.adjustment_weights = ctx.variance_weights.clone();
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn estimates(&self) -> &DevFactorEstimates {
        &self.est
    }

    pub fn reserve_t0(&self) -> f64 {
        self.evaluator.reserve_t0()
    }

    pub fn evaluator(&self) -> &CdrEvaluator {
        &self.evaluator
    }

    /// Plug-in payments, index `i - 1`.
    pub fn plug_in_payments(&self) -> &[f64] {
        &self.plug_in
    }

    pub fn variance_weights(&self) -> &[f64] {
        &self.variance_weights
    }

    /// Normalised weights `sigma_k^2 C^2 (1/C^g + 1/sum_col C^g)` with
    /// `C = C[n-k+1][k-1]`, for columns `k = 1..n-1`; index `k - 1`.
    pub fn variance_weights_for(&self, sigma2: &[f64]) -> Vec<f64> {
        let n = self.n;
        let gamma = self.est.gamma();
        let mut w = vec![0.0; n];
        for k in 1..n {
            let c = self.latest[n - k];
            w[k - 1] = sigma2[k - 1] * c * c * (1.0 / gamma.weight(c) + 1.0 / self.col_weight_sums[k - 1]);
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
        }
        w
    }

    /// Replaces the weights of the `sum w M'` factor of the adjustment,
    /// e.g. by weights built from the true variances.
    pub fn set_adjustment_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.n {
            return Err(Error::Validation(format!(
                "expected {} adjustment weights, got {}",
                self.n,
                weights.len()
            )));
        }
        self.adjustment_weights = weights;
        Ok(())
    }

    /// Draws next-year payments from factors `f_sim` and standard deviations
    /// `sigma_sim`, resetting non-positive factors to 1.
    #[inline]
    fn fill_payments<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) {
        let n = self.n;
        for i in 1..=n {
            let k = n - i + 1;
            let z: f64 = rng.sample(StandardNormal);
            let mut f = scratch.f_sim[k - 1] + scratch.sigma_sim[k - 1] * self.latest_inv_sd[i - 1] * z;
            if f <= 0.0 {
                f = 1.0;
                scratch.resets += 1;
            }
            scratch.payments[i - 1] = (f - 1.0) * self.latest[i - 1];
        }
    }

    pub fn payments_without<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) {
        for k in 1..=self.n {
            scratch.f_sim[k - 1] = self.est.f(k);
            scratch.sigma_sim[k - 1] = self.est.sigma(k);
        }
        self.fill_payments(rng, scratch);
    }

    pub fn payments_bootstrap<R: Rng + ?Sized>(&self, pool: &ResiduePool, rng: &mut R, scratch: &mut Scratch) {
        let n = self.n;
        for k in 1..n {
            let weights = &self.col_weights[k - 1];
            let f_hat = self.est.f(k);
            let sigma_hat = self.est.sigma(k);
            let mut sum_wf = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                let f = f_hat + sigma_hat / w.sqrt() * pool.draw(rng);
                scratch.column[i] = f;
                sum_wf += w * f;
            }
            let f_bt = sum_wf / self.col_weight_sums[k - 1];
            let ss: f64 = weights
                .iter()
                .zip(&scratch.column)
                .map(|(&w, &f)| w * (f - f_bt) * (f - f_bt))
                .sum();
            scratch.f_sim[k - 1] = f_bt;
            scratch.sigma_sim[k - 1] = (ss / (n - k) as f64).sqrt();
        }
        scratch.f_sim[n - 1] = self.est.f(n);
        scratch.sigma_sim[n - 1] = 0.0;
        self.fill_payments(rng, scratch);
    }

    fn draw_inversion_into<R: Rng + ?Sized>(&self, rng: &mut R, draw: &mut InversionDraw) {
        let n = self.n;
        for k in 1..n {
            let weights = &self.col_weights[k - 1];
            let sum_w = self.col_weight_sums[k - 1];
            let (r, m) = loop {
                let mut sum_z2 = 0.0;
                let mut sum_zw = 0.0;
                for &w in weights {
                    let z: f64 = rng.sample(StandardNormal);
                    sum_z2 += z * z;
                    sum_zw += z * w.sqrt();
                }
                let r = sum_zw / sum_w;
                // sum (z - sqrt(w) r)^2 = sum z^2 - 2 r sum z sqrt(w) + r^2 sum w
                let m = (sum_z2 - 2.0 * r * sum_zw + r * r * sum_w).max(0.0) / (n - k) as f64;
                if m > 0.0 {
                    break (r, m);
                }
            };
            let s2 = self.est.sigma2(k) / m;
            draw.r_prime[k - 1] = r;
            draw.m_prime[k - 1] = m;
            draw.sigma2_sim[k - 1] = s2;
            draw.f_sim[k - 1] = self.est.f(k) - s2.sqrt() * r;
        }
        draw.r_prime[n - 1] = 0.0;
        draw.m_prime[n - 1] = 1.0;
        draw.sigma2_sim[n - 1] = 0.0;
        draw.f_sim[n - 1] = self.est.f(n);
        let mut inv = 0.0;
        let mut fwd = 0.0;
        for k in 1..n {
            inv += self.variance_weights[k - 1] / draw.m_prime[k - 1];
            fwd += self.adjustment_weights[k - 1] * draw.m_prime[k - 1];
        }
        draw.a_sim = if inv > 0.0 && fwd > 0.0 {
            1.0 / (inv * fwd).sqrt()
        } else {
            1.0
        };
    }

    pub fn draw_inversion<R: Rng + ?Sized>(&self, rng: &mut R) -> InversionDraw {
        let mut draw = InversionDraw::identity(self.n);
        self.draw_inversion_into(rng, &mut draw);
        draw
    }

    /// Blended payments `(1 - a) Z_hat + a Z_model` of one inversion draw.
    pub fn payments_inversion<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) {
        let mut draw = std::mem::replace(&mut scratch.draw, InversionDraw::identity(0));
        self.draw_inversion_into(rng, &mut draw);
        for k in 1..=self.n {
            scratch.f_sim[k - 1] = draw.f_sim[k - 1];
            scratch.sigma_sim[k - 1] = draw.sigma2_sim[k - 1].sqrt();
        }
        self.fill_payments(rng, scratch);
        let a = draw.a_sim;
        for (z, &plug) in scratch.payments.iter_mut().zip(&self.plug_in) {
            *z = (1.0 - a) * plug + a * *z;
        }
        scratch.draw = draw;
    }

    /// Loss `X = Z + R_1 - R_0` of the payments held in `scratch`.
    #[inline]
    pub fn loss(&self, scratch: &Scratch) -> f64 {
        self.evaluator.loss(&scratch.payments)
    }
}

pub fn scenario_without<R: Rng + ?Sized>(ctx: &ScenarioContext, rng: &mut R, scratch: &mut Scratch) -> f64 {
    ctx.payments_without(rng, scratch);
    ctx.loss(scratch)
}

pub fn scenario_bootstrap<R: Rng + ?Sized>(
    ctx: &ScenarioContext,
    pool: &ResiduePool,
    rng: &mut R,
    scratch: &mut Scratch,
) -> f64 {
    ctx.payments_bootstrap(pool, rng, scratch);
    ctx.loss(scratch)
}

pub fn scenario_inversion_adj<R: Rng + ?Sized>(ctx: &ScenarioContext, rng: &mut R, scratch: &mut Scratch) -> f64 {
    ctx.payments_inversion(rng, scratch);
    ctx.loss(scratch)
}

/// Scenarios per independent random stream in [`ScrEngine::simulate`].
pub const SCENARIO_BLOCK: usize = 4096;

/// One engine bound to one triangle.
#[derive(Debug, Clone)]
pub struct ScrEngine {
    method: Method,
    ctx: ScenarioContext,
    pool: Option<ResiduePool>,
}

impl ScrEngine {
    pub fn new(tri: &Triangle, est: &DevFactorEstimates, method: Method) -> Result<Self> {
        let ctx = ScenarioContext::new(tri, est)?;
        let pool = match method {
            Method::Bootstrap => Some(build_residue_pool(tri, est)?),
            _ => None,
        };
        Ok(Self { method, ctx, pool })
    }

    /// A bootstrap engine with a caller-supplied residue pool.
    pub fn with_pool(tri: &Triangle, est: &DevFactorEstimates, pool: ResiduePool) -> Result<Self> {
        Ok(Self {
            method: Method::Bootstrap,
            ctx: ScenarioContext::new(tri, est)?,
            pool: Some(pool),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn context(&self) -> &ScenarioContext {
        &self.ctx
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(self.ctx.n())
    }

    #[inline]
    pub fn scenario<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) -> f64 {
        match self.method {
            Method::Without => scenario_without(&self.ctx, rng, scratch),
            Method::Bootstrap => {
                scenario_bootstrap(&self.ctx, self.pool.as_ref().expect("bootstrap pool"), rng, scratch)
            }
            Method::InversionAdj => scenario_inversion_adj(&self.ctx, rng, scratch),
        }
    }

    /// Fills `out` with consecutive scenarios from one stream.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut Scratch) {
        for x in out.iter_mut() {
            *x = self.scenario(rng, scratch);
        }
    }

    /// `t` scenarios; block `b` of [`SCENARIO_BLOCK`] scenarios uses stream
    /// `(seed, b)`, so the sample does not depend on the thread count.
    /// Returns the losses and the number of factor resets.
    pub fn simulate(&self, t: usize, seed: u64) -> (Vec<f64>, usize) {
        let mut losses = vec![0.0; t];
        let resets = losses
            .par_chunks_mut(SCENARIO_BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let mut rng: Stream = stream(seed, b as u64);
                let mut scratch = self.scratch();
                self.fill(&mut rng, chunk, &mut scratch);
                scratch.resets
            })
            .sum();
        (losses, resets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScrResult {
    pub method: Method,
    pub gamma: Gamma,
    pub alpha: f64,
    pub scr: f64,
    pub scenarios: usize,
    pub seed: u64,
    pub reserve_t0: f64,
    /// Largest minus smallest simulated loss.
    pub spread: f64,
    pub resets: usize,
}

/// SCR at one confidence level.
pub fn compute_scr(tri: &Triangle, method: Method, gamma: Gamma, alpha: f64, t: usize, seed: u64) -> Result<ScrResult> {
    Ok(compute_scr_levels(tri, method, gamma, &[alpha], t, seed)?.remove(0))
}

/// SCRs at several confidence levels read off one shared sample.
pub fn compute_scr_levels(
    tri: &Triangle,
    method: Method,
    gamma: Gamma,
    alphas: &[f64],
    t: usize,
    seed: u64,
) -> Result<Vec<ScrResult>> {
    if t == 0 {
        return Err(Error::Config("scenario count must be positive".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Config("no confidence level given".into()));
    }
    for &alpha in alphas {
        check_alpha(alpha)?;
        if alpha >= 0.99 && t < 1000 {
            log::warn!("only {t} scenarios for confidence level {alpha}; the quantile is unreliable");
        }
    }
    let est = estimate(tri, gamma)?;
    let engine = ScrEngine::new(tri, &est, method)?;
    let (mut losses, resets) = engine.simulate(t, seed);
    if resets > 0 {
        log::info!("{resets} simulated factors reset to 1");
    }
    let quantiles = empirical_quantiles(&mut losses, alphas)?;
    let spread = losses[t - 1] - losses[0];
    Ok(alphas
        .iter()
        .zip(quantiles)
        .map(|(&alpha, scr)| ScrResult {
            method,
            gamma,
            alpha,
            scr,
            scenarios: t,
            seed,
            reserve_t0: engine.context().reserve_t0(),
            spread,
            resets,
        })
        .collect())
}
