//! Mack chain-ladder estimation, best-estimate reserves at `t = 0` and
//! one-year re-reserving at `t = 1`.
//!
//! One estimator serves both the observed triangle and the extended
//! trapezoid: column `k` uses every row that holds a value at development
//! year `k`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::triangle::{extend, ExtendedTriangle, NextDiagonal, Triangle};

/// Weighting exponent of the variance assumption `Var[F | C] = sigma^2 / C^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gamma {
    Zero,
    One,
}

impl Gamma {
    pub fn exponent(self) -> u8 {
        match self {
            Gamma::Zero => 0,
            Gamma::One => 1,
        }
    }

    /// `c^gamma`.
    #[inline]
    pub fn weight(self, c: f64) -> f64 {
        match self {
            Gamma::Zero => 1.0,
            Gamma::One => c,
        }
    }
}

impl TryFrom<u32> for Gamma {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        match value {
            0 => Ok(Gamma::Zero),
            1 => Ok(Gamma::One),
            other => Err(Error::Config(format!("gamma must be 0 or 1, got {other}"))),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" => Ok(Gamma::Zero),
            "1" => Ok(Gamma::One),
            other => Err(Error::Config(format!("gamma must be 0 or 1, got '{other}'"))),
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.exponent())
    }
}

/// Treatment of the last development factor `f_n`.
///
/// `Observed` takes `f_n` from the data like every other column (a single
/// ratio at `t = 0`); on triangles whose last column does not develop this
/// yields exactly 1. `Unity` fixes `f_n = 1` without looking at the data.
/// In both cases `sigma_n^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LastFactor {
    #[default]
    Observed,
    Unity,
}

/// Estimated development factors `f_1..f_n` and variances `sigma_1^2..sigma_n^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DevFactorEstimates {
    gamma: Gamma,
    last_factor: LastFactor,
    fhat: Vec<f64>,
    sigma2hat: Vec<f64>,
}

impl DevFactorEstimates {
    /// `fhat[k - 1]` and `sigma2hat[k - 1]` belong to development year `k`.
    pub fn new(gamma: Gamma, last_factor: LastFactor, fhat: Vec<f64>, sigma2hat: Vec<f64>) -> Result<Self> {
        let n = fhat.len();
        if n < 2 || sigma2hat.len() != n {
            return Err(Error::Validation(format!(
                "need matching factor and variance vectors of length >= 2, got {} and {}",
                n,
                sigma2hat.len()
            )));
        }
        if let Some(k) = fhat.iter().position(|f| !f.is_finite()) {
            return Err(Error::Validation(format!("f[{}] is not finite", k + 1)));
        }
        if let Some(k) = sigma2hat.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Validation(format!("sigma^2[{}] = {} is not a variance", k + 1, sigma2hat[k])));
        }
        if sigma2hat[n - 1] != 0.0 {
            return Err(Error::Validation("sigma^2 of the last development year must be 0".into()));
        }
        if last_factor == LastFactor::Unity && fhat[n - 1] != 1.0 {
            return Err(Error::Validation("last development factor must be 1".into()));
        }
        Ok(Self {
            gamma,
            last_factor,
            fhat,
            sigma2hat,
        })
    }

    pub fn n(&self) -> usize {
        self.fhat.len()
    }

    pub fn gamma(&self) -> Gamma {
        self.gamma
    }

    pub fn last_factor(&self) -> LastFactor {
        self.last_factor
    }

    /// `f_k`, `1 <= k <= n`.
    #[inline]
    pub fn f(&self, k: usize) -> f64 {
        self.fhat[k - 1]
    }

    #[inline]
    pub fn sigma2(&self, k: usize) -> f64 {
        self.sigma2hat[k - 1]
    }

    #[inline]
    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma2hat[k - 1].sqrt()
    }

    pub fn fhat(&self) -> &[f64] {
        &self.fhat
    }

    pub fn sigma2hat(&self) -> &[f64] {
        &self.sigma2hat
    }
}

fn check_weights(rows: &[&[f64]], gamma: Gamma) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        for (k, &c) in row.iter().enumerate() {
            if gamma == Gamma::One && c <= 0.0 {
                return Err(Error::Validation(format!(
                    "C[{i}][{k}] = {c}: volume weighting needs positive cumulative values"
                )));
            }
        }
    }
    Ok(())
}

fn estimate_rows(rows: &[&[f64]], n: usize, gamma: Gamma, last: LastFactor) -> Result<(Vec<f64>, Vec<f64>)> {
    check_weights(rows, gamma)?;
    let mut fhat = Vec::with_capacity(n);
    let mut sigma2hat = Vec::with_capacity(n);
    for k in 1..=n {
        if k == n && last == LastFactor::Unity {
            fhat.push(1.0);
            sigma2hat.push(0.0);
            continue;
        }
        let mut sum_w = 0.0;
        let mut sum_wf = 0.0;
        let mut obs = 0usize;
        for (i, row) in rows.iter().enumerate().take_while(|(_, r)| r.len() > k) {
            let prev = row[k - 1];
            if prev == 0.0 {
                return Err(Error::Validation(format!(
                    "ratio F[{i}][{k}] undefined: C[{i}][{}] is zero",
                    k - 1
                )));
            }
            let w = gamma.weight(prev);
            sum_w += w;
            sum_wf += w * (row[k] / prev);
            obs += 1;
        }
        if obs == 0 || sum_w <= 0.0 {
            return Err(Error::Estimation(format!("development year {k} has zero total weight")));
        }
        let f = sum_wf / sum_w;
        let s2 = if k < n && obs >= 2 {
            let ss: f64 = rows
                .iter()
                .take(obs)
                .map(|row| {
                    let d = row[k] / row[k - 1] - f;
                    gamma.weight(row[k - 1]) * d * d
                })
                .sum();
            ss / (obs - 1) as f64
        } else {
            0.0
        };
        fhat.push(f);
        sigma2hat.push(s2);
    }
    Ok((fhat, sigma2hat))
}

/// Chain-ladder estimates with the observed last factor.
pub fn estimate(tri: &Triangle, gamma: Gamma) -> Result<DevFactorEstimates> {
    estimate_with(tri, gamma, LastFactor::default())
}

/// `f_k = sum_i C^g F / sum_i C^g` and
/// `sigma_k^2 = 1/(n-k) sum_i C^g (F - f_k)^2` over rows `i = 0..=n-k`.
pub fn estimate_with(tri: &Triangle, gamma: Gamma, last: LastFactor) -> Result<DevFactorEstimates> {
    let rows: Vec<&[f64]> = tri.rows().collect();
    let (fhat, sigma2hat) = estimate_rows(&rows, tri.n(), gamma, last)?;
    DevFactorEstimates::new(gamma, last, fhat, sigma2hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reserves {
    /// Reserve of accident year `i`, index `i` in `0..=n`; year 0 is fully developed.
    pub per_year: Vec<f64>,
    pub total: f64,
}

fn project(rows: &[&[f64]], fhat: &[f64]) -> Reserves {
    let n = fhat.len();
    let per_year: Vec<f64> = rows
        .iter()
        .map(|row| {
            let latest = *row.last().unwrap();
            let d = row.len() - 1;
            let cdf: f64 = (d + 1..=n).map(|k| fhat[k - 1]).product();
            latest * cdf - latest
        })
        .collect();
    let total = per_year.iter().sum();
    Reserves { per_year, total }
}

/// Best-estimate reserve `R_0` by accident year and in total.
pub fn reserve_t0(tri: &Triangle, est: &DevFactorEstimates) -> Result<Reserves> {
    if est.n() != tri.n() {
        return Err(Error::Validation(format!(
            "estimates cover {} development years, triangle has {}",
            est.n(),
            tri.n()
        )));
    }
    let rows: Vec<&[f64]> = tri.rows().collect();
    Ok(project(&rows, est.fhat()))
}

/// Total reserve `R_1` at `t = 1`: factors are re-estimated on the extended
/// trapezoid and every accident year is projected from its new latest value.
pub fn reserve_t1(ext: &ExtendedTriangle, gamma: Gamma, last: LastFactor) -> Result<f64> {
    let rows = ext.rows();
    let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let n = ext.base().n();
    let (fhat, _) = estimate_rows(&views, n, gamma, last)?;
    Ok(project(&views, &fhat).total)
}

/// One-year claims development loss `X = Z + R_1 - R_0`.
pub fn cdr_loss(tri: &Triangle, est: &DevFactorEstimates, diag: &NextDiagonal) -> Result<f64> {
    let r0 = reserve_t0(tri, est)?.total;
    let ext = extend(tri, diag)?;
    let r1 = reserve_t1(&ext, est.gamma(), est.last_factor())?;
    Ok(diag.total() + r1 - r0)
}

/// Precomputed one-year loss for a fixed triangle.
///
/// Re-estimation on the extended trapezoid only adds one observation per
/// column, so the triangle's weighted sums are cached and each candidate
/// diagonal costs `O(n)`. Agrees with [`cdr_loss`] up to rounding.
#[derive(Debug, Clone)]
pub struct CdrEvaluator {
    n: usize,
    gamma: Gamma,
    last: LastFactor,
    latest: Vec<f64>,
    latest_weight: Vec<f64>,
    base_wf: Vec<f64>,
    base_w: Vec<f64>,
    reserve_t0: f64,
}

impl CdrEvaluator {
    pub fn new(tri: &Triangle, est: &DevFactorEstimates) -> Result<Self> {
        let gamma = est.gamma();
        let reserve_t0 = reserve_t0(tri, est)?.total;
        let n = tri.n();
        let latest = tri.diagonal();
        let latest_weight = latest.iter().map(|&c| gamma.weight(c)).collect();
        let mut base_wf = Vec::with_capacity(n);
        let mut base_w = Vec::with_capacity(n);
        for k in 1..=n {
            let (mut sw, mut swf) = (0.0, 0.0);
            for i in 0..=n - k {
                let prev = tri.get(i, k - 1);
                let w = gamma.weight(prev);
                sw += w;
                swf += w * (tri.get(i, k) / prev);
            }
            base_w.push(sw);
            base_wf.push(swf);
        }
        Ok(Self {
            n,
            gamma,
            last: est.last_factor(),
            latest,
            latest_weight,
            base_wf,
            base_w,
            reserve_t0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> Gamma {
        self.gamma
    }

    pub fn reserve_t0(&self) -> f64 {
        self.reserve_t0
    }

    /// `R_1` for payments `payments[i - 1] = Z[i][n-i+1]`, `i = 1..=n`.
    pub fn reserve_t1(&self, payments: &[f64]) -> f64 {
        debug_assert_eq!(payments.len(), self.n);
        let n = self.n;
        let mut reserve = 0.0;
        // cumulative product of the re-estimated factors f_{n-i+2..n}
        let mut cdf = 1.0;
        for i in 1..=n {
            let latest = self.latest[i] + payments[i - 1];
            reserve += latest * (cdf - 1.0);
            let k = n - i + 1;
            let f = if k == n && self.last == LastFactor::Unity {
                1.0
            } else {
                let w = self.latest_weight[i];
                let ratio = latest / self.latest[i];
                (self.base_wf[k - 1] + w * ratio) / (self.base_w[k - 1] + w)
            };
            cdf *= f;
        }
        reserve
    }

    /// `X = sum Z + R_1 - R_0`.
    #[inline]
    pub fn loss(&self, payments: &[f64]) -> f64 {
        payments.iter().sum::<f64>() + self.reserve_t1(payments) - self.reserve_t0
    }
}
