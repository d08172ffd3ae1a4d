//! Fiducial parameter distribution for a centred normal sample.
//!
//! Observations `X_1..X_n ~ N(0, sigma^2)` give `sigma2hat = sum X^2 / n`.
//! Three ways of simulating the variance behind a modelled loss are compared:
//!
//! * fiducial: `n sigma2hat / M'` with `M' ~ chi2(n)`,
//! * theoretical: `sigma2hat M' / n`, the sampling law of the estimator,
//! * plug-in: `sigma2hat` itself.
//!
//! Only the fiducial variant reaches exact coverage `P(X <= SCR) = alpha`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scr::{empirical_quantiles, quantile_rank};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiducialSetup {
    n: usize,
    sigma2hat: f64,
    alpha: f64,
}

impl FiducialSetup {
    pub fn new(n: usize, sigma2hat: f64, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        if !(sigma2hat > 0.0 && sigma2hat.is_finite()) {
            return Err(Error::Config(format!("sigma2hat must be positive, got {sigma2hat}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("confidence level must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { n, sigma2hat, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma2hat(&self) -> f64 {
        self.sigma2hat
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Perspective {
    Fiducial,
    Theoretical,
    PlugIn,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [Perspective::Fiducial, Perspective::Theoretical, Perspective::PlugIn];

    pub fn name(self) -> &'static str {
        match self {
            Perspective::Fiducial => "fiducial",
            Perspective::Theoretical => "theoretical",
            Perspective::PlugIn => "plug-in",
        }
    }

    /// `sigma2_sim / sigma2hat` for a chi-square draw `m` with `n` degrees of freedom.
    #[inline]
    fn variance_ratio(self, n: usize, m: f64) -> f64 {
        match self {
            Perspective::Fiducial => n as f64 / m,
            Perspective::Theoretical => m / n as f64,
            Perspective::PlugIn => 1.0,
        }
    }
}

/// `chi2(n)` as a sum of `n` squared standard normals, redrawn if zero.
pub fn chi_square<R: Rng + ?Sized>(n: usize, rng: &mut R) -> f64 {
    loop {
        let m: f64 = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * z
            })
            .sum();
        if m > 0.0 {
            return m;
        }
    }
}

/// One simulated variance under `perspective`.
pub fn sample_sigma2<R: Rng + ?Sized>(setup: &FiducialSetup, perspective: Perspective, rng: &mut R) -> f64 {
    let m = chi_square(setup.n, rng);
    setup.sigma2hat * perspective.variance_ratio(setup.n, m)
}

/// A fiducial variance `n sigma2hat / M'`.
pub fn sample_sigma2_fiducial<R: Rng + ?Sized>(setup: &FiducialSetup, rng: &mut R) -> f64 {
    sample_sigma2(setup, Perspective::Fiducial, rng)
}

/// Empirical `alpha`-quantile of `t` modelled losses `sigma_sim Z'`.
pub fn scr_monte_carlo<R: Rng + ?Sized>(
    setup: &FiducialSetup,
    perspective: Perspective,
    t: usize,
    rng: &mut R,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Config("scenario count must be positive".into()));
    }
    let mut losses: Vec<f64> = (0..t)
        .map(|_| {
            let s2 = sample_sigma2(setup, perspective, rng);
            let z: f64 = rng.sample(StandardNormal);
            s2.sqrt() * z
        })
        .collect();
    Ok(empirical_quantiles(&mut losses, &[setup.alpha])?[0])
}

pub fn scr_fiducial<R: Rng + ?Sized>(setup: &FiducialSetup, t: usize, rng: &mut R) -> Result<f64> {
    scr_monte_carlo(setup, Perspective::Fiducial, t, rng)
}

/// `sigmahat` times the Student-t quantile with `n` degrees of freedom.
pub fn scr_fiducial_analytic(setup: &FiducialSetup) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, setup.n as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(setup.sigma2hat.sqrt() * t.inverse_cdf(setup.alpha))
}

/// Success counts of a coverage experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub n: usize,
    pub sigma_true: f64,
    pub replicates: usize,
    pub scenarios: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    /// `successes[p][a]` for perspective `Perspective::ALL[p]` and level `alphas[a]`.
    pub successes: [Vec<u64>; 3],
}

impl CoverageReport {
    pub fn successes(&self, perspective: Perspective, level: usize) -> u64 {
        let p = Perspective::ALL.iter().position(|x| *x == perspective).unwrap();
        self.successes[p][level]
    }

    pub fn coverage(&self, perspective: Perspective, level: usize) -> f64 {
        self.successes(perspective, level) as f64 / self.replicates as f64
    }

    /// Tab-separated table with columns alpha, coverage_fiducial,
    /// coverage_theoretical, coverage_plugin.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "alpha\tcoverage_fiducial\tcoverage_theoretical\tcoverage_plugin")?;
        for (a, alpha) in self.alphas.iter().enumerate() {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}",
                alpha,
                self.coverage(Perspective::Fiducial, a),
                self.coverage(Perspective::Theoretical, a),
                self.coverage(Perspective::PlugIn, a)
            )?;
        }
        Ok(())
    }
}

/// Repeats `replicates` times: draw a sample of size `n` and a true loss
/// from `N(0, sigma_true^2)`, compute the SCR of every perspective from
/// `scenarios` modelled losses and record whether the loss is covered.
///
/// Replicate `j` uses stream `(seed, j)`. Within a replicate the three
/// perspectives share their chi-square and normal draws.
pub fn coverage_experiment(
    sigma_true: f64,
    n: usize,
    alphas: &[f64],
    replicates: usize,
    scenarios: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if !(sigma_true > 0.0 && sigma_true.is_finite()) {
        return Err(Error::Config(format!("sigma_true must be positive, got {sigma_true}")));
    }
    if n == 0 || replicates == 0 || scenarios == 0 {
        return Err(Error::Config("n, replicates and scenarios must be positive".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Config("no confidence level given".into()));
    }
    for &alpha in alphas {
        FiducialSetup::new(n, 1.0, alpha)?;
    }
    if replicates < 10_000 {
        log::warn!("{replicates} replicates give a coarse coverage estimate");
    }
    let ranks: Vec<usize> = alphas.iter().map(|&a| quantile_rank(scenarios, a)).collect();
    let levels = alphas.len();

    let zero = || [vec![0u64; levels], vec![0u64; levels], vec![0u64; levels]];
    let successes = (0..replicates)
        .into_par_iter()
        .fold(
            || (zero(), vec![0.0; scenarios], vec![0.0; scenarios], vec![0.0; scenarios]),
            |(mut acc, mut chi, mut z, mut sample), j| {
                let mut rng = stream(seed, j as u64);
                let sigma2hat = (0..n)
                    .map(|_| {
                        let x: f64 = sigma_true * rng.sample::<f64, _>(StandardNormal);
                        x * x
                    })
                    .sum::<f64>()
                    / n as f64;
                let loss: f64 = sigma_true * rng.sample::<f64, _>(StandardNormal);
                for (m, zz) in chi.iter_mut().zip(z.iter_mut()) {
                    *m = chi_square(n, &mut rng);
                    *zz = rng.sample(StandardNormal);
                }
                let sigmahat = sigma2hat.sqrt();
                for (p, perspective) in Perspective::ALL.iter().enumerate() {
                    for ((x, &m), &zz) in sample.iter_mut().zip(&chi).zip(&z) {
                        *x = sigmahat * perspective.variance_ratio(n, m).sqrt() * zz;
                    }
                    sample.sort_unstable_by(f64::total_cmp);
                    for (a, &r) in ranks.iter().enumerate() {
                        if loss <= sample[r - 1] {
                            acc[p][a] += 1;
                        }
                    }
                }
                (acc, chi, z, sample)
            },
        )
        .map(|(acc, ..)| acc)
        .reduce(zero, |mut a, b| {
            for p in 0..3 {
                for l in 0..levels {
                    a[p][l] += b[p][l];
                }
            }
            a
        });

    Ok(CoverageReport {
        n,
        sigma_true,
        replicates,
        scenarios,
        seed,
        alphas: alphas.to_vec(),
        successes,
    })
}

/// Unnormalised densities `x^(n/2-1) e^(-x/2)` of the theoretical and
/// `x^(-n/2-1) e^(-1/(2x))` of the fiducial variance ratio.
pub fn density_ab(x: f64, n: usize) -> Result<(f64, f64)> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Validation(format!("density argument must be positive, got {x}")));
    }
    let h = n as f64 / 2.0;
    let a = x.powf(h - 1.0) * (-x / 2.0).exp();
    let b = x.powf(-h - 1.0) * (-1.0 / (2.0 * x)).exp();
    Ok((a, b))
}

/// Comma-separated `x,density_a,density_b` on an even grid over `(0, x_max]`.
pub fn write_density_csv<W: Write>(mut out: W, n: usize, x_max: f64, points: usize) -> Result<()> {
    if !(x_max > 0.0) || points == 0 {
        return Err(Error::Config("density grid needs x_max > 0 and at least one point".into()));
    }
    writeln!(out, "x,density_a,density_b")?;
    for p in 1..=points {
        let x = x_max * p as f64 / points as f64;
        let (a, b) = density_ab(x, n)?;
        writeln!(out, "{x},{a:e},{b:e}")?;
    }
    Ok(())
}
