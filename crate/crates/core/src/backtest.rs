//! Nested Monte-Carlo backtest of the probability of solvency.
//!
//! Each outer replicate draws a triangle from the true model, the realised
//! one-year loss from a true next diagonal and, independently, the SCR of
//! every method from its own simulated losses. The report counts how often
//! the realised loss stays below the SCR.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain_ladder::{estimate, CdrEvaluator, Gamma};
use crate::error::{Error, Result};
use crate::rng::{replicate_stream, LANE_METHOD_BASE, LANE_TRIANGLE, LANE_TRUE_DIAGONAL};
use crate::scr::{quantile_rank, Method, ScrEngine};
use crate::true_world::{
    simulate_next_diagonal, simulate_triangle, TrueParams, REFERENCE_F, REFERENCE_F0, REFERENCE_SIGMA0,
    REFERENCE_SIGMA_SCALED,
};

/// Redraws allowed per replicate before the run is aborted.
const MAX_ATTEMPTS: u8 = u8::MAX;

/// File layout of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub gamma: u32,
    pub f0: f64,
    pub sigma0: f64,
    pub f: Vec<f64>,
    /// Standard deviations quoted for a cell of size `f0`.
    pub sigma_scaled: Vec<f64>,
    pub s: usize,
    pub t: usize,
    pub alphas: Vec<f64>,
    pub methods: Vec<String>,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub true_params: TrueParams,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub s: usize,
    pub t: usize,
    pub master_seed: u64,
    pub workers: usize,
    sigma_scaled: Vec<f64>,
}

impl BacktestConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let gamma = Gamma::try_from(file.gamma)?;
        let true_params = TrueParams::from_scaled(gamma, file.f0, file.sigma0, file.f, &file.sigma_scaled)?;
        let methods = file
            .methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Method>>>()?;
        let config = Self {
            true_params,
            methods,
            alphas: file.alphas,
            s: file.s,
            t: file.t,
            master_seed: file.master_seed,
            workers: file.workers,
            sigma_scaled: file.sigma_scaled,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Reference parameters at desk scale, `s = 20000`, `t = 2000`.
    pub fn reference(gamma: Gamma) -> Self {
        Self::from_file(ConfigFile {
            gamma: gamma.exponent() as u32,
            f0: REFERENCE_F0,
            sigma0: REFERENCE_SIGMA0,
            f: REFERENCE_F.to_vec(),
            sigma_scaled: REFERENCE_SIGMA_SCALED.to_vec(),
            s: 20_000,
            t: 2_000,
            alphas: vec![0.9, 0.95, 0.99, 0.995],
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            master_seed: 20_240_101,
            workers: 0,
        })
        .expect("reference configuration is valid")
    }

    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            gamma: self.true_params.gamma.exponent() as u32,
            f0: self.true_params.f0,
            sigma0: self.true_params.sigma0,
            f: self.true_params.f.clone(),
            sigma_scaled: self.sigma_scaled.clone(),
            s: self.s,
            t: self.t,
            alphas: self.alphas.clone(),
            methods: self.methods.iter().map(|m| m.name().to_string()).collect(),
            master_seed: self.master_seed,
            workers: self.workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.true_params.validate()?;
        if self.s == 0 || self.t == 0 {
            return Err(Error::Config("s and t must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no method selected".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("no confidence level given".into()));
        }
        for &alpha in &self.alphas {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Config(format!("confidence level must lie in (0, 1), got {alpha}")));
            }
            if (self.t as f64) * (1.0 - alpha) < 1.0 {
                log::warn!("t = {} is too small to resolve the {alpha} quantile", self.t);
            }
        }
        if self.s as u64 >= 1 << 48 {
            return Err(Error::Config("s is too large".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub alpha: f64,
    pub successes: u64,
    pub s: usize,
    pub probability: f64,
    pub std_error: f64,
}

/// Counters collected over a run; all of them are deterministic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunCounts {
    /// Factors reset to 1 while simulating triangles.
    pub triangle_resets: u64,
    /// Rejected non-positive starting values.
    pub start_redraws: u64,
    /// Factors reset to 1 in true next diagonals.
    pub diagonal_resets: u64,
    /// Factors reset to 1 in modelled scenarios.
    pub scenario_resets: u64,
    /// Replicates drawn again after an estimation failure.
    pub replicate_redraws: u64,
    /// Simulated triangle cells.
    pub cells: u64,
}

impl RunCounts {
    fn merge(mut self, other: Self) -> Self {
        self.triangle_resets += other.triangle_resets;
        self.start_redraws += other.start_redraws;
        self.diagonal_resets += other.diagonal_resets;
        self.scenario_resets += other.scenario_resets;
        self.replicate_redraws += other.replicate_redraws;
        self.cells += other.cells;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config: ConfigFile,
    pub counts: RunCounts,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub rows: Vec<ReportRow>,
    pub manifest: Manifest,
}

impl BacktestReport {
    pub fn row(&self, method: Method, alpha: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.alpha == alpha)
    }

    /// True when everything except the wall time and worker count agrees.
    pub fn same_results(&self, other: &Self) -> bool {
        // the worker count is recorded but must not change anything else
        let config = ConfigFile { workers: other.manifest.config.workers, ..self.manifest.config.clone() };
        self.rows == other.rows && config == other.manifest.config && self.manifest.counts == other.manifest.counts
    }

    /// Columns `method,alpha,successes,s,probability,std_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,alpha,successes,s,probability,std_error")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                r.method, r.alpha, r.successes, r.s, r.probability, r.std_error
            )?;
        }
        Ok(())
    }

    pub fn manifest_toml(&self) -> Result<String> {
        toml::to_string(&self.manifest).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let gamma = self.manifest.config.gamma;
        let _ = writeln!(
            out,
            "probability of solvency, gamma = {gamma}, s = {}, t = {}",
            self.manifest.config.s, self.manifest.config.t
        );
        let _ = writeln!(out, "{:<10} {:>7} {:>10} {:>9}", "method", "alpha", "P [%]", "s.e. [%]");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>10.2} {:>9.2}",
                r.method.name(),
                r.alpha,
                100.0 * r.probability,
                100.0 * r.std_error
            );
        }
        let c = &self.manifest.counts;
        let _ = writeln!(
            out,
            "resets: triangle {}, diagonal {}, scenario {}; redraws: start {}, replicate {}; {:.1} s",
            c.triangle_resets, c.diagonal_resets, c.scenario_resets, c.start_redraws, c.replicate_redraws,
            self.manifest.wall_time_secs
        );
        out
    }
}

/// Binomial standard error `sqrt(p (1 - p) / s)`.
pub fn solvency_se(p_hat: f64, s: usize) -> f64 {
    (p_hat * (1.0 - p_hat) / s as f64).max(0.0).sqrt()
}

struct Workspace {
    losses: Vec<f64>,
}

/// Success counts of one replicate, `[method][alpha]` flattened.
fn run_replicate(config: &BacktestConfig, j: u64, ranks: &[usize], ws: &mut Workspace) -> Result<(Vec<u64>, RunCounts)> {
    let params = &config.true_params;
    let seed = config.master_seed;
    let levels = ranks.len();
    let mut counts = RunCounts::default();
    for attempt in 0..MAX_ATTEMPTS {
        let sim = simulate_triangle(params, &mut replicate_stream(seed, j, attempt, LANE_TRIANGLE));
        counts.triangle_resets += sim.resets as u64;
        counts.start_redraws += sim.redraws as u64;
        let n = params.n();
        counts.cells += ((n + 1) * (n + 2) / 2) as u64;
        let tri = sim.triangle;
        let outcome = (|| -> Result<(Vec<u64>, u64, u64)> {
            let est = estimate(&tri, params.gamma)?;
            let mut rng = replicate_stream(seed, j, attempt, LANE_TRUE_DIAGONAL);
            let (diag, diag_resets) = simulate_next_diagonal(&tri, params, &mut rng)?;
            let loss = CdrEvaluator::new(&tri, &est)?.loss(diag.payments());
            let mut successes = vec![0u64; config.methods.len() * levels];
            let mut scenario_resets = 0;
            for (m, &method) in config.methods.iter().enumerate() {
                let engine = ScrEngine::new(&tri, &est, method)?;
                let lane = LANE_METHOD_BASE + Method::ALL.iter().position(|x| *x == method).unwrap() as u8;
                let mut rng = replicate_stream(seed, j, attempt, lane);
                let mut scratch = engine.scratch();
                engine.fill(&mut rng, &mut ws.losses, &mut scratch);
                scenario_resets += scratch.resets as u64;
                ws.losses.sort_unstable_by(f64::total_cmp);
                for (a, &r) in ranks.iter().enumerate() {
                    if loss <= ws.losses[r - 1] {
                        successes[m * levels + a] += 1;
                    }
                }
            }
            Ok((successes, diag_resets as u64, scenario_resets))
        })();
        match outcome {
            Ok((successes, diag_resets, scenario_resets)) => {
                counts.diagonal_resets += diag_resets;
                counts.scenario_resets += scenario_resets;
                return Ok((successes, counts));
            }
            Err(e) => {
                counts.replicate_redraws += 1;
                log::info!("replicate {j}, attempt {attempt}: {e}; redrawing");
            }
        }
    }
    Err(Error::Estimation(format!(
        "replicate {j} failed {MAX_ATTEMPTS} times in a row"
    )))
}

pub fn run_backtest(config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate()?;
    let start = Instant::now();
    let ranks: Vec<usize> = config.alphas.iter().map(|&a| quantile_rank(config.t, a)).collect();
    let cells = config.methods.len() * ranks.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let (successes, counts) = pool.install(|| {
        (0..config.s as u64)
            .into_par_iter()
            .map_init(
                || Workspace {
                    losses: vec![0.0; config.t],
                },
                |ws, j| run_replicate(config, j, &ranks, ws),
            )
            .try_fold(
                || (vec![0u64; cells], RunCounts::default()),
                |(mut acc, counts), item| {
                    let (succ, c) = item?;
                    acc.iter_mut().zip(succ).for_each(|(a, b)| *a += b);
                    Ok::<_, Error>((acc, counts.merge(c)))
                },
            )
            .try_reduce(
                || (vec![0u64; cells], RunCounts::default()),
                |(mut a, ca), (b, cb)| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok((a, ca.merge(cb)))
                },
            )
    })?;

    if counts.cells > 0 {
        let freq = counts.triangle_resets as f64 / counts.cells as f64;
        log::info!("factor resets per simulated cell: {freq:.2e}");
    }

    let levels = ranks.len();
    let rows = config
        .methods
        .iter()
        .enumerate()
        .flat_map(|(m, &method)| {
            let successes = &successes;
            config.alphas.iter().enumerate().map(move |(a, &alpha)| {
                let k = successes[m * levels + a];
                let p = k as f64 / config.s as f64;
                ReportRow {
                    method,
                    alpha,
                    successes: k,
                    s: config.s,
                    probability: p,
                    std_error: solvency_se(p, config.s),
                }
            })
        })
        .collect();

    Ok(BacktestReport {
        rows,
        manifest: Manifest {
            config: config.to_file(),
            counts,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}
