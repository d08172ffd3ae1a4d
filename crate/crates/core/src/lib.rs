//! One-year reserve risk for chain-ladder triangles.
//!
//! Chain-ladder estimation, one-year claims development losses, solvency
//! capital requirements with and without parameter risk, and a Monte-Carlo
//! backtest of the resulting probability of solvency.

pub mod backtest;
pub mod chain_ladder;
pub mod cli;
pub mod error;
pub mod fiducial;
pub mod rng;
pub mod scr;
pub mod triangle;
pub mod true_world;

pub use chain_ladder::{
    cdr_loss, estimate, estimate_with, reserve_t0, reserve_t1, CdrEvaluator, DevFactorEstimates, Gamma, LastFactor,
    Reserves,
};
pub use error::{Error, Result};
pub use scr::{compute_scr, compute_scr_levels, empirical_quantile, Method, ScrEngine, ScrResult};
pub use triangle::{dev_ratios, extend, parse_triangle, ExtendedTriangle, NextDiagonal, Triangle};
pub use true_world::{simulate_next_diagonal, simulate_triangle, TrueParams};
pub use backtest::{run_backtest, BacktestConfig, BacktestReport};
