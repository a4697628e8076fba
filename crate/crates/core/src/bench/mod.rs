//! Monte Carlo experiment harness.
//!
//! Every trial draws a fresh Gaussian matrix, a Rademacher block-sparse
//! signal and (optionally) SNR-calibrated noise from streams seeded by
//! `(base_seed, trial, sweep point, role)`, so results do not depend on the
//! order or the number of threads trials run on.

mod experiments;
mod instance;
mod report;

use std::fmt;
use std::str::FromStr;

pub use experiments::{run_bound_check, run_fig1, run_fig2, Instance};
pub use instance::{
    derive_seed, gen_matrix, gen_noise, gen_signal, realized_snr_db, rng_from_seed, splitmix64, Role,
};
pub use report::{
    format_snr, BoundCheckReport, BoundCheckRow, ExperimentReport, MsdPoint, RecoveryPoint, TrialRecord,
};

use crate::error::{Error, Result};
use crate::solvers::SolverConfig;

/// Exact-recovery threshold on `||xbar - xhat||^2 / ||xbar||^2`.
pub const DEFAULT_RECOVERY_TOL: f64 = 1e-6;

pub const FIG1_TRIALS: usize = 200;
pub const FIG2_TRIALS: usize = 2000;
pub const BOUND_CHECK_TRIALS: usize = 100;
pub const PAPER_FIG1_TRIALS: usize = 1000;
pub const PAPER_FIG2_TRIALS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Bzap,
    Zap,
    Bomp,
    L21,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Bzap,
        Algorithm::Zap,
        Algorithm::Bomp,
        Algorithm::L21,
        Algorithm::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bzap => "bzap",
            Algorithm::Zap => "zap",
            Algorithm::Bomp => "bomp",
            Algorithm::L21 => "l21",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parameter(format!("unknown algorithm {s:?}; expected bzap, zap, bomp, l21 or oracle")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub block_len: usize,
    /// Sparsity levels swept by `fig1`; `fig2` and `bound-check` use the first.
    pub k_values: Vec<usize>,
    /// `f64::INFINITY` means noiseless.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub solver: SolverConfig,
    pub recovery_tol: f64,
    /// Reuse one matrix for every trial instead of drawing a fresh one.
    pub fix_matrix: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 40,
            n: 100,
            block_len: 4,
            k_values: vec![4],
            snr_db: vec![f64::INFINITY],
            trials: FIG1_TRIALS,
            base_seed: 2011,
            algorithms: vec![Algorithm::Bzap, Algorithm::Zap, Algorithm::Bomp, Algorithm::L21],
            solver: SolverConfig::default(),
            recovery_tol: DEFAULT_RECOVERY_TOL,
            fix_matrix: false,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    /// Noiseless recovery-rate sweep over `K = 1..=8`.
    pub fn fig1() -> Self {
        Self {
            k_values: (1..=8).collect(),
            ..Self::default()
        }
    }

    /// MSD sweep at `K = 4` over 10..50 dB.
    pub fn fig2() -> Self {
        Self {
            k_values: vec![4],
            snr_db: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            trials: FIG2_TRIALS,
            algorithms: vec![Algorithm::Bzap, Algorithm::Zap, Algorithm::Bomp, Algorithm::L21, Algorithm::Oracle],
            ..Self::default()
        }
    }

    pub fn bound_check() -> Self {
        Self {
            k_values: vec![4],
            snr_db: vec![40.0],
            trials: BOUND_CHECK_TRIALS,
            algorithms: vec![Algorithm::Bzap],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.block_len == 0 {
            return Err(Error::Parameter("m, n and block size must be positive".into()));
        }
        if self.m > self.n {
            return Err(Error::Parameter(format!("need m <= n, got m = {}, n = {}", self.m, self.n)));
        }
        if !self.n.is_multiple_of(self.block_len) {
            return Err(Error::Parameter(format!(
                "block size {} does not divide n = {}",
                self.block_len, self.n
            )));
        }
        let n_blocks = self.n / self.block_len;
        if self.k_values.is_empty() {
            return Err(Error::Parameter("at least one K is required".into()));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k > n_blocks) {
            return Err(Error::Parameter(format!("K = {k} exceeds N = {n_blocks} blocks")));
        }
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Parameter("at least one algorithm is required".into()));
        }
        if !(self.recovery_tol > 0.0) {
            return Err(Error::Parameter(format!("recovery tolerance must be positive, got {}", self.recovery_tol)));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::Parameter("SNR values must be finite or +inf".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Parameter("thread count must be at least 1".into()));
        }
        self.solver.validate()
    }

    pub fn num_blocks(&self) -> usize {
        self.n / self.block_len
    }
}
