use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::instance::{derive_seed, gen_matrix, gen_noise, gen_signal, Role};
use super::report::{BoundCheckReport, BoundCheckRow, ExperimentReport, TrialRecord};
use super::{Algorithm, ExperimentConfig};
use crate::block::{BlockSignal, BlockStructure, BlockSupport};
use crate::error::{Error, Result};
use crate::projection::{pinv_tall, submatrix_cols, SensingSystem, DEFAULT_RANK_TOL};
use crate::solvers::{bomp_solve, bzap_solve, l21_solve, oracle_solve, zap_solve};
use crate::stability::{proof_intermediate_checks, BoundTerms, StabilityContext};

/// One random problem: `y = A xbar + v`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub trial_id: u64,
    pub system: SensingSystem,
    pub xbar: BlockSignal,
    pub support: BlockSupport,
    pub noise: DVector<f64>,
    pub snr_db: f64,
    /// Per-component noise scale `||v|| / sqrt(m)`.
    pub sigma: f64,
}

impl Instance {
    /// Matrix draws depend only on the trial, signal draws on the trial and
    /// `k`, noise draws on the trial and the SNR. Sweep points thus share
    /// matrices (and, across SNRs, signals) for the same trial.
    pub fn generate(cfg: &ExperimentConfig, trial_id: u64, k: usize, snr_db: f64) -> Result<Self> {
        let structure = BlockStructure::from_len(cfg.n, cfg.block_len)?;
        let matrix_trial = if cfg.fix_matrix { 0 } else { trial_id };
        let a = gen_matrix(cfg.m, cfg.n, derive_seed(cfg.base_seed, matrix_trial, 0, Role::Matrix));
        let (xbar, support) = gen_signal(structure, k, derive_seed(cfg.base_seed, trial_id, k as u64, Role::Signal))?;
        let (noise, sigma) = if snr_db == f64::INFINITY {
            (DVector::zeros(cfg.m), 0.0)
        } else {
            gen_noise(&a, &xbar, snr_db, derive_seed(cfg.base_seed, trial_id, snr_db.to_bits(), Role::Noise))?
        };
        let y = &a * xbar.values() + &noise;
        let system = SensingSystem::build(a, y, DEFAULT_RANK_TOL)?;
        Ok(Self {
            trial_id,
            system,
            xbar,
            support,
            noise,
            snr_db,
            sigma,
        })
    }

    pub fn structure(&self) -> BlockStructure {
        self.xbar.structure()
    }

    pub fn solve(&self, cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<(BlockSignal, usize)> {
        let structure = self.structure();
        let k = self.support.len();
        match algorithm {
            Algorithm::Bzap => bzap_solve(&self.system, structure, &cfg.solver).map(|(x, t)| (x, t.iterations)),
            Algorithm::Zap => {
                let (x, t) = zap_solve(&self.system, &cfg.solver)?;
                Ok((x.with_structure(structure)?, t.iterations))
            }
            Algorithm::L21 => l21_solve(&self.system, structure, &cfg.solver).map(|(x, t)| (x, t.iterations)),
            Algorithm::Bomp if k == 0 => Ok((BlockSignal::zeros(structure), 0)),
            Algorithm::Bomp => bomp_solve(&self.system, structure, k).map(|x| (x, k)),
            Algorithm::Oracle => oracle_solve(&self.system, &self.support).map(|x| (x, 0)),
        }
    }

    /// `sigma^2 tr[(A_T^T A_T)^{-1}]`, evaluated as `sigma^2 ||A_T^+||_F^2`.
    pub fn oracle_prediction(&self) -> Result<f64> {
        if self.support.is_empty() || self.sigma == 0.0 {
            return Ok(0.0);
        }
        let a_t = submatrix_cols(self.system.a(), &self.support)?;
        if a_t.ncols() > a_t.nrows() {
            return Err(Error::RankDeficient("support wider than the measurement count".into()));
        }
        let pinv: DMatrix<f64> = pinv_tall(&a_t, DEFAULT_RANK_TOL)?;
        Ok(self.sigma * self.sigma * pinv.norm_squared())
    }

    fn record(&self, cfg: &ExperimentConfig, algorithm: Algorithm, oracle_prediction: f64) -> TrialRecord {
        let start = Instant::now();
        let outcome = self.solve(cfg, algorithm);
        let wall_time = start.elapsed();
        let signal_energy = self.xbar.values().norm_squared();
        let (squared_error, iterations, failed) = match outcome {
            Ok((xhat, iterations)) => ((xhat.values() - self.xbar.values()).norm_squared(), iterations, false),
            Err(_) => (f64::INFINITY, 0, true),
        };
        let squared_relative_deviation = if signal_energy > 0.0 {
            squared_error / signal_energy
        } else {
            squared_error
        };
        TrialRecord {
            trial_id: self.trial_id,
            algorithm,
            k: self.support.len(),
            snr_db: self.snr_db,
            squared_error,
            signal_energy,
            squared_relative_deviation,
            exact: !failed && squared_relative_deviation < cfg.recovery_tol,
            iterations,
            failed,
            oracle_prediction,
            wall_time,
        }
    }
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Parameter(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn failed_records(cfg: &ExperimentConfig, trial_id: u64, k: usize, snr_db: f64) -> Vec<TrialRecord> {
    cfg.algorithms
        .iter()
        .map(|&algorithm| TrialRecord {
            trial_id,
            algorithm,
            k,
            snr_db,
            squared_error: f64::INFINITY,
            signal_energy: (k * cfg.block_len) as f64,
            squared_relative_deviation: f64::INFINITY,
            exact: false,
            iterations: 0,
            failed: true,
            oracle_prediction: f64::NAN,
            wall_time: Default::default(),
        })
        .collect()
}

fn run_points(cfg: &ExperimentConfig, points: &[(usize, f64)], with_oracle_formula: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    let tasks: Vec<(usize, f64, u64)> = points
        .iter()
        .flat_map(|&(k, snr)| (0..cfg.trials as u64).map(move |t| (k, snr, t)))
        .collect();
    let records: Vec<Vec<TrialRecord>> = in_pool(cfg.threads, || {
        tasks
            .par_iter()
            .map(|&(k, snr, trial)| match Instance::generate(cfg, trial, k, snr) {
                Ok(inst) => {
                    let prediction = if with_oracle_formula {
                        inst.oracle_prediction().unwrap_or(f64::NAN)
                    } else {
                        0.0
                    };
                    cfg.algorithms
                        .iter()
                        .map(|&alg| inst.record(cfg, alg, prediction))
                        .collect()
                }
                Err(_) => failed_records(cfg, trial, k, snr),
            })
            .collect()
    })?;
    Ok(ExperimentReport::from_records(
        records.into_iter().flatten().collect(),
        &cfg.algorithms,
        with_oracle_formula,
    ))
}

/// Noiseless exact-recovery rate for every `K` in `cfg.k_values`.
pub fn run_fig1(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let points: Vec<(usize, f64)> = cfg.k_values.iter().map(|&k| (k, f64::INFINITY)).collect();
    run_points(cfg, &points, false)
}

/// Mean-square deviation per SNR at the first `K` of `cfg.k_values`, plus
/// the closed-form oracle prediction.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let k = *cfg
        .k_values
        .first()
        .ok_or_else(|| Error::Parameter("fig2 needs a sparsity level".into()))?;
    if k == 0 {
        return Err(Error::Parameter("fig2 needs K >= 1 (SNR undefined for a zero signal)".into()));
    }
    if cfg.snr_db.is_empty() {
        return Err(Error::Parameter("fig2 needs at least one SNR".into()));
    }
    let points: Vec<(usize, f64)> = cfg.snr_db.iter().map(|&s| (k, s)).collect();
    run_points(cfg, &points, true)
}

/// Solves each trial with BZAP and checks the stability bound and its
/// intermediate inequalities wherever the estimate lands in the ball.
pub fn run_bound_check(cfg: &ExperimentConfig) -> Result<BoundCheckReport> {
    cfg.validate()?;
    let k = cfg.k_values[0];
    let snr = *cfg
        .snr_db
        .first()
        .ok_or_else(|| Error::Parameter("bound check needs an SNR".into()))?;
    if k == 0 {
        return Err(Error::Parameter("bound check needs K >= 1".into()));
    }
    let rows = in_pool(cfg.threads, || {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| bound_row(cfg, trial, k, snr))
            .collect::<Vec<_>>()
    })?;
    Ok(BoundCheckReport { rows })
}

fn bound_row(cfg: &ExperimentConfig, trial_id: u64, k: usize, snr: f64) -> BoundCheckRow {
    let checked = || -> Result<BoundCheckRow> {
        let inst = Instance::generate(cfg, trial_id, k, snr)?;
        let (xhat, _) = bzap_solve(&inst.system, inst.structure(), &cfg.solver)?;
        let ctx = StabilityContext::new(inst.xbar.clone(), inst.support.clone(), cfg.solver.alpha, inst.noise.clone())?;
        let report = proof_intermediate_checks(&inst.system, &ctx, &xhat)?;
        let scalar = BoundTerms::compute(&inst.system, &inst.support.to_scalar(), &inst.noise)?;
        Ok(BoundCheckRow {
            trial_id,
            in_ball: report.in_ball,
            error: report.error,
            bound: report.terms.total(),
            zap_bound: scalar.total(),
            leading_ratio: scalar.leading_coefficient / report.terms.leading_coefficient,
            intermediates_hold: report.all_hold(),
            failed: false,
        })
    };
    checked().unwrap_or(BoundCheckRow {
        trial_id,
        in_ball: false,
        error: f64::NAN,
        bound: f64::NAN,
        zap_bound: f64::NAN,
        leading_ratio: f64::NAN,
        intermediates_hold: false,
        failed: true,
    })
}
