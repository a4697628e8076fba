//! Recovery algorithms.
//!
//! [`bzap_solve`] alternates a zero-point attraction step
//! `x~ = x - kappa * grad J(x)` with the projection `x = P x~ + Q`, starting
//! from the minimum-norm solution `A^+ y`. Whenever the monitored cost goes
//! up, the step length is multiplied by `eta` and the iterate is kept (or
//! discarded, with `rollback_on_increase`). Once `c1` reductions have been
//! made, the next cost increase ends the loop and that last step is dropped,
//! so the final phase runs at `kappa0 * eta^c1`. The loop also ends after `c2`
//! iterations. [`zap_solve`] is the same loop with single-entry blocks and
//! [`l21_solve`] swaps the penalty for `||x||_{2,1}`.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::block::{BlockSignal, BlockStructure, BlockSupport};
use crate::error::{Error, Result};
use crate::penalty::{cost_j_slice, cost_l21_slice, grad_j_into, grad_l21_into};
use crate::projection::{pinv_tall, submatrix_cols, SensingSystem, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    /// The piecewise-quadratic `l_{2,0}` surrogate `J`.
    SmoothedL20,
    L21,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kappa0: f64,
    pub alpha: f64,
    pub eta: f64,
    pub c1: usize,
    pub c2: usize,
    pub penalty_kind: PenaltyKind,
    /// Discard a step that raised the cost instead of keeping it.
    pub rollback_on_increase: bool,
    /// Keep one [`TraceRow`] per iteration (costs an extra `A x` product).
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kappa0: 1.0,
            alpha: 1.0,
            eta: 0.1,
            c1: 4,
            c2: 1200,
            penalty_kind: PenaltyKind::SmoothedL20,
            rollback_on_increase: false,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa0 > 0.0) || !self.kappa0.is_finite() {
            return Err(Error::Parameter(format!("kappa must be positive, got {}", self.kappa0)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Parameter(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.c1 == 0 || self.c2 == 0 {
            return Err(Error::Parameter(format!(
                "c1 and c2 must be at least 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    pub fn with_penalty(mut self, kind: PenaltyKind) -> Self {
        self.penalty_kind = kind;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReductionsExhausted,
    IterationCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub kappa: f64,
    pub cost: f64,
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub iterations: usize,
    pub step_reductions: usize,
    /// Monitored cost at `x(0), x(1), ...`.
    pub cost_history: Vec<f64>,
    /// Iteration indices `t` at which a cost increase triggered a reduction.
    pub reduction_events: Vec<usize>,
    pub final_cost: f64,
    pub stop_reason: StopReason,
    /// Per-iteration rows, only filled when `record_trace` is set.
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    /// CSV with columns `t,kappa,cost,feasibility_residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,kappa,cost,feasibility_residual\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                r.t, r.kappa, r.cost, r.feasibility_residual
            );
        }
        out
    }
}

fn check_structure(sys: &SensingSystem, structure: BlockStructure) -> Result<()> {
    if structure.total_len() != sys.num_cols() {
        return Err(Error::Dimension(format!(
            "block structure covers {} entries, matrix has {} columns",
            structure.total_len(),
            sys.num_cols()
        )));
    }
    Ok(())
}

/// Zero-point attracting projection over the given block structure.
///
/// `cfg.penalty_kind` selects the attraction term; [`bzap_solve`] and
/// [`l21_solve`] pin it.
pub fn zero_attracting_projection(
    sys: &SensingSystem,
    structure: BlockStructure,
    cfg: &SolverConfig,
) -> Result<(BlockSignal, SolverTrace)> {
    cfg.validate()?;
    check_structure(sys, structure)?;
    let d = structure.block_len();
    let alpha = cfg.alpha;
    let cost = |x: &[f64]| match cfg.penalty_kind {
        PenaltyKind::SmoothedL20 => cost_j_slice(x, d, alpha),
        PenaltyKind::L21 => cost_l21_slice(x, d),
    };

    let mut x = sys.offset().clone();
    let mut grad = DVector::zeros(x.len());
    let mut next = DVector::zeros(x.len());
    let mut kappa = cfg.kappa0;
    let mut current = cost(x.as_slice());
    let mut cost_history = vec![current];
    let mut reduction_events = Vec::new();
    let mut rows = Vec::new();
    if cfg.record_trace {
        rows.push(TraceRow {
            t: 0,
            kappa,
            cost: current,
            feasibility_residual: sys.feasibility_residual(&x),
        });
    }

    let mut t = 0;
    let stop_reason = loop {
        if t >= cfg.c2 {
            break StopReason::IterationCap;
        }
        match cfg.penalty_kind {
            PenaltyKind::SmoothedL20 => grad_j_into(x.as_slice(), structure, alpha, grad.as_mut_slice()),
            PenaltyKind::L21 => grad_l21_into(x.as_slice(), structure, grad.as_mut_slice()),
        }
        // attraction, in place: grad <- x - kappa * grad
        grad.axpy(1.0, &x, -kappa);
        sys.project_into(&grad, &mut next);

        let updated = cost(next.as_slice());
        let increased = updated > current;
        if increased && reduction_events.len() >= cfg.c1 {
            // the step that would need a further reduction is discarded
            break StopReason::ReductionsExhausted;
        }
        t += 1;
        if increased && cfg.rollback_on_increase {
            cost_history.push(current);
            if cfg.record_trace {
                rows.push(TraceRow {
                    t,
                    kappa,
                    cost: current,
                    feasibility_residual: sys.feasibility_residual(&x),
                });
            }
            kappa *= cfg.eta;
            reduction_events.push(t);
            continue;
        }
        std::mem::swap(&mut x, &mut next);
        cost_history.push(updated);
        if cfg.record_trace {
            rows.push(TraceRow {
                t,
                kappa,
                cost: updated,
                feasibility_residual: sys.feasibility_residual(&x),
            });
        }
        current = updated;
        if increased {
            kappa *= cfg.eta;
            reduction_events.push(t);
        }
    };

    let trace = SolverTrace {
        iterations: t,
        step_reductions: reduction_events.len(),
        cost_history,
        reduction_events,
        final_cost: current,
        stop_reason,
        rows,
    };
    Ok((BlockSignal::new(x, structure)?, trace))
}

pub fn bzap_solve(
    sys: &SensingSystem,
    structure: BlockStructure,
    cfg: &SolverConfig,
) -> Result<(BlockSignal, SolverTrace)> {
    zero_attracting_projection(sys, structure, &cfg.with_penalty(PenaltyKind::SmoothedL20))
}

/// Scalar ZAP: [`bzap_solve`] with blocks of length one.
pub fn zap_solve(sys: &SensingSystem, cfg: &SolverConfig) -> Result<(BlockSignal, SolverTrace)> {
    bzap_solve(sys, BlockStructure::scalar(sys.num_cols())?, cfg)
}

pub fn l21_solve(
    sys: &SensingSystem,
    structure: BlockStructure,
    cfg: &SolverConfig,
) -> Result<(BlockSignal, SolverTrace)> {
    zero_attracting_projection(sys, structure, &cfg.with_penalty(PenaltyKind::L21))
}

/// Residual norm below which BOMP treats the measurement as zero.
const BOMP_ZERO_RESIDUAL: f64 = 1e-12;

/// Block orthogonal matching pursuit with exactly `k` greedy selections.
///
/// Each round picks the unselected block maximizing `||A_k^T r||` (lowest
/// index on ties) and refits least squares on all selected blocks.
pub fn bomp_solve(sys: &SensingSystem, structure: BlockStructure, k: usize) -> Result<BlockSignal> {
    check_structure(sys, structure)?;
    let d = structure.block_len();
    if k == 0 {
        return Err(Error::Parameter("BOMP needs K >= 1".into()));
    }
    if k > structure.num_blocks() || k * d > sys.num_rows() {
        return Err(Error::Parameter(format!(
            "BOMP with K = {k}, D = {d} needs K*D <= m = {} and K <= N = {}",
            sys.num_rows(),
            structure.num_blocks()
        )));
    }
    let a = sys.a();
    let y = sys.y();
    let mut x = DVector::zeros(sys.num_cols());
    if y.norm() <= BOMP_ZERO_RESIDUAL {
        return BlockSignal::new(x, structure);
    }

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut residual = y.clone();
    let mut coef = DVector::zeros(0);
    for _ in 0..k {
        let corr = a.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for blk in 1..=structure.num_blocks() {
            if selected.contains(&blk) {
                continue;
            }
            let score = corr.as_slice()[structure.range(blk)]
                .iter()
                .map(|c| c * c)
                .sum::<f64>();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((blk, score));
            }
        }
        let (blk, _) = best.expect("K <= N leaves an unselected block");
        selected.push(blk);

        let support = BlockSupport::new(selected.iter().copied(), structure)?;
        let a_s = submatrix_cols(a, &support)?;
        coef = pinv_tall(&a_s, DEFAULT_RANK_TOL)? * y;
        residual = y - &a_s * &coef;
    }

    let support = BlockSupport::new(selected, structure)?;
    for (&i, c) in support.entry_indices().iter().zip(coef.iter()) {
        x[i] = *c;
    }
    BlockSignal::new(x, structure)
}

/// Least squares restricted to a known support; zero elsewhere.
pub fn oracle_solve(sys: &SensingSystem, support: &BlockSupport) -> Result<BlockSignal> {
    let structure = support.structure();
    check_structure(sys, structure)?;
    let mut x = DVector::zeros(sys.num_cols());
    if !support.is_empty() {
        let a_t = submatrix_cols(sys.a(), support)?;
        if a_t.ncols() > a_t.nrows() {
            return Err(Error::RankDeficient(format!(
                "support spans {} columns but only {} measurements",
                a_t.ncols(),
                a_t.nrows()
            )));
        }
        let coef = pinv_tall(&a_t, DEFAULT_RANK_TOL)? * sys.y();
        for (&i, c) in support.entry_indices().iter().zip(coef.iter()) {
            x[i] = *c;
        }
    }
    BlockSignal::new(x, structure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::build_system;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn instance(seed: u64, blocks: &[usize]) -> (SensingSystem, BlockSignal, BlockSupport) {
        let st = BlockStructure::new(25, 4).unwrap();
        let a = gaussian(40, 100, seed);
        let mut x = DVector::zeros(100);
        for (j, &k) in blocks.iter().enumerate() {
            for (i, idx) in st.range(k).enumerate() {
                x[idx] = if (i + j) % 3 == 0 { -1.0 } else { 1.0 };
            }
        }
        let y = &a * &x;
        let sys = build_system(a, y, DEFAULT_RANK_TOL).unwrap();
        (sys, BlockSignal::new(x, st).unwrap(), BlockSupport::new(blocks.iter().copied(), st).unwrap())
    }

    fn rel_sq(a: &BlockSignal, b: &BlockSignal) -> f64 {
        (a.values() - b.values()).norm_squared() / b.values().norm_squared()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig { eta: 1.0, ..Default::default() },
            SolverConfig { eta: 0.0, ..Default::default() },
            SolverConfig { c1: 0, ..Default::default() },
            SolverConfig { c2: 0, ..Default::default() },
            SolverConfig { kappa0: -1.0, ..Default::default() },
            SolverConfig { alpha: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_signal_stays_zero() {
        let st = BlockStructure::new(25, 4).unwrap();
        let sys = build_system(gaussian(40, 100, 1), DVector::zeros(40), DEFAULT_RANK_TOL).unwrap();
        let cfg = SolverConfig { c2: 50, ..Default::default() };
        let (x, trace) = bzap_solve(&sys, st, &cfg).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));
        assert_eq!(trace.stop_reason, StopReason::IterationCap);
        assert_eq!(trace.iterations, 50);
        let (x, _) = zap_solve(&sys, &cfg).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));
        let (x, _) = l21_solve(&sys, st, &cfg).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));
        assert!(bomp_solve(&sys, st, 3).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn structure_mismatch_rejected() {
        let (sys, _, _) = instance(1, &[1]);
        let st = BlockStructure::new(10, 4).unwrap();
        assert!(matches!(bzap_solve(&sys, st, &SolverConfig::default()), Err(Error::Dimension(_))));
        assert!(bomp_solve(&sys, st, 1).is_err());
    }

    #[test]
    fn bzap_recovers_two_blocks() {
        let (sys, x, _) = instance(3, &[2, 17]);
        let (xh, trace) = bzap_solve(&sys, x.structure(), &SolverConfig::default()).unwrap();
        assert!(rel_sq(&xh, &x) < 1e-6, "{}", rel_sq(&xh, &x));
        assert!(trace.iterations <= 1200 && trace.step_reductions <= 4);
        assert!(sys.feasibility_residual(xh.values()) <= 1e-9 * (1.0 + sys.y().norm()));
    }

    #[test]
    fn trace_rows_and_invariants() {
        let (sys, x, _) = instance(5, &[4, 9, 20]);
        let cfg = SolverConfig { record_trace: true, ..Default::default() };
        let (_, trace) = bzap_solve(&sys, x.structure(), &cfg).unwrap();
        assert_eq!(trace.rows.len(), trace.iterations + 1);
        assert_eq!(trace.cost_history.len(), trace.iterations + 1);
        let bound = 1e-9 * (1.0 + sys.y().norm());
        assert!(trace.rows.iter().all(|r| r.feasibility_residual <= bound));
        // kappa shrinks by eta exactly at each recorded event
        for r in &trace.rows[1..] {
            let before = trace.reduction_events.iter().filter(|&&e| e < r.t).count();
            assert_eq!(r.kappa, (0..before).fold(1.0, |k, _| k * 0.1));
        }
        if trace.stop_reason == StopReason::ReductionsExhausted {
            let last = *trace.reduction_events.last().unwrap();
            assert!(*trace.cost_history.last().unwrap() <= trace.cost_history[last]);
        }
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,kappa,cost,feasibility_residual\n"));
        assert_eq!(csv.lines().count(), trace.rows.len() + 1);
    }

    #[test]
    fn reductions_exhausted_stops_with_exactly_c1_reductions() {
        let (sys, x, _) = instance(9, &[6, 13]);
        for c1 in [1, 2, 4] {
            let cfg = SolverConfig { c1, ..Default::default() };
            let (_, trace) = bzap_solve(&sys, x.structure(), &cfg).unwrap();
            assert_eq!(trace.stop_reason, StopReason::ReductionsExhausted);
            assert_eq!(trace.step_reductions, c1);
            assert_eq!(trace.final_cost, *trace.cost_history.last().unwrap());
        }
    }

    #[test]
    fn rollback_keeps_cost_monotone() {
        let (sys, x, _) = instance(10, &[3, 8, 19]);
        let cfg = SolverConfig { rollback_on_increase: true, ..Default::default() };
        for structure in [x.structure(), BlockStructure::scalar(100).unwrap()] {
            let (xh, trace) = bzap_solve(&sys, structure, &cfg).unwrap();
            assert!(trace.cost_history.windows(2).all(|w| w[1] <= w[0]));
            assert!(sys.feasibility_residual(xh.values()) <= 1e-9 * (1.0 + sys.y().norm()));
        }
    }

    #[test]
    fn zap_equals_scalar_bzap() {
        let (sys, _, _) = instance(8, &[1, 5, 11]);
        let cfg = SolverConfig::default();
        let (a, ta) = zap_solve(&sys, &cfg).unwrap();
        let (b, tb) = bzap_solve(&sys, BlockStructure::scalar(100).unwrap(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn l21_recovers_one_block() {
        let (sys, x, _) = instance(13, &[7]);
        let (xh, _) = l21_solve(&sys, x.structure(), &SolverConfig::default()).unwrap();
        assert!(rel_sq(&xh, &x) < 1e-6, "{}", rel_sq(&xh, &x));
    }

    #[test]
    fn bomp_orthonormal_blocks_exact() {
        // 8x8 orthonormal (scaled Hadamard) columns, D = 2
        let h2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let h4 = h2.kronecker(&h2);
        let h8 = h4.kronecker(&h2) / 8f64.sqrt();
        let st = BlockStructure::new(4, 2).unwrap();
        let mut x = DVector::zeros(8);
        x[4] = 1.5;
        x[5] = -0.5;
        let y = &h8 * &x;
        let sys = build_system(h8, y, DEFAULT_RANK_TOL).unwrap();
        let xh = bomp_solve(&sys, st, 1).unwrap();
        assert!((xh.values() - &x).norm() <= 1e-12);
    }

    #[test]
    fn bomp_gaussian_recovery_and_residual() {
        let (sys, x, _) = instance(21, &[3, 12, 24]);
        let xh = bomp_solve(&sys, x.structure(), 3).unwrap();
        assert!(rel_sq(&xh, &x) < 1e-10);
        let r = (sys.y() - sys.a() * xh.values()).norm();
        assert!(r <= 1e-9 * sys.y().norm());
    }

    #[test]
    fn bomp_parameter_errors() {
        let (sys, x, _) = instance(2, &[1]);
        assert!(matches!(bomp_solve(&sys, x.structure(), 11), Err(Error::Parameter(_))));
        assert!(matches!(bomp_solve(&sys, x.structure(), 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn oracle_exact_on_noiseless() {
        let (sys, x, t) = instance(4, &[2, 8, 15, 23]);
        let xh = oracle_solve(&sys, &t).unwrap();
        assert!((xh.values() - x.values()).norm() <= 1e-10 * x.values().norm());
        let empty = oracle_solve(&sys, &BlockSupport::empty(x.structure())).unwrap();
        assert!(empty.values().iter().all(|&v| v == 0.0));
        let too_big = BlockSupport::new(1..=11, x.structure()).unwrap();
        assert!(matches!(oracle_solve(&sys, &too_big), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn oracle_error_is_pinv_of_noise() {
        let (clean, x, t) = instance(6, &[5, 6]);
        let v = DVector::from_fn(40, |i, _| ((i * 7 % 11) as f64 - 5.0) * 0.01);
        let sys = build_system(clean.a().clone(), clean.y() + &v, DEFAULT_RANK_TOL).unwrap();
        let xh = oracle_solve(&sys, &t).unwrap();
        let a_t = submatrix_cols(sys.a(), &t).unwrap();
        let expected = (pinv_tall(&a_t, DEFAULT_RANK_TOL).unwrap() * &v).norm();
        assert!(((xh.values() - x.values()).norm() - expected).abs() <= 1e-12);
    }
}
