use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use super::Algorithm;

/// Outcome of one algorithm on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub algorithm: Algorithm,
    pub k: usize,
    pub snr_db: f64,
    /// `||xhat - xbar||^2`.
    pub squared_error: f64,
    /// `||xbar||^2`.
    pub signal_energy: f64,
    /// `squared_error / signal_energy`; for a zero signal, `||xhat||^2`.
    pub squared_relative_deviation: f64,
    pub exact: bool,
    pub iterations: usize,
    /// Set when the solver returned an error; such trials never count as exact.
    pub failed: bool,
    /// Oracle prediction `sigma^2 tr[(A_T^T A_T)^{-1}]` for this instance.
    pub oracle_prediction: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryPoint {
    pub algorithm: Algorithm,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
}

impl RecoveryPoint {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdPoint {
    /// `None` marks the closed-form oracle prediction.
    pub algorithm: Option<Algorithm>,
    pub snr_db: f64,
    pub trials: usize,
    pub msd: f64,
    /// Monte Carlo standard error of `msd`, by the delta method.
    pub std_error: f64,
}

impl MsdPoint {
    pub fn msd_db(&self) -> f64 {
        10.0 * self.msd.log10()
    }

    pub fn label(&self) -> &'static str {
        self.algorithm.map_or("oracle_formula", Algorithm::name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub records: Vec<TrialRecord>,
    pub recovery: Vec<RecoveryPoint>,
    pub msd: Vec<MsdPoint>,
}

pub fn format_snr(snr: f64) -> String {
    if snr == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{snr}")
    }
}

impl ExperimentReport {
    /// Aggregates records (assumed sorted by trial) into rates and MSDs.
    pub(crate) fn from_records(records: Vec<TrialRecord>, algorithms: &[Algorithm], with_oracle_formula: bool) -> Self {
        let order = |a: Algorithm| algorithms.iter().position(|&b| b == a).unwrap_or(usize::MAX);

        let mut rates: BTreeMap<(usize, usize), RecoveryPoint> = BTreeMap::new();
        for r in &records {
            let p = rates.entry((order(r.algorithm), r.k)).or_insert(RecoveryPoint {
                algorithm: r.algorithm,
                k: r.k,
                trials: 0,
                successes: 0,
                failures: 0,
            });
            p.trials += 1;
            p.successes += r.exact as usize;
            p.failures += r.failed as usize;
        }

        #[derive(Default)]
        struct Acc {
            n: usize,
            err: f64,
            err_sq: f64,
            sig: f64,
            sig_sq: f64,
            cross: f64,
        }
        impl Acc {
            fn add(&mut self, e: f64, s: f64) {
                self.n += 1;
                self.err += e;
                self.err_sq += e * e;
                self.sig += s;
                self.sig_sq += s * s;
                self.cross += e * s;
            }
            fn point(&self, algorithm: Option<Algorithm>, snr_db: f64) -> MsdPoint {
                let n = self.n as f64;
                let (me, ms) = (self.err / n, self.sig / n);
                let msd = me / ms;
                let std_error = if self.n > 1 {
                    let var_e = (self.err_sq / n - me * me).max(0.0);
                    let var_s = (self.sig_sq / n - ms * ms).max(0.0);
                    let cov = self.cross / n - me * ms;
                    let var = (var_e - 2.0 * msd * cov + msd * msd * var_s).max(0.0) / (ms * ms);
                    (var / (n - 1.0)).sqrt()
                } else {
                    f64::INFINITY
                };
                MsdPoint {
                    algorithm,
                    snr_db,
                    trials: self.n,
                    msd,
                    std_error,
                }
            }
        }

        // keyed by SNR position so the float never needs ordering
        let mut snrs: Vec<f64> = Vec::new();
        let mut accs: BTreeMap<(usize, usize), Acc> = BTreeMap::new();
        let mut oracle: BTreeMap<usize, Acc> = BTreeMap::new();
        let mut seen_oracle: BTreeMap<(usize, u64), ()> = BTreeMap::new();
        for r in &records {
            let si = match snrs.iter().position(|&s| s == r.snr_db) {
                Some(i) => i,
                None => {
                    snrs.push(r.snr_db);
                    snrs.len() - 1
                }
            };
            if !r.failed {
                accs.entry((order(r.algorithm), si))
                    .or_default()
                    .add(r.squared_error, r.signal_energy);
            }
            if with_oracle_formula && seen_oracle.insert((si, r.trial_id), ()).is_none() {
                oracle.entry(si).or_default().add(r.oracle_prediction, r.signal_energy);
            }
        }
        let mut snr_order: Vec<usize> = (0..snrs.len()).collect();
        snr_order.sort_by(|&a, &b| snrs[a].total_cmp(&snrs[b]));
        let rank = |si: usize| snr_order.iter().position(|&x| x == si).unwrap();

        let mut msd: Vec<(usize, usize, MsdPoint)> = accs
            .iter()
            .map(|(&(ai, si), acc)| {
                let alg = algorithms[ai];
                (ai, rank(si), acc.point(Some(alg), snrs[si]))
            })
            .collect();
        msd.extend(
            oracle
                .iter()
                .map(|(&si, acc)| (algorithms.len(), rank(si), acc.point(None, snrs[si]))),
        );
        msd.sort_by_key(|&(ai, si, _)| (ai, si));

        Self {
            records,
            recovery: rates.into_values().collect(),
            msd: msd.into_iter().map(|(_, _, p)| p).collect(),
        }
    }

    pub fn rate(&self, algorithm: Algorithm, k: usize) -> Option<f64> {
        self.recovery
            .iter()
            .find(|p| p.algorithm == algorithm && p.k == k)
            .map(RecoveryPoint::rate)
    }

    pub fn msd_point(&self, algorithm: Option<Algorithm>, snr_db: f64) -> Option<&MsdPoint> {
        self.msd
            .iter()
            .find(|p| p.algorithm == algorithm && p.snr_db == snr_db)
    }

    /// `algorithm,K,trials,successes,rate`
    pub fn fig1_csv(&self) -> String {
        let mut out = String::from("algorithm,K,trials,successes,rate\n");
        for p in &self.recovery {
            let _ = writeln!(out, "{},{},{},{},{}", p.algorithm, p.k, p.trials, p.successes, p.rate());
        }
        out
    }

    /// `algorithm,snr_db,trials,msd_linear,msd_db`; the closed-form oracle
    /// prediction appears as algorithm `oracle_formula`.
    pub fn fig2_csv(&self) -> String {
        let mut out = String::from("algorithm,snr_db,trials,msd_linear,msd_db\n");
        for p in &self.msd {
            let _ = writeln!(
                out,
                "{},{},{},{:.10e},{:.6}",
                p.label(),
                format_snr(p.snr_db),
                p.trials,
                p.msd,
                p.msd_db()
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckRow {
    pub trial_id: u64,
    pub in_ball: bool,
    pub error: f64,
    pub bound: f64,
    /// Scalar-block comparison bound on the same instance.
    pub zap_bound: f64,
    /// Ratio of the scalar to the block leading coefficient, `sqrt(D)`.
    pub leading_ratio: f64,
    /// All derivation inequalities hold (off-support, on-support, triangle, final).
    pub intermediates_hold: bool,
    pub failed: bool,
}

impl BoundCheckRow {
    pub fn slack(&self) -> f64 {
        self.bound - self.error
    }

    pub fn violated(&self) -> bool {
        self.in_ball && !self.failed && !self.intermediates_hold
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoundCheckReport {
    pub rows: Vec<BoundCheckRow>,
}

impl BoundCheckReport {
    pub fn in_ball(&self) -> usize {
        self.rows.iter().filter(|r| r.in_ball).count()
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated()).count()
    }

    /// `trial_id,in_ball,error,bound,slack`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial_id,in_ball,error,bound,slack\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.10e},{:.10e},{:.10e}",
                r.trial_id,
                r.in_ball as u8,
                r.error,
                r.bound,
                r.slack()
            );
        }
        out
    }
}
