//! Seeded random problem instances.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::block::{BlockSignal, BlockStructure, BlockSupport};
use crate::error::{Error, Result};

/// Stream tags mixed into per-trial seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Matrix = 0x4d41_5452,
    Signal = 0x5349_474e,
    Noise = 0x4e4f_4953,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one random stream of one trial. `point` distinguishes sweep
/// points that must not share draws (e.g. the sparsity level for signals).
pub fn derive_seed(base_seed: u64, trial_id: u64, point: u64, role: Role) -> u64 {
    let mut h = splitmix64(base_seed);
    h = splitmix64(h ^ trial_id);
    h = splitmix64(h ^ point.rotate_left(32));
    splitmix64(h ^ role as u64)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `m x n` matrix of independent standard normal entries.
pub fn gen_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    // column-major fill keeps the stream order fixed regardless of storage
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// `K` blocks chosen uniformly without replacement, each entry `+-1`.
pub fn gen_signal(structure: BlockStructure, k: usize, seed: u64) -> Result<(BlockSignal, BlockSupport)> {
    let n_blocks = structure.num_blocks();
    if k > n_blocks {
        return Err(Error::Parameter(format!("K = {k} exceeds the {n_blocks} available blocks")));
    }
    let mut rng = rng_from_seed(seed);
    let chosen: Vec<usize> = sample(&mut rng, n_blocks, k).into_iter().map(|i| i + 1).collect();
    let support = BlockSupport::new(chosen, structure)?;
    let mut x = DVector::zeros(structure.total_len());
    for i in support.entry_indices() {
        x[i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    Ok((BlockSignal::new(x, structure)?, support))
}

/// Gaussian noise rescaled so that `10 log10(||A xbar||^2 / ||v||^2)` equals
/// `snr_db` exactly. An infinite SNR yields `v = 0`.
///
/// The second value is the per-component scale `||v|| / sqrt(m)`.
pub fn gen_noise(
    a: &DMatrix<f64>,
    xbar: &BlockSignal,
    snr_db: f64,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    let m = a.nrows();
    if snr_db == f64::INFINITY {
        return Ok((DVector::zeros(m), 0.0));
    }
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let signal = (a * xbar.values()).norm();
    if signal == 0.0 {
        return Err(Error::Parameter("SNR is undefined for a zero measurement A*xbar".into()));
    }
    let mut rng = rng_from_seed(seed);
    let w = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = signal / 10f64.powf(snr_db / 20.0);
    let v = &w * (target / w.norm());
    let sigma = v.norm() / (m as f64).sqrt();
    Ok((v, sigma))
}

pub fn realized_snr_db(a: &DMatrix<f64>, xbar: &BlockSignal, v: &DVector<f64>) -> f64 {
    10.0 * ((a * xbar.values()).norm_squared() / v.norm_squared()).log10()
}
