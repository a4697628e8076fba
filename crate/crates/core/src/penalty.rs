//! Smoothed block-sparsity penalties and their gradients.
//!
//! `F_alpha(w) = 2 alpha |w| - alpha^2 w^2` for `|w| <= 1/alpha` and `1`
//! beyond, so `J(x) = sum_k F_alpha(||x_k||)` is a piecewise-quadratic
//! stand-in for the number of nonzero blocks. A practical rule of thumb puts
//! `1/alpha` near the square root of the spread of the nonzero entries; the
//! benchmark harness simply uses `alpha = 1`.

use nalgebra::DVector;

use crate::block::{euclid, l21_norm, BlockSignal, BlockStructure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    alpha: f64,
}

impl PenaltyParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Parameter(format!("alpha must be positive and finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Width `1/alpha` of the quadratic zone.
    pub fn threshold(&self) -> f64 {
        1.0 / self.alpha
    }
}

pub fn f_alpha(w: f64, params: PenaltyParams) -> f64 {
    let a = params.alpha;
    let w = w.abs();
    if w <= 1.0 / a {
        // 2aw - a^2 w^2, written so the value at w = 1/a rounds to exactly 1
        let gap = 1.0 - a * w;
        1.0 - gap * gap
    } else {
        1.0
    }
}

pub fn cost_j(x: &BlockSignal, params: PenaltyParams) -> f64 {
    cost_j_slice(x.values().as_slice(), x.structure().block_len(), params.alpha)
}

pub fn grad_j(x: &BlockSignal, params: PenaltyParams) -> DVector<f64> {
    let mut g = DVector::zeros(x.values().len());
    grad_j_into(x.values().as_slice(), x.structure(), params.alpha, g.as_mut_slice());
    g
}

/// Subgradient of `||x||_{2,1}`: unit direction per nonzero block.
pub fn grad_l21(x: &BlockSignal) -> DVector<f64> {
    let mut g = DVector::zeros(x.values().len());
    grad_l21_into(x.values().as_slice(), x.structure(), g.as_mut_slice());
    g
}

pub fn cost_l21(x: &BlockSignal) -> f64 {
    l21_norm(x)
}

pub(crate) fn cost_j_slice(x: &[f64], block_len: usize, alpha: f64) -> f64 {
    let params = PenaltyParams { alpha };
    x.chunks_exact(block_len)
        .map(|b| f_alpha(euclid(b), params))
        .sum()
}

pub(crate) fn cost_l21_slice(x: &[f64], block_len: usize) -> f64 {
    x.chunks_exact(block_len).map(euclid).sum()
}

// Zero blocks and blocks at or beyond 1/alpha get a zero gradient.
pub(crate) fn grad_j_into(x: &[f64], structure: BlockStructure, alpha: f64, out: &mut [f64]) {
    let d = structure.block_len();
    let threshold = 1.0 / alpha;
    for (xb, gb) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let norm = euclid(xb);
        if norm > 0.0 && norm < threshold {
            let scale = 2.0 * alpha / norm - 2.0 * alpha * alpha;
            for (g, v) in gb.iter_mut().zip(xb) {
                *g = scale * v;
            }
        } else {
            gb.fill(0.0);
        }
    }
}

pub(crate) fn grad_l21_into(x: &[f64], structure: BlockStructure, out: &mut [f64]) {
    let d = structure.block_len();
    for (xb, gb) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let norm = euclid(xb);
        if norm > 0.0 {
            for (g, v) in gb.iter_mut().zip(xb) {
                *g = v / norm;
            }
        } else {
            gb.fill(0.0);
        }
    }
}
