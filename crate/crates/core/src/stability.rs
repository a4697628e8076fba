//! Local stability of the smoothed-penalty minimizer under measurement noise.
//!
//! For `y = A xbar + v` with block support `T`, pick `alpha` so that every
//! support block satisfies `1/alpha < ||xbar_k||`, and let
//! `d = min_{k in T} min(1/alpha, ||xbar_k|| - 1/alpha)`. A minimizer of `J`
//! over `{Ax = y}` inside the closed ball `B(xbar, d)` then obeys
//!
//! ```text
//! ||xhat - xbar|| <= 2 sqrt(N) (1 + ||A_T^+ A_{T^c}||) ||A^+ v|| + ||A_T^+ v||
//! ```
//!
//! With scalar blocks the leading coefficient becomes `2 sqrt(n)`, so block
//! structure shrinks the first term by `sqrt(D)`.

use nalgebra::{DMatrix, DVector};

use crate::block::{block_norms, BlockSignal, BlockSupport};
use crate::error::{Error, Result};
use crate::projection::{op_norm, pinv_tall, submatrix_cols, SensingSystem, DEFAULT_RANK_TOL};

/// Feasibility tolerance for the `x in L` hypothesis, relative to `1 + ||y||`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub fn radius_d(xbar: &BlockSignal, support: &BlockSupport, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if support.is_empty() {
        return Err(Error::Parameter("radius is undefined for an empty support".into()));
    }
    let threshold = 1.0 / alpha;
    let norms = block_norms(xbar);
    let mut d = f64::INFINITY;
    for &k in support.indices() {
        let norm = norms[k - 1];
        if !(norm > threshold) {
            return Err(Error::AlphaCondition {
                block: k,
                norm,
                threshold,
            });
        }
        d = d.min(threshold).min(norm - threshold);
    }
    Ok(d)
}

/// The pieces of the stability bound, kept separate so callers can compare
/// leading terms across block sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// `2 sqrt(count)` where `count` is the number of blocks.
    pub leading_coefficient: f64,
    /// `||A_T^+ A_{T^c}||` (operator norm).
    pub cross_norm: f64,
    /// `||A^+ v||`.
    pub pinv_noise: f64,
    /// `||A_T^+ v||`, the oracle error.
    pub support_noise: f64,
}

impl BoundTerms {
    pub fn compute(sys: &SensingSystem, support: &BlockSupport, v: &DVector<f64>) -> Result<Self> {
        if v.len() != sys.num_rows() {
            return Err(Error::Dimension(format!(
                "noise has {} entries, system has {} rows",
                v.len(),
                sys.num_rows()
            )));
        }
        let a_t = submatrix_cols(sys.a(), support)?;
        let a_tc = submatrix_cols(sys.a(), &support.complement())?;
        let a_t_pinv = if a_t.ncols() == 0 {
            DMatrix::zeros(0, sys.num_rows())
        } else {
            pinv_tall(&a_t, DEFAULT_RANK_TOL)?
        };
        let cross_norm = if a_tc.ncols() == 0 || a_t_pinv.nrows() == 0 {
            0.0
        } else {
            op_norm(&(&a_t_pinv * &a_tc))
        };
        Ok(Self {
            leading_coefficient: 2.0 * (support.structure().num_blocks() as f64).sqrt(),
            cross_norm,
            pinv_noise: (sys.a_pinv() * v).norm(),
            support_noise: (&a_t_pinv * v).norm(),
        })
    }

    /// Bound on the off-support error `||dx_{T^c}||`.
    pub fn off_support(&self) -> f64 {
        self.leading_coefficient * self.pinv_noise
    }

    /// Bound on the on-support error `||dx_T||`.
    pub fn on_support(&self) -> f64 {
        self.support_noise + self.leading_coefficient * self.cross_norm * self.pinv_noise
    }

    pub fn first_term(&self) -> f64 {
        self.leading_coefficient * (1.0 + self.cross_norm) * self.pinv_noise
    }

    pub fn total(&self) -> f64 {
        self.first_term() + self.support_noise
    }
}

fn check_count(support: &BlockSupport, count: usize, what: &str) -> Result<()> {
    if support.structure().num_blocks() != count {
        return Err(Error::Parameter(format!(
            "{what} = {count} does not match the support's {} blocks",
            support.structure().num_blocks()
        )));
    }
    Ok(())
}

/// Stability bound for a block support over `num_blocks` blocks.
pub fn theorem1_bound(
    sys: &SensingSystem,
    support: &BlockSupport,
    v: &DVector<f64>,
    num_blocks: usize,
) -> Result<f64> {
    check_count(support, num_blocks, "N")?;
    Ok(BoundTerms::compute(sys, support, v)?.total())
}

/// The same bound with scalar blocks, i.e. coefficient `2 sqrt(n)`.
pub fn zap_comparison_bound(
    sys: &SensingSystem,
    scalar_support: &BlockSupport,
    v: &DVector<f64>,
    n: usize,
) -> Result<f64> {
    if scalar_support.structure().block_len() != 1 {
        return Err(Error::Parameter("scalar comparison needs a support with D = 1".into()));
    }
    check_count(scalar_support, n, "n")?;
    Ok(BoundTerms::compute(sys, scalar_support, v)?.total())
}

#[derive(Debug, Clone)]
pub struct StabilityContext {
    xbar: BlockSignal,
    support: BlockSupport,
    alpha: f64,
    d: f64,
    v: DVector<f64>,
}

impl StabilityContext {
    pub fn new(xbar: BlockSignal, support: BlockSupport, alpha: f64, v: DVector<f64>) -> Result<Self> {
        if support.structure() != xbar.structure() {
            return Err(Error::Dimension("support and signal use different block structures".into()));
        }
        let d = radius_d(&xbar, &support, alpha)?;
        Ok(Self {
            xbar,
            support,
            alpha,
            d,
            v,
        })
    }

    pub fn xbar(&self) -> &BlockSignal {
        &self.xbar
    }

    pub fn support(&self) -> &BlockSupport {
        &self.support
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofReport {
    /// `||xhat - xbar|| <= d` and `A xhat = y` within [`FEASIBILITY_TOL`].
    pub in_ball: bool,
    pub error: f64,
    pub terms: BoundTerms,
    pub off_support: Inequality,
    pub on_support: Inequality,
    pub triangle: Inequality,
    pub theorem: Inequality,
}

impl ProofReport {
    pub fn all_hold(&self) -> bool {
        [self.off_support, self.on_support, self.triangle, self.theorem]
            .iter()
            .all(Inequality::holds)
    }

    /// Outside the ball nothing is claimed, so only in-ball failures count.
    pub fn violated(&self) -> bool {
        self.in_ball && !self.all_hold()
    }
}

/// Evaluates each inequality of the bound's derivation for an estimate.
pub fn proof_intermediate_checks(
    sys: &SensingSystem,
    ctx: &StabilityContext,
    xhat: &BlockSignal,
) -> Result<ProofReport> {
    if xhat.structure() != ctx.xbar.structure() {
        return Err(Error::Dimension("estimate and ground truth use different block structures".into()));
    }
    let terms = BoundTerms::compute(sys, &ctx.support, &ctx.v)?;
    let delta = xhat.values() - ctx.xbar.values();
    let on_idx = ctx.support.entry_indices();
    let on_sq: f64 = on_idx.iter().map(|&i| delta[i] * delta[i]).sum();
    let error = delta.norm();
    let on = on_sq.sqrt();
    let off = (delta.norm_squared() - on_sq).max(0.0).sqrt();

    let feasible = sys.feasibility_residual(xhat.values()) <= FEASIBILITY_TOL * (1.0 + sys.y().norm());
    Ok(ProofReport {
        in_ball: feasible && error <= ctx.d,
        error,
        terms,
        off_support: Inequality {
            lhs: off,
            rhs: terms.off_support(),
        },
        on_support: Inequality {
            lhs: on,
            rhs: terms.on_support(),
        },
        triangle: Inequality {
            lhs: error,
            rhs: on + off,
        },
        theorem: Inequality {
            lhs: error,
            rhs: terms.total(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockStructure;
    use crate::projection::build_system;
    use crate::solvers::oracle_solve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn setup(seed: u64, noise_scale: f64) -> (SensingSystem, BlockSignal, BlockSupport, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = BlockStructure::new(25, 4).unwrap();
        let a = DMatrix::from_fn(40, 100, |_, _| StandardNormal.sample(&mut rng));
        let support = BlockSupport::new([2, 9, 14, 21], st).unwrap();
        let mut x = DVector::zeros(100);
        for i in support.entry_indices() {
            x[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let v = DVector::from_fn(40, |_, _| noise_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let y = &a * &x + &v;
        let sys = build_system(a, y, DEFAULT_RANK_TOL).unwrap();
        (sys, BlockSignal::new(x, st).unwrap(), support, v)
    }

    #[test]
    fn radius_examples() {
        let (_, x, t, _) = setup(1, 0.0);
        assert_eq!(radius_d(&x, &t, 1.0).unwrap(), 1.0);
        assert_eq!(radius_d(&x, &t, 2.0).unwrap(), 0.5);
        let err = radius_d(&x, &t, 0.5).unwrap_err();
        assert!(matches!(err, Error::AlphaCondition { block: 2, .. }), "{err}");
        assert!(radius_d(&x, &BlockSupport::empty(x.structure()), 1.0).is_err());
    }

    #[test]
    fn radius_respects_both_limits() {
        let st = BlockStructure::new(3, 2).unwrap();
        let x = BlockSignal::from_slice(&[1.2, 0.0, 0.0, 0.0, 3.0, 4.0], st).unwrap();
        let t = BlockSupport::new([1, 3], st).unwrap();
        for alpha in [1.0, 1.5, 5.0] {
            let d = radius_d(&x, &t, alpha).unwrap();
            assert!(d > 0.0 && d <= 1.0 / alpha && d <= 1.2 - 1.0 / alpha + 1e-15);
        }
    }

    #[test]
    fn noiseless_bound_is_zero() {
        let (sys, x, t, _) = setup(2, 0.0);
        let v = DVector::zeros(40);
        assert_eq!(theorem1_bound(&sys, &t, &v, 25).unwrap(), 0.0);
        assert_eq!(zap_comparison_bound(&sys, &t.to_scalar(), &v, 100).unwrap(), 0.0);
        let ctx = StabilityContext::new(x.clone(), t, 1.0, v).unwrap();
        let report = proof_intermediate_checks(&sys, &ctx, &x).unwrap();
        assert!(report.in_ball && report.all_hold());
        assert_eq!(report.error, 0.0);
        assert_eq!(report.off_support.slack(), 0.0);
        assert_eq!(report.on_support.slack(), 0.0);
    }

    #[test]
    fn full_support_drops_cross_term() {
        let st = BlockStructure::new(5, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(12, 10, |_, _| StandardNormal.sample(&mut rng));
        let v = DVector::from_fn(12, |_, _| StandardNormal.sample(&mut rng));
        let sys = build_system(a, v.clone(), DEFAULT_RANK_TOL).unwrap();
        let t = BlockSupport::full(st);
        let terms = BoundTerms::compute(&sys, &t, &v).unwrap();
        assert_eq!(terms.cross_norm, 0.0);
        let expected = 2.0 * 5f64.sqrt() * terms.pinv_noise + terms.support_noise;
        assert!((theorem1_bound(&sys, &t, &v, 5).unwrap() - expected).abs() <= 1e-14);
    }

    #[test]
    fn bound_is_homogeneous_in_noise() {
        let (sys, _, t, v) = setup(3, 0.05);
        let b1 = theorem1_bound(&sys, &t, &v, 25).unwrap();
        for c in [0.1, 2.0, 37.0] {
            let bc = theorem1_bound(&sys, &t, &(&v * c), 25).unwrap();
            assert!((bc - c * b1).abs() <= 1e-12 * c * b1);
        }
    }

    #[test]
    fn scalar_leading_term_is_sqrt_d_larger() {
        let (sys, _, t, v) = setup(5, 0.05);
        let block = BoundTerms::compute(&sys, &t, &v).unwrap();
        let scalar = BoundTerms::compute(&sys, &t.to_scalar(), &v).unwrap();
        assert_eq!(scalar.leading_coefficient / block.leading_coefficient, 2.0);
        assert_eq!(scalar.pinv_noise, block.pinv_noise);
        // same columns, so the oracle and cross terms coincide too
        assert!((scalar.support_noise - block.support_noise).abs() <= 1e-12);
        assert!((scalar.cross_norm - block.cross_norm).abs() <= 1e-10);
        assert!(zap_comparison_bound(&sys, &t.to_scalar(), &v, 100).unwrap() > theorem1_bound(&sys, &t, &v, 25).unwrap());
        assert!(zap_comparison_bound(&sys, &t, &v, 25).is_err());
        assert!(theorem1_bound(&sys, &t, &v, 24).is_err());
    }

    #[test]
    fn d_one_bounds_coincide() {
        let (sys, _, t, v) = setup(6, 0.05);
        let scalar = t.to_scalar();
        assert_eq!(
            theorem1_bound(&sys, &scalar, &v, 100).unwrap(),
            zap_comparison_bound(&sys, &scalar, &v, 100).unwrap()
        );
    }

    #[test]
    fn oracle_estimate_meets_on_support_term_exactly() {
        let (sys, x, t, v) = setup(7, 0.02);
        let xhat = oracle_solve(&sys, &t).unwrap();
        let ctx = StabilityContext::new(x, t, 1.0, v).unwrap();
        let report = proof_intermediate_checks(&sys, &ctx, &xhat).unwrap();
        assert_eq!(report.off_support.lhs, 0.0);
        assert!((report.on_support.lhs - report.terms.support_noise).abs() <= 1e-12);
        assert!(report.all_hold());
    }

    #[test]
    fn far_estimate_is_out_of_ball_not_violation() {
        let (sys, x, t, v) = setup(8, 0.02);
        let ctx = StabilityContext::new(x.clone(), t, 1.0, v).unwrap();
        let far = BlockSignal::new(x.values() * 3.0, x.structure()).unwrap();
        let report = proof_intermediate_checks(&sys, &ctx, &far).unwrap();
        assert!(!report.in_ball);
        assert!(!report.violated());
    }
}
