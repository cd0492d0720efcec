//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::DenseMatrix;
use crate::error::{Result, SmorlError};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates sampled per parameter tensor; `None` checks every one.
    pub coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            coords_per_param: None,
            seed: 0,
        }
    }
}

/// Returns the largest `|analytic - numeric| / max(1, |analytic|)` over the
/// sampled coordinates of `params`.
///
/// `loss_fn` is evaluated on perturbed copies of `params`; `analytic` holds one
/// gradient tensor per parameter, in the same order.
pub fn grad_check<F>(
    params: &[DenseMatrix],
    analytic: &[DenseMatrix],
    opts: GradCheckOptions,
    mut loss_fn: F,
) -> Result<f64>
where
    F: FnMut(&[DenseMatrix]) -> Result<f64>,
{
    if !(opts.eps > 0.0 && opts.eps <= 1e-2) {
        return Err(SmorlError::Range(format!("grad_check eps {} not in (0, 1e-2]", opts.eps)));
    }
    if params.len() != analytic.len() {
        return Err(SmorlError::Dimension {
            op: "grad_check",
            left: (params.len(), 1),
            right: (analytic.len(), 1),
        });
    }
    for (p, g) in params.iter().zip(analytic) {
        p.same_shape(g, "grad_check")?;
    }

    let first = loss_fn(params)?;
    let second = loss_fn(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(SmorlError::Determinism { first, second });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<DenseMatrix> = params.to_vec();
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        let len = params[pi].len();
        let coords: Vec<usize> = match opts.coords_per_param {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for c in coords {
            let orig = params[pi].values()[c];
            work[pi].values_mut()[c] = orig + opts.eps;
            let up = loss_fn(&work)?;
            work[pi].values_mut()[c] = orig - opts.eps;
            let down = loss_fn(&work)?;
            work[pi].values_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * opts.eps);
            let a = analytic[pi].values()[c];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
