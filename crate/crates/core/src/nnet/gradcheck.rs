use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Gradients, MlpModel};
use crate::error::Result;

/// Central-difference step used by the checker.
pub const FD_STEP: f64 = 1e-5;

/// Smallest denominator used for relative errors, so that coordinates with
/// (near) zero gradient are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare the analytic gradient returned by `loss_fn` against central
/// differences over up to `samples` randomly chosen parameter coordinates.
pub fn finite_diff_check<F>(
    model: &MlpModel,
    loss_fn: F,
    tolerance: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&MlpModel) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss_fn(model)?;
    let analytic = analytic.to_flat();
    let base = model.params().to_flat();
    let n = base.len();
    let coords: Vec<usize> = if samples >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, n, samples).into_vec();
        v.sort_unstable();
        v
    };

    let mut probe = model.clone();
    let mut flat = base.clone();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    for &i in &coords {
        flat[i] = base[i] + FD_STEP;
        probe.params_mut().set_flat(&flat)?;
        let plus = loss_fn(&probe)?.0;
        flat[i] = base[i] - FD_STEP;
        probe.params_mut().set_flat(&flat)?;
        let minus = loss_fn(&probe)?.0;
        flat[i] = base[i];
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], numeric);
        if err > max_rel || worst.is_none() {
            max_rel = max_rel.max(err);
            worst = Some(i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_index: worst,
        checked: coords.len(),
        tolerance,
    })
}
