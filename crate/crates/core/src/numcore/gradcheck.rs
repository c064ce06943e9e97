use rand::seq::index::sample;

use super::{NodeId, NumError, ParamStore, Tape};
use crate::rng;

pub const GRADCHECK_MAX_COORDS: usize = 200;

/// Compares tape gradients against central differences
/// `(f(theta + eps) - f(theta - eps)) / 2 eps` on up to
/// [`GRADCHECK_MAX_COORDS`] randomly chosen coordinates.
///
/// Returns the largest `|g_tape - g_fd| / max(1e-8, |g_tape| + |g_fd|)`,
/// or `0.0` when there are no coordinates. Parameter values are restored
/// and gradient accumulators are left untouched.
pub fn gradient_check<F, E>(mut forward: F, params: &mut ParamStore, epsilon: f64, seed: u64) -> Result<f64, E>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId, E>,
    E: From<NumError>,
{
    assert!((1e-7..=1e-3).contains(&epsilon), "epsilon {epsilon} outside [1e-7, 1e-3]");
    let total = params.num_scalars();
    if total == 0 {
        return Ok(0.0);
    }
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = forward(&mut tape)?;
        tape.backward(loss)?
    };
    let coords: Vec<usize> = if total <= GRADCHECK_MAX_COORDS {
        (0..total).collect()
    } else {
        let mut r = rng::derived(seed, rng::stream::GRADCHECK);
        let mut c = sample(&mut r, total, GRADCHECK_MAX_COORDS).into_vec();
        c.sort_unstable();
        c
    };

    let mut eval = |params: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new(params);
        let loss = forward(&mut tape)?;
        Ok(tape.scalar(loss))
    };
    let mut worst: f64 = 0.0;
    for k in coords {
        let (id, off) = params.locate(k);
        let g_tape = analytic.get(id).map_or(0.0, |g| g[off]);
        let orig = params.value(id).data()[off];
        params.value_mut(id).data_mut()[off] = orig + epsilon;
        let plus = eval(params)?;
        params.value_mut(id).data_mut()[off] = orig - epsilon;
        let minus = eval(params)?;
        params.value_mut(id).data_mut()[off] = orig;
        let g_fd = (plus - minus) / (2.0 * epsilon);
        let rel = (g_tape - g_fd).abs() / (g_tape.abs() + g_fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
