//! Central-difference gradient oracle. Independent of the tape's backward
//! pass: it only re-evaluates the objective at nudged parameter values,
//! so it can certify (or refute) every analytic gradient in this crate.

use crate::error::Error;
use crate::mathx;
use crate::tape::{NodeId, ParamStore, Tape};
use crate::Result;

/// Max relative error between analytic and central-difference gradients
/// over every coordinate of every parameter in the store.
///
/// `f` must rebuild the objective from scratch on each call (fresh tape)
/// and be deterministic: dropout disabled or masks derived from a fixed
/// seed inside `f`. Non-determinism is detected by evaluating twice at the
/// unperturbed point and reported as an error.
///
/// Relative error per coordinate: |analytic − numeric| / max(1e−12,
/// |analytic| + |numeric|).
pub fn finite_difference_check<F>(store: &mut ParamStore, h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(Tape, NodeId)>,
{
    if h <= 0.0 {
        return Err(Error::Config(alloc::format!("step h must be positive, got {h}")));
    }

    let eval = |store: &ParamStore, f: &mut F| -> Result<f64> {
        let (tape, loss) = f(store)?;
        let v = tape.value(store, loss);
        if v.shape() != (1, 1) {
            return Err(Error::Usage("objective must produce a scalar (1x1) node"));
        }
        Ok(v.values()[0])
    };

    let base_a = eval(store, &mut f)?;
    let base_b = eval(store, &mut f)?;
    if base_a.to_bits() != base_b.to_bits() {
        return Err(Error::Oracle(alloc::format!(
            "objective is not deterministic: {base_a} vs {base_b} at the same point"
        )));
    }

    // Analytic gradients via one taped backward pass.
    store.zero_grads();
    let (mut tape, loss) = f(store)?;
    tape.backward(store, loss)?;
    let analytic: alloc::vec::Vec<alloc::vec::Vec<f64>> =
        store.params().iter().map(|p| p.grad.values().to_vec()).collect();

    let mut worst = 0.0f64;
    for pi in 0..store.len() {
        for ci in 0..store.value(pi).len() {
            let orig = store.value(pi).values()[ci];

            store.value_mut(pi).values_mut()[ci] = orig + h;
            let plus = eval(store, &mut f)?;
            store.value_mut(pi).values_mut()[ci] = orig - h;
            let minus = eval(store, &mut f)?;
            store.value_mut(pi).values_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][ci];
            let denom = (mathx::abs(a) + mathx::abs(numeric)).max(1e-12);
            let rel = mathx::abs(a - numeric) / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
