//! Helpers shared by unit tests.

use crate::autograd::{Tape, Var};
use crate::nn::ParamStore;

/// Central differences with h = 1e-6 resolve roughly 1e-10 |f|; absolute
/// disagreements below this floor count as exact.
const NOISE_FLOOR: f64 = 1e-8;

/// Largest relative error between tape gradients and central differences
/// over every scalar of every parameter.
pub(crate) fn max_gradient_error(store: &mut ParamStore, f: impl Fn(&mut Tape) -> Var) -> f64 {
    let analytic = {
        let mut t = Tape::new(store);
        let out = f(&mut t);
        t.backward(out)
    };
    let eval = |store: &ParamStore| {
        let mut t = Tape::new(store);
        let out = f(&mut t);
        t.scalar(out)
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<_>>() {
        let (rows, cols) = store.get(id).value.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = store.get(id).value[[r, c]];
                store.get_mut(id).value[[r, c]] = orig + h;
                let up = eval(store);
                store.get_mut(id).value[[r, c]] = orig - h;
                let down = eval(store);
                store.get_mut(id).value[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic.get(id)[[r, c]];
                let diff = (a - numeric).abs();
                let err = if diff < NOISE_FLOOR { 0.0 } else { diff / a.abs().max(numeric.abs()) };
                worst = worst.max(err);
            }
        }
    }
    worst
}
