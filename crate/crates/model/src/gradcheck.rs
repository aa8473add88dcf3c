//! Central finite-difference verification of tape gradients.

use crate::params::ParamStore;
use crate::tape::{Tape, Var};

/// Smallest magnitude used as the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic gradient of the scalar built by
/// `f` and central differences with step `eps`, over every scalar of every
/// parameter in `store`. Inputs to check must be stored as parameters.
pub fn grad_check(store: &ParamStore, eps: f64, f: impl Fn(&mut Tape) -> Var) -> f64 {
    let eval = |s: &ParamStore| {
        let mut t = Tape::new(s);
        let out = f(&mut t);
        t.value(out)[[0, 0]]
    };
    let grads = {
        let mut t = Tape::new(store);
        let out = f(&mut t);
        t.backward(out)
    };
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for id in 0..store.len() {
        let (rows, cols) = store.value(id).dim();
        for k in (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))) {
            let orig = store.value(id)[k];
            probe.value_mut(id)[k] = orig + eps;
            let up = eval(&probe);
            probe.value_mut(id)[k] = orig - eps;
            let down = eval(&probe);
            probe.value_mut(id)[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |g| g[k]);
            let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}
