use super::params::{GradStore, ParamStore};

/// Maximum relative error between analytic gradients and a fourth-order
/// central difference with step `eps`.
///
/// `loss_and_grad` must return the loss and its analytic gradient at the given
/// parameters; only the loss is used at the perturbed points.
pub fn gradcheck<F>(mut loss_and_grad: F, params: &ParamStore, eps: f64) -> f64
where
    F: FnMut(&ParamStore) -> (f64, GradStore),
{
    let (_, analytic) = loss_and_grad(params);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for idx in 0..params.param_count() {
        let orig = probe.get_flat(idx);
        let mut at = |delta: f64| {
            *probe.get_flat_mut(idx) = orig + delta;
            loss_and_grad(&probe).0
        };
        let (m2, m1, p1, p2) = (at(-2.0 * eps), at(-eps), at(eps), at(2.0 * eps));
        // Differences first: a constant loss must give exactly zero.
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
        *probe.get_flat_mut(idx) = orig;
        let a = analytic.get_flat(idx);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
