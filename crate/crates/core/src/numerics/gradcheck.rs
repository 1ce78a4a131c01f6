//! Central finite differences, used as an independent check on
//! [`Tape::backward`](super::Tape::backward).

use super::param::{ParamId, ParamStore};
use super::real::Real;
use super::tensor::Tensor;

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff<F: Real>(x: &Tensor<F>, step: f64, mut f: impl FnMut(&Tensor<F>) -> f64) -> Tensor<F> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + F::cast(step);
        let hi = f(&probe);
        probe.data_mut()[i] = orig - F::cast(step);
        let lo = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = F::cast((hi - lo) / (2.0 * step));
    }
    grad
}

/// Central-difference gradient of `f` with respect to one parameter of
/// `store`. The parameter is restored before returning.
pub fn finite_diff_grad<F: Real>(
    store: &mut ParamStore<F>,
    id: ParamId,
    step: f64,
    mut f: impl FnMut(&ParamStore<F>) -> f64,
) -> Tensor<F> {
    let orig = store.value(id).clone();
    let mut grad = Tensor::zeros(orig.shape().to_vec());
    for i in 0..orig.len() {
        let v = orig.data()[i];
        store.get_mut(id).value.data_mut()[i] = v + F::cast(step);
        let hi = f(store);
        store.get_mut(id).value.data_mut()[i] = v - F::cast(step);
        let lo = f(store);
        store.get_mut(id).value.data_mut()[i] = v;
        grad.data_mut()[i] = F::cast((hi - lo) / (2.0 * step));
    }
    grad
}

/// Largest elementwise relative error, with magnitudes below `1e-3`
/// compared absolutely.
pub fn max_rel_error<F: Real>(analytic: &Tensor<F>, numeric: &Tensor<F>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "max_rel_error: shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| {
            let (a, n) = (a.as_f64(), n.as_f64());
            (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
        })
        .fold(0.0, f64::max)
}
