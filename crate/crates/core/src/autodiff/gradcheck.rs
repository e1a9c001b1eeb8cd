//! Central finite-difference verification of reverse-mode gradients.

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Worst-coordinate report from a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub worst_label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
}

/// Compares the analytic gradient of `f` against central finite
/// differences at `point`, coordinate by coordinate.
///
/// `f` must return the scalar value and leave the full gradient in the
/// store's accumulators; it must be deterministic across calls. Relative
/// error per coordinate is |ad - fd| / max(1e-8, |ad| + |fd|).
pub fn gradient_check<F>(mut f: F, point: &ParamStore, epsilon: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    if epsilon <= 0.0 {
        return Err(Error::contract("gradient_check: epsilon must be positive"));
    }
    let mut store = point.clone();
    store.zero_grads();
    let base = f(&mut store)?;
    if !base.is_finite() {
        return Err(Error::numeric(format!(
            "gradient_check: non-finite function value {base} at base point"
        )));
    }
    let analytic = store.flatten_grads();
    let flat = store.flatten();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: 0,
        worst_label: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: flat.len(),
    };

    for i in 0..flat.len() {
        let mut eval_at = |x: f64, store: &mut ParamStore| -> Result<f64> {
            let mut perturbed = flat.clone();
            perturbed[i] = x;
            store.load_flat(&perturbed)?;
            store.zero_grads();
            let v = f(store)?;
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "gradient_check: non-finite function value at coordinate {} ({})",
                    i,
                    store.describe_flat_index(i)
                )));
            }
            Ok(v)
        };
        let fd =
            (eval_at(flat[i] + epsilon, &mut store)? - eval_at(flat[i] - epsilon, &mut store)?)
                / (2.0 * epsilon);
        let ad = analytic[i];
        let rel = (ad - fd).abs() / (1e-8_f64).max(ad.abs() + fd.abs());
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_coordinate = i;
            report.worst_label = store.describe_flat_index(i);
            report.analytic = ad;
            report.numeric = fd;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;
    use crate::autodiff::tensor::TensorValue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_form_passes() {
        // f(x) = x^T A x with fixed random A.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a_mat = TensorValue::matrix(n, n, a).unwrap();

        let mut point = ParamStore::new();
        point.insert("x", TensorValue::matrix(1, n, x0).unwrap()).unwrap();

        let report = gradient_check(
            |store| {
                let mut t = Tape::new();
                let x = t.leaf(store.get("x")?.clone());
                let a = t.leaf(a_mat.clone());
                let xt = t.transpose(x)?;
                let ax = t.matmul(a, xt)?;
                let y = t.matmul(x, ax)?;
                let y = t.reshape(y, Vec::<usize>::new())?;
                let grads = t.backward(y)?;
                store.accumulate_grad("x", &grads[x.0])?;
                t.value(y).scalar_value()
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut point = ParamStore::new();
        point.insert("x", TensorValue::vector(vec![1.0, 2.0])).unwrap();
        let report = gradient_check(|_| Ok(3.5), &point, 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn non_finite_value_is_diagnosed() {
        let mut point = ParamStore::new();
        point.insert("x", TensorValue::scalar(0.0)).unwrap();
        let err = gradient_check(
            |store| {
                let v = store.get("x")?.data()[0];
                Ok(if v > 0.0 { f64::NAN } else { 0.0 })
            },
            &point,
            1e-5,
        );
        assert!(err.is_err());
    }
}
