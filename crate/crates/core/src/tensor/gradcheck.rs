//! Central finite-difference gradient checking.

use super::ParamStore;
use crate::error::{Error, Result};

/// Compare the analytic gradients stored in `store` against central finite
/// differences of `f` and return the worst relative error.
///
/// The caller populates the gradient slots first (e.g. via a backward pass
/// at the current parameters). Every coordinate of every parameter is
/// perturbed by `+h` and `-h`; the relative error of a coordinate is
/// `|analytic - fd| / max(|analytic|, |fd|)`, taken as 0 when both sides
/// are below 1e-12.
pub fn grad_check<F>(f: F, store: &mut ParamStore, h: f64) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step h must be positive, got {h}")));
    }

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut worst = 0.0f64;

    for name in &names {
        let analytic = store.grad(name)?.clone();
        let (rows, cols) = store.param(name)?.shape();
        for r in 0..rows {
            for c in 0..cols {
                let original = store.param(name)?[(r, c)];

                store.param_mut(name)?[(r, c)] = original + h;
                let f_plus = f(store)?;
                store.param_mut(name)?[(r, c)] = original - h;
                let f_minus = f(store)?;
                store.param_mut(name)?[(r, c)] = original;

                if !f_plus.is_finite() || !f_minus.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "objective at perturbed parameter '{name}'[{r},{c}]"
                    )));
                }

                let fd = (f_plus - f_minus) / (2.0 * h);
                let a = analytic[(r, c)];
                let denom = a.abs().max(fd.abs());
                let rel = if denom < 1e-12 { 0.0 } else { (a - fd).abs() / denom };
                worst = worst.max(rel);
            }
        }
    }

    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn linear_function_is_nearly_exact() {
        let mut store = ParamStore::new();
        store.insert("p", Matrix::from_rows(&[&[0.3, -1.2], &[4.5, 0.0]]));
        store.set_grad("p", Matrix::from_fn(2, 2, |_, _| 1.0)).unwrap();
        let err = grad_check(
            |s| Ok(s.param("p")?.data().iter().sum()),
            &mut store,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn quadratic_matches_closed_form() {
        // f(p) = sum(p^2), grad = 2p; at p = [1, 2] that is [2, 4].
        let mut store = ParamStore::new();
        store.insert("p", Matrix::from_rows(&[&[1.0, 2.0]]));
        store.set_grad("p", Matrix::from_rows(&[&[2.0, 4.0]])).unwrap();
        let err = grad_check(
            |s| Ok(s.param("p")?.data().iter().map(|x| x * x).sum()),
            &mut store,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut store = ParamStore::new();
        store.insert("p", Matrix::from_rows(&[&[1.0]]));
        store.set_grad("p", Matrix::from_rows(&[&[2.5]])).unwrap();
        let err = grad_check(
            |s| Ok(s.param("p")?.data().iter().sum()),
            &mut store,
            1e-4,
        )
        .unwrap();
        assert!(err > 0.1, "corrupted gradient must produce a large error, got {err}");
    }

    #[test]
    fn nonpositive_h_rejected() {
        let mut store = ParamStore::new();
        store.insert("p", Matrix::zeros(1, 1));
        let res = grad_check(|_| Ok(0.0), &mut store, 0.0);
        assert!(matches!(res, Err(Error::Config(_))));
    }
}
