//! Central finite-difference check of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::{Tensor, TensorError};

/// Maximum relative error between tape gradients and central differences
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` over every coordinate of
/// every input. The denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(TensorError::Evaluation(format!(
            "eps {eps} outside (0, 1e-3]"
        )));
    }
    let eval = |xs: &[Tensor]| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let v = f(&tape, &vars)?.value().item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::Evaluation(format!("function value {v}")))
        }
    };

    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&tape, &vars)?;
        if !out.value().item().is_finite() {
            return Err(TensorError::Evaluation("non-finite function value".into()));
        }
        let grads = tape.backward(out)?;
        vars.iter().map(|v| grads.get_or_zeros(*v)).collect()
    };

    let mut xs = inputs.to_vec();
    let mut worst = 0.0f64;
    for t in 0..xs.len() {
        for i in 0..xs[t].len() {
            let orig = xs[t].data()[i];
            xs[t].data_mut()[i] = orig + eps;
            let plus = eval(&xs)?;
            xs[t].data_mut()[i] = orig - eps;
            let minus = eval(&xs)?;
            xs[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[t].data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, TensorError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, TensorError>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}
