use super::{AdError, Tape, Tensor, Var};

/// Central-difference gradient of `f` at `point`.
pub fn finite_difference<F>(f: F, point: &Tensor, step: f64) -> Result<Tensor, AdError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AdError>,
{
    check_step(step)?;
    let eval = |t: Tensor| -> Result<f64, AdError> {
        let mut tape = Tape::new();
        let x = tape.constant(t)?;
        let y = f(&mut tape, x)?;
        let v = tape.value(y);
        if v.numel() != 1 {
            return Err(AdError::NonScalarLoss(v.shape().to_vec()));
        }
        if !v.item().is_finite() {
            return Err(AdError::NonFinite { op: "grad_check" });
        }
        Ok(v.item())
    };
    let mut out = Tensor::zeros(point.shape());
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        out.data_mut()[i] = (eval(plus)? - eval(minus)?) / (2.0 * step);
    }
    Ok(out)
}

/// Max over entries of `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, AdError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AdError>,
{
    check_step(step)?;
    let mut tape = Tape::new();
    let x = tape.param(point.clone())?;
    let y = f(&mut tape, x)?;
    if !tape.value(y).is_finite() {
        return Err(AdError::NonFinite { op: "grad_check" });
    }
    tape.backward(y)?;
    let analytic = tape.grad(x);
    let numeric = finite_difference(&f, point, step)?;
    Ok(max_relative_error(analytic.data(), numeric.data()))
}

pub(crate) fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn check_step(step: f64) -> Result<(), AdError> {
    if step > 0.0 && step <= 1e-3 {
        Ok(())
    } else {
        Err(AdError::Step(step))
    }
}
