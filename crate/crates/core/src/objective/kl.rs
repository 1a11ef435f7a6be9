use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// KL divergence between diagonal Gaussians `N(mu1, s1)` and `N(mu2, s2)`,
/// summed over dimensions.
pub fn gaussian_kl(mu1: &[f64], s1: &[f64], mu2: &[f64], s2: &[f64]) -> Result<f64> {
    let n = mu1.len();
    if s1.len() != n || mu2.len() != n || s2.len() != n {
        return Err(Error::Input("KL operands differ in length".into()));
    }
    if s1.iter().chain(s2).any(|&s| !(s > 0.0)) {
        return Err(Error::Input("KL needs strictly positive scales".into()));
    }
    Ok((0..n)
        .map(|i| {
            let d = mu1[i] - mu2[i];
            (s2[i] / s1[i]).ln() + (s1[i] * s1[i] + d * d) / (2.0 * s2[i] * s2[i]) - 0.5
        })
        .sum())
}

/// Row-wise KL, `[rows, 1]`. Either side may be a single row broadcast over
/// the other.
pub fn gaussian_kl_on_tape(tape: &mut Tape, mu1: Var, s1: Var, mu2: Var, s2: Var) -> Result<Var> {
    for s in [s1, s2] {
        if tape.value(s).data().iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Input("KL needs strictly positive scales".into()));
        }
    }
    let log1 = tape.log(s1)?;
    let log2 = tape.log(s2)?;
    let log_ratio = tape.sub(log2, log1)?;
    let var1 = tape.square(s1)?;
    let diff = tape.sub(mu1, mu2)?;
    let diff2 = tape.square(diff)?;
    let num = tape.add(var1, diff2)?;
    let var2 = tape.square(s2)?;
    let den = tape.scale(var2, 2.0)?;
    let quad = tape.div(num, den)?;
    let terms = tape.add(log_ratio, quad)?;
    let terms = tape.add_scalar(terms, -0.5)?;
    Ok(tape.sum_cols(terms)?)
}
