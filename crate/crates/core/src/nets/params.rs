use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors, ordered by name so iteration and serialization
/// are deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if !t.is_finite() {
            return Err(Error::Input(format!("parameter `{name}` is not finite")));
        }
        if self.tensors.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Adds `other` entrywise; names missing here are inserted.
    pub fn accumulate(&mut self, other: &ParamSet) {
        for (name, t) in &other.tensors {
            match self.tensors.get_mut(name) {
                Some(dst) => dst
                    .data_mut()
                    .iter_mut()
                    .zip(t.data())
                    .for_each(|(d, s)| *d += s),
                None => {
                    self.tensors.insert(name.clone(), t.clone());
                }
            }
        }
    }

    /// Registers every tensor as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            vars.insert(name.clone(), tape.param(t.clone())?);
        }
        Ok(Bound { vars })
    }
}

/// Tape handles for a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Collects gradients after `tape.backward`.
    pub fn grads(&self, tape: &Tape) -> ParamSet {
        let tensors = self
            .vars
            .iter()
            .map(|(name, &v)| (name.clone(), tape.grad(v)))
            .collect();
        ParamSet { tensors }
    }
}

/// Outcome of [`grad_check_params`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGradCheck {
    /// Largest `|analytic - numeric| / max(1, |analytic|)` over all entries.
    pub max_relative: f64,
    pub max_absolute: f64,
    /// Parameter holding the worst relative entry.
    pub worst: String,
    pub entries: usize,
}

/// Compares the tape gradient of the scalar `f` with central differences
/// over every entry of every parameter. `f` must be deterministic.
pub fn grad_check_params<F>(params: &ParamSet, f: F, step: f64) -> Result<ParamGradCheck>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(crate::autodiff::AdError::Step(step).into());
    }
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape)?;
        let y = f(&mut tape, &bound)?;
        Ok(tape.value(y).item())
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let y = f(&mut tape, &bound)?;
    tape.backward(y)?;
    let analytic = bound.grads(&tape);
    let mut report = ParamGradCheck::default();
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        for i in 0..t.numel() {
            let x = t.data()[i];
            probe.get_mut(name)?.data_mut()[i] = x + step;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = x - step;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(name)?.data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(1.0);
            report.max_absolute = report.max_absolute.max(abs);
            if rel > report.max_relative || report.worst.is_empty() {
                report.max_relative = report.max_relative.max(rel);
                report.worst = name.clone();
            }
            report.entries += 1;
        }
    }
    Ok(report)
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn uniform_weights<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, shape: &[usize]) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}
