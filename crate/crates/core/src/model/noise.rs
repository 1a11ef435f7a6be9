use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;

/// Source of the standard-normal draws used for reparameterized sampling.
pub trait Noise {
    fn sample(&mut self, shape: &[usize]) -> Tensor;
}

pub struct GaussianNoise<R> {
    rng: R,
}

impl<R: Rng> GaussianNoise<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

impl<R: Rng> Noise for GaussianNoise<R> {
    fn sample(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape product")
    }
}

/// Always zero: samples collapse onto their means.
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    fn sample(&mut self, shape: &[usize]) -> Tensor {
        Tensor::zeros(shape)
    }
}

/// Hands out pre-drawn tensors in order. Falls back to zeros once drained
/// or when a requested shape does not match the next tensor.
pub struct ReplayNoise {
    queue: std::collections::VecDeque<Tensor>,
}

impl ReplayNoise {
    pub fn new(draws: impl IntoIterator<Item = Tensor>) -> Self {
        Self {
            queue: draws.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl Noise for ReplayNoise {
    fn sample(&mut self, shape: &[usize]) -> Tensor {
        match self.queue.pop_front() {
            Some(t) if t.shape() == shape => t,
            _ => Tensor::zeros(shape),
        }
    }
}
