use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Gradients, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Move against the gradient (minimize).
    Descent,
    /// Move along the gradient (maximize).
    Ascent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Method {
    pub fn adam() -> Self {
        Method::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Adam { .. } => "adam",
        }
    }
}

/// Optimizer state for one network.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    method: Method,
    step_size: T,
    first: Vec<Dense<T>>,
    second: Vec<Dense<T>>,
    steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(method: Method, step_size: T, net: &Mlp<T>) -> Result<Self> {
        if !(step_size > T::zero()) || !step_size.is_finite() {
            return Err(Error::invalid("optimizer step size must be positive"));
        }
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect::<Vec<_>>()
        };
        let (first, second) = match method {
            Method::Sgd => (Vec::new(), Vec::new()),
            Method::Adam { .. } => (zeros(), zeros()),
        };
        Ok(Self {
            method,
            step_size,
            first,
            second,
            steps: 0,
        })
    }

    pub fn sgd(step_size: T, net: &Mlp<T>) -> Result<Self> {
        Self::new(Method::Sgd, step_size, net)
    }

    pub fn adam(step_size: T, net: &Mlp<T>) -> Result<Self> {
        Self::new(Method::adam(), step_size, net)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn step_size(&self) -> T {
        self.step_size
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to `net` in place.
    pub fn apply(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>, direction: Direction) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::DimensionMismatch {
                what: "gradient layer count",
                expected: net.layers().len(),
                actual: grads.layers.len(),
            });
        }
        for (l, g) in net.layers().iter().zip(&grads.layers) {
            if l.weights.dim() != g.weights.dim() || l.bias.dim() != g.bias.dim() {
                return Err(Error::invalid("gradient shapes do not match the network"));
            }
        }
        let sign = match direction {
            Direction::Descent => -T::one(),
            Direction::Ascent => T::one(),
        };
        self.steps += 1;
        match self.method {
            Method::Sgd => {
                let scale = sign * self.step_size;
                for (l, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    l.weights.scaled_add(scale, &g.weights);
                    l.bias.scaled_add(scale, &g.bias);
                }
            }
            Method::Adam { beta1, beta2, epsilon } => {
                let b1 = T::lit(beta1);
                let b2 = T::lit(beta2);
                let eps = T::lit(epsilon);
                let t = self.steps as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let lr = self.step_size;
                let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p = *p + sign * lr * m_hat / (v_hat.sqrt() + eps);
                };
                let layers = net.layers_mut().iter_mut();
                for (((l, g), m), v) in layers.zip(&grads.layers).zip(&mut self.first).zip(&mut self.second) {
                    Zip::from(&mut l.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&g.weights)
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                    Zip::from(&mut l.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .and(&g.bias)
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Optimizer::apply`].
pub fn apply_update<T: Real>(
    net: &mut Mlp<T>,
    grads: &Gradients<T>,
    opt: &mut Optimizer<T>,
    direction: Direction,
) -> Result<()> {
    opt.apply(net, grads, direction)
}
