//! RMSprop with L2 weight decay.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::GradientMap;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Rmsprop<T: Scalar = f32> {
    pub learning_rate: f64,
    /// Decay rate of the squared-gradient average.
    pub rho: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    accumulators: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for Rmsprop<T> {
    fn default() -> Self {
        Rmsprop { learning_rate: 1e-4, rho: 0.9, epsilon: 1e-8, weight_decay: 5e-4, accumulators: BTreeMap::new() }
    }
}

impl<T: Scalar> Rmsprop<T> {
    pub fn new(learning_rate: f64, rho: f64, epsilon: f64, weight_decay: f64) -> Result<Self> {
        let opt = Rmsprop { learning_rate, rho, epsilon, weight_decay, accumulators: BTreeMap::new() };
        opt.validate()?;
        Ok(opt)
    }

    pub fn validate(&self) -> Result<()> {
        let valid = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.rho)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && [self.learning_rate, self.epsilon, self.weight_decay].iter().all(|v| v.is_finite());
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid RMSprop settings: lr {}, rho {}, epsilon {}, weight decay {}",
                self.learning_rate, self.rho, self.epsilon, self.weight_decay
            )))
        }
    }

    /// Squared-gradient averages by parameter name; empty before the first step.
    pub fn accumulators(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.accumulators
    }

    pub fn set_accumulator(&mut self, name: &str, acc: Tensor<T>) -> Result<()> {
        if acc.data().iter().any(|v| v.is_nan() || *v < T::zero()) {
            return Err(Error::InvalidArgument(format!("accumulator `{name}` has negative entries")));
        }
        self.accumulators.insert(name.to_owned(), acc);
        Ok(())
    }

    /// Applies one update to every parameter. Nothing is modified unless
    /// every parameter has a gradient of matching shape.
    pub fn step<'a, I>(&mut self, params: I, grads: &GradientMap<T>) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
    {
        let params: Vec<_> = params.into_iter().collect();
        for (name, theta) in &params {
            let g = grads.get(*name).ok_or_else(|| Error::MissingGradient((*name).to_owned()))?;
            if g.shape() != theta.shape() {
                return Err(Error::shape(
                    "rmsprop_step",
                    format!("gradient of `{name}` is {:?}, parameter is {:?}", g.shape(), theta.shape()),
                ));
            }
        }
        let lr = T::cast(self.learning_rate);
        let rho = T::cast(self.rho);
        let one_minus_rho = T::cast(1.0 - self.rho);
        let eps = T::cast(self.epsilon);
        let wd = T::cast(self.weight_decay);
        for (name, theta) in params {
            let grad = grads[name].data();
            let acc = self
                .accumulators
                .entry(name.to_owned())
                .or_insert_with(|| Tensor::zeros(theta.shape()).expect("parameter shape is valid"));
            if acc.shape() != theta.shape() {
                return Err(Error::shape(
                    "rmsprop_step",
                    format!("accumulator of `{name}` is {:?}, parameter is {:?}", acc.shape(), theta.shape()),
                ));
            }
            for ((t, a), &g) in theta.data_mut().iter_mut().zip(acc.data_mut()).zip(grad) {
                let g = g + wd * *t;
                *a = rho * *a + one_minus_rho * g * g;
                *t = *t - lr * g / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}
