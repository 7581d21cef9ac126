//! Central finite-difference verification of tape gradients in f64.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Finite-difference half step.
    pub step: f64,
    /// Coordinates compared; all of them when the inputs have fewer.
    pub samples: usize,
    /// Denominator floor of the relative error, so coordinates whose true
    /// gradient is zero are held to an absolute error instead.
    pub floor: f64,
    /// Seeds the output projection and the coordinate sample.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-6, samples: 150, floor: 1e-4, seed: 0 }
    }
}

/// The coordinate with the largest disagreement.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstCoordinate {
    pub input: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub worst: Option<WorstCoordinate>,
}

/// Graph under test: maps the input variables to an output of any shape.
pub type BuildFn<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

fn projected(tape: &mut Tape<f64>, out: Var, projection: &Tensor<f64>) -> Result<Var> {
    let p = tape.constant(projection.clone());
    let weighted = tape.mul(out, p)?;
    Ok(tape.sum(weighted))
}

fn evaluate(build: &BuildFn, values: &[Tensor<f64>], projection: &Tensor<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let loss = projected(&mut tape, out, projection)?;
    tape.value(loss).item()
}

/// Compares backpropagated gradients of `sum(build(inputs) * R)`, for a
/// fixed standard-normal `R`, with central differences on a sample of
/// input coordinates.
pub fn check_gradients(
    inputs: &[(&str, Tensor<f64>)],
    build: &BuildFn,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut tape = Tape::new();
    let vars = inputs.iter().map(|(n, t)| tape.param(n, t.clone())).collect::<Result<Vec<_>>>()?;
    let out = build(&mut tape, &vars)?;
    let shape = tape.value(out).shape().to_vec();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let projection =
        Tensor::from_vec(shape.clone(), (0..shape.iter().product()).map(|_| normal.sample(&mut rng)).collect())?;
    let loss = projected(&mut tape, out, &projection)?;
    let grads = tape.backward(loss)?;

    let coords: Vec<(usize, usize)> =
        inputs.iter().enumerate().flat_map(|(k, (_, t))| (0..t.numel()).map(move |i| (k, i))).collect();
    let picked = if coords.len() <= options.samples {
        (0..coords.len()).collect()
    } else {
        index::sample(&mut rng, coords.len(), options.samples).into_vec()
    };

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut report = GradCheckReport { coordinates: picked.len(), max_relative_error: 0.0, worst: None };
    for &c in &picked {
        let (k, i) = coords[c];
        let original = values[k].data()[i];
        values[k].data_mut()[i] = original + options.step;
        let plus = evaluate(build, &values, &projection)?;
        values[k].data_mut()[i] = original - options.step;
        let minus = evaluate(build, &values, &projection)?;
        values[k].data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * options.step);
        let analytic = grads.get(inputs[k].0).map_or(0.0, |g| g.data()[i]);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(options.floor);
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some(WorstCoordinate { input: inputs[k].0.to_owned(), index: i, analytic, numeric });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tensor_from;

    #[test]
    fn exact_gradients_pass() {
        let x = tensor_from(&[3], [0.5, -1.0, 2.0]).unwrap();
        let report = check_gradients(&[("x", x)], &|t, v| Ok(t.square(v[0])), &GradCheckOptions::default()).unwrap();
        assert_eq!(report.coordinates, 3);
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }

    #[test]
    fn a_wrong_rule_is_caught() {
        // max(x, 0) has a kink the difference straddles at x = 0.
        let x = tensor_from(&[1], [0.0]).unwrap();
        let report =
            check_gradients(&[("x", x)], &|t, v| Ok(t.max_with_scalar(v[0], 0.0)), &GradCheckOptions::default())
                .unwrap();
        assert!(report.max_relative_error > 0.1, "{report:?}");
    }
}
