//! Central finite-difference verification of analytic gradients.

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1e-8)
}

fn objective(net: &Mlp<f64>, input: &[f64], upstream: &[f64]) -> Result<f64> {
    let out = net.forward(input)?;
    Ok(out.iter().zip(upstream).map(|(o, u)| o * u).sum())
}

/// Numeric gradient of `upstream·net(input)` for every parameter, in [`Mlp::flatten`] order.
pub fn numeric_parameter_gradient(net: &Mlp<f64>, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            what: "upstream gradient",
            expected: net.output_dim(),
            actual: upstream.len(),
        });
    }
    let base = net.flatten();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        params[i] = base[i] + FD_STEP;
        probe.unflatten(&params)?;
        let plus = objective(&probe, input, upstream)?;
        params[i] = base[i] - FD_STEP;
        probe.unflatten(&params)?;
        let minus = objective(&probe, input, upstream)?;
        params[i] = base[i];
        out.push((plus - minus) / (2.0 * FD_STEP));
    }
    Ok(out)
}

/// Numeric gradient of `upstream·net(input)` with respect to the input vector.
pub fn numeric_input_gradient(net: &Mlp<f64>, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    let mut x = input.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        x[i] = xi + FD_STEP;
        let plus = objective(net, &x, upstream)?;
        x[i] = xi - FD_STEP;
        let minus = objective(net, &x, upstream)?;
        x[i] = xi;
        out.push((plus - minus) / (2.0 * FD_STEP));
    }
    Ok(out)
}

/// Largest relative error between `analytic` parameter gradients and central differences.
pub fn compare_with_finite_differences(
    net: &Mlp<f64>,
    input: &[f64],
    upstream: &[f64],
    analytic: &Gradients<f64>,
) -> Result<f64> {
    let numeric = numeric_parameter_gradient(net, input, upstream)?;
    let analytic = analytic.flatten();
    if analytic.len() != numeric.len() {
        return Err(Error::DimensionMismatch {
            what: "analytic gradient",
            expected: numeric.len(),
            actual: analytic.len(),
        });
    }
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

/// Max relative error of [`Mlp::backward`] against central differences (`h = 1e-5`),
/// over every parameter and every input component.
pub fn finite_difference_check(net: &Mlp<f64>, input: &[f64], upstream: &[f64]) -> Result<f64> {
    let analytic = net.backward(input, upstream)?;
    let params = compare_with_finite_differences(net, input, upstream, &analytic)?;
    let numeric_in = numeric_input_gradient(net, input, upstream)?;
    let analytic_in = analytic.input.expect("backward returns the input gradient");
    let inputs = analytic_in
        .iter()
        .zip(&numeric_in)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(params.max(inputs))
}
