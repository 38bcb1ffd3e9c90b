use ndarray::Array2;
use rand::Rng;

use super::{ParamTensor, Tape, Var};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates probed per parameter (all of them when the parameter is smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            samples_per_param: 50,
            seed: 0,
        }
    }
}

fn evaluate<'a, F>(values: &[Array2<f64>], objective: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = objective(&mut tape, &vars)?;
    tape.check()?;
    Ok(tape.scalar_value(out))
}

/// Compares reverse-mode gradients of `objective` against central finite
/// differences and returns the largest relative error
/// `|g_ad − g_fd| / max(1, |g_ad|, |g_fd|)` over the probed coordinates.
pub fn grad_check<'a, F>(params: &[ParamTensor], objective: F, opts: GradCheckOptions) -> Result<f64>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let values: Vec<Array2<f64>> = params.iter().map(|p| p.value.clone()).collect();

    let analytic: Vec<Array2<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let out = objective(&mut tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter()
            .zip(&values)
            .map(|(&v, val)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(val.dim()))
            })
            .collect()
    };

    let mut rng = seed::rng(opts.seed);
    let mut worst = 0.0f64;
    let mut probe = values.clone();
    for (pi, value) in values.iter().enumerate() {
        let (rows, cols) = value.dim();
        let total = rows * cols;
        let coords: Vec<usize> = if total <= opts.samples_per_param {
            (0..total).collect()
        } else {
            (0..opts.samples_per_param)
                .map(|_| rng.random_range(0..total))
                .collect()
        };
        for flat in coords {
            let (r, c) = (flat / cols, flat % cols);
            let original = value[[r, c]];
            probe[pi][[r, c]] = original + opts.h;
            let plus = evaluate(&probe, &objective).map_err(|e| probe_error(e, pi, r, c))?;
            probe[pi][[r, c]] = original - opts.h;
            let minus = evaluate(&probe, &objective).map_err(|e| probe_error(e, pi, r, c))?;
            probe[pi][[r, c]] = original;

            let fd = (plus - minus) / (2.0 * opts.h);
            let ad = analytic[pi][[r, c]];
            let rel = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn probe_error(e: Error, param: usize, r: usize, c: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("probe of param {param} at ({r}, {c}): {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sum_of_squares_is_exact() {
        let p = ParamTensor::new(array![[1.0, -2.0, 0.5], [3.0, 0.0, -1.5], [0.25, 2.0, -0.75]]);
        let err = grad_check(
            &[p],
            |t, v| {
                let sq = t.mul(v[0], v[0]);
                Ok(t.sum(sq))
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let p = ParamTensor::new(array![[1.0, 2.0]]);
        let err = grad_check(
            &[p],
            |t, _| Ok(t.scalar(4.0)),
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(err <= 1e-10);
    }

    #[test]
    fn non_finite_probe_is_an_error() {
        // log(x) at x = 1e-6 with h = 1e-5 steps into negative territory
        let p = ParamTensor::new(array![[1e-6]]);
        let res = grad_check(
            &[p],
            |t, v| {
                let l = t.log(v[0]);
                Ok(t.sum(l))
            },
            GradCheckOptions::default(),
        );
        assert!(res.unwrap_err().is_numeric());
    }
}
