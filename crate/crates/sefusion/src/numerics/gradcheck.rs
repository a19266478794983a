//! Central finite-difference verification of tape gradients.
//!
//! Runs in f64 only: the truncation/round-off balance of central differences
//! at ε ≈ 1e-5 leaves no headroom in f32.

use crate::error::{Error, Result};
use crate::numerics::params::ParamSet;
use crate::numerics::tape::{Tape, VarId};

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub elements_checked: usize,
}

/// Relative error with an absolute floor, so near-zero gradient pairs are
/// compared on an absolute scale instead of exploding.
const RELATIVE_FLOOR: f64 = 1e-3;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares backward-pass gradients against central differences
/// (f(θ+ε) − f(θ−ε)) / 2ε for every element of every parameter.
///
/// `build` records the scalar loss for the given parameter values on the
/// provided tape; it is invoked once per perturbation.
pub fn finite_diff_check<F>(
    build: F,
    params: &mut ParamSet<f64>,
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<VarId>,
{
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::usage(format!(
            "finite_diff_check requires a positive finite epsilon, got {epsilon}"
        )));
    }

    let eval = |params: &ParamSet<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params)?;
        let value = tape.scalar_value(loss)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {value}")));
        }
        Ok(value)
    };

    // Analytic gradients at the unperturbed point.
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    let loss_value = tape.scalar_value(loss)?;
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss_value}")));
    }
    tape.backward(loss, params)?;
    let analytic: Vec<_> = params.ids().map(|id| params.grad(id).clone()).collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        elements_checked: 0,
    };

    let ids: Vec<_> = params.ids().collect();
    for (pi, id) in ids.iter().enumerate() {
        for i in 0..params.value(*id).len() {
            let original = params.value(*id).data()[i];
            params.value_mut(*id).data_mut()[i] = original + epsilon;
            let plus = eval(params)?;
            params.value_mut(*id).data_mut()[i] = original - epsilon;
            let minus = eval(params)?;
            params.value_mut(*id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic[pi].data()[i], numeric);
            report.elements_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = params.name(*id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::Matrix;

    #[test]
    fn rejects_zero_epsilon() {
        let mut params = ParamSet::<f64>::new();
        let w = params.add("w", Matrix::row(&[1.0]));
        let err = finite_diff_check(
            |tape, p| {
                let wv = tape.param(p, w);
                Ok(tape.sum(wv))
            },
            &mut params,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn linear_model_is_exact() {
        // Central differences are exact (up to round-off) for linear maps.
        let mut params = ParamSet::<f64>::new();
        let w = params.add("w", Matrix::row(&[0.7, -1.3, 2.1]));
        let report = finite_diff_check(
            |tape, p| {
                let wv = tape.param(p, w);
                let x = tape.constant(Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?);
                let prod = tape.matmul(wv, x)?;
                Ok(tape.sum(prod))
            },
            &mut params,
            1e-5,
        )
        .unwrap();
        assert_eq!(report.elements_checked, 3);
        assert!(
            report.max_relative_error < 1e-9,
            "linear case should be near-exact, got {}",
            report.max_relative_error
        );
    }

    #[test]
    fn nonlinear_chain_passes_at_1e5() {
        let mut params = ParamSet::<f64>::new();
        let w = params.add("w", Matrix::from_vec(2, 2, vec![0.3, -0.8, 1.1, 0.2]).unwrap());
        let b = params.add("b", Matrix::row(&[0.05, -0.4]));
        let report = finite_diff_check(
            |tape, p| {
                let x = tape.constant(Matrix::row(&[0.9, -1.7]));
                let wv = tape.param(p, w);
                let bv = tape.param(p, b);
                let h = tape.affine(x, wv, Some(bv))?;
                let h = tape.sigmoid(h);
                let h = tape.relu(h);
                Ok(tape.sum(h))
            },
            &mut params,
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");
    }

    #[test]
    fn reports_non_finite_loss() {
        let mut params = ParamSet::<f64>::new();
        let w = params.add("w", Matrix::row(&[1.0]));
        let err = finite_diff_check(
            |tape, p| {
                let wv = tape.param(p, w);
                let inf = tape.constant(Matrix::row(&[f64::INFINITY]));
                let s = tape.add(wv, inf)?;
                Ok(tape.sum(s))
            },
            &mut params,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }
}
