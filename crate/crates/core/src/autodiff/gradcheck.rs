use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Max over checked coordinates of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±step perturbation flipped the sign of some ReLU input.
    pub excluded: Vec<usize>,
}

fn evaluate<F>(f: &F, point: &Tensor, trace: bool) -> Result<(f64, Option<Vec<i8>>)>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    if trace {
        g.enable_kink_trace();
    }
    let x = g.constant(point);
    let out = f(&mut g, x)?;
    let value = match g.value(out) {
        [v] => *v,
        other => {
            return Err(Error::Usage(format!(
                "grad_check needs a scalar function, got {} outputs",
                other.len()
            )))
        }
    };
    if !value.is_finite() {
        return Err(Error::Numeric(format!("function evaluated to {value}")));
    }
    Ok((value, g.kink_trace().map(<[i8]>::to_vec)))
}

/// Checks the gradient of the scalar function `f` at `point`.
///
/// `f` receives a fresh graph and the node holding the point; every other
/// input it needs must be added as a constant. Numeric derivatives use
/// `(f(x + step·e_i) - f(x - step·e_i)) / (2·step)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Usage(format!("finite-difference step must be positive, got {step}")));
    }
    let mut g = Graph::new();
    let x = g.param(point);
    let loss = f(&mut g, x)?;
    g.backward(loss)?;
    let analytic = g
        .grad(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; point.len()]);

    let mut probe = point.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        excluded: Vec::new(),
    };
    for (i, &a) in analytic.iter().enumerate() {
        let base = point.values()[i];
        probe.values_mut()[i] = base + step;
        let (plus, plus_trace) = evaluate(&f, &probe, true)?;
        probe.values_mut()[i] = base - step;
        let (minus, minus_trace) = evaluate(&f, &probe, true)?;
        probe.values_mut()[i] = base;

        if plus_trace != minus_trace {
            report.excluded.push(i);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        report.max_rel_error = report.max_rel_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}
