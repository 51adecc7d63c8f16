//! Central finite-difference oracle for reverse-mode gradients.

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Denominator floor for [`relative_error`]; below it the comparison is absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of `f` at `x` with central differences of
/// step `h`, returning the largest [`relative_error`] over all elements.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let errors = check_gradients(|g, vars| f(g, vars[0]), std::slice::from_ref(x), h)?;
    Ok(errors[0])
}

/// Multi-parameter form of [`finite_difference_check`]: `f` receives one
/// parameter leaf per entry of `params` and returns a scalar loss. The result
/// holds the largest relative error per parameter tensor.
pub fn check_gradients<F>(f: F, params: &[Tensor], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|p| g.param(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        g.value(loss).item()
    };

    let mut work = params.to_vec();
    let mut worst = Vec::with_capacity(params.len());
    for (p, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; params[p].numel()]);
        let mut max_err: f64 = 0.0;
        for (i, &exact) in analytic.iter().enumerate() {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work[p].data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            max_err = max_err.max(relative_error(exact, numeric));
        }
        worst.push(max_err);
    }
    Ok(worst)
}
