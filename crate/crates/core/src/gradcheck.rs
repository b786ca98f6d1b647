//! Central-difference verification of analytic gradients.

use alloc::vec::Vec;

use crate::{Graph, Result, Tensor, Var};

/// Step used for central differences.
pub const STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn eval(params: &[Tensor], f: &impl Fn(&mut Graph, &[Var]) -> Result<Var>) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.tensor(p)).collect();
    let out = f(&mut g, &vars).expect("function under check failed");
    g.item(out)
}

/// Largest elementwise relative error between reverse-mode gradients and
/// central differences of the scalar `f` over every gradient-tracking
/// tensor in `params`. `f` must be deterministic (fixed random draws).
///
/// Each tensor is perturbed in place and restored afterwards.
pub fn finite_diff_check(params: &mut [Tensor], f: impl Fn(&mut Graph, &[Var]) -> Result<Var>) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.tensor(p)).collect();
    let out = f(&mut g, &vars).expect("function under check failed");
    g.backward(out).expect("scalar output");
    let analytic: Vec<Option<Vec<f64>>> = vars.iter().map(|&v| g.grad(v).map(<[f64]>::to_vec)).collect();

    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        if !params[pi].requires_grad {
            continue;
        }
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            params[pi].data_mut()[j] = orig + STEP;
            let up = eval(params, &f);
            params[pi].data_mut()[j] = orig - STEP;
            let down = eval(params, &f);
            params[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[pi].as_ref().map_or(0.0, |g| g[j]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}
