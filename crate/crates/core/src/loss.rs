//! Losses, gradients and the exact directional polynomial.
//!
//! `F(W) = ||W_L...W_1 - Y||^2 + sum_l lambda_l ||W_l||^2` is the user-facing
//! problem. `G` uses the target `sqrt(lambda) Y` and the uniform weight
//! `lambda = prod lambda_l`; the layer rescaling `W_l -> sqrt(lambda_l) W_l`
//! maps critical points of one onto the other.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DmfError, Result};
use crate::problem::ProblemSpec;
use crate::stack::FactorStack;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    F,
    G,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::F => "F",
            Objective::G => "G",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "F" | "f" => Ok(Objective::F),
            "G" | "g" => Ok(Objective::G),
            _ => Err(format!("unknown objective {s:?} (expected F or G)")),
        }
    }
}

fn target_scale(problem: &ProblemSpec, obj: Objective) -> f64 {
    match obj {
        Objective::F => 1.0,
        Objective::G => problem.lambda().sqrt(),
    }
}

fn weight(problem: &ProblemSpec, obj: Objective, l: usize) -> f64 {
    match obj {
        Objective::F => problem.lambdas()[l],
        Objective::G => problem.lambda(),
    }
}

fn residual(problem: &ProblemSpec, obj: Objective, prod: &DMatrix<f64>) -> DMatrix<f64> {
    prod - problem.y() * target_scale(problem, obj)
}

pub fn loss(problem: &ProblemSpec, w: &FactorStack, obj: Objective) -> Result<f64> {
    w.check_shapes(problem)?;
    let prod = crate::stack::end_to_end_product(w)?;
    let mut value = residual(problem, obj, &prod).norm_squared();
    for (l, m) in w.layers.iter().enumerate() {
        value += weight(problem, obj, l) * m.norm_squared();
    }
    Ok(value)
}

pub fn loss_f(problem: &ProblemSpec, w: &FactorStack) -> Result<f64> {
    loss(problem, w, Objective::F)
}

pub fn loss_g(problem: &ProblemSpec, w: &FactorStack) -> Result<f64> {
    loss(problem, w, Objective::G)
}

/// Loss and gradient in one pass.
pub fn loss_and_gradient(problem: &ProblemSpec, w: &FactorStack, obj: Objective) -> Result<(f64, FactorStack)> {
    w.check_shapes(problem)?;
    let depth = w.depth();
    // prefix[l] = W_{l+1} ... W_1
    let mut prefix: Vec<DMatrix<f64>> = Vec::with_capacity(depth);
    prefix.push(w.layers[0].clone());
    for m in &w.layers[1..] {
        let next = m * prefix.last().expect("nonempty");
        prefix.push(next);
    }
    let mut r = prefix.pop().expect("depth >= 1");
    match obj {
        Objective::F => r -= problem.y(),
        Objective::G => r -= problem.y() * target_scale(problem, obj),
    }
    let mut value = r.norm_squared();

    // walk back: back = (W_L ... W_{l+2})^T R
    let mut grads = vec![DMatrix::<f64>::zeros(0, 0); depth];
    let mut back = r;
    for l in (0..depth).rev() {
        let wt = weight(problem, obj, l);
        value += wt * w.layers[l].norm_squared();
        let mut g = if l > 0 { &back * prefix[l - 1].transpose() } else { back.clone() };
        g *= 2.0;
        g += &w.layers[l] * (2.0 * wt);
        grads[l] = g;
        if l > 0 {
            back = w.layers[l].transpose() * back;
        }
    }
    Ok((value, FactorStack::new(grads)))
}

pub fn gradient(problem: &ProblemSpec, w: &FactorStack, obj: Objective) -> Result<FactorStack> {
    loss_and_gradient(problem, w, obj).map(|(_, g)| g)
}

pub fn grad_f(problem: &ProblemSpec, w: &FactorStack) -> Result<FactorStack> {
    gradient(problem, w, Objective::F)
}

pub fn grad_g(problem: &ProblemSpec, w: &FactorStack) -> Result<FactorStack> {
    gradient(problem, w, Objective::G)
}

/// Coefficients `[c0, c1, c2, c3]` of `t -> loss(W + tD)` up to cubic order.
///
/// The coefficient matrices of `prod_l (W_l + t D_l)` are built layer by
/// layer: `A_k <- W_l A_k + D_l A_{k-1}`.
pub fn directional_poly(problem: &ProblemSpec, w: &FactorStack, d: &FactorStack, obj: Objective) -> Result<[f64; 4]> {
    w.check_shapes(problem)?;
    d.check_shapes(problem)?;
    let d0 = problem.dims()[0];
    let mut a: [DMatrix<f64>; 4] = [
        DMatrix::identity(d0, d0),
        DMatrix::zeros(d0, d0),
        DMatrix::zeros(d0, d0),
        DMatrix::zeros(d0, d0),
    ];
    for (wl, dl) in w.layers.iter().zip(&d.layers) {
        let next = [
            wl * &a[0],
            wl * &a[1] + dl * &a[0],
            wl * &a[2] + dl * &a[1],
            wl * &a[3] + dl * &a[2],
        ];
        a = next;
    }
    a[0] -= problem.y() * target_scale(problem, obj);
    let ip = |i: usize, j: usize| a[i].dot(&a[j]);
    let mut c = [
        ip(0, 0),
        2.0 * ip(0, 1),
        ip(1, 1) + 2.0 * ip(0, 2),
        2.0 * ip(0, 3) + 2.0 * ip(1, 2),
    ];
    for (l, (wl, dl)) in w.layers.iter().zip(&d.layers).enumerate() {
        let wt = weight(problem, obj, l);
        c[0] += wt * wl.norm_squared();
        c[1] += 2.0 * wt * wl.dot(dl);
        c[2] += wt * dl.norm_squared();
    }
    Ok(c)
}

/// Second derivative of `t -> loss(W + tD)` at `t = 0`, i.e. twice the exact
/// `t^2` coefficient.
pub fn hessian_quadform(problem: &ProblemSpec, w: &FactorStack, d: &FactorStack, obj: Objective) -> Result<f64> {
    directional_poly(problem, w, d, obj).map(|c| 2.0 * c[2])
}

fn check_lambdas(w: &FactorStack, lambdas: &[f64]) -> Result<()> {
    if w.depth() != lambdas.len() {
        return Err(DmfError::DepthMismatch {
            expected: lambdas.len(),
            got: w.depth(),
        });
    }
    Ok(())
}

/// `(sqrt(lambda_1) W_1, ..., sqrt(lambda_L) W_L)`.
pub fn rescale_f_to_g(w: &FactorStack, lambdas: &[f64]) -> Result<FactorStack> {
    check_lambdas(w, lambdas)?;
    Ok(FactorStack::new(
        w.layers.iter().zip(lambdas).map(|(m, l)| m * l.sqrt()).collect(),
    ))
}

pub fn rescale_g_to_f(w: &FactorStack, lambdas: &[f64]) -> Result<FactorStack> {
    check_lambdas(w, lambdas)?;
    Ok(FactorStack::new(
        w.layers.iter().zip(lambdas).map(|(m, l)| m / l.sqrt()).collect(),
    ))
}
