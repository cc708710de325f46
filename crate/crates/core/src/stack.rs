//! Ordered lists of layer matrices.

use nalgebra::DMatrix;

use crate::error::{DmfError, Result};
use crate::problem::ProblemSpec;

/// Layers `W_1..W_L`; `layers[l]` has shape `d_{l+1} x d_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorStack {
    pub layers: Vec<DMatrix<f64>>,
}

/// Directions live in the same space as weights.
pub type DirectionStack = FactorStack;

impl FactorStack {
    pub fn new(layers: Vec<DMatrix<f64>>) -> Self {
        Self { layers }
    }

    pub fn zeros(problem: &ProblemSpec) -> Self {
        let layers = (0..problem.depth())
            .map(|l| {
                let (r, c) = problem.layer_shape(l);
                DMatrix::zeros(r, c)
            })
            .collect();
        Self { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Checks that the layer shapes match the problem.
    pub fn check_shapes(&self, problem: &ProblemSpec) -> Result<()> {
        if self.layers.len() != problem.depth() {
            return Err(DmfError::DepthMismatch {
                expected: problem.depth(),
                got: self.layers.len(),
            });
        }
        for (l, w) in self.layers.iter().enumerate() {
            let expected = problem.layer_shape(l);
            if w.shape() != expected {
                return Err(DmfError::ShapeMismatch {
                    context: format!("layer {}", l + 1),
                    expected,
                    got: w.shape(),
                });
            }
        }
        Ok(())
    }

    /// Global inner product `sum_l <A_l, B_l>_F`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.layers.iter().zip(&other.layers).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.layers.iter().map(|a| a.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            layers: self.layers.iter().map(|a| a * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        Self {
            layers: self.layers.iter().zip(&other.layers).map(|(a, b)| a + b * s).collect(),
        }
    }

    /// Zeroes entries with magnitude below `floor`. Long descent runs drive
    /// unused coordinates into the subnormal range, which is very slow on
    /// most hardware.
    pub fn flush_below(&mut self, floor: f64) {
        for a in &mut self.layers {
            a.apply(|x| {
                if x.abs() < floor {
                    *x = 0.0;
                }
            });
        }
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            *a += b * s;
        }
    }

    pub fn is_unit(&self) -> bool {
        (self.norm_squared() - 1.0).abs() <= 1e-12
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().flat_map(|a| a.iter()).fold(0.0_f64, |m, &x| m.max(x.abs()))
    }
}

/// `W_L ... W_1`.
pub fn end_to_end_product(w: &FactorStack) -> Result<DMatrix<f64>> {
    let mut it = w.layers.iter().enumerate();
    let (_, first) = it
        .next()
        .ok_or_else(|| DmfError::InvalidProblem("empty factor stack".into()))?;
    let mut acc = first.clone();
    for (l, m) in it {
        if m.ncols() != acc.nrows() {
            return Err(DmfError::ShapeMismatch {
                context: format!("layer {}", l + 1),
                expected: (m.nrows(), acc.nrows()),
                got: m.shape(),
            });
        }
        acc = m * acc;
    }
    Ok(acc)
}

/// `max_l ||W_l W_l^T - W_{l+1}^T W_{l+1}||_F`.
pub fn balancedness_residual(w: &FactorStack) -> f64 {
    w.layers
        .windows(2)
        .map(|p| (&p[0] * p[0].transpose() - p[1].transpose() * &p[1]).norm())
        .fold(0.0, f64::max)
}
