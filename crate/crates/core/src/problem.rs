//! Problem data, spectral decomposition of the target and numeric tolerances.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DmfError, Result};
use crate::svd::full_svd;

/// Dimensions `d_0..d_L`, per-layer weights `lambda_l` and the target `Y`
/// (shape `d_L x d_0`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    dims: Vec<usize>,
    lambdas: Vec<f64>,
    y: DMatrix<f64>,
    lambda: f64,
}

impl ProblemSpec {
    pub fn new(dims: Vec<usize>, lambdas: Vec<f64>, y: DMatrix<f64>) -> Result<Self> {
        if dims.len() < 3 {
            return Err(DmfError::InvalidProblem(format!(
                "dims: need at least 3 entries (depth >= 2), got {}",
                dims.len()
            )));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(DmfError::InvalidProblem(format!(
                "dims[{pos}]: every dimension must be >= 1"
            )));
        }
        let depth = dims.len() - 1;
        if lambdas.len() != depth {
            return Err(DmfError::InvalidProblem(format!(
                "lambdas: expected {depth} weights (one per layer), got {}",
                lambdas.len()
            )));
        }
        if let Some(pos) = lambdas.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(DmfError::InvalidProblem(format!(
                "lambdas[{pos}] = {}: weights must be positive and finite",
                lambdas[pos]
            )));
        }
        let expected = (dims[depth], dims[0]);
        if y.shape() != expected {
            return Err(DmfError::InvalidProblem(format!(
                "Y: expected shape {:?} (d_L x d_0), got {:?}",
                expected,
                y.shape()
            )));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(DmfError::InvalidProblem("Y: entries must be finite".into()));
        }
        let lambda = lambdas.iter().product();
        Ok(Self {
            dims,
            lambdas,
            y,
            lambda,
        })
    }

    /// Target given by its singular values: `Y` is the `d_L x d_0` diagonal
    /// matrix holding `values`, padded with zeros.
    pub fn from_singular_values(dims: Vec<usize>, lambdas: Vec<f64>, values: &[f64]) -> Result<Self> {
        let (rows, cols) = match (dims.first(), dims.last()) {
            (Some(&c), Some(&r)) => (r, c),
            _ => return Err(DmfError::InvalidProblem("dims: empty".into())),
        };
        let dy = rows.min(cols);
        if values.len() > dy {
            return Err(DmfError::InvalidProblem(format!(
                "singular_values: at most min(d_0, d_L) = {dy} values allowed, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(DmfError::InvalidProblem(format!(
                "singular_values[{pos}] = {}: must be finite and nonnegative",
                values[pos]
            )));
        }
        let mut y = DMatrix::<f64>::zeros(rows, cols);
        for (i, &v) in values.iter().enumerate() {
            y[(i, i)] = v;
        }
        Self::new(dims, lambdas, y)
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Product of all layer weights.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d_min(&self) -> usize {
        *self.dims.iter().min().expect("dims nonempty")
    }

    pub fn d_y(&self) -> usize {
        self.dims[0].min(self.dims[self.depth()])
    }

    /// Shape `(d_l, d_{l-1})` of layer `l` (0-based, so `l = 0` is `W_1`).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.dims[l + 1], self.dims[l])
    }

    pub fn is_scalar(&self) -> bool {
        self.dims.iter().all(|&d| d == 1)
    }

    /// Same problem with a different target of the same shape.
    pub fn with_y(&self, y: DMatrix<f64>) -> Result<Self> {
        Self::new(self.dims.clone(), self.lambdas.clone(), y)
    }

    /// Same problem with different layer weights.
    pub fn with_lambdas(&self, lambdas: Vec<f64>) -> Result<Self> {
        Self::new(self.dims.clone(), lambdas, self.y.clone())
    }
}

/// JSON form of a problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dims: Vec<usize>,
    pub lambdas: Vec<f64>,
    #[serde(rename = "Y")]
    pub y: YSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum YSpec {
    Dense(Vec<Vec<f64>>),
    SingularValues(Vec<f64>),
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<ProblemSpec> {
        match self.y {
            YSpec::SingularValues(v) => ProblemSpec::from_singular_values(self.dims, self.lambdas, &v),
            YSpec::Dense(rows) => {
                let nrows = rows.len();
                let ncols = rows.first().map_or(0, |r| r.len());
                if let Some(pos) = rows.iter().position(|r| r.len() != ncols) {
                    return Err(DmfError::InvalidProblem(format!(
                        "Y.dense[{pos}]: ragged row (expected {ncols} entries)"
                    )));
                }
                let y = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
                ProblemSpec::new(self.dims, self.lambdas, y)
            }
        }
    }

    pub fn from_problem(p: &ProblemSpec) -> Self {
        let y = p.y();
        Self {
            dims: p.dims().to_vec(),
            lambdas: p.lambdas().to_vec(),
            y: YSpec::Dense((0..y.nrows()).map(|i| y.row(i).iter().copied().collect()).collect()),
        }
    }
}

/// Full SVD of `Y` with its singular values split into groups of equal value.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Singular values, nonincreasing, length `min(d_0, d_L)`.
    pub y: Vec<f64>,
    pub rank: usize,
    /// Index ranges of the distinct nonzero values, covering `0..rank`.
    pub groups: Vec<Range<usize>>,
    /// Representative (mean) value of each group.
    pub group_values: Vec<f64>,
    pub d_min: usize,
}

impl SpectralDecomposition {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    /// Group of singular value `i`, `None` for the zero tail.
    pub fn group_of(&self, i: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&i))
    }
}

pub fn spectral_decompose(spec: &ProblemSpec, group_tol: f64) -> Result<SpectralDecomposition> {
    let svd = full_svd(spec.y())?;
    let y = svd.values;
    let scale = group_tol * y.first().copied().unwrap_or(0.0).max(1.0);
    let rank = y.iter().take_while(|&&v| v > scale).count();

    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=rank {
        if i == rank || (y[i - 1] - y[i]).abs() > scale {
            groups.push(start..i);
            start = i;
        }
    }
    let group_values = groups
        .iter()
        .map(|g| y[g.clone()].iter().sum::<f64>() / g.len() as f64)
        .collect();
    Ok(SpectralDecomposition {
        u: svd.u,
        v: svd.v,
        y,
        rank,
        groups,
        group_values,
        d_min: spec.d_min(),
    })
}

/// Numeric thresholds shared by the analysis routines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative gap (w.r.t. `max(1, y_1)`) below which singular values are merged.
    pub group_tol: f64,
    /// Relative band around the root-count threshold treated as the double-root case.
    pub eq_tol: f64,
    /// Residual tolerance for the root equation when validating a spec.
    pub spec_tol: f64,
    /// Relative tie tolerance when comparing values of the scalar objective.
    pub tie_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            group_tol: 1e-9,
            eq_tol: 1e-9,
            spec_tol: 1e-8,
            tie_tol: 1e-9,
        }
    }
}

/// A problem bundled with its spectral data and tolerances.
#[derive(Clone, Debug)]
pub struct Landscape {
    pub problem: ProblemSpec,
    pub spectral: SpectralDecomposition,
    pub tol: Tolerances,
}

impl Landscape {
    pub fn new(problem: ProblemSpec, tol: Tolerances) -> Result<Self> {
        let spectral = spectral_decompose(&problem, tol.group_tol)?;
        Ok(Self {
            problem,
            spectral,
            tol,
        })
    }

    pub fn depth(&self) -> usize {
        self.problem.depth()
    }

    pub fn lambda(&self) -> f64 {
        self.problem.lambda()
    }
}
