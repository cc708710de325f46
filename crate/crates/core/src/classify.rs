//! Classification of critical specs, the benign-regularization check,
//! certificate directions and the global minimum value.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::critical::{dress, validate_spec, CriticalSpec, Dressing};
use crate::error::{DmfError, Result};
use crate::loss::Objective;
use crate::problem::Landscape;
use crate::scalar::{eval_f_dx, eval_f_dxx, eval_g, lambda_critical, root_profile, scalar_argmin_g, tie_band, RootKind, RootLabel};
use crate::stack::DirectionStack;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CritClass {
    GlobalMin,
    SpuriousLocalMin,
    StrictSaddle,
    NonStrictSaddle,
    Unsupported(String),
}

impl CritClass {
    pub fn is_local_min(&self) -> bool {
        matches!(self, CritClass::GlobalMin | CritClass::SpuriousLocalMin)
    }

    pub fn name(&self) -> &str {
        match self {
            CritClass::GlobalMin => "GlobalMin",
            CritClass::SpuriousLocalMin => "SpuriousLocalMin",
            CritClass::StrictSaddle => "StrictSaddle",
            CritClass::NonStrictSaddle => "NonStrictSaddle",
            CritClass::Unsupported(_) => "Unsupported",
        }
    }
}

/// Which rule fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clause {
    /// a supported value is the smaller root of its pair
    SmallerRoot,
    /// supported data values are not the largest ones
    Misaligned,
    /// a supported value is a double root
    DoubleRoot,
    /// every coordinate is a global minimizer of its scalar problem
    InArgminSet,
    /// aligned larger roots, but some coordinate is not a scalar global minimizer
    NotInArgminSet,
    /// depth-2 closed form
    DepthTwo,
    /// all dimensions equal to one
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: CritClass,
    pub clause: Clause,
    /// Slot that triggered the clause, when there is one.
    pub index: Option<usize>,
    pub detail: String,
}

/// Root label of `sigma` as a root of `f(.; y)`; `None` for zero.
pub fn label_of(land: &Landscape, sigma: f64, y: f64) -> Result<Option<RootLabel>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    let prof = root_profile(y, land.lambda(), land.depth(), land.tol.eq_tol, 0.0)?;
    Ok(match prof.root {
        RootKind::NoPositive => None,
        RootKind::UniquePositive { .. } => Some(RootLabel::S3),
        RootKind::TwoPositive { .. } => Some(if sigma > prof.thresholds.x_star {
            RootLabel::S1
        } else {
            RootLabel::S2
        }),
    })
}

/// Indices of the supported data values and of the unsupported ones in the
/// first `d_Y` slots.
fn alignment(land: &Landscape, spec: &CriticalSpec) -> (bool, Vec<usize>, Vec<usize>) {
    let r = spec.support();
    let groups = |idx: &mut dyn Iterator<Item = usize>| {
        let mut g: Vec<Option<usize>> = idx.map(|i| land.spectral.group_of(i)).collect();
        g.sort();
        g
    };
    let supported: Vec<usize> = (0..r).collect();
    let rest: Vec<usize> = (r..spec.pi.len()).collect();
    let aligned = groups(&mut supported.iter().map(|&k| spec.pi[k])) == groups(&mut (0..r));
    (aligned, supported, rest)
}

/// Decision procedure for a valid spec.
pub fn classify(land: &Landscape, spec: &CriticalSpec) -> Result<Classification> {
    validate_spec(land, spec)?;
    if land.problem.is_scalar() {
        return Ok(Classification {
            class: CritClass::Unsupported("all dimensions are 1; the scalar problem is excluded from the theory".into()),
            clause: Clause::Scalar,
            index: None,
            detail: String::new(),
        });
    }
    if land.depth() == 2 {
        return classify_l2(land, spec);
    }
    let y = &land.spectral.y;
    let r = spec.support();
    let mut labels = Vec::with_capacity(r);
    for i in 0..r {
        labels.push(label_of(land, spec.sigma[i], y[spec.pi[i]])?);
    }
    if let Some(i) = labels.iter().position(|l| *l == Some(RootLabel::S2)) {
        return Ok(Classification {
            class: CritClass::StrictSaddle,
            clause: Clause::SmallerRoot,
            index: Some(i),
            detail: format!("sigma[{i}] is the smaller root for y = {}", y[spec.pi[i]]),
        });
    }
    let (aligned, _, _) = alignment(land, spec);
    if !aligned {
        return Ok(Classification {
            class: CritClass::StrictSaddle,
            clause: Clause::Misaligned,
            index: None,
            detail: format!("supported data values are not the top {r}"),
        });
    }
    if let Some(i) = labels.iter().position(|l| *l == Some(RootLabel::S3)) {
        return Ok(Classification {
            class: CritClass::NonStrictSaddle,
            clause: Clause::DoubleRoot,
            index: Some(i),
            detail: format!("sigma[{i}] is the double root for y = {}", y[spec.pi[i]]),
        });
    }
    match first_outside_argmin(land, spec)? {
        None => Ok(Classification {
            class: CritClass::GlobalMin,
            clause: Clause::InArgminSet,
            index: None,
            detail: String::new(),
        }),
        Some(i) => Ok(Classification {
            class: CritClass::SpuriousLocalMin,
            clause: Clause::NotInArgminSet,
            index: Some(i),
            detail: format!("g(sigma[{i}]; y_{i}) exceeds the scalar minimum"),
        }),
    }
}

/// First coordinate `i < d_min` with `g(sigma_i; y_i)` above the scalar minimum.
fn first_outside_argmin(land: &Landscape, spec: &CriticalSpec) -> Result<Option<usize>> {
    let lambda = land.lambda();
    let depth = land.depth();
    for (i, &s) in spec.sigma.iter().enumerate() {
        let y = land.spectral.y[i];
        let m = scalar_argmin_g(y, lambda, depth, land.tol.eq_tol, land.tol.tie_tol)?;
        if eval_g(s, y, lambda, depth) > m.min_value + tie_band(y, lambda, land.tol.tie_tol) {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Depth-2 rule: the global minimizers have `sigma_i = sqrt(max(sqrt(lambda) y_i - lambda, 0))`;
/// every other critical point is a strict saddle.
pub fn classify_l2(land: &Landscape, spec: &CriticalSpec) -> Result<Classification> {
    validate_spec(land, spec)?;
    if land.depth() != 2 {
        return Err(DmfError::InvalidProblem(format!("depth {} passed to the depth-2 rule", land.depth())));
    }
    let lambda = land.lambda();
    for (i, &s) in spec.sigma.iter().enumerate() {
        let star = (lambda.sqrt() * land.spectral.y[i] - lambda).max(0.0).sqrt();
        if (s - star).abs() > 1e-8 * (1.0 + star) {
            return Ok(Classification {
                class: CritClass::StrictSaddle,
                clause: Clause::DepthTwo,
                index: Some(i),
                detail: format!("sigma[{i}] = {s} differs from the optimal {star}"),
            });
        }
    }
    Ok(Classification {
        class: CritClass::GlobalMin,
        clause: Clause::DepthTwo,
        index: None,
        detail: String::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub lambda: f64,
    /// Critical weight of each `y_i`, `i < d_min`; `None` where `y_i = 0`.
    pub lambda_crit: Vec<Option<f64>>,
    pub benign: bool,
    pub violating: Vec<usize>,
}

/// Every critical point is a local minimizer or a strict saddle unless
/// `lambda` matches the critical weight of some `y_i`, `i < d_min`.
pub fn check_partially_benign(land: &Landscape, eq_tol: f64) -> Result<RegularizationReport> {
    let depth = land.depth();
    if depth < 3 {
        return Err(DmfError::UnsupportedDepth { depth });
    }
    let lambda = land.lambda();
    let mut lambda_crit = Vec::new();
    let mut violating = Vec::new();
    for i in 0..land.problem.d_min() {
        let y = land.spectral.y[i];
        if land.spectral.group_of(i).is_none() {
            lambda_crit.push(None);
            continue;
        }
        let lc = lambda_critical(y, depth)?;
        if (lambda - lc).abs() <= eq_tol * lc {
            violating.push(i);
        }
        lambda_crit.push(Some(lc));
    }
    Ok(RegularizationReport {
        lambda,
        lambda_crit,
        benign: violating.is_empty(),
        violating,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    /// all layers move the smaller-root slot down
    S2Descent,
    /// couples a supported slot with a larger unsupported data value
    MisalignmentDescent,
    /// moves the double-root slot; second order vanishes, third does not
    CubicNonStrict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub direction: DirectionStack,
    /// Analytic second derivative along `direction`.
    pub expected_quadform: f64,
    /// Analytic third-order coefficient (cubic kind only).
    pub expected_cubic: Option<f64>,
    /// Slots used by the construction.
    pub slots: (usize, usize),
}

fn slot_unit(land: &Landscape, l: usize, i: usize, j: usize, v: f64) -> DMatrix<f64> {
    let (r, c) = land.problem.layer_shape(l);
    let mut m = DMatrix::zeros(r, c);
    m[(i, j)] = v;
    m
}

/// Certificate direction of the requested kind, transported through the same
/// frames as the construction. In F coordinates the direction is rescaled
/// layerwise and the expected values are divided by `lambda`.
pub fn certificate_direction(
    land: &Landscape,
    spec: &CriticalSpec,
    dressing: &Dressing,
    kind: CertificateKind,
    coord: Objective,
) -> Result<Certificate> {
    validate_spec(land, spec)?;
    let depth = land.depth();
    if depth < 3 {
        return Err(DmfError::UnsupportedDepth { depth });
    }
    let lambda = land.lambda();
    let y = &land.spectral.y;
    let r = spec.support();
    let mut labels = Vec::with_capacity(r);
    for i in 0..r {
        labels.push(label_of(land, spec.sigma[i], y[spec.pi[i]])?);
    }
    let lf = depth as f64;

    let (slot, expected_quadform, expected_cubic, slots) = match kind {
        CertificateKind::S2Descent => {
            let i = labels
                .iter()
                .position(|l| *l == Some(RootLabel::S2))
                .ok_or_else(|| DmfError::ClauseNotApplicable("no smaller-root slot in the support".into()))?;
            let yi = y[spec.pi[i]];
            let q = 2.0 * lf * eval_f_dx(spec.sigma[i], yi, lambda, depth);
            let layers = (0..depth).map(|l| slot_unit(land, l, i, i, -1.0)).collect::<Vec<_>>();
            (layers, q, None, (i, i))
        }
        CertificateKind::MisalignmentDescent => {
            let (aligned, supported, rest) = alignment(land, spec);
            if aligned {
                return Err(DmfError::ClauseNotApplicable("spec is aligned".into()));
            }
            let i = *supported
                .iter()
                .min_by(|&&a, &&b| y[spec.pi[a]].total_cmp(&y[spec.pi[b]]).then(b.cmp(&a)))
                .expect("misaligned spec has support");
            let j = *rest
                .iter()
                .max_by(|&&a, &&b| y[spec.pi[a]].total_cmp(&y[spec.pi[b]]).then(b.cmp(&a)))
                .ok_or_else(|| DmfError::ClauseNotApplicable("no unsupported slot".into()))?;
            let s = spec.sigma[i];
            let q = 4.0 * lambda.sqrt() * s.powi(depth as i32 - 2) * (y[spec.pi[i]] - y[spec.pi[j]]);
            let layers = (0..depth)
                .map(|l| {
                    if l == 0 {
                        slot_unit(land, l, i, j, 1.0)
                    } else if l + 1 == depth {
                        slot_unit(land, l, j, i, 1.0)
                    } else {
                        let (rr, cc) = land.problem.layer_shape(l);
                        DMatrix::zeros(rr, cc)
                    }
                })
                .collect::<Vec<_>>();
            (layers, q, None, (i, j))
        }
        CertificateKind::CubicNonStrict => {
            let i = labels
                .iter()
                .position(|l| *l == Some(RootLabel::S3))
                .ok_or_else(|| DmfError::ClauseNotApplicable("no double-root slot in the support".into()))?;
            let yi = y[spec.pi[i]];
            let q = 2.0 * lf * eval_f_dx(spec.sigma[i], yi, lambda, depth);
            let c = lf / 3.0 * eval_f_dxx(spec.sigma[i], yi, lambda, depth);
            let layers = (0..depth).map(|l| slot_unit(land, l, i, i, 1.0)).collect::<Vec<_>>();
            (layers, q, Some(c), (i, i))
        }
    };
    let g_dir = dress(land, spec, dressing, &slot);
    Ok(match coord {
        Objective::G => Certificate {
            kind,
            direction: g_dir,
            expected_quadform,
            expected_cubic,
            slots,
        },
        Objective::F => Certificate {
            kind,
            direction: crate::loss::rescale_g_to_f(&g_dir, land.problem.lambdas())?,
            expected_quadform: expected_quadform / lambda,
            expected_cubic: expected_cubic.map(|c| c / lambda),
            slots,
        },
    })
}

/// Certificate matching the clause that classified `spec`, if it has one.
pub fn certificate_for(land: &Landscape, spec: &CriticalSpec, dressing: &Dressing, coord: Objective) -> Result<Option<Certificate>> {
    if land.depth() < 3 || land.problem.is_scalar() {
        return Ok(None);
    }
    let kind = match classify(land, spec)?.clause {
        Clause::SmallerRoot => CertificateKind::S2Descent,
        Clause::Misaligned => CertificateKind::MisalignmentDescent,
        Clause::DoubleRoot => CertificateKind::CubicNonStrict,
        _ => return Ok(None),
    };
    certificate_direction(land, spec, dressing, kind, coord).map(Some)
}

/// Minimum value of the loss: `G* = sum_{i<d_min} min g(.; y_i) + lambda sum_{i>=d_min} y_i^2`
/// and `F* = G* / lambda`.
pub fn global_min_value(land: &Landscape, coord: Objective) -> Result<f64> {
    let lambda = land.lambda();
    let depth = land.depth();
    let d_min = land.problem.d_min();
    let mut g = 0.0;
    for (i, &y) in land.spectral.y.iter().enumerate() {
        if i < d_min {
            g += scalar_argmin_g(y, lambda, depth, land.tol.eq_tol, land.tol.tie_tol)?.min_value;
        } else {
            g += lambda * y * y;
        }
    }
    Ok(match coord {
        Objective::G => g,
        Objective::F => g / lambda,
    })
}
