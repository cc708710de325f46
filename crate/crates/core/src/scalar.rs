//! One-dimensional analysis: the root function
//! `f(x; y) = x^(2L-1) - sqrt(lambda) y x^(L-1) + lambda x`, its positive roots,
//! and the per-coordinate objective `g(x; y) = (x^L - sqrt(lambda) y)^2 + lambda L x^2`.

use serde::{Deserialize, Serialize};

use crate::error::{DmfError, Result};

fn pw(x: f64, k: i64) -> f64 {
    x.powi(k as i32)
}

pub fn eval_f(x: f64, y: f64, lambda: f64, depth: usize) -> f64 {
    let l = depth as i64;
    pw(x, 2 * l - 1) - lambda.sqrt() * y * pw(x, l - 1) + lambda * x
}

pub fn eval_f_dx(x: f64, y: f64, lambda: f64, depth: usize) -> f64 {
    let l = depth as i64;
    let lf = depth as f64;
    (2.0 * lf - 1.0) * pw(x, 2 * l - 2) - lambda.sqrt() * (lf - 1.0) * y * pw(x, l - 2) + lambda
}

pub fn eval_f_dxx(x: f64, y: f64, lambda: f64, depth: usize) -> f64 {
    let l = depth as i64;
    let lf = depth as f64;
    let first = (2.0 * lf - 1.0) * (2.0 * lf - 2.0) * pw(x, 2 * l - 3);
    // the second term vanishes identically for L = 2
    let second = if depth == 2 {
        0.0
    } else {
        lambda.sqrt() * (lf - 1.0) * (lf - 2.0) * y * pw(x, l - 3)
    };
    first - second
}

pub fn eval_g(x: f64, y: f64, lambda: f64, depth: usize) -> f64 {
    let r = pw(x, depth as i64) - lambda.sqrt() * y;
    r * r + lambda * depth as f64 * x * x
}

/// `x*` (location of the double root) and `y*` (the data value at which it occurs).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub x_star: f64,
    pub y_star: f64,
    pub lambda: f64,
    pub depth: usize,
}

fn threshold_constant(depth: usize) -> f64 {
    let l = depth as f64;
    let e = 2.0 * l - 2.0;
    ((l - 2.0) / l).powf(l / e) + (l / (l - 2.0)).powf((l - 2.0) / e)
}

pub fn thresholds(lambda: f64, depth: usize) -> Result<Thresholds> {
    if depth < 3 {
        return Err(DmfError::UnsupportedDepth { depth });
    }
    let l = depth as f64;
    let e = 2.0 * l - 2.0;
    let scale = lambda.powf(1.0 / e);
    Ok(Thresholds {
        x_star: ((l - 2.0) / l).powf(1.0 / e) * scale,
        y_star: threshold_constant(depth) * scale,
        lambda,
        depth,
    })
}

/// Critical regularization: the `lambda` for which `y` sits exactly at the
/// root-count threshold.
pub fn lambda_critical(y: f64, depth: usize) -> Result<f64> {
    if depth < 3 {
        return Err(DmfError::UnsupportedDepth { depth });
    }
    let e = 2.0 * (depth as f64 - 1.0);
    Ok(y.powf(e) * threshold_constant(depth).powf(-e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RootLabel {
    /// larger of two positive roots
    S1,
    /// smaller of two positive roots
    S2,
    /// double root at `x*`
    S3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RootKind {
    NoPositive,
    UniquePositive { x_hat: f64 },
    TwoPositive { x_bar: f64, x_underbar: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootProfile {
    pub y: f64,
    pub root: RootKind,
    pub thresholds: Thresholds,
}

impl RootProfile {
    /// Positive roots with their labels, largest first.
    pub fn labelled_roots(&self) -> Vec<(f64, RootLabel)> {
        match self.root {
            RootKind::NoPositive => vec![],
            RootKind::UniquePositive { x_hat } => vec![(x_hat, RootLabel::S3)],
            RootKind::TwoPositive { x_bar, x_underbar } => {
                vec![(x_bar, RootLabel::S1), (x_underbar, RootLabel::S2)]
            }
        }
    }

    pub fn root(&self, label: RootLabel) -> Option<f64> {
        self.labelled_roots().into_iter().find(|r| r.1 == label).map(|r| r.0)
    }
}

// Sign of x^L + lambda x^(2-L) - sqrt(lambda) y; for x > 0 this has the sign
// of f(x; y) / x^(L-1), decreasing on (0, x*] and increasing on [x*, inf).
fn v_minus_y(x: f64, y: f64, lambda: f64, depth: usize) -> f64 {
    let l = depth as i64;
    pw(x, l) + lambda * pw(x, 2 - l) - lambda.sqrt() * y
}

/// Bisection on a bracket with `h(lo)` and `h(hi)` of opposite sign, run until
/// the interval cannot shrink further or its relative width drops below `tol`.
fn bisect(mut lo: f64, mut hi: f64, tol: f64, h: impl Fn(f64) -> f64) -> Result<f64> {
    let mut h_lo = h(lo);
    let h_hi = h(hi);
    if h_lo == 0.0 {
        return Ok(lo);
    }
    if h_hi == 0.0 {
        return Ok(hi);
    }
    if h_lo.signum() == h_hi.signum() {
        return Err(DmfError::NumericFailure(format!(
            "root bracket [{lo:e}, {hi:e}] does not change sign"
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= tol * mid.abs() {
            break;
        }
        let h_mid = h(mid);
        if h_mid == 0.0 {
            return Ok(mid);
        }
        if h_mid.signum() == h_lo.signum() {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Positive roots of `f(.; y)` for depth >= 3, labelled.
///
/// `eq_tol` is the relative band around `y*` treated as the double root, `tol`
/// the relative bisection tolerance (0 runs to full precision).
pub fn root_profile(y: f64, lambda: f64, depth: usize, eq_tol: f64, tol: f64) -> Result<RootProfile> {
    let th = thresholds(lambda, depth)?;
    let x_star = th.x_star;
    let root = if (y - th.y_star).abs() <= eq_tol * th.y_star {
        RootKind::UniquePositive { x_hat: x_star }
    } else if y < th.y_star {
        RootKind::NoPositive
    } else {
        let h = |x: f64| v_minus_y(x, y, lambda, depth);
        let s = lambda.sqrt();
        // v(x) >= x^L and v(x) >= lambda x^(2-L), which gives both brackets
        let mut lo = (s / y).powf(1.0 / (depth as f64 - 2.0)).min(x_star);
        let mut guard = 0;
        while h(lo) <= 0.0 && guard < 200 {
            lo *= 0.5;
            guard += 1;
        }
        let mut hi = (s * y).powf(1.0 / depth as f64).max(x_star);
        guard = 0;
        while h(hi) <= 0.0 && guard < 200 {
            hi *= 2.0;
            guard += 1;
        }
        if h(x_star) >= 0.0 {
            // y above y* by more than the band but v(x*) rounds to >= y
            RootKind::UniquePositive { x_hat: x_star }
        } else {
            let x_underbar = bisect(lo, x_star, tol, h)?;
            let x_bar = bisect(x_star, hi, tol, h)?;
            RootKind::TwoPositive { x_bar, x_underbar }
        }
    };
    Ok(RootProfile { y, root, thresholds: th })
}

/// Positive roots of `f(.; y)`, largest first. Depth 2 has the closed form
/// `sqrt(sqrt(lambda) y - lambda)` when that is positive.
pub fn positive_roots(y: f64, lambda: f64, depth: usize, eq_tol: f64) -> Result<Vec<(f64, Option<RootLabel>)>> {
    if depth == 2 {
        let a = lambda.sqrt() * y - lambda;
        return Ok(if a > 0.0 { vec![(a.sqrt(), None)] } else { vec![] });
    }
    let p = root_profile(y, lambda, depth, eq_tol, 0.0)?;
    Ok(p.labelled_roots().into_iter().map(|(x, l)| (x, Some(l))).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarMinResult {
    pub y: f64,
    /// Global minimizers of `g(.; y)`, largest first; two entries on a tie.
    pub argmin_set: Vec<f64>,
    pub min_value: f64,
}

/// Width of the band of `g(.; y)` values treated as equal to the minimum.
pub fn tie_band(y: f64, lambda: f64, tie_tol: f64) -> f64 {
    tie_tol * lambda * y * y
}

/// Global minimizers of `g(.; y)` over `x >= 0`. Candidates are 0 and the
/// largest positive root of `f`; values within `tie_tol * lambda y^2` of the
/// minimum are all reported. `g(0) = lambda y^2` sets the scale so the band
/// stays meaningful for tiny `lambda`.
pub fn scalar_argmin_g(y: f64, lambda: f64, depth: usize, eq_tol: f64, tie_tol: f64) -> Result<ScalarMinResult> {
    let mut cands = vec![0.0];
    if let Some(&(x, _)) = positive_roots(y, lambda, depth, eq_tol)?.first() {
        cands.push(x);
    }
    let vals: Vec<f64> = cands.iter().map(|&x| eval_g(x, y, lambda, depth)).collect();
    let min_value = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let band = tie_band(y, lambda, tie_tol);
    let mut argmin_set: Vec<f64> = cands
        .iter()
        .zip(&vals)
        .filter(|(_, &v)| v <= min_value + band)
        .map(|(&x, _)| x)
        .collect();
    argmin_set.sort_by(|a, b| b.total_cmp(a));
    Ok(ScalarMinResult {
        y,
        argmin_set,
        min_value,
    })
}
