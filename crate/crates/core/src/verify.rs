//! Numerical oracles and experiments: finite differences, random curvature
//! probes, gradient descent with terminal classification, and 2-D loss slices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, global_min_value, Certificate, CertificateKind, Clause, CritClass};
use crate::critical::{canonical_dressing, construct, spec_from_atoms, validate_spec, Atom, CriticalSpec};
use crate::error::{DmfError, Result};
use crate::loss::{grad_f, hessian_quadform, loss, loss_and_gradient, rescale_f_to_g, Objective};
use crate::problem::{Landscape, ProblemSpec};
use crate::scalar::positive_roots;
use crate::stack::{DirectionStack, FactorStack};
use crate::svd::full_svd;

/// Name of the random generator recorded in reports.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9)";

/// Central-difference gradient, one coordinate at a time.
pub fn fd_gradient(problem: &ProblemSpec, w: &FactorStack, obj: Objective, h: f64) -> Result<FactorStack> {
    let mut out = FactorStack::zeros(problem);
    let mut probe = w.clone();
    for l in 0..w.depth() {
        for k in 0..w.layers[l].len() {
            let x = w.layers[l][k];
            probe.layers[l][k] = x + h;
            let up = loss(problem, &probe, obj)?;
            probe.layers[l][k] = x - h;
            let down = loss(problem, &probe, obj)?;
            probe.layers[l][k] = x;
            out.layers[l][k] = (up - down) / (2.0 * h);
        }
    }
    Ok(out)
}

/// `(loss(W + tD) - 2 loss(W) + loss(W - tD)) / t^2`.
pub fn fd_quadform(problem: &ProblemSpec, w: &FactorStack, d: &FactorStack, obj: Objective, t: f64) -> Result<f64> {
    let up = loss(problem, &w.add_scaled(t, d), obj)?;
    let mid = loss(problem, w, obj)?;
    let down = loss(problem, &w.add_scaled(-t, d), obj)?;
    Ok((up - 2.0 * mid + down) / (t * t))
}

/// Gaussian stack with i.i.d. entries of standard deviation `scale`.
pub fn gaussian_stack(problem: &ProblemSpec, scale: f64, rng: &mut ChaCha8Rng) -> FactorStack {
    let layers = (0..problem.depth())
        .map(|l| {
            let (r, c) = problem.layer_shape(l);
            nalgebra::DMatrix::from_fn(r, c, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
        })
        .collect();
    FactorStack::new(layers)
}

pub fn random_unit_direction(problem: &ProblemSpec, rng: &mut ChaCha8Rng) -> DirectionStack {
    let d = gaussian_stack(problem, 1.0, rng);
    let n = d.norm();
    d.scaled(1.0 / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub kind: CertificateKind,
    pub expected_quadform: f64,
    pub exact_quadform: f64,
    pub fd_quadform: f64,
    /// Quadform along the certificate scaled to unit norm.
    pub unit_quadform: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n_samples: usize,
    pub seed: u64,
    pub objective: Objective,
    pub min_quadform: f64,
    pub max_quadform: f64,
    pub certificate: Option<CertificateCheck>,
}

/// Extremes of the exact Hessian quadratic form over `n` seeded unit
/// directions. A certificate, when given, is evaluated as well and its unit
/// value folded into the minimum.
pub fn probe_min_quadform(
    problem: &ProblemSpec,
    w: &FactorStack,
    obj: Objective,
    n: usize,
    seed: u64,
    certificate: Option<&Certificate>,
) -> Result<ProbeReport> {
    w.check_shapes(problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<DirectionStack> = (0..n.max(1)).map(|_| random_unit_direction(problem, &mut rng)).collect();
    let values = dirs
        .par_iter()
        .map(|d| hessian_quadform(problem, w, d, obj))
        .collect::<Result<Vec<f64>>>()?;
    let mut min_quadform = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_quadform = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let certificate = match certificate {
        None => None,
        Some(c) => {
            let exact = hessian_quadform(problem, w, &c.direction, obj)?;
            let fd = fd_quadform(problem, w, &c.direction, obj, 1e-4)?;
            let unit = exact / c.direction.norm_squared();
            min_quadform = min_quadform.min(unit);
            Some(CertificateCheck {
                kind: c.kind,
                expected_quadform: c.expected_quadform,
                exact_quadform: exact,
                fd_quadform: fd,
                unit_quadform: unit,
            })
        }
    };
    Ok(ProbeReport {
        n_samples: n.max(1),
        seed,
        objective: obj,
        min_quadform,
        max_quadform,
        certificate,
    })
}

/// Tolerances for recognizing a numerical critical point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericTols {
    /// Gradient threshold, relative to `1 + ||Y||_F`.
    pub grad_tol: f64,
    /// Largest normalized distance between a singular value and its matched root.
    pub sigma_tol: f64,
    /// Relative loss agreement between the point and the matched construct.
    pub loss_rel_tol: f64,
    pub probe_n: usize,
    pub probe_seed: u64,
    /// Quadform below this counts as negative curvature.
    pub probe_threshold: f64,
}

impl Default for NumericTols {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            sigma_tol: 1e-4,
            loss_rel_tol: 1e-6,
            probe_n: 200,
            probe_seed: 0,
            probe_threshold: -1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericClassification {
    pub class: CritClass,
    pub clause: Option<Clause>,
    /// Whether the point was matched to a closed-form spec.
    pub matched: bool,
    pub spec: Option<CriticalSpec>,
    /// Shared singular values of the rescaled layers.
    pub sigma: Vec<f64>,
    pub sigma_distance: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub probe: ProbeReport,
}

/// Classifies a numerical critical point (F coordinates) by matching the
/// singular values of its rescaled layers to roots of the scalar equation.
/// Falls back to the sign of probed curvature when no spec matches.
pub fn classify_numerically(land: &Landscape, w: &FactorStack, tols: &NumericTols) -> Result<NumericClassification> {
    let problem = &land.problem;
    let grad_norm = grad_f(problem, w)?.norm();
    let tol = tols.grad_tol * (1.0 + problem.y().norm());
    if grad_norm > tol {
        return Err(DmfError::NotCritical { grad_norm, tol });
    }
    let value = loss(problem, w, Objective::F)?;
    let probe = probe_min_quadform(problem, w, Objective::F, tols.probe_n, tols.probe_seed, None)?;

    let g = rescale_f_to_g(w, problem.lambdas())?;
    let d_min = problem.d_min();
    let mut sigma = vec![0.0; d_min];
    for m in &g.layers {
        let s = full_svd(m)?;
        for (acc, v) in sigma.iter_mut().zip(&s.values) {
            *acc += v / g.depth() as f64;
        }
    }

    let matched = match_spec(land, &sigma, tols)?;
    let fallback = |sigma_distance: f64| -> Result<NumericClassification> {
        let gmin = global_min_value(land, Objective::F)?;
        let class = if probe.min_quadform < tols.probe_threshold {
            CritClass::StrictSaddle
        } else if (value - gmin).abs() <= tols.loss_rel_tol * gmin.abs().max(1.0) {
            CritClass::GlobalMin
        } else {
            CritClass::SpuriousLocalMin
        };
        Ok(NumericClassification {
            class,
            clause: None,
            matched: false,
            spec: None,
            sigma: sigma.clone(),
            sigma_distance,
            loss: value,
            grad_norm,
            probe: probe.clone(),
        })
    };
    let (spec, dist) = match matched {
        Some(m) => m,
        None => return fallback(f64::INFINITY),
    };
    if validate_spec(land, &spec).is_err() {
        return fallback(dist);
    }
    let reference = loss(problem, &construct(land, &spec, &canonical_dressing(land), Objective::F)?, Objective::F)?;
    if (reference - value).abs() > tols.loss_rel_tol * reference.abs().max(1.0) {
        return fallback(dist);
    }
    let c = classify(land, &spec)?;
    Ok(NumericClassification {
        class: c.class,
        clause: Some(c.clause),
        matched: true,
        spec: Some(spec),
        sigma,
        sigma_distance: dist,
        loss: value,
        grad_norm,
        probe,
    })
}

// Greedy nearest-root matching with per-group capacities.
fn match_spec(land: &Landscape, sigma: &[f64], tols: &NumericTols) -> Result<Option<(CriticalSpec, f64)>> {
    let lambda = land.lambda();
    let depth = land.depth();
    let scale = sigma
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(lambda.powf(1.0 / (2.0 * depth as f64 - 2.0)));
    let mut cands: Vec<(usize, f64)> = Vec::new();
    for (g, &y) in land.spectral.group_values.iter().enumerate() {
        for (x, _) in positive_roots(y, lambda, depth, land.tol.eq_tol)? {
            cands.push((g, x));
        }
    }
    let mut capacity = land.spectral.multiplicities();
    let mut atoms = Vec::new();
    let mut worst: f64 = 0.0;
    for &s in sigma {
        let mut best = (s / scale, None);
        for &(g, x) in &cands {
            if capacity[g] == 0 {
                continue;
            }
            let d = (s - x).abs() / scale;
            if d < best.0 {
                best = (d, Some((g, x)));
            }
        }
        if best.0 > tols.sigma_tol {
            return Ok(None);
        }
        worst = worst.max(best.0);
        if let Some((g, x)) = best.1 {
            capacity[g] -= 1;
            atoms.push(Atom { group: g, value: x });
        }
    }
    Ok(Some((spec_from_atoms(land, &atoms), worst)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdConfig {
    pub step: f64,
    pub max_iter: usize,
    /// Stop when `||grad F|| <= grad_tol (1 + ||Y||_F)`.
    pub grad_tol: f64,
    /// Halve the step whenever a step would increase the loss.
    pub halving: bool,
    /// Keep every `record_every`-th loss in the trajectory.
    pub record_every: usize,
    /// Entry standard deviation of random initializations, relative to `sqrt(1 / max dim)`.
    pub init_scale: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_iter: 200_000,
            grad_tol: 1e-6,
            halving: true,
            record_every: 1000,
            init_scale: 0.2,
        }
    }
}

pub enum Init {
    Seed(u64),
    Stack(FactorStack),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub loss: f64,
    /// `(iteration, loss)` pairs.
    pub trajectory: Vec<(usize, f64)>,
    pub seed: Option<u64>,
    pub step: f64,
    pub final_step: f64,
    pub classification: Option<NumericClassification>,
    /// Why the terminal point could not be classified, if it could not.
    pub classification_error: Option<String>,
    #[serde(skip)]
    pub point: Option<FactorStack>,
}

pub fn random_init(problem: &ProblemSpec, seed: u64, init_scale: f64) -> FactorStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_dim = *problem.dims().iter().max().expect("dims nonempty") as f64;
    gaussian_stack(problem, init_scale * (1.0 / max_dim).sqrt(), &mut rng)
}

// far below anything that affects a loss or gradient at f64 precision
const FLUSH_FLOOR: f64 = 1e-150;

/// Plain gradient descent on F. The loss is monotone when `halving` is on.
pub fn gradient_descent(land: &Landscape, init: Init, cfg: &GdConfig, tols: &NumericTols) -> Result<TrainResult> {
    let problem = &land.problem;
    let (mut w, seed) = match init {
        Init::Seed(s) => (random_init(problem, s, cfg.init_scale), Some(s)),
        Init::Stack(w) => (w, None),
    };
    w.check_shapes(problem)?;
    let tol = cfg.grad_tol * (1.0 + problem.y().norm());
    let (mut value, mut grad) = loss_and_gradient(problem, &w, Objective::F)?;
    let mut step = cfg.step;
    let mut trajectory = vec![(0, value)];
    let mut iterations = 0;
    let mut gnorm = grad.norm();
    while gnorm > tol && iterations < cfg.max_iter {
        let mut halvings = 0;
        loop {
            let mut next = w.add_scaled(-step, &grad);
            next.flush_below(FLUSH_FLOOR);
            let (v, g) = loss_and_gradient(problem, &next, Objective::F)?;
            if !v.is_finite() || v > 1e12 {
                if !cfg.halving {
                    return Err(DmfError::Diverged {
                        iteration: iterations + 1,
                        loss: v,
                    });
                }
            } else if !cfg.halving || v <= value + 4.0 * f64::EPSILON * value.abs() {
                w = next;
                value = v;
                grad = g;
                break;
            }
            step *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(DmfError::NumericFailure(format!(
                    "no decrease possible at iteration {iterations} (step {step:e})"
                )));
            }
        }
        iterations += 1;
        gnorm = grad.norm();
        if cfg.record_every > 0 && iterations % cfg.record_every == 0 {
            trajectory.push((iterations, value));
        }
    }
    if trajectory.last().map(|t| t.0) != Some(iterations) {
        trajectory.push((iterations, value));
    }
    let converged = gnorm <= tol;
    let (classification, classification_error) = if converged {
        let t = NumericTols {
            grad_tol: cfg.grad_tol,
            ..*tols
        };
        match classify_numerically(land, &w, &t) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("did not reach the gradient tolerance".into()))
    };
    Ok(TrainResult {
        iterations,
        converged,
        grad_norm: gnorm,
        loss: value,
        trajectory,
        seed,
        step: cfg.step,
        final_step: step,
        classification,
        classification_error,
        point: Some(w),
    })
}

/// Independent runs from several seeds, in parallel, results in seed order.
pub fn train_seeds(land: &Landscape, seeds: &[u64], cfg: &GdConfig, tols: &NumericTols) -> Vec<Result<TrainResult>> {
    seeds
        .par_iter()
        .map(|&s| gradient_descent(land, Init::Seed(s), cfg, tols))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceConfig {
    pub seed: u64,
    pub half_range: f64,
    pub resolution: usize,
    pub objective: Objective,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            half_range: 1.0,
            resolution: 201,
            objective: Objective::F,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `values[i][j] = h(alphas[i], betas[j]) - h(0, 0)`.
    pub values: Vec<Vec<f64>>,
    pub reference: f64,
    pub seed: u64,
    pub objective: Objective,
    #[serde(skip)]
    pub directions: Option<(DirectionStack, DirectionStack)>,
}

impl LandscapeGrid {
    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn grid(half: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|k| half * (2.0 * k as f64 - m) / m).collect()
}

/// Two orthonormal random directions (Gram-Schmidt in the global inner product).
pub fn slice_directions(problem: &ProblemSpec, seed: u64) -> Result<(DirectionStack, DirectionStack)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let a = gaussian_stack(problem, 1.0, &mut rng);
        let b = gaussian_stack(problem, 1.0, &mut rng);
        let na = a.norm();
        if na < 1e-12 {
            continue;
        }
        let a = a.scaled(1.0 / na);
        let mut b = b.add_scaled(-a.dot(&b), &a);
        b = b.add_scaled(-a.dot(&b), &a);
        let nb = b.norm();
        if nb < 1e-8 {
            continue;
        }
        return Ok((a, b.scaled(1.0 / nb)));
    }
    Err(DmfError::NumericFailure("could not draw two independent directions".into()))
}

/// `h(a, b) = loss(W + a D1 + b D2) - loss(W)` on a square grid.
pub fn landscape_slice(problem: &ProblemSpec, w_ref: &FactorStack, cfg: &SliceConfig) -> Result<LandscapeGrid> {
    if cfg.resolution < 2 {
        return Err(DmfError::InvalidProblem("resolution must be at least 2".into()));
    }
    w_ref.check_shapes(problem)?;
    let (d1, d2) = slice_directions(problem, cfg.seed)?;
    let alphas = grid(cfg.half_range, cfg.resolution);
    let betas = alphas.clone();
    let reference = loss(problem, w_ref, cfg.objective)?;
    let values = alphas
        .par_iter()
        .map(|&a| {
            let base = w_ref.add_scaled(a, &d1);
            betas
                .iter()
                .map(|&b| loss(problem, &base.add_scaled(b, &d2), cfg.objective).map(|v| v - reference))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeGrid {
        alphas,
        betas,
        values,
        reference,
        seed: cfg.seed,
        objective: cfg.objective,
        directions: Some((d1, d2)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::certificate_direction;
    use crate::critical::{global_specs, random_dressing};
    use crate::problem::Tolerances;
    use crate::scalar::{root_profile, RootLabel};

    fn land(dims: Vec<usize>, lambdas: Vec<f64>, ys: &[f64]) -> Landscape {
        Landscape::new(ProblemSpec::from_singular_values(dims, lambdas, ys).unwrap(), Tolerances::default()).unwrap()
    }

    #[test]
    fn fd_gradient_zero_and_random() {
        let l = land(vec![2, 3, 2, 2], vec![0.5, 1.0, 0.7], &[2.0, 1.0]);
        let z = FactorStack::zeros(&l.problem);
        assert!(fd_gradient(&l.problem, &z, Objective::F, 1e-6).unwrap().max_abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = gaussian_stack(&l.problem, 1.0, &mut rng);
        for obj in [Objective::F, Objective::G] {
            let fd = fd_gradient(&l.problem, &w, obj, 1e-6).unwrap();
            let an = crate::loss::gradient(&l.problem, &w, obj).unwrap();
            let scale = an.max_abs().max(1.0);
            assert!(fd.add_scaled(-1.0, &an).max_abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn fd_quadform_depth_two_is_step_independent() {
        let l = land(vec![2, 2, 2], vec![0.5, 1.0], &[2.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = gaussian_stack(&l.problem, 1.0, &mut rng);
        let d = gaussian_stack(&l.problem, 1.0, &mut rng);
        let a = fd_quadform(&l.problem, &w, &d, Objective::F, 1e-3).unwrap();
        let b = fd_quadform(&l.problem, &w, &d, Objective::F, 2e-3).unwrap();
        // quartic in t: the difference is 2 c4 (t1^2 - t2^2), tiny at these steps
        assert!((a - b).abs() < 1e-4 * a.abs().max(1.0));
        let exact = hessian_quadform(&l.problem, &w, &d, Objective::F).unwrap();
        assert!((a - exact).abs() < 1e-4 * exact.abs().max(1.0));
    }

    #[test]
    fn probe_is_deterministic() {
        let l = land(vec![2, 2, 2, 2], vec![1.0; 3], &[2.0]);
        let w = construct(&l, &global_specs(&l).unwrap()[0], &random_dressing(&l, 1), Objective::F).unwrap();
        let a = probe_min_quadform(&l.problem, &w, Objective::F, 50, 4, None).unwrap();
        let b = probe_min_quadform(&l.problem, &w, Objective::F, 50, 4, None).unwrap();
        assert_eq!(a, b);
        assert!(a.min_quadform <= a.max_quadform);
    }

    #[test]
    fn probe_at_saddle_with_certificate() {
        let l = land(vec![2, 2, 2, 2], vec![1.0; 3], &[2.0]);
        let xs = root_profile(2.0, 1.0, 3, 1e-9, 0.0).unwrap().root(RootLabel::S2).unwrap();
        let spec = CriticalSpec {
            sigma: vec![xs, 0.0],
            pi: vec![0, 1],
        };
        let d = random_dressing(&l, 5);
        let w = construct(&l, &spec, &d, Objective::G).unwrap();
        let cert = certificate_direction(&l, &spec, &d, CertificateKind::S2Descent, Objective::G).unwrap();
        let r = probe_min_quadform(&l.problem, &w, Objective::G, 500, 1, Some(&cert)).unwrap();
        let c = r.certificate.as_ref().unwrap();
        assert!((c.exact_quadform - c.expected_quadform).abs() <= 1e-8 * c.expected_quadform.abs());
        // the certificate has squared norm L = 3
        assert!(r.min_quadform <= -4.4 / 3.0 + 1e-6);
    }

    #[test]
    fn gd_at_global_min_stops_immediately() {
        let l = land(vec![2, 3, 2, 2], vec![0.5, 1.0, 0.7], &[2.0, 1.0]);
        let spec = global_specs(&l).unwrap().remove(0);
        let w = construct(&l, &spec, &random_dressing(&l, 2), Objective::F).unwrap();
        let r = gradient_descent(&l, Init::Stack(w), &GdConfig::default(), &NumericTols::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        let c = r.classification.expect(r.classification_error.as_deref().unwrap_or(""));
        assert!(c.matched);
        assert_eq!(c.class, CritClass::GlobalMin);
    }

    #[test]
    fn gd_from_random_init_converges_to_local_min() {
        let l = land(vec![2, 2, 2, 2], vec![0.1, 0.2, 0.3], &[3.0, 1.0]);
        let cfg = GdConfig {
            step: 1e-2,
            max_iter: 200_000,
            init_scale: 1.0,
            ..GdConfig::default()
        };
        let r = gradient_descent(&l, Init::Seed(7), &cfg, &NumericTols::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.trajectory.windows(2).all(|p| p[1].1 <= p[0].1));
        let c = r.classification.unwrap();
        assert!(c.class.is_local_min(), "{c:?}");
    }

    #[test]
    fn slice_basics() {
        let l = land(vec![2, 2, 2, 2], vec![1.0; 3], &[3.0, 2.0]);
        let spec = global_specs(&l).unwrap().remove(0);
        let w = construct(&l, &spec, &random_dressing(&l, 2), Objective::F).unwrap();
        let cfg = SliceConfig {
            seed: 3,
            half_range: 0.05,
            resolution: 11,
            objective: Objective::F,
        };
        let g = landscape_slice(&l.problem, &w, &cfg).unwrap();
        assert_eq!(g.values[5][5], 0.0);
        assert_eq!(g.values.len(), 11);
        assert!(g.min() >= 0.0);
        let (a, b) = g.directions.as_ref().unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12);
        assert!(a.dot(b).abs() < 1e-12);
        let again = landscape_slice(&l.problem, &w, &cfg).unwrap();
        assert_eq!(g.values, again.values);
    }
}
