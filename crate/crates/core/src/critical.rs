//! Closed-form critical points.
//!
//! A critical point is described by a nonincreasing vector `sigma` (length
//! `d_min`) and a permutation `pi` of the singular values of `Y`: slot `i`
//! carries `sigma_i`, which must be a root of `f(.; y_pi(i))`. The weights are
//! recovered by dressing the diagonal layers with orthogonal frames.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::loss::{rescale_g_to_f, Objective};
use crate::problem::Landscape;
use crate::scalar::{eval_f, positive_roots, scalar_argmin_g};
use crate::stack::FactorStack;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSpec {
    pub sigma: Vec<f64>,
    /// 0-based permutation of `0..d_Y`.
    pub pi: Vec<usize>,
}

impl CriticalSpec {
    pub fn zero(d_min: usize, d_y: usize) -> Self {
        Self {
            sigma: vec![0.0; d_min],
            pi: (0..d_y).collect(),
        }
    }

    /// Number of nonzero entries of `sigma`.
    pub fn support(&self) -> usize {
        self.sigma.iter().filter(|&&s| s != 0.0).count()
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SpecViolation {
    #[error("sigma has length {got}, expected d_min = {expected}")]
    SigmaLength { expected: usize, got: usize },
    #[error("pi has length {got}, expected d_Y = {expected}")]
    PiLength { expected: usize, got: usize },
    #[error("sigma[{index}] = {value} is negative or not finite")]
    SigmaValue { index: usize, value: f64 },
    #[error("sigma is not nonincreasing at index {index}")]
    NotSorted { index: usize },
    #[error("pi is not a permutation: {0}")]
    NotPermutation(String),
    #[error("sigma[{index}] = {sigma} is not a root of f(.; y = {y}): residual {residual:e}")]
    RootEquation {
        index: usize,
        sigma: f64,
        y: f64,
        residual: f64,
    },
}

/// Checks shape, sortedness, the permutation and the root equation
/// `f(sigma_i; y_pi(i)) = 0`. The residual is measured relative to the size of
/// the three terms of `f`.
pub fn validate_spec(land: &Landscape, spec: &CriticalSpec) -> std::result::Result<(), SpecViolation> {
    let d_min = land.problem.d_min();
    let d_y = land.problem.d_y();
    if spec.sigma.len() != d_min {
        return Err(SpecViolation::SigmaLength {
            expected: d_min,
            got: spec.sigma.len(),
        });
    }
    if spec.pi.len() != d_y {
        return Err(SpecViolation::PiLength {
            expected: d_y,
            got: spec.pi.len(),
        });
    }
    for (index, &value) in spec.sigma.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(SpecViolation::SigmaValue { index, value });
        }
    }
    if let Some(index) = spec.sigma.windows(2).position(|w| w[1] > w[0]) {
        return Err(SpecViolation::NotSorted { index: index + 1 });
    }
    let mut seen = vec![false; d_y];
    for (i, &p) in spec.pi.iter().enumerate() {
        if p >= d_y {
            return Err(SpecViolation::NotPermutation(format!("pi[{i}] = {p} out of range")));
        }
        if seen[p] {
            return Err(SpecViolation::NotPermutation(format!("value {p} repeated")));
        }
        seen[p] = true;
    }
    let depth = land.depth();
    let lambda = land.lambda();
    let ld = depth as i32;
    for (index, &s) in spec.sigma.iter().enumerate() {
        let y = land.spectral.y[spec.pi[index]];
        let residual = eval_f(s, y, lambda, depth);
        let scale = s.powi(2 * ld - 1) + lambda.sqrt() * y * s.powi(ld - 1) + lambda * s;
        if residual.abs() > land.tol.spec_tol * scale {
            return Err(SpecViolation::RootEquation {
                index,
                sigma: s,
                y,
                residual,
            });
        }
    }
    Ok(())
}

/// Orthogonal blocks parametrizing one critical family.
#[derive(Clone, Debug, PartialEq)]
pub struct Dressing {
    /// `Q_2..Q_L`; `q[k]` is `d_{k+1} x d_{k+1}`.
    pub q: Vec<DMatrix<f64>>,
    /// One block per distinct nonzero singular value, sized by multiplicity.
    pub o: Vec<DMatrix<f64>>,
    /// `(d_0 - r_Y)` block acting on the input null space.
    pub o_tail: DMatrix<f64>,
    /// `(d_L - r_Y)` block acting on the output null space.
    pub o_hat_tail: DMatrix<f64>,
}

impl Dressing {
    pub fn blocks(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.q
            .iter()
            .chain(self.o.iter())
            .chain([&self.o_tail, &self.o_hat_tail])
    }

    /// Largest `||Q^T Q - I||_F` over all blocks.
    pub fn orthogonality_residual(&self) -> f64 {
        self.blocks()
            .map(crate::svd::orthogonality_residual)
            .fold(0.0, f64::max)
    }
}

fn block_sizes(land: &Landscape) -> (Vec<usize>, Vec<usize>, usize, usize) {
    let dims = land.problem.dims();
    let depth = land.depth();
    let r = land.spectral.rank;
    let q = (1..depth).map(|l| dims[l]).collect();
    (q, land.spectral.multiplicities(), dims[0] - r, dims[depth] - r)
}

pub fn canonical_dressing(land: &Landscape) -> Dressing {
    let (q, o, t, th) = block_sizes(land);
    let id = |n: usize| DMatrix::<f64>::identity(n, n);
    Dressing {
        q: q.into_iter().map(id).collect(),
        o: o.into_iter().map(id).collect(),
        o_tail: id(t),
        o_hat_tail: id(th),
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian
/// matrix, with the sign of each column fixed by the diagonal of `R`.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Dressing with every block drawn independently from one ChaCha8 stream.
pub fn random_dressing(land: &Landscape, seed: u64) -> Dressing {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (q, o, t, th) = block_sizes(land);
    let q = q.into_iter().map(|n| random_orthogonal(n, &mut rng)).collect();
    let o = o.into_iter().map(|n| random_orthogonal(n, &mut rng)).collect();
    let o_tail = random_orthogonal(t, &mut rng);
    let o_hat_tail = random_orthogonal(th, &mut rng);
    Dressing {
        q,
        o,
        o_tail,
        o_hat_tail,
    }
}

fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::<f64>::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((at, at), (k, k)).copy_from(b);
        at += k;
    }
    out
}

/// `BlkD(Pi, I)` of size `n`: row `i < d_Y` has its 1 in column `pi(i)`.
fn permutation_block(pi: &[usize], n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let j = if i < pi.len() { pi[i] } else { i };
        p[(i, j)] = 1.0;
    }
    p
}

/// Left and right orthogonal frames with `W_l = left[l] * S_l * right[l]` for
/// slot-diagonal layers `S_l`.
fn frames(land: &Landscape, pi: &[usize], dressing: &Dressing) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let depth = land.depth();
    let dims = land.problem.dims();
    let sp = &land.spectral;
    let mut right_o: Vec<&DMatrix<f64>> = dressing.o.iter().collect();
    right_o.push(&dressing.o_tail);
    let mut left_o: Vec<&DMatrix<f64>> = dressing.o.iter().collect();
    left_o.push(&dressing.o_hat_tail);
    let r0 = permutation_block(pi, dims[0]) * block_diag(&right_o) * sp.v.transpose();
    let rl = &sp.u * block_diag(&left_o).transpose() * permutation_block(pi, dims[depth]).transpose();

    let mut left = Vec::with_capacity(depth);
    let mut right = Vec::with_capacity(depth);
    for l in 0..depth {
        left.push(if l + 1 == depth { rl.clone() } else { dressing.q[l].clone() });
        right.push(if l == 0 { r0.clone() } else { dressing.q[l - 1].transpose() });
    }
    (left, right)
}

/// Maps slot-frame layers `S_l` to `left_l S_l right_l`.
pub fn dress(land: &Landscape, spec: &CriticalSpec, dressing: &Dressing, slot_layers: &[DMatrix<f64>]) -> FactorStack {
    let (left, right) = frames(land, &spec.pi, dressing);
    FactorStack::new(
        slot_layers
            .iter()
            .zip(left.iter().zip(&right))
            .map(|(s, (a, b))| a * s * b)
            .collect(),
    )
}

/// Layers `BlkD(diag(sigma), 0)` of each layer's shape.
pub fn slot_diagonal(land: &Landscape, sigma: &[f64]) -> Vec<DMatrix<f64>> {
    (0..land.depth())
        .map(|l| {
            let (r, c) = land.problem.layer_shape(l);
            let mut m = DMatrix::<f64>::zeros(r, c);
            for (i, &s) in sigma.iter().enumerate() {
                m[(i, i)] = s;
            }
            m
        })
        .collect()
}

/// Builds the critical point of `spec` with the given dressing, in F or G
/// coordinates.
pub fn construct(land: &Landscape, spec: &CriticalSpec, dressing: &Dressing, coord: Objective) -> Result<FactorStack> {
    validate_spec(land, spec)?;
    let g = dress(land, spec, dressing, &slot_diagonal(land, &spec.sigma));
    match coord {
        Objective::G => Ok(g),
        Objective::F => rescale_g_to_f(&g, land.problem.lambdas()),
    }
}

pub use crate::stack::balancedness_residual;

/// Enumeration limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Caps {
    pub max_specs: usize,
    /// Largest support size to enumerate (`None` means `d_min`).
    pub max_support: Option<usize>,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_specs: 200_000,
            max_support: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecFamily {
    pub specs: Vec<CriticalSpec>,
    pub caps: Caps,
    pub complete: bool,
}

/// One nonzero slot: which value group it pairs with and the root value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub group: usize,
    pub value: f64,
}

/// Assembles a spec from nonzero slots: slots are sorted by value and each
/// takes the next unused singular-value index of its group; unused indices
/// fill the remaining positions in ascending order.
pub fn spec_from_atoms(land: &Landscape, atoms: &[Atom]) -> CriticalSpec {
    let d_min = land.problem.d_min();
    let d_y = land.problem.d_y();
    let mut atoms = atoms.to_vec();
    atoms.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.group.cmp(&b.group)));
    let mut next: Vec<usize> = land.spectral.groups.iter().map(|g| g.start).collect();
    let mut used = vec![false; d_y];
    let mut sigma = vec![0.0; d_min];
    let mut pi = Vec::with_capacity(d_y);
    for (k, a) in atoms.iter().enumerate() {
        sigma[k] = a.value;
        let idx = next[a.group];
        next[a.group] += 1;
        used[idx] = true;
        pi.push(idx);
    }
    pi.extend((0..d_y).filter(|&i| !used[i]));
    CriticalSpec { sigma, pi }
}

/// Positive roots available to each value group.
fn group_roots(land: &Landscape) -> Result<Vec<Vec<f64>>> {
    land.spectral
        .group_values
        .iter()
        .map(|&y| {
            positive_roots(y, land.lambda(), land.depth(), land.tol.eq_tol)
                .map(|r| r.into_iter().map(|(x, _)| x).collect())
        })
        .collect()
}

/// All critical specs up to the caps, one per (sigma, assignment of value
/// groups to the support). Output order is deterministic.
pub fn enumerate_specs(land: &Landscape, caps: Caps) -> Result<SpecFamily> {
    let roots = group_roots(land)?;
    let mult = land.spectral.multiplicities();
    let limit = caps.max_support.unwrap_or(usize::MAX).min(land.problem.d_min());

    // per group: all count vectors over its roots with total <= multiplicity
    let per_group: Vec<Vec<Vec<usize>>> = roots
        .iter()
        .zip(&mult)
        .map(|(r, &h)| count_vectors(r.len(), h.min(limit)))
        .collect();

    let mut choices: Vec<Vec<usize>> = Vec::new();
    let mut complete = true;
    let mut stack: Vec<usize> = Vec::with_capacity(per_group.len());
    product(&per_group, limit, 0, &mut stack, &mut choices, caps.max_specs, &mut complete);

    let specs = choices
        .par_iter()
        .map(|choice| {
            let mut atoms = Vec::new();
            for (g, &ci) in choice.iter().enumerate() {
                for (k, &count) in per_group[g][ci].iter().enumerate() {
                    atoms.extend(std::iter::repeat_n(Atom { group: g, value: roots[g][k] }, count));
                }
            }
            spec_from_atoms(land, &atoms)
        })
        .collect();
    Ok(SpecFamily { specs, caps, complete })
}

fn count_vectors(kinds: usize, max_total: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..kinds {
        let mut next = Vec::new();
        for v in &out {
            let used: usize = v.iter().sum();
            for c in 0..=(max_total - used) {
                let mut w = v.clone();
                w.push(c);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

fn product(
    per_group: &[Vec<Vec<usize>>],
    limit: usize,
    used: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    max: usize,
    complete: &mut bool,
) {
    if !*complete {
        return;
    }
    let g = stack.len();
    if g == per_group.len() {
        if out.len() >= max {
            *complete = false;
            return;
        }
        out.push(stack.clone());
        return;
    }
    for (i, v) in per_group[g].iter().enumerate() {
        let n: usize = v.iter().sum();
        if used + n > limit {
            continue;
        }
        stack.push(i);
        product(per_group, limit, used + n, stack, out, max, complete);
        stack.pop();
    }
}

/// Specs whose every coordinate globally minimizes `g(.; y_i)`, with tie sets
/// expanded into all sorted selections and `pi` the identity.
pub fn global_specs(land: &Landscape) -> Result<Vec<CriticalSpec>> {
    let d_min = land.problem.d_min();
    let d_y = land.problem.d_y();
    let sets: Vec<Vec<f64>> = (0..d_min)
        .map(|i| {
            let y = value_for_index(land, i);
            scalar_argmin_g(y, land.lambda(), land.depth(), land.tol.eq_tol, land.tol.tie_tol).map(|m| m.argmin_set)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for set in &sets {
        let mut next = Vec::new();
        for prefix in &out {
            for &x in set {
                if prefix.last().is_none_or(|&p| p >= x) {
                    let mut v = prefix.clone();
                    v.push(x);
                    next.push(v);
                }
            }
        }
        out = next;
    }
    Ok(out
        .into_iter()
        .map(|sigma| CriticalSpec {
            sigma,
            pi: (0..d_y).collect(),
        })
        .collect())
}

/// Singular value `i` as used for root computations: its group's representative,
/// or 0 in the null tail.
pub fn value_for_index(land: &Landscape, i: usize) -> f64 {
    match land.spectral.group_of(i) {
        Some(g) => land.spectral.group_values[g],
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{grad_f, grad_g};
    use crate::problem::{ProblemSpec, Tolerances};

    fn land(dims: Vec<usize>, lambdas: Vec<f64>, ys: &[f64]) -> Landscape {
        Landscape::new(ProblemSpec::from_singular_values(dims, lambdas, ys).unwrap(), Tolerances::default()).unwrap()
    }

    #[test]
    fn validate_examples() {
        let l = land(vec![2, 2, 2, 2], vec![1.0; 3], &[2.0, 1.0]);
        assert!(validate_spec(&l, &CriticalSpec::zero(2, 2)).is_ok());
        let ok = CriticalSpec {
            sigma: vec![1.0, 0.0],
            pi: vec![0, 1],
        };
        assert!(validate_spec(&l, &ok).is_ok());
        let swapped = CriticalSpec {
            sigma: vec![1.0, 0.0],
            pi: vec![1, 0],
        };
        match validate_spec(&l, &swapped) {
            Err(SpecViolation::RootEquation { index: 0, residual, .. }) => assert!((residual - 1.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        let unsorted = CriticalSpec {
            sigma: vec![0.0, 1.0],
            pi: vec![1, 0],
        };
        assert!(matches!(validate_spec(&l, &unsorted), Err(SpecViolation::NotSorted { index: 1 })));
        let bad_pi = CriticalSpec {
            sigma: vec![0.0, 0.0],
            pi: vec![1, 1],
        };
        assert!(matches!(validate_spec(&l, &bad_pi), Err(SpecViolation::NotPermutation(_))));
    }

    #[test]
    fn canonical_scalar_construct() {
        let l = land(vec![1, 1, 1, 1], vec![1.0; 3], &[2.0]);
        let spec = CriticalSpec {
            sigma: vec![1.0],
            pi: vec![0],
        };
        let w = construct(&l, &spec, &canonical_dressing(&l), Objective::F).unwrap();
        for m in &w.layers {
            assert_eq!(m[(0, 0)], 1.0);
        }
        assert!(grad_f(&l.problem, &w).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn canonical_padded_construct() {
        let l = land(vec![2, 3, 2, 3], vec![1.0; 3], &[2.0]);
        let spec = CriticalSpec {
            sigma: vec![1.0, 0.0],
            pi: vec![0, 1],
        };
        let w = construct(&l, &spec, &canonical_dressing(&l), Objective::F).unwrap();
        for (k, m) in w.layers.iter().enumerate() {
            assert_eq!(m.shape(), l.problem.layer_shape(k));
            assert_eq!(m[(0, 0)], 1.0);
            assert_eq!(m.iter().filter(|&&x| x != 0.0).count(), 1);
        }
        assert!(grad_f(&l.problem, &w).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn zero_sigma_gives_zero_stack() {
        let l = land(vec![3, 2, 4], vec![0.5, 2.0], &[3.0, 1.0]);
        let w = construct(&l, &CriticalSpec::zero(2, 3), &random_dressing(&l, 7), Objective::G).unwrap();
        assert_eq!(w.norm(), 0.0);
    }

    #[test]
    fn random_dressing_is_orthogonal_and_deterministic() {
        let l = land(vec![3, 4, 2, 5], vec![0.5, 1.0, 2.0], &[3.0, 3.0]);
        let a = random_dressing(&l, 42);
        let b = random_dressing(&l, 42);
        assert_eq!(a, b);
        assert!(a.orthogonality_residual() <= 1e-12);
        assert_eq!(canonical_dressing(&l).orthogonality_residual(), 0.0);
        assert_ne!(a, random_dressing(&l, 43));
    }

    #[test]
    fn random_dressing_critical_and_balanced() {
        let l = land(vec![3, 4, 3, 4], vec![0.5, 1.0, 2.0], &[3.0, 3.0, 2.5]);
        let fam = enumerate_specs(&l, Caps::default()).unwrap();
        for (k, spec) in fam.specs.iter().enumerate() {
            let d = random_dressing(&l, k as u64);
            let g = construct(&l, spec, &d, Objective::G).unwrap();
            let tol = 1e-8 * (1.0 + l.problem.y().norm());
            assert!(grad_g(&l.problem, &g).unwrap().norm() <= tol);
            assert!(balancedness_residual(&g) <= 1e-10);
            let f = construct(&l, spec, &d, Objective::F).unwrap();
            assert!(grad_f(&l.problem, &f).unwrap().norm() <= tol);
        }
    }

    #[test]
    fn enumeration_counts() {
        let z = land(vec![3, 3, 3, 3], vec![1.0; 3], &[]);
        let fam = enumerate_specs(&z, Caps::default()).unwrap();
        assert_eq!(fam.specs.len(), 1);
        assert_eq!(fam.specs[0].sigma, vec![0.0; 3]);

        let one = land(vec![1, 2, 1, 1], vec![1.0; 3], &[2.0]);
        let fam = enumerate_specs(&one, Caps::default()).unwrap();
        let mut s: Vec<f64> = fam.specs.iter().map(|s| s.sigma[0]).collect();
        s.sort_by(f64::total_cmp);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 0.5436890).abs() < 1e-7);
        assert!((s[2] - 1.0).abs() < 1e-12);
        assert!(fam.complete);
    }

    #[test]
    fn repeated_values_share_a_group() {
        // y = (3, 3): per slot {0, x_bar, x_underbar}, multiset over 2 slots
        let l = land(vec![2, 2, 2, 2], vec![1.0; 3], &[3.0, 3.0]);
        let fam = enumerate_specs(&l, Caps::default()).unwrap();
        assert_eq!(fam.specs.len(), 6);
        for s in &fam.specs {
            assert!(validate_spec(&l, s).is_ok());
        }
    }

    #[test]
    fn caps_truncate() {
        let l = land(vec![3, 3, 3, 3], vec![1.0; 3], &[3.0, 2.5, 2.0]);
        let full = enumerate_specs(&l, Caps::default()).unwrap();
        assert!(full.complete);
        let cut = enumerate_specs(&l, Caps { max_specs: 5, max_support: None }).unwrap();
        assert!(!cut.complete);
        assert_eq!(cut.specs.len(), 5);
        let small = enumerate_specs(&l, Caps { max_specs: 1000, max_support: Some(1) }).unwrap();
        assert!(small.specs.iter().all(|s| s.support() <= 1));
    }

    #[test]
    fn depth_two_enumeration_matches_closed_form() {
        // each slot: 0 or sqrt(sqrt(lambda) y - lambda) when positive; groups distinct
        let l = land(vec![3, 2, 3], vec![1.0, 1.0], &[5.0, 2.0, 0.5]);
        let fam = enumerate_specs(&l, Caps::default()).unwrap();
        // two positive candidates (y = 5, 2), support <= d_min = 2 -> 2^2 subsets
        assert_eq!(fam.specs.len(), 4);
    }

    #[test]
    fn global_spec_examples() {
        let l2 = land(vec![1, 2, 1], vec![1.0, 1.0], &[5.0]);
        let g = global_specs(&l2).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0].sigma[0] - 2.0).abs() < 1e-15);

        let l3 = land(vec![1, 2, 2, 1], vec![1.0; 3], &[3.0]);
        let g = global_specs(&l3).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0].sigma[0] - 1.30748610096198).abs() < 1e-12);

        let tie = land(vec![1, 2, 2, 1], vec![1.0; 3], &[2.0]);
        let g = global_specs(&tie).unwrap();
        assert_eq!(g.len(), 2);
    }
}
