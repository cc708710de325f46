use dmf_core::classify::label_of;
use dmf_core::verify::gaussian_stack;
use dmf_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64, max_dim: usize, depths: std::ops::RangeInclusive<usize>, equal_lambdas: bool) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let depth = rng.random_range(depths.clone());
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=max_dim)).collect();
        if dims.iter().all(|&d| d == 1) {
            continue;
        }
        let lambdas: Vec<f64> = if equal_lambdas {
            vec![rng.random_range(0.05..1.0); depth]
        } else {
            (0..depth).map(|_| rng.random_range(0.01..1.5)).collect()
        };
        let y = DMatrix::from_fn(dims[depth], dims[0], |_, _| rng.random_range(-2.0..2.0));
        return ProblemSpec::new(dims, lambdas, y).unwrap();
    }
}

fn landscape(p: ProblemSpec) -> Landscape {
    Landscape::new(p, Tolerances::default()).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), f_coords in any::<bool>()) {
        let p = random_problem(seed, 5, 2..=5, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w = gaussian_stack(&p, 0.7, &mut rng);
        let obj = if f_coords { Objective::F } else { Objective::G };
        let g = gradient(&p, &w, obj).unwrap();
        let fd = fd_gradient(&p, &w, obj, 1e-6).unwrap();
        let err = fd.add_scaled(-1.0, &g).norm();
        prop_assert!(err <= 1e-5 * (1.0 + g.norm()), "err {err}, |g| {}", g.norm());
    }

    #[test]
    fn rescaling_relates_the_two_losses(seed in any::<u64>()) {
        let p = random_problem(seed, 5, 2..=5, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let w = gaussian_stack(&p, 0.7, &mut rng);
        let v = rescale_f_to_g(&w, p.lambdas()).unwrap();
        let lf = loss_f(&p, &w).unwrap();
        prop_assert!(rel_close(loss_g(&p, &v).unwrap(), p.lambda() * lf, 1e-12));
        let back = rescale_g_to_f(&v, p.lambdas()).unwrap();
        prop_assert!(back.add_scaled(-1.0, &w).norm() <= 1e-12 * (1.0 + w.norm()));
    }

    #[test]
    fn quadform_is_a_quadratic_form(seed in any::<u64>(), c in -3.0..3.0f64) {
        let p = random_problem(seed, 5, 2..=5, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let w = gaussian_stack(&p, 0.7, &mut rng);
        let d1 = gaussian_stack(&p, 1.0, &mut rng);
        let d2 = gaussian_stack(&p, 1.0, &mut rng);
        for obj in [Objective::F, Objective::G] {
            let q = |d: &FactorStack| hessian_quadform(&p, &w, d, obj).unwrap();
            let (q1, q2) = (q(&d1), q(&d2));
            let scale = 1.0 + q1.abs() + q2.abs();
            prop_assert!((q(&d1.scaled(c)) - c * c * q1).abs() <= 1e-10 * scale * (1.0 + c * c));
            let lhs = q(&d1.add_scaled(1.0, &d2)) + q(&d1.add_scaled(-1.0, &d2));
            prop_assert!((lhs - 2.0 * q1 - 2.0 * q2).abs() <= 1e-9 * (scale + lhs.abs()));
        }
    }

    #[test]
    fn constructed_points_are_critical_and_balanced(seed in any::<u64>(), k in any::<prop::sample::Index>()) {
        let l = landscape(random_problem(seed, 6, 2..=5, false));
        let fam = enumerate_specs(&l, Caps { max_specs: 2000, max_support: None }).unwrap();
        let spec = &fam.specs[k.index(fam.specs.len())];
        let d = random_dressing(&l, seed);
        let tol = 1e-8 * (1.0 + l.problem.y().norm());
        for obj in [Objective::F, Objective::G] {
            let w = construct(&l, spec, &d, obj).unwrap();
            prop_assert!(gradient(&l.problem, &w, obj).unwrap().norm() <= tol);
        }
        let wg = construct(&l, spec, &d, Objective::G).unwrap();
        prop_assert!(balancedness_residual(&wg) <= 1e-10);
        // every G layer carries the same nonzero singular values
        for layer in &wg.layers {
            let mut s: Vec<f64> = layer.clone().svd(false, false).singular_values.iter().copied().filter(|&v| v > 1e-12).collect();
            s.sort_by(|a, b| b.total_cmp(a));
            let mut want: Vec<f64> = spec.sigma.iter().copied().filter(|&v| v > 0.0).collect();
            want.sort_by(|a, b| b.total_cmp(a));
            prop_assert_eq!(s.len(), want.len());
            for (a, b) in s.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b));
            }
        }
        // in F the layers are balanced only up to the weights
        let wf = construct(&l, spec, &d, Objective::F).unwrap();
        let distinct = l.problem.lambdas().windows(2).any(|w| (w[0] - w[1]).abs() > 1e-3);
        if distinct && spec.support() > 0 {
            prop_assert!(balancedness_residual(&wf) > 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn root_invariants(y in 0.0..10.0f64, log_lambda in -4.0..1.0f64, depth in 3usize..=6) {
        let lambda = 10f64.powf(log_lambda);
        let p = root_profile(y, lambda, depth, 1e-9, 0.0).unwrap();
        let t = p.thresholds;
        let scale = |x: f64| x.powi(2 * depth as i32 - 1) + lambda.sqrt() * y * x.powi(depth as i32 - 1) + lambda * x;
        match p.root {
            RootKind::NoPositive => prop_assert!(y < t.y_star),
            RootKind::UniquePositive { x_hat } => {
                prop_assert!((x_hat - t.x_star).abs() <= 1e-12 * t.x_star);
                prop_assert!((y - t.y_star).abs() <= 1e-9 * t.y_star);
            }
            RootKind::TwoPositive { x_bar, x_underbar } => {
                prop_assert!(x_underbar < t.x_star && t.x_star < x_bar);
                for x in [x_bar, x_underbar] {
                    prop_assert!(eval_f(x, y, lambda, depth).abs() <= 1e-10 * scale(x));
                }
                prop_assert!(eval_f_dx(x_bar, y, lambda, depth) > 0.0);
                prop_assert!(eval_f_dx(x_underbar, y, lambda, depth) < 0.0);
                // the larger root grows with y, the smaller one shrinks
                let q = root_profile(y * 1.01, lambda, depth, 1e-9, 0.0).unwrap();
                prop_assert!(q.root(RootLabel::S1).unwrap() > x_bar);
                prop_assert!(q.root(RootLabel::S2).unwrap() < x_underbar);
            }
        }
    }

    #[test]
    fn critical_lambda_gives_a_double_root(y in 0.01..10.0f64, depth in 3usize..=6) {
        let lc = lambda_critical(y, depth).unwrap();
        let p = root_profile(y, lc, depth, 1e-9, 0.0).unwrap();
        prop_assert!(matches!(p.root, RootKind::UniquePositive { .. }), "{:?}", p.root);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scalar_argmin_beats_a_fine_grid(y in 0.0..4.0f64, log_lambda in -2.0..0.5f64, depth in 2usize..=5) {
        let lambda = 10f64.powf(log_lambda);
        let m = scalar_argmin_g(y, lambda, depth, 1e-9, 1e-9).unwrap();
        let top = 3.0;
        let n = (top / 1e-5) as usize;
        let grid_min = (0..=n).map(|k| eval_g(k as f64 * 1e-5, y, lambda, depth)).fold(f64::INFINITY, f64::min);
        prop_assert!(m.min_value <= grid_min + 1e-12);
        // the grid gets within a quadratic step of the minimum
        prop_assert!(grid_min - m.min_value <= 1e-6 * (1.0 + lambda * y * y));
        for &x in &m.argmin_set {
            prop_assert!((eval_g(x, y, lambda, depth) - m.min_value).abs() <= 1e-9 * (1.0 + lambda * y * y));
        }
    }

    #[test]
    fn global_minimizer_is_lowest_and_locally_minimal(seed in any::<u64>()) {
        let l = landscape(random_problem(seed, 4, 3..=4, false));
        let fam = enumerate_specs(&l, Caps::default()).unwrap();
        let gmin = global_min_value(&l, Objective::F).unwrap();
        let d = random_dressing(&l, seed);
        let mut found = false;
        for (k, spec) in fam.specs.iter().enumerate() {
            let c = classify(&l, spec).unwrap();
            let w = construct(&l, spec, &d, Objective::F).unwrap();
            let v = loss_f(&l.problem, &w).unwrap();
            prop_assert!(v >= gmin - 1e-9 * (1.0 + gmin));
            match c.class {
                CritClass::GlobalMin => {
                    found = true;
                    prop_assert!(rel_close(v, gmin, 1e-9));
                }
                CritClass::StrictSaddle => {
                    let cert = certificate_for(&l, spec, &d, Objective::F).unwrap().unwrap();
                    prop_assert!(hessian_quadform(&l.problem, &w, &cert.direction, Objective::F).unwrap() < 0.0);
                }
                _ => {}
            }
            if c.class.is_local_min() {
                let r = probe_min_quadform(&l.problem, &w, Objective::F, 100, k as u64, None).unwrap();
                prop_assert!(r.min_quadform >= -1e-6, "{:?} probe {}", c.class, r.min_quadform);
            }
        }
        prop_assert!(found);
    }

    #[test]
    fn depth_two_points_are_minima_or_strict_saddles(seed in any::<u64>()) {
        let l = landscape(random_problem(seed, 5, 2..=2, false));
        let lambda = l.lambda();
        for spec in enumerate_specs(&l, Caps::default()).unwrap().specs {
            let c = classify(&l, &spec).unwrap();
            match c.class {
                CritClass::GlobalMin => {
                    for (i, &s) in spec.sigma.iter().enumerate() {
                        let star = (lambda.sqrt() * l.spectral.y[i] - lambda).max(0.0).sqrt();
                        prop_assert!((s - star).abs() <= 1e-10);
                    }
                }
                CritClass::StrictSaddle => {}
                other => prop_assert!(false, "class {:?}", other),
            }
        }
    }

    #[test]
    fn benign_exactly_when_no_double_root(ys in prop::collection::vec(0.1..5.0f64, 1..=3), pick in 0usize..3, at_critical in any::<bool>()) {
        let depth = 3;
        let lambda = if at_critical {
            lambda_critical(ys[pick % ys.len()], depth).unwrap()
        } else {
            0.05
        };
        let per = lambda.cbrt();
        let n = ys.len();
        let l = landscape(ProblemSpec::from_singular_values(vec![n, n, n, n], vec![per; depth], &ys).unwrap());
        let rep = check_partially_benign(&l, 1e-9).unwrap();
        let mut has_s3 = false;
        for spec in enumerate_specs(&l, Caps::default()).unwrap().specs {
            for i in 0..spec.support() {
                has_s3 |= label_of(&l, spec.sigma[i], l.spectral.y[spec.pi[i]]).unwrap() == Some(RootLabel::S3);
            }
        }
        prop_assert_eq!(rep.benign, !has_s3);
        if at_critical {
            prop_assert!(!rep.benign);
        }
    }

    #[test]
    fn cubic_certificate_scales_cubically(y in 0.5..5.0f64) {
        let depth = 3;
        let lc = lambda_critical(y, depth).unwrap();
        let l = landscape(ProblemSpec::from_singular_values(vec![2, 2, 2, 2], vec![lc.cbrt(); depth], &[y]).unwrap());
        let xs = root_profile(y, l.lambda(), depth, 1e-9, 0.0).unwrap().root(RootLabel::S3).unwrap();
        let spec = CriticalSpec { sigma: vec![xs, 0.0], pi: vec![0, 1] };
        prop_assert_eq!(classify(&l, &spec).unwrap().class, CritClass::NonStrictSaddle);
        let d = canonical_dressing(&l);
        let w = construct(&l, &spec, &d, Objective::G).unwrap();
        let c = certificate_direction(&l, &spec, &d, CertificateKind::CubicNonStrict, Objective::G).unwrap();
        let base = loss_g(&l.problem, &w).unwrap();
        let h = |t: f64| loss_g(&l.problem, &w.add_scaled(t, &c.direction)).unwrap() - base;
        let t = 1e-2 * (1.0 + xs);
        let ratio = h(t) / h(t / 2.0);
        prop_assert!((6.0..=10.0).contains(&ratio), "ratio {ratio}");
        prop_assert!(h(t) * h(-t) < 0.0);
    }
}

#[test]
fn gd_terminal_points_are_enumerated() {
    // small problems: every GD terminal point must match an enumerated spec
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys = [rng.random_range(1.0..3.0), rng.random_range(0.3..1.0)];
        let l = landscape(ProblemSpec::from_singular_values(vec![2, 2, 2, 2], vec![0.2; 3], &ys).unwrap());
        let fam = enumerate_specs(&l, Caps::default()).unwrap();
        let cfg = GdConfig { step: 1e-2, max_iter: 400_000, grad_tol: 1e-10, ..GdConfig::default() };
        for run in train_seeds(&l, &[1, 2, 3, 4], &cfg, &NumericTols::default()) {
            let r = run.unwrap();
            assert!(r.converged, "seed {seed}: grad {}", r.grad_norm);
            let c = r.classification.expect("classified");
            assert!(c.matched, "seed {seed}: sigma {:?}", c.sigma);
            let spec = c.spec.unwrap();
            let hit = fam.specs.iter().any(|s| {
                s.sigma.iter().zip(&spec.sigma).all(|(a, b)| (a - b).abs() <= 1e-6 * (1.0 + a))
            });
            assert!(hit, "seed {seed}: spec {spec:?} not enumerated");
        }
    }
}

#[test]
fn gd_escapes_a_perturbed_smaller_root_saddle() {
    let l = landscape(ProblemSpec::from_singular_values(vec![2, 2, 2, 2], vec![1.0; 3], &[2.0]).unwrap());
    let xu = root_profile(2.0, 1.0, 3, 1e-9, 0.0).unwrap().root(RootLabel::S2).unwrap();
    let spec = CriticalSpec { sigma: vec![xu, 0.0], pi: vec![0, 1] };
    let w = construct(&l, &spec, &random_dressing(&l, 4), Objective::F).unwrap();
    let saddle_value = loss_f(&l.problem, &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let start = w.add_scaled(1.0, &gaussian_stack(&l.problem, 1e-8, &mut rng));
    let cfg = GdConfig { step: 1e-2, max_iter: 200_000, grad_tol: 1e-9, ..GdConfig::default() };
    let r = gradient_descent(&l, Init::Stack(start), &cfg, &NumericTols::default()).unwrap();
    assert!(r.loss < saddle_value - 1e-3, "loss {} vs saddle {saddle_value}", r.loss);
    assert!(r.classification.unwrap().class.is_local_min());
}

#[test]
fn cubic_direction_descends_on_one_side() {
    let t = thresholds(1.0, 3).unwrap();
    let l = landscape(ProblemSpec::from_singular_values(vec![2, 2, 2, 2], vec![1.0; 3], &[t.y_star]).unwrap());
    let spec = CriticalSpec { sigma: vec![t.x_star, 0.0], pi: vec![0, 1] };
    let d = canonical_dressing(&l);
    let w = construct(&l, &spec, &d, Objective::G).unwrap();
    let c = certificate_direction(&l, &spec, &d, CertificateKind::CubicNonStrict, Objective::G).unwrap();
    let base = loss_g(&l.problem, &w).unwrap();
    let plus = loss_g(&l.problem, &w.add_scaled(1e-3, &c.direction)).unwrap() - base;
    let minus = loss_g(&l.problem, &w.add_scaled(-1e-3, &c.direction)).unwrap() - base;
    assert!(plus.min(minus) < 0.0 && plus.max(minus) > 0.0, "{plus:e} {minus:e}");
    // the exact directional polynomial agrees: no linear or quadratic term
    let coef = directional_poly(&l.problem, &w, &c.direction, Objective::G).unwrap();
    assert!(coef[1].abs() < 1e-12 && coef[2].abs() < 1e-10, "{coef:?}");
    assert!((coef[3] - c.expected_cubic.unwrap()).abs() <= 1e-10 * coef[3].abs().max(1.0));
}
