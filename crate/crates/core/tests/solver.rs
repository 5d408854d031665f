use aitvseg::admm::{
    admm_solve, check_lemma4, u_update, verify_invariants, zeta_smallest_eigenvalue, FullDiagnostics,
    IterationCallback, AdmmState, IterateDiagnostics, Regularizer, SolverConfig,
};
use aitvseg::corruption::{add_noise, make_average_kernel, make_motion_kernel, NoiseKind, NoiseSpec};
use aitvseg::oracle::{dense_smallest_eigenvalue, dense_u_update};
use aitvseg::synthetic::disk_scene;
use aitvseg::{BlurKernel, GradientField, ImageGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_disk(size: usize, seed: u64) -> ImageGrid {
    let (clean, _) = disk_scene(size, 0.2, 0.8).render().unwrap();
    let spec = NoiseSpec::new(NoiseKind::SaltPepper { fraction: 0.5 }, seed).unwrap();
    add_noise(&clean, &spec).unwrap().into_channels().remove(0)
}

#[test]
fn fft_u_update_matches_dense_solve_for_several_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kernels = [
        BlurKernel::identity(),
        make_average_kernel(3).unwrap(),
        make_motion_kernel(5, 45.0).unwrap(),
        BlurKernel::new(2, 3, vec![0.1, 0.2, 0.05, 0.3, 0.15, 0.2], (1, 0)).unwrap(),
    ];
    for kernel in &kernels {
        for _ in 0..3 {
            let (m, n) = (rng.random_range(5..10), rng.random_range(5..10));
            let mut grid = || ImageGrid::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let f = grid();
            let w = GradientField::new(grid(), grid()).unwrap();
            let z = GradientField::new(grid(), grid()).unwrap();
            let (lambda, mu, delta) = (rng.random_range(0.5..10.0), rng.random_range(0.1..2.0), rng.random_range(0.5..20.0));
            let cfg = SolverConfig::new(lambda, mu);
            let fast = u_update(&w, &z, &f, kernel, &cfg, delta).unwrap();
            let dense = dense_u_update(&f, &w, &z, kernel, lambda, mu, delta).unwrap();
            assert!(fast.max_abs_diff(&dense) <= 1e-10, "{kernel:?}: {}", fast.max_abs_diff(&dense));
        }
    }
}

#[test]
fn zeta_matches_dense_spectrum_on_rectangular_grids() {
    let k = make_motion_kernel(3, 30.0).unwrap();
    for (m, n) in [(6, 8), (7, 5)] {
        let cfg = SolverConfig::new(1.5, 0.3).with_penalty(2.0, 1.25);
        let fast = zeta_smallest_eigenvalue(&k, &cfg, m, n).unwrap();
        let dense = dense_smallest_eigenvalue(&k, 1.5, 2.3, m, n);
        assert!((fast - dense).abs() <= 1e-8 * dense.abs(), "{fast} vs {dense}");
    }
}

#[test]
fn noisy_disk_run_satisfies_every_invariant() {
    let f = noisy_disk(64, 7);
    for reg in [Regularizer::Aitv, Regularizer::IsotropicTv] {
        let cfg = SolverConfig::new(2.0, 1.0).with_alpha(0.6).with_regularizer(reg);
        let out = admm_solve(&f, &BlurKernel::identity(), &cfg, &mut FullDiagnostics).unwrap();
        assert!(out.converged && out.iterations <= 300);
        let violations = verify_invariants(&out, &cfg).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }
}

#[test]
fn blurred_run_satisfies_descent_inequality() {
    let f = noisy_disk(32, 3);
    let k = make_average_kernel(3).unwrap();
    let cfg = SolverConfig::new(5.0, 0.5).with_alpha(0.8).with_penalty(1.0, 1.5);
    let out = admm_solve(&f, &k, &cfg, &mut FullDiagnostics).unwrap();
    let slack = check_lemma4(&out.trace, out.initial_lagrangian, out.zeta.unwrap(), &cfg).unwrap();
    assert!(slack.iter().all(|s| *s >= -1e-8));
    assert!(verify_invariants(&out, &cfg).unwrap().is_empty());
}

#[test]
fn energy_trace_settles() {
    let f = noisy_disk(32, 5);
    let cfg = SolverConfig::new(2.0, 1.0);
    let out = admm_solve(&f, &BlurKernel::identity(), &cfg, &mut FullDiagnostics).unwrap();
    let e: Vec<f64> = out.trace.iter().map(|d| d.energy.unwrap()).collect();
    // smoothing lowers the energy well below that of the noisy input
    assert!(e.last().unwrap() < &(0.5 * out.initial_lagrangian.unwrap()));
    let tail = &e[e.len() - 3..];
    assert!((tail[2] - tail[0]).abs() <= 1e-3 * tail[2].abs());
}

#[test]
fn larger_sigma_needs_fewer_iterations() {
    let f = noisy_disk(64, 7);
    let mut prev = usize::MAX;
    for sigma in [1.0, 1.25, 1.5, 2.0] {
        let cfg = SolverConfig::new(2.0, 1.0).with_penalty(1.0, sigma);
        let it = admm_solve(&f, &BlurKernel::identity(), &cfg, &mut ()).unwrap().iterations;
        assert!(it <= prev, "sigma {sigma}: {it} > {prev}");
        prev = it;
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let f = noisy_disk(48, 9);
    let cfg = SolverConfig::new(2.0, 1.0);
    let k = make_motion_kernel(5, 0.0).unwrap();
    let a = admm_solve(&f, &k, &cfg, &mut FullDiagnostics).unwrap();
    let b = admm_solve(&f, &k, &cfg, &mut FullDiagnostics).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn callback_sees_every_iteration() {
    struct Count(usize);
    impl IterationCallback for Count {
        fn on_iteration(&mut self, state: &AdmmState, diag: &IterateDiagnostics) {
            self.0 += 1;
            assert_eq!(state.iter, diag.iter);
        }
    }
    let f = noisy_disk(16, 1);
    let mut c = Count(0);
    let out = admm_solve(&f, &BlurKernel::identity(), &SolverConfig::new(1.0, 1.0), &mut c).unwrap();
    assert_eq!(c.0, out.iterations);
}

#[test]
fn huge_sigma_reports_divergence_instead_of_panicking() {
    let f = noisy_disk(16, 1);
    let cfg = SolverConfig::new(1.0, 1.0).with_penalty(1.0, 1e200).with_stopping(1e-300, 10);
    let err = admm_solve(&f, &BlurKernel::identity(), &cfg, &mut ()).unwrap_err();
    assert!(matches!(
        err,
        aitvseg::Error::Divergence { .. } | aitvseg::Error::SingularOperator { .. }
    ), "{err:?}");
}
