use rand::{Rng, SeedableRng};
use vpaw::analytic::{solve_spectrum, ModelParams, SmoothPotential};
use vpaw::assembly::{apply_htilde, assemble_vpaw, AssemblyOptions, OperatorPair, TrigBasis};
use vpaw::eigensolve::solve_lowest;
use vpaw::linalg::cholesky;
use vpaw::setup::{build_site_setups, RhoKind, VpawParams};

fn pair(params: &ModelParams, n: usize, d: usize, eta: f64, m: usize, opts: &AssemblyOptions) -> OperatorPair {
    let setups = build_site_setups(params, &VpawParams::new(n, d, eta).unwrap(), RhoKind::Parabola).unwrap();
    assemble_vpaw(params, &setups, &TrigBasis::new(m).unwrap(), opts).unwrap()
}

fn perturbed() -> ModelParams {
    let mut p = ModelParams::reference();
    p.w = Some(SmoothPotential::new(10.0, 1, 0.2).unwrap());
    p
}

#[test]
fn transformed_pencil_is_symmetric_and_definite() {
    for (n, d, eta) in [(1, 2, 0.15), (2, 2, 0.1), (3, 4, 0.05), (4, 5, 0.02)] {
        let op = pair(&perturbed(), n, d, eta, 65, &AssemblyOptions::default());
        assert!(op.htilde.asymmetry() <= 1e-12 * op.htilde.max_abs());
        assert!(op.stilde.asymmetry() <= 1e-12 * op.stilde.max_abs());
        assert!(cholesky(&op.stilde).is_ok(), "N={n} d={d} eta={eta}");
    }
}

#[test]
fn matrix_free_product_matches_dense_with_potential() {
    let op = pair(&perturbed(), 2, 3, 0.08, 129, &AssemblyOptions::default());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let x: Vec<f64> = (0..129).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = op.htilde.mat_vec(&x);
        let free = apply_htilde(&op, &x);
        let scale = dense.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = dense.iter().zip(&free).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-11 * scale, "{err:e}");
    }
}

#[test]
fn refining_window_quadrature_leaves_entries_unchanged() {
    let coarse = pair(&ModelParams::reference(), 3, 4, 0.1, 65, &AssemblyOptions::default());
    let fine_opts = AssemblyOptions {
        panel_nodes: 32,
        panels_per_wave: 4.0,
    };
    let fine = pair(&ModelParams::reference(), 3, 4, 0.1, 65, &fine_opts);
    let dh = coarse.htilde.sub(&fine.htilde).max_abs();
    let ds = coarse.stilde.sub(&fine.stilde).max_abs();
    assert!(dh <= 1e-13 * fine.htilde.max_abs(), "{dh:e}");
    assert!(ds <= 1e-13 * fine.stilde.max_abs(), "{ds:e}");
}

#[test]
fn eigenvalues_decrease_with_nested_bases() {
    let params = ModelParams::reference();
    let exact = solve_spectrum(&params, 3).unwrap();
    let mut prev = vec![f64::INFINITY; 3];
    for m in [33, 65, 129, 257] {
        let op = pair(&params, 2, 2, 0.1, m, &AssemblyOptions::default());
        let e = solve_lowest(&op.htilde, &op.stilde, 3).unwrap().values;
        for k in 0..3 {
            assert!(e[k] <= prev[k] + 1e-10 * prev[k].abs().min(1e6), "M={m} k={k}");
            assert!(e[k] >= exact[k].energy - 1e-9 * exact[k].energy.abs(), "M={m} k={k}");
        }
        prev = e;
    }
}

#[test]
fn weak_coupling_matches_the_exact_levels() {
    let params = ModelParams::new(0.1, 0.1, 0.4).unwrap();
    let exact = solve_spectrum(&params, 4).unwrap();
    let op = pair(&params, 2, 2, 0.1, 65, &AssemblyOptions::default());
    let e = solve_lowest(&op.htilde, &op.stilde, 4).unwrap().values;
    for (k, (got, want)) in e.iter().zip(&exact).enumerate() {
        let err = (got - want.energy).abs() / want.energy.abs().max(1.0);
        assert!(err <= 1e-3, "k={k}: {got} vs {}", want.energy);
    }
}
