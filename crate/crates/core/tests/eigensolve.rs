use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use vpaw::analytic::{solve_spectrum, ModelParams};
use vpaw::assembly::{assemble_h, TrigBasis};
use vpaw::eigensolve::{jacobi_generalized, solve_lowest};
use vpaw::linalg::Matrix;

fn random_pencil(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = g.transpose().matmul(&g).add(&Matrix::identity(n).scale(0.5));
    let r = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = r.add(&r.transpose());
    (h, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_spd_pencils(n in 2usize..24, k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(n);
        let (h, s) = random_pencil(n, seed);
        let res = solve_lowest(&h, &s, k).unwrap();
        let reference = jacobi_generalized(&h, &s).unwrap();
        let hmax = h.max_abs();
        for w in res.values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for (j, (got, want)) in res.values.iter().zip(&reference.values).enumerate() {
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "j={j}: {got} vs {want}");
            prop_assert!(res.residuals[j] <= 1e-9 * hmax);
        }
        let gram = res.vectors.transpose().matmul(&s).matmul(&res.vectors);
        prop_assert!(gram.sub(&Matrix::identity(k)).max_abs() <= 1e-10);
    }
}

#[test]
fn plane_wave_levels_approach_from_above() {
    let params = ModelParams::reference();
    let exact = solve_spectrum(&params, 10).unwrap();
    let h = assemble_h(&params, &TrigBasis::new(1025).unwrap());
    let res = solve_lowest(&h, &Matrix::identity(1025), 10).unwrap();
    for (k, (got, want)) in res.values.iter().zip(&exact).enumerate() {
        assert!(*got > want.energy, "k={k}: {got} below {}", want.energy);
        assert!(got - want.energy < 0.1, "k={k}: error {}", got - want.energy);
        assert!(res.residuals[k] <= 1e-9 * h.max_abs());
    }
}
