use vpaw::analytic::{solve_spectrum, ModelParams, SmoothPotential};
use vpaw::assembly::{assemble_h, AssemblyOptions, TrigBasis};
use vpaw::eigensolve::solve_lowest;
use vpaw::linalg::cholesky;
use vpaw::paw::{assemble_paw, paw_solve};
use vpaw::setup::{build_site_setups, RhoKind, VpawParams};

#[test]
fn without_sites_the_pair_is_the_plane_wave_problem() {
    let params = ModelParams::new(0.0, 0.0, 0.4)
        .unwrap()
        .with_potential(SmoothPotential::new(10.0, 1, 0.2).unwrap());
    let setups = build_site_setups(&params, &VpawParams::new(2, 2, 0.1).unwrap(), RhoKind::Parabola).unwrap();
    assert!(setups.is_empty());
    let basis = TrigBasis::new(65).unwrap();
    let paw = assemble_paw(&params, &setups, &basis, 0.025, &AssemblyOptions::default()).unwrap();
    let h = assemble_h(&params, &basis);
    assert!(paw.h.sub(&h).max_abs() <= 1e-12 * h.max_abs());
    let direct = solve_lowest(&h, &paw.s, 4).unwrap().values;
    let via_paw = paw_solve(&params, &setups, &basis, 0.025, 4).unwrap().values;
    for (a, b) in direct.iter().zip(&via_paw) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn pair_is_symmetric_with_definite_overlap() {
    let params = ModelParams::reference();
    let setups = build_site_setups(&params, &VpawParams::new(3, 3, 0.1).unwrap(), RhoKind::Parabola).unwrap();
    let paw = assemble_paw(&params, &setups, &TrigBasis::new(129).unwrap(), 0.025, &AssemblyOptions::default()).unwrap();
    assert!(paw.h.asymmetry() <= 1e-12 * paw.h.max_abs());
    assert!(paw.s.asymmetry() <= 1e-12 * paw.s.max_abs());
    assert!(cholesky(&paw.s).is_ok());
}

#[test]
fn truncation_error_saturates_in_m() {
    let params = ModelParams::reference();
    let exact = solve_spectrum(&params, 1).unwrap()[0].energy;
    let setups = build_site_setups(&params, &VpawParams::new(2, 2, 0.1).unwrap(), RhoKind::Parabola).unwrap();
    let e = |m: usize| paw_solve(&params, &setups, &TrigBasis::new(m).unwrap(), 0.025, 1).unwrap().values[0];
    let (e513, e1025) = (e(513), e(1025));
    let err = (e1025 - exact).abs();
    assert!(err > 1e-6, "{err:e}");
    assert!((e513 - e1025).abs() <= 0.05 * err, "{} vs {err:e}", (e513 - e1025).abs());
}
