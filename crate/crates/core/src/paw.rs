//! Truncated classical PAW baseline with a mollified Dirac potential.
//!
//! Each `-Z δ_s` is replaced by `-Z χ_ε(· - s)` in the pseudo Hamiltonian, and the
//! PAW correction keeps only the `N` projectors of each site:
//! `H^PAW = H_ps + P̃ C P̃ᵀ`, `S^PAW = I + P̃ D P̃ᵀ` with
//! `C_ij = ⟨φ_i, H φ_j⟩_w - ⟨φ̃_i, H_ps φ̃_j⟩_w`, `D_ij = ⟨φ_i, φ_j⟩_w - ⟨φ̃_i, φ̃_j⟩_w`
//! and `⟨·,·⟩_w` the integral over `[s - η, s + η]`.
//!
//! Since `φ_j` and `φ̃_j` agree to order `d - 1` at `±η`, the boundary terms of the two
//! kinetic integrals cancel and `C` can be computed in the symmetric weak form.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::analytic::ModelParams;
use crate::assembly::{assemble_h, check_overlap, lowrank_factors, AssemblyOptions, TrigBasis};
use crate::eigensolve::{solve_lowest, EigResult};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::{composite_nodes, GaussRule};
use crate::setup::VpawSetup;

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `χ_ε(x) = (C/ε) exp(-1/(1 - (x/ε)²))` on `[-ε, ε]`, periodized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifiedPotential {
    pub epsilon: f64,
    /// Normalization so that `∫ χ_ε = 1`.
    pub c: f64,
}

impl MollifiedPotential {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParams(format!("mollifier width {epsilon} not in (0, 1/2)")));
        }
        Ok(Self {
            epsilon,
            c: 1.0 / bump_integral(),
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let u = (x + 0.5).rem_euclid(1.0) - 0.5;
        self.c / self.epsilon * bump(u / self.epsilon)
    }

    /// `∫ χ_ε(u) cos(2πku) du` for `k = 0..=k_max`.
    pub fn cosine_transform(&self, k_max: usize) -> Vec<f64> {
        let rule = GaussRule::new(24);
        let panels = ((k_max as f64 * self.epsilon * 2.0).ceil() as usize).max(8);
        let nodes = composite_nodes(&rule, 0.0, self.epsilon, panels);
        let mut out = vec![0.0; k_max + 1];
        for (u, w) in nodes {
            let f = 2.0 * w * self.value(u);
            let (s1, c1) = (2.0 * PI * u).sin_cos();
            let (mut c, mut s) = (1.0, 0.0);
            for o in out.iter_mut() {
                *o += f * c;
                let cn = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = cn;
            }
        }
        out
    }
}

/// `∫_{-1}^{1} exp(-1/(1 - s²)) ds`, panels doubled until the sum is stable.
fn bump_integral() -> f64 {
    let rule = GaussRule::new(24);
    let mut panels = 2;
    let mut prev = f64::NAN;
    loop {
        let cur: f64 = composite_nodes(&rule, -1.0, 1.0, panels)
            .iter()
            .map(|&(s, w)| w * bump(s))
            .sum();
        if (cur - prev).abs() <= 1e-16 * cur || panels >= 4096 {
            return cur;
        }
        prev = cur;
        panels *= 2;
    }
}

/// Galerkin pair of the PAW generalized eigenproblem.
#[derive(Debug, Clone)]
pub struct PawPair {
    pub h: Matrix,
    pub s: Matrix,
    /// Per-site correction blocks `(C, D)`.
    pub corrections: Vec<(Matrix, Matrix)>,
}

/// Galerkin matrix of `-d² - Σ Z χ_ε(· - s) + W`.
pub fn assemble_pseudo_h(params: &ModelParams, basis: &TrigBasis, mollifier: &MollifiedPotential) -> Matrix {
    let free = ModelParams {
        z0: 0.0,
        za: 0.0,
        ..*params
    };
    let mut h = assemble_h(&free, basis);
    let kmax = 2 * basis.max_freq();
    let transform = mollifier.cosine_transform(kmax);
    let m = basis.len();
    let modes: Vec<_> = (0..m).map(|i| basis.modes(i)).collect();
    for (site, z) in params.sites() {
        if z == 0.0 {
            continue;
        }
        // e^{2πiqs} ĉ(|q|) for q in [-kmax, kmax]
        let weighted: Vec<Complex64> = (-(kmax as i64)..=kmax as i64)
            .map(|q| Complex64::from_polar(transform[q.unsigned_abs() as usize], 2.0 * PI * q as f64 * site))
            .collect();
        for i in 0..m {
            for j in i..m {
                let mut v = Complex64::new(0.0, 0.0);
                for &(pm, cm) in &modes[i] {
                    for &(pn, cn) in &modes[j] {
                        v += cm * cn * weighted[(pm + pn + kmax as i64) as usize];
                    }
                }
                let e = -z * v.re;
                h[(i, j)] += e;
                if i != j {
                    h[(j, i)] += e;
                }
            }
        }
    }
    h
}

/// Window corrections `(C, D)` of one site in its working gauge.
pub fn site_corrections(params: &ModelParams, setup: &VpawSetup, mollifier: &MollifiedPotential) -> (Matrix, Matrix) {
    let n = setup.n();
    let eta = setup.eta();
    let eps = mollifier.epsilon.min(eta);
    let rule = GaussRule::new(24);
    let mut nodes = composite_nodes(&rule, 0.0, eps, 8);
    if eps < eta {
        nodes.extend(composite_nodes(&rule, eps, eta, 8));
    }
    let b = &setup.basis;
    let mut c = Matrix::zeros(n, n);
    let mut d = Matrix::zeros(n, n);
    for (u, w) in nodes {
        let wbar = 0.5 * (params.potential_at(setup.site + u) + params.potential_at(setup.site - u));
        let chi_ps = mollifier.value(u);
        let phi: Vec<(f64, f64)> = (0..n).map(|k| (b.chi(k, u, 0), b.chi(k, u, 1))).collect();
        let ps: Vec<(f64, f64)> = (0..n).map(|k| (b.pseudo(k, u, 0), b.pseudo(k, u, 1))).collect();
        for i in 0..n {
            for j in 0..n {
                let ae = phi[i].1 * phi[j].1 + wbar * phi[i].0 * phi[j].0;
                let pe = ps[i].1 * ps[j].1 + (wbar - setup.z * chi_ps) * ps[i].0 * ps[j].0;
                c[(i, j)] += 2.0 * w * (ae - pe);
                d[(i, j)] += 2.0 * w * (phi[i].0 * phi[j].0 - ps[i].0 * ps[j].0);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] -= setup.z * b.chi(i, 0.0, 0) * b.chi(j, 0.0, 0);
        }
    }
    (c, d)
}

/// Assembles `H^PAW` and `S^PAW`.
pub fn assemble_paw(
    params: &ModelParams,
    setups: &[VpawSetup],
    basis: &TrigBasis,
    epsilon: f64,
    opts: &AssemblyOptions,
) -> Result<PawPair> {
    check_overlap(params, setups)?;
    for s in setups {
        if epsilon > s.eta() {
            return Err(Error::InvalidParams(format!(
                "mollifier width {epsilon} exceeds the cut-off radius {}",
                s.eta()
            )));
        }
    }
    let mollifier = MollifiedPotential::new(epsilon)?;
    let mut h = assemble_pseudo_h(params, basis, &mollifier);
    let mut s = Matrix::identity(basis.len());
    let p = lowrank_factors(params, setups, basis, opts).ptilde;
    let corrections: Vec<_> = setups.iter().map(|st| site_corrections(params, st, &mollifier)).collect();
    let r = p.cols();
    let mut cfull = Matrix::zeros(r, r);
    let mut dfull = Matrix::zeros(r, r);
    let mut off = 0;
    for (c, d) in &corrections {
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                cfull[(off + i, off + j)] = c[(i, j)];
                dfull[(off + i, off + j)] = d[(i, j)];
            }
        }
        off += c.rows();
    }
    let pt = p.transpose();
    h = h.add(&p.matmul(&cfull).matmul(&pt));
    s = s.add(&p.matmul(&dfull).matmul(&pt));
    Ok(PawPair { h, s, corrections })
}

/// Lowest `n_eigs` eigenvalues of the PAW problem.
pub fn paw_solve(
    params: &ModelParams,
    setups: &[VpawSetup],
    basis: &TrigBasis,
    epsilon: f64,
    n_eigs: usize,
) -> Result<EigResult> {
    let pair = assemble_paw(params, setups, basis, epsilon, &AssemblyOptions::default())?;
    solve_lowest(&pair.h, &pair.s, n_eigs)
}
