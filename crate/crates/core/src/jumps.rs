//! Derivative jumps of the pseudo wave function `ψ̃ = ψ - Σ c_k g_k` at a site
//! and at the window edge, plus log-log slope fits.
//!
//! Near a site the even part of an eigenfunction is `ψ(s) χ_E`. Writing `χ_E` in
//! Newton form over the atomic energies, `χ_E = Σ_k w_k χ'_k + ω_N(E) χ[ν_0, …, ν_{N-1}, Ê]`,
//! isolates the part of `ψ` that the atomic functions cannot capture. Its weight
//! `ω_N = Π (Ê - ν_i)` carries the `η^{2N}` factor analytically, so the tiny jumps at the
//! site come out with full relative precision instead of as a difference of O(1) terms.

use crate::analytic::AnalyticEigenpair;
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::local::{chi_divided_difference, newton_weight, EvenSeries};
use crate::setup::{window_rule, VpawSetup, SETUP_NODES};

/// Coefficients `c = ⟨p̃, ψ̃⟩` at one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteCoefficients {
    /// In the working basis of the setup.
    pub working: Vec<f64>,
    /// In the atomic-indexed family `φ_l` (may be badly scaled for small η).
    pub original: Vec<f64>,
    /// `max |Ã c - ⟨p̃, ψ⟩|`.
    pub residual: f64,
}

/// Solves `Ã c = ⟨p̃, f⟩` with the pairing computed by split quadrature of `f(u)`.
pub fn coeffs_of(setup: &VpawSetup, f: impl Fn(f64) -> f64) -> Result<SiteCoefficients> {
    let n = setup.n();
    let mut rhs = vec![0.0; n];
    let mut pv = vec![0.0; n];
    for (u, w) in window_rule(setup.eta(), SETUP_NODES) {
        setup.projectors.values(u, &mut pv);
        let fu = w * f(u);
        for (r, p) in rhs.iter_mut().zip(&pv) {
            *r += p * fu;
        }
    }
    let atilde = &setup.report.atilde;
    let working = solve(atilde, &rhs).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    let back = atilde.mat_vec(&working);
    let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let residual = back.iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    let original = solve(&setup.basis.gauge.transpose(), &working).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    Ok(SiteCoefficients {
        working,
        original,
        residual,
    })
}

/// `⟨p̃, ψ̃⟩` at the setup's site for an exact eigenpair, by direct quadrature of `ψ`.
pub fn expansion_coeffs(pair: &AnalyticEigenpair, setup: &VpawSetup) -> Result<SiteCoefficients> {
    let site = setup.site;
    coeffs_of(setup, |u| pair.value(site + u))
}

/// Newton-form data of `ψ̃` near one site, from `E` and `ψ(s)` only.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalExpansion {
    pub energy: f64,
    pub psi_site: f64,
    /// `ω_N = Π (Eη² - ε_i η²)`.
    pub omega_n: f64,
    /// `χ[ν_0, …, ν_{N-1}, Eη²]` in `t`.
    pub remainder: EvenSeries,
    /// Coefficients on the Newton family: `c' = ψ(s) (w + ω_N q)`.
    pub newton_coeffs: Vec<f64>,
    pub q: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn local_expansion(energy: f64, psi_site: f64, setup: &VpawSetup) -> Result<LocalExpansion> {
    let basis = &setup.basis;
    let eta = setup.eta();
    let n = basis.len();
    let e_hat = energy * eta * eta;
    let mut all = basis.nodes.clone();
    all.push(e_hat);
    let omega_n = newton_weight(&all, n, e_hat);
    let remainder = chi_divided_difference(&all, basis.z * eta, 1.0);
    let mut r = vec![0.0; n];
    let mut pv = vec![0.0; n];
    for (u, w) in window_rule(eta, SETUP_NODES) {
        setup.projectors.values(u, &mut pv);
        let fu = w * remainder.value(u / eta);
        for (ri, p) in r.iter_mut().zip(&pv) {
            *ri += p * fu;
        }
    }
    let y = solve(&setup.report.atilde, &r).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    let q = basis.linv.tr_mat_vec(&y);
    let newton_coeffs = (0..n)
        .map(|k| psi_site * (newton_weight(&all, k, e_hat) / factorial(2 * k) + omega_n * q[k]))
        .collect();
    Ok(LocalExpansion {
        energy,
        psi_site,
        omega_n,
        remainder,
        newton_coeffs,
        q,
    })
}

impl LocalExpansion {
    /// `[ψ̃^{(2j+1)}]` at the site (right minus left).
    pub fn jump_at_site(&self, setup: &VpawSetup, j: usize) -> f64 {
        let order = 2 * j + 1;
        let basis = &setup.basis;
        let mut s = self.remainder.jump(order);
        for (k, qk) in self.q.iter().enumerate() {
            s -= qk * basis.newton_chi[k].jump(order);
        }
        self.psi_site * self.omega_n * s / setup.eta().powi(order as i32)
    }

    /// `[ψ̃^{(k)}]` at `site + η` (right minus left); zero for `k < d`.
    pub fn jump_at_eta(&self, setup: &VpawSetup, k: usize) -> f64 {
        let basis = &setup.basis;
        if k < setup.params.d {
            return 0.0;
        }
        let s: f64 = self
            .newton_coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let poly: f64 = basis
                    .newton_pseudo
                    .row(j)
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * crate::setup::even_monomial_deriv(i, k, 1.0))
                    .sum();
                c * (basis.newton_chi[j].deriv(1.0, k) - poly)
            })
            .sum();
        s / setup.eta().powi(k as i32)
    }
}

fn expansion_for(pair: &AnalyticEigenpair, setup: &VpawSetup) -> Result<LocalExpansion> {
    local_expansion(pair.energy, pair.value(setup.site), setup)
}

/// `[ψ̃^{(2j+1)}]` at the site of `setup`.
pub fn jump_at_zero(pair: &AnalyticEigenpair, setup: &VpawSetup, j: usize) -> Result<f64> {
    if j > 6 {
        return Err(Error::InvalidParams(format!("jump order 2j+1 with j = {j} > 6")));
    }
    Ok(expansion_for(pair, setup)?.jump_at_site(setup, j))
}

/// The same jump from the atomic-indexed identity
/// `-Z ((-E)^j ψ(s) - Σ c_l (-ε_l)^j φ_l(s))`. Loses digits as η shrinks.
pub fn jump_at_zero_direct(pair: &AnalyticEigenpair, setup: &VpawSetup, j: usize) -> Result<f64> {
    let c = expansion_coeffs(pair, setup)?;
    let jj = j as i32;
    let mut s = (-pair.energy).powi(jj) * pair.value(setup.site);
    for (cl, phi) in c.original.iter().zip(&setup.atomics) {
        s -= cl * (-phi.eps).powi(jj) * phi.value_at_site;
    }
    Ok(-setup.z * s)
}

/// `[ψ̃^{(k)}]` at `site + η`.
pub fn jump_at_eta(pair: &AnalyticEigenpair, setup: &VpawSetup, k: usize) -> Result<f64> {
    Ok(expansion_for(pair, setup)?.jump_at_eta(setup, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpReport {
    pub eta: f64,
    pub site: f64,
    pub coeffs: SiteCoefficients,
    /// `(2j+1, [ψ̃^{(2j+1)}]_site)` for `j = 0..=j_max`.
    pub jumps_at_zero: Vec<(usize, f64)>,
    /// `(k, [ψ̃^{(k)}]_{site+η})` for `k = d..=2d-2`.
    pub jumps_at_eta: Vec<(usize, f64)>,
}

pub fn jump_report(pair: &AnalyticEigenpair, setup: &VpawSetup, j_max: usize) -> Result<JumpReport> {
    let exp = expansion_for(pair, setup)?;
    let d = setup.params.d;
    Ok(JumpReport {
        eta: setup.eta(),
        site: setup.site,
        coeffs: expansion_coeffs(pair, setup)?,
        jumps_at_zero: (0..=j_max.min(6)).map(|j| (2 * j + 1, exp.jump_at_site(setup, j))).collect(),
        jumps_at_eta: (d..=(2 * d - 2).max(d)).map(|k| (k, exp.jump_at_eta(setup, k))).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares line through `(log η, log v)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(Error::BadFitInput(format!("need at least 4 points, got {}", points.len())));
    }
    for (i, &(x, v)) in points.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveValue { eta: x, value: v });
        }
        if !(x > 0.0) {
            return Err(Error::BadFitInput(format!("abscissa {x} is not positive")));
        }
        if points[..i].iter().any(|&(y, _)| y == x) {
            return Err(Error::BadFitInput(format!("repeated abscissa {x}")));
        }
    }
    Ok(fit_loglog(points))
}

fn fit_loglog(points: &[(f64, f64)]) -> SlopeFit {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    SlopeFit {
        slope,
        intercept,
        r2: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
    }
}

/// Two-point fit used for gaps and short windows; `fit_slope` needs four points.
pub fn fit_slope_loose(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::BadFitInput("need at least 2 points".into()));
    }
    if let Some(&(x, v)) = points.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::NonPositiveValue { eta: x, value: v });
    }
    Ok(fit_loglog(points))
}
