//! Per-site VPAW data: pseudo wave functions, projectors and well-posedness checks.
//!
//! Everything lives in the local offset `u = x - site` and, for the polynomial
//! parts, in the scaled variable `t = u / η`.

use crate::analytic::{atomic_spectrum, AtomicFunction, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cond1, lower_inverse, singular_values, Lu, Matrix};
use crate::local::{chi_divided_difference, newton_weight, EvenSeries};
use crate::quadrature::GaussRule;

/// Nodes per half-window for the setup quadratures.
pub const SETUP_NODES: usize = 64;

const MATCHING_COND_LIMIT: f64 = 1e12;
const GRAM_COND_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpawParams {
    pub n: usize,
    pub d: usize,
    pub eta: f64,
}

impl VpawParams {
    pub fn new(n: usize, d: usize, eta: f64) -> Result<Self> {
        if n < 1 || d < n {
            return Err(Error::InvalidParams(format!("need d >= N >= 1, got N = {n}, d = {d}")));
        }
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::InvalidParams(format!("eta = {eta} must lie in (0, 1/2)")));
        }
        Ok(Self { n, d, eta })
    }

    /// Largest admissible η for two sites at 0 and `a`.
    pub fn overlap_limit(a: f64) -> f64 {
        (a / 2.0).min((1.0 - a) / 2.0)
    }

    pub fn check_disjoint(&self, a: f64) -> Result<()> {
        let limit = Self::overlap_limit(a);
        if self.eta >= limit {
            return Err(Error::OverlapError {
                eta: self.eta,
                limit,
            });
        }
        Ok(())
    }
}

/// Weight `ρ` on `[-1, 1]` used to build the projectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoKind {
    /// `1 - t²`
    #[default]
    Parabola,
    /// `cos²(πt/2)`
    CosSquared,
}

impl RhoKind {
    pub fn value(self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            RhoKind::Parabola => 1.0 - t * t,
            RhoKind::CosSquared => (std::f64::consts::FRAC_PI_2 * t).cos().powi(2),
        }
    }
}

/// `k`-th derivative of `t^{2j}`.
pub fn even_monomial_deriv(j: usize, k: usize, t: f64) -> f64 {
    let p = 2 * j;
    if k > p {
        return 0.0;
    }
    let falling: f64 = (0..k).map(|i| (p - i) as f64).product();
    falling * t.powi((p - k) as i32)
}

/// Even polynomial `Σ α_j t^{2j}` replacing an atomic function inside `|u| < η`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoFunction {
    pub site: f64,
    pub index: usize,
    pub eta: f64,
    pub poly: Vec<f64>,
    pub source: AtomicFunction,
}

impl PseudoFunction {
    /// `k`-th derivative of the polynomial in `t`.
    pub fn poly_deriv_t(&self, t: f64, k: usize) -> f64 {
        self.poly
            .iter()
            .enumerate()
            .map(|(j, a)| a * even_monomial_deriv(j, k, t))
            .sum()
    }

    /// `k`-th derivative in `u` of the polynomial branch (valid for any `u`).
    pub fn poly_deriv(&self, u: f64, k: usize) -> f64 {
        self.poly_deriv_t(u / self.eta, k) / self.eta.powi(k as i32)
    }

    /// `φ̃` at offset `u ∈ [-1/2, 1/2]`: the polynomial inside the window, `φ` outside.
    pub fn eval_offset(&self, u: f64, k: usize) -> f64 {
        if u.abs() < self.eta {
            self.poly_deriv(u, k)
        } else {
            self.source.eval_offset(u, k as u32)
        }
    }

    /// `g = φ - φ̃` at offset `u`; zero outside the window.
    pub fn g_offset(&self, u: f64, k: usize) -> f64 {
        if u.abs() < self.eta {
            self.source.eval_offset(u, k as u32) - self.poly_deriv(u, k)
        } else {
            0.0
        }
    }
}

/// Even polynomial coefficients matching `rhs[k] = P^{(k)}(1)` for `k < rhs.len()`.
fn match_even_poly(rhs: &[f64]) -> Result<Vec<f64>> {
    let d = rhs.len();
    let m = Matrix::from_fn(d, d, |k, j| even_monomial_deriv(j, k, 1.0));
    let cond = cond1(&m);
    if !(cond <= MATCHING_COND_LIMIT) {
        return Err(Error::IllConditioned {
            cond,
            limit: MATCHING_COND_LIMIT,
        });
    }
    let lu = Lu::new(&m);
    let mut poly = lu.solve(rhs);
    // one step of iterative refinement
    let r: Vec<f64> = (0..d)
        .map(|k| rhs[k] - (0..d).map(|j| m[(k, j)] * poly[j]).sum::<f64>())
        .collect();
    let dx = lu.solve(&r);
    poly.iter_mut().zip(dx).for_each(|(p, e)| *p += e);
    Ok(poly)
}

/// Matching system `P^{(k)}(1) = η^k φ^{(k)}(η)`, `k < d`.
pub fn build_pseudo(phi: &AtomicFunction, index: usize, params: &VpawParams) -> Result<PseudoFunction> {
    let eta = params.eta;
    let rhs: Vec<f64> = (0..params.d)
        .map(|k| eta.powi(k as i32) * phi.eval_offset(eta, k as u32))
        .collect();
    Ok(PseudoFunction {
        site: phi.site,
        index,
        eta,
        poly: match_even_poly(&rhs)?,
        source: *phi,
    })
}

/// `∫_0^1 ρ(t) t^n dt`.
pub fn rho_moment(rho: RhoKind, n: usize) -> f64 {
    match rho {
        RhoKind::Parabola => 1.0 / (n + 1) as f64 - 1.0 / (n + 3) as f64,
        RhoKind::CosSquared => GaussRule::new(SETUP_NODES).integrate(0.0, 1.0, |t| rho.value(t) * t.powi(n as i32)),
    }
}

/// Gram matrix `η ∫ ρ P_i P_j` on `[-1, 1]` for even polynomials given by rows of `alpha`.
pub fn weighted_gram(alpha: &Matrix, eta: f64, rho: RhoKind) -> Matrix {
    let d = alpha.cols();
    let moments: Vec<f64> = (0..2 * d - 1).map(|s| 2.0 * eta * rho_moment(rho, 2 * s)).collect();
    let w = Matrix::from_fn(d, d, |l, m| moments[l + m]);
    alpha.matmul(&w).matmul(&alpha.transpose())
}

/// Even polynomials `Σ_j alpha[(k, j)] t^{2j}` and their `t`-derivatives.
fn even_poly_t(alpha: &Matrix, k: usize, t: f64, order: usize) -> f64 {
    alpha
        .row(k)
        .iter()
        .enumerate()
        .map(|(j, a)| a * even_monomial_deriv(j, order, t))
        .sum()
}

/// A family `F_i = Σ_k mix[(i, k)] P_k` of pseudo-like polynomials in `t`,
/// where the rows of `alpha` are even monomial coefficients of the `P_k`.
///
/// Combining values instead of coefficients keeps the evaluation as accurate as
/// the individual `P_k`, even when the mixing matrix is large.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFamily {
    pub alpha: Matrix,
    pub mix: Matrix,
}

impl PolyFamily {
    pub fn plain(alpha: Matrix) -> Self {
        let n = alpha.rows();
        Self {
            alpha,
            mix: Matrix::identity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.mix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval_t(&self, i: usize, t: f64, order: usize) -> f64 {
        (0..self.alpha.rows())
            .map(|k| self.mix[(i, k)])
            .enumerate()
            .filter(|(_, m)| *m != 0.0)
            .map(|(k, m)| m * even_poly_t(&self.alpha, k, t, order))
            .sum()
    }

    pub fn mixed(&self, left: &Matrix) -> Self {
        Self {
            alpha: self.alpha.clone(),
            mix: left.matmul(&self.mix),
        }
    }
}

/// Well-conditioned basis of `span{φ_l}` on the window, with matched pseudo polynomials.
///
/// The construction goes through the divided differences `χ'_k = (2k)! χ[ν_0, …, ν_k]`,
/// `ν_l = ε_l η²` (the "Newton" family, free of cancellation even for tiny η), then
/// orthonormalizes the pseudo polynomials in the weighted inner product that defines
/// the projector Gram matrix. The working pairs `(χ_k, P_k)` span the same spaces as
/// `(φ_l, φ̃_l)`, so the operator `T` built from them is the same.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub eta: f64,
    pub z: f64,
    pub nodes: Vec<f64>,
    pub newton_chi: Vec<EvenSeries>,
    /// Rows hold the even coefficients of the Newton pseudo polynomials `P'_k(t)`.
    pub newton_pseudo: Matrix,
    pub newton_gram_cond: f64,
    /// Working family = `linv` · Newton family (lower triangular).
    pub linv: Matrix,
    pub pseudo: PolyFamily,
    /// `φ_l = Σ_k gauge[(l, k)] χ_k` inside the window.
    pub gauge: Matrix,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

impl LocalBasis {
    pub fn new(atomics: &[AtomicFunction], params: &VpawParams, rho: RhoKind) -> Result<Self> {
        let eta = params.eta;
        let z = atomics[0].z;
        let n = atomics.len();
        let nodes: Vec<f64> = atomics.iter().map(|a| a.eps * eta * eta).collect();
        let newton_chi: Vec<EvenSeries> = (0..n)
            .map(|k| chi_divided_difference(&nodes[..=k], z * eta, factorial(2 * k)))
            .collect();
        let mut newton_pseudo = Matrix::zeros(n, params.d);
        for (k, c) in newton_chi.iter().enumerate() {
            let rhs: Vec<f64> = (0..params.d).map(|j| c.deriv(1.0, j)).collect();
            newton_pseudo.row_mut(k).copy_from_slice(&match_even_poly(&rhs)?);
        }
        let newton = PolyFamily::plain(newton_pseudo.clone());
        let gram = quadrature_gram(&newton, eta, rho);
        let newton_gram_cond = cond1(&gram);
        if !(newton_gram_cond <= GRAM_COND_LIMIT) {
            return Err(Error::SingularGram { cond: newton_gram_cond });
        }
        let chol = cholesky(&gram).map_err(|_| Error::SingularGram { cond: newton_gram_cond })?;
        let linv = lower_inverse(&chol);
        let newton_gauge = Matrix::from_fn(n, n, |l, k| {
            if k > l {
                0.0
            } else {
                atomics[l].value_at_site * newton_weight(&nodes, k, nodes[l]) / factorial(2 * k)
            }
        });
        Ok(Self {
            eta,
            z,
            nodes,
            newton_chi,
            newton_pseudo,
            newton_gram_cond,
            pseudo: newton.mixed(&linv),
            linv,
            gauge: newton_gauge.matmul(&chol),
        })
    }

    pub fn len(&self) -> usize {
        self.newton_chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.newton_chi.is_empty()
    }

    fn chi_t(&self, k: usize, t: f64, order: usize) -> f64 {
        (0..=k).map(|j| self.linv[(k, j)] * self.newton_chi[j].deriv(t, order)).sum()
    }

    /// Working function `χ_k` at offset `u`, `order`-th `u`-derivative (right limit at 0).
    pub fn chi(&self, k: usize, u: f64, order: usize) -> f64 {
        self.chi_t(k, u / self.eta, order) / self.eta.powi(order as i32)
    }

    pub fn pseudo_t(&self, k: usize, t: f64, order: usize) -> f64 {
        self.pseudo.eval_t(k, t, order)
    }

    /// Polynomial branch `P_k(u/η)`, valid for any `u`.
    pub fn pseudo(&self, k: usize, u: f64, order: usize) -> f64 {
        self.pseudo_t(k, u / self.eta, order) / self.eta.powi(order as i32)
    }

    /// `g_k = χ_k - P_k` inside the window, zero outside.
    pub fn g(&self, k: usize, u: f64, order: usize) -> f64 {
        if u.abs() < self.eta {
            let t = u / self.eta;
            let s: f64 = (0..=k)
                .map(|j| {
                    self.linv[(k, j)]
                        * (self.newton_chi[j].deriv(t, order) - even_poly_t(&self.newton_pseudo, j, t, order))
                })
                .sum();
            s / self.eta.powi(order as i32)
        } else {
            0.0
        }
    }

    /// Right-minus-left jump of `g_k^{(order)}` at the site (only odd orders are nonzero).
    pub fn g_jump_at_site(&self, k: usize, order: usize) -> f64 {
        let s: f64 = (0..=k).map(|j| self.linv[(k, j)] * self.newton_chi[j].jump(order)).sum();
        s / self.eta.powi(order as i32)
    }
}

/// Gauss nodes/weights on `[-η, η]` split at 0, in the offset variable.
pub fn window_rule(eta: f64, nodes: usize) -> Vec<(f64, f64)> {
    let rule = GaussRule::new(nodes);
    let mut out: Vec<(f64, f64)> = rule.mapped(-eta, 0.0).collect();
    out.extend(rule.mapped(0.0, eta));
    out
}

/// Gram matrix `⟨ρ_η F_i, F_j⟩` by Gauss-Legendre quadrature (exact for polynomial ρ).
pub fn quadrature_gram(family: &PolyFamily, eta: f64, rho: RhoKind) -> Matrix {
    let n = family.len();
    let mut b = Matrix::zeros(n, n);
    let mut vals = vec![0.0; n];
    for (u, w) in window_rule(eta, SETUP_NODES) {
        let t = u / eta;
        for (i, v) in vals.iter_mut().enumerate() {
            *v = family.eval_t(i, t, 0);
        }
        let wr = w * rho.value(t);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] += wr * vals[i] * vals[j];
            }
        }
    }
    b
}

/// Dual projector family `p̃ = B⁻¹ p` with `p_i = ρ(u/η) φ̃_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    pub site: f64,
    pub eta: f64,
    pub b: Matrix,
    pub b_inv: Matrix,
    pub rho: RhoKind,
    pub duality_residual: f64,
    /// `p̃_i = ρ(t) · dual_i(t)`.
    pub dual: PolyFamily,
}

impl ProjectorSet {
    pub fn len(&self) -> usize {
        self.b.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `p̃_i` at offset `u`.
    pub fn value(&self, i: usize, u: f64) -> f64 {
        let t = u / self.eta;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        self.rho.value(t) * self.dual.eval_t(i, t, 0)
    }

    pub fn values(&self, u: f64, out: &mut [f64]) {
        let t = u / self.eta;
        if t.abs() >= 1.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let r = self.rho.value(t);
        let alpha = &self.dual.alpha;
        let base: Vec<f64> = (0..alpha.rows()).map(|k| even_poly_t(alpha, k, t, 0)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = r * (0..base.len()).map(|k| self.dual.mix[(i, k)] * base[k]).sum::<f64>();
        }
    }
}

/// Projectors dual to the polynomial family `pseudos`.
pub fn build_projectors(pseudos: &PolyFamily, site: f64, eta: f64, rho: RhoKind) -> Result<ProjectorSet> {
    if pseudos.is_empty() {
        return Err(Error::InvalidParams("no pseudo functions".into()));
    }
    let b = quadrature_gram(pseudos, eta, rho);
    let cond = cond1(&b);
    if !(cond <= GRAM_COND_LIMIT) {
        return Err(Error::SingularGram { cond });
    }
    let lu = Lu::new(&b);
    if lu.is_singular() {
        return Err(Error::SingularGram { cond: f64::INFINITY });
    }
    let b_inv = lu.inverse();
    let dual = pseudos.mixed(&b_inv);
    let mut set = ProjectorSet {
        site,
        eta,
        b,
        b_inv,
        rho,
        duality_residual: 0.0,
        dual,
    };
    set.duality_residual = duality_residual(&set, pseudos);
    Ok(set)
}

/// `max |⟨p̃_i, φ̃_j⟩ - δ_ij|` by quadrature of the stored functions.
pub fn duality_residual(set: &ProjectorSet, pseudos: &PolyFamily) -> f64 {
    let n = set.len();
    let mut pv = vec![0.0; n];
    let mut gram = Matrix::zeros(n, pseudos.len());
    for (u, w) in window_rule(set.eta, SETUP_NODES) {
        set.values(u, &mut pv);
        for j in 0..pseudos.len() {
            let fj = w * pseudos.eval_t(j, u / set.eta, 0);
            for i in 0..n {
                gram[(i, j)] += pv[i] * fj;
            }
        }
    }
    gram.sub(&Matrix::identity(n)).max_abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellPosednessReport {
    /// `Ã_kl = ⟨p̃_k, φ_l⟩`
    pub atilde: Matrix,
    pub cond_atilde: f64,
    pub cond_b: f64,
    pub invertible: bool,
}

/// `Ã_kl = ⟨p̃_k, f_l⟩` by split quadrature, where `f(l, u)` evaluates `f_l` at offset `u`.
pub fn check_wellposed(
    projectors: &ProjectorSet,
    n_funcs: usize,
    f: impl Fn(usize, f64) -> f64,
) -> WellPosednessReport {
    let n = projectors.len();
    let nodes = window_rule(projectors.eta, SETUP_NODES);
    let mut pv = vec![0.0; n];
    let mut atilde = Matrix::zeros(n, n_funcs);
    for &(u, w) in &nodes {
        projectors.values(u, &mut pv);
        for l in 0..n_funcs {
            let fl = w * f(l, u);
            for k in 0..n {
                atilde[(k, l)] += pv[k] * fl;
            }
        }
    }
    let sv = singular_values(&atilde);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    WellPosednessReport {
        cond_atilde: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        cond_b: cond1(&projectors.b),
        invertible: smin > 1e-12 * smax,
        atilde,
    }
}

/// Complete VPAW data for one site.
///
/// `atomics` and `pseudos` are the atomic-indexed family. The operator is built
/// from `basis` and `projectors`, an equivalent family in the divided-difference
/// gauge; `original_gram_cond` records how ill-conditioned the atomic-indexed Gram
/// matrix would have been.
#[derive(Debug, Clone, PartialEq)]
pub struct VpawSetup {
    pub params: VpawParams,
    pub site: f64,
    pub z: f64,
    pub atomics: Vec<AtomicFunction>,
    pub pseudos: Vec<PseudoFunction>,
    pub basis: LocalBasis,
    pub projectors: ProjectorSet,
    pub report: WellPosednessReport,
    pub original_gram_cond: f64,
}

impl VpawSetup {
    pub fn build(z: f64, site: f64, params: &VpawParams, rho: RhoKind) -> Result<Self> {
        let atomics = atomic_spectrum(z, params.n, site)?;
        Self::from_atomics(site, atomics, params, rho)
    }

    pub fn from_atomics(site: f64, atomics: Vec<AtomicFunction>, params: &VpawParams, rho: RhoKind) -> Result<Self> {
        if atomics.len() != params.n {
            return Err(Error::InvalidParams(format!(
                "expected {} atomic functions, got {}",
                params.n,
                atomics.len()
            )));
        }
        let pseudos = atomics
            .iter()
            .enumerate()
            .map(|(i, phi)| build_pseudo(phi, i, params))
            .collect::<Result<Vec<_>>>()?;
        let alpha = Matrix::from_fn(params.n, params.d, |i, j| pseudos[i].poly[j]);
        let original_gram_cond = cond1(&weighted_gram(&alpha, params.eta, rho));
        let basis = LocalBasis::new(&atomics, params, rho)?;
        let projectors = build_projectors(&basis.pseudo, site, params.eta, rho)?;
        let mut report = check_wellposed(&projectors, basis.len(), |l, u| basis.chi(l, u, 0));
        report.cond_b = original_gram_cond;
        Ok(Self {
            params: *params,
            site,
            z: atomics[0].z,
            atomics,
            pseudos,
            basis,
            projectors,
            report,
            original_gram_cond,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.len()
    }

    pub fn eta(&self) -> f64 {
        self.params.eta
    }

    /// Offset of `x` from the site, reduced to `[-1/2, 1/2)`.
    pub fn offset(&self, x: f64) -> f64 {
        (x - self.site + 0.5).rem_euclid(1.0) - 0.5
    }

    pub fn projector(&self, k: usize, u: f64) -> f64 {
        self.projectors.value(k, u)
    }

    pub fn g(&self, k: usize, u: f64, order: usize) -> f64 {
        self.basis.g(k, u, order)
    }
}

/// Setups for the sites of a model. A site with `Z = 0` has nothing to smooth and
/// gets no augmentation (`T = 0` there).
pub fn build_site_setups(params: &ModelParams, vp: &VpawParams, rho: RhoKind) -> Result<Vec<VpawSetup>> {
    params
        .sites()
        .iter()
        .filter(|(_, z)| *z != 0.0)
        .map(|&(site, z)| VpawSetup::build(z, site, vp, rho))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, d: usize, eta: f64) -> VpawSetup {
        VpawSetup::build(10.0, 0.0, &VpawParams::new(n, d, eta).unwrap(), RhoKind::Parabola).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(VpawParams::new(0, 1, 0.1).is_err());
        assert!(VpawParams::new(3, 2, 0.1).is_err());
        assert!(VpawParams::new(2, 2, 0.0).is_err());
        let p = VpawParams::new(2, 2, 0.2).unwrap();
        assert!(matches!(p.check_disjoint(0.4), Err(Error::OverlapError { .. })));
        assert!(VpawParams::new(2, 2, 0.19).unwrap().check_disjoint(0.4).is_ok());
    }

    #[test]
    fn constant_matching_for_d_one() {
        let phi = atomic_spectrum(10.0, 1, 0.0).unwrap()[0];
        let p = build_pseudo(&phi, 0, &VpawParams::new(1, 1, 0.1).unwrap()).unwrap();
        assert_eq!(p.poly.len(), 1);
        assert!((p.poly[0] - phi.eval_offset(0.1, 0)).abs() < 1e-15);
    }

    #[test]
    fn cosh_pseudo_matches_value_and_slope() {
        let phi = atomic_spectrum(10.0, 1, 0.0).unwrap()[0];
        let eta = 0.1;
        let p = build_pseudo(&phi, 0, &VpawParams::new(1, 2, eta).unwrap()).unwrap();
        let w = phi.omega;
        let v = (w * (eta - 0.5)).cosh();
        let dv = w * (w * (eta - 0.5)).sinh();
        assert!((p.poly_deriv(eta, 0) - v).abs() < 1e-12 * v.abs());
        assert!((p.poly_deriv(eta, 1) - dv).abs() < 1e-12 * dv.abs());
    }

    #[test]
    fn matching_holds_for_all_orders() {
        for (n, d) in [(2, 2), (3, 4), (5, 5), (4, 6)] {
            let s = setup(n, d, 0.1);
            for p in &s.pseudos {
                for k in 0..d {
                    let lhs = p.poly_deriv(0.1, k);
                    let rhs = p.source.eval_offset(0.1, k as u32);
                    assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "k={k}: {lhs} {rhs}");
                }
            }
            for k in 0..n {
                for j in 0..d {
                    let (lhs, rhs) = (s.basis.pseudo(k, 0.1, j), s.basis.chi(k, 0.1, j));
                    assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn pseudo_closeness_shrinks_with_eta() {
        let sup = |eta: f64| {
            let s = setup(3, 3, eta);
            let p = &s.pseudos[0];
            (0..=200)
                .map(|i| {
                    let u = eta * i as f64 / 200.0;
                    (p.poly_deriv(u, 0) - p.source.eval_offset(u, 0)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (sup(0.05), sup(0.025));
        assert!(b / a <= 0.75, "ratio {}", b / a);
    }

    #[test]
    fn gauge_reproduces_atomic_family() {
        for n in 1..=4 {
            let s = setup(n, n + 1, 0.15);
            for (l, phi) in s.atomics.iter().enumerate() {
                for i in 0..=20 {
                    let u = -0.15 + 0.3 * i as f64 / 20.0;
                    let (mut v, mut pv) = (0.0, 0.0);
                    for k in 0..n {
                        v += s.basis.gauge[(l, k)] * s.basis.chi(k, u, 0);
                        pv += s.basis.gauge[(l, k)] * s.basis.pseudo(k, u, 0);
                    }
                    let exact = phi.eval_offset(u, 0);
                    assert!((v - exact).abs() < 1e-11 * exact.abs().max(1.0), "l={l} u={u}");
                    let p_exact = s.pseudos[l].poly_deriv(u, 0);
                    assert!((pv - p_exact).abs() < 1e-9 * p_exact.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn single_projector_is_normalized() {
        let s = setup(1, 1, 0.1);
        let nodes = window_rule(0.1, SETUP_NODES);
        let norm: f64 = nodes
            .iter()
            .map(|&(u, w)| w * RhoKind::Parabola.value(u / 0.1) * s.basis.pseudo(0, u, 0).powi(2))
            .sum();
        let direct = RhoKind::Parabola.value(0.3) * s.basis.pseudo(0, 0.03, 0) / norm;
        assert!((s.projector(0, 0.03) - direct).abs() < 1e-13 * direct.abs());
    }

    #[test]
    fn duality_for_reference_setups() {
        let s = setup(2, 2, 0.1);
        assert!(s.projectors.duality_residual <= 1e-12);
        for rho in [RhoKind::Parabola, RhoKind::CosSquared] {
            let p = VpawParams::new(3, 4, 0.05).unwrap();
            let s = VpawSetup::build(10.0, 0.4, &p, rho).unwrap();
            assert!(s.projectors.duality_residual <= 1e-12, "{:?}", s.projectors.duality_residual);
        }
    }

    #[test]
    fn duality_across_grid() {
        for n in 1..=5 {
            for d in n..=(n + 3).min(6) {
                for i in 0..=4 {
                    let eta = 0.2 / 2f64.powi(i);
                    let s = setup(n, d, eta);
                    assert!(
                        s.projectors.duality_residual <= 1e-12,
                        "N={n} d={d} eta={eta}: {:e}",
                        s.projectors.duality_residual
                    );
                    assert!(s.report.invertible, "N={n} d={d} eta={eta}");
                }
            }
        }
    }

    #[test]
    fn duality_survives_small_eta() {
        let mut eta = 0.1;
        while eta >= 1e-3 {
            let s = setup(3, 3, eta);
            assert!(
                s.projectors.duality_residual <= 1e-11,
                "eta = {eta}: residual {}",
                s.projectors.duality_residual
            );
            eta /= 2.0;
        }
        assert!(setup(3, 3, 0.0125).original_gram_cond > 1e12);
    }

    #[test]
    fn projector_support_and_pseudo_agreement_outside() {
        let s = setup(3, 3, 0.1);
        for i in 0..100 {
            let u = -0.5 + i as f64 / 100.0;
            if u.abs() >= 0.1 {
                for k in 0..3 {
                    assert_eq!(s.projector(k, u), 0.0);
                    assert_eq!(s.g(k, u, 0), 0.0);
                    let p = &s.pseudos[k];
                    assert_eq!(p.eval_offset(u, 0), p.source.eval_offset(u, 0));
                    assert_eq!(p.g_offset(u, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn scaled_coefficients_stay_bounded() {
        for (n, d) in [(2, 2), (2, 4), (3, 3), (3, 5)] {
            let mut prev: Option<f64> = None;
            let mut eta = 0.2;
            while eta > 0.01 {
                let s = setup(n, d, eta);
                let m = s
                    .pseudos
                    .iter()
                    .flat_map(|p| p.poly.iter())
                    .fold(0.0_f64, |a, c| a.max(c.abs()));
                if let Some(p) = prev {
                    assert!(m / p <= 2.0, "N={n} d={d} eta={eta}: {m} vs {p}");
                }
                prev = Some(m);
                eta /= 2.0;
            }
        }
    }

    #[test]
    fn scaled_derivative_data_independent() {
        for n in 1..=4 {
            let atomics = atomic_spectrum(10.0, n, 0.0).unwrap();
            for eta in [0.2_f64, 0.1, 0.05, 0.0125] {
                let data = Matrix::from_fn(n, n, |i, k| eta.powi(k as i32) * atomics[i].eval_offset(eta, k as u32));
                let sv = singular_values(&data);
                assert!(*sv.last().unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn wellposed_reference_case() {
        let s = setup(2, 2, 0.1);
        assert!(s.report.invertible);
        let s1 = setup(1, 1, 0.1);
        assert_eq!(s1.report.atilde.rows(), 1);
        assert!(s1.report.invertible);
    }

    #[test]
    fn duplicated_atomic_function_breaks_invertibility() {
        let s = setup(2, 3, 0.1);
        let report = check_wellposed(&s.projectors, 2, |_, u| s.basis.chi(0, u, 0));
        assert!(!report.invertible);
    }

    #[test]
    fn offset_wraps_into_half_period() {
        let s = VpawSetup::build(10.0, 0.4, &VpawParams::new(1, 1, 0.1).unwrap(), RhoKind::Parabola).unwrap();
        assert!((s.offset(0.35) + 0.05).abs() < 1e-15);
        assert!((s.offset(0.95) + 0.45).abs() < 1e-15);
    }
}
