//! Galerkin matrices of `H`, `H̃ = (Id+T)* H (Id+T)` and `S̃ = (Id+T)*(Id+T)` in the
//! real trigonometric basis, and a matrix-free application of `H̃`.
//!
//! `T = Σ_sites Σ_i g_i ⟨p̃_i, ·⟩` with `g_i = χ_i - P_i` supported in the window, so
//! both transformed matrices are low-rank updates of `H` and `I`:
//! `H̃ = H + X P̃ᵀ + P̃ Xᵀ + P̃ G_H P̃ᵀ`, `S̃ = I + D P̃ᵀ + P̃ Dᵀ + P̃ G_S P̃ᵀ`.
//! The window integrals against basis functions only need the cosine transforms
//! `∫ f(u) cos(2πku) du` of even functions, computed once per site.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::analytic::ModelParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::{composite_nodes, GaussRule};
use crate::setup::VpawSetup;

/// Real orthonormal basis `{1, √2 cos(2πkx), √2 sin(2πkx)}`, `k = 1..=(M-1)/2`.
///
/// Index `0` is the constant, `2k-1` the cosine and `2k` the sine of frequency `k`,
/// so the basis of size `M` is a prefix of every larger one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigBasis {
    m: usize,
}

impl TrigBasis {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m % 2 == 0 {
            return Err(Error::InvalidParams(format!("basis size must be odd, got {m}")));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_freq(&self) -> usize {
        (self.m - 1) / 2
    }

    pub fn freq(&self, idx: usize) -> usize {
        idx.div_ceil(2)
    }

    fn is_sine(idx: usize) -> bool {
        idx > 0 && idx % 2 == 0
    }

    pub fn value(&self, idx: usize, x: f64) -> f64 {
        let k = self.freq(idx) as f64;
        match idx {
            0 => 1.0,
            _ if Self::is_sine(idx) => SQRT_2 * (2.0 * PI * k * x).sin(),
            _ => SQRT_2 * (2.0 * PI * k * x).cos(),
        }
    }

    pub fn deriv(&self, idx: usize, x: f64) -> f64 {
        let k = self.freq(idx) as f64;
        let w = 2.0 * PI * k;
        match idx {
            0 => 0.0,
            _ if Self::is_sine(idx) => SQRT_2 * w * (w * x).cos(),
            _ => -SQRT_2 * w * (w * x).sin(),
        }
    }

    pub fn values_at(&self, x: f64) -> Vec<f64> {
        (0..self.m).map(|i| self.value(i, x)).collect()
    }

    /// Coefficient of `cos(2πku)` in `b_idx(s + u)`.
    pub fn even_coeff(&self, idx: usize, s: f64) -> f64 {
        let k = self.freq(idx) as f64;
        match idx {
            0 => 1.0,
            _ if Self::is_sine(idx) => SQRT_2 * (2.0 * PI * k * s).sin(),
            _ => SQRT_2 * (2.0 * PI * k * s).cos(),
        }
    }

    /// `b_idx = Σ β e^{2πipx}` as at most two `(p, β)` pairs.
    pub(crate) fn modes(&self, idx: usize) -> Vec<(i64, Complex64)> {
        let k = self.freq(idx) as i64;
        let h = SQRT_2 / 2.0;
        match idx {
            0 => vec![(0, Complex64::new(1.0, 0.0))],
            _ if Self::is_sine(idx) => vec![(k, Complex64::new(0.0, -h)), (-k, Complex64::new(0.0, h))],
            _ => vec![(k, Complex64::new(h, 0.0)), (-k, Complex64::new(h, 0.0))],
        }
    }

    /// Index of the basis function with frequency `k` (cosine or sine), if present.
    fn index_of(&self, k: usize, sine: bool) -> Option<usize> {
        let idx = match (k, sine) {
            (0, false) => 0,
            (0, true) => return None,
            (k, false) => 2 * k - 1,
            (k, true) => 2 * k,
        };
        (idx < self.m).then_some(idx)
    }
}

/// `W = Σ w_τ e^{2πiτfx}` for `τ = ±1`.
fn potential_modes(params: &ModelParams) -> Vec<(i64, Complex64)> {
    match params.w {
        None => Vec::new(),
        Some(w) => {
            let f = w.frequency as i64;
            let e = Complex64::from_polar(w.amplitude, w.phase) / Complex64::new(0.0, 2.0);
            vec![(f, e), (-f, e.conj())]
        }
    }
}

/// `∫_0^1 W b_m b_n`, exact.
fn potential_entry(basis: &TrigBasis, modes_w: &[(i64, Complex64)], m: usize, n: usize) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for &(pw, cw) in modes_w {
        for (pm, cm) in basis.modes(m) {
            for (pn, cn) in basis.modes(n) {
                if pw + pm + pn == 0 {
                    s += cw * cm * cn;
                }
            }
        }
    }
    s.re
}

/// Matrix of `a(u, v) = ∫ u'v' - Z0 u(0)v(0) - Za u(a)v(a) + ∫ W u v`.
pub fn assemble_h(params: &ModelParams, basis: &TrigBasis) -> Matrix {
    let m = basis.len();
    let mut h = Matrix::zeros(m, m);
    for i in 0..m {
        let w = 2.0 * PI * basis.freq(i) as f64;
        h[(i, i)] = w * w;
    }
    for (site, z) in params.sites() {
        if z == 0.0 {
            continue;
        }
        let b = basis.values_at(site);
        for i in 0..m {
            for j in 0..m {
                h[(i, j)] -= z * b[i] * b[j];
            }
        }
    }
    let modes_w = potential_modes(params);
    if let Some(w) = params.w {
        let f = w.frequency as usize;
        for i in 0..m {
            let k = basis.freq(i);
            let mut partners = vec![k + f, k.abs_diff(f)];
            partners.dedup();
            for kn in partners {
                for sine in [false, true] {
                    if let Some(j) = basis.index_of(kn, sine) {
                        h[(i, j)] += potential_entry(basis, &modes_w, i, j);
                    }
                }
            }
        }
    }
    h
}

/// Quadrature controls for the window integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Gauss-Legendre nodes per panel.
    pub panel_nodes: usize,
    /// Panels per wavelength of the highest frequency.
    pub panels_per_wave: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            panel_nodes: 24,
            panels_per_wave: 2.0,
        }
    }
}

/// Low-rank factors over both sites; column `i` belongs to site `i / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    /// `⟨p̃_i, b_m⟩`
    pub ptilde: Matrix,
    /// `a(b_m, g_i)`
    pub x: Matrix,
    /// `a(g_i, g_j)`
    pub gh: Matrix,
    /// `⟨g_i, g_j⟩`
    pub gs: Matrix,
    /// `⟨g_i, b_m⟩`
    pub d: Matrix,
}

/// One site's window data sampled on `[0, η]`.
struct SiteSamples {
    nodes: Vec<(f64, f64)>,
    g: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
}

fn sample_site(setup: &VpawSetup, max_freq: usize, opts: &AssemblyOptions) -> SiteSamples {
    let eta = setup.eta();
    let rule = GaussRule::new(opts.panel_nodes);
    let waves = max_freq as f64 * eta;
    let panels = (waves * opts.panels_per_wave).ceil().max(2.0) as usize;
    let nodes = composite_nodes(&rule, 0.0, eta, panels);
    let n = setup.n();
    let mut g = vec![Vec::with_capacity(nodes.len()); n];
    let mut dg = vec![Vec::with_capacity(nodes.len()); n];
    let mut p = vec![Vec::with_capacity(nodes.len()); n];
    let mut pv = vec![0.0; n];
    for &(u, _) in &nodes {
        setup.projectors.values(u, &mut pv);
        for i in 0..n {
            g[i].push(setup.g(i, u, 0));
            dg[i].push(setup.g(i, u, 1));
            p[i].push(pv[i]);
        }
    }
    SiteSamples { nodes, g, dg, p }
}

/// `C_k[f] = ∫_{-η}^{η} f cos(2πku)` for even `f` and `S_k[f'] = ∫_{-η}^{η} f' ∂_u cos(2πku)`,
/// `k = 0..=k_max`, for every sampled function.
fn cosine_transforms(samples: &SiteSamples, k_max: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = samples.g.len();
    let mut cg = vec![vec![0.0; k_max + 1]; n];
    let mut cp = vec![vec![0.0; k_max + 1]; n];
    let mut kg = vec![vec![0.0; k_max + 1]; n];
    for (q, &(u, w)) in samples.nodes.iter().enumerate() {
        let theta = 2.0 * PI * u;
        let (s1, c1) = theta.sin_cos();
        // cos(kθ), sin(kθ) by the angle-addition recurrence
        let (mut c, mut s) = (1.0, 0.0);
        let w2 = 2.0 * w;
        for k in 0..=k_max {
            let kk = 2.0 * PI * k as f64;
            for i in 0..n {
                cg[i][k] += w2 * samples.g[i][q] * c;
                cp[i][k] += w2 * samples.p[i][q] * c;
                kg[i][k] -= w2 * kk * samples.dg[i][q] * s;
            }
            let (cn, sn) = (c * c1 - s * s1, s * c1 + c * s1);
            c = cn;
            s = sn;
        }
    }
    (cg, cp, kg)
}

/// Complete Galerkin data of the VPAW generalized eigenproblem.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub basis: TrigBasis,
    pub params: ModelParams,
    pub h: Matrix,
    pub htilde: Matrix,
    pub stilde: Matrix,
    pub lowrank: LowRank,
}

/// Assembles `H̃` and `S̃` for the given per-site setups (empty slice: `T = 0`).
pub fn assemble_vpaw(
    params: &ModelParams,
    setups: &[VpawSetup],
    basis: &TrigBasis,
    opts: &AssemblyOptions,
) -> Result<OperatorPair> {
    check_overlap(params, setups)?;
    Ok(assemble_vpaw_unchecked(params, setups, basis, opts))
}

/// [`assemble_vpaw`] without the window-overlap guard. Overlapping windows make
/// `Id + T` lose injectivity; the failure then surfaces in the eigensolver.
pub fn assemble_vpaw_unchecked(
    params: &ModelParams,
    setups: &[VpawSetup],
    basis: &TrigBasis,
    opts: &AssemblyOptions,
) -> OperatorPair {
    let h = assemble_h(params, basis);
    let lowrank = lowrank_factors(params, setups, basis, opts);
    let htilde = sandwich(&h, &lowrank.x, &lowrank.ptilde, &lowrank.gh);
    let stilde = sandwich(&Matrix::identity(basis.len()), &lowrank.d, &lowrank.ptilde, &lowrank.gs);
    OperatorPair {
        basis: *basis,
        params: *params,
        h,
        htilde,
        stilde,
        lowrank,
    }
}

/// Rejects setups whose windows intersect or reach another site.
pub fn check_overlap(params: &ModelParams, setups: &[VpawSetup]) -> Result<()> {
    for (i, a) in setups.iter().enumerate() {
        for b in &setups[i + 1..] {
            let gap = (a.site - b.site).rem_euclid(1.0);
            let dist = gap.min(1.0 - gap);
            if a.eta() + b.eta() >= dist {
                return Err(Error::OverlapError {
                    eta: a.eta().max(b.eta()),
                    limit: dist / 2.0,
                });
            }
        }
        for (site, z) in params.sites() {
            let gap = (a.site - site).rem_euclid(1.0);
            let dist = gap.min(1.0 - gap);
            if z != 0.0 && dist > 0.0 && dist <= a.eta() {
                return Err(Error::OverlapError {
                    eta: a.eta(),
                    limit: dist,
                });
            }
        }
    }
    Ok(())
}

/// `A + F Pᵀ + P Fᵀ + P G Pᵀ`.
fn sandwich(a: &Matrix, f: &Matrix, p: &Matrix, g: &Matrix) -> Matrix {
    let m = a.rows();
    let r = p.cols();
    let pg = p.matmul(g);
    let mut out = a.clone();
    for i in 0..m {
        let (fi, pi, pgi) = (f.row(i), p.row(i), pg.row(i));
        let row = out.row_mut(i);
        for j in 0..m {
            let (fj, pj) = (&f.as_slice()[j * r..(j + 1) * r], &p.as_slice()[j * r..(j + 1) * r]);
            let mut s = 0.0;
            for k in 0..r {
                s += fi[k] * pj[k] + pi[k] * fj[k] + pgi[k] * pj[k];
            }
            row[j] += s;
        }
    }
    out
}

pub fn lowrank_factors(params: &ModelParams, setups: &[VpawSetup], basis: &TrigBasis, opts: &AssemblyOptions) -> LowRank {
    let m = basis.len();
    let r: usize = setups.iter().map(|s| s.n()).sum();
    let modes_w = potential_modes(params);
    let f = params.w.map_or(0, |w| w.frequency as usize);
    let k_max = basis.max_freq() + f;
    let mut lr = LowRank {
        ptilde: Matrix::zeros(m, r),
        x: Matrix::zeros(m, r),
        gh: Matrix::zeros(r, r),
        gs: Matrix::zeros(r, r),
        d: Matrix::zeros(m, r),
    };
    let mut col0 = 0;
    for setup in setups {
        let n = setup.n();
        let s = setup.site;
        let z = setup.z;
        let samples = sample_site(setup, k_max.max(1), opts);
        let (cg, cp, kg) = cosine_transforms(&samples, k_max);
        let g_site: Vec<f64> = (0..n).map(|i| setup.g(i, 0.0, 0)).collect();
        for mi in 0..m {
            let k = basis.freq(mi);
            let e = basis.even_coeff(mi, s);
            let bs = basis.value(mi, s);
            for i in 0..n {
                let c = col0 + i;
                lr.ptilde[(mi, c)] = e * cp[i][k];
                lr.d[(mi, c)] = e * cg[i][k];
                let mut xv = e * kg[i][k] - z * bs * g_site[i];
                for &(pw, cw) in &modes_w {
                    for (pm, cm) in basis.modes(mi) {
                        let p = pw + pm;
                        let phase = Complex64::from_polar(1.0, 2.0 * PI * p as f64 * s);
                        xv += (cw * cm * phase).re * cg[i][p.unsigned_abs() as usize];
                    }
                }
                lr.x[(mi, c)] = xv;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut gs = 0.0;
                let mut gh = 0.0;
                for (q, &(u, w)) in samples.nodes.iter().enumerate() {
                    let gg = samples.g[i][q] * samples.g[j][q];
                    gs += 2.0 * w * gg;
                    gh += 2.0 * w * samples.dg[i][q] * samples.dg[j][q];
                    if params.w.is_some() {
                        gh += w * (params.potential_at(s + u) + params.potential_at(s - u)) * gg;
                    }
                }
                gh -= z * g_site[i] * g_site[j];
                lr.gs[(col0 + i, col0 + j)] = gs;
                lr.gh[(col0 + i, col0 + j)] = gh;
            }
        }
        col0 += n;
    }
    lr
}

/// `H̃ x` without forming `H̃`: diagonal kinetic part, rank-one Dirac terms,
/// `W` through a `2M`-point FFT, and the low-rank corrections.
pub struct MatrixFreeHtilde {
    basis: TrigBasis,
    params: ModelParams,
    kinetic: Vec<f64>,
    site_values: Vec<(f64, Vec<f64>)>,
    weights: Vec<f64>,
    lowrank: LowRank,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl MatrixFreeHtilde {
    pub fn new(pair: &OperatorPair) -> Self {
        Self::from_parts(pair.basis, pair.params, pair.lowrank.clone())
    }

    pub fn from_parts(basis: TrigBasis, params: ModelParams, lowrank: LowRank) -> Self {
        let m = basis.len();
        let kinetic = (0..m).map(|i| (2.0 * PI * basis.freq(i) as f64).powi(2)).collect();
        let site_values = params
            .sites()
            .iter()
            .filter(|(_, z)| *z != 0.0)
            .map(|&(s, z)| (z, basis.values_at(s)))
            .collect();
        let ng = 2 * m;
        let weights = (0..ng).map(|j| params.potential_at(j as f64 / ng as f64)).collect();
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(ng),
            inverse: planner.plan_fft_inverse(ng),
            basis,
            params,
            kinetic,
            site_values,
            weights,
            lowrank,
        }
    }

    /// `∫ W (Σ x_m b_m) b_n` for all `n`.
    fn apply_potential(&self, x: &[f64], out: &mut [f64]) {
        let m = self.basis.len();
        let ng = 2 * m;
        let h = SQRT_2 / 2.0;
        let mut buf = vec![Complex64::new(0.0, 0.0); ng];
        buf[0] = Complex64::new(x[0], 0.0);
        for k in 1..=self.basis.max_freq() {
            let c = Complex64::new(h * x[2 * k - 1], -h * x[2 * k]);
            buf[k] = c;
            buf[ng - k] = c.conj();
        }
        self.inverse.process(&mut buf);
        for (v, w) in buf.iter_mut().zip(&self.weights) {
            *v *= *w / ng as f64;
        }
        self.forward.process(&mut buf);
        out[0] += buf[0].re;
        for k in 1..=self.basis.max_freq() {
            out[2 * k - 1] += SQRT_2 * buf[k].re;
            out[2 * k] -= SQRT_2 * buf[k].im;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.kinetic.iter().zip(x).map(|(k, v)| k * v).collect();
        for (z, b) in &self.site_values {
            let bx: f64 = b.iter().zip(x).map(|(a, c)| a * c).sum();
            for (yi, bi) in y.iter_mut().zip(b) {
                *yi -= z * bi * bx;
            }
        }
        if self.params.w.is_some() {
            self.apply_potential(x, &mut y);
        }
        let lr = &self.lowrank;
        let px = lr.ptilde.tr_mat_vec(x);
        let xx = lr.x.tr_mat_vec(x);
        let ghpx = lr.gh.mat_vec(&px);
        let r = px.len();
        for (i, yi) in y.iter_mut().enumerate() {
            let (xr, pr) = (lr.x.row(i), lr.ptilde.row(i));
            let mut s = 0.0;
            for k in 0..r {
                s += xr[k] * px[k] + pr[k] * (xx[k] + ghpx[k]);
            }
            *yi += s;
        }
        y
    }
}

/// Convenience wrapper around [`MatrixFreeHtilde`].
pub fn apply_htilde(pair: &OperatorPair, x: &[f64]) -> Vec<f64> {
    MatrixFreeHtilde::new(pair).apply(x)
}
