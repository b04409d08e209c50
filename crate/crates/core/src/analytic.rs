//! Exact spectrum of the periodic double-Dirac Hamiltonian
//! `H = -d²/dx² - Z0 Σ δ_k - Za Σ δ_{k+a}` and of the single-site atomic operator.
//!
//! Eigenfunctions are stored as piecewise `cosh/sinh` (E < 0) or `cos/sin`
//! (E > 0) combinations on `[0, a]` and `[a, 1]`.

use crate::error::{Error, Result};
use crate::quadrature::{composite_nodes, GaussRule};

/// Smooth periodic perturbation `W(x) = A sin(2π f x + φ0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothPotential {
    pub amplitude: f64,
    pub frequency: u32,
    pub phase: f64,
}

impl SmoothPotential {
    pub fn new(amplitude: f64, frequency: u32, phase: f64) -> Result<Self> {
        if frequency < 1 || !amplitude.is_finite() || !phase.is_finite() {
            return Err(Error::InvalidParams(format!(
                "smooth potential needs f >= 1 and finite amplitude/phase (A = {amplitude}, f = {frequency})"
            )));
        }
        Ok(Self {
            amplitude,
            frequency,
            phase,
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        self.amplitude * (2.0 * std::f64::consts::PI * self.frequency as f64 * x + self.phase).sin()
    }

    /// Coefficients `(c, s)` with `W = c cos(2π f x) + s sin(2π f x)`.
    pub fn cos_sin_coeffs(&self) -> (f64, f64) {
        (
            self.amplitude * self.phase.sin(),
            self.amplitude * self.phase.cos(),
        )
    }
}

/// Parameters of the periodic Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub z0: f64,
    pub za: f64,
    pub a: f64,
    pub w: Option<SmoothPotential>,
}

impl ModelParams {
    pub fn new(z0: f64, za: f64, a: f64) -> Result<Self> {
        let p = Self {
            z0,
            za,
            a,
            w: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_potential(mut self, w: SmoothPotential) -> Self {
        self.w = Some(w);
        self
    }

    /// The configuration used throughout the numerical experiments.
    pub fn reference() -> Self {
        Self {
            z0: 10.0,
            za: 10.0,
            a: 0.4,
            w: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::InvalidParams(format!("a = {} not in (0,1)", self.a)));
        }
        // zero strengths are accepted as the free limit (used by degenerate checks)
        if !(self.z0 >= 0.0 && self.za >= 0.0) || !self.z0.is_finite() || !self.za.is_finite() {
            return Err(Error::InvalidParams(format!(
                "Dirac strengths must be nonnegative, got Z0 = {}, Za = {}",
                self.z0, self.za
            )));
        }
        Ok(())
    }

    /// Sites and strengths, site 0 first.
    pub fn sites(&self) -> [(f64, f64); 2] {
        [(0.0, self.z0), (self.a, self.za)]
    }

    pub fn potential_at(&self, x: f64) -> f64 {
        self.w.map_or(0.0, |w| w.value(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    NegativeEnergy,
    PositiveEnergy,
}

/// One-sided limit selector at a singular point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Classical derivative of `cosh(ωx)`/`cos(ωx)` (`even = true`) or
/// `sinh(ωx)`/`sin(ωx)` (`even = false`).
fn piece_deriv(branch: Branch, even: bool, omega: f64, x: f64, order: u32) -> f64 {
    let scale = omega.powi(order as i32);
    let arg = omega * x;
    match branch {
        Branch::NegativeEnergy => {
            let use_cosh = even == (order % 2 == 0);
            scale * if use_cosh { arg.cosh() } else { arg.sinh() }
        }
        Branch::PositiveEnergy => {
            let shift = if even { 0 } else { 3 };
            let v = match (order + shift) % 4 {
                0 => arg.cos(),
                1 => -arg.sin(),
                2 => -arg.cos(),
                _ => arg.sin(),
            };
            scale * v
        }
    }
}

/// Secular function whose positive zeros give the spectral parameters ω
/// (`E = -ω²` on the negative branch, `E = ω²` on the positive one).
///
/// Both branches are `ω² (2 - tr M(ω))` with `M` the one-period transfer matrix,
/// so `f(0) = 0` and the sign of the `Z0 Za` term is the same on both branches.
/// `1 - cos ω` is evaluated as `2 sin²(ω/2)` so that roots inside narrow gaps near
/// `ω = 2πk` keep their digits.
pub fn secular_value(omega: f64, params: &ModelParams, branch: Branch) -> f64 {
    let (z0, za, a) = (params.z0, params.za, params.a);
    let b = 1.0 - a;
    let w2 = omega * omega;
    match branch {
        Branch::NegativeEnergy => {
            -4.0 * w2 * (0.5 * omega).sinh().powi(2) + (z0 + za) * omega * omega.sinh()
                - z0 * za * (a * omega).sinh() * (b * omega).sinh()
        }
        Branch::PositiveEnergy => {
            4.0 * w2 * (0.5 * omega).sin().powi(2) + (z0 + za) * omega * omega.sin()
                - z0 * za * (a * omega).sin() * (b * omega).sin()
        }
    }
}

/// `d/dω` of [`secular_value`].
pub fn secular_derivative(omega: f64, params: &ModelParams, branch: Branch) -> f64 {
    let (z0, za, a) = (params.z0, params.za, params.a);
    let b = 1.0 - a;
    let w2 = omega * omega;
    match branch {
        Branch::NegativeEnergy => {
            -8.0 * omega * (0.5 * omega).sinh().powi(2) - 2.0 * w2 * omega.sinh()
                + (z0 + za) * (omega.sinh() + omega * omega.cosh())
                - z0 * za
                    * (a * (a * omega).cosh() * (b * omega).sinh()
                        + b * (a * omega).sinh() * (b * omega).cosh())
        }
        Branch::PositiveEnergy => {
            8.0 * omega * (0.5 * omega).sin().powi(2)
                + 2.0 * w2 * omega.sin()
                + (z0 + za) * (omega.sin() + omega * omega.cos())
                - z0 * za
                    * (a * (a * omega).cos() * (b * omega).sin()
                        + b * (a * omega).sin() * (b * omega).cos())
        }
    }
}

/// Bisection down to `tol` followed by bracket-safe Newton polishing.
fn refine_root(
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let (fx, dfx) = (f(x), df(x));
        if dfx == 0.0 || !dfx.is_finite() {
            break;
        }
        let next = x - fx / dfx;
        if next >= lo - tol && next <= hi + tol && f(next).abs() <= fx.abs() {
            x = next;
        }
    }
    x
}

/// Sign-change scan of `f` on `(start, end]` with a uniform step.
fn scan_brackets(f: &dyn Fn(f64) -> f64, start: f64, end: f64, step: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut x0 = start;
    let mut f0 = f(x0);
    let n = ((end - start) / step).ceil() as usize;
    for i in 1..=n {
        let x1 = (start + i as f64 * step).min(end);
        let f1 = f(x1);
        if f1 == 0.0 {
            // exact hit: bracket it tightly
            out.push((x1 - 1e-3 * step, x1 + 1e-3 * step));
        } else if f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            out.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// One exact eigenpair of the double-Dirac Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticEigenpair {
    pub branch: Branch,
    pub omega: f64,
    pub energy: f64,
    /// `(A1, B1, A2, B2)` after normalization. Each piece is centered at its midpoint `m`,
    /// `A cosh(ω(x-m)) + B sinh(ω(x-m))`, so no term is much larger than the values at
    /// the sites and localized states keep full precision.
    pub coeffs: [f64; 4],
    /// Factor applied to the raw nullvector to reach unit L² norm.
    pub norm: f64,
    pub params: ModelParams,
}

/// Residuals of the defining conditions of an [`AnalyticEigenpair`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenpairResiduals {
    pub secular: f64,
    pub secular_scale: f64,
    pub continuity_a: f64,
    pub continuity_0: f64,
    pub jump_a: f64,
    pub jump_0: f64,
    pub norm_defect: f64,
}

impl EigenpairResiduals {
    /// Checks against the tolerances `1e-12` (secular, continuity, norm) and `1e-10` (jumps).
    pub fn all_ok(&self) -> bool {
        self.secular <= 1e-12 * self.secular_scale
            && self.continuity_a <= 1e-12
            && self.continuity_0 <= 1e-12
            && self.jump_a <= 1e-10
            && self.jump_0 <= 1e-10
            && self.norm_defect <= 1e-12
    }
}

impl AnalyticEigenpair {
    fn piece(&self, x: f64, order: u32, right_piece: bool) -> f64 {
        let [a1, b1, a2, b2] = self.coeffs;
        let a = self.params.a;
        let (ca, cb, x) = if right_piece {
            (a2, b2, x - 0.5 * (1.0 + a))
        } else {
            (a1, b1, x - 0.5 * a)
        };
        ca * piece_deriv(self.branch, true, self.omega, x, order)
            + cb * piece_deriv(self.branch, false, self.omega, x, order)
    }

    /// `order`-th derivative at `x` (reduced mod 1). At `x = 0` or `x = a` a side is required.
    pub fn eval(&self, x: f64, order: u32, side: Option<Side>) -> Result<f64> {
        let x = x.rem_euclid(1.0);
        let a = self.params.a;
        if x == 0.0 {
            return match side {
                None => Err(Error::SideRequired { x }),
                Some(Side::Right) => Ok(self.piece(0.0, order, false)),
                Some(Side::Left) => Ok(self.piece(1.0, order, true)),
            };
        }
        if x == a {
            return match side {
                None => Err(Error::SideRequired { x }),
                Some(Side::Left) => Ok(self.piece(a, order, false)),
                Some(Side::Right) => Ok(self.piece(a, order, true)),
            };
        }
        Ok(self.piece(x, order, x > a))
    }

    /// Value at a point where the function is continuous (singular points included).
    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, 0, Some(Side::Right)).expect("side given")
    }

    /// Right-minus-left jump of the `order`-th derivative at a singular point.
    pub fn jump(&self, x: f64, order: u32) -> f64 {
        self.eval(x, order, Some(Side::Right)).expect("side given")
            - self.eval(x, order, Some(Side::Left)).expect("side given")
    }

    pub fn residuals(&self) -> EigenpairResiduals {
        let p = &self.params;
        let v0 = self.value(0.0);
        let va = self.value(p.a);
        let left0 = self.eval(0.0, 0, Some(Side::Left)).unwrap();
        let lefta = self.eval(p.a, 0, Some(Side::Left)).unwrap();
        let righta = self.eval(p.a, 0, Some(Side::Right)).unwrap();
        // ψ has unit norm, so 1 is the natural floor for the scales
        let vscale = v0.abs().max(va.abs()).max(1.0);
        let d0 = self.eval(0.0, 1, Some(Side::Right)).unwrap().abs()
            + self.eval(0.0, 1, Some(Side::Left)).unwrap().abs();
        let da = self.eval(p.a, 1, Some(Side::Right)).unwrap().abs()
            + self.eval(p.a, 1, Some(Side::Left)).unwrap().abs();
        let jscale0 = d0.max(p.z0 * v0.abs()).max(1.0);
        let jscalea = da.max(p.za * va.abs()).max(1.0);
        EigenpairResiduals {
            secular: secular_value(self.omega, p, self.branch).abs(),
            secular_scale: 1.0 + secular_derivative(self.omega, p, self.branch).abs(),
            continuity_a: (lefta - righta).abs() / vscale.max(lefta.abs()),
            continuity_0: (v0 - left0).abs() / vscale.max(left0.abs()),
            jump_a: (self.jump(p.a, 1) + p.za * va).abs() / jscalea,
            jump_0: (self.jump(0.0, 1) + p.z0 * v0).abs() / jscale0,
            norm_defect: (self.norm_squared() - 1.0).abs(),
        }
    }

    /// ∫₀¹ ψ² by composite Gauss-Legendre on each smooth piece.
    pub fn norm_squared(&self) -> f64 {
        self.inner(self)
    }

    /// `∫₀¹ ψ φ` for two pairs of the same model and energy.
    pub fn inner(&self, other: &AnalyticEigenpair) -> f64 {
        let rule = GaussRule::new(32);
        let a = self.params.a;
        let panels = 1 + (self.omega.max(other.omega) / 8.0).ceil() as usize;
        let mut total = 0.0;
        for (lo, hi, right) in [(0.0, a, false), (a, 1.0, true)] {
            for (x, w) in composite_nodes(&rule, lo, hi, panels) {
                total += w * self.piece(x, 0, right) * other.piece(x, 0, right);
            }
        }
        total
    }
}

/// Rows of the homogeneous system for `(A1, B1, A2, B2)`: continuity at `a`,
/// continuity at `1 ≡ 0`, jump at `a`, jump at `0`.
pub fn coefficient_system(omega: f64, params: &ModelParams, branch: Branch) -> [[f64; 4]; 4] {
    let (z0, za, a) = (params.z0, params.za, params.a);
    let c = |x: f64, n: u32| piece_deriv(branch, true, omega, x, n);
    let s = |x: f64, n: u32| piece_deriv(branch, false, omega, x, n);
    // local coordinates of the piece ends: left piece (-h, h), right piece (-k, k)
    let (h, k) = (0.5 * a, 0.5 * (1.0 - a));
    [
        [c(h, 0), s(h, 0), -c(-k, 0), -s(-k, 0)],
        [c(-h, 0), s(-h, 0), -c(k, 0), -s(k, 0)],
        [
            -c(h, 1) + za * c(h, 0),
            -s(h, 1) + za * s(h, 0),
            c(-k, 1),
            s(-k, 1),
        ],
        [
            c(-h, 1) + z0 * c(-h, 0),
            s(-h, 1) + z0 * s(-h, 0),
            -c(k, 1),
            -s(k, 1),
        ],
    ]
}

/// Complete-pivoting elimination of the 4×4 system.
struct Eliminated {
    m: [[f64; 4]; 4],
    col_perm: [usize; 4],
    pivots: [f64; 4],
}

fn eliminate(sys: [[f64; 4]; 4]) -> Eliminated {
    let mut m = sys;
    for row in m.iter_mut() {
        let s = row.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    let mut col_perm = [0usize, 1, 2, 3];
    let mut pivots = [0.0_f64; 4];
    for k in 0..4 {
        let (mut pi, mut pj, mut best) = (k, k, -1.0);
        for (i, row) in m.iter().enumerate().skip(k) {
            for (j, v) in row.iter().enumerate().skip(k) {
                if v.abs() > best {
                    best = v.abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        m.swap(k, pi);
        for row in m.iter_mut() {
            row.swap(k, pj);
        }
        col_perm.swap(k, pj);
        pivots[k] = m[k][k];
        if k == 3 || m[k][k] == 0.0 {
            continue;
        }
        for i in k + 1..4 {
            let l = m[i][k] / m[k][k];
            for j in k..4 {
                m[i][j] -= l * m[k][j];
            }
        }
    }
    Eliminated { m, col_perm, pivots }
}

impl Eliminated {
    /// Back substitution through the first `rank` pivot rows with the trailing
    /// permuted unknowns set to `free`.
    fn solve(&self, rank: usize, free: &[f64]) -> [f64; 4] {
        let mut y = [0.0; 4];
        y[rank..].copy_from_slice(free);
        for i in (0..rank).rev() {
            let s: f64 = (i + 1..4).map(|j| self.m[i][j] * y[j]).sum();
            y[i] = if self.m[i][i] != 0.0 { -s / self.m[i][i] } else { 0.0 };
        }
        let mut x = [0.0; 4];
        for (k, &c) in self.col_perm.iter().enumerate() {
            x[c] = y[k];
        }
        x
    }

    /// `|p_k| / |p_1|`.
    fn pivot_ratio(&self, k: usize) -> f64 {
        self.pivots[k].abs() / self.pivots[0].abs().max(f64::MIN_POSITIVE)
    }
}

fn energy_of(omega: f64, branch: Branch) -> f64 {
    match branch {
        Branch::NegativeEnergy => -omega * omega,
        Branch::PositiveEnergy => omega * omega,
    }
}

/// Unit-norm pair from raw coefficients, signed so that the first non-negligible
/// of `(ψ(0), ψ'(0+))` is positive.
fn normalized_pair(omega: f64, params: &ModelParams, branch: Branch, raw: [f64; 4]) -> AnalyticEigenpair {
    let mut pair = AnalyticEigenpair {
        branch,
        omega,
        energy: energy_of(omega, branch),
        coeffs: raw,
        norm: 1.0,
        params: *params,
    };
    let n2 = pair.norm_squared();
    let mut scale = 1.0 / n2.sqrt();
    let (v0, d0) = (pair.piece(0.0, 0, false), pair.piece(0.0, 1, false));
    let lead = if v0.abs() > 1e-12 * n2.sqrt() { v0 } else { d0 };
    if lead < 0.0 {
        scale = -scale;
    }
    pair.coeffs = raw.map(|c| c * scale);
    pair.norm = scale.abs();
    pair
}

fn build_pair(omega: f64, params: &ModelParams, branch: Branch) -> Result<Option<AnalyticEigenpair>> {
    let el = eliminate(coefficient_system(omega, params, branch));
    if el.pivot_ratio(2) < 1e-8 {
        return Err(Error::DegenerateSystem { omega });
    }
    if el.pivot_ratio(3) > 1e-7 {
        // the scan found a sign change that is not an eigenvalue
        return Ok(None);
    }
    Ok(Some(normalized_pair(omega, params, branch, el.solve(3, &[1.0]))))
}

/// Both eigenpairs of a double eigenvalue (a closed gap), L²-orthonormal.
/// `None` when the system does not have a two-dimensional nullspace at `omega`.
fn build_double_pair(omega: f64, params: &ModelParams) -> Option<[AnalyticEigenpair; 2]> {
    let branch = Branch::PositiveEnergy;
    let el = eliminate(coefficient_system(omega, params, branch));
    if el.pivot_ratio(1) < 1e-8 || el.pivot_ratio(2) > 1e-7 {
        return None;
    }
    let first = normalized_pair(omega, params, branch, el.solve(2, &[1.0, 0.0]));
    let raw = el.solve(2, &[0.0, 1.0]);
    let second = normalized_pair(omega, params, branch, raw);
    // Gram-Schmidt in L², coefficients are linear in the function
    let overlap = first.inner(&second);
    let coeffs: [f64; 4] = std::array::from_fn(|i| second.coeffs[i] - overlap * first.coeffs[i]);
    Some([first, normalized_pair(omega, params, branch, coeffs)])
}

/// Lowest `n_eigs` exact eigenpairs of the pure double-Dirac model, sorted by energy.
pub fn solve_spectrum(params: &ModelParams, n_eigs: usize) -> Result<Vec<AnalyticEigenpair>> {
    params.validate()?;
    if params.w.is_some() {
        return Err(Error::Unsupported(
            "no closed-form spectrum with a smooth potential; use the finite-element reference".into(),
        ));
    }
    if n_eigs == 0 {
        return Err(Error::InvalidParams("n_eigs must be >= 1".into()));
    }
    let step = 0.05_f64.min(std::f64::consts::PI / 8.0);
    let tol = 1e-14;
    let mut pairs = Vec::new();
    if params.z0 == 0.0 && params.za == 0.0 {
        // free limit: the constant at E = 0 sits at ω = 0, outside both scans
        pairs.push(normalized_pair(0.0, params, Branch::PositiveEnergy, [1.0, 0.0, 1.0, 0.0]));
    }

    let neg = |w: f64| secular_value(w, params, Branch::NegativeEnergy);
    let dneg = |w: f64| secular_derivative(w, params, Branch::NegativeEnergy);
    // for ω beyond max(Z0, Za) + 2 the e^ω(ω - Z/2)² term dominates and f stays negative
    let neg_max = params.z0.max(params.za) + params.z0.min(params.za) + 4.0;
    for (lo, hi) in scan_brackets(&neg, step * 1e-3, neg_max, step) {
        let w = refine_root(&neg, &dneg, lo, hi, tol);
        if let Some(p) = build_pair(w, params, Branch::NegativeEnergy)? {
            pairs.push(p);
        }
    }

    let pos = |w: f64| secular_value(w, params, Branch::PositiveEnergy);
    let dpos = |w: f64| secular_derivative(w, params, Branch::PositiveEnergy);
    let g = |w: f64| pos(w) / (w * w);
    let dg = |w: f64| dpos(w) / (w * w) - 2.0 * pos(w) / (w * w * w);
    let no_derivative = |_: f64| f64::NAN;
    let wanted = n_eigs + 4;
    let mut start = step * 1e-3;
    let mut positive = Vec::new();
    let chunk = 8.0 * std::f64::consts::PI;
    let limit = 2.0 * std::f64::consts::PI * (wanted as f64 + 8.0) + chunk;
    while pairs.len() + positive.len() < wanted {
        let end = start + chunk;
        if end > limit {
            return Err(Error::RootBracketFailure {
                what: format!("{wanted} eigenvalues"),
                omega_max: end,
            });
        }
        // g = 2 - tr M is monotone between its critical points, which alternate
        // between bands and gaps. Each monotone piece holds at most one root, however
        // close the two edges of a gap are.
        let crit: Vec<f64> = scan_brackets(&dg, start, end, step)
            .into_iter()
            .map(|(lo, hi)| refine_root(&dg, &no_derivative, lo, hi, tol))
            .collect();
        let mut knots = vec![start];
        knots.extend(&crit);
        knots.push(end);
        let mut candidates = Vec::new();
        let mut bracketed = vec![false; knots.len() - 1];
        for (i, w) in knots.windows(2).enumerate() {
            if (g(w[0]) < 0.0) != (g(w[1]) < 0.0) {
                candidates.push(refine_root(&pos, &dpos, w[0], w[1], tol));
                bracketed[i] = true;
            }
        }
        // a gap that closes: g touches zero at a critical point without changing sign
        for (i, &c) in crit.iter().enumerate() {
            if !bracketed[i] && !bracketed[i + 1] && g(c).abs() <= 1e-10 {
                candidates.push(c);
            }
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * y.max(1.0));
        for r in candidates {
            match build_pair(r, params, Branch::PositiveEnergy) {
                Ok(Some(p)) => positive.push(p),
                Ok(None) => {}
                Err(Error::DegenerateSystem { omega }) => match build_double_pair(omega, params) {
                    Some(both) => positive.extend(both),
                    None => return Err(Error::DegenerateSystem { omega }),
                },
                Err(e) => return Err(e),
            }
        }
        start = end;
    }
    pairs.extend(positive);
    pairs.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    pairs.truncate(n_eigs);
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicBranch {
    CoshBranch,
    CosBranch,
}

/// Even eigenfunction of the single-site operator `-d²/dx² - Z Σ δ_{site+k}`:
/// `cosh(ω(u - 1/2))` or `cos(ω(u - 1/2))` with `u = (x - site) mod 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicFunction {
    pub omega: f64,
    pub eps: f64,
    pub branch: AtomicBranch,
    pub site: f64,
    pub z: f64,
    pub value_at_site: f64,
}

impl AtomicFunction {
    fn local(&self, u: f64, order: u32) -> f64 {
        let arg = self.omega * (u - 0.5);
        let scale = self.omega.powi(order as i32);
        match self.branch {
            AtomicBranch::CoshBranch => {
                scale * if order % 2 == 0 { arg.cosh() } else { arg.sinh() }
            }
            AtomicBranch::CosBranch => {
                scale
                    * match order % 4 {
                        0 => arg.cos(),
                        1 => -arg.sin(),
                        2 => -arg.cos(),
                        _ => arg.sin(),
                    }
            }
        }
    }

    /// `order`-th derivative at `x`; a side is required at the site itself.
    pub fn eval(&self, x: f64, order: u32, side: Option<Side>) -> Result<f64> {
        let u = (x - self.site).rem_euclid(1.0);
        if u == 0.0 {
            return match side {
                None => Err(Error::SideRequired { x }),
                Some(Side::Right) => Ok(self.local(0.0, order)),
                Some(Side::Left) => Ok(self.local(1.0, order)),
            };
        }
        Ok(self.local(u, order))
    }

    /// Derivative in the local offset `t = x - site` with `t ∈ [-1/2, 1/2]`, using the
    /// right limit at `t = 0`. Skips the mod-1 reduction, which keeps full precision
    /// for tiny offsets.
    pub fn eval_offset(&self, t: f64, order: u32) -> f64 {
        if t >= 0.0 {
            self.local(t, order)
        } else {
            self.local(1.0 + t, order)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, 0, Some(Side::Right)).expect("side given")
    }

    /// Residual of `[φ']_site + Z φ(site)`.
    pub fn jump_residual(&self) -> f64 {
        let j = self.local(0.0, 1) - self.local(1.0, 1);
        j + self.z * self.local(0.0, 0)
    }
}

/// `[φ']_0 + Z φ(0)` for the closed forms: `-2ω sinh(ω/2) + Z cosh(ω/2)` on the cosh
/// branch and `2ω sin(ω/2) + Z cos(ω/2)` on the cos branch.
fn atomic_residual(branch: AtomicBranch, z: f64, w: f64) -> f64 {
    match branch {
        AtomicBranch::CoshBranch => -2.0 * w * (w / 2.0).sinh() + z * (w / 2.0).cosh(),
        AtomicBranch::CosBranch => 2.0 * w * (w / 2.0).sin() + z * (w / 2.0).cos(),
    }
}

fn atomic_residual_derivative(branch: AtomicBranch, z: f64, w: f64) -> f64 {
    let h = w / 2.0;
    match branch {
        AtomicBranch::CoshBranch => -2.0 * h.sinh() - w * h.cosh() + 0.5 * z * h.sinh(),
        AtomicBranch::CosBranch => 2.0 * h.sin() + w * h.cos() - 0.5 * z * h.sin(),
    }
}

/// The cosh-branch function followed by the `n - 1` lowest cos-branch even functions.
pub fn atomic_spectrum(z: f64, n: usize, site: f64) -> Result<Vec<AtomicFunction>> {
    if !(z > 0.0) || n == 0 {
        return Err(Error::InvalidParams(format!(
            "atomic spectrum needs Z > 0 and N >= 1 (Z = {z}, N = {n})"
        )));
    }
    let make = |branch: AtomicBranch, w: f64| {
        let (eps, v) = match branch {
            AtomicBranch::CoshBranch => (-w * w, (w / 2.0).cosh()),
            AtomicBranch::CosBranch => (w * w, (w / 2.0).cos()),
        };
        AtomicFunction {
            omega: w,
            eps,
            branch,
            site,
            z,
            value_at_site: v,
        }
    };

    let mut out = Vec::with_capacity(n);
    let cosh_r = |w: f64| atomic_residual(AtomicBranch::CoshBranch, z, w);
    let cosh_dr = |w: f64| atomic_residual_derivative(AtomicBranch::CoshBranch, z, w);
    // residual is Z > 0 at ω = 0 and eventually negative
    let mut hi = 1.0;
    while cosh_r(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::RootBracketFailure {
                what: "cosh-branch atomic function".into(),
                omega_max: hi,
            });
        }
    }
    let w0 = refine_root(&cosh_r, &cosh_dr, 0.0, hi, 1e-15 * hi);
    out.push(make(AtomicBranch::CoshBranch, w0));

    let cos_r = |w: f64| atomic_residual(AtomicBranch::CosBranch, z, w);
    let cos_dr = |w: f64| atomic_residual_derivative(AtomicBranch::CosBranch, z, w);
    for k in 1..n {
        // one root in ((2k-1)π, 2kπ) where tan(ω/2) < 0
        let lo = (2 * k - 1) as f64 * std::f64::consts::PI;
        let hi = 2.0 * k as f64 * std::f64::consts::PI;
        if (cos_r(lo) < 0.0) == (cos_r(hi) < 0.0) {
            return Err(Error::RootBracketFailure {
                what: format!("cos-branch atomic function {k}"),
                omega_max: hi,
            });
        }
        let w = refine_root(&cos_r, &cos_dr, lo, hi, 1e-15 * hi);
        out.push(make(AtomicBranch::CosBranch, w));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussRule;

    fn reference() -> ModelParams {
        ModelParams::reference()
    }

    #[test]
    fn secular_vanishes_at_origin() {
        let p = reference();
        assert!(secular_value(1e-9, &p, Branch::NegativeEnergy).abs() < 1e-15);
        assert!(secular_value(1e-9, &p, Branch::PositiveEnergy).abs() < 1e-15);
    }

    #[test]
    fn secular_at_two_pi() {
        let p = reference();
        let w = 2.0 * std::f64::consts::PI;
        // 1 - cos(2π) = 0 and sin(2π) = 0, leaving the Z0 Za term
        let expected = -p.z0 * p.za * (w * p.a).sin() * (w * (1.0 - p.a)).sin();
        let got = secular_value(w, &p, Branch::PositiveEnergy);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn negative_branch_has_two_sign_changes() {
        let p = reference();
        let f = |w: f64| secular_value(w, &p, Branch::NegativeEnergy);
        let mut changes = 0;
        let mut prev = f(1e-3);
        let mut w = 1e-3;
        while w < 20.0 {
            w += 1e-3;
            let cur = f(w);
            if (cur < 0.0) != (prev < 0.0) {
                changes += 1;
            }
            prev = cur;
        }
        assert_eq!(changes, 2);
    }

    #[test]
    fn spectrum_has_two_negative_levels() {
        let pairs = solve_spectrum(&reference(), 2).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs[0].energy < pairs[1].energy && pairs[1].energy < 0.0);
    }

    #[test]
    fn eigenpair_invariants_hold() {
        for pair in solve_spectrum(&reference(), 12).unwrap() {
            let r = pair.residuals();
            assert!(r.all_ok(), "E = {}: {r:?}", pair.energy);
        }
    }

    #[test]
    fn roots_are_nullvectors_of_coefficient_system() {
        for pair in solve_spectrum(&reference(), 10).unwrap() {
            let sys = coefficient_system(pair.omega, &pair.params, pair.branch);
            for row in sys {
                let r: f64 = row.iter().zip(pair.coeffs).map(|(a, c)| a * c).sum();
                let s: f64 = row.iter().zip(pair.coeffs).map(|(a, c)| (a * c).abs()).sum();
                assert!(r.abs() <= 1e-12 * s, "row residual {r} at E = {}", pair.energy);
            }
        }
    }

    #[test]
    fn rayleigh_quotient_matches_energy() {
        // independent quadrature of a(ψ,ψ) = ∫ψ'² - Z0 ψ(0)² - Za ψ(a)²
        let p = reference();
        let rule = GaussRule::new(60);
        for pair in solve_spectrum(&p, 10).unwrap() {
            let d = |x: f64| pair.eval(x, 1, None).unwrap();
            let v = |x: f64| pair.eval(x, 0, None).unwrap();
            let mut kin = 0.0;
            let mut mass = 0.0;
            for (lo, hi) in [(0.0, p.a), (p.a, 1.0)] {
                let panels = 8;
                let h = (hi - lo) / panels as f64;
                for k in 0..panels {
                    let (l, r) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
                    kin += rule.integrate(l, r, |x| d(x).powi(2));
                    mass += rule.integrate(l, r, |x| v(x).powi(2));
                }
            }
            let form = kin - p.z0 * pair.value(0.0).powi(2) - p.za * pair.value(p.a).powi(2);
            let rq = form / mass;
            assert!(
                (rq - pair.energy).abs() <= 1e-9 * pair.energy.abs(),
                "{rq} vs {}",
                pair.energy
            );
        }
    }

    #[test]
    fn negative_level_count_across_grid() {
        for z0 in [5.0, 10.0, 20.0] {
            for za in [5.0, 10.0, 20.0] {
                for a in [0.3, 0.4, 0.5] {
                    let p = ModelParams::new(z0, za, a).unwrap();
                    let pairs = solve_spectrum(&p, 4).unwrap();
                    let neg = pairs.iter().filter(|e| e.energy < 0.0).count();
                    // second bound level exists iff f''(0) < 0
                    let expected = if z0 + za < z0 * za * a * (1.0 - a) { 2 } else { 1 };
                    assert_eq!(neg, expected, "Z0={z0} Za={za} a={a}");
                }
            }
        }
    }

    #[test]
    fn symmetric_configuration_ground_state_has_half_period() {
        let p = ModelParams::new(10.0, 10.0, 0.5).unwrap();
        let g = &solve_spectrum(&p, 1).unwrap()[0];
        for i in 1..20 {
            let x = i as f64 * 0.0237;
            let (u, v) = (g.value(x), g.value(x + 0.5));
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn side_required_at_singularities() {
        let pair = &solve_spectrum(&reference(), 1).unwrap()[0];
        assert!(matches!(pair.eval(0.0, 1, None), Err(Error::SideRequired { .. })));
        assert!(matches!(pair.eval(0.4, 0, None), Err(Error::SideRequired { .. })));
        let jump = pair.jump(0.4, 1);
        assert!((jump + 10.0 * pair.value(0.4)).abs() < 1e-10 * jump.abs());
    }

    #[test]
    fn perturbed_model_is_refused() {
        let p = reference().with_potential(SmoothPotential::new(10.0, 1, 0.2).unwrap());
        assert!(matches!(solve_spectrum(&p, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn atomic_ordering_and_jumps() {
        let fs = atomic_spectrum(10.0, 4, 0.0).unwrap();
        assert_eq!(fs[0].branch, AtomicBranch::CoshBranch);
        assert!(fs[0].eps < 0.0);
        for w in fs.windows(2) {
            assert!(w[0].eps < w[1].eps);
        }
        for f in &fs {
            assert!(f.value_at_site.abs() > 1e-3);
            let scale = f.z * f.value_at_site.abs();
            assert!(f.jump_residual().abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn atomic_cosh_root_from_bisection() {
        let z = 10.0;
        let f = &atomic_spectrum(z, 1, 0.0).unwrap()[0];
        // residual computed from one-sided closed-form derivatives
        let r = |w: f64| {
            let phi = AtomicFunction { omega: w, ..*f };
            phi.jump_residual()
        };
        let (mut lo, mut hi) = (1.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (r(mid) > 0.0) == (r(lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((f.omega - lo).abs() < 1e-12);
    }

    #[test]
    fn atomic_weak_form_holds() {
        // ∫φ'v' - Z φ(0) v(0) = ε ∫φ v for smooth periodic v
        let rule = GaussRule::new(40);
        for z in [3.0, 10.0] {
            for f in atomic_spectrum(z, 4, 0.0).unwrap() {
                for j in 0..20 {
                    let (k, ph, c) = (1 + (j % 5) as i32, 0.3 * j as f64, 1.0 + 0.1 * j as f64);
                    let tpk = 2.0 * std::f64::consts::PI * k as f64;
                    let v = |x: f64| c + (tpk * x + ph).cos();
                    let dv = |x: f64| -tpk * (tpk * x + ph).sin();
                    let mut lhs = 0.0;
                    let mut mass = 0.0;
                    let mut scale = 0.0;
                    for p in 0..8 {
                        let (l, r) = (p as f64 / 8.0, (p + 1) as f64 / 8.0);
                        let l = if p == 0 { 0.0 } else { l };
                        lhs += rule.integrate(l, r, |x| f.eval(x.max(1e-300), 1, Some(Side::Right)).unwrap() * dv(x));
                        scale += rule.integrate(l, r, |x| (f.eval(x.max(1e-300), 1, Some(Side::Right)).unwrap() * dv(x)).abs());
                        mass += rule.integrate(l, r, |x| f.value(x) * v(x));
                    }
                    lhs -= z * f.value(0.0) * v(0.0);
                    let rhs = f.eps * mass;
                    let tol = 1e-9 * (scale + z * f.value(0.0).abs() * v(0.0).abs() + rhs.abs());
                    assert!((lhs - rhs).abs() <= tol, "{lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn atomic_levels_appear_in_weak_second_site_limit() {
        let p = ModelParams::new(10.0, 1e-9, 0.4).unwrap();
        let spec = solve_spectrum(&p, 8).unwrap();
        for f in atomic_spectrum(10.0, 3, 0.0).unwrap() {
            let nearest = spec
                .iter()
                .map(|e| (e.energy - f.eps).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-6 * f.eps.abs().max(1.0), "eps = {}", f.eps);
        }
    }

    #[test]
    fn cos_branch_satisfies_ode() {
        let f = atomic_spectrum(10.0, 3, 0.0).unwrap()[2];
        for x in [0.1, 0.33, 0.77] {
            let d2 = f.eval(x, 2, None).unwrap();
            assert!((d2 + f.omega.powi(2) * f.value(x)).abs() < 1e-10 * d2.abs().max(1.0));
        }
    }

    #[test]
    fn cosh_branch_even_about_half() {
        let f = atomic_spectrum(10.0, 1, 0.0).unwrap()[0];
        assert!(f.eval(0.5, 1, None).unwrap().abs() < 1e-14);
    }
}
