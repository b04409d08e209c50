//! Error-curve models for the η and M sweeps.
//!
//! A V-shaped error curve is fitted as `v(η) = A η^p + B η^{-q}` in log space, so that
//! both asymptotic slopes come from all points of the curve instead of from short
//! windows at the ends, which the oscillations of the error in η make unreliable.

use crate::error::{Error, Result};
use crate::jumps::{fit_slope_loose, SlopeFit};
use crate::linalg::{solve, Matrix};

/// `log v = log(e^{α + p x} + e^{β - q x})` with `x = log η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRegimeFit {
    pub log_a: f64,
    /// Large-η slope `p`.
    pub increasing: f64,
    pub log_b: f64,
    /// Small-η slope `-q` (negative).
    pub decreasing: f64,
    /// Root mean square residual in natural-log units.
    pub rms: f64,
}

impl TwoRegimeFit {
    pub fn eval(&self, eta: f64) -> f64 {
        let x = eta.ln();
        (self.log_a + self.increasing * x).exp() + (self.log_b + self.decreasing * x).exp()
    }
}

/// Which term a family of curves shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharedTerm {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyFit {
    pub curves: Vec<TwoRegimeFit>,
    pub shared: SharedTerm,
    /// The common slope (`p`, or `-q` for a shared decreasing term).
    pub shared_slope: f64,
    pub rms: f64,
}

struct Layout {
    /// Per curve: parameter indices of `(α, p, β, q)`.
    idx: Vec<[usize; 4]>,
    n_params: usize,
}

impl Layout {
    fn new(curves: usize, shared: Option<SharedTerm>) -> Self {
        let idx = match shared {
            None => (0..curves).map(|c| [4 * c, 4 * c + 1, 4 * c + 2, 4 * c + 3]).collect(),
            Some(SharedTerm::Increasing) => (0..curves).map(|c| [0, 1, 2 + 2 * c, 3 + 2 * c]).collect(),
            Some(SharedTerm::Decreasing) => (0..curves).map(|c| [2 + 2 * c, 3 + 2 * c, 0, 1]).collect(),
        };
        let n_params = match shared {
            None => 4 * curves,
            Some(_) => 2 + 2 * curves,
        };
        Self { idx, n_params }
    }
}

type Curve = Vec<(f64, f64)>;

fn residuals(data: &[Curve], layout: &Layout, x: &[f64]) -> (Vec<f64>, Matrix) {
    let rows: usize = data.iter().map(|c| c.len()).sum();
    let mut r = Vec::with_capacity(rows);
    let mut jac = Matrix::zeros(rows, layout.n_params);
    let mut row = 0;
    for (c, curve) in data.iter().enumerate() {
        let [ia, ip, ib, iq] = layout.idx[c];
        for &(lx, ly) in curve {
            let s1 = x[ia] + x[ip] * lx;
            let s2 = x[ib] - x[iq] * lx;
            let m = s1.max(s2);
            let l = m + ((s1 - m).exp() + (s2 - m).exp()).ln();
            let (w1, w2) = ((s1 - l).exp(), (s2 - l).exp());
            r.push(l - ly);
            jac[(row, ia)] += w1;
            jac[(row, ip)] += w1 * lx;
            jac[(row, ib)] += w2;
            jac[(row, iq)] -= w2 * lx;
            row += 1;
        }
    }
    (r, jac)
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg-Marquardt with diagonal scaling.
fn levenberg_marquardt(data: &[Curve], layout: &Layout, mut x: Vec<f64>) -> (Vec<f64>, f64) {
    let n = layout.n_params;
    let (mut r, mut jac) = residuals(data, layout, &x);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let jt = jac.transpose();
        let jtj = jt.matmul(&jac);
        let g = jt.mat_vec(&r);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(step) = solve(&a, &neg) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let (rt, jt2) = residuals(data, layout, &trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct < c {
                let done = c - ct <= 1e-15 * c.max(1e-300);
                x = trial;
                r = rt;
                jac = jt2;
                c = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, c)
}

fn check_curve(points: &[(f64, f64)]) -> Result<Curve> {
    if points.len() < 6 {
        return Err(Error::BadFitInput(format!("two-regime fit needs at least 6 points, got {}", points.len())));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite abscissae"));
    for (i, &(x, v)) in sorted.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveValue { eta: x, value: v });
        }
        if !(x > 0.0) || (i > 0 && sorted[i - 1].0 == x) {
            return Err(Error::BadFitInput(format!("abscissa {x} is not positive and distinct")));
        }
    }
    let imin = argmin(&sorted);
    if imin == 0 || imin + 1 == sorted.len() {
        return Err(Error::BadFitInput("error minimum lies at the end of the grid".into()));
    }
    Ok(sorted.iter().map(|&(x, v)| (x.ln(), v.ln())).collect())
}

fn argmin(points: &[(f64, f64)]) -> usize {
    points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).expect("finite"))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// `(p, q)` seeds from straight lines on either side of the minimum (log data).
fn seed(curve: &Curve) -> (f64, f64) {
    let exp: Vec<(f64, f64)> = curve.iter().map(|&(x, y)| (x.exp(), y.exp())).collect();
    let m = argmin(&exp);
    let p = fit_slope_loose(&exp[m..]).map_or(4.0, |f| f.slope.max(0.5));
    let q = fit_slope_loose(&exp[..=m]).map_or(2.0, |f| (-f.slope).max(0.5));
    (p, q)
}

fn start(data: &[Curve], layout: &Layout, p: f64, q: f64) -> Vec<f64> {
    let mut x = vec![0.0; layout.n_params];
    for (c, curve) in data.iter().enumerate() {
        let [ia, ip, ib, iq] = layout.idx[c];
        let (first, last) = (curve[0], curve[curve.len() - 1]);
        x[ip] = p;
        x[iq] = q;
        x[ia] = last.1 - p * last.0;
        x[ib] = first.1 + q * first.0;
    }
    x
}

fn best_fit(data: &[Curve], layout: &Layout) -> (Vec<f64>, f64) {
    let (sp, sq) = seed(&data[0]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for p in [sp, 4.0, 8.0, 12.0] {
        for q in [sq, 2.0, 5.0, 8.0] {
            let (x, c) = levenberg_marquardt(data, layout, start(data, layout, p, q));
            let ok = layout.idx.iter().all(|i| x[i[1]] > 0.0 && x[i[3]] > 0.0);
            if ok && best.as_ref().is_none_or(|b| c < b.1) {
                best = Some((x, c));
            }
        }
    }
    best.unwrap_or_else(|| levenberg_marquardt(data, layout, start(data, layout, sp, sq)))
}

fn curve_fit(x: &[f64], idx: [usize; 4], rms: f64) -> TwoRegimeFit {
    TwoRegimeFit {
        log_a: x[idx[0]],
        increasing: x[idx[1]],
        log_b: x[idx[2]],
        decreasing: -x[idx[3]],
        rms,
    }
}

fn rms_of(data: &[Curve], layout: &Layout, x: &[f64], c: usize) -> f64 {
    let r = residuals(&data[c..=c], &Layout { idx: vec![layout.idx[c]], n_params: layout.n_params }, x).0;
    (cost(&r) / r.len() as f64).sqrt()
}

/// Fits one V-shaped curve `(η, v)`; needs at least 6 points and an interior minimum.
pub fn fit_two_regime(points: &[(f64, f64)]) -> Result<TwoRegimeFit> {
    let data = vec![check_curve(points)?];
    let layout = Layout::new(1, None);
    let (x, _) = best_fit(&data, &layout);
    Ok(curve_fit(&x, layout.idx[0], rms_of(&data, &layout, &x, 0)))
}

/// Joint fit of several curves sharing one of the two power-law terms.
pub fn fit_two_regime_family(curves: &[Vec<(f64, f64)>], shared: SharedTerm) -> Result<FamilyFit> {
    if curves.is_empty() {
        return Err(Error::BadFitInput("no curves".into()));
    }
    let data = curves.iter().map(|c| check_curve(c)).collect::<Result<Vec<_>>>()?;
    let layout = Layout::new(data.len(), Some(shared));
    let (x, c) = best_fit(&data, &layout);
    let rows: usize = data.iter().map(|d| d.len()).sum();
    let fits: Vec<_> = (0..data.len())
        .map(|i| curve_fit(&x, layout.idx[i], rms_of(&data, &layout, &x, i)))
        .collect();
    let shared_slope = match shared {
        SharedTerm::Increasing => fits[0].increasing,
        SharedTerm::Decreasing => fits[0].decreasing,
    };
    Ok(FamilyFit {
        curves: fits,
        shared,
        shared_slope,
        rms: (c / rows as f64).sqrt(),
    })
}

/// Straight-line fits over the `k` largest and the `k` smallest abscissae.
/// The large-η window is only reported when it lies right of the minimum,
/// and the small-η window when it lies left of it.
pub fn window_slopes(points: &[(f64, f64)], k: usize) -> (Option<SlopeFit>, Option<SlopeFit>) {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite abscissae"));
    if sorted.len() < k || k < 2 {
        return (None, None);
    }
    let m = argmin(&sorted);
    let n = sorted.len();
    let inc = (n - k > m).then(|| fit_slope_loose(&sorted[n - k..]).ok()).flatten();
    let dec = (k - 1 < m).then(|| fit_slope_loose(&sorted[..k]).ok()).flatten();
    (inc, dec)
}

/// Mean vertical gap per doubling between curves on a common grid,
/// `log10(v_M / v_2M)` averaged over the `k` smallest and the `k` largest abscissae.
/// `curves` are ordered by increasing M. Returns `(small_eta_gap, large_eta_gap)`.
pub fn doubling_gaps(curves: &[Vec<(f64, f64)>], k: usize) -> Result<(f64, f64)> {
    if curves.len() < 2 {
        return Err(Error::BadFitInput("need curves for at least two M".into()));
    }
    let n = curves[0].len();
    if k == 0 || 2 * k > n || curves.iter().any(|c| c.len() != n) {
        return Err(Error::BadFitInput("curves must share a grid of at least 2k points".into()));
    }
    let sorted: Vec<Curve> = curves
        .iter()
        .map(|c| {
            let mut s = c.clone();
            s.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
            s
        })
        .collect();
    let (mut small, mut large) = (0.0, 0.0);
    for pair in sorted.windows(2) {
        for i in 0..n {
            let (a, b) = (pair[0][i], pair[1][i]);
            if a.0 != b.0 {
                return Err(Error::BadFitInput("curves must share a grid".into()));
            }
            if !(a.1 > 0.0 && b.1 > 0.0) {
                return Err(Error::NonPositiveValue { eta: a.0, value: a.1.min(b.1) });
            }
            let g = (a.1 / b.1).log10();
            if i < k {
                small += g;
            }
            if i >= n - k {
                large += g;
            }
        }
    }
    let count = (k * (sorted.len() - 1)) as f64;
    Ok((small / count, large / count))
}
