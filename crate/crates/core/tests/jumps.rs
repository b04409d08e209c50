use std::f64::consts::PI;

use vpaw::analytic::{solve_spectrum, AnalyticEigenpair, ModelParams, Side};
use vpaw::jumps::{expansion_coeffs, fit_slope, jump_at_eta, jump_at_zero, jump_report};
use vpaw::quadrature::{composite_nodes, GaussRule};
use vpaw::setup::{build_site_setups, RhoKind, VpawParams, VpawSetup};

fn ground() -> AnalyticEigenpair {
    solve_spectrum(&ModelParams::reference(), 1).unwrap().remove(0)
}

fn setups(n: usize, d: usize, eta: f64) -> Vec<VpawSetup> {
    build_site_setups(&ModelParams::reference(), &VpawParams::new(n, d, eta).unwrap(), RhoKind::Parabola).unwrap()
}

/// `ψ̃ = ψ - Σ c_k g_k` built from the working-gauge coefficients of each site.
struct Pseudo<'a> {
    pair: &'a AnalyticEigenpair,
    sites: Vec<(&'a VpawSetup, Vec<f64>)>,
}

impl<'a> Pseudo<'a> {
    fn new(pair: &'a AnalyticEigenpair, setups: &'a [VpawSetup]) -> Self {
        let sites = setups
            .iter()
            .map(|s| (s, expansion_coeffs(pair, s).unwrap().working))
            .collect();
        Self { pair, sites }
    }

    /// `order`-th derivative; `side` picks the limit at break points.
    fn eval(&self, x: f64, order: usize, side: Side) -> f64 {
        let mut v = self.pair.eval(x, order as u32, Some(side)).unwrap();
        for (s, c) in &self.sites {
            let eta = s.eta();
            let mut u = s.offset(x);
            if (u.abs() - eta).abs() < 1e-12 {
                u = eta.copysign(u);
            }
            let inside = match side {
                Side::Right => u >= -eta && u < eta,
                Side::Left => u > -eta && u <= eta,
            };
            if inside {
                let u = match (side, u) {
                    (Side::Right, u) if u == -eta => -eta * (1.0 - 1e-15),
                    (Side::Left, u) if u == eta => eta * (1.0 - 1e-15),
                    _ => u,
                };
                // g is even in u, so odd derivatives flip sign on the left
                let left = u < 0.0 || (u == 0.0 && side == Side::Left);
                for (k, ck) in c.iter().enumerate() {
                    let g = s.g(k, u.abs(), order);
                    v -= ck * if left && order % 2 == 1 { -g } else { g };
                }
            }
        }
        v
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (s, _) in &self.sites {
            let eta = s.eta();
            out.extend([s.site, (s.site + eta).rem_euclid(1.0), (s.site - eta).rem_euclid(1.0)]);
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// `∫ ψ̃ e^{-2πimx}` as `(re, im)`, piece by piece.
    fn fourier(&self, m: usize) -> (f64, f64) {
        let rule = GaussRule::new(24);
        let mut cuts = self.breakpoints();
        cuts.push(1.0);
        let (mut re, mut im) = (0.0, 0.0);
        let mut lo = 0.0;
        for &hi in &cuts {
            if hi > lo {
                let panels = ((hi - lo) * m as f64).ceil() as usize + 2;
                for (x, w) in composite_nodes(&rule, lo, hi, panels) {
                    let f = self.eval(x, 0, Side::Right);
                    let (s, c) = (2.0 * PI * m as f64 * x).sin_cos();
                    re += w * f * c;
                    im -= w * f * s;
                }
            }
            lo = hi;
        }
        (re, im)
    }

    /// Jump expansion `Σ_x Σ_{k<=k_max} [ψ̃^{(k)}]_x e^{-2πimx} / (2πim)^{k+1}`.
    fn expansion(&self, m: usize, k_max: usize) -> (f64, f64) {
        let w = 2.0 * PI * m as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for x in self.breakpoints() {
            let (s, c) = (w * x).sin_cos();
            for k in 0..=k_max {
                let jump = self.eval(x, k, Side::Right) - self.eval(x, k, Side::Left);
                // e^{-iwx} / (i w)^{k+1}
                let (pr, pi) = match (k + 1) % 4 {
                    0 => (1.0, 0.0),
                    1 => (0.0, -1.0),
                    2 => (-1.0, 0.0),
                    _ => (0.0, 1.0),
                };
                let mag = jump / w.powi(k as i32 + 1);
                re += mag * (c * pr + s * pi);
                im += mag * (pi * c - s * pr);
            }
        }
        (re, im)
    }
}

fn hypot(v: (f64, f64)) -> f64 {
    v.0.hypot(v.1)
}

#[test]
fn closed_form_jumps_match_pointwise_limits() {
    let pair = ground();
    let s = setups(3, 4, 0.08);
    let p = Pseudo::new(&pair, &s);
    let j0 = p.eval(0.0, 1, Side::Right) - p.eval(0.0, 1, Side::Left);
    assert!((j0 - jump_at_zero(&pair, &s[0], 0).unwrap()).abs() <= 1e-6 * j0.abs().max(1e-12));
    for k in 4..=6 {
        let x = 0.08;
        let je = p.eval(x, k, Side::Right) - p.eval(x, k, Side::Left);
        let want = jump_at_eta(&pair, &s[0], k).unwrap();
        assert!((je - want).abs() <= 1e-8 * want.abs(), "k={k}: {je} vs {want}");
    }
    // continuity and C^{d-1} matching
    assert!((p.eval(0.0, 0, Side::Right) - p.eval(0.0, 0, Side::Left)).abs() < 1e-12);
    for k in 0..4 {
        let je = p.eval(0.08, k, Side::Right) - p.eval(0.08, k, Side::Left);
        assert!(je.abs() <= 1e-9 * p.eval(0.08, k, Side::Right).abs().max(1.0), "k={k}: {je}");
        assert_eq!(jump_at_eta(&pair, &s[0], k).unwrap(), 0.0);
    }
}

#[test]
fn fourier_coefficients_follow_the_jump_expansion() {
    let pair = ground();
    let eta = 0.1;
    let s = setups(2, 2, eta);
    let p = Pseudo::new(&pair, &s);
    // modes in [1/η, 6/η]; past that the residual reaches the rounding floor.
    // After k_max orders the residual shrinks like m^{-(k_max+2)}.
    let k_max = 5;
    let mut scaled = Vec::new();
    for m in [10usize, 12, 14, 17, 20, 24, 28, 34, 40, 48, 57] {
        let f = p.fourier(m);
        let e = p.expansion(m, k_max);
        let resid = hypot((f.0 - e.0, f.1 - e.1));
        if m >= 20 {
            assert!(resid <= 1e-3 * hypot(f), "m={m}: residual {resid:e} vs {:e}", hypot(f));
        }
        scaled.push((m, resid * (m as f64).powi(k_max as i32 + 2)));
    }
    // fit the constant on the first modes and require the rest to stay within 3x
    let c = scaled[..5].iter().map(|s| s.1).fold(0.0, f64::max);
    for &(m, v) in &scaled[5..] {
        assert!(v <= 3.0 * c, "m={m}: {v:e} exceeds 3 x {c:e}");
    }
}

#[test]
fn fourier_envelope_holds_across_eta() {
    let pair = ground();
    let n = 2;
    let modes = [3usize, 7, 15, 31, 63, 127, 255];
    let ratios = |d: usize, eta: f64| -> Vec<f64> {
        let s = setups(n, d, eta);
        let p = Pseudo::new(&pair, &s);
        modes
            .iter()
            .map(|&m| {
                let mf = m as f64;
                let env = eta.powi(2 * n as i32) / (mf * mf) + eta.powi(1 - d as i32) / mf.powi(d as i32 + 1);
                hypot(p.fourier(m)) / env
            })
            .collect()
    };
    for d in [2, 3] {
        let c = ratios(d, 0.1)
            .into_iter()
            .chain(ratios(d, 0.05))
            .fold(0.0, f64::max);
        for (m, r) in modes.iter().zip(ratios(d, 0.025)) {
            assert!(r <= 3.0 * c, "d={d} m={m}: ratio {r:e} vs fitted {c:e}");
        }
    }
}

#[test]
fn coefficient_residual_and_growth() {
    let pair = ground();
    let mut prev: Option<f64> = None;
    for i in 0..4 {
        let eta = 0.1 / 2f64.powi(i);
        let s = setups(2, 2, eta);
        let c = expansion_coeffs(&pair, &s[0]).unwrap();
        assert!(c.residual <= 1e-12, "eta={eta}: {}", c.residual);
        let norm = c.original.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm.is_finite());
        if let Some(p) = prev {
            // ‖c‖ grows at most like η^{2-2N}
            assert!(norm / p <= 4.0 * 1.5, "eta={eta}: growth {}", norm / p);
        }
        prev = Some(norm);
    }
}

#[test]
fn report_collects_both_kinds() {
    let pair = ground();
    let s = setups(3, 4, 0.05);
    let r = jump_report(&pair, &s[0], 2).unwrap();
    assert_eq!(r.jumps_at_zero.iter().map(|j| j.0).collect::<Vec<_>>(), vec![1, 3, 5]);
    assert_eq!(r.jumps_at_eta.iter().map(|j| j.0).collect::<Vec<_>>(), vec![4, 5, 6]);
    assert_eq!(r.jumps_at_zero[0].1, jump_at_zero(&pair, &s[0], 0).unwrap());
}

#[test]
fn slopes_track_theory_on_the_second_site() {
    let pair = ground();
    let pts: Vec<_> = (0..4)
        .map(|i| {
            let eta = 0.1 / 2f64.powi(i);
            (eta, jump_at_zero(&pair, &setups(3, 3, eta)[1], 0).unwrap().abs())
        })
        .collect();
    let s = fit_slope(&pts).unwrap();
    assert!((s.slope - 6.0).abs() < 0.3, "{}", s.slope);
    assert!(s.r2 > 0.999);
}
