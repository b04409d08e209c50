//! Slope and gap fits over sweep rows.

use std::collections::BTreeMap;
use std::fmt;

use vpaw::fit::{doubling_gaps, fit_two_regime, fit_two_regime_family, window_slopes, SharedTerm};
use vpaw::jumps::fit_slope_loose;

use crate::config::Method;
use crate::sweep::SweepRow;

/// Points needed before an η curve gets a two-regime fit.
pub const MIN_CURVE_POINTS: usize = 6;
/// Window length of the short end-of-curve fits.
pub const WINDOW: usize = 3;
/// Grid points averaged at each end for the M-doubling gaps.
pub const GAP_POINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CurveKey {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub eig: usize,
}

/// `(η, |E - E_ref|)` per curve, successful rows only, sorted by η.
pub fn eta_curves(rows: &[SweepRow]) -> BTreeMap<CurveKey, Vec<(f64, f64)>> {
    let mut map: BTreeMap<CurveKey, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok()) {
        let (Some(n), Some(d), Some(eta), Some(err)) = (r.n, r.d, r.eta, r.abs_error) else {
            continue;
        };
        let key = CurveKey { method: r.method, n, d, m: r.m, eig: r.eig };
        map.entry(key).or_default().push((eta, err));
    }
    for c in map.values_mut() {
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    map
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub key: CurveKey,
    pub points: usize,
    pub window_increasing: Option<f64>,
    pub window_decreasing: Option<f64>,
    pub model_increasing: Option<f64>,
    pub model_decreasing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySummary {
    pub method: Method,
    pub shared: SharedTerm,
    /// The axis held fixed: N for a shared increasing term, d otherwise.
    pub fixed: usize,
    pub m: usize,
    pub eig: usize,
    pub members: Vec<usize>,
    pub shared_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub eig: usize,
    pub ms: Vec<usize>,
    pub small_eta: f64,
    pub large_eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MSlope {
    pub method: Method,
    pub label: String,
    pub eig: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: usize,
    pub failures: usize,
    pub curves: Vec<CurveSummary>,
    pub families: Vec<FamilySummary>,
    pub gaps: Vec<GapSummary>,
    pub m_slopes: Vec<MSlope>,
}

/// `shared` selects the joint fit: the increasing term when the rows have no smooth
/// potential (common slope across d at fixed N), the decreasing term otherwise.
pub fn summarize(rows: &[SweepRow], shared: SharedTerm) -> Summary {
    let curves = eta_curves(rows);
    let mut s = Summary {
        rows: rows.len(),
        failures: rows.iter().filter(|r| !r.ok()).count(),
        ..Default::default()
    };
    for (key, pts) in &curves {
        if pts.len() < MIN_CURVE_POINTS {
            continue;
        }
        let (inc, dec) = window_slopes(pts, WINDOW);
        let model = fit_two_regime(pts).ok();
        s.curves.push(CurveSummary {
            key: *key,
            points: pts.len(),
            window_increasing: inc.map(|f| f.slope),
            window_decreasing: dec.map(|f| f.slope),
            model_increasing: model.map(|f| f.increasing),
            model_decreasing: model.map(|f| f.decreasing),
        });
    }

    let mut families: BTreeMap<(Method, usize, usize, usize), Vec<(usize, Vec<(f64, f64)>)>> = BTreeMap::new();
    for (key, pts) in &curves {
        if pts.len() < MIN_CURVE_POINTS {
            continue;
        }
        let (fixed, member) = match shared {
            SharedTerm::Increasing => (key.n, key.d),
            SharedTerm::Decreasing => (key.d, key.n),
        };
        families
            .entry((key.method, fixed, key.m, key.eig))
            .or_default()
            .push((member, pts.clone()));
    }
    for ((method, fixed, m, eig), members) in families {
        if members.len() < 2 {
            continue;
        }
        let data: Vec<_> = members.iter().map(|(_, c)| c.clone()).collect();
        if let Ok(f) = fit_two_regime_family(&data, shared) {
            s.families.push(FamilySummary {
                method,
                shared,
                fixed,
                m,
                eig,
                members: members.iter().map(|(k, _)| *k).collect(),
                shared_slope: f.shared_slope,
            });
        }
    }

    let mut by_m: BTreeMap<(Method, usize, usize, usize), Vec<(usize, Vec<(f64, f64)>)>> = BTreeMap::new();
    for (key, pts) in &curves {
        by_m.entry((key.method, key.n, key.d, key.eig))
            .or_default()
            .push((key.m, pts.clone()));
    }
    for ((method, n, d, eig), list) in by_m {
        if list.len() < 2 {
            continue;
        }
        let data: Vec<_> = list.iter().map(|(_, c)| c.clone()).collect();
        if let Ok((small, large)) = doubling_gaps(&data, GAP_POINTS) {
            s.gaps.push(GapSummary {
                method,
                n,
                d,
                eig,
                ms: list.iter().map(|(m, _)| *m).collect(),
                small_eta: small,
                large_eta: large,
            });
        }
    }

    // M slopes are only meaningful for sweeps over M at a few fixed points
    if s.curves.is_empty() {
        s.m_slopes = m_slopes(rows);
    }
    s
}

/// Log-log slope of the error against M, per fixed `(N, d, eta, eig)` with at least 3 M values.
pub fn m_slopes(rows: &[SweepRow]) -> Vec<MSlope> {
    let mut groups: BTreeMap<(Method, Option<usize>, Option<usize>, u64, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok()) {
        if let Some(err) = r.abs_error {
            let eta_bits = r.eta.map_or(0, f64::to_bits);
            groups
                .entry((r.method, r.n, r.d, eta_bits, r.eig))
                .or_default()
                .push((r.m as f64, err));
        }
    }
    groups
        .into_iter()
        .filter(|(_, pts)| pts.len() >= 3)
        .filter_map(|((method, n, d, eta_bits, eig), pts)| {
            let fit = fit_slope_loose(&pts).ok()?;
            let label = match (n, d) {
                (Some(n), Some(d)) => format!("N={n} d={d} eta={}", f64::from_bits(eta_bits)),
                _ => String::new(),
            };
            Some(MSlope { method, label, eig, slope: fit.slope })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} rows, {} failed", self.rows, self.failures)?;
        if !self.curves.is_empty() {
            writeln!(f, "\nslopes of |E - E_ref| vs eta (window: {WINDOW} end points; model: A eta^p + B eta^-q)")?;
            writeln!(f, "{:<7}{:>3}{:>3}{:>6}{:>5}{:>5}{:>9}{:>9}{:>9}{:>9}", "method", "N", "d", "M", "eig", "pts", "win inc", "win dec", "mod inc", "mod dec")?;
            for c in &self.curves {
                writeln!(
                    f,
                    "{:<7}{:>3}{:>3}{:>6}{:>5}{:>5}{:>9}{:>9}{:>9}{:>9}",
                    c.key.method.name(),
                    c.key.n,
                    c.key.d,
                    c.key.m,
                    c.key.eig,
                    c.points,
                    cell(c.window_increasing),
                    cell(c.window_decreasing),
                    cell(c.model_increasing),
                    cell(c.model_decreasing)
                )?;
            }
        }
        for fam in &self.families {
            let (what, fixed, member) = match fam.shared {
                SharedTerm::Increasing => ("increasing", "N", "d"),
                SharedTerm::Decreasing => ("decreasing", "d", "N"),
            };
            writeln!(
                f,
                "shared {what} slope {:.3}  ({} {fixed}={} M={} eig={} over {member}={:?})",
                fam.shared_slope,
                fam.method.name(),
                fam.fixed,
                fam.m,
                fam.eig,
                fam.members
            )?;
        }
        if !self.gaps.is_empty() {
            writeln!(f, "\nlog10 gap per M doubling ({GAP_POINTS} smallest / largest eta)")?;
            for g in &self.gaps {
                writeln!(
                    f,
                    "{} N={} d={} eig={} M={:?}: small eta {:.3}, large eta {:.3}",
                    g.method.name(),
                    g.n,
                    g.d,
                    g.eig,
                    g.ms,
                    g.small_eta,
                    g.large_eta
                )?;
            }
        }
        if !self.m_slopes.is_empty() {
            writeln!(f, "\nslopes of |E - E_ref| vs M")?;
            for s in &self.m_slopes {
                writeln!(f, "{} {} eig={}: {:.3}", s.method.name(), s.label, s.eig, s.slope)?;
            }
        }
        Ok(())
    }
}
