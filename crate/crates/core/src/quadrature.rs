//! Gauss-Legendre rules and composite node sets.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// A Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
        let rule = GaussLegendre::new(n);
        let (nodes, weights) = rule.as_node_weight_pairs().iter().copied().unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Composite rule: `panels` equal sub-intervals of [a, b], each with `rule`.
pub fn composite_nodes(rule: &GaussRule, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        out.extend(rule.mapped(lo, hi));
    }
    out
}

/// Node set for one augmentation window [site - eta, site + eta], split at the site
/// so that integrands with a kink there are smooth on every panel. The panel count
/// per half grows with `max_freq` (highest integer frequency of the trig factors).
pub fn window_nodes(rule: &GaussRule, site: f64, eta: f64, max_freq: usize) -> Vec<(f64, f64)> {
    // about two oscillation periods per panel
    let periods = max_freq as f64 * eta;
    let panels = (periods / 2.0).ceil().max(1.0) as usize;
    let mut nodes = composite_nodes(rule, site - eta, site, panels);
    nodes.extend(composite_nodes(rule, site, site + eta, panels));
    nodes
}
