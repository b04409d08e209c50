//! Local expansions of the single-site solutions around their Dirac site.
//!
//! On `(-1/2, 1/2)` every even solution of `-χ'' - Z δ χ = ε χ` with `χ(0) = 1` is
//! `χ_ε(u) = Σ_m (-ε)^m κ_m(|u|)` where `κ_m(u) = u^{2m}/(2m)! - (Z/2) u^{2m+1}/(2m+1)!`.
//! The atomic functions are `φ_l = φ_l(0) χ_{ε_l}` there and the even part of any
//! eigenfunction of the full model is `ψ(0) χ_E`. Divided differences of `ε ↦ χ_ε`
//! give a basis of `span{χ_{ε_l}}` whose conditioning does not degrade as `η → 0`.

/// Number of extra series terms kept beyond the leading order.
const SERIES_TERMS: usize = 60;

/// Complete homogeneous symmetric polynomials `h_0..=h_rmax` of `nodes`.
pub fn complete_homogeneous(nodes: &[f64], r_max: usize) -> Vec<f64> {
    let mut h = vec![0.0; r_max + 1];
    h[0] = 1.0;
    let mut first = true;
    for &x in nodes {
        if first {
            for r in 1..=r_max {
                h[r] = h[r - 1] * x;
            }
            first = false;
        } else {
            for r in 1..=r_max {
                h[r] += x * h[r - 1];
            }
        }
    }
    if nodes.is_empty() {
        h.iter_mut().skip(1).for_each(|v| *v = 0.0);
    }
    h
}

/// `Π_{i<k} (x - nodes[i])`.
pub fn newton_weight(nodes: &[f64], k: usize, x: f64) -> f64 {
    nodes[..k].iter().map(|n| x - n).product()
}

/// Polynomial `Σ c_n t^n` on `t ≥ 0`, extended evenly to `t < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvenSeries {
    pub coeffs: Vec<f64>,
}

impl EvenSeries {
    /// `j`-th derivative; at `t = 0` the right limit.
    pub fn deriv(&self, t: f64, j: usize) -> f64 {
        let s = t.abs();
        let mut acc = 0.0;
        for n in (j..self.coeffs.len()).rev() {
            let falling: f64 = (0..j).map(|i| (n - i) as f64).product();
            acc = acc * s + self.coeffs[n] * falling;
        }
        if t < 0.0 && j % 2 == 1 {
            -acc
        } else {
            acc
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.deriv(t, 0)
    }

    /// Right-minus-left jump of the `j`-th derivative at `t = 0`.
    pub fn jump(&self, j: usize) -> f64 {
        if j % 2 == 0 || j >= self.coeffs.len() {
            return 0.0;
        }
        let fact: f64 = (1..=j).map(|i| i as f64).product();
        2.0 * fact * self.coeffs[j]
    }
}

/// `scale · χ[ν_0, …, ν_k](ηt)` for scaled energies `ν_i = ε_i η²`, as an [`EvenSeries`] in `t`.
/// `z_eta = Z η`.
pub fn chi_divided_difference(nodes: &[f64], z_eta: f64, scale: f64) -> EvenSeries {
    let k = nodes.len() - 1;
    let h = complete_homogeneous(nodes, SERIES_TERMS);
    let m_max = k + SERIES_TERMS;
    let mut coeffs = vec![0.0; 2 * m_max + 2];
    // 1/n! built incrementally
    let mut inv_fact = vec![1.0; 2 * m_max + 2];
    for n in 1..inv_fact.len() {
        inv_fact[n] = inv_fact[n - 1] / n as f64;
    }
    for m in k..=m_max {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let s = scale * sign * h[m - k];
        coeffs[2 * m] = s * inv_fact[2 * m];
        coeffs[2 * m + 1] = -0.5 * z_eta * s * inv_fact[2 * m + 1];
    }
    // drop the negligible tail
    let peak = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() <= 1e-30 * peak) {
        coeffs.pop();
    }
    EvenSeries { coeffs }
}
