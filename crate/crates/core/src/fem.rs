//! Periodic P2 finite-element reference for `-u'' - Z0 Σ δ_k - Za Σ δ_{k+a} + W`.
//!
//! Unknowns are the mesh vertices followed by one midpoint (bubble) value per element.
//! Bubbles only couple inside their element, so `K - σM` is condensed element by
//! element onto a periodic tridiagonal Schur complement. Haynsworth additivity then
//! gives the inertia of `K - σM` in O(n), which drives a Sturm bisection for the
//! eigenvalues; vectors come from inverse iteration through the same factorization.

use crate::analytic::ModelParams;
use crate::eigensolve::EigResult;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::quadrature::GaussRule;

/// Vertices of a periodic mesh of `[0, 1)`; element `e` is `[x_e, x_{e+1}]` with `x_n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FemMesh {
    pub nodes: Vec<f64>,
    pub h_max: f64,
    /// Vertex index carrying the second Dirac site.
    pub site_node: usize,
}

impl FemMesh {
    /// Uniform mesh with the vertex nearest to `a` moved onto `a`.
    pub fn snapped(n_elems: usize, a: f64) -> Result<Self> {
        if n_elems < 8 {
            return Err(Error::MeshError(format!("need at least 8 elements, got {n_elems}")));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::MeshError(format!("site a = {a} must lie in (0, 1)")));
        }
        let h = 1.0 / n_elems as f64;
        let j = (a * n_elems as f64).round() as usize;
        if j == 0 || j == n_elems {
            return Err(Error::MeshError(format!(
                "a = {a} snaps onto the node at 0 for {n_elems} elements"
            )));
        }
        let mut nodes: Vec<f64> = (0..n_elems).map(|i| i as f64 * h).collect();
        nodes[j] = a;
        let h_max = (0..n_elems)
            .map(|e| Self::right(&nodes, e) - nodes[e])
            .fold(0.0, f64::max);
        Ok(Self {
            nodes,
            h_max,
            site_node: j,
        })
    }

    fn right(nodes: &[f64], e: usize) -> f64 {
        if e + 1 == nodes.len() {
            1.0
        } else {
            nodes[e + 1]
        }
    }

    pub fn n_elems(&self) -> usize {
        self.nodes.len()
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], Self::right(&self.nodes, e))
    }

    /// Degrees of freedom: vertices then bubbles.
    pub fn n_dofs(&self) -> usize {
        2 * self.n_elems()
    }

    /// Global dofs `(left vertex, bubble, right vertex)` of element `e`.
    pub fn element_dofs(&self, e: usize) -> [usize; 3] {
        let n = self.n_elems();
        [e, n + e, (e + 1) % n]
    }
}

/// Element data in local order `(left, mid, right)`.
#[derive(Debug, Clone)]
struct Element {
    h: f64,
    /// `∫ W φ_i φ_j`.
    w: [[f64; 3]; 3],
    mass: [[f64; 3]; 3],
}

impl Element {
    fn k(&self, i: usize, j: usize) -> f64 {
        const S: [[f64; 3]; 3] = [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];
        S[i][j] / (3.0 * self.h) + self.w[i][j]
    }

    /// `∫ u'^2` from the differences of the nodal values, free of the `1/h` cancellation.
    fn stiffness_energy(&self, v: [f64; 3]) -> f64 {
        let da = v[1] - v[0];
        let db = v[2] - v[1];
        (7.0 * da * da - 2.0 * da * db + 7.0 * db * db) / (3.0 * self.h)
    }
}

/// Assembled P2 system; `K` includes the Dirac point terms and `W`.
#[derive(Debug, Clone)]
pub struct FemProblem {
    pub mesh: FemMesh,
    elems: Vec<Element>,
    /// Point terms added to the vertex diagonal: `(vertex, -Z)`.
    points: Vec<(usize, f64)>,
}

fn p2_shape(t: f64) -> [f64; 3] {
    // t in [0, 1]
    [
        2.0 * (t - 0.5) * (t - 1.0),
        4.0 * t * (1.0 - t),
        2.0 * t * (t - 0.5),
    ]
}

impl FemProblem {
    pub fn new(params: &ModelParams, n_elems: usize) -> Result<Self> {
        params.validate()?;
        let mesh = FemMesh::snapped(n_elems, params.a)?;
        let gauss = GaussRule::new(5);
        let elems = (0..mesh.n_elems())
            .map(|e| {
                let (x0, x1) = mesh.element(e);
                let h = x1 - x0;
                let mut k = [[0.0; 3]; 3];
                let m0 = h / 30.0;
                let m = [
                    [4.0 * m0, 2.0 * m0, -m0],
                    [2.0 * m0, 16.0 * m0, 2.0 * m0],
                    [-m0, 2.0 * m0, 4.0 * m0],
                ];
                if let Some(w) = params.w {
                    for (x, wt) in gauss.mapped(x0, x1) {
                        let s = p2_shape((x - x0) / h);
                        let wx = w.value(x) * wt;
                        for i in 0..3 {
                            for j in 0..3 {
                                k[i][j] += wx * s[i] * s[j];
                            }
                        }
                    }
                }
                Element { h, w: k, mass: m }
            })
            .collect();
        let points = vec![(0, -params.z0), (mesh.site_node, -params.za)];
        Ok(Self { mesh, elems, points })
    }

    /// Condensed periodic tridiagonal `(diag, off)` of `K - σM`, the bubble pivots,
    /// and per element the bubble couplings `(a_b0, a_b1)`.
    fn condense(&self, sigma: f64) -> Condensed {
        let n = self.mesh.n_elems();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n];
        let mut bubble = Vec::with_capacity(n);
        for (e, el) in self.elems.iter().enumerate() {
            let a = |i: usize, j: usize| el.k(i, j) - sigma * el.mass[i][j];
            let abb = a(1, 1);
            let (ab0, ab1) = (a(1, 0), a(1, 2));
            let r = (e + 1) % n;
            diag[e] += a(0, 0) - ab0 * ab0 / abb;
            diag[r] += a(2, 2) - ab1 * ab1 / abb;
            off[e] += a(0, 2) - ab0 * ab1 / abb;
            bubble.push((abb, ab0, ab1));
        }
        for &(v, z) in &self.points {
            diag[v] += z;
        }
        Condensed { diag, off, bubble }
    }

    /// Number of eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let c = self.condense(sigma);
        let bubbles = c.bubble.iter().filter(|b| b.0 < 0.0).count();
        let f = c.factor();
        bubbles + f.pivots.iter().filter(|&&p| p < 0.0).count() + usize::from(f.corner < 0.0)
    }

    /// Bracket of the `k`-th eigenvalue (0-based) by bisection on the Sturm count.
    /// Roundoff in the count limits the width to about `ε ‖K‖ / ‖M‖`.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        let mut lo = -1.0;
        while self.count_below(lo) > k {
            lo *= 2.0;
            if lo < -1e300 {
                return Err(Error::NoConvergence { index: k });
            }
        }
        let mut hi = 1.0;
        while self.count_below(hi) <= k {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NoConvergence { index: k });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Solve `(K - σM) x = b` in global dof order.
    pub fn shifted_solve(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.mesh.n_elems();
        let c = self.condense(sigma);
        let mut rv = b[..n].to_vec();
        for e in 0..n {
            let (abb, ab0, ab1) = c.bubble[e];
            let rb = b[n + e] / abb;
            rv[e] -= ab0 * rb;
            rv[(e + 1) % n] -= ab1 * rb;
        }
        let xv = c.factor().solve(&rv);
        let mut x = xv.clone();
        x.resize(2 * n, 0.0);
        for e in 0..n {
            let (abb, ab0, ab1) = c.bubble[e];
            x[n + e] = (b[n + e] - ab0 * xv[e] - ab1 * xv[(e + 1) % n]) / abb;
        }
        x
    }

    fn apply(&self, x: &[f64], stiff: bool) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (e, el) in self.elems.iter().enumerate() {
            let dofs = self.mesh.element_dofs(e);
            for i in 0..3 {
                y[dofs[i]] += (0..3)
                    .map(|j| if stiff { el.k(i, j) } else { el.mass[i][j] } * x[dofs[j]])
                    .sum::<f64>();
            }
        }
        if stiff {
            for &(v, z) in &self.points {
                y[v] += z * x[v];
            }
        }
        y
    }

    /// `K x` (stiffness plus point terms plus `W`).
    pub fn apply_k(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x, true)
    }

    /// `M x`.
    pub fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x, false)
    }

    /// Lowest `n_eigs` pairs; vectors are M-orthonormal, in dof order.
    pub fn solve(&self, n_eigs: usize) -> Result<EigResult> {
        let dofs = self.mesh.n_dofs();
        let brackets = (0..n_eigs).map(|k| self.eigenvalue(k)).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(n_eigs);
        let mut vectors = Matrix::zeros(dofs, n_eigs);
        let mut found: Vec<Vec<f64>> = Vec::with_capacity(n_eigs);
        let mut residuals = Vec::with_capacity(n_eigs);
        for (k, &sigma) in brackets.iter().enumerate() {
            // deterministic start with all modes present
            let mut v: Vec<f64> = (0..dofs).map(|i| 1.0 + ((i * 7919 + k * 104729) % 1009) as f64 / 1009.0).collect();
            for _ in 0..4 {
                let mv = self.apply_m(&v);
                v = self.shifted_solve(sigma, &mv);
                let mv = self.apply_m(&v);
                for u in &found {
                    let c = dot(u, &mv);
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
                }
                let nm = dot(&v, &self.apply_m(&v)).sqrt();
                v.iter_mut().for_each(|a| *a /= nm);
            }
            if let Some(i) = v.iter().position(|x| x.abs() > 1e-8) {
                if v[i] < 0.0 {
                    v.iter_mut().for_each(|a| *a = -*a);
                }
            }
            let mv = self.apply_m(&v);
            let lam = self.energy(&v) / dot(&v, &mv);
            let kv = self.apply_k(&v);
            let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - lam * b).collect();
            residuals.push(norm2(&r) / norm2(&v));
            vectors.set_column(k, &v);
            found.push(v);
            values.push(lam);
        }
        Ok(EigResult {
            values,
            vectors,
            residuals,
        })
    }

    /// `vᵀ K v` summed element by element in difference form.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, el) in self.elems.iter().enumerate() {
            let d = self.mesh.element_dofs(e);
            let x = [v[d[0]], v[d[1]], v[d[2]]];
            acc += el.stiffness_energy(x);
            for i in 0..3 {
                for j in 0..3 {
                    acc += x[i] * el.w[i][j] * x[j];
                }
            }
        }
        acc + self.points.iter().map(|&(i, z)| z * v[i] * v[i]).sum::<f64>()
    }

    /// Value at `x` of a solution vector in dof order.
    pub fn eval(&self, coeffs: &[f64], x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        let nodes = &self.mesh.nodes;
        let e = match nodes.binary_search_by(|p| p.partial_cmp(&x).expect("finite")) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (x0, x1) = self.mesh.element(e);
        let s = p2_shape((x - x0) / (x1 - x0));
        let d = self.mesh.element_dofs(e);
        (0..3).map(|i| s[i] * coeffs[d[i]]).sum()
    }
}

struct Condensed {
    diag: Vec<f64>,
    off: Vec<f64>,
    bubble: Vec<(f64, f64, f64)>,
}

/// `LDLᵀ` of the periodic tridiagonal matrix in the order `1, …, n-1, 0`.
struct Bordered {
    pivots: Vec<f64>,
    /// Border entries after elimination, `g_i / p_i` multipliers.
    border: Vec<f64>,
    corner: f64,
    off: Vec<f64>,
}

impl Condensed {
    fn factor(&self) -> Bordered {
        let n = self.diag.len();
        let guard = f64::MIN_POSITIVE.sqrt();
        let fix = |p: f64| if p.abs() < guard { -guard } else { p };
        let mut pivots = vec![0.0; n];
        let mut border = vec![0.0; n];
        let mut corner = self.diag[0];
        // vertex 1 couples to vertex 0 through off[0], vertex n-1 through off[n-1]
        for i in 1..n {
            let mut c = if i == 1 { self.off[0] } else { 0.0 };
            if i == n - 1 {
                c += self.off[n - 1];
            }
            let (p, g) = if i == 1 {
                (self.diag[1], c)
            } else {
                let m = self.off[i - 1] / pivots[i - 1];
                (self.diag[i] - m * self.off[i - 1], c - m * border[i - 1])
            };
            let p = fix(p);
            pivots[i] = p;
            border[i] = g;
            corner -= g * g / p;
        }
        Bordered {
            pivots: pivots[1..].to_vec(),
            border,
            corner: fix(corner),
            off: self.off.clone(),
        }
    }
}

impl Bordered {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let p = |i: usize| self.pivots[i - 1];
        // forward: y = L⁻¹ b
        let mut y = b.to_vec();
        let mut y0 = b[0];
        for i in 1..n {
            if i > 1 {
                y[i] -= self.off[i - 1] / p(i - 1) * y[i - 1];
            }
            y0 -= self.border[i] / p(i) * y[i];
        }
        let mut x = vec![0.0; n];
        x[0] = y0 / self.corner;
        for i in (1..n).rev() {
            let mut acc = y[i] - self.border[i] * x[0];
            if i + 1 < n {
                acc -= self.off[i] * x[i + 1];
            }
            x[i] = acc / p(i);
        }
        x
    }
}

/// Lowest `n_eigs` eigenpairs on a uniform mesh of `n_elems` P2 elements.
pub fn fem_solve(params: &ModelParams, n_elems: usize, n_eigs: usize) -> Result<EigResult> {
    FemProblem::new(params, n_elems)?.solve(n_eigs)
}

/// Eigenvalues only.
pub fn fem_eigenvalues(params: &ModelParams, n_elems: usize, n_eigs: usize) -> Result<Vec<f64>> {
    Ok(fem_solve(params, n_elems, n_eigs)?.values)
}

/// Richardson extrapolation of `e(h)`, `e(h/2)` assuming an `h^order` error.
pub fn richardson(coarse: f64, fine: f64, order: u32) -> f64 {
    let r = 2f64.powi(order as i32);
    (r * fine - coarse) / (r - 1.0)
}
