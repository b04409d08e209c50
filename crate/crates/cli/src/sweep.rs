//! Grid execution and the CSV record format.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vpaw::analytic::{solve_spectrum, ModelParams};
use vpaw::assembly::{assemble_h, assemble_vpaw, AssemblyOptions, MatrixFreeHtilde, TrigBasis};
use vpaw::eigensolve::solve_lowest;
use vpaw::fem::fem_eigenvalues;
use vpaw::linalg::Matrix;
use vpaw::paw::paw_solve;
use vpaw::setup::{build_site_setups, RhoKind, VpawParams};

use crate::config::{Method, SweepSpec};

pub const CSV_HEADER: &str =
    "method,N,d,eta,M,eig_index,E_computed,E_reference,abs_error,cond_Atilde,wall_ms,error";

/// One CSV record. `n`, `d`, `eta` and `cond_atilde` are empty for methods without setups.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub eta: Option<f64>,
    pub m: usize,
    pub eig: usize,
    pub e_computed: Option<f64>,
    pub e_reference: f64,
    pub abs_error: Option<f64>,
    pub cond_atilde: Option<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// Signed `E_computed - E_reference`.
    pub fn signed_error(&self) -> Option<f64> {
        self.e_computed.map(|e| e - self.e_reference)
    }
}

/// 17 significant digits, round-trip exact.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn csv_line(r: &SweepRow) -> String {
    let err = r
        .error
        .as_deref()
        .map(|e| e.replace([',', '\n', '\r'], ";"))
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.3},{}",
        r.method,
        opt(r.n, |v| v.to_string()),
        opt(r.d, |v| v.to_string()),
        opt(r.eta, fmt_float),
        r.m,
        r.eig,
        opt(r.e_computed, fmt_float),
        fmt_float(r.e_reference),
        opt(r.abs_error, fmt_float),
        opt(r.cond_atilde, fmt_float),
        r.wall_ms,
        err
    )
}

pub fn write_csv(rows: &[SweepRow], mut w: impl Write) -> std::io::Result<()> {
    let mut s = String::with_capacity(160 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", csv_line(r));
    }
    w.write_all(s.as_bytes())
}

/// Reference energies: analytic for the pure Dirac model, FEM otherwise.
pub fn reference_energies(spec: &SweepSpec, params: &ModelParams) -> Result<Vec<f64>> {
    let n_eigs = spec.eig.iter().max().map_or(1, |m| m + 1);
    if spec.has_potential() {
        Ok(fem_eigenvalues(params, spec.fem_ref_elems, n_eigs)?)
    } else {
        Ok(solve_spectrum(params, n_eigs)?.into_iter().map(|p| p.energy).collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    n: Option<usize>,
    d: Option<usize>,
    eta: Option<f64>,
    m: usize,
}

struct PointResult {
    values: vpaw::Result<Vec<f64>>,
    cond: Option<f64>,
    check: Option<String>,
    wall_ms: f64,
}

fn jobs(spec: &SweepSpec) -> Vec<Job> {
    let mut out = Vec::new();
    if spec.method.uses_setup() {
        for &n in &spec.n {
            for &d in &spec.d {
                for &eta in &spec.eta {
                    for &m in &spec.m {
                        out.push(Job { n: Some(n), d: Some(d), eta: Some(eta), m });
                    }
                }
            }
        }
    } else {
        out.extend(spec.m.iter().map(|&m| Job { n: None, d: None, eta: None, m }));
    }
    out
}

/// Relative max mismatch of the matrix-free product on one seeded random vector.
fn matrix_free_mismatch(htilde: &Matrix, op: &MatrixFreeHtilde, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..htilde.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dense = htilde.mat_vec(&x);
    let free = op.apply(&x);
    let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    dense.iter().zip(&free).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

fn run_job(spec: &SweepSpec, params: &ModelParams, job: Job, index: usize) -> PointResult {
    let t = Instant::now();
    let n_eigs = spec.eig.iter().max().map_or(1, |m| m + 1);
    let mut cond = None;
    let mut check = None;
    let values = (|| -> vpaw::Result<Vec<f64>> {
        match spec.method {
            Method::Fem => fem_eigenvalues(params, job.m, n_eigs),
            Method::Direct => {
                let basis = TrigBasis::new(job.m)?;
                let h = assemble_h(params, &basis);
                Ok(solve_lowest(&h, &Matrix::identity(job.m), n_eigs)?.values)
            }
            Method::Vpaw | Method::Paw => {
                let (n, d, eta) = (job.n.unwrap_or(0), job.d.unwrap_or(0), job.eta.unwrap_or(0.0));
                let vp = VpawParams::new(n, d, eta)?;
                vp.check_disjoint(params.a)?;
                let setups = build_site_setups(params, &vp, RhoKind::Parabola)?;
                cond = setups.iter().map(|s| s.report.cond_atilde).reduce(f64::max);
                let basis = TrigBasis::new(job.m)?;
                if spec.method == Method::Paw {
                    return Ok(paw_solve(params, &setups, &basis, spec.eps_ratio * eta, n_eigs)?.values);
                }
                let pair = assemble_vpaw(params, &setups, &basis, &AssemblyOptions::default())?;
                if let Some(seed) = spec.seed {
                    let op = MatrixFreeHtilde::new(&pair);
                    let e = matrix_free_mismatch(&pair.htilde, &op, seed.wrapping_add(index as u64));
                    if !(e <= 1e-11) {
                        check = Some(format!("matrix-free mismatch {e:e}"));
                    }
                }
                Ok(solve_lowest(&pair.htilde, &pair.stilde, n_eigs)?.values)
            }
        }
    })();
    PointResult {
        values,
        cond,
        check,
        wall_ms: t.elapsed().as_secs_f64() * 1e3,
    }
}

/// Runs every grid point; rows are ordered by `(N, d, eta, M, eig)`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let params = spec.model()?;
    let reference = reference_energies(spec, &params)?;
    let jobs = jobs(spec);
    let results: Vec<PointResult> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &job)| run_job(spec, &params, job, i))
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * spec.eig.len());
    for (job, res) in jobs.iter().zip(results) {
        for &eig in &spec.eig {
            let e_reference = reference[eig];
            let (e_computed, error) = match &res.values {
                Ok(v) => match v.get(eig) {
                    Some(&e) => (Some(e), res.check.clone()),
                    None => (None, Some(format!("only {} eigenvalues available", v.len()))),
                },
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(SweepRow {
                method: spec.method,
                n: job.n,
                d: job.d,
                eta: job.eta,
                m: job.m,
                eig,
                e_computed,
                e_reference,
                abs_error: e_computed.map(|e| (e - e_reference).abs()),
                cond_atilde: res.cond,
                wall_ms: res.wall_ms,
                error,
            });
        }
    }
    rows.sort_by(|x, y| {
        (x.n, x.d)
            .cmp(&(y.n, y.d))
            .then(x.eta.unwrap_or(0.0).total_cmp(&y.eta.unwrap_or(0.0)))
            .then((x.m, x.eig).cmp(&(y.m, y.eig)))
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -32.58212345678901, 1e-300, 6.02e23] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn error_text_cannot_break_columns() {
        let row = SweepRow {
            method: Method::Vpaw,
            n: Some(2),
            d: Some(2),
            eta: Some(0.1),
            m: 33,
            eig: 0,
            e_computed: None,
            e_reference: -1.0,
            abs_error: None,
            cond_atilde: None,
            wall_ms: 1.0,
            error: Some("a, b\nc".into()),
        };
        assert_eq!(csv_line(&row).split(',').count(), CSV_HEADER.split(',').count());
    }
}
