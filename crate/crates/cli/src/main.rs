use std::fs::File;
use std::io::{self, BufWriter};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vpaw::analytic::{atomic_spectrum, solve_spectrum, ModelParams};
use vpaw::fit::SharedTerm;
use vpaw::jumps::{fit_slope, jump_at_eta, jump_at_zero};
use vpaw::setup::{build_site_setups, RhoKind, VpawParams};
use vpaw_cli::{run_sweep, summarize, write_csv, Method, SweepSpec};

#[derive(Parser)]
#[command(name = "vpaw", about = "VPAW solver lab for the periodic double-Dirac operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact eigenvalues of the double-Dirac model.
    Analytic {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of eigenpairs.
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Atomic functions of a single Dirac site.
    Atomic {
        #[arg(long = "Z", default_value_t = 10.0)]
        z: f64,
        #[arg(long = "N", default_value_t = 4)]
        n: usize,
    },
    /// Plane-wave discretization of the full operator.
    Direct(SweepArgs),
    /// VPAW-transformed plane-wave problem.
    Vpaw(SweepArgs),
    /// Truncated PAW baseline with a mollified potential.
    Paw(SweepArgs),
    /// P2 finite elements; M is the element count.
    Fem(SweepArgs),
    /// Derivative jumps of the pseudo wave function at 0 and at +eta.
    Jumps {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "N", value_delimiter = ',', default_value = "2")]
        n: Vec<usize>,
        #[arg(long = "d", value_delimiter = ',')]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        eta: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        eig: usize,
    },
    /// Grid sweep from a config file and flags.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long = "Z0", default_value_t = 10.0)]
    z0: f64,
    #[arg(long = "Za", default_value_t = 10.0)]
    za: f64,
    #[arg(long, default_value_t = 0.4)]
    a: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.z0, self.za, self.a)?)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "Z0")]
    z0: Option<String>,
    #[arg(long = "Za")]
    za: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long = "d")]
    d: Option<String>,
    /// Comma list, or `default` for the 32-point geometric grid.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long)]
    eig: Option<String>,
    /// CSV path; standard output when absent.
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "W-amp")]
    w_amp: Option<String>,
    #[arg(long = "W-freq")]
    w_freq: Option<String>,
    #[arg(long = "W-phase")]
    w_phase: Option<String>,
    /// Mollifier width over eta for PAW.
    #[arg(long = "eps-ratio")]
    eps_ratio: Option<String>,
    /// FEM element count for references when W is present.
    #[arg(long = "fem-ref")]
    fem_ref: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl SweepArgs {
    fn spec(&self, forced: Option<Method>) -> Result<SweepSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                SweepSpec::from_config(&text)?
            }
            None => SweepSpec::default(),
        };
        let flags = [
            ("method", &self.method),
            ("Z0", &self.z0),
            ("Za", &self.za),
            ("a", &self.a),
            ("N", &self.n),
            ("d", &self.d),
            ("eta", &self.eta),
            ("M", &self.m),
            ("eig", &self.eig),
            ("out", &self.out),
            ("W-amp", &self.w_amp),
            ("W-freq", &self.w_freq),
            ("W-phase", &self.w_phase),
            ("eps-ratio", &self.eps_ratio),
            ("fem-ref", &self.fem_ref),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                spec.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        if let Some(m) = forced {
            spec.method = m;
        }
        spec.normalize()?;
        Ok(spec)
    }
}

fn sweep(args: &SweepArgs, forced: Option<Method>) -> Result<ExitCode> {
    let spec = args.spec(forced)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let rows = run_sweep(&spec)?;
    let shared = if spec.has_potential() {
        SharedTerm::Decreasing
    } else {
        SharedTerm::Increasing
    };
    let summary = summarize(&rows, shared);
    match &spec.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {path}"))?;
            write_csv(&rows, BufWriter::new(f))?;
            print!("{summary}");
        }
        None => {
            write_csv(&rows, io::stdout().lock())?;
            eprint!("{summary}");
        }
    }
    for r in rows.iter().filter(|r| !r.ok()) {
        let show = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        eprintln!(
            "failed: N={} d={} eta={} M={} eig={}: {}",
            show(r.n.map(|v| v.to_string())),
            show(r.d.map(|v| v.to_string())),
            show(r.eta.map(|v| v.to_string())),
            r.m,
            r.eig,
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(if summary.failures > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn analytic(model: &ModelArgs, count: usize) -> Result<ExitCode> {
    let pairs = solve_spectrum(&model.params()?, count)?;
    println!("{:>4} {:>24} {:>24} {:>6}", "k", "E", "omega", "ok");
    for (k, p) in pairs.iter().enumerate() {
        println!("{k:>4} {:>24.16e} {:>24.16e} {:>6}", p.energy, p.omega, p.residuals().all_ok());
    }
    let negative = pairs.iter().filter(|p| p.energy < 0.0).count();
    println!("negative eigenvalues: {negative}");
    Ok(ExitCode::SUCCESS)
}

fn atomic(z: f64, n: usize) -> Result<ExitCode> {
    let fns = atomic_spectrum(z, n, 0.0)?;
    println!("{:>4} {:>24} {:>24} {:>14}", "l", "eps", "omega", "jump residual");
    for (l, f) in fns.iter().enumerate() {
        println!("{l:>4} {:>24.16e} {:>24.16e} {:>14.3e}", f.eps, f.omega, f.jump_residual());
    }
    Ok(ExitCode::SUCCESS)
}

fn jumps(model: &ModelArgs, ns: &[usize], ds: &[usize], etas: &[f64], eig: usize) -> Result<ExitCode> {
    let params = model.params()?;
    let pair = solve_spectrum(&params, eig + 1)?.pop().context("empty spectrum")?;
    let mut failed = false;
    for &n in ns {
        let dlist: Vec<usize> = if ds.is_empty() { vec![n.max(2)] } else { ds.to_vec() };
        for &d in &dlist {
            println!("N={n} d={d}");
            println!("{:>10} {:>24} {:>24}", "eta", "|[psi~']_0|", format!("|[psi~^({d})]_eta|"));
            let mut at_zero = Vec::new();
            let mut at_eta = Vec::new();
            for &eta in etas {
                let res = (|| -> vpaw::Result<(f64, f64)> {
                    let vp = VpawParams::new(n, d, eta)?;
                    vp.check_disjoint(params.a)?;
                    let setups = build_site_setups(&params, &vp, RhoKind::Parabola)?;
                    Ok((jump_at_zero(&pair, &setups[0], 0)?.abs(), jump_at_eta(&pair, &setups[0], d)?.abs()))
                })();
                match res {
                    Ok((j0, je)) => {
                        println!("{eta:>10.6} {j0:>24.16e} {je:>24.16e}");
                        at_zero.push((eta, j0));
                        at_eta.push((eta, je));
                    }
                    Err(e) => {
                        failed = true;
                        println!("{eta:>10.6} failed: {e}");
                    }
                }
            }
            let show = |pts: &[(f64, f64)]| fit_slope(pts).map_or_else(|e| format!("n/a ({e})"), |f| format!("{:.3}", f.slope));
            println!("slope at 0: {}   slope at eta: {}", show(&at_zero), show(&at_eta));
        }
    }
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Analytic { model, count } => analytic(model, *count),
        Command::Atomic { z, n } => atomic(*z, *n),
        Command::Direct(a) => sweep(a, Some(Method::Direct)),
        Command::Vpaw(a) => sweep(a, Some(Method::Vpaw)),
        Command::Paw(a) => sweep(a, Some(Method::Paw)),
        Command::Fem(a) => sweep(a, Some(Method::Fem)),
        Command::Jumps { model, n, d, eta, eig } => jumps(model, n, d, eta, *eig),
        Command::Sweep(a) => sweep(a, None),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
