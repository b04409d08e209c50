//! Sweep settings: flat `key = value` config files overridden by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use vpaw::analytic::{ModelParams, SmoothPotential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Direct,
    Vpaw,
    Paw,
    Fem,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Vpaw => "vpaw",
            Method::Paw => "paw",
            Method::Fem => "fem",
        }
    }

    /// Whether the grid axes N, d and eta apply.
    pub fn uses_setup(self) -> bool {
        matches!(self, Method::Vpaw | Method::Paw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Method::Direct),
            "vpaw" => Ok(Method::Vpaw),
            "paw" => Ok(Method::Paw),
            "fem" => Ok(Method::Fem),
            other => bail!("unknown method {other:?} (expected direct, vpaw, paw or fem)"),
        }
    }
}

/// Default eigenvalue-sweep grid `0.0125 · 2^{i/8}`, `i = 0..32`.
pub fn default_eta_grid() -> Vec<f64> {
    (0..32).map(|i| 0.0125 * 2f64.powf(i as f64 / 8.0)).collect()
}

/// Every input of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub method: Method,
    pub z0: f64,
    pub za: f64,
    pub a: f64,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub eta: Vec<f64>,
    /// Plane-wave counts; element counts for `fem`.
    pub m: Vec<usize>,
    pub eig: Vec<usize>,
    /// `(amplitude, frequency, phase)` of `W`.
    pub w: Option<(f64, u32, f64)>,
    /// Mollifier width as a fraction of η (PAW only).
    pub eps_ratio: f64,
    /// Elements of the FEM reference used when `W` is present.
    pub fem_ref_elems: usize,
    pub out: Option<String>,
    /// Enables a seeded matrix-free self-check on every VPAW point.
    pub seed: Option<u64>,
    /// Notes produced while normalizing the settings (rounded M values).
    pub warnings: Vec<String>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            method: Method::Vpaw,
            z0: 10.0,
            za: 10.0,
            a: 0.4,
            n: vec![2],
            d: vec![2],
            eta: vec![0.1],
            m: vec![129],
            eig: vec![0],
            w: None,
            eps_ratio: 0.25,
            fem_ref_elems: 8192,
            out: None,
            seed: None,
            warnings: Vec::new(),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {t:?}: {e}")))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        bail!("{key}: empty list");
    }
    Ok(v)
}

fn parse_one<T: FromStr>(key: &str, s: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {s:?}: {e}"))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", no + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl SweepSpec {
    /// Applies one setting. Keys match the long flag names without dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut w = self.w.unwrap_or((0.0, 1, 0.0));
        match key {
            "method" => self.method = value.parse()?,
            "Z0" => self.z0 = parse_one(key, value)?,
            "Za" => self.za = parse_one(key, value)?,
            "a" => self.a = parse_one(key, value)?,
            "N" => self.n = parse_list(key, value)?,
            "d" => self.d = parse_list(key, value)?,
            "eta" => {
                self.eta = if value.trim() == "default" {
                    default_eta_grid()
                } else {
                    parse_list(key, value)?
                }
            }
            "M" => self.m = parse_list(key, value)?,
            "eig" => self.eig = parse_list(key, value)?,
            "out" => self.out = Some(value.trim().to_string()),
            "W-amp" => w.0 = parse_one(key, value)?,
            "W-freq" => w.1 = parse_one(key, value)?,
            "W-phase" => w.2 = parse_one(key, value)?,
            "eps-ratio" => self.eps_ratio = parse_one(key, value)?,
            "fem-ref" => self.fem_ref_elems = parse_one(key, value)?,
            "seed" => self.seed = Some(parse_one(key, value)?),
            other => bail!("unknown setting {other:?}"),
        }
        if key.starts_with("W-") {
            self.w = Some(w);
        }
        Ok(())
    }

    pub fn from_config(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (k, v) in parse_config(text)? {
            spec.set(&k, &v).with_context(|| format!("config key {k}"))?;
        }
        Ok(spec)
    }

    pub fn model(&self) -> Result<ModelParams> {
        let mut p = ModelParams::new(self.z0, self.za, self.a)?;
        if let Some((amp, freq, phase)) = self.w {
            if amp != 0.0 {
                p = p.with_potential(SmoothPotential::new(amp, freq, phase)?);
            }
        }
        Ok(p)
    }

    pub fn has_potential(&self) -> bool {
        self.w.is_some_and(|w| w.0 != 0.0)
    }

    /// Checks the grid and rounds even plane-wave counts up to odd ones.
    pub fn normalize(&mut self) -> Result<()> {
        if self.m.is_empty() || self.eig.is_empty() {
            bail!("grid for M and eig must be nonempty");
        }
        if self.method.uses_setup() && (self.n.is_empty() || self.d.is_empty() || self.eta.is_empty()) {
            bail!("grid for N, d and eta must be nonempty");
        }
        if !(self.eps_ratio > 0.0 && self.eps_ratio <= 1.0) {
            bail!("eps-ratio must lie in (0, 1]");
        }
        if self.method != Method::Fem {
            for m in self.m.iter_mut() {
                if *m % 2 == 0 {
                    self.warnings.push(format!("M = {m} is even; using {}", *m + 1));
                    *m += 1;
                }
            }
        }
        self.model()?;
        sort_dedup(&mut self.n);
        sort_dedup(&mut self.d);
        sort_dedup(&mut self.m);
        sort_dedup(&mut self.eig);
        self.eta.sort_by(f64::total_cmp);
        self.eta.dedup();
        Ok(())
    }
}

fn sort_dedup<T: Ord>(v: &mut Vec<T>) {
    v.sort();
    v.dedup();
}
