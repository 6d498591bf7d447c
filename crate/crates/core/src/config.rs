//! Experiment configuration files.
//!
//! Files are TOML: top-level keys for the function and exponents, and the
//! sections `[domain]`, `[kappa]`, `[quadrature]`, `[curve]`, `[output]` and
//! `[verify]`. Every key is optional except `function` (required by `curve`).
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::TestFunction;
use crate::error::{Error, Result};
use crate::quadrature::{Method, QuadratureSpec};
use crate::verification::VerificationConfig;
use crate::weak_norm::{BoxDomain, Constants, CurveOptions, Domain, Fault, KappaGrid};

pub const SEED_ENV: &str = "OSCLAB_SEED";
pub const DEFAULT_SEED: u64 = 0x05C1_1A7E;
pub const DEFAULT_MC_NODES: usize = 1024;
pub const DEFAULT_FAULT_FACTOR: f64 = 1.05;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaSection {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub method: Option<Method>,
    pub nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub samples: Option<usize>,
    pub stratified: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub csv: Option<String>,
    pub summary: Option<String>,
    pub report: Option<String>,
}

/// A configuration file as written, before defaults are filled in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub function: Option<String>,
    pub d: Option<usize>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub seed: Option<u64>,
    /// `name` or `name=factor`, see [`FaultSpec`].
    pub fault_inject: Option<String>,
    pub domain: DomainSection,
    pub kappa: KappaSection,
    pub quadrature: QuadratureSection,
    pub curve: CurveSection,
    pub output: OutputSection,
    pub verify: Option<VerificationConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `--seed`, then the file, then `OSCLAB_SEED`, then the built-in default.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))
            }
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn constants(&self) -> Result<Constants> {
        match &self.fault_inject {
            None => Ok(Constants::default()),
            Some(s) => Ok(s.parse::<FaultSpec>()?.constants()),
        }
    }

    /// Fill in defaults for a curve experiment.
    pub fn resolve_curve(&self, seed: u64) -> Result<CurveExperiment> {
        let id = self.function.as_deref().ok_or_else(|| Error::Config("`function` is required".into()))?;
        let f: TestFunction = id.parse()?;
        let d = f.dim();
        if let Some(dd) = self.d {
            if dd != d {
                return Err(Error::Config(format!("d = {dd} does not match `{id}` (d = {d})")));
            }
        }
        let p = self.p.unwrap_or(2.0);
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Config(format!("p must be at least 1, got {p}")));
        }
        let q = self.q.unwrap_or(1.0);
        if q != 1.0 {
            return Err(Error::Unsupported(format!("distribution curves are computed for q = 1 only, got q = {q}")));
        }

        let default_omega = Domain::default_omega(&f);
        let omega = match (&self.domain.lo, &self.domain.hi) {
            (None, None) => default_omega,
            (lo, hi) => BoxDomain::new(
                broadcast(lo.as_deref().unwrap_or(&default_omega.lo), d, "domain.lo")?,
                broadcast(hi.as_deref().unwrap_or(&default_omega.hi), d, "domain.hi")?,
            )?,
        };
        let fallback = Domain::default_for(&f, omega);
        let domain = Domain::new(
            fallback.omega.clone(),
            self.domain.r_min.unwrap_or(fallback.r_min),
            self.domain.r_max.unwrap_or(fallback.r_max),
        )?;

        let kg = KappaGrid::default_for(&f);
        let kappa = KappaGrid {
            min: self.kappa.min.unwrap_or(kg.min),
            max: self.kappa.max.unwrap_or(kg.max),
            ratio: self.kappa.ratio.unwrap_or(kg.ratio),
        };
        kappa.values()?;

        let method = self.quadrature.method.unwrap_or(if d == 1 { Method::Gauss1d } else { Method::MonteCarlo });
        let spec = match method {
            Method::Gauss1d => QuadratureSpec { seed, ..QuadratureSpec::gauss(self.quadrature.nodes.unwrap_or(8)) },
            Method::MonteCarlo => QuadratureSpec::monte_carlo(self.quadrature.nodes.unwrap_or(DEFAULT_MC_NODES), seed),
        };
        spec.validate(d)?;

        let defaults = CurveOptions::default();
        let options = CurveOptions {
            samples: self.curve.samples.unwrap_or(defaults.samples),
            stratified: self.curve.stratified.unwrap_or(defaults.stratified),
            constants: self.constants()?,
            ..defaults
        };

        let dir = self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        Ok(CurveExperiment {
            function_id: f.id().to_string(),
            d,
            p,
            q,
            domain,
            kappa,
            quadrature: spec,
            options,
            master_seed: seed,
            csv_path: dir.join(self.output.csv.as_deref().unwrap_or("curve.csv")),
            summary_path: dir.join(self.output.summary.as_deref().unwrap_or("summary.json")),
        })
    }

    /// Fill in defaults for a verification batch.
    pub fn resolve_verify(&self, seed: u64) -> Result<VerificationConfig> {
        let mut v = self.verify.clone().unwrap_or_default();
        v.seed = seed;
        if let Some(n) = self.quadrature.nodes {
            v.mc_nodes = n;
        }
        if self.fault_inject.is_some() {
            v.constants = self.constants()?;
        }
        Ok(v)
    }

    pub fn report_path(&self) -> Option<PathBuf> {
        let dir = self.output.dir.clone()?;
        Some(dir.join(self.output.report.as_deref().unwrap_or("report.json")))
    }
}

fn broadcast(xs: &[f64], d: usize, what: &str) -> Result<Vec<f64>> {
    match xs.len() {
        1 => Ok(vec![xs[0]; d]),
        n if n == d => Ok(xs.to_vec()),
        n => Err(Error::Config(format!("{what} has {n} entries, expected 1 or {d}"))),
    }
}

/// Every parameter of a curve run, with defaults resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveExperiment {
    pub function_id: String,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub domain: Domain,
    pub kappa: KappaGrid,
    pub quadrature: QuadratureSpec,
    pub options: CurveOptions,
    pub master_seed: u64,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// `name` or `name=factor`; the factor defaults to 1.05.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultSpec {
    pub fault: Fault,
    pub factor: f64,
}

impl FaultSpec {
    pub fn constants(&self) -> Constants {
        Constants::with_fault(self.fault, self.factor)
    }
}

impl std::str::FromStr for FaultSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, factor) = match s.split_once('=') {
            Some((n, f)) => {
                let v: f64 = f.trim().parse().map_err(|_| Error::Config(format!("bad fault factor `{f}`")))?;
                (n.trim(), v)
            }
            None => (s.trim(), DEFAULT_FAULT_FACTOR),
        };
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("fault factor must be positive, got {factor}")));
        }
        Ok(Self { fault: name.parse()?, factor })
    }
}
