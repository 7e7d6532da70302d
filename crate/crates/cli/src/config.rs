use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use ferroprop::model::load_model;
use ferroprop::oracle::EXACT_MAX_N;
use ferroprop::topology::{generate_topology, FieldSpec, Topology};
use ferroprop::{Init, IsingModel};

use crate::error::{self, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    Mf,
    Bp,
    EllipsoidBethe,
    EllipsoidMf,
    Exact,
    TransferMatrix,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mf => "mf",
            Algorithm::Bp => "bp",
            Algorithm::EllipsoidBethe => "ellipsoid_bethe",
            Algorithm::EllipsoidMf => "ellipsoid_mf",
            Algorithm::Exact => "exact",
            Algorithm::TransferMatrix => "transfer_matrix",
        }
    }

    pub fn is_ellipsoid(self) -> bool {
        matches!(self, Algorithm::EllipsoidBethe | Algorithm::EllipsoidMf)
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, Algorithm::Mf | Algorithm::Bp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum InitKind {
    #[default]
    Ones,
    Zeros,
}

impl From<InitKind> for Init {
    fn from(kind: InitKind) -> Self {
        match kind {
            InitKind::Ones => Init::AllOnes,
            InitKind::Zeros => Init::AllZeros,
        }
    }
}

/// Where the limit value for residuals comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ReferenceSpec {
    #[default]
    None,
    /// The matching iteration (mf or bp) from the same start, run to
    /// tolerance 1e-13.
    LongRun,
    /// Perturbed-field ellipsoid solve at ε = 1e-12.
    Ellipsoid,
    /// Brute-force log Z.
    Exact,
    Value(f64),
}

impl FromStr for ReferenceSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(ReferenceSpec::None),
            "long" => Ok(ReferenceSpec::LongRun),
            "ellipsoid" => Ok(ReferenceSpec::Ellipsoid),
            "exact" => Ok(ReferenceSpec::Exact),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(ReferenceSpec::Value)
                .ok_or_else(|| format!("expected none, long, ellipsoid, exact or a number, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    File(PathBuf),
    Generated {
        topology: Topology,
        beta: f64,
        field: FieldSpec,
        seed: u64,
    },
}

impl ModelSource {
    pub fn load(&self) -> Result<IsingModel> {
        match self {
            ModelSource::File(path) => Ok(load_model(&error::read(path)?)?),
            ModelSource::Generated {
                topology,
                beta,
                field,
                seed,
            } => Ok(generate_topology(*topology, *beta, *field, *seed)?),
        }
    }

    /// Builds a source from the raw flags, requiring exactly one of `--model`
    /// and `--topology`.
    pub fn from_flags(
        model: Option<PathBuf>,
        topology: Option<Topology>,
        beta: Option<f64>,
        field: Option<FieldSpec>,
        seed: u64,
    ) -> Result<Self> {
        match (model, topology) {
            (Some(_), Some(_)) => Err(CliError::invalid("give either --model or --topology, not both")),
            (None, None) => Err(CliError::invalid(
                "a model is required: --model FILE or --topology SPEC",
            )),
            (Some(path), None) => {
                if beta.is_some() || field.is_some() {
                    return Err(CliError::invalid("--beta and --field only apply to --topology"));
                }
                Ok(ModelSource::File(path))
            }
            (None, Some(topology)) => {
                let beta = beta.ok_or_else(|| CliError::invalid("--topology needs --beta"))?;
                if !(beta.is_finite() && beta >= 0.0) {
                    return Err(CliError::invalid(format!(
                        "--beta must be finite and nonnegative, got {beta}"
                    )));
                }
                Ok(ModelSource::Generated {
                    topology,
                    beta,
                    field: field.unwrap_or_default(),
                    seed,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: ModelSource,
    pub algorithm: Algorithm,
    pub init: InitKind,
    pub max_steps: usize,
    /// Zero runs exactly `max_steps` steps.
    pub tol: f64,
    pub epsilon: Option<f64>,
    pub reference: ReferenceSpec,
    pub exact_max_n: usize,
    pub out: PathBuf,
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn new(source: ModelSource, algorithm: Algorithm, out: PathBuf) -> Self {
        ExperimentConfig {
            source,
            algorithm,
            init: InitKind::Ones,
            max_steps: 1000,
            tol: 0.0,
            epsilon: None,
            reference: ReferenceSpec::None,
            exact_max_n: EXACT_MAX_N,
            out,
            plot: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithm.is_ellipsoid() {
            match self.epsilon {
                Some(eps) if eps > 0.0 && eps.is_finite() => {}
                Some(eps) => return Err(CliError::invalid(format!("--eps must be positive, got {eps}"))),
                None => return Err(CliError::invalid(format!("{} needs --eps", self.algorithm))),
            }
        } else if self.epsilon.is_some() {
            return Err(CliError::invalid(
                "--eps only applies to ellipsoid_bethe and ellipsoid_mf",
            ));
        }
        if self.algorithm.is_iterative() && self.max_steps == 0 {
            return Err(CliError::invalid("--steps must be at least 1"));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(CliError::invalid(format!(
                "--tol must be nonnegative, got {}",
                self.tol
            )));
        }
        let direct = matches!(self.algorithm, Algorithm::Exact | Algorithm::TransferMatrix);
        if direct && matches!(self.reference, ReferenceSpec::LongRun | ReferenceSpec::Ellipsoid) {
            return Err(CliError::invalid(format!(
                "--ref long and --ref ellipsoid do not apply to {}",
                self.algorithm
            )));
        }
        Ok(())
    }
}
