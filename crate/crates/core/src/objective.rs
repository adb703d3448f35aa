//! Scalar hardware cost functions over (latency, energy, area).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costmodel::CostMetrics;
use crate::error::{Error, Result};

/// How the three hardware metrics collapse into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum CostFunctionSpec {
    /// `λ_L·latency + λ_E·energy + λ_A·area` in ms, mJ and µm².
    Linear {
        lambda_latency: f64,
        lambda_energy: f64,
        lambda_area: f64,
    },
    /// Energy-delay-area product.
    #[default]
    Edap,
}

impl CostFunctionSpec {
    pub fn linear(lambda_latency: f64, lambda_energy: f64, lambda_area: f64) -> Result<Self> {
        let spec = CostFunctionSpec::Linear {
            lambda_latency,
            lambda_energy,
            lambda_area,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn latency_oriented() -> Self {
        CostFunctionSpec::Linear {
            lambda_latency: 3.3,
            lambda_energy: 0.8,
            lambda_area: 1.0,
        }
    }

    pub fn energy_oriented() -> Self {
        CostFunctionSpec::Linear {
            lambda_latency: 0.2,
            lambda_energy: 2.8,
            lambda_area: 1.0,
        }
    }

    pub fn balanced() -> Self {
        CostFunctionSpec::Linear {
            lambda_latency: 0.6,
            lambda_energy: 0.5,
            lambda_area: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let CostFunctionSpec::Linear {
            lambda_latency,
            lambda_energy,
            lambda_area,
        } = *self
        {
            let w = [lambda_latency, lambda_energy, lambda_area];
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "linear cost weights must be non-negative and not all zero: {w:?}"
                )));
            }
        }
        Ok(())
    }

    /// Linear weights scaled by `factor`; EDAP is returned unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            CostFunctionSpec::Linear {
                lambda_latency,
                lambda_energy,
                lambda_area,
            } => CostFunctionSpec::Linear {
                lambda_latency: lambda_latency * factor,
                lambda_energy: lambda_energy * factor,
                lambda_area: lambda_area * factor,
            },
            CostFunctionSpec::Edap => CostFunctionSpec::Edap,
        }
    }
}


impl fmt::Display for CostFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFunctionSpec::Edap => f.write_str("edap"),
            CostFunctionSpec::Linear {
                lambda_latency,
                lambda_energy,
                lambda_area,
            } => write!(f, "linear:{lambda_latency},{lambda_energy},{lambda_area}"),
        }
    }
}

impl std::str::FromStr for CostFunctionSpec {
    type Err = Error;

    /// Accepts `edap`, `linear:λL,λE,λA`, or one of the presets
    /// `latency`, `energy`, `balanced`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edap" => return Ok(CostFunctionSpec::Edap),
            "latency" => return Ok(Self::latency_oriented()),
            "energy" => return Ok(Self::energy_oriented()),
            "balanced" => return Ok(Self::balanced()),
            _ => {}
        }
        let body = s
            .strip_prefix("linear:")
            .ok_or_else(|| Error::Parse(format!("unknown cost function '{s}'")))?;
        let parts: Vec<f64> = body
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad linear weight '{p}': {e}")))
            })
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            [l, e, a] => Self::linear(*l, *e, *a),
            _ => Err(Error::Parse(format!(
                "linear cost needs three weights, got {}",
                parts.len()
            ))),
        }
    }
}

pub fn cost_hw(metrics: &CostMetrics, spec: &CostFunctionSpec) -> f64 {
    match *spec {
        CostFunctionSpec::Linear {
            lambda_latency,
            lambda_energy,
            lambda_area,
        } => lambda_latency * metrics.latency + lambda_energy * metrics.energy + lambda_area * metrics.area,
        CostFunctionSpec::Edap => metrics.edap(),
    }
}
