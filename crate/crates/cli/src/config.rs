use hardmax::geometry::DEFAULT_TIE_TOL;
use hardmax::sample::{random_tokens, rng};
use hardmax::{factorize_spd, AttentionSpec, RunConfig, SimilarityMode, SpdMatrix, TokenConfiguration};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Hardmax,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGen {
    pub n: usize,
    pub d: usize,
    pub low: f64,
    pub high: f64,
}

/// The JSON document read by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimulationConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    pub alpha: f64,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_gen: Option<RandomGen>,
}

pub struct Simulation {
    pub tokens: TokenConfiguration,
    pub spec: AttentionSpec,
    pub run: RunConfig,
    pub seed: Option<u64>,
}

impl SimulationConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::input("config", e))
    }

    pub fn resolve(&self) -> CliResult<Simulation> {
        let tokens = match (&self.tokens, &self.random_gen) {
            (Some(rows), None) => TokenConfiguration::new(rows.clone())?,
            (None, Some(g)) => {
                if g.n == 0 || g.d == 0 || !(g.low < g.high) || !g.low.is_finite() || !g.high.is_finite() {
                    return Err(CliError::Input("config: randomGen needs n, d > 0 and low < high".into()));
                }
                random_tokens(&mut rng(self.seed.unwrap_or(0)), g.n, g.d, g.low, g.high)
            }
            _ => return Err(CliError::Input("config: give exactly one of `tokens` and `randomGen`".into())),
        };
        let a = match &self.a {
            Some(rows) => factorize_spd(rows)?,
            None => SpdMatrix::identity(tokens.dim()),
        };
        if a.dim() != tokens.dim() {
            return Err(CliError::Input(format!(
                "config: A is {0}x{0} but tokens have dimension {1}",
                a.dim(),
                tokens.dim()
            )));
        }
        let mode = match (self.mode, self.tau) {
            (ModeName::Hardmax, None) => SimilarityMode::Hardmax { tie_tol: self.tie_tol.unwrap_or(DEFAULT_TIE_TOL) },
            (ModeName::Softmax, Some(tau)) if self.tie_tol.is_none() => SimilarityMode::Softmax { tau },
            (ModeName::Softmax, None) => return Err(CliError::Input("config: softmax mode needs `tau`".into())),
            (ModeName::Hardmax, Some(_)) => {
                return Err(CliError::Input("config: `tau` only applies to softmax".into()))
            }
            (ModeName::Softmax, Some(_)) => {
                return Err(CliError::Input("config: `tieTol` only applies to hardmax".into()))
            }
        };
        let spec = AttentionSpec::new(a, self.alpha, mode)?;
        let defaults = RunConfig::default();
        let run = RunConfig {
            max_steps: self.max_steps.unwrap_or(defaults.max_steps),
            convergence_tol: self.convergence_tol.unwrap_or(defaults.convergence_tol),
            ..defaults
        };
        run.validate()?;
        Ok(Simulation { tokens, spec, run, seed: self.seed })
    }
}
