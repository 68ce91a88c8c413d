//! The solved-equilibrium artifact: a self-contained JSON document carrying
//! the game it was solved from, the solution vectors, and the verification
//! and bottleneck summaries. Writes are atomic (temp file + rename) and all
//! numeric fields round-trip exactly through JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use gridnash_core::analysis::BottleneckReport;
use gridnash_core::network::{FlowVector, ProductionVector};
use gridnash_core::solver::{Equilibrium, KktReport};

use crate::config::{build_game, GameConfig, LoadedGame};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumArtifact {
    pub schema_version: u32,
    pub tool_version: String,
    /// `potential` or `br`.
    pub method: String,
    /// The full input configuration, so the artifact can be re-verified and
    /// analyzed on its own.
    pub game: GameConfig,
    pub solver: SolverSettings,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Productions in `game.producers` order.
    pub production: Vec<f64>,
    /// Signed flows in `game.lines` order.
    pub flows: Vec<f64>,
    /// Consumptions in `game.markets` order.
    pub consumption: Vec<f64>,
    pub prices: Vec<f64>,
    pub potential: Option<f64>,
    pub kkt: Option<KktSummary>,
    pub cuts: Option<CutSummary>,
    /// Wall-clock solve time; excluded from determinism comparisons.
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KktSummary {
    pub tol: f64,
    pub max_residual: f64,
    pub passed: bool,
}

impl From<&KktReport> for KktSummary {
    fn from(report: &KktReport) -> Self {
        KktSummary {
            tol: report.tol,
            max_residual: report.max_residual,
            passed: report.passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutSummary {
    pub passed: bool,
    pub discordant_passed: bool,
    pub price_tol: f64,
    pub sat_tol: f64,
    pub mean_price: f64,
    pub groups: Vec<GroupSummary>,
    /// Pairs straddling the mean price, each with its cut (market ids) when
    /// one was found.
    pub pairs: Vec<PairSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSummary {
    pub price: f64,
    pub market_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSummary {
    pub low_id: u64,
    pub high_id: u64,
    pub low_price: f64,
    pub high_price: f64,
    pub cut_market_ids: Option<Vec<u64>>,
}

pub fn cut_summary(
    loaded: &LoadedGame,
    report: &BottleneckReport,
    price_tol: f64,
    sat_tol: f64,
) -> CutSummary {
    let ids =
        |indices: &[usize]| -> Vec<u64> { indices.iter().map(|&j| loaded.market_ids[j]).collect() };
    CutSummary {
        passed: report.passed,
        discordant_passed: report.discordant_passed,
        price_tol,
        sat_tol,
        mean_price: report.price_groups.mean_price,
        groups: report
            .price_groups
            .groups
            .iter()
            .map(|g| GroupSummary {
                price: g.price,
                market_ids: ids(&g.markets),
            })
            .collect(),
        pairs: report
            .straddling
            .iter()
            .map(|p| PairSummary {
                low_id: loaded.market_ids[p.low],
                high_id: loaded.market_ids[p.high],
                low_price: p.low_price,
                high_price: p.high_price,
                cut_market_ids: p.certificate.as_ref().map(|c| ids(&c.cut_set)),
            })
            .collect(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid artifact JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("artifact schema version {got} is unsupported (this build reads {expected})")]
    SchemaVersion { got: u32, expected: u32 },
    #[error("artifact is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

impl EquilibriumArtifact {
    pub fn equilibrium(&self) -> Equilibrium {
        Equilibrium {
            production: ProductionVector::new(self.production.clone()),
            flows: FlowVector::new(self.flows.clone()),
            consumption: self.consumption.clone(),
            prices: self.prices.clone(),
            potential: self.potential,
            iterations: self.iterations,
            converged: self.converged,
            residual: self.residual,
        }
    }

    /// Rebuild the validated game embedded in the artifact and check that the
    /// solution vectors have matching dimensions.
    pub fn load_game(&self) -> Result<LoadedGame, ArtifactError> {
        let loaded = build_game(self.game.clone())?;
        let checks = [
            (self.production.len(), loaded.game.producers(), "production"),
            (self.flows.len(), loaded.game.line_count(), "flows"),
            (self.consumption.len(), loaded.game.markets(), "consumption"),
            (self.prices.len(), loaded.game.markets(), "prices"),
        ];
        for (got, expected, what) in checks {
            if got != expected {
                return Err(ArtifactError::Inconsistent(format!(
                    "{what} has length {got}, expected {expected}"
                )));
            }
        }
        Ok(loaded)
    }
}

pub fn load_artifact(path: &Path) -> Result<EquilibriumArtifact, ArtifactError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: display.clone(),
        source,
    })?;
    let artifact: EquilibriumArtifact =
        serde_json::from_str(&text).map_err(|source| ArtifactError::Json {
            path: display,
            source,
        })?;
    if artifact.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(ArtifactError::SchemaVersion {
            got: artifact.schema_version,
            expected: ARTIFACT_SCHEMA_VERSION,
        });
    }
    Ok(artifact)
}

/// Serialize and atomically replace `path` (write to a temp file in the same
/// directory, then rename).
pub fn write_artifact(path: &Path, artifact: &EquilibriumArtifact) -> Result<(), ArtifactError> {
    let text = serde_json::to_string_pretty(artifact).expect("artifact serializes");
    atomic_write(path, text.as_bytes())
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    use std::io::Write;
    let display = path.display().to_string();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new("."))).map_err(
        |source| ArtifactError::Write {
            path: display.clone(),
            source,
        },
    )?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.write_all(b"\n"))
        .map_err(|source| ArtifactError::Write {
            path: display.clone(),
            source,
        })?;
    tmp.persist(path).map_err(|e| ArtifactError::Write {
        path: display,
        source: e.error,
    })?;
    Ok(())
}
