//! JSON game configuration: schema, semantic checks with field-path error
//! messages, and conversion to a validated [`GameInstance`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use gridnash_core::game::{CostFunction, GameInstance, PriceFunction};
use gridnash_core::network::{Line, MarketGraph, ProducerMap};
use gridnash_core::solver::SolverOptions;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub schema_version: u32,
    pub markets: Vec<MarketConfig>,
    #[serde(default)]
    pub lines: Vec<LineConfig>,
    #[serde(default)]
    pub producers: Vec<ProducerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub price: PriceConfig,
}

/// Affine inverse demand `P(d) = alpha - beta d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: u64,
    pub to: u64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerConfig {
    pub id: u64,
    pub market: u64,
    pub cost: CostConfig,
}

/// Quadratic production cost `C(q) = theta q^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub theta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{field}: {message}")]
    Schema { field: String, message: String },
}

fn schema_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

/// A parsed and validated game, with the id maps needed to report results in
/// the configuration's identifiers.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub config: GameConfig,
    pub game: GameInstance,
    pub options: SolverOptions,
    /// Market index -> configured id.
    pub market_ids: Vec<u64>,
    /// Producer index -> configured id.
    pub producer_ids: Vec<u64>,
}

impl LoadedGame {
    pub fn market_id(&self, index: usize) -> u64 {
        self.market_ids[index]
    }
}

/// Read, parse, schema-check and validate a config file.
pub fn load_config(path: &Path) -> Result<LoadedGame, ConfigError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let config: GameConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: display,
        source,
    })?;
    build_game(config)
}

/// Validate an in-memory config and construct the game.
pub fn build_game(config: GameConfig) -> Result<LoadedGame, ConfigError> {
    if config.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(schema_err(
            "schema_version",
            format!(
                "unsupported version {} (this build reads version {CONFIG_SCHEMA_VERSION})",
                config.schema_version
            ),
        ));
    }
    if config.markets.is_empty() {
        return Err(schema_err("markets", "at least one market is required"));
    }

    let mut market_index: HashMap<u64, usize> = HashMap::new();
    for (k, market) in config.markets.iter().enumerate() {
        if market_index.insert(market.id, k).is_some() {
            return Err(schema_err(
                format!("markets[{k}].id"),
                format!("duplicate market id {}", market.id),
            ));
        }
        if !market.price.alpha.is_finite() || market.price.alpha <= 0.0 {
            return Err(schema_err(
                format!("markets[{k}].price.alpha"),
                format!("alpha must be finite and > 0 (got {})", market.price.alpha),
            ));
        }
        if !market.price.beta.is_finite() || market.price.beta <= 0.0 {
            return Err(schema_err(
                format!("markets[{k}].price.beta"),
                format!("beta must be finite and > 0 (got {})", market.price.beta),
            ));
        }
    }

    let mut lines = Vec::with_capacity(config.lines.len());
    for (k, line) in config.lines.iter().enumerate() {
        let tail = *market_index.get(&line.from).ok_or_else(|| {
            schema_err(
                format!("lines[{k}].from"),
                format!("unknown market id {}", line.from),
            )
        })?;
        let head = *market_index.get(&line.to).ok_or_else(|| {
            schema_err(
                format!("lines[{k}].to"),
                format!("unknown market id {}", line.to),
            )
        })?;
        if line.from == line.to {
            return Err(schema_err(
                format!("lines[{k}].to"),
                format!("line connects market id {} to itself", line.to),
            ));
        }
        if !line.capacity.is_finite() || line.capacity < 0.0 {
            return Err(schema_err(
                format!("lines[{k}].capacity"),
                format!("capacity must be finite and >= 0 (got {})", line.capacity),
            ));
        }
        lines.push(Line::new(tail, head, line.capacity));
    }

    let mut seen_producers: HashMap<u64, usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(config.producers.len());
    for (k, producer) in config.producers.iter().enumerate() {
        if seen_producers.insert(producer.id, k).is_some() {
            return Err(schema_err(
                format!("producers[{k}].id"),
                format!("duplicate producer id {}", producer.id),
            ));
        }
        let market = *market_index.get(&producer.market).ok_or_else(|| {
            schema_err(
                format!("producers[{k}].market"),
                format!("unknown market id {}", producer.market),
            )
        })?;
        if !producer.cost.theta.is_finite() || producer.cost.theta < 0.0 {
            return Err(schema_err(
                format!("producers[{k}].cost.theta"),
                format!(
                    "theta must be finite and >= 0 (got {})",
                    producer.cost.theta
                ),
            ));
        }
        assignment.push(market);
    }

    let graph = MarketGraph::new(config.markets.len(), lines)
        .map_err(|e| schema_err("lines", e.to_string()))?;
    if !graph.is_connected() {
        return Err(schema_err(
            "lines",
            "the line graph leaves some markets unreachable (no isolated markets allowed)",
        ));
    }

    let prices = config
        .markets
        .iter()
        .map(|m| PriceFunction::affine(m.price.alpha, m.price.beta))
        .collect();
    let costs = config
        .producers
        .iter()
        .map(|p| CostFunction::quadratic(p.cost.theta))
        .collect();
    let game = GameInstance::new(graph, ProducerMap::new(assignment), prices, costs)
        .map_err(|e| schema_err("game", e.to_string()))?;

    let defaults = SolverOptions::default();
    let solver = config.solver.clone().unwrap_or_default();
    let options = SolverOptions {
        tol: solver.tol.unwrap_or(defaults.tol),
        max_iters: solver.max_iters.unwrap_or(defaults.max_iters),
        seed: solver.seed.unwrap_or(defaults.seed),
        ..defaults
    };

    Ok(LoadedGame {
        market_ids: config.markets.iter().map(|m| m.id).collect(),
        producer_ids: config.producers.iter().map(|p| p.id).collect(),
        game,
        options,
        config,
    })
}
