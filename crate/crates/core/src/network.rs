//! The transport network: markets, capacity-constrained lines, and the
//! producer-to-market assignment.
//!
//! Lines carry an arbitrary but fixed orientation; a signed flow vector `f`
//! induces net injections `r` with `r[head] += f` and `r[tail] -= f` per line,
//! so injections always sum to zero. Consumption in each market is the local
//! production plus the net injection.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

/// A transmission line from `tail` to `head` with a finite capacity bound on
/// the absolute flow. Positive flow moves energy tail → head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
}

impl Line {
    pub fn new(tail: usize, head: usize, capacity: f64) -> Self {
        Line {
            tail,
            head,
            capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("graph must contain at least one market")]
    NoMarkets,
    #[error("line {line}: market index {market} out of range (graph has {markets} markets)")]
    MarketOutOfRange {
        line: usize,
        market: usize,
        markets: usize,
    },
    #[error("line {line}: self-loop on market {market}")]
    SelfLoop { line: usize, market: usize },
    #[error("line {line}: capacity {capacity} is not finite")]
    NonFiniteCapacity { line: usize, capacity: f64 },
    #[error("{quantity} has length {got}, expected {expected}")]
    DimensionMismatch {
        quantity: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("market index {market} out of range (graph has {markets} markets)")]
    InvalidMarket { market: usize, markets: usize },
}

/// Signed line flows, one entry per line in graph order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowVector(Vec<f64>);

/// Nonnegative production quantities, one entry per producer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProductionVector(Vec<f64>);

macro_rules! vector_newtype {
    ($name:ident) => {
        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                $name(values)
            }

            pub fn zeros(len: usize) -> Self {
                $name(vec![0.0; len])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub fn iter(&self) -> core::slice::Iter<'_, f64> {
                self.0.iter()
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                $name(values)
            }
        }

        impl Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

vector_newtype!(FlowVector);
vector_newtype!(ProductionVector);

/// The market graph: `markets` nodes connected by capacity-bounded lines.
///
/// Construction rejects structurally broken inputs (dangling endpoints,
/// self-loops, non-finite capacities); softer modelling rules — connectivity
/// and capacity nonnegativity — are reported by [`validate`] so that callers
/// can surface every violation at once.
#[derive(Clone, Debug)]
pub struct MarketGraph {
    markets: usize,
    lines: Vec<Line>,
}

impl MarketGraph {
    pub fn new(markets: usize, lines: Vec<Line>) -> Result<Self, NetworkError> {
        if markets == 0 {
            return Err(NetworkError::NoMarkets);
        }
        for (k, line) in lines.iter().enumerate() {
            for market in [line.tail, line.head] {
                if market >= markets {
                    return Err(NetworkError::MarketOutOfRange {
                        line: k,
                        market,
                        markets,
                    });
                }
            }
            if line.tail == line.head {
                return Err(NetworkError::SelfLoop {
                    line: k,
                    market: line.tail,
                });
            }
            if !line.capacity.is_finite() {
                return Err(NetworkError::NonFiniteCapacity {
                    line: k,
                    capacity: line.capacity,
                });
            }
        }
        Ok(MarketGraph { markets, lines })
    }

    pub fn markets(&self) -> usize {
        self.markets
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.capacity).collect()
    }

    /// Net injections `r` produced by a flow vector: per line, `+f` at the
    /// head and `-f` at the tail. Entries sum to zero up to rounding.
    pub fn net_injections(&self, flows: &FlowVector) -> Result<Vec<f64>, NetworkError> {
        if flows.len() != self.lines.len() {
            return Err(NetworkError::DimensionMismatch {
                quantity: "flow vector",
                got: flows.len(),
                expected: self.lines.len(),
            });
        }
        let mut r = vec![0.0; self.markets];
        for (line, &f) in self.lines.iter().zip(flows.iter()) {
            r[line.tail] -= f;
            r[line.head] += f;
        }
        Ok(r)
    }

    /// Total capacity of the lines incident to `market`: an upper bound on the
    /// magnitude of the net injection any feasible flow can deliver there.
    pub fn incident_capacity(&self, market: usize) -> Result<f64, NetworkError> {
        if market >= self.markets {
            return Err(NetworkError::InvalidMarket {
                market,
                markets: self.markets,
            });
        }
        Ok(self
            .lines
            .iter()
            .filter(|l| l.tail == market || l.head == market)
            .map(|l| l.capacity)
            .sum())
    }

    /// Number of lines incident to `market` (parallel lines each count).
    pub fn degree(&self, market: usize) -> usize {
        self.lines
            .iter()
            .filter(|l| l.tail == market || l.head == market)
            .count()
    }

    /// Whether `flows` satisfies `|f| <= c` with the given absolute slack.
    pub fn is_feasible_flow(&self, flows: &FlowVector, slack: f64) -> bool {
        flows.len() == self.lines.len()
            && self
                .lines
                .iter()
                .zip(flows.iter())
                .all(|(l, &f)| f.abs() <= l.capacity + slack)
    }

    /// Connectivity of the undirected graph induced by the lines.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.markets];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for line in &self.lines {
                let v = if line.tail == u {
                    line.head
                } else if line.head == u {
                    line.tail
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Assignment of each producer to the single market it sells into.
#[derive(Clone, Debug, PartialEq)]
pub struct ProducerMap {
    assignment: Vec<usize>,
}

impl ProducerMap {
    /// Entries are market indices; range checking against a concrete graph
    /// happens in [`validate`].
    pub fn new(assignment: Vec<usize>) -> Self {
        ProducerMap { assignment }
    }

    pub fn producers(&self) -> usize {
        self.assignment.len()
    }

    pub fn market_of(&self, producer: usize) -> usize {
        self.assignment[producer]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Producer counts per market.
    pub fn per_market_counts(&self, markets: usize) -> Vec<usize> {
        let mut counts = vec![0usize; markets];
        for &j in &self.assignment {
            if j < markets {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Total production delivered to each market (the `H^T q` aggregation).
    pub fn market_supply(
        &self,
        q: &ProductionVector,
        markets: usize,
    ) -> Result<Vec<f64>, NetworkError> {
        if q.len() != self.assignment.len() {
            return Err(NetworkError::DimensionMismatch {
                quantity: "production vector",
                got: q.len(),
                expected: self.assignment.len(),
            });
        }
        let mut supply = vec![0.0; markets];
        for (&j, &qi) in self.assignment.iter().zip(q.iter()) {
            if j >= markets {
                return Err(NetworkError::InvalidMarket { market: j, markets });
            }
            supply[j] += qi;
        }
        Ok(supply)
    }
}

/// Consumption per market: net injections plus local production.
pub fn consumption(
    graph: &MarketGraph,
    pmap: &ProducerMap,
    q: &ProductionVector,
    f: &FlowVector,
) -> Result<Vec<f64>, NetworkError> {
    let mut d = graph.net_injections(f)?;
    let supply = pmap.market_supply(q, graph.markets())?;
    for (dj, sj) in d.iter_mut().zip(supply) {
        *dj += sj;
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationRule {
    /// No isolated markets: the line graph is connected.
    Connectivity,
    /// Line capacities are nonnegative.
    CapacityNonnegative,
    /// Every producer sells on exactly one existing market.
    SingleMarketAssignment,
    /// Inverse demand is strictly decreasing, concave, with a positive root.
    PriceShape,
    /// Production cost is nondecreasing and convex.
    CostShape,
}

impl core::fmt::Display for ValidationRule {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let name = match self {
            ValidationRule::Connectivity => "connectivity",
            ValidationRule::CapacityNonnegative => "capacity-nonnegative",
            ValidationRule::SingleMarketAssignment => "single-market-assignment",
            ValidationRule::PriceShape => "price-shape",
            ValidationRule::CostShape => "cost-shape",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug)]
pub struct RuleCheck {
    pub rule: ValidationRule,
    pub passed: bool,
    /// Human-readable description of the first few violations; empty on pass.
    pub detail: String,
}

/// Outcome of the modelling-rule checks; carries failures instead of erroring
/// so every broken rule can be reported at once.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<RuleCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn push(&mut self, rule: ValidationRule, failures: Vec<String>) {
        self.checks.push(RuleCheck {
            rule,
            passed: failures.is_empty(),
            detail: failures.join("; "),
        });
    }

    pub fn failures(&self) -> impl Iterator<Item = &RuleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn summary(&self) -> String {
        if self.passed() {
            String::from("all rules passed")
        } else {
            let mut parts = Vec::new();
            for check in self.failures() {
                parts.push(format!("{}: {}", check.rule, check.detail));
            }
            parts.join("; ")
        }
    }
}

/// Check the network-level modelling rules: connectivity, nonnegative
/// capacities, and the one-market-per-producer assignment.
pub fn validate(graph: &MarketGraph, pmap: &ProducerMap) -> ValidationReport {
    let mut report = ValidationReport::default();

    let connectivity = if graph.is_connected() {
        Vec::new()
    } else {
        vec![String::from(
            "the line graph leaves some markets unreachable",
        )]
    };
    report.push(ValidationRule::Connectivity, connectivity);

    let mut capacity = Vec::new();
    for (k, line) in graph.lines().iter().enumerate() {
        if line.capacity < 0.0 {
            capacity.push(format!("line {k}: capacity {} is negative", line.capacity));
        }
    }
    report.push(ValidationRule::CapacityNonnegative, capacity);

    let mut assignment = Vec::new();
    for (i, &j) in pmap.assignment().iter().enumerate() {
        if j >= graph.markets() {
            assignment.push(format!(
                "producer {i}: market {j} out of range ({} markets)",
                graph.markets()
            ));
        }
    }
    report.push(ValidationRule::SingleMarketAssignment, assignment);

    report
}
