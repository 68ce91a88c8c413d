//! Equilibrium diagnostics: price groups, saturated-cut certificates, and
//! per-line congestion reports.
//!
//! At a verified equilibrium, a price difference between two markets can only
//! persist if the network blocks further redistribution: every line on some
//! cut separating the cheap market from the dear one must carry flow exactly
//! at capacity in the outward direction. [`certify_bottlenecks`] locates such
//! a cut for every price-discordant market pair by breadth-first closure over
//! residual (non-saturated) line directions — if the dear market were
//! reachable, the market maker could still push flow toward it and the prices
//! could not differ.

use alloc::vec;
use alloc::vec::Vec;

use crate::game::GameInstance;
use crate::network::{FlowVector, MarketGraph, NetworkError};
use crate::solver::{verify_equilibrium, Equilibrium, KktReport, SolverError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("markets {low} and {high} must differ")]
    IdenticalPair { low: usize, high: usize },
    #[error("tolerance {value} must be positive")]
    NonPositiveTolerance { value: f64 },
    #[error(
        "point does not verify as an equilibrium (max first-order residual {max_residual} > {tol})"
    )]
    UnverifiedEquilibrium { max_residual: f64, tol: f64 },
}

/// Markets sharing one equilibrium price, within the clustering tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceGroup {
    /// Mean price of the group's members.
    pub price: f64,
    /// Member market indices, ascending.
    pub markets: Vec<usize>,
}

/// Partition of the markets by equilibrium price, sorted by descending price.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceGroupReport {
    pub groups: Vec<PriceGroup>,
    /// Arithmetic mean price over all markets.
    pub mean_price: f64,
    pub tol: f64,
}

impl PriceGroupReport {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Single-linkage clustering of the price vector on the real line: sort, then
/// split wherever consecutive prices gap by more than `tol`.
pub fn price_groups(prices: &[f64], tol: f64) -> Result<PriceGroupReport, AnalysisError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(AnalysisError::NonPositiveTolerance { value: tol });
    }
    let mut order: Vec<usize> = (0..prices.len()).collect();
    order.sort_by(|&a, &b| {
        prices[b]
            .partial_cmp(&prices[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });

    let mut groups: Vec<PriceGroup> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    for (pos, &j) in order.iter().enumerate() {
        if pos > 0 {
            let previous = prices[order[pos - 1]];
            if previous - prices[j] > tol {
                groups.push(close_group(core::mem::take(&mut members), prices));
            }
        }
        members.push(j);
    }
    if !members.is_empty() {
        groups.push(close_group(members, prices));
    }

    let mean_price = if prices.is_empty() {
        0.0
    } else {
        prices.iter().sum::<f64>() / prices.len() as f64
    };
    Ok(PriceGroupReport {
        groups,
        mean_price,
        tol,
    })
}

fn close_group(mut members: Vec<usize>, prices: &[f64]) -> PriceGroup {
    members.sort_unstable();
    let price = members.iter().map(|&j| prices[j]).sum::<f64>() / members.len() as f64;
    PriceGroup {
        price,
        markets: members,
    }
}

/// Markets the market maker could still push incremental flow to from the
/// source set: breadth-first closure where a line is traversable tail→head if
/// it has forward headroom `c - f > sat_tol`, and head→tail if it has reverse
/// headroom `c + f > sat_tol`. Returns the closure sorted ascending.
pub fn residual_reachable(
    graph: &MarketGraph,
    flows: &FlowVector,
    sources: &[usize],
    sat_tol: f64,
) -> Result<Vec<usize>, AnalysisError> {
    let mask = residual_mask(graph, flows, sources, sat_tol)?;
    Ok((0..graph.markets()).filter(|&j| mask[j]).collect())
}

fn residual_mask(
    graph: &MarketGraph,
    flows: &FlowVector,
    sources: &[usize],
    sat_tol: f64,
) -> Result<Vec<bool>, AnalysisError> {
    if flows.len() != graph.line_count() {
        return Err(NetworkError::DimensionMismatch {
            quantity: "flow vector",
            got: flows.len(),
            expected: graph.line_count(),
        }
        .into());
    }
    let mut mask = vec![false; graph.markets()];
    let mut queue: alloc::collections::VecDeque<usize> = alloc::collections::VecDeque::new();
    for &s in sources {
        if s >= graph.markets() {
            return Err(NetworkError::InvalidMarket {
                market: s,
                markets: graph.markets(),
            }
            .into());
        }
        if !mask[s] {
            mask[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for (k, line) in graph.lines().iter().enumerate() {
            let target = if line.tail == u && line.capacity - flows[k] > sat_tol {
                line.head
            } else if line.head == u && line.capacity + flows[k] > sat_tol {
                line.tail
            } else {
                continue;
            };
            if !mask[target] {
                mask[target] = true;
                queue.push_back(target);
            }
        }
    }
    Ok(mask)
}

/// A line crossing the boundary of a cut set.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingLine {
    pub line: usize,
    /// Whether the line is oriented out of the cut set (tail inside).
    pub leaves_cut: bool,
    /// Residual capacity in the outward direction; at most the saturation
    /// tolerance by construction.
    pub outward_slack: f64,
}

/// A saturated cut separating a low-price market from a high-price one: every
/// crossing line carries flow at capacity in the outward direction.
#[derive(Clone, Debug, PartialEq)]
pub struct CutCertificate {
    pub low_market: usize,
    pub high_market: usize,
    /// The residual closure of the low-price side, sorted ascending.
    pub cut_set: Vec<usize>,
    pub crossing: Vec<CrossingLine>,
}

/// Search for a saturated cut with `low` inside and `high` outside: the
/// residual closure of `low`. Returns `None` when `high` is reachable (no such
/// cut exists at this point).
pub fn find_saturated_cut(
    graph: &MarketGraph,
    flows: &FlowVector,
    low: usize,
    high: usize,
    sat_tol: f64,
) -> Result<Option<CutCertificate>, AnalysisError> {
    if low == high {
        return Err(AnalysisError::IdenticalPair { low, high });
    }
    for market in [low, high] {
        if market >= graph.markets() {
            return Err(NetworkError::InvalidMarket {
                market,
                markets: graph.markets(),
            }
            .into());
        }
    }
    let mask = residual_mask(graph, flows, &[low], sat_tol)?;
    if mask[high] {
        return Ok(None);
    }

    let mut crossing = Vec::new();
    for (k, line) in graph.lines().iter().enumerate() {
        let (inside, outside) = (mask[line.tail], mask[line.head]);
        if inside == outside {
            continue;
        }
        // Outward residual headroom: forward for lines leaving the cut,
        // reverse for lines entering it. Both are <= sat_tol, otherwise the
        // closure would have crossed.
        let leaves_cut = inside;
        let outward_slack = if leaves_cut {
            line.capacity - flows[k]
        } else {
            line.capacity + flows[k]
        };
        crossing.push(CrossingLine {
            line: k,
            leaves_cut,
            outward_slack,
        });
    }

    Ok(Some(CutCertificate {
        low_market: low,
        high_market: high,
        cut_set: (0..graph.markets()).filter(|&j| mask[j]).collect(),
        crossing,
    }))
}

/// Result of the cut search for one price-discordant market pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCheck {
    pub low: usize,
    pub high: usize,
    pub low_price: f64,
    pub high_price: f64,
    pub certificate: Option<CutCertificate>,
}

/// Full price-difference diagnosis of a verified equilibrium.
#[derive(Clone, Debug)]
pub struct BottleneckReport {
    pub price_groups: PriceGroupReport,
    pub kkt: KktReport,
    /// Pairs whose prices straddle the mean price (low below, high above, by
    /// more than the price tolerance). A saturated cut must exist for each.
    pub straddling: Vec<PairCheck>,
    /// Stricter diagnostic: every ordered pair with a price gap beyond the
    /// tolerance, regardless of the mean.
    pub discordant: Vec<PairCheck>,
    /// All straddling pairs carry a certificate.
    pub passed: bool,
    /// All discordant pairs carry a certificate.
    pub discordant_passed: bool,
}

impl BottleneckReport {
    pub fn mean_price(&self) -> f64 {
        self.price_groups.mean_price
    }
}

/// Verify the first-order conditions at `eq` and certify that every
/// price-discordant market pair is separated by a saturated cut.
///
/// Errors if the point fails verification at `kkt_tol`; on a verified
/// equilibrium of a valid game the report always passes.
pub fn certify_bottlenecks(
    game: &GameInstance,
    eq: &Equilibrium,
    kkt_tol: f64,
    price_tol: f64,
    sat_tol: f64,
) -> Result<BottleneckReport, AnalysisError> {
    if price_tol.is_nan() || price_tol <= 0.0 {
        return Err(AnalysisError::NonPositiveTolerance { value: price_tol });
    }
    let kkt = verify_equilibrium(game, &eq.production, &eq.flows, kkt_tol)?;
    if !kkt.passed {
        return Err(AnalysisError::UnverifiedEquilibrium {
            max_residual: kkt.max_residual,
            tol: kkt_tol,
        });
    }

    let prices = &eq.prices;
    let groups = price_groups(prices, price_tol)?;
    let mean = groups.mean_price;

    let mut straddling = Vec::new();
    let mut discordant = Vec::new();
    let m = game.markets();
    for low in 0..m {
        for high in 0..m {
            if low == high || prices[low] >= prices[high] - price_tol {
                continue;
            }
            let check = PairCheck {
                low,
                high,
                low_price: prices[low],
                high_price: prices[high],
                certificate: find_saturated_cut(game.graph(), &eq.flows, low, high, sat_tol)?,
            };
            if prices[low] < mean - price_tol && prices[high] > mean + price_tol {
                straddling.push(check.clone());
            }
            discordant.push(check);
        }
    }

    let passed = straddling.iter().all(|p| p.certificate.is_some());
    let discordant_passed = discordant.iter().all(|p| p.certificate.is_some());
    Ok(BottleneckReport {
        price_groups: groups,
        kkt,
        straddling,
        discordant,
        passed,
        discordant_passed,
    })
}

/// Per-line congestion record.
#[derive(Clone, Debug, PartialEq)]
pub struct LineFlow {
    pub line: usize,
    pub tail: usize,
    pub head: usize,
    pub flow: f64,
    pub capacity: f64,
    /// `|flow| / capacity`, zero for zero-capacity lines.
    pub utilization: f64,
    pub saturated: bool,
    /// Zero-capacity line (necessarily carrying zero flow).
    pub degenerate: bool,
}

/// Tabulate every line's flow, utilization and saturation status.
pub fn flow_report(
    graph: &MarketGraph,
    flows: &FlowVector,
    sat_tol: f64,
) -> Result<Vec<LineFlow>, AnalysisError> {
    if flows.len() != graph.line_count() {
        return Err(NetworkError::DimensionMismatch {
            quantity: "flow vector",
            got: flows.len(),
            expected: graph.line_count(),
        }
        .into());
    }
    Ok(graph
        .lines()
        .iter()
        .enumerate()
        .map(|(k, line)| {
            let degenerate = line.capacity <= 0.0;
            let utilization = if degenerate {
                0.0
            } else {
                flows[k].abs() / line.capacity
            };
            LineFlow {
                line: k,
                tail: line.tail,
                head: line.head,
                flow: flows[k],
                capacity: line.capacity,
                utilization,
                saturated: line.capacity - flows[k].abs() <= sat_tol,
                degenerate,
            }
        })
        .collect())
}

/// Default absolute saturation tolerance for a graph: `1e-6` of the largest
/// capacity (at least `1e-6`). Projection clamps saturated flows exactly, but
/// ascent endpoints may rest within solver tolerance of a bound.
pub fn default_saturation_tol(graph: &MarketGraph) -> f64 {
    let c_max = graph
        .lines()
        .iter()
        .fold(0.0f64, |acc, line| acc.max(line.capacity));
    1e-6 * c_max.max(1.0)
}
