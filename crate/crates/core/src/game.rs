//! Game primitives: inverse demand, production costs, producer utilities,
//! Marshallian welfare, and the potential function of the affine-price game.
//!
//! All quantities are evaluated at a joint state `(q, f)` through the derived
//! consumption `d = net injections + local supply`. Producer `i` earns
//! `q_i * P_j(d_j) - C_i(q_i)` in its market `j`; the market maker's objective
//! is aggregate consumer surplus minus total cost. With affine prices the game
//! admits an exact potential: welfare minus a per-producer quadratic penalty,
//! whose unilateral differences reproduce each producer's utility differences.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::network::{
    consumption, validate, FlowVector, MarketGraph, NetworkError, ProducerMap, ProductionVector,
    ValidationReport, ValidationRule,
};

/// Absolute tolerance of the consumer-surplus quadrature for non-affine
/// inverse demand.
pub const WELFARE_QUADRATURE_TOL: f64 = 1e-9;

/// Number of sample points used when probing shape conditions of user-supplied
/// price and cost evaluators.
const SHAPE_PROBE_POINTS: usize = 33;

pub type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Concave, strictly decreasing inverse demand supplied as evaluators for the
/// function and its first two derivatives, together with its stated positive
/// root (the consumption at which the price reaches zero).
#[derive(Clone)]
pub struct ConcavePrice {
    pub value: Evaluator,
    pub slope: Evaluator,
    pub curvature: Evaluator,
    pub zero_crossing: f64,
}

/// Per-market inverse demand.
#[derive(Clone)]
pub enum PriceFunction {
    /// `P(r) = alpha - beta * r` with `beta > 0`.
    Affine {
        alpha: f64,
        beta: f64,
    },
    Concave(ConcavePrice),
}

impl core::fmt::Debug for PriceFunction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PriceFunction::Affine { alpha, beta } => {
                write!(f, "Affine {{ alpha: {alpha}, beta: {beta} }}")
            }
            PriceFunction::Concave(p) => {
                write!(f, "Concave {{ zero_crossing: {} }}", p.zero_crossing)
            }
        }
    }
}

impl PriceFunction {
    pub fn affine(alpha: f64, beta: f64) -> Self {
        PriceFunction::Affine { alpha, beta }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, PriceFunction::Affine { .. })
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            PriceFunction::Affine { alpha, beta } => alpha - beta * r,
            PriceFunction::Concave(p) => (p.value)(r),
        }
    }

    pub fn slope(&self, r: f64) -> f64 {
        match self {
            PriceFunction::Affine { beta, .. } => -beta,
            PriceFunction::Concave(p) => (p.slope)(r),
        }
    }

    pub fn curvature(&self, r: f64) -> f64 {
        match self {
            PriceFunction::Affine { .. } => 0.0,
            PriceFunction::Concave(p) => (p.curvature)(r),
        }
    }

    /// Consumption at which the price reaches zero.
    pub fn zero_crossing(&self) -> f64 {
        match self {
            PriceFunction::Affine { alpha, beta } => alpha / beta,
            PriceFunction::Concave(p) => p.zero_crossing,
        }
    }

    /// Consumer surplus `∫_0^d P(s) ds`; closed form for the affine variant,
    /// adaptive quadrature otherwise.
    pub fn consumer_surplus(&self, d: f64) -> Result<f64, GameError> {
        match self {
            PriceFunction::Affine { alpha, beta } => Ok(alpha * d - beta * d * d / 2.0),
            PriceFunction::Concave(p) => {
                adaptive_simpson(p.value.as_ref(), 0.0, d, WELFARE_QUADRATURE_TOL)
            }
        }
    }
}

/// Convex, nondecreasing production cost supplied as evaluators for the
/// function and its first two derivatives.
#[derive(Clone)]
pub struct ConvexCost {
    pub value: Evaluator,
    pub slope: Evaluator,
    pub curvature: Evaluator,
}

/// Per-producer production cost.
#[derive(Clone)]
pub enum CostFunction {
    /// `C(q) = theta * q^2` with `theta >= 0`.
    Quadratic {
        theta: f64,
    },
    Convex(ConvexCost),
}

impl core::fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CostFunction::Quadratic { theta } => write!(f, "Quadratic {{ theta: {theta} }}"),
            CostFunction::Convex(_) => write!(f, "Convex {{ .. }}"),
        }
    }
}

impl CostFunction {
    pub fn quadratic(theta: f64) -> Self {
        CostFunction::Quadratic { theta }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, CostFunction::Quadratic { .. })
    }

    pub fn value(&self, q: f64) -> f64 {
        match self {
            CostFunction::Quadratic { theta } => theta * q * q,
            CostFunction::Convex(c) => (c.value)(q),
        }
    }

    pub fn slope(&self, q: f64) -> f64 {
        match self {
            CostFunction::Quadratic { theta } => 2.0 * theta * q,
            CostFunction::Convex(c) => (c.slope)(q),
        }
    }

    pub fn curvature(&self, q: f64) -> f64 {
        match self {
            CostFunction::Quadratic { theta } => 2.0 * theta,
            CostFunction::Convex(c) => (c.curvature)(q),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GameError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("game validation failed: {summary}")]
    Invalid { summary: String },
    #[error("operation requires affine price functions in every market")]
    NonAffinePrices,
    #[error("producer index {producer} out of range ({producers} producers)")]
    InvalidProducer { producer: usize, producers: usize },
    #[error(
        "consumer-surplus quadrature did not converge on [0, {upper}] (best estimate {estimate})"
    )]
    QuadratureDivergence { upper: f64, estimate: f64 },
}

/// A complete game: network, producer assignment, inverse demand per market,
/// and cost per producer. Construction validates every modelling rule and
/// fails with the full list of violations.
#[derive(Clone, Debug)]
pub struct GameInstance {
    graph: MarketGraph,
    pmap: ProducerMap,
    prices: Vec<PriceFunction>,
    costs: Vec<CostFunction>,
}

impl GameInstance {
    pub fn new(
        graph: MarketGraph,
        pmap: ProducerMap,
        prices: Vec<PriceFunction>,
        costs: Vec<CostFunction>,
    ) -> Result<Self, GameError> {
        if prices.len() != graph.markets() {
            return Err(NetworkError::DimensionMismatch {
                quantity: "price functions",
                got: prices.len(),
                expected: graph.markets(),
            }
            .into());
        }
        if costs.len() != pmap.producers() {
            return Err(NetworkError::DimensionMismatch {
                quantity: "cost functions",
                got: costs.len(),
                expected: pmap.producers(),
            }
            .into());
        }
        let game = GameInstance {
            graph,
            pmap,
            prices,
            costs,
        };
        let report = game.validate();
        if !report.passed() {
            return Err(GameError::Invalid {
                summary: report.summary(),
            });
        }
        Ok(game)
    }

    pub fn graph(&self) -> &MarketGraph {
        &self.graph
    }

    pub fn producer_map(&self) -> &ProducerMap {
        &self.pmap
    }

    pub fn prices(&self) -> &[PriceFunction] {
        &self.prices
    }

    pub fn costs(&self) -> &[CostFunction] {
        &self.costs
    }

    pub fn markets(&self) -> usize {
        self.graph.markets()
    }

    pub fn producers(&self) -> usize {
        self.pmap.producers()
    }

    pub fn line_count(&self) -> usize {
        self.graph.line_count()
    }

    /// Market that producer `i` sells into.
    pub fn market_of(&self, producer: usize) -> usize {
        self.pmap.market_of(producer)
    }

    pub fn is_affine(&self) -> bool {
        self.prices.iter().all(PriceFunction::is_affine)
    }

    /// Network rules plus the shape conditions on prices and costs.
    pub fn validate(&self) -> ValidationReport {
        let mut report = validate(&self.graph, &self.pmap);
        report.push(ValidationRule::PriceShape, self.price_shape_failures());
        report.push(ValidationRule::CostShape, self.cost_shape_failures());
        report
    }

    fn price_shape_failures(&self) -> Vec<String> {
        let mut failures = Vec::new();
        for (j, price) in self.prices.iter().enumerate() {
            match price {
                PriceFunction::Affine { alpha, beta } => {
                    if !alpha.is_finite() || !beta.is_finite() {
                        failures.push(format!("prices[{j}]: parameters must be finite"));
                    } else if *beta <= 0.0 {
                        failures.push(format!("prices[{j}]: beta must be > 0 (got {beta})"));
                    } else if *alpha <= 0.0 {
                        failures.push(format!(
                            "prices[{j}]: alpha must be > 0 for a positive zero crossing (got {alpha})"
                        ));
                    }
                }
                PriceFunction::Concave(p) => {
                    if !(p.zero_crossing.is_finite() && p.zero_crossing > 0.0) {
                        failures.push(format!(
                            "prices[{j}]: zero crossing must be positive and finite (got {})",
                            p.zero_crossing
                        ));
                        continue;
                    }
                    let at_root = (p.value)(p.zero_crossing);
                    if at_root.abs() > 1e-6 * (p.value)(0.0).abs().max(1.0) {
                        failures.push(format!(
                            "prices[{j}]: value at stated zero crossing is {at_root}, not 0"
                        ));
                    }
                    for t in probe_grid(p.zero_crossing) {
                        if (p.slope)(t) >= 0.0 {
                            failures.push(format!("prices[{j}]: slope is not negative at r = {t}"));
                            break;
                        }
                        if (p.curvature)(t) > 1e-12 {
                            failures.push(format!("prices[{j}]: curvature is positive at r = {t}"));
                            break;
                        }
                    }
                }
            }
        }
        failures
    }

    fn cost_shape_failures(&self) -> Vec<String> {
        let mut failures = Vec::new();
        for (i, cost) in self.costs.iter().enumerate() {
            match cost {
                CostFunction::Quadratic { theta } => {
                    if !theta.is_finite() || *theta < 0.0 {
                        failures.push(format!(
                            "costs[{i}]: theta must be >= 0 and finite (got {theta})"
                        ));
                    }
                }
                CostFunction::Convex(c) => {
                    // Probe over the producer's strategy box when computable,
                    // else over a unit interval.
                    let hi = self.strategy_bound(i).unwrap_or(1.0).max(1.0);
                    for t in probe_grid(hi) {
                        if (c.slope)(t) < -1e-12 {
                            failures.push(format!("costs[{i}]: slope is negative at q = {t}"));
                            break;
                        }
                        if (c.curvature)(t) < -1e-12 {
                            failures.push(format!("costs[{i}]: curvature is negative at q = {t}"));
                            break;
                        }
                    }
                }
            }
        }
        failures
    }

    pub fn consumption(&self, q: &ProductionVector, f: &FlowVector) -> Result<Vec<f64>, GameError> {
        Ok(consumption(&self.graph, &self.pmap, q, f)?)
    }

    /// Prices at the consumption induced by `(q, f)`.
    pub fn prices_at(&self, q: &ProductionVector, f: &FlowVector) -> Result<Vec<f64>, GameError> {
        let d = self.consumption(q, f)?;
        Ok(self
            .prices
            .iter()
            .zip(d)
            .map(|(p, dj)| p.value(dj))
            .collect())
    }

    /// Net profit of producer `i`: revenue in its market minus its cost.
    pub fn producer_utility(
        &self,
        producer: usize,
        q: &ProductionVector,
        f: &FlowVector,
    ) -> Result<f64, GameError> {
        self.check_producer(producer)?;
        let d = self.consumption(q, f)?;
        let j = self.market_of(producer);
        Ok(q[producer] * self.prices[j].value(d[j]) - self.costs[producer].value(q[producer]))
    }

    /// Marshallian welfare: aggregate consumer surplus minus total cost.
    pub fn marshallian_welfare(
        &self,
        q: &ProductionVector,
        f: &FlowVector,
    ) -> Result<f64, GameError> {
        let d = self.consumption(q, f)?;
        let mut w = 0.0;
        for (price, dj) in self.prices.iter().zip(d) {
            w += price.consumer_surplus(dj)?;
        }
        for (cost, &qi) in self.costs.iter().zip(q.iter()) {
            w -= cost.value(qi);
        }
        Ok(w)
    }

    /// Potential of the affine-price game: welfare minus half the per-producer
    /// quadratic demand penalty in its own market.
    pub fn potential(&self, q: &ProductionVector, f: &FlowVector) -> Result<f64, GameError> {
        if !self.is_affine() {
            return Err(GameError::NonAffinePrices);
        }
        let w = self.marshallian_welfare(q, f)?;
        Ok(w - self.own_quadratic_penalty(q.as_slice()))
    }

    fn own_quadratic_penalty(&self, q: &[f64]) -> f64 {
        let mut penalty = 0.0;
        for (i, &qi) in q.iter().enumerate() {
            let beta = match self.prices[self.market_of(i)] {
                PriceFunction::Affine { beta, .. } => beta,
                PriceFunction::Concave(_) => unreachable!("checked affine"),
            };
            penalty += 0.5 * beta * qi * qi;
        }
        penalty
    }

    /// Gradient of the potential with respect to productions and flows.
    pub fn potential_gradient(
        &self,
        q: &ProductionVector,
        f: &FlowVector,
    ) -> Result<(Vec<f64>, Vec<f64>), GameError> {
        if !self.is_affine() {
            return Err(GameError::NonAffinePrices);
        }
        let d = self.consumption(q, f)?;
        let mut dq = vec![0.0; self.producers()];
        for i in 0..self.producers() {
            let j = self.market_of(i);
            let beta = match self.prices[j] {
                PriceFunction::Affine { beta, .. } => beta,
                PriceFunction::Concave(_) => unreachable!("checked affine"),
            };
            dq[i] = self.prices[j].value(d[j]) - beta * q[i] - self.costs[i].slope(q[i]);
        }
        Ok((dq, self.flow_gradient_from(&d)))
    }

    /// Gradient of welfare with respect to the flows, valid for any concave
    /// inverse demand: price at the head minus price at the tail per line.
    pub fn welfare_flow_gradient(
        &self,
        q: &ProductionVector,
        f: &FlowVector,
    ) -> Result<Vec<f64>, GameError> {
        let d = self.consumption(q, f)?;
        Ok(self.flow_gradient_from(&d))
    }

    pub(crate) fn flow_gradient_from(&self, d: &[f64]) -> Vec<f64> {
        self.graph
            .lines()
            .iter()
            .map(|line| {
                self.prices[line.head].value(d[line.head])
                    - self.prices[line.tail].value(d[line.tail])
            })
            .collect()
    }

    /// Own-production derivative of producer `i`'s utility at `(q, f)`.
    pub fn utility_gradient_own(
        &self,
        producer: usize,
        q: &ProductionVector,
        f: &FlowVector,
    ) -> Result<f64, GameError> {
        self.check_producer(producer)?;
        let d = self.consumption(q, f)?;
        let j = self.market_of(producer);
        Ok(
            self.prices[j].value(d[j]) + q[producer] * self.prices[j].slope(d[j])
                - self.costs[producer].slope(q[producer]),
        )
    }

    /// Upper bound on any best response of producer `i`: the zero-price
    /// consumption of its market plus the capacity incident to that market.
    /// Production beyond it cannot be profitable for any rival profile.
    pub fn strategy_bound(&self, producer: usize) -> Result<f64, GameError> {
        self.check_producer(producer)?;
        let j = self.market_of(producer);
        if j >= self.markets() {
            return Err(NetworkError::InvalidMarket {
                market: j,
                markets: self.markets(),
            }
            .into());
        }
        Ok(self.prices[j].zero_crossing() + self.graph.incident_capacity(j)?)
    }

    fn check_producer(&self, producer: usize) -> Result<(), GameError> {
        if producer >= self.producers() {
            return Err(GameError::InvalidProducer {
                producer,
                producers: self.producers(),
            });
        }
        Ok(())
    }
}

fn probe_grid(hi: f64) -> impl Iterator<Item = f64> {
    let step = hi / (SHAPE_PROBE_POINTS - 1) as f64;
    (0..SHAPE_PROBE_POINTS).map(move |k| step * k as f64)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` (signed) to the given
/// absolute tolerance.
fn adaptive_simpson(
    f: &(dyn Fn(f64) -> f64 + Send + Sync),
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, GameError> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    match simpson_recurse(f, a, b, fa, fm, fb, whole, tol, 48) {
        Some(v) => Ok(v),
        None => Err(GameError::QuadratureDivergence {
            upper: b,
            estimate: whole,
        }),
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &(dyn Fn(f64) -> f64 + Send + Sync),
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let half = 0.5 * tol;
    let l = simpson_recurse(f, a, m, fa, flm, fm, left, half, depth - 1)?;
    let r = simpson_recurse(f, m, b, fm, frm, fb, right, half, depth - 1)?;
    Some(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Line;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    pub(crate) fn isolated_game() -> GameInstance {
        GameInstance::new(
            MarketGraph::new(1, vec![]).unwrap(),
            ProducerMap::new(vec![0]),
            vec![PriceFunction::affine(120.0, 0.04)],
            vec![CostFunction::quadratic(0.01)],
        )
        .unwrap()
    }

    pub(crate) fn two_market_game(capacity: f64) -> GameInstance {
        GameInstance::new(
            MarketGraph::new(2, vec![Line::new(0, 1, capacity)]).unwrap(),
            ProducerMap::new(vec![0]),
            vec![PriceFunction::affine(120.0, 0.04); 2],
            vec![CostFunction::quadratic(0.01)],
        )
        .unwrap()
    }

    #[test]
    fn monopoly_utility() {
        let game = isolated_game();
        let u = game
            .producer_utility(
                0,
                &ProductionVector::new(vec![1200.0]),
                &FlowVector::zeros(0),
            )
            .unwrap();
        assert_abs_diff_eq!(u, 72_000.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_production_zero_utility() {
        let game = isolated_game();
        let u = game
            .producer_utility(0, &ProductionVector::zeros(1), &FlowVector::zeros(0))
            .unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn constrained_two_market_utility() {
        let game = two_market_game(500.0);
        let u = game
            .producer_utility(
                0,
                &ProductionVector::new(vec![1400.0]),
                &FlowVector::new(vec![500.0]),
            )
            .unwrap();
        assert_abs_diff_eq!(u, 98_000.0, epsilon = 1e-9);
    }

    #[test]
    fn welfare_at_origin_is_zero() {
        let game = two_market_game(500.0);
        let w = game
            .marshallian_welfare(&ProductionVector::zeros(1), &FlowVector::zeros(1))
            .unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn monopoly_welfare() {
        let game = isolated_game();
        let w = game
            .marshallian_welfare(&ProductionVector::new(vec![1200.0]), &FlowVector::zeros(0))
            .unwrap();
        assert_abs_diff_eq!(w, 100_800.0, epsilon = 1e-9);
    }

    #[test]
    fn constrained_two_market_welfare() {
        let game = two_market_game(500.0);
        let w = game
            .marshallian_welfare(
                &ProductionVector::new(vec![1400.0]),
                &FlowVector::new(vec![500.0]),
            )
            .unwrap();
        assert_abs_diff_eq!(w, 127_200.0, epsilon = 1e-9);
    }

    #[test]
    fn potential_values() {
        let game = isolated_game();
        assert_eq!(
            game.potential(&ProductionVector::zeros(1), &FlowVector::zeros(0))
                .unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            game.potential(&ProductionVector::new(vec![1200.0]), &FlowVector::zeros(0))
                .unwrap(),
            72_000.0,
            epsilon = 1e-9
        );

        let game = two_market_game(500.0);
        assert_abs_diff_eq!(
            game.potential(
                &ProductionVector::new(vec![1400.0]),
                &FlowVector::new(vec![500.0])
            )
            .unwrap(),
            88_000.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn potential_rejects_non_affine() {
        let price = ConcavePrice {
            value: Arc::new(|r| 120.0 - 0.04 * r),
            slope: Arc::new(|_| -0.04),
            curvature: Arc::new(|_| 0.0),
            zero_crossing: 3000.0,
        };
        let game = GameInstance::new(
            MarketGraph::new(1, vec![]).unwrap(),
            ProducerMap::new(vec![0]),
            vec![PriceFunction::Concave(price)],
            vec![CostFunction::quadratic(0.01)],
        )
        .unwrap();
        assert!(matches!(
            game.potential(&ProductionVector::zeros(1), &FlowVector::zeros(0)),
            Err(GameError::NonAffinePrices)
        ));
    }

    #[test]
    fn gradient_at_constrained_point() {
        let game = two_market_game(500.0);
        let (dq, df) = game
            .potential_gradient(
                &ProductionVector::new(vec![1400.0]),
                &FlowVector::new(vec![500.0]),
            )
            .unwrap();
        assert_abs_diff_eq!(dq[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(df[0], 16.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_at_origin_is_intercept() {
        let game = two_market_game(500.0);
        let (dq, _) = game
            .potential_gradient(&ProductionVector::zeros(1), &FlowVector::zeros(1))
            .unwrap();
        assert_eq!(dq[0], 120.0);
    }

    #[test]
    fn strategy_bounds() {
        assert_abs_diff_eq!(isolated_game().strategy_bound(0).unwrap(), 3000.0);
        assert_abs_diff_eq!(two_market_game(500.0).strategy_bound(0).unwrap(), 3500.0);
        assert_abs_diff_eq!(two_market_game(0.0).strategy_bound(0).unwrap(), 3000.0);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let graph = MarketGraph::new(1, vec![]).unwrap();
        let err = GameInstance::new(
            graph.clone(),
            ProducerMap::new(vec![0]),
            vec![PriceFunction::affine(120.0, 0.0)],
            vec![CostFunction::quadratic(0.01)],
        )
        .unwrap_err();
        assert!(matches!(err, GameError::Invalid { .. }), "{err}");

        let err = GameInstance::new(
            graph.clone(),
            ProducerMap::new(vec![0]),
            vec![PriceFunction::affine(120.0, 0.04)],
            vec![CostFunction::quadratic(-0.5)],
        )
        .unwrap_err();
        assert!(matches!(err, GameError::Invalid { .. }), "{err}");

        let err = GameInstance::new(
            graph,
            ProducerMap::new(vec![3]),
            vec![PriceFunction::affine(120.0, 0.04)],
            vec![CostFunction::quadratic(0.01)],
        )
        .unwrap_err();
        assert!(matches!(err, GameError::Invalid { .. }), "{err}");
    }

    #[test]
    fn quadrature_matches_affine_closed_form() {
        // The same curve expressed through evaluators must integrate to the
        // affine closed form.
        let concave = PriceFunction::Concave(ConcavePrice {
            value: Arc::new(|r| 120.0 - 0.04 * r),
            slope: Arc::new(|_| -0.04),
            curvature: Arc::new(|_| 0.0),
            zero_crossing: 3000.0,
        });
        let affine = PriceFunction::affine(120.0, 0.04);
        for d in [0.0, 1.0, 250.0, 900.0, -80.0] {
            assert_abs_diff_eq!(
                concave.consumer_surplus(d).unwrap(),
                affine.consumer_surplus(d).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn quadrature_on_strictly_concave_curve() {
        // P(r) = 120 - 0.04 r - 1e-5 r^2: surplus has the cubic closed form.
        let price = PriceFunction::Concave(ConcavePrice {
            value: Arc::new(|r| 120.0 - 0.04 * r - 1e-5 * r * r),
            slope: Arc::new(|r| -0.04 - 2e-5 * r),
            curvature: Arc::new(|_| -2e-5),
            zero_crossing: 2000.0, // positive root of the quadratic
        });
        for d in [0.0, 100.0, 800.0, 1500.0] {
            let exact = 120.0 * d - 0.02 * d * d - 1e-5 * d * d * d / 3.0;
            assert_relative_eq!(
                price.consumer_surplus(d).unwrap(),
                exact,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn utility_gradient_matches_potential_gradient_for_affine() {
        let game = two_market_game(500.0);
        let q = ProductionVector::new(vec![321.0]);
        let f = FlowVector::new(vec![-120.0]);
        let (dq, _) = game.potential_gradient(&q, &f).unwrap();
        let gu = game.utility_gradient_own(0, &q, &f).unwrap();
        assert_abs_diff_eq!(dq[0], gu, epsilon = 1e-12);
    }
}
