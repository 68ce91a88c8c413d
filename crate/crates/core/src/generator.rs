//! Random, always-valid affine game instances for property suites and
//! benchmarks: a random spanning tree plus extra lines (so the graph is
//! connected, parallel lines permitted), producers assigned to uniformly
//! random markets, and parameters drawn from configurable ranges.

use alloc::vec::Vec;

use rand::Rng;

use crate::game::{CostFunction, GameInstance, PriceFunction};
use crate::network::{FlowVector, Line, MarketGraph, ProducerMap, ProductionVector};

/// Inclusive parameter ranges for [`random_game`].
#[derive(Clone, Debug)]
pub struct GeneratorParams {
    pub markets: (usize, usize),
    /// Lines added on top of the connecting spanning tree.
    pub extra_lines: (usize, usize),
    pub producers: (usize, usize),
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub theta: (f64, f64),
    pub capacity: (f64, f64),
}

impl GeneratorParams {
    /// Moderate sizes with well-conditioned curvature.
    pub fn standard() -> Self {
        GeneratorParams {
            markets: (2, 6),
            extra_lines: (0, 3),
            producers: (1, 8),
            alpha: (60.0, 160.0),
            beta: (0.02, 0.09),
            theta: (0.004, 0.03),
            capacity: (50.0, 800.0),
        }
    }

    /// Tiny instances, small enough for brute-force grid oracles.
    pub fn tiny() -> Self {
        GeneratorParams {
            markets: (1, 3),
            extra_lines: (0, 1),
            producers: (1, 3),
            alpha: (40.0, 90.0),
            beta: (0.05, 0.1),
            theta: (0.01, 0.04),
            capacity: (20.0, 200.0),
        }
    }

    /// Tight capacities relative to the implied market sizes, so congestion
    /// and multiple price groups are common.
    pub fn congested() -> Self {
        GeneratorParams {
            markets: (2, 8),
            extra_lines: (0, 4),
            producers: (1, 12),
            alpha: (80.0, 160.0),
            beta: (0.02, 0.08),
            theta: (0.004, 0.02),
            capacity: (10.0, 350.0),
        }
    }
}

fn range_usize<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn range_f64<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// Draw a connected, validated affine game.
pub fn random_game<R: Rng + ?Sized>(rng: &mut R, params: &GeneratorParams) -> GameInstance {
    let m = range_usize(rng, params.markets);

    let mut lines = Vec::new();
    for v in 1..m {
        let u = rng.random_range(0..v);
        let (tail, head) = if rng.random_bool(0.5) { (u, v) } else { (v, u) };
        lines.push(Line::new(tail, head, range_f64(rng, params.capacity)));
    }
    if m > 1 {
        for _ in 0..range_usize(rng, params.extra_lines) {
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            lines.push(Line::new(a, b, range_f64(rng, params.capacity)));
        }
    }
    let graph = MarketGraph::new(m, lines).expect("generated lines are structurally valid");

    let n = range_usize(rng, params.producers);
    let assignment = (0..n).map(|_| rng.random_range(0..m)).collect();

    let prices = (0..m)
        .map(|_| PriceFunction::affine(range_f64(rng, params.alpha), range_f64(rng, params.beta)))
        .collect();
    let costs = (0..n)
        .map(|_| CostFunction::quadratic(range_f64(rng, params.theta)))
        .collect();

    GameInstance::new(graph, ProducerMap::new(assignment), prices, costs)
        .expect("generated game satisfies the modelling rules")
}

/// Uniform draw from the solver's feasible box.
pub fn random_feasible_point<R: Rng + ?Sized>(
    rng: &mut R,
    game: &GameInstance,
) -> (ProductionVector, FlowVector) {
    random_point(rng, game, 0.0)
}

/// Uniform draw staying `margin_frac` of each bound away from the boundary;
/// useful for finite-difference probes that must not step outside the box.
pub fn random_interior_point<R: Rng + ?Sized>(
    rng: &mut R,
    game: &GameInstance,
    margin_frac: f64,
) -> (ProductionVector, FlowVector) {
    random_point(rng, game, margin_frac)
}

fn random_point<R: Rng + ?Sized>(
    rng: &mut R,
    game: &GameInstance,
    margin_frac: f64,
) -> (ProductionVector, FlowVector) {
    let q = (0..game.producers())
        .map(|i| {
            let hi = game.strategy_bound(i).expect("valid producer");
            let margin = margin_frac * hi;
            rng.random_range(margin..=(hi - margin))
        })
        .collect();
    let f = game
        .graph()
        .lines()
        .iter()
        .map(|line| {
            let margin = margin_frac * line.capacity;
            if line.capacity > 0.0 {
                rng.random_range((-line.capacity + margin)..=(line.capacity - margin))
            } else {
                0.0
            }
        })
        .collect();
    (ProductionVector::new(q), FlowVector::new(f))
}
