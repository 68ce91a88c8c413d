//! Equilibrium computation for networked Cournot competition with a market
//! maker on a capacity-constrained transport network.
//!
//! Markets sit on the nodes of a line graph, producers each sell into a single
//! market, and a welfare-maximizing market maker moves supply across lines of
//! finite capacity. With affine inverse demand the game is an exact potential
//! game: the unique equilibrium consumption and production maximize a concave
//! quadratic over a box, which [`solver::solve_potential`] finds by projected
//! gradient ascent. [`analysis`] then diagnoses the result, clustering markets
//! into price groups and certifying that every price difference is backed by a
//! saturated cut in the network.
//!
//! ```
//! use gridnash_core::network::{Line, MarketGraph, ProducerMap};
//! use gridnash_core::game::{CostFunction, GameInstance, PriceFunction};
//! use gridnash_core::solver::{solve_potential, SolverOptions};
//!
//! // Two markets joined by one 500 MW line, a single producer in market 0.
//! let graph = MarketGraph::new(2, vec![Line::new(0, 1, 500.0)]).unwrap();
//! let pmap = ProducerMap::new(vec![0]);
//! let game = GameInstance::new(
//!     graph,
//!     pmap,
//!     vec![PriceFunction::affine(120.0, 0.04); 2],
//!     vec![CostFunction::quadratic(0.01)],
//! )
//! .unwrap();
//!
//! let eq = solve_potential(&game, &SolverOptions::default()).unwrap();
//! assert!(eq.converged);
//! assert!((eq.prices[0] - 84.0).abs() < 1e-5);
//! assert!((eq.prices[1] - 100.0).abs() < 1e-5);
//! ```

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod game;
pub mod generator;
pub mod network;
pub mod solver;

pub use game::{CostFunction, GameInstance, PriceFunction};
pub use network::{FlowVector, Line, MarketGraph, ProducerMap, ProductionVector};
pub use solver::{Equilibrium, SolverOptions};
