//! Equilibrium computation.
//!
//! With affine inverse demand the game's equilibria are exactly the maximizers
//! of a concave quadratic potential over the box `{q >= 0, |f| <= c}` (the
//! production coordinates additionally carry the safe upper bound from
//! [`GameInstance::strategy_bound`], which never binds at an optimum).
//! Projection onto that box is coordinatewise clamping, so
//! [`solve_potential`] runs projected gradient ascent: spectral
//! (Barzilai-Borwein) trial steps safeguarded by Armijo backtracking, so the
//! potential is nondecreasing along the iterates. The first step is `1/L`
//! with `L` a Gershgorin bound on the quadratic's curvature, and convergence
//! is certified by the sup-norm of the unit-step projected gradient.
//!
//! [`best_response_dynamics`] provides an independent route to the same
//! point — round-robin exact best responses — and [`verify_equilibrium`]
//! checks the first-order conditions of any candidate point directly.
//!
//! Production, consumption and prices are pinned uniquely by the potential;
//! on graphs with cycles the flows are only determined up to circulations, so
//! solved flows are canonicalized to the minimum-norm representative by
//! [`canonical_flow`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::game::{CostFunction, GameError, GameInstance, PriceFunction};
use crate::network::{FlowVector, MarketGraph, NetworkError, ProductionVector};

#[derive(Debug, Clone, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("point violates the feasible set: {detail}")]
    InfeasiblePoint { detail: String },
}

/// Knobs of the projected-gradient solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm threshold on the projected gradient.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial step; defaults to the inverse of a Gershgorin curvature bound.
    pub initial_step: Option<f64>,
    /// Multiplicative step reduction during the line search.
    pub backtracking: f64,
    /// Sufficient-increase constant of the Armijo test.
    pub armijo: f64,
    /// Seed for the randomized feasible start.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iters: 200_000,
            initial_step: None,
            backtracking: 0.5,
            armijo: 1e-4,
            seed: 0,
        }
    }
}

/// A solved (or last-iterate, when not converged) joint state with its
/// derived quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub production: ProductionVector,
    pub flows: FlowVector,
    pub consumption: Vec<f64>,
    pub prices: Vec<f64>,
    /// Potential value; `None` for non-affine games.
    pub potential: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final sup-norm of the projected gradient (or of the last round's
    /// change, for best-response dynamics).
    pub residual: f64,
}

/// First-order (complementarity) residuals of a candidate point.
#[derive(Clone, Debug, PartialEq)]
pub struct KktReport {
    /// Per-producer stationarity residual `|min(q_i, -du_i/dq_i)|`.
    pub producer_residuals: Vec<f64>,
    /// Per-line distance from the welfare flow gradient to the normal cone of
    /// `[-c_k, c_k]` at `f_k`.
    pub line_residuals: Vec<f64>,
    pub max_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Market maker's best response and its solve diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketMakerResponse {
    pub flows: FlowVector,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

// ---------------------------------------------------------------------------
// Projected gradient ascent over a box.
// ---------------------------------------------------------------------------

struct AscentOutcome {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for k in 0..x.len() {
        x[k] = x[k].clamp(lower[k], upper[k]);
    }
}

/// Sup-norm of the unit-step projected gradient: zero exactly at points
/// satisfying the box first-order conditions.
fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for k in 0..x.len() {
        norm = norm.max(((x[k] + g[k]).clamp(lower[k], upper[k]) - x[k]).abs());
    }
    norm
}

#[allow(clippy::too_many_arguments)]
fn maximize_box(
    lower: &[f64],
    upper: &[f64],
    objective: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64], &mut [f64]),
    x0: Vec<f64>,
    step0: f64,
    opts: &SolverOptions,
    max_iters: usize,
    mut value_trace: Option<&mut Vec<f64>>,
) -> AscentOutcome {
    let dim = x0.len();
    let mut x = x0;
    project(&mut x, lower, upper);
    if dim == 0 {
        return AscentOutcome {
            x,
            iterations: 0,
            converged: true,
            residual: 0.0,
        };
    }

    let mut g = vec![0.0; dim];
    let mut candidate = vec![0.0; dim];
    let mut previous_x = vec![0.0; dim];
    let mut previous_g = vec![0.0; dim];
    let mut value = objective(&x);
    if let Some(trace) = value_trace.as_deref_mut() {
        trace.push(value);
    }
    // Spectral (Barzilai-Borwein) trial step, safeguarded by the Armijo
    // backtracking below: the inverse curvature along the last move, clamped
    // around the Gershgorin-based initial step.
    let (step_floor, step_cap) = (1e-2 * step0, 1e6 * step0);
    let mut have_history = false;

    for iter in 0..max_iters {
        gradient(&x, &mut g);
        let residual = projected_gradient_norm(&x, &g, lower, upper);
        if residual <= opts.tol {
            return AscentOutcome {
                x,
                iterations: iter,
                converged: true,
                residual,
            };
        }

        let mut t = if have_history {
            let mut s_dot_s = 0.0;
            let mut s_dot_y = 0.0;
            for k in 0..dim {
                let s = x[k] - previous_x[k];
                let y = g[k] - previous_g[k];
                s_dot_s += s * s;
                s_dot_y += s * y;
            }
            if s_dot_y < 0.0 {
                (s_dot_s / -s_dot_y).clamp(step_floor, step_cap)
            } else {
                step_cap
            }
        } else {
            step0
        };
        previous_x.copy_from_slice(&x);
        previous_g.copy_from_slice(&g);

        // Near the optimum the predicted gain drops below the objective's
        // floating-point resolution and the Armijo comparison turns blind;
        // from there, fall back to the curvature-safe step, which ascends for
        // any L-smooth concave objective without needing the test.
        let resolution = 1e-12 * (1.0 + value.abs());

        let mut accepted = false;
        for _ in 0..80 {
            for k in 0..dim {
                candidate[k] = (x[k] + t * g[k]).clamp(lower[k], upper[k]);
            }
            let mut linear = 0.0;
            for k in 0..dim {
                linear += g[k] * (candidate[k] - x[k]);
            }
            if opts.armijo * linear <= resolution {
                if t > step0 {
                    t = step0;
                    continue;
                }
                let new_value = objective(&candidate);
                x.copy_from_slice(&candidate);
                value = value.max(new_value);
                accepted = true;
                break;
            }
            let new_value = objective(&candidate);
            if new_value >= value + opts.armijo * linear {
                x.copy_from_slice(&candidate);
                value = new_value;
                accepted = true;
                break;
            }
            t *= opts.backtracking;
        }
        if let Some(trace) = value_trace.as_deref_mut() {
            trace.push(value);
        }
        if !accepted {
            // Step length collapsed without satisfying the Armijo test.
            return AscentOutcome {
                x,
                iterations: iter + 1,
                converged: false,
                residual,
            };
        }
        have_history = true;
    }

    gradient(&x, &mut g);
    let residual = projected_gradient_norm(&x, &g, lower, upper);
    let converged = residual <= opts.tol;
    AscentOutcome {
        x,
        iterations: max_iters,
        converged,
        residual,
    }
}

// ---------------------------------------------------------------------------
// Potential maximization.
// ---------------------------------------------------------------------------

/// Fast raw-slice evaluator of the affine-price potential over the joint
/// variable `x = (q, f)`.
struct AffinePotential<'a> {
    game: &'a GameInstance,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    scratch: RefCell<Vec<f64>>,
}

impl<'a> AffinePotential<'a> {
    fn new(game: &'a GameInstance) -> Result<Self, SolverError> {
        let mut alpha = Vec::with_capacity(game.markets());
        let mut beta = Vec::with_capacity(game.markets());
        for price in game.prices() {
            match price {
                PriceFunction::Affine { alpha: a, beta: b } => {
                    alpha.push(*a);
                    beta.push(*b);
                }
                PriceFunction::Concave(_) => {
                    return Err(GameError::NonAffinePrices.into());
                }
            }
        }
        let scratch = RefCell::new(vec![0.0; game.markets()]);
        Ok(AffinePotential {
            game,
            alpha,
            beta,
            scratch,
        })
    }

    fn consumption_into(&self, x: &[f64], d: &mut [f64]) {
        let n = self.game.producers();
        d.fill(0.0);
        for i in 0..n {
            d[self.game.market_of(i)] += x[i];
        }
        for (k, line) in self.game.graph().lines().iter().enumerate() {
            let f = x[n + k];
            d[line.tail] -= f;
            d[line.head] += f;
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut d = self.scratch.borrow_mut();
        self.consumption_into(x, &mut d);
        let mut value = 0.0;
        for j in 0..self.alpha.len() {
            value += self.alpha[j] * d[j] - 0.5 * self.beta[j] * d[j] * d[j];
        }
        for (i, cost) in self.game.costs().iter().enumerate() {
            let qi = x[i];
            value -= cost.value(qi) + 0.5 * self.beta[self.game.market_of(i)] * qi * qi;
        }
        value
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let n = self.game.producers();
        let mut d = self.scratch.borrow_mut();
        self.consumption_into(x, &mut d);
        for i in 0..n {
            let j = self.game.market_of(i);
            let price = self.alpha[j] - self.beta[j] * d[j];
            g[i] = price - self.beta[j] * x[i] - self.game.costs()[i].slope(x[i]);
        }
        for (k, line) in self.game.graph().lines().iter().enumerate() {
            let p_head = self.alpha[line.head] - self.beta[line.head] * d[line.head];
            let p_tail = self.alpha[line.tail] - self.beta[line.tail] * d[line.tail];
            g[n + k] = p_head - p_tail;
        }
    }
}

/// Gershgorin row-sum bound on the curvature of the potential's Hessian.
fn potential_curvature_bound(game: &GameInstance, beta: &[f64]) -> f64 {
    let graph = game.graph();
    let counts = game.producer_map().per_market_counts(game.markets());
    let degrees: Vec<usize> = (0..game.markets()).map(|j| graph.degree(j)).collect();

    let mut bound: f64 = 0.0;
    for i in 0..game.producers() {
        let j = game.market_of(i);
        let c2 = cost_curvature_bound(&game.costs()[i], game.strategy_bound(i).unwrap_or(1.0));
        let row = 2.0 * beta[j] + c2 + ((counts[j] - 1) + degrees[j]) as f64 * beta[j];
        bound = bound.max(row);
    }
    for line in graph.lines() {
        let (a, b) = (line.tail, line.head);
        let row =
            beta[a] * (degrees[a] + counts[a]) as f64 + beta[b] * (degrees[b] + counts[b]) as f64;
        bound = bound.max(row);
    }
    bound.max(1e-12)
}

fn cost_curvature_bound(cost: &CostFunction, hi: f64) -> f64 {
    match cost {
        CostFunction::Quadratic { theta } => 2.0 * theta,
        CostFunction::Convex(_) => {
            let hi = hi.max(1.0);
            let mut max_c2: f64 = 0.0;
            for k in 0..=32 {
                max_c2 = max_c2.max(cost.curvature(hi * k as f64 / 32.0));
            }
            1.5 * max_c2
        }
    }
}

fn joint_bounds(game: &GameInstance) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let n = game.producers();
    let l = game.line_count();
    let mut lower = vec![0.0; n + l];
    let mut upper = vec![0.0; n + l];
    for (i, hi) in upper.iter_mut().take(n).enumerate() {
        *hi = game.strategy_bound(i)?;
    }
    for (k, line) in game.graph().lines().iter().enumerate() {
        lower[n + k] = -line.capacity;
        upper[n + k] = line.capacity;
    }
    Ok((lower, upper))
}

/// Draw a uniformly random feasible start from the solver's box.
fn random_start(game: &GameInstance, seed: u64) -> Result<Vec<f64>, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lower, upper) = joint_bounds(game)?;
    let x0 = lower
        .iter()
        .zip(&upper)
        .map(|(&lo, &hi)| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        })
        .collect();
    Ok(x0)
}

/// Maximize the potential from a random feasible start drawn with
/// `opts.seed`. The maximizing production, consumption and prices are the
/// unique equilibrium coordinates; the returned flow is the minimum-norm
/// optimal flow.
pub fn solve_potential(
    game: &GameInstance,
    opts: &SolverOptions,
) -> Result<Equilibrium, SolverError> {
    let x0 = random_start(game, opts.seed)?;
    solve_potential_raw(game, opts, x0, None)
}

/// Like [`solve_potential`] but starting from an explicit feasible point.
pub fn solve_potential_from(
    game: &GameInstance,
    opts: &SolverOptions,
    q0: &ProductionVector,
    f0: &FlowVector,
) -> Result<Equilibrium, SolverError> {
    check_dims(game, q0, f0)?;
    let mut x0 = Vec::with_capacity(q0.len() + f0.len());
    x0.extend_from_slice(q0.as_slice());
    x0.extend_from_slice(f0.as_slice());
    solve_potential_raw(game, opts, x0, None)
}

#[cfg(test)]
pub(crate) fn solve_potential_traced(
    game: &GameInstance,
    opts: &SolverOptions,
    trace: &mut Vec<f64>,
) -> Result<Equilibrium, SolverError> {
    let x0 = random_start(game, opts.seed)?;
    solve_potential_raw(game, opts, x0, Some(trace))
}

fn solve_potential_raw(
    game: &GameInstance,
    opts: &SolverOptions,
    x0: Vec<f64>,
    trace: Option<&mut Vec<f64>>,
) -> Result<Equilibrium, SolverError> {
    let eval = AffinePotential::new(game)?;
    let (lower, upper) = joint_bounds(game)?;
    let step0 = opts
        .initial_step
        .unwrap_or_else(|| 1.0 / potential_curvature_bound(game, &eval.beta));

    let outcome = maximize_box(
        &lower,
        &upper,
        &|x| eval.objective(x),
        &|x, g| eval.gradient(x, g),
        x0,
        step0,
        opts,
        opts.max_iters,
        trace,
    );

    let n = game.producers();
    let q = outcome.x[..n].to_vec();
    let mut f = outcome.x[n..].to_vec();
    if outcome.converged && game.line_count() > 0 {
        // Only the net injections are pinned by the potential; report the
        // minimum-norm flow with the same injections.
        f = canonical_flow(game.graph(), &FlowVector::new(f))?.into_vec();
    }
    make_equilibrium(
        game,
        q,
        f,
        outcome.iterations,
        outcome.converged,
        outcome.residual,
    )
}

fn make_equilibrium(
    game: &GameInstance,
    q: Vec<f64>,
    f: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
) -> Result<Equilibrium, SolverError> {
    let production = ProductionVector::new(q);
    let flows = FlowVector::new(f);
    let consumption = game.consumption(&production, &flows)?;
    let prices: Vec<f64> = game
        .prices()
        .iter()
        .zip(&consumption)
        .map(|(p, &dj)| p.value(dj))
        .collect();
    let potential = if game.is_affine() {
        Some(game.potential(&production, &flows)?)
    } else {
        None
    };
    Ok(Equilibrium {
        production,
        flows,
        consumption,
        prices,
        potential,
        iterations,
        converged,
        residual,
    })
}

fn check_dims(
    game: &GameInstance,
    q: &ProductionVector,
    f: &FlowVector,
) -> Result<(), SolverError> {
    if q.len() != game.producers() {
        return Err(NetworkError::DimensionMismatch {
            quantity: "production vector",
            got: q.len(),
            expected: game.producers(),
        }
        .into());
    }
    if f.len() != game.line_count() {
        return Err(NetworkError::DimensionMismatch {
            quantity: "flow vector",
            got: f.len(),
            expected: game.line_count(),
        }
        .into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Best responses.
// ---------------------------------------------------------------------------

/// Producer `i`'s best response to the rest of the profile; `q[i]` itself is
/// ignored. Affine price with quadratic cost has a closed form; the general
/// concave case bisects the own-utility derivative over the producer's
/// strategy box (value-only searches cannot localize a flat maximum beyond
/// the square root of machine precision, but the derivative has a clean sign
/// change there).
pub fn best_response_producer(
    game: &GameInstance,
    producer: usize,
    q: &ProductionVector,
    f: &FlowVector,
) -> Result<f64, SolverError> {
    check_dims(game, q, f)?;
    let d = game.consumption(q, f)?;
    let j = game.market_of(producer);
    let residual_demand = d[j] - q[producer];

    match (&game.prices()[j], &game.costs()[producer]) {
        (PriceFunction::Affine { alpha, beta }, CostFunction::Quadratic { theta }) => {
            let price_alone = alpha - beta * residual_demand;
            Ok((price_alone / (2.0 * beta + 2.0 * theta)).max(0.0))
        }
        (price, cost) => {
            let bound = game.strategy_bound(producer)?;
            let slope_at = |qi: f64| {
                let own = residual_demand + qi;
                price.value(own) + qi * price.slope(own) - cost.slope(qi)
            };
            if slope_at(0.0) <= 0.0 {
                return Ok(0.0);
            }
            if slope_at(bound) >= 0.0 {
                return Ok(bound);
            }
            let (mut lo, mut hi) = (0.0, bound);
            while hi - lo > 1e-12 * bound {
                let mid = 0.5 * (lo + hi);
                if slope_at(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// The market maker's best response to `q`: maximize welfare over the flow
/// box by projected gradient ascent (welfare is concave in the flows).
pub fn best_response_market_maker(
    game: &GameInstance,
    q: &ProductionVector,
    opts: &SolverOptions,
) -> Result<MarketMakerResponse, SolverError> {
    if q.len() != game.producers() {
        return Err(NetworkError::DimensionMismatch {
            quantity: "production vector",
            got: q.len(),
            expected: game.producers(),
        }
        .into());
    }
    let graph = game.graph();
    let l = graph.line_count();
    let supply = game.producer_map().market_supply(q, game.markets())?;

    let mut lower = vec![0.0; l];
    let mut upper = vec![0.0; l];
    for (k, line) in graph.lines().iter().enumerate() {
        lower[k] = -line.capacity;
        upper[k] = line.capacity;
    }

    let scratch = RefCell::new(vec![0.0; game.markets()]);
    let consumption_into = |f: &[f64], d: &mut [f64]| {
        d.copy_from_slice(&supply);
        for (k, line) in graph.lines().iter().enumerate() {
            d[line.tail] -= f[k];
            d[line.head] += f[k];
        }
    };
    let objective = |f: &[f64]| -> f64 {
        let mut d = scratch.borrow_mut();
        consumption_into(f, &mut d);
        let mut surplus = 0.0;
        for (price, &dj) in game.prices().iter().zip(d.iter()) {
            surplus += price.consumer_surplus(dj).unwrap_or(f64::NEG_INFINITY);
        }
        surplus
    };
    let gradient = |f: &[f64], g: &mut [f64]| {
        let mut d = scratch.borrow_mut();
        consumption_into(f, &mut d);
        for (k, line) in graph.lines().iter().enumerate() {
            g[k] = game.prices()[line.head].value(d[line.head])
                - game.prices()[line.tail].value(d[line.tail]);
        }
    };

    let step0 = opts
        .initial_step
        .unwrap_or_else(|| 1.0 / flow_curvature_bound(game, &supply));
    let outcome = maximize_box(
        &lower,
        &upper,
        &objective,
        &gradient,
        vec![0.0; l],
        step0,
        opts,
        opts.max_iters,
        None,
    );

    Ok(MarketMakerResponse {
        flows: FlowVector::new(outcome.x),
        iterations: outcome.iterations,
        converged: outcome.converged,
        residual: outcome.residual,
    })
}

/// Gershgorin bound on the curvature of welfare in the flows, probing the
/// price slopes over each market's reachable consumption range.
fn flow_curvature_bound(game: &GameInstance, supply: &[f64]) -> f64 {
    let graph = game.graph();
    let mut slope_bound = vec![0.0; game.markets()];
    for j in 0..game.markets() {
        let reach = graph.incident_capacity(j).unwrap_or(0.0);
        let price = &game.prices()[j];
        match price {
            PriceFunction::Affine { beta, .. } => slope_bound[j] = *beta,
            PriceFunction::Concave(_) => {
                let (lo, hi) = (supply[j] - reach, supply[j] + reach);
                let mut max_slope: f64 = 0.0;
                for k in 0..=32 {
                    let t = lo + (hi - lo) * k as f64 / 32.0;
                    max_slope = max_slope.max(price.slope(t).abs());
                }
                slope_bound[j] = 1.5 * max_slope;
            }
        }
    }
    let mut bound: f64 = 0.0;
    for line in graph.lines() {
        let row = slope_bound[line.tail] * graph.degree(line.tail) as f64
            + slope_bound[line.head] * graph.degree(line.head) as f64;
        bound = bound.max(row);
    }
    bound.max(1e-12)
}

/// Round-robin best-response dynamics: producers in index order, then the
/// market maker, until the joint profile moves less than `opts.tol` over a
/// full round. An independent oracle for the potential maximizer on affine
/// games; on general concave games it reports whatever fixed point it reaches,
/// without convergence guarantees.
pub fn best_response_dynamics(
    game: &GameInstance,
    opts: &SolverOptions,
) -> Result<Equilibrium, SolverError> {
    let n = game.producers();
    let mut q = ProductionVector::zeros(n);
    let mut f = FlowVector::zeros(game.line_count());

    let inner_opts = SolverOptions {
        tol: (opts.tol * 0.1).max(1e-13),
        ..*opts
    };

    let mut rounds = 0usize;
    let mut delta = f64::INFINITY;
    let mut inner_ok = true;
    while rounds < opts.max_iters {
        delta = 0.0;
        for i in 0..n {
            let qi = best_response_producer(game, i, &q, &f)?;
            delta = delta.max((qi - q[i]).abs());
            let mut values = q.into_vec();
            values[i] = qi;
            q = ProductionVector::new(values);
        }
        if game.line_count() > 0 {
            let response = best_response_market_maker(game, &q, &inner_opts)?;
            inner_ok = response.converged;
            for k in 0..f.len() {
                delta = delta.max((response.flows[k] - f[k]).abs());
            }
            f = response.flows;
        }
        rounds += 1;
        if delta <= opts.tol {
            break;
        }
    }

    let converged = delta <= opts.tol && inner_ok;
    make_equilibrium(game, q.into_vec(), f.into_vec(), rounds, converged, delta)
}

// ---------------------------------------------------------------------------
// First-order verification.
// ---------------------------------------------------------------------------

/// Check the equilibrium first-order conditions at a feasible point.
///
/// Producers: either the own-utility gradient vanishes, or it is nonpositive
/// with `q_i = 0`. Lines: the welfare flow gradient lies in the normal cone of
/// `[-c_k, c_k]` at `f_k` — it may push outward at a saturated bound but must
/// vanish in the interior.
pub fn verify_equilibrium(
    game: &GameInstance,
    q: &ProductionVector,
    f: &FlowVector,
    tol: f64,
) -> Result<KktReport, SolverError> {
    check_dims(game, q, f)?;
    for i in 0..game.producers() {
        let slack = 1e-9 * (1.0 + game.strategy_bound(i)?);
        if q[i] < -slack {
            return Err(SolverError::InfeasiblePoint {
                detail: format!("production {i} is negative ({})", q[i]),
            });
        }
    }
    for (k, line) in game.graph().lines().iter().enumerate() {
        let slack = 1e-9 * (1.0 + line.capacity);
        if f[k].abs() > line.capacity + slack {
            return Err(SolverError::InfeasiblePoint {
                detail: format!("flow {k} is {} with capacity {}", f[k], line.capacity),
            });
        }
    }

    let mut producer_residuals = vec![0.0; game.producers()];
    for i in 0..game.producers() {
        let g = game.utility_gradient_own(i, q, f)?;
        producer_residuals[i] = q[i].max(0.0).min(-g).abs();
    }

    let flow_gradient = game.welfare_flow_gradient(q, f)?;
    let mut line_residuals = vec![0.0; game.line_count()];
    for (k, line) in game.graph().lines().iter().enumerate() {
        let g = flow_gradient[k];
        let eps = 1e-9 * (1.0 + line.capacity);
        line_residuals[k] = if line.capacity <= eps {
            // Degenerate zero-capacity line: any gradient is admissible.
            0.0
        } else if f[k] >= line.capacity - eps {
            (-g).max(0.0)
        } else if f[k] <= -line.capacity + eps {
            g.max(0.0)
        } else {
            g.abs()
        };
    }

    let max_residual = producer_residuals
        .iter()
        .chain(line_residuals.iter())
        .fold(0.0f64, |acc, &r| acc.max(r));
    Ok(KktReport {
        producer_residuals,
        line_residuals,
        max_residual,
        tol,
        passed: max_residual <= tol,
    })
}

// ---------------------------------------------------------------------------
// Canonical flows.
// ---------------------------------------------------------------------------

/// Minimum-Euclidean-norm feasible flow with the same net injections as `f`.
///
/// Resolves the circulation ambiguity of flows on cyclic graphs: solved via an
/// augmented Lagrangian on the injection constraint, with the box handled by
/// the same projected-gradient machinery as the main solver. Deterministic
/// given `f`; on trees it returns `f` itself (up to rounding).
pub fn canonical_flow(graph: &MarketGraph, f: &FlowVector) -> Result<FlowVector, SolverError> {
    if f.len() != graph.line_count() {
        return Err(NetworkError::DimensionMismatch {
            quantity: "flow vector",
            got: f.len(),
            expected: graph.line_count(),
        }
        .into());
    }
    for (k, line) in graph.lines().iter().enumerate() {
        if line.capacity < 0.0 || f[k].abs() > line.capacity + 1e-9 * (1.0 + line.capacity) {
            return Err(SolverError::InfeasiblePoint {
                detail: format!("flow {k} is {} with capacity {}", f[k], line.capacity),
            });
        }
    }
    if graph.line_count() == 0 {
        return Ok(f.clone());
    }

    let target = graph.net_injections(f)?;
    let m = graph.markets();
    let l = graph.line_count();

    let mut lower = vec![0.0; l];
    let mut upper = vec![0.0; l];
    let mut bb_row: f64 = 0.0;
    for (k, line) in graph.lines().iter().enumerate() {
        lower[k] = -line.capacity;
        upper[k] = line.capacity;
        bb_row = bb_row.max((graph.degree(line.tail) + graph.degree(line.head)) as f64);
    }

    let scale = f
        .iter()
        .fold(1.0f64, |acc, &v| acc.max(v.abs()))
        .max(target.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())));
    let primal_target = 1e-12 * scale;

    let mut x = f.as_slice().to_vec();
    let mut multipliers = vec![0.0; m];
    let mut rho = 1.0f64;
    let mut previous_gap = f64::INFINITY;

    let residual_of = |x: &[f64], r: &mut [f64]| {
        r.copy_from_slice(&target);
        for (k, line) in graph.lines().iter().enumerate() {
            r[line.tail] += x[k];
            r[line.head] -= x[k];
        }
        // r now holds target - Bx; flip sign to get Bx - target.
        for rj in r.iter_mut() {
            *rj = -*rj;
        }
    };

    let scratch = RefCell::new(vec![0.0; m]);
    for _outer in 0..60 {
        let rho_now = rho;
        let lambda = multipliers.clone();
        let objective = |x: &[f64]| -> f64 {
            let mut r = scratch.borrow_mut();
            residual_of(x, &mut r);
            let mut value = 0.0;
            for &xk in x {
                value -= 0.5 * xk * xk;
            }
            for j in 0..m {
                value -= lambda[j] * r[j] + 0.5 * rho_now * r[j] * r[j];
            }
            value
        };
        let gradient = |x: &[f64], g: &mut [f64]| {
            let mut r = scratch.borrow_mut();
            residual_of(x, &mut r);
            for (k, line) in graph.lines().iter().enumerate() {
                let pull = (lambda[line.head] + rho_now * r[line.head])
                    - (lambda[line.tail] + rho_now * r[line.tail]);
                g[k] = -x[k] - pull;
            }
        };

        let inner_opts = SolverOptions {
            tol: (0.05 * primal_target).max(1e-14 * scale),
            ..SolverOptions::default()
        };
        let step0 = 1.0 / (1.0 + rho_now * bb_row);
        let outcome = maximize_box(
            &lower,
            &upper,
            &objective,
            &gradient,
            x,
            step0,
            &inner_opts,
            100_000,
            None,
        );
        x = outcome.x;

        let mut r = vec![0.0; m];
        residual_of(&x, &mut r);
        let gap = r.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if gap <= primal_target {
            return Ok(FlowVector::new(x));
        }
        for j in 0..m {
            multipliers[j] += rho_now * r[j];
        }
        if gap > 0.25 * previous_gap {
            rho = (rho * 4.0).min(1e14);
        }
        previous_gap = gap;
    }

    // The multiplier loop exhausted its budget; return the best iterate, whose
    // injection gap is within a small multiple of the target in practice.
    Ok(FlowVector::new(x))
}
