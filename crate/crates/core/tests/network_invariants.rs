//! Property tests for the network-linear layer and the price clustering.

use gridnash_core::analysis::price_groups;
use gridnash_core::network::{
    consumption, FlowVector, Line, MarketGraph, ProducerMap, ProductionVector,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_and_flows() -> impl Strategy<Value = (MarketGraph, Vec<f64>)> {
    (1usize..=6)
        .prop_flat_map(|m| {
            let lines: BoxedStrategy<Vec<(usize, usize, f64)>> = if m == 1 {
                Just(Vec::new()).boxed()
            } else {
                proptest::collection::vec((0..m, 0..m - 1, 1.0f64..500.0), 0..=8).boxed()
            };
            (Just(m), lines)
        })
        .prop_flat_map(|(m, raw)| {
            let lines: Vec<Line> = raw
                .into_iter()
                .map(|(a, b, c)| Line::new(a, if b >= a { b + 1 } else { b }, c))
                .collect();
            let l = lines.len();
            (
                Just(MarketGraph::new(m, lines).unwrap()),
                proptest::collection::vec(-1.0f64..1.0, l),
            )
        })
        .prop_map(|(graph, fractions)| {
            let flows = graph
                .lines()
                .iter()
                .zip(&fractions)
                .map(|(line, u)| u * line.capacity)
                .collect();
            (graph, flows)
        })
}

proptest! {
    #[test]
    fn injections_sum_to_zero((graph, flows) in graph_and_flows()) {
        let l1: f64 = flows.iter().map(|f| f.abs()).sum();
        let r = graph.net_injections(&FlowVector::new(flows)).unwrap();
        let total: f64 = r.iter().sum();
        prop_assert!(total.abs() <= 1e-12 * l1.max(1.0));
    }

    #[test]
    fn incident_capacity_dominates_injections((graph, flows) in graph_and_flows()) {
        let r = graph.net_injections(&FlowVector::new(flows)).unwrap();
        for (j, rj) in r.iter().enumerate() {
            let bound = graph.incident_capacity(j).unwrap();
            prop_assert!(rj.abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn consumption_conserves_production(
        (graph, flows) in graph_and_flows(),
        raw_q in proptest::collection::vec((0.0f64..2000.0, 0usize..100), 0..6),
    ) {
        let markets = graph.markets();
        let assignment: Vec<usize> = raw_q.iter().map(|&(_, slot)| slot % markets).collect();
        let q: Vec<f64> = raw_q.iter().map(|&(qi, _)| qi).collect();
        let pmap = ProducerMap::new(assignment);

        let q_l1: f64 = q.iter().sum();
        let f_l1: f64 = flows.iter().map(|f| f.abs()).sum();
        let d = consumption(
            &graph,
            &pmap,
            &ProductionVector::new(q),
            &FlowVector::new(flows),
        )
        .unwrap();
        let total: f64 = d.iter().sum();
        prop_assert!((total - q_l1).abs() <= 1e-12 * (q_l1 + f_l1).max(1.0));
    }

    #[test]
    fn circulations_inject_nothing(
        m in 2usize..=7,
        orientations in proptest::collection::vec(any::<bool>(), 7),
        magnitude in 0.1f64..50.0,
    ) {
        // A ring of m markets carrying a circulation of the given magnitude;
        // each line's orientation is random, with the flow sign following it.
        let mut lines = Vec::new();
        let mut flows = Vec::new();
        for (k, &forward) in orientations.iter().take(m).enumerate() {
            let (a, b) = (k, (k + 1) % m);
            if forward {
                lines.push(Line::new(a, b, 100.0));
                flows.push(magnitude);
            } else {
                lines.push(Line::new(b, a, 100.0));
                flows.push(-magnitude);
            }
        }
        let graph = MarketGraph::new(m, lines).unwrap();
        let r = graph.net_injections(&FlowVector::new(flows)).unwrap();
        for rj in r {
            prop_assert_eq!(rj, 0.0);
        }
    }

    #[test]
    fn price_grouping_is_permutation_equivariant(
        prices in proptest::collection::vec(0.0f64..200.0, 1..12),
        tol in 1e-6f64..10.0,
        seed in any::<u64>(),
    ) {
        let m = prices.len();
        let mut permutation: Vec<usize> = (0..m).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        // relabeled market k carries the price of original market perm[k]
        let relabeled: Vec<f64> = permutation.iter().map(|&j| prices[j]).collect();

        let original = price_groups(&prices, tol).unwrap();
        let shuffled = price_groups(&relabeled, tol).unwrap();

        prop_assert_eq!(original.group_count(), shuffled.group_count());
        prop_assert!((original.mean_price - shuffled.mean_price).abs() <= 1e-9);
        for (g_orig, g_new) in original.groups.iter().zip(&shuffled.groups) {
            prop_assert!((g_orig.price - g_new.price).abs() <= 1e-9);
            // Map the relabeled group back through the permutation.
            let mut mapped: Vec<usize> =
                g_new.markets.iter().map(|&k| permutation[k]).collect();
            mapped.sort_unstable();
            prop_assert_eq!(&mapped, &g_orig.markets);
        }
    }
}
