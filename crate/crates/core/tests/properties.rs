//! Whole-pipeline properties on random small networks.

use distopt::costs::{CostModel, NetworkCost};
use distopt::dynamics::{simulate, AlgorithmParams, DynamicsKind, Integrator, SimConfig, SwitchingSchedule};
use distopt::graph::{build_digraph, WeightedDigraph};
use distopt::scenario::{parse_scenario_str, preset, PRESETS};
use distopt::schedulers::{event_stats, CommScheme};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// A directed ring with weight `w` plus a reversed chord cycle with weight
/// `u`: balanced because it is a sum of weighted cycles.
fn ring_with_cycles(n: usize, w: f64, u: f64, skip: usize) -> WeightedDigraph {
    // Overlapping edges merge by adding weights, which keeps the balance.
    let mut merged = std::collections::BTreeMap::new();
    for i in 0..n {
        *merged.entry((i + 1, (i + 1) % n + 1)).or_insert(0.0) += w;
        let j = (i + skip) % n;
        if j != i {
            *merged.entry((j + 1, i + 1)).or_insert(0.0) += u;
        }
    }
    let edges: Vec<_> = merged.into_iter().map(|((r, s), a)| (r, s, a)).collect();
    build_digraph(n, &edges).unwrap()
}

fn scheme_for(kind: u8, n: usize) -> CommScheme {
    match kind {
        0 => CommScheme::Continuous,
        1 => CommScheme::Periodic { delta: 0.1 },
        2 => CommScheme::CentralizedEvent { kappa: 0.3, tau: 0.05 },
        _ => CommScheme::DistributedEvent { eps: vec![0.01; n] },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_scheme_conserves_and_approaches_optimum(
        n in 3usize..7,
        w in 0.5f64..2.0,
        u in 0.1f64..2.0,
        skip in 2usize..4,
        kind in 0u8..4,
        centers in prop::collection::vec(-3.0f64..3.0, 6),
        x0 in prop::collection::vec(-4.0f64..4.0, 6),
    ) {
        let g = ring_with_cycles(n, w, u, skip);
        prop_assert!(g.is_weight_balanced(1e-12) && g.is_strongly_connected());
        let costs = NetworkCost::new(centers[..n].iter().map(|&c| CostModel::squared(c)).collect()).unwrap();
        let mean = centers[..n].iter().sum::<f64>() / n as f64;
        let cfg = SimConfig {
            schedule: SwitchingSchedule::fixed(g).unwrap(),
            costs,
            params: AlgorithmParams::new(1.0, 2.0).unwrap(),
            scheme: scheme_for(kind, n),
            dynamics: DynamicsKind::Standard,
            integrator: Integrator::Rk4,
            t_final: 8.0,
            h: 1e-3,
            stride: 20,
            x0: DMatrix::from_column_slice(n, 1, &x0[..n]),
            v0: DMatrix::zeros(n, 1),
            x_star: None,
        };
        let trace = simulate(&cfg).unwrap();
        prop_assert!(trace.max_v_sum() <= 1e-9);
        prop_assert!((trace.x_star[0] - mean).abs() < 1e-9);
        let first = trace.errors(&trace.samples[0]).into_iter().fold(0.0, f64::max);
        prop_assert!(trace.max_final_error() < first.max(1e-3));
        if kind == 2 {
            let stats = event_stats(&trace);
            prop_assert!(stats.global_min_gap >= 0.05);
        }
    }
}

#[test]
fn presets_survive_a_json_round_trip_and_resolve_identically() {
    for name in PRESETS {
        let file = preset(name).unwrap();
        let again = parse_scenario_str(&file.to_json(), name).unwrap();
        let (a, b) = (file.resolve().unwrap(), again.resolve().unwrap());
        assert_eq!(a.x0, b.x0, "{name}");
        assert_eq!(a.scheme, b.scheme, "{name}");
    }
}
