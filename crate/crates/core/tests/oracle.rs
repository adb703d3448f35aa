use dance_core::costmodel::{evaluate_network, CostModelConstants};
use dance_core::objective::{cost_hw, CostFunctionSpec};
use dance_core::oracle::{enumerate_space, generate_dataset, optimal_hw, optimal_hw_sequential, DatasetConfig, HwSpace, RecordKind};
use dance_core::workload::{network_layers, sample_random_network, ArchSpace};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn optimum_dominates_random_configs() {
    let space = ArchSpace::default();
    let hw = HwSpace::default();
    let consts = CostModelConstants::default();
    let configs = enumerate_space(&hw);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for net in 0..20 {
        let layers = network_layers(&sample_random_network(&space, net), &space).unwrap();
        for spec in [CostFunctionSpec::Edap, CostFunctionSpec::latency_oriented()] {
            let best = optimal_hw(&layers, &spec, &hw, &consts).unwrap();
            for _ in 0..50 {
                let c = configs[rng.random_range(0..configs.len())];
                assert!(best.cost <= cost_hw(&evaluate_network(&layers, &c, &consts), &spec));
            }
        }
    }
}

#[test]
fn parallel_matches_sequential() {
    let space = ArchSpace::default();
    let hw = HwSpace::default();
    let consts = CostModelConstants::default();
    for net in 100..110 {
        let layers = network_layers(&sample_random_network(&space, net), &space).unwrap();
        let a = optimal_hw(&layers, &CostFunctionSpec::Edap, &hw, &consts).unwrap();
        let b = optimal_hw_sequential(&layers, &CostFunctionSpec::Edap, &hw, &consts).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn layer_order_does_not_change_the_optimum() {
    let space = ArchSpace::default();
    let hw = HwSpace::default();
    let consts = CostModelConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for net in 0..5 {
        let layers = network_layers(&sample_random_network(&space, net), &space).unwrap();
        let mut shuffled = layers.clone();
        shuffled.shuffle(&mut rng);
        let a = optimal_hw(&layers, &CostFunctionSpec::Edap, &hw, &consts).unwrap();
        let b = optimal_hw(&shuffled, &CostFunctionSpec::Edap, &hw, &consts).unwrap();
        assert_eq!(a.config, b.config);
        assert!((a.cost - b.cost).abs() <= 1e-9 * a.cost);
    }
}

#[test]
fn brute_force_argmin_agrees() {
    let space = ArchSpace::default();
    let hw = HwSpace {
        pe_x_values: vec![8, 13, 24],
        pe_y_values: vec![9, 16],
        ..HwSpace::default()
    };
    let consts = CostModelConstants::default();
    let layers = network_layers(&sample_random_network(&space, 42), &space).unwrap();
    let mut best = None::<(f64, usize)>;
    for (i, c) in enumerate_space(&hw).iter().enumerate() {
        let v = cost_hw(&evaluate_network(&layers, c, &consts), &CostFunctionSpec::Edap);
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, i));
        }
    }
    let (cost, idx) = best.unwrap();
    let got = optimal_hw(&layers, &CostFunctionSpec::Edap, &hw, &consts).unwrap();
    assert_eq!(got.config, enumerate_space(&hw)[idx]);
    assert_eq!(got.cost, cost);
}

#[test]
fn dataset_is_deterministic_and_labels_are_optimal() {
    let cfg = DatasetConfig {
        networks: 12,
        random_configs: 3,
        seed: 5,
        ..DatasetConfig::default()
    };
    let space = ArchSpace::default();
    let hw = HwSpace::default();
    let consts = CostModelConstants::default();
    let a = generate_dataset(&cfg, &space, &hw, &consts).unwrap();
    let b = generate_dataset(&cfg, &space, &hw, &consts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 12 * 4);
    for r in a.iter().filter(|r| r.kind == RecordKind::Opt) {
        let layers = network_layers(&r.arch, &space).unwrap();
        let best = optimal_hw_sequential(&layers, &cfg.cost_fn, &hw, &consts).unwrap();
        assert_eq!(best.config, r.hw);
        assert_eq!(best.metrics, r.costs);
    }
    let other = generate_dataset(&DatasetConfig { seed: 6, ..cfg }, &space, &hw, &consts).unwrap();
    assert_ne!(a, other);
}
