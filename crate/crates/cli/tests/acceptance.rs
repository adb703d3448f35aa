//! Acceptance suite. Runs every criterion in sequence, prints one
//! `criterion N: PASS|FAIL` line each and exits non-zero if any failed.
//! Built without the libtest harness so the lines are never captured.
//!
//! Criteria 4-8 share one evaluator trained with the default settings on a
//! 20,000-network dataset; expect the whole target to take several minutes.

#[path = "../../core/tests/common/gradchecks.rs"]
mod gradchecks;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dance_cli::commands::RunSpec;
use dance_cli::config::{Config, Preset};
use dance_cli::pipeline::run_specs;
use dance_cli::report::Method;
use dance_core::costmodel::{access_counts, area, evaluate_layer, evaluate_network, macs, AcceleratorConfig, Dataflow};
use dance_core::cosearch::{oracle_cost, retrain_accuracy, search, LossVariant, SearchResult, ToyTask};
use dance_core::evaluator::{accuracy_report, AccuracyReport, EvaluatorModel, NoiseSource};
use dance_core::nn::Matrix;
use dance_core::objective::{cost_hw, CostFunctionSpec};
use dance_core::oracle::{enumerate_space, generate_dataset, optimal_hw, optimal_hw_sequential};
use dance_core::workload::{encode_network, network_layers, sample_random_network, ConvLayerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Outcomes(Vec<(u32, bool)>);

impl Outcomes {
    fn record(&mut self, n: u32, pass: bool, detail: impl AsRef<str>) {
        println!("criterion {n}: {} {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        self.0.push((n, pass));
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_layer(rng: &mut ChaCha8Rng) -> ConvLayerSpec {
    let kernel = [1, 3, 5, 7][rng.random_range(0..4)];
    let stride = rng.random_range(1..3);
    let (c, hw) = (rng.random_range(1..97), rng.random_range(1..33));
    if rng.random_bool(0.3) {
        ConvLayerSpec::depthwise(rng.random_range(1..3), c, hw, kernel, stride)
    } else {
        ConvLayerSpec::conv(rng.random_range(1..3), c, rng.random_range(1..97), hw, kernel, stride)
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> AcceleratorConfig {
    AcceleratorConfig::new(
        Dataflow::ALL[rng.random_range(0..3)],
        rng.random_range(8..=24),
        rng.random_range(8..=24),
        [4, 8, 16, 32, 64][rng.random_range(0..5)],
    )
}

fn gradients(out: &mut Outcomes, model: &EvaluatorModel) {
    let start = Instant::now();
    let layers = gradchecks::layer_checks().expect("layer gradchecks run");
    let end_to_end = gradchecks::end_to_end_checks(model, 0).expect("end-to-end gradchecks run");
    let secs = start.elapsed().as_secs_f64();
    let worst = |v: &[(&str, dance_core::nn::gradcheck::GradcheckReport)]| {
        v.iter().map(|(_, r)| r.max_rel_err).fold(0.0, f64::max)
    };
    let (lw, ew) = (worst(&layers), worst(&end_to_end));
    let failed: Vec<&str> = layers
        .iter()
        .filter(|(_, r)| r.max_rel_err >= gradchecks::LAYER_TOL)
        .chain(end_to_end.iter().filter(|(_, r)| r.max_rel_err >= gradchecks::END_TO_END_TOL))
        .map(|(n, _)| *n)
        .collect();
    out.record(
        1,
        failed.is_empty() && secs < 60.0,
        format!(
            "{} layer checks max rel err {lw:.2e} (< 1e-4), {} end-to-end checks max rel err {ew:.2e} (< 1e-3), {secs:.1}s{}",
            layers.len(),
            end_to_end.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {failed:?}") }
        ),
    );
}

fn oracle_invariants(out: &mut Outcomes, cfg: &Config) {
    let start = Instant::now();
    let c = &cfg.cost_model;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs = 2000;
    let mut violations = Vec::new();
    for i in 0..pairs {
        let l = random_layer(&mut rng);
        let cfg = random_config(&mut rng);
        let gb: Vec<u64> = [4, 8, 16, 32, 64]
            .iter()
            .map(|&rf| access_counts(&l, &AcceleratorConfig { rf_size: rf, ..cfg }, c).gb_accesses())
            .collect();
        if gb.windows(2).any(|w| w[1] > w[0]) {
            violations.push(format!("pair {i}: GB accesses rise with RF"));
        }
        let base = evaluate_layer(&l, &cfg, c);
        let wx = AcceleratorConfig { pe_x: cfg.pe_x + 1, ..cfg };
        let wy = AcceleratorConfig { pe_y: cfg.pe_y + 1, ..cfg };
        let rf = AcceleratorConfig { rf_size: cfg.rf_size * 2, ..cfg };
        if evaluate_layer(&l, &wx, c).latency > base.latency || evaluate_layer(&l, &wy, c).latency > base.latency {
            violations.push(format!("pair {i}: latency rises with PEs"));
        }
        if !(area(&wx, c) > base.area && area(&wy, c) > base.area && area(&rf, c) > base.area) {
            violations.push(format!("pair {i}: area not strictly increasing"));
        }
        if base.energy < c.e_mac * macs(&l) as f64 * 1e-9 {
            violations.push(format!("pair {i}: energy below MAC energy"));
        }
        let empty = evaluate_network(&[], &cfg, c);
        if (empty.latency, empty.energy, empty.area) != (0.0, 0.0, area(&cfg, c)) {
            violations.push(format!("pair {i}: empty network has non-zero cost"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    out.record(
        2,
        violations.is_empty() && secs < 60.0,
        format!("{pairs} (layer, config) pairs, {} violations, {secs:.1}s {:?}", violations.len(), violations.first()),
    );
}

fn oracle_optimality(out: &mut Outcomes, cfg: &Config) {
    let start = Instant::now();
    let configs = enumerate_space(&cfg.hw_space);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checks, mut failures) = (0, 0);
    for net in 0..20 {
        let layers = network_layers(&sample_random_network(&cfg.arch_space, 9000 + net), &cfg.arch_space).unwrap();
        let best = optimal_hw(&layers, &CostFunctionSpec::Edap, &cfg.hw_space, &cfg.cost_model).unwrap();
        let seq = optimal_hw_sequential(&layers, &CostFunctionSpec::Edap, &cfg.hw_space, &cfg.cost_model).unwrap();
        if best != seq {
            failures += 1;
        }
        for _ in 0..50 {
            let c = configs[rng.random_range(0..configs.len())];
            checks += 1;
            if best.cost > cost_hw(&evaluate_network(&layers, &c, &cfg.cost_model), &CostFunctionSpec::Edap) {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    out.record(
        3,
        failures == 0 && secs < 60.0,
        format!("{checks} random configs over 20 networks, {failures} dominance or reduction failures, {secs:.1}s"),
    );
}

fn fidelity(out: &mut Outcomes, report: &AccuracyReport, secs: f64) {
    let fwd = report.costest_forwarding.expect("forwarding net trained");
    let pass = report.hwgen.iter().all(|&a| a >= 90.0)
        && fwd.iter().all(|&a| a >= 95.0)
        && report.overall.iter().all(|&a| a >= 90.0)
        && secs <= 1800.0;
    out.record(
        4,
        pass,
        format!(
            "hwgen heads {:.2?} (>= 90), cost estimation {:.2?} (>= 95), end-to-end {:.2?} (>= 90), {} validation networks, {secs:.0}s",
            report.hwgen, fwd, report.overall, report.validation_networks
        ),
    );
}

fn forwarding_ablation(out: &mut Outcomes, report: &AccuracyReport) {
    let with = report.costest_forwarding_opt.expect("forwarding net trained");
    let without = report.costest_no_forwarding.expect("ablation net trained");
    let gain = mean(&with) - mean(&without);
    out.record(
        5,
        gain >= 1.0,
        format!(
            "with forwarding {:.2} vs without {:.2} on optimal rows: +{gain:.2}pp (>= 1)",
            mean(&with),
            mean(&without)
        ),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Seconds per call of `f`, median over `reps` calls.
fn time_per_call(reps: usize, mut f: impl FnMut()) -> f64 {
    median(
        (0..reps)
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

fn speedup(out: &mut Outcomes, cfg: &Config, model: &EvaluatorModel) {
    let nets: Vec<_> = (0..100).map(|i| sample_random_network(&cfg.arch_space, 50_000 + i)).collect();
    let layers: Vec<_> = nets.iter().map(|n| network_layers(n, &cfg.arch_space).unwrap()).collect();
    let encodings: Vec<_> = nets.iter().map(|n| encode_network(n, &cfg.arch_space).unwrap()).collect();
    let flat: Vec<f64> = encodings.iter().flat_map(|e| e.flatten()).collect();
    let x = Matrix::from_shape_vec((100, model.arch_dim()), flat).unwrap();

    // Alternate the two sides so both see the same machine load.
    let (mut oracle, mut batched, mut single, mut ratios) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..5 {
        let o = time_per_call(1, || {
            for l in &layers {
                optimal_hw(l, &CostFunctionSpec::Edap, &cfg.hw_space, &cfg.cost_model).unwrap();
            }
        }) / 100.0;
        let b = time_per_call(11, || {
            model.predict_batch(&x, NoiseSource::Zero).unwrap();
        }) / 100.0;
        let s = time_per_call(3, || {
            for e in &encodings {
                model.evaluate_end_to_end(e, NoiseSource::Zero).unwrap();
            }
        }) / 100.0;
        ratios.push(o / b);
        oracle.push(o);
        batched.push(b);
        single.push(s);
    }
    let ratio = median(ratios);
    let (oracle, batched, single) = (median(oracle), median(batched), median(single));
    out.record(
        6,
        ratio >= 100.0,
        format!(
            "oracle {:.3}ms/network, evaluator {:.1}us/network over a 100-network batch: {ratio:.0}x (>= 100, median of 5 rounds); one network per call {:.1}us ({:.0}x)",
            oracle * 1e3,
            batched * 1e6,
            single * 1e6,
            oracle / single
        ),
    );
}

struct Run {
    result: SearchResult,
    edap: f64,
    cost: f64,
    accuracy: f64,
    secs: f64,
}

fn run(cfg: &Config, spec: &RunSpec, model: &EvaluatorModel, task: &ToyTask) -> Run {
    let start = Instant::now();
    let c = spec.apply(cfg);
    let evaluator = (spec.method != Method::NoPenalty).then_some(model);
    let result = search(task, evaluator, &c.search.config, c.arch_space.positions, |_, _| {}).unwrap();
    let (_, metrics, cost) =
        oracle_cost(&result.final_arch, &c.search.config.cost_fn, &c.arch_space, &c.hw_space, &c.cost_model).unwrap();
    let accuracy = retrain_accuracy(task, &result.final_arch, &c.search.config.supernet, &c.search.retrain).unwrap();
    Run {
        result,
        edap: metrics.edap(),
        cost,
        accuracy,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn describe(name: &str, r: &Run) -> String {
    format!(
        "{name}: EDAP {:.4e} acc {:.2}% zeros {}",
        r.edap,
        r.accuracy,
        r.result.zero_positions()
    )
}

fn search_behavior(out: &mut Outcomes, model: &EvaluatorModel) {
    let mut cfg = Config::default();
    cfg.apply_preset(Preset::Smoke);
    let cfg = cfg.with_seed(0);
    let task = ToyTask::generate(&cfg.search.task).unwrap();
    let specs = run_specs(&cfg);
    let spec = |name: &str| specs.iter().find(|(n, _)| n == name).unwrap().1.clone();
    let mut longest: f64 = 0.0;
    let mut go = |s: &RunSpec| {
        let r = run(&cfg, s, model, &task);
        longest = longest.max(r.secs);
        r
    };

    let no_penalty = go(&spec("no-penalty"));
    let grid: Vec<(f64, Run)> = cfg
        .search
        .lambda2_grid
        .iter()
        .map(|&l| {
            let s = RunSpec {
                method: Method::Dance,
                variant: LossVariant::Dance,
                lambda2: l,
                warmup: true,
            };
            (l, go(&s))
        })
        .collect();
    let (largest, warm) = grid.last().unwrap();
    let cold = go(&RunSpec {
        lambda2: *largest,
        warmup: false,
        ..spec(&format!("dance-l2-{largest:e}"))
    });
    let zero_l2 = go(&RunSpec {
        method: Method::Dance,
        variant: LossVariant::Dance,
        lambda2: 0.0,
        warmup: true,
    });
    let edd = go(&spec("edd-original"));

    let costs: Vec<f64> = grid.iter().map(|(_, r)| r.cost).collect();
    let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
    let warmup_ok =
        cold.result.zero_positions() >= warm.result.zero_positions() && warm.accuracy >= cold.accuracy;
    let nas_match = zero_l2.result.alpha_trace == no_penalty.result.alpha_trace
        && zero_l2.result.final_arch == no_penalty.result.final_arch;
    let timing_ok = longest <= 300.0;
    out.record(
        7,
        monotone && warmup_ok && nas_match && timing_ok,
        format!(
            "(a) cost over lambda2 {:?}: [{}] {}; (b) at {largest:e} warm-up zeros {} acc {:.2}% vs none zeros {} acc {:.2}% {}; (c) lambda2=0 equals NAS: {nas_match}; longest run {longest:.1}s",
            cfg.search.lambda2_grid,
            costs.iter().map(|c| format!("{c:.4e}")).collect::<Vec<_>>().join(", "),
            if monotone { "non-increasing" } else { "NOT non-increasing" },
            warm.result.zero_positions(),
            warm.accuracy,
            cold.result.zero_positions(),
            cold.accuracy,
            if warmup_ok { "ok" } else { "violated" },
        ),
    );

    let dance = &grid[0].1;
    let dance_drop = no_penalty.accuracy - dance.accuracy;
    let edd_drop = no_penalty.accuracy - edd.accuracy;
    let dance_ok = dance.edap <= no_penalty.edap && dance_drop.abs() <= 2.0;
    let collapse = edd.edap < no_penalty.edap && edd_drop > dance_drop;
    out.record(
        8,
        dance_ok && collapse,
        format!(
            "{}; {}; {}; dance gap {dance_drop:.2}pp (<= 2), edd-original drop {edd_drop:.2}pp",
            describe("no-penalty", &no_penalty),
            describe(&format!("dance lambda2={:e}", grid[0].0), dance),
            describe("edd-original", &edd),
        ),
    );
}

fn pipeline_smoke(out: &Path) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_dance"))
        .args(["pipeline", "--preset", "smoke", "--seed", "1", "--out"])
        .arg(out)
        .env_remove("DANCE_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    std::fs::read(out.join("report.csv")).map_err(|e| e.to_string())
}

fn reproducibility(out: &mut Outcomes, suite_secs: f64) {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let a = pipeline_smoke(&dir.path().join("a"));
    let b = pipeline_smoke(&dir.path().join("b"));
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match (a, b) {
        (Ok(a), Ok(b)) => (a == b, format!("report.csv byte-identical: {} ({} bytes)", a == b, a.len())),
        (Err(e), _) | (_, Err(e)) => (false, format!("pipeline failed: {e}")),
    };
    out.record(
        9,
        pass && suite_secs < 3600.0,
        format!("{detail}; two smoke pipelines {secs:.0}s; criteria 1-8 took {suite_secs:.0}s (< 3600)"),
    );
}

fn main() {
    let suite = Instant::now();
    let cfg = Config::default().with_seed(0);
    let mut out = Outcomes::default();

    oracle_invariants(&mut out, &cfg);
    oracle_optimality(&mut out, &cfg);

    let start = Instant::now();
    let records = generate_dataset(&cfg.dataset, &cfg.arch_space, &cfg.hw_space, &cfg.cost_model).unwrap();
    let model = EvaluatorModel::train(&records, &cfg.arch_space, &cfg.hw_space, &cfg.evaluator).unwrap();
    let split = model.metadata.split.clone().unwrap();
    let report = accuracy_report(&model, &records, &split, cfg.evaluator.noise_seed).unwrap();
    let fidelity_secs = start.elapsed().as_secs_f64();
    fidelity(&mut out, &report, fidelity_secs);
    forwarding_ablation(&mut out, &report);

    gradients(&mut out, &model);
    speedup(&mut out, &cfg, &model);
    search_behavior(&mut out, &model);
    reproducibility(&mut out, suite.elapsed().as_secs_f64());

    out.0.sort_by_key(|(n, _)| *n);
    let failed: Vec<u32> = out.0.iter().filter(|(_, p)| !p).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        out.0.len() - failed.len(),
        out.0.len(),
        suite.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
