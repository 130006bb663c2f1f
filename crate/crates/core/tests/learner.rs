use std::collections::BTreeSet;

use diiqn::bridge::expert_forward_states;
use diiqn::distance::MetricSpec;
use diiqn::expert::{state_key, ExpertDataset};
use diiqn::harness::sweep::summarize_variant;
use diiqn::harness::{build_dataset, script_expert, TrainSummary};
use diiqn::learner::{ddqn_target, select_action, train_step, Algorithm, IntervalRow, RunConfig, StepParams};
use diiqn::nn::{Optimizer, QNetwork, TdEntry};
use diiqn::replay::AugmentedExperience;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn epsilon_greedy_statistics() {
    let q = [0.1, 0.7, -0.3, 0.2];
    let mut r = rng(1);
    assert!((0..1000).all(|_| select_action(&q, 0.0, &mut r).unwrap() == 1));

    let draws = 100_000;
    let mut counts = [0u64; 4];
    for _ in 0..draws {
        counts[select_action(&q, 1.0, &mut r).unwrap()] += 1;
    }
    let expected = draws as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "uniformity p = {p}");

    let greedy = (0..draws).filter(|_| select_action(&q, 0.1, &mut r).unwrap() == 1).count();
    let freq = greedy as f64 / draws as f64;
    assert!((freq - (0.9 + 0.1 / 4.0)).abs() < 0.02, "{freq}");
}

fn two_action_net(q0: f32, q1: f32) -> QNetwork {
    let mut net = QNetwork::zeros(&[1, 2]).unwrap();
    net.set_layer(0, &[0.0, 0.0], &[q0, q1]).unwrap();
    net
}

#[test]
fn double_target_selects_with_online_and_evaluates_with_target() {
    let online = two_action_net(1.0, 0.0);
    let target = two_action_net(2.0, 5.0);
    let s = [0.5];
    assert_eq!(ddqn_target(1.0, false, &s, &online, &target, 0.5, true).unwrap(), 1.0 + 0.5 * 2.0);
    assert_eq!(ddqn_target(1.0, false, &s, &online, &target, 0.5, false).unwrap(), 1.0 + 0.5 * 5.0);
    assert_eq!(ddqn_target(-1.0, true, &s, &online, &target, 0.9, true).unwrap(), -1.0);
    assert_eq!(ddqn_target(3.0, false, &s, &online, &target, 0.0, true).unwrap(), 3.0);
}

fn metric() -> MetricSpec {
    RunConfig::default().metric_spec(2)
}

fn fixture(seed: u64) -> (QNetwork, QNetwork, ExpertDataset, Vec<AugmentedExperience>) {
    let mut r = rng(seed);
    let online = QNetwork::new(&[2, 8, 4], &mut r).unwrap();
    let target = QNetwork::new(&[2, 8, 4], &mut r).unwrap();
    let mut point = || vec![r.random_range(0.0f32..1.0), r.random_range(0.0f32..1.0)];
    let transitions: Vec<_> = (0..6).map(|_| (point(), point())).collect();
    let batch: Vec<AugmentedExperience> = (0..8)
        .map(|i| AugmentedExperience {
            s_a: point(),
            a_a: i % 4,
            r: -1.0,
            s_a_next: point(),
            done: i == 7,
            expert_ref: (i % 3 != 0).then_some(i % 6),
        })
        .collect();
    let mut ds = ExpertDataset::load(transitions, metric(), 4, &mut rng(seed + 100)).unwrap();
    for i in 0..ds.len() {
        let rec = ds.record_mut(i).unwrap();
        rec.err = 0.1 * i as f32;
        rec.a_e = (i + 1) % 4;
        rec.counter = 50;
    }
    (online, target, ds, batch)
}

fn params(phi_override: Option<f32>, optimizer: Optimizer) -> StepParams {
    StepParams {
        mode: Algorithm::Diiqn,
        gamma: 0.9,
        double_dqn: true,
        beta_conf: 1.0,
        c_max: 1_000,
        phi_override,
        optimizer,
    }
}

fn weighted(batch: &[AugmentedExperience]) -> Vec<(&AugmentedExperience, f32)> {
    batch.iter().enumerate().map(|(i, e)| (e, 0.5 + 0.05 * i as f32)).collect()
}

#[test]
fn zero_confidence_is_a_plain_agent_update() {
    let (online, target, mut ds, batch) = fixture(3);
    let b = weighted(&batch);
    let mut with_expert = online.clone();
    train_step(&mut with_expert, &target, Some(&mut ds), &b, &params(Some(0.0), Optimizer::adam(1e-3))).unwrap();
    let mut dqn = online.clone();
    let p = StepParams { mode: Algorithm::Dqn, ..params(None, Optimizer::adam(1e-3)) };
    train_step(&mut dqn, &target, None, &b, &p).unwrap();
    assert_eq!(with_expert.params(), dqn.params());
}

#[test]
fn full_confidence_trains_only_the_expert_term() {
    let (online, target, mut ds, batch) = fixture(4);
    let b = weighted(&batch);
    let snapshot = ds.clone();
    let mut net = online.clone();
    let out = train_step(&mut net, &target, Some(&mut ds), &b, &params(Some(1.0), Optimizer::Sgd { lr: 0.1 })).unwrap();
    assert_eq!(out.expert_samples, batch.iter().filter(|e| e.expert_ref.is_some()).count());

    let mut entries = Vec::new();
    let mut manual_states = Vec::new();
    for (e, w) in &b {
        if let Some(i) = e.expert_ref {
            let rec = snapshot.record(i).unwrap();
            let y = ddqn_target(e.r, e.done, &rec.s_e_next, &online, &target, 0.9, true).unwrap();
            manual_states.push((rec.s_e.clone(), rec.a_e, y, *w));
        } else {
            let y = ddqn_target(e.r, e.done, &e.s_a_next, &online, &target, 0.9, true).unwrap();
            manual_states.push((e.s_a.clone(), e.a_a, y, *w));
        }
    }
    for (s, a, y, w) in &manual_states {
        entries.push(TdEntry { state: s, action: *a, target: *y, weight: *w });
    }
    let mut manual = online.clone();
    manual.weighted_td_step(&entries, b.len(), Optimizer::Sgd { lr: 0.1 }).unwrap();
    for (x, y) in net.params().iter().zip(manual.params()) {
        assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
    }
}

#[test]
fn confidence_is_treated_as_a_constant() {
    // The blended step must equal a plain weighted step with the confidence
    // frozen at its computed values: no gradient flows through it.
    let (online, target, mut ds, batch) = fixture(5);
    let b = weighted(&batch);
    let snapshot = ds.clone();
    let mut net = online.clone();
    let out = train_step(&mut net, &target, Some(&mut ds), &b, &params(None, Optimizer::Sgd { lr: 0.05 })).unwrap();
    assert!(out.phis.iter().any(|p| *p > 0.0));

    let mut owned = Vec::new();
    for ((e, w), phi) in b.iter().zip(&out.phis) {
        let y_a = ddqn_target(e.r, e.done, &e.s_a_next, &online, &target, 0.9, true).unwrap();
        match e.expert_ref {
            Some(i) => {
                let rec = snapshot.record(i).unwrap();
                let y_e = ddqn_target(e.r, e.done, &rec.s_e_next, &online, &target, 0.9, true).unwrap();
                owned.push((e.s_a.clone(), e.a_a, y_a, (1.0 - phi) * w));
                owned.push((rec.s_e.clone(), rec.a_e, y_e, phi * w));
            }
            None => owned.push((e.s_a.clone(), e.a_a, y_a, *w)),
        }
    }
    let entries: Vec<TdEntry<f32>> = owned
        .iter()
        .map(|(s, a, y, w)| TdEntry { state: s, action: *a, target: *y, weight: *w })
        .collect();
    let mut manual = online.clone();
    manual.weighted_td_step(&entries, b.len(), Optimizer::Sgd { lr: 0.05 }).unwrap();
    assert_eq!(net.params(), manual.params());
}

#[test]
fn repeated_updates_on_a_fixed_batch_reduce_the_loss() {
    let mut r = rng(8);
    let mut net = QNetwork::<f32>::new(&[3, 16, 16, 4], &mut r).unwrap();
    let data: Vec<(Vec<f32>, usize, f32)> = (0..16)
        .map(|_| {
            (
                (0..3).map(|_| r.random_range(-1.0f32..1.0)).collect(),
                r.random_range(0..4),
                r.random_range(-2.0f32..2.0),
            )
        })
        .collect();
    let entries: Vec<TdEntry<f32>> = data
        .iter()
        .map(|(s, a, y)| TdEntry { state: s, action: *a, target: *y, weight: 1.0 })
        .collect();
    let mut losses = Vec::new();
    for _ in 0..51 {
        losses.push(net.weighted_td_step(&entries, entries.len(), Optimizer::adam(1e-3)).unwrap());
    }
    let drops = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(drops >= 45, "{drops} of 50 steps lowered the loss");
}

fn fake_cell(final_return: f32, conv: Option<u64>, phis: &[f32]) -> (TrainSummary, Vec<IntervalRow>) {
    let summary = TrainSummary {
        config_hash: "h".into(),
        seed: 0,
        algorithm: Algorithm::Diiqn,
        steps: 3_000,
        episodes: 10,
        convergence_step: conv,
        final_return,
        final_normalized: final_return / 10.0,
        final_success_rate: 1.0,
    };
    let rows = phis
        .iter()
        .enumerate()
        .map(|(i, &p)| IntervalRow {
            step: 1_000 * (i as u64 + 1),
            epsilon: 0.0,
            mean_phi: p,
            expert_fraction: 0.0,
            mean_loss: 0.0,
            mean_err: 0.0,
            matched_fraction: 0.0,
            infeasible_fraction: 0.0,
            bridges: 0,
            mean_bridge_len: 0.0,
            updates: 0,
        })
        .collect();
    (summary, rows)
}

#[test]
fn sweep_aggregation_matches_hand_arithmetic() {
    let cells = vec![
        fake_cell(2.0, Some(1_000), &[0.0, 0.2, 0.4]),
        fake_cell(4.0, None, &[0.0, 0.4, 0.2]),
        fake_cell(9.0, Some(3_000), &[0.0, 0.6, 0.0]),
    ];
    let (summary, curve) = summarize_variant("v", "hash", &cells, 1);
    assert_eq!(summary.seeds_ok, 3);
    assert_eq!(summary.seeds_failed, 1);
    assert!((summary.mean_final_return - 5.0).abs() < 1e-12);
    // population std: sqrt(((2-5)^2 + (4-5)^2 + (9-5)^2) / 3)
    assert!((summary.std_final_return - (26.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((summary.mean_final_normalized - 0.5).abs() < 1e-6);
    assert_eq!(summary.converged, 2);
    assert_eq!(summary.mean_convergence_step, Some(2_000.0));
    assert_eq!(curve.len(), 3);
    assert!((curve[1].mean_phi - 0.4).abs() < 1e-6);
    assert!((curve[1].std_phi - (0.08f64 / 3.0).sqrt()).abs() < 1e-6);
    assert_eq!(curve[2].seeds, 3);
}

/// Every record with the states the expert reaches after it, following
/// chains and their cross-links.
fn chain_links(ds: &ExpertDataset) -> BTreeSet<(Vec<u32>, Vec<u32>, BTreeSet<(Vec<u32>, usize)>)> {
    (0..ds.len())
        .map(|i| {
            let r = &ds.records()[i];
            let ahead = expert_forward_states(ds, i, 6, 0.0)
                .into_iter()
                .map(|(s, depth)| (state_key(&s), depth))
                .collect();
            (state_key(&r.s_e), state_key(&r.s_e_next), ahead)
        })
        .collect()
}

#[test]
fn learned_chains_do_not_depend_on_merge_order() {
    let cfg = RunConfig::default();
    let parts = [
        script_expert(&cfg, &[], 1).unwrap(),
        script_expert(&cfg, &[(13, 1)], 1).unwrap(),
        script_expert(&cfg, &[(3, 5)], 1).unwrap(),
    ];
    let orders = [[0, 1, 2], [2, 0, 1], [1, 2, 0], [2, 1, 0]];
    let mut reference = None;
    for order in orders {
        let file = build_dataset(order.iter().map(|&i| parts[i].clone()).collect()).unwrap();
        let ds = ExpertDataset::load(file.transitions, metric(), 4, &mut rng(0)).unwrap();
        let links = chain_links(&ds);
        match &reference {
            None => reference = Some(links),
            Some(r) => assert_eq!(r, &links, "order {order:?}"),
        }
    }
}
