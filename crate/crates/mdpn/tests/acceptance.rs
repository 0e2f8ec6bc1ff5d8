//! Acceptance suite: one test per release criterion, each printing a
//! single PASS line with its headline numbers (run with --nocapture to
//! see them). Tolerances and runtime budgets are pinned in the asserts.

use std::time::{Duration, Instant};

use mdpn::builders::{build_rotation3, rotation3_per_slot, Rotation3Params};
use mdpn::capacity::achievable_rate;
use mdpn::capacity::{
    capacity_margin, hull_margin_from_points, occupation_to_policy, rate_points, RegionClass,
};
use mdpn::experiments;
use mdpn::fluid::{check_drift_inequality, default_dt, empty_time_bound, integrate_fluid};
use mdpn::sim::{run, run_from, ControllerSpec, WarpConfig};
use mdpn::solver::{
    brute_force_gain, policy_iteration, relative_value_iteration, QueueWeights, SolverConfig,
};
use mdpn::testkit::{random_model, random_weights, RandomModelSpec};

fn report(criterion: usize, name: &str, elapsed: Duration, detail: &str) {
    println!("[acceptance] criterion {criterion} ({name}): PASS in {elapsed:.2?} - {detail}");
}

/// Criterion 1: on fifty random models the iterative solvers agree with
/// the exhaustive oracle to 1e-8, in under ten seconds.
#[test]
fn criterion_1_solver_oracle_equivalence() {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let mut worst_vi = 0.0f64;
    let mut worst_pi = 0.0f64;
    for i in 0..50u64 {
        let spec = RandomModelSpec {
            states: 2 + (i % 3) as usize,  // up to 4
            actions: 2 + (i % 2) as usize, // up to 3
            classes: 2,
            schedule_bound: 2,
        };
        let model = random_model(&spec, 1000 + i);
        let q = QueueWeights(random_weights(2, 5.0, 2000 + i));
        let oracle = brute_force_gain(&model, &q).unwrap().gain_bias.gain;
        let vi = relative_value_iteration(&model, &q, &cfg).unwrap().gain;
        let pi = policy_iteration(&model, &q, &cfg).unwrap().gain;
        worst_vi = worst_vi.max((vi - oracle).abs());
        worst_pi = worst_pi.max((pi - oracle).abs());
    }
    assert!(worst_vi < 1e-8, "value iteration off by {worst_vi}");
    assert!(worst_pi < 1e-8, "policy iteration off by {worst_pi}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10));
    report(
        1,
        "solver-oracle equivalence",
        elapsed,
        &format!("worst |vi-oracle| = {worst_vi:.2e}, worst |pi-oracle| = {worst_pi:.2e}"),
    );
}

/// Criterion 2: the rotation switch with loss-free holds has the
/// analytic per-cycle capacity region {l1+l3 <= 1, l2+l3 <= 1, l3 <= 1};
/// the LP classification matches it at twenty grid points and the margin
/// matches the enumeration oracle to 1e-7, in under thirty seconds.
#[test]
fn criterion_2_rotation_capacity_region() {
    let start = Instant::now();
    let model = build_rotation3(&Rotation3Params::default()).unwrap();
    let points = rate_points(&model).unwrap();

    let mut grid: Vec<[f64; 3]> = vec![[0.4, 0.4, 0.4], [0.7, 0.7, 0.4]];
    for l1 in [0.2, 0.5, 0.8] {
        for l2 in [0.2, 0.5, 0.8] {
            for l3 in [0.15, 0.45] {
                grid.push([l1, l2, l3]);
            }
        }
    }
    assert_eq!(grid.len(), 20);

    let mut worst_gap = 0.0f64;
    let mut worst_analytic = 0.0f64;
    for cycle in &grid {
        let lambda = rotation3_per_slot(cycle);
        let lp = capacity_margin(&model, &lambda).unwrap();
        let hull = hull_margin_from_points(&points, &lambda).unwrap();
        worst_gap = worst_gap.max((lp.margin - hull).abs());

        // Analytic uniform slack per cycle from the three face constraints.
        let analytic_cycle = ((1.0 - cycle[0] - cycle[2]) / 2.0)
            .min((1.0 - cycle[1] - cycle[2]) / 2.0)
            .min(1.0 - cycle[2]);
        worst_analytic = worst_analytic.max((3.0 * lp.margin - analytic_cycle).abs());
        let expected = if analytic_cycle > 0.0 {
            RegionClass::Interior
        } else {
            RegionClass::Outside
        };
        assert_eq!(
            lp.classification, expected,
            "lambda {cycle:?}: margin {} vs analytic {analytic_cycle}",
            lp.margin
        );
    }
    assert!(worst_gap < 1e-7, "lp vs hull gap {worst_gap}");
    assert!(
        worst_analytic < 1e-6,
        "analytic region gap {worst_analytic}"
    );

    let inside = capacity_margin(&model, &rotation3_per_slot(&[0.4, 0.4, 0.4])).unwrap();
    assert_eq!(inside.classification, RegionClass::Interior);
    let outside = capacity_margin(&model, &rotation3_per_slot(&[0.7, 0.7, 0.4])).unwrap();
    assert_eq!(outside.classification, RegionClass::Outside);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30));
    report(
        2,
        "rotation capacity region",
        elapsed,
        &format!(
            "20 grid points, {} hull vertices, worst lp-hull gap {worst_gap:.2e}, worst analytic gap {worst_analytic:.2e}",
            points.len()
        ),
    );
}

/// Criterion 3: at per-cycle arrivals (0.4, 0.4, 0.4) - strictly inside
/// the region - the myopic rule lets class 3 grow while the epoch
/// controller stays bounded, over ten seeds of 300k slots each.
#[test]
fn criterion_3_maxweight_unstable_warp_stable() {
    let start = Instant::now();
    let mw = experiments::rotation3_maxweight_unstable();
    for line in &mw.lines {
        println!("    {line}");
    }
    assert!(mw.pass, "maxweight instability experiment failed");
    let warp = experiments::rotation3_warp_stable();
    for line in &warp.lines {
        println!("    {line}");
    }
    assert!(warp.pass, "warp stability experiment failed");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300));
    report(
        3,
        "myopic unstable / epoch controller stable",
        elapsed,
        "both experiments pass",
    );
}

/// Criterion 4: the worked stability conditions evaluate to exactly
/// 5/4 < 4, 23/400 < 1/4, and 308/400 > 3/4.
#[test]
fn criterion_4_appendix_worked_numbers() {
    let start = Instant::now();
    let out = experiments::appendix_conditions();
    for line in &out.lines {
        println!("    {line}");
    }
    assert!(out.pass);
    report(
        4,
        "exact condition numbers",
        start.elapsed(),
        "A, B, C all hold exactly",
    );
}

/// Criterion 5: on the decoherence network at the worked rates, queue 0
/// grows under the myopic rule and all queues stay bounded under the
/// priority rule, over ten seeds of one million slots each.
#[test]
fn criterion_5_decoherence_p0_vs_maxweight() {
    let start = Instant::now();
    let out = experiments::appendix_p0_vs_maxweight();
    for line in &out.lines {
        println!("    {line}");
    }
    assert!(out.pass);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(900));
    report(
        5,
        "decoherence network verdicts",
        elapsed,
        "myopic grows, priority bounded",
    );
}

/// Criterion 6: at five interior points the fluid trajectory empties no
/// later than the closed-form bound (+2 dt) and the Lyapunov drift
/// inequality holds within the discretization tolerance.
#[test]
fn criterion_6_fluid_stability() {
    let start = Instant::now();
    let model = build_rotation3(&Rotation3Params::stochastic()).unwrap();
    let cfg = SolverConfig::default();
    let interior: [[f64; 3]; 5] = [
        [0.4, 0.4, 0.4],
        [0.2, 0.2, 0.6],
        [0.6, 0.6, 0.2],
        [0.5, 0.3, 0.3],
        [0.1, 0.7, 0.25],
    ];
    let q0 = [1.0 / 3.0; 3];
    let mut details = Vec::new();
    for cycle in interior {
        let lambda = rotation3_per_slot(&cycle);
        let eps = capacity_margin(&model, &lambda).unwrap().margin;
        assert!(eps > 0.0, "point {cycle:?} not interior");
        let bound = empty_time_bound(&q0, eps).unwrap();
        let dt = default_dt(&lambda);
        let traj =
            integrate_fluid(&model, &lambda, &q0, Some(dt), bound + 10.0 * dt, &cfg).unwrap();
        let empty = traj.empty_time.unwrap_or(f64::INFINITY);
        assert!(
            empty <= bound + 2.0 * dt,
            "point {cycle:?}: emptied at {empty}, bound {bound}"
        );
        let drift = check_drift_inequality(&traj, eps).unwrap();
        let lam_total: f64 = lambda.iter().sum();
        let tol = 5.0 * dt * (lam_total + model.schedule_bound as f64);
        assert!(
            drift.worst_slack <= tol,
            "point {cycle:?}: drift slack {} above {tol}",
            drift.worst_slack
        );
        details.push(format!("{cycle:?}: empty {empty:.2} <= {bound:.2}"));
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120));
    report(6, "fluid emptying and drift", elapsed, &details.join("; "));
}

/// Criterion 7: the per-epoch timescale diagnostic shrinks with the
/// initial queue scale and is below 0.1 at c = 200.
#[test]
fn criterion_7_timescale_separation() {
    let start = Instant::now();
    let out = experiments::timescale_separation();
    for line in &out.lines {
        println!("    {line}");
    }
    assert!(out.pass);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300));
    report(
        7,
        "timescale separation",
        elapsed,
        "TV(c=200) < TV(c=50) and < 0.1",
    );
}

/// Criterion 8: the cross-module property suite.
#[test]
fn criterion_8_property_suites() {
    let start = Instant::now();
    let cfg = SolverConfig::default();

    // Per-slot conservation on every simulated trace in this suite.
    let rot = build_rotation3(&Rotation3Params::stochastic()).unwrap();
    let deco =
        mdpn::builders::build_decoherence_net(&mdpn::builders::DecoherenceNetParams::paper(0.01))
            .unwrap();
    let p0 = mdpn::builders::p0_policy(&deco).unwrap();
    let traces = [
        run(&rot, &ControllerSpec::MaxWeight, 50_000, 3).unwrap(),
        run(
            &rot,
            &ControllerSpec::Warp(WarpConfig::default()),
            50_000,
            3,
        )
        .unwrap(),
        run(&deco, &p0, 50_000, 3).unwrap(),
    ];
    for trace in &traces {
        let r = trace.classes;
        let mut prev = trace.initial_queue.clone();
        for t in 0..trace.len() {
            let q = trace.queue_at(t);
            for cls in 0..r {
                let a = trace.arrivals[t * r + cls] as i64;
                let d = trace.departures[t * r + cls] as i64;
                assert_eq!(q[cls] as i64 - prev[cls] as i64, a - d);
                assert!(d <= trace.sigma[t * r + cls].min(rot.schedule_bound) as i64);
            }
            prev = q.to_vec();
        }
    }

    // Policy scale invariance on 100 random weight vectors.
    for i in 0..100u64 {
        let model = random_model(&RandomModelSpec::default(), 3000 + i);
        let q = random_weights(2, 10.0, 4000 + i);
        let a = relative_value_iteration(&model, &QueueWeights(q.clone()), &cfg).unwrap();
        let q10: Vec<f64> = q.iter().map(|v| v * 10.0).collect();
        let b = relative_value_iteration(&model, &QueueWeights(q10), &cfg).unwrap();
        assert_eq!(
            a.policy, b.policy,
            "policy changed under scaling at seed {i}"
        );
    }

    // Optimal gain monotone in the weights on 50 nested pairs.
    for i in 0..50u64 {
        let model = random_model(&RandomModelSpec::default(), 5000 + i);
        let q = random_weights(2, 10.0, 6000 + i);
        let bump = random_weights(2, 3.0, 7000 + i);
        let q2: Vec<f64> = q.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let g1 = relative_value_iteration(&model, &QueueWeights(q), &cfg)
            .unwrap()
            .gain;
        let g2 = relative_value_iteration(&model, &QueueWeights(q2), &cfg)
            .unwrap()
            .gain;
        assert!(
            g2 >= g1 - 1e-8,
            "gain decreased under larger weights at seed {i}"
        );
    }

    // Saturated-run service rates match the stationary rates to 3/sqrt(N).
    let lambda = rotation3_per_slot(&[0.4, 0.4, 0.4]);
    let witness = occupation_to_policy(&rot, &capacity_margin(&rot, &lambda).unwrap().measure);
    let analytic = achievable_rate(&rot, &witness).unwrap();
    let n: u64 = 1_000_000;
    let trace = run_from(
        &rot,
        &ControllerSpec::FixedAgnostic(witness),
        0,
        &[1_000_000; 3],
        n,
        42,
    )
    .unwrap();
    let bound = 3.0 / (n as f64).sqrt();
    let mut worst_rate = 0.0f64;
    for cls in 0..3 {
        let empirical = trace.total_departures(cls) as f64 / n as f64;
        worst_rate = worst_rate.max((empirical - analytic[cls]).abs());
        assert!(
            (empirical - analytic[cls]).abs() < bound,
            "class {cls}: empirical {empirical} vs analytic {}",
            analytic[cls]
        );
    }

    // Capacity margin nonincreasing in the arrival vector.
    for i in 0..10u64 {
        let model = random_model(&RandomModelSpec::default(), 8000 + i);
        let lo = random_weights(2, 0.8, 9000 + i);
        let bump = random_weights(2, 0.5, 9500 + i);
        let hi: Vec<f64> = lo.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let m_lo = capacity_margin(&model, &lo).unwrap().margin;
        let m_hi = capacity_margin(&model, &hi).unwrap().margin;
        assert!(m_hi <= m_lo + 1e-9);
    }

    let elapsed = start.elapsed();
    report(
        8,
        "property suites",
        elapsed,
        &format!("conservation, scale invariance, monotone gain, saturated rate (worst {worst_rate:.2e}), monotone margin"),
    );
}
