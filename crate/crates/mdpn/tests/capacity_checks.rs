//! Cross-checks of the capacity decision: the occupation-measure program
//! against the policy-enumeration oracle on random fixtures, witness
//! consistency, and the structural invariants of optimal measures.

use mdpn::capacity::{
    achievable_rate, capacity_margin, hull_oracle, occupation_to_policy, RegionClass,
};
use mdpn::markov;
use mdpn::testkit::{random_model, random_weights, RandomModelSpec};

#[test]
fn lp_matches_hull_oracle_on_random_fixtures() {
    for i in 0..8u64 {
        let spec = RandomModelSpec {
            states: 2 + (i % 3) as usize,
            actions: 2,
            classes: 2,
            schedule_bound: 2,
        };
        let model = random_model(&spec, 40 + i);
        for j in 0..3u64 {
            let lambda = random_weights(2, 1.5, 77 * i + j);
            let lp = capacity_margin(&model, &lambda).unwrap();
            let hull = hull_oracle(&model, &lambda).unwrap();
            assert!(
                (lp.margin - hull).abs() < 1e-7,
                "model {i} lambda {lambda:?}: lp {} vs hull {hull}",
                lp.margin
            );
        }
    }
}

#[test]
fn optimal_measure_satisfies_flow_balance_and_normalization() {
    let model = random_model(&RandomModelSpec::default(), 5);
    let res = capacity_margin(&model, &[0.3, 0.3]).unwrap();
    let x = &res.measure;
    let total: f64 = x.x.values().sum();
    assert!((total - 1.0).abs() < 1e-9);

    // Flow balance: mass into each state equals mass out.
    let n = model.num_states();
    let mu = x.state_marginal(n);
    for z in 0..n {
        let inflow: f64 =
            x.x.iter()
                .map(|(&(zs, a), &v)| v * model.state_marginal(zs, a).unwrap()[z])
                .sum();
        assert!(
            (mu[z] - inflow).abs() < 1e-8,
            "state {z}: {} vs {inflow}",
            mu[z]
        );
    }
}

#[test]
fn witness_policy_delivers_the_certified_rates() {
    let model = random_model(&RandomModelSpec::default(), 9);
    let lambda = [0.4, 0.2];
    let res = capacity_margin(&model, &lambda).unwrap();
    let witness = occupation_to_policy(&model, &res.measure);
    let rate = achievable_rate(&model, &witness).unwrap();
    for (cls, (&r, &lam)) in rate.iter().zip(lambda.iter()).enumerate() {
        assert!(
            r >= lam + res.margin - 1e-6,
            "class {cls}: rate {r} below {} + {}",
            lam,
            res.margin
        );
    }
    // The witness is a valid unichain policy on this fixture.
    let report = markov::is_unichain_policy(&model, &witness).unwrap();
    assert!(report.is_unichain);
}

#[test]
fn margin_never_exceeds_the_schedule_bound() {
    for i in 0..5u64 {
        let model = random_model(
            &RandomModelSpec {
                schedule_bound: 2,
                ..Default::default()
            },
            60 + i,
        );
        let res = capacity_margin(&model, &[0.0, 0.0]).unwrap();
        assert!(res.margin <= 2.0 + 1e-9);
        assert!(res.margin > 0.0);
        assert_eq!(res.classification, RegionClass::Interior);
    }
}

#[test]
fn margin_is_monotone_in_load() {
    let model = random_model(&RandomModelSpec::default(), 14);
    let base = random_weights(2, 0.5, 99);
    let mut last = f64::INFINITY;
    for scale in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let lambda: Vec<f64> = base.iter().map(|v| v * scale).collect();
        let m = capacity_margin(&model, &lambda).unwrap().margin;
        assert!(m <= last + 1e-9, "margin increased under heavier load");
        last = m;
    }
}
