//! Canned benchmark experiments with embedded pass thresholds. The CLI's
//! `reproduce` subcommand runs these and prints one PASS/FAIL verdict;
//! the acceptance test suite asserts on the same structured outcomes, so
//! the thresholds live in exactly one place.

use num_rational::Ratio;

use crate::builders::{
    build_decoherence_net, build_rotation3, check_appendix_conditions, p0_policy,
    DecoherenceNetParams, Rotation3Params,
};
use crate::sim::{
    replications, run_from, timescale_diagnostic, ControllerSpec, ReplicationConfig, Verdict,
    WarpConfig,
};

pub const EXPERIMENT_NAMES: [&str; 5] = [
    "rotation3-maxweight-unstable",
    "rotation3-warp-stable",
    "appendixC-conditions",
    "appendixC-p0-vs-maxweight",
    "timescale-separation",
];

/// Result of one canned experiment: an overall verdict plus one line per
/// checked quantity, suitable for direct printing.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub lines: Vec<String>,
}

impl ExperimentOutcome {
    fn check(&mut self, label: &str, detail: String, ok: bool) {
        self.lines.push(format!(
            "{label}: {detail} [{}]",
            if ok { "ok" } else { "FAIL" }
        ));
        self.pass &= ok;
    }
}

pub fn run_by_name(name: &str) -> Option<ExperimentOutcome> {
    match name {
        "rotation3-maxweight-unstable" => Some(rotation3_maxweight_unstable()),
        "rotation3-warp-stable" => Some(rotation3_warp_stable()),
        "appendixC-conditions" => Some(appendix_conditions()),
        "appendixC-p0-vs-maxweight" => Some(appendix_p0_vs_maxweight()),
        "timescale-separation" => Some(timescale_separation()),
        _ => None,
    }
}

fn seeds() -> Vec<u64> {
    (1..=10).collect()
}

/// The rotation switch at 0.4 arrivals per class per cycle sits strictly
/// inside the capacity region, yet the myopic rule starves class 3:
/// its queue must drift upward with a cross-seed confidence interval
/// excluding zero and a per-cycle slope in [0.005, 0.08].
pub fn rotation3_maxweight_unstable() -> ExperimentOutcome {
    let mut out = ExperimentOutcome {
        name: "rotation3-maxweight-unstable",
        pass: true,
        lines: Vec::new(),
    };
    let model = build_rotation3(&Rotation3Params::stochastic()).expect("builder");
    let mut cfg = ReplicationConfig::new(300_000, seeds(), 3);
    cfg.burn_in = 0.05;
    let rep = replications(&model, &ControllerSpec::MaxWeight, &cfg);

    let mut ok_runs = true;
    for r in &rep.per_seed {
        if r.is_err() {
            ok_runs = false;
        }
    }
    out.check(
        "all replications ran",
        format!("{} seeds", rep.per_seed.len()),
        ok_runs,
    );

    let agg = rep.per_class[2].as_ref().expect("class-3 aggregate");
    out.check(
        "class-3 slope CI excludes zero",
        format!("ci = ({:.3e}, {:.3e})", agg.ci_low, agg.ci_high),
        agg.ci_low > 0.0,
    );
    let per_cycle = agg.mean * 3.0;
    out.check(
        "per-cycle drift in [0.005, 0.08]",
        format!("mean slope = {per_cycle:.5} per cycle"),
        (0.005..=0.08).contains(&per_cycle),
    );
    // Informational: per-seed verdicts are statistically marginal at this
    // slow drift; the criterion aggregates evidence across seeds.
    let growing = rep
        .per_seed
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter(|d| d.per_class[2].verdict == Verdict::Growing)
        .count();
    out.lines.push(format!(
        "per-seed growing verdicts (informational): {growing}/10"
    ));
    out
}

/// The epoch-based controller stabilizes the same operating point: every
/// seed's total queue verdict is bounded, the post-burn-in maximum stays
/// below 500, and the compact set below 50 is visited at least ten times.
pub fn rotation3_warp_stable() -> ExperimentOutcome {
    let mut out = ExperimentOutcome {
        name: "rotation3-warp-stable",
        pass: true,
        lines: Vec::new(),
    };
    let model = build_rotation3(&Rotation3Params::stochastic()).expect("builder");
    let mut cfg = ReplicationConfig::new(300_000, seeds(), 3);
    cfg.burn_in = 0.05;
    cfg.compact_threshold = 50.0;
    let rep = replications(&model, &ControllerSpec::Warp(WarpConfig::default()), &cfg);

    let mut bounded = 0usize;
    let mut worst_max = 0.0f64;
    let mut min_returns = usize::MAX;
    for r in rep.per_seed.iter().filter_map(|r| r.as_ref().ok()) {
        if r.total.verdict == Verdict::Bounded {
            bounded += 1;
        }
        worst_max = worst_max.max(r.total.max_post);
        min_returns = min_returns.min(r.total.returns_to_compact);
    }
    out.check(
        "per-seed bounded verdicts",
        format!("{bounded}/10"),
        bounded == 10,
    );
    out.check(
        "post-burn-in max total queue < 500",
        format!("worst max = {worst_max}"),
        worst_max < 500.0,
    );
    out.check(
        "at least 10 visits below 50 per seed",
        format!("min visits = {min_returns}"),
        min_returns >= 10,
    );
    out
}

/// Exact rational evaluation of the three conditions at the worked
/// parameter point (4, 150, 150; 20, 200, 200): the myopic starvation
/// bound 5/4 < 4, the priority-stability bound 23/400 < 1/4, and the
/// residual-capacity bound 308/400 > 3/4.
pub fn appendix_conditions() -> ExperimentOutcome {
    let mut out = ExperimentOutcome {
        name: "appendixC-conditions",
        pass: true,
        lines: Vec::new(),
    };
    let r = |n: i64| Ratio::new(n, 1);
    let res = check_appendix_conditions(r(4), r(150), r(150), r(20), r(200), r(200))
        .expect("worked parameters are admissible");

    out.check(
        "A (myopic starves class 0)",
        format!("{} < {}", res.a.lhs, res.a.rhs),
        res.a.holds && res.a.lhs == Ratio::new(5, 4),
    );
    out.check(
        "B (priority keeps queue 0 stable)",
        format!("{} < {}", res.b.lhs, res.b.rhs),
        res.b.holds && res.b.lhs == Ratio::new(23, 400),
    );
    out.check(
        "C (capacity left for classes 1, 2)",
        format!("{} > {} and {}", res.c_lhs, res.c_rhs1, res.c_rhs2),
        res.c_holds && res.c_lhs == Ratio::new(308, 400),
    );
    out.check(
        "all conditions hold",
        format!("{}", res.all_hold),
        res.all_hold,
    );
    out
}

/// On the decoherence network at the worked rates, the myopic rule lets
/// queue 0 grow on every seed while the queue-0-priority rule keeps all
/// three queues bounded on every seed.
pub fn appendix_p0_vs_maxweight() -> ExperimentOutcome {
    let mut out = ExperimentOutcome {
        name: "appendixC-p0-vs-maxweight",
        pass: true,
        lines: Vec::new(),
    };
    let model = build_decoherence_net(&DecoherenceNetParams::paper(0.01)).expect("builder");

    let mut cfg = ReplicationConfig::new(1_000_000, seeds(), 3);
    cfg.burn_in = 0.05;
    let mw = replications(&model, &ControllerSpec::MaxWeight, &cfg);
    let growing = mw
        .per_seed
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter(|d| d.per_class[0].verdict == Verdict::Growing)
        .count();
    out.check(
        "maxweight: queue-0 growing per seed",
        format!("{growing}/10"),
        growing == 10,
    );
    let agg = mw.per_class[0].as_ref().expect("aggregate");
    out.check(
        "maxweight: queue-0 slope CI excludes zero",
        format!("ci = ({:.3e}, {:.3e})", agg.ci_low, agg.ci_high),
        agg.ci_low > 0.0,
    );

    let p0 = p0_policy(&model).expect("builder shape");
    let mut cfg = ReplicationConfig::new(1_000_000, seeds(), 3);
    cfg.burn_in = 0.2;
    let rep = replications(&model, &p0, &cfg);
    let mut bounded = 0usize;
    let mut total = 0usize;
    for d in rep.per_seed.iter().filter_map(|r| r.as_ref().ok()) {
        for cls in 0..3 {
            total += 1;
            if d.per_class[cls].verdict == Verdict::Bounded {
                bounded += 1;
            }
        }
    }
    out.check(
        "priority rule: bounded on every queue and seed",
        format!("{bounded}/{total}"),
        bounded == total && total == 30,
    );
    out
}

/// Under the epoch controller started from total queue c, the server
/// chain should effectively reach its per-epoch stationary law within an
/// epoch once c is large: the mean tail-half total-variation distance
/// over the first three epochs must shrink from c = 50 to c = 200 and be
/// below 0.1 at c = 200.
pub fn timescale_separation() -> ExperimentOutcome {
    let mut out = ExperimentOutcome {
        name: "timescale-separation",
        pass: true,
        lines: Vec::new(),
    };
    let model = build_rotation3(&Rotation3Params::stochastic()).expect("builder");
    let warp = ControllerSpec::Warp(WarpConfig::default());

    let mut means = Vec::new();
    for c in [50u64, 200u64] {
        let mut tvs = Vec::new();
        for seed in seeds() {
            let q0 = vec![c / 3 + (c % 3), c / 3, c / 3];
            let trace = run_from(&model, &warp, 0, &q0, 2000, seed).expect("run");
            for epoch in 0..3u64 {
                tvs.push(timescale_diagnostic(&model, &trace, epoch).expect("complete epoch"));
            }
        }
        let mean: f64 = tvs.iter().sum::<f64>() / tvs.len() as f64;
        out.lines.push(format!(
            "mean epoch-tail TV at c={c}: {mean:.4} ({} epochs)",
            tvs.len()
        ));
        means.push(mean);
    }
    out.check(
        "TV shrinks with the initial scale",
        format!("{:.4} at c=200 vs {:.4} at c=50", means[1], means[0]),
        means[1] < means[0],
    );
    out.check(
        "TV below 0.1 at c=200",
        format!("{:.4}", means[1]),
        means[1] < 0.1,
    );
    out
}
