use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxplan::metrics::{
    ade, bade, evaluate, generate_synthetic, ground_truth_behavior, BadeDivisor, BehaviorMix, EvalOptions, EvalReport,
    SynthConfig,
};
use voxplan::planner::{OraclePlanner, ToyPlanner, ToyPlannerConfig};
use voxplan::scenario::{Behavior, PlanTrajectory, PlanningProfile};

/// bADE straight from its definition, with plain left-to-right sums.
fn oracle_bade(samples: &[(f64, Behavior)], strict: bool) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for &b in Behavior::ALL {
        let xs: Vec<f64> = samples.iter().filter(|s| s.1 == b).map(|s| s.0).collect();
        if !xs.is_empty() {
            total += xs.iter().sum::<f64>() / xs.len() as f64;
            present += 1;
        }
    }
    total / if strict { 7.0 } else { present as f64 }
}

fn samples() -> impl Strategy<Value = Vec<(f64, Behavior)>> {
    prop::collection::vec((0.0..20.0f64, 0usize..7).prop_map(|(a, b)| (a, Behavior::ALL[b])), 1..300)
}

proptest! {
    #[test]
    fn bade_matches_definition(s in samples()) {
        let present = bade(&s, BadeDivisor::Present).unwrap().value;
        let strict = bade(&s, BadeDivisor::Strict7).unwrap().value;
        prop_assert!((present - oracle_bade(&s, false)).abs() < 1e-10);
        prop_assert!((strict - oracle_bade(&s, true)).abs() < 1e-10);
        prop_assert!(strict <= present + 1e-12);
    }

    #[test]
    fn bade_ignores_order_and_class_size(s in samples(), rot in 0usize..300, reps in 1usize..5) {
        let base = bade(&s, BadeDivisor::Present).unwrap().value;
        let mut shuffled = s.clone();
        shuffled.rotate_left(rot % s.len());
        shuffled.reverse();
        prop_assert!((bade(&shuffled, BadeDivisor::Present).unwrap().value - base).abs() < 1e-10);

        // Repeating one behavior's samples changes ADE weights but not bADE.
        let b = s[0].1;
        let mut inflated = s.clone();
        for _ in 0..reps {
            inflated.extend(s.iter().filter(|x| x.1 == b));
        }
        prop_assert!((bade(&inflated, BadeDivisor::Present).unwrap().value - base).abs() < 1e-10);
    }

    #[test]
    fn bade_scales_linearly(s in samples(), c in 0.0..10.0f64) {
        let scaled: Vec<_> = s.iter().map(|&(a, b)| (a * c, b)).collect();
        let base = bade(&s, BadeDivisor::Present).unwrap().value;
        prop_assert!((bade(&scaled, BadeDivisor::Present).unwrap().value - c * base).abs() < 1e-9 * (1.0 + c * base));
    }

    #[test]
    fn single_behavior_bade_is_ade(xs in prop::collection::vec(0.0..20.0f64, 1..200), b in 0usize..7) {
        let s: Vec<_> = xs.iter().map(|&a| (a, Behavior::ALL[b])).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((bade(&s, BadeDivisor::Present).unwrap().value - mean).abs() < 1e-10);
    }

    #[test]
    fn ade_matches_pointwise_mean(pts in prop::collection::vec([-50.0..50.0f64, -50.0..50.0f64], 25), off in prop::collection::vec([-5.0..5.0f64, -5.0..5.0f64], 25)) {
        let gt = PlanTrajectory::new(pts.clone(), 5.0).unwrap();
        let pred = PlanTrajectory::new(pts.iter().zip(&off).map(|(p, o)| [p[0] + o[0], p[1] + o[1]]).collect(), 5.0).unwrap();
        for (h, steps) in [(1.0, 5), (3.0, 15), (5.0, 25)] {
            let want = off[..steps].iter().map(|o| (o[0] * o[0] + o[1] * o[1]).sqrt()).sum::<f64>() / steps as f64;
            prop_assert!((ade(&pred, &gt, h).unwrap() - want).abs() < 1e-12);
        }
    }
}

#[test]
fn strict_divisor_follows_the_literal_formula() {
    // Only three behaviors present: the strict variant still divides by seven.
    let s = [(1.0, Behavior::Stop), (2.0, Behavior::Stop), (4.0, Behavior::LeftTurn), (7.0, Behavior::RightTurn)];
    assert_eq!(bade(&s, BadeDivisor::Present).unwrap().value, (1.5 + 4.0 + 7.0) / 3.0);
    let strict = bade(&s, BadeDivisor::Strict7).unwrap();
    assert_eq!(strict.value, (1.5 + 4.0 + 7.0) / 7.0);
    assert_eq!(strict.absent.len(), 4);

    // With every behavior present both divisors agree.
    let corpus =
        generate_synthetic(&SynthConfig { mix: BehaviorMix::uniform(), ..Default::default() }, 31, 140).unwrap();
    let planner = OraclePlanner::offset(PlanningProfile::womd(), [0.3, -0.4]);
    let run = |divisor| evaluate(&corpus, &planner, &EvalOptions { divisor, ..Default::default() }).unwrap();
    let (a, b) = (run(BadeDivisor::Present), run(BadeDivisor::Strict7));
    assert!(a.absent_behaviors.is_empty());
    for (x, y) in a.horizons.iter().zip(&b.horizons) {
        assert!((x.bade.unwrap() - y.bade.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn generator_follows_the_behavior_mix() {
    let cfg = SynthConfig::default();
    let n = 10_000;
    let corpus = generate_synthetic(&cfg, 32, n).unwrap();
    let mut counts = [0usize; 7];
    for s in &corpus {
        counts[ground_truth_behavior(s).unwrap().index()] += 1;
    }
    for &b in Behavior::ALL {
        let freq = counts[b.index()] as f64 / n as f64;
        assert!((freq - cfg.mix.weight(b)).abs() < 0.02, "{b:?}: {freq} vs {}", cfg.mix.weight(b));
    }
}

#[test]
fn report_is_independent_of_thread_count() {
    let corpus = generate_synthetic(&SynthConfig::default(), 33, 24).unwrap();
    let planner = ToyPlanner::new(ToyPlannerConfig::default(), PlanningProfile::womd()).unwrap();
    let opts = EvalOptions { seed: 5, ..Default::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| evaluate(&corpus, &planner, &opts).unwrap().to_json().unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn failed_samples_are_reported_not_dropped() {
    let mut corpus = generate_synthetic(&SynthConfig::default(), 34, 30).unwrap();
    let truncated = corpus[3].ground_truth.truncated(12).unwrap();
    corpus[3].ground_truth = truncated;
    let report = evaluate(&corpus, &OraclePlanner::exact(PlanningProfile::womd()), &EvalOptions::default()).unwrap();
    assert_eq!(report.counts.total, 30);
    assert_eq!(report.counts.failed, 1);
    assert_eq!(report.counts.scored, 29);
    assert_eq!(report.failures[0].id, corpus[3].id);
    assert!(report.invariants_hold(), "{:?}", report.invariants);
}

#[test]
fn report_serializes_to_json_and_csv() {
    let corpus = generate_synthetic(&SynthConfig::default(), 35, 40).unwrap();
    let planner = OraclePlanner::noisy(PlanningProfile::womd(), 0.2);
    let report = evaluate(&corpus, &planner, &EvalOptions::default()).unwrap();
    assert!(report.invariants_hold());

    let back: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);

    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(&buf[..]);
    assert_eq!(rdr.headers().unwrap(), vec!["horizon_s", "metric", "behavior", "count", "value"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * (2 + 7));
    let bade5 = rows.iter().find(|r| &r[0] == "5.0" && &r[1] == "bade").unwrap();
    assert_eq!(bade5[3].parse::<usize>().unwrap(), 40);
    let v: f64 = bade5[4].parse().unwrap();
    assert!((v - report.horizon(5.0).unwrap().bade.unwrap()).abs() < 1e-12);
}

#[test]
fn behavior_weighting_exposes_rare_class_errors() {
    // A planner that is perfect on common behaviors but poor on rare ones
    // looks good on ADE and bad on bADE.
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let mut s: Vec<(f64, Behavior)> =
        (0..900).map(|_| (rng.random_range(0.0..0.2), Behavior::StraightForward)).collect();
    s.extend((0..10).map(|_| (rng.random_range(8.0..10.0), Behavior::LeftUTurn)));
    let overall = s.iter().map(|x| x.0).sum::<f64>() / s.len() as f64;
    let b = bade(&s, BadeDivisor::Present).unwrap().value;
    assert!(overall < 0.2 && b > 4.0);
}
