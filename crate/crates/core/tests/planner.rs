use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxplan::metrics::{evaluate, generate_synthetic, EvalOptions, SynthConfig};
use voxplan::planner::{
    aggregate_candidates, nucleus_sample, nucleus_support, CandidateSet, OraclePlanner, Planner, PlannerError,
    SamplingConfig, ToyPlanner, ToyPlannerConfig,
};
use voxplan::scenario::{EgoState, EgoStateHistory, MetaDecision, PlanTrajectory, PlanningProfile};

/// Pearson statistic of `counts` against `probs`.
fn chi_square(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[test]
fn full_nucleus_reproduces_the_distribution() {
    let dist = [0.4, 0.25, 0.2, 0.1, 0.05];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        counts[nucleus_sample(&dist, 1.0, &mut rng).unwrap()] += 1;
    }
    // 99.9th percentile of chi-square with 4 degrees of freedom.
    assert!(chi_square(&counts, &dist) < 18.467, "{counts:?}");
}

#[test]
fn truncated_nucleus_renormalizes() {
    let dist = [0.1, 0.3, 0.35, 0.25];
    let support = nucleus_support(&dist, 0.7).unwrap();
    assert_eq!(support, vec![2, 1, 3]);
    let mass: f64 = support.iter().map(|&i| dist[i]).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        counts[nucleus_sample(&dist, 0.7, &mut rng).unwrap()] += 1;
    }
    assert_eq!(counts[0], 0);
    let renorm = [dist[1] / mass, dist[2] / mass, dist[3] / mass];
    assert!(chi_square(&counts[1..], &renorm) < 13.816);
}

#[test]
fn nucleus_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        assert_eq!(nucleus_sample(&[0.0, 1.0, 0.0], 0.5, &mut rng).unwrap(), 1);
        assert_eq!(nucleus_sample(&[0.6, 0.3, 0.1], 0.6, &mut rng).unwrap(), 0);
    }
    assert_eq!(nucleus_support(&[0.25; 4], 0.5).unwrap(), vec![0, 1]);
    assert!(matches!(nucleus_support(&[0.5, 0.6], 0.9), Err(PlannerError::InvalidDistribution(_))));
    assert!(matches!(nucleus_support(&[0.5, 0.5], 0.0), Err(PlannerError::InvalidTopP(_))));
    assert!(matches!(nucleus_support(&[0.5, 0.5], 1.5), Err(PlannerError::InvalidTopP(_))));
}

fn traj(points: Vec<[f64; 2]>) -> PlanTrajectory {
    PlanTrajectory::new(points, 5.0).unwrap()
}

#[test]
fn aggregation_fixtures() {
    let a = traj(vec![[0.0, 0.0], [2.0, 2.0]]);
    let b = traj(vec![[2.0, 0.0], [4.0, 2.0]]);
    let mean = aggregate_candidates(&CandidateSet::unscored(vec![a.clone(), b]).unwrap()).unwrap();
    assert_eq!(mean.waypoints(), &[[1.0, 0.0], [3.0, 2.0]]);
    let same = aggregate_candidates(&CandidateSet::unscored(vec![a.clone(); 5]).unwrap()).unwrap();
    assert_eq!(same, a);
    assert!(matches!(CandidateSet::unscored(vec![]), Err(PlannerError::EmptyCandidates)));
    let short = traj(vec![[0.0, 0.0]]);
    assert!(matches!(CandidateSet::unscored(vec![a, short]), Err(PlannerError::HorizonMismatch)));
}

#[test]
fn sixteen_candidates_match_coordinate_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let cands: Vec<PlanTrajectory> = (0..16)
            .map(|_| traj((0..25).map(|_| [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)]).collect()))
            .collect();
        let got = aggregate_candidates(&CandidateSet::unscored(cands.clone()).unwrap()).unwrap();
        for t in 0..25 {
            for a in 0..2 {
                let want = cands.iter().map(|c| c.waypoints()[t][a]).sum::<f64>() / 16.0;
                assert!((got.waypoints()[t][a] - want).abs() < 1e-12);
            }
        }
    }
}

fn candidate_sets() -> impl Strategy<Value = Vec<Vec<[f64; 2]>>> {
    (1usize..8, 1usize..10).prop_flat_map(|(k, n)| {
        prop::collection::vec(prop::collection::vec([-100.0..100.0f64, -100.0..100.0f64], n), k)
    })
}

proptest! {
    #[test]
    fn aggregation_commutes_with_translation(sets in candidate_sets(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let cands: Vec<_> = sets.into_iter().map(traj).collect();
        let moved: Vec<_> = cands.iter().map(|t| t.translated([dx, dy])).collect();
        let a = aggregate_candidates(&CandidateSet::unscored(cands).unwrap()).unwrap().translated([dx, dy]);
        let b = aggregate_candidates(&CandidateSet::unscored(moved).unwrap()).unwrap();
        for (p, q) in a.waypoints().iter().zip(b.waypoints()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn aggregation_ignores_candidate_order(sets in candidate_sets(), rot in 0usize..8) {
        let cands: Vec<_> = sets.into_iter().map(traj).collect();
        let mut shuffled = cands.clone();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        shuffled.reverse();
        let a = aggregate_candidates(&CandidateSet::unscored(cands).unwrap()).unwrap();
        let b = aggregate_candidates(&CandidateSet::unscored(shuffled).unwrap()).unwrap();
        for (p, q) in a.waypoints().iter().zip(b.waypoints()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }
}

fn toy(sampling: SamplingConfig) -> ToyPlanner {
    ToyPlanner::new(ToyPlannerConfig { sampling, ..Default::default() }, PlanningProfile::womd()).unwrap()
}

#[test]
fn toy_planner_is_seed_deterministic() {
    let scenarios = generate_synthetic(&SynthConfig::default(), 21, 3).unwrap();
    let planner = toy(SamplingConfig { k: 4, ..Default::default() });
    for s in &scenarios {
        let a = planner.plan(s, 99).unwrap();
        assert_eq!(a, planner.plan(s, 99).unwrap());
        assert_eq!(a.candidates.len(), 4);
        assert_eq!(a.trajectory.len(), 25);
        assert_eq!(a.trajectory.frequency_hz(), 5.0);
        assert_eq!(a.decisions.len(), 2);
    }
    let other = planner.plan(&scenarios[0], 100).unwrap();
    assert_ne!(other.candidates, planner.plan(&scenarios[0], 99).unwrap().candidates);
}

#[test]
fn single_candidate_is_the_plan() {
    let s = &generate_synthetic(&SynthConfig::default(), 22, 1).unwrap()[0];
    let out = toy(SamplingConfig { k: 1, ..Default::default() }).plan(s, 1).unwrap();
    assert_eq!(out.candidates.len(), 1);
    assert_eq!(out.trajectory, out.candidates.trajectories[0]);
}

#[test]
fn forced_stationary_from_rest_stays_put() {
    let mut s = generate_synthetic(&SynthConfig::default(), 23, 1).unwrap().remove(0);
    let rest: Vec<EgoState> = (1..=5)
        .rev()
        .map(|i| EgoState { t: -0.2 * i as f64, position: [0.0; 2], velocity: [0.0; 2], acceleration: [0.0; 2] })
        .collect();
    s.history = EgoStateHistory::new(rest, 5.0).unwrap();
    let cfg = ToyPlannerConfig { stationary_bias: 1e3, ..Default::default() };
    let planner = ToyPlanner::new(cfg, PlanningProfile::womd()).unwrap();
    let out = planner.plan(&s, 0).unwrap();
    assert_eq!(out.decisions, vec![MetaDecision::KeepStationary; 2]);
    assert!(out.trajectory.waypoints().iter().all(|p| *p == [0.0, 0.0]));
}

#[test]
fn garbled_samples_are_dropped() {
    let s = &generate_synthetic(&SynthConfig::default(), 24, 1).unwrap()[0];
    let cfg = ToyPlannerConfig {
        corrupt_prob: 0.5,
        sampling: SamplingConfig { k: 16, ..Default::default() },
        ..Default::default()
    };
    let out = ToyPlanner::new(cfg.clone(), PlanningProfile::womd()).unwrap().plan(s, 0).unwrap();
    assert!(out.dropped > 0 && out.dropped < 16);
    assert_eq!(out.candidates.len() + out.dropped, 16);

    let all_bad = ToyPlannerConfig { corrupt_prob: 1.0, ..cfg };
    let err = ToyPlanner::new(all_bad, PlanningProfile::womd()).unwrap().plan(s, 0).unwrap_err();
    assert!(matches!(err, PlannerError::AllCandidatesDropped(16)));
}

#[test]
fn oracle_variants_score_as_expected() {
    let corpus = generate_synthetic(&SynthConfig::default(), 25, 400).unwrap();
    let profile = PlanningProfile::womd();
    let opts = EvalOptions::default();

    let exact = evaluate(&corpus, &OraclePlanner::exact(profile), &opts).unwrap();
    for h in &exact.horizons {
        assert_eq!((h.ade, h.bade), (Some(0.0), Some(0.0)));
    }
    assert_eq!(exact.meta_decision_accuracy, Some(1.0));

    let shifted = evaluate(&corpus, &OraclePlanner::offset(profile, [3.0, 4.0]), &opts).unwrap();
    for h in &shifted.horizons {
        assert!((h.ade.unwrap() - 5.0).abs() < 1e-12);
        assert!((h.bade.unwrap() - 5.0).abs() < 1e-12);
    }

    // Isotropic Gaussian noise: the per-waypoint error is Rayleigh with
    // mean sigma * sqrt(pi / 2).
    let sigma = 0.5;
    let noisy = evaluate(&corpus, &OraclePlanner::noisy(profile, sigma), &opts).unwrap();
    let want = sigma * (std::f64::consts::PI / 2.0).sqrt();
    let got = noisy.horizon(5.0).unwrap().ade.unwrap();
    assert!((got - want).abs() / want < 0.03, "{got} vs {want}");
}
