mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxplan::geometry::{bilinear_sample, project_to_view, RigidPose};
use voxplan::volume::{
    build_sparse_from_gates, build_sparse_tokens, compute_gate_field, lift_dense, lift_frame, select_top_m, GateField,
    LiftConfig, LiftParams,
};

fn small_cfg<R: Rng>(rng: &mut R, c: usize, history: usize) -> LiftConfig {
    LiftConfig {
        channels: c,
        gate_channels: rng.random_range(1..5),
        history_frames: history,
        gate_hidden: rng.random_range(2..10),
        fourier_levels: rng.random_range(1..4),
        posemb_hidden: rng.random_range(2..10),
        top_m: 1,
        grid: random_grid(rng),
        ..LiftConfig::desk()
    }
}

#[test]
fn projection_and_bilinear_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let rig = random_rig(&mut rng, 3);
        let fm = random_map(&mut rng, 7, 5, 3);
        for _ in 0..100 {
            let p = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-3.0..5.0)];
            for cam in &rig.cameras {
                let (a, b) = (project_to_view(p, cam), naive_project(p, cam));
                assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    assert!(max_abs_diff(&a, &b) < 1e-9);
                }
            }
            let (u, v) = (rng.random_range(-2.0..9.0), rng.random_range(-2.0..7.0));
            assert!(max_abs_diff(&bilinear_sample(&fm, u, v), &naive_bilinear(&fm, u, v)) < 1e-12);
        }
    }
}

#[test]
fn dense_lifting_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut seen, mut total) = (0, 0);
    for _ in 0..25 {
        let views = rng.random_range(2..=8);
        let rig = random_rig(&mut rng, views);
        let c = rng.random_range(1..=32);
        let frames = random_frames(&mut rng, &rig, 2, c);
        let grid = random_grid(&mut rng);
        let dense = lift_dense(&frames[0].maps, &rig, &grid).unwrap();
        let (feats, valid) = naive_lift(&frames[0].maps, &rig, &grid, &RigidPose::identity());
        assert_eq!(dense.valid, valid);
        assert!(max_abs_diff(&dense.features, &feats) < 1e-9);
        seen += valid.iter().filter(|v| **v).count();
        total += valid.len();

        let past = lift_frame(&frames[1].maps, &frames[1].pose, &rig, &grid).unwrap();
        let (feats, valid) = naive_lift(&frames[1].maps, &rig, &grid, &frames[1].pose);
        assert_eq!(past.valid, valid);
        assert!(max_abs_diff(&past.features, &feats) < 1e-9);
    }
    assert!(seen > total / 10, "fixtures should be mostly visible: {seen} of {total}");
}

#[test]
fn sparse_tokens_match_naive_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let views = rng.random_range(2..=5);
        let rig = random_rig(&mut rng, views);
        let c = rng.random_range(1..=16);
        let history = rng.random_range(0..=2);
        let cfg = small_cfg(&mut rng, c, history);
        let params = LiftParams::random(&cfg, &mut rng);
        let frames = random_frames(&mut rng, &rig, history + 1, c);
        let m = rng.random_range(1..=cfg.grid.len());

        let gates = compute_gate_field(&frames, &rig, &cfg.grid, &params).unwrap();
        let (g, valid) = naive_gates(&frames, &rig, &cfg.grid, &params);
        assert_eq!(gates.valid, valid);
        assert!(max_abs_diff(&gates.values, &g) < 1e-12);

        let sparse = build_sparse_tokens(&frames, &rig, &cfg.grid, &params, m).unwrap();
        let (idx, feats) = naive_sparse(&frames, &rig, &params, &cfg.grid, &gates.values, &gates.valid, m);
        assert_eq!(sparse.indices, idx);
        assert!(max_abs_diff(&sparse.features, &feats) < 1e-9);
    }
}

#[test]
fn fresh_parameters_are_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rig = random_rig(&mut rng, 3);
    let cfg = small_cfg(&mut rng, 8, 2);
    let params = LiftParams::init(&cfg, &mut rng);
    for i in 0..cfg.grid.len() {
        let pe = voxplan::volume::pos_embed(cfg.grid.center(i), &cfg.grid, &params).unwrap();
        assert!(pe.iter().all(|v| *v == 0.0));
    }
    assert!(params.vacant.iter().all(|v| *v == 0.0));
    let x: Vec<f64> = (0..3 * 8).map(|_| rng.random_range(-5.0..5.0)).collect();
    assert_eq!(params.temporal_fc.forward(&x), x[..8].to_vec());

    // All-zero gates leave only the position embedding, here made random.
    let mut with_pe = params.clone();
    with_pe.posemb = LiftParams::random(&cfg, &mut rng).posemb;
    let frames = random_frames(&mut rng, &rig, 3, 8);
    let n = cfg.grid.len();
    let closed = GateField::from_values(cfg.grid.clone(), vec![0.0; n], vec![true; n]).unwrap();
    let s = build_sparse_from_gates(&frames, &rig, &with_pe, &closed, n).unwrap();
    for (i, &v) in s.indices.iter().enumerate() {
        let pe = voxplan::volume::pos_embed(cfg.grid.center(v), &cfg.grid, &with_pe).unwrap();
        assert_eq!(s.feature(i), &pe[..]);
    }
}

#[test]
fn open_gates_over_the_full_grid_reproduce_dense_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let rig = random_rig(&mut rng, 4);
        let c = rng.random_range(1..=16);
        let cfg = small_cfg(&mut rng, c, 1);
        let params = LiftParams::init(&cfg, &mut rng);
        let frames = random_frames(&mut rng, &rig, 2, c);
        let dense = lift_dense(&frames[0].maps, &rig, &cfg.grid).unwrap();
        let n = cfg.grid.len();
        let open = GateField::from_values(cfg.grid.clone(), vec![1.0; n], dense.valid.clone()).unwrap();
        let s = build_sparse_from_gates(&frames, &rig, &params, &open, n).unwrap();
        assert_eq!(s.indices, (0..n).collect::<Vec<_>>());
        for i in (0..n).filter(|&i| dense.valid[i]) {
            assert!(max_abs_diff(s.feature(i), dense.feature(i)) < 1e-12);
        }
    }
}

fn gate_field() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, usize)> {
    (1usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![Just(0.25), Just(0.5), Just(1.0), 0.0..=1.0f64], n),
            prop::collection::vec(prop::bool::weighted(0.8), n),
            1..=n,
        )
    })
}

proptest! {
    #[test]
    fn top_m_matches_full_sort((values, valid, m) in gate_field()) {
        let grid = voxplan::volume::VolumeGrid::new([0.0; 3], [values.len() as f64, 1.0, 1.0], [1.0; 3]).unwrap();
        let gates = GateField::from_values(grid, values.clone(), valid.clone()).unwrap();
        prop_assert_eq!(select_top_m(&gates, m).unwrap(), oracle_top_m(&values, &valid, m));
    }
}
