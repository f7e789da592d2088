use std::path::{Path, PathBuf};

use ccgan_autograd::{Tape, Tensor};
use ccgan_core::checkpoint::Checkpoint;
use ccgan_core::config::{Mode, RunConfig};
use ccgan_core::data::{load_idx, UnpairedPools};
use ccgan_core::losses::LossBundle;
use ccgan_core::models::{Embedder, ModelBundle, Net};
use ccgan_core::optim::{Optimizer, Sgd};
use ccgan_core::params::{Initializer, ParamSet};
use ccgan_core::trainer::{
    bundle_from_checkpoint, load_bundle, make_pools, read_loss_log, sample_grid, train_loop,
    train_step, Trainer,
};
use ccgan_core::Error;

fn mnist(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist").join(file)
}

/// Narrow networks on a few hundred real digits.
fn small_run(mode: Mode, out: &Path) -> RunConfig {
    let mut run = RunConfig::default();
    run.output_dir = out.to_path_buf();
    run.arch.gen_base = 4;
    run.arch.res_blocks = 1;
    run.arch.disc_base = 4;
    run.train.mode = mode;
    run.train.batch_size = 4;
    run.train.iterations = 10;
    run.train.checkpoint_interval = 5;
    run
}

fn pools(run: &RunConfig) -> UnpairedPools {
    let set = load_idx(&mnist("train-images-idx3-ubyte"), &mnist("train-labels-idx1-ubyte"))
        .unwrap()
        .take(200)
        .unwrap();
    make_pools(run, &set).unwrap()
}

fn embedder(run: &RunConfig) -> Embedder<f32> {
    Embedder::new(&run.arch, &mut Initializer::new(99))
}

fn snapshot(bundle: &ModelBundle<f32>) -> Vec<ParamSet<f32>> {
    Net::ALL.iter().map(|&n| bundle.params(n).clone()).collect()
}

fn sgd(lrs: [f32; 4]) -> Vec<Box<dyn Optimizer>> {
    lrs.iter().map(|&lr| Box::new(Sgd { lr }) as Box<dyn Optimizer>).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = small_run(Mode::Attribute, dir.path());
    run.train.learning_rate = 0.0;
    let pools = pools(&run);
    let mut t = Trainer::new(run, &pools.x.labels, None).unwrap();
    let before = snapshot(&t.bundle);
    t.step(&pools).unwrap();
    assert_eq!(snapshot(&t.bundle), before);
}

#[test]
fn first_step_scores_in_open_unit_interval_and_losses_finite() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let mut t = Trainer::new(run, &pools.x.labels, None).unwrap();
    let l = t.step(&pools).unwrap();
    for s in [l.rho_r, l.rho_f, l.s_r, l.s_f, l.s_w] {
        assert!(s > 0.0 && s < 1.0, "{l:?}");
    }
    assert!(l.values().iter().all(|v| v.is_finite()));
    assert!(l.first_non_finite().is_none());
    assert_eq!(l.l_id, 0.0);
}

#[test]
fn each_update_touches_only_its_network() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    for (k, focus) in Net::ALL.iter().enumerate() {
        let mut t = Trainer::new(run.clone(), &pools.x.labels, None).unwrap();
        let batch = t.next_batch(&pools).unwrap();
        let mut lrs = [0.0; 4];
        lrs[k] = 0.05;
        let mut opts = sgd(lrs);
        let before = snapshot(&t.bundle);
        train_step(&mut t.bundle, &mut opts, &batch, &run.train, 1).unwrap();
        let after = snapshot(&t.bundle);
        for (j, net) in Net::ALL.iter().enumerate() {
            if j == k {
                assert_ne!(after[j], before[j], "{} did not move", net.name());
            } else {
                assert_eq!(after[j], before[j], "{} moved during {} update", net.name(), focus.name());
            }
        }
    }
}

#[test]
fn all_four_networks_move_under_the_default_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let mut t = Trainer::new(run, &pools.x.labels, None).unwrap();
    let before = snapshot(&t.bundle);
    t.step(&pools).unwrap();
    let after = snapshot(&t.bundle);
    for (j, net) in Net::ALL.iter().enumerate() {
        assert_ne!(after[j], before[j], "{}", net.name());
    }
}

#[test]
fn identity_mode_keeps_the_embedder_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Identity, dir.path());
    let pools = pools(&run);
    let e = embedder(&run);
    let frozen = e.params.clone();
    let mut t = Trainer::new(run, &pools.x.labels, Some(e)).unwrap();
    assert_eq!(t.bundle.arch.cond_dim, 32);
    let mut saw_identity_loss = false;
    for _ in 0..3 {
        let l = t.step(&pools).unwrap();
        saw_identity_loss |= l.l_id > 0.0;
    }
    assert!(saw_identity_loss);
    assert_eq!(t.bundle.embedder.as_ref().unwrap().params, frozen);
}

#[test]
fn identity_mode_without_embedder_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Identity, dir.path());
    let pools = pools(&run);
    assert!(matches!(
        Trainer::new(run, &pools.x.labels, None),
        Err(Error::Config(_))
    ));
}

fn ten_steps(run: &RunConfig, pools: &UnpairedPools) -> Vec<LossBundle> {
    let mut t = Trainer::new(run.clone(), &pools.x.labels, None).unwrap();
    (0..10).map(|_| t.step(pools).unwrap()).collect()
}

#[test]
fn same_seed_same_ten_step_losses() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let a = ten_steps(&run, &pools);
    let b = ten_steps(&run, &pools);
    assert_eq!(a, b);
    let mut other = run.clone();
    other.train.seed += 1;
    assert_ne!(ten_steps(&other, &pools), a);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let whole = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, whole.path());
    let pools = pools(&run);
    let full = train_loop(&run, &pools, None, None, whole.path(), |_, _| {}).unwrap();

    let mut first = small_run(Mode::Attribute, split.path());
    first.train.iterations = 5;
    let half = train_loop(&first, &pools, None, None, split.path(), |_, _| {}).unwrap();
    assert_eq!(half.trainer.iteration, 5);
    let ck = Checkpoint::load(&half.checkpoint_path).unwrap();
    let second = small_run(Mode::Attribute, split.path());
    let rest = train_loop(&second, &pools, None, Some(&ck), split.path(), |_, _| {}).unwrap();

    assert_eq!(rest.history, full.history[5..]);
    assert_eq!(
        std::fs::read(&full.log_path).unwrap(),
        std::fs::read(&rest.log_path).unwrap()
    );
    assert_eq!(snapshot(&rest.trainer.bundle), snapshot(&full.trainer.bundle));
}

#[test]
fn resume_with_a_different_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = small_run(Mode::Attribute, dir.path());
    run.train.iterations = 2;
    let pools = pools(&run);
    let out = train_loop(&run, &pools, None, None, dir.path(), |_, _| {}).unwrap();
    let ck = Checkpoint::load(&out.checkpoint_path).unwrap();
    run.train.seed += 1;
    assert!(matches!(
        train_loop(&run, &pools, None, Some(&ck), dir.path(), |_, _| {}),
        Err(Error::Config(_))
    ));
}

#[test]
fn single_iteration_loop_equals_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = small_run(Mode::Attribute, dir.path());
    run.train.iterations = 1;
    let pools = pools(&run);
    let out = train_loop(&run, &pools, None, None, dir.path(), |_, _| {}).unwrap();
    let mut t = Trainer::new(run, &pools.x.labels, None).unwrap();
    let l = t.step(&pools).unwrap();
    assert_eq!(out.history, vec![l]);
    assert_eq!(snapshot(&out.trainer.bundle), snapshot(&t.bundle));
}

#[test]
fn loss_log_has_header_and_one_parseable_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let out = train_loop(&run, &pools, None, None, dir.path(), |_, _| {}).unwrap();
    let text = std::fs::read_to_string(&out.log_path).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().next().unwrap().starts_with("iteration\t"));
    let rows = read_loss_log(&out.log_path).unwrap();
    assert_eq!(rows.len(), 10);
    for (i, (it, l)) in rows.iter().enumerate() {
        assert_eq!(*it, i as u64 + 1);
        assert_eq!(l, &out.history[i]);
    }
    assert!(dir.path().join("samples_000005.pgm").exists());
    assert!(dir.path().join("samples_000010.pgm").exists());
}

#[test]
fn identity_mode_sample_grid_uses_exemplar_columns() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Identity, dir.path());
    let pools = pools(&run);
    let e = embedder(&run);
    let out = train_loop(&run, &pools, Some(e), None, dir.path(), |_, _| {}).unwrap();
    let (grid, cols) = sample_grid(&out.trainer.bundle, &pools, out.trainer.source.as_ref(), 4).unwrap();
    assert_eq!(cols, 5);
    assert_eq!(grid.shape(), &[20, 1, 28, 28]);
    assert!(dir.path().join("samples_000005.pgm").exists());
}

#[test]
fn non_finite_parameter_aborts_naming_the_term() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let mut t = Trainer::new(run, &pools.x.labels, None).unwrap();
    let w = t.bundle.params_mut(Net::DY).tensors_mut().next().unwrap();
    w.data_mut()[0] = f32::INFINITY;
    match t.step(&pools) {
        Err(Error::NonFiniteLoss { term, iteration, .. }) => {
            assert_eq!(term, "L_DY");
            assert_eq!(iteration, 1);
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

fn probe_outputs(bundle: &ModelBundle<f32>, pools: &UnpairedPools) -> Vec<Tensor<f32>> {
    let idx = [0, 1, 2];
    let x = pools.x.gather(&idx).unwrap();
    let y = pools.y.gather(&idx).unwrap();
    let mut z = Tensor::<f32>::zeros(&[3, bundle.arch.cond_dim]);
    for i in 0..3 {
        z.data_mut()[i * bundle.arch.cond_dim + i] = 1.0;
    }
    let tape = Tape::new();
    let p = bundle.d_y.params.bind(&tape, false);
    let rho = bundle.d_y.forward(&p, tape.constant(y.clone()), None).unwrap().to_tensor();
    vec![
        bundle.generate(&y, &z).unwrap(),
        bundle.degrade(&x).unwrap(),
        bundle.score_x(&x, &z).unwrap(),
        rho,
    ]
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = small_run(Mode::Attribute, dir.path());
    run.train.iterations = 3;
    let pools = pools(&run);
    let out = train_loop(&run, &pools, None, None, dir.path(), |_, _| {}).unwrap();

    let bytes = std::fs::read(&out.checkpoint_path).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ck.to_bytes(), bytes);
    let again = dir.path().join("again.ccgn");
    ck.save(&again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), bytes);

    let (loaded_run, bundle) = bundle_from_checkpoint(&ck).unwrap();
    assert_eq!(loaded_run.train, run.train);
    assert_eq!(snapshot(&bundle), snapshot(&out.trainer.bundle));
    assert_eq!(
        probe_outputs(&bundle, &pools),
        probe_outputs(&out.trainer.bundle, &pools)
    );
}

#[test]
fn damaged_checkpoints_give_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let t = Trainer::new(run, &pools.x.labels, None).unwrap();
    let bytes = t.to_checkpoint().to_bytes();

    let truncated = &bytes[..bytes.len() - 7];
    assert!(matches!(Checkpoint::from_bytes(truncated), Err(Error::CheckpointPayload(_))));

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad_magic), Err(Error::CheckpointHeader(_))));

    let mut bad_version = bytes.clone();
    bad_version[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        Checkpoint::from_bytes(&bad_version),
        Err(Error::CheckpointVersion { found: 2, expected: 1 })
    ));

    let path = dir.path().join("cut.ccgn");
    std::fs::write(&path, truncated).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::CheckpointPayload(_))));
}

#[test]
fn attribute_checkpoint_into_identity_bundle_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let t = Trainer::new(run.clone(), &pools.x.labels, None).unwrap();
    let ck = t.to_checkpoint();
    let mut identity = ModelBundle::<f32>::init(run.train.seed, Mode::Identity, &run.arch).unwrap();
    assert!(matches!(load_bundle(&ck, &mut identity), Err(Error::Config(_))));
}

#[test]
fn resumed_trainer_restores_optimizer_and_generator_state() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(Mode::Attribute, dir.path());
    let pools = pools(&run);
    let mut a = Trainer::new(run, &pools.x.labels, None).unwrap();
    a.step(&pools).unwrap();
    a.step(&pools).unwrap();
    let ck = Checkpoint::from_bytes(&a.to_checkpoint().to_bytes()).unwrap();
    let mut b = Trainer::from_checkpoint(&ck, &pools.x.labels).unwrap();
    assert_eq!(b.iteration, 2);
    assert_eq!(a.step(&pools).unwrap(), b.step(&pools).unwrap());
    assert_eq!(snapshot(&a.bundle), snapshot(&b.bundle));
}
