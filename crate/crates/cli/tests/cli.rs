use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use ccgan_cli::exit;
use ccgan_core::checkpoint::Checkpoint;
use ccgan_core::config::RunConfig;
use ccgan_core::data::load_idx;
use ccgan_core::metrics::EvalReport;
use ccgan_core::trainer::read_loss_log;

fn mnist(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/mnist")
        .join(file)
        .canonicalize()
        .unwrap()
}

fn config_text(iterations: u64) -> String {
    format!(
        "[run]\nseed = 3\noutput_dir = run\n\n[data]\n\
         train_images = {}\ntrain_labels = {}\ntest_images = {}\ntest_labels = {}\n\n\
         [arch]\ngen_base = 4\nres_blocks = 1\ndisc_base = 4\n\n\
         [train]\niterations = {iterations}\nbatch_size = 4\ncheckpoint_interval = 2\nlog_interval = 1\n",
        mnist("train-images-idx3-ubyte").display(),
        mnist("train-labels-idx1-ubyte").display(),
        mnist("t10k-images-idx3-ubyte").display(),
        mnist("t10k-labels-idx1-ubyte").display(),
    )
}

fn ccgan(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccgan"))
        .args(args)
        .env("CCGAN_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status, stderr(out));
}

/// Fresh working directory with a 3-iteration config in it.
fn workspace(name: &str, iterations: u64) -> (PathBuf, PathBuf) {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.ini");
    std::fs::write(&cfg, config_text(iterations)).unwrap();
    (dir, cfg)
}

/// A trained checkpoint shared by the generation tests.
fn trained() -> &'static (PathBuf, PathBuf) {
    static FIXTURE: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let (dir, cfg) = workspace("fixture", 3);
        assert_ok(&ccgan(&dir, &["train", "--config", cfg.to_str().unwrap()]));
        (dir.clone(), dir.join("run/checkpoint.ccgn"))
    })
}

/// Pixel bytes of tile `k` of a binary PGM grid with 28x28 tiles.
fn pgm_tile(bytes: &[u8], k: usize) -> Vec<u8> {
    let text = String::from_utf8_lossy(&bytes[..20]).into_owned();
    let mut fields = text.split_whitespace();
    assert_eq!(fields.next(), Some("P5"));
    let gw: usize = fields.next().unwrap().parse().unwrap();
    let header = format!("P5\n{gw} ").len()
        + fields.next().unwrap().len()
        + "\n255\n".len();
    let pixels = &bytes[header..];
    let cols = (gw + 1) / 29;
    let (r0, c0) = ((k / cols) * 29, (k % cols) * 29);
    (0..28)
        .flat_map(|i| pixels[(r0 + i) * gw + c0..(r0 + i) * gw + c0 + 28].to_vec())
        .collect()
}

fn pgm_size(bytes: &[u8]) -> (usize, usize) {
    let text = String::from_utf8_lossy(&bytes[..20]).into_owned();
    let mut f = text.split_whitespace().skip(1);
    (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
}

#[test]
fn unknown_config_key_is_a_config_error_with_line_number() {
    let (dir, cfg) = workspace("unknown_key", 1);
    std::fs::write(&cfg, "[run]\nseed = 1\nflavour = mint\n").unwrap();
    let out = ccgan(&dir, &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), i32::from(exit::CONFIG));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_dataset_path_names_the_key() {
    let (dir, _) = workspace("missing_data", 1);
    let out = ccgan(&dir, &["train", "--set", "train.iterations=1"]);
    assert_eq!(code(&out), i32::from(exit::CONFIG));
    assert!(stderr(&out).contains("data.train_images"), "{}", stderr(&out));
}

#[test]
fn training_writes_resolved_config_log_checkpoint_and_grids_under_the_output_root() {
    let (dir, ckpt) = trained();
    let run = dir.join("run");
    assert!(ckpt.exists());
    let resolved = std::fs::read_to_string(run.join("config.ini")).unwrap();
    let parsed = RunConfig::parse(&resolved).unwrap();
    assert_eq!(parsed.train.iterations, 3);
    assert_eq!(parsed.output_dir, run);
    assert_eq!(read_loss_log(&run.join("losses.tsv")).unwrap().len(), 3);
    assert!(run.join("samples_000002.pgm").exists());
    assert!(run.join("samples_000003.pgm").exists());
}

#[test]
fn identical_configs_give_identical_loss_logs() {
    let (a, cfg_a) = workspace("determinism_a", 3);
    let (b, cfg_b) = workspace("determinism_b", 3);
    assert_ok(&ccgan(&a, &["train", "--config", cfg_a.to_str().unwrap()]));
    assert_ok(&ccgan(&b, &["train", "--config", cfg_b.to_str().unwrap()]));
    let log_a = std::fs::read(a.join("run/losses.tsv")).unwrap();
    let log_b = std::fs::read(b.join("run/losses.tsv")).unwrap();
    assert_eq!(log_a, log_b);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let (whole, cfg) = workspace("resume_whole", 4);
    assert_ok(&ccgan(&whole, &["train", "--config", cfg.to_str().unwrap()]));
    let (split, cfg) = workspace("resume_split", 4);
    let cfg = cfg.to_str().unwrap();
    assert_ok(&ccgan(&split, &["train", "--config", cfg, "--set", "train.iterations=2"]));
    assert_ok(&ccgan(&split, &["train", "--config", cfg, "--resume"]));
    assert_eq!(
        std::fs::read(whole.join("run/losses.tsv")).unwrap(),
        std::fs::read(split.join("run/losses.tsv")).unwrap()
    );
    // the stored config differs only in the output directory
    let a = Checkpoint::load(&whole.join("run/checkpoint.ccgn")).unwrap();
    let b = Checkpoint::load(&split.join("run/checkpoint.ccgn")).unwrap();
    assert_eq!(a.tensors, b.tensors);
    for key in ["iteration", "rng_word_pos"] {
        assert_eq!(a.state_value(key), b.state_value(key));
    }
}

#[test]
fn exploding_learning_rate_exits_with_the_numeric_code() {
    let (dir, cfg) = workspace("explode", 5);
    let out = ccgan(
        &dir,
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "train.optimizer=sgd",
            "--set",
            "train.learning_rate=1e30",
        ],
    );
    assert_eq!(code(&out), i32::from(exit::NUMERIC), "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"), "{}", stderr(&out));
}

#[test]
fn generate_with_every_label_gives_ten_columns() {
    let (dir, ckpt) = trained();
    let out_file = dir.join("all.pgm");
    let out = ccgan(
        dir,
        &[
            "generate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--inputs",
            "0,1",
            "--conditions",
            "all",
            "--out",
            out_file.to_str().unwrap(),
        ],
    );
    assert_ok(&out);
    let bytes = std::fs::read(&out_file).unwrap();
    assert_eq!(pgm_size(&bytes), (10 * 29 - 1, 2 * 29 - 1));
}

#[test]
fn self_condition_equals_the_inputs_own_label() {
    let (dir, ckpt) = trained();
    let test = load_idx(&mnist("t10k-images-idx3-ubyte"), &mnist("t10k-labels-idx1-ubyte")).unwrap();
    let label = test.labels.class_of(4).unwrap().to_string();
    let out_file = dir.join("self.pgm");
    let conds = format!("self,{label}");
    assert_ok(&ccgan(
        dir,
        &[
            "generate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--inputs",
            "4",
            "--conditions",
            &conds,
            "--out",
            out_file.to_str().unwrap(),
        ],
    ));
    let bytes = std::fs::read(&out_file).unwrap();
    assert_eq!(pgm_tile(&bytes, 0), pgm_tile(&bytes, 1));
}

#[test]
fn generate_rejects_empty_and_mismatched_conditions() {
    let (dir, ckpt) = trained();
    let out_file = dir.join("empty.pgm");
    let base = ["generate", "--checkpoint", ckpt.to_str().unwrap(), "--out", out_file.to_str().unwrap()];
    let out = ccgan(dir, &base);
    assert_eq!(code(&out), i32::from(exit::CONFIG));
    assert!(!out_file.exists());

    let mut wrong_d = base.to_vec();
    wrong_d.extend(["--conditions", "[1 0 0]"]);
    let out = ccgan(dir, &wrong_d);
    assert_eq!(code(&out), i32::from(exit::CONFIG));
    assert!(stderr(&out).contains("d = 3"), "{}", stderr(&out));

    let mut bad_label = base.to_vec();
    bad_label.extend(["--conditions", "10"]);
    assert_eq!(code(&ccgan(dir, &bad_label)), i32::from(exit::CONFIG));
}

#[test]
fn interpolation_endpoints_and_degenerate_paths() {
    let (dir, ckpt) = trained();
    let ck = ckpt.to_str().unwrap();
    let interp = dir.join("interp.pgm");
    let direct = dir.join("direct.pgm");
    assert_ok(&ccgan(
        dir,
        &["interpolate", "--checkpoint", ck, "--input", "2", "--from", "1", "--to", "7", "--steps", "9", "--out", interp.to_str().unwrap()],
    ));
    assert_ok(&ccgan(
        dir,
        &["generate", "--checkpoint", ck, "--inputs", "2", "--conditions", "1,7", "--out", direct.to_str().unwrap()],
    ));
    let (i, d) = (std::fs::read(&interp).unwrap(), std::fs::read(&direct).unwrap());
    assert_eq!(pgm_size(&i), (9 * 29 - 1, 28));
    assert_eq!(pgm_tile(&i, 0), pgm_tile(&d, 0));
    assert_eq!(pgm_tile(&i, 8), pgm_tile(&d, 1));

    let same = dir.join("same.pgm");
    assert_ok(&ccgan(
        dir,
        &["interpolate", "--checkpoint", ck, "--from", "3", "--to", "3", "--steps", "4", "--out", same.to_str().unwrap()],
    ));
    let s = std::fs::read(&same).unwrap();
    for k in 1..4 {
        assert_eq!(pgm_tile(&s, k), pgm_tile(&s, 0));
    }

    let out = ccgan(
        dir,
        &["interpolate", "--checkpoint", ck, "--from", "3", "--to", "4", "--steps", "1", "--out", same.to_str().unwrap()],
    );
    assert_eq!(code(&out), i32::from(exit::CONFIG));
}

#[test]
fn eval_report_is_complete_and_repeatable() {
    let (dir, ckpt) = trained();
    let oracle = dir.join("oracle.ccgn");
    let cfg = dir.join("run.ini");
    assert_ok(&ccgan(
        dir,
        &[
            "pretrain-embedder",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "embedder.epochs=1",
            "--floor",
            "0",
            "--out",
            oracle.to_str().unwrap(),
        ],
    ));
    let args = [
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--oracle",
        oracle.to_str().unwrap(),
        "--limit",
        "40",
    ];
    let first = ccgan(dir, &args);
    assert_ok(&first);
    let second = ccgan(dir, &args);
    assert_eq!(first.stdout, second.stdout);
    let report = EvalReport::parse(&String::from_utf8_lossy(&first.stdout)).unwrap();
    assert_eq!(report.samples, 40);
    assert_eq!(report.per_image_ssim.len(), 40);
    assert!(report.label_fidelity.is_some());
    assert!(report.own_label_fidelity.is_some());
    assert!(report.embedding_l1.is_none());
}

#[test]
fn pretrain_below_the_floor_exits_with_the_numeric_code() {
    let (dir, cfg) = workspace("floor", 1);
    let out = ccgan(
        &dir,
        &["pretrain-embedder", "--config", cfg.to_str().unwrap(), "--set", "embedder.epochs=1", "--floor", "1.01"],
    );
    assert_eq!(code(&out), i32::from(exit::NUMERIC), "{}", stderr(&out));
}

#[test]
fn gradcheck_subset_passes_and_unknown_filter_fails() {
    let (dir, _) = workspace("gradcheck", 1);
    let out = ccgan(&dir, &["gradcheck", "--filter", "relu"]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.contains("relu") && l.ends_with("PASS")), "{text}");
    assert!(!text.contains("FAIL"));
    let out = ccgan(&dir, &["gradcheck", "--filter", "no-such-check"]);
    assert_eq!(code(&out), i32::from(exit::CONFIG));
}

#[test]
fn data_and_io_failures_have_their_own_codes() {
    let (dir, _) = workspace("bad_data", 1);
    let bogus = dir.join("bogus-idx");
    std::fs::write(&bogus, [0u8, 0, 8, 1, 0, 0, 0, 0]).unwrap();
    let labels = mnist("t10k-labels-idx1-ubyte");
    let out = ccgan(
        &dir,
        &["ingest", "--images", bogus.to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--out", "x"],
    );
    assert_eq!(code(&out), i32::from(exit::DATA), "{}", stderr(&out));

    let missing = dir.join("does-not-exist");
    let out = ccgan(
        &dir,
        &["ingest", "--images", missing.to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--out", "x"],
    );
    assert_eq!(code(&out), i32::from(exit::IO), "{}", stderr(&out));

    let (fixture, ckpt) = trained();
    let bytes = std::fs::read(ckpt).unwrap();
    let cut = fixture.join("cut.ccgn");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let out = ccgan(
        &dir,
        &["generate", "--checkpoint", cut.to_str().unwrap(), "--conditions", "1", "--out", "y.pgm"],
    );
    assert_eq!(code(&out), i32::from(exit::DATA), "{}", stderr(&out));
}

#[test]
fn ingest_writes_summary_and_preview() {
    let (dir, _) = workspace("ingest", 1);
    let out = ccgan(
        &dir,
        &[
            "ingest",
            "--images",
            mnist("t10k-images-idx3-ubyte").to_str().unwrap(),
            "--labels",
            mnist("t10k-labels-idx1-ubyte").to_str().unwrap(),
            "--preview",
            "8",
            "--out",
            "ingested",
        ],
    );
    assert_ok(&out);
    let summary = std::fs::read_to_string(dir.join("ingested/summary.txt")).unwrap();
    assert!(summary.contains("count\t2000"), "{summary}");
    assert!(summary.contains("shape\t1x28x28"));
    assert!(summary.contains("pixel_range\t-1 1"));
    let preview = std::fs::read(dir.join("ingested/preview.pgm")).unwrap();
    assert_eq!(pgm_size(&preview), (8 * 29 - 1, 2 * 29 - 1));
}
