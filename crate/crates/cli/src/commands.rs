use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ccgan_autograd::gradcheck::GRADCHECK_TOLERANCE;
use ccgan_autograd::Tensor;
use ccgan_core::checkpoint::Checkpoint;
use ccgan_core::condition::{ConditionRegistry, ConditionVector, SourceContext};
use ccgan_core::config::{ArchConfig, Mode, RunConfig};
use ccgan_core::data::{load_any, make_low_res, LabeledImageSet, Labels};
use ccgan_core::gradcheck::all_checks;
use ccgan_core::metrics::{emit_grid, evaluate, grid_extension, EvalInputs};
use ccgan_core::models::{Embedder, ModelBundle};
use ccgan_core::trainer::{
    bundle_from_checkpoint, embedder_checkpoint, embedder_from_checkpoint, make_pools,
    pretrain_embedder, train_loop, CHECKPOINT_FILE,
};
use ccgan_core::{Error, Result};

use crate::args::{
    ConfigArgs, DatasetArgs, EvalArgs, GenerateArgs, GradcheckArgs, IngestArgs, InterpolateArgs,
    PretrainArgs, TrainArgs,
};
use crate::conditions::{ConditionSpec, Conditioner};
use crate::output_path;

/// Name of the resolved configuration written into every run directory.
pub const RESOLVED_CONFIG: &str = "config.ini";

/// Config file (or defaults) with command-line overrides applied.
pub fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut run = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{o}` is not KEY=VALUE")))?;
        run.set(key.trim(), value.trim())?;
    }
    run.validate()?;
    Ok(run)
}

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::config(format!("`{key}` is not set")))
}

fn check_shape(set: &LabeledImageSet, arch: &ArchConfig) -> Result<()> {
    let (c, h, w) = set.image_shape();
    if c != arch.image_channels || h != arch.image_size || w != arch.image_size {
        return Err(Error::config(format!(
            "dataset images are {c}x{h}x{w}, arch expects {}x{s}x{s}",
            arch.image_channels,
            s = arch.image_size
        )));
    }
    Ok(())
}

fn load_set(images: &Path, labels: &Path, arch: &ArchConfig) -> Result<LabeledImageSet> {
    let set = load_any(images, labels, arch.image_size)?;
    check_shape(&set, arch)?;
    Ok(set)
}

pub fn train_set(run: &RunConfig) -> Result<LabeledImageSet> {
    let d = &run.data;
    load_set(
        require(&d.train_images, "data.train_images")?,
        require(&d.train_labels, "data.train_labels")?,
        &run.arch,
    )
}

pub fn test_set(run: &RunConfig) -> Result<LabeledImageSet> {
    let d = &run.data;
    load_set(
        require(&d.test_images, "data.test_images")?,
        require(&d.test_labels, "data.test_labels")?,
        &run.arch,
    )
}

/// The dataset named on the command line, else the run's test set.
fn chosen_set(args: &DatasetArgs, run: &RunConfig) -> Result<LabeledImageSet> {
    match (&args.images, &args.labels) {
        (Some(i), Some(l)) => load_set(i, l, &run.arch),
        (None, None) => test_set(run),
        _ => Err(Error::config("--images and --labels go together")),
    }
}

fn load_embedder(path: &Path, arch: &ArchConfig) -> Result<Embedder<f32>> {
    embedder_from_checkpoint(&Checkpoint::load(path)?, arch)
}

fn load_bundle(path: &Path) -> Result<(RunConfig, ModelBundle<f32>)> {
    bundle_from_checkpoint(&Checkpoint::load(path)?)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut run = load_config(&args.config)?;
    let out = output_path(&run.output_dir);
    run.output_dir = out.clone();
    let set = train_set(&run)?;
    let pools = make_pools(&run, &set)?;
    let embedder = match run.train.mode {
        Mode::Identity => Some(load_embedder(
            require(&run.embedder.checkpoint, "embedder.checkpoint")?,
            &run.arch,
        )?),
        Mode::Attribute => None,
    };
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let resolved = out.join(RESOLVED_CONFIG);
    fs::write(&resolved, run.to_text()).map_err(|e| Error::io(&resolved, e))?;

    let resume = if args.resume {
        let path = out.join(CHECKPOINT_FILE);
        if !path.exists() {
            return Err(Error::config(format!(
                "--resume given but {} does not exist",
                path.display()
            )));
        }
        Some(Checkpoint::load(&path)?)
    } else {
        None
    };

    let total = run.train.iterations;
    let every = run.train.log_interval.max(1);
    let started = Instant::now();
    let outcome = train_loop(&run, &pools, embedder, resume.as_ref(), &out, |it, l| {
        if it % every == 0 || it == total {
            eprintln!(
                "iter {it:>6}/{total}  L_DY {:.4}  L_DX {:.4}  L_GXY {:.4}  L_GYX {:.4}  L_c {:.4}  L_id {:.4}  ({:.0}s)",
                l.l_dy,
                l.l_dx,
                l.l_gxy,
                l.l_gyx,
                l.l_c,
                l.l_id,
                started.elapsed().as_secs_f64()
            );
        }
    })?;
    println!(
        "trained to iteration {}; checkpoint {}; loss log {}",
        outcome.trainer.iteration,
        outcome.checkpoint_path.display(),
        outcome.log_path.display()
    );
    Ok(())
}

pub fn pretrain(args: &PretrainArgs) -> Result<()> {
    let run = load_config(&args.config)?;
    let train = train_set(&run)?;
    let held_out = test_set(&run)?;
    let out = output_path(
        &args
            .out
            .clone()
            .unwrap_or_else(|| run.output_dir.join("embedder.ccgn")),
    );
    let (embedder, acc) = pretrain_embedder(
        &train,
        &held_out,
        &run.arch,
        &run.embedder,
        args.floor,
        |epoch, acc| eprintln!("epoch {epoch}: held-out accuracy {acc:.4}"),
    )?;
    embedder_checkpoint(&embedder, &run, acc).save(&out)?;
    println!("held-out accuracy {acc:.4}; embedder written to {}", out.display());
    Ok(())
}

/// `[rows * cols, C, H, W]`: input `r` under each of `conditions[r]`, one
/// generator call per image so every tile matches a direct single-image
/// generation.
pub fn generation_images(
    bundle: &ModelBundle<f32>,
    inputs: &Tensor<f32>,
    conditions: &[Vec<ConditionVector>],
) -> Result<Tensor<f32>> {
    let (n, _, _, _) = inputs.dims4("generate")?;
    if n != conditions.len() {
        return Err(Error::config(format!(
            "{n} inputs but {} condition rows",
            conditions.len()
        )));
    }
    let mut tiles = Vec::new();
    for (r, conds) in conditions.iter().enumerate() {
        let y = inputs.slice_batch(r, r + 1)?;
        for cond in conds {
            let z = ConditionVector::stack(std::slice::from_ref(cond))?;
            tiles.push(bundle.generate(&y, &z)?);
        }
    }
    Ok(Tensor::concat_batch(&tiles)?)
}

/// `z_t = (1 - t) z_a + t z_b` for `steps` evenly spaced `t` in `[0, 1]`.
pub fn interpolation_conditions(a: &[f32], b: &[f32], steps: usize) -> Result<Vec<Vec<f32>>> {
    if steps < 2 {
        return Err(Error::config(format!("interpolation needs steps >= 2, got {steps}")));
    }
    if a.len() != b.len() {
        return Err(Error::config("endpoint conditions differ in length"));
    }
    Ok((0..steps)
        .map(|k| ConditionVector::lerp(a, b, k as f64 / (steps - 1) as f64))
        .collect())
}

/// One generated image per interpolated condition, `[steps, C, H, W]`.
pub fn interpolation_images(
    bundle: &ModelBundle<f32>,
    input: &Tensor<f32>,
    z_a: &ConditionVector,
    z_b: &ConditionVector,
    steps: usize,
) -> Result<Tensor<f32>> {
    let mut tiles = Vec::with_capacity(steps);
    for z in interpolation_conditions(z_a.values(), z_b.values(), steps)? {
        let d = z.len();
        tiles.push(bundle.generate(input, &Tensor::new(&[1, d], z)?)?);
    }
    Ok(Tensor::concat_batch(&tiles)?)
}

fn parse_specs(items: &[String]) -> Result<Vec<ConditionSpec>> {
    items.iter().map(|s| s.parse()).collect()
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let specs = parse_specs(&args.conditions)?;
    if specs.is_empty() {
        return Err(Error::config("no conditions given (--conditions)"));
    }
    if args.inputs.is_empty() {
        return Err(Error::config("no inputs given (--inputs)"));
    }
    let (run, bundle) = load_bundle(&args.checkpoint)?;
    let set = chosen_set(&args.data, &run)?;
    let conditioner = Conditioner::new(&bundle, &set)?;
    let mut rows = Vec::with_capacity(args.inputs.len());
    for &i in &args.inputs {
        let mut conds = Vec::new();
        for spec in &specs {
            conds.extend(conditioner.resolve(spec, i)?);
        }
        rows.push(conds);
    }
    let low = make_low_res(&set.subset(&args.inputs)?, run.data.low_res_factor)?;
    let generated = generation_images(&bundle, &low.images, &rows)?;
    let per_row = rows[0].len();
    let (images, cols) = if args.with_input {
        let mut tiles = Vec::new();
        for r in 0..rows.len() {
            tiles.push(low.images.slice_batch(r, r + 1)?);
            tiles.push(generated.slice_batch(r * per_row, (r + 1) * per_row)?);
        }
        (Tensor::concat_batch(&tiles)?, per_row + 1)
    } else {
        (generated, per_row)
    };
    let out = output_path(&args.out);
    emit_grid(&images, rows.len(), cols, &out)?;
    println!("wrote {}x{cols} grid to {}", rows.len(), out.display());
    Ok(())
}

pub fn interpolate(args: &InterpolateArgs) -> Result<()> {
    if args.steps < 2 {
        return Err(Error::config(format!(
            "interpolation needs --steps >= 2, got {}",
            args.steps
        )));
    }
    let (from, to): (ConditionSpec, ConditionSpec) = (args.from.parse()?, args.to.parse()?);
    let (run, bundle) = load_bundle(&args.checkpoint)?;
    let set = chosen_set(&args.data, &run)?;
    let conditioner = Conditioner::new(&bundle, &set)?;
    let z_a = conditioner.resolve_one(&from, args.input)?;
    let z_b = conditioner.resolve_one(&to, args.input)?;
    let low = make_low_res(&set.subset(&[args.input])?, run.data.low_res_factor)?;
    let images = interpolation_images(&bundle, &low.images, &z_a, &z_b, args.steps)?;
    let out = output_path(&args.out);
    emit_grid(&images, 1, args.steps, &out)?;
    println!("wrote 1x{} grid to {}", args.steps, out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let (run, bundle) = load_bundle(&args.checkpoint)?;
    let mut set = chosen_set(&args.data, &run)?;
    if let Some(n) = args.limit {
        set = set.take(n)?;
    }
    let oracle = match args.oracle.as_ref().or(run.embedder.oracle_checkpoint.as_ref()) {
        Some(p) => Some(load_embedder(p, &run.arch)?),
        None => None,
    };
    let extra = match &args.embedder {
        Some(p) => Some(load_embedder(p, &run.arch)?),
        None => None,
    };
    let embedder = bundle.embedder.as_ref().or(extra.as_ref());
    let source = ConditionRegistry::default().for_mode(
        bundle.mode,
        &set.labels,
        &SourceContext {
            arch: &bundle.arch,
            embedder: bundle.embedder.as_ref(),
        },
    )?;
    let report = evaluate(
        &bundle,
        &set,
        &EvalInputs {
            source: source.as_ref(),
            oracle: oracle.as_ref(),
            embedder,
            low_res_factor: run.data.low_res_factor,
        },
    )?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &args.out {
        let out = output_path(out);
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&out, &text).map_err(|e| Error::io(&out, e))?;
    }
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let checks: Vec<_> = all_checks()
        .into_checks()
        .into_iter()
        .filter(|c| args.filter.as_deref().is_none_or(|f| c.name().contains(f)))
        .collect();
    if checks.is_empty() {
        return Err(Error::config("no gradient check matches the filter"));
    }
    let started = Instant::now();
    let mut failed = 0usize;
    println!("{:<48} {:>12}  result", "check", "max rel err");
    for check in &checks {
        let (shown, ok) = match check.run() {
            Ok(err) => (format!("{err:.3e}"), err < GRADCHECK_TOLERANCE),
            Err(e) => (format!("error: {e}"), false),
        };
        failed += usize::from(!ok);
        println!(
            "{:<48} {:>12}  {}",
            check.name(),
            shown,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{}/{} passed in {:.1}s (tolerance {GRADCHECK_TOLERANCE:e})",
        checks.len() - failed,
        checks.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(Error::Training(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

/// Counts, shapes, label statistics and pixel range of a dataset.
pub fn dataset_summary(set: &LabeledImageSet) -> String {
    use std::fmt::Write as _;
    let (c, h, w) = set.image_shape();
    let mut s = String::new();
    let _ = writeln!(s, "count\t{}", set.len());
    let _ = writeln!(s, "shape\t{c}x{h}x{w}");
    match &set.labels {
        Labels::Classes { values, num_classes } => {
            let mut counts = vec![0usize; *num_classes];
            values.iter().for_each(|&v| counts[v] += 1);
            let list: Vec<String> = counts.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "labels\tclasses {num_classes}");
            let _ = writeln!(s, "class_counts\t{}", list.join(" "));
        }
        Labels::Attributes { values, dim } => {
            let n = values.len().max(1) as f64;
            let freq: Vec<String> = (0..*dim)
                .map(|a| {
                    let on = values.iter().filter(|v| v[a] == 1).count();
                    format!("{:.3}", on as f64 / n)
                })
                .collect();
            let _ = writeln!(s, "labels\tattributes {dim}");
            let _ = writeln!(s, "attribute_frequency\t{}", freq.join(" "));
        }
    }
    let data = set.images.data();
    let min = data.iter().copied().fold(f32::INFINITY, f32::min);
    let max = data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mean = set.images.sum_f64() / data.len().max(1) as f64;
    let _ = writeln!(s, "pixel_range\t{min} {max}");
    let _ = writeln!(s, "pixel_mean\t{mean:.6}");
    s
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let set = load_any(&args.images, &args.labels, args.size)?;
    let low = make_low_res(&set, args.factor)?;
    let out = output_path(&args.out);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let summary = dataset_summary(&set);
    let path = out.join("summary.txt");
    fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    print!("{summary}");

    let n = args.preview.min(set.len());
    if n > 0 {
        let tiles = [set.images.slice_batch(0, n)?, low.images.slice_batch(0, n)?];
        let (c, _, _) = set.image_shape();
        let grid = out.join(format!("preview.{}", grid_extension(c)));
        emit_grid(&Tensor::concat_batch(&tiles)?, 2, n, &grid)?;
        println!("preview (high-res over low-res) written to {}", grid.display());
    }
    Ok(())
}
