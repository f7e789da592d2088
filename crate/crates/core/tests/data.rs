use std::path::{Path, PathBuf};

use ccgan_autograd::gradcheck::random_tensor;
use ccgan_autograd::{Tape, Tensor};
use ccgan_core::condition::{
    BinaryAttributes, ConditionKind, ConditionRegistry, ConditionSource, ConditionVector,
    OneHotLabels, SourceContext,
};
use ccgan_core::config::{ArchConfig, Mode};
use ccgan_core::data::{
    byte_to_unit, load_face_dir, load_idx, make_low_res, sample_batch, Domain, IdxError,
    LabeledImageSet, Labels, UnpairedPools, FACE_ATTRIBUTES, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
use ccgan_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mnist(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist").join(file)
}

fn mnist_train() -> LabeledImageSet {
    load_idx(&mnist("train-images-idx3-ubyte"), &mnist("train-labels-idx1-ubyte")).unwrap()
}

fn idx_images(n: u32, side: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [IDX_IMAGES_MAGIC, n, side, side] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (PathBuf, PathBuf) {
    let (i, l) = (dir.join("images"), dir.join("labels"));
    std::fs::write(&i, images).unwrap();
    std::fs::write(&l, labels).unwrap();
    (i, l)
}

fn set_from(images: Tensor<f32>) -> LabeledImageSet {
    let n = images.shape()[0];
    let labels = Labels::Classes {
        values: (0..n).map(|i| i % 10).collect(),
        num_classes: 10,
    };
    LabeledImageSet::new(images, labels, Domain::HighRes).unwrap()
}

#[test]
fn bundled_mnist_files_load() {
    let train = mnist_train();
    let test = load_idx(&mnist("t10k-images-idx3-ubyte"), &mnist("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!(train.len(), 8000);
    assert_eq!(test.len(), 2000);
    assert_eq!(train.image_shape(), (1, 28, 28));
    assert!(train.images.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let Labels::Classes { values, num_classes } = &train.labels else {
        panic!("expected classes")
    };
    assert_eq!(*num_classes, 10);
    assert!(values.iter().all(|&v| v < 10));
    for class in 0..10 {
        assert!(values.iter().filter(|&&v| v == class).count() > 500);
    }
}

#[test]
fn idx_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let pixels = [0u8, 255, 128, 64];
    let good = idx_images(1, 2, &pixels);

    let (i, l) = write_pair(dir.path(), &good, &idx_labels(&[3]));
    let set = load_idx(&i, &l).unwrap();
    assert_eq!(set.images.data()[0], -1.0);
    assert_eq!(set.images.data()[1], 1.0);
    assert_eq!(set.labels.class_of(0), Some(3));

    let mut wrong = good.clone();
    wrong[3] = 0x01;
    let (i, l) = write_pair(dir.path(), &wrong, &idx_labels(&[3]));
    match load_idx(&i, &l) {
        Err(Error::Idx { source: IdxError::BadMagic { expected: 2051, .. }, path }) => {
            assert_eq!(path, i)
        }
        other => panic!("{other:?}"),
    }
    let (i, l) = write_pair(dir.path(), &good, &idx_images(1, 2, &pixels));
    assert!(matches!(
        load_idx(&i, &l),
        Err(Error::Idx { source: IdxError::BadMagic { expected: 2049, .. }, .. })
    ));
    let (i, l) = write_pair(dir.path(), &good[..good.len() - 1], &idx_labels(&[3]));
    assert!(matches!(
        load_idx(&i, &l),
        Err(Error::Idx { source: IdxError::Truncated { .. }, .. })
    ));
    let (i, l) = write_pair(dir.path(), &good, &idx_labels(&[3, 4]));
    assert!(matches!(
        load_idx(&i, &l),
        Err(Error::Idx { source: IdxError::CountMismatch { images: 1, labels: 2 }, .. })
    ));
    assert!(matches!(
        load_idx(&dir.path().join("missing"), &l),
        Err(Error::Io { .. })
    ));
}

#[test]
fn byte_scaling_endpoints() {
    assert_eq!(byte_to_unit(0), -1.0);
    assert_eq!(byte_to_unit(255), 1.0);
    assert!((byte_to_unit(128) - 0.003_921_6).abs() < 1e-6);
}

/// Pooling then half-pixel bilinear upsampling, written out per pixel.
fn low_res_oracle(img: &[f64], side: usize, factor: usize) -> Vec<f64> {
    let small = side / factor;
    let mut pooled = vec![0.0; small * small];
    for y in 0..side {
        for x in 0..side {
            pooled[(y / factor) * small + x / factor] += img[y * side + x];
        }
    }
    pooled.iter_mut().for_each(|v| *v /= (factor * factor) as f64);
    let coord = |o: usize| {
        let s = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(small - 1);
        (i0, (i0 + 1).min(small - 1), s - i0 as f64)
    };
    let mut out = vec![0.0; side * side];
    for y in 0..side {
        let (y0, y1, fy) = coord(y);
        for x in 0..side {
            let (x0, x1, fx) = coord(x);
            let at = |r: usize, c: usize| pooled[r * small + c];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out[y * side + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

#[test]
fn factor_four_matches_pool_then_upsample() {
    let set = mnist_train().take(6).unwrap();
    let low = make_low_res(&set, 4).unwrap();
    assert_eq!(low.domain, Domain::LowRes);
    assert_eq!(low.images.shape(), set.images.shape());
    for i in 0..set.len() {
        let img: Vec<f64> = set.gather(&[i]).unwrap().data().iter().map(|&v| f64::from(v)).collect();
        let expected = low_res_oracle(&img, 28, 4);
        let got = low.gather(&[i]).unwrap();
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((f64::from(*g) - e).abs() < 1e-5, "{g} vs {e}");
        }
    }
}

#[test]
fn low_res_depends_only_on_block_means() {
    // swapping pixels inside each 4x4 block keeps every block mean
    let set = mnist_train().take(3).unwrap();
    let mut shuffled = set.images.clone();
    for p in 0..3 {
        let plane = &mut shuffled.data_mut()[p * 784..(p + 1) * 784];
        for by in 0..7 {
            for bx in 0..7 {
                let a = (by * 4) * 28 + bx * 4;
                let b = (by * 4 + 3) * 28 + bx * 4 + 2;
                plane.swap(a, b);
            }
        }
    }
    let other = LabeledImageSet::new(shuffled, set.labels.clone(), Domain::HighRes).unwrap();
    let a = make_low_res(&set, 4).unwrap();
    let b = make_low_res(&other, 4).unwrap();
    assert!(a.images.max_abs_diff(&b.images) < 1e-6);
    assert!(other.images.max_abs_diff(&set.images) > 0.1);
}

#[test]
fn constant_images_are_fixed_points() {
    let set = set_from(Tensor::full(&[2, 1, 28, 28], 0.375));
    let low = make_low_res(&set, 4).unwrap();
    assert!(low.images.data().iter().all(|&v| (v - 0.375).abs() < 1e-6));
}

#[test]
fn degrading_twice_differs_from_once() {
    let set = mnist_train().take(4).unwrap();
    let once = make_low_res(&set, 4).unwrap();
    let twice = make_low_res(&once, 4).unwrap();
    assert!(once.images.max_abs_diff(&twice.images) > 1e-3);
}

#[test]
fn factor_must_divide_canvas() {
    let set = mnist_train().take(1).unwrap();
    assert!(matches!(make_low_res(&set, 8), Err(Error::Config(_))));
    assert!(matches!(make_low_res(&set, 0), Err(Error::Config(_))));
}

fn total_variation(img: &[f32], side: usize) -> f64 {
    let mut tv = 0.0;
    for y in 0..side {
        for x in 0..side {
            let v = f64::from(img[y * side + x]);
            if x + 1 < side {
                tv += (f64::from(img[y * side + x + 1]) - v).abs();
            }
            if y + 1 < side {
                tv += (f64::from(img[(y + 1) * side + x]) - v).abs();
            }
        }
    }
    tv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn average_pooling_preserves_the_mean(seed in any::<u64>(), factor in prop::sample::select(vec![1usize, 2, 4, 7])) {
        let x = random_tensor(&[2, 1, 28, 28], seed);
        let tape = Tape::new();
        let pooled = tape.constant(x.clone()).avg_pool2d(factor).unwrap().to_tensor();
        let mean = |t: &Tensor<f64>| t.sum_f64() / t.numel() as f64;
        prop_assert!((mean(&pooled) - mean(&x)).abs() < 1e-6);
    }

    #[test]
    fn low_res_never_adds_variation(seed in any::<u64>(), factor in prop::sample::select(vec![2usize, 4, 7])) {
        let set = set_from(random_tensor(&[1, 1, 28, 28], seed).cast());
        let low = make_low_res(&set, factor).unwrap();
        let before = total_variation(set.images.data(), 28);
        let after = total_variation(low.images.data(), 28);
        prop_assert!(after <= before + 1e-6, "{after} > {before}");
    }

    #[test]
    fn emitted_pixels_stay_in_range(seed in any::<u64>()) {
        let set = set_from(random_tensor(&[1, 1, 28, 28], seed).cast());
        let low = make_low_res(&set, 4).unwrap();
        prop_assert!(low.images.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

fn balanced_pools() -> UnpairedPools {
    let n = 2000;
    let images: Tensor<f32> = random_tensor(&[n, 1, 8, 8], 3).cast();
    let set = set_from(images);
    UnpairedPools::split(&set, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
}

#[test]
fn pools_are_disjoint_and_degraded() {
    let set = mnist_train().take(200).unwrap();
    let pools = UnpairedPools::split(&set, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(pools.x.domain, Domain::HighRes);
    assert_eq!(pools.y.domain, Domain::LowRes);
    assert_eq!(pools.x.len() + pools.y.len(), 200);
    let xs: std::collections::HashSet<_> = pools.x.origin.iter().collect();
    assert!(pools.y.origin.iter().all(|i| !xs.contains(i)));
}

#[test]
fn batches_are_reproducible_and_mismatched() {
    let pools = balanced_pools();
    let source = OneHotLabels { num_classes: 10 };
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..20)
            .map(|_| sample_batch(&pools, 16, &source, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    let (a, b) = (draw(9), draw(9));
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.x_indices, q.x_indices);
        assert_eq!(p.y_indices, q.y_indices);
        assert_eq!(p.z_hat, q.z_hat);
    }
    assert_ne!(a[0].x_indices, draw(10)[0].x_indices);
    for batch in &a {
        for (z, zh) in batch.z.iter().zip(&batch.z_hat) {
            assert_ne!(z, zh);
            assert_eq!(z.values().iter().sum::<f32>(), 1.0);
        }
        let mut seen = batch.x_indices.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 16);
    }
}

#[test]
fn drawn_labels_are_uniform_within_three_sigma() {
    let pools = balanced_pools();
    let Labels::Classes { values, .. } = &pools.x.labels else { unreachable!() };
    let source = OneHotLabels { num_classes: 10 };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 10];
    let draws = 10_000;
    for _ in 0..draws / 16 + 1 {
        for i in sample_batch(&pools, 16, &source, &mut rng).unwrap().x_indices {
            counts[values[i]] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    for (class, &c) in counts.iter().enumerate() {
        let p = values.iter().filter(|&&v| v == class).count() as f64 / values.len() as f64;
        let mean = total as f64 * p;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - mean).abs() < 3.0 * sigma, "class {class}: {c} vs {mean}");
    }
}

#[test]
fn oversized_batch_is_rejected() {
    let pools = balanced_pools();
    let source = OneHotLabels { num_classes: 10 };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!(sample_batch(&pools, pools.x.len() + 1, &source, &mut rng).is_err());
}

#[test]
fn label_three_is_one_hot() {
    let z = ConditionVector::one_hot(3, 10).unwrap();
    assert_eq!(z.values(), [0., 0., 0., 1., 0., 0., 0., 0., 0., 0.]);
    assert_eq!(z.kind(), ConditionKind::OneHot);
}

#[test]
fn identity_conditions_need_an_embedder() {
    let arch = ArchConfig::mnist();
    let labels = Labels::Classes { values: vec![0, 1], num_classes: 10 };
    let ctx = SourceContext { arch: &arch, embedder: None };
    let made = ConditionRegistry::default().for_mode(Mode::Identity, &labels, &ctx);
    assert!(matches!(made, Err(Error::Config(_))));
}

#[test]
fn face_directory_fixture_loads_eighteen_attributes() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::new();
    for k in 0..3u8 {
        let name = format!("face{k}.png");
        let img = image::RgbImage::from_fn(20, 16, |x, y| image::Rgb([x as u8 * 10, y as u8 * 12, k * 80]));
        img.save(dir.path().join(&name)).unwrap();
        let flags: Vec<String> = (0..FACE_ATTRIBUTES).map(|j| ((j + k as usize) % 2).to_string()).collect();
        table.push_str(&format!("{name} {}\n", flags.join(" ")));
    }
    let table_path = dir.path().join("attributes.txt");
    std::fs::write(&table_path, table).unwrap();

    let set = load_face_dir(dir.path(), &table_path, 16).unwrap();
    assert_eq!(set.images.shape(), [3, 3, 16, 16]);
    assert!(set.images.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let source = BinaryAttributes { dim: FACE_ATTRIBUTES };
    let z = source.conditions(&set, &[0, 1, 2]).unwrap();
    assert!(z.iter().all(|c| c.dim() == 18 && c.kind() == ConditionKind::Binary));
    assert_ne!(z[0], z[1]);

    std::fs::write(&table_path, "face0.png 1 0 1\n").unwrap();
    assert!(matches!(load_face_dir(dir.path(), &table_path, 16), Err(Error::Data { .. })));
}
