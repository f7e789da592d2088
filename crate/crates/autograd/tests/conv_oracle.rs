use ccgan_autograd::gradcheck::random_tensor;
use ccgan_autograd::{Tape, Tensor};

/// Direct nested-loop cross-correlation with zero padding.
fn conv2d_direct(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (n, ci, h, wd) = x.dims4("oracle").unwrap();
    let (co, _, kh, kw) = w.dims4("oracle").unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(&[n, co, oh, ow]);
    let xd = x.data();
    let wdat = w.data();
    for s in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y * stride + i) as isize - pad as isize;
                                let ix = (xx * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += xd[((s * ci + c) * h + iy as usize) * wd + ix as usize]
                                    * wdat[((o * ci + c) * kh + i) * kw + j];
                            }
                        }
                    }
                    out.data_mut()[((s * co + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

/// Transposed convolution as a direct scatter of every input pixel.
fn conv_transpose2d_direct(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (n, ci, h, wd) = x.dims4("oracle").unwrap();
    let (_, co, kh, kw) = w.dims4("oracle").unwrap();
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (wd - 1) * stride + kw - 2 * pad;
    let mut out = Tensor::zeros(&[n, co, oh, ow]);
    for s in 0..n {
        for o in 0..co {
            for p in 0..oh * ow {
                out.data_mut()[(s * co + o) * oh * ow + p] = b.data()[o];
            }
        }
        for c in 0..ci {
            for y in 0..h {
                for xx in 0..wd {
                    let v = x.data()[((s * ci + c) * h + y) * wd + xx];
                    for o in 0..co {
                        for i in 0..kh {
                            for j in 0..kw {
                                let oy = (y * stride + i) as isize - pad as isize;
                                let ox = (xx * stride + j) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out.data_mut()[((s * co + o) * oh + oy as usize) * ow + ox as usize] +=
                                    v * w.data()[((c * co + o) * kh + i) * kw + j];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// (N, Cin, H, W, Cout, kh, kw, stride, pad)
const SHAPE_MATRIX: [(usize, usize, usize, usize, usize, usize, usize, usize, usize); 20] = [
    (2, 3, 8, 8, 4, 3, 3, 1, 0),
    (1, 1, 3, 3, 1, 3, 3, 1, 0),
    (1, 1, 5, 5, 2, 3, 3, 1, 1),
    (2, 2, 7, 7, 3, 3, 3, 2, 1),
    (3, 1, 28, 28, 4, 3, 3, 2, 1),
    (1, 4, 6, 9, 2, 1, 1, 1, 0),
    (2, 3, 9, 6, 5, 5, 5, 1, 2),
    (1, 2, 10, 10, 2, 4, 4, 2, 1),
    (1, 3, 4, 4, 2, 2, 2, 2, 0),
    (2, 1, 11, 13, 3, 3, 5, 1, 2),
    (1, 5, 8, 8, 1, 3, 3, 3, 1),
    (4, 2, 6, 6, 2, 3, 3, 1, 1),
    (1, 1, 2, 2, 1, 3, 3, 1, 1),
    (2, 6, 5, 5, 6, 3, 3, 2, 1),
    (1, 2, 14, 14, 3, 7, 7, 1, 3),
    (1, 3, 12, 7, 2, 3, 2, 2, 0),
    (2, 2, 8, 8, 4, 1, 1, 2, 0),
    (1, 11, 7, 7, 8, 3, 3, 1, 1),
    (1, 42, 7, 7, 4, 3, 3, 2, 1),
    (3, 4, 5, 8, 3, 4, 3, 1, 2),
];

#[test]
fn conv2d_matches_nested_loop_oracle_over_shape_matrix() {
    for (case, &(n, ci, h, w, co, kh, kw, stride, pad)) in SHAPE_MATRIX.iter().enumerate() {
        let seed = case as u64 * 3;
        let x = random_tensor(&[n, ci, h, w], seed);
        let k = random_tensor(&[co, ci, kh, kw], seed + 1);
        let b = random_tensor(&[co], seed + 2);
        let expected = conv2d_direct(&x, &k, &b, stride, pad);
        let tape = Tape::new();
        let got = tape
            .constant(x)
            .conv2d(&tape.constant(k), &tape.constant(b), stride, pad)
            .unwrap()
            .to_tensor();
        assert_eq!(got.shape(), expected.shape(), "case {case}");
        let err = got.max_abs_diff(&expected);
        assert!(err < 1e-10, "case {case}: max abs error {err}");
    }
}

#[test]
fn conv_transpose2d_matches_scatter_oracle() {
    let cases = [
        (2, 3, 3, 3, 2, 4, 4, 2, 1),
        (1, 4, 7, 7, 2, 4, 4, 2, 1),
        (1, 2, 4, 5, 3, 3, 3, 1, 1),
        (2, 1, 2, 3, 2, 3, 3, 2, 0),
    ];
    for (case, &(n, ci, h, w, co, kh, kw, stride, pad)) in cases.iter().enumerate() {
        let seed = 100 + case as u64 * 3;
        let x = random_tensor(&[n, ci, h, w], seed);
        let k = random_tensor(&[ci, co, kh, kw], seed + 1);
        let b = random_tensor(&[co], seed + 2);
        let expected = conv_transpose2d_direct(&x, &k, &b, stride, pad);
        let tape = Tape::new();
        let got = tape
            .constant(x)
            .conv_transpose2d(&tape.constant(k), &tape.constant(b), stride, pad)
            .unwrap()
            .to_tensor();
        assert_eq!(got.shape(), expected.shape(), "case {case}");
        assert!(got.max_abs_diff(&expected) < 1e-10, "case {case}");
    }
}
