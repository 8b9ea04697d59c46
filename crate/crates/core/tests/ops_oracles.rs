mod common;

use common::*;
use proptest::prelude::*;
use prunekit::ops::{conv2d_forward, conv_out_dim, dense_forward, depthwise_conv2d_forward};
use prunekit::Tensor;

proptest! {
    #[test]
    fn conv_matches_nested_loops(
        b in 1..3usize, c in 1..5usize, co in 1..5usize, h in 1..9usize, w in 1..9usize,
        k in 1..4usize, stride in 1..3usize, pad in 0..2usize, bias: bool, seed: u64,
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let mut r = rng(seed);
        let x = uniform(&[b, c, h, w], &mut r);
        let wt = uniform(&[co, c, k, k], &mut r);
        let bs = bias.then(|| uniform(&[co], &mut r));
        let fast = conv2d_forward(&x, &wt, bs.as_ref(), stride, pad).unwrap();
        let slow = naive_conv(&x, &wt, bs.as_ref(), stride, pad);
        prop_assert_eq!(fast.shape(), slow.shape());
        prop_assert_eq!(fast.shape()[2], conv_out_dim(h, k, stride, pad).unwrap());
        prop_assert!(fast.max_abs_diff(&slow) < 1e-4);
    }

    #[test]
    fn depthwise_matches_per_channel_conv(
        b in 1..3usize, c in 1..5usize, hw in 3..8usize, k in 1..4usize, stride in 1..3usize, seed: u64,
    ) {
        let mut r = rng(seed);
        let x = uniform(&[b, c, hw, hw], &mut r);
        let wt = uniform(&[c, 1, k, k], &mut r);
        let fast = depthwise_conv2d_forward(&x, &wt, None, stride, 1).unwrap();
        for ch in 0..c {
            let xc = x.select(1, &[ch]);
            let wc = wt.select(0, &[ch]);
            let slow = naive_conv(&xc, &wc, None, stride, 1);
            prop_assert!(fast.select(1, &[ch]).max_abs_diff(&slow) < 1e-4);
        }
    }

    #[test]
    fn dense_matches_loops(b in 1..4usize, fin in 1..9usize, fout in 1..9usize, seed: u64) {
        let mut r = rng(seed);
        let x = uniform(&[b, fin], &mut r);
        let w = uniform(&[fout, fin], &mut r);
        let bias = uniform(&[fout], &mut r);
        let out = dense_forward(&x, &w, &bias).unwrap();
        for n in 0..b {
            for o in 0..fout {
                let expect: f32 = bias.data()[o] + (0..fin).map(|i| x.data()[n * fin + i] * w.data()[o * fin + i]).sum::<f32>();
                prop_assert!((out.data()[n * fout + o] - expect).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn pointwise_identity_passes_input_through() {
    let mut r = rng(3);
    let x = uniform(&[2, 4, 5, 5], &mut r);
    let eye = Tensor::from_fn(&[4, 4, 1, 1], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
    assert_eq!(conv2d_forward(&x, &eye, None, 1, 0).unwrap(), x);
}

#[test]
fn mismatched_channels_report_both_shapes() {
    let x = Tensor::zeros(&[1, 3, 4, 4]);
    let w = Tensor::zeros(&[2, 5, 3, 3]);
    let msg = conv2d_forward(&x, &w, None, 1, 1).unwrap_err().to_string();
    assert!(msg.contains('3') && msg.contains('5'), "{msg}");
}
