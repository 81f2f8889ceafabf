use super::*;
use crate::tensor::finite_diff_grad;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
}

#[test]
fn panel_selection_takes_every_fourth_channel() {
    let x = Tensor::<f64>::from_fn(8, 2, 2, |c, _, _| c as f64);
    let first = select_panel_group(&x, 1, 4).unwrap();
    assert_eq!(first.channel(0), &[0.0; 4]);
    assert_eq!(first.channel(1), &[4.0; 4]);
    let second = select_panel_group(&x, 2, 4).unwrap();
    assert_eq!(second.channel(0), &[1.0; 4]);
    assert_eq!(second.channel(1), &[5.0; 4]);
    assert_eq!(select_panel_group(&x, 1, 1).unwrap(), x);
    assert_eq!(
        select_panel_group(&x, 5, 4).unwrap_err(),
        AttentionError::StartOutOfRange { start: 5, stride: 4 }
    );
    assert!(select_panel_group(&x, 0, 4).is_err());
}

#[test]
fn panel_groups_partition_the_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, 12, 3, 2);
    let mut rebuilt = Tensor::zeros(12, 3, 2);
    let mut reads = [0usize; 12];
    for start in 1..=4 {
        let g = select_panel_group(&x, start, 4).unwrap();
        scatter_panel_group(&mut rebuilt, &g, start, 4).unwrap();
        for k in 0..3 {
            reads[k * 4 + start - 1] += 1;
        }
    }
    assert_eq!(rebuilt, x);
    assert!(reads.iter().all(|&r| r == 1));
}

/// Explicit double loop over positions.
fn attention_oracle(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>) -> Tensor<f64> {
    let (c, h, w) = q.shape();
    let s = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for i in 0..s {
        let scores: Vec<f64> = (0..s)
            .map(|j| (0..c).map(|ch| q.data()[ch * s + i] * k.data()[ch * s + j]).sum())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|e| (e - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for ch in 0..c {
            out.data_mut()[ch * s + i] = (0..s).map(|j| exps[j] / z * v.data()[ch * s + j]).sum();
        }
    }
    out
}

#[test]
fn attention_single_pixel_returns_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (q, k, v) = (rand_tensor(&mut rng, 3, 1, 1), rand_tensor(&mut rng, 3, 1, 1), rand_tensor(&mut rng, 3, 1, 1));
    assert_eq!(nl_attention(&q, &k, &v).unwrap(), v);
}

#[test]
fn constant_keys_average_the_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = rand_tensor(&mut rng, 2, 3, 3);
    let k = Tensor::from_fn(2, 3, 3, |c, _, _| c as f64 + 0.5);
    let v = rand_tensor(&mut rng, 2, 3, 3);
    let out = nl_attention(&q, &k, &v).unwrap();
    for ch in 0..2 {
        let mean = v.channel(ch).iter().sum::<f64>() / 9.0;
        assert!(out.channel(ch).iter().all(|&o| (o - mean).abs() < 1e-12));
    }
}

#[test]
fn attention_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (q, k, v) = (rand_tensor(&mut rng, 2, 2, 2), rand_tensor(&mut rng, 2, 2, 2), rand_tensor(&mut rng, 2, 2, 2));
    let got = nl_attention(&q, &k, &v).unwrap();
    let want = attention_oracle(&q, &k, &v);
    for (a, b) in got.data().iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(nl_attention(&q, &k, &rand_tensor(&mut rng, 2, 2, 1)).is_err());
}

#[test]
fn attention_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (q, k, v) = (rand_tensor(&mut rng, 2, 2, 3), rand_tensor(&mut rng, 2, 2, 3), rand_tensor(&mut rng, 2, 2, 3));
    let dout = rand_tensor(&mut rng, 2, 2, 3);
    let (_, a) = nl_attention_with_weights(&q, &k, &v).unwrap();
    let (dq, dk, dv) = nl_attention_backward(&q, &k, &v, &a, &dout).unwrap();
    let check = |analytic: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64, at: &Tensor<f64>| {
        let numeric = finite_diff_grad(f, at, 1e-6).unwrap();
        for (x, y) in analytic.data().iter().zip(numeric.data()) {
            assert!((x - y).abs() / x.abs().max(y.abs()).max(1e-4) < 1e-5, "{x} vs {y}");
        }
    };
    check(&dq, &|t| nl_attention(t, &k, &v).unwrap().dot(&dout).unwrap(), &q);
    check(&dk, &|t| nl_attention(&q, t, &v).unwrap().dot(&dout).unwrap(), &k);
    check(&dv, &|t| nl_attention(&q, &k, t).unwrap().dot(&dout).unwrap(), &v);
}

#[test]
fn one_by_eight_by_eight_becomes_one_by_four_by_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = PanelParams::<f32>::random(1, false, &mut rng);
    let x = Tensor::from_fn(1, 8, 8, |_, _, _| rng.random_range(-1.0f32..1.0));
    let (y, trace) = panel_attention_forward(&x, &params).unwrap();
    assert_eq!(y.shape(), (1, 4, 4));
    assert_eq!(trace.x_s.shape(), (4, 4, 4));
    assert_eq!(trace.q().shape(), (1, 4, 4));
    assert_eq!(trace.attention.rows(), 16);
}

#[test]
fn rejects_odd_input_and_bad_params() {
    let params = PanelParams::<f64>::zeros(2);
    let x = Tensor::zeros(2, 5, 4);
    assert_eq!(
        panel_attention_forward(&x, &params).unwrap_err(),
        AttentionError::OddSpatial { h: 5, w: 4 }
    );
    let mut bad = params.clone();
    bad.skip_down = ParamEntry::zeros(vec![2, 2, 3, 3]);
    assert!(matches!(
        panel_attention_forward(&Tensor::zeros(2, 4, 4), &bad),
        Err(AttentionError::ParamShape { name: "skip_down", .. })
    ));
    assert!(panel_attention_forward(&Tensor::zeros(3, 4, 4), &params).is_err());
}

#[test]
fn zero_weights_leave_only_the_norm_bias_path() {
    let c = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut params = PanelParams::<f64>::random(c, true, &mut rng);
    params.stream_maps = std::array::from_fn(|_| Matrix::zeros(c, c));
    params.skip_down = ParamEntry::zeros(vec![c, c, 2, 2]);
    params.layer_norm.as_mut().unwrap().beta = vec![0.3, -0.7, 0.1];
    params.prelu_slope = 0.5;
    let x = rand_tensor(&mut rng, c, 6, 4);
    let (y, _) = panel_attention_forward(&x, &params).unwrap();
    let zero = Tensor::zeros(c, 3, 2);
    let ln = layer_norm(&zero, params.layer_norm.as_ref().unwrap()).unwrap();
    let bn = batch_norm_inference(&ln, params.batch_norm.as_ref().unwrap()).unwrap();
    assert_eq!(y, prelu(&bn, 0.5));
    // channel 1 has a negative bias and goes through the negative slope
    assert!((y.at(1, 0, 0) - 0.5 * bn.at(1, 0, 0)).abs() < 1e-15);
}

#[test]
fn forward_equals_composition_of_public_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = PanelParams::<f64>::random(2, true, &mut rng);
    let x = rand_tensor(&mut rng, 2, 4, 4);
    let (y, _) = panel_attention_forward(&x, &params).unwrap();

    let xl = linear_channel_map(&x, params.transition.as_ref().unwrap()).unwrap();
    let xs = pixel_unshuffle(&xl, 2).unwrap();
    let xla = grouped_conv3x3(&xs, &params.local_kernels, 8).unwrap();
    let stream = |i: usize| linear_channel_map(&select_panel_group(&xla, i + 1, 4).unwrap(), &params.stream_maps[i]).unwrap();
    let xga = nl_attention(&stream(1), &stream(2), &stream(3)).unwrap();
    let z = stream(0).add(&xga).unwrap();
    let n = batch_norm_inference(
        &layer_norm(&z, params.layer_norm.as_ref().unwrap()).unwrap(),
        params.batch_norm.as_ref().unwrap(),
    )
    .unwrap();
    let want = prelu(&n, params.prelu_slope)
        .add(&patch_conv2x2(&x, &params.skip_down).unwrap())
        .unwrap();
    assert_eq!(y, want);
}

#[test]
fn unshuffled_values_are_the_transitioned_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = PanelParams::<f64>::random(3, true, &mut rng);
    let x = rand_tensor(&mut rng, 3, 6, 8);
    let (_, tr) = panel_attention_forward(&x, &params).unwrap();
    let sorted = |t: &Tensor<f64>| {
        let mut v = t.data().to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    assert_eq!(sorted(&tr.x_l), sorted(&tr.x_s));
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let (x, params, _) = gradcheck::random_case(2, 4, 4, 10);
    let (dx, g) = panel_attention_backward(&x, &params, &Tensor::zeros(2, 2, 2)).unwrap();
    assert!(dx.data().iter().all(|&v| v == 0.0));
    assert!(g.to_blob().iter().all(|(_, e)| e.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn skip_only_gradient_is_the_transposed_patch_kernel() {
    let c = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = PanelParams::<f64>::random(c, false, &mut rng);
    params.stream_maps = std::array::from_fn(|_| Matrix::zeros(c, c));
    let x = rand_tensor(&mut rng, c, 4, 6);
    let dy = rand_tensor(&mut rng, c, 2, 3);
    let (dx, _) = panel_attention_backward(&x, &params, &dy).unwrap();
    let k = params.skip_down.data();
    let want = Tensor::from_fn(c, 4, 6, |ic, i, j| {
        (0..c)
            .map(|oc| k[((oc * c + ic) * 2 + i % 2) * 2 + j % 2] * dy.at(oc, i / 2, j / 2))
            .sum()
    });
    for (a, b) in dx.data().iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn small_case_gradients_match_central_differences() {
    let report = check_panel_gradients(2, 4, 4, 0).unwrap();
    assert!(report.passed(GRAD_REL_TOL), "{report:#?}");
    let names: Vec<&str> = report.groups.iter().map(|g| g.name.as_str()).collect();
    for expected in ["input", "transition", "local_kernels", "stream_maps.q", "skip_down", "prelu_slope"] {
        assert!(names.contains(&expected), "missing group {expected}");
    }
}

#[test]
fn identity_activation_and_norms_give_the_raw_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut params = PanelParams::<f64>::random(2, false, &mut rng);
    params.layer_norm = None;
    params.batch_norm = None;
    params.prelu_slope = 1.0;
    let x = rand_tensor(&mut rng, 2, 4, 8);
    let (y, tr) = panel_attention_forward(&x, &params).unwrap();
    let want = tr.x_prime().add(&tr.x_ga).unwrap().add(&tr.skip).unwrap();
    assert_eq!(y, want);
    assert_eq!(
        upa_block_forward(&x, &params).unwrap_err(),
        AttentionError::MissingStage("layer normalisation")
    );
}

#[test]
fn upa_block_is_deterministic_and_halves_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = PanelParams::<f32>::random(4, true, &mut rng);
    let x = Tensor::from_fn(4, 10, 6, |_, _, _| rng.random_range(-1.0f32..1.0));
    let a = upa_block_forward(&x, &params).unwrap();
    let b = upa_block_forward(&x, &params).unwrap();
    assert_eq!(a.shape(), (4, 5, 3));
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn stream_weights_match_four_group_pointwise_conv() {
    for c in [1, 4, 8, 16] {
        let p = PanelParams::<f32>::zeros(c);
        // a 4-group 1x1 conv over 4c -> 4c channels has 4 * c * c weights
        let grouped = 4 * (4 * c / 4) * (4 * c / 4);
        assert_eq!(p.stream_weight_count(), grouped);
        assert_eq!(p.stream_weight_count(), 4 * c * c);
    }
}

#[test]
fn blob_round_trip_preserves_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = PanelParams::<f64>::random(3, true, &mut rng);
    let json = p.to_blob().to_json(crate::tensor::BlobEncoding::Base64);
    let back = PanelParams::from_blob(&ParamBlob::from_json(&json).unwrap()).unwrap();
    assert_eq!(back, p);
    let mut q = p.clone();
    q.transition = None;
    q.batch_norm = None;
    assert_eq!(PanelParams::from_blob(&q.to_blob()).unwrap(), q);
}

#[test]
fn single_precision_tracks_double_precision() {
    let (x, params, _) = gradcheck::random_case(3, 6, 6, 15);
    let (y64, _) = panel_attention_forward(&x, &params).unwrap();
    let (y32, _) = panel_attention_forward(&x.cast::<f32>(), &params.cast::<f32>()).unwrap();
    for (a, b) in y64.data().iter().zip(y32.data()) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn output_is_half_size(c in 1usize..5, hh in 1usize..6, ww in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = PanelParams::<f32>::random(c, seed % 2 == 0, &mut rng);
        let x = Tensor::from_fn(c, 2 * hh, 2 * ww, |_, _, _| rng.random_range(-1.0f32..1.0));
        let (y, _) = panel_attention_forward(&x, &params).unwrap();
        prop_assert_eq!(y.shape(), (c, hh, ww));
        prop_assert!(y.is_finite());
    }
}
