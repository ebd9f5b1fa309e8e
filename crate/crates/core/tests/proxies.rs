use rand::Rng;
use zcp_har::arch::{instantiate, sample_architectures};
use zcp_har::data::{Split, WindowedDataset};
use zcp_har::nn::{ActivationGrad, ModelBuilder, TensorValue};
use zcp_har::proxies::{
    fisher_from_activations, grad_norm, grasp, hvp_forward_difference, initial_val_f1, jacob_cov, plain, score_model,
    snip, synflow, synflow_bn, BatchLoss, ProxyName, JACOB_COV_K,
};

mod common;
use common::{desk_space, random_labels, random_tensor, rng, Quadratic, Scaled, SquareLoss};

#[test]
fn square_loss_closed_forms() {
    assert_eq!(grad_norm(&mut SquareLoss::scalar(3.0)).unwrap().value, 6.0);
    assert_eq!(snip(&mut SquareLoss::scalar(3.0)).unwrap().value, 18.0);
    assert_eq!(plain(&mut SquareLoss::scalar(3.0)).unwrap().value, 18.0);
    let g = grasp(&mut SquareLoss::scalar(3.0)).unwrap().value;
    assert!((g + 36.0).abs() < 36.0 * 1e-9, "grasp {g}");
}

#[test]
fn zero_cases() {
    let zero_loss = &mut Scaled {
        inner: SquareLoss::vector(&[1.0, -2.0]),
        c: 0.0,
    };
    assert_eq!(grad_norm(zero_loss).unwrap().value, 0.0);
    assert_eq!(snip(&mut SquareLoss::vector(&[0.0, 0.0])).unwrap().value, 0.0);
    assert_eq!(plain(&mut SquareLoss::vector(&[0.0, 0.0])).unwrap().value, 0.0);
    assert_eq!(grasp(&mut SquareLoss::vector(&[0.0, 0.0])).unwrap().value, 0.0);
}

#[test]
fn loss_scaling_is_linear() {
    let mut r = rng(1);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..6).map(|_| r.gen_range(-2.0..2.0)).collect();
        let c = r.gen_range(0.1..10.0);
        let base = [grad_norm, snip, plain].map(|f| f(&mut SquareLoss::vector(&theta)).unwrap().value);
        let scaled = [grad_norm, snip, plain].map(|f| {
            f(&mut Scaled {
                inner: SquareLoss::vector(&theta),
                c,
            })
            .unwrap()
            .value
        });
        for (b, s) in base.iter().zip(scaled) {
            assert!((s - c * b).abs() <= 1e-12 * (c * b).abs().max(1.0));
        }
    }
}

#[test]
fn snip_is_sign_symmetric_for_even_losses() {
    let mut r = rng(2);
    let theta: Vec<f64> = (0..8).map(|_| r.gen_range(-2.0..2.0)).collect();
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    assert_eq!(
        snip(&mut SquareLoss::vector(&theta)).unwrap().value,
        snip(&mut SquareLoss::vector(&neg)).unwrap().value
    );
}

#[test]
fn finite_difference_hvp_matches_analytic_on_quadratics() {
    let mut r = rng(3);
    for _ in 0..200 {
        let mut q = Quadratic::random(5, &mut r);
        let theta = q.theta();
        let g = q.mat_vec(&theta);
        let expected = q.mat_vec(&g);
        let gt = vec![TensorValue::new(vec![5], g.clone()).unwrap()];
        let eps = zcp_har::proxies::grasp_epsilon(&q.params);
        let hv = hvp_forward_difference(&mut q, &gt, &gt, eps).unwrap();
        let got = hv[0].data();
        let err: f64 = got.iter().zip(&expected).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = expected.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-3 * norm.max(1e-12), "relative error {}", err / norm);
        // Parameters are restored.
        assert_eq!(q.theta(), theta);
    }
}

#[test]
fn fisher_formula() {
    let pair = |a: Vec<f64>, g: Vec<f64>, shape: Vec<usize>| ActivationGrad {
        layer: 0,
        activation: TensorValue::new(shape.clone(), a).unwrap(),
        grad: TensorValue::new(shape, g).unwrap(),
    };
    assert_eq!(fisher_from_activations(&[pair(vec![2.0], vec![0.5], vec![1, 1, 1])]), 1.0);
    assert_eq!(fisher_from_activations(&[pair(vec![2.0, 3.0], vec![0.0, 0.0], vec![1, 1, 2])]), 0.0);
    // Batch [2, 1, 2] vs the same batch duplicated.
    let a = vec![1.0, -2.0, 0.5, 3.0];
    let g = vec![0.3, 0.1, -0.2, 0.4];
    let once = fisher_from_activations(&[pair(a.clone(), g.clone(), vec![2, 1, 2])]);
    let twice = fisher_from_activations(&[pair([a.clone(), a].concat(), [g.clone(), g].concat(), vec![4, 1, 2])]);
    assert!((twice - 4.0 * once).abs() < 1e-12);
}

#[test]
fn synflow_single_linear_layer() {
    let mut m = ModelBuilder::new(2, 1).global_avg_pool().unwrap().linear(1).unwrap().build().unwrap();
    m.params_mut().get_mut(0).value.data_mut().copy_from_slice(&[2.0, -3.0]);
    let before = m.params().snapshot();
    assert_eq!(synflow(&mut m).unwrap().value, 5.0);
    assert_eq!(m.params().snapshot(), before);
}

fn random_batch(seed: u64, n: usize) -> (TensorValue, Vec<usize>) {
    let mut r = rng(seed);
    (random_tensor(&[n, 3, 100], &mut r), random_labels(n, 6, &mut r))
}

fn empty_val() -> WindowedDataset {
    WindowedDataset {
        windows: TensorValue::zeros(&[0, 3, 100]),
        labels: vec![],
        user_ids: vec![],
        split: Split::Val,
        class_names: vec![],
    }
}

#[test]
fn synflow_invariances_over_random_specs() {
    let specs = sample_architectures(&desk_space(100), 17);
    let batches: Vec<_> = (0..3).map(|s| random_batch(100 + s, 4)).collect();
    let mut r = rng(5);
    for (i, spec) in specs.iter().enumerate() {
        let mut m = instantiate(spec, 6, 100, i as u64).unwrap();
        let reference = synflow(&mut m).unwrap();
        assert!(!reference.degenerate);
        for (x, y) in &batches {
            let s = score_model(&mut m, x, y, &empty_val(), &[ProxyName::Synflow]).unwrap()[0];
            assert_eq!(s.value.to_bits(), reference.value.to_bits());
        }
        assert_eq!(synflow_bn(&mut m).unwrap().value.to_bits(), reference.value.to_bits());
        for p in m.params_mut().iter_mut() {
            for v in p.value.data_mut() {
                if r.gen_bool(0.5) {
                    *v = -*v;
                }
            }
        }
        assert_eq!(synflow(&mut m).unwrap().value.to_bits(), reference.value.to_bits());
    }
}

#[test]
fn snip_dominates_plain_and_scores_are_deterministic() {
    let specs = sample_architectures(&desk_space(20), 23);
    let (x, y) = random_batch(9, 16);
    let components = &ProxyName::COMPONENTS[..8];
    for (i, spec) in specs.iter().enumerate() {
        let mut m = instantiate(spec, 6, 100, i as u64).unwrap();
        let a = score_model(&mut m, &x, &y, &empty_val(), components).unwrap();
        let b = score_model(&mut m, &x, &y, &empty_val(), components).unwrap();
        assert_eq!(a, b);
        let get = |p| a.iter().find(|s| s.proxy == p).unwrap().value;
        assert!(get(ProxyName::Snip) >= get(ProxyName::Plain).abs());
        // Shared-pass scores agree with the standalone implementations.
        let standalone = snip(&mut BatchLoss::new(&mut m, &x, &y)).unwrap().value;
        assert_eq!(standalone, get(ProxyName::Snip));
    }
}

#[test]
fn jacob_cov_penalises_duplicates() {
    let specs = sample_architectures(&desk_space(10), 29);
    for (i, spec) in specs.iter().enumerate() {
        let mut m = instantiate(spec, 6, 100, i as u64).unwrap();
        let (x, _) = random_batch(40 + i as u64, 4);
        let mut dup = x.clone();
        let row0 = x.row(0).to_vec();
        let len = x.row_len();
        dup.data_mut()[len..2 * len].copy_from_slice(&row0);
        let independent = jacob_cov(&mut m, &x).unwrap();
        let duplicated = jacob_cov(&mut m, &dup).unwrap();
        assert!(duplicated.rank_key() <= independent.rank_key());
        if !duplicated.degenerate {
            assert!(duplicated.value < -0.5 / JACOB_COV_K);
        }
    }
}

#[test]
fn constant_predictor_on_balanced_pair() {
    // Zero weights and a bias favouring class 0: always predicts 0.
    let mut m = ModelBuilder::new(3, 100).global_avg_pool().unwrap().linear(2).unwrap().build().unwrap();
    m.params_mut().get_mut(1).value.data_mut().copy_from_slice(&[1.0, 0.0]);
    let val = WindowedDataset {
        windows: TensorValue::zeros(&[4, 3, 100]),
        labels: vec![0, 0, 1, 1],
        user_ids: vec!["u".into(); 4],
        split: Split::Val,
        class_names: vec!["a".into(), "b".into()],
    };
    let s = initial_val_f1(&m, &val).unwrap();
    assert!((s.value - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(initial_val_f1(&m, &val).unwrap(), s);
}
