mod common;

use common::gradcheck::{loss_grad_error, loss_instance, LossInstance, TOL};
use common::rel_err;
use qapm::losses::{loss_and_grad, loss_and_grad_with_margins, target_logit, LossSpec, LossVariant};
use qapm::{ClassId, UnitEmbedding};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(spec: &LossSpec, seed: u64) -> LossInstance {
    loss_instance(spec, seed)
}

fn check_gradients(spec: LossSpec, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let err = loss_grad_error(&spec, &instance(&spec, seed));
        assert!(err <= TOL, "{} seed {seed}: rel err {err:e}", spec.variant.name());
    }
}

#[test]
fn cosface_gradients_match_finite_differences() {
    check_gradients(LossSpec::cosface(), 0..50);
}

#[test]
fn arcface_gradients_match_finite_differences() {
    check_gradients(LossSpec::arcface(), 0..50);
}

#[test]
fn elastic_cos_gradients_match_finite_differences() {
    check_gradients(LossSpec::elasticface_cos_plus(), 0..50);
}

#[test]
fn elastic_arc_gradients_match_finite_differences() {
    check_gradients(LossSpec::elasticface_arc_plus(), 0..50);
}

#[test]
fn sample_permutation_permutes_outputs() {
    for variant in LossVariant::ALL {
        let spec = LossSpec::standard(variant);
        let inst = instance(&spec, 7);
        let out = loss_and_grad_with_margins(&spec, &inst.embeddings, &inst.labels, &inst.protos, &inst.margins).unwrap();
        let mut order: Vec<usize> = (0..inst.labels.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let pe: Vec<UnitEmbedding> = order.iter().map(|i| inst.embeddings[*i].clone()).collect();
        let pl: Vec<ClassId> = order.iter().map(|i| inst.labels[*i]).collect();
        let pm: Vec<f64> = order.iter().map(|i| inst.margins[*i]).collect();
        let perm = loss_and_grad_with_margins(&spec, &pe, &pl, &inst.protos, &pm).unwrap();
        assert!((perm.loss - out.loss).abs() <= 1e-12 * out.loss.abs().max(1.0));
        for (k, i) in order.iter().enumerate() {
            assert_eq!(perm.grad_embeddings[k], out.grad_embeddings[*i]);
        }
    }
}

#[test]
fn prototype_permutation_permutes_gradients() {
    let spec = LossSpec::arcface();
    let inst = instance(&spec, 11);
    let out = loss_and_grad_with_margins(&spec, &inst.embeddings, &inst.labels, &inst.protos, &inst.margins).unwrap();
    let mut rev = inst.protos.clone();
    rev.reverse();
    let back = loss_and_grad_with_margins(&spec, &inst.embeddings, &inst.labels, &rev, &inst.margins).unwrap();
    assert!((back.loss - out.loss).abs() <= 1e-12 * out.loss.max(1.0));
    let c = inst.protos.len();
    for j in 0..c {
        assert!(rel_err(&back.grad_prototypes[c - 1 - j], &out.grad_prototypes[j], 1e-12) <= 1e-12);
    }
}

#[test]
fn zero_margin_variants_coincide() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let base = LossSpec { margin: 0.0, sigma: 0.0, ..LossSpec::cosface() };
        let inst = instance(&base, seed);
        let reference = loss_and_grad(&base, &inst.embeddings, &inst.labels, &inst.protos, &mut rng).unwrap();
        for variant in LossVariant::ALL {
            let spec = LossSpec { variant, ..base };
            let out = loss_and_grad(&spec, &inst.embeddings, &inst.labels, &inst.protos, &mut rng).unwrap();
            assert!((out.loss - reference.loss).abs() <= 1e-12 * reference.loss.max(1.0));
            for (a, b) in out.grad_embeddings.iter().zip(&reference.grad_embeddings) {
                assert!(rel_err(a, b, 1e-12) <= 1e-9, "{}", variant.name());
            }
        }
    }
}

#[test]
fn small_step_against_gradient_descends() {
    for variant in LossVariant::ALL {
        let spec = LossSpec::standard(variant);
        for seed in 0..20 {
            let inst = instance(&spec, 100 + seed);
            let out = loss_and_grad_with_margins(&spec, &inst.embeddings, &inst.labels, &inst.protos, &inst.margins).unwrap();
            let g2: f64 = out.grad_embeddings.iter().flatten().map(|g| g * g).sum();
            if g2 < 1e-20 {
                continue;
            }
            let eta = 1e-4 / g2.sqrt();
            let moved: Vec<Vec<f64>> = inst
                .embeddings
                .iter()
                .zip(&out.grad_embeddings)
                .map(|(e, g)| e.as_slice().iter().zip(g).map(|(x, gi)| x - eta * gi).collect())
                .collect();
            let after = loss_and_grad_with_margins(&spec, &moved, &inst.labels, &inst.protos, &inst.margins).unwrap();
            assert!(after.loss < out.loss, "{} seed {seed}", variant.name());
        }
    }
}

#[test]
fn logits_are_bounded_by_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for variant in LossVariant::ALL {
        let spec = LossSpec::standard(variant);
        for seed in 0..50 {
            let inst = instance(&spec, 1000 + seed);
            let out = loss_and_grad(&spec, &inst.embeddings, &inst.labels, &inst.protos, &mut rng).unwrap();
            let bound = spec.scale * (1.0 + spec.margin + 4.0 * spec.sigma);
            for row in &out.logits {
                assert!(row.iter().all(|l| l.abs() <= bound));
            }
        }
        // on the regular branch the angular transform stays within [-s, s]
        if variant.is_angular() {
            for k in 0..=1000 {
                let c = -1.0 + 2.0 * k as f64 / 1000.0;
                if c.acos() + spec.margin <= std::f64::consts::PI {
                    assert!(target_logit(variant, c, spec.margin).abs() <= 1.0 + 1e-15);
                }
            }
        }
    }
}
