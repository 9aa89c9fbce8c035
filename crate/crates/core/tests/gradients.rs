//! Finite-difference checks of the full composite loss for every variant.

use cloudret_core::architectures::{ArchitectureSpec, GatingMode, Model, RegNormalization, Variant};
use cloudret_core::datasynth::CloudLabel;
use cloudret_core::gradcore::{finite_diff_check, Matrix, ParamKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Batch {
    x: Matrix,
    labels: Vec<CloudLabel>,
    cot: Vec<Option<f64>>,
}

fn batch(n: usize, m: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_vec(n, m, (0..n * m).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let labels: Vec<CloudLabel> = (0..n)
        .map(|i| [CloudLabel::Clear, CloudLabel::Liquid, CloudLabel::Ice][i % 3])
        .collect();
    let cot = labels
        .iter()
        .map(|l| l.is_cloudy().then(|| rng.random_range(-1.4..2.4)))
        .collect();
    Batch { x, labels, cot }
}

fn small_spec(variant: Variant, m: usize) -> ArchitectureSpec {
    ArchitectureSpec::new(variant, m).with_widths(&[12], 8, &[6])
}

/// Random non-zero biases keep every ReLU off its kink at zero inputs.
fn jitter_biases(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for store in model.stores_mut() {
        for p in store.iter_mut() {
            if p.kind == ParamKind::Bias {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
            }
        }
    }
}

fn check(mut model: Model, b: &Batch, lambda: f64) {
    jitter_biases(&mut model, 1);
    model.zero_grads();
    model.accumulate_gradients(&b.x, &b.labels, &b.cot, lambda).unwrap();
    for idx in 0..model.stores().len() {
        let mut store = model.stores()[idx].clone();
        let report = finite_diff_check(
            |s| model.loss_with_store(idx, s, &b.x, &b.labels, &b.cot, lambda),
            &mut store,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(
            report.pass,
            "{} store {idx}: {report:?}",
            model.variant()
        );
        assert!(report.checked > report.skipped, "{report:?}");
    }
}

#[test]
fn every_variant_matches_finite_differences() {
    let b = batch(5, 16, 11);
    for v in Variant::ALL {
        check(Model::new(small_spec(v, 16), 5).unwrap(), &b, 1e-3);
    }
}

#[test]
fn hard_gating_and_mean_regression() {
    let b = batch(6, 9, 2);
    for v in [Variant::MtHcr, Variant::MtHccar] {
        let mut spec = small_spec(v, 9);
        spec.gating_mode = GatingMode::Hard;
        spec.reg_normalization = RegNormalization::Mean;
        check(Model::new(spec, 1).unwrap(), &b, 0.0);
    }
}

#[test]
fn feature_gating() {
    let b = batch(5, 9, 4);
    let mut spec = small_spec(Variant::MtHccar, 9);
    spec.gate_operand = cloudret_core::architectures::GateOperand::Features;
    check(Model::new(spec, 8).unwrap(), &b, 1e-4);
}
