use cloudret_core::architectures::{ArchitectureSpec, GatingMode, Model, Variant};
use cloudret_core::datasynth::CloudLabel;
use cloudret_core::gradcore::{Matrix, ParamKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_x(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(n, m, (0..n * m).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn small(v: Variant, m: usize) -> ArchitectureSpec {
    ArchitectureSpec::new(v, m).with_widths(&[6], 4, &[3])
}

fn jitter_biases(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for store in model.stores_mut() {
        for p in store.iter_mut() {
            if p.kind == ParamKind::Bias {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
            }
        }
    }
}

#[test]
fn parameter_counts_follow_the_variant_nesting() {
    let m = 6;
    let count = |v| Model::new(ArchitectureSpec::new(v, m), 0).unwrap().parameter_count();
    let (cr, hcr, hccr, hccar) = (
        count(Variant::MtCr),
        count(Variant::MtHcr),
        count(Variant::MtHccr),
        count(Variant::MtHccar),
    );
    assert!(cr < hcr && hcr < hccr && hccr < hccar);
    let h = 16;
    assert_eq!(hccar - hccr, 4 * h * h);
    assert_eq!(count(Variant::MlpBaseline), m * 10 + 10 + 10 * 3 + 3 + 10 + 1);
}

#[test]
fn hccr_is_hccar_without_attention_parameters() {
    let hccr = Model::new(small(Variant::MtHccr, 5), 3).unwrap();
    let hccar = Model::new(small(Variant::MtHccar, 5), 3).unwrap();
    let a: Vec<&str> = hccr.stores()[0].names().collect();
    let b: Vec<&str> = hccar.stores()[0].names().filter(|n| !n.starts_with("attn.")).collect();
    assert_eq!(a, b);
}

#[test]
fn seeds_determine_initialisation() {
    let spec = small(Variant::MtHccar, 5);
    let a = Model::new(spec.clone(), 11).unwrap();
    let b = Model::new(spec.clone(), 11).unwrap();
    let c = Model::new(spec, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let x = random_x(7, 5, 1);
    assert_eq!(a.forward(&x, false).unwrap(), b.forward(&x, false).unwrap());
}

#[test]
fn zero_output_projection_reduces_hccar_to_hccr() {
    let m = 5;
    let mut hccar = Model::new(small(Variant::MtHccar, m), 4).unwrap();
    jitter_biases(&mut hccar, 9);
    hccar.set_param("attn.wz", Matrix::zeros(3, 3)).unwrap();
    let mut hccr = Model::new(small(Variant::MtHccr, m), 0).unwrap();
    for p in hccr.stores()[0].names().map(str::to_owned).collect::<Vec<_>>() {
        hccr.set_param(&p, hccar.param_value(&p).unwrap().clone()).unwrap();
    }
    let x = random_x(9, m, 2);
    for train_mode in [false, true] {
        let a = hccar.forward(&x, train_mode).unwrap();
        let b = hccr.forward(&x, train_mode).unwrap();
        assert_eq!(a.y_cot_hat, b.y_cot_hat);
        assert_eq!(a.u_cloud, b.u_cloud);
        assert_eq!(a.thickness, b.thickness);
    }
}

#[test]
fn saturated_mask_makes_soft_and_hard_gating_agree() {
    let m = 4;
    for bias in [60.0, -1000.0] {
        let mut soft = Model::new(small(Variant::MtHccar, m), 5).unwrap();
        jitter_biases(&mut soft, 1);
        soft.set_param("mask.out.b", Matrix::from_rows(&[[bias]]).unwrap()).unwrap();
        let mut spec = small(Variant::MtHccar, m);
        spec.gating_mode = GatingMode::Hard;
        let mut hard = Model::new(spec, 0).unwrap();
        for name in soft.stores()[0].names().map(str::to_owned).collect::<Vec<_>>() {
            hard.set_param(&name, soft.param_value(&name).unwrap().clone()).unwrap();
        }
        let x = random_x(6, m, 3);
        assert_eq!(soft.forward(&x, true).unwrap(), hard.forward(&x, true).unwrap());
    }
}

// Loop-based reference forward pass.

fn dense(input: &[f64], w: &Matrix, b: &Matrix) -> Vec<f64> {
    (0..w.cols())
        .map(|j| b[(0, j)] + input.iter().enumerate().map(|(i, v)| v * w[(i, j)]).sum::<f64>())
        .collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|a| a.max(0.0)).collect()
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|a| (a - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|a| a / s).collect()
}

fn layer(model: &Model, name: &str, input: &[f64]) -> Vec<f64> {
    dense(
        input,
        model.param_value(&format!("{name}.w")).unwrap(),
        model.param_value(&format!("{name}.b")).unwrap(),
    )
}

/// `W x` for a square matrix stored row-major (so `x Wᵀ` as a row vector).
fn project(w: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|a| (0..w.cols()).map(|b| w[(a, b)] * x[b]).sum()).collect()
}

struct Reference {
    cloud: f64,
    liquid: f64,
    thickness: Vec<f64>,
    y: f64,
    recon: Vec<f64>,
}

fn reference_hccar(model: &Model, x: &[f64], soft_gate: bool) -> Reference {
    let z = relu(layer(model, "enc.1", &relu(layer(model, "enc.0", x))));
    let recon = layer(model, "dec.out", &relu(layer(model, "dec.0", &z)));
    let cloud = sigmoid(layer(model, "mask.out", &relu(layer(model, "mask.0", &z)))[0]);
    let gate = if soft_gate { cloud } else { f64::from(u8::from(cloud >= 0.5)) };
    let gated: Vec<f64> = z.iter().map(|v| v * gate).collect();
    let liquid = sigmoid(layer(model, "phase.out", &relu(layer(model, "phase.0", &gated)))[0]);
    let theta2 = relu(layer(model, "aux.0", &z));
    let thickness = softmax(&layer(model, "aux.out", &theta2));
    let theta1 = relu(layer(model, "reg.0", &z));
    let p = |n: &str| model.param_value(n).unwrap();
    let q = project(p("attn.wq"), &theta2);
    let k = project(p("attn.wk"), &theta1);
    let v = project(p("attn.wv"), &theta1);
    let ya: Vec<f64> = (0..q.len())
        .map(|a| {
            let w = softmax(&k.iter().map(|kb| q[a] * kb).collect::<Vec<_>>());
            w.iter().zip(&v).map(|(w, vb)| w * vb).sum()
        })
        .collect();
    let trunk: Vec<f64> = project(p("attn.wz"), &ya).iter().zip(&theta1).map(|(a, b)| a + b).collect();
    let y = layer(model, "reg.out", &trunk)[0];
    Reference {
        cloud,
        liquid,
        thickness,
        y,
        recon,
    }
}

#[test]
fn hccar_forward_matches_loop_reference() {
    let m = 5;
    let mut model = Model::new(small(Variant::MtHccar, m), 21).unwrap();
    jitter_biases(&mut model, 22);
    let x = random_x(3, m, 23);
    for train_mode in [true, false] {
        let out = model.forward(&x, train_mode).unwrap();
        for i in 0..3 {
            let r = reference_hccar(&model, x.row(i), train_mode);
            let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            close(out.u_cloud[i], r.cloud);
            close(out.u_clear[i], 1.0 - r.cloud);
            close(out.u_liquid[i], r.liquid);
            close(out.u_ice[i], 1.0 - r.liquid);
            close(out.y_cot_hat[i], r.y);
            let t = out.thickness.as_ref().unwrap();
            for j in 0..3 {
                close(t[(i, j)], r.thickness[j]);
            }
            let xr = out.x_recon.as_ref().unwrap();
            for j in 0..m {
                close(xr[(i, j)], r.recon[j]);
            }
        }
    }
}

#[test]
fn baseline_forward_matches_loop_reference() {
    let m = 4;
    let mut model = Model::new(ArchitectureSpec::new(Variant::MlpBaseline, m), 8).unwrap();
    jitter_biases(&mut model, 8);
    let x = random_x(3, m, 9);
    let out = model.forward(&x, false).unwrap();
    assert!(out.thickness.is_none() && out.x_recon.is_none());
    for i in 0..3 {
        let h = relu(layer(&model, "base.hidden", x.row(i)));
        let s = softmax(&layer(&model, "base.cls", &h));
        let y = layer(&model, "base.reg", &h)[0];
        assert!((out.u_clear[i] - s[0]).abs() < 1e-12);
        assert!((out.u_liquid[i] - s[1]).abs() < 1e-12);
        assert!((out.u_ice[i] - s[2]).abs() < 1e-12);
        assert!((out.u_cloud[i] - (s[1] + s[2])).abs() < 1e-12);
        assert!((out.y_cot_hat[i] - y).abs() < 1e-12);
    }
}

#[test]
fn seq_stages_see_gated_inputs() {
    let m = 4;
    let mut model = Model::new(small(Variant::Seq, m), 2).unwrap();
    assert_eq!(model.stores().len(), 3);
    // stage one says "clear" everywhere: later stages see all-zero inputs
    model.set_param("seq_mask.out.b", Matrix::from_rows(&[[-1000.0]]).unwrap()).unwrap();
    let x = random_x(5, m, 4);
    let out = model.forward(&x, false).unwrap();
    let zero = model.forward(&Matrix::zeros(5, m), false).unwrap();
    assert_eq!(out.y_cot_hat, zero.y_cot_hat);
    assert_eq!(out.u_liquid, zero.u_liquid);
    assert!(out.phase_conditional);
}

#[test]
fn forward_rejects_wrong_width_and_empty_batches() {
    let model = Model::new(small(Variant::MtCr, 5), 0).unwrap();
    assert!(model.forward(&Matrix::zeros(2, 4), false).is_err());
    assert!(model.forward(&Matrix::zeros(0, 5), false).is_err());
}

#[test]
fn loss_requires_targets_for_cloudy_pixels() {
    let model = Model::new(small(Variant::MtHccar, 3), 0).unwrap();
    let x = random_x(2, 3, 0);
    let labels = [CloudLabel::Clear, CloudLabel::Ice];
    assert!(model.loss(&x, &labels, &[None, None], 0.0).is_err());
    assert!(model.loss(&x, &labels, &[None, Some(0.2)], 0.0).is_ok());
}
