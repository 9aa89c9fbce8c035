use cloudret_core::architectures::{train, write_history_csv, ArchitectureSpec, Model, TrainData, Variant};
use cloudret_core::datasynth::{generate_dataset, sensor_band_config, Priors, SensorName, Standardizer};
use cloudret_core::gradcore::TrainConfig;

fn data(n: usize, seed: u64) -> TrainData {
    let ds = generate_dataset(n, &sensor_band_config(SensorName::Abi), Priors::default(), 0.01, seed).unwrap();
    let st = Standardizer::fit(&ds.features()).unwrap();
    TrainData::from_dataset(&ds, &st).unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 32,
        epochs,
        lasso_lambda: 1e-5,
        seed: 5,
        grad_clip: None,
    }
}

fn spec(v: Variant, m: usize) -> ArchitectureSpec {
    ArchitectureSpec::new(v, m).with_widths(&[16], 8, &[8])
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let d = data(64, 1);
    let mut model = Model::new(spec(Variant::MtHccar, d.x.cols()), 0).unwrap();
    let before = model.clone();
    let history = train(&mut model, &d, None, &config(0)).unwrap();
    assert!(history.is_empty());
    assert_eq!(model, before);
}

#[test]
fn training_is_bitwise_reproducible() {
    let d = data(96, 2);
    let run = || {
        let mut model = Model::new(spec(Variant::MtHccar, d.x.cols()), 3).unwrap();
        let h = train(&mut model, &d, Some(&d), &config(3)).unwrap();
        let mut csv = Vec::new();
        write_history_csv(&h, &mut csv).unwrap();
        (model, csv)
    };
    assert_eq!(run(), run());
}

#[test]
fn loss_decreases_for_every_variant() {
    let d = data(256, 3);
    for v in Variant::ALL {
        let mut model = Model::new(spec(v, d.x.cols()), 4).unwrap();
        let h = train(&mut model, &d, Some(&d), &config(8)).unwrap();
        let stages = if v == Variant::Seq { 3 } else { 1 };
        assert_eq!(h.len(), 8 * stages);
        assert!(h.iter().enumerate().all(|(i, r)| r.epoch == i + 1));
        let (first, last) = (h[0].val_total.unwrap(), h.last().unwrap().val_total.unwrap());
        assert!(last < first, "{v}: {first} -> {last}");
    }
}

#[test]
fn feature_mismatch_is_a_configuration_error() {
    let d = data(16, 4);
    let mut model = Model::new(spec(Variant::MtCr, d.x.cols() + 1), 0).unwrap();
    assert!(train(&mut model, &d, None, &config(1)).is_err());
}
