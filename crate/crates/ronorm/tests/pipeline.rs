//! End-to-end pipeline coverage for every dataset case: generate a small
//! dataset, build the bases, train briefly, and check that the loss moves
//! and predictions come out with the output-side shape. Exercises all four
//! mapping categories, both basis families and both reconstruction modes.

use ronorm::container::Dataset;
use ronorm::datagen::{build_dataset, DataCase, GenSpec, GrfSpec, LayoutSpec, PdeRun};
use ronorm::mesh::TriMesh;
use ronorm::metrics;
use ronorm::norm::Activation;
use ronorm::train::{
    prepare_bases, predict_dataset, train_decrease, train_increase, BasisFamily, Reconstruction,
    TrainConfig,
};

fn small_spec(case: DataCase) -> GenSpec {
    GenSpec {
        case,
        n_train: 12,
        n_test: 4,
        seed: 42,
        run: PdeRun {
            dt: 0.02,
            n_t: 12,
            coefficient: 0.15,
        },
        grf: GrfSpec {
            alpha: 3.0,
            tau: 3.0,
            n_modes: 10,
            seed: 42,
        },
        layout: LayoutSpec {
            n_sources: 3,
            radius: 0.15,
        },
    }
}

fn small_config(case: DataCase, family: BasisFamily, reconstruction: Reconstruction) -> TrainConfig {
    TrainConfig {
        epochs: 40,
        batch_size: 6,
        lr: 0.02,
        step_lr_every: 20,
        step_lr_gamma: 0.5,
        reconstruction,
        truncated_modes: 4,
        lmodes: 6,
        width: 8,
        n_l: 2,
        basis_family: family,
        seed: 5,
        normalize: matches!(case, DataCase::WaveForward | DataCase::WaveInverse),
        activation: Activation::Gelu,
        d_proj: 16,
    }
}

fn run_case(case: DataCase, family: BasisFamily, reconstruction: Reconstruction) -> (f64, f64, Dataset) {
    let mesh = TriMesh::unit_square_grid(4);
    let spec = small_spec(case);
    let (train, test) = build_dataset(&mesh, &spec).unwrap();
    let cfg = small_config(case, family, reconstruction);
    let (reduction, layer) = prepare_bases(&train, &cfg, Some(&mesh)).unwrap();
    let art = if train.header.mapping_kind.is_increase() {
        train_increase(&train, &test, &reduction, &layer, &cfg).unwrap()
    } else {
        train_decrease(&train, &test, &reduction, &layer, &cfg).unwrap()
    };
    let first = art.log.first().unwrap().train_loss;
    let last = art.log.last().unwrap().train_loss;

    // the public prediction path agrees with the logged test metric
    let pred = predict_dataset(
        &art.params,
        &test,
        &reduction,
        &layer,
        art.input_mean.as_deref(),
        art.input_std.as_deref(),
    )
    .unwrap();
    assert_eq!(pred.n_x(), test.u.n_x());
    assert_eq!(pred.n_t(), test.u.n_t());
    let e = metrics::e_l2(&pred, &test.u).unwrap().mean;
    assert!(
        (e - art.log.last().unwrap().test_e_l2).abs() <= 1e-12,
        "prediction path diverged from the training-time metric"
    );
    (first, last, test)
}

#[test]
fn heat_ic_trains() {
    let (first, last, _) = run_case(DataCase::HeatIc, BasisFamily::Pod, Reconstruction::Online);
    assert!(last < first, "loss did not improve: {first} -> {last}");
    assert!(last < 0.5, "loss stayed high: {last}");
}

#[test]
fn heat_ic_trains_offline() {
    let (first, last, _) = run_case(DataCase::HeatIc, BasisFamily::Pod, Reconstruction::Offline);
    assert!(last < first, "loss did not improve: {first} -> {last}");
}

#[test]
fn heat_layout_trains() {
    let (first, last, _) = run_case(DataCase::HeatLayout, BasisFamily::Pod, Reconstruction::Online);
    assert!(last < first, "loss did not improve: {first} -> {last}");
}

#[test]
fn wave_forward_trains() {
    // a(t) -> u(x,t): the network lives on the time axis and decodes through
    // a spatial basis
    let (first, last, _) = run_case(DataCase::WaveForward, BasisFamily::Pod, Reconstruction::Online);
    assert!(last < first, "loss did not improve: {first} -> {last}");
}

#[test]
fn wave_inverse_trains() {
    let (first, last, _) = run_case(DataCase::WaveInverse, BasisFamily::Pod, Reconstruction::Online);
    assert!(last < first, "loss did not improve: {first} -> {last}");
}

#[test]
fn heat_to_final_trains() {
    // a(x,t) -> u(x): inputs are encoded along time, the network lives on
    // the mesh
    let (first, last, _) = run_case(DataCase::HeatToFinal, BasisFamily::Pod, Reconstruction::Online);
    assert!(last < first, "loss did not improve: {first} -> {last}");
}

#[test]
fn intrinsic_family_trains_both_directions() {
    let (first, last, _) = run_case(DataCase::HeatIc, BasisFamily::Intrinsic, Reconstruction::Online);
    assert!(last < first, "increase/intrinsic loss did not improve: {first} -> {last}");
    let (first, last, _) = run_case(DataCase::HeatToFinal, BasisFamily::Intrinsic, Reconstruction::Online);
    assert!(last < first, "decrease/intrinsic loss did not improve: {first} -> {last}");
}
