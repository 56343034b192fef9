//! End-to-end learning checks at reduced scale: contrastive divergence on
//! wrap-around translation pairs drives reconstruction error down and the
//! learned flow recovers the true shift on held-out pairs.

use gatedflow::datagen::{make_pairs, PairKind, TransformLabel};
use gatedflow::flow::max_flow_field;
use gatedflow::motion::estimate_translation;
use gatedflow::training::{train, TrainConfig};

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        factors: 32,
        hidden: 16,
        epochs: 30,
        batch_size: 100,
        // The small epoch budget needs a hotter rate than the full-scale
        // default to get past the early plateau.
        learning_rate: 0.1,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_reduces_reconstruction_error() {
    let pairs = make_pairs(PairKind::Translation9, 500, 8, 0.2, 123).unwrap();
    for seed in [1, 2] {
        let report = train(&pairs, &small_config(seed)).unwrap();
        let first = report.epoch_mse[0];
        let last = *report.epoch_mse.last().unwrap();
        eprintln!(
            "seed {seed}: first {first:.5} last {last:.5} hidden {:.4} secs {:.2}",
            report.epoch_hidden_mean.last().unwrap(),
            report.epoch_seconds.iter().sum::<f64>()
        );
        assert!(last < 0.8 * first, "seed {seed}: {last} !< 0.8 * {first}");
        let hidden = *report.epoch_hidden_mean.last().unwrap();
        assert!(hidden > 1e-4 && hidden < 0.5, "hidden mean {hidden}");
    }
}

#[test]
fn learned_flow_recovers_held_out_shifts() {
    // Recovering shifts through the flow field needs more data and epochs
    // than the error-decrease check above; this config reaches near-perfect
    // accuracy with plenty of margin over the asserted half.
    let pairs = make_pairs(PairKind::Translation9, 2000, 8, 0.2, 123).unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        ..small_config(3)
    };
    let report = train(&pairs, &cfg).unwrap();
    let held_out = make_pairs(PairKind::Translation9, 60, 8, 0.2, 999).unwrap();
    let mut correct = 0;
    let mut total = 0;
    for pair in &held_out {
        let TransformLabel::Translation { dx, dy } = pair.label else {
            panic!("translation pairs expected")
        };
        let flow = max_flow_field(&report.model, pair).unwrap();
        if flow.active_count() == 0 {
            continue;
        }
        total += 1;
        let (mx, my, _) = estimate_translation(&flow).unwrap();
        if (mx, my) == (i64::from(dx), i64::from(dy)) {
            correct += 1;
        }
    }
    eprintln!("held-out modal-shift accuracy: {correct}/{total}");
    assert!(total >= 55);
    assert!(
        correct * 2 >= total,
        "accuracy {correct}/{total} below half"
    );
}
