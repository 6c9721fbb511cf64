use gastree::engine::{self, fit_baseline, simulate, FitOptions, GasParams, LeafParams, ModelSpec, StateGenerator};
use gastree::evaluation::LossKind;
use gastree::score::Family;
use gastree::tree::{grow, tune_depth, GrowConfig, TuneInput};

fn plain(t: usize, seed: u64) -> engine::SimulatedData {
    let p = GasParams::single(LeafParams::new(0.05, 0.90, 0.05), None);
    simulate(&ModelSpec::new(Family::NormalScale), &p, |_| 0, t, seed, &StateGenerator::new(2, 0.5)).unwrap()
}

#[test]
fn depth_zero_is_the_baseline() {
    let d = plain(1000, 11);
    let spec = ModelSpec::new(Family::NormalScale);
    let y = d.y.view();
    let cfg = GrowConfig {
        max_depth: 0,
        ..GrowConfig::default()
    };
    let out = grow(&spec, y, &d.z, &d.names, &[0, 1], &cfg).unwrap();
    assert_eq!(out.snapshots.len(), 1);
    assert!(out.trace.is_empty());
    let f0 = engine::initial_state(Family::NormalScale, y).unwrap();
    let base = fit_baseline(&spec, y, f0, &FitOptions::default()).unwrap();
    assert_eq!(out.tree.params(), base.params);
    assert!(grow(&spec, y, &d.z, &d.names, &[0, 1], &GrowConfig { max_depth: 7, ..cfg }).is_err());
}

#[test]
fn regime_free_data_tunes_to_depth_zero() {
    let d = plain(3000, 12);
    let spec = ModelSpec::new(Family::NormalScale);
    let input = TuneInput {
        y: d.y.view(),
        z: &d.z,
        names: &d.names,
        proxy: d.proxy.as_deref(),
        est_end: 900,
        val_end: 1800,
    };
    let res = tune_depth(&spec, &input, &[0, 1], &[0, 1, 2], &GrowConfig::default(), LossKind::Qlike).unwrap();
    assert_eq!(res.validation_loss.len(), 3);
    assert_eq!(res.max_depth, 0);
    assert_eq!(res.tree, res.growth.snapshots[0]);
}
