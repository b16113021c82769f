//! Shared contract of the four scorers on the synthetic benchmark: finite
//! scores, one per row, and in-distribution rows ranked above far-OOD rows.

use oodkit::data::FeatureSet;
use oodkit::io::manifest::{FAR_OOD, TEST_ID, TRAIN_ID};
use oodkit::io::synth::{generate_synthetic, SynthConfig};
use oodkit::metrics::auroc;
use oodkit::scorers::{default_principal_dim, fit_knn, fit_mds, fit_vim, FittedScorer, DEFAULT_K};
use oodkit::softmax::Temperature;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn id_outranks_far_ood_for_every_scorer() {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let train = data.split(TRAIN_ID).unwrap();
    let test = data.split(TEST_ID).unwrap();
    let far = data.split(FAR_OOD).unwrap();

    let scorers = [
        FittedScorer::Vim(fit_vim(train, default_principal_dim(train.dim())).unwrap()),
        FittedScorer::Mds(fit_mds(train, None).unwrap()),
        FittedScorer::Knn(fit_knn(train, DEFAULT_K, true).unwrap()),
        FittedScorer::Msp,
    ];
    for s in &scorers {
        let score = |set: &FeatureSet<f64>| s.score(set, None).unwrap().into_vec();
        let (id, ood) = (score(test), score(far));
        assert_eq!(id.len(), test.len());
        assert!(id.iter().chain(&ood).all(|v| v.is_finite()));
        assert!(
            mean(&id) > mean(&ood),
            "{}: {} <= {}",
            s.kind(),
            mean(&id),
            mean(&ood)
        );
        assert!(auroc(&id, &ood).unwrap() > 0.5, "{}", s.kind());
    }
}

#[test]
fn unit_temperature_matches_uncalibrated_scores() {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let train = data.split(TRAIN_ID).unwrap();
    let test = data.split(TEST_ID).unwrap();
    let vim = FittedScorer::Vim(fit_vim(train, 8).unwrap());
    for s in [&vim, &FittedScorer::Msp] {
        let plain = s.score(test, None).unwrap();
        let one = s.score(test, Some(&Temperature::one())).unwrap();
        assert_eq!(plain, one);
    }
}
