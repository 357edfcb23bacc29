use std::sync::Arc;

use cellda::io::{model_from_json, model_to_json, ModelFile, SCHEMA_VERSION};
use cellda::sim::{generate, Contamination, Correlation, Scenario};
use cellda_core::classifier::{predict_all, train_celllda, train_cellqda};
use cellda_core::{DaConfig, Mode};

#[test]
fn round_trip_predicts_identically() {
    let s = Scenario::new(5, 80, Mode::Qda, Correlation::Low, Contamination::Mixed, 6.0, 2).with_test(Contamination::Mixed);
    let g = generate(&s).unwrap();
    let cfg = DaConfig::default();
    for model in [train_cellqda(&g.train, &cfg).unwrap(), train_celllda(&g.train, &cfg).unwrap()] {
        let text = model_to_json(&model);
        let back = model_from_json(&text).unwrap();
        assert_eq!(model_to_json(&back), text);
        let a = predict_all(&g.test, &model).unwrap();
        let b = predict_all(&g.test, &back).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.flags, y.flags);
            assert_eq!(x.delta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.delta.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        if model.mode() == Mode::Lda {
            let first = back.class(1).sigma_arc();
            assert!(back.classes().iter().all(|c| Arc::ptr_eq(first, c.sigma_arc())));
        }
    }
}

#[test]
fn rejects_foreign_files() {
    let s = Scenario::new(3, 40, Mode::Lda, Correlation::High, Contamination::None, 0.0, 3);
    let g = generate(&s).unwrap();
    let model = train_celllda(&g.train, &DaConfig::default()).unwrap();
    let file = ModelFile::from_model(&model);
    assert_eq!(file.schema_version, SCHEMA_VERSION);
    assert_eq!(file.parameter_scale, "standardized");

    let mut wrong = file.clone();
    wrong.schema_version += 1;
    assert!(wrong.to_model().is_err());
    let mut wrong = file.clone();
    wrong.classes[1].sigma[0] += 1.0;
    assert!(wrong.to_model().is_err(), "LDA classes must share one scatter");
    let mut wrong = file;
    wrong.classes[0].mu.pop();
    assert!(wrong.to_model().is_err());
    assert!(model_from_json("{").is_err());
}
