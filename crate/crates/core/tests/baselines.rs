use cogdiag::baselines::{
    irt, ncdm, retrain_for_new_learners, BaselineConfig, BaselineModel, IrtConfig, NcdmConfig,
};
use cogdiag::dataio::{synth_irt, synth_qmatrix};
use cogdiag::metrics::spearman;

#[test]
fn irt_prediction_is_the_logistic() {
    let (ds, _) = synth_irt(3, 2, 0, 1.0).unwrap();
    let mut m = irt::TransductiveIrtModel::init(ds.learners().clone(), ds.items().clone(), 0);
    m.theta[0] = 1.5;
    m.a_raw[0] = -2.0;
    m.b[0] = 0.5;
    assert_eq!(m.a(0), 2.0);
    let p = m.predict(0, 0).unwrap();
    assert!((p - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    assert!((p - 0.880_797_077_977_882_3).abs() < 1e-15);
    assert!(m.predict(3, 0).is_err());
}

#[test]
fn irt_recovers_true_abilities() {
    let (ds, truth) = synth_irt(200, 50, 7, 1.0).unwrap();
    let fit = irt::fit(&ds, &IrtConfig::default()).unwrap();
    let rho = spearman(&fit.model.theta, &truth.theta_star).unwrap();
    assert!(rho >= 0.9, "spearman {rho}");
    assert!(fit.log.losses.last().unwrap() < &fit.log.losses[0]);
}

#[test]
fn fits_are_seeded() {
    let (ds, _) = synth_irt(30, 8, 1, 0.9).unwrap();
    let cfg = IrtConfig {
        epochs: 3,
        ..Default::default()
    };
    assert_eq!(
        irt::fit(&ds, &cfg).unwrap().model,
        irt::fit(&ds, &cfg).unwrap().model
    );

    let q = synth_qmatrix(ds.items(), 3, 0.2, 1).unwrap();
    let ncfg = NcdmConfig {
        hidden: 8,
        epochs: 2,
        ..Default::default()
    };
    assert_eq!(
        ncdm::fit(&ds, &q, &ncfg).unwrap().model,
        ncdm::fit(&ds, &q, &ncfg).unwrap().model
    );
}

#[test]
fn ncdm_outputs_are_probabilities() {
    let (ds, _) = synth_irt(20, 6, 2, 1.0).unwrap();
    let q = synth_qmatrix(ds.items(), 2, 0.3, 2).unwrap();
    let fit = ncdm::fit(
        &ds,
        &q,
        &NcdmConfig {
            hidden: 8,
            epochs: 3,
            ..Default::default()
        },
    )
    .unwrap();
    for r in ds.responses() {
        let p = fit.model.predict(r.learner, r.item).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    let traits = fit.model.item_traits(0);
    assert_eq!(traits.len(), 3);
    assert!(traits.iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(fit.model.theta(0).iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn new_learners_require_a_refit() {
    let (ds, _) = synth_irt(20, 6, 3, 1.0).unwrap();
    let cfg = IrtConfig {
        epochs: 2,
        ..Default::default()
    };
    let id0 = ds.items().iter().next().unwrap().to_string();
    let new = vec![(
        "fresh".to_string(),
        vec![(id0, 1u8), ("ghost".to_string(), 0)],
    )];
    let BaselineModel::Irt(m) =
        retrain_for_new_learners(&BaselineConfig::Irt(cfg), &ds, &new, None).unwrap()
    else {
        panic!("expected an irt model");
    };
    assert_eq!(m.theta.len(), 21);
    assert!(m.learner_index.get("fresh").is_some());

    let dup = vec![(ds.learners().iter().next().unwrap().to_string(), vec![])];
    assert!(retrain_for_new_learners(&BaselineConfig::Irt(cfg), &ds, &dup, None).is_err());
    let ncfg = BaselineConfig::Ncdm(NcdmConfig::default());
    assert!(retrain_for_new_learners(&ncfg, &ds, &[], None).is_err());
}
