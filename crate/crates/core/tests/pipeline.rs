use proptest::prelude::*;
use woods_core::alm::{calibrate_tau, woods_nn_head_train, woods_train, ConstraintSpec};
use woods_core::baselines::{energy_reg_train, oe_train, BaselineConfig};
use woods_core::data::{gen_gaussian_task, make_wild, split_counts, GaussianTaskSpec, MixtureSpec};
use woods_core::eval::{evaluate, score_all, Scorer};
use woods_core::nnet::{Activation, MlpModel};
use woods_core::train::TrainConfig;

fn small_task() -> (woods_core::LabeledDataset, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let spec = GaussianTaskSpec::two_class(4.0, [0.0, 8.0], 1.0, 300, 600);
    let (id, ood) = gen_gaussian_task(&spec, 3).unwrap();
    let (ood_wild, ood_test) = ood.split_at(400);
    let wild = make_wild(id.features(), ood_wild, &MixtureSpec { pi: 0.5, m: 600, seed: 4 }).unwrap();
    (id, wild.samples().to_vec(), ood_test.to_vec())
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn woods_separates_outliers_on_an_easy_task() {
    let (id, wild, ood_test) = small_task();
    let model = MlpModel::init(&[2, 16, 16, 2], Activation::Relu, 6).unwrap();
    let (warm, tau) = calibrate_tau(&model, &id, &config(10), 10).unwrap();
    let spec = ConstraintSpec { alpha: 0.05, tau, tol: 0.05 };
    let (trained, logs) = woods_train(&warm, &id, &wild, &spec, &config(30)).unwrap();
    assert_eq!(logs.len(), 30);
    let report = evaluate(&trained, &id, &ood_test, Scorer::EnergySigmoid).unwrap();
    assert!(report.auroc > 0.95, "{report:?}");
    assert!(report.accuracy > 0.95, "{report:?}");
}

#[test]
fn saved_model_scores_identically() {
    let (id, wild, _) = small_task();
    let model = MlpModel::init(&[2, 8, 2], Activation::Tanh, 1).unwrap();
    let spec = ConstraintSpec { alpha: 0.1, tau: 1.0, tol: 0.05 };
    let (trained, _) = woods_train(&model, &id, &wild, &spec, &config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    trained.save(&path).unwrap();
    let loaded = MlpModel::load(&path).unwrap();
    for scorer in [Scorer::EnergySigmoid, Scorer::Energy, Scorer::Msp] {
        assert_eq!(
            score_all(&trained, scorer, &wild).unwrap(),
            score_all(&loaded, scorer, &wild).unwrap()
        );
    }
}

#[test]
fn every_method_trains_to_finite_parameters() {
    let (id, wild, _) = small_task();
    let model = MlpModel::init_with_head(&[2, 8, 2], Activation::Relu, 16, 2).unwrap();
    let spec = ConstraintSpec { alpha: 0.05, tau: 1.0, tol: 0.05 };
    let runs = [
        woods_train(&model, &id, &wild, &spec, &config(2)).unwrap().0,
        woods_nn_head_train(&model, &id, &wild, &spec, &config(2)).unwrap().0,
        oe_train(&model, &id, &wild, &BaselineConfig::oe(0.5), &config(2)).unwrap().0,
        energy_reg_train(&model, &id, &wild, &BaselineConfig::energy_reg(0.1, -25.0, -7.0), &config(2))
            .unwrap()
            .0,
    ];
    for trained in runs {
        assert!(trained.params().first_non_finite().is_none());
    }
}

proptest! {
    #[test]
    fn split_counts_partition_indices(sizes in prop::collection::vec(0usize..40, 1..5), seed in any::<u64>()) {
        let n: usize = sizes.iter().sum();
        let parts = split_counts(n, &sizes, seed).unwrap();
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        prop_assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), sizes);
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn wild_samples_come_from_their_tagged_pool(pi in 0.01f64..=1.0, m in 1usize..200, seed in any::<u64>()) {
        let id_pool: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ood_pool: Vec<Vec<f64>> = (0..10).map(|i| vec![-1.0 - i as f64]).collect();
        let wild = make_wild(&id_pool, &ood_pool, &MixtureSpec { pi, m, seed }).unwrap();
        prop_assert_eq!(wild.len(), m);
        for (x, p) in wild.samples().iter().zip(wild.provenance().unwrap()) {
            prop_assert_eq!(x[0] < 0.0, *p == woods_core::Provenance::Out);
        }
    }
}
