use woods_bench::{score_set, Fixture};
use woods_core::eval::auroc;

#[test]
fn fixture_batches_have_requested_sizes() {
    let f = Fixture::new(8, 64);
    assert_eq!(f.id.len(), 64);
    assert_eq!(f.wild.len(), 64);
    assert_eq!(f.id_batch(16).len(), 16);
    assert_eq!(f.wild_batch(16).len(), 16);
    assert_eq!(f.model.layer_dims(), vec![2, 8, 8, 2]);
}

#[test]
fn score_set_is_deterministic_and_shifted() {
    let a = score_set(500);
    assert_eq!(a, score_set(500));
    let auc = auroc(&a).unwrap();
    assert!(auc > 0.6 && auc < 0.9, "{auc}");
}
