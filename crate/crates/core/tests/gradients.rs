//! Analytic gradients of the production networks against central finite
//! differences.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn production_architectures_have_the_expected_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sizes: Vec<Vec<usize>> = common::production_networks(&mut rng)
        .iter()
        .map(|(_, net)| net.sizes())
        .collect();
    assert_eq!(sizes[0], vec![24, 48, 24, 4]);
    assert_eq!(sizes[1], vec![28, 64, 24, 1]);
    assert_eq!(sizes[2], vec![240, 384, 192, 64, 48]);
    assert_eq!(sizes[3], vec![288, 324, 144, 64, 1]);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, net) in common::production_networks(&mut rng) {
        let sample = (net.num_params() > 10_000).then_some(1500);
        let report = common::gradient_check(&net, &mut rng, sample, 1e-5);
        assert!(
            report.checked > 100,
            "{name}: only {} coordinates checked",
            report.checked
        );
        assert!(
            report.max_rel_error < 1e-4,
            "{name}: max relative error {:.3e}",
            report.max_rel_error
        );
    }
}
