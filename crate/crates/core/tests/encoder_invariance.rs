//! Set-encoder invariances: point order and k-fold duplication.

mod common;

use common::{invariance_errors, invariance_model};
use dct_core::rng::stream;
use dct_core::sample::SampleSet;
use proptest::prelude::*;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn permutation_and_duplication_leave_embeddings_unchanged() {
    for normalize in [false, true] {
        let (perm, dup, exact) = invariance_errors(&invariance_model(normalize));
        assert!(perm <= 1e-12, "permutation error {perm:e}");
        assert!(dup <= 1e-12, "duplication error {dup:e}");
        assert!(exact, "canonical order is not bit-exact");
    }
}

#[test]
fn different_sets_get_different_embeddings() {
    let m = invariance_model(false);
    let a = SampleSet::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
    let b = a.shifted(&[3.0, -1.0, 0.5]).unwrap();
    assert!(max_diff(m.embed(&a).unwrap().as_slice(), m.embed(&b).unwrap().as_slice()) > 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_reordering_is_invisible(data in prop::collection::vec(-4.0f64..4.0, 3..60), seed in 0u64..1000) {
        let n = data.len() / 3;
        let s = SampleSet::from_flat(n, 3, data[..3 * n].to_vec()).unwrap();
        let m = invariance_model(true);
        let z = m.embed(&s).unwrap();
        let p = s.permuted(&mut stream(seed, "prop-perm", 0));
        prop_assert!(max_diff(z.as_slice(), m.embed(&p).unwrap().as_slice()) <= 1e-12);
    }
}
