use ctxguard_core::intent::{cosine, Embedder, EmbeddingVector, HashedEmbedder};
use proptest::prelude::*;

fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..16).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n)))
}

proptest! {
    #[test]
    fn cosine_is_symmetric((u, v) in vec_pair()) {
        let (u, v) = (EmbeddingVector(u), EmbeddingVector(v));
        prop_assert!((cosine(&u, &v).unwrap() - cosine(&v, &u).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant((u, v) in vec_pair(), k in 0.01..100.0f64) {
        let base = cosine(&EmbeddingVector(u.clone()), &EmbeddingVector(v.clone())).unwrap();
        let scaled = cosine(&EmbeddingVector(u.iter().map(|x| x * k).collect()), &EmbeddingVector(v)).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn embedding_dimension_is_fixed(text in "[a-z ]{0,40}") {
        let e = HashedEmbedder::default();
        prop_assert_eq!(e.embed(&text).dim(), e.dimension());
    }
}
