//! Property tests over randomly shaped inputs: the encoder/decoder pair, the
//! container roundtrips, and the loss identities hold for whatever proptest
//! throws at them.

use proptest::prelude::*;

use ronorm::container::{read_blob_bytes, write_blob_bytes};
use ronorm::mesh::TriMesh;
use ronorm::metrics::{relative_l2, ZeroNormPolicy};
use ronorm::reduction::{compute_pod_basis, decode_unequal, encode_unequal, ReduceAxis, SnapshotTensor};
use ronorm::spectral::fourier_time_basis;

fn tensor_strategy() -> impl Strategy<Value = SnapshotTensor> {
    (1usize..4, 1usize..6, 2usize..10, 1usize..3).prop_flat_map(|(n, n_x, n_t, c)| {
        proptest::collection::vec(-10.0..10.0f64, n * n_x * n_t * c)
            .prop_map(move |data| SnapshotTensor::new(data, n, n_x, n_t, c, 0.1).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Full-rank encode/decode along either axis reconstructs the tensor.
    #[test]
    fn full_rank_factorization_roundtrips(snap in tensor_strategy(), time_axis in any::<bool>()) {
        let axis = if time_axis { ReduceAxis::Time } else { ReduceAxis::Space };
        let k = snap.axis_len(axis);
        let basis = compute_pod_basis(&snap, axis, k).unwrap();
        let wf = encode_unequal(&snap, &basis, axis).unwrap();
        let back = decode_unequal(&wf, &basis).unwrap();
        for (a, b) in snap.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        // and encode is a left inverse of decode on the weight space
        let wf2 = encode_unequal(&back, &basis, axis).unwrap();
        for (a, b) in wf.data().iter().zip(wf2.data()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    /// Truncated Fourier reconstruction error never increases with more modes.
    #[test]
    fn fourier_truncation_error_is_monotone(snap in tensor_strategy()) {
        let n_t = snap.n_t();
        let full = fourier_time_basis(n_t, n_t).unwrap();
        let mut prev = f64::INFINITY;
        for d in 1..=n_t {
            let basis = full.truncate(d).unwrap();
            let wf = encode_unequal(&snap, &basis, ReduceAxis::Time).unwrap();
            let back = decode_unequal(&wf, &basis).unwrap();
            let err: f64 = snap
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            prop_assert!(err.sqrt() <= prev + 1e-9);
            prev = err.sqrt();
        }
    }

    /// Blob container writes parse back to the same header and blobs.
    #[test]
    fn blob_container_roundtrips(
        k in 0usize..20,
        a in proptest::collection::vec(-1e12..1e12f64, 0..50),
        b in proptest::collection::vec(-1.0..1.0f64, 0..50),
    ) {
        #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
        struct H { k: usize }
        let bytes = write_blob_bytes(&H { k }, &[("a", &a), ("b", &b)]).unwrap();
        let (h, blobs): (H, Vec<(String, Vec<f64>)>) = read_blob_bytes(&bytes).unwrap();
        prop_assert_eq!(h, H { k });
        prop_assert_eq!(&blobs[0].1, &a);
        prop_assert_eq!(&blobs[1].1, &b);
    }

    /// Mesh text serialization roundtrips through the parser.
    #[test]
    fn mesh_text_roundtrips(n in 2usize..6) {
        let mesh = TriMesh::rectangle_grid(n, n, 1.0, 2.0);
        let back = TriMesh::parse(&mesh.to_text()).unwrap();
        prop_assert_eq!(back.checksum(), mesh.checksum());
    }

    /// The relative L2 metric is invariant to a common nonzero scale.
    #[test]
    fn relative_l2_scale_invariance(
        truth in proptest::collection::vec(0.1..5.0f64, 4..24),
        noise in proptest::collection::vec(-1.0..1.0f64, 4..24),
        gamma in prop_oneof![(-100.0..-0.1f64), (0.1..100.0f64)],
    ) {
        let len = truth.len().min(noise.len());
        let truth = &truth[..len];
        let pred: Vec<f64> = truth.iter().zip(&noise[..len]).map(|(t, n)| t + n).collect();
        let base = relative_l2(&pred, truth, 1, ZeroNormPolicy::Error).unwrap().mean;
        let pred_s: Vec<f64> = pred.iter().map(|v| gamma * v).collect();
        let truth_s: Vec<f64> = truth.iter().map(|v| gamma * v).collect();
        let scaled = relative_l2(&pred_s, &truth_s, 1, ZeroNormPolicy::Error).unwrap().mean;
        prop_assert!((base - scaled).abs() <= 1e-12 * (1.0 + base));
    }
}
