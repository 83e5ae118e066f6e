use pide_backstep::dataset::sample_count;
use pide_backstep::*;
use proptest::prelude::*;

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
        let len: usize = shape.iter().product();
        prop::collection::vec(any::<u64>().prop_map(f64::from_bits), len)
            .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

proptest! {
    /// Any set of tensors, NaN payloads included, survives a round trip bit for bit.
    #[test]
    fn round_trip_is_bit_exact(tensors in prop::collection::vec(tensor_strategy(), 0..6), note in ".{0,20}") {
        let mut c = Container::new();
        for (i, t) in tensors.iter().enumerate() {
            c.insert(format!("t{i}"), t.clone()).unwrap();
        }
        c.meta.insert("note".into(), note.into());
        let bytes = c.to_bytes().unwrap();
        let back = Container::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        for (i, t) in tensors.iter().enumerate() {
            let got = back.get(&format!("t{i}")).unwrap();
            prop_assert_eq!(&got.shape, &t.shape);
            let same = got.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }

    /// Every truncation is rejected with a format error.
    #[test]
    fn truncated_files_are_rejected(cut in 0usize..200) {
        let mut c = Container::new();
        c.insert("x", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let bytes = c.to_bytes().unwrap();
        let cut = cut % bytes.len();
        prop_assert!(matches!(Container::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
    }
}

#[test]
fn corrupted_headers_are_rejected() {
    let mut c = Container::new();
    c.insert("x", Tensor::vector(vec![1.0])).unwrap();
    let bytes = c.to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Container::from_bytes(&bad).is_err());
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(Container::from_bytes(&bad).is_err());
    let mut long = bytes.clone();
    long.push(0);
    assert!(Container::from_bytes(&long).is_err());
    let text = String::from_utf8_lossy(&bytes).replace("\"f64\"", "\"f32\"");
    assert!(Container::from_bytes(text.as_bytes()).is_err());
}

#[test]
fn dataset_files_round_trip_and_match_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::new(4, 99, DatasetKind::Control);
    let a = gen_dataset(&spec, Some(1)).unwrap();
    let b = gen_dataset(&spec, Some(3)).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let path = dir.path().join("control.pdon");
    a.write(&path).unwrap();
    let back = Container::read(&path).unwrap();
    assert_eq!(back, a);
    assert_eq!(sample_count(&back).unwrap(), 4);
    assert_eq!(back.meta["kind"], "control");
    assert_eq!(back.meta["seed"], 99);
    let tau = &back.require("tau").unwrap().data;
    let h = &back.require("h").unwrap().data;
    let eta = &back.require("eta").unwrap().data;
    for k in 0..4 {
        assert!(h[k] < tau[k]);
        assert_eq!(eta[k], tau[k] - h[k]);
    }
}

#[test]
fn dataset_samples_reproduce_from_their_parameters() {
    let spec = DatasetSpec::new(2, 5, DatasetKind::Control);
    let c = gen_dataset(&spec, None).unwrap();
    let k = c.require("K").unwrap();
    for idx in 0..2 {
        let get = |name: &str| c.require(name).unwrap().data[idx];
        let cfg = PlantConfig::new(
            get("tau"),
            get("h"),
            CoefficientModel::chebyshev(get("mu1"), get("mu2"), get("mu3"), 9.0),
        )
        .unwrap();
        let kernels = solve_control_kernels(
            &cfg,
            &eval_coefficients(&cfg, SpatialGrid::training()),
            &SolverOptions::default(),
        )
        .unwrap();
        let stored = &k.data[idx * 51 * 51..(idx + 1) * 51 * 51];
        assert!(kernels.k.iter().zip(stored).all(|(a, b)| a == b));
    }
}
