use hda_core::entropy::{
    loss_rate, range_decode, range_encode, Bitstream, FactorizedDensity, FrequencyTable,
    SUPPORT_BOUND,
};
use hda_core::nn::{finite_difference_check, ParamStore, Tape, Tensor};
use hda_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn skewed_table(offset: i32, n: usize, decay: f64) -> FrequencyTable {
    let p: Vec<f64> = (0..n).map(|i| decay.powi(i as i32)).collect();
    FrequencyTable::from_probabilities(offset, &p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn range_coder_round_trips(
        channels in prop::collection::vec(prop::collection::vec(-6i32..6, 0..40), 1..4),
        decay in 0.05f64..1.0,
    ) {
        let tables = vec![skewed_table(-6, 12, decay); channels.len()];
        let stream = range_encode(&channels, &tables).unwrap();
        let parsed = Bitstream::from_bytes(&stream.to_bytes()).unwrap();
        prop_assert_eq!(range_decode(&parsed, &tables).unwrap(), channels);
    }
}

#[test]
fn coded_length_tracks_cross_entropy() {
    let mut rng = seeded(11);
    for decay in [0.3, 0.6, 0.9] {
        let t = skewed_table(-20, 41, decay);
        let syms: Vec<i32> = (0..20_000).map(|_| rng.random_range(-20..=20)).collect();
        let s = range_encode(std::slice::from_ref(&syms), std::slice::from_ref(&t)).unwrap();
        let ideal = t.cross_entropy_bits(&syms).unwrap();
        let coded = (s.payload.len() * 8) as f64;
        assert!(coded <= ideal * 1.02 + 32.0, "{coded} vs {ideal}");
    }
}

#[test]
fn rate_gradient_wrt_density_parameters() {
    let d = FactorizedDensity::new(2);
    let mut store = ParamStore::new();
    d.init(&mut store, &mut seeded(4));
    let mut rng = seeded(5);
    let values = Tensor::new(
        &[2, 2, 2, 2],
        (0..16).map(|_| rng.random_range(-3.0..3.0)).collect(),
    )
    .unwrap();
    for name in [
        "density.matrix0",
        "density.matrix2",
        "density.bias1",
        "density.factor0",
        "density.bias3",
    ] {
        let p = store.get(name).unwrap().clone();
        let err = finite_difference_check(
            |t: &mut Tape, v| {
                let mut bind = store.bind(t, |_| false);
                bind.insert(name, v);
                let x = t.constant(values.clone());
                loss_rate(t, &bind, &d, x)
            },
            &p,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-3, "{name}: {err}");
    }
    let err = finite_difference_check(
        |t: &mut Tape, x| {
            let bind = store.bind(t, |_| false);
            loss_rate(t, &bind, &d, x)
        },
        &values,
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-3, "values: {err}");
}

#[test]
fn bin_probabilities_are_floored_and_positive() {
    let d = FactorizedDensity::new(1);
    let mut store = ParamStore::new();
    d.init(&mut store, &mut seeded(6));
    let ev = d.evaluator(&store).unwrap();
    for b in -SUPPORT_BOUND..=SUPPORT_BOUND {
        assert!(ev.bin_probability(b, 0) > 0.0);
    }
    assert_eq!(ev.bin_probability(SUPPORT_BOUND + 1, 0), 0.0);
    let tables = ev.tables().unwrap();
    assert_eq!(tables[0].min_symbol(), -SUPPORT_BOUND);
    assert_eq!(tables[0].max_symbol(), SUPPORT_BOUND);
}
