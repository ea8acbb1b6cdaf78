use proptest::prelude::*;
use sea_core::perturb::{self, PerturbKind, PerturbSpec};
use sea_core::synth::{self, IsiTaskParams, Task};
use sea_core::{bin_sample, read_ndjson, spike_counts, write_ndjson, SpikeDataset, SpikeTrainSample, Variant};

const T: f64 = 1000.0;

/// Samples whose times sit on a 1/1024 ms grid so reflections are exact.
fn grid_sample() -> impl Strategy<Value = SpikeTrainSample> {
    (1usize..6, 0usize..3).prop_flat_map(|(n, label)| {
        prop::collection::vec(prop::collection::vec(0u32..1_024_000, 0..12), n).prop_map(move |rows| {
            let neurons = rows
                .into_iter()
                .map(|r| r.into_iter().map(|k| f64::from(k) / 1024.0).collect())
                .collect();
            SpikeTrainSample::from_unsorted(neurons, label, T).unwrap()
        })
    })
}

fn any_sample() -> impl Strategy<Value = SpikeTrainSample> {
    (1usize..6).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0.0..T, 0..12), n)
            .prop_map(|rows| SpikeTrainSample::from_unsorted(rows, 0, T).unwrap())
    })
}

fn isi_multiset(train: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = train.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    d
}

proptest! {
    #[test]
    fn ndjson_round_trip_is_identity(samples in prop::collection::vec(any_sample().prop_filter("n", |s| s.num_neurons() == 3), 0..5)) {
        let ds = SpikeDataset::new(samples, 3, 1, Variant::Whole, vec![]).unwrap();
        let mut buf = Vec::new();
        write_ndjson(&ds, &mut buf).unwrap();
        prop_assert_eq!(read_ndjson(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn binning_keeps_shape_and_never_adds(s in any_sample(), dt in 0.1f64..50.0) {
        let g = bin_sample(&s, dt).unwrap();
        prop_assert_eq!(g.num_neurons(), s.num_neurons());
        prop_assert!(g.count_ones() <= s.total_spikes());
        for (i, train) in s.neurons().iter().enumerate() {
            for &t in train {
                let k = ((t / dt).floor() as usize).min(g.num_steps() - 1);
                prop_assert!(g.get(i, k));
            }
        }
    }

    #[test]
    fn count_preserving_operators(s in any_sample(), f in 0.0f64..=1.0, sigma in 0.0f64..100.0, seed in any::<u64>()) {
        let c = spike_counts(&s);
        prop_assert_eq!(spike_counts(&perturb::random_replace(&s, f, seed).unwrap()), c.clone());
        prop_assert_eq!(spike_counts(&perturb::jitter_per_spike(&s, sigma, seed).unwrap()), c.clone());
        prop_assert_eq!(spike_counts(&perturb::jitter_per_neuron(&s, sigma, seed).unwrap()), c.clone());
        prop_assert_eq!(spike_counts(&perturb::time_reverse(&s)), c);
    }

    #[test]
    fn outputs_stay_in_window(s in any_sample(), sigma in 0.0f64..500.0, seed in any::<u64>()) {
        for out in [
            perturb::jitter_per_spike(&s, sigma, seed).unwrap(),
            perturb::jitter_per_neuron(&s, sigma, seed).unwrap(),
            perturb::random_replace(&s, 1.0, seed).unwrap(),
            perturb::time_reverse(&s),
        ] {
            // the constructor re-validates [0, T) and sortedness
            prop_assert!(SpikeTrainSample::new(out.neurons().to_vec(), 0, T).is_ok());
        }
    }

    #[test]
    fn reversal_is_an_involution(s in grid_sample()) {
        prop_assert_eq!(perturb::time_reverse(&perturb::time_reverse(&s)), s);
    }

    #[test]
    fn reversal_preserves_isi_multisets(s in grid_sample()) {
        let r = perturb::time_reverse(&s);
        for (a, b) in s.neurons().iter().zip(r.neurons()) {
            prop_assert_eq!(isi_multiset(a), isi_multiset(b));
        }
    }

    #[test]
    fn unclipped_neuron_jitter_preserves_isis(s in grid_sample(), seed in any::<u64>()) {
        let out = perturb::jitter_per_neuron(&s, 5.0, seed).unwrap();
        for (a, b) in s.neurons().iter().zip(out.neurons()) {
            let clipped = b.iter().any(|&t| t == 0.0 || t >= T - 1e-3);
            if !clipped {
                let (x, y) = (isi_multiset(a), isi_multiset(b));
                for (u, v) in x.iter().zip(&y) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
        }
    }
}

/// Real-valued times: reversal twice is the identity up to rounding.
#[test]
fn reversal_round_trip_within_rounding() {
    let s = SpikeTrainSample::new(vec![vec![0.1, 0.7, 333.3], vec![12.345678]], 0, T).unwrap();
    let back = perturb::time_reverse(&perturb::time_reverse(&s));
    for (a, b) in s.neurons().iter().zip(back.neurons()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn deletion_survivors_within_three_sigma() {
    let train: Vec<f64> = (0..10_000).map(|k| k as f64 * 0.1).collect();
    let s = SpikeTrainSample::new(vec![train], 0, T).unwrap();
    let kept = perturb::delete_spikes(&s, 0.3, 17).unwrap().total_spikes() as f64;
    let sd = (10_000.0f64 * 0.3 * 0.7).sqrt();
    assert!((kept - 7000.0).abs() <= 3.0 * sd, "{kept}");
}

#[test]
fn generated_isi_round_trip_keeps_counts_and_times() {
    let ds = synth::gen_split(&Task::Isi(IsiTaskParams::default()), "train", 1000, 5).unwrap();
    let mut buf = Vec::new();
    write_ndjson(&ds, &mut buf).unwrap();
    let back = read_ndjson(buf.as_slice()).unwrap();
    for (a, b) in ds.samples().iter().zip(back.samples()) {
        assert_eq!(spike_counts(a), spike_counts(b));
        assert_eq!(a.neurons(), b.neurons());
    }
    assert_eq!(back.transform_log(), ds.transform_log());
}

#[test]
fn dataset_level_apply_matches_per_sample_seeds() {
    let ds = synth::gen_split(&Task::Isi(IsiTaskParams::default()), "test", 20, 5).unwrap();
    let spec = PerturbSpec::new(PerturbKind::Delete { p: 0.5 }, 77);
    let out = perturb::apply(&spec, &ds).unwrap();
    for (m, (a, b)) in ds.samples().iter().zip(out.samples()).enumerate() {
        assert_eq!(&spec.kind.apply_sample(a, spec.sample_seed(m)).unwrap(), b);
    }
}
