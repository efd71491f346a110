use hdr_snn::datapipe::{
    encode_windows, filter_label_bleed, nearest_centroid_accuracy, segment, split, synth_emg, LabeledWindow,
    SynthSpec, WindowSource, WINDOW_MS,
};
use hdr_snn::encoders::{poisson_trains, AdmParams, Encoder};
use hdr_snn::harness::{synthetic_corpus, train_and_score, AblationConfig, TrainSettings};
use hdr_snn::learning::{predict, train, ClassMap, TraceParams};
use hdr_snn::topology::{build_network, NetworkConfig};

#[test]
fn synthetic_classes_are_separable_by_rms_centroids() {
    let spec = SynthSpec::default();
    let rec = synth_emg(&spec).unwrap();
    let windows = segment(&rec, WINDOW_MS, 0, 0, 3).unwrap();
    let windows = filter_label_bleed(windows, &rec).unwrap();
    let (train_set, test_set) = split(&windows, 0.8, 3).unwrap();
    let acc = nearest_centroid_accuracy(&rec, &train_set, &test_set);
    assert!(acc >= 0.9, "nearest-centroid accuracy {acc}");
}

#[test]
fn default_corpus_is_balanced_with_forty_windows_per_class() {
    let windows = synthetic_corpus(&SynthSpec::default(), &Encoder::Adm(AdmParams::default()), 1).unwrap();
    let mut counts = [0usize; 4];
    for w in &windows {
        counts[w.label] += 1;
        assert_eq!(w.spikes.n_channels(), 16);
        assert_eq!(w.spikes.duration_us(), 200_000.0);
    }
    assert!(counts.iter().all(|&c| c == counts[0] && c >= 40), "{counts:?}");
}

#[test]
fn encoded_windows_match_whole_recording_encoding() {
    let spec = SynthSpec {
        trials_per_class: 1,
        ..SynthSpec::default()
    };
    let rec = synth_emg(&spec).unwrap();
    let raw = segment(&rec, WINDOW_MS, 0, 0, 1).unwrap();
    let encoder = Encoder::Adm(AdmParams::default());
    let windows = encode_windows(&rec, &raw, &encoder).unwrap();
    let whole = encoder.encode(&rec).unwrap();
    for (r, w) in raw.iter().zip(&windows) {
        let t0 = r.source.offset as f64 / rec.sample_rate * 1e6;
        let expect = whole.slice(t0, t0 + 200_000.0);
        assert_eq!(w.spikes.len(), expect.len());
        for (a, b) in w.spikes.events().iter().zip(expect.events()) {
            assert_eq!(a.channel, b.channel);
            assert!((a.time_us - b.time_us).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }
}

fn poisson_window(rates: &[f64], label: usize, seed: u64) -> LabeledWindow {
    LabeledWindow {
        spikes: poisson_trains(rates, 200_000.0, seed).unwrap(),
        label,
        source: WindowSource {
            subject: 0,
            session: 0,
            offset: seed as usize,
        },
    }
}

#[test]
fn repeated_window_training_converges() {
    // Without background noise the repeated window is a fully stationary input.
    let cfg = NetworkConfig {
        noise_rate: 0.0,
        ..NetworkConfig::default()
    };
    let net = build_network(&cfg).unwrap();
    let window = poisson_window(&[250.0; 16], 1, 5);
    let out = train(&net, &[window], 120, &TraceParams::default(), &ClassMap::four_class(), 2).unwrap();
    let m = &out.epoch_mean_weights;
    assert_eq!(m.len(), 121);
    let last = (m[120] - m[119]).abs();
    assert!(last <= 1e-4, "successive-epoch change {last}, sequence {m:?}");
}

#[test]
fn training_is_deterministic_and_bounded() {
    let cfg = AblationConfig::FULL.apply(&NetworkConfig::default());
    let net = build_network(&cfg).unwrap();
    let data: Vec<LabeledWindow> = (0..8)
        .map(|k| {
            let mut rates = [50.0; 16];
            rates[4 * (k % 4)] = 3000.0;
            rates[4 * (k % 4) + 1] = 3000.0;
            poisson_window(&rates, k % 4, k as u64)
        })
        .collect();
    let params = TraceParams::default();
    let a = train(&net, &data, 2, &params, &ClassMap::four_class(), 9).unwrap();
    let b = train(&net, &data, 2, &params, &ClassMap::four_class(), 9).unwrap();
    assert_eq!(a, b);
    for snap in &a.epoch_snapshots {
        assert!(snap.data.iter().all(|w| (0.0..=params.w_max).contains(w)));
    }
    let p1 = predict(&net, &a.weights, &data[0], &ClassMap::four_class(), 4).unwrap();
    let p2 = predict(&net, &a.weights, &data[0], &ClassMap::four_class(), 4).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn confusion_rows_sum_to_test_counts() {
    let windows = synthetic_corpus(
        &SynthSpec {
            trials_per_class: 2,
            ..SynthSpec::default()
        },
        &Encoder::Adm(AdmParams::default()),
        1,
    )
    .unwrap();
    let (train_set, test_set) = split(&windows, 0.8, 1).unwrap();
    let settings = TrainSettings {
        epochs: 1,
        ..TrainSettings::default()
    };
    let m = train_and_score(&NetworkConfig::default(), &train_set, &test_set, &settings, 1).unwrap();
    for (c, row) in m.confusion.iter().enumerate() {
        let n = test_set.iter().filter(|w| w.label == c).count();
        assert_eq!(row.iter().sum::<usize>(), n);
    }
}
