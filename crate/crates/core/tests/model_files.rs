use limbnet::model::{
    build_model, decode_weights, encode_weights, load_weights, parameter_count, save_weights, ConvSpec,
    ModelConfig, WeightFileError, REFERENCE_PARAMETER_COUNT,
};
use limbnet::nn::Padding;
use limbnet::Rng;
use proptest::prelude::*;

#[test]
fn default_total_near_reference() {
    let total = parameter_count(&ModelConfig::default()).unwrap().total;
    assert_eq!(total, 61_635);
    let rel = (total as f64 - REFERENCE_PARAMETER_COUNT as f64).abs() / REFERENCE_PARAMETER_COUNT as f64;
    assert!(rel <= 0.10);
}

#[test]
fn breakdown_lists_every_block() {
    let text = parameter_count(&ModelConfig::default()).unwrap().to_string();
    for name in ["conv_branches", "attention", "dense_hidden", "output", "total"] {
        assert!(text.contains(name), "{text}");
    }
    assert!(text.contains("61635"));
}

#[test]
fn two_classes_removes_one_output_row() {
    let cfg = ModelConfig {
        n_classes: 2,
        ..ModelConfig::default()
    };
    assert_eq!(parameter_count(&cfg).unwrap().total, 61_635 - 101);
}

#[test]
fn file_errors_are_distinct() {
    let w = build_model(&ModelConfig::default(), &mut Rng::new(4)).unwrap();
    let bytes = encode_weights(&w);

    let mut magic = bytes.clone();
    magic[0] ^= 0xff;
    assert!(matches!(decode_weights(&magic), Err(WeightFileError::BadMagic)));

    let mut version = bytes.clone();
    version[8] = 9;
    assert!(matches!(decode_weights(&version), Err(WeightFileError::UnsupportedVersion(9))));

    assert!(matches!(decode_weights(&bytes[..20]), Err(WeightFileError::Truncated)));
    assert!(matches!(
        decode_weights(&bytes[..bytes.len() - 12]),
        Err(WeightFileError::CountMismatch { .. })
    ));

    let mut body = bytes.clone();
    let mid = body.len() / 2;
    body[mid] ^= 0x10;
    assert!(matches!(decode_weights(&body), Err(WeightFileError::Checksum { .. })));

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_weights(dir.path().join("absent.lbw")), Err(WeightFileError::Io(_))));
    let path = dir.path().join("w.lbw");
    save_weights(&w, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back.config, w.config);
    assert_eq!(back.params, w.params);
}

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (
        prop::collection::vec((prop::sample::select(vec![1usize, 3, 5]), 1usize..6), 1..4),
        1usize..6,
        1usize..3,
        1usize..12,
        2usize..5,
        any::<bool>(),
    )
        .prop_map(|(conv, u, heads, hidden, classes, same)| ModelConfig {
            window_len: 64,
            conv: conv.into_iter().map(|(k, f)| ConvSpec::new(k, f)).collect(),
            attention_dim: u,
            n_attention_heads: heads,
            dense_hidden: hidden,
            n_classes: classes,
            padding: if same { Padding::Same } else { Padding::Valid },
            ..ModelConfig::default()
        })
}

/// Count written out independently of the layout code.
fn closed_form(cfg: &ModelConfig) -> usize {
    let mut len = cfg.window_len;
    let mut c_in = 1;
    let mut conv = 0;
    for s in &cfg.conv {
        conv += s.filters * (c_in * s.kernel + 1);
        if cfg.padding == Padding::Valid {
            len = len + 1 - s.kernel;
        }
        len /= cfg.pool_window;
        c_in = s.filters;
    }
    let d = c_in * len;
    let u = cfg.attention_dim;
    cfg.n_channels * conv
        + cfg.n_attention_heads * (u * d + 2 * u)
        + cfg.dense_hidden * (cfg.n_attention_heads * d + 1)
        + cfg.n_classes * (cfg.dense_hidden + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_matches_closed_form_and_allocation(cfg in config_strategy()) {
        let count = parameter_count(&cfg).unwrap();
        prop_assert_eq!(count.total, closed_form(&cfg));
        let w = build_model(&cfg, &mut Rng::new(0)).unwrap();
        prop_assert_eq!(w.scalar_count(), count.total);
    }

    #[test]
    fn round_trip_any_config(cfg in config_strategy(), seed in any::<u64>()) {
        let w = build_model(&cfg, &mut Rng::new(seed)).unwrap();
        let back = decode_weights(&encode_weights(&w)).unwrap();
        prop_assert_eq!(back.config, w.config);
        prop_assert_eq!(back.params, w.params);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_weights(&bytes);
    }

    #[test]
    fn any_single_byte_flip_is_rejected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let cfg = ModelConfig {
            window_len: 32,
            conv: vec![ConvSpec::new(3, 2)],
            attention_dim: 3,
            dense_hidden: 4,
            ..ModelConfig::default()
        };
        let mut bytes = encode_weights(&build_model(&cfg, &mut Rng::new(1)).unwrap());
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(decode_weights(&bytes).is_err());
    }
}
