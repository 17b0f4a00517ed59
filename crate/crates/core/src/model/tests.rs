use super::*;
use crate::codec::GraphemeId;
use crate::tensor::Graph;

fn tiny_cfg() -> RecognizerConfig {
    RecognizerConfig {
        feature_dim: 16,
        seq_len: 6,
        encoder_layers: 1,
        num_heads: 4,
        image_h: 8,
        image_w: 16,
        ..RecognizerConfig::default()
    }
}

fn zero_param(model: &mut Recognizer<f64>, name: &str) {
    let pos = model.param_names().iter().position(|n| n == name).unwrap_or_else(|| {
        panic!("no parameter named {name}");
    });
    let shape = model.param_tensors()[pos].shape().to_vec();
    model.param_tensors_mut()[pos] = Tensor::zeros(&shape);
}

fn set_param(model: &mut Recognizer<f64>, name: &str, tensor: Tensor<f64>) {
    let pos = model.param_names().iter().position(|n| n == name).expect("param exists");
    assert_eq!(model.param_tensors()[pos].shape(), tensor.shape());
    model.param_tensors_mut()[pos] = tensor;
}

#[test]
fn config_validation() {
    assert!(RecognizerConfig::default().validate().is_ok());
    let bad = RecognizerConfig { seq_len: 7, ..RecognizerConfig::default() };
    assert!(bad.validate().is_err());
    let bad = RecognizerConfig { image_h: 30, ..RecognizerConfig::default() };
    assert!(bad.validate().is_err());
    let bad = RecognizerConfig { num_heads: 5, ..RecognizerConfig::default() };
    assert!(bad.validate().is_err());
    let bad = RecognizerConfig { class_count: 51, ..RecognizerConfig::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn encode_shape_contract_tiny() {
    let cfg = tiny_cfg();
    let model = Recognizer::<f64>::new_grapheme(cfg, 1).unwrap();
    let image = Tensor::zeros(&[1, 8, 16]);
    let mut g = Graph::new();
    let fe = model.encode(&mut g, &image).unwrap();
    assert_eq!(g.value(fe).shape(), &[2, 4, 16]);
    // all-zero image stays finite
    assert!(g.value(fe).all_finite());
}

#[test]
fn encode_without_transformer_keeps_shape() {
    let cfg = RecognizerConfig { use_transformer: false, ..tiny_cfg() };
    let model = Recognizer::<f64>::new_grapheme(cfg, 1).unwrap();
    let image = Tensor::from_fn(&[1, 8, 16], |i| (i % 11) as f64 / 11.0);
    let mut g = Graph::new();
    let fe = model.encode(&mut g, &image).unwrap();
    assert_eq!(g.value(fe).shape(), &[2, 4, 16]);
}

#[test]
fn forward_shape_chain() {
    let cfg = tiny_cfg();
    let model = Recognizer::<f64>::new_grapheme(cfg, 3).unwrap();
    let image = Tensor::from_fn(&[1, 8, 16], |i| ((i * 7) % 13) as f64 / 13.0);
    let mut g = Graph::new();
    let nodes = model.forward(&mut g, &image).unwrap();
    assert_eq!(g.value(nodes.feature_map).shape(), &[2, 4, 16]);
    assert_eq!(g.value(nodes.decoder_features).shape(), &[6, 16]);
    assert_eq!(g.value(nodes.attention).shape(), &[6, 2, 4]);
    assert_eq!(g.value(nodes.logits).shape(), &[6, 53]);
    // attention rows are a softmax: nonnegative, sum to 1
    let attn = g.value(nodes.attention);
    for row in attn.data().chunks_exact(8) {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn forward_rejects_wrong_image_shape() {
    let model = Recognizer::<f64>::new_grapheme(tiny_cfg(), 3).unwrap();
    let mut g = Graph::new();
    let image = Tensor::zeros(&[1, 8, 12]);
    assert!(matches!(
        model.forward(&mut g, &image),
        Err(ModelError::BadImageShape { .. })
    ));
}

#[test]
fn constant_keys_give_constant_decoder_rows() {
    // zero weights everywhere, then constant channel biases: every key row
    // becomes the same vector, so each decoder row (a convex combination)
    // must equal it.
    let cfg = RecognizerConfig { use_transformer: false, ..tiny_cfg() };
    let mut model = Recognizer::<f64>::new_grapheme(cfg, 5).unwrap();
    for name in model.param_names().to_vec() {
        zero_param(&mut model, &name);
    }
    let bias = Tensor::from_fn(&[16], |c| 0.1 * c as f64 - 0.4);
    set_param(&mut model, "stem.conv3.b", bias.clone());
    let gamma = Tensor::from_fn(&[16], |c| 0.05 * c as f64);
    set_param(&mut model, "unet.up.b", gamma.clone());

    let image = Tensor::from_fn(&[1, 8, 16], |i| (i % 5) as f64 / 5.0);
    let mut g = Graph::new();
    let nodes = model.forward(&mut g, &image).unwrap();
    let fd = g.value(nodes.decoder_features);
    for row in fd.data().chunks_exact(16) {
        for (c, &v) in row.iter().enumerate() {
            let expected = bias.data()[c].max(0.0) + gamma.data()[c];
            assert!((v - expected).abs() < 1e-9, "row value {v} vs {expected}");
        }
    }
}

#[test]
fn zero_head_weights_mean_bias_logits_and_uniform_loss() {
    let mut model = Recognizer::<f64>::new_grapheme(tiny_cfg(), 7).unwrap();
    zero_param(&mut model, "head.w");
    let bias = Tensor::from_fn(&[53], |i| (i as f64 * 0.37).sin());
    set_param(&mut model, "head.b", bias.clone());
    let image = Tensor::from_fn(&[1, 8, 16], |i| (i % 3) as f64 / 3.0);
    let mut g = Graph::new();
    let nodes = model.forward(&mut g, &image).unwrap();
    for row in g.value(nodes.logits).data().chunks_exact(53) {
        for (a, b) in row.iter().zip(bias.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    // uniform logits -> loss = ln(C + 1)
    zero_param(&mut model, "head.b");
    let mut g = Graph::new();
    let nodes = model.forward(&mut g, &image).unwrap();
    let loss = model.loss(&mut g, nodes.logits, "가").unwrap();
    assert!((g.value(loss).item() - 53f64.ln()).abs() < 1e-9);
}

#[test]
fn perfect_logits_drive_loss_to_zero() {
    let model = Recognizer::<f64>::new_grapheme(tiny_cfg(), 7).unwrap();
    let targets = model.targets("한").unwrap();
    let mut g = Graph::new();
    let logits = g.constant(Tensor::from_fn(&[6, 53], |i| {
        let (row, col) = (i / 53, i % 53);
        if col == targets[row] { 40.0 } else { 0.0 }
    }));
    let loss = model.loss_from_targets(&mut g, logits, &targets).unwrap();
    assert!(g.value(loss).item() < 1e-12);
}

#[test]
fn masked_loss_covers_only_the_label_prefix() {
    let cfg = RecognizerConfig { mask_pad: true, ..tiny_cfg() };
    let model = Recognizer::<f64>::new_grapheme(cfg, 7).unwrap();
    let targets = model.targets("가").unwrap(); // 3 real slots + 3 PAD
    let logits = Tensor::from_fn(&[6, 53], |i| ((i * 31 % 17) as f64) * 0.2);
    let mut g = Graph::new();
    let node = g.constant(logits.clone());
    let masked = model.loss_from_targets(&mut g, node, &targets).unwrap();
    // reference: plain mean CE over the first three rows only
    let mut g2 = Graph::new();
    let prefix = g2.constant(Tensor::new(vec![3, 53], logits.data()[..3 * 53].to_vec()).unwrap());
    let reference = g2.cross_entropy(prefix, &targets[..3], None).unwrap();
    assert!((g.value(masked).item() - g2.value(reference).item()).abs() < 1e-12);
}

#[test]
fn argmax_ties_break_toward_lowest_class() {
    let model = Recognizer::<f64>::new_grapheme(tiny_cfg(), 7).unwrap();
    let logits = Tensor::zeros(&[6, 53]);
    assert_eq!(model.argmax_classes(&logits), vec![0; 6]);
    let mut spiked = Tensor::zeros(&[6, 53]);
    spiked.data_mut()[53 + 9] = 3.0; // row 1, class 9
    assert_eq!(model.argmax_classes(&spiked)[1], 9);
}

#[test]
fn decode_classes_merges_and_flags() {
    let model = Recognizer::<f64>::new_grapheme(tiny_cfg(), 7).unwrap();
    let g = |ch| GraphemeId::from_jamo(ch).unwrap().index();
    let pad = codec::PAD_CLASS;
    let (text, malformed) =
        model.decode_classes(&[g('ㄱ'), g('ㅏ'), GraphemeId::NO_FINAL.index(), pad, pad, pad]);
    assert_eq!(text, "가");
    assert!(!malformed);
    let (text, malformed) = model.decode_classes(&[g('ㅎ'), g('ㅏ'), g('ㄴ'), pad, pad, pad]);
    assert_eq!(text, "한");
    assert!(!malformed);
    // PAD inside a triple is malformed -> empty decode
    let (text, malformed) = model.decode_classes(&[g('ㄱ'), pad, pad, pad, pad, pad]);
    assert_eq!(text, "");
    assert!(malformed);
}

#[test]
fn baseline_shapes_and_charset_containment() {
    let charset: Vec<char> = (0..100)
        .map(|i| codec::decompose_char('가').map(|_| i).unwrap())
        .map(|i| char::from_u32(0xAC00 + i * 28).unwrap())
        .collect();
    let cfg = RecognizerConfig { seq_len: 12, ..tiny_cfg() };
    let model = Recognizer::<f64>::new_character_baseline(cfg, &charset, 2).unwrap();
    let image = Tensor::from_fn(&[1, 8, 16], |i| (i % 7) as f64 / 7.0);
    let mut g = Graph::new();
    let nodes = model.forward(&mut g, &image).unwrap();
    // L/3 query rows, |charset| + 1 classes
    assert_eq!(g.value(nodes.logits).shape(), &[4, 101]);
    assert_eq!(g.value(nodes.attention).shape(), &[4, 2, 4]);
    // whatever the input, decoded text only contains charset members
    let decoded = model.recognize(&image).unwrap();
    assert!(decoded.text.chars().all(|c| charset.contains(&c)));
}

#[test]
fn baseline_rejects_bad_charsets_and_unknown_characters() {
    let cfg = tiny_cfg();
    assert!(matches!(
        Recognizer::<f64>::new_character_baseline(cfg, &[], 0),
        Err(ModelError::EmptyCharset)
    ));
    assert!(matches!(
        Recognizer::<f64>::new_character_baseline(cfg, &['가', '나', '가'], 0),
        Err(ModelError::DuplicateCharset('가'))
    ));
    let model = Recognizer::<f64>::new_character_baseline(cfg, &['가', '나'], 0).unwrap();
    assert!(matches!(model.targets("다"), Err(ModelError::UnknownCharacter('다'))));
    assert_eq!(model.targets("나가").unwrap(), vec![1, 0]);
}

#[test]
fn grapheme_targets_and_errors() {
    let model = Recognizer::<f64>::new_grapheme(tiny_cfg(), 0).unwrap();
    let targets = model.targets("가").unwrap();
    assert_eq!(targets.len(), 6);
    assert_eq!(&targets[3..], &[codec::PAD_CLASS; 3]);
    assert!(matches!(
        model.targets("가나다"),
        Err(ModelError::Codec(CodecError::TooLong { .. }))
    ));
    assert!(matches!(model.targets("ab"), Err(ModelError::Codec(CodecError::OutOfBlock('a')))));
}

#[test]
fn checkpoint_round_trip_preserves_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Recognizer::<f32>::new_grapheme(tiny_cfg(), 11).unwrap();
    model.save(&path).unwrap();
    let loaded = Recognizer::<f32>::load(&path).unwrap();
    assert_eq!(model.config(), loaded.config());
    assert_eq!(model.param_names(), loaded.param_names());
    for (a, b) in model.param_tensors().iter().zip(loaded.param_tensors()) {
        assert_eq!(a, b);
    }
    let image = Tensor::from_fn(&[1, 8, 16], |i| (i % 9) as f32 / 9.0);
    let a = model.recognize(&image).unwrap();
    let b = loaded.recognize(&image).unwrap();
    assert_eq!(a.text, b.text);
    assert_eq!(a.attention, b.attention);

    // byte-identical on re-save
    let path2 = dir.path().join("model2.ckpt");
    loaded.save(&path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn baseline_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("baseline.ckpt");
    let model =
        Recognizer::<f32>::new_character_baseline(tiny_cfg(), &['가', '힣', '한'], 4).unwrap();
    model.save(&path).unwrap();
    let loaded = Recognizer::<f32>::load(&path).unwrap();
    assert_eq!(loaded.charset(), &['가', '힣', '한']);
    assert_eq!(loaded.config().class_count, 3);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Recognizer::<f32>::new_grapheme(tiny_cfg(), 11).unwrap();
    model.save(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        Recognizer::<f32>::load(&path),
        Err(ModelError::Checkpoint(CheckpointError::BadMagic))
    ));
}
