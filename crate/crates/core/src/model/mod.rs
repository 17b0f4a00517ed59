//! The grapheme recognizer.
//!
//! Encoder: a small conv stem (two stride-2 stages) followed by transformer
//! self-attention blocks over the H/4 × W/4 feature tokens with 2-D
//! sinusoidal position signals. Decoder: a learned query table, one row per
//! output slot, cross-attending over a U-net-reconstructed copy of the
//! feature map (which serves as both keys and values); attention rows are
//! kept for export. Predictor: one affine map to per-slot class logits.
//!
//! Grapheme mode emits `L × 53` logits (52 classes + PAD). The character
//! baseline shares the encoder/decoder shape but classifies whole syllables
//! from a fixed charset with `L/3` query rows — it structurally cannot emit
//! anything outside its charset.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use thiserror::Error;

use crate::codec::{self, CodecError, SeqClass, GRAPHEME_CLASSES};
use crate::tensor::{
    read_tensors, write_tensors, CheckpointError, Dtype, DynTensor, Graph, NodeId, Rng, Scalar,
    Tensor, TensorError,
};

const LN_EPS: f64 = 1e-5;
const META_NAME: &str = "meta.config";
const CHARSET_NAME: &str = "meta.charset";
const PARAM_PREFIX: &str = "p.";
const META_VERSION: f64 = 1.0;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("charset is empty")]
    EmptyCharset,
    #[error("charset contains '{0}' twice")]
    DuplicateCharset(char),
    #[error("character '{0}' is not in the baseline charset")]
    UnknownCharacter(char),
    #[error("image shape {got:?} does not match configured {expected:?}")]
    BadImageShape { got: Vec<usize>, expected: Vec<usize> },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Classification target of the recognizer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RecognizerMode {
    /// 52 grapheme classes + PAD, three output slots per character.
    Grapheme,
    /// Whole-syllable classes from a fixed charset + PAD, one slot per character.
    CharacterBaseline,
}

/// Architecture hyperparameters. `seq_len` is the grapheme sequence length
/// L (three slots per character) even in baseline mode, where the decoder
/// uses L/3 query rows.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct RecognizerConfig {
    pub feature_dim: usize,
    pub seq_len: usize,
    pub class_count: usize,
    pub encoder_layers: usize,
    pub num_heads: usize,
    pub image_h: usize,
    pub image_w: usize,
    pub mode: RecognizerMode,
    pub use_transformer: bool,
    /// Exclude PAD positions from the loss mean instead of weighting them 1.
    pub mask_pad: bool,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            feature_dim: 128,
            seq_len: 24,
            class_count: GRAPHEME_CLASSES,
            encoder_layers: 5,
            num_heads: 4,
            image_h: 32,
            image_w: 128,
            mode: RecognizerMode::Grapheme,
            use_transformer: true,
            mask_pad: false,
        }
    }
}

impl RecognizerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::BadConfig(msg));
        if self.seq_len == 0 || self.seq_len % 3 != 0 {
            return fail(format!("seq_len {} must be a positive multiple of 3", self.seq_len));
        }
        if self.feature_dim < 4 || self.feature_dim % 4 != 0 {
            return fail(format!("feature_dim {} must be a multiple of 4", self.feature_dim));
        }
        if self.num_heads == 0 || self.feature_dim % self.num_heads != 0 {
            return fail(format!(
                "num_heads {} must divide feature_dim {}",
                self.num_heads, self.feature_dim
            ));
        }
        if self.image_h % 4 != 0 || self.image_w % 4 != 0 || self.image_h < 8 || self.image_w < 8 {
            return fail(format!(
                "image {}x{} must have both extents divisible by 4 and at least 8",
                self.image_h, self.image_w
            ));
        }
        if self.encoder_layers == 0 {
            return fail("encoder_layers must be positive".to_string());
        }
        if self.mode == RecognizerMode::Grapheme && self.class_count != GRAPHEME_CLASSES {
            return fail(format!(
                "grapheme mode requires class_count {GRAPHEME_CLASSES}, got {}",
                self.class_count
            ));
        }
        Ok(())
    }

    /// Feature-map extents H/4 × W/4.
    pub fn feature_hw(&self) -> (usize, usize) {
        (self.image_h / 4, self.image_w / 4)
    }

    fn tokens(&self) -> usize {
        let (h4, w4) = self.feature_hw();
        h4 * w4
    }

    fn stem_channels(&self) -> usize {
        (self.feature_dim / 4).max(4)
    }

    fn ffn_dim(&self) -> usize {
        self.feature_dim * 2
    }

    /// Decoder query rows: L in grapheme mode, L/3 in baseline mode.
    pub fn query_len(&self) -> usize {
        match self.mode {
            RecognizerMode::Grapheme => self.seq_len,
            RecognizerMode::CharacterBaseline => self.seq_len / 3,
        }
    }
}

/// Recognition result: merged text plus the decoder attention maps
/// `[query_len, H/4, W/4]` (each slice sums to 1).
#[derive(Clone, Debug)]
pub struct DecodedText<T> {
    pub text: String,
    pub attention: Tensor<T>,
    /// True when the argmax sequence violated triple structure and the text
    /// was therefore emptied.
    pub malformed: bool,
}

/// Node handles of one forward pass.
pub struct ForwardNodes {
    /// `[H/4, W/4, N]`
    pub feature_map: NodeId,
    /// `[query_len, N]`
    pub decoder_features: NodeId,
    /// `[query_len, H/4, W/4]`
    pub attention: NodeId,
    /// `[query_len, classes + 1]`
    pub logits: NodeId,
}

struct LayerIx {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

struct ParamIx {
    conv1_w: usize,
    conv1_b: usize,
    conv2_w: usize,
    conv2_b: usize,
    conv2b_w: usize,
    conv2b_b: usize,
    conv3_w: usize,
    conv3_b: usize,
    layers: Vec<LayerIx>,
    final_ln_g: usize,
    final_ln_b: usize,
    unet_down_w: usize,
    unet_down_b: usize,
    unet_up_w: usize,
    unet_up_b: usize,
    query: usize,
    head_w: usize,
    head_b: usize,
}

/// The model: config, charset (baseline mode), named parameters.
pub struct Recognizer<T: Scalar> {
    cfg: RecognizerConfig,
    charset: Vec<char>,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    ix: ParamIx,
    posenc: Tensor<T>,
}

struct ParamBuilder<T: Scalar> {
    seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamBuilder<T> {
    fn fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> usize {
        let tensor = Rng::stream(self.seed, name, 0).fan_in_tensor(shape, fan_in);
        self.push(name, tensor)
    }

    fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> usize {
        self.push(name, Tensor::full(shape, T::from_f64(value)))
    }

    fn push(&mut self, name: &str, tensor: Tensor<T>) -> usize {
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.names.len() - 1
    }

    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) -> (usize, usize) {
        let w = self.fan_in(&format!("{name}.w"), &[c_out, c_in, k, k], c_in * k * k);
        let b = self.constant(&format!("{name}.b"), &[c_out], 0.0);
        (w, b)
    }

    fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> (usize, usize) {
        let w = self.fan_in(&format!("{name}.w"), &[d_in, d_out], d_in);
        let b = self.constant(&format!("{name}.b"), &[d_out], 0.0);
        (w, b)
    }

    fn layer_norm(&mut self, name: &str, n: usize) -> (usize, usize) {
        let g = self.constant(&format!("{name}.g"), &[n], 1.0);
        let b = self.constant(&format!("{name}.b"), &[n], 0.0);
        (g, b)
    }
}

impl<T: Scalar> Recognizer<T> {
    /// Grapheme-mode model with seeded scaled-uniform init.
    pub fn new_grapheme(mut cfg: RecognizerConfig, seed: u64) -> Result<Recognizer<T>, ModelError> {
        cfg.mode = RecognizerMode::Grapheme;
        cfg.class_count = GRAPHEME_CLASSES;
        cfg.validate()?;
        Ok(Self::build(cfg, Vec::new(), seed))
    }

    /// Character-baseline model over a fixed charset: same encoder/decoder,
    /// one query row per character, `|charset| + 1` classes.
    pub fn new_character_baseline(
        mut cfg: RecognizerConfig,
        charset: &[char],
        seed: u64,
    ) -> Result<Recognizer<T>, ModelError> {
        if charset.is_empty() {
            return Err(ModelError::EmptyCharset);
        }
        let mut seen = std::collections::BTreeSet::new();
        for &ch in charset {
            if !seen.insert(ch) {
                return Err(ModelError::DuplicateCharset(ch));
            }
        }
        cfg.mode = RecognizerMode::CharacterBaseline;
        cfg.class_count = charset.len();
        cfg.validate()?;
        Ok(Self::build(cfg, charset.to_vec(), seed))
    }

    fn build(cfg: RecognizerConfig, charset: Vec<char>, seed: u64) -> Recognizer<T> {
        let n = cfg.feature_dim;
        let mid = cfg.stem_channels();
        let mut b = ParamBuilder { seed, names: Vec::new(), tensors: Vec::new() };

        // receptive field 19x19 at the 4x-downsampled grid: one feature cell
        // covers a whole glyph pattern plus margin
        let (conv1_w, conv1_b) = b.conv("stem.conv1", mid, 1, 3);
        let (conv2_w, conv2_b) = b.conv("stem.conv2", mid, mid, 3);
        let (conv2b_w, conv2b_b) = b.conv("stem.conv2b", mid, mid, 3);
        let (conv3_w, conv3_b) = b.conv("stem.conv3", n, mid, 3);

        let mut layers = Vec::with_capacity(cfg.encoder_layers);
        for l in 0..cfg.encoder_layers {
            let p = format!("enc.{l}");
            let (ln1_g, ln1_b) = b.layer_norm(&format!("{p}.ln1"), n);
            let (wq, bq) = b.linear(&format!("{p}.attn.q"), n, n);
            let (wk, bk) = b.linear(&format!("{p}.attn.k"), n, n);
            let (wv, bv) = b.linear(&format!("{p}.attn.v"), n, n);
            let (wo, bo) = b.linear(&format!("{p}.attn.o"), n, n);
            let (ln2_g, ln2_b) = b.layer_norm(&format!("{p}.ln2"), n);
            let (w1, b1) = b.linear(&format!("{p}.ffn.in"), n, cfg.ffn_dim());
            let (w2, b2) = b.linear(&format!("{p}.ffn.out"), cfg.ffn_dim(), n);
            layers.push(LayerIx {
                ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2,
            });
        }
        let (final_ln_g, final_ln_b) = b.layer_norm("enc.final_ln", n);

        let (unet_down_w, unet_down_b) = b.conv("unet.down", n, n, 3);
        let (unet_up_w, unet_up_b) = b.conv("unet.up", n, n, 3);

        // unit-scale init, as for an embedding table: the queries must break
        // the attention symmetry, and fan-in-scaled rows start too flat
        let query = {
            let t = Rng::stream(seed, "dec.query", 0).uniform_tensor(&[cfg.query_len(), n], 1.0);
            b.push("dec.query", t)
        };
        let (head_w, head_b) = b.linear("head", n, cfg.class_count + 1);

        let ix = ParamIx {
            conv1_w, conv1_b, conv2_w, conv2_b, conv2b_w, conv2b_b, conv3_w, conv3_b,
            layers, final_ln_g, final_ln_b,
            unet_down_w, unet_down_b, unet_up_w, unet_up_b,
            query, head_w, head_b,
        };
        let posenc = positional_encoding(&cfg);
        Recognizer { cfg, charset, names: b.names, tensors: b.tensors, ix, posenc }
    }

    pub fn config(&self) -> &RecognizerConfig {
        &self.cfg
    }

    pub fn charset(&self) -> &[char] {
        &self.charset
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn param_tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Inserts every parameter as a gradient-tracked leaf, in slot order.
    pub fn insert_params(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        self.tensors.iter().enumerate().map(|(i, t)| g.param(t.clone(), i)).collect()
    }

    /// Full forward pass from stored parameters.
    pub fn forward(&self, g: &mut Graph<T>, image: &Tensor<T>) -> Result<ForwardNodes, ModelError> {
        let params = self.insert_params(g);
        self.forward_nodes(g, image, &params)
    }

    /// Forward pass over caller-provided parameter leaves (same order as
    /// [`Recognizer::param_tensors`]); this is the gradient-check entry.
    pub fn forward_nodes(
        &self,
        g: &mut Graph<T>,
        image: &Tensor<T>,
        params: &[NodeId],
    ) -> Result<ForwardNodes, ModelError> {
        assert_eq!(params.len(), self.tensors.len(), "parameter leaf count");
        let feature_map = self.encode_with(g, image, params)?;
        self.decode_with(g, feature_map, params)
    }

    /// Encoder only: `[1,H,W]` image to `[H/4, W/4, N]` feature map.
    pub fn encode(&self, g: &mut Graph<T>, image: &Tensor<T>) -> Result<NodeId, ModelError> {
        let params = self.insert_params(g);
        self.encode_with(g, image, &params)
    }

    fn encode_with(
        &self,
        g: &mut Graph<T>,
        image: &Tensor<T>,
        p: &[NodeId],
    ) -> Result<NodeId, ModelError> {
        let cfg = &self.cfg;
        if image.shape() != [1, cfg.image_h, cfg.image_w] {
            return Err(ModelError::BadImageShape {
                got: image.shape().to_vec(),
                expected: vec![1, cfg.image_h, cfg.image_w],
            });
        }
        let (h4, w4) = cfg.feature_hw();
        let n = cfg.feature_dim;
        let x = g.constant(image.clone());

        // φ: two stride-2 stages
        let c1 = g.conv2d(x, p[self.ix.conv1_w], 2, 1)?;
        let c1 = g.add_channel_bias(c1, p[self.ix.conv1_b])?;
        let c1 = g.relu(c1);
        let c2 = g.conv2d(c1, p[self.ix.conv2_w], 1, 1)?;
        let c2 = g.add_channel_bias(c2, p[self.ix.conv2_b])?;
        let c2 = g.relu(c2);
        let c2 = g.conv2d(c2, p[self.ix.conv2b_w], 1, 1)?;
        let c2 = g.add_channel_bias(c2, p[self.ix.conv2b_b])?;
        let c2 = g.relu(c2);
        let c3 = g.conv2d(c2, p[self.ix.conv3_w], 2, 1)?;
        let c3 = g.add_channel_bias(c3, p[self.ix.conv3_b])?;
        let c3 = g.relu(c3);

        // [N, H4, W4] -> tokens [T, N]
        let flat = g.reshape(c3, &[n, h4 * w4])?;
        let mut tokens = g.transpose(flat)?;

        // ψ: pre-LN self-attention blocks over the tokens
        if cfg.use_transformer {
            let pe = g.constant(self.posenc.clone());
            tokens = g.add(tokens, pe)?;
            for layer in &self.ix.layers {
                tokens = self.encoder_layer(g, tokens, layer, p)?;
            }
            tokens =
                g.layer_norm(tokens, p[self.ix.final_ln_g], p[self.ix.final_ln_b], LN_EPS)?;
        }
        Ok(g.reshape(tokens, &[h4, w4, n])?)
    }

    fn encoder_layer(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        layer: &LayerIx,
        p: &[NodeId],
    ) -> Result<NodeId, ModelError> {
        let n = self.cfg.feature_dim;
        let heads = self.cfg.num_heads;
        let dh = n / heads;
        let t = self.cfg.tokens();

        let ln = g.layer_norm(x, p[layer.ln1_g], p[layer.ln1_b], LN_EPS)?;
        let project = |g: &mut Graph<T>, w, b| -> Result<NodeId, ModelError> {
            let y = g.matmul(ln, p[w])?;
            let y = g.add_row_bias(y, p[b])?;
            // [T, N] -> [heads, T, dh]
            let y = g.reshape(y, &[t, heads, dh])?;
            Ok(g.permute3(y, [1, 0, 2])?)
        };
        let q = project(g, layer.wq, layer.bq)?;
        let k = project(g, layer.wk, layer.bk)?;
        let v = project(g, layer.wv, layer.bv)?;

        let mut per_head = Vec::with_capacity(heads);
        for h in 0..heads {
            let take = |g: &mut Graph<T>, src| -> Result<NodeId, ModelError> {
                let s = g.slice_axis0(src, h, 1)?;
                Ok(g.reshape(s, &[t, dh])?)
            };
            let qh = take(g, q)?;
            let kh = take(g, k)?;
            let vh = take(g, v)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
            let attn = g.softmax(scores, 1)?;
            let ctx = g.matmul(attn, vh)?;
            per_head.push(g.reshape(ctx, &[1, t, dh])?);
        }
        let ctx = g.concat_axis0(&per_head)?;
        let ctx = g.permute3(ctx, [1, 0, 2])?;
        let ctx = g.reshape(ctx, &[t, n])?;
        let ctx = g.matmul(ctx, p[layer.wo])?;
        let ctx = g.add_row_bias(ctx, p[layer.bo])?;
        let x = g.add(x, ctx)?;

        let ln2 = g.layer_norm(x, p[layer.ln2_g], p[layer.ln2_b], LN_EPS)?;
        let h1 = g.matmul(ln2, p[layer.w1])?;
        let h1 = g.add_row_bias(h1, p[layer.b1])?;
        let h1 = g.relu(h1);
        let h2 = g.matmul(h1, p[layer.w2])?;
        let h2 = g.add_row_bias(h2, p[layer.b2])?;
        Ok(g.add(x, h2)?)
    }

    fn decode_with(
        &self,
        g: &mut Graph<T>,
        feature_map: NodeId,
        p: &[NodeId],
    ) -> Result<ForwardNodes, ModelError> {
        let (h4, w4) = self.cfg.feature_hw();
        let n = self.cfg.feature_dim;
        let t = h4 * w4;
        let l = self.cfg.query_len();

        // back to channels-first for the U-net
        let tokens = g.reshape(feature_map, &[t, n])?;
        let chw = g.transpose(tokens)?;
        let chw = g.reshape(chw, &[n, h4, w4])?;

        // one down conv, one up conv, skip connection
        let down = g.conv2d(chw, p[self.ix.unet_down_w], 2, 1)?;
        let down = g.add_channel_bias(down, p[self.ix.unet_down_b])?;
        let down = g.relu(down);
        let up = g.upsample_nearest_2x(down)?;
        let up = g.conv2d(up, p[self.ix.unet_up_w], 1, 1)?;
        let up = g.add_channel_bias(up, p[self.ix.unet_up_b])?;
        let reconstructed = g.add(chw, up)?;

        // keys/values as tokens [T, N]
        let k_flat = g.reshape(reconstructed, &[n, t])?;
        let keys = g.transpose(k_flat)?;

        // f_d = softmax(Q Kᵀ / √N) V with V = K
        let kt = g.transpose(keys)?;
        let scores = g.matmul(p[self.ix.query], kt)?;
        let scores = g.scale(scores, 1.0 / (n as f64).sqrt());
        let attn = g.softmax(scores, 1)?;
        let decoder_features = g.matmul(attn, keys)?;
        let attention = g.reshape(attn, &[l, h4, w4])?;

        let logits = g.matmul(decoder_features, p[self.ix.head_w])?;
        let logits = g.add_row_bias(logits, p[self.ix.head_b])?;

        Ok(ForwardNodes { feature_map, decoder_features, attention, logits })
    }

    /// Class-index targets for a label, padded to the query length.
    pub fn targets(&self, label: &str) -> Result<Vec<usize>, ModelError> {
        match self.cfg.mode {
            RecognizerMode::Grapheme => {
                Ok(codec::decompose_text(label, self.cfg.seq_len)?.class_indices())
            }
            RecognizerMode::CharacterBaseline => {
                let max = self.cfg.query_len();
                let chars: Vec<char> = label.chars().collect();
                if chars.len() > max {
                    return Err(ModelError::Codec(CodecError::TooLong {
                        chars: chars.len(),
                        max,
                        len: self.cfg.seq_len,
                    }));
                }
                let pad = self.charset.len();
                let mut targets = Vec::with_capacity(max);
                for ch in chars {
                    let class = self
                        .charset
                        .iter()
                        .position(|&c| c == ch)
                        .ok_or(ModelError::UnknownCharacter(ch))?;
                    targets.push(class);
                }
                targets.resize(max, pad);
                Ok(targets)
            }
        }
    }

    /// Mean cross-entropy of the logits against a text label. PAD positions
    /// weigh 1 unless `mask_pad` excludes them.
    pub fn loss(
        &self,
        g: &mut Graph<T>,
        logits: NodeId,
        label: &str,
    ) -> Result<NodeId, ModelError> {
        let targets = self.targets(label)?;
        self.loss_from_targets(g, logits, &targets)
    }

    pub fn loss_from_targets(
        &self,
        g: &mut Graph<T>,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId, ModelError> {
        let pad = self.pad_class();
        let weights: Option<Vec<f64>> = if self.cfg.mask_pad {
            Some(targets.iter().map(|&t| if t == pad { 0.0 } else { 1.0 }).collect())
        } else {
            None
        };
        Ok(g.cross_entropy(logits, targets, weights.as_deref())?)
    }

    fn pad_class(&self) -> usize {
        match self.cfg.mode {
            RecognizerMode::Grapheme => codec::PAD_CLASS,
            RecognizerMode::CharacterBaseline => self.charset.len(),
        }
    }

    /// Row-wise argmax, ties broken toward the lowest class index.
    pub fn argmax_classes(&self, logits: &Tensor<T>) -> Vec<usize> {
        let k = self.cfg.class_count + 1;
        logits
            .data()
            .chunks_exact(k)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Decodes argmax classes to text. Grapheme mode merges triples (a
    /// malformed sequence yields empty text with the flag set); baseline
    /// mode reads charset members until the first PAD.
    pub fn decode_classes(&self, classes: &[usize]) -> (String, bool) {
        match self.cfg.mode {
            RecognizerMode::Grapheme => {
                let ids: Vec<SeqClass> = classes
                    .iter()
                    .map(|&c| SeqClass::from_class_index(c).expect("argmax class in range"))
                    .collect();
                match codec::GraphemeSequence::from_classes(ids)
                    .and_then(|seq| codec::merge_sequence(&seq))
                {
                    Ok(text) => (text, false),
                    Err(_) => (String::new(), true),
                }
            }
            RecognizerMode::CharacterBaseline => {
                let pad = self.charset.len();
                let mut text = String::new();
                for &c in classes {
                    if c == pad {
                        break;
                    }
                    text.push(self.charset[c]);
                }
                (text, false)
            }
        }
    }

    /// End-to-end inference: forward pass, argmax, merge, attention export.
    pub fn recognize(&self, image: &Tensor<T>) -> Result<DecodedText<T>, ModelError> {
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, image)?;
        let (text, malformed) = self.decode_classes(&self.argmax_classes(g.value(nodes.logits)));
        Ok(DecodedText { text, attention: g.value(nodes.attention).clone(), malformed })
    }

    /// Writes config, charset and parameters into the tensor container.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut entries: Vec<(String, DynTensor)> = Vec::with_capacity(self.tensors.len() + 2);
        let cfg = &self.cfg;
        let meta = vec![
            META_VERSION,
            match cfg.mode {
                RecognizerMode::Grapheme => 0.0,
                RecognizerMode::CharacterBaseline => 1.0,
            },
            cfg.feature_dim as f64,
            cfg.seq_len as f64,
            cfg.class_count as f64,
            cfg.encoder_layers as f64,
            cfg.num_heads as f64,
            cfg.image_h as f64,
            cfg.image_w as f64,
            if cfg.use_transformer { 1.0 } else { 0.0 },
            if cfg.mask_pad { 1.0 } else { 0.0 },
        ];
        entries.push((
            META_NAME.to_string(),
            DynTensor::F64(Tensor::new(vec![meta.len()], meta).expect("fixed length")),
        ));
        if !self.charset.is_empty() {
            let cps: Vec<f64> = self.charset.iter().map(|&c| c as u32 as f64).collect();
            entries.push((
                CHARSET_NAME.to_string(),
                DynTensor::F64(Tensor::new(vec![cps.len()], cps).expect("nonempty")),
            ));
        }
        for (name, tensor) in self.names.iter().zip(&self.tensors) {
            entries.push((format!("{PARAM_PREFIX}{name}"), tensor.clone().into()));
        }
        let file = std::fs::File::create(path).map_err(CheckpointError::Io)?;
        write_tensors(BufWriter::new(file), &entries)?;
        Ok(())
    }

    /// Loads a checkpoint written by [`Recognizer::save`] with dtype `T`.
    pub fn load(path: &Path) -> Result<Recognizer<T>, ModelError> {
        let file = std::fs::File::open(path).map_err(CheckpointError::Io)?;
        let entries = read_tensors(BufReader::new(file))?;
        let find = |name: &str| entries.iter().find(|(n, _)| n == name).map(|(_, t)| t);

        let meta = find(META_NAME)
            .and_then(DynTensor::as_f64)
            .ok_or_else(|| ModelError::BadCheckpoint("missing config record".into()))?;
        let m = meta.data();
        if m.len() != 11 || m[0] != META_VERSION {
            return Err(ModelError::BadCheckpoint("unsupported config record".into()));
        }
        let as_usize = |v: f64| v as usize;
        let mode = match m[1] as u32 {
            0 => RecognizerMode::Grapheme,
            1 => RecognizerMode::CharacterBaseline,
            _ => return Err(ModelError::BadCheckpoint("unknown mode".into())),
        };
        let cfg = RecognizerConfig {
            feature_dim: as_usize(m[2]),
            seq_len: as_usize(m[3]),
            class_count: as_usize(m[4]),
            encoder_layers: as_usize(m[5]),
            num_heads: as_usize(m[6]),
            image_h: as_usize(m[7]),
            image_w: as_usize(m[8]),
            mode,
            use_transformer: m[9] != 0.0,
            mask_pad: m[10] != 0.0,
        };
        cfg.validate()?;
        let charset: Vec<char> = match (mode, find(CHARSET_NAME)) {
            (RecognizerMode::Grapheme, _) => Vec::new(),
            (RecognizerMode::CharacterBaseline, Some(DynTensor::F64(t))) => t
                .data()
                .iter()
                .map(|&cp| {
                    char::from_u32(cp as u32)
                        .ok_or_else(|| ModelError::BadCheckpoint("bad charset entry".into()))
                })
                .collect::<Result<_, _>>()?,
            (RecognizerMode::CharacterBaseline, _) => {
                return Err(ModelError::BadCheckpoint("missing charset".into()))
            }
        };
        if mode == RecognizerMode::CharacterBaseline && charset.len() != cfg.class_count {
            return Err(ModelError::BadCheckpoint("charset/class count mismatch".into()));
        }

        let mut model = Self::build(cfg, charset, 0);
        for (name, tensor) in model.names.iter().zip(model.tensors.iter_mut()) {
            let full = format!("{PARAM_PREFIX}{name}");
            let loaded = find(&full)
                .ok_or_else(|| ModelError::BadCheckpoint(format!("missing tensor '{name}'")))?;
            let typed: Tensor<T> = match (T::DTYPE, loaded) {
                (Dtype::F32, DynTensor::F32(t)) => {
                    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| T::from_f64(v as f64)).collect())
                        .expect("same shape")
                }
                (Dtype::F64, DynTensor::F64(t)) => {
                    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| T::from_f64(v)).collect())
                        .expect("same shape")
                }
                _ => return Err(ModelError::BadCheckpoint(format!("dtype mismatch for '{name}'"))),
            };
            if typed.shape() != tensor.shape() {
                return Err(ModelError::BadCheckpoint(format!(
                    "shape mismatch for '{name}': {:?} vs {:?}",
                    typed.shape(),
                    tensor.shape()
                )));
            }
            *tensor = typed;
        }
        Ok(model)
    }
}

/// Fixed 2-D sinusoidal position signals for the token grid: the first half
/// of the feature dimension encodes the row, the second half the column.
fn positional_encoding<T: Scalar>(cfg: &RecognizerConfig) -> Tensor<T> {
    let (h4, w4) = cfg.feature_hw();
    let n = cfg.feature_dim;
    let half = n / 2;
    let mut out = Tensor::zeros(&[h4 * w4, n]);
    for r in 0..h4 {
        for c in 0..w4 {
            let t = r * w4 + c;
            for (offset, pos) in [(0, r), (half, c)] {
                for i in 0..half / 2 {
                    let freq = 1.0 / 10_000f64.powf(2.0 * i as f64 / half as f64);
                    let angle = pos as f64 * freq;
                    out.data_mut()[t * n + offset + 2 * i] = T::from_f64(angle.sin());
                    out.data_mut()[t * n + offset + 2 * i + 1] = T::from_f64(angle.cos());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
