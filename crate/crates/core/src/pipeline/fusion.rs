use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, PageStream};
use crate::error::{Error, Result};
use crate::hashing::content_hash;
use crate::neural::{
    encode_text, fit, predict_proba, EpochPolicy, FitConfig, History, ImageCnn, Layer, Network,
    OptimizerKind, TextCnn, Tensor,
};
use crate::textproc::Vocabulary;
use crate::topics::{cosine_distance, hellinger, ThetaVector, TopicFeaturizer};

use super::cache::FeatureCache;

/// Number of text blocks: the current page and two predecessors.
pub const TEXT_BLOCKS: usize = 3;

/// `3·(text_dim + K + 2) + image_dim`.
pub fn fusion_len(text_dim: usize, n_topics: usize, image_dim: usize) -> usize {
    TEXT_BLOCKS * (text_dim + n_topics + 2) + image_dim
}

/// Precomputed per-page inputs of one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFusionFeatures {
    text: Vec<Vec<f32>>,
    thetas: Vec<ThetaVector>,
    image: Vec<Vec<f32>>,
}

impl StreamFusionFeatures {
    pub fn new(text: Vec<Vec<f32>>, thetas: Vec<ThetaVector>, image: Vec<Vec<f32>>) -> Result<Self> {
        if text.len() != thetas.len() || text.len() != image.len() {
            return Err(Error::DimensionMismatch(text.len(), thetas.len().min(image.len())));
        }
        if text.is_empty() {
            return Err(Error::InvalidParameter("stream has no pages".into()));
        }
        let widths_agree = |v: &[Vec<f32>]| v.iter().all(|x| x.len() == v[0].len());
        if !widths_agree(&text)
            || !widths_agree(&image)
            || !thetas.iter().all(|t| t.len() == thetas[0].len())
        {
            return Err(Error::InvalidParameter("ragged per-page features".into()));
        }
        Ok(Self {
            text,
            thetas,
            image,
        })
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn thetas(&self) -> &[ThetaVector] {
        &self.thetas
    }

    pub fn vector_len(&self) -> usize {
        fusion_len(self.text[0].len(), self.thetas[0].len(), self.image[0].len())
    }

    fn push_text_block(&self, page: Option<usize>, out: &mut Vec<f32>) -> Result<()> {
        let width = self.text[0].len() + self.thetas[0].len();
        match page {
            None => {
                out.extend(std::iter::repeat_n(0.0, width));
                out.extend([1.0, 1.0]);
            }
            Some(p) => {
                out.extend_from_slice(&self.text[p]);
                out.extend(self.thetas[p].iter().map(|&v| v as f32));
                if p == 0 {
                    out.extend([1.0, 1.0]);
                } else {
                    let (a, b) = (&self.thetas[p], &self.thetas[p - 1]);
                    out.push(hellinger(a, b)? as f32);
                    out.push(cosine_distance(a, b)? as f32);
                }
            }
        }
        Ok(())
    }

    /// `[page p | page p−1 | page p−2 | image of p]`; a missing predecessor
    /// block is zero except for its two distance slots, which are 1.0.
    pub fn vector(&self, page: usize) -> Result<Vec<f32>> {
        if page >= self.len() {
            return Err(Error::PageOutOfRange {
                index: page,
                len: self.len(),
            });
        }
        let mut out = Vec::with_capacity(self.vector_len());
        for back in 0..TEXT_BLOCKS {
            self.push_text_block(page.checked_sub(back), &mut out)?;
        }
        out.extend_from_slice(&self.image[page]);
        Ok(out)
    }

    pub fn vectors(&self) -> Result<Vec<Vec<f32>>> {
        (0..self.len()).map(|p| self.vector(p)).collect()
    }
}

/// The three fitted feature extractors, fingerprinted once so per-page
/// cache keys stay cheap.
pub struct FusionInputs<'a> {
    pub vocab: &'a Vocabulary,
    pub text_model: &'a TextCnn,
    pub image_model: &'a ImageCnn,
    pub topics: &'a TopicFeaturizer,
    text_fp: [u8; 32],
    image_fp: [u8; 32],
    topic_fp: [u8; 32],
}

impl<'a> FusionInputs<'a> {
    pub fn new(
        vocab: &'a Vocabulary,
        text_model: &'a TextCnn,
        image_model: &'a ImageCnn,
        topics: &'a TopicFeaturizer,
    ) -> Self {
        let vocab_fp = content_hash(&[vocab.to_tsv().as_bytes()]);
        Self {
            vocab,
            text_model,
            image_model,
            topics,
            text_fp: content_hash(&[&vocab_fp, &text_model.network().to_bytes()]),
            image_fp: content_hash(&[&image_model.network().to_bytes()]),
            topic_fp: topic_fingerprint(vocab, topics),
        }
    }

    pub fn stream_features(
        &self,
        stream: &PageStream,
        cache: &mut FeatureCache,
    ) -> Result<StreamFusionFeatures> {
        let mut text = Vec::with_capacity(stream.len());
        let mut image = Vec::with_capacity(stream.len());
        for page in stream.pages() {
            let t = cache.get_or_compute(
                content_hash(&[b"text", &self.text_fp, page.text.as_bytes()]),
                || {
                    let ids = encode_text(&page.text, self.vocab);
                    Ok(to_f64(&self.text_model.extract_penultimate(&ids)?))
                },
            )?;
            text.push(to_f32(&t));
            let i = cache.get_or_compute(
                content_hash(&[b"image", &self.image_fp, page.image.packed()]),
                || Ok(to_f64(&self.image_model.extract_penultimate(&page.image)?)),
            )?;
            image.push(to_f32(&i));
        }
        let thetas = stream_thetas(stream, self.vocab, self.topics, &self.topic_fp, cache)?;
        StreamFusionFeatures::new(text, thetas, image)
    }
}

pub(crate) fn topic_fingerprint(vocab: &Vocabulary, topics: &TopicFeaturizer) -> [u8; 32] {
    content_hash(&[
        vocab.to_tsv().as_bytes(),
        &topics.model().to_bytes(),
        &topics.seed().to_le_bytes(),
    ])
}

/// Per-page θ through the cache. The fold-in seed depends on the stream id
/// and page index, so both are part of the key.
pub(crate) fn stream_thetas(
    stream: &PageStream,
    vocab: &Vocabulary,
    topics: &TopicFeaturizer,
    fingerprint: &[u8; 32],
    cache: &mut FeatureCache,
) -> Result<Vec<ThetaVector>> {
    stream
        .pages()
        .iter()
        .map(|p| {
            let key = content_hash(&[
                b"theta",
                fingerprint,
                stream.id().as_bytes(),
                &(p.page_index as u64).to_le_bytes(),
                p.text.as_bytes(),
            ]);
            let v = cache.get_or_compute(key, || {
                Ok(topics
                    .theta(stream.id(), p.page_index, &vocab.ids_of_text(&p.text))
                    .into_inner())
            })?;
            ThetaVector::new(v)
        })
        .collect()
}

/// Fusion vector of one page, computed without a persistent cache.
pub fn build_fusion_vector(
    stream: &PageStream,
    page_index: usize,
    inputs: &FusionInputs<'_>,
) -> Result<Vec<f32>> {
    if page_index >= stream.len() {
        return Err(Error::PageOutOfRange {
            index: page_index,
            len: stream.len(),
        });
    }
    inputs
        .stream_features(stream, &mut FeatureCache::in_memory())?
        .vector(page_index)
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionMlpConfig {
    pub hidden: usize,
    pub l2: f64,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for FusionMlpConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            l2: 0.01,
            dropout: 0.5,
            learning_rate: 0.0005,
            batch_size: 16,
        }
    }
}

/// Dense(hidden, ReLU, L2) → dropout → dense(1) over fusion vectors.
#[derive(Clone, Debug)]
pub struct FusionMlp {
    network: Network<f32>,
}

impl FusionMlp {
    pub fn new(input_len: usize, config: &FusionMlpConfig, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&config.dropout) || config.l2 < 0.0 {
            return Err(Error::InvalidParameter(
                "fusion dropout must be in [0, 1) and l2 non-negative".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::new(
            vec![input_len],
            vec![
                Layer::dense(input_len, config.hidden, config.l2, &mut rng),
                Layer::Relu,
                Layer::Dropout {
                    rate: config.dropout,
                },
                Layer::dense(config.hidden, 1, 0.0, &mut rng),
            ],
        )?;
        Ok(Self { network })
    }

    pub fn from_network(network: Network<f32>) -> Result<Self> {
        let kinds: Vec<&str> = network.layers().iter().map(|l| l.kind()).collect();
        if kinds != ["dense", "relu", "dropout", "dense"] {
            return Err(Error::format("PSSNN01", "not a fusion MLP layer stack"));
        }
        Ok(Self { network })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn input_len(&self) -> usize {
        self.network.input_shape()[0]
    }

    pub fn train(
        &mut self,
        vectors: &[Vec<f32>],
        labels: &[Label],
        config: &FusionMlpConfig,
        policy: EpochPolicy,
        seed: u64,
    ) -> Result<History> {
        let inputs = self.tensors(vectors)?;
        let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
        let fit_config = FitConfig {
            batch_size: config.batch_size,
            optimizer: OptimizerKind::adam(config.learning_rate),
            policy,
            seed,
        };
        fit(&mut self.network, 0, &inputs, &targets, &fit_config)
    }

    pub fn predict_proba(&self, vectors: &[Vec<f32>]) -> Result<Vec<f64>> {
        predict_proba(&self.network, 0, &self.tensors(vectors)?)
    }

    fn tensors(&self, vectors: &[Vec<f32>]) -> Result<Vec<Tensor<f32>>> {
        vectors
            .iter()
            .map(|v| {
                if v.len() != self.input_len() {
                    return Err(Error::DimensionMismatch(self.input_len(), v.len()));
                }
                Ok(Tensor::from_vec(v.clone()))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.network.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_network(Network::load(path)?)
    }
}

pub fn train_fusion(
    vectors: &[Vec<f32>],
    labels: &[Label],
    config: &FusionMlpConfig,
    policy: EpochPolicy,
    seed: u64,
) -> Result<(FusionMlp, History)> {
    let len = vectors
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidParameter("no fusion training vectors".into()))?;
    let mut mlp = FusionMlp::new(len, config, seed)?;
    let history = mlp.train(vectors, labels, config, policy, seed)?;
    Ok((mlp, history))
}

/// ND iff the sigmoid output exceeds 0.5.
pub fn threshold(p: f64) -> Label {
    if p > 0.5 {
        Label::NewDocument
    } else {
        Label::SameDocument
    }
}
