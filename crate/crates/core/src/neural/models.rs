use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::imaging::{Binary224, PAGE_SIDE};
use crate::textproc::{process, Vocabulary};

use super::layers::Layer;
use super::network::Network;
use super::optim::OptimizerKind;
use super::tensor::Tensor;
use super::train::{fit, predict_proba, EpochPolicy, FitConfig, History};

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
/// Vocabulary id `i` maps to embedding row `i + ID_OFFSET`.
pub const ID_OFFSET: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct TextCnnConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dense: usize,
    pub dropout: f64,
    pub max_seq_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl TextCnnConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 300,
            filters: 350,
            kernel: 3,
            dense: 256,
            dropout: 0.5,
            max_seq_len: 512,
            learning_rate: 0.0002,
            batch_size: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_seq_len < self.kernel || self.kernel == 0 {
            return Err(Error::InvalidParameter(format!(
                "max_seq_len {} must be at least the kernel size {}",
                self.max_seq_len, self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter("dropout must be in [0, 1)".into()));
        }
        if self.vocab_size + ID_OFFSET as usize >= 1 << 24 {
            return Err(Error::InvalidParameter("vocabulary too large".into()));
        }
        Ok(())
    }
}

/// Processed tokens of a page as embedding rows: in-vocabulary terms are
/// shifted by `ID_OFFSET`, unknown terms become `OOV_ID`.
pub fn encode_text(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    process(text, vocab.language())
        .iter()
        .map(|t| vocab.id(t).map_or(OOV_ID, |id| id + ID_OFFSET))
        .collect()
}

/// Embedding-row convolution network for page text.
#[derive(Clone, Debug)]
pub struct TextCnn {
    network: Network<f32>,
    kernel: usize,
}

const TEXT_PENULTIMATE_END: usize = 6;

impl TextCnn {
    pub fn new(config: &TextCnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = config.vocab_size + ID_OFFSET as usize;
        let layers = vec![
            Layer::embedding(rows, config.embed_dim, &mut rng),
            Layer::conv1d(config.embed_dim, config.filters, config.kernel, &mut rng),
            Layer::Relu,
            Layer::GlobalMaxPool1d,
            Layer::dense(config.filters, config.dense, 0.0, &mut rng),
            Layer::Relu,
            Layer::Dropout {
                rate: config.dropout,
            },
            Layer::dense(config.dense, 1, 0.0, &mut rng),
        ];
        let network = Network::new(vec![config.max_seq_len], layers)?;
        Ok(Self {
            network,
            kernel: config.kernel,
        })
    }

    pub fn from_network(network: Network<f32>) -> Result<Self> {
        let kinds: Vec<&str> = network.layers().iter().map(|l| l.kind()).collect();
        let expected = [
            "embedding",
            "conv1d",
            "relu",
            "global_max_pool1d",
            "dense",
            "relu",
            "dropout",
            "dense",
        ];
        if kinds != expected {
            return Err(Error::format("PSSNN01", "not a text CNN layer stack"));
        }
        let Layer::Conv1d(conv) = &network.layers()[1] else {
            unreachable!()
        };
        let kernel = conv.kernel;
        Ok(Self { network, kernel })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn max_seq_len(&self) -> usize {
        self.network.input_shape()[0]
    }

    /// Truncates to `max_seq_len` and appends up to `kernel` pad rows, which
    /// is equivalent to padding to `max_seq_len` under the global max pool.
    pub fn sequence_tensor(&self, ids: &[u32]) -> Tensor<f32> {
        let max = self.max_seq_len();
        let len = ids.len().min(max);
        let padded = (len + self.kernel).min(max);
        let mut data: Vec<f32> = ids[..len].iter().map(|&i| i as f32).collect();
        data.resize(padded, PAD_ID as f32);
        Tensor::from_vec(data)
    }

    /// Trains on encoded sequences (see `encode_text`).
    pub fn train(
        &mut self,
        sequences: &[Vec<u32>],
        labels: &[Label],
        learning_rate: f64,
        batch_size: usize,
        policy: EpochPolicy,
        seed: u64,
    ) -> Result<History> {
        let inputs: Vec<Tensor<f32>> = sequences.iter().map(|s| self.sequence_tensor(s)).collect();
        let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
        let config = FitConfig {
            batch_size,
            optimizer: OptimizerKind::rmsprop(learning_rate),
            policy,
            seed,
        };
        fit(&mut self.network, 0, &inputs, &targets, &config)
    }

    pub fn predict_proba(&self, sequences: &[Vec<u32>]) -> Result<Vec<f64>> {
        let inputs: Vec<Tensor<f32>> = sequences.iter().map(|s| self.sequence_tensor(s)).collect();
        predict_proba(&self.network, 0, &inputs)
    }

    /// Post-ReLU activations of the hidden dense layer.
    pub fn extract_penultimate(&self, ids: &[u32]) -> Result<Vec<f32>> {
        let out = self
            .network
            .infer(&[self.sequence_tensor(ids)], 0, TEXT_PENULTIMATE_END)?;
        Ok(out.into_iter().next().unwrap().into_data())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.network.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_network(Network::load(path)?)
    }
}

pub fn train_text_cnn(
    sequences: &[Vec<u32>],
    labels: &[Label],
    config: &TextCnnConfig,
    policy: EpochPolicy,
    seed: u64,
) -> Result<(TextCnn, History)> {
    let mut model = TextCnn::new(config, seed)?;
    let history = model.train(
        sequences,
        labels,
        config.learning_rate,
        config.batch_size,
        policy,
        seed,
    )?;
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageCnnConfig {
    /// Output channels of each conv → ReLU → 2×2 max-pool block.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub dense: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub backbone_frozen: bool,
}

impl Default for ImageCnnConfig {
    fn default() -> Self {
        Self {
            channels: vec![8, 16, 32, 64],
            kernel: 3,
            dense: 256,
            dropout: 0.5,
            learning_rate: 0.0001,
            batch_size: 32,
            backbone_frozen: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ImageCnn {
    network: Network<f32>,
    backbone_len: usize,
}

pub fn image_tensor(page: &Binary224) -> Tensor<f32> {
    let data = page.values().map(f32::from).collect();
    Tensor::new(vec![PAGE_SIDE, PAGE_SIDE, 1], data).expect("224×224 page")
}

impl ImageCnn {
    pub fn new(config: &ImageCnnConfig, seed: u64) -> Result<Self> {
        if config.channels.is_empty() || config.channels.len() > 7 || config.kernel.is_multiple_of(2) {
            return Err(Error::InvalidParameter(
                "backbone needs 1 to 7 blocks and an odd kernel".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::InvalidParameter("dropout must be in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut in_ch = 1;
        for &c in &config.channels {
            layers.push(Layer::conv2d(in_ch, c, config.kernel, &mut rng));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool2d);
            in_ch = c;
        }
        layers.push(Layer::Flatten);
        let backbone_len = layers.len();
        let side = PAGE_SIDE >> config.channels.len();
        let flat = side * side * in_ch;
        layers.push(Layer::dense(flat, config.dense, 0.0, &mut rng));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout {
            rate: config.dropout,
        });
        layers.push(Layer::dense(config.dense, 1, 0.0, &mut rng));
        let mut network = Network::new(vec![PAGE_SIDE, PAGE_SIDE, 1], layers)?;
        if config.backbone_frozen {
            network.set_trainable(0..backbone_len, false);
        }
        Ok(Self {
            network,
            backbone_len,
        })
    }

    pub fn from_network(network: Network<f32>) -> Result<Self> {
        let backbone_len = network
            .layers()
            .iter()
            .position(|l| matches!(l, Layer::Flatten))
            .map(|i| i + 1)
            .ok_or_else(|| Error::format("PSSNN01", "not an image CNN layer stack"))?;
        if network.len() != backbone_len + 4 || network.input_shape() != [PAGE_SIDE, PAGE_SIDE, 1] {
            return Err(Error::format("PSSNN01", "not an image CNN layer stack"));
        }
        Ok(Self {
            network,
            backbone_len,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn backbone_len(&self) -> usize {
        self.backbone_len
    }

    pub fn flatten_len(&self) -> usize {
        self.network.shape_before(self.backbone_len)[0]
    }

    pub fn backbone_frozen(&self) -> bool {
        !self.network.layers()[..self.backbone_len]
            .iter()
            .any(|l| l.is_trainable())
    }

    /// Replaces backbone weights with those of the conv layers of `source`,
    /// in order. Shapes must match exactly.
    pub fn load_backbone(&mut self, source: &Network<f32>) -> Result<()> {
        let src: Vec<_> = source
            .layers()
            .iter()
            .filter(|l| matches!(l, Layer::Conv2d(_)))
            .flat_map(|l| l.params())
            .map(|p| p.value.clone())
            .collect();
        let frozen = self.backbone_frozen();
        let mut dst: Vec<_> = self.network.params_mut();
        let n_backbone = 2 * self.backbone_len / 3;
        if src.len() != n_backbone {
            return Err(Error::DimensionMismatch(n_backbone, src.len()));
        }
        for (p, v) in dst.iter_mut().take(n_backbone).zip(src) {
            if p.value.shape() != v.shape() {
                return Err(Error::InvalidParameter(format!(
                    "backbone tensor shape {:?} does not match {:?}",
                    v.shape(),
                    p.value.shape()
                )));
            }
            p.value = v;
            p.trainable = !frozen;
        }
        Ok(())
    }

    /// Flattened backbone activations for each page.
    pub fn backbone_features(&self, pages: &[&Binary224]) -> Result<Vec<Tensor<f32>>> {
        pages
            .iter()
            .map(|p| {
                Ok(self
                    .network
                    .infer(&[image_tensor(p)], 0, self.backbone_len)?
                    .remove(0))
            })
            .collect()
    }

    /// Trains the head, and the backbone unless frozen. A frozen backbone
    /// is run once per page and its outputs are reused across epochs.
    pub fn train(
        &mut self,
        pages: &[&Binary224],
        labels: &[Label],
        learning_rate: f64,
        batch_size: usize,
        policy: EpochPolicy,
        seed: u64,
    ) -> Result<History> {
        let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
        let config = FitConfig {
            batch_size,
            optimizer: OptimizerKind::adam(learning_rate),
            policy,
            seed,
        };
        if self.backbone_frozen() {
            let features = self.backbone_features(pages)?;
            fit(&mut self.network, self.backbone_len, &features, &targets, &config)
        } else {
            let inputs: Vec<Tensor<f32>> = pages.iter().map(|p| image_tensor(p)).collect();
            fit(&mut self.network, 0, &inputs, &targets, &config)
        }
    }

    pub fn predict_proba(&self, pages: &[&Binary224]) -> Result<Vec<f64>> {
        let features = self.backbone_features(pages)?;
        predict_proba(&self.network, self.backbone_len, &features)
    }

    /// Post-ReLU activations of the head's hidden dense layer.
    pub fn extract_penultimate(&self, page: &Binary224) -> Result<Vec<f32>> {
        let features = self.backbone_features(&[page])?;
        self.penultimate_from_features(&features[0])
    }

    pub fn penultimate_from_features(&self, features: &Tensor<f32>) -> Result<Vec<f32>> {
        let out = self.network.infer(
            std::slice::from_ref(features),
            self.backbone_len,
            self.backbone_len + 2,
        )?;
        Ok(out.into_iter().next().unwrap().into_data())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.network.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_network(Network::load(path)?)
    }
}

pub fn train_image_cnn(
    pages: &[&Binary224],
    labels: &[Label],
    config: &ImageCnnConfig,
    policy: EpochPolicy,
    seed: u64,
) -> Result<(ImageCnn, History)> {
    let mut model = ImageCnn::new(config, seed)?;
    let history = model.train(
        pages,
        labels,
        config.learning_rate,
        config.batch_size,
        policy,
        seed,
    )?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backbone_flattens_to_12544() {
        let cnn = ImageCnn::new(&ImageCnnConfig::default(), 1).unwrap();
        assert_eq!(cnn.flatten_len(), 64 * 14 * 14);
        assert!(cnn.backbone_frozen());
    }

    #[test]
    fn blank_page_output_is_a_probability() {
        let cnn = ImageCnn::new(&ImageCnnConfig::default(), 1).unwrap();
        let blank = Binary224::blank();
        let p = cnn.predict_proba(&[&blank]).unwrap()[0];
        assert!(p > 0.0 && p < 1.0);
        let v = cnn.extract_penultimate(&blank).unwrap();
        assert_eq!(v.len(), 256);
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn text_penultimate_shape_and_determinism() {
        let mut cfg = TextCnnConfig::new(10);
        cfg.embed_dim = 8;
        cfg.filters = 6;
        let cnn = TextCnn::new(&cfg, 3).unwrap();
        for ids in [vec![], vec![2, 3], vec![5; 700]] {
            let a = cnn.extract_penultimate(&ids).unwrap();
            assert_eq!(a.len(), 256);
            assert!(a.iter().all(|&x| x >= 0.0));
            assert_eq!(a, cnn.extract_penultimate(&ids).unwrap());
        }
    }

    #[test]
    fn short_padding_equals_full_padding() {
        let mut cfg = TextCnnConfig::new(10);
        cfg.embed_dim = 8;
        cfg.filters = 6;
        cfg.max_seq_len = 40;
        let cnn = TextCnn::new(&cfg, 3).unwrap();
        let ids = vec![3u32, 7, 1, 11];
        let mut full: Vec<f32> = ids.iter().map(|&i| i as f32).collect();
        full.resize(40, 0.0);
        let net = cnn.network();
        let a = net.infer(&[cnn.sequence_tensor(&ids)], 0, net.len()).unwrap();
        let b = net.infer(&[Tensor::from_vec(full)], 0, net.len()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = TextCnnConfig::new(10);
        cfg.max_seq_len = 2;
        assert!(TextCnn::new(&cfg, 1).is_err());
        let img = ImageCnnConfig {
            kernel: 2,
            ..ImageCnnConfig::default()
        };
        assert!(ImageCnn::new(&img, 1).is_err());
    }
}
