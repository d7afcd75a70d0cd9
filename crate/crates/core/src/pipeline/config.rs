use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::SyntheticStreamParams;
use crate::error::{Error, Result};
use crate::neural::{EpochPolicy, ImageCnnConfig, TextCnnConfig};
use crate::svm::SvmParams;
use crate::textproc::Language;
use crate::topics::LdaParams;

use super::fusion::FusionMlpConfig;

/// Every experiment setting. Serialized as flat `key = value` lines with
/// section prefixes; `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub train_fraction: f64,
    pub synth: SyntheticStreamParams,
    pub language: Language,
    pub min_count: u64,
    pub lda_k: usize,
    /// `None` means 50/K.
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_iterations: usize,
    pub lda_fold_in: usize,
    pub svm: SvmParams,
    pub text_cnn: TextCnnConfig,
    pub image_cnn: ImageCnnConfig,
    pub backbone: Option<PathBuf>,
    pub fusion: FusionMlpConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let svm = SvmParams::default();
        Self {
            seed: 1,
            manifest: None,
            train_fraction: 0.8,
            synth: SyntheticStreamParams::default(),
            language: Language::English,
            min_count: 3,
            lda_k: 50,
            lda_alpha: None,
            lda_beta: 0.01,
            lda_iterations: 1000,
            lda_fold_in: 50,
            svm,
            text_cnn: TextCnnConfig::new(0),
            image_cnn: ImageCnnConfig::default(),
            backbone: None,
            fusion: FusionMlpConfig::default(),
            max_epochs: 100,
            patience: 5,
            validation_fraction: 0.1,
            output_dir: None,
            cache_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("bad value `{value}` for `{key}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Config {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.manifest,
            &mut cfg.backbone,
            &mut cfg.output_dir,
            &mut cfg.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data.manifest" => self.manifest = opt_path(v),
            "data.train_fraction" => self.train_fraction = parse(key, v)?,
            "synth.streams" => self.synth.n_streams = parse(key, v)?,
            "synth.pages" => self.synth.pages_per_stream = parse(key, v)?,
            "synth.doc_length_mean" => self.synth.doc_length_mean = parse(key, v)?,
            "synth.header_vocab" => self.synth.header_vocab_size = parse(key, v)?,
            "synth.body_vocab" => self.synth.body_vocab_size = parse(key, v)?,
            "synth.topics" => self.synth.n_latent_topics = parse(key, v)?,
            "synth.noise" => self.synth.pixel_noise_rate = parse(key, v)?,
            "synth.seed" => self.synth.seed = parse(key, v)?,
            "synth.tokens_min" => self.synth.tokens_per_page.0 = parse(key, v)?,
            "synth.tokens_max" => self.synth.tokens_per_page.1 = parse(key, v)?,
            "synth.header_fraction" => self.synth.header_token_fraction = parse(key, v)?,
            "synth.text_signal" => self.synth.text_signal_rate = parse(key, v)?,
            "synth.image_signal" => self.synth.image_signal_rate = parse(key, v)?,
            "synth.spurious" => self.synth.spurious_rate = parse(key, v)?,
            "text.language" => self.language = parse(key, v)?,
            "vocab.min_count" => self.min_count = parse(key, v)?,
            "lda.k" => self.lda_k = parse(key, v)?,
            "lda.alpha" => {
                self.lda_alpha = if v.is_empty() { None } else { Some(parse(key, v)?) }
            }
            "lda.beta" => self.lda_beta = parse(key, v)?,
            "lda.iterations" => self.lda_iterations = parse(key, v)?,
            "lda.fold_in" => self.lda_fold_in = parse(key, v)?,
            "svm.c" => self.svm.c = parse(key, v)?,
            "svm.tolerance" => self.svm.tolerance = parse(key, v)?,
            "svm.max_iter" => self.svm.max_iter = parse(key, v)?,
            "text_cnn.embed_dim" => self.text_cnn.embed_dim = parse(key, v)?,
            "text_cnn.filters" => self.text_cnn.filters = parse(key, v)?,
            "text_cnn.kernel" => self.text_cnn.kernel = parse(key, v)?,
            "text_cnn.dense" => self.text_cnn.dense = parse(key, v)?,
            "text_cnn.dropout" => self.text_cnn.dropout = parse(key, v)?,
            "text_cnn.max_seq_len" => self.text_cnn.max_seq_len = parse(key, v)?,
            "text_cnn.lr" => self.text_cnn.learning_rate = parse(key, v)?,
            "text_cnn.batch" => self.text_cnn.batch_size = parse(key, v)?,
            "image_cnn.channels" => {
                self.image_cnn.channels = v
                    .split(',')
                    .map(|c| parse(key, c.trim()))
                    .collect::<Result<_>>()?
            }
            "image_cnn.kernel" => self.image_cnn.kernel = parse(key, v)?,
            "image_cnn.dense" => self.image_cnn.dense = parse(key, v)?,
            "image_cnn.dropout" => self.image_cnn.dropout = parse(key, v)?,
            "image_cnn.lr" => self.image_cnn.learning_rate = parse(key, v)?,
            "image_cnn.batch" => self.image_cnn.batch_size = parse(key, v)?,
            "image_cnn.frozen" => self.image_cnn.backbone_frozen = parse_bool(key, v)?,
            "image_cnn.backbone" => self.backbone = opt_path(v),
            "fusion.hidden" => self.fusion.hidden = parse(key, v)?,
            "fusion.l2" => self.fusion.l2 = parse(key, v)?,
            "fusion.dropout" => self.fusion.dropout = parse(key, v)?,
            "fusion.lr" => self.fusion.learning_rate = parse(key, v)?,
            "fusion.batch" => self.fusion.batch_size = parse(key, v)?,
            "train.max_epochs" => self.max_epochs = parse(key, v)?,
            "train.patience" => self.patience = parse(key, v)?,
            "train.validation_fraction" => self.validation_fraction = parse(key, v)?,
            "output.dir" => self.output_dir = opt_path(v),
            "cache.dir" => self.cache_dir = opt_path(v),
            _ => return Err(Error::InvalidParameter(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// All keys with their current values; `parse` of the result yields an
    /// equal config.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let t = &self.text_cnn;
        let i = &self.image_cnn;
        let f = &self.fusion;
        let channels: Vec<String> = i.channels.iter().map(|c| c.to_string()).collect();
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data.manifest", show_path(&self.manifest)),
            ("data.train_fraction", self.train_fraction.to_string()),
            ("synth.streams", s.n_streams.to_string()),
            ("synth.pages", s.pages_per_stream.to_string()),
            ("synth.doc_length_mean", s.doc_length_mean.to_string()),
            ("synth.header_vocab", s.header_vocab_size.to_string()),
            ("synth.body_vocab", s.body_vocab_size.to_string()),
            ("synth.topics", s.n_latent_topics.to_string()),
            ("synth.noise", s.pixel_noise_rate.to_string()),
            ("synth.seed", s.seed.to_string()),
            ("synth.tokens_min", s.tokens_per_page.0.to_string()),
            ("synth.tokens_max", s.tokens_per_page.1.to_string()),
            ("synth.header_fraction", s.header_token_fraction.to_string()),
            ("synth.text_signal", s.text_signal_rate.to_string()),
            ("synth.image_signal", s.image_signal_rate.to_string()),
            ("synth.spurious", s.spurious_rate.to_string()),
            ("text.language", self.language.to_string()),
            ("vocab.min_count", self.min_count.to_string()),
            ("lda.k", self.lda_k.to_string()),
            (
                "lda.alpha",
                self.lda_alpha.map(|a| a.to_string()).unwrap_or_default(),
            ),
            ("lda.beta", self.lda_beta.to_string()),
            ("lda.iterations", self.lda_iterations.to_string()),
            ("lda.fold_in", self.lda_fold_in.to_string()),
            ("svm.c", self.svm.c.to_string()),
            ("svm.tolerance", self.svm.tolerance.to_string()),
            ("svm.max_iter", self.svm.max_iter.to_string()),
            ("text_cnn.embed_dim", t.embed_dim.to_string()),
            ("text_cnn.filters", t.filters.to_string()),
            ("text_cnn.kernel", t.kernel.to_string()),
            ("text_cnn.dense", t.dense.to_string()),
            ("text_cnn.dropout", t.dropout.to_string()),
            ("text_cnn.max_seq_len", t.max_seq_len.to_string()),
            ("text_cnn.lr", t.learning_rate.to_string()),
            ("text_cnn.batch", t.batch_size.to_string()),
            ("image_cnn.channels", channels.join(",")),
            ("image_cnn.kernel", i.kernel.to_string()),
            ("image_cnn.dense", i.dense.to_string()),
            ("image_cnn.dropout", i.dropout.to_string()),
            ("image_cnn.lr", i.learning_rate.to_string()),
            ("image_cnn.batch", i.batch_size.to_string()),
            ("image_cnn.frozen", i.backbone_frozen.to_string()),
            ("image_cnn.backbone", show_path(&self.backbone)),
            ("fusion.hidden", f.hidden.to_string()),
            ("fusion.l2", f.l2.to_string()),
            ("fusion.dropout", f.dropout.to_string()),
            ("fusion.lr", f.learning_rate.to_string()),
            ("fusion.batch", f.batch_size.to_string()),
            ("train.max_epochs", self.max_epochs.to_string()),
            ("train.patience", self.patience.to_string()),
            ("train.validation_fraction", self.validation_fraction.to_string()),
            ("output.dir", show_path(&self.output_dir)),
            ("cache.dir", show_path(&self.cache_dir)),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn lda_params(&self, seed: u64) -> LdaParams {
        let mut p = LdaParams::with_topics(self.lda_k, seed);
        if let Some(a) = self.lda_alpha {
            p.alpha = a;
        }
        p.beta = self.lda_beta;
        p.iterations = self.lda_iterations;
        p.fold_in_sweeps = self.lda_fold_in;
        p
    }

    pub fn epoch_policy(&self) -> EpochPolicy {
        EpochPolicy::EarlyStopping {
            max_epochs: self.max_epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_constants() {
        let c = ExperimentConfig::default();
        assert_eq!(c.lda_params(0).alpha, 1.0);
        assert_eq!((c.text_cnn.embed_dim, c.text_cnn.filters, c.text_cnn.kernel), (300, 350, 3));
        assert_eq!(c.fusion.learning_rate, 0.0005);
        assert_eq!(c.image_cnn.learning_rate, 0.0001);
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let mut c = ExperimentConfig::default();
        c.set("lda.k", "7").unwrap();
        c.set("image_cnn.channels", "4, 8").unwrap();
        c.set("output.dir", "/tmp/x").unwrap();
        c.set("lda.alpha", "0.25").unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        let err = ExperimentConfig::parse("seed = 3\n\nsvm.cc = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }));
        assert!(ExperimentConfig::parse("lda.k = many").is_err());
        assert!(ExperimentConfig::parse("justakey").is_err());
        let c = ExperimentConfig::parse("# comment\nsvm.c = 0.5  # trailing\n").unwrap();
        assert_eq!(c.svm.c, 0.5);
    }
}
