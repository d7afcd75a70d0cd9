use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{generate_synthetic_streams, load_streams, split_streams, Label, PageStream};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::neural::{
    encode_text, train_image_cnn, train_text_cnn, History, ImageCnn, Network, TextCnn,
};
use crate::svm::{predict_svm, train_svm, FeatureSpec, LinearSvmModel, StreamFeatures};
use crate::textproc::{build_vocabulary, Vocabulary};
use crate::topics::{fit_lda, TopicFeaturizer};

use super::cache::FeatureCache;
use super::config::ExperimentConfig;
use super::evaluate::{evaluate_streams, EvaluationReport, Metrics};
use super::fusion::{stream_thetas, threshold, topic_fingerprint, train_fusion, FusionInputs, FusionMlp};

pub const ROW_NAMES: [&str; 7] = [
    "SVM unigrams",
    "SVM + topics",
    "SVM + topic difference",
    "SVM + predecessor page",
    "CNN text",
    "CNN image",
    "MLP image + text",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RowReport {
    pub name: String,
    pub report: EvaluationReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<RowReport>,
    pub train_pages: usize,
    pub test_pages: usize,
    /// Accuracy of always predicting the majority test class.
    pub majority_baseline: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

impl ExperimentReport {
    pub fn row(&self, name: &str) -> Option<&EvaluationReport> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.report)
    }

    pub fn accuracy(&self, name: &str) -> Option<f64> {
        self.row(name).and_then(|r| r.all_pages.accuracy)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "train pages: {}  test pages: {}  majority baseline accuracy: {:.4}",
            self.train_pages, self.test_pages, self.majority_baseline
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>7} {:>5} {:>5} {:>5} {:>5} {:>8} {:>10} {:>10}",
            "model", "accuracy", "kappa", "TP", "FP", "FN", "TN", "FP share", "acc excl 0", "kap excl 0"
        );
        for row in &self.rows {
            let m = &row.report.all_pages;
            let c = m.confusion;
            let _ = writeln!(
                out,
                "{:<24} {:>8} {:>7} {:>5} {:>5} {:>5} {:>5} {:>8} {:>10} {:>10}",
                row.name,
                fmt_opt(m.accuracy),
                fmt_opt(m.kappa),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                fmt_opt(c.error_shares().map(|s| s.0)),
                fmt_opt(row.report.excluding_first.accuracy),
                fmt_opt(row.report.excluding_first.kappa),
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,accuracy,kappa,tp,fp,fn,tn,fp_share,fn_share,accuracy_excl_first,kappa_excl_first\n",
        );
        for row in &self.rows {
            let m: &Metrics = &row.report.all_pages;
            let c = m.confusion;
            let shares = c.error_shares();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.name,
                fmt_opt(m.accuracy),
                fmt_opt(m.kappa),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                fmt_opt(shares.map(|s| s.0)),
                fmt_opt(shares.map(|s| s.1)),
                fmt_opt(row.report.excluding_first.accuracy),
                fmt_opt(row.report.excluding_first.kappa),
            );
        }
        out
    }
}

/// Fitted artifacts of one run.
pub struct ExperimentArtifacts {
    pub vocab: Vocabulary,
    pub topics: TopicFeaturizer,
    pub svms: Vec<LinearSvmModel>,
    pub text_cnn: TextCnn,
    pub image_cnn: ImageCnn,
    pub fusion: FusionMlp,
    pub histories: Vec<(String, History)>,
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub artifacts: ExperimentArtifacts,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<PageStream>> {
    let streams = match &cfg.manifest {
        Some(path) => load_streams(path)?,
        None => generate_synthetic_streams(&cfg.synth)?,
    };
    if let Some(s) = streams.iter().find(|s| !s.is_labeled()) {
        return Err(Error::Stream {
            stream_id: s.id().to_string(),
            message: "experiments require labeled streams".into(),
        });
    }
    Ok(streams)
}

fn labels_of(streams: &[PageStream]) -> Vec<Label> {
    streams.iter().flat_map(|s| s.labels().unwrap()).collect()
}

pub fn fit_vocabulary(train: &[PageStream], cfg: &ExperimentConfig) -> Result<Vocabulary> {
    let texts: Vec<&str> = train
        .iter()
        .flat_map(|s| s.pages().iter().map(|p| p.text.as_str()))
        .collect();
    build_vocabulary(&texts, cfg.min_count, cfg.language)
}

pub fn fit_topics(
    train: &[PageStream],
    vocab: &Vocabulary,
    cfg: &ExperimentConfig,
) -> Result<TopicFeaturizer> {
    let docs: Vec<Vec<u32>> = train
        .iter()
        .flat_map(|s| s.pages().iter().map(|p| vocab.ids_of_text(&p.text)))
        .collect();
    let model = fit_lda(&docs, vocab.len(), &cfg.lda_params(derive_seed(cfg.seed, "lda")))?;
    Ok(TopicFeaturizer::new(model))
}

/// Runs all seven rows on one stream-level split with one master seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let streams = stage("data", load_dataset(cfg))?;
    let split = stage(
        "data",
        split_streams(&streams, cfg.train_fraction, derive_seed(cfg.seed, "split")),
    )?;
    let (train, test) = (&split.train, &split.test);
    let train_labels = labels_of(train);
    let test_labels = labels_of(test);
    let mut cache = match &cfg.cache_dir {
        Some(dir) => FeatureCache::persistent(dir)?,
        None => FeatureCache::in_memory(),
    };

    let vocab = stage("vocabulary", fit_vocabulary(train, cfg))?;
    let topics = stage("lda", fit_topics(train, &vocab, cfg))?;
    let topic_fp = topic_fingerprint(&vocab, &topics);
    let train_thetas = stage(
        "lda",
        train
            .iter()
            .map(|s| stream_thetas(s, &vocab, &topics, &topic_fp, &mut cache))
            .collect::<Result<Vec<_>>>(),
    )?;
    let test_thetas = stage(
        "lda",
        test.iter()
            .map(|s| stream_thetas(s, &vocab, &topics, &topic_fp, &mut cache))
            .collect::<Result<Vec<_>>>(),
    )?;

    let mut rows = Vec::new();
    let mut svms = Vec::new();
    let mut svm_params = cfg.svm.clone();
    svm_params.seed = derive_seed(cfg.seed, "svm");
    for (spec, name) in FeatureSpec::stages().iter().zip(ROW_NAMES) {
        let result: Result<_> = (|| {
            let assemble = |streams: &[PageStream], thetas: &[Vec<_>]| -> Result<Vec<Vec<_>>> {
                streams
                    .iter()
                    .zip(thetas)
                    .map(|(s, t)| StreamFeatures::with_thetas(s, &vocab, Some(t.clone()))?.assemble_all(spec))
                    .collect()
            };
            let x_train: Vec<_> = assemble(train, &train_thetas)?.into_iter().flatten().collect();
            let (model, _) = train_svm(&x_train, &train_labels, &svm_params)?;
            let preds: Vec<Vec<Label>> = assemble(test, &test_thetas)?
                .iter()
                .map(|vs| vs.iter().map(|v| predict_svm(&model, v).1).collect())
                .collect();
            Ok((model, evaluate_streams(test, &preds)?))
        })();
        let (model, report) = stage(name, result)?;
        svms.push(model);
        rows.push(RowReport {
            name: name.to_string(),
            report,
        });
    }

    let policy = cfg.epoch_policy();
    let encode = |streams: &[PageStream]| -> Vec<Vec<u32>> {
        streams
            .iter()
            .flat_map(|s| s.pages().iter().map(|p| encode_text(&p.text, &vocab)))
            .collect()
    };
    let mut text_cfg = cfg.text_cnn.clone();
    text_cfg.vocab_size = vocab.len();
    let (text_cnn, text_hist) = stage(
        ROW_NAMES[4],
        train_text_cnn(
            &encode(train),
            &train_labels,
            &text_cfg,
            policy,
            derive_seed(cfg.seed, "text-cnn"),
        ),
    )?;
    let text_probs = stage(ROW_NAMES[4], text_cnn.predict_proba(&encode(test)))?;
    rows.push(RowReport {
        name: ROW_NAMES[4].to_string(),
        report: stage(ROW_NAMES[4], evaluate_streams(test, &regroup(test, &text_probs)))?,
    });

    let pages = |streams: &[PageStream]| -> Vec<_> {
        streams
            .iter()
            .flat_map(|s| s.pages().iter().map(|p| p.image.clone()))
            .collect()
    };
    let train_images = pages(train);
    let train_refs: Vec<_> = train_images.iter().collect();
    let image_seed = derive_seed(cfg.seed, "image-cnn");
    let (image_cnn, image_hist) = stage(ROW_NAMES[5], match &cfg.backbone {
        None => train_image_cnn(&train_refs, &train_labels, &cfg.image_cnn, policy, image_seed),
        Some(path) => (|| {
            let mut cnn = ImageCnn::new(&cfg.image_cnn, image_seed)?;
            cnn.load_backbone(&Network::load(path)?)?;
            let h = cnn.train(
                &train_refs,
                &train_labels,
                cfg.image_cnn.learning_rate,
                cfg.image_cnn.batch_size,
                policy,
                image_seed,
            )?;
            Ok((cnn, h))
        })(),
    })?;
    let test_images = pages(test);
    let image_probs = stage(
        ROW_NAMES[5],
        image_cnn.predict_proba(&test_images.iter().collect::<Vec<_>>()),
    )?;
    rows.push(RowReport {
        name: ROW_NAMES[5].to_string(),
        report: stage(ROW_NAMES[5], evaluate_streams(test, &regroup(test, &image_probs)))?,
    });

    let inputs = FusionInputs::new(&vocab, &text_cnn, &image_cnn, &topics);
    let fusion_vectors = |streams: &[PageStream], cache: &mut FeatureCache| -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::new();
        for s in streams {
            out.extend(inputs.stream_features(s, cache)?.vectors()?);
        }
        Ok(out)
    };
    let x_train = stage(ROW_NAMES[6], fusion_vectors(train, &mut cache))?;
    let (fusion, fusion_hist) = stage(
        ROW_NAMES[6],
        train_fusion(
            &x_train,
            &train_labels,
            &cfg.fusion,
            policy,
            derive_seed(cfg.seed, "fusion"),
        ),
    )?;
    let x_test = stage(ROW_NAMES[6], fusion_vectors(test, &mut cache))?;
    let fusion_probs = stage(ROW_NAMES[6], fusion.predict_proba(&x_test))?;
    rows.push(RowReport {
        name: ROW_NAMES[6].to_string(),
        report: stage(ROW_NAMES[6], evaluate_streams(test, &regroup(test, &fusion_probs)))?,
    });

    let nd = test_labels.iter().filter(|l| l.is_new()).count();
    let majority = nd.max(test_labels.len() - nd) as f64 / test_labels.len() as f64;
    let report = ExperimentReport {
        rows,
        train_pages: train_labels.len(),
        test_pages: test_labels.len(),
        majority_baseline: majority,
    };
    let artifacts = ExperimentArtifacts {
        vocab,
        topics,
        svms,
        text_cnn,
        image_cnn,
        fusion,
        histories: vec![
            (ROW_NAMES[4].to_string(), text_hist),
            (ROW_NAMES[5].to_string(), image_hist),
            (ROW_NAMES[6].to_string(), fusion_hist),
        ],
    };
    let outcome = ExperimentOutcome { report, artifacts };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(cfg, &outcome, dir)?;
    }
    Ok(outcome)
}

fn regroup(streams: &[PageStream], probs: &[f64]) -> Vec<Vec<Label>> {
    let mut out = Vec::with_capacity(streams.len());
    let mut offset = 0;
    for s in streams {
        out.push(probs[offset..offset + s.len()].iter().map(|&p| threshold(p)).collect());
        offset += s.len();
    }
    out
}

/// Report files and every fitted model.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    let a = &outcome.artifacts;
    write("config.txt", cfg.to_text().as_bytes())?;
    write("report.txt", outcome.report.to_text().as_bytes())?;
    write("report.csv", outcome.report.to_csv().as_bytes())?;
    let mut segments = String::from("stream_id,doc_id,first_page,last_page\n");
    if let Some(fusion) = outcome.report.row(ROW_NAMES[6]) {
        for seg in &fusion.segmentations {
            segments.push_str(&seg.csv_rows());
        }
    }
    write("segments.csv", segments.as_bytes())?;
    write("vocab.tsv", a.vocab.to_tsv().as_bytes())?;
    write("lda.bin", &a.topics.model().to_bytes())?;
    for (i, m) in a.svms.iter().enumerate() {
        write(&format!("svm_stage{}.txt", i + 1), m.to_text().as_bytes())?;
    }
    write("text_cnn.pssnn", &a.text_cnn.network().to_bytes())?;
    write("image_cnn.pssnn", &a.image_cnn.network().to_bytes())?;
    write("fusion.pssnn", &a.fusion.network().to_bytes())?;
    Ok(())
}
