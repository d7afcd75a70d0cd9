use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pss_core::corpus::{generate_synthetic_streams, load_streams, write_streams, Label, PageStream};
use pss_core::hashing::derive_seed;
use pss_core::neural::{encode_text, ImageCnn, Network, TextCnn};
use pss_core::pipeline::{
    evaluate_streams, fit_topics, fit_vocabulary, run_experiment, segment_stream, train_fusion,
    ExperimentConfig, FeatureCache, FixedPredictions, FusionInputs, FusionMlp, FusionPredictor,
    ImageCnnPredictor, PagePredictor, SvmPredictor, TextCnnPredictor,
};
use pss_core::svm::{train_svm, FeatureSpec, LinearSvmModel, StreamFeatures};
use pss_core::textproc::Vocabulary;
use pss_core::topics::{TopicFeaturizer, TopicModel};

#[derive(Parser)]
#[command(name = "pss", version, about = "Page stream segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. `--set` accepts any experiment
/// config key, e.g. `--set svm.c=0.5`.
#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.synth.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct Data {
    /// Manifest CSV: stream_id,page_index,image,text,label.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the vocabulary and cache binarized pages and token ids.
    Prepare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the LDA topic model.
    TrainLda {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the linear SVM baseline.
    TrainSvm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        lda: Option<PathBuf>,
        /// unigrams[,topics][,topicdiff][,prev]
        #[arg(long, default_value = "unigrams")]
        features: FeatureSpec,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the text CNN.
    TrainCnnText {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the image CNN.
    TrainCnnImage {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// PSSNN01 file whose conv layers replace the backbone weights.
        #[arg(long)]
        backbone: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the fusion MLP on top of the other three models.
    TrainFusion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        models: FusionModels,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment streams into documents and write
    /// `stream_id,doc_id,first_page,last_page` CSV.
    Segment {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        classifier: ClassifierArgs,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a segmentation CSV against the manifest's gold labels.
    Evaluate {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        segments: PathBuf,
    },
    /// Run the full seven-row protocol.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Output directory for reports and models.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FusionModels {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    lda: PathBuf,
    #[arg(long)]
    text_model: PathBuf,
    #[arg(long)]
    image_model: PathBuf,
}

#[derive(Args)]
struct ClassifierArgs {
    /// svm, text, image or fusion.
    #[arg(long)]
    classifier: String,
    /// Model file of the chosen classifier.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    lda: Option<PathBuf>,
    #[arg(long)]
    text_model: Option<PathBuf>,
    #[arg(long)]
    image_model: Option<PathBuf>,
    /// Feature groups of an SVM model.
    #[arg(long, default_value = "unigrams")]
    features: FeatureSpec,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { common, out } => {
            let cfg = common.resolve()?;
            let streams = generate_synthetic_streams(&cfg.synth)?;
            let manifest = write_streams(&streams, &out)?;
            println!("{}", manifest.display());
        }
        Command::Prepare { common, data, out } => prepare(&common.resolve()?, &data.manifest, &out)?,
        Command::TrainLda {
            common,
            data,
            vocab,
            out,
        } => {
            let cfg = common.resolve()?;
            let streams = load_streams(&data.manifest)?;
            let vocab = Vocabulary::load(&vocab)?;
            let topics = fit_topics(&streams, &vocab, &cfg)?;
            topics.model().save(&out)?;
        }
        Command::TrainSvm {
            common,
            data,
            vocab,
            lda,
            features,
            out,
        } => {
            let cfg = common.resolve()?;
            let streams = labeled(&data.manifest)?;
            let vocab = Vocabulary::load(&vocab)?;
            let topics = load_topics(lda.as_deref(), features.needs_topics())?;
            let mut examples = Vec::new();
            for s in &streams {
                examples.extend(
                    StreamFeatures::compute(s, &vocab, topics.as_ref()).assemble_all(&features)?,
                );
            }
            let mut params = cfg.svm.clone();
            params.seed = derive_seed(cfg.seed, "svm");
            let (model, trace) = train_svm(&examples, &all_labels(&streams), &params)?;
            eprintln!("epochs: {}  final violation: {:.4}", trace.epochs, trace.final_violation);
            model.save(&out)?;
        }
        Command::TrainCnnText {
            common,
            data,
            vocab,
            out,
        } => {
            let cfg = common.resolve()?;
            let streams = labeled(&data.manifest)?;
            let vocab = Vocabulary::load(&vocab)?;
            let seqs: Vec<Vec<u32>> = pages(&streams)
                .map(|p| encode_text(&p.text, &vocab))
                .collect();
            let mut text_cfg = cfg.text_cnn.clone();
            text_cfg.vocab_size = vocab.len();
            let (model, hist) = pss_core::neural::train_text_cnn(
                &seqs,
                &all_labels(&streams),
                &text_cfg,
                cfg.epoch_policy(),
                derive_seed(cfg.seed, "text-cnn"),
            )?;
            eprintln!("epochs: {}", hist.epochs());
            model.save(&out)?;
        }
        Command::TrainCnnImage {
            common,
            data,
            backbone,
            out,
        } => {
            let cfg = common.resolve()?;
            let streams = labeled(&data.manifest)?;
            let images: Vec<_> = pages(&streams).map(|p| &p.image).collect();
            let seed = derive_seed(cfg.seed, "image-cnn");
            let mut model = ImageCnn::new(&cfg.image_cnn, seed)?;
            if let Some(path) = backbone.or(cfg.backbone.clone()) {
                model.load_backbone(&Network::load(&path)?)?;
            }
            let hist = model.train(
                &images,
                &all_labels(&streams),
                cfg.image_cnn.learning_rate,
                cfg.image_cnn.batch_size,
                cfg.epoch_policy(),
                seed,
            )?;
            eprintln!("epochs: {}", hist.epochs());
            model.save(&out)?;
        }
        Command::TrainFusion {
            common,
            data,
            models,
            out,
        } => {
            let cfg = common.resolve()?;
            let streams = labeled(&data.manifest)?;
            let vocab = Vocabulary::load(&models.vocab)?;
            let topics = TopicFeaturizer::new(TopicModel::load(&models.lda)?);
            let text = TextCnn::load(&models.text_model)?;
            let image = ImageCnn::load(&models.image_model)?;
            let inputs = FusionInputs::new(&vocab, &text, &image, &topics);
            let mut cache = match &cfg.cache_dir {
                Some(d) => FeatureCache::persistent(d)?,
                None => FeatureCache::in_memory(),
            };
            let mut vectors = Vec::new();
            for s in &streams {
                vectors.extend(inputs.stream_features(s, &mut cache)?.vectors()?);
            }
            let (mlp, hist) = train_fusion(
                &vectors,
                &all_labels(&streams),
                &cfg.fusion,
                cfg.epoch_policy(),
                derive_seed(cfg.seed, "fusion"),
            )?;
            eprintln!("epochs: {}", hist.epochs());
            mlp.save(&out)?;
        }
        Command::Segment {
            data,
            classifier,
            out,
        } => segment(&data.manifest, &classifier, out.as_deref())?,
        Command::Evaluate { data, segments } => evaluate(&data.manifest, &segments)?,
        Command::Experiment { common, out } => {
            let mut cfg = common.resolve()?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let start = Instant::now();
            let outcome = run_experiment(&cfg)?;
            print!("{}", outcome.report.to_text());
            eprintln!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn labeled(manifest: &Path) -> Result<Vec<PageStream>> {
    let streams = load_streams(manifest)?;
    if let Some(s) = streams.iter().find(|s| !s.is_labeled()) {
        bail!("stream {} has no labels; training needs labeled pages", s.id());
    }
    Ok(streams)
}

fn all_labels(streams: &[PageStream]) -> Vec<Label> {
    streams.iter().flat_map(|s| s.labels().unwrap()).collect()
}

fn pages(streams: &[PageStream]) -> impl Iterator<Item = &pss_core::corpus::PageRecord> {
    streams.iter().flat_map(|s| s.pages())
}

fn load_topics(path: Option<&Path>, required: bool) -> Result<Option<TopicFeaturizer>> {
    match path {
        Some(p) => Ok(Some(TopicFeaturizer::new(TopicModel::load(p)?))),
        None if required => bail!("topic features need --lda"),
        None => Ok(None),
    }
}

/// Writes `vocab.tsv`, `pages/<stream>_<index>.bin` (packed 224×224 pages)
/// and `tokens.tsv` (`stream_id<TAB>page_index<TAB>label<TAB>ids`).
fn prepare(cfg: &ExperimentConfig, manifest: &Path, out: &Path) -> Result<()> {
    let streams = load_streams(manifest)?;
    let vocab = fit_vocabulary(&streams, cfg)?;
    let page_dir = out.join("pages");
    fs::create_dir_all(&page_dir).with_context(|| format!("creating {}", page_dir.display()))?;
    vocab.save(&out.join("vocab.tsv"))?;
    let mut tokens = String::new();
    for s in &streams {
        for p in s.pages() {
            let name = format!("{}_{:05}.bin", s.id(), p.page_index);
            fs::write(page_dir.join(&name), p.image.to_bytes())?;
            let ids: Vec<String> = encode_text(&p.text, &vocab)
                .iter()
                .map(|i| i.to_string())
                .collect();
            let label = p.label.map_or("", |l| l.as_str());
            tokens.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.id(),
                p.page_index,
                label,
                ids.join(" ")
            ));
        }
    }
    fs::write(out.join("tokens.tsv"), tokens)?;
    Ok(())
}

fn segment(manifest: &Path, args: &ClassifierArgs, out: Option<&Path>) -> Result<()> {
    let streams = load_streams(manifest)?;
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone().with_context(|| format!("--{flag} is required for this classifier"))
    };
    let mut csv = String::from("stream_id,doc_id,first_page,last_page\n");
    let mut run = |predictor: &dyn PagePredictor| -> Result<()> {
        for s in &streams {
            csv.push_str(&segment_stream(s, predictor)?.csv_rows());
        }
        Ok(())
    };
    match args.classifier.as_str() {
        "svm" => {
            let vocab = Vocabulary::load(&need(&args.vocab, "vocab")?)?;
            let topics = load_topics(args.lda.as_deref(), args.features.needs_topics())?;
            let model = LinearSvmModel::load(&args.model)?;
            run(&SvmPredictor {
                model: &model,
                spec: args.features,
                vocab: &vocab,
                topics: topics.as_ref(),
            })?;
        }
        "text" => {
            let vocab = Vocabulary::load(&need(&args.vocab, "vocab")?)?;
            let model = TextCnn::load(&args.model)?;
            run(&TextCnnPredictor {
                model: &model,
                vocab: &vocab,
            })?;
        }
        "image" => {
            let model = ImageCnn::load(&args.model)?;
            run(&ImageCnnPredictor { model: &model })?;
        }
        "fusion" => {
            let vocab = Vocabulary::load(&need(&args.vocab, "vocab")?)?;
            let topics = TopicFeaturizer::new(TopicModel::load(&need(&args.lda, "lda")?)?);
            let text = TextCnn::load(&need(&args.text_model, "text-model")?)?;
            let image = ImageCnn::load(&need(&args.image_model, "image-model")?)?;
            let mlp = FusionMlp::load(&args.model)?;
            run(&FusionPredictor {
                inputs: FusionInputs::new(&vocab, &text, &image, &topics),
                mlp: &mlp,
            })?;
        }
        other => bail!("unknown classifier `{other}`; expected svm, text, image or fusion"),
    }
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn evaluate(manifest: &Path, segments: &Path) -> Result<()> {
    let streams = labeled(manifest)?;
    let mut reader = csv::Reader::from_path(segments)
        .with_context(|| format!("reading {}", segments.display()))?;
    let mut starts: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for row in reader.records() {
        let row = row?;
        let first: usize = row.get(2).context("missing first_page")?.parse()?;
        starts.entry(row.get(0).context("missing stream_id")?.to_string()).or_default().push(first);
    }
    let mut predictions = Vec::new();
    for s in &streams {
        let mut labels = vec![Label::SameDocument; s.len()];
        for &i in starts.get(s.id()).map(|v| v.as_slice()).unwrap_or(&[]) {
            if i >= s.len() {
                bail!("segment start {i} outside stream {}", s.id());
            }
            labels[i] = Label::NewDocument;
        }
        predictions.push(FixedPredictions(labels).predict_stream(s)?);
    }
    let report = evaluate_streams(&streams, &predictions)?;
    let show = |m: &pss_core::pipeline::Metrics, name: &str| {
        let c = m.confusion;
        println!(
            "{name}: accuracy {}  kappa {}  TP {} FP {} FN {} TN {}",
            m.accuracy.map_or("NA".into(), |a| format!("{a:.4}")),
            m.kappa.map_or("NA".into(), |k| format!("{k:.4}")),
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        );
    };
    show(&report.all_pages, "all pages");
    show(&report.excluding_first, "excluding first pages");
    if let Some((fp, fn_)) = report.fp_fn_shares() {
        println!("error shares: FP {fp:.4}  FN {fn_:.4}");
    }
    Ok(())
}
