use crate::corpus::{Label, PageStream};
use crate::error::Result;
use crate::neural::{encode_text, ImageCnn, TextCnn};
use crate::svm::{predict_svm, FeatureSpec, LinearSvmModel, StreamFeatures};
use crate::textproc::Vocabulary;
use crate::topics::TopicFeaturizer;

use super::cache::FeatureCache;
use super::evaluate::SegmentationResult;
use super::fusion::{threshold, FusionInputs, FusionMlp};

/// Any trained per-page ND/SD classifier.
pub trait PagePredictor {
    fn predict_stream(&self, stream: &PageStream) -> Result<Vec<Label>>;
}

/// Page 0 is forced ND; every later ND prediction opens a new document.
pub fn segment_stream(
    stream: &PageStream,
    predictor: &dyn PagePredictor,
) -> Result<SegmentationResult> {
    SegmentationResult::from_predictions(stream.id(), &predictor.predict_stream(stream)?)
}

/// Fixed per-page labels, e.g. read from a file.
pub struct FixedPredictions(pub Vec<Label>);

impl PagePredictor for FixedPredictions {
    fn predict_stream(&self, _stream: &PageStream) -> Result<Vec<Label>> {
        Ok(self.0.clone())
    }
}

pub struct SvmPredictor<'a> {
    pub model: &'a LinearSvmModel,
    pub spec: FeatureSpec,
    pub vocab: &'a Vocabulary,
    pub topics: Option<&'a TopicFeaturizer>,
}

impl PagePredictor for SvmPredictor<'_> {
    fn predict_stream(&self, stream: &PageStream) -> Result<Vec<Label>> {
        let topics = if self.spec.needs_topics() {
            self.topics
        } else {
            None
        };
        let feats = StreamFeatures::compute(stream, self.vocab, topics);
        Ok(feats
            .assemble_all(&self.spec)?
            .iter()
            .map(|v| predict_svm(self.model, v).1)
            .collect())
    }
}

pub struct TextCnnPredictor<'a> {
    pub model: &'a TextCnn,
    pub vocab: &'a Vocabulary,
}

impl PagePredictor for TextCnnPredictor<'_> {
    fn predict_stream(&self, stream: &PageStream) -> Result<Vec<Label>> {
        let seqs: Vec<Vec<u32>> = stream
            .pages()
            .iter()
            .map(|p| encode_text(&p.text, self.vocab))
            .collect();
        Ok(self.model.predict_proba(&seqs)?.into_iter().map(threshold).collect())
    }
}

pub struct ImageCnnPredictor<'a> {
    pub model: &'a ImageCnn,
}

impl PagePredictor for ImageCnnPredictor<'_> {
    fn predict_stream(&self, stream: &PageStream) -> Result<Vec<Label>> {
        let pages: Vec<_> = stream.pages().iter().map(|p| &p.image).collect();
        Ok(self.model.predict_proba(&pages)?.into_iter().map(threshold).collect())
    }
}

pub struct FusionPredictor<'a> {
    pub inputs: FusionInputs<'a>,
    pub mlp: &'a FusionMlp,
}

impl PagePredictor for FusionPredictor<'_> {
    fn predict_stream(&self, stream: &PageStream) -> Result<Vec<Label>> {
        let feats = self
            .inputs
            .stream_features(stream, &mut FeatureCache::in_memory())?;
        Ok(self
            .mlp
            .predict_proba(&feats.vectors()?)?
            .into_iter()
            .map(threshold)
            .collect())
    }
}
