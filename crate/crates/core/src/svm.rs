//! Baseline classifier: staged sparse text features and an L2-regularized
//! L1-loss linear SVM solved by dual coordinate descent.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, PageStream};
use crate::error::{Error, Result};
use crate::textproc::{count_vector, SparseVector, Vocabulary};
use crate::topics::{cosine_distance, hellinger, ThetaVector, TopicFeaturizer};

pub const PREV_PREFIX: &str = "PREV#";

/// Enabled feature groups. The four cumulative stages are unigrams,
/// +topics, +topic difference, +predecessor copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureSpec {
    pub unigrams: bool,
    pub topics: bool,
    pub topic_diff: bool,
    pub predecessor: bool,
}

impl FeatureSpec {
    pub fn stages() -> [FeatureSpec; 4] {
        let mut spec = FeatureSpec {
            unigrams: true,
            topics: false,
            topic_diff: false,
            predecessor: false,
        };
        let s1 = spec;
        spec.topics = true;
        let s2 = spec;
        spec.topic_diff = true;
        let s3 = spec;
        spec.predecessor = true;
        [s1, s2, s3, spec]
    }

    pub fn needs_topics(&self) -> bool {
        self.topics || self.topic_diff
    }

    fn validate(&self) -> Result<()> {
        if !(self.unigrams || self.topics || self.topic_diff) {
            return Err(Error::InvalidParameter(
                "feature spec must enable at least one of unigrams, topics, topicdiff".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    /// Comma list of `unigrams`, `topics`, `topicdiff`, `prev`.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = FeatureSpec {
            unigrams: false,
            topics: false,
            topic_diff: false,
            predecessor: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "unigrams" => spec.unigrams = true,
                "topics" => spec.topics = true,
                "topicdiff" => spec.topic_diff = true,
                "prev" => spec.predecessor = true,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown feature group `{other}`"
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (on, name) in [
            (self.unigrams, "unigrams"),
            (self.topics, "topics"),
            (self.topic_diff, "topicdiff"),
            (self.predecessor, "prev"),
        ] {
            if on {
                parts.push(name);
            }
        }
        f.write_str(&parts.join(","))
    }
}

/// Per-page inputs shared by every feature stage of one stream.
pub struct StreamFeatures<'a> {
    vocab: &'a Vocabulary,
    counts: Vec<SparseVector<u32>>,
    thetas: Option<Vec<ThetaVector>>,
}

impl<'a> StreamFeatures<'a> {
    pub fn compute(
        stream: &PageStream,
        vocab: &'a Vocabulary,
        topics: Option<&TopicFeaturizer>,
    ) -> Self {
        let counts = stream
            .pages()
            .iter()
            .map(|p| count_vector(&p.text, vocab))
            .collect();
        let thetas = topics.map(|t| t.stream_thetas(stream, vocab));
        Self {
            vocab,
            counts,
            thetas,
        }
    }

    /// As `compute`, with per-page θ supplied by the caller.
    pub fn with_thetas(
        stream: &PageStream,
        vocab: &'a Vocabulary,
        thetas: Option<Vec<ThetaVector>>,
    ) -> Result<Self> {
        if let Some(t) = &thetas {
            if t.len() != stream.len() {
                return Err(Error::DimensionMismatch(stream.len(), t.len()));
            }
        }
        let counts = stream
            .pages()
            .iter()
            .map(|p| count_vector(&p.text, vocab))
            .collect();
        Ok(Self {
            vocab,
            counts,
            thetas,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    fn own_groups(&self, page: usize, spec: &FeatureSpec) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        if spec.unigrams {
            for &(id, c) in self.counts[page].entries() {
                out.push((format!("W:{}", self.vocab.term(id)), c));
            }
        }
        if spec.needs_topics() {
            let thetas = self.thetas.as_ref().ok_or_else(|| {
                Error::InvalidParameter("topic features requested without a topic model".into())
            })?;
            if spec.topics {
                for (k, &v) in thetas[page].iter().enumerate() {
                    out.push((format!("T:{k}"), v));
                }
            }
            if spec.topic_diff {
                let (h, c) = if page == 0 {
                    (1.0, 1.0)
                } else {
                    (
                        hellinger(&thetas[page], &thetas[page - 1])?,
                        cosine_distance(&thetas[page], &thetas[page - 1])?,
                    )
                };
                out.push(("D:hell".to_string(), h));
                out.push(("D:cos".to_string(), c));
            }
        }
        Ok(out)
    }

    /// Enabled groups of the page, plus a `PREV#`-prefixed copy of the
    /// predecessor's groups when requested. Page 0 has no predecessor
    /// block and its distance features are 1.0.
    pub fn assemble(&self, page: usize, spec: &FeatureSpec) -> Result<SparseVector<String>> {
        spec.validate()?;
        if page >= self.len() {
            return Err(Error::PageOutOfRange {
                index: page,
                len: self.len(),
            });
        }
        let mut pairs = self.own_groups(page, spec)?;
        if spec.predecessor && page > 0 {
            pairs.extend(
                self.own_groups(page - 1, spec)?
                    .into_iter()
                    .map(|(k, v)| (format!("{PREV_PREFIX}{k}"), v)),
            );
        }
        Ok(SparseVector::from_pairs(pairs))
    }

    pub fn assemble_all(&self, spec: &FeatureSpec) -> Result<Vec<SparseVector<String>>> {
        (0..self.len()).map(|p| self.assemble(p, spec)).collect()
    }
}

/// Feature vector of one page.
pub fn assemble_features(
    stream: &PageStream,
    page_index: usize,
    spec: &FeatureSpec,
    vocab: &Vocabulary,
    topics: Option<&TopicFeaturizer>,
) -> Result<SparseVector<String>> {
    if page_index >= stream.len() {
        return Err(Error::PageOutOfRange {
            index: page_index,
            len: stream.len(),
        });
    }
    StreamFeatures::compute(stream, vocab, topics).assemble(page_index, spec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Value of the constant augmented feature that carries the bias.
    pub bias_feature: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 0.1,
            max_iter: 1000,
            seed: 1,
            bias_feature: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvmModel {
    weights: BTreeMap<String, f64>,
    bias: f64,
}

/// Solver diagnostics.
#[derive(Clone, Debug, Default)]
pub struct SvmTrace {
    /// Dual objective Σα − ½‖w‖² after each epoch.
    pub dual_objective: Vec<f64>,
    pub epochs: usize,
    pub final_violation: f64,
    pub alphas: Vec<f64>,
    /// Number of α outside [0, C] observed at any update.
    pub box_violations: usize,
}

/// Dual coordinate descent over examples in a seeded random order per
/// epoch. Labels: ND = +1, SD = −1.
pub fn train_svm(
    examples: &[SparseVector<String>],
    labels: &[Label],
    params: &SvmParams,
) -> Result<(LinearSvmModel, SvmTrace)> {
    if examples.len() != labels.len() {
        return Err(Error::DimensionMismatch(examples.len(), labels.len()));
    }
    if !labels.iter().any(|l| l.is_new()) {
        return Err(Error::SingleClass("SD"));
    }
    if labels.iter().all(|l| l.is_new()) {
        return Err(Error::SingleClass("ND"));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", params.c)));
    }

    let mut dictionary: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in examples {
        for key in ex.keys() {
            dictionary.entry(key.as_str()).or_insert(0);
        }
    }
    for (i, slot) in dictionary.values_mut().enumerate() {
        *slot = i;
    }
    let n_features = dictionary.len();
    let rows: Vec<Vec<(usize, f64)>> = examples
        .iter()
        .map(|ex| {
            ex.entries()
                .iter()
                .map(|(k, v)| (dictionary[k.as_str()], *v))
                .collect()
        })
        .collect();
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let b = params.bias_feature;
    let c = params.c;
    let qd: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>() + b * b)
        .collect();

    let mut w = vec![0.0f64; n_features];
    let mut w_bias = 0.0f64;
    let mut alpha = vec![0.0f64; rows.len()];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trace = SvmTrace::default();

    for _ in 0..params.max_iter {
        order.shuffle(&mut rng);
        let mut max_violation = 0.0f64;
        for &i in &order {
            let row = &rows[i];
            let margin: f64 = row.iter().map(|&(j, v)| w[j] * v).sum::<f64>() + w_bias * b;
            let g = y[i] * margin - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = if qd[i] > 0.0 {
                    (old - g / qd[i]).clamp(0.0, c)
                } else {
                    c
                };
                if !(0.0..=c).contains(&alpha[i]) {
                    trace.box_violations += 1;
                }
                let d = (alpha[i] - old) * y[i];
                for &(j, v) in row {
                    w[j] += d * v;
                }
                w_bias += d * b;
            }
        }
        trace.epochs += 1;
        let norm_sq: f64 = w.iter().map(|x| x * x).sum::<f64>() + w_bias * w_bias;
        trace
            .dual_objective
            .push(alpha.iter().sum::<f64>() - 0.5 * norm_sq);
        trace.final_violation = max_violation;
        if max_violation < params.tolerance {
            break;
        }
    }
    trace.alphas = alpha;

    let weights = dictionary
        .into_iter()
        .map(|(k, i)| (k.to_string(), w[i]))
        .collect();
    Ok((
        LinearSvmModel {
            weights,
            bias: w_bias * b,
        },
        trace,
    ))
}

impl LinearSvmModel {
    pub fn new(weights: BTreeMap<String, f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weight(&self, feature: &str) -> Option<f64> {
        self.weights.get(feature).copied()
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// wᵀx + b; ids unknown to the model are ignored.
    pub fn score(&self, vec: &SparseVector<String>) -> f64 {
        vec.entries()
            .iter()
            .filter_map(|(k, v)| self.weights.get(k).map(|w| w * v))
            .sum::<f64>()
            + self.bias
    }

    /// Primal objective ½‖w‖² + C Σ max(0, 1 − y·score), bias included in
    /// the regularizer.
    pub fn primal_objective(
        &self,
        examples: &[SparseVector<String>],
        labels: &[Label],
        params: &SvmParams,
    ) -> f64 {
        let w_bias = if params.bias_feature != 0.0 {
            self.bias / params.bias_feature
        } else {
            0.0
        };
        let reg = 0.5 * (self.weights.values().map(|w| w * w).sum::<f64>() + w_bias * w_bias);
        let loss: f64 = examples
            .iter()
            .zip(labels)
            .map(|(x, l)| (1.0 - l.sign() * self.score(x)).max(0.0))
            .sum();
        reg + params.c * loss
    }

    /// `#bias<TAB>b`, then `feature_id<TAB>weight` in id order.
    pub fn to_text(&self) -> String {
        let mut out = format!("#bias\t{}\n", self.bias);
        for (k, w) in &self.weights {
            out.push_str(&format!("{k}\t{w}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut bias = None;
        let mut weights = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('\t').ok_or_else(|| {
                Error::format("svm model", format!("line {}: expected key<TAB>weight", i + 1))
            })?;
            let value: f64 = value.parse().map_err(|_| {
                Error::format("svm model", format!("line {}: bad weight `{value}`", i + 1))
            })?;
            if key == "#bias" {
                bias = Some(value);
            } else {
                weights.insert(key.to_string(), value);
            }
        }
        let bias = bias.ok_or_else(|| Error::format("svm model", "missing #bias line"))?;
        Ok(Self { weights, bias })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Score and label; ND iff score > 0.
pub fn predict_svm(model: &LinearSvmModel, vec: &SparseVector<String>) -> (f64, Label) {
    let score = model.score(vec);
    let label = if score > 0.0 {
        Label::NewDocument
    } else {
        Label::SameDocument
    };
    (score, label)
}
