//! LDA over pages-as-documents, fitted by collapsed Gibbs sampling, plus the
//! topic-difference distances between consecutive pages.

use std::fs;
use std::ops::Deref;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::PageStream;
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, page_seed};
use crate::textproc::Vocabulary;

const MODEL_MAGIC: &[u8; 8] = b"PSSLDA01";

#[derive(Clone, Debug, PartialEq)]
pub struct LdaParams {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub fold_in_sweeps: usize,
    pub seed: u64,
}

impl LdaParams {
    /// α = 50/K, β = 0.01, 1000 training sweeps, 50 fold-in sweeps.
    pub fn with_topics(n_topics: usize, seed: u64) -> Self {
        Self {
            n_topics,
            alpha: 50.0 / n_topics as f64,
            beta: 0.01,
            iterations: 1000,
            fold_in_sweeps: 50,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_topics < 2 {
            return Err(Error::InvalidParameter(format!(
                "LDA needs at least 2 topics, got {}",
                self.n_topics
            )));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite())
        {
            return Err(Error::InvalidParameter(
                "LDA priors must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Point on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "topic proportions must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "topic proportions sum to {sum}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ThetaVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Fitted topic model. The per-document tables cover the training pages;
/// a model loaded from disk carries only the topic-word counts.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    params: LdaParams,
    vocab_size: usize,
    /// K×V, row-major by topic.
    topic_word: Vec<u32>,
    topic_totals: Vec<u32>,
    documents: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    doc_topic: Vec<Vec<u32>>,
    rng: ChaCha8Rng,
}

/// Fit with `params.iterations` full sweeps.
pub fn fit_lda(docs: &[Vec<u32>], vocab_size: usize, params: &LdaParams) -> Result<TopicModel> {
    let mut model = TopicModel::initialize(docs, vocab_size, params)?;
    for _ in 0..params.iterations {
        model.sweep();
    }
    Ok(model)
}

impl TopicModel {
    /// Random initial assignments, no sweeps yet.
    pub fn initialize(docs: &[Vec<u32>], vocab_size: usize, params: &LdaParams) -> Result<Self> {
        params.validate()?;
        let n_tokens: usize = docs.iter().map(Vec::len).sum();
        if n_tokens == 0 {
            return Err(Error::InvalidParameter(
                "cannot fit a topic model on an empty corpus".into(),
            ));
        }
        if let Some(&w) = docs.iter().flatten().find(|&&w| w as usize >= vocab_size) {
            return Err(Error::InvalidParameter(format!(
                "token id {w} outside vocabulary of {vocab_size}"
            )));
        }
        let k = params.n_topics;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut topic_word = vec![0u32; k * vocab_size];
        let mut topic_totals = vec![0u32; k];
        let mut doc_topic = Vec::with_capacity(docs.len());
        let mut assignments = Vec::with_capacity(docs.len());
        for doc in docs {
            let mut counts = vec![0u32; k];
            let mut z = Vec::with_capacity(doc.len());
            for &w in doc {
                let t = rng.gen_range(0..k);
                z.push(t as u32);
                counts[t] += 1;
                topic_word[t * vocab_size + w as usize] += 1;
                topic_totals[t] += 1;
            }
            doc_topic.push(counts);
            assignments.push(z);
        }
        Ok(Self {
            params: params.clone(),
            vocab_size,
            topic_word,
            topic_totals,
            documents: docs.to_vec(),
            assignments,
            doc_topic,
            rng,
        })
    }

    /// One collapsed Gibbs sweep over every token:
    /// p(z=k | ·) ∝ (n_dk + α)(n_kw + β) / (n_k + Vβ), current token excluded.
    pub fn sweep(&mut self) {
        let k = self.params.n_topics;
        let v = self.vocab_size;
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        let v_beta = v as f64 * beta;
        let mut weights = vec![0.0f64; k];
        for d in 0..self.documents.len() {
            for i in 0..self.documents[d].len() {
                let w = self.documents[d][i] as usize;
                let old = self.assignments[d][i] as usize;
                self.doc_topic[d][old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_totals[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (self.doc_topic[d][t] as f64 + alpha)
                        * (self.topic_word[t * v + w] as f64 + beta)
                        / (self.topic_totals[t] as f64 + v_beta);
                    weights[t] = total;
                }
                let new = sample_cumulative(&weights, self.rng.gen::<f64>() * total);

                self.assignments[d][i] = new as u32;
                self.doc_topic[d][new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }

    pub fn n_topics(&self) -> usize {
        self.params.n_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &LdaParams {
        &self.params
    }

    pub fn topic_word_count(&self, topic: usize, word: u32) -> u32 {
        self.topic_word[topic * self.vocab_size + word as usize]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_totals
    }

    pub fn n_documents(&self) -> usize {
        self.doc_topic.len()
    }

    pub fn assignments(&self, doc: usize) -> &[u32] {
        &self.assignments[doc]
    }

    pub fn doc_topic_counts(&self, doc: usize) -> &[u32] {
        &self.doc_topic[doc]
    }

    /// θ_k = (n_dk + α) / (N_d + Kα) for a training document.
    pub fn theta_of_document(&self, doc: usize) -> ThetaVector {
        theta_from_counts(&self.doc_topic[doc], self.params.alpha)
    }

    /// Fold-in inference for an unseen page against frozen topic-word
    /// counts. The model is not modified. Ids outside the vocabulary are
    /// ignored; an empty page yields the uniform prior.
    pub fn infer_theta(&self, tokens: &[u32], seed: u64) -> ThetaVector {
        let k = self.params.n_topics;
        let v = self.vocab_size;
        let tokens: Vec<usize> = tokens
            .iter()
            .map(|&w| w as usize)
            .filter(|&w| w < v)
            .collect();
        if tokens.is_empty() {
            return ThetaVector::uniform(k);
        }
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        let v_beta = v as f64 * beta;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = tokens
            .iter()
            .map(|_| {
                let t = rng.gen_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        // Frozen part of the conditional.
        let word_term = |t: usize, w: usize| {
            (self.topic_word[t * v + w] as f64 + beta) / (self.topic_totals[t] as f64 + v_beta)
        };
        let mut weights = vec![0.0f64; k];
        for _ in 0..self.params.fold_in_sweeps {
            for (i, &w) in tokens.iter().enumerate() {
                counts[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (counts[t] as f64 + alpha) * word_term(t, w);
                    weights[t] = total;
                }
                let new = sample_cumulative(&weights, rng.gen::<f64>() * total);
                z[i] = new;
                counts[new] += 1;
            }
        }
        theta_from_counts(&counts, alpha)
    }

    /// `PSSLDA01`, then little-endian K (u32), α (f64), β (f64), V (u32),
    /// seed (u64), training sweeps (u32), fold-in sweeps (u32), followed by
    /// the K×V topic-word table as u32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + self.topic_word.len() * 4);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(self.params.n_topics as u32).to_le_bytes());
        out.extend_from_slice(&self.params.alpha.to_le_bytes());
        out.extend_from_slice(&self.params.beta.to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&self.params.seed.to_le_bytes());
        out.extend_from_slice(&(self.params.iterations as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.fold_in_sweeps as u32).to_le_bytes());
        for c in &self.topic_word {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = crate::binio::Reader::new(bytes, "PSSLDA01");
        r.expect_magic(MODEL_MAGIC)?;
        let n_topics = r.u32()? as usize;
        let alpha = r.f64()?;
        let beta = r.f64()?;
        let vocab_size = r.u32()? as usize;
        let seed = r.u64()?;
        let iterations = r.u32()? as usize;
        let fold_in_sweeps = r.u32()? as usize;
        let params = LdaParams {
            n_topics,
            alpha,
            beta,
            iterations,
            fold_in_sweeps,
            seed,
        };
        params.validate()?;
        let mut topic_word = Vec::with_capacity(n_topics * vocab_size);
        for _ in 0..n_topics * vocab_size {
            topic_word.push(r.u32()?);
        }
        r.finish()?;
        let mut topic_totals = vec![0u32; n_topics];
        for t in 0..n_topics {
            topic_totals[t] = topic_word[t * vocab_size..(t + 1) * vocab_size].iter().sum();
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params,
            vocab_size,
            topic_word,
            topic_totals,
            documents: Vec::new(),
            assignments: Vec::new(),
            doc_topic: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Per-page θ for feature assembly. Every page, training or not, is folded
/// in with a seed derived from the model seed, its stream id and its index,
/// so results do not depend on whether the model was reloaded from disk.
#[derive(Clone, Debug)]
pub struct TopicFeaturizer {
    model: TopicModel,
    seed: u64,
}

impl TopicFeaturizer {
    pub fn new(model: TopicModel) -> Self {
        let seed = derive_seed(model.params().seed, "fold-in");
        Self { model, seed }
    }

    pub fn model(&self) -> &TopicModel {
        &self.model
    }

    pub fn n_topics(&self) -> usize {
        self.model.n_topics()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta(&self, stream_id: &str, page_index: usize, tokens: &[u32]) -> ThetaVector {
        self.model
            .infer_theta(tokens, page_seed(self.seed, stream_id, page_index))
    }

    pub fn stream_thetas(&self, stream: &PageStream, vocab: &Vocabulary) -> Vec<ThetaVector> {
        stream
            .pages()
            .iter()
            .map(|p| self.theta(stream.id(), p.page_index, &vocab.ids_of_text(&p.text)))
            .collect()
    }
}

fn sample_cumulative(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

fn theta_from_counts(counts: &[u32], alpha: f64) -> ThetaVector {
    let n: u32 = counts.iter().sum();
    let denom = n as f64 + counts.len() as f64 * alpha;
    ThetaVector(counts.iter().map(|&c| (c as f64 + alpha) / denom).collect())
}

/// H(p, q) = (1/√2)·√Σ(√p_k − √q_k)², in [0, 1] on the simplex.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(p.len(), q.len()));
    }
    let sum: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok((sum.sqrt() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// 1 − p·q / (‖p‖‖q‖).
pub fn cosine_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(p.len(), q.len()));
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nq = q.iter().map(|b| b * b).sum::<f64>().sqrt();
    if np == 0.0 || nq == 0.0 {
        return Err(Error::InvalidParameter(
            "cosine distance is undefined for a zero vector".into(),
        ));
    }
    Ok((1.0 - dot / (np * nq)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: usize, iterations: usize) -> LdaParams {
        LdaParams {
            n_topics: k,
            alpha: 0.5,
            beta: 0.01,
            iterations,
            fold_in_sweeps: 50,
            seed: 3,
        }
    }

    fn check_consistency(m: &TopicModel) {
        let n_tokens: usize = m.documents.iter().map(Vec::len).sum();
        assert_eq!(m.topic_word.iter().map(|&c| c as usize).sum::<usize>(), n_tokens);
        assert_eq!(m.topic_totals.iter().map(|&c| c as usize).sum::<usize>(), n_tokens);
        let mut tw = vec![0u32; m.topic_word.len()];
        for (d, doc) in m.documents.iter().enumerate() {
            let mut dt = vec![0u32; m.n_topics()];
            for (&w, &z) in doc.iter().zip(&m.assignments[d]) {
                dt[z as usize] += 1;
                tw[z as usize * m.vocab_size + w as usize] += 1;
            }
            assert_eq!(dt, m.doc_topic[d]);
        }
        assert_eq!(tw, m.topic_word);
    }

    #[test]
    fn single_token_corpus() {
        let m = fit_lda(&[vec![0]], 1, &params(2, 5)).unwrap();
        assert!(m.assignments(0)[0] < 2);
        check_consistency(&m);
    }

    #[test]
    fn errors() {
        assert!(fit_lda(&[], 3, &params(2, 1)).is_err());
        assert!(fit_lda(&[vec![], vec![]], 3, &params(2, 1)).is_err());
        assert!(fit_lda(&[vec![0]], 3, &params(1, 1)).is_err());
        assert!(fit_lda(&[vec![5]], 3, &params(2, 1)).is_err());
    }

    #[test]
    fn counts_are_conserved_across_sweeps() {
        let docs: Vec<Vec<u32>> = (0..20)
            .map(|d| (0..15).map(|i| ((d * 7 + i * 3) % 11) as u32).collect())
            .collect();
        let mut m = TopicModel::initialize(&docs, 11, &params(4, 0)).unwrap();
        for _ in 0..10 {
            m.sweep();
            check_consistency(&m);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let docs: Vec<Vec<u32>> = (0..10).map(|d| vec![d % 5, (d + 1) % 5, 2]).collect();
        let a = fit_lda(&docs, 5, &params(3, 20)).unwrap();
        let b = fit_lda(&docs, 5, &params(3, 20)).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn theta_formula() {
        let mut m = TopicModel::initialize(&[vec![0; 10]], 1, &params(2, 0)).unwrap();
        m.doc_topic[0] = vec![10, 0];
        let theta = m.theta_of_document(0);
        assert!((theta[0] - 10.5 / 11.0).abs() < 1e-15);
        assert!((theta[1] - 0.5 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn fold_in_leaves_model_untouched() {
        let docs: Vec<Vec<u32>> = (0..10).map(|d| vec![d % 4, (d + 1) % 4]).collect();
        let m = fit_lda(&docs, 4, &params(2, 10)).unwrap();
        let before = m.clone();
        let theta = m.infer_theta(&[0, 1, 1, 3], 9);
        assert_eq!(m, before);
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(m.infer_theta(&[], 1), ThetaVector::uniform(2));
        assert_eq!(m.infer_theta(&[0, 1, 1, 3], 9), theta);
    }

    #[test]
    fn model_bytes_roundtrip() {
        let docs: Vec<Vec<u32>> = (0..6).map(|d| vec![d % 3, 2]).collect();
        let m = fit_lda(&docs, 3, &params(2, 5)).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], b"PSSLDA01");
        let loaded = TopicModel::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.topic_word, m.topic_word);
        assert_eq!(loaded.topic_totals, m.topic_totals);
        assert_eq!(loaded.infer_theta(&[0, 2], 4), m.infer_theta(&[0, 2], 4));
        assert!(TopicModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn distance_points() {
        assert_eq!(hellinger(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((hellinger(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((hellinger(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 0.54120).abs() < 1e-5);
        assert!(cosine_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap().abs() < 1e-12);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 0.29289).abs() < 1e-5);
        assert!(hellinger(&[1.0], &[0.5, 0.5]).is_err());
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn distance_properties((p, q) in (2usize..8).prop_flat_map(|k| (simplex(k), simplex(k)))) {
            for d in [hellinger, cosine_distance] {
                let pq = d(&p, &q).unwrap();
                let qp = d(&q, &p).unwrap();
                prop_assert!((pq - qp).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&pq));
                prop_assert!(d(&p, &p).unwrap().abs() < 1e-12);
            }
        }

        #[test]
        fn fold_in_yields_simplex(tokens in proptest::collection::vec(0u32..6, 0..30), seed in any::<u64>()) {
            let docs: Vec<Vec<u32>> = (0..8).map(|d| vec![d % 6, (d * 5) % 6, 1]).collect();
            let m = fit_lda(&docs, 6, &LdaParams { fold_in_sweeps: 5, ..params(3, 5) }).unwrap();
            let theta = m.infer_theta(&tokens, seed);
            prop_assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(theta.iter().all(|&t| t > 0.0));
            for d in 0..m.n_documents() {
                prop_assert!((m.theta_of_document(d).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
