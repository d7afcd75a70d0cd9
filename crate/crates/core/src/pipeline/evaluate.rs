use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::corpus::{Label, PageStream};
use crate::error::{Error, Result};

/// Confusion counts with ND as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_labels(predictions: &[Label], gold: &[Label]) -> Result<Self> {
        if predictions.len() != gold.len() {
            return Err(Error::DimensionMismatch(predictions.len(), gold.len()));
        }
        let mut c = Confusion::default();
        for (p, g) in predictions.iter().zip(gold) {
            match (p.is_new(), g.is_new()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.tp + self.tn) as f64 / n as f64)
    }

    /// Cohen's κ, computed from integers as (n·agree − M)/(n² − M) where M
    /// is the sum of marginal products. `None` when p_e = 1 or n = 0.
    pub fn kappa(&self) -> Option<f64> {
        let n = self.total() as i128;
        let agree = (self.tp + self.tn) as i128;
        let pred_nd = (self.tp + self.fp) as i128;
        let gold_nd = (self.tp + self.fn_) as i128;
        let marginal = pred_nd * gold_nd + (n - pred_nd) * (n - gold_nd);
        let denom = n * n - marginal;
        if n == 0 || denom == 0 {
            return None;
        }
        Some((n * agree - marginal) as f64 / denom as f64)
    }

    /// Shares of FP and FN among all errors; `None` without errors.
    pub fn error_shares(&self) -> Option<(f64, f64)> {
        let errors = self.fp + self.fn_;
        (errors > 0).then(|| {
            (
                self.fp as f64 / errors as f64,
                self.fn_ as f64 / errors as f64,
            )
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub kappa: Option<f64>,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion) -> Self {
        Self {
            confusion,
            accuracy: confusion.accuracy(),
            kappa: confusion.kappa(),
        }
    }
}

/// Per-page metrics over equal-length label sequences.
pub fn evaluate(predictions: &[Label], gold: &[Label]) -> Result<Metrics> {
    Ok(Metrics::from_confusion(Confusion::from_labels(
        predictions,
        gold,
    )?))
}

/// Documents of one stream as inclusive page ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationResult {
    pub stream_id: String,
    pub documents: Vec<RangeInclusive<usize>>,
}

impl SegmentationResult {
    /// Page 0 always opens a document; every later ND opens another.
    pub fn from_predictions(stream_id: &str, predictions: &[Label]) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::Stream {
                stream_id: stream_id.to_string(),
                message: "cannot segment an empty stream".into(),
            });
        }
        let mut starts: Vec<usize> = vec![0];
        starts.extend(
            predictions
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, l)| l.is_new())
                .map(|(i, _)| i),
        );
        let mut documents = Vec::with_capacity(starts.len());
        for (k, &s) in starts.iter().enumerate() {
            let end = starts.get(k + 1).map_or(predictions.len(), |&n| n) - 1;
            documents.push(s..=end);
        }
        Ok(Self {
            stream_id: stream_id.to_string(),
            documents,
        })
    }

    /// Per-page labels implied by the segmentation.
    pub fn labels(&self) -> Vec<Label> {
        let mut out = Vec::new();
        for doc in &self.documents {
            for i in doc.clone() {
                out.push(if i == *doc.start() {
                    Label::NewDocument
                } else {
                    Label::SameDocument
                });
            }
        }
        out
    }

    /// `stream_id,doc_id,first_page,last_page` rows without a header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (i, d) in self.documents.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", self.stream_id, i, d.start(), d.end());
        }
        out
    }
}

/// Headline metrics over all pages plus the variant that leaves out every
/// stream's first page.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub all_pages: Metrics,
    pub excluding_first: Metrics,
    pub segmentations: Vec<SegmentationResult>,
}

impl EvaluationReport {
    pub fn fp_fn_shares(&self) -> Option<(f64, f64)> {
        self.all_pages.confusion.error_shares()
    }
}

/// Segments every stream from raw page predictions (page 0 forced ND) and
/// scores the segmentation against the gold labels.
pub fn evaluate_streams(
    streams: &[PageStream],
    predictions: &[Vec<Label>],
) -> Result<EvaluationReport> {
    if streams.len() != predictions.len() {
        return Err(Error::DimensionMismatch(streams.len(), predictions.len()));
    }
    let mut all = Confusion::default();
    let mut rest = Confusion::default();
    let mut segmentations = Vec::with_capacity(streams.len());
    for (stream, pred) in streams.iter().zip(predictions) {
        let gold = stream.labels().ok_or_else(|| Error::Stream {
            stream_id: stream.id().to_string(),
            message: "evaluation requires gold labels".into(),
        })?;
        if pred.len() != gold.len() {
            return Err(Error::DimensionMismatch(gold.len(), pred.len()));
        }
        let seg = SegmentationResult::from_predictions(stream.id(), pred)?;
        let forced = seg.labels();
        all.add(&Confusion::from_labels(&forced, &gold)?);
        rest.add(&Confusion::from_labels(&forced[1..], &gold[1..])?);
        segmentations.push(seg);
    }
    Ok(EvaluationReport {
        all_pages: Metrics::from_confusion(all),
        excluding_first: Metrics::from_confusion(rest),
        segmentations,
    })
}
