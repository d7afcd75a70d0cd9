//! Browser bindings for a few pipeline primitives.

use wasm_bindgen::prelude::*;

use pss_core::corpus::{generate_synthetic_streams, split_streams, SyntheticStreamParams};
use pss_core::imaging::{binarize, otsu_threshold, resize_bilinear, to_grayscale, PAGE_SIDE};
use pss_core::pipeline::{evaluate_streams, segment_stream, SvmPredictor};
use pss_core::svm::{train_svm, FeatureSpec, StreamFeatures, SvmParams};
use pss_core::textproc::{build_vocabulary, Language};
use pss_core::topics::{cosine_distance, hellinger};

fn js(e: pss_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Result of binarizing one page image.
#[wasm_bindgen]
pub struct BinarizedPage {
    threshold: u8,
    rgba: Vec<u8>,
    ink: usize,
}

#[wasm_bindgen]
impl BinarizedPage {
    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> u8 {
        self.threshold
    }

    /// 224×224 RGBA pixels, ink drawn black.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ink(&self) -> usize {
        self.ink
    }
}

/// Grayscale, resize to 224×224 and OTSU-binarize canvas RGBA pixels.
#[wasm_bindgen]
pub fn binarize_page(width: usize, height: usize, rgba: &[u8]) -> Result<BinarizedPage, JsError> {
    let rgb: Vec<u8> = rgba
        .chunks_exact(4)
        .flat_map(|px| [px[0], px[1], px[2]])
        .collect();
    let gray = to_grayscale(width, height, &rgb).map_err(js)?;
    let resized = resize_bilinear(&gray, PAGE_SIDE, PAGE_SIDE).map_err(js)?;
    let threshold = otsu_threshold(&resized);
    let page = binarize(&resized, threshold).map_err(js)?;
    let rgba = page
        .values()
        .flat_map(|v| {
            let c = if v == 1 { 0 } else { 255 };
            [c, c, c, 255]
        })
        .collect();
    Ok(BinarizedPage {
        threshold,
        rgba,
        ink: page.ink_count(),
    })
}

/// `[hellinger, cosine]` between two nonnegative weight lists, each
/// normalized to sum 1 first.
#[wasm_bindgen]
pub fn topic_distances(p: &[f64], q: &[f64]) -> Result<Vec<f64>, JsError> {
    let norm = |v: &[f64]| -> Result<Vec<f64>, JsError> {
        let s: f64 = v.iter().sum();
        if v.iter().any(|x| *x < 0.0 || !x.is_finite()) || s <= 0.0 {
            return Err(JsError::new("weights must be nonnegative with a positive sum"));
        }
        Ok(v.iter().map(|x| x / s).collect())
    };
    let (p, q) = (norm(p)?, norm(q)?);
    Ok(vec![hellinger(&p, &q).map_err(js)?, cosine_distance(&p, &q).map_err(js)?])
}

/// Generates `streams` synthetic streams, trains the unigram SVM on 80% of
/// them and segments the rest. Returns the segmentation CSV followed by a
/// `# accuracy=… kappa=…` line.
#[wasm_bindgen]
pub fn segment_synthetic(streams: usize, pages: usize, seed: u64) -> Result<String, JsError> {
    let params = SyntheticStreamParams {
        n_streams: streams,
        pages_per_stream: pages,
        seed,
        ..SyntheticStreamParams::default()
    };
    let all = generate_synthetic_streams(&params).map_err(js)?;
    let split = split_streams(&all, 0.8, seed).map_err(js)?;
    let texts: Vec<&str> = split
        .train
        .iter()
        .flat_map(|s| s.pages().iter().map(|p| p.text.as_str()))
        .collect();
    let vocab = build_vocabulary(&texts, 3, Language::None).map_err(js)?;
    let spec = FeatureSpec::stages()[0];
    let mut examples = Vec::new();
    let mut labels = Vec::new();
    for s in &split.train {
        examples.extend(StreamFeatures::compute(s, &vocab, None).assemble_all(&spec).map_err(js)?);
        labels.extend(s.labels().unwrap_or_default());
    }
    let (model, _) = train_svm(&examples, &labels, &SvmParams::default()).map_err(js)?;
    let predictor = SvmPredictor {
        model: &model,
        spec,
        vocab: &vocab,
        topics: None,
    };
    let mut csv = String::from("stream_id,doc_id,first_page,last_page\n");
    let mut predictions = Vec::new();
    for s in &split.test {
        let seg = segment_stream(s, &predictor).map_err(js)?;
        csv.push_str(&seg.csv_rows());
        predictions.push(seg.labels());
    }
    let report = evaluate_streams(&split.test, &predictions).map_err(js)?;
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
    csv.push_str(&format!(
        "# accuracy={} kappa={}\n",
        fmt(report.all_pages.accuracy),
        fmt(report.all_pages.kappa)
    ));
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_of_the_reference_pair() {
        let d = topic_distances(&[1.0, 1.0], &[3.0, 0.0]).unwrap();
        assert!((d[0] - 0.54120).abs() < 1e-5);
        assert!((d[1] - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn binarizes_a_two_tone_canvas() {
        let (w, h) = (40, 30);
        let rgba: Vec<u8> = (0..w * h)
            .flat_map(|i| if i % w < 10 { [20, 20, 20, 255] } else { [230, 230, 230, 255] })
            .collect();
        let page = binarize_page(w, h, &rgba).unwrap();
        assert_eq!(page.rgba().len(), 224 * 224 * 4);
        assert!(page.ink() > 0 && page.ink() < 224 * 224 / 2);
    }

    #[test]
    fn synthetic_segmentation_reports_metrics() {
        let csv = segment_synthetic(5, 20, 3).unwrap();
        assert!(csv.starts_with("stream_id,doc_id,first_page,last_page\n"));
        assert!(csv.trim_end().lines().last().unwrap().starts_with("# accuracy="));
    }
}
