//! Page streams, manifest ingestion, stream-level splitting and the
//! synthetic stream generator used for desk-scale experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{self, Binary224, PAGE_SIDE};

/// Per-page class. `NewDocument` (ND) is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NewDocument,
    SameDocument,
}

impl Label {
    pub fn is_new(self) -> bool {
        self == Label::NewDocument
    }

    /// ND = 1, SD = 0.
    pub fn target(self) -> f64 {
        if self.is_new() {
            1.0
        } else {
            0.0
        }
    }

    /// ND = +1, SD = -1.
    pub fn sign(self) -> f64 {
        if self.is_new() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NewDocument => "ND",
            Label::SameDocument => "SD",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ND" | "nd" => Ok(Label::NewDocument),
            "SD" | "sd" => Ok(Label::SameDocument),
            other => Err(Error::InvalidParameter(format!(
                "unknown label `{other}`, expected ND or SD"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageRecord {
    pub stream_id: String,
    pub page_index: usize,
    pub image: Binary224,
    pub text: String,
    pub label: Option<Label>,
}

/// An ordered, nonempty stream of pages (one scanned binder).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageStream {
    stream_id: String,
    pages: Vec<PageRecord>,
}

impl PageStream {
    /// Validates contiguous indices, all-or-nothing labels and an ND first
    /// page.
    pub fn new(stream_id: impl Into<String>, pages: Vec<PageRecord>) -> Result<Self> {
        let stream_id = stream_id.into();
        let fail = |message: String| Error::Stream {
            stream_id: stream_id.clone(),
            message,
        };
        if pages.is_empty() {
            return Err(fail("stream has no pages".into()));
        }
        for (expected, page) in pages.iter().enumerate() {
            if page.stream_id != stream_id {
                return Err(fail(format!(
                    "page {} belongs to stream `{}`",
                    page.page_index, page.stream_id
                )));
            }
            if page.page_index != expected {
                return Err(fail(format!(
                    "page indices are not contiguous: expected {expected}, found {}",
                    page.page_index
                )));
            }
        }
        let labeled = pages.iter().filter(|p| p.label.is_some()).count();
        if labeled != 0 && labeled != pages.len() {
            return Err(fail(format!(
                "partially labeled stream ({labeled} of {} pages)",
                pages.len()
            )));
        }
        if let Some(label) = pages[0].label {
            if label != Label::NewDocument {
                return Err(fail("first page of a labeled stream must be ND".into()));
            }
        }
        Ok(Self { stream_id, pages })
    }

    pub fn id(&self) -> &str {
        &self.stream_id
    }

    pub fn pages(&self) -> &[PageRecord] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_labeled(&self) -> bool {
        self.pages[0].label.is_some()
    }

    /// Gold labels; `None` for an unlabeled stream.
    pub fn labels(&self) -> Option<Vec<Label>> {
        self.pages.iter().map(|p| p.label).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<PageStream>,
    pub test: Vec<PageStream>,
}

/// Column order of the manifest header.
pub const MANIFEST_COLUMNS: [&str; 5] = ["stream_id", "page_index", "image", "text", "label"];

struct ManifestRow {
    stream_id: String,
    page_index: String,
    image: String,
    text: String,
    label: String,
}

/// Read a manifest CSV (`stream_id,page_index,image,text,label`). Relative
/// paths resolve against the manifest's directory. Rows may appear in any
/// order; pages are sorted by `(stream_id, page_index)`.
pub fn load_streams(manifest_path: &Path) -> Result<Vec<PageStream>> {
    let base = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let manifest_err = |row: usize, message: String| Error::Manifest {
        path: manifest_path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(manifest_path)
        .map_err(|e| manifest_err(0, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| manifest_err(0, e.to_string()))?
        .clone();
    let header_names: Vec<&str> = headers.iter().collect();
    if header_names != MANIFEST_COLUMNS {
        return Err(manifest_err(
            1,
            format!("expected header {:?}, got {header_names:?}", MANIFEST_COLUMNS),
        ));
    }

    let mut grouped: BTreeMap<String, BTreeMap<usize, (usize, PageRecord)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        // Header is row 1.
        let row = i + 2;
        let record = record.map_err(|e| manifest_err(row, e.to_string()))?;
        if record.len() != 5 {
            return Err(manifest_err(row, format!("expected 5 fields, got {}", record.len())));
        }
        let parsed = ManifestRow {
            stream_id: record[0].to_string(),
            page_index: record[1].to_string(),
            image: record[2].to_string(),
            text: record[3].to_string(),
            label: record[4].to_string(),
        };
        if parsed.stream_id.is_empty() {
            return Err(manifest_err(row, "empty stream_id".into()));
        }
        let page_index: usize = parsed.page_index.parse().map_err(|_| {
            manifest_err(
                row,
                format!(
                    "stream {}: page_index `{}` is not a nonnegative integer",
                    parsed.stream_id, parsed.page_index
                ),
            )
        })?;
        let label = if parsed.label.is_empty() {
            None
        } else {
            Some(parsed.label.parse::<Label>().map_err(|e| {
                manifest_err(row, format!("stream {}: {e}", parsed.stream_id))
            })?)
        };
        let image_path = resolve(&base, &parsed.image);
        let image = imaging::load_page(&image_path).map_err(|e| {
            manifest_err(row, format!("stream {}: {e}", parsed.stream_id))
        })?;
        let text_path = resolve(&base, &parsed.text);
        let text = fs::read_to_string(&text_path).map_err(|e| {
            manifest_err(
                row,
                format!("stream {}: cannot read {}: {e}", parsed.stream_id, text_path.display()),
            )
        })?;
        let page = PageRecord {
            stream_id: parsed.stream_id.clone(),
            page_index,
            image,
            text,
            label,
        };
        let pages = grouped.entry(parsed.stream_id.clone()).or_default();
        if let Some((first_row, _)) = pages.get(&page_index) {
            return Err(manifest_err(
                row,
                format!(
                    "stream {}: duplicate page_index {page_index} (first seen on row {first_row})",
                    parsed.stream_id
                ),
            ));
        }
        pages.insert(page_index, (row, page));
    }

    let mut streams = Vec::with_capacity(grouped.len());
    for (stream_id, pages) in grouped {
        for (expected, (&index, (row, _))) in pages.iter().enumerate() {
            if index != expected {
                return Err(manifest_err(
                    *row,
                    format!(
                        "stream {stream_id}: page indices are not contiguous (expected {expected}, found {index})"
                    ),
                ));
            }
        }
        let first_row = pages.values().map(|(r, _)| *r).min().unwrap_or(0);
        let pages: Vec<PageRecord> = pages.into_values().map(|(_, p)| p).collect();
        streams.push(
            PageStream::new(stream_id, pages).map_err(|e| manifest_err(first_row, e.to_string()))?,
        );
    }
    Ok(streams)
}

fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Write streams as a manifest directory: `manifest.csv`, one PNG and one
/// text file per page.
pub fn write_streams(streams: &[PageStream], dir: &Path) -> Result<PathBuf> {
    let images = dir.join("images");
    let texts = dir.join("texts");
    for d in [dir, &images, &texts] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let manifest = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest).map_err(|e| Error::Manifest {
        path: manifest.clone(),
        row: 0,
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| Error::Manifest {
        path: manifest.clone(),
        row: 0,
        message: e.to_string(),
    };
    writer.write_record(MANIFEST_COLUMNS).map_err(csv_err)?;
    for stream in streams {
        for page in stream.pages() {
            let stem = format!("{}_{:04}", stream.id(), page.page_index);
            let image_rel = format!("images/{stem}.png");
            let text_rel = format!("texts/{stem}.txt");
            imaging::save_page(&page.image, &dir.join(&image_rel))?;
            let text_path = dir.join(&text_rel);
            fs::write(&text_path, &page.text).map_err(|e| Error::io(&text_path, e))?;
            let label = page.label.map(Label::as_str).unwrap_or("");
            writer
                .write_record([
                    stream.id(),
                    &page.page_index.to_string(),
                    &image_rel,
                    &text_rel,
                    label,
                ])
                .map_err(csv_err)?;
        }
    }
    writer.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Seeded stream-level split: `floor(train_fraction * n)` streams go to
/// train. Both sides keep the input order.
pub fn split_streams(
    streams: &[PageStream],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if streams.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 streams to split, got {}",
            streams.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = streams.len();
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParameter(format!(
            "train_fraction {train_fraction} leaves an empty side for {n} streams"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = streams
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok(DatasetSplit {
        train: train.into_iter().map(|(s, _)| s).collect(),
        test: test.into_iter().map(|(s, _)| s).collect(),
    })
}

/// Knobs of the synthetic generator.
///
/// Class signal is split across modalities: an ND page carries header
/// vocabulary with probability `text_signal_rate` and a letterhead band
/// with probability `image_signal_rate`, independently. SD pages carry a
/// spurious header or band with probability `spurious_rate`. Consecutive
/// documents always switch latent topic.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStreamParams {
    pub n_streams: usize,
    pub pages_per_stream: usize,
    pub doc_length_mean: f64,
    pub header_vocab_size: usize,
    pub body_vocab_size: usize,
    pub n_latent_topics: usize,
    pub pixel_noise_rate: f64,
    pub seed: u64,
    pub tokens_per_page: (usize, usize),
    pub header_token_fraction: f64,
    pub text_signal_rate: f64,
    pub image_signal_rate: f64,
    pub spurious_rate: f64,
}

impl Default for SyntheticStreamParams {
    fn default() -> Self {
        Self {
            n_streams: 25,
            pages_per_stream: 40,
            doc_length_mean: 4.0,
            header_vocab_size: 400,
            body_vocab_size: 600,
            n_latent_topics: 6,
            pixel_noise_rate: 0.02,
            seed: 1,
            tokens_per_page: (30, 50),
            header_token_fraction: 0.4,
            text_signal_rate: 0.8,
            image_signal_rate: 0.75,
            spurious_rate: 0.04,
        }
    }
}

impl SyntheticStreamParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_streams == 0 || self.pages_per_stream == 0 {
            return bad("n_streams and pages_per_stream must be positive");
        }
        if self.header_vocab_size == 0 || self.body_vocab_size == 0 || self.n_latent_topics == 0 {
            return bad("vocabulary sizes and n_latent_topics must be positive");
        }
        if self.body_vocab_size < self.n_latent_topics {
            return bad("body_vocab_size must be at least n_latent_topics");
        }
        if !(self.doc_length_mean >= 1.0 && self.doc_length_mean.is_finite()) {
            return bad("doc_length_mean must be a finite value >= 1");
        }
        let (lo, hi) = self.tokens_per_page;
        if lo == 0 || hi < lo {
            return bad("tokens_per_page must be a nonempty positive range");
        }
        for (name, v) in [
            ("pixel_noise_rate", self.pixel_noise_rate),
            ("header_token_fraction", self.header_token_fraction),
            ("text_signal_rate", self.text_signal_rate),
            ("image_signal_rate", self.image_signal_rate),
            ("spurious_rate", self.spurious_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.header_token_fraction < 0.3 {
            return bad("header_token_fraction must be at least 0.3");
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 24] = [
    "ba", "ke", "lo", "mu", "ri", "sa", "te", "vo", "da", "fi", "go", "hu", "ja", "ne", "po", "zu",
    "ca", "di", "mo", "ru", "si", "to", "wa", "le",
];

/// Deterministic pseudo-word; a trailing consonant keeps stemmers from
/// folding distinct words together.
fn pseudo_word(prefix: char, mut index: usize) -> String {
    let mut word = String::new();
    word.push(prefix);
    loop {
        word.push_str(SYLLABLES[index % SYLLABLES.len()]);
        index /= SYLLABLES.len();
        if index == 0 {
            break;
        }
    }
    word.push('k');
    word
}

pub fn header_word(index: usize) -> String {
    pseudo_word('h', index)
}

pub fn body_word(index: usize) -> String {
    pseudo_word('b', index)
}

fn geometric_length(rng: &mut impl Rng, mean: f64) -> usize {
    let p = 1.0 / mean;
    let mut len = 1;
    while rng.gen::<f64>() >= p {
        len += 1;
    }
    len
}

/// Generate labeled streams. Equal params produce identical output.
pub fn generate_synthetic_streams(params: &SyntheticStreamParams) -> Result<Vec<PageStream>> {
    params.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let topic_block = params.body_vocab_size / params.n_latent_topics;
    let mut streams = Vec::with_capacity(params.n_streams);
    for s in 0..params.n_streams {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let stream_id = format!("syn{s:04}");
        let mut pages = Vec::with_capacity(params.pages_per_stream);
        let mut topic = rng.gen_range(0..params.n_latent_topics);
        let mut remaining = 0usize;
        for page_index in 0..params.pages_per_stream {
            let is_new = remaining == 0;
            if is_new {
                remaining = geometric_length(&mut rng, params.doc_length_mean);
                if page_index > 0 && params.n_latent_topics > 1 {
                    let shift = rng.gen_range(1..params.n_latent_topics);
                    topic = (topic + shift) % params.n_latent_topics;
                }
            }
            remaining -= 1;
            let is_last_of_doc = remaining == 0;

            let header_text = if is_new {
                rng.gen_bool(params.text_signal_rate)
            } else {
                rng.gen_bool(params.spurious_rate)
            };
            let letterhead = if is_new {
                rng.gen_bool(params.image_signal_rate)
            } else {
                rng.gen_bool(params.spurious_rate)
            };

            let n_tokens = rng.gen_range(params.tokens_per_page.0..=params.tokens_per_page.1);
            let n_tokens = if is_last_of_doc && !is_new {
                (n_tokens * 2 / 3).max(1)
            } else {
                n_tokens
            };
            let n_header = if header_text {
                ((n_tokens as f64) * params.header_token_fraction).ceil() as usize
            } else {
                0
            };
            let mut tokens = Vec::with_capacity(n_tokens + 1);
            for _ in 0..n_header {
                tokens.push(header_word(rng.gen_range(0..params.header_vocab_size)));
            }
            if header_text {
                tokens.push(format!("{}", rng.gen_range(1950..2011)));
            }
            for _ in n_header..n_tokens {
                let word = if rng.gen_bool(0.85) {
                    topic * topic_block + rng.gen_range(0..topic_block)
                } else {
                    rng.gen_range(0..params.body_vocab_size)
                };
                tokens.push(body_word(word));
            }
            let text = lay_out_text(&tokens);
            let image = render_page(&mut rng, letterhead, tokens.len(), params.pixel_noise_rate);
            pages.push(PageRecord {
                stream_id: stream_id.clone(),
                page_index,
                image,
                text,
                label: Some(if is_new {
                    Label::NewDocument
                } else {
                    Label::SameDocument
                }),
            });
        }
        streams.push(PageStream::new(stream_id, pages)?);
    }
    Ok(streams)
}

fn lay_out_text(tokens: &[String]) -> String {
    let mut text = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(if i % 10 == 0 { '\n' } else { ' ' });
        }
        text.push_str(t);
    }
    text.push('\n');
    text
}

const MARGIN: usize = 16;
const BODY_TOP: usize = 56;
const LINE_PITCH: usize = 8;

fn render_page(rng: &mut impl Rng, letterhead: bool, n_tokens: usize, noise: f64) -> Binary224 {
    let mut page = Binary224::blank();
    if letterhead {
        // Logo block and a double rule under it.
        let logo_w = rng.gen_range(36..52);
        let logo_left = MARGIN + rng.gen_range(0..8);
        for row in 10..34 {
            for col in logo_left..logo_left + logo_w {
                page.set(row, col, true);
            }
        }
        for row in [40, 41, 44] {
            for col in MARGIN..PAGE_SIDE - MARGIN {
                page.set(row, col, true);
            }
        }
    }
    // One text line per ~6 tokens, words as ink runs.
    let lines = n_tokens.div_ceil(6).min((PAGE_SIDE - BODY_TOP - MARGIN) / LINE_PITCH);
    for line in 0..lines {
        let top = BODY_TOP + line * LINE_PITCH;
        let mut col = MARGIN + rng.gen_range(0..4);
        let right = PAGE_SIDE - MARGIN - rng.gen_range(0..24);
        while col + 4 < right {
            let word = rng.gen_range(4..18).min(right - col);
            for row in top..top + 3 {
                for c in col..col + word {
                    page.set(row, c, true);
                }
            }
            col += word + rng.gen_range(3..6);
        }
    }
    if noise > 0.0 {
        for row in 0..PAGE_SIDE {
            for col in 0..PAGE_SIDE {
                if rng.gen_bool(noise) {
                    let v = page.get(row, col);
                    page.set(row, col, !v);
                }
            }
        }
    }
    page
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn page(stream: &str, index: usize, label: Option<Label>) -> PageRecord {
        PageRecord {
            stream_id: stream.into(),
            page_index: index,
            image: Binary224::blank(),
            text: String::new(),
            label,
        }
    }

    fn small(n: usize) -> Vec<PageStream> {
        (0..n)
            .map(|i| {
                let id = format!("s{i:03}");
                PageStream::new(id.clone(), vec![page(&id, 0, None)]).unwrap()
            })
            .collect()
    }

    #[test]
    fn stream_invariants() {
        let nd = Some(Label::NewDocument);
        let sd = Some(Label::SameDocument);
        assert!(PageStream::new("a", vec![page("a", 0, nd), page("a", 1, sd)]).is_ok());
        assert!(PageStream::new("a", vec![]).is_err());
        assert!(PageStream::new("a", vec![page("a", 0, nd), page("a", 2, sd)]).is_err());
        assert!(PageStream::new("a", vec![page("a", 0, sd)]).is_err());
        assert!(PageStream::new("a", vec![page("a", 0, nd), page("a", 1, None)]).is_err());
        assert!(PageStream::new("a", vec![page("a", 0, None), page("a", 1, None)]).is_ok());
    }

    #[test]
    fn split_counts() {
        let streams = small(100);
        let split = split_streams(&streams, 0.8, 7).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (80, 20));
        let split = split_streams(&small(2), 0.5, 3).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (1, 1));
        assert!(split_streams(&small(1), 0.5, 3).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let streams = small(30);
        let a = split_streams(&streams, 0.7, 11).unwrap();
        let b = split_streams(&streams, 0.7, 11).unwrap();
        let ids = |v: &[PageStream]| v.iter().map(|s| s.id().to_string()).collect::<Vec<_>>();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.test), ids(&b.test));
    }

    proptest! {
        #[test]
        fn split_is_disjoint_and_complete(n in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let streams = small(n);
            if let Ok(split) = split_streams(&streams, frac, seed) {
                let mut ids: Vec<_> = split.train.iter().chain(&split.test).map(|s| s.id().to_string()).collect();
                prop_assert_eq!(split.train.len(), (frac * n as f64).floor() as usize);
                ids.sort();
                let before = ids.len();
                ids.dedup();
                prop_assert_eq!(before, ids.len());
                prop_assert_eq!(ids.len(), n);
            }
        }
    }

    #[test]
    fn unit_mean_gives_all_new_documents() {
        let params = SyntheticStreamParams {
            n_streams: 3,
            pages_per_stream: 12,
            doc_length_mean: 1.0,
            pixel_noise_rate: 0.0,
            ..Default::default()
        };
        for stream in generate_synthetic_streams(&params).unwrap() {
            assert!(stream.pages().iter().all(|p| p.label == Some(Label::NewDocument)));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let params = SyntheticStreamParams {
            n_streams: 2,
            pages_per_stream: 8,
            ..Default::default()
        };
        let a = generate_synthetic_streams(&params).unwrap();
        let b = generate_synthetic_streams(&params).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_streams(&SyntheticStreamParams { seed: 2, ..params }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_document_length_matches_mean() {
        let params = SyntheticStreamParams {
            n_streams: 10,
            pages_per_stream: 50,
            doc_length_mean: 3.0,
            pixel_noise_rate: 0.0,
            ..Default::default()
        };
        let streams = generate_synthetic_streams(&params).unwrap();
        let pages: usize = streams.iter().map(|s| s.len()).sum();
        let docs = streams
            .iter()
            .flat_map(|s| s.pages())
            .filter(|p| p.label == Some(Label::NewDocument))
            .count();
        let mean = pages as f64 / docs as f64;
        assert!((mean - 3.0).abs() <= 0.5, "mean document length {mean}");
    }

    #[test]
    fn first_pages_carry_header_share() {
        let params = SyntheticStreamParams {
            text_signal_rate: 1.0,
            image_signal_rate: 1.0,
            spurious_rate: 0.0,
            pixel_noise_rate: 0.0,
            n_streams: 2,
            ..Default::default()
        };
        for stream in generate_synthetic_streams(&params).unwrap() {
            for p in stream.pages() {
                let tokens: Vec<&str> = p.text.split_whitespace().collect();
                let header = tokens.iter().filter(|t| t.starts_with('h')).count();
                let band = (10..34).any(|r| p.image.get(r, MARGIN + 10));
                if p.label == Some(Label::NewDocument) {
                    assert!(header as f64 >= 0.3 * tokens.len() as f64);
                    assert!(band);
                } else {
                    assert_eq!(header, 0);
                    assert!(!band);
                }
            }
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let base = SyntheticStreamParams::default();
        assert!(SyntheticStreamParams { n_streams: 0, ..base.clone() }.validate().is_err());
        assert!(SyntheticStreamParams { pixel_noise_rate: 1.5, ..base.clone() }.validate().is_err());
        assert!(SyntheticStreamParams { doc_length_mean: 0.5, ..base }.validate().is_err());
    }
}
