//! OCR text normalization and unigram count features.
//!
//! Every token goes through tokenize → stem → mask digits, in that order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sorted sparse vector with unique keys.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector<K> {
    entries: Vec<(K, f64)>,
}

impl<K> Default for SparseVector<K> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<K: Ord + Clone> SparseVector<K> {
    /// Sums values of repeated keys.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (K, f64)>) -> Self {
        let mut map: BTreeMap<K, f64> = BTreeMap::new();
        for (k, v) in pairs {
            *map.entry(k).or_insert(0.0) += v;
        }
        Self {
            entries: map.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(K, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &K) -> Option<f64> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Language {
    English,
    German,
    #[default]
    None,
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "english" | "en" => Ok(Language::English),
            "german" | "de" => Ok(Language::German),
            "none" => Ok(Language::None),
            other => Err(Error::InvalidParameter(format!("unknown language `{other}`"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::English => "english",
            Language::German => "german",
            Language::None => "none",
        })
    }
}

/// Lowercased maximal runs of Unicode letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn mask_digits(token: &str) -> String {
    token
        .chars()
        .map(|c| if c.is_ascii_digit() { '#' } else { c })
        .collect()
}

pub fn stem(token: &str, language: Language) -> String {
    match language {
        Language::English => porter::stem(token),
        Language::German => german_stem(token),
        Language::None => token.to_string(),
    }
}

/// Light German stemmer: fold umlauts (ä→a, ö→o, ü→u, ß→ss), then strip the
/// first matching suffix of `-en, -er, -e, -n, -s` when at least three
/// characters remain.
pub fn german_stem(token: &str) -> String {
    let mut folded = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            'ä' => folded.push('a'),
            'ö' => folded.push('o'),
            'ü' => folded.push('u'),
            'ß' => folded.push_str("ss"),
            other => folded.push(other),
        }
    }
    for suffix in ["en", "er", "e", "n", "s"] {
        if let Some(stem) = folded.strip_suffix(suffix) {
            if stem.chars().count() >= 3 {
                return stem.to_string();
            }
            break;
        }
    }
    folded
}

mod porter {
    //! The original Porter (1980) suffix-stripping algorithm.

    pub fn stem(word: &str) -> String {
        let mut w: Vec<char> = word.chars().collect();
        step1a(&mut w);
        step1b(&mut w);
        step1c(&mut w);
        step2(&mut w);
        step3(&mut w);
        step4(&mut w);
        step5(&mut w);
        w.into_iter().collect()
    }

    fn is_consonant(w: &[char], i: usize) -> bool {
        match w[i] {
            'a' | 'e' | 'i' | 'o' | 'u' => false,
            'y' => i == 0 || !is_consonant(w, i - 1),
            _ => true,
        }
    }

    /// Number of VC sequences in `w`.
    fn measure(w: &[char]) -> usize {
        let mut m = 0;
        let mut i = 0;
        while i < w.len() && is_consonant(w, i) {
            i += 1;
        }
        loop {
            while i < w.len() && !is_consonant(w, i) {
                i += 1;
            }
            if i >= w.len() {
                return m;
            }
            while i < w.len() && is_consonant(w, i) {
                i += 1;
            }
            m += 1;
        }
    }

    fn has_vowel(w: &[char]) -> bool {
        (0..w.len()).any(|i| !is_consonant(w, i))
    }

    fn double_consonant(w: &[char]) -> bool {
        let n = w.len();
        n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1)
    }

    /// consonant-vowel-consonant ending, last consonant not w, x or y.
    fn cvc(w: &[char]) -> bool {
        let n = w.len();
        n >= 3
            && is_consonant(w, n - 3)
            && !is_consonant(w, n - 2)
            && is_consonant(w, n - 1)
            && !matches!(w[n - 1], 'w' | 'x' | 'y')
    }

    fn ends_with(w: &[char], suffix: &str) -> bool {
        let s: Vec<char> = suffix.chars().collect();
        w.len() >= s.len() && w[w.len() - s.len()..] == s[..]
    }

    fn stem_len(w: &[char], suffix: &str) -> usize {
        w.len() - suffix.chars().count()
    }

    fn replace(w: &mut Vec<char>, suffix: &str, with: &str) {
        let keep = stem_len(w, suffix);
        w.truncate(keep);
        w.extend(with.chars());
    }

    /// First rule whose suffix matches decides; its condition on the
    /// remaining stem gates the replacement.
    fn apply_rules(w: &mut Vec<char>, rules: &[(&str, &str)], cond: impl Fn(&[char]) -> bool) {
        for (suffix, with) in rules {
            if ends_with(w, suffix) {
                let keep = stem_len(w, suffix);
                if cond(&w[..keep]) {
                    replace(w, suffix, with);
                }
                return;
            }
        }
    }

    fn step1a(w: &mut Vec<char>) {
        if ends_with(w, "sses") {
            replace(w, "sses", "ss");
        } else if ends_with(w, "ies") {
            replace(w, "ies", "i");
        } else if ends_with(w, "ss") {
        } else if ends_with(w, "s") {
            w.pop();
        }
    }

    fn step1b(w: &mut Vec<char>) {
        if ends_with(w, "eed") {
            if measure(&w[..stem_len(w, "eed")]) > 0 {
                w.pop();
            }
            return;
        }
        let removed = if ends_with(w, "ed") && has_vowel(&w[..stem_len(w, "ed")]) {
            replace(w, "ed", "");
            true
        } else if ends_with(w, "ing") && has_vowel(&w[..stem_len(w, "ing")]) {
            replace(w, "ing", "");
            true
        } else {
            false
        };
        if !removed {
            return;
        }
        if ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz") {
            w.push('e');
        } else if double_consonant(w) && !matches!(w[w.len() - 1], 'l' | 's' | 'z') {
            w.pop();
        } else if measure(w) == 1 && cvc(w) {
            w.push('e');
        }
    }

    fn step1c(w: &mut [char]) {
        if ends_with(w, "y") && has_vowel(&w[..w.len() - 1]) {
            let n = w.len();
            w[n - 1] = 'i';
        }
    }

    fn step2(w: &mut Vec<char>) {
        const RULES: [(&str, &str); 20] = [
            ("ational", "ate"),
            ("tional", "tion"),
            ("enci", "ence"),
            ("anci", "ance"),
            ("izer", "ize"),
            ("abli", "able"),
            ("alli", "al"),
            ("entli", "ent"),
            ("eli", "e"),
            ("ousli", "ous"),
            ("ization", "ize"),
            ("ation", "ate"),
            ("ator", "ate"),
            ("alism", "al"),
            ("iveness", "ive"),
            ("fulness", "ful"),
            ("ousness", "ous"),
            ("aliti", "al"),
            ("iviti", "ive"),
            ("biliti", "ble"),
        ];
        apply_rules(w, &RULES, |s| measure(s) > 0);
    }

    fn step3(w: &mut Vec<char>) {
        const RULES: [(&str, &str); 7] = [
            ("icate", "ic"),
            ("ative", ""),
            ("alize", "al"),
            ("iciti", "ic"),
            ("ical", "ic"),
            ("ful", ""),
            ("ness", ""),
        ];
        apply_rules(w, &RULES, |s| measure(s) > 0);
    }

    fn step4(w: &mut Vec<char>) {
        const SUFFIXES: [&str; 19] = [
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent",
            "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
        ];
        for suffix in SUFFIXES {
            if ends_with(w, suffix) {
                let keep = stem_len(w, suffix);
                let stem = &w[..keep];
                let ok = measure(stem) > 1
                    && (suffix != "ion" || matches!(stem.last(), Some('s') | Some('t')));
                if ok {
                    w.truncate(keep);
                }
                return;
            }
        }
    }

    fn step5(w: &mut Vec<char>) {
        if ends_with(w, "e") {
            let stem = &w[..w.len() - 1];
            let m = measure(stem);
            if m > 1 || (m == 1 && !cvc(stem)) {
                w.pop();
            }
        }
        if measure(w) > 1 && double_consonant(w) && w.last() == Some(&'l') {
            w.pop();
        }
    }
}

/// tokenize → stem → mask_digits.
pub fn process(text: &str, language: Language) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|t| mask_digits(&stem(&t, language)))
        .collect()
}

/// Frequency-pruned term dictionary with dense ids in lexicographic term
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    frequencies: Vec<u64>,
    index: BTreeMap<String, u32>,
    min_count: u64,
    language: Language,
}

impl Vocabulary {
    fn from_counts(counts: BTreeMap<String, u64>, min_count: u64, language: Language) -> Self {
        let mut terms = Vec::new();
        let mut frequencies = Vec::new();
        let mut index = BTreeMap::new();
        for (term, freq) in counts {
            if freq >= min_count {
                index.insert(term.clone(), terms.len() as u32);
                terms.push(term);
                frequencies.push(freq);
            }
        }
        Self {
            terms,
            frequencies,
            index,
            min_count,
            language,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn frequency(&self, id: u32) -> u64 {
        self.frequencies[id as usize]
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Processed in-vocabulary term ids of a page, in text order.
    pub fn ids_of_text(&self, text: &str) -> Vec<u32> {
        process(text, self.language)
            .iter()
            .filter_map(|t| self.id(t))
            .collect()
    }

    /// `term<TAB>id<TAB>frequency` lines, preceded by a `#` header line with
    /// the pruning threshold and language. Masked terms may also start with
    /// `#`, so only the first line is treated as a header.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#min_count={}\tlanguage={}\n", self.min_count, self.language);
        for (id, (term, freq)) in self.terms.iter().zip(&self.frequencies).enumerate() {
            out.push_str(&format!("{term}\t{id}\t{freq}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| Error::format("vocabulary", format!("line {line}: {m}"));
        let mut min_count = 1;
        let mut language = Language::None;
        let mut counts = BTreeMap::new();
        let mut expected_id = 0u32;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#').filter(|_| lineno == 1) {
                for field in header.split('\t') {
                    match field.split_once('=') {
                        Some(("min_count", v)) => {
                            min_count = v.parse().map_err(|_| bad(lineno, "bad min_count"))?
                        }
                        Some(("language", v)) => language = v.parse()?,
                        _ => return Err(bad(lineno, "unknown header field")),
                    }
                }
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(term), Some(id), Some(freq), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(lineno, "expected term<TAB>id<TAB>frequency"));
            };
            let id: u32 = id.parse().map_err(|_| bad(lineno, "bad id"))?;
            if id != expected_id {
                return Err(bad(lineno, "ids must be dense and ascending"));
            }
            expected_id += 1;
            let freq: u64 = freq.parse().map_err(|_| bad(lineno, "bad frequency"))?;
            counts.insert(term.to_string(), freq);
        }
        let vocab = Self::from_counts(counts, 0, language);
        if vocab.len() != expected_id as usize {
            return Err(Error::format("vocabulary", "terms must be unique and sorted"));
        }
        Ok(Self { min_count, ..vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn build_vocabulary<S: AsRef<str>>(
    pages: &[S],
    min_count: u64,
    language: Language,
) -> Result<Vocabulary> {
    if pages.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for page in pages {
        for token in process(page.as_ref(), language) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    Ok(Vocabulary::from_counts(counts, min_count, language))
}

/// Raw in-vocabulary counts keyed by term id; out-of-vocabulary terms are
/// dropped.
pub fn count_vector(text: &str, vocab: &Vocabulary) -> SparseVector<u32> {
    SparseVector::from_pairs(vocab.ids_of_text(text).into_iter().map(|id| (id, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Mit freundlichen Grüßen,"),
            vec!["mit", "freundlichen", "grüßen"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Invoice No. 2010-B45"),
            vec!["invoice", "no", "2010", "b45"]
        );
    }

    #[test]
    fn digit_masking() {
        assert_eq!(mask_digits("2010"), "####");
        assert_eq!(mask_digits("b45x"), "b##x");
        assert_eq!(mask_digits("alpha"), "alpha");
    }

    #[test]
    fn stemmers() {
        assert_eq!(stem("running", Language::English), "run");
        assert_eq!(stem("berichten", Language::German), "bericht");
        assert_eq!(stem("x", Language::None), "x");
    }

    #[test]
    fn german_stripper_vectors() {
        for (word, expected) in [
            ("berichten", "bericht"),
            ("grüßen", "gruss"),
            ("grüße", "gruss"),
            ("akten", "akt"),
            ("lieber", "lieb"),
            ("seite", "seit"),
            ("briefs", "brief"),
            ("haben", "hab"),
            ("tagen", "tag"),
            ("den", "den"),
            ("ein", "ein"),
            ("bündel", "bundel"),
            ("dann", "dan"),
        ] {
            assert_eq!(german_stem(word), expected, "{word}");
        }
    }

    #[test]
    fn processing_order_masks_after_stemming() {
        assert_eq!(process("Invoices 2010", Language::English), vec!["invoic", "####"]);
    }

    #[test]
    fn vocabulary_threshold() {
        let pages = ["foo bar bar", "bar foo baz baz baz"];
        let v = build_vocabulary(&pages, 3, Language::None).unwrap();
        assert_eq!(v.terms(), &["bar", "baz"]);
        let all = build_vocabulary(&pages, 1, Language::None).unwrap();
        assert_eq!(all.terms(), &["bar", "baz", "foo"]);
        assert_eq!(all.frequency(all.id("foo").unwrap()), 2);
        assert!(build_vocabulary::<&str>(&[], 1, Language::None).is_err());
    }

    #[test]
    fn count_vector_cases() {
        let vocab = build_vocabulary(&["a b"], 1, Language::None).unwrap();
        let v = count_vector("a a b", &vocab);
        assert_eq!(v.get(&vocab.id("a").unwrap()), Some(2.0));
        assert_eq!(v.get(&vocab.id("b").unwrap()), Some(1.0));
        assert!(count_vector("zzz qqq", &vocab).is_empty());
        assert!(count_vector("", &vocab).is_empty());
    }

    #[test]
    fn vocabulary_tsv_roundtrip() {
        let vocab = build_vocabulary(&["Die Akten der Berichte 1987", "akten"], 1, Language::German)
            .unwrap();
        let tsv = vocab.to_tsv();
        assert!(tsv.lines().nth(1).unwrap().split('\t').count() == 3);
        assert_eq!(Vocabulary::from_tsv(&tsv).unwrap(), vocab);
        assert!(Vocabulary::from_tsv("a\t1\t3\n").is_err());
    }

    const WORDS: &[&str] = &["alpha", "beta", "gamma", "delta", "2019", "x7", "Über", "running"];

    proptest! {
        #[test]
        fn aggregation_reproduces_frequencies(
            docs in proptest::collection::vec(proptest::collection::vec(0usize..WORDS.len(), 0..20), 1..12),
            min_count in 1u64..4,
        ) {
            let pages: Vec<String> = docs
                .iter()
                .map(|d| d.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "))
                .collect();
            let vocab = build_vocabulary(&pages, min_count, Language::English).unwrap();
            let mut totals = vec![0.0; vocab.len()];
            for page in &pages {
                let v = count_vector(page, &vocab);
                let tokens = process(page, Language::English);
                prop_assert!(v.sum() <= tokens.len() as f64);
                let in_vocab = tokens.iter().filter(|t| vocab.id(t).is_some()).count();
                prop_assert_eq!(v.sum(), in_vocab as f64);
                prop_assert_eq!(&v, &count_vector(page, &vocab));
                for &(id, c) in v.entries() {
                    totals[id as usize] += c;
                }
            }
            for id in 0..vocab.len() {
                prop_assert_eq!(totals[id], vocab.frequency(id as u32) as f64);
                prop_assert!(vocab.frequency(id as u32) >= min_count);
            }
        }
    }
}
