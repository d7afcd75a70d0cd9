use pss_core::textproc::{process, stem, Language};

#[test]
fn porter_matches_reference_vocabulary() {
    let fixture = include_str!("data/porter_reference.tsv");
    let mut checked = 0;
    for line in fixture.lines().filter(|l| !l.is_empty()) {
        let (word, expected) = line.split_once('\t').expect("word<TAB>stem");
        assert_eq!(stem(word, Language::English), expected, "stem of {word}");
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn english_pipeline_stems_then_masks() {
    assert_eq!(
        process("Running invoices: 2019 totals", Language::English),
        vec!["run", "invoic", "####", "total"]
    );
    assert_eq!(process("Berichten 12a", Language::German), vec!["bericht", "##a"]);
}
